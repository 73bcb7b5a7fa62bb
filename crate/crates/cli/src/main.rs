use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use hitl_abc::experiments::write_outputs;
use hitl_abc::{Preset, SessionState, SessionStore};
use hitl_abc_cli::{replay_state, router};
use std::path::PathBuf;
use std::sync::Arc;

/// Listen port for `serve`.
const PORT_VAR: &str = "HITL_ABC_PORT";
const DEFAULT_PORT: u16 = 8080;

#[derive(Parser)]
#[command(
    name = "hitl-abc",
    version,
    about = "ABC with an expert choosing the summary statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated runs of a preset with simulated experts.
    Batch {
        #[arg(long)]
        preset: Preset,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
        /// `key=value`; list-valued keys take comma-separated values.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// HTTP service for interactive sessions.
    Serve {
        #[arg(long, default_value = "sessions")]
        sessions_dir: PathBuf,
    },
    /// Recomputes a saved session from its feedback log and writes its
    /// posterior and report.
    Replay {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Batch {
            preset,
            seed,
            out_dir,
            overrides,
        } => {
            let mut spec = preset.defaults();
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            for o in &overrides {
                spec.apply_override(o)?;
            }
            let result = write_outputs(&spec, &out_dir)?;
            log::info!(
                "{} runs written to {}",
                result.records.len(),
                out_dir.display()
            );
        }
        Command::Serve { sessions_dir } => {
            let port = match std::env::var(PORT_VAR) {
                Ok(v) => v
                    .parse::<u16>()
                    .with_context(|| format!("{PORT_VAR}={v} is not a port"))?,
                Err(_) => DEFAULT_PORT,
            };
            let store = Arc::new(SessionStore::open(&sessions_dir)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
                log::info!(
                    "serving sessions from {} on port {port}",
                    sessions_dir.display()
                );
                axum::serve(listener, router(store))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
            })?;
        }
        Command::Replay { session, out_dir } => {
            let text = std::fs::read_to_string(&session)
                .with_context(|| format!("reading {}", session.display()))?;
            let state: SessionState = serde_json::from_str(&text)?;
            let mut replayed = replay_state(&state)?;
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(
                out_dir.join("report.json"),
                serde_json::to_string_pretty(&replayed.report())?,
            )?;
            match replayed.export() {
                Ok(export) => {
                    std::fs::write(out_dir.join("posterior.csv"), export.to_csv()?)?;
                    std::fs::write(
                        out_dir.join("posterior.json"),
                        serde_json::to_string_pretty(&export)?,
                    )?;
                    log::info!(
                        "gamma_hat {}; posterior written to {}",
                        export.gamma_hat,
                        out_dir.display()
                    );
                }
                Err(hitl_abc::Error::WrongStatus { actual, .. }) => {
                    log::info!("session is {actual}; wrote the report only");
                }
                Err(e) => bail!(e),
            }
        }
    }
    Ok(())
}
