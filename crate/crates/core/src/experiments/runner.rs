use super::{ExperimentSpec, Method, Preset, Scenario};
use crate::abc::{AbcConfig, Adjustment, InclusionVector, PosteriorEngine, SimulationCache};
use crate::design::{kl_knn, run_hitl, DesignConfig, QueryStrategy};
use crate::error::Result;
use crate::feedback::{simulated_expert, BeliefHyperparams};
use crate::rng::RngStream;
use crate::samples::SampleMatrix;
use crate::statistics::{summarize_with_misspecification, StatisticPool, SummaryVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// Outcome of one method on one replicate under one setting. Settings that
/// do not apply to a method (expert reliability and threshold for the
/// all-statistics baselines) are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub preset: Preset,
    pub n_sim: usize,
    pub reliability: Option<f64>,
    pub delta: Option<f64>,
    pub zeta: f64,
    pub replicate: usize,
    pub method: Method,
    pub feedbacks: usize,
    pub gamma_hat: String,
    pub optimal: bool,
    pub posterior_mean: Vec<f64>,
    pub posterior_sd: Vec<f64>,
    /// Per-parameter divergence from the reference posterior.
    pub kl_reference: Option<Vec<f64>>,
}

impl RunRecord {
    /// File stem for this run's posterior samples.
    pub fn label(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "na".to_string(), |v| v.to_string());
        format!(
            "{}_nsim{}_pi{}_delta{}_zeta{}_rep{}_{}",
            self.preset.name(),
            self.n_sim,
            opt(self.reliability),
            opt(self.delta),
            self.zeta,
            self.replicate,
            self.method.name()
        )
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub reference: Option<SampleMatrix>,
}

/// Simulates the observed dataset at the scenario's true parameter and
/// summarizes it, adding the scenario's misspecification noise.
pub fn observe(scenario: &Scenario, stream: &RngStream) -> Result<SummaryVector> {
    let pool = StatisticPool::for_model(scenario.model.kind());
    let data = scenario
        .model
        .simulate(&scenario.truth.0, &stream.child("data", 0))?;
    summarize_with_misspecification(&data, &pool, scenario.zeta, &stream.child("noise", 0))
}

fn column_stats(samples: &SampleMatrix) -> (Vec<f64>, Vec<f64>) {
    (0..samples.dim())
        .map(|d| (samples.column_mean(d), samples.column_variance(d).sqrt()))
        .unzip()
}

fn per_parameter_kl(samples: &SampleMatrix, reference: &SampleMatrix) -> Result<Vec<f64>> {
    (0..samples.dim())
        .map(|d| kl_knn(&samples.column(d), &reference.column(d)))
        .collect()
}

impl Preset {
    /// Whether every replicate sees the same observed dataset.
    fn fixed_observation(self) -> bool {
        self == Preset::GAndKLowSim
    }

    /// Whether replicates share one simulation cache. The radio-channel
    /// simulator is too slow for a fresh cache per replicate.
    fn shared_cache(self) -> bool {
        self == Preset::TurinMisspec
    }
}

struct Engines {
    cache: Arc<SimulationCache>,
    s_obs: SummaryVector,
    built: HashMap<&'static str, PosteriorEngine>,
}

impl Engines {
    fn get(
        &mut self,
        spec: &ExperimentSpec,
        scenario: &Scenario,
        adjustment: Adjustment,
    ) -> Result<&PosteriorEngine> {
        let key = match adjustment {
            Adjustment::None => "none",
            Adjustment::Linear => "linear",
            Adjustment::Ridge => "ridge",
        };
        if !self.built.contains_key(key) {
            let config: AbcConfig = spec.abc_config(adjustment);
            let engine = PosteriorEngine::new(
                self.cache.clone(),
                &self.s_obs,
                scenario.prior.clone(),
                config,
            )?;
            self.built.insert(key, engine);
        }
        Ok(&self.built[key])
    }
}

/// Computes the reference posterior: linear adjustment on all statistics
/// with a large cache and a small tolerance.
pub fn reference_posterior(
    spec: &ExperimentSpec,
    root: &RngStream,
) -> Result<Option<SampleMatrix>> {
    let Some(reference) = spec.reference else {
        return Ok(None);
    };
    let scenario = spec.preset.scenario(spec.zeta[0]);
    let s_obs = observe(&scenario, &root.child("observed", 0))?;
    let cache = SimulationCache::build(
        &scenario.model,
        &scenario.prior,
        reference.n_sim,
        &root.child("reference", 0),
    )?;
    let config = AbcConfig {
        epsilon: reference.epsilon,
        adjustment: Adjustment::Linear,
        n: spec.n,
        logit_transform: spec.logit_transform,
        ..AbcConfig::default()
    };
    let engine = PosteriorEngine::new(Arc::new(cache), &s_obs, scenario.prior.clone(), config)?;
    let all = InclusionVector::ones(engine.w());
    Ok(Some(
        engine
            .abc_posterior(&all, &root.child("reference-posterior", 0))?
            .samples,
    ))
}

/// Runs every combination in `spec`. `on_run` receives each record with its
/// posterior samples as soon as the run finishes.
pub fn run_experiment(
    spec: &ExperimentSpec,
    mut on_run: impl FnMut(&RunRecord, &SampleMatrix) -> Result<()>,
) -> Result<ExperimentResult> {
    spec.validate()?;
    let root = RngStream::new(spec.seed);
    let preset = spec.preset;
    let reference = reference_posterior(spec, &root)?;
    let max_n_sim = *spec.n_sim.iter().max().expect("validated non-empty");
    let base_scenario = preset.scenario(0.0);
    let mut shared: Option<SimulationCache> = None;
    let mut records = Vec::new();

    for r in 0..spec.replicates {
        let replicate = root.child("replicate", r as u64);
        let full = if preset.shared_cache() {
            if shared.is_none() {
                log::info!("{preset}: building shared cache of {max_n_sim} simulations");
                shared = Some(SimulationCache::build(
                    &base_scenario.model,
                    &base_scenario.prior,
                    max_n_sim,
                    &root.child("cache", 0),
                )?);
            }
            shared.clone().expect("just built")
        } else {
            SimulationCache::build(
                &base_scenario.model,
                &base_scenario.prior,
                max_n_sim,
                &replicate.child("cache", 0),
            )?
        };
        let observation_stream = if preset.fixed_observation() {
            root.child("observed", 0)
        } else {
            replicate.child("observed", 0)
        };
        for &n_sim in &spec.n_sim {
            let cache = Arc::new(full.prefix(n_sim)?);
            for &zeta in &spec.zeta {
                let scenario = preset.scenario(zeta);
                let mut engines = Engines {
                    cache: cache.clone(),
                    s_obs: observe(&scenario, &observation_stream)?,
                    built: HashMap::new(),
                };
                for &method in &spec.methods {
                    let mut finish = |rec: RunRecord, samples: &SampleMatrix| -> Result<()> {
                        log::info!(
                            "{} feedbacks={} gamma={}",
                            rec.label(),
                            rec.feedbacks,
                            rec.gamma_hat
                        );
                        on_run(&rec, samples)?;
                        records.push(rec);
                        Ok(())
                    };
                    let record = |reliability,
                                  delta,
                                  feedbacks,
                                  gamma: &InclusionVector,
                                  samples: &SampleMatrix|
                     -> Result<RunRecord> {
                        let (posterior_mean, posterior_sd) = column_stats(samples);
                        Ok(RunRecord {
                            preset,
                            n_sim,
                            reliability,
                            delta,
                            zeta,
                            replicate: r,
                            method,
                            feedbacks,
                            gamma_hat: gamma.bits(),
                            optimal: *gamma == scenario.relevant,
                            posterior_mean,
                            posterior_sd,
                            kl_reference: reference
                                .as_ref()
                                .map(|rf| per_parameter_kl(samples, rf))
                                .transpose()?,
                        })
                    };
                    match method {
                        Method::LinearAll | Method::RidgeAll => {
                            let adjustment = if method == Method::LinearAll {
                                Adjustment::Linear
                            } else {
                                Adjustment::Ridge
                            };
                            let engine = engines.get(spec, &scenario, adjustment)?;
                            let all = InclusionVector::ones(engine.w());
                            let samples = engine
                                .abc_posterior(&all, &replicate.child(method.name(), 0))?
                                .samples;
                            finish(record(None, None, 0, &all, &samples)?, &samples)?;
                        }
                        Method::Hitl | Method::Random => {
                            let engine = engines.get(spec, &scenario, spec.adjustment)?;
                            for &reliability in &spec.reliability {
                                for &delta in &spec.delta {
                                    let hyperparams =
                                        BeliefHyperparams::new(reliability, spec.prior_inclusion)?;
                                    let design = DesignConfig {
                                        delta,
                                        mixture_draws: spec.mixture_draws,
                                        strategy: if method == Method::Hitl {
                                            QueryStrategy::Utility
                                        } else {
                                            QueryStrategy::Random
                                        },
                                    };
                                    let mut expert = simulated_expert(
                                        scenario.relevant.clone(),
                                        spec.expert_reliability.unwrap_or(reliability),
                                        &replicate.child("expert", 0),
                                    );
                                    let out = run_hitl(
                                        engine,
                                        hyperparams,
                                        &design,
                                        &mut expert,
                                        &replicate.child(method.name(), 0),
                                    )?;
                                    let rec = record(
                                        Some(reliability),
                                        Some(delta),
                                        out.state.log.len(),
                                        &out.gamma_hat,
                                        &out.posterior.samples,
                                    )?;
                                    finish(rec, &out.posterior.samples)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ExperimentResult { records, reference })
}
