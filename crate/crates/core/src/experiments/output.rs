use super::runner::{run_experiment, ExperimentResult, RunRecord};
use super::{ExperimentSpec, Method, Preset};
use crate::error::{invalid, Result};
use crate::samples::SampleMatrix;
use crate::statistics::quantile_sorted;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

fn parameter_names(preset: Preset) -> &'static [&'static str] {
    preset.scenario(0.0).model.kind().parameter_names()
}

fn runs_header(preset: Preset) -> Vec<String> {
    let mut header: Vec<String> = [
        "preset",
        "n_sim",
        "reliability",
        "delta",
        "zeta",
        "replicate",
        "method",
        "feedbacks",
        "gamma_hat",
        "optimal",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["mean", "sd", "kl"] {
        header.extend(
            parameter_names(preset)
                .iter()
                .map(|p| format!("{prefix}_{p}")),
        );
    }
    header
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn runs_row(rec: &RunRecord) -> Vec<String> {
    let q = rec.posterior_mean.len();
    let mut row = vec![
        rec.preset.name().to_string(),
        rec.n_sim.to_string(),
        opt(rec.reliability),
        opt(rec.delta),
        rec.zeta.to_string(),
        rec.replicate.to_string(),
        rec.method.name().to_string(),
        rec.feedbacks.to_string(),
        rec.gamma_hat.clone(),
        rec.optimal.to_string(),
    ];
    row.extend(rec.posterior_mean.iter().map(f64::to_string));
    row.extend(rec.posterior_sd.iter().map(f64::to_string));
    match &rec.kl_reference {
        Some(kl) => row.extend(kl.iter().map(f64::to_string)),
        None => row.extend(std::iter::repeat_n(String::new(), q)),
    }
    row
}

fn write_samples(path: &Path, names: &[&str], samples: &SampleMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for row in samples.rows() {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a `runs.csv` written by [`write_outputs`].
pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| {
            row.get(i)
                .ok_or_else(|| invalid(format!("runs.csv row has no column {i}")))
        };
        let parse_f = |i: usize| -> Result<f64> {
            field(i)?
                .parse()
                .map_err(|_| invalid(format!("bad number in column {i}")))
        };
        let parse_opt = |i: usize| -> Result<Option<f64>> {
            let s = field(i)?;
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f(i).map(Some)
            }
        };
        let parse_u = |i: usize| -> Result<usize> {
            field(i)?
                .parse()
                .map_err(|_| invalid(format!("bad count in column {i}")))
        };
        let preset: Preset = field(0)?.parse()?;
        let q = parameter_names(preset).len();
        let block =
            |start: usize| -> Result<Vec<f64>> { (start..start + q).map(parse_f).collect() };
        let kl_start = 10 + 2 * q;
        let kl_reference = if field(kl_start)?.is_empty() {
            None
        } else {
            Some(block(kl_start)?)
        };
        records.push(RunRecord {
            preset,
            n_sim: parse_u(1)?,
            reliability: parse_opt(2)?,
            delta: parse_opt(3)?,
            zeta: parse_f(4)?,
            replicate: parse_u(5)?,
            method: field(6)?.parse::<Method>()?,
            feedbacks: parse_u(7)?,
            gamma_hat: field(8)?.to_string(),
            optimal: field(9)? == "true",
            posterior_mean: block(10)?,
            posterior_sd: block(10 + q)?,
            kl_reference,
        });
    }
    Ok(records)
}

/// Summary over the replicates of one setting and method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n_sim: usize,
    pub reliability: Option<f64>,
    pub delta: Option<f64>,
    pub zeta: f64,
    pub method: Method,
    pub runs: usize,
    pub mean_feedbacks: f64,
    pub optimal_rate: f64,
    /// Per-parameter average of the posterior means.
    pub mean_posterior_mean: Vec<f64>,
    pub median_kl: Option<Vec<f64>>,
    pub iqr_kl: Option<Vec<f64>>,
}

/// Groups runs by setting and method, in order of first appearance.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let key = |r: &RunRecord| {
        (
            r.n_sim,
            r.reliability.map(f64::to_bits),
            r.delta.map(f64::to_bits),
            r.zeta.to_bits(),
            r.method,
        )
    };
    let mut keys = Vec::new();
    for r in records {
        if !keys.contains(&key(r)) {
            keys.push(key(r));
        }
    }
    keys.into_iter()
        .map(|k| {
            let group: Vec<&RunRecord> = records.iter().filter(|r| key(r) == k).collect();
            let first = group[0];
            let n = group.len() as f64;
            let q = first.posterior_mean.len();
            let kl_quantiles = |p: f64| -> Option<Vec<f64>> {
                (0..q)
                    .map(|d| {
                        let mut v: Vec<f64> = group
                            .iter()
                            .map(|r| r.kl_reference.as_ref().map(|kl| kl[d]))
                            .collect::<Option<_>>()?;
                        v.sort_by(f64::total_cmp);
                        Some(quantile_sorted(&v, p))
                    })
                    .collect()
            };
            let iqr = kl_quantiles(0.75)
                .zip(kl_quantiles(0.25))
                .map(|(hi, lo)| hi.iter().zip(&lo).map(|(h, l)| h - l).collect());
            AggregateRow {
                n_sim: first.n_sim,
                reliability: first.reliability,
                delta: first.delta,
                zeta: first.zeta,
                method: first.method,
                runs: group.len(),
                mean_feedbacks: group.iter().map(|r| r.feedbacks as f64).sum::<f64>() / n,
                optimal_rate: group.iter().filter(|r| r.optimal).count() as f64 / n,
                mean_posterior_mean: (0..q)
                    .map(|d| group.iter().map(|r| r.posterior_mean[d]).sum::<f64>() / n)
                    .collect(),
                median_kl: kl_quantiles(0.5),
                iqr_kl: iqr,
            }
        })
        .collect()
}

fn write_aggregates_csv(path: &Path, preset: Preset, rows: &[AggregateRow]) -> Result<()> {
    let names = parameter_names(preset);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "n_sim",
        "reliability",
        "delta",
        "zeta",
        "method",
        "runs",
        "mean_feedbacks",
        "optimal_rate",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["mean", "median_kl", "iqr_kl"] {
        header.extend(names.iter().map(|p| format!("{prefix}_{p}")));
    }
    w.write_record(&header)?;
    for row in rows {
        let mut out = vec![
            row.n_sim.to_string(),
            opt(row.reliability),
            opt(row.delta),
            row.zeta.to_string(),
            row.method.name().to_string(),
            row.runs.to_string(),
            row.mean_feedbacks.to_string(),
            row.optimal_rate.to_string(),
        ];
        out.extend(row.mean_posterior_mean.iter().map(f64::to_string));
        for block in [&row.median_kl, &row.iqr_kl] {
            match block {
                Some(v) => out.extend(v.iter().map(f64::to_string)),
                None => out.extend(std::iter::repeat_n(String::new(), names.len())),
            }
        }
        w.write_record(&out)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `spec` and writes into `out_dir`:
/// `spec.json`, `runs.csv`, `runs.json`, `aggregates.csv`, `aggregates.json`,
/// `reference.csv` when a reference posterior is configured, and one sample
/// file per run under `posteriors/` when sample output is enabled.
pub fn write_outputs(spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentResult> {
    let names = parameter_names(spec.preset);
    let posterior_dir = out_dir.join("posteriors");
    fs::create_dir_all(out_dir)?;
    if spec.write_samples {
        fs::create_dir_all(&posterior_dir)?;
    }
    fs::write(
        out_dir.join("spec.json"),
        serde_json::to_string_pretty(spec)?,
    )?;
    let result = run_experiment(spec, |rec, samples| {
        if spec.write_samples {
            write_samples(
                &posterior_dir.join(format!("{}.csv", rec.label())),
                names,
                samples,
            )?;
        }
        Ok(())
    })?;
    if let Some(reference) = &result.reference {
        write_samples(&out_dir.join("reference.csv"), names, reference)?;
    }
    let mut w = csv::Writer::from_path(out_dir.join("runs.csv"))?;
    w.write_record(runs_header(spec.preset))?;
    for rec in &result.records {
        w.write_record(runs_row(rec))?;
    }
    w.flush()?;
    fs::write(
        out_dir.join("runs.json"),
        serde_json::to_string_pretty(&result.records)?,
    )?;
    let aggregates = aggregate(&result.records);
    write_aggregates_csv(&out_dir.join("aggregates.csv"), spec.preset, &aggregates)?;
    fs::write(
        out_dir.join("aggregates.json"),
        serde_json::to_string_pretty(&aggregates)?,
    )?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(
        method: Method,
        replicate: usize,
        feedbacks: usize,
        kl: Option<Vec<f64>>,
    ) -> RunRecord {
        RunRecord {
            preset: Preset::GaussianSensitivity,
            n_sim: 100,
            reliability: method.queries_expert().then_some(0.95),
            delta: method.queries_expert().then_some(0.06),
            zeta: 0.0,
            replicate,
            method,
            feedbacks,
            gamma_hat: "11000".into(),
            optimal: feedbacks.is_multiple_of(2),
            posterior_mean: vec![0.1 * replicate as f64, 2.0],
            posterior_sd: vec![0.3, 1.0 / 3.0],
            kl_reference: kl,
        }
    }

    #[test]
    fn aggregates_group_and_summarize() {
        let recs: Vec<RunRecord> = (0..4)
            .map(|r| record(Method::Hitl, r, r + 1, Some(vec![r as f64, 1.0])))
            .chain((0..4).map(|r| record(Method::LinearAll, r, 0, None)))
            .collect();
        let agg = aggregate(&recs);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].runs, 4);
        assert_eq!(agg[0].mean_feedbacks, 2.5);
        assert_eq!(agg[0].optimal_rate, 0.5);
        assert_eq!(agg[0].median_kl, Some(vec![1.5, 1.0]));
        assert_eq!(agg[0].iqr_kl, Some(vec![1.5, 0.0]));
        assert_eq!(agg[1].method, Method::LinearAll);
        assert_eq!(agg[1].median_kl, None);
    }

    #[test]
    fn runs_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let recs = vec![
            record(Method::Hitl, 0, 3, Some(vec![0.25, 1e-17])),
            record(Method::RidgeAll, 1, 0, None),
        ];
        let mut w = csv::Writer::from_path(&path).unwrap();
        w.write_record(runs_header(Preset::GaussianSensitivity))
            .unwrap();
        for r in &recs {
            w.write_record(runs_row(r)).unwrap();
        }
        w.flush().unwrap();
        drop(w);
        assert_eq!(read_runs_csv(&path).unwrap(), recs);
    }
}
