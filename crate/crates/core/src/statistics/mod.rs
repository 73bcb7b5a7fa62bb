//! Candidate summary-statistic pools, MAD normalization and the
//! misspecification injector for the radio-channel model.

mod moments;

pub use moments::{
    inject_misspecification, temporal_moments, turin_moment_table, turin_statistics,
};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::simulators::{ModelKind, RawDataset};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatisticDescriptor {
    pub name: String,
    /// Data-independent noise statistic.
    pub noise: bool,
}

/// The ordered pool `s_1..s_w` of candidate statistics for one model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatisticPool {
    pub model: ModelKind,
    pub statistics: Vec<StatisticDescriptor>,
}

impl StatisticPool {
    pub fn for_model(model: ModelKind) -> Self {
        let (names, n_noise): (Vec<&str>, usize) = match model {
            ModelKind::GAndK => (
                vec![
                    "s_A", "s_B", "s_g", "s_k", "s_A*s_B", "s_A*s_g", "s_A*s_k", "s_B*s_g",
                    "s_B*s_k", "s_g*s_k", "u_1", "u_2", "u_3", "u_4", "u_5",
                ],
                5,
            ),
            ModelKind::Turin => (
                vec![
                    "mean(m0)", "mean(m1)", "mean(m2)", "var(m0)", "var(m1)", "var(m2)",
                ],
                0,
            ),
            ModelKind::Gaussian => (vec!["mean", "variance", "range", "u_1", "u_2"], 2),
        };
        let w = names.len();
        Self {
            model,
            statistics: names
                .into_iter()
                .enumerate()
                .map(|(i, n)| StatisticDescriptor {
                    name: n.to_string(),
                    noise: i >= w - n_noise,
                })
                .collect(),
        }
    }

    pub fn w(&self) -> usize {
        self.statistics.len()
    }

    pub fn name(&self, j: usize) -> &str {
        &self.statistics[j].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.statistics.iter().position(|s| s.name == name)
    }
}

/// One evaluation of a pool on a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub model: ModelKind,
    pub values: Vec<f64>,
}

impl SummaryVector {
    pub fn new(model: ModelKind, values: Vec<f64>) -> Result<Self> {
        crate::error::check_len(values.len(), StatisticPool::for_model(model).w())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateStatistic(format!(
                "statistic {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self { model, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-statistic positive scales used to normalize before distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizationScale(pub Vec<f64>);

impl NormalizationScale {
    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().zip(&self.0).map(|(v, s)| v / s).collect()
    }
}

/// Sample quantile of sorted data by linear interpolation between order
/// statistics at position `(n - 1) p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(
    data: &RawDataset,
    pool: &StatisticPool,
    stream: &RngStream,
) -> Result<SummaryVector> {
    if data.kind() != pool.model {
        return Err(invalid(format!(
            "dataset model {} does not match pool model {}",
            data.kind(),
            pool.model
        )));
    }
    if data.is_empty() {
        return Err(invalid("empty dataset"));
    }
    let mut rng = stream.rng();
    let values = match data {
        RawDataset::GAndK(y) => {
            let mut v = gandk_core(y)?.to_vec();
            let [a, b, g, k] = [v[0], v[1], v[2], v[3]];
            v.extend([a * b, a * g, a * k, b * g, b * k, g * k]);
            v.extend((0..5).map(|_| rng.random::<f64>()));
            v
        }
        RawDataset::Gaussian(y) => {
            let n = y.len() as f64;
            let mean = y.iter().sum::<f64>() / n;
            let var = if y.len() > 1 {
                y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let (lo, hi) = y
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            vec![mean, var, hi - lo, rng.random(), rng.random()]
        }
        RawDataset::Turin(d) => return turin_statistics(&turin_moment_table(d)?),
    };
    SummaryVector::new(pool.model, values)
}

/// Summarizes an observed dataset after adding N(0, `zeta`) noise to each
/// realization's `m0` (radio-channel model only; other models need `zeta = 0`).
pub fn summarize_with_misspecification(
    data: &RawDataset,
    pool: &StatisticPool,
    zeta: f64,
    stream: &RngStream,
) -> Result<SummaryVector> {
    match data {
        RawDataset::Turin(d) if pool.model == ModelKind::Turin => {
            let mut table = turin_moment_table(d)?;
            let mut m0: Vec<f64> = table.iter().map(|m| m[0]).collect();
            inject_misspecification(&mut m0, zeta, stream)?;
            for (row, v) in table.iter_mut().zip(m0) {
                row[0] = v;
            }
            turin_statistics(&table)
        }
        _ if zeta == 0.0 => summarize(data, pool, stream),
        _ => Err(invalid(
            "misspecification noise applies to the radio-channel model only",
        )),
    }
}

/// Robust location, scale, skewness and kurtosis estimates from quartiles
/// `L` and octiles `E`.
fn gandk_core(y: &[f64]) -> Result<[f64; 4]> {
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let e = |j: usize| quantile_sorted(&sorted, j as f64 / 8.0);
    let (l1, l2, l3) = (e(2), e(4), e(6));
    let s_b = l3 - l1;
    if s_b == 0.0 {
        return Err(Error::DegenerateStatistic(
            "interquartile range is zero".into(),
        ));
    }
    let s_g = (l3 + l1 - 2.0 * l2) / s_b;
    let s_k = (e(7) - e(5) + e(3) - e(1)) / s_b;
    Ok([l2, s_b, s_g, s_k])
}

/// Mean absolute deviation about the column median, per column. Zero
/// deviations are replaced by 1.
pub fn estimate_mad<R: AsRef<[f64]>>(rows: &[R]) -> Result<NormalizationScale> {
    if rows.len() < 2 {
        return Err(invalid("MAD needs at least two rows"));
    }
    let w = rows[0].as_ref().len();
    let mut column = Vec::with_capacity(rows.len());
    let scale = (0..w)
        .map(|j| {
            column.clear();
            column.extend(rows.iter().map(|r| r.as_ref()[j]));
            column.sort_by(f64::total_cmp);
            let med = quantile_sorted(&column, 0.5);
            let mad = column.iter().map(|v| (v - med).abs()).sum::<f64>() / column.len() as f64;
            if mad > 0.0 && mad.is_finite() {
                mad
            } else {
                1.0
            }
        })
        .collect();
    Ok(NormalizationScale(scale))
}
