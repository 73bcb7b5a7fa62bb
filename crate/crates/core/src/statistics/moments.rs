use super::SummaryVector;
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::simulators::{ModelKind, TurinData};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Log temporal moments `m_i = log sum_k t_k^i |y(t_k)|^2 dt`, `i = 0, 1, 2`,
/// on the grid `t_k = k dt`, `dt = 1 / (n_s delta_f)`.
pub fn temporal_moments(y: &[Complex64], delta_f: f64, n_s: usize) -> Result<[f64; 3]> {
    crate::error::check_len(y.len(), n_s)?;
    if !(delta_f > 0.0) {
        return Err(invalid("frequency spacing must be positive"));
    }
    let dt = 1.0 / (n_s as f64 * delta_f);
    let mut sums = [0.0f64; 3];
    for (k, v) in y.iter().enumerate() {
        let t = k as f64 * dt;
        let p = v.norm_sqr() * dt;
        sums[0] += p;
        sums[1] += t * p;
        sums[2] += t * t * p;
    }
    if sums.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::ZeroEnergy);
    }
    Ok(sums.map(f64::ln))
}

/// Per-realization `(m0, m1, m2)`.
pub fn turin_moment_table(data: &TurinData) -> Result<Vec<[f64; 3]>> {
    if data.rows.is_empty() {
        return Err(invalid("empty dataset"));
    }
    let transform = crate::simulators::TimeTransform::new(data.bandwidth, data.n_s)?;
    let delta_f = data.delta_f();
    data.rows
        .iter()
        .map(|row| temporal_moments(&transform.apply(row)?, delta_f, data.n_s))
        .collect()
}

/// Means then unbiased variances of the three moments across realizations.
pub fn turin_statistics(moments: &[[f64; 3]]) -> Result<SummaryVector> {
    if moments.len() < 2 {
        return Err(invalid("need at least two realizations for variances"));
    }
    let n = moments.len() as f64;
    let mut values = vec![0.0; 6];
    for i in 0..3 {
        let mean = moments.iter().map(|m| m[i]).sum::<f64>() / n;
        let var = moments.iter().map(|m| (m[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        values[i] = mean;
        values[3 + i] = var;
    }
    SummaryVector::new(ModelKind::Turin, values)
}

/// Adds i.i.d. N(0, zeta) noise to per-realization `m0` values.
pub fn inject_misspecification(m0: &mut [f64], zeta: f64, stream: &RngStream) -> Result<()> {
    if !(zeta >= 0.0) {
        return Err(invalid(format!(
            "misspecification variance must be >= 0, got {zeta}"
        )));
    }
    if zeta == 0.0 {
        return Ok(());
    }
    let sd = zeta.sqrt();
    let mut rng = stream.rng();
    m0.iter_mut()
        .for_each(|v| *v += sd * rng.sample::<f64, _>(StandardNormal));
    Ok(())
}
