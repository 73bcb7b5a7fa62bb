use super::RawDataset;
use crate::error::{invalid, Result};
use crate::rng::RngStream;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

/// Fixed overall-asymmetry constant.
pub const GANDK_C: f64 = 0.8;

/// Quantile function of the g-and-k distribution with parameters `(A, B, g, k)`.
pub fn gandk_quantile(x: f64, theta: &[f64], c: f64) -> Result<f64> {
    crate::error::check_len(theta.len(), 4)?;
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("quantile level {x} outside (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(x);
    Ok(transform(z, theta, c))
}

/// Maps a standard-normal quantile `z` through the g-and-k transformation.
///
/// `(1 - e^{-gz}) / (1 + e^{-gz})` is written as `tanh(gz / 2)`, which is the
/// same quantity without the overflow for large `|gz|`.
#[inline]
pub(crate) fn transform(z: f64, theta: &[f64], c: f64) -> f64 {
    let (a, b, g, k) = (theta[0], theta[1], theta[2], theta[3]);
    let skew = 1.0 + c * (0.5 * g * z).tanh();
    a + b * skew * (1.0 + z * z).powf(k) * z
}

/// `n` i.i.d. g-and-k draws with `c` fixed at [`GANDK_C`].
///
/// `z(U)` for `U ~ U(0,1)` is a standard normal variate, so the normal draw is
/// taken directly instead of inverting the normal CDF.
pub fn simulate_gandk(theta: &[f64], n: usize, stream: &RngStream) -> Result<RawDataset> {
    crate::error::check_len(theta.len(), 4)?;
    if n == 0 {
        return Err(invalid("g-and-k simulation needs n >= 1"));
    }
    let mut rng = stream.rng();
    let draws = (0..n)
        .map(|_| transform(rng.sample::<f64, _>(StandardNormal), theta, GANDK_C))
        .collect();
    Ok(RawDataset::GAndK(draws))
}
