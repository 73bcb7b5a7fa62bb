use super::RawDataset;
use crate::error::{invalid, Result};
use crate::rng::RngStream;
use rand::Rng;
use rand_distr::StandardNormal;

/// `n` i.i.d. draws from N(mu, sigma2), with `theta = (mu, sigma2)`.
pub fn simulate_gaussian(theta: &[f64], n: usize, stream: &RngStream) -> Result<RawDataset> {
    crate::error::check_len(theta.len(), 2)?;
    let (mu, var) = (theta[0], theta[1]);
    if !(var > 0.0) {
        return Err(invalid(format!("variance must be positive, got {var}")));
    }
    if n == 0 {
        return Err(invalid("gaussian simulation needs n >= 1"));
    }
    let sd = var.sqrt();
    let mut rng = stream.rng();
    Ok(RawDataset::Gaussian(
        (0..n)
            .map(|_| mu + sd * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    ))
}
