//! Turin multipath radio channel: Poisson path delays with exponentially
//! decaying circular complex Gaussian gains, observed as a sampled transfer
//! function.

use super::RawDataset;
use crate::error::{invalid, Result};
use crate::rng::RngStream;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Largest accepted Poisson mean `lambda * t_max`.
pub const MAX_POISSON_MEAN: f64 = 1e7;

/// Re-anchor interval for the phasor recurrence in [`paths_to_transfer`].
const REANCHOR: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurinSettings {
    /// Measurement bandwidth `B` in Hz.
    pub bandwidth: f64,
    /// Number of frequency points `n_s`.
    pub n_s: usize,
    /// Realizations per dataset.
    pub n_real: usize,
}

impl TurinSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(invalid("bandwidth must be positive"));
        }
        if self.n_s < 2 {
            return Err(invalid("n_s must be at least 2"));
        }
        if self.n_real == 0 {
            return Err(invalid("need at least one realization"));
        }
        Ok(())
    }

    /// Frequency spacing `B / (n_s - 1)`.
    pub fn delta_f(&self) -> f64 {
        self.bandwidth / (self.n_s - 1) as f64
    }

    /// Unambiguous delay range `1 / delta_f`.
    pub fn t_max(&self) -> f64 {
        1.0 / self.delta_f()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurinData {
    /// `n_real` rows of `n_s` transfer-function samples.
    pub rows: Vec<Vec<Complex64>>,
    pub bandwidth: f64,
    pub n_s: usize,
}

impl TurinData {
    pub fn delta_f(&self) -> f64 {
        self.bandwidth / (self.n_s - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TurinPath {
    pub delay: f64,
    pub gain: Complex64,
}

fn check_theta(theta: &[f64]) -> Result<(f64, f64, f64)> {
    crate::error::check_len(theta.len(), 3)?;
    let (g0, t, lambda) = (theta[0], theta[1], theta[2]);
    if !(g0 > 0.0 && t > 0.0 && lambda > 0.0) {
        return Err(invalid(format!(
            "Turin parameters must be positive, got G0={g0}, T={t}, lambda={lambda}"
        )));
    }
    Ok((g0, t, lambda))
}

/// Draws the multipath components of one realization on `[0, t_max)`.
pub fn draw_paths(theta: &[f64], t_max: f64, rng: &mut impl Rng) -> Result<Vec<TurinPath>> {
    let (g0, t, lambda) = check_theta(theta)?;
    let mean = lambda * t_max;
    if mean > MAX_POISSON_MEAN {
        return Err(invalid(format!(
            "Poisson mean {mean:.3e} exceeds {MAX_POISSON_MEAN:.0e}"
        )));
    }
    let count = Poisson::new(mean)
        .map_err(|e| invalid(format!("Poisson mean {mean}: {e}")))?
        .sample(rng) as usize;
    Ok((0..count)
        .map(|_| {
            let delay = rng.random::<f64>() * t_max;
            // Circular: each quadrature carries half the conditional variance.
            let sd = (0.5 * g0 * (-delay / t).exp() / lambda).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            TurinPath {
                delay,
                gain: Complex64::new(sd * re, sd * im),
            }
        })
        .collect())
}

/// `Y_i = sum_l alpha_l exp(-j 2 pi delta_f i tau_l)` for `i = 0..n_s`.
pub fn paths_to_transfer(paths: &[TurinPath], delta_f: f64, n_s: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n_s];
    if paths.is_empty() {
        return out;
    }
    let l = paths.len();
    let (mut re, mut im) = (vec![0.0; l], vec![0.0; l]);
    let (mut sr, mut si) = (vec![0.0; l], vec![0.0; l]);
    for (p, path) in paths.iter().enumerate() {
        let phi = -2.0 * PI * delta_f * path.delay;
        sr[p] = phi.cos();
        si[p] = phi.sin();
    }
    for (i, slot) in out.iter_mut().enumerate() {
        if i % REANCHOR == 0 {
            for (p, path) in paths.iter().enumerate() {
                let rot = Complex64::from_polar(1.0, -2.0 * PI * delta_f * path.delay * i as f64);
                let v = path.gain * rot;
                re[p] = v.re;
                im[p] = v.im;
            }
        }
        let mut acc_re = [0.0f64; 4];
        let mut acc_im = [0.0f64; 4];
        let mut chunks = re
            .chunks_exact_mut(4)
            .zip(im.chunks_exact_mut(4))
            .zip(sr.chunks_exact(4).zip(si.chunks_exact(4)));
        for ((r, m), (c, s)) in &mut chunks {
            for u in 0..4 {
                acc_re[u] += r[u];
                acc_im[u] += m[u];
                let nr = r[u] * c[u] - m[u] * s[u];
                m[u] = r[u] * s[u] + m[u] * c[u];
                r[u] = nr;
            }
        }
        let tail = l - l % 4;
        let mut sum = Complex64::new(
            acc_re[0] + acc_re[1] + acc_re[2] + acc_re[3],
            acc_im[0] + acc_im[1] + acc_im[2] + acc_im[3],
        );
        for p in tail..l {
            sum.re += re[p];
            sum.im += im[p];
            let nr = re[p] * sr[p] - im[p] * si[p];
            im[p] = re[p] * si[p] + im[p] * sr[p];
            re[p] = nr;
        }
        *slot = sum;
    }
    out
}

pub fn simulate_turin(
    theta: &[f64],
    settings: &TurinSettings,
    stream: &RngStream,
) -> Result<RawDataset> {
    settings.validate()?;
    check_theta(theta)?;
    let (delta_f, t_max) = (settings.delta_f(), settings.t_max());
    let mut rng = stream.rng();
    let rows = (0..settings.n_real)
        .map(|_| {
            Ok(paths_to_transfer(
                &draw_paths(theta, t_max, &mut rng)?,
                delta_f,
                settings.n_s,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RawDataset::Turin(TurinData {
        rows,
        bandwidth: settings.bandwidth,
        n_s: settings.n_s,
    }))
}

/// Inverse DFT of transfer-function rows onto the time grid
/// `t_k = k / (n_s delta_f)`.
pub struct TimeTransform {
    fft: Arc<dyn Fft<f64>>,
    n_s: usize,
    /// Time step `1 / (n_s delta_f)`.
    pub dt: f64,
}

impl TimeTransform {
    pub fn new(bandwidth: f64, n_s: usize) -> Result<Self> {
        if n_s < 2 || !(bandwidth > 0.0) {
            return Err(invalid("need n_s >= 2 and positive bandwidth"));
        }
        let delta_f = bandwidth / (n_s - 1) as f64;
        Ok(Self {
            fft: FftPlanner::new().plan_fft_inverse(n_s),
            n_s,
            dt: 1.0 / (n_s as f64 * delta_f),
        })
    }

    pub fn apply(&self, row: &[Complex64]) -> Result<Vec<Complex64>> {
        crate::error::check_len(row.len(), self.n_s)?;
        let mut buf = row.to_vec();
        self.fft.process(&mut buf);
        let scale = 1.0 / self.n_s as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        Ok(buf)
    }
}

/// `y(t_k) = (1/n_s) sum_i Y_i exp(j 2 pi i delta_f t_k)`.
pub fn transfer_to_time(row: &[Complex64], bandwidth: f64, n_s: usize) -> Result<Vec<Complex64>> {
    TimeTransform::new(bandwidth, n_s)?.apply(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: f64 = 4e9;
    const NS: usize = 801;

    fn settings(n_real: usize) -> TurinSettings {
        TurinSettings {
            bandwidth: B,
            n_s: NS,
            n_real,
        }
    }

    #[test]
    fn grid_constants() {
        let s = settings(1);
        assert!((s.delta_f() - 5e6).abs() < 1e-6);
        assert!((s.t_max() - 2e-7).abs() < 1e-20);
    }

    #[test]
    fn mean_path_count() {
        let mut rng = RngStream::new(1).rng();
        let t_max = settings(1).t_max();
        let total: usize = (0..1000)
            .map(|_| {
                draw_paths(&[1e-9, 1e-8, 1e9], t_max, &mut rng)
                    .unwrap()
                    .len()
            })
            .sum();
        let mean = total as f64 / 1000.0;
        assert!((mean - 200.0).abs() < 5.0, "mean path count {mean}");
    }

    #[test]
    fn mean_path_energy_matches_campbell() {
        let (g0, t) = (1e-9, 1e-8);
        let t_max = settings(1).t_max();
        let mut rng = RngStream::new(2).rng();
        let n = 2000;
        let total: f64 = (0..n)
            .map(|_| {
                draw_paths(&[g0, t, 1e9], t_max, &mut rng)
                    .unwrap()
                    .iter()
                    .map(|p| p.gain.norm_sqr())
                    .sum::<f64>()
            })
            .sum();
        let oracle = g0 * t * (1.0 - (-t_max / t).exp());
        let rel = (total / n as f64 - oracle).abs() / oracle;
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn empty_path_set_gives_zero_transfer() {
        assert!(paths_to_transfer(&[], 5e6, NS)
            .iter()
            .all(|y| y.norm() == 0.0));
    }

    #[test]
    fn recurrence_matches_direct_sum() {
        let mut rng = RngStream::new(3).rng();
        let paths = draw_paths(&[1e-9, 1e-8, 1e9], 2e-7, &mut rng).unwrap();
        let fast = paths_to_transfer(&paths, 5e6, NS);
        for (i, y) in fast.iter().enumerate() {
            let direct: Complex64 = paths
                .iter()
                .map(|p| p.gain * Complex64::from_polar(1.0, -2.0 * PI * 5e6 * i as f64 * p.delay))
                .sum();
            assert!(
                (y - direct).norm() <= 1e-9 * direct.norm().max(1e-6),
                "i = {i}"
            );
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = RngStream::new(0).rng();
        assert!(draw_paths(&[0.0, 1e-8, 1e9], 2e-7, &mut rng).is_err());
        assert!(draw_paths(&[1e-9, 1e-8, 1e15], 2e-7, &mut rng).is_err());
        assert!(simulate_turin(
            &[1e-9, 1e-8, 1e9],
            &TurinSettings {
                bandwidth: B,
                n_s: 1,
                n_real: 1
            },
            &RngStream::new(0)
        )
        .is_err());
    }

    #[test]
    fn time_transform_of_zero_and_constant() {
        let zero = vec![Complex64::new(0.0, 0.0); NS];
        assert!(transfer_to_time(&zero, B, NS)
            .unwrap()
            .iter()
            .all(|y| y.norm() == 0.0));
        let ones = vec![Complex64::new(1.0, 0.0); NS];
        let y = transfer_to_time(&ones, B, NS).unwrap();
        assert!((y[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(y[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn time_transform_length_mismatch() {
        assert!(transfer_to_time(&[Complex64::new(1.0, 0.0); 10], B, NS).is_err());
    }

    #[test]
    fn parseval_identity() {
        let mut rng = RngStream::new(4).rng();
        let row: Vec<Complex64> = (0..NS)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let y = transfer_to_time(&row, B, NS).unwrap();
        let time_energy: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        let freq_energy: f64 = row.iter().map(|v| v.norm_sqr()).sum::<f64>() / NS as f64;
        assert!((time_energy - freq_energy).abs() / freq_energy < 1e-9);
    }

    #[test]
    fn deterministic_dataset() {
        let s = settings(3);
        let a = simulate_turin(&[1e-9, 1e-8, 1e9], &s, &RngStream::new(8)).unwrap();
        let b = simulate_turin(&[1e-9, 1e-8, 1e9], &s, &RngStream::new(8)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }
}
