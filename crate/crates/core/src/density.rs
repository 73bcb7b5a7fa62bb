//! Per-parameter kernel density curves for the expert's before/after view.

use crate::error::{invalid, Result};
use crate::samples::SampleMatrix;
use crate::simulators::PriorBox;
use serde::{Deserialize, Serialize};

pub const GRID_POINTS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl DensityCurve {
    /// Trapezoid-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Total variation distance to another curve on the same grid.
    pub fn total_variation(&self, other: &DensityCurve) -> f64 {
        let diff: Vec<f64> = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .collect();
        0.5 * trapezoid(&self.grid, &diff)
    }

    /// Fraction of the mass within `fraction` of either end of the grid.
    pub fn edge_mass(&self, fraction: f64) -> f64 {
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        let cut = fraction * (hi - lo);
        let masked: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.density)
            .map(|(&x, &d)| {
                if x <= lo + cut || x >= hi - cut {
                    d
                } else {
                    0.0
                }
            })
            .collect();
        trapezoid(&self.grid, &masked) / self.integral()
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Gaussian kernel density of `values` on an even grid over `[lo, hi]`,
/// normal-reference bandwidth, renormalized to integrate to one on the grid.
pub fn kde_curve(values: &[f64], lo: f64, hi: f64, points: usize) -> Result<DensityCurve> {
    if values.is_empty() {
        return Err(invalid("density of an empty sample"));
    }
    if !(hi > lo) || points < 2 {
        return Err(invalid(
            "density grid needs hi > lo and at least two points",
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let step = (hi - lo) / (points - 1) as f64;
    // Never narrower than the grid spacing, so point masses stay visible.
    let h = (1.06 * sd * n.powf(-0.2)).max(step);
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            values
                .iter()
                .map(|&v| {
                    let u = (x - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    let total = trapezoid(&grid, &density);
    if total > 0.0 {
        density.iter_mut().for_each(|d| *d /= total);
    } else {
        // All mass fell outside the grid; show a flat curve.
        density.iter_mut().for_each(|d| *d = 1.0 / (hi - lo));
    }
    Ok(DensityCurve { grid, density })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDensities {
    pub name: String,
    pub before: DensityCurve,
    pub after_include: DensityCurve,
    pub after_exclude: DensityCurve,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub parameters: Vec<ParameterDensities>,
}

impl DensitySummary {
    pub fn build(
        names: &[&str],
        prior: &PriorBox,
        before: &SampleMatrix,
        after_include: &SampleMatrix,
        after_exclude: &SampleMatrix,
        truth: Option<&[f64]>,
    ) -> Result<Self> {
        let parameters = (0..prior.dim())
            .map(|d| {
                let curve = |s: &SampleMatrix| {
                    let col: Vec<f64> = s.rows().map(|r| r[d]).collect();
                    kde_curve(&col, prior.lo(d), prior.hi(d), GRID_POINTS)
                };
                Ok(ParameterDensities {
                    name: names[d].to_string(),
                    before: curve(before)?,
                    after_include: curve(after_include)?,
                    after_exclude: curve(after_exclude)?,
                    truth: truth.map(|t| t[d]),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { parameters })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn integrates_to_one() {
        let mut rng = RngStream::new(1).rng();
        for (mean, sd) in [(0.0, 1.0), (4.5, 0.01), (-4.9, 0.5)] {
            let v: Vec<f64> = (0..4000)
                .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let c = kde_curve(&v, -5.0, 5.0, GRID_POINTS).unwrap();
            assert!((c.integral() - 1.0).abs() < 0.01);
            assert!(c.density.iter().all(|&d| d >= 0.0));
        }
    }

    #[test]
    fn normal_shape() {
        let mut rng = RngStream::new(2).rng();
        let v: Vec<f64> = (0..4000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let c = kde_curve(&v, -5.0, 5.0, GRID_POINTS).unwrap();
        let at_zero = c.density[GRID_POINTS / 2];
        assert!((at_zero - 0.3989).abs() < 0.04, "{at_zero}");
    }

    #[test]
    fn point_mass_and_outside_mass() {
        let c = kde_curve(&[1.0; 10], 0.0, 2.0, 64).unwrap();
        assert!((c.integral() - 1.0).abs() < 1e-9);
        let far = kde_curve(&[100.0; 5], 0.0, 2.0, 64).unwrap();
        assert!((far.integral() - 1.0).abs() < 1e-9);
        assert!(kde_curve(&[], 0.0, 1.0, 8).is_err());
        assert!(kde_curve(&[0.5], 1.0, 1.0, 8).is_err());
    }

    #[test]
    fn edge_mass_and_total_variation() {
        let mut rng = RngStream::new(3).rng();
        let edge: Vec<f64> = (0..2000).map(|_| 0.2 * rng.random::<f64>()).collect();
        let middle: Vec<f64> = (0..2000).map(|_| 4.0 + 2.0 * rng.random::<f64>()).collect();
        let a = kde_curve(&edge, 0.0, 10.0, GRID_POINTS).unwrap();
        let b = kde_curve(&middle, 0.0, 10.0, GRID_POINTS).unwrap();
        assert!(a.edge_mass(0.1) > 0.9);
        assert!(b.edge_mass(0.1) < 0.01);
        assert!(a.total_variation(&b) > 0.95);
        assert!(a.total_variation(&a) == 0.0);
    }
}
