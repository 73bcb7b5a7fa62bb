use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::{Deref, DerefMut};

/// One point in parameter space, in model units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Per-dimension `(lo, hi)` bounds of a uniform prior.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriorBox {
    bounds: Vec<(f64, f64)>,
}

impl PriorBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(invalid("prior box has no dimensions"));
        }
        for (dim, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBox { dim, lo, hi });
            }
        }
        Ok(Self { bounds })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn lo(&self, d: usize) -> f64 {
        self.bounds[d].0
    }

    pub fn hi(&self, d: usize) -> f64 {
        self.bounds[d].1
    }

    pub fn width(&self, d: usize) -> f64 {
        self.bounds[d].1 - self.bounds[d].0
    }

    /// Strict interior membership.
    pub fn contains_strictly(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x > lo && x < hi)
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    pub(crate) fn draw(&self, rng: &mut impl Rng) -> ParameterVector {
        ParameterVector(
            self.bounds
                .iter()
                .map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                .collect(),
        )
    }
}

impl<'de> Deserialize<'de> for PriorBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            bounds: Vec<(f64, f64)>,
        }
        let raw = Raw::deserialize(d)?;
        PriorBox::new(raw.bounds).map_err(serde::de::Error::custom)
    }
}

pub fn sample_prior(
    prior: &PriorBox,
    count: usize,
    stream: &RngStream,
) -> Result<Vec<ParameterVector>> {
    if count == 0 {
        return Err(invalid("sample_prior needs count >= 1"));
    }
    let mut rng = stream.rng();
    Ok((0..count).map(|_| prior.draw(&mut rng)).collect())
}
