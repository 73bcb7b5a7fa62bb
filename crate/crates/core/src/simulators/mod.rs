//! Generative models with intractable likelihoods and uniform priors over
//! bounded boxes.

mod gandk;
mod gaussian;
mod prior;
mod turin;

pub use gandk::{gandk_quantile, simulate_gandk, GANDK_C};
pub use gaussian::simulate_gaussian;
pub use prior::{sample_prior, ParameterVector, PriorBox};
pub use turin::{
    draw_paths, paths_to_transfer, simulate_turin, transfer_to_time, TimeTransform, TurinData,
    TurinPath, TurinSettings, MAX_POISSON_MEAN,
};

use crate::error::Result;
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    GAndK,
    Turin,
    Gaussian,
}

impl ModelKind {
    /// Number of model parameters.
    pub fn q(self) -> usize {
        match self {
            ModelKind::GAndK => 4,
            ModelKind::Turin => 3,
            ModelKind::Gaussian => 2,
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::GAndK => &["A", "B", "g", "k"],
            ModelKind::Turin => &["G0", "T", "lambda"],
            ModelKind::Gaussian => &["mu", "sigma2"],
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::GAndK => "g-and-k",
            ModelKind::Turin => "turin",
            ModelKind::Gaussian => "gaussian",
        })
    }
}

/// A model together with the settings that fix the shape of one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    GAndK { n_obs: usize },
    Turin(TurinSettings),
    Gaussian { n_obs: usize },
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::GAndK { .. } => ModelKind::GAndK,
            Model::Turin(_) => ModelKind::Turin,
            Model::Gaussian { .. } => ModelKind::Gaussian,
        }
    }

    pub fn simulate(&self, theta: &[f64], stream: &RngStream) -> Result<RawDataset> {
        crate::error::check_len(theta.len(), self.kind().q())?;
        match self {
            Model::GAndK { n_obs } => simulate_gandk(theta, *n_obs, stream),
            Model::Turin(settings) => simulate_turin(theta, settings, stream),
            Model::Gaussian { n_obs } => simulate_gaussian(theta, *n_obs, stream),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RawDataset {
    GAndK(Vec<f64>),
    Gaussian(Vec<f64>),
    Turin(TurinData),
}

impl RawDataset {
    pub fn kind(&self) -> ModelKind {
        match self {
            RawDataset::GAndK(_) => ModelKind::GAndK,
            RawDataset::Gaussian(_) => ModelKind::Gaussian,
            RawDataset::Turin(_) => ModelKind::Turin,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            RawDataset::GAndK(v) | RawDataset::Gaussian(v) => v.len(),
            RawDataset::Turin(d) => d.rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
