//! Shared fixtures for the criterion benchmarks.

use hitl_abc::experiments::observe;
use hitl_abc::{AbcConfig, PosteriorEngine, Preset, RngStream, SimulationCache};
use std::sync::Arc;

/// Posterior engine for the two-parameter Gaussian preset with `n_sim`
/// simulations.
pub fn gaussian_engine(n_sim: usize, seed: u64) -> PosteriorEngine {
    let scenario = Preset::GaussianSensitivity.scenario(0.0);
    let root = RngStream::new(seed);
    let cache = SimulationCache::build(
        &scenario.model,
        &scenario.prior,
        n_sim,
        &root.child("cache", 0),
    )
    .expect("cache");
    let s_obs = observe(&scenario, &root.child("observed", 0)).expect("observed data");
    PosteriorEngine::new(
        Arc::new(cache),
        &s_obs,
        scenario.prior,
        AbcConfig::default(),
    )
    .expect("engine")
}
