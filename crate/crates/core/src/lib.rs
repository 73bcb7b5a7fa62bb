//! Approximate Bayesian computation with a human expert in the loop.
//!
//! The expert is asked, one statistic at a time, whether a candidate summary
//! statistic should be used. Their answers update a belief over inclusion
//! vectors, and the posterior is the ABC posterior marginalized over that
//! belief. Queries are chosen to maximize the expected change in the
//! posterior.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abc;
pub mod density;
pub mod design;
pub mod error;
pub mod experiments;
pub mod feedback;
mod kdtree;
pub mod rng;
pub mod samples;
pub mod session;
pub mod simulators;
pub mod statistics;

pub use abc::{
    abc_posterior, accepted_count, adjust, rejection_abc, AbcConfig, Adjustment, InclusionVector,
    ParamTransform, PosteriorEngine, PosteriorSampleSet, Provenance, SimulationCache,
};
pub use density::{DensityCurve, DensitySummary};
pub use design::{
    calibrate_delta, candidate_sets, candidate_utility, gamma_hat, kl_knn, run_hitl, select_next,
    CandidateSets, DesignConfig, Expert, HitlOutcome, HitlState, QueryStrategy, UtilityReport,
    UtilityRow,
};
pub use error::{Error, Result};
pub use experiments::{ExperimentSpec, Method, Preset, RunRecord};
pub use feedback::{
    feedback_marginal, posterior_nu, sample_feedback_posterior, sample_gamma, simulated_expert,
    update_belief, BeliefEntry, BeliefHyperparams, FeedbackLog, FeedbackRecord, FeedbackSource,
    InclusionBelief, SimulatedExpert,
};
pub use rng::RngStream;
pub use samples::SampleMatrix;
pub use session::{
    ObservedData, PendingQuery, PosteriorExport, Session, SessionConfig, SessionReport,
    SessionState, SessionStatus, SessionStore, SessionSummary,
};
pub use simulators::{Model, ModelKind, ParameterVector, PriorBox, RawDataset};
pub use statistics::{NormalizationScale, StatisticPool, SummaryVector};
