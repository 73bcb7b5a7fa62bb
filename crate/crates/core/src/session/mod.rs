//! Interactive sessions driven by a human expert, persisted as one JSON
//! document per session so a run can be resumed after a crash.

mod store;

pub use store::SessionStore;

use crate::abc::{AbcConfig, PosteriorEngine, PosteriorSampleSet, SimulationCache};
use crate::density::DensitySummary;
use crate::design::{candidate_sets, DesignConfig, HitlState, UtilityReport};
use crate::error::{invalid, Error, Result};
use crate::experiments::{observe, Preset, Scenario};
use crate::feedback::{BeliefHyperparams, FeedbackLog, FeedbackSource};
use crate::rng::RngStream;
use crate::samples::SampleMatrix;
use crate::simulators::{Model, ParameterVector, PriorBox};
use crate::statistics::{quantile_sorted, StatisticPool, SummaryVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Tag written into every session document.
pub const SESSION_SCHEMA: &str = "hitl-abc/session/v1";

/// Probabilities at which simulated statistic values are summarized for the
/// expert.
pub const VIEW_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservedData {
    /// Simulated at `truth` from the session seed, with optional
    /// misspecification noise.
    Synthetic { truth: ParameterVector, zeta: f64 },
    /// Summary statistics computed elsewhere.
    Summary { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub model: Model,
    pub prior: PriorBox,
    pub observed: ObservedData,
    pub n_sim: usize,
    pub abc: AbcConfig,
    pub design: DesignConfig,
    pub hyperparams: BeliefHyperparams,
    pub seed: u64,
}

impl SessionConfig {
    /// Session settings of a batch preset, with the preset's smallest
    /// simulation budget and the default belief hyperparameters.
    pub fn from_preset(preset: Preset, zeta: f64, seed: u64) -> Self {
        let spec = preset.defaults();
        let Scenario {
            model,
            prior,
            truth,
            zeta,
            ..
        } = preset.scenario(zeta);
        Self {
            model,
            prior,
            observed: ObservedData::Synthetic { truth, zeta },
            n_sim: spec
                .n_sim
                .iter()
                .copied()
                .min()
                .expect("presets list a budget"),
            abc: spec.abc_config(spec.adjustment),
            design: DesignConfig::default(),
            hyperparams: BeliefHyperparams::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.model.kind();
        crate::error::check_len(self.prior.dim(), kind.q())?;
        self.abc.validate(self.n_sim, kind.q())?;
        self.design.validate()?;
        self.hyperparams.validate()?;
        match &self.observed {
            ObservedData::Synthetic { truth, zeta } => {
                crate::error::check_len(truth.len(), kind.q())?;
                if !(*zeta >= 0.0) {
                    return Err(invalid("misspecification variance must be nonnegative"));
                }
            }
            ObservedData::Summary { values } => {
                crate::error::check_len(values.len(), StatisticPool::for_model(kind).w())?;
            }
        }
        Ok(())
    }

    fn root(&self) -> RngStream {
        RngStream::new(self.seed)
    }

    fn observed_summary(&self) -> Result<SummaryVector> {
        let kind = self.model.kind();
        match &self.observed {
            ObservedData::Synthetic { truth, zeta } => {
                let scenario = Scenario {
                    model: self.model.clone(),
                    prior: self.prior.clone(),
                    truth: truth.clone(),
                    zeta: *zeta,
                    relevant: crate::abc::InclusionVector::zeros(0),
                };
                observe(&scenario, &self.root().child("observed", 0))
            }
            ObservedData::Summary { values } => SummaryVector::new(kind, values.clone()),
        }
    }

    fn build_cache(&self) -> Result<SimulationCache> {
        SimulationCache::build(
            &self.model,
            &self.prior,
            self.n_sim,
            &self.root().child("cache", 0),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    AwaitingFeedback,
    Computing,
    Stopped,
    Finalized,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionStatus::AwaitingFeedback => "awaiting-feedback",
            SessionStatus::Computing => "computing",
            SessionStatus::Stopped => "stopped",
            SessionStatus::Finalized => "finalized",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub probability: f64,
    pub value: f64,
}

/// What the expert sees for the statistic being asked about.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub iteration: usize,
    pub statistic: usize,
    pub name: String,
    pub utility: f64,
    pub observed: f64,
    /// Quantiles of the statistic over the simulation cache.
    pub simulated_quantiles: Vec<QuantilePoint>,
    pub densities: DensitySummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub schema: String,
    pub id: String,
    pub config: SessionConfig,
    pub pool: Vec<String>,
    pub s_obs: Vec<f64>,
    pub status: SessionStatus,
    pub hitl: HitlState,
    pub pending: Option<PendingQuery>,
}

/// Compact view returned after every mutation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub model: String,
    pub status: SessionStatus,
    pub iteration: usize,
    pub pending_statistic: Option<usize>,
    pub pending_name: Option<String>,
    pub gamma_hat: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub id: String,
    pub model: String,
    pub status: SessionStatus,
    pub iteration: usize,
    pub pool: Vec<String>,
    pub delta: f64,
    /// Current inclusion probability per statistic.
    pub inclusion_probability: Vec<f64>,
    pub feedback: FeedbackLog,
    pub utility_history: Vec<UtilityReport>,
    pub gamma_hat: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorExport {
    pub id: String,
    pub gamma_hat: String,
    pub parameters: Vec<String>,
    pub samples: SampleMatrix,
    pub config: SessionConfig,
}

impl PosteriorExport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.parameters)?;
        for row in self.samples.rows() {
            w.write_record(row.iter().map(f64::to_string))?;
        }
        let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
    }
}

/// A live session: persisted state plus the posterior engine rebuilt from
/// the seed.
#[derive(Debug)]
pub struct Session {
    state: SessionState,
    engine: PosteriorEngine,
    posterior: Option<PosteriorSampleSet>,
}

impl Session {
    /// Builds the cache, computes the first query and reports every
    /// persisted transition through `persist`.
    pub fn create(
        id: String,
        config: SessionConfig,
        persist: &mut dyn FnMut(&SessionState) -> Result<()>,
    ) -> Result<Self> {
        config.validate()?;
        let cache = config.build_cache()?;
        Self::start(id, config, cache, persist)
    }

    /// Like [`Session::create`] with a prebuilt cache, which must match the
    /// configuration.
    pub fn start(
        id: String,
        config: SessionConfig,
        cache: SimulationCache,
        persist: &mut dyn FnMut(&SessionState) -> Result<()>,
    ) -> Result<Self> {
        config.validate()?;
        let s_obs = config.observed_summary()?;
        let pool = StatisticPool::for_model(config.model.kind());
        let state = SessionState {
            schema: SESSION_SCHEMA.to_string(),
            id,
            pool: pool.statistics.iter().map(|s| s.name.clone()).collect(),
            s_obs: s_obs.values.clone(),
            status: SessionStatus::Computing,
            hitl: HitlState::new(pool.w(), config.hyperparams)?,
            pending: None,
            config,
        };
        let mut session = Self::resume(state, Some(cache))?;
        session.advance(persist)?;
        Ok(session)
    }

    /// Rebuilds a session from its persisted state. A supplied cache is used
    /// when it matches the configuration; otherwise the cache is simulated
    /// again from the seed. Call [`Session::advance`] to finish an
    /// interrupted transition.
    pub fn resume(state: SessionState, cache: Option<SimulationCache>) -> Result<Self> {
        if state.schema != SESSION_SCHEMA {
            return Err(Error::Schema(state.schema));
        }
        let config = &state.config;
        let expected_stream = config.root().child("cache", 0);
        let cache = match cache {
            Some(c)
                if c.n_sim() == config.n_sim
                    && c.stream == Some(expected_stream)
                    && c.model() == config.model.kind() =>
            {
                c
            }
            _ => config.build_cache()?,
        };
        let s_obs = SummaryVector::new(config.model.kind(), state.s_obs.clone())?;
        let engine = PosteriorEngine::new(
            Arc::new(cache),
            &s_obs,
            config.prior.clone(),
            config.abc.clone(),
        )?;
        Ok(Self {
            state,
            engine,
            posterior: None,
        })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn engine(&self) -> &PosteriorEngine {
        &self.engine
    }

    fn hitl_root(&self) -> RngStream {
        self.state.config.root().child("hitl", 0)
    }

    /// Runs pending computation until the session waits for the expert or
    /// is finalized, persisting after each transition.
    pub fn advance(&mut self, persist: &mut dyn FnMut(&SessionState) -> Result<()>) -> Result<()> {
        loop {
            match self.state.status {
                SessionStatus::Computing => {
                    let root = self.hitl_root();
                    let report = self
                        .state
                        .hitl
                        .propose(&self.engine, &self.state.config.design, &root)?
                        .clone();
                    match report.selected {
                        Some(j) => {
                            self.state.pending = Some(self.pending_query(&report, j)?);
                            self.state.status = SessionStatus::AwaitingFeedback;
                        }
                        None => {
                            self.state.pending = None;
                            self.state.status = SessionStatus::Stopped;
                        }
                    }
                    persist(&self.state)?;
                }
                SessionStatus::Stopped => {
                    self.finalize()?;
                    self.state.status = SessionStatus::Finalized;
                    persist(&self.state)?;
                }
                SessionStatus::AwaitingFeedback | SessionStatus::Finalized => return Ok(()),
            }
        }
    }

    fn finalize(&mut self) -> Result<&PosteriorSampleSet> {
        if self.posterior.is_none() {
            let posterior = self
                .state
                .hitl
                .final_posterior(&self.engine, &self.hitl_root())?;
            self.posterior = Some(posterior);
        }
        Ok(self.posterior.as_ref().expect("just computed"))
    }

    fn pending_query(&self, report: &UtilityReport, j: usize) -> Result<PendingQuery> {
        let config = &self.state.config;
        let sets = candidate_sets(
            &self.engine,
            &self.state.hitl.belief,
            report.iteration,
            j,
            &config.design,
            &self.hitl_root(),
        )?;
        let truth = match &config.observed {
            ObservedData::Synthetic { truth, .. } => Some(truth.0.as_slice()),
            ObservedData::Summary { .. } => None,
        };
        let densities = DensitySummary::build(
            config.model.kind().parameter_names(),
            &config.prior,
            &sets.before,
            &sets.include,
            &sets.exclude,
            truth,
        )?;
        let mut simulated: Vec<f64> = self
            .engine
            .cache()
            .stats()
            .iter()
            .map(|row| row[j])
            .collect();
        simulated.sort_by(f64::total_cmp);
        let utility = report
            .rows
            .iter()
            .find(|r| r.statistic == j)
            .map_or(f64::NAN, |r| r.utility);
        Ok(PendingQuery {
            iteration: report.iteration,
            statistic: j,
            name: self.state.pool[j].clone(),
            utility,
            observed: self.state.s_obs[j],
            simulated_quantiles: VIEW_QUANTILES
                .iter()
                .map(|&p| QuantilePoint {
                    probability: p,
                    value: quantile_sorted(&simulated, p),
                })
                .collect(),
            densities,
        })
    }

    fn wrong_status(&self, expected: SessionStatus) -> Error {
        Error::WrongStatus {
            expected: expected.to_string(),
            actual: self.state.status.to_string(),
        }
    }

    pub fn query_view(&self) -> Result<&PendingQuery> {
        match (&self.state.status, &self.state.pending) {
            (SessionStatus::AwaitingFeedback, Some(p)) => Ok(p),
            _ => Err(self.wrong_status(SessionStatus::AwaitingFeedback)),
        }
    }

    /// Records feedback `feedback` on statistic `statistic` at iteration
    /// `iteration`. Resubmitting an already recorded answer is a no-op;
    /// anything else aimed at a past or future iteration is rejected.
    pub fn post_feedback(
        &mut self,
        iteration: usize,
        statistic: usize,
        feedback: bool,
        source: FeedbackSource,
        timestamp: Option<u64>,
        persist: &mut dyn FnMut(&SessionState) -> Result<()>,
    ) -> Result<()> {
        let current = self.state.hitl.iteration;
        if iteration < current {
            let earlier = &self.state.hitl.log.records()[iteration];
            if earlier.statistic == statistic && earlier.feedback == feedback {
                return Ok(());
            }
            return Err(Error::StaleIteration {
                sent: iteration,
                current,
            });
        }
        if iteration > current {
            return Err(Error::StaleIteration {
                sent: iteration,
                current,
            });
        }
        if self.state.status != SessionStatus::AwaitingFeedback {
            return Err(self.wrong_status(SessionStatus::AwaitingFeedback));
        }
        let mut next = self.state.hitl.clone();
        next.record(statistic, feedback, source, timestamp)?;
        self.state.hitl = next;
        self.state.pending = None;
        self.state.status = SessionStatus::Computing;
        persist(&self.state)?;
        self.advance(persist)
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.state.id.clone(),
            model: self.state.config.model.kind().to_string(),
            status: self.state.status,
            iteration: self.state.hitl.iteration,
            pending_statistic: self.state.pending.as_ref().map(|p| p.statistic),
            pending_name: self.state.pending.as_ref().map(|p| p.name.clone()),
            gamma_hat: self.state.hitl.gamma_hat().bits(),
        }
    }

    pub fn report(&self) -> SessionReport {
        let hitl = &self.state.hitl;
        SessionReport {
            id: self.state.id.clone(),
            model: self.state.config.model.kind().to_string(),
            status: self.state.status,
            iteration: hitl.iteration,
            pool: self.state.pool.clone(),
            delta: self.state.config.design.delta,
            inclusion_probability: (0..hitl.belief.w())
                .map(|j| hitl.belief.probability(j))
                .collect(),
            feedback: hitl.log.clone(),
            utility_history: hitl.reports.clone(),
            gamma_hat: hitl.gamma_hat().bits(),
        }
    }

    /// Final posterior samples; only available once the session is
    /// finalized.
    pub fn export(&mut self) -> Result<PosteriorExport> {
        if self.state.status != SessionStatus::Finalized {
            return Err(self.wrong_status(SessionStatus::Finalized));
        }
        let samples = self.finalize()?.samples.clone();
        Ok(PosteriorExport {
            id: self.state.id.clone(),
            gamma_hat: self.state.hitl.gamma_hat().bits(),
            parameters: self
                .state
                .config
                .model
                .kind()
                .parameter_names()
                .iter()
                .map(|s| s.to_string())
                .collect(),
            samples,
            config: self.state.config.clone(),
        })
    }

    /// Re-runs a session in memory from its configuration, answering each
    /// query with the next recorded feedback.
    pub fn replay(
        id: String,
        config: SessionConfig,
        cache: Option<SimulationCache>,
        feedback: &[(usize, bool)],
    ) -> Result<Self> {
        let cache = match cache {
            Some(c) => c,
            None => {
                config.validate()?;
                config.build_cache()?
            }
        };
        let mut session = Self::start(id, config, cache, &mut |_| Ok(()))?;
        for (k, &(j, f)) in feedback.iter().enumerate() {
            session.post_feedback(k, j, f, FeedbackSource::Human, None, &mut |_| Ok(()))?;
        }
        Ok(session)
    }
}
