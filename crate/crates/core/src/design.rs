//! Sequential choice of which statistic to ask the expert about next.

use crate::abc::{InclusionVector, PosteriorEngine, PosteriorSampleSet};
use crate::error::{invalid, Error, Result};
use crate::feedback::{
    feedback_marginal, sample_feedback_posterior, update_belief, BeliefHyperparams, FeedbackLog,
    FeedbackRecord, FeedbackSource, InclusionBelief, SimulatedExpert, DEFAULT_MIXTURE_DRAWS,
};
use crate::kdtree::KdTree;
use crate::rng::RngStream;
use crate::samples::SampleMatrix;
use crate::simulators::PriorBox;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Default stopping threshold on the expected divergence.
pub const DEFAULT_DELTA: f64 = 0.06;

/// Default number of sample sets drawn when calibrating the threshold.
pub const DEFAULT_CALIBRATION_SETS: usize = 10;

/// 1-nearest-neighbour estimate of `KL(p || q)` from samples `p` of `p` and
/// `q` of `q`.
pub fn kl_knn(p: &SampleMatrix, q: &SampleMatrix) -> Result<f64> {
    let dim = p.dim();
    if q.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: q.dim(),
        });
    }
    let (n, m) = (p.len(), q.len());
    if n < 2 || m < 1 {
        return Err(invalid(format!(
            "KL estimate needs at least 2 and 1 samples, got {n} and {m}"
        )));
    }
    let own = KdTree::new(p.as_slice(), dim);
    let other = KdTree::new(q.as_slice(), dim);
    let mut to_other = Vec::with_capacity(n);
    let mut to_own = Vec::with_capacity(n);
    for (i, row) in p.rows().enumerate() {
        to_other.push(other.nearest_distance(row, None));
        to_own.push(own.nearest_distance(row, Some(i)));
    }
    floor_zeros(&mut to_other);
    floor_zeros(&mut to_own);
    let sum: f64 = to_other
        .iter()
        .zip(&to_own)
        .map(|(a, b)| (a / b).ln())
        .sum();
    Ok(dim as f64 / n as f64 * sum + (m as f64 / (n as f64 - 1.0)).ln())
}

/// Replaces zero distances (duplicated points) by a millionth of the smallest
/// positive one.
fn floor_zeros(distances: &mut [f64]) {
    let min_pos = distances
        .iter()
        .copied()
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if min_pos.is_finite() {
        min_pos * 1e-6
    } else {
        1.0
    };
    for d in distances.iter_mut() {
        if *d == 0.0 {
            *d = floor;
        }
    }
}

/// Rescales every coordinate to the unit interval of the prior box so that
/// nearest-neighbour distances do not depend on parameter units.
pub fn to_unit_box(samples: &SampleMatrix, prior: &PriorBox) -> Result<SampleMatrix> {
    samples.map_rows(|r| {
        r.iter()
            .enumerate()
            .map(|(d, &x)| (x - prior.lo(d)) / prior.width(d))
            .collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryStrategy {
    /// Ask about the statistic with the largest expected divergence.
    Utility,
    /// Ask about a uniformly random unqueried statistic; stop by the same rule.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub delta: f64,
    pub mixture_draws: usize,
    pub strategy: QueryStrategy,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            mixture_draws: DEFAULT_MIXTURE_DRAWS,
            strategy: QueryStrategy::Utility,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(invalid("stopping threshold must be nonnegative"));
        }
        if self.mixture_draws == 0 {
            return Err(invalid("mixture draw count must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub statistic: usize,
    pub utility: f64,
    pub kl_positive: f64,
    pub kl_negative: f64,
    pub prob_positive: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub iteration: usize,
    pub rows: Vec<UtilityRow>,
    /// Statistic to query next; `None` means stop.
    pub selected: Option<usize>,
}

impl UtilityReport {
    pub fn max_utility(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.utility).reduce(f64::max)
    }
}

/// Expected divergence between the posterior after a hypothetical feedback on
/// `j` and the `base` posterior under the current belief. `base` holds samples
/// already mapped by [`to_unit_box`].
pub fn candidate_utility(
    engine: &PosteriorEngine,
    belief: &InclusionBelief,
    j: usize,
    base: &SampleMatrix,
    config: &DesignConfig,
    stream: &RngStream,
) -> Result<UtilityRow> {
    if belief.is_queried(j) {
        return Err(Error::AlreadyQueried(j));
    }
    let h = belief.hyperparams;
    let omega = feedback_marginal(h.reliability, h.prior_inclusion);
    let n = base.len();
    let mut kl = [0.0; 2];
    for (slot, f) in [(0, true), (1, false)] {
        let weight = if f { omega } else { 1.0 - omega };
        if weight == 0.0 {
            continue;
        }
        let hypothetical = update_belief(belief, j, f)?;
        let set = sample_feedback_posterior(
            engine,
            &hypothetical,
            n,
            config.mixture_draws,
            &stream.child("hypothetical", f as u64),
        )?;
        kl[slot] = kl_knn(&to_unit_box(&set.samples, engine.prior())?, base)?;
    }
    Ok(UtilityRow {
        statistic: j,
        utility: omega * kl[0] + (1.0 - omega) * kl[1],
        kl_positive: kl[0],
        kl_negative: kl[1],
        prob_positive: omega,
    })
}

/// Highest-utility row (lowest index on ties), or `None` when no row exceeds
/// `delta`.
pub fn select_next(rows: &[UtilityRow], delta: f64) -> Option<usize> {
    let mut best: Option<&UtilityRow> = None;
    for r in rows {
        if best.is_none_or(|b| {
            r.utility > b.utility || (r.utility == b.utility && r.statistic < b.statistic)
        }) {
            best = Some(r);
        }
    }
    best.filter(|b| b.utility > delta).map(|b| b.statistic)
}

/// Largest pairwise divergence among `sets` sample sets drawn from one density.
pub fn calibrate_delta(
    sets: usize,
    mut sampler: impl FnMut(&RngStream) -> Result<SampleMatrix>,
    stream: &RngStream,
) -> Result<f64> {
    if sets < 2 {
        return Err(invalid("calibration needs at least two sample sets"));
    }
    let draws = (0..sets)
        .map(|i| sampler(&stream.child("calibration", i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut max = f64::NEG_INFINITY;
    for (a, p) in draws.iter().enumerate() {
        for (b, q) in draws.iter().enumerate() {
            if a != b {
                max = max.max(kl_knn(p, q)?);
            }
        }
    }
    Ok(max)
}

/// Statistics the belief currently favours: queried with `nu > 0.5`.
pub fn gamma_hat(belief: &InclusionBelief) -> InclusionVector {
    InclusionVector::from_flags(
        (0..belief.w())
            .map(|j| belief.is_queried(j) && belief.probability(j) > 0.5)
            .collect(),
    )
}

/// Source of feedback bits for the design loop.
pub trait Expert {
    fn feedback(&mut self, statistic: usize) -> Result<bool>;

    fn source(&self) -> FeedbackSource {
        FeedbackSource::Simulated
    }
}

impl Expert for SimulatedExpert {
    fn feedback(&mut self, statistic: usize) -> Result<bool> {
        Ok(self.answer(statistic))
    }
}

/// Resumable state of one expert-in-the-loop run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitlState {
    pub belief: InclusionBelief,
    pub log: FeedbackLog,
    pub reports: Vec<UtilityReport>,
    /// Number of feedback bits received so far.
    pub iteration: usize,
    pub pending: Option<usize>,
    pub stopped: bool,
}

#[derive(Clone, Debug)]
pub struct HitlOutcome {
    pub gamma_hat: InclusionVector,
    pub posterior: PosteriorSampleSet,
    pub state: HitlState,
}

impl HitlState {
    pub fn new(w: usize, hyperparams: BeliefHyperparams) -> Result<Self> {
        hyperparams.validate()?;
        Ok(Self {
            belief: InclusionBelief::fresh(w, hyperparams),
            log: FeedbackLog::new(),
            reports: Vec::new(),
            iteration: 0,
            pending: None,
            stopped: false,
        })
    }

    /// Scores every unqueried statistic under the current belief and either
    /// sets the pending query or stops.
    pub fn propose(
        &mut self,
        engine: &PosteriorEngine,
        config: &DesignConfig,
        root: &RngStream,
    ) -> Result<&UtilityReport> {
        if self.stopped || self.pending.is_some() {
            return Err(invalid("a query is already pending or the run has stopped"));
        }
        let report = self.compute_report(engine, config, root)?;
        self.pending = report.selected;
        self.stopped = report.selected.is_none();
        self.reports.push(report);
        Ok(self.reports.last().expect("just pushed"))
    }

    fn compute_report(
        &self,
        engine: &PosteriorEngine,
        config: &DesignConfig,
        root: &RngStream,
    ) -> Result<UtilityReport> {
        config.validate()?;
        let iter = root.child("iteration", self.iteration as u64);
        let candidates = self.belief.unqueried();
        let mut rows = Vec::with_capacity(candidates.len());
        if !candidates.is_empty() {
            let n = engine.config().n;
            let base = sample_feedback_posterior(
                engine,
                &self.belief,
                n,
                config.mixture_draws,
                &iter.child("base", 0),
            )?;
            let base = to_unit_box(&base.samples, engine.prior())?;
            for &j in &candidates {
                rows.push(candidate_utility(
                    engine,
                    &self.belief,
                    j,
                    &base,
                    config,
                    &iter.child("candidate", j as u64),
                )?);
            }
        }
        let mut selected = select_next(&rows, config.delta);
        if selected.is_some() && config.strategy == QueryStrategy::Random {
            let mut rng = iter.child("random", 0).rng();
            selected = Some(candidates[rng.random_range(0..candidates.len())]);
        }
        Ok(UtilityReport {
            iteration: self.iteration,
            rows,
            selected,
        })
    }

    pub fn record(
        &mut self,
        statistic: usize,
        feedback: bool,
        source: FeedbackSource,
        timestamp: Option<u64>,
    ) -> Result<()> {
        match self.pending {
            Some(p) if p == statistic => {}
            Some(p) => {
                return Err(Error::WrongCandidate {
                    sent: statistic,
                    pending: p,
                })
            }
            None => return Err(invalid("no query is pending")),
        }
        let belief = update_belief(&self.belief, statistic, feedback)?;
        self.log.push(FeedbackRecord {
            iteration: self.iteration,
            statistic,
            feedback,
            source,
            timestamp,
        })?;
        self.belief = belief;
        self.iteration += 1;
        self.pending = None;
        Ok(())
    }

    pub fn gamma_hat(&self) -> InclusionVector {
        gamma_hat(&self.belief)
    }

    /// Posterior at the selected statistics.
    pub fn final_posterior(
        &self,
        engine: &PosteriorEngine,
        root: &RngStream,
    ) -> Result<PosteriorSampleSet> {
        engine.abc_posterior(&self.gamma_hat(), &root.child("final", 0))
    }
}

/// Posterior sample sets behind one utility row: the current posterior and
/// the two hypothetical posteriors after feedback on the candidate.
#[derive(Clone, Debug)]
pub struct CandidateSets {
    pub before: SampleMatrix,
    pub include: SampleMatrix,
    pub exclude: SampleMatrix,
}

/// Redraws, with the streams the utility computation used, the sets that
/// produced the utility of candidate `j` at `iteration`.
pub fn candidate_sets(
    engine: &PosteriorEngine,
    belief: &InclusionBelief,
    iteration: usize,
    j: usize,
    config: &DesignConfig,
    root: &RngStream,
) -> Result<CandidateSets> {
    let iter = root.child("iteration", iteration as u64);
    let n = engine.config().n;
    let before = sample_feedback_posterior(
        engine,
        belief,
        n,
        config.mixture_draws,
        &iter.child("base", 0),
    )?
    .samples;
    let cand = iter.child("candidate", j as u64);
    let branch = |f: bool| -> Result<SampleMatrix> {
        match update_belief(belief, j, f) {
            Ok(b) => Ok(sample_feedback_posterior(
                engine,
                &b,
                n,
                config.mixture_draws,
                &cand.child("hypothetical", f as u64),
            )?
            .samples),
            // Feedback with zero probability leaves the posterior where it is.
            Err(Error::InvalidArgument(_)) => Ok(before.clone()),
            Err(e) => Err(e),
        }
    };
    let include = branch(true)?;
    let exclude = branch(false)?;
    Ok(CandidateSets {
        before,
        include,
        exclude,
    })
}

/// Runs the full query loop against `expert` until the stopping rule fires.
pub fn run_hitl(
    engine: &PosteriorEngine,
    hyperparams: BeliefHyperparams,
    config: &DesignConfig,
    expert: &mut dyn Expert,
    root: &RngStream,
) -> Result<HitlOutcome> {
    let mut state = HitlState::new(engine.w(), hyperparams)?;
    while let Some(j) = state.propose(engine, config, root)?.selected {
        let f = expert.feedback(j)?;
        state.record(j, f, expert.source(), None)?;
    }
    debug_assert!(state.iteration <= engine.w());
    let posterior = state.final_posterior(engine, root)?;
    Ok(HitlOutcome {
        gamma_hat: state.gamma_hat(),
        posterior,
        state,
    })
}
