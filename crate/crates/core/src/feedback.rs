//! Expert-feedback model over inclusion indicators and the
//! feedback-marginalized posterior sampler.

use crate::abc::{InclusionVector, PosteriorEngine, PosteriorSampleSet, Provenance};
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::samples::SampleMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Default number of inclusion vectors drawn to approximate the belief mixture;
/// at the default sample count this is one draw per sample.
pub const DEFAULT_MIXTURE_DRAWS: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefHyperparams {
    /// Probability that a feedback bit agrees with the true indicator.
    pub reliability: f64,
    /// Prior probability that a statistic belongs in the optimal set.
    pub prior_inclusion: f64,
}

impl Default for BeliefHyperparams {
    fn default() -> Self {
        Self {
            reliability: 0.95,
            prior_inclusion: 0.5,
        }
    }
}

impl BeliefHyperparams {
    pub fn new(reliability: f64, prior_inclusion: f64) -> Result<Self> {
        let h = Self {
            reliability,
            prior_inclusion,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("reliability", self.reliability),
            ("prior inclusion", self.prior_inclusion),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Probability of positive feedback, `pi rho + (1 - pi)(1 - rho)`.
pub fn feedback_marginal(reliability: f64, prior_inclusion: f64) -> f64 {
    reliability * prior_inclusion + (1.0 - reliability) * (1.0 - prior_inclusion)
}

/// Posterior probability that a statistic is relevant after one feedback bit.
pub fn posterior_nu(feedback: bool, reliability: f64, prior_inclusion: f64) -> Result<f64> {
    let omega = feedback_marginal(reliability, prior_inclusion);
    let (likelihood, evidence) = if feedback {
        (reliability, omega)
    } else {
        (1.0 - reliability, 1.0 - omega)
    };
    if evidence == 0.0 {
        return Err(invalid(format!(
            "feedback {} has zero probability under reliability {reliability}, prior {prior_inclusion}",
            feedback as u8
        )));
    }
    Ok(likelihood * prior_inclusion / evidence)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum BeliefEntry {
    Unqueried,
    Queried { feedback: bool, nu: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionBelief {
    pub hyperparams: BeliefHyperparams,
    pub entries: Vec<BeliefEntry>,
}

impl InclusionBelief {
    pub fn fresh(w: usize, hyperparams: BeliefHyperparams) -> Self {
        Self {
            hyperparams,
            entries: vec![BeliefEntry::Unqueried; w],
        }
    }

    pub fn w(&self) -> usize {
        self.entries.len()
    }

    /// Inclusion probability of statistic `j` under the current belief.
    pub fn probability(&self, j: usize) -> f64 {
        match self.entries[j] {
            BeliefEntry::Unqueried => self.hyperparams.prior_inclusion,
            BeliefEntry::Queried { nu, .. } => nu,
        }
    }

    pub fn is_queried(&self, j: usize) -> bool {
        matches!(self.entries[j], BeliefEntry::Queried { .. })
    }

    pub fn unqueried(&self) -> Vec<usize> {
        (0..self.w()).filter(|&j| !self.is_queried(j)).collect()
    }

    pub fn queried_count(&self) -> usize {
        self.w() - self.unqueried().len()
    }

    /// `(statistic, feedback)` for every queried statistic, by index.
    pub fn feedback_pairs(&self) -> Vec<(usize, bool)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(j, e)| match e {
                BeliefEntry::Queried { feedback, .. } => Some((j, *feedback)),
                BeliefEntry::Unqueried => None,
            })
            .collect()
    }

    /// The single inclusion vector this belief puts all its mass on, if any.
    pub fn point_mass(&self) -> Option<InclusionVector> {
        let flags = (0..self.w())
            .map(|j| match self.probability(j) {
                1.0 => Some(true),
                0.0 => Some(false),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()?;
        Some(InclusionVector::from_flags(flags))
    }

    /// Exact probability of `gamma` under the factorized belief.
    pub fn probability_of(&self, gamma: &InclusionVector) -> f64 {
        (0..self.w())
            .map(|j| {
                let p = self.probability(j);
                if gamma.get(j) {
                    p
                } else {
                    1.0 - p
                }
            })
            .product()
    }
}

/// Records feedback bit `f` on statistic `j`.
pub fn update_belief(
    belief: &InclusionBelief,
    j: usize,
    feedback: bool,
) -> Result<InclusionBelief> {
    if j >= belief.w() {
        return Err(Error::UnknownStatistic {
            index: j,
            w: belief.w(),
        });
    }
    if belief.is_queried(j) {
        return Err(Error::AlreadyQueried(j));
    }
    let h = belief.hyperparams;
    let nu = posterior_nu(feedback, h.reliability, h.prior_inclusion)?;
    let mut next = belief.clone();
    next.entries[j] = BeliefEntry::Queried { feedback, nu };
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackSource {
    Human,
    Simulated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub iteration: usize,
    pub statistic: usize,
    pub feedback: bool,
    pub source: FeedbackSource,
    /// Seconds since the Unix epoch; absent for simulated feedback so batch
    /// outputs stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeedbackLog(Vec<FeedbackRecord>);

impl FeedbackLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[FeedbackRecord] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, record: FeedbackRecord) -> Result<()> {
        if self.0.iter().any(|r| r.statistic == record.statistic) {
            return Err(Error::AlreadyQueried(record.statistic));
        }
        self.0.push(record);
        Ok(())
    }

    /// Rebuilds the belief these records imply.
    pub fn replay(&self, w: usize, hyperparams: BeliefHyperparams) -> Result<InclusionBelief> {
        self.0
            .iter()
            .try_fold(InclusionBelief::fresh(w, hyperparams), |b, r| {
                update_belief(&b, r.statistic, r.feedback)
            })
    }
}

/// One draw of `gamma` from the factorized belief.
pub fn sample_gamma(belief: &InclusionBelief, rng: &mut impl Rng) -> InclusionVector {
    InclusionVector::from_flags(
        (0..belief.w())
            .map(|j| rng.random::<f64>() < belief.probability(j))
            .collect(),
    )
}

/// Draws `n` samples from the posterior averaged over `belief`.
///
/// `mixture_draws` inclusion vectors are drawn and each receives `n / G`
/// samples, the remainder going to the earliest draws; identical vectors are
/// grouped so each distinct one is sampled once. The first group reuses
/// `stream` directly, so a point-mass belief reproduces
/// [`PosteriorEngine::abc_posterior`] bit for bit.
pub fn sample_feedback_posterior(
    engine: &PosteriorEngine,
    belief: &InclusionBelief,
    n: usize,
    mixture_draws: usize,
    stream: &RngStream,
) -> Result<PosteriorSampleSet> {
    if mixture_draws == 0 {
        return Err(invalid("mixture draw count must be positive"));
    }
    if belief.w() != engine.w() {
        return Err(Error::DimensionMismatch {
            expected: engine.w(),
            actual: belief.w(),
        });
    }
    let mut groups: Vec<(InclusionVector, usize)> = Vec::new();
    let mut index: HashMap<InclusionVector, usize> = HashMap::new();
    let mut gamma_rng = stream.child("gamma", 0).rng();
    for g in 0..mixture_draws {
        let gamma = sample_gamma(belief, &mut gamma_rng);
        let count = n / mixture_draws + usize::from(g < n % mixture_draws);
        match index.get(&gamma) {
            Some(&k) => groups[k].1 += count,
            None => {
                index.insert(gamma.clone(), groups.len());
                groups.push((gamma, count));
            }
        }
    }
    let mut samples = SampleMatrix::empty(engine.q());
    for (k, (gamma, count)) in groups.iter().enumerate() {
        if *count == 0 {
            continue;
        }
        let s = if k == 0 {
            *stream
        } else {
            stream.child("component", k as u64)
        };
        engine.draw_into(&mut samples, gamma, *count, &s)?;
    }
    let provenance = match belief.point_mass() {
        Some(gamma) => Provenance::Fixed { gamma },
        None => Provenance::Feedback {
            feedback: belief.feedback_pairs(),
            mixture_draws,
        },
    };
    Ok(PosteriorSampleSet {
        samples,
        provenance,
        config: engine.config().clone(),
    })
}

/// Simulated expert: returns the target indicator with probability
/// `reliability`, its complement otherwise.
#[derive(Clone, Debug)]
pub struct SimulatedExpert {
    target: InclusionVector,
    reliability: f64,
    rng: rand_chacha::ChaCha8Rng,
}

impl SimulatedExpert {
    pub fn new(target: InclusionVector, reliability: f64, stream: &RngStream) -> Self {
        Self {
            target,
            reliability,
            rng: stream.rng(),
        }
    }

    pub fn target(&self) -> &InclusionVector {
        &self.target
    }

    pub fn answer(&mut self, j: usize) -> bool {
        let truth = self.target.get(j);
        if self.rng.random::<f64>() < self.reliability {
            truth
        } else {
            !truth
        }
    }
}

pub fn simulated_expert(
    target: InclusionVector,
    reliability: f64,
    stream: &RngStream,
) -> SimulatedExpert {
    SimulatedExpert::new(target, reliability, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::AbcConfig;
    use crate::simulators::{simulate_gaussian, Model, ModelKind, PriorBox};
    use crate::statistics::{summarize, StatisticPool};
    use crate::SimulationCache;
    use proptest::prelude::*;
    use std::sync::Arc;

    const H: BeliefHyperparams = BeliefHyperparams {
        reliability: 0.95,
        prior_inclusion: 0.5,
    };

    #[test]
    fn marginal_examples() {
        for pi in [0.0, 0.3, 0.95, 1.0] {
            assert_eq!(feedback_marginal(pi, 0.5), 0.5);
        }
        assert!((feedback_marginal(1.0, 0.3) - 0.3).abs() < 1e-15);
        assert!((feedback_marginal(0.95, 0.2) - 0.23).abs() < 1e-12);
    }

    #[test]
    fn nu_examples() {
        assert_eq!(posterior_nu(true, 1.0, 0.5).unwrap(), 1.0);
        assert!((posterior_nu(true, 0.95, 0.5).unwrap() - 0.95).abs() < 1e-12);
        assert!((posterior_nu(false, 0.95, 0.5).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn impossible_feedback_is_an_error() {
        // pi = 1 and rho = 1: negative feedback has probability zero.
        assert!(posterior_nu(false, 1.0, 1.0).is_err());
        assert!(posterior_nu(true, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn bayes_identity(pi in 0.0f64..=1.0, rho in 0.001f64..0.999) {
            let omega = feedback_marginal(pi, rho);
            for f in [true, false] {
                let evidence = if f { omega } else { 1.0 - omega };
                if evidence == 0.0 {
                    continue;
                }
                let nu = posterior_nu(f, pi, rho).unwrap();
                let lik = if f { pi } else { 1.0 - pi };
                prop_assert!((nu * evidence - lik * rho).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn update_touches_only_one_entry() {
        let b = InclusionBelief::fresh(5, H);
        let next = update_belief(&b, 2, true).unwrap();
        for j in 0..5 {
            if j == 2 {
                assert_eq!(
                    next.entries[j],
                    BeliefEntry::Queried {
                        feedback: true,
                        nu: next.probability(2)
                    }
                );
            } else {
                assert_eq!(next.entries[j], BeliefEntry::Unqueried);
            }
        }
        assert!(matches!(
            update_belief(&next, 2, false),
            Err(Error::AlreadyQueried(2))
        ));
        assert!(update_belief(&next, 9, false).is_err());
    }

    #[test]
    fn all_positive_feedback() {
        let mut b = InclusionBelief::fresh(6, H);
        for j in 0..6 {
            b = update_belief(&b, j, true).unwrap();
        }
        assert!((0..6).all(|j| (b.probability(j) - 0.95).abs() < 1e-12));
    }

    #[test]
    fn log_replay_is_exact() {
        let mut log = FeedbackLog::new();
        let mut b = InclusionBelief::fresh(4, H);
        for (k, (j, f)) in [(3, true), (0, false), (2, true)].into_iter().enumerate() {
            b = update_belief(&b, j, f).unwrap();
            log.push(FeedbackRecord {
                iteration: k,
                statistic: j,
                feedback: f,
                source: FeedbackSource::Simulated,
                timestamp: None,
            })
            .unwrap();
        }
        let json = serde_json::to_string(&log).unwrap();
        let back: FeedbackLog = serde_json::from_str(&json).unwrap();
        let replayed = back.replay(4, H).unwrap();
        assert_eq!(replayed, b);
        assert_eq!(replayed.queried_count(), 3);
        assert!(log
            .push(FeedbackRecord {
                iteration: 3,
                statistic: 0,
                feedback: true,
                source: FeedbackSource::Human,
                timestamp: Some(1),
            })
            .is_err());
    }

    #[test]
    fn gamma_sampling_frequencies() {
        let mut rng = RngStream::new(4).rng();
        let fresh = InclusionBelief::fresh(3, H);
        let mixed = update_belief(&fresh, 0, true).unwrap();
        let draws = 10_000;
        let mut fresh_counts = [0usize; 3];
        let mut mixed_first = 0;
        for _ in 0..draws {
            let g = sample_gamma(&fresh, &mut rng);
            for j in 0..3 {
                fresh_counts[j] += g.get(j) as usize;
            }
            mixed_first += sample_gamma(&mixed, &mut rng).get(0) as usize;
        }
        for c in fresh_counts {
            assert!((c as f64 / draws as f64 - 0.5).abs() < 0.02);
        }
        assert!((mixed_first as f64 / draws as f64 - 0.95).abs() < 0.01);

        let mut certain = InclusionBelief::fresh(3, BeliefHyperparams::new(1.0, 0.5).unwrap());
        for j in 0..3 {
            certain = update_belief(&certain, j, true).unwrap();
        }
        assert!((0..100).all(|_| sample_gamma(&certain, &mut rng) == InclusionVector::ones(3)));
    }

    #[test]
    fn simulated_expert_agreement() {
        for (pi, lo, hi) in [(1.0, 1.0, 1.0), (0.95, 0.94, 0.96), (0.5, 0.49, 0.51)] {
            let mut e = simulated_expert(
                InclusionVector::from_indices(2, &[0]),
                pi,
                &RngStream::new(8),
            );
            let agree = (0..10_000).filter(|_| e.answer(0)).count() as f64 / 1e4;
            assert!(agree >= lo && agree <= hi, "pi {pi}: {agree}");
        }
    }

    fn gaussian_engine(seed: u64) -> PosteriorEngine {
        let prior = PriorBox::new(vec![(-5.0, 5.0), (0.0, 5.0)]).unwrap();
        let root = RngStream::new(seed);
        let cache = SimulationCache::build(
            &Model::Gaussian { n_obs: 500 },
            &prior,
            2000,
            &root.child("cache", 0),
        )
        .unwrap();
        let data = simulate_gaussian(&[0.0, 2.0], 500, &root.child("obs", 0)).unwrap();
        let s_obs = summarize(
            &data,
            &StatisticPool::for_model(ModelKind::Gaussian),
            &root.child("obs-noise", 0),
        )
        .unwrap();
        PosteriorEngine::new(Arc::new(cache), &s_obs, prior, AbcConfig::default()).unwrap()
    }

    #[test]
    fn point_mass_belief_matches_fixed_posterior() {
        let engine = gaussian_engine(11);
        let h = BeliefHyperparams::new(1.0, 0.5).unwrap();
        let mut belief = InclusionBelief::fresh(5, h);
        for (j, f) in [(0, true), (1, true), (2, false), (3, false), (4, false)] {
            belief = update_belief(&belief, j, f).unwrap();
        }
        let stream = RngStream::new(21);
        let mixed = sample_feedback_posterior(&engine, &belief, 4000, 64, &stream).unwrap();
        let fixed = engine
            .abc_posterior(&InclusionVector::from_indices(5, &[0, 1]), &stream)
            .unwrap();
        assert_eq!(mixed, fixed);
    }

    #[test]
    fn forced_zero_belief_gives_prior_samples() {
        let engine = gaussian_engine(12);
        let h = BeliefHyperparams::new(1.0, 0.0).unwrap();
        let belief = InclusionBelief::fresh(5, h);
        let post =
            sample_feedback_posterior(&engine, &belief, 4000, 64, &RngStream::new(1)).unwrap();
        assert_eq!(post.samples.len(), 4000);
        // Uniform on [-5, 5]: mean 0, variance 100/12.
        assert!(post.samples.column_mean(0).abs() < 0.2);
        assert!((post.samples.column_variance(0) - 100.0 / 12.0).abs() < 0.6);
    }

    #[test]
    fn allocation_keeps_size_exact() {
        let engine = gaussian_engine(13);
        let belief = InclusionBelief::fresh(5, H);
        for (n, g) in [(4000, 64), (101, 7), (3, 10)] {
            let post =
                sample_feedback_posterior(&engine, &belief, n, g, &RngStream::new(2)).unwrap();
            assert_eq!(post.samples.len(), n);
        }
        assert!(sample_feedback_posterior(&engine, &belief, 10, 0, &RngStream::new(2)).is_err());
    }
}
