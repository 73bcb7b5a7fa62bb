//! Rejection ABC over a fixed simulation cache, with linear or ridge
//! regression adjustment in a logit-transformed parameter space.

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::samples::SampleMatrix;
use crate::simulators::{sample_prior, Model, ModelKind, ParameterVector, PriorBox};
use crate::statistics::{
    estimate_mad, summarize, NormalizationScale, StatisticPool, SummaryVector,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Relative inward clamp applied before the logit transform.
pub const BOUNDARY_CLAMP: f64 = 1e-9;

/// Condition threshold below which a regression design is treated as singular.
const SINGULAR_RATIO: f64 = 1e-10;

/// Attempts per cache row before a failing simulation aborts the build.
const SIMULATION_RETRIES: u64 = 8;

/// Binary inclusion flags `gamma` over a statistic pool.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InclusionVector(Vec<bool>);

impl InclusionVector {
    pub fn zeros(w: usize) -> Self {
        Self(vec![false; w])
    }

    pub fn ones(w: usize) -> Self {
        Self(vec![true; w])
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    pub fn from_indices(w: usize, indices: &[usize]) -> Self {
        let mut v = Self::zeros(w);
        for &j in indices {
            v.0[j] = true;
        }
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.0[j]
    }

    pub fn set(&mut self, j: usize, on: bool) {
        self.0[j] = on;
    }

    pub fn is_zero(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn included(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.0[j]).collect()
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    /// Compact `0`/`1` string, e.g. `"11000"`.
    pub fn bits(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adjustment {
    None,
    Linear,
    Ridge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    /// Acceptance fraction `n_eps / n_sim`.
    pub epsilon: f64,
    pub adjustment: Adjustment,
    /// Ridge penalty on standardized predictors.
    pub ridge_penalty: f64,
    /// Posterior sample count.
    pub n: usize,
    /// Adjust in logit space so adjusted values stay inside the prior box.
    pub logit_transform: bool,
    /// Resample with Gaussian kernel jitter in the working space instead of
    /// plain resampling with replacement.
    pub smoothing: bool,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            adjustment: Adjustment::Linear,
            ridge_penalty: 0.01,
            n: 4000,
            logit_transform: true,
            smoothing: true,
        }
    }
}

impl AbcConfig {
    pub fn validate(&self, n_sim: usize, q: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(invalid(format!("epsilon {} outside (0, 1]", self.epsilon)));
        }
        if !(self.ridge_penalty >= 0.0) {
            return Err(invalid("ridge penalty must be nonnegative"));
        }
        if self.n == 0 {
            return Err(invalid("posterior sample count must be positive"));
        }
        let n_eps = accepted_count(self.epsilon, n_sim);
        if self.adjustment != Adjustment::None && n_eps < q + 2 {
            return Err(invalid(format!(
                "regression adjustment needs at least {} accepted samples, epsilon gives {n_eps}",
                q + 2
            )));
        }
        Ok(())
    }
}

/// `ceil(epsilon * n_sim)`, robust to `epsilon * n_sim` landing a hair above
/// an integer.
pub fn accepted_count(epsilon: f64, n_sim: usize) -> usize {
    ((epsilon * n_sim as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Prior draws with their summaries, built once per run.
#[derive(Clone, Debug)]
pub struct SimulationCache {
    model: ModelKind,
    params: Vec<ParameterVector>,
    stats: Vec<Vec<f64>>,
    scale: NormalizationScale,
    normalized: Vec<f64>,
    w: usize,
    pub stream: Option<RngStream>,
}

impl SimulationCache {
    /// Simulates `n_sim` datasets at prior draws.
    pub fn build(
        model: &Model,
        prior: &PriorBox,
        n_sim: usize,
        stream: &RngStream,
    ) -> Result<Self> {
        let kind = model.kind();
        crate::error::check_len(prior.dim(), kind.q())?;
        let pool = StatisticPool::for_model(kind);
        let params = sample_prior(prior, n_sim, &stream.child("prior", 0))?;
        let mut stats = Vec::with_capacity(n_sim);
        for (i, theta) in params.iter().enumerate() {
            stats.push(
                simulate_summary(model, &pool, theta, &stream.child("simulation", i as u64))?
                    .values,
            );
        }
        let mut cache = Self::from_parts(kind, params, stats)?;
        cache.stream = Some(*stream);
        Ok(cache)
    }

    pub fn from_parts(
        model: ModelKind,
        params: Vec<ParameterVector>,
        stats: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let scale = estimate_mad(&stats)?;
        Self::with_scale(model, params, stats, scale)
    }

    pub fn with_scale(
        model: ModelKind,
        params: Vec<ParameterVector>,
        stats: Vec<Vec<f64>>,
        scale: NormalizationScale,
    ) -> Result<Self> {
        if params.len() != stats.len() || params.is_empty() {
            return Err(invalid(
                "cache needs equal, nonzero numbers of parameter and statistic rows",
            ));
        }
        let w = stats[0].len();
        crate::error::check_len(scale.0.len(), w)?;
        if scale.0.iter().any(|&s| !(s > 0.0)) {
            return Err(invalid("normalization scales must be positive"));
        }
        let mut normalized = Vec::with_capacity(stats.len() * w);
        for (row, theta) in stats.iter().zip(&params) {
            crate::error::check_len(row.len(), w)?;
            crate::error::check_len(theta.len(), model.q())?;
            normalized.extend(scale.normalize(row));
        }
        Ok(Self {
            model,
            params,
            stats,
            scale,
            normalized,
            w,
            stream: None,
        })
    }

    /// The first `n_sim` rows with freshly estimated scales. Rows are drawn
    /// independently per index, so this equals a cache built with `n_sim`
    /// on the same stream.
    pub fn prefix(&self, n_sim: usize) -> Result<Self> {
        if n_sim > self.n_sim() {
            return Err(invalid(format!(
                "prefix of {n_sim} rows from a cache of {}",
                self.n_sim()
            )));
        }
        let mut cache = Self::from_parts(
            self.model,
            self.params[..n_sim].to_vec(),
            self.stats[..n_sim].to_vec(),
        )?;
        cache.stream = self.stream;
        Ok(cache)
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn n_sim(&self) -> usize {
        self.params.len()
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn q(&self) -> usize {
        self.model.q()
    }

    pub fn params(&self) -> &[ParameterVector] {
        &self.params
    }

    pub fn stats(&self) -> &[Vec<f64>] {
        &self.stats
    }

    pub fn scale(&self) -> &NormalizationScale {
        &self.scale
    }

    pub fn normalized_row(&self, i: usize) -> &[f64] {
        &self.normalized[i * self.w..(i + 1) * self.w]
    }

    pub fn normalize(&self, s: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(s.len(), self.w)?;
        Ok(self.scale.normalize(s))
    }
}

/// Simulates one dataset and summarizes it, retrying on a fresh sub-stream when
/// the draw is degenerate (e.g. a radio-channel realization without paths).
pub fn simulate_summary(
    model: &Model,
    pool: &StatisticPool,
    theta: &[f64],
    stream: &RngStream,
) -> Result<SummaryVector> {
    let mut last = None;
    for attempt in 0..SIMULATION_RETRIES {
        let s = if attempt == 0 {
            *stream
        } else {
            stream.child("retry", attempt)
        };
        let result = model
            .simulate(theta, &s.child("data", 0))
            .and_then(|data| summarize(&data, pool, &s.child("noise", 0)));
        match result {
            Ok(v) => return Ok(v),
            Err(e @ (Error::ZeroEnergy | Error::DegenerateStatistic(_))) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Acceptance {
    pub index: usize,
    pub distance: f64,
}

fn masked_distance(row: &[f64], s_obs: &[f64], included: &[usize]) -> f64 {
    included
        .iter()
        .map(|&j| (row[j] - s_obs[j]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// The `ceil(epsilon n_sim)` cache rows closest to `s_obs` in normalized
/// Euclidean distance over the included statistics, nearest first.
pub fn rejection_abc(
    cache: &SimulationCache,
    s_obs: &[f64],
    gamma: &InclusionVector,
    epsilon: f64,
) -> Result<Vec<Acceptance>> {
    crate::error::check_len(s_obs.len(), cache.w())?;
    crate::error::check_len(gamma.len(), cache.w())?;
    if gamma.is_zero() {
        return Err(invalid(
            "rejection ABC needs at least one included statistic",
        ));
    }
    let n_eps = accepted_count(epsilon, cache.n_sim()).min(cache.n_sim());
    if n_eps < 1 {
        return Err(invalid(format!("epsilon {epsilon} accepts no samples")));
    }
    let included = gamma.included();
    let mut all: Vec<Acceptance> = (0..cache.n_sim())
        .map(|index| Acceptance {
            index,
            distance: masked_distance(cache.normalized_row(index), s_obs, &included),
        })
        .collect();
    let by_distance = |a: &Acceptance, b: &Acceptance| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.index.cmp(&b.index))
    };
    if n_eps < all.len() {
        all.select_nth_unstable_by(n_eps - 1, by_distance);
        all.truncate(n_eps);
    }
    all.sort_by(by_distance);
    Ok(all)
}

/// Coordinate-wise map between the prior box and the working space where
/// regression and smoothing happen.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTransform {
    prior: PriorBox,
    logit: bool,
}

impl ParamTransform {
    pub fn new(prior: PriorBox, logit: bool) -> Self {
        Self { prior, logit }
    }

    pub fn is_logit(&self) -> bool {
        self.logit
    }

    pub fn prior(&self) -> &PriorBox {
        &self.prior
    }

    fn limit() -> f64 {
        let p = 1.0 - BOUNDARY_CLAMP;
        (p / (1.0 - p)).ln()
    }

    pub fn forward(&self, theta: &[f64]) -> Vec<f64> {
        if !self.logit {
            return theta.to_vec();
        }
        theta
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                let u = ((x - self.prior.lo(d)) / self.prior.width(d))
                    .clamp(BOUNDARY_CLAMP, 1.0 - BOUNDARY_CLAMP);
                (u / (1.0 - u)).ln()
            })
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        if !self.logit {
            return z.to_vec();
        }
        let lim = Self::limit();
        z.iter()
            .enumerate()
            .map(|(d, &v)| {
                let u = 1.0 / (1.0 + (-v.clamp(-lim, lim)).exp());
                self.prior.lo(d) + self.prior.width(d) * u
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct AdjustmentOutcome {
    pub samples: Vec<ParameterVector>,
    /// Adjusted samples in the working space.
    pub working: Vec<Vec<f64>>,
    /// Per parameter dimension, slopes on the included statistics.
    pub slopes: Vec<Vec<f64>>,
    /// Per parameter dimension, fitted value at `s_obs` (working space).
    pub intercepts: Vec<f64>,
    /// The regression was singular and the samples were left unadjusted.
    pub fallback: bool,
}

/// Epanechnikov weights with bandwidth equal to the largest distance.
pub fn epanechnikov_weights(distances: &[f64]) -> Vec<f64> {
    let h = distances.iter().cloned().fold(0.0, f64::max);
    if h == 0.0 {
        return vec![1.0; distances.len()];
    }
    distances
        .iter()
        .map(|d| (1.0 - (d / h).powi(2)).max(0.0))
        .collect()
}

/// Local-linear regression adjustment `theta_i - b^T (s_i - s_obs)` in the
/// working space, weighted by Epanechnikov weights in distance to `s_obs`.
///
/// `stats` rows and `s_obs` are normalized full-pool vectors; only the
/// statistics switched on in `gamma` enter the regression.
pub fn adjust<R: AsRef<[f64]>>(
    theta: &[ParameterVector],
    stats: &[R],
    s_obs: &[f64],
    gamma: &InclusionVector,
    transform: &ParamTransform,
    method: Adjustment,
    penalty: f64,
) -> Result<AdjustmentOutcome> {
    if theta.len() != stats.len() || theta.is_empty() {
        return Err(invalid(
            "adjustment needs equal, nonzero numbers of samples and statistics",
        ));
    }
    let q = theta[0].len();
    let included = gamma.included();
    let p = included.len();
    let working: Vec<Vec<f64>> = theta.iter().map(|t| transform.forward(t)).collect();
    let unadjusted = |fallback| AdjustmentOutcome {
        samples: theta.to_vec(),
        working: working.clone(),
        slopes: vec![vec![0.0; p]; q],
        intercepts: vec![f64::NAN; q],
        fallback,
    };
    if method == Adjustment::None {
        return Ok(unadjusted(false));
    }

    let x: Vec<Vec<f64>> = stats
        .iter()
        .map(|row| {
            included
                .iter()
                .map(|&j| row.as_ref()[j] - s_obs[j])
                .collect()
        })
        .collect();
    let distances: Vec<f64> = x
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let weights = epanechnikov_weights(&distances);
    let effective = weights.iter().filter(|&&w| w > 0.0).count();
    if p == 0 || effective <= p + 1 {
        return Ok(unadjusted(true));
    }

    let Some(fit) = weighted_fit(&x, &working, &weights, method, penalty) else {
        return Ok(unadjusted(true));
    };

    let lim = ParamTransform::limit();
    let adjusted: Vec<Vec<f64>> = working
        .iter()
        .zip(&x)
        .map(|(z, xi)| {
            (0..q)
                .map(|d| {
                    let shift: f64 = fit.slopes[d].iter().zip(xi).map(|(b, v)| b * v).sum();
                    let v = z[d] - shift;
                    if transform.is_logit() {
                        v.clamp(-lim, lim)
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    Ok(AdjustmentOutcome {
        samples: adjusted
            .iter()
            .map(|z| ParameterVector(transform.inverse(z)))
            .collect(),
        working: adjusted,
        slopes: fit.slopes,
        intercepts: fit.intercepts,
        fallback: false,
    })
}

struct Fit {
    slopes: Vec<Vec<f64>>,
    intercepts: Vec<f64>,
}

/// Weighted least squares of every working-space column on `x`, with an
/// unpenalized intercept. `None` when the design is singular.
fn weighted_fit(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    w: &[f64],
    method: Adjustment,
    penalty: f64,
) -> Option<Fit> {
    let p = x[0].len();
    let q = y[0].len();
    let sw: f64 = w.iter().sum();
    let mut xbar = vec![0.0; p];
    let mut ybar = vec![0.0; q];
    for ((xi, yi), &wi) in x.iter().zip(y).zip(w) {
        for (a, v) in xbar.iter_mut().zip(xi) {
            *a += wi * v / sw;
        }
        for (a, v) in ybar.iter_mut().zip(yi) {
            *a += wi * v / sw;
        }
    }
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut cross = DMatrix::<f64>::zeros(p, q);
    for ((xi, yi), &wi) in x.iter().zip(y).zip(w) {
        if wi == 0.0 {
            continue;
        }
        for a in 0..p {
            let xa = xi[a] - xbar[a];
            for b in a..p {
                gram[(a, b)] += wi * xa * (xi[b] - xbar[b]);
            }
            for d in 0..q {
                cross[(a, d)] += wi * xa * (yi[d] - ybar[d]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    // Column scales of the standardized problem; zero-variance columns are
    // unidentifiable for plain least squares and get zero slope under ridge.
    let sd: Vec<f64> = (0..p).map(|a| (gram[(a, a)] / sw).sqrt()).collect();
    let live: Vec<usize> = (0..p)
        .filter(|&a| sd[a] > 0.0 && sd[a].is_finite())
        .collect();
    let ridge = method == Adjustment::Ridge;
    if live.is_empty() || (!ridge && live.len() < p) {
        return None;
    }
    let m = live.len();
    let mut corr = DMatrix::<f64>::zeros(m, m);
    for (i, &a) in live.iter().enumerate() {
        for (k, &b) in live.iter().enumerate() {
            corr[(i, k)] = gram[(a, b)] / (sw * sd[a] * sd[b]);
        }
    }
    let eig = SymmetricEigen::new(corr.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if (!ridge || penalty == 0.0) && !(lo > SINGULAR_RATIO * hi) {
        return None;
    }

    let mut slopes = vec![vec![0.0; p]; q];
    if ridge {
        let mut lhs = corr;
        for i in 0..m {
            lhs[(i, i)] += penalty;
        }
        let chol = lhs.cholesky()?;
        for d in 0..q {
            let rhs = DVector::from_iterator(m, live.iter().map(|&a| cross[(a, d)] / (sw * sd[a])));
            let beta = chol.solve(&rhs);
            for (i, &a) in live.iter().enumerate() {
                slopes[d][a] = beta[i] / sd[a];
            }
        }
    } else {
        let chol = gram.cholesky()?;
        for d in 0..q {
            let b = chol.solve(&cross.column(d).into_owned());
            for a in 0..p {
                slopes[d][a] = b[a];
            }
        }
    }
    let intercepts = (0..q)
        .map(|d| ybar[d] - slopes[d].iter().zip(&xbar).map(|(b, v)| b * v).sum::<f64>())
        .collect();
    Some(Fit { slopes, intercepts })
}

/// The accepted (and possibly adjusted) point set for one inclusion vector,
/// kept in the working space.
#[derive(Clone, Debug)]
pub struct ComponentPosterior {
    pub accepted: Vec<usize>,
    /// Accepted (adjusted) parameters on the original scale.
    pub points: Vec<ParameterVector>,
    pub working: Vec<Vec<f64>>,
    /// Per-dimension Gaussian kernel bandwidth for smoothed resampling.
    pub bandwidth: Vec<f64>,
    pub fallback: bool,
}

impl ComponentPosterior {
    fn new(
        accepted: Vec<usize>,
        points: Vec<ParameterVector>,
        working: Vec<Vec<f64>>,
        fallback: bool,
    ) -> Self {
        let bandwidth = silverman_bandwidth(&working);
        Self {
            accepted,
            points,
            working,
            bandwidth,
            fallback,
        }
    }

    fn draw_into(
        &self,
        out: &mut SampleMatrix,
        count: usize,
        transform: &ParamTransform,
        smooth: bool,
        stream: &RngStream,
    ) {
        let mut rng = stream.rng();
        let q = self.bandwidth.len();
        let mut z = vec![0.0; q];
        for _ in 0..count {
            let i = rng.random_range(0..self.working.len());
            if smooth {
                let src = &self.working[i];
                for d in 0..q {
                    z[d] = src[d] + self.bandwidth[d] * rng.sample::<f64, _>(StandardNormal);
                }
                out.push(&transform.inverse(&z));
            } else {
                out.push(&self.points[i]);
            }
        }
    }
}

/// Normal-reference bandwidth per dimension.
fn silverman_bandwidth(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len() as f64;
    let q = points[0].len();
    let factor = (4.0 / ((q as f64 + 2.0) * n)).powf(1.0 / (q as f64 + 4.0));
    (0..q)
        .map(|d| {
            if points.len() < 2 {
                return 0.0;
            }
            let m = points.iter().map(|p| p[d]).sum::<f64>() / n;
            let var = points.iter().map(|p| (p[d] - m).powi(2)).sum::<f64>() / (n - 1.0);
            var.sqrt() * factor
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    /// A single inclusion vector.
    Fixed { gamma: InclusionVector },
    /// Marginalized over the belief implied by these `(statistic, feedback)` pairs.
    Feedback {
        feedback: Vec<(usize, bool)>,
        mixture_draws: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSampleSet {
    pub samples: SampleMatrix,
    pub provenance: Provenance,
    pub config: AbcConfig,
}

/// Posterior sampler over one cache and observation; memoizes the accepted
/// point set per inclusion vector because the cache never changes within a run.
#[derive(Debug)]
pub struct PosteriorEngine {
    cache: Arc<SimulationCache>,
    s_obs: Vec<f64>,
    transform: ParamTransform,
    config: AbcConfig,
    memo: Mutex<HashMap<InclusionVector, Arc<ComponentPosterior>>>,
}

impl PosteriorEngine {
    /// `s_obs` is the raw observed summary; it is normalized with the cache scale.
    pub fn new(
        cache: Arc<SimulationCache>,
        s_obs: &SummaryVector,
        prior: PriorBox,
        config: AbcConfig,
    ) -> Result<Self> {
        crate::error::check_len(prior.dim(), cache.q())?;
        config.validate(cache.n_sim(), cache.q())?;
        let s_obs = cache.normalize(&s_obs.values)?;
        Ok(Self {
            transform: ParamTransform::new(prior, config.logit_transform),
            cache,
            s_obs,
            config,
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn cache(&self) -> &SimulationCache {
        &self.cache
    }

    pub fn config(&self) -> &AbcConfig {
        &self.config
    }

    pub fn prior(&self) -> &PriorBox {
        self.transform.prior()
    }

    pub fn q(&self) -> usize {
        self.cache.q()
    }

    pub fn w(&self) -> usize {
        self.cache.w()
    }

    /// Normalized observed statistics.
    pub fn s_obs(&self) -> &[f64] {
        &self.s_obs
    }

    pub fn component(&self, gamma: &InclusionVector) -> Result<Arc<ComponentPosterior>> {
        if let Some(c) = self.memo.lock().expect("memo lock").get(gamma) {
            return Ok(c.clone());
        }
        let accepted = rejection_abc(&self.cache, &self.s_obs, gamma, self.config.epsilon)?;
        let theta: Vec<ParameterVector> = accepted
            .iter()
            .map(|a| self.cache.params()[a.index].clone())
            .collect();
        let stats: Vec<&[f64]> = accepted
            .iter()
            .map(|a| self.cache.normalized_row(a.index))
            .collect();
        let outcome = adjust(
            &theta,
            &stats,
            &self.s_obs,
            gamma,
            &self.transform,
            self.config.adjustment,
            self.config.ridge_penalty,
        )?;
        if outcome.fallback {
            log::debug!(
                "singular regression for gamma {}; using unadjusted samples",
                gamma.bits()
            );
        }
        let component = Arc::new(ComponentPosterior::new(
            accepted.iter().map(|a| a.index).collect(),
            outcome.samples,
            outcome.working,
            outcome.fallback,
        ));
        self.memo
            .lock()
            .expect("memo lock")
            .insert(gamma.clone(), component.clone());
        Ok(component)
    }

    /// Appends `count` draws from `p_ABC(theta | y_obs, gamma)`.
    pub fn draw_into(
        &self,
        out: &mut SampleMatrix,
        gamma: &InclusionVector,
        count: usize,
        stream: &RngStream,
    ) -> Result<()> {
        crate::error::check_len(gamma.len(), self.w())?;
        if gamma.is_zero() {
            let mut rng = stream.rng();
            for _ in 0..count {
                out.push(&self.prior().draw(&mut rng));
            }
            return Ok(());
        }
        let start = out.len();
        self.component(gamma)?.draw_into(
            out,
            count,
            &self.transform,
            self.config.smoothing,
            stream,
        );
        if self.transform.is_logit() {
            for i in start..out.len() {
                assert!(
                    self.prior().contains_strictly(out.row(i)),
                    "posterior sample left the prior box: {:?}",
                    out.row(i)
                );
            }
        }
        Ok(())
    }

    pub fn abc_posterior(
        &self,
        gamma: &InclusionVector,
        stream: &RngStream,
    ) -> Result<PosteriorSampleSet> {
        let mut samples = SampleMatrix::empty(self.q());
        self.draw_into(&mut samples, gamma, self.config.n, stream)?;
        Ok(PosteriorSampleSet {
            samples,
            provenance: Provenance::Fixed {
                gamma: gamma.clone(),
            },
            config: self.config.clone(),
        })
    }
}

/// One-shot ABC posterior at a fixed inclusion vector.
pub fn abc_posterior(
    cache: Arc<SimulationCache>,
    s_obs: &SummaryVector,
    gamma: &InclusionVector,
    config: &AbcConfig,
    prior: &PriorBox,
    stream: &RngStream,
) -> Result<PosteriorSampleSet> {
    PosteriorEngine::new(cache, s_obs, prior.clone(), config.clone())?.abc_posterior(gamma, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulators::simulate_gaussian;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy_cache(n: usize, seed: u64) -> (Arc<SimulationCache>, SummaryVector, PriorBox) {
        let prior = PriorBox::new(vec![(-5.0, 5.0), (0.0, 5.0)]).unwrap();
        let model = Model::Gaussian { n_obs: 500 };
        let root = RngStream::new(seed);
        let cache = SimulationCache::build(&model, &prior, n, &root.child("cache", 0)).unwrap();
        let pool = StatisticPool::for_model(ModelKind::Gaussian);
        let data = simulate_gaussian(&[0.0, 2.0], 500, &root.child("obs", 0)).unwrap();
        let s_obs = summarize(&data, &pool, &root.child("obs-noise", 0)).unwrap();
        (Arc::new(cache), s_obs, prior)
    }

    fn line_cache() -> SimulationCache {
        let params = (0..10)
            .map(|i| ParameterVector(vec![i as f64, 1.0]))
            .collect();
        let stats = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        SimulationCache::with_scale(
            ModelKind::Gaussian,
            params,
            stats,
            NormalizationScale(vec![1.0, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn accepted_count_rounding() {
        assert_eq!(accepted_count(0.05, 2000), 100);
        assert_eq!(accepted_count(0.1, 200), 20);
        assert_eq!(accepted_count(0.01, 10_000), 100);
        assert_eq!(accepted_count(0.001, 10), 1);
    }

    #[test]
    fn epsilon_one_accepts_everything() {
        let cache = line_cache();
        let acc = rejection_abc(&cache, &[3.0, 9.0], &InclusionVector::ones(2), 1.0).unwrap();
        let mut idx: Vec<_> = acc.iter().map(|a| a.index).collect();
        idx.sort();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn exact_match_wins() {
        let cache = line_cache();
        let acc = rejection_abc(&cache, &[4.0, 16.0], &InclusionVector::ones(2), 0.1).unwrap();
        assert_eq!(acc.len(), 1);
        assert_eq!(acc[0].index, 4);
        assert_eq!(acc[0].distance, 0.0);
    }

    #[test]
    fn ties_break_by_row_index() {
        let cache = line_cache();
        // Only the first statistic: rows 3 and 5 are both at distance 1 from 4.
        let acc = rejection_abc(
            &cache,
            &[4.0, 0.0],
            &InclusionVector::from_indices(2, &[0]),
            0.3,
        )
        .unwrap();
        assert_eq!(
            acc.iter().map(|a| a.index).collect::<Vec<_>>(),
            vec![4, 3, 5]
        );
    }

    #[test]
    fn zero_gamma_rejected() {
        let cache = line_cache();
        assert!(rejection_abc(&cache, &[0.0, 0.0], &InclusionVector::zeros(2), 0.5).is_err());
        assert!(rejection_abc(&cache, &[0.0, 0.0], &InclusionVector::ones(2), 0.0).is_err());
    }

    #[test]
    fn gaussian_toy_rejection_covers_truth() {
        let mut covered = 0;
        for seed in 0..100 {
            let (cache, s_obs, _) = toy_cache(2000, 1000 + seed);
            let s = cache.normalize(&s_obs.values).unwrap();
            let acc = rejection_abc(&cache, &s, &InclusionVector::from_indices(5, &[0, 1]), 0.05)
                .unwrap();
            let inside = (0..2).all(|d| {
                let vals = acc.iter().map(|a| cache.params()[a.index][d]);
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                    (l.min(v), h.max(v))
                });
                let truth = [0.0, 2.0][d];
                lo <= truth && truth <= hi
            });
            covered += inside as usize;
        }
        assert!(covered >= 95, "covered {covered}/100");
    }

    fn transform_for(prior: &PriorBox, logit: bool) -> ParamTransform {
        ParamTransform::new(prior.clone(), logit)
    }

    #[test]
    fn adjustment_at_design_point_is_identity() {
        let prior = PriorBox::new(vec![(0.0, 10.0), (0.0, 10.0)]).unwrap();
        let theta: Vec<ParameterVector> = (0..20)
            .map(|i| ParameterVector(vec![0.3 + i as f64 * 0.4, 5.0 + (i as f64).sin()]))
            .collect();
        let stats = vec![vec![1.5, -2.0, 0.25]; 20];
        let out = adjust(
            &theta,
            &stats,
            &[1.5, -2.0, 0.25],
            &InclusionVector::ones(3),
            &transform_for(&prior, true),
            Adjustment::Linear,
            0.0,
        )
        .unwrap();
        assert_eq!(out.samples, theta);
    }

    fn affine_problem(
        logit: bool,
    ) -> (
        Vec<ParameterVector>,
        Vec<Vec<f64>>,
        [f64; 2],
        ParamTransform,
        [f64; 3],
    ) {
        // working-space theta = a + b1 s1 + b2 s2, exactly
        let prior = PriorBox::new(vec![(-50.0, 50.0)]).unwrap();
        let t = transform_for(&prior, logit);
        let coef = [0.4, 1.3, -0.7];
        let mut rng = RngStream::new(17).rng();
        let stats: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                vec![
                    rng.random::<f64>() * 2.0 - 1.0,
                    rng.random::<f64>() * 2.0 - 1.0,
                ]
            })
            .collect();
        let theta = stats
            .iter()
            .map(|s| ParameterVector(t.inverse(&[coef[0] + coef[1] * s[0] + coef[2] * s[1]])))
            .collect();
        (theta, stats, [0.1, -0.2], t, coef)
    }

    #[test]
    fn affine_data_collapses_to_prediction() {
        for logit in [false, true] {
            let (theta, stats, s_obs, t, coef) = affine_problem(logit);
            let expected = t.inverse(&[coef[0] + coef[1] * s_obs[0] + coef[2] * s_obs[1]])[0];
            for method in [Adjustment::Linear, Adjustment::Ridge] {
                let out = adjust(
                    &theta,
                    &stats,
                    &s_obs,
                    &InclusionVector::ones(2),
                    &t,
                    method,
                    0.0,
                )
                .unwrap();
                assert!(!out.fallback);
                for s in &out.samples {
                    assert!((s[0] - expected).abs() < 1e-6, "{} vs {expected}", s[0]);
                }
            }
        }
    }

    #[test]
    fn infinite_ridge_kills_slopes() {
        let (theta, stats, s_obs, t, _) = affine_problem(true);
        let out = adjust(
            &theta,
            &stats,
            &s_obs,
            &InclusionVector::ones(2),
            &t,
            Adjustment::Ridge,
            1e12,
        )
        .unwrap();
        assert!(
            out.slopes[0].iter().all(|b| b.abs() <= 1e-6),
            "{:?}",
            out.slopes
        );
    }

    #[test]
    fn linear_equals_ridge_without_penalty() {
        let (cache, s_obs, prior) = toy_cache(2000, 3);
        let s = cache.normalize(&s_obs.values).unwrap();
        let gamma = InclusionVector::ones(5);
        let acc = rejection_abc(&cache, &s, &gamma, 0.05).unwrap();
        let theta: Vec<_> = acc
            .iter()
            .map(|a| cache.params()[a.index].clone())
            .collect();
        let stats: Vec<_> = acc.iter().map(|a| cache.normalized_row(a.index)).collect();
        let t = transform_for(&prior, true);
        let lin = adjust(&theta, &stats, &s, &gamma, &t, Adjustment::Linear, 0.0).unwrap();
        let ridge = adjust(&theta, &stats, &s, &gamma, &t, Adjustment::Ridge, 0.0).unwrap();
        for (a, b) in lin.working.iter().zip(&ridge.working) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn singular_design_falls_back() {
        let prior = PriorBox::new(vec![(0.0, 1.0)]).unwrap();
        let theta: Vec<_> = (0..6)
            .map(|i| ParameterVector(vec![0.1 + 0.1 * i as f64]))
            .collect();
        // Two identical predictor columns.
        let stats: Vec<_> = (0..6).map(|i| vec![i as f64, i as f64]).collect();
        let out = adjust(
            &theta,
            &stats,
            &[0.0, 0.0],
            &InclusionVector::ones(2),
            &transform_for(&prior, true),
            Adjustment::Linear,
            0.0,
        )
        .unwrap();
        assert!(out.fallback);
        assert_eq!(out.samples, theta);
    }

    #[test]
    fn boundary_parameters_are_clamped() {
        let prior = PriorBox::new(vec![(0.0, 1.0)]).unwrap();
        let t = transform_for(&prior, true);
        let z = t.forward(&[0.0]);
        assert!(z[0].is_finite());
        let back = t.inverse(&[1e6]);
        assert!(back[0] < 1.0);
        assert!(prior.contains_strictly(&t.inverse(&[-1e6])));
    }

    #[test]
    fn zero_gamma_posterior_is_prior() {
        let (cache, s_obs, prior) = toy_cache(300, 5);
        let post = abc_posterior(
            cache,
            &s_obs,
            &InclusionVector::zeros(5),
            &AbcConfig::default(),
            &prior,
            &RngStream::new(9),
        )
        .unwrap();
        assert_eq!(post.samples.len(), 4000);
        for d in 0..2 {
            let mut u: Vec<f64> = post
                .samples
                .rows()
                .map(|r| (r[d] - prior.lo(d)) / prior.width(d))
                .collect();
            u.sort_by(f64::total_cmp);
            let n = u.len() as f64;
            let ks = u
                .iter()
                .enumerate()
                .map(|(i, &x)| ((i + 1) as f64 / n - x).abs().max((x - i as f64 / n).abs()))
                .fold(0.0, f64::max);
            assert!(ks < 0.05, "KS {ks}");
        }
    }

    #[test]
    fn full_statistics_posterior_mean() {
        let (cache, s_obs, prior) = toy_cache(2000, 6);
        let post = abc_posterior(
            cache,
            &s_obs,
            &InclusionVector::ones(5),
            &AbcConfig::default(),
            &prior,
            &RngStream::new(1),
        )
        .unwrap();
        assert!(post.samples.column_mean(0).abs() < 0.3);
        assert!(post.samples.rows().all(|r| prior.contains_strictly(r)));
    }

    #[test]
    fn posterior_is_deterministic() {
        let (cache, s_obs, prior) = toy_cache(500, 7);
        let gamma = InclusionVector::from_indices(5, &[0, 1, 3]);
        let cfg = AbcConfig::default();
        let a = abc_posterior(
            cache.clone(),
            &s_obs,
            &gamma,
            &cfg,
            &prior,
            &RngStream::new(2),
        )
        .unwrap();
        let b = abc_posterior(cache, &s_obs, &gamma, &cfg, &prior, &RngStream::new(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unadjusted_samples_come_from_the_cache() {
        let (cache, s_obs, prior) = toy_cache(500, 8);
        let cfg = AbcConfig {
            adjustment: Adjustment::None,
            smoothing: false,
            ..AbcConfig::default()
        };
        let post = abc_posterior(
            cache.clone(),
            &s_obs,
            &InclusionVector::ones(5),
            &cfg,
            &prior,
            &RngStream::new(3),
        )
        .unwrap();
        for r in post.samples.rows() {
            assert!(cache.params().iter().any(|p| p.0.as_slice() == r));
        }
    }

    #[test]
    fn infeasible_epsilon_for_adjustment_rejected() {
        let cfg = AbcConfig {
            epsilon: 0.001,
            ..AbcConfig::default()
        };
        assert!(cfg.validate(1000, 2).is_err());
        assert!(AbcConfig {
            adjustment: Adjustment::None,
            ..cfg
        }
        .validate(1000, 2)
        .is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn rejection_invariant_to_column_rescaling(seed in 0u64..1000, col in 0usize..5, factor in 0.01f64..100.0) {
            let (cache, s_obs, _) = toy_cache(200, seed);
            let gamma = InclusionVector::ones(5);
            let s = cache.normalize(&s_obs.values).unwrap();
            let base = rejection_abc(&cache, &s, &gamma, 0.1).unwrap();

            let stats: Vec<Vec<f64>> = cache.stats().iter().map(|r| {
                let mut r = r.clone();
                r[col] *= factor;
                r
            }).collect();
            let mut scale = cache.scale().clone();
            scale.0[col] *= factor;
            let scaled = SimulationCache::with_scale(ModelKind::Gaussian, cache.params().to_vec(), stats, scale).unwrap();
            let mut obs = s_obs.values.clone();
            obs[col] *= factor;
            let s2 = scaled.normalize(&obs).unwrap();
            let again = rejection_abc(&scaled, &s2, &gamma, 0.1).unwrap();
            let a: Vec<_> = base.iter().map(|a| a.index).collect();
            let b: Vec<_> = again.iter().map(|a| a.index).collect();
            prop_assert_eq!(a, b);
        }
    }
}
