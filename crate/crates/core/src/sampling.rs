//! Perturbation acquisition: i.i.d. random batches or focused batches
//! drawn by softmax over posterior-predictive variance.

use rand::seq::index::sample_weighted;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{check_level, WidthConvention};
use crate::error::{Error, Result};
use crate::kernels::{KernelDiagnostics, ProximityKernel};
use crate::posterior::{fit, predictive_variance, PosteriorExplanation, PriorConfig, SufficientStats};
use crate::space::{sample_with, BinaryPerturbation};
use crate::blackbox::LocalOracle;

/// Kernel, prior and level used to turn labelled perturbations into a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Explainer {
    pub kernel: ProximityKernel,
    pub prior: PriorConfig,
    pub alpha: f64,
    pub intercept: bool,
}

impl Explainer {
    pub fn new(kernel: ProximityKernel, prior: PriorConfig, alpha: f64) -> Result<Self> {
        check_level(alpha)?;
        Ok(Self {
            kernel,
            prior,
            alpha,
            intercept: true,
        })
    }

    pub fn stats(&self, d: usize) -> Result<SufficientStats> {
        SufficientStats::new(d, self.intercept)
    }

    /// Labels, weighs and accumulates `rows`.
    pub fn accumulate(
        &self,
        stats: &mut SufficientStats,
        oracle: &LocalOracle<'_>,
        rows: &[BinaryPerturbation],
    ) -> Result<KernelDiagnostics> {
        let labels = oracle.labels(rows)?;
        let (weights, diag) = self.kernel.weigh_all(rows)?;
        stats.extend(rows, &weights, &labels)?;
        Ok(diag)
    }

    pub fn fit(&self, stats: &SufficientStats) -> Result<PosteriorExplanation> {
        fit(stats, &self.prior, self.alpha)
    }

    pub fn fit_rows(&self, oracle: &LocalOracle<'_>, rows: &[BinaryPerturbation]) -> Result<PosteriorExplanation> {
        let mut stats = self.stats(oracle.ctx().d())?;
        self.accumulate(&mut stats, oracle, rows)?;
        self.fit(&stats)
    }
}

/// First `n` perturbations of a run.
///
/// Under the Shapley kernel the empty and full coalitions come first, so
/// every fit carries the additivity constraint rows.
pub fn draw_seed(d: usize, kernel: &ProximityKernel, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<BinaryPerturbation>> {
    if n == 0 {
        return Err(Error::invalid("seed size must be at least 1"));
    }
    if kernel.is_shapley() {
        if n < 2 {
            return Err(Error::invalid("shapley runs need a seed of at least 2 perturbations"));
        }
        let mut rows = vec![BinaryPerturbation::zeros(d), BinaryPerturbation::ones(d)];
        rows.extend(sample_with(d, n - 2, rng));
        Ok(rows)
    } else {
        Ok(sample_with(d, n, rng))
    }
}

/// Fit on `n` random perturbations, used as a reference explanation.
pub fn ground_truth(explainer: &Explainer, oracle: &LocalOracle<'_>, n: usize, seed: u64) -> Result<PosteriorExplanation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = draw_seed(oracle.ctx().d(), &explainer.kernel, n, &mut rng)?;
    explainer.fit_rows(oracle, &rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Random,
    Focused,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Focused => "focused",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "focused" => Ok(Strategy::Focused),
            other => Err(Error::invalid(format!("unknown strategy `{other}` (expected random or focused)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub strategy: Strategy,
    /// Seed perturbations drawn before the first fit.
    pub seed_size: usize,
    pub batch_size: usize,
    /// Candidates scored per focused batch.
    pub pool_size: usize,
    /// Maximum label requests; only whole batches are drawn.
    pub budget: usize,
    pub stop_width: Option<f64>,
    pub stop_alpha: f64,
    pub temperature: f64,
    pub convention: WidthConvention,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Random,
            seed_size: 50,
            batch_size: 10,
            pool_size: 500,
            budget: 1000,
            stop_width: None,
            stop_alpha: 0.95,
            temperature: 1.0,
            convention: WidthConvention::Full,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed_size == 0 {
            return Err(Error::invalid("seed size must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.pool_size < self.batch_size {
            return Err(Error::invalid(format!(
                "candidate pool ({}) smaller than batch size ({})",
                self.pool_size, self.batch_size
            )));
        }
        if self.budget < self.seed_size {
            return Err(Error::invalid(format!(
                "budget ({}) below seed size ({})",
                self.budget, self.seed_size
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive and finite"));
        }
        if let Some(w) = self.stop_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid("stop width must be positive"));
            }
        }
        check_level(self.stop_alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Label requests so far in this run, cache hits included.
    pub queries: u64,
    pub max_ci_width: f64,
    pub error_density: f64,
    pub l1_to_ref: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingTrace {
    pub strategy: Strategy,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    /// The run ended because `stop_width` was met.
    pub stopped_early: bool,
}

impl SamplingTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// First query count whose max width is at most `width`.
    pub fn queries_to_width(&self, width: f64) -> Option<u64> {
        self.records.iter().find(|r| r.max_ci_width <= width).map(|r| r.queries)
    }
}

/// A run that failed part-way, with the records collected before the fault.
#[derive(Debug, thiserror::Error)]
#[error("{source} (after {} trace records)", partial.records.len())]
pub struct SamplingError {
    #[source]
    pub source: Error,
    pub partial: SamplingTrace,
}

impl From<SamplingError> for Error {
    fn from(e: SamplingError) -> Self {
        e.source
    }
}

pub type SamplingResult = std::result::Result<(PosteriorExplanation, SamplingTrace), SamplingError>;

pub fn run(oracle: &LocalOracle<'_>, explainer: &Explainer, cfg: &SamplingConfig, reference: Option<&[f64]>) -> SamplingResult {
    match cfg.strategy {
        Strategy::Random => run_random(oracle, explainer, cfg, reference),
        Strategy::Focused => run_focused(oracle, explainer, cfg, reference),
    }
}

pub fn run_random(
    oracle: &LocalOracle<'_>,
    explainer: &Explainer,
    cfg: &SamplingConfig,
    reference: Option<&[f64]>,
) -> SamplingResult {
    drive(oracle, explainer, cfg, Strategy::Random, reference)
}

pub fn run_focused(
    oracle: &LocalOracle<'_>,
    explainer: &Explainer,
    cfg: &SamplingConfig,
    reference: Option<&[f64]>,
) -> SamplingResult {
    drive(oracle, explainer, cfg, Strategy::Focused, reference)
}

struct Run<'r> {
    explainer: &'r Explainer,
    cfg: &'r SamplingConfig,
    reference: Option<&'r [f64]>,
    stats: SufficientStats,
    queries: u64,
    trace: SamplingTrace,
}

impl Run<'_> {
    fn add(&mut self, oracle: &LocalOracle<'_>, rows: &[BinaryPerturbation]) -> Result<PosteriorExplanation> {
        self.explainer.accumulate(&mut self.stats, oracle, rows)?;
        self.queries += rows.len() as u64;
        let post = self.explainer.fit(&self.stats)?;
        let at_stop = if self.cfg.stop_alpha == post.alpha() {
            post.clone()
        } else {
            post.with_alpha(self.cfg.stop_alpha)?
        };
        let max_ci_width = at_stop.max_feature_width(self.cfg.convention);
        self.trace.records.push(TraceRecord {
            queries: self.queries,
            max_ci_width,
            error_density: post.error_density_at_zero(),
            l1_to_ref: self.reference.map(|r| l1(post.feature_phi(), r)),
        });
        if self.cfg.stop_width.is_some_and(|w| max_ci_width <= w) {
            self.trace.stopped_early = true;
        }
        Ok(post)
    }
}

fn drive(
    oracle: &LocalOracle<'_>,
    explainer: &Explainer,
    cfg: &SamplingConfig,
    strategy: Strategy,
    reference: Option<&[f64]>,
) -> SamplingResult {
    let trace = SamplingTrace {
        strategy,
        seed: cfg.seed,
        records: Vec::new(),
        stopped_early: false,
    };
    let fail = |source: Error, partial: SamplingTrace| SamplingError { source, partial };
    let d = oracle.ctx().d();
    if let Err(e) = cfg.validate() {
        return Err(fail(e, trace));
    }
    if let Some(r) = reference {
        if r.len() != d {
            return Err(fail(Error::invalid("reference explanation has the wrong length"), trace));
        }
    }
    let stats = match explainer.stats(d) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, trace)),
    };
    let mut run = Run {
        explainer,
        cfg,
        reference,
        stats,
        queries: 0,
        trace,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = |run: &mut Run<'_>, rng: &mut ChaCha8Rng, post: Option<&PosteriorExplanation>| -> Result<PosteriorExplanation> {
        let rows = match post {
            None => draw_seed(d, &explainer.kernel, cfg.seed_size, rng)?,
            Some(_) if strategy == Strategy::Random => sample_with(d, cfg.batch_size, rng),
            Some(p) => focused_batch(p, d, cfg, rng)?,
        };
        run.add(oracle, &rows)
    };
    let mut post = match step(&mut run, &mut rng, None) {
        Ok(p) => p,
        Err(e) => return Err(fail(e, run.trace)),
    };
    while !run.trace.stopped_early && run.queries + cfg.batch_size as u64 <= cfg.budget as u64 {
        post = match step(&mut run, &mut rng, Some(&post)) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, run.trace)),
        };
    }
    Ok((post, run.trace))
}

/// Softmax selection probabilities `∝ exp(v / temperature)`.
pub fn selection_weights(variances: &[f64], temperature: f64) -> Vec<f64> {
    let max = variances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = variances
        .iter()
        .map(|v| ((v - max) / temperature).exp().max(f64::MIN_POSITIVE))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn focused_batch(
    post: &PosteriorExplanation,
    d: usize,
    cfg: &SamplingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BinaryPerturbation>> {
    let pool = sample_with(d, cfg.pool_size, rng);
    let variances = pool
        .iter()
        .map(|z| predictive_variance(post, z))
        .collect::<Result<Vec<_>>>()?;
    let weights = selection_weights(&variances, cfg.temperature);
    let picked = sample_weighted(rng, pool.len(), |i| weights[i], cfg.batch_size)
        .map_err(|e| Error::state(format!("candidate selection failed: {e}")))?;
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// L1 distance to a ground-truth fit after each batch, for both strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCheck {
    pub reference: Vec<f64>,
    pub focused: Vec<(u64, f64)>,
    pub random: Vec<(u64, f64)>,
}

/// Runs both strategies against a reference fit on `n_gt` random
/// perturbations (seeded from `cfg.seed`).
pub fn bias_check(oracle: &LocalOracle<'_>, explainer: &Explainer, cfg: &SamplingConfig, n_gt: usize) -> Result<BiasCheck> {
    if n_gt < 10 * cfg.budget {
        return Err(Error::invalid(format!(
            "ground truth needs at least 10x the budget ({}), got {n_gt}",
            10 * cfg.budget
        )));
    }
    let truth = ground_truth(explainer, oracle, n_gt, cfg.seed ^ GROUND_TRUTH_STREAM)?;
    let reference = truth.feature_phi().to_vec();
    let curve = |trace: &SamplingTrace| -> Vec<(u64, f64)> {
        trace
            .records
            .iter()
            .map(|r| (r.queries, r.l1_to_ref.unwrap_or(f64::NAN)))
            .collect()
    };
    let (_, focused) = run_focused(oracle, explainer, cfg, Some(&reference))?;
    let (_, random) = run_random(oracle, explainer, cfg, Some(&reference))?;
    Ok(BiasCheck {
        focused: curve(&focused),
        random: curve(&random),
        reference,
    })
}

/// Mixed into a run seed to get an independent ground-truth stream.
pub const GROUND_TRUTH_STREAM: u64 = 0x6A09_E667_F3BC_C908;
