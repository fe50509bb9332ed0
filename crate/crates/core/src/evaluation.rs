//! Experiment harness: coverage calibration, PTG calibration, sampling
//! comparison, local-Lipschitz stability and the prior-sensitivity grid.
//!
//! Every experiment is a list of independent tasks run on the rayon pool.
//! Task `i` draws from its own stream seeded by `task_seed(master, i)`, and
//! results are collected in task order, so reports do not depend on the
//! thread count.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::{BlackBoxModel, LabelNoise, LinearLogit, LocalOracle, SurfaceId, ToySurface, XorNonlinear};
use crate::distributions::WidthConvention;
use crate::error::{Error, Result};
use crate::posterior::{median, PriorConfig};
use crate::ptg::seed_then_estimate;
use crate::sampling::{draw_seed, ground_truth, run, Explainer, SamplingConfig, SamplingTrace, Strategy};
use crate::space::{sample_with, InstanceContext};

/// Independent stream for task `index` under `master`.
pub fn task_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One black box with the instances to explain and the per-column range
/// used to normalize distances.
#[derive(Debug)]
pub struct SuiteCase {
    pub name: String,
    pub model: BlackBoxModel,
    pub instances: Vec<InstanceContext>,
    pub column_range: Vec<(f64, f64)>,
}

impl SuiteCase {
    fn unit_instances(d: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<InstanceContext>> {
        (0..n)
            .map(|_| {
                let x = (0..d).map(|_| rng.random::<f64>()).collect();
                InstanceContext::tabular(x, vec![0.5; d])
            })
            .collect()
    }
}

/// Logit noise applied to every suite model, if any.
fn attach(model: BlackBoxModel, noise: Option<&LabelNoise>) -> Result<BlackBoxModel> {
    match noise {
        Some(n) => model.with_noise(n.clone()),
        None => Ok(model),
    }
}

/// Built-in suite: linear logit (d=5), sparse linear (d=10, 3 active),
/// xor interaction (d=5) and the two toy surfaces (d=2).
///
/// Tabular instances are uniform on `[0, 1]^d` with baseline 0.5; surface
/// instances are uniform on the surface domain with baseline at the origin.
pub fn synthetic_suite(instances_per_case: usize, seed: u64, noise: Option<&LabelNoise>) -> Result<Vec<SuiteCase>> {
    if instances_per_case == 0 {
        return Err(Error::invalid("need at least one instance per case"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();

    let linear = LinearLogit::new(vec![2.0, -1.5, 1.0, -0.5, 0.25], 0.2)?;
    cases.push(SuiteCase {
        name: "linear_logit".into(),
        model: attach(BlackBoxModel::new(Box::new(linear)), noise)?,
        instances: SuiteCase::unit_instances(5, instances_per_case, &mut rng)?,
        column_range: vec![(0.0, 1.0); 5],
    });

    let sparse = LinearLogit::sparse(10, &[0, 3, 7], &[3.0, -2.0, 1.5], -0.3)?;
    cases.push(SuiteCase {
        name: "sparse_linear".into(),
        model: attach(BlackBoxModel::new(Box::new(sparse)), noise)?,
        instances: SuiteCase::unit_instances(10, instances_per_case, &mut rng)?,
        column_range: vec![(0.0, 1.0); 10],
    });

    let xor = XorNonlinear::new(vec![0.0, 0.0, 1.0, -1.0, 0.5], -2.0, 4.0)?;
    cases.push(SuiteCase {
        name: "xor_nonlinear".into(),
        model: attach(BlackBoxModel::new(Box::new(xor)), noise)?,
        instances: SuiteCase::unit_instances(5, instances_per_case, &mut rng)?,
        column_range: vec![(0.0, 1.0); 5],
    });

    for (name, id) in [("toy_linear", SurfaceId::Linear), ("toy_nonlinear", SurfaceId::Nonlinear)] {
        let instances = (0..instances_per_case)
            .map(|_| {
                let x = vec![rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
                InstanceContext::tabular(x, vec![0.0, 0.0])
            })
            .collect::<Result<Vec<_>>>()?;
        cases.push(SuiteCase {
            name: name.into(),
            model: attach(BlackBoxModel::new(Box::new(ToySurface(id))), noise)?,
            instances,
            column_range: vec![(-10.0, 10.0); 2],
        });
    }
    Ok(cases)
}

/// Ten features in two groups of five; the second group carries ten times
/// the logit noise of the first. Explained at `x = 1`, baseline 0.
pub fn heteroscedastic_case(noise_sd: f64, seed: u64) -> Result<SuiteCase> {
    let coef = vec![0.8, -0.6, 0.5, -0.4, 0.3, 0.8, -0.6, 0.5, -0.4, 0.3];
    let mut feature_sd = vec![noise_sd; 5];
    feature_sd.extend(vec![10.0 * noise_sd; 5]);
    let model = BlackBoxModel::new(Box::new(LinearLogit::new(coef, 0.0)?)).with_noise(LabelNoise {
        sd: 0.0,
        feature_sd,
        seed,
    })?;
    Ok(SuiteCase {
        name: "heteroscedastic".into(),
        model,
        instances: vec![InstanceContext::tabular(vec![1.0; 10], vec![0.0; 10])?],
        column_range: vec![(0.0, 1.0); 10],
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct TruthKey {
    case: String,
    kernel: String,
    instance: usize,
    n_gt: usize,
    seed: u64,
}

/// Ground-truth coefficients shared across experiments on the same suite.
///
/// Truths are always fitted with the uninformative prior, so every prior
/// setting is scored against the same target.
#[derive(Debug, Default)]
pub struct GroundTruthCache {
    map: Mutex<HashMap<TruthKey, Vec<f64>>>,
}

impl GroundTruthCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<TruthKey, Vec<f64>>> {
        self.map.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn get_or_fit(&self, key: &TruthKey, explainer: &Explainer, oracle: &LocalOracle<'_>) -> Result<Vec<f64>> {
        if let Some(v) = self.lock().get(key) {
            return Ok(v.clone());
        }
        let truth_explainer = Explainer {
            prior: PriorConfig::default(),
            ..*explainer
        };
        let phi = ground_truth(&truth_explainer, oracle, key.n_gt, key.seed)?.feature_phi().to_vec();
        self.lock().insert(key.clone(), phi.clone());
        Ok(phi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub n_fit: usize,
    pub n_gt: usize,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            n_fit: 100,
            n_gt: 10_000,
            seeds: (0..4).collect(),
            master_seed: 0,
        }
    }
}

/// One (instance, seed, feature) indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub case: String,
    pub instance: usize,
    pub seed: u64,
    pub feature: usize,
    pub truth: f64,
    pub phi_hat: f64,
    pub low: f64,
    pub high: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCoverage {
    pub case: String,
    pub pairs: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub trials: usize,
    pub pairs: usize,
    pub coverage: f64,
    /// Binomial standard error of `coverage`.
    pub std_error: f64,
    pub n_fit: usize,
    pub n_gt: usize,
    pub alpha: f64,
    pub per_case: Vec<CaseCoverage>,
    #[serde(skip)]
    pub rows: Vec<CoverageRow>,
}

/// Fraction of ground-truth coefficients inside their credible interval.
pub fn coverage_calibration(
    cases: &[SuiteCase],
    explainer: &Explainer,
    cfg: &CoverageConfig,
    cache: &GroundTruthCache,
) -> Result<CalibrationReport> {
    if cfg.n_fit == 0 || cfg.seeds.is_empty() {
        return Err(Error::invalid("coverage needs n_fit >= 1 and at least one seed"));
    }
    if cfg.n_gt < 10 * cfg.n_fit {
        return Err(Error::invalid(format!(
            "ground truth size {} is below 10 x n_fit ({})",
            cfg.n_gt,
            10 * cfg.n_fit
        )));
    }
    let tasks = tasks(cases, &cfg.seeds);
    let per_task: Vec<Vec<CoverageRow>> = tasks
        .par_iter()
        .enumerate()
        .map(|(t, &(c, i, seed))| {
            let case = &cases[c];
            let oracle = LocalOracle::new(&case.model, &case.instances[i])?;
            let stream = task_seed(cfg.master_seed ^ seed, t as u64);
            let key = TruthKey {
                case: case.name.clone(),
                kernel: explainer.kernel.to_string(),
                instance: i,
                n_gt: cfg.n_gt,
                seed: task_seed(cfg.master_seed ^ seed, (t as u64) | (1 << 62)),
            };
            let truth = cache.get_or_fit(&key, explainer, &oracle)?;
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let rows = draw_seed(oracle.ctx().d(), &explainer.kernel, cfg.n_fit, &mut rng)?;
            let post = explainer.fit_rows(&oracle, &rows)?;
            Ok(post
                .feature_intervals()
                .iter()
                .zip(post.feature_phi())
                .zip(&truth)
                .enumerate()
                .map(|(f, ((&(low, high), &phi_hat), &truth))| CoverageRow {
                    case: case.name.clone(),
                    instance: i,
                    seed,
                    feature: f,
                    truth,
                    phi_hat,
                    low,
                    high,
                    covered: low <= truth && truth <= high,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let rows: Vec<CoverageRow> = per_task.into_iter().flatten().collect();
    let per_case = cases
        .iter()
        .map(|case| {
            let mine: Vec<&CoverageRow> = rows.iter().filter(|r| r.case == case.name).collect();
            CaseCoverage {
                case: case.name.clone(),
                pairs: mine.len(),
                coverage: mine.iter().filter(|r| r.covered).count() as f64 / mine.len().max(1) as f64,
            }
        })
        .collect();
    let pairs = rows.len();
    let coverage = rows.iter().filter(|r| r.covered).count() as f64 / pairs as f64;
    Ok(CalibrationReport {
        trials: tasks.len(),
        pairs,
        coverage,
        std_error: (coverage * (1.0 - coverage) / pairs as f64).sqrt(),
        n_fit: cfg.n_fit,
        n_gt: cfg.n_gt,
        alpha: explainer.alpha,
        per_case,
        rows,
    })
}

fn tasks(cases: &[SuiteCase], seeds: &[u64]) -> Vec<(usize, usize, u64)> {
    let mut out = Vec::new();
    for (c, case) in cases.iter().enumerate() {
        for i in 0..case.instances.len() {
            for &s in seeds {
                out.push((c, i, s));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtgCalibrationConfig {
    pub seed_size: usize,
    pub targets: Vec<f64>,
    pub convention: WidthConvention,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
}

impl Default for PtgCalibrationConfig {
    fn default() -> Self {
        Self {
            seed_size: 200,
            targets: vec![0.05, 0.1, 0.2, 0.4],
            convention: WidthConvention::Full,
            seeds: (0..20).collect(),
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtgRow {
    pub case: String,
    pub instance: usize,
    pub seed: u64,
    pub target: f64,
    pub s_sq: f64,
    pub pi_bar: f64,
    pub multiplier: f64,
    pub raw: f64,
    pub additional: u64,
    pub total: u64,
    pub capped: bool,
    /// Median feature width after the `total` perturbations.
    pub observed_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtgTargetSummary {
    pub target: f64,
    pub runs: usize,
    pub median_additional: f64,
    pub median_observed: f64,
    /// Median over runs of observed / target.
    pub median_ratio: f64,
    pub capped_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtgCalibrationReport {
    pub seed_size: usize,
    pub alpha: f64,
    pub convention: WidthConvention,
    pub targets: Vec<PtgTargetSummary>,
    #[serde(skip)]
    pub rows: Vec<PtgRow>,
}

/// For each target: estimate `G` from a seed fit, continue the same random
/// stream for `G` more perturbations, refit, and measure the width.
pub fn ptg_calibration(
    cases: &[SuiteCase],
    explainer: &Explainer,
    cfg: &PtgCalibrationConfig,
) -> Result<PtgCalibrationReport> {
    if cfg.targets.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::invalid("ptg calibration needs targets and seeds"));
    }
    let base = tasks(cases, &cfg.seeds);
    let mut work = Vec::new();
    for (t, &task) in base.iter().enumerate() {
        for &w in &cfg.targets {
            work.push((t, task, w));
        }
    }
    let rows: Vec<PtgRow> = work
        .par_iter()
        .map(|&(t, (c, i, seed), target)| {
            let case = &cases[c];
            let oracle = LocalOracle::new(&case.model, &case.instances[i])?;
            let stream = task_seed(cfg.master_seed ^ seed, t as u64);
            let est = seed_then_estimate(&oracle, explainer, cfg.seed_size, target, cfg.convention, stream)?;
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let mut rows = draw_seed(oracle.ctx().d(), &explainer.kernel, cfg.seed_size, &mut rng)?;
            rows.extend(sample_with(oracle.ctx().d(), est.estimate.additional as usize, &mut rng));
            let post = explainer.fit_rows(&oracle, &rows)?;
            Ok(PtgRow {
                case: case.name.clone(),
                instance: i,
                seed,
                target,
                s_sq: est.inputs.s_sq,
                pi_bar: est.inputs.pi_bar,
                multiplier: est.estimate.multiplier,
                raw: est.estimate.raw,
                additional: est.estimate.additional,
                total: est.estimate.total,
                capped: est.estimate.capped,
                observed_width: post.median_feature_width(cfg.convention),
            })
        })
        .collect::<Result<_>>()?;
    let targets = cfg
        .targets
        .iter()
        .map(|&w| {
            let mine: Vec<&PtgRow> = rows.iter().filter(|r| r.target == w).collect();
            let pick = |f: &dyn Fn(&PtgRow) -> f64| median(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            PtgTargetSummary {
                target: w,
                runs: mine.len(),
                median_additional: pick(&|r| r.additional as f64),
                median_observed: pick(&|r| r.observed_width),
                median_ratio: pick(&|r| r.observed_width / r.target),
                capped_runs: mine.iter().filter(|r| r.capped).count(),
            }
        })
        .collect();
    Ok(PtgCalibrationReport {
        seed_size: cfg.seed_size,
        alpha: explainer.alpha,
        convention: cfg.convention,
        targets,
        rows,
    })
}

/// Paired random and focused runs on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingComparison {
    /// Ground-truth coefficients, when requested.
    pub reference: Option<Vec<f64>>,
    pub traces: Vec<SamplingTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub strategy: String,
    pub seed: u64,
    pub queries: u64,
    pub max_ci_width: f64,
    pub error_density: f64,
    pub l1_to_ref: Option<f64>,
}

impl SamplingComparison {
    pub fn rows(&self) -> Vec<TraceRow> {
        self.traces
            .iter()
            .flat_map(|t| {
                t.records.iter().map(move |r| TraceRow {
                    strategy: t.strategy.as_str().into(),
                    seed: t.seed,
                    queries: r.queries,
                    max_ci_width: r.max_ci_width,
                    error_density: r.error_density,
                    l1_to_ref: r.l1_to_ref,
                })
            })
            .collect()
    }

    pub fn traces_for(&self, strategy: Strategy) -> impl Iterator<Item = &SamplingTrace> {
        self.traces.iter().filter(move |t| t.strategy == strategy)
    }
}

/// Runs both strategies for every seed (random first, then focused).
///
/// With `n_gt`, a reference fit on `n_gt` random perturbations is made
/// once and every record carries its L1 distance to it.
pub fn compare_sampling(
    model: &BlackBoxModel,
    ctx: &InstanceContext,
    explainer: &Explainer,
    cfg: &SamplingConfig,
    seeds: &[u64],
    n_gt: Option<usize>,
) -> Result<SamplingComparison> {
    cfg.validate()?;
    let reference = match n_gt {
        Some(n) => {
            let oracle = LocalOracle::new(model, ctx)?;
            let truth = ground_truth(explainer, &oracle, n, task_seed(cfg.seed, u64::MAX))?;
            Some(truth.feature_phi().to_vec())
        }
        None => None,
    };
    let mut work = Vec::new();
    for &s in seeds {
        for strategy in [Strategy::Random, Strategy::Focused] {
            work.push((s, strategy));
        }
    }
    let traces = work
        .par_iter()
        .map(|&(seed, strategy)| {
            let oracle = LocalOracle::new(model, ctx)?;
            let run_cfg = SamplingConfig { strategy, seed, ..*cfg };
            let (_, trace) = run(&oracle, explainer, &run_cfg, reference.as_deref())?;
            Ok(trace)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SamplingComparison { reference, traces })
}

/// How to produce an explanation for stability scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityArm {
    pub explainer: Explainer,
    pub sampling: SamplingConfig,
}

impl StabilityArm {
    fn explain(&self, model: &BlackBoxModel, ctx: &InstanceContext, seed: u64) -> Result<Vec<f64>> {
        let oracle = LocalOracle::new(model, ctx)?;
        let cfg = SamplingConfig { seed, ..self.sampling };
        let (post, _) = run(&oracle, &self.explainer, &cfg, None)?;
        Ok(post.feature_phi().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    /// L∞ radius in min-max normalized units.
    pub epsilon: f64,
    pub n_neighbors: usize,
    pub master_seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            n_neighbors: 25,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub case: String,
    pub instance: usize,
    pub lipschitz_a: f64,
    pub lipschitz_b: f64,
    /// `100 (L_b − L_a) / L_b`; zero when both are zero.
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub n_neighbors: usize,
    pub median_improvement_pct: f64,
    pub mean_improvement_pct: f64,
    pub rows: Vec<StabilityRow>,
}

/// Local Lipschitz estimate `max_j ‖φ(x) − φ(x_j)‖₂ / ‖x − x_j‖₂` over
/// neighbors drawn uniformly from the normalized L∞ ball, for two arms.
///
/// Both arms see the same neighbors and the same sampling seeds.
pub fn lipschitz_stability(
    cases: &[SuiteCase],
    arm_a: &StabilityArm,
    arm_b: &StabilityArm,
    cfg: &StabilityConfig,
) -> Result<StabilityReport> {
    if !(cfg.epsilon.is_finite() && cfg.epsilon > 0.0) || cfg.n_neighbors == 0 {
        return Err(Error::invalid("stability needs epsilon > 0 and at least one neighbor"));
    }
    let work = tasks(cases, &[0]);
    let rows = work
        .par_iter()
        .enumerate()
        .map(|(t, &(c, i, _))| {
            let case = &cases[c];
            let ctx = &case.instances[i];
            let stream = task_seed(cfg.master_seed, t as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let scale: Vec<f64> = case.column_range.iter().map(|(lo, hi)| hi - lo).collect();
            if scale.len() != ctx.d_orig() || scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::invalid(format!("case {} has an invalid column range", case.name)));
            }
            let center_a = arm_a.explain(&case.model, ctx, stream)?;
            let center_b = arm_b.explain(&case.model, ctx, stream)?;
            let (mut la, mut lb) = (0.0f64, 0.0f64);
            for j in 0..cfg.n_neighbors {
                let (x, dist) = loop {
                    let delta: Vec<f64> = (0..scale.len())
                        .map(|_| rng.random_range(-cfg.epsilon..=cfg.epsilon))
                        .collect();
                    let dist = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if dist >= 1e-9 {
                        let x = ctx.x_original().iter().zip(&delta).zip(&scale).map(|((x, d), s)| x + d * s).collect();
                        break (x, dist);
                    }
                };
                let neighbor = ctx.with_x(x)?;
                let seed = task_seed(stream, j as u64 + 1);
                la = la.max(l2(&center_a, &arm_a.explain(&case.model, &neighbor, seed)?) / dist);
                lb = lb.max(l2(&center_b, &arm_b.explain(&case.model, &neighbor, seed)?) / dist);
            }
            Ok(StabilityRow {
                case: case.name.clone(),
                instance: i,
                lipschitz_a: la,
                lipschitz_b: lb,
                improvement_pct: if lb > 0.0 { 100.0 * (lb - la) / lb } else { 0.0 },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let imp: Vec<f64> = rows.iter().map(|r| r.improvement_pct).collect();
    Ok(StabilityReport {
        epsilon: cfg.epsilon,
        n_neighbors: cfg.n_neighbors,
        median_improvement_pct: median(&imp),
        mean_improvement_pct: imp.iter().sum::<f64>() / imp.len() as f64,
        rows,
    })
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub n0: f64,
    pub sigma0_sq: f64,
    pub coverage: f64,
    pub std_error: f64,
    pub pairs: usize,
}

/// Coverage for every `(n0, σ0²)` pair; ground truths are shared.
pub fn prior_sensitivity_grid(
    cases: &[SuiteCase],
    explainer: &Explainer,
    n0_values: &[f64],
    sigma0_values: &[f64],
    cfg: &CoverageConfig,
    cache: &GroundTruthCache,
) -> Result<Vec<SensitivityCell>> {
    if n0_values.is_empty() || sigma0_values.is_empty() {
        return Err(Error::invalid("sensitivity grid axes must be nonempty"));
    }
    let mut cells = Vec::new();
    for &n0 in n0_values {
        for &sigma0_sq in sigma0_values {
            let ex = Explainer {
                prior: PriorConfig::new(n0, sigma0_sq)?,
                ..*explainer
            };
            let report = coverage_calibration(cases, &ex, cfg, cache)?;
            cells.push(SensitivityCell {
                n0,
                sigma0_sq,
                coverage: report.coverage,
                std_error: report.std_error,
                pairs: report.pairs,
            });
        }
    }
    Ok(cells)
}
