//! Command-line driver.
//!
//! Every CSV starts with `#` lines holding the resolved configuration, so
//! an artifact can be regenerated from its own header. The output
//! directory is deliberately left out of the header: reruns into different
//! directories produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::blackbox::{BlackBoxModel, Dataset, LabelNoise, ModelSpec};
use crate::distributions::WidthConvention;
use crate::error::{Error, Result};
use crate::evaluation::{
    compare_sampling, coverage_calibration, lipschitz_stability, prior_sensitivity_grid, ptg_calibration,
    synthetic_suite, CoverageConfig, GroundTruthCache, PtgCalibrationConfig, StabilityArm, StabilityConfig,
    SuiteCase,
};
use crate::kernels::{Distance, ProximityKernel, DEFAULT_CLAMP_WEIGHT};
use crate::posterior::{ExplanationDocument, PriorConfig};
use crate::ptg::seed_then_estimate;
use crate::blackbox::LocalOracle;
use crate::sampling::{run, Explainer, SamplingConfig, Strategy};
use crate::space::{InstanceConfig, InstanceContext};

pub const OUT_DIR_ENV: &str = "CREDEXP_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "credexp", version, about = "Bayesian local explanations with credible intervals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one instance; writes explanation.json, explanation.csv and an SVG chart.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        no_plot: bool,
    },
    /// Estimate perturbations-to-go for one or more target widths.
    Ptg {
        #[command(flatten)]
        common: Common,
        /// Comma-separated target widths.
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.4")]
        targets: Vec<f64>,
    },
    /// Run random and focused sampling side by side and write their traces.
    CompareSampling {
        #[command(flatten)]
        common: Common,
        /// Number of paired seeds, starting at --seed.
        #[arg(long, default_value_t = 20)]
        runs: u64,
        /// Ground-truth size for the L1 column.
        #[arg(long)]
        n_gt: Option<usize>,
    },
    /// Coverage or PTG calibration on the built-in suite or a given model.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long, value_enum, default_value_t = Experiment::Coverage)]
        experiment: Experiment,
        #[arg(long, default_value_t = 100)]
        n_fit: usize,
        #[arg(long, default_value_t = 10_000)]
        n_gt: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.4")]
        targets: Vec<f64>,
    },
    /// Local Lipschitz stability: focused Bayesian fit against random-sampling fit.
    Stability {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 25)]
        neighbors: usize,
    },
    /// Coverage over a grid of prior settings.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        suite: SuiteArgs,
        #[arg(long, default_value_t = 100)]
        n_fit: usize,
        #[arg(long, default_value_t = 10_000)]
        n_gt: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.00001,0.1,1,10,100")]
        n0_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.00001,0.1,1,10,100")]
        sigma0_grid: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Coverage,
    Ptg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Exponential,
    Shapley,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceArg {
    Cosine,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyArg {
    Random,
    Focused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionArg {
    Full,
    Half,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Model spec (TOML).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Numeric CSV with a header row; supplies rows, names and baselines.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Row index into --data, comma-separated values, or an instance TOML file.
    #[arg(long)]
    pub instance: Option<String>,
    #[arg(long, value_enum, default_value_t = KernelKind::Exponential)]
    pub kernel: KernelKind,
    /// Exponential kernel width; defaults to 0.75 * sqrt(d).
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[arg(long, value_enum, default_value_t = DistanceArg::Cosine)]
    pub distance: DistanceArg,
    #[arg(long, default_value_t = DEFAULT_CLAMP_WEIGHT)]
    pub clamp_weight: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub prior_n0: f64,
    /// Prior scale of the noise variance (σ0²).
    #[arg(long, default_value_t = 1e-6)]
    pub prior_sigma0: f64,
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Random)]
    pub strategy: StrategyArg,
    /// Seed perturbations (default 50; 200 for ptg).
    #[arg(long = "S")]
    pub seed_size: Option<usize>,
    #[arg(long = "B", default_value_t = 10)]
    pub batch_size: usize,
    #[arg(long = "A", default_value_t = 500)]
    pub pool_size: usize,
    #[arg(long, default_value_t = 1000)]
    pub budget: usize,
    #[arg(long)]
    pub stop_width: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, value_enum, default_value_t = ConventionArg::Full)]
    pub ptg_convention: ConventionArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

/// Suite selection for the experiment commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SuiteArgs {
    #[arg(long, default_value_t = 8)]
    pub instances_per_case: usize,
    /// Number of seeds per instance, starting at --seed.
    #[arg(long, default_value_t = 4)]
    pub seeds: u64,
    /// Gaussian noise on the logit of every suite model.
    #[arg(long)]
    pub noise_sd: Option<f64>,
}

impl Common {
    fn convention(&self) -> WidthConvention {
        match self.ptg_convention {
            ConventionArg::Full => WidthConvention::Full,
            ConventionArg::Half => WidthConvention::Half,
        }
    }

    fn kernel(&self, d: usize) -> Result<ProximityKernel> {
        match self.kernel {
            KernelKind::Exponential => {
                let distance = match self.distance {
                    DistanceArg::Cosine => Distance::Cosine,
                    DistanceArg::L2 => Distance::L2,
                };
                ProximityKernel::exponential(self.kernel_width.unwrap_or(0.75 * (d as f64).sqrt()), distance)
            }
            KernelKind::Shapley => ProximityKernel::shapley(self.clamp_weight),
        }
    }

    fn explainer(&self, d: usize) -> Result<Explainer> {
        Explainer::new(self.kernel(d)?, PriorConfig::new(self.prior_n0, self.prior_sigma0)?, self.alpha)
    }

    fn sampling(&self, default_seed_size: usize) -> SamplingConfig {
        SamplingConfig {
            strategy: match self.strategy {
                StrategyArg::Random => Strategy::Random,
                StrategyArg::Focused => Strategy::Focused,
            },
            seed_size: self.seed_size.unwrap_or(default_seed_size),
            batch_size: self.batch_size,
            pool_size: self.pool_size,
            budget: self.budget,
            stop_width: self.stop_width,
            stop_alpha: self.alpha,
            temperature: self.temperature,
            convention: self.convention(),
            seed: self.seed,
        }
    }

    fn require_model(&self) -> Result<(BlackBoxModel, String)> {
        let path = self
            .model
            .as_ref()
            .ok_or_else(|| Error::invalid("this command needs --model"))?;
        let spec = ModelSpec::load(path)?;
        let model = spec.build()?;
        let name = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
        Ok((model, name))
    }

    fn dataset(&self) -> Result<Option<Dataset>> {
        self.data.as_deref().map(Dataset::load).transpose()
    }

    /// Resolves `--instance` against `--data`.
    fn instance(&self, data: Option<&Dataset>) -> Result<InstanceContext> {
        let sel = self
            .instance
            .as_deref()
            .ok_or_else(|| Error::invalid("this command needs --instance"))?;
        let means = data.map(Dataset::column_means);
        let names = data.map(|d| d.columns.clone());
        if sel.ends_with(".toml") {
            let mut cfg = InstanceConfig::load(Path::new(sel))?;
            if cfg.feature_names.is_none() {
                cfg.feature_names = names;
            }
            return cfg.resolve(None, means.as_deref());
        }
        let cfg = InstanceConfig {
            feature_names: names,
            ..Default::default()
        };
        if let (Ok(row), Some(d)) = (sel.parse::<usize>(), data) {
            return cfg.resolve(Some(d.row(row)?.to_vec()), means.as_deref());
        }
        let x = sel
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("--instance: `{v}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        cfg.resolve(Some(x), means.as_deref())
    }

    /// Built-in suite, or a single case from --model with --instance (or every --data row).
    fn cases(&self, suite: &SuiteArgs) -> Result<Vec<SuiteCase>> {
        if self.model.is_none() {
            let noise = suite.noise_sd.map(|sd| LabelNoise {
                sd,
                feature_sd: vec![],
                seed: self.seed,
            });
            return synthetic_suite(suite.instances_per_case, self.seed, noise.as_ref());
        }
        let (model, name) = self.require_model()?;
        let data = self.dataset()?;
        let instances = match (&self.instance, &data) {
            (Some(_), _) => vec![self.instance(data.as_ref())?],
            (None, Some(d)) => {
                let means = d.column_means();
                d.rows
                    .iter()
                    .map(|r| InstanceContext::tabular_named(r.clone(), means.clone(), d.columns.clone()))
                    .collect::<Result<Vec<_>>>()?
            }
            (None, None) => return Err(Error::invalid("--model needs --instance or --data")),
        };
        let column_range = column_range(data.as_ref(), &instances[0]);
        Ok(vec![SuiteCase {
            name,
            model,
            instances,
            column_range,
        }])
    }
}

fn column_range(data: Option<&Dataset>, ctx: &InstanceContext) -> Vec<(f64, f64)> {
    match data {
        Some(d) => (0..d.columns.len())
            .map(|j| {
                let (lo, hi) = d
                    .rows
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
                if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) }
            })
            .collect(),
        None => vec![(0.0, 1.0); ctx.d_orig()],
    }
}

/// Explainer for a suite case; the exponential width follows each case's `d`.
fn case_explainer(common: &Common, case: &SuiteCase) -> Result<Explainer> {
    common.explainer(case.instances[0].d())
}

#[derive(Serialize)]
struct Provenance<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    common: &'a Common,
    #[serde(flatten)]
    extra: T,
}

fn header<T: Serialize>(command: &str, common: &Common, extra: T) -> Result<String> {
    let prov = Provenance {
        command,
        version: env!("CARGO_PKG_VERSION"),
        common,
        extra,
    };
    let body = toml::to_string(&prov).map_err(|e| Error::state(format!("cannot render provenance: {e}")))?;
    Ok(body.lines().map(|l| format!("# {l}\n")).collect())
}

fn write_csv<R: Serialize>(path: &Path, header: &str, rows: &[R]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in rows {
        writer
            .serialize(r)
            .map_err(|e| Error::state(format!("cannot encode CSV row: {e}")))?;
    }
    let body = writer
        .into_inner()
        .map_err(|e| Error::state(format!("cannot encode CSV: {e}")))?;
    let mut out = header.as_bytes().to_vec();
    out.extend(body);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::state(format!("cannot encode JSON: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Runs a parsed command, returning the written files.
pub fn execute(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Explain { common, no_plot } => cmd_explain(&common, no_plot),
        Command::Ptg { common, targets } => cmd_ptg(&common, &targets),
        Command::CompareSampling { common, runs, n_gt } => cmd_compare(&common, runs, n_gt),
        Command::Calibrate {
            common,
            suite,
            experiment,
            n_fit,
            n_gt,
            targets,
        } => cmd_calibrate(&common, &suite, experiment, n_fit, n_gt, &targets),
        Command::Stability {
            common,
            suite,
            epsilon,
            neighbors,
        } => cmd_stability(&common, &suite, epsilon, neighbors),
        Command::Sensitivity {
            common,
            suite,
            n_fit,
            n_gt,
            n0_grid,
            sigma0_grid,
        } => cmd_sensitivity(&common, &suite, n_fit, n_gt, &n0_grid, &sigma0_grid),
    }
}

#[derive(Serialize)]
struct NoExtra {}

#[derive(Serialize)]
struct FeatureRow<'a> {
    feature: &'a str,
    phi_hat: f64,
    interval_low: f64,
    interval_high: f64,
}

fn cmd_explain(common: &Common, no_plot: bool) -> Result<Vec<PathBuf>> {
    let (model, _) = common.require_model()?;
    let data = common.dataset()?;
    let ctx = common.instance(data.as_ref())?;
    let explainer = common.explainer(ctx.d())?;
    let cfg = common.sampling(50);
    let oracle = LocalOracle::new(&model, &ctx)?;
    let (post, _) = run(&oracle, &explainer, &cfg, None)?;
    let doc = ExplanationDocument::new(&post, ctx.feature_names(), explainer.kernel.to_string(), common.seed)?;

    prepare_out(&common.out)?;
    let mut written = Vec::new();
    let json = common.out.join("explanation.json");
    write_text(&json, &to_json(&doc)?)?;
    written.push(json);

    let rows: Vec<FeatureRow> = doc
        .feature_names
        .iter()
        .enumerate()
        .map(|(i, name)| FeatureRow {
            feature: name,
            phi_hat: doc.phi_hat[i],
            interval_low: doc.interval_low[i],
            interval_high: doc.interval_high[i],
        })
        .collect();
    let csv_path = common.out.join("explanation.csv");
    write_csv(&csv_path, &header("explain", common, NoExtra {})?, &rows)?;
    written.push(csv_path);

    if !no_plot {
        let svg = common.out.join("explanation.svg");
        write_text(&svg, &render_svg(&doc))?;
        written.push(svg);
    }
    Ok(written)
}

#[derive(Serialize)]
struct PtgCsvRow {
    target_width: f64,
    #[serde(rename = "S")]
    seed_size: usize,
    s_sq: f64,
    pi_bar: f64,
    m: f64,
    raw: f64,
    #[serde(rename = "G")]
    additional: u64,
    total: u64,
    capped: bool,
}

#[derive(Serialize)]
struct PtgExtra<'a> {
    targets: &'a [f64],
}

fn cmd_ptg(common: &Common, targets: &[f64]) -> Result<Vec<PathBuf>> {
    if targets.is_empty() {
        return Err(Error::invalid("--targets must list at least one width"));
    }
    let (model, _) = common.require_model()?;
    let data = common.dataset()?;
    let ctx = common.instance(data.as_ref())?;
    let explainer = common.explainer(ctx.d())?;
    let seed_size = common.seed_size.unwrap_or(200);
    let oracle = LocalOracle::new(&model, &ctx)?;
    let rows = targets
        .iter()
        .map(|&w| {
            let est = seed_then_estimate(&oracle, &explainer, seed_size, w, common.convention(), common.seed)?;
            Ok(PtgCsvRow {
                target_width: w,
                seed_size,
                s_sq: est.inputs.s_sq,
                pi_bar: est.inputs.pi_bar,
                m: est.estimate.multiplier,
                raw: est.estimate.raw,
                additional: est.estimate.additional,
                total: est.estimate.total,
                capped: est.estimate.capped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    prepare_out(&common.out)?;
    let path = common.out.join("ptg.csv");
    write_csv(&path, &header("ptg", common, PtgExtra { targets })?, &rows)?;
    Ok(vec![path])
}

#[derive(Serialize)]
struct CompareExtra {
    runs: u64,
    n_gt: Option<usize>,
}

fn cmd_compare(common: &Common, runs: u64, n_gt: Option<usize>) -> Result<Vec<PathBuf>> {
    if runs == 0 {
        return Err(Error::invalid("--runs must be at least 1"));
    }
    let (model, _) = common.require_model()?;
    let data = common.dataset()?;
    let ctx = common.instance(data.as_ref())?;
    let explainer = common.explainer(ctx.d())?;
    let cfg = common.sampling(50);
    let seeds: Vec<u64> = (0..runs).map(|i| common.seed.wrapping_add(i)).collect();
    let cmp = compare_sampling(&model, &ctx, &explainer, &cfg, &seeds, n_gt)?;
    prepare_out(&common.out)?;
    let path = common.out.join("sampling.csv");
    write_csv(&path, &header("compare-sampling", common, CompareExtra { runs, n_gt })?, &cmp.rows())?;
    Ok(vec![path])
}

fn seed_list(common: &Common, n: u64) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::invalid("--seeds must be at least 1"));
    }
    Ok((0..n).map(|i| common.seed.wrapping_add(i)).collect())
}

#[derive(Serialize)]
struct CalibrateExtra<'a> {
    suite: &'a SuiteArgs,
    experiment: Experiment,
    n_fit: usize,
    n_gt: usize,
    targets: &'a [f64],
}

fn cmd_calibrate(
    common: &Common,
    suite: &SuiteArgs,
    experiment: Experiment,
    n_fit: usize,
    n_gt: usize,
    targets: &[f64],
) -> Result<Vec<PathBuf>> {
    let cases = common.cases(suite)?;
    let seeds = seed_list(common, suite.seeds)?;
    let head = header(
        "calibrate",
        common,
        CalibrateExtra {
            suite,
            experiment,
            n_fit,
            n_gt,
            targets,
        },
    )?;
    prepare_out(&common.out)?;
    match experiment {
        Experiment::Coverage => {
            let cfg = CoverageConfig {
                n_fit,
                n_gt,
                seeds,
                master_seed: common.seed,
            };
            let cache = GroundTruthCache::new();
            let mut rows = Vec::new();
            let mut reports = Vec::new();
            for case in &cases {
                let report = coverage_calibration(std::slice::from_ref(case), &case_explainer(common, case)?, &cfg, &cache)?;
                rows.extend(report.rows.iter().cloned());
                reports.push(report);
            }
            let covered = rows.iter().filter(|r| r.covered).count();
            let coverage = covered as f64 / rows.len() as f64;
            let summary = serde_json::json!({
                "pairs": rows.len(),
                "coverage": coverage,
                "std_error": (coverage * (1.0 - coverage) / rows.len() as f64).sqrt(),
                "alpha": common.alpha,
                "n_fit": n_fit,
                "n_gt": n_gt,
                "per_case": reports.iter().flat_map(|r| r.per_case.clone()).collect::<Vec<_>>(),
            });
            let csv_path = common.out.join("coverage.csv");
            write_csv(&csv_path, &head, &rows)?;
            let json = common.out.join("coverage_summary.json");
            write_text(&json, &to_json(&summary)?)?;
            Ok(vec![csv_path, json])
        }
        Experiment::Ptg => {
            let cfg = PtgCalibrationConfig {
                seed_size: common.seed_size.unwrap_or(200),
                targets: targets.to_vec(),
                convention: common.convention(),
                seeds,
                master_seed: common.seed,
            };
            let mut rows = Vec::new();
            for case in &cases {
                let report = ptg_calibration(std::slice::from_ref(case), &case_explainer(common, case)?, &cfg)?;
                rows.extend(report.rows);
            }
            let summary: Vec<_> = targets
                .iter()
                .map(|&w| {
                    let ratios: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.target == w)
                        .map(|r| r.observed_width / w)
                        .collect();
                    serde_json::json!({ "target": w, "runs": ratios.len(), "median_ratio": crate::posterior::median(&ratios) })
                })
                .collect();
            let csv_path = common.out.join("ptg_calibration.csv");
            write_csv(&csv_path, &head, &rows)?;
            let json = common.out.join("ptg_calibration_summary.json");
            write_text(&json, &to_json(&summary)?)?;
            Ok(vec![csv_path, json])
        }
    }
}

#[derive(Serialize)]
struct StabilityExtra<'a> {
    suite: &'a SuiteArgs,
    epsilon: f64,
    neighbors: usize,
    arm_a: &'a str,
    arm_b: &'a str,
}

fn cmd_stability(common: &Common, suite: &SuiteArgs, epsilon: f64, neighbors: usize) -> Result<Vec<PathBuf>> {
    let cases = common.cases(suite)?;
    let cfg = StabilityConfig {
        epsilon,
        n_neighbors: neighbors,
        master_seed: common.seed,
    };
    let mut rows = Vec::new();
    for case in &cases {
        let explainer = case_explainer(common, case)?;
        let focused = StabilityArm {
            explainer,
            sampling: SamplingConfig {
                strategy: Strategy::Focused,
                ..common.sampling(50)
            },
        };
        let random = StabilityArm {
            explainer,
            sampling: SamplingConfig {
                strategy: Strategy::Random,
                ..common.sampling(50)
            },
        };
        rows.extend(lipschitz_stability(std::slice::from_ref(case), &focused, &random, &cfg)?.rows);
    }
    let head = header(
        "stability",
        common,
        StabilityExtra {
            suite,
            epsilon,
            neighbors,
            arm_a: "focused",
            arm_b: "random",
        },
    )?;
    prepare_out(&common.out)?;
    let path = common.out.join("stability.csv");
    write_csv(&path, &head, &rows)?;
    Ok(vec![path])
}

#[derive(Serialize)]
struct SensitivityExtra<'a> {
    suite: &'a SuiteArgs,
    n_fit: usize,
    n_gt: usize,
    n0_grid: &'a [f64],
    sigma0_grid: &'a [f64],
}

#[derive(Serialize)]
struct SensitivityRow {
    n0: f64,
    sigma0_sq: f64,
    coverage: f64,
    std_error: f64,
    pairs: usize,
}

fn cmd_sensitivity(
    common: &Common,
    suite: &SuiteArgs,
    n_fit: usize,
    n_gt: usize,
    n0_grid: &[f64],
    sigma0_grid: &[f64],
) -> Result<Vec<PathBuf>> {
    let cases = common.cases(suite)?;
    let cfg = CoverageConfig {
        n_fit,
        n_gt,
        seeds: seed_list(common, suite.seeds)?,
        master_seed: common.seed,
    };
    let cache = GroundTruthCache::new();
    // pool the per-case grids so each case keeps its own kernel width
    let mut pooled: Vec<(f64, f64, f64, usize)> = Vec::new();
    for case in &cases {
        let cells = prior_sensitivity_grid(
            std::slice::from_ref(case),
            &case_explainer(common, case)?,
            n0_grid,
            sigma0_grid,
            &cfg,
            &cache,
        )?;
        if pooled.is_empty() {
            pooled = cells.iter().map(|c| (c.n0, c.sigma0_sq, 0.0, 0)).collect();
        }
        for (p, c) in pooled.iter_mut().zip(&cells) {
            p.2 += c.coverage * c.pairs as f64;
            p.3 += c.pairs;
        }
    }
    let rows: Vec<SensitivityRow> = pooled
        .into_iter()
        .map(|(n0, sigma0_sq, covered, pairs)| {
            let coverage = covered / pairs as f64;
            SensitivityRow {
                n0,
                sigma0_sq,
                coverage,
                std_error: (coverage * (1.0 - coverage) / pairs as f64).sqrt(),
                pairs,
            }
        })
        .collect();
    let head = header(
        "sensitivity",
        common,
        SensitivityExtra {
            suite,
            n_fit,
            n_gt,
            n0_grid,
            sigma0_grid,
        },
    )?;
    prepare_out(&common.out)?;
    let path = common.out.join("sensitivity.csv");
    write_csv(&path, &head, &rows)?;
    Ok(vec![path])
}

/// Horizontal bar chart of `φ̂` with interval whiskers, largest `|φ̂|` on top.
pub fn render_svg(doc: &ExplanationDocument) -> String {
    let mut order: Vec<usize> = (0..doc.phi_hat.len()).collect();
    order.sort_by(|&a, &b| doc.phi_hat[b].abs().total_cmp(&doc.phi_hat[a].abs()).then(a.cmp(&b)));
    let lo = doc.interval_low.iter().copied().fold(0.0f64, f64::min);
    let hi = doc.interval_high.iter().copied().fold(0.0f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (label_w, plot_w, row_h, top) = (160.0, 480.0, 26.0, 30.0);
    let x_of = |v: f64| label_w + (v - lo) / span * plot_w;
    let height = top + row_h * order.len() as f64 + 20.0;
    let width = label_w + plot_w + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{label_w}" y="18">feature importance, {}% credible interval</text>"#,
        doc.alpha * 100.0
    );
    let zero = x_of(0.0);
    let bottom = height - 20.0;
    let _ = writeln!(s, r##"<line x1="{zero:.2}" y1="{top}" x2="{zero:.2}" y2="{bottom}" stroke="#444"/>"##);
    for (row, &i) in order.iter().enumerate() {
        let y = top + row as f64 * row_h;
        let phi = doc.phi_hat[i];
        let (x0, x1) = if phi >= 0.0 { (zero, x_of(phi)) } else { (x_of(phi), zero) };
        let fill = if phi >= 0.0 { "#3b7dd8" } else { "#d8643b" };
        let mid = y + row_h / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            label_w - 6.0,
            mid + 4.0,
            escape(&doc.feature_names[i])
        );
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            y + 4.0,
            (x1 - x0).max(0.5),
            row_h - 8.0
        );
        let (wl, wh) = (x_of(doc.interval_low[i]), x_of(doc.interval_high[i]));
        let _ = writeln!(s, r##"<line x1="{wl:.2}" y1="{mid:.2}" x2="{wh:.2}" y2="{mid:.2}" stroke="#111"/>"##);
        for w in [wl, wh] {
            let _ = writeln!(
                s,
                r##"<line x1="{w:.2}" y1="{:.2}" x2="{w:.2}" y2="{:.2}" stroke="#111"/>"##,
                mid - 5.0,
                mid + 5.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Process exit code for an error: 2 for bad arguments, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => 2,
        _ => 1,
    }
}
