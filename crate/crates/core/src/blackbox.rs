//! Queryable black boxes `f: ℝ^d_orig → [0, 1]` with query accounting.
//!
//! [`BlackBoxModel`] counts every evaluation. [`LocalOracle`] sits in front
//! of it for one instance and caches labels by binary perturbation, so the
//! model's counter only sees cache misses.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{to_original_space, BinaryPerturbation, InstanceContext};

/// Anything that maps an input vector to a probability.
///
/// Out-of-range outputs are clamped by [`BlackBoxModel`]; non-finite
/// outputs are reported as model faults.
pub trait Predictor: Send + Sync {
    fn input_dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> f64;

    /// Whether `predict` may be called from several threads at once.
    fn concurrent_safe(&self) -> bool {
        true
    }

    fn describe(&self) -> String;
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// `sigmoid(intercept + coefᵀx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLogit {
    coefficients: Vec<f64>,
    intercept: f64,
}

impl LinearLogit {
    pub fn new(coefficients: Vec<f64>, intercept: f64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("linear model needs at least one coefficient"));
        }
        if coefficients.iter().chain([&intercept]).any(|c| !c.is_finite()) {
            return Err(Error::invalid("linear model parameters must be finite"));
        }
        Ok(Self {
            coefficients,
            intercept,
        })
    }

    /// `d` inputs with only `active` coefficients nonzero.
    pub fn sparse(d: usize, active: &[usize], weights: &[f64], intercept: f64) -> Result<Self> {
        if active.len() != weights.len() {
            return Err(Error::invalid("sparse model: active indices and weights differ in length"));
        }
        let mut coef = vec![0.0; d];
        for (&i, &w) in active.iter().zip(weights) {
            if i >= d {
                return Err(Error::invalid(format!("sparse model: index {i} out of range for d = {d}")));
            }
            coef[i] = w;
        }
        Self::new(coef, intercept)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

impl Predictor for LinearLogit {
    fn input_dim(&self) -> usize {
        self.coefficients.len()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    fn describe(&self) -> String {
        format!("linear_logit(d={})", self.coefficients.len())
    }
}

/// Linear logit plus an interaction `coupling * xor(x0, x1)`, where
/// `xor(a, b) = a + b - 2ab` on `{0, 1}` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct XorNonlinear {
    linear: LinearLogit,
    coupling: f64,
}

impl XorNonlinear {
    pub fn new(coefficients: Vec<f64>, intercept: f64, coupling: f64) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(Error::invalid("xor model needs at least two inputs"));
        }
        if !coupling.is_finite() {
            return Err(Error::invalid("xor coupling must be finite"));
        }
        Ok(Self {
            linear: LinearLogit::new(coefficients, intercept)?,
            coupling,
        })
    }
}

impl Predictor for XorNonlinear {
    fn input_dim(&self) -> usize {
        self.linear.input_dim()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let xor = x[0] + x[1] - 2.0 * x[0] * x[1];
        sigmoid(self.linear.logit(x) + self.coupling * xor)
    }

    fn describe(&self) -> String {
        format!("xor_nonlinear(d={})", self.input_dim())
    }
}

/// Two-input toy surfaces on `[-10, 10]²`, min-max normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceId {
    Linear,
    Nonlinear,
}

pub const SURFACE_DOMAIN: (f64, f64) = (-10.0, 10.0);
const SURFACE_GRID: usize = 2001;

impl SurfaceId {
    pub fn raw(self, x1: f64, x2: f64) -> f64 {
        match self {
            Self::Linear => x1,
            Self::Nonlinear => (x1 / 2.0).sin() * 10.0 + (10.0 + x1 * x2 / 2.0).cos() * x1.cos(),
        }
    }

    /// Minimum and maximum of the raw surface over the domain.
    pub fn raw_range(self) -> (f64, f64) {
        match self {
            Self::Linear => SURFACE_DOMAIN,
            Self::Nonlinear => {
                static RANGE: OnceLock<(f64, f64)> = OnceLock::new();
                *RANGE.get_or_init(|| grid_range(self))
            }
        }
    }
}

fn grid_range(id: SurfaceId) -> (f64, f64) {
    let (lo, hi) = SURFACE_DOMAIN;
    let step = (hi - lo) / (SURFACE_GRID - 1) as f64;
    (0..SURFACE_GRID)
        .into_par_iter()
        .map(|i| {
            let x1 = lo + i as f64 * step;
            (0..SURFACE_GRID).fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), j| {
                let v = id.raw(x1, lo + j as f64 * step);
                (mn.min(v), mx.max(v))
            })
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        )
}

/// Normalized toy surface value; clamped to `[0, 1]` outside the domain.
pub fn toy_surface(id: SurfaceId, x1: f64, x2: f64) -> f64 {
    let (mn, mx) = id.raw_range();
    ((id.raw(x1, x2) - mn) / (mx - mn)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySurface(pub SurfaceId);

impl Predictor for ToySurface {
    fn input_dim(&self) -> usize {
        2
    }

    fn predict(&self, x: &[f64]) -> f64 {
        toy_surface(self.0, x[0], x[1])
    }

    fn describe(&self) -> String {
        let id = match self.0 {
            SurfaceId::Linear => "linear",
            SurfaceId::Nonlinear => "nonlinear",
        };
        format!("toy_surface({id})")
    }
}

/// Tree node of an ensemble file.
///
/// ```json
/// {"n_features": 1,
///  "trees": [{"feature": 0, "threshold": 0.5,
///             "left": {"leaf": 0.2}, "right": {"leaf": 0.8}}]}
/// ```
///
/// Inputs with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Leaf {
        leaf: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf } => return *leaf,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    fn validate(&self, n_features: usize, path: &str) -> Result<()> {
        match self {
            TreeNode::Leaf { leaf } if !leaf.is_finite() => {
                Err(Error::parse(path, format!("non-finite leaf value {leaf}")))
            }
            TreeNode::Leaf { .. } => Ok(()),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= n_features {
                    return Err(Error::parse(
                        path,
                        format!("field `feature`: index {feature} out of range for {n_features} features"),
                    ));
                }
                if !threshold.is_finite() {
                    return Err(Error::parse(path, "field `threshold`: must be finite"));
                }
                left.validate(n_features, path)?;
                right.validate(n_features, path)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeEnsemble {
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
}

impl TreeEnsemble {
    pub fn from_json(text: &str, source_name: &str) -> Result<Self> {
        let ens: TreeEnsemble =
            serde_json::from_str(text).map_err(|e| Error::parse(source_name, e.to_string()))?;
        if ens.trees.is_empty() {
            return Err(Error::parse(source_name, "field `trees`: ensemble is empty"));
        }
        if ens.n_features == 0 {
            return Err(Error::parse(source_name, "field `n_features`: must be at least 1"));
        }
        for (i, tree) in ens.trees.iter().enumerate() {
            tree.validate(ens.n_features, &format!("{source_name} (tree {i})"))?;
        }
        Ok(ens)
    }
}

impl Predictor for TreeEnsemble {
    fn input_dim(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.eval(x)).sum::<f64>() / self.trees.len() as f64
    }

    fn describe(&self) -> String {
        format!("tree_ensemble(trees={})", self.trees.len())
    }
}

pub fn load_tree_ensemble(path: &Path) -> Result<BlackBoxModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ens = TreeEnsemble::from_json(&text, &path.display().to_string())?;
    Ok(BlackBoxModel::new(Box::new(ens)))
}

/// Seeded Gaussian noise added on the logit scale.
///
/// The draw is a deterministic function of `(seed, input)`, so repeated
/// queries of the same input agree. Effective standard deviation:
/// `sd + Σ_j feature_sd[j] * |x_j|` in independent components.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelNoise {
    #[serde(default)]
    pub sd: f64,
    #[serde(default)]
    pub feature_sd: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl LabelNoise {
    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.sd.is_finite() && self.sd >= 0.0) {
            return Err(Error::invalid("noise sd must be finite and nonnegative"));
        }
        if !self.feature_sd.is_empty() && self.feature_sd.len() != dim {
            return Err(Error::invalid(format!(
                "feature_sd has {} entries, model has {dim} inputs",
                self.feature_sd.len()
            )));
        }
        if self.feature_sd.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("feature_sd entries must be finite and nonnegative"));
        }
        Ok(())
    }

    fn perturb(&self, x: &[f64], p: f64) -> f64 {
        let mut h = splitmix(self.seed);
        for v in x {
            h = splitmix(h ^ v.to_bits());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let mut shift = self.sd * rng.sample::<f64, _>(StandardNormal);
        for (s, v) in self.feature_sd.iter().zip(x) {
            shift += s * v.abs() * rng.sample::<f64, _>(StandardNormal);
        }
        sigmoid(logit(p) + shift)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A predictor plus evaluation counters and optional label noise.
pub struct BlackBoxModel {
    predictor: Box<dyn Predictor>,
    noise: Option<LabelNoise>,
    query_count: AtomicU64,
    clamp_events: AtomicU64,
}

impl fmt::Debug for BlackBoxModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBoxModel")
            .field("predictor", &self.predictor.describe())
            .field("noise", &self.noise)
            .field("query_count", &self.query_count())
            .finish()
    }
}

impl BlackBoxModel {
    pub fn new(predictor: Box<dyn Predictor>) -> Self {
        Self {
            predictor,
            noise: None,
            query_count: AtomicU64::new(0),
            clamp_events: AtomicU64::new(0),
        }
    }

    pub fn with_noise(mut self, noise: LabelNoise) -> Result<Self> {
        noise.validate(self.input_dim())?;
        self.noise = Some(noise);
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.predictor.input_dim()
    }

    pub fn concurrent_safe(&self) -> bool {
        self.predictor.concurrent_safe()
    }

    pub fn describe(&self) -> String {
        self.predictor.describe()
    }

    /// Model evaluations so far.
    pub fn query_count(&self) -> u64 {
        self.query_count.load(Ordering::Relaxed)
    }

    /// Outputs that fell outside `[0, 1]` and were clamped.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} values, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        self.query_count.fetch_add(1, Ordering::Relaxed);
        let mut p = self.predictor.predict(x);
        if !p.is_finite() {
            return Err(Error::ModelFault {
                input: x.to_vec(),
                value: p,
            });
        }
        if !(0.0..=1.0).contains(&p) {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
            p = p.clamp(0.0, 1.0);
        }
        if let Some(noise) = &self.noise {
            p = noise.perturb(x, p);
        }
        Ok(p)
    }

    /// Evaluates a batch; runs in parallel when the predictor allows it.
    pub fn query(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        if self.concurrent_safe() && inputs.len() > 64 {
            inputs.par_iter().map(|x| self.evaluate(x)).collect()
        } else {
            inputs.iter().map(|x| self.evaluate(x)).collect()
        }
    }
}

/// Labels for one instance, cached by binary perturbation.
pub struct LocalOracle<'a> {
    model: &'a BlackBoxModel,
    ctx: &'a InstanceContext,
    cache: Mutex<HashMap<BinaryPerturbation, f64>>,
    requests: AtomicU64,
    hits: AtomicU64,
}

impl<'a> LocalOracle<'a> {
    pub fn new(model: &'a BlackBoxModel, ctx: &'a InstanceContext) -> Result<Self> {
        if ctx.d_orig() != model.input_dim() {
            return Err(Error::invalid(format!(
                "instance has {} columns, model expects {}",
                ctx.d_orig(),
                model.input_dim()
            )));
        }
        Ok(Self {
            model,
            ctx,
            cache: Mutex::new(HashMap::new()),
            requests: AtomicU64::new(0),
            hits: AtomicU64::new(0),
        })
    }

    pub fn ctx(&self) -> &InstanceContext {
        self.ctx
    }

    pub fn model(&self) -> &BlackBoxModel {
        self.model
    }

    /// Labels requested through this oracle, hits included.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn label(&self, z: &BinaryPerturbation) -> Result<f64> {
        Ok(self.labels(std::slice::from_ref(z))?[0])
    }

    /// `f(x)`, the prediction at the explained instance.
    pub fn f_x(&self) -> Result<f64> {
        self.label(&BinaryPerturbation::ones(self.ctx.d()))
    }

    /// `f` with every feature replaced by its baseline.
    pub fn f_empty(&self) -> Result<f64> {
        self.label(&BinaryPerturbation::zeros(self.ctx.d()))
    }

    pub fn labels(&self, rows: &[BinaryPerturbation]) -> Result<Vec<f64>> {
        self.requests.fetch_add(rows.len() as u64, Ordering::Relaxed);
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        let mut missing: Vec<&BinaryPerturbation> = Vec::new();
        let mut queued = std::collections::HashSet::new();
        for z in rows {
            if !cache.contains_key(z) && queued.insert(z) {
                missing.push(z);
            }
        }
        let inputs = missing
            .iter()
            .map(|z| to_original_space(self.ctx, z))
            .collect::<Result<Vec<_>>>()?;
        let values = self.model.query(&inputs)?;
        for (z, v) in missing.iter().zip(values) {
            cache.insert((*z).clone(), v);
        }
        self.hits
            .fetch_add((rows.len() - missing.len()) as u64, Ordering::Relaxed);
        Ok(rows.iter().map(|z| cache[z]).collect())
    }
}

/// Model description as read from a TOML file.
///
/// ```toml
/// kind = "linear_logit"
/// coefficients = [1.5, -2.0, 0.5]
/// intercept = 0.1
///
/// [noise]          # optional
/// sd = 0.3
/// seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    #[serde(default)]
    pub noise: Option<LabelNoise>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    LinearLogit {
        coefficients: Vec<f64>,
        #[serde(default)]
        intercept: f64,
    },
    SparseLinear {
        d: usize,
        active: Vec<usize>,
        weights: Vec<f64>,
        #[serde(default)]
        intercept: f64,
    },
    XorNonlinear {
        coefficients: Vec<f64>,
        #[serde(default)]
        intercept: f64,
        coupling: f64,
    },
    /// Path to a JSON ensemble; relative paths resolve against the spec file.
    TreeEnsemble { path: PathBuf },
    ToySurface { surface: SurfaceId },
}

impl ModelSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: ModelSpec =
            toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        if let ModelKind::TreeEnsemble { path: p } = &mut spec.kind {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(spec)
    }

    pub fn build(&self) -> Result<BlackBoxModel> {
        let predictor: Box<dyn Predictor> = match &self.kind {
            ModelKind::LinearLogit {
                coefficients,
                intercept,
            } => Box::new(LinearLogit::new(coefficients.clone(), *intercept)?),
            ModelKind::SparseLinear {
                d,
                active,
                weights,
                intercept,
            } => Box::new(LinearLogit::sparse(*d, active, weights, *intercept)?),
            ModelKind::XorNonlinear {
                coefficients,
                intercept,
                coupling,
            } => Box::new(XorNonlinear::new(coefficients.clone(), *intercept, *coupling)?),
            ModelKind::TreeEnsemble { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Box::new(TreeEnsemble::from_json(&text, &path.display().to_string())?)
            }
            ModelKind::ToySurface { surface } => Box::new(ToySurface(*surface)),
        };
        let model = BlackBoxModel::new(predictor);
        match &self.noise {
            Some(noise) => model.with_noise(noise.clone()),
            None => Ok(model),
        }
    }
}

/// Numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(&name, format!("{other:?}")),
        })?;
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| Error::parse(&name, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::parse(&name, e.to_string()))?;
            let row = record
                .iter()
                .enumerate()
                .map(|(j, cell)| {
                    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        Error::parse(
                            &name,
                            format!("line {}, column `{}`: not a finite number: {cell:?}", i + 2, columns[j]),
                        )
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::parse(&name, "dataset has no rows"));
        }
        Ok(Self { columns, rows })
    }

    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.columns.len())
            .map(|j| self.rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }

    pub fn row(&self, i: usize) -> Result<&[f64]> {
        self.rows
            .get(i)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("row {i} out of range ({} rows)", self.rows.len())))
    }
}
