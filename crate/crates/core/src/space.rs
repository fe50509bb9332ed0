//! Binary interpretable representation of an explained instance.
//!
//! An instance `x` with `d_orig` original features is explained over `d`
//! interpretable features. Each interpretable feature owns one or more
//! original columns; a perturbation keeps an interpretable feature (bit 1)
//! or replaces its columns with the baseline (bit 0).

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One interpretable feature and the original columns it controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretableFeature {
    pub name: String,
    pub columns: Vec<usize>,
}

/// The instance being explained, plus the absent-feature baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceContext {
    x_original: Vec<f64>,
    features: Vec<InterpretableFeature>,
    baseline: Vec<f64>,
}

impl InstanceContext {
    pub fn new(
        x_original: Vec<f64>,
        features: Vec<InterpretableFeature>,
        baseline: Vec<f64>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid("instance needs at least one interpretable feature"));
        }
        if baseline.len() != x_original.len() {
            return Err(Error::invalid(format!(
                "baseline has {} values but instance has {}",
                baseline.len(),
                x_original.len()
            )));
        }
        if x_original.iter().chain(&baseline).any(|v| !v.is_finite()) {
            return Err(Error::invalid("instance and baseline values must be finite"));
        }
        let mut claimed = BTreeSet::new();
        for f in &features {
            if f.columns.is_empty() {
                return Err(Error::invalid(format!("feature '{}' maps to no column", f.name)));
            }
            for &c in &f.columns {
                if c >= x_original.len() {
                    return Err(Error::invalid(format!(
                        "feature '{}' references column {c} but instance has {} columns",
                        f.name,
                        x_original.len()
                    )));
                }
                if !claimed.insert(c) {
                    return Err(Error::invalid(format!("column {c} claimed by two features")));
                }
            }
        }
        Ok(Self {
            x_original,
            features,
            baseline,
        })
    }

    /// One interpretable feature per original column, named `x0, x1, ...`.
    pub fn tabular(x_original: Vec<f64>, baseline: Vec<f64>) -> Result<Self> {
        let names = (0..x_original.len()).map(|i| format!("x{i}")).collect();
        Self::tabular_named(x_original, baseline, names)
    }

    pub fn tabular_named(
        x_original: Vec<f64>,
        baseline: Vec<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        if names.len() != x_original.len() {
            return Err(Error::invalid(format!(
                "{} feature names for {} columns",
                names.len(),
                x_original.len()
            )));
        }
        let features = names
            .into_iter()
            .enumerate()
            .map(|(i, name)| InterpretableFeature {
                name,
                columns: vec![i],
            })
            .collect();
        Self::new(x_original, features, baseline)
    }

    /// Number of interpretable features.
    pub fn d(&self) -> usize {
        self.features.len()
    }

    pub fn d_orig(&self) -> usize {
        self.x_original.len()
    }

    pub fn x_original(&self) -> &[f64] {
        &self.x_original
    }

    pub fn baseline(&self) -> &[f64] {
        &self.baseline
    }

    pub fn features(&self) -> &[InterpretableFeature] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// Same feature map and baseline, different instance values.
    pub fn with_x(&self, x_original: Vec<f64>) -> Result<Self> {
        Self::new(x_original, self.features.clone(), self.baseline.clone())
    }
}

/// Which interpretable features are kept (`true`) or replaced (`false`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinaryPerturbation(Vec<bool>);

impl BinaryPerturbation {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn ones(d: usize) -> Self {
        Self(vec![true; d])
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![false; d])
    }

    pub fn from_slice(bits: &[u8]) -> Self {
        Self(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bits as 0.0/1.0 values.
    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::parse("perturbation", format!("unexpected character '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl fmt::Display for BinaryPerturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Number of kept features `|z|`.
pub fn coalition_size(z: &BinaryPerturbation) -> usize {
    z.0.iter().filter(|&&b| b).count()
}

/// Draws `n` perturbations with i.i.d. Bernoulli(0.5) bits.
pub fn sample_perturbations(
    ctx: &InstanceContext,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<BinaryPerturbation>> {
    if n == 0 {
        return Err(Error::invalid("perturbation count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(sample_with(ctx.d(), n, &mut rng))
}

pub(crate) fn sample_with<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Vec<BinaryPerturbation> {
    (0..n)
        .map(|_| BinaryPerturbation((0..d).map(|_| rng.random_bool(0.5)).collect()))
        .collect()
}

/// Maps a perturbation back into the model's input space.
pub fn to_original_space(ctx: &InstanceContext, z: &BinaryPerturbation) -> Result<Vec<f64>> {
    if z.len() != ctx.d() {
        return Err(Error::invalid(format!(
            "perturbation has {} bits, instance has {} interpretable features",
            z.len(),
            ctx.d()
        )));
    }
    let mut out = ctx.x_original.clone();
    for (feature, &keep) in ctx.features.iter().zip(z.bits()) {
        if !keep {
            for &c in &feature.columns {
                out[c] = ctx.baseline[c];
            }
        }
    }
    Ok(out)
}

/// Labelled, weighted perturbations ready for a surrogate fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    rows: Vec<BinaryPerturbation>,
    weights: Vec<f64>,
    labels: Vec<f64>,
    intercept: bool,
}

impl PerturbationSet {
    pub fn new(
        rows: Vec<BinaryPerturbation>,
        weights: Vec<f64>,
        labels: Vec<f64>,
        intercept: bool,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("perturbation set is empty"));
        }
        if weights.len() != rows.len() || labels.len() != rows.len() {
            return Err(Error::invalid(format!(
                "{} rows, {} weights, {} labels",
                rows.len(),
                weights.len(),
                labels.len()
            )));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows must share a nonzero width"));
        }
        validate_weights_labels(&weights, &labels)?;
        Ok(Self {
            rows,
            weights,
            labels,
            intercept,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Interpretable feature count (excludes the intercept column).
    pub fn d(&self) -> usize {
        self.rows[0].len()
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn rows(&self) -> &[BinaryPerturbation] {
        &self.rows
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Design row for `z`, with a leading 1.0 when the intercept is on.
    pub fn design_row(z: &BinaryPerturbation, intercept: bool) -> Vec<f64> {
        let mut row = Vec::with_capacity(z.len() + usize::from(intercept));
        if intercept {
            row.push(1.0);
        }
        row.extend(z.to_f64());
        row
    }
}

pub(crate) fn validate_weights_labels(weights: &[f64], labels: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::invalid(format!("proximity weight {w} is not finite and nonnegative")));
    }
    if let Some(y) = labels.iter().find(|y| !y.is_finite() || **y < 0.0 || **y > 1.0) {
        return Err(Error::invalid(format!("label {y} outside [0, 1]")));
    }
    Ok(())
}

/// Baseline policy for absent features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePolicy {
    /// Column means of the loaded dataset, zeros without one.
    #[default]
    Auto,
    Zeros,
    Means,
    Explicit,
}

/// Instance description as read from a TOML file.
///
/// ```toml
/// x = [0.4, 1.2, 3.0]
/// feature_names = ["age", "income", "debt"]
/// baseline_policy = "explicit"
/// baseline = [0.0, 0.0, 0.0]
///
/// # optional grouping; defaults to one feature per column
/// [[groups]]
/// name = "finance"
/// columns = [1, 2]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub feature_names: Option<Vec<String>>,
    #[serde(default)]
    pub baseline_policy: BaselinePolicy,
    #[serde(default)]
    pub baseline: Option<Vec<f64>>,
    #[serde(default)]
    pub groups: Option<Vec<InterpretableFeature>>,
}

impl InstanceConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    /// Resolves the config into a context. `x_override` wins over `x`;
    /// `column_means` feeds the `auto`/`means` baseline policies.
    pub fn resolve(
        &self,
        x_override: Option<Vec<f64>>,
        column_means: Option<&[f64]>,
    ) -> Result<InstanceContext> {
        let x = x_override
            .or_else(|| self.x.clone())
            .ok_or_else(|| Error::invalid("instance config has no x and no row was selected"))?;
        let baseline = match self.baseline_policy {
            BaselinePolicy::Zeros => vec![0.0; x.len()],
            BaselinePolicy::Explicit => self
                .baseline
                .clone()
                .ok_or_else(|| Error::invalid("baseline_policy = explicit needs baseline"))?,
            BaselinePolicy::Means => column_means
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::invalid("baseline_policy = means needs a dataset"))?,
            BaselinePolicy::Auto => column_means
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; x.len()]),
        };
        match &self.groups {
            Some(groups) => InstanceContext::new(x, groups.clone(), baseline),
            None => {
                let names = self
                    .feature_names
                    .clone()
                    .unwrap_or_else(|| (0..x.len()).map(|i| format!("x{i}")).collect());
                InstanceContext::tabular_named(x, baseline, names)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx4() -> InstanceContext {
        InstanceContext::tabular(vec![1.0, 2.0, 3.0, 4.0], vec![0.5; 4]).unwrap()
    }

    #[test]
    fn sampling_is_reproducible() {
        let ctx = ctx4();
        let a = sample_perturbations(&ctx, 3, 7).unwrap();
        let b = sample_perturbations(&ctx, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|z| z.len() == 4));
    }

    #[test]
    fn zero_count_rejected() {
        assert!(matches!(
            sample_perturbations(&ctx4(), 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn bernoulli_marginal_is_balanced() {
        let ctx = InstanceContext::tabular(vec![1.0], vec![0.0]).unwrap();
        let zs = sample_perturbations(&ctx, 10_000, 1).unwrap();
        let ones = zs.iter().filter(|z| z.bits()[0]).count() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&ones), "fraction {ones}");
    }

    #[test]
    fn mapping_examples() {
        let ctx = InstanceContext::tabular(vec![2.0, 5.0], vec![0.0, 0.0]).unwrap();
        let z = BinaryPerturbation::from_slice(&[1, 0]);
        assert_eq!(to_original_space(&ctx, &z).unwrap(), vec![2.0, 0.0]);
        assert_eq!(to_original_space(&ctx, &BinaryPerturbation::ones(2)).unwrap(), vec![2.0, 5.0]);
        assert_eq!(to_original_space(&ctx, &BinaryPerturbation::zeros(2)).unwrap(), vec![0.0, 0.0]);
        assert!(to_original_space(&ctx, &BinaryPerturbation::ones(3)).is_err());
    }

    #[test]
    fn grouped_features_toggle_all_columns() {
        let ctx = InstanceContext::new(
            vec![1.0, 2.0, 3.0],
            vec![
                InterpretableFeature { name: "a".into(), columns: vec![0, 2] },
                InterpretableFeature { name: "b".into(), columns: vec![1] },
            ],
            vec![9.0, 8.0, 7.0],
        )
        .unwrap();
        let out = to_original_space(&ctx, &BinaryPerturbation::from_slice(&[0, 1])).unwrap();
        assert_eq!(out, vec![9.0, 2.0, 7.0]);
    }

    #[test]
    fn context_validation() {
        assert!(InstanceContext::tabular(vec![], vec![]).is_err());
        assert!(InstanceContext::tabular(vec![1.0], vec![0.0, 0.0]).is_err());
        let dup = vec![
            InterpretableFeature { name: "a".into(), columns: vec![0] },
            InterpretableFeature { name: "b".into(), columns: vec![0] },
        ];
        assert!(InstanceContext::new(vec![1.0], dup, vec![0.0]).is_err());
        let empty = vec![InterpretableFeature { name: "a".into(), columns: vec![] }];
        assert!(InstanceContext::new(vec![1.0], empty, vec![0.0]).is_err());
    }

    #[test]
    fn popcount() {
        assert_eq!(coalition_size(&BinaryPerturbation::from_slice(&[1, 0, 1, 0])), 2);
        assert_eq!(coalition_size(&BinaryPerturbation::zeros(5)), 0);
        assert_eq!(coalition_size(&BinaryPerturbation::ones(5)), 5);
    }

    #[test]
    fn bit_string_round_trip() {
        let z = BinaryPerturbation::from_slice(&[1, 0, 0, 1, 1]);
        assert_eq!(z.to_string(), "10011");
        assert_eq!(BinaryPerturbation::parse("10011").unwrap(), z);
        assert!(BinaryPerturbation::parse("10a").is_err());
    }

    #[test]
    fn set_rejects_bad_labels() {
        let rows = vec![BinaryPerturbation::ones(2)];
        assert!(PerturbationSet::new(rows.clone(), vec![1.0], vec![1.5], true).is_err());
        assert!(PerturbationSet::new(rows.clone(), vec![f64::NAN], vec![0.5], true).is_err());
        assert!(PerturbationSet::new(rows.clone(), vec![-1.0], vec![0.5], true).is_err());
        assert!(PerturbationSet::new(rows, vec![1.0], vec![0.5], true).is_ok());
    }

    #[test]
    fn config_resolution() {
        let cfg: InstanceConfig = toml::from_str(
            r#"
            x = [1.0, 2.0]
            feature_names = ["a", "b"]
            "#,
        )
        .unwrap();
        let ctx = cfg.resolve(None, Some(&[0.5, 0.5])).unwrap();
        assert_eq!(ctx.baseline(), &[0.5, 0.5]);
        assert_eq!(ctx.feature_names(), vec!["a", "b"]);
        let ctx = cfg.resolve(None, None).unwrap();
        assert_eq!(ctx.baseline(), &[0.0, 0.0]);
        assert!(toml::from_str::<InstanceConfig>("bogus = 1").is_err());
    }
}
