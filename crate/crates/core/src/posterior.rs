//! Conjugate Bayesian weighted least squares for local surrogates.
//!
//! Model: `y = φᵀz + ε`, `ε ~ N(0, σ²/π(z))`, `φ | σ² ~ N(0, σ² I)`,
//! `σ² ~ Scaled-Inv-χ²(n0, σ0²)`. Every quantity is computed from the
//! weighted sufficient statistics `A = ZᵀΠZ`, `b = ZᵀΠY`, `yy = YᵀΠY`:
//!
//! * `V_φ = (A + I)⁻¹`, `φ̂ = V_φ b`
//! * `s² = (yy − 2φ̂ᵀb + φ̂ᵀ(A + I)φ̂) / N`
//! * `σ² | data ~ Scaled-Inv-χ²(n0 + N, (n0 σ0² + N s²) / (n0 + N))`
//!
//! The marginal of each `φ_i` is a location-scale t with `ν = n0 + N`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{check_level, ScaledInvChiSq, StudentT3, WidthConvention};
use crate::error::{Error, Result};
use crate::space::{coalition_size, validate_weights_labels, BinaryPerturbation, PerturbationSet};

pub const DEFAULT_MC_DRAWS: usize = 10_000;
const MIN_MC_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub n0: f64,
    pub sigma0_sq: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            n0: 1e-6,
            sigma0_sq: 1e-6,
        }
    }
}

impl PriorConfig {
    pub fn new(n0: f64, sigma0_sq: f64) -> Result<Self> {
        if !(n0.is_finite() && n0 >= 0.0) {
            return Err(Error::invalid(format!("n0 must be finite and nonnegative, got {n0}")));
        }
        if !(sigma0_sq.is_finite() && sigma0_sq > 0.0) {
            return Err(Error::invalid(format!("sigma0_sq must be positive, got {sigma0_sq}")));
        }
        Ok(Self { n0, sigma0_sq })
    }
}

/// Running weighted moments of a perturbation set.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    d: usize,
    intercept: bool,
    a: DMatrix<f64>,
    b: DVector<f64>,
    yy: f64,
    n: usize,
    pi_sum: f64,
    empty_rows: usize,
    full_rows: usize,
}

impl SufficientStats {
    pub fn new(d: usize, intercept: bool) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("need at least one interpretable feature"));
        }
        let p = d + usize::from(intercept);
        Ok(Self {
            d,
            intercept,
            a: DMatrix::zeros(p, p),
            b: DVector::zeros(p),
            yy: 0.0,
            n: 0,
            pi_sum: 0.0,
            empty_rows: 0,
            full_rows: 0,
        })
    }

    pub fn from_set(set: &PerturbationSet) -> Result<Self> {
        let mut stats = Self::new(set.d(), set.has_intercept())?;
        stats.extend(set.rows(), set.weights(), set.labels())?;
        Ok(stats)
    }

    pub fn push(&mut self, z: &BinaryPerturbation, weight: f64, label: f64) -> Result<()> {
        if z.len() != self.d {
            return Err(Error::invalid(format!(
                "perturbation has {} bits, stats expect {}",
                z.len(),
                self.d
            )));
        }
        validate_weights_labels(&[weight], &[label])?;
        let x = DVector::from_vec(PerturbationSet::design_row(z, self.intercept));
        self.a.ger(weight, &x, &x, 1.0);
        self.b.axpy(weight * label, &x, 1.0);
        self.yy += weight * label * label;
        self.n += 1;
        self.pi_sum += weight;
        match coalition_size(z) {
            0 => self.empty_rows += 1,
            k if k == self.d => self.full_rows += 1,
            _ => {}
        }
        Ok(())
    }

    pub fn extend(&mut self, rows: &[BinaryPerturbation], weights: &[f64], labels: &[f64]) -> Result<()> {
        if rows.len() != weights.len() || rows.len() != labels.len() {
            return Err(Error::invalid("rows, weights and labels differ in length"));
        }
        for ((z, &w), &y) in rows.iter().zip(weights).zip(labels) {
            self.push(z, w, y)?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn pi_sum(&self) -> f64 {
        self.pi_sum
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn moment(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn yy(&self) -> f64 {
        self.yy
    }
}

/// Fitted posterior over the surrogate coefficients.
///
/// Coefficient vectors have length `d + 1` when the intercept is on, with
/// the intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorExplanation {
    phi_hat: Vec<f64>,
    v_phi: DMatrix<f64>,
    s_sq: f64,
    nu: f64,
    tau_sq: f64,
    alpha: f64,
    intervals: Vec<(f64, f64)>,
    error_density_at_zero: f64,
    n: usize,
    d: usize,
    intercept: bool,
    pi_mean: f64,
    empty_rows: usize,
    full_rows: usize,
}

/// Fits the posterior from accumulated statistics.
pub fn fit(stats: &SufficientStats, prior: &PriorConfig, alpha: f64) -> Result<PosteriorExplanation> {
    check_level(alpha)?;
    if stats.n == 0 {
        return Err(Error::invalid("cannot fit on zero perturbations"));
    }
    let p = stats.a.nrows();
    let precision = &stats.a + DMatrix::<f64>::identity(p, p);
    let chol = Cholesky::new(precision.clone())
        .ok_or_else(|| Error::state("ZᵀΠZ + I is not positive definite"))?;
    let phi = chol.solve(&stats.b);
    let v_phi = chol.inverse();

    let n = stats.n as f64;
    let quad = phi.dot(&(&precision * &phi));
    let s_sq = ((stats.yy - 2.0 * phi.dot(&stats.b) + quad) / n).max(0.0);
    let nu = prior.n0 + n;
    let tau_sq = (prior.n0 * prior.sigma0_sq + n * s_sq) / nu;

    let mut post = PosteriorExplanation {
        phi_hat: phi.iter().copied().collect(),
        v_phi,
        s_sq,
        nu,
        tau_sq,
        alpha,
        intervals: Vec::new(),
        error_density_at_zero: 0.0,
        n: stats.n,
        d: stats.d,
        intercept: stats.intercept,
        pi_mean: stats.pi_sum / n,
        empty_rows: stats.empty_rows,
        full_rows: stats.full_rows,
    };
    post.intervals = post.closed_form_intervals(alpha)?;
    post.error_density_at_zero = error_uncertainty(&post);
    Ok(post)
}

pub fn fit_set(set: &PerturbationSet, prior: &PriorConfig, alpha: f64) -> Result<PosteriorExplanation> {
    fit(&SufficientStats::from_set(set)?, prior, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalMethod {
    ClosedForm,
    MonteCarlo { n_draws: usize, seed: u64 },
}

impl PosteriorExplanation {
    /// All coefficients, intercept first when present.
    pub fn phi_hat(&self) -> &[f64] {
        &self.phi_hat
    }

    /// Coefficients of the interpretable features only.
    pub fn feature_phi(&self) -> &[f64] {
        &self.phi_hat[self.offset()..]
    }

    pub fn intercept(&self) -> Option<f64> {
        self.intercept.then(|| self.phi_hat[0])
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn v_phi(&self) -> &DMatrix<f64> {
        &self.v_phi
    }

    pub fn s_sq(&self) -> f64 {
        self.s_sq
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Posterior scale of `σ²`: `(n0 σ0² + N s²) / (n0 + N)`.
    pub fn tau_sq(&self) -> f64 {
        self.tau_sq
    }

    /// `None` when the scale is exactly zero.
    pub fn sigma_post(&self) -> Option<ScaledInvChiSq> {
        ScaledInvChiSq::new(self.nu, self.tau_sq).ok()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Intervals for every coefficient at the fitted level.
    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn feature_intervals(&self) -> &[(f64, f64)] {
        &self.intervals[self.offset()..]
    }

    pub fn error_density_at_zero(&self) -> f64 {
        self.error_density_at_zero
    }

    /// Residual scale is exactly zero, so the error density is unbounded.
    pub fn perfect_fit(&self) -> bool {
        self.tau_sq == 0.0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Mean proximity weight of the fitted rows.
    pub fn pi_mean(&self) -> f64 {
        self.pi_mean
    }

    fn offset(&self) -> usize {
        usize::from(self.intercept)
    }

    /// Same fit, intervals recomputed at another level.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut out = self.clone();
        out.intervals = self.closed_form_intervals(alpha)?;
        out.alpha = alpha;
        Ok(out)
    }

    /// Marginal of coefficient `i`; `None` for a zero-scale posterior.
    pub fn marginal(&self, i: usize) -> Option<StudentT3> {
        StudentT3::new(self.nu, self.phi_hat[i], self.v_phi[(i, i)] * self.tau_sq).ok()
    }

    fn closed_form_intervals(&self, alpha: f64) -> Result<Vec<(f64, f64)>> {
        check_level(alpha)?;
        (0..self.phi_hat.len())
            .map(|i| match self.marginal(i) {
                Some(t) => t.interval(alpha),
                None => Ok((self.phi_hat[i], self.phi_hat[i])),
            })
            .collect()
    }

    /// Largest feature interval width (intercept excluded).
    pub fn max_feature_width(&self, convention: WidthConvention) -> f64 {
        self.feature_intervals()
            .iter()
            .map(|&(lo, hi)| convention.width(lo, hi))
            .fold(0.0, f64::max)
    }

    /// Median feature interval width (intercept excluded).
    pub fn median_feature_width(&self, convention: WidthConvention) -> f64 {
        let widths: Vec<f64> = self
            .feature_intervals()
            .iter()
            .map(|&(lo, hi)| convention.width(lo, hi))
            .collect();
        median(&widths)
    }
}

/// Per-coefficient central intervals, intercept first when present.
pub fn credible_intervals(
    post: &PosteriorExplanation,
    alpha: f64,
    method: IntervalMethod,
) -> Result<Vec<(f64, f64)>> {
    check_level(alpha)?;
    match method {
        IntervalMethod::ClosedForm => post.closed_form_intervals(alpha),
        IntervalMethod::MonteCarlo { n_draws, seed } => monte_carlo_intervals(post, alpha, n_draws, seed),
    }
}

/// Draws `σ²` then `φ | σ²` jointly and reads off empirical quantiles.
fn monte_carlo_intervals(
    post: &PosteriorExplanation,
    alpha: f64,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if n_draws < MIN_MC_DRAWS {
        return Err(Error::invalid(format!(
            "monte carlo intervals need at least {MIN_MC_DRAWS} draws, got {n_draws}"
        )));
    }
    let p = post.phi_hat.len();
    let Some(sigma) = post.sigma_post() else {
        return post.closed_form_intervals(alpha);
    };
    let chol: Cholesky<f64, Dyn> = Cholesky::new(post.v_phi.clone())
        .ok_or_else(|| Error::state("posterior covariance is not positive definite"))?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = vec![Vec::with_capacity(n_draws); p];
    let mut z = DVector::zeros(p);
    for _ in 0..n_draws {
        let scale = sigma.sample_with(&mut rng).sqrt();
        for v in z.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let dev = &l * &z;
        for (i, col) in draws.iter_mut().enumerate() {
            col.push(post.phi_hat[i] + scale * dev[i]);
        }
    }
    let lo_q = 0.5 * (1.0 - alpha);
    let hi_q = 0.5 * (1.0 + alpha);
    Ok(draws
        .into_iter()
        .map(|mut col| {
            col.sort_by(f64::total_cmp);
            (quantile_sorted(&col, lo_q), quantile_sorted(&col, hi_q))
        })
        .collect())
}

/// Linear-interpolation sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Density at zero of the marginal error posterior `t_ν(0, τ²)`.
///
/// Returns `+∞` for a zero residual scale; see [`PosteriorExplanation::perfect_fit`].
pub fn error_uncertainty(post: &PosteriorExplanation) -> f64 {
    match StudentT3::new(post.nu, 0.0, post.tau_sq) {
        Ok(t) => t.pdf(0.0),
        Err(_) => f64::INFINITY,
    }
}

/// Variance of the posterior predictive `t_N(φ̂ᵀz, (zᵀV_φz + 1) s²)`.
pub fn predictive_variance(post: &PosteriorExplanation, z: &BinaryPerturbation) -> Result<f64> {
    if post.n <= 2 {
        return Err(Error::state(format!(
            "predictive variance needs more than 2 perturbations, have {}",
            post.n
        )));
    }
    if z.len() != post.d {
        return Err(Error::invalid(format!("perturbation has {} bits, fit has {}", z.len(), post.d)));
    }
    let x = DVector::from_vec(PerturbationSet::design_row(z, post.intercept));
    let leverage = x.dot(&(&post.v_phi * &x));
    let n = post.n as f64;
    Ok((leverage + 1.0) * post.s_sq * n / (n - 2.0))
}

/// `|f(x) − (φ₀ + Σφᵢ)|` for a Shapley-kernel fit.
///
/// `φ₀` is the fitted intercept; fits without one use `f_empty` as the
/// base value.
pub fn shap_additivity_residual(post: &PosteriorExplanation, f_x: f64, f_empty: f64) -> Result<f64> {
    if post.empty_rows == 0 || post.full_rows == 0 {
        return Err(Error::state(
            "additivity needs the empty and full coalitions among the fitted rows",
        ));
    }
    let base = post.intercept().unwrap_or(f_empty);
    let total: f64 = base + post.feature_phi().iter().sum::<f64>();
    Ok((f_x - total).abs())
}

/// Intercept entry of an explanation document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterceptEntry {
    pub phi_hat: f64,
    pub interval_low: f64,
    pub interval_high: f64,
}

/// Persisted form of a fitted explanation. Field order is stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationDocument {
    pub feature_names: Vec<String>,
    pub phi_hat: Vec<f64>,
    pub interval_low: Vec<f64>,
    pub interval_high: Vec<f64>,
    pub alpha: f64,
    pub s_sq: f64,
    pub nu: f64,
    /// `null` when the fit is perfect (unbounded density).
    pub error_density_at_zero: Option<f64>,
    pub perfect_fit: bool,
    #[serde(rename = "N")]
    pub n: usize,
    pub kernel: String,
    pub seed: u64,
    pub intercept: Option<InterceptEntry>,
}

impl ExplanationDocument {
    pub fn new(post: &PosteriorExplanation, feature_names: Vec<String>, kernel: String, seed: u64) -> Result<Self> {
        if feature_names.len() != post.d {
            return Err(Error::invalid(format!(
                "{} feature names for {} features",
                feature_names.len(),
                post.d
            )));
        }
        let intercept = post.intercept.then(|| InterceptEntry {
            phi_hat: post.phi_hat[0],
            interval_low: post.intervals[0].0,
            interval_high: post.intervals[0].1,
        });
        let density = post.error_density_at_zero;
        Ok(Self {
            feature_names,
            phi_hat: post.feature_phi().to_vec(),
            interval_low: post.feature_intervals().iter().map(|iv| iv.0).collect(),
            interval_high: post.feature_intervals().iter().map(|iv| iv.1).collect(),
            alpha: post.alpha,
            s_sq: post.s_sq,
            nu: post.nu,
            error_density_at_zero: density.is_finite().then_some(density),
            perfect_fit: post.perfect_fit(),
            n: post.n,
            kernel,
            seed,
            intercept,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[u8]], weights: &[f64], labels: &[f64], intercept: bool) -> PerturbationSet {
        PerturbationSet::new(
            rows.iter().map(|r| BinaryPerturbation::from_slice(r)).collect(),
            weights.to_vec(),
            labels.to_vec(),
            intercept,
        )
        .unwrap()
    }

    #[test]
    fn two_identical_rows() {
        let s = set(&[&[1], &[1]], &[1.0, 1.0], &[1.0, 1.0], false);
        let post = fit_set(&s, &PriorConfig::default(), 0.95).unwrap();
        assert!((post.v_phi()[(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
        assert!((post.phi_hat()[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((post.s_sq() - 1.0 / 3.0).abs() < 1e-14);
        assert!((post.nu() - (2.0 + 1e-6)).abs() < 1e-15);
    }

    #[test]
    fn zero_labels_give_zero_fit() {
        let s = set(&[&[1, 0], &[0, 1], &[1, 1]], &[1.0, 0.5, 0.2], &[0.0; 3], true);
        let post = fit_set(&s, &PriorConfig::default(), 0.9).unwrap();
        assert!(post.phi_hat().iter().all(|&v| v == 0.0));
        assert_eq!(post.s_sq(), 0.0);
        // prior scale keeps the error density finite
        assert!(post.error_density_at_zero().is_finite());
    }

    #[test]
    fn perfect_fit_sentinel() {
        let s = set(&[&[1, 0]], &[1.0], &[0.0], false);
        let prior = PriorConfig { n0: 0.0, sigma0_sq: 1.0 };
        let post = fit_set(&s, &prior, 0.9).unwrap();
        assert!(post.perfect_fit());
        assert_eq!(post.error_density_at_zero(), f64::INFINITY);
        assert!(post.sigma_post().is_none());
        let doc = ExplanationDocument::new(&post, vec!["a".into(), "b".into()], "k".into(), 0).unwrap();
        assert_eq!(doc.error_density_at_zero, None);
        assert!(doc.perfect_fit);
    }

    #[test]
    fn error_paths() {
        let stats = SufficientStats::new(2, true).unwrap();
        assert!(matches!(fit(&stats, &PriorConfig::default(), 0.95), Err(Error::InvalidArgument(_))));
        let mut stats = SufficientStats::new(2, true).unwrap();
        assert!(stats.push(&BinaryPerturbation::ones(2), f64::NAN, 0.5).is_err());
        assert!(stats.push(&BinaryPerturbation::ones(2), 1.0, f64::INFINITY).is_err());
        assert!(stats.push(&BinaryPerturbation::ones(3), 1.0, 0.5).is_err());
        assert!(SufficientStats::new(0, true).is_err());
        assert!(PriorConfig::new(-1.0, 1.0).is_err());
        assert!(PriorConfig::new(1.0, 0.0).is_err());
    }

    #[test]
    fn predictive_variance_requires_three_rows() {
        let s = set(&[&[1], &[1]], &[1.0, 1.0], &[1.0, 1.0], false);
        let post = fit_set(&s, &PriorConfig::default(), 0.95).unwrap();
        assert!(matches!(
            predictive_variance(&post, &BinaryPerturbation::ones(1)),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn four_copies_predictive_variance() {
        let s = set(&[&[1u8][..]; 4], &[1.0; 4], &[1.0; 4], false);
        let post = fit_set(&s, &PriorConfig::default(), 0.95).unwrap();
        assert!((post.v_phi()[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((post.phi_hat()[0] - 0.8).abs() < 1e-15);
        assert!((post.s_sq() - 0.2).abs() < 1e-14);
        // (1/5 + 1) * 0.2 * 4 / 2
        let v = predictive_variance(&post, &BinaryPerturbation::ones(1)).unwrap();
        assert!((v - 0.48).abs() < 1e-14);
        let v0 = predictive_variance(&post, &BinaryPerturbation::zeros(1)).unwrap();
        assert!((v0 - 0.2 * 2.0).abs() < 1e-14);
    }

    #[test]
    fn additivity_requires_constraint_rows() {
        let s = set(&[&[1, 0], &[0, 1], &[1, 0]], &[1.0; 3], &[0.2, 0.3, 0.2], true);
        let post = fit_set(&s, &PriorConfig::default(), 0.95).unwrap();
        assert!(matches!(shap_additivity_residual(&post, 0.5, 0.0), Err(Error::InvalidState(_))));
    }

    #[test]
    fn higher_alpha_widens_only_intervals() {
        let s = set(
            &[&[1, 0], &[0, 1], &[1, 1], &[0, 0], &[1, 0]],
            &[1.0, 0.8, 0.9, 0.5, 1.0],
            &[0.3, 0.6, 0.9, 0.1, 0.35],
            true,
        );
        let post = fit_set(&s, &PriorConfig::default(), 0.95).unwrap();
        let wide = post.with_alpha(0.99).unwrap();
        assert_eq!(post.phi_hat(), wide.phi_hat());
        for (a, b) in post.intervals().iter().zip(wide.intervals()) {
            assert!(b.0 < a.0 && a.1 < b.1);
        }
        for (i, &(lo, hi)) in post.intervals().iter().enumerate() {
            assert!(lo <= post.phi_hat()[i] && post.phi_hat()[i] <= hi);
        }
    }

    #[test]
    fn monte_carlo_rejects_few_draws() {
        let s = set(&[&[1], &[0], &[1]], &[1.0; 3], &[0.9, 0.1, 0.8], true);
        let post = fit_set(&s, &PriorConfig::default(), 0.95).unwrap();
        let method = IntervalMethod::MonteCarlo { n_draws: 99, seed: 1 };
        assert!(credible_intervals(&post, 0.95, method).is_err());
    }
}
