//! Perturbations-to-go: how many more random perturbations bring the
//! credible intervals down to a target width.
//!
//! With `m` the normal two-tailed multiplier for the chosen width
//! convention, `raw = 4 s²_S / (π̄_S (W/m)²) − S` and `G = max(0, ⌈raw⌉)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blackbox::LocalOracle;
use crate::distributions::{normal_two_tailed_multiplier, WidthConvention};
use crate::error::{Error, Result};
use crate::posterior::PosteriorExplanation;
use crate::sampling::{draw_seed, Explainer};

pub const DEFAULT_PTG_CAP: u64 = 1_000_000;
pub const MIN_SEED_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtgInputs {
    pub s_sq: f64,
    pub pi_bar: f64,
    pub seed_size: usize,
    pub target_width: f64,
    pub alpha: f64,
    pub convention: WidthConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtgEstimate {
    /// Additional perturbations `G`.
    pub additional: u64,
    pub total: u64,
    pub raw: f64,
    pub multiplier: f64,
    /// `G` hit the cap and was truncated.
    pub capped: bool,
}

pub fn estimate_ptg(inputs: &PtgInputs) -> Result<PtgEstimate> {
    estimate_ptg_capped(inputs, DEFAULT_PTG_CAP)
}

pub fn estimate_ptg_capped(inputs: &PtgInputs, cap: u64) -> Result<PtgEstimate> {
    let PtgInputs {
        s_sq,
        pi_bar,
        seed_size,
        target_width,
        alpha,
        convention,
    } = *inputs;
    if !(target_width.is_finite() && target_width > 0.0) {
        return Err(Error::invalid(format!("target width must be positive, got {target_width}")));
    }
    if seed_size < MIN_SEED_SIZE {
        return Err(Error::invalid(format!("seed size must be at least {MIN_SEED_SIZE}, got {seed_size}")));
    }
    if !(pi_bar.is_finite() && pi_bar > 0.0) {
        return Err(Error::invalid(format!("mean proximity must be positive, got {pi_bar}")));
    }
    if !(s_sq.is_finite() && s_sq >= 0.0) {
        return Err(Error::invalid(format!("s² must be finite and nonnegative, got {s_sq}")));
    }
    let multiplier = normal_two_tailed_multiplier(alpha, convention)?;
    let ratio = target_width / multiplier;
    let raw = 4.0 * s_sq / (pi_bar * ratio * ratio) - seed_size as f64;
    let wanted = raw.ceil().max(0.0);
    let capped = wanted > cap as f64;
    let additional = if capped { cap } else { wanted as u64 };
    Ok(PtgEstimate {
        additional,
        total: seed_size as u64 + additional,
        raw,
        multiplier,
        capped,
    })
}

/// Result of a seed run: the fit, the derived inputs and the estimate.
#[derive(Debug, Clone)]
pub struct SeedEstimate {
    pub posterior: PosteriorExplanation,
    pub inputs: PtgInputs,
    pub estimate: PtgEstimate,
}

/// Fits on `seed_size` random perturbations and estimates `G` for
/// `target_width` at the explainer's level.
///
/// `π̄_S` averages the seed proximities; under the Shapley kernel the
/// clamped constraint rows are left out of the average.
pub fn seed_then_estimate(
    oracle: &LocalOracle<'_>,
    explainer: &Explainer,
    seed_size: usize,
    target_width: f64,
    convention: WidthConvention,
    seed: u64,
) -> Result<SeedEstimate> {
    if seed_size < MIN_SEED_SIZE {
        return Err(Error::invalid(format!("seed size must be at least {MIN_SEED_SIZE}, got {seed_size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = draw_seed(oracle.ctx().d(), &explainer.kernel, seed_size, &mut rng)?;
    let posterior = explainer.fit_rows(oracle, &rows)?;
    let (weights, _) = explainer.kernel.weigh_all(&rows)?;
    let kept: Vec<f64> = rows
        .iter()
        .zip(&weights)
        .filter(|(z, _)| !explainer.kernel.is_clamp_row(z))
        .map(|(_, &w)| w)
        .collect();
    let pi_bar = kept.iter().sum::<f64>() / kept.len() as f64;
    let inputs = PtgInputs {
        s_sq: posterior.s_sq(),
        pi_bar,
        seed_size,
        target_width,
        alpha: explainer.alpha,
        convention,
    };
    let estimate = estimate_ptg(&inputs)?;
    Ok(SeedEstimate {
        posterior,
        inputs,
        estimate,
    })
}
