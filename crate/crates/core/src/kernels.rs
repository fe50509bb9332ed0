//! Proximity weights `π_x(z)` for the surrogate fit.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{coalition_size, BinaryPerturbation};

pub const DEFAULT_CLAMP_WEIGHT: f64 = 1e6;
pub const MIN_CLAMP_WEIGHT: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Cosine,
    L2,
}

/// Weighting rule applied to every perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProximityKernel {
    /// `exp(-D(1, z)^2 / width^2)`.
    Exponential { width: f64, distance: Distance },
    /// Shapley kernel; the empty and full coalitions get `clamp_weight`.
    Shapley { clamp_weight: f64 },
}

impl ProximityKernel {
    pub fn exponential(width: f64, distance: Distance) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::invalid(format!("kernel width must be positive, got {width}")));
        }
        Ok(Self::Exponential { width, distance })
    }

    /// Cosine distance with width `0.75 * sqrt(d)`.
    pub fn exponential_default(d: usize) -> Self {
        Self::Exponential {
            width: 0.75 * (d as f64).sqrt(),
            distance: Distance::Cosine,
        }
    }

    pub fn shapley(clamp_weight: f64) -> Result<Self> {
        if !(clamp_weight.is_finite() && clamp_weight >= MIN_CLAMP_WEIGHT) {
            return Err(Error::invalid(format!(
                "clamp weight must be finite and at least {MIN_CLAMP_WEIGHT}, got {clamp_weight}"
            )));
        }
        Ok(Self::Shapley { clamp_weight })
    }

    pub fn shapley_default() -> Self {
        Self::Shapley {
            clamp_weight: DEFAULT_CLAMP_WEIGHT,
        }
    }

    pub fn is_shapley(&self) -> bool {
        matches!(self, Self::Shapley { .. })
    }

    /// True when `z` is one of the clamped constraint coalitions.
    pub fn is_clamp_row(&self, z: &BinaryPerturbation) -> bool {
        match self {
            Self::Shapley { .. } => {
                let k = coalition_size(z);
                k == 0 || k == z.len()
            }
            Self::Exponential { .. } => false,
        }
    }

    pub fn weight(&self, z: &BinaryPerturbation) -> Result<f64> {
        match self {
            Self::Exponential { .. } => {
                Ok(exponential_weight(self, &BinaryPerturbation::ones(z.len()), z)?.value)
            }
            Self::Shapley { .. } => shapley_weight(self, z.len(), coalition_size(z)),
        }
    }

    /// Weighs a batch, counting degenerate-distance events.
    pub fn weigh_all(&self, rows: &[BinaryPerturbation]) -> Result<(Vec<f64>, KernelDiagnostics)> {
        let mut diag = KernelDiagnostics::default();
        let mut out = Vec::with_capacity(rows.len());
        for z in rows {
            match self {
                Self::Exponential { .. } => {
                    let p = exponential_weight(self, &BinaryPerturbation::ones(z.len()), z)?;
                    diag.zero_norm += usize::from(p.zero_norm);
                    out.push(p.value);
                }
                Self::Shapley { .. } => {
                    diag.clamp_rows += usize::from(self.is_clamp_row(z));
                    out.push(shapley_weight(self, z.len(), coalition_size(z))?);
                }
            }
        }
        Ok((out, diag))
    }
}

impl fmt::Display for ProximityKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { width, distance } => {
                let dist = match distance {
                    Distance::Cosine => "cosine",
                    Distance::L2 => "l2",
                };
                write!(f, "exponential(width={width},distance={dist})")
            }
            Self::Shapley { clamp_weight } => write!(f, "shapley(clamp_weight={clamp_weight})"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelDiagnostics {
    /// Zero vectors seen under cosine distance (weighed at `D = 1`).
    pub zero_norm: usize,
    /// Empty or full coalitions weighed at the clamp.
    pub clamp_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proximity {
    pub value: f64,
    pub zero_norm: bool,
}

fn distance(kind: Distance, a: &BinaryPerturbation, b: &BinaryPerturbation) -> (f64, bool) {
    let (mut dot, mut na, mut nb, mut diff) = (0usize, 0usize, 0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        dot += usize::from(x && y);
        na += usize::from(x);
        nb += usize::from(y);
        diff += usize::from(x != y);
    }
    match kind {
        Distance::L2 => ((diff as f64).sqrt(), false),
        Distance::Cosine => {
            if na == 0 || nb == 0 {
                (1.0, true)
            } else {
                let cos = dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt());
                ((1.0 - cos).max(0.0), false)
            }
        }
    }
}

/// Exponential kernel between the reference bits and `z`.
pub fn exponential_weight(
    kernel: &ProximityKernel,
    x_bits: &BinaryPerturbation,
    z: &BinaryPerturbation,
) -> Result<Proximity> {
    let ProximityKernel::Exponential { width, distance: kind } = *kernel else {
        return Err(Error::invalid("exponential_weight needs an exponential kernel"));
    };
    if x_bits.len() != z.len() {
        return Err(Error::invalid("reference and perturbation differ in length"));
    }
    let (dist, zero_norm) = distance(kind, x_bits, z);
    Ok(Proximity {
        value: (-(dist * dist) / (width * width)).exp(),
        zero_norm,
    })
}

/// Shapley kernel `(d-1) / (C(d,k) k (d-k))`, clamped at `k ∈ {0, d}`.
pub fn shapley_weight(kernel: &ProximityKernel, d: usize, coalition_size: usize) -> Result<f64> {
    let ProximityKernel::Shapley { clamp_weight } = *kernel else {
        return Err(Error::invalid("shapley_weight needs a shapley kernel"));
    };
    if d < 2 {
        return Err(Error::invalid(format!("shapley kernel needs d >= 2, got {d}")));
    }
    if coalition_size > d {
        return Err(Error::invalid(format!("coalition size {coalition_size} exceeds d = {d}")));
    }
    if coalition_size == 0 || coalition_size == d {
        return Ok(clamp_weight);
    }
    let k = coalition_size as f64;
    Ok((d as f64 - 1.0) / (binomial(d, coalition_size) * k * (d as f64 - k)))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
