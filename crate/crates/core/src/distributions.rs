//! Scaled inverse-χ², location-scale Student's t, and normal quantiles.

use std::f64::consts::{PI, SQRT_2};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Scaled inverse-χ² with `dof` degrees of freedom and scale `τ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledInvChiSq {
    dof: f64,
    scale: f64,
}

impl ScaledInvChiSq {
    pub fn new(dof: f64, scale: f64) -> Result<Self> {
        if !(dof.is_finite() && dof > 0.0) {
            return Err(Error::invalid(format!("dof must be positive, got {dof}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { dof, scale })
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `ν τ² / (ν - 2)`, defined for `ν > 2`.
    pub fn mean(&self) -> Option<f64> {
        (self.dof > 2.0).then(|| self.dof * self.scale / (self.dof - 2.0))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let chi = ChiSquared::new(self.dof).expect("dof validated at construction");
        loop {
            let c: f64 = chi.sample(rng);
            if c > 0.0 {
                return self.dof * self.scale / c;
            }
        }
    }
}

/// Draws `n` values from `dist` with a dedicated seeded generator.
pub fn sample_scaled_inv_chisq(dist: &ScaledInvChiSq, rng_seed: u64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok((0..n).map(|_| dist.sample_with(&mut rng)).collect())
}

/// Student's t with location and squared scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentT3 {
    dof: f64,
    location: f64,
    scale_sq: f64,
}

impl StudentT3 {
    pub fn new(dof: f64, location: f64, scale_sq: f64) -> Result<Self> {
        if !(dof.is_finite() && dof > 0.0) {
            return Err(Error::invalid(format!("dof must be positive, got {dof}")));
        }
        if !location.is_finite() {
            return Err(Error::invalid("location must be finite"));
        }
        if !(scale_sq.is_finite() && scale_sq > 0.0) {
            return Err(Error::invalid(format!("scale_sq must be positive, got {scale_sq}")));
        }
        Ok(Self {
            dof,
            location,
            scale_sq,
        })
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale_sq(&self) -> f64 {
        self.scale_sq
    }

    /// `scale_sq ν / (ν - 2)` for `ν > 2`.
    pub fn variance(&self) -> Option<f64> {
        (self.dof > 2.0).then(|| self.scale_sq * self.dof / (self.dof - 2.0))
    }

    pub fn pdf(&self, value: f64) -> f64 {
        let s = self.scale_sq.sqrt();
        std_t_pdf((value - self.location) / s, self.dof) / s
    }

    pub fn cdf(&self, value: f64) -> f64 {
        std_t_cdf((value - self.location) / self.scale_sq.sqrt(), self.dof)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.location + self.scale_sq.sqrt() * std_t_quantile(p, self.dof)
    }

    /// Central interval holding mass `alpha`.
    pub fn interval(&self, alpha: f64) -> Result<(f64, f64)> {
        check_level(alpha)?;
        let half = std_t_quantile(0.5 * (1.0 + alpha), self.dof) * self.scale_sq.sqrt();
        Ok((self.location - half, self.location + half))
    }

    /// Normal draw scaled by the root of a scaled inverse-χ² draw.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sigma_sq = ScaledInvChiSq {
            dof: self.dof,
            scale: self.scale_sq,
        }
        .sample_with(rng);
        let z: f64 = rng.sample(StandardNormal);
        self.location + z * sigma_sq.sqrt()
    }

    pub fn sample(&self, rng_seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        (0..n).map(|_| self.sample_with(&mut rng)).collect()
    }
}

pub fn student_t_pdf(dist: &StudentT3, value: f64) -> f64 {
    dist.pdf(value)
}

pub fn student_t_interval(dist: &StudentT3, alpha: f64) -> Result<(f64, f64)> {
    dist.interval(alpha)
}

pub(crate) fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("confidence level must lie in (0, 1), got {alpha}")))
    }
}

fn std_t_pdf(t: f64, nu: f64) -> f64 {
    let log_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    (log_norm - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()).exp()
}

fn std_t_cdf(t: f64, nu: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Standard t quantile: Cornish-Fisher start, safeguarded Newton on the cdf.
fn std_t_quantile(p: f64, nu: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -std_t_quantile(1.0 - p, nu);
    }
    let z = normal_quantile(p);
    // Cornish-Fisher expansion; the omitted terms are O(ν⁻⁴).
    let z2 = z * z;
    let g1 = (z2 + 1.0) * z / 4.0;
    let g2 = ((5.0 * z2 + 16.0) * z2 + 3.0) * z / 96.0;
    let g3 = (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) * z / 384.0;
    let mut x = z + g1 / nu + g2 / (nu * nu) + g3 / (nu * nu * nu);
    // The incomplete beta loses digits near x = 1 before the expansion does.
    if nu >= 1e4 {
        return x;
    }
    if !x.is_finite() || x <= 0.0 {
        x = z;
    }

    let (mut lo, mut hi) = (0.0, x.max(1.0));
    while std_t_cdf(hi, nu) < p {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    x = x.clamp(lo, hi);
    for _ in 0..100 {
        let f = std_t_cdf(x, nu) - p;
        if f.abs() < 1e-15 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = f / std_t_pdf(x, nu);
        let mut next = x - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-14 * x.abs().max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    x
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile (Wichura's AS241, relative error near 1e-16).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    as241(p)
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn as241(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_545e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_048_7e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_88e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.043_131_391_297_606e-15,
    ];

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// How a credible-interval width `W` relates to the posterior sd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WidthConvention {
    /// `W` is the full width `high - low` of the central interval.
    #[default]
    Full,
    /// `W` is the half width `q * sd`.
    Half,
}

impl FromStr for WidthConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "half" => Ok(Self::Half),
            other => Err(Error::invalid(format!("unknown width convention '{other}'"))),
        }
    }
}

impl WidthConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Half => "half",
        }
    }

    /// Width of `[low, high]` under this convention.
    pub fn width(&self, low: f64, high: f64) -> f64 {
        match self {
            Self::Full => high - low,
            Self::Half => 0.5 * (high - low),
        }
    }
}

/// `q = Φ⁻¹((1 + α) / 2)`; returns `2q` for `Full` and `q` for `Half`.
pub fn normal_two_tailed_multiplier(alpha: f64, convention: WidthConvention) -> Result<f64> {
    check_level(alpha)?;
    let q = normal_quantile(0.5 * (1.0 + alpha));
    Ok(match convention {
        WidthConvention::Full => 2.0 * q,
        WidthConvention::Half => q,
    })
}
