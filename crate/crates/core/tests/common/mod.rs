//! Independent numerical oracles shared by the integration tests.
//!
//! Nothing here calls into the crate's linear algebra or special
//! functions, so agreement with the library is a real check.

#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `a x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular system");
        for k in 0..n {
            a[col][k] /= p;
        }
        b[col] /= p;
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in 0..n {
                        a[row][k] -= f * a[col][k];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
    }
    b
}

/// Inverse by Gauss-Jordan, one column at a time.
pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            gauss_jordan(a.to_vec(), e)
        })
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// Dense weighted ridge with unit penalty: `(XᵀWX + I)⁻¹ XᵀWy`, plus the
/// normalized residual `s²` and the inverse matrix.
pub struct RidgeOracle {
    pub coef: Vec<f64>,
    pub inverse: Vec<Vec<f64>>,
    pub s_sq: f64,
}

pub fn weighted_ridge(x: &[Vec<f64>], w: &[f64], y: &[f64]) -> RidgeOracle {
    let p = x[0].len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for ((row, &wi), &yi) in x.iter().zip(w).zip(y) {
        for i in 0..p {
            b[i] += wi * row[i] * yi;
            for j in 0..p {
                a[i][j] += wi * row[i] * row[j];
            }
        }
    }
    for (i, r) in a.iter_mut().enumerate() {
        r[i] += 1.0;
    }
    let coef = gauss_jordan(a.clone(), b);
    let inverse = invert(&a);
    let mut sse = 0.0;
    for ((row, &wi), &yi) in x.iter().zip(w).zip(y) {
        let fit: f64 = row.iter().zip(&coef).map(|(a, c)| a * c).sum();
        sse += wi * (yi - fit) * (yi - fit);
    }
    let penalty: f64 = coef.iter().map(|c| c * c).sum();
    RidgeOracle {
        s_sq: (sse + penalty) / x.len() as f64,
        coef,
        inverse,
    }
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `∫ f` over the real line via `x = t / (1 - t²)` on `(-1, 1)`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, tol: f64) -> f64 {
    let g = |t: f64| {
        let d = 1.0 - t * t;
        if d <= 0.0 {
            return 0.0;
        }
        let x = t / d;
        f(x) * (1.0 + t * t) / (d * d)
    };
    let edge = 1.0 - 1e-12;
    simpson(&g, -edge, 0.0, tol) + simpson(&g, 0.0, edge, tol)
}

/// Random weighted regression problem with binary design.
pub struct Problem {
    pub rows: Vec<Vec<bool>>,
    pub weights: Vec<f64>,
    pub labels: Vec<f64>,
    pub intercept: bool,
}

pub fn random_problem(rng: &mut ChaCha8Rng, max_d: usize, max_n: usize) -> Problem {
    let d = rng.random_range(1..=max_d);
    let n = rng.random_range(1..=max_n);
    Problem {
        rows: (0..n).map(|_| (0..d).map(|_| rng.random_bool(0.5)).collect()).collect(),
        weights: (0..n).map(|_| rng.random_range(1e-3..1.0)).collect(),
        labels: (0..n).map(|_| rng.random::<f64>()).collect(),
        intercept: rng.random_bool(0.5),
    }
}

impl Problem {
    pub fn design(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut x = Vec::with_capacity(r.len() + 1);
                if self.intercept {
                    x.push(1.0);
                }
                x.extend(r.iter().map(|&b| if b { 1.0 } else { 0.0 }));
                x
            })
            .collect()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
