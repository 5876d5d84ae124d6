//! Centering boxes, centered bases and the curvature lower bound.
//!
//! For a clique `c`, the conditional density of `x_c` is maximised on
//! `[-C_t, C_t]^{|c|}` and a box of side `1/γ` is placed on the grid cell
//! containing the mode. The uniform distribution `q` on that box defines
//! moment matrices `A^j` whose tensor product bounds the Gram matrix of the
//! centered basis from below.
//!
//! Moments of `q` are computed exactly as rationals: for boxes far from the
//! origin the covariance entries are tiny differences of large numbers.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::family::{Clique, Factor, Family, Model};
use crate::quad::adaptive_simpson;
use crate::sampler::SampleBatch;
use crate::score::{score_error_field, ScoreDelta};
use crate::stats::{batch_means_std_error, mean};

/// `γ = d² C_t^{2d} B`.
pub fn grid_gamma(d: u32, c_t: u32, bound: u32) -> Result<u64> {
    if d == 0 || c_t == 0 || bound == 0 {
        return Err(Error::Config("grid_gamma needs d, C_t, B ≥ 1".into()));
    }
    (c_t as u64)
        .checked_pow(2 * d)
        .and_then(|v| v.checked_mul((d as u64).pow(2)))
        .and_then(|v| v.checked_mul(bound as u64))
        .ok_or(Error::Overflow("grid_gamma"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenteringBox {
    pub clique: Clique,
    pub gamma: u64,
    /// Box `j` is `[l_j/γ, (l_j+1)/γ]`.
    pub offsets: Vec<i64>,
    pub mode: Vec<f64>,
}

impl CenteringBox {
    /// A box placed directly by its offsets (mode at the lower corner).
    pub fn from_offsets(clique: Clique, gamma: u64, offsets: Vec<i64>) -> Result<Self> {
        check_len(clique.len(), offsets.len())?;
        if gamma == 0 {
            return Err(Error::Config("gamma must be positive".into()));
        }
        let mode = offsets.iter().map(|&l| l as f64 / gamma as f64).collect();
        Ok(Self {
            clique,
            gamma,
            offsets,
            mode,
        })
    }

    pub fn position(&self, var: usize) -> Option<usize> {
        self.clique.iter().position(|&v| v == var)
    }

    pub fn lower(&self, p: usize) -> f64 {
        self.offsets[p] as f64 / self.gamma as f64
    }

    pub fn upper(&self, p: usize) -> f64 {
        (self.offsets[p] + 1) as f64 / self.gamma as f64
    }
}

/// Options for the curvature computations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurvatureOptions {
    /// Keep `-Σ_{j∈c} x_j^p` in the conditional density.
    pub include_base_term: bool,
    /// Number of sample rows whose remaining coordinates seed a box.
    pub max_boxes: usize,
    /// Batches for the Monte-Carlo standard error.
    pub batches: usize,
}

impl Default for CurvatureOptions {
    fn default() -> Self {
        Self {
            include_base_term: true,
            max_boxes: 32,
            batches: 50,
        }
    }
}

/// Coefficients (ascending powers of `x_j`) of the conditional log-density
/// along coordinate `j`, other coordinates taken from `x`.
fn line_polynomial(model: &Model, j: usize, x: &[f64], include_base: bool) -> Vec<f64> {
    let fam = model.family();
    let mut c = vec![0.0; fam.effective_degree() as usize + 1];
    for &k in fam.factors_of(j) {
        let f = &fam.factors()[k];
        let rest: f64 = f
            .iter()
            .filter(|&(v, _)| v != j)
            .map(|(v, e)| x[v].powi(e as i32))
            .product();
        c[f.degree(j) as usize] += model.theta()[k] * rest;
    }
    let p = fam.base_exponent() as usize;
    if include_base && p > 0 {
        c[p] -= 1.0;
    }
    c
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * t + a)
}

/// Conditional log-density of `x_c` (up to a constant in `x_c`).
pub fn conditional_log_density(model: &Model, clique: &[usize], x: &[f64], include_base: bool) -> f64 {
    let fam = model.family();
    let mut e: f64 = fam
        .factors()
        .iter()
        .zip(model.theta())
        .filter(|(f, _)| clique.iter().any(|&j| f.contains(j)))
        .map(|(f, t)| t * f.eval(x))
        .sum();
    let p = fam.base_exponent();
    if include_base && p > 0 {
        e -= clique.iter().map(|&j| x[j].powi(p as i32)).sum::<f64>();
    }
    e
}

const MAX_SCAN: usize = 1 << 16;

/// Global maximiser of a polynomial on `[lo, hi]`: dense scan, then golden
/// section inside the best cell. The first (smallest) maximiser wins ties.
fn maximize_line(c: &[f64], lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let cells = (((hi - lo) / step).ceil() as usize).clamp(1, MAX_SCAN);
    let h = (hi - lo) / cells as f64;
    let mut best = (lo, horner(c, lo));
    for s in 1..=cells {
        let t = lo + s as f64 * h;
        let v = horner(c, t);
        if v > best.1 {
            best = (t, v);
        }
    }
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (horner(c, x1), horner(c, x2));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = horner(c, x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = horner(c, x2);
        }
    }
    let t = 0.5 * (a + b);
    let v = horner(c, t);
    if v > best.1 {
        (t, v)
    } else {
        best
    }
}

/// Places the centering box around the conditional mode of `x_c`.
pub fn locate_mode_box(
    model: &Model,
    clique: &[usize],
    x_rest: &[f64],
    c_t: f64,
    gamma: u64,
    include_base: bool,
) -> Result<CenteringBox> {
    let fam = model.family();
    check_len(fam.n(), x_rest.len())?;
    if clique.is_empty() {
        return Err(Error::EmptySpan(Vec::new()));
    }
    if let Some(&v) = clique.iter().find(|&&v| v >= fam.n()) {
        return Err(Error::UnknownVariable { index: v, n: fam.n() });
    }
    if gamma == 0 || !(c_t > 0.0) {
        return Err(Error::Config("gamma and C_t must be positive".into()));
    }
    let step = 1.0 / (4.0 * gamma as f64);
    let starts = [-0.5 * c_t, 0.0, 0.5 * c_t];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut x = x_rest.to_vec();
    for s in 0..starts.len().pow(clique.len() as u32) {
        let mut code = s;
        for &j in clique {
            x[j] = starts[code % 3];
            code /= 3;
        }
        let mut value = conditional_log_density(model, clique, &x, include_base);
        for _ in 0..50 {
            let before = value;
            for &j in clique {
                let poly = line_polynomial(model, j, &x, include_base);
                let current = horner(&poly, x[j]);
                let (t, v) = maximize_line(&poly, -c_t, c_t, step);
                if v > current {
                    x[j] = t;
                }
            }
            value = conditional_log_density(model, clique, &x, include_base);
            if value - before <= 1e-13 * (1.0 + value.abs()) {
                break;
            }
        }
        let point: Vec<f64> = clique.iter().map(|&j| x[j]).collect();
        let better = match &best {
            None => true,
            Some((p, v)) => {
                let tol = 1e-12 * (1.0 + v.abs());
                value > v + tol || ((value - v).abs() <= tol && point < *p)
            }
        };
        if better {
            best = Some((point, value));
        }
    }
    let (mode, _) = best.expect("at least one start");
    let g = gamma as f64;
    let max_offset = (c_t * g).floor() as i64 - 1;
    let min_offset = -(c_t * g).floor() as i64;
    let offsets = mode
        .iter()
        .map(|&m| {
            let scaled = m * g;
            let snapped = if (scaled - scaled.round()).abs() < 1e-6 {
                scaled.round()
            } else {
                scaled.floor()
            };
            (snapped as i64).clamp(min_offset, max_offset)
        })
        .collect();
    Ok(CenteringBox {
        clique: clique.to_vec(),
        gamma,
        offsets,
        mode,
    })
}

/// `∫ x^m dx` over the cell `[l/γ, (l+1)/γ]`, exactly:
/// `((l+1)^{m+1} − l^{m+1}) / (γ^{m+1} (m+1))`.
pub fn centering_moment_exact(l: i64, gamma: u64, m: u32) -> BigRational {
    let lo = BigInt::from(l);
    let hi = &lo + 1;
    let num = num_traits::pow(hi, m as usize + 1) - num_traits::pow(lo, m as usize + 1);
    let den = num_traits::pow(BigInt::from(gamma), m as usize + 1) * BigInt::from(m + 1);
    BigRational::new(num, den)
}

pub fn centering_moment(l: i64, gamma: u64, m: u32) -> f64 {
    to_f64(&centering_moment_exact(l, gamma, m))
}

/// `E_q[x^m]` for `q = Uniform[l/γ, (l+1)/γ]`: the cell integral times `γ`.
pub fn centering_expectation_exact(l: i64, gamma: u64, m: u32) -> BigRational {
    centering_moment_exact(l, gamma, m) * BigRational::from_integer(BigInt::from(gamma))
}

pub fn centering_expectation(l: i64, gamma: u64, m: u32) -> f64 {
    to_f64(&centering_expectation_exact(l, gamma, m))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `A^j` for `j ≠ i`: `Cov_q(x^m, x^n)`, `m, n ∈ 1..d`.
pub fn centered_moment_matrix_exact(l: i64, gamma: u64, d: u32) -> Vec<Vec<BigRational>> {
    let moments: Vec<BigRational> = (0..=2 * d).map(|p| centering_expectation_exact(l, gamma, p)).collect();
    (1..=d as usize)
        .map(|m| {
            (1..=d as usize)
                .map(|n| &moments[m + n] - &moments[m] * &moments[n])
                .collect()
        })
        .collect()
}

/// `A^i`: `E_q[(m x^{m-1})(n x^{n-1})]`, the Gram matrix of `∂_i x_i^m`.
pub fn derivative_moment_matrix_exact(l: i64, gamma: u64, d: u32) -> Vec<Vec<BigRational>> {
    let moments: Vec<BigRational> = (0..=2 * d).map(|p| centering_expectation_exact(l, gamma, p)).collect();
    (1..=d as usize)
        .map(|m| {
            (1..=d as usize)
                .map(|n| &moments[m + n - 2] * BigRational::from_integer(BigInt::from(m * n)))
                .collect()
        })
        .collect()
}

fn rational_to_matrix(a: &[Vec<BigRational>]) -> DMatrix<f64> {
    let d = a.len();
    DMatrix::from_fn(d, d, |r, c| to_f64(&a[r][c]))
}

/// Exact `A^j` for every `j` in the box's clique, keyed by variable.
pub fn build_a_matrices_exact(b: &CenteringBox, d: u32, i: usize) -> Result<BTreeMap<usize, Vec<Vec<BigRational>>>> {
    if b.position(i).is_none() {
        return Err(Error::Config(format!("vertex {i} not in clique {:?}", b.clique)));
    }
    Ok(b.clique
        .iter()
        .zip(&b.offsets)
        .map(|(&j, &l)| {
            let exact = if j == i {
                derivative_moment_matrix_exact(l, b.gamma, d)
            } else {
                centered_moment_matrix_exact(l, b.gamma, d)
            };
            (j, exact)
        })
        .collect())
}

/// `A^j` for every `j` in the box's clique, rounded to `f64`.
pub fn build_a_matrices(b: &CenteringBox, d: u32, i: usize) -> Result<BTreeMap<usize, DMatrix<f64>>> {
    Ok(build_a_matrices_exact(b, d, i)?
        .into_iter()
        .map(|(j, a)| (j, rational_to_matrix(&a)))
        .collect())
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Whether `a − λI` is positive definite: every pivot of exact Gaussian
/// elimination is positive.
/// Integer matrix `D·a` with `D` the least common denominator of `a`.
fn integer_scaled(a: &[Vec<BigRational>]) -> (Vec<Vec<BigInt>>, BigInt) {
    let den = a.iter().flatten().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let m = a
        .iter()
        .map(|row| row.iter().map(|v| v.numer() * (&den / v.denom())).collect())
        .collect();
    (m, den)
}

/// Whether `n/den − λI` is positive definite, by fraction-free elimination
/// on the leading principal minors.
fn shifted_is_pd(n: &[Vec<BigInt>], den: &BigInt, lambda: f64) -> bool {
    use num_traits::Float;
    let (mant, exp, sign) = lambda.integer_decode();
    let shift = BigInt::from(sign) * BigInt::from(mant) * den;
    let (scale, shift) = if exp >= 0 {
        (BigInt::one(), shift << exp as usize)
    } else {
        (BigInt::one() << (-exp) as usize, shift)
    };
    let size = n.len();
    let mut m: Vec<Vec<BigInt>> = n.iter().map(|row| row.iter().map(|v| v * &scale).collect()).collect();
    for (k, row) in m.iter_mut().enumerate() {
        row[k] -= &shift;
    }
    let mut prev = BigInt::one();
    for k in 0..size {
        if !m[k][k].is_positive() {
            return false;
        }
        let (head, tail) = m.split_at_mut(k + 1);
        let pivot = &head[k];
        for row in tail.iter_mut() {
            for c in k + 1..size {
                row[c] = (&pivot[k] * &row[c] - &row[k] * &pivot[c]) / &prev;
            }
        }
        prev = pivot[k].clone();
    }
    true
}

/// `λ_min` of an exact symmetric matrix, from below.
///
/// Brackets `λ_min` between shifts where `a − λI` is and is not positive
/// definite, then bisects geometrically to a relative width of `1e-12`. The
/// returned value never exceeds the true `λ_min`. `guess` only seeds the
/// bracket. Matrices that are not positive definite fall back to a
/// floating-point eigensolve.
pub fn min_eigenvalue_exact(a: &[Vec<BigRational>], guess: f64) -> f64 {
    if a.is_empty() {
        return f64::INFINITY;
    }
    let (n, den) = integer_scaled(a);
    if !shifted_is_pd(&n, &den, 0.0) {
        return min_eigenvalue(&rational_to_matrix(a));
    }
    let pd = |x: f64| shifted_is_pd(&n, &den, x);
    let min_diag = (0..a.len()).map(|k| to_f64(&a[k][k])).fold(f64::INFINITY, f64::min);
    let g = if guess.is_finite() && guess > 0.0 { guess.min(min_diag) } else { min_diag };
    let mut width = 1e-9;
    let (mut lo, mut hi);
    if pd(g) {
        lo = g;
        loop {
            hi = (g * (1.0 + width)).min(min_diag * (1.0 + 1e-15));
            if !pd(hi) {
                break;
            }
            lo = hi;
            width *= 1e3;
        }
    } else {
        hi = g;
        loop {
            lo = g / (1.0 + width);
            if lo <= f64::MIN_POSITIVE {
                return 0.0;
            }
            if pd(lo) {
                break;
            }
            hi = lo;
            width *= 1e3;
        }
    }
    while hi > lo * (1.0 + 1e-12) {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if pd(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Exponent tuples `(k_j - 1)_{j ∈ c}` of the span factors.
fn span_indices(b: &CenteringBox, d: u32, span: &[Factor]) -> Result<Vec<Vec<usize>>> {
    if span.is_empty() {
        return Err(Error::EmptySpan(b.clique.clone()));
    }
    span.iter()
        .map(|f| {
            if f.support() != b.clique {
                return Err(Error::InvalidFactor(format!("{f} is not supported on {:?}", b.clique)));
            }
            b.clique
                .iter()
                .map(|&j| {
                    let e = f.degree(j);
                    if e > d {
                        Err(Error::InvalidFactor(format!("{f} exceeds degree {d}")))
                    } else {
                        Ok(e as usize - 1)
                    }
                })
                .collect()
        })
        .collect()
}

/// `M_{k,k'} = ∏_{j∈c} A^j_{k_j,k'_j}` over the span, exactly.
pub fn npc_matrix_exact(b: &CenteringBox, d: u32, i: usize, span: &[Factor]) -> Result<Vec<Vec<BigRational>>> {
    let a = build_a_matrices_exact(b, d, i)?;
    let idx = span_indices(b, d, span)?;
    let mats: Vec<&Vec<Vec<BigRational>>> = b.clique.iter().map(|j| &a[j]).collect();
    Ok(idx
        .iter()
        .map(|r| {
            idx.iter()
                .map(|c| {
                    mats.iter()
                        .enumerate()
                        .fold(BigRational::one(), |acc, (p, m)| acc * &m[r[p]][c[p]])
                })
                .collect()
        })
        .collect())
}

/// `M_{k,k'} = ∏_{j∈c} A^j_{k_j,k'_j}` over the span.
pub fn npc_matrix(b: &CenteringBox, d: u32, i: usize, span: &[Factor]) -> Result<DMatrix<f64>> {
    Ok(rational_to_matrix(&npc_matrix_exact(b, d, i, span)?))
}

/// Floating-point `λ_min(M)` via `M = FᵀF`.
///
/// Each `A^j` is factored as `L_j L_jᵀ`, so `F[r, k] = ∏_j L_j[k_j, r_j]`
/// and `λ_min(M) = σ_min(F)²`. Accurate to roughly `ε √cond(M)` relative.
pub fn npc_constant_approx(b: &CenteringBox, d: u32, i: usize, span: &[Factor]) -> Result<f64> {
    let a = build_a_matrices(b, d, i)?;
    let idx = span_indices(b, d, span)?;
    let mut factors = Vec::with_capacity(b.clique.len());
    for j in &b.clique {
        match Cholesky::new(a[j].clone()) {
            Some(ch) => factors.push(ch.l()),
            None => return Ok(min_eigenvalue(&npc_matrix(b, d, i, span)?)),
        }
    }
    let dd = d as usize;
    let rows = dd.pow(b.clique.len() as u32);
    let f = DMatrix::from_fn(rows, idx.len(), |r, c| {
        let mut code = r;
        let mut prod = 1.0;
        for (p, l) in factors.iter().enumerate() {
            let rj = code % dd;
            code /= dd;
            prod *= l[(idx[c][p], rj)];
        }
        prod
    });
    let sv = f.svd(false, false).singular_values;
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(smin * smin)
}

/// `B_NPC = λ_min(M)`, computed from the exact `M` and never above the true
/// value (see [`min_eigenvalue_exact`]).
pub fn npc_constant(b: &CenteringBox, d: u32, i: usize, span: &[Factor]) -> Result<f64> {
    let guess = npc_constant_approx(b, d, i, span)?;
    Ok(min_eigenvalue_exact(&npc_matrix_exact(b, d, i, span)?, guess))
}

/// `h_{i,k}(x) = k_i x_i^{k_i-1} ∏_{j∈c∖i} (x_j^{k_j} − E_q[x_j^{k_j}])`.
pub fn centered_basis(b: &CenteringBox, i: usize, factor: &Factor, x: &[f64]) -> Result<f64> {
    if factor.support() != b.clique {
        return Err(Error::InvalidFactor(format!("{factor} is not supported on {:?}", b.clique)));
    }
    let ki = factor.degree(i);
    if ki == 0 {
        return Err(Error::InvalidFactor(format!("{factor} does not contain x{}", i + 1)));
    }
    let mut v = ki as f64 * x[i].powi(ki as i32 - 1);
    for (&j, &l) in b.clique.iter().zip(&b.offsets) {
        if j != i {
            let kj = factor.degree(j);
            v *= x[j].powi(kj as i32) - centering_expectation(l, b.gamma, kj);
        }
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub vertex: usize,
    pub clique: Clique,
    pub gamma: u64,
    pub boxes: usize,
    #[serde(rename = "B_NPC")]
    pub b_npc: f64,
    /// `B_NPC / (e C_t^d)`.
    #[serde(rename = "C_p")]
    pub c_p: f64,
    /// `C_p Σ_{k∈[c]_sp} Δ_k²`.
    pub bound: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Factors of `family` supported exactly on `clique`.
pub fn clique_span(family: &Family, clique: &[usize]) -> Vec<usize> {
    family
        .factors()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.support() == clique)
        .map(|(k, _)| k)
        .collect()
}

pub const MIN_TRUNCATED_SAMPLES: usize = 1000;

/// `B_NPC` for one vertex and clique, minimised over several boxes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpcEstimate {
    pub b_npc: f64,
    pub gamma: u64,
    pub boxes: usize,
}

/// `B_NPC` minimised over boxes seeded by rows of `batch`.
pub fn npc_over_batch(
    model: &Model,
    i: usize,
    clique: &[usize],
    batch: &SampleBatch,
    options: &CurvatureOptions,
) -> Result<NpcEstimate> {
    let fam = model.family();
    let d = fam.d();
    let c_t = model.tail().c_t;
    let gamma = grid_gamma(d, c_t, model.bound())?;
    let span: Vec<Factor> = clique_span(fam, clique)
        .into_iter()
        .map(|k| fam.factors()[k].clone())
        .collect();
    let boxes = options.max_boxes.clamp(1, batch.len().max(1));
    let stride = (batch.len() / boxes).max(1);
    let mut b_npc = f64::INFINITY;
    for r in 0..boxes {
        let x = batch.row(r * stride);
        let b = locate_mode_box(model, clique, x, c_t as f64, gamma, options.include_base_term)?;
        b_npc = b_npc.min(npc_constant(&b, d, i, &span)?);
    }
    Ok(NpcEstimate { b_npc, gamma, boxes })
}

/// Checks `E_{p_t}[E_i(x,Δ)²] ≥ (B_NPC / (e C_t^d)) Σ_{k∈[c]_sp} Δ_k²` by
/// Monte Carlo over a truncated batch.
pub fn mc_curvature_check(
    model: &Model,
    i: usize,
    clique: &[usize],
    delta: &ScoreDelta,
    batch_truncated: &SampleBatch,
    options: &CurvatureOptions,
) -> Result<CurvatureReport> {
    check_curvature_inputs(model, i, clique, batch_truncated)?;
    let npc = npc_over_batch(model, i, clique, batch_truncated, options)?;
    curvature_bound_check(model, i, clique, delta, batch_truncated, &npc, options)
}

fn check_curvature_inputs(model: &Model, i: usize, clique: &[usize], batch: &SampleBatch) -> Result<()> {
    if batch.len() < MIN_TRUNCATED_SAMPLES {
        return Err(Error::InsufficientSamples {
            need: MIN_TRUNCATED_SAMPLES,
            have: batch.len(),
        });
    }
    if i >= model.family().n() {
        return Err(Error::UnknownVariable {
            index: i,
            n: model.family().n(),
        });
    }
    if !clique.contains(&i) {
        return Err(Error::Config(format!("vertex {i} not in clique {clique:?}")));
    }
    Ok(())
}

/// The same check with a precomputed `B_NPC`.
pub fn curvature_bound_check(
    model: &Model,
    i: usize,
    clique: &[usize],
    delta: &ScoreDelta,
    batch_truncated: &SampleBatch,
    npc: &NpcEstimate,
    options: &CurvatureOptions,
) -> Result<CurvatureReport> {
    check_curvature_inputs(model, i, clique, batch_truncated)?;
    let fam = model.family();
    let own = fam.factors_of(i);
    check_len(own.len(), delta.delta.len())?;
    let c_t = model.tail().c_t as f64;
    let c_p = npc.b_npc / (std::f64::consts::E * c_t.powi(fam.d() as i32));
    let span = clique_span(fam, clique);
    let span_sq: f64 = own
        .iter()
        .zip(&delta.delta)
        .filter(|(k, _)| span.contains(k))
        .map(|(_, d)| d * d)
        .sum();
    let bound = c_p * span_sq;
    let values = batch_truncated
        .rows()
        .map(|x| score_error_field(fam, i, delta, x).map(|e| e * e))
        .collect::<Result<Vec<f64>>>()?;
    let mc_mean = mean(&values);
    let mc_stderr = batch_means_std_error(&values, options.batches);
    Ok(CurvatureReport {
        vertex: i,
        clique: clique.to_vec(),
        gamma: npc.gamma,
        boxes: npc.boxes,
        b_npc: npc.b_npc,
        c_p,
        bound,
        mc_mean,
        mc_stderr,
        samples: values.len(),
        pass: mc_mean + 3.0 * mc_stderr >= bound,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheck {
    pub eta: f64,
    pub d: u32,
    pub b_dom: f64,
    pub variance: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `Var(x)` for `x ∝ exp(ηx − x^{d+1})` on `[−B, B]` against `1/(4e²η²)`.
pub fn var_lower_bound_check(eta: f64, d: u32, b_dom: f64) -> Result<VarianceCheck> {
    if !(eta >= 4.0) || !(b_dom >= 1.0) || d == 0 {
        return Err(Error::Config(format!(
            "variance check needs eta ≥ 4, B ≥ 1, d ≥ 1 (got {eta}, {b_dom}, {d})"
        )));
    }
    let energy = |x: f64| eta * x - x.powi(d as i32 + 1);
    let scan = 10_000;
    let peak = (0..=scan)
        .map(|s| energy(-b_dom + 2.0 * b_dom * s as f64 / scan as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    let w = |x: f64| (energy(x) - peak).exp();
    let nodes = 10_000;
    let z = adaptive_simpson(w, -b_dom, b_dom, nodes, 1e-12);
    let m1 = adaptive_simpson(|x| x * w(x), -b_dom, b_dom, nodes, 1e-12) / z;
    let variance = adaptive_simpson(|x| (x - m1).powi(2) * w(x), -b_dom, b_dom, nodes, 1e-12) / z;
    let bound = 1.0 / (4.0 * std::f64::consts::E.powi(2) * eta * eta);
    Ok(VarianceCheck {
        eta,
        d,
        b_dom,
        variance,
        bound,
        pass: variance >= bound,
    })
}

/// Least multiple `D` such that `D · r` is an integer for every entry.
pub fn common_denominator(a: &[Vec<BigRational>]) -> BigInt {
    a.iter().flatten().fold(BigInt::one(), |acc, r| {
        let den = r.denom().clone();
        let g = num_integer_gcd(&acc, &den);
        &acc / g * den
    })
}

fn num_integer_gcd(a: &BigInt, b: &BigInt) -> BigInt {
    let (mut a, mut b) = (a.abs(), b.abs());
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}
