//! Local score-matching loss around a vertex as an explicit quadratic in θ.
//!
//! For vertex `i` the per-sample loss is
//! `L_i(θ, x) = ∂²_i log p_θ(x) + ½ (∂_i log p_θ(x))²`, and since
//! `∂_i log p_θ = ∂_i log h + Σ_k θ_k ∂_i f_k` it is exactly
//! `c0 + bᵀθ + ½ θᵀ Ĥ θ` on the factors containing `i`, with
//!
//! - `Ĥ_{k,k'} = mean ∂_i f_k · ∂_i f_k'`
//! - `b_k = mean (∂²_i f_k + ∂_i log h · ∂_i f_k)`
//! - `c0 = mean (∂²_i log h + ½ (∂_i log h)²)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::family::Family;
use crate::sampler::SampleBatch;

const BLOCK_ROWS: usize = 1 << 14;

/// Exact quadratic form of the empirical local loss at one vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalQuadratic {
    vertex: usize,
    active: Vec<usize>,
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
}

impl LocalQuadratic {
    pub fn new(vertex: usize, active: Vec<usize>, hessian: DMatrix<f64>, linear: DVector<f64>, constant: f64) -> Result<Self> {
        let a = active.len();
        if hessian.nrows() != a || hessian.ncols() != a {
            return Err(Error::Dimension {
                expected: a,
                got: hessian.nrows(),
            });
        }
        check_len(a, linear.len())?;
        Ok(Self {
            vertex,
            active,
            hessian,
            linear,
            constant,
        })
    }

    pub fn vertex(&self) -> usize {
        self.vertex
    }

    /// Family factor indices of the coordinates, ascending.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn dim(&self) -> usize {
        self.active.len()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// `c0 + bᵀθ + ½ θᵀĤθ`.
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        check_len(self.dim(), theta.len())?;
        let t = DVector::from_column_slice(theta);
        Ok(self.constant + self.linear.dot(&t) + 0.5 * t.dot(&(&self.hessian * &t)))
    }

    /// `b + Ĥθ`.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), theta.len())?;
        let t = DVector::from_column_slice(theta);
        Ok((&self.linear + &self.hessian * t).as_slice().to_vec())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.hessian.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Same quadratic with every term multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            vertex: self.vertex,
            active: self.active.clone(),
            hessian: &self.hessian * c,
            linear: &self.linear * c,
            constant: self.constant * c,
        }
    }

    /// Restriction to a subset of the active factors (given as family indices).
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let pos: Vec<usize> = keep
            .iter()
            .map(|k| self.active.binary_search(k).map_err(|_| Error::UnknownFactor(*k)))
            .collect::<Result<_>>()?;
        let a = pos.len();
        let hessian = DMatrix::from_fn(a, a, |r, c| self.hessian[(pos[r], pos[c])]);
        let linear = DVector::from_iterator(a, pos.iter().map(|&p| self.linear[p]));
        Self::new(self.vertex, keep.to_vec(), hessian, linear, self.constant)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&QuadDocument::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: QuadDocument = serde_json::from_str(s)?;
        let a = doc.active.len();
        check_len(a, doc.hessian.len())?;
        let mut flat = Vec::with_capacity(a * a);
        for row in &doc.hessian {
            check_len(a, row.len())?;
            flat.extend_from_slice(row);
        }
        Self::new(
            doc.vertex,
            doc.active,
            DMatrix::from_row_slice(a, a, &flat),
            DVector::from_vec(doc.b),
            doc.c0,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct QuadDocument {
    vertex: usize,
    active: Vec<usize>,
    /// Row-major.
    hessian: Vec<Vec<f64>>,
    b: Vec<f64>,
    c0: f64,
}

impl From<&LocalQuadratic> for QuadDocument {
    fn from(q: &LocalQuadratic) -> Self {
        Self {
            vertex: q.vertex,
            active: q.active.clone(),
            hessian: q
                .hessian
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            b: q.linear.as_slice().to_vec(),
            c0: q.constant,
        }
    }
}

/// Parameter error `Δ = θ̂ − θ*` restricted to an active set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreDelta {
    pub delta: Vec<f64>,
}

impl ScoreDelta {
    pub fn new(delta: Vec<f64>) -> Result<Self> {
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::Parse("non-finite delta".into()));
        }
        Ok(Self { delta })
    }

    pub fn zeros(len: usize) -> Self {
        Self { delta: vec![0.0; len] }
    }

    /// `max_k Δ_k²`.
    pub fn max_sq(&self) -> f64 {
        self.delta.iter().fold(0.0, |m, d| m.max(d * d))
    }
}

/// `L_i(θ, x)` for a full parameter vector `theta`.
pub fn local_loss(family: &Family, theta: &[f64], i: usize, x: &[f64]) -> Result<f64> {
    check_len(family.len(), theta.len())?;
    check_len(family.n(), x.len())?;
    check_vertex(family, i)?;
    let mut grad = family.base_grad(i, x);
    let mut hess = family.base_hess(i, x);
    for &k in family.factors_of(i) {
        let f = &family.factors()[k];
        grad += theta[k] * f.partial(i, 1, x);
        hess += theta[k] * f.partial(i, 2, x);
    }
    Ok(hess + 0.5 * grad * grad)
}

fn check_vertex(family: &Family, i: usize) -> Result<()> {
    if i >= family.n() {
        Err(Error::UnknownVariable { index: i, n: family.n() })
    } else {
        Ok(())
    }
}

#[derive(Clone)]
struct Sums {
    rows: usize,
    hessian: Vec<f64>,
    linear: Vec<f64>,
    constant: f64,
}

impl Sums {
    fn zeros(a: usize) -> Self {
        Self {
            rows: 0,
            hessian: vec![0.0; a * a],
            linear: vec![0.0; a],
            constant: 0.0,
        }
    }

    fn merge(mut self, other: &Sums) -> Self {
        self.rows += other.rows;
        self.hessian.iter_mut().zip(&other.hessian).for_each(|(a, b)| *a += b);
        self.linear.iter_mut().zip(&other.linear).for_each(|(a, b)| *a += b);
        self.constant += other.constant;
        self
    }
}

/// Quadratic form over `K_i`.
pub fn assemble_quadratic(family: &Family, i: usize, batch: &SampleBatch) -> Result<LocalQuadratic> {
    check_vertex(family, i)?;
    assemble_quadratic_on(family, i, family.factors_of(i), batch)
}

/// Quadratic form over a subset `active ⊆ K_i` (the loss of the sub-family
/// made of those factors).
pub fn assemble_quadratic_on(family: &Family, i: usize, active: &[usize], batch: &SampleBatch) -> Result<LocalQuadratic> {
    check_vertex(family, i)?;
    check_len(family.n(), batch.n())?;
    let own = family.factors_of(i);
    let mut active = active.to_vec();
    active.sort_unstable();
    active.dedup();
    if let Some(&k) = active.iter().find(|k| own.binary_search(k).is_err()) {
        return Err(Error::UnknownFactor(k));
    }
    let a = active.len();
    let factors: Vec<_> = active.iter().map(|&k| &family.factors()[k]).collect();

    // Fixed-size blocks summed in order keep the result bit-reproducible.
    let blocks: Vec<Sums> = batch
        .data()
        .par_chunks(BLOCK_ROWS * batch.n())
        .map(|chunk| {
            let mut s = Sums::zeros(a);
            let mut g = vec![0.0; a];
            for x in chunk.chunks_exact(batch.n()) {
                let lg = family.base_grad(i, x);
                let lh = family.base_hess(i, x);
                for (r, f) in factors.iter().enumerate() {
                    g[r] = f.partial(i, 1, x);
                    s.linear[r] += f.partial(i, 2, x) + lg * g[r];
                }
                for r in 0..a {
                    for c in r..a {
                        s.hessian[r * a + c] += g[r] * g[c];
                    }
                }
                s.constant += lh + 0.5 * lg * lg;
                s.rows += 1;
            }
            s
        })
        .collect();
    let total = blocks.iter().fold(Sums::zeros(a), |acc, b| acc.merge(b));
    let m = total.rows as f64;
    let hessian = DMatrix::from_fn(a, a, |r, c| {
        let (lo, hi) = if r <= c { (r, c) } else { (c, r) };
        total.hessian[lo * a + hi] / m
    });
    let linear = DVector::from_iterator(a, total.linear.iter().map(|v| v / m));
    LocalQuadratic::new(i, active, hessian, linear, total.constant / m)
}

/// `(value, gradient)` of the quadratic at `theta` (active coordinates).
pub fn quad_value_grad(quad: &LocalQuadratic, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    Ok((quad.value(theta)?, quad.gradient(theta)?))
}

/// Curvature term `½ ΔᵀĤΔ`.
pub fn excess_loss(quad: &LocalQuadratic, delta: &ScoreDelta) -> Result<f64> {
    check_len(quad.dim(), delta.delta.len())?;
    let d = DVector::from_column_slice(&delta.delta);
    Ok(0.5 * d.dot(&(&quad.hessian * &d)))
}

/// `E_i(x, Δ) = Σ_{k ∈ K_i} Δ_k ∂_i f_k(x)` with `delta` aligned to `K_i`.
pub fn score_error_field(family: &Family, i: usize, delta: &ScoreDelta, x: &[f64]) -> Result<f64> {
    check_vertex(family, i)?;
    check_len(family.n(), x.len())?;
    let own = family.factors_of(i);
    check_len(own.len(), delta.delta.len())?;
    Ok(own
        .iter()
        .zip(&delta.delta)
        .map(|(&k, d)| d * family.factors()[k].partial(i, 1, x))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Factor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fam(n: usize, d: u32, base: u32, fs: &[&[(usize, u32)]]) -> Family {
        Family::new(n, d, base, fs.iter().map(|p| Factor::new(p.iter().copied()).unwrap()).collect()).unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SampleBatch {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        SampleBatch::from_rows(&rows).unwrap()
    }

    #[test]
    fn local_loss_examples() {
        let f1 = fam(1, 1, 0, &[&[(0, 1)]]);
        assert_eq!(local_loss(&f1, &[2.0], 0, &[0.37]).unwrap(), 2.0);
        let f2 = fam(1, 2, 0, &[&[(0, 2)]]);
        assert_eq!(local_loss(&f2, &[1.0], 0, &[1.0]).unwrap(), 4.0);
        assert!(local_loss(&f2, &[1.0, 2.0], 0, &[1.0]).is_err());
    }

    #[test]
    fn assemble_examples() {
        let f1 = fam(1, 1, 0, &[&[(0, 1)]]);
        let b = SampleBatch::from_rows(&[vec![0.3], vec![-1.7], vec![2.2]]).unwrap();
        let q = assemble_quadratic(&f1, 0, &b).unwrap();
        assert_eq!(q.hessian()[(0, 0)], 1.0);
        assert_eq!(q.linear()[0], 0.0);
        assert_eq!(q.constant(), 0.0);

        // h = exp(-x^2): ∂ log h = -2x so b = -2 mean(x)
        let f2 = fam(1, 1, 2, &[&[(0, 1)]]);
        let q = assemble_quadratic(&f2, 0, &b).unwrap();
        let mean = (0.3 - 1.7 + 2.2) / 3.0;
        assert!((q.linear()[0] + 2.0 * mean).abs() < 1e-15);
        // finite difference of the mean loss in θ at θ = 0 recovers b
        let h = 1e-6;
        let mean_loss = |t: f64| {
            b.rows().map(|x| local_loss(&f2, &[t], 0, x).unwrap()).sum::<f64>() / 3.0
        };
        assert!(((mean_loss(h) - mean_loss(-h)) / (2.0 * h) - q.linear()[0]).abs() < 1e-6);
    }

    #[test]
    fn mean_loss_equals_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let family = Family::all_monomials(3, 3, 2, 4).unwrap();
        let batch = random_batch(&mut rng, 3, 60);
        for i in 0..3 {
            let q = assemble_quadratic(&family, i, &batch).unwrap();
            for _ in 0..20 {
                let theta: Vec<f64> = (0..family.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let active: Vec<f64> = q.active().iter().map(|&k| theta[k]).collect();
                let direct = batch
                    .rows()
                    .map(|x| local_loss(&family, &theta, i, x).unwrap())
                    .sum::<f64>()
                    / batch.len() as f64;
                let v = q.value(&active).unwrap();
                assert!((direct - v).abs() <= 1e-9 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_sample_identity() {
        let family = fam(2, 2, 2, &[&[(0, 1)], &[(0, 2)], &[(0, 1), (1, 1)], &[(1, 1)]]);
        let x = vec![0.7, -1.3];
        let batch = SampleBatch::from_rows(&[x.clone()]).unwrap();
        let theta = vec![0.3, -0.2, 0.5, 0.9];
        for i in 0..2 {
            let q = assemble_quadratic(&family, i, &batch).unwrap();
            let active: Vec<f64> = q.active().iter().map(|&k| theta[k]).collect();
            let direct = local_loss(&family, &theta, i, &x).unwrap();
            assert!((q.value(&active).unwrap() - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn value_grad_examples() {
        let q = LocalQuadratic::new(
            0,
            vec![0, 1],
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            1.5,
        )
        .unwrap();
        let (v, g) = quad_value_grad(&q, &[0.0, 0.0]).unwrap();
        assert_eq!((v, g), (1.5, vec![0.0, 0.0]));
        let (v, g) = quad_value_grad(&q, &[1.0, 0.0]).unwrap();
        assert_eq!((v, g), (2.0, vec![1.0, 0.0]));
        assert!(quad_value_grad(&q, &[1.0]).is_err());
        assert_eq!(excess_loss(&q, &ScoreDelta::zeros(2)).unwrap(), 0.0);
        assert_eq!(excess_loss(&q, &ScoreDelta::new(vec![1.0, 0.0]).unwrap()).unwrap(), 0.5);
        assert!(excess_loss(&q, &ScoreDelta::zeros(3)).is_err());
    }

    #[test]
    fn excess_is_exact_quadratic_remainder() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let family = Family::all_monomials(3, 2, 2, 4).unwrap();
        let batch = random_batch(&mut rng, 3, 40);
        let q = assemble_quadratic(&family, 1, &batch).unwrap();
        for _ in 0..20 {
            let t: Vec<f64> = (0..q.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d: Vec<f64> = (0..q.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let moved: Vec<f64> = t.iter().zip(&d).map(|(a, b)| a + b).collect();
            let (v0, g) = quad_value_grad(&q, &t).unwrap();
            let v1 = q.value(&moved).unwrap();
            let lin: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let ex = excess_loss(&q, &ScoreDelta::new(d).unwrap()).unwrap();
            assert!(ex >= 0.0);
            assert!((v1 - v0 - lin - ex).abs() < 1e-10);
        }
    }

    #[test]
    fn score_error_field_examples() {
        let family = fam(2, 2, 0, &[&[(0, 1), (1, 1)]]);
        assert_eq!(score_error_field(&family, 0, &ScoreDelta::zeros(1), &[1.0, 3.0]).unwrap(), 0.0);
        let one = ScoreDelta::new(vec![1.0]).unwrap();
        assert_eq!(score_error_field(&family, 0, &one, &[5.0, 3.0]).unwrap(), 3.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let family = Family::all_monomials(3, 3, 2, 0).unwrap();
        let batch = random_batch(&mut rng, 3, 50);
        let q = assemble_quadratic(&family, 2, &batch).unwrap();
        let d = ScoreDelta::new((0..q.dim()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mean_sq = batch
            .rows()
            .map(|x| score_error_field(&family, 2, &d, x).unwrap().powi(2))
            .sum::<f64>()
            / batch.len() as f64;
        assert!((mean_sq - 2.0 * excess_loss(&q, &d).unwrap()).abs() < 1e-10 * mean_sq.max(1.0));
    }

    #[test]
    fn restriction_and_subset_assembly_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let family = Family::all_monomials(3, 2, 2, 4).unwrap();
        let batch = random_batch(&mut rng, 3, 30);
        let full = assemble_quadratic(&family, 0, &batch).unwrap();
        let keep: Vec<usize> = full.active().iter().copied().step_by(2).collect();
        let a = full.restrict(&keep).unwrap();
        let b = assemble_quadratic_on(&family, 0, &keep, &batch).unwrap();
        assert_eq!(a, b);
        let stranger = family.factors_of(1).iter().find(|k| !family.factors_of(0).contains(k)).copied().unwrap();
        assert!(assemble_quadratic_on(&family, 0, &[stranger], &batch).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let family = Family::all_monomials(2, 2, 2, 2).unwrap();
        let batch = random_batch(&mut rng, 2, 10);
        let q = assemble_quadratic(&family, 0, &batch).unwrap();
        assert_eq!(LocalQuadratic::from_json(&q.to_json().unwrap()).unwrap(), q);
    }
}
