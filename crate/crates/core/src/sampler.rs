//! Gibbs sampling from polynomial exponential families.
//!
//! Each coordinate's conditional density is `∝ exp(e(t))` for a univariate
//! polynomial energy `e`. One-dimensional draws use a grid inverse CDF: the
//! energy is evaluated on a uniform grid, shifted by its maximum, integrated
//! with the trapezoid rule and inverted by linear interpolation. Unbounded
//! domains are cut where the log-density has dropped `LOG_MARGIN` below the
//! maximum.
//!
//! A systematic-scan chain with burn-in and thinning stands in for the
//! independent samples the recovery guarantees assume. Residual
//! autocorrelation is reported (effective sample size) but not corrected.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::family::Model;
use crate::stats;

/// Default number of grid points for univariate inversion.
pub const DEFAULT_GRID_POINTS: usize = 4096;

/// Log-density drop at which unbounded domains are truncated.
pub const LOG_MARGIN: f64 = 50.0;

const SCAN_POINTS: usize = 65;

/// Seed of trial `t` derived from a master seed.
pub fn trial_seed(master: u64, t: u64) -> u64 {
    master ^ t
}

/// Polynomial `e(t) = Σ_j c_j t^j` defining a density `∝ exp(e(t))`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct UnivariateEnergy {
    coefficients: Vec<f64>,
}

impl UnivariateEnergy {
    /// Coefficients indexed by degree.
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        horner(&self.coefficients, t)
    }

    /// Degree of the highest nonzero coefficient.
    pub fn degree(&self) -> Option<usize> {
        self.coefficients.iter().rposition(|&c| c != 0.0)
    }

    /// True when `exp(e)` integrates on the whole real line.
    pub fn is_normalizable(&self) -> bool {
        match self.degree() {
            Some(deg) => deg >= 2 && deg % 2 == 0 && self.coefficients[deg] < 0.0,
            None => false,
        }
    }

    /// Coefficients of `u ↦ e(r + u)`.
    pub fn shifted(&self, r: f64) -> Self {
        let mut c = self.coefficients.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                c[j] += r * c[j + 1];
            }
        }
        Self { coefficients: c }
    }

    /// Radius `T ≥ 1` with `e(u) ≤ e(0) − margin` whenever `|u| ≥ T`.
    /// Only meaningful for normalizable energies.
    fn outer_radius(&self, margin: f64) -> f64 {
        let deg = self.degree().unwrap_or(0);
        let lead = self.coefficients[deg].abs();
        let spread: f64 = self.coefficients[1..deg].iter().map(|c| c.abs()).sum();
        1f64.max(2.0 * spread / lead)
            .max((2.0 * margin / lead).powf(1.0 / deg as f64))
    }
}

#[inline]
fn horner(c: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    for &a in c.iter().rev() {
        acc = acc * t + a;
    }
    acc
}

/// Closed interval, possibly with infinite ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn symmetric(radius: f64) -> Self {
        Self::new(-radius, radius)
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Piecewise-linear CDF of `exp(e)` on a uniform grid.
#[derive(Clone, Debug)]
pub struct GridCdf {
    points: usize,
    lo: f64,
    step: f64,
    cdf: Vec<f64>,
}

impl GridCdf {
    pub fn new(points: usize) -> Self {
        Self {
            points: points.max(2),
            lo: 0.0,
            step: 0.0,
            cdf: Vec::with_capacity(points.max(2)),
        }
    }

    pub fn build(energy: &UnivariateEnergy, domain: Interval, points: usize) -> Result<Self> {
        let mut g = Self::new(points);
        g.rebuild(energy, domain)?;
        Ok(g)
    }

    /// Grid bounds `[lo, hi]` of the last build.
    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.lo + self.step * (self.points - 1) as f64)
    }

    /// Recomputes the CDF for a new energy, reusing the buffer.
    pub fn rebuild(&mut self, energy: &UnivariateEnergy, domain: Interval) -> Result<()> {
        let (lo, hi) = bracket(energy, domain, LOG_MARGIN)?;
        let g = self.points;
        let h = (hi - lo) / (g - 1) as f64;
        self.lo = lo;
        self.step = h;
        self.cdf.clear();
        let c = energy.coefficients();
        let mut max = f64::NEG_INFINITY;
        for j in 0..g {
            let e = horner(c, lo + j as f64 * h);
            if e > max {
                max = e;
            }
            self.cdf.push(e);
        }
        if !max.is_finite() {
            return Err(Error::ZeroMass);
        }
        let mut acc = 0.0;
        let mut prev = (self.cdf[0] - max).exp();
        self.cdf[0] = 0.0;
        for j in 1..g {
            let p = (self.cdf[j] - max).exp();
            acc += 0.5 * h * (prev + p);
            self.cdf[j] = acc;
            prev = p;
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(Error::ZeroMass);
        }
        Ok(())
    }

    /// Inverse CDF at `u ∈ [0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let total = *self.cdf.last().expect("built");
        let target = u.clamp(0.0, 1.0) * total;
        let j = self.cdf.partition_point(|&c| c <= target);
        if j == 0 {
            return self.lo;
        }
        if j >= self.cdf.len() {
            return self.lo + self.step * (self.cdf.len() - 1) as f64;
        }
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        self.lo + self.step * ((j - 1) as f64 + (target - c0) / (c1 - c0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// Finite interval carrying all but a `exp(-margin)`-relative sliver of mass.
fn bracket(energy: &UnivariateEnergy, domain: Interval, margin: f64) -> Result<(f64, f64)> {
    if !(domain.lo < domain.hi) {
        return Err(Error::Config(format!("empty domain [{}, {}]", domain.lo, domain.hi)));
    }
    let (mut lo, mut hi) = (domain.lo, domain.hi);
    if !domain.is_bounded() {
        if !energy.is_normalizable() {
            return Err(Error::NotNormalizable);
        }
        let anchor = if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            0.0
        };
        let radius = energy.shifted(anchor).outer_radius(margin);
        if !lo.is_finite() {
            lo = anchor - radius;
        }
        if !hi.is_finite() {
            hi = anchor + radius;
        }
    }
    for _ in 0..2 {
        let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
        let mut vals = [0.0; SCAN_POINTS];
        let mut max = f64::NEG_INFINITY;
        for (j, v) in vals.iter_mut().enumerate() {
            *v = energy.eval(lo + j as f64 * step);
            max = max.max(*v);
        }
        if !max.is_finite() {
            return Err(Error::ZeroMass);
        }
        let keep = |v: &f64| *v >= max - margin;
        let first = vals.iter().position(keep).unwrap_or(0);
        let last = vals.iter().rposition(keep).unwrap_or(SCAN_POINTS - 1);
        let new_lo = lo + first.saturating_sub(1) as f64 * step;
        let new_hi = lo + (last + 1).min(SCAN_POINTS - 1) as f64 * step;
        lo = new_lo;
        hi = new_hi;
    }
    Ok((lo, hi))
}

/// One draw from `∝ exp(e(t))` on `domain` with the default grid.
pub fn sample_univariate<R: Rng + ?Sized>(energy: &UnivariateEnergy, domain: Interval, rng: &mut R) -> Result<f64> {
    let g = GridCdf::build(energy, domain, DEFAULT_GRID_POINTS)?;
    Ok(g.sample(rng))
}

/// Energy of `x_i = t` with the other coordinates of `x` held fixed, up to
/// an additive constant.
pub fn conditional_energy(model: &Model, i: usize, x: &[f64]) -> Result<UnivariateEnergy> {
    let fam = model.family();
    check_len(fam.n(), x.len())?;
    if i >= fam.n() {
        return Err(Error::UnknownVariable { index: i, n: fam.n() });
    }
    let mut c = vec![0.0; fam.effective_degree() as usize + 1];
    for &k in fam.factors_of(i) {
        let f = &fam.factors()[k];
        let rest: f64 = f
            .iter()
            .filter(|&(v, _)| v != i)
            .map(|(v, d)| x[v].powi(d as i32))
            .product();
        c[f.degree(i) as usize] += model.theta()[k] * rest;
    }
    let p = fam.base_exponent() as usize;
    if p > 0 {
        c[p] -= 1.0;
    }
    Ok(UnivariateEnergy::new(c))
}

/// Gibbs chain settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub thinning: usize,
    pub grid_points: usize,
    /// Sample from the model restricted to `[-c, c]^n` instead of `R^n`.
    pub truncation: Option<f64>,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            thinning: 10,
            grid_points: DEFAULT_GRID_POINTS,
            truncation: None,
        }
    }
}

/// Sampling metadata stored alongside a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub burn_in: usize,
    pub thinning: usize,
    pub grid_points: usize,
    pub truncation: Option<f64>,
}

/// `M` samples in `R^n`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    n: usize,
    data: Vec<f64>,
    provenance: Provenance,
}

impl SampleBatch {
    pub fn new(n: usize, data: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if n == 0 || data.is_empty() || data.len() % n != 0 {
            return Err(Error::Dimension {
                expected: n.max(1),
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("non-finite sample entry".into()));
        }
        Ok(Self { n, data, provenance })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n);
        for r in rows {
            check_len(n, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(
            n,
            data,
            Provenance {
                seed: None,
                burn_in: 0,
                thinning: 1,
                grid_points: 0,
                truncation: None,
            },
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.data[m * self.n..(m + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// First `m` rows.
    pub fn head(&self, m: usize) -> Result<Self> {
        let m = m.min(self.len());
        Self::new(self.n, self.data[..m * self.n].to_vec(), self.provenance.clone())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Smallest per-coordinate effective sample size (batch means).
    pub fn effective_sample_size(&self) -> f64 {
        (0..self.n)
            .map(|j| stats::effective_sample_size(&self.column(j), 50))
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `x1,…,xn` and 17 significant digits per entry.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record((1..=self.n).map(|j| format!("x{j}")))
            .map_err(csv_err)?;
        for r in self.rows() {
            out.write_record(r.iter().map(|v| format!("{v:.16e}")))
                .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let n = rdr.headers().map_err(csv_err)?.len();
        let mut data = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            check_len(n, rec.len())?;
            for field in rec.iter() {
                data.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{field:?}: {e}")))?,
                );
            }
        }
        Self::new(
            n,
            data,
            Provenance {
                seed: None,
                burn_in: 0,
                thinning: 1,
                grid_points: 0,
                truncation: None,
            },
        )
    }

    /// Provenance sidecar, including sample count and effective sample size.
    pub fn sidecar_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            n: usize,
            m: usize,
            effective_sample_size: f64,
            #[serde(flatten)]
            provenance: &'a Provenance,
        }
        Ok(serde_json::to_string_pretty(&Sidecar {
            n: self.n,
            m: self.len(),
            effective_sample_size: self.effective_sample_size(),
            provenance: &self.provenance,
        })?)
    }

    /// Writes `path` (CSV) and `path.json` (sidecar).
    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)?;
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        std::fs::write(side, self.sidecar_json()?)?;
        Ok(())
    }

    /// Reads a CSV and, when present, its provenance sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let mut batch = Self::read_csv(std::fs::File::open(path)?)?;
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        if let Ok(s) = std::fs::read_to_string(&side) {
            if let Ok(p) = serde_json::from_str::<Provenance>(&s) {
                batch.provenance = p;
            }
        }
        Ok(batch)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

struct Term {
    theta: f64,
    degree: usize,
    others: Vec<(usize, i32)>,
}

/// Reusable systematic-scan Gibbs sampler for one model.
pub struct GibbsSampler<'a> {
    model: &'a Model,
    config: GibbsConfig,
    terms: Vec<Vec<Term>>,
    coeffs: Vec<f64>,
    grid: GridCdf,
    energy: UnivariateEnergy,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(model: &'a Model, config: GibbsConfig) -> Result<Self> {
        if config.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        let fam = model.family();
        let terms = (0..fam.n())
            .map(|i| {
                fam.factors_of(i)
                    .iter()
                    .map(|&k| {
                        let f = &fam.factors()[k];
                        Term {
                            theta: model.theta()[k],
                            degree: f.degree(i) as usize,
                            others: f
                                .iter()
                                .filter(|&(v, _)| v != i)
                                .map(|(v, d)| (v, d as i32))
                                .collect(),
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            model,
            config,
            terms,
            coeffs: vec![0.0; fam.effective_degree() as usize + 1],
            grid: GridCdf::new(config.grid_points),
            energy: UnivariateEnergy::default(),
        })
    }

    fn domain(&self) -> Interval {
        self.config
            .truncation
            .map_or(Interval::REAL, Interval::symmetric)
    }

    fn resample<R: Rng + ?Sized>(&mut self, i: usize, x: &mut [f64], rng: &mut R) -> Result<()> {
        self.coeffs.iter_mut().for_each(|c| *c = 0.0);
        for t in &self.terms[i] {
            let rest: f64 = t.others.iter().map(|&(v, d)| x[v].powi(d)).product();
            self.coeffs[t.degree] += t.theta * rest;
        }
        let p = self.model.family().base_exponent() as usize;
        if p > 0 {
            self.coeffs[p] -= 1.0;
        }
        std::mem::swap(&mut self.energy.coefficients, &mut self.coeffs);
        let domain = self.domain();
        let res = self.grid.rebuild(&self.energy, domain);
        std::mem::swap(&mut self.energy.coefficients, &mut self.coeffs);
        res?;
        x[i] = self.grid.sample(rng);
        Ok(())
    }

    fn sweep<R: Rng + ?Sized>(&mut self, x: &mut [f64], rng: &mut R) -> Result<()> {
        for i in 0..x.len() {
            self.resample(i, x, rng)?;
        }
        Ok(())
    }

    /// Runs a fresh chain from the origin and returns `m` thinned rows.
    pub fn run<R: Rng + ?Sized>(&mut self, m: usize, rng: &mut R) -> Result<Vec<f64>> {
        let n = self.model.family().n();
        let mut x = vec![0.0; n];
        for _ in 0..self.config.burn_in {
            self.sweep(&mut x, rng)?;
        }
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            for _ in 0..self.config.thinning {
                self.sweep(&mut x, rng)?;
            }
            out.extend_from_slice(&x);
        }
        Ok(out)
    }
}

/// Draws `m` rows from `model` with the given generator.
pub fn draw_samples<R: Rng + ?Sized>(model: &Model, m: usize, config: GibbsConfig, rng: &mut R) -> Result<SampleBatch> {
    if m == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let data = GibbsSampler::new(model, config)?.run(m, rng)?;
    SampleBatch::new(
        model.family().n(),
        data,
        Provenance {
            seed: None,
            burn_in: config.burn_in,
            thinning: config.thinning,
            grid_points: config.grid_points,
            truncation: config.truncation,
        },
    )
}

/// Draws `m` rows using a ChaCha8 stream seeded with `seed`.
pub fn draw_samples_seeded(model: &Model, m: usize, config: GibbsConfig, seed: u64) -> Result<SampleBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = draw_samples(model, m, config, &mut rng)?;
    batch.provenance.seed = Some(seed);
    Ok(batch)
}

/// Fraction of rows with `‖x‖∞ > s`.
pub fn tail_exceedance(batch: &SampleBatch, s: f64) -> f64 {
    let hits = batch.rows().filter(|r| sup_norm(r) > s).count();
    hits as f64 / batch.len() as f64
}

pub(crate) fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Keeps the rows with `‖x‖∞ ≤ c_t`, i.e. samples of the truncated model.
pub fn truncate_to_box(batch: &SampleBatch, c_t: f64) -> Result<SampleBatch> {
    let data: Vec<f64> = batch
        .rows()
        .filter(|r| sup_norm(r) <= c_t)
        .flatten()
        .copied()
        .collect();
    if data.is_empty() {
        return Err(Error::EmptyTruncation(c_t));
    }
    SampleBatch::new(batch.n, data, batch.provenance.clone())
}
