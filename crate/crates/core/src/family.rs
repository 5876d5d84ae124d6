//! Polynomial exponential families and their factor graphs.
//!
//! A family is a set of monomial basis functions `f_k(x) = prod_i x_i^{k_i}`
//! over `n` real variables together with a base measure
//! `h(x) = exp(-sum_i x_i^p)` (`p = 0` encodes `h = 1`). Factors are kept in
//! canonical order (lexicographic on their dense exponent sequences) so a
//! factor's position in the family is a stable identity.
//!
//! The factor graph links variable `i` to factor `k` whenever `x_i` appears in
//! `f_k`. Maximal factors are those whose support is not strictly contained
//! in another retained factor's support; their supports are the maximal
//! cliques, and the span of a clique is the set of factors with exactly that
//! support.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Sorted list of variable indices.
pub type Clique = Vec<usize>;

/// A monomial, stored sparsely as variable index -> positive degree.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<usize, u32>", into = "BTreeMap<usize, u32>")]
pub struct Factor {
    exponents: BTreeMap<usize, u32>,
}

impl TryFrom<BTreeMap<usize, u32>> for Factor {
    type Error = Error;

    fn try_from(map: BTreeMap<usize, u32>) -> Result<Self> {
        Factor::new(map)
    }
}

impl From<Factor> for BTreeMap<usize, u32> {
    fn from(f: Factor) -> Self {
        f.exponents
    }
}

impl Factor {
    /// Builds a factor from `(variable, degree)` pairs. Zero degrees are
    /// rejected, as are repeated variables.
    pub fn new<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, u32)>,
    {
        let mut exponents = BTreeMap::new();
        for (var, deg) in pairs {
            if deg == 0 {
                return Err(Error::InvalidFactor(format!("zero degree for variable {var}")));
            }
            if exponents.insert(var, deg).is_some() {
                return Err(Error::InvalidFactor(format!("variable {var} repeated")));
            }
        }
        Ok(Self { exponents })
    }

    /// The constant monomial.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Product of distinct variables, each to the first power.
    pub fn multilinear(vars: &[usize]) -> Result<Self> {
        Self::new(vars.iter().map(|&v| (v, 1)))
    }

    pub fn degree(&self, var: usize) -> u32 {
        self.exponents.get(&var).copied().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.exponents.values().sum()
    }

    /// Support `∂k`, ascending.
    pub fn support(&self) -> Clique {
        self.exponents.keys().copied().collect()
    }

    pub fn support_len(&self) -> usize {
        self.exponents.len()
    }

    pub fn contains(&self, var: usize) -> bool {
        self.exponents.contains_key(&var)
    }

    pub fn is_multilinear(&self) -> bool {
        self.exponents.values().all(|&d| d == 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.exponents.iter().map(|(&v, &d)| (v, d))
    }

    fn max_var(&self) -> Option<usize> {
        self.exponents.keys().next_back().copied()
    }

    /// `f_k(x)`. The constant factor evaluates to 1.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .map(|(&v, &d)| x[v].powi(d as i32))
            .product()
    }

    /// Order-1 or order-2 partial derivative in `x_var`. Zero whenever the
    /// variable's degree is below `order`.
    pub fn partial(&self, var: usize, order: u32, x: &[f64]) -> f64 {
        let k = self.degree(var);
        if k < order {
            return 0.0;
        }
        let coeff = match order {
            0 => 1.0,
            1 => k as f64,
            _ => (k * (k - 1)) as f64,
        };
        let mut out = coeff * x[var].powi((k - order) as i32);
        for (&v, &d) in &self.exponents {
            if v != var {
                out *= x[v].powi(d as i32);
            }
        }
        out
    }

    fn check_dim(&self, x: &[f64], n: usize) -> Result<()> {
        check_len(n, x.len())?;
        match self.max_var() {
            Some(v) if v >= n => Err(Error::UnknownVariable { index: v, n }),
            _ => Ok(()),
        }
    }
}

impl PartialOrd for Factor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic on dense exponent sequences `(k_0, k_1, ...)`.
impl Ord for Factor {
    fn cmp(&self, other: &Self) -> Ordering {
        let vars: BTreeSet<usize> = self
            .exponents
            .keys()
            .chain(other.exponents.keys())
            .copied()
            .collect();
        for v in vars {
            match self.degree(v).cmp(&other.degree(v)) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

impl std::fmt::Display for Factor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.exponents.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for (&v, &d) in &self.exponents {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if d == 1 {
                write!(f, "x{}", v + 1)?;
            } else {
                write!(f, "x{}^{}", v + 1, d)?;
            }
        }
        Ok(())
    }
}

/// `f_k(x)` with a dimension check against `n`.
pub fn eval_basis(factor: &Factor, x: &[f64], n: usize) -> Result<f64> {
    factor.check_dim(x, n)?;
    Ok(factor.eval(x))
}

/// `∂^order f_k / ∂x_i^order` with a dimension check against `n`.
pub fn partial_derivative(factor: &Factor, i: usize, order: u32, x: &[f64], n: usize) -> Result<f64> {
    factor.check_dim(x, n)?;
    if i >= n {
        return Err(Error::UnknownVariable { index: i, n });
    }
    if order == 0 || order > 2 {
        return Err(Error::InvalidFactor(format!("derivative order {order} not in {{1, 2}}")));
    }
    Ok(factor.partial(i, order, x))
}

/// A polynomial exponential family.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    n: usize,
    d: u32,
    w: usize,
    base_exponent: u32,
    factors: Vec<Factor>,
    by_var: Vec<Vec<usize>>,
}

impl Family {
    /// Builds a family; factors are sorted into canonical order.
    pub fn new(n: usize, d: u32, base_exponent: u32, factors: Vec<Factor>) -> Result<Self> {
        let (sorted, _) = canonicalize(factors)?;
        Self::from_sorted(n, d, base_exponent, sorted)
    }

    fn from_sorted(n: usize, d: u32, base_exponent: u32, factors: Vec<Factor>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidFamily("no variables".into()));
        }
        if factors.is_empty() {
            return Err(Error::InvalidFamily("empty factor set".into()));
        }
        let mut by_var = vec![Vec::new(); n];
        let mut w = 0;
        for (idx, f) in factors.iter().enumerate() {
            if f.support_len() == 0 {
                return Err(Error::InvalidFamily("constant factor in family".into()));
            }
            if f.total_degree() > d {
                return Err(Error::InvalidFamily(format!(
                    "factor {f} has degree {} > d = {d}",
                    f.total_degree()
                )));
            }
            if let Some(v) = f.max_var() {
                if v >= n {
                    return Err(Error::UnknownVariable { index: v, n });
                }
            }
            for v in f.support() {
                by_var[v].push(idx);
            }
            w = w.max(f.support_len());
        }
        Ok(Self {
            n,
            d,
            w,
            base_exponent,
            factors,
            by_var,
        })
    }

    /// Every monomial of total degree `1..=d` over at most `w` distinct variables.
    pub fn all_monomials(n: usize, d: u32, w: usize, base_exponent: u32) -> Result<Self> {
        let mut out = Vec::new();
        let mut current = vec![0u32; n];
        enumerate_monomials(0, d, w, &mut current, &mut out);
        Self::new(n, d, base_exponent, out)
    }

    /// Every product of `1..=order` distinct variables.
    pub fn multilinear(n: usize, order: usize, base_exponent: u32) -> Result<Self> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        enumerate_subsets(0, n, order, &mut stack, &mut out);
        let factors = out
            .iter()
            .map(|s: &Vec<usize>| Factor::multilinear(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, order as u32, base_exponent, factors)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Interaction order: the largest factor support.
    pub fn w(&self) -> usize {
        self.w
    }

    pub fn base_exponent(&self) -> u32 {
        self.base_exponent
    }

    /// Degree of the family with the base measure folded in as a monomial.
    pub fn effective_degree(&self) -> u32 {
        self.d.max(self.base_exponent)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factor(&self, idx: usize) -> Result<&Factor> {
        self.factors.get(idx).ok_or(Error::UnknownFactor(idx))
    }

    /// Index of a factor, if present.
    pub fn index_of(&self, factor: &Factor) -> Option<usize> {
        self.factors.binary_search(factor).ok()
    }

    /// `K_i`: indices of factors containing variable `i`, ascending.
    pub fn factors_of(&self, i: usize) -> &[usize] {
        &self.by_var[i]
    }

    /// `∂/∂x_i log h(x)`.
    pub fn base_grad(&self, i: usize, x: &[f64]) -> f64 {
        let p = self.base_exponent;
        if p == 0 {
            0.0
        } else {
            -(p as f64) * x[i].powi(p as i32 - 1)
        }
    }

    /// `∂²/∂x_i² log h(x)`.
    pub fn base_hess(&self, i: usize, x: &[f64]) -> f64 {
        let p = self.base_exponent;
        if p < 2 {
            0.0
        } else {
            -((p * (p - 1)) as f64) * x[i].powi(p as i32 - 2)
        }
    }

    /// `<θ, T(x)> + log h(x)`.
    pub fn log_density_unnormalized(&self, theta: &[f64], x: &[f64]) -> f64 {
        let mut e: f64 = self
            .factors
            .iter()
            .zip(theta)
            .map(|(f, t)| t * f.eval(x))
            .sum();
        if self.base_exponent > 0 {
            e -= x.iter().map(|v| v.powi(self.base_exponent as i32)).sum::<f64>();
        }
        e
    }

    /// Factor graph over all factors of the family.
    pub fn factor_graph(&self) -> FactorGraph {
        build_factor_graph(self, 0..self.len()).expect("all indices are valid")
    }
}

fn enumerate_monomials(var: usize, budget: u32, w: usize, current: &mut Vec<u32>, out: &mut Vec<Factor>) {
    if var == current.len() {
        let used = current.iter().filter(|&&k| k > 0).count();
        if used > 0 {
            let f = Factor::new(
                current
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(v, &k)| (v, k)),
            )
            .expect("positive degrees");
            out.push(f);
        }
        return;
    }
    let used = current[..var].iter().filter(|&&k| k > 0).count();
    enumerate_monomials(var + 1, budget, w, current, out);
    if used < w {
        for k in 1..=budget {
            current[var] = k;
            enumerate_monomials(var + 1, budget - k, w, current, out);
        }
        current[var] = 0;
    }
}

fn enumerate_subsets(start: usize, n: usize, order: usize, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if !stack.is_empty() {
        out.push(stack.clone());
    }
    if stack.len() == order {
        return;
    }
    for v in start..n {
        stack.push(v);
        enumerate_subsets(v + 1, n, order, stack, out);
        stack.pop();
    }
}

/// Sorts factors canonically; returns the sorted list and, for each sorted
/// position, the original index.
pub(crate) fn canonicalize(factors: Vec<Factor>) -> Result<(Vec<Factor>, Vec<usize>)> {
    let mut order: Vec<usize> = (0..factors.len()).collect();
    order.sort_by(|&a, &b| factors[a].cmp(&factors[b]));
    for pair in order.windows(2) {
        if factors[pair[0]] == factors[pair[1]] {
            return Err(Error::InvalidFamily(format!("duplicate factor {}", factors[pair[0]])));
        }
    }
    let sorted = order.iter().map(|&i| factors[i].clone()).collect();
    Ok((sorted, order))
}

/// Tail-decay data: `Pr(‖x‖∞ > s) ≤ exp(-k s^{d-1})` for `s ≥ C_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub decay: f64,
    pub c_t: u32,
}

impl TailSpec {
    /// Checks `max((ln 2 / k)^{1/(d-1)}, 1) ≤ C_t ≤ e^n`.
    pub fn validate(&self, d: u32, n: usize) -> Result<()> {
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::InvalidModel(format!("tail decay {} must be positive", self.decay)));
        }
        let ratio = std::f64::consts::LN_2 / self.decay;
        let lower = if d <= 1 {
            if ratio > 1.0 {
                f64::INFINITY
            } else {
                1.0
            }
        } else {
            ratio.powf(1.0 / (d as f64 - 1.0)).max(1.0)
        };
        let c = self.c_t as f64;
        if c < lower || c > (n as f64).exp() {
            return Err(Error::InvalidModel(format!(
                "C_t = {} outside [{lower}, e^{n}]",
                self.c_t
            )));
        }
        Ok(())
    }
}

/// A family with true parameters, an integer group-ℓ1 bound and tail data.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    family: Family,
    theta: Vec<f64>,
    bound: u32,
    tail: TailSpec,
}

impl Model {
    /// `theta` is aligned with `family.factors()`.
    pub fn new(family: Family, theta: Vec<f64>, bound: u32, tail: TailSpec) -> Result<Self> {
        check_len(family.len(), theta.len())?;
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        if bound == 0 {
            return Err(Error::InvalidModel("bound B must be a positive integer".into()));
        }
        let norms = group_l1_norms(&family, &theta)?;
        if let Some((j, g)) = norms
            .iter()
            .enumerate()
            .find(|(_, &g)| g > bound as f64 * (1.0 + 1e-12))
        {
            return Err(Error::InvalidModel(format!(
                "group l1 norm of variable {j} is {g} > B = {bound}"
            )));
        }
        tail.validate(family.effective_degree(), family.n())?;
        Ok(Self {
            family,
            theta,
            bound,
            tail,
        })
    }

    /// Builds from `(factor, θ)` pairs in any order.
    pub fn from_terms(
        n: usize,
        d: u32,
        base_exponent: u32,
        terms: Vec<(Factor, f64)>,
        bound: u32,
        tail: TailSpec,
    ) -> Result<Self> {
        let (factors, theta): (Vec<_>, Vec<_>) = terms.into_iter().unzip();
        let (sorted, order) = canonicalize(factors)?;
        let theta = order.iter().map(|&i| theta[i]).collect();
        let family = Family::from_sorted(n, d, base_exponent, sorted)?;
        Self::new(family, theta, bound, tail)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn bound(&self) -> u32 {
        self.bound
    }

    pub fn tail(&self) -> TailSpec {
        self.tail
    }

    /// Indices of factors with nonzero true weight (`K*`).
    pub fn support(&self) -> Vec<usize> {
        self.theta
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// `G*`: the factor graph of the nonzero-weight factors.
    pub fn true_graph(&self) -> FactorGraph {
        build_factor_graph(&self.family, self.support()).expect("indices come from the family")
    }

    /// The model structure `S = M_cli(G*)`.
    pub fn structure(&self) -> StructureSet {
        maximal_structure(&self.true_graph())
    }

    pub fn log_density_unnormalized(&self, x: &[f64]) -> f64 {
        self.family.log_density_unnormalized(&self.theta, x)
    }
}

/// Bipartite variable/factor graph restricted to a set of retained factors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorGraph {
    n: usize,
    supports: BTreeMap<usize, Clique>,
}

impl FactorGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Retained factor indices, ascending.
    pub fn factors(&self) -> Vec<usize> {
        self.supports.keys().copied().collect()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.supports.contains_key(&k)
    }

    pub fn support(&self, k: usize) -> Option<&Clique> {
        self.supports.get(&k)
    }

    /// Edge set `{(i, k) : i ∈ ∂k}`, ordered by factor then variable.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.supports
            .iter()
            .flat_map(|(&k, s)| s.iter().map(move |&i| (i, k)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.supports.values().map(Vec::len).sum()
    }
}

/// Factor graph of `family` restricted to `kept`.
pub fn build_factor_graph<I>(family: &Family, kept: I) -> Result<FactorGraph>
where
    I: IntoIterator<Item = usize>,
{
    let mut supports = BTreeMap::new();
    for k in kept {
        let f = family.factor(k)?;
        supports.insert(k, f.support());
    }
    Ok(FactorGraph {
        n: family.n(),
        supports,
    })
}

/// Restricts a graph's factor side to `kept`; every index must be present.
pub fn induced_subgraph<I>(graph: &FactorGraph, kept: I) -> Result<FactorGraph>
where
    I: IntoIterator<Item = usize>,
{
    let mut supports = BTreeMap::new();
    for k in kept {
        let s = graph.supports.get(&k).ok_or(Error::UnknownFactor(k))?;
        supports.insert(k, s.clone());
    }
    Ok(FactorGraph { n: graph.n, supports })
}

/// Maximal cliques of a factor graph and their spans.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureSet {
    spans: BTreeMap<Clique, Vec<usize>>,
}

impl StructureSet {
    pub fn from_spans(spans: BTreeMap<Clique, Vec<usize>>) -> Self {
        Self { spans }
    }

    pub fn cliques(&self) -> Vec<Clique> {
        self.spans.keys().cloned().collect()
    }

    pub fn clique_set(&self) -> BTreeSet<Clique> {
        self.spans.keys().cloned().collect()
    }

    /// `[c]_sp`, or `None` if `c` is not a maximal clique.
    pub fn span(&self, clique: &[usize]) -> Option<&[usize]> {
        self.spans.get(clique).map(Vec::as_slice)
    }

    pub fn spans(&self) -> &BTreeMap<Clique, Vec<usize>> {
        &self.spans
    }

    /// All maximal factors, ascending.
    pub fn maximal_factors(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.spans.values().flatten().copied().collect();
        out.sort_unstable();
        out
    }

    /// Maximal factors whose support contains `i`.
    pub fn maximal_factors_of(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .spans
            .iter()
            .filter(|(c, _)| c.contains(&i))
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

fn is_strict_subset(a: &[usize], b: &[usize]) -> bool {
    a.len() < b.len() && a.iter().all(|v| b.binary_search(v).is_ok())
}

/// Groups maximal factors by support. Equal supports are all retained.
pub fn maximal_structure(graph: &FactorGraph) -> StructureSet {
    let mut by_support: BTreeMap<Clique, Vec<usize>> = BTreeMap::new();
    for (&k, s) in &graph.supports {
        by_support.entry(s.clone()).or_default().push(k);
    }
    let supports: Vec<&Clique> = by_support.keys().collect();
    let maximal: BTreeSet<Clique> = supports
        .iter()
        .filter(|a| !supports.iter().any(|b| is_strict_subset(a, b)))
        .map(|a| (*a).clone())
        .collect();
    by_support.retain(|c, _| maximal.contains(c));
    StructureSet { spans: by_support }
}

/// `g_j = Σ_{k ∈ K_j} |θ_k|` for every variable `j`.
pub fn group_l1_norms(family: &Family, theta: &[f64]) -> Result<Vec<f64>> {
    check_len(family.len(), theta.len())?;
    Ok((0..family.n())
        .map(|j| family.factors_of(j).iter().map(|&k| theta[k].abs()).sum())
        .collect())
}

#[derive(Serialize, Deserialize)]
struct Document {
    n: usize,
    d: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<usize>,
    base_exponent: u32,
    factors: Vec<Factor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<Vec<f64>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail: Option<TailDocument>,
}

#[derive(Serialize, Deserialize)]
struct TailDocument {
    k: f64,
    #[serde(rename = "C_t")]
    c_t: f64,
}

fn positive_integer(value: f64, what: &str) -> Result<u32> {
    if value.fract() != 0.0 || value < 1.0 || value > u32::MAX as f64 {
        return Err(Error::InvalidModel(format!("{what} = {value} must be a positive integer")));
    }
    Ok(value as u32)
}

impl Document {
    fn family(&self) -> Result<(Family, Vec<usize>)> {
        let (sorted, order) = canonicalize(self.factors.clone())?;
        let family = Family::from_sorted(self.n, self.d, self.base_exponent, sorted)?;
        if let Some(w) = self.w {
            if w != family.w() {
                return Err(Error::InvalidFamily(format!(
                    "declared w = {w} but factors give w = {}",
                    family.w()
                )));
            }
        }
        Ok((family, order))
    }

    fn from_family(family: &Family) -> Self {
        Self {
            n: family.n,
            d: family.d,
            w: Some(family.w),
            base_exponent: family.base_exponent,
            factors: family.factors.clone(),
            theta: None,
            bound: None,
            tail: None,
        }
    }
}

impl Family {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Document::from_family(self))?)
    }

    /// Parses a family document; any `theta`, `B` or `tail` fields are ignored.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(s)?;
        Ok(doc.family()?.0)
    }
}

impl Model {
    pub fn to_json(&self) -> Result<String> {
        let mut doc = Document::from_family(&self.family);
        doc.theta = Some(self.theta.clone());
        doc.bound = Some(self.bound as f64);
        doc.tail = Some(TailDocument {
            k: self.tail.decay,
            c_t: self.tail.c_t as f64,
        });
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Parses a model document. `B` and `C_t` must be integers.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Document = serde_json::from_str(s)?;
        let (family, order) = doc.family()?;
        let theta = doc
            .theta
            .as_ref()
            .ok_or_else(|| Error::InvalidModel("missing theta".into()))?;
        check_len(order.len(), theta.len())?;
        let theta = order.iter().map(|&i| theta[i]).collect();
        let bound = positive_integer(
            doc.bound.ok_or_else(|| Error::InvalidModel("missing B".into()))?,
            "B",
        )?;
        let tail = doc
            .tail
            .as_ref()
            .ok_or_else(|| Error::InvalidModel("missing tail".into()))?;
        let tail = TailSpec {
            decay: tail.k,
            c_t: positive_integer(tail.c_t, "C_t")?,
        };
        Model::new(family, theta, bound, tail)
    }
}
