//! Neighborhood estimation and iterative clique pruning.
//!
//! Every estimate solves the local score-matching quadratic of one vertex
//! under the group ℓ1 constraints. Quadratics are assembled once per vertex
//! over all of `K_i`; restricting the factor set afterwards only selects rows
//! and columns, since the local loss is linear in the statistics.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{build_factor_graph, maximal_structure, Clique, Family, Model, StructureSet};
use crate::qp::{solve, GroupL1Constraints, SolverOptions};
use crate::sampler::SampleBatch;
use crate::score::{assemble_quadratic, LocalQuadratic};

/// How line 12 of the pruning loop compares an estimate with the threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneRule {
    /// `|θ̂_k| > τ`.
    #[default]
    Absolute,
    /// `θ̂_k > τ`, as written.
    Signed,
}

impl PruneRule {
    pub fn keeps(self, estimate: f64, threshold: f64) -> bool {
        match self {
            PruneRule::Absolute => estimate.abs() > threshold,
            PruneRule::Signed => estimate > threshold,
        }
    }
}

/// Which factors enter the reported errors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorTarget {
    /// Maximal factors touching each vertex.
    #[default]
    Maximal,
    /// Every active factor of every vertex.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryOptions {
    pub bound: f64,
    pub eps: f64,
    /// Pruning threshold; `None` means `√eps`.
    pub threshold: Option<f64>,
    pub rule: PruneRule,
    pub target: ErrorTarget,
    pub solver: SolverOptions,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            bound: 1.0,
            eps: 0.04,
            threshold: None,
            rule: PruneRule::Absolute,
            target: ErrorTarget::Maximal,
            solver: SolverOptions::default(),
        }
    }
}

impl RecoveryOptions {
    pub fn resolved_threshold(&self) -> f64 {
        self.threshold.unwrap_or_else(|| self.eps.sqrt())
    }

    fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0) {
            return Err(Error::Config(format!("bound {} must be positive", self.bound)));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Config(format!("eps {} must lie in (0, 1]", self.eps)));
        }
        Ok(())
    }
}

/// Constrained minimiser of one vertex's local loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodEstimate {
    pub vertex: usize,
    /// Family indices of the active factors, ascending.
    pub active: Vec<usize>,
    pub theta_hat: Vec<f64>,
    pub value: f64,
    pub eta_bound: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl NeighborhoodEstimate {
    fn empty(vertex: usize) -> Self {
        Self {
            vertex,
            active: Vec::new(),
            theta_hat: Vec::new(),
            value: 0.0,
            eta_bound: 0.0,
            iterations: 0,
            converged: true,
        }
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.active.binary_search(&k).ok().map(|p| self.theta_hat[p])
    }
}

/// Solves `quad` restricted to `active` under the group constraints.
pub fn solve_on(
    family: &Family,
    quad: &LocalQuadratic,
    active: &[usize],
    bound: f64,
    solver: &SolverOptions,
) -> Result<NeighborhoodEstimate> {
    if active.is_empty() {
        return Ok(NeighborhoodEstimate::empty(quad.vertex()));
    }
    let sub = quad.restrict(active)?;
    let constraints = GroupL1Constraints::for_active(family, active, bound)?;
    let r = solve(&sub, &constraints, solver)?;
    Ok(NeighborhoodEstimate {
        vertex: quad.vertex(),
        active: active.to_vec(),
        theta_hat: r.theta_hat,
        value: r.value,
        eta_bound: r.eta_bound,
        iterations: r.iterations,
        converged: r.converged,
    })
}

/// Estimate over all of `K_i`.
pub fn learn_neighborhood(
    family: &Family,
    i: usize,
    batch: &SampleBatch,
    bound: f64,
    solver: &SolverOptions,
) -> Result<NeighborhoodEstimate> {
    let quad = assemble_quadratic(family, i, batch)?;
    solve_on(family, &quad, family.factors_of(i), bound, solver)
}

/// One vertex's estimate of one maximal factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorEstimate {
    pub vertex: usize,
    pub factor: usize,
    pub label: String,
    pub estimate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sq_error: Option<f64>,
}

/// Per-vertex estimates reported on the maximal factors of the family graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyEstimate {
    pub estimates: Vec<NeighborhoodEstimate>,
    pub entries: Vec<FactorEstimate>,
}

pub fn recover_family_structure(
    family: &Family,
    batch: &SampleBatch,
    bound: f64,
    solver: &SolverOptions,
) -> Result<FamilyEstimate> {
    let quads = assemble_all(family, batch)?;
    recover_family_structure_from(family, &quads, bound, solver)
}

pub fn recover_family_structure_from(
    family: &Family,
    quads: &[LocalQuadratic],
    bound: f64,
    solver: &SolverOptions,
) -> Result<FamilyEstimate> {
    let estimates = solve_all(family, quads, |i| family.factors_of(i).to_vec(), bound, solver)?;
    let structure = maximal_structure(&family.factor_graph());
    let entries = maximal_entries(family, &structure, &estimates, None);
    Ok(FamilyEstimate { estimates, entries })
}

/// Local quadratics of every vertex over their full `K_i`.
pub fn assemble_all(family: &Family, batch: &SampleBatch) -> Result<Vec<LocalQuadratic>> {
    (0..family.n())
        .map(|i| assemble_quadratic(family, i, batch))
        .collect()
}

fn solve_all<F>(
    family: &Family,
    quads: &[LocalQuadratic],
    active: F,
    bound: f64,
    solver: &SolverOptions,
) -> Result<Vec<NeighborhoodEstimate>>
where
    F: Fn(usize) -> Vec<usize> + Sync,
{
    if quads.len() != family.n() {
        return Err(Error::Dimension {
            expected: family.n(),
            got: quads.len(),
        });
    }
    quads
        .par_iter()
        .enumerate()
        .map(|(i, q)| solve_on(family, q, &active(i), bound, solver))
        .collect()
}

/// `θ*` expressed on `family`'s factor indices (zero where the model lacks the factor).
pub fn truth_on_family(family: &Family, model: &Model) -> Vec<f64> {
    let mf = model.family();
    family
        .factors()
        .iter()
        .map(|f| mf.index_of(f).map_or(0.0, |k| model.theta()[k]))
        .collect()
}

fn entry(family: &Family, est: &NeighborhoodEstimate, k: usize, truth: Option<&[f64]>) -> FactorEstimate {
    let estimate = est.get(k).unwrap_or(0.0);
    let t = truth.map(|t| t[k]);
    FactorEstimate {
        vertex: est.vertex,
        factor: k,
        label: family.factors()[k].to_string(),
        estimate,
        truth: t,
        sq_error: t.map(|t| (estimate - t).powi(2)),
    }
}

fn maximal_entries(
    family: &Family,
    structure: &StructureSet,
    estimates: &[NeighborhoodEstimate],
    truth: Option<&[f64]>,
) -> Vec<FactorEstimate> {
    estimates
        .iter()
        .flat_map(|est| {
            structure
                .maximal_factors_of(est.vertex)
                .into_iter()
                .map(move |k| entry(family, est, k, truth))
        })
        .collect()
}

/// A maximal clique with its span, as reported.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliqueEntry {
    pub clique: Clique,
    pub span: Vec<usize>,
}

fn clique_entries(s: &StructureSet) -> Vec<CliqueEntry> {
    s.spans()
        .iter()
        .map(|(c, sp)| CliqueEntry {
            clique: c.clone(),
            span: sp.clone(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub s: usize,
    /// `K^s`.
    pub factors: Vec<usize>,
    /// `M_cli(G^s)`.
    pub cliques: Vec<CliqueEntry>,
    pub pruned_cliques: Vec<Clique>,
    /// `N^s`.
    pub pruned_factors: Vec<usize>,
    pub max_eta_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub threshold: f64,
    pub rule: PruneRule,
    /// `Ŝ`.
    pub structure: Vec<CliqueEntry>,
    pub iterations: Vec<IterationLog>,
    /// `θ̂_i` from the last pass.
    pub estimates: Vec<NeighborhoodEstimate>,
    /// Target-factor estimates, with errors when the truth is known.
    pub entries: Vec<FactorEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sq_error: Option<f64>,
    pub max_eta_bound: f64,
    pub converged: bool,
}

impl RecoveryReport {
    pub fn structure_set(&self) -> BTreeSet<Clique> {
        self.structure.iter().map(|c| c.clique.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs the pruning loop on a fresh batch.
pub fn algorithm1(
    family: &Family,
    batch: &SampleBatch,
    options: &RecoveryOptions,
    truth: Option<&Model>,
) -> Result<RecoveryReport> {
    let quads = assemble_all(family, batch)?;
    algorithm1_from(family, &quads, options, truth)
}

/// Runs the pruning loop on precomputed full-`K_i` quadratics.
pub fn algorithm1_from(
    family: &Family,
    quads: &[LocalQuadratic],
    options: &RecoveryOptions,
    truth: Option<&Model>,
) -> Result<RecoveryReport> {
    options.validate()?;
    let threshold = options.resolved_threshold();
    let truth = truth.map(|m| truth_on_family(family, m));
    let mut kept: BTreeSet<usize> = (0..family.len()).collect();
    let mut iterations = Vec::new();
    let mut last: Option<(StructureSet, Vec<NeighborhoodEstimate>)> = None;

    for s in 0..=family.w() {
        let graph = build_factor_graph(family, kept.iter().copied())?;
        let structure = maximal_structure(&graph);
        let estimates = solve_all(
            family,
            quads,
            |i| {
                family
                    .factors_of(i)
                    .iter()
                    .copied()
                    .filter(|k| kept.contains(k))
                    .collect()
            },
            options.bound,
            &options.solver,
        )?;

        let mut pruned_cliques = Vec::new();
        let mut pruned_factors = Vec::new();
        for (c, span) in structure.spans() {
            let survives = estimates.iter().any(|est| {
                span.iter()
                    .any(|&k| est.get(k).is_some_and(|v| options.rule.keeps(v, threshold)))
            });
            if !survives {
                pruned_cliques.push(c.clone());
                pruned_factors.extend(span.iter().copied());
            }
        }
        pruned_factors.sort_unstable();

        iterations.push(IterationLog {
            s,
            factors: kept.iter().copied().collect(),
            cliques: clique_entries(&structure),
            pruned_cliques,
            pruned_factors: pruned_factors.clone(),
            max_eta_bound: estimates.iter().map(|e| e.eta_bound).fold(0.0, f64::max),
        });
        for k in &pruned_factors {
            kept.remove(k);
        }
        last = Some((structure, estimates));
    }

    let (structure, estimates) = last.expect("w + 1 ≥ 1 passes");
    let entries = match options.target {
        ErrorTarget::Maximal => maximal_entries(family, &structure, &estimates, truth.as_deref()),
        ErrorTarget::All => estimates
            .iter()
            .flat_map(|est| {
                let truth = truth.as_deref();
                est.active.iter().map(move |&k| entry(family, est, k, truth))
            })
            .collect(),
    };
    let max_sq_error = truth
        .as_ref()
        .map(|_| entries.iter().filter_map(|e| e.sq_error).fold(0.0, f64::max));
    Ok(RecoveryReport {
        threshold,
        rule: options.rule,
        structure: clique_entries(&structure),
        iterations,
        max_eta_bound: estimates.iter().map(|e| e.eta_bound).fold(0.0, f64::max),
        converged: estimates.iter().all(|e| e.converged),
        estimates,
        entries,
        max_sq_error,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureDiff {
    pub missing: Vec<Clique>,
    pub spurious: Vec<Clique>,
    pub exact: bool,
}

pub fn structure_diff(s_hat: &BTreeSet<Clique>, s_true: &BTreeSet<Clique>) -> StructureDiff {
    let missing: Vec<Clique> = s_true.difference(s_hat).cloned().collect();
    let spurious: Vec<Clique> = s_hat.difference(s_true).cloned().collect();
    StructureDiff {
        exact: missing.is_empty() && spurious.is_empty(),
        missing,
        spurious,
    }
}

/// Estimates of each maximal factor grouped by factor, for consensus checks.
pub fn estimates_by_factor(entries: &[FactorEstimate]) -> BTreeMap<usize, Vec<f64>> {
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for e in entries {
        out.entry(e.factor).or_default().push(e.estimate);
    }
    out
}
