//! Seeded sample-complexity sweeps.
//!
//! A sweep draws one Gibbs chain per trial (seed `master ^ trial`) of length
//! `max(M grid)` and evaluates every grid point on a prefix of it, so rows
//! for the same trial are nested and the whole sweep is a deterministic
//! function of the configuration.

use std::io::{Read, Write};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Family, Model, TailSpec};
use crate::qp::SolverOptions;
use crate::recovery::{
    algorithm1_from, assemble_all, recover_family_structure_from, structure_diff, ErrorTarget, PruneRule,
    RecoveryOptions,
};
use crate::sampler::{draw_samples_seeded, trial_seed, GibbsConfig, SampleBatch};
use crate::score::assemble_quadratic;
use crate::stats::{median, ols_slope, wilson_interval};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Maximal factors of the family, one estimate per vertex.
    Neighborhood,
    /// Iterative clique pruning with structure comparison.
    Algorithm1,
    /// Every factor of every vertex (multilinear models).
    MultilinearTotal,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Neighborhood => "neighborhood",
            Scenario::Algorithm1 => "algorithm1",
            Scenario::MultilinearTotal => "multilinear_total",
        }
    }
}

/// Random model specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub d: u32,
    pub w: usize,
    #[serde(default)]
    pub base_exponent: u32,
    /// Probability that a factor receives a nonzero weight.
    pub sparsity: f64,
    /// Magnitude range; signs are random.
    pub weight_range: [f64; 2],
    #[serde(default)]
    pub multilinear: bool,
    #[serde(rename = "B")]
    pub bound: u32,
    #[serde(rename = "C_t")]
    pub c_t: u32,
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    1.0
}

impl GeneratorSpec {
    /// Draws a model whose group norms all stay within `B`.
    pub fn generate(&self, seed: u64) -> Result<Model> {
        let fam = if self.multilinear {
            Family::multilinear(self.n, self.w, self.base_exponent)?
        } else {
            Family::all_monomials(self.n, self.d, self.w, self.base_exponent)?
        };
        let [lo, hi] = self.weight_range;
        if !(0.0 <= lo && lo <= hi) || !(0.0..=1.0).contains(&self.sparsity) {
            return Err(Error::Config("generator needs 0 ≤ lo ≤ hi and sparsity in [0, 1]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta: Vec<f64> = (0..fam.len())
            .map(|_| {
                if rng.random::<f64>() < self.sparsity {
                    let mag = lo + (hi - lo) * rng.random::<f64>();
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                } else {
                    0.0
                }
            })
            .collect();
        let worst = crate::family::group_l1_norms(&fam, &theta)?
            .into_iter()
            .fold(0.0, f64::max);
        let b = self.bound as f64;
        if worst > b {
            let s = b / worst * (1.0 - 1e-9);
            theta.iter_mut().for_each(|t| *t *= s);
        }
        Model::new(
            fam,
            theta,
            self.bound,
            TailSpec {
                decay: self.decay,
                c_t: self.c_t,
            },
        )
    }
}

/// Acceptance checks evaluated by `report` and the CLI's `--check`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckSpec {
    /// Median `max_sq_error` strictly decreasing along the M grid.
    pub median_decreasing: bool,
    /// Allowed range of the fitted slope of median error² vs M.
    pub slope_range: Option<[f64; 2]>,
    /// Minimum success rate at the largest M.
    pub min_success: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Scenario id written to the CSV; defaults to the scenario name.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub model: Option<serde_json::Value>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    /// Family used for estimation; defaults to the model's family.
    #[serde(default)]
    pub family: Option<serde_json::Value>,
    #[serde(rename = "M_grid", alias = "m_grid")]
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub eps: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Group bound for estimation; defaults to the model's `B`.
    #[serde(rename = "B", alias = "bound", default)]
    pub bound: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampler: GibbsConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub rule: PruneRule,
    /// Record wall-clock times (breaks byte-identical reruns).
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub check: CheckSpec,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_rho() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub csv: String,
    pub report: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            csv: "sweep.csv".into(),
            report: "report.json".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_grid.is_empty() || self.m_grid.windows(2).any(|w| w[0] >= w[1]) || self.m_grid[0] == 0 {
            return Err(Error::Config("M grid must be non-empty, positive and strictly ascending".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Config(format!("eps {} must lie in (0, 1]", self.eps)));
        }
        if self.model.is_some() == self.generator.is_some() {
            return Err(Error::Config("exactly one of model or generator is required".into()));
        }
        if matches!(self.bound, Some(b) if !(b > 0.0)) {
            return Err(Error::Config("B must be positive".into()));
        }
        Ok(())
    }

    pub fn scenario_id(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.scenario.name().to_string())
    }

    /// The true model (generated models use a stream derived from the seed).
    pub fn model(&self) -> Result<Model> {
        match (&self.model, &self.generator) {
            (Some(v), _) => Model::from_json(&v.to_string()).map_err(config_error),
            (None, Some(g)) => g.generate(self.seed ^ 0x9E37_79B9_7F4A_7C15),
            (None, None) => Err(Error::Config("no model".into())),
        }
    }

    pub fn estimation_family(&self, model: &Model) -> Result<Family> {
        match &self.family {
            Some(v) => Family::from_json(&v.to_string()).map_err(config_error),
            None => Ok(model.family().clone()),
        }
    }

    pub fn recovery_options(&self, model: &Model) -> RecoveryOptions {
        RecoveryOptions {
            bound: self.bound.unwrap_or(model.bound() as f64),
            eps: self.eps,
            threshold: self.threshold,
            rule: self.rule,
            target: match self.scenario {
                Scenario::MultilinearTotal => ErrorTarget::All,
                _ => ErrorTarget::Maximal,
            },
            solver: self.solver,
        }
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub n: usize,
    pub d: u32,
    pub w: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub trial: usize,
    pub max_sq_error: f64,
    pub structure_exact: Option<bool>,
    pub eta_bound: f64,
    pub wall_time_ms: u64,
}

pub const CSV_HEADER: [&str; 10] = [
    "scenario",
    "n",
    "d",
    "w",
    "M",
    "trial",
    "max_sq_error",
    "structure_exact",
    "eta_bound",
    "wall_time_ms",
];

pub fn write_rows<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in rows {
        out.write_record([
            r.scenario.clone(),
            r.n.to_string(),
            r.d.to_string(),
            r.w.to_string(),
            r.m.to_string(),
            r.trial.to_string(),
            r.max_sq_error.to_string(),
            r.structure_exact.map_or(String::new(), |b| b.to_string()),
            r.eta_bound.to_string(),
            r.wall_time_ms.to_string(),
        ])
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected sweep header {header:?}")));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let parse = |i: usize| -> Result<f64> {
                field(i)
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("column {}: {e}", CSV_HEADER[i])))
            };
            let int = |i: usize| -> Result<u64> {
                field(i)
                    .parse::<u64>()
                    .map_err(|e| Error::Parse(format!("column {}: {e}", CSV_HEADER[i])))
            };
            Ok(SweepRow {
                scenario: field(0).to_string(),
                n: int(1)? as usize,
                d: int(2)? as u32,
                w: int(3)? as usize,
                m: int(4)? as usize,
                trial: int(5)? as usize,
                max_sq_error: parse(6)?,
                structure_exact: match field(7) {
                    "" => None,
                    "true" => Some(true),
                    "false" => Some(false),
                    other => return Err(Error::Parse(format!("structure_exact {other:?}"))),
                },
                eta_bound: parse(8)?,
                wall_time_ms: int(9)?,
            })
        })
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Result of one (M, trial) cell beyond the CSV columns.
#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub max_sq_error: f64,
    pub structure_exact: Option<bool>,
    pub eta_bound: f64,
}

/// Runs the configured estimator on one batch.
pub fn evaluate(config: &ExperimentConfig, model: &Model, family: &Family, batch: &SampleBatch) -> Result<CellOutcome> {
    let options = config.recovery_options(model);
    let quads = assemble_all(family, batch)?;
    match config.scenario {
        Scenario::Algorithm1 => {
            let report = algorithm1_from(family, &quads, &options, Some(model))?;
            let truth = model.structure().clique_set();
            Ok(CellOutcome {
                max_sq_error: report.max_sq_error.unwrap_or(f64::NAN),
                structure_exact: Some(structure_diff(&report.structure_set(), &truth).exact),
                eta_bound: report.max_eta_bound,
            })
        }
        Scenario::Neighborhood | Scenario::MultilinearTotal => {
            let est = recover_family_structure_from(family, &quads, options.bound, &options.solver)?;
            let truth = crate::recovery::truth_on_family(family, model);
            let err = if config.scenario == Scenario::Neighborhood {
                est.entries
                    .iter()
                    .map(|e| (e.estimate - truth[e.factor]).powi(2))
                    .fold(0.0, f64::max)
            } else {
                est.estimates
                    .iter()
                    .flat_map(|e| e.active.iter().zip(&e.theta_hat).map(|(&k, v)| (v - truth[k]).powi(2)))
                    .fold(0.0, f64::max)
            };
            Ok(CellOutcome {
                max_sq_error: err,
                structure_exact: None,
                eta_bound: est.estimates.iter().map(|e| e.eta_bound).fold(0.0, f64::max),
            })
        }
    }
}

/// Draws the chain for one trial: `max(M grid)` samples with seed `master ^ trial`.
pub fn trial_batch(config: &ExperimentConfig, model: &Model, trial: usize) -> Result<SampleBatch> {
    let m_max = *config.m_grid.last().expect("validated");
    draw_samples_seeded(model, m_max, config.sampler, trial_seed(config.seed, trial as u64))
}

/// Rows of one trial, one per grid point, evaluated on prefixes of `batch`.
pub fn trial_rows(
    config: &ExperimentConfig,
    model: &Model,
    family: &Family,
    trial: usize,
    batch: &SampleBatch,
) -> Result<Vec<SweepRow>> {
    config
        .m_grid
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let out = evaluate(config, model, family, &batch.head(m)?)?;
            Ok(SweepRow {
                scenario: config.scenario_id(),
                n: family.n(),
                d: family.d(),
                w: family.w(),
                m,
                trial,
                max_sq_error: out.max_sq_error,
                structure_exact: out.structure_exact,
                eta_bound: out.eta_bound,
                wall_time_ms: if config.timing {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                },
            })
        })
        .collect()
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let model = config.model()?;
    let family = config.estimation_family(&model)?;
    let per_trial: Vec<Vec<SweepRow>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let batch = trial_batch(config, &model, t)?;
            trial_rows(config, &model, &family, t, &batch)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = per_trial.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.m, r.trial));
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessPoint {
    #[serde(rename = "M")]
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub median_max_sq_error: f64,
    pub max_eta_bound: f64,
}

/// Per-M fraction of rows with `max_sq_error ≤ eps` (and exact structure when recorded).
pub fn success_rate(rows: &[SweepRow], eps: f64) -> Vec<SuccessPoint> {
    let mut ms: Vec<usize> = rows.iter().map(|r| r.m).collect();
    ms.sort_unstable();
    ms.dedup();
    ms.into_iter()
        .map(|m| {
            let at: Vec<&SweepRow> = rows.iter().filter(|r| r.m == m).collect();
            let successes = at
                .iter()
                .filter(|r| r.max_sq_error <= eps && r.structure_exact.unwrap_or(true))
                .count();
            let (lo, hi) = wilson_interval(successes, at.len());
            let errs: Vec<f64> = at.iter().map(|r| r.max_sq_error).collect();
            SuccessPoint {
                m,
                trials: at.len(),
                successes,
                rate: successes as f64 / at.len() as f64,
                wilson_lo: lo,
                wilson_hi: hi,
                median_max_sq_error: median(&errs),
                max_eta_bound: at.iter().map(|r| r.eta_bound).fold(0.0, f64::max),
            }
        })
        .collect()
}

/// Least-squares slope of `log(err²)` against `log M`.
pub fn fit_scaling_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Config(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(m, e)| !(m > 0.0) || !(e > 0.0)) {
        return Err(Error::Config("scaling points must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    Ok(ols_slope(&xs, &ys))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub rows: usize,
    pub success: Vec<SuccessPoint>,
    /// Slope of median `max_sq_error` vs M on log scales (`None` with < 3 points
    /// or a zero median).
    pub slope: Option<f64>,
    pub checks: Vec<CheckOutcome>,
    pub config: ExperimentConfig,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn build_report(config: &ExperimentConfig, rows: &[SweepRow]) -> Report {
    let success = success_rate(rows, config.eps);
    let points: Vec<(f64, f64)> = success
        .iter()
        .map(|p| (p.m as f64, p.median_max_sq_error))
        .collect();
    let slope = fit_scaling_slope(&points).ok();
    let mut checks = Vec::new();
    if config.check.median_decreasing {
        let pass = success
            .windows(2)
            .all(|w| w[1].median_max_sq_error < w[0].median_max_sq_error);
        checks.push(CheckOutcome {
            name: "median_decreasing".into(),
            pass,
            detail: format!(
                "medians {:?}",
                success.iter().map(|p| p.median_max_sq_error).collect::<Vec<_>>()
            ),
        });
    }
    if let Some([lo, hi]) = config.check.slope_range {
        checks.push(CheckOutcome {
            name: "slope_range".into(),
            pass: slope.is_some_and(|s| (lo..=hi).contains(&s)),
            detail: format!("slope {slope:?} in [{lo}, {hi}]"),
        });
    }
    if let Some(min) = config.check.min_success {
        let last = success.last().map_or(0.0, |p| p.rate);
        checks.push(CheckOutcome {
            name: "min_success".into(),
            pass: last >= min,
            detail: format!("rate {last} at largest M, need {min}"),
        });
    }
    Report {
        tool: "expfam".into(),
        version: VERSION.into(),
        scenario: config.scenario_id(),
        rows: rows.len(),
        success,
        slope,
        checks,
        config: config.clone(),
    }
}

/// `‖∇L_i(θ*)‖_∞` over `K_i`: the score-gradient at the truth.
pub fn gradient_norm_at_truth(model: &Model, i: usize, batch: &SampleBatch) -> Result<f64> {
    let fam = model.family();
    let quad = assemble_quadratic(fam, i, batch)?;
    let theta: Vec<f64> = quad.active().iter().map(|&k| model.theta()[k]).collect();
    Ok(quad.gradient(&theta)?.into_iter().fold(0.0, |m, g| m.max(g.abs())))
}
