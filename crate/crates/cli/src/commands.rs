use std::fs;
use std::path::{Path, PathBuf};

use expfam_core::curvature::{curvature_bound_check, npc_over_batch, CurvatureOptions};
use expfam_core::experiment::{build_report, read_rows, run_sweep, write_rows, ExperimentConfig};
use expfam_core::family::{Family, Model};
use expfam_core::qp::SolverOptions;
use expfam_core::recovery::{algorithm1, recover_family_structure, truth_on_family, PruneRule, RecoveryOptions};
use expfam_core::sampler::{draw_samples_seeded, truncate_to_box, GibbsConfig, SampleBatch};
use expfam_core::score::ScoreDelta;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::{resolve_seed, CurvatureArgs, FitArgs, RecoverArgs, ReportArgs, RuleArg, SampleArgs, SweepArgs};

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> CliResult<Model> {
    Ok(Model::from_json(&read_text(path)?)?)
}

/// A full model if the document has `theta`, otherwise just its family.
fn read_family_or_model(path: &Path) -> CliResult<(Family, Option<Model>)> {
    let text = read_text(path)?;
    match Model::from_json(&text) {
        Ok(m) => Ok((m.family().clone(), Some(m))),
        Err(_) => Ok((Family::from_json(&text)?, None)),
    }
}

fn read_samples(path: &Path) -> CliResult<SampleBatch> {
    Ok(SampleBatch::load(path)?)
}

fn read_config(path: &Path) -> CliResult<ExperimentConfig> {
    Ok(ExperimentConfig::from_json(&read_text(path)?)?)
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&PathBuf>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(expfam_core::Error::from)? + "\n";
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn solver(tol: Option<f64>) -> SolverOptions {
    SolverOptions {
        tol,
        ..Default::default()
    }
}

pub fn sample(a: SampleArgs) -> CliResult<()> {
    let model = read_model(&a.model)?;
    let seed = resolve_seed(&a.seed, 0)?;
    let cfg = GibbsConfig {
        burn_in: a.burn_in,
        thinning: a.thinning,
        grid_points: a.grid_points,
        truncation: a.truncate,
    };
    let batch = draw_samples_seeded(&model, a.samples, cfg, seed)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    batch.save(&a.out)?;
    eprintln!(
        "wrote {} samples (n = {}, ESS ≈ {:.0}) to {}",
        batch.len(),
        batch.n(),
        batch.effective_sample_size(),
        a.out.display()
    );
    Ok(())
}

pub fn fit(a: FitArgs) -> CliResult<()> {
    let (family, model) = read_family_or_model(&a.model)?;
    let batch = read_samples(&a.samples)?;
    let bound = a.bound.or(model.as_ref().map(|m| m.bound() as f64)).unwrap_or(1.0);
    let mut est = recover_family_structure(&family, &batch, bound, &solver(a.tol))?;
    if let Some(v) = a.vertex {
        if v >= family.n() {
            return Err(CliError::Config(format!("vertex {v} out of range for n = {}", family.n())));
        }
        est.estimates.retain(|e| e.vertex == v);
        est.entries.retain(|e| e.vertex == v);
    }
    if a.truth {
        let m = model.ok_or_else(|| CliError::Config("--truth needs a model with theta".into()))?;
        let truth = truth_on_family(&family, &m);
        for e in &mut est.entries {
            e.truth = Some(truth[e.factor]);
            e.sq_error = Some((e.estimate - truth[e.factor]).powi(2));
        }
    }
    emit_json(&est, a.out.as_ref())
}

pub fn recover(a: RecoverArgs) -> CliResult<()> {
    let (family, model) = read_family_or_model(&a.model)?;
    let batch = read_samples(&a.samples)?;
    let opts = RecoveryOptions {
        bound: a.bound.or(model.as_ref().map(|m| m.bound() as f64)).unwrap_or(1.0),
        eps: a.eps,
        threshold: a.threshold,
        rule: match a.rule {
            RuleArg::Absolute => PruneRule::Absolute,
            RuleArg::Signed => PruneRule::Signed,
        },
        solver: solver(a.tol),
        ..Default::default()
    };
    let truth = if a.truth {
        Some(model.ok_or_else(|| CliError::Config("--truth needs a model with theta".into()))?)
    } else {
        None
    };
    let report = algorithm1(&family, &batch, &opts, truth.as_ref())?;
    if let Some(m) = &truth {
        let exact = report.structure_set() == m.structure().clique_set();
        eprintln!("structure exact: {exact}");
    }
    emit_json(&report, a.out.as_ref())
}

#[derive(Serialize)]
struct CurvatureOutput {
    vertex: usize,
    clique: Vec<usize>,
    #[serde(rename = "B_NPC")]
    b_npc: f64,
    gamma: u64,
    boxes: usize,
    truncated_samples: usize,
    passed: usize,
    checks: Vec<expfam_core::curvature::CurvatureReport>,
}

pub fn curvature(a: CurvatureArgs) -> CliResult<()> {
    let model = read_model(&a.model)?;
    let batch = read_samples(&a.samples)?;
    let truncated = truncate_to_box(&batch, model.tail().c_t as f64)?;
    let opts = CurvatureOptions {
        include_base_term: !a.no_base_term,
        max_boxes: a.max_boxes,
        ..Default::default()
    };
    let npc = npc_over_batch(&model, a.vertex, &a.clique, &truncated, &opts)?;
    let k = model.family().factors_of(a.vertex).len();
    let mut rng = ChaCha8Rng::seed_from_u64(resolve_seed(&a.seed, 0)?);
    let checks = (0..a.deltas)
        .map(|_| {
            let delta = ScoreDelta::new((0..k).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            curvature_bound_check(&model, a.vertex, &a.clique, &delta, &truncated, &npc, &opts)
        })
        .collect::<expfam_core::Result<Vec<_>>>()?;
    let passed = checks.iter().filter(|c| c.pass).count();
    let out = CurvatureOutput {
        vertex: a.vertex,
        clique: a.clique.clone(),
        b_npc: npc.b_npc,
        gamma: npc.gamma,
        boxes: npc.boxes,
        truncated_samples: truncated.len(),
        passed,
        checks,
    };
    emit_json(&out, a.out.as_ref())?;
    eprintln!("{passed}/{} directions satisfy the bound", a.deltas);
    if a.check && passed < a.deltas {
        return Err(CliError::Check(format!("{} of {} directions violate the bound", a.deltas - passed, a.deltas)));
    }
    Ok(())
}

fn finish_report(report: &expfam_core::experiment::Report, path: &Path, check: bool) -> CliResult<()> {
    write_file(path, (report.to_json()? + "\n").as_bytes())?;
    for p in &report.success {
        eprintln!(
            "M = {:>8}: success {}/{} ({:.2}), median max_sq_error {:.3e}",
            p.m, p.successes, p.trials, p.rate, p.median_max_sq_error
        );
    }
    if let Some(s) = report.slope {
        eprintln!("scaling slope {s:.3}");
    }
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} ({})", c.name, c.detail))
        .collect();
    for c in &report.checks {
        eprintln!("check {}: {} {}", c.name, if c.pass { "pass" } else { "FAIL" }, c.detail);
    }
    if check && !failed.is_empty() {
        return Err(CliError::Check(failed.join("; ")));
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> CliResult<()> {
    let mut cfg = read_config(&a.config)?;
    cfg.seed = resolve_seed(&a.seed, cfg.seed)?;
    cfg.timing |= a.timing;
    let csv_path = a.csv.unwrap_or_else(|| PathBuf::from(&cfg.output.csv));
    let report_path = a.report.unwrap_or_else(|| PathBuf::from(&cfg.output.report));
    let rows = run_sweep(&cfg)?;
    let mut csv = Vec::new();
    write_rows(&rows, &mut csv)?;
    write_file(&csv_path, &csv)?;
    let report = build_report(&cfg, &rows);
    finish_report(&report, &report_path, a.check)
}

pub fn report(a: ReportArgs) -> CliResult<()> {
    let cfg = read_config(&a.config)?;
    let file = fs::File::open(&a.csv).map_err(|source| CliError::Io {
        path: a.csv.display().to_string(),
        source,
    })?;
    let rows = read_rows(file)?;
    let report = build_report(&cfg, &rows);
    let out = a.out.unwrap_or_else(|| PathBuf::from(&cfg.output.report));
    finish_report(&report, &out, a.check)
}
