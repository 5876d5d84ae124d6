//! Small reference models and the default sweep configurations.

use crate::error::Result;
use crate::experiment::{CheckSpec, ExperimentConfig, GeneratorSpec, OutputPaths, Scenario};
use crate::family::{Factor, Family, Model, TailSpec};
use crate::qp::SolverOptions;
use crate::recovery::PruneRule;
use crate::sampler::GibbsConfig;

fn f(pairs: &[(usize, u32)]) -> Factor {
    Factor::new(pairs.iter().copied()).expect("valid desk factor")
}

fn with_terms(family: Family, terms: &[(Factor, f64)], bound: u32, c_t: u32) -> Result<Model> {
    let mut theta = vec![0.0; family.len()];
    for (factor, v) in terms {
        let k = family
            .index_of(factor)
            .ok_or_else(|| crate::Error::InvalidFactor(factor.to_string()))?;
        theta[k] = *v;
    }
    Model::new(family, theta, bound, TailSpec { decay: 1.0, c_t })
}

/// Three variables, all monomials of degree ≤ 2, base `exp(-Σ x^4)`,
/// `B = 1` and `C_t = nB + 1`.
pub fn fact1_model() -> Result<Model> {
    let family = Family::all_monomials(3, 2, 2, 4)?;
    with_terms(
        family,
        &[
            (f(&[(0, 1)]), 0.2),
            (f(&[(1, 1)]), -0.2),
            (f(&[(2, 1)]), 0.1),
            (f(&[(0, 2)]), -0.2),
            (f(&[(1, 2)]), 0.1),
            (f(&[(2, 2)]), -0.1),
            (f(&[(0, 1), (1, 1)]), 0.3),
            (f(&[(1, 1), (2, 1)]), -0.3),
            (f(&[(0, 1), (2, 1)]), 0.25),
        ],
        1,
        4,
    )
}

/// Multilinear triangle with base `exp(-Σ x^4)` whose model graph drops the
/// `{x2, x3}` and `{x1, x3}` cliques: `S = {{x1, x2}, {x3}}`.
pub fn pruning_model() -> Result<Model> {
    let family = Family::new(
        3,
        2,
        4,
        vec![
            f(&[(0, 1)]),
            f(&[(1, 1)]),
            f(&[(2, 1)]),
            f(&[(0, 1), (1, 1)]),
            f(&[(1, 1), (2, 1)]),
            f(&[(0, 1), (2, 1)]),
        ],
    )?;
    with_terms(
        family,
        &[
            (f(&[(0, 1)]), 0.2),
            (f(&[(1, 1)]), -0.3),
            (f(&[(2, 1)]), 0.6),
            (f(&[(0, 1), (1, 1)]), 0.5),
        ],
        1,
        4,
    )
}

/// Pairwise multilinear Gaussian-base generator on four variables.
pub fn multilinear_generator() -> GeneratorSpec {
    GeneratorSpec {
        n: 4,
        d: 2,
        w: 2,
        base_exponent: 2,
        sparsity: 1.0,
        weight_range: [0.1, 0.4],
        multilinear: true,
        bound: 1,
        c_t: 4,
        decay: 1.0,
    }
}

/// Three variables, all monomials of degree ≤ 2, Gaussian base, negative
/// quadratic diagonal.
pub fn curvature_model() -> Result<Model> {
    let family = Family::all_monomials(3, 2, 2, 2)?;
    with_terms(
        family,
        &[
            (f(&[(0, 1)]), 0.1),
            (f(&[(1, 1)]), -0.1),
            (f(&[(2, 1)]), 0.1),
            (f(&[(0, 2)]), -0.2),
            (f(&[(1, 2)]), -0.2),
            (f(&[(2, 2)]), -0.2),
            (f(&[(0, 1), (1, 1)]), 0.2),
            (f(&[(1, 1), (2, 1)]), -0.2),
            (f(&[(0, 1), (2, 1)]), 0.2),
        ],
        1,
        4,
    )
}

/// Sampler settings used by the desk sweeps.
pub fn sweep_sampler(grid_points: usize) -> GibbsConfig {
    GibbsConfig {
        burn_in: 500,
        thinning: 1,
        grid_points,
        truncation: None,
    }
}

fn model_value(model: &Model) -> Result<serde_json::Value> {
    Ok(serde_json::from_str(&model.to_json()?)?)
}

/// Neighborhood recovery on [`fact1_model`] across a 4-point M grid.
pub fn fact1_config() -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        scenario: Scenario::Neighborhood,
        name: Some("fact1_neighborhood".into()),
        model: Some(model_value(&fact1_model()?)?),
        generator: None,
        family: None,
        m_grid: vec![2_000, 10_000, 50_000, 250_000],
        trials: 20,
        eps: 0.04,
        rho: 1.0,
        bound: None,
        seed: 20_240_101,
        sampler: sweep_sampler(1024),
        solver: SolverOptions::default(),
        threshold: None,
        rule: PruneRule::Absolute,
        timing: false,
        check: CheckSpec {
            median_decreasing: true,
            slope_range: Some([-1.4, -0.6]),
            min_success: None,
        },
        output: OutputPaths::default(),
    })
}

/// Clique pruning on [`pruning_model`] at `M = 10^5`.
pub fn algorithm1_config() -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        scenario: Scenario::Algorithm1,
        name: Some("algorithm1_pruning".into()),
        model: Some(model_value(&pruning_model()?)?),
        generator: None,
        family: None,
        m_grid: vec![100_000],
        trials: 20,
        eps: 0.04,
        rho: 1.0,
        bound: None,
        seed: 20_240_202,
        sampler: sweep_sampler(512),
        solver: SolverOptions::default(),
        threshold: None,
        rule: PruneRule::Absolute,
        timing: false,
        check: CheckSpec {
            median_decreasing: false,
            slope_range: None,
            min_success: Some(0.9),
        },
        output: OutputPaths::default(),
    })
}

/// Total recovery of a random pairwise multilinear model at `M = 10^5`.
pub fn multilinear_config() -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        scenario: Scenario::MultilinearTotal,
        name: Some("multilinear_total".into()),
        model: None,
        generator: Some(multilinear_generator()),
        family: None,
        m_grid: vec![100_000],
        trials: 20,
        eps: 0.04,
        rho: 1.0,
        bound: None,
        seed: 20_240_303,
        sampler: sweep_sampler(512),
        solver: SolverOptions::default(),
        threshold: None,
        rule: PruneRule::Absolute,
        timing: false,
        check: CheckSpec {
            median_decreasing: false,
            slope_range: None,
            min_success: Some(0.9),
        },
        output: OutputPaths::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_models_are_valid() {
        let m = pruning_model().unwrap();
        let s: Vec<Vec<usize>> = m.structure().cliques();
        assert_eq!(s, vec![vec![0, 1], vec![2]]);
        assert_eq!(fact1_model().unwrap().structure().len(), 3);
        assert!(curvature_model().is_ok());
        for cfg in [fact1_config().unwrap(), algorithm1_config().unwrap(), multilinear_config().unwrap()] {
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            assert_eq!(back, cfg);
        }
    }
}
