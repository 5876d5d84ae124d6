use std::collections::BTreeSet;

use expfam_core::family::{build_factor_graph, maximal_structure, Clique, Factor, Family, Model, TailSpec};
use expfam_core::recovery::{algorithm1_from, RecoveryOptions};
use expfam_core::score::LocalQuadratic;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn triangle() -> Family {
    Family::multilinear(3, 2, 4).unwrap()
}

fn pair_index(fam: &Family, a: usize, b: usize) -> usize {
    fam.index_of(&Factor::multilinear(&[a, b]).unwrap()).unwrap()
}

fn single_index(fam: &Family, a: usize) -> usize {
    fam.index_of(&Factor::multilinear(&[a]).unwrap()).unwrap()
}

/// Quadratics `½|θ|² − tᵀθ` whose minimiser is `t` on every vertex.
fn identity_quads(fam: &Family, target: &[f64]) -> Vec<LocalQuadratic> {
    (0..fam.n())
        .map(|i| {
            let active = fam.factors_of(i).to_vec();
            let a = active.len();
            let b = DVector::from_iterator(a, active.iter().map(|&k| -target[k]));
            LocalQuadratic::new(i, active, DMatrix::identity(a, a), b, 0.0).unwrap()
        })
        .collect()
}

fn cliques_of(fam: &Family, kept: impl IntoIterator<Item = usize>) -> BTreeSet<Clique> {
    maximal_structure(&build_factor_graph(fam, kept).unwrap()).clique_set()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cliques_survive_only_above_threshold(
        levels in prop::collection::vec(0usize..4, 3),
        signs in prop::collection::vec(any::<bool>(), 3),
    ) {
        let fam = triangle();
        let opts = RecoveryOptions::default();
        let tau = opts.resolved_threshold();
        let mut target = vec![0.0; fam.len()];
        for a in 0..3 {
            target[single_index(&fam, a)] = 0.3;
        }
        let pairs = [(0, 1), (1, 2), (0, 2)];
        let mut expected = Vec::new();
        for (p, &(a, b)) in pairs.iter().enumerate() {
            let mag = [0.0, tau - 1e-4, tau + 1e-4, 0.25][levels[p]];
            let k = pair_index(&fam, a, b);
            target[k] = if signs[p] { mag } else { -mag };
            if mag > tau {
                expected.push(k);
            }
        }
        let singles: Vec<usize> = (0..3).map(|a| single_index(&fam, a)).collect();
        let want = cliques_of(&fam, expected.iter().chain(&singles).copied());
        let report = algorithm1_from(&fam, &identity_quads(&fam, &target), &opts, None).unwrap();
        prop_assert_eq!(report.structure_set(), want.clone());
        let family_cliques: BTreeSet<Clique> = fam.factors().iter().map(Factor::support).collect();
        prop_assert!(report.structure_set().is_subset(&family_cliques));
        prop_assert!(report.entries.iter().all(|e| e.sq_error.map_or(true, |v| v >= 0.0)));
    }
}

/// Population score-matching quadratics by tensor Simpson quadrature on
/// `[-lim, lim]^3`.
fn population_quads(model: &Model, lim: f64, intervals: usize) -> Vec<LocalQuadratic> {
    let fam = model.family();
    let n = fam.n();
    let h = 2.0 * lim / intervals as f64;
    let nodes: Vec<f64> = (0..=intervals).map(|j| -lim + h * j as f64).collect();
    let w: Vec<f64> = (0..=intervals)
        .map(|j| {
            let c = if j == 0 || j == intervals { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
            c * h / 3.0
        })
        .collect();
    let mut z = 0.0;
    let mut hs: Vec<DMatrix<f64>> = (0..n).map(|i| DMatrix::zeros(fam.factors_of(i).len(), fam.factors_of(i).len())).collect();
    let mut bs: Vec<DVector<f64>> = (0..n).map(|i| DVector::zeros(fam.factors_of(i).len())).collect();
    let mut x = vec![0.0; n];
    for (a, &xa) in nodes.iter().enumerate() {
        for (b, &xb) in nodes.iter().enumerate() {
            for (c, &xc) in nodes.iter().enumerate() {
                x[0] = xa;
                x[1] = xb;
                x[2] = xc;
                let p = w[a] * w[b] * w[c] * model.log_density_unnormalized(&x).exp();
                z += p;
                for i in 0..n {
                    let ks = fam.factors_of(i);
                    let g: Vec<f64> = ks.iter().map(|&k| fam.factors()[k].partial(i, 1, &x)).collect();
                    let base = fam.base_grad(i, &x);
                    for (r, &k) in ks.iter().enumerate() {
                        bs[i][r] += p * (g[r] * base + fam.factors()[k].partial(i, 2, &x));
                        for s in 0..ks.len() {
                            hs[i][(r, s)] += p * g[r] * g[s];
                        }
                    }
                }
            }
        }
    }
    (0..n)
        .map(|i| LocalQuadratic::new(i, fam.factors_of(i).to_vec(), &hs[i] / z, &bs[i] / z, 0.0).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn population_quadratics_recover_the_exact_structure(
        singles in prop::collection::vec(0.15f64..0.3, 3),
        pairs in prop::collection::vec(prop_oneof![Just(0.0), 0.2f64..0.35, -0.35f64..-0.2], 3),
    ) {
        let fam = triangle();
        let mut terms: Vec<(Factor, f64)> = (0..3).map(|a| (Factor::multilinear(&[a]).unwrap(), singles[a])).collect();
        for (p, (a, b)) in [(0, 1), (1, 2), (0, 2)].into_iter().enumerate() {
            terms.push((Factor::multilinear(&[a, b]).unwrap(), pairs[p]));
        }
        let model = Model::from_terms(3, 2, 4, terms, 1, TailSpec { decay: 1.0, c_t: 4 }).unwrap();
        prop_assert_eq!(model.family(), &fam);
        let quads = population_quads(&model, 3.0, 80);
        let opts = RecoveryOptions { eps: 0.01, ..Default::default() };
        let report = algorithm1_from(&fam, &quads, &opts, Some(&model)).unwrap();
        prop_assert_eq!(report.structure_set(), model.structure().clique_set());
        prop_assert!(report.max_sq_error.unwrap() <= 1e-8);
    }
}
