use expfam_core::desk;
use expfam_core::experiment::{run_sweep, write_rows, ExperimentConfig};
use proptest::prelude::*;

fn tiny(mut cfg: ExperimentConfig, grid: Vec<usize>, trials: usize, seed: u64) -> ExperimentConfig {
    cfg.m_grid = grid;
    cfg.trials = trials;
    cfg.seed = seed;
    cfg.sampler.grid_points = 128;
    cfg.sampler.burn_in = 50;
    cfg
}

fn csv_bytes(cfg: &ExperimentConfig) -> Vec<u8> {
    let mut out = Vec::new();
    write_rows(&run_sweep(cfg).unwrap(), &mut out).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn one_row_per_cell_and_byte_identical_reruns(
        grid in prop::collection::btree_set(100usize..400, 1..3),
        trials in 1usize..3,
        seed in any::<u64>(),
        which in 0usize..3,
    ) {
        let base = match which {
            0 => desk::fact1_config(),
            1 => desk::algorithm1_config(),
            _ => desk::multilinear_config(),
        }
        .unwrap();
        let cfg = tiny(base, grid.iter().copied().collect(), trials, seed);
        let rows = run_sweep(&cfg).unwrap();
        prop_assert_eq!(rows.len(), grid.len() * trials);
        for (m, t) in grid.iter().flat_map(|&m| (0..trials).map(move |t| (m, t))) {
            prop_assert_eq!(rows.iter().filter(|r| r.m == m && r.trial == t).count(), 1);
        }
        prop_assert_eq!(csv_bytes(&cfg), csv_bytes(&cfg));
    }
}
