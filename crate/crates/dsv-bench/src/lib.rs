//! Shared workloads for the benchmarks.

use dsv::synth::{generate_run, SynthConfig};
use dsv::SelectionRun;

/// A synthetic run with `n_trn` train vectors and `n_test` test vectors
/// (half anomalous) of dimension `dim`, over `candidates` grid points.
pub fn workload(n_trn: usize, n_test: usize, dim: usize, candidates: usize) -> SelectionRun {
    let d_star = 8.0;
    let config = SynthConfig {
        dim,
        n_trn,
        n_test_n: n_test - n_test / 2,
        n_test_a: n_test / 2,
        hp_grid: (0..candidates).map(|k| d_star * 2f64.powi(k as i32 - candidates as i32 / 2)).collect(),
        d_star,
        ..SynthConfig::default()
    };
    generate_run(&config).expect("valid benchmark config")
}
