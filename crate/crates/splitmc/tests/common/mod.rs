//! Shared fixtures and helpers for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Output;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splitmc::analysis::{
    exact_matrix, fit_order, rer, scheme_matrix, stationary, OrderFit,
};
use splitmc::matrix::Mat;
use splitmc::model::{complement_pairs, restrict, DenseGenerator, SchemeSpec};

/// Three-state benchmark generator used throughout the worked examples.
pub fn bench3_generator() -> DenseGenerator {
    DenseGenerator::try_from_matrix(Mat::from_rows(&[
        vec![-3.0, 1.0, 2.0],
        vec![3.0, -4.0, 1.0],
        vec![1.0, 0.0, -1.0],
    ]))
    .unwrap()
}

/// The single-edge part B (mask {(2,0)}) and its complement A.
pub fn bench3_parts() -> (DenseGenerator, DenseGenerator) {
    let q = bench3_generator();
    let mask: BTreeSet<_> = [(2usize, 0usize)].into_iter().collect();
    let b = restrict(&q, &mask);
    let a = restrict(&q, &complement_pairs(3, &mask));
    (a, b)
}

/// (L1, L2) orientation whose Lie coefficients match the published
/// two-term expansion: L1 = B.
pub fn bench3_lie_split() -> (DenseGenerator, DenseGenerator) {
    let (a, b) = bench3_parts();
    (b, a)
}

/// (L1, L2) orientation whose Strang coefficients match the published
/// expansion: L1 = A. The leading Strang coefficient is genuinely
/// orientation-dependent.
pub fn bench3_strang_split() -> (DenseGenerator, DenseGenerator) {
    bench3_parts()
}

/// Normalized RER of the scheme chain against the exact skeleton,
/// sampled from the scheme chain's stationary measure.
pub fn dense_rer(
    l1: &DenseGenerator,
    l2: &DenseGenerator,
    scheme: &SchemeSpec,
    dt: f64,
) -> f64 {
    let po = exact_matrix(l1, l2, dt).unwrap();
    let pb = scheme_matrix(l1, l2, scheme, dt).unwrap();
    let mu = stationary(&pb).unwrap();
    rer(&pb, &po, &mu).unwrap()
}

/// (dt, H) samples over a grid, then the order fit.
pub fn dense_fit(
    l1: &DenseGenerator,
    l2: &DenseGenerator,
    scheme: &SchemeSpec,
    grid: &[f64],
) -> OrderFit {
    let samples: Vec<(f64, f64)> =
        grid.iter().map(|&dt| (dt, dense_rer(l1, l2, scheme, dt))).collect();
    fit_order(&samples).unwrap()
}

/// Dyadic grid 2^-k for k in [lo, hi], ascending in dt magnitude.
pub fn dyadic(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).rev().map(|k| 2f64.powi(-k)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random generator with every off-diagonal rate strictly positive.
pub fn random_dense_generator(n: usize, rng: &mut ChaCha8Rng) -> DenseGenerator {
    random_sparse_generator(n, rng, 1.0)
}

/// Random generator where each off-diagonal rate is present with
/// probability `density`; a directed ring is always included so the
/// chain stays irreducible.
pub fn random_sparse_generator(
    n: usize,
    rng: &mut ChaCha8Rng,
    density: f64,
) -> DenseGenerator {
    let mut m = Mat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen::<f64>() < density {
                m.set(i, j, rng.gen_range(0.05..2.0));
            }
        }
        let j = (i + 1) % n;
        if m.get(i, j) == 0.0 {
            m.set(i, j, rng.gen_range(0.05..2.0));
        }
    }
    DenseGenerator::from_off_diagonal(m).unwrap()
}

/// Random bipartition of the positive off-diagonal pairs; the mask is
/// guaranteed to be a proper, non-empty subset so the split is not
/// degenerate.
pub fn random_bipartition(
    gen: &DenseGenerator,
    rng: &mut ChaCha8Rng,
) -> (DenseGenerator, DenseGenerator) {
    let pairs = gen.positive_pairs();
    let n = gen.n_states();
    loop {
        let mask: BTreeSet<(usize, usize)> =
            pairs.iter().copied().filter(|_| rng.gen::<bool>()).collect();
        if mask.is_empty() || mask.len() == pairs.len() {
            continue;
        }
        let l1 = restrict(gen, &mask);
        let l2 = restrict(gen, &complement_pairs(n, &mask));
        return (l1, l2);
    }
}

/// Runs the splitmc binary with the given arguments.
pub fn run_splitmc(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_splitmc"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("failed to spawn splitmc")
}

/// Writes a config file and returns its path.
pub fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Three-state benchmark config text with the Lie-matching split.
pub fn bench3_config(scheme: &str, extra_run: &str) -> String {
    let split = if scheme == "lie" {
        "split_pairs = [[2, 0]]"
    } else {
        "split_pairs = [[0, 1], [0, 2], [1, 0], [1, 2], [2, 1]]"
    };
    format!(
        r#"
[system]
kind = "dense"
rates = [[-3.0, 1.0, 2.0], [3.0, -4.0, 1.0], [1.0, 0.0, -1.0]]
{split}

[scheme]
kind = "{scheme}"

[run]
dt = 0.1
{extra_run}
"#
    )
}
