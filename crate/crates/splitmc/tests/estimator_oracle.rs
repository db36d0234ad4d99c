//! Cross-checks of the local (rate-path) estimator algebra against the
//! dense-matrix oracle on small lattices.

mod common;

use splitmc::analysis::{commutator, scheme_matrix, stationary};
use splitmc::estimator::{f_term, local_commutator, local_scheme_coefficient, TupleSet};
use splitmc::kmc::{checkerboard, Decomposition};
use splitmc::model::{
    lattice_generator, ArrheniusRates, DenseGenerator, Group, LatticeDims, SchemeSpec,
    SpinConfiguration,
};

fn setup(
    n: usize,
    m: usize,
) -> (LatticeDims, ArrheniusRates, Decomposition, DenseGenerator, DenseGenerator) {
    let dims = LatticeDims::OneD(n);
    let params = ArrheniusRates { c1: 1.0, c2: 1.0, beta: 1.0, j0: 1.0, h: 0.0 };
    let decomp = checkerboard(dims, m).unwrap();
    let l1 = lattice_generator(dims, &params, Some((&decomp.site_group, Group::G1))).unwrap();
    let l2 = lattice_generator(dims, &params, Some((&decomp.site_group, Group::G2))).unwrap();
    (dims, params, decomp, l1, l2)
}

#[test]
fn dense_lie_coefficient_matches_frozen_oracle() {
    let (_, _, _, l1, l2) = setup(4, 2);
    let fit = common::dense_fit(&l1, &l2, &SchemeSpec::lie(), &common::dyadic(4, 10));
    assert!(
        (fit.coeffs[0] - 0.017010986).abs() < 1e-6,
        "leading coefficient {}",
        fit.coeffs[0]
    );
}

#[test]
fn local_commutator_matches_dense_entries_lie() {
    let (dims, params, decomp, l1, l2) = setup(4, 2);
    let l = l1.add(&l2).unwrap();
    let scheme = SchemeSpec::lie();
    let rep = commutator(&l, &l1, &l2, &scheme).unwrap();
    let tol = (10.0 * rep.residual).max(1e-7);
    let tuples = TupleSet::new(&decomp);
    assert!(!tuples.pairs.is_empty());
    for s in 0..(1u64 << 4) {
        let sigma = SpinConfiguration::from_bits(dims, s);
        for &(x, y) in &tuples.pairs {
            let target = (s ^ (1 << x) ^ (1 << y)) as usize;
            let local = local_commutator(&sigma, &[x, y], &decomp, &params, &scheme);
            let dense = rep.c.get(s as usize, target);
            assert!(
                (local - dense).abs() <= tol,
                "state {s} pair ({x},{y}): local {local} vs dense {dense} (tol {tol})"
            );
        }
    }
}

#[test]
fn local_commutator_matches_dense_entries_strang() {
    let (dims, params, decomp, l1, l2) = setup(6, 3);
    let l = l1.add(&l2).unwrap();
    let scheme = SchemeSpec::strang();
    let rep = commutator(&l, &l1, &l2, &scheme).unwrap();
    let tol = (10.0 * rep.residual).max(1e-6);
    let tuples = TupleSet::new(&decomp);
    assert!(!tuples.triples.is_empty());
    for s in 0..(1u64 << 6) {
        let sigma = SpinConfiguration::from_bits(dims, s);
        for t in &tuples.triples {
            let target = (s ^ (1 << t[0]) ^ (1 << t[1]) ^ (1 << t[2])) as usize;
            let local = local_commutator(&sigma, t, &decomp, &params, &scheme);
            let dense = rep.c.get(s as usize, target);
            assert!(
                (local - dense).abs() <= tol,
                "state {s} triple {t:?}: local {local} vs dense {dense} (tol {tol})"
            );
        }
    }
}

#[test]
fn conservative_weights_never_underestimate() {
    let (dims, params, decomp, _, _) = setup(6, 3);
    let scheme = SchemeSpec::strang();
    let tuples = TupleSet::new(&decomp);
    for s in 0..(1u64 << 6) {
        let sigma = SpinConfiguration::from_bits(dims, s);
        for t in &tuples.triples {
            let lq_cons = local_scheme_coefficient(&sigma, t, &decomp, &params, &scheme, true);
            let lq_exact = local_scheme_coefficient(&sigma, t, &decomp, &params, &scheme, false);
            assert!(lq_cons <= lq_exact + 1e-15, "lq {lq_cons} > {lq_exact}");
            let f_cons = f_term(&sigma, t, &decomp, &params, &scheme, true).unwrap();
            let f_exact = f_term(&sigma, t, &decomp, &params, &scheme, false).unwrap();
            assert!(f_cons >= f_exact - 1e-15, "F {f_cons} < {f_exact}");
        }
    }
}

/// The stationary mean of the summed F-terms equals the dense leading
/// RER coefficient (the quantity the sampling estimator targets).
#[test]
fn enumerated_f_sum_matches_dense_fit() {
    for (n, m, kind) in [
        (4usize, 2usize, splitmc::model::SchemeKind::Lie),
        (6, 3, splitmc::model::SchemeKind::Lie),
        (6, 3, splitmc::model::SchemeKind::Strang),
    ] {
        let (dims, params, decomp, l1, l2) = setup(n, m);
        let scheme = SchemeSpec::new(kind);
        let oracle = common::dense_fit(&l1, &l2, &scheme, &common::dyadic(4, 10)).coeffs[0];

        let dt = 0.05;
        let pb = scheme_matrix(&l1, &l2, &scheme, dt).unwrap();
        let mu = stationary(&pb).unwrap();
        let tuples = TupleSet::new(&decomp);
        let mut mean = 0.0;
        for (s, &w) in mu.iter().enumerate() {
            let sigma = SpinConfiguration::from_bits(dims, s as u64);
            let mut total = 0.0;
            match kind {
                splitmc::model::SchemeKind::Lie => {
                    for &(x, y) in &tuples.pairs {
                        total +=
                            f_term(&sigma, &[x, y], &decomp, &params, &scheme, false).unwrap();
                    }
                }
                splitmc::model::SchemeKind::Strang => {
                    for t in &tuples.triples {
                        total += f_term(&sigma, t, &decomp, &params, &scheme, false).unwrap();
                    }
                }
            }
            mean += w * total;
        }
        assert!(
            (mean - oracle).abs() <= 1e-4 * oracle.abs().max(1e-12),
            "N={n} m={m} {kind:?}: enumerated {mean} vs oracle {oracle}"
        );
    }
}
