//! Dense-matrix ground-truth engine for small chains: semigroups,
//! splitting transition matrices, exact relative entropy rates,
//! commutators, connectivity, order fitting, and UQ bounds.

pub mod commutator;
pub mod connectivity;
pub mod fit;
pub mod uq;

use thiserror::Error;

use crate::matrix::Mat;
use crate::model::{DenseGenerator, SchemeSpec};

pub use commutator::{commutator, lie_commutator_matrix, CommutatorReport};
pub use connectivity::{connectivity, predict_order, ConnectivityReport};
pub use fit::{fit_order, OrderFit};
pub use uq::{goal_oriented_bounds, linearized_bound, tilted_eigenvalue};

/// Dense engine refuses state spaces beyond this size.
pub const DENSE_STATE_CAP: usize = 4096;

/// Probabilities below this are treated as exact zeros when checking
/// absolute continuity (separates true zeros from underflow).
pub const ABS_CONTINUITY_EPS: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix entry ({row},{col}) = {value} is negative beyond tolerance")]
    NegativeProbability { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("chain is reducible: states {unreachable:?} are not mutually reachable from state 0")]
    Reducible { unreachable: Vec<usize> },
    #[error("absolute continuity violated at pair ({from},{to}): Q={q:e} but P={p:e}")]
    AbsoluteContinuity { from: usize, to: usize, q: f64, p: f64 },
    #[error("iteration failed to converge: {0}")]
    NonConvergence(String),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("generators do not satisfy L = L1 + L2 (max deviation {0:e})")]
    SplitMismatch(f64),
    #[error("no nonzero commutator entry at distance k-hat; order prediction inapplicable")]
    CommutatorHypothesisFailed,
    #[error("state space of {0} states exceeds dense-engine cap of {1}")]
    TooLarge(usize, usize),
}

/// Row-stochastic one-step transition matrix built at a specific dt.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    mat: Mat,
    dt: f64,
}

impl TransitionMatrix {
    /// Validates stochasticity; entries in [-1e-12, 0) are clamped to 0
    /// and the row renormalized, anything more negative is an error.
    pub fn try_new(mut mat: Mat, dt: f64) -> Result<Self, AnalysisError> {
        let n = mat.n();
        for i in 0..n {
            let mut clamped = false;
            for j in 0..n {
                let v = mat.get(i, j);
                if v < -1e-12 {
                    return Err(AnalysisError::NegativeProbability { row: i, col: j, value: v });
                }
                if v < 0.0 {
                    mat.set(i, j, 0.0);
                    clamped = true;
                }
            }
            let sum: f64 = mat.row(i).iter().sum();
            if (sum - 1.0).abs() > 1e-10 {
                return Err(AnalysisError::NotStochastic { row: i, sum });
            }
            if clamped {
                let inv = 1.0 / sum;
                for v in mat.row_mut(i) {
                    *v *= inv;
                }
            }
        }
        Ok(TransitionMatrix { mat, dt })
    }

    pub fn n(&self) -> usize {
        self.mat.n()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j)
    }

    pub fn matrix(&self) -> &Mat {
        &self.mat
    }

    /// Matrix product, keeping the dt label of `self`.
    pub fn compose(&self, other: &TransitionMatrix) -> Result<TransitionMatrix, AnalysisError> {
        if self.n() != other.n() {
            return Err(AnalysisError::DimensionMismatch(self.n(), other.n()));
        }
        TransitionMatrix::try_new(self.mat.matmul(&other.mat), self.dt)
    }

    /// One step of distribution propagation: nu -> nu P.
    pub fn propagate(&self, nu: &[f64]) -> Vec<f64> {
        self.mat.left_mul(nu)
    }
}

/// Matrix exponential e^{tL} by scaling-and-squaring on the truncated
/// power series; the series stops when the next term's max-norm drops
/// below 1e-16 times the partial sum's.
pub fn expm(gen: &DenseGenerator, t: f64) -> Result<TransitionMatrix, AnalysisError> {
    if t < 0.0 {
        return Err(AnalysisError::BadInput(format!("negative time {t}")));
    }
    let n = gen.n_states();
    if n > DENSE_STATE_CAP {
        return Err(AnalysisError::TooLarge(n, DENSE_STATE_CAP));
    }
    let mut scaled = gen.matrix().clone();
    scaled.scale(t);
    // Halve until the norm is comfortable for the series.
    let mut squarings = 0u32;
    while scaled.max_norm() > 0.5 {
        scaled.scale(0.5);
        squarings += 1;
    }
    let mut sum = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..200 {
        term = term.matmul(&scaled);
        term.scale(1.0 / k as f64);
        let tn = term.max_norm();
        sum.add_scaled(&term, 1.0);
        if tn < 1e-16 * sum.max_norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    TransitionMatrix::try_new(sum, t)
}

/// One-step transition matrix of a splitting scheme:
/// Lie is e^{dt L1} e^{dt L2}, Strang is e^{dt/2 L1} e^{dt L2} e^{dt/2 L1}.
pub fn scheme_matrix(
    l1: &DenseGenerator,
    l2: &DenseGenerator,
    scheme: &SchemeSpec,
    dt: f64,
) -> Result<TransitionMatrix, AnalysisError> {
    if l1.n_states() != l2.n_states() {
        return Err(AnalysisError::DimensionMismatch(l1.n_states(), l2.n_states()));
    }
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(AnalysisError::BadInput(format!("dt={dt} outside (0,1]")));
    }
    let mut prod: Option<Mat> = None;
    for &(group, frac) in &scheme.schedule {
        let gen = match group {
            crate::model::Group::G1 => l1,
            crate::model::Group::G2 => l2,
        };
        let factor = expm(gen, frac * dt)?;
        prod = Some(match prod {
            None => factor.matrix().clone(),
            Some(m) => m.matmul(factor.matrix()),
        });
    }
    TransitionMatrix::try_new(prod.expect("non-empty schedule"), dt)
}

/// Exact skeleton transition matrix e^{dt(L1+L2)} for the same pair.
pub fn exact_matrix(
    l1: &DenseGenerator,
    l2: &DenseGenerator,
    dt: f64,
) -> Result<TransitionMatrix, AnalysisError> {
    let l = l1.add(l2).map_err(|_| AnalysisError::DimensionMismatch(l1.n_states(), l2.n_states()))?;
    expm(&l, dt)
}

/// Uniform distribution on n states.
pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Stationary distribution of an irreducible aperiodic chain by power
/// iteration from the uniform start, to 1e-13 in L1.
pub fn stationary(p: &TransitionMatrix) -> Result<Vec<f64>, AnalysisError> {
    check_irreducible(p)?;
    let n = p.n();
    let mut mu = uniform(n);
    for _ in 0..2_000_000 {
        let next = p.propagate(&mu);
        let diff: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        mu = next;
        if diff < 1e-13 {
            // Guard against slow drift of the normalization.
            let s: f64 = mu.iter().sum();
            for v in &mut mu {
                *v /= s;
            }
            return Ok(mu);
        }
    }
    Err(AnalysisError::NonConvergence("power iteration for stationary distribution".into()))
}

fn check_irreducible(p: &TransitionMatrix) -> Result<(), AnalysisError> {
    let n = p.n();
    let fwd = reach(n, |i, j| p.get(i, j) > ABS_CONTINUITY_EPS);
    let bwd = reach(n, |i, j| p.get(j, i) > ABS_CONTINUITY_EPS);
    let bad: Vec<usize> = (0..n).filter(|&s| !fwd[s] || !bwd[s]).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(AnalysisError::Reducible { unreachable: bad })
    }
}

/// BFS reachability from state 0 along `edge`, excluding self-loops.
fn reach<F: Fn(usize, usize) -> bool>(n: usize, edge: F) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if i != j && !seen[j] && edge(i, j) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// dt-normalized relative entropy rate of Q with respect to P under a
/// sampling measure:
/// `(1/dt) * sum_{s,s'} sampling(s) Q(s,s') log(Q(s,s')/P(s,s'))`
/// with the convention 0*log(0/x) := 0.
pub fn rer(
    q: &TransitionMatrix,
    p: &TransitionMatrix,
    sampling: &[f64],
) -> Result<f64, AnalysisError> {
    let n = q.n();
    if p.n() != n || sampling.len() != n {
        return Err(AnalysisError::DimensionMismatch(n, p.n().max(sampling.len())));
    }
    if (q.dt() - p.dt()).abs() > 1e-15 * q.dt().max(1.0) {
        return Err(AnalysisError::BadInput(format!(
            "matrices built at different dt: {} vs {}",
            q.dt(),
            p.dt()
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        let w = sampling[i];
        if w <= 0.0 {
            continue;
        }
        let mut row_sum = 0.0;
        for j in 0..n {
            let qv = q.get(i, j);
            if qv <= ABS_CONTINUITY_EPS {
                continue;
            }
            let pv = p.get(i, j);
            if pv <= ABS_CONTINUITY_EPS {
                return Err(AnalysisError::AbsoluteContinuity { from: i, to: j, q: qv, p: pv });
            }
            row_sum += qv * (qv / pv).ln();
        }
        total += w * row_sum;
    }
    Ok(total / q.dt())
}

/// Relative entropy between an M-step path measure of Q started at nu0
/// and one of P started at mu0, via the chain rule:
/// `R(nu0|mu0) + sum_{i=1}^{M} dt * H_{nu_i}(Q|P)` with nu_i = nu0 Q^{i-1}.
pub fn path_relative_entropy(
    q: &TransitionMatrix,
    p: &TransitionMatrix,
    nu0: &[f64],
    mu0: &[f64],
    m_steps: usize,
) -> Result<f64, AnalysisError> {
    if m_steps == 0 {
        return Err(AnalysisError::BadInput("M must be >= 1".into()));
    }
    let mut total = discrete_kl(nu0, mu0)?;
    let mut nu = nu0.to_vec();
    for i in 0..m_steps {
        total += q.dt() * rer(q, p, &nu)?;
        if i + 1 < m_steps {
            nu = q.propagate(&nu);
        }
    }
    Ok(total)
}

/// KL divergence between two distributions on the same finite space.
pub fn discrete_kl(nu: &[f64], mu: &[f64]) -> Result<f64, AnalysisError> {
    if nu.len() != mu.len() {
        return Err(AnalysisError::DimensionMismatch(nu.len(), mu.len()));
    }
    let mut total = 0.0;
    for (i, (&a, &b)) in nu.iter().zip(mu).enumerate() {
        if a <= ABS_CONTINUITY_EPS {
            continue;
        }
        if b <= ABS_CONTINUITY_EPS {
            return Err(AnalysisError::AbsoluteContinuity { from: i, to: i, q: a, p: b });
        }
        total += a * (a / b).ln();
    }
    Ok(total)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{restrict, SchemeSpec};
    use approx::assert_relative_eq;
    use std::collections::BTreeSet;

    fn paper_q() -> DenseGenerator {
        DenseGenerator::try_from_matrix(Mat::from_rows(&[
            vec![-3.0, 1.0, 2.0],
            vec![3.0, -4.0, 1.0],
            vec![1.0, 0.0, -1.0],
        ]))
        .unwrap()
    }

    fn paper_split() -> (DenseGenerator, DenseGenerator) {
        let q = paper_q();
        let mask: BTreeSet<_> = [(2usize, 0usize)].into_iter().collect();
        let b = restrict(&q, &mask);
        let a = restrict(&q, &crate::model::complement_pairs(3, &mask));
        (a, b)
    }

    #[test]
    fn expm_zero_time_is_identity() {
        let q = paper_q();
        let p = expm(&q, 0.0).unwrap();
        assert_eq!(*p.matrix(), Mat::identity(3));
    }

    #[test]
    fn expm_two_state_closed_form() {
        let g = DenseGenerator::try_from_matrix(Mat::from_rows(&[
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
        ]))
        .unwrap();
        for &t in &[0.1, 0.5, 2.0] {
            let p = expm(&g, t).unwrap();
            let stay = 0.5 * (1.0 + (-2.0 * t).exp());
            assert_relative_eq!(p.get(0, 0), stay, epsilon = 1e-12);
            assert_relative_eq!(p.get(0, 1), 1.0 - stay, epsilon = 1e-12);
            assert_relative_eq!(p.get(1, 1), stay, epsilon = 1e-12);
        }
    }

    #[test]
    fn expm_rows_stochastic() {
        let p = expm(&paper_q(), 0.1).unwrap();
        for s in p.matrix().row_sums() {
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn expm_semigroup_property() {
        let q = paper_q();
        let a = expm(&q, 0.3).unwrap();
        let b = expm(&q, 0.45).unwrap();
        let ab = a.compose(&b).unwrap();
        let direct = expm(&q, 0.75).unwrap();
        assert!(ab.matrix().sub(direct.matrix()).max_norm() < 1e-10);
    }

    #[test]
    fn scheme_matrix_zero_second_part() {
        let (a, _) = paper_split();
        let zero = DenseGenerator::try_from_matrix(Mat::zeros(3)).unwrap();
        let lie = scheme_matrix(&a, &zero, &SchemeSpec::lie(), 0.2).unwrap();
        let direct = expm(&a, 0.2).unwrap();
        assert!(lie.matrix().sub(direct.matrix()).max_norm() < 1e-13);
    }

    #[test]
    fn scheme_matrix_commuting_blocks() {
        // Two restrictions acting on disjoint 2-state blocks commute, so
        // the splitting is exact.
        let g = DenseGenerator::try_from_matrix(Mat::from_rows(&[
            vec![-1.0, 1.0, 0.0, 0.0],
            vec![2.0, -2.0, 0.0, 0.0],
            vec![0.0, 0.0, -0.5, 0.5],
            vec![0.0, 0.0, 1.5, -1.5],
        ]))
        .unwrap();
        let mask: BTreeSet<_> = [(0usize, 1usize), (1usize, 0usize)].into_iter().collect();
        let l1 = restrict(&g, &mask);
        let l2 = restrict(&g, &crate::model::complement_pairs(4, &mask));
        for scheme in [SchemeSpec::lie(), SchemeSpec::strang()] {
            let split = scheme_matrix(&l1, &l2, &scheme, 0.3).unwrap();
            let exact = expm(&g, 0.3).unwrap();
            assert!(split.matrix().sub(exact.matrix()).max_norm() < 1e-12);
        }
    }

    #[test]
    fn lie_local_error_is_second_order() {
        let (a, b) = paper_split();
        let err = |dt: f64| {
            let po = exact_matrix(&a, &b, dt).unwrap();
            let pb = scheme_matrix(&b, &a, &SchemeSpec::lie(), dt).unwrap();
            po.matrix().sub(pb.matrix()).max_norm()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 4.0).abs() < 0.5, "expected ~4, got {ratio}");
    }

    #[test]
    fn stationary_symmetric_two_state() {
        let g = DenseGenerator::try_from_matrix(Mat::from_rows(&[
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
        ]))
        .unwrap();
        let mu = stationary(&expm(&g, 0.4).unwrap()).unwrap();
        assert_relative_eq!(mu[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_identity_rejected() {
        let p = TransitionMatrix::try_new(Mat::identity(3), 0.1).unwrap();
        assert!(matches!(stationary(&p), Err(AnalysisError::Reducible { .. })));
    }

    #[test]
    fn stationary_matches_null_left_eigenvector() {
        let q = paper_q();
        let mu = stationary(&expm(&q, 0.5).unwrap()).unwrap();
        let residual = q.matrix().left_mul(&mu);
        for v in residual {
            assert!(v.abs() < 1e-10, "mu Q != 0: {v}");
        }
    }

    #[test]
    fn rer_identical_is_zero() {
        let p = expm(&paper_q(), 0.1).unwrap();
        let mu = stationary(&p).unwrap();
        assert_eq!(rer(&p, &p, &mu).unwrap(), 0.0);
    }

    #[test]
    fn rer_positive_for_distinct_chains() {
        let (a, b) = paper_split();
        let dt = 0.1;
        let po = exact_matrix(&a, &b, dt).unwrap();
        let pb = scheme_matrix(&b, &a, &SchemeSpec::lie(), dt).unwrap();
        let mu = stationary(&pb).unwrap();
        assert!(rer(&pb, &po, &mu).unwrap() > 0.0);
    }

    #[test]
    fn rer_paper_lie_value() {
        // Normalized RER at dt=0.05 follows the two-term expansion
        // 0.124*dt - 0.0566*dt^2 of the worked three-state example.
        let (a, b) = paper_split();
        let dt = 0.05;
        let po = exact_matrix(&a, &b, dt).unwrap();
        let pb = scheme_matrix(&b, &a, &SchemeSpec::lie(), dt).unwrap();
        let mu = stationary(&pb).unwrap();
        let h = rer(&pb, &po, &mu).unwrap();
        assert!((h - 0.0060585).abs() < 2e-4, "got {h}");
    }

    #[test]
    fn path_relative_entropy_trivial_cases() {
        let p = expm(&paper_q(), 0.1).unwrap();
        let mu = stationary(&p).unwrap();
        assert_eq!(path_relative_entropy(&p, &p, &mu, &mu, 5).unwrap(), 0.0);

        let (a, b) = paper_split();
        let po = exact_matrix(&a, &b, 0.1).unwrap();
        let pb = scheme_matrix(&b, &a, &SchemeSpec::lie(), 0.1).unwrap();
        let nu = stationary(&pb).unwrap();
        let one = path_relative_entropy(&pb, &po, &nu, &nu, 1).unwrap();
        let expected = discrete_kl(&nu, &nu).unwrap() + 0.1 * rer(&pb, &po, &nu).unwrap();
        assert_relative_eq!(one, expected, epsilon = 1e-14);
    }

    #[test]
    fn path_relative_entropy_matches_brute_force() {
        // Enumerate all length-3 paths of the 3-state chains and sum
        // nu(x0) Q(x0,x1) Q(x1,x2) Q(x2,x3) log of the density ratio.
        let (a, b) = paper_split();
        let dt = 0.05;
        let po = exact_matrix(&a, &b, dt).unwrap();
        let pb = scheme_matrix(&b, &a, &SchemeSpec::lie(), dt).unwrap();
        let nu0 = stationary(&pb).unwrap();
        let mu0 = stationary(&po).unwrap();
        let m = 3;
        let mut brute = 0.0;
        let n = 3usize;
        for path in 0..n.pow(m as u32 + 1) {
            let mut states = [0usize; 4];
            let mut rem = path;
            for s in states.iter_mut() {
                *s = rem % n;
                rem /= n;
            }
            let mut wq = nu0[states[0]];
            let mut wp = mu0[states[0]];
            for k in 0..m {
                wq *= pb.get(states[k], states[k + 1]);
                wp *= po.get(states[k], states[k + 1]);
            }
            if wq > 0.0 {
                brute += wq * (wq / wp).ln();
            }
        }
        let chain = path_relative_entropy(&pb, &po, &nu0, &mu0, m).unwrap();
        assert!((chain - brute).abs() < 1e-10, "chain={chain} brute={brute}");
    }

    #[test]
    fn rer_absolute_continuity_detected() {
        // Q has an edge where P has an exact zero.
        let q = TransitionMatrix::try_new(
            Mat::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]),
            0.1,
        )
        .unwrap();
        let p = TransitionMatrix::try_new(
            Mat::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]),
            0.1,
        )
        .unwrap();
        let mu = vec![0.5, 0.5];
        assert!(matches!(
            rer(&q, &p, &mu),
            Err(AnalysisError::AbsoluteContinuity { from: 0, to: 1, .. })
        ));
    }
}
