//! Goal-oriented uncertainty-quantification bounds: tilted spectral
//! radii, the variational xi bounds on stationary-mean gaps, and the
//! linearized (autocovariance) bound.

use super::{rer, stationary, AnalysisError, TransitionMatrix};

/// Search window for the variational parameter c.
const C_MIN: f64 = 1e-3;
const C_MAX: f64 = 1e3;
const GOLDEN_ITERS: usize = 200;

/// Log of the spectral radius of the tilted matrix
/// `M(x,y) = P(x,y) exp(c (f(y) - E_mu[f]))`, by power iteration.
pub fn tilted_eigenvalue(
    p: &TransitionMatrix,
    f: &[f64],
    c: f64,
) -> Result<f64, AnalysisError> {
    let mu = stationary(p)?;
    tilted_eigenvalue_with_mean(p, f, c, mean(&mu, f))
}

fn mean(mu: &[f64], f: &[f64]) -> f64 {
    mu.iter().zip(f).map(|(m, v)| m * v).sum()
}

fn tilted_eigenvalue_with_mean(
    p: &TransitionMatrix,
    f: &[f64],
    c: f64,
    ef: f64,
) -> Result<f64, AnalysisError> {
    let n = p.n();
    if f.len() != n {
        return Err(AnalysisError::DimensionMismatch(f.len(), n));
    }
    let weights: Vec<f64> = f.iter().map(|&v| (c * (v - ef)).exp()).collect();
    let mut v = vec![1.0; n];
    let mut lambda = 1.0;
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; n];
        for (x, nx) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for y in 0..n {
                acc += p.get(x, y) * weights[y] * v[y];
            }
            *nx = acc;
        }
        let norm: f64 = next.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(AnalysisError::NonConvergence(format!(
                "tilted power iteration degenerated at c={c} (norm {norm})"
            )));
        }
        for x in &mut next {
            *x /= norm;
        }
        let diff: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        let prev = lambda;
        lambda = norm;
        if diff < 1e-13 && (lambda - prev).abs() < 1e-13 * lambda.max(1.0) {
            return Ok(lambda.ln());
        }
    }
    Err(AnalysisError::NonConvergence(format!("tilted power iteration at c={c}")))
}

/// Variational bounds on the stationary-mean gap of `f`:
/// `xi- <= E_{mu_Q}[f] - E_{mu_P}[f] <= xi+`, with
/// `xi+ = inf_{c>0} (lambda(c) + H_step)/c` and
/// `xi- = sup_{c>0} -(lambda(-c) + H_step)/c`,
/// each optimized by golden-section search on log c.
pub fn goal_oriented_bounds(
    q: &TransitionMatrix,
    p: &TransitionMatrix,
    f: &[f64],
) -> Result<(f64, f64), AnalysisError> {
    let mu_q = stationary(q)?;
    let mu_p = stationary(p)?;
    // Per-step (unnormalized) relative entropy.
    let h_step = q.dt() * rer(q, p, &mu_q)?;
    let ef = mean(&mu_p, f);

    let upper = |c: f64| -> Result<f64, AnalysisError> {
        Ok((tilted_eigenvalue_with_mean(p, f, c, ef)? + h_step) / c)
    };
    let lower = |c: f64| -> Result<f64, AnalysisError> {
        Ok(-(tilted_eigenvalue_with_mean(p, f, -c, ef)? + h_step) / c)
    };

    let xi_plus = golden_min(&upper)?;
    let xi_minus = -golden_min(&|c| lower(c).map(|v| -v))?;
    Ok((xi_minus, xi_plus))
}

/// Golden-section minimization over log c in [ln C_MIN, ln C_MAX].
fn golden_min(
    objective: &dyn Fn(f64) -> Result<f64, AnalysisError>,
) -> Result<f64, AnalysisError> {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut lo = C_MIN.ln();
    let mut hi = C_MAX.ln();
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = objective(x1.exp())?;
    let mut f2 = objective(x2.exp())?;
    for _ in 0..GOLDEN_ITERS {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = objective(x1.exp())?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = objective(x2.exp())?;
        }
    }
    Ok(f1.min(f2))
}

/// Linearized bound `sqrt(ups) * sqrt(2 dt H)` with ups the integrated
/// autocovariance of `f` under the stationary chain of P, summed until
/// the lag term drops below 1e-12 (or `max_lag` is hit, which errors).
pub fn linearized_bound(
    q: &TransitionMatrix,
    p: &TransitionMatrix,
    f: &[f64],
    max_lag: usize,
) -> Result<f64, AnalysisError> {
    let mu_p = stationary(p)?;
    let mu_q = stationary(q)?;
    let h = rer(q, p, &mu_q)?;
    let ef = mean(&mu_p, f);
    let centered: Vec<f64> = f.iter().map(|v| v - ef).collect();

    // ups = var + 2 * sum_{k>=1} E[fbar(X_k) fbar(X_0)], with
    // E[fbar(X_k) fbar(X_0)] = sum_x mu(x) fbar(x) (P^k fbar)(x).
    let var: f64 = mu_p.iter().zip(&centered).map(|(m, v)| m * v * v).sum();
    let mut ups = var;
    let mut g = centered.clone();
    let mut converged = var.abs() < 1e-12;
    for _ in 1..=max_lag {
        g = p.matrix().right_mul(&g);
        let term: f64 = mu_p
            .iter()
            .zip(&centered)
            .zip(&g)
            .map(|((m, v), gk)| m * v * gk)
            .sum();
        ups += 2.0 * term;
        if term.abs() < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(AnalysisError::NonConvergence(format!(
            "autocovariance did not decay below 1e-12 within {max_lag} lags"
        )));
    }
    Ok(ups.max(0.0).sqrt() * (2.0 * q.dt() * h).max(0.0).sqrt())
}
