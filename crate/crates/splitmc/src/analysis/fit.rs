//! Power-law order fitting for RER and local-error curves.

use super::AnalysisError;

#[derive(Clone, Debug)]
pub struct OrderFit {
    /// Fitted exponent from the log-log regression.
    pub slope: f64,
    /// Polynomial coefficients of H / dt^round(slope) in increasing
    /// powers of dt: coeffs[0] is the leading coefficient, coeffs[1]
    /// the next-order one.
    pub coeffs: Vec<f64>,
    /// The dt values used, strictly increasing.
    pub grid: Vec<f64>,
    /// R^2 of the log-log regression.
    pub rsq: f64,
}

impl OrderFit {
    pub fn rounded_slope(&self) -> i64 {
        self.slope.round() as i64
    }
}

/// Fits `H(dt) ~ c * dt^s` from samples: the slope comes from a
/// least-squares line on (log dt, log H); the polynomial coefficients
/// from a quadratic fit of H/dt^round(s) against dt.
pub fn fit_order(samples: &[(f64, f64)]) -> Result<OrderFit, AnalysisError> {
    if samples.len() < 4 {
        return Err(AnalysisError::BadInput(format!(
            "need at least 4 samples, got {}",
            samples.len()
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for &(dt, h) in &sorted {
        if !(dt > 0.0 && dt < 1.0) {
            return Err(AnalysisError::BadInput(format!("dt={dt} outside (0,1)")));
        }
        if !(h > 0.0) {
            return Err(AnalysisError::BadInput(format!("non-positive H={h} at dt={dt}")));
        }
    }

    let logs: Vec<(f64, f64)> = sorted.iter().map(|&(dt, h)| (dt.ln(), h.ln())).collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;

    let mean_y = sy / n;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let rsq = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    // Expansion coefficients of the dt^s-normalized values. On dyadic
    // grids, stability-selected Richardson extrapolation beats a
    // least-squares polynomial: it ignores both the higher-order tail
    // at the coarse end and the rounding noise at the fine end.
    let r = slope.round();
    let normalized: Vec<(f64, f64)> = sorted.iter().map(|&(dt, h)| (dt, h / dt.powf(r))).collect();
    let coeffs = if is_dyadic(&normalized) {
        // Coarse-to-fine: v[k] = c0 + c1 dt/2^k + O(4^-k).
        let v: Vec<f64> = normalized.iter().rev().map(|p| p.1).collect();
        let dts: Vec<f64> = normalized.iter().rev().map(|p| p.0).collect();
        let c0 = richardson_limit(&v);
        // First differences isolate the next coefficient:
        // (v[k] - v[k+1]) / (dt_k/2) = c1 + O(dt_k).
        let d: Vec<f64> =
            v.windows(2).zip(&dts).map(|(w, &dt)| (w[0] - w[1]) / (dt / 2.0)).collect();
        let c1 = richardson_limit(&d);
        vec![c0, c1]
    } else {
        polyfit(&normalized, 2)?
    };

    Ok(OrderFit { slope, coeffs, grid: sorted.iter().map(|p| p.0).collect(), rsq })
}

/// True when the (ascending) grid has at least 5 points, each half of
/// the next.
fn is_dyadic(points: &[(f64, f64)]) -> bool {
    points.len() >= 5
        && points.windows(2).all(|w| (w[0].0 / w[1].0 - 0.5).abs() < 1e-9)
}

/// Limit of a sequence v[k] = c + a 2^-k + O(4^-k): first-order
/// extrapolants E[k] = 2 v[k+1] - v[k], with the most stable
/// consecutive pair selected (mirrors the commutator extraction).
fn richardson_limit(vals: &[f64]) -> f64 {
    let e: Vec<f64> = vals.windows(2).map(|w| 2.0 * w[1] - w[0]).collect();
    if e.len() == 1 {
        return e[0];
    }
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for i in 0..e.len() - 1 {
        let gap = (e[i + 1] - e[i]).abs();
        if gap < best_gap {
            best_gap = gap;
            best = i;
        }
    }
    e[best + 1]
}

/// Least-squares polynomial fit of degree `deg` via normal equations;
/// returns coefficients in increasing powers.
pub fn polyfit(points: &[(f64, f64)], deg: usize) -> Result<Vec<f64>, AnalysisError> {
    let k = deg + 1;
    if points.len() < k {
        return Err(AnalysisError::BadInput(format!(
            "polynomial degree {deg} needs {k} points, got {}",
            points.len()
        )));
    }
    // Scale x to [-1, 1] first: raw powers of widely ranged abscissae
    // (e.g. dyadic dt grids) make the normal equations too
    // ill-conditioned for a cubic.
    let x_scale = points.iter().map(|p| p.0.abs()).fold(0.0f64, f64::max).max(1e-300);
    // Normal equations A c = b with A[i][j] = sum x^{i+j}.
    let mut pow_sums = vec![0.0; 2 * k - 1];
    let mut b = vec![0.0; k];
    for &(x, y) in points {
        let x = x / x_scale;
        let mut xp = 1.0;
        for (i, ps) in pow_sums.iter_mut().enumerate() {
            *ps += xp;
            if i < k {
                b[i] += y * xp;
            }
            xp *= x;
        }
    }
    let mut a: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| pow_sums[i + j]).collect()).collect();

    // Gaussian elimination with partial pivoting.
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(AnalysisError::BadInput("singular normal equations in polyfit".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for j in col..k {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut c = vec![0.0; k];
    for row in (0..k).rev() {
        let mut v = b[row];
        for j in row + 1..k {
            v -= a[row][j] * c[j];
        }
        c[row] = v / a[row][row];
    }
    // Undo the abscissa scaling.
    let mut scale = 1.0;
    for coef in &mut c {
        *coef /= scale;
        scale *= x_scale;
    }
    Ok(c)
}
