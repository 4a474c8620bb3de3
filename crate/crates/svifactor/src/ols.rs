//! Ordinary least squares: the single-regressor estimator used for exposure
//! windows and the multi-regressor estimator used by the monthly
//! cross-sectional regressions.
//!
//! The univariate fit is the closed form `beta = cov(x, y) / var(x)`; the
//! multivariate fit goes through a singular value decomposition, which stays
//! accurate on ill-conditioned designs where forming the normal equations
//! would lose half the working precision.
//!
//! The exposure estimator deliberately takes exactly one regressor: the
//! structural model regresses returns on the search-volume change alone, with
//! no market proxy, and the function signature makes adding one impossible.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative variance floor below which a regressor counts as constant:
/// `var(x) < DEGENERATE_VAR_TOL * mean(x^2)` fails the fit.
pub const DEGENERATE_VAR_TOL: f64 = 1e-12;

/// Relative singular-value cutoff for declaring a design rank deficient.
pub const SINGULAR_TOL: f64 = 1e-10;

/// Result of a univariate regression `y = alpha + beta * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnivariateFit {
    /// Intercept.
    pub alpha: f64,
    /// Slope.
    pub beta: f64,
    /// Number of observations used.
    pub n: usize,
}

/// Fits `y = alpha + beta * x` by least squares.
///
/// `x` and `y` must have equal length `n >= 2`, and `x` must show variation:
/// a sample with `var(x) < 1e-12 * mean(x^2)` (or identically zero) is
/// rejected as a degenerate regressor.
pub fn ols_univariate(x: &[f64], y: &[f64]) -> Result<UnivariateFit> {
    if x.len() != y.len() {
        return Err(Error::validation(format!(
            "regressor and target lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::numeric(format!(
            "univariate fit needs at least 2 observations, got {n}"
        )));
    }
    if let Some(bad) = x.iter().chain(y.iter()).find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite value in regression input ({bad})")));
    }

    let nf = n as f64;
    let mean_x = x.iter().sum::<f64>() / nf;
    let mean_y = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|&v| (v - mean_x) * (v - mean_x)).sum();
    let mean_sq: f64 = x.iter().map(|&v| v * v).sum::<f64>() / nf;
    if mean_sq == 0.0 || sxx / nf < DEGENERATE_VAR_TOL * mean_sq {
        return Err(Error::numeric(
            "degenerate regressor: x has no usable variation".to_string(),
        ));
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (xi - mean_x) * (yi - mean_y))
        .sum();
    let beta = sxy / sxx;
    let alpha = mean_y - beta * mean_x;
    Ok(UnivariateFit { alpha, beta, n })
}

/// Fits `y = b0 + b1*x1 + ... + bp*xp` by least squares via SVD.
///
/// `columns` holds the `p` regressor columns (the intercept is added
/// internally); the returned coefficients have length `p + 1` with the
/// intercept first. Requires `n > p + 1` observations. A design whose
/// smallest singular value falls below `1e-10` times the largest is rejected
/// as singular, with the error message naming the participating columns
/// (the intercept counts as column 0).
pub fn ols_multivariate(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let p = columns.len();
    let n = y.len();
    if p == 0 {
        return Err(Error::validation("multivariate fit needs at least one regressor"));
    }
    for (j, col) in columns.iter().enumerate() {
        if col.len() != n {
            return Err(Error::validation(format!(
                "regressor column {} has length {}, target has {n}",
                j + 1,
                col.len()
            )));
        }
    }
    if n <= p + 1 {
        return Err(Error::numeric(format!(
            "multivariate fit needs more than {} observations for {p} regressors, got {n}",
            p + 1
        )));
    }
    if let Some(bad) = columns
        .iter()
        .flatten()
        .chain(y.iter())
        .find(|v| !v.is_finite())
    {
        return Err(Error::numeric(format!("non-finite value in regression input ({bad})")));
    }

    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let rhs = DVector::from_column_slice(y);

    let svd = design.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let min_sv = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if max_sv == 0.0 || min_sv < SINGULAR_TOL * max_sv {
        return Err(Error::numeric(format!(
            "singular design: columns {{{}}} are collinear (intercept is column 0)",
            collinear_columns(&svd).iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
        )));
    }

    let solution = svd
        .solve(&rhs, SINGULAR_TOL * max_sv)
        .map_err(|e| Error::numeric(format!("least-squares solve failed: {e}")))?;
    Ok(solution.iter().copied().collect())
}

/// Columns participating in the near-null combination of a rank-deficient
/// design: entries of the right-singular vector for the smallest singular
/// value whose magnitude is non-negligible.
fn collinear_columns(svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) -> Vec<usize> {
    let (Some(v_t), Some(values)) = (svd.v_t.as_ref(), Some(&svd.singular_values)) else {
        return Vec::new();
    };
    let min_idx = (0..values.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    let null_vec = v_t.row(min_idx);
    let max_mag = null_vec.iter().cloned().map(f64::abs).fold(0.0_f64, f64::max);
    (0..null_vec.len())
        .filter(|&j| null_vec[j].abs() > 1e-3 * max_mag)
        .collect()
}
