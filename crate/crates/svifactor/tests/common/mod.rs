//! Shared support for the integration suites: an extended-precision
//! least-squares oracle and the acceptance reporter.
//!
//! The oracle solves the normal equations in double-double arithmetic
//! (roughly 32 significant digits) so that it is an independent check on the
//! library's SVD-based solver rather than a reimplementation of it.

#![allow(dead_code)]

/// A double-double value: an unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

/// Error-free sum of two doubles (Knuth two-sum).
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Error-free sum assuming `|a| >= |b|` (Dekker fast two-sum).
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

/// Error-free product via fused multiply-add.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> f64 {
        self.value().abs()
    }

    pub fn add(self, rhs: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, rhs.hi);
        let (t1, t2) = two_sum(self.lo, rhs.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }

    pub fn sub(self, rhs: Dd) -> Dd {
        self.add(Dd {
            hi: -rhs.hi,
            lo: -rhs.lo,
        })
    }

    pub fn mul(self, rhs: Dd) -> Dd {
        let (p1, p2) = two_prod(self.hi, rhs.hi);
        let p2 = p2 + self.hi * rhs.lo + self.lo * rhs.hi;
        let (hi, lo) = quick_two_sum(p1, p2);
        Dd { hi, lo }
    }

    pub fn div(self, rhs: Dd) -> Dd {
        let q1 = self.hi / rhs.hi;
        let r = self.sub(rhs.mul(Dd::from(q1)));
        let q2 = r.hi / rhs.hi;
        let r = r.sub(rhs.mul(Dd::from(q2)));
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from(q3))
    }
}

/// Solves `y = b0 + b1*x1 + ... + bp*xp` through the normal equations in
/// double-double arithmetic, Gaussian elimination with partial pivoting.
///
/// `columns` holds the `p` regressor columns; the intercept is prepended
/// internally, mirroring the library's convention of returning `p + 1`
/// coefficients with the intercept first.
pub fn oracle_least_squares(columns: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let p = columns.len();
    let k = p + 1;
    for c in columns {
        assert_eq!(c.len(), n, "oracle: ragged design matrix");
    }

    // Column j of X, with column 0 the implicit intercept.
    let col = |j: usize, i: usize| -> f64 {
        if j == 0 {
            1.0
        } else {
            columns[j - 1][i]
        }
    };

    // Normal equations: A = X'X, b = X'y, accumulated in double-double.
    let mut a = vec![vec![Dd::ZERO; k + 1]; k]; // augmented [A | b]
    for r in 0..k {
        for c in 0..k {
            let mut acc = Dd::ZERO;
            for i in 0..n {
                acc = acc.add(Dd::from(col(r, i)).mul(Dd::from(col(c, i))));
            }
            a[r][c] = acc;
        }
        let mut acc = Dd::ZERO;
        for i in 0..n {
            acc = acc.add(Dd::from(col(r, i)).mul(Dd::from(y[i])));
        }
        a[r][k] = acc;
    }

    // Gaussian elimination with partial pivoting.
    for piv in 0..k {
        let (best, best_mag) = (piv..k)
            .map(|r| (r, a[r][piv].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty pivot search");
        assert!(best_mag > 0.0, "oracle: singular normal equations");
        a.swap(piv, best);
        for r in piv + 1..k {
            let factor = a[r][piv].div(a[piv][piv]);
            for c in piv..=k {
                let scaled = factor.mul(a[piv][c]);
                a[r][c] = a[r][c].sub(scaled);
            }
        }
    }

    // Back substitution.
    let mut beta = vec![Dd::ZERO; k];
    for r in (0..k).rev() {
        let mut acc = a[r][k];
        for c in r + 1..k {
            acc = acc.sub(a[r][c].mul(beta[c]));
        }
        beta[r] = acc.div(a[r][r]);
    }
    beta.into_iter().map(Dd::value).collect()
}

/// Relative disagreement between an estimate and the oracle value, with a
/// floor of 1 on the denominator so near-zero coefficients are judged on
/// absolute error.
pub fn relative_error(estimate: f64, oracle: f64) -> f64 {
    (estimate - oracle).abs() / oracle.abs().max(1.0)
}

/// Prints the one-line verdict for an acceptance criterion, then enforces it.
pub fn criterion(number: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {number} [{verdict}] {name}: {detail}");
    assert!(pass, "criterion {number} ({name}) failed: {detail}");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_recovers_exact_plane() {
        let x1: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let x2: Vec<f64> = (0..12).map(|i| ((i * i + 2) % 7) as f64 * 0.5).collect();
        let y: Vec<f64> = (0..12).map(|i| 1.0 + 2.0 * x1[i] - 3.0 * x2[i]).collect();
        let beta = oracle_least_squares(&[x1, x2], &y);
        assert!((beta[0] - 1.0).abs() < 1e-13);
        assert!((beta[1] - 2.0).abs() < 1e-13);
        assert!((beta[2] + 3.0).abs() < 1e-13);
    }

    #[test]
    fn dd_div_multiplies_back() {
        let a = Dd::from(1.0).div(Dd::from(3.0));
        let back = a.mul(Dd::from(3.0));
        assert!((back.value() - 1.0).abs() < 1e-30);
    }
}
