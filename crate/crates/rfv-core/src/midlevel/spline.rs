//! Natural cubic smoothing splines (Reinsch scheme).
//!
//! Minimizes `sum_i (y_i - f(t_i))^2 + lambda * int f''(t)^2 dt` over
//! natural cubic splines with knots at the data points. `lambda = 0`
//! reduces to the interpolating natural cubic spline.

/// A fitted 1D smoothing spline: knots, fitted values, and second
/// derivatives at the knots (natural boundary: zero at both ends).
#[derive(Debug, Clone)]
pub struct SmoothingSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second_derivs: Vec<f64>,
}

impl SmoothingSpline {
    /// Fit to `(t, y)` pairs with penalty `lambda >= 0`. Requires at least
    /// 4 strictly increasing knots (checked by the caller).
    pub fn fit(t: &[f64], y: &[f64], lambda: f64) -> SmoothingSpline {
        let n = t.len();
        debug_assert!(n >= 4 && t.len() == y.len());
        let m = n - 2; // inner knots carry the free second derivatives
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();

        // R (m x m, tridiagonal) and Q^T y, Q^T Q assembled densely; the
        // trajectories here are tens of points, so a dense solve is fine.
        let mut a = vec![0.0f64; m * m]; // R + lambda * Q^T Q
        let mut rhs = vec![0.0f64; m];
        for i in 0..m {
            // row for inner knot i+1
            a[i * m + i] += (h[i] + h[i + 1]) / 3.0;
            if i + 1 < m {
                a[i * m + i + 1] += h[i + 1] / 6.0;
                a[(i + 1) * m + i] += h[i + 1] / 6.0;
            }
        }
        // Column j of Q touches rows j, j+1, j+2 with
        // (1/h_j, -(1/h_j + 1/h_{j+1}), 1/h_{j+1}).
        let qcol = |j: usize| -> [(usize, f64); 3] {
            [
                (j, 1.0 / h[j]),
                (j + 1, -(1.0 / h[j] + 1.0 / h[j + 1])),
                (j + 2, 1.0 / h[j + 1]),
            ]
        };
        for i in 0..m {
            for &(row_i, qi) in &qcol(i) {
                rhs[i] += qi * y[row_i];
                if lambda > 0.0 {
                    // Q^T Q is banded with bandwidth 2
                    for j in i.saturating_sub(2)..(i + 3).min(m) {
                        for &(row_j, qj) in &qcol(j) {
                            if row_i == row_j {
                                a[i * m + j] += lambda * qi * qj;
                            }
                        }
                    }
                }
            }
        }

        let gamma_inner = solve_dense(&mut a, &mut rhs, m);

        // Fitted values: a = y - lambda * Q gamma.
        let mut values = y.to_vec();
        if lambda > 0.0 {
            for (j, &g) in gamma_inner.iter().enumerate() {
                for &(row, q) in &qcol(j) {
                    values[row] -= lambda * q * g;
                }
            }
        }

        let mut second_derivs = vec![0.0f64; n];
        second_derivs[1..n - 1].copy_from_slice(&gamma_inner);

        SmoothingSpline {
            knots: t.to_vec(),
            values,
            second_derivs,
        }
    }

    /// Evaluate at `t`, clamped to the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        let t = t.clamp(self.knots[0], self.knots[n - 1]);
        // locate the interval by binary search
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (t0, t1) = (self.knots[lo], self.knots[lo + 1]);
        let h = t1 - t0;
        let (a0, a1) = (self.values[lo], self.values[lo + 1]);
        let (g0, g1) = (self.second_derivs[lo], self.second_derivs[lo + 1]);
        let (u, v) = (t1 - t, t - t0);
        a0 * u / h + a1 * v / h
            + (u * u * u / h - h * u) * g0 / 6.0
            + (v * v * v / h - h * v) * g1 / 6.0
    }

    pub fn fitted_values(&self) -> &[f64] {
        &self.values
    }
}

/// Gaussian elimination with partial pivoting; consumes `a` (n x n,
/// row-major) and `b`.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Vec<f64> {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        debug_assert!(diag.abs() > 0.0, "singular smoothing system");
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor != 0.0 {
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    x
}
