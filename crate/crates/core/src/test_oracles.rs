//! Independent numerical oracles used only by tests.
//!
//! Nothing here is allowed to call into the implementation paths it
//! checks; each oracle is a separate, slower route to the same quantity.

use ndarray::{Array1, Array2};

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi rotation method.
pub fn jacobi_eigenvalues(sym: &Array2<f64>) -> Vec<f64> {
    let n = sym.nrows();
    assert_eq!(n, sym.ncols(), "matrix must be square");
    let mut a = sym.clone();
    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}

/// Central finite difference of a scalar function along each coordinate.
pub fn central_difference<F>(f: F, x: &Array1<f64>, step: f64) -> Array1<f64>
where
    F: Fn(&Array1<f64>) -> f64,
{
    let mut grad = Array1::zeros(x.len());
    for k in 0..x.len() {
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[k] += step;
        lo[k] -= step;
        grad[k] = (f(&hi) - f(&lo)) / (2.0 * step);
    }
    grad
}

/// KKT certificate for Euclidean projection onto the probability simplex:
/// the output must be feasible and there must be a threshold `tau` with
/// `y_i = v_i - tau` on the support and `v_i <= tau` off it.
pub fn is_simplex_projection(v: &Array1<f64>, y: &Array1<f64>, tol: f64) -> bool {
    let sum: f64 = y.sum();
    if (sum - 1.0).abs() > tol || y.iter().any(|&yi| yi < -tol) {
        return false;
    }
    let support: Vec<usize> = (0..y.len()).filter(|&i| y[i] > tol).collect();
    if support.is_empty() {
        return false;
    }
    let tau = support.iter().map(|&i| v[i] - y[i]).sum::<f64>() / support.len() as f64;
    for i in 0..y.len() {
        if y[i] > tol {
            if (v[i] - y[i] - tau).abs() > 10.0 * tol {
                return false;
            }
        } else if v[i] > tau + 10.0 * tol {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn jacobi_recovers_diagonal_spectrum() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let mut eigs = jacobi_eigenvalues(&a);
        eigs.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(eigs[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eigs[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn central_difference_of_quadratic() {
        let f = |x: &Array1<f64>| x.dot(x);
        let x = array![1.0, -2.0, 0.5];
        let g = central_difference(f, &x, 1e-6);
        for k in 0..3 {
            assert_abs_diff_eq!(g[k], 2.0 * x[k], epsilon = 1e-8);
        }
    }
}
