//! Small dense linear-algebra helpers.
//!
//! The matrices in this crate are tiny (mixing matrices over a few dozen
//! agents, quadratic test problems of single-digit dimension), so plain
//! dense routines are all that is needed.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: matrix is {n}x{n}, vector has length {len}")]
    DimensionMismatch { n: usize, len: usize },
    #[error("matrix is singular to working precision (pivot {pivot:e} at column {col})")]
    Singular { col: usize, pivot: f64 },
}

/// Euclidean norm of a vector.
pub fn l2(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Rescale `v` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_l2(v: &mut Array1<f64>, max_norm: f64) {
    let norm = l2(v);
    if norm > max_norm {
        *v *= max_norm / norm;
    }
}

/// Largest singular value of a square matrix, by power iteration on
/// `A^T A`. Stops when the eigen-residual of the Rayleigh estimate drops
/// below `rel_tol` (relative), or after `max_iter` sweeps.
pub fn spectral_norm(a: &Array2<f64>, rel_tol: f64, max_iter: usize) -> Result<f64, LinalgError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Ok(0.0);
    }
    let gram = a.t().dot(a);

    // Deterministic start vector; a fixed pseudo-random direction has zero
    // overlap with any eigenvector only on a measure-zero set.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0057_ec72_a175_u64);
    let mut v = Array1::from_shape_fn(rows, |_| rng.random::<f64>() - 0.5);
    let norm = l2(&v);
    v /= norm;

    let mut rayleigh = 0.0;
    for _ in 0..max_iter {
        let w = gram.dot(&v);
        let wnorm = l2(&w);
        if wnorm == 0.0 {
            return Ok(0.0);
        }
        rayleigh = v.dot(&w);
        // For symmetric matrices the residual bounds the eigenvalue error.
        let residual = l2(&(&w - &(rayleigh * &v)));
        if residual <= rel_tol * rayleigh.max(f64::MIN_POSITIVE) {
            break;
        }
        v = w / wnorm;
    }
    Ok(rayleigh.max(0.0).sqrt())
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, LinalgError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    if b.len() != rows {
        return Err(LinalgError::DimensionMismatch { n: rows, len: b.len() });
    }
    let n = rows;
    let mut m = a.clone();
    let mut rhs = b.clone();

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .expect("non-empty pivot range");
        let pivot = m[[pivot_row, col]];
        if pivot.abs() < 1e-300 {
            return Err(LinalgError::Singular { col, pivot });
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap([pivot_row, k], [col, k]);
            }
            rhs.swap(pivot_row, col);
        }
        for row in col + 1..n {
            let factor = m[[row, col]] / m[[col, col]];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[[row, k]] -= factor * m[[col, k]];
            }
            rhs[row] -= factor * rhs[col];
        }
    }

    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[[row, k]] * x[k];
        }
        x[row] = acc / m[[row, row]];
    }
    Ok(x)
}
