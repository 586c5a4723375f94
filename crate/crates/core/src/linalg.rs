//! Small dense helpers: Cholesky factorization and Gram power iteration.

use crate::{fl, Error, Result, Scalar};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub(crate) fn cholesky<F: Scalar>(a: &Array2<F>) -> Result<Array2<F>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("cholesky", "square matrix", format!("{}x{}", n, a.ncols())));
    }
    let mut l = Array2::<F>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum = sum - l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= F::zero() {
                    return Err(Error::Numerical(format!(
                        "cholesky: non-positive pivot {sum} at row {i}"
                    )));
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` given the lower Cholesky factor.
pub(crate) fn chol_solve<F: Scalar>(l: &Array2<F>, b: ArrayView1<F>) -> Array1<F> {
    let n = l.nrows();
    let mut y = b.to_owned();
    for i in 0..n {
        for k in 0..i {
            let t = l[[i, k]] * y[k];
            y[i] = y[i] - t;
        }
        y[i] = y[i] / l[[i, i]];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = l[[k, i]] * y[k];
            y[i] = y[i] - t;
        }
        y[i] = y[i] / l[[i, i]];
    }
    y
}

/// Explicit inverse from the lower Cholesky factor.
pub(crate) fn chol_inverse<F: Scalar>(l: &Array2<F>) -> Array2<F> {
    let n = l.nrows();
    let mut inv = Array2::<F>::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::<F>::zeros(n);
        e[j] = F::one();
        let col = chol_solve(l, e.view());
        inv.column_mut(j).assign(&col);
    }
    inv
}

const POWER_TOL: f64 = 1e-9;
const POWER_CAP: usize = 1000;
const SAFETY_CONVERGED: f64 = 1.001;
const SAFETY_FALLBACK: f64 = 1.01;

/// Largest eigenvalue of `D^T D` by power iteration, scaled by a small
/// safety factor so the estimate upper-bounds the true value. The start
/// vector is a fixed pseudo-random direction (a deterministic sign-free
/// start such as all-ones can be nearly orthogonal to the dominant
/// eigenvector, stalling the Rayleigh quotient at an interior eigenvalue),
/// and convergence requires several consecutive stable checks to ride out
/// plateaus.
pub(crate) fn gram_spectral_bound<F: Scalar>(entries: ArrayView2<F>) -> F {
    let n = entries.ncols();
    if n == 0 {
        return F::one();
    }
    let gram = entries.t().dot(&entries);
    // Deterministic pseudo-random start: splitmix64 stream mapped to
    // [0.5, 1.5) with alternating signs broken by the low bit.
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    let mut v = Array1::<F>::from_shape_fn(n, |_| {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        let frac = (z >> 11) as f64 / (1u64 << 53) as f64; // [0, 1)
        let sign = if z & 1 == 0 { 1.0 } else { -1.0 };
        fl::<F>(sign * (0.5 + frac))
    });
    let norm0 = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm0);

    let mut lam_prev = F::zero();
    let mut stable = 0usize;
    let tol = fl::<F>(POWER_TOL);
    for it in 0..POWER_CAP {
        let w = gram.dot(&v);
        let lam = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm == F::zero() {
            // Zero Gram matrix; any positive step size is valid.
            return F::one();
        }
        v = w / norm;
        if it > 0 && (lam - lam_prev).abs() <= tol * lam.abs().max(F::epsilon()) {
            stable += 1;
            if stable >= 5 {
                return lam * fl::<F>(SAFETY_CONVERGED);
            }
        } else {
            stable = 0;
        }
        lam_prev = lam;
    }
    eprintln!(
        "warning: power iteration did not converge within {POWER_CAP} iterations; \
         using inflated estimate"
    );
    lam_prev * fl::<F>(SAFETY_FALLBACK)
}
