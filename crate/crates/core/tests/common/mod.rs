//! Independent reference implementations used to cross-check the library:
//! a coordinate-descent Lasso solver, a dense symmetric eigenvalue bound,
//! and a scalar SSIM recomputation. These share no code with the crate
//! under test.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

fn soft(v: f64, g: f64) -> f64 {
    if v > g {
        v - g
    } else if v < -g {
        v + g
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for `min 1/2 ||y - D c||^2 + lambda ||c||_1`,
/// run until the largest coordinate change in a sweep drops below `tol`.
pub fn cd_lasso(d: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64, tol: f64) -> Array1<f64> {
    let (t, n) = d.dim();
    let col_sq: Vec<f64> = (0..n).map(|j| d.column(j).dot(&d.column(j))).collect();
    let mut c = Array1::<f64>::zeros(n);
    let mut resid = y.to_owned(); // y - D c
    for _sweep in 0..100_000 {
        let mut max_delta = 0.0f64;
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = c[j];
            // Partial residual correlation with column j.
            let mut rho = 0.0;
            for i in 0..t {
                rho += d[[i, j]] * resid[i];
            }
            rho += col_sq[j] * old;
            let new = soft(rho, lambda) / col_sq[j];
            if new != old {
                for i in 0..t {
                    resid[i] -= d[[i, j]] * (new - old);
                }
                c[j] = new;
                max_delta = max_delta.max((new - old).abs());
            }
        }
        if max_delta <= tol {
            break;
        }
    }
    c
}

/// Lasso objective recomputed with plain scalar loops.
pub fn lasso_objective(
    d: ArrayView2<f64>,
    y: ArrayView1<f64>,
    c: ArrayView1<f64>,
    lambda: f64,
) -> f64 {
    let (t, n) = d.dim();
    let mut quad = 0.0;
    for i in 0..t {
        let mut fit = 0.0;
        for j in 0..n {
            fit += d[[i, j]] * c[j];
        }
        let r = y[i] - fit;
        quad += r * r;
    }
    let l1: f64 = c.iter().map(|v| v.abs()).sum();
    0.5 * quad + lambda * l1
}

/// Largest eigenvalue of the symmetric matrix `a` via cyclic Jacobi
/// rotations.
pub fn max_eigenvalue_jacobi(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    for _pass in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[[p, q]].abs() < 1e-18 {
                    continue;
                }
                let theta = 0.5 * (m[[q, q]] - m[[p, p]]) / m[[p, q]];
                let t_val = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t_val * t_val + 1.0).sqrt();
                let s = t_val * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[[i, i]]).fold(f64::NEG_INFINITY, f64::max)
}

/// Scalar SSIM reimplementation: 11x11 Gaussian window (sigma 1.5),
/// constants (0.01)^2 and (0.03)^2, valid-position mean, written with
/// explicitly centered moments (a different accumulation order than the
/// library's raw-moment form).
pub fn ssim_reference(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    const WIN: usize = 11;
    const SIGMA: f64 = 1.5;
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let (h, w) = a.dim();
    assert!(h >= WIN && w >= WIN);

    let mut window = [[0.0f64; WIN]; WIN];
    let mut sum = 0.0;
    for (i, row) in window.iter_mut().enumerate() {
        for (j, wv) in row.iter_mut().enumerate() {
            let di = i as f64 - 5.0;
            let dj = j as f64 - 5.0;
            *wv = (-(di * di + dj * dj) / (2.0 * SIGMA * SIGMA)).exp();
            sum += *wv;
        }
    }
    for row in window.iter_mut() {
        for wv in row.iter_mut() {
            *wv /= sum;
        }
    }

    let mut acc = 0.0;
    let mut count = 0usize;
    for r in 0..=(h - WIN) {
        for c in 0..=(w - WIN) {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            for i in 0..WIN {
                for j in 0..WIN {
                    mu_a += window[i][j] * a[[r + i, c + j]];
                    mu_b += window[i][j] * b[[r + i, c + j]];
                }
            }
            let mut var_a = 0.0;
            let mut var_b = 0.0;
            let mut cov = 0.0;
            for i in 0..WIN {
                for j in 0..WIN {
                    let da = a[[r + i, c + j]] - mu_a;
                    let db = b[[r + i, c + j]] - mu_b;
                    var_a += window[i][j] * da * da;
                    var_b += window[i][j] * db * db;
                    cov += window[i][j] * da * db;
                }
            }
            acc += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            count += 1;
        }
    }
    acc / count as f64
}
