//! Finite-difference validation of the implicit-differentiation pieces:
//! the per-entry code Jacobian against re-solves at perturbed dictionaries,
//! and the end-to-end pole gradient against central differences of the full
//! encode-decode loss.

use dynatoms::atoms::PoleSet;
use dynatoms::dictionary::{build_decoder, build_encoder, Dictionary};
use dynatoms::gradients::{
    code_jacobian_wrt_entry, lambda_gradient, loss_value, pole_gradient, workspace,
};
use dynatoms::solver::fista_batch;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SOLVE_ITERS: usize = 200_000;
const SOLVE_TOL: f64 = 1e-13;

fn solve_one(m: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> Array1<f64> {
    let d = Dictionary::from_raw(m.clone()).unwrap();
    let codes = fista_batch(
        &d,
        y.clone().insert_axis(ndarray::Axis(1)).view(),
        lambda,
        SOLVE_ITERS,
        SOLVE_TOL,
    )
    .unwrap();
    codes.column(0).to_owned()
}

fn support(c: &Array1<f64>) -> Vec<usize> {
    c.iter().enumerate().filter(|(_, v)| v.abs() > 1e-8).map(|(i, _)| i).collect()
}

#[test]
fn entry_jacobian_matches_resolve_at_perturbed_dictionary() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 1e-5;
    let mut checked = 0usize;
    for _trial in 0..40 {
        let t = rng.gen_range(3..=6);
        let n = rng.gen_range(2..=5);
        let mut m = Array2::from_shape_fn((t, n), |_| rng.gen::<f64>() * 2.0 - 1.0);
        for mut col in m.columns_mut() {
            let norm = col.dot(&col).sqrt();
            col.mapv_inplace(|v| v / norm);
        }
        let y = Array1::from_shape_fn(t, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let lambda = 0.05;

        let base = solve_one(&m, &y, lambda);
        let sup = support(&base);
        if sup.is_empty() || sup.len() >= t {
            continue;
        }
        let d = Dictionary::from_raw(m.clone()).unwrap();
        let ws = workspace(&d, base.view()).unwrap();

        let i = rng.gen_range(0..t);
        let j = sup[rng.gen_range(0..sup.len())];
        let analytic = code_jacobian_wrt_entry(&ws, y.view(), i, j);

        let mut m_plus = m.clone();
        m_plus[[i, j]] += eps;
        let mut m_minus = m.clone();
        m_minus[[i, j]] -= eps;
        let c_plus = solve_one(&m_plus, &y, lambda);
        let c_minus = solve_one(&m_minus, &y, lambda);
        if support(&c_plus) != sup || support(&c_minus) != sup {
            continue;
        }
        for (pos, &col) in sup.iter().enumerate() {
            let fd = (c_plus[col] - c_minus[col]) / (2.0 * eps);
            let rel = (analytic[pos] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel <= 1e-4, "entry ({i},{j}) -> active {pos}: {} vs {fd}", analytic[pos]);
        }
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} stable instances checked");
}

#[test]
fn inactive_column_entry_has_zero_jacobian() {
    // Orthonormal dictionary, one inactive coordinate.
    let m: Array2<f64> =
        ndarray::array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let y = ndarray::array![0.9, 0.2, 0.0];
    let lambda = 0.3; // kills coordinates 2 and 3
    let base = solve_one(&m, &y, lambda);
    assert_eq!(support(&base), vec![0]);
    let d = Dictionary::from_raw(m).unwrap();
    let ws = workspace(&d, base.view()).unwrap();
    let jac = code_jacobian_wrt_entry(&ws, y.view(), 1, 2);
    assert!(jac.iter().all(|&v| v == 0.0));
}

#[test]
fn lambda_jacobian_matches_resolve() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let eps = 1e-5;
    let mut checked = 0usize;
    for _trial in 0..30 {
        let t = rng.gen_range(3..=6);
        let n = rng.gen_range(2..=5);
        let mut m = Array2::from_shape_fn((t, n), |_| rng.gen::<f64>() * 2.0 - 1.0);
        for mut col in m.columns_mut() {
            let norm = col.dot(&col).sqrt();
            col.mapv_inplace(|v| v / norm);
        }
        let y = Array1::from_shape_fn(t, |_| rng.gen::<f64>() * 2.0 - 1.0);
        let lambda = 0.05;
        let base = solve_one(&m, &y, lambda);
        let sup = support(&base);
        if sup.is_empty() || sup.len() >= t {
            continue;
        }
        let c_plus = solve_one(&m, &y, lambda + eps);
        let c_minus = solve_one(&m, &y, lambda - eps);
        if support(&c_plus) != sup || support(&c_minus) != sup {
            continue;
        }
        let d = Dictionary::from_raw(m.clone()).unwrap();
        let ws = workspace(&d, base.view()).unwrap();
        // Probe each active coordinate with a basis downstream vector.
        for (pos, &col) in sup.iter().enumerate() {
            let mut down = Array1::<f64>::zeros(sup.len());
            down[pos] = 1.0;
            let analytic = lambda_gradient(&ws, down.view());
            let fd = (c_plus[col] - c_minus[col]) / (2.0 * eps);
            let rel = (analytic - fd).abs() / fd.abs().max(1e-3);
            assert!(rel <= 1e-4, "lambda partial coord {pos}: {analytic} vs {fd}");
        }
        checked += 1;
    }
    assert!(checked >= 8, "only {checked} stable instances checked");
}

#[test]
fn single_pole_pole_gradient_matches_fd() {
    let rho = 0.93;
    let psi = 0.55;
    let lambda = 0.05;
    let t = 4;
    let y = Array2::from_shape_fn((t, 1), |(k, _)| {
        0.85 * 0.9f64.powi(k as i32) * (0.5 * k as f64).cos() + 0.02 * (k as f64).sin()
    });
    let target = Array2::from_elem((1, 1), 0.25);

    let loss_at = |r: f64, p: f64| -> f64 {
        let ps = PoleSet::new(vec![r], vec![p], false).unwrap();
        let d_enc = build_encoder(&ps, t).unwrap();
        let d_dec = build_decoder(&ps, t).unwrap();
        let codes = fista_batch(&d_enc, y.view(), lambda, SOLVE_ITERS, SOLVE_TOL).unwrap();
        loss_value(&d_dec, codes.view(), target.view()).unwrap()
    };

    let ps = PoleSet::new(vec![rho], vec![psi], false).unwrap();
    let d_enc = build_encoder(&ps, t).unwrap();
    let d_dec = build_decoder(&ps, t).unwrap();
    let codes = fista_batch(&d_enc, y.view(), lambda, SOLVE_ITERS, SOLVE_TOL).unwrap();
    let grad =
        pole_gradient(&ps, &d_enc, &d_dec, codes.view(), y.view(), target.view(), lambda, false)
            .unwrap();

    let eps = 1e-5;
    let fd_rho = (loss_at(rho + eps, psi) - loss_at(rho - eps, psi)) / (2.0 * eps);
    let fd_psi = (loss_at(rho, psi + eps) - loss_at(rho, psi - eps)) / (2.0 * eps);
    assert!(
        (grad.d_rho[0] - fd_rho).abs() <= 1e-4 * fd_rho.abs().max(1e-3),
        "rho: {} vs {fd_rho}",
        grad.d_rho[0]
    );
    assert!(
        (grad.d_psi[0] - fd_psi).abs() <= 1e-4 * fd_psi.abs().max(1e-3),
        "psi: {} vs {fd_psi}",
        grad.d_psi[0]
    );
}

#[test]
fn zero_loss_point_has_near_zero_gradient() {
    // Target exactly representable and lambda tiny: the loss sits at a
    // (near-)stationary point.
    let ps = PoleSet::new(vec![0.95], vec![0.6], true).unwrap();
    let t = 8;
    let d_enc = build_encoder(&ps, t).unwrap();
    let d_dec = build_decoder(&ps, t).unwrap();
    let y = Array2::from_shape_fn((t, 2), |(k, l)| {
        (1.0 + 0.3 * l as f64) * 0.95f64.powi(k as i32) * (0.6 * k as f64 + 0.2).cos()
    });
    let lambda = 1e-9;
    let codes = fista_batch(&d_enc, y.view(), lambda, SOLVE_ITERS, 1e-14).unwrap();
    // Target = the model's own prediction row, so the residual is zero.
    let dec = d_dec.entries().to_owned();
    let pred = dec.dot(&codes);
    let target = pred.slice(ndarray::s![t..t + 1, ..]).to_owned();
    let grad =
        pole_gradient(&ps, &d_enc, &d_dec, codes.view(), y.view(), target.view(), lambda, false)
            .unwrap();
    assert!(grad.max_abs() <= 1e-6, "gradient {:e} at a stationary point", grad.max_abs());
}

#[test]
fn direct_path_gradient_is_linear_in_residual() {
    // With codes held fixed, doubling the residual doubles the gradient of
    // the decoder-side (direct) path. Use an instance where the implicit
    // path vanishes: lambda = 0 and an exact fit make e = 0, leaving only
    // the direct term, which is linear in (pred - target).
    let ps = PoleSet::new(vec![0.9], vec![0.8], false).unwrap();
    let t = 6;
    let d_enc = build_encoder(&ps, t).unwrap();
    let d_dec = build_decoder(&ps, t).unwrap();
    let mut codes = Array2::<f64>::zeros((d_enc.cols(), 1));
    codes[[0, 0]] = 0.7;
    codes[[1, 0]] = -0.4;
    let y = d_enc.entries().dot(&codes);
    let dec = d_dec.entries().to_owned();
    let pred = dec.dot(&codes);
    let pred_last = pred[[t, 0]];

    let grad_for = |target_offset: f64| {
        let target = Array2::from_elem((1, 1), pred_last - target_offset);
        pole_gradient(&ps, &d_enc, &d_dec, codes.view(), y.view(), target.view(), 0.0, false)
            .unwrap()
    };
    let g1 = grad_for(0.3);
    let g2 = grad_for(0.6);
    assert!((g2.d_rho[0] - 2.0 * g1.d_rho[0]).abs() <= 1e-9 * g1.d_rho[0].abs().max(1.0));
    assert!((g2.d_psi[0] - 2.0 * g1.d_psi[0]).abs() <= 1e-9 * g1.d_psi[0].abs().max(1.0));
}
