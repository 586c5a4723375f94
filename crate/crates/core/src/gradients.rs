//! Implicit differentiation of the Lasso solution and the SGD update.
//!
//! On the active set `L` of a converged code, stationarity gives
//! `c_L = (D_L^T D_L)^{-1} (D_L^T y - lambda v)` with `v = sign(c_L)`, so the
//! code responds to a dictionary perturbation `dD` (fixed support) as
//! `dc_L = (D_L^T D_L)^{-1} [dD_L^T y - (dD_L^T D_L + D_L^T dD_L) c_L]`.
//! Pole gradients chain this through the raw entries
//! `(+-rho)^k trig(k psi)` and through the column normalization scales, and
//! add the direct path through the decoder entries.

use crate::atoms::PoleSet;
use crate::dictionary::Dictionary;
use crate::linalg::{chol_inverse, chol_solve, cholesky};
use crate::{fl, Error, Result, Scalar};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Code entries above this magnitude form the active set.
pub const ACTIVE_THRESHOLD: f64 = 1e-8;
/// Ridge added to the active Gram matrix before inversion.
pub const GRAM_RIDGE: f64 = 1e-8;
/// Lower clamp for pole magnitudes after an update.
pub const RHO_MIN: f64 = 1e-3;
/// Phase clamp margin: psi stays in [PSI_MARGIN, pi/2 - PSI_MARGIN].
pub const PSI_MARGIN: f64 = 1e-3;
/// Lower clamp for a trainable regularization weight.
pub const LAMBDA_MIN: f64 = 1e-6;

/// Which decoder rows enter the l2 loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Only the predicted frame (decoder row `T`).
    PredictOnly,
    /// Reconstruction rows `0..T` plus the predicted frame.
    Full,
}

/// Per-pixel quantities reused by the implicit-differentiation formulas.
#[derive(Debug, Clone)]
pub struct GradientWorkspace<F> {
    /// Indices of the active columns.
    pub active_idx: Vec<usize>,
    /// `T x |L|` active submatrix of the encoder.
    pub d_active: Array2<F>,
    /// `(D_L^T D_L + ridge I)^{-1}`.
    pub gram_inv: Array2<F>,
    /// Signs of the active code entries.
    pub sign_vec: Array1<F>,
    /// Active code entries.
    pub code_active: Array1<F>,
}

/// Builds the workspace for one pixel from a converged code.
pub fn workspace<F: Scalar>(
    d_enc: &Dictionary<F>,
    code: ArrayView1<F>,
) -> Result<GradientWorkspace<F>> {
    if code.len() != d_enc.cols() {
        return Err(Error::dim("workspace code", d_enc.cols(), code.len()));
    }
    let thresh = fl::<F>(ACTIVE_THRESHOLD);
    let active_idx: Vec<usize> =
        code.iter().enumerate().filter(|(_, c)| c.abs() > thresh).map(|(i, _)| i).collect();
    let a = active_idx.len();
    let t = d_enc.rows();
    let mut d_active = Array2::<F>::zeros((t, a));
    for (pos, &j) in active_idx.iter().enumerate() {
        d_active.column_mut(pos).assign(&d_enc.entries().column(j));
    }
    let ridge = fl::<F>(GRAM_RIDGE);
    let mut gram = d_active.t().dot(&d_active);
    for i in 0..a {
        gram[[i, i]] = gram[[i, i]] + ridge;
    }
    let gram_inv = if a == 0 {
        Array2::zeros((0, 0))
    } else {
        chol_inverse(&cholesky(&gram)?)
    };
    let code_active = Array1::from_iter(active_idx.iter().map(|&j| code[j]));
    let sign_vec = code_active.mapv(|c| if c >= F::zero() { F::one() } else { -F::one() });
    Ok(GradientWorkspace { active_idx, d_active, gram_inv, sign_vec, code_active })
}

/// Derivative of the active code with respect to a single dictionary entry
/// `D[i, j]`, in the fixed-support regime. Perturbations of inactive
/// columns have no effect.
pub fn code_jacobian_wrt_entry<F: Scalar>(
    ws: &GradientWorkspace<F>,
    y: ArrayView1<F>,
    i: usize,
    j: usize,
) -> Array1<F> {
    let a = ws.active_idx.len();
    if a == 0 {
        return Array1::zeros(0);
    }
    let pos = match ws.active_idx.iter().position(|&k| k == j) {
        Some(p) => p,
        None => return Array1::zeros(a),
    };
    // dD_L = e_i e_pos^T, so
    // rhs = y_i e_pos - e_pos (D_L c_L)_i - c_pos * (row i of D_L).
    let fit_i = ws.d_active.row(i).dot(&ws.code_active);
    let mut rhs = ws.d_active.row(i).mapv(|v| -ws.code_active[pos] * v);
    rhs[pos] = rhs[pos] + y[i] - fit_i;
    ws.gram_inv.dot(&rhs)
}

/// Contraction of a downstream sensitivity with
/// `dc_L/dlambda = -(D_L^T D_L)^{-1} sign(c_L)`.
pub fn lambda_gradient<F: Scalar>(ws: &GradientWorkspace<F>, downstream: ArrayView1<F>) -> F {
    if ws.active_idx.is_empty() {
        return F::zero();
    }
    -downstream.dot(&ws.gram_inv.dot(&ws.sign_vec))
}

/// Loss partials with respect to every trainable pole (and optionally the
/// regularization weight). The constant atom has no slot.
#[derive(Debug, Clone)]
pub struct ParamGrad<F> {
    pub d_rho: Vec<F>,
    pub d_psi: Vec<F>,
    pub d_lambda: Option<F>,
}

impl<F: Scalar> ParamGrad<F> {
    pub fn zeros(num_poles: usize, trainable_lambda: bool) -> Self {
        ParamGrad {
            d_rho: vec![F::zero(); num_poles],
            d_psi: vec![F::zero(); num_poles],
            d_lambda: trainable_lambda.then(F::zero),
        }
    }

    pub fn max_abs(&self) -> F {
        let mut m = F::zero();
        for &v in self.d_rho.iter().chain(&self.d_psi) {
            m = m.max(v.abs());
        }
        if let Some(l) = self.d_lambda {
            m = m.max(l.abs());
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.d_rho.iter().chain(&self.d_psi).all(|v| v.is_finite())
            && self.d_lambda.map_or(true, |l| l.is_finite())
    }
}

/// Derivatives of the normalized dictionary columns with respect to the
/// owning pole parameters, with the normalization scales differentiated
/// through.
#[derive(Debug, Clone)]
pub struct DictDerivs<F> {
    /// `T x N` encoder column derivatives w.r.t. rho of the owning pole.
    pub enc_drho: Array2<F>,
    pub enc_dpsi: Array2<F>,
    /// `(T+1) x N` decoder column derivatives.
    pub dec_drho: Array2<F>,
    pub dec_dpsi: Array2<F>,
    /// Owning pole per column (`None` for the constant atom).
    pub col_pole: Vec<Option<usize>>,
}

/// Computes [`DictDerivs`] for an encoder/decoder pair built from the same
/// pole set.
pub fn dict_derivs<F: Scalar>(
    d_enc: &Dictionary<F>,
    d_dec: &Dictionary<F>,
) -> Result<DictDerivs<F>> {
    let t = d_enc.rows();
    let n = d_enc.cols();
    if d_enc.sources().len() != n {
        return Err(Error::Config(
            "dictionary has no pole structure; gradients need build_encoder output".into(),
        ));
    }
    if d_dec.rows() != t + 1 || d_dec.cols() != n {
        return Err(Error::dim("decoder shape", format!("{}x{}", t + 1, n),
            format!("{}x{}", d_dec.rows(), d_dec.cols())));
    }

    let mut enc_drho = Array2::<F>::zeros((t, n));
    let mut enc_dpsi = Array2::<F>::zeros((t, n));
    let mut dec_drho = Array2::<F>::zeros((t + 1, n));
    let mut dec_dpsi = Array2::<F>::zeros((t + 1, n));
    let mut col_pole = Vec::with_capacity(n);

    for (j, src) in d_enc.sources().iter().enumerate() {
        col_pole.push(src.pole);
        if src.pole.is_none() {
            continue;
        }
        let scale = d_enc.col_scales()[j];
        // Raw column and raw derivatives over T+1 rows.
        let vdot_rho = Array1::from_iter((0..=t).map(|k| src.generator.d_rho(k)));
        let vdot_psi = Array1::from_iter((0..=t).map(|k| src.generator.d_psi(k)));
        let enc_entries = d_enc.entries();
        let dec_entries = d_dec.entries();
        let enc_col = enc_entries.column(j);
        let dec_col = dec_entries.column(j);

        // sdot = u^T udot / s = d^T udot (unit encoder column dotted with
        // the raw encoder-row derivative).
        let udot_rho = vdot_rho.slice(ndarray::s![..t]);
        let udot_psi = vdot_psi.slice(ndarray::s![..t]);
        let sdot_rho = enc_col.dot(&udot_rho);
        let sdot_psi = enc_col.dot(&udot_psi);

        for k in 0..t {
            enc_drho[[k, j]] = (udot_rho[k] - enc_col[k] * sdot_rho) / scale;
            enc_dpsi[[k, j]] = (udot_psi[k] - enc_col[k] * sdot_psi) / scale;
        }
        for k in 0..=t {
            dec_drho[[k, j]] = (vdot_rho[k] - dec_col[k] * sdot_rho) / scale;
            dec_dpsi[[k, j]] = (vdot_psi[k] - dec_col[k] * sdot_psi) / scale;
        }
    }
    Ok(DictDerivs { enc_drho, enc_dpsi, dec_drho, dec_dpsi, col_pole })
}

fn loss_rows<F: Scalar>(d_dec: &Dictionary<F>, y_target: ArrayView2<F>) -> Result<Vec<usize>> {
    let t = d_dec.rows() - 1;
    match y_target.nrows() {
        1 => Ok(vec![t]),
        rows if rows == t + 1 => Ok((0..=t).collect()),
        rows => Err(Error::dim("target rows", format!("1 or {}", t + 1), rows)),
    }
}

/// Mean-per-pixel l2 loss `(1/M) sum_l 1/2 ||yhat_S - target||^2`, where
/// `S` is the predicted frame alone (1-row target) or all `T+1` decoder
/// rows (`(T+1)`-row target).
pub fn loss_value<F: Scalar>(
    d_dec: &Dictionary<F>,
    codes: ArrayView2<F>,
    y_target: ArrayView2<F>,
) -> Result<F> {
    let rows = loss_rows(d_dec, y_target)?;
    if codes.ncols() != y_target.ncols() {
        return Err(Error::dim("target pixels", codes.ncols(), y_target.ncols()));
    }
    let pred = d_dec.entries().dot(&codes);
    let m = fl::<F>(codes.ncols() as f64);
    let half = fl::<F>(0.5);
    let mut acc = F::zero();
    for (si, &r) in rows.iter().enumerate() {
        for l in 0..codes.ncols() {
            let diff = pred[[r, l]] - y_target[[si, l]];
            acc = acc + diff * diff;
        }
    }
    Ok(half * acc / m)
}

/// Total derivative of the l2 loss with respect to every pole magnitude and
/// phase: the direct path through the decoder entries plus the implicit
/// path through the Lasso solution, accumulated over pixels in fixed order.
#[allow(clippy::too_many_arguments)]
pub fn pole_gradient<F: Scalar>(
    ps: &PoleSet<F>,
    d_enc: &Dictionary<F>,
    d_dec: &Dictionary<F>,
    codes: ArrayView2<F>,
    y_in: ArrayView2<F>,
    y_target: ArrayView2<F>,
    _lambda: F,
    trainable_lambda: bool,
) -> Result<ParamGrad<F>> {
    let t = d_enc.rows();
    let n = d_enc.cols();
    let m = codes.ncols();
    if y_in.nrows() != t || y_in.ncols() != m {
        return Err(Error::dim("encoder input", format!("{t}x{m}"),
            format!("{}x{}", y_in.nrows(), y_in.ncols())));
    }
    if codes.nrows() != n {
        return Err(Error::dim("code rows", n, codes.nrows()));
    }
    if y_target.ncols() != m {
        return Err(Error::dim("target pixels", m, y_target.ncols()));
    }
    let sel = loss_rows(d_dec, y_target)?;
    let derivs = dict_derivs(d_enc, d_dec)?;

    let pred = d_dec.entries().dot(&codes);
    let m_f = fl::<F>(m as f64);
    let thresh = fl::<F>(ACTIVE_THRESHOLD);
    let ridge = fl::<F>(GRAM_RIDGE);

    let mut grad = ParamGrad::zeros(ps.len(), trainable_lambda);

    for l in 0..m {
        let c = codes.column(l);
        let active: Vec<usize> =
            c.iter().enumerate().filter(|(_, v)| v.abs() > thresh).map(|(i, _)| i).collect();
        if active.is_empty() {
            continue;
        }
        let a = active.len();

        // Residual on the loss rows, already scaled by the pixel average.
        let r_s = Array1::from_iter(
            sel.iter().enumerate().map(|(si, &r)| (pred[[r, l]] - y_target[[si, l]]) / m_f),
        );

        let mut d_active = Array2::<F>::zeros((t, a));
        for (pos, &j) in active.iter().enumerate() {
            d_active.column_mut(pos).assign(&d_enc.entries().column(j));
        }
        let mut gram = d_active.t().dot(&d_active);
        for i in 0..a {
            gram[[i, i]] = gram[[i, i]] + ridge;
        }
        let chol = cholesky(&gram)?;

        // Downstream sensitivity of the loss to the active code entries.
        let mut q = Array1::<F>::zeros(a);
        for (pos, &j) in active.iter().enumerate() {
            let mut acc = F::zero();
            for (si, &r) in sel.iter().enumerate() {
                acc = acc + d_dec.entries()[[r, j]] * r_s[si];
            }
            q[pos] = acc;
        }
        let z = chol_solve(&chol, q.view());

        let c_active = Array1::from_iter(active.iter().map(|&j| c[j]));
        // Encoder fit residual restricted to the active model.
        let e = &y_in.column(l).to_owned() - &d_active.dot(&c_active);
        let w = d_active.dot(&z);

        for (pos, &j) in active.iter().enumerate() {
            let Some(i) = derivs.col_pole[j] else { continue };

            // Implicit path: z_j * (ddot_j . e) - c_j * (ddot_j . w).
            let de_rho = derivs.enc_drho.column(j);
            let de_psi = derivs.enc_dpsi.column(j);
            let imp_rho = z[pos] * de_rho.dot(&e) - c_active[pos] * de_rho.dot(&w);
            let imp_psi = z[pos] * de_psi.dot(&e) - c_active[pos] * de_psi.dot(&w);

            // Direct path through the decoder entries on the loss rows.
            let mut dir_rho = F::zero();
            let mut dir_psi = F::zero();
            for (si, &r) in sel.iter().enumerate() {
                dir_rho = dir_rho + r_s[si] * derivs.dec_drho[[r, j]];
                dir_psi = dir_psi + r_s[si] * derivs.dec_dpsi[[r, j]];
            }
            grad.d_rho[i] = grad.d_rho[i] + imp_rho + dir_rho * c_active[pos];
            grad.d_psi[i] = grad.d_psi[i] + imp_psi + dir_psi * c_active[pos];
        }

        if let Some(dl) = grad.d_lambda.as_mut() {
            // q^T dc/dlambda = -q^T G^{-1} sign = -z^T sign.
            let sign = c_active.mapv(|v| if v >= F::zero() { F::one() } else { -F::one() });
            *dl = *dl - z.dot(&sign);
        }
    }
    Ok(grad)
}

/// One steepest-descent step on the pole parameters, with clamps keeping
/// every pole inside the open first quadrant.
pub fn sgd_step<F: Scalar>(ps: &PoleSet<F>, grad: &ParamGrad<F>, lr: F) -> Result<PoleSet<F>> {
    if grad.d_rho.len() != ps.len() || grad.d_psi.len() != ps.len() {
        return Err(Error::dim("gradient length", ps.len(), grad.d_rho.len()));
    }
    if !grad.is_finite() {
        return Err(Error::Numerical("non-finite gradient; step aborted".into()));
    }
    let rho_min = fl::<F>(RHO_MIN);
    let psi_min = fl::<F>(PSI_MARGIN);
    let psi_max = fl::<F>(std::f64::consts::FRAC_PI_2 - PSI_MARGIN);
    let rho: Vec<F> = ps
        .rho()
        .iter()
        .zip(&grad.d_rho)
        .map(|(&r, &g)| (r - lr * g).max(rho_min))
        .collect();
    let psi: Vec<F> = ps
        .psi()
        .iter()
        .zip(&grad.d_psi)
        .map(|(&p, &g)| (p - lr * g).max(psi_min).min(psi_max))
        .collect();
    PoleSet::new(rho, psi, ps.include_constant())
}

/// Trainable-lambda update with the lower clamp.
pub fn lambda_step<F: Scalar>(lambda: F, d_lambda: F, lr: F) -> F {
    (lambda - lr * d_lambda).max(fl::<F>(LAMBDA_MIN))
}
