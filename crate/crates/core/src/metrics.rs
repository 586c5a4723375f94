//! Frame quality scores: MSE, PSNR, and windowed SSIM.

use crate::pipeline::SequenceTensor;
use crate::{fl, Error, Result, Scalar};
use ndarray::{Array2, ArrayView2};

/// PSNR reported for (near-)identical frames.
pub const PSNR_CAP_DB: f64 = 100.0;
/// MSE below this reports the capped PSNR.
pub const PSNR_CAP_MSE: f64 = 1e-10;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Scores for one frame pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreReport<F> {
    pub mse: F,
    pub psnr: F,
    pub ssim: F,
}

/// Per-frame breakdown plus the mean over frames.
#[derive(Debug, Clone)]
pub struct SequenceScores<F> {
    pub frames: Vec<ScoreReport<F>>,
    pub mean: ScoreReport<F>,
}

fn check_shapes<F: Scalar>(a: &ArrayView2<F>, b: &ArrayView2<F>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::dim("metric frames", format!("{:?}", a.dim()),
            format!("{:?}", b.dim())));
    }
    Ok(())
}

/// Mean squared difference over all pixels.
pub fn mse<F: Scalar>(a: ArrayView2<F>, b: ArrayView2<F>) -> Result<F> {
    check_shapes(&a, &b)?;
    let n = fl::<F>(a.len() as f64);
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc = acc + d * d;
    }
    Ok(acc / n)
}

/// `10 log10(peak^2 / mse)`, capped at 100 dB for mse below 1e-10.
pub fn psnr<F: Scalar>(a: ArrayView2<F>, b: ArrayView2<F>, peak: F) -> Result<F> {
    let m = mse(a, b)?;
    if m < fl::<F>(PSNR_CAP_MSE) {
        return Ok(fl::<F>(PSNR_CAP_DB));
    }
    Ok(fl::<F>(10.0) * (peak * peak / m).log10())
}

fn gaussian_window<F: Scalar>() -> Array2<F> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = Array2::<F>::zeros((SSIM_WINDOW, SSIM_WINDOW));
    let mut sum = 0.0f64;
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let di = i as f64 - half;
            let dj = j as f64 - half;
            let v = (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[[i, j]] = fl::<F>(v);
            sum += v;
        }
    }
    let sum = fl::<F>(sum);
    w.mapv_inplace(|v| v / sum);
    w
}

fn ssim_term<F: Scalar>(mu_a: F, mu_b: F, var_a: F, var_b: F, cov: F) -> F {
    let c1 = fl::<F>(SSIM_K1 * SSIM_K1);
    let c2 = fl::<F>(SSIM_K2 * SSIM_K2);
    let two = fl::<F>(2.0);
    ((two * mu_a * mu_b + c1) * (two * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5) and the
/// standard constants for unit peak. Frames smaller than the window fall
/// back to global statistics.
pub fn ssim<F: Scalar>(a: ArrayView2<F>, b: ArrayView2<F>) -> Result<F> {
    check_shapes(&a, &b)?;
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        let n = fl::<F>(a.len() as f64);
        let mu_a = a.iter().copied().sum::<F>() / n;
        let mu_b = b.iter().copied().sum::<F>() / n;
        let mut var_a = F::zero();
        let mut var_b = F::zero();
        let mut cov = F::zero();
        for (&x, &y) in a.iter().zip(b.iter()) {
            var_a = var_a + (x - mu_a) * (x - mu_a);
            var_b = var_b + (y - mu_b) * (y - mu_b);
            cov = cov + (x - mu_a) * (y - mu_b);
        }
        return Ok(ssim_term(mu_a, mu_b, var_a / n, var_b / n, cov / n));
    }

    let win = gaussian_window::<F>();
    let mut acc = F::zero();
    let mut count = 0usize;
    for r in 0..=h - SSIM_WINDOW {
        for c in 0..=w - SSIM_WINDOW {
            let mut mu_a = F::zero();
            let mut mu_b = F::zero();
            let mut raw_aa = F::zero();
            let mut raw_bb = F::zero();
            let mut raw_ab = F::zero();
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let wv = win[[i, j]];
                    let x = a[[r + i, c + j]];
                    let y = b[[r + i, c + j]];
                    mu_a = mu_a + wv * x;
                    mu_b = mu_b + wv * y;
                    raw_aa = raw_aa + wv * x * x;
                    raw_bb = raw_bb + wv * y * y;
                    raw_ab = raw_ab + wv * x * y;
                }
            }
            let var_a = raw_aa - mu_a * mu_a;
            let var_b = raw_bb - mu_b * mu_b;
            let cov = raw_ab - mu_a * mu_b;
            acc = acc + ssim_term(mu_a, mu_b, var_a, var_b, cov);
            count += 1;
        }
    }
    Ok(acc / fl::<F>(count as f64))
}

/// All three scores for a frame pair with peak 1.
pub fn score<F: Scalar>(a: ArrayView2<F>, b: ArrayView2<F>) -> Result<ScoreReport<F>> {
    Ok(ScoreReport { mse: mse(a, b)?, psnr: psnr(a, b, F::one())?, ssim: ssim(a, b)? })
}

/// Frame-by-frame scores of two sequences plus the mean.
pub fn score_sequences<F: Scalar>(
    a: &SequenceTensor<F>,
    b: &SequenceTensor<F>,
) -> Result<SequenceScores<F>> {
    if a.t() != b.t() || a.height() != b.height() || a.width() != b.width() {
        return Err(Error::dim("sequence shapes",
            format!("{}x{}x{}", a.t(), a.height(), a.width()),
            format!("{}x{}x{}", b.t(), b.height(), b.width())));
    }
    let mut frames = Vec::with_capacity(a.t());
    let mut sums = (F::zero(), F::zero(), F::zero());
    for k in 0..a.t() {
        let fa = a.frame(k);
        let fb = b.frame(k);
        let s = score(fa.view(), fb.view())?;
        sums = (sums.0 + s.mse, sums.1 + s.psnr, sums.2 + s.ssim);
        frames.push(s);
    }
    let n = fl::<F>(a.t() as f64);
    let mean = ScoreReport { mse: sums.0 / n, psnr: sums.1 / n, ssim: sums.2 / n };
    Ok(SequenceScores { frames, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn identical_frames() {
        let a = Array2::from_shape_fn((12, 12), |(r, c)| (r * 12 + c) as f64 / 144.0);
        assert_eq!(mse(a.view(), a.view()).unwrap(), 0.0);
        assert_eq!(psnr(a.view(), a.view(), 1.0).unwrap(), PSNR_CAP_DB);
        assert!((ssim(a.view(), a.view()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_mse_and_psnr() {
        let a = Array2::<f64>::zeros((8, 8));
        let b = Array2::from_elem((8, 8), 0.1);
        let m = mse(a.view(), b.view()).unwrap();
        assert!((m - 0.01).abs() < 1e-15);
        assert!((psnr(a.view(), b.view(), 1.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_zero_db_at_unit_mse() {
        let a = Array2::<f64>::zeros((4, 4));
        let b = Array2::from_elem((4, 4), 1.0);
        assert!((psnr(a.view(), b.view(), 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn uniform_frames_closed_form() {
        let a = Array2::from_elem((16, 16), 0.2);
        let b = Array2::from_elem((16, 16), 0.8);
        let c1 = 0.01f64 * 0.01;
        let expect = (2.0 * 0.16 + c1) / (0.04 + 0.64 + c1);
        assert!((ssim(a.view(), b.view()).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn symmetry() {
        let a = Array2::from_shape_fn((13, 15), |(r, c)| ((r * 31 + c * 7) % 11) as f64 / 11.0);
        let b = Array2::from_shape_fn((13, 15), |(r, c)| ((r * 17 + c * 3) % 13) as f64 / 13.0);
        assert_eq!(mse(a.view(), b.view()).unwrap(), mse(b.view(), a.view()).unwrap());
        let s1 = ssim(a.view(), b.view()).unwrap();
        let s2 = ssim(b.view(), a.view()).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn small_frame_fallback() {
        let a = Array2::<f64>::from_elem((4, 4), 0.3);
        let b = Array2::<f64>::from_elem((4, 4), 0.3);
        assert!((ssim(a.view(), b.view()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Array2::<f64>::zeros((4, 4));
        let b = Array2::<f64>::zeros((4, 5));
        assert!(mse(a.view(), b.view()).is_err());
        assert!(ssim(a.view(), b.view()).is_err());
    }
}
