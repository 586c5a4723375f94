//! End-to-end encode/decode pass, next-frame prediction, and flow warping.

use crate::atoms::PoleSet;
use crate::dictionary::{build_decoder, build_encoder, Dictionary};
use crate::solver::{fista_batch, CodeField, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::{fl, Error, Result, Scalar};
use ndarray::{Array2, ArrayView2};

/// `T` frames of an `H x W` scalar field, flattened so pixel `(r, c)` of
/// frame `k` lives at `data[[k, r * W + c]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTensor<F> {
    height: usize,
    width: usize,
    data: Array2<F>,
    channel_id: String,
}

impl<F: Scalar> SequenceTensor<F> {
    pub fn new(
        height: usize,
        width: usize,
        data: Array2<F>,
        channel_id: impl Into<String>,
    ) -> Result<Self> {
        if data.ncols() != height * width {
            return Err(Error::dim("sequence pixels", height * width, data.ncols()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { pixel: pos % data.ncols() });
        }
        Ok(SequenceTensor { height, width, data, channel_id: channel_id.into() })
    }

    pub fn from_frames(frames: &[Array2<F>], channel_id: impl Into<String>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Config("sequence needs at least one frame".into()));
        };
        let (h, w) = first.dim();
        let mut data = Array2::<F>::zeros((frames.len(), h * w));
        for (k, f) in frames.iter().enumerate() {
            if f.dim() != (h, w) {
                return Err(Error::dim("frame shape", format!("{h}x{w}"),
                    format!("{}x{}", f.nrows(), f.ncols())));
            }
            for r in 0..h {
                for c in 0..w {
                    data[[k, r * w + c]] = f[[r, c]];
                }
            }
        }
        SequenceTensor::new(h, w, data, channel_id)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Frame count.
    pub fn t(&self) -> usize {
        self.data.nrows()
    }

    pub fn channel_id(&self) -> &str {
        &self.channel_id
    }

    /// `T x (H*W)` view.
    pub fn pixels(&self) -> ArrayView2<'_, F> {
        self.data.view()
    }

    /// Frame `k` reshaped to `H x W`.
    pub fn frame(&self, k: usize) -> Array2<F> {
        let mut out = Array2::<F>::zeros((self.height, self.width));
        for r in 0..self.height {
            for c in 0..self.width {
                out[[r, c]] = self.data[[k, r * self.width + c]];
            }
        }
        out
    }
}

/// Per-pixel displacement field in pixels per frame.
#[derive(Debug, Clone)]
pub struct FlowField<F> {
    pub u: Array2<F>,
    pub v: Array2<F>,
}

impl<F: Scalar> FlowField<F> {
    pub fn new(u: Array2<F>, v: Array2<F>) -> Result<Self> {
        if u.dim() != v.dim() {
            return Err(Error::dim("flow components", format!("{:?}", u.dim()),
                format!("{:?}", v.dim())));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { pixel: 0 });
        }
        Ok(FlowField { u, v })
    }
}

/// Sparse-codes every pixel of the sequence with the default FISTA budget.
pub fn encode<F: Scalar>(
    d_enc: &Dictionary<F>,
    seq: &SequenceTensor<F>,
    lambda: F,
) -> Result<CodeField<F>> {
    encode_with(d_enc, seq, lambda, DEFAULT_MAX_ITER, fl::<F>(DEFAULT_TOL))
}

pub fn encode_with<F: Scalar>(
    d_enc: &Dictionary<F>,
    seq: &SequenceTensor<F>,
    lambda: F,
    max_iter: usize,
    tol: F,
) -> Result<CodeField<F>> {
    let codes = fista_batch(d_enc, seq.pixels(), lambda, max_iter, tol)?;
    CodeField::new(seq.height(), seq.width(), codes)
}

/// Multiplies the decoder dictionary into the codes: `T` reconstructed
/// frames plus the predicted frame `T+1`.
pub fn decode<F: Scalar>(d_dec: &Dictionary<F>, codes: &CodeField<F>) -> Result<SequenceTensor<F>> {
    if codes.codes.nrows() != d_dec.cols() {
        return Err(Error::dim("decode codes", d_dec.cols(), codes.codes.nrows()));
    }
    let data = d_dec.entries().dot(&codes.codes);
    SequenceTensor::new(codes.height, codes.width, data, "decoded")
}

/// Full encoder/decoder pass returning only the predicted `H x W` frame.
pub fn predict_next<F: Scalar>(
    ps: &PoleSet<F>,
    seq: &SequenceTensor<F>,
    lambda: F,
) -> Result<Array2<F>> {
    predict_next_with(ps, seq, lambda, DEFAULT_MAX_ITER, fl::<F>(DEFAULT_TOL))
}

pub fn predict_next_with<F: Scalar>(
    ps: &PoleSet<F>,
    seq: &SequenceTensor<F>,
    lambda: F,
    max_iter: usize,
    tol: F,
) -> Result<Array2<F>> {
    let t = seq.t();
    if t < 2 {
        return Err(Error::Config(format!("prediction needs at least 2 frames, got {t}")));
    }
    let d_enc = build_encoder(ps, t)?;
    let d_dec = build_decoder(ps, t)?;
    let codes = encode_with(&d_enc, seq, lambda, max_iter, tol)?;
    let dec_entries = d_dec.entries();
    let pred = dec_entries.row(t).dot(&codes.codes);
    let (h, w) = (seq.height(), seq.width());
    let mut out = Array2::<F>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            out[[r, c]] = pred[r * w + c];
        }
    }
    Ok(out)
}

/// Multi-step rollout: each prediction is appended and the window slides by
/// one frame. No error-compounding mitigation.
pub fn rollout<F: Scalar>(
    ps: &PoleSet<F>,
    seq: &SequenceTensor<F>,
    lambda: F,
    steps: usize,
) -> Result<Vec<Array2<F>>> {
    let mut window = seq.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let pred = predict_next(ps, &window, lambda)?;
        let mut frames: Vec<Array2<F>> = (1..window.t()).map(|k| window.frame(k)).collect();
        frames.push(pred.clone());
        window = SequenceTensor::from_frames(&frames, seq.channel_id())?;
        out.push(pred);
    }
    Ok(out)
}

/// Backward warp with bilinear interpolation: `out(r, c)` samples the frame
/// at `(r - v(r,c), c - u(r,c))`, clamping out-of-bounds samples to the
/// border.
pub fn warp<F: Scalar>(frame: ArrayView2<F>, flow: &FlowField<F>) -> Result<Array2<F>> {
    let (h, w) = frame.dim();
    if flow.u.dim() != (h, w) {
        return Err(Error::dim("flow shape", format!("{h}x{w}"),
            format!("{:?}", flow.u.dim())));
    }
    let mut out = Array2::<F>::zeros((h, w));
    let max_r = fl::<F>((h - 1) as f64);
    let max_c = fl::<F>((w - 1) as f64);
    for r in 0..h {
        for c in 0..w {
            let src_r = (fl::<F>(r as f64) - flow.v[[r, c]]).max(F::zero()).min(max_r);
            let src_c = (fl::<F>(c as f64) - flow.u[[r, c]]).max(F::zero()).min(max_c);
            let r0 = src_r.floor();
            let c0 = src_c.floor();
            let fr = src_r - r0;
            let fc = src_c - c0;
            let r0 = r0.to_usize().unwrap_or(0).min(h - 1);
            let c0 = c0.to_usize().unwrap_or(0).min(w - 1);
            let r1 = (r0 + 1).min(h - 1);
            let c1 = (c0 + 1).min(w - 1);
            let one = F::one();
            out[[r, c]] = frame[[r0, c0]] * (one - fr) * (one - fc)
                + frame[[r0, c1]] * (one - fr) * fc
                + frame[[r1, c0]] * fr * (one - fc)
                + frame[[r1, c1]] * fr * fc;
        }
    }
    Ok(out)
}
