//! Structured dictionary materialization.
//!
//! The encoder dictionary has `T` rows; row `k` of the column generated by a
//! pole is `(+-rho)^k trig(k psi)`. Columns are scaled to unit Euclidean
//! norm and the divisors are kept so the decoder (one extra row, shared
//! scales, not renormalized) stays consistent with the encoder model.

use crate::atoms::{expand_quadrants, ColumnSource, PoleSet};
use crate::linalg::gram_spectral_bound;
use crate::{fl, Error, Result, Scalar};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

/// Dense pole-power dictionary with per-column normalization scales and the
/// FISTA step-size bound.
#[derive(Debug, Clone)]
pub struct Dictionary<F> {
    entries: Array2<F>,
    col_scales: Array1<F>,
    lipschitz: F,
    sources: Vec<ColumnSource<F>>,
}

impl<F: Scalar> Dictionary<F> {
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> ArrayView2<'_, F> {
        self.entries.view()
    }

    pub fn col_scales(&self) -> ArrayView1<'_, F> {
        self.col_scales.view()
    }

    /// Upper bound on the largest eigenvalue of the Gram matrix of the
    /// normalized encoder columns.
    pub fn lipschitz(&self) -> F {
        self.lipschitz
    }

    /// Generator per column; empty for dictionaries built from raw matrices.
    pub fn sources(&self) -> &[ColumnSource<F>] {
        &self.sources
    }

    /// Wraps an arbitrary matrix, normalizing each column to unit norm.
    /// The result has no pole structure (no gradient support).
    pub fn from_columns(mut entries: Array2<F>) -> Result<Self> {
        let mut scales = Array1::<F>::zeros(entries.ncols());
        for (j, mut col) in entries.columns_mut().into_iter().enumerate() {
            let norm = col.dot(&col).sqrt();
            if norm <= F::epsilon() {
                return Err(Error::Construction(format!("column {j} has zero norm")));
            }
            col.mapv_inplace(|v| v / norm);
            scales[j] = norm;
        }
        let lipschitz = gram_spectral_bound(entries.view());
        Ok(Dictionary { entries, col_scales: scales, lipschitz, sources: Vec::new() })
    }

    /// Wraps a matrix exactly as given (unit column scales). Intended for
    /// tests that perturb individual entries.
    pub fn from_raw(entries: Array2<F>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Construction("empty dictionary matrix".into()));
        }
        let lipschitz = gram_spectral_bound(entries.view());
        let n = entries.ncols();
        Ok(Dictionary {
            entries,
            col_scales: Array1::from_elem(n, F::one()),
            lipschitz,
            sources: Vec::new(),
        })
    }
}

fn raw_matrix<F: Scalar>(sources: &[ColumnSource<F>], rows: usize) -> Array2<F> {
    let mut entries = Array2::<F>::zeros((rows, sources.len()));
    for (j, src) in sources.iter().enumerate() {
        for k in 0..rows {
            entries[[k, j]] = src.generator.entry(k);
        }
    }
    entries
}

/// Builds the `T x N` encoder dictionary: expanded pole columns, unit-norm
/// normalization, and the power-iteration Lipschitz bound.
pub fn build_encoder<F: Scalar>(ps: &PoleSet<F>, t: usize) -> Result<Dictionary<F>> {
    if t < 2 {
        return Err(Error::Config(format!("encoder needs at least 2 rows, got {t}")));
    }
    let sources = expand_quadrants(ps);
    if sources.is_empty() {
        return Err(Error::Construction("pole set expands to no generators".into()));
    }
    let mut entries = raw_matrix(&sources, t);
    let mut scales = Array1::<F>::zeros(sources.len());
    for (j, mut col) in entries.columns_mut().into_iter().enumerate() {
        let norm = col.dot(&col).sqrt();
        if norm <= fl::<F>(1e-300) {
            return Err(Error::Construction(format!(
                "column {j} (pole {:?}) truncates to a zero column at T = {t}",
                sources[j].pole
            )));
        }
        col.mapv_inplace(|v| v / norm);
        scales[j] = norm;
    }
    let lipschitz = gram_spectral_bound(entries.view());
    Ok(Dictionary { entries, col_scales: scales, lipschitz, sources })
}

/// Builds the `(T+1) x N` decoder dictionary: the encoder rows verbatim plus
/// one extension row `(+-rho)^T trig(T psi)` divided by the encoder column
/// scales (not renormalized).
pub fn build_decoder<F: Scalar>(ps: &PoleSet<F>, t: usize) -> Result<Dictionary<F>> {
    let enc = build_encoder(ps, t)?;
    let n = enc.cols();
    let mut entries = Array2::<F>::zeros((t + 1, n));
    entries.slice_mut(s![..t, ..]).assign(&enc.entries);
    for j in 0..n {
        entries[[t, j]] = enc.sources[j].generator.entry(t) / enc.col_scales[j];
    }
    Ok(Dictionary {
        entries,
        col_scales: enc.col_scales,
        lipschitz: enc.lipschitz,
        sources: enc.sources,
    })
}

/// Power-iteration bound on the largest Gram eigenvalue of an arbitrary
/// dictionary matrix.
pub fn lipschitz_constant<F: Scalar>(d: &Dictionary<F>) -> F {
    gram_spectral_bound(d.entries())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::expand_raw;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn constant_only() -> PoleSet<f64> {
        PoleSet::new(vec![], vec![], true).unwrap()
    }

    #[test]
    fn constant_atom_encoder_t4() {
        let d = build_encoder(&constant_only(), 4).unwrap();
        assert_eq!(d.rows(), 4);
        assert_eq!(d.cols(), 1);
        for k in 0..4 {
            assert!((d.entries()[[k, 0]] - 0.5).abs() < 1e-15);
        }
        assert!((d.col_scales()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_atom_decoder_extension_row() {
        let d = build_decoder(&constant_only(), 4).unwrap();
        assert_eq!(d.rows(), 5);
        for k in 0..5 {
            assert!((d.entries()[[k, 0]] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn_pole_columns() {
        // Boundary pole rho = 1, psi = pi/2: cos column [1,0,-1,0], sin
        // column [0,1,0,-1], each with norm sqrt(2).
        let sources = expand_raw::<f64>(&[1.0], &[FRAC_PI_2], false);
        let ps = PoleSet::new_unchecked(vec![1.0], vec![FRAC_PI_2], false);
        let d = build_encoder(&ps, 4).unwrap();
        assert_eq!(sources.len(), d.cols());
        let inv_rt2 = 1.0 / 2f64.sqrt();
        let expect_cos = [inv_rt2, 0.0, -inv_rt2, 0.0];
        let expect_sin = [0.0, inv_rt2, 0.0, -inv_rt2];
        for k in 0..4 {
            assert!((d.entries()[[k, 0]] - expect_cos[k]).abs() < 1e-15);
            assert!((d.entries()[[k, 1]] - expect_sin[k]).abs() < 1e-15);
        }
        assert!((d.col_scales()[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn decoder_prefix_equals_encoder_bitwise() {
        let ps = PoleSet::init_ring(8, 0.9, 1.1).unwrap();
        let enc = build_encoder(&ps, 6).unwrap();
        let dec = build_decoder(&ps, 6).unwrap();
        assert_eq!(dec.rows(), 7);
        for k in 0..6 {
            for j in 0..enc.cols() {
                assert_eq!(enc.entries()[[k, j]], dec.entries()[[k, j]]);
            }
        }
    }

    #[test]
    fn decoder_extension_entry_formula() {
        let ps = PoleSet::new(vec![0.9], vec![FRAC_PI_4], false).unwrap();
        let dec = build_decoder(&ps, 4).unwrap();
        // Column 0 is the cosine branch: extension entry 0.9^4 cos(pi) / scale.
        let raw: f64 = 0.9f64.powi(4) * PI.cos();
        let expect = raw / dec.col_scales()[0];
        assert!((dec.entries()[[4, 0]] - expect).abs() < 1e-15);
    }

    #[test]
    fn default_ring_shape_and_norms() {
        let ps = PoleSet::<f64>::init_ring(40, 0.85, 1.15).unwrap();
        let d = build_encoder(&ps, 9).unwrap();
        assert_eq!((d.rows(), d.cols()), (9, 161));
        for col in d.entries().columns() {
            let norm = col.dot(&col).sqrt();
            assert!((norm - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rebuild_is_bitwise_deterministic() {
        let ps = PoleSet::init_ring(16, 0.9, 1.05).unwrap();
        let a = build_encoder(&ps, 7).unwrap();
        let b = build_encoder(&ps, 7).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert_eq!(a.lipschitz(), b.lipschitz());
    }

    #[test]
    fn spectral_bound_dominates_random_directions() {
        use rand::{Rng, SeedableRng};
        let ps = PoleSet::init_ring(16, 0.9, 1.1).unwrap();
        let d = build_encoder(&ps, 8).unwrap();
        let l = d.lipschitz();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v: ndarray::Array1<f64> =
                ndarray::Array1::from_iter((0..d.cols()).map(|_| rng.gen::<f64>() - 0.5));
            let v = &v / v.dot(&v).sqrt();
            let dv = d.entries().dot(&v);
            assert!(dv.dot(&dv) <= l);
        }
    }
}
