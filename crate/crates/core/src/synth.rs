//! Ground-truth sequence generator: every pixel follows an exact sum of
//! damped oscillations `a * rho^k * cos(k psi + phi)`, so recovery and
//! prediction claims are testable without video data.

use crate::pipeline::SequenceTensor;
use crate::{fl, Error, Result, Scalar};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// One damped-oscillation component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode<F> {
    pub rho: F,
    pub psi: F,
    pub amplitude: F,
    pub phase: F,
}

/// Synthetic sequence description. Deterministic given `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec<F> {
    pub modes: Vec<Mode<F>>,
    pub t: usize,
    pub height: usize,
    pub width: usize,
    /// Additive Gaussian noise level (0 = noise free).
    pub noise_sigma: F,
    /// Half-width of the uniform per-pixel amplitude spread around each
    /// mode amplitude (0 = every pixel uses the mode amplitude exactly).
    pub amp_spread: F,
    pub seed: u64,
}

impl<F: Scalar> SynthSpec<F> {
    fn validate(&self) -> Result<()> {
        if self.t == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Config("synth dimensions must be positive".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.rho > F::zero()) || !m.amplitude.is_finite() {
                return Err(Error::Config(format!("mode {i} has invalid parameters")));
            }
        }
        Ok(())
    }
}

/// Generates the sequence plus the noise-free ground-truth frame `T+1`
/// (returned as a `1 x (H*W)` matrix).
pub fn generate<F: Scalar>(spec: &SynthSpec<F>) -> Result<(SequenceTensor<F>, Array2<F>)> {
    spec.validate()?;
    let m = spec.height * spec.width;
    let n_modes = spec.modes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Per-pixel amplitudes, drawn in pixel-major order.
    let mut amps = Array2::<F>::zeros((n_modes, m));
    let two = fl::<F>(2.0);
    for l in 0..m {
        for (i, mode) in spec.modes.iter().enumerate() {
            let offset = if spec.amp_spread > F::zero() {
                spec.amp_spread * (two * fl::<F>(rng.gen::<f64>()) - F::one())
            } else {
                F::zero()
            };
            amps[[i, l]] = mode.amplitude + offset;
        }
    }

    let eval = |k: usize, l: usize| -> F {
        let kf = fl::<F>(k as f64);
        let mut acc = F::zero();
        for (i, mode) in spec.modes.iter().enumerate() {
            let mag = amps[[i, l]] * mode.rho.powi(k as i32);
            acc = acc + mag * (mode.psi * kf + mode.phase).cos();
        }
        acc
    };

    let mut data = Array2::<F>::zeros((spec.t, m));
    for k in 0..spec.t {
        for l in 0..m {
            data[[k, l]] = eval(k, l);
        }
    }
    if spec.noise_sigma > F::zero() {
        let normal = Normal::new(0.0, spec.noise_sigma.to_f64().unwrap())
            .map_err(|e| Error::Config(format!("noise sigma: {e}")))?;
        for k in 0..spec.t {
            for l in 0..m {
                data[[k, l]] = data[[k, l]] + fl::<F>(normal.sample(&mut rng));
            }
        }
    }

    let mut truth = Array2::<F>::zeros((1, m));
    for l in 0..m {
        truth[[0, l]] = eval(spec.t, l);
    }
    let seq = SequenceTensor::new(spec.height, spec.width, data, "synth")?;
    Ok((seq, truth))
}

/// One dataset entry: the jittered spec it was generated from, the noisy
/// sequence, and the noise-free target frame.
#[derive(Debug, Clone)]
pub struct SynthSample<F> {
    pub spec: SynthSpec<F>,
    pub seq: SequenceTensor<F>,
    pub truth: Array2<F>,
}

/// Generates `n_seq` sequences whose mode parameters are jittered uniformly
/// within `+-jitter` around the template. Sequence `i` reuses the template
/// seed offset by `i`, so the dataset is reproducible and `n_seq = 1,
/// jitter = 0` reduces to `generate(template)`.
pub fn make_dataset<F: Scalar>(
    n_seq: usize,
    template: &SynthSpec<F>,
    jitter: F,
    seed: u64,
) -> Result<Vec<SynthSample<F>>> {
    if n_seq == 0 {
        return Err(Error::Config("n_seq must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let two = fl::<F>(2.0);
    let mut jit = move || -> F {
        jitter * (two * fl::<F>(rng.gen::<f64>()) - F::one())
    };
    let psi_cap = fl::<F>(std::f64::consts::FRAC_PI_2 - 1e-6);
    let mut out = Vec::with_capacity(n_seq);
    for i in 0..n_seq {
        let mut spec = template.clone();
        for mode in &mut spec.modes {
            mode.rho = (mode.rho + jit()).max(fl::<F>(1e-3));
            mode.psi = (mode.psi + jit()).max(F::zero()).min(psi_cap);
            mode.amplitude = mode.amplitude + jit();
            mode.phase = mode.phase + jit();
        }
        spec.seed = template.seed.wrapping_add(i as u64);
        let (seq, truth) = generate(&spec)?;
        out.push(SynthSample { spec, seq, truth });
    }
    Ok(out)
}
