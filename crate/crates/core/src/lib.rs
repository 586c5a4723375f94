//! Dynamical-atoms autoencoder for per-pixel temporal dynamics.
//!
//! Each atom (dictionary column) is the truncated impulse response of a
//! first- or second-order LTI system with pole `p = rho * exp(j*psi)`. A
//! sparse code over these atoms, found by FISTA, identifies the dynamics of
//! every pixel of a `T`-frame sequence; extending the dictionary by one row
//! extrapolates the next frame. The pole magnitudes and phases are the only
//! learnable parameters and are trained by implicit differentiation through
//! the Lasso solution.
//!
//! The crate is generic over the scalar type (`f32` or `f64`) through the
//! [`Scalar`] trait; concrete `f64` aliases are exported at the root.

pub mod atoms;
pub mod dictionary;
pub mod error;
pub mod gradcheck;
pub mod gradients;
pub mod io;
mod linalg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod solver;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// Scalar type the numeric core is generic over.
pub trait Scalar:
    ndarray::NdFloat + num_traits::FromPrimitive + std::iter::Sum<Self> + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` constant into the working scalar type.
pub(crate) fn fl<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("constant representable in scalar type")
}

pub type PoleSet64 = atoms::PoleSet<f64>;
pub type Dictionary64 = dictionary::Dictionary<f64>;
pub type CodeField64 = solver::CodeField<f64>;
pub type SequenceTensor64 = pipeline::SequenceTensor<f64>;
pub type FlowField64 = pipeline::FlowField<f64>;
pub type SynthSpec64 = synth::SynthSpec<f64>;
pub type TrainConfig64 = train::TrainConfig<f64>;
