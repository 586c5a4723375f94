//! Pole parameterization and expansion into dictionary column generators.
//!
//! The learnable parameters are first-quadrant poles `p = rho * exp(j*psi)`
//! with `rho > 0` and `0 < psi < pi/2` (strict, so every pole contributes
//! four distinct non-zero columns), plus a fixed constant atom at `p = 1`
//! that is never trained.

use crate::{fl, Error, Result, Scalar};
use std::f64::consts::FRAC_PI_2;

/// Number of phases in the default ring grid.
pub const DEFAULT_PHASE_COUNT: usize = 8;

/// Learnable first-quadrant poles plus the fixed constant atom.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSet<F> {
    rho: Vec<F>,
    psi: Vec<F>,
    include_constant: bool,
}

impl<F: Scalar> PoleSet<F> {
    /// Builds a pole set, validating the open-quadrant invariants.
    pub fn new(rho: Vec<F>, psi: Vec<F>, include_constant: bool) -> Result<Self> {
        if rho.len() != psi.len() {
            return Err(Error::Config(format!(
                "rho and psi length mismatch: {} vs {}",
                rho.len(),
                psi.len()
            )));
        }
        let quarter = fl::<F>(FRAC_PI_2);
        for (i, (&r, &p)) in rho.iter().zip(&psi).enumerate() {
            if !(r > F::zero()) || !r.is_finite() {
                return Err(Error::Config(format!("pole {i}: rho must be positive, got {r}")));
            }
            if !(p > F::zero() && p < quarter) {
                return Err(Error::Config(format!(
                    "pole {i}: psi must lie strictly inside (0, pi/2), got {p}"
                )));
            }
        }
        Ok(PoleSet { rho, psi, include_constant })
    }

    /// Bypasses validation; used for boundary-case tests.
    #[cfg(test)]
    pub(crate) fn new_unchecked(rho: Vec<F>, psi: Vec<F>, include_constant: bool) -> Self {
        PoleSet { rho, psi, include_constant }
    }

    /// Default deterministic initialization: a polar grid of poles inside the
    /// ring `rho_min <= rho <= rho_max`, `num_poles / 8` radii by 8 phases.
    pub fn init_ring(num_poles: usize, rho_min: F, rho_max: F) -> Result<Self> {
        if num_poles == 0 {
            return Err(Error::Config("num_poles must be at least 1".into()));
        }
        if num_poles % DEFAULT_PHASE_COUNT != 0 {
            return Err(Error::Config(format!(
                "num_poles {num_poles} is not a multiple of the default {DEFAULT_PHASE_COUNT}-phase \
                 grid; use init_ring_grid to pick the factorization explicitly"
            )));
        }
        Self::init_ring_grid(num_poles / DEFAULT_PHASE_COUNT, DEFAULT_PHASE_COUNT, rho_min, rho_max)
    }

    /// Ring initialization with an explicit `num_radii x num_phases` grid.
    /// Phases sit at `(q - 1/2) * (pi/2) / Q`, strictly inside the open
    /// quadrant.
    pub fn init_ring_grid(
        num_radii: usize,
        num_phases: usize,
        rho_min: F,
        rho_max: F,
    ) -> Result<Self> {
        if num_radii == 0 || num_phases == 0 {
            return Err(Error::Config("grid dimensions must be positive".into()));
        }
        if !(rho_min > F::zero()) || rho_min > rho_max {
            return Err(Error::Config(format!(
                "ring bounds must satisfy 0 < rho_min <= rho_max, got [{rho_min}, {rho_max}]"
            )));
        }
        let two = fl::<F>(2.0);
        let radii: Vec<F> = if num_radii == 1 {
            vec![(rho_min + rho_max) / two]
        } else {
            let step = (rho_max - rho_min) / fl::<F>((num_radii - 1) as f64);
            (0..num_radii).map(|i| rho_min + step * fl::<F>(i as f64)).collect()
        };
        let phase_step = fl::<F>(FRAC_PI_2 / num_phases as f64);
        let half = fl::<F>(0.5);
        let phases: Vec<F> =
            (0..num_phases).map(|q| phase_step * (fl::<F>(q as f64) + half)).collect();

        let mut rho = Vec::with_capacity(num_radii * num_phases);
        let mut psi = Vec::with_capacity(num_radii * num_phases);
        for &r in &radii {
            for &p in &phases {
                rho.push(r);
                psi.push(p);
            }
        }
        PoleSet::new(rho, psi, true)
    }

    /// Number of first-quadrant poles.
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn rho(&self) -> &[F] {
        &self.rho
    }

    pub fn psi(&self) -> &[F] {
        &self.psi
    }

    pub fn include_constant(&self) -> bool {
        self.include_constant
    }
}

/// Cosine or sine branch of a second-order mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Sin,
}

/// One dictionary column generator: the all-ones constant atom or a damped
/// oscillation `(+-rho)^k * trig(k*psi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator<F> {
    Constant,
    Mode { rho: F, psi: F, negated: bool, trig: Trig },
}

impl<F: Scalar> Generator<F> {
    /// Column entry at row `k`.
    pub fn entry(&self, k: usize) -> F {
        match *self {
            Generator::Constant => F::one(),
            Generator::Mode { rho, psi, negated, trig } => {
                let mut mag = rho.powi(k as i32);
                if negated && k % 2 == 1 {
                    mag = -mag;
                }
                let ang = psi * fl::<F>(k as f64);
                match trig {
                    Trig::Cos => mag * ang.cos(),
                    Trig::Sin => mag * ang.sin(),
                }
            }
        }
    }

    /// Partial derivative of the raw entry at row `k` with respect to the
    /// owning pole's magnitude.
    pub fn d_rho(&self, k: usize) -> F {
        match *self {
            Generator::Constant => F::zero(),
            Generator::Mode { rho, psi, negated, trig } => {
                if k == 0 {
                    return F::zero();
                }
                let mut mag = fl::<F>(k as f64) * rho.powi(k as i32 - 1);
                if negated && k % 2 == 1 {
                    mag = -mag;
                }
                let ang = psi * fl::<F>(k as f64);
                match trig {
                    Trig::Cos => mag * ang.cos(),
                    Trig::Sin => mag * ang.sin(),
                }
            }
        }
    }

    /// Partial derivative of the raw entry at row `k` with respect to the
    /// owning pole's phase.
    pub fn d_psi(&self, k: usize) -> F {
        match *self {
            Generator::Constant => F::zero(),
            Generator::Mode { rho, psi, negated, trig } => {
                if k == 0 {
                    return F::zero();
                }
                let kf = fl::<F>(k as f64);
                let mut mag = rho.powi(k as i32);
                if negated && k % 2 == 1 {
                    mag = -mag;
                }
                let ang = psi * kf;
                match trig {
                    Trig::Cos => -mag * kf * ang.sin(),
                    Trig::Sin => mag * kf * ang.cos(),
                }
            }
        }
    }
}

/// A generator together with the index of the pole that owns it (`None` for
/// the constant atom).
#[derive(Debug, Clone, Copy)]
pub struct ColumnSource<F> {
    pub generator: Generator<F>,
    pub pole: Option<usize>,
}

// Generators are compared as sequences on a fixed probe horizon; equal
// probes only arise at quadrant boundaries (psi in {0, pi/2} or rho = 1 with
// psi = 0), never with the strict-interior ring init.
const PROBE_LEN: usize = 32;

fn probe_zero<F: Scalar>(g: &Generator<F>) -> bool {
    (0..PROBE_LEN).all(|k| g.entry(k) == F::zero())
}

fn probes_equal<F: Scalar>(a: &Generator<F>, b: &Generator<F>) -> bool {
    (0..PROBE_LEN).all(|k| a.entry(k) == b.entry(k))
}

/// Expands first-quadrant poles into all column generators: per pole the
/// four sequences `rho^k cos(k psi)`, `rho^k sin(k psi)`,
/// `(-rho)^k cos(k psi)`, `(-rho)^k sin(k psi)`, plus the constant atom,
/// with identically-zero and duplicate generators removed.
pub fn expand_quadrants<F: Scalar>(ps: &PoleSet<F>) -> Vec<ColumnSource<F>> {
    expand_raw(ps.rho(), ps.psi(), ps.include_constant())
}

pub(crate) fn expand_raw<F: Scalar>(
    rho: &[F],
    psi: &[F],
    include_constant: bool,
) -> Vec<ColumnSource<F>> {
    let mut out: Vec<ColumnSource<F>> = Vec::with_capacity(4 * rho.len() + 1);
    if include_constant {
        out.push(ColumnSource { generator: Generator::Constant, pole: None });
    }
    for (i, (&r, &p)) in rho.iter().zip(psi).enumerate() {
        for (negated, trig) in
            [(false, Trig::Cos), (false, Trig::Sin), (true, Trig::Cos), (true, Trig::Sin)]
        {
            let g = Generator::Mode { rho: r, psi: p, negated, trig };
            if probe_zero(&g) {
                continue;
            }
            if out.iter().any(|c| probes_equal(&c.generator, &g)) {
                continue;
            }
            out.push(ColumnSource { generator: g, pole: Some(i) });
        }
    }
    out
}
