//! Clamped-free Euler-Bernoulli beam modes.
//!
//! The analytic side (wavenumbers, closed-form mode shapes, natural
//! frequencies and Galerkin modal mass/stiffness) lives here; [`fem`] holds
//! an independent Hermite-element eigensolver used to cross-check it.

pub mod fem;

use std::f64::consts::PI;

use serde::Serialize;

use crate::device::{BeamGeometry, Material};
use crate::error::{Error, Result};
use crate::quadrature::converged_simpson;

pub use fem::{fem_modal, FemModalResult, FemMode};

/// Above this argument the hyperbolic terms of the mode shape are evaluated
/// in a cancellation-free exponential form.
const HYPERBOLIC_SWITCH: f64 = 20.0;

const QUAD_POINTS: usize = 257;
const QUAD_MAX_POINTS: usize = 1 << 16;
const QUAD_TOL: f64 = 1e-9;

/// Characteristic function of the clamped-free beam, `1 + cos β cosh β`.
pub fn characteristic(beta: f64) -> f64 {
    1.0 + beta.cos() * beta.cosh()
}

/// `cos β + sech β`, the characteristic function divided by `cosh β`. Same
/// roots, but bounded, so it stays meaningful for high modes.
pub fn scaled_characteristic(beta: f64) -> f64 {
    beta.cos() + 1.0 / beta.cosh()
}

fn scaled_characteristic_slope(beta: f64) -> f64 {
    -beta.sin() - beta.tanh() / beta.cosh()
}

/// First `count` roots βₙ = kₙL of `1 + cos β cosh β = 0`, ascending.
///
/// Root n is the only sign change of the characteristic function on
/// `((n−1)π, nπ)`. Each root is bisected to 1e-6 and then Newton-polished.
pub fn cantilever_wavenumbers(count: usize) -> Vec<f64> {
    (1..=count).map(wavenumber).collect()
}

pub fn wavenumber(n: usize) -> f64 {
    assert!(n >= 1, "mode index is 1-based");
    let mut lo = (n - 1) as f64 * PI;
    let mut hi = n as f64 * PI;
    let f_lo = scaled_characteristic(lo);
    debug_assert!(f_lo * scaled_characteristic(hi) < 0.0);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if scaled_characteristic(mid) * f_lo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut beta = 0.5 * (lo + hi);
    for _ in 0..50 {
        let step = scaled_characteristic(beta) / scaled_characteristic_slope(beta);
        let next = (beta - step).clamp(lo, hi);
        let done = (next - beta).abs() <= 1e-15 * beta;
        beta = next;
        if done {
            break;
        }
    }
    beta
}

/// Tip-normalised clamped-free eigenfunction,
/// `φ(ξ) = [cosh βξ − cos βξ − σ(sinh βξ − sin βξ)] / N` with `ξ = x/L`,
/// `σ = (cosh β + cos β)/(sinh β + sin β)` and `N` chosen so `φ(1) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeShape {
    pub mode: usize,
    pub beta: f64,
    sigma: f64,
    norm: f64,
    length: f64,
    // e^{x}(1−σ)/2 = e^{x−β}·large_coeff, exact for every x
    large_coeff: f64,
}

impl ModeShape {
    pub fn new(mode: usize, length: f64) -> Self {
        let beta = wavenumber(mode);
        let sigma = (beta.cosh() + beta.cos()) / (beta.sinh() + beta.sin());
        let em = (-beta).exp();
        let large_coeff = (beta.sin() - beta.cos() - em) / (1.0 - em * em + 2.0 * em * beta.sin());
        let mut shape = Self {
            mode,
            beta,
            sigma,
            norm: 1.0,
            length,
            large_coeff,
        };
        shape.norm = shape.raw(1.0)[0];
        shape
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Unnormalised `[φ, φ', φ'', φ''']` with derivatives taken in ξ.
    fn raw(&self, xi: f64) -> [f64; 4] {
        let b = self.beta;
        let x = b * xi;
        let s = self.sigma;
        let (sin, cos) = x.sin_cos();
        // a ± b_ are cosh x − σ sinh x and sinh x − σ cosh x
        let (plus, minus) = if x <= HYPERBOLIC_SWITCH {
            (x.cosh() - s * x.sinh(), x.sinh() - s * x.cosh())
        } else {
            let a = (x - b).exp() * self.large_coeff;
            let bb = (-x).exp() * (1.0 + s) / 2.0;
            (a + bb, a - bb)
        };
        [
            plus - cos + s * sin,
            b * (minus + sin + s * cos),
            b * b * (plus + cos - s * sin),
            b * b * b * (minus - sin - s * cos),
        ]
    }

    /// φ at dimensionless position ξ ∈ [0, 1] (unchecked).
    pub fn at(&self, xi: f64) -> f64 {
        self.raw(xi)[0] / self.norm
    }

    /// dφ/dξ.
    pub fn slope_at(&self, xi: f64) -> f64 {
        self.raw(xi)[1] / self.norm
    }

    /// d²φ/dξ².
    pub fn curvature_at(&self, xi: f64) -> f64 {
        self.raw(xi)[2] / self.norm
    }

    /// d³φ/dξ³.
    pub fn third_derivative_at(&self, xi: f64) -> f64 {
        self.raw(xi)[3] / self.norm
    }

    /// φ at physical position `x` (m), which must lie on the beam.
    pub fn value(&self, x: f64) -> Result<f64> {
        if !(0.0..=self.length).contains(&x) {
            return Err(Error::invalid(
                "x",
                format!("{x:e} m is outside the beam [0, {:e}]", self.length),
            ));
        }
        Ok(self.at(x / self.length))
    }
}

/// `mode_shape(n, x, beam)`: deflection of mode `n` at `x`, tip-normalised.
pub fn mode_shape(n: usize, x: f64, beam: &BeamGeometry) -> Result<f64> {
    ModeShape::new(n, beam.length).value(x)
}

/// `fₙ = (1/2π)·√(βₙ⁴/12)·(h/L²)·√(E/ρ)`.
pub fn natural_frequency(n: usize, beam: &BeamGeometry, material: &Material) -> f64 {
    frequency_from_wavenumber(wavenumber(n), beam, material)
}

pub(crate) fn frequency_from_wavenumber(beta: f64, beam: &BeamGeometry, material: &Material) -> f64 {
    (beta.powi(4) / 12.0).sqrt()
        * (beam.thickness / (beam.length * beam.length))
        * (material.youngs_modulus / material.density).sqrt()
        / (2.0 * PI)
}

/// Single-mode Galerkin mass and stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModalMassStiffness {
    /// kg
    pub mass: f64,
    /// N/m
    pub stiffness: f64,
}

/// `m_eff = ρA∫₀ᴸ φ² dx` by checked Simpson quadrature, `k_eff = (2πfₙ)² m_eff`.
pub fn modal_mass_stiffness(n: usize, beam: &BeamGeometry, material: &Material) -> Result<ModalMassStiffness> {
    let shape = ModeShape::new(n, beam.length);
    let integral = converged_simpson(
        |xi| shape.at(xi).powi(2),
        0.0,
        1.0,
        QUAD_POINTS,
        QUAD_MAX_POINTS,
        QUAD_TOL,
        0.0,
    )? * beam.length;
    let mass = material.density * beam.section_properties().area * integral;
    let omega = 2.0 * PI * frequency_from_wavenumber(shape.beta, beam, material);
    Ok(ModalMassStiffness {
        mass,
        stiffness: omega * omega * mass,
    })
}

/// Everything the reduced-order model needs about one retained mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModalBasis {
    pub mode: usize,
    /// Dimensionless wavenumber βₙ = kₙL.
    pub wavenumber: f64,
    /// Hz
    pub frequency: f64,
    #[serde(skip)]
    pub shape: ModeShape,
    /// kg
    pub modal_mass: f64,
    /// N/m
    pub modal_stiffness: f64,
}

impl ModalBasis {
    pub fn compute(n: usize, beam: &BeamGeometry, material: &Material) -> Result<Self> {
        let shape = ModeShape::new(n, beam.length);
        let ms = modal_mass_stiffness(n, beam, material)?;
        Ok(Self {
            mode: n,
            wavenumber: shape.beta,
            frequency: frequency_from_wavenumber(shape.beta, beam, material),
            shape,
            modal_mass: ms.mass,
            modal_stiffness: ms.stiffness,
        })
    }

    pub fn angular_frequency(&self) -> f64 {
        2.0 * PI * self.frequency
    }
}
