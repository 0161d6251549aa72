//! Hermite (cubic) beam finite elements for the clamped-free cantilever and a
//! dense generalized eigensolver, used to cross-check the analytic modes.
//!
//! Nodal unknowns are the deflection `w` and the length-scaled rotation
//! `l·θ` (`l` = element length) so that mass and stiffness entries share
//! units within each matrix. Rotations are unscaled on output.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::device::{BeamGeometry, Material};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 500;
/// Convergence bar on the normwise backward error of an eigenpair.
const BACKWARD_TOL: f64 = 1e-10;
/// Relative eigenvalue change below which the shift is moved onto the mode.
const SHIFT_TRIGGER: f64 = 1e-6;

#[rustfmt::skip]
const STIFFNESS: [[f64; 4]; 4] = [
    [ 12.0,  6.0, -12.0,  6.0],
    [  6.0,  4.0,  -6.0,  2.0],
    [-12.0, -6.0,  12.0, -6.0],
    [  6.0,  2.0,  -6.0,  4.0],
];

#[rustfmt::skip]
const CONSISTENT_MASS: [[f64; 4]; 4] = [
    [156.0,  22.0,  54.0, -13.0],
    [ 22.0,   4.0,  13.0,  -3.0],
    [ 54.0,  13.0, 156.0, -22.0],
    [-13.0,  -3.0, -22.0,   4.0],
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FemMode {
    /// Hz
    pub frequency: f64,
    /// Nodal deflection, tip-normalised, including the clamped node.
    pub deflection: Vec<f64>,
    /// Nodal rotation dw/dx (1/m under the same normalisation).
    pub rotation: Vec<f64>,
    /// ‖Kv − ω²Mv‖ / ‖Kv‖.
    pub residual: f64,
    /// ‖Kv − ω²Mv‖ / ((‖K‖ + ω²‖M‖)·‖v‖), the convergence measure.
    pub backward_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FemModalResult {
    pub elements: usize,
    /// Node positions from the clamp, m.
    pub node_x: Vec<f64>,
    /// Lowest modes, ascending in frequency.
    pub modes: Vec<FemMode>,
}

struct Assembly {
    stiffness: DMatrix<f64>,
    mass: DMatrix<f64>,
    // EI / l³, for the curvature-based Rayleigh quotient
    bending: f64,
    elements: usize,
}

fn assemble(beam: &BeamGeometry, material: &Material, elements: usize) -> Assembly {
    let section = beam.section_properties();
    let l = beam.length / elements as f64;
    let bending = material.youngs_modulus * section.second_moment / l.powi(3);
    let inertia = material.density * section.area * l / 420.0;
    // two clamped DOFs at node 0 are dropped
    let dofs = 2 * elements;
    let mut k = DMatrix::zeros(dofs, dofs);
    let mut m = DMatrix::zeros(dofs, dofs);
    for e in 0..elements {
        for i in 0..4 {
            let Some(gi) = (2 * e + i).checked_sub(2) else { continue };
            for j in 0..4 {
                let Some(gj) = (2 * e + j).checked_sub(2) else { continue };
                k[(gi, gj)] += bending * STIFFNESS[i][j];
                m[(gi, gj)] += inertia * CONSISTENT_MASS[i][j];
            }
        }
    }
    Assembly {
        stiffness: k,
        mass: m,
        bending,
        elements,
    }
}

impl Assembly {
    /// Nodal values including the clamped node: (w, l·θ) per node.
    fn node_dof(v: &DVector<f64>, node: usize, which: usize) -> f64 {
        if node == 0 {
            0.0
        } else {
            v[2 * (node - 1) + which]
        }
    }

    /// vᵀKv evaluated element by element from the (linear) curvature, which
    /// avoids the cancellation of the assembled product for smooth modes.
    fn strain_energy(&self, v: &DVector<f64>) -> f64 {
        (0..self.elements)
            .map(|e| {
                let w1 = Self::node_dof(v, e, 0);
                let t1 = Self::node_dof(v, e, 1);
                let w2 = Self::node_dof(v, e + 1, 0);
                let t2 = Self::node_dof(v, e + 1, 1);
                let dw = w1 - w2;
                // l²·w'' = c0 + c1·s on s ∈ [0, 1]
                let c0 = -6.0 * dw - 4.0 * t1 - 2.0 * t2;
                let c1 = 12.0 * dw + 6.0 * t1 + 6.0 * t2;
                let mid = c0 + 0.5 * c1;
                self.bending * (mid * mid + c1 * c1 / 12.0)
            })
            .sum()
    }

    fn rayleigh(&self, v: &DVector<f64>) -> f64 {
        self.strain_energy(v) / v.dot(&(&self.mass * v))
    }
}

/// Lowest `n_modes` bending modes of a cantilever meshed with `n_elements`
/// equal Hermite elements (consistent mass), by shifted inverse iteration
/// with M-orthogonal deflation.
pub fn fem_modal(
    beam: &BeamGeometry,
    material: &Material,
    n_elements: usize,
    n_modes: usize,
) -> Result<FemModalResult> {
    if n_modes == 0 {
        return Err(Error::invalid("n_modes", "must be >= 1"));
    }
    if n_elements < n_modes + 2 {
        return Err(Error::invalid(
            "n_elements",
            format!("need at least n_modes + 2 = {} elements", n_modes + 2),
        ));
    }
    let asm = assemble(beam, material, n_elements);
    if asm.mass.clone().cholesky().is_none() {
        return Err(Error::SingularMass);
    }
    let k_norm = asm.stiffness.norm();
    let m_norm = asm.mass.norm();
    let dofs = asm.stiffness.nrows();

    // M-normalised converged eigenvectors
    let mut found: Vec<DVector<f64>> = Vec::with_capacity(n_modes);
    let mut modes = Vec::with_capacity(n_modes);
    for mode in 1..=n_modes {
        let mut v = DVector::from_fn(dofs, |i, _| 1.0 + i as f64 / dofs as f64);
        deflate(&mut v, &found, &asm.mass);
        m_normalize(&mut v, &asm.mass);
        let mut lambda = asm.rayleigh(&v);
        let mut shift = 0.0;
        let mut shifted = false;
        let mut backward = f64::INFINITY;
        let mut converged = false;
        for _ in 0..MAX_ITERATIONS {
            let system = &asm.stiffness - shift * &asm.mass;
            let rhs = &asm.mass * &v;
            let Some(mut z) = system.lu().solve(&rhs) else {
                // shift landed on an eigenvalue to machine precision
                shift *= 1.0 - 1e-9;
                continue;
            };
            deflate(&mut z, &found, &asm.mass);
            m_normalize(&mut z, &asm.mass);
            // fix the sign so successive iterates are comparable
            if z.dot(&(&asm.mass * &v)) < 0.0 {
                z = -z;
            }
            let next = asm.rayleigh(&z);
            let change = ((next - lambda) / next).abs();
            v = z;
            lambda = next;
            let r = &asm.stiffness * &v - lambda * (&asm.mass * &v);
            backward = r.norm() / ((k_norm + lambda * m_norm) * v.norm());
            if shifted && backward < BACKWARD_TOL && change < 1e-14 {
                converged = true;
                break;
            }
            if !shifted && change < SHIFT_TRIGGER {
                shift = lambda * (1.0 - SHIFT_TRIGGER);
                shifted = true;
            }
        }
        if !converged {
            return Err(Error::EigenNonConvergence {
                mode,
                residual: backward,
            });
        }
        let kv = &asm.stiffness * &v;
        let residual = (&kv - lambda * (&asm.mass * &v)).norm() / kv.norm();
        modes.push(to_mode(&v, lambda, residual, backward, beam.length, n_elements));
        found.push(v);
    }
    modes.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    let l = beam.length / n_elements as f64;
    Ok(FemModalResult {
        elements: n_elements,
        node_x: (0..=n_elements).map(|i| i as f64 * l).collect(),
        modes,
    })
}

fn deflate(v: &mut DVector<f64>, found: &[DVector<f64>], mass: &DMatrix<f64>) {
    for u in found {
        let c = u.dot(&(mass * &*v));
        v.axpy(-c, u, 1.0);
    }
}

fn m_normalize(v: &mut DVector<f64>, mass: &DMatrix<f64>) {
    let n = v.dot(&(mass * &*v)).sqrt();
    *v /= n;
}

fn to_mode(v: &DVector<f64>, lambda: f64, residual: f64, backward_error: f64, length: f64, elements: usize) -> FemMode {
    let l = length / elements as f64;
    let nodes = elements + 1;
    let tip = Assembly::node_dof(v, elements, 0);
    let deflection = (0..nodes).map(|n| Assembly::node_dof(v, n, 0) / tip).collect();
    let rotation = (0..nodes).map(|n| Assembly::node_dof(v, n, 1) / (l * tip)).collect();
    FemMode {
        frequency: lambda.sqrt() / (2.0 * PI),
        deflection,
        rotation,
        residual,
        backward_error,
    }
}
