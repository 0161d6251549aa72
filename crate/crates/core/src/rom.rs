//! Single-mode reduced-order model of a configured device.
//!
//! Projects the beam onto its first clamped-free mode and couples the modal
//! coordinate to both electrodes:
//!
//! ```text
//! m_eff q̈ + c q̇ + k_eff q = ½ΔV_in(t)²·dC_in/dq + ½V_dc²·dC_out/dq
//! ```
//!
//! with `c = 2ζ√(k_eff·m_eff)`.

use serde::{Deserialize, Serialize};

use crate::device::DeviceConfig;
use crate::electrostatics::{
    self, transducer_voltage, DeflectionProfile, DriveMode, DriveSignal, MotionalCurrent, Transducer,
};
use crate::error::{Error, Result};
use crate::modal::ModalBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Port {
    Input,
    Output,
}

#[derive(Debug, Clone)]
pub struct ReducedModel {
    config: DeviceConfig,
    basis: ModalBasis,
    input: Transducer,
    output: Transducer,
    damping_coefficient: f64,
    contact: f64,
}

impl ReducedModel {
    pub fn new(config: &DeviceConfig) -> Result<Self> {
        config.validate()?;
        let basis = ModalBasis::compute(1, &config.beam, &config.material)?;
        let profile = DeflectionProfile::Mode(basis.shape);
        Ok(Self::assemble(config, basis, &profile))
    }

    /// Model with a prescribed deflection profile under the electrodes
    /// instead of the mode shape (e.g. a rigid plate for closed-form checks).
    pub fn with_profile(config: &DeviceConfig, profile: &DeflectionProfile) -> Result<Self> {
        config.validate()?;
        let basis = ModalBasis::compute(1, &config.beam, &config.material)?;
        Ok(Self::assemble(config, basis, profile))
    }

    fn assemble(config: &DeviceConfig, basis: ModalBasis, profile: &DeflectionProfile) -> Self {
        let eps = config.material.gap_permittivity;
        let input = Transducer::new(&config.input_electrode, &config.beam, eps, profile);
        let output = Transducer::new(&config.output_electrode, &config.beam, eps, profile);
        let zeta = config.damping.zeta();
        let damping_coefficient = 2.0 * zeta * (basis.modal_stiffness * basis.modal_mass).sqrt();
        let contact = input.contact_displacement().min(output.contact_displacement());
        Self {
            config: *config,
            basis,
            input,
            output,
            damping_coefficient,
            contact,
        }
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn basis(&self) -> &ModalBasis {
        &self.basis
    }

    /// Unbiased first-mode frequency, Hz.
    pub fn natural_frequency(&self) -> f64 {
        self.basis.frequency
    }

    pub fn modal_mass(&self) -> f64 {
        self.basis.modal_mass
    }

    pub fn modal_stiffness(&self) -> f64 {
        self.basis.modal_stiffness
    }

    pub fn damping_coefficient(&self) -> f64 {
        self.damping_coefficient
    }

    pub fn transducer(&self, port: Port) -> &Transducer {
        match port {
            Port::Input => &self.input,
            Port::Output => &self.output,
        }
    }

    /// Static deflection with `voltage` on one port only.
    pub fn static_equilibrium(&self, voltage: f64, port: Port) -> Result<f64> {
        electrostatics::static_equilibrium(self.basis.modal_stiffness, &[(voltage, self.transducer(port))])
    }

    /// Static deflection under the drive's DC voltages (the AC part off).
    pub fn bias_equilibrium(&self, drive: &DriveSignal) -> Result<f64> {
        let input = match drive.mode {
            DriveMode::Resonator => drive.v_dc,
            DriveMode::Doubler => 0.0,
        };
        electrostatics::static_equilibrium(
            self.basis.modal_stiffness,
            &[(input, &self.input), (drive.v_dc, &self.output)],
        )
    }

    /// Stiffness including electrostatic softening at the bias point, N/m.
    pub fn biased_stiffness(&self, drive: &DriveSignal) -> Result<f64> {
        let q = self.bias_equilibrium(drive)?;
        let input = match drive.mode {
            DriveMode::Resonator => drive.v_dc,
            DriveMode::Doubler => 0.0,
        };
        Ok(self.basis.modal_stiffness
            - 0.5 * input * input * self.input.capacitance_curvature(q)?
            - 0.5 * drive.v_dc * drive.v_dc * self.output.capacitance_curvature(q)?)
    }

    pub fn pull_in_voltage(&self, port: Port) -> Result<f64> {
        electrostatics::pull_in_voltage(self.basis.modal_stiffness, self.transducer(port))
    }

    pub fn motional_current(&self, q: f64, q_dot: f64, v_dc: f64) -> Result<MotionalCurrent> {
        electrostatics::motional_current(&self.output, v_dc, q, q_dot, self.config.load_resistance)
    }

    /// Smallest modal displacement that touches either electrode.
    pub fn contact_displacement(&self) -> f64 {
        self.contact
    }

    /// q̈ at time `t`; `Err` on overclosure.
    #[inline]
    pub(crate) fn acceleration(&self, t: f64, q: f64, q_dot: f64, drive: &DriveSignal) -> Result<f64> {
        if !(q < self.contact) || !q.is_finite() {
            return Err(Error::TransientOverclosure { t, q });
        }
        let v = transducer_voltage(t, drive);
        let force = 0.5 * v.input * v.input * self.input.gradient_fast(q)
            + 0.5 * v.output * v.output * self.output.gradient_fast(q);
        Ok((force - self.damping_coefficient * q_dot - self.basis.modal_stiffness * q) / self.basis.modal_mass)
    }

    /// Output capacitance and motional current at a state, unchecked.
    #[inline]
    pub(crate) fn output_sample(&self, q: f64, q_dot: f64, v_dc: f64) -> (f64, f64, f64) {
        let c = self.output.capacitance_fast(q);
        let i = v_dc * self.output.gradient_fast(q) * q_dot;
        (c, i, i * self.config.load_resistance)
    }
}
