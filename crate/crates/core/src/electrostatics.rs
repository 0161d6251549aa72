//! Air-gap capacitive transducers under a deflecting beam.
//!
//! The beam deflects as `y(x, t) = q(t)·φ(x)` with `q` the modal tip
//! displacement, positive toward the electrodes. Each electrode sees the
//! distributed parallel-plate capacitance
//!
//! ```text
//! C(q) = ∫ εW / (d0 − q·φ(x)) dx   over [x_start, x_end]
//! ```
//!
//! and exerts the generalized (modal) force `½·ΔV²·dC/dq` obtained from the
//! co-energy. Fringing is ignored.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::device::{BeamGeometry, Electrode};
use crate::error::{Error, Result};
use crate::modal::ModeShape;
use crate::quadrature::simpson_rule;

/// Simpson points per electrode span for the working quadrature.
pub const SPAN_POINTS: usize = 257;
/// Finest rule the checked evaluations refine to before giving up.
pub const SPAN_MAX_POINTS: usize = 4097;
const SPAN_TOL: f64 = 1e-9;

/// Below this `|q|·φmax/d0` the gradient uses its power series in q.
const SERIES_RADIUS: f64 = 0.02;
/// Terms kept in that series; truncation is below 1e-19 relative.
const SERIES_TERMS: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveMode {
    /// Bias on the beam, AC on the input electrode: ΔV = V_dc − v_i.
    Resonator,
    /// Bias in series with the AC source: ΔV = v_i.
    Doubler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Sine,
    /// Linear chirp from `f_lo` to `f_hi` over `duration`, repeating.
    SweptSine {
        f_lo: f64,
        f_hi: f64,
        duration: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSignal {
    pub mode: DriveMode,
    /// V
    pub v_dc: f64,
    /// AC peak amplitude, V
    pub v_amp: f64,
    /// Hz
    pub f_in: f64,
    #[serde(default = "default_waveform")]
    pub waveform: Waveform,
}

fn default_waveform() -> Waveform {
    Waveform::Sine
}

impl DriveSignal {
    pub fn sine(mode: DriveMode, v_dc: f64, v_amp: f64, f_in: f64) -> Self {
        Self {
            mode,
            v_dc,
            v_amp,
            f_in,
            waveform: Waveform::Sine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_dc.is_finite() && self.v_dc >= 0.0) {
            return Err(Error::invalid("drive.v_dc", "must be finite and >= 0"));
        }
        if !(self.v_amp.is_finite() && self.v_amp >= 0.0) {
            return Err(Error::invalid("drive.v_amp", "must be finite and >= 0"));
        }
        if !(self.f_in.is_finite() && self.f_in > 0.0) {
            return Err(Error::invalid("drive.f_in", "must be finite and > 0"));
        }
        if let Waveform::SweptSine { f_lo, f_hi, duration } = self.waveform {
            if !(f_lo > 0.0 && f_lo < f_hi && f_hi.is_finite()) {
                return Err(Error::invalid("drive.waveform", "need 0 < f_lo < f_hi"));
            }
            if !(duration.is_finite() && duration > 0.0) {
                return Err(Error::invalid("drive.waveform", "duration must be > 0"));
            }
        }
        Ok(())
    }

    /// Instantaneous AC source voltage v_i(t).
    pub fn ac_voltage(&self, t: f64) -> f64 {
        match self.waveform {
            Waveform::Sine => self.v_amp * (2.0 * PI * self.f_in * t).sin(),
            Waveform::SweptSine { f_lo, f_hi, duration } => {
                let tau = t.rem_euclid(duration);
                let phase = f_lo * tau + 0.5 * (f_hi - f_lo) * tau * tau / duration;
                self.v_amp * (2.0 * PI * phase).sin()
            }
        }
    }

    /// Highest frequency the drive puts into the force (the square law
    /// doubles the AC content).
    pub fn max_force_frequency(&self) -> f64 {
        match self.waveform {
            Waveform::Sine => 2.0 * self.f_in,
            Waveform::SweptSine { f_hi, .. } => 2.0 * f_hi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransducerVoltages {
    /// Voltage across the input gap, V.
    pub input: f64,
    /// Voltage across the output gap, V.
    pub output: f64,
}

/// Voltages across the two gaps at time `t` for the drive's wiring. The
/// output electrode sits at ground through R_L, so it always sees V_dc.
pub fn transducer_voltage(t: f64, drive: &DriveSignal) -> TransducerVoltages {
    let vi = drive.ac_voltage(t);
    let input = match drive.mode {
        DriveMode::Resonator => drive.v_dc - vi,
        DriveMode::Doubler => vi,
    };
    TransducerVoltages {
        input,
        output: drive.v_dc,
    }
}

/// How the beam deflects under an electrode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeflectionProfile {
    /// A cantilever eigenmode.
    Mode(ModeShape),
    /// φ(x) ≡ c. `Uniform(1.0)` is the rigid parallel plate.
    Uniform(f64),
}

impl DeflectionProfile {
    fn at(&self, x: f64, length: f64) -> f64 {
        match self {
            DeflectionProfile::Mode(s) => s.at(x / length),
            DeflectionProfile::Uniform(c) => *c,
        }
    }
}

#[derive(Debug, Clone)]
struct SpanRule {
    phi: Vec<f64>,
    // ε·W·w_i
    weight: Vec<f64>,
}

impl SpanRule {
    fn new(
        points: usize,
        electrode: &Electrode,
        width: f64,
        permittivity: f64,
        length: f64,
        profile: &DeflectionProfile,
    ) -> Self {
        let (x, w) = simpson_rule(electrode.x_start, electrode.x_end, points);
        Self {
            phi: x.iter().map(|&x| profile.at(x, length)).collect(),
            weight: w.iter().map(|w| permittivity * width * w).collect(),
        }
    }

    fn sum(&self, gap: f64, q: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.phi
            .iter()
            .zip(&self.weight)
            .map(|(&p, &w)| w * f(p, gap - q * p))
            .sum()
    }
}

/// One electrode's gap capacitance as a function of the modal coordinate.
#[derive(Debug, Clone)]
pub struct Transducer {
    electrode: Electrode,
    // rules[0] has SPAN_POINTS nodes, each next one doubles the intervals
    rules: Vec<SpanRule>,
    phi_max: f64,
    phi_min: f64,
    // M_k = Σ w_i εW φ_i^{k+1}; dC/dq = Σ_k (k+1) M_k q^k / d0^{k+2}
    moments: [f64; SERIES_TERMS],
}

impl Transducer {
    pub fn new(electrode: &Electrode, beam: &BeamGeometry, permittivity: f64, profile: &DeflectionProfile) -> Self {
        let build = |n| SpanRule::new(n, electrode, beam.width, permittivity, beam.length, profile);
        let mut rules = vec![build(SPAN_POINTS)];
        while rules.last().unwrap().phi.len() < SPAN_MAX_POINTS {
            rules.push(build(2 * rules.last().unwrap().phi.len() - 1));
        }
        let fine = &rules[1];
        let phi_max = fine.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let phi_min = fine.phi.iter().copied().fold(f64::INFINITY, f64::min);
        let mut moments = [0.0; SERIES_TERMS];
        for (&p, &w) in rules[0].phi.iter().zip(&rules[0].weight) {
            let mut pk = p;
            for m in moments.iter_mut() {
                *m += w * pk;
                pk *= p;
            }
        }
        Self {
            electrode: *electrode,
            rules,
            phi_max,
            phi_min,
            moments,
        }
    }

    pub fn electrode(&self) -> &Electrode {
        &self.electrode
    }

    pub fn gap(&self) -> f64 {
        self.electrode.gap
    }

    /// Largest and smallest φ over the span.
    pub fn profile_range(&self) -> (f64, f64) {
        (self.phi_min, self.phi_max)
    }

    /// Smallest positive q at which the beam touches this electrode
    /// (infinite if it never can).
    pub fn contact_displacement(&self) -> f64 {
        if self.phi_max > 0.0 {
            self.electrode.gap / self.phi_max
        } else {
            f64::INFINITY
        }
    }

    pub fn is_admissible(&self, q: f64) -> bool {
        let d0 = self.electrode.gap;
        q.is_finite() && q * self.phi_max < d0 && q * self.phi_min < d0
    }

    fn admissible(&self, q: f64) -> Result<()> {
        if self.is_admissible(q) {
            Ok(())
        } else {
            Err(Error::Overclosure {
                q,
                gap: self.electrode.gap,
            })
        }
    }

    // Successive Simpson estimates until two agree to SPAN_TOL; the coarser
    // of the agreeing pair is returned so that small deflections reproduce
    // the working rule used by the integrator.
    fn checked(&self, q: f64, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<f64> {
        self.admissible(q)?;
        let d0 = self.electrode.gap;
        let mut coarse = self.rules[0].sum(d0, q, f);
        let mut fine = coarse;
        for rule in &self.rules[1..] {
            fine = rule.sum(d0, q, f);
            if (coarse - fine).abs() <= SPAN_TOL * fine.abs() {
                return Ok(coarse);
            }
            coarse = fine;
        }
        Err(Error::Quadrature { coarse, fine })
    }

    /// C(q), F.
    pub fn capacitance(&self, q: f64) -> Result<f64> {
        self.checked(q, |_, gap| 1.0 / gap)
    }

    /// dC/dq, F/m.
    pub fn capacitance_gradient(&self, q: f64) -> Result<f64> {
        self.checked(q, |p, gap| p / (gap * gap))
    }

    /// d²C/dq², F/m².
    pub fn capacitance_curvature(&self, q: f64) -> Result<f64> {
        self.checked(q, |p, gap| 2.0 * p * p / (gap * gap * gap))
    }

    /// Generalized electrostatic force `½·ΔV²·dC/dq`, N. Always attractive.
    pub fn force(&self, voltage: f64, q: f64) -> Result<f64> {
        Ok(0.5 * voltage * voltage * self.capacitance_gradient(q)?)
    }

    /// dC/dq without the admissibility and cross-check, for the time
    /// integrator. Working-rule sum only; evaluated through its power series
    /// in q when the deflection is small.
    #[inline]
    pub(crate) fn gradient_fast(&self, q: f64) -> f64 {
        let d0 = self.electrode.gap;
        let reach = q.abs() * self.phi_max.abs().max(self.phi_min.abs()) / d0;
        if reach <= SERIES_RADIUS {
            let r = q / d0;
            let mut acc = 0.0;
            for k in (0..SERIES_TERMS).rev() {
                acc = acc * r + (k + 1) as f64 * self.moments[k];
            }
            acc / (d0 * d0)
        } else {
            self.rules[0].sum(d0, q, |p, gap| p / (gap * gap))
        }
    }

    /// C(q) without the checks.
    pub(crate) fn capacitance_fast(&self, q: f64) -> f64 {
        self.rules[0].sum(self.electrode.gap, q, |_, gap| 1.0 / gap)
    }
}

/// `C(q) = ∫ εW / (d0 − qφ) dx` over the electrode span.
pub fn gap_capacitance(
    q: f64,
    electrode: &Electrode,
    beam: &BeamGeometry,
    permittivity: f64,
    profile: &DeflectionProfile,
) -> Result<f64> {
    Transducer::new(electrode, beam, permittivity, profile).capacitance(q)
}

/// `dC/dq = ∫ εWφ / (d0 − qφ)² dx`.
pub fn capacitance_gradient(
    q: f64,
    electrode: &Electrode,
    beam: &BeamGeometry,
    permittivity: f64,
    profile: &DeflectionProfile,
) -> Result<f64> {
    Transducer::new(electrode, beam, permittivity, profile).capacitance_gradient(q)
}

pub fn electrostatic_force(
    voltage: f64,
    q: f64,
    electrode: &Electrode,
    beam: &BeamGeometry,
    permittivity: f64,
    profile: &DeflectionProfile,
) -> Result<f64> {
    Transducer::new(electrode, beam, permittivity, profile).force(voltage, q)
}

/// Amplitudes of ΔV_in(t)² at DC, f_in and 2·f_in, V².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoltageHarmonics {
    pub dc: f64,
    pub fundamental: f64,
    pub second: f64,
}

/// Amplitudes of the input-transducer force at DC, f_in and 2·f_in, N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForceHarmonics {
    pub dc: f64,
    pub fundamental: f64,
    pub second: f64,
}

/// Closed-form expansion of ΔV_in² for a sine drive.
///
/// Resonator: `(V − v sin ωt)² = V² + v²/2 − 2Vv sin ωt − (v²/2) cos 2ωt`.
/// Doubler: `(v sin ωt)² = v²/2 − (v²/2) cos 2ωt`, nothing at ω.
pub fn voltage_squared_harmonics(drive: &DriveSignal) -> VoltageHarmonics {
    let v = drive.v_amp;
    let half_sq = 0.5 * v * v;
    match drive.mode {
        DriveMode::Resonator => VoltageHarmonics {
            dc: drive.v_dc * drive.v_dc + half_sq,
            fundamental: 2.0 * drive.v_dc * v,
            second: half_sq,
        },
        DriveMode::Doubler => VoltageHarmonics {
            dc: half_sq,
            fundamental: 0.0,
            second: half_sq,
        },
    }
}

/// Force harmonics at rest (q = 0): voltage-squared amplitudes × ½·dC/dq(0).
pub fn force_harmonics(drive: &DriveSignal, input: &Transducer) -> Result<ForceHarmonics> {
    if drive.waveform != Waveform::Sine {
        return Err(Error::invalid("drive.waveform", "force harmonics need a sine drive"));
    }
    let g = 0.5 * input.capacitance_gradient(0.0)?;
    let v = voltage_squared_harmonics(drive);
    Ok(ForceHarmonics {
        dc: g * v.dc,
        fundamental: g * v.fundamental,
        second: g * v.second,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotionalCurrent {
    /// A
    pub current: f64,
    /// Voltage across R_L, V.
    pub load_voltage: f64,
}

/// `i_o = V_dc · dC_o/dq · q̇`, `v_load = i_o · R_L` (no load feedback).
pub fn motional_current(
    output: &Transducer,
    v_dc: f64,
    q: f64,
    q_dot: f64,
    load_resistance: f64,
) -> Result<MotionalCurrent> {
    let current = v_dc * output.capacitance_gradient(q)? * q_dot;
    Ok(MotionalCurrent {
        current,
        load_voltage: current * load_resistance,
    })
}

const EQUILIBRIUM_MAX_ITER: usize = 1000;
/// Force balance accepted once |k·q − F(q)| ≤ tol·k·q. The quadrature sums
/// carry ~1e-14 relative rounding, so a tighter bar would never be met.
const EQUILIBRIUM_TOL: f64 = 1e-12;

/// Stable static deflection under the given (voltage, transducer) loads:
/// the smallest root of `k·q − Σ ½V²·dC/dq(q)` with positive net stiffness.
///
/// Newton from q = 0. The residual is concave in q (each dC/dq is convex),
/// so the iterates rise monotonically toward the stable root; reaching a
/// point of non-positive net stiffness with the residual still negative
/// proves no stable root exists.
pub fn static_equilibrium(stiffness: f64, loads: &[(f64, &Transducer)]) -> Result<f64> {
    let voltage = loads.iter().map(|(v, _)| v.abs()).fold(0.0, f64::max);
    if loads.iter().all(|(v, _)| *v == 0.0) {
        return Ok(0.0);
    }
    let contact = loads
        .iter()
        .filter(|(v, _)| *v != 0.0)
        .map(|(_, t)| t.contact_displacement())
        .fold(f64::INFINITY, f64::min);
    let mut q = 0.0;
    for _ in 0..EQUILIBRIUM_MAX_ITER {
        let mut residual = stiffness * q;
        let mut slope = stiffness;
        for (v, t) in loads {
            let h = 0.5 * v * v;
            residual -= h * t.capacitance_gradient(q)?;
            slope -= h * t.capacitance_curvature(q)?;
        }
        if q > 0.0 && slope > 0.0 && residual.abs() <= EQUILIBRIUM_TOL * stiffness * q {
            return Ok(q);
        }
        if slope <= 0.0 {
            return Err(Error::PullIn { voltage });
        }
        let mut step = -residual / slope;
        // stay clear of contact
        let room = contact - q;
        if step > 0.5 * room {
            step = 0.5 * room;
        }
        let next = q + step;
        if next == q {
            return Ok(q);
        }
        q = next;
    }
    Err(Error::PullIn { voltage })
}

/// Pull-in voltage resolution.
pub const PULL_IN_RESOLUTION: f64 = 1e-3;
const PULL_IN_FIRST_BRACKET: f64 = 10.0;
const PULL_IN_MAX_BRACKET: f64 = 1e5;

/// Lowest voltage on `transducer` alone for which [`static_equilibrium`]
/// fails, by bisection to [`PULL_IN_RESOLUTION`].
pub fn pull_in_voltage(stiffness: f64, transducer: &Transducer) -> Result<f64> {
    let stable = |v: f64| -> Result<bool> {
        match static_equilibrium(stiffness, &[(v, transducer)]) {
            Ok(_) => Ok(true),
            Err(Error::PullIn { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let mut lo = 0.0;
    let mut hi = PULL_IN_FIRST_BRACKET;
    while stable(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > PULL_IN_MAX_BRACKET {
            return Err(Error::BracketFailure { upper: lo });
        }
    }
    while hi - lo > PULL_IN_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if stable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
