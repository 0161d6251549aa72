//! Fixed-step RK4 integration of the reduced-order model.
//!
//! Time steps are chosen so that one drive period is a power-of-two number
//! of samples and the fastest force component (2·f_in, or f₁ if higher) gets
//! at least 200 samples per period. Post-settling captures are therefore an
//! exact number of drive periods and every drive harmonic falls on an FFT bin.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::electrostatics::{DriveMode, DriveSignal, Waveform};
use crate::error::{Error, Result};
use crate::rom::ReducedModel;

/// Minimum samples per period of the fastest force component.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 200.0;
/// Consecutive-cycle relative RMS change accepted as steady state.
pub const SETTLE_TOL: f64 = 1e-4;
/// The change must stay below tolerance for this many consecutive cycles.
pub const SETTLE_HOLD: usize = 8;
/// Settling cap, in drive cycles per unit Q.
pub const SETTLE_CAP_PER_Q: f64 = 20.0;
const SETTLE_CAP_MIN: usize = 64;
const SETTLE_CAP_MAX: usize = 20_000;
/// AC RMS below which a cycle counts as motionless, m.
const SETTLE_FLOOR: f64 = 1e-18;
/// Drive cycles used for the amplitude/phase inner products.
pub const PHASE_CYCLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// s
    pub dt: f64,
    /// Modal tip displacement, m.
    pub q: Vec<f64>,
    /// m/s
    pub q_dot: Vec<f64>,
    /// Output capacitance, F.
    pub c_out: Vec<f64>,
    /// Motional current, A.
    pub i_o: Vec<f64>,
    /// Voltage across R_L, V.
    pub v_load: Vec<f64>,
    pub drive: DriveSignal,
    /// Samples per drive period (per f₁ period for a chirp).
    pub samples_per_cycle: usize,
    /// First sample considered steady state.
    pub settling_index: usize,
    pub settled: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Samples from the settling index on, truncated to whole cycles.
    pub fn steady_range(&self) -> std::ops::Range<usize> {
        let whole = (self.len() - self.settling_index) / self.samples_per_cycle;
        self.settling_index..self.settling_index + whole * self.samples_per_cycle
    }
}

/// Frequency of the fastest force component the integrator must resolve.
pub fn fastest_frequency(model: &ReducedModel, drive: &DriveSignal) -> f64 {
    drive.max_force_frequency().max(model.natural_frequency())
}

/// Largest admissible step, `1 / (200·f_max)`.
pub fn max_time_step(model: &ReducedModel, drive: &DriveSignal) -> f64 {
    1.0 / (MIN_SAMPLES_PER_PERIOD * fastest_frequency(model, drive))
}

/// Samples per drive period used by the steady-state runners.
pub fn samples_per_drive_period(model: &ReducedModel, drive: &DriveSignal) -> usize {
    let needed = MIN_SAMPLES_PER_PERIOD * fastest_frequency(model, drive) / drive.f_in;
    (needed.ceil() as usize).next_power_of_two()
}

pub fn default_time_step(model: &ReducedModel, drive: &DriveSignal) -> f64 {
    1.0 / (drive.f_in * samples_per_drive_period(model, drive) as f64)
}

/// Settling cap in drive cycles for the model's damping.
pub fn settle_cap_cycles(model: &ReducedModel) -> usize {
    let q = model.config().damping.quality_factor();
    let cap = (SETTLE_CAP_PER_Q * q).ceil();
    if cap.is_finite() {
        (cap as usize).clamp(SETTLE_CAP_MIN, SETTLE_CAP_MAX)
    } else {
        SETTLE_CAP_MAX
    }
}

struct Integrator<'a> {
    model: &'a ReducedModel,
    drive: &'a DriveSignal,
    dt: f64,
    step: u64,
    q: f64,
    q_dot: f64,
}

impl<'a> Integrator<'a> {
    fn new(model: &'a ReducedModel, drive: &'a DriveSignal, dt: f64, q: f64, q_dot: f64) -> Self {
        Self {
            model,
            drive,
            dt,
            step: 0,
            q,
            q_dot,
        }
    }

    fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    fn advance(&mut self) -> Result<()> {
        let (m, d, h) = (self.model, self.drive, self.dt);
        let t = self.time();
        let (q, v) = (self.q, self.q_dot);
        let a1 = m.acceleration(t, q, v, d)?;
        let (q2, v2) = (q + 0.5 * h * v, v + 0.5 * h * a1);
        let a2 = m.acceleration(t + 0.5 * h, q2, v2, d)?;
        let (q3, v3) = (q + 0.5 * h * v2, v + 0.5 * h * a2);
        let a3 = m.acceleration(t + 0.5 * h, q3, v3, d)?;
        let (q4, v4) = (q + h * v3, v + h * a3);
        let a4 = m.acceleration(t + h, q4, v4, d)?;
        self.q = q + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4);
        self.q_dot = v + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        self.step += 1;
        Ok(())
    }
}

/// Tracks consecutive-cycle AC RMS changes.
#[derive(Debug, Default)]
struct SettleTracker {
    previous: Option<f64>,
    hold: usize,
}

impl SettleTracker {
    /// Feeds one cycle of displacement samples; true once settled.
    fn push(&mut self, cycle: &[f64]) -> bool {
        let rms = ac_rms(cycle);
        if let Some(prev) = self.previous {
            let quiet = rms.max(prev) < SETTLE_FLOOR;
            if quiet || (rms - prev).abs() <= SETTLE_TOL * rms {
                self.hold += 1;
            } else {
                self.hold = 0;
            }
        }
        self.previous = Some(rms);
        self.hold >= SETTLE_HOLD
    }
}

fn ac_rms(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Default)]
struct Recorder {
    q: Vec<f64>,
    q_dot: Vec<f64>,
    c_out: Vec<f64>,
    i_o: Vec<f64>,
    v_load: Vec<f64>,
}

impl Recorder {
    fn with_capacity(n: usize) -> Self {
        Self {
            q: Vec::with_capacity(n),
            q_dot: Vec::with_capacity(n),
            c_out: Vec::with_capacity(n),
            i_o: Vec::with_capacity(n),
            v_load: Vec::with_capacity(n),
        }
    }

    fn record(&mut self, it: &Integrator) {
        let (c, i, v) = it.model.output_sample(it.q, it.q_dot, it.drive.v_dc);
        self.q.push(it.q);
        self.q_dot.push(it.q_dot);
        self.c_out.push(c);
        self.i_o.push(i);
        self.v_load.push(v);
    }

    fn into_trajectory(
        self,
        dt: f64,
        drive: DriveSignal,
        samples_per_cycle: usize,
        settling_index: usize,
        settled: bool,
    ) -> Trajectory {
        Trajectory {
            dt,
            q: self.q,
            q_dot: self.q_dot,
            c_out: self.c_out,
            i_o: self.i_o,
            v_load: self.v_load,
            drive,
            samples_per_cycle,
            settling_index,
            settled,
        }
    }
}

/// Integrates for `duration` at step `dt`, starting from the bias
/// equilibrium at rest.
pub fn simulate(model: &ReducedModel, drive: &DriveSignal, duration: f64, dt: f64) -> Result<Trajectory> {
    simulate_from(model, drive, duration, dt, None)
}

/// As [`simulate`], with an explicit initial `(q, q̇)`.
pub fn simulate_from(
    model: &ReducedModel,
    drive: &DriveSignal,
    duration: f64,
    dt: f64,
    initial: Option<(f64, f64)>,
) -> Result<Trajectory> {
    drive.validate()?;
    let f1 = model.natural_frequency();
    let ceiling = max_time_step(model, drive);
    if !(dt > 0.0 && dt <= ceiling * (1.0 + 1e-12)) {
        return Err(Error::invalid(
            "dt",
            format!("{dt:e} s exceeds the ceiling 1/(200·f_max) = {ceiling:e} s"),
        ));
    }
    if !(duration >= 10.0 / f1 * (1.0 - 1e-12)) {
        return Err(Error::invalid(
            "duration",
            format!("need at least 10/f1 = {:e} s", 10.0 / f1),
        ));
    }
    let (q0, v0) = match initial {
        Some(s) => s,
        None => (model.bias_equilibrium(drive)?, 0.0),
    };
    let steps = (duration / dt).round() as usize;
    let cycle_frequency = match drive.waveform {
        Waveform::Sine => drive.f_in,
        Waveform::SweptSine { .. } => f1,
    };
    let samples_per_cycle = ((1.0 / (cycle_frequency * dt)).round() as usize).max(1);

    let mut it = Integrator::new(model, drive, dt, q0, v0);
    let mut rec = Recorder::with_capacity(steps + 1);
    rec.record(&it);
    for _ in 0..steps {
        it.advance()?;
        rec.record(&it);
    }

    let mut tracker = SettleTracker::default();
    let cycles = rec.q.len() / samples_per_cycle;
    let mut settled_at = None;
    for c in 0..cycles {
        let range = c * samples_per_cycle..(c + 1) * samples_per_cycle;
        if tracker.push(&rec.q[range]) {
            settled_at = Some((c + 1) * samples_per_cycle);
            break;
        }
    }
    let len = rec.q.len();
    let (settling_index, settled) = match settled_at {
        Some(i) if i < len => (i, true),
        _ => (len.saturating_sub(samples_per_cycle.min(len)), false),
    };
    Ok(rec.into_trajectory(dt, *drive, samples_per_cycle, settling_index, settled))
}

fn check_doubler(model: &ReducedModel, drive: &DriveSignal) -> Result<()> {
    drive.validate()?;
    if drive.mode != DriveMode::Doubler {
        return Err(Error::invalid("drive.mode", "doubler run needs doubler wiring"));
    }
    if drive.waveform != Waveform::Sine {
        return Err(Error::invalid("drive.waveform", "doubler run needs a sine drive"));
    }
    let half = 0.5 * model.natural_frequency();
    if (drive.f_in - half).abs() > 0.05 * half {
        return Err(Error::invalid(
            "drive.f_in",
            format!("{:.1} Hz is not within 5% of f1/2 = {half:.1} Hz", drive.f_in),
        ));
    }
    Ok(())
}

/// Half-frequency drive in doubler wiring: integrates until the response
/// settles, then records `capture_cycles` further drive periods. The
/// trajectory's settling index marks the start of that capture.
pub fn doubler_run(model: &ReducedModel, drive: &DriveSignal, capture_cycles: usize) -> Result<Trajectory> {
    check_doubler(model, drive)?;
    run_and_capture(model, drive, capture_cycles)
}

fn run_and_capture(model: &ReducedModel, drive: &DriveSignal, capture_cycles: usize) -> Result<Trajectory> {
    let spc = samples_per_drive_period(model, drive);
    let dt = 1.0 / (drive.f_in * spc as f64);
    let q0 = model.bias_equilibrium(drive)?;
    let mut it = Integrator::new(model, drive, dt, q0, 0.0);
    let cap = settle_cap_cycles(model);
    let mut rec = Recorder::with_capacity((capture_cycles + 128) * spc);
    let mut tracker = SettleTracker::default();
    let mut settled = false;
    for _ in 0..cap {
        let start = rec.q.len();
        for _ in 0..spc {
            rec.record(&it);
            it.advance()?;
        }
        if tracker.push(&rec.q[start..]) {
            settled = true;
            break;
        }
    }
    let settling_index = rec.q.len();
    for _ in 0..capture_cycles * spc {
        rec.record(&it);
        it.advance()?;
    }
    Ok(rec.into_trajectory(dt, *drive, spc, settling_index, settled))
}

/// Steady-state response at one harmonic of the drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyState {
    /// Drive frequency, Hz.
    pub drive_frequency: f64,
    /// Measured frequency (drive harmonic), Hz.
    pub frequency: f64,
    /// Displacement amplitude, m.
    pub amplitude: f64,
    /// Phase of q against sin(2π f t), rad.
    pub phase: f64,
    /// Motional current amplitude, A.
    pub current_amplitude: f64,
    pub settled: bool,
    /// Drive cycles integrated before the measurement window.
    pub settle_cycles: usize,
}

/// Runs `drive` to steady state and measures the response at `harmonic`×f_in
/// by quadrature inner products over the last [`PHASE_CYCLES`] drive cycles.
pub fn steady_state(model: &ReducedModel, drive: &DriveSignal, harmonic: u32) -> Result<SteadyState> {
    drive.validate()?;
    if drive.waveform != Waveform::Sine {
        return Err(Error::invalid("drive.waveform", "steady state needs a sine drive"));
    }
    let spc = samples_per_drive_period(model, drive);
    let dt = 1.0 / (drive.f_in * spc as f64);
    let q0 = model.bias_equilibrium(drive)?;
    let mut it = Integrator::new(model, drive, dt, q0, 0.0);
    let cap = settle_cap_cycles(model);
    let mut tracker = SettleTracker::default();
    let mut cycle = vec![0.0; spc];
    let mut settled = false;
    let mut settle_cycles = 0;
    while settle_cycles < cap {
        for slot in cycle.iter_mut() {
            *slot = it.q;
            it.advance()?;
        }
        settle_cycles += 1;
        if tracker.push(&cycle) {
            settled = true;
            break;
        }
    }
    let f = harmonic as f64 * drive.f_in;
    let w = 2.0 * PI * f;
    let (mut qs, mut qc, mut is, mut ic) = (0.0, 0.0, 0.0, 0.0);
    let n = PHASE_CYCLES * spc;
    for _ in 0..n {
        let t = it.time();
        let (s, c) = (w * t).sin_cos();
        let (_, i, _) = model.output_sample(it.q, it.q_dot, drive.v_dc);
        qs += it.q * s;
        qc += it.q * c;
        is += i * s;
        ic += i * c;
        it.advance()?;
    }
    let scale = 2.0 / n as f64;
    let (qs, qc, is, ic) = (qs * scale, qc * scale, is * scale, ic * scale);
    Ok(SteadyState {
        drive_frequency: drive.f_in,
        frequency: f,
        amplitude: qs.hypot(qc),
        phase: qc.atan2(qs),
        current_amplitude: is.hypot(ic),
        settled,
        settle_cycles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

/// Strictly increasing grid of `n` frequencies on `[lo, hi]`.
pub fn frequency_grid(lo: f64, hi: f64, n: usize, spacing: Spacing) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            let s = i as f64 / last;
            match spacing {
                Spacing::Linear => lo + s * (hi - lo),
                Spacing::Log => lo * (hi / lo).powf(s),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyResponse {
    /// Drive frequencies, Hz, strictly increasing.
    pub frequency: Vec<f64>,
    /// Steady displacement amplitude at the measured harmonic, m.
    pub amplitude: Vec<f64>,
    /// rad
    pub phase: Vec<f64>,
    /// Motional current amplitude at the measured harmonic, A.
    pub current_amplitude: Vec<f64>,
    pub settled: Vec<bool>,
    /// 1 for resonator wiring (response at f_in), 2 for doubler (2·f_in).
    pub harmonic: u32,
}

impl FrequencyResponse {
    pub fn unsettled_count(&self) -> usize {
        self.settled.iter().filter(|s| !**s).count()
    }
}

/// Point-by-point steady-state sweep of the drive frequency. Points run in
/// parallel; each is independent and deterministic.
pub fn frequency_sweep(
    model: &ReducedModel,
    template: &DriveSignal,
    f_lo: f64,
    f_hi: f64,
    n_points: usize,
    spacing: Spacing,
) -> Result<FrequencyResponse> {
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi.is_finite()) {
        return Err(Error::invalid("sweep", "need 0 < f_lo < f_hi"));
    }
    if n_points < 2 {
        return Err(Error::invalid("sweep.n_points", "need at least 2 points"));
    }
    let harmonic = match template.mode {
        DriveMode::Resonator => 1,
        DriveMode::Doubler => 2,
    };
    let grid = frequency_grid(f_lo, f_hi, n_points, spacing);
    let points: Vec<SteadyState> = grid
        .par_iter()
        .map(|&f| {
            let drive = DriveSignal {
                f_in: f,
                waveform: Waveform::Sine,
                ..*template
            };
            steady_state(model, &drive, harmonic)
        })
        .collect::<Result<_>>()?;
    Ok(FrequencyResponse {
        frequency: grid,
        amplitude: points.iter().map(|p| p.amplitude).collect(),
        phase: points.iter().map(|p| p.phase).collect(),
        current_amplitude: points.iter().map(|p| p.current_amplitude).collect(),
        settled: points.iter().map(|p| p.settled).collect(),
        harmonic,
    })
}
