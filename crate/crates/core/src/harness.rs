//! Scenario-driven pipelines behind the CLI.
//!
//! A [`Scenario`] names a device, a drive and analysis settings. Each stage
//! (`modal`, `sweep`, `double`, `pullin`) writes its tables under
//! `<output root>/<scenario name>/` and returns a [`RunReport`] holding
//! summaries and named pass/fail checks. [`run_report`] runs every stage for
//! a list of scenarios and condenses them into one comparison table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{self, Damping, DeviceConfig};
use crate::electrostatics::{self, DeflectionProfile, DriveMode, DriveSignal, Transducer};
use crate::error::{Error, Result};
use crate::io::{self, Format};
use crate::modal::{fem_modal, wavenumber, ModeShape};
use crate::rom::{Port, ReducedModel};
use crate::spectral::{self, PurityLine, ResonanceFit, Window};
use crate::transient::{self, Spacing, Trajectory};

pub const DEFAULT_V_DC: f64 = 10.0;
pub const DEFAULT_V_AMP: f64 = 5.0;
pub const DEFAULT_SWEEP_V_AMP: f64 = 0.5;
pub const DEFAULT_SWEEP_POINTS: usize = 101;
/// Default sweep band as fractions of the model f₁.
pub const DEFAULT_SWEEP_BAND: (f64, f64) = (0.88, 1.10);
pub const DEFAULT_FFT_SIZE: usize = 1 << 15;
pub const DEFAULT_HARMONICS: usize = 4;
pub const DEFAULT_FEM_ELEMENTS: usize = 32;
pub const DEFAULT_SHAPE_POINTS: usize = 201;
/// Output root when neither a flag, the scenario nor `MEMSD_OUT` sets one.
pub const DEFAULT_OUTPUT_ROOT: &str = "memsd-out";

pub const DESIGN_TOL: f64 = 5e-3;
pub const FE_TOL: f64 = 1e-3;
pub const Q_TOL: f64 = 0.02;
pub const ZETA_TOL: f64 = 1e-4;
pub const SWEEP_PEAK_TOL: f64 = 5e-3;
pub const PURITY_DB: f64 = -40.0;
pub const PULL_IN_ORACLE_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DeviceSpec {
    Preset(String),
    Inline(DeviceConfig),
}

/// Drive settings. Unset values take stage defaults: f_in becomes f₁/2 for
/// doubling; the wiring follows the stage unless pinned here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<DriveMode>,
    #[serde(default = "default_v_dc")]
    pub v_dc: f64,
    #[serde(default = "default_v_amp")]
    pub v_amp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_in: Option<f64>,
}

fn default_v_dc() -> f64 {
    DEFAULT_V_DC
}
fn default_v_amp() -> f64 {
    DEFAULT_V_AMP
}

impl Default for DriveSettings {
    fn default() -> Self {
        Self {
            mode: None,
            v_dc: DEFAULT_V_DC,
            v_amp: DEFAULT_V_AMP,
            f_in: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    /// Hz; defaults to 0.88·f₁.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_lo: Option<f64>,
    /// Hz; defaults to 1.10·f₁.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_hi: Option<f64>,
    #[serde(default = "default_sweep_points")]
    pub n_points: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
    /// Small-signal AC amplitude for the sweep, V.
    #[serde(default = "default_sweep_v_amp")]
    pub v_amp: f64,
}

fn default_sweep_points() -> usize {
    DEFAULT_SWEEP_POINTS
}
fn default_spacing() -> Spacing {
    Spacing::Linear
}
fn default_sweep_v_amp() -> f64 {
    DEFAULT_SWEEP_V_AMP
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            f_lo: None,
            f_hi: None,
            n_points: DEFAULT_SWEEP_POINTS,
            spacing: Spacing::Linear,
            v_amp: DEFAULT_SWEEP_V_AMP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    #[serde(default)]
    pub sweep: SweepSettings,
    /// Post-settling drive periods captured; default fills `fft_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_cycles: Option<usize>,
    #[serde(default = "default_fft_size")]
    pub fft_size: usize,
    /// Components listed in the purity report (f_in, 2f_in, …).
    #[serde(default = "default_harmonics")]
    pub harmonics: usize,
    #[serde(default = "default_fem_elements")]
    pub fem_elements: usize,
    #[serde(default = "default_window")]
    pub window: Window,
    #[serde(default = "default_shape_points")]
    pub mode_shape_points: usize,
}

fn default_fft_size() -> usize {
    DEFAULT_FFT_SIZE
}
fn default_harmonics() -> usize {
    DEFAULT_HARMONICS
}
fn default_fem_elements() -> usize {
    DEFAULT_FEM_ELEMENTS
}
fn default_window() -> Window {
    Window::Hann
}
fn default_shape_points() -> usize {
    DEFAULT_SHAPE_POINTS
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            sweep: SweepSettings::default(),
            capture_cycles: None,
            fft_size: DEFAULT_FFT_SIZE,
            harmonics: DEFAULT_HARMONICS,
            fem_elements: DEFAULT_FEM_ELEMENTS,
            window: Window::Hann,
            mode_shape_points: DEFAULT_SHAPE_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub device: DeviceSpec,
    #[serde(default)]
    pub drive: DriveSettings,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Scenario {
    /// Default scenario for a built-in preset, named after it.
    pub fn from_preset(name: &str) -> Result<Self> {
        device::preset(name)?;
        Ok(Self {
            name: name.to_string(),
            device: DeviceSpec::Preset(name.to_string()),
            drive: DriveSettings::default(),
            analysis: Analysis::default(),
            output_dir: None,
        })
    }

    /// One scenario object or an array of them.
    pub fn parse_list(json: &str) -> Result<Vec<Self>> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        if value.is_array() {
            Ok(serde_json::from_value(value)?)
        } else {
            Ok(vec![serde_json::from_value(value)?])
        }
    }

    pub fn load(path: &Path) -> Result<Vec<Self>> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_list(&text)
    }

    pub fn device_config(&self) -> Result<DeviceConfig> {
        let cfg = match &self.device {
            DeviceSpec::Preset(name) => device::preset(name)?,
            DeviceSpec::Inline(cfg) => *cfg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset_name(&self) -> Option<&str> {
        match &self.device {
            DeviceSpec::Preset(name) => Some(name),
            DeviceSpec::Inline(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_name = !self.name.is_empty()
            && self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            && !self.name.starts_with('.');
        if !ok_name {
            return Err(Error::invalid(
                "name",
                format!(
                    "`{}` must be non-empty ASCII letters, digits, '-', '_' or '.'",
                    self.name
                ),
            ));
        }
        self.device_config()?;
        let d = &self.drive;
        if !(d.v_dc.is_finite() && d.v_dc >= 0.0) {
            return Err(Error::invalid("drive.v_dc", "must be finite and >= 0"));
        }
        if !(d.v_amp.is_finite() && d.v_amp >= 0.0) {
            return Err(Error::invalid("drive.v_amp", "must be finite and >= 0"));
        }
        if let Some(f) = d.f_in {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::invalid("drive.f_in", "must be finite and > 0"));
            }
        }
        let a = &self.analysis;
        if a.sweep.n_points < 2 {
            return Err(Error::invalid("analysis.sweep.n_points", "need at least 2"));
        }
        if !(a.sweep.v_amp.is_finite() && a.sweep.v_amp >= 0.0) {
            return Err(Error::invalid("analysis.sweep.v_amp", "must be finite and >= 0"));
        }
        if let (Some(lo), Some(hi)) = (a.sweep.f_lo, a.sweep.f_hi) {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::invalid("analysis.sweep", "need 0 < f_lo < f_hi"));
            }
        }
        if !a.fft_size.is_power_of_two() || a.fft_size < spectral::MIN_SAMPLES {
            return Err(Error::invalid("analysis.fft_size", "must be a power of two >= 16"));
        }
        if a.harmonics == 0 {
            return Err(Error::invalid("analysis.harmonics", "need at least 1"));
        }
        if a.capture_cycles == Some(0) {
            return Err(Error::invalid("analysis.capture_cycles", "need at least 1"));
        }
        if a.fem_elements < 3 {
            return Err(Error::invalid("analysis.fem_elements", "need at least 3"));
        }
        if a.mode_shape_points < 2 {
            return Err(Error::invalid("analysis.mode_shape_points", "need at least 2"));
        }
        Ok(())
    }

    /// Directory this scenario writes to under `root`.
    pub fn directory(&self, root: &Path) -> PathBuf {
        root.join(&self.name)
    }
}

/// Bench values reported for fabricated devices of a preset geometry. They
/// carry an air-film frequency shift the model leaves out, so they are
/// printed for comparison only and never checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchReference {
    /// Design first-mode frequency, Hz.
    pub designed_f1: f64,
    /// Peak of the measured broadband response, Hz.
    pub measured_response_peak: f64,
    /// Measured doubled output frequency on three dies, Hz.
    pub measured_doubled_output: [f64; 3],
    pub note: &'static str,
}

const UNMODELED: &str = "unmodeled squeeze-film shift";

pub fn bench_reference(preset: &str) -> Option<BenchReference> {
    match preset {
        "beam-455kHz" => Some(BenchReference {
            designed_f1: 455e3,
            measured_response_peak: 435e3,
            measured_doubled_output: [454e3, 454e3, 453e3],
            note: UNMODELED,
        }),
        "beam-1MHz" => Some(BenchReference {
            designed_f1: 1e6,
            measured_response_peak: 960e3,
            measured_doubled_output: [960e3, 957e3, 959e3],
            note: UNMODELED,
        }),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub criterion: String,
    pub passed: bool,
    /// Unasserted checks are warnings: they mark a run degraded, not failed.
    pub asserted: bool,
    pub detail: String,
}

impl Check {
    fn new(criterion: &str, passed: bool, detail: String) -> Self {
        Self {
            criterion: criterion.to_string(),
            passed,
            asserted: true,
            detail,
        }
    }

    fn warning(criterion: &str, passed: bool, detail: String) -> Self {
        Self {
            asserted: false,
            ..Self::new(criterion, passed, detail)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticMode {
    pub mode: usize,
    pub wavenumber: f64,
    /// Hz
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalSummary {
    pub analytic: Vec<AnalyticMode>,
    pub fem_elements: usize,
    /// Hz
    pub fem_f1: f64,
    /// (FE − analytic) / analytic for f₁.
    pub fem_relative_difference: f64,
    pub fem_backward_error: f64,
    /// kg
    pub modal_mass: f64,
    /// N/m
    pub modal_stiffness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub f_lo: f64,
    pub f_hi: f64,
    pub n_points: usize,
    pub v_dc: f64,
    pub v_amp: f64,
    pub unsettled_points: usize,
    pub fit: ResonanceFit,
    /// Damped peak the model predicts with bias softening, Hz.
    pub model_peak: f64,
    pub configured_q: f64,
    pub configured_zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublingSummary {
    pub f_in: f64,
    pub v_dc: f64,
    pub v_amp: f64,
    /// s
    pub dt: f64,
    pub samples_per_cycle: usize,
    pub settled: bool,
    pub settle_cycles: usize,
    pub capture_samples: usize,
    pub fft_size: usize,
    /// Hz
    pub bin_width: f64,
    /// Largest output-current component, Hz.
    pub dominant_frequency: f64,
    /// Largest displacement component, Hz.
    pub displacement_dominant_frequency: f64,
    /// Output current amplitude at 2·f_in, A.
    pub output_amplitude: f64,
    pub purity: Vec<PurityLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PullInSummary {
    /// V across the input gap alone.
    pub input_port: f64,
    /// V across the output gap alone.
    pub output_port: f64,
    pub v_dc: f64,
    /// Output-gap pull-in over the bias.
    pub bias_margin: f64,
    /// Rigid-plate pull-in of the output electrode, solver and closed form, V.
    pub rigid_plate: f64,
    pub rigid_plate_closed_form: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: Scenario,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<BenchReference>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modal: Option<ModalSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doubling: Option<DoublingSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pull_in: Option<PullInSummary>,
    pub checks: Vec<Check>,
    pub timings: Vec<Timing>,
    /// Files written, relative to the scenario directory.
    pub files: Vec<String>,
}

impl RunReport {
    fn new(scenario: &Scenario) -> Self {
        Self {
            scenario: scenario.clone(),
            reference: scenario.preset_name().and_then(bench_reference),
            modal: None,
            sweep: None,
            doubling: None,
            pull_in: None,
            checks: Vec::new(),
            timings: Vec::new(),
            files: Vec::new(),
        }
    }

    /// All asserted checks pass.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.asserted)
    }

    /// Failed warnings, if any.
    pub fn degradations(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed && !c.asserted).collect()
    }

    /// Writes `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("report.json");
        io::write_json(&path, self)?;
        Ok(path)
    }
}

struct Stage<'a> {
    scenario: &'a Scenario,
    config: DeviceConfig,
    model: ReducedModel,
    dir: PathBuf,
    format: Format,
    report: RunReport,
}

impl<'a> Stage<'a> {
    fn prepare(scenario: &'a Scenario, root: &Path, format: Format) -> Result<Self> {
        scenario.validate()?;
        let config = scenario.device_config()?;
        let model = ReducedModel::new(&config)?;
        let dir = scenario.directory(root);
        std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            scenario,
            config,
            model,
            dir,
            format,
            report: RunReport::new(scenario),
        })
    }

    fn write(&mut self, table: &io::Table, stem: &str) -> Result<()> {
        let path = table.write(&self.dir, stem, self.format)?;
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        self.report.files.push(name);
        Ok(())
    }

    fn time(&mut self, stage: &str, start: Instant) {
        self.report.timings.push(Timing {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    fn wiring(&self, wanted: DriveMode, stage: &str) -> Result<()> {
        match self.scenario.drive.mode {
            Some(m) if m != wanted => Err(Error::invalid(
                "drive.mode",
                format!("the {stage} stage needs {wanted:?} wiring, scenario pins {m:?}"),
            )),
            _ => Ok(()),
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn modal_stage(st: &mut Stage) -> Result<()> {
    let start = Instant::now();
    let beam = st.config.beam;
    let material = st.config.material;
    let analytic: Vec<AnalyticMode> = (1..=3)
        .map(|n| AnalyticMode {
            mode: n,
            wavenumber: wavenumber(n),
            frequency: crate::modal::natural_frequency(n, &beam, &material),
        })
        .collect();
    let f1 = analytic[0].frequency;
    let elements = st.scenario.analysis.fem_elements;
    let fem = fem_modal(&beam, &material, elements, 1)?;
    let fe = &fem.modes[0];
    let diff = (fe.frequency - f1) / f1;
    st.report.checks.push(Check::new(
        "fe-agreement",
        diff.abs() <= FE_TOL,
        format!(
            "{elements}-element FE f1 {:.3} Hz vs analytic {f1:.3} Hz ({:+.2e})",
            fe.frequency, diff
        ),
    ));
    if let Some(reference) = st.report.reference {
        let err = rel(f1, reference.designed_f1);
        st.report.checks.push(Check::new(
            "design-frequency",
            err <= DESIGN_TOL,
            format!(
                "analytic f1 {f1:.1} Hz vs design {:.1} Hz ({err:.2e})",
                reference.designed_f1
            ),
        ));
    }
    for n in 1..=3 {
        let shape = ModeShape::new(n, beam.length);
        let table = io::mode_shape_table(&shape, st.scenario.analysis.mode_shape_points);
        st.write(&table, &format!("mode_shape_{n}"))?;
    }
    st.write(&io::fem_table(&fem, 1), "fem_mode_1")?;
    st.report.modal = Some(ModalSummary {
        analytic,
        fem_elements: elements,
        fem_f1: fe.frequency,
        fem_relative_difference: diff,
        fem_backward_error: fe.backward_error,
        modal_mass: st.model.modal_mass(),
        modal_stiffness: st.model.modal_stiffness(),
    });
    st.time("modal", start);
    Ok(())
}

fn sweep_stage(st: &mut Stage) -> Result<()> {
    st.wiring(DriveMode::Resonator, "sweep")?;
    let start = Instant::now();
    let f1 = st.model.natural_frequency();
    let s = st.scenario.analysis.sweep;
    let f_lo = s.f_lo.unwrap_or(DEFAULT_SWEEP_BAND.0 * f1);
    let f_hi = s.f_hi.unwrap_or(DEFAULT_SWEEP_BAND.1 * f1);
    let v_dc = st.scenario.drive.v_dc;
    let template = DriveSignal::sine(DriveMode::Resonator, v_dc, s.v_amp, f_lo);
    let response = transient::frequency_sweep(&st.model, &template, f_lo, f_hi, s.n_points, s.spacing)?;
    st.write(&io::response_table(&response), "sweep_response")?;
    let fit = spectral::resonance_fit_response(&response)?;

    let k_b = st.model.biased_stiffness(&template)?;
    let zeta = st.config.damping.zeta();
    let f_b = (k_b / st.model.modal_mass()).sqrt() / (2.0 * std::f64::consts::PI);
    let model_peak = f_b * (1.0 - 2.0 * zeta * zeta).sqrt();
    let q = st.config.damping.quality_factor();

    let unsettled = response.unsettled_count();
    st.report.checks.push(Check::warning(
        "sweep-settled",
        unsettled == 0,
        format!("{unsettled} of {} sweep points unsettled", s.n_points),
    ));
    if q.is_finite() {
        let q_err = rel(fit.q, q);
        let z_err = (fit.zeta - zeta).abs();
        st.report.checks.push(Check::new(
            "q-extraction",
            q_err <= Q_TOL && z_err <= ZETA_TOL,
            format!(
                "fitted Q {:.3} (configured {q:.3}, {q_err:.2e}); ζ {:.6} (configured {zeta:.6}, Δ {z_err:.1e})",
                fit.q, fit.zeta
            ),
        ));
    }
    let peak_err = rel(fit.peak_frequency, model_peak);
    st.report.checks.push(Check::new(
        "sweep-peak",
        peak_err <= SWEEP_PEAK_TOL,
        format!(
            "fitted peak {:.1} Hz vs model {model_peak:.1} Hz ({peak_err:.2e})",
            fit.peak_frequency
        ),
    ));
    st.report.sweep = Some(SweepSummary {
        f_lo,
        f_hi,
        n_points: s.n_points,
        v_dc,
        v_amp: s.v_amp,
        unsettled_points: unsettled,
        fit,
        model_peak,
        configured_q: q,
        configured_zeta: zeta,
    });
    st.time("sweep", start);
    Ok(())
}

/// Rough largest doubler amplitude before the resonant swing reaches a
/// third of the gap, from the rigid-plate balance scaled by Q.
fn suggested_doubler_amplitude(pull_in: f64, damping: Damping) -> f64 {
    let q = damping.quality_factor().max(1.0);
    0.5 * pull_in * (4.5 / q).sqrt()
}

/// [`transient::doubler_run`], with overclosure reported as
/// [`Error::DriveTooLarge`] carrying an amplitude to retry at.
pub fn doubler_trajectory(model: &ReducedModel, drive: &DriveSignal, capture_cycles: usize) -> Result<Trajectory> {
    match transient::doubler_run(model, drive, capture_cycles) {
        Err(Error::TransientOverclosure { t, q }) => {
            let pull_in = model.pull_in_voltage(Port::Input)?;
            Err(Error::DriveTooLarge {
                t,
                q,
                pull_in,
                suggested_v_amp: suggested_doubler_amplitude(pull_in, model.config().damping),
            })
        }
        other => other,
    }
}

fn doubling_stage(st: &mut Stage) -> Result<()> {
    st.wiring(DriveMode::Doubler, "double")?;
    let start = Instant::now();
    let f1 = st.model.natural_frequency();
    let d = st.scenario.drive;
    let drive = DriveSignal::sine(DriveMode::Doubler, d.v_dc, d.v_amp, d.f_in.unwrap_or(0.5 * f1));
    let a = st.scenario.analysis;
    let spc = transient::samples_per_drive_period(&st.model, &drive);
    let nyquist = 0.5 * spc as f64 * drive.f_in;
    if a.harmonics as f64 * drive.f_in > nyquist {
        return Err(Error::invalid(
            "analysis.harmonics",
            format!("{}·f_in exceeds the Nyquist limit {nyquist:.1} Hz", a.harmonics),
        ));
    }
    if a.fft_size < 4 * spc {
        return Err(Error::invalid(
            "analysis.fft_size",
            format!("must cover at least 4 drive periods ({} samples)", 4 * spc),
        ));
    }
    let capture_cycles = a.capture_cycles.unwrap_or(a.fft_size.div_ceil(spc));
    let trajectory = doubler_trajectory(&st.model, &drive, capture_cycles)?;
    st.write(&io::trajectory_table(&trajectory), "doubler_trajectory")?;

    let steady = trajectory.steady_range();
    let take = steady.len().min(a.fft_size);
    let segment = steady.start..steady.start + take;
    let current = spectral::amplitude_spectrum(
        &trajectory.i_o[segment.clone()],
        trajectory.dt,
        a.window,
        Some(a.fft_size),
    )?;
    let displacement = spectral::amplitude_spectrum(&trajectory.q[segment], trajectory.dt, a.window, Some(a.fft_size))?;
    st.write(&io::spectrum_table(&current), "output_spectrum")?;
    let purity = spectral::purity_report(&current, drive.f_in, a.harmonics)?;
    let dominant = current.dominant_frequency()?;
    let expected = 2.0 * drive.f_in;
    let bins_off = (dominant - expected).abs() / current.bin_width;
    st.report.checks.push(Check::new(
        "doubling-lock",
        bins_off <= 1.0,
        format!("dominant output component {dominant:.1} Hz vs 2·f_in = {expected:.1} Hz ({bins_off:.2} bins)"),
    ));
    let fundamental_db = purity[0].db;
    st.report.checks.push(Check::new(
        "doubling-purity",
        fundamental_db <= PURITY_DB,
        format!("f_in component at {fundamental_db:.1} dB relative to the largest"),
    ));
    st.report.checks.push(Check::warning(
        "doubling-settled",
        trajectory.settled,
        format!("settled after {} drive cycles", trajectory.settling_index / spc),
    ));
    let output_amplitude = purity.get(1).map_or(0.0, |l| l.amplitude);
    st.report.doubling = Some(DoublingSummary {
        f_in: drive.f_in,
        v_dc: drive.v_dc,
        v_amp: drive.v_amp,
        dt: trajectory.dt,
        samples_per_cycle: spc,
        settled: trajectory.settled,
        settle_cycles: trajectory.settling_index / spc,
        capture_samples: take,
        fft_size: a.fft_size,
        bin_width: current.bin_width,
        dominant_frequency: dominant,
        displacement_dominant_frequency: displacement.dominant_frequency()?,
        output_amplitude,
        purity,
    });
    st.time("double", start);
    Ok(())
}

/// `√(8k·d0³ / (27·ε·A))`, the rigid parallel-plate pull-in voltage.
pub fn rigid_plate_pull_in(stiffness: f64, gap: f64, permittivity: f64, area: f64) -> f64 {
    (8.0 * stiffness * gap.powi(3) / (27.0 * permittivity * area)).sqrt()
}

fn pull_in_stage(st: &mut Stage) -> Result<()> {
    let start = Instant::now();
    let input = st.model.pull_in_voltage(Port::Input)?;
    let output = st.model.pull_in_voltage(Port::Output)?;
    let v_dc = st.scenario.drive.v_dc;
    let k = st.model.modal_stiffness();
    let e = st.config.output_electrode;
    let eps = st.config.material.gap_permittivity;
    let plate = Transducer::new(&e, &st.config.beam, eps, &DeflectionProfile::Uniform(1.0));
    let rigid = electrostatics::pull_in_voltage(k, &plate)?;
    let area = st.config.beam.width * (e.x_end - e.x_start);
    let closed = rigid_plate_pull_in(k, e.gap, eps, area);
    let err = rel(rigid, closed);
    st.report.checks.push(Check::new(
        "pull-in-oracle",
        err <= PULL_IN_ORACLE_TOL,
        format!("rigid-plate pull-in {rigid:.3} V vs closed form {closed:.3} V ({err:.2e})"),
    ));
    st.report.checks.push(Check::new(
        "bias-below-pull-in",
        v_dc < output,
        format!("V_dc {v_dc:.2} V vs output-gap pull-in {output:.2} V"),
    ));
    st.report.pull_in = Some(PullInSummary {
        input_port: input,
        output_port: output,
        v_dc,
        bias_margin: if v_dc > 0.0 { output / v_dc } else { f64::MAX },
        rigid_plate: rigid,
        rigid_plate_closed_form: closed,
    });
    st.time("pullin", start);
    Ok(())
}

fn run_stage(
    scenario: &Scenario,
    root: &Path,
    format: Format,
    stage: fn(&mut Stage) -> Result<()>,
) -> Result<RunReport> {
    let mut st = Stage::prepare(scenario, root, format)?;
    stage(&mut st)?;
    st.report.write(&st.dir)?;
    Ok(st.report)
}

/// Analytic f₁…f₃, FE f₁ and mode-shape tables.
pub fn run_modal(scenario: &Scenario, root: &Path, format: Format) -> Result<RunReport> {
    run_stage(scenario, root, format, modal_stage)
}

/// Resonator-wired steady-state sweep and resonance fit.
pub fn run_sweep(scenario: &Scenario, root: &Path, format: Format) -> Result<RunReport> {
    run_stage(scenario, root, format, sweep_stage)
}

/// Half-frequency doubler run, output spectrum and purity.
pub fn run_double(scenario: &Scenario, root: &Path, format: Format) -> Result<RunReport> {
    run_stage(scenario, root, format, doubling_stage)
}

/// Pull-in voltages of both gaps and the rigid-plate check.
pub fn run_pullin(scenario: &Scenario, root: &Path, format: Format) -> Result<RunReport> {
    run_stage(scenario, root, format, pull_in_stage)
}

/// Every stage for one scenario, into a single report.
pub fn run_all(scenario: &Scenario, root: &Path, format: Format) -> Result<RunReport> {
    let mut st = Stage::prepare(scenario, root, format)?;
    let stages: [fn(&mut Stage) -> Result<()>; 4] = [modal_stage, pull_in_stage, sweep_stage, doubling_stage];
    for stage in stages {
        stage(&mut st)?;
    }
    st.report.write(&st.dir)?;
    Ok(st.report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Degraded(String),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scenario: String,
    /// µm
    pub beam_length_um: Option<f64>,
    pub designed_f1: Option<f64>,
    pub model_f1: Option<f64>,
    pub fem_f1: Option<f64>,
    /// Informational; see [`BenchReference`].
    pub measured_response_peak: Option<f64>,
    pub measured_doubled_output: Option<[f64; 3]>,
    pub doubled_output: Option<f64>,
    pub doubling_verified: Option<bool>,
    pub q_fitted: Option<f64>,
    pub pull_in_margin: Option<f64>,
    pub status: RowStatus,
    /// Whether a failure came from invalid input rather than physics.
    #[serde(skip)]
    pub validation_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsolidatedReport {
    pub rows: Vec<ReportRow>,
    pub runs: Vec<RunReport>,
}

impl ConsolidatedReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| !matches!(r.status, RowStatus::Failed(_)))
    }

    /// Plain-text comparison table.
    pub fn render(&self) -> String {
        let khz = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}", v / 1e3));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>10} {:>10} {:>10} {:>10} {:>17} {:>10} {:>8} {:>7} {:>8}  status",
            "scenario",
            "L [um]",
            "design",
            "model f1",
            "FE f1",
            "meas peak",
            "meas doubled",
            "doubled",
            "doubling",
            "Q fit",
            "V_PI/Vdc"
        );
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>10} {:>10} {:>10} {:>10} {:>17} {:>10} {:>8} {:>7} {:>8}",
            "", "", "[kHz]", "[kHz]", "[kHz]", "[kHz]*", "[kHz]*", "[kHz]", "", "", ""
        );
        for r in &self.rows {
            let measured = r.measured_doubled_output.map_or("-".to_string(), |m| {
                format!("{:.0}/{:.0}/{:.0}", m[0] / 1e3, m[1] / 1e3, m[2] / 1e3)
            });
            let status = match &r.status {
                RowStatus::Ok => "ok".to_string(),
                RowStatus::Degraded(why) => format!("degraded: {why}"),
                RowStatus::Failed(why) => format!("FAILED: {why}"),
            };
            let _ = writeln!(
                out,
                "{:<16} {:>8} {:>10} {:>10} {:>10} {:>10} {:>17} {:>10} {:>8} {:>7} {:>8}  {}",
                r.scenario,
                r.beam_length_um.map_or("-".to_string(), |l| format!("{l:.2}")),
                khz(r.designed_f1),
                khz(r.model_f1),
                khz(r.fem_f1),
                khz(r.measured_response_peak),
                measured,
                khz(r.doubled_output),
                r.doubling_verified.map_or("-", |v| if v { "yes" } else { "no" }),
                r.q_fitted.map_or("-".to_string(), |q| format!("{q:.2}")),
                r.pull_in_margin.map_or("-".to_string(), |m| format!("{m:.2}")),
                status
            );
        }
        let _ = writeln!(
            out,
            "* bench measurements, informational only: they include a squeeze-film shift the model does not represent"
        );
        out
    }
}

fn row_for(scenario: &Scenario, outcome: &Result<RunReport>) -> ReportRow {
    let length = scenario.device_config().ok().map(|c| c.beam.length * 1e6);
    let reference = scenario.preset_name().and_then(bench_reference);
    let mut row = ReportRow {
        scenario: scenario.name.clone(),
        beam_length_um: length,
        designed_f1: reference.map(|r| r.designed_f1),
        model_f1: None,
        fem_f1: None,
        measured_response_peak: reference.map(|r| r.measured_response_peak),
        measured_doubled_output: reference.map(|r| r.measured_doubled_output),
        doubled_output: None,
        doubling_verified: None,
        q_fitted: None,
        pull_in_margin: None,
        status: RowStatus::Ok,
        validation_failure: false,
    };
    match outcome {
        Err(e) => {
            row.status = RowStatus::Failed(e.to_string());
            row.validation_failure = e.is_validation();
        }
        Ok(report) => {
            row.model_f1 = report.modal.as_ref().map(|m| m.analytic[0].frequency);
            row.fem_f1 = report.modal.as_ref().map(|m| m.fem_f1);
            row.q_fitted = report.sweep.as_ref().map(|s| s.fit.q);
            row.pull_in_margin = report.pull_in.as_ref().map(|p| p.bias_margin);
            row.doubled_output = report.doubling.as_ref().map(|d| d.dominant_frequency);
            row.doubling_verified = report.doubling.as_ref().map(|_| {
                report
                    .checks
                    .iter()
                    .filter(|c| c.criterion.starts_with("doubling-") && c.asserted)
                    .all(|c| c.passed)
            });
            let failed: Vec<&str> = report
                .checks
                .iter()
                .filter(|c| c.asserted && !c.passed)
                .map(|c| c.criterion.as_str())
                .collect();
            let degraded = report.degradations();
            row.status = if !failed.is_empty() {
                RowStatus::Failed(format!("checks failed: {}", failed.join(", ")))
            } else if !degraded.is_empty() {
                RowStatus::Degraded(
                    degraded
                        .iter()
                        .map(|c| c.detail.as_str())
                        .collect::<Vec<_>>()
                        .join("; "),
                )
            } else {
                RowStatus::Ok
            };
        }
    }
    row
}

/// All stages for every scenario; scenarios run concurrently, each into its
/// own directory. A failing scenario marks its row and leaves the others
/// running. Writes `report.json` and `report.txt` under `root`.
pub fn run_report(scenarios: &[Scenario], root: &Path, format: Format) -> Result<ConsolidatedReport> {
    if scenarios.is_empty() {
        return Err(Error::invalid("scenarios", "empty scenario list"));
    }
    let mut names: Vec<&str> = scenarios.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invalid(
            "scenarios",
            format!("duplicate scenario name `{}`", w[0]),
        ));
    }
    std::fs::create_dir_all(root).map_err(|source| Error::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let outcomes: Vec<Result<RunReport>> = scenarios.par_iter().map(|s| run_all(s, root, format)).collect();
    let rows = scenarios.iter().zip(&outcomes).map(|(s, o)| row_for(s, o)).collect();
    let report = ConsolidatedReport {
        rows,
        runs: outcomes.into_iter().filter_map(|o| o.ok()).collect(),
    };
    io::write_json(&root.join("report.json"), &report)?;
    let text = root.join("report.txt");
    std::fs::write(&text, report.render()).map_err(|source| Error::Io { path: text, source })?;
    Ok(report)
}
