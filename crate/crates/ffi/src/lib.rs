//! C ABI over the `memsd` simulator.
//!
//! Devices and sweep results are opaque heap handles created by
//! `memsd_*_from_*` / `memsd_device_sweep` and released with the matching
//! `*_free`. Every call returns a [`MemsdStatus`]; on failure a message for
//! the calling thread is available from [`memsd_last_error_message`].
//! Panics never cross the boundary: they are caught and reported as
//! `MEMSD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use memsd::device::{self, DeviceConfig};
use memsd::electrostatics::{DriveMode, DriveSignal};
use memsd::modal::{fem_modal, natural_frequency};
use memsd::rom::{Port, ReducedModel};
use memsd::spectral::{self, Window};
use memsd::transient::{self, FrequencyResponse, Spacing};
use memsd::{harness, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemsdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument or configuration violates a documented constraint.
    InvalidArgument = 3,
    UnknownPreset = 4,
    /// No stable equilibrium: the voltage exceeds pull-in.
    PullIn = 5,
    /// The beam reached an electrode.
    Overclosure = 6,
    /// A numerical procedure failed to converge.
    Numerical = 7,
    /// Spectral or resonance analysis could not produce a result.
    Analysis = 8,
    /// A caller buffer is shorter than the data.
    BufferTooSmall = 9,
    Io = 10,
    /// Internal panic, caught at the boundary.
    Panic = 11,
}

/// Which electrode gap a query refers to.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemsdPort {
    Input = 0,
    Output = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemsdSpacing {
    Linear = 0,
    Log = 1,
}

/// Summary of a half-frequency doubler run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MemsdDoublingResult {
    /// Drive frequency used, Hz.
    pub f_in: f64,
    /// Largest component of the output current spectrum, Hz.
    pub dominant_frequency: f64,
    /// FFT bin width, Hz.
    pub bin_width: f64,
    /// Output current amplitude at 2·f_in, A.
    pub output_amplitude: f64,
    /// Level of the f_in component relative to the largest, dB.
    pub fundamental_db: f64,
    /// 1 if the response settled before the capture.
    pub settled: i32,
}

/// Resonance fit of a sweep.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MemsdResonanceFit {
    pub peak_frequency: f64,
    pub peak_amplitude: f64,
    pub bandwidth: f64,
    pub q: f64,
    pub zeta: f64,
}

/// Opaque device handle.
pub struct MemsdDevice {
    config: DeviceConfig,
    model: ReducedModel,
}

/// Opaque swept-response handle.
pub struct MemsdSweep {
    response: FrequencyResponse,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn status_of(e: &Error) -> MemsdStatus {
    match e {
        Error::Invalid { .. } | Error::Json(_) => MemsdStatus::InvalidArgument,
        Error::UnknownPreset(_) => MemsdStatus::UnknownPreset,
        Error::PullIn { .. } | Error::BracketFailure { .. } => MemsdStatus::PullIn,
        Error::Overclosure { .. } | Error::TransientOverclosure { .. } | Error::DriveTooLarge { .. } => {
            MemsdStatus::Overclosure
        }
        Error::Quadrature { .. } | Error::EigenNonConvergence { .. } | Error::SingularMass | Error::NonFinite(_) => {
            MemsdStatus::Numerical
        }
        Error::NoPeak | Error::HalfPowerOutOfBand { .. } | Error::BeyondNyquist { .. } => MemsdStatus::Analysis,
        Error::Io { .. } | Error::Csv(_) => MemsdStatus::Io,
    }
}

struct Fail(MemsdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: MemsdStatus, message: &str) -> Result<T, Fail> {
    Err(Fail(status, message.to_string()))
}

// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MemsdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            MemsdStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(&format!("internal panic: {message}"));
            MemsdStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return fail(MemsdStatus::NullPointer, &format!("{what} is null"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(MemsdStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn device_ref<'a>(d: *const MemsdDevice) -> Result<&'a MemsdDevice, Fail> {
    d.as_ref()
        .ok_or_else(|| Fail(MemsdStatus::NullPointer, "device handle is null".into()))
}

unsafe fn sweep_ref<'a>(s: *const MemsdSweep) -> Result<&'a MemsdSweep, Fail> {
    s.as_ref()
        .ok_or_else(|| Fail(MemsdStatus::NullPointer, "sweep handle is null".into()))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(MemsdStatus::NullPointer, format!("{what} is null")))
}

fn new_device(config: DeviceConfig) -> Result<Box<MemsdDevice>, Fail> {
    let model = ReducedModel::new(&config)?;
    Ok(Box::new(MemsdDevice { config, model }))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn memsd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next `memsd_*` call on the same thread.
#[no_mangle]
pub extern "C" fn memsd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a device from a built-in preset name (`"beam-1MHz"`,
/// `"beam-455kHz"`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn memsd_device_from_preset(name: *const c_char, out: *mut *mut MemsdDevice) -> MemsdStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let name = read_str(name, "name")?;
        *out = Box::into_raw(new_device(device::preset(name)?)?);
        Ok(())
    })
}

/// Creates a device from a JSON device configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn memsd_device_from_json(json: *const c_char, out: *mut *mut MemsdDevice) -> MemsdStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let json = read_str(json, "json")?;
        *out = Box::into_raw(new_device(DeviceConfig::from_json(json)?)?);
        Ok(())
    })
}

/// Releases a device. Null is ignored.
///
/// # Safety
/// `device` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn memsd_device_free(device: *mut MemsdDevice) {
    if !device.is_null() {
        drop(Box::from_raw(device));
    }
}

/// Analytic natural frequency of mode `mode` (1-based), Hz.
///
/// # Safety
/// `device` must be a live handle; `out_hz` must be writable.
#[no_mangle]
pub unsafe extern "C" fn memsd_device_natural_frequency(
    device: *const MemsdDevice,
    mode: u32,
    out_hz: *mut f64,
) -> MemsdStatus {
    guard(|| {
        let d = device_ref(device)?;
        let out = out_ref(out_hz, "out_hz")?;
        if mode == 0 {
            return fail(MemsdStatus::InvalidArgument, "mode index is 1-based");
        }
        *out = natural_frequency(mode as usize, &d.config.beam, &d.config.material);
        Ok(())
    })
}

/// First-mode frequency from an `elements`-element FE model, Hz.
///
/// # Safety
/// `device` must be a live handle; `out_hz` must be writable.
#[no_mangle]
pub unsafe extern "C" fn memsd_device_fem_frequency(
    device: *const MemsdDevice,
    elements: u32,
    out_hz: *mut f64,
) -> MemsdStatus {
    guard(|| {
        let d = device_ref(device)?;
        let out = out_ref(out_hz, "out_hz")?;
        let fem = fem_modal(&d.config.beam, &d.config.material, elements as usize, 1)?;
        *out = fem.modes[0].frequency;
        Ok(())
    })
}

/// Pull-in voltage with a voltage on one gap only, V.
///
/// # Safety
/// `device` must be a live handle; `out_volts` must be writable.
#[no_mangle]
pub unsafe extern "C" fn memsd_device_pull_in_voltage(
    device: *const MemsdDevice,
    port: MemsdPort,
    out_volts: *mut f64,
) -> MemsdStatus {
    guard(|| {
        let d = device_ref(device)?;
        let out = out_ref(out_volts, "out_volts")?;
        let port = match port {
            MemsdPort::Input => Port::Input,
            MemsdPort::Output => Port::Output,
        };
        *out = d.model.pull_in_voltage(port)?;
        Ok(())
    })
}

/// Doubler-wired run at `f_in` (Hz; pass 0 for f₁/2) capturing
/// `fft_size` samples (a power of two; 0 for 32768) of steady output
/// current, analysed with a Hann window.
///
/// # Safety
/// `device` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn memsd_device_double(
    device: *const MemsdDevice,
    v_dc: f64,
    v_amp: f64,
    f_in: f64,
    fft_size: u32,
    out: *mut MemsdDoublingResult,
) -> MemsdStatus {
    guard(|| {
        let d = device_ref(device)?;
        let out = out_ref(out, "out")?;
        let f_in = if f_in == 0.0 {
            0.5 * d.model.natural_frequency()
        } else {
            f_in
        };
        let fft_size = if fft_size == 0 { 1 << 15 } else { fft_size as usize };
        if !fft_size.is_power_of_two() || fft_size < spectral::MIN_SAMPLES {
            return fail(MemsdStatus::InvalidArgument, "fft_size must be a power of two >= 16");
        }
        let drive = DriveSignal::sine(DriveMode::Doubler, v_dc, v_amp, f_in);
        let spc = transient::samples_per_drive_period(&d.model, &drive);
        let tr = harness::doubler_trajectory(&d.model, &drive, fft_size.div_ceil(spc))?;
        let steady = tr.steady_range();
        let take = steady.len().min(fft_size);
        let s = spectral::amplitude_spectrum(
            &tr.i_o[steady.start..steady.start + take],
            tr.dt,
            Window::Hann,
            Some(fft_size),
        )?;
        let purity = spectral::purity_report(&s, f_in, 2)?;
        *out = MemsdDoublingResult {
            f_in,
            dominant_frequency: s.dominant_frequency()?,
            bin_width: s.bin_width,
            output_amplitude: purity[1].amplitude,
            fundamental_db: purity[0].db,
            settled: tr.settled as i32,
        };
        Ok(())
    })
}

/// Resonator-wired steady-state sweep of `n_points` drive frequencies on
/// `[f_lo, f_hi]` Hz.
///
/// # Safety
/// `device` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn memsd_device_sweep(
    device: *const MemsdDevice,
    v_dc: f64,
    v_amp: f64,
    f_lo: f64,
    f_hi: f64,
    n_points: u32,
    spacing: MemsdSpacing,
    out: *mut *mut MemsdSweep,
) -> MemsdStatus {
    guard(|| {
        let d = device_ref(device)?;
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let template = DriveSignal::sine(DriveMode::Resonator, v_dc, v_amp, f_lo);
        let spacing = match spacing {
            MemsdSpacing::Linear => Spacing::Linear,
            MemsdSpacing::Log => Spacing::Log,
        };
        let response = transient::frequency_sweep(&d.model, &template, f_lo, f_hi, n_points as usize, spacing)?;
        *out = Box::into_raw(Box::new(MemsdSweep { response }));
        Ok(())
    })
}

/// Number of frequency points in a sweep (0 for null).
///
/// # Safety
/// `sweep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn memsd_sweep_len(sweep: *const MemsdSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.response.frequency.len())
}

/// Copies the sweep columns into caller buffers of `capacity` elements.
/// Any column pointer may be null to skip it.
///
/// # Safety
/// `sweep` must be a live handle; non-null buffers must hold `capacity`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn memsd_sweep_copy(
    sweep: *const MemsdSweep,
    frequency: *mut f64,
    amplitude: *mut f64,
    phase: *mut f64,
    current_amplitude: *mut f64,
    capacity: usize,
) -> MemsdStatus {
    guard(|| {
        let r = &sweep_ref(sweep)?.response;
        let n = r.frequency.len();
        if capacity < n {
            return fail(
                MemsdStatus::BufferTooSmall,
                &format!("capacity {capacity} < {n} sweep points"),
            );
        }
        for (dst, src) in [
            (frequency, &r.frequency),
            (amplitude, &r.amplitude),
            (phase, &r.phase),
            (current_amplitude, &r.current_amplitude),
        ] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), dst, n);
            }
        }
        Ok(())
    })
}

/// Number of sweep points that did not settle before measurement.
///
/// # Safety
/// `sweep` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn memsd_sweep_unsettled(sweep: *const MemsdSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.response.unsettled_count())
}

/// Half-power resonance fit of the swept displacement amplitude.
///
/// # Safety
/// `sweep` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn memsd_sweep_fit(sweep: *const MemsdSweep, out: *mut MemsdResonanceFit) -> MemsdStatus {
    guard(|| {
        let r = &sweep_ref(sweep)?.response;
        let out = out_ref(out, "out")?;
        let f = spectral::resonance_fit_response(r)?;
        *out = MemsdResonanceFit {
            peak_frequency: f.peak_frequency,
            peak_amplitude: f.peak_amplitude,
            bandwidth: f.bandwidth,
            q: f.q,
            zeta: f.zeta,
        };
        Ok(())
    })
}

/// Releases a sweep. Null is ignored.
///
/// # Safety
/// `sweep` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn memsd_sweep_free(sweep: *mut MemsdSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}
