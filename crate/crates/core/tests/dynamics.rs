//! System-level behaviour of the reduced-order model: swept responses,
//! doubling across drive levels and resonator-mode spectra.

use memsd::device::{self, Damping};
use memsd::electrostatics::{DriveMode, DriveSignal};
use memsd::harness::{self, Scenario};
use memsd::io::Format;
use memsd::rom::ReducedModel;
use memsd::spectral::{self, Window};
use memsd::transient::{self, Spacing};
use memsd::Error;

const ZETA: f64 = 0.0125;

fn model(name: &str) -> ReducedModel {
    let mut cfg = device::preset(name).unwrap();
    cfg.damping = Damping::Zeta(ZETA);
    ReducedModel::new(&cfg).unwrap()
}

// Linear SDOF magnitude at r = f/fₙ.
fn sdof_gain(r: f64) -> f64 {
    1.0 / ((1.0 - r * r).powi(2) + (2.0 * ZETA * r).powi(2)).sqrt()
}

#[test]
fn small_signal_sweep_peaks_at_damped_resonance() {
    let m = model("beam-455kHz");
    let f1 = m.natural_frequency();
    // V_dc = 1 V keeps the electrostatic softening far below one grid step.
    let template = DriveSignal::sine(DriveMode::Resonator, 1.0, 0.1, f1);
    let r = transient::frequency_sweep(&m, &template, 0.88 * f1, 1.10 * f1, 101, Spacing::Linear).unwrap();
    let step = r.frequency[1] - r.frequency[0];
    let fit = spectral::resonance_fit_response(&r).unwrap();
    let expected = f1 * (1.0 - 2.0 * ZETA * ZETA).sqrt();
    assert!(
        (fit.peak_frequency - expected).abs() <= step,
        "{} vs {expected}",
        fit.peak_frequency
    );
    assert_eq!(r.unsettled_count(), 0);
}

#[test]
fn off_resonance_gain_matches_transfer_function() {
    let m = model("beam-455kHz");
    let f1 = m.natural_frequency();
    let amp = |f: f64| {
        let drive = DriveSignal::sine(DriveMode::Resonator, 1.0, 0.1, f);
        transient::steady_state(&m, &drive, 1).unwrap().amplitude
    };
    let peak_r = (1.0 - 2.0 * ZETA * ZETA).sqrt();
    let peak = amp(peak_r * f1);
    for r in [0.5, 2.0] {
        let measured = amp(r * f1) / peak;
        let expected = sdof_gain(r) / sdof_gain(peak_r);
        assert!(
            (measured / expected - 1.0).abs() < 0.02,
            "r = {r}: {measured} vs {expected}"
        );
    }
}

#[test]
fn doubler_sweep_peaks_at_half_resonance() {
    let m = model("beam-1MHz");
    let f1 = m.natural_frequency();
    let template = DriveSignal::sine(DriveMode::Doubler, 10.0, 2.0, 0.5 * f1);
    let r = transient::frequency_sweep(&m, &template, 0.47 * f1, 0.53 * f1, 61, Spacing::Linear).unwrap();
    assert_eq!(r.harmonic, 2);
    let step = r.frequency[1] - r.frequency[0];
    let imax = (0..r.amplitude.len())
        .max_by(|&a, &b| r.amplitude[a].total_cmp(&r.amplitude[b]))
        .unwrap();
    assert!(
        (r.frequency[imax] - 0.5 * f1).abs() <= step,
        "{} vs {}",
        r.frequency[imax],
        0.5 * f1
    );

    // The output spectrum of a run at the swept peak agrees.
    let drive = DriveSignal::sine(DriveMode::Doubler, 10.0, 2.0, r.frequency[imax]);
    let spc = transient::samples_per_drive_period(&m, &drive);
    let tr = harness::doubler_trajectory(&m, &drive, 64).unwrap();
    let steady = tr.steady_range();
    let s = spectral::amplitude_spectrum(
        &tr.i_o[steady.start..steady.start + 64 * spc],
        tr.dt,
        Window::Hann,
        None,
    )
    .unwrap();
    assert!((s.dominant_frequency().unwrap() - 2.0 * r.frequency[imax]).abs() <= s.bin_width);
}

#[test]
fn doubling_holds_across_drive_levels_with_square_law_output() {
    let m = model("beam-455kHz");
    let f_in = 0.5 * m.natural_frequency();
    let fft_size = 1 << 15;
    let mut output = Vec::new();
    for v_amp in [0.5, 1.0, 2.0, 5.0, 10.0] {
        let drive = DriveSignal::sine(DriveMode::Doubler, 10.0, v_amp, f_in);
        let spc = transient::samples_per_drive_period(&m, &drive);
        let tr = harness::doubler_trajectory(&m, &drive, fft_size / spc).unwrap();
        let steady = tr.steady_range();
        let s = spectral::amplitude_spectrum(
            &tr.i_o[steady.start..steady.start + fft_size],
            tr.dt,
            Window::Hann,
            None,
        )
        .unwrap();
        assert!(
            (s.dominant_frequency().unwrap() - 2.0 * f_in).abs() <= s.bin_width,
            "v_amp = {v_amp}"
        );
        let purity = spectral::purity_report(&s, f_in, 2).unwrap();
        assert!(purity[0].db <= -40.0, "v_amp = {v_amp}: {}", purity[0].db);
        output.push((v_amp, purity[1].amplitude));
    }
    // Least-squares slope of log amplitude against log v_amp, small-signal part.
    let pts: Vec<(f64, f64)> = output[..3].iter().map(|&(v, a)| (v.ln(), a.ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let slope =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope / 2.0 - 1.0).abs() < 0.05, "slope {slope}");
    for &(v, a) in &output[..3] {
        let ratio = (a / (v * v)) / (output[0].1 / 0.25);
        assert!((ratio - 1.0).abs() < 0.05, "v_amp = {v}: {ratio}");
    }
}

#[test]
fn resonator_wiring_output_is_at_the_drive_frequency() {
    let m = model("beam-1MHz");
    let f1 = m.natural_frequency();
    let drive = DriveSignal::sine(DriveMode::Resonator, 10.0, 0.5, f1);
    let dt = transient::default_time_step(&m, &drive);
    let tr = transient::simulate(&m, &drive, 400.0 / f1, dt).unwrap();
    let window = 64 * tr.samples_per_cycle;
    let tail = &tr.i_o[tr.len() - window..];
    let s = spectral::amplitude_spectrum(tail, tr.dt, Window::Hann, None).unwrap();
    assert!((s.dominant_frequency().unwrap() - f1).abs() <= s.bin_width);
    let purity = spectral::purity_report(&s, f1, 3).unwrap();
    assert_eq!(purity[0].db, 0.0);
    assert!(purity[1].db < -40.0 && purity[2].db < -40.0, "{purity:?}");
}

#[test]
fn harness_sweep_over_a_fixed_band() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::from_preset("beam-455kHz").unwrap();
    s.analysis.sweep.f_lo = Some(400e3);
    s.analysis.sweep.f_hi = Some(500e3);
    let report = harness::run_sweep(&s, dir.path(), Format::Csv).unwrap();
    assert!(report.passed(), "{:?}", report.checks);
    let sw = report.sweep.unwrap();
    assert_eq!(sw.n_points, 101);
    assert!((sw.fit.q / 40.0 - 1.0).abs() <= 0.02, "Q = {}", sw.fit.q);
    let cfg = device::preset("beam-455kHz").unwrap();
    let f1 = memsd::modal::natural_frequency(1, &cfg.beam, &cfg.material);
    assert!((sw.fit.peak_frequency / f1 - 1.0).abs() < 5e-3);
    assert!((sw.fit.peak_frequency / sw.model_peak - 1.0).abs() < 5e-3);
}

#[test]
fn band_without_the_resonance_is_rejected() {
    let m = model("beam-455kHz");
    let f1 = m.natural_frequency();
    let template = DriveSignal::sine(DriveMode::Resonator, 10.0, 0.5, f1);
    let r = transient::frequency_sweep(&m, &template, 0.6 * f1, 0.8 * f1, 21, Spacing::Linear).unwrap();
    let err = spectral::resonance_fit_response(&r).unwrap_err();
    assert!(matches!(err, Error::HalfPowerOutOfBand { .. }), "{err}");
}
