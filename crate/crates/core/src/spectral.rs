//! Amplitude spectra, resonance fits and spectral purity.
//!
//! Amplitudes are single-sided and corrected for the window's coherent
//! gain, so a sinusoid centred on a bin reports its true amplitude.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::device::zeta_from_quality;
use crate::error::{Error, Result};
use crate::transient::FrequencyResponse;

pub const MIN_SAMPLES: usize = 16;
/// Floor for reported relative levels; zero amplitudes map here.
pub const DB_FLOOR: f64 = -400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rect,
    Hann,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// Δf_bin = 1/(N·dt), Hz.
    pub bin_width: f64,
    /// Non-negative-frequency bins 0..=N/2 of the padded FFT.
    #[serde(skip)]
    pub bins: Vec<Complex64>,
    /// Single-sided amplitude per bin, input units.
    pub amplitude: Vec<f64>,
    pub window: Window,
    /// Samples before padding.
    pub samples: usize,
    /// FFT length N (power of two).
    pub fft_len: usize,
    /// s
    pub dt: f64,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.amplitude.len()).map(|k| self.frequency(k)).collect()
    }

    pub fn nyquist(&self) -> f64 {
        0.5 / self.dt
    }

    /// First bin past the DC main lobe: amplitudes fall monotonically from
    /// bin 1 up to here (bin 0 is not compared; it lacks the one-sided ×2). A static offset leaks into this range (several bins
    /// once windowed and padded), so peak searches start after it.
    pub fn dc_lobe_end(&self) -> usize {
        let a = &self.amplitude;
        let mut k = 1;
        while k + 1 < a.len() && a[k] > 0.0 && a[k + 1] < a[k] {
            k += 1;
        }
        k
    }

    /// Largest bin outside the DC lobe.
    pub fn peak_bin(&self) -> Result<usize> {
        let (k, a) = self
            .amplitude
            .iter()
            .enumerate()
            .skip(self.dc_lobe_end())
            .fold((0, 0.0), |best, (k, &a)| if a > best.1 { (k, a) } else { best });
        if k == 0 || !(a > 0.0) {
            return Err(Error::NoPeak);
        }
        Ok(k)
    }

    /// Frequency of the largest bin outside the DC lobe, Hz.
    pub fn dominant_frequency(&self) -> Result<f64> {
        Ok(self.frequency(self.peak_bin()?))
    }

    /// Σ|x|²·dt recovered from the bins of the unwindowed, padded signal.
    pub fn energy(&self) -> f64 {
        let n = self.fft_len;
        let half = n / 2;
        let sum: f64 = self
            .bins
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let w = if k == 0 || k == half { 1.0 } else { 2.0 };
                w * c.norm_sqr()
            })
            .sum();
        sum * self.dt / n as f64
    }
}

/// Forward complex FFT of real input.
pub fn fft(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse FFT, normalized so that `ifft(fft(x)) = x`.
pub fn ifft(bins: &[Complex64]) -> Vec<Complex64> {
    let mut buf = bins.to_vec();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Windowed, zero-padded amplitude spectrum. `pad_to` defaults to the next
/// power of two at or above the sample count.
pub fn amplitude_spectrum(samples: &[f64], dt: f64, window: Window, pad_to: Option<usize>) -> Result<Spectrum> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::invalid(
            "samples",
            format!("need at least {MIN_SAMPLES}, got {}", samples.len()),
        ));
    }
    if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be finite and > 0"));
    }
    let n = pad_to.unwrap_or_else(|| samples.len().next_power_of_two());
    if !n.is_power_of_two() || n < samples.len() {
        return Err(Error::invalid(
            "pad_to",
            format!("{n} is not a power of two at least {}", samples.len()),
        ));
    }
    let w = window.coefficients(samples.len());
    let gain: f64 = w.iter().sum();
    let mut padded: Vec<f64> = samples.iter().zip(&w).map(|(x, w)| x * w).collect();
    padded.resize(n, 0.0);
    let mut bins = fft(&padded);
    bins.truncate(n / 2 + 1);
    let amplitude = bins
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let one_sided = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            one_sided * c.norm() / gain
        })
        .collect();
    Ok(Spectrum {
        bin_width: 1.0 / (n as f64 * dt),
        bins,
        amplitude,
        window,
        samples: samples.len(),
        fft_len: n,
        dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceFit {
    /// Hz
    pub peak_frequency: f64,
    pub peak_amplitude: f64,
    /// Half-power bandwidth Δf, Hz.
    pub bandwidth: f64,
    pub q: f64,
    pub zeta: f64,
}

// Vertex of the parabola through three (x, y) points, or None when the
// middle point is not a strict maximum.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    if !(y[1] > y[0] && y[1] >= y[2]) && !(y[1] >= y[0] && y[1] > y[2]) {
        return None;
    }
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let c = (d12 - d01) / (x[2] - x[0]);
    if !(c < 0.0) || !c.is_finite() {
        return None;
    }
    // y = y1 + b(x − x1) + c(x − x1)², b the slope at x1
    let b = d01 + c * (x[1] - x[0]);
    let dx = -b / (2.0 * c);
    let dx = dx.clamp(x[0] - x[1], x[2] - x[1]);
    Some((x[1] + dx, y[1] + b * dx + c * dx * dx))
}

/// Peak location and height around index `k` by a parabola through the
/// log-amplitudes of `k−1, k, k+1`; falls back to the sample itself.
fn interpolated_peak(freq: &[f64], amp: &[f64], k: usize) -> (f64, f64) {
    if k == 0 || k + 1 >= amp.len() || amp[k - 1] <= 0.0 || amp[k + 1] <= 0.0 {
        return (freq[k], amp[k]);
    }
    let x = [freq[k - 1], freq[k], freq[k + 1]];
    let y = [amp[k - 1].ln(), amp[k].ln(), amp[k + 1].ln()];
    match parabola_vertex(x, y) {
        Some((f, ly)) => (f, ly.exp()),
        None => (freq[k], amp[k]),
    }
}

/// Resonance fit of an amplitude curve sampled at increasing frequencies.
pub fn fit_resonance_curve(freq: &[f64], amp: &[f64]) -> Result<ResonanceFit> {
    if freq.len() != amp.len() || freq.len() < 3 {
        return Err(Error::invalid("curve", "need at least 3 matching points"));
    }
    if !freq.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::invalid("curve", "frequencies must be strictly increasing"));
    }
    let (k, a) = amp.iter().enumerate().fold(
        (usize::MAX, 0.0),
        |best, (k, &a)| if a > best.1 { (k, a) } else { best },
    );
    if k == usize::MAX || !a.is_finite() {
        return Err(Error::NoPeak);
    }
    let (peak_frequency, peak_amplitude) = interpolated_peak(freq, amp, k);
    let level = peak_amplitude / 2f64.sqrt();
    let crossing = |i: usize, j: usize| {
        // amplitude crosses `level` between samples i and j
        let t = (level - amp[i]) / (amp[j] - amp[i]);
        freq[i] + t * (freq[j] - freq[i])
    };
    let low = (0..k)
        .rev()
        .find(|&i| amp[i] < level)
        .map(|i| crossing(i, i + 1))
        .ok_or(Error::HalfPowerOutOfBand { side: "low" })?;
    let high = (k + 1..amp.len())
        .find(|&j| amp[j] < level)
        .map(|j| crossing(j - 1, j))
        .ok_or(Error::HalfPowerOutOfBand { side: "high" })?;
    let bandwidth = high - low;
    let q = peak_frequency / bandwidth;
    if !(q >= 1.0) {
        return Err(Error::invalid(
            "fit",
            format!("Q = {q} is below 1; no damping ratio in (0, 1/√2) matches"),
        ));
    }
    Ok(ResonanceFit {
        peak_frequency,
        peak_amplitude,
        bandwidth,
        q,
        zeta: zeta_from_quality(q),
    })
}

/// Fit to the largest peak of a spectrum outside its DC lobe.
pub fn resonance_fit(spectrum: &Spectrum) -> Result<ResonanceFit> {
    let freq = spectrum.frequencies();
    let start = spectrum.dc_lobe_end();
    fit_resonance_curve(&freq[start..], &spectrum.amplitude[start..])
}

/// Fit to the displacement amplitude of a swept response.
pub fn resonance_fit_response(response: &FrequencyResponse) -> Result<ResonanceFit> {
    fit_resonance_curve(&response.frequency, &response.amplitude)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PurityLine {
    /// Multiple m of the fundamental.
    pub harmonic: usize,
    /// m·f, Hz.
    pub frequency: f64,
    pub amplitude: f64,
    /// Relative to the largest listed component, floored at [`DB_FLOOR`].
    pub db: f64,
}

/// Components at `f, 2f, …, harmonics·f`, each read as the interpolated
/// peak of the largest bin within ±2 bins of the nominal frequency.
pub fn purity_report(spectrum: &Spectrum, fundamental: f64, harmonics: usize) -> Result<Vec<PurityLine>> {
    if !(fundamental > 0.0 && fundamental.is_finite()) || harmonics == 0 {
        return Err(Error::invalid("purity", "need f > 0 and at least one harmonic"));
    }
    let nyquist = spectrum.nyquist();
    let freq = spectrum.frequencies();
    let amp = &spectrum.amplitude;
    let last = amp.len() - 1;
    let mut lines = Vec::with_capacity(harmonics);
    for m in 1..=harmonics {
        let f = m as f64 * fundamental;
        if f > nyquist {
            return Err(Error::BeyondNyquist { freq: f, nyquist });
        }
        let centre = (f / spectrum.bin_width).round() as usize;
        let lo = centre.saturating_sub(2).max(1);
        let hi = (centre + 2).min(last);
        let k = (lo..=hi).fold(lo, |best, k| if amp[k] > amp[best] { k } else { best });
        let (_, a) = interpolated_peak(&freq, amp, k);
        lines.push(PurityLine {
            harmonic: m,
            frequency: f,
            amplitude: a,
            db: 0.0,
        });
    }
    let max = lines.iter().map(|l| l.amplitude).fold(0.0, f64::max);
    for l in &mut lines {
        l.db = if max > 0.0 && l.amplitude > 0.0 {
            (20.0 * (l.amplitude / max).log10()).max(DB_FLOOR)
        } else {
            DB_FLOOR
        };
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::quality_from_zeta;
    use proptest::prelude::*;

    fn tone(n: usize, dt: f64, parts: &[(f64, f64)]) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                parts.iter().map(|(a, f)| a * (2.0 * PI * f * t).sin()).sum()
            })
            .collect()
    }

    #[test]
    fn bin_centred_tone_reports_true_amplitude() {
        let (n, dt) = (4096, 1e-8);
        let f = 100.0 / (n as f64 * dt);
        let s = amplitude_spectrum(&tone(n, dt, &[(1e-9, f)]), dt, Window::Rect, None).unwrap();
        assert_eq!(s.peak_bin().unwrap(), 100);
        assert!((s.amplitude[100] - 1e-9).abs() < 1e-9 * 1e-9);
        assert!((s.dominant_frequency().unwrap() - f).abs() < 1e-6 * f);
        assert_eq!(s.amplitude.len(), n / 2 + 1);
    }

    #[test]
    fn hann_gain_corrected() {
        let (n, dt) = (1024, 1.0);
        let f = 37.0 / n as f64;
        let s = amplitude_spectrum(&tone(n, dt, &[(2.5, f)]), dt, Window::Hann, None).unwrap();
        assert!((s.amplitude[37] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn parseval() {
        let (n, dt) = (2048, 3e-9);
        let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 113) as f64 * 1e-10 - 5e-9).collect();
        let s = amplitude_spectrum(&x, dt, Window::Rect, None).unwrap();
        let time: f64 = x.iter().map(|v| v * v).sum::<f64>() * dt;
        assert!((s.energy() / time - 1.0).abs() < 1e-9);
        let padded = amplitude_spectrum(&x[..1500], dt, Window::Rect, Some(4096)).unwrap();
        let time: f64 = x[..1500].iter().map(|v| v * v).sum::<f64>() * dt;
        assert!((padded.energy() / time - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_tones_recovered_with_hann() {
        let (n, dt) = (1 << 14, 1e-8);
        let df = 1.0 / (n as f64 * dt);
        let f = 512.0 * df;
        let x = tone(n, dt, &[(1e-9, f), (1e-11, 2.0 * f)]);
        let s = amplitude_spectrum(&x, dt, Window::Hann, None).unwrap();
        let p = purity_report(&s, f, 2).unwrap();
        assert!((p[0].amplitude / 1e-9 - 1.0).abs() < 0.01);
        assert!((p[1].amplitude / 1e-11 - 1.0).abs() < 0.01);
        assert!((p[1].db + 40.0).abs() < 0.1);
    }

    #[test]
    fn pure_tone_is_pure() {
        let (n, dt) = (1 << 14, 1e-8);
        let f = 300.0 / (n as f64 * dt);
        let s = amplitude_spectrum(&tone(n, dt, &[(1.0, f)]), dt, Window::Hann, None).unwrap();
        let p = purity_report(&s, f, 5).unwrap();
        assert_eq!(p[0].db, 0.0);
        for l in &p[1..] {
            assert!(l.db <= -100.0, "{l:?}");
        }
    }

    #[test]
    fn purity_rejects_harmonics_beyond_nyquist() {
        let s = amplitude_spectrum(&tone(64, 1.0, &[(1.0, 0.125)]), 1.0, Window::Rect, None).unwrap();
        assert!(matches!(purity_report(&s, 0.125, 5), Err(Error::BeyondNyquist { .. })));
        assert!(purity_report(&s, 0.125, 4).is_ok());
    }

    #[test]
    fn input_validation() {
        assert!(amplitude_spectrum(&[0.0; 8], 1.0, Window::Rect, None).is_err());
        let mut x = vec![0.0; 32];
        x[5] = f64::NAN;
        assert!(matches!(
            amplitude_spectrum(&x, 1.0, Window::Rect, None),
            Err(Error::NonFinite(5))
        ));
        assert!(amplitude_spectrum(&[0.0; 32], 1.0, Window::Rect, Some(48)).is_err());
        assert!(amplitude_spectrum(&[0.0; 32], 1.0, Window::Rect, Some(16)).is_err());
    }

    #[test]
    fn fft_round_trip_all_sizes() {
        for k in 4..=16 {
            let n = 1usize << k;
            let x: Vec<f64> = (0..n)
                .map(|i| ((i as f64 * 0.7).sin() + 1e-3 * i as f64).exp())
                .collect();
            let back = ifft(&fft(&x));
            let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b.re).abs() <= 1e-12 * scale && b.im.abs() <= 1e-12 * scale);
            }
        }
    }

    // |H| of a unit-mass SDOF oscillator
    fn sdof(f1: f64, zeta: f64, f: f64) -> f64 {
        let r = f / f1;
        1.0 / ((1.0 - r * r).powi(2) + (2.0 * zeta * r).powi(2)).sqrt()
    }

    #[test]
    fn analytic_response_fit() {
        let f1 = 454.5e3;
        for zeta in [0.005, 0.0125, 0.02, 0.035, 0.05] {
            let f: Vec<f64> = (0..2001).map(|i| f1 * (0.7 + 0.6 * i as f64 / 2000.0)).collect();
            let a: Vec<f64> = f.iter().map(|&f| sdof(f1, zeta, f)).collect();
            let fit = fit_resonance_curve(&f, &a).unwrap();
            assert!((fit.zeta / zeta - 1.0).abs() < 0.01, "ζ = {zeta}: {fit:?}");
            assert!((fit.peak_frequency / f1 - 1.0).abs() < 0.01);
            let natural = fit.peak_frequency / (1.0 - 2.0 * fit.zeta * fit.zeta).sqrt();
            assert!((natural / f1 - 1.0).abs() < 1e-3);
            assert!((fit.q / 40.0 - 1.0).abs() < 0.02 || zeta != 0.0125);
        }
    }

    #[test]
    fn quality_zeta_anchor() {
        assert!((quality_from_zeta(0.0125) - 40.0).abs() < 5e-3);
        assert!((zeta_from_quality(40.0) - 0.0125).abs() < 1e-4);
    }

    #[test]
    fn fit_reports_band_problems() {
        let f1 = 1e6;
        let f: Vec<f64> = (0..101).map(|i| 1.05e6 + 1e3 * i as f64).collect();
        let a: Vec<f64> = f.iter().map(|&f| sdof(f1, 0.0125, f)).collect();
        assert!(matches!(
            fit_resonance_curve(&f, &a),
            Err(Error::HalfPowerOutOfBand { side: "low" })
        ));
        assert!(matches!(fit_resonance_curve(&f, &vec![0.0; 101]), Err(Error::NoPeak)));
    }

    #[test]
    fn spectrum_fit_ignores_dc() {
        let (n, dt) = (1 << 12, 1.0);
        let f = 200.0 / n as f64;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64;
                // exponentially decaying ring plus a large offset
                5.0 + (-t / 3000.0).exp() * (2.0 * PI * f * t).sin()
            })
            .collect();
        let s = amplitude_spectrum(&x, dt, Window::Hann, Some(1 << 14)).unwrap();
        let fit = resonance_fit(&s).unwrap();
        assert!((fit.peak_frequency / f - 1.0).abs() < 1e-2);
    }

    proptest! {
        #[test]
        fn spectrum_is_linear(
            xs in proptest::collection::vec(-1.0f64..1.0, 64),
            ys in proptest::collection::vec(-1.0f64..1.0, 64),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let combo: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let sx = amplitude_spectrum(&xs, 1.0, Window::Hann, None).unwrap();
            let sy = amplitude_spectrum(&ys, 1.0, Window::Hann, None).unwrap();
            let sc = amplitude_spectrum(&combo, 1.0, Window::Hann, None).unwrap();
            let scale = 1.0 + sc.bins.iter().map(|c| c.norm()).fold(0.0, f64::max);
            for k in 0..sc.bins.len() {
                let expect = sx.bins[k] * a + sy.bins[k] * b;
                prop_assert!((sc.bins[k] - expect).norm() <= 1e-12 * scale);
            }
        }

        #[test]
        fn q_zeta_round_trip_exact(q in 1.0f64..1e4) {
            let z = zeta_from_quality(q);
            prop_assert!(z > 0.0 && z <= std::f64::consts::FRAC_1_SQRT_2 + 1e-15);
            prop_assert!((quality_from_zeta(z) / q - 1.0).abs() < 1e-13);
        }

        #[test]
        fn random_signals_round_trip(xs in proptest::collection::vec(-1e3f64..1e3, 16..=4096usize)) {
            let n = xs.len().next_power_of_two();
            let mut x = xs.clone();
            x.resize(n, 0.0);
            let back = ifft(&fft(&x));
            let scale = x.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b.re).abs() <= 1e-12 * scale);
            }
        }
    }
}
