//! Spectral estimation: Welch PSDs of phase traces and the carrier-normalised
//! Rabi PSD of the drive field.
//!
//! All estimates use a periodic Hann window. With the normalisation used here
//! the integral of a Welch estimate equals the window-weighted mean square of
//! the segments, `Σ w²x² / Σ w²`, averaged over segments; for a stationary
//! signal that is an unbiased estimate of its mean square.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fft;
use crate::noisegen::PhaseTrace;

/// One-sided PSD estimate (rad²/Hz for phase spectra).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub resolution_df: f64,
    pub n_averages: usize,
}

impl PowerSpectrum {
    /// `Σ values·df`, the estimated mean square of the signal.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.resolution_df
    }

    /// Value at the bin nearest to `f`.
    pub fn value_near(&self, f: f64) -> f64 {
        let i = ((f / self.resolution_df).round() as usize).min(self.values.len() - 1);
        self.values[i]
    }

    /// Least-squares slope of `log10 S` against `log10 f` over `[f_lo, f_hi]`.
    pub fn log_log_slope(&self, f_lo: f64, f_hi: f64) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self
            .freqs
            .iter()
            .zip(&self.values)
            .filter(|(f, v)| **f >= f_lo && **f <= f_hi && **v > 0.0)
            .map(|(f, v)| (f.log10(), v.log10()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::Range(format!(
                "fewer than 3 positive bins in [{f_lo}, {f_hi}] Hz"
            )));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Ok(sxy / sxx)
    }
}

/// Averages estimates that share a frequency axis.
pub fn average_spectra(spectra: &[PowerSpectrum]) -> Result<PowerSpectrum> {
    let first = spectra
        .first()
        .ok_or_else(|| param("spectra", "nothing to average"))?;
    let mut values = vec![0.0; first.values.len()];
    let mut n_averages = 0;
    for s in spectra {
        if s.values.len() != values.len() || s.resolution_df != first.resolution_df {
            return Err(Error::Contract("spectra have different frequency axes".into()));
        }
        for (acc, v) in values.iter_mut().zip(&s.values) {
            *acc += v;
        }
        n_averages += s.n_averages;
    }
    let k = spectra.len() as f64;
    values.iter_mut().for_each(|v| *v /= k);
    Ok(PowerSpectrum {
        freqs: first.freqs.clone(),
        values,
        resolution_df: first.resolution_df,
        n_averages,
    })
}

/// Welch segmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Welch {
    pub segment_len: usize,
    pub overlap_frac: f64,
}

impl Welch {
    /// `n/8` samples per segment, 50% overlap.
    pub fn default_for(n: usize) -> Self {
        Self {
            segment_len: n / 8,
            overlap_frac: 0.5,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.segment_len < 8 {
            return Err(param(
                "segment_len",
                format!("must be >= 8, got {}", self.segment_len),
            ));
        }
        if self.segment_len > n {
            return Err(param(
                "segment_len",
                format!("{} exceeds trace length {n}", self.segment_len),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap_frac) {
            return Err(param(
                "overlap_frac",
                format!("must lie in [0, 1), got {}", self.overlap_frac),
            ));
        }
        Ok(())
    }
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

/// Two-sided Welch PSD in FFT bin order, plus the number of segments.
fn welch_two_sided(data: &[Complex64], fs: f64, welch: Welch) -> (Vec<f64>, usize) {
    let len = welch.segment_len;
    let step = ((len as f64 * (1.0 - welch.overlap_frac)).round() as usize).max(1);
    let window = hann(len);
    let w2: f64 = window.iter().map(|w| w * w).sum();
    let plan = fft::forward(len);

    let mut acc = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let mut segments = 0;
    let mut start = 0;
    while start + len <= data.len() {
        for ((b, x), w) in buf.iter_mut().zip(&data[start..start + len]).zip(&window) {
            *b = x * w;
        }
        plan.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (fs * w2 * segments as f64);
    acc.iter_mut().for_each(|a| *a *= scale);
    (acc, segments)
}

/// One-sided Welch PSD with a Hann window.
pub fn estimate_psd(trace: &PhaseTrace, segment_len: usize, overlap_frac: f64) -> Result<PowerSpectrum> {
    let welch = Welch {
        segment_len,
        overlap_frac,
    };
    welch.validate(trace.len())?;
    let fs = trace.sample_rate();
    let data: Vec<Complex64> = trace.samples.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let (two_sided, segments) = welch_two_sided(&data, fs, welch);

    let len = segment_len;
    let half = len / 2;
    let df = fs / len as f64;
    let mut values = Vec::with_capacity(half + 1);
    values.push(two_sided[0]);
    for k in 1..=half {
        if 2 * k == len {
            values.push(two_sided[k]);
        } else {
            values.push(two_sided[k] + two_sided[len - k]);
        }
    }
    let freqs = (0..values.len()).map(|k| k as f64 * df).collect();
    Ok(PowerSpectrum {
        freqs,
        values,
        resolution_df: df,
        n_averages: segments,
    })
}

/// Default carrier band: ±5 resolution bins around zero offset.
pub fn default_carrier_band(df: f64) -> f64 {
    5.0 * df
}

/// PSD of the unit drive field `e^{iφ(t)}`, scaled so that its total power is Ω².
///
/// `values[k]` is the per-sideband density at offset `freqs[k] ≥ 0`: the mean
/// of the two-sided density at `+f` and `−f`. The coherent carrier (the mean
/// field) is kept out of `values` and stored as the discrete line
/// `carrier_line` (Hz²), so a noise-free trace has an identically zero
/// continuum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiSpectrum {
    pub freqs: Vec<f64>,
    /// Hz²/Hz.
    pub values: Vec<f64>,
    /// Ω in Hz.
    pub carrier_rabi: f64,
    /// Half-width (Hz) around zero offset counted as the carrier peak.
    pub carrier_band: f64,
    /// Power of the coherent carrier line, Hz².
    pub carrier_line: f64,
    pub resolution_df: f64,
    pub n_averages: usize,
    pub seeds: Vec<u64>,
}

impl RabiSpectrum {
    /// Power integrated over all offsets, carrier line included.
    pub fn total_power(&self) -> f64 {
        self.carrier_line + self.band_power(self.freqs[self.freqs.len() - 1])
    }

    /// Carrier line plus the continuum within `±carrier_band`.
    pub fn carrier_power(&self) -> f64 {
        self.carrier_line + self.band_power(self.carrier_band)
    }

    /// Continuum power within `±half_width` of the carrier (both sides).
    fn band_power(&self, half_width: f64) -> f64 {
        let df = self.resolution_df;
        let last = self.values.len() - 1;
        let mut p = self.values[0] * df;
        for k in 1..=last {
            if self.freqs[k] > half_width + 1e-9 * df {
                break;
            }
            // segment length is even, so the last bin is Nyquist, shared by +f and −f
            let sides = if k == last { 1.0 } else { 2.0 };
            p += sides * self.values[k] * df;
        }
        p
    }

    /// Continuum power in `[f_lo, f_hi]` on one side of the carrier.
    pub fn sideband_power(&self, f_lo: f64, f_hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| **f >= f_lo && **f <= f_hi)
            .map(|(_, v)| v * self.resolution_df)
            .sum()
    }
}

/// Rabi PSD with the default Welch setup (`n/8` segments, 50% overlap).
pub fn compute_rabi_psd(trace: &PhaseTrace, rabi_hz: f64, carrier_band: f64) -> Result<RabiSpectrum> {
    compute_rabi_psd_with(trace, rabi_hz, carrier_band, Welch::default_for(trace.len()))
}

pub fn compute_rabi_psd_with(
    trace: &PhaseTrace,
    rabi_hz: f64,
    carrier_band: f64,
    welch: Welch,
) -> Result<RabiSpectrum> {
    trace.validate()?;
    if !(rabi_hz > 0.0 && rabi_hz.is_finite()) {
        return Err(param("rabi_hz", format!("must be > 0, got {rabi_hz}")));
    }
    if welch.segment_len % 2 != 0 {
        return Err(param("segment_len", "must be even for the Rabi PSD"));
    }
    welch.validate(trace.len()).map_err(|e| match e {
        Error::Parameter { name, reason } => Error::Parameter {
            name,
            reason: format!("trace too short for requested resolution: {reason}"),
        },
        other => other,
    })?;
    let fs = trace.sample_rate();
    let df = fs / welch.segment_len as f64;
    if carrier_band < df {
        return Err(param(
            "carrier_band",
            format!(
                "trace too short for requested resolution: carrier band {carrier_band} Hz is below df = {df} Hz"
            ),
        ));
    }

    let field: Vec<Complex64> = trace
        .samples
        .iter()
        .map(|phi| Complex64::from_polar(1.0, *phi))
        .collect();
    let mean = field.iter().sum::<Complex64>() / field.len() as f64;
    let residual: Vec<Complex64> = field.iter().map(|z| z - mean).collect();
    let (two_sided, segments) = welch_two_sided(&residual, fs, welch);

    let len = welch.segment_len;
    let half = len / 2;
    let continuum_total: f64 = two_sided.iter().sum::<f64>() * df;
    let carrier = mean.norm_sqr();
    let scale = rabi_hz * rabi_hz / (carrier + continuum_total);

    let mut values = Vec::with_capacity(half + 1);
    values.push(two_sided[0] * scale);
    for k in 1..half {
        values.push(0.5 * (two_sided[k] + two_sided[len - k]) * scale);
    }
    values.push(two_sided[half] * scale);
    let freqs = (0..=half).map(|k| k as f64 * df).collect();

    Ok(RabiSpectrum {
        freqs,
        values,
        carrier_rabi: rabi_hz,
        carrier_band,
        carrier_line: carrier * scale,
        resolution_df: df,
        n_averages: segments,
        seeds: vec![trace.seed],
    })
}

/// Averages Rabi spectra computed with the same Ω and frequency axis.
pub fn average_rabi_spectra(spectra: &[RabiSpectrum]) -> Result<RabiSpectrum> {
    let first = spectra
        .first()
        .ok_or_else(|| param("spectra", "nothing to average"))?;
    let mut out = first.clone();
    out.values.iter_mut().for_each(|v| *v = 0.0);
    out.carrier_line = 0.0;
    out.n_averages = 0;
    out.seeds.clear();
    for s in spectra {
        if s.values.len() != out.values.len()
            || s.resolution_df != first.resolution_df
            || s.carrier_rabi != first.carrier_rabi
        {
            return Err(Error::Contract("Rabi spectra are not compatible".into()));
        }
        for (acc, v) in out.values.iter_mut().zip(&s.values) {
            *acc += v;
        }
        out.carrier_line += s.carrier_line;
        out.n_averages += s.n_averages;
        out.seeds.extend_from_slice(&s.seeds);
    }
    let k = spectra.len() as f64;
    out.values.iter_mut().for_each(|v| *v /= k);
    out.carrier_line /= k;
    Ok(out)
}

/// Integral of the piecewise-linear interpolant of `values` over `[a, b]`, `0 ≤ a ≤ b`.
fn integrate_interpolant(df: f64, values: &[f64], a: f64, b: f64) -> f64 {
    let value_at = |x: f64| {
        let pos = x / df;
        let i = (pos.floor() as usize).min(values.len() - 2);
        let frac = pos - i as f64;
        values[i] + frac * (values[i + 1] - values[i])
    };
    let mut total = 0.0;
    let mut x = a;
    while x < b {
        let next_bin = ((x / df).floor() + 1.0) * df;
        let end = next_bin.min(b);
        // trapezoid is exact on a linear piece
        total += 0.5 * (value_at(x) + value_at(end.min(b))) * (end - x);
        if end <= x {
            break;
        }
        x = end;
    }
    total
}

/// RPSD at offset `f`, averaged over `±band` (default `±2·df`).
///
/// `band = Some(0.0)` returns the plain linear interpolation, which equals the
/// bin value on a bin centre. The spectrum is symmetric, so negative offsets
/// and bands reaching below zero are reflected.
pub fn rpsd_at(spectrum: &RabiSpectrum, f: f64, band: Option<f64>) -> Result<f64> {
    let df = spectrum.resolution_df;
    let half_width = band.unwrap_or(2.0 * df);
    if !(half_width >= 0.0) {
        return Err(param("band", format!("must be >= 0, got {half_width}")));
    }
    let g = f.abs();
    let f_max = spectrum.freqs[spectrum.freqs.len() - 1];
    if !g.is_finite() || g + half_width > f_max * (1.0 + 1e-12) {
        return Err(Error::Range(format!(
            "offset {f} Hz ± {half_width} Hz exceeds spectrum range {f_max} Hz"
        )));
    }
    let values = &spectrum.values;
    if half_width == 0.0 {
        let pos = g / df;
        let i = pos.floor() as usize;
        if i + 1 >= values.len() {
            return Ok(values[values.len() - 1]);
        }
        let frac = pos - i as f64;
        return Ok(values[i] + frac * (values[i + 1] - values[i]));
    }
    let lo = g - half_width;
    let hi = (g + half_width).min(f_max);
    let integral = if lo >= 0.0 {
        integrate_interpolant(df, values, lo, hi)
    } else {
        integrate_interpolant(df, values, 0.0, -lo) + integrate_interpolant(df, values, 0.0, hi)
    };
    Ok(integral / (2.0 * half_width))
}

/// `10·log10(rpsd / Ω²)`; `−∞` for an exact zero.
pub fn rpsd_to_dbc(rpsd: f64, rabi_hz: f64) -> f64 {
    if rpsd == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (rpsd / (rabi_hz * rabi_hz)).log10()
    }
}

/// RPSD at `f` (default smoothing band) in dBc/Hz.
pub fn to_dbc_per_hz(spectrum: &RabiSpectrum, f: f64) -> Result<f64> {
    let rpsd = rpsd_at(spectrum, f, None)?;
    Ok(rpsd_to_dbc(rpsd, spectrum.carrier_rabi))
}

/// Sidecar of a spectrum CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    pub carrier_rabi_hz: Option<f64>,
    pub carrier_band_hz: Option<f64>,
    pub n_averages: usize,
    pub resolution_df_hz: f64,
    pub seed_list: Vec<u64>,
}

/// CSV with header `freq_hz,psd`.
pub fn spectrum_csv(freqs: &[f64], values: &[f64]) -> String {
    let mut out = String::from("freq_hz,psd\n");
    for (f, v) in freqs.iter().zip(values) {
        out.push_str(&format!("{f:?},{v:e}\n"));
    }
    out
}

pub fn write_spectrum(path: &Path, freqs: &[f64], values: &[f64], sidecar: &SpectrumSidecar) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(spectrum_csv(freqs, values).as_bytes())?;
    std::fs::write(
        crate::noisegen::sidecar_path(path),
        serde_json::to_string_pretty(sidecar)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const FS: f64 = 10e6;

    fn tone(n: usize, amp: f64, f: f64) -> PhaseTrace {
        let samples = (0..n)
            .map(|i| amp * (2.0 * PI * f * i as f64 / FS).sin())
            .collect();
        PhaseTrace::new(samples, 1.0 / FS, 0).unwrap()
    }

    fn white(n: usize, sigma: f64, seed: u64) -> PhaseTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        let samples = (0..n).map(|_| d.sample(&mut rng)).collect();
        PhaseTrace::new(samples, 1.0 / FS, seed).unwrap()
    }

    #[test]
    fn zero_trace_zero_spectrum() {
        let t = PhaseTrace::zeros(1024, 1.0 / FS);
        let s = estimate_psd(&t, 128, 0.5).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
        assert_eq!(s.freqs.len(), 65);
    }

    #[test]
    fn short_segments_rejected() {
        let t = PhaseTrace::zeros(1024, 1.0 / FS);
        assert!(matches!(estimate_psd(&t, 4, 0.5), Err(Error::Parameter { .. })));
        assert!(matches!(estimate_psd(&t, 2048, 0.5), Err(Error::Parameter { .. })));
        assert!(matches!(estimate_psd(&t, 64, 1.0), Err(Error::Parameter { .. })));
    }

    #[test]
    fn frequency_axis_matches_segment_length() {
        let t = white(4096, 1.0, 1);
        let s = estimate_psd(&t, 512, 0.5).unwrap();
        assert_eq!(s.resolution_df, FS / 512.0);
        assert!(s.freqs.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(s.freqs.len(), s.values.len());
    }

    #[test]
    fn pure_tone_power() {
        let t = tone(1 << 16, 0.2, 50e3);
        let s = estimate_psd(&t, 8192, 0.5).unwrap();
        let df = s.resolution_df;
        let p: f64 = s
            .freqs
            .iter()
            .zip(&s.values)
            .filter(|(f, _)| (**f - 50e3).abs() <= 3.0 * df)
            .map(|(_, v)| v * df)
            .sum();
        assert!((p - 0.02).abs() < 0.05 * 0.02, "tone power {p}");
    }

    #[test]
    fn white_noise_level() {
        let sigma = 0.3;
        let t = white(256 * 32, sigma, 7);
        let s = estimate_psd(&t, 256, 0.5).unwrap();
        assert!(s.n_averages >= 50);
        let inner = &s.values[1..s.values.len() - 1];
        let level = inner.iter().sum::<f64>() / inner.len() as f64;
        let expected = sigma * sigma / (FS / 2.0);
        assert!((level / expected - 1.0).abs() < 0.1, "{level} vs {expected}");
    }

    #[test]
    fn parseval_on_white_noise() {
        let t = white(1 << 14, 0.5, 3);
        let s = estimate_psd(&t, 1024, 0.5).unwrap();
        let ms = t.samples.iter().map(|x| x * x).sum::<f64>() / t.len() as f64;
        assert!((s.integral() / ms - 1.0).abs() < 0.05);
    }

    #[test]
    fn noise_free_rabi_spectrum_is_all_carrier() {
        let t = PhaseTrace::zeros(1 << 14, 1.0 / FS);
        let df = FS / 2048.0;
        let r = compute_rabi_psd(&t, 100e3, default_carrier_band(df)).unwrap();
        assert_eq!(r.carrier_line, 1e10);
        assert!(r.values.iter().all(|v| *v == 0.0));
        assert_eq!(rpsd_at(&r, 100e3, None).unwrap(), 0.0);
        assert_eq!(to_dbc_per_hz(&r, 100e3).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn resolution_is_checked() {
        let t = PhaseTrace::zeros(1024, 1.0 / FS);
        // df = 10 MHz / 128 = 78 kHz
        assert!(matches!(
            compute_rabi_psd(&t, 1e5, 1e3),
            Err(Error::Parameter { name: "carrier_band", .. })
        ));
        assert!(compute_rabi_psd(&t, 0.0, 1e6).is_err());
    }

    fn pm_trace(beta: f64, fm: f64) -> PhaseTrace {
        tone(1 << 16, beta, fm)
    }

    #[test]
    fn phase_modulation_sideband() {
        // J1(β)² ≈ β²/4 of the carrier power lands in each first sideband.
        let beta = 0.05;
        let t = pm_trace(beta, 300e3);
        let welch = Welch { segment_len: 8192, overlap_frac: 0.5 };
        let df = FS / 8192.0;
        let r = compute_rabi_psd_with(&t, 100e3, 5.0 * df, welch).unwrap();
        let p = r.sideband_power(300e3 - 3.0 * df, 300e3 + 3.0 * df);
        let expected = beta * beta / 4.0 * 1e10;
        assert!((p / expected - 1.0).abs() < 0.05, "{p} vs {expected}");

        let band = 3.0 * df;
        let avg = rpsd_at(&r, 300e3, Some(band)).unwrap();
        assert!((avg * 2.0 * band / expected - 1.0).abs() < 0.05);
        // symmetric in the sign of the offset
        assert_eq!(rpsd_at(&r, -300e3, Some(band)).unwrap(), avg);
    }

    #[test]
    fn total_power_is_rabi_squared() {
        let t = pm_trace(0.8, 250e3);
        let r = compute_rabi_psd(&t, 50e3, 5.0 * FS / 8192.0).unwrap();
        assert!((r.total_power() / 2.5e9 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interpolation_identity_on_bins() {
        let t = white(1 << 14, 0.05, 2);
        let r = compute_rabi_psd(&t, 1e5, 5.0 * FS / 2048.0).unwrap();
        for k in [1usize, 10, 100, 500] {
            let v = rpsd_at(&r, r.freqs[k], Some(0.0)).unwrap();
            assert_eq!(v, r.values[k]);
        }
        assert!(matches!(rpsd_at(&r, 6e6, None), Err(Error::Range(_))));
    }

    #[test]
    fn dbc_conversion() {
        assert_eq!(rpsd_to_dbc(1.0, 1e5), -100.0);
        assert_eq!(rpsd_to_dbc(1e10, 1e5), 0.0);
        assert_eq!(rpsd_to_dbc(0.0, 1e5), f64::NEG_INFINITY);
    }

    #[test]
    fn dbc_scales_quadratically_in_weak_noise() {
        let t = white(1 << 15, 0.02, 4);
        let band = 5.0 * FS / 4096.0;
        let r1 = compute_rabi_psd(&t, 1e5, band).unwrap();
        let alpha = 0.3;
        let r2 = compute_rabi_psd(&t.scaled(alpha), 1e5, band).unwrap();
        let d1 = to_dbc_per_hz(&r1, 1e6).unwrap();
        let d2 = to_dbc_per_hz(&r2, 1e6).unwrap();
        assert!((d2 - d1 - 20.0 * alpha.log10()).abs() < 0.5, "{d1} {d2}");
    }
}
