//! Phase-noise synthesis.
//!
//! A base trace is a discrete Gauss-Markov process: white Gaussian frequency
//! increments accumulated into a phase with a small per-sample mean reversion
//! (`leak`). Its one-sided PSD is
//!
//! ```text
//! S(f) = 2 σ² dt / |1 − (1 − leak) e^{−i2πf dt}|²  ≈  h0 / f²
//! ```
//!
//! between the mean-reversion corner `leak·fs/2π` and a good fraction of
//! Nyquist, with `σ² = 2π² h0 / fs`.
//!
//! The base trace is then passed through the error transfer function of a
//! phase-locked loop, `H_err = 1 / (1 + G)`, applied in the frequency domain.
//! The loop suppresses slow noise and, for a finite phase margin, amplifies
//! noise near its unity-gain frequency (the servo bump).

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fft;

/// Parameters of the brown (white-frequency) base noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModelParams {
    /// White frequency-noise level in Hz²/Hz; the phase PSD is `h0 / f²`.
    pub h0: f64,
    /// Per-sample mean reversion of the phase, in `[0, 1)`.
    pub leak: f64,
    /// Sample rate in Hz.
    pub sample_rate: f64,
    /// Number of samples to generate.
    pub n_samples: usize,
    /// Stationary RMS phase (rad). When set, overrides the `h0` scaling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms_target: Option<f64>,
}

impl Default for NoiseModelParams {
    fn default() -> Self {
        Self {
            h0: 0.0,
            leak: 1e-4,
            sample_rate: 10e6,
            n_samples: 8192,
            rms_target: None,
        }
    }
}

impl NoiseModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.h0.is_finite() && self.h0 >= 0.0) {
            return Err(param("h0", format!("must be finite and >= 0, got {}", self.h0)));
        }
        if !(0.0..1.0).contains(&self.leak) {
            return Err(param("leak", format!("must lie in [0, 1), got {}", self.leak)));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(param(
                "sample_rate",
                format!("must be > 0, got {}", self.sample_rate),
            ));
        }
        if self.n_samples < 2 {
            return Err(param("n_samples", format!("must be >= 2, got {}", self.n_samples)));
        }
        if let Some(rms) = self.rms_target {
            if !(rms.is_finite() && rms > 0.0) {
                return Err(param("rms_target", format!("must be > 0, got {rms}")));
            }
            if self.leak == 0.0 {
                return Err(param(
                    "rms_target",
                    "a stationary RMS requires leak > 0 (a pure random walk has none)",
                ));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Standard deviation of the per-sample Gaussian increment.
    fn increment_sigma(&self) -> f64 {
        let rho = 1.0 - self.leak;
        match self.rms_target {
            Some(rms) => rms * (1.0 - rho * rho).sqrt(),
            None => PI * (2.0 * self.h0 / self.sample_rate).sqrt(),
        }
    }

    /// Exact one-sided PSD of the discrete base process at frequency `f` (Hz).
    pub fn base_psd(&self, f: f64) -> f64 {
        let sigma = self.increment_sigma();
        let rho = 1.0 - self.leak;
        let dt = self.dt();
        let z = Complex64::from_polar(rho, -2.0 * PI * f * dt);
        2.0 * sigma * sigma * dt / (Complex64::new(1.0, 0.0) - z).norm_sqr()
    }
}

/// Servo-loop description used to shape the base noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoShape {
    pub enabled: bool,
    /// Frequency (Hz) at which the open-loop gain has unit magnitude.
    pub unity_gain_freq: f64,
    /// Open-loop gain at DC in dB.
    pub gain_db: f64,
    /// Extra real poles of the loop filter (Hz).
    pub poles: Vec<f64>,
    /// Extra real zeros of the loop filter (Hz).
    pub zeros: Vec<f64>,
    /// Quality factor of the loop's second-order roll-off at unity gain.
    /// Zero gives a first-order loop with no bump.
    pub bump_quality: f64,
}

impl ServoShape {
    /// Default loop: one pole at `f_u/10`, one zero at `f_u/3`, Q = 2, 60 dB DC gain.
    pub fn with_unity_gain(unity_gain_freq: f64) -> Self {
        Self {
            enabled: true,
            unity_gain_freq,
            gain_db: 60.0,
            poles: vec![unity_gain_freq / 10.0],
            zeros: vec![unity_gain_freq / 3.0],
            bump_quality: 2.0,
        }
    }

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::with_unity_gain(200e3)
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        let nyquist = sample_rate / 2.0;
        if !(self.unity_gain_freq > 0.0 && self.unity_gain_freq < nyquist) {
            return Err(param(
                "unity_gain_freq",
                format!(
                    "must lie in (0, {nyquist}) for sample rate {sample_rate}, got {}",
                    self.unity_gain_freq
                ),
            ));
        }
        if let Some(p) = self.poles.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(param("poles", format!("pole frequencies must be > 0, got {p}")));
        }
        if let Some(z) = self.zeros.iter().find(|z| !(**z > 0.0 && z.is_finite())) {
            return Err(param("zeros", format!("zero frequencies must be > 0, got {z}")));
        }
        if !(self.bump_quality >= 0.0 && self.bump_quality.is_finite()) {
            return Err(param(
                "bump_quality",
                format!("must be >= 0, got {}", self.bump_quality),
            ));
        }
        if !self.gain_db.is_finite() {
            return Err(param("gain_db", "must be finite"));
        }
        LoopFilter::new(self).map(|_| ())
    }

    /// Closed-loop error transfer function `1/(1+G)` at frequency `f` (Hz).
    pub fn error_transfer(&self, f: f64) -> Result<Complex64> {
        if !self.enabled {
            return Ok(Complex64::new(1.0, 0.0));
        }
        Ok(LoopFilter::new(self)?.error_response(f))
    }
}

/// Open-loop gain
///
/// ```text
/// G(s) = K · Π(1 + s/ω_z) / Π(1 + s/ω_p) · 1/(s + ω_i) · 1/(s + ω_u/Q)
/// ```
///
/// with `K` and `ω_i` solved so that `|G(iω_u)| = 1` and `G(0)` equals the
/// configured DC gain. For `Q = 0` the last factor is dropped.
#[derive(Debug, Clone)]
struct LoopFilter {
    k: f64,
    omega_int: f64,
    omega_u: f64,
    quality: f64,
    poles: Vec<f64>,
    zeros: Vec<f64>,
}

impl LoopFilter {
    fn new(shape: &ServoShape) -> Result<Self> {
        let omega_u = 2.0 * PI * shape.unity_gain_freq;
        let poles: Vec<f64> = shape.poles.iter().map(|p| 2.0 * PI * p).collect();
        let zeros: Vec<f64> = shape.zeros.iter().map(|z| 2.0 * PI * z).collect();
        let g = 10f64.powf(shape.gain_db / 20.0);
        let q = shape.bump_quality;

        let s_u = Complex64::new(0.0, omega_u);
        let r_u = shaping(&poles, &zeros, s_u).norm();
        // x = ω_i / ω_u from the two normalisation conditions.
        let x = if q > 0.0 {
            let a = 1.0 + 1.0 / (q * q);
            let b = g * g * r_u * r_u / (q * q);
            if b <= a {
                return Err(param(
                    "gain_db",
                    format!("DC gain {} dB too low to reach unity gain at the requested frequency", shape.gain_db),
                ));
            }
            (a / (b - a)).sqrt()
        } else {
            let b = g * g * r_u * r_u;
            if b <= 1.0 {
                return Err(param(
                    "gain_db",
                    format!("DC gain {} dB too low to reach unity gain at the requested frequency", shape.gain_db),
                ));
            }
            1.0 / (b - 1.0).sqrt()
        };
        let omega_int = x * omega_u;
        let k = if q > 0.0 {
            g * omega_int * omega_u / q
        } else {
            g * omega_int
        };
        Ok(Self {
            k,
            omega_int,
            omega_u,
            quality: q,
            poles,
            zeros,
        })
    }

    fn open_loop(&self, f: f64) -> Complex64 {
        let s = Complex64::new(0.0, 2.0 * PI * f);
        let mut g = self.k * shaping(&self.poles, &self.zeros, s) / (s + self.omega_int);
        if self.quality > 0.0 {
            g /= s + self.omega_u / self.quality;
        }
        g
    }

    fn error_response(&self, f: f64) -> Complex64 {
        1.0 / (1.0 + self.open_loop(f))
    }
}

fn shaping(poles: &[f64], zeros: &[f64], s: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let num: Complex64 = zeros.iter().map(|z| one + s / z).product();
    let den: Complex64 = poles.iter().map(|p| one + s / p).product();
    num / den
}

/// A sampled phase realisation φ(t) in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub samples: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
}

impl PhaseTrace {
    pub fn new(samples: Vec<f64>, dt: f64, seed: u64) -> Result<Self> {
        let trace = Self { samples, dt, seed };
        trace.validate()?;
        Ok(trace)
    }

    /// Noise-free trace: φ ≡ 0.
    pub fn zeros(n: usize, dt: f64) -> Self {
        Self {
            samples: vec![0.0; n],
            dt,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(param("samples", "a trace needs at least 2 samples"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(param("dt", format!("must be > 0, got {}", self.dt)));
        }
        if let Some(i) = self.samples.iter().position(|x| !x.is_finite()) {
            return Err(param("samples", format!("non-finite sample at index {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    /// Time spanned by the samples, `(n − 1)·dt`.
    pub fn span(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    /// Linearly interpolated phase. `t` is clamped to the trace span.
    pub fn phase_at(&self, t: f64) -> f64 {
        let x = (t / self.dt).max(0.0);
        let last = self.samples.len() - 1;
        let i = (x.floor() as usize).min(last);
        if i >= last {
            return self.samples[last];
        }
        let frac = x - i as f64;
        self.samples[i] + frac * (self.samples[i + 1] - self.samples[i])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * factor).collect(),
            dt: self.dt,
            seed: self.seed,
        }
    }

    pub fn rms(&self) -> f64 {
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().sum::<f64>() / n;
        (self.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Generates a Gauss-Markov phase trace.
///
/// With `leak > 0` the initial value is drawn from the stationary
/// distribution, so the trace is stationary from its first sample.
pub fn generate_base_trace(params: &NoiseModelParams, seed: u64) -> Result<PhaseTrace> {
    params.validate()?;
    let n = params.n_samples;
    let dt = params.dt();
    let sigma = params.increment_sigma();
    if sigma == 0.0 {
        return Ok(PhaseTrace {
            samples: vec![0.0; n],
            dt,
            seed,
        });
    }
    let rho = 1.0 - params.leak;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut phi = if params.leak > 0.0 {
        sigma / (1.0 - rho * rho).sqrt() * normal()
    } else {
        0.0
    };
    let mut samples = Vec::with_capacity(n);
    samples.push(phi);
    for _ in 1..n {
        phi = rho * phi + sigma * normal();
        samples.push(phi);
    }
    Ok(PhaseTrace { samples, dt, seed })
}

/// Multiplies the trace spectrum by the loop error transfer function.
///
/// The trace is treated as periodic. The straight line joining its first and
/// last sample is removed first so that the periodic extension has no jump;
/// that line only carries content at the lowest bins, which the loop
/// suppresses anyway.
pub fn apply_servo_shaping(trace: &PhaseTrace, shape: &ServoShape) -> Result<PhaseTrace> {
    trace.validate()?;
    if !shape.enabled {
        return Ok(trace.clone());
    }
    let fs = trace.sample_rate();
    shape.validate(fs)?;
    let filter = LoopFilter::new(shape)?;

    let n = trace.len();
    let first = trace.samples[0];
    let slope = (trace.samples[n - 1] - first) / (n - 1) as f64;
    let mut buf: Vec<Complex64> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(i, x)| Complex64::new(x - first - slope * i as f64, 0.0))
        .collect();

    fft::forward(n).process(&mut buf);
    let df = fs / n as f64;
    for (k, bin) in buf.iter_mut().enumerate() {
        let f = if k <= n / 2 {
            k as f64 * df
        } else {
            k as f64 * df - fs
        };
        *bin *= filter.error_response(f);
    }
    fft::inverse(n).process(&mut buf);

    let norm = 1.0 / n as f64;
    let samples = buf.iter().map(|c| c.re * norm).collect();
    Ok(PhaseTrace {
        samples,
        dt: trace.dt,
        seed: trace.seed,
    })
}

/// Number of padding samples added on each side before shaping.
pub fn shaping_margin(n: usize) -> usize {
    n.div_ceil(100).max(1)
}

/// Base trace followed by servo shaping.
///
/// When shaping is enabled the base trace is 2% longer and 1% is trimmed from
/// each end afterwards, removing circular-convolution wraparound.
pub fn synthesize(params: &NoiseModelParams, shape: &ServoShape, seed: u64) -> Result<PhaseTrace> {
    params.validate()?;
    if !shape.enabled {
        return generate_base_trace(params, seed);
    }
    shape.validate(params.sample_rate)?;
    let n = params.n_samples;
    let margin = shaping_margin(n);
    let padded = NoiseModelParams {
        n_samples: n + 2 * margin,
        ..params.clone()
    };
    let base = generate_base_trace(&padded, seed)?;
    let shaped = apply_servo_shaping(&base, shape)?;
    Ok(PhaseTrace {
        samples: shaped.samples[margin..margin + n].to_vec(),
        dt: shaped.dt,
        seed,
    })
}

/// JSON sidecar written next to a binary trace dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub dt_s: f64,
    pub seed: u64,
    pub n_samples: usize,
    pub params: NoiseModelParams,
    pub shape: ServoShape,
}

/// Path of the JSON sidecar belonging to a binary trace file.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Writes samples as little-endian f64 plus a `<path>.json` sidecar.
pub fn write_trace(
    path: &Path,
    trace: &PhaseTrace,
    params: &NoiseModelParams,
    shape: &ServoShape,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in &trace.samples {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = TraceSidecar {
        dt_s: trace.dt,
        seed: trace.seed,
        n_samples: trace.len(),
        params: params.clone(),
        shape: shape.clone(),
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace(path: &Path) -> Result<(PhaseTrace, TraceSidecar)> {
    let sidecar: TraceSidecar =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 || bytes.len() / 8 != sidecar.n_samples {
        return Err(Error::Contract(format!(
            "trace file holds {} bytes, sidecar declares {} samples",
            bytes.len(),
            sidecar.n_samples
        )));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let trace = PhaseTrace::new(samples, sidecar.dt_s, sidecar.seed)?;
    Ok((trace, sidecar))
}
