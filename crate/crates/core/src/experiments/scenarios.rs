use serde::{Deserialize, Serialize};

use super::ensemble::{run_ensemble, EnsembleOutput, summarize, summarize_columns, EnsembleConfig, Failure};
use super::fit::{
    fit_damped_rabi, fit_exponential_saturation, fit_linear_through_origin, DampedRabiFit,
    LinearFit, PumpingFit,
};
use crate::error::{param, Error, Result};
use crate::noisegen::{synthesize, NoiseModelParams, PhaseTrace, ServoShape};
use crate::quantum::{
    DriveKind, DriveSpec, Observable, PropagationConfig, Propagator, RecordSchedule, StateVector,
};
use crate::spectral::{
    average_rabi_spectra, compute_rabi_psd_with, default_carrier_band, rpsd_at, Welch,
};

/// Long traces used only to measure the RPSD that labels a scan's x-axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceRpsd {
    pub n_traces: usize,
    pub n_samples: usize,
    /// Half-width of the smoothing band around the response frequency (Hz).
    pub band_hz: f64,
}

impl Default for ReferenceRpsd {
    fn default() -> Self {
        Self {
            n_traces: 4,
            n_samples: 1 << 16,
            band_hz: 5e3,
        }
    }
}

/// Phase-noise model shared by every realization of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub params: NoiseModelParams,
    pub shape: ServoShape,
    #[serde(default)]
    pub reference: ReferenceRpsd,
}

impl NoiseConfig {
    pub fn new(params: NoiseModelParams, shape: ServoShape) -> Self {
        Self {
            params,
            shape,
            reference: ReferenceRpsd::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.shape.enabled {
            self.shape.validate(self.params.sample_rate)?;
        }
        if self.reference.n_traces == 0 {
            return Err(param("reference.n_traces", "must be at least 1"));
        }
        if !(self.reference.band_hz >= 0.0) {
            return Err(param("reference.band_hz", "must be non-negative"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.params.sample_rate
    }

    pub fn span(&self) -> f64 {
        (self.params.n_samples - 1) as f64 * self.dt()
    }

    pub fn trace(&self, seed: u64) -> Result<PhaseTrace> {
        synthesize(&self.params, &self.shape, seed)
    }

    fn require_span(&self, duration: f64) -> Result<()> {
        if duration > self.span() * (1.0 + 1e-12) {
            return Err(param(
                "n_samples",
                format!(
                    "trace span {:e} s is shorter than the requested {duration:e} s",
                    self.span()
                ),
            ));
        }
        Ok(())
    }

    /// Trace-averaged RPSD at offset `f` for each amplitude scale in `alphas`.
    /// Reference seeds follow the realization seeds of `ens`.
    pub fn reference_rpsd(
        &self,
        ens: &EnsembleConfig,
        rabi_hz: f64,
        f: f64,
        alphas: &[f64],
    ) -> Result<Vec<f64>> {
        let params = NoiseModelParams {
            n_samples: self.reference.n_samples,
            ..self.params.clone()
        };
        let traces = (0..self.reference.n_traces)
            .map(|j| synthesize(&params, &self.shape, ens.auxiliary_seed(j)))
            .collect::<Result<Vec<_>>>()?;
        let welch = Welch::default_for(params.n_samples);
        let df = params.sample_rate / welch.segment_len as f64;
        alphas
            .iter()
            .map(|&a| {
                let spectra = traces
                    .iter()
                    .map(|t| {
                        compute_rabi_psd_with(&t.scaled(a), rabi_hz, default_carrier_band(df), welch)
                    })
                    .collect::<Result<Vec<_>>>()?;
                rpsd_at(&average_rabi_spectra(&spectra)?, f, Some(self.reference.band_hz))
            })
            .collect()
    }

    pub fn reference_seeds(&self, ens: &EnsembleConfig) -> Vec<u64> {
        (0..self.reference.n_traces).map(|j| ens.auxiliary_seed(j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesResult {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub observable_name: String,
    pub seeds: Vec<u64>,
    pub failures: Vec<Failure>,
}

impl TimeSeriesResult {
    fn from_rows(
        times: Vec<f64>,
        rows: &[Vec<f64>],
        name: &str,
        seeds: Vec<u64>,
        failures: Vec<Failure>,
    ) -> Self {
        let s = summarize_columns(rows);
        Self {
            times,
            means: s.iter().map(|x| x.mean).collect(),
            stderrs: s.iter().map(|x| x.stderr).collect(),
            observable_name: name.to_string(),
            seeds,
            failures,
        }
    }

    pub fn n(&self) -> usize {
        self.seeds.len()
    }
}

/// One point of a scaling-law scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub amplitude: f64,
    /// RPSD at the response frequency (Hz²/Hz).
    pub rpsd: f64,
    pub x: f64,
    pub y: f64,
    pub y_stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub x_label: String,
    pub y_label: String,
    pub response_freq_hz: f64,
    pub points: Vec<ScalingPoint>,
    pub fit: LinearFit,
    pub seeds: Vec<u64>,
    pub reference_seeds: Vec<u64>,
    pub failures: Vec<Failure>,
}

fn require_amplitudes(alphas: &[f64]) -> Result<()> {
    if alphas.len() < 3 {
        return Err(param(
            "amplitudes",
            format!("need at least 3 noise amplitudes, got {}", alphas.len()),
        ));
    }
    if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(param("amplitudes", "must be finite and non-negative"));
    }
    Ok(())
}

/// Fits through the origin using only points with x > 0.
fn scaling_fit(points: &[ScalingPoint]) -> Result<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().filter(|p| p.x > 0.0).map(|p| (p.x, p.y)).unzip();
    fit_linear_through_origin(&x, &y)
}

fn carrier_propagator(spec: &DriveSpec, noise: &NoiseConfig, record: RecordSchedule) -> Result<Propagator> {
    Propagator::new(spec, PropagationConfig::for_spec(spec, noise.dt()).with_record(record))
}

/// Record stride giving about `points` samples over `duration`.
fn stride_for(duration: f64, dt: f64, points: usize) -> usize {
    ((duration / dt) / points as f64).floor().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiDecayResult {
    pub series: TimeSeriesResult,
    pub envelope: Option<DampedRabiFit>,
    pub fit_error: Option<String>,
}

/// Resonant carrier drive from `|g⟩` under fresh noise per realization.
pub fn run_rabi_decay(
    noise: &NoiseConfig,
    rabi_hz: f64,
    duration: f64,
    ens: &EnsembleConfig,
) -> Result<RabiDecayResult> {
    noise.validate()?;
    noise.require_span(duration)?;
    let spec = DriveSpec::carrier(rabi_hz, 0.0);
    spec.validate()?;
    let record = RecordSchedule::TraceSamples {
        stride: stride_for(duration, noise.dt(), 2000),
    };
    let proto = carrier_propagator(&spec, noise, record)?;
    let out = run_ensemble(ens, |seed| {
        let trace = noise.trace(seed)?;
        let tr = proto.clone().run(
            &StateVector::initial(&spec),
            &trace,
            duration,
            &[Observable::ExcitedPopulation(0)],
        )?;
        Ok((tr.times, tr.series.into_iter().next().unwrap_or_default()))
    })?;
    let times = out.values[0].0.clone();
    let rows: Vec<Vec<f64>> = out.values.into_iter().map(|(_, p)| p).collect();
    let series = TimeSeriesResult::from_rows(times, &rows, "P_e", out.seeds, out.failures);
    let (envelope, fit_error) = match fit_damped_rabi(&series.times, &series.means, rabi_hz) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(RabiDecayResult {
        series,
        envelope,
        fit_error,
    })
}

/// One row of a π-pulse scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiErrorPoint {
    pub rabi_hz: f64,
    pub t_pi: f64,
    pub infidelity: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiScanResult {
    pub points: Vec<PiErrorPoint>,
    /// Rabi frequency of the largest mean infidelity.
    pub peak_rabi_hz: f64,
    pub seeds: Vec<u64>,
    pub failures: Vec<Failure>,
}

/// `1 − P_e(t_π)` for a resonant π pulse `t_π = 1/(2Ω)` at drive phase `φ(t)`.
fn pi_error(rabi_hz: f64, trace: &PhaseTrace) -> Result<f64> {
    let spec = DriveSpec::carrier(rabi_hz, 0.0);
    let cfg = PropagationConfig::for_trace(trace.dt).with_record(RecordSchedule::FinalOnly);
    let t_pi = 0.5 / rabi_hz;
    let tr = Propagator::new(&spec, cfg)?.run(&StateVector::initial(&spec), trace, t_pi, &[])?;
    Ok(1.0 - tr.final_state.excited_population(0))
}

/// π-pulse infidelity for each Rabi frequency, all pulses of a realization
/// sharing one noise trace.
pub fn scan_pi_error_vs_rabi(
    noise: &NoiseConfig,
    rabis_hz: &[f64],
    ens: &EnsembleConfig,
) -> Result<PiScanResult> {
    noise.validate()?;
    if rabis_hz.is_empty() {
        return Err(param("rabi_hz", "need at least one Rabi frequency"));
    }
    let nyquist = 0.5 * noise.params.sample_rate;
    for &r in rabis_hz {
        if !(r > 0.0 && r < nyquist / 4.0) {
            return Err(param(
                "rabi_hz",
                format!("{r} Hz must lie in (0, Nyquist/4 = {} Hz)", nyquist / 4.0),
            ));
        }
        noise.require_span(0.5 / r)?;
    }
    let out = run_ensemble(ens, |seed| {
        let trace = noise.trace(seed)?;
        rabis_hz.iter().map(|&r| pi_error(r, &trace)).collect::<Result<Vec<_>>>()
    })?;
    let stats = summarize_columns(&out.values);
    let points: Vec<PiErrorPoint> = rabis_hz
        .iter()
        .zip(&stats)
        .map(|(&r, s)| PiErrorPoint {
            rabi_hz: r,
            t_pi: 0.5 / r,
            infidelity: s.mean,
            stderr: s.stderr,
            n: s.n,
        })
        .collect();
    let peak_rabi_hz = points
        .iter()
        .max_by(|a, b| a.infidelity.total_cmp(&b.infidelity))
        .map(|p| p.rabi_hz)
        .unwrap_or(f64::NAN);
    Ok(PiScanResult {
        points,
        peak_rabi_hz,
        seeds: out.seeds,
        failures: out.failures,
    })
}

/// π-pulse infidelity versus `RPSD(Ω)·t_π` over noise amplitude scales.
pub fn scan_pi_error_vs_rpsd(
    noise: &NoiseConfig,
    amplitudes: &[f64],
    rabi_hz: f64,
    ens: &EnsembleConfig,
) -> Result<ScalingResult> {
    require_amplitudes(amplitudes)?;
    noise.validate()?;
    let t_pi = 0.5 / rabi_hz;
    noise.require_span(t_pi)?;
    let out = run_ensemble(ens, |seed| {
        let trace = noise.trace(seed)?;
        amplitudes
            .iter()
            .map(|&a| pi_error(rabi_hz, &trace.scaled(a)))
            .collect::<Result<Vec<_>>>()
    })?;
    let rpsd = noise.reference_rpsd(ens, rabi_hz, rabi_hz, amplitudes)?;
    let stats = summarize_columns(&out.values);
    let points: Vec<ScalingPoint> = amplitudes
        .iter()
        .zip(&rpsd)
        .zip(&stats)
        .map(|((&a, &r), s)| ScalingPoint {
            amplitude: a,
            rpsd: r,
            x: r * t_pi,
            y: s.mean,
            y_stderr: s.stderr,
            n: s.n,
        })
        .collect();
    Ok(ScalingResult {
        x_label: "rpsd_times_t_pi".into(),
        y_label: "pi_infidelity".into(),
        response_freq_hz: rabi_hz,
        fit: scaling_fit(&points)?,
        points,
        seeds: out.seeds,
        reference_seeds: noise.reference_seeds(ens),
        failures: out.failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpingResult {
    pub series: TimeSeriesResult,
    /// Absent when the fit failed; the raw series is kept either way.
    pub fit: Option<PumpingFit>,
    pub fit_error: Option<String>,
    /// Coherent off-resonant excitation bound `Ω²/(Ω²+Δ²)`.
    pub coherent_bound: f64,
}

fn check_pumping(rabi_hz: f64, detuning_hz: f64) -> Result<DriveSpec> {
    if detuning_hz.abs() < 5.0 * rabi_hz {
        return Err(param(
            "detuning_hz",
            format!("|Δ| = {} Hz must be at least 5Ω = {} Hz", detuning_hz.abs(), 5.0 * rabi_hz),
        ));
    }
    let spec = DriveSpec::carrier(rabi_hz, detuning_hz);
    spec.validate()?;
    Ok(spec)
}

fn pumping_rows(
    noise: &NoiseConfig,
    spec: &DriveSpec,
    duration: f64,
    amplitudes: &[f64],
    ens: &EnsembleConfig,
) -> Result<(Vec<f64>, EnsembleOutput<Vec<Vec<f64>>>)> {
    let record = RecordSchedule::TraceSamples {
        stride: stride_for(duration, noise.dt(), 200),
    };
    let proto = carrier_propagator(spec, noise, record)?;
    let out = run_ensemble(ens, |seed| {
        let trace = noise.trace(seed)?;
        amplitudes
            .iter()
            .map(|&a| {
                let tr = proto.clone().run(
                    &StateVector::initial(spec),
                    &trace.scaled(a),
                    duration,
                    &[Observable::ExcitedPopulation(0)],
                )?;
                Ok((tr.times, tr.series.into_iter().next().unwrap_or_default()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let times = out.values[0][0].0.clone();
    let values = out.values.into_iter().map(|v| v.into_iter().map(|(_, p)| p).collect()).collect();
    Ok((
        times,
        EnsembleOutput {
            seeds: out.seeds,
            values,
            failures: out.failures,
        },
    ))
}

fn fit_or_error(times: &[f64], means: &[f64]) -> (Option<PumpingFit>, Option<String>) {
    match fit_exponential_saturation(times, means) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Off-resonant carrier drive (`|Δ| ≥ 5Ω`) with a saturation fit.
pub fn run_pumping(
    noise: &NoiseConfig,
    rabi_hz: f64,
    detuning_hz: f64,
    duration: f64,
    ens: &EnsembleConfig,
) -> Result<PumpingResult> {
    noise.validate()?;
    noise.require_span(duration)?;
    let spec = check_pumping(rabi_hz, detuning_hz)?;
    let (times, out) = pumping_rows(noise, &spec, duration, &[1.0], ens)?;
    let rows: Vec<Vec<f64>> = out.values.iter().map(|v| v[0].clone()).collect();
    let series = TimeSeriesResult::from_rows(times, &rows, "P_e", out.seeds, out.failures);
    let (fit, fit_error) = fit_or_error(&series.times, &series.means);
    Ok(PumpingResult {
        series,
        fit,
        fit_error,
        coherent_bound: rabi_hz.powi(2) / (rabi_hz.powi(2) + detuning_hz.powi(2)),
    })
}

/// Fitted pumping rate Γ versus `RPSD(Δ)` over noise amplitude scales.
pub fn scan_pumping_rate(
    noise: &NoiseConfig,
    amplitudes: &[f64],
    rabi_hz: f64,
    detuning_hz: f64,
    duration: f64,
    ens: &EnsembleConfig,
) -> Result<ScalingResult> {
    require_amplitudes(amplitudes)?;
    noise.validate()?;
    noise.require_span(duration)?;
    let spec = check_pumping(rabi_hz, detuning_hz)?;
    let (times, out) = pumping_rows(noise, &spec, duration, amplitudes, ens)?;
    let rpsd = noise.reference_rpsd(ens, rabi_hz, detuning_hz, amplitudes)?;
    let mut points = Vec::with_capacity(amplitudes.len());
    for (k, (&a, &r)) in amplitudes.iter().zip(&rpsd).enumerate() {
        let rows: Vec<Vec<f64>> = out.values.iter().map(|v| v[k].clone()).collect();
        let means: Vec<f64> = summarize_columns(&rows).iter().map(|s| s.mean).collect();
        let fit = fit_exponential_saturation(&times, &means)
            .map_err(|e| Error::Fit(format!("amplitude {a}: {e}")))?;
        points.push(ScalingPoint {
            amplitude: a,
            rpsd: r,
            x: r,
            y: fit.gamma,
            y_stderr: fit.gamma_stderr,
            n: rows.len(),
        });
    }
    Ok(ScalingResult {
        x_label: "rpsd_at_detuning".into(),
        y_label: "gamma_per_s".into(),
        response_freq_hz: detuning_hz.abs(),
        fit: scaling_fit(&points)?,
        points,
        seeds: out.seeds,
        reference_seeds: noise.reference_seeds(ens),
        failures: out.failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingResult {
    pub cycle_time: f64,
    pub cycles: Vec<usize>,
    pub nbar: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Linear fit `n̄ = a + b·k` over cycles ≥ 2, as (slope, intercept, r²).
    pub late_trend: Option<(f64, f64, f64)>,
    pub truncation_warning: Option<String>,
    pub seeds: Vec<u64>,
    pub failures: Vec<Failure>,
}

fn truncation_warning(nbar: f64, cutoff: usize) -> Option<String> {
    (nbar > 0.4 * cutoff as f64).then(|| {
        format!("mean phonon number {nbar:.3} approaches the Fock cutoff {cutoff}; results may be truncated")
    })
}

/// Ordinary least squares `y = a + b·x`, returning (b, a, r²).
fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 3 {
        return None;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((b, my - b * mx, r2))
}

/// Blue-sideband driving for whole cycles `1/(ηΩ)`; n̄ after each listed
/// cycle count.
pub fn run_heating(
    noise: &NoiseConfig,
    spec: &DriveSpec,
    n_cycles: &[usize],
    ens: &EnsembleConfig,
) -> Result<HeatingResult> {
    noise.validate()?;
    spec.validate()?;
    if spec.kind != DriveKind::SidebandIon || spec.n_qubits != 1 {
        return Err(param("kind", "heating needs a single-ion sideband drive"));
    }
    if (spec.detuning_hz - spec.trap_hz).abs() > spec.lamb_dicke * spec.rabi_hz {
        return Err(param(
            "detuning_hz",
            "must lie on the blue sideband, within ηΩ of trap_hz",
        ));
    }
    if n_cycles.is_empty() || n_cycles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(param("n_cycles", "must be a non-empty strictly ascending list"));
    }
    let cycle = 1.0 / (spec.lamb_dicke * spec.rabi_hz);
    let times: Vec<f64> = n_cycles.iter().map(|&k| k as f64 * cycle).collect();
    let duration = *times.last().expect("non-empty");
    noise.require_span(duration)?;
    let cfg = PropagationConfig::for_spec(spec, noise.dt()).with_record(RecordSchedule::Times(times));
    let proto = Propagator::new(spec, cfg)?;
    let out = run_ensemble(ens, |seed| {
        let trace = noise.trace(seed)?;
        let tr = proto.clone().run(
            &StateVector::initial(spec),
            &trace,
            duration,
            &[Observable::MeanPhonons],
        )?;
        Ok(tr.series.into_iter().next().unwrap_or_default())
    })?;
    let stats = summarize_columns(&out.values);
    let nbar: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    let late: Vec<(f64, f64)> = n_cycles
        .iter()
        .zip(&nbar)
        .filter(|(k, _)| **k >= 2)
        .map(|(k, n)| (*k as f64, *n))
        .collect();
    let (kx, ny): (Vec<f64>, Vec<f64>) = late.into_iter().unzip();
    let max_nbar = nbar.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(HeatingResult {
        cycle_time: cycle,
        cycles: n_cycles.to_vec(),
        stderr: stats.iter().map(|s| s.stderr).collect(),
        late_trend: ols(&kx, &ny),
        truncation_warning: truncation_warning(max_nbar, spec.fock_cutoff),
        nbar,
        seeds: out.seeds,
        failures: out.failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub amplitude: f64,
    pub fidelity: f64,
    pub fidelity_stderr: f64,
    pub gate_time: f64,
    pub rpsd_at_response: f64,
    pub per_seed_fidelities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsGateResult {
    /// Noise-free Bell fidelity and the target phase calibrated from it.
    pub noise_free_fidelity: f64,
    pub target_phase: f64,
    pub gates: Vec<GateResult>,
    /// `x = T·RPSD(ν)`, `y = F₀ − F` (excess infidelity over the noise-free gate).
    pub scaling: ScalingResult,
    pub truncation_warning: Option<String>,
}

/// Noise-free MS gate: (final state, calibrated Bell phase, fidelity).
pub fn ms_noise_free(spec: &DriveSpec, dt: f64) -> Result<(StateVector, f64, f64)> {
    let t = spec.gate_time();
    let trace = PhaseTrace::zeros((t / dt).ceil() as usize + 2, dt);
    let cfg = PropagationConfig::for_spec(spec, dt).with_record(RecordSchedule::FinalOnly);
    let tr = Propagator::new(spec, cfg)?.run(&StateVector::initial(spec), &trace, t, &[])?;
    let theta = tr.final_state.optimal_bell_phase()?;
    let f = tr.final_state.bell_fidelity(theta)?;
    Ok((tr.final_state, theta, f))
}

/// MS gate fidelity for each noise amplitude scale, with the Bell target
/// phase frozen at its noise-free optimum.
pub fn run_ms_gate(
    noise: &NoiseConfig,
    amplitudes: &[f64],
    spec: &DriveSpec,
    ens: &EnsembleConfig,
) -> Result<MsGateResult> {
    require_amplitudes(amplitudes)?;
    noise.validate()?;
    spec.validate()?;
    if spec.kind != DriveKind::MolmerSorensen {
        return Err(param("kind", "MS gate runs need a MolmerSorensen drive"));
    }
    let t_gate = spec.gate_time();
    noise.require_span(t_gate)?;
    let (_, theta, f0) = ms_noise_free(spec, noise.dt())?;
    let cfg = PropagationConfig::for_spec(spec, noise.dt()).with_record(RecordSchedule::FinalOnly);
    let proto = Propagator::new(spec, cfg)?;
    let out = run_ensemble(ens, |seed| {
        let trace = noise.trace(seed)?;
        amplitudes
            .iter()
            .map(|&a| {
                let tr = proto
                    .clone()
                    .run(&StateVector::initial(spec), &trace.scaled(a), t_gate, &[])?;
                let nbar = tr.final_state.mean_phonons()?;
                Ok((tr.final_state.bell_fidelity(theta)?, nbar))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rpsd = noise.reference_rpsd(ens, spec.rabi_hz, spec.trap_hz, amplitudes)?;
    let mut gates = Vec::new();
    let mut points = Vec::new();
    let mut max_nbar = 0.0f64;
    for (k, (&a, &r)) in amplitudes.iter().zip(&rpsd).enumerate() {
        let fids: Vec<f64> = out.values.iter().map(|v| v[k].0).collect();
        for v in &out.values {
            max_nbar = max_nbar.max(v[k].1);
        }
        let s = summarize(&fids);
        points.push(ScalingPoint {
            amplitude: a,
            rpsd: r,
            x: t_gate * r,
            y: f0 - s.mean,
            y_stderr: s.stderr,
            n: s.n,
        });
        gates.push(GateResult {
            amplitude: a,
            fidelity: s.mean,
            fidelity_stderr: s.stderr,
            gate_time: t_gate,
            rpsd_at_response: r,
            per_seed_fidelities: fids,
        });
    }
    Ok(MsGateResult {
        noise_free_fidelity: f0,
        target_phase: theta,
        gates,
        scaling: ScalingResult {
            x_label: "gate_time_times_rpsd_at_trap".into(),
            y_label: "excess_infidelity".into(),
            response_freq_hz: spec.trap_hz,
            fit: scaling_fit(&points)?,
            points,
            seeds: out.seeds,
            reference_seeds: noise.reference_seeds(ens),
            failures: out.failures,
        },
        truncation_warning: truncation_warning(max_nbar, spec.fock_cutoff),
    })
}
