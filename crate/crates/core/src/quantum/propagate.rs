//! Time stepping of pure states through a sampled phase trace.
//!
//! Each step freezes the Hamiltonian (midpoint rule) or two Gauss-point
//! samples of it (fourth-order commutator-free Magnus) and applies the
//! resulting exponential to the state by a truncated Taylor series of the
//! sparse operator, substepped so that every series argument has norm ≤ 2.
//! The MS drive is stepped in the interaction frame of its trap term, where
//! the remaining time dependence is slow enough for the Magnus scheme.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hamiltonian::{Coeffs, DriveKind, DriveSpec, Hamiltonian};
use super::state::StateVector;
use crate::error::{param, Error, Result};
use crate::noisegen::PhaseTrace;

const TAYLOR_TOL: f64 = 1e-17;
const TAYLOR_MAX_TERMS: usize = 60;
const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `exp(−i·H(t + h/2)·h)`.
    Midpoint,
    /// Two-exponential commutator-free Magnus scheme of order four.
    Magnus4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lab,
    /// Rotating with the diagonal part of the Hamiltonian.
    Interaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSchedule {
    /// Every `stride`-th trace sample, starting at t = 0, plus the end time.
    TraceSamples { stride: usize },
    /// Explicit ascending times.
    Times(Vec<f64>),
    FinalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub dt: f64,
    pub method: Method,
    pub frame: Frame,
    pub norm_check_every: usize,
    pub record: RecordSchedule,
}

impl PropagationConfig {
    /// One midpoint step per trace sample, lab frame.
    pub fn for_trace(trace_dt: f64) -> Self {
        Self {
            dt: trace_dt,
            method: Method::Midpoint,
            frame: Frame::Lab,
            norm_check_every: 100,
            record: RecordSchedule::TraceSamples { stride: 1 },
        }
    }

    /// Default scheme for a drive: the MS tones need the interaction frame
    /// and the fourth-order scheme, everything else is exact between trace
    /// samples up to the phase interpolation.
    pub fn for_spec(spec: &DriveSpec, trace_dt: f64) -> Self {
        let mut cfg = Self::for_trace(trace_dt);
        if spec.kind == DriveKind::MolmerSorensen {
            cfg.method = Method::Magnus4;
            cfg.frame = Frame::Interaction;
        }
        cfg
    }

    pub fn with_record(mut self, record: RecordSchedule) -> Self {
        self.record = record;
        self
    }

    pub fn validate(&self, trace_dt: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(param("dt", "must be positive and finite"));
        }
        let ratio = trace_dt / self.dt;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return Err(param(
                "dt",
                format!("must divide the trace step {trace_dt:e} s, got {:e} s", self.dt),
            ));
        }
        if self.norm_check_every == 0 {
            return Err(param("norm_check_every", "must be at least 1"));
        }
        match &self.record {
            RecordSchedule::TraceSamples { stride: 0 } => {
                Err(param("record", "stride must be at least 1"))
            }
            RecordSchedule::Times(t) if t.windows(2).any(|w| w[1] < w[0]) => {
                Err(param("record", "times must be ascending"))
            }
            RecordSchedule::Times(t) if t.iter().any(|x| !(x.is_finite() && *x >= 0.0)) => {
                Err(param("record", "times must be finite and non-negative"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    ExcitedPopulation(usize),
    MeanPhonons,
    /// `|⟨i|ψ⟩|²` for basis index `i`.
    Population(usize),
    /// Bell fidelity against the given target phase.
    BellFidelity(f64),
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::ExcitedPopulation(q) => format!("P_e[{q}]"),
            Observable::MeanPhonons => "n_bar".into(),
            Observable::Population(i) => format!("P[{i}]"),
            Observable::BellFidelity(_) => "bell_fidelity".into(),
        }
    }

    fn check(&self, spec: &DriveSpec) -> Result<()> {
        let ok = match *self {
            Observable::ExcitedPopulation(q) => q < spec.n_qubits,
            Observable::MeanPhonons => spec.kind.has_motion(),
            Observable::Population(i) => i < spec.dim(),
            Observable::BellFidelity(_) => spec.n_qubits == 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "observable {} is undefined for this drive",
                self.name()
            )))
        }
    }

    fn needs_lab_phases(&self) -> bool {
        matches!(self, Observable::BellFidelity(_))
    }

    fn eval(&self, state: &StateVector) -> Result<f64> {
        match *self {
            Observable::ExcitedPopulation(q) => Ok(state.excited_population(q)),
            Observable::MeanPhonons => state.mean_phonons(),
            Observable::Population(i) => Ok(state.population(i)),
            Observable::BellFidelity(theta) => state.bell_fidelity(theta),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `series[k][j]` is observable `k` at `times[j]`.
    pub series: Vec<Vec<f64>>,
    pub final_state: StateVector,
    pub steps: usize,
    pub renormalizations: usize,
}

/// Reusable propagator for one drive; holds the Hamiltonian and scratch space.
#[derive(Debug, Clone)]
pub struct Propagator {
    ham: Hamiltonian,
    cfg: PropagationConfig,
    term: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

// Commutator-free Magnus coefficients and Gauss nodes.
const SQRT3: f64 = 1.732_050_807_568_877_2;
const CF4_A1: f64 = (3.0 - 2.0 * SQRT3) / 12.0;
const CF4_A2: f64 = (3.0 + 2.0 * SQRT3) / 12.0;
const GAUSS_C1: f64 = 0.5 - SQRT3 / 6.0;
const GAUSS_C2: f64 = 0.5 + SQRT3 / 6.0;

impl Propagator {
    pub fn new(spec: &DriveSpec, cfg: PropagationConfig) -> Result<Self> {
        let ham = Hamiltonian::new(spec)?;
        let dim = ham.dim();
        Ok(Self {
            ham,
            cfg,
            term: vec![Complex64::new(0.0, 0.0); dim],
            tmp: vec![Complex64::new(0.0, 0.0); dim],
        })
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.ham
    }

    pub fn config(&self) -> &PropagationConfig {
        &self.cfg
    }

    fn coeffs(&self, t: f64, phase: f64) -> Coeffs {
        match self.cfg.frame {
            Frame::Lab => self.ham.lab_coeffs(t, phase),
            Frame::Interaction => self.ham.interaction_coeffs(t, phase),
        }
    }

    /// `psi ← exp(−i·h·H(c))·psi`.
    fn exp_action(&mut self, c: &Coeffs, h: f64, psi: &mut [Complex64]) {
        let bound = self.ham.norm_bound(c) * h.abs();
        let substeps = (bound / 2.0).ceil().max(1.0) as usize;
        let hs = h / substeps as f64;
        for _ in 0..substeps {
            self.term.copy_from_slice(psi);
            let mut small = 0;
            for m in 1..=TAYLOR_MAX_TERMS {
                self.ham.apply(c, &self.term, &mut self.tmp);
                let f = Complex64::new(0.0, -hs / m as f64);
                let mut tn = 0.0;
                for ((p, t), x) in psi.iter_mut().zip(self.term.iter_mut()).zip(&self.tmp) {
                    *t = x * f;
                    *p += *t;
                    tn += t.norm_sqr();
                }
                if tn.sqrt() <= TAYLOR_TOL {
                    small += 1;
                    if small == 2 {
                        break;
                    }
                } else {
                    small = 0;
                }
            }
        }
    }

    fn step(&mut self, trace: &PhaseTrace, t: f64, h: f64, psi: &mut [Complex64]) {
        match self.cfg.method {
            Method::Midpoint => {
                let tm = t + 0.5 * h;
                let c = self.coeffs(tm, trace.phase_at(tm));
                self.exp_action(&c, h, psi);
            }
            Method::Magnus4 => {
                let (t1, t2) = (t + GAUSS_C1 * h, t + GAUSS_C2 * h);
                let c1 = self.coeffs(t1, trace.phase_at(t1));
                let c2 = self.coeffs(t2, trace.phase_at(t2));
                let first = Coeffs::combine(CF4_A2, &c1, CF4_A1, &c2);
                let second = Coeffs::combine(CF4_A1, &c1, CF4_A2, &c2);
                self.exp_action(&first, h, psi);
                self.exp_action(&second, h, psi);
            }
        }
    }

    fn record_times(&self, trace: &PhaseTrace, duration: f64) -> Result<Vec<f64>> {
        let eps = 1e-9 * trace.dt;
        Ok(match &self.cfg.record {
            RecordSchedule::TraceSamples { stride } => {
                let every = *stride as f64 * trace.dt;
                let n = ((duration + eps) / every).floor() as usize;
                let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * every).collect();
                if duration - times[n] > eps {
                    times.push(duration);
                }
                times
            }
            RecordSchedule::Times(times) => {
                if let Some(t) = times.iter().find(|&&t| t > duration + eps) {
                    return Err(Error::Range(format!(
                        "record time {t:e} s lies beyond the duration {duration:e} s"
                    )));
                }
                times.clone()
            }
            RecordSchedule::FinalOnly => vec![duration],
        })
    }

    /// Rotates an interaction-frame state at time `t` back to the lab frame.
    fn to_lab(&self, psi: &[Complex64], t: f64) -> Vec<Complex64> {
        match self.cfg.frame {
            Frame::Lab => psi.to_vec(),
            Frame::Interaction => psi
                .iter()
                .zip(self.ham.frame_energies())
                .map(|(a, e)| a * Complex64::from_polar(1.0, -e * t))
                .collect(),
        }
    }

    pub fn run(
        &mut self,
        state: &StateVector,
        trace: &PhaseTrace,
        duration: f64,
        observables: &[Observable],
    ) -> Result<Trajectory> {
        let spec = *self.ham.spec();
        if state.dim() != spec.dim() || state.spec().kind != spec.kind {
            return Err(Error::Contract(format!(
                "state of dimension {} does not match the drive (dimension {})",
                state.dim(),
                spec.dim()
            )));
        }
        self.cfg.validate(trace.dt)?;
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(param("duration", "must be finite and non-negative"));
        }
        if duration > trace.span() * (1.0 + 1e-12) {
            return Err(Error::Range(format!(
                "duration {duration:e} s exceeds the trace span {:e} s",
                trace.span()
            )));
        }
        for o in observables {
            o.check(&spec)?;
        }
        let lab_needed = observables.iter().any(Observable::needs_lab_phases);

        let times = self.record_times(trace, duration)?;
        let mut series = vec![Vec::with_capacity(times.len()); observables.len()];
        let mut psi = state.amplitudes.clone();
        let (mut t, mut steps, mut renorms) = (0.0, 0usize, 0usize);
        let check_every = self.cfg.norm_check_every;

        for &target in &times {
            let span = target - t;
            if span > 0.0 {
                let n = (span / self.cfg.dt - 1e-9).ceil().max(1.0) as usize;
                let h = span / n as f64;
                for i in 0..n {
                    self.step(trace, t + i as f64 * h, h, &mut psi);
                    steps += 1;
                    if steps % check_every == 0 {
                        renorms += check_norm(&mut psi, steps)?;
                    }
                }
                t = target;
            }
            renorms += check_norm(&mut psi, steps)?;
            let snapshot = if lab_needed {
                self.to_lab(&psi, t)
            } else {
                psi.clone()
            };
            let snap = StateVector::from_amplitudes(&spec, snapshot)?;
            for (o, s) in observables.iter().zip(series.iter_mut()) {
                s.push(o.eval(&snap)?);
            }
        }
        renorms += check_norm(&mut psi, steps)?;
        let final_state = StateVector::from_amplitudes(&spec, self.to_lab(&psi, duration))?;
        Ok(Trajectory {
            times,
            series,
            final_state,
            steps,
            renormalizations: renorms,
        })
    }
}

/// Renormalises when the norm has drifted; returns 1 if it did.
fn check_norm(psi: &mut [Complex64], step: usize) -> Result<usize> {
    let n = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if !n.is_finite() {
        return Err(Error::Numerical {
            step,
            reason: "state amplitudes became non-finite".into(),
        });
    }
    if (n - 1.0).abs() > NORM_TOL {
        for a in psi.iter_mut() {
            *a /= n;
        }
        return Ok(1);
    }
    Ok(0)
}

/// Propagates `state` under `spec` through `trace` for `duration` seconds.
pub fn propagate(
    state: &StateVector,
    spec: &DriveSpec,
    trace: &PhaseTrace,
    duration: f64,
    cfg: &PropagationConfig,
    observables: &[Observable],
) -> Result<Trajectory> {
    Propagator::new(spec, cfg.clone())?.run(state, trace, duration, observables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::hamiltonian::basis_index;
    use crate::quantum::linalg::expm;
    use std::f64::consts::PI;

    fn zero_trace(duration: f64, dt: f64) -> PhaseTrace {
        PhaseTrace::zeros((duration / dt).ceil() as usize + 2, dt)
    }

    fn carrier_pe(spec: &DriveSpec, trace: &PhaseTrace, duration: f64) -> Trajectory {
        let cfg = PropagationConfig::for_trace(trace.dt);
        propagate(
            &StateVector::initial(spec),
            spec,
            trace,
            duration,
            &cfg,
            &[Observable::ExcitedPopulation(0)],
        )
        .unwrap()
    }

    #[test]
    fn resonant_pi_pulse() {
        let spec = DriveSpec::carrier(100e3, 0.0);
        let dt = 1e-7;
        let tr = carrier_pe(&spec, &zero_trace(5e-6, dt), 5e-6);
        assert!((tr.series[0].last().unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn detuned_rabi_matches_generalized_formula() {
        let (om, de) = (50e3, 80e3);
        let spec = DriveSpec::carrier(om, de);
        let trace = zero_trace(40e-6, 1e-7);
        let tr = carrier_pe(&spec, &trace, 40e-6);
        let w = (om * om + de * de).sqrt();
        for (t, p) in tr.times.iter().zip(&tr.series[0]) {
            let expect = om * om / (w * w) * (PI * w * t).sin().powi(2);
            assert!((p - expect).abs() < 1e-6, "t={t} p={p} expect={expect}");
        }
        assert_eq!(tr.times.len(), 401);
    }

    #[test]
    fn constant_phase_is_unobservable() {
        let spec = DriveSpec::carrier(70e3, 30e3);
        let dt = 1e-7;
        let a = carrier_pe(&spec, &zero_trace(20e-6, dt), 20e-6);
        let shifted = PhaseTrace::new(vec![1.234; 202], dt, 0).unwrap();
        let b = carrier_pe(&spec, &shifted, 20e-6);
        for (x, y) in a.series[0].iter().zip(&b.series[0]) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn exp_action_matches_dense_exponential() {
        let spec = DriveSpec::molmer_sorensen(20e3, 200e3, 0.15, 6);
        let cfg = PropagationConfig::for_trace(1e-7);
        let mut p = Propagator::new(&spec, cfg).unwrap();
        let (t, phi, h) = (1.7e-6, 0.4, 3e-7);
        let c = p.ham.lab_coeffs(t, phi);
        let dense = p.ham.dense(t, phi);
        let u = expm(&dense.scale(Complex64::new(0.0, -h)));
        let mut psi: Vec<Complex64> = (0..spec.dim())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let n = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|a| *a /= n);
        let expect = u.matvec(&psi);
        p.exp_action(&c, h, &mut psi);
        let err = psi
            .iter()
            .zip(&expect)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "err={err}");
    }

    #[test]
    fn sideband_energy_is_conserved_at_frozen_phase() {
        let spec = DriveSpec::blue_sideband(20e3, 200e3, 0.15, 10);
        let phase = 0.8;
        let dt = 1e-7;
        let trace = PhaseTrace::new(vec![phase; 1001], dt, 0).unwrap();
        let h = Hamiltonian::new(&spec).unwrap().dense(0.0, phase);
        let mut psi = StateVector::initial(&spec);
        psi.amplitudes[basis_index(&spec, &[1], 2)] = Complex64::new(0.0, 1.0);
        psi.normalize();
        let e0 = h.expectation(&psi.amplitudes).re;
        let cfg = PropagationConfig::for_trace(dt).with_record(RecordSchedule::FinalOnly);
        let tr = propagate(&psi, &spec, &trace, 1e-4, &cfg, &[]).unwrap();
        let e1 = h.expectation(&tr.final_state.amplitudes).re;
        assert!(((e1 - e0) / e0).abs() < 1e-8, "e0={e0} e1={e1}");
        assert_eq!(tr.steps, 1000);
    }

    #[test]
    fn norm_is_preserved_without_renormalization() {
        let spec = DriveSpec::blue_sideband(20e3, 200e3, 0.15, 10);
        let dt = 1e-7;
        let samples: Vec<f64> = (0..10_001).map(|i| (i as f64 * 0.01).sin()).collect();
        let trace = PhaseTrace::new(samples, dt, 0).unwrap();
        let mut cfg = PropagationConfig::for_trace(dt).with_record(RecordSchedule::FinalOnly);
        cfg.norm_check_every = usize::MAX;
        let tr = propagate(&StateVector::initial(&spec), &spec, &trace, 1e-3, &cfg, &[]).unwrap();
        assert_eq!(tr.steps, 10_000);
        assert!((tr.final_state.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn magnus_converges_at_fourth_order() {
        // Interaction-frame MS against a fine-step reference.
        let spec = DriveSpec::molmer_sorensen(20e3, 200e3, 0.15, 4);
        let dur = 10e-6;
        let fine_dt = 2.5e-9;
        let trace = zero_trace(dur, 1e-7);
        let run = |dt: f64| {
            let cfg = PropagationConfig {
                dt,
                method: Method::Magnus4,
                frame: Frame::Interaction,
                norm_check_every: 1000,
                record: RecordSchedule::FinalOnly,
            };
            propagate(&StateVector::initial(&spec), &spec, &trace, dur, &cfg, &[])
                .unwrap()
                .final_state
                .amplitudes
        };
        let reference = run(fine_dt);
        let err = |dt| {
            run(dt)
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-7), err(5e-8));
        let order = (e1 / e2).log2();
        assert!(order > 3.5, "e1={e1} e2={e2} order={order}");
    }

    #[test]
    fn frames_agree() {
        let spec = DriveSpec::molmer_sorensen(20e3, 200e3, 0.15, 5);
        let dur = 5e-6;
        let samples: Vec<f64> = (0..60).map(|i| 0.3 * (i as f64 * 0.2).sin()).collect();
        let trace = PhaseTrace::new(samples, 1e-7, 0).unwrap();
        let run = |method, frame, dt| {
            let cfg = PropagationConfig {
                dt,
                method,
                frame,
                norm_check_every: 100,
                record: RecordSchedule::FinalOnly,
            };
            propagate(&StateVector::initial(&spec), &spec, &trace, dur, &cfg, &[])
                .unwrap()
                .final_state
                .amplitudes
        };
        let a = run(Method::Magnus4, Frame::Interaction, 2.5e-8);
        let b = run(Method::Magnus4, Frame::Lab, 2.5e-9);
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-6, "err={err}");
    }

    #[test]
    fn contract_and_range_errors() {
        let spec = DriveSpec::carrier(1e3, 0.0);
        let trace = zero_trace(1e-5, 1e-7);
        let cfg = PropagationConfig::for_trace(1e-7);
        let ms = DriveSpec::molmer_sorensen(20e3, 200e3, 0.15, 4);
        assert!(matches!(
            propagate(&StateVector::initial(&ms), &spec, &trace, 1e-6, &cfg, &[]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            propagate(&StateVector::initial(&spec), &spec, &trace, 1.0, &cfg, &[]),
            Err(Error::Range(_))
        ));
        let bad = PropagationConfig { dt: 3e-8, ..cfg.clone() };
        assert!(propagate(&StateVector::initial(&spec), &spec, &trace, 1e-6, &bad, &[]).is_err());
        assert!(matches!(
            propagate(&StateVector::initial(&spec), &spec, &trace, 1e-6, &cfg, &[Observable::MeanPhonons]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn non_finite_phase_reports_step() {
        let spec = DriveSpec::carrier(1e3, 0.0);
        let mut trace = zero_trace(1e-5, 1e-7);
        trace.samples[30] = f64::NAN;
        let mut cfg = PropagationConfig::for_trace(1e-7);
        cfg.norm_check_every = 1;
        match propagate(&StateVector::initial(&spec), &spec, &trace, 1e-5, &cfg, &[]) {
            Err(Error::Numerical { step, .. }) => assert_eq!(step, 30),
            other => panic!("unexpected {other:?}"),
        }
    }
}
