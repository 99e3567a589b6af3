//! Run configuration: file schema, defaults and validation.
//!
//! A document (JSON or TOML) lists only what differs from the experiment's
//! desk-scale defaults. [`ConfigFile::resolve`] fills the rest and checks
//! every experiment-specific precondition before anything is computed. The
//! resolved [`RunConfig`] serialises back into a complete `ConfigFile`, so
//! `parse → resolve → serialise` is idempotent.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{EnsembleConfig, NoiseConfig, ReferenceRpsd};
use crate::noisegen::{NoiseModelParams, ServoShape};
use crate::quantum::{DriveKind, DriveSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Rabi,
    PiScanRabi,
    PiScanRpsd,
    Pumping,
    PumpingScan,
    Heating,
    MsGate,
    NoiseOnly,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Rabi => "rabi",
            Experiment::PiScanRabi => "pi-scan-rabi",
            Experiment::PiScanRpsd => "pi-scan-rpsd",
            Experiment::Pumping => "pumping",
            Experiment::PumpingScan => "pumping-scan",
            Experiment::Heating => "heating",
            Experiment::MsGate => "ms-gate",
            Experiment::NoiseOnly => "noise-only",
        }
    }

    fn drive_kind(self) -> Option<DriveKind> {
        match self {
            Experiment::Rabi
            | Experiment::PiScanRabi
            | Experiment::PiScanRpsd
            | Experiment::Pumping
            | Experiment::PumpingScan => Some(DriveKind::Carrier),
            Experiment::Heating => Some(DriveKind::SidebandIon),
            Experiment::MsGate => Some(DriveKind::MolmerSorensen),
            Experiment::NoiseOnly => None,
        }
    }

    fn uses_amplitudes(self) -> bool {
        matches!(
            self,
            Experiment::PiScanRpsd | Experiment::PumpingScan | Experiment::MsGate
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leak: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_target: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unity_gain_freq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeros: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bump_quality: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_traces: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<DriveKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rabi_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trap_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lamb_dicke: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fock_cutoff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_qubits: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_realizations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_parallel: Option<usize>,
}

/// Scenario-specific inputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    /// Drive time (s) for `rabi` and the pumping runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Rabi frequencies (Hz) for `pi-scan-rabi`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rabi_list: Option<Vec<f64>>,
    /// Noise amplitude scale factors for the scaling scans.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    /// Cycle counts for `heating`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycles: Option<Vec<usize>>,
}

/// Configuration document as written by a user.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub servo: ServoSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub paper_scale: bool,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<Experiment>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub paper_scale: bool,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub duration: f64,
    pub rabi_list: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub cycles: Vec<usize>,
}

/// Fully resolved and validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub noise: NoiseConfig,
    pub drive: DriveSpec,
    pub ensemble: EnsembleConfig,
    pub params: RunParams,
    pub output_dir: PathBuf,
    pub paper_scale: bool,
}

fn cfg_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{key}`: {msg}"))
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("JSON: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("TOML: {e}")))
    }

    /// Reads JSON for `.json` files and TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    pub fn resolve(&self, ov: &Overrides) -> Result<RunConfig> {
        let experiment = ov
            .experiment
            .or(self.experiment)
            .ok_or_else(|| cfg_err("experiment", "missing"))?;
        let paper_scale = ov.paper_scale || self.paper_scale;
        let d = Defaults::for_experiment(experiment);

        let n = &self.noise;
        let params = NoiseModelParams {
            h0: n.h0.unwrap_or(0.0),
            leak: n.leak.unwrap_or(NoiseModelParams::default().leak),
            sample_rate: n.sample_rate.unwrap_or(NoiseModelParams::default().sample_rate),
            n_samples: n.n_samples.unwrap_or(d.n_samples),
            rms_target: n.rms_target,
        };
        let s = &self.servo;
        let fu = s.unity_gain_freq.unwrap_or(d.unity_gain_freq);
        let base = ServoShape::with_unity_gain(fu);
        let shape = ServoShape {
            enabled: s.enabled.unwrap_or(true),
            unity_gain_freq: fu,
            gain_db: s.gain_db.unwrap_or(base.gain_db),
            poles: s.poles.clone().unwrap_or(base.poles),
            zeros: s.zeros.clone().unwrap_or(base.zeros),
            bump_quality: s.bump_quality.unwrap_or(base.bump_quality),
        };
        let r = &self.reference;
        let rd = ReferenceRpsd::default();
        let reference = ReferenceRpsd {
            n_traces: r.n_traces.unwrap_or(rd.n_traces),
            n_samples: r.n_samples.unwrap_or(rd.n_samples),
            band_hz: r.band_hz.unwrap_or(rd.band_hz),
        };
        let noise = NoiseConfig {
            params,
            shape,
            reference,
        };

        let drive = self.resolve_drive(experiment, &d, paper_scale)?;

        let e = &self.ensemble;
        let ed = EnsembleConfig::default();
        let mut ensemble = EnsembleConfig {
            n_realizations: e.n_realizations.unwrap_or(ed.n_realizations),
            base_seed: e.base_seed.unwrap_or(ed.base_seed),
            max_parallel: e.max_parallel.unwrap_or(ed.max_parallel),
        };
        if paper_scale {
            ensemble.n_realizations = 1000;
        }
        if let Some(j) = ov.jobs {
            ensemble.max_parallel = j;
        }
        if let Some(s) = ov.seed {
            ensemble.base_seed = s;
        }

        let p = &self.params;
        let params = RunParams {
            duration: p.duration.unwrap_or(d.duration),
            rabi_list: p.rabi_list.clone().unwrap_or_else(|| d.rabi_list.clone()),
            amplitudes: p.amplitudes.clone().unwrap_or_else(|| d.amplitudes.clone()),
            cycles: p.cycles.clone().unwrap_or_else(|| d.cycles.clone()),
        };
        let output_dir = ov
            .output_dir
            .clone()
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(format!("runs/{}", experiment.name())));

        let cfg = RunConfig {
            experiment,
            noise,
            drive,
            ensemble,
            params,
            output_dir,
            paper_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_drive(&self, experiment: Experiment, d: &Defaults, paper_scale: bool) -> Result<DriveSpec> {
        let s = &self.drive;
        let kind = match (experiment.drive_kind(), s.kind) {
            (Some(k), Some(given)) if k != given => {
                return Err(cfg_err(
                    "drive.kind",
                    format!("{given:?} does not fit experiment {}", experiment.name()),
                ))
            }
            (Some(k), _) => k,
            (None, given) => given.unwrap_or(DriveKind::Carrier),
        };
        let rabi = s.rabi_hz.unwrap_or(d.rabi_hz);
        let trap = s.trap_hz.unwrap_or(match kind {
            DriveKind::Carrier => 0.0,
            _ => 200e3,
        });
        let eta = s.lamb_dicke.unwrap_or(match kind {
            DriveKind::Carrier => 0.0,
            _ => 0.15,
        });
        let mut fock = s.fock_cutoff.unwrap_or(match kind {
            DriveKind::Carrier => 1,
            _ => 15,
        });
        if paper_scale && kind.has_motion() {
            fock = 30;
        }
        let default_detuning = match kind {
            DriveKind::Carrier => d.detuning_hz,
            DriveKind::SidebandIon => DriveSpec::blue_sideband(rabi, trap, eta, fock).detuning_hz,
            DriveKind::MolmerSorensen => 2.0 * eta * rabi,
        };
        Ok(DriveSpec {
            kind,
            rabi_hz: rabi,
            detuning_hz: s.detuning_hz.unwrap_or(default_detuning),
            trap_hz: trap,
            lamb_dicke: eta,
            fock_cutoff: fock,
            n_qubits: s.n_qubits.unwrap_or(match kind {
                DriveKind::MolmerSorensen => 2,
                _ => 1,
            }),
        })
    }
}

/// Desk-scale defaults; each scenario's noise bump overlaps its response
/// frequency.
struct Defaults {
    n_samples: usize,
    unity_gain_freq: f64,
    rabi_hz: f64,
    detuning_hz: f64,
    duration: f64,
    rabi_list: Vec<f64>,
    amplitudes: Vec<f64>,
    cycles: Vec<usize>,
}

impl Defaults {
    fn for_experiment(e: Experiment) -> Self {
        let mut d = Defaults {
            n_samples: 8192,
            unity_gain_freq: 200e3,
            rabi_hz: 100e3,
            detuning_hz: 0.0,
            duration: 50e-6,
            rabi_list: vec![25e3, 50e3, 75e3, 100e3, 125e3, 150e3, 175e3, 200e3, 250e3, 300e3],
            amplitudes: vec![0.3, 0.4, 0.5, 0.65, 0.8, 1.0],
            cycles: (1..=10).collect(),
        };
        match e {
            Experiment::Pumping | Experiment::PumpingScan => {
                d.n_samples = 32768;
                d.unity_gain_freq = 300e3;
                d.rabi_hz = 20e3;
                d.detuning_hz = 300e3;
                d.duration = 3.2e-3;
            }
            Experiment::Heating => {
                d.n_samples = 36000;
                d.rabi_hz = 20e3;
            }
            Experiment::MsGate => {
                d.rabi_hz = 20e3;
            }
            _ => {}
        }
        d
    }
}

impl RunConfig {
    pub fn name(&self) -> &'static str {
        self.experiment.name()
    }

    /// Checks every precondition of the chosen experiment.
    pub fn validate(&self) -> Result<()> {
        let noise = &self.noise;
        noise
            .validate()
            .map_err(|e| prefix_param(e, "noise"))?;
        let span = noise.span();
        let e = self.experiment;
        if let Some(kind) = e.drive_kind() {
            if kind != DriveKind::Carrier || e != Experiment::PiScanRabi {
                self.drive.validate().map_err(|e| prefix_param(e, "drive"))?;
            }
        }
        let p = &self.params;
        let fits = |t: f64, key: &str| {
            if !(t.is_finite() && t > 0.0) {
                Err(cfg_err(key, format!("must be a positive time in s, got {t}")))
            } else if t > span * (1.0 + 1e-12) {
                Err(cfg_err(
                    "noise.n_samples",
                    format!("trace span {span:e} s is shorter than {key} = {t:e} s"),
                ))
            } else {
                Ok(())
            }
        };
        match e {
            Experiment::Rabi | Experiment::Pumping | Experiment::PumpingScan => {
                fits(p.duration, "params.duration")?
            }
            Experiment::PiScanRpsd => fits(0.5 / self.drive.rabi_hz, "drive.rabi_hz (t_pi)")?,
            Experiment::PiScanRabi => {
                if p.rabi_list.is_empty() {
                    return Err(cfg_err("params.rabi_list", "must not be empty"));
                }
                let limit = noise.params.sample_rate / 8.0;
                for &r in &p.rabi_list {
                    if !(r > 0.0 && r < limit) {
                        return Err(cfg_err(
                            "params.rabi_list",
                            format!("{r} Hz must lie in (0, Nyquist/4 = {limit} Hz)"),
                        ));
                    }
                    fits(0.5 / r, "params.rabi_list (t_pi)")?;
                }
            }
            Experiment::Heating => {
                if p.cycles.is_empty() || p.cycles.windows(2).any(|w| w[1] <= w[0]) || p.cycles[0] == 0
                {
                    return Err(cfg_err("params.cycles", "must be positive and strictly ascending"));
                }
                let cycle = 1.0 / (self.drive.lamb_dicke * self.drive.rabi_hz);
                fits(*p.cycles.last().expect("non-empty") as f64 * cycle, "params.cycles (drive time)")?;
                if (self.drive.detuning_hz - self.drive.trap_hz).abs()
                    > self.drive.lamb_dicke * self.drive.rabi_hz
                {
                    return Err(cfg_err("drive.detuning_hz", "must lie on the blue sideband"));
                }
            }
            Experiment::MsGate => fits(self.drive.gate_time(), "drive.detuning_hz (gate time)")?,
            Experiment::NoiseOnly => {}
        }
        if matches!(e, Experiment::Pumping | Experiment::PumpingScan)
            && self.drive.detuning_hz.abs() < 5.0 * self.drive.rabi_hz
        {
            return Err(cfg_err("drive.detuning_hz", "pumping needs |Δ| ≥ 5Ω"));
        }
        if e.uses_amplitudes() {
            if p.amplitudes.len() < 3 {
                return Err(cfg_err("params.amplitudes", "need at least 3 noise amplitudes"));
            }
            if p.amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(cfg_err("params.amplitudes", "must be finite and non-negative"));
            }
        }
        self.ensemble
            .validate()
            .map_err(|e| prefix_param(e, "ensemble"))?;
        Ok(())
    }

    /// Complete document equivalent to this configuration.
    pub fn to_file(&self) -> ConfigFile {
        let n = &self.noise;
        let d = &self.drive;
        ConfigFile {
            experiment: Some(self.experiment),
            noise: NoiseSection {
                h0: Some(n.params.h0),
                leak: Some(n.params.leak),
                sample_rate: Some(n.params.sample_rate),
                n_samples: Some(n.params.n_samples),
                rms_target: n.params.rms_target,
            },
            servo: ServoSection {
                enabled: Some(n.shape.enabled),
                unity_gain_freq: Some(n.shape.unity_gain_freq),
                gain_db: Some(n.shape.gain_db),
                poles: Some(n.shape.poles.clone()),
                zeros: Some(n.shape.zeros.clone()),
                bump_quality: Some(n.shape.bump_quality),
            },
            reference: ReferenceSection {
                n_traces: Some(n.reference.n_traces),
                n_samples: Some(n.reference.n_samples),
                band_hz: Some(n.reference.band_hz),
            },
            drive: DriveSection {
                kind: Some(d.kind),
                rabi_hz: Some(d.rabi_hz),
                detuning_hz: Some(d.detuning_hz),
                trap_hz: Some(d.trap_hz),
                lamb_dicke: Some(d.lamb_dicke),
                fock_cutoff: Some(d.fock_cutoff),
                n_qubits: Some(d.n_qubits),
            },
            ensemble: EnsembleSection {
                n_realizations: Some(self.ensemble.n_realizations),
                base_seed: Some(self.ensemble.base_seed),
                max_parallel: Some(self.ensemble.max_parallel),
            },
            params: ParamsSection {
                duration: Some(self.params.duration),
                rabi_list: Some(self.params.rabi_list.clone()),
                amplitudes: Some(self.params.amplitudes.clone()),
                cycles: Some(self.params.cycles.clone()),
            },
            output_dir: Some(self.output_dir.clone()),
            paper_scale: self.paper_scale,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("config serialises")
    }
}

/// Turns a module parameter error into a config error naming the full key.
fn prefix_param(e: Error, section: &str) -> Error {
    match e {
        Error::Parameter { name, reason } => cfg_err(&format!("{section}.{name}"), reason),
        other => Error::Config(format!("`{section}`: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(e: Experiment) -> Overrides {
        Overrides {
            experiment: Some(e),
            ..Default::default()
        }
    }

    #[test]
    fn minimal_rabi_config() {
        let f = ConfigFile::from_json(
            r#"{"drive": {"rabi_hz": 100e3}, "params": {"duration": 50e-6}, "noise": {"h0": 0}}"#,
        )
        .unwrap();
        let c = f.resolve(&ov(Experiment::Rabi)).unwrap();
        assert_eq!(c.drive.kind, DriveKind::Carrier);
        assert_eq!(c.noise.params.h0, 0.0);
        assert_eq!(c.params.duration, 50e-6);
    }

    #[test]
    fn ms_with_one_qubit_is_rejected() {
        let f = ConfigFile::from_toml("[drive]\nn_qubits = 1\n").unwrap();
        let err = f.resolve(&ov(Experiment::MsGate)).unwrap_err().to_string();
        assert!(err.contains("MolmerSorensen requires n_qubits=2"), "{err}");
        assert!(err.contains("drive.n_qubits"), "{err}");
    }

    #[test]
    fn paper_scale_ms() {
        let c = ConfigFile::default()
            .resolve(&Overrides {
                paper_scale: true,
                ..ov(Experiment::MsGate)
            })
            .unwrap();
        assert_eq!(c.ensemble.n_realizations, 1000);
        assert_eq!(c.drive.fock_cutoff, 30);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = ConfigFile::from_toml("[drive]\nrabi_khz = 3\n").unwrap_err().to_string();
        assert!(err.contains("rabi_khz"), "{err}");
        let err = ConfigFile::from_json(r#"{"ensembel": {}}"#).unwrap_err().to_string();
        assert!(err.contains("ensembel"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let f = ConfigFile::from_toml("experiment = \"rabi\"\n[ensemble]\nbase_seed = 5\nmax_parallel = 3\n")
            .unwrap();
        let c = f
            .resolve(&Overrides {
                seed: Some(9),
                jobs: Some(1),
                output_dir: Some("x".into()),
                ..Default::default()
            })
            .unwrap();
        assert_eq!(c.ensemble.base_seed, 9);
        assert_eq!(c.ensemble.max_parallel, 1);
        assert_eq!(c.output_dir, PathBuf::from("x"));
        assert_eq!(c.experiment, Experiment::Rabi);
    }

    #[test]
    fn resolution_is_idempotent() {
        for e in [
            Experiment::Rabi,
            Experiment::PiScanRabi,
            Experiment::PiScanRpsd,
            Experiment::Pumping,
            Experiment::PumpingScan,
            Experiment::Heating,
            Experiment::MsGate,
            Experiment::NoiseOnly,
        ] {
            let c = ConfigFile::default().resolve(&ov(e)).unwrap();
            let json = c.to_json();
            let again = ConfigFile::from_json(&json).unwrap().resolve(&Overrides::default()).unwrap();
            assert_eq!(c, again);
            assert_eq!(json, again.to_json());
        }
    }

    #[test]
    fn experiment_specific_checks() {
        let f = ConfigFile::from_toml("[params]\nduration = 1.0\n").unwrap();
        let err = f.resolve(&ov(Experiment::Rabi)).unwrap_err().to_string();
        assert!(err.contains("noise.n_samples"), "{err}");

        let f = ConfigFile::from_toml("[drive]\ndetuning_hz = 50e3\n").unwrap();
        let err = f.resolve(&ov(Experiment::Pumping)).unwrap_err().to_string();
        assert!(err.contains("drive.detuning_hz"), "{err}");

        let f = ConfigFile::from_toml("[params]\namplitudes = [1.0, 2.0]\n").unwrap();
        assert!(f.resolve(&ov(Experiment::MsGate)).is_err());

        let f = ConfigFile::from_toml("[drive]\nkind = \"carrier\"\n").unwrap();
        let err = f.resolve(&ov(Experiment::Heating)).unwrap_err().to_string();
        assert!(err.contains("drive.kind"), "{err}");

        let f = ConfigFile::from_toml("[drive]\nrabi_hz = -1.0\n").unwrap();
        let err = f.resolve(&ov(Experiment::Rabi)).unwrap_err().to_string();
        assert!(err.contains("drive.rabi_hz"), "{err}");

        assert!(ConfigFile::default().resolve(&Overrides::default()).is_err());
    }
}
