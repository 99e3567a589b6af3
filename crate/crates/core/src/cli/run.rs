//! Experiment orchestration and the output layout of a run directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{ConfigFile, Experiment, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    run_ensemble, run_heating, run_ms_gate, run_pumping, run_rabi_decay, scan_pi_error_vs_rabi,
    scan_pi_error_vs_rpsd, scan_pumping_rate, summarize_columns, Failure, ScalingResult,
    TimeSeriesResult,
};
use crate::noisegen::{PhaseTrace, TraceSidecar};
use crate::quantum::{DriveSpec, PropagationConfig, Propagator, RecordSchedule, StateVector};
use crate::spectral::{
    compute_rabi_psd_with, default_carrier_band, estimate_psd, spectrum_csv, SpectrumSidecar, Welch,
};

/// Debug artifacts requested on the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub dump_trace: Option<PathBuf>,
    pub dump_state: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory for files inside it.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub base_seed: u64,
    pub config: ConfigFile,
    pub files: Vec<FileEntry>,
    pub n_failures: usize,
    /// The only field that differs between repeated runs.
    pub timing: Timing,
}

/// Config echo embedded in outputs. The output directory is left out so that
/// the same run written to two places produces identical files.
pub fn config_echo(cfg: &RunConfig) -> ConfigFile {
    ConfigFile {
        output_dir: None,
        ..cfg.to_file()
    }
}

/// Collects outputs as `.partial` files and renames them once the run has
/// succeeded.
struct Outputs {
    dir: PathBuf,
    pending: Vec<(PathBuf, PathBuf, FileEntry)>,
}

fn partial_of(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    s.into()
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            pending: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        self.put_at(path, name.to_string(), bytes)
    }

    fn put_at(&mut self, path: PathBuf, label: String, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let partial = partial_of(&path);
        std::fs::write(&partial, bytes)?;
        let entry = FileEntry {
            path: label,
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        };
        self.pending.push((partial, path, entry));
        Ok(())
    }

    fn put_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    fn put_trace(&mut self, path: PathBuf, label: String, trace: &PhaseTrace, cfg: &RunConfig) -> Result<()> {
        let bytes: Vec<u8> = trace.samples.iter().flat_map(|x| x.to_le_bytes()).collect();
        let sidecar = TraceSidecar {
            dt_s: trace.dt,
            seed: trace.seed,
            n_samples: trace.len(),
            params: cfg.noise.params.clone(),
            shape: cfg.noise.shape.clone(),
        };
        let side = serde_json::to_string_pretty(&sidecar)?;
        let side_path = crate::noisegen::sidecar_path(&path);
        self.put_at(path, label.clone(), &bytes)?;
        self.put_at(side_path, format!("{label}.json"), side.as_bytes())
    }

    fn commit(self) -> Result<Vec<FileEntry>> {
        let mut entries = Vec::with_capacity(self.pending.len());
        for (partial, path, entry) in self.pending {
            std::fs::rename(&partial, &path)?;
            entries.push(entry);
        }
        Ok(entries)
    }
}

/// Label for a user-supplied path: relative to the run directory when inside it.
fn label_for(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

/// Long-format rows `x, mean, stderr, n`.
fn series_csv(rows: impl IntoIterator<Item = (f64, f64, f64, usize)>) -> String {
    let mut out = String::from("x,mean,stderr,n\n");
    for (x, m, s, n) in rows {
        out.push_str(&format!("{x:?},{m:?},{s:?},{n}\n"));
    }
    out
}

fn time_series_rows(s: &TimeSeriesResult) -> Vec<(f64, f64, f64, usize)> {
    let n = s.n();
    s.times
        .iter()
        .zip(&s.means)
        .zip(&s.stderrs)
        .map(|((t, m), e)| (*t, *m, *e, n))
        .collect()
}

fn scaling_rows(s: &ScalingResult) -> Vec<(f64, f64, f64, usize)> {
    s.points.iter().map(|p| (p.x, p.y, p.y_stderr, p.n)).collect()
}

fn seed_range(seeds: &[u64]) -> Value {
    match (seeds.first(), seeds.last()) {
        (Some(a), Some(b)) => json!([a, b]),
        _ => Value::Null,
    }
}

/// What an experiment hands back to the writer.
struct Product {
    rows: Vec<(f64, f64, f64, usize)>,
    fit: Value,
    plot: Value,
    seeds: Vec<u64>,
    failures: Vec<Failure>,
}

impl Product {
    fn new<T: Serialize>(
        rows: Vec<(f64, f64, f64, usize)>,
        fit: Value,
        plot: &T,
        seeds: &[u64],
        failures: &[Failure],
    ) -> Result<Self> {
        Ok(Self {
            rows,
            fit,
            plot: serde_json::to_value(plot)?,
            seeds: seeds.to_vec(),
            failures: failures.to_vec(),
        })
    }
}

fn scaling_fit(s: &ScalingResult) -> Value {
    json!({
        "law": format!("{} = slope * {}", s.y_label, s.x_label),
        "slope": s.fit.slope,
        "slope_stderr": s.fit.stderr,
        "ci95": [s.fit.ci95.0, s.fit.ci95.1],
        "r_squared": s.fit.r_squared,
        "n_points": s.fit.n_points,
        "response_freq_hz": s.response_freq_hz,
        "reference_seeds": s.reference_seeds,
    })
}

fn execute(cfg: &RunConfig, out: &mut Outputs) -> Result<Product> {
    let noise = &cfg.noise;
    let ens = &cfg.ensemble;
    let d = &cfg.drive;
    let p = &cfg.params;
    match cfg.experiment {
        Experiment::Rabi => {
            let r = run_rabi_decay(noise, d.rabi_hz, p.duration, ens)?;
            let fit = json!({ "envelope": r.envelope, "fit_error": r.fit_error });
            Product::new(time_series_rows(&r.series), fit, &r, &r.series.seeds, &r.series.failures)
        }
        Experiment::PiScanRabi => {
            let r = scan_pi_error_vs_rabi(noise, &p.rabi_list, ens)?;
            let rows = r.points.iter().map(|q| (q.rabi_hz, q.infidelity, q.stderr, q.n)).collect();
            let fit = json!({ "peak_rabi_hz": r.peak_rabi_hz });
            Product::new(rows, fit, &r, &r.seeds, &r.failures)
        }
        Experiment::PiScanRpsd => {
            let r = scan_pi_error_vs_rpsd(noise, &p.amplitudes, d.rabi_hz, ens)?;
            Product::new(scaling_rows(&r), scaling_fit(&r), &r, &r.seeds, &r.failures)
        }
        Experiment::Pumping => {
            let r = run_pumping(noise, d.rabi_hz, d.detuning_hz, p.duration, ens)?;
            let fit = json!({
                "fit": r.fit,
                "fit_error": r.fit_error,
                "coherent_bound": r.coherent_bound,
            });
            Product::new(time_series_rows(&r.series), fit, &r, &r.series.seeds, &r.series.failures)
        }
        Experiment::PumpingScan => {
            let r = scan_pumping_rate(noise, &p.amplitudes, d.rabi_hz, d.detuning_hz, p.duration, ens)?;
            Product::new(scaling_rows(&r), scaling_fit(&r), &r, &r.seeds, &r.failures)
        }
        Experiment::Heating => {
            let r = run_heating(noise, d, &p.cycles, ens)?;
            let n = r.seeds.len();
            let rows = r
                .cycles
                .iter()
                .zip(&r.nbar)
                .zip(&r.stderr)
                .map(|((c, m), e)| (*c as f64, *m, *e, n))
                .collect();
            let fit = json!({
                "cycle_time_s": r.cycle_time,
                "late_trend": r.late_trend.map(|(s, i, r2)| json!({
                    "slope_per_cycle": s, "intercept": i, "r_squared": r2
                })),
                "truncation_warning": r.truncation_warning,
            });
            Product::new(rows, fit, &r, &r.seeds, &r.failures)
        }
        Experiment::MsGate => {
            let r = run_ms_gate(noise, &p.amplitudes, d, ens)?;
            let mut fit = scaling_fit(&r.scaling);
            fit["noise_free_fidelity"] = json!(r.noise_free_fidelity);
            fit["target_phase"] = json!(r.target_phase);
            fit["truncation_warning"] = json!(r.truncation_warning);
            Product::new(scaling_rows(&r.scaling), fit, &r, &r.scaling.seeds, &r.scaling.failures)
        }
        Experiment::NoiseOnly => noise_only(cfg, out),
    }
}

/// Phase PSD and Rabi PSD averaged over the ensemble, plus the base trace.
fn noise_only(cfg: &RunConfig, out: &mut Outputs) -> Result<Product> {
    let noise = &cfg.noise;
    let n = noise.params.n_samples;
    let welch = Welch::default_for(n);
    let df = noise.params.sample_rate / welch.segment_len as f64;
    let band = default_carrier_band(df);
    let rabi = cfg.drive.rabi_hz;
    let res = run_ensemble(&cfg.ensemble, |seed| {
        let t = noise.trace(seed)?;
        let phase = estimate_psd(&t, welch.segment_len, welch.overlap_frac)?;
        let rabi_psd = compute_rabi_psd_with(&t, rabi, band, welch)?;
        Ok((phase, rabi_psd))
    })?;
    let phase_rows: Vec<Vec<f64>> = res.values.iter().map(|(p, _)| p.values.clone()).collect();
    let rabi_rows: Vec<Vec<f64>> = res.values.iter().map(|(_, r)| r.values.clone()).collect();
    let phase_mean = summarize_columns(&phase_rows);
    let rabi_mean = summarize_columns(&rabi_rows);
    let (phase0, rabi0) = &res.values[0];
    let count = res.seeds.len();

    let mean_of = |s: &[crate::experiments::Summary]| s.iter().map(|x| x.mean).collect::<Vec<_>>();
    let name = cfg.name();
    out.put(
        &format!("{name}_psd.csv"),
        spectrum_csv(&phase0.freqs, &mean_of(&phase_mean)).as_bytes(),
    )?;
    out.put_json(
        &format!("{name}_psd.csv.json"),
        &SpectrumSidecar {
            carrier_rabi_hz: None,
            carrier_band_hz: None,
            n_averages: count * phase0.n_averages,
            resolution_df_hz: phase0.resolution_df,
            seed_list: res.seeds.clone(),
        },
    )?;
    out.put(
        &format!("{name}_rpsd.csv"),
        spectrum_csv(&rabi0.freqs, &mean_of(&rabi_mean)).as_bytes(),
    )?;
    out.put_json(
        &format!("{name}_rpsd.csv.json"),
        &SpectrumSidecar {
            carrier_rabi_hz: Some(rabi),
            carrier_band_hz: Some(band),
            n_averages: count * rabi0.n_averages,
            resolution_df_hz: rabi0.resolution_df,
            seed_list: res.seeds.clone(),
        },
    )?;
    let base = noise.trace(cfg.ensemble.base_seed)?;
    let trace_path = out.dir.join(format!("{name}_trace.bin"));
    out.put_trace(trace_path, format!("{name}_trace.bin"), &base, cfg)?;

    let rows = rabi0
        .freqs
        .iter()
        .zip(&rabi_mean)
        .map(|(f, s)| (*f, s.mean, s.stderr, s.n))
        .collect();
    let rms: Vec<f64> = res
        .seeds
        .iter()
        .map(|&s| noise.trace(s).map(|t| t.rms()))
        .collect::<Result<_>>()?;
    let fit = json!({
        "mean_rms_rad": rms.iter().sum::<f64>() / rms.len() as f64,
        "carrier_rabi_hz": rabi,
        "carrier_band_hz": band,
    });
    let plot = json!({ "freqs_hz": rabi0.freqs, "rpsd": mean_of(&rabi_mean) });
    Product::new(rows, fit, &plot, &res.seeds, &res.failures)
}

/// Drive and duration used for `--dump-state`: one realization of the
/// experiment's characteristic evolution at the configured noise level.
fn dump_target(cfg: &RunConfig) -> Result<(DriveSpec, f64)> {
    let d = cfg.drive;
    let p = &cfg.params;
    Ok(match cfg.experiment {
        Experiment::Rabi => (DriveSpec::carrier(d.rabi_hz, 0.0), p.duration),
        Experiment::PiScanRabi | Experiment::PiScanRpsd => {
            (DriveSpec::carrier(d.rabi_hz, 0.0), 0.5 / d.rabi_hz)
        }
        Experiment::Pumping | Experiment::PumpingScan => {
            (DriveSpec::carrier(d.rabi_hz, d.detuning_hz), p.duration)
        }
        Experiment::Heating => {
            let cycles = *p.cycles.last().expect("validated non-empty") as f64;
            (d, cycles / (d.lamb_dicke * d.rabi_hz))
        }
        Experiment::MsGate => (d, d.gate_time()),
        Experiment::NoiseOnly => {
            return Err(Error::Config(
                "`--dump-state`: noise-only runs have no quantum state".into(),
            ))
        }
    })
}

fn final_state(cfg: &RunConfig, trace: &PhaseTrace) -> Result<StateVector> {
    let (spec, duration) = dump_target(cfg)?;
    let pc = PropagationConfig::for_spec(&spec, trace.dt).with_record(RecordSchedule::FinalOnly);
    let tr = Propagator::new(&spec, pc)?.run(&StateVector::initial(&spec), trace, duration, &[])?;
    Ok(tr.final_state)
}

/// Executes the experiment and writes the run directory. Outputs stay
/// `.partial` unless every step succeeds; `manifest.json` is written last.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<Manifest> {
    cfg.validate()?;
    if opts.dump_state.is_some() {
        dump_target(cfg)?;
    }
    let start = Instant::now();
    let dir = cfg.output_dir.clone();
    let mut out = Outputs::new(&dir)?;
    let name = cfg.name();

    let product = execute(cfg, &mut out)?;
    let echo = config_echo(cfg);
    out.put(&format!("{name}_series.csv"), series_csv(product.rows).as_bytes())?;
    out.put_json(
        &format!("{name}_fit.json"),
        &json!({
            "experiment": name,
            "fit": product.fit,
            "seed_range": seed_range(&product.seeds),
            "n_seeds": product.seeds.len(),
            "failures": product.failures,
            "config": echo,
        }),
    )?;
    out.put_json(&format!("{name}_plotdata.json"), &product.plot)?;

    if opts.dump_trace.is_some() || opts.dump_state.is_some() {
        let trace = cfg.noise.trace(cfg.ensemble.base_seed)?;
        if let Some(path) = &opts.dump_trace {
            out.put_trace(path.clone(), label_for(&dir, path), &trace, cfg)?;
        }
        if let Some(path) = &opts.dump_state {
            let dump = final_state(cfg, &trace)?.dump();
            let text = serde_json::to_string_pretty(&dump)?;
            out.put_at(path.clone(), label_for(&dir, path), text.as_bytes())?;
        }
    }

    let files = out.commit()?;
    let manifest = Manifest {
        experiment: cfg.experiment,
        base_seed: cfg.ensemble.base_seed,
        config: echo,
        files,
        n_failures: product.failures.len(),
        timing: Timing {
            wall_clock_s: start.elapsed().as_secs_f64(),
        },
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

/// Machine-readable record of a failed run.
pub fn error_record(e: &Error) -> Value {
    let kind = match e {
        Error::Parameter { .. } => "parameter",
        Error::Range(_) => "range",
        Error::Contract(_) => "contract",
        Error::Numerical { .. } => "numerical",
        Error::Fit(_) => "fit",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    };
    let mut v = json!({ "kind": kind, "message": e.to_string() });
    if let Error::Numerical { step, .. } = e {
        v["step"] = json!(step);
    }
    v
}
