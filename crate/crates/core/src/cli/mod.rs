//! Command-line front end: configuration, orchestration and run provenance.

mod config;
mod run;

use std::path::PathBuf;

use clap::Parser;

pub use config::{
    ConfigFile, DriveSection, EnsembleSection, Experiment, NoiseSection, Overrides, ParamsSection,
    ReferenceSection, RunConfig, RunParams, ServoSection,
};
pub use run::{config_echo, error_record, run, FileEntry, Manifest, RunOptions, Timing};

use crate::error::Result;

/// Phase-noise gate fidelity simulator.
#[derive(Debug, Parser)]
#[command(name = "noisygates", version)]
pub struct Args {
    /// Experiment to run; overrides `experiment` in the config file.
    #[arg(value_enum)]
    pub experiment: Option<Experiment>,
    /// JSON or TOML configuration (`.json` is read as JSON, anything else as TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker cap; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// 1000 realizations and 30 Fock states.
    #[arg(long)]
    pub paper_scale: bool,
    /// Validate and print the resolved config without computing.
    #[arg(long)]
    pub dry_run: bool,
    /// Write the base-seed phase trace (little-endian f64) plus a JSON sidecar.
    #[arg(long, value_name = "P")]
    pub dump_trace: Option<PathBuf>,
    /// Write the base-seed final state as JSON.
    #[arg(long, value_name = "P")]
    pub dump_state: Option<PathBuf>,
    /// Run directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl Args {
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        file.resolve(&Overrides {
            experiment: self.experiment,
            jobs: self.jobs,
            seed: self.seed,
            paper_scale: self.paper_scale,
            output_dir: self.out.clone(),
        })
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            dump_trace: self.dump_trace.clone(),
            dump_state: self.dump_state.clone(),
        }
    }
}
