use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub base_seed: u64,
    /// Worker count; 0 uses all available cores.
    pub max_parallel: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_realizations: 200,
            base_seed: 1,
            max_parallel: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn new(n_realizations: usize, base_seed: u64) -> Self {
        Self {
            n_realizations,
            base_seed,
            max_parallel: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(param("n_realizations", "must be at least 1"));
        }
        Ok(())
    }

    pub fn seed(&self, k: usize) -> u64 {
        self.base_seed.wrapping_add(k as u64)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_realizations).map(|k| self.seed(k)).collect()
    }

    /// First seed past the realizations, used for auxiliary traces.
    pub(crate) fn auxiliary_seed(&self, j: usize) -> u64 {
        self.seed(self.n_realizations + j)
    }
}

/// A realization that aborted, kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub error: String,
}

/// Successful per-seed outputs in seed order, plus the failures.
#[derive(Debug, Clone)]
pub struct EnsembleOutput<T> {
    pub seeds: Vec<u64>,
    pub values: Vec<T>,
    pub failures: Vec<Failure>,
}

/// Runs `task(seed)` for every realization on at most `max_parallel`
/// workers. Output order is the realization order regardless of scheduling.
pub fn run_ensemble<T, F>(ens: &EnsembleConfig, task: F) -> Result<EnsembleOutput<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    ens.validate()?;
    let seeds = ens.seeds();
    let raw: Vec<Result<T>> = if ens.max_parallel == 1 {
        seeds.iter().map(|&s| task(s)).collect()
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if ens.max_parallel > 0 {
            builder = builder.num_threads(ens.max_parallel);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(|&s| task(s)).collect())
    };
    let mut out = EnsembleOutput {
        seeds: Vec::with_capacity(seeds.len()),
        values: Vec::with_capacity(seeds.len()),
        failures: Vec::new(),
    };
    for (seed, r) in seeds.into_iter().zip(raw) {
        match r {
            Ok(v) => {
                out.seeds.push(seed);
                out.values.push(v);
            }
            // Invalid inputs are not a per-seed accident; surface them.
            Err(e @ (Error::Parameter { .. } | Error::Contract(_) | Error::Range(_))) => {
                return Err(e)
            }
            Err(e) => out.failures.push(Failure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    if out.values.is_empty() {
        return Err(Error::Numerical {
            step: 0,
            reason: format!("all {} realizations failed", out.failures.len()),
        });
    }
    Ok(out)
}

/// Mean and standard error (sample std / √n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, stderr, n }
}

/// Column-wise summaries of per-seed rows of equal length.
pub fn summarize_columns(rows: &[Vec<f64>]) -> Vec<Summary> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|j| summarize(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect()
}
