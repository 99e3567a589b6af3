//! Monte-Carlo scenarios and the fits of their scaling laws.
//!
//! Every scenario draws one noise trace per realization seed
//! (`base_seed + k`). Scans over noise amplitude reuse that trace scaled by
//! each amplitude, so differences between points are not masked by
//! seed-to-seed scatter. RPSD values on scan axes come from separate long
//! reference traces whose seeds follow the realization seeds.

mod ensemble;
pub mod fit;
mod scenarios;

pub use ensemble::{run_ensemble, summarize, summarize_columns, EnsembleConfig, EnsembleOutput, Failure, Summary};
pub use fit::{
    fit_damped_rabi, fit_exponential_saturation, fit_linear_through_origin, DampedRabiFit,
    LinearFit, PumpingFit,
};
pub use scenarios::*;
