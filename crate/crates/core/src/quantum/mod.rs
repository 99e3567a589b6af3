//! Truncated spin ⊗ oscillator models and pure-state propagation.

mod hamiltonian;
mod linalg;
mod propagate;
mod state;

pub use hamiltonian::{basis_index, build_hamiltonian, fock_of, spin_of, DriveKind, DriveSpec, Hamiltonian};
pub use linalg::{expm, DenseMatrix};
pub use propagate::{
    propagate, Frame, Method, Observable, PropagationConfig, Propagator, RecordSchedule, Trajectory,
};
pub use state::{bell_fidelity, mean_phonons, StateDump, StateVector};
