//! Drive specifications and their Hamiltonians.
//!
//! Every Hamiltonian here is split into a diagonal part `H0` (detuning and
//! trap terms) and a list of ladder terms `c_k(t)·M_k + h.c.` with sparse
//! real `M_k`. Each `M_k` connects levels whose `H0` energies differ by a
//! fixed amount, so the interaction-frame version of a term is the same
//! matrix with an extra phase `e^{iω_k t}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::linalg::DenseMatrix;
use crate::error::{param, Result};

const TAU: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveKind {
    Carrier,
    SidebandIon,
    MolmerSorensen,
}

impl DriveKind {
    pub fn has_motion(self) -> bool {
        !matches!(self, DriveKind::Carrier)
    }
}

/// Drive parameters, all frequencies in Hz.
///
/// For `MolmerSorensen`, `detuning_hz` is the gate detuning δ_g of the two
/// tones from the motional sidebands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub kind: DriveKind,
    pub rabi_hz: f64,
    pub detuning_hz: f64,
    pub trap_hz: f64,
    pub lamb_dicke: f64,
    pub fock_cutoff: usize,
    pub n_qubits: usize,
}

impl DriveSpec {
    pub fn carrier(rabi_hz: f64, detuning_hz: f64) -> Self {
        Self {
            kind: DriveKind::Carrier,
            rabi_hz,
            detuning_hz,
            trap_hz: 0.0,
            lamb_dicke: 0.0,
            fock_cutoff: 1,
            n_qubits: 1,
        }
    }

    /// Single ion on the blue sideband, `Δ = ν − Ω²/(2ν)`.
    ///
    /// The off-resonant carrier shifts `|g,n⟩` and `|e,n+1⟩` apart by
    /// `Ω²/(2ν)`; without this correction the sideband is detuned by a third
    /// of its own Rabi frequency at Ω = 20 kHz, ν = 200 kHz, η = 0.15.
    pub fn blue_sideband(rabi_hz: f64, trap_hz: f64, lamb_dicke: f64, fock_cutoff: usize) -> Self {
        Self {
            kind: DriveKind::SidebandIon,
            rabi_hz,
            detuning_hz: trap_hz - rabi_hz * rabi_hz / (2.0 * trap_hz),
            trap_hz,
            lamb_dicke,
            fock_cutoff,
            n_qubits: 1,
        }
    }

    /// Two-ion MS gate with the single-loop detuning δ_g = 2ηΩ.
    pub fn molmer_sorensen(rabi_hz: f64, trap_hz: f64, lamb_dicke: f64, fock_cutoff: usize) -> Self {
        Self {
            kind: DriveKind::MolmerSorensen,
            rabi_hz,
            detuning_hz: 2.0 * lamb_dicke * rabi_hz,
            trap_hz,
            lamb_dicke,
            fock_cutoff,
            n_qubits: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi_hz.is_finite() && self.rabi_hz > 0.0) {
            return Err(param("rabi_hz", "must be positive and finite"));
        }
        if !self.detuning_hz.is_finite() {
            return Err(param("detuning_hz", "must be finite"));
        }
        match self.kind {
            DriveKind::Carrier => {
                if self.n_qubits != 1 {
                    return Err(param("n_qubits", "Carrier drives a single qubit"));
                }
            }
            DriveKind::SidebandIon | DriveKind::MolmerSorensen => {
                if self.kind == DriveKind::MolmerSorensen && self.n_qubits != 2 {
                    return Err(param("n_qubits", "MolmerSorensen requires n_qubits=2"));
                }
                if !(1..=2).contains(&self.n_qubits) {
                    return Err(param("n_qubits", "must be 1 or 2"));
                }
                if self.fock_cutoff < 2 {
                    return Err(param("fock_cutoff", "must be at least 2"));
                }
                if !(self.lamb_dicke > 0.0 && self.lamb_dicke < 0.5) {
                    return Err(param("lamb_dicke", "must lie in (0, 0.5)"));
                }
                if !(self.trap_hz.is_finite() && self.trap_hz > 0.0) {
                    return Err(param("trap_hz", "must be positive and finite"));
                }
            }
        }
        Ok(())
    }

    /// Fock states kept (1 for the carrier, which has no motion).
    pub fn n_fock(&self) -> usize {
        if self.kind.has_motion() {
            self.fock_cutoff
        } else {
            1
        }
    }

    pub fn dim(&self) -> usize {
        (1 << self.n_qubits) * self.n_fock()
    }

    /// MS gate time 1/δ_g.
    pub fn gate_time(&self) -> f64 {
        1.0 / self.detuning_hz.abs()
    }

    /// Frequency at which the qubit responds to drive-phase noise.
    pub fn response_freq(&self) -> f64 {
        match self.kind {
            DriveKind::Carrier => self.detuning_hz.abs(),
            DriveKind::SidebandIon => self.detuning_hz.abs(),
            DriveKind::MolmerSorensen => self.trap_hz + self.detuning_hz.abs(),
        }
    }
}

/// Basis index of `(spins, n)`; qubit 0 is the slowest index, Fock the fastest.
/// Spin value 1 is the excited state `e` (↑).
pub fn basis_index(spec: &DriveSpec, spins: &[u8], n: usize) -> usize {
    let mut s = 0;
    for &b in spins {
        s = (s << 1) | b as usize;
    }
    s * spec.n_fock() + n
}

/// Spin value of qubit `q` in basis state `idx`.
pub fn spin_of(spec: &DriveSpec, idx: usize, q: usize) -> u8 {
    let s = idx / spec.n_fock();
    ((s >> (spec.n_qubits - 1 - q)) & 1) as u8
}

pub fn fock_of(spec: &DriveSpec, idx: usize) -> usize {
    idx % spec.n_fock()
}

/// Sparse real matrix as (row, col, value) triples.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseOp {
    pub entries: Vec<(u32, u32, f64)>,
}

/// `amp · e^{iφ} · tone(t) · M + h.c.`, where `tone` is `cos(ω_tone t)` or `1`.
#[derive(Debug, Clone)]
pub(crate) struct LadderTerm {
    pub op: SparseOp,
    /// `E_row − E_col` of every entry under `H0` (rad/s).
    pub transfer: f64,
    pub amp: Complex64,
    pub tone: Option<f64>,
    /// Largest row or column absolute sum of `op`.
    pub op_norm: f64,
}

/// Hamiltonian in angular units, `H/ħ`.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    spec: DriveSpec,
    pub(crate) diag: Vec<f64>,
    pub(crate) terms: Vec<LadderTerm>,
    pub(crate) diag_norm: f64,
}

/// Frozen coefficients of a Hamiltonian at one instant (or a linear
/// combination of instants): `w·H0 + Σ c_k M_k + h.c.`.
#[derive(Debug, Clone)]
pub(crate) struct Coeffs {
    pub diag_weight: f64,
    pub c: Vec<Complex64>,
}

impl Coeffs {
    pub fn combine(a: f64, x: &Coeffs, b: f64, y: &Coeffs) -> Coeffs {
        Coeffs {
            diag_weight: a * x.diag_weight + b * y.diag_weight,
            c: x.c.iter().zip(&y.c).map(|(p, q)| a * p + b * q).collect(),
        }
    }
}

impl Hamiltonian {
    pub fn new(spec: &DriveSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dim();
        let nf = spec.n_fock();
        let nu = TAU * spec.trap_hz;
        let delta = TAU * spec.detuning_hz;
        let is_ms = spec.kind == DriveKind::MolmerSorensen;

        let mut diag = vec![0.0; dim];
        for (idx, d) in diag.iter_mut().enumerate() {
            let n = fock_of(spec, idx) as f64;
            let mut e = if spec.kind.has_motion() { nu * n } else { 0.0 };
            if !is_ms {
                for q in 0..spec.n_qubits {
                    let sz = 2.0 * spin_of(spec, idx, q) as f64 - 1.0;
                    e -= 0.5 * delta * sz;
                }
            }
            *d = e;
        }

        // σ₊ on qubit q, tensored with a motional operator given as
        // (Fock shift, matrix element as a function of the source n).
        let sigma_plus = |shift: isize, elem: &dyn Fn(usize) -> f64| {
            let mut op = SparseOp::default();
            for col in 0..dim {
                let n = fock_of(spec, col);
                let m = n as isize + shift;
                if m < 0 || m >= nf as isize {
                    continue;
                }
                for q in 0..spec.n_qubits {
                    if spin_of(spec, col, q) == 1 {
                        continue;
                    }
                    let flip = 1usize << (spec.n_qubits - 1 - q);
                    let row = (col / nf + flip) * nf + m as usize;
                    op.entries.push((row as u32, col as u32, elem(n)));
                }
            }
            op
        };

        let spin_transfer = if is_ms { 0.0 } else { -delta };
        let (amp, tone) = match spec.kind {
            DriveKind::Carrier | DriveKind::SidebandIon => (PI * spec.rabi_hz, None),
            DriveKind::MolmerSorensen => (
                TAU * spec.rabi_hz,
                Some(TAU * (spec.trap_hz + spec.detuning_hz)),
            ),
        };
        let amp = Complex64::new(amp, 0.0);
        let mut terms = vec![LadderTerm::new(sigma_plus(0, &|_| 1.0), spin_transfer, amp, tone)];
        if spec.kind.has_motion() {
            let ieta = Complex64::new(0.0, spec.lamb_dicke) * amp;
            // σ₊a and σ₊a†
            terms.push(LadderTerm::new(
                sigma_plus(-1, &|n| (n as f64).sqrt()),
                spin_transfer - nu,
                ieta,
                tone,
            ));
            terms.push(LadderTerm::new(
                sigma_plus(1, &|n| (n as f64 + 1.0).sqrt()),
                spin_transfer + nu,
                ieta,
                tone,
            ));
        }
        let diag_norm = diag.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Ok(Self {
            spec: *spec,
            diag,
            terms,
            diag_norm,
        })
    }

    pub fn spec(&self) -> &DriveSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    fn tone_factor(term: &LadderTerm, t: f64) -> f64 {
        term.tone.map_or(1.0, |w| (w * t).cos())
    }

    /// Lab-frame coefficients at time `t` with drive phase `phase`.
    pub(crate) fn lab_coeffs(&self, t: f64, phase: f64) -> Coeffs {
        let e = Complex64::from_polar(1.0, phase);
        Coeffs {
            diag_weight: 1.0,
            c: self
                .terms
                .iter()
                .map(|k| k.amp * e * Self::tone_factor(k, t))
                .collect(),
        }
    }

    /// Interaction-frame (w.r.t. `H0`) coefficients.
    pub(crate) fn interaction_coeffs(&self, t: f64, phase: f64) -> Coeffs {
        Coeffs {
            diag_weight: 0.0,
            c: self
                .terms
                .iter()
                .map(|k| {
                    k.amp
                        * Complex64::from_polar(Self::tone_factor(k, t), phase + k.transfer * t)
                })
                .collect(),
        }
    }

    /// Upper bound on the induced 1-norm of the operator given by `c`.
    pub(crate) fn norm_bound(&self, c: &Coeffs) -> f64 {
        let mut b = c.diag_weight.abs() * self.diag_norm;
        for (k, ck) in self.terms.iter().zip(&c.c) {
            b += 2.0 * ck.norm() * k.op_norm;
        }
        b
    }

    /// `y = H(c)·x`.
    pub(crate) fn apply(&self, c: &Coeffs, x: &[Complex64], y: &mut [Complex64]) {
        if c.diag_weight != 0.0 {
            for ((yi, xi), d) in y.iter_mut().zip(x).zip(&self.diag) {
                *yi = xi * (d * c.diag_weight);
            }
        } else {
            y.fill(Complex64::new(0.0, 0.0));
        }
        for (k, ck) in self.terms.iter().zip(&c.c) {
            let cc = ck.conj();
            for &(r, col, v) in &k.op.entries {
                let (r, col) = (r as usize, col as usize);
                y[r] += ck * v * x[col];
                y[col] += cc * v * x[r];
            }
        }
    }

    /// Dense matrix of the operator given by `c`.
    pub(crate) fn dense_from(&self, c: &Coeffs) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.dim());
        for (i, d) in self.diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d * c.diag_weight, 0.0);
        }
        for (k, ck) in self.terms.iter().zip(&c.c) {
            for &(r, col, v) in &k.op.entries {
                let (r, col) = (r as usize, col as usize);
                m[(r, col)] += ck * v;
                m[(col, r)] += ck.conj() * v;
            }
        }
        m
    }

    /// Lab-frame `H(t)/ħ` as a dense matrix.
    pub fn dense(&self, t: f64, phase: f64) -> DenseMatrix {
        self.dense_from(&self.lab_coeffs(t, phase))
    }

    /// Diagonal `H0` energies (rad/s); the interaction frame rotates with these.
    pub fn frame_energies(&self) -> &[f64] {
        &self.diag
    }
}

impl LadderTerm {
    fn new(op: SparseOp, transfer: f64, amp: Complex64, tone: Option<f64>) -> Self {
        let dim = op
            .entries
            .iter()
            .map(|&(r, c, _)| r.max(c) as usize + 1)
            .max()
            .unwrap_or(0);
        let mut rows = vec![0.0; dim];
        let mut cols = vec![0.0; dim];
        for &(r, c, v) in &op.entries {
            rows[r as usize] += v.abs();
            cols[c as usize] += v.abs();
        }
        let op_norm = rows.iter().chain(&cols).fold(0.0f64, |m, x| m.max(*x));
        Self {
            op,
            transfer,
            amp,
            tone,
            op_norm,
        }
    }
}

/// `H(t)/ħ` in angular units for `spec` at drive phase `phase`.
pub fn build_hamiltonian(spec: &DriveSpec, phase: f64, t: f64) -> Result<DenseMatrix> {
    Ok(Hamiltonian::new(spec)?.dense(t, phase))
}
