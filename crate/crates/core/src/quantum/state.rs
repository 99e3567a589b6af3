use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hamiltonian::{basis_index, fock_of, spin_of, DriveKind, DriveSpec};
use crate::error::{Error, Result};

/// Pure state on the spin ⊗ Fock basis of a [`DriveSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
    spec: DriveSpec,
}

impl StateVector {
    pub fn from_amplitudes(spec: &DriveSpec, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != spec.dim() {
            return Err(Error::Contract(format!(
                "state has {} amplitudes, spec needs {}",
                amplitudes.len(),
                spec.dim()
            )));
        }
        Ok(Self {
            amplitudes,
            spec: *spec,
        })
    }

    pub fn basis(spec: &DriveSpec, spins: &[u8], n: usize) -> Self {
        let mut a = vec![Complex64::new(0.0, 0.0); spec.dim()];
        a[basis_index(spec, spins, n)] = Complex64::new(1.0, 0.0);
        Self {
            amplitudes: a,
            spec: *spec,
        }
    }

    /// `|g…g⟩⊗|0⟩` for carrier and sideband drives, `|↑↑⟩⊗|0⟩` for MS.
    pub fn initial(spec: &DriveSpec) -> Self {
        let spin = match spec.kind {
            DriveKind::MolmerSorensen => 1,
            _ => 0,
        };
        Self::basis(spec, &vec![spin; spec.n_qubits], 0)
    }

    pub fn spec(&self) -> &DriveSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        for a in &mut self.amplitudes {
            *a /= n;
        }
    }

    pub fn population(&self, idx: usize) -> f64 {
        self.amplitudes[idx].norm_sqr()
    }

    /// Probability that qubit `q` is excited.
    pub fn excited_population(&self, q: usize) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| spin_of(&self.spec, *i, q) == 1)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    pub fn mean_phonons(&self) -> Result<f64> {
        if !self.spec.kind.has_motion() {
            return Err(Error::Contract("carrier states carry no motional mode".into()));
        }
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| fock_of(&self.spec, i) as f64 * a.norm_sqr())
            .sum())
    }

    fn require_pair(&self) -> Result<()> {
        if self.spec.n_qubits != 2 {
            return Err(Error::Contract("Bell fidelity needs a two-qubit state".into()));
        }
        Ok(())
    }

    /// `Σ_n conj(a_{↑↑,n})·a_{↓↓,n}`: its argument is the Bell phase that
    /// maximises [`bell_fidelity`](Self::bell_fidelity).
    fn bell_cross_term(&self) -> Complex64 {
        let nf = self.spec.n_fock();
        (0..nf)
            .map(|n| {
                let ee = self.amplitudes[basis_index(&self.spec, &[1, 1], n)];
                let gg = self.amplitudes[basis_index(&self.spec, &[0, 0], n)];
                ee.conj() * gg
            })
            .sum()
    }

    /// Overlap of the motion-traced spin state with `(|↑↑⟩ + e^{iθ}|↓↓⟩)/√2`.
    pub fn bell_fidelity(&self, target_phase: f64) -> Result<f64> {
        self.require_pair()?;
        let rot = Complex64::from_polar(1.0, -target_phase);
        let f = (0..self.spec.n_fock())
            .map(|n| {
                let ee = self.amplitudes[basis_index(&self.spec, &[1, 1], n)];
                let gg = self.amplitudes[basis_index(&self.spec, &[0, 0], n)];
                (ee + rot * gg).norm_sqr()
            })
            .sum::<f64>();
        Ok((0.5 * f).clamp(0.0, 1.0))
    }

    pub fn optimal_bell_phase(&self) -> Result<f64> {
        self.require_pair()?;
        Ok(self.bell_cross_term().arg())
    }

    /// Amplitudes as `[re, im]` pairs with basis metadata.
    pub fn dump(&self) -> StateDump {
        StateDump {
            kind: self.spec.kind,
            n_qubits: self.spec.n_qubits,
            n_fock: self.spec.n_fock(),
            ordering: "qubit 0 slowest, Fock index fastest; spin 1 = excited".into(),
            amplitudes: self.amplitudes.iter().map(|a| [a.re, a.im]).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateDump {
    pub kind: DriveKind,
    pub n_qubits: usize,
    pub n_fock: usize,
    pub ordering: String,
    pub amplitudes: Vec<[f64; 2]>,
}

pub fn bell_fidelity(state: &StateVector, target_phase: f64) -> Result<f64> {
    state.bell_fidelity(target_phase)
}

pub fn mean_phonons(state: &StateVector) -> Result<f64> {
    state.mean_phonons()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn ms_spec() -> DriveSpec {
        DriveSpec::molmer_sorensen(20e3, 200e3, 0.15, 5)
    }

    #[test]
    fn bell_fidelity_of_reference_states() {
        let spec = ms_spec();
        let theta = 1.1;
        let mut a = vec![Complex64::new(0.0, 0.0); spec.dim()];
        a[basis_index(&spec, &[1, 1], 0)] = Complex64::new(FRAC_1_SQRT_2, 0.0);
        a[basis_index(&spec, &[0, 0], 0)] = Complex64::from_polar(FRAC_1_SQRT_2, theta);
        let bell = StateVector::from_amplitudes(&spec, a).unwrap();
        assert!((bell.bell_fidelity(theta).unwrap() - 1.0).abs() < 1e-12);
        assert!((bell.optimal_bell_phase().unwrap() - theta).abs() < 1e-12);

        let upup = StateVector::basis(&spec, &[1, 1], 0);
        assert!((upup.bell_fidelity(0.3).unwrap() - 0.5).abs() < 1e-15);
        let updown = StateVector::basis(&spec, &[1, 0], 0);
        assert_eq!(updown.bell_fidelity(0.0).unwrap(), 0.0);
    }

    #[test]
    fn bell_fidelity_needs_two_qubits() {
        let spec = DriveSpec::blue_sideband(20e3, 200e3, 0.1, 4);
        assert!(StateVector::initial(&spec).bell_fidelity(0.0).is_err());
    }

    #[test]
    fn mean_phonons_of_reference_states() {
        let spec = DriveSpec::blue_sideband(20e3, 200e3, 0.1, 6);
        assert_eq!(StateVector::initial(&spec).mean_phonons().unwrap(), 0.0);
        let mut a = vec![Complex64::new(0.0, 0.0); spec.dim()];
        a[basis_index(&spec, &[0], 0)] = Complex64::new(FRAC_1_SQRT_2, 0.0);
        a[basis_index(&spec, &[0], 2)] = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let s = StateVector::from_amplitudes(&spec, a).unwrap();
        assert!((s.mean_phonons().unwrap() - 1.0).abs() < 1e-15);
        assert!(StateVector::initial(&DriveSpec::carrier(1e3, 0.0))
            .mean_phonons()
            .is_err());
    }

    #[test]
    fn mean_phonons_matches_brute_force() {
        let spec = ms_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<_> = (0..spec.dim())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut s = StateVector::from_amplitudes(&spec, a).unwrap();
        s.normalize();
        let mut oracle = 0.0;
        for s1 in 0..2u8 {
            for s2 in 0..2u8 {
                for n in 0..spec.fock_cutoff {
                    oracle += n as f64 * s.population(basis_index(&spec, &[s1, s2], n));
                }
            }
        }
        assert!((s.mean_phonons().unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn initial_states() {
        let ms = StateVector::initial(&ms_spec());
        assert_eq!(ms.excited_population(0), 1.0);
        assert_eq!(ms.excited_population(1), 1.0);
        let c = StateVector::initial(&DriveSpec::carrier(1e3, 0.0));
        assert_eq!(c.amplitudes, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let spec = ms_spec();
        assert!(matches!(
            StateVector::from_amplitudes(&spec, vec![Complex64::new(1.0, 0.0)]),
            Err(Error::Contract(_))
        ));
    }
}
