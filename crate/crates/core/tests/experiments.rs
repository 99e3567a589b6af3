//! Scenario-level oracles with closed-form or structural answers.

use noisygates::experiments::{
    ms_noise_free, run_heating, run_ms_gate, run_pumping, run_rabi_decay, scan_pi_error_vs_rabi,
    scan_pi_error_vs_rpsd, EnsembleConfig, NoiseConfig,
};
use noisygates::noisegen::{NoiseModelParams, ServoShape};
use noisygates::noisegen::PhaseTrace;
use noisygates::quantum::{propagate, DriveSpec, Observable, PropagationConfig, StateVector};

fn noise(h0: f64, n: usize) -> NoiseConfig {
    NoiseConfig::new(
        NoiseModelParams {
            h0,
            n_samples: n,
            ..Default::default()
        },
        ServoShape::with_unity_gain(200e3),
    )
}

#[test]
fn noise_free_rabi_never_decays() {
    let r = run_rabi_decay(&noise(0.0, 8192), 100e3, 50e-6, &EnsembleConfig::new(2, 3)).unwrap();
    for (t, p) in r.series.times.iter().zip(&r.series.means) {
        let exact = (std::f64::consts::PI * 100e3 * t).sin().powi(2);
        assert!((p - exact).abs() < 1e-9);
    }
    assert!(r.series.stderrs.iter().all(|s| *s < 1e-12));
    if let Some(env) = r.envelope {
        assert!(env.decay_rate.abs() < 1e2, "{env:?}");
    }
}

#[test]
fn pi_error_floor_without_noise() {
    let r = scan_pi_error_vs_rabi(&noise(0.0, 8192), &[50e3, 100e3, 200e3], &EnsembleConfig::new(2, 1)).unwrap();
    assert!(r.points.iter().all(|p| p.infidelity.abs() < 1e-10), "{:?}", r.points);
}

#[test]
fn weak_noise_infidelity_is_quadratic_in_amplitude() {
    // Common random numbers: halving the amplitude quarters the error.
    let nc = noise(1e3, 8192);
    let ens = EnsembleConfig::new(50, 9);
    let r = scan_pi_error_vs_rpsd(&nc, &[0.05, 0.1, 0.2], 100e3, &ens).unwrap();
    let y: Vec<f64> = r.points.iter().map(|p| p.y).collect();
    assert!((y[1] / y[0] - 4.0).abs() < 0.05, "{y:?}");
    assert!((y[2] / y[1] - 4.0).abs() < 0.1, "{y:?}");
}

#[test]
fn stderr_scales_as_inverse_sqrt_n() {
    let nc = noise(1e3, 8192);
    let se = |n| scan_pi_error_vs_rabi(&nc, &[100e3], &EnsembleConfig::new(n, 1)).unwrap().points[0].stderr;
    let ratio = se(400) / se(1600);
    assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
}

#[test]
fn parallel_and_sequential_agree() {
    let nc = noise(1e3, 8192);
    let mut ens = EnsembleConfig::new(16, 4);
    ens.max_parallel = 1;
    let a = scan_pi_error_vs_rabi(&nc, &[80e3, 160e3], &ens).unwrap();
    ens.max_parallel = 4;
    let b = scan_pi_error_vs_rabi(&nc, &[80e3, 160e3], &ens).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        assert!((p.infidelity - q.infidelity).abs() <= 1e-15);
    }
}

#[test]
fn noise_free_half_cycle_adds_one_phonon() {
    let spec = DriveSpec::blue_sideband(20e3, 200e3, 0.15, 10);
    let nc = noise(0.0, 36000);
    let whole = run_heating(&nc, &spec, &[1, 2], &EnsembleConfig::new(1, 1)).unwrap();
    assert!(whole.nbar.iter().all(|n| *n < 0.05), "{:?}", whole.nbar);

    // A blue-sideband π pulse from |g,0⟩ lands in |e,1⟩.
    let half = 0.5 / (spec.lamb_dicke * spec.rabi_hz);
    let trace = PhaseTrace::zeros(36000, nc.dt());
    let cfg = PropagationConfig::for_spec(&spec, nc.dt());
    let tr = propagate(&StateVector::initial(&spec), &spec, &trace, half, &cfg, &[Observable::MeanPhonons]).unwrap();
    let nbar = *tr.series[0].last().unwrap();
    assert!((nbar - 1.0).abs() < 0.02, "{nbar}");
}

#[test]
fn pumping_without_noise_stays_below_coherent_bound() {
    let r = run_pumping(&noise(0.0, 32768), 20e3, 300e3, 3e-3, &EnsembleConfig::new(2, 1)).unwrap();
    let max = r.series.means.iter().copied().fold(0.0, f64::max);
    assert!(max <= r.coherent_bound + 1e-9, "{max} > {}", r.coherent_bound);
    assert!(r.coherent_bound < 0.005);
}

#[test]
fn ms_noise_free_reference_is_converged_in_cutoff() {
    let a = ms_noise_free(&DriveSpec::molmer_sorensen(20e3, 200e3, 0.15, 10), 1e-7).unwrap();
    let b = ms_noise_free(&DriveSpec::molmer_sorensen(20e3, 200e3, 0.15, 15), 1e-7).unwrap();
    assert!((a.2 - b.2).abs() < 1e-6);
    assert!(a.2 > 0.98);
}

#[test]
fn ms_excess_infidelity_grows_with_noise() {
    let spec = DriveSpec::molmer_sorensen(20e3, 200e3, 0.15, 8);
    let r = run_ms_gate(&noise(1e3, 8192), &[0.5, 1.0, 2.0], &spec, &EnsembleConfig::new(8, 1)).unwrap();
    let y: Vec<f64> = r.scaling.points.iter().map(|p| p.y).collect();
    assert!(y.windows(2).all(|w| w[1] > w[0]), "{y:?}");
    assert!(r.gates.iter().all(|g| g.fidelity <= r.noise_free_fidelity + 1e-6));
}

#[test]
fn ms_noise_free_reference_is_converged_in_dt() {
    let spec = DriveSpec::molmer_sorensen(20e3, 200e3, 0.15, 10);
    let a = ms_noise_free(&spec, 1e-7).unwrap();
    let b = ms_noise_free(&spec, 0.5e-7).unwrap();
    assert!((a.2 - b.2).abs() < 1e-6, "{} vs {}", a.2, b.2);
}
