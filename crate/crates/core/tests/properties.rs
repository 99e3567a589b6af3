//! Property tests for the invariants of each layer.

use noisygates::cli::{ConfigFile, Experiment, Overrides};
use noisygates::experiments::{fit_linear_through_origin, summarize};
use noisygates::noisegen::{apply_servo_shaping, generate_base_trace, synthesize, NoiseModelParams, PhaseTrace, ServoShape};
use noisygates::quantum::{
    build_hamiltonian, propagate, DriveKind, DriveSpec, PropagationConfig, StateVector,
};
use noisygates::spectral::{estimate_psd, rpsd_to_dbc};
use proptest::prelude::*;

fn params(h0: f64, n: usize) -> NoiseModelParams {
    NoiseModelParams {
        h0,
        n_samples: n,
        ..Default::default()
    }
}

fn drive() -> impl Strategy<Value = DriveSpec> {
    prop_oneof![
        (1e3..300e3f64, -500e3..500e3f64).prop_map(|(r, d)| DriveSpec::carrier(r, d)),
        (1e3..50e3f64, 100e3..1e6f64, 0.01..0.3f64, 2usize..8)
            .prop_map(|(r, v, e, n)| DriveSpec::blue_sideband(r, v, e, n)),
        (1e3..50e3f64, 100e3..1e6f64, 0.01..0.3f64, 2usize..6)
            .prop_map(|(r, v, e, n)| DriveSpec::molmer_sorensen(r, v, e, n)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_same_trace(seed in any::<u64>(), h0 in 1.0..1e4f64) {
        let shape = ServoShape::with_unity_gain(200e3);
        let a = synthesize(&params(h0, 2048), &shape, seed).unwrap();
        let b = synthesize(&params(h0, 2048), &shape, seed).unwrap();
        prop_assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn shaping_is_linear(seed in any::<u64>(), a in -5.0..5.0f64, b in -5.0..5.0f64) {
        let shape = ServoShape::with_unity_gain(150e3);
        let x = generate_base_trace(&params(100.0, 1024), seed).unwrap();
        let y = generate_base_trace(&params(100.0, 1024), seed.wrapping_add(1)).unwrap();
        let combo = PhaseTrace::new(
            x.samples.iter().zip(&y.samples).map(|(p, q)| a * p + b * q).collect(),
            x.dt,
            0,
        ).unwrap();
        let lhs = apply_servo_shaping(&combo, &shape).unwrap();
        let sx = apply_servo_shaping(&x, &shape).unwrap();
        let sy = apply_servo_shaping(&y, &shape).unwrap();
        let scale = lhs.samples.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
        for i in 0..lhs.len() {
            prop_assert!((lhs.samples[i] - a * sx.samples[i] - b * sy.samples[i]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn psd_scales_quadratically(seed in any::<u64>(), alpha in 0.1..10.0f64) {
        let t = synthesize(&params(1e3, 4096), &ServoShape::with_unity_gain(200e3), seed).unwrap();
        let p1 = estimate_psd(&t, 512, 0.5).unwrap();
        let p2 = estimate_psd(&t.scaled(alpha), 512, 0.5).unwrap();
        for (a, b) in p1.values.iter().zip(&p2.values) {
            prop_assert!((b - alpha * alpha * a).abs() <= 1e-9 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn hamiltonian_is_hermitian(spec in drive(), phase in -10.0..10.0f64, t in 0.0..1e-3f64) {
        let h = build_hamiltonian(&spec, phase, t).unwrap();
        let d = h.sub(&h.adjoint()).max_abs();
        prop_assert!(d <= 1e-9 * h.max_abs().max(1.0), "anti-Hermitian part {}", d);
    }

    #[test]
    fn propagation_preserves_norm(spec in drive(), seed in any::<u64>()) {
        let dt = 1e-7;
        let trace = synthesize(&params(1e3, 600), &ServoShape::with_unity_gain(200e3), seed).unwrap();
        let cfg = PropagationConfig::for_spec(&spec, dt);
        let tr = propagate(&StateVector::initial(&spec), &spec, &trace, 5e-5, &cfg, &[]).unwrap();
        prop_assert!((tr.final_state.norm() - 1.0).abs() < 1e-9);
        let pops: f64 = (0..spec.dim()).map(|i| tr.final_state.population(i)).sum();
        prop_assert!((pops - 1.0).abs() < 1e-9);
    }

    #[test]
    fn r_squared_at_most_one(pts in prop::collection::vec((0.01..10.0f64, -10.0..10.0f64), 3..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        if let Ok(f) = fit_linear_through_origin(&x, &y) {
            prop_assert!(f.r_squared <= 1.0 + 1e-12);
            prop_assert!(f.ci95.0 <= f.slope && f.slope <= f.ci95.1);
        }
    }

    #[test]
    fn stderr_is_nonnegative(v in prop::collection::vec(-1e3..1e3f64, 1..50)) {
        let s = summarize(&v);
        prop_assert!(s.stderr >= 0.0);
        prop_assert_eq!(s.n, v.len());
    }

    #[test]
    fn dbc_is_monotone(a in 1e-6..1e6f64, b in 1e-6..1e6f64, rabi in 1e3..1e6f64) {
        prop_assume!(a < b);
        prop_assert!(rpsd_to_dbc(a, rabi) < rpsd_to_dbc(b, rabi));
    }

    #[test]
    fn config_echo_is_idempotent(
        h0 in 0.0..1e5f64,
        seed in any::<u64>(),
        n in 1usize..500,
        rabi in 1e3..100e3f64,
    ) {
        let doc = format!(
            "[noise]\nh0 = {h0:?}\n[ensemble]\nbase_seed = {seed}\nn_realizations = {n}\n[drive]\nrabi_hz = {rabi:?}\n"
        );
        let ov = Overrides { experiment: Some(Experiment::PiScanRpsd), ..Default::default() };
        let c = ConfigFile::from_toml(&doc).unwrap().resolve(&ov).unwrap();
        let json = c.to_json();
        let again = ConfigFile::from_json(&json).unwrap().resolve(&Overrides::default()).unwrap();
        prop_assert_eq!(json, again.to_json());
    }
}

#[test]
fn ms_kind_has_two_qubits() {
    let s = DriveSpec::molmer_sorensen(20e3, 200e3, 0.15, 15);
    assert_eq!(s.kind, DriveKind::MolmerSorensen);
    assert_eq!(s.n_qubits, 2);
}
