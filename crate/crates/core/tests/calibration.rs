mod common;

use common::*;
use mocca::calibration::{assemble_mocca, build_sensitivities, calibrate, CalibrationConfig, SingularCount};
use mocca::phantom::{make_pattern, random_coefficients, MagnetizationKind, Phantom, PhantomSpec};
use mocca::{MoccaError, PatternKind, SamplingPattern};
use nalgebra::DVector;

fn cfg() -> CalibrationConfig {
    CalibrationConfig { support: 3, equations: 8, ..Default::default() }
}

#[test]
fn true_coefficients_span_the_nullspace() {
    for seed in 0..5 {
        let spec = PhantomSpec::new(32, 4, 3, seed);
        let phantom = Phantom::generate(&spec).unwrap();
        let a = assemble_mocca(&phantom.kspace, &cfg()).unwrap();
        let c = DVector::from_vec(phantom.coefficients.stacked());
        let residual = (a.matrix() * &c).norm() / (a.matrix().norm() * c.norm());
        assert!(residual < 1e-13, "seed {seed}: {residual:e}");
    }
}

#[test]
fn calibrated_sensitivities_match_truth_up_to_a_constant() {
    let spec = PhantomSpec::new(32, 4, 3, 5);
    let phantom = Phantom::generate(&spec).unwrap();
    let pattern = make_pattern(PatternKind::Columns(2), 32, 8, 3).unwrap();
    let cal = calibrate(&phantom.kspace.masked(&pattern).unwrap(), &cfg(), Some(&pattern)).unwrap();
    let truth = build_sensitivities(&phantom.coefficients, 32, 1e-8).unwrap();
    let (s, t) = (&cal.sensitivities.normalized()[0], &truth.normalized()[0]);
    let k = mocca::GridIndex::ORIGIN;
    let phase = s.get(k) / t.get(k);
    assert!((phase.norm() - 1.0).abs() < 1e-10);
    for (sj, tj) in cal.sensitivities.normalized().iter().zip(truth.normalized()) {
        for (a, b) in sj.values().iter().zip(tj.values()) {
            assert!((a - b * phase).norm() < 1e-9);
        }
    }
}

#[test]
fn noise_keeps_one_small_singular_value_separated() {
    let spec = PhantomSpec { noise: 1e-3, ..PhantomSpec::new(32, 4, 3, 9) };
    let phantom = Phantom::generate(&spec).unwrap();
    let cal = calibrate(&phantom.kspace, &cfg(), None).unwrap();
    assert_eq!(cal.num_singular, 1);
    assert!(cal.smallest_ratio() < 1e-3 && cal.gap_ratio() > 1e-2, "{} {}", cal.smallest_ratio(), cal.gap_ratio());
}

#[test]
fn piecewise_magnetization_is_recovered() {
    let spec = PhantomSpec { magnetization: MagnetizationKind::Piecewise, ..PhantomSpec::new(32, 4, 3, 2) };
    let phantom = Phantom::generate(&spec).unwrap();
    let cal = calibrate(&phantom.kspace, &cfg(), None).unwrap();
    assert!(cal.smallest_ratio() < 1e-10);
}

#[test]
fn several_vectors_can_be_combined() {
    let phantom = Phantom::generate(&PhantomSpec::new(32, 4, 3, 4)).unwrap();
    let cfg = CalibrationConfig { singular_vectors: SingularCount::Fixed(3), ..cfg() };
    let cal = calibrate(&phantom.kspace, &cfg, None).unwrap();
    assert_eq!(cal.num_singular, 3);
    assert_eq!(cal.sensitivities.num_coils(), 4);
}

#[test]
fn coverage_is_checked_against_the_pattern() {
    let phantom = Phantom::generate(&PhantomSpec::new(32, 4, 3, 1)).unwrap();
    let pattern = SamplingPattern::new(PatternKind::Columns(2), 32, 6).unwrap();
    let err = calibrate(&phantom.kspace.masked(&pattern).unwrap(), &cfg(), Some(&pattern)).unwrap_err();
    assert!(matches!(err, MoccaError::MissingAcs { size: 10, .. }), "{err}");
}

#[test]
fn random_coefficients_are_reproducible() {
    let spec = PhantomSpec::new(16, 3, 3, 42);
    assert_eq!(random_coefficients(&spec).unwrap(), random_coefficients(&spec).unwrap());
    let other = PhantomSpec { seed: 43, ..spec };
    assert_ne!(random_coefficients(&spec).unwrap(), random_coefficients(&other).unwrap());
    let _ = random_sensitivities(16, 2, 3, 0);
}
