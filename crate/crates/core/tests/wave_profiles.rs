use std::f64::consts::PI;

use floquet_green::profile::{self, make_constant_profile, make_manufactured_profile, manufactured_sine, WaveProfile};
use floquet_green::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn constant_fixtures() {
    let adv = make_constant_profile(1, 1.0, &DMatrix::zeros(1, 1), 64).unwrap();
    assert_eq!(adv.speed(), 1.0);
    assert!(adv.is_constant() && adv.coeff_at_index(5)[(0, 0)] == 0.0);
    let heat = make_constant_profile(1, 0.0, &DMatrix::zeros(1, 1), 16).unwrap();
    assert_eq!(heat.grid_size(), 16);
    let c0 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
    let sys = make_constant_profile(2, 1.0, &c0, 32).unwrap();
    assert_eq!(sys.dim(), 2);
    assert_eq!(sys.coeff_at_index(31), &c0);
}

/// `c = −(p″ + a p′)/p` from the analytic derivatives of `1 + 0.3 sin 2πx`.
fn analytic_c(x: f64, a: f64) -> f64 {
    let w = 2.0 * PI;
    let p = 1.0 + 0.3 * (w * x).sin();
    let dp = 0.3 * w * (w * x).cos();
    let ddp = -0.3 * w * w * (w * x).sin();
    -(ddp + a * dp) / p
}

#[test]
fn manufactured_coefficient_matches_substitution() {
    for &(a, nx) in &[(1.0, 64usize), (0.0, 32)] {
        let prof = manufactured_sine(0.3, a, nx).unwrap();
        for j in 0..nx {
            let x = j as f64 / nx as f64;
            let c = prof.coeff_at_index(j as i64)[(0, 0)];
            assert!((c - analytic_c(x, a)).abs() < 1e-10, "a={a} j={j}");
        }
        let p: Vec<f64> = (0..nx).map(|j| 1.0 + 0.3 * (2.0 * PI * j as f64 / nx as f64).sin()).collect();
        assert!(profile::manufactured_residual(&prof, &p) < 1e-10);
    }
    let flat = make_manufactured_profile(&vec![1.0; 64], 1.0, 64).unwrap();
    assert!(flat.coeff_samples().iter().all(|m| m[(0, 0)].abs() < 1e-14));
}

#[test]
fn file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.txt");
    let prof = manufactured_sine(0.3, 1.0, 64).unwrap();
    prof.save(&path).unwrap();
    let back = WaveProfile::load(&path).unwrap();
    assert_eq!(back.coeff_samples(), prof.coeff_samples());
    assert_eq!(back.speed(), prof.speed());

    let mut odd = String::from("n=1 a=0 Nx=63\n");
    for j in 0..63 {
        odd.push_str(&format!("{j} 0\n"));
    }
    assert!(WaveProfile::parse(&odd).unwrap_err().to_string().contains("grid must be even"));
    let mut short = String::from("n=2 a=0 Nx=16\n");
    for j in 0..16 {
        short.push_str(&format!("{j} 1 2 3\n"));
    }
    assert!(matches!(WaveProfile::parse(&short), Err(Error::Dimension(_))));
    assert!(matches!(WaveProfile::load(&dir.path().join("missing.txt")), Err(Error::Io { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn text_round_trip_is_bit_exact(
        n in 1usize..3,
        half in 8usize..24,
        a in -3.0f64..3.0,
        seed in proptest::collection::vec(-10.0f64..10.0, 4),
    ) {
        let nx = 2 * half;
        let coeff: Vec<DMatrix<f64>> = (0..nx)
            .map(|j| DMatrix::from_fn(n, n, |r, c| seed[(r * n + c) % 4] * (j as f64 * 0.37 + r as f64).sin()))
            .collect();
        let prof = WaveProfile::from_samples(a, coeff, profile::Source::ExternalFile).unwrap();
        let back = WaveProfile::parse(&prof.to_text()).unwrap();
        prop_assert_eq!(back.coeff_samples(), prof.coeff_samples());
        prop_assert_eq!(back.speed().to_bits(), a.to_bits());
    }

    #[test]
    fn coefficients_are_one_periodic(x in -3.0f64..3.0, amp in -0.8f64..0.8) {
        let prof = manufactured_sine(amp, 1.0, 32).unwrap();
        let d = floquet_green::linalg::max_abs(&(prof.coeff_at(x) - prof.coeff_at(x + 1.0)));
        prop_assert!(d < 1e-10);
    }
}
