use std::f64::consts::PI;

use floquet_green::bloch::{self, check_diffusive_stability, critical_branch, inner, scalar, spectrum, ZeroModeSource};
use floquet_green::linalg::{c, cr, C64};
use floquet_green::profile::{make_constant_profile, manufactured_sine, WaveProfile};
use proptest::prelude::*;

fn constant(speed: f64, c0: f64) -> WaveProfile {
    make_constant_profile(1, speed, &scalar(c0), 16).unwrap()
}

fn manufactured() -> WaveProfile {
    manufactured_sine(0.3, 1.0, 64).unwrap()
}

#[test]
fn galerkin_matrix_entries() {
    let heat = bloch::bloch_matrix(&constant(0.0, 0.0), 0.0, 8).unwrap();
    for j in -8i64..=8 {
        let i = (j + 8) as usize;
        let w = 2.0 * PI * j as f64;
        assert!((heat.matrix[(i, i)] - cr(-w * w)).norm() < 1e-12);
    }
    let off: f64 = (0..17).flat_map(|r| (0..17).map(move |c| (r, c))).filter(|(r, c)| r != c).map(|(r, c)| heat.matrix[(r, c)].norm()).sum();
    assert_eq!(off, 0.0);
    let adv = bloch::bloch_matrix(&constant(1.0, 0.0), 0.3, 8).unwrap();
    for j in -8i64..=8 {
        let i = (j + 8) as usize;
        let w = 2.0 * PI * j as f64 + 0.3;
        assert!((adv.matrix[(i, i)] - c(-w * w, w)).norm() < 1e-12);
    }
    assert!(bloch::bloch_matrix(&constant(0.0, 0.0), 0.0, 4).is_err());
}

#[test]
fn top_eigenvalues() {
    let top = |p: &WaveProfile, xi: f64| spectrum(p, xi, 16).unwrap().values[0];
    assert!((top(&constant(0.0, 0.0), 0.4) - cr(-0.16)).norm() < 1e-12);
    assert!((top(&constant(-1.0, 0.0), 0.4) - c(-0.16, -0.4)).norm() < 1e-12);
    let s = spectrum(&manufactured(), 0.0, 16).unwrap();
    let mut mods: Vec<f64> = s.values.iter().map(|z| z.norm()).collect();
    mods.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!(mods[0] < 1e-8);
    assert!(mods[1] > 1e-3);
}

#[test]
fn stability_reports() {
    let adv = check_diffusive_stability(&constant(-1.0, 0.0), 16, 64).unwrap();
    assert!(adv.d1 && adv.d2);
    assert!((adv.theta - 1.0).abs() < 1e-10, "{}", adv.theta);
    let growing = check_diffusive_stability(&constant(0.0, 1.0), 16, 64).unwrap();
    assert!(!growing.d2);
    let man = check_diffusive_stability(&manufactured(), 16, 64).unwrap();
    assert!(man.d1 && man.gap > 0.0);
    assert!(man.theta.is_finite());
}

#[test]
fn branch_coefficients() {
    let adv = critical_branch(&constant(-1.0, 0.0), 16, 0.1 * PI, 21).unwrap();
    assert!((adv.lambda1 - c(0.0, -1.0)).norm() < 1e-10);
    assert!((adv.lambda2 - cr(-1.0)).norm() < 1e-10);
    assert!((adv.b - 1.0).abs() < 1e-10);
    let heat = critical_branch(&constant(0.0, 0.0), 16, 0.1 * PI, 21).unwrap();
    assert!(heat.lambda1.norm() < 1e-10);
    assert!((heat.lambda2 - cr(-1.0)).norm() < 1e-10);
}

#[test]
fn manufactured_branch_is_cubic_accurate() {
    let p = manufactured();
    let wide = critical_branch(&p, 16, 0.2, 21).unwrap();
    let narrow = critical_branch(&p, 16, 0.1, 21).unwrap();
    let ratio = wide.quadratic_residual / narrow.quadratic_residual;
    assert!(ratio >= 8.0, "reduction {ratio}");
    assert!(wide.lambda2.re <= 0.0);
    assert_eq!(wide.zero_mode_source, ZeroModeSource::ManufacturedSurrogate);
}

#[test]
fn eigenfunction_normalization() {
    let p = manufactured();
    let br = critical_branch(&p, 16, 0.1 * PI, 21).unwrap();
    for (q, qt) in br.q.iter().zip(&br.qtilde) {
        assert!((inner(qt, q) - cr(1.0)).norm() < 1e-10);
    }
    assert!(br.lambda_values[br.zero_index()].norm() < 1e-8);
    for &x in &[0.0, 0.2, 0.61] {
        let expect = 1.0 + 0.3 * (2.0 * PI * x).sin();
        assert!((br.q0(x)[0] - cr(expect)).norm() < 1e-9);
    }
}

fn sorted(mut v: Vec<C64>) -> Vec<C64> {
    v.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Real coefficients: σ(L_{−ξ}) = conj σ(L_ξ).
    #[test]
    fn conjugation_symmetry(xi in 0.05f64..3.0, amp in -0.5f64..0.5, a in -2.0f64..2.0) {
        let p = manufactured_sine(amp, a, 32).unwrap();
        let plus = sorted(spectrum(&p, xi, 10).unwrap().values);
        let minus = sorted(spectrum(&p, -xi, 10).unwrap().values.iter().map(|z| z.conj()).collect());
        for (u, v) in plus.iter().zip(&minus).take(5) {
            prop_assert!((u - v).norm() < 1e-8 * u.norm().max(1.0));
        }
    }

    /// Constant scalar operators: top eigenvalue is the symbol at j = 0.
    #[test]
    fn constant_symbol(xi in -3.0f64..3.0, speed in -2.0f64..2.0, c0 in -1.0f64..1.0) {
        let top = spectrum(&constant(speed, c0), xi, 8).unwrap().values[0];
        prop_assert!((top - c(c0 - xi * xi, speed * xi)).norm() < 1e-10);
    }
}
