use std::f64::consts::{E, PI};

use floquet_green::floquet::{self, FloquetSystem};
use floquet_green::linalg::{self, c, cr, CMat};
use floquet_green::profile::{make_constant_profile, manufactured_sine, WaveProfile};
use floquet_green::run::{constant_dispersion, constant_evans};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn constant(speed: f64, c0: f64) -> WaveProfile {
    make_constant_profile(1, speed, &DMatrix::from_element(1, 1, c0), 16).unwrap()
}

fn manufactured() -> WaveProfile {
    manufactured_sine(0.3, 1.0, 64).unwrap()
}

/// Classical RK4 with a fixed step; independent of the adaptive integrator.
fn rk4(sys: &FloquetSystem, y: f64, x: f64, steps: usize) -> CMat {
    let m = sys.dim();
    let h = (x - y) / steps as f64;
    let mut u = CMat::identity(m, m);
    let mut s = y;
    for _ in 0..steps {
        let k1 = sys.matrix(s) * &u;
        let k2 = sys.matrix(s + h / 2.0) * (&u + &k1 * cr(h / 2.0));
        let k3 = sys.matrix(s + h / 2.0) * (&u + &k2 * cr(h / 2.0));
        let k4 = sys.matrix(s + h) * (&u + &k3 * cr(h));
        u += (k1 + k2 * cr(2.0) + k3 * cr(2.0) + k4) * cr(h / 6.0);
        s += h;
    }
    u
}

#[test]
fn system_block_form() {
    let p = manufactured();
    let (xi, lam) = (0.4, c(0.5, -1.0));
    let sys = FloquetSystem::new(&p, xi, lam);
    let x = 0.23;
    let m = sys.matrix(x);
    let a = p.speed();
    let df = p.coeff_at(x)[(0, 0)];
    assert_eq!(m[(0, 0)], cr(0.0));
    assert_eq!(m[(0, 1)], cr(1.0));
    assert!((m[(1, 1)] + c(a, 2.0 * xi)).norm() < 1e-15);
    let cxi = -df - (c(0.0, a * xi) - cr(xi * xi));
    assert!((m[(1, 0)] - (lam + cxi)).norm() < 1e-14);
}

#[test]
fn propagator_identity_composition_and_rk4_oracle() {
    let p = manufactured();
    let sys = FloquetSystem::new(&p, 0.5, c(0.0, 2.0));
    let id = sys.solution_operator(0.4, 0.4, 1e-12).unwrap().matrix;
    assert!(linalg::max_abs(&(id - CMat::identity(2, 2))) < 1e-13);

    let f1 = sys.solution_operator(0.0, 0.35, 1e-12).unwrap().matrix;
    let f2 = sys.solution_operator(0.35, 1.0, 1e-12).unwrap().matrix;
    let f = sys.solution_operator(0.0, 1.0, 1e-12).unwrap().matrix;
    assert!(linalg::max_abs(&(&f2 * &f1 - &f)) < 1e-10);

    let reference = rk4(&sys, 0.0, 1.0, 4000);
    assert!(linalg::max_abs(&(f - reference)) < 1e-9);
}

#[test]
fn monodromy_spectrum_is_base_point_invariant() {
    let p = manufactured();
    let sys = FloquetSystem::new(&p, 0.7, c(0.3, 0.4));
    let a = sys.multipliers(0.0, 1e-12).unwrap().values;
    let b = sys.multipliers(0.37, 1e-12).unwrap().values;
    for z in &a {
        let best = b.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
        assert!(best < 1e-8 * z.norm().max(1.0));
    }
}

#[test]
fn evans_reference_values() {
    let heat = constant(0.0, 0.0);
    let d = floquet::evans(&heat, cr(-0.0625), 0.25, 1e-12).unwrap();
    assert!(d.norm() < 1e-8);
    let d = floquet::evans(&heat, cr(1.0), 0.0, 1e-12).unwrap();
    assert!((d - cr((E - 1.0) * (1.0 / E - 1.0))).norm() < 1e-9);
    let d = floquet::evans(&manufactured(), cr(0.0), 0.0, 1e-12).unwrap();
    assert!(d.norm() < 1e-8, "{d}");
}

#[test]
fn winding_numbers() {
    let heat = constant(0.0, 0.0);
    let around = floquet::circle(cr(-0.25), 0.1, 16);
    assert_eq!(floquet::winding_number(&heat, 0.5, &around, 1e-10).unwrap(), 1);
    let away = floquet::circle(cr(1.0), 0.1, 16);
    assert_eq!(floquet::winding_number(&heat, 0.5, &away, 1e-10).unwrap(), 0);
    let zero = floquet::circle(cr(0.0), 0.05, 16);
    assert_eq!(floquet::winding_number(&manufactured(), 0.0, &zero, 1e-10).unwrap(), 1);
}

#[test]
fn dispersion_roots_of_advection_diffusion() {
    let adv = constant(-1.0, 0.0);
    for i in 0..16 {
        let xi = -PI / 2.0 + PI * i as f64 / 15.0;
        let guess = constant_dispersion(-1.0, 0.0, xi) + c(0.01, -0.01);
        let root = floquet::evans_root(&adv, xi, guess, 1e-12).unwrap();
        assert!((root - c(-xi * xi, -xi)).norm() < 1e-6, "xi={xi} root={root}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn evans_matches_constant_closed_form(
        re in -3.0f64..3.0,
        im in -3.0f64..3.0,
        xi in -PI..PI,
        speed in -2.0f64..2.0,
        c0 in -1.0f64..1.0,
    ) {
        let p = constant(speed, c0);
        let lam = c(re, im);
        let d = floquet::evans(&p, lam, xi, 1e-12).unwrap();
        let e = constant_evans(speed, c0, lam, xi);
        prop_assert!((d - e).norm() <= 1e-8 * e.norm().max(1.0), "{} vs {}", d, e);
    }

    #[test]
    fn liouville_formula(xi in -PI..PI, re in 0.0f64..4.0, im in -4.0f64..4.0) {
        // det ℱ^{0→1} = exp(∫ tr 𝔸) = exp(−(a + 2iξ)).
        let p = manufactured();
        let sys = FloquetSystem::new(&p, xi, c(re, im));
        let f = sys.monodromy(0.0, 1e-12).unwrap().matrix;
        let expect = (-c(p.speed(), 2.0 * xi)).exp();
        prop_assert!((linalg::det(&f) - expect).norm() < 1e-8 * expect.norm().max(1.0));
    }
}

