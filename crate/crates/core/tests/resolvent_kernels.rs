use std::f64::consts::PI;

use floquet_green::floquet::{constant_scalar_mu, FloquetSystem};
use floquet_green::linalg::{self, c, cr, C64, CMat};
use floquet_green::oracle;
use floquet_green::profile::{make_constant_profile, manufactured_sine, WaveProfile};
use floquet_green::resolvent::{self, dichotomy_projections, FloquetBasis};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn advection(a: f64) -> WaveProfile {
    make_constant_profile(1, -a, &DMatrix::zeros(1, 1), 16).unwrap()
}

fn manufactured() -> WaveProfile {
    manufactured_sine(0.3, 1.0, 64).unwrap()
}

#[test]
fn dichotomy_projection_identities() {
    let p = manufactured();
    let sys = FloquetSystem::new(&p, 0.4, c(2.0, 1.0));
    let d = dichotomy_projections(&sys, 0.2, 1e-12).unwrap();
    let id = CMat::identity(2, 2);
    assert!(linalg::max_abs(&(&d.pi_plus + &d.pi_minus - &id)) < 1e-10);
    assert!(linalg::max_abs(&(&d.pi_plus * &d.pi_plus - &d.pi_plus)) < 1e-10);
    assert!(linalg::max_abs(&(&d.pi_minus * &d.pi_minus - &d.pi_minus)) < 1e-10);
    let f = sys.monodromy(0.2, 1e-12).unwrap().matrix;
    assert!(linalg::max_abs(&(&f * &d.pi_plus - &d.pi_plus * &f)) < 1e-9);
    assert_eq!(d.stable_count, 1);
    // The range of Π⁺ is the decaying multiplier's eigenvector.
    let stable = d.multipliers[0];
    assert!(stable.norm() < 1.0);
    let image = &f * &d.pi_plus - &d.pi_plus * stable;
    assert!(linalg::max_abs(&image) < 1e-9);
}

#[test]
fn consistent_splitting_for_large_re_lambda() {
    let p = manufactured();
    for &lam in &[50.0, 400.0] {
        let d = dichotomy_projections(&FloquetSystem::new(&p, 0.0, cr(lam)), 0.0, 1e-12).unwrap();
        let trace: C64 = (0..2).map(|i| d.pi_plus[(i, i)]).sum();
        assert_eq!(d.stable_count, 1);
        assert!((trace - cr(1.0)).norm() < 1e-8);
    }
}

#[test]
fn jump_conditions() {
    let p = manufactured();
    let sys = FloquetSystem::new(&p, 0.3, c(1.5, -0.5));
    let y = 0.4;
    let h = 1e-7;
    let w = resolvent::whole_line_kernel(&sys, &[y - h, y + h], &[y], 1e-12).unwrap();
    let jump = w.stacked(1, 0) - w.stacked(0, 0);
    assert!((jump[(0, 0)]).norm() < 1e-5);
    assert!((jump[(1, 0)] - cr(1.0)).norm() < 1e-5);
    // Periodic kernel: G(y⁺) − G((y+1)⁻) carries the same jump.
    let basis = FloquetBasis::new(&sys, y, &[h, 1.0 - h], 1e-12, true).unwrap();
    let jump = basis.periodic(y + h).unwrap() - basis.periodic(y - h).unwrap();
    assert!((jump[(0, 0)]).norm() < 1e-5);
    assert!((jump[(1, 0)] - cr(1.0)).norm() < 1e-5);
}

#[test]
fn whole_line_diagonal_value_and_decay() {
    let (a, xi, lam) = (1.0, 0.3, c(2.0, 0.7));
    let adv = advection(a);
    let sys = FloquetSystem::new(&adv, xi, lam);
    let y = 0.25;
    let w = resolvent::whole_line_kernel(&sys, &[y], &[y], 1e-12).unwrap();
    let (mm, mp) = constant_scalar_mu(a, xi, lam);
    assert!((w.g(0, 0)[(0, 0)] - cr(1.0) / (mm - mp)).norm() < 1e-10);

    let p = manufactured();
    let sys = FloquetSystem::new(&p, 0.2, cr(2.0));
    let xs: Vec<f64> = (-16..=16).map(|k| y + k as f64 / 8.0).collect();
    let f = resolvent::whole_line_kernel(&sys, &xs, &[y], 1e-12).unwrap();
    let g0 = f.g(16, 0)[(0, 0)].norm();
    let rate = xs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != 16)
        .map(|(i, &x)| -(f.g(i, 0)[(0, 0)].norm() / g0).ln() / (x - y).abs())
        .fold(f64::INFINITY, f64::min);
    assert!(rate > 0.0, "fitted decay rate {rate}");
}

#[test]
fn image_sums() {
    let (a, xi) = (1.0, 0.3);
    let grid = resolvent::unit_grid(8);
    let adv = advection(a);
    let sys = FloquetSystem::new(&adv, xi, cr(1.0));
    let rep = resolvent::method_of_images_check(&sys, 10, &grid, &grid, 1e-12).unwrap();
    let (mm, mp) = constant_scalar_mu(a, xi, cr(1.0));
    let c_exact = mm.re.abs().min(mp.re.abs());
    assert!((rep.decay_rate - c_exact).abs() < 1e-8);
    for j in 1..10 {
        assert!(rep.deviations[j + 1] < rep.deviations[j]);
    }
    let ratio = rep.deviations[1] / rep.deviations[0];
    assert!((ratio / (-c_exact).exp() - 1.0).abs() < 0.15, "{ratio}");
    assert!(rep.deviations[10] <= rep.tail_bound);

    let sys = FloquetSystem::new(&adv, xi, cr(4.0));
    let rep = resolvent::method_of_images_check(&sys, 10, &grid, &grid, 1e-12).unwrap();
    assert!(rep.deviations[10] <= 1e-6, "{}", rep.deviations[10]);

    let p = manufactured();
    let sys = FloquetSystem::new(&p, 0.0, cr(1.0));
    let rep = resolvent::method_of_images_check(&sys, 10, &grid, &grid, 1e-12).unwrap();
    assert!(rep.deviations[10] <= rep.tail_bound);
}

#[test]
fn high_frequency_rate() {
    let heat = advection(0.0);
    let th: f64 = 0.6;
    let lams: Vec<C64> = (0..7).map(|k| C64::from_polar(10f64.powf(2.0 + k as f64 / 3.0), th)).collect();
    let pairs: Vec<(f64, f64)> = [0.0, 0.05, 0.1, 0.2, 0.25, 0.3].iter().map(|&x| (x, 0.0)).collect();
    let rep = resolvent::high_frequency_modulus_check(&heat, 0.0, &lams, &pairs, 1e-12).unwrap();
    let exact = (th / 2.0).cos();
    assert!((rep.min_re_sqrt_dir - exact).abs() < 1e-12);
    assert!((-rep.rate - exact).abs().min((rep.rate - exact).abs()) < 0.1 * exact, "rate {}", rep.rate);
    let max = rep.scaled_sup.iter().copied().fold(0.0, f64::max);
    let min = rep.scaled_sup.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(max / min < 5.0);

    // Two-point slope at x−y = 0.3 vs 0.05, away from the image midpoint.
    let lam = C64::from_polar(900.0, th);
    let sys = FloquetSystem::new(&heat, 0.0, lam);
    let f = resolvent::periodic_kernel(&sys, &[0.05, 0.3], &[0.0], 1e-12).unwrap();
    let drop = (f.g(0, 0)[(0, 0)].norm() / f.g(1, 0)[(0, 0)].norm()).ln();
    let expect = exact * lam.norm().sqrt() * 0.25;
    assert!((drop - expect).abs() < 0.05 * expect, "{drop} vs {expect}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kernels_match_closed_forms(
        re in 0.5f64..50.0,
        im in -10.0f64..10.0,
        xi in -PI..PI,
        a in -2.0f64..2.0,
    ) {
        let p = advection(a);
        let lam = c(re, im);
        let sys = FloquetSystem::new(&p, xi, lam);
        let grid = resolvent::unit_grid(6);
        let w = resolvent::whole_line_kernel(&sys, &grid, &grid, 1e-12).unwrap();
        let per = resolvent::periodic_kernel(&sys, &grid, &grid, 1e-12).unwrap();
        for (ix, &x) in grid.iter().enumerate() {
            for (iy, &y) in grid.iter().enumerate() {
                let (g, dg) = oracle::constant_whole(a, xi, lam, x, y);
                prop_assert!((w.g(ix, iy)[(0, 0)] - g).norm() <= 1e-8 * g.norm());
                prop_assert!((w.dg(ix, iy)[(0, 0)] - dg).norm() <= 1e-8 * dg.norm().max(g.norm()));
                let (g, _) = oracle::constant_periodic(a, xi, lam, x, y);
                prop_assert!((per.g(ix, iy)[(0, 0)] - g).norm() <= 1e-8 * g.norm());
            }
        }
    }
}
