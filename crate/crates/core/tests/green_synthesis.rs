use floquet_green::bloch::critical_branch;
use floquet_green::green::{
    self, compose, green_bloch, green_bloch_multi, green_direct, green_laplace, leading_split, leading_term,
    relative_l1, residual_field, BlochParams, ContourParams, DirectParams, Kernel, LinearStepper,
};
use floquet_green::linalg::{cr, C64};
use floquet_green::oracle;
use floquet_green::profile::{make_constant_profile, manufactured_sine, WaveProfile};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn drift(a: f64) -> WaveProfile {
    make_constant_profile(1, a, &DMatrix::zeros(1, 1), 16).unwrap()
}

/// Heat kernel summed over the images of a ring of length `len`.
fn periodized_heat_ring(z: f64, t: f64, len: f64) -> f64 {
    let z0 = z - len * (z / len).round();
    (-3..=3).map(|j| oracle::heat_kernel(z0 - j as f64 * len, t, 1.0)).sum()
}

fn manufactured() -> WaveProfile {
    manufactured_sine(0.3, 1.0, 64).unwrap()
}

#[test]
fn mass_and_realness() {
    let f = green_bloch(&drift(-1.0), 2.0, BlochParams { k: 8, n_xi: 32, nc: 32, ny: 4 }).unwrap();
    for iy in 0..f.ys.len() {
        assert!((f.column_mass(iy, 0, 0) - cr(1.0)).norm() < 1e-10);
    }
    let p = manufactured();
    let f = green_bloch(&p, 1.0, BlochParams { k: 12, n_xi: 32, nc: 32, ny: 4 }).unwrap();
    assert!(f.max_imag() <= 1e-10 * f.max_abs());
}

#[test]
fn bloch_t_min_is_enforced() {
    let e = green_bloch(&drift(0.0), 0.01, BlochParams { k: 8, n_xi: 8, nc: 32, ny: 2 }).unwrap_err();
    assert!(e.to_string().contains("t_min"));
}

#[test]
fn direct_route_heat_and_order() {
    let heat = drift(0.0);
    let dp = DirectParams { ring: 16, nc: 32, dt: 1e-3, sigma: 1.0 / 32.0, ny: 2 };
    let f = &green_direct(&heat, &[1.0], dp).unwrap()[0];
    // A Gaussian of variance σ² is the heat kernel at time σ²/2.
    let shift = dp.sigma * dp.sigma / 2.0;
    for (iy, &y) in f.ys.iter().enumerate() {
        for (ix, &x) in f.xs.iter().enumerate() {
            let e = periodized_heat_ring(x - y, 1.0 + shift, 16.0);
            assert!((f.entry(ix, iy, 0, 0) - cr(e)).norm() < 1e-4);
        }
    }

    let p = manufactured();
    let run = |dt: f64| green_direct(&p, &[0.5], DirectParams { ring: 8, nc: 32, dt, sigma: 1.0 / 32.0, ny: 1 }).unwrap().remove(0);
    let reference = run(1e-3 / 8.0);
    let e1 = green::max_difference(&run(2e-3), &reference).unwrap();
    let e2 = green::max_difference(&run(1e-3), &reference).unwrap();
    let order = (e1 / e2).log2();
    assert!(order > 1.8 && order < 2.3, "observed order {order}");
}

#[test]
fn stepper_is_linear() {
    let p = manufactured();
    let st = LinearStepper::new(&p, 4, 32, 1e-3).unwrap();
    let nt = 128;
    let f = |i: usize| vec![(0..nt).map(|k| C64::new(((i + 1) * k) as f64 / nt as f64, 0.0).sin()).collect::<Vec<_>>()];
    let (mut u, mut v) = (f(1), f(2));
    let alpha = C64::new(0.7, -1.3);
    let mut w = vec![u[0].iter().zip(&v[0]).map(|(a, b)| a * alpha + b).collect::<Vec<_>>()];
    for _ in 0..20 {
        st.step(&mut u);
        st.step(&mut v);
        st.step(&mut w);
    }
    for k in 0..nt {
        assert!((w[0][k] - (u[0][k] * alpha + v[0][k])).norm() < 1e-12);
    }
}

#[test]
fn reaction_step_precondition() {
    let p = make_constant_profile(1, 0.0, &DMatrix::from_element(1, 1, -10.0), 16).unwrap();
    assert!(LinearStepper::new(&p, 4, 32, 0.1).is_err());
}

#[test]
fn bloch_matches_direct_on_manufactured() {
    let p = manufactured();
    let b = green_bloch(&p, 2.0, BlochParams { k: 12, n_xi: 64, nc: 32, ny: 4 }).unwrap();
    let d = green_direct(&p, &[2.0], DirectParams { ring: 64, nc: 32, dt: 4e-4, sigma: 1.0 / 64.0, ny: 4 }).unwrap();
    let r = relative_l1(&b, &d[0]).unwrap();
    assert!(r <= 1e-3, "relative L1 {r}");
}

#[test]
fn semigroup_composition() {
    let p = manufactured();
    let params = BlochParams { k: 12, n_xi: 16, nc: 32, ny: 32 };
    let fs = green_bloch_multi(&p, &[0.5, 1.0, 1.5], params, Kernel::G).unwrap();
    let c = compose(&fs[1], &fs[0]).unwrap();
    let r = relative_l1(&fs[2], &c).unwrap();
    assert!(r < 1e-10, "{r}");
    let bad = green_bloch(&p, 0.5, BlochParams { ny: 4, ..params }).unwrap();
    assert!(compose(&fs[1], &bad).is_err());
}

#[test]
fn leading_split_constant_fixtures() {
    let adv = drift(-1.0);
    let br = critical_branch(&adv, 8, 0.1 * std::f64::consts::PI, 21).unwrap();
    let params = BlochParams { k: 8, n_xi: 64, nc: 32, ny: 4 };
    let fs = green_bloch_multi(&adv, &[1.0, 2.0], params, Kernel::G).unwrap();
    let s = leading_split(&fs, &br).unwrap();
    assert!(s.exact);

    // One ξ node: G is the unit-period lattice sum, so at x = y the residual
    // is the off-centre image contribution.
    let heat = drift(0.0);
    let br = critical_branch(&heat, 8, 0.1 * std::f64::consts::PI, 21).unwrap();
    let f = green_bloch(&heat, 1.0, BlochParams { k: 8, n_xi: 1, nc: 32, ny: 1 }).unwrap();
    let r = residual_field(&f, &br);
    let i0 = f.x_index(0.0).unwrap();
    assert!((r.entry(i0, 0, 0, 0).re - oracle::heat_alias_tail(1.0)).abs() < 1e-10);
}

#[test]
fn leading_term_shape() {
    let p = manufactured();
    let br = critical_branch(&p, 16, 0.1 * std::f64::consts::PI, 21).unwrap();
    for &(x, t, y) in &[(0.3, 1.0, 0.1), (-2.0, 4.0, 0.7), (5.0, 10.0, 0.0)] {
        let e = leading_term(&br, x, t, y)[(0, 0)];
        let qq = br.q0(x)[0] * br.qtilde0(y)[0].conj();
        let g = oracle::heat_kernel(x - y - br.a_eff.re * t, t, br.b);
        assert!((e - qq * g).norm() < 1e-14);
    }
}

#[test]
fn leading_split_manufactured() {
    let p = manufactured();
    let br = critical_branch(&p, 16, 0.1 * std::f64::consts::PI, 21).unwrap();
    let params = BlochParams { k: 12, n_xi: 128, nc: 32, ny: 4 };
    let fs = green_bloch_multi(&p, &[1.0, 2.0, 4.0, 8.0], params, Kernel::G).unwrap();
    let s = leading_split(&fs, &br).unwrap();
    assert!(!s.exact);
    assert!(s.slope <= -0.8, "slope {}", s.slope);
    assert!(s.m_res > 0.0 && s.m_res.is_finite());
    assert!(s.scatter <= 0.5);
}

#[test]
fn laplace_matches_bloch() {
    let heat = drift(-0.5);
    let t = 1.0;
    let pairs = [(0.0, 0.0), (0.25, 0.0), (-0.6, 0.25), (1.1, 0.5), (-1.4, 0.75)];
    let params = ContourParams { nodes: 64, n_xi: 32, ..ContourParams::default() };
    let g = green_laplace(&heat, t, &pairs, params).unwrap();
    let g2 = green_laplace(&heat, t, &pairs, ContourParams { mu: 2.0, ..params }).unwrap();
    let b = green_bloch(&heat, t, BlochParams { k: 8, n_xi: 32, nc: 20, ny: 4 }).unwrap();
    for (k, &(x, y)) in pairs.iter().enumerate() {
        let iy = b.ys.iter().position(|&v| (v - y).abs() < 1e-12).unwrap();
        let ix = b.x_index(x).unwrap();
        let reference = b.entry(ix, iy, 0, 0);
        assert!((g[k][(0, 0)] - reference).norm() < 1e-7 * reference.norm().max(1e-3), "{x} {y}");
        assert!((g2[k][(0, 0)] - g[k][(0, 0)]).norm() < 1e-7 * reference.norm().max(1e-3));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn drifting_gaussian(speed in -2.0f64..2.0, t in 0.2f64..3.0) {
        let p = drift(speed);
        let f = green_bloch(&p, t, BlochParams { k: 8, n_xi: 32, nc: 32, ny: 2 }).unwrap();
        for (iy, &y) in f.ys.iter().enumerate() {
            for (ix, &x) in f.xs.iter().enumerate() {
                let e = periodized_heat_ring(x - y + speed * t, t, 32.0);
                prop_assert!((f.entry(ix, iy, 0, 0) - cr(e)).norm() < 1e-10);
            }
        }
    }
}
