//! Closed-form reference values for constant-coefficient scalar operators.
//!
//! The constant scalar model is `u_t + a u_x = u_xx`, i.e. profile speed
//! `−a` in the `∂² + a∂` convention used elsewhere in the crate.

use std::f64::consts::PI;

use crate::floquet::constant_scalar_mu;
use crate::linalg::{cr, C64, CMat};

/// Whole-line kernel and x-derivative of `(L_ξ − λ)^{-1}`.
pub fn constant_whole(a: f64, xi: f64, lambda: C64, x: f64, y: f64) -> (C64, C64) {
    let (mm, mp) = constant_scalar_mu(a, xi, lambda);
    let d = mm - mp;
    if x > y {
        let g = (mm * (x - y)).exp() / d;
        (g, g * mm)
    } else {
        let g = (mp * (x - y)).exp() / d;
        (g, g * mp)
    }
}

/// Periodic-cell kernel and x-derivative for `x, y ∈ [0,1)`.
pub fn constant_periodic(a: f64, xi: f64, lambda: C64, x: f64, y: f64) -> (C64, C64) {
    let (mm, mp) = constant_scalar_mu(a, xi, lambda);
    let d = mm - mp;
    let s = if x > y { x - y } else { x - y + 1.0 };
    // Factor e^{μs}/(1 − e^{μ}) written to stay finite when Re μ is large.
    let term = |mu: C64| -> C64 {
        if mu.re > 0.0 {
            -(mu * (s - 1.0)).exp() / (cr(1.0) - (-mu).exp())
        } else {
            (mu * s).exp() / (cr(1.0) - mu.exp())
        }
    };
    let (tm, tp) = (term(mm), term(mp));
    ((tm - tp) / d, (tm * mm - tp * mp) / d)
}

/// Dichotomy projections `Π±` of the constant scalar system.
pub fn constant_projections(a: f64, xi: f64, lambda: C64) -> (CMat, CMat) {
    let (mm, mp) = constant_scalar_mu(a, xi, lambda);
    let d = mm - mp;
    let plus = CMat::from_row_slice(2, 2, &[-mp / d, cr(1.0) / d, -mm * mp / d, mm / d]);
    let minus = CMat::identity(2, 2) - &plus;
    (plus, minus)
}

/// Gaussian heat kernel `(4πbt)^{-1/2} e^{−z²/(4bt)}`.
pub fn heat_kernel(z: f64, t: f64, b: f64) -> f64 {
    (-z * z / (4.0 * b * t)).exp() / (4.0 * PI * b * t).sqrt()
}

/// Lattice sum `Σ_j k(z − j, t)` with enough terms for double precision.
pub fn periodized_heat(z: f64, t: f64, b: f64) -> f64 {
    let z0 = z - z.round();
    let width = (4.0 * b * t * 40.0).sqrt().ceil() as i64 + 2;
    (-width..=width).map(|j| heat_kernel(z0 - j as f64, t, b)).sum()
}

/// `2 Σ_{j≥1} k(j, t)`: the off-centre images at zero displacement.
pub fn heat_alias_tail(t: f64) -> f64 {
    periodized_heat(0.0, t, 1.0) - heat_kernel(0.0, t, 1.0)
}

/// Evans function of the heat operator `∂²`:
/// `D(λ,ξ) = 1 + e^{2iξ} − 2e^{iξ} cosh √λ`.
pub fn heat_evans(lambda: C64, xi: f64) -> C64 {
    let e = C64::from_polar(1.0, xi);
    cr(1.0) + e * e - e * 2.0 * lambda.sqrt().cosh()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_kernel_satisfies_jump_and_periodicity() {
        let (a, xi, lam) = (1.0, 0.3, C64::new(1.0, 0.0));
        let y = 0.4;
        let (_, dp) = constant_periodic(a, xi, lam, y + 1e-12, y);
        let (_, dm) = constant_periodic(a, xi, lam, y, y);
        assert!((dp - dm - cr(1.0)).norm() < 1e-9);
        let (g0, d0) = constant_periodic(a, xi, lam, 0.0, y);
        let (g1, d1) = constant_periodic(a, xi, lam, 1.0 - 1e-15, y);
        assert!((g0 - g1).norm() < 1e-12 && (d0 - d1).norm() < 1e-12);
    }

    #[test]
    fn heat_evans_zero_and_value() {
        assert!(heat_evans(cr(-0.0625), 0.25).norm() < 1e-14);
        let e = std::f64::consts::E;
        assert!((heat_evans(cr(1.0), 0.0) - cr((e - 1.0) * (1.0 / e - 1.0))).norm() < 1e-14);
    }

    #[test]
    fn alias_tail_value() {
        let lead = 2.0 * (4.0 * PI).powf(-0.5) * (-0.25f64).exp();
        let explicit: f64 = (1..20).map(|j| 2.0 * heat_kernel(j as f64, 1.0, 1.0)).sum();
        let tail = heat_alias_tail(1.0);
        assert!((tail - explicit).abs() < 1e-13);
        assert!(tail > lead && tail < 1.7 * lead);
    }
}
