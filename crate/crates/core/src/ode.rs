//! Adaptive Dormand–Prince 5(4) integration of linear matrix ODEs
//! `Y′ = A(x) Y`.

use crate::error::{Error, Result};
use crate::linalg::{max_abs, C64, CMat};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b̂ for the embedded 4th-order error estimate.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub tol: f64,
    pub max_steps: usize,
}

impl Tolerance {
    pub fn new(tol: f64) -> Result<Self> {
        if !(1e-13..=1e-4).contains(&tol) {
            return Err(Error::param("tol", format!("must lie in [1e-13, 1e-4], got {tol:e}")));
        }
        Ok(Tolerance { tol, max_steps: 2_000_000 })
    }
}

/// Result of integrating to each requested abscissa.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub xs: Vec<f64>,
    pub values: Vec<CMat>,
    /// Accumulated local error estimate (sum of accepted-step estimates,
    /// relative to the solution scale).
    pub error: f64,
    pub steps: usize,
}

#[inline]
fn axpy(acc: &mut CMat, s: f64, x: &CMat) {
    let s = C64::new(s, 0.0);
    acc.zip_apply(x, |a, b| *a += s * b);
}

/// Integrate `Y′ = A(x)Y` from `x0` with data `y0`, recording the solution at
/// each of `targets` (monotone in the direction of integration).
pub fn integrate<F>(coef: F, y0: &CMat, x0: f64, targets: &[f64], tol: Tolerance) -> Result<Trajectory>
where
    F: Fn(f64) -> CMat,
{
    let mut out = Trajectory { xs: Vec::with_capacity(targets.len()), values: Vec::with_capacity(targets.len()), error: 0.0, steps: 0 };
    let mut x = x0;
    let mut y = y0.clone();
    let mut k1 = &coef(x) * &y;
    let a0 = max_abs(&coef(x)).max(1.0);
    let mut h_abs = (0.05 / a0.sqrt()).min(0.05);
    for &target in targets {
        let dir = if target >= x { 1.0 } else { -1.0 };
        let mut guard = 0usize;
        while (target - x).abs() > 1e-15 * (1.0 + x.abs()) {
            guard += 1;
            if guard > tol.max_steps {
                return Err(Error::NoConvergence(format!("ODE exceeded {} steps", tol.max_steps)));
            }
            let remaining = (target - x).abs();
            let mut last = false;
            let mut h_try = h_abs;
            if h_try >= remaining {
                h_try = remaining;
                last = true;
            }
            let h = dir * h_try;
            let hc = C64::new(h, 0.0);
            let mut tmp = y.clone();
            axpy(&mut tmp, h * A21, &k1);
            let k2 = &coef(x + C2 * h) * &tmp;
            let mut tmp = y.clone();
            axpy(&mut tmp, h * A31, &k1);
            axpy(&mut tmp, h * A32, &k2);
            let k3 = &coef(x + C3 * h) * &tmp;
            let mut tmp = y.clone();
            axpy(&mut tmp, h * A41, &k1);
            axpy(&mut tmp, h * A42, &k2);
            axpy(&mut tmp, h * A43, &k3);
            let k4 = &coef(x + C4 * h) * &tmp;
            let mut tmp = y.clone();
            axpy(&mut tmp, h * A51, &k1);
            axpy(&mut tmp, h * A52, &k2);
            axpy(&mut tmp, h * A53, &k3);
            axpy(&mut tmp, h * A54, &k4);
            let k5 = &coef(x + C5 * h) * &tmp;
            let mut tmp = y.clone();
            axpy(&mut tmp, h * A61, &k1);
            axpy(&mut tmp, h * A62, &k2);
            axpy(&mut tmp, h * A63, &k3);
            axpy(&mut tmp, h * A64, &k4);
            axpy(&mut tmp, h * A65, &k5);
            let x_new = if last { target } else { x + h };
            let k6 = &coef(x + h) * &tmp;
            let mut y_new = y.clone();
            axpy(&mut y_new, h * B1, &k1);
            axpy(&mut y_new, h * B3, &k3);
            axpy(&mut y_new, h * B4, &k4);
            axpy(&mut y_new, h * B5, &k5);
            axpy(&mut y_new, h * B6, &k6);
            let k7 = &coef(x_new) * &y_new;
            let mut err = &k1 * C64::new(E1, 0.0);
            axpy(&mut err, E3, &k3);
            axpy(&mut err, E4, &k4);
            axpy(&mut err, E5, &k5);
            axpy(&mut err, E6, &k6);
            axpy(&mut err, E7, &k7);
            err *= hc;
            let scale = max_abs(&y).max(max_abs(&y_new)).max(1e-300);
            let rel = max_abs(&err) / scale;
            if !rel.is_finite() || !max_abs(&y_new).is_finite() {
                return Err(Error::StepUnderflow {
                    x,
                    h,
                    hint: "solution overflowed; reduce |lambda| or enable auto_rescale".into(),
                });
            }
            let ratio = rel / tol.tol;
            if ratio <= 1.0 {
                x = x_new;
                y = y_new;
                k1 = k7;
                out.error += rel;
                out.steps += 1;
                let fac = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h_abs = h_try * fac;
                } else {
                    h_abs = h_abs.max(h_try * fac.min(1.0));
                }
            } else {
                h_abs = h_try * (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9);
                if h_abs < 1e-13 * (1.0 + x.abs()) {
                    return Err(Error::StepUnderflow {
                        x,
                        h: h_abs,
                        hint: "stiff spectral parameter for this tolerance; rescale x by |lambda|^(1/2) (auto_rescale) or loosen tol".into(),
                    });
                }
            }
        }
        out.xs.push(target);
        out.values.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cr, expm};

    #[test]
    fn constant_coefficient_matches_expm() {
        let a = CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(-4.0), cr(-0.3)]);
        let id = CMat::identity(2, 2);
        let tr = integrate(|_| a.clone(), &id, 0.0, &[0.5, 1.0], Tolerance::new(1e-12).unwrap()).unwrap();
        let ex = expm(&a);
        assert!(max_abs(&(&tr.values[1] - &ex)) < 1e-10);
        let back = integrate(|_| a.clone(), &id, 1.0, &[0.0], Tolerance::new(1e-12).unwrap()).unwrap();
        let inv = expm(&(-a.clone()));
        assert!(max_abs(&(&back.values[0] - &inv)) < 1e-10);
    }

    #[test]
    fn tolerance_range() {
        assert!(Tolerance::new(1e-14).is_err());
        assert!(Tolerance::new(1e-3).is_err());
        assert!(Tolerance::new(1e-8).is_ok());
    }
}
