//! Adaptive Gauss-Kronrod quadrature for complex integrands on real
//! parameter intervals, the engine behind every period and certificate
//! integral in the crate.

use crate::numeric::C;
use crate::{Error, Result};

// G7-K15 nodes and weights (positive half, symmetric).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One G7-K15 panel on [a, b]; returns (kronrod value, error estimate).
pub fn gk15<F: Fn(f64) -> C + ?Sized>(f: &F, a: f64, b: f64) -> (C, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut resabs = fc.norm() * WGK[7];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.norm() + f2.norm());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    kronrod *= half;
    gauss *= half;
    resabs *= half.abs();
    let raw = (kronrod - gauss).norm();
    // QUADPACK-style rescaling keeps the estimate meaningful when the
    // integrand is nearly resolved.
    let err = if resabs > 0.0 && raw > 0.0 {
        let scale = (200.0 * raw / resabs).powf(1.5);
        if scale < 1.0 {
            resabs * scale
        } else {
            raw
        }
    } else {
        raw
    };
    (kronrod, err)
}

/// Adaptive integral of a complex integrand over [a, b] to absolute
/// tolerance `tol`. Deterministic bisection, deepest-first.
pub fn integrate<F: Fn(f64) -> C + ?Sized>(f: &F, a: f64, b: f64, tol: f64) -> Result<(C, f64)> {
    struct Panel {
        a: f64,
        b: f64,
        value: C,
        err: f64,
    }
    let (value, err) = gk15(f, a, b);
    let mut panels = vec![Panel { a, b, value, err }];
    let mut total_err: f64 = err;
    let mut evals = 1usize;
    while total_err > tol {
        // Split the worst panel.
        let (worst, _) = panels.iter().enumerate().map(|(i, p)| (i, p.err)).fold(
            (0usize, -1.0f64),
            |acc, (i, e)| if e > acc.1 { (i, e) } else { acc },
        );
        let p = panels.swap_remove(worst);
        total_err -= p.err;
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b || evals > 4000 {
            return Err(Error::QuadratureFailure(format!(
                "error estimate {total_err:.3e} did not reach tolerance {tol:.3e} after {evals} panels"
            )));
        }
        let (v1, e1) = gk15(f, p.a, mid);
        let (v2, e2) = gk15(f, mid, p.b);
        evals += 2;
        total_err += e1 + e2;
        panels.push(Panel {
            a: p.a,
            b: mid,
            value: v1,
            err: e1,
        });
        panels.push(Panel {
            a: mid,
            b: p.b,
            value: v2,
            err: e2,
        });
    }
    // Sum in parameter order for reproducibility.
    panels.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap());
    let mut acc = C::ZERO;
    for p in &panels {
        acc += p.value;
    }
    Ok((acc, total_err))
}

/// Integral of `f(z) dz` along a parametrized path with velocity, t in [0,1].
pub fn path_integral(
    f: &(impl Fn(C) -> C + ?Sized),
    point: &dyn Fn(f64) -> C,
    velocity: &dyn Fn(f64) -> C,
    tol: f64,
) -> Result<C> {
    let integrand = |t: f64| f(point(t)) * velocity(t);
    let (v, _) = integrate(&integrand, 0.0, 1.0, tol)?;
    Ok(v)
}

/// Cumulative integral of `f` over [0, L] at `n + 1` evenly spaced
/// checkpoints; returns the prefix values F(s_k) = ∫_0^{s_k} f.
pub fn cumulative<F: Fn(f64) -> C + ?Sized>(
    f: &F,
    length: f64,
    n: usize,
    tol: f64,
) -> Result<Vec<C>> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = C::ZERO;
    out.push(acc);
    for k in 0..n {
        let a = length * k as f64 / n as f64;
        let b = length * (k + 1) as f64 / n as f64;
        let (v, _) = integrate(f, a, b, tol / n as f64)?;
        acc += v;
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::c;
    use std::f64::consts::PI;

    #[test]
    fn residue_of_inverse_z_on_unit_circle() {
        // ∮ dz/z over |z| = 1 equals 2πi.
        let point = |t: f64| c((2.0 * PI * t).cos(), (2.0 * PI * t).sin());
        let velocity = |t: f64| c(0.0, 2.0 * PI) * point(t);
        let v = path_integral(&|z: C| 1.0 / z, &point, &velocity, 1e-12).unwrap();
        assert!((v - c(0.0, 2.0 * PI)).norm() < 1e-11, "{v}");
    }

    #[test]
    fn holomorphic_integrand_vanishes() {
        let point = |t: f64| c((2.0 * PI * t).cos(), (2.0 * PI * t).sin());
        let velocity = |t: f64| c(0.0, 2.0 * PI) * point(t);
        let v = path_integral(&|z: C| z, &point, &velocity, 1e-12).unwrap();
        assert!(v.norm() < 1e-12, "{v}");
    }

    #[test]
    fn parametrization_independence() {
        // Same circle traversed with a non-uniform speed reparametrization.
        let f = |z: C| 1.0 / (z - c(0.2, 0.1));
        let p1 = |t: f64| c((2.0 * PI * t).cos(), (2.0 * PI * t).sin());
        let v1 = |t: f64| c(0.0, 2.0 * PI) * p1(t);
        let warp = |t: f64| t + 0.15 * (2.0 * PI * t).sin() / (2.0 * PI);
        let dwarp = |t: f64| 1.0 + 0.15 * (2.0 * PI * t).cos();
        let p2 = move |t: f64| p1(warp(t));
        let v2 = move |t: f64| v1(warp(t)) * dwarp(t);
        let a = path_integral(&f, &p1, &v1, 1e-12).unwrap();
        let b = path_integral(&f, &p2, &v2, 1e-12).unwrap();
        assert!((a - b).norm() < 1e-11);
    }

    #[test]
    fn cumulative_matches_closed_form() {
        // ∫_0^s exp(it) dt = (exp(is) - 1) / i
        let f = |t: f64| c(t.cos(), t.sin());
        let pre = cumulative(&f, 2.0 * PI, 32, 1e-12).unwrap();
        for (k, v) in pre.iter().enumerate() {
            let s = 2.0 * PI * k as f64 / 32.0;
            let exact = (c(0.0, s).exp() - 1.0) / c(0.0, 1.0);
            assert!((v - exact).norm() < 1e-11);
        }
    }
}
