//! Elliptic function kernel for the torus backend.
//!
//! All evaluations go through Jacobi theta series in the nome, which
//! converge geometrically once the argument is reduced to the fundamental
//! cell. Slow lattice sums and the Laurent recursion are kept alongside as
//! independent cross-check oracles.

use crate::numeric::{c, Jet, C, I};
use crate::{Error, Result};
use std::f64::consts::PI;

/// Which function to evaluate through [`EllipticKernel::eval`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EllipticFn {
    P,
    PPrime,
    Zeta,
}

/// Numerical kernel for the lattice Z + tau Z.
///
/// Carries the lattice invariants, the zeta quasi-period constants and the
/// truncation/pole-exclusion controls. Immutable after construction.
#[derive(Clone, Debug)]
pub struct EllipticKernel {
    pub tau: C,
    nome: C,
    pub g2: C,
    pub g3: C,
    /// Additive constants of zeta under z -> z + 1 and z -> z + tau.
    pub quasi_periods: (C, C),
    eta1: C,
    theta1_d1_at_0: C,
    pub pole_exclusion: f64,
    max_terms: usize,
}

/// Theta series values (theta1 and first three derivatives in u).
#[derive(Clone, Copy, Debug)]
struct Theta {
    t: C,
    d1: C,
    d2: C,
    d3: C,
}

// The evaluators upstream hit the same argument many times in a row (the
// level function, gauge and base function all share theta calls per point),
// so a small direct-mapped thread-local cache removes most of the series
// work.
const THETA_CACHE_SLOTS: usize = 32;

#[derive(Clone, Copy)]
struct ThetaCacheEntry {
    key: (u64, u64, u64, u64),
    val: Theta,
}

thread_local! {
    static THETA_CACHE: std::cell::RefCell<[Option<ThetaCacheEntry>; THETA_CACHE_SLOTS]> =
        const { std::cell::RefCell::new([None; THETA_CACHE_SLOTS]) };
}

fn cache_slot(key: (u64, u64, u64, u64)) -> usize {
    let mut h = key.0 ^ key.1.rotate_left(17) ^ key.2.rotate_left(31) ^ key.3.rotate_left(47);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51afd7ed558ccd);
    h ^= h >> 33;
    (h as usize) % THETA_CACHE_SLOTS
}

impl EllipticKernel {
    pub fn new(tau: C) -> Result<Self> {
        Self::with_controls(tau, 1e-3, 64)
    }

    pub fn with_controls(tau: C, pole_exclusion: f64, max_terms: usize) -> Result<Self> {
        if tau.im <= 0.0 {
            return Err(Error::InvalidModulus(tau.im));
        }
        let nome = (I * PI * tau).exp();
        let mut kernel = EllipticKernel {
            tau,
            nome,
            g2: C::ZERO,
            g3: C::ZERO,
            quasi_periods: (C::ZERO, C::ZERO),
            eta1: C::ZERO,
            theta1_d1_at_0: C::ZERO,
            pole_exclusion,
            max_terms,
        };
        // Convergence check at the farthest reduced argument the kernel will
        // ever see; the series only shrinks from there.
        let tail = kernel.theta_tail_estimate(PI * 0.5 * (C::ONE + tau));
        if !(tail < 1e-14) {
            return Err(Error::PrecisionUnachievable(format!(
                "theta tail estimate {tail:.3e} above 1e-14 at the term cap"
            )));
        }
        let at0 = kernel.theta(C::ZERO);
        if at0.d1.norm() < 1e-12 {
            return Err(Error::PrecisionUnachievable(
                "theta1'(0) vanished; modulus too degenerate".into(),
            ));
        }
        kernel.theta1_d1_at_0 = at0.d1;
        // eta1 = zeta(1/2) expressed through theta constants for the
        // half-period pair (1/2, tau/2).
        kernel.eta1 = -(PI * PI / 6.0) * at0.d3 / at0.d1;
        let h1 = 2.0 * kernel.eta1;
        let h2 = h1 * tau - 2.0 * PI * I;
        kernel.quasi_periods = (h1, h2);
        // Invariants from the branch values at the half periods.
        let e1 = kernel.p_jet_unchecked(c(0.5, 0.0)).v;
        let e2 = kernel.p_jet_unchecked(0.5 * (C::ONE + tau)).v;
        let e3 = kernel.p_jet_unchecked(0.5 * tau).v;
        kernel.g2 = -4.0 * (e1 * e2 + e2 * e3 + e3 * e1);
        kernel.g3 = 4.0 * e1 * e2 * e3;
        Ok(kernel)
    }

    /// Magnitude of the final retained theta term at argument u, a bound on
    /// the truncation tail by the geometric decay of the series.
    fn theta_tail_estimate(&self, u: C) -> f64 {
        let n = self.max_terms - 1;
        let m = (2 * n + 1) as f64;
        let qpow = self.nome.powf((n as f64 + 0.5) * (n as f64 + 0.5));
        2.0 * qpow.norm() * m * m * m * (m * u).cos().norm().max((m * u).sin().norm())
    }

    /// Reduce z into the fundamental cell around the origin; returns the
    /// reduced point and the integer lattice coordinates removed.
    pub fn reduce(&self, z: C) -> (C, i64, i64) {
        let y = z.im / self.tau.im;
        let x = z.re - y * self.tau.re;
        let m = x.round() as i64;
        let n = y.round() as i64;
        (z - m as f64 - n as f64 * self.tau, m, n)
    }

    /// Distance from z to the nearest lattice point.
    pub fn lattice_distance(&self, z: C) -> f64 {
        let (r, _, _) = self.reduce(z);
        let mut best = f64::INFINITY;
        for dm in -1..=1 {
            for dn in -1..=1 {
                best = best.min((r - dm as f64 - dn as f64 * self.tau).norm());
            }
        }
        best
    }

    fn theta(&self, u: C) -> Theta {
        let key = (
            u.re.to_bits(),
            u.im.to_bits(),
            self.nome.re.to_bits(),
            self.nome.im.to_bits(),
        );
        let slot = cache_slot(key);
        let cached = THETA_CACHE
            .with(|c| c.borrow()[slot].and_then(|e| if e.key == key { Some(e.val) } else { None }));
        if let Some(v) = cached {
            return v;
        }
        let val = self.theta_uncached(u);
        THETA_CACHE.with(|c| {
            c.borrow_mut()[slot] = Some(ThetaCacheEntry { key, val });
        });
        val
    }

    fn theta_uncached(&self, u: C) -> Theta {
        let mut t = C::ZERO;
        let mut d1 = C::ZERO;
        let mut d2 = C::ZERO;
        let mut d3 = C::ZERO;
        let mut scale = 0.0f64;
        let mut small_run = 0;
        for n in 0..self.max_terms {
            let m = 2 * n + 1;
            let mf = m as f64;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let qpow = self.nome.powf((n as f64 + 0.5) * (n as f64 + 0.5));
            let (s, co) = ((mf * u).sin(), (mf * u).cos());
            let base = 2.0 * sign * qpow;
            t += base * s;
            d1 += base * mf * co;
            d2 -= base * mf * mf * s;
            d3 -= base * mf * mf * mf * co;
            let term = base.norm() * mf * mf * mf * (s.norm() + co.norm() + 1.0);
            scale = scale.max(term);
            if term < 1e-18 * scale.max(1.0) {
                small_run += 1;
                if small_run >= 2 {
                    break;
                }
            } else {
                small_run = 0;
            }
        }
        Theta { t, d1, d2, d3 }
    }

    /// Weierstrass P as a 2-jet (value, P', P''), without pole guard. At a
    /// lattice point the division by theta1 = 0 yields infinities, which is
    /// the honest limit.
    pub fn p_jet_unchecked(&self, z: C) -> Jet {
        let (zr, _, _) = self.reduce(z);
        let th = self.theta(PI * zr);
        let l = th.d1 / th.t; // (log theta1)'
        let lp = th.d2 / th.t - l * l;
        let lpp = th.d3 / th.t - 3.0 * (th.d2 / th.t) * l + 2.0 * l * l * l;
        let p = -2.0 * self.eta1 - PI * PI * lp;
        let dp = -PI * PI * PI * lpp;
        let ddp = 6.0 * p * p - 0.5 * self.g2;
        Jet::new(p, dp, ddp)
    }

    /// Jet (P', P'', P''') without pole guard.
    pub fn p_prime_jet_unchecked(&self, z: C) -> Jet {
        let j = self.p_jet_unchecked(z);
        Jet::new(j.d1, j.d2, 12.0 * j.v * j.d1)
    }

    /// Jet (zeta, -P, -P') without pole guard, quasi-period corrected.
    pub fn zeta_jet_unchecked(&self, z: C) -> Jet {
        let (zr, m, n) = self.reduce(z);
        let th = self.theta(PI * zr);
        let value = 2.0 * self.eta1 * zr
            + PI * th.d1 / th.t
            + m as f64 * self.quasi_periods.0
            + n as f64 * self.quasi_periods.1;
        let p = self.p_jet_unchecked(z);
        Jet::new(value, -p.v, -p.d1)
    }

    fn guard(&self, z: C, what: &str) -> Result<()> {
        let d = self.lattice_distance(z);
        if d < self.pole_exclusion {
            return Err(Error::NearPole(format!(
                "{what}: lattice distance {d:.3e} below exclusion radius {:.3e}",
                self.pole_exclusion
            )));
        }
        Ok(())
    }

    /// Jet (P, P', P'') of the Weierstrass P function.
    pub fn p_jet(&self, z: C) -> Result<Jet> {
        self.guard(z, "weierstrass P")?;
        Ok(self.p_jet_unchecked(z))
    }

    /// Jet (P', P'', P''') of the derivative of P.
    pub fn p_prime_jet(&self, z: C) -> Result<Jet> {
        self.guard(z, "weierstrass P'")?;
        Ok(self.p_prime_jet_unchecked(z))
    }

    /// Jet (zeta, -P, -P') of the Weierstrass zeta function, including the
    /// quasi-period correction for arguments outside the fundamental cell.
    pub fn zeta_jet(&self, z: C) -> Result<Jet> {
        self.guard(z, "weierstrass zeta")?;
        Ok(self.zeta_jet_unchecked(z))
    }

    /// Scalar evaluation entry point.
    pub fn eval(&self, which: EllipticFn, z: C) -> Result<C> {
        Ok(match which {
            EllipticFn::P => self.p_jet(z)?.v,
            EllipticFn::PPrime => self.p_prime_jet(z)?.v,
            EllipticFn::Zeta => self.zeta_jet(z)?.v,
        })
    }

    /// The three half periods, where P' vanishes.
    pub fn half_periods(&self) -> [C; 3] {
        [c(0.5, 0.0), 0.5 * self.tau, 0.5 * (C::ONE + self.tau)]
    }

    /// Self-test at pseudo-random points: differential identity,
    /// periodicity, oddness and the Legendre relation. Returns the worst
    /// relative error observed.
    pub fn self_test(&self, points: usize, seed: u64) -> Result<f64> {
        let mut rng = crate::numeric::SplitMix64::new(seed);
        let mut worst = 0.0f64;
        let mut checked = 0usize;
        while checked < points {
            // Sample in lattice coordinates over the fundamental cell.
            let z = rng.range(-0.5, 0.5) + rng.range(-0.5, 0.5) * self.tau;
            if self.lattice_distance(z) < 3.0 * self.pole_exclusion {
                continue;
            }
            checked += 1;
            let p = self.p_jet(z)?;
            let scale = p.v.norm().max(1.0);
            // (P')^2 = 4 P^3 - g2 P - g3
            let ident = p.d1 * p.d1 - (4.0 * p.v * p.v * p.v - self.g2 * p.v - self.g3);
            worst = worst.max(ident.norm() / scale.powi(3).max(1.0));
            // Periodicity in both lattice directions.
            let p1 = self.p_jet(z + 1.0)?;
            let ptau = self.p_jet(z + self.tau)?;
            worst = worst.max((p1.v - p.v).norm() / scale);
            worst = worst.max((ptau.v - p.v).norm() / scale);
            // Oddness of zeta.
            let zp = self.zeta_jet(z)?;
            let zm = self.zeta_jet(-z)?;
            worst = worst.max((zp.v + zm.v).norm() / zp.v.norm().max(1.0));
            // Quasi-periodicity against the stored constants.
            let z1 = self.zeta_jet(z + 1.0)?;
            worst = worst.max((z1.v - zp.v - self.quasi_periods.0).norm() / zp.v.norm().max(1.0));
            let zt = self.zeta_jet(z + self.tau)?;
            worst = worst.max((zt.v - zp.v - self.quasi_periods.1).norm() / zp.v.norm().max(1.0));
        }
        // Legendre relation for the stored quasi-period constants.
        let legendre = self.quasi_periods.0 * self.tau - self.quasi_periods.1 - 2.0 * PI * I;
        worst = worst.max(legendre.norm() / (2.0 * PI));
        Ok(worst)
    }
}

/// Independent slow oracles used by tests and kernel cross-checks.
pub mod oracle {
    use super::*;

    /// Truncated Eisenstein lattice sums for g2 and g3 over the symmetric
    /// box |m|, |n| <= n_box. Slowly convergent; exact for symmetric
    /// cancellations such as g3 on the square lattice.
    pub fn lattice_sum_g2_g3(tau: C, n_box: i64) -> (C, C) {
        let mut s4 = C::ZERO;
        let mut s6 = C::ZERO;
        for m in -n_box..=n_box {
            for n in -n_box..=n_box {
                if m == 0 && n == 0 {
                    continue;
                }
                let w = m as f64 + n as f64 * tau;
                let w2 = w * w;
                let w4 = w2 * w2;
                s4 += 1.0 / w4;
                s6 += 1.0 / (w4 * w2);
            }
        }
        (60.0 * s4, 140.0 * s6)
    }

    /// g2 and g3 through the normalized Eisenstein q-series, an independent
    /// fast route.
    pub fn eisenstein_g2_g3(tau: C) -> (C, C) {
        let q = (2.0 * PI * I * tau).exp();
        let mut e4 = C::ONE;
        let mut e6 = C::ONE;
        let mut qn = C::ONE;
        for n in 1..200 {
            qn *= q;
            if qn.norm() < 1e-20 {
                break;
            }
            let nf = n as f64;
            let frac = qn / (C::ONE - qn);
            e4 += 240.0 * nf * nf * nf * frac;
            e6 -= 504.0 * nf * nf * nf * nf * nf * frac;
        }
        let pi4 = PI.powi(4);
        let pi6 = PI.powi(6);
        (4.0 * pi4 / 3.0 * e4, 8.0 * pi6 / 27.0 * e6)
    }

    /// Laurent coefficients c_k of P(z) = z^-2 + sum_{k>=1} c_k z^{2k},
    /// from the standard recursion driven by the differential equation.
    fn laurent_coeffs(g2: C, g3: C, terms: usize) -> Vec<C> {
        let mut cs = vec![C::ZERO; terms + 1];
        if terms >= 1 {
            cs[1] = g2 / 20.0;
        }
        if terms >= 2 {
            cs[2] = g3 / 28.0;
        }
        for k in 3..=terms {
            let mut acc = C::ZERO;
            for m in 1..=(k - 2) {
                acc += cs[m] * cs[k - 1 - m];
            }
            cs[k] = 3.0 / ((2 * k + 3) as f64 * (k as f64 - 2.0)) * acc;
        }
        cs
    }

    /// P as a jet from the Laurent recursion, valid near the origin
    /// (|z| noticeably below the lattice scale).
    pub fn laurent_p_jet(g2: C, g3: C, z: C, terms: usize) -> Jet {
        let cs = laurent_coeffs(g2, g3, terms);
        let mut v = 1.0 / (z * z);
        let mut d1 = -2.0 / (z * z * z);
        let mut d2 = 6.0 / (z * z * z * z);
        for (k, &ck) in cs.iter().enumerate().skip(1) {
            let kk = (2 * k) as f64;
            let zp = z.powi(2 * k as i32 - 2);
            v += ck * zp * z * z;
            d1 += ck * kk * zp * z;
            d2 += ck * kk * (kk - 1.0) * zp;
        }
        Jet::new(v, d1, d2)
    }

    /// zeta from the Laurent recursion near the origin.
    pub fn laurent_zeta(g2: C, g3: C, z: C, terms: usize) -> C {
        let cs = laurent_coeffs(g2, g3, terms);
        let mut v = 1.0 / z;
        for (k, &ck) in cs.iter().enumerate().skip(1) {
            v -= ck * z.powi(2 * k as i32 + 1) / (2.0 * k as f64 + 1.0);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SplitMix64;

    fn square_kernel() -> EllipticKernel {
        EllipticKernel::new(c(0.0, 1.0)).unwrap()
    }

    #[test]
    fn g3_vanishes_on_square_lattice() {
        // Oracle: symmetric truncated lattice sum cancels by 4-fold symmetry.
        let (_, g3_box) = oracle::lattice_sum_g2_g3(c(0.0, 1.0), 12);
        assert!(g3_box.norm() < 1e-12, "lattice-sum g3 = {g3_box}");
        let k = square_kernel();
        assert!(k.g3.norm() < 1e-10, "theta-route g3 = {}", k.g3);
    }

    #[test]
    fn invariants_match_eisenstein_series() {
        for tau in [c(0.0, 1.0), c(0.31, 1.4), c(-0.2, 0.8)] {
            let k = EllipticKernel::new(tau).unwrap();
            let (g2e, g3e) = oracle::eisenstein_g2_g3(tau);
            assert!(
                (k.g2 - g2e).norm() < 1e-9 * g2e.norm().max(1.0),
                "tau {tau}: g2 {} vs {}",
                k.g2,
                g2e
            );
            assert!(
                (k.g3 - g3e).norm() < 1e-9 * g2e.norm().max(1.0),
                "tau {tau}: g3 {} vs {}",
                k.g3,
                g3e
            );
        }
    }

    #[test]
    fn theta_route_matches_laurent_oracle_near_origin() {
        let k = square_kernel();
        let mut rng = SplitMix64::new(9);
        for _ in 0..40 {
            let z = rng.in_disk(0.35);
            if z.norm() < 0.05 {
                continue;
            }
            let a = k.p_jet(z).unwrap();
            let b = oracle::laurent_p_jet(k.g2, k.g3, z, 24);
            let scale = b.v.norm().max(1.0);
            assert!(
                (a.v - b.v).norm() / scale < 1e-11,
                "P at {z}: {} vs {}",
                a.v,
                b.v
            );
            assert!((a.d1 - b.d1).norm() / b.d1.norm().max(1.0) < 1e-10);
            let zt = k.zeta_jet(z).unwrap().v;
            let zo = oracle::laurent_zeta(k.g2, k.g3, z, 24);
            assert!(
                (zt - zo).norm() < 1e-11 * zo.norm().max(1.0),
                "zeta {zt} vs {zo}"
            );
        }
    }

    #[test]
    fn self_test_passes_tightly() {
        let k = square_kernel();
        let worst = k.self_test(100, 31).unwrap();
        assert!(worst < 1e-10, "worst relative error {worst:.3e}");
        let k2 = EllipticKernel::new(c(0.25, 1.1)).unwrap();
        assert!(k2.self_test(100, 32).unwrap() < 1e-10);
    }

    #[test]
    fn p_prime_consistent_with_finite_differences() {
        let k = square_kernel();
        let z = c(0.31, 0.22);
        let h = 1e-6;
        let fd = (k.p_jet(z + h).unwrap().v - k.p_jet(z - h).unwrap().v) / (2.0 * h);
        let an = k.p_prime_jet(z).unwrap().v;
        assert!((fd - an).norm() / an.norm() < 1e-8);
    }

    #[test]
    fn near_pole_guard_fires() {
        let k = square_kernel();
        match k.p_jet(c(1e-5, 0.0)) {
            Err(Error::NearPole(_)) => {}
            other => panic!("expected NearPole, got {other:?}"),
        }
    }

    #[test]
    fn eval_entry_point_matches_jets() {
        let k = square_kernel();
        let z = c(0.21, 0.34);
        assert_eq!(k.eval(EllipticFn::P, z).unwrap(), k.p_jet(z).unwrap().v);
        assert_eq!(
            k.eval(EllipticFn::PPrime, z).unwrap(),
            k.p_prime_jet(z).unwrap().v
        );
        // Periodicity and oddness through the public entry point.
        let p1 = k.eval(EllipticFn::P, z + 1.0).unwrap();
        assert!((p1 - k.eval(EllipticFn::P, z).unwrap()).norm() < 1e-11);
        let zp = k.eval(EllipticFn::Zeta, z).unwrap();
        let zm = k.eval(EllipticFn::Zeta, -z).unwrap();
        assert!((zp + zm).norm() < 1e-12);
    }

    #[test]
    fn quasi_period_constants_for_square_lattice() {
        // zeta(1/2) = pi/2 on the square lattice, so H1 = pi and H2 = -i pi.
        let k = square_kernel();
        assert!((k.quasi_periods.0 - c(PI, 0.0)).norm() < 1e-12);
        assert!((k.quasi_periods.1 - c(0.0, -PI)).norm() < 1e-12);
    }
}
