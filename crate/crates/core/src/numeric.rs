//! Shared numeric kernel: complex 2-jets, polynomial and rational-function
//! arithmetic, deterministic sampling, and scalar Newton iteration.

use num_complex::Complex64;

pub type C = Complex64;

pub const I: C = C::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Value together with first and second derivative at a point.
///
/// All meromorphic evaluators in the crate hand back 2-jets so that
/// quotients, compositions and analytic derivative tables never fall back to
/// finite differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: C,
    pub d1: C,
    pub d2: C,
}

impl Jet {
    pub const fn new(v: C, d1: C, d2: C) -> Self {
        Jet { v, d1, d2 }
    }

    pub fn constant(v: C) -> Self {
        Jet::new(v, C::ZERO, C::ZERO)
    }

    /// Jet of the identity coordinate at `z`.
    pub fn var(z: C) -> Self {
        Jet::new(z, C::ONE, C::ZERO)
    }

    pub fn scale(self, s: C) -> Self {
        Jet::new(self.v * s, self.d1 * s, self.d2 * s)
    }

    pub fn add(self, o: Jet) -> Self {
        Jet::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2)
    }

    pub fn sub(self, o: Jet) -> Self {
        Jet::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2)
    }

    pub fn mul(self, o: Jet) -> Self {
        Jet::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        )
    }

    pub fn div(self, o: Jet) -> Self {
        let v = self.v / o.v;
        let d1 = (self.d1 - v * o.d1) / o.v;
        let d2 = (self.d2 - 2.0 * d1 * o.d1 - v * o.d2) / o.v;
        Jet::new(v, d1, d2)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Jet::new(e, e * self.d1, e * (self.d2 + self.d1 * self.d1))
    }

    /// Jet of `outer ∘ inner` where `self` is the jet of `outer` evaluated at
    /// `inner.v`.
    pub fn compose(self, inner: Jet) -> Self {
        Jet::new(
            self.v,
            self.d1 * inner.d1,
            self.d2 * inner.d1 * inner.d1 + self.d1 * inner.d2,
        )
    }
}

/// Polynomial with complex coefficients, `coeffs[k]` multiplying `z^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    pub coeffs: Vec<C>,
}

impl Poly {
    pub fn new(coeffs: Vec<C>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![] }
    }

    pub fn one() -> Self {
        Poly {
            coeffs: vec![C::ONE],
        }
    }

    pub fn constant(v: C) -> Self {
        Poly::new(vec![v])
    }

    /// `z^k`
    pub fn monomial(k: usize, scale: C) -> Self {
        let mut coeffs = vec![C::ZERO; k + 1];
        coeffs[k] = scale;
        Poly::new(coeffs)
    }

    fn trim(&mut self) {
        while let Some(last) = self.coeffs.last() {
            if last.norm() == 0.0 && self.coeffs.len() > 0 {
                self.coeffs.pop();
            } else {
                break;
            }
        }
    }

    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    pub fn eval(&self, z: C) -> C {
        let mut acc = C::ZERO;
        for &a in self.coeffs.iter().rev() {
            acc = acc * z + a;
        }
        acc
    }

    pub fn jet(&self, z: C) -> Jet {
        // Horner for value, first and second derivative simultaneously.
        let mut v = C::ZERO;
        let mut d1 = C::ZERO;
        let mut d2 = C::ZERO;
        for &a in self.coeffs.iter().rev() {
            d2 = d2 * z + 2.0 * d1;
            d1 = d1 * z + v;
            v = v * z + a;
        }
        Jet::new(v, d1, d2)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(k, &a)| a * ((k + 1) as f64))
                .collect(),
        )
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        let mut coeffs = vec![C::ZERO; n];
        for (k, &a) in self.coeffs.iter().enumerate() {
            coeffs[k] += a;
        }
        for (k, &a) in o.coeffs.iter().enumerate() {
            coeffs[k] += a;
        }
        Poly::new(coeffs)
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale(-C::ONE))
    }

    pub fn scale(&self, s: C) -> Poly {
        Poly::new(self.coeffs.iter().map(|&a| a * s).collect())
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        if self.coeffs.is_empty() || o.coeffs.is_empty() {
            return Poly::zero();
        }
        let mut coeffs = vec![C::ZERO; self.coeffs.len() + o.coeffs.len() - 1];
        for (j, &a) in self.coeffs.iter().enumerate() {
            for (k, &b) in o.coeffs.iter().enumerate() {
                coeffs[j + k] += a * b;
            }
        }
        Poly::new(coeffs)
    }

    /// All complex roots by the Durand-Kerner simultaneous iteration with a
    /// Newton polish, suited to the small degrees used here.
    pub fn roots(&self) -> Vec<C> {
        let deg = match self.degree() {
            Some(d) if d >= 1 => d,
            _ => return vec![],
        };
        let lead = self.coeffs[deg];
        let monic: Vec<C> = self.coeffs.iter().map(|&a| a / lead).collect();
        let eval = |z: C| -> C {
            let mut acc = C::ZERO;
            for &a in monic.iter().rev() {
                acc = acc * z + a;
            }
            acc
        };
        // Initial guesses on a circle of radius from the coefficient bound.
        let radius = 1.0 + monic[..deg].iter().map(|a| a.norm()).fold(0.0f64, f64::max);
        let mut zs: Vec<C> = (0..deg)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.27) / deg as f64;
                radius * 0.7 * C::new(th.cos(), th.sin())
            })
            .collect();
        for _ in 0..200 {
            let mut delta = 0.0f64;
            for k in 0..deg {
                let mut denom = C::ONE;
                for j in 0..deg {
                    if j != k {
                        denom *= zs[k] - zs[j];
                    }
                }
                let step = eval(zs[k]) / denom;
                zs[k] -= step;
                delta = delta.max(step.norm());
            }
            if delta < 1e-14 * radius.max(1.0) {
                break;
            }
        }
        // Newton polish against the original polynomial.
        let dp = self.derivative();
        for z in zs.iter_mut() {
            for _ in 0..8 {
                let d = dp.eval(*z);
                if d.norm() < 1e-300 {
                    break;
                }
                let step = self.eval(*z) / d;
                *z -= step;
                if step.norm() < 1e-15 * (z.norm() + 1.0) {
                    break;
                }
            }
        }
        zs
    }
}

/// Ratio of two polynomials with exact analytic derivatives.
#[derive(Clone, Debug)]
pub struct RatFn {
    pub num: Poly,
    pub den: Poly,
}

impl RatFn {
    pub fn new(num: Poly, den: Poly) -> Self {
        RatFn { num, den }
    }

    pub fn from_poly(p: Poly) -> Self {
        RatFn::new(p, Poly::one())
    }

    pub fn constant(v: C) -> Self {
        RatFn::from_poly(Poly::constant(v))
    }

    pub fn eval(&self, z: C) -> C {
        self.num.eval(z) / self.den.eval(z)
    }

    pub fn jet(&self, z: C) -> Jet {
        self.num.jet(z).div(self.den.jet(z))
    }

    pub fn add(&self, o: &RatFn) -> RatFn {
        RatFn::new(
            self.num.mul(&o.den).add(&o.num.mul(&self.den)),
            self.den.mul(&o.den),
        )
    }

    pub fn mul(&self, o: &RatFn) -> RatFn {
        RatFn::new(self.num.mul(&o.num), self.den.mul(&o.den))
    }

    pub fn scale(&self, s: C) -> RatFn {
        RatFn::new(self.num.scale(s), self.den.clone())
    }

    pub fn div(&self, o: &RatFn) -> RatFn {
        RatFn::new(self.num.mul(&o.den), self.den.mul(&o.num))
    }

    pub fn derivative(&self) -> RatFn {
        // (p/q)' = (p'q - pq') / q^2
        let p = &self.num;
        let q = &self.den;
        RatFn::new(p.derivative().mul(q).sub(&p.mul(&q.derivative())), q.mul(q))
    }
}

/// SplitMix64: tiny deterministic generator for sample points and seeds.
///
/// Kept local so that reports are reproducible independent of external RNG
/// crate versions.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform point in the disk of given radius about the origin.
    pub fn in_disk(&mut self, radius: f64) -> C {
        loop {
            let x = self.range(-1.0, 1.0);
            let y = self.range(-1.0, 1.0);
            if x * x + y * y < 1.0 {
                return C::new(radius * x, radius * y);
            }
        }
    }
}

/// Newton iteration for a scalar analytic equation `f(z) = target`.
///
/// `jet` must return at least a valid first derivative. Returns the root and
/// the final residual.
pub fn newton_scalar(
    jet: impl Fn(C) -> Jet,
    start: C,
    target: C,
    tol: f64,
    max_iter: usize,
) -> Option<(C, f64)> {
    let mut z = start;
    for _ in 0..max_iter {
        let j = jet(z);
        let r = j.v - target;
        if !r.is_finite() || !j.d1.is_finite() {
            return None;
        }
        if j.d1.norm() < 1e-300 {
            return None;
        }
        let step = r / j.d1;
        z -= step;
        if step.norm() < tol {
            let res = (jet(z).v - target).norm();
            return Some((z, res));
        }
    }
    let res = (jet(z).v - target).norm();
    if res < tol {
        Some((z, res))
    } else {
        None
    }
}

/// Least-squares slope of log|f| against log r over a dyadic radius sweep,
/// the numerical order of vanishing (positive) or pole order (negative).
pub fn numerical_order(eval: impl Fn(C) -> C, center: C, base_radius: f64) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..6 {
        let r = base_radius * 0.5f64.powi(k);
        // Average log magnitude over a few angles to suppress angular bias.
        let mut acc = 0.0;
        let mut cnt = 0;
        for a in 0..8 {
            let th = 2.0 * std::f64::consts::PI * (a as f64 + 0.35) / 8.0;
            let v = eval(center + r * C::new(th.cos(), th.sin()));
            if v.is_finite() && v.norm() > 0.0 {
                acc += v.norm().ln();
                cnt += 1;
            }
        }
        if cnt > 0 {
            xs.push(r.ln());
            ys.push(acc / cnt as f64);
        }
    }
    if xs.len() < 2 {
        return f64::NAN;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jet_arithmetic_matches_finite_differences() {
        // f(z) = exp(z^2 + 1) / (z - 3) at a sample point.
        let f = |z: C| {
            let q = Jet::var(z).mul(Jet::var(z)).add(Jet::constant(C::ONE));
            q.exp().div(Jet::var(z).sub(Jet::constant(c(3.0, 0.0))))
        };
        let z0 = c(0.4, 0.7);
        let h = 1e-5;
        let j = f(z0);
        let fd1 = (f(z0 + c(h, 0.0)).v - f(z0 - c(h, 0.0)).v) / (2.0 * h);
        let fd2 = (f(z0 + c(h, 0.0)).v - 2.0 * j.v + f(z0 - c(h, 0.0)).v) / (h * h);
        assert_relative_eq!(j.d1.re, fd1.re, max_relative = 1e-8);
        assert_relative_eq!(j.d1.im, fd1.im, max_relative = 1e-8);
        assert_relative_eq!(j.d2.re, fd2.re, max_relative = 1e-5);
        assert_relative_eq!(j.d2.im, fd2.im, max_relative = 1e-5);
    }

    #[test]
    fn jet_compose_chain_rule() {
        // outer(w) = w^3, inner(z) = 2z + z^2; compare against direct expansion.
        let z0 = c(0.3, -0.2);
        let inner = Jet::var(z0)
            .scale(c(2.0, 0.0))
            .add(Jet::var(z0).mul(Jet::var(z0)));
        let w = inner.v;
        let outer = Jet::new(w * w * w, 3.0 * w * w, 6.0 * w);
        let composed = outer.compose(inner);
        let direct = inner.mul(inner).mul(inner);
        assert!((composed.v - direct.v).norm() < 1e-13);
        assert!((composed.d1 - direct.d1).norm() < 1e-12);
        assert!((composed.d2 - direct.d2).norm() < 1e-12);
    }

    #[test]
    fn poly_roots_recovered() {
        // (z - 1)(z - 2i)(z + 3)(z - 0.5 - 0.5i)
        let p = Poly::new(vec![C::ONE])
            .mul(&Poly::new(vec![-C::ONE, C::ONE]))
            .mul(&Poly::new(vec![c(0.0, -2.0), C::ONE]))
            .mul(&Poly::new(vec![c(3.0, 0.0), C::ONE]))
            .mul(&Poly::new(vec![c(-0.5, -0.5), C::ONE]));
        let mut roots = p.roots();
        roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        let mut expected = vec![c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0), c(0.5, 0.5)];
        expected.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        for (r, e) in roots.iter().zip(expected.iter()) {
            assert!((r - e).norm() < 1e-10, "root {r} vs {e}");
        }
    }

    #[test]
    fn ratfn_derivative_consistent() {
        let r = RatFn::new(
            Poly::new(vec![C::ONE, c(0.0, 1.0), c(2.0, 0.0)]),
            Poly::new(vec![c(1.0, 0.5), C::ONE]),
        );
        let z0 = c(0.2, 0.9);
        let dr = r.derivative();
        assert!((r.jet(z0).d1 - dr.eval(z0)).norm() < 1e-12);
        assert!((r.jet(z0).d2 - dr.jet(z0).d1).norm() < 1e-11);
    }

    #[test]
    fn numerical_order_detects_pole_and_zero() {
        let pole = numerical_order(|z| 1.0 / (z * z * z), C::ZERO, 0.1);
        assert!((pole + 3.0).abs() < 0.05, "slope {pole}");
        let zero = numerical_order(|z| z * z, C::ZERO, 0.1);
        assert!((zero - 2.0).abs() < 0.05, "slope {zero}");
    }

    #[test]
    fn splitmix_deterministic() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
