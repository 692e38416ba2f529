//! Meromorphic data over a backend: the base function f with its branch
//! structure, the cohomology basis of the punctured surface, the auxiliary
//! high-order-pole function v, and the parametric level/gauge functions
//! assembled from them.

use crate::numeric::{Jet, Poly, RatFn, C};
use crate::surface::{EndData, SurfaceKind, SurfaceModel, SurfacePoint};
use crate::{Error, Result};
use std::sync::Arc;

pub type JetFn = Arc<dyn Fn(C) -> Jet + Send + Sync>;

/// An evaluable meromorphic function carrying divisor metadata. The jet is
/// total: at a pole the IEEE infinities come out, callers keep their
/// contours and samples away from the divisor.
#[derive(Clone)]
pub struct MeroFunction {
    jet: JetFn,
    pub divisor: Vec<(SurfacePoint, i32)>,
}

impl MeroFunction {
    pub fn new(jet: JetFn, divisor: Vec<(SurfacePoint, i32)>) -> Self {
        MeroFunction { jet, divisor }
    }

    pub fn from_ratfn(r: RatFn, divisor: Vec<(SurfacePoint, i32)>) -> Self {
        MeroFunction {
            jet: Arc::new(move |z| r.jet(z)),
            divisor,
        }
    }

    pub fn jet(&self, z: C) -> Jet {
        (self.jet)(z)
    }

    pub fn eval(&self, z: C) -> C {
        self.jet(z).v
    }

    pub fn jet_fn(&self) -> JetFn {
        self.jet.clone()
    }

    /// Poles (negative divisor entries).
    pub fn poles(&self) -> Vec<(SurfacePoint, i32)> {
        self.divisor
            .iter()
            .filter(|&&(_, k)| k < 0)
            .cloned()
            .collect()
    }
}

/// An evaluable meromorphic 1-form: main-chart coefficient a(z) of a dz,
/// with divisor and residue tables.
#[derive(Clone)]
pub struct MeroOneForm {
    coeff: JetFn,
    pub divisor: Vec<(SurfacePoint, i32)>,
    pub residues: Vec<(SurfacePoint, C)>,
}

impl MeroOneForm {
    pub fn new(
        coeff: JetFn,
        divisor: Vec<(SurfacePoint, i32)>,
        residues: Vec<(SurfacePoint, C)>,
    ) -> Self {
        MeroOneForm {
            coeff,
            divisor,
            residues,
        }
    }

    pub fn coeff_jet(&self, z: C) -> Jet {
        (self.coeff)(z)
    }

    pub fn coeff(&self, z: C) -> C {
        self.coeff_jet(z).v
    }

    pub fn coeff_fn(&self) -> JetFn {
        self.coeff.clone()
    }

    /// Numerical residue at a finite point: (1/2 pi i) ∮ over a small circle.
    pub fn residue_numeric(&self, center: C, radius: f64, tol: f64) -> Result<C> {
        let coeff = self.coeff.clone();
        let point = move |t: f64| {
            let th = 2.0 * std::f64::consts::PI * t;
            center + radius * C::new(th.cos(), th.sin())
        };
        let velocity = move |t: f64| {
            let th = 2.0 * std::f64::consts::PI * t;
            C::new(0.0, 2.0 * std::f64::consts::PI) * radius * C::new(th.cos(), th.sin())
        };
        let v = crate::quad::path_integral(&|z| coeff(z).v, &point, &velocity, tol)?;
        Ok(v / (2.0 * std::f64::consts::PI * crate::numeric::I))
    }
}

/// Construction recipe for the base function, kept so that end
/// multiplication can extend it.
#[derive(Clone, Debug)]
pub enum BaseRecipe {
    /// f = z^m0 on the sphere, then squared shifts (f - c)^2.
    SpherePower { m0: u32, poly: Poly },
    /// f = P on the torus, then squared shifts.
    TorusP { shifts: Vec<C> },
}

/// The base function f together with df and the detected end data.
#[derive(Clone)]
pub struct BaseFunction {
    pub recipe: BaseRecipe,
    pub f: MeroFunction,
    pub df: MeroOneForm,
    pub ends: EndData,
}

/// Request for [`build_f`].
#[derive(Clone, Copy, Debug)]
pub enum BaseSpec {
    /// Sphere backend, f = z^m0 with pole of order m0 at infinity.
    SpherePower { m0: u32 },
    /// Torus backend, f = the Weierstrass P function.
    TorusP,
}

fn sphere_base_from_poly(surface: &SurfaceModel, poly: Poly, m0: u32) -> Result<BaseFunction> {
    let fp = poly.derivative();
    // Branch points are the zeros of f' with their multiplicities.
    let mut branches: Vec<(C, u32)> = Vec::new();
    for root in fp.roots() {
        let mut found = false;
        for b in branches.iter_mut() {
            if (b.0 - root).norm() < 1e-8 {
                b.1 += 1;
                found = true;
                break;
            }
        }
        if !found {
            branches.push((root, 1));
        }
    }
    branches.sort_by(|a, b| (a.0.im, a.0.re).partial_cmp(&(b.0.im, b.0.re)).unwrap());
    // Degree bookkeeping: sum m_l - (m0 + 1) must equal 2 kappa - 2 = -2.
    let zero_sum: i64 = branches.iter().map(|&(_, m)| m as i64).sum();
    debug_assert_eq!(zero_sum - (m0 as i64 + 1), -2);
    let ends = EndData::new(surface, SurfacePoint::Infinity, m0, branches)?;
    let mut divisor = vec![(SurfacePoint::Infinity, -(m0 as i32 + 1))];
    for &(q, m) in &ends.branches {
        divisor.push((SurfacePoint::Finite(q), m as i32));
    }
    let f_rat = RatFn::from_poly(poly.clone());
    let df_rat = RatFn::from_poly(fp);
    let f = MeroFunction::from_ratfn(f_rat, vec![(SurfacePoint::Infinity, -(m0 as i32))]);
    let df = MeroOneForm::new(Arc::new(move |z| df_rat.jet(z)), divisor, vec![]);
    Ok(BaseFunction {
        recipe: BaseRecipe::SpherePower { m0, poly },
        f,
        df,
        ends,
    })
}

/// Jets of the iterated torus base function and of its derivative.
fn torus_f_pair(kernel: &crate::elliptic::EllipticKernel, shifts: &[C], z: C) -> (Jet, Jet) {
    let mut f = kernel.p_jet_unchecked(z);
    let mut fp = kernel.p_prime_jet_unchecked(z);
    for &shift in shifts {
        let fm = f.sub(Jet::constant(shift));
        let f_new = fm.mul(fm);
        let fp_new = fm.mul(fp).scale(C::new(2.0, 0.0));
        f = f_new;
        fp = fp_new;
    }
    (f, fp)
}

fn torus_base_from_shifts(surface: &SurfaceModel, shifts: Vec<C>) -> Result<BaseFunction> {
    let kernel = surface
        .kernel
        .clone()
        .ok_or_else(|| Error::Validation("torus base function needs a torus backend".into()))?;
    let m0 = 2u32 << shifts.len(); // P has order 2; each shift squares.
                                   // Branch points: zeros of f' over the fundamental cell.
    let k2 = kernel.clone();
    let s2 = shifts.clone();
    let df_jet = move |z: C| {
        let (_, fp) = torus_f_pair(&k2, &s2, z);
        fp
    };
    let roots = torus_roots(surface, &df_jet, &[C::ZERO], 24)?;
    let mut branches: Vec<(C, u32)> = Vec::new();
    for r in roots {
        // Multiplicity from the derivative of df's coefficient.
        let j = df_jet(r);
        let simple = j.d1.norm() > 1e-6 * (1.0 + j.d2.norm());
        let mult = if simple {
            1
        } else {
            let order = crate::numeric::numerical_order(|z| df_jet(z).v, r, 0.02);
            order.round().max(1.0) as u32
        };
        branches.push((r, mult));
    }
    branches.sort_by(|a, b| (a.0.im, a.0.re).partial_cmp(&(b.0.im, b.0.re)).unwrap());
    let zero_sum: i64 = branches.iter().map(|&(_, m)| m as i64).sum();
    if zero_sum != m0 as i64 + 1 {
        return Err(Error::RootFindingFailure(format!(
            "df zero count {zero_sum} does not match canonical degree m0 + 1 = {}",
            m0 + 1
        )));
    }
    let ends = EndData::new(surface, SurfacePoint::Finite(C::ZERO), m0, branches)?;
    let mut divisor = vec![(SurfacePoint::Finite(C::ZERO), -(m0 as i32 + 1))];
    for &(q, m) in &ends.branches {
        divisor.push((SurfacePoint::Finite(q), m as i32));
    }
    let kf = kernel.clone();
    let sf = shifts.clone();
    let f = MeroFunction::new(
        Arc::new(move |z| torus_f_pair(&kf, &sf, z).0),
        vec![(SurfacePoint::Finite(C::ZERO), -(m0 as i32))],
    );
    let kd = kernel.clone();
    let sd = shifts.clone();
    let df = MeroOneForm::new(
        Arc::new(move |z| torus_f_pair(&kd, &sd, z).1),
        divisor,
        vec![],
    );
    Ok(BaseFunction {
        recipe: BaseRecipe::TorusP { shifts },
        f,
        df,
        ends,
    })
}

/// Grid-seeded Newton root search over the fundamental cell, deduplicated
/// modulo the lattice.
pub fn torus_roots(
    surface: &SurfaceModel,
    jet_fn: &dyn Fn(C) -> Jet,
    exclude_poles: &[C],
    grid: usize,
) -> Result<Vec<C>> {
    let kernel = surface.kernel.as_ref().expect("torus kernel");
    let tau = kernel.tau;
    let mut roots: Vec<C> = Vec::new();
    for i in 0..grid {
        for j in 0..grid {
            let seed = (i as f64 + 0.5) / grid as f64 + tau * ((j as f64 + 0.5) / grid as f64);
            if exclude_poles
                .iter()
                .any(|&p| surface.distance(seed, p) < 0.08)
            {
                continue;
            }
            if let Some((root, res)) =
                crate::numeric::newton_scalar(|z| jet_fn(z), seed, C::ZERO, 1e-13, 60)
            {
                if res > 1e-9 {
                    continue;
                }
                if exclude_poles
                    .iter()
                    .any(|&p| surface.distance(root, p) < 0.02)
                {
                    continue;
                }
                // Reduce into [0,1)^2 lattice coordinates.
                let (mut red, _, _) = kernel.reduce(root);
                let y = red.im / tau.im;
                let x = red.re - y * tau.re;
                if x < -1e-9 {
                    red += C::ONE;
                }
                if y < -1e-9 {
                    red += tau;
                }
                if !roots.iter().any(|&r| surface.distance(r, red) < 1e-8) {
                    roots.push(red);
                }
            }
        }
    }
    roots.sort_by(|a, b| (a.im, a.re).partial_cmp(&(b.im, b.re)).unwrap());
    Ok(roots)
}

/// Build the base function per backend.
pub fn build_f(surface: &SurfaceModel, spec: BaseSpec) -> Result<BaseFunction> {
    match (surface.kind, spec) {
        (SurfaceKind::Sphere, BaseSpec::SpherePower { m0 }) => {
            if m0 < 1 {
                return Err(Error::Validation("sphere power must be at least 1".into()));
            }
            sphere_base_from_poly(surface, Poly::monomial(m0 as usize, C::ONE), m0)
        }
        (SurfaceKind::Torus, BaseSpec::TorusP) => torus_base_from_shifts(surface, vec![]),
        _ => Err(Error::Validation(
            "base function spec does not match the backend".into(),
        )),
    }
}

/// Replace f by (f - c)^2, strictly increasing the number of branch points
/// for non-critical c.
pub fn multiply_ends(
    surface: &SurfaceModel,
    base: &BaseFunction,
    shift: C,
) -> Result<BaseFunction> {
    // The shift must avoid every existing critical value.
    for &(q, _) in &base.ends.branches {
        let fv = base.f.eval(q);
        if (fv - shift).norm() < 1e-7 * (1.0 + fv.norm() + shift.norm()) {
            return Err(Error::DegenerateShift(format!(
                "shift {shift} coincides with the critical value {fv} at branch point {q}"
            )));
        }
    }
    let out = match &base.recipe {
        BaseRecipe::SpherePower { m0, poly } => {
            let shifted = poly.sub(&Poly::constant(shift));
            sphere_base_from_poly(surface, shifted.mul(&shifted), 2 * m0)?
        }
        BaseRecipe::TorusP { shifts } => {
            let mut shifts = shifts.clone();
            shifts.push(shift);
            torus_base_from_shifts(surface, shifts)?
        }
    };
    if out.ends.e() <= base.ends.e() {
        return Err(Error::DegenerateShift(format!(
            "end count did not grow ({} -> {})",
            base.ends.e(),
            out.ends.e()
        )));
    }
    Ok(out)
}

/// Classification tags for the basis forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormTag {
    /// Holomorphic on all of M (torus dz), indices 1..kappa.
    Holomorphic(usize),
    /// Pole only at Q0 of order m_j + 1, indices kappa+1..2 kappa.
    XiType(usize),
    /// Simple poles at Q0 and Q_l, indices 2 kappa+1..2 kappa+e.
    EtaType(usize),
}

/// Ordered basis of the first holomorphic de Rham cohomology of the
/// punctured surface, with the quotient functions zeta_j / df that the
/// level and gauge assemblies consume.
#[derive(Clone)]
pub struct CohomologyBasis {
    pub forms: Vec<MeroOneForm>,
    pub quotients: Vec<MeroFunction>,
    pub tags: Vec<FormTag>,
}

impl CohomologyBasis {
    pub fn n(&self) -> usize {
        self.forms.len()
    }
}

/// Construct the backend's cohomology basis.
pub fn cohomology_basis(surface: &SurfaceModel, base: &BaseFunction) -> Result<CohomologyBasis> {
    let ends = &base.ends;
    let mut forms = Vec::new();
    let mut quotients = Vec::new();
    let mut tags = Vec::new();
    match surface.kind {
        SurfaceKind::Sphere => {
            let poly = match &base.recipe {
                BaseRecipe::SpherePower { poly, .. } => poly.clone(),
                _ => unreachable!("sphere basis with non-sphere recipe"),
            };
            let fp = poly.derivative();
            for (l, &(q, _)) in ends.branches.iter().enumerate() {
                let coeff = RatFn::new(Poly::one(), Poly::new(vec![-q, C::ONE]));
                forms.push(MeroOneForm::new(
                    {
                        let coeff = coeff.clone();
                        Arc::new(move |z| coeff.jet(z))
                    },
                    vec![(SurfacePoint::Finite(q), -1), (SurfacePoint::Infinity, -1)],
                    vec![
                        (SurfacePoint::Finite(q), C::ONE),
                        (SurfacePoint::Infinity, -C::ONE),
                    ],
                ));
                let quot = coeff.div(&RatFn::from_poly(fp.clone()));
                quotients.push(MeroFunction::from_ratfn(quot, vec![]));
                tags.push(FormTag::EtaType(l + 1));
            }
        }
        SurfaceKind::Torus => {
            let kernel = surface.kernel.clone().expect("torus kernel");
            let m1 = ends.branches.first().map(|&(_, m)| m).unwrap_or(1);
            let df_fn = base.df.coeff_fn();
            // zeta_1 = dz.
            forms.push(MeroOneForm::new(
                Arc::new(|_| Jet::constant(C::ONE)),
                vec![],
                vec![],
            ));
            let dfq = df_fn.clone();
            quotients.push(MeroFunction::new(
                Arc::new(move |z| Jet::constant(C::ONE).div(dfq(z))),
                vec![],
            ));
            tags.push(FormTag::Holomorphic(1));
            // xi_1 = P dz, pole of order m_1 + 1 = 2 at Q0.
            debug_assert_eq!(m1, 1);
            let kx = kernel.clone();
            forms.push(MeroOneForm::new(
                Arc::new(move |z| kx.p_jet_unchecked(z)),
                vec![(SurfacePoint::Finite(C::ZERO), -2)],
                vec![],
            ));
            let kxq = kernel.clone();
            let dfq = df_fn.clone();
            quotients.push(MeroFunction::new(
                Arc::new(move |z| kxq.p_jet_unchecked(z).div(dfq(z))),
                vec![],
            ));
            tags.push(FormTag::XiType(2));
            // eta_l = (zeta_W(z - Q_l) - zeta_W(z)) dz.
            for (l, &(q, _)) in ends.branches.iter().enumerate() {
                let ke = kernel.clone();
                let coeff: JetFn = Arc::new(move |z: C| {
                    ke.zeta_jet_unchecked(z - q).sub(ke.zeta_jet_unchecked(z))
                });
                forms.push(MeroOneForm::new(
                    coeff.clone(),
                    vec![
                        (SurfacePoint::Finite(q), -1),
                        (SurfacePoint::Finite(C::ZERO), -1),
                    ],
                    vec![
                        (SurfacePoint::Finite(q), C::ONE),
                        (SurfacePoint::Finite(C::ZERO), -C::ONE),
                    ],
                ));
                let dfq = df_fn.clone();
                quotients.push(MeroFunction::new(
                    Arc::new(move |z| coeff(z).div(dfq(z))),
                    vec![],
                ));
                tags.push(FormTag::EtaType(l + 1));
            }
        }
    }
    let n = ends.n(surface.genus);
    if forms.len() != n {
        return Err(Error::Validation(format!(
            "basis length {} does not match n = {}",
            forms.len(),
            n
        )));
    }
    Ok(CohomologyBasis {
        forms,
        quotients,
        tags,
    })
}

/// Elementary torus building block with a pole of exact order k at the
/// origin: P^a (P')^b with 2a + 3b = k.
fn torus_pole_block(kernel: &crate::elliptic::EllipticKernel, k: u32, z: C) -> Jet {
    let b = k % 2;
    let a = (k - 3 * b) / 2;
    let mut acc = Jet::constant(C::ONE);
    let pj = kernel.p_jet_unchecked(z);
    for _ in 0..a {
        acc = acc.mul(pj);
    }
    if b == 1 {
        acc = acc.mul(kernel.p_prime_jet_unchecked(z));
    }
    acc
}

/// The auxiliary function v: holomorphic away from the ends, pole order at
/// least m_l + 2 at each branch point and strictly above m0 at Q0.
pub fn build_v(surface: &SurfaceModel, ends: &EndData) -> Result<MeroFunction> {
    let two_kappa = 2 * surface.genus;
    match surface.kind {
        SurfaceKind::Sphere => {
            let m0 = ends.base_order;
            let mut acc = RatFn::from_poly(Poly::monomial(m0 as usize + 1, C::ONE));
            let mut divisor = vec![(SurfacePoint::Infinity, -(m0 as i32 + 1))];
            for &(q, m) in &ends.branches {
                let k = (m + 2).max(two_kappa) as usize;
                // (z - q)^{-k}
                let mut den = Poly::one();
                let lin = Poly::new(vec![-q, C::ONE]);
                for _ in 0..k {
                    den = den.mul(&lin);
                }
                acc = acc.add(&RatFn::new(Poly::one(), den));
                divisor.push((SurfacePoint::Finite(q), -(k as i32)));
            }
            Ok(MeroFunction::from_ratfn(acc, divisor))
        }
        SurfaceKind::Torus => {
            let kernel = surface.kernel.clone().expect("torus kernel");
            let k0 = (ends.base_order + 1).max(two_kappa);
            let block_orders: Vec<(C, u32)> = std::iter::once((C::ZERO, k0))
                .chain(
                    ends.branches
                        .iter()
                        .map(|&(q, m)| (q, (m + 2).max(two_kappa))),
                )
                .collect();
            let divisor = block_orders
                .iter()
                .map(|&(q, k)| (SurfacePoint::Finite(q), -(k as i32)))
                .collect();
            let blocks = block_orders;
            Ok(MeroFunction::new(
                Arc::new(move |z| {
                    let mut acc = Jet::constant(C::ZERO);
                    for &(q, k) in &blocks {
                        acc = acc.add(torus_pole_block(&kernel, k, z - q));
                    }
                    acc
                }),
                divisor,
            ))
        }
    }
}

/// The level function G = lambda_0 v + (1/df) sum lambda_j zeta_j whose
/// unit level set bounds the working domain.
#[derive(Clone)]
pub struct LevelFunction {
    pub fun: MeroFunction,
    pub lambda: Vec<C>,
    /// Set when Lambda = 0: G is identically zero (base point of the
    /// deformation family).
    pub degenerate: bool,
}

impl LevelFunction {
    pub fn jet(&self, z: C) -> Jet {
        self.fun.jet(z)
    }

    pub fn eval(&self, z: C) -> C {
        self.fun.eval(z)
    }
}

pub fn level_function(
    lambda: &[C],
    v: &MeroFunction,
    basis: &CohomologyBasis,
) -> Result<LevelFunction> {
    if lambda.len() != basis.n() + 1 {
        return Err(Error::Validation(format!(
            "lambda length {} does not match n + 1 = {}",
            lambda.len(),
            basis.n() + 1
        )));
    }
    let degenerate = lambda.iter().all(|l| l.norm() == 0.0);
    let lam = lambda.to_vec();
    let lam_closure = lam.clone();
    let vjet = v.jet_fn();
    let quots: Vec<JetFn> = basis.quotients.iter().map(|q| q.jet_fn()).collect();
    let divisor = if degenerate || lambda[0].norm() == 0.0 {
        vec![]
    } else {
        v.divisor.clone()
    };
    let fun = MeroFunction::new(
        Arc::new(move |z| {
            let mut acc = vjet(z).scale(lam_closure[0]);
            for (j, q) in quots.iter().enumerate() {
                acc = acc.add(q(z).scale(lam_closure[j + 1]));
            }
            acc
        }),
        divisor,
    );
    Ok(LevelFunction {
        fun,
        lambda: lam,
        degenerate,
    })
}

/// The gauge data F = (1/df) sum delta_j zeta_j and h = exp F, which
/// rescales the Weierstrass pair without moving the domain.
#[derive(Clone)]
pub struct GaugeFunction {
    pub log: MeroFunction,
    pub delta: Vec<C>,
}

impl GaugeFunction {
    pub fn log_jet(&self, z: C) -> Jet {
        self.log.jet(z)
    }

    /// Jet of h = exp F.
    pub fn h_jet(&self, z: C) -> Jet {
        self.log.jet(z).exp()
    }
}

pub fn gauge_function(delta: &[C], basis: &CohomologyBasis) -> Result<GaugeFunction> {
    if delta.len() != basis.n() {
        return Err(Error::Validation(format!(
            "delta length {} does not match n = {}",
            delta.len(),
            basis.n()
        )));
    }
    let del = delta.to_vec();
    let quots: Vec<JetFn> = basis.quotients.iter().map(|q| q.jet_fn()).collect();
    let log = MeroFunction::new(
        Arc::new(move |z| {
            let mut acc = Jet::constant(C::ZERO);
            for (j, q) in quots.iter().enumerate() {
                acc = acc.add(q(z).scale(del[j]));
            }
            acc
        }),
        vec![],
    );
    Ok(GaugeFunction {
        log,
        delta: delta.to_vec(),
    })
}

/// Zeros-minus-poles count of an analytic jet inside the parallelogram
/// spanned by `sides` at `corner`, by the argument principle.
pub fn argument_principle_count(
    jet_fn: &dyn Fn(C) -> Jet,
    corner: C,
    sides: (C, C),
    tol: f64,
) -> Result<i64> {
    let corners = [
        corner,
        corner + sides.0,
        corner + sides.0 + sides.1,
        corner + sides.1,
        corner,
    ];
    let mut total = C::ZERO;
    for w in corners.windows(2) {
        let (from, to) = (w[0], w[1]);
        let point = move |t: f64| from + t * (to - from);
        let velocity = move |_t: f64| to - from;
        let integrand = |z: C| {
            let j = jet_fn(z);
            j.d1 / j.v
        };
        total += crate::quad::path_integral(&integrand, &point, &velocity, tol)?;
    }
    let count = total / (2.0 * std::f64::consts::PI * crate::numeric::I);
    if count.im.abs() > 1e-6 || (count.re - count.re.round()).abs() > 1e-6 {
        return Err(Error::NumericalInconsistency(format!(
            "argument principle winding {count} is not close to an integer"
        )));
    }
    Ok(count.re.round() as i64)
}
