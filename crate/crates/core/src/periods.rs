//! Contour quadrature over the homology loops: the period matrix, the
//! period maps for the three targets, analytic and finite-difference
//! Jacobians at the base point, and the period-killing solvers.

use crate::deform::{DeformationContext, DeformationParams, Target};
use crate::numeric::{C, I};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Loop integral of a 1-form coefficient along a homology loop.
pub fn loop_integral(
    coeff: &(dyn Fn(C) -> C + Sync),
    lp: &crate::surface::HomologyLoop,
    tol: f64,
) -> Result<C> {
    let point = |t: f64| lp.point(t);
    let velocity = |t: f64| lp.velocity(t);
    crate::quad::path_integral(coeff, &point, &velocity, tol)
}

/// The n x n matrix of basis-form periods over the homology loops, with a
/// conditioning report.
#[derive(Clone, Debug)]
pub struct PeriodMatrix {
    pub p: DMatrix<C>,
    pub singular_values: Vec<f64>,
}

impl PeriodMatrix {
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn condition_ratio(&self) -> f64 {
        let max = self.singular_values.first().copied().unwrap_or(0.0);
        let min = self.singular_values.last().copied().unwrap_or(0.0);
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }
}

/// Assemble the period matrix p_kj = ∮_{gamma_k} zeta_j.
pub fn period_matrix(ctx: &DeformationContext, tol: f64) -> Result<PeriodMatrix> {
    let n = ctx.n();
    if ctx.loops.len() != n {
        return Err(Error::Validation(format!(
            "loop count {} does not match n = {}",
            ctx.loops.len(),
            n
        )));
    }
    let jobs: Vec<(usize, usize)> = (0..n).flat_map(|k| (0..n).map(move |j| (k, j))).collect();
    let entries = crate::exec::map(&jobs, |&(k, j)| {
        let coeff = ctx.basis.forms[j].coeff_fn();
        loop_integral(&|z| coeff(z).v, &ctx.loops[k], tol)
    });
    let mut p = DMatrix::<C>::zeros(n, n);
    for (&(k, j), value) in jobs.iter().zip(entries) {
        p[(k, j)] = value?;
    }
    let svd = p.clone().svd(false, false);
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let pm = PeriodMatrix { p, singular_values };
    if pm.condition_ratio() <= 1e-10 {
        return Err(Error::DegeneratePeriodMatrix(format!(
            "condition ratio {:.3e}",
            pm.condition_ratio()
        )));
    }
    Ok(pm)
}

/// Period map variants, ordered exactly as the target tuples: all loops for
/// the first form, then the second (then the third).
#[derive(Clone, Debug)]
pub enum PeriodVector {
    /// C^{2n}: (∮ psi1, ∮ psi2).
    Per1(Vec<C>),
    /// R^{3n}: (Re ∮ psi1, Re ∮ psi2, Re ∮ psi3).
    Per2(Vec<f64>),
    /// R^{3n}: (Im ∮ psi1, Re ∮ psi2, Re ∮ psi3).
    Per3(Vec<f64>),
}

impl PeriodVector {
    pub fn norm(&self) -> f64 {
        match self {
            PeriodVector::Per1(v) => v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt(),
            PeriodVector::Per2(v) | PeriodVector::Per3(v) => {
                v.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
        }
    }
}

/// Raw complex loop periods of the three deformed forms, loop-major.
pub fn raw_periods(
    ctx: &DeformationContext,
    params: &DeformationParams,
    tol: f64,
) -> Result<Vec<[C; 3]>> {
    let data = ctx.deformed(params)?;
    // Containment: the loops must stay inside the unit level set.
    if !data.level.degenerate {
        for lp in &ctx.loops {
            let max_level = (0..48)
                .map(|k| data.level.eval(lp.point(k as f64 / 48.0)).norm())
                .fold(0.0, f64::max);
            if max_level >= 1.0 {
                return Err(Error::DomainShrunk(format!(
                    "loop {:?} reaches level {max_level:.3}",
                    lp.tag
                )));
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..ctx.loops.len())
        .flat_map(|k| (0..3).map(move |f| (k, f)))
        .collect();
    let values = crate::exec::map(&jobs, |&(k, f)| {
        loop_integral(&|z| data.psi(z)[f], &ctx.loops[k], tol)
    });
    let mut out = vec![[C::ZERO; 3]; ctx.loops.len()];
    for (&(k, f), v) in jobs.iter().zip(values) {
        out[k][f] = v?;
    }
    Ok(out)
}

fn select_period(target: Target, raw: &[[C; 3]]) -> PeriodVector {
    let n = raw.len();
    match target {
        Target::C2 => {
            let mut v = Vec::with_capacity(2 * n);
            for f in 0..2 {
                for row in raw {
                    v.push(row[f]);
                }
            }
            PeriodVector::Per1(v)
        }
        Target::R3 => {
            let mut v = Vec::with_capacity(3 * n);
            for f in 0..3 {
                for row in raw {
                    v.push(row[f].re);
                }
            }
            PeriodVector::Per2(v)
        }
        Target::L3 => {
            let mut v = Vec::with_capacity(3 * n);
            for row in raw {
                v.push(row[0].im);
            }
            for f in 1..3 {
                for row in raw {
                    v.push(row[f].re);
                }
            }
            PeriodVector::Per3(v)
        }
    }
}

/// The period map for a target at given parameters.
pub fn period_map(
    target: Target,
    ctx: &DeformationContext,
    params: &DeformationParams,
    tol: f64,
) -> Result<PeriodVector> {
    Ok(select_period(target, &raw_periods(ctx, params, tol)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianVariant {
    J1,
    J2,
    J3,
}

impl JacobianVariant {
    pub fn for_target(target: Target) -> Self {
        match target {
            Target::C2 => JacobianVariant::J1,
            Target::R3 => JacobianVariant::J2,
            Target::L3 => JacobianVariant::J3,
        }
    }
}

/// Analytic-vs-finite-difference Jacobian comparison at the base point.
#[derive(Clone, Debug)]
pub struct JacobianReport {
    pub variant: JacobianVariant,
    pub rows: usize,
    pub cols: usize,
    pub analytic_complex: Option<DMatrix<C>>,
    pub analytic_real: Option<DMatrix<f64>>,
    pub fd_discrepancy_rel: f64,
    pub singular_values: Vec<f64>,
    /// Numerical rank at the 1e-8 relative singular-value cutoff.
    pub rank: usize,
    /// For J1: smallest/largest singular value.
    pub condition_ratio: f64,
}

fn phi_scalars(ctx: &DeformationContext) -> (C, C, C, C, C) {
    let p1 = ctx.disk.phi[0].jet(C::ZERO);
    let p2 = ctx.disk.phi[1].jet(C::ZERO);
    let p3 = ctx.disk.phi[2].jet(C::ZERO);
    (p1.v, p1.d1, p2.v, p2.d1, p3.d1)
}

fn scaled_block(p: &DMatrix<C>, s: C) -> DMatrix<C> {
    p.map(|x| x * s)
}

/// Analytic J1 = [[phi1'(0) P, i phi2(0) P], [phi2'(0) P, -i phi1(0) P]];
/// the lower-right block vanishes for a normalized disk.
pub fn analytic_j1(ctx: &DeformationContext, p: &PeriodMatrix) -> DMatrix<C> {
    let n = p.n();
    let (phi1, dphi1, phi2, dphi2, _) = phi_scalars(ctx);
    let mut j = DMatrix::<C>::zeros(2 * n, 2 * n);
    j.view_mut((0, 0), (n, n))
        .copy_from(&scaled_block(&p.p, dphi1));
    j.view_mut((0, n), (n, n))
        .copy_from(&scaled_block(&p.p, I * phi2));
    j.view_mut((n, 0), (n, n))
        .copy_from(&scaled_block(&p.p, dphi2));
    j.view_mut((n, n), (n, n))
        .copy_from(&scaled_block(&p.p, -I * phi1));
    j
}

/// Analytic J2 / J3 (3n x 4n real) from the real/imaginary part identities
/// for holomorphic maps applied to the base-point derivative table.
pub fn analytic_j23(
    variant: JacobianVariant,
    ctx: &DeformationContext,
    p: &PeriodMatrix,
) -> DMatrix<f64> {
    let n = p.n();
    let (phi1, dphi1, phi2, dphi2, dphi3) = phi_scalars(ctx);
    // Complex derivative blocks per form: lambda column and delta column.
    let blocks: [(C, C); 3] = [(dphi1, I * phi2), (dphi2, -I * phi1), (dphi3, C::ZERO)];
    let mut j = DMatrix::<f64>::zeros(3 * n, 4 * n);
    for (row_block, &(lam, del)) in blocks.iter().enumerate() {
        // First form row of J3 takes the imaginary part; all other rows
        // (and all of J2) take the real part.
        let takes_im = variant == JacobianVariant::J3 && row_block == 0;
        for k in 0..n {
            for jcol in 0..n {
                let dl = lam * p.p[(k, jcol)];
                let dd = del * p.p[(k, jcol)];
                let (s_l, s_d, t_l, t_d) = if takes_im {
                    // d Im F / ds = Im F', d Im F / dt = Re F'.
                    (dl.im, dd.im, dl.re, dd.re)
                } else {
                    // d Re F / ds = Re F', d Re F / dt = -Im F'.
                    (dl.re, dd.re, -dl.im, -dd.im)
                };
                let r = row_block * n + k;
                j[(r, jcol)] = s_l;
                j[(r, n + jcol)] = s_d;
                j[(r, 2 * n + jcol)] = t_l;
                j[(r, 3 * n + jcol)] = t_d;
            }
        }
    }
    j
}

fn per1_as_vector(v: &PeriodVector) -> DVector<C> {
    match v {
        PeriodVector::Per1(x) => DVector::from_column_slice(x),
        _ => unreachable!("expected Per1"),
    }
}

fn real_as_vector(v: &PeriodVector) -> DVector<f64> {
    match v {
        PeriodVector::Per2(x) | PeriodVector::Per3(x) => DVector::from_column_slice(x),
        PeriodVector::Per1(_) => unreachable!("expected a real period vector"),
    }
}

/// Build the Jacobian report at the base point: analytic blocks against
/// central finite differences of the period map.
pub fn jacobian(
    variant: JacobianVariant,
    ctx: &DeformationContext,
    p: &PeriodMatrix,
    quad_tol: f64,
    fd_step: f64,
) -> Result<JacobianReport> {
    if !ctx.disk.normalized {
        return Err(Error::Validation(
            "jacobian requires a normalized disk".into(),
        ));
    }
    let n = ctx.n();
    match variant {
        JacobianVariant::J1 => {
            let analytic = analytic_j1(ctx, p);
            let mut fd = DMatrix::<C>::zeros(2 * n, 2 * n);
            for col in 0..2 * n {
                let mut xp = vec![C::ZERO; 2 * n];
                xp[col] = C::new(fd_step, 0.0);
                let plus = DeformationParams::from_complex_free(C::ZERO, n, &xp);
                xp[col] = C::new(-fd_step, 0.0);
                let minus = DeformationParams::from_complex_free(C::ZERO, n, &xp);
                let vp = per1_as_vector(&period_map(Target::C2, ctx, &plus, quad_tol)?);
                let vm = per1_as_vector(&period_map(Target::C2, ctx, &minus, quad_tol)?);
                let column = (vp - vm) / C::new(2.0 * fd_step, 0.0);
                fd.set_column(col, &column);
            }
            let scale = analytic.iter().map(|x| x.norm()).fold(0.0, f64::max);
            let disc = (&fd - &analytic)
                .iter()
                .map(|x| x.norm())
                .fold(0.0, f64::max)
                / scale.max(1e-300);
            if disc > 1e-6 {
                return Err(Error::ModelMismatch(format!(
                    "J1 analytic vs finite differences relative discrepancy {disc:.3e}"
                )));
            }
            let svd = analytic.clone().svd(false, false);
            let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let smax = sv.first().copied().unwrap_or(0.0);
            let rank = sv.iter().filter(|&&s| s > 1e-8 * smax).count();
            let cond = sv.last().copied().unwrap_or(0.0) / smax.max(1e-300);
            if rank < 2 * n {
                return Err(Error::NondegeneracyFailed(format!(
                    "J1 rank {rank} below {}",
                    2 * n
                )));
            }
            Ok(JacobianReport {
                variant,
                rows: 2 * n,
                cols: 2 * n,
                analytic_complex: Some(analytic),
                analytic_real: None,
                fd_discrepancy_rel: disc,
                singular_values: sv,
                rank,
                condition_ratio: cond,
            })
        }
        JacobianVariant::J2 | JacobianVariant::J3 => {
            let target = if variant == JacobianVariant::J2 {
                Target::R3
            } else {
                Target::L3
            };
            let analytic = analytic_j23(variant, ctx, p);
            let mut fd = DMatrix::<f64>::zeros(3 * n, 4 * n);
            for col in 0..4 * n {
                let mut xs = vec![0.0; 4 * n];
                xs[col] = fd_step;
                let plus = DeformationParams::from_real_free(C::ZERO, n, &xs);
                xs[col] = -fd_step;
                let minus = DeformationParams::from_real_free(C::ZERO, n, &xs);
                let vp = real_as_vector(&period_map(target, ctx, &plus, quad_tol)?);
                let vm = real_as_vector(&period_map(target, ctx, &minus, quad_tol)?);
                let column = (vp - vm) / (2.0 * fd_step);
                fd.set_column(col, &column);
            }
            let scale = analytic.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let disc = (&fd - &analytic)
                .iter()
                .map(|x| x.abs())
                .fold(0.0, f64::max)
                / scale.max(1e-300);
            if disc > 1e-6 {
                return Err(Error::ModelMismatch(format!(
                    "{variant:?} analytic vs finite differences relative discrepancy {disc:.3e}"
                )));
            }
            let svd = analytic.clone().svd(false, false);
            let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let smax = sv.first().copied().unwrap_or(0.0);
            let rank = sv.iter().filter(|&&s| s > 1e-8 * smax).count();
            let condition_ratio = sv.last().copied().unwrap_or(0.0) / smax.max(1e-300);
            if rank != 3 * n {
                return Err(Error::NondegeneracyFailed(format!(
                    "{variant:?} numerical rank {rank}, expected {}",
                    3 * n
                )));
            }
            Ok(JacobianReport {
                variant,
                rows: 3 * n,
                cols: 4 * n,
                analytic_complex: None,
                analytic_real: Some(analytic),
                fd_discrepancy_rel: disc,
                singular_values: sv,
                rank,
                condition_ratio,
            })
        }
    }
}

/// Newton solve options.
#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub residual_tol: f64,
    pub quad_tol: f64,
    /// Looser quadrature tolerance for the finite-difference Jacobian
    /// columns inside Newton; the residual itself always uses `quad_tol`.
    pub fd_quad_tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            residual_tol: 1e-10,
            quad_tol: 1e-12,
            fd_quad_tol: 1e-9,
            max_iter: 50,
            fd_step: 1e-5,
        }
    }
}

/// Convergence record of one period-killing solve.
#[derive(Clone, Debug)]
pub struct SolveTrace {
    pub lambda0: C,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
}

fn residual_c2(ctx: &DeformationContext, lambda0: C, x: &[C], tol: f64) -> Result<DVector<C>> {
    let params = DeformationParams::from_complex_free(lambda0, ctx.n(), x);
    Ok(per1_as_vector(&period_map(Target::C2, ctx, &params, tol)?))
}

fn residual_real(
    target: Target,
    ctx: &DeformationContext,
    lambda0: C,
    x: &[f64],
    tol: f64,
) -> Result<DVector<f64>> {
    let params = DeformationParams::from_real_free(lambda0, ctx.n(), x);
    Ok(real_as_vector(&period_map(target, ctx, &params, tol)?))
}

/// Kill the target's periods at fixed lambda_0 by Newton iteration: a
/// square complex solve for C^2, minimum-norm (pseudo-inverse) steps for
/// the underdetermined real systems of R^3 and L^3.
pub fn kill_periods(
    target: Target,
    lambda0: C,
    ctx: &DeformationContext,
    warm: Option<&DeformationParams>,
    opts: SolveOptions,
) -> Result<(DeformationParams, SolveTrace)> {
    let n = ctx.n();
    let mut history = Vec::new();
    match target {
        Target::C2 => {
            let mut x: Vec<C> = match warm {
                Some(w) => w.to_complex_free(),
                None => vec![C::ZERO; 2 * n],
            };
            for iter in 0..opts.max_iter {
                let r = residual_c2(ctx, lambda0, &x, opts.quad_tol)?;
                let rn = r.norm();
                history.push(rn);
                if rn < opts.residual_tol {
                    let params = DeformationParams::from_complex_free(lambda0, n, &x);
                    return Ok((
                        params,
                        SolveTrace {
                            lambda0,
                            iterations: iter,
                            residual_history: history,
                            final_residual: rn,
                        },
                    ));
                }
                if iter >= 2
                    && history[iter] > 4.0 * history[iter - 1]
                    && history[iter - 1] > 4.0 * history[iter - 2]
                {
                    return Err(Error::NoConvergenceAtC {
                        c: lambda0.norm(),
                        detail: format!("residual diverging: {history:?}"),
                    });
                }
                // Central-difference Jacobian, step scaled to the iterate.
                let mut jac = DMatrix::<C>::zeros(2 * n, 2 * n);
                for col in 0..2 * n {
                    let h = opts.fd_step * x[col].norm().max(1.0);
                    let mut xp = x.clone();
                    xp[col] += C::new(h, 0.0);
                    let mut xm = x.clone();
                    xm[col] -= C::new(h, 0.0);
                    let vp = residual_c2(ctx, lambda0, &xp, opts.fd_quad_tol)?;
                    let vm = residual_c2(ctx, lambda0, &xm, opts.fd_quad_tol)?;
                    jac.set_column(col, &((vp - vm) / C::new(2.0 * h, 0.0)));
                }
                let lu = jac.lu();
                let step = lu
                    .solve(&r)
                    .ok_or_else(|| Error::SingularIterate(format!("iteration {iter}")))?;
                for (xi, si) in x.iter_mut().zip(step.iter()) {
                    *xi -= si;
                }
            }
            Err(Error::NoConvergenceAtC {
                c: lambda0.norm(),
                detail: format!(
                    "residual {:.3e} after {} iterations",
                    history.last().copied().unwrap_or(f64::NAN),
                    opts.max_iter
                ),
            })
        }
        Target::R3 | Target::L3 => {
            let mut x: Vec<f64> = match warm {
                Some(w) => w.to_real_free(),
                None => vec![0.0; 4 * n],
            };
            for iter in 0..opts.max_iter {
                let r = residual_real(target, ctx, lambda0, &x, opts.quad_tol)?;
                let rn = r.norm();
                history.push(rn);
                if rn < opts.residual_tol {
                    let params = DeformationParams::from_real_free(lambda0, n, &x);
                    return Ok((
                        params,
                        SolveTrace {
                            lambda0,
                            iterations: iter,
                            residual_history: history,
                            final_residual: rn,
                        },
                    ));
                }
                if iter >= 2
                    && history[iter] > 4.0 * history[iter - 1]
                    && history[iter - 1] > 4.0 * history[iter - 2]
                {
                    return Err(Error::NoConvergenceAtC {
                        c: lambda0.norm(),
                        detail: format!("residual diverging: {history:?}"),
                    });
                }
                let mut jac = DMatrix::<f64>::zeros(3 * n, 4 * n);
                for col in 0..4 * n {
                    let h = opts.fd_step * x[col].abs().max(1.0);
                    let mut xp = x.clone();
                    xp[col] += h;
                    let mut xm = x.clone();
                    xm[col] -= h;
                    let vp = residual_real(target, ctx, lambda0, &xp, opts.fd_quad_tol)?;
                    let vm = residual_real(target, ctx, lambda0, &xm, opts.fd_quad_tol)?;
                    jac.set_column(col, &((vp - vm) / (2.0 * h)));
                }
                // Minimum-norm update through the SVD pseudo-inverse.
                let svd = jac.svd(true, true);
                let step = svd
                    .solve(&r, 1e-12)
                    .map_err(|e| Error::SingularIterate(e.to_string()))?;
                for (xi, si) in x.iter_mut().zip(step.iter()) {
                    *xi -= si;
                }
            }
            Err(Error::NoConvergenceAtC {
                c: lambda0.norm(),
                detail: format!(
                    "residual {:.3e} after {} iterations",
                    history.last().copied().unwrap_or(f64::NAN),
                    opts.max_iter
                ),
            })
        }
    }
}

/// One continuation step outcome.
#[derive(Clone, Debug)]
pub struct RampStep {
    pub c: f64,
    pub params: DeformationParams,
    pub trace: SolveTrace,
}

/// Continuation over the c-ramp: solve at the smallest c first and
/// warm-start each larger value by linear parameter scaling. Returns every
/// successful step in ascending order; fails only if no step converges.
pub fn kill_periods_ramp(
    target: Target,
    ramp: &[f64],
    ctx: &DeformationContext,
    opts: SolveOptions,
) -> Result<Vec<RampStep>> {
    let mut cs: Vec<f64> = ramp.to_vec();
    cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut steps: Vec<RampStep> = Vec::new();
    for &cv in &cs {
        let warm = steps.last().map(|s| {
            let scale = cv / s.c;
            let mut p = s.params.clone();
            for l in p.lambda.iter_mut() {
                *l *= scale;
            }
            for d in p.delta.iter_mut() {
                *d *= scale;
            }
            p
        });
        match kill_periods(target, C::new(cv, 0.0), ctx, warm.as_ref(), opts) {
            Ok((params, trace)) => steps.push(RampStep {
                c: cv,
                params,
                trace,
            }),
            Err(_) if !steps.is_empty() => break,
            Err(e) => return Err(e),
        }
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{build_f, BaseSpec};
    use crate::nulldisk::{bundled_disk, normalize_disk, BundledDisk};
    use crate::numeric::c;
    use crate::surface::{make_surface, BackendSpec, LoopOptions};
    use std::f64::consts::PI;

    fn sphere_ctx() -> DeformationContext {
        let surface = make_surface(BackendSpec::Sphere).unwrap();
        let base = build_f(&surface, BaseSpec::SpherePower { m0: 2 }).unwrap();
        let (disk, _) = normalize_disk(&bundled_disk(BundledDisk::GzOmega1), None).unwrap();
        DeformationContext::build(surface, base, disk, LoopOptions::default()).unwrap()
    }

    fn torus_ctx() -> DeformationContext {
        let surface = make_surface(BackendSpec::Torus { tau: c(0.0, 1.0) }).unwrap();
        let base = build_f(&surface, BaseSpec::TorusP).unwrap();
        let (disk, _) = normalize_disk(&bundled_disk(BundledDisk::GzOmega1), None).unwrap();
        DeformationContext::build(surface, base, disk, LoopOptions::default()).unwrap()
    }

    #[test]
    fn sphere_period_matrix_is_2_pi_i() {
        let ctx = sphere_ctx();
        let p = period_matrix(&ctx, 1e-12).unwrap();
        assert_eq!(p.n(), 1);
        assert!(
            (p.p[(0, 0)] - c(0.0, 2.0 * PI)).norm() < 1e-10,
            "{}",
            p.p[(0, 0)]
        );
    }

    #[test]
    fn torus_period_matrix_lattice_and_residue_entries() {
        let ctx = torus_ctx();
        let p = period_matrix(&ctx, 1e-12).unwrap();
        assert_eq!(p.n(), 5);
        let tau = ctx.surface.tau().unwrap();
        // dz over the two handle cycles gives the lattice periods.
        assert!(
            (p.p[(0, 0)] - C::ONE).norm() < 1e-9,
            "a-cycle: {}",
            p.p[(0, 0)]
        );
        assert!(
            (p.p[(1, 0)] - tau).norm() < 1e-9,
            "b-cycle: {}",
            p.p[(1, 0)]
        );
        // End loops against the eta forms: 2 pi i on the diagonal pairing.
        for k in 0..3 {
            for j in 0..3 {
                let expected = if k == j { c(0.0, 2.0 * PI) } else { C::ZERO };
                let got = p.p[(2 + k, 2 + j)];
                assert!(
                    (got - expected).norm() < 1e-9,
                    "end loop {k} vs eta {j}: {got}"
                );
            }
        }
        assert!(p.condition_ratio() > 1e-10);
    }

    #[test]
    fn base_point_period_map_vanishes_on_both_backends() {
        for ctx in [sphere_ctx(), torus_ctx()] {
            let zero = DeformationParams::zeros(ctx.n());
            for target in [Target::C2, Target::R3, Target::L3] {
                let v = period_map(target, &ctx, &zero, 1e-12).unwrap();
                assert!(v.norm() < 1e-10, "{target:?} residual {}", v.norm());
            }
        }
    }

    #[test]
    fn j1_blocks_and_invertibility_on_sphere() {
        let ctx = sphere_ctx();
        let p = period_matrix(&ctx, 1e-12).unwrap();
        let report = jacobian(JacobianVariant::J1, &ctx, &p, 1e-12, 1e-5).unwrap();
        let j = report.analytic_complex.as_ref().unwrap();
        let n = ctx.n();
        // Lower-right block vanishes because phi1(0) = 0.
        for r in 0..n {
            for cidx in 0..n {
                assert!(j[(n + r, n + cidx)].norm() < 1e-10);
            }
        }
        assert_eq!(report.rank, 2 * n);
        assert!(report.fd_discrepancy_rel < 1e-6);
        // Independent oracle: LU determinant of the finite-difference
        // route is far from zero.
        let det = j.clone().lu().determinant();
        assert!(det.norm() > 1e-3, "det {det}");
    }

    #[test]
    fn j2_j3_have_rank_3n_on_sphere() {
        let ctx = sphere_ctx();
        let p = period_matrix(&ctx, 1e-12).unwrap();
        for variant in [JacobianVariant::J2, JacobianVariant::J3] {
            let report = jacobian(variant, &ctx, &p, 1e-12, 1e-5).unwrap();
            assert_eq!(report.rank, 3 * ctx.n(), "{variant:?}");
            assert!(report.fd_discrepancy_rel < 1e-6);
            let smax = report.singular_values[0];
            let s_rank = report.singular_values[3 * ctx.n() - 1];
            assert!(s_rank / smax > 1e-8);
        }
    }

    #[test]
    fn zero_lambda0_gives_zero_solution() {
        let ctx = sphere_ctx();
        let (params, trace) =
            kill_periods(Target::C2, C::ZERO, &ctx, None, SolveOptions::default()).unwrap();
        assert!(params.is_zero());
        assert!(trace.final_residual < 1e-12);
        assert_eq!(trace.iterations, 0);
    }

    #[test]
    fn sphere_c2_kill_and_trapezoid_oracle() {
        let ctx = sphere_ctx();
        let (params, trace) = kill_periods(
            Target::C2,
            c(0.01, 0.0),
            &ctx,
            None,
            SolveOptions::default(),
        )
        .unwrap();
        assert!(trace.final_residual < 1e-10);
        // Independent route: trapezoid rule on the unit circle is
        // spectrally exact for the analytic integrand; re-evaluate the
        // killed periods with it.
        let data = ctx.deformed(&params).unwrap();
        let m = 1024;
        for form in 0..2 {
            let mut acc = C::ZERO;
            for k in 0..m {
                let th = 2.0 * PI * k as f64 / m as f64;
                let z = c(th.cos(), th.sin());
                acc += data.psi(z)[form] * crate::numeric::I * z;
            }
            acc *= 2.0 * PI / m as f64;
            assert!(acc.norm() < 1e-10, "trapezoid period {form}: {acc}");
        }
    }

    #[test]
    fn newton_solution_is_locally_unique() {
        let ctx = sphere_ctx();
        let opts = SolveOptions::default();
        let (params0, _) = kill_periods(Target::C2, c(0.01, 0.0), &ctx, None, opts).unwrap();
        // Restart from two perturbations of the solution.
        let mut rng = crate::numeric::SplitMix64::new(404);
        for _ in 0..2 {
            let mut warm = params0.clone();
            for l in warm.lambda.iter_mut().skip(1) {
                *l += c(rng.range(-1e-4, 1e-4), rng.range(-1e-4, 1e-4));
            }
            for d in warm.delta.iter_mut() {
                *d += c(rng.range(-1e-4, 1e-4), rng.range(-1e-4, 1e-4));
            }
            let (params1, _) =
                kill_periods(Target::C2, c(0.01, 0.0), &ctx, Some(&warm), opts).unwrap();
            let diff: f64 = params0
                .to_complex_free()
                .iter()
                .zip(params1.to_complex_free())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(diff < 1e-8, "solutions differ by {diff}");
        }
    }

    #[test]
    fn ramp_scaling_stays_bounded() {
        let ctx = sphere_ctx();
        let ramp = [0.0025, 0.005, 0.01, 0.02];
        let steps = kill_periods_ramp(Target::C2, &ramp, &ctx, SolveOptions::default()).unwrap();
        assert!(!steps.is_empty());
        // |Lambda(c)| / c stays bounded as c shrinks (analytic factoring
        // through c Lambda*(c)).
        let ratios: Vec<f64> = steps.iter().map(|s| s.params.lambda_norm() / s.c).collect();
        let max = ratios.iter().copied().fold(0.0, f64::max);
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0, "ratios {ratios:?}");
    }

    #[test]
    fn r3_and_l3_minimum_norm_kills_on_sphere() {
        let ctx = sphere_ctx();
        for target in [Target::R3, Target::L3] {
            let (params, trace) =
                kill_periods(target, c(0.01, 0.0), &ctx, None, SolveOptions::default()).unwrap();
            assert!(trace.final_residual < 1e-10, "{target:?}");
            let v = period_map(target, &ctx, &params, 1e-12).unwrap();
            assert!(v.norm() < 1e-10);
        }
    }
}
