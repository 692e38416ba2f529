//! Acceptance suite: every shipped guarantee is exercised here at its
//! stated tolerance, one test per criterion, each printing a PASS line.
//!
//! Expensive artifacts (solved parameter ramps, meshes, certificates) are
//! shared through `OnceLock` fixtures, so a criterion's wall time includes
//! fixture construction only for the first test that touches it; the
//! printed elapsed time is the honest number for that test body.

use nullsurf_core::config::PipelineConfig;
use nullsurf_core::deform::{
    geometry_checks, metric_certificate, realize, DeformationContext, DeformationParams,
    GeometryReport, MetricCertConfig, MetricCertificate, Realization, Target,
};
use nullsurf_core::domain::{
    certify_bounded, choose_r, domain_window, integration_by_parts_bound, mesh_domain,
    trace_boundary, AnnulusChoice, BoundaryReport, BoundednessCertificate, DomainMesh, Window,
};
use nullsurf_core::elliptic::EllipticKernel;
use nullsurf_core::forms::{
    argument_principle_count, build_f, multiply_ends, torus_roots, BaseSpec,
};
use nullsurf_core::nulldisk::{bundled_disk, normalization_defect, normalize_disk, BundledDisk};
use nullsurf_core::numeric::{c, SplitMix64, C};
use nullsurf_core::periods::{
    jacobian, kill_periods_ramp, period_map, period_matrix, JacobianVariant, PeriodMatrix,
    RampStep, SolveOptions,
};
use nullsurf_core::pipeline::run_pipeline;
use nullsurf_core::surface::{make_surface, BackendSpec, LoopOptions, SurfaceKind};
use std::sync::OnceLock;
use std::time::Instant;

const QUAD_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

struct BackendFix {
    ctx: DeformationContext,
    p: PeriodMatrix,
}

fn build_backend(kind: SurfaceKind) -> BackendFix {
    let (surface, spec) = match kind {
        SurfaceKind::Sphere => (
            make_surface(BackendSpec::Sphere).unwrap(),
            BaseSpec::SpherePower { m0: 2 },
        ),
        SurfaceKind::Torus => (
            make_surface(BackendSpec::Torus { tau: c(0.0, 1.0) }).unwrap(),
            BaseSpec::TorusP,
        ),
    };
    let base = build_f(&surface, spec).unwrap();
    let (disk, _) = normalize_disk(&bundled_disk(BundledDisk::GzOmega1), None).unwrap();
    let ctx = DeformationContext::build(surface, base, disk, LoopOptions::default()).unwrap();
    let p = period_matrix(&ctx, QUAD_TOL).unwrap();
    BackendFix { ctx, p }
}

fn sphere() -> &'static BackendFix {
    static FIX: OnceLock<BackendFix> = OnceLock::new();
    FIX.get_or_init(|| build_backend(SurfaceKind::Sphere))
}

fn torus() -> &'static BackendFix {
    static FIX: OnceLock<BackendFix> = OnceLock::new();
    FIX.get_or_init(|| build_backend(SurfaceKind::Torus))
}

fn solve_opts() -> SolveOptions {
    SolveOptions {
        residual_tol: RESIDUAL_TOL,
        quad_tol: QUAD_TOL,
        fd_quad_tol: 1e-9,
        max_iter: 50,
        fd_step: 1e-5,
    }
}

fn sphere_ramp() -> Vec<f64> {
    vec![0.0025, 0.005, 0.01, 0.02]
}

fn torus_ramp() -> Vec<f64> {
    vec![0.00025, 0.0005, 0.001, 0.002]
}

fn solved(kind: SurfaceKind, target: Target) -> &'static Vec<RampStep> {
    static SPHERE_C2: OnceLock<Vec<RampStep>> = OnceLock::new();
    static SPHERE_R3: OnceLock<Vec<RampStep>> = OnceLock::new();
    static SPHERE_L3: OnceLock<Vec<RampStep>> = OnceLock::new();
    static TORUS_C2: OnceLock<Vec<RampStep>> = OnceLock::new();
    static TORUS_R3: OnceLock<Vec<RampStep>> = OnceLock::new();
    static TORUS_L3: OnceLock<Vec<RampStep>> = OnceLock::new();
    let (cell, fix, ramp) = match (kind, target) {
        (SurfaceKind::Sphere, Target::C2) => (&SPHERE_C2, sphere(), sphere_ramp()),
        (SurfaceKind::Sphere, Target::R3) => (&SPHERE_R3, sphere(), sphere_ramp()),
        (SurfaceKind::Sphere, Target::L3) => (&SPHERE_L3, sphere(), sphere_ramp()),
        (SurfaceKind::Torus, Target::C2) => (&TORUS_C2, torus(), torus_ramp()),
        (SurfaceKind::Torus, Target::R3) => (&TORUS_R3, torus(), torus_ramp()),
        (SurfaceKind::Torus, Target::L3) => (&TORUS_L3, torus(), torus_ramp()),
    };
    cell.get_or_init(|| kill_periods_ramp(target, &ramp, &fix.ctx, solve_opts()).unwrap())
}

/// Solved parameters meshed, realized and certified at one ramp step.
/// Some members exist to keep the whole pipeline state alive for future
/// criteria; an allow tames the per-field dead-code lint.
#[allow(dead_code)]
struct DomainFix {
    params: DeformationParams,
    c_used: f64,
    window: Window,
    outer: BoundaryReport,
    annulus: AnnulusChoice,
    mesh: DomainMesh,
    realization: Realization,
    metric: MetricCertificate,
    geometry: GeometryReport,
    certificate: BoundednessCertificate,
}

fn build_domain_fix(kind: SurfaceKind, target: Target, resolution: usize) -> DomainFix {
    let fix = match kind {
        SurfaceKind::Sphere => sphere(),
        SurfaceKind::Torus => torus(),
    };
    let steps = solved(kind, target);
    // Largest ramp value whose domain stages all pass, mirroring the
    // pipeline's backoff.
    for step in steps.iter().rev() {
        let ctx = &fix.ctx;
        let attempt = || -> nullsurf_core::Result<DomainFix> {
            let data = ctx.deformed(&step.params)?;
            let window = domain_window(&ctx.surface, &data.level, &ctx.base.ends)?;
            let outer = trace_boundary(
                &data.level,
                &ctx.surface,
                &ctx.base.ends,
                window,
                resolution,
                1.0,
                1e-4,
            )?;
            let annulus = choose_r(
                &data.level,
                &ctx.surface,
                &ctx.base.ends,
                window,
                resolution,
                &[0.90, 0.95, 0.99],
                &outer,
                1e-4,
            )?;
            let mesh = mesh_domain(&data.level, window, resolution, 0.01)?;
            let realization = realize(target, ctx, &data, &mesh, QUAD_TOL, 1e-8)?;
            let samples: Vec<C> = mesh
                .vertices
                .iter()
                .filter(|v| v.level_abs <= 0.98)
                .map(|v| v.pos)
                .collect();
            let metric = metric_certificate(&data, &samples, MetricCertConfig::default())?;
            let geometry = geometry_checks(&data, &mesh, 200)?;
            let certificate = certify_bounded(
                &realization,
                &mesh,
                &data,
                &ctx.base.ends,
                &outer,
                &annulus,
                16,
                0xacce97,
            )?;
            Ok(DomainFix {
                params: step.params.clone(),
                c_used: step.c,
                window,
                outer,
                annulus,
                mesh,
                realization,
                metric,
                geometry,
                certificate,
            })
        };
        match attempt() {
            Ok(out) => return out,
            Err(_) => continue,
        }
    }
    panic!("no ramp step passed the domain stages for {kind:?} {target:?}");
}

fn sphere_c2_fix() -> &'static DomainFix {
    static FIX: OnceLock<DomainFix> = OnceLock::new();
    FIX.get_or_init(|| build_domain_fix(SurfaceKind::Sphere, Target::C2, 128))
}

fn sphere_r3_fix() -> &'static DomainFix {
    static FIX: OnceLock<DomainFix> = OnceLock::new();
    FIX.get_or_init(|| build_domain_fix(SurfaceKind::Sphere, Target::R3, 128))
}

fn sphere_l3_fix() -> &'static DomainFix {
    static FIX: OnceLock<DomainFix> = OnceLock::new();
    FIX.get_or_init(|| build_domain_fix(SurfaceKind::Sphere, Target::L3, 128))
}

fn torus_c2_fix() -> &'static DomainFix {
    static FIX: OnceLock<DomainFix> = OnceLock::new();
    FIX.get_or_init(|| build_domain_fix(SurfaceKind::Torus, Target::C2, 128))
}

fn pass(criterion: usize, start: Instant, budget_s: f64, detail: &str) {
    let elapsed = start.elapsed().as_secs_f64();
    println!("ACCEPTANCE {criterion}: PASS ({elapsed:.2}s) - {detail}");
    assert!(
        elapsed < budget_s,
        "criterion {criterion} exceeded its {budget_s}s budget: {elapsed:.2}s"
    );
}

#[test]
fn criterion_01_elliptic_kernel() {
    let start = Instant::now();
    let kernel = EllipticKernel::new(c(0.0, 1.0)).unwrap();
    let worst = kernel.self_test(100, 0xacce5501).unwrap();
    assert!(worst < 1e-10, "kernel self-test worst error {worst:.3e}");
    // Roots of P' inside the fundamental domain: exactly the three half
    // periods.
    let surface = make_surface(BackendSpec::Torus { tau: c(0.0, 1.0) }).unwrap();
    let roots = torus_roots(
        &surface,
        &|z| kernel.p_prime_jet_unchecked(z),
        &[C::ZERO],
        24,
    )
    .unwrap();
    assert_eq!(roots.len(), 3, "P' root count");
    let expected = kernel.half_periods();
    for e in expected {
        assert!(
            roots.iter().any(|&r| surface.distance(r, e) < 1e-8),
            "missing half-period root {e}"
        );
    }
    pass(
        1,
        start,
        5.0,
        &format!("kernel worst relative error {worst:.2e}; P' roots at the half periods"),
    );
}

#[test]
fn criterion_02_null_identity_and_normalization() {
    let start = Instant::now();
    let mut worst_null: f64 = 0.0;
    for kind in [BundledDisk::GzOmega1, BundledDisk::Gz2OmegaHalf] {
        let raw = bundled_disk(kind);
        let mut rng = SplitMix64::new(0xacce5502);
        for _ in 0..200 {
            let z = rng.in_disk(0.97);
            let vals: Vec<C> = raw.phi.iter().map(|p| p.eval(z)).collect();
            let s: C = vals.iter().map(|&v| v * v).sum();
            let scale: f64 = vals.iter().map(|v| v.norm_sqr()).sum::<f64>().max(1e-30);
            worst_null = worst_null.max(s.norm() / scale);
        }
        assert!(worst_null < 1e-11, "null identity defect {worst_null:.3e}");
        let (out, record) = normalize_disk(&raw, None).unwrap();
        let (eq, m3, m3d) = normalization_defect(&out);
        assert!(eq < 1e-12, "normalization condition defect {eq:.3e}");
        assert!(m3 > 1e-12 && m3d > 1e-12);
        assert!(
            record.orthogonality_defect() < 1e-12,
            "T^t T defect {:.3e}",
            record.orthogonality_defect()
        );
    }
    pass(
        2,
        start,
        1.0,
        &format!("null identity defect {worst_null:.2e}; all five conditions at 1e-12"),
    );
}

#[test]
fn criterion_03_period_engine() {
    let start = Instant::now();
    // Sphere: P = (2 pi i).
    let s = sphere();
    assert_eq!(s.p.n(), 1);
    let two_pi_i = c(0.0, 2.0 * std::f64::consts::PI);
    assert!((s.p.p[(0, 0)] - two_pi_i).norm() < 1e-9);
    assert!(s.p.condition_ratio() > 1e-10);
    // Torus: lattice entries for dz, residue pattern for the eta block.
    let t = torus();
    let tau = t.ctx.surface.tau().unwrap();
    assert!((t.p.p[(0, 0)] - C::ONE).norm() < 1e-9);
    assert!((t.p.p[(1, 0)] - tau).norm() < 1e-9);
    for k in 0..3 {
        for j in 0..3 {
            let expected = if k == j { two_pi_i } else { C::ZERO };
            assert!((t.p.p[(2 + k, 2 + j)] - expected).norm() < 1e-9);
        }
    }
    assert!(t.p.condition_ratio() > 1e-10);
    // Base-point period map vanishes on both backends.
    let mut base_norms = Vec::new();
    for fix in [s, t] {
        let zero = DeformationParams::zeros(fix.ctx.n());
        let v = period_map(Target::C2, &fix.ctx, &zero, QUAD_TOL).unwrap();
        assert!(v.norm() < 1e-10, "base-point period norm {}", v.norm());
        base_norms.push(v.norm());
    }
    pass(
        3,
        start,
        30.0,
        &format!(
            "P entries match to 1e-9; base-point period norms {:.2e} / {:.2e}",
            base_norms[0], base_norms[1]
        ),
    );
}

#[test]
fn criterion_04_jacobians() {
    let start = Instant::now();
    let mut detail = String::new();
    for (name, fix) in [("sphere", sphere()), ("torus", torus())] {
        let n = fix.ctx.n();
        let j1 = jacobian(JacobianVariant::J1, &fix.ctx, &fix.p, QUAD_TOL, 1e-5).unwrap();
        assert!(
            j1.fd_discrepancy_rel < 1e-6,
            "{name} J1 fd {:.3e}",
            j1.fd_discrepancy_rel
        );
        assert_eq!(j1.rank, 2 * n, "{name} J1 invertible");
        // Zero lower-right block from phi1(0) = 0.
        let a = j1.analytic_complex.as_ref().unwrap();
        for r in 0..n {
            for cc in 0..n {
                assert!(a[(n + r, n + cc)].norm() < 1e-10, "{name} J1 lower-right");
            }
        }
        for variant in [JacobianVariant::J2, JacobianVariant::J3] {
            let rep = jacobian(variant, &fix.ctx, &fix.p, QUAD_TOL, 1e-5).unwrap();
            assert!(rep.fd_discrepancy_rel < 1e-6, "{name} {variant:?}");
            assert_eq!(rep.rank, 3 * n, "{name} {variant:?} rank");
            let ratio = rep.singular_values[3 * n - 1] / rep.singular_values[0];
            assert!(ratio > 1e-8, "{name} {variant:?} sigma ratio {ratio:.3e}");
        }
        detail.push_str(&format!("{name} J1 fd {:.1e}; ", j1.fd_discrepancy_rel));
    }
    pass(4, start, 60.0, &detail);
}

#[test]
fn criterion_05_period_killing() {
    let start = Instant::now();
    let mut detail = String::new();
    for (name, kind) in [
        ("sphere", SurfaceKind::Sphere),
        ("torus", SurfaceKind::Torus),
    ] {
        for target in [Target::C2, Target::R3, Target::L3] {
            let steps = solved(kind, target);
            assert!(
                !steps.is_empty(),
                "{name} {target:?}: no converged ramp value"
            );
            for step in steps.iter() {
                assert!(
                    step.trace.final_residual < RESIDUAL_TOL,
                    "{name} {target:?} c = {}: residual {:.3e}",
                    step.c,
                    step.trace.final_residual
                );
            }
        }
        detail.push_str(&format!(
            "{name} c2 top c = {}; ",
            solved(kind, Target::C2).last().unwrap().c
        ));
    }
    // Reconstructed mesh loop residuals for the killed components.
    for fix in [sphere_c2_fix(), torus_c2_fix()] {
        assert!(
            fix.realization.residuals.required_max < 1e-8,
            "loop residual {:.3e}",
            fix.realization.residuals.required_max
        );
        assert!(
            fix.realization.max_closure_defect < 1e-8,
            "closure defect {:.3e}",
            fix.realization.max_closure_defect
        );
    }
    // Path independence: a second spanning tree changes realized values by
    // less than ten times the residual-period bound.
    {
        let fix = sphere_c2_fix();
        let ctx = &sphere().ctx;
        let data = ctx.deformed(&fix.params).unwrap();
        let mut alt = fix.mesh.clone();
        let other_root = (0..alt.vertices.len())
            .find(|&i| i != fix.mesh.root && !alt.vertices[i].boundary)
            .unwrap();
        alt.rebuild_tree(other_root).unwrap();
        let psi = |z: C| data.psi(z);
        let pot_b = alt.integrate_potential(&psi, QUAD_TOL).unwrap();
        let pot_a = &fix.realization.potential;
        let (va, vb) = (fix.mesh.root, other_root);
        for k in 0..2 {
            let da = pot_a[va][k] - pot_a[vb][k];
            let db = pot_b[va][k] - pot_b[vb][k];
            assert!(
                (da - db).norm() < 10.0 * 1e-8,
                "tree dependence in component {k}: {:.3e}",
                (da - db).norm()
            );
        }
    }
    pass(5, start, 300.0, &detail);
}

#[test]
fn criterion_06_topology() {
    let start = Instant::now();
    // Sphere: e + 1 = 2 components; torus: 4; bijective end matching with a
    // reported positive min |dG|.
    for (fix, expected) in [(sphere_c2_fix(), 2usize), (torus_c2_fix(), 4usize)] {
        assert_eq!(fix.outer.components.len(), expected);
        let mut seen: Vec<usize> = fix.outer.components.iter().map(|c| c.end_index).collect();
        seen.sort();
        assert_eq!(
            seen,
            (0..expected).collect::<Vec<_>>(),
            "bijective matching"
        );
        assert!(fix.outer.min_dg > 0.0);
    }
    // One end multiplication on the torus: e grows from 3 to 5 branch
    // points, verified by the argument-principle count (df has a pole of
    // order 5 at the base point, so zeros = winding + 5).
    let t = torus();
    let grown = multiply_ends(&t.ctx.surface, &t.ctx.base, C::ONE).unwrap();
    assert_eq!(grown.ends.e(), 5);
    let tau = t.ctx.surface.tau().unwrap();
    let dfj = grown.df.coeff_fn();
    let count = argument_principle_count(
        &|z| dfj(z),
        c(-0.25, 0.0) - 0.25 * tau,
        (C::ONE, tau),
        1e-10,
    )
    .unwrap();
    assert_eq!(count + 5, 5, "argument-principle zero count");
    pass(
        6,
        start,
        120.0,
        &format!(
            "components 2/4 matched; min|dG| {:.3} / {:.3}; multiplied e = 5",
            sphere_c2_fix().outer.min_dg,
            torus_c2_fix().outer.min_dg
        ),
    );
}

#[test]
fn criterion_07_metric_certificate() {
    let start = Instant::now();
    for (name, fix) in [("sphere", sphere_c2_fix()), ("torus", torus_c2_fix())] {
        assert!(
            fix.metric.worst_ratio >= 1.0 - 1e-9,
            "{name}: ratio {}",
            fix.metric.worst_ratio
        );
        assert!(fix.metric.a > 0.0 && fix.metric.a < 1.0);
        assert!(fix.metric.sample_count > 100);
    }
    pass(
        7,
        start,
        60.0,
        &format!(
            "a = {:.3} (sphere) / {:.3} (torus), worst ratios >= 1 - 1e-9",
            sphere_c2_fix().metric.a,
            torus_c2_fix().metric.a
        ),
    );
}

#[test]
fn criterion_08_boundedness() {
    let start = Instant::now();
    // Integration-by-parts inequality on 100 randomized instances.
    let mut rng = SplitMix64::new(0xacce5508);
    for _ in 0..100 {
        let (a1, a2) = (rng.range(-2.0, 2.0), rng.range(-2.0, 2.0));
        let (w1, w2) = (rng.range(0.5, 6.0), rng.range(0.5, 6.0));
        let (b1, b2) = (rng.range(-2.0, 2.0), rng.range(-2.0, 2.0));
        let wb = rng.range(0.5, 5.0);
        let length = rng.range(0.3, 3.0);
        let a = move |t: f64| c(a1 * (w1 * t).cos(), a2 * (w2 * t).sin());
        let b = move |t: f64| c(b1 * (wb * t).cos() + b2, b1 * (wb * t).sin());
        let bc = integration_by_parts_bound(&a, &b, None, length, 128, 1e-10).unwrap();
        assert!(bc.lhs <= bc.bound + 1e-8);
    }
    // Pipeline radial segments on both backends.
    for (name, fix) in [("sphere", sphere_c2_fix()), ("torus", torus_c2_fix())] {
        assert!(!fix.certificate.segments.is_empty());
        for seg in &fix.certificate.segments {
            for piece in &seg.pieces {
                assert!(
                    piece.lhs <= piece.bound + 1e-8,
                    "{name}: piece bound violated"
                );
            }
            assert!(
                seg.direct <= seg.bound + 1e-8,
                "{name}: direct {} > bound {}",
                seg.direct,
                seg.bound
            );
            assert!(
                seg.lift_defect < 1e-9,
                "{name}: lift defect {}",
                seg.lift_defect
            );
        }
        assert!(
            fix.certificate.mesh_max <= fix.certificate.k0 + fix.certificate.shared_bound + 1e-6,
            "{name}: dominance"
        );
    }
    // Refinement stability of the global maximum on the sphere.
    let coarse = sphere_c2_fix();
    let fine = build_domain_fix(SurfaceKind::Sphere, Target::C2, 256);
    assert_eq!(fine.c_used, coarse.c_used, "same continuation value");
    let rel =
        (fine.certificate.mesh_max - coarse.certificate.mesh_max).abs() / fine.certificate.mesh_max;
    assert!(rel < 0.01, "refinement drift {rel:.4}");
    pass(
        8,
        start,
        300.0,
        &format!(
            "parts inequality on 100 instances; {} + {} segments verified; refinement drift {rel:.5}",
            coarse.certificate.segments.len(),
            torus_c2_fix().certificate.segments.len()
        ),
    );
}

#[test]
fn criterion_09_realization_geometry() {
    let start = Instant::now();
    // R^3: conformality and harmonicity.
    let r3 = sphere_r3_fix();
    assert!(
        r3.geometry.conformality < 1e-6,
        "conformality {:.3e}",
        r3.geometry.conformality
    );
    // Max-normalized pointwise nullity over the mesh.
    {
        let ctx = &sphere().ctx;
        let data = ctx.deformed(&r3.params).unwrap();
        let worst = r3
            .mesh
            .vertices
            .iter()
            .map(|v| data.null_defect(v.pos))
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-11, "nullity defect {worst:.3e}");
    }
    assert!(
        r3.geometry.harmonicity < 1e-6,
        "harmonicity {:.3e}",
        r3.geometry.harmonicity
    );
    // L^3: the holomorphic lift is Lorentz-null pointwise.
    let l3 = sphere_l3_fix();
    assert!(
        l3.geometry.lorentz_null < 1e-11,
        "lorentz null {:.3e}",
        l3.geometry.lorentz_null
    );
    // C^2: third-coordinate periods recorded and nonzero on the torus run.
    // (The square-power sphere model is structurally degenerate: its level
    // deformation leaves every third-component residue at zero, so the
    // torus is the witness for the still-open C^3 problem.)
    let t = torus_c2_fix();
    assert!(
        t.realization.residuals.third_component_max > 1e-3,
        "third-component period {:.3e} unexpectedly small",
        t.realization.residuals.third_component_max
    );
    assert_eq!(t.realization.residuals.per_loop.len(), 5);
    pass(
        9,
        start,
        120.0,
        &format!(
            "conformality {:.1e}, harmonicity {:.1e}, lorentz {:.1e}, torus psi3 period {:.3}",
            r3.geometry.conformality,
            r3.geometry.harmonicity,
            l3.geometry.lorentz_null,
            t.realization.residuals.third_component_max
        ),
    );
}

#[test]
fn criterion_10_determinism() {
    let start = Instant::now();
    let out_dir = std::env::temp_dir().join("nullsurf_acceptance_determinism");
    let mut cfg = PipelineConfig::default();
    cfg.resolution = 64;
    cfg.seed = 123;
    cfg.targets = vec!["c2".into()];
    cfg.out_dir = out_dir.to_string_lossy().into_owned();
    let report_path = out_dir.join("sphere_report.json");
    run_pipeline(&cfg).unwrap();
    let first = std::fs::read(&report_path).unwrap();
    run_pipeline(&cfg).unwrap();
    let second = std::fs::read(&report_path).unwrap();
    assert_eq!(first, second, "reports differ between identical runs");
    pass(
        10,
        start,
        300.0,
        &format!("byte-identical reports ({} bytes)", first.len()),
    );
}
