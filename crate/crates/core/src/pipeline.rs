//! Pipeline orchestration: build -> normalize -> solve -> trace -> mesh ->
//! realize -> certify, with continuation backoff and artifact export.

use crate::config::PipelineConfig;
use crate::deform::{
    geometry_checks, metric_certificate, realize, singularity_scan, DeformationContext,
    MetricCertConfig, Target,
};
use crate::domain::{choose_r, domain_window, mesh_domain, trace_boundary};
use crate::forms::{build_f, multiply_ends, BaseSpec};
use crate::nulldisk::{
    bundled_disk, load_disk, normalize_disk, BundledDisk, DiskFunction, NormalizationRecord,
};
use crate::numeric::C;
use crate::periods::{
    jacobian, kill_periods_ramp, period_matrix, JacobianVariant, PeriodMatrix, RampStep,
    SolveOptions,
};
use crate::report::*;
use crate::surface::{make_surface, BackendSpec, LoopOptions};
use crate::{Error, Result};
use std::path::PathBuf;

/// Everything the pipeline builds once per configuration.
pub struct ModelBundle {
    pub config: PipelineConfig,
    pub ctx: DeformationContext,
    pub normalization: NormalizationRecord,
    pub normalization_defect: f64,
    pub kernel_self_test: Option<f64>,
    pub period_matrix: PeriodMatrix,
}

fn disk_from_config(config: &PipelineConfig) -> Result<crate::nulldisk::NullDiskData> {
    match config.disk.kind.as_str() {
        "g_z" => Ok(bundled_disk(BundledDisk::GzOmega1)),
        "g_z2" => Ok(bundled_disk(BundledDisk::Gz2OmegaHalf)),
        "custom" => {
            let to_c = |v: &[[f64; 2]]| v.iter().map(|&[re, im]| C::new(re, im)).collect();
            load_disk(
                DiskFunction::polynomial(to_c(&config.disk.g_coeffs)),
                DiskFunction::polynomial(to_c(&config.disk.omega_coeffs)),
            )
        }
        other => Err(Error::Validation(format!("unknown disk kind '{other}'"))),
    }
}

/// Build the model: backend, base function with end multiplications,
/// normalized disk, loops, and the period matrix.
pub fn build_model(config: &PipelineConfig) -> Result<ModelBundle> {
    config.validate()?;
    crate::exec::set_workers(config.workers);
    let surface = match config.surface.kind.as_str() {
        "sphere" => make_surface(BackendSpec::Sphere)?,
        "torus" => crate::surface::make_torus_surface(
            config.tau(),
            config.surface.pole_exclusion,
            config.surface.theta_terms,
        )?,
        other => return Err(Error::Validation(format!("unknown surface kind '{other}'"))),
    };
    let kernel_self_test = match &surface.kernel {
        Some(k) => Some(k.self_test(100, config.seed)?),
        None => None,
    };
    let spec = match config.function.kind.as_str() {
        "power" => BaseSpec::SpherePower {
            m0: config.function.m0,
        },
        "weierstrass_p" => BaseSpec::TorusP,
        other => {
            return Err(Error::Validation(format!(
                "unknown function kind '{other}'"
            )))
        }
    };
    let mut base = build_f(&surface, spec)?;
    for k in 0..config.function.end_multiplications {
        let [re, im] = config.function.shifts[k];
        base = multiply_ends(&surface, &base, C::new(re, im))?;
    }
    let raw_disk = disk_from_config(config)?;
    let hint = config.disk.z0_hint.map(|[re, im]| C::new(re, im));
    let (disk, normalization) = normalize_disk(&raw_disk, hint)?;
    let normalization_defect = crate::nulldisk::normalization_defect(&disk).0;
    let loop_opts = LoopOptions {
        radius: config.domain.loop_radius,
        clearance: 0.02,
    };
    let ctx = DeformationContext::build(surface, base, disk, loop_opts)?;
    let period_matrix = period_matrix(&ctx, config.solve.quadrature_tol)?;
    Ok(ModelBundle {
        config: config.clone(),
        ctx,
        normalization,
        normalization_defect,
        kernel_self_test,
        period_matrix,
    })
}

impl ModelBundle {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            residual_tol: self.config.solve.residual_tol,
            quad_tol: self.config.solve.quadrature_tol,
            fd_quad_tol: (self.config.solve.quadrature_tol * 1e3).min(1e-9),
            max_iter: self.config.solve.max_iterations,
            fd_step: 1e-5,
        }
    }

    pub fn backend_summary(&self) -> BackendSummary {
        let ends = &self.ctx.base.ends;
        BackendSummary {
            kind: self.config.surface.kind.clone(),
            tau: self.ctx.surface.tau().map(c_pair),
            genus: self.ctx.surface.genus,
            gap_series: self.ctx.surface.gap_series().to_vec(),
            base_end: format!("{}", ends.base),
            base_pole_order: ends.base_order,
            branch_points: ends
                .branches
                .iter()
                .map(|&(q, m)| BranchSummary {
                    point: c_pair(q),
                    order: m,
                })
                .collect(),
            e: ends.e(),
            n: ends.n(self.ctx.surface.genus),
            kernel_self_test: self.kernel_self_test,
        }
    }

    pub fn normalization_summary(&self) -> NormalizationSummary {
        NormalizationSummary {
            z0: c_pair(self.normalization.z0),
            rotation_c: self.normalization.rotation_c.map(c_pair),
            flipped: self.normalization.flipped,
            orthogonality_defect: self.normalization.orthogonality_defect(),
            condition_defect: self.normalization_defect,
            radius_bound: self.ctx.disk.radius_bound,
        }
    }

    pub fn period_summary(&self) -> PeriodMatrixSummary {
        let p = &self.period_matrix;
        PeriodMatrixSummary {
            n: p.n(),
            entries: (0..p.n())
                .map(|k| (0..p.n()).map(|j| c_pair(p.p[(k, j)])).collect())
                .collect(),
            singular_values: p.singular_values.clone(),
            condition_ratio: p.condition_ratio(),
        }
    }

    pub fn jacobian_summary(&self, variant: JacobianVariant) -> Result<JacobianSummary> {
        let rep = jacobian(
            variant,
            &self.ctx,
            &self.period_matrix,
            self.config.solve.quadrature_tol,
            1e-5,
        )?;
        Ok(JacobianSummary {
            variant: format!("{:?}", rep.variant),
            rows: rep.rows,
            cols: rep.cols,
            fd_discrepancy_rel: rep.fd_discrepancy_rel,
            singular_values: rep.singular_values,
            rank: rep.rank,
            condition_ratio: rep.condition_ratio,
        })
    }
}

fn stage_is_recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::WrongTopology { .. }
            | Error::BoundaryBranchPoint(_)
            | Error::NoValidAnnulus
            | Error::MeshFailure(_)
            | Error::CertificateFailed(_)
            | Error::DomainShrunk(_)
            | Error::MultivaluedRealization(_)
    )
}

/// Everything produced for one target at one continuation value.
pub struct TargetOutput {
    pub report: TargetReport,
    pub files: Vec<PathBuf>,
    pub newton_iterations: usize,
    pub ramp_steps: usize,
    pub mesh_vertices: usize,
    pub segment_count: usize,
}

fn try_target_at(
    bundle: &ModelBundle,
    target: Target,
    step: &RampStep,
    ramp_cs: &[f64],
    write_files: bool,
) -> Result<TargetOutput> {
    let config = &bundle.config;
    let ctx = &bundle.ctx;
    let data = ctx.deformed(&step.params)?;
    let window = domain_window(&ctx.surface, &data.level, &ctx.base.ends)?;
    let outer = trace_boundary(
        &data.level,
        &ctx.surface,
        &ctx.base.ends,
        window,
        config.resolution,
        1.0,
        config.domain.dg_floor,
    )?;
    let annulus = choose_r(
        &data.level,
        &ctx.surface,
        &ctx.base.ends,
        window,
        config.resolution,
        &config.domain.r_scan,
        &outer,
        config.domain.dg_floor,
    )?;
    let mesh = mesh_domain(
        &data.level,
        window,
        config.resolution,
        config.domain.min_angle_floor_deg,
    )?;
    let realize_tol = 100.0 * config.solve.residual_tol;
    let realization = realize(
        target,
        ctx,
        &data,
        &mesh,
        config.solve.quadrature_tol,
        realize_tol,
    )?;
    // Metric certificate over interior vertices with a boundary margin.
    let samples: Vec<C> = mesh
        .vertices
        .iter()
        .filter(|v| v.level_abs <= 1.0 - config.domain.interior_margin)
        .map(|v| v.pos)
        .collect();
    let cert = metric_certificate(
        &data,
        &samples,
        MetricCertConfig {
            floor_a: config.certificate.metric_floor_a,
            margin: 1e-9,
        },
    )?;
    let geometry = geometry_checks(&data, &mesh, 200)?;
    let boundedness = crate::domain::certify_bounded(
        &realization,
        &mesh,
        &data,
        &ctx.base.ends,
        &outer,
        &annulus,
        config.domain.segments_per_end,
        config.seed ^ (target.label().len() as u64) ^ 0x9e37,
    )?;
    let singular_vertex_count = if target == Target::L3 {
        Some(singularity_scan(&realization, 0.02)?.len())
    } else {
        None
    };

    // Artifact export.
    let mut files = Vec::new();
    let mut artifact_names = Vec::new();
    if write_files {
        let dir = PathBuf::from(&config.out_dir);
        let stem = format!("{}_{}_c{:.6}", config.surface.kind, target.label(), step.c);
        match target {
            Target::C2 => {
                let p = dir.join(format!("{stem}.csv"));
                files.push(crate::export::write_c2_csv(&p, &realization)?);
            }
            Target::R3 | Target::L3 => {
                let p = dir.join(format!("{stem}.obj"));
                files.push(crate::export::write_obj(&p, &mesh, &realization)?);
                if target == Target::L3 {
                    files.push(p.with_extension("metric.json"));
                }
            }
        }
        let svg = dir.join(format!("{stem}_contours.svg"));
        files.push(crate::export::write_contour_svg(
            &svg,
            &outer,
            Some(&annulus.inner),
        )?);
        artifact_names = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
    }

    let report = TargetReport {
        target: target.label().into(),
        c_used: step.c,
        backoff_notes: Vec::new(),
        solve: SolveSummary {
            c_used: step.c,
            iterations: step.trace.iterations,
            residual_history: step.trace.residual_history.clone(),
            final_residual: step.trace.final_residual,
            lambda: step.params.lambda.iter().map(|&z| c_pair(z)).collect(),
            delta: step.params.delta.iter().map(|&z| c_pair(z)).collect(),
            ramp_steps: ramp_cs.to_vec(),
        },
        boundary: BoundarySummary {
            level: outer.level,
            components: outer
                .components
                .iter()
                .map(|comp| BoundaryComponentSummary {
                    end_index: comp.end_index,
                    vertices: comp.polyline.len(),
                    min_dg: comp.min_dg,
                    signed_area: comp.signed_area,
                })
                .collect(),
            min_dg: outer.min_dg,
        },
        annulus_r: annulus.r,
        annulus_min_dg: annulus.min_dg,
        mesh: MeshSummary {
            vertices: mesh.vertices.len(),
            faces: mesh.faces.len(),
            edges: mesh.edges.len(),
            resolution: mesh.resolution,
            min_angle_deg: mesh.min_angle_deg,
        },
        realization: RealizationSummary {
            required_residual_max: realization.residuals.required_max,
            third_component_period_max: realization.residuals.third_component_max,
            max_closure_defect: realization.max_closure_defect,
            loop_periods: realization
                .residuals
                .per_loop
                .iter()
                .map(|row| [c_pair(row[0]), c_pair(row[1]), c_pair(row[2])])
                .collect(),
            bbox_min: realization.bbox_min.clone(),
            bbox_max: realization.bbox_max.clone(),
            diameter_bound: realization.diameter_bound(),
        },
        metric_certificate: MetricSummary {
            a: cert.a,
            sample_count: cert.sample_count,
            worst_ratio: cert.worst_ratio,
            min_abs_h: cert.min_abs_h,
            max_abs_h: cert.max_abs_h,
            min_df_dg: cert.min_df_dg,
        },
        boundedness: BoundednessSummary {
            r: boundedness.r,
            k0: boundedness.k0,
            min_dg_annulus: boundedness.min_dg_annulus,
            shared_pieces: boundedness
                .shared
                .iter()
                .map(|p| [p.c1, p.c2, p.c3, p.bound])
                .collect(),
            shared_bound: boundedness.shared_bound,
            global_bound: boundedness.global_bound,
            mesh_max: boundedness.mesh_max,
            segments: boundedness
                .segments
                .iter()
                .map(|s| SegmentSummary {
                    end_index: s.end_index,
                    q: c_pair(s.q),
                    q1: c_pair(s.q1),
                    c1_max: s.pieces.iter().map(|p| p.c1).fold(0.0, f64::max),
                    c2_max: s.pieces.iter().map(|p| p.c2).fold(0.0, f64::max),
                    c3_max: s.pieces.iter().map(|p| p.c3).fold(0.0, f64::max),
                    bound: s.bound,
                    direct: s.direct,
                    lift_defect: s.lift_defect,
                    route_disagreement: s.route_disagreement,
                })
                .collect(),
        },
        geometry: GeometrySummary {
            conformality: geometry.conformality,
            harmonicity: geometry.harmonicity,
            lorentz_null: geometry.lorentz_null,
        },
        singular_vertex_count,
        artifacts: artifact_names,
    };
    Ok(TargetOutput {
        newton_iterations: step.trace.iterations,
        ramp_steps: ramp_cs.len(),
        mesh_vertices: report.mesh.vertices,
        segment_count: report.boundedness.segments.len(),
        report,
        files,
    })
}

/// Solve and certify one target, backing off along the ramp on recoverable
/// stage failures.
pub fn run_target(bundle: &ModelBundle, target: Target, write_files: bool) -> Result<TargetOutput> {
    let ramp = bundle.config.resolved_ramp();
    let steps = kill_periods_ramp(target, &ramp, &bundle.ctx, bundle.solve_options())?;
    if steps.is_empty() {
        return Err(Error::NoConvergenceAtC {
            c: ramp.first().copied().unwrap_or(0.0),
            detail: "no ramp value converged".into(),
        });
    }
    let ramp_cs: Vec<f64> = steps.iter().map(|s| s.c).collect();
    let mut notes: Vec<String> = Vec::new();
    let mut last_err: Option<Error> = None;
    for step in steps.iter().rev() {
        match try_target_at(bundle, target, step, &ramp_cs, write_files) {
            Ok(mut out) => {
                out.report.backoff_notes = notes;
                return Ok(out);
            }
            Err(e) if stage_is_recoverable(&e) => {
                notes.push(format!("backed off from c = {}: {e}", step.c));
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(Error::NoConvergenceAtC {
        c: ramp_cs.last().copied().unwrap_or(0.0),
        detail: "every ramp value failed the domain stages".into(),
    }))
}

/// Run the full pipeline and write artifacts plus the JSON report.
pub fn run_pipeline(config: &PipelineConfig) -> Result<(RunReport, Vec<PathBuf>)> {
    let bundle = build_model(config)?;
    let targets = config.parsed_targets()?;
    let mut jacobians = Vec::new();
    let mut seen = Vec::new();
    for t in &targets {
        let variant = JacobianVariant::for_target(*t);
        if !seen.contains(&variant) {
            seen.push(variant);
            jacobians.push(bundle.jacobian_summary(variant)?);
        }
    }
    let mut target_reports = Vec::new();
    let mut files = Vec::new();
    let mut work = WorkCounters::default();
    let mut notes = Vec::new();
    for &t in &targets {
        let out = run_target(&bundle, t, true)?;
        work.newton_iterations += out.newton_iterations;
        work.ramp_steps += out.ramp_steps;
        work.mesh_vertices += out.mesh_vertices;
        work.boundedness_segments += out.segment_count;
        notes.extend(
            out.report
                .backoff_notes
                .iter()
                .map(|n| format!("{}: {n}", t.label())),
        );
        target_reports.push(out.report);
        files.extend(out.files);
    }
    let report = RunReport {
        schema: REPORT_SCHEMA.into(),
        pass: true,
        backend: bundle.backend_summary(),
        normalization: bundle.normalization_summary(),
        period_matrix: bundle.period_summary(),
        jacobians,
        targets: target_reports,
        work,
        notes,
        config_echo: config.clone(),
    };
    let dir = PathBuf::from(&config.out_dir);
    files.push(crate::export::write_period_csv(
        &dir.join(format!("{}_period_matrix.csv", config.surface.kind)),
        &bundle.period_matrix,
    )?);
    files.push(crate::export::write_divisor_csv(
        &dir.join(format!("{}_divisors.csv", config.surface.kind)),
        &bundle.ctx,
    )?);
    files.push(crate::export::write_report_json(
        &dir.join(format!("{}_report.json", config.surface.kind)),
        &report,
    )?);
    Ok((report, files))
}
