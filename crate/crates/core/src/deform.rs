//! Deformation parameters, the deformed Weierstrass data and its three
//! realizations (C^2 projection, R^3 minimal surface, L^3 maxface), plus the
//! pointwise metric certificate.

use crate::domain::DomainMesh;
use crate::forms::{
    cohomology_basis, gauge_function, level_function, BaseFunction, CohomologyBasis, GaugeFunction,
    LevelFunction, MeroFunction,
};
use crate::nulldisk::NullDiskData;
use crate::numeric::{C, I};
use crate::surface::{homology_loops, HomologyLoop, LoopOptions, SurfaceModel};
use crate::{Error, Result};
use std::sync::Arc;

/// The parameter vectors of the deformation family with their real
/// coordinate views: lambda_j = s_j + i t_j for j = 0..n and
/// delta_j = s_{n+j} + i t_{n+j} for j = 1..n.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationParams {
    pub lambda: Vec<C>,
    pub delta: Vec<C>,
}

impl DeformationParams {
    pub fn zeros(n: usize) -> Self {
        DeformationParams {
            lambda: vec![C::ZERO; n + 1],
            delta: vec![C::ZERO; n],
        }
    }

    pub fn n(&self) -> usize {
        self.delta.len()
    }

    pub fn is_zero(&self) -> bool {
        self.lambda
            .iter()
            .chain(&self.delta)
            .all(|v| v.norm() == 0.0)
    }

    /// Euclidean norm of (Lambda, Delta).
    pub fn norm(&self) -> f64 {
        self.lambda
            .iter()
            .chain(&self.delta)
            .map(|v| v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// |Lambda| alone.
    pub fn lambda_norm(&self) -> f64 {
        self.lambda.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Lambda / |Lambda|, the direction on the unit parameter sphere.
    pub fn unit_direction(&self) -> Option<Vec<C>> {
        let n = self.lambda_norm();
        if n == 0.0 {
            None
        } else {
            Some(self.lambda.iter().map(|&l| l / n).collect())
        }
    }

    /// Full real coordinate vector (s_0..s_2n, t_0..t_2n).
    pub fn to_real_full(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(4 * n + 2);
        for l in &self.lambda {
            out.push(l.re);
        }
        for d in &self.delta {
            out.push(d.re);
        }
        for l in &self.lambda {
            out.push(l.im);
        }
        for d in &self.delta {
            out.push(d.im);
        }
        out
    }

    pub fn from_real_full(n: usize, xs: &[f64]) -> Self {
        assert_eq!(xs.len(), 4 * n + 2);
        let (s, t) = xs.split_at(2 * n + 1);
        let lambda = (0..=n).map(|j| C::new(s[j], t[j])).collect();
        let delta = (1..=n).map(|j| C::new(s[n + j], t[n + j])).collect();
        DeformationParams { lambda, delta }
    }

    /// Free real coordinates (s_1..s_2n, t_1..t_2n), the solver unknowns
    /// with lambda_0 held fixed.
    pub fn to_real_free(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(4 * n);
        for l in &self.lambda[1..] {
            out.push(l.re);
        }
        for d in &self.delta {
            out.push(d.re);
        }
        for l in &self.lambda[1..] {
            out.push(l.im);
        }
        for d in &self.delta {
            out.push(d.im);
        }
        out
    }

    pub fn from_real_free(lambda0: C, n: usize, xs: &[f64]) -> Self {
        assert_eq!(xs.len(), 4 * n);
        let (s, t) = xs.split_at(2 * n);
        let mut lambda = vec![lambda0];
        lambda.extend((0..n).map(|j| C::new(s[j], t[j])));
        let delta = (0..n).map(|j| C::new(s[n + j], t[n + j])).collect();
        DeformationParams { lambda, delta }
    }

    /// Complex free coordinates (lambda_1..lambda_n, delta_1..delta_n).
    pub fn to_complex_free(&self) -> Vec<C> {
        self.lambda[1..]
            .iter()
            .chain(&self.delta)
            .copied()
            .collect()
    }

    pub fn from_complex_free(lambda0: C, n: usize, xs: &[C]) -> Self {
        assert_eq!(xs.len(), 2 * n);
        let mut lambda = vec![lambda0];
        lambda.extend_from_slice(&xs[..n]);
        DeformationParams {
            lambda,
            delta: xs[n..].to_vec(),
        }
    }
}

/// Everything fixed once per model run: backend, base function, cohomology
/// basis, auxiliary v, homology loops, and the normalized disk.
#[derive(Clone)]
pub struct DeformationContext {
    pub surface: SurfaceModel,
    pub base: BaseFunction,
    pub basis: CohomologyBasis,
    pub v: MeroFunction,
    pub loops: Vec<HomologyLoop>,
    pub disk: Arc<NullDiskData>,
}

impl DeformationContext {
    pub fn build(
        surface: SurfaceModel,
        base: BaseFunction,
        disk: NullDiskData,
        loop_opts: LoopOptions,
    ) -> Result<Self> {
        if !disk.normalized {
            return Err(Error::Validation(
                "deformation context requires a normalized disk".into(),
            ));
        }
        let basis = cohomology_basis(&surface, &base)?;
        let v = crate::forms::build_v(&surface, &base.ends)?;
        let loops = homology_loops(&surface, &base.ends, loop_opts)?;
        Ok(DeformationContext {
            surface,
            base,
            basis,
            v,
            loops,
            disk: Arc::new(disk),
        })
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    /// Assemble the deformed Weierstrass data at the given parameters.
    pub fn deformed(&self, params: &DeformationParams) -> Result<DeformedData> {
        if params.lambda.len() != self.n() + 1 || params.delta.len() != self.n() {
            return Err(Error::Validation(format!(
                "parameter lengths ({}, {}) do not match n = {}",
                params.lambda.len(),
                params.delta.len(),
                self.n()
            )));
        }
        let level = level_function(&params.lambda, &self.v, &self.basis)?;
        let gauge = gauge_function(&params.delta, &self.basis)?;
        Ok(DeformedData {
            params: params.clone(),
            level,
            gauge,
            disk: self.disk.clone(),
            df: self.base.df.clone(),
        })
    }
}

/// Deformed Weierstrass data and the associated holomorphic 1-forms.
///
/// Form coefficients are evaluated through the factorization
/// 2 omega0 = phi1 - i phi2, 2 g^2 omega0 = -(phi1 + i phi2), which keeps
/// every quantity finite wherever the disk data is.
#[derive(Clone)]
pub struct DeformedData {
    pub params: DeformationParams,
    pub level: LevelFunction,
    pub gauge: GaugeFunction,
    pub disk: Arc<NullDiskData>,
    pub df: crate::forms::MeroOneForm,
}

impl DeformedData {
    /// g-hat = h * (g o G).
    pub fn g_hat(&self, z: C) -> C {
        let g = self.disk.g.eval(self.level.eval(z));
        self.gauge.h_jet(z).v * g
    }

    /// Coefficient of omega-hat = (omega0 o G) df / h.
    pub fn omega_hat_coeff(&self, z: C) -> C {
        let w = self.disk.omega0.eval(self.level.eval(z));
        w * self.df.coeff(z) / self.gauge.h_jet(z).v
    }

    /// Coefficients of the three deformed 1-forms at z.
    pub fn psi(&self, z: C) -> [C; 3] {
        let gz = self.level.eval(z);
        let h = self.gauge.h_jet(z).v;
        let fp = self.df.coeff(z);
        let p1 = self.disk.phi[0].eval(gz);
        let p2 = self.disk.phi[1].eval(gz);
        let p3 = self.disk.phi[2].eval(gz);
        let minus = (p1 - I * p2) / (2.0 * h);
        let plus = h * (p1 + I * p2) / 2.0;
        [(minus + plus) * fp, I * (minus - plus) * fp, p3 * fp]
    }

    /// The same coefficients through g-hat and omega-hat directly; used to
    /// cross-check the factorized route.
    pub fn psi_direct(&self, z: C) -> [C; 3] {
        let gh = self.g_hat(z);
        let wh = self.omega_hat_coeff(z);
        [
            (C::ONE - gh * gh) * wh,
            I * (C::ONE + gh * gh) * wh,
            2.0 * gh * wh,
        ]
    }

    /// Pointwise null defect |sum psi^2| / max |psi|^2.
    pub fn null_defect(&self, z: C) -> f64 {
        let psi = self.psi(z);
        let sum: C = psi.iter().map(|&p| p * p).sum();
        let scale = psi.iter().map(|p| p.norm_sqr()).fold(0.0, f64::max);
        if scale == 0.0 {
            0.0
        } else {
            sum.norm() / scale
        }
    }
}

/// Configuration for the metric certificate.
#[derive(Clone, Copy, Debug)]
pub struct MetricCertConfig {
    /// Reject the certificate when the margin constant drops below this.
    pub floor_a: f64,
    /// Relative safety margin subtracted from the observed minimum.
    pub margin: f64,
}

impl Default for MetricCertConfig {
    fn default() -> Self {
        MetricCertConfig {
            floor_a: 0.05,
            margin: 1e-9,
        }
    }
}

/// Pointwise completeness proxy: the constant a with a < |h| < 1/a and
/// |df/dG| > a over the samples, and the verified inequality chain ratio.
#[derive(Clone, Debug)]
pub struct MetricCertificate {
    pub a: f64,
    pub sample_count: usize,
    pub worst_ratio: f64,
    pub min_abs_h: f64,
    pub max_abs_h: f64,
    pub min_df_dg: f64,
}

/// Issue the metric certificate over the given interior samples.
pub fn metric_certificate(
    data: &DeformedData,
    samples: &[C],
    cfg: MetricCertConfig,
) -> Result<MetricCertificate> {
    if samples.is_empty() {
        return Err(Error::CertificateFailed("no samples supplied".into()));
    }
    if data.params.lambda[0].norm() == 0.0 {
        return Err(Error::CertificateFailed(
            "certificate is only issued for perturbed parameters (lambda_0 = c != 0); \
             the base-point inequality degenerates"
                .into(),
        ));
    }
    let stats = crate::exec::map(samples, |&z| {
        let h = data.gauge.h_jet(z).v.norm();
        let df_dg = (data.df.coeff(z) / data.level.jet(z).d1).norm();
        (h, df_dg)
    });
    let mut min_h = f64::INFINITY;
    let mut max_h: f64 = 0.0;
    let mut min_df_dg = f64::INFINITY;
    for &(h, d) in &stats {
        min_h = min_h.min(h);
        max_h = max_h.max(h);
        min_df_dg = min_df_dg.min(d);
    }
    let a_raw = min_h.min(1.0 / max_h).min(min_df_dg);
    let a = (a_raw * (1.0 - cfg.margin)).min(1.0 - 1e-12);
    if !(a > 0.0) {
        return Err(Error::CertificateFailed(format!(
            "margin constant not positive: a = {a:.3e}"
        )));
    }
    if a < cfg.floor_a {
        return Err(Error::CertificateFailed(format!(
            "margin constant a = {a:.4} below floor {:.4}; parameters too large, shrink c",
            cfg.floor_a
        )));
    }
    // Verify the pointwise chain (1+|g-hat|^2)|omega-hat| >=
    // a^4 (1+|g o G|^2)|omega0 o G||dG| at every sample.
    let ratios = crate::exec::map(samples, |&z| {
        let gh = data.g_hat(z).norm();
        let wh = data.omega_hat_coeff(z).norm();
        let gz = data.level.eval(z);
        let g = data.disk.g.eval(gz).norm();
        let w0 = data.disk.omega0.eval(gz).norm();
        let dg = data.level.jet(z).d1.norm();
        let lhs = (1.0 + gh * gh) * wh;
        let rhs = a.powi(4) * (1.0 + g * g) * w0 * dg;
        if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        }
    });
    let worst_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    if worst_ratio < 1.0 - 1e-9 {
        return Err(Error::CertificateFailed(format!(
            "pointwise inequality ratio {worst_ratio} dropped below 1"
        )));
    }
    Ok(MetricCertificate {
        a,
        sample_count: samples.len(),
        worst_ratio,
        min_abs_h: min_h,
        max_abs_h: max_h,
        min_df_dg,
    })
}

/// Realization target space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    C2,
    R3,
    L3,
}

impl Target {
    pub fn label(&self) -> &'static str {
        match self {
            Target::C2 => "c2",
            Target::R3 => "r3",
            Target::L3 => "l3",
        }
    }
}

/// Raw loop periods of the three deformed forms plus the per-target
/// residual summary.
#[derive(Clone, Debug)]
pub struct ResidualTable {
    /// ∮ psi_k over each homology loop, loop-major.
    pub per_loop: Vec<[C; 3]>,
    /// Max over the components the target requires to vanish.
    pub required_max: f64,
    /// Max third-coordinate period magnitude (recorded for the C^2 target,
    /// where it witnesses the still-open C^3 problem by staying nonzero).
    pub third_component_max: f64,
}

/// A realized immersion on the mesh.
#[derive(Clone, Debug)]
pub struct Realization {
    pub target: Target,
    /// Complex potential ∫ (psi1, psi2, psi3) per mesh vertex.
    pub potential: Vec<[C; 3]>,
    /// Realized coordinates: C2 keeps two complex numbers as four reals
    /// (re1, im1, re2, im2); R3 and L3 keep three reals.
    pub coords: Vec<Vec<f64>>,
    /// |g-hat| per vertex (kept for the L^3 singularity scan).
    pub ghat_abs: Vec<f64>,
    pub residuals: ResidualTable,
    /// Worst single-valuedness defect of the realized coordinates over the
    /// non-tree mesh edges.
    pub max_closure_defect: f64,
    pub bbox_min: Vec<f64>,
    pub bbox_max: Vec<f64>,
}

impl Realization {
    pub fn diameter_bound(&self) -> f64 {
        self.bbox_min
            .iter()
            .zip(&self.bbox_max)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    /// Norm of the target's complex lift at a vertex; the quantity bounded
    /// by the boundedness certificate.
    pub fn lift_norm(&self, vertex: usize) -> f64 {
        let p = &self.potential[vertex];
        match self.target {
            Target::C2 => (p[0].norm_sqr() + p[1].norm_sqr()).sqrt(),
            Target::R3 | Target::L3 => (p[0].norm_sqr() + p[1].norm_sqr() + p[2].norm_sqr()).sqrt(),
        }
    }
}

fn realized_coords(target: Target, p: &[C; 3]) -> Vec<f64> {
    match target {
        Target::C2 => vec![p[0].re, p[0].im, p[1].re, p[1].im],
        Target::R3 => vec![p[0].re, p[1].re, p[2].re],
        Target::L3 => vec![(I * p[0]).re, p[1].re, p[2].re],
    }
}

/// Which residual components the target requires to vanish.
fn required_residual(target: Target, period: &[C; 3]) -> f64 {
    match target {
        Target::C2 => period[0].norm().max(period[1].norm()),
        Target::R3 => period[0]
            .re
            .abs()
            .max(period[1].re.abs())
            .max(period[2].re.abs()),
        Target::L3 => period[0]
            .im
            .abs()
            .max(period[1].re.abs())
            .max(period[2].re.abs()),
    }
}

/// Integrate the deformed forms over the mesh spanning tree and realize the
/// target coordinates. Fails with `MultivaluedRealization` when the
/// target's required loop periods have not been killed.
pub fn realize(
    target: Target,
    ctx: &DeformationContext,
    data: &DeformedData,
    mesh: &DomainMesh,
    quad_tol: f64,
    residual_tol: f64,
) -> Result<Realization> {
    // Residual loop periods over the homology loops, by direct quadrature.
    let per_loop: Vec<[C; 3]> = ctx
        .loops
        .iter()
        .map(|lp| -> Result<[C; 3]> {
            let mut out = [C::ZERO; 3];
            for (k, slot) in out.iter_mut().enumerate() {
                let point = |t: f64| lp.point(t);
                let velocity = |t: f64| lp.velocity(t);
                *slot =
                    crate::quad::path_integral(&|z| data.psi(z)[k], &point, &velocity, quad_tol)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let required_max = per_loop
        .iter()
        .map(|p| required_residual(target, p))
        .fold(0.0, f64::max);
    let third_component_max = per_loop.iter().map(|p| p[2].norm()).fold(0.0, f64::max);
    if required_max > residual_tol {
        return Err(Error::MultivaluedRealization(required_max));
    }
    let residuals = ResidualTable {
        per_loop,
        required_max,
        third_component_max,
    };

    // Spanning-tree potential.
    let psi = |z: C| data.psi(z);
    let potential = mesh.integrate_potential(&psi, quad_tol)?;

    // Closure defects of the realized coordinates over non-tree edges.
    let defects =
        mesh.closure_defects(&psi, &potential, quad_tol, |p| realized_coords(target, p))?;
    let max_closure_defect = defects.into_iter().fold(0.0, f64::max);

    let coords: Vec<Vec<f64>> = potential
        .iter()
        .map(|p| realized_coords(target, p))
        .collect();
    let ghat_abs = crate::exec::map_range(mesh.vertices.len(), |i| {
        data.g_hat(mesh.vertices[i].pos).norm()
    });
    let dim = coords[0].len();
    let mut bbox_min = vec![f64::INFINITY; dim];
    let mut bbox_max = vec![f64::NEG_INFINITY; dim];
    for row in &coords {
        for (k, &x) in row.iter().enumerate() {
            bbox_min[k] = bbox_min[k].min(x);
            bbox_max[k] = bbox_max[k].max(x);
        }
    }
    Ok(Realization {
        target,
        potential,
        coords,
        ghat_abs,
        residuals,
        max_closure_defect,
        bbox_min,
        bbox_max,
    })
}

/// Vertices where |g-hat| is within tol of 1, the candidate singular set of
/// the maxface. (The |g-hat| = 1 criterion is imported from the maxface
/// literature, not established here.)
pub fn singularity_scan(realization: &Realization, tol: f64) -> Result<Vec<usize>> {
    if realization.target != Target::L3 {
        return Err(Error::Validation(
            "singularity scan applies to the L3 target only".into(),
        ));
    }
    Ok(realization
        .ghat_abs
        .iter()
        .enumerate()
        .filter(|&(_, &g)| (g - 1.0).abs() <= tol)
        .map(|(i, _)| i)
        .collect())
}

/// Per-vertex conformality and Lorentz-null diagnostics of a realization.
#[derive(Clone, Debug)]
pub struct GeometryReport {
    /// Max |sum psi_k^2| / |psi|^2 over interior vertices; the real and
    /// imaginary parts are |x_u|^2 - |x_v|^2 and -2 x_u . x_v.
    pub conformality: f64,
    /// Max Morera residual |∮ psi dz| / (perimeter * max |psi|) over
    /// sampled interior cells: the harmonicity certificate.
    pub harmonicity: f64,
    /// Max pointwise Lorentz-null defect of the L^3 lift.
    pub lorentz_null: f64,
}

/// Evaluate the geometry checks on mesh vertices and sampled cells.
pub fn geometry_checks(
    data: &DeformedData,
    mesh: &DomainMesh,
    max_cells: usize,
) -> Result<GeometryReport> {
    let interior: Vec<C> = mesh
        .vertices
        .iter()
        .filter(|v| !v.boundary)
        .map(|v| v.pos)
        .collect();
    let confs = crate::exec::map(&interior, |&z| {
        let psi = data.psi(z);
        let sum: C = psi.iter().map(|&p| p * p).sum();
        let scale: f64 = psi.iter().map(|p| p.norm_sqr()).sum();
        if scale == 0.0 {
            0.0
        } else {
            sum.norm() / scale
        }
    });
    let conformality = confs.into_iter().fold(0.0, f64::max);

    let lorentz = crate::exec::map(&interior, |&z| {
        let psi = data.psi(z);
        let lift = [I * psi[0], psi[1], psi[2]];
        let q = -lift[0] * lift[0] + lift[1] * lift[1] + lift[2] * lift[2];
        let scale: f64 = lift.iter().map(|p| p.norm_sqr()).sum();
        if scale == 0.0 {
            0.0
        } else {
            q.norm() / scale
        }
    });
    let lorentz_null = lorentz.into_iter().fold(0.0, f64::max);

    // Morera residuals over a deterministic sample of interior cells.
    let cells = mesh.interior_cell_sample(max_cells);
    let mut harmonicity = 0.0f64;
    for corners in cells {
        let mut scale = 0.0f64;
        let mut perimeter = 0.0f64;
        for k in 0..4 {
            scale = scale.max(
                data.psi(corners[k])
                    .iter()
                    .map(|p| p.norm())
                    .fold(0.0, f64::max),
            );
            perimeter += (corners[(k + 1) % 4] - corners[k]).norm();
        }
        for comp in 0..3 {
            let mut total = C::ZERO;
            for k in 0..4 {
                let (from, to) = (corners[k], corners[(k + 1) % 4]);
                let point = move |t: f64| from + t * (to - from);
                let velocity = move |_t: f64| to - from;
                total +=
                    crate::quad::path_integral(&|z| data.psi(z)[comp], &point, &velocity, 1e-13)?;
            }
            if scale > 0.0 {
                harmonicity = harmonicity.max(total.norm() / (perimeter * scale));
            }
        }
    }
    Ok(GeometryReport {
        conformality,
        harmonicity,
        lorentz_null,
    })
}
