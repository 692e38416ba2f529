//! Serializable run report. Field order and container choices are fixed so
//! that identical runs produce byte-identical JSON.

use crate::config::PipelineConfig;
use crate::numeric::C;
use serde::Serialize;

pub const REPORT_SCHEMA: &str = "nullsurf/report/v1";

pub fn c_pair(z: C) -> [f64; 2] {
    [z.re, z.im]
}

#[derive(Clone, Debug, Serialize)]
pub struct BackendSummary {
    pub kind: String,
    pub tau: Option<[f64; 2]>,
    pub genus: u32,
    pub gap_series: Vec<u32>,
    pub base_end: String,
    pub base_pole_order: u32,
    pub branch_points: Vec<BranchSummary>,
    pub e: usize,
    pub n: usize,
    pub kernel_self_test: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchSummary {
    pub point: [f64; 2],
    pub order: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalizationSummary {
    pub z0: [f64; 2],
    pub rotation_c: Option<[f64; 2]>,
    pub flipped: bool,
    pub orthogonality_defect: f64,
    pub condition_defect: f64,
    pub radius_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodMatrixSummary {
    pub n: usize,
    pub entries: Vec<Vec<[f64; 2]>>,
    pub singular_values: Vec<f64>,
    pub condition_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct JacobianSummary {
    pub variant: String,
    pub rows: usize,
    pub cols: usize,
    pub fd_discrepancy_rel: f64,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub condition_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveSummary {
    pub c_used: f64,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub lambda: Vec<[f64; 2]>,
    pub delta: Vec<[f64; 2]>,
    pub ramp_steps: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryComponentSummary {
    pub end_index: usize,
    pub vertices: usize,
    pub min_dg: f64,
    pub signed_area: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundarySummary {
    pub level: f64,
    pub components: Vec<BoundaryComponentSummary>,
    pub min_dg: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshSummary {
    pub vertices: usize,
    pub faces: usize,
    pub edges: usize,
    pub resolution: usize,
    pub min_angle_deg: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RealizationSummary {
    pub required_residual_max: f64,
    pub third_component_period_max: f64,
    pub max_closure_defect: f64,
    /// Raw loop periods of the three deformed forms, loop-major, each as
    /// [re, im].
    pub loop_periods: Vec<[[f64; 2]; 3]>,
    pub bbox_min: Vec<f64>,
    pub bbox_max: Vec<f64>,
    pub diameter_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricSummary {
    pub a: f64,
    pub sample_count: usize,
    pub worst_ratio: f64,
    pub min_abs_h: f64,
    pub max_abs_h: f64,
    pub min_df_dg: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SegmentSummary {
    pub end_index: usize,
    pub q: [f64; 2],
    pub q1: [f64; 2],
    pub c1_max: f64,
    pub c2_max: f64,
    pub c3_max: f64,
    pub bound: f64,
    pub direct: f64,
    pub lift_defect: f64,
    pub route_disagreement: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundednessSummary {
    pub r: f64,
    pub k0: f64,
    pub min_dg_annulus: f64,
    /// Shared sup constants per factorization piece: [c1, c2, c3, bound].
    pub shared_pieces: Vec<[f64; 4]>,
    pub shared_bound: f64,
    pub global_bound: f64,
    pub mesh_max: f64,
    pub segments: Vec<SegmentSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GeometrySummary {
    pub conformality: f64,
    pub harmonicity: f64,
    pub lorentz_null: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TargetReport {
    pub target: String,
    pub c_used: f64,
    pub backoff_notes: Vec<String>,
    pub solve: SolveSummary,
    pub boundary: BoundarySummary,
    pub annulus_r: f64,
    pub annulus_min_dg: f64,
    pub mesh: MeshSummary,
    pub realization: RealizationSummary,
    pub metric_certificate: MetricSummary,
    pub boundedness: BoundednessSummary,
    pub geometry: GeometrySummary,
    pub singular_vertex_count: Option<usize>,
    pub artifacts: Vec<String>,
}

/// Deterministic work counters standing in for wall-clock timing, which
/// would break byte-identical reports.
#[derive(Clone, Debug, Default, Serialize)]
pub struct WorkCounters {
    pub newton_iterations: usize,
    pub ramp_steps: usize,
    pub mesh_vertices: usize,
    pub boundedness_segments: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema: String,
    pub pass: bool,
    pub backend: BackendSummary,
    pub normalization: NormalizationSummary,
    pub period_matrix: PeriodMatrixSummary,
    pub jacobians: Vec<JacobianSummary>,
    pub targets: Vec<TargetReport>,
    pub work: WorkCounters,
    pub notes: Vec<String>,
    pub config_echo: PipelineConfig,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
