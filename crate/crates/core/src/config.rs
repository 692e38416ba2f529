//! Pipeline configuration: a plain TOML tree with every default embedded,
//! echoed verbatim into reports for reproducibility.

use crate::numeric::C;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

fn default_seed() -> u64 {
    7
}
fn default_resolution() -> usize {
    192
}
fn default_out_dir() -> String {
    "out".into()
}
fn default_tau() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_pole_exclusion() -> f64 {
    1e-3
}
fn default_theta_terms() -> usize {
    64
}
fn default_m0() -> u32 {
    2
}
fn default_targets() -> Vec<String> {
    vec!["c2".into()]
}
fn default_shifts() -> Vec<[f64; 2]> {
    vec![[1.0, 0.0], [-0.4, 0.8], [0.9, 0.5]]
}
fn default_residual_tol() -> f64 {
    1e-10
}
fn default_quadrature_tol() -> f64 {
    1e-12
}
fn default_max_iterations() -> usize {
    50
}
fn default_boundary_tol() -> f64 {
    1e-9
}
fn default_dg_floor() -> f64 {
    1e-4
}
fn default_r_scan() -> Vec<f64> {
    vec![0.90, 0.95, 0.99]
}
fn default_segments_per_end() -> usize {
    16
}
fn default_min_angle() -> f64 {
    0.01
}
fn default_metric_floor() -> f64 {
    0.05
}
fn default_boundary_margin() -> f64 {
    0.02
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    /// "sphere" or "torus".
    pub kind: String,
    /// Modulus for the torus as [re, im].
    #[serde(default = "default_tau")]
    pub tau: [f64; 2],
    /// Pole-exclusion radius of the elliptic kernel in chart coordinates.
    #[serde(default = "default_pole_exclusion")]
    pub pole_exclusion: f64,
    /// Theta-series term cap.
    #[serde(default = "default_theta_terms")]
    pub theta_terms: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            kind: "sphere".into(),
            tau: default_tau(),
            pole_exclusion: default_pole_exclusion(),
            theta_terms: default_theta_terms(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FunctionConfig {
    /// "power" (sphere, f = z^m0) or "weierstrass_p" (torus).
    pub kind: String,
    #[serde(default = "default_m0")]
    pub m0: u32,
    /// Number of end-multiplication steps (f -> (f - c)^2) to apply.
    #[serde(default)]
    pub end_multiplications: usize,
    /// Shift values c_j for the multiplications, as [re, im].
    #[serde(default = "default_shifts")]
    pub shifts: Vec<[f64; 2]>,
}

impl Default for FunctionConfig {
    fn default() -> Self {
        FunctionConfig {
            kind: "power".into(),
            m0: default_m0(),
            end_multiplications: 0,
            shifts: default_shifts(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DiskConfig {
    /// "g_z" (g = z, omega = 1), "g_z2" (g = z^2, omega = 1 + z/2), or
    /// "custom" with explicit coefficients.
    pub kind: String,
    #[serde(default)]
    pub g_coeffs: Vec<[f64; 2]>,
    #[serde(default)]
    pub omega_coeffs: Vec<[f64; 2]>,
    /// Optional normalization point hint as [re, im].
    #[serde(default)]
    pub z0_hint: Option<[f64; 2]>,
}

impl Default for DiskConfig {
    fn default() -> Self {
        DiskConfig {
            kind: "g_z".into(),
            g_coeffs: vec![],
            omega_coeffs: vec![],
            z0_hint: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Continuation values for lambda_0 = c, strictly increasing. Empty
    /// selects the backend default ramp.
    #[serde(default)]
    pub c_ramp: Vec<f64>,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_quadrature_tol")]
    pub quadrature_tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            c_ramp: vec![],
            residual_tol: default_residual_tol(),
            quadrature_tol: default_quadrature_tol(),
            max_iterations: default_max_iterations(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "default_boundary_tol")]
    pub boundary_tol: f64,
    /// Floor for |dG| along traced contours and annuli.
    #[serde(default = "default_dg_floor")]
    pub dg_floor: f64,
    #[serde(default = "default_r_scan")]
    pub r_scan: Vec<f64>,
    #[serde(default = "default_segments_per_end")]
    pub segments_per_end: usize,
    #[serde(default = "default_min_angle")]
    pub min_angle_floor_deg: f64,
    /// Samples for the metric certificate stay this far inside the unit
    /// level.
    #[serde(default = "default_boundary_margin")]
    pub interior_margin: f64,
    /// Optional override of the end-loop radius.
    #[serde(default)]
    pub loop_radius: Option<f64>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            boundary_tol: default_boundary_tol(),
            dg_floor: default_dg_floor(),
            r_scan: default_r_scan(),
            segments_per_end: default_segments_per_end(),
            min_angle_floor_deg: default_min_angle(),
            interior_margin: default_boundary_margin(),
            loop_radius: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    #[serde(default = "default_metric_floor")]
    pub metric_floor_a: f64,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        CertificateConfig {
            metric_floor_a: default_metric_floor(),
        }
    }
}

/// Full pipeline configuration.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// 0 = library default worker count.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_targets")]
    pub targets: Vec<String>,
    #[serde(default)]
    pub surface: SurfaceConfig,
    #[serde(default)]
    pub function: FunctionConfig,
    #[serde(default)]
    pub disk: DiskConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub certificate: CertificateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: default_seed(),
            out_dir: default_out_dir(),
            resolution: default_resolution(),
            workers: 0,
            targets: default_targets(),
            surface: SurfaceConfig::default(),
            function: FunctionConfig::default(),
            disk: DiskConfig::default(),
            solve: SolveConfig::default(),
            domain: DomainConfig::default(),
            certificate: CertificateConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Validation(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn tau(&self) -> C {
        C::new(self.surface.tau[0], self.surface.tau[1])
    }

    /// The continuation ramp, falling back to a backend-calibrated default.
    /// The torus default is smaller because the level function carries
    /// higher-order poles at closely spaced ends.
    pub fn resolved_ramp(&self) -> Vec<f64> {
        if !self.solve.c_ramp.is_empty() {
            return self.solve.c_ramp.clone();
        }
        match self.surface.kind.as_str() {
            "torus" => vec![0.00025, 0.0005, 0.001, 0.002],
            _ => vec![0.0025, 0.005, 0.01, 0.02],
        }
    }

    pub fn parsed_targets(&self) -> Result<Vec<crate::deform::Target>> {
        let mut out = Vec::new();
        for t in &self.targets {
            let tr = match t.as_str() {
                "c2" => crate::deform::Target::C2,
                "r3" => crate::deform::Target::R3,
                "l3" => crate::deform::Target::L3,
                "all" => {
                    out = vec![
                        crate::deform::Target::C2,
                        crate::deform::Target::R3,
                        crate::deform::Target::L3,
                    ];
                    continue;
                }
                other => {
                    return Err(Error::Validation(format!(
                        "unknown target '{other}' (expected c2, r3, l3 or all)"
                    )))
                }
            };
            if !out.contains(&tr) {
                out.push(tr);
            }
        }
        if out.is_empty() {
            return Err(Error::Validation("no targets selected".into()));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("solve.residual_tol", self.solve.residual_tol),
            ("solve.quadrature_tol", self.solve.quadrature_tol),
            ("domain.boundary_tol", self.domain.boundary_tol),
            ("domain.dg_floor", self.domain.dg_floor),
            (
                "certificate.metric_floor_a",
                self.certificate.metric_floor_a,
            ),
        ] {
            if !(v > 0.0) {
                return Err(Error::Validation(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let ramp = self.resolved_ramp();
        for w in ramp.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Validation(format!(
                    "c ramp must be strictly increasing, got {ramp:?}"
                )));
            }
        }
        if ramp.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Validation(
                "c ramp values must be nonnegative".into(),
            ));
        }
        for &r in &self.domain.r_scan {
            if !(0.0 < r && r < 1.0) {
                return Err(Error::Validation(format!(
                    "r scan values must lie in (0,1), got {r}"
                )));
            }
        }
        if self.resolution < 16 {
            return Err(Error::Validation("resolution must be at least 16".into()));
        }
        match (self.surface.kind.as_str(), self.function.kind.as_str()) {
            ("sphere", "power") => {
                if self.function.m0 < 2 {
                    return Err(Error::Validation(
                        "sphere power must be at least 2 to create a branch point".into(),
                    ));
                }
            }
            ("torus", "weierstrass_p") => {
                if self.surface.tau[1] <= 0.0 {
                    return Err(Error::Validation(format!(
                        "Im tau must be positive, got {}",
                        self.surface.tau[1]
                    )));
                }
                if !(self.surface.pole_exclusion > 0.0) || self.surface.theta_terms < 8 {
                    return Err(Error::Validation(
                        "kernel controls: pole_exclusion must be positive and theta_terms >= 8"
                            .into(),
                    ));
                }
            }
            (s, f) => {
                return Err(Error::Validation(format!(
                    "surface kind '{s}' and function kind '{f}' do not form a supported backend"
                )))
            }
        }
        if self.function.end_multiplications > self.function.shifts.len() {
            return Err(Error::Validation(format!(
                "end_multiplications = {} exceeds the {} provided shifts",
                self.function.end_multiplications,
                self.function.shifts.len()
            )));
        }
        match self.disk.kind.as_str() {
            "g_z" | "g_z2" => {}
            "custom" => {
                if self.disk.g_coeffs.is_empty() || self.disk.omega_coeffs.is_empty() {
                    return Err(Error::Validation(
                        "custom disk requires g_coeffs and omega_coeffs".into(),
                    ));
                }
            }
            other => {
                return Err(Error::Validation(format!(
                    "unknown disk kind '{other}' (expected g_z, g_z2 or custom)"
                )))
            }
        }
        self.parsed_targets()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_preserves_config() {
        let cfg = PipelineConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn negative_tolerance_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.solve.residual_tol = -1.0;
        match cfg.validate() {
            Err(Error::Validation(_)) => {}
            other => panic!("expected Validation, got {other:?}"),
        }
    }

    #[test]
    fn non_increasing_ramp_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.solve.c_ramp = vec![0.01, 0.01];
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn torus_config_parses() {
        let text = r#"
            seed = 11
            [surface]
            kind = "torus"
            tau = [0.0, 1.0]
            [function]
            kind = "weierstrass_p"
            [targets]
        "#;
        // Unknown [targets] table must be rejected (it is a top-level list).
        assert!(PipelineConfig::from_toml(text).is_err());
        let ok = r#"
            seed = 11
            targets = ["c2", "r3"]
            [surface]
            kind = "torus"
            [function]
            kind = "weierstrass_p"
        "#;
        let cfg = PipelineConfig::from_toml(ok).unwrap();
        assert_eq!(cfg.resolved_ramp(), vec![0.00025, 0.0005, 0.001, 0.002]);
    }
}
