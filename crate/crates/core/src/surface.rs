//! Riemann surface backends: the sphere with its two affine charts and the
//! torus C/(Z + tau Z) with an elliptic kernel. Everything downstream is
//! backend-agnostic through [`SurfaceModel`].

use crate::elliptic::EllipticKernel;
use crate::numeric::{c, C};
use crate::{Error, Result};

/// A point of the surface in main-chart coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurfacePoint {
    Finite(C),
    Infinity,
}

impl SurfacePoint {
    pub fn finite(&self) -> Option<C> {
        match self {
            SurfacePoint::Finite(z) => Some(*z),
            SurfacePoint::Infinity => None,
        }
    }
}

impl std::fmt::Display for SurfacePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SurfacePoint::Finite(z) => write!(f, "{:.6}{:+.6}i", z.re, z.im),
            SurfacePoint::Infinity => write!(f, "inf"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurfaceKind {
    Sphere,
    Torus,
}

/// Chart atlas entry. The sphere carries the affine chart plus its
/// reciprocal at infinity; the torus a single fundamental-domain chart whose
/// transition is translation by the lattice.
#[derive(Clone, Debug)]
pub struct ChartDescriptor {
    pub id: ChartId,
    pub label: &'static str,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartId {
    Main,
    Reciprocal,
}

/// Backend request for [`make_surface`].
#[derive(Clone, Copy, Debug)]
pub enum BackendSpec {
    Sphere,
    Torus { tau: C },
}

/// A compact Riemann surface backend.
#[derive(Clone, Debug)]
pub struct SurfaceModel {
    pub kind: SurfaceKind,
    pub genus: u32,
    gap_series: Vec<u32>,
    pub kernel: Option<EllipticKernel>,
    pub atlas: Vec<ChartDescriptor>,
}

impl SurfaceModel {
    pub fn tau(&self) -> Option<C> {
        self.kernel.as_ref().map(|k| k.tau)
    }

    /// Chart transition applied to a coordinate. On the sphere this swaps
    /// between z and w = 1/z; on the torus it reduces modulo the lattice.
    pub fn transition(&self, from: ChartId, to: ChartId, coord: C) -> C {
        match self.kind {
            SurfaceKind::Sphere => {
                if from == to {
                    coord
                } else {
                    1.0 / coord
                }
            }
            SurfaceKind::Torus => {
                let k = self.kernel.as_ref().expect("torus kernel");
                k.reduce(coord).0
            }
        }
    }

    /// Distance between finite chart points, lattice-aware on the torus.
    pub fn distance(&self, a: C, b: C) -> f64 {
        match self.kind {
            SurfaceKind::Sphere => (a - b).norm(),
            SurfaceKind::Torus => self
                .kernel
                .as_ref()
                .expect("torus kernel")
                .lattice_distance(a - b),
        }
    }

    /// The Weierstrass gap series at Q0 (empty for genus 0, [1] for the
    /// torus). Satisfies 1 = d_1 < ... < d_k <= 2k - 1.
    pub fn gap_series(&self) -> &[u32] {
        &self.gap_series
    }
}

/// End structure of the base function: the pole Q0 and the branch points
/// Q_1..Q_e of f with their orders.
#[derive(Clone, Debug)]
pub struct EndData {
    pub base: SurfacePoint,
    /// Pole order m0 of f at Q0.
    pub base_order: u32,
    /// Finite branch points Q_l with zero orders m_l of df, l = 1..e.
    pub branches: Vec<(C, u32)>,
}

impl EndData {
    pub fn new(
        surface: &SurfaceModel,
        base: SurfacePoint,
        base_order: u32,
        branches: Vec<(C, u32)>,
    ) -> Result<Self> {
        let top_gap = surface.gap_series().last().copied().unwrap_or(0);
        if base_order <= top_gap {
            return Err(Error::GapViolation {
                m0: base_order,
                gap: top_gap,
            });
        }
        Ok(EndData {
            base,
            base_order,
            branches,
        })
    }

    pub fn e(&self) -> usize {
        self.branches.len()
    }

    /// n = 2 kappa + e.
    pub fn n(&self, genus: u32) -> usize {
        2 * genus as usize + self.e()
    }

    /// All ends Q0, Q1, ..., Q_e.
    pub fn ends(&self) -> Vec<SurfacePoint> {
        let mut out = vec![self.base];
        out.extend(self.branches.iter().map(|&(q, _)| SurfacePoint::Finite(q)));
        out
    }

    /// Finite ends in end order (skipping Q0 when it is at infinity).
    pub fn finite_ends(&self) -> Vec<C> {
        self.ends().iter().filter_map(|p| p.finite()).collect()
    }
}

/// Build a backend. For the torus the elliptic kernel is constructed and
/// self-tested before the model is handed out.
pub fn make_surface(spec: BackendSpec) -> Result<SurfaceModel> {
    match spec {
        BackendSpec::Sphere => Ok(SurfaceModel {
            kind: SurfaceKind::Sphere,
            genus: 0,
            gap_series: vec![],
            kernel: None,
            atlas: vec![
                ChartDescriptor {
                    id: ChartId::Main,
                    label: "affine z",
                },
                ChartDescriptor {
                    id: ChartId::Reciprocal,
                    label: "w = 1/z at infinity",
                },
            ],
        }),
        BackendSpec::Torus { tau } => make_torus_surface(tau, 1e-3, 64),
    }
}

/// Torus backend with explicit kernel precision controls (pole-exclusion
/// radius and theta-series term cap).
pub fn make_torus_surface(tau: C, pole_exclusion: f64, theta_terms: usize) -> Result<SurfaceModel> {
    let kernel = EllipticKernel::with_controls(tau, pole_exclusion, theta_terms)?;
    let worst = kernel.self_test(100, 0x5eed)?;
    if worst > 1e-10 {
        return Err(Error::PrecisionUnachievable(format!(
            "kernel self-test worst relative error {worst:.3e}"
        )));
    }
    Ok(SurfaceModel {
        kind: SurfaceKind::Torus,
        genus: 1,
        gap_series: vec![1],
        kernel: Some(kernel),
        atlas: vec![ChartDescriptor {
            id: ChartId::Main,
            label: "fundamental domain, lattice translation transition",
        }],
    })
}

/// Tag identifying a loop's role in the homology basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoopTag {
    /// Handle cycle index 1..2 kappa.
    Handle(usize),
    /// End loop index l = 1..e, winding once around Q_l.
    End(usize),
}

#[derive(Clone, Debug)]
pub enum LoopPath {
    Circle { center: C, radius: f64 },
    Segment { from: C, to: C },
}

/// A closed analytic loop on the surface, parametrized over [0, 1].
///
/// Segments close up through the lattice identification on the torus.
#[derive(Clone, Debug)]
pub struct HomologyLoop {
    pub tag: LoopTag,
    pub path: LoopPath,
}

impl HomologyLoop {
    pub fn point(&self, t: f64) -> C {
        match &self.path {
            LoopPath::Circle { center, radius } => {
                let th = 2.0 * std::f64::consts::PI * t;
                center + radius * c(th.cos(), th.sin())
            }
            LoopPath::Segment { from, to } => from + t * (to - from),
        }
    }

    pub fn velocity(&self, t: f64) -> C {
        match &self.path {
            LoopPath::Circle { center: _, radius } => {
                let th = 2.0 * std::f64::consts::PI * t;
                c(0.0, 2.0 * std::f64::consts::PI) * radius * c(th.cos(), th.sin())
            }
            LoopPath::Segment { from, to } => to - from,
        }
    }

    /// Winding number around a finite point by the numerical winding
    /// integral (1/2 pi i) ∮ dz / (z - q).
    pub fn winding_number(&self, q: C, tol: f64) -> Result<f64> {
        let f = |z: C| 1.0 / (z - q);
        let point = |t: f64| self.point(t);
        let velocity = |t: f64| self.velocity(t);
        let v = crate::quad::path_integral(&f, &point, &velocity, tol)?;
        Ok((v / (2.0 * std::f64::consts::PI * crate::numeric::I)).re)
    }
}

/// Options controlling loop geometry.
#[derive(Clone, Copy, Debug)]
pub struct LoopOptions {
    /// End-loop radius; `None` picks a backend default.
    pub radius: Option<f64>,
    /// Required clearance between loops and all other ends.
    pub clearance: f64,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            radius: None,
            clearance: 0.02,
        }
    }
}

/// Construct the homology basis: 2 kappa handle cycles followed by e end
/// loops, each end loop a positively oriented circle around its branch
/// point.
pub fn homology_loops(
    surface: &SurfaceModel,
    ends: &EndData,
    opts: LoopOptions,
) -> Result<Vec<HomologyLoop>> {
    let finite: Vec<C> = ends.branches.iter().map(|&(q, _)| q).collect();
    let mut all_finite = finite.clone();
    if let Some(q0) = ends.base.finite() {
        all_finite.push(q0);
    }
    let mut min_sep = f64::INFINITY;
    for i in 0..all_finite.len() {
        for j in (i + 1)..all_finite.len() {
            min_sep = min_sep.min(surface.distance(all_finite[i], all_finite[j]));
        }
    }
    let default_radius = match surface.kind {
        // A single finite end on the sphere gets the unit circle; otherwise
        // stay well inside the smallest separation.
        SurfaceKind::Sphere => {
            if all_finite.len() <= 1 {
                1.0
            } else {
                0.35 * min_sep
            }
        }
        SurfaceKind::Torus => (0.4 * min_sep).min(0.2),
    };
    let radius = opts.radius.unwrap_or(default_radius);
    if all_finite.len() > 1 && 2.0 * radius + opts.clearance > min_sep {
        return Err(Error::LoopConstructionFailed(format!(
            "radius {radius:.3} too large for minimum end separation {min_sep:.3}"
        )));
    }

    let mut loops = Vec::new();
    if surface.kind == SurfaceKind::Torus {
        let tau = surface.tau().expect("torus modulus");
        let base = torus_handle_base(surface, &all_finite, radius, opts.clearance)?;
        loops.push(HomologyLoop {
            tag: LoopTag::Handle(1),
            path: LoopPath::Segment {
                from: base,
                to: base + C::ONE,
            },
        });
        loops.push(HomologyLoop {
            tag: LoopTag::Handle(2),
            path: LoopPath::Segment {
                from: base,
                to: base + tau,
            },
        });
    }
    for (l, &q) in finite.iter().enumerate() {
        loops.push(HomologyLoop {
            tag: LoopTag::End(l + 1),
            path: LoopPath::Circle { center: q, radius },
        });
    }
    Ok(loops)
}

/// Find a base point whose two period segments stay clear of every end.
fn torus_handle_base(surface: &SurfaceModel, ends: &[C], radius: f64, clearance: f64) -> Result<C> {
    let tau = surface.tau().expect("torus modulus");
    let needed = radius.max(0.12) + clearance;
    let candidates = [
        (0.25, 0.25),
        (0.23, 0.31),
        (0.31, 0.23),
        (0.27, 0.19),
        (0.19, 0.27),
        (0.35, 0.29),
        (0.29, 0.35),
        (0.21, 0.37),
    ];
    'cand: for &(a, b) in &candidates {
        let base = a + b * tau;
        for dir in [C::ONE, tau] {
            for k in 0..=64 {
                let z = base + dir * (k as f64 / 64.0);
                for &q in ends {
                    if surface.distance(z, q) < needed {
                        continue 'cand;
                    }
                }
            }
        }
        return Ok(base);
    }
    Err(Error::LoopConstructionFailed(
        "no handle base point clear of all ends".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_model_has_empty_gap_series() {
        let s = make_surface(BackendSpec::Sphere).unwrap();
        assert_eq!(s.genus, 0);
        assert!(s.gap_series().is_empty());
        assert_eq!(s.atlas.len(), 2);
    }

    #[test]
    fn torus_model_gap_series_is_one() {
        let s = make_surface(BackendSpec::Torus { tau: c(0.0, 1.0) }).unwrap();
        assert_eq!(s.genus, 1);
        assert_eq!(s.gap_series(), &[1]);
        for (k, &d) in s.gap_series().iter().enumerate() {
            assert!(d <= 2 * (k as u32 + 1) - 1);
        }
    }

    #[test]
    fn invalid_modulus_rejected() {
        match make_surface(BackendSpec::Torus { tau: c(0.3, -0.2) }) {
            Err(Error::InvalidModulus(_)) => {}
            other => panic!("expected InvalidModulus, got {other:?}"),
        }
    }

    #[test]
    fn sphere_single_end_gets_unit_circle() {
        let s = make_surface(BackendSpec::Sphere).unwrap();
        let ends = EndData::new(&s, SurfacePoint::Infinity, 2, vec![(C::ZERO, 1)]).unwrap();
        let loops = homology_loops(&s, &ends, LoopOptions::default()).unwrap();
        assert_eq!(loops.len(), 1);
        match &loops[0].path {
            LoopPath::Circle { center, radius } => {
                assert_eq!(*center, C::ZERO);
                assert!((radius - 1.0).abs() < 1e-12);
            }
            other => panic!("expected circle, got {other:?}"),
        }
    }

    #[test]
    fn torus_loop_count_and_windings() {
        let s = make_surface(BackendSpec::Torus { tau: c(0.0, 1.0) }).unwrap();
        let tau = s.tau().unwrap();
        let half_periods = [c(0.5, 0.0), 0.5 * tau, 0.5 * (C::ONE + tau)];
        let ends = EndData::new(
            &s,
            SurfacePoint::Finite(C::ZERO),
            2,
            half_periods.iter().map(|&q| (q, 1)).collect(),
        )
        .unwrap();
        let loops = homology_loops(&s, &ends, LoopOptions::default()).unwrap();
        assert_eq!(loops.len(), 5, "n = 2 kappa + e = 5");
        assert_eq!(loops[0].tag, LoopTag::Handle(1));
        assert_eq!(loops[1].tag, LoopTag::Handle(2));
        // End loop 2 winds once around Q_2 and not at all around Q_1
        // (winding evaluated by the numerical winding integral).
        let w_self = loops[3].winding_number(half_periods[1], 1e-10).unwrap();
        let w_other = loops[3].winding_number(half_periods[0], 1e-10).unwrap();
        assert!((w_self - 1.0).abs() < 1e-8, "self winding {w_self}");
        assert!(w_other.abs() < 1e-8, "cross winding {w_other}");
    }

    #[test]
    fn crowded_ends_fail_loop_construction() {
        let s = make_surface(BackendSpec::Sphere).unwrap();
        let ends = EndData::new(
            &s,
            SurfacePoint::Infinity,
            4,
            vec![(C::ZERO, 1), (c(1e-4, 0.0), 1)],
        )
        .unwrap();
        let opts = LoopOptions {
            radius: Some(0.5),
            clearance: 0.02,
        };
        match homology_loops(&s, &ends, opts) {
            Err(Error::LoopConstructionFailed(_)) => {}
            other => panic!("expected LoopConstructionFailed, got {other:?}"),
        }
    }

    #[test]
    fn gap_violation_detected() {
        let s = make_surface(BackendSpec::Torus { tau: c(0.0, 1.0) }).unwrap();
        match EndData::new(&s, SurfacePoint::Finite(C::ZERO), 1, vec![]) {
            Err(Error::GapViolation { m0: 1, gap: 1 }) => {}
            other => panic!("expected GapViolation, got {other:?}"),
        }
    }
}
