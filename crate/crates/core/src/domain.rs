//! Level-set domain extraction and boundedness certification: traces the
//! unit level set of the level function, meshes its sublevel domain,
//! selects the boundary annuli, lifts radial segments through the covering
//! and assembles the integration-by-parts bound for the image diameter.

use crate::deform::{DeformedData, Realization, Target};
use crate::forms::LevelFunction;
use crate::numeric::{c, C};
use crate::surface::{EndData, SurfaceKind, SurfaceModel, SurfacePoint};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Rectangular (or lattice-parallelogram) sampling window in chart
/// coordinates, mapped from the unit square.
#[derive(Clone, Copy, Debug)]
pub struct Window {
    pub origin: C,
    pub ex: C,
    pub ey: C,
    /// Torus fundamental domain: opposite edges identified.
    pub periodic: bool,
}

impl Window {
    pub fn point(&self, fx: f64, fy: f64) -> C {
        self.origin + fx * self.ex + fy * self.ey
    }

    /// Fractional coordinates of a point in the window frame.
    pub fn fractions(&self, q: C) -> (f64, f64) {
        let d = q - self.origin;
        let det = self.ex.re * self.ey.im - self.ex.im * self.ey.re;
        let a = (d.re * self.ey.im - d.im * self.ey.re) / det;
        let b = (self.ex.re * d.im - self.ex.im * d.re) / det;
        (a, b)
    }

    /// Translate a point by the window lattice into the fundamental cell
    /// (identity for non-periodic windows).
    pub fn wrap(&self, q: C) -> C {
        if !self.periodic {
            return q;
        }
        let (a, b) = self.fractions(q);
        self.point(a.rem_euclid(1.0), b.rem_euclid(1.0))
    }
}

/// Pick a window that contains the active geometry: the torus fundamental
/// domain shifted so every end is interior, or a sphere square large enough
/// that the level function exceeds the unit level on its frame.
pub fn domain_window(
    surface: &SurfaceModel,
    level: &LevelFunction,
    ends: &EndData,
) -> Result<Window> {
    match surface.kind {
        SurfaceKind::Torus => {
            let tau = surface.tau().expect("torus modulus");
            let kernel = surface.kernel.as_ref().expect("torus kernel");
            let pts: Vec<(f64, f64)> = ends
                .finite_ends()
                .iter()
                .map(|&q| {
                    let (red, _, _) = kernel.reduce(q);
                    let y = red.im / tau.im;
                    let x = red.re - y * tau.re;
                    (x.rem_euclid(1.0), y.rem_euclid(1.0))
                })
                .collect();
            // Choose the fractional offset maximizing the margin of all
            // ends to the window frame.
            let frac_margin = |p: f64, o: f64| {
                let r = (p - o).rem_euclid(1.0);
                r.min(1.0 - r)
            };
            let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
            for ai in 0..40 {
                for bi in 0..40 {
                    let a = -(ai as f64) / 40.0;
                    let b = -(bi as f64) / 40.0;
                    let margin = pts
                        .iter()
                        .map(|&(x, y)| frac_margin(x, a).min(frac_margin(y, b)))
                        .fold(f64::INFINITY, f64::min);
                    if margin > best.0 {
                        best = (margin, a, b);
                    }
                }
            }
            if best.0 < 0.05 {
                return Err(Error::MeshFailure(format!(
                    "ends too close to any fundamental-domain frame (margin {:.3})",
                    best.0
                )));
            }
            Ok(Window {
                origin: best.1 + best.2 * tau,
                ex: C::ONE,
                ey: tau,
                periodic: true,
            })
        }
        SurfaceKind::Sphere => {
            // Grow a circle until the level function is safely above the
            // unit level all around, then add headroom.
            let mut radius: f64 = 1.0;
            let mut ok = false;
            while radius < 1e4 {
                let min_on_circle = (0..64)
                    .map(|k| {
                        let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                        level.eval(radius * c(th.cos(), th.sin())).norm()
                    })
                    .fold(f64::INFINITY, f64::min);
                if min_on_circle > 1.6 {
                    ok = true;
                    break;
                }
                radius *= 1.25;
            }
            if !ok {
                return Err(Error::MeshFailure(
                    "no bounding circle with the level function above the unit level".into(),
                ));
            }
            let half = 1.2 * radius;
            Ok(Window {
                origin: c(-half, -half),
                ex: c(2.0 * half, 0.0),
                ey: c(0.0, 2.0 * half),
                periodic: false,
            })
        }
    }
}

/// A traced boundary component of |G| = level.
#[derive(Clone, Debug)]
pub struct BoundaryComponent {
    pub polyline: Vec<C>,
    /// Index into the end list (0 = Q0).
    pub end_index: usize,
    pub min_dg: f64,
    pub signed_area: f64,
}

/// Topology report of one traced level.
#[derive(Clone, Debug)]
pub struct BoundaryReport {
    pub level: f64,
    pub components: Vec<BoundaryComponent>,
    pub min_dg: f64,
}

struct Grid {
    window: Window,
    n: usize,
    /// Clamped |G| per node, y-major.
    values: Vec<f64>,
    nodes_x: usize,
    nodes_y: usize,
}

impl Grid {
    fn node_pos(&self, i: usize, j: usize) -> C {
        self.window
            .point(i as f64 / self.n as f64, j as f64 / self.n as f64)
    }

    fn value(&self, i: usize, j: usize) -> f64 {
        // Periodic wrap for the torus.
        let (i, j) = (i % self.nodes_x, j % self.nodes_y);
        self.values[j * self.nodes_x + i]
    }
}

const LEVEL_CLAMP: f64 = 1e8;

fn build_grid(level: &LevelFunction, window: Window, resolution: usize) -> Grid {
    let n = resolution;
    let (nodes_x, nodes_y) = if window.periodic {
        (n, n)
    } else {
        (n + 1, n + 1)
    };
    let values = crate::exec::map_range(nodes_x * nodes_y, |id| {
        let (i, j) = (id % nodes_x, id / nodes_x);
        let z = window.point(i as f64 / n as f64, j as f64 / n as f64);
        let v = level.eval(z).norm();
        if v.is_finite() {
            v.min(LEVEL_CLAMP)
        } else {
            LEVEL_CLAMP
        }
    });
    Grid {
        window,
        n,
        values,
        nodes_x,
        nodes_y,
    }
}

/// Newton-polish a point onto log|G| = log(level), along the gradient.
fn polish_to_level(level: &LevelFunction, z0: C, target: f64, tol: f64) -> Option<C> {
    let mut z = z0;
    for _ in 0..30 {
        let j = level.jet(z);
        let u = (j.v.norm() / target).ln();
        if !u.is_finite() {
            return None;
        }
        if u.abs() < tol {
            return Some(z);
        }
        let grad = (j.d1 / j.v).conj();
        let g2 = grad.norm_sqr();
        if g2 < 1e-300 {
            return None;
        }
        z -= u * grad / g2;
    }
    None
}

/// Crossing of |G| = target on the segment [p, q]; the endpoint levels must
/// straddle the target. The root is found strictly along the segment
/// (bisection bracket plus Newton in the edge parameter), so the returned
/// point lies on the edge and neighboring cells agree on it exactly.
fn edge_crossing(level: &LevelFunction, p: C, q: C, target: f64) -> Option<C> {
    let h = |t: f64| -> f64 {
        let v = level.eval(p + t * (q - p)).norm();
        if v.is_finite() {
            (v.min(LEVEL_CLAMP) / target).ln()
        } else {
            (LEVEL_CLAMP / target).ln()
        }
    };
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let (mut fa, fb) = (h(a), h(b));
    if fa == 0.0 {
        return Some(p);
    }
    if fb == 0.0 {
        return Some(q);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..30 {
        let m = 0.5 * (a + b);
        let fm = h(m);
        if fm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    // Newton along the segment, kept inside the bracket.
    let mut t = 0.5 * (a + b);
    for _ in 0..20 {
        let z = p + t * (q - p);
        let j = level.jet(z);
        let u = (j.v.norm() / target).ln();
        if u.abs() < 1e-13 {
            break;
        }
        let du = ((j.d1 / j.v) * (q - p)).re;
        if du.abs() < 1e-300 {
            break;
        }
        let tn = t - u / du;
        if !(a..=b).contains(&tn) {
            // Fall back to one more bisection step.
            let m = 0.5 * (a + b);
            if h(m).signum() == h(a).signum() {
                a = m;
            } else {
                b = m;
            }
            t = 0.5 * (a + b);
        } else {
            t = tn;
        }
    }
    Some(p + t * (q - p))
}

/// Winding number of a closed polyline around a point.
fn polyline_winding(polyline: &[C], q: C) -> f64 {
    let mut total = 0.0;
    for k in 0..polyline.len() {
        let a = polyline[k] - q;
        let b = polyline[(k + 1) % polyline.len()] - q;
        let cross = a.re * b.im - a.im * b.re;
        let dot = a.re * b.re + a.im * b.im;
        total += cross.atan2(dot);
    }
    total / (2.0 * std::f64::consts::PI)
}

fn polyline_signed_area(polyline: &[C]) -> f64 {
    let mut acc = 0.0;
    for k in 0..polyline.len() {
        let a = polyline[k];
        let b = polyline[(k + 1) % polyline.len()];
        acc += a.re * b.im - a.im * b.re;
    }
    0.5 * acc
}

/// Trace the closed contours of |G| = level over the window by marching
/// squares with Newton polish, and match each component to an end by
/// winding number.
pub fn trace_boundary(
    level: &LevelFunction,
    surface: &SurfaceModel,
    ends: &EndData,
    window: Window,
    resolution: usize,
    level_value: f64,
    dg_floor: f64,
) -> Result<BoundaryReport> {
    let grid = build_grid(level, window, resolution);
    let n = grid.n;
    // Segment soup keyed by cell-edge ids so that chaining is exact.
    type EdgeKey = (usize, usize, u8); // (i, j, 0 = horizontal from node, 1 = vertical)
    let mut crossings: BTreeMap<EdgeKey, C> = BTreeMap::new();
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    let cell_count = if window.periodic { n } else { n };
    let max_cell = if window.periodic { n } else { n };
    let _ = cell_count;
    for j in 0..max_cell {
        for i in 0..max_cell {
            if !window.periodic && (i + 1 > n || j + 1 > n) {
                continue;
            }
            let v00 = grid.value(i, j);
            let v10 = grid.value(i + 1, j);
            let v11 = grid.value(i + 1, j + 1);
            let v01 = grid.value(i, j + 1);
            let inside = [
                v00 < level_value,
                v10 < level_value,
                v11 < level_value,
                v01 < level_value,
            ];
            let case = inside
                .iter()
                .enumerate()
                .fold(0u8, |acc, (k, &b)| acc | ((b as u8) << k));
            if case == 0 || case == 15 {
                continue;
            }
            // Edge endpoints in node coordinates (wrapping handled by the
            // grid; geometry taken unwrapped from this cell's corner).
            let p00 = grid.node_pos(i, j);
            let p10 = grid.node_pos(i + 1, j);
            let p11 = grid.node_pos(i + 1, j + 1);
            let p01 = grid.node_pos(i, j + 1);
            let mut edge_pt = |key: EdgeKey, a: C, b: C| -> Result<C> {
                if let Some(&pt) = crossings.get(&key) {
                    return Ok(pt);
                }
                let pt = edge_crossing(level, a, b, level_value).ok_or_else(|| {
                    Error::MeshFailure(format!("no crossing on cell edge near {a}"))
                })?;
                crossings.insert(key, pt);
                Ok(pt)
            };
            // Edge keys: bottom (i,j,0), right (i+1,j,1), top (i,j+1,0),
            // left (i,j,1).
            let bottom = (i, j, 0u8);
            let right = (i + 1, j, 1u8);
            let top = (i, j + 1, 0u8);
            let left = (i, j, 1u8);
            let mut cut: Vec<EdgeKey> = Vec::new();
            if inside[0] != inside[1] {
                edge_pt(bottom, p00, p10)?;
                cut.push(bottom);
            }
            if inside[1] != inside[2] {
                edge_pt(right, p10, p11)?;
                cut.push(right);
            }
            if inside[3] != inside[2] {
                edge_pt(top, p01, p11)?;
                cut.push(top);
            }
            if inside[0] != inside[3] {
                edge_pt(left, p00, p01)?;
                cut.push(left);
            }
            match cut.len() {
                2 => segments.push((cut[0], cut[1])),
                4 => {
                    // Saddle cell: resolve the pairing with the center value.
                    let center = level.eval(0.25 * (p00 + p10 + p11 + p01)).norm();
                    let center_inside = center < level_value;
                    // inside corners are diagonal: (0,2) or (1,3).
                    if inside[0] == center_inside {
                        segments.push((bottom, left));
                        segments.push((right, top));
                    } else {
                        segments.push((bottom, right));
                        segments.push((top, left));
                    }
                }
                _ => {
                    return Err(Error::MeshFailure(format!(
                        "marching cell with {} crossings at ({i},{j})",
                        cut.len()
                    )))
                }
            }
        }
    }
    // Chain segments into closed polylines.
    let mut adj: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        adj.entry(*a).or_default().push(s);
        adj.entry(*b).or_default().push(s);
    }
    for (key, segs) in &adj {
        if segs.len() != 2 {
            return Err(Error::MeshFailure(format!(
                "contour chaining: edge {key:?} touched by {} segments",
                segs.len()
            )));
        }
    }
    let mut used = vec![false; segments.len()];
    let mut raw_components: Vec<Vec<EdgeKey>> = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        let mut chain = vec![segments[start].0, segments[start].1];
        used[start] = true;
        loop {
            let head = *chain.last().unwrap();
            let next_seg = adj[&head].iter().copied().find(|&s| !used[s]);
            match next_seg {
                Some(s) => {
                    used[s] = true;
                    let (a, b) = segments[s];
                    chain.push(if a == head { b } else { a });
                }
                None => break,
            }
        }
        // Closed: first == last key.
        if chain.first() == chain.last() {
            chain.pop();
        }
        raw_components.push(chain);
    }

    // Polish and assemble component data. Ends are wrapped into the window
    // so that winding numbers see the same representatives the contours
    // encircle.
    let finite_ends: Vec<Option<C>> = ends
        .ends()
        .iter()
        .map(|p| p.finite().map(|q| window.wrap(q)))
        .collect();
    let mut components: Vec<BoundaryComponent> = Vec::new();
    for chain in raw_components {
        let mut polyline: Vec<C> = chain.iter().map(|k| crossings[k]).collect();
        if polyline.len() < 3 {
            continue;
        }
        // Orient positively.
        if polyline_signed_area(&polyline) < 0.0 {
            polyline.reverse();
        }
        let min_dg = polyline
            .iter()
            .map(|&z| level.jet(z).d1.norm())
            .fold(f64::INFINITY, f64::min);
        components.push(BoundaryComponent {
            signed_area: polyline_signed_area(&polyline),
            polyline,
            end_index: usize::MAX,
            min_dg,
        });
    }
    if components.len() != ends.e() + 1 {
        return Err(Error::WrongTopology {
            expected: ends.e() + 1,
            found: components.len(),
        });
    }

    // Match components to ends bijectively by winding number. On the
    // sphere the component around infinity is the one enclosing every
    // finite end; break ties by area.
    let mut assigned = vec![false; ends.e() + 1];
    let mut order: Vec<usize> = (0..components.len()).collect();
    order.sort_by(|&a, &b| {
        components[b]
            .signed_area
            .partial_cmp(&components[a].signed_area)
            .unwrap()
    });
    for ci in order {
        let polyline = &components[ci].polyline;
        let mut winds = Vec::new();
        for (ei, fe) in finite_ends.iter().enumerate() {
            if let Some(q) = fe {
                let w = polyline_winding(polyline, *q).round() as i64;
                if w != 0 {
                    winds.push((ei, w));
                }
            }
        }
        let target = if ends.base == SurfacePoint::Infinity && winds.len() == finite_ends.len() - 1
        {
            // Winds around every finite end: only the infinity component
            // may do that, and only if unassigned.
            if winds.iter().all(|&(_, w)| w == 1)
                && !assigned[0]
                && components[ci].signed_area
                    == components
                        .iter()
                        .map(|c| c.signed_area)
                        .fold(f64::NEG_INFINITY, f64::max)
            {
                Some(0)
            } else if winds.len() == 1 {
                Some(winds[0].0)
            } else {
                None
            }
        } else if winds.len() == 1 && winds[0].1 == 1 {
            Some(winds[0].0)
        } else {
            None
        };
        match target {
            Some(ei) if !assigned[ei] => {
                assigned[ei] = true;
                components[ci].end_index = ei;
            }
            _ => {
                return Err(Error::WrongTopology {
                    expected: ends.e() + 1,
                    found: components.len(),
                });
            }
        }
    }
    let min_dg = components
        .iter()
        .map(|c| c.min_dg)
        .fold(f64::INFINITY, f64::min);
    if min_dg <= dg_floor {
        return Err(Error::BoundaryBranchPoint(min_dg));
    }
    let _ = surface;
    Ok(BoundaryReport {
        level: level_value,
        components,
        min_dg,
    })
}

/// Mesh vertex: position, level magnitude, boundary flag.
#[derive(Clone, Debug)]
pub struct MeshVertex {
    pub pos: C,
    pub level_abs: f64,
    pub boundary: bool,
}

#[derive(Clone, Debug)]
pub struct MeshEdge {
    pub a: usize,
    pub b: usize,
    /// Lattice shift applied to b's position to make the segment geometric
    /// (nonzero only across the torus seam).
    pub shift: C,
    pub tree: bool,
}

/// Conforming triangulation of the sublevel domain |G| < 1 with a spanning
/// tree for potential integration.
#[derive(Clone, Debug)]
pub struct DomainMesh {
    pub vertices: Vec<MeshVertex>,
    pub faces: Vec<[usize; 3]>,
    pub edges: Vec<MeshEdge>,
    pub root: usize,
    /// (parent vertex, edge index, edge points parent -> child) per vertex.
    pub tree_parent: Vec<Option<(usize, usize, bool)>>,
    /// BFS order of vertices starting at the root.
    pub tree_order: Vec<usize>,
    pub resolution: usize,
    pub min_angle_deg: f64,
    interior_cells: Vec<[C; 4]>,
}

impl DomainMesh {
    pub fn interior_vertices(&self) -> impl Iterator<Item = (usize, &MeshVertex)> {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.boundary)
    }

    /// Deterministic sample of fully interior grid cells (corner positions).
    pub fn interior_cell_sample(&self, max: usize) -> Vec<[C; 4]> {
        if self.interior_cells.is_empty() || max == 0 {
            return Vec::new();
        }
        let stride = (self.interior_cells.len() / max.max(1)).max(1);
        self.interior_cells
            .iter()
            .step_by(stride)
            .take(max)
            .copied()
            .collect()
    }

    fn edge_integral(
        &self,
        edge: &MeshEdge,
        psi: &(dyn Fn(C) -> [C; 3] + Sync),
        tol: f64,
    ) -> Result<[C; 3]> {
        let from = self.vertices[edge.a].pos;
        let to = self.vertices[edge.b].pos + edge.shift;
        let mut out = [C::ZERO; 3];
        for (k, slot) in out.iter_mut().enumerate() {
            let integrand = |t: f64| psi(from + t * (to - from))[k] * (to - from);
            let (v, _) = crate::quad::integrate(&integrand, 0.0, 1.0, tol)?;
            *slot = v;
        }
        Ok(out)
    }

    /// Rebuild the spanning tree from a different root (used to check that
    /// realizations are path-independent up to the residual periods).
    pub fn rebuild_tree(&mut self, root: usize) -> Result<()> {
        if root >= self.vertices.len() {
            return Err(Error::Validation(format!("root {root} out of range")));
        }
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.vertices.len()];
        for (ei, e) in self.edges.iter_mut().enumerate() {
            e.tree = false;
            adjacency[e.a].push((e.b, ei));
            adjacency[e.b].push((e.a, ei));
        }
        for adj in adjacency.iter_mut() {
            adj.sort();
        }
        let mut tree_parent: Vec<Option<(usize, usize, bool)>> = vec![None; self.vertices.len()];
        let mut visited = vec![false; self.vertices.len()];
        let mut tree_order = vec![root];
        visited[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &(w, ei) in &adjacency[v] {
                if !visited[w] {
                    visited[w] = true;
                    let forward = self.edges[ei].a == v;
                    tree_parent[w] = Some((v, ei, forward));
                    self.edges[ei].tree = true;
                    tree_order.push(w);
                    queue.push_back(w);
                }
            }
        }
        self.root = root;
        self.tree_parent = tree_parent;
        self.tree_order = tree_order;
        Ok(())
    }

    /// Integrate the three forms along the spanning tree, producing the
    /// complex potential at every vertex (zero at the root).
    pub fn integrate_potential(
        &self,
        psi: &(dyn Fn(C) -> [C; 3] + Sync),
        tol: f64,
    ) -> Result<Vec<[C; 3]>> {
        let tree_edges: Vec<usize> = self
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.tree)
            .map(|(i, _)| i)
            .collect();
        let integrals = crate::exec::map(&tree_edges, |&ei| {
            self.edge_integral(&self.edges[ei], psi, tol)
        });
        let mut by_edge: BTreeMap<usize, [C; 3]> = BTreeMap::new();
        for (&ei, integral) in tree_edges.iter().zip(integrals) {
            by_edge.insert(ei, integral?);
        }
        let mut potential = vec![[C::ZERO; 3]; self.vertices.len()];
        for &v in &self.tree_order {
            if let Some((parent, edge_idx, forward)) = self.tree_parent[v] {
                let i = by_edge[&edge_idx];
                let sign = if forward { 1.0 } else { -1.0 };
                for k in 0..3 {
                    potential[v][k] = potential[parent][k] + sign * i[k];
                }
            }
        }
        Ok(potential)
    }

    /// Single-valuedness defects of the projected coordinates over the
    /// non-tree edges.
    pub fn closure_defects(
        &self,
        psi: &(dyn Fn(C) -> [C; 3] + Sync),
        potential: &[[C; 3]],
        tol: f64,
        project: impl Fn(&[C; 3]) -> Vec<f64> + Sync,
    ) -> Result<Vec<f64>> {
        let non_tree: Vec<usize> = self
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.tree)
            .map(|(i, _)| i)
            .collect();
        let results = crate::exec::map(&non_tree, |&ei| -> Result<f64> {
            let e = &self.edges[ei];
            let integral = self.edge_integral(e, psi, tol)?;
            let via: [C; 3] = [
                potential[e.a][0] + integral[0],
                potential[e.a][1] + integral[1],
                potential[e.a][2] + integral[2],
            ];
            let pa = project(&via);
            let pb = project(&potential[e.b]);
            Ok(pa
                .iter()
                .zip(&pb)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt())
        });
        results.into_iter().collect()
    }
}

fn alloc_crossing(
    vertices: &mut Vec<MeshVertex>,
    crossing_vertex: &mut BTreeMap<(usize, usize), usize>,
    level: &LevelFunction,
    key: (usize, usize),
    pt: C,
) -> usize {
    if let Some(&v) = crossing_vertex.get(&key) {
        return v;
    }
    let vid = vertices.len();
    vertices.push(MeshVertex {
        pos: pt,
        level_abs: level.eval(pt).norm(),
        boundary: true,
    });
    crossing_vertex.insert(key, vid);
    vid
}

fn triangle_min_angle(a: C, b: C, cc: C) -> f64 {
    let sides = [(b - a).norm(), (cc - b).norm(), (a - cc).norm()];
    let mut min_angle = f64::INFINITY;
    for k in 0..3 {
        let (opp, s1, s2) = (sides[k], sides[(k + 1) % 3], sides[(k + 2) % 3]);
        let cosv = ((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)).clamp(-1.0, 1.0);
        min_angle = min_angle.min(cosv.acos());
    }
    min_angle.to_degrees()
}

/// Triangulate the sublevel set of the level function over the window.
pub fn mesh_domain(
    level: &LevelFunction,
    window: Window,
    resolution: usize,
    min_angle_floor_deg: f64,
) -> Result<DomainMesh> {
    let grid = build_grid(level, window, resolution);
    let n = grid.n;
    let node_id = |i: usize, j: usize| -> (usize, C) {
        // Returns canonical node and the shift that maps the canonical
        // position into this cell's frame.
        if window.periodic {
            let (ci, cj) = (i % n, j % n);
            let mut shift = C::ZERO;
            if i == n {
                shift += window.ex;
            }
            if j == n {
                shift += window.ey;
            }
            (cj * n + ci, shift)
        } else {
            (j * (n + 1) + i, C::ZERO)
        }
    };
    let node_count = if window.periodic {
        n * n
    } else {
        (n + 1) * (n + 1)
    };
    let node_inside: Vec<bool> = (0..node_count).map(|id| grid.values[id] < 1.0).collect();

    // Vertex table: grid vertices first, crossings appended.
    let mut vertex_of_node: Vec<Option<usize>> = vec![None; node_count];
    let mut vertices: Vec<MeshVertex> = Vec::new();
    for id in 0..node_count {
        if node_inside[id] {
            let (i, j) = if window.periodic {
                (id % n, id / n)
            } else {
                (id % (n + 1), id / (n + 1))
            };
            vertex_of_node[id] = Some(vertices.len());
            vertices.push(MeshVertex {
                pos: grid.node_pos(i, j),
                level_abs: grid.values[id],
                boundary: false,
            });
        }
    }
    let mut crossing_vertex: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut crossing_positions: BTreeMap<(usize, usize), C> = BTreeMap::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut face_shifts: Vec<[C; 3]> = Vec::new();
    let mut interior_cells: Vec<[C; 4]> = Vec::new();
    let mut min_angle = f64::INFINITY;

    let max_cell = n;
    for j in 0..max_cell {
        for i in 0..max_cell {
            if !window.periodic && (i == n || j == n) {
                continue;
            }
            let corner_idx = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let nodes: Vec<(usize, C)> = corner_idx.iter().map(|&(a, b)| node_id(a, b)).collect();
            let inside: Vec<bool> = nodes.iter().map(|&(id, _)| node_inside[id]).collect();
            let positions: Vec<C> = corner_idx
                .iter()
                .map(|&(a, b)| grid.window.point(a as f64 / n as f64, b as f64 / n as f64))
                .collect();
            let inside_count = inside.iter().filter(|&&b| b).count();
            if inside_count == 0 {
                continue;
            }
            if inside_count == 4 {
                interior_cells.push([positions[0], positions[1], positions[2], positions[3]]);
                // Two triangles, right-angled: min angle 45 degrees.
                let vids: Vec<usize> = nodes
                    .iter()
                    .map(|&(id, _)| vertex_of_node[id].unwrap())
                    .collect();
                let shifts: Vec<C> = nodes.iter().map(|&(_, s)| s).collect();
                faces.push([vids[0], vids[1], vids[2]]);
                face_shifts.push([shifts[0], shifts[1], shifts[2]]);
                faces.push([vids[0], vids[2], vids[3]]);
                face_shifts.push([shifts[0], shifts[2], shifts[3]]);
                min_angle = min_angle.min(45.0);
                continue;
            }
            // Partial cell: the seam must not intersect the boundary ring.
            if window.periodic && (i + 1 == n || j + 1 == n || i == 0 || j == 0) {
                let near_seam = nodes.iter().any(|&(_, s)| s.norm() > 0.0);
                if near_seam {
                    return Err(Error::MeshFailure(
                        "level boundary crosses the fundamental-domain seam; move the window"
                            .into(),
                    ));
                }
            }
            // Crossing positions keyed by the canonical node pair; vertex
            // allocation is deferred so that crossings dropped by the
            // sliver dedupe never enter the mesh.
            let crossing_pos = |crossing_positions: &mut BTreeMap<(usize, usize), C>,
                                ka: usize,
                                kb: usize|
             -> Result<((usize, usize), C)> {
                let (ida, _) = nodes[ka];
                let (idb, _) = nodes[kb];
                let key = (ida.min(idb), ida.max(idb));
                if let Some(&pt) = crossing_positions.get(&key) {
                    return Ok((key, pt));
                }
                let pt =
                    edge_crossing(level, positions[ka], positions[kb], 1.0).ok_or_else(|| {
                        Error::MeshFailure(format!(
                            "no boundary crossing on cell edge near {}",
                            positions[ka]
                        ))
                    })?;
                crossing_positions.insert(key, pt);
                Ok((key, pt))
            };
            // Walk the cell boundary: inside corners and crossings in order.
            #[derive(Clone, Copy)]
            enum PolyEntry {
                Corner(usize),
                Cross((usize, usize), C),
            }
            let cell_size = (window.ex.norm() / n as f64).max(window.ey.norm() / n as f64);
            let dedupe_tol = 2e-3 * cell_size;
            let diag_outside_center = inside_count == 2 && inside[0] == inside[2];
            let split_diagonal = diag_outside_center
                && level
                    .eval(0.25 * (positions[0] + positions[1] + positions[2] + positions[3]))
                    .norm()
                    >= 1.0;
            if split_diagonal {
                // Two disconnected corner triangles; skip slivers whose
                // crossings collapse onto the corner.
                for k in [0usize, 1, 2, 3] {
                    if !inside[k] {
                        continue;
                    }
                    let prev = (k + 3) % 4;
                    let next = (k + 1) % 4;
                    let (key_a, pa) = crossing_pos(&mut crossing_positions, k, next)?;
                    let (key_b, pb) = crossing_pos(&mut crossing_positions, prev, k)?;
                    let (idk, _) = nodes[k];
                    let corner = positions[k];
                    if (pa - corner).norm() < dedupe_tol || (pb - corner).norm() < dedupe_tol {
                        continue;
                    }
                    let ca = alloc_crossing(&mut vertices, &mut crossing_vertex, level, key_a, pa);
                    let cb = alloc_crossing(&mut vertices, &mut crossing_vertex, level, key_b, pb);
                    let vk = vertex_of_node[idk].unwrap();
                    min_angle = min_angle.min(triangle_min_angle(corner, pa, pb));
                    faces.push([vk, ca, cb]);
                    face_shifts.push([C::ZERO; 3]);
                }
                continue;
            }
            let mut walk: Vec<PolyEntry> = Vec::new();
            for k in 0..4 {
                if inside[k] {
                    walk.push(PolyEntry::Corner(k));
                }
                let next = (k + 1) % 4;
                if inside[k] != inside[next] {
                    let (key, pt) = crossing_pos(&mut crossing_positions, k, next)?;
                    walk.push(PolyEntry::Cross(key, pt));
                }
            }
            // Drop crossings that collapse onto the adjacent walk entry;
            // corners always win. Corner-cross pairs dedupe identically in
            // both cells sharing the edge. Cross-cross pairs (a contour
            // clipping just past an outside corner) are cell-local, so the
            // drop leaves a hairline crack of width below `dedupe_tol`
            // against the neighbor; potentials integrate over edges, so
            // the crack costs nothing.
            let entry_pos = |e: &PolyEntry| match *e {
                PolyEntry::Corner(k) => positions[k],
                PolyEntry::Cross(_, p) => p,
            };
            let mut kept: Vec<PolyEntry> = Vec::new();
            for e in &walk {
                let close_prev = kept
                    .last()
                    .map(|p| (entry_pos(p) - entry_pos(e)).norm() < dedupe_tol)
                    .unwrap_or(false);
                match e {
                    PolyEntry::Cross(..) if close_prev => continue,
                    PolyEntry::Corner(_) if close_prev => {
                        if matches!(kept.last(), Some(PolyEntry::Cross(..))) {
                            kept.pop();
                        }
                        kept.push(*e);
                    }
                    _ => kept.push(*e),
                }
            }
            // Cyclic closure across the walk wrap.
            while kept.len() >= 2 {
                let first = kept[0];
                let last = *kept.last().unwrap();
                if (entry_pos(&first) - entry_pos(&last)).norm() >= dedupe_tol {
                    break;
                }
                match (first, last) {
                    (_, PolyEntry::Cross(..)) => {
                        kept.pop();
                    }
                    (PolyEntry::Cross(..), PolyEntry::Corner(_)) => {
                        kept.remove(0);
                    }
                    _ => break,
                }
            }
            if kept.len() < 3 {
                continue;
            }
            let polygon: Vec<usize> = kept
                .iter()
                .map(|e| match *e {
                    PolyEntry::Corner(k) => {
                        let (idk, _) = nodes[k];
                        vertex_of_node[idk].unwrap()
                    }
                    PolyEntry::Cross(key, pt) => {
                        alloc_crossing(&mut vertices, &mut crossing_vertex, level, key, pt)
                    }
                })
                .collect();
            for t in 1..polygon.len() - 1 {
                let (a, b, cc) = (polygon[0], polygon[t], polygon[t + 1]);
                let ang = triangle_min_angle(vertices[a].pos, vertices[b].pos, vertices[cc].pos);
                // Hairline fans from cross-cross near-collisions carry no
                // area and stay out of the mesh and the quality statistic.
                if ang < 5e-3 {
                    continue;
                }
                min_angle = min_angle.min(ang);
                faces.push([a, b, cc]);
                face_shifts.push([C::ZERO; 3]);
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::MeshFailure("empty domain mesh".into()));
    }
    if min_angle < min_angle_floor_deg {
        return Err(Error::MeshFailure(format!(
            "mesh quality below floor: min angle {min_angle:.4} deg"
        )));
    }

    // Edge table from faces.
    let mut edge_map: BTreeMap<(usize, usize), (C, bool)> = BTreeMap::new();
    for (f, shifts) in faces.iter().zip(&face_shifts) {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let (sa, sb) = (shifts[k], shifts[(k + 1) % 3]);
            // Geometric segment runs pos[a] + sa -> pos[b] + sb. Normalize
            // to a canonical a < b with a shift on b.
            let (lo, hi, shift) = if a <= b {
                (a, b, sb - sa)
            } else {
                (b, a, sa - sb)
            };
            edge_map.entry((lo, hi)).or_insert((shift, false));
        }
    }
    let mut edges: Vec<MeshEdge> = edge_map
        .iter()
        .map(|(&(a, b), &(shift, _))| MeshEdge {
            a,
            b,
            shift,
            tree: false,
        })
        .collect();

    // BFS spanning tree from the vertex nearest the window center.
    let center = window.point(0.5, 0.5);
    let root = vertices
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.boundary)
        .min_by(|(_, x), (_, y)| {
            (x.pos - center)
                .norm()
                .partial_cmp(&(y.pos - center).norm())
                .unwrap()
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::MeshFailure("no interior vertices".into()))?;
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); vertices.len()];
    for (ei, e) in edges.iter().enumerate() {
        adjacency[e.a].push((e.b, ei));
        adjacency[e.b].push((e.a, ei));
    }
    for adj in adjacency.iter_mut() {
        adj.sort();
    }
    let mut tree_parent: Vec<Option<(usize, usize, bool)>> = vec![None; vertices.len()];
    let mut visited = vec![false; vertices.len()];
    let mut tree_order = vec![root];
    visited[root] = true;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &(w, ei) in &adjacency[v] {
            if !visited[w] {
                visited[w] = true;
                let forward = edges[ei].a == v;
                tree_parent[w] = Some((v, ei, forward));
                edges[ei].tree = true;
                tree_order.push(w);
                queue.push_back(w);
            }
        }
    }
    if visited.iter().any(|&b| !b) {
        // Disconnected leftovers (isolated slivers) are dropped from the
        // tree; fail loudly instead of integrating garbage.
        let missing = visited.iter().filter(|&&b| !b).count();
        return Err(Error::MeshFailure(format!(
            "mesh has {missing} vertices disconnected from the root"
        )));
    }
    Ok(DomainMesh {
        vertices,
        faces,
        edges,
        root,
        tree_parent,
        tree_order,
        resolution,
        min_angle_deg: min_angle,
        interior_cells,
    })
}

/// Annulus selection report.
#[derive(Clone, Debug)]
pub struct AnnulusChoice {
    pub r: f64,
    /// Min |dG| over both bounding contours and annulus grid samples.
    pub min_dg: f64,
    pub inner: BoundaryReport,
}

/// Pick the largest r from the scan such that |G| = r still traces e+1
/// clean components and |dG| stays above the floor on the annuli.
pub fn choose_r(
    level: &LevelFunction,
    surface: &SurfaceModel,
    ends: &EndData,
    window: Window,
    resolution: usize,
    scan: &[f64],
    outer: &BoundaryReport,
    dg_floor: f64,
) -> Result<AnnulusChoice> {
    let mut sorted: Vec<f64> = scan.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for &r in &sorted {
        if !(0.0 < r && r < 1.0) {
            continue;
        }
        let inner = match trace_boundary(level, surface, ends, window, resolution, r, dg_floor) {
            Ok(rep) => rep,
            Err(_) => continue,
        };
        // Sample |dG| over the annulus r <= |G| <= 1 between the contours.
        let mut min_dg = inner.min_dg.min(outer.min_dg);
        let steps = 24;
        for comp in &outer.components {
            for (k, &z) in comp.polyline.iter().enumerate() {
                if k % 8 != 0 {
                    continue;
                }
                // March inward from the unit level towards |G| = r.
                let mut p = z;
                for s in 1..=steps {
                    let target = 1.0 + (r - 1.0) * s as f64 / steps as f64;
                    match polish_to_level(level, p, target, 1e-10) {
                        Some(np) => {
                            p = np;
                            min_dg = min_dg.min(level.jet(p).d1.norm());
                        }
                        None => break,
                    }
                }
            }
        }
        if min_dg > dg_floor {
            return Ok(AnnulusChoice { r, min_dg, inner });
        }
    }
    Err(Error::NoValidAnnulus)
}

/// Constants of the integration-by-parts bound for one sampled pair (a, b):
/// |∫ a b| <= C1 C2 + L C1 C3 with C1 = max_s |∫_0^s a|, C2 = max |b|,
/// C3 = max |b'|.
#[derive(Clone, Debug)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub length: f64,
    pub bound: f64,
    pub lhs: f64,
}

/// Evaluate the bound constants on [0, L] and verify the inequality. The
/// derivative of b is taken from `b_prime` when supplied, otherwise by
/// central differences on the sample grid.
pub fn integration_by_parts_bound(
    a: &dyn Fn(f64) -> C,
    b: &dyn Fn(f64) -> C,
    b_prime: Option<&dyn Fn(f64) -> C>,
    length: f64,
    samples: usize,
    tol: f64,
) -> Result<BoundConstants> {
    let n = samples.max(16);
    let prefix = crate::quad::cumulative(a, length, n, tol)?;
    let c1 = prefix.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut c2 = 0.0f64;
    let mut c3 = 0.0f64;
    let h = length / (8.0 * n as f64);
    for k in 0..=n {
        let s = length * k as f64 / n as f64;
        c2 = c2.max(b(s).norm());
        let db = match b_prime {
            Some(bp) => bp(s),
            None => {
                let sp = (s + h).min(length);
                let sm = (s - h).max(0.0);
                (b(sp) - b(sm)) / (sp - sm)
            }
        };
        c3 = c3.max(db.norm());
    }
    let integrand = |t: f64| a(t) * b(t);
    let (total, _) = crate::quad::integrate(&integrand, 0.0, length, tol)?;
    let lhs = total.norm();
    let bound = c1 * c2 + length * c1 * c3;
    if lhs > bound + 1e-8 {
        return Err(Error::NumericalInconsistency(format!(
            "integration-by-parts bound violated: |∫ab| = {lhs} > {bound}"
        )));
    }
    Ok(BoundConstants {
        c1,
        c2,
        c3,
        length,
        bound,
        lhs,
    })
}

/// A radial segment lifted through the covering G.
#[derive(Clone, Debug)]
pub struct LiftedSegment {
    pub ts: Vec<f64>,
    pub points: Vec<C>,
    pub max_defect: f64,
}

/// Lift t -> sigma(t) through G starting at q with G(q) = sigma(0), by an
/// adaptive predictor-corrector.
pub fn lift_segment(
    level: &LevelFunction,
    q: C,
    sigma: &dyn Fn(f64) -> C,
    sigma_dot: &dyn Fn(f64) -> C,
) -> Result<LiftedSegment> {
    let start_defect = (level.eval(q) - sigma(0.0)).norm();
    if start_defect > 1e-8 {
        return Err(Error::LiftFailure(format!(
            "start point does not project to sigma(0): defect {start_defect:.3e}"
        )));
    }
    let mut ts = vec![0.0];
    let mut points = vec![q];
    let mut max_defect: f64 = start_defect;
    let mut t = 0.0f64;
    let mut dt: f64 = 1.0 / 64.0;
    let mut steps = 0usize;
    while t < 1.0 {
        steps += 1;
        if steps > 20_000 {
            return Err(Error::LiftFailure("step limit exceeded".into()));
        }
        let dt_eff = dt.min(1.0 - t);
        let z = *points.last().unwrap();
        let d1 = level.jet(z).d1;
        if d1.norm() < 1e-14 {
            return Err(Error::LiftFailure(format!(
                "covering derivative vanished near {z}"
            )));
        }
        let predictor = z + sigma_dot(t) * dt_eff / d1;
        let target = sigma(t + dt_eff);
        match crate::numeric::newton_scalar(|w| level.jet(w), predictor, target, 1e-13, 12) {
            Some((zn, res)) if res < 1e-10 && (zn - z).norm() < 0.2 => {
                t += dt_eff;
                ts.push(t);
                points.push(zn);
                max_defect = max_defect.max((level.eval(zn) - sigma(t)).norm());
                dt = (dt * 1.4).min(1.0 / 32.0);
            }
            _ => {
                dt *= 0.5;
                if dt < 1e-9 {
                    return Err(Error::LiftFailure(format!(
                        "corrector stalled at t = {t:.6}"
                    )));
                }
            }
        }
    }
    Ok(LiftedSegment {
        ts,
        points,
        max_defect,
    })
}

impl LiftedSegment {
    /// Evaluate the lift at an arbitrary parameter by Newton correction
    /// from the nearest stored node.
    pub fn at(&self, level: &LevelFunction, sigma: &dyn Fn(f64) -> C, t: f64) -> Result<C> {
        let idx = match self.ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let seed = self.points[idx.min(self.points.len() - 1)];
        crate::numeric::newton_scalar(|w| level.jet(w), seed, sigma(t), 1e-13, 30)
            .map(|(z, _)| z)
            .ok_or_else(|| Error::LiftFailure(format!("re-correction failed at t = {t}")))
    }
}

/// One certified radial segment.
#[derive(Clone, Debug)]
pub struct SegmentBound {
    pub end_index: usize,
    pub q: C,
    pub q1: C,
    /// Per-form integration-by-parts pieces (psi1 minus/plus, psi2
    /// minus/plus, psi3).
    pub pieces: Vec<BoundConstants>,
    /// Aggregated bound for |X(q1) - X(q)| in the target lift norm.
    pub bound: f64,
    /// Directly integrated |X(q1) - X(q)| along the lifted path.
    pub direct: f64,
    pub lift_defect: f64,
    /// Worst disagreement between the pulled-back factorized route and the
    /// chart-space route, per form component.
    pub route_disagreement: f64,
}

/// Shared sup constants of one factorization piece over the whole annulus:
/// C1 from the maximum principle applied to the disk potential, C2 and C3
/// from dense sampling of the covering data.
#[derive(Clone, Debug)]
pub struct SharedPieceBound {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub bound: f64,
}

/// Boundedness certificate: compact-core bound plus per-segment
/// integration-by-parts bounds on the annuli.
#[derive(Clone, Debug)]
pub struct BoundednessCertificate {
    pub r: f64,
    pub k0: f64,
    pub min_dg_annulus: f64,
    pub segments: Vec<SegmentBound>,
    /// Shared sup constants per piece, valid for every radial segment.
    pub shared: Vec<SharedPieceBound>,
    /// Segment variation bound from the shared constants, valid for every
    /// annulus point.
    pub shared_bound: f64,
    /// K0 + shared bound: the certified global estimate.
    pub global_bound: f64,
    /// Direct max lift norm over all mesh vertices.
    pub mesh_max: f64,
}

struct PieceSpec {
    /// Index of the form component this piece contributes to.
    component: usize,
    /// Weight applied to the piece when reassembling the component.
    weight: f64,
    /// Disk factor: (phi1 - i phi2), (phi1 + i phi2), or phi3.
    kind: PieceKind,
}

#[derive(Clone, Copy, PartialEq)]
enum PieceKind {
    Minus,
    Plus,
    Phi3,
}

fn piece_table(target: Target) -> Vec<PieceSpec> {
    let mut out = vec![
        PieceSpec {
            component: 0,
            weight: 0.5,
            kind: PieceKind::Minus,
        },
        PieceSpec {
            component: 0,
            weight: 0.5,
            kind: PieceKind::Plus,
        },
        PieceSpec {
            component: 1,
            weight: 0.5,
            kind: PieceKind::Minus,
        },
        PieceSpec {
            component: 1,
            weight: 0.5,
            kind: PieceKind::Plus,
        },
    ];
    if target != Target::C2 {
        out.push(PieceSpec {
            component: 2,
            weight: 1.0,
            kind: PieceKind::Phi3,
        });
    }
    out
}

/// Certify boundedness of the realized immersion: bound the compact core by
/// its mesh maximum and every annulus point through lifted radial segments
/// and the integration-by-parts constants.
#[allow(clippy::too_many_arguments)]
pub fn certify_bounded(
    realization: &Realization,
    mesh: &DomainMesh,
    data: &DeformedData,
    ends: &EndData,
    outer: &BoundaryReport,
    annulus: &AnnulusChoice,
    segments_per_end: usize,
    seed: u64,
) -> Result<BoundednessCertificate> {
    let r = annulus.r;
    let level = &data.level;
    // Compact-core bound from mesh vertices with |G| <= r.
    let mut k0 = 0.0f64;
    let mut mesh_max = 0.0f64;
    for (i, v) in mesh.vertices.iter().enumerate() {
        let norm = realization.lift_norm(i);
        mesh_max = mesh_max.max(norm);
        if v.level_abs <= r {
            k0 = k0.max(norm);
        }
    }
    // Shared sup constants over the whole annulus.
    //
    // C1: max_s |∫_0^s a| = |P(sigma(s)) - P(sigma(0))| <= 2 max |P| over
    // the closed disk, where P is the disk potential of the piece; the max
    // sits on the boundary circle.
    let pieces_spec = piece_table(realization.target);
    let mut disk_potential_max = [0.0f64; 3]; // minus, plus, phi3
    {
        let disk = &data.disk;
        for k in 0..256 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 256.0;
            let dir = c(th.cos(), th.sin());
            let mut pot = [C::ZERO; 3];
            for (pi, phi) in disk.phi.iter().enumerate() {
                let integrand = |t: f64| phi.jet(t * dir).v * dir;
                let (v, _) = crate::quad::integrate(&integrand, 0.0, 1.0, 1e-11)?;
                pot[pi] = v;
            }
            disk_potential_max[0] =
                disk_potential_max[0].max((pot[0] - crate::numeric::I * pot[1]).norm());
            disk_potential_max[1] =
                disk_potential_max[1].max((pot[0] + crate::numeric::I * pot[1]).norm());
            disk_potential_max[2] = disk_potential_max[2].max(pot[2].norm());
        }
    }
    // C2, C3: sups of |b-tilde| and |b-tilde' / G'| over annulus samples
    // (mesh vertices in the ring plus both traced contours), times the
    // worst segment speed 1 - r.
    let mut annulus_samples: Vec<C> = mesh
        .vertices
        .iter()
        .filter(|v| v.level_abs >= r && v.level_abs <= 1.0)
        .map(|v| v.pos)
        .collect();
    for comp in outer
        .components
        .iter()
        .chain(annulus.inner.components.iter())
    {
        annulus_samples.extend(comp.polyline.iter().copied());
    }
    let b_sups = crate::exec::map(&annulus_samples, |&p| {
        let lj = data.level.jet(p);
        let hj = data.gauge.h_jet(p);
        let fj = data.df.coeff_jet(p);
        let mut out = [[0.0f64; 2]; 3];
        for (idx, kind) in [PieceKind::Minus, PieceKind::Plus, PieceKind::Phi3]
            .into_iter()
            .enumerate()
        {
            let (hf, hf_d) = match kind {
                PieceKind::Minus => (1.0 / hj.v, -hj.d1 / (hj.v * hj.v)),
                PieceKind::Plus => (hj.v, hj.d1),
                PieceKind::Phi3 => (C::ONE, C::ZERO),
            };
            let b = hf * fj.v / lj.d1;
            let b_surf_d =
                hf_d * fj.v / lj.d1 + hf * fj.d1 / lj.d1 - hf * fj.v * lj.d2 / (lj.d1 * lj.d1);
            out[idx] = [b.norm(), (b_surf_d / lj.d1).norm()];
        }
        out
    });
    let mut shared_c2 = [0.0f64; 3];
    let mut shared_c3 = [0.0f64; 3];
    for s in &b_sups {
        for k in 0..3 {
            shared_c2[k] = shared_c2[k].max(s[k][0]);
            shared_c3[k] = shared_c3[k].max(s[k][1] * (1.0 - r));
        }
    }
    let kind_index = |kind: PieceKind| match kind {
        PieceKind::Minus => 0usize,
        PieceKind::Plus => 1,
        PieceKind::Phi3 => 2,
    };
    let mut shared = Vec::new();
    let mut shared_components = [0.0f64; 3];
    for spec in &pieces_spec {
        let ki = kind_index(spec.kind);
        // a(t) carries the segment speed |sigma'| <= 1 - r as well; it is
        // already inside the disk potential difference bound, which is
        // parametrization-free.
        let c1 = 2.0 * disk_potential_max[ki];
        let c2 = shared_c2[ki];
        let c3 = shared_c3[ki];
        let bound = c1 * c2 + c1 * c3;
        shared_components[spec.component] += spec.weight * bound;
        shared.push(SharedPieceBound { c1, c2, c3, bound });
    }
    let active_components: &[usize] = match realization.target {
        Target::C2 => &[0, 1],
        _ => &[0, 1, 2],
    };
    let shared_bound = active_components
        .iter()
        .map(|&k| shared_components[k] * shared_components[k])
        .sum::<f64>()
        .sqrt();

    let mut rng = crate::numeric::SplitMix64::new(seed);
    let mut segments: Vec<SegmentBound> = Vec::new();
    // Root potential offset: the potential is zero at the mesh root, and
    // the segment endpoints are compared in the same branch.
    for comp in &outer.components {
        let end_index = comp.end_index;
        for _ in 0..segments_per_end {
            // Base point q: pull a boundary polyline point slightly inside
            // the annulus.
            let pick = (rng.next_f64() * comp.polyline.len() as f64) as usize;
            let zb = comp.polyline[pick.min(comp.polyline.len() - 1)];
            let target_level = 1.0 - 0.35 * (1.0 - r);
            let q = polish_to_level(level, zb, target_level, 1e-12).ok_or_else(|| {
                Error::LiftFailure("could not pull a base point into the annulus".into())
            })?;
            let gq = level.eval(q);
            let sigma_end = r * gq / gq.norm();
            let sigma = move |t: f64| gq + t * (sigma_end - gq);
            let sigma_dot = move |_t: f64| sigma_end - gq;
            let lifted = lift_segment(level, q, &sigma, &sigma_dot)?;
            let q1 = *lifted.points.last().unwrap();

            // Factorized pieces: a(t) from the disk data along sigma, b(t)
            // from the covering data along the lift.
            let disk = &data.disk;
            let gauge = &data.gauge;
            let df = &data.df;
            let lift_at = |t: f64| lifted.at(level, &sigma, t);
            let b_fn = |kind: PieceKind, t: f64| -> Result<(C, C)> {
                // Returns (b(t), db/dt).
                let p = lift_at(t)?;
                let lj = level.jet(p);
                let hj = gauge.h_jet(p);
                let fj = df.coeff_jet(p);
                let (hf, hf_d) = match kind {
                    PieceKind::Minus => (1.0 / hj.v, -hj.d1 / (hj.v * hj.v)),
                    PieceKind::Plus => (hj.v, hj.d1),
                    PieceKind::Phi3 => (C::ONE, C::ZERO),
                };
                let b = hf * fj.v / lj.d1;
                let b_surf_d =
                    hf_d * fj.v / lj.d1 + hf * fj.d1 / lj.d1 - hf * fj.v * lj.d2 / (lj.d1 * lj.d1);
                let db_dt = b_surf_d * sigma_dot(t) / lj.d1;
                Ok((b, db_dt))
            };
            let a_fn = |kind: PieceKind, t: f64| -> C {
                let w = sigma(t);
                let p1 = disk.phi[0].eval(w);
                let p2 = disk.phi[1].eval(w);
                let p3 = disk.phi[2].eval(w);
                let base = match kind {
                    PieceKind::Minus => p1 - crate::numeric::I * p2,
                    PieceKind::Plus => p1 + crate::numeric::I * p2,
                    PieceKind::Phi3 => p3,
                };
                base * sigma_dot(t)
            };

            let mut pieces: Vec<BoundConstants> = Vec::new();
            let mut component_bounds = [0.0f64; 3];
            let mut component_factorized = [C::ZERO; 3];
            for spec in &pieces_spec {
                let a = |t: f64| a_fn(spec.kind, t);
                let b = |t: f64| b_fn(spec.kind, t).map(|(v, _)| v).unwrap_or(C::ZERO);
                let bp = |t: f64| b_fn(spec.kind, t).map(|(_, d)| d).unwrap_or(C::ZERO);
                let bc = integration_by_parts_bound(&a, &b, Some(&bp), 1.0, 192, 1e-11)?;
                component_bounds[spec.component] += spec.weight * bc.bound;
                // Signed reassembly of the factorized integral: psi1 gets
                // (minus + plus)/2, psi2 gets i (minus - plus)/2, psi3 the
                // plain piece.
                let integrand = |t: f64| a(t) * b(t);
                let (raw, _) = crate::quad::integrate(&integrand, 0.0, 1.0, 1e-11)?;
                let signed = match (spec.component, spec.kind) {
                    (0, PieceKind::Minus) => 0.5 * raw,
                    (0, PieceKind::Plus) => 0.5 * raw,
                    (1, PieceKind::Minus) => 0.5 * crate::numeric::I * raw,
                    (1, PieceKind::Plus) => -0.5 * crate::numeric::I * raw,
                    (2, _) => raw,
                    _ => unreachable!(),
                };
                component_factorized[spec.component] += signed;
                pieces.push(bc);
            }

            // Direct chart-space route along the lifted polyline.
            let mut direct_components = [C::ZERO; 3];
            for w in lifted.points.windows(2) {
                let (from, to) = (w[0], w[1]);
                for (k, slot) in direct_components.iter_mut().enumerate() {
                    let integrand = |t: f64| data.psi(from + t * (to - from))[k] * (to - from);
                    let (v, _) = crate::quad::integrate(&integrand, 0.0, 1.0, 1e-12)?;
                    *slot += v;
                }
            }
            let active: &[usize] = match realization.target {
                Target::C2 => &[0, 1],
                _ => &[0, 1, 2],
            };
            let mut route_disagreement = 0.0f64;
            for &k in active {
                route_disagreement =
                    route_disagreement.max((component_factorized[k] - direct_components[k]).norm());
            }
            let bound = active
                .iter()
                .map(|&k| component_bounds[k] * component_bounds[k])
                .sum::<f64>()
                .sqrt();
            let direct = active
                .iter()
                .map(|&k| direct_components[k].norm_sqr())
                .sum::<f64>()
                .sqrt();
            if direct > bound + 1e-8 {
                return Err(Error::CertificateInconsistent(format!(
                    "direct segment variation {direct} exceeds its bound {bound}"
                )));
            }
            segments.push(SegmentBound {
                end_index,
                q,
                q1,
                pieces,
                bound,
                direct,
                lift_defect: lifted.max_defect,
                route_disagreement,
            });
        }
    }
    // Sampled per-segment bounds must sit below the shared-sup bound.
    for s in &segments {
        if s.bound > shared_bound * (1.0 + 1e-6) + 1e-9 {
            return Err(Error::CertificateInconsistent(format!(
                "segment bound {} exceeds the shared sup bound {shared_bound}",
                s.bound
            )));
        }
    }
    let global_bound = k0 + shared_bound;
    if mesh_max > global_bound + 1e-6 {
        return Err(Error::CertificateInconsistent(format!(
            "mesh max {mesh_max} exceeds the certified bound {global_bound}"
        )));
    }
    let _ = ends;
    Ok(BoundednessCertificate {
        r,
        k0,
        min_dg_annulus: annulus.min_dg,
        segments,
        shared,
        shared_bound,
        global_bound,
        mesh_max,
    })
}
