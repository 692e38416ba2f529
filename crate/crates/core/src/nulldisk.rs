//! The initial bounded null holomorphic disk and its normalization by a
//! complex orthogonal transformation.
//!
//! Bundled sample disks are bounded but not complete; completeness of the
//! final surfaces is certified downstream through the metric inequality
//! proxy, never through the disk itself.

use crate::numeric::{c, Jet, Poly, C, I};
use crate::{Error, Result};
use std::sync::Arc;

/// An analytic function on a disk of radius > 1 with jet access.
#[derive(Clone)]
pub struct DiskFunction {
    jet: Arc<dyn Fn(C) -> Jet + Send + Sync>,
}

impl DiskFunction {
    pub fn new(jet: Arc<dyn Fn(C) -> Jet + Send + Sync>) -> Self {
        DiskFunction { jet }
    }

    pub fn polynomial(coeffs: Vec<C>) -> Self {
        let p = Poly::new(coeffs);
        DiskFunction {
            jet: Arc::new(move |z| p.jet(z)),
        }
    }

    pub fn constant(v: C) -> Self {
        DiskFunction {
            jet: Arc::new(move |_| Jet::constant(v)),
        }
    }

    pub fn jet(&self, z: C) -> Jet {
        (self.jet)(z)
    }

    pub fn eval(&self, z: C) -> C {
        self.jet(z).v
    }

    fn combine2(a: &DiskFunction, b: &DiskFunction, op: fn(Jet, Jet) -> Jet) -> DiskFunction {
        let (ja, jb) = (a.jet.clone(), b.jet.clone());
        DiskFunction {
            jet: Arc::new(move |z| op(ja(z), jb(z))),
        }
    }

    pub fn add(&self, o: &DiskFunction) -> DiskFunction {
        Self::combine2(self, o, Jet::add)
    }

    pub fn sub(&self, o: &DiskFunction) -> DiskFunction {
        Self::combine2(self, o, Jet::sub)
    }

    pub fn mul(&self, o: &DiskFunction) -> DiskFunction {
        Self::combine2(self, o, Jet::mul)
    }

    pub fn div(&self, o: &DiskFunction) -> DiskFunction {
        Self::combine2(self, o, Jet::div)
    }

    pub fn scale(&self, s: C) -> DiskFunction {
        let j = self.jet.clone();
        DiskFunction {
            jet: Arc::new(move |z| j(z).scale(s)),
        }
    }

    /// Linear combination sum coeff_i * f_i.
    pub fn linear(terms: Vec<(C, DiskFunction)>) -> DiskFunction {
        DiskFunction {
            jet: Arc::new(move |z| {
                let mut acc = Jet::constant(C::ZERO);
                for (s, f) in &terms {
                    acc = acc.add(f.jet(z).scale(*s));
                }
                acc
            }),
        }
    }
}

/// Disk automorphism psi(z) = (z + z0) / (1 + conj(z0) z), mapping 0 to z0,
/// with jets up to third derivative (composed 1-form data carries the psi'
/// factor, which costs one extra derivative).
#[derive(Clone, Copy, Debug)]
pub struct DiskAutomorphism {
    pub z0: C,
}

impl DiskAutomorphism {
    pub fn map(&self, z: C) -> C {
        (z + self.z0) / (C::ONE + self.z0.conj() * z)
    }

    pub fn jet(&self, z: C) -> Jet {
        let den = C::ONE + self.z0.conj() * z;
        let one_minus = C::ONE - self.z0 * self.z0.conj();
        Jet::new(
            (z + self.z0) / den,
            one_minus / (den * den),
            -2.0 * self.z0.conj() * one_minus / (den * den * den),
        )
    }

    /// Jet of psi' itself (psi', psi'', psi''').
    pub fn deriv_jet(&self, z: C) -> Jet {
        let den = C::ONE + self.z0.conj() * z;
        let one_minus = C::ONE - self.z0 * self.z0.conj();
        let cbar = self.z0.conj();
        Jet::new(
            one_minus / (den * den),
            -2.0 * cbar * one_minus / (den * den * den),
            6.0 * cbar * cbar * one_minus / (den * den * den * den),
        )
    }
}

/// Initial null disk data: Weierstrass pair, derived triple, boundedness
/// radius and normalization flag.
#[derive(Clone)]
pub struct NullDiskData {
    pub g: DiskFunction,
    pub omega0: DiskFunction,
    pub phi: [DiskFunction; 3],
    /// Max of |X0| over a dense boundary sample.
    pub radius_bound: f64,
    pub normalized: bool,
}

/// Record of the normalizing transformation.
#[derive(Clone, Debug)]
pub struct NormalizationRecord {
    pub z0: C,
    /// phi2(z0)/phi1(z0) when the rotation step applied.
    pub rotation_c: Option<C>,
    /// The full complex orthogonal matrix, flip included.
    pub matrix: [[C; 3]; 3],
    /// Which square root of 1 + c^2 was taken; either branch is orthogonal.
    pub branch_note: &'static str,
    pub flipped: bool,
}

impl NormalizationRecord {
    pub fn identity(z0: C) -> Self {
        let mut m = [[C::ZERO; 3]; 3];
        for (k, row) in m.iter_mut().enumerate() {
            row[k] = C::ONE;
        }
        NormalizationRecord {
            z0,
            rotation_c: None,
            matrix: m,
            branch_note: "identity",
            flipped: false,
        }
    }

    /// Max entry of |T^t T - I|.
    pub fn orthogonality_defect(&self) -> f64 {
        let m = &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = C::ZERO;
                for k in 0..3 {
                    acc += m[k][i] * m[k][j];
                }
                let expected = if i == j { C::ONE } else { C::ZERO };
                worst = worst.max((acc - expected).norm());
            }
        }
        worst
    }

    /// Frobenius norm of T, an upper bound for the operator norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.matrix
            .iter()
            .flatten()
            .map(|e| e.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

fn derive_phi(g: &DiskFunction, omega0: &DiskFunction) -> [DiskFunction; 3] {
    let one = DiskFunction::constant(C::ONE);
    let g2 = g.mul(g);
    let phi1 = one.sub(&g2).mul(omega0);
    let phi2 = one.add(&g2).mul(omega0).scale(I);
    let phi3 = g.mul(omega0).scale(c(2.0, 0.0));
    [phi1, phi2, phi3]
}

/// Max of |X0| = |∫_0^z phi| over boundary samples, by radial quadrature.
fn boundedness_radius(phi: &[DiskFunction; 3], samples: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..samples {
        let th = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
        let dir = c(th.cos(), th.sin());
        let mut norm_sq = 0.0;
        for p in phi {
            let jf = p.jet.clone();
            let integrand = move |t: f64| jf(t * dir).v * dir;
            let (v, _) = crate::quad::integrate(&integrand, 0.0, 1.0, 1e-11)?;
            norm_sq += v.norm_sqr();
        }
        worst = worst.max(norm_sq.sqrt());
    }
    Ok(worst)
}

fn sample_scale(phi: &[DiskFunction; 3]) -> f64 {
    let mut scale = 0.0f64;
    for k in 0..24 {
        let th = 2.0 * std::f64::consts::PI * k as f64 / 24.0;
        let z = 0.6 * c(th.cos(), th.sin());
        for p in phi {
            scale = scale.max(p.eval(z).norm());
        }
    }
    scale.max(1e-30)
}

/// Assemble the disk data from a Weierstrass pair; checks the null identity
/// and rejects planar images.
pub fn load_disk(g: DiskFunction, omega0: DiskFunction) -> Result<NullDiskData> {
    let phi = derive_phi(&g, &omega0);
    let scale = sample_scale(&phi);
    // Null identity at sample points (guards exotic user-supplied data; the
    // derived triple satisfies it identically).
    for k in 0..64 {
        let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
        let z = 0.77 * c(th.cos(), th.sin());
        let s: C = phi
            .iter()
            .map(|p| {
                let v = p.eval(z);
                v * v
            })
            .sum();
        if s.norm() > 1e-10 * scale * scale {
            return Err(Error::InconsistentData(format!(
                "null identity violated at {z}: residual {s}"
            )));
        }
    }
    // Planarity: the image lies in a plane iff g is constant (or the data
    // is degenerate with omega0 = 0).
    let mut g_spread = 0.0f64;
    let mut omega_max = 0.0f64;
    for k in 0..48 {
        let th = 2.0 * std::f64::consts::PI * k as f64 / 48.0;
        let z = 0.7 * c(th.cos(), th.sin());
        g_spread = g_spread.max((g.eval(z) - g.eval(C::ZERO)).norm());
        omega_max = omega_max.max(omega0.eval(z).norm());
    }
    if omega_max < 1e-14 || g_spread < 1e-12 * (1.0 + g.eval(C::ZERO).norm()) {
        return Err(Error::PlanarData);
    }
    let radius_bound = boundedness_radius(&phi, 96)?;
    Ok(NullDiskData {
        g,
        omega0,
        phi,
        radius_bound,
        normalized: false,
    })
}

/// Bundled sample disks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BundledDisk {
    /// g = z, omega0 = 1.
    GzOmega1,
    /// g = z^2, omega0 = 1 + z/2.
    Gz2OmegaHalf,
}

pub fn bundled_disk(kind: BundledDisk) -> NullDiskData {
    let (g, w) = match kind {
        BundledDisk::GzOmega1 => (
            DiskFunction::polynomial(vec![C::ZERO, C::ONE]),
            DiskFunction::constant(C::ONE),
        ),
        BundledDisk::Gz2OmegaHalf => (
            DiskFunction::polynomial(vec![C::ZERO, C::ZERO, C::ONE]),
            DiskFunction::polynomial(vec![C::ONE, c(0.5, 0.0)]),
        ),
    };
    load_disk(g, w).expect("bundled disks are valid")
}

/// The five normalization conditions at the origin: worst relative defect
/// of the equalities, |phi3(0)| and |phi3'(0)|.
pub fn normalization_defect(disk: &NullDiskData) -> (f64, f64, f64) {
    let j1 = disk.phi[0].jet(C::ZERO);
    let j2 = disk.phi[1].jet(C::ZERO);
    let j3 = disk.phi[2].jet(C::ZERO);
    let scale = j3.v.norm().max(j3.d1.norm()).max(1e-30);
    let eq = (j1.v.norm() / scale)
        .max((j2.v - I * j3.v).norm() / scale)
        .max((j2.d1 - I * j3.d1).norm() / scale);
    (eq, j3.v.norm(), j3.d1.norm())
}

fn apply_matrix(m: &[[C; 3]; 3], phi: &[DiskFunction; 3]) -> [DiskFunction; 3] {
    let mut out = Vec::with_capacity(3);
    for row in m {
        out.push(DiskFunction::linear(vec![
            (row[0], phi[0].clone()),
            (row[1], phi[1].clone()),
            (row[2], phi[2].clone()),
        ]));
    }
    [out[0].clone(), out[1].clone(), out[2].clone()]
}

fn recenter(phi: &[DiskFunction; 3], z0: C) -> [DiskFunction; 3] {
    let auto = DiskAutomorphism { z0 };
    let mut out = Vec::with_capacity(3);
    for p in phi {
        let jf = p.jet.clone();
        out.push(DiskFunction::new(Arc::new(move |z| {
            let psi = auto.jet(z);
            let outer = jf(psi.v);
            outer.compose(psi).mul(auto.deriv_jet(z))
        })));
    }
    [out[0].clone(), out[1].clone(), out[2].clone()]
}

/// Normalize the disk: find z0, rotate by the explicit complex orthogonal
/// matrix, flip the second coordinate if needed, and recenter so the
/// distinguished point sits at the origin.
///
/// After normalization: phi1(0) = 0, phi3(0) != 0, phi3'(0) != 0,
/// phi2(0) = i phi3(0) and phi2'(0) = i phi3'(0). The derivative relation
/// with this sign is the one forced by differentiating the null identity
/// once the value relation holds.
pub fn normalize_disk(
    disk: &NullDiskData,
    z0_hint: Option<C>,
) -> Result<(NullDiskData, NormalizationRecord)> {
    // Idempotence: already-normalized data passes through untouched.
    let (eq, m3, m3d) = normalization_defect(disk);
    if eq < 1e-13 && m3 > 1e-12 && m3d > 1e-12 {
        let mut out = disk.clone();
        out.normalized = true;
        return Ok((out, NormalizationRecord::identity(C::ZERO)));
    }

    let scale = sample_scale(&disk.phi);
    let score = |z: C| -> f64 {
        let j1 = disk.phi[0].jet(z);
        let j2 = disk.phi[1].jet(z);
        let j3 = disk.phi[2].jet(z);
        (j3.v.norm() / scale)
            .min(j3.d1.norm() / scale)
            .min((j1.v - I * j2.v).norm() / scale)
            .min((j1.v + I * j2.v).norm() / scale)
    };
    let z0 = match z0_hint.filter(|&h| score(h) > 1e-8) {
        Some(h) => h,
        None => {
            let mut best = C::ZERO;
            let mut best_score = -1.0;
            for &r in &[0.7, 0.5, 0.35] {
                for k in 0..48 {
                    let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.17) / 48.0;
                    let cand = r * c(th.cos(), th.sin());
                    let sc = score(cand);
                    if sc > best_score {
                        best_score = sc;
                        best = cand;
                    }
                }
            }
            if best_score <= 1e-8 {
                return Err(Error::NormalizationFailed(format!(
                    "no sample point with usable margin; best score {best_score:.3e}"
                )));
            }
            best
        }
    };

    let p1 = disk.phi[0].eval(z0);
    let p2 = disk.phi[1].eval(z0);
    let (rotation, rotation_c) = if p1.norm() > 1e-12 * scale {
        let cc = p2 / p1;
        let root = (C::ONE + cc * cc).sqrt();
        if root.norm() < 1e-10 {
            return Err(Error::NormalizationFailed(
                "degenerate rotation: 1 + c^2 vanished at the chosen point".into(),
            ));
        }
        let s = C::ONE / root;
        (
            [
                [-cc * s, s, C::ZERO],
                [-s, -cc * s, C::ZERO],
                [C::ZERO, C::ZERO, C::ONE],
            ],
            Some(cc),
        )
    } else {
        (NormalizationRecord::identity(z0).matrix, None)
    };
    let rotated = apply_matrix(&rotation, &disk.phi);
    // Nullity now forces phi2 = ±i phi3 at z0; flip onto the + branch.
    let r2 = rotated[1].eval(z0);
    let r3 = rotated[2].eval(z0);
    let flipped = (r2 - I * r3).norm() > (r2 + I * r3).norm();
    let mut matrix = rotation;
    if flipped {
        for col in 0..3 {
            matrix[1][col] = -matrix[1][col];
        }
    }
    let transformed = apply_matrix(&matrix, &disk.phi);
    let recentered = recenter(&transformed, z0);

    // Recover the Weierstrass pair from the transformed triple.
    let omega0 = recentered[0]
        .sub(&recentered[1].scale(I))
        .scale(c(0.5, 0.0));
    let g = recentered[2].div(&omega0.scale(c(2.0, 0.0)));
    let radius_bound = boundedness_radius(&recentered, 96)?;
    let out = NullDiskData {
        g,
        omega0,
        phi: recentered,
        radius_bound,
        normalized: true,
    };
    let record = NormalizationRecord {
        z0,
        rotation_c,
        matrix,
        branch_note: "principal sqrt of 1 + c^2",
        flipped,
    };
    // Hard verification of the five conditions.
    let (eq, m3, m3d) = normalization_defect(&out);
    if eq > 1e-12 || m3 < 1e-12 || m3d < 1e-12 {
        return Err(Error::NormalizationFailed(format!(
            "conditions not met after transform: defect {eq:.3e}, |phi3(0)| {m3:.3e}, |phi3'(0)| {m3d:.3e}"
        )));
    }
    if record.orthogonality_defect() > 1e-12 {
        return Err(Error::NormalizationFailed(format!(
            "matrix not orthogonal: defect {:.3e}",
            record.orthogonality_defect()
        )));
    }
    Ok((out, record))
}
