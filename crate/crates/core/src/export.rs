//! Artifact writers: OBJ meshes for the real targets, CSV for complex
//! coordinates and the period matrix, SVG contour figures, JSON reports.

use crate::deform::{Realization, Target};
use crate::domain::{BoundaryReport, DomainMesh};
use crate::periods::PeriodMatrix;
use crate::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Wavefront OBJ of a real realization (R3 or L3). L3 coordinates are
/// written as plain (x0, x1, x2) with the metric signature noted in a
/// sidecar JSON next to the mesh.
pub fn write_obj(path: &Path, mesh: &DomainMesh, realization: &Realization) -> Result<PathBuf> {
    if realization.target == Target::C2 {
        return Err(Error::Validation(
            "OBJ export applies to the real targets; C2 exports CSV".into(),
        ));
    }
    let mut w = create(path)?;
    writeln!(w, "# {} realization", realization.target.label())?;
    for coords in &realization.coords {
        writeln!(w, "v {:.12} {:.12} {:.12}", coords[0], coords[1], coords[2])?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    if realization.target == Target::L3 {
        let sidecar = path.with_extension("metric.json");
        let mut s = create(&sidecar)?;
        writeln!(
            s,
            "{{\n  \"coordinates\": [\"x0\", \"x1\", \"x2\"],\n  \"metric_signature\": \"-++\",\n  \"note\": \"indefinite metric -(dx0)^2 + (dx1)^2 + (dx2)^2\"\n}}"
        )?;
        s.flush()?;
    }
    Ok(path.to_path_buf())
}

/// CSV of the complex C2 coordinates per mesh vertex.
pub fn write_c2_csv(path: &Path, realization: &Realization) -> Result<PathBuf> {
    if realization.target != Target::C2 {
        return Err(Error::Validation("CSV coordinate export is for C2".into()));
    }
    let mut w = create(path)?;
    writeln!(w, "re1,im1,re2,im2")?;
    for coords in &realization.coords {
        writeln!(
            w,
            "{:.15e},{:.15e},{:.15e},{:.15e}",
            coords[0], coords[1], coords[2], coords[3]
        )?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

/// CSV of the period matrix (re and im columns interleaved).
pub fn write_period_csv(path: &Path, p: &PeriodMatrix) -> Result<PathBuf> {
    let mut w = create(path)?;
    for k in 0..p.p.nrows() {
        let row: Vec<String> = (0..p.p.ncols())
            .map(|j| format!("{:.15e},{:.15e}", p.p[(k, j)].re, p.p[(k, j)].im))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

/// SVG figure of traced boundary polylines (outer level solid, inner level
/// dashed when supplied).
pub fn write_contour_svg(
    path: &Path,
    outer: &BoundaryReport,
    inner: Option<&BoundaryReport>,
) -> Result<PathBuf> {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let all = outer
        .components
        .iter()
        .chain(inner.iter().flat_map(|r| r.components.iter()));
    for comp in all {
        for z in &comp.polyline {
            min_x = min_x.min(z.re);
            max_x = max_x.max(z.re);
            min_y = min_y.min(z.im);
            max_y = max_y.max(z.im);
        }
    }
    let pad = 0.05 * ((max_x - min_x).max(max_y - min_y)).max(1e-6);
    let (x0, y0) = (min_x - pad, min_y - pad);
    let (wd, ht) = (max_x - min_x + 2.0 * pad, max_y - min_y + 2.0 * pad);
    let mut w = create(path)?;
    writeln!(
        w,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1000 1000\">"
    )?;
    let scale = 1000.0 / wd.max(ht);
    let mut draw = |report: &BoundaryReport, style: &str| -> Result<()> {
        for comp in &report.components {
            let pts: Vec<String> = comp
                .polyline
                .iter()
                .map(|z| {
                    format!(
                        "{:.3},{:.3}",
                        (z.re - x0) * scale,
                        // SVG y grows downward.
                        1000.0 - (z.im - y0) * scale
                    )
                })
                .collect();
            writeln!(
                w,
                "  <polygon points=\"{}\" fill=\"none\" {} />",
                pts.join(" "),
                style
            )?;
        }
        Ok(())
    };
    draw(outer, "stroke=\"black\" stroke-width=\"2\"")?;
    if let Some(r) = inner {
        draw(
            r,
            "stroke=\"gray\" stroke-width=\"1\" stroke-dasharray=\"6,4\"",
        )?;
    }
    writeln!(w, "</svg>")?;
    w.flush()?;
    Ok(path.to_path_buf())
}

/// CSV of divisor tables: one row per (object, point, order) entry
/// covering f, df, v and the basis forms.
pub fn write_divisor_csv(path: &Path, ctx: &crate::deform::DeformationContext) -> Result<PathBuf> {
    let mut w = create(path)?;
    writeln!(w, "object,point,order")?;
    let mut dump = |name: &str, divisor: &[(crate::surface::SurfacePoint, i32)]| -> Result<()> {
        for &(p, k) in divisor {
            writeln!(w, "{name},{p},{k}")?;
        }
        Ok(())
    };
    dump("f", &ctx.base.f.divisor)?;
    dump("df", &ctx.base.df.divisor)?;
    dump("v", &ctx.v.divisor)?;
    for (j, form) in ctx.basis.forms.iter().enumerate() {
        dump(&format!("zeta_{}", j + 1), &form.divisor)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

/// JSON report file.
pub fn write_report_json(path: &Path, report: &crate::report::RunReport) -> Result<PathBuf> {
    let mut w = create(path)?;
    w.write_all(report.to_json().as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(path.to_path_buf())
}
