//! Command-line entry points for the construction/verification pipeline.
//!
//! Exit codes: 0 pass, 2 configuration/validation error, 3 numerical
//! failure, 4 io error.

use clap::{Args, Parser, Subcommand};
use nullsurf_core::config::PipelineConfig;
use nullsurf_core::deform::Target;
use nullsurf_core::periods::JacobianVariant;
use nullsurf_core::pipeline::{build_model, run_pipeline, run_target};
use nullsurf_core::Error;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "nullsurf",
    about = "Builds bounded complete null curves in C^2 (and their R^3/L^3 companions) \
             by period-killing deformation over sphere and torus backends, with \
             machine-checked certificates for every finite estimate.",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target space: c2, r3, l3 or all.
    #[arg(long)]
    target: Option<String>,
    /// Override the top continuation value; the ramp is truncated to it.
    #[arg(long)]
    c: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap (0 = library default).
    #[arg(long)]
    workers: Option<usize>,
    /// Sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid resolution (cells per window side).
    #[arg(long)]
    resolution: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: build, normalize, solve, mesh, realize,
    /// certify, export.
    Run(CommonArgs),
    /// Stage entry: period matrix, base-point period map, conditioning.
    Periods(CommonArgs),
    /// Stage entry: analytic vs finite-difference Jacobian reports.
    Jacobian {
        #[command(flatten)]
        common: CommonArgs,
        /// j1, j2, j3 or all.
        #[arg(long, default_value = "all")]
        variant: String,
    },
    /// Stage entry: period-killing continuation for one target.
    Solve(CommonArgs),
    /// Stage entry: solve, trace the domain boundary and mesh it.
    Mesh(CommonArgs),
    /// Stage entry: full certification for one target without artifacts.
    Certify(CommonArgs),
}

fn load_config(common: &CommonArgs) -> Result<PipelineConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(t) = &common.target {
        cfg.targets = vec![t.clone()];
    }
    if let Some(c) = common.c {
        let mut ramp: Vec<f64> = cfg.resolved_ramp().into_iter().filter(|&v| v < c).collect();
        ramp.push(c);
        cfg.solve.c_ramp = ramp;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = common.resolution {
        cfg.resolution = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn single_target(cfg: &PipelineConfig) -> Result<Target, Error> {
    let targets = cfg.parsed_targets()?;
    if targets.len() != 1 {
        return Err(Error::Validation(
            "this stage command takes exactly one --target".into(),
        ));
    }
    Ok(targets[0])
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json"));
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load_config(&common)?;
            let (report, files) = run_pipeline(&cfg)?;
            eprintln!(
                "pass: {} targets, report written to {}",
                report.targets.len(),
                files
                    .last()
                    .map(|f| f.display().to_string())
                    .unwrap_or_default()
            );
            for t in &report.targets {
                eprintln!(
                    "  [{}] c = {}, residual {:.3e}, mesh {} vertices, |X| <= {:.6}",
                    t.target,
                    t.c_used,
                    t.solve.final_residual,
                    t.mesh.vertices,
                    t.boundedness.global_bound
                );
            }
            Ok(())
        }
        Command::Periods(common) => {
            let cfg = load_config(&common)?;
            let bundle = build_model(&cfg)?;
            let zero = nullsurf_core::deform::DeformationParams::zeros(bundle.ctx.n());
            let base_raw =
                nullsurf_core::periods::raw_periods(&bundle.ctx, &zero, cfg.solve.quadrature_tol)?;
            let base_norm: f64 = base_raw
                .iter()
                .flat_map(|r| r.iter().map(|v| v.norm_sqr()))
                .sum::<f64>()
                .sqrt();
            print_json(&serde_json::json!({
                "period_matrix": serde_json::to_value(bundle.period_summary()).unwrap(),
                "base_point_period_norm": base_norm,
            }));
            Ok(())
        }
        Command::Jacobian { common, variant } => {
            let cfg = load_config(&common)?;
            let bundle = build_model(&cfg)?;
            let variants: Vec<JacobianVariant> = match variant.as_str() {
                "j1" => vec![JacobianVariant::J1],
                "j2" => vec![JacobianVariant::J2],
                "j3" => vec![JacobianVariant::J3],
                "all" => vec![
                    JacobianVariant::J1,
                    JacobianVariant::J2,
                    JacobianVariant::J3,
                ],
                other => {
                    return Err(Error::Validation(format!(
                        "unknown jacobian variant '{other}'"
                    )))
                }
            };
            let mut out = Vec::new();
            for v in variants {
                out.push(serde_json::to_value(bundle.jacobian_summary(v)?).unwrap());
            }
            print_json(&serde_json::Value::Array(out));
            Ok(())
        }
        Command::Solve(common) => {
            let cfg = load_config(&common)?;
            let target = single_target(&cfg)?;
            let bundle = build_model(&cfg)?;
            let steps = nullsurf_core::periods::kill_periods_ramp(
                target,
                &cfg.resolved_ramp(),
                &bundle.ctx,
                bundle.solve_options(),
            )?;
            let rows: Vec<serde_json::Value> = steps
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "c": s.c,
                        "iterations": s.trace.iterations,
                        "final_residual": s.trace.final_residual,
                        "residual_history": s.trace.residual_history,
                    })
                })
                .collect();
            print_json(&serde_json::Value::Array(rows));
            Ok(())
        }
        Command::Mesh(common) => {
            // Runs through meshing plus the downstream checks and writes
            // the mesh artifacts.
            let cfg = load_config(&common)?;
            let target = single_target(&cfg)?;
            let bundle = build_model(&cfg)?;
            let out = run_target(&bundle, target, true)?;
            print_json(&serde_json::to_value(&out.report).unwrap());
            Ok(())
        }
        Command::Certify(common) => {
            let cfg = load_config(&common)?;
            let target = single_target(&cfg)?;
            let bundle = build_model(&cfg)?;
            let out = run_target(&bundle, target, false)?;
            print_json(&serde_json::to_value(&out.report).unwrap());
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
