//! Command-line front end.
//!
//! Every run writes its CSV outputs plus a `manifest.cfg` (the fully
//! resolved configuration) under the output directory; re-running the same
//! subcommand with the manifest as its config reproduces the outputs
//! byte for byte. Exit codes: 0 success, 2 configuration error, 1 runtime
//! failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{config_from_str, parse_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::exponents::derive_exponents;
use crate::grid::WeightSpec;
use crate::output;
use crate::regimes::{
    classify, initial_pair, necessary_condition, smallness_search, sweep, SmallnessOptions,
    SweepSpec,
};
use crate::semigroup::{assemble_operator, kernel_probe, ProbeConfig};
use crate::solver::{picard_local, solve, PicardOptions, SourceApprox};

#[derive(Parser)]
#[command(
    name = "fujitalab",
    version,
    about = "Numerical laboratory for coupled degenerate reaction-diffusion systems with time-weighted sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the closed-form exponent report for one parameter tuple
    Exponent(ExponentArgs),
    /// Probe the diffusion kernel: mass, composition, smoothing rate
    #[command(name = "kernel-probe")]
    KernelProbe(RunArgs),
    /// Integrate the coupled system and classify the outcome
    Simulate(RunArgs),
    /// Run the integral-form fixed-point iteration on a short horizon
    Picard(RunArgs),
    /// Sweep a (p, q) grid and compare observations with predictions
    Sweep(RunArgs),
    /// Bisect the data amplitude separating global decay from blow-up
    Smallness(RunArgs),
}

#[derive(Args)]
struct ExponentArgs {
    /// Config file; alternative to the individual flags below
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    r: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    s: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Spatial dimension
    #[arg(long = "N", default_value_t = 1)]
    n: usize,
    /// Weight case: A (|x_1|^alpha) or B (|x|^alpha)
    #[arg(long, default_value = "A")]
    case: String,
    /// Optional output directory for exponent.csv and the manifest
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Config file (flat key=value; see docs/config-reference.md)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSVs and the manifest
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI on the given argument list and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Exponent(args) => cmd_exponent(args),
        Command::KernelProbe(args) => cmd_kernel_probe(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Picard(args) => cmd_picard(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Smallness(args) => cmd_smallness(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn write_manifest(out: &Path, command: &str, cfg: &ExperimentConfig) -> Result<()> {
    let body = output::manifest_body(command, &cfg.resolved_entries());
    output::write_atomic(&out.join("manifest.cfg"), &body)
}

/// Builds a config equivalent to the exponent flags, so the manifest has
/// one format regardless of how the parameters were supplied.
fn exponent_config(args: &ExponentArgs) -> Result<ExperimentConfig> {
    if let Some(path) = &args.config {
        return parse_config(path);
    }
    let (p, q) = match (args.p, args.q) {
        (Some(p), Some(q)) => (p, q),
        _ => {
            return Err(Error::CliConfig(
                "exponent needs either --config or both --p and --q".into(),
            ))
        }
    };
    let text = format!(
        "p = {}\nq = {}\nr = {}\ns = {}\nalpha = {}\ncase = {}\ndim = {}\n",
        output::fmt_f64(p),
        output::fmt_f64(q),
        output::fmt_f64(args.r),
        output::fmt_f64(args.s),
        output::fmt_f64(args.alpha),
        args.case.trim(),
        args.n
    );
    config_from_str("<flags>", &text)
}

fn cmd_exponent(args: ExponentArgs) -> Result<()> {
    let cfg = exponent_config(&args)?;
    let params = cfg.problem()?;
    let report = derive_exponents(&params);
    println!(
        "parameters: p={} q={} r={} s={} alpha={} N={} case={}",
        params.p, params.q, params.r, params.s, params.alpha, params.dim, params.weight_case
    );
    println!("gamma1          = {}", output::fmt_f64(report.gamma1));
    println!("gamma2          = {}", output::fmt_f64(report.gamma2));
    println!("gamma           = {}", output::fmt_f64(report.gamma));
    println!("r1*             = {}", output::fmt_f64(report.r1_star));
    println!("r2*             = {}", output::fmt_f64(report.r2_star));
    println!("N/(2-alpha)     = {}", output::fmt_f64(report.scaling_dim));
    println!("critical (pq)*  = {}", output::fmt_f64(report.critical_product));
    println!("pq              = {}", output::fmt_f64(params.p * params.q));
    println!("verdict         = {}", report.verdict);
    if let Some(out) = &args.out {
        output::write_atomic(&out.join("exponent.csv"), &output::exponent_csv(&params, &report))?;
        write_manifest(out, "exponent", &cfg)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn build_operator(cfg: &ExperimentConfig) -> Result<crate::semigroup::DiffusionOperator> {
    let grid = cfg.grid()?;
    let spec = WeightSpec::new(cfg.case, cfg.alpha, cfg.dim)?;
    assemble_operator(&grid, spec)
}

fn cmd_kernel_probe(args: RunArgs) -> Result<()> {
    let cfg = parse_config(&args.config)?;
    let op = build_operator(&cfg)?;
    let probe_cfg = ProbeConfig {
        t_min: cfg.probe_t_min,
        t_max: cfg.probe_t_max,
        n_times: cfg.probe_points,
        steps: cfg.probe_steps,
    };
    let report = kernel_probe(&op, &probe_cfg)?;
    output::write_atomic(
        &args.out.join("probe_report.csv"),
        &output::probe_report_csv(&report),
    )?;
    output::write_atomic(
        &args.out.join("probe_supnorm.csv"),
        &output::probe_curve_csv(&report),
    )?;
    write_manifest(&args.out, "kernel-probe", &cfg)?;
    println!(
        "mass defect {},  composition defect {},  smoothing slope {} (predicted {})",
        output::fmt_f64(report.mass_defect),
        output::fmt_f64(report.chapman_kolmogorov_error),
        output::fmt_f64(report.smoothing_fit.0),
        output::fmt_f64(report.predicted_slope),
    );
    if let Some(reason) = &report.inconclusive {
        println!("inconclusive: {reason}");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_simulate(args: RunArgs) -> Result<()> {
    let cfg = parse_config(&args.config)?;
    let params = cfg.problem()?;
    let op = build_operator(&cfg)?;
    let grid = op.grid().clone();
    let (u0, v0) = initial_pair(&cfg.data_shape(), &params, &grid, cfg.scale, cfg.scale_v);
    let controls = cfg.controls();
    let traj = solve(&params, &op, &u0, &v0, &controls)?;
    let verdict = classify(&traj, &params);

    output::write_atomic(&args.out.join("trajectory.csv"), &output::trajectory_csv(&traj))?;
    output::write_atomic(
        &args.out.join("verdict.csv"),
        &output::verdict_csv(&params, cfg.scale, &verdict, traj.termination.label()),
    )?;
    if !traj.snapshots.is_empty() {
        let series = necessary_condition(&traj, &params, &op, cfg.series_steps)?;
        output::write_atomic(&args.out.join("series.csv"), &output::series_csv(&series))?;
    }
    if cfg.dump_fields {
        for (idx, (t, u, v)) in traj.snapshots.iter().enumerate() {
            output::write_atomic(
                &args.out.join(format!("field_u_{idx:04}.csv")),
                &format!("# t = {}\n{}", output::fmt_f64(*t), output::field_csv(u)),
            )?;
            output::write_atomic(
                &args.out.join(format!("field_v_{idx:04}.csv")),
                &format!("# t = {}\n{}", output::fmt_f64(*t), output::field_csv(v)),
            )?;
        }
    }
    write_manifest(&args.out, "simulate", &cfg)?;

    println!(
        "termination {} after {} steps; verdict {}",
        traj.termination.label(),
        traj.steps_taken,
        verdict.kind
    );
    if let Some(tb) = verdict.blowup_time {
        println!("blow-up time ~ {}", output::fmt_f64(tb));
    }
    if let Some((slope, stderr)) = verdict.decay_fit_u {
        println!(
            "u decay fit {} +- {} (predicted {}), agreement {}",
            output::fmt_f64(slope),
            output::fmt_f64(stderr),
            output::fmt_f64(verdict.predicted_u),
            verdict.agreement.unwrap_or(false)
        );
    }
    if let Some(reason) = &verdict.reason {
        println!("note: {reason}");
    }
    println!(
        "boundary/max ratio over the run: {}",
        output::fmt_f64(traj.boundary_ratio)
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_picard(args: RunArgs) -> Result<()> {
    let cfg = parse_config(&args.config)?;
    let params = cfg.problem()?;
    let op = build_operator(&cfg)?;
    let grid = op.grid().clone();
    let (u0, v0) = initial_pair(&cfg.data_shape(), &params, &grid, cfg.scale, cfg.scale_v);
    let approx = if cfg.approx_n >= 1 {
        Some(SourceApprox::new(cfg.approx_n, params.p)?)
    } else {
        None
    };
    let opts = PicardOptions {
        slices: cfg.picard_slices,
        max_iters: cfg.picard_iters,
        tol_rel: cfg.picard_tol,
    };
    let report = picard_local(&params, &op, &u0, &v0, cfg.picard_t, &opts, approx.as_ref())?;
    output::write_atomic(
        &args.out.join("picard_profile.csv"),
        &output::picard_profile_csv(&report),
    )?;
    output::write_atomic(
        &args.out.join("picard_gaps.csv"),
        &output::picard_gaps_csv(&report),
    )?;
    write_manifest(&args.out, "picard", &cfg)?;
    println!(
        "{} after {} sweeps (monotone: {}); final gap {}",
        if report.converged {
            "converged"
        } else {
            "did not converge (horizon too large for this data)"
        },
        report.iterations,
        report.monotone,
        output::fmt_f64(*report.gap_history.last().unwrap_or(&0.0)),
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_sweep(args: RunArgs) -> Result<()> {
    let cfg = parse_config(&args.config)?;
    let spec = SweepSpec {
        p_values: cfg.sweep_p.clone(),
        q_values: cfg.sweep_q.clone(),
        scales: cfg.sweep_scales.clone(),
        r: cfg.r,
        s: cfg.s,
        alpha: cfg.alpha,
        dim: cfg.dim,
        weight_case: cfg.case,
        shape: cfg.data_shape(),
        grid_half_width: cfg.half_width,
        grid_cells: cfg.cells,
        controls: cfg.controls(),
        crit_margin: cfg.crit_margin,
        curve_points: cfg.curve_points,
    };
    let results = sweep(&spec)?;
    output::write_atomic(
        &args.out.join("sweep.csv"),
        &output::sweep_csv(&results, cfg.r, cfg.s, cfg.alpha, cfg.dim),
    )?;
    output::write_atomic(
        &args.out.join("fujita_curve.csv"),
        &output::curve_csv(&results.curve),
    )?;
    output::write_atomic(
        &args.out.join("sweep_summary.csv"),
        &output::sweep_summary_csv(&results),
    )?;
    write_manifest(&args.out, "sweep", &cfg)?;
    let s = results.summary;
    println!(
        "{} rows; {} points ({} on the critical curve, excluded), {}/{} consistent with the prediction",
        results.rows.len(),
        s.points_total,
        s.points_on_curve,
        s.points_consistent,
        s.points_total - s.points_on_curve,
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_smallness(args: RunArgs) -> Result<()> {
    let cfg = parse_config(&args.config)?;
    let params = cfg.problem()?;
    let op = build_operator(&cfg)?;
    let opts = SmallnessOptions {
        scale_init: cfg.search_scale_init,
        max_doublings: cfg.search_max_doublings,
        bisections: cfg.search_bisections,
    };
    let report = smallness_search(&params, &op, &cfg.data_shape(), &cfg.controls(), &opts)?;
    output::write_atomic(&args.out.join("smallness.csv"), &output::smallness_csv(&report))?;
    output::write_atomic(
        &args.out.join("smallness_result.csv"),
        &output::smallness_result_csv(&report),
    )?;
    write_manifest(&args.out, "smallness", &cfg)?;
    println!(
        "global up to amplitude {}; first non-global at {}; weak norms at the global amplitude: ({}, {})",
        output::fmt_f64(report.global_scale),
        report
            .nonglobal_scale
            .map(output::fmt_f64)
            .unwrap_or_else(|| "none found".into()),
        output::fmt_f64(report.weak_norms_at_global.0),
        output::fmt_f64(report.weak_norms_at_global.1),
    );
    println!("wrote {}", args.out.display());
    Ok(())
}
