//! Deterministic CSV and manifest emission.
//!
//! All files are written to a temporary sibling and renamed into place,
//! so a failed run never leaves a partial file. Float formatting is the
//! shortest round-trip representation (scientific notation outside a
//! readable range), so identical runs produce byte-identical files.

use std::path::Path;

use crate::error::Result;
use crate::exponents::{ExponentReport, ProblemParams};
use crate::grid::Field;
use crate::regimes::{BoundedSeries, RegimeVerdict, SmallnessReport, SweepResults};
use crate::semigroup::KernelProbeReport;
use crate::solver::{PicardReport, Trajectory};

/// Shortest round-trip formatting; scientific notation outside
/// [1e-4, 1e7) keeps tiny and huge values readable.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-4..1e7).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_opt_bool(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

/// Notes go into the last CSV column; keep them comma-free.
fn sanitize(notes: &str) -> String {
    notes.replace(',', ";")
}

/// Writes `content` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp_path, content)?;
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}

/// Manifest: resolved config as a reusable config file.
pub fn manifest_body(command: &str, entries: &[(&'static str, String)]) -> String {
    let mut out = String::new();
    out.push_str("# resolved run configuration\n");
    out.push_str(&format!("# command: {command}\n"));
    out.push_str("# rerun with: fujitalab ");
    out.push_str(command);
    out.push_str(" --config <this file> --out <dir>\n");
    for (k, v) in entries {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,sup_u,sup_v,weak_u,weak_v,mass_u,mass_v,termination\n");
    let label = traj.termination.label();
    for s in &traj.samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(s.t),
            fmt_f64(s.sup_u),
            fmt_f64(s.sup_v),
            fmt_f64(s.weak_u),
            fmt_f64(s.weak_v),
            fmt_f64(s.mass_u),
            fmt_f64(s.mass_v),
            label,
        ));
    }
    out
}

/// Cell centers and values: x,value in 1D and x,y,value in 2D.
pub fn field_csv(field: &Field) -> String {
    let grid = field.grid();
    let mut out = if grid.dim() == 1 {
        String::from("x,value\n")
    } else {
        String::from("x,y,value\n")
    };
    for i in 0..field.len() {
        let c = grid.center_of(i);
        if grid.dim() == 1 {
            out.push_str(&format!("{},{}\n", fmt_f64(c[0]), fmt_f64(field.values()[i])));
        } else {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_f64(c[0]),
                fmt_f64(c[1]),
                fmt_f64(field.values()[i])
            ));
        }
    }
    out
}

pub const VERDICT_HEADER: &str =
    "p,q,r,s,alpha,N,scale,verdict,t_blowup,decay_fit_u,decay_fit_v,predicted_u,predicted_v,agreement,notes\n";

#[allow(clippy::too_many_arguments)]
fn verdict_row(
    p: f64,
    q: f64,
    r: f64,
    s: f64,
    alpha: f64,
    dim: usize,
    scale: f64,
    verdict: &str,
    t_blowup: Option<f64>,
    decay_fit_u: Option<(f64, f64)>,
    decay_fit_v: Option<(f64, f64)>,
    predicted_u: f64,
    predicted_v: f64,
    agreement: Option<bool>,
    notes: &str,
) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        fmt_f64(p),
        fmt_f64(q),
        fmt_f64(r),
        fmt_f64(s),
        fmt_f64(alpha),
        dim,
        fmt_f64(scale),
        verdict,
        fmt_opt(t_blowup),
        fmt_opt(decay_fit_u.map(|f| f.0)),
        fmt_opt(decay_fit_v.map(|f| f.0)),
        fmt_f64(predicted_u),
        fmt_f64(predicted_v),
        fmt_opt_bool(agreement),
        sanitize(notes),
    )
}

pub fn verdict_csv(
    params: &ProblemParams,
    scale: f64,
    verdict: &RegimeVerdict,
    notes: &str,
) -> String {
    let mut out = String::from(VERDICT_HEADER);
    out.push_str(&verdict_row(
        params.p,
        params.q,
        params.r,
        params.s,
        params.alpha,
        params.dim,
        scale,
        &verdict.kind.to_string(),
        verdict.blowup_time,
        verdict.decay_fit_u,
        verdict.decay_fit_v,
        verdict.predicted_u,
        verdict.predicted_v,
        verdict.agreement,
        verdict.reason.as_deref().unwrap_or(notes),
    ));
    out
}

pub fn sweep_csv(results: &SweepResults, r: f64, s: f64, alpha: f64, dim: usize) -> String {
    let mut out = String::from(VERDICT_HEADER);
    for row in &results.rows {
        let verdict = row
            .verdict
            .map(|k| k.to_string())
            .unwrap_or_else(|| "Failed".into());
        let mut notes = row.notes.clone();
        if row.on_critical_curve {
            notes = format!("on critical curve; {notes}");
        }
        out.push_str(&verdict_row(
            row.p,
            row.q,
            r,
            s,
            alpha,
            dim,
            row.scale,
            &verdict,
            row.blowup_time,
            row.decay_fit_u,
            row.decay_fit_v,
            row.predicted_u,
            row.predicted_v,
            row.agreement,
            &notes,
        ));
    }
    out
}

pub fn sweep_summary_csv(results: &SweepResults) -> String {
    let s = results.summary;
    format!(
        "points_total,points_on_curve,points_checked,points_consistent\n{},{},{},{}\n",
        s.points_total,
        s.points_on_curve,
        s.points_total - s.points_on_curve,
        s.points_consistent
    )
}

/// Dense sampling of the critical curve for plotting next to the sweep
/// scatter.
pub fn curve_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("p,q_critical\n");
    for &(p, q) in curve {
        out.push_str(&format!("{},{}\n", fmt_f64(p), fmt_f64(q)));
    }
    out
}

pub fn series_csv(series: &BoundedSeries) -> String {
    let mut out = String::from("t,value_u,value_v,flagged\n");
    for p in &series.points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(p.t),
            fmt_f64(p.value_u),
            fmt_f64(p.value_v),
            p.flagged
        ));
    }
    out
}

/// Scalar probe results as key,value rows.
pub fn probe_report_csv(report: &KernelProbeReport) -> String {
    let mut out = String::from("quantity,value\n");
    let rows: Vec<(&str, String)> = vec![
        ("mass_defect", fmt_f64(report.mass_defect)),
        (
            "chapman_kolmogorov_error",
            fmt_f64(report.chapman_kolmogorov_error),
        ),
        ("k4_constant", fmt_f64(report.k4_constant)),
        ("k5_constant", fmt_f64(report.k5_constant)),
        ("k5_t_min", fmt_f64(report.k5_time_range.0)),
        ("k5_t_max", fmt_f64(report.k5_time_range.1)),
        ("k5_ball_radius_max", fmt_f64(report.k5_ball_radius_max)),
        ("smoothing_slope", fmt_f64(report.smoothing_fit.0)),
        ("smoothing_slope_stderr", fmt_f64(report.smoothing_fit.1)),
        ("predicted_slope", fmt_f64(report.predicted_slope)),
        ("lower_bound_constant", fmt_f64(report.lower_bound_constant)),
        (
            "lower_bound_stability",
            fmt_f64(report.lower_bound_stability),
        ),
        (
            "inconclusive",
            report
                .inconclusive
                .as_deref()
                .map(sanitize)
                .unwrap_or_default(),
        ),
    ];
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

/// Sup-norm curve with the predicted reference line for plotting.
pub fn probe_curve_csv(report: &KernelProbeReport) -> String {
    let mut out = String::from("t,sup_norm,predicted\n");
    for p in &report.sup_curve {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(p.t),
            fmt_f64(p.sup),
            fmt_f64(p.predicted)
        ));
    }
    out
}

pub fn exponent_csv(params: &ProblemParams, report: &ExponentReport) -> String {
    let mut out = String::from(
        "p,q,r,s,alpha,N,case,gamma1,gamma2,gamma,r1_star,r2_star,scaling_dim,verdict,critical_product,pq\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        fmt_f64(params.p),
        fmt_f64(params.q),
        fmt_f64(params.r),
        fmt_f64(params.s),
        fmt_f64(params.alpha),
        params.dim,
        params.weight_case,
        fmt_f64(report.gamma1),
        fmt_f64(report.gamma2),
        fmt_f64(report.gamma),
        fmt_f64(report.r1_star),
        fmt_f64(report.r2_star),
        fmt_f64(report.scaling_dim),
        report.verdict,
        fmt_f64(report.critical_product),
        fmt_f64(params.p * params.q),
    ));
    out
}

pub fn picard_profile_csv(report: &PicardReport) -> String {
    let mut out = String::from("t,sup_u,sup_v\n");
    for (j, t) in report.times.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(*t),
            fmt_f64(report.u[j].sup()),
            fmt_f64(report.v[j].sup())
        ));
    }
    out
}

pub fn picard_gaps_csv(report: &PicardReport) -> String {
    let mut out = String::from("iteration,sup_gap,monotone,converged\n");
    for (i, g) in report.gap_history.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            fmt_f64(*g),
            report.monotone,
            report.converged
        ));
    }
    out
}

pub fn smallness_csv(report: &SmallnessReport) -> String {
    let mut out = String::from("scale,verdict\n");
    for p in &report.probes {
        out.push_str(&format!("{},{}\n", fmt_f64(p.scale), p.kind));
    }
    out
}

pub fn smallness_result_csv(report: &SmallnessReport) -> String {
    format!(
        "global_scale,nonglobal_scale,weak_u_at_global,weak_v_at_global\n{},{},{},{}\n",
        fmt_f64(report.global_scale),
        fmt_opt(report.nonglobal_scale),
        fmt_f64(report.weak_norms_at_global.0),
        fmt_f64(report.weak_norms_at_global.1),
    )
}
