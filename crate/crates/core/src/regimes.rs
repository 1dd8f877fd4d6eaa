//! Experiment layer: classifies computed trajectories against the
//! predicted dichotomy, fits decay exponents, evaluates the bounded
//! quantity `t^gamma ||S(t)u(t)||_inf` that global solutions must keep
//! bounded, checks the iteration lower bound on blow-up runs, searches
//! for the smallness threshold, and sweeps (p, q) planes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exponents::{derive_exponents, picard_constants, ProblemParams, Verdict};
use crate::grid::{Field, Grid, WeightCase};
use crate::semigroup::{apply_semigroup, DiffusionOperator};
use crate::solver::{solve, SolveControls, Termination, Trajectory};
use crate::fit::loglog_fit;
use std::sync::Arc;

/// Relative tolerance on the decay-exponent agreement flag.
pub const DECAY_AGREEMENT_TOL: f64 = 0.15;
/// Minimum number of tail samples for a decay fit.
pub const TAIL_MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeKind {
    Blowup,
    Global,
    Inconclusive,
}

impl std::fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegimeKind::Blowup => write!(f, "Blowup"),
            RegimeKind::Global => write!(f, "Global"),
            RegimeKind::Inconclusive => write!(f, "Inconclusive"),
        }
    }
}

/// Classification of one run. `Global` here is desk-scale evidence:
/// the run reached its horizon with decaying norms.
#[derive(Debug, Clone)]
pub struct RegimeVerdict {
    pub kind: RegimeKind,
    pub blowup_time: Option<f64>,
    /// (fitted exponent, standard error) of log sup u vs log t.
    pub decay_fit_u: Option<(f64, f64)>,
    pub decay_fit_v: Option<(f64, f64)>,
    /// Predicted decay exponents: -gamma1 for u, -gamma2 for v.
    pub predicted_u: f64,
    pub predicted_v: f64,
    /// Whether the fitted u exponent is within 15% of -gamma1.
    pub agreement: Option<bool>,
    pub reason: Option<String>,
}

/// Maps a finished trajectory to a regime verdict. Blow-up terminations
/// map directly; a run that reached its horizon is Global only when the
/// last decade of samples decays monotonically and supports a fit.
pub fn classify(traj: &Trajectory, params: &ProblemParams) -> RegimeVerdict {
    let rep = derive_exponents(params);
    let base = RegimeVerdict {
        kind: RegimeKind::Inconclusive,
        blowup_time: None,
        decay_fit_u: None,
        decay_fit_v: None,
        predicted_u: -rep.gamma1,
        predicted_v: -rep.gamma2,
        agreement: None,
        reason: None,
    };
    match &traj.termination {
        Termination::BlowupThreshold(tb) | Termination::StepUnderflow(tb) => RegimeVerdict {
            kind: RegimeKind::Blowup,
            blowup_time: Some(*tb),
            ..base
        },
        Termination::SolverFailure(msg) => RegimeVerdict {
            reason: Some(format!("solver failure: {msg}")),
            ..base
        },
        Termination::ReachedTmax => {
            let t_end = match traj.samples.last() {
                Some(s) => s.t,
                None => {
                    return RegimeVerdict {
                        reason: Some("no samples recorded".into()),
                        ..base
                    }
                }
            };
            let tail: Vec<_> = traj
                .samples
                .iter()
                .filter(|s| s.t >= t_end / 10.0)
                .collect();
            if tail.len() < TAIL_MIN_SAMPLES {
                return RegimeVerdict {
                    reason: Some(format!(
                        "only {} tail samples; decay fit underdetermined",
                        tail.len()
                    )),
                    ..base
                };
            }
            if tail.iter().all(|s| s.sup_u == 0.0 && s.sup_v == 0.0) {
                return RegimeVerdict {
                    reason: Some("trajectory identically zero over the fit window".into()),
                    ..base
                };
            }
            for w in tail.windows(2) {
                if w[1].sup_u > w[0].sup_u * (1.0 + 1e-9) {
                    return RegimeVerdict {
                        reason: Some(format!(
                            "sup u not decreasing over the fit window (rises near t={})",
                            w[1].t
                        )),
                        ..base
                    };
                }
            }
            let pts_u: Vec<(f64, f64)> = tail.iter().map(|s| (s.t, s.sup_u)).collect();
            let pts_v: Vec<(f64, f64)> = tail.iter().map(|s| (s.t, s.sup_v)).collect();
            let fit_u = loglog_fit(&pts_u);
            let fit_v = loglog_fit(&pts_v);
            match fit_u {
                Some((slope, stderr)) => {
                    let agreement =
                        (slope - (-rep.gamma1)).abs() <= DECAY_AGREEMENT_TOL * rep.gamma1;
                    RegimeVerdict {
                        kind: RegimeKind::Global,
                        decay_fit_u: Some((slope, stderr)),
                        decay_fit_v: fit_v,
                        agreement: Some(agreement),
                        ..base
                    }
                }
                None => RegimeVerdict {
                    reason: Some("decay fit failed (nonpositive tail values)".into()),
                    ..base
                },
            }
        }
    }
}

/// One point of the bounded-quantity series.
#[derive(Debug, Clone, Copy)]
pub struct BoundedPoint {
    pub t: f64,
    pub value_u: f64,
    pub value_v: f64,
    /// Set when the self-similar scale at t no longer fits the box and
    /// the point should not be trusted.
    pub flagged: bool,
}

/// Series of `t^gamma1 ||S(t)u(t)||_inf` (q >= 1 branch; for q < 1 the
/// quantity is `t^(q gamma1) ||S(t)u(t)^q||_inf`) and the symmetric
/// v-quantity. Global solutions keep these bounded.
#[derive(Debug, Clone)]
pub struct BoundedSeries {
    pub points: Vec<BoundedPoint>,
    pub sup_u: f64,
    pub sup_v: f64,
    /// Log-log slope over the last decade of unflagged points.
    pub tail_slope_u: Option<f64>,
    pub tail_slope_v: Option<f64>,
}

pub fn necessary_condition(
    traj: &Trajectory,
    params: &ProblemParams,
    op: &DiffusionOperator,
    steps: usize,
) -> Result<BoundedSeries> {
    if traj.snapshots.is_empty() {
        return Err(Error::InvalidArgument(
            "trajectory has no field snapshots; rerun with snapshots enabled".into(),
        ));
    }
    let rep = derive_exponents(params);
    let grid = op.grid();
    let ss = op.space_scale_exponent();
    let mut points = Vec::with_capacity(traj.snapshots.len());
    let mut sup_u = 0.0_f64;
    let mut sup_v = 0.0_f64;
    for (t, u, v) in &traj.snapshots {
        let t = *t;
        if t <= 0.0 {
            continue;
        }
        let flagged = t.powf(ss) > 0.45 * grid.half_width();
        let value_u = if params.q >= 1.0 {
            t.powf(rep.gamma1) * apply_semigroup(op, u, t, steps)?.sup()
        } else {
            let uq = u.pow_positive(params.q);
            t.powf(params.q * rep.gamma1) * apply_semigroup(op, &uq, t, steps)?.sup()
        };
        let value_v = if params.p >= 1.0 {
            t.powf(rep.gamma2) * apply_semigroup(op, v, t, steps)?.sup()
        } else {
            let vp = v.pow_positive(params.p);
            t.powf(params.p * rep.gamma2) * apply_semigroup(op, &vp, t, steps)?.sup()
        };
        sup_u = sup_u.max(value_u);
        sup_v = sup_v.max(value_v);
        points.push(BoundedPoint {
            t,
            value_u,
            value_v,
            flagged,
        });
    }
    let t_last = points.last().map(|p| p.t).unwrap_or(0.0);
    let tail: Vec<BoundedPoint> = points
        .iter()
        .filter(|p| p.t >= t_last / 10.0 && !p.flagged)
        .cloned()
        .collect();
    let fit = |sel: fn(&BoundedPoint) -> f64| -> Option<f64> {
        if tail.len() < 5 {
            return None;
        }
        let pts: Vec<(f64, f64)> = tail.iter().map(|p| (p.t, sel(p))).collect();
        loglog_fit(&pts).map(|(slope, _)| slope)
    };
    let tail_slope_u = fit(|p| p.value_u);
    let tail_slope_v = fit(|p| p.value_v);
    Ok(BoundedSeries {
        points,
        sup_u,
        sup_v,
        tail_slope_u,
        tail_slope_v,
    })
}

/// Cellwise defect of the iteration lower bound
/// `u(t) >= C_k t^((beta^k - 1) gamma1) [S(t)u0]^(beta^k)`
/// at one snapshot time, normalized by the larger of the two sides' sups.
#[derive(Debug, Clone, Copy)]
pub struct LowerBoundPoint {
    pub t: f64,
    pub min_defect_rel: f64,
}

#[derive(Debug, Clone)]
pub struct LowerBoundReport {
    pub k: usize,
    pub c_k: f64,
    pub points: Vec<LowerBoundPoint>,
    /// Min over times of the normalized cellwise defect; nonnegative
    /// means the bound held everywhere.
    pub worst: f64,
}

pub fn lower_bound_check(
    params: &ProblemParams,
    op: &DiffusionOperator,
    u0: &Field,
    traj: &Trajectory,
    k: usize,
    steps: usize,
) -> Result<LowerBoundReport> {
    if k > 3 {
        return Err(Error::InvalidArgument(format!(
            "k={k} too large; beyond k=3 the right-hand side underflows"
        )));
    }
    if traj.snapshots.is_empty() {
        return Err(Error::InvalidArgument(
            "trajectory has no field snapshots; rerun with snapshots enabled".into(),
        ));
    }
    let rep = derive_exponents(params);
    let pc = picard_constants(params, k)?;
    let c_k = pc.c(k);
    let beta_k = pc.beta.powi(k as i32);
    let mut points = Vec::new();
    let mut worst = f64::INFINITY;
    for (t, u, _) in &traj.snapshots {
        let t = *t;
        if t <= 0.0 {
            continue;
        }
        let su0 = apply_semigroup(op, u0, t, steps)?;
        let prefactor = c_k * t.powf((beta_k - 1.0) * rep.gamma1);
        let mut min_defect = f64::INFINITY;
        let mut rhs_sup = 0.0_f64;
        for i in 0..u.len() {
            let rhs = prefactor * su0.values()[i].max(0.0).powf(beta_k);
            rhs_sup = rhs_sup.max(rhs);
            min_defect = min_defect.min(u.values()[i] - rhs);
        }
        let scale = u.sup().max(rhs_sup).max(f64::MIN_POSITIVE);
        let rel = min_defect / scale;
        worst = worst.min(rel);
        points.push(LowerBoundPoint {
            t,
            min_defect_rel: rel,
        });
    }
    Ok(LowerBoundReport {
        k,
        c_k,
        points,
        worst,
    })
}

/// Initial data shapes used by the experiment layer.
///
/// `PowerTail` saturates the weak-norm smallness condition: the profile
/// `min(cap, |x|^-a)` with `a = (2-alpha) gamma` has constant level
/// measure `rho * mu(rho)^(1/r*)`, so its weak norm scales linearly with
/// the amplitude, and the evolved sup norm genuinely tracks `t^-gamma`.
/// A Gaussian decays at the faster free-diffusion rate instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataShape {
    Zero,
    /// Unit-mass bump of the given width, scaled by the amplitude factor.
    Gaussian { width: f64 },
    /// Capped power profile truncated at `cutoff` (kept inside the box so
    /// boundary cells start at zero).
    PowerTail { cap: f64, cutoff: f64 },
}

impl DataShape {
    fn materialize(&self, grid: &Arc<Grid>, decay_power: f64, scale: f64) -> Field {
        match *self {
            DataShape::Zero => Field::zeros(grid),
            DataShape::Gaussian { width } => {
                let dim = grid.dim() as i32;
                let amp = scale / (width * (2.0 * std::f64::consts::PI).sqrt()).powi(dim);
                Field::from_fn(grid, |x| {
                    let r2: f64 = x.iter().map(|c| c * c).sum();
                    amp * (-r2 / (2.0 * width * width)).exp()
                })
            }
            DataShape::PowerTail { cap, cutoff } => {
                // In 1D with an integrable power (a < 1) the profile is
                // cell-averaged exactly, so the capped spike carries its
                // true mass even when the cap radius is below the grid
                // spacing. Otherwise fall back to center sampling.
                if grid.dim() == 1 && decay_power < 1.0 {
                    let h = grid.spacing();
                    let values = grid
                        .axis_centers()
                        .iter()
                        .map(|&c| {
                            scale
                                * clipped_power_cell_average(
                                    decay_power,
                                    cap,
                                    cutoff,
                                    c - 0.5 * h,
                                    c + 0.5 * h,
                                )
                        })
                        .collect();
                    Field::from_values(grid, values)
                } else {
                    Field::from_fn(grid, |x| {
                        let r: f64 = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                        if r > cutoff {
                            0.0
                        } else if r == 0.0 {
                            scale * cap
                        } else {
                            scale * cap.min(r.powf(-decay_power))
                        }
                    })
                }
            }
        }
    }
}

/// Mean over [lo, hi] of min(cap, |x|^-a) * indicator(|x| <= cutoff),
/// a in (0, 1). Exact: the profile equals cap inside the cap radius
/// cap^(-1/a) and the integrable power outside it.
fn clipped_power_cell_average(a: f64, cap: f64, cutoff: f64, lo: f64, hi: f64) -> f64 {
    let rho = cap.powf(-1.0 / a).min(cutoff);
    // One-sided integral from 0 to t >= 0.
    let one_sided = |t: f64| -> f64 {
        if t <= rho {
            cap * t
        } else {
            let upper = t.min(cutoff);
            cap * rho + (upper.powf(1.0 - a) - rho.powf(1.0 - a)) / (1.0 - a)
        }
    };
    let signed = |t: f64| -> f64 {
        if t >= 0.0 {
            one_sided(t)
        } else {
            -one_sided(-t)
        }
    };
    (signed(hi) - signed(lo)) / (hi - lo)
}

/// Builds the (u0, v0) pair for a shape: the u profile decays with power
/// `(2-alpha) gamma1`, the v profile with `(2-alpha) gamma2`.
pub fn initial_pair(
    shape: &DataShape,
    params: &ProblemParams,
    grid: &Arc<Grid>,
    scale_u: f64,
    scale_v: f64,
) -> (Field, Field) {
    let rep = derive_exponents(params);
    let a_u = (2.0 - params.alpha) * rep.gamma1;
    let a_v = (2.0 - params.alpha) * rep.gamma2;
    (
        shape.materialize(grid, a_u, scale_u),
        shape.materialize(grid, a_v, scale_v),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct SmallnessOptions {
    pub scale_init: f64,
    pub max_doublings: u32,
    pub bisections: u32,
}

impl Default for SmallnessOptions {
    fn default() -> Self {
        SmallnessOptions {
            scale_init: 1.0,
            max_doublings: 12,
            bisections: 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SmallnessProbe {
    pub scale: f64,
    pub kind: RegimeKind,
}

/// Bracket on the numerical smallness threshold, in amplitude units and
/// in the weak norms of the data at the largest global amplitude.
#[derive(Debug, Clone)]
pub struct SmallnessReport {
    /// Largest tested amplitude with a Global verdict.
    pub global_scale: f64,
    /// Smallest tested amplitude with a non-Global verdict; None when no
    /// blow-up was found up to the doubling cap.
    pub nonglobal_scale: Option<f64>,
    /// (weak u norm at r1*, weak v norm at r2*) of the data at global_scale.
    pub weak_norms_at_global: (f64, f64),
    pub probes: Vec<SmallnessProbe>,
}

/// Bisection on the data amplitude between Global and non-Global
/// verdicts. The comparison principle makes the verdict monotone in the
/// amplitude, so a bracket is meaningful.
pub fn smallness_search(
    params: &ProblemParams,
    op: &DiffusionOperator,
    shape: &DataShape,
    controls: &SolveControls,
    opts: &SmallnessOptions,
) -> Result<SmallnessReport> {
    let rep = derive_exponents(params);
    if rep.verdict != Verdict::GlobalPossible {
        return Err(Error::InvalidArgument(format!(
            "smallness search needs gamma < N/(2-alpha); these parameters have gamma = {:.4} >= {:.4}",
            rep.gamma, rep.scaling_dim
        )));
    }
    let grid = op.grid();
    let mut probes = Vec::new();
    let mut run = |scale: f64| -> Result<RegimeKind> {
        let (u0, v0) = initial_pair(shape, params, grid, scale, scale);
        let traj = solve(params, op, &u0, &v0, controls)?;
        let kind = classify(&traj, params).kind;
        probes.push(SmallnessProbe { scale, kind });
        Ok(kind)
    };

    let mut global: Option<f64> = None;
    let mut nonglobal: Option<f64> = None;
    let mut scale = opts.scale_init;
    match run(scale)? {
        RegimeKind::Global => {
            global = Some(scale);
            for _ in 0..opts.max_doublings {
                scale *= 2.0;
                if run(scale)? == RegimeKind::Global {
                    global = Some(scale);
                } else {
                    nonglobal = Some(scale);
                    break;
                }
            }
        }
        _ => {
            nonglobal = Some(scale);
            for _ in 0..opts.max_doublings {
                scale *= 0.5;
                if run(scale)? == RegimeKind::Global {
                    global = Some(scale);
                    break;
                } else {
                    nonglobal = Some(scale);
                }
            }
        }
    }
    let mut global = global.ok_or_else(|| {
        Error::Runtime(format!(
            "no Global verdict down to amplitude {scale:.3e}; the horizon or the box is likely too small for this problem"
        ))
    })?;

    if let Some(mut upper) = nonglobal {
        for _ in 0..opts.bisections {
            let mid = (global * upper).sqrt();
            if run(mid)? == RegimeKind::Global {
                global = mid;
            } else {
                upper = mid;
            }
        }
        nonglobal = Some(upper);
    }

    let (u0, v0) = initial_pair(shape, params, grid, global, global);
    let weak_u = crate::grid::norm(&u0, rep.r1_star, crate::grid::NormKind::WeakLorentz)?;
    let weak_v = crate::grid::norm(&v0, rep.r2_star, crate::grid::NormKind::WeakLorentz)?;
    probes.sort_by(|a, b| a.scale.partial_cmp(&b.scale).expect("finite scales"));
    Ok(SmallnessReport {
        global_scale: global,
        nonglobal_scale: nonglobal,
        weak_norms_at_global: (weak_u, weak_v),
        probes,
    })
}

/// Parameter-plane sweep specification.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub p_values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub scales: Vec<f64>,
    pub r: f64,
    pub s: f64,
    pub alpha: f64,
    pub dim: usize,
    pub weight_case: WeightCase,
    pub shape: DataShape,
    pub grid_half_width: f64,
    pub grid_cells: usize,
    pub controls: SolveControls,
    /// Points with |gamma - N/(2-alpha)| <= crit_margin * N/(2-alpha) are
    /// flagged as on-curve and excluded from the consistency accounting.
    pub crit_margin: f64,
    /// Number of samples of the analytic critical curve.
    pub curve_points: usize,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub p: f64,
    pub q: f64,
    pub scale: f64,
    pub predicted: Verdict,
    pub on_critical_curve: bool,
    pub verdict: Option<RegimeKind>,
    pub blowup_time: Option<f64>,
    pub decay_fit_u: Option<(f64, f64)>,
    pub decay_fit_v: Option<(f64, f64)>,
    pub predicted_u: f64,
    pub predicted_v: f64,
    pub agreement: Option<bool>,
    pub notes: String,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSummary {
    pub points_total: usize,
    pub points_on_curve: usize,
    /// Off-curve points whose observations match the prediction:
    /// NoGlobal points blow up at every scale, GlobalPossible points are
    /// Global at the smallest scale.
    pub points_consistent: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResults {
    pub rows: Vec<SweepRow>,
    /// Dense sampling (p, q) of the critical curve gamma = N/(2-alpha).
    pub curve: Vec<(f64, f64)>,
    pub summary: SweepSummary,
}

/// Runs the sweep. Points are independent jobs executed in parallel;
/// rows come back in the deterministic (p, q, scale) order regardless of
/// scheduling. Individual run failures are recorded in the row notes.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResults> {
    for &p in &spec.p_values {
        for &q in &spec.q_values {
            if !(p * q > 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "sweep point (p={p}, q={q}) violates pq > 1"
                )));
            }
        }
    }
    if spec.scales.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::InvalidArgument("scales must be nonnegative".into()));
    }
    let grid = crate::grid::build_grid(spec.dim, spec.grid_half_width, spec.grid_cells)?;
    let wspec = crate::grid::WeightSpec::new(spec.weight_case, spec.alpha, spec.dim)?;
    let op = crate::semigroup::assemble_operator(&grid, wspec)?;

    let mut jobs = Vec::new();
    for &p in &spec.p_values {
        for &q in &spec.q_values {
            for &scale in &spec.scales {
                jobs.push((p, q, scale));
            }
        }
    }

    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(p, q, scale)| {
            let params = match ProblemParams::new(
                p,
                q,
                spec.r,
                spec.s,
                spec.alpha,
                spec.dim,
                spec.weight_case,
            ) {
                Ok(pp) => pp,
                Err(e) => {
                    return SweepRow {
                        p,
                        q,
                        scale,
                        predicted: Verdict::NoGlobal,
                        on_critical_curve: false,
                        verdict: None,
                        blowup_time: None,
                        decay_fit_u: None,
                        decay_fit_v: None,
                        predicted_u: f64::NAN,
                        predicted_v: f64::NAN,
                        agreement: None,
                        notes: format!("invalid parameters: {e}"),
                    }
                }
            };
            let rep = derive_exponents(&params);
            let on_curve =
                (rep.gamma - rep.scaling_dim).abs() <= spec.crit_margin * rep.scaling_dim;
            let (u0, v0) = initial_pair(&spec.shape, &params, &grid, scale, scale);
            match solve(&params, &op, &u0, &v0, &spec.controls) {
                Ok(traj) => {
                    let verdict = classify(&traj, &params);
                    SweepRow {
                        p,
                        q,
                        scale,
                        predicted: rep.verdict,
                        on_critical_curve: on_curve,
                        verdict: Some(verdict.kind),
                        blowup_time: verdict.blowup_time,
                        decay_fit_u: verdict.decay_fit_u,
                        decay_fit_v: verdict.decay_fit_v,
                        predicted_u: verdict.predicted_u,
                        predicted_v: verdict.predicted_v,
                        agreement: verdict.agreement,
                        notes: verdict.reason.unwrap_or_else(|| traj.termination.label().into()),
                    }
                }
                Err(e) => SweepRow {
                    p,
                    q,
                    scale,
                    predicted: rep.verdict,
                    on_critical_curve: on_curve,
                    verdict: None,
                    blowup_time: None,
                    decay_fit_u: None,
                    decay_fit_v: None,
                    predicted_u: -rep.gamma1,
                    predicted_v: -rep.gamma2,
                    agreement: None,
                    notes: format!("run failed: {e}"),
                },
            }
        })
        .collect();

    // Per-point consistency over the scale ladder, off-curve points only.
    let mut points_total = 0;
    let mut points_on_curve = 0;
    let mut points_consistent = 0;
    for &p in &spec.p_values {
        for &q in &spec.q_values {
            points_total += 1;
            let point_rows: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.p == p && r.q == q)
                .collect();
            if point_rows.iter().any(|r| r.on_critical_curve) {
                points_on_curve += 1;
                continue;
            }
            let consistent = match point_rows.first().map(|r| r.predicted) {
                Some(Verdict::NoGlobal) => point_rows
                    .iter()
                    .all(|r| r.verdict == Some(RegimeKind::Blowup)),
                Some(Verdict::GlobalPossible) => {
                    let min_scale = point_rows
                        .iter()
                        .map(|r| r.scale)
                        .fold(f64::INFINITY, f64::min);
                    point_rows
                        .iter()
                        .filter(|r| r.scale == min_scale)
                        .all(|r| r.verdict == Some(RegimeKind::Global))
                }
                None => false,
            };
            if consistent {
                points_consistent += 1;
            }
        }
    }

    let curve = critical_curve(spec, spec.curve_points);
    Ok(SweepResults {
        rows,
        curve,
        summary: SweepSummary {
            points_total,
            points_on_curve,
            points_consistent,
        },
    })
}

/// Samples the critical curve `max(gamma1, gamma2)(p, q) = N/(2-alpha)`
/// as q(p) by bisection; gamma is strictly decreasing in q.
fn critical_curve(spec: &SweepSpec, n_points: usize) -> Vec<(f64, f64)> {
    if n_points == 0 || spec.p_values.is_empty() {
        return Vec::new();
    }
    let target = spec.dim as f64 / (2.0 - spec.alpha);
    let p_lo = spec.p_values.iter().cloned().fold(f64::INFINITY, f64::min) * 0.8;
    let p_hi = spec.p_values.iter().cloned().fold(0.0, f64::max) * 1.2;
    let gamma_at = |p: f64, q: f64| -> f64 {
        let d = p * q - 1.0;
        let g1 = ((spec.r + 1.0) + (spec.s + 1.0) * p) / d;
        let g2 = ((spec.s + 1.0) + (spec.r + 1.0) * q) / d;
        g1.max(g2)
    };
    let mut curve = Vec::new();
    for i in 0..n_points {
        let p = p_lo + (p_hi - p_lo) * i as f64 / (n_points - 1).max(1) as f64;
        if p <= 0.0 {
            continue;
        }
        // Bracket: gamma -> inf as q -> (1/p)+ and gamma -> 0 as q -> inf.
        let mut q_lo = 1.0 / p + 1e-9;
        let mut q_hi = 1.0 / p + 1.0;
        let mut expansions = 0;
        while gamma_at(p, q_hi) > target && expansions < 200 {
            q_hi *= 2.0;
            expansions += 1;
        }
        if gamma_at(p, q_hi) > target {
            continue;
        }
        for _ in 0..80 {
            let mid = 0.5 * (q_lo + q_hi);
            if gamma_at(p, mid) > target {
                q_lo = mid;
            } else {
                q_hi = mid;
            }
        }
        curve.push((p, 0.5 * (q_lo + q_hi)));
    }
    curve
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, WeightSpec};
    use crate::semigroup::assemble_operator;
    use crate::solver::Sample;

    fn params(p: f64, q: f64, alpha: f64) -> ProblemParams {
        ProblemParams::new(p, q, 0.0, 0.0, alpha, 1, WeightCase::A).unwrap()
    }

    fn synthetic_trajectory(
        sup_law: impl Fn(f64) -> f64,
        t_max: f64,
        n: usize,
        termination: Termination,
    ) -> Trajectory {
        let ratio = (t_max / 0.01_f64).powf(1.0 / (n - 1) as f64);
        let samples = (0..n)
            .map(|k| {
                let t = 0.01 * ratio.powi(k as i32);
                let s = sup_law(t);
                Sample {
                    t,
                    sup_u: s,
                    sup_v: s,
                    weak_u: f64::NAN,
                    weak_v: f64::NAN,
                    mass_u: 1.0,
                    mass_v: 1.0,
                }
            })
            .collect();
        Trajectory {
            samples,
            snapshots: Vec::new(),
            termination,
            steps_taken: n as u64,
            boundary_ratio: 0.0,
            r1_star: 1.5,
            r2_star: 1.5,
        }
    }

    #[test]
    fn blowup_termination_maps_directly() {
        let traj = synthetic_trajectory(|t| t, 0.7, 30, Termination::BlowupThreshold(0.7));
        let verdict = classify(&traj, &params(2.0, 2.0, 0.0));
        assert_eq!(verdict.kind, RegimeKind::Blowup);
        assert_eq!(verdict.blowup_time, Some(0.7));
    }

    #[test]
    fn pure_heat_decay_fits_half() {
        // sup of a spreading unit-mass bump: (4 pi t)^(-1/2).
        let traj = synthetic_trajectory(
            |t| (4.0 * std::f64::consts::PI * t).powf(-0.5),
            100.0,
            60,
            Termination::ReachedTmax,
        );
        let verdict = classify(&traj, &params(4.0, 4.0, 0.0));
        assert_eq!(verdict.kind, RegimeKind::Global);
        let (slope, _) = verdict.decay_fit_u.unwrap();
        assert!((slope + 0.5).abs() < 0.05, "heat decay slope {slope}");
        // Faster than the guaranteed t^(-1/3): recorded, but not in
        // agreement with the saturating rate.
        assert_eq!(verdict.agreement, Some(false));
    }

    #[test]
    fn saturating_decay_agrees() {
        let traj = synthetic_trajectory(
            |t| 0.3 * t.powf(-1.0 / 3.0),
            100.0,
            60,
            Termination::ReachedTmax,
        );
        let verdict = classify(&traj, &params(4.0, 4.0, 0.0));
        assert_eq!(verdict.kind, RegimeKind::Global);
        assert_eq!(verdict.agreement, Some(true));
    }

    #[test]
    fn short_tail_is_inconclusive() {
        let traj = synthetic_trajectory(|t| t.powf(-0.5), 1.0, 8, Termination::ReachedTmax);
        let verdict = classify(&traj, &params(4.0, 4.0, 0.0));
        assert_eq!(verdict.kind, RegimeKind::Inconclusive);
        assert!(verdict.reason.unwrap().contains("tail samples"));
    }

    #[test]
    fn zero_solution_series_vanishes() {
        // p < 1 also exercises the sublinear branch of the bounded
        // quantity (t^(p gamma2) sup S(t) v^p).
        let grid = build_grid(1, 5.0, 101).unwrap();
        let op = assemble_operator(&grid, WeightSpec::new(WeightCase::A, 0.0, 1).unwrap()).unwrap();
        let pp = ProblemParams::new(0.5, 3.0, 0.0, 0.0, 0.0, 1, WeightCase::A).unwrap();
        let zero = Field::zeros(&grid);
        let mut controls = SolveControls::new(2.0);
        controls.store_snapshots = true;
        let traj = solve(&pp, &op, &zero, &zero, &controls).unwrap();
        let series = necessary_condition(&traj, &pp, &op, 16).unwrap();
        assert!(!series.points.is_empty());
        for pt in &series.points {
            assert_eq!(pt.value_u, 0.0);
            assert_eq!(pt.value_v, 0.0);
        }
        assert_eq!(series.sup_u, 0.0);
    }

    #[test]
    fn zero_run_lower_bound_holds() {
        let grid = build_grid(1, 5.0, 101).unwrap();
        let op = assemble_operator(&grid, WeightSpec::new(WeightCase::A, 0.0, 1).unwrap()).unwrap();
        let pp = params(2.0, 2.0, 0.0);
        let zero = Field::zeros(&grid);
        let mut controls = SolveControls::new(1.0);
        controls.store_snapshots = true;
        let traj = solve(&pp, &op, &zero, &zero, &controls).unwrap();
        let report = lower_bound_check(&pp, &op, &zero, &traj, 1, 16).unwrap();
        assert!(report.worst >= -1e-12, "zero data: both sides vanish");
        assert!((report.c_k - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn sweep_empty_ranges_give_empty_table() {
        let spec = SweepSpec {
            p_values: vec![],
            q_values: vec![],
            scales: vec![],
            r: 0.0,
            s: 0.0,
            alpha: 0.0,
            dim: 1,
            weight_case: WeightCase::A,
            shape: DataShape::Gaussian { width: 1.0 },
            grid_half_width: 5.0,
            grid_cells: 51,
            controls: SolveControls::new(1.0),
            crit_margin: 0.02,
            curve_points: 0,
        };
        let results = sweep(&spec).unwrap();
        assert!(results.rows.is_empty());
        assert_eq!(results.summary.points_total, 0);
    }

    #[test]
    fn sweep_rejects_pq_below_one() {
        let spec = SweepSpec {
            p_values: vec![0.5],
            q_values: vec![1.0],
            scales: vec![1.0],
            r: 0.0,
            s: 0.0,
            alpha: 0.0,
            dim: 1,
            weight_case: WeightCase::A,
            shape: DataShape::Gaussian { width: 1.0 },
            grid_half_width: 5.0,
            grid_cells: 51,
            controls: SolveControls::new(1.0),
            crit_margin: 0.02,
            curve_points: 0,
        };
        assert!(sweep(&spec).is_err());
    }

    #[test]
    fn critical_curve_sits_on_threshold() {
        let spec = SweepSpec {
            p_values: vec![1.5, 4.0],
            q_values: vec![2.0],
            scales: vec![1.0],
            r: 0.0,
            s: 0.0,
            alpha: 0.5,
            dim: 1,
            weight_case: WeightCase::A,
            shape: DataShape::Gaussian { width: 1.0 },
            grid_half_width: 5.0,
            grid_cells: 51,
            controls: SolveControls::new(1.0),
            crit_margin: 0.02,
            curve_points: 25,
        };
        let curve = critical_curve(&spec, 25);
        assert!(!curve.is_empty());
        let target = 1.0 / 1.5;
        for &(p, q) in &curve {
            let pp = ProblemParams::new(p, q, 0.0, 0.0, 0.5, 1, WeightCase::A).unwrap();
            let rep = derive_exponents(&pp);
            assert!(
                (rep.gamma - target).abs() < 1e-6,
                "curve point ({p}, {q}) off the threshold: gamma = {}",
                rep.gamma
            );
        }
    }
}
