//! Time integration of the coupled system
//!
//! ```text
//! u_t - div(w grad u) = t^r v^p
//! v_t - div(w grad v) = t^s u^q
//! ```
//!
//! Two independent discretizations live here. The production solver is
//! IMEX: reaction sources are explicit with the singular time weight
//! integrated in closed form across each step (never evaluated pointwise
//! at sigma = 0), diffusion is implicit Euler. The second route iterates
//! the integral (Duhamel) form directly on a fixed slice grid; its
//! iterates are cellwise nondecreasing and converge to the mild solution
//! for small horizons, which gives a cross-check on the IMEX path.
//!
//! Sublinear source exponents (p < 1) get a nondecreasing, globally
//! Lipschitz source approximation: y^p above a threshold 1/(2n), a linear
//! ramp below it.

use crate::error::{Error, Result};
use crate::exponents::{derive_exponents, ProblemParams};
use crate::grid::{norm, Field, NormKind};
use crate::semigroup::{DiffusionOperator, ImplicitStepper};

/// Relative change per step above which a step is rejected and retried
/// with half the step size.
const REL_CHANGE_SHRINK: f64 = 0.10;
/// Relative change per step below which the step size grows.
const REL_CHANGE_GROW: f64 = 0.01;
/// Step growth factor.
const DT_GROWTH: f64 = 1.2;

/// Exact integral of sigma^r over [t0, t1]; finite for r > -1 even when
/// t0 = 0 and the integrand is singular there.
pub fn time_weight_integral(r: f64, t0: f64, t1: f64) -> Result<f64> {
    if !(r > -1.0) {
        return Err(Error::InvalidArgument(format!(
            "time weight exponent must exceed -1, got {r}; the weight is not integrable at 0"
        )));
    }
    if !(t0 >= 0.0 && t1 > t0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= t0 < t1, got [{t0}, {t1}]"
        )));
    }
    Ok((t1.powf(r + 1.0) - t0.powf(r + 1.0)) / (r + 1.0))
}

/// Nondecreasing, globally Lipschitz approximation of y -> y^p:
/// exactly y^p above 1/(2n), a linear ramp through the origin below.
#[derive(Debug, Clone, Copy)]
pub struct SourceApprox {
    pub n: u32,
    pub p: f64,
}

impl SourceApprox {
    pub fn new(n: u32, p: f64) -> Result<SourceApprox> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "approximation index n must be >= 1".into(),
            ));
        }
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "source exponent must be positive, got {p}"
            )));
        }
        Ok(SourceApprox { n, p })
    }

    pub fn threshold(&self) -> f64 {
        1.0 / (2.0 * self.n as f64)
    }

    pub fn source_value(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let thr = self.threshold();
        if y > thr {
            y.powf(self.p)
        } else {
            // Linear between (0,0) and (thr, thr^p); slope thr^(p-1).
            y * thr.powf(self.p - 1.0)
        }
    }
}

/// State of one trajectory between steps.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub dt: f64,
    pub step_count: u64,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    ReachedTmax,
    /// Sup norms crossed the blow-up threshold at this time.
    BlowupThreshold(f64),
    /// Step-size control collapsed below dt_min at this time.
    StepUnderflow(f64),
    SolverFailure(String),
}

impl Termination {
    pub fn blowup_time(&self) -> Option<f64> {
        match self {
            Termination::BlowupThreshold(t) | Termination::StepUnderflow(t) => Some(*t),
            _ => None,
        }
    }

    /// Short machine-readable label for CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            Termination::ReachedTmax => "reached_tmax",
            Termination::BlowupThreshold(_) => "blowup_threshold",
            Termination::StepUnderflow(_) => "step_underflow",
            Termination::SolverFailure(_) => "solver_failure",
        }
    }
}

/// One observability record. Weak norms use the indices r1*, r2* of the
/// parameter tuple and are NaN when those indices are <= 1 (the weak
/// norm is defined for indices > 1 only).
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub t: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    pub weak_u: f64,
    pub weak_v: f64,
    pub mass_u: f64,
    pub mass_v: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// (t, u, v) at sample times, kept only when requested.
    pub snapshots: Vec<(f64, Field, Field)>,
    pub termination: Termination,
    pub steps_taken: u64,
    /// Max over the run of (boundary cell sup) / (overall sup): box-health
    /// diagnostic, should stay small for runs meant to emulate free space.
    pub boundary_ratio: f64,
    pub r1_star: f64,
    pub r2_star: f64,
}

/// Step-size policy and termination thresholds for `solve`.
#[derive(Debug, Clone)]
pub struct SolveControls {
    pub t_max: f64,
    pub dt_init: f64,
    /// Cap on the step size; default t_max / 100.
    pub dt_max: f64,
    /// dt_min = dt_min_factor * t_max; crossing it is StepUnderflow.
    pub dt_min_factor: f64,
    /// Blow-up threshold = blowup_factor * initial (sup u + sup v);
    /// infinite for identically zero data.
    pub blowup_factor: f64,
    /// Geometric sample ladder ratio.
    pub sample_ratio: f64,
    /// Disable adaptivity: every step uses dt_init (still clipped to land
    /// exactly on ladder times). Used when two runs must share a partition.
    pub fixed_dt: bool,
    pub store_snapshots: bool,
}

impl SolveControls {
    pub fn new(t_max: f64) -> SolveControls {
        SolveControls {
            t_max,
            dt_init: 1e-3,
            dt_max: t_max / 100.0,
            dt_min_factor: 1e-12,
            blowup_factor: 1e8,
            sample_ratio: 10.0_f64.powf(1.0 / 16.0),
            fixed_dt: false,
            store_snapshots: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        if !(self.dt_init > 0.0 && self.dt_init < self.t_max) {
            return Err(Error::InvalidArgument(format!(
                "dt_init must lie in (0, t_max), got {}",
                self.dt_init
            )));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt_max must be positive, got {}",
                self.dt_max
            )));
        }
        if !(self.sample_ratio > 1.0) {
            return Err(Error::InvalidArgument(
                "sample_ratio must exceed 1".into(),
            ));
        }
        Ok(())
    }

    /// Ascending geometric ladder of sample times ending at t_max.
    fn sample_ladder(&self) -> Vec<f64> {
        let mut ladder = Vec::new();
        let mut t = self.t_max;
        while t > self.dt_init * 1.0001 {
            ladder.push(t);
            t /= self.sample_ratio;
        }
        ladder.reverse();
        ladder
    }
}

fn weak_or_nan(field: &Field, zeta: f64) -> f64 {
    if zeta > 1.0 {
        norm(field, zeta, NormKind::WeakLorentz).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    }
}

fn make_sample(t: f64, u: &Field, v: &Field, r1: f64, r2: f64) -> Sample {
    Sample {
        t,
        sup_u: u.sup(),
        sup_v: v.sup(),
        weak_u: weak_or_nan(u, r1),
        weak_v: weak_or_nan(v, r2),
        mass_u: u.mass(),
        mass_v: v.mass(),
    }
}

/// One IMEX step of size `stepper.dt()`: explicit product-integrated
/// sources from the current state, then implicit diffusion of each
/// component.
fn step_with(
    state: &SystemState,
    stepper: &ImplicitStepper<'_>,
    params: &ProblemParams,
    approx: Option<&SourceApprox>,
) -> Result<(Field, Field)> {
    let dt = stepper.dt();
    let w_r = time_weight_integral(params.r, state.t, state.t + dt)?;
    let w_s = time_weight_integral(params.s, state.t, state.t + dt)?;
    let source_u = match approx {
        Some(a) => state.v.map(|y| a.source_value(y)),
        None => state.v.pow_positive(params.p),
    };
    let source_v = state.u.pow_positive(params.q);

    let mut u_new = state.u.clone();
    u_new.add_scaled(w_r, &source_u);
    let mut uv = u_new.values().to_vec();
    stepper.advance(&mut uv)?;

    let mut v_new = state.v.clone();
    v_new.add_scaled(w_s, &source_v);
    let mut vv = v_new.values().to_vec();
    stepper.advance(&mut vv)?;

    Ok((
        Field::from_values(state.u.grid(), uv),
        Field::from_values(state.v.grid(), vv),
    ))
}

/// Single IMEX step at the state's own dt. Factors the step matrix on
/// every call; `solve` caches the factorization across steps instead.
pub fn step_imex(
    state: &SystemState,
    op: &DiffusionOperator,
    params: &ProblemParams,
    approx: Option<&SourceApprox>,
) -> Result<SystemState> {
    params.validate()?;
    let stepper = op.stepper(state.dt)?;
    let (u, v) = step_with(state, &stepper, params, approx)?;
    Ok(SystemState {
        t: state.t + state.dt,
        u,
        v,
        dt: state.dt,
        step_count: state.step_count + 1,
    })
}

/// Integrates the system from (u0, v0) with adaptive IMEX stepping.
///
/// Terminates at t_max, at the blow-up threshold, or when the step size
/// collapses; solver breakdown is reported in the termination rather
/// than as an error. Samples land exactly on the geometric ladder times
/// (steps are clipped), so two runs with the same controls sample at
/// identical times and stay cellwise comparable.
pub fn solve(
    params: &ProblemParams,
    op: &DiffusionOperator,
    u0: &Field,
    v0: &Field,
    controls: &SolveControls,
) -> Result<Trajectory> {
    params.validate()?;
    controls.validate()?;
    if u0.min_value() < -1e-12 || v0.min_value() < -1e-12 {
        return Err(Error::InvalidArgument(
            "initial data must be nonnegative".into(),
        ));
    }
    if !u0.all_finite() || !v0.all_finite() {
        return Err(Error::InvalidArgument("initial data must be finite".into()));
    }
    let approx = if params.p < 1.0 {
        Some(SourceApprox::new(1_000_000, params.p)?)
    } else {
        None
    };
    let rep = derive_exponents(params);
    let (r1, r2) = (rep.r1_star, rep.r2_star);

    let init_sup = u0.sup() + v0.sup();
    let m_blow = if init_sup > 0.0 {
        controls.blowup_factor * init_sup
    } else {
        f64::INFINITY
    };
    let dt_min = controls.dt_min_factor * controls.t_max;
    let ladder = controls.sample_ladder();

    let mut samples = Vec::new();
    let mut snapshots = Vec::new();
    let mut max_sup = init_sup.max(f64::MIN_POSITIVE);
    let mut max_boundary = u0.boundary_sup().max(v0.boundary_sup());

    let mut state = SystemState {
        t: 0.0,
        u: u0.clone(),
        v: v0.clone(),
        dt: controls.dt_init,
        step_count: 0,
    };
    let mut next_sample = 0usize;
    let mut stepper: Option<ImplicitStepper<'_>> = None;
    let mut stepper_dt = f64::NAN;

    let termination = 'outer: loop {
        if state.t >= controls.t_max * (1.0 - 1e-14) {
            break Termination::ReachedTmax;
        }
        // Clip so steps land exactly on ladder times and t_max.
        let mut dt_eff = state.dt.min(controls.t_max - state.t);
        let mut hits_sample = false;
        if next_sample < ladder.len() {
            let target = ladder[next_sample];
            if state.t + dt_eff >= target - 1e-14 * controls.t_max {
                dt_eff = target - state.t;
                hits_sample = true;
            }
        }

        loop {
            if stepper.is_none() || stepper_dt != dt_eff {
                match op.stepper(dt_eff) {
                    Ok(s) => {
                        stepper = Some(s);
                        stepper_dt = dt_eff;
                    }
                    Err(e) => break 'outer Termination::SolverFailure(e.to_string()),
                }
            }
            let (u_new, v_new) =
                match step_with(&state, stepper.as_ref().unwrap(), params, approx.as_ref()) {
                    Ok(pair) => pair,
                    Err(e) => break 'outer Termination::SolverFailure(e.to_string()),
                };
            let sup_new = u_new.sup() + v_new.sup();
            if !sup_new.is_finite() {
                break 'outer Termination::SolverFailure("non-finite state".into());
            }
            let sup_old = state.u.sup() + state.v.sup();
            let rel = ((u_new.sup() - state.u.sup()).abs() + (v_new.sup() - state.v.sup()).abs())
                / sup_old.max(f64::MIN_POSITIVE);

            if !controls.fixed_dt && rel > REL_CHANGE_SHRINK && dt_eff > dt_min {
                // Reject and retry with half the step.
                dt_eff *= 0.5;
                hits_sample = false;
                state.dt = dt_eff;
                if dt_eff < dt_min {
                    break 'outer Termination::StepUnderflow(state.t);
                }
                continue;
            }

            let t_new = if hits_sample {
                let t = ladder[next_sample];
                next_sample += 1;
                t
            } else {
                state.t + dt_eff
            };
            state = SystemState {
                t: t_new,
                u: u_new,
                v: v_new,
                dt: state.dt,
                step_count: state.step_count + 1,
            };
            max_sup = max_sup.max(sup_new);
            max_boundary = max_boundary
                .max(state.u.boundary_sup())
                .max(state.v.boundary_sup());

            if hits_sample {
                samples.push(make_sample(state.t, &state.u, &state.v, r1, r2));
                if controls.store_snapshots {
                    snapshots.push((state.t, state.u.clone(), state.v.clone()));
                }
            }
            if sup_new >= m_blow {
                if !hits_sample {
                    samples.push(make_sample(state.t, &state.u, &state.v, r1, r2));
                    if controls.store_snapshots {
                        snapshots.push((state.t, state.u.clone(), state.v.clone()));
                    }
                }
                break 'outer Termination::BlowupThreshold(state.t);
            }
            if !controls.fixed_dt {
                if rel < REL_CHANGE_GROW {
                    state.dt = (state.dt * DT_GROWTH).min(controls.dt_max);
                } else if rel > REL_CHANGE_SHRINK {
                    // Fell here because dt_min stopped further shrinking.
                    state.dt = dt_min.max(dt_eff);
                }
            }
            break;
        }
        if state.dt < dt_min {
            break Termination::StepUnderflow(state.t);
        }
    };

    // Make sure the terminal state is sampled even off-ladder.
    if samples.last().map(|s| s.t < state.t * (1.0 - 1e-14)).unwrap_or(true) && state.t > 0.0 {
        samples.push(make_sample(state.t, &state.u, &state.v, r1, r2));
        if controls.store_snapshots {
            snapshots.push((state.t, state.u.clone(), state.v.clone()));
        }
    }

    Ok(Trajectory {
        samples,
        snapshots,
        termination,
        steps_taken: state.step_count,
        boundary_ratio: max_boundary / max_sup,
        r1_star: r1,
        r2_star: r2,
    })
}

/// Convergence report of the integral-form iteration on [0, T].
#[derive(Debug, Clone)]
pub struct PicardReport {
    /// Slice times 0 = tau_0 < ... < tau_m = T.
    pub times: Vec<f64>,
    /// Final iterate at each slice time.
    pub u: Vec<Field>,
    pub v: Vec<Field>,
    /// Sup gap between consecutive iterates, one entry per sweep.
    pub gap_history: Vec<f64>,
    /// Whether every sweep stayed cellwise nondecreasing.
    pub monotone: bool,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    pub slices: usize,
    pub max_iters: usize,
    /// Convergence when the sup gap falls below tol_rel * solution scale.
    pub tol_rel: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            slices: 24,
            max_iters: 30,
            tol_rel: 1e-9,
        }
    }
}

/// Iterates the integral form on a fixed slice grid:
///
/// ```text
/// u_{k+1}(tau_j) = S(tau_j) u0
///   + sum_{i<j} [integral of sigma^r over slice i] S(tau_j - tau_{i+1}) f(v_k(tau_i))
/// ```
///
/// with the symmetric update for v. Iterates are cellwise nondecreasing;
/// a report that did not converge signals the horizon T is too large for
/// this data.
///
/// For p >= 1 and q >= 1, call with `approx = None`. For p < 1 supply a
/// `SourceApprox` (requires q >= 1): the u-source becomes f_n(v) and the
/// v datum is shifted to v0 + 1/n, which keeps v above the ramp region;
/// the resulting solutions decrease toward the mild solution as n grows.
pub fn picard_local(
    params: &ProblemParams,
    op: &DiffusionOperator,
    u0: &Field,
    v0: &Field,
    t_end: f64,
    opts: &PicardOptions,
    approx: Option<&SourceApprox>,
) -> Result<PicardReport> {
    params.validate()?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {t_end}"
        )));
    }
    if opts.slices < 2 {
        return Err(Error::InvalidArgument("need at least 2 slices".into()));
    }
    match approx {
        None => {
            if params.p < 1.0 || params.q < 1.0 {
                return Err(Error::InvalidArgument(
                    "direct iteration needs p, q >= 1; supply a source approximation for p < 1"
                        .into(),
                ));
            }
        }
        Some(a) => {
            if params.q < 1.0 {
                return Err(Error::InvalidArgument(
                    "the source approximation is set up for p < 1 with q >= 1".into(),
                ));
            }
            if (a.p - params.p).abs() > 1e-14 {
                return Err(Error::InvalidArgument(
                    "approximation exponent differs from the problem's p".into(),
                ));
            }
        }
    }

    let m = opts.slices;
    let delta = t_end / m as f64;
    let stepper = op.stepper(delta)?;
    let times: Vec<f64> = (0..=m).map(|j| j as f64 * delta).collect();

    let v_datum = match approx {
        Some(a) => v0.map(|y| y + 1.0 / a.n as f64),
        None => v0.clone(),
    };

    // Base iterate: pure diffusion of the data.
    let mut u_base = Vec::with_capacity(m + 1);
    let mut v_base = Vec::with_capacity(m + 1);
    u_base.push(u0.clone());
    v_base.push(v_datum.clone());
    for j in 1..=m {
        let mut uu = u_base[j - 1].values().to_vec();
        stepper.advance(&mut uu)?;
        u_base.push(Field::from_values(u0.grid(), uu));
        let mut vv = v_base[j - 1].values().to_vec();
        stepper.advance(&mut vv)?;
        v_base.push(Field::from_values(v0.grid(), vv));
    }

    let w_r: Vec<f64> = (0..m)
        .map(|i| time_weight_integral(params.r, times[i], times[i + 1]))
        .collect::<Result<_>>()?;
    let w_s: Vec<f64> = (0..m)
        .map(|i| time_weight_integral(params.s, times[i], times[i + 1]))
        .collect::<Result<_>>()?;

    let source_u = |v: &Field| match approx {
        Some(a) => v.map(|y| a.source_value(y)),
        None => v.pow_positive(params.p),
    };

    let mut u_cur = u_base.clone();
    let mut v_cur = v_base.clone();
    let mut gap_history = Vec::new();
    let mut monotone = true;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let mut u_next = u_base.clone();
        let mut v_next = v_base.clone();
        for i in 0..m {
            let mut acc_u = source_u(&v_cur[i]).scaled(w_r[i]).values().to_vec();
            let mut acc_v = u_cur[i].pow_positive(params.q).scaled(w_s[i]).values().to_vec();
            for j in (i + 1)..=m {
                if j > i + 1 {
                    stepper.advance(&mut acc_u)?;
                    stepper.advance(&mut acc_v)?;
                }
                for (t, a) in u_next[j].values_mut().iter_mut().zip(acc_u.iter()) {
                    *t += a;
                }
                for (t, a) in v_next[j].values_mut().iter_mut().zip(acc_v.iter()) {
                    *t += a;
                }
            }
        }

        let mut gap = 0.0_f64;
        let mut scale = 0.0_f64;
        for j in 0..=m {
            scale = scale.max(u_next[j].sup() + v_next[j].sup());
            for i in 0..u_next[j].len() {
                let du = u_next[j].values()[i] - u_cur[j].values()[i];
                let dv = v_next[j].values()[i] - v_cur[j].values()[i];
                gap = gap.max(du.abs()).max(dv.abs());
                if du < -1e-10 * scale.max(1e-300) || dv < -1e-10 * scale.max(1e-300) {
                    monotone = false;
                }
            }
        }
        u_cur = u_next;
        v_cur = v_next;
        gap_history.push(gap);
        if gap <= opts.tol_rel * scale.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    Ok(PicardReport {
        times,
        u: u_cur,
        v: v_cur,
        gap_history,
        monotone,
        converged,
        iterations,
    })
}
