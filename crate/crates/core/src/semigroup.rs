//! Discrete generator of the diffusion semigroup S(t) for
//! `W_t = div(w(x) grad W)`.
//!
//! The operator is a conservative finite-volume discretization: the weight
//! is evaluated at cell-face midpoints (which never touch the degeneracy
//! set, by grid construction), and the boundary closure is Neumann, so the
//! discrete mass is conserved structurally rather than approximately.
//! Time stepping is implicit Euler; the step matrix (I + dt M) is an
//! M-matrix, so nonnegative inputs stay nonnegative and the row sums are
//! exactly one, which also makes the cellwise Jensen inequalities carry
//! over to the discrete semigroup.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fit::loglog_fit;
use crate::grid::{Field, Grid, WeightSpec};
use crate::linalg::{BandedCholesky, BandedSpd};

/// Relative residual each implicit solve must meet.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-12;

/// Finite-volume divergence-form operator `A u = div(w grad u)` with
/// Neumann closure. Symmetric with zero row sums.
#[derive(Debug)]
pub struct DiffusionOperator {
    grid: Arc<Grid>,
    spec: WeightSpec,
    /// Face coefficients along x: between cells (ix, iy) and (ix+1, iy),
    /// stored at iy * (cpa - 1) + ix. In 1D just the cpa - 1 interior faces.
    faces_x: Vec<f64>,
    /// Face coefficients along y (2D only): between (ix, iy) and (ix, iy+1),
    /// stored at iy * cpa + ix for iy < cpa - 1.
    faces_y: Vec<f64>,
    inv_h2: f64,
}

/// Mean of |x|^a over [lo, hi], in closed form. Positive whenever the
/// interval is nondegenerate, including intervals straddling zero.
fn mean_abs_pow(lo: f64, hi: f64, a: f64) -> f64 {
    let anti = |x: f64| x.signum() * x.abs().powf(a + 1.0) / (a + 1.0);
    (anti(hi) - anti(lo)) / (hi - lo)
}

/// Builds the operator for a grid and weight.
///
/// Face coefficients are the weight at the face midpoint, except for 2D
/// case-A faces that the degeneracy line x_1 = 0 crosses (the transverse
/// faces of the middle cell column, whose midpoints sit on the line):
/// those use the exact mean of the weight over the face, which is the
/// conservative finite-volume coefficient and is strictly positive.
pub fn assemble_operator(grid: &Arc<Grid>, spec: WeightSpec) -> Result<DiffusionOperator> {
    let cpa = grid.cells_per_axis();
    let h = grid.spacing();
    let centers = grid.axis_centers();
    let mut faces_x = Vec::new();
    let mut faces_y = Vec::new();
    match grid.dim() {
        1 => {
            for ix in 0..cpa - 1 {
                let x = centers[ix] + 0.5 * h;
                faces_x.push(spec.weight_at(&[x]));
            }
        }
        _ => {
            for iy in 0..cpa {
                for ix in 0..cpa - 1 {
                    let x = centers[ix] + 0.5 * h;
                    faces_x.push(spec.weight_at(&[x, centers[iy]]));
                }
            }
            for iy in 0..cpa - 1 {
                for ix in 0..cpa {
                    let y = centers[iy] + 0.5 * h;
                    let coeff = match spec.case {
                        crate::grid::WeightCase::A => {
                            mean_abs_pow(centers[ix] - 0.5 * h, centers[ix] + 0.5 * h, spec.alpha)
                        }
                        crate::grid::WeightCase::B => spec.weight_at(&[centers[ix], y]),
                    };
                    faces_y.push(coeff);
                }
            }
        }
    }
    if faces_x.iter().chain(faces_y.iter()).any(|c| !(*c > 0.0)) {
        return Err(Error::Grid(
            "a face coefficient vanished; a cell face sits on the degeneracy set".into(),
        ));
    }
    Ok(DiffusionOperator {
        grid: Arc::clone(grid),
        spec,
        faces_x,
        faces_y,
        inv_h2: 1.0 / (h * h),
    })
}

impl DiffusionOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn weight_spec(&self) -> WeightSpec {
        self.spec
    }

    /// Self-similar space scale exponent: widths grow like t^(1/(2-alpha)).
    pub fn space_scale_exponent(&self) -> f64 {
        1.0 / (2.0 - self.spec.alpha)
    }

    /// Kernel sup-norm decay exponent N/(2-alpha).
    pub fn decay_exponent(&self) -> f64 {
        self.grid.dim() as f64 / (2.0 - self.spec.alpha)
    }

    /// y = A u (divergence form, Neumann closure).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let cpa = self.grid.cells_per_axis();
        let mut y = vec![0.0; u.len()];
        match self.grid.dim() {
            1 => {
                for ix in 0..cpa - 1 {
                    let flux = self.faces_x[ix] * (u[ix + 1] - u[ix]) * self.inv_h2;
                    y[ix] += flux;
                    y[ix + 1] -= flux;
                }
            }
            _ => {
                for iy in 0..cpa {
                    for ix in 0..cpa - 1 {
                        let i = self.grid.index2(ix, iy);
                        let c = self.faces_x[iy * (cpa - 1) + ix];
                        let flux = c * (u[i + 1] - u[i]) * self.inv_h2;
                        y[i] += flux;
                        y[i + 1] -= flux;
                    }
                }
                for iy in 0..cpa - 1 {
                    for ix in 0..cpa {
                        let i = self.grid.index2(ix, iy);
                        let j = self.grid.index2(ix, iy + 1);
                        let c = self.faces_y[iy * cpa + ix];
                        let flux = c * (u[j] - u[i]) * self.inv_h2;
                        y[i] += flux;
                        y[j] -= flux;
                    }
                }
            }
        }
        y
    }

    /// Assembles (I - dt A) in banded storage.
    fn system_matrix(&self, dt: f64) -> BandedSpd {
        let cpa = self.grid.cells_per_axis();
        let n = self.grid.n_cells();
        let bw = if self.grid.dim() == 1 { 1 } else { cpa };
        let mut m = BandedSpd::zeros(n, bw);
        for i in 0..n {
            m.add(i, 0, 1.0);
        }
        let scale = dt * self.inv_h2;
        match self.grid.dim() {
            1 => {
                for ix in 0..cpa - 1 {
                    let c = self.faces_x[ix] * scale;
                    m.add(ix, 0, c);
                    m.add(ix + 1, 0, c);
                    m.add(ix, 1, -c);
                }
            }
            _ => {
                for iy in 0..cpa {
                    for ix in 0..cpa - 1 {
                        let i = self.grid.index2(ix, iy);
                        let c = self.faces_x[iy * (cpa - 1) + ix] * scale;
                        m.add(i, 0, c);
                        m.add(i + 1, 0, c);
                        m.add(i, 1, -c);
                    }
                }
                for iy in 0..cpa - 1 {
                    for ix in 0..cpa {
                        let i = self.grid.index2(ix, iy);
                        let c = self.faces_y[iy * cpa + ix] * scale;
                        m.add(i, 0, c);
                        m.add(self.grid.index2(ix, iy + 1), 0, c);
                        m.add(i, bw, -c);
                    }
                }
            }
        }
        m
    }

    /// Max over cells of the total face coupling sum(c)/h^2; the diagonal
    /// of -A, used to bound the step matrix norm.
    fn max_row_coupling(&self) -> f64 {
        let cpa = self.grid.cells_per_axis();
        let mut row = vec![0.0_f64; self.grid.n_cells()];
        match self.grid.dim() {
            1 => {
                for ix in 0..cpa - 1 {
                    let c = self.faces_x[ix] * self.inv_h2;
                    row[ix] += c;
                    row[ix + 1] += c;
                }
            }
            _ => {
                for iy in 0..cpa {
                    for ix in 0..cpa - 1 {
                        let i = self.grid.index2(ix, iy);
                        let c = self.faces_x[iy * (cpa - 1) + ix] * self.inv_h2;
                        row[i] += c;
                        row[i + 1] += c;
                    }
                }
                for iy in 0..cpa - 1 {
                    for ix in 0..cpa {
                        let c = self.faces_y[iy * cpa + ix] * self.inv_h2;
                        row[self.grid.index2(ix, iy)] += c;
                        row[self.grid.index2(ix, iy + 1)] += c;
                    }
                }
            }
        }
        row.iter().fold(0.0_f64, |m, v| m.max(*v))
    }

    /// Factors the implicit Euler step matrix for substep size `dt`.
    pub fn stepper(&self, dt: f64) -> Result<ImplicitStepper<'_>> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "substep size must be positive and finite, got {dt}"
            )));
        }
        let chol = self.system_matrix(dt).cholesky()?;
        let matrix_norm = 1.0 + 2.0 * dt * self.max_row_coupling();
        Ok(ImplicitStepper {
            op: self,
            dt,
            chol,
            matrix_norm,
        })
    }
}

/// One factored implicit Euler substep (I - dt A) x = b.
pub struct ImplicitStepper<'a> {
    op: &'a DiffusionOperator,
    dt: f64,
    chol: BandedCholesky,
    /// Row-sum norm of (I - dt A); scales the backward-error contract.
    matrix_norm: f64,
}

impl ImplicitStepper<'_> {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `values` by one substep, enforcing the residual contract
    /// `|r| <= tol (|b| + |M| |x|)` (one round of iterative refinement
    /// before giving up).
    pub fn advance(&self, values: &mut [f64]) -> Result<()> {
        let b = values.to_vec();
        let b_sup = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if b_sup == 0.0 {
            return Ok(());
        }
        self.chol.solve_in_place(values);
        let scale = |x: &[f64]| {
            b_sup + self.matrix_norm * x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
        };
        let mut res = self.residual(&b, values);
        if res > SOLVE_RESIDUAL_TOL * scale(values) {
            let mut corr = self.residual_vector(&b, values);
            self.chol.solve_in_place(&mut corr);
            for (v, c) in values.iter_mut().zip(corr.iter()) {
                *v += c;
            }
            res = self.residual(&b, values);
            if res > SOLVE_RESIDUAL_TOL * scale(values) {
                return Err(Error::Solve(format!(
                    "implicit step residual {res:.3e} exceeds contract {:.1e} (rhs sup {b_sup:.3e}, matrix norm {:.3e})",
                    SOLVE_RESIDUAL_TOL, self.matrix_norm
                )));
            }
        }
        Ok(())
    }

    fn residual_vector(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        let ax = self.op.apply(x);
        (0..b.len())
            .map(|i| b[i] - (x[i] - self.dt * ax[i]))
            .collect()
    }

    fn residual(&self, b: &[f64], x: &[f64]) -> f64 {
        self.residual_vector(b, x)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Applies the discrete semigroup: `steps` implicit Euler substeps of size
/// t/steps. t = 0 returns the input unchanged.
pub fn apply_semigroup(op: &DiffusionOperator, phi: &Field, t: f64, steps: usize) -> Result<Field> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "time must be nonnegative and finite, got {t}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    if t == 0.0 {
        return Ok(phi.clone());
    }
    let stepper = op.stepper(t / steps as f64)?;
    let mut values = phi.values().to_vec();
    for _ in 0..steps {
        stepper.advance(&mut values)?;
    }
    Ok(Field::from_values(phi.grid(), values))
}

/// Numerical fundamental solution column: S(t) applied to the normalized
/// indicator of `source_cell` (discrete mass one).
pub fn fundamental_column(
    op: &DiffusionOperator,
    source_cell: usize,
    t: f64,
    steps: usize,
) -> Result<Field> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "fundamental column needs t > 0, got {t}"
        )));
    }
    let grid = op.grid();
    if source_cell >= grid.n_cells() {
        return Err(Error::InvalidArgument(format!(
            "source cell {source_cell} out of range"
        )));
    }
    let mut delta = Field::zeros(grid);
    delta.values_mut()[source_cell] = 1.0 / grid.cell_volume();
    apply_semigroup(op, &delta, t, steps)
}

/// Probe configuration: times span [t_min, t_max] (one decade by default)
/// and every semigroup application uses `steps` substeps.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub n_times: usize,
    pub steps: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            t_min: 0.4,
            t_max: 4.0,
            n_times: 9,
            steps: 256,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SupCurvePoint {
    pub t: f64,
    pub sup: f64,
    /// Reference line sup(t_0) * (t/t_0)^(-N/(2-alpha)).
    pub predicted: f64,
}

/// Measured kernel properties: mass, semigroup composition, near-diagonal
/// lower bounds, and the sup-norm smoothing rate.
#[derive(Debug, Clone)]
pub struct KernelProbeReport {
    /// Max over probed (y, t) of |integral of the column - 1|.
    pub mass_defect: f64,
    /// Relative L1 defect of S(a) S(b) delta vs S(a+b) delta.
    pub chapman_kolmogorov_error: f64,
    /// Min over probed (y, t) of the column mass inside the ball
    /// |x| <= t^(1/(2-alpha)).
    pub k4_constant: f64,
    /// Min over the probed near-diagonal region of Gamma * t^(N/(2-alpha)).
    pub k5_constant: f64,
    /// Time range the near-diagonal constants were measured on.
    pub k5_time_range: (f64, f64),
    /// Largest self-similar ball radius used by the probe.
    pub k5_ball_radius_max: f64,
    /// Fitted slope and standard error of log sup S(t)delta vs log t.
    pub smoothing_fit: (f64, f64),
    /// -N/(2-alpha), the rate the fit is compared against.
    pub predicted_slope: f64,
    /// Empirical constant c in min_{ball} S(t)phi >= c t^(-N/(2-alpha)) mass(phi)
    /// for phi supported in the self-similar ball.
    pub lower_bound_constant: f64,
    /// max/min of the empirical constant across the probed decade.
    pub lower_bound_stability: f64,
    pub sup_curve: Vec<SupCurvePoint>,
    /// Set when the probe region does not fit in the truncation box;
    /// measurements are reported but must not be trusted blindly.
    pub inconclusive: Option<String>,
}

pub fn kernel_probe(op: &DiffusionOperator, cfg: &ProbeConfig) -> Result<KernelProbeReport> {
    if !(cfg.t_min > 0.0 && cfg.t_max > cfg.t_min) {
        return Err(Error::InvalidArgument(format!(
            "probe needs 0 < t_min < t_max, got [{}, {}]",
            cfg.t_min, cfg.t_max
        )));
    }
    if cfg.n_times < 3 {
        return Err(Error::InvalidArgument("probe needs at least 3 times".into()));
    }
    let grid = op.grid();
    let ss = op.space_scale_exponent();
    let decay = op.decay_exponent();
    let ball_max = cfg.t_max.powf(ss);
    let mut inconclusive = None;
    if ball_max > 0.45 * grid.half_width() {
        inconclusive = Some(format!(
            "self-similar ball radius {ball_max:.3} at t_max exceeds 0.45 L = {:.3}; enlarge the box or shorten the probe",
            0.45 * grid.half_width()
        ));
    }

    let ratio = (cfg.t_max / cfg.t_min).powf(1.0 / (cfg.n_times - 1) as f64);
    let times: Vec<f64> = (0..cfg.n_times)
        .map(|j| cfg.t_min * ratio.powi(j as i32))
        .collect();

    let center = grid.origin_index();
    let mut mass_defect = 0.0_f64;
    let mut k4 = f64::INFINITY;
    let mut k5 = f64::INFINITY;
    let mut sups = Vec::with_capacity(times.len());
    let mut lb_constants = Vec::with_capacity(times.len());
    let vol = grid.cell_volume();

    for &t in &times {
        let radius = t.powf(ss);
        // Second source offset from the origin but inside the ball.
        let off_cells = (0.5 * radius / grid.spacing()).floor() as usize;
        let off_cell = match grid.dim() {
            1 => center + off_cells.min(grid.cells_per_axis() - 1 - center),
            _ => center + off_cells.min(grid.cells_per_axis() - 1 - center % grid.cells_per_axis()),
        };
        let sources = if off_cell != center {
            vec![center, off_cell]
        } else {
            vec![center]
        };
        for (si, &src) in sources.iter().enumerate() {
            let col = fundamental_column(op, src, t, cfg.steps)?;
            mass_defect = mass_defect.max((col.mass() - 1.0).abs());
            if si == 0 {
                sups.push((t, col.sup()));
            }
            let mut ball_mass = 0.0;
            let mut ball_min = f64::INFINITY;
            for i in 0..col.len() {
                if grid.radius_of(i) <= radius {
                    ball_mass += col.values()[i] * vol;
                    ball_min = ball_min.min(col.values()[i]);
                }
            }
            k4 = k4.min(ball_mass);
            k5 = k5.min(ball_min * t.powf(decay));
        }

        // Lower-bound constant: phi = indicator of the self-similar ball.
        let phi = Field::from_fn(grid, |x| {
            let r = match x.len() {
                1 => x[0].abs(),
                _ => (x[0] * x[0] + x[1] * x[1]).sqrt(),
            };
            if r <= radius {
                1.0
            } else {
                0.0
            }
        });
        let evolved = apply_semigroup(op, &phi, t, cfg.steps)?;
        let mut min_in_ball = f64::INFINITY;
        for i in 0..evolved.len() {
            if grid.radius_of(i) <= radius {
                min_in_ball = min_in_ball.min(evolved.values()[i]);
            }
        }
        lb_constants.push(min_in_ball * t.powf(decay) / phi.mass());
    }

    // Chapman-Kolmogorov with deliberately incommensurate substep grids:
    // each application always uses cfg.steps substeps.
    let (ta, tb) = (cfg.t_min, 2.0 * cfg.t_min);
    let step_b = fundamental_column(op, center, tb, cfg.steps)?;
    let composed = apply_semigroup(op, &step_b, ta, cfg.steps)?;
    let direct = fundamental_column(op, center, ta + tb, cfg.steps)?;
    let mut diff_l1 = 0.0;
    let mut ref_l1 = 0.0;
    for i in 0..direct.len() {
        diff_l1 += (composed.values()[i] - direct.values()[i]).abs() * vol;
        ref_l1 += direct.values()[i].abs() * vol;
    }
    let ck_error = diff_l1 / ref_l1;

    let fit_points: Vec<(f64, f64)> = sups.clone();
    let smoothing_fit = loglog_fit(&fit_points).ok_or_else(|| {
        Error::Runtime("sup-norm curve not positive; cannot fit smoothing rate".into())
    })?;
    let (t0, sup0) = sups[0];
    let sup_curve = sups
        .iter()
        .map(|&(t, sup)| SupCurvePoint {
            t,
            sup,
            predicted: sup0 * (t / t0).powf(-decay),
        })
        .collect();

    let lb_min = lb_constants.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let lb_max = lb_constants.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));

    Ok(KernelProbeReport {
        mass_defect,
        chapman_kolmogorov_error: ck_error,
        k4_constant: k4,
        k5_constant: k5,
        k5_time_range: (cfg.t_min, cfg.t_max),
        k5_ball_radius_max: ball_max,
        smoothing_fit,
        predicted_slope: -decay,
        lower_bound_constant: lb_min,
        lower_bound_stability: lb_max / lb_min,
        sup_curve,
        inconclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, WeightCase};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn op_1d(alpha: f64, half_width: f64, cells: usize) -> DiffusionOperator {
        let grid = build_grid(1, half_width, cells).unwrap();
        let spec = WeightSpec::new(WeightCase::A, alpha, 1).unwrap();
        assemble_operator(&grid, spec).unwrap()
    }

    #[test]
    fn classical_operator_is_second_difference() {
        let op = op_1d(0.0, 2.5, 5);
        let h2 = op.grid().spacing() * op.grid().spacing();
        let mut u = vec![0.0; 5];
        u[2] = 1.0;
        let y = op.apply(&u);
        assert!((y[2] + 2.0 / h2).abs() < 1e-13);
        assert!((y[1] - 1.0 / h2).abs() < 1e-13);
        assert!((y[3] - 1.0 / h2).abs() < 1e-13);
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn degenerate_faces_next_to_origin() {
        let op = op_1d(0.5, 2.5, 5);
        let h = op.grid().spacing();
        // Faces at +-h/2 around the origin carry (h/2)^0.5.
        let mid = (5 - 1) / 2;
        assert!((op.faces_x[mid] - (h / 2.0_f64).sqrt()).abs() < 1e-13);
        assert!((op.faces_x[mid - 1] - (h / 2.0_f64).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn constant_field_is_annihilated() {
        for (dim, cells) in [(1usize, 31usize), (2, 9)] {
            let grid = build_grid(dim, 3.0, cells).unwrap();
            let spec = WeightSpec::new(WeightCase::B, 0.5, dim).unwrap();
            let op = assemble_operator(&grid, spec).unwrap();
            let u = vec![3.7; grid.n_cells()];
            let y = op.apply(&u);
            for v in y {
                assert!(v.abs() < 1e-12, "row sums must vanish");
            }
        }
    }

    #[test]
    fn operator_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (dim, cells) in [(1usize, 41usize), (2, 11)] {
            let grid = build_grid(dim, 2.0, cells).unwrap();
            let spec = WeightSpec::new(WeightCase::A, 0.4, dim).unwrap();
            let op = assemble_operator(&grid, spec).unwrap();
            let n = grid.n_cells();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let au = op.apply(&u);
            let aw = op.apply(&w);
            let left: f64 = au.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let right: f64 = aw.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
            assert!(
                (left - right).abs() < 1e-10 * (1.0 + left.abs()),
                "dim={dim}: asymmetry {left} vs {right}"
            );
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let op = op_1d(0.0, 5.0, 51);
        let phi = Field::from_fn(op.grid(), |x| (-x[0] * x[0]).exp());
        let out = apply_semigroup(&op, &phi, 0.0, 8).unwrap();
        assert_eq!(out.values(), phi.values());
    }

    #[test]
    fn mass_conserved_and_positivity_preserved() {
        for (dim, cells, alpha, case) in [
            (1usize, 201usize, 0.0, WeightCase::A),
            (1, 201, 0.5, WeightCase::A),
            (2, 21, 0.5, WeightCase::B),
        ] {
            let grid = build_grid(dim, 4.0, cells).unwrap();
            let spec = WeightSpec::new(case, alpha, dim).unwrap();
            let op = assemble_operator(&grid, spec).unwrap();
            let phi = Field::from_fn(&grid, |x| {
                let r2: f64 = x.iter().map(|c| c * c).sum();
                (-2.0 * r2).exp()
            });
            let mass0 = phi.mass();
            let out = apply_semigroup(&op, &phi, 0.7, 40).unwrap();
            assert!(
                (out.mass() - mass0).abs() <= 1e-10 * mass0,
                "dim={dim}, alpha={alpha}: mass defect {}",
                (out.mass() - mass0).abs()
            );
            assert!(
                out.min_value() >= -1e-12,
                "dim={dim}, alpha={alpha}: negative value {}",
                out.min_value()
            );
        }
    }

    #[test]
    fn gaussian_oracle_classical_kernel() {
        // Coarse version of the kernel oracle; the acceptance suite runs
        // the refined one.
        let op = op_1d(0.0, 10.0, 801);
        let grid = op.grid().clone();
        let t = 0.5;
        let col = fundamental_column(&op, grid.origin_index(), t, 128).unwrap();
        let mut err_l1 = 0.0;
        for i in 0..col.len() {
            let x = grid.center_of(i)[0];
            let exact = (4.0 * std::f64::consts::PI * t).powf(-0.5) * (-x * x / (4.0 * t)).exp();
            err_l1 += (col.values()[i] - exact).abs() * grid.cell_volume();
        }
        assert!(err_l1 < 0.05, "L1 error {err_l1} vs analytic kernel");
        assert!((col.mass() - 1.0).abs() < 1e-10);
        assert!(col.min_value() >= -1e-12);
    }

    #[test]
    fn jensen_inequalities_cellwise() {
        let op = op_1d(0.3, 6.0, 301);
        let grid = op.grid().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let center = rng.gen_range(-2.0..2.0);
            let amp = rng.gen_range(0.5..1.5);
            let phi = Field::from_fn(&grid, |x| {
                0.3 + amp * (-(x[0] - center) * (x[0] - center)).exp()
            });
            for (power, reversed) in [(1.0, false), (2.0, false), (0.5, true)] {
                let lhs = apply_semigroup(&op, &phi, 0.4, 32).unwrap().map(|v| v.powf(power));
                let rhs = apply_semigroup(&op, &phi.map(|v| v.powf(power)), 0.4, 32).unwrap();
                for i in 0..lhs.len() {
                    let (a, b) = (lhs.values()[i], rhs.values()[i]);
                    if reversed {
                        assert!(a >= b - 1e-10, "p=0.5 must reverse: {a} < {b}");
                    } else {
                        assert!(a <= b + 1e-10, "p={power}: {a} > {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_probe_classical_rate() {
        let op = op_1d(0.0, 12.0, 601);
        let cfg = ProbeConfig {
            t_min: 0.4,
            t_max: 4.0,
            n_times: 7,
            steps: 96,
        };
        let report = kernel_probe(&op, &cfg).unwrap();
        assert!(report.inconclusive.is_none());
        assert!(report.mass_defect < 1e-10);
        let (slope, _) = report.smoothing_fit;
        assert!(
            (slope - (-0.5)).abs() < 0.05,
            "classical smoothing slope {slope}"
        );
        assert!(report.k5_constant > 0.0);
        assert!(report.k4_constant > 0.1);
        assert!(report.chapman_kolmogorov_error < 0.02);
        assert!(
            report.lower_bound_stability < 2.0,
            "lower-bound constant drifted by {}",
            report.lower_bound_stability
        );
    }

    #[test]
    fn weak_tail_data_decays_at_the_weak_norm_rate() {
        // A capped |x|^(-1/r) tail lies in weak-L^r; its diffusion decays
        // in sup norm like t^(-N/((2-alpha) r)). Here r = 1.5, alpha = 0:
        // rate -1/3, distinct from the -1/2 of integrable data.
        let op = op_1d(0.0, 150.0, 4001);
        let grid = op.grid().clone();
        let phi = Field::from_fn(&grid, |x| {
            let r = x[0].abs();
            if r > 75.0 {
                0.0
            } else {
                16.0_f64.min(r.powf(-2.0 / 3.0))
            }
        });
        let mut points = Vec::new();
        for k in 0..6 {
            let t = 2.0 * 1.58_f64.powi(k);
            let evolved = apply_semigroup(&op, &phi, t, 128).unwrap();
            points.push((t, evolved.sup()));
        }
        let (slope, _) = loglog_fit(&points).unwrap();
        assert!(
            (slope + 1.0 / 3.0).abs() < 0.1 / 3.0,
            "weak-tail decay slope {slope} should be near -1/3"
        );
    }

    #[test]
    fn kernel_probe_flags_oversized_region() {
        let op = op_1d(0.0, 2.0, 101);
        let cfg = ProbeConfig {
            t_min: 0.5,
            t_max: 16.0,
            n_times: 5,
            steps: 32,
        };
        let report = kernel_probe(&op, &cfg).unwrap();
        assert!(report.inconclusive.is_some());
    }

    #[test]
    fn composition_defect_shrinks_under_refinement() {
        let mut errors = Vec::new();
        for (cells, steps) in [(301usize, 48usize), (601, 96)] {
            let op = op_1d(0.0, 10.0, cells);
            let cfg = ProbeConfig {
                t_min: 0.3,
                t_max: 3.0,
                n_times: 3,
                steps,
            };
            errors.push(kernel_probe(&op, &cfg).unwrap().chapman_kolmogorov_error);
        }
        assert!(
            errors[1] < 0.7 * errors[0],
            "composition defect must fall under refinement: {errors:?}"
        );
    }
}
