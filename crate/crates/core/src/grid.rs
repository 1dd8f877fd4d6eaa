//! Spatial layer: uniform cell-centered grids on a truncated box, the
//! degenerate diffusion weights, and norms of grid functions.
//!
//! The truncation box is [-L, L]^dim with an odd number of cells per axis,
//! so the weight's degeneracy point sits at a cell center and no cell face
//! ever touches it. Grid functions are cell averages; the discrete measure
//! of a cell is its volume.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Degeneracy geometry of the diffusion weight: `A` vanishes on the
/// hyperplane `x_1 = 0`, `B` vanishes at the origin only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightCase {
    A,
    B,
}

impl fmt::Display for WeightCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightCase::A => write!(f, "A"),
            WeightCase::B => write!(f, "B"),
        }
    }
}

impl FromStr for WeightCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(WeightCase::A),
            "B" | "b" => Ok(WeightCase::B),
            other => Err(Error::Params(format!(
                "weight case must be A or B, got `{other}`"
            ))),
        }
    }
}

/// Admissible degeneracy exponent range for a weight case in dimension `dim`:
/// case B needs alpha in [0, 1); case A needs [0, 1) for dim <= 2 and
/// [0, 2/dim) for dim >= 3.
pub fn validate_alpha(case: WeightCase, alpha: f64, dim: usize) -> Result<()> {
    if !alpha.is_finite() {
        return Err(Error::Params(format!("alpha={alpha} is not finite")));
    }
    let (hi, range_desc) = match case {
        WeightCase::B => (1.0, "[0,1)".to_string()),
        WeightCase::A => {
            if dim <= 2 {
                (1.0, "[0,1)".to_string())
            } else {
                (2.0 / dim as f64, format!("[0,2/{dim})"))
            }
        }
    };
    if alpha < 0.0 || alpha >= hi {
        return Err(Error::Params(format!(
            "alpha={alpha} outside {range_desc} required for weight case {case} in dimension {dim}"
        )));
    }
    Ok(())
}

/// Diffusion weight `w(x) = |x_1|^alpha` (case A) or `|x|^alpha` (case B).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub case: WeightCase,
    pub alpha: f64,
}

impl WeightSpec {
    pub fn new(case: WeightCase, alpha: f64, dim: usize) -> Result<Self> {
        validate_alpha(case, alpha, dim)?;
        Ok(WeightSpec { case, alpha })
    }

    /// Weight value at a point. Zero on the degeneracy set when alpha > 0;
    /// identically one when alpha = 0.
    pub fn weight_at(&self, point: &[f64]) -> f64 {
        let base = match self.case {
            WeightCase::A => point[0].abs(),
            WeightCase::B => point.iter().map(|c| c * c).sum::<f64>().sqrt(),
        };
        base.powf(self.alpha)
    }
}

/// Uniform cell-centered grid on [-L, L]^dim, dim in {1, 2}.
#[derive(Debug)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    cells_per_axis: usize,
    spacing: f64,
    axis_centers: Vec<f64>,
}

/// Builds a grid. `cells_per_axis` must be odd and at least 3 so the
/// origin is a cell center and no face sits on the degeneracy set.
pub fn build_grid(dim: usize, half_width: f64, cells_per_axis: usize) -> Result<Arc<Grid>> {
    if dim != 1 && dim != 2 {
        return Err(Error::Grid(format!("dim must be 1 or 2, got {dim}")));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::Grid(format!(
            "half_width must be positive, got {half_width}"
        )));
    }
    if cells_per_axis < 3 {
        return Err(Error::Grid(format!(
            "cells_per_axis must be >= 3, got {cells_per_axis}"
        )));
    }
    if cells_per_axis % 2 == 0 {
        return Err(Error::Grid(format!(
            "cells_per_axis must be odd so the degeneracy sits at a cell center, got {cells_per_axis}"
        )));
    }
    let spacing = 2.0 * half_width / cells_per_axis as f64;
    let mid = ((cells_per_axis - 1) / 2) as f64;
    // Centers as exact multiples of the spacing: symmetric pairs negate
    // exactly and the middle center is exactly zero.
    let axis_centers = (0..cells_per_axis)
        .map(|k| (k as f64 - mid) * spacing)
        .collect();
    Ok(Arc::new(Grid {
        dim,
        half_width,
        cells_per_axis,
        spacing,
        axis_centers,
    }))
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    pub fn axis_centers(&self) -> &[f64] {
        &self.axis_centers
    }

    /// Flat index of a 2D cell, row-major in (ix, iy).
    pub fn index2(&self, ix: usize, iy: usize) -> usize {
        iy * self.cells_per_axis + ix
    }

    /// Center coordinates of cell `idx`; the second entry is 0 in 1D.
    pub fn center_of(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.axis_centers[idx], 0.0],
            _ => {
                let ix = idx % self.cells_per_axis;
                let iy = idx / self.cells_per_axis;
                [self.axis_centers[ix], self.axis_centers[iy]]
            }
        }
    }

    /// Euclidean distance of the cell center from the origin.
    pub fn radius_of(&self, idx: usize) -> f64 {
        let c = self.center_of(idx);
        match self.dim {
            1 => c[0].abs(),
            _ => (c[0] * c[0] + c[1] * c[1]).sqrt(),
        }
    }

    /// Index of the cell whose center is the origin.
    pub fn origin_index(&self) -> usize {
        let mid = (self.cells_per_axis - 1) / 2;
        match self.dim {
            1 => mid,
            _ => self.index2(mid, mid),
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let last = self.cells_per_axis - 1;
        match self.dim {
            1 => idx == 0 || idx == last,
            _ => {
                let ix = idx % self.cells_per_axis;
                let iy = idx / self.cells_per_axis;
                ix == 0 || ix == last || iy == 0 || iy == last
            }
        }
    }
}

/// A grid function: one value per cell, cell-averaged semantics.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.n_cells()],
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Field {
        Field {
            grid: Arc::clone(grid),
            values: vec![c; grid.n_cells()],
        }
    }

    /// Builds a field by evaluating `f` at each cell center.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Field {
        let dim = grid.dim();
        let values = (0..grid.n_cells())
            .map(|i| {
                let c = grid.center_of(i);
                f(&c[..dim])
            })
            .collect();
        Field {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Field {
        assert_eq!(values.len(), grid.n_cells(), "value count mismatch");
        Field {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sup norm: max of |values|.
    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// Discrete mass: sum of values times cell volume.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Cellwise power of the nonnegative part. Used for reaction sources,
    /// where tiny negative round-off must not produce NaN.
    pub fn pow_positive(&self, exponent: f64) -> Field {
        self.map(|v| v.max(0.0).powf(exponent))
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn add_scaled(&mut self, c: f64, other: &Field) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += c * b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Max of |values| over boundary cells; box-health diagnostic.
    pub fn boundary_sup(&self) -> f64 {
        (0..self.values.len())
            .filter(|i| self.grid.is_boundary(*i))
            .fold(0.0, |m, i| m.max(self.values[i].abs()))
    }
}

/// Which norm to compute for a grid function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Strong,
    WeakLorentz,
}

/// L^zeta, L^infinity, or weak-L^zeta norm of a field.
///
/// Strong: `(sum |v_i|^zeta vol)^(1/zeta)`, with `zeta = inf` the sup norm.
/// WeakLorentz: `sup_rho rho * measure{|v| > rho}^(1/zeta)`, evaluated
/// exactly on the discrete distribution function by sorting cell values;
/// the sup is attained at one of the distinct value levels.
pub fn norm(field: &Field, zeta: f64, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Strong => {
            if zeta.is_infinite() && zeta > 0.0 {
                return Ok(field.sup());
            }
            if !(zeta >= 1.0) {
                return Err(Error::Norm(format!(
                    "strong norm requires zeta in [1, inf], got {zeta}"
                )));
            }
            let vol = field.grid().cell_volume();
            let sum: f64 = field.values().iter().map(|v| v.abs().powf(zeta)).sum();
            Ok((sum * vol).powf(1.0 / zeta))
        }
        NormKind::WeakLorentz => {
            if zeta.is_infinite() && zeta > 0.0 {
                return Ok(field.sup());
            }
            if !(zeta > 1.0) {
                return Err(Error::Norm(format!(
                    "weak norm requires zeta in (1, inf], got {zeta}"
                )));
            }
            let vol = field.grid().cell_volume();
            let mut magnitudes: Vec<f64> = field
                .values()
                .iter()
                .map(|v| v.abs())
                .filter(|a| *a > 0.0)
                .collect();
            magnitudes.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
            let mut cum = 0.0;
            let mut best = 0.0_f64;
            for i in 0..magnitudes.len() {
                cum += vol;
                let is_level_boundary =
                    i + 1 == magnitudes.len() || magnitudes[i + 1] < magnitudes[i];
                if is_level_boundary {
                    best = best.max(magnitudes[i] * cum.powf(1.0 / zeta));
                }
            }
            Ok(best)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_centers_and_volume_1d() {
        let g = build_grid(1, 10.0, 5).unwrap();
        assert_eq!(g.axis_centers(), &[-8.0, -4.0, 0.0, 4.0, 8.0]);
        assert_eq!(g.spacing(), 4.0);
        let vol_sum = g.cell_volume() * g.n_cells() as f64;
        assert!((vol_sum - 20.0).abs() < 1e-12, "volumes must sum to 2L");
        assert_eq!(g.origin_index(), 2);
    }

    #[test]
    fn grid_2d_center_cell_at_origin() {
        let g = build_grid(2, 1.0, 3).unwrap();
        assert_eq!(g.n_cells(), 9);
        let c = g.center_of(g.origin_index());
        assert_eq!(c, [0.0, 0.0]);
        let vol_sum = g.cell_volume() * g.n_cells() as f64;
        assert!((vol_sum - 4.0).abs() < 1e-12);
    }

    #[test]
    fn even_cell_count_rejected() {
        assert!(build_grid(1, 10.0, 4).is_err());
        assert!(build_grid(3, 10.0, 5).is_err());
        assert!(build_grid(1, -1.0, 5).is_err());
    }

    #[test]
    fn weight_values() {
        let wa = WeightSpec::new(WeightCase::A, 0.5, 2).unwrap();
        assert!((wa.weight_at(&[4.0, -7.0]) - 2.0).abs() < 1e-15);
        let wb = WeightSpec::new(WeightCase::B, 0.5, 2).unwrap();
        assert!((wb.weight_at(&[3.0, 4.0]) - 5.0_f64.sqrt()).abs() < 1e-15);
        // alpha = 0 is the classical heat equation: weight 1 everywhere.
        let w0 = WeightSpec::new(WeightCase::A, 0.0, 1).unwrap();
        assert_eq!(w0.weight_at(&[0.0]), 1.0);
        assert_eq!(wa.weight_at(&[0.0, 3.0]), 0.0);
    }

    #[test]
    fn alpha_range_by_case_and_dim() {
        assert!(WeightSpec::new(WeightCase::B, 0.99, 1).is_ok());
        assert!(WeightSpec::new(WeightCase::B, 1.0, 1).is_err());
        assert!(WeightSpec::new(WeightCase::A, 0.9, 2).is_ok());
        assert!(WeightSpec::new(WeightCase::A, 0.7, 3).is_err());
        assert!(WeightSpec::new(WeightCase::A, 0.5, 3).is_ok());
        assert!(WeightSpec::new(WeightCase::A, -0.1, 1).is_err());
    }

    #[test]
    fn weak_norm_of_indicator_is_measure_power() {
        let g = build_grid(1, 10.0, 101).unwrap();
        // Indicator of 10 cells: measure m = 10 * h.
        let mut f = Field::zeros(&g);
        for i in 40..50 {
            f.values_mut()[i] = 1.0;
        }
        let m = 10.0 * g.spacing();
        for zeta in [1.5, 2.0, 5.0] {
            let w = norm(&f, zeta, NormKind::WeakLorentz).unwrap();
            assert!(
                (w - m.powf(1.0 / zeta)).abs() < 1e-12,
                "zeta={zeta}: got {w}, want {}",
                m.powf(1.0 / zeta)
            );
        }
    }

    #[test]
    fn strong_norm_sup_of_constant() {
        let g = build_grid(2, 3.0, 5).unwrap();
        let f = Field::constant(&g, 2.5);
        assert_eq!(norm(&f, f64::INFINITY, NormKind::Strong).unwrap(), 2.5);
        // L^1 of a constant is c * box volume.
        let l1 = norm(&f, 1.0, NormKind::Strong).unwrap();
        assert!((l1 - 2.5 * 36.0).abs() < 1e-12);
    }

    #[test]
    fn weak_norm_rejects_zeta_at_most_one() {
        let g = build_grid(1, 1.0, 3).unwrap();
        let f = Field::constant(&g, 1.0);
        assert!(norm(&f, 1.0, NormKind::WeakLorentz).is_err());
        assert!(norm(&f, 0.5, NormKind::WeakLorentz).is_err());
        assert!(norm(&f, 0.5, NormKind::Strong).is_err());
    }

    #[test]
    fn weak_norm_below_strong_norm() {
        let g = build_grid(1, 5.0, 201).unwrap();
        let f = Field::from_fn(&g, |x| (1.0 + x[0]).abs().sqrt() * (-x[0] * x[0]).exp());
        for zeta in [1.2, 2.0, 7.0] {
            let w = norm(&f, zeta, NormKind::WeakLorentz).unwrap();
            let s = norm(&f, zeta, NormKind::Strong).unwrap();
            assert!(w <= s * (1.0 + 1e-12), "zeta={zeta}: weak {w} > strong {s}");
        }
    }
}
