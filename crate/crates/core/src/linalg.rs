//! Banded symmetric positive definite solves.
//!
//! The implicit diffusion systems (I + dt M) x = b are SPD with bandwidth 1
//! in 1D and bandwidth `cells_per_axis` in 2D (row-major cell ordering).
//! A banded Cholesky factorization covers both: O(n bw^2) to factor,
//! O(n bw) per solve, fully deterministic.

use crate::error::{Error, Result};

/// Lower-banded SPD matrix in band storage: `band[k][i] = A[i+k][i]`
/// for offsets k = 0..=bw, valid for i < n - k.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    /// bands[k * n + i] holds A[i+k][i]; unused tail entries stay zero.
    bands: Vec<f64>,
}

/// Cholesky factor of a `BandedSpd`, same band layout.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    bands: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> BandedSpd {
        BandedSpd {
            n,
            bw,
            bands: vec![0.0; (bw + 1) * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Adds `value` to A[row+offset][row] (and by symmetry its mirror).
    pub fn add(&mut self, row: usize, offset: usize, value: f64) {
        debug_assert!(offset <= self.bw && row + offset < self.n);
        self.bands[offset * self.n + row] += value;
    }

    fn get(&self, row: usize, offset: usize) -> f64 {
        self.bands[offset * self.n + row]
    }

    /// y = A x using the symmetric band structure.
    pub fn multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            y[i] += self.get(i, 0) * x[i];
        }
        for k in 1..=self.bw {
            for i in 0..self.n.saturating_sub(k) {
                let a = self.get(i, k);
                if a != 0.0 {
                    y[i + k] += a * x[i];
                    y[i] += a * x[i + k];
                }
            }
        }
        y
    }

    /// Banded Cholesky LL^T. Fails if a pivot is not strictly positive,
    /// which signals a malformed operator.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let n = self.n;
        let bw = self.bw;
        let mut l = self.bands.clone();
        let idx = |k: usize, i: usize| k * n + i;
        for j in 0..n {
            // Pivot: a_jj minus squares of the already-computed row of L.
            let mut d = l[idx(0, j)];
            let start = j.saturating_sub(bw);
            for c in start..j {
                let v = l[idx(j - c, c)];
                d -= v * v;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Solve(format!(
                    "non-positive pivot {d} at column {j}; matrix is not SPD"
                )));
            }
            let dj = d.sqrt();
            l[idx(0, j)] = dj;
            let row_end = (j + bw + 1).min(n);
            for i in (j + 1)..row_end {
                let mut v = l[idx(i - j, j)];
                let start = i.saturating_sub(bw).max(j.saturating_sub(bw));
                for c in start..j {
                    // Both L[i][c] and L[j][c] must lie in band.
                    if i - c <= bw && j - c <= bw {
                        v -= l[idx(i - c, c)] * l[idx(j - c, c)];
                    }
                }
                l[idx(i - j, j)] = v / dj;
            }
        }
        Ok(BandedCholesky { n, bw, bands: l })
    }
}

impl BandedCholesky {
    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        let bw = self.bw;
        let idx = |k: usize, i: usize| k * n + i;
        // Forward: L y = b.
        for i in 0..n {
            let mut v = b[i];
            let start = i.saturating_sub(bw);
            for c in start..i {
                v -= self.bands[idx(i - c, c)] * b[c];
            }
            b[i] = v / self.bands[idx(0, i)];
        }
        // Backward: L^T x = y.
        for i in (0..n).rev() {
            let mut v = b[i];
            let row_end = (i + bw + 1).min(n);
            for j in (i + 1)..row_end {
                v -= self.bands[idx(j - i, i)] * b[j];
            }
            b[i] = v / self.bands[idx(0, i)];
        }
    }
}
