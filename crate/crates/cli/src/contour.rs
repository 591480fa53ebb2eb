//! Planar density grids and a discrete check that their upper-level sets
//! are convex.

use hth_core::dist::{HthParams, PreparedHth};
use hth_core::specfun::{MvnSpec, QuadratureSpec};
use nalgebra::DMatrix;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

use crate::error::{io_err, CliError, CliResult};

/// Density on the nodes of a uniform `x1 × x2` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// `density[(i, j)]` is the value at `(x1[i], x2[j])`.
    pub density: DMatrix<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Evaluates the HTH density of a bivariate component on `resolution²`
/// nodes spanning `bounds = [[x1_lo, x1_hi], [x2_lo, x2_hi]]`.
pub fn contour_grid(params: &HthParams, bounds: [[f64; 2]; 2], resolution: usize) -> CliResult<ContourGrid> {
    if params.p() != 2 {
        return Err(CliError::Config(format!("contours need p = 2, got p = {}", params.p())));
    }
    if resolution < 10 {
        return Err(CliError::Config(format!("resolution must be at least 10, got {resolution}")));
    }
    if bounds.iter().any(|b| !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite()) {
        return Err(CliError::Config(format!("invalid grid bounds {bounds:?}")));
    }
    let quad = QuadratureSpec::default();
    let prep: PreparedHth = params.prepare(&MvnSpec::default())?;
    let x1 = linspace(bounds[0][0], bounds[0][1], resolution);
    let x2 = linspace(bounds[1][0], bounds[1][1], resolution);
    let vals: Vec<hth_core::Result<f64>> = hth_core::par::map_range(resolution * resolution, |k| {
        let (i, j) = (k / resolution, k % resolution);
        let x = nalgebra::DVector::from_vec(vec![x1[i], x2[j]]);
        prep.logpdf(&x, &quad).map(f64::exp)
    });
    let vals = vals.into_iter().collect::<hth_core::Result<Vec<f64>>>()?;
    Ok(ContourGrid { density: DMatrix::from_row_slice(resolution, resolution, &vals), x1, x2 })
}

impl ContourGrid {
    pub fn cell_area(&self) -> f64 {
        (self.x1[1] - self.x1[0]) * (self.x2[1] - self.x2[0])
    }

    /// Riemann sum of the density over the grid.
    pub fn mass(&self) -> f64 {
        self.density.sum() * self.cell_area()
    }

    pub fn write_csv(&self, path: &Path) -> CliResult<()> {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        w.write_record(["x1", "x2", "density"])?;
        for (i, a) in self.x1.iter().enumerate() {
            for (j, b) in self.x2.iter().enumerate() {
                w.write_record(&[a.to_string(), b.to_string(), self.density[(i, j)].to_string()])?;
            }
        }
        w.flush().map_err(io_err(path))?;
        Ok(())
    }
}

/// Outcome of the convexity test at one density level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: f64,
    /// Share of the grid mass inside the upper-level set.
    pub mass_fraction: f64,
    pub cells: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub levels: Vec<LevelReport>,
}

impl ConvexityReport {
    pub fn total_violations(&self) -> usize {
        self.levels.iter().map(|l| l.violations).sum()
    }
}

/// Upper-level sets holding mass fractions `k / (level_count + 1)` are
/// tested for discrete convexity: every grid node within half a cell of a
/// segment joining two boundary nodes of the set must lie in the set or
/// touch it.
pub fn quasiconcavity_check(grid: &ContourGrid, level_count: usize) -> ConvexityReport {
    let (n1, n2) = grid.density.shape();
    let mut sorted: Vec<f64> = grid.density.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    let mut levels = Vec::with_capacity(level_count);
    for k in 1..=level_count {
        let target = total * k as f64 / (level_count + 1) as f64;
        let mut acc = 0.0;
        let mut level = sorted[0];
        for v in &sorted {
            acc += v;
            level = *v;
            if acc >= target {
                break;
            }
        }
        let inside = DMatrix::from_fn(n1, n2, |i, j| grid.density[(i, j)] >= level);
        let cells = inside.iter().filter(|b| **b).count();
        let mass: f64 = grid.density.iter().filter(|v| **v >= level).sum();
        levels.push(LevelReport { level, mass_fraction: mass / total, cells, violations: count_violations(&inside) });
    }
    ConvexityReport { levels }
}

fn count_violations(inside: &DMatrix<bool>) -> usize {
    let (n1, n2) = inside.shape();
    let at = |m: &DMatrix<bool>, i: isize, j: isize| i >= 0 && j >= 0 && (i as usize) < n1 && (j as usize) < n2 && m[(i as usize, j as usize)];
    // nodes in the set or adjacent to it
    let near = DMatrix::from_fn(n1, n2, |i, j| {
        let (i, j) = (i as isize, j as isize);
        (-1..=1).any(|di| (-1..=1).any(|dj| at(inside, i + di, j + dj)))
    });
    let mut boundary = Vec::new();
    for i in 0..n1 as isize {
        for j in 0..n2 as isize {
            if at(inside, i, j) && [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|(di, dj)| !at(inside, i + di, j + dj)) {
                boundary.push((i, j));
            }
        }
    }
    let mut violations = 0;
    for (k, &(ai, aj)) in boundary.iter().enumerate() {
        for &(bi, bj) in &boundary[k + 1..] {
            let (di, dj) = ((bi - ai) as f64, (bj - aj) as f64);
            let steps = (4.0 * di.abs().max(dj.abs())).ceil() as usize;
            let broken = (1..steps).any(|s| {
                let t = s as f64 / steps as f64;
                let (x, y) = (ai as f64 + t * di, aj as f64 + t * dj);
                let (lo_i, hi_i) = ((x - 0.5).ceil() as isize, (x + 0.5).floor() as isize);
                let (lo_j, hi_j) = ((y - 0.5).ceil() as isize, (y + 0.5).floor() as isize);
                (lo_i..=hi_i).any(|i| (lo_j..=hi_j).any(|j| !at(&near, i, j)))
            });
            violations += broken as usize;
        }
    }
    violations
}

/// Writes the report as JSON.
pub fn write_report<T: Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(serde_json::to_string_pretty(value)?.as_bytes()).map_err(io_err(path))?;
    Ok(())
}
