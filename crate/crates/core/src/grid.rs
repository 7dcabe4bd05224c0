//! Node-centred grids on an interval, a rectangle, or a ball in radial
//! coordinates, together with the quadrature weights every norm uses.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PsflowError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    #[serde(rename = "cartesian_1d")]
    Cartesian1d,
    #[serde(rename = "cartesian_2d")]
    Cartesian2d,
    Radial,
}

impl GridMode {
    pub fn axes(self) -> usize {
        match self {
            GridMode::Cartesian2d => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GridMode::Cartesian1d => "cartesian_1d",
            GridMode::Cartesian2d => "cartesian_2d",
            GridMode::Radial => "radial",
        }
    }
}

impl fmt::Display for GridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GridMode {
    type Err = PsflowError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartesian_1d" => Ok(GridMode::Cartesian1d),
            "cartesian_2d" => Ok(GridMode::Cartesian2d),
            "radial" => Ok(GridMode::Radial),
            other => Err(PsflowError::Geometry(format!("unknown grid mode '{other}'"))),
        }
    }
}

/// Surface area of the unit sphere in R^n.
pub fn unit_sphere_area(n: usize) -> f64 {
    // 2 pi^{n/2} / Gamma(n/2), with Gamma at integers and half-integers.
    let half_gamma = if n % 2 == 0 {
        (1..n / 2).map(|k| k as f64).product::<f64>()
    } else {
        let k = (n - 1) / 2;
        let mut g = PI.sqrt();
        for j in 0..k {
            g *= j as f64 + 0.5;
        }
        g
    };
    2.0 * PI.powf(n as f64 / 2.0) / half_gamma
}

#[derive(Debug, Clone)]
pub struct Grid {
    mode: GridMode,
    extent: Vec<f64>,
    points: Vec<usize>,
    spacing: Vec<f64>,
    radial_dim: usize,
    weights: Vec<f64>,
    boundary: Vec<bool>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode
            && self.points == other.points
            && self.extent == other.extent
            && self.radial_dim == other.radial_dim
    }
}

impl Grid {
    pub fn cartesian_1d(extent: f64, points: usize) -> Result<Self> {
        Self::new(GridMode::Cartesian1d, vec![extent], vec![points], 0)
    }

    pub fn cartesian_2d(extent: [f64; 2], points: [usize; 2]) -> Result<Self> {
        Self::new(GridMode::Cartesian2d, extent.to_vec(), points.to_vec(), 0)
    }

    /// Ball of radius `radius` in R^`dim`, sampled on r in [0, radius].
    pub fn radial(radius: f64, points: usize, dim: usize) -> Result<Self> {
        Self::new(GridMode::Radial, vec![radius], vec![points], dim)
    }

    pub fn new(mode: GridMode, extent: Vec<f64>, points: Vec<usize>, radial_dim: usize) -> Result<Self> {
        let axes = mode.axes();
        if extent.len() != axes || points.len() != axes {
            return Err(PsflowError::Geometry(format!(
                "{mode} expects {axes} axis value(s), got extent {} / points {}",
                extent.len(),
                points.len()
            )));
        }
        for (&e, &n) in extent.iter().zip(&points) {
            if !(e.is_finite() && e > 0.0) {
                return Err(PsflowError::Geometry(format!("extent must be positive (got {e})")));
            }
            if n < 3 {
                return Err(PsflowError::Geometry(format!("need at least 3 points per axis (got {n})")));
            }
        }
        if mode == GridMode::Radial && radial_dim < 1 {
            return Err(PsflowError::Geometry("radial mode needs a dimension".into()));
        }
        let spacing: Vec<f64> = extent
            .iter()
            .zip(&points)
            .map(|(&e, &n)| e / (n - 1) as f64)
            .collect();
        let radial_dim = if mode == GridMode::Radial { radial_dim } else { 0 };
        let mut grid = Grid {
            mode,
            extent,
            points,
            spacing,
            radial_dim,
            weights: Vec::new(),
            boundary: Vec::new(),
        };
        grid.weights = grid.build_weights();
        grid.boundary = grid.build_boundary();
        Ok(grid)
    }

    fn build_weights(&self) -> Vec<f64> {
        let trap = |n: usize, h: f64| -> Vec<f64> {
            (0..n)
                .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                .collect()
        };
        match self.mode {
            GridMode::Cartesian1d => trap(self.points[0], self.spacing[0]),
            GridMode::Cartesian2d => {
                let wx = trap(self.points[0], self.spacing[0]);
                let wy = trap(self.points[1], self.spacing[1]);
                let mut w = Vec::with_capacity(wx.len() * wy.len());
                for a in &wx {
                    for b in &wy {
                        w.push(a * b);
                    }
                }
                w
            }
            GridMode::Radial => {
                let n = self.points[0];
                let h = self.spacing[0];
                let dim = self.radial_dim as f64;
                let omega = unit_sphere_area(self.radial_dim);
                let radius = self.extent[0];
                (0..n)
                    .map(|i| {
                        // shell control volume [r - h/2, r + h/2] clipped to [0, R]
                        let r = i as f64 * h;
                        let lo = (r - 0.5 * h).max(0.0);
                        let hi = (r + 0.5 * h).min(radius);
                        omega * (hi.powf(dim) - lo.powf(dim)) / dim
                    })
                    .collect()
            }
        }
    }

    fn build_boundary(&self) -> Vec<bool> {
        match self.mode {
            GridMode::Cartesian1d => {
                let n = self.points[0];
                (0..n).map(|i| i == 0 || i == n - 1).collect()
            }
            GridMode::Cartesian2d => {
                let (nx, ny) = (self.points[0], self.points[1]);
                let mut b = Vec::with_capacity(nx * ny);
                for i in 0..nx {
                    for j in 0..ny {
                        b.push(i == 0 || j == 0 || i == nx - 1 || j == ny - 1);
                    }
                }
                b
            }
            GridMode::Radial => {
                let n = self.points[0];
                (0..n).map(|i| i == n - 1).collect()
            }
        }
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn radial_dim(&self) -> usize {
        self.radial_dim
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weights of the discrete measure.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary[idx]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| !self.boundary[i])
    }

    /// Discrete measure of the whole closed domain.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Axis indices of a flat (row-major) index.
    pub fn axis_index(&self, idx: usize) -> [usize; 2] {
        match self.mode {
            GridMode::Cartesian2d => [idx / self.points[1], idx % self.points[1]],
            _ => [idx, 0],
        }
    }

    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        match self.mode {
            GridMode::Cartesian2d => i * self.points[1] + j,
            _ => i,
        }
    }

    /// Physical coordinates of a node; radial mode returns `[r]`.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let [i, j] = self.axis_index(idx);
        match self.mode {
            GridMode::Cartesian2d => vec![i as f64 * self.spacing[0], j as f64 * self.spacing[1]],
            _ => vec![i as f64 * self.spacing[0]],
        }
    }

    /// Distance of a node to the point `center` (radial mode: |r - center|
    /// measured along a ray, i.e. the center must be the origin).
    pub fn distance_to(&self, idx: usize, center: &[f64]) -> f64 {
        let x = self.coords(idx);
        x.iter()
            .zip(center.iter().chain(std::iter::repeat(&0.0)))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Number of cells between a node and the nearest boundary node.
    pub fn cells_to_boundary(&self, idx: usize) -> usize {
        let [i, j] = self.axis_index(idx);
        match self.mode {
            GridMode::Cartesian1d => i.min(self.points[0] - 1 - i),
            GridMode::Cartesian2d => i
                .min(self.points[0] - 1 - i)
                .min(j)
                .min(self.points[1] - 1 - j),
            GridMode::Radial => self.points[0] - 1 - i,
        }
    }

    /// Same geometry with each axis refined by `factor` (points - 1 scaled).
    pub fn refined(&self, factor: usize) -> Result<Grid> {
        let points = self.points.iter().map(|&n| (n - 1) * factor + 1).collect();
        Grid::new(self.mode, self.extent.clone(), points, self.radial_dim)
    }

    pub fn same_geometry(&self, other: &Grid) -> bool {
        self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((unit_sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn spacing_and_measure_1d() {
        let g = Grid::cartesian_1d(2.5, 11).unwrap();
        assert!((g.spacing()[0] - 0.25).abs() < 1e-15);
        assert!((g.measure() - 2.5).abs() < 1e-12);
        assert!(g.is_boundary(0) && g.is_boundary(10) && !g.is_boundary(5));
    }

    #[test]
    fn measure_2d_is_product_of_extents() {
        let g = Grid::cartesian_2d([1.5, 0.7], [13, 9]).unwrap();
        assert!((g.measure() - 1.05).abs() < 1e-12);
        let interior = g.interior_indices().count();
        assert_eq!(interior, 11 * 7);
        for idx in 0..g.len() {
            let [i, j] = g.axis_index(idx);
            assert_eq!(g.flat_index(i, j), idx);
        }
    }

    #[test]
    fn radial_measure_is_ball_volume() {
        let exact = 4.0 * PI / 3.0;
        for n in [5, 41, 81] {
            assert!((Grid::radial(1.0, n, 3).unwrap().measure() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Grid::cartesian_1d(1.0, 2).is_err());
        assert!(Grid::cartesian_1d(-1.0, 10).is_err());
        assert!(Grid::new(GridMode::Cartesian2d, vec![1.0], vec![5], 0).is_err());
    }

    #[test]
    fn refinement_halves_spacing() {
        let g = Grid::cartesian_1d(1.0, 101).unwrap();
        let r = g.refined(2).unwrap();
        assert_eq!(r.points()[0], 201);
        assert!((r.spacing()[0] * 2.0 - g.spacing()[0]).abs() < 1e-15);
    }
}
