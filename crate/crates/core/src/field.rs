use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{PsflowError, Result};
use crate::grid::{Grid, GridMode};
use crate::operators::lr_norm;
use crate::params::FlowParams;

/// Grid-sampled scalar function. Solution fields carry exact zeros on the
/// Dirichlet boundary.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(PsflowError::Geometry(format!(
                "field has {} values but grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PsflowError::InvariantFailure(format!("non-finite value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node (boundary included).
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self { grid, values }
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

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn zero_boundary(&mut self) {
        for (i, v) in self.values.iter_mut().enumerate() {
            if self.grid.is_boundary(i) {
                *v = 0.0;
            }
        }
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Rescales nonnegative data to unit L^{q+1} norm.
pub fn normalize_initial(u0_raw: &Field, params: &FlowParams) -> Result<Field> {
    if u0_raw.values.iter().any(|&v| v < 0.0) {
        return Err(PsflowError::DegenerateInitial("initial data must be nonnegative".into()));
    }
    let norm = lr_norm(u0_raw, params.q + 1.0)?;
    if norm == 0.0 {
        return Err(PsflowError::DegenerateInitial("initial data is identically zero".into()));
    }
    let mut out = u0_raw.scaled(1.0 / norm);
    out.zero_boundary();
    Ok(out)
}

/// Analytic initial-data presets. All vanish on the Dirichlet boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    /// sin(pi x / L) products on Cartesian grids, cos(pi r / 2R) on a ball.
    Bump,
    /// Constant on interior nodes.
    Plateau { level: f64 },
    /// Talenti profile centred at the origin (ball) or the domain centre.
    Talenti { scale: f64, truncation: Truncation },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Profile values on interior nodes, zero on the boundary nodes.
    Interior,
    /// (Y - min_boundary Y)_+, continuous up to the boundary.
    Shifted,
}

/// Centre used for Talenti presets on a given grid.
pub fn default_center(grid: &Grid) -> Vec<f64> {
    match grid.mode() {
        GridMode::Radial => vec![0.0],
        _ => grid.extent().iter().map(|e| 0.5 * e).collect(),
    }
}

pub fn preset_field(grid: Arc<Grid>, preset: &Preset, params: &FlowParams) -> Result<Field> {
    let mut f = match preset {
        Preset::Bump => {
            let ext = grid.extent().to_vec();
            let mode = grid.mode();
            Field::from_fn(grid.clone(), |x| match mode {
                GridMode::Radial => (0.5 * PI * x[0] / ext[0]).cos(),
                _ => x
                    .iter()
                    .zip(&ext)
                    .map(|(xi, li)| (PI * xi / li).sin())
                    .product(),
            })
        }
        Preset::Plateau { level } => {
            if !(*level > 0.0) {
                return Err(PsflowError::DegenerateInitial(format!(
                    "plateau level must be positive (got {level})"
                )));
            }
            Field::from_fn(grid.clone(), |_| *level)
        }
        Preset::Talenti { scale, truncation } => {
            let prof = crate::talenti::TalentiProfile::new(*scale, default_center(&grid), *params, -1.0, 1.0)?;
            let mut f = Field::from_fn(grid.clone(), |x| prof.value(x));
            if *truncation == Truncation::Shifted {
                let floor = grid
                    .boundary_mask()
                    .iter()
                    .zip(f.values())
                    .filter(|(b, _)| **b)
                    .map(|(_, v)| *v)
                    .fold(f64::INFINITY, f64::min);
                for v in f.values_mut() {
                    *v = (*v - floor).max(0.0);
                }
            }
            f
        }
    };
    f.zero_boundary();
    Ok(f)
}
