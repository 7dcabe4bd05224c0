//! Direct solver for the volume-constrained flow
//! `d_t(u^q) - Delta_p u = lambda(t) u^q`, `|u|_{q+1} = 1`.
//!
//! Each step is an implicit prototype substep of length `dt` followed by
//! projection onto the unit sphere of `L^{q+1}`. In the normalized variable
//! the substep advances prototype time by `dt gamma_prev^a`, which is how the
//! run keeps its own `s` and `gamma` bookkeeping.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{PsflowError, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::operators::{lr_norm, lr_integral};
use crate::params::FlowParams;
use crate::prototype::{NewtonSettings, PrototypeStepper};
use crate::scaling::{rescale_solution, TimeMap};
use crate::store::SnapshotStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectVariant {
    /// Homogeneous implicit substep, then projection (the default).
    Projection,
    /// Explicit `lambda_prev u_prev^q` source in the substep, then projection.
    SourceTerm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectSettings {
    pub dt: f64,
    pub t_end: f64,
    pub variant: DirectVariant,
    pub newton: NewtonSettings,
    /// Keep every k-th state in the series.
    pub stride: usize,
}

impl DirectSettings {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self { dt, t_end, variant: DirectVariant::Projection, newton: NewtonSettings::default(), stride: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct DirectState {
    pub t: f64,
    pub u: Field,
    pub lambda: f64,
    /// Prototype time reached by the relabeling.
    pub s: f64,
    /// Amplitude `|v|_{q+1}` carried by the relabeling.
    pub gamma: f64,
    pub max_u: f64,
    pub min_u_interior: f64,
    pub constraint_residual: f64,
    /// `1 / |u*|_{q+1}` applied by the projection.
    pub projection_factor: f64,
}

#[derive(Debug, Clone)]
pub struct DirectRun {
    pub params: FlowParams,
    pub grid: Arc<Grid>,
    pub settings: DirectSettings,
    pub series: Vec<DirectState>,
    /// Steps where lambda grew by more than 1e-6 relative.
    pub lambda_increases: Vec<(f64, f64, f64)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DirectStep {
    pub u_next: Field,
    pub lambda_used: f64,
    /// `|u*|_{q+1}` before projection.
    pub norm_star: f64,
    pub newton_iters: usize,
    pub clamp: f64,
}

fn min_interior(u: &Field) -> f64 {
    u.grid()
        .interior_indices()
        .map(|i| u.values()[i])
        .fold(f64::INFINITY, f64::min)
}

/// One projected step. `lambda_prev` is only read by the source variant.
pub fn step_direct(
    stepper: &PrototypeStepper,
    u_prev: &Field,
    dt: f64,
    variant: DirectVariant,
    lambda_prev: f64,
) -> Result<DirectStep> {
    let q = stepper.params().q;
    let norm_prev = lr_norm(u_prev, q + 1.0)?;
    if (norm_prev - 1.0).abs() > 1e-10 {
        return Err(PsflowError::InvariantFailure(format!(
            "direct step needs |u|_(q+1) = 1 (got {norm_prev})"
        )));
    }
    let rep = match variant {
        DirectVariant::Projection => stepper.step(u_prev, dt)?,
        DirectVariant::SourceTerm => {
            let src: Vec<f64> = u_prev.values().iter().map(|x| lambda_prev * x.powf(q)).collect();
            stepper.step_with_source(u_prev, dt, Some(&src))?
        }
    };
    let norm_star = lr_norm(&rep.v, q + 1.0)?;
    if !(norm_star > 0.0) {
        return Err(PsflowError::StepFailure { ds: dt, reason: "substep collapsed to zero".into() });
    }
    let u_next = rep.v.scaled(1.0 / norm_star);
    let lambda_used = stepper.operator().energy(u_next.values());
    Ok(DirectStep { u_next, lambda_used, norm_star, newton_iters: rep.newton_iters, clamp: rep.clamp })
}

pub fn run_direct(params: FlowParams, u0: &Field, settings: &DirectSettings) -> Result<DirectRun> {
    if !(settings.dt > 0.0) || !(settings.t_end > 0.0) {
        return Err(PsflowError::ParameterDomain(format!(
            "direct run needs dt > 0 and t_end > 0 (got {}, {})",
            settings.dt, settings.t_end
        )));
    }
    let q = params.q;
    let a = params.time_map_exponent();
    let grid = u0.grid().clone();
    let stepper = PrototypeStepper::new(params, grid.clone()).with_newton(settings.newton);
    let steps = (settings.t_end / settings.dt - 1e-9).ceil() as usize;
    let stride = settings.stride.max(1);

    let mut u = u0.clone();
    let mut lambda = stepper.operator().energy(u.values());
    let mut s = 0.0;
    let mut gamma = 1.0;
    let state = |t: f64, u: &Field, lambda: f64, s: f64, gamma: f64, factor: f64| -> Result<DirectState> {
        Ok(DirectState {
            t,
            u: u.clone(),
            lambda,
            s,
            gamma,
            max_u: u.max(),
            min_u_interior: min_interior(u),
            constraint_residual: (lr_integral(u, q + 1.0).powf(1.0 / (q + 1.0)) - 1.0).abs(),
            projection_factor: factor,
        })
    };
    let mut run = DirectRun {
        params,
        grid,
        settings: *settings,
        series: vec![state(0.0, &u, lambda, s, gamma, 1.0)?],
        lambda_increases: Vec::new(),
        warnings: Vec::new(),
    };
    for k in 1..=steps {
        let t = k as f64 * settings.dt;
        let st = step_direct(&stepper, &u, settings.dt, settings.variant, lambda)?;
        s += settings.dt * gamma.powf(a);
        gamma *= st.norm_star;
        if st.lambda_used > lambda * (1.0 + 1e-6) {
            run.lambda_increases.push((t, lambda, st.lambda_used));
        }
        if st.clamp > 1e-8 {
            run.warnings.push(format!("undershoot {:e} clamped at t = {t}", st.clamp));
        }
        u = st.u_next;
        lambda = st.lambda_used;
        if k % stride == 0 || k == steps {
            run.series.push(state(t, &u, lambda, s, gamma, 1.0 / st.norm_star)?);
        }
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossSample {
    pub t: f64,
    pub distance: f64,
    pub lambda_direct: f64,
    pub lambda_rescaled: f64,
    pub lambda_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossReport {
    pub max_distance: f64,
    pub max_lambda_rel: f64,
    pub samples: Vec<CrossSample>,
}

/// `|u_direct - u_rescaled|_{q+1}` (relative to the unit norm) and the
/// relative lambda gap at every direct sample inside the map range.
pub fn cross_validate(direct: &DirectRun, map: &TimeMap, store: &SnapshotStore) -> Result<CrossReport> {
    if *direct.grid != *store.grid {
        return Err(PsflowError::Geometry("direct run and prototype store use different grids".into()));
    }
    let q = direct.params.q;
    let mut samples = Vec::new();
    for st in direct.series.iter().filter(|st| st.t <= map.t_max() * (1.0 + 1e-14)) {
        let r = rescale_solution(store, map, st.t.min(map.t_max()))?;
        let diff: Vec<f64> = st.u.values().iter().zip(r.u.values()).map(|(a, b)| a - b).collect();
        let diff = Field::from_values(direct.grid.clone(), diff)?;
        let distance = lr_norm(&diff, q + 1.0)?;
        samples.push(CrossSample {
            t: st.t,
            distance,
            lambda_direct: st.lambda,
            lambda_rescaled: r.lambda_t,
            lambda_rel: (st.lambda - r.lambda_t).abs() / r.lambda_t,
        });
    }
    let max_distance = samples.iter().fold(0.0f64, |m, c| m.max(c.distance));
    let max_lambda_rel = samples.iter().fold(0.0f64, |m, c| m.max(c.lambda_rel));
    Ok(CrossReport { max_distance, max_lambda_rel, samples })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{normalize_initial, preset_field, Preset};
    use crate::params::make_params;

    fn setup(n: usize) -> (FlowParams, Field) {
        let fp = make_params(3, 2.0).unwrap();
        let g = Arc::new(Grid::cartesian_1d(1.0, n).unwrap());
        let u0 = normalize_initial(&preset_field(g, &Preset::Bump, &fp).unwrap(), &fp).unwrap();
        (fp, u0)
    }

    #[test]
    fn projection_keeps_unit_norm() {
        let (fp, u0) = setup(41);
        for variant in [DirectVariant::Projection, DirectVariant::SourceTerm] {
            let mut set = DirectSettings::new(1e-2, 0.3);
            set.variant = variant;
            let run = run_direct(fp, &u0, &set).unwrap();
            assert_eq!(run.series.len(), 31);
            for st in &run.series {
                assert!(st.constraint_residual <= 1e-13, "{variant:?} {}", st.constraint_residual);
                assert!(st.min_u_interior > 0.0);
            }
        }
    }

    #[test]
    fn small_step_multiplier_tends_to_initial_energy() {
        let (fp, u0) = setup(41);
        let st = PrototypeStepper::new(fp, u0.grid().clone());
        let e0 = st.operator().energy(u0.values());
        let gaps: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|dt| (step_direct(&st, &u0, *dt, DirectVariant::Projection, e0).unwrap().lambda_used - e0).abs())
            .collect();
        assert!(gaps[1] < 0.2 * gaps[0] && gaps[2] < 0.2 * gaps[1], "{gaps:?}");
    }

    #[test]
    fn variants_agree_to_first_order() {
        let (fp, u0) = setup(41);
        let diff = |dt: f64| {
            let a = run_direct(fp, &u0, &DirectSettings::new(dt, 0.2)).unwrap();
            let mut set = DirectSettings::new(dt, 0.2);
            set.variant = DirectVariant::SourceTerm;
            let b = run_direct(fp, &u0, &set).unwrap();
            a.series.last().unwrap().u.max_abs_diff(&b.series.last().unwrap().u)
        };
        let (d1, d2) = (diff(4e-3), diff(2e-3));
        assert!(d2 < 0.7 * d1, "{d1} {d2}");
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0];
        let y = [3.0, 12.0, 48.0];
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
