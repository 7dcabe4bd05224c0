//! Backward-Euler integration of `d_s(v^q) - Delta_p v = 0` with zero
//! Dirichlet data, run until the solution falls below the extinction
//! threshold.

use std::sync::Arc;

use crate::error::{PsflowError, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::linalg::pcg;
use crate::operators::{lr_norm, PLaplacianOp};
use crate::params::FlowParams;
use crate::store::{IncompleteRun, LedgerRow, SnapshotStore, Violation, ViolationKind};

const JACOBIAN_FLOOR: f64 = 1e-14;
const LINE_SEARCH_HALVINGS: usize = 30;
const UNDERSHOOT_WARNING: f64 = 1e-8;

#[inline]
fn odd_pow(x: f64, q: f64) -> f64 {
    x.abs().powf(q).copysign(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Relative max-norm tolerance on `v^q - v_prev^q - ds Delta_p v - ds f`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct StepReport {
    pub v: Field,
    pub newton_iters: usize,
    pub cg_iters: usize,
    pub min_before_clamp: f64,
    pub clamp: f64,
    pub accuracy_warning: bool,
    /// Final relative residual.
    pub residual: f64,
}

/// Implicit stepper bound to one grid and parameter set.
#[derive(Debug, Clone)]
pub struct PrototypeStepper {
    params: FlowParams,
    op: PLaplacianOp,
    newton: NewtonSettings,
}

impl PrototypeStepper {
    pub fn new(params: FlowParams, grid: Arc<Grid>) -> Self {
        let newton = NewtonSettings { tol: params.tolerances.newton_tol, ..Default::default() };
        Self { op: PLaplacianOp::new(params.p, grid), params, newton }
    }

    pub fn with_newton(mut self, newton: NewtonSettings) -> Self {
        self.newton = newton;
        self
    }

    pub fn operator(&self) -> &PLaplacianOp {
        &self.op
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn step(&self, v_prev: &Field, ds: f64) -> Result<StepReport> {
        self.step_with_source(v_prev, ds, None)
    }

    /// Solves `(v^q - v_prev^q)/ds - Delta_p v = f` at interior nodes.
    pub fn step_with_source(&self, v_prev: &Field, ds: f64, source: Option<&[f64]>) -> Result<StepReport> {
        let grid = self.op.grid().clone();
        if **v_prev.grid() != *grid {
            return Err(PsflowError::Geometry("field grid does not match stepper grid".into()));
        }
        if !(ds > 0.0) || !ds.is_finite() {
            return Err(PsflowError::ParameterDomain(format!("step size must be positive (got {ds})")));
        }
        let q = self.params.q;
        let n = grid.len();
        let w = grid.weights();
        let active: Vec<bool> = grid.boundary_mask().iter().map(|b| !b).collect();
        let vp = v_prev.values();
        let mut target: Vec<f64> = vp.iter().map(|&x| odd_pow(x, q)).collect();
        let mut src_max = 0.0f64;
        if let Some(f) = source {
            for (t, s) in target.iter_mut().zip(f) {
                *t += ds * s;
                src_max = src_max.max(s.abs());
            }
        }
        let scale = active
            .iter()
            .zip(vp)
            .filter(|(a, _)| **a)
            .fold(0.0f64, |m, (_, x)| m.max(odd_pow(*x, q).abs()))
            + ds * src_max;

        let mut v = match source {
            None => self.predictor(vp, ds),
            Some(_) => vp.to_vec(),
        };
        for (i, x) in v.iter_mut().enumerate() {
            if !active[i] {
                *x = 0.0;
            }
        }

        let mut stiff = vec![0.0; n];
        let residual = |v: &[f64], stiff: &mut Vec<f64>, out: &mut Vec<f64>| -> (f64, f64) {
            self.op.stiffness_into(v, stiff);
            let mut merit = 0.0;
            let mut maxr = 0.0f64;
            for i in 0..n {
                out[i] = if active[i] {
                    w[i] * (odd_pow(v[i], q) - target[i]) + ds * stiff[i]
                } else {
                    0.0
                };
                if active[i] {
                    let r = out[i] / w[i];
                    merit += w[i] * r * r;
                    maxr = maxr.max(r.abs());
                }
            }
            (merit, maxr)
        };

        // the residual is the gradient of this strictly convex functional
        let p = self.params.p;
        let potential = |v: &[f64]| -> f64 {
            let local: f64 = (0..n)
                .filter(|&i| active[i])
                .map(|i| w[i] * (v[i].abs().powf(q + 1.0) / (q + 1.0) - target[i] * v[i]))
                .sum();
            local + ds * self.op.energy(v) / p
        };

        let mut f = vec![0.0; n];
        let (mut merit, mut maxr) = residual(&v, &mut stiff, &mut f);
        let mut phi = potential(&v);
        let v_scale = vp.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        let tol = self.newton.tol * scale;
        let mut iters = 0;
        let mut cg_total = 0;
        let mut trial = vec![0.0; n];
        let mut f_trial = vec![0.0; n];
        while !(maxr <= tol || maxr == 0.0) {
            if iters >= self.newton.max_iters {
                return Err(PsflowError::StepFailure {
                    ds,
                    reason: format!("Newton did not converge in {iters} iterations (residual {:.3e})", maxr / scale.max(f64::MIN_POSITIVE)),
                });
            }
            iters += 1;
            let dq: Vec<f64> = v
                .iter()
                .zip(w)
                .map(|(x, wi)| wi * (q * x.abs().powf(q - 1.0)).max(JACOBIAN_FLOOR))
                .collect();
            let hdiag = self.op.jacobian_diagonal(&v);
            let diag: Vec<f64> = dq.iter().zip(&hdiag).map(|(a, b)| a + ds * b).collect();
            let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
            let vref = &v;
            let (delta, out) = pcg(
                |x, y| {
                    self.op.jacobian_action(vref, x, y);
                    for i in 0..n {
                        y[i] = dq[i] * x[i] + ds * y[i];
                    }
                },
                &diag,
                &rhs,
                &active,
                (1e-2 * self.newton.tol).max(1e-14),
                4 * n + 100,
            );
            cg_total += out.iterations;
            let slope: f64 = f.iter().zip(&delta).map(|(a, b)| a * b).sum();
            // the solution lies in [0, max v_prev], so longer steps are never useful
            let step_max = delta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let mut alpha = if step_max > v_scale { v_scale / step_max } else { 1.0 };
            let mut accepted = false;
            for _ in 0..=LINE_SEARCH_HALVINGS {
                for i in 0..n {
                    trial[i] = v[i] + alpha * delta[i];
                }
                let (m, r) = residual(&trial, &mut stiff, &mut f_trial);
                let phi_trial = potential(&trial);
                let armijo = slope < 0.0 && phi_trial <= phi + 1e-4 * alpha * slope;
                if m.is_finite() && (m < merit || r <= tol || armijo) {
                    std::mem::swap(&mut v, &mut trial);
                    std::mem::swap(&mut f, &mut f_trial);
                    merit = m;
                    maxr = r;
                    phi = phi_trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(PsflowError::StepFailure {
                    ds,
                    reason: format!("line search stalled at residual {:.3e}", maxr / scale.max(f64::MIN_POSITIVE)),
                });
            }
        }

        let min_before = active
            .iter()
            .zip(&v)
            .filter(|(a, _)| **a)
            .fold(f64::INFINITY, |m, (_, x)| m.min(*x));
        let min_before = if min_before.is_finite() { min_before } else { 0.0 };
        let clamp = (-min_before).max(0.0);
        for x in v.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        Ok(StepReport {
            v: Field::from_values(grid, v)?,
            newton_iters: iters,
            cg_iters: cg_total,
            min_before_clamp: min_before,
            clamp,
            accuracy_warning: clamp > UNDERSHOOT_WARNING,
            residual: if scale > 0.0 { maxr / scale } else { 0.0 },
        })
    }

    /// `theta * v_prev` with theta solving the step equation projected onto
    /// `v_prev`.
    fn predictor(&self, vp: &[f64], ds: f64) -> Vec<f64> {
        let q = self.params.q;
        let p = self.params.p;
        let w = self.op.grid().weights();
        let a: f64 = vp.iter().zip(w).map(|(x, wi)| wi * x.abs().powf(q + 1.0)).sum();
        let b = self.op.energy(vp);
        if a == 0.0 {
            return vp.to_vec();
        }
        let g = |t: f64| (t.powf(q) - 1.0) * a + ds * t.powf(p - 1.0) * b;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let theta = 0.5 * (lo + hi);
        vp.iter().map(|x| theta * x).collect()
    }
}

/// One implicit step with default Newton settings.
pub fn step_prototype(v_prev: &Field, ds: f64, params: &FlowParams) -> Result<Field> {
    Ok(PrototypeStepper::new(*params, v_prev.grid().clone()).step(v_prev, ds)?.v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cadence {
    /// Every k-th accepted step.
    Steps(usize),
    /// Whenever s crosses a multiple of the interval.
    Interval(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub growth: f64,
    /// `c` in the cap `ds <= c gamma^{q+1-p}`; `None` disables the cap.
    pub amplitude_coeff: Option<f64>,
    /// Per-step bound `|R_step| <= budget * gamma_prev^{q+1}`; `None` disables it.
    pub energy_budget: Option<f64>,
    pub max_steps: usize,
    pub cadence: Cadence,
}

impl StepControl {
    /// Adaptive control with the amplitude cap tied to `ds_max`.
    pub fn adaptive(ds_init: f64, ds_min: f64, ds_max: f64) -> Self {
        Self {
            ds_init,
            ds_min,
            ds_max,
            growth: 1.2,
            amplitude_coeff: Some(ds_max),
            energy_budget: Some(1e-3),
            max_steps: 1_000_000,
            cadence: Cadence::Steps(1),
        }
    }

    /// Constant step size, no amplitude cap and no energy budget.
    pub fn fixed(ds: f64) -> Self {
        Self {
            ds_init: ds,
            ds_min: ds,
            ds_max: ds,
            growth: 1.0,
            amplitude_coeff: None,
            energy_budget: None,
            max_steps: 1_000_000,
            cadence: Cadence::Steps(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.ds_min > 0.0
            && self.ds_min <= self.ds_init
            && self.ds_init <= self.ds_max
            && self.ds_max.is_finite()
            && self.growth >= 1.0
            && self.amplitude_coeff.is_none_or(|c| c > 0.0)
            && self.energy_budget.is_none_or(|b| b > 0.0)
            && self.max_steps > 0;
        let cadence_ok = match self.cadence {
            Cadence::Steps(k) => k > 0,
            Cadence::Interval(d) => d > 0.0,
        };
        if ok && cadence_ok {
            Ok(())
        } else {
            Err(PsflowError::ParameterDomain(format!("invalid step control {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrototypeRun {
    pub params: FlowParams,
    pub u0: Field,
    pub control: StepControl,
    pub newton: NewtonSettings,
}

impl PrototypeRun {
    pub fn new(params: FlowParams, u0: Field, control: StepControl) -> Self {
        let newton = NewtonSettings { tol: params.tolerances.newton_tol, ..Default::default() };
        Self { params, u0, control, newton }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u0.grid()
    }
}

pub fn run_to_extinction(run: &PrototypeRun) -> Result<SnapshotStore> {
    run.control.validate()?;
    let params = run.params;
    let q = params.q;
    let u0 = &run.u0;
    let grid = u0.grid().clone();
    if u0.min() < 0.0 {
        return Err(PsflowError::DegenerateInitial("initial data must be nonnegative".into()));
    }
    if grid.boundary_mask().iter().zip(u0.values()).any(|(b, v)| *b && *v != 0.0) {
        return Err(PsflowError::DegenerateInitial("initial data must vanish on the boundary".into()));
    }
    let u0_max = u0.max();
    if !(u0_max > 0.0) {
        return Err(PsflowError::DegenerateInitial("initial data is identically zero".into()));
    }
    let eps = params.tolerances.extinction_eps.unwrap_or(1e-8 * u0_max);
    let stepper = PrototypeStepper::new(params, grid.clone()).with_newton(run.newton);
    let op = stepper.operator();
    let ctl = run.control;

    let mut store = SnapshotStore::new(params, grid.clone(), eps, u0_max);
    let e0 = op.energy(u0.values());
    let g0 = lr_norm(u0, q + 1.0)?;
    store.push_row(LedgerRow {
        s: 0.0,
        gamma: g0,
        grad_energy: e0,
        max_v: u0_max,
        min_v: u0.min(),
        ds: 0.0,
        newton_iters: 0,
        energy_residual: 0.0,
        dissipation: 0.0,
    });
    store.push_snapshot(u0.clone())?;

    let w = grid.weights();
    let mut v = u0.clone();
    let mut s = 0.0;
    let mut ds = ctl.ds_init;
    let mut gamma = g0;
    let mut energy = e0;
    let mut dissipation = 0.0;
    let mut next_snap = match ctl.cadence {
        Cadence::Interval(d) => d,
        Cadence::Steps(_) => f64::INFINITY,
    };
    let coef = (q + 1.0) / q;

    loop {
        if v.max() < eps {
            store.extinction_time = Some(s);
            store.push_snapshot(v.clone())?;
            break;
        }
        if store.accepted_steps() >= ctl.max_steps {
            store.push_snapshot(v.clone())?;
            return Err(PsflowError::Incomplete(Box::new(IncompleteRun {
                reason: format!(
                    "step cap {} reached at s = {s} with max v = {:e} (threshold {eps:e})",
                    ctl.max_steps,
                    v.max()
                ),
                store,
            })));
        }
        let mut ds_try = ds.min(ctl.ds_max);
        if let Some(c) = ctl.amplitude_coeff {
            ds_try = ds_try.min(c * gamma.powf(params.q1p));
        }
        ds_try = ds_try.max(ctl.ds_min);

        let rep = match stepper.step(&v, ds_try) {
            Ok(r) => r,
            Err(PsflowError::StepFailure { reason, .. }) => {
                if ds_try <= ctl.ds_min {
                    return Err(PsflowError::StepFailure { ds: ds_try, reason });
                }
                store.rejected_steps += 1;
                ds = (0.5 * ds_try).max(ctl.ds_min);
                continue;
            }
            Err(e) => return Err(e),
        };
        let g_new = lr_norm(&rep.v, q + 1.0)?;
        let e_new = op.energy(rep.v.values());
        let step_res = g_new.powf(q + 1.0) + coef * 0.5 * ds_try * (energy + e_new) - gamma.powf(q + 1.0);
        if let Some(budget) = ctl.energy_budget {
            if step_res.abs() > budget * gamma.powf(q + 1.0) && ds_try > ctl.ds_min {
                store.rejected_steps += 1;
                ds = (0.5 * ds_try).max(ctl.ds_min);
                continue;
            }
        }

        // accepted
        let prev_max = v.max();
        let new_max = rep.v.max();
        let s_new = s + ds_try;
        let mut flag = |kind, value: f64, bound: f64| {
            store.violations.push(Violation { s: s_new, kind, value, bound });
        };
        if rep.min_before_clamp < -1e-12 {
            flag(ViolationKind::NegativeUndershoot, rep.min_before_clamp, -1e-12);
        }
        if new_max > prev_max + 1e-10 || new_max > u0_max + 1e-10 {
            flag(ViolationKind::MaxPrinciple, new_max, prev_max.min(u0_max) + 1e-10);
        }
        if g_new > gamma * (1.0 + 1e-10) {
            flag(ViolationKind::NormIncrease, g_new, gamma);
        }
        if e_new > energy * (1.0 + 1e-10) + 1e-300 {
            flag(ViolationKind::GradientIncrease, e_new, energy);
        }
        if rep.accuracy_warning {
            store.warnings.push(format!("undershoot {:e} clamped at s = {s_new}", rep.clamp));
        }
        store.time_dissipation += rep
            .v
            .values()
            .iter()
            .zip(v.values())
            .zip(w)
            .map(|((a, b), wi)| {
                let d = a.powf(q) - b.powf(q);
                wi * d * d
            })
            .sum::<f64>()
            / ds_try;
        dissipation += coef * 0.5 * ds_try * (energy + e_new);
        store.push_row(LedgerRow {
            s: s_new,
            gamma: g_new,
            grad_energy: e_new,
            max_v: new_max,
            min_v: rep.min_before_clamp,
            ds: ds_try,
            newton_iters: rep.newton_iters,
            energy_residual: step_res,
            dissipation,
        });
        v = rep.v;
        s = s_new;
        gamma = g_new;
        energy = e_new;
        let take = match ctl.cadence {
            Cadence::Steps(k) => store.accepted_steps() % k == 0,
            Cadence::Interval(d) => {
                if s >= next_snap - 1e-6 * ds_try {
                    while next_snap <= s + 1e-6 * ds_try {
                        next_snap += d;
                    }
                    true
                } else {
                    false
                }
            }
        };
        if take {
            store.push_snapshot(v.clone())?;
        }
        ds = (ctl.growth * ds_try).min(ctl.ds_max).max(ctl.ds_min);
    }
    store.dissipation_constant = if e0 > 0.0 {
        store.time_dissipation / (u0_max.powf(q - 1.0) * e0)
    } else {
        0.0
    };
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{normalize_initial, preset_field, Preset};
    use crate::params::make_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bump(n: usize, fp: &FlowParams) -> Field {
        let g = Arc::new(Grid::cartesian_1d(1.0, n).unwrap());
        normalize_initial(&preset_field(g, &Preset::Bump, fp).unwrap(), fp).unwrap()
    }

    #[test]
    fn zero_is_fixed_point() {
        let fp = make_params(3, 2.0).unwrap();
        let g = Arc::new(Grid::cartesian_1d(1.0, 21).unwrap());
        let z = Field::zeros(g);
        let out = step_prototype(&z, 1e-3, &fp).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn step_residual_small_in_all_modes() {
        for (grid, n, p) in [
            (Grid::cartesian_1d(1.0, 41).unwrap(), 3, 2.0),
            (Grid::cartesian_1d(1.0, 41).unwrap(), 4, 2.7),
            (Grid::radial(1.0, 41, 3).unwrap(), 3, 2.0),
            (Grid::radial(1.0, 41, 5).unwrap(), 5, 3.0),
            (Grid::cartesian_2d([1.0, 1.0], [15, 17]).unwrap(), 3, 2.0),
            (Grid::cartesian_2d([1.0, 1.0], [15, 17]).unwrap(), 4, 2.5),
        ] {
            let fp = make_params(n, p).unwrap();
            let g = Arc::new(grid);
            let u0 = normalize_initial(&preset_field(g.clone(), &Preset::Bump, &fp).unwrap(), &fp).unwrap();
            let st = PrototypeStepper::new(fp, g.clone());
            let rep = st.step(&u0, 1e-3).unwrap();
            let lap = st.operator().apply_p_laplacian(&rep.v).unwrap();
            for i in g.interior_indices() {
                let r = rep.v.values()[i].powf(fp.q) - u0.values()[i].powf(fp.q) - 1e-3 * lap.values()[i];
                assert!(r.abs() < 1e-8, "{:?} n={n} p={p}: {r}", g.mode());
            }
        }
    }

    /// Forward Euler in `w = v^q` with steps under the local stability limit.
    pub(super) fn explicit_reference(u0: &Field, s_end: f64, ds_ref: f64, fp: &FlowParams) -> Field {
        let op = PLaplacianOp::new(fp.p, u0.grid().clone());
        let q = fp.q;
        let h = u0.grid().spacing()[0];
        let mut v = u0.values().to_vec();
        let mut w: Vec<f64> = v.iter().map(|x| x.powf(q)).collect();
        let mut s = 0.0;
        while s < s_end {
            let vmin = u0
                .grid()
                .interior_indices()
                .map(|i| v[i])
                .fold(f64::INFINITY, f64::min);
            let stable = 0.4 * h * h * q * vmin.powf(q - 1.0);
            let ds = ds_ref.min(stable).min(s_end - s);
            let lap = op.neg_p_laplacian(&v);
            for i in u0.grid().interior_indices() {
                w[i] -= ds * lap[i];
                v[i] = w[i].max(0.0).powf(1.0 / q);
            }
            s += ds;
        }
        Field::from_values(u0.grid().clone(), v).unwrap()
    }

    #[test]
    fn implicit_step_converges_to_fine_explicit_reference() {
        let fp = make_params(3, 2.0).unwrap();
        let u0 = bump(101, &fp);
        let st = PrototypeStepper::new(fp, u0.grid().clone());
        let reference = explicit_reference(&u0, 1e-4, 1e-8, &fp);
        let gap = |k: usize| {
            let mut v = u0.clone();
            for _ in 0..k {
                v = st.step(&v, 1e-4 / k as f64).unwrap().v;
            }
            v.max_abs_diff(&reference)
        };
        let (g1, g2, g4) = (gap(1), gap(2), gap(4));
        // one step of 1e-4 carries the initial boundary layer error
        assert!(g1 < 1e-3, "{g1}");
        assert!((1.6..2.4).contains(&(g1 / g2)), "{g1} {g2}");
        assert!((1.6..2.4).contains(&(g2 / g4)), "{g2} {g4}");
        assert!(gap(100) < 1e-5);
    }

    #[test]
    fn step_is_order_preserving() {
        let fp = make_params(3, 2.0).unwrap();
        let g = Arc::new(Grid::cartesian_1d(1.0, 41).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let st = PrototypeStepper::new(fp, g.clone());
        for _ in 0..20 {
            let mut b = Field::zeros(g.clone());
            let mut a = Field::zeros(g.clone());
            for i in g.interior_indices() {
                let x = rng.random_range(0.0..1.0);
                b.values_mut()[i] = x;
                a.values_mut()[i] = x + rng.random_range(0.0..0.5);
            }
            let ds = rng.random_range(1e-4..1e-2);
            let na = st.step(&a, ds).unwrap().v;
            let nb = st.step(&b, ds).unwrap().v;
            for (x, y) in na.values().iter().zip(nb.values()) {
                assert!(*x >= *y - 1e-10);
            }
        }
    }

    #[test]
    fn run_reaches_extinction_with_clean_ledger() {
        let fp = make_params(3, 2.0).unwrap();
        let u0 = bump(41, &fp);
        let run = PrototypeRun::new(fp, u0.clone(), StepControl::adaptive(1e-3, 1e-12, 1e-2));
        let store = run_to_extinction(&run).unwrap();
        let sx = store.extinction_time.unwrap();
        assert!(sx > 0.0);
        assert!(store.violations.is_empty(), "{:?}", &store.violations[..store.violations.len().min(3)]);
        assert!(store.ledger.windows(2).all(|r| r[1].s > r[0].s));
        assert!(store.snapshots.windows(2).all(|w| w[1].gamma < w[0].gamma));
        assert!(store.snapshots.last().unwrap().field.max() < store.extinction_eps);
        assert!(store.dissipation_constant > 0.0);
    }

    #[test]
    fn step_cap_returns_partial_store() {
        let fp = make_params(3, 2.0).unwrap();
        let u0 = bump(21, &fp);
        let mut ctl = StepControl::fixed(1e-4);
        ctl.max_steps = 5;
        match run_to_extinction(&PrototypeRun::new(fp, u0, ctl)) {
            Err(PsflowError::Incomplete(inc)) => {
                assert_eq!(inc.store.accepted_steps(), 5);
                assert!(inc.store.extinction_time.is_none());
            }
            other => panic!("expected incomplete run, got {other:?}"),
        }
    }

    #[test]
    fn energy_residual_first_order_in_ds() {
        let fp = make_params(3, 2.0).unwrap();
        let u0 = bump(51, &fp);
        let run_res = |ds: f64| {
            let mut ctl = StepControl::fixed(ds);
            ctl.cadence = Cadence::Interval(0.01);
            run_to_extinction(&PrototypeRun::new(fp, u0.clone(), ctl))
                .unwrap()
                .max_energy_residual()
        };
        let (a, b) = (run_res(8e-4), run_res(4e-4));
        let ratio = b / a;
        assert!((0.3..0.7).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn large_steps_from_plateaus_converge() {
        let fp = make_params(3, 2.5).unwrap();
        for (grid, level, ds) in [
            (Grid::cartesian_1d(1.0, 11).unwrap(), 0.5693944596447585, 0.021288161197344856),
            (Grid::radial(1.0, 20, 3).unwrap(), 0.2991214172013367, 0.03198614308925246),
        ] {
            let g = Arc::new(grid);
            let mut v = Field::zeros(g.clone());
            for i in g.interior_indices() {
                v.values_mut()[i] = level;
            }
            let r = PrototypeStepper::new(fp, g).step(&v, ds).unwrap();
            assert!(r.residual <= 1e-10);
            assert!(r.v.max() <= level + 1e-10 && r.v.min() >= 0.0);
        }
    }
}
