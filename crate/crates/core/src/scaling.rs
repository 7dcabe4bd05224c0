//! Intrinsic time map from a finished prototype run and reconstruction of
//! the volume-constrained solution `u(t) = v(s(t)) / gamma(t)`.
//!
//! Two independent routes produce `s(t)`:
//! * `Lambda' = gamma(S*(1 - e^{-Lambda}))^a / S*`, `g' = e^{Lambda(g)}`,
//!   `s = S*(1 - e^{-Lambda(g(t))})`;
//! * the collapsed form `ds/dt = gamma(s)^a`,
//!
//! with `a = (q+1)p/n`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{PsflowError, Result};
use crate::field::Field;
use crate::interp::{hermite, Pchip};
use crate::ode::{controlled_step, integrate_to_outputs, DenseSolution, OdeSettings};
use crate::operators::{lr_norm, PLaplacianOp};
use crate::params::FlowParams;
use crate::store::SnapshotStore;

const ROUTE_TOLERANCE: f64 = 1e-6;

/// Monotone interpolant of `s -> gamma(s)` through every ledger row.
#[derive(Debug, Clone)]
pub struct GammaInterpolant {
    pchip: Pchip,
}

impl GammaInterpolant {
    pub fn from_samples(s: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if let Some(k) = gamma.windows(2).position(|w| w[1] > w[0] + 1e-10) {
            return Err(PsflowError::DataIntegrity(format!(
                "stored gamma increases between s = {} and s = {} ({} -> {})",
                s[k],
                s[k + 1],
                gamma[k],
                gamma[k + 1]
            )));
        }
        Ok(Self { pchip: Pchip::new(s, gamma)? })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.pchip.eval(s).max(0.0)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.pchip.derivative(s)
    }

    pub fn domain(&self) -> (f64, f64) {
        self.pchip.domain()
    }
}

pub fn build_gamma_interpolant(store: &SnapshotStore) -> Result<GammaInterpolant> {
    let s_star = store.extinction_time.ok_or_else(|| {
        PsflowError::Range(format!(
            "store ends at s = {} before extinction (last valid s = {})",
            store.last_s(),
            store.last_s()
        ))
    })?;
    if (store.last_s() - s_star).abs() > 1e-12 * s_star.max(1.0) {
        return Err(PsflowError::DataIntegrity(format!(
            "ledger ends at s = {} but extinction time is {s_star}",
            store.last_s()
        )));
    }
    let s: Vec<f64> = store.ledger.iter().map(|r| r.s).collect();
    let g: Vec<f64> = store.ledger.iter().map(|r| r.gamma).collect();
    GammaInterpolant::from_samples(s, g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSettings {
    /// `None` selects the t at which `s(t) = s_fraction * S*`.
    pub t_end: Option<f64>,
    pub s_fraction: f64,
    pub map_dt: f64,
    pub ode: OdeSettings,
}

impl Default for MapSettings {
    fn default() -> Self {
        Self { t_end: None, s_fraction: 0.99, map_dt: 1e-3, ode: OdeSettings::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapSample {
    pub t: f64,
    /// `g(t)`.
    pub tau: f64,
    /// `Lambda(g(t))`.
    pub lambda_at: f64,
    pub s: f64,
    pub gamma: f64,
    /// `s(t)` from the collapsed route.
    pub s_collapsed: f64,
}

#[derive(Debug, Clone)]
pub struct TimeMap {
    pub s_star: f64,
    pub exponent: f64,
    pub map_dt: f64,
    pub samples: Vec<MapSample>,
    /// Max relative gap between the two routes' `s(t)`.
    pub discrepancy: f64,
    gamma: GammaInterpolant,
}

impl TimeMap {
    pub fn t_max(&self) -> f64 {
        self.samples.last().map_or(0.0, |m| m.t)
    }

    pub fn gamma_of_s(&self, s: f64) -> f64 {
        self.gamma.eval(s)
    }

    /// `ds/dt = gamma(s)^a`.
    pub fn rate(&self, s: f64) -> f64 {
        self.gamma.eval(s).powf(self.exponent)
    }

    fn check_t(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || t > self.t_max() * (1.0 + 1e-14) {
            return Err(PsflowError::Range(format!(
                "t = {t} outside time-map range [0, {}]",
                self.t_max()
            )));
        }
        let k = self.samples.partition_point(|m| m.t <= t);
        Ok(k.saturating_sub(1).min(self.samples.len().saturating_sub(2)))
    }

    /// `s(t)` by cubic Hermite interpolation with slopes `gamma(s)^a`.
    pub fn s_at(&self, t: f64) -> Result<f64> {
        let k = self.check_t(t)?;
        if self.samples.len() == 1 {
            return Ok(self.samples[0].s);
        }
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        if t == a.t {
            return Ok(a.s);
        }
        Ok(hermite(a.t, b.t, a.s, b.s, self.rate(a.s), self.rate(b.s), t.min(b.t)))
    }

    pub fn gamma_at(&self, t: f64) -> Result<f64> {
        Ok(self.gamma.eval(self.s_at(t)?))
    }

    /// Inverse of `s_at` by bisection.
    pub fn t_at(&self, s: f64) -> Result<f64> {
        let last = self.samples.last().map_or(0.0, |m| m.s);
        if !(s >= 0.0) || s > last {
            return Err(PsflowError::Range(format!("s = {s} outside mapped range [0, {last}]")));
        }
        let k = self.samples.partition_point(|m| m.s <= s).saturating_sub(1);
        if self.samples[k].s == s {
            return Ok(self.samples[k].t);
        }
        let (mut lo, mut hi) = (self.samples[k].t, self.samples[(k + 1).min(self.samples.len() - 1)].t);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.s_at(mid)? < s {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

pub fn integrate_time_map(store: &SnapshotStore, settings: &MapSettings) -> Result<TimeMap> {
    let gamma = build_gamma_interpolant(store)?;
    let s_star = store.extinction_time.expect("checked by build_gamma_interpolant");
    time_map_from_gamma(gamma, s_star, &store.params, settings)
}

/// Builds the map from an arbitrary nonincreasing gamma on `[0, s_star]`.
pub fn time_map_from_gamma(
    gamma: GammaInterpolant,
    s_star: f64,
    params: &FlowParams,
    settings: &MapSettings,
) -> Result<TimeMap> {
    if !(s_star > 0.0) {
        return Err(PsflowError::ParameterDomain(format!("extinction time must be positive (got {s_star})")));
    }
    if !(settings.map_dt > 0.0) || !(settings.s_fraction > 0.0 && settings.s_fraction < 1.0) {
        return Err(PsflowError::ParameterDomain("map_dt must be positive and s_fraction in (0, 1)".into()));
    }
    let a = params.time_map_exponent();
    let cfg = settings.ode;
    let collapsed = |s: f64| gamma.eval(s.min(s_star)).powf(a);

    let t_end = match settings.t_end {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(PsflowError::ParameterDomain(format!("t_end must be positive (got {t})"))),
        None => default_t_end(&collapsed, settings.s_fraction * s_star, &cfg)?,
    };
    let count = (t_end / settings.map_dt + 1e-9).floor() as usize;
    let ts: Vec<f64> = (0..=count).map(|k| k as f64 * settings.map_dt).collect();

    let s_b = integrate_to_outputs(0.0, &collapsed, &ts, &cfg)?;

    // route A
    let lam_rhs = |l: f64| gamma.eval(s_star * (1.0 - (-l).exp())).powf(a) / s_star;
    let mut lam = DenseSolution::new(0.0, &lam_rhs, cfg);
    let mut g: f64 = 0.0;
    let mut x = 0.0;
    let mut h = cfg.h_init;
    let mut taus = Vec::with_capacity(ts.len());
    for &target in &ts {
        while x < target {
            let remaining = target - x;
            let capped = h.min(remaining);
            let (taken, g_new, h_next) = loop {
                let reach = g + 4.0 * capped * lam.eval(g.min(lam.end())).map(f64::exp).unwrap_or(1.0) + 0.1;
                lam.extend_to(reach, &lam_rhs)?;
                let rhs = |y: f64| lam.eval(y).map(f64::exp).unwrap_or(f64::NAN);
                match controlled_step(&rhs, g, capped, &cfg) {
                    Ok(v) => break v,
                    Err(_) if lam.end() < 1e12 => {
                        let end = lam.end();
                        lam.extend_to(2.0 * end + 1.0, &lam_rhs)?;
                    }
                    Err(e) => return Err(e),
                }
            };
            g = g_new;
            x = if taken >= remaining { target } else { x + taken };
            if taken < capped || capped == h {
                h = h_next;
            }
        }
        taus.push(g);
    }

    let mut samples = Vec::with_capacity(ts.len());
    let mut discrepancy = 0.0f64;
    for ((t, tau), sb) in ts.iter().zip(&taus).zip(&s_b) {
        let l = lam.eval(*tau)?;
        let s = s_star * (1.0 - (-l).exp());
        if *sb > 0.0 {
            discrepancy = discrepancy.max((s - sb).abs() / sb);
        }
        samples.push(MapSample { t: *t, tau: *tau, lambda_at: l, s, gamma: gamma.eval(s), s_collapsed: *sb });
    }
    if discrepancy > ROUTE_TOLERANCE {
        return Err(PsflowError::IntegratorInconsistency(format!(
            "routes disagree on s(t) by {discrepancy:e} relative (limit {ROUTE_TOLERANCE:e})"
        )));
    }
    if let Some(k) = samples.windows(2).position(|w| !(w[1].s > w[0].s) || w[1].s >= s_star) {
        return Err(PsflowError::IntegratorInconsistency(format!(
            "s(t) not strictly increasing below S* at t = {}",
            samples[k + 1].t
        )));
    }
    Ok(TimeMap { s_star, exponent: a, map_dt: settings.map_dt, samples, discrepancy, gamma })
}

/// First t with `s(t) = s_target` on the collapsed route.
fn default_t_end(rate: &impl Fn(f64) -> f64, s_target: f64, cfg: &OdeSettings) -> Result<f64> {
    let mut t = 0.0;
    let mut s = 0.0;
    let mut h = cfg.h_init;
    loop {
        let (taken, s_new, h_next) = controlled_step(rate, s, h, cfg)?;
        if s_new >= s_target {
            // cubic Hermite root on the last step
            let (d0, d1) = (rate(s), rate(s_new));
            let (mut lo, mut hi) = (t, t + taken);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if hermite(t, t + taken, s, s_new, d0, d1, mid) < s_target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        if taken < 1e-14 || t > 1e9 {
            return Err(PsflowError::IntegratorInconsistency(format!(
                "s(t) stalls at {s} below target {s_target}"
            )));
        }
        t += taken;
        s = s_new;
        h = h_next;
    }
}

#[derive(Debug, Clone)]
pub struct RescaledState {
    pub t: f64,
    pub s: f64,
    pub u: Field,
    pub lambda_t: f64,
    pub gamma_t: f64,
    /// `| |u|_{q+1} - 1 |` before renormalization.
    pub renormalization: f64,
    /// `| |u|_{q+1} - 1 |` after renormalization.
    pub constraint_residual: f64,
}

/// `v(s)` interpolated linearly in `v^q` between the bracketing snapshots.
pub fn field_at_s(store: &SnapshotStore, s: f64) -> Result<Field> {
    let k = store.bracket(s)?;
    let a = &store.snapshots[k];
    if store.snapshots.len() == 1 || s == a.s {
        return Ok(a.field.clone());
    }
    let b = &store.snapshots[k + 1];
    let theta = ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
    let q = store.params.q;
    let vals = a
        .field
        .values()
        .iter()
        .zip(b.field.values())
        .map(|(x, y)| ((1.0 - theta) * x.powf(q) + theta * y.powf(q)).max(0.0).powf(1.0 / q))
        .collect();
    Field::from_values(store.grid.clone(), vals)
}

pub fn rescale_solution(store: &SnapshotStore, map: &TimeMap, t: f64) -> Result<RescaledState> {
    let q = store.params.q;
    let s = map.s_at(t)?;
    let v = field_at_s(store, s)?;
    let gamma_t = map.gamma_of_s(s);
    if !(gamma_t > 0.0) {
        return Err(PsflowError::Range(format!("gamma vanishes at t = {t} (s = {s})")));
    }
    let u = v.scaled(1.0 / gamma_t);
    let norm = lr_norm(&u, q + 1.0)?;
    let u = u.scaled(1.0 / norm);
    let constraint_residual = (lr_norm(&u, q + 1.0)? - 1.0).abs();
    let op = PLaplacianOp::new(store.params.p, store.grid.clone());
    let lambda_t = op.energy(u.values());
    Ok(RescaledState { t, s, u, lambda_t, gamma_t, renormalization: (norm - 1.0).abs(), constraint_residual })
}

/// Rescaled states at every `stride`-th map sample, evaluated in parallel.
pub fn rescale_series(store: &SnapshotStore, map: &TimeMap, stride: usize) -> Result<Vec<RescaledState>> {
    let stride = stride.max(1);
    let ts: Vec<f64> = map.samples.iter().step_by(stride).map(|m| m.t).collect();
    ts.par_iter().map(|&t| rescale_solution(store, map, t)).collect()
}

/// Fourth-order finite differences on a uniform grid: centred in the
/// interior, one-sided on the two samples at each end.
pub fn fd_derivative(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    if n < 5 {
        return (0..n)
            .map(|k| match (k, n) {
                (_, 0 | 1) => 0.0,
                (0, _) => (y[1] - y[0]) / h,
                (k, _) if k == n - 1 => (y[k] - y[k - 1]) / h,
                (k, _) => (y[k + 1] - y[k - 1]) / (2.0 * h),
            })
            .collect();
    }
    (0..n)
        .map(|k| {
            let d = if k == 0 {
                -25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]
            } else if k == 1 {
                -3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4]
            } else if k == n - 2 {
                3.0 * y[n - 1] + 10.0 * y[n - 2] - 18.0 * y[n - 3] + 6.0 * y[n - 4] - y[n - 5]
            } else if k == n - 1 {
                25.0 * y[n - 1] - 48.0 * y[n - 2] + 36.0 * y[n - 3] - 16.0 * y[n - 4] + 3.0 * y[n - 5]
            } else {
                y[k - 2] - 8.0 * y[k - 1] + 8.0 * y[k + 1] - y[k + 2]
            };
            d / (12.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCheck {
    pub t: f64,
    pub fd_rate: f64,
    pub model_rate: f64,
    pub rel_error: f64,
}

/// Differences of the sampled `s(t)` against `gamma(t)^a` at every sample.
pub fn rate_identity(map: &TimeMap) -> Vec<RateCheck> {
    let s: Vec<f64> = map.samples.iter().map(|m| m.s).collect();
    let fd = fd_derivative(&s, map.map_dt);
    map.samples
        .iter()
        .zip(fd)
        .map(|(m, fd)| {
            let model = m.gamma.powf(map.exponent);
            RateCheck { t: m.t, fd_rate: fd, model_rate: model, rel_error: (fd - model).abs() / model }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaCheck {
    pub t: f64,
    pub lambda_t: f64,
    pub lambda_fd: f64,
    pub rel_error: f64,
}

/// `lambda_t = |grad u|_p^p` against `-q gamma'/gamma`, with `gamma'` from
/// differences on the map grid. `series` entries must sit on map samples.
pub fn lambda_identity(map: &TimeMap, series: &[RescaledState], q: f64) -> Vec<LambdaCheck> {
    let dt = map.map_dt;
    let g: Vec<f64> = map.samples.iter().map(|m| m.gamma).collect();
    let dg = fd_derivative(&g, dt);
    series
        .iter()
        .filter_map(|st| {
            let k = (st.t / dt).round() as usize;
            if k >= map.samples.len() || (map.samples[k].t - st.t).abs() > 1e-12 {
                return None;
            }
            let fd = -q * dg[k] / g[k];
            Some(LambdaCheck { t: st.t, lambda_t: st.lambda_t, lambda_fd: fd, rel_error: (st.lambda_t - fd).abs() / st.lambda_t })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundednessViolation {
    pub t: f64,
    pub max_u: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessReport {
    pub checked: usize,
    /// Smallest `bound / max_u` over the series.
    pub min_ratio: f64,
    pub violations: Vec<BoundednessViolation>,
}

/// Checks `max u(t) <= exp((1/q) int_0^t lambda) max u0 (1 + 1e-6)` with
/// trapezoid quadrature over the series, which must start at t = 0.
pub fn boundedness_check(series: &[(f64, &Field, f64)], u0_max: f64, q: f64) -> Result<BoundednessReport> {
    if series.is_empty() {
        return Err(PsflowError::Range("boundedness check needs a nonempty series".into()));
    }
    let mut integral = 0.0;
    let mut violations = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for (k, (t, u, lam)) in series.iter().enumerate() {
        if k > 0 {
            let (tp, _, lp) = series[k - 1];
            integral += 0.5 * (t - tp) * (lam + lp);
        }
        let bound = (integral / q).exp() * u0_max * (1.0 + 1e-6);
        let m = u.max();
        if m > 0.0 {
            min_ratio = min_ratio.min(bound / m);
        }
        if m > bound {
            violations.push(BoundednessViolation { t: *t, max_u: m, bound });
        }
    }
    Ok(BoundednessReport { checked: series.len(), min_ratio, violations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub max_slope: f64,
    pub bound: f64,
    pub floor: f64,
}

/// Largest difference-quotient slope of gamma on the map grid against
/// `(c0^{-q}/q) |grad u0|_p^p max gamma^a`, with `c0` the smallest gamma.
pub fn lipschitz_check(map: &TimeMap, grad_energy_u0: f64, q: f64) -> LipschitzReport {
    let floor = map.samples.iter().map(|m| m.gamma).fold(f64::INFINITY, f64::min);
    let gmax = map.samples.iter().map(|m| m.gamma).fold(0.0, f64::max);
    let max_slope = map
        .samples
        .windows(2)
        .map(|w| (w[1].gamma - w[0].gamma).abs() / (w[1].t - w[0].t))
        .fold(0.0, f64::max);
    let bound = floor.powf(-q) / q * grad_energy_u0 * gmax.powf(map.exponent);
    LipschitzReport { max_slope, bound, floor }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;

    fn constant_gamma(s_star: f64) -> GammaInterpolant {
        GammaInterpolant::from_samples(vec![0.0, 0.5 * s_star, s_star], vec![1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn constant_gamma_closed_form() {
        let fp = make_params(3, 2.0).unwrap();
        let s_star = 2.0;
        let settings = MapSettings { t_end: Some(1.5), map_dt: 1e-2, ..Default::default() };
        let map = time_map_from_gamma(constant_gamma(s_star), s_star, &fp, &settings).unwrap();
        for m in &map.samples {
            assert!((m.s - m.t).abs() < 1e-8, "{m:?}");
            assert!((m.s_collapsed - m.t).abs() < 1e-12);
            assert!((m.lambda_at + (1.0 - m.t / s_star).ln()).abs() < 1e-8);
        }
        assert_eq!(map.samples[0].s, 0.0);
        assert_eq!(map.samples[0].tau, 0.0);
    }

    #[test]
    fn default_end_hits_fraction_of_extinction() {
        let fp = make_params(3, 2.0).unwrap();
        let s_star = 1.0;
        let g = GammaInterpolant::from_samples(
            (0..=100).map(|k| k as f64 / 100.0).collect(),
            (0..=100).map(|k| (1.0 - k as f64 / 100.0).powf(0.25)).collect(),
        )
        .unwrap();
        let settings = MapSettings { map_dt: 1e-3, ..Default::default() };
        let map = time_map_from_gamma(g, s_star, &fp, &settings).unwrap();
        let last = map.samples.last().unwrap();
        assert!(last.s <= 0.99 * s_star + 1e-9);
        assert!(last.s > 0.98 * s_star, "{}", last.s);
        assert!(map.samples.windows(2).all(|w| w[1].s > w[0].s));
        // inverse round trip
        for m in map.samples.iter().step_by(97) {
            let t = map.t_at(m.s).unwrap();
            assert!((t - m.t).abs() < 1e-9);
        }
    }

    #[test]
    fn increasing_gamma_is_rejected() {
        assert!(matches!(
            GammaInterpolant::from_samples(vec![0.0, 1.0], vec![1.0, 1.1]),
            Err(PsflowError::DataIntegrity(_))
        ));
    }

    #[test]
    fn zero_multiplier_reduces_to_max_principle() {
        let g = std::sync::Arc::new(crate::grid::Grid::cartesian_1d(1.0, 5).unwrap());
        let a = Field::from_values(g.clone(), vec![0.0, 0.5, 1.0, 0.5, 0.0]).unwrap();
        let b = Field::from_values(g, vec![0.0, 0.5, 1.0 + 1e-3, 0.5, 0.0]).unwrap();
        let ok = boundedness_check(&[(0.0, &a, 0.0), (1.0, &a, 0.0)], 1.0, 5.0).unwrap();
        assert!(ok.violations.is_empty());
        assert!((ok.min_ratio - (1.0 + 1e-6)).abs() < 1e-15);
        let bad = boundedness_check(&[(0.0, &a, 0.0), (1.0, &b, 0.0)], 1.0, 5.0).unwrap();
        assert_eq!(bad.violations.len(), 1);
        assert_eq!(bad.violations[0].t, 1.0);
    }

    #[test]
    fn fourth_order_differences() {
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let y: Vec<f64> = (0..=(2.0 / h) as usize).map(|k| (1.3 * k as f64 * h).sin()).collect();
                fd_derivative(&y, h)
                    .iter()
                    .enumerate()
                    .map(|(k, d)| (d - 1.3 * (1.3 * k as f64 * h).cos()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.7, "{errs:?}");
    }
}
