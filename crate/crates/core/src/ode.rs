//! Scalar autonomous ODE integration: classical RK4 with step-doubling
//! error control and cubic Hermite dense output.

use crate::error::{PsflowError, Result};
use crate::interp::hermite;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSettings {
    /// Absolute local error tolerance.
    pub tol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self { tol: 1e-11, h_init: 1e-4, h_max: 1e-2, h_min: 1e-14 }
    }
}

fn rk4(f: &impl Fn(f64) -> f64, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// One controlled step from `y`: returns the accepted size and new value,
/// plus a proposal for the next step size.
pub fn controlled_step(
    f: &impl Fn(f64) -> f64,
    y: f64,
    h_try: f64,
    cfg: &OdeSettings,
) -> Result<(f64, f64, f64)> {
    let mut h = h_try.min(cfg.h_max);
    loop {
        let full = rk4(f, y, h);
        let half = rk4(f, rk4(f, y, 0.5 * h), 0.5 * h);
        let err = (half - full).abs() / 15.0;
        if !err.is_finite() {
            return Err(PsflowError::IntegratorInconsistency(format!("non-finite ODE state at h = {h:e}")));
        }
        if err <= cfg.tol {
            let factor = if err == 0.0 { 2.0 } else { (0.9 * (cfg.tol / err).powf(0.2)).clamp(0.2, 2.0) };
            return Ok((h, half + (half - full) / 15.0, (h * factor).min(cfg.h_max)));
        }
        if h <= cfg.h_min {
            return Err(PsflowError::IntegratorInconsistency(format!(
                "ODE step size underflow (error {err:e} at h = {h:e})"
            )));
        }
        h = (h * (0.9 * (cfg.tol / err).powf(0.2)).clamp(0.1, 0.5)).max(cfg.h_min);
    }
}

/// Growable solution of `y' = f(y)`, `y(0) = y0`, with dense output.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    x: Vec<f64>,
    y: Vec<f64>,
    dy: Vec<f64>,
    h_next: f64,
    cfg: OdeSettings,
}

impl DenseSolution {
    pub fn new(y0: f64, f: &impl Fn(f64) -> f64, cfg: OdeSettings) -> Self {
        Self { x: vec![0.0], y: vec![y0], dy: vec![f(y0)], h_next: cfg.h_init, cfg }
    }

    pub fn end(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn steps(&self) -> usize {
        self.x.len() - 1
    }

    /// Advances until the solution covers `[0, x_end]`.
    pub fn extend_to(&mut self, x_end: f64, f: &impl Fn(f64) -> f64) -> Result<()> {
        while self.end() < x_end {
            let y = self.y[self.y.len() - 1];
            let (h, y_new, h_next) = controlled_step(f, y, self.h_next, &self.cfg)?;
            self.x.push(self.end() + h);
            self.y.push(y_new);
            self.dy.push(f(y_new));
            self.h_next = h_next;
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) || x > self.end() {
            return Err(PsflowError::Range(format!(
                "dense output requested at {x} outside [0, {}]",
                self.end()
            )));
        }
        let k = self.x.partition_point(|&v| v <= x).saturating_sub(1).min(self.x.len().saturating_sub(2));
        if self.x.len() == 1 || x == self.x[k] {
            return Ok(self.y[k]);
        }
        Ok(hermite(self.x[k], self.x[k + 1], self.y[k], self.y[k + 1], self.dy[k], self.dy[k + 1], x))
    }
}

/// Integrates `y' = f(y)` from 0 and returns `y` at each of the sorted,
/// nonnegative `outputs`; steps are shortened to land on each output.
pub fn integrate_to_outputs(
    y0: f64,
    f: &impl Fn(f64) -> f64,
    outputs: &[f64],
    cfg: &OdeSettings,
) -> Result<Vec<f64>> {
    let mut x = 0.0;
    let mut y = y0;
    let mut h = cfg.h_init;
    let mut out = Vec::with_capacity(outputs.len());
    for &target in outputs {
        while x < target {
            let remaining = target - x;
            let capped = h.min(remaining);
            let (taken, y_new, h_next) = controlled_step(f, y, capped, cfg)?;
            y = y_new;
            x = if taken >= remaining { target } else { x + taken };
            // a shortened landing step does not shrink the running step size
            if taken < capped || capped == h {
                h = h_next;
            }
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let f = |y: f64| y;
        let cfg = OdeSettings::default();
        let ts: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
        let ys = integrate_to_outputs(1.0, &f, &ts, &cfg).unwrap();
        for (t, y) in ts.iter().zip(ys) {
            assert!((y - t.exp()).abs() < 1e-8 * t.exp());
        }
    }

    #[test]
    fn dense_output_of_logistic() {
        let f = |y: f64| y * (1.0 - y);
        let mut sol = DenseSolution::new(0.1, &f, OdeSettings::default());
        sol.extend_to(5.0, &f).unwrap();
        let exact = |t: f64| 1.0 / (1.0 + 9.0 * (-t).exp());
        for k in 0..50 {
            let t = 0.0987 * k as f64;
            assert!((sol.eval(t).unwrap() - exact(t)).abs() < 1e-8);
        }
        assert!(sol.eval(sol.end() + 1.0).is_err());
    }
}
