//! Monotone piecewise-cubic (Fritsch-Carlson) interpolation.

use crate::error::{PsflowError, Result};

/// Cubic Hermite value on `[x0, x1]` from endpoint values and slopes.
#[inline]
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

#[inline]
pub fn hermite_derivative(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    ((6.0 * t2 - 6.0 * t) * y0 + (6.0 * t - 6.0 * t2) * y1) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * d0
        + (3.0 * t2 - 2.0 * t) * d1
}

#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// Requires strictly increasing `x` and at least two knots.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(PsflowError::DataIntegrity(format!(
                "interpolation needs at least two matching knots (got {} x, {} y)",
                n,
                y.len()
            )));
        }
        if let Some(k) = x.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(PsflowError::DataIntegrity(format!(
                "knots not strictly increasing at index {k}: {} then {}",
                x[k],
                x[k + 1]
            )));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, d })
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn segment(&self, x: f64) -> usize {
        let k = self.x.partition_point(|&v| v <= x);
        k.saturating_sub(1).min(self.x.len() - 2)
    }

    /// Value at `x`, clamped to the end values outside the knot range.
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.domain();
        if x <= a {
            return self.y[0];
        }
        if x >= b {
            return self.y[self.y.len() - 1];
        }
        let k = self.segment(x);
        if x == self.x[k] {
            return self.y[k];
        }
        hermite(self.x[k], self.x[k + 1], self.y[k], self.y[k + 1], self.d[k], self.d[k + 1], x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (a, b) = self.domain();
        if x < a || x > b {
            return 0.0;
        }
        let k = self.segment(x);
        hermite_derivative(self.x[k], self.x[k + 1], self.y[k], self.y[k + 1], self.d[k], self.d[k + 1], x)
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_knots_and_cubics_locally() {
        let x: Vec<f64> = (0..20).map(|k| (k as f64 * 0.3).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|v| (-v).exp()).collect();
        let p = Pchip::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(p.eval(*a), *b);
        }
        let mid = 0.5 * (x[5] + x[6]);
        assert!((p.eval(mid) - (-mid).exp()).abs() < 1e-3);
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(Pchip::new(vec![0.0, 1.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Pchip::new(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn hermite_derivative_matches_difference() {
        let (x0, x1, y0, y1, d0, d1) = (0.2, 0.9, 1.0, -0.4, 0.3, 2.0);
        let x = 0.47;
        let e = 1e-6;
        let fd = (hermite(x0, x1, y0, y1, d0, d1, x + e) - hermite(x0, x1, y0, y1, d0, d1, x - e)) / (2.0 * e);
        assert!((fd - hermite_derivative(x0, x1, y0, y1, d0, d1, x)).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(
            steps in proptest::collection::vec((0.01f64..1.0, 0.0f64..1.0), 2..30),
            probes in proptest::collection::vec(0.0f64..1.0, 50),
        ) {
            let mut x = vec![0.0];
            let mut y = vec![10.0];
            for (dx, dy) in &steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() - dy);
            }
            let p = Pchip::new(x.clone(), y).unwrap();
            let span = x.last().unwrap();
            let mut pts: Vec<f64> = probes.iter().map(|t| t * span).collect();
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in pts.windows(2) {
                prop_assert!(p.eval(w[1]) <= p.eval(w[0]) + 1e-12);
            }
        }
    }
}
