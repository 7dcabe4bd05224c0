//! Exponent bookkeeping for the doubly nonlinear flow.
//!
//! Every derived exponent used elsewhere in the crate (p*, q, q + 1 - p and
//! the time-map exponent (q + 1) p / n) is computed here and nowhere else.

use serde::{Deserialize, Serialize};

use crate::error::{PsflowError, Result};

/// Solver tolerances carried alongside the exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative max-norm tolerance on the time-scaled Newton residual.
    pub newton_tol: f64,
    /// Tolerance for quadrature-level identities.
    pub quad_tol: f64,
    /// Absolute extinction threshold on max |v|. `None` resolves to
    /// `1e-8 * max u0` once initial data is known.
    pub extinction_eps: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            quad_tol: 1e-12,
            extinction_eps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub n: usize,
    pub p: f64,
    pub p_star: f64,
    pub q: f64,
    /// q + 1 - p, always positive.
    pub q1p: f64,
    pub tolerances: Tolerances,
}

impl FlowParams {
    /// Exponent (q + 1) p / n = p^2 / (n - p) of the time-map ODE.
    pub fn time_map_exponent(&self) -> f64 {
        (self.q + 1.0) * self.p / self.n as f64
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }
}

/// Builds the exponent set for dimension `n` and p-Laplacian exponent `p`.
pub fn make_params(n: usize, p: f64) -> Result<FlowParams> {
    if n < 3 {
        return Err(PsflowError::ParameterDomain(format!(
            "dimension n must be at least 3 (got {n})"
        )));
    }
    let nf = n as f64;
    if !p.is_finite() || p < 2.0 || p >= nf {
        return Err(PsflowError::ParameterDomain(format!(
            "p must satisfy 2 <= p < n (got p = {p}, n = {n})"
        )));
    }
    let p_star = nf * p / (nf - p);
    let q = p_star - 1.0;
    let q1p = q + 1.0 - p;
    Ok(FlowParams {
        n,
        p,
        p_star,
        q,
        q1p,
        tolerances: Tolerances::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponents_n3_p2() {
        let fp = make_params(3, 2.0).unwrap();
        assert_eq!(fp.p_star, 6.0);
        assert_eq!(fp.q, 5.0);
        assert_eq!(fp.q1p, 4.0);
    }

    #[test]
    fn exponents_n4_p2() {
        let fp = make_params(4, 2.0).unwrap();
        assert_eq!(fp.p_star, 4.0);
        assert_eq!(fp.q, 3.0);
        assert_eq!(fp.q1p, 2.0);
    }

    #[test]
    fn exponents_n3_p25() {
        let fp = make_params(3, 2.5).unwrap();
        assert!((fp.p_star - 15.0).abs() < 1e-12);
        assert!((fp.q - 14.0).abs() < 1e-12);
        assert!((fp.q1p - 12.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_p_equal_n() {
        assert!(matches!(
            make_params(3, 3.0),
            Err(PsflowError::ParameterDomain(_))
        ));
        assert!(make_params(3, 1.5).is_err());
        assert!(make_params(2, 2.0).is_err());
        assert!(make_params(3, f64::NAN).is_err());
    }

    #[test]
    fn derived_identities_hold_over_parameter_range() {
        for n in 3..9usize {
            let mut p = 2.0;
            while p < n as f64 {
                let fp = make_params(n, p).unwrap();
                let nf = n as f64;
                assert!(fp.q1p > 0.0);
                assert!(fp.q > p - 1.0);
                let lhs = (fp.q + 1.0) * p / nf;
                let rhs = p * p / (nf - p);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
                assert!((fp.q1p - rhs).abs() <= 1e-12 * rhs.max(1.0));
                p += 0.25;
            }
        }
    }
}
