//! Talenti profiles and the separable comparison supersolution of the
//! prototype flow.
//!
//! The profile solving `-Delta_p Y = Y^q` in R^n is
//!
//! ```text
//! Y(x) = (K / lambda^p)^{(n-p)/p^2} (1 + (|x - y| / lambda)^{p/(p-1)})^{-(n-p)/p},
//! K    = n ((n-p)/(p-1))^{p-1},
//! ```
//!
//! i.e. the two-parameter family `(a + b |x-y|^{p/(p-1)})^{-(n-p)/p}` with
//! `K a b^{p-1} = 1` and `b = a lambda^{-p/(p-1)}`. At n = 2p the prefactor
//! reduces to `K^{1/p} / lambda`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{PsflowError, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::operators::PLaplacianOp;
use crate::params::FlowParams;
use crate::store::SnapshotStore;

#[derive(Debug, Clone, PartialEq)]
pub struct TalentiProfile {
    pub lam: f64,
    pub center: Vec<f64>,
    pub params: FlowParams,
    /// Separation constant, strictly negative.
    pub mu: f64,
    /// Initial value of the time factor Z.
    pub z0: f64,
}

/// `K = n ((n-p)/(p-1))^{p-1}`.
pub fn talenti_constant(params: &FlowParams) -> f64 {
    let n = params.n as f64;
    let p = params.p;
    n * ((n - p) / (p - 1.0)).powf(p - 1.0)
}

/// General two-parameter family `(a + b r^{p/(p-1)})^{-(n-p)/p}`; solves
/// `-Delta_p Y = K a b^{p-1} Y^q`.
pub fn talenti_family(a: f64, b: f64, r: f64, params: &FlowParams) -> f64 {
    let n = params.n as f64;
    let p = params.p;
    (a + b * r.powf(p / (p - 1.0))).powf(-(n - p) / p)
}

/// Parameters `(a, b)` of the family member that equals the lambda-profile.
pub fn family_parameters(lam: f64, params: &FlowParams) -> (f64, f64) {
    let p = params.p;
    let a = (lam.powf(p) / talenti_constant(params)).powf(1.0 / p);
    let b = a * lam.powf(-p / (p - 1.0));
    (a, b)
}

impl TalentiProfile {
    pub fn new(lam: f64, center: Vec<f64>, params: FlowParams, mu: f64, z0: f64) -> Result<Self> {
        if !(lam > 0.0) {
            return Err(PsflowError::ParameterDomain(format!("Talenti scale must be positive (got {lam})")));
        }
        if !(mu < 0.0) {
            return Err(PsflowError::ParameterDomain(format!(
                "separation constant must be negative (got {mu})"
            )));
        }
        if !(z0 > 0.0) {
            return Err(PsflowError::ParameterDomain(format!("Z(0) must be positive (got {z0})")));
        }
        Ok(Self { lam, center, params, mu, z0 })
    }

    /// Profile with `Z(0)` chosen so that `V(., 0) >= u0` on the grid.
    pub fn for_initial_data(lam: f64, center: Vec<f64>, params: FlowParams, mu: f64, u0: &Field) -> Result<Self> {
        let probe = Self::new(lam, center.clone(), params, mu, 1.0)?;
        let min_y = probe.min_on_grid(u0)?;
        let z0 = u0.max() / min_y * (-mu).powf(1.0 / params.q1p);
        Self::new(lam, center, params, mu, z0)
    }

    pub fn prefactor(&self) -> f64 {
        let n = self.params.n as f64;
        let p = self.params.p;
        (talenti_constant(&self.params) / self.lam.powf(p)).powf((n - p) / (p * p))
    }

    pub fn radial_value(&self, r: f64) -> f64 {
        let n = self.params.n as f64;
        let p = self.params.p;
        self.prefactor() * (1.0 + (r / self.lam).powf(p / (p - 1.0))).powf(-(n - p) / p)
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.center.iter().chain(std::iter::repeat(&0.0)))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.radial_value(self.distance(x))
    }

    /// Minimum of Y over the grid nodes (closed domain), asserted to sit at a
    /// node of maximal distance from the centre.
    pub fn min_on_grid(&self, f: &Field) -> Result<f64> {
        let grid = f.grid();
        let mut min_val = f64::INFINITY;
        let mut min_idx = 0;
        let mut far_dist = 0.0f64;
        for idx in 0..grid.len() {
            let x = grid.coords(idx);
            let v = self.value(&x);
            if v < min_val {
                min_val = v;
                min_idx = idx;
            }
            far_dist = far_dist.max(self.distance(&x));
        }
        let at = self.distance(&grid.coords(min_idx));
        if (at - far_dist).abs() > 1e-12 * far_dist.max(1.0) {
            return Err(PsflowError::InvariantFailure(format!(
                "Talenti minimum at distance {at} but farthest node is at {far_dist}"
            )));
        }
        Ok(min_val)
    }

    /// Time factor `Z(s) = Z0 (1 + mu (q+1-p)/q Z0^{p-(q+1)} s)_+^{1/(q+1-p)}`.
    pub fn z(&self, s: f64) -> f64 {
        z_profile(self.z0, self.mu, s, &self.params).unwrap_or(0.0)
    }

    /// Vanishing time of Z.
    pub fn z_extinction(&self) -> f64 {
        let fp = &self.params;
        fp.q / ((-self.mu) * fp.q1p) * self.z0.powf(fp.q1p)
    }

    /// `V(x, s) = (-mu)^{-1/(q+1-p)} Y(x) Z(s)`.
    pub fn comparison_supersolution(&self, x: &[f64], s: f64) -> f64 {
        (-self.mu).powf(-1.0 / self.params.q1p) * self.value(x) * self.z(s)
    }

    pub fn supersolution_field(&self, like: &Field, s: f64) -> Field {
        Field::from_fn(like.grid().clone(), |x| self.comparison_supersolution(x, s))
    }
}

pub fn z_profile(z0: f64, mu: f64, s: f64, params: &FlowParams) -> Result<f64> {
    if !(mu < 0.0) {
        return Err(PsflowError::ParameterDomain(format!(
            "separation constant must be negative (got {mu})"
        )));
    }
    if !(z0 > 0.0) || s < 0.0 {
        return Err(PsflowError::ParameterDomain(format!("need Z0 > 0 and s >= 0 (got {z0}, {s})")));
    }
    let q = params.q;
    let q1p = params.q1p;
    let inner = 1.0 + mu * (q1p / q) * z0.powf(params.p - (q + 1.0)) * s;
    Ok(if inner <= 0.0 { 0.0 } else { z0 * inner.powf(1.0 / q1p) })
}

/// `(q / (q+1-p)) (max u0 / min_grid Y)^{q+1-p}`.
pub fn extinction_bound(u0: &Field, prof: &TalentiProfile) -> Result<f64> {
    let min_y = prof.min_on_grid(u0)?;
    let fp = &prof.params;
    Ok(fp.q / fp.q1p * (u0.max() / min_y).powf(fp.q1p))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub checked: usize,
    /// Largest `v - V` over all snapshots and nodes.
    pub max_excess: f64,
    pub tol: f64,
    /// `(s, excess)` wherever `v > V + tol`.
    pub violations: Vec<(f64, f64)>,
}

/// Checks `v(s) <= V(s) + tol` at every stored snapshot.
pub fn comparison_check(store: &SnapshotStore, prof: &TalentiProfile, tol: f64) -> ComparisonReport {
    let mut max_excess = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for snap in &store.snapshots {
        let bound = prof.supersolution_field(&snap.field, snap.s);
        let excess = snap
            .field
            .values()
            .iter()
            .zip(bound.values())
            .map(|(v, b)| v - b)
            .fold(f64::NEG_INFINITY, f64::max);
        max_excess = max_excess.max(excess);
        if excess > tol {
            violations.push((snap.s, excess));
        }
    }
    ComparisonReport { checked: store.snapshots.len(), max_excess, tol, violations }
}

/// Sup of `|-Delta_p Y - Y^q|` over interior nodes at distance at least
/// `r_min` from the centre, with the grid's face-flux operator.
pub fn pde_residual(prof: &TalentiProfile, grid: &Arc<Grid>, r_min: f64) -> f64 {
    let y = Field::from_fn(grid.clone(), |x| prof.value(x));
    let op = PLaplacianOp::new(prof.params.p, grid.clone());
    let lap = op.neg_p_laplacian(y.values());
    let q = prof.params.q;
    grid.interior_indices()
        .filter(|&i| prof.distance(&grid.coords(i)) >= r_min)
        .map(|i| (lap[i] - y.values()[i].powf(q)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prof(n: usize, p: f64, lam: f64) -> TalentiProfile {
        TalentiProfile::new(lam, vec![0.0], make_params(n, p).unwrap(), -1.0, 1.0).unwrap()
    }

    #[test]
    fn centre_and_unit_distance_values() {
        // n = 3, p = 2: K = 3, prefactor 3^{1/4}
        let y = prof(3, 2.0, 1.0);
        assert!((y.value(&[0.0]) - 3f64.powf(0.25)).abs() < 1e-14);
        assert!((y.value(&[1.0]) - 3f64.powf(0.25) / 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn literal_prefactor_recovered_when_n_is_2p() {
        let y = prof(4, 2.0, 1.7);
        let k = talenti_constant(&y.params);
        assert!((y.prefactor() - k.powf(0.5) / 1.7).abs() < 1e-14);
    }

    #[test]
    fn scaling_homogeneity() {
        let fp = make_params(5, 2.5).unwrap();
        let n = 5.0;
        let p = 2.5;
        for lam in [0.3, 1.0, 2.2] {
            let a = TalentiProfile::new(lam, vec![0.0], fp, -1.0, 1.0).unwrap();
            let b = TalentiProfile::new(1.0, vec![0.0], fp, -1.0, 1.0).unwrap();
            for r in [0.0, 0.4, 1.3] {
                // Y_lam(r) = lam^{-(n-p)/p} Y_1(r / lam)
                let lhs = a.radial_value(r);
                let rhs = lam.powf(-(n - p) / p) * b.radial_value(r / lam);
                assert!((lhs - rhs).abs() < 1e-13 * rhs);
            }
        }
    }

    #[test]
    fn general_family_reproduces_profile() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, p) in [(3, 2.0), (4, 2.5), (6, 3.0), (5, 2.2)] {
            let fp = make_params(n, p).unwrap();
            for _ in 0..200 {
                let lam = rng.random_range(0.2..3.0);
                let r = rng.random_range(0.0..5.0);
                let (a, b) = family_parameters(lam, &fp);
                assert!((talenti_constant(&fp) * a * b.powf(p - 1.0) - 1.0).abs() < 1e-12);
                let y = TalentiProfile::new(lam, vec![0.0], fp, -1.0, 1.0).unwrap();
                let lhs = talenti_family(a, b, r, &fp);
                let rhs = y.radial_value(r);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
            }
        }
    }

    #[test]
    fn z_profile_values() {
        let fp = make_params(3, 2.0).unwrap();
        assert_eq!(z_profile(1.3, -1.0, 0.0, &fp).unwrap(), 1.3);
        assert_eq!(z_profile(1.0, -1.0, 1.25, &fp).unwrap(), 0.0);
        assert!(z_profile(1.0, -1.0, 1.2499, &fp).unwrap() > 0.0);
        assert!(z_profile(1.0, 0.5, 1.0, &fp).is_err());
    }

    #[test]
    fn z_solves_its_ode() {
        let fp = make_params(3, 2.0).unwrap();
        let (z0, mu): (f64, f64) = (1.4, -0.8);
        let ext = fp.q / ((-mu) * fp.q1p) * z0.powf(fp.q1p);
        let d = 1e-6;
        for k in 1..10 {
            let s = ext * k as f64 / 11.0;
            let zq = |s: f64| z_profile(z0, mu, s, &fp).unwrap().powf(fp.q);
            let fd = (zq(s + d) - zq(s - d)) / (2.0 * d);
            let rhs = mu * z_profile(z0, mu, s, &fp).unwrap().powf(fp.p - 1.0);
            assert!((fd - rhs).abs() < 1e-6 * rhs.abs().max(1.0), "{fd} vs {rhs}");
        }
    }

    #[test]
    fn bound_arithmetic() {
        let fp = make_params(3, 2.0).unwrap();
        let g = Arc::new(Grid::radial(1.0, 21, 3).unwrap());
        let y = TalentiProfile::new(1.0, vec![0.0], fp, -1.0, 1.0).unwrap();
        let min_y = y.radial_value(1.0);
        // u0 with max equal to min Y
        let mut u0 = Field::from_fn(g.clone(), |_| 0.5 * min_y);
        u0.values_mut()[3] = min_y;
        assert!((extinction_bound(&u0, &y).unwrap() - 1.25).abs() < 1e-13);
        let doubled = u0.scaled(2.0);
        let ratio = extinction_bound(&doubled, &y).unwrap() / extinction_bound(&u0, &y).unwrap();
        assert!((ratio - 16.0).abs() < 1e-12);
        assert!(TalentiProfile::new(0.0, vec![0.0], fp, -1.0, 1.0).is_err());
    }

    #[test]
    fn supersolution_dominates_initial_data() {
        let fp = make_params(3, 2.0).unwrap();
        let g = Arc::new(Grid::radial(1.0, 41, 3).unwrap());
        let u0 = Field::from_fn(g, |x| (1.0 - x[0] * x[0]).max(0.0) * 0.9);
        let prof = TalentiProfile::for_initial_data(1.0, vec![0.0], fp, -1.0, &u0).unwrap();
        let v0 = prof.supersolution_field(&u0, 0.0);
        let min_y = prof.min_on_grid(&u0).unwrap();
        for (i, (a, b)) in u0.values().iter().zip(v0.values()).enumerate() {
            assert!(b >= a);
            let x = u0.grid().coords(i);
            assert!((b - u0.max() / min_y * prof.value(&x)).abs() < 1e-13);
        }
        // nonincreasing in s
        let later = prof.supersolution_field(&u0, 0.3 * prof.z_extinction());
        assert!(later.values().iter().zip(v0.values()).all(|(a, b)| a <= b));
    }

    #[test]
    fn profile_positive_and_radially_decreasing() {
        let y = prof(4, 3.0, 0.7);
        let mut prev = f64::INFINITY;
        for k in 0..100 {
            let v = y.radial_value(k as f64 * 0.05);
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    #[test]
    fn discrete_residual_is_second_order() {
        for (n, p) in [(3, 2.0), (4, 2.5), (5, 3.0)] {
            let y = prof(n, p, 1.0);
            let res: Vec<f64> = [41, 81, 161]
                .iter()
                .map(|&pts| pde_residual(&y, &Arc::new(Grid::radial(1.0, pts, n).unwrap()), 0.25))
                .collect();
            for w in res.windows(2) {
                let order = (w[0] / w[1]).log2();
                assert!((order - 2.0).abs() < 0.3, "n={n} p={p} {res:?}");
            }
        }
    }
}
