//! Discrete p-Laplacian in conservative face-flux form.
//!
//! The operator is built from a list of gradient samples. Each sample holds
//! a quadrature weight and one difference quotient per axis; the discrete
//! energy is `E(f) = sum_s w_s |g_s(f)|^p` and `-Delta_p f` is its weighted
//! gradient `(1 / (p w_i)) dE/df_i`. Because of that construction
//! `<-Delta_p f, g>_h = sum_s w_s |g_s(f)|^{p-2} g_s(f) . g_s(g)` holds to
//! rounding for every `g` vanishing on the boundary.
//!
//! - 1D: one sample per face, weight h.
//! - radial: one sample per face r_{i+1/2}, weight omega r_{i+1/2}^{n-1} h;
//!   the symmetry face at r = 0 carries no flux.
//! - 2D: four corner samples per cell, each pairing the x-difference of the
//!   adjacent horizontal edge with the y-difference of the adjacent vertical
//!   edge, weight hx hy / 4. At p = 2 this is the 5-point Laplacian.

use std::sync::Arc;

use crate::error::{PsflowError, Result};
use crate::field::Field;
use crate::grid::{unit_sphere_area, Grid, GridMode};

#[derive(Debug, Clone, Copy)]
struct Diff {
    from: usize,
    to: usize,
    inv_h: f64,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    weight: f64,
    len: usize,
    comps: [Diff; 2],
}

impl Sample {
    #[inline]
    fn gradient(&self, f: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..self.len {
            let d = self.comps[k];
            g[k] = (f[d.to] - f[d.from]) * d.inv_h;
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct PLaplacianOp {
    p: f64,
    grid: Arc<Grid>,
    samples: Vec<Sample>,
}

impl PLaplacianOp {
    pub fn new(p: f64, grid: Arc<Grid>) -> Self {
        let samples = build_samples(&grid);
        Self { p, grid, samples }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn check(&self, f: &Field) -> Result<()> {
        if f.len() != self.grid.len() || **f.grid() != *self.grid {
            return Err(PsflowError::Geometry(
                "field grid does not match operator grid".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    fn flux_factor(&self, m2: f64) -> f64 {
        if self.p == 2.0 {
            1.0
        } else if m2 == 0.0 {
            0.0
        } else {
            m2.powf(0.5 * (self.p - 2.0))
        }
    }

    /// Weighted flux action `K(f)_i = sum_s w_s |g|^{p-2} g . dg/df_i`
    /// (the gradient of `E / p`), evaluated at every node.
    pub fn stiffness(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.stiffness_into(f, &mut out);
        out
    }

    pub fn stiffness_into(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for s in &self.samples {
            let g = s.gradient(f);
            let m2 = g[0] * g[0] + g[1] * g[1];
            let c = s.weight * self.flux_factor(m2);
            for k in 0..s.len {
                let d = s.comps[k];
                let flux = c * g[k] * d.inv_h;
                out[d.to] += flux;
                out[d.from] -= flux;
            }
        }
    }

    /// `-Delta_p f` at interior nodes, zero on the boundary.
    pub fn neg_p_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut k = self.stiffness(f);
        let w = self.grid.weights();
        for (i, v) in k.iter_mut().enumerate() {
            *v = if self.grid.is_boundary(i) { 0.0 } else { *v / w[i] };
        }
        k
    }

    /// Face-flux divergence `Delta_p f`; boundary entries are zero.
    pub fn apply_p_laplacian(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        let vals = self.neg_p_laplacian(f.values()).into_iter().map(|v| -v).collect();
        Field::from_values(self.grid.clone(), vals)
    }

    /// `int |grad f|^p` with the same gradient samples as the operator.
    pub fn grad_p_energy(&self, f: &Field) -> Result<f64> {
        self.check(f)?;
        Ok(self.energy(f.values()))
    }

    pub fn energy(&self, f: &[f64]) -> f64 {
        let half_p = 0.5 * self.p;
        self.samples
            .iter()
            .map(|s| {
                let g = s.gradient(f);
                let m2 = g[0] * g[0] + g[1] * g[1];
                s.weight * if self.p == 2.0 { m2 } else { m2.powf(half_p) }
            })
            .sum()
    }

    /// `int |grad f|^{p-2} grad f . grad g`.
    pub fn flux_pairing(&self, f: &[f64], g: &[f64]) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let a = s.gradient(f);
                let b = s.gradient(g);
                let m2 = a[0] * a[0] + a[1] * a[1];
                s.weight * self.flux_factor(m2) * (a[0] * b[0] + a[1] * b[1])
            })
            .sum()
    }

    /// Action of the Hessian of `E / p` at `f` on `dir`. Symmetric positive
    /// semidefinite for p >= 2.
    pub fn jacobian_action(&self, f: &[f64], dir: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let pm2 = self.p - 2.0;
        for s in &self.samples {
            let g = s.gradient(f);
            let dg = s.gradient(dir);
            let m2 = g[0] * g[0] + g[1] * g[1];
            let fac = self.flux_factor(m2);
            let mut res = [fac * dg[0], fac * dg[1]];
            if pm2 != 0.0 && m2 > 0.0 {
                let c = pm2 * m2.powf(0.5 * (self.p - 4.0)) * (g[0] * dg[0] + g[1] * dg[1]);
                res[0] += c * g[0];
                res[1] += c * g[1];
            }
            for k in 0..s.len {
                let d = s.comps[k];
                let v = s.weight * res[k] * d.inv_h;
                out[d.to] += v;
                out[d.from] -= v;
            }
        }
    }

    /// Diagonal of the Hessian used by `jacobian_action`.
    pub fn jacobian_diagonal(&self, f: &[f64]) -> Vec<f64> {
        let mut diag = vec![0.0; f.len()];
        let pm2 = self.p - 2.0;
        for s in &self.samples {
            let g = s.gradient(f);
            let m2 = g[0] * g[0] + g[1] * g[1];
            let fac = self.flux_factor(m2);
            let aniso = if pm2 != 0.0 && m2 > 0.0 {
                pm2 * m2.powf(0.5 * (self.p - 4.0))
            } else {
                0.0
            };
            let mut nodes = [usize::MAX; 4];
            let mut count = 0;
            for d in &s.comps[..s.len] {
                for node in [d.from, d.to] {
                    if !nodes[..count].contains(&node) {
                        nodes[count] = node;
                        count += 1;
                    }
                }
            }
            for &node in &nodes[..count] {
                // dg / df_node
                let mut dg = [0.0; 2];
                for (k, d) in s.comps[..s.len].iter().enumerate() {
                    if d.to == node {
                        dg[k] += d.inv_h;
                    }
                    if d.from == node {
                        dg[k] -= d.inv_h;
                    }
                }
                let gd = g[0] * dg[0] + g[1] * dg[1];
                diag[node] += s.weight * (fac * (dg[0] * dg[0] + dg[1] * dg[1]) + aniso * gd * gd);
            }
        }
        diag
    }
}

fn build_samples(grid: &Grid) -> Vec<Sample> {
    let blank = Diff { from: 0, to: 0, inv_h: 0.0 };
    match grid.mode() {
        GridMode::Cartesian1d => {
            let n = grid.points()[0];
            let h = grid.spacing()[0];
            (0..n - 1)
                .map(|i| Sample {
                    weight: h,
                    len: 1,
                    comps: [Diff { from: i, to: i + 1, inv_h: 1.0 / h }, blank],
                })
                .collect()
        }
        GridMode::Radial => {
            let n = grid.points()[0];
            let h = grid.spacing()[0];
            let dim = grid.radial_dim() as f64;
            let omega = unit_sphere_area(grid.radial_dim());
            (0..n - 1)
                .map(|i| {
                    let r_face = (i as f64 + 0.5) * h;
                    Sample {
                        weight: omega * r_face.powf(dim - 1.0) * h,
                        len: 1,
                        comps: [Diff { from: i, to: i + 1, inv_h: 1.0 / h }, blank],
                    }
                })
                .collect()
        }
        GridMode::Cartesian2d => {
            let (nx, ny) = (grid.points()[0], grid.points()[1]);
            let (hx, hy) = (grid.spacing()[0], grid.spacing()[1]);
            let w = 0.25 * hx * hy;
            let mut out = Vec::with_capacity(4 * (nx - 1) * (ny - 1));
            for i in 0..nx - 1 {
                for j in 0..ny - 1 {
                    for a in 0..2 {
                        for b in 0..2 {
                            let dx = Diff {
                                from: grid.flat_index(i, j + b),
                                to: grid.flat_index(i + 1, j + b),
                                inv_h: 1.0 / hx,
                            };
                            let dy = Diff {
                                from: grid.flat_index(i + a, j),
                                to: grid.flat_index(i + a, j + 1),
                                inv_h: 1.0 / hy,
                            };
                            out.push(Sample { weight: w, len: 2, comps: [dx, dy] });
                        }
                    }
                }
            }
            out
        }
    }
}

/// Discrete pairing `<a, b>_h = sum_i w_i a_i b_i`.
pub fn pairing(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.weights()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * x * y)
        .sum()
}

/// Discrete L^r norm, r >= 1.
pub fn lr_norm(f: &Field, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(PsflowError::ParameterDomain(format!("L^r norm needs r >= 1 (got {r})")));
    }
    let w = f.grid().weights();
    let s: f64 = w
        .iter()
        .zip(f.values())
        .map(|(w, v)| w * v.abs().powf(r))
        .sum();
    Ok(s.powf(1.0 / r))
}

/// `int |f|^r` without the outer root.
pub fn lr_integral(f: &Field, r: f64) -> f64 {
    f.grid()
        .weights()
        .iter()
        .zip(f.values())
        .map(|(w, v)| w * v.abs().powf(r))
        .sum()
}

/// Candidate constant in the strong monotonicity bound for p >= 2.
pub fn monotonicity_constant(p: f64) -> f64 {
    2f64.powf(2.0 - p)
}

/// Returns `((|xi|^{p-2} xi - |eta|^{p-2} eta) . (xi - eta), 2^{2-p} |xi - eta|^p)`.
pub fn flux_monotonicity_probe(xi: &[f64], eta: &[f64], p: f64) -> Result<(f64, f64)> {
    if !(p >= 2.0) {
        return Err(PsflowError::ParameterDomain(format!(
            "monotonicity bound is only stated for p >= 2 (got {p})"
        )));
    }
    if xi.len() != eta.len() {
        return Err(PsflowError::Geometry("probe vectors differ in length".into()));
    }
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let a = norm2(xi).powf(0.5 * (p - 2.0));
    let b = norm2(eta).powf(0.5 * (p - 2.0));
    let mut lhs = 0.0;
    let mut d2 = 0.0;
    for (x, y) in xi.iter().zip(eta) {
        let d = x - y;
        lhs += (a * x - b * y) * d;
        d2 += d * d;
    }
    let bound = monotonicity_constant(p) * d2.powf(0.5 * p);
    Ok((lhs, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn g1(n: usize) -> Arc<Grid> {
        Arc::new(Grid::cartesian_1d(1.0, n).unwrap())
    }

    fn random_zero_boundary(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Field {
        let vals = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut f = Field::from_values(grid.clone(), vals).unwrap();
        f.zero_boundary();
        f
    }

    #[test]
    fn quadratic_gives_constant_laplacian() {
        let g = g1(51);
        let op = PLaplacianOp::new(2.0, g.clone());
        let f = Field::from_fn(g, |x| x[0] * (1.0 - x[0]));
        let lap = op.apply_p_laplacian(&f).unwrap();
        for i in 1..50 {
            assert!((lap.values()[i] + 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_and_constant_fields_give_zero() {
        for grid in [
            g1(11),
            Arc::new(Grid::cartesian_2d([1.0, 1.0], [7, 9]).unwrap()),
            Arc::new(Grid::radial(1.0, 15, 3).unwrap()),
        ] {
            for p in [2.0, 2.7] {
                let op = PLaplacianOp::new(p, grid.clone());
                let z = op.apply_p_laplacian(&Field::zeros(grid.clone())).unwrap();
                assert!(z.values().iter().all(|&v| v == 0.0));
                let c = op.apply_p_laplacian(&Field::from_fn(grid.clone(), |_| 3.3)).unwrap();
                assert!(c.max_abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn linear_field_energy_is_one() {
        let g = g1(37);
        for p in [2.0, 2.5, 3.0, 4.5] {
            let op = PLaplacianOp::new(p, g.clone());
            let f = Field::from_fn(g.clone(), |x| x[0]);
            assert!((op.grad_p_energy(&f).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn summation_by_parts_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for grid in [
            g1(40),
            Arc::new(Grid::cartesian_2d([1.0, 0.5], [12, 9]).unwrap()),
            Arc::new(Grid::radial(2.0, 30, 4).unwrap()),
        ] {
            for p in [2.0, 2.5, 3.0] {
                let op = PLaplacianOp::new(p, grid.clone());
                for _ in 0..20 {
                    let f = random_zero_boundary(&grid, &mut rng);
                    let h = random_zero_boundary(&grid, &mut rng);
                    let a = op.neg_p_laplacian(f.values());
                    let lhs = pairing(&grid, &a, h.values());
                    let rhs = op.flux_pairing(f.values(), h.values());
                    assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
                    let self_pair = pairing(&grid, &a, f.values());
                    let energy = op.energy(f.values());
                    assert!((self_pair - energy).abs() <= 1e-12 * (1.0 + energy));
                }
            }
        }
    }

    #[test]
    fn discrete_operator_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for grid in [
            g1(25),
            Arc::new(Grid::cartesian_2d([1.0, 1.0], [9, 9]).unwrap()),
            Arc::new(Grid::radial(1.0, 25, 3).unwrap()),
        ] {
            for p in [2.0, 2.5, 3.0] {
                let op = PLaplacianOp::new(p, grid.clone());
                for _ in 0..50 {
                    let a = random_zero_boundary(&grid, &mut rng);
                    let b = random_zero_boundary(&grid, &mut rng);
                    let na = op.neg_p_laplacian(a.values());
                    let nb = op.neg_p_laplacian(b.values());
                    let diff: Vec<f64> = na.iter().zip(&nb).map(|(x, y)| x - y).collect();
                    let ab: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
                    assert!(pairing(&grid, &diff, &ab) >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for grid in [
            g1(15),
            Arc::new(Grid::cartesian_2d([1.0, 1.0], [6, 7]).unwrap()),
            Arc::new(Grid::radial(1.0, 12, 3).unwrap()),
        ] {
            for p in [2.0, 2.5, 3.5] {
                let op = PLaplacianOp::new(p, grid.clone());
                let f = random_zero_boundary(&grid, &mut rng);
                let d = random_zero_boundary(&grid, &mut rng);
                let mut jd = vec![0.0; grid.len()];
                op.jacobian_action(f.values(), d.values(), &mut jd);
                let eps = 1e-6;
                let plus: Vec<f64> = f.values().iter().zip(d.values()).map(|(a, b)| a + eps * b).collect();
                let minus: Vec<f64> = f.values().iter().zip(d.values()).map(|(a, b)| a - eps * b).collect();
                let kp = op.stiffness(&plus);
                let km = op.stiffness(&minus);
                for i in 0..grid.len() {
                    let fd = (kp[i] - km[i]) / (2.0 * eps);
                    assert!((fd - jd[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "{fd} vs {}", jd[i]);
                }
                // diagonal against unit-vector actions
                let diag = op.jacobian_diagonal(f.values());
                for i in 0..grid.len() {
                    let mut e = vec![0.0; grid.len()];
                    e[i] = 1.0;
                    op.jacobian_action(f.values(), &e, &mut jd);
                    assert!((diag[i] - jd[i]).abs() <= 1e-10 * (1.0 + diag[i].abs()));
                }
            }
        }
    }

    #[test]
    fn sine_l2_norm_matches_closed_form() {
        let g = g1(2001);
        let f = Field::from_fn(g, |x| (PI * x[0]).sin());
        let n = lr_norm(&f, 2.0).unwrap();
        assert!((n - 0.5f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn constant_norm_is_c_times_measure_power() {
        let g = Arc::new(Grid::cartesian_2d([2.0, 3.0], [11, 13]).unwrap());
        let f = Field::from_fn(g, |_| 0.7);
        for r in [1.0, 2.0, 6.0] {
            let expect = 0.7 * 6f64.powf(1.0 / r);
            assert!((lr_norm(&f, r).unwrap() - expect).abs() < 1e-12);
        }
        assert!(lr_norm(&f, 0.5).is_err());
    }

    #[test]
    fn radial_laplacian_exact_on_quadratics_at_origin() {
        let g = Arc::new(Grid::radial(1.0, 21, 3).unwrap());
        let op = PLaplacianOp::new(2.0, g.clone());
        let f = Field::from_fn(g, |x| 1.0 - x[0] * x[0]);
        let lap = op.apply_p_laplacian(&f).unwrap();
        // Laplacian of 1 - r^2 in R^3 is -6
        assert!((lap.values()[0] + 6.0).abs() < 1e-10);
        for i in 1..20 {
            assert!((lap.values()[i] + 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn probe_identity_and_p2_equality() {
        let (l, b) = flux_monotonicity_probe(&[1.0, -2.0, 0.5], &[1.0, -2.0, 0.5], 3.0).unwrap();
        assert_eq!((l, b), (0.0, 0.0));
        let (l, b) = flux_monotonicity_probe(&[1.5, -2.0, 0.25], &[-3.0, 4.0, 1.0], 2.0).unwrap();
        assert_eq!(l, b);
        assert!(flux_monotonicity_probe(&[1.0], &[0.0], 1.5).is_err());
    }
}
