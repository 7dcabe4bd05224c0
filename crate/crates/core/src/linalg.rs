//! Jacobi-preconditioned conjugate gradients, matrix-free.

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64], active: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(active)
        .filter(|(_, &on)| on)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Solves `A x = b` on the entries flagged in `active`; inactive entries of
/// `x` stay zero. `apply` must be symmetric positive (semi)definite on the
/// active subspace. `diag` is the Jacobi preconditioner.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    active: &[bool],
    rtol: f64,
    max_iter: usize,
) -> (Vec<f64>, CgOutcome) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = b
        .iter()
        .zip(active)
        .map(|(v, &on)| if on { *v } else { 0.0 })
        .collect();
    let b_norm = dot(&r, &r, active).sqrt();
    if b_norm == 0.0 {
        return (
            x,
            CgOutcome { iterations: 0, relative_residual: 0.0, converged: true },
        );
    }
    let inv_diag: Vec<f64> = diag
        .iter()
        .zip(active)
        .map(|(d, &on)| if on && *d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z, active);
    let mut rel = 1.0;
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap, active);
        if !(pap > 0.0) {
            return (x, CgOutcome { iterations: it, relative_residual: rel, converged: false });
        }
        let alpha = rz / pap;
        for i in 0..n {
            if active[i] {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
        }
        rel = dot(&r, &r, active).sqrt() / b_norm;
        if rel <= rtol {
            return (x, CgOutcome { iterations: it + 1, relative_residual: rel, converged: true });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z, active);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = if active[i] { z[i] + beta * p[i] } else { 0.0 };
        }
    }
    (x, CgOutcome { iterations: max_iter, relative_residual: rel, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        // -x'' style matrix on 50 unknowns plus two inactive ends
        let n = 52;
        let active: Vec<bool> = (0..n).map(|i| i != 0 && i != n - 1).collect();
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                out[i] = if active[i] {
                    let l = if i > 0 && active[i - 1] { x[i - 1] } else { 0.0 };
                    let r = if i + 1 < n && active[i + 1] { x[i + 1] } else { 0.0 };
                    2.5 * x[i] - l - r
                } else {
                    0.0
                }
            };
        };
        let diag = vec![2.5; n];
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, out) = pcg(apply, &diag, &b, &active, 1e-13, 500);
        assert!(out.converged);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        for i in 1..n - 1 {
            assert!((ax[i] - b[i]).abs() < 1e-11);
        }
        assert_eq!(x[0], 0.0);
    }
}
