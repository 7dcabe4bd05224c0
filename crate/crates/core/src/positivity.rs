//! Measure and positivity diagnostics on interior subdomains.

use serde::Serialize;

use crate::error::{PsflowError, Result};
use crate::field::Field;
use crate::grid::{Grid, GridMode};
use crate::operators::lr_norm;

/// Ball spacing of the chain relative to `rho`.
const CHAIN_SPACING: f64 = 1.2;
pub const MEASURE_SLACK: f64 = 1e-10;

/// Interior node set `Omega'` at a fixed cell margin from the boundary,
/// with a chain of balls of radius `rho` covering it.
#[derive(Debug, Clone)]
pub struct SubdomainSpec {
    pub margin_cells: usize,
    pub rho: f64,
    pub indices: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    measure: f64,
    domain_measure: f64,
    /// Lattice description used by the combinatorial covering check.
    origin: Vec<f64>,
    counts: Vec<usize>,
}

impl SubdomainSpec {
    /// `rho = margin * h / 16`, so the margin is exactly 16 cell radii.
    pub fn new(grid: &Grid, margin_cells: usize) -> Result<Self> {
        let rho = margin_cells as f64 * grid.min_spacing() / 16.0;
        Self::with_rho(grid, margin_cells, rho)
    }

    pub fn with_rho(grid: &Grid, margin_cells: usize, rho: f64) -> Result<Self> {
        if margin_cells == 0 || !(rho > 0.0) {
            return Err(PsflowError::Geometry(format!(
                "subdomain needs a positive margin and radius (got {margin_cells} cells, rho = {rho})"
            )));
        }
        if (margin_cells as f64) * grid.min_spacing() < 16.0 * rho * (1.0 - 1e-12) {
            return Err(PsflowError::Geometry(format!(
                "margin of {margin_cells} cells is below 16 rho (rho = {rho})"
            )));
        }
        let indices: Vec<usize> = (0..grid.len())
            .filter(|&i| grid.cells_to_boundary(i) >= margin_cells)
            .collect();
        if indices.is_empty() {
            return Err(PsflowError::Geometry(format!("margin of {margin_cells} cells leaves an empty subdomain")));
        }
        let w = grid.weights();
        let measure = indices.iter().map(|&i| w[i]).sum();
        let axes = match grid.mode() {
            GridMode::Cartesian2d => 2,
            _ => 1,
        };
        let mut lo = vec![f64::INFINITY; axes];
        let mut hi = vec![f64::NEG_INFINITY; axes];
        for &i in &indices {
            for (k, x) in grid.coords(i).iter().enumerate() {
                lo[k] = lo[k].min(*x);
                hi[k] = hi[k].max(*x);
            }
        }
        let step = CHAIN_SPACING * rho;
        let counts: Vec<usize> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| ((b - a) / step).ceil() as usize + 1)
            .collect();
        let mut centers = Vec::new();
        if axes == 1 {
            for k in 0..counts[0] {
                centers.push(vec![lo[0] + k as f64 * step]);
            }
        } else {
            // snake order keeps consecutive centers one lattice step apart
            for row in 0..counts[1] {
                for c in 0..counts[0] {
                    let col = if row % 2 == 0 { c } else { counts[0] - 1 - c };
                    centers.push(vec![lo[0] + col as f64 * step, lo[1] + row as f64 * step]);
                }
            }
        }
        Ok(Self {
            margin_cells,
            rho,
            indices,
            centers,
            measure,
            domain_measure: grid.measure(),
            origin: lo,
            counts,
        })
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// `|Omega \ Omega'|`.
    pub fn complement_measure(&self) -> f64 {
        self.domain_measure - self.measure
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    /// Every subdomain node lies within `rho` of a center; candidates are
    /// the lattice neighbours of the node's rounded lattice position.
    pub fn covering_ok(&self, grid: &Grid) -> bool {
        let step = CHAIN_SPACING * self.rho;
        self.indices.iter().all(|&i| {
            let x = grid.coords(i);
            let base: Vec<i64> = x
                .iter()
                .zip(&self.origin)
                .map(|(xi, o)| ((xi - o) / step).floor() as i64)
                .collect();
            let near = |lat: &[i64]| {
                lat.iter().zip(&self.counts).all(|(l, c)| *l >= 0 && (*l as usize) < *c)
                    && lat
                        .iter()
                        .zip(&x)
                        .zip(&self.origin)
                        .map(|((l, xi), o)| {
                            let d = xi - (o + *l as f64 * step);
                            d * d
                        })
                        .sum::<f64>()
                        <= self.rho * self.rho
            };
            match base.len() {
                1 => (0..=1).any(|a| near(&[base[0] + a])),
                _ => (0..=1).any(|a| (0..=1).any(|b| near(&[base[0] + a, base[1] + b]))),
            }
        })
    }

    /// Consecutive centers satisfy `rho < |x_i - x_{i+1}| < 2 rho`.
    pub fn chain_ok(&self) -> bool {
        self.centers.windows(2).all(|w| {
            let d = w[0]
                .iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d > self.rho && d < 2.0 * self.rho
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SublevelMeasure {
    /// `|Omega' cap {u >= L}|`.
    pub measure_ge: f64,
    pub alpha_hat: f64,
    /// `|Omega' cap {u > L}|`, reported when it differs.
    pub measure_gt: Option<f64>,
}

pub fn sublevel_measure(u: &Field, region: &SubdomainSpec, level: f64) -> Result<SublevelMeasure> {
    if !(level > 0.0) {
        return Err(PsflowError::ParameterDomain(format!("level must be positive (got {level})")));
    }
    if region.indices.is_empty() || region.measure <= 0.0 {
        return Err(PsflowError::Geometry("empty subdomain".into()));
    }
    let w = u.grid().weights();
    let vals = u.values();
    let mut ge = 0.0;
    let mut gt = 0.0;
    for &i in &region.indices {
        if vals[i] >= level {
            ge += w[i];
            if vals[i] > level {
                gt += w[i];
            }
        }
    }
    Ok(SublevelMeasure {
        measure_ge: ge,
        alpha_hat: ge / region.measure,
        measure_gt: if gt != ge { Some(gt) } else { None },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    UnitNorm,
    AmplitudeBound,
    ComplementSmall,
    LevelSmall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypothesisViolation {
    pub hypothesis: Hypothesis,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaReport {
    /// `(1 - L^{q+1}|Omega'| - M^{q+1}|Omega \ Omega'|) / M^{q+1}`.
    pub alpha_bound: f64,
    pub measure_ge: f64,
    pub alpha_hat: f64,
    pub hypotheses_hold: bool,
    pub violations: Vec<HypothesisViolation>,
    /// `measure_ge - alpha_bound`.
    pub slack: f64,
    /// Only meaningful when the hypotheses hold.
    pub inequality_holds: bool,
}

/// Lower bound on the superlevel measure forced by the volume constraint.
pub fn volume_constraint_alpha(u: &Field, region: &SubdomainSpec, m: f64, level: f64, q: f64) -> Result<AlphaReport> {
    let sub = sublevel_measure(u, region, level)?;
    let mut violations = Vec::new();
    let norm = lr_norm(u, q + 1.0)?;
    if (norm - 1.0).abs() > 1e-10 {
        violations.push(HypothesisViolation { hypothesis: Hypothesis::UnitNorm, value: norm, limit: 1.0 });
    }
    if m < u.max() {
        violations.push(HypothesisViolation { hypothesis: Hypothesis::AmplitudeBound, value: m, limit: u.max() });
    }
    let mq = m.powf(q + 1.0);
    let comp = region.complement_measure();
    if comp > 1.0 / (4.0 * mq) {
        violations.push(HypothesisViolation { hypothesis: Hypothesis::ComplementSmall, value: comp, limit: 1.0 / (4.0 * mq) });
    }
    let lq = level.powf(q + 1.0) * region.measure;
    if lq > 0.25 {
        violations.push(HypothesisViolation { hypothesis: Hypothesis::LevelSmall, value: lq, limit: 0.25 });
    }
    let alpha_bound = (1.0 - lq - mq * comp) / mq;
    let slack = sub.measure_ge - alpha_bound;
    Ok(AlphaReport {
        alpha_bound,
        measure_ge: sub.measure_ge,
        alpha_hat: sub.alpha_hat,
        hypotheses_hold: violations.is_empty(),
        violations,
        slack,
        inequality_holds: slack >= -MEASURE_SLACK,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloorTrack {
    pub samples: Vec<(f64, f64)>,
    /// Times with a nonpositive infimum.
    pub failures: Vec<f64>,
}

impl FloorTrack {
    pub fn ensure_positive(&self) -> Result<()> {
        match self.failures.first() {
            None => Ok(()),
            Some(t) => Err(PsflowError::InvariantFailure(format!(
                "interior infimum is not positive at t = {t} ({} times)",
                self.failures.len()
            ))),
        }
    }

    pub fn min_floor(&self) -> f64 {
        self.samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min)
    }
}

pub fn positivity_floor_track(series: &[(f64, &Field)], region: &SubdomainSpec) -> FloorTrack {
    let samples: Vec<(f64, f64)> = series
        .iter()
        .map(|(t, u)| {
            let vals = u.values();
            (*t, region.indices.iter().map(|&i| vals[i]).fold(f64::INFINITY, f64::min))
        })
        .collect();
    let failures = samples.iter().filter(|s| !(s.1 > 0.0)).map(|s| s.0).collect();
    FloorTrack { samples, failures }
}

/// `tau` with `-e^{-tau} = (t - T)/T`, defined for `0 <= t < T`.
pub fn stretched_time(t: f64, t_hat: f64) -> Result<f64> {
    if !(t_hat > 0.0) || !(t >= 0.0) || t >= t_hat {
        return Err(PsflowError::Range(format!("stretched time needs 0 <= t < T (t = {t}, T = {t_hat})")));
    }
    Ok(-(1.0 - t / t_hat).ln())
}

/// Maps a sorted time grid and confirms the image is strictly increasing.
pub fn stretched_grid(ts: &[f64], t_hat: f64) -> Result<Vec<f64>> {
    let taus = ts.iter().map(|&t| stretched_time(t, t_hat)).collect::<Result<Vec<f64>>>()?;
    if let Some(k) = taus.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(PsflowError::InvariantFailure(format!(
            "stretched time not increasing at t = {}",
            ts[k + 1]
        )));
    }
    Ok(taus)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityRecord {
    pub t: f64,
    pub level: f64,
    pub m: f64,
    pub alpha_hat: f64,
    pub alpha_bound: f64,
    pub measure_ge: f64,
    pub slack: f64,
    pub hypotheses_hold: bool,
    pub inf_u: f64,
    pub violations: Vec<String>,
}

/// Per-time records for a list of levels; `m_factor` scales the observed
/// maximum of each field to obtain `M`.
pub fn positivity_records(
    series: &[(f64, &Field)],
    region: &SubdomainSpec,
    levels: &[f64],
    m_factor: f64,
    q: f64,
) -> Result<Vec<PositivityRecord>> {
    let mut out = Vec::new();
    for (t, u) in series {
        let inf_u = region.indices.iter().map(|&i| u.values()[i]).fold(f64::INFINITY, f64::min);
        for &level in levels {
            let m = m_factor * u.max();
            let rep = volume_constraint_alpha(u, region, m, level, q)?;
            let mut violations: Vec<String> = rep
                .violations
                .iter()
                .map(|v| format!("{:?}: {:e} vs {:e}", v.hypothesis, v.value, v.limit))
                .collect();
            if rep.hypotheses_hold && !rep.inequality_holds {
                violations.push(format!("measure bound fails by {:e}", -rep.slack));
            }
            if !(inf_u > 0.0) {
                violations.push(format!("nonpositive interior infimum {inf_u:e}"));
            }
            out.push(PositivityRecord {
                t: *t,
                level,
                m,
                alpha_hat: rep.alpha_hat,
                alpha_bound: rep.alpha_bound,
                measure_ge: rep.measure_ge,
                slack: rep.slack,
                hypotheses_hold: rep.hypotheses_hold,
                inf_u,
                violations,
            });
        }
    }
    Ok(out)
}
