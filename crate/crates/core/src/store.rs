//! Append-only record of a prototype run: sampled fields plus the per-step
//! energy ledger.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{PsflowError, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::params::FlowParams;

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub s: f64,
    /// Row of the ledger taken at the same step.
    pub ledger_index: usize,
    pub field: Field,
    pub gamma: f64,
    pub grad_energy: f64,
}

/// One accepted step (row 0 is the initial state with `ds = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub s: f64,
    pub gamma: f64,
    pub grad_energy: f64,
    pub max_v: f64,
    /// Minimum before the clamp at zero.
    pub min_v: f64,
    pub ds: f64,
    pub newton_iters: usize,
    /// Step residual of the energy balance (trapezoid in s).
    pub energy_residual: f64,
    /// `(q+1)/q * int_0^s |grad v|_p^p`.
    pub dissipation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MaxPrinciple,
    NegativeUndershoot,
    NormIncrease,
    GradientIncrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub s: f64,
    pub kind: ViolationKind,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyInterval {
    pub s1: f64,
    pub s2: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SnapshotStore {
    pub params: FlowParams,
    pub grid: Arc<Grid>,
    pub snapshots: Vec<Snapshot>,
    pub ledger: Vec<LedgerRow>,
    pub extinction_time: Option<f64>,
    pub extinction_eps: f64,
    pub u0_max: f64,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
    /// `sum ds |(v_n^q - v_{n-1}^q)/ds|_2^2`.
    pub time_dissipation: f64,
    /// `time_dissipation / (|u0|_inf^{q-1} |grad u0|_p^p)`.
    pub dissipation_constant: f64,
    pub rejected_steps: usize,
}

impl SnapshotStore {
    pub fn new(params: FlowParams, grid: Arc<Grid>, extinction_eps: f64, u0_max: f64) -> Self {
        Self {
            params,
            grid,
            snapshots: Vec::new(),
            ledger: Vec::new(),
            extinction_time: None,
            extinction_eps,
            u0_max,
            violations: Vec::new(),
            warnings: Vec::new(),
            time_dissipation: 0.0,
            dissipation_constant: 0.0,
            rejected_steps: 0,
        }
    }

    pub fn push_row(&mut self, row: LedgerRow) {
        self.ledger.push(row);
    }

    /// Records `field` as a snapshot of the most recent ledger row.
    pub fn push_snapshot(&mut self, field: Field) -> Result<()> {
        let idx = self
            .ledger
            .len()
            .checked_sub(1)
            .ok_or_else(|| PsflowError::DataIntegrity("snapshot before any ledger row".into()))?;
        if self.snapshots.last().is_some_and(|s| s.ledger_index == idx) {
            return Ok(());
        }
        let row = self.ledger[idx];
        self.snapshots.push(Snapshot {
            s: row.s,
            ledger_index: idx,
            field,
            gamma: row.gamma,
            grad_energy: row.grad_energy,
        });
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.ledger.is_empty()
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.s).collect()
    }

    /// Final s of the ledger.
    pub fn last_s(&self) -> f64 {
        self.ledger.last().map_or(0.0, |r| r.s)
    }

    pub fn accepted_steps(&self) -> usize {
        self.ledger.len().saturating_sub(1)
    }

    /// Energy balance residual between consecutive snapshots, with
    /// trapezoid quadrature over every ledger row in between.
    pub fn energy_balance_report(&self) -> Vec<EnergyInterval> {
        let q = self.params.q;
        let coef = (q + 1.0) / q;
        self.snapshots
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].ledger_index, w[1].ledger_index);
                let integral: f64 = self.ledger[a..=b]
                    .windows(2)
                    .map(|r| 0.5 * (r[1].s - r[0].s) * (r[0].grad_energy + r[1].grad_energy))
                    .sum();
                let residual = self.ledger[b].gamma.powf(q + 1.0) + coef * integral
                    - self.ledger[a].gamma.powf(q + 1.0);
                EnergyInterval { s1: w[0].s, s2: w[1].s, residual }
            })
            .collect()
    }

    pub fn max_energy_residual(&self) -> f64 {
        self.energy_balance_report()
            .iter()
            .fold(0.0, |m, r| m.max(r.residual.abs()))
    }

    /// Snapshot index `k` with `snapshots[k].s <= s < snapshots[k+1].s`.
    pub fn bracket(&self, s: f64) -> Result<usize> {
        let last = self
            .snapshots
            .last()
            .ok_or_else(|| PsflowError::DataIntegrity("store has no snapshots".into()))?;
        if !(s >= 0.0) || s > last.s {
            return Err(PsflowError::Range(format!(
                "s = {s} outside stored range [0, {}] (last valid s = {})",
                last.s, last.s
            )));
        }
        let k = self.snapshots.partition_point(|snap| snap.s <= s);
        Ok(k.saturating_sub(1).min(self.snapshots.len().saturating_sub(2)))
    }
}

#[derive(Debug)]
pub struct IncompleteRun {
    pub reason: String,
    pub store: SnapshotStore,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;

    fn row(s: f64, gamma: f64, e: f64) -> LedgerRow {
        LedgerRow {
            s,
            gamma,
            grad_energy: e,
            max_v: gamma,
            min_v: 0.0,
            ds: 0.0,
            newton_iters: 0,
            energy_residual: 0.0,
            dissipation: 0.0,
        }
    }

    #[test]
    fn single_snapshot_gives_empty_report() {
        let fp = make_params(3, 2.0).unwrap();
        let g = Arc::new(Grid::cartesian_1d(1.0, 5).unwrap());
        let mut st = SnapshotStore::new(fp, g.clone(), 1e-8, 1.0);
        st.push_row(row(0.0, 1.0, 1.0));
        st.push_snapshot(Field::zeros(g)).unwrap();
        assert!(st.energy_balance_report().is_empty());
    }

    #[test]
    fn exact_ledger_has_zero_residual() {
        // gamma^{q+1} = 1 - s and E = q/(q+1) satisfy the balance exactly
        let fp = make_params(3, 2.0).unwrap();
        let q = fp.q;
        let g = Arc::new(Grid::cartesian_1d(1.0, 5).unwrap());
        let mut st = SnapshotStore::new(fp, g.clone(), 1e-8, 1.0);
        for k in 0..=10 {
            let s = 0.05 * k as f64;
            st.push_row(row(s, (1.0 - s).powf(1.0 / (q + 1.0)), q / (q + 1.0)));
            if k % 5 == 0 {
                st.push_snapshot(Field::zeros(g.clone())).unwrap();
            }
        }
        let rep = st.energy_balance_report();
        assert_eq!(rep.len(), 2);
        assert!(rep.iter().all(|r| r.residual.abs() < 1e-14));
        assert_eq!(st.bracket(0.3).unwrap(), 1);
        assert_eq!(st.bracket(0.5).unwrap(), 1);
        assert!(st.bracket(0.6).is_err());
    }
}
