//! Command orchestration: each `cmd_*` reads the config, runs a stage,
//! writes its artifacts and a manifest under `<out>/<stage>/`.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::direct::{run_direct, DirectRun};
use crate::error::{PsflowError, Result};
use crate::field::{default_center, Field};
use crate::io::{self, fmt_f64, Manifest};
use crate::positivity::{positivity_floor_track, positivity_records, stretched_grid, SubdomainSpec};
use crate::prototype::{run_to_extinction, PrototypeRun};
use crate::scaling::{
    boundedness_check, integrate_time_map, lambda_identity, rate_identity, rescale_series, BoundednessReport,
    LambdaCheck, RateCheck, RescaledState, TimeMap,
};
use crate::store::SnapshotStore;
use crate::talenti::{comparison_check, extinction_bound, ComparisonReport, TalentiProfile};

pub const PROTOTYPE_DIR: &str = "prototype";
pub const RESCALE_DIR: &str = "rescale";
pub const DIRECT_DIR: &str = "direct";
pub const TALENTI_DIR: &str = "talenti";
pub const POSITIVITY_DIR: &str = "positivity";
pub const VERIFY_DIR: &str = "verify";

/// Inline limits shared with the verification report.
pub const CONSTRAINT_LIMIT: f64 = 1e-12;
pub const RATE_LIMIT: f64 = 1e-5;
pub const LAMBDA_LIMIT: f64 = 2e-2;

pub fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    seed: u64,
    mut artifacts: Vec<String>,
    summary: serde_json::Value,
) -> Result<()> {
    artifacts.push(io::MANIFEST_FILE.to_string());
    let m = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: cfg.hash(),
        config: cfg.clone(),
        seed,
        artifacts,
        summary,
    };
    io::write_json(&dir.join(io::MANIFEST_FILE), &m)
}

pub fn solve_prototype(cfg: &RunConfig) -> Result<SnapshotStore> {
    let fp = cfg.flow_params()?;
    let mut run = PrototypeRun::new(fp, cfg.initial_field()?, cfg.step_control());
    run.newton = cfg.newton();
    run_to_extinction(&run)
}

fn store_summary(store: &SnapshotStore) -> serde_json::Value {
    json!({
        "extinction_time": store.extinction_time,
        "extinction_eps": store.extinction_eps,
        "accepted_steps": store.accepted_steps(),
        "rejected_steps": store.rejected_steps,
        "snapshots": store.snapshots.len(),
        "max_energy_residual": store.max_energy_residual(),
        "dissipation_constant": store.dissipation_constant,
        "violations": store.violations.len(),
        "warnings": store.warnings,
    })
}

pub fn cmd_solve_prototype(cfg: &RunConfig, out: &Path, seed: u64) -> Result<SnapshotStore> {
    let dir = out.join(PROTOTYPE_DIR);
    fs::create_dir_all(&dir)?;
    match solve_prototype(cfg) {
        Ok(store) => {
            let files = io::save_store(&dir, &store)?;
            write_manifest(&dir, "solve-prototype", cfg, seed, files, store_summary(&store))?;
            if let Some(v) = store.violations.first() {
                return Err(PsflowError::InvariantFailure(format!(
                    "{} ledger violation(s), first {:?} at s = {} ({:e} vs {:e})",
                    store.violations.len(),
                    v.kind,
                    v.s,
                    v.value,
                    v.bound
                )));
            }
            Ok(store)
        }
        Err(PsflowError::Incomplete(inc)) => {
            let files = io::save_store(&dir, &inc.store)?;
            let mut summary = store_summary(&inc.store);
            summary["incomplete"] = json!(inc.reason);
            write_manifest(&dir, "solve-prototype", cfg, seed, files, summary)?;
            Err(PsflowError::Incomplete(inc))
        }
        Err(e) => Err(e),
    }
}

pub struct RescaleOutput {
    pub map: TimeMap,
    /// Rescaled state at every map sample.
    pub states: Vec<RescaledState>,
    pub rates: Vec<RateCheck>,
    pub lambdas: Vec<LambdaCheck>,
    pub boundedness: BoundednessReport,
}

impl RescaleOutput {
    pub fn max_constraint_residual(&self) -> f64 {
        self.states.iter().fold(0.0, |m, s| m.max(s.constraint_residual))
    }

    pub fn max_rate_error(&self) -> f64 {
        self.rates.iter().fold(0.0, |m, r| m.max(r.rel_error))
    }

    pub fn max_lambda_error(&self) -> f64 {
        self.lambdas.iter().fold(0.0, |m, r| m.max(r.rel_error))
    }

    /// Messages for every inline check that fails.
    pub fn failures(&self) -> Vec<String> {
        let mut f = Vec::new();
        let c = self.max_constraint_residual();
        if !(c <= CONSTRAINT_LIMIT) {
            f.push(format!("constraint residual {c:e} exceeds {CONSTRAINT_LIMIT:e}"));
        }
        let r = self.max_rate_error();
        if !(r <= RATE_LIMIT) {
            f.push(format!("rate identity error {r:e} exceeds {RATE_LIMIT:e}"));
        }
        let l = self.max_lambda_error();
        if !(l <= LAMBDA_LIMIT) {
            f.push(format!("lambda identity error {l:e} exceeds {LAMBDA_LIMIT:e}"));
        }
        if let Some(v) = self.boundedness.violations.first() {
            f.push(format!("max u = {:e} above bound {:e} at t = {}", v.max_u, v.bound, v.t));
        }
        f
    }
}

pub fn rescale(cfg: &RunConfig, store: &SnapshotStore) -> Result<RescaleOutput> {
    let map = integrate_time_map(store, &cfg.map_settings())?;
    let states = rescale_series(store, &map, 1)?;
    let rates = rate_identity(&map);
    let lambdas = lambda_identity(&map, &states, store.params.q);
    let u0_max = states[0].u.max();
    let series: Vec<(f64, &Field, f64)> = states.iter().map(|s| (s.t, &s.u, s.lambda_t)).collect();
    let boundedness = boundedness_check(&series, u0_max, store.params.q)?;
    Ok(RescaleOutput { map, states, rates, lambdas, boundedness })
}

pub fn load_prototype(out: &Path) -> Result<SnapshotStore> {
    io::load_store(&out.join(PROTOTYPE_DIR))
}

pub fn cmd_rescale(cfg: &RunConfig, out: &Path, seed: u64) -> Result<RescaleOutput> {
    let store = load_prototype(out)?;
    let res = rescale(cfg, &store)?;
    let dir = out.join(RESCALE_DIR);
    fs::create_dir_all(dir.join("fields"))?;
    let mut files = vec!["time_map.csv".to_string(), "checks.json".to_string()];
    io::write_csv(
        &dir.join("time_map.csv"),
        &["t", "s", "Lambda", "gamma", "lambda_t", "max_u", "constraint_residual", "tau", "s_collapsed"],
        res.map.samples.iter().zip(&res.states).map(|(m, st)| {
            vec![
                fmt_f64(m.t),
                fmt_f64(m.s),
                fmt_f64(m.lambda_at),
                fmt_f64(m.gamma),
                fmt_f64(st.lambda_t),
                fmt_f64(st.u.max()),
                fmt_f64(st.constraint_residual),
                fmt_f64(m.tau),
                fmt_f64(m.s_collapsed),
            ]
        }),
    )?;
    for (k, st) in res.states.iter().enumerate().step_by(cfg.diagnostics.stride) {
        let file = format!("fields/u_{k:06}.bin");
        io::write_snapshot(&dir.join(&file), &st.u)?;
        files.push(file);
    }
    let failures = res.failures();
    let checks = json!({
        "s_star": res.map.s_star,
        "t_max": res.map.t_max(),
        "route_discrepancy": res.map.discrepancy,
        "max_constraint_residual": res.max_constraint_residual(),
        "max_renormalization": res.states.iter().fold(0.0f64, |m, s| m.max(s.renormalization)),
        "max_rate_error": res.max_rate_error(),
        "max_lambda_error": res.max_lambda_error(),
        "boundedness": res.boundedness,
        "failures": failures,
    });
    io::write_json(&dir.join("checks.json"), &checks)?;
    write_manifest(&dir, "rescale", cfg, seed, files, checks)?;
    if !failures.is_empty() {
        return Err(PsflowError::InvariantFailure(failures.join("; ")));
    }
    Ok(res)
}

pub fn solve_direct(cfg: &RunConfig) -> Result<DirectRun> {
    run_direct(cfg.flow_params()?, &cfg.initial_field()?, &cfg.direct_settings())
}

pub fn cmd_solve_direct(cfg: &RunConfig, out: &Path, seed: u64) -> Result<DirectRun> {
    let run = solve_direct(cfg)?;
    let dir = out.join(DIRECT_DIR);
    fs::create_dir_all(&dir)?;
    let files = io::save_direct(&dir, &run)?;
    let worst = run.series.iter().fold(0.0f64, |m, s| m.max(s.constraint_residual));
    let min_interior = run.series.iter().map(|s| s.min_u_interior).fold(f64::INFINITY, f64::min);
    let summary = json!({
        "states": run.series.len(),
        "final_lambda": run.series.last().map(|s| s.lambda),
        "max_constraint_residual": worst,
        "min_u_interior": min_interior,
        "lambda_increases": run.lambda_increases.len(),
        "warnings": run.warnings,
    });
    write_manifest(&dir, "solve-direct", cfg, seed, files, summary)?;
    if !(worst <= CONSTRAINT_LIMIT) {
        return Err(PsflowError::InvariantFailure(format!(
            "direct constraint residual {worst:e} exceeds {CONSTRAINT_LIMIT:e}"
        )));
    }
    Ok(run)
}

/// Comparison profile for the given initial data.
pub fn comparison_profile(cfg: &RunConfig, u0: &Field) -> Result<TalentiProfile> {
    let d = &cfg.diagnostics;
    TalentiProfile::for_initial_data(d.talenti_scale, default_center(u0.grid()), cfg.flow_params()?, d.talenti_mu, u0)
}

/// Pointwise tolerance of the discrete comparison check.
pub fn comparison_tol(store: &SnapshotStore) -> f64 {
    store.grid.min_spacing() * store.u0_max
}

#[derive(Debug, Clone, Serialize)]
pub struct TalentiSummary {
    pub extinction_time: Option<f64>,
    pub extinction_bound: f64,
    pub bound_ratio: Option<f64>,
    pub comparison: ComparisonReport,
}

pub fn talenti_summary(cfg: &RunConfig, store: &SnapshotStore) -> Result<TalentiSummary> {
    let u0 = &store.snapshots[0].field;
    let prof = comparison_profile(cfg, u0)?;
    let bound = extinction_bound(u0, &prof)?;
    Ok(TalentiSummary {
        extinction_time: store.extinction_time,
        extinction_bound: bound,
        bound_ratio: store.extinction_time.map(|s| s / bound),
        comparison: comparison_check(store, &prof, comparison_tol(store)),
    })
}

pub fn cmd_talenti(cfg: &RunConfig, out: &Path, seed: u64) -> Result<Option<TalentiSummary>> {
    let dir = out.join(TALENTI_DIR);
    fs::create_dir_all(&dir)?;
    let u0 = cfg.initial_field()?;
    let prof = comparison_profile(cfg, &u0)?;
    let grid = u0.grid().clone();
    let s_end = prof.z_extinction();
    let ss: Vec<f64> = (0..5).map(|k| 0.25 * k as f64 * s_end).collect();
    let mut header = vec!["r".to_string(), "Y".to_string()];
    header.extend(ss.iter().map(|s| format!("V_at_{}", fmt_f64(*s))));
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows: Vec<(f64, Vec<String>)> = (0..grid.len())
        .map(|i| {
            let x = grid.coords(i);
            let r = prof.distance(&x);
            let mut row = vec![fmt_f64(r), fmt_f64(prof.value(&x))];
            row.extend(ss.iter().map(|s| fmt_f64(prof.comparison_supersolution(&x, *s))));
            (r, row)
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    io::write_csv(&dir.join("talenti.csv"), &header_refs, rows.into_iter().map(|r| r.1))?;
    let mut files = vec!["talenti.csv".to_string()];

    let summary = match load_prototype(out) {
        Ok(store) => Some(talenti_summary(cfg, &store)?),
        Err(_) => None,
    };
    let mut json_summary = json!({
        "lambda": prof.lam,
        "mu": prof.mu,
        "z0": prof.z0,
        "z_extinction": s_end,
    });
    if let Some(s) = &summary {
        io::write_json(&dir.join("comparison.json"), s)?;
        files.push("comparison.json".into());
        json_summary["comparison"] = serde_json::to_value(s)?;
    }
    write_manifest(&dir, "talenti", cfg, seed, files, json_summary)?;
    if let Some(s) = &summary {
        if let Some((at, excess)) = s.comparison.violations.first() {
            return Err(PsflowError::InvariantFailure(format!(
                "v exceeds the comparison profile by {excess:e} at s = {at} (tol {:e})",
                s.comparison.tol
            )));
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionSummary {
    pub margin_cells: usize,
    pub rho: f64,
    pub measure: f64,
    pub complement_measure: f64,
    pub balls: usize,
    pub covering_ok: bool,
    pub chain_ok: bool,
    pub min_floor: f64,
    pub records_with_hypotheses: usize,
    pub inequality_failures: usize,
    pub min_slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivitySummary {
    /// Horizon used for the stretched time.
    pub t_hat: f64,
    pub regions: Vec<RegionSummary>,
}

/// Positivity diagnostics over every `stride`-th rescaled state; also
/// returns the rows of `positivity.csv`.
pub fn positivity(cfg: &RunConfig, res: &RescaleOutput) -> Result<(PositivitySummary, Vec<Vec<String>>)> {
    let d = &cfg.diagnostics;
    let q = cfg.flow_params()?.q;
    let picked: Vec<&RescaledState> = res.states.iter().step_by(d.stride).collect();
    let series: Vec<(f64, &Field)> = picked.iter().map(|s| (s.t, &s.u)).collect();
    let ts: Vec<f64> = series.iter().map(|s| s.0).collect();
    let t_hat = 2.0 * res.map.t_max();
    let taus = stretched_grid(&ts, t_hat)?;
    let grid = res.states[0].u.grid().clone();
    let mut regions = Vec::new();
    let mut rows = Vec::new();
    for &margin in &d.margins {
        let region = SubdomainSpec::new(&grid, margin)?;
        let floor = positivity_floor_track(&series, &region);
        let recs = positivity_records(&series, &region, &d.levels, d.m_factor, q)?;
        let with_h: Vec<_> = recs.iter().filter(|r| r.hypotheses_hold).collect();
        regions.push(RegionSummary {
            margin_cells: margin,
            rho: region.rho,
            measure: region.measure(),
            complement_measure: region.complement_measure(),
            balls: region.centers.len(),
            covering_ok: region.covering_ok(&grid),
            chain_ok: region.chain_ok(),
            min_floor: floor.min_floor(),
            records_with_hypotheses: with_h.len(),
            inequality_failures: with_h.iter().filter(|r| r.slack < -crate::positivity::MEASURE_SLACK).count(),
            min_slack: with_h.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min),
        });
        let per_t = d.levels.len();
        for (k, r) in recs.iter().enumerate() {
            rows.push(vec![
                fmt_f64(r.t),
                fmt_f64(taus[k / per_t]),
                margin.to_string(),
                fmt_f64(r.level),
                fmt_f64(r.m),
                fmt_f64(r.alpha_hat),
                fmt_f64(r.measure_ge),
                fmt_f64(r.alpha_bound),
                fmt_f64(r.slack),
                r.hypotheses_hold.to_string(),
                fmt_f64(r.inf_u),
                r.violations.join("|"),
            ]);
        }
    }
    Ok((PositivitySummary { t_hat, regions }, rows))
}

pub const POSITIVITY_COLUMNS: [&str; 12] = [
    "t",
    "tau",
    "margin_cells",
    "level",
    "M",
    "alpha_hat",
    "measure_ge",
    "alpha_bound",
    "slack",
    "hypotheses_hold",
    "inf_u",
    "notes",
];

pub fn cmd_positivity(cfg: &RunConfig, out: &Path, seed: u64) -> Result<PositivitySummary> {
    let store = load_prototype(out)?;
    let res = rescale(cfg, &store)?;
    let (summary, rows) = positivity(cfg, &res)?;
    let dir = out.join(POSITIVITY_DIR);
    fs::create_dir_all(&dir)?;
    io::write_csv(&dir.join("positivity.csv"), &POSITIVITY_COLUMNS, rows)?;
    io::write_json(&dir.join("positivity.json"), &summary)?;
    let files = vec!["positivity.csv".to_string(), "positivity.json".to_string()];
    write_manifest(&dir, "positivity-report", cfg, seed, files, serde_json::to_value(&summary)?)?;
    let mut failures = Vec::new();
    for r in &summary.regions {
        if !r.covering_ok || !r.chain_ok {
            failures.push(format!("margin {}: ball chain does not cover the subdomain", r.margin_cells));
        }
        if r.inequality_failures > 0 {
            failures.push(format!("margin {}: {} measure-bound failures", r.margin_cells, r.inequality_failures));
        }
        if !(r.min_floor > 0.0) {
            failures.push(format!("margin {}: interior infimum reaches {:e}", r.margin_cells, r.min_floor));
        }
    }
    if !failures.is_empty() {
        return Err(PsflowError::InvariantFailure(failures.join("; ")));
    }
    Ok(summary)
}
