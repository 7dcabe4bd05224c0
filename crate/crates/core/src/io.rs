//! Artifact persistence: CSV tables, binary field snapshots, JSON metadata.
//!
//! Floats in CSV use 17 significant digits so every value round-trips.
//! A snapshot file is one ASCII header line
//! `PSFLOW1 <mode> <radial_dim> <points> <extent>` (multi-axis values joined
//! by `x`) followed by the node values as little-endian f64.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::direct::{DirectRun, DirectSettings, DirectState, DirectVariant};
use crate::error::{PsflowError, Result};
use crate::field::Field;
use crate::grid::{Grid, GridMode};
use crate::params::FlowParams;
use crate::store::{LedgerRow, Snapshot, SnapshotStore, Violation};

const MAGIC: &str = "PSFLOW1";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| PsflowError::DataIntegrity(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub const LEDGER_COLUMNS: [&str; 9] =
    ["s", "gamma", "grad_energy", "max_v", "min_v", "ds", "newton_iters", "energy_residual", "dissipation"];

pub fn write_ledger_csv(path: &Path, ledger: &[LedgerRow]) -> Result<()> {
    write_csv(
        path,
        &LEDGER_COLUMNS,
        ledger.iter().map(|r| {
            vec![
                fmt_f64(r.s),
                fmt_f64(r.gamma),
                fmt_f64(r.grad_energy),
                fmt_f64(r.max_v),
                fmt_f64(r.min_v),
                fmt_f64(r.ds),
                r.newton_iters.to_string(),
                fmt_f64(r.energy_residual),
                fmt_f64(r.dissipation),
            ]
        }),
    )
}

pub fn read_ledger_csv(path: &Path) -> Result<Vec<LedgerRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<LedgerRow>, _>>()?;
    Ok(rows)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x")
}

fn format_err(msg: impl Into<String>) -> PsflowError {
    PsflowError::Format(msg.into())
}

pub fn encode_snapshot(f: &Field) -> Vec<u8> {
    let g = f.grid();
    let extent: Vec<String> = g.extent().iter().map(|e| format!("{e:e}")).collect();
    let header = format!("{MAGIC} {} {} {} {}\n", g.mode(), g.radial_dim(), join(g.points()), extent.join("x"));
    let mut out = header.into_bytes();
    out.reserve(8 * f.len());
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Field> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| format_err("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| format_err("header is not ASCII"))?;
    let tok: Vec<&str> = header.split(' ').collect();
    if tok.len() != 5 || tok[0] != MAGIC {
        return Err(format_err(format!("bad header '{header}'")));
    }
    let mode: GridMode = tok[1].parse().map_err(|_| format_err(format!("unknown mode '{}'", tok[1])))?;
    let dim: usize = tok[2].parse().map_err(|_| format_err(format!("bad dimension '{}'", tok[2])))?;
    let points = tok[3]
        .split('x')
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| format_err(format!("bad points '{}'", tok[3])))?;
    let extent = tok[4]
        .split('x')
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| format_err(format!("bad extent '{}'", tok[4])))?;
    let grid = Grid::new(mode, extent, points, dim).map_err(|e| format_err(e.to_string()))?;
    let body = &bytes[nl + 1..];
    if body.len() != 8 * grid.len() {
        return Err(format_err(format!("expected {} values, found {} bytes", grid.len(), body.len())));
    }
    let vals = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Field::from_values(Arc::new(grid), vals)
}

pub fn write_snapshot(path: &Path, f: &Field) -> Result<()> {
    fs::write(path, encode_snapshot(f))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Field> {
    let bytes = fs::read(path).map_err(|e| format_err(format!("cannot read {}: {e}", path.display())))?;
    decode_snapshot(&bytes).map_err(|e| format_err(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub mode: GridMode,
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
    pub radial_dim: usize,
}

impl GridSpec {
    pub fn of(g: &Grid) -> Self {
        Self { mode: g.mode(), extent: g.extent().to_vec(), points: g.points().to_vec(), radial_dim: g.radial_dim() }
    }

    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.mode, self.extent.clone(), self.points.clone(), self.radial_dim)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub file: String,
    pub s: f64,
    pub ledger_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoreMeta {
    params: FlowParams,
    grid: GridSpec,
    extinction_time: Option<f64>,
    extinction_eps: f64,
    u0_max: f64,
    violations: Vec<Violation>,
    warnings: Vec<String>,
    time_dissipation: f64,
    dissipation_constant: f64,
    rejected_steps: usize,
    snapshots: Vec<SnapshotEntry>,
}

pub const STORE_FILE: &str = "store.json";
pub const LEDGER_FILE: &str = "ledger.csv";

/// Writes `store.json`, `ledger.csv` and `snapshots/*.bin` under `dir`;
/// returns the written paths relative to `dir`.
pub fn save_store(dir: &Path, store: &SnapshotStore) -> Result<Vec<String>> {
    fs::create_dir_all(dir.join("snapshots"))?;
    let mut files = vec![STORE_FILE.to_string(), LEDGER_FILE.to_string()];
    let mut entries = Vec::with_capacity(store.snapshots.len());
    for (k, snap) in store.snapshots.iter().enumerate() {
        let file = format!("snapshots/v_{k:05}.bin");
        write_snapshot(&dir.join(&file), &snap.field)?;
        entries.push(SnapshotEntry { file: file.clone(), s: snap.s, ledger_index: snap.ledger_index });
        files.push(file);
    }
    write_ledger_csv(&dir.join(LEDGER_FILE), &store.ledger)?;
    let meta = StoreMeta {
        params: store.params,
        grid: GridSpec::of(&store.grid),
        extinction_time: store.extinction_time,
        extinction_eps: store.extinction_eps,
        u0_max: store.u0_max,
        violations: store.violations.clone(),
        warnings: store.warnings.clone(),
        time_dissipation: store.time_dissipation,
        dissipation_constant: store.dissipation_constant,
        rejected_steps: store.rejected_steps,
        snapshots: entries,
    };
    write_json(&dir.join(STORE_FILE), &meta)?;
    Ok(files)
}

/// Loads a store. Snapshots are read in order up to the first missing or
/// short file; a truncated store keeps the valid prefix and a warning.
pub fn load_store(dir: &Path) -> Result<SnapshotStore> {
    let meta: StoreMeta = read_json(&dir.join(STORE_FILE))?;
    let grid = Arc::new(meta.grid.build()?);
    let ledger = read_ledger_csv(&dir.join(LEDGER_FILE))?;
    if ledger.is_empty() {
        return Err(PsflowError::DataIntegrity(format!("{} has no rows", dir.join(LEDGER_FILE).display())));
    }
    let mut store = SnapshotStore::new(meta.params, grid.clone(), meta.extinction_eps, meta.u0_max);
    store.ledger = ledger;
    store.extinction_time = meta.extinction_time;
    store.violations = meta.violations;
    store.warnings = meta.warnings;
    store.time_dissipation = meta.time_dissipation;
    store.dissipation_constant = meta.dissipation_constant;
    store.rejected_steps = meta.rejected_steps;
    for e in &meta.snapshots {
        let path = dir.join(&e.file);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(_) => {
                store.warnings.push(format!("snapshot {} missing; store truncated", e.file));
                break;
            }
        };
        let field = match decode_snapshot(&bytes) {
            Ok(f) => f,
            Err(PsflowError::Format(m)) if m.starts_with("expected") => {
                store.warnings.push(format!("snapshot {} is short ({m}); store truncated", e.file));
                break;
            }
            Err(err) => return Err(format_err(format!("{}: {err}", path.display()))),
        };
        if **field.grid() != *grid {
            return Err(PsflowError::DataIntegrity(format!("{} uses a different grid", e.file)));
        }
        let row = store.ledger.get(e.ledger_index).ok_or_else(|| {
            PsflowError::DataIntegrity(format!("{} points past the ledger (row {})", e.file, e.ledger_index))
        })?;
        if row.s != e.s {
            return Err(PsflowError::DataIntegrity(format!("{} at s = {} disagrees with ledger s = {}", e.file, e.s, row.s)));
        }
        store.snapshots.push(Snapshot {
            s: e.s,
            ledger_index: e.ledger_index,
            field,
            gamma: row.gamma,
            grad_energy: row.grad_energy,
        });
    }
    if store.snapshots.is_empty() {
        return Err(PsflowError::DataIntegrity(format!("{} holds no readable snapshots", dir.display())));
    }
    Ok(store)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DirectEntry {
    t: f64,
    file: String,
    lambda: f64,
    s: f64,
    gamma: f64,
    projection_factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DirectMeta {
    params: FlowParams,
    dt: f64,
    t_end: f64,
    variant: DirectVariant,
    stride: usize,
    lambda_increases: Vec<(f64, f64, f64)>,
    warnings: Vec<String>,
    states: Vec<DirectEntry>,
}

pub const DIRECT_FILE: &str = "direct.json";
pub const DIRECT_CSV: &str = "direct.csv";

pub fn save_direct(dir: &Path, run: &DirectRun) -> Result<Vec<String>> {
    fs::create_dir_all(dir.join("fields"))?;
    let mut files = vec![DIRECT_FILE.to_string(), DIRECT_CSV.to_string()];
    let mut states = Vec::with_capacity(run.series.len());
    for (k, st) in run.series.iter().enumerate() {
        let file = format!("fields/u_{k:05}.bin");
        write_snapshot(&dir.join(&file), &st.u)?;
        states.push(DirectEntry {
            t: st.t,
            file: file.clone(),
            lambda: st.lambda,
            s: st.s,
            gamma: st.gamma,
            projection_factor: st.projection_factor,
        });
        files.push(file);
    }
    write_csv(
        &dir.join(DIRECT_CSV),
        &["t", "lambda", "max_u", "min_u_interior", "constraint_residual", "s", "gamma"],
        run.series.iter().map(|st| {
            vec![
                fmt_f64(st.t),
                fmt_f64(st.lambda),
                fmt_f64(st.max_u),
                fmt_f64(st.min_u_interior),
                fmt_f64(st.constraint_residual),
                fmt_f64(st.s),
                fmt_f64(st.gamma),
            ]
        }),
    )?;
    let meta = DirectMeta {
        params: run.params,
        dt: run.settings.dt,
        t_end: run.settings.t_end,
        variant: run.settings.variant,
        stride: run.settings.stride,
        lambda_increases: run.lambda_increases.clone(),
        warnings: run.warnings.clone(),
        states,
    };
    write_json(&dir.join(DIRECT_FILE), &meta)?;
    Ok(files)
}

/// Rebuilds a direct run from its saved states; derived columns are
/// recomputed from the fields.
pub fn load_direct(dir: &Path) -> Result<DirectRun> {
    let meta: DirectMeta = read_json(&dir.join(DIRECT_FILE))?;
    let q = meta.params.q;
    let mut series = Vec::with_capacity(meta.states.len());
    let mut grid: Option<Arc<Grid>> = None;
    for e in &meta.states {
        let u = read_snapshot(&dir.join(&e.file))?;
        if let Some(g) = &grid {
            if **u.grid() != **g {
                return Err(PsflowError::DataIntegrity(format!("{} uses a different grid", e.file)));
            }
        }
        grid.get_or_insert_with(|| u.grid().clone());
        let min_u_interior = u.grid().interior_indices().map(|i| u.values()[i]).fold(f64::INFINITY, f64::min);
        let constraint_residual = (crate::operators::lr_integral(&u, q + 1.0).powf(1.0 / (q + 1.0)) - 1.0).abs();
        series.push(DirectState {
            t: e.t,
            max_u: u.max(),
            min_u_interior,
            constraint_residual,
            u,
            lambda: e.lambda,
            s: e.s,
            gamma: e.gamma,
            projection_factor: e.projection_factor,
        });
    }
    let grid = grid.ok_or_else(|| PsflowError::DataIntegrity(format!("{} lists no states", DIRECT_FILE)))?;
    let mut settings = DirectSettings::new(meta.dt, meta.t_end);
    settings.variant = meta.variant;
    settings.stride = meta.stride;
    Ok(DirectRun {
        params: meta.params,
        grid,
        settings,
        series,
        lambda_increases: meta.lambda_increases,
        warnings: meta.warnings,
    })
}

/// Emitted next to every command's artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub config: crate::config::RunConfig,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub summary: serde_json::Value,
}

pub const MANIFEST_FILE: &str = "manifest.json";
