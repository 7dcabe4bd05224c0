//! Run configuration: a TOML file with `[params]`, `[grid]`, `[initial]`,
//! `[solver]`, `[diagnostics]` and `[output]` sections.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::direct::{DirectSettings, DirectVariant};
use crate::error::{PsflowError, Result};
use crate::field::{normalize_initial, preset_field, Field, Preset, Truncation};
use crate::grid::{Grid, GridMode};
use crate::params::{make_params, FlowParams, Tolerances};
use crate::prototype::{Cadence, NewtonSettings, StepControl};
use crate::scaling::MapSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsSection,
    pub grid: GridSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub n: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub mode: GridMode,
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Bump,
    Plateau,
    Talenti,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationName {
    Interior,
    Shifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub preset: PresetName,
    /// Plateau height.
    pub level: f64,
    /// Talenti scale lambda.
    pub scale: f64,
    pub truncation: TruncationName,
    /// Binary snapshot used instead of the preset.
    pub snapshot: Option<PathBuf>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { preset: PresetName::Bump, level: 1.0, scale: 1.0, truncation: TruncationName::Interior, snapshot: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepping {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub stepping: Stepping,
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub growth: f64,
    /// Per-step energy budget; 0 disables it.
    pub energy_budget: f64,
    pub max_steps: usize,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Defaults to `1e-8 * max u0`.
    pub extinction_eps: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub variant: DirectVariant,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            stepping: Stepping::Adaptive,
            ds_init: 1e-4,
            ds_min: 1e-14,
            ds_max: 1e-3,
            growth: 1.2,
            energy_budget: 1e-3,
            max_steps: 1_000_000,
            newton_tol: 1e-10,
            newton_max_iters: 100,
            extinction_eps: None,
            dt: 1e-3,
            t_end: 1.0,
            variant: DirectVariant::Projection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Subdomain margins in cells.
    pub margins: Vec<usize>,
    /// Levels `L` for the superlevel measures.
    pub levels: Vec<f64>,
    /// `M = m_factor * max u(t)`.
    pub m_factor: f64,
    /// Scale of the comparison Talenti profile.
    pub talenti_scale: f64,
    /// Separation constant of the comparison profile (negative).
    pub talenti_mu: f64,
    pub map_dt: f64,
    pub map_t_end: Option<f64>,
    pub s_fraction: f64,
    /// Keep every k-th rescaled or direct state as a field snapshot.
    pub stride: usize,
    pub probe_pairs: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            margins: vec![4],
            levels: vec![0.05, 0.1, 0.2],
            m_factor: 1.0,
            talenti_scale: 1.0,
            talenti_mu: -1.0,
            map_dt: 1e-3,
            map_t_end: None,
            s_fraction: 0.99,
            stride: 50,
            probe_pairs: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Snapshot every k-th accepted prototype step.
    pub cadence_steps: usize,
    /// Snapshot whenever s crosses a multiple of this; overrides the step cadence.
    pub cadence_interval: Option<f64>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("psflow-out"), cadence_steps: 1, cadence_interval: None }
    }
}

fn field_err(path: &str, msg: impl std::fmt::Display) -> PsflowError {
    PsflowError::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(field_err(path, format!("must be positive and finite (got {x})")))
    }
}

impl RunConfig {
    /// Parses and validates; relative snapshot paths resolve against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PsflowError::Config(e.to_string()))?;
        if let Some(p) = &cfg.initial.snapshot {
            if p.is_relative() {
                cfg.initial.snapshot = Some(base.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PsflowError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            PsflowError::Config(m) => PsflowError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.flow_params()?;
        self.build_grid()?;
        let i = &self.initial;
        match i.preset {
            PresetName::Plateau => positive("initial.level", i.level)?,
            PresetName::Talenti => positive("initial.scale", i.scale)?,
            PresetName::Bump => {}
        }
        if let Some(p) = &i.snapshot {
            if !p.is_file() {
                return Err(field_err("initial.snapshot", format!("{} does not exist", p.display())));
            }
        }
        let s = &self.solver;
        positive("solver.ds_init", s.ds_init)?;
        positive("solver.ds_min", s.ds_min)?;
        positive("solver.ds_max", s.ds_max)?;
        if s.stepping == Stepping::Adaptive && !(s.ds_min <= s.ds_init && s.ds_init <= s.ds_max) {
            return Err(field_err("solver.ds_init", "need ds_min <= ds_init <= ds_max"));
        }
        if !(s.growth >= 1.0 && s.growth.is_finite()) {
            return Err(field_err("solver.growth", format!("must be at least 1 (got {})", s.growth)));
        }
        if !(s.energy_budget >= 0.0 && s.energy_budget.is_finite()) {
            return Err(field_err("solver.energy_budget", format!("must be nonnegative (got {})", s.energy_budget)));
        }
        if s.max_steps == 0 {
            return Err(field_err("solver.max_steps", "must be at least 1"));
        }
        if !(s.newton_tol > 0.0 && s.newton_tol < 1e-2) {
            return Err(field_err("solver.newton_tol", format!("must lie in (0, 1e-2) (got {})", s.newton_tol)));
        }
        if s.newton_max_iters == 0 {
            return Err(field_err("solver.newton_max_iters", "must be at least 1"));
        }
        if let Some(eps) = s.extinction_eps {
            positive("solver.extinction_eps", eps)?;
        }
        positive("solver.dt", s.dt)?;
        positive("solver.t_end", s.t_end)?;
        let d = &self.diagnostics;
        if d.margins.is_empty() || d.margins.contains(&0) {
            return Err(field_err("diagnostics.margins", "need at least one positive margin"));
        }
        if d.levels.is_empty() {
            return Err(field_err("diagnostics.levels", "need at least one level"));
        }
        for l in &d.levels {
            positive("diagnostics.levels", *l)?;
        }
        if !(d.m_factor >= 1.0 && d.m_factor.is_finite()) {
            return Err(field_err("diagnostics.m_factor", format!("must be at least 1 (got {})", d.m_factor)));
        }
        positive("diagnostics.talenti_scale", d.talenti_scale)?;
        if !(d.talenti_mu < 0.0 && d.talenti_mu.is_finite()) {
            return Err(field_err("diagnostics.talenti_mu", format!("must be negative (got {})", d.talenti_mu)));
        }
        positive("diagnostics.map_dt", d.map_dt)?;
        if let Some(t) = d.map_t_end {
            positive("diagnostics.map_t_end", t)?;
        }
        if !(d.s_fraction > 0.0 && d.s_fraction < 1.0) {
            return Err(field_err("diagnostics.s_fraction", format!("must lie in (0, 1) (got {})", d.s_fraction)));
        }
        if d.stride == 0 {
            return Err(field_err("diagnostics.stride", "must be at least 1"));
        }
        let o = &self.output;
        if o.cadence_steps == 0 {
            return Err(field_err("output.cadence_steps", "must be at least 1"));
        }
        if let Some(c) = o.cadence_interval {
            positive("output.cadence_interval", c)?;
        }
        Ok(())
    }

    pub fn flow_params(&self) -> Result<FlowParams> {
        let fp = make_params(self.params.n, self.params.p).map_err(|e| {
            let path = if self.params.n < 3 { "params.n" } else { "params.p" };
            field_err(path, e)
        })?;
        Ok(fp.with_tolerances(Tolerances {
            newton_tol: self.solver.newton_tol,
            extinction_eps: self.solver.extinction_eps,
            ..Tolerances::default()
        }))
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        let g = &self.grid;
        Grid::new(g.mode, g.extent.clone(), g.points.clone(), self.params.n)
            .map(Arc::new)
            .map_err(|e| field_err("grid", e))
    }

    pub fn preset(&self) -> Preset {
        let i = &self.initial;
        match i.preset {
            PresetName::Bump => Preset::Bump,
            PresetName::Plateau => Preset::Plateau { level: i.level },
            PresetName::Talenti => Preset::Talenti {
                scale: i.scale,
                truncation: match i.truncation {
                    TruncationName::Interior => Truncation::Interior,
                    TruncationName::Shifted => Truncation::Shifted,
                },
            },
        }
    }

    /// Initial data normalized to unit `L^{q+1}` norm.
    pub fn initial_field(&self) -> Result<Field> {
        let fp = self.flow_params()?;
        let grid = self.build_grid()?;
        let raw = match &self.initial.snapshot {
            Some(path) => {
                let f = crate::io::read_snapshot(path)?;
                if **f.grid() != *grid {
                    return Err(field_err("initial.snapshot", "snapshot grid differs from [grid]"));
                }
                f
            }
            None => preset_field(grid, &self.preset(), &fp)?,
        };
        normalize_initial(&raw, &fp)
    }

    /// True when the initial data is the Talenti preset on a ball.
    pub fn is_radial_talenti(&self) -> bool {
        self.grid.mode == GridMode::Radial && self.initial.snapshot.is_none() && self.initial.preset == PresetName::Talenti
    }

    pub fn step_control(&self) -> StepControl {
        let s = &self.solver;
        let mut ctl = match s.stepping {
            Stepping::Adaptive => {
                let mut c = StepControl::adaptive(s.ds_init, s.ds_min, s.ds_max);
                c.growth = s.growth;
                c.energy_budget = (s.energy_budget > 0.0).then_some(s.energy_budget);
                c
            }
            Stepping::Fixed => StepControl::fixed(s.ds_init),
        };
        ctl.max_steps = s.max_steps;
        ctl.cadence = match self.output.cadence_interval {
            Some(d) => Cadence::Interval(d),
            None => Cadence::Steps(self.output.cadence_steps),
        };
        ctl
    }

    pub fn newton(&self) -> NewtonSettings {
        NewtonSettings { tol: self.solver.newton_tol, max_iters: self.solver.newton_max_iters }
    }

    pub fn map_settings(&self) -> MapSettings {
        let d = &self.diagnostics;
        MapSettings { t_end: d.map_t_end, s_fraction: d.s_fraction, map_dt: d.map_dt, ..MapSettings::default() }
    }

    pub fn direct_settings(&self) -> DirectSettings {
        let mut set = DirectSettings::new(self.solver.dt, self.solver.t_end);
        set.variant = self.solver.variant;
        set.newton = self.newton();
        set.stride = self.diagnostics.stride;
        set
    }

    /// Canonical TOML of the resolved configuration.
    pub fn resolved_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.resolved_toml().as_bytes()))
    }

    /// Same configuration on a grid refined `factor` times per axis.
    pub fn refined(&self, factor: usize) -> RunConfig {
        let mut c = self.clone();
        c.grid.points = c.grid.points.iter().map(|n| (n - 1) * factor + 1).collect();
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[params]\nn = 3\np = 2.0\n\n[grid]\nmode = \"cartesian_1d\"\nextent = [1.0]\npoints = [41]\n";

    #[test]
    fn defaults_fill_missing_sections() {
        let c = RunConfig::from_toml_str(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.solver, SolverSection::default());
        assert_eq!(c.build_grid().unwrap().len(), 41);
        assert!((c.flow_params().unwrap().q - 5.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_p_outside_range_with_field_path() {
        let text = MINIMAL.replace("p = 2.0", "p = 1.5");
        let msg = RunConfig::from_toml_str(&text, Path::new(".")).unwrap_err().to_string();
        assert!(msg.contains("params.p") && msg.contains("2 <= p < n"), "{msg}");
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let text = format!("{MINIMAL}\n[solver]\nds_inti = 1e-3\n");
        let msg = RunConfig::from_toml_str(&text, Path::new(".")).unwrap_err().to_string();
        assert!(msg.contains("ds_inti") && msg.contains("line 11"), "{msg}");
    }

    #[test]
    fn range_errors_name_the_field() {
        let text = format!("{MINIMAL}\n[solver]\nds_min = -1.0\n");
        let msg = RunConfig::from_toml_str(&text, Path::new(".")).unwrap_err().to_string();
        assert!(msg.contains("solver.ds_min"), "{msg}");
        let text = format!("{MINIMAL}\n[initial]\nsnapshot = \"no/such/file.bin\"\n");
        let msg = RunConfig::from_toml_str(&text, Path::new(".")).unwrap_err().to_string();
        assert!(msg.contains("initial.snapshot"), "{msg}");
    }

    #[test]
    fn resolved_config_round_trips_and_hash_is_stable() {
        let c = RunConfig::from_toml_str(MINIMAL, Path::new(".")).unwrap();
        let again = RunConfig::from_toml_str(&c.resolved_toml(), Path::new(".")).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_eq!(c.hash().len(), 64);
        let mut d = c.clone();
        d.solver.dt = 2e-3;
        assert_ne!(c.hash(), d.hash());
    }
}
