//! Experiment configuration: one JSON document with every default filled in.

use std::path::{Path, PathBuf};

use batsim_core::ability::{RunValues, WobaWeights};
use batsim_core::converter::TrainingConfig;
use batsim_core::strategy::ThresholdPolicyConfig;
use batsim_core::transition::DEFAULT_MIN_COUNT;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DEFAULT_D_ALPHA_GRID: [f64; 7] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
pub const DEFAULT_D_WOBA_GRID: [f64; 4] = [0.0, -0.005, -0.01, -0.015];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LineupSource {
    /// The bundled nine-slot slash targets and their fitted vectors.
    Table1,
    /// A JSON list of nine `{obp, slg, woba, alpha}` targets, fitted on load.
    Targets { path: PathBuf },
    /// A JSON list of nine ability vectors.
    Vectors { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransitionSource {
    /// The bundled table built from the synthetic event log.
    Synthetic,
    /// Deterministic simple advancement rule.
    Simple,
    /// An event-log CSV, built into a table on load.
    Events {
        path: PathBuf,
        #[serde(default)]
        lenient: bool,
    },
    /// A transition-table JSON written by `build-transitions`.
    Table { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    NormalOnly,
    Fixed,
    Threshold { theta_o: f64, theta_l: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConverterConfig {
    /// Trained parameters; when absent the converter is trained in-process.
    pub params_path: Option<PathBuf>,
    /// Player CSV (`1b,2b,3b,hr,bb,k,g,f`); when absent a synthetic pool
    /// of `n_players` is drawn.
    pub players_path: Option<PathBuf>,
    pub n_players: usize,
    pub training: TrainingConfig,
}

impl Default for ConverterConfig {
    fn default() -> Self {
        Self {
            params_path: None,
            players_path: None,
            n_players: 502,
            training: TrainingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    StrategyGrid,
    ThresholdGrid,
}

impl SweepMode {
    pub fn name(self) -> &'static str {
        match self {
            SweepMode::StrategyGrid => "strategy-grid",
            SweepMode::ThresholdGrid => "threshold-grid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub d_alpha_grid: Vec<f64>,
    pub d_woba_grid: Vec<f64>,
    /// Policy for strategy-grid rows.
    pub policy: PolicySpec,
    /// Threshold grids; when absent, the distinct run-expectancy values of
    /// the lineup-average batter are used for both.
    pub theta_o_grid: Option<Vec<f64>>,
    pub theta_l_grid: Option<Vec<f64>>,
    /// Strategy conversion used for every threshold-grid row.
    pub threshold_d_alpha: f64,
    pub threshold_d_woba: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mode: SweepMode::StrategyGrid,
            d_alpha_grid: DEFAULT_D_ALPHA_GRID.to_vec(),
            d_woba_grid: DEFAULT_D_WOBA_GRID.to_vec(),
            policy: PolicySpec::Fixed,
            theta_o_grid: None,
            theta_l_grid: None,
            threshold_d_alpha: 0.1,
            threshold_d_woba: -0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub n_games: u64,
    pub lineup: LineupSource,
    pub transitions: TransitionSource,
    /// Rows with fewer observations are blended with the simple rule.
    pub min_count: u64,
    pub converter: ConverterConfig,
    /// Policy for `simulate`; `validate` always uses the normal-only baseline.
    pub policy: PolicySpec,
    /// Strategy conversion for `simulate` and `convert`.
    pub d_alpha: f64,
    pub d_woba: f64,
    pub sweep: SweepConfig,
    pub run_values: RunValues,
    pub woba_weights: WobaWeights,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2018,
            workers: 1,
            n_games: 100_000,
            lineup: LineupSource::Table1,
            transitions: TransitionSource::Synthetic,
            min_count: DEFAULT_MIN_COUNT,
            converter: ConverterConfig::default(),
            policy: PolicySpec::NormalOnly,
            d_alpha: 0.0,
            d_woba: 0.0,
            sweep: SweepConfig::default(),
            run_values: RunValues::default(),
            woba_weights: WobaWeights::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        match &mut self.lineup {
            LineupSource::Targets { path } | LineupSource::Vectors { path } => fix(path),
            LineupSource::Table1 => {}
        }
        match &mut self.transitions {
            TransitionSource::Events { path, .. } | TransitionSource::Table { path } => fix(path),
            TransitionSource::Synthetic | TransitionSource::Simple => {}
        }
        if let Some(p) = &mut self.converter.params_path {
            fix(p);
        }
        if let Some(p) = &mut self.converter.players_path {
            fix(p);
        }
    }

    /// Checks value ranges and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_games == 0 {
            return bad("n_games must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.sweep.d_alpha_grid.is_empty() || self.sweep.d_woba_grid.is_empty() {
            return bad("sweep grids must be nonempty".into());
        }
        for g in [&self.sweep.theta_o_grid, &self.sweep.theta_l_grid].into_iter().flatten() {
            if g.is_empty() {
                return bad("threshold grids must be nonempty".into());
            }
        }
        let all_costs = self.sweep.d_woba_grid.iter().chain([&self.d_woba, &self.sweep.threshold_d_woba]);
        if let Some(w) = all_costs.into_iter().find(|&&w| !(w <= 0.0)) {
            return bad(format!("d_woba values must be <= 0, got {w}"));
        }
        let all_spreads = self.sweep.d_alpha_grid.iter().chain([&self.d_alpha, &self.sweep.threshold_d_alpha]);
        if let Some(a) = all_spreads.into_iter().find(|&&a| !(a >= 0.0)) {
            return bad(format!("d_alpha values must be >= 0, got {a}"));
        }
        for p in [self.policy, self.sweep.policy] {
            if let PolicySpec::Threshold { theta_o, theta_l } = p {
                ThresholdPolicyConfig::new(theta_o, theta_l)?;
            }
        }
        self.run_values.validate()?;
        self.woba_weights.validate()?;
        let mut paths: Vec<&PathBuf> = Vec::new();
        match &self.lineup {
            LineupSource::Targets { path } | LineupSource::Vectors { path } => paths.push(path),
            LineupSource::Table1 => {}
        }
        match &self.transitions {
            TransitionSource::Events { path, .. } | TransitionSource::Table { path } => paths.push(path),
            TransitionSource::Synthetic | TransitionSource::Simple => {}
        }
        paths.extend(self.converter.params_path.iter());
        paths.extend(self.converter.players_path.iter());
        if let Some(p) = paths.into_iter().find(|p| !p.exists()) {
            return Err(HarnessError::missing(p.clone()));
        }
        Ok(())
    }
}
