//! Strategy-grid and threshold-grid sweeps against a normal-only baseline.

use std::io::Write;

use batsim_core::ability::AbilityVector;
use batsim_core::converter::ConverterParams;
use batsim_core::simulator::{monte_carlo, Lineup, RunStats};
use batsim_core::strategy::{Policy, ThresholdPolicyConfig};
use batsim_core::transition::{RunExpectancyTable, TransitionTable};
use log::{debug, info};

use crate::config::{ExperimentConfig, SweepMode};
use crate::data::{lineup_run_expectancy, policy, strategy_lineup};
use crate::error::Result;

pub const SWEEP_HEADER: [&str; 12] = [
    "mode",
    "d_alpha",
    "d_woba",
    "theta_o",
    "theta_l",
    "mean_runs",
    "stderr",
    "delta_vs_baseline",
    "n_games",
    "truncated",
    "fallbacks",
    "infeasible_triples",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// `baseline` for the first row, otherwise the sweep mode.
    pub mode: String,
    pub d_alpha: Option<f64>,
    pub d_woba: Option<f64>,
    pub theta_o: Option<f64>,
    pub theta_l: Option<f64>,
    pub mean_runs: f64,
    pub stderr: f64,
    pub delta_vs_baseline: f64,
    pub n_games: u64,
    pub truncated: u64,
    pub fallbacks: u64,
    pub infeasible_triples: usize,
}

impl SweepRow {
    fn new(mode: &str, stats: &RunStats, baseline_mean: f64, infeasible: usize) -> Self {
        Self {
            mode: mode.to_string(),
            d_alpha: None,
            d_woba: None,
            theta_o: None,
            theta_l: None,
            mean_runs: stats.mean,
            stderr: stats.stderr,
            delta_vs_baseline: stats.mean - baseline_mean,
            n_games: stats.n,
            truncated: stats.truncated_games,
            fallbacks: stats.fallback_transitions,
            infeasible_triples: infeasible,
        }
    }

    fn record(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
        vec![
            self.mode.clone(),
            opt(self.d_alpha),
            opt(self.d_woba),
            opt(self.theta_o),
            opt(self.theta_l),
            self.mean_runs.to_string(),
            self.stderr.to_string(),
            self.delta_vs_baseline.to_string(),
            self.n_games.to_string(),
            self.truncated.to_string(),
            self.fallbacks.to_string(),
            self.infeasible_triples.to_string(),
        ]
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()
}

/// Inputs shared by every row of a sweep.
pub struct SweepInputs<'a> {
    pub cfg: &'a ExperimentConfig,
    pub vectors: &'a [AbilityVector],
    pub table: &'a TransitionTable,
    pub params: &'a ConverterParams,
}

impl SweepInputs<'_> {
    fn simulate(&self, lineup: &Lineup, policy: &Policy) -> Result<RunStats> {
        Ok(monte_carlo(lineup, policy, self.table, self.cfg.n_games, self.cfg.seed, self.cfg.workers)?)
    }

    fn baseline(&self) -> Result<SweepRow> {
        let stats = self.simulate(&Lineup::normal(self.vectors)?, &Policy::NormalOnly)?;
        Ok(SweepRow::new("baseline", &stats, stats.mean, 0))
    }
}

/// Distinct values of a run-expectancy table, ascending.
pub fn default_theta_grid(re: &RunExpectancyTable) -> Vec<f64> {
    let mut v = re.sorted_values();
    v.dedup();
    v
}

/// Runs the configured sweep. The baseline row comes first; every row uses
/// the same seed, so game `i` sees the same random stream in every row.
pub fn run_sweep(inputs: &SweepInputs, mode: SweepMode) -> Result<Vec<SweepRow>> {
    let cfg = inputs.cfg;
    let rv = &cfg.run_values;
    let baseline = inputs.baseline()?;
    let base_mean = baseline.mean_runs;
    let mut rows = vec![baseline];
    match mode {
        SweepMode::StrategyGrid => {
            let re = lineup_run_expectancy(inputs.vectors, inputs.table)?;
            let pol = policy(cfg.sweep.policy, Some(&re))?;
            for &d_alpha in &cfg.sweep.d_alpha_grid {
                for &d_woba in &cfg.sweep.d_woba_grid {
                    let (lineup, flagged) = strategy_lineup(inputs.vectors, d_alpha, d_woba, inputs.params, rv)?;
                    let stats = inputs.simulate(&lineup, &pol)?;
                    info!("d_alpha={d_alpha} d_woba={d_woba}: {:.4}", stats.mean);
                    rows.push(SweepRow {
                        d_alpha: Some(d_alpha),
                        d_woba: Some(d_woba),
                        ..SweepRow::new(mode.name(), &stats, base_mean, flagged)
                    });
                }
            }
        }
        SweepMode::ThresholdGrid => {
            let re = lineup_run_expectancy(inputs.vectors, inputs.table)?;
            let default_grid = default_theta_grid(&re);
            let theta_o_grid = cfg.sweep.theta_o_grid.as_ref().unwrap_or(&default_grid);
            let theta_l_grid = cfg.sweep.theta_l_grid.as_ref().unwrap_or(&default_grid);
            let (d_alpha, d_woba) = (cfg.sweep.threshold_d_alpha, cfg.sweep.threshold_d_woba);
            let (lineup, flagged) = strategy_lineup(inputs.vectors, d_alpha, d_woba, inputs.params, rv)?;
            let mut skipped = 0;
            for &theta_o in theta_o_grid {
                for &theta_l in theta_l_grid {
                    let Ok(tc) = ThresholdPolicyConfig::new(theta_o, theta_l) else {
                        debug!("skipping theta_o={theta_o} theta_l={theta_l}: theta_l >= theta_o");
                        skipped += 1;
                        continue;
                    };
                    let stats = inputs.simulate(&lineup, &Policy::threshold(tc, &re)?)?;
                    rows.push(SweepRow {
                        d_alpha: Some(d_alpha),
                        d_woba: Some(d_woba),
                        theta_o: Some(theta_o),
                        theta_l: Some(theta_l),
                        ..SweepRow::new(mode.name(), &stats, base_mean, flagged)
                    });
                }
            }
            if skipped > 0 {
                info!("skipped {skipped} threshold pairs with theta_l >= theta_o");
            }
        }
    }
    Ok(rows)
}
