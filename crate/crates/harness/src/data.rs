//! Bundled data and loaders that turn a config into simulation inputs.

use std::fs::File;
use std::path::Path;

use batsim_core::ability::{fit_ability_vector, AbilityVector, FittedVector, RunValues, SlashTargets, WobaWeights, COMPONENT_NAMES};
use batsim_core::converter::{build_pair_dataset, synthesize_players, train, ConverterParams, TrainingMetrics};
use batsim_core::simulator::Lineup;
use batsim_core::strategy::{build_triple, Policy, StrategyTriple, ThresholdPolicyConfig};
use batsim_core::synth::{default_synthetic_events, league_average};
use batsim_core::transition::{
    build_table_with, parse_event_log, parse_event_log_lenient, run_expectancy, RunExpectancyTable, TableOptions,
    TransitionTable, DEFAULT_MIN_COUNT,
};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LineupSource, PolicySpec, TransitionSource};
use crate::error::{HarnessError, Result};

/// Slash targets of the nine lineup slots.
pub const TABLE1_TARGETS_JSON: &str = include_str!("../data/table1_targets.json");
/// Fitted vectors for [`TABLE1_TARGETS_JSON`] under default run values and
/// wOBA weights.
pub const TABLE1_FITTED_JSON: &str = include_str!("../data/table1_fitted.json");
/// Transition table built from the default synthetic event log.
pub const SYNTHETIC_TABLE_JSON: &str = include_str!("../data/synthetic_transitions.json");

pub fn table1_targets() -> Vec<SlashTargets> {
    serde_json::from_str(TABLE1_TARGETS_JSON).expect("bundled targets parse")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub obp: f64,
    pub slg: f64,
    pub woba: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedSlot {
    pub slot: usize,
    pub targets: SlashTargets,
    pub vector: AbilityVector,
    pub residuals: Residuals,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLineup {
    pub run_values: RunValues,
    pub woba_weights: WobaWeights,
    pub slots: Vec<FittedSlot>,
}

impl FittedLineup {
    pub fn vectors(&self) -> Vec<AbilityVector> {
        self.slots.iter().map(|s| s.vector).collect()
    }
}

pub fn fit_lineup(targets: &[SlashTargets], rv: &RunValues, w: &WobaWeights) -> Result<FittedLineup> {
    let league = league_average();
    let slots = targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let FittedVector { vector, residuals: r, sweeps } = fit_ability_vector(t, &league, rv, w)?;
            Ok(FittedSlot {
                slot: i + 1,
                targets: *t,
                vector,
                residuals: Residuals {
                    obp: r[0],
                    slg: r[1],
                    woba: r[2],
                    alpha: r[3],
                },
                sweeps,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FittedLineup {
        run_values: *rv,
        woba_weights: *w,
        slots,
    })
}

/// Bundled fitted lineup if it matches the requested targets and weights,
/// otherwise a fresh fit.
pub fn table1_lineup(rv: &RunValues, w: &WobaWeights) -> Result<FittedLineup> {
    let targets = table1_targets();
    if let Ok(cached) = serde_json::from_str::<FittedLineup>(TABLE1_FITTED_JSON) {
        let same_targets = cached.slots.iter().map(|s| s.targets).eq(targets.iter().copied());
        if same_targets && cached.run_values == *rv && cached.woba_weights == *w {
            return Ok(cached);
        }
    }
    info!("fitting the bundled lineup");
    fit_lineup(&targets, rv, w)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(f))
        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

pub fn lineup_vectors(cfg: &ExperimentConfig) -> Result<Vec<AbilityVector>> {
    let vectors = match &cfg.lineup {
        LineupSource::Table1 => table1_lineup(&cfg.run_values, &cfg.woba_weights)?.vectors(),
        LineupSource::Targets { path } => {
            let targets: Vec<SlashTargets> = read_json(path)?;
            fit_lineup(&targets, &cfg.run_values, &cfg.woba_weights)?.vectors()
        }
        LineupSource::Vectors { path } => read_json(path)?,
    };
    if vectors.len() != 9 {
        return Err(HarnessError::Data(format!("lineup needs 9 batters, got {}", vectors.len())));
    }
    Ok(vectors)
}

pub fn transition_table(cfg: &ExperimentConfig) -> Result<TransitionTable> {
    let options = TableOptions { min_count: cfg.min_count };
    match &cfg.transitions {
        TransitionSource::Simple => Ok(TransitionTable::simple()),
        TransitionSource::Synthetic if cfg.min_count == DEFAULT_MIN_COUNT => serde_json::from_str(SYNTHETIC_TABLE_JSON)
            .map_err(|e| HarnessError::Data(format!("bundled transition table: {e}"))),
        TransitionSource::Synthetic => Ok(build_table_with(&default_synthetic_events(), options)?),
        TransitionSource::Table { path } => read_json(path),
        TransitionSource::Events { path, lenient } => {
            let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
            let events = if *lenient {
                let (events, rejected) = parse_event_log_lenient(f)?;
                for r in &rejected {
                    warn!("{}: line {}: {}", path.display(), r.line, r.error);
                }
                events
            } else {
                parse_event_log(f)?
            };
            Ok(build_table_with(&events, options)?)
        }
    }
}

/// Reads a player CSV with header `1b,2b,3b,hr,bb,k,g,f`.
pub fn read_players(path: &Path) -> Result<Vec<AbilityVector>> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let header = r.headers().map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    if !header.iter().eq(COMPONENT_NAMES.iter().copied()) {
        return Err(HarnessError::Data(format!(
            "{}: header must be {}",
            path.display(),
            COMPONENT_NAMES.join(",")
        )));
    }
    let mut players = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut p = [0.0; 8];
        for (i, field) in rec.iter().enumerate().take(8) {
            p[i] = field
                .trim()
                .parse()
                .map_err(|_| HarnessError::Data(format!("{}: line {line}: bad number {field:?}", path.display())))?;
        }
        let v = AbilityVector::from_file_components(p)
            .and_then(|v| batsim_core::ability::validate(*v.components()))
            .map_err(|e| HarnessError::Data(format!("{}: line {line}: {e}", path.display())))?;
        players.push(v);
    }
    Ok(players)
}

pub fn players(cfg: &ExperimentConfig) -> Result<Vec<AbilityVector>> {
    match &cfg.converter.players_path {
        Some(p) => read_players(p),
        None => Ok(synthesize_players(cfg.converter.n_players, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?),
    }
}

pub fn train_converter(cfg: &ExperimentConfig) -> Result<(ConverterParams, TrainingMetrics)> {
    let players = players(cfg)?;
    let dataset = build_pair_dataset(&players, &cfg.run_values, &cfg.woba_weights)?;
    info!("training converter on {} pairs from {} players", dataset.len(), players.len());
    Ok(train(&dataset, &cfg.converter.training, &cfg.woba_weights, cfg.seed)?)
}

/// Loads converter parameters, training them when no file is configured.
pub fn converter(cfg: &ExperimentConfig) -> Result<ConverterParams> {
    match &cfg.converter.params_path {
        Some(p) => read_json(p),
        None => {
            warn!("no converter.params_path configured; training a converter in-process");
            Ok(train_converter(cfg)?.0)
        }
    }
}

/// Run expectancy for the average batter of the lineup.
pub fn lineup_run_expectancy(vectors: &[AbilityVector], table: &TransitionTable) -> Result<RunExpectancyTable> {
    let avg = AbilityVector::average(vectors)?;
    Ok(run_expectancy(table, &avg)?)
}

pub fn policy(spec: PolicySpec, re: Option<&RunExpectancyTable>) -> Result<Policy> {
    Ok(match spec {
        PolicySpec::NormalOnly => Policy::NormalOnly,
        PolicySpec::Fixed => Policy::Fixed,
        PolicySpec::Threshold { theta_o, theta_l } => {
            let re = re.expect("threshold policies need a run-expectancy table");
            Policy::threshold(ThresholdPolicyConfig::new(theta_o, theta_l)?, re)?
        }
    })
}

/// Lineup of strategy triples and the number of flagged triples in it.
pub fn strategy_lineup(
    vectors: &[AbilityVector],
    d_alpha: f64,
    d_woba: f64,
    params: &ConverterParams,
    rv: &RunValues,
) -> Result<(Lineup, usize)> {
    let triples: Vec<StrategyTriple> = vectors
        .iter()
        .map(|v| build_triple(v, d_alpha, d_woba, params, rv))
        .collect::<std::result::Result<_, _>>()?;
    let flagged = triples.iter().filter(|t| t.flagged).count();
    Ok((Lineup::new(triples, rv)?, flagged))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fit_matches_fresh_fit() {
        let rv = RunValues::default();
        let w = WobaWeights::default();
        let cached: FittedLineup = serde_json::from_str(TABLE1_FITTED_JSON).unwrap();
        let fresh = fit_lineup(&table1_targets(), &rv, &w).unwrap();
        assert_eq!(cached, fresh);
        assert!(cached.slots.iter().all(|s| {
            let r = s.residuals;
            [r.obp, r.slg, r.woba, r.alpha].iter().all(|x| x.abs() <= 5e-3)
        }));
    }

    #[test]
    fn bundled_table_matches_regeneration() {
        let bundled: TransitionTable = serde_json::from_str(SYNTHETIC_TABLE_JSON).unwrap();
        let fresh = build_table_with(&default_synthetic_events(), TableOptions::default()).unwrap();
        assert_eq!(bundled, fresh);
    }
}
