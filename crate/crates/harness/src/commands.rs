use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use batsim_core::ability::{alpha, woba, AbilityVector};
use batsim_core::converter::convert;
use batsim_core::simulator::{monte_carlo, Lineup};
use batsim_core::strategy::Policy;
use batsim_core::synth::{league_average, synthetic_events, AdvancementModel};
use batsim_core::transition::{
    build_table_with, parse_event_log, parse_event_log_lenient, write_event_log, RunExpectancyTable, TableOptions,
};
use log::{info, warn};
use serde::Serialize;

use crate::cli::{Cli, Command};
use crate::config::{ExperimentConfig, LineupSource, PolicySpec};
use crate::data;
use crate::error::{HarnessError, Result};
use crate::report::{read_histogram, ValidationReport};
use crate::sweep::{run_sweep, write_sweep_csv, SweepInputs};

/// Effective config: file (or defaults) plus command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.global.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.global.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

/// Writes to `path`, or stdout when `None`.
fn emit<F>(path: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let res = match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| HarnessError::io(p, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w).and_then(|_| w.flush())
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            f(&mut w).and_then(|_| w.flush())
        }
    };
    res.map_err(|e| HarnessError::Runtime(format!("writing output: {e}")))
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    emit(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    let out = cli.global.out.as_deref();
    if cli.global.print_config {
        return emit_json(out, &cfg);
    }
    cfg.validate()?;
    let Some(command) = &cli.command else {
        return Err(HarnessError::Config("no command given (see --help)".into()));
    };
    match command {
        Command::BuildTransitions {
            events,
            lenient,
            min_count,
        } => build_transitions(&cfg, events, *lenient, *min_count, out),
        Command::SynthEvents { n } => {
            let events = synthetic_events(*n, cfg.seed, &league_average(), &AdvancementModel::default());
            let mut buf = Vec::new();
            write_event_log(&events, &mut buf)?;
            emit(out, |w| w.write_all(&buf))
        }
        Command::FitLineup => {
            let fitted = match &cfg.lineup {
                LineupSource::Table1 => data::fit_lineup(&data::table1_targets(), &cfg.run_values, &cfg.woba_weights)?,
                LineupSource::Targets { path } => {
                    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
                    let targets: Vec<batsim_core::ability::SlashTargets> = serde_json::from_reader(f)
                        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
                    data::fit_lineup(&targets, &cfg.run_values, &cfg.woba_weights)?
                }
                LineupSource::Vectors { .. } => {
                    return Err(HarnessError::Config("fit-lineup needs a table1 or targets lineup".into()))
                }
            };
            emit_json(out, &fitted)
        }
        Command::ComputeRe => {
            #[derive(Serialize)]
            struct Report {
                batter: AbilityVector,
                run_expectancy: RunExpectancyTable,
            }
            let vectors = data::lineup_vectors(&cfg)?;
            let table = data::transition_table(&cfg)?;
            let report = Report {
                batter: AbilityVector::average(&vectors)?,
                run_expectancy: data::lineup_run_expectancy(&vectors, &table)?,
            };
            emit_json(out, &report)
        }
        Command::TrainConverter { metrics } => {
            let (params, m) = data::train_converter(&cfg)?;
            emit_json(out, &params)?;
            match (metrics, out) {
                (Some(p), _) => emit_json(Some(p), &m),
                (None, Some(_)) => emit_json(None, &m),
                (None, None) => {
                    eprintln!("{}", serde_json::to_string_pretty(&m).expect("metrics serialise"));
                    Ok(())
                }
            }
        }
        Command::Convert {
            slot,
            vector,
            d_alpha,
            d_woba,
        } => {
            let p_n = match vector {
                Some(p) => {
                    let f = File::open(p).map_err(|e| HarnessError::io(p, e))?;
                    serde_json::from_reader(f).map_err(|e| HarnessError::Data(format!("{}: {e}", p.display())))?
                }
                None => {
                    let v = data::lineup_vectors(&cfg)?;
                    *v.get(slot.wrapping_sub(1))
                        .ok_or_else(|| HarnessError::Config(format!("slot must be 1-9, got {slot}")))?
                }
            };
            convert_one(&cfg, &p_n, d_alpha.unwrap_or(cfg.d_alpha), d_woba.unwrap_or(cfg.d_woba), out)
        }
        Command::Simulate { histogram } => simulate(&cfg, histogram.as_deref(), out),
        Command::Sweep { mode } => {
            let mode = mode.map(Into::into).unwrap_or(cfg.sweep.mode);
            let vectors = data::lineup_vectors(&cfg)?;
            let table = data::transition_table(&cfg)?;
            let params = data::converter(&cfg)?;
            let inputs = SweepInputs {
                cfg: &cfg,
                vectors: &vectors,
                table: &table,
                params: &params,
            };
            let rows = run_sweep(&inputs, mode)?;
            emit(out, |w| write_sweep_csv(&rows, w))
        }
        Command::Validate { reference, histogram } => {
            let f = File::open(reference).map_err(|e| HarnessError::io(reference, e))?;
            let reference = read_histogram(f)?;
            let vectors = data::lineup_vectors(&cfg)?;
            let table = data::transition_table(&cfg)?;
            let stats = monte_carlo(
                &Lineup::normal(&vectors)?,
                &Policy::NormalOnly,
                &table,
                cfg.n_games,
                cfg.seed,
                cfg.workers,
            )?;
            let report = ValidationReport::new(&stats, &reference);
            if let Some(h) = histogram {
                emit(Some(h), |w| report.write_histogram_csv(w))?;
            }
            emit_json(out, &report)
        }
    }
}

fn build_transitions(
    cfg: &ExperimentConfig,
    events: &Path,
    lenient: bool,
    min_count: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let f = File::open(events).map_err(|e| HarnessError::io(events, e))?;
    let parsed = if lenient {
        let (parsed, rejected) = parse_event_log_lenient(f)?;
        for r in &rejected {
            warn!("{}: line {}: {}", events.display(), r.line, r.error);
        }
        eprintln!("{} rows accepted, {} rejected", parsed.len(), rejected.len());
        parsed
    } else {
        parse_event_log(f).map_err(|e| HarnessError::Data(format!("{}: {e}", events.display())))?
    };
    let options = TableOptions {
        min_count: min_count.unwrap_or(cfg.min_count),
    };
    let table = build_table_with(&parsed, options)?;
    info!("{} events, {} table rows", parsed.len(), table.len());
    emit_json(out, &table)
}

fn convert_one(cfg: &ExperimentConfig, p_n: &AbilityVector, d_alpha: f64, d_woba: f64, out: Option<&Path>) -> Result<()> {
    #[derive(Serialize)]
    struct Report {
        d_alpha: f64,
        d_woba: f64,
        alpha_before: f64,
        alpha_after: f64,
        woba_before: f64,
        woba_after: f64,
        normal: AbilityVector,
        converted: AbilityVector,
    }
    if !(d_woba <= 0.0) {
        return Err(HarnessError::Config(format!("d_woba must be <= 0, got {d_woba}")));
    }
    let params = data::converter(cfg)?;
    let converted = convert(&params, p_n, d_alpha, d_woba)?;
    let (rv, w) = (&cfg.run_values, &cfg.woba_weights);
    emit_json(
        out,
        &Report {
            d_alpha,
            d_woba,
            alpha_before: alpha(p_n, rv)?,
            alpha_after: alpha(&converted, rv)?,
            woba_before: woba(p_n, w),
            woba_after: woba(&converted, w),
            normal: *p_n,
            converted,
        },
    )
}

fn simulate(cfg: &ExperimentConfig, histogram: Option<&Path>, out: Option<&Path>) -> Result<()> {
    #[derive(Serialize)]
    struct Report<'a> {
        policy: &'a str,
        d_alpha: f64,
        d_woba: f64,
        seed: u64,
        infeasible_triples: usize,
        stats: batsim_core::simulator::RunStats,
    }
    let vectors = data::lineup_vectors(cfg)?;
    let table = data::transition_table(cfg)?;
    let (lineup, flagged) = if cfg.policy == PolicySpec::NormalOnly {
        (Lineup::normal(&vectors)?, 0)
    } else {
        let params = data::converter(cfg)?;
        data::strategy_lineup(&vectors, cfg.d_alpha, cfg.d_woba, &params, &cfg.run_values)?
    };
    let re = match cfg.policy {
        PolicySpec::Threshold { .. } => Some(data::lineup_run_expectancy(&vectors, &table)?),
        _ => None,
    };
    let policy = data::policy(cfg.policy, re.as_ref())?;
    let stats = monte_carlo(&lineup, &policy, &table, cfg.n_games, cfg.seed, cfg.workers)?;
    if stats.truncated_games > 0 {
        warn!("{} games hit the plate-appearance cap", stats.truncated_games);
    }
    if let Some(h) = histogram {
        emit(Some(h), |w| stats.write_histogram_csv(w))?;
    }
    emit_json(
        out,
        &Report {
            policy: policy.name(),
            d_alpha: cfg.d_alpha,
            d_woba: cfg.d_woba,
            seed: cfg.seed,
            infeasible_triples: flagged,
            stats,
        },
    )
}
