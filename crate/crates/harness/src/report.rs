//! Comparison of a simulated run distribution with a reference histogram.

use std::io::{Read, Write};

use batsim_core::simulator::RunStats;
use serde::Serialize;

use crate::error::{HarnessError, Result};

/// Reads a `runs,count` CSV into a dense histogram.
pub fn read_histogram<R: Read>(input: R) -> Result<Vec<u64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut hist: Vec<u64> = Vec::new();
    let mut seen_header = false;
    for rec in r.records() {
        let rec = rec.map_err(|e| HarnessError::Data(format!("reference histogram: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if !seen_header {
            if rec.iter().ne(["runs", "count"]) {
                return Err(HarnessError::Data(format!("line {line}: expected header runs,count")));
            }
            seen_header = true;
            continue;
        }
        let bad = || HarnessError::Data(format!("line {line}: expected two non-negative integers"));
        if rec.len() != 2 {
            return Err(bad());
        }
        let runs: usize = rec[0].trim().parse().map_err(|_| bad())?;
        let count: u64 = rec[1].trim().parse().map_err(|_| bad())?;
        if hist.len() <= runs {
            hist.resize(runs + 1, 0);
        }
        hist[runs] += count;
    }
    if !seen_header {
        return Err(HarnessError::Data("reference histogram is empty".into()));
    }
    if hist.iter().sum::<u64>() == 0 {
        return Err(HarnessError::Data("reference histogram has no games".into()));
    }
    Ok(hist)
}

/// Total variation distance between two histograms after normalisation.
pub fn tv_distance(a: &[u64], b: &[u64]) -> f64 {
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let len = a.len().max(b.len());
    let at = |h: &[u64], i: usize| h.get(i).copied().unwrap_or(0);
    0.5 * (0..len)
        .map(|i| (at(a, i) as f64 / na as f64 - at(b, i) as f64 / nb as f64).abs())
        .sum::<f64>()
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramPair {
    pub runs: usize,
    pub simulated: u64,
    pub reference: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub simulated_mean: f64,
    pub simulated_stderr: f64,
    pub simulated_games: u64,
    pub reference_mean: f64,
    pub reference_games: u64,
    pub mean_difference: f64,
    pub tv_distance: f64,
    pub histogram: Vec<HistogramPair>,
}

impl ValidationReport {
    pub fn new(sim: &RunStats, reference: &[u64]) -> Self {
        let r = RunStats::from_histogram(reference.to_vec());
        let len = sim.histogram.len().max(reference.len());
        let histogram = (0..len)
            .map(|runs| HistogramPair {
                runs,
                simulated: sim.histogram.get(runs).copied().unwrap_or(0),
                reference: reference.get(runs).copied().unwrap_or(0),
            })
            .collect();
        Self {
            simulated_mean: sim.mean,
            simulated_stderr: sim.stderr,
            simulated_games: sim.n,
            reference_mean: r.mean,
            reference_games: r.n,
            mean_difference: sim.mean - r.mean,
            tv_distance: tv_distance(&sim.histogram, reference),
            histogram,
        }
    }

    /// Paired histogram as CSV `runs,simulated,reference`.
    pub fn write_histogram_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["runs", "simulated", "reference"])?;
        for p in &self.histogram {
            w.write_record([p.runs.to_string(), p.simulated.to_string(), p.reference.to_string()])?;
        }
        w.flush()
    }
}
