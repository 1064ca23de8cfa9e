//! Nine-inning batting simulator and Monte Carlo driver.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ability::{AbilityVector, RunValues};
use crate::strategy::{Policy, StrategyChoice, StrategyTriple, ORDERING_SLACK};
use crate::transition::{GameState, Outcome, TransitionTable};

pub const LINEUP_SIZE: usize = 9;
pub const INNINGS: usize = 9;
/// Plate appearances after which a half-inning is cut off.
pub const MAX_PA_PER_HALF_INNING: u32 = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid lineup: {0}")]
    InvalidLineup(String),
    #[error("n_games must be at least 1")]
    NoGames,
    #[error("workers must be at least 1")]
    NoWorkers,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    triple: StrategyTriple,
    // Cumulative outcome distribution per strategy (normal, on-base, long-hit).
    cumulative: [[f64; 8]; 3],
}

fn cumulative(p: &AbilityVector) -> [f64; 8] {
    let mut acc = 0.0;
    p.components().map(|x| {
        acc += x;
        acc
    })
}

fn strategy_index(c: StrategyChoice) -> usize {
    match c {
        StrategyChoice::Normal => 0,
        StrategyChoice::OnBase => 1,
        StrategyChoice::LongHit => 2,
    }
}

/// Nine batting slots, each with three strategy vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Lineup {
    slots: Vec<Slot>,
}

impl Lineup {
    /// Accepts flagged triples as-is; unflagged triples must satisfy
    /// alpha(long-hit) <= alpha(normal) <= alpha(on-base) within
    /// [`ORDERING_SLACK`].
    pub fn new(triples: Vec<StrategyTriple>, rv: &RunValues) -> Result<Self> {
        if triples.len() != LINEUP_SIZE {
            return Err(SimError::InvalidLineup(format!("expected 9 slots, got {}", triples.len())));
        }
        for (i, t) in triples.iter().enumerate() {
            let degenerate = t.normal == t.on_base && t.normal == t.long_hit;
            if t.flagged || degenerate {
                continue;
            }
            let violation = t
                .ordering_violation(rv)
                .map_err(|e| SimError::InvalidLineup(format!("slot {}: {e}", i + 1)))?;
            if violation > ORDERING_SLACK {
                return Err(SimError::InvalidLineup(format!(
                    "slot {}: alpha ordering violated by {violation:.4}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            slots: triples
                .into_iter()
                .map(|triple| Slot {
                    triple,
                    cumulative: [
                        cumulative(&triple.normal),
                        cumulative(&triple.on_base),
                        cumulative(&triple.long_hit),
                    ],
                })
                .collect(),
        })
    }

    /// Lineup using only normal strategies.
    pub fn normal(vectors: &[AbilityVector]) -> Result<Self> {
        Self::new(vectors.iter().copied().map(StrategyTriple::degenerate).collect(), &RunValues::default())
    }

    /// The same batter in all nine slots.
    pub fn uniform(p: AbilityVector) -> Self {
        Self::normal(&[p; LINEUP_SIZE]).expect("degenerate triples are always valid")
    }

    pub fn triples(&self) -> impl Iterator<Item = &StrategyTriple> {
        self.slots.iter().map(|s| &s.triple)
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, slot: usize, c: StrategyChoice, rng: &mut R) -> Outcome {
        let cum = &self.slots[slot].cumulative[strategy_index(c)];
        let u = rng.random::<f64>() * cum[7];
        let i = cum.iter().position(|&c| u < c).unwrap_or_else(|| {
            // u landed in rounding slack above the last step: take the last
            // outcome with positive probability.
            let p = self.slots[slot].triple.get(c).components();
            (0..8).rev().find(|&k| p[k] > 0.0).unwrap_or(7)
        });
        Outcome::from_index(i).expect("index < 8")
    }
}

/// Outcome of one half-inning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfInning {
    pub runs: u32,
    /// Lineup slot due up next.
    pub cursor: usize,
    pub plate_appearances: u32,
    pub fallback_transitions: u64,
    pub truncated: bool,
}

pub fn play_half_inning<R: Rng + ?Sized>(
    cursor: usize,
    lineup: &Lineup,
    policy: &Policy,
    table: &TransitionTable,
    rng: &mut R,
) -> HalfInning {
    assert!(cursor < LINEUP_SIZE, "cursor out of range");
    let mut state = GameState::START;
    let mut h = HalfInning {
        runs: 0,
        cursor,
        plate_appearances: 0,
        fallback_transitions: 0,
        truncated: false,
    };
    loop {
        if h.plate_appearances == MAX_PA_PER_HALF_INNING {
            h.truncated = true;
            return h;
        }
        let choice = policy.choose(state);
        let outcome = lineup.draw(h.cursor, choice, rng);
        let t = table.sample(state, outcome, rng, &mut h.fallback_transitions);
        h.runs += u32::from(t.runs);
        h.plate_appearances += 1;
        h.cursor = (h.cursor + 1) % LINEUP_SIZE;
        match t.post.live() {
            Some(s) => state = s,
            None => return h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameResult {
    pub runs: u32,
    pub plate_appearances: u32,
    pub fallback_transitions: u64,
    pub truncated: bool,
}

/// Nine half-innings; the lineup cursor carries over between innings.
pub fn simulate_game<R: Rng + ?Sized>(lineup: &Lineup, policy: &Policy, table: &TransitionTable, rng: &mut R) -> GameResult {
    let mut g = GameResult {
        runs: 0,
        plate_appearances: 0,
        fallback_transitions: 0,
        truncated: false,
    };
    let mut cursor = 0;
    for _ in 0..INNINGS {
        let h = play_half_inning(cursor, lineup, policy, table, rng);
        cursor = h.cursor;
        g.runs += h.runs;
        g.plate_appearances += h.plate_appearances;
        g.fallback_transitions += h.fallback_transitions;
        g.truncated |= h.truncated;
    }
    g
}

/// Random stream for one game of a run seeded with `seed`.
pub fn game_rng(seed: u64, game_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(game_index);
    rng
}

/// Aggregate of many simulated games.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub n: u64,
    pub mean: f64,
    /// Sample standard deviation over sqrt(n); 0 when n = 1.
    pub stderr: f64,
    pub stderr_defined: bool,
    /// `histogram[r]` is the number of games with `r` runs.
    pub histogram: Vec<u64>,
    pub truncated_games: u64,
    pub fallback_transitions: u64,
    pub plate_appearances: u64,
}

impl RunStats {
    pub fn from_games(games: &[GameResult]) -> Self {
        let max = games.iter().map(|g| g.runs).max().unwrap_or(0) as usize;
        let mut histogram = vec![0u64; max + 1];
        for g in games {
            histogram[g.runs as usize] += 1;
        }
        let mut s = Self::from_histogram(histogram);
        s.truncated_games = games.iter().filter(|g| g.truncated).count() as u64;
        s.fallback_transitions = games.iter().map(|g| g.fallback_transitions).sum();
        s.plate_appearances = games.iter().map(|g| u64::from(g.plate_appearances)).sum();
        s
    }

    /// Mean and standard error from exact integer sums over a histogram.
    pub fn from_histogram(histogram: Vec<u64>) -> Self {
        let n: u64 = histogram.iter().sum();
        let (sum, sum_sq) = histogram.iter().enumerate().fold((0u128, 0u128), |(s, q), (r, &c)| {
            let r = r as u128;
            (s + r * c as u128, q + r * r * c as u128)
        });
        let mean = if n == 0 { f64::NAN } else { sum as f64 / n as f64 };
        let (stderr, stderr_defined) = if n >= 2 {
            let n128 = n as u128;
            // n^2 * (n-1) * stderr^2 = n * sum_sq - sum^2
            let numerator = n128 * sum_sq - sum * sum;
            let var_mean = numerator as f64 / (n as f64 * n as f64 * (n - 1) as f64);
            (var_mean.sqrt(), true)
        } else {
            (0.0, false)
        };
        Self {
            n,
            mean,
            stderr,
            stderr_defined,
            histogram,
            truncated_games: 0,
            fallback_transitions: 0,
            plate_appearances: 0,
        }
    }

    /// Writes the histogram as CSV with header `runs,count`.
    pub fn write_histogram_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["runs", "count"])?;
        for (r, c) in self.histogram.iter().enumerate() {
            w.write_record([r.to_string(), c.to_string()])?;
        }
        w.flush()
    }
}

/// Simulates `n_games` games on `workers` threads. Game `i` uses
/// [`game_rng`]`(seed, i)`, so the result does not depend on `workers`.
pub fn monte_carlo(
    lineup: &Lineup,
    policy: &Policy,
    table: &TransitionTable,
    n_games: u64,
    seed: u64,
    workers: usize,
) -> Result<RunStats> {
    if n_games == 0 {
        return Err(SimError::NoGames);
    }
    if workers == 0 {
        return Err(SimError::NoWorkers);
    }
    let play = |i: u64| simulate_game(lineup, policy, table, &mut game_rng(seed, i));
    let games: Vec<GameResult> = if workers == 1 {
        (0..n_games).map(play).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?;
        pool.install(|| (0..n_games).into_par_iter().map(play).collect())
    };
    Ok(RunStats::from_games(&games))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ability::validate;

    fn strikeouts() -> AbilityVector {
        validate([0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap()
    }

    fn hr_or_k(p_hr: f64) -> AbilityVector {
        validate([0.0, 0.0, 0.0, p_hr, 0.0, 1.0 - p_hr, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn strikeout_half_inning() {
        let lineup = Lineup::uniform(strikeouts());
        let mut rng = game_rng(1, 0);
        let h = play_half_inning(4, &lineup, &Policy::NormalOnly, &TransitionTable::simple(), &mut rng);
        assert_eq!((h.runs, h.plate_appearances, h.cursor, h.truncated), (0, 3, 7, false));
    }

    #[test]
    fn cap_truncates_never_ending_inning() {
        let all_hr = AbilityVector::try_new([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let lineup = Lineup::uniform(all_hr);
        let mut rng = game_rng(1, 0);
        let h = play_half_inning(0, &lineup, &Policy::NormalOnly, &TransitionTable::simple(), &mut rng);
        assert!(h.truncated);
        assert_eq!((h.runs, h.plate_appearances), (100, 100));
    }

    #[test]
    fn strikeout_game_and_stats() {
        let lineup = Lineup::uniform(strikeouts());
        let table = TransitionTable::simple();
        let g = simulate_game(&lineup, &Policy::Fixed, &table, &mut game_rng(3, 0));
        assert_eq!((g.runs, g.plate_appearances), (0, 27));
        let s = monte_carlo(&lineup, &Policy::NormalOnly, &table, 50, 3, 1).unwrap();
        assert_eq!((s.mean, s.stderr, s.histogram.clone()), (0.0, 0.0, vec![50]));
    }

    #[test]
    fn single_game_has_undefined_stderr() {
        let s = monte_carlo(&Lineup::uniform(hr_or_k(0.1)), &Policy::NormalOnly, &TransitionTable::simple(), 1, 9, 1)
            .unwrap();
        assert_eq!(s.n, 1);
        assert!(!s.stderr_defined);
        assert_eq!(s.stderr, 0.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let l = Lineup::uniform(strikeouts());
        let t = TransitionTable::simple();
        assert_eq!(monte_carlo(&l, &Policy::NormalOnly, &t, 0, 1, 1), Err(SimError::NoGames));
        assert_eq!(monte_carlo(&l, &Policy::NormalOnly, &t, 1, 1, 0), Err(SimError::NoWorkers));
        assert!(Lineup::normal(&[strikeouts(); 8]).is_err());
    }

    #[test]
    fn half_inning_mean_matches_closed_form() {
        // Memoryless batter on the simple table: runs per half-inning are the
        // home runs before the third strikeout, negative binomial with mean
        // 3 p / (1 - p).
        let p = 0.1;
        let expected = 3.0 * p / (1.0 - p);
        let lineup = Lineup::uniform(hr_or_k(p));
        let table = TransitionTable::simple();
        let mut rng = game_rng(42, 0);
        let n = 1_000_000;
        let runs: Vec<u32> = (0..n)
            .map(|_| play_half_inning(0, &lineup, &Policy::NormalOnly, &table, &mut rng).runs)
            .collect();
        let mean = runs.iter().map(|&r| r as f64).sum::<f64>() / n as f64;
        let var = runs.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - expected).abs() <= 3.0 * se, "{mean} vs {expected} (se {se})");
    }

    #[test]
    fn histogram_stats_match_direct_computation() {
        let games: Vec<GameResult> = [0u32, 3, 1, 1, 7, 2]
            .iter()
            .map(|&runs| GameResult {
                runs,
                plate_appearances: 30,
                fallback_transitions: 1,
                truncated: runs == 7,
            })
            .collect();
        let s = RunStats::from_games(&games);
        let mean = 14.0 / 6.0;
        let sd = ([0.0, 3.0, 1.0, 1.0, 7.0, 2.0].iter().map(|x: &f64| (x - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
        assert_eq!(s.n, 6);
        assert!((s.mean - mean).abs() < 1e-15);
        assert!((s.stderr - sd / 6f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.histogram, vec![1, 2, 1, 1, 0, 0, 0, 1]);
        assert_eq!((s.truncated_games, s.fallback_transitions, s.plate_appearances), (1, 6, 180));
        let mut csv = Vec::new();
        s.write_histogram_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("runs,count\n0,1\n1,2\n"));
    }

    #[test]
    fn workers_do_not_change_results() {
        let lineup = Lineup::uniform(validate([0.15, 0.05, 0.005, 0.03, 0.08, 0.18, 0.30, 0.205]).unwrap());
        let table = TransitionTable::simple();
        let a = monte_carlo(&lineup, &Policy::Fixed, &table, 2000, 11, 1).unwrap();
        let b = monte_carlo(&lineup, &Policy::Fixed, &table, 2000, 11, 4).unwrap();
        assert_eq!(a, b);
    }
}
