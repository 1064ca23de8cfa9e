//! Base-out transition model.
//!
//! A [`TransitionTable`] maps a (pre-state, outcome) key to a distribution
//! over (post-state, runs scored). Tables are built from event logs; keys
//! that a log never covers fall back to [`simple_transition`], a
//! deterministic advancement rule.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ability::AbilityVector;

pub const LIVE_STATES: usize = 24;
pub const TABLE_KEYS: usize = LIVE_STATES * Outcome::COUNT;
pub const DEFAULT_MIN_COUNT: u64 = 5;
pub const RE_RESIDUAL: f64 = 1e-10;
pub const RE_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransitionError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: runners are not conserved ({reason})")]
    ConservationViolation { line: u64, reason: String },
    #[error("line {line}: unknown outcome code `{code}`")]
    UnknownOutcomeCode { line: u64, code: String },
    #[error("no events to build a table from")]
    EmptyInput,
    #[error("invalid transition table: {0}")]
    InvalidTable(String),
    #[error("the half-inning cannot reach three outs from state {0}")]
    NonAbsorbing(GameState),
    #[error("run expectancy did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, TransitionError>;

/// The eight plate-appearance outcomes, in ability-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Single,
    Double,
    Triple,
    HomeRun,
    Walk,
    Strikeout,
    GroundOut,
    FlyOut,
}

impl Outcome {
    pub const COUNT: usize = 8;
    pub const ALL: [Outcome; 8] = [
        Outcome::Single,
        Outcome::Double,
        Outcome::Triple,
        Outcome::HomeRun,
        Outcome::Walk,
        Outcome::Strikeout,
        Outcome::GroundOut,
        Outcome::FlyOut,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Event-log code.
    pub fn code(self) -> &'static str {
        match self {
            Outcome::Single => "SINGLE",
            Outcome::Double => "DOUBLE",
            Outcome::Triple => "TRIPLE",
            Outcome::HomeRun => "HR",
            Outcome::Walk => "BB",
            Outcome::Strikeout => "K",
            Outcome::GroundOut => "GO",
            Outcome::FlyOut => "FO",
        }
    }

    pub fn is_out(self) -> bool {
        matches!(self, Outcome::Strikeout | Outcome::GroundOut | Outcome::FlyOut)
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Outcome::ALL
            .iter()
            .copied()
            .find(|o| o.code() == s)
            .ok_or_else(|| s.to_string())
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A live base-out state. `bases` is a 3-bit mask: bit 0 is first base,
/// bit 1 second, bit 2 third.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GameState {
    outs: u8,
    bases: u8,
}

impl GameState {
    pub const START: GameState = GameState { outs: 0, bases: 0 };

    pub fn new(outs: u8, bases: u8) -> Option<Self> {
        (outs < 3 && bases < 8).then_some(Self { outs, bases })
    }

    pub fn outs(self) -> u8 {
        self.outs
    }

    pub fn bases(self) -> u8 {
        self.bases
    }

    pub fn runners(self) -> u8 {
        self.bases.count_ones() as u8
    }

    /// Dense index `outs * 8 + bases` in `0..24`.
    pub fn index(self) -> usize {
        self.outs as usize * 8 + self.bases as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < LIVE_STATES).then_some(Self {
            outs: (i / 8) as u8,
            bases: (i % 8) as u8,
        })
    }

    pub fn all() -> impl Iterator<Item = GameState> {
        (0..LIVE_STATES).filter_map(GameState::from_index)
    }

    pub fn runner_on_second_or_third(self) -> bool {
        self.bases & 0b110 != 0
    }
}

impl fmt::Display for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.outs, self.bases)
    }
}

/// State after a plate appearance. `outs == 3` means the half-inning is
/// over; `bases` then records the runners left on base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PostState {
    pub outs: u8,
    pub bases: u8,
}

impl PostState {
    pub fn inning_over(bases: u8) -> Self {
        Self { outs: 3, bases }
    }

    pub fn is_inning_over(self) -> bool {
        self.outs >= 3
    }

    pub fn live(self) -> Option<GameState> {
        GameState::new(self.outs, self.bases)
    }
}

impl From<GameState> for PostState {
    fn from(s: GameState) -> Self {
        Self {
            outs: s.outs,
            bases: s.bases,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transition {
    pub post: PostState,
    pub runs: u8,
}

/// One observed plate appearance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionEvent {
    pub pre: GameState,
    pub outcome: Outcome,
    pub post: PostState,
    pub runs: u8,
}

impl TransitionEvent {
    /// Checks `runners_before + 1 = runners_after + runs + outs_gained` and
    /// the walk restrictions.
    pub fn check(&self) -> std::result::Result<(), String> {
        check_transition(self.pre, self.outcome, Transition { post: self.post, runs: self.runs })
    }
}

fn check_transition(pre: GameState, outcome: Outcome, t: Transition) -> std::result::Result<(), String> {
    if t.post.outs < pre.outs || t.post.outs > 3 {
        return Err(format!("outs go from {} to {}", pre.outs, t.post.outs));
    }
    let gained = t.post.outs - pre.outs;
    let before = pre.runners() + 1;
    let after = t.post.bases.count_ones() as u8 + t.runs + gained;
    if before != after {
        return Err(format!(
            "{} runners + batter vs {} on base + {} runs + {} outs",
            pre.runners(),
            t.post.bases.count_ones(),
            t.runs,
            gained
        ));
    }
    if outcome == Outcome::Walk && (t.runs > 1 || gained > 0) {
        return Err("a walk scores at most one run and records no out".into());
    }
    Ok(())
}

pub const EVENT_LOG_HEADER: [&str; 6] = ["outs_pre", "bases_pre", "outcome", "outs_post", "bases_post", "runs"];

/// A row rejected by [`parse_event_log_lenient`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: u64,
    pub error: TransitionError,
}

/// Parses an event-log CSV, failing on the first bad row.
pub fn parse_event_log<R: Read>(input: R) -> Result<Vec<TransitionEvent>> {
    let mut events = Vec::new();
    for_each_row(input, |row| {
        events.push(row?);
        Ok(())
    })?;
    Ok(events)
}

/// Parses an event-log CSV, collecting bad rows instead of failing.
pub fn parse_event_log_lenient<R: Read>(input: R) -> Result<(Vec<TransitionEvent>, Vec<Rejection>)> {
    let mut events = Vec::new();
    let mut rejected = Vec::new();
    for_each_row(input, |row| {
        match row {
            Ok(ev) => events.push(ev),
            Err(error) => rejected.push(Rejection {
                line: error_line(&error),
                error,
            }),
        }
        Ok(())
    })?;
    Ok((events, rejected))
}

fn error_line(e: &TransitionError) -> u64 {
    match e {
        TransitionError::MalformedRow { line, .. }
        | TransitionError::ConservationViolation { line, .. }
        | TransitionError::UnknownOutcomeCode { line, .. } => *line,
        _ => 0,
    }
}

fn for_each_row<R, F>(input: R, mut f: F) -> Result<()>
where
    R: Read,
    F: FnMut(Result<TransitionEvent>) -> Result<()>,
{
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut header_seen = false;
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(TransitionError::MalformedRow {
                    line,
                    reason: e.to_string(),
                });
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !header_seen {
            header_seen = true;
            if record.iter().eq(EVENT_LOG_HEADER.iter().copied()) {
                continue;
            }
            return Err(TransitionError::MalformedRow {
                line,
                reason: format!("expected header `{}`", EVENT_LOG_HEADER.join(",")),
            });
        }
        if record.iter().all(|field| field.is_empty()) {
            continue;
        }
        f(parse_row(&record, line))?;
    }
    Ok(())
}

fn parse_row(record: &csv::StringRecord, line: u64) -> Result<TransitionEvent> {
    if record.len() != 6 {
        return Err(TransitionError::MalformedRow {
            line,
            reason: format!("expected 6 fields, found {}", record.len()),
        });
    }
    let int = |i: usize, max: u8| -> Result<u8> {
        let field = &record[i];
        match field.parse::<u8>() {
            Ok(v) if v <= max => Ok(v),
            _ => Err(TransitionError::MalformedRow {
                line,
                reason: format!("{} = `{}` is not an integer in 0..={}", EVENT_LOG_HEADER[i], field, max),
            }),
        }
    };
    let outs_pre = int(0, 2)?;
    let bases_pre = int(1, 7)?;
    let outcome: Outcome = record[2].parse().map_err(|code| TransitionError::UnknownOutcomeCode { line, code })?;
    let outs_post = int(3, 3)?;
    let bases_post = int(4, 7)?;
    let runs = int(5, 4)?;
    let event = TransitionEvent {
        pre: GameState {
            outs: outs_pre,
            bases: bases_pre,
        },
        outcome,
        post: PostState {
            outs: outs_post,
            bases: bases_post,
        },
        runs,
    };
    event
        .check()
        .map_err(|reason| TransitionError::ConservationViolation { line, reason })?;
    Ok(event)
}

/// Writes events in the event-log CSV format.
pub fn write_event_log<W: std::io::Write>(events: &[TransitionEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| TransitionError::Io(e.to_string());
    w.write_record(EVENT_LOG_HEADER).map_err(io)?;
    for e in events {
        w.write_record([
            e.pre.outs.to_string(),
            e.pre.bases.to_string(),
            e.outcome.code().to_string(),
            e.post.outs.to_string(),
            e.post.bases.to_string(),
            e.runs.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| TransitionError::Io(e.to_string()))
}

/// Deterministic advancement rule: walks force runners, hits move every
/// runner exactly as many bases as the batter, outs leave runners in place.
pub fn simple_transition(s: GameState, o: Outcome) -> Transition {
    let b = s.bases;
    let (bases, runs) = match o {
        Outcome::Walk => match b {
            _ if b & 1 == 0 => (b | 1, 0),
            _ if b & 2 == 0 => (b | 3, 0),
            _ if b & 4 == 0 => (7, 0),
            _ => (7, 1),
        },
        Outcome::Single => (((b << 1) | 1) & 7, (b >> 2).count_ones()),
        Outcome::Double => (((b << 2) | 2) & 7, (b >> 1).count_ones()),
        Outcome::Triple => (4, b.count_ones()),
        Outcome::HomeRun => (0, b.count_ones() + 1),
        Outcome::Strikeout | Outcome::GroundOut | Outcome::FlyOut => {
            return Transition {
                post: PostState {
                    outs: s.outs + 1,
                    bases: b,
                },
                runs: 0,
            }
        }
    };
    Transition {
        post: PostState { outs: s.outs, bases },
        runs: runs as u8,
    }
}

/// Distribution for one (state, outcome) key.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    entries: Vec<(Transition, f64)>,
    cumulative: Vec<f64>,
    observations: u64,
    blended: bool,
}

impl TransitionRow {
    fn new(mut entries: Vec<(Transition, f64)>, observations: u64, blended: bool) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut acc = 0.0;
        let cumulative = entries
            .iter()
            .map(|(_, p)| {
                acc += p;
                acc
            })
            .collect();
        Self {
            entries,
            cumulative,
            observations,
            blended,
        }
    }

    fn point(t: Transition) -> Self {
        Self::new(vec![(t, 1.0)], 0, false)
    }

    pub fn entries(&self) -> &[(Transition, f64)] {
        &self.entries
    }

    pub fn observations(&self) -> u64 {
        self.observations
    }

    pub fn is_blended(&self) -> bool {
        self.blended
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    #[inline]
    fn draw(&self, u: f64) -> Transition {
        let total = *self.cumulative.last().unwrap_or(&1.0);
        let u = u * total;
        for (i, &c) in self.cumulative.iter().enumerate() {
            if u < c {
                return self.entries[i].0;
            }
        }
        self.entries[self.entries.len() - 1].0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableOptions {
    /// Rows with fewer observations are mixed 50/50 with the simple rule.
    /// Zero disables blending.
    pub min_count: u64,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

/// Conditional distribution of (post-state, runs) per (state, outcome).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    rows: Vec<Option<TransitionRow>>,
    options: TableOptions,
}

fn key_index(s: GameState, o: Outcome) -> usize {
    s.index() * Outcome::COUNT + o.index()
}

fn key_name(s: GameState, o: Outcome) -> String {
    format!("{}-{}-{}", s.outs, s.bases, o.code())
}

impl TransitionTable {
    /// Table whose every row is the simple rule's point mass.
    pub fn simple() -> Self {
        let mut rows = vec![None; TABLE_KEYS];
        for s in GameState::all() {
            for o in Outcome::ALL {
                rows[key_index(s, o)] = Some(TransitionRow::point(simple_transition(s, o)));
            }
        }
        Self {
            rows,
            options: TableOptions { min_count: 0 },
        }
    }

    pub fn row(&self, s: GameState, o: Outcome) -> Option<&TransitionRow> {
        self.rows[key_index(s, o)].as_ref()
    }

    pub fn options(&self) -> TableOptions {
        self.options
    }

    pub fn len(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn keys(&self) -> impl Iterator<Item = (GameState, Outcome)> + '_ {
        (0..TABLE_KEYS).filter(|&i| self.rows[i].is_some()).map(|i| {
            (
                GameState::from_index(i / Outcome::COUNT).unwrap(),
                Outcome::from_index(i % Outcome::COUNT).unwrap(),
            )
        })
    }

    /// Row distribution, or the simple rule's point mass for unseen keys.
    pub fn distribution(&self, s: GameState, o: Outcome) -> Vec<(Transition, f64)> {
        match self.row(s, o) {
            Some(r) => r.entries.clone(),
            None => vec![(simple_transition(s, o), 1.0)],
        }
    }

    /// Draws a transition. Unseen keys fall back to [`simple_transition`]
    /// and bump `fallbacks`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, s: GameState, o: Outcome, rng: &mut R, fallbacks: &mut u64) -> Transition {
        match &self.rows[key_index(s, o)] {
            Some(row) if row.entries.len() == 1 => row.entries[0].0,
            Some(row) => row.draw(rng.random::<f64>()),
            None => {
                *fallbacks += 1;
                simple_transition(s, o)
            }
        }
    }

    /// Checks stochasticity and conservation of every row.
    pub fn check(&self) -> Result<()> {
        for (s, o) in self.keys() {
            let row = self.row(s, o).unwrap();
            let total = row.total_probability();
            if (total - 1.0).abs() > 1e-9 {
                return Err(TransitionError::InvalidTable(format!(
                    "row {} sums to {}",
                    key_name(s, o),
                    total
                )));
            }
            for &(t, p) in &row.entries {
                if !(p > 0.0) {
                    return Err(TransitionError::InvalidTable(format!(
                        "row {} has a non-positive probability",
                        key_name(s, o)
                    )));
                }
                check_transition(s, o, t).map_err(|reason| {
                    TransitionError::InvalidTable(format!("row {}: {}", key_name(s, o), reason))
                })?;
            }
        }
        Ok(())
    }
}

/// Empirical table with the default options.
pub fn build_table(events: &[TransitionEvent]) -> Result<TransitionTable> {
    build_table_with(events, TableOptions::default())
}

pub fn build_table_with(events: &[TransitionEvent], options: TableOptions) -> Result<TransitionTable> {
    if events.is_empty() {
        return Err(TransitionError::EmptyInput);
    }
    let mut counts: Vec<BTreeMap<Transition, u64>> = vec![BTreeMap::new(); TABLE_KEYS];
    for e in events {
        *counts[key_index(e.pre, e.outcome)]
            .entry(Transition {
                post: e.post,
                runs: e.runs,
            })
            .or_insert(0) += 1;
    }
    let mut rows = vec![None; TABLE_KEYS];
    for (i, c) in counts.into_iter().enumerate() {
        let n: u64 = c.values().sum();
        if n == 0 {
            continue;
        }
        let blend = n < options.min_count;
        let weight = if blend { 0.5 } else { 1.0 };
        let mut entries: BTreeMap<Transition, f64> = c
            .into_iter()
            .map(|(t, k)| (t, weight * k as f64 / n as f64))
            .collect();
        if blend {
            let s = GameState::from_index(i / Outcome::COUNT).unwrap();
            let o = Outcome::from_index(i % Outcome::COUNT).unwrap();
            *entries.entry(simple_transition(s, o)).or_insert(0.0) += 0.5;
        }
        rows[i] = Some(TransitionRow::new(entries.into_iter().collect(), n, blend));
    }
    Ok(TransitionTable { rows, options })
}

#[derive(Serialize, Deserialize)]
struct EntryRepr {
    outs_post: u8,
    bases_post: u8,
    runs: u8,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct RowRepr {
    observations: u64,
    blended: bool,
    entries: Vec<EntryRepr>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    min_count: u64,
    rows: BTreeMap<String, RowRepr>,
}

impl Serialize for TransitionTable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = self
            .keys()
            .map(|(s, o)| {
                let row = self.row(s, o).unwrap();
                let entries = row
                    .entries
                    .iter()
                    .map(|(t, p)| EntryRepr {
                        outs_post: t.post.outs,
                        bases_post: t.post.bases,
                        runs: t.runs,
                        p: *p,
                    })
                    .collect();
                (
                    key_name(s, o),
                    RowRepr {
                        observations: row.observations,
                        blended: row.blended,
                        entries,
                    },
                )
            })
            .collect();
        TableRepr {
            min_count: self.options.min_count,
            rows,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TransitionTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let repr = TableRepr::deserialize(deserializer)?;
        let mut rows = vec![None; TABLE_KEYS];
        for (key, row) in repr.rows {
            let (s, o) = parse_key(&key).ok_or_else(|| D::Error::custom(format!("bad table key `{key}`")))?;
            let entries = row
                .entries
                .into_iter()
                .map(|e| {
                    (
                        Transition {
                            post: PostState {
                                outs: e.outs_post,
                                bases: e.bases_post,
                            },
                            runs: e.runs,
                        },
                        e.p,
                    )
                })
                .collect();
            rows[key_index(s, o)] = Some(TransitionRow::new(entries, row.observations, row.blended));
        }
        let table = TransitionTable {
            rows,
            options: TableOptions {
                min_count: repr.min_count,
            },
        };
        table.check().map_err(D::Error::custom)?;
        Ok(table)
    }
}

fn parse_key(key: &str) -> Option<(GameState, Outcome)> {
    let mut parts = key.splitn(3, '-');
    let outs = parts.next()?.parse().ok()?;
    let bases = parts.next()?.parse().ok()?;
    let outcome = parts.next()?.parse().ok()?;
    Some((GameState::new(outs, bases)?, outcome))
}

/// Expected runs from each live state to the end of the half-inning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunExpectancyTable {
    values: [f64; LIVE_STATES],
}

impl RunExpectancyTable {
    pub fn from_values(values: [f64; LIVE_STATES]) -> Self {
        Self { values }
    }

    pub fn get(&self, s: GameState) -> f64 {
        self.values[s.index()]
    }

    pub fn values(&self) -> &[f64; LIVE_STATES] {
        &self.values
    }

    /// Distinct values in ascending order.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v = self.values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        v.dedup();
        v
    }
}

impl Serialize for RunExpectancyTable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<String, f64> = GameState::all().map(|s| (s.to_string(), self.get(s))).collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RunExpectancyTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let map = BTreeMap::<String, f64>::deserialize(deserializer)?;
        let mut values = [f64::NAN; LIVE_STATES];
        for (k, v) in map {
            let mut it = k.splitn(2, '-');
            let s = it
                .next()
                .and_then(|o| o.parse().ok())
                .zip(it.next().and_then(|b| b.parse().ok()))
                .and_then(|(o, b)| GameState::new(o, b))
                .ok_or_else(|| D::Error::custom(format!("bad state key `{k}`")))?;
            values[s.index()] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(D::Error::custom("run expectancy table must cover all 24 states"));
        }
        Ok(Self { values })
    }
}

/// Solves the absorbing chain `re(s) = sum_o P(o) sum t(s,o)(s',r) (r + re(s'))`
/// with `re(inning over) = 0`, by Gauss-Seidel sweeps from the two-out
/// states down.
pub fn run_expectancy(t: &TransitionTable, batter: &AbilityVector) -> Result<RunExpectancyTable> {
    // (probability, next live state, runs) per state, with the constant
    // expected-runs term folded out.
    let mut moves: Vec<Vec<(f64, usize)>> = vec![Vec::new(); LIVE_STATES];
    let mut immediate = [0.0; LIVE_STATES];
    let mut ends = [false; LIVE_STATES];
    for s in GameState::all() {
        let i = s.index();
        for o in Outcome::ALL {
            let po = batter.prob(o);
            if po <= 0.0 {
                continue;
            }
            for (tr, p) in t.distribution(s, o) {
                let w = po * p;
                immediate[i] += w * tr.runs as f64;
                match tr.post.live() {
                    Some(next) => moves[i].push((w, next.index())),
                    None => ends[i] = true,
                }
            }
        }
    }

    // Every state must be able to reach the end of the inning.
    let mut can_end = ends;
    loop {
        let mut changed = false;
        for i in 0..LIVE_STATES {
            if !can_end[i] && moves[i].iter().any(|&(w, j)| w > 0.0 && can_end[j]) {
                can_end[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if let Some(i) = can_end.iter().position(|&c| !c) {
        return Err(TransitionError::NonAbsorbing(GameState::from_index(i).unwrap()));
    }

    let order: Vec<usize> = (0..LIVE_STATES).rev().collect();
    let mut re = [0.0; LIVE_STATES];
    for _ in 0..RE_MAX_SWEEPS {
        let mut residual: f64 = 0.0;
        for &i in &order {
            let v = immediate[i] + moves[i].iter().map(|&(w, j)| w * re[j]).sum::<f64>();
            residual = residual.max((v - re[i]).abs());
            re[i] = v;
        }
        if residual < RE_RESIDUAL {
            return Ok(RunExpectancyTable { values: re });
        }
    }
    Err(TransitionError::NoConvergence(RE_MAX_SWEEPS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ability::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn st(outs: u8, bases: u8) -> GameState {
        GameState::new(outs, bases).unwrap()
    }

    fn ev(line: &str) -> Result<Vec<TransitionEvent>> {
        let csv = format!("outs_pre,bases_pre,outcome,outs_post,bases_post,runs\n{line}\n");
        parse_event_log(csv.as_bytes())
    }

    #[test]
    fn parses_well_formed_rows() {
        let e = ev("0,1,SINGLE,0,3,0").unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].pre, st(0, 1));
        assert_eq!(e[0].outcome, Outcome::Single);
        assert_eq!(e[0].post, PostState { outs: 0, bases: 3 });
        assert_eq!(e[0].runs, 0);

        let hr = ev("2,0,HR,2,0,1").unwrap();
        assert_eq!(hr[0].outcome, Outcome::HomeRun);
        assert_eq!(hr[0].runs, 1);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(
            ev("0,0,SINGLE,0,0,3"),
            Err(TransitionError::ConservationViolation { line: 2, .. })
        ));
        assert!(matches!(
            ev("0,0,BUNT,0,1,0"),
            Err(TransitionError::UnknownOutcomeCode { line: 2, .. })
        ));
        assert!(matches!(ev("0,9,SINGLE,0,1,0"), Err(TransitionError::MalformedRow { line: 2, .. })));
        assert!(matches!(ev("0,1,SINGLE,0"), Err(TransitionError::MalformedRow { line: 2, .. })));
        // bases-loaded walk that scores two
        assert!(matches!(
            ev("0,7,BB,0,6,2"),
            Err(TransitionError::ConservationViolation { .. })
        ));
        assert!(matches!(
            parse_event_log("a,b,c\n".as_bytes()),
            Err(TransitionError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn lenient_parse_collects_rejections() {
        let csv = "outs_pre,bases_pre,outcome,outs_post,bases_post,runs\n0,0,K,1,0,0\n0,0,SINGLE,0,0,3\n1,0,GO,2,0,0\n";
        let (events, rejected) = parse_event_log_lenient(csv.as_bytes()).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].line, 3);
    }

    #[test]
    fn event_log_round_trip() {
        let events = ev("0,1,SINGLE,0,3,0").unwrap();
        let mut buf = Vec::new();
        write_event_log(&events, &mut buf).unwrap();
        assert_eq!(parse_event_log(buf.as_slice()).unwrap(), events);
    }

    #[test]
    fn simple_model_examples() {
        for outs in 0..3 {
            let t = simple_transition(st(outs, 7), Outcome::HomeRun);
            assert_eq!(t.post, PostState { outs, bases: 0 });
            assert_eq!(t.runs, 4);
        }
        let t = simple_transition(st(0, 1), Outcome::Single);
        assert_eq!(t.post, PostState { outs: 0, bases: 3 });
        assert_eq!(t.runs, 0);
        let t = simple_transition(st(2, 0), Outcome::Strikeout);
        assert!(t.post.is_inning_over());
        assert_eq!(t.runs, 0);
        let t = simple_transition(st(1, 7), Outcome::Walk);
        assert_eq!((t.post.bases, t.runs), (7, 1));
        let t = simple_transition(st(1, 4), Outcome::Walk);
        assert_eq!((t.post.bases, t.runs), (5, 0));
        let t = simple_transition(st(1, 6), Outcome::Double);
        assert_eq!((t.post.bases, t.runs), (2, 2));
    }

    #[test]
    fn simple_model_is_total_and_conserving() {
        for s in GameState::all() {
            for o in Outcome::ALL {
                let a = simple_transition(s, o);
                assert_eq!(a, simple_transition(s, o));
                check_transition(s, o, a).unwrap_or_else(|e| panic!("{s} {o}: {e}"));
                assert_eq!(a.post.outs > s.outs(), o.is_out());
            }
        }
    }

    fn event(pre: GameState, o: Outcome, outs: u8, bases: u8, runs: u8) -> TransitionEvent {
        TransitionEvent {
            pre,
            outcome: o,
            post: PostState { outs, bases },
            runs,
        }
    }

    #[test]
    fn build_counts_frequencies() {
        let raw = TableOptions { min_count: 0 };
        let one = [event(st(0, 1), Outcome::Single, 0, 5, 0)];
        let t = build_table_with(&one, raw).unwrap();
        assert_eq!(t.row(st(0, 1), Outcome::Single).unwrap().entries().len(), 1);

        let a = event(st(0, 1), Outcome::Single, 0, 3, 0);
        let b = event(st(0, 1), Outcome::Single, 0, 5, 0);
        let t = build_table_with(&[a, a, a, b], raw).unwrap();
        let row = t.row(st(0, 1), Outcome::Single).unwrap();
        let p = |bases| row.entries().iter().find(|(t, _)| t.post.bases == bases).unwrap().1;
        assert_eq!(p(3), 0.75);
        assert_eq!(p(5), 0.25);

        let c = event(st(2, 0), Outcome::Strikeout, 3, 0, 0);
        let t = build_table_with(&[a, c], raw).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(build_table(&[]), Err(TransitionError::EmptyInput));
    }

    #[test]
    fn thin_rows_blend_with_simple_rule() {
        let b = event(st(0, 1), Outcome::Single, 0, 5, 0);
        let t = build_table(&[b, b]).unwrap();
        let row = t.row(st(0, 1), Outcome::Single).unwrap();
        assert!(row.is_blended());
        assert_eq!(row.entries().len(), 2);
        assert!(row.entries().iter().all(|&(_, p)| p == 0.5));
        t.check().unwrap();
    }

    #[test]
    fn sampling_point_mass_and_fallback() {
        let a = event(st(0, 1), Outcome::Single, 0, 5, 0);
        let t = build_table_with(&[a], TableOptions { min_count: 0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut fallbacks = 0;
        for _ in 0..100 {
            assert_eq!(t.sample(st(0, 1), Outcome::Single, &mut rng, &mut fallbacks).post.bases, 5);
        }
        assert_eq!(fallbacks, 0);
        let got = t.sample(st(1, 0), Outcome::Double, &mut rng, &mut fallbacks);
        assert_eq!(got, simple_transition(st(1, 0), Outcome::Double));
        assert_eq!(fallbacks, 1);
    }

    #[test]
    fn sampling_matches_row_frequencies() {
        let a = event(st(0, 1), Outcome::Single, 0, 3, 0);
        let b = event(st(0, 1), Outcome::Single, 0, 5, 0);
        let t = build_table_with(&[a, a, a, b], TableOptions { min_count: 0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut fallbacks = 0;
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| t.sample(st(0, 1), Outcome::Single, &mut rng, &mut fallbacks).post.bases == 3)
            .count() as f64;
        // binomial: mean 75000, sd sqrt(n * 0.75 * 0.25)
        let sd = (n as f64 * 0.75 * 0.25).sqrt();
        assert!((hits - 75_000.0).abs() < 3.0 * sd, "{hits}");
    }

    #[test]
    fn table_json_round_trip() {
        let a = event(st(0, 1), Outcome::Single, 0, 3, 0);
        let b = event(st(0, 1), Outcome::Single, 0, 5, 0);
        let t = build_table(&[a, a, a, b, b, b]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"0-1-SINGLE\""));
        let back: TransitionTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        let bad = json.replace("\"p\":0.5", "\"p\":0.6");
        assert!(serde_json::from_str::<TransitionTable>(&bad).is_err());
    }

    #[test]
    fn run_expectancy_closed_forms() {
        let simple = TransitionTable::simple();
        let k = validate([0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let re = run_expectancy(&simple, &k).unwrap();
        assert!(re.values().iter().all(|&v| v == 0.0));

        // Expected home runs before the k-th out: k * 0.1 / 0.9.
        let hr = validate([0.0, 0.0, 0.0, 0.1, 0.0, 0.9, 0.0, 0.0]).unwrap();
        let re = run_expectancy(&simple, &hr).unwrap();
        assert!((re.get(st(0, 0)) - 1.0 / 3.0).abs() < 1e-9);
        assert!((re.get(st(1, 0)) - 2.0 / 9.0).abs() < 1e-9);
        assert!((re.get(st(2, 0)) - 1.0 / 9.0).abs() < 1e-9);
        // Runners on base score on the next homer: re(0, loaded) = 3*0.1 + ...
        assert!(re.get(st(0, 7)) > re.get(st(0, 0)));

        let only_hr = AbilityVector::try_new([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            run_expectancy(&simple, &only_hr),
            Err(TransitionError::NonAbsorbing(_))
        ));
    }

    #[test]
    fn run_expectancy_monotone_for_realistic_batter() {
        let simple = TransitionTable::simple();
        let p = validate([0.155, 0.045, 0.004, 0.025, 0.09, 0.19, 0.27, 0.221]).unwrap();
        let re = run_expectancy(&simple, &p).unwrap();
        for b in 0..8 {
            assert!(re.get(st(0, b)) >= re.get(st(1, b)));
            assert!(re.get(st(1, b)) >= re.get(st(2, b)));
        }
        for outs in 0..3 {
            for sub in 0..8u8 {
                for sup in 0..8u8 {
                    if sub & sup == sub {
                        assert!(re.get(st(outs, sup)) >= re.get(st(outs, sub)) - 1e-12);
                    }
                }
            }
        }
        let min = re.values().iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(min, re.get(st(2, 0)));
        let json = serde_json::to_string(&re).unwrap();
        let back: RunExpectancyTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, re);
    }
}
