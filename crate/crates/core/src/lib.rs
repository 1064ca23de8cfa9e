//! Counterfactual batting-strategy simulation.
//!
//! Batters are described by ability vectors over eight plate-appearance
//! outcomes. A base-out transition table turns outcomes into runs, a
//! simulator plays nine-inning batting phases, and a small neural network
//! converts a batter's normal vector into on-base and long-hit variants.

pub mod ability;
pub mod converter;
pub mod simulator;
pub mod strategy;
pub mod synth;
pub mod transition;

pub use ability::{alpha, slash_stats, validate, woba, AbilityError, AbilityVector, RunValues, WobaWeights};
pub use simulator::{monte_carlo, simulate_game, GameResult, Lineup, RunStats};
pub use strategy::{build_triple, Policy, StrategyChoice, StrategyTriple, ThresholdPolicyConfig};
pub use transition::{GameState, Outcome, RunExpectancyTable, TransitionTable};
