//! Synthetic play-by-play generator.
//!
//! Produces event logs with realistic, stochastic runner advancement
//! (extra bases on hits, double plays, sacrifice flies, runners thrown out,
//! reached-on-error outs) so that an empirical [`TransitionTable`] can be
//! built without proprietary data.
//!
//! [`TransitionTable`]: crate::transition::TransitionTable

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ability::{validate, AbilityVector};
use crate::transition::{GameState, Outcome, PostState, Transition, TransitionEvent};

/// Seed used for the bundled synthetic log.
pub const DEFAULT_EVENT_SEED: u64 = 2018;
/// Number of plate appearances in the bundled synthetic log.
pub const DEFAULT_EVENT_COUNT: usize = 100_000;

/// League-average batter used to drive the generator and as the default
/// out-split reference when fitting vectors.
pub fn league_average() -> AbilityVector {
    validate([0.155, 0.045, 0.004, 0.025, 0.09, 0.19, 0.27, 0.221]).expect("league vector is valid")
}

/// Advancement probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvancementModel {
    pub single_second_scores: f64,
    pub single_second_scores_two_outs: f64,
    pub single_first_to_third: f64,
    pub thrown_out_extra_base: f64,
    pub double_first_scores: f64,
    pub double_first_scores_two_outs: f64,
    pub double_play: f64,
    pub ground_third_scores: f64,
    pub ground_second_to_third: f64,
    pub sac_fly: f64,
    pub fly_second_to_third: f64,
    pub ground_error: f64,
    pub fly_error: f64,
}

impl Default for AdvancementModel {
    fn default() -> Self {
        Self {
            single_second_scores: 0.60,
            single_second_scores_two_outs: 0.78,
            single_first_to_third: 0.28,
            thrown_out_extra_base: 0.04,
            double_first_scores: 0.40,
            double_first_scores_two_outs: 0.58,
            double_play: 0.45,
            ground_third_scores: 0.50,
            ground_second_to_third: 0.55,
            sac_fly: 0.55,
            fly_second_to_third: 0.25,
            ground_error: 0.025,
            fly_error: 0.015,
        }
    }
}

struct Play {
    outs: u8,
    runners: [bool; 3],
    runs: u8,
}

impl Play {
    fn new(s: GameState) -> Self {
        let b = s.bases();
        Self {
            outs: s.outs(),
            runners: [b & 1 != 0, b & 2 != 0, b & 4 != 0],
            runs: 0,
        }
    }

    fn out(&mut self) {
        self.outs += 1;
    }

    fn over(&self) -> bool {
        self.outs >= 3
    }

    // Scores the runner unless the inning has already ended.
    fn score(&mut self) {
        if !self.over() {
            self.runs += 1;
        }
    }

    fn finish(self) -> Transition {
        let bases = self.runners[0] as u8 | (self.runners[1] as u8) << 1 | (self.runners[2] as u8) << 2;
        let outs = self.outs.min(3);
        Transition {
            post: PostState { outs, bases },
            runs: self.runs,
        }
    }

    /// Every runner moves up one base; batter takes first.
    fn all_advance_one(&mut self) {
        if self.runners[2] {
            self.score();
        }
        self.runners = [true, self.runners[0], self.runners[1]];
    }
}

impl AdvancementModel {
    /// Draws a post-state for `o` from state `s`. Conservation of runners
    /// holds for every branch.
    pub fn advance<R: Rng + ?Sized>(&self, s: GameState, o: Outcome, rng: &mut R) -> Transition {
        let mut play = Play::new(s);
        let two_outs = s.outs() == 2;
        match o {
            Outcome::Walk | Outcome::HomeRun | Outcome::Triple | Outcome::Strikeout => {
                return crate::transition::simple_transition(s, o);
            }
            Outcome::Single => {
                let [first, second, third] = play.runners;
                play.runners = [true, false, false];
                if third {
                    play.score();
                }
                if second {
                    let p = if two_outs { self.single_second_scores_two_outs } else { self.single_second_scores };
                    if rng.random::<f64>() < p {
                        if rng.random::<f64>() < self.thrown_out_extra_base {
                            play.out();
                        } else {
                            play.score();
                        }
                    } else {
                        play.runners[2] = true;
                    }
                }
                if first {
                    if !play.over() && !play.runners[2] && rng.random::<f64>() < self.single_first_to_third {
                        if rng.random::<f64>() < self.thrown_out_extra_base {
                            play.out();
                        } else {
                            play.runners[2] = true;
                        }
                    } else {
                        play.runners[1] = true;
                    }
                }
            }
            Outcome::Double => {
                let [first, second, third] = play.runners;
                play.runners = [false, true, false];
                if third {
                    play.score();
                }
                if second {
                    play.score();
                }
                if first {
                    let p = if two_outs { self.double_first_scores_two_outs } else { self.double_first_scores };
                    if rng.random::<f64>() < p {
                        if rng.random::<f64>() < self.thrown_out_extra_base {
                            play.out();
                        } else {
                            play.score();
                        }
                    } else {
                        play.runners[2] = true;
                    }
                }
            }
            Outcome::GroundOut => {
                if rng.random::<f64>() < self.ground_error {
                    play.all_advance_one();
                } else if play.runners[0] && s.outs() < 2 && rng.random::<f64>() < self.double_play {
                    // Batter and the runner from first are out; others move up one.
                    let [_, second, third] = play.runners;
                    play.out();
                    play.out();
                    play.runners = [false, false, false];
                    if third {
                        if !play.over() && rng.random::<f64>() < self.ground_third_scores {
                            play.score();
                        } else {
                            play.runners[2] = true;
                        }
                    }
                    if second {
                        if play.runners[2] {
                            play.runners[1] = true;
                        } else {
                            play.runners[2] = true;
                        }
                    }
                } else {
                    play.out();
                    if !play.over() {
                        let [first, second, third] = play.runners;
                        play.runners = [false, false, false];
                        // Forced runners move; others advance by chance.
                        let forced_second = first;
                        let forced_third = first && second;
                        let forced_home = first && second && third;
                        if third {
                            if forced_home || rng.random::<f64>() < self.ground_third_scores {
                                play.score();
                            } else {
                                play.runners[2] = true;
                            }
                        }
                        if second {
                            if forced_third || (!play.runners[2] && rng.random::<f64>() < self.ground_second_to_third) {
                                play.runners[2] = true;
                            } else {
                                play.runners[1] = true;
                            }
                        }
                        if forced_second {
                            play.runners[1] = true;
                        }
                    }
                }
            }
            Outcome::FlyOut => {
                if rng.random::<f64>() < self.fly_error {
                    play.all_advance_one();
                } else {
                    play.out();
                    if !play.over() {
                        if play.runners[2] && rng.random::<f64>() < self.sac_fly {
                            play.runners[2] = false;
                            play.score();
                        }
                        if play.runners[1] && !play.runners[2] && rng.random::<f64>() < self.fly_second_to_third {
                            play.runners[1] = false;
                            play.runners[2] = true;
                        }
                    }
                }
            }
        }
        play.finish()
    }
}

/// Generates `n_events` plate appearances by playing consecutive
/// half-innings with `batter` at the plate under `model`.
pub fn synthetic_events(
    n_events: usize,
    seed: u64,
    batter: &AbilityVector,
    model: &AdvancementModel,
) -> Vec<TransitionEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cumulative: Vec<f64> = batter
        .components()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut events = Vec::with_capacity(n_events);
    let mut state = GameState::START;
    while events.len() < n_events {
        let u: f64 = rng.random::<f64>() * cumulative[7];
        let idx = cumulative.iter().position(|&c| u < c).unwrap_or(7);
        let outcome = Outcome::from_index(idx).unwrap();
        let t = model.advance(state, outcome, &mut rng);
        events.push(TransitionEvent {
            pre: state,
            outcome,
            post: t.post,
            runs: t.runs,
        });
        state = t.post.live().unwrap_or(GameState::START);
    }
    events
}

/// The bundled synthetic log: default size, seed, batter and model.
pub fn default_synthetic_events() -> Vec<TransitionEvent> {
    synthetic_events(
        DEFAULT_EVENT_COUNT,
        DEFAULT_EVENT_SEED,
        &league_average(),
        &AdvancementModel::default(),
    )
}
