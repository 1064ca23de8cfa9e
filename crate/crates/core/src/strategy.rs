//! Strategy policies and per-batter strategy triples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ability::{alpha, AbilityError, AbilityVector, RunValues};
use crate::converter::{convert, ConverterError, ConverterParams};
use crate::transition::{GameState, RunExpectancyTable};

/// Slack allowed on the alpha ordering of a triple before it is flagged.
pub const ORDERING_SLACK: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("thresholds must satisfy theta_l < theta_o (got theta_o={theta_o}, theta_l={theta_l})")]
    InvalidThresholds { theta_o: f64, theta_l: f64 },
    #[error("d_alpha must be >= 0 and d_woba <= 0 (got d_alpha={d_alpha}, d_woba={d_woba})")]
    InvalidTripleRequest { d_alpha: f64, d_woba: f64 },
    #[error(transparent)]
    Converter(#[from] ConverterError),
    #[error(transparent)]
    Ability(#[from] AbilityError),
}

pub type Result<T> = std::result::Result<T, StrategyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyChoice {
    Normal,
    OnBase,
    LongHit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicyConfig {
    pub theta_o: f64,
    pub theta_l: f64,
}

impl ThresholdPolicyConfig {
    pub fn new(theta_o: f64, theta_l: f64) -> Result<Self> {
        let cfg = Self { theta_o, theta_l };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_l < self.theta_o {
            Ok(())
        } else {
            Err(StrategyError::InvalidThresholds {
                theta_o: self.theta_o,
                theta_l: self.theta_l,
            })
        }
    }
}

/// On-base when nobody is out or a runner is in scoring position; long hit
/// with two outs and nobody in scoring position.
pub fn fixed_policy(s: GameState) -> StrategyChoice {
    let scoring = s.runner_on_second_or_third();
    if s.outs() == 0 || scoring {
        StrategyChoice::OnBase
    } else if s.outs() == 2 {
        StrategyChoice::LongHit
    } else {
        StrategyChoice::Normal
    }
}

pub fn threshold_policy(cfg: &ThresholdPolicyConfig, re: &RunExpectancyTable, s: GameState) -> Result<StrategyChoice> {
    cfg.validate()?;
    Ok(threshold_choice(cfg, re.get(s)))
}

fn threshold_choice(cfg: &ThresholdPolicyConfig, re: f64) -> StrategyChoice {
    if re >= cfg.theta_o {
        StrategyChoice::OnBase
    } else if re <= cfg.theta_l {
        StrategyChoice::LongHit
    } else {
        StrategyChoice::Normal
    }
}

/// A policy ready for simulation. Threshold decisions are precomputed per
/// live state.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    NormalOnly,
    Fixed,
    Threshold {
        config: ThresholdPolicyConfig,
        choices: [StrategyChoice; 24],
    },
}

impl Policy {
    pub fn threshold(config: ThresholdPolicyConfig, re: &RunExpectancyTable) -> Result<Self> {
        config.validate()?;
        let mut choices = [StrategyChoice::Normal; 24];
        for s in GameState::all() {
            choices[s.index()] = threshold_choice(&config, re.get(s));
        }
        Ok(Policy::Threshold { config, choices })
    }

    #[inline]
    pub fn choose(&self, s: GameState) -> StrategyChoice {
        match self {
            Policy::NormalOnly => StrategyChoice::Normal,
            Policy::Fixed => fixed_policy(s),
            Policy::Threshold { choices, .. } => choices[s.index()],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::NormalOnly => "normal-only",
            Policy::Fixed => "fixed",
            Policy::Threshold { .. } => "threshold",
        }
    }
}

/// A batter's normal, on-base and long-hit ability vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyTriple {
    pub normal: AbilityVector,
    pub on_base: AbilityVector,
    pub long_hit: AbilityVector,
    /// Set when the alpha ordering long-hit <= normal <= on-base is
    /// violated by more than [`ORDERING_SLACK`].
    #[serde(default)]
    pub flagged: bool,
}

impl StrategyTriple {
    /// All three strategies identical.
    pub fn degenerate(p: AbilityVector) -> Self {
        Self {
            normal: p,
            on_base: p,
            long_hit: p,
            flagged: false,
        }
    }

    pub fn get(&self, c: StrategyChoice) -> &AbilityVector {
        match c {
            StrategyChoice::Normal => &self.normal,
            StrategyChoice::OnBase => &self.on_base,
            StrategyChoice::LongHit => &self.long_hit,
        }
    }

    /// Alphas of (long-hit, normal, on-base).
    pub fn alphas(&self, rv: &RunValues) -> Result<[f64; 3]> {
        Ok([alpha(&self.long_hit, rv)?, alpha(&self.normal, rv)?, alpha(&self.on_base, rv)?])
    }

    pub fn ordering_violation(&self, rv: &RunValues) -> Result<f64> {
        let [l, n, o] = self.alphas(rv)?;
        Ok((l - n).max(n - o).max(0.0))
    }
}

/// Converts `p_n` to an on-base vector at `+d_alpha` and a long-hit vector
/// at `-d_alpha`, both at wOBA cost `d_woba`.
pub fn build_triple(
    p_n: &AbilityVector,
    d_alpha: f64,
    d_woba: f64,
    params: &ConverterParams,
    rv: &RunValues,
) -> Result<StrategyTriple> {
    if !(d_alpha >= 0.0 && d_woba <= 0.0) {
        return Err(StrategyError::InvalidTripleRequest { d_alpha, d_woba });
    }
    let mut triple = StrategyTriple {
        normal: *p_n,
        on_base: convert(params, p_n, d_alpha, d_woba)?,
        long_hit: convert(params, p_n, -d_alpha, d_woba)?,
        flagged: false,
    };
    triple.flagged = triple.ordering_violation(rv)? > ORDERING_SLACK;
    Ok(triple)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ability::validate;

    fn st(outs: u8, bases: u8) -> GameState {
        GameState::new(outs, bases).unwrap()
    }

    #[test]
    fn fixed_policy_examples() {
        assert_eq!(fixed_policy(st(0, 0)), StrategyChoice::OnBase);
        assert_eq!(fixed_policy(st(2, 1)), StrategyChoice::LongHit);
        assert_eq!(fixed_policy(st(1, 1)), StrategyChoice::Normal);
    }

    #[test]
    fn fixed_policy_exhaustive() {
        for s in GameState::all() {
            let second = s.bases() & 0b010 != 0;
            let third = s.bases() & 0b100 != 0;
            let expected = if s.outs() == 0 || second || third {
                StrategyChoice::OnBase
            } else if s.outs() == 2 {
                StrategyChoice::LongHit
            } else {
                StrategyChoice::Normal
            };
            assert_eq!(fixed_policy(s), expected, "{s}");
            assert_eq!(Policy::Fixed.choose(s), expected);
        }
    }

    #[test]
    fn threshold_policy_examples() {
        let cfg = ThresholdPolicyConfig::new(1.057, 0.306).unwrap();
        let mut v = [0.0; 24];
        v[0] = 1.2;
        v[1] = 0.5;
        v[2] = 0.306;
        let re = RunExpectancyTable::from_values(v);
        assert_eq!(threshold_policy(&cfg, &re, st(0, 0)).unwrap(), StrategyChoice::OnBase);
        assert_eq!(threshold_policy(&cfg, &re, st(0, 1)).unwrap(), StrategyChoice::Normal);
        assert_eq!(threshold_policy(&cfg, &re, st(0, 2)).unwrap(), StrategyChoice::LongHit);
        let bad = ThresholdPolicyConfig { theta_o: 0.3, theta_l: 0.3 };
        assert!(matches!(threshold_policy(&bad, &re, st(0, 0)), Err(StrategyError::InvalidThresholds { .. })));
        assert!(ThresholdPolicyConfig::new(0.2, 0.5).is_err());
    }

    #[test]
    fn infinite_thresholds_are_normal_everywhere() {
        let cfg = ThresholdPolicyConfig::new(f64::INFINITY, f64::NEG_INFINITY).unwrap();
        let re = RunExpectancyTable::from_values(std::array::from_fn(|i| i as f64 * 0.1));
        let policy = Policy::threshold(cfg, &re).unwrap();
        for s in GameState::all() {
            assert_eq!(policy.choose(s), StrategyChoice::Normal);
        }
    }

    #[test]
    fn build_triple_examples() {
        let rv = RunValues::default();
        let p = validate([0.15, 0.05, 0.005, 0.03, 0.08, 0.18, 0.30, 0.205]).unwrap();
        let zero = ConverterParams::zeros();
        let t = build_triple(&p, 0.0, 0.0, &zero, &rv).unwrap();
        assert_eq!(t, StrategyTriple::degenerate(p));
        assert!(matches!(
            build_triple(&p, 0.1, 0.01, &zero, &rv),
            Err(StrategyError::InvalidTripleRequest { .. })
        ));
        assert!(build_triple(&p, -0.1, 0.0, &zero, &rv).is_err());
    }

    #[test]
    fn flags_reversed_ordering() {
        let rv = RunValues::default();
        let slap = validate([0.25, 0.02, 0.0, 0.0, 0.10, 0.15, 0.30, 0.18]).unwrap();
        let power = validate([0.10, 0.06, 0.0, 0.06, 0.10, 0.28, 0.20, 0.20]).unwrap();
        let t = StrategyTriple {
            normal: slap,
            on_base: power,
            long_hit: slap,
            flagged: false,
        };
        assert!(t.ordering_violation(&rv).unwrap() > ORDERING_SLACK);
        let ok = StrategyTriple {
            normal: slap,
            on_base: slap,
            long_hit: power,
            flagged: false,
        };
        assert_eq!(ok.ordering_violation(&rv).unwrap(), 0.0);
    }
}
