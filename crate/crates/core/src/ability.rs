//! Batting ability vectors and the rate statistics derived from them.
//!
//! An [`AbilityVector`] is a discrete distribution over the eight plate
//! appearance outcomes. Everything else in this module is a closed-form
//! function of it: the strategy index `alpha`, wOBA, and an OBP/SLG pair.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transition::Outcome;

/// Sum tolerance for vectors built in code.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Sum tolerance for vectors read from files; accepted vectors are rescaled.
pub const FILE_SUM_TOLERANCE: f64 = 1e-6;
/// Maximum per-statistic residual accepted by [`fit_ability_vector`].
pub const FIT_TOLERANCE: f64 = 5e-3;
/// Sweep budget for [`fit_ability_vector`].
pub const FIT_MAX_SWEEPS: usize = 10_000;

pub const COMPONENT_NAMES: [&str; 8] = ["1b", "2b", "3b", "hr", "bb", "k", "g", "f"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbilityError {
    #[error("component `{name}` is negative or not finite: {value}")]
    NegativeComponent { name: &'static str, value: f64 },
    #[error("components sum to {sum}, expected 1")]
    SumNotOne { sum: f64 },
    #[error("vector has no out probability (k + g + f = 0)")]
    NoOutProbability,
    #[error("batter never reaches base; alpha is undefined")]
    ZeroDenominator,
    #[error("walk probability is 1; slugging is undefined")]
    AllWalks,
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("no valid vector meets the targets (max residual {max_residual:.5})")]
    Infeasible { max_residual: f64 },
}

pub type Result<T> = std::result::Result<T, AbilityError>;

/// Probability of each plate-appearance outcome for one batter.
///
/// Component order is single, double, triple, home run, walk/HBP, strikeout,
/// easy grounder out, easy fly out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VectorRepr", into = "VectorRepr")]
pub struct AbilityVector {
    p: [f64; 8],
}

impl AbilityVector {
    /// Checks the distribution invariants (non-negative, sums to one) without
    /// requiring out probability. Use [`validate`] for simulation inputs.
    pub fn try_new(p: [f64; 8]) -> Result<Self> {
        check_distribution(&p, SUM_TOLERANCE)?;
        Ok(Self { p })
    }

    /// Accepts a vector read from a file: sum tolerance is loosened to
    /// [`FILE_SUM_TOLERANCE`] and the vector is rescaled to sum to one.
    pub fn from_file_components(p: [f64; 8]) -> Result<Self> {
        let sum = check_distribution(&p, FILE_SUM_TOLERANCE)?;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            log::warn!("ability vector sums to {sum}; rescaling");
            let mut q = p;
            q.iter_mut().for_each(|x| *x /= sum);
            return Ok(Self { p: q });
        }
        Ok(Self { p })
    }

    pub fn components(&self) -> &[f64; 8] {
        &self.p
    }

    pub fn prob(&self, outcome: Outcome) -> f64 {
        self.p[outcome.index()]
    }

    pub fn single(&self) -> f64 {
        self.p[0]
    }
    pub fn double(&self) -> f64 {
        self.p[1]
    }
    pub fn triple(&self) -> f64 {
        self.p[2]
    }
    pub fn home_run(&self) -> f64 {
        self.p[3]
    }
    pub fn walk(&self) -> f64 {
        self.p[4]
    }
    pub fn strikeout(&self) -> f64 {
        self.p[5]
    }
    pub fn ground_out(&self) -> f64 {
        self.p[6]
    }
    pub fn fly_out(&self) -> f64 {
        self.p[7]
    }

    pub fn out_probability(&self) -> f64 {
        self.p[5] + self.p[6] + self.p[7]
    }

    /// Probability of any of the five positive events.
    pub fn on_base_probability(&self) -> f64 {
        self.p[..5].iter().sum()
    }

    /// Component-wise mixture `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &AbilityVector, lambda: f64) -> Result<AbilityVector> {
        let mut q = [0.0; 8];
        for (i, x) in q.iter_mut().enumerate() {
            *x = lambda * self.p[i] + (1.0 - lambda) * other.p[i];
        }
        AbilityVector::try_new(q)
    }

    /// Mean of a non-empty set of vectors.
    pub fn average(vectors: &[AbilityVector]) -> Result<AbilityVector> {
        if vectors.is_empty() {
            return Err(AbilityError::InvalidParameters(
                "cannot average an empty set".into(),
            ));
        }
        let mut q = [0.0; 8];
        for v in vectors {
            for (acc, x) in q.iter_mut().zip(v.p.iter()) {
                *acc += x;
            }
        }
        let n = vectors.len() as f64;
        q.iter_mut().for_each(|x| *x /= n);
        AbilityVector::try_new(q)
    }
}

fn check_distribution(p: &[f64; 8], tol: f64) -> Result<f64> {
    for (name, &value) in COMPONENT_NAMES.iter().zip(p.iter()) {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(AbilityError::NegativeComponent { name, value });
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(AbilityError::SumNotOne { sum });
    }
    Ok(sum)
}

/// Validates a raw 8-vector for use in simulation.
pub fn validate(p: [f64; 8]) -> Result<AbilityVector> {
    let v = AbilityVector::try_new(p)?;
    if v.out_probability() <= 0.0 {
        return Err(AbilityError::NoOutProbability);
    }
    Ok(v)
}

#[derive(Serialize, Deserialize)]
struct VectorRepr {
    #[serde(rename = "1b")]
    single: f64,
    #[serde(rename = "2b")]
    double: f64,
    #[serde(rename = "3b")]
    triple: f64,
    hr: f64,
    bb: f64,
    k: f64,
    g: f64,
    f: f64,
}

impl TryFrom<VectorRepr> for AbilityVector {
    type Error = AbilityError;

    fn try_from(r: VectorRepr) -> Result<Self> {
        AbilityVector::from_file_components([
            r.single, r.double, r.triple, r.hr, r.bb, r.k, r.g, r.f,
        ])
    }
}

impl From<AbilityVector> for VectorRepr {
    fn from(v: AbilityVector) -> Self {
        let [single, double, triple, hr, bb, k, g, f] = v.p;
        VectorRepr {
            single,
            double,
            triple,
            hr,
            bb,
            k,
            g,
            f,
        }
    }
}

/// Context-free run value of each positive outcome, used by [`alpha`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunValues {
    pub d_1b: f64,
    pub d_bb: f64,
    pub d_2b: f64,
    pub d_3b: f64,
    pub d_hr: f64,
}

impl Default for RunValues {
    fn default() -> Self {
        Self {
            d_1b: 0.437,
            d_bb: 0.294,
            d_2b: 0.786,
            d_3b: 1.117,
            d_hr: 1.408,
        }
    }
}

impl RunValues {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.d_1b, self.d_bb, self.d_2b, self.d_3b, self.d_hr]
            .iter()
            .all(|&x| x > 0.0 && x.is_finite());
        if !all_positive {
            return Err(AbilityError::InvalidParameters(
                "run values must be positive".into(),
            ));
        }
        if !(self.d_hr > self.d_3b && self.d_3b > self.d_2b && self.d_2b > self.d_1b) {
            return Err(AbilityError::InvalidParameters(
                "run values must satisfy hr > 3b > 2b > 1b".into(),
            ));
        }
        Ok(())
    }
}

/// Linear weights for wOBA, applied per plate appearance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WobaWeights {
    pub w_bb: f64,
    pub w_1b: f64,
    pub w_2b: f64,
    pub w_3b: f64,
    pub w_hr: f64,
}

impl Default for WobaWeights {
    fn default() -> Self {
        Self {
            w_bb: 0.692,
            w_1b: 0.865,
            w_2b: 1.334,
            w_3b: 1.725,
            w_hr: 2.065,
        }
    }
}

impl WobaWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.w_bb > 0.0
            && self.w_1b > 0.0
            && self.w_2b > self.w_1b
            && self.w_3b > self.w_2b
            && self.w_hr > self.w_3b
            && self.w_hr.is_finite();
        if !ok {
            return Err(AbilityError::InvalidParameters(
                "wOBA weights must be positive with hr > 3b > 2b > 1b".into(),
            ));
        }
        Ok(())
    }

    /// Weights laid out in ability-vector component order (outs weigh zero).
    pub fn as_component_weights(&self) -> [f64; 8] {
        [
            self.w_1b, self.w_2b, self.w_3b, self.w_hr, self.w_bb, 0.0, 0.0, 0.0,
        ]
    }
}

/// Share of a batter's run contribution that comes from singles and walks.
pub fn alpha(p: &AbilityVector, rv: &RunValues) -> Result<f64> {
    alpha_of(&p.p, rv).ok_or(AbilityError::ZeroDenominator)
}

/// `alpha` over raw components (first five entries are read).
pub(crate) fn alpha_of(p: &[f64], rv: &RunValues) -> Option<f64> {
    let num = rv.d_1b * p[0] + rv.d_bb * p[4];
    let den = num + rv.d_2b * p[1] + rv.d_3b * p[2] + rv.d_hr * p[3];
    (den > 0.0).then(|| num / den)
}

pub fn woba(p: &AbilityVector, w: &WobaWeights) -> f64 {
    woba_of(&p.p, w)
}

pub(crate) fn woba_of(p: &[f64], w: &WobaWeights) -> f64 {
    w.w_1b * p[0] + w.w_2b * p[1] + w.w_3b * p[2] + w.w_hr * p[3] + w.w_bb * p[4]
}

/// On-base and slugging rates. At-bats are every plate appearance except walks.
pub fn slash_stats(p: &AbilityVector) -> Result<(f64, f64)> {
    slash_of(&p.p).ok_or(AbilityError::AllWalks)
}

fn slash_of(p: &[f64]) -> Option<(f64, f64)> {
    let ab = 1.0 - p[4];
    if ab <= 0.0 {
        return None;
    }
    let obp = p[0] + p[1] + p[2] + p[3] + p[4];
    let slg = (p[0] + 2.0 * p[1] + 3.0 * p[2] + 4.0 * p[3]) / ab;
    Some((obp, slg))
}

/// Target rate statistics for [`fit_ability_vector`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlashTargets {
    pub obp: f64,
    pub slg: f64,
    pub woba: f64,
    pub alpha: f64,
}

impl SlashTargets {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(self.obp) && unit(self.woba) && unit(self.alpha) && (0.0..=4.0).contains(&self.slg))
        {
            return Err(AbilityError::InvalidParameters(format!(
                "slash targets out of range: {self:?}"
            )));
        }
        Ok(())
    }

    /// Statistics of an existing vector, in target form.
    pub fn of(p: &AbilityVector, rv: &RunValues, w: &WobaWeights) -> Result<Self> {
        let (obp, slg) = slash_stats(p)?;
        Ok(Self {
            obp,
            slg,
            woba: woba(p, w),
            alpha: alpha(p, rv)?,
        })
    }

    fn as_array(&self) -> [f64; 4] {
        [self.obp, self.slg, self.woba, self.alpha]
    }
}

/// Result of [`fit_ability_vector`], with per-statistic residuals
/// (fitted minus target, in obp/slg/woba/alpha order).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedVector {
    pub vector: AbilityVector,
    pub residuals: [f64; 4],
    pub sweeps: usize,
}

impl FittedVector {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

// Out mass kept in reserve so the fitted batter can always make an out.
const MIN_OUT_MASS: f64 = 1e-3;
const PRIOR_SCHEDULE: [f64; 9] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 0.0];

/// Recovers an ability vector from summary statistics.
///
/// The five positive-event probabilities are found by projected coordinate
/// descent on the squared target residuals plus a ridge pull towards the
/// league mix scaled to the target OBP. The ridge weight is annealed
/// towards zero and the search stops at the first stage whose residuals are
/// all within 80% of [`FIT_TOLERANCE`], so the result stays as close to the
/// league profile as the targets allow. Out mass is split across K/GO/FO in
/// league proportions.
pub fn fit_ability_vector(
    t: &SlashTargets,
    league: &AbilityVector,
    rv: &RunValues,
    w: &WobaWeights,
) -> Result<FittedVector> {
    t.validate()?;
    rv.validate()?;
    w.validate()?;
    if league.out_probability() <= 0.0 {
        return Err(AbilityError::NoOutProbability);
    }
    let target = t.as_array();
    let league_pos: f64 = league.on_base_probability();
    let prior: [f64; 5] = if league_pos > 0.0 {
        std::array::from_fn(|i| league.p[i] * t.obp / league_pos)
    } else {
        [t.obp / 5.0; 5]
    };
    let mut x = prior;
    let cap = 1.0 - MIN_OUT_MASS;
    let total: f64 = x.iter().sum();
    if total > cap {
        x.iter_mut().for_each(|v| *v *= cap / total);
    }

    let accept = 0.8 * FIT_TOLERANCE;
    let mut sweeps = 0;
    'stages: for &lambda in PRIOR_SCHEDULE.iter() {
        let objective = |x: &[f64; 5]| -> f64 {
            let r = residuals(x, &target, rv, w);
            let fit: f64 = r.iter().map(|v| v * v).sum();
            let ridge: f64 = x.iter().zip(prior.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            fit + lambda * ridge
        };
        let mut f = objective(&x);
        loop {
            if sweeps >= FIT_MAX_SWEEPS {
                break 'stages;
            }
            sweeps += 1;
            let before = f;
            for i in 0..5 {
                f = minimize_coordinate(&mut x, i, cap, f, &objective);
            }
            if max_abs(&residuals(&x, &target, rv, w)) <= accept && lambda > 0.0 {
                // Tolerance met while still anchored to the league mix.
                break 'stages;
            }
            if before - f <= 1e-18 + 1e-12 * before {
                break;
            }
        }
        if max_abs(&residuals(&x, &target, rv, w)) <= accept {
            break;
        }
    }

    let r = residuals(&x, &target, rv, w);
    let max_residual = max_abs(&r);
    if max_residual > FIT_TOLERANCE {
        return Err(AbilityError::Infeasible { max_residual });
    }
    let vector = assemble(&x, league)?;
    Ok(FittedVector {
        vector,
        residuals: r,
        sweeps,
    })
}

fn max_abs(r: &[f64; 4]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn residuals(x: &[f64; 5], target: &[f64; 4], rv: &RunValues, w: &WobaWeights) -> [f64; 4] {
    let (obp, slg) = slash_of(x).unwrap_or((x.iter().sum(), 0.0));
    let a = alpha_of(x, rv).unwrap_or(0.0);
    [
        obp - target[0],
        slg - target[1],
        woba_of(x, w) - target[2],
        a - target[3],
    ]
}

/// One projected Newton line search along coordinate `i`, bounded to keep
/// every component non-negative and the positive mass at most `cap`.
fn minimize_coordinate<F>(x: &mut [f64; 5], i: usize, cap: f64, f0: f64, objective: &F) -> f64
where
    F: Fn(&[f64; 5]) -> f64,
{
    let others: f64 = x.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
    let hi = (cap - others).max(0.0);
    let xi = x[i];
    let h = 1e-6;
    let eval = |x: &mut [f64; 5], v: f64| {
        let old = x[i];
        x[i] = v;
        let f = objective(x);
        x[i] = old;
        f
    };
    let fp = eval(x, xi + h);
    let fm = eval(x, xi - h);
    let g = (fp - fm) / (2.0 * h);
    let curv = (fp - 2.0 * f0 + fm) / (h * h);
    let mut step = if curv > 0.0 { -g / curv } else { -g.signum() * 1e-3 };
    let mut best = f0;
    for _ in 0..30 {
        let cand = (xi + step).clamp(0.0, hi);
        if cand == xi {
            break;
        }
        let fc = eval(x, cand);
        if fc < best {
            x[i] = cand;
            best = fc;
            break;
        }
        step *= 0.5;
    }
    best
}

fn assemble(x: &[f64; 5], league: &AbilityVector) -> Result<AbilityVector> {
    let out_mass = 1.0 - x.iter().sum::<f64>();
    let league_out = league.out_probability();
    let mut p = [0.0; 8];
    p[..5].copy_from_slice(x);
    for (pj, lj) in p[5..].iter_mut().zip(&league.p[5..]) {
        *pj = out_mass * lj / league_out;
    }
    validate(p)
}
