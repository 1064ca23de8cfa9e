use batsim_core::ability::{fit_ability_vector, SlashTargets};
use batsim_core::simulator::{monte_carlo, Lineup, RunStats};
use batsim_core::strategy::{Policy, StrategyTriple, ThresholdPolicyConfig};
use batsim_core::synth::{default_synthetic_events, league_average};
use batsim_core::transition::{build_table, run_expectancy};
use batsim_core::{validate, AbilityVector, GameState, RunValues, TransitionTable, WobaWeights};

const TABLE1: [(f64, f64, f64, f64); 9] = [
    (0.337, 0.377, 0.320, 0.64),
    (0.324, 0.369, 0.310, 0.65),
    (0.393, 0.476, 0.383, 0.54),
    (0.360, 0.464, 0.363, 0.50),
    (0.335, 0.411, 0.331, 0.59),
    (0.329, 0.408, 0.327, 0.58),
    (0.316, 0.369, 0.307, 0.58),
    (0.288, 0.331, 0.278, 0.63),
    (0.292, 0.308, 0.273, 0.68),
];

fn table1_vectors() -> Vec<AbilityVector> {
    let (rv, w) = (RunValues::default(), WobaWeights::default());
    TABLE1
        .iter()
        .map(|&(obp, slg, woba, alpha)| {
            fit_ability_vector(&SlashTargets { obp, slg, woba, alpha }, &league_average(), &rv, &w)
                .unwrap()
                .vector
        })
        .collect()
}

fn combined(a: &RunStats, b: &RunStats) -> f64 {
    (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let table = build_table(&default_synthetic_events()).unwrap();
    let lineup = Lineup::normal(&table1_vectors()).unwrap();
    let one = monte_carlo(&lineup, &Policy::Fixed, &table, 20_000, 99, 1).unwrap();
    for workers in [2, 3, 8] {
        assert_eq!(monte_carlo(&lineup, &Policy::Fixed, &table, 20_000, 99, workers).unwrap(), one);
    }
}

#[test]
fn histogram_mass_and_mean() {
    let table = build_table(&default_synthetic_events()).unwrap();
    let lineup = Lineup::normal(&table1_vectors()).unwrap();
    let s = monte_carlo(&lineup, &Policy::NormalOnly, &table, 10_000, 4, 1).unwrap();
    assert_eq!(s.histogram.iter().sum::<u64>(), s.n);
    let total: u64 = s.histogram.iter().enumerate().map(|(r, &c)| r as u64 * c).sum();
    assert_eq!(total as f64 / s.n as f64, s.mean);
}

#[test]
fn memoryless_game_mean_is_nine_half_innings() {
    let hr_k = validate([0.0, 0.0, 0.0, 0.1, 0.0, 0.9, 0.0, 0.0]).unwrap();
    let cases = [
        (hr_k, TransitionTable::simple()),
        (league_average(), build_table(&default_synthetic_events()).unwrap()),
    ];
    for (b, table) in cases {
        let expected = 9.0 * run_expectancy(&table, &b).unwrap().get(GameState::START);
        let s = monte_carlo(&Lineup::uniform(b), &Policy::NormalOnly, &table, 100_000, 21, 1).unwrap();
        assert!((s.mean - expected).abs() <= 3.0 * s.stderr, "{} vs {expected} (se {})", s.mean, s.stderr);
    }
}

#[test]
fn more_home_runs_score_more_runs() {
    let table = build_table(&default_synthetic_events()).unwrap();
    let base = table1_vectors();
    let boosted: Vec<AbilityVector> = base
        .iter()
        .map(|v| {
            let mut p = *v.components();
            p[3] += 0.02;
            p[5] -= 0.02;
            validate(p).unwrap()
        })
        .collect();
    let a = monte_carlo(&Lineup::normal(&base).unwrap(), &Policy::NormalOnly, &table, 100_000, 8, 1).unwrap();
    let b = monte_carlo(&Lineup::normal(&boosted).unwrap(), &Policy::NormalOnly, &table, 100_000, 8, 1).unwrap();
    assert!(b.mean - a.mean > 3.0 * combined(&a, &b), "{} -> {}", a.mean, b.mean);
}

#[test]
fn degenerate_triples_match_the_baseline_under_any_policy() {
    let table = build_table(&default_synthetic_events()).unwrap();
    let vectors = table1_vectors();
    let lineup = Lineup::new(vectors.iter().copied().map(StrategyTriple::degenerate).collect(), &RunValues::default())
        .unwrap();
    let re = run_expectancy(&table, &AbilityVector::average(&vectors).unwrap()).unwrap();
    let base = monte_carlo(&lineup, &Policy::NormalOnly, &table, 20_000, 13, 1).unwrap();
    let policies = [
        Policy::Fixed,
        Policy::threshold(ThresholdPolicyConfig::new(1.057, 0.306).unwrap(), &re).unwrap(),
    ];
    for p in policies {
        let s = monte_carlo(&lineup, &p, &table, 20_000, 13, 1).unwrap();
        assert!((s.mean - base.mean).abs() <= 2.0 * combined(&s, &base));
    }
}

#[test]
fn lineup_rejects_unflagged_reversed_triples() {
    let rv = RunValues::default();
    let slap = validate([0.25, 0.02, 0.0, 0.0, 0.10, 0.15, 0.30, 0.18]).unwrap();
    let power = validate([0.10, 0.06, 0.0, 0.06, 0.10, 0.28, 0.20, 0.20]).unwrap();
    let reversed = StrategyTriple {
        normal: slap,
        on_base: power,
        long_hit: slap,
        flagged: false,
    };
    assert!(Lineup::new(vec![reversed; 9], &rv).is_err());
    let flagged = StrategyTriple { flagged: true, ..reversed };
    assert!(Lineup::new(vec![flagged; 9], &rv).is_ok());
}
