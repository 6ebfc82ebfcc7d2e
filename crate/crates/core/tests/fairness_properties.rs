use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use score_audit_core::fairness::{
    age_distribution_by_race, fit_logistic, group_confusion_rates, race_rates, recid_probability_vs_age, RiskRule,
};
use score_audit_core::linalg::Matrix;
use score_audit_core::ml::linear::{gradient, log_likelihood};
use score_audit_core::profile::build_profiles;
use score_audit_core::records::{Race, ScoreKind};
use score_audit_core::subscales::SubscaleConfig;
use score_audit_core::synthoracle::{generate, RaceShare, SyntheticSpec};

proptest! {
    #[test]
    fn rates_complement_exactly(
        rows in prop::collection::vec((any::<bool>(), any::<bool>(), 0usize..4), 1..300),
        folds in 1usize..12,
        seed in any::<u64>(),
    ) {
        let pred: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let lab: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let grp: Vec<String> = rows.iter().map(|r| format!("g{}", r.2)).collect();
        let rates = group_confusion_rates(&pred, &lab, &grp, folds, seed).unwrap();
        for r in &rates {
            prop_assert!(r.identities_hold());
        }
        let pooled: u64 = rates.iter().filter(|r| r.fold.is_none()).map(|r| r.counts.total()).sum();
        prop_assert_eq!(pooled, rows.len() as u64);
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (n, d) = (50, 4);
    let data: Vec<f64> = (0..n)
        .flat_map(|_| {
            let mut row = vec![1.0];
            row.extend((1..d).map(|_| rng.random_range(-2.0..2.0)));
            row
        })
        .collect();
    let x = Matrix::from_rows(n, d, data);
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
    let beta = [0.3, -0.7, 0.2, 1.1];
    let g = gradient(&x, &y, &beta);
    let h = 1e-5;
    for j in 0..d {
        let (mut hi, mut lo) = (beta, beta);
        hi[j] += h;
        lo[j] -= h;
        let fd = (log_likelihood(&x, &y, &hi) - log_likelihood(&x, &y, &lo)) / (2.0 * h);
        let rel = (g[j] - fd).abs() / fd.abs().max(1e-12);
        assert!(rel < 1e-5, "coordinate {j}: analytic {} vs {fd}", g[j]);
    }
}

#[test]
fn logistic_fit_reaches_a_stationary_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let n = 400;
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x1
        .iter()
        .map(|&v| (rng.random::<f64>() < 1.0 / (1.0 + (-(0.5 + 1.5 * v)).exp())) as u8 as f64)
        .collect();
    let x = Matrix::from_rows(n, 1, x1);
    let fit = fit_logistic(vec!["x1".into()], &x, &y).unwrap();
    assert!(fit.gradient_norm < 1e-6);
    let (b, se) = fit.coefficient("x1").unwrap();
    assert!((b - 1.5).abs() < 3.0 * se, "{b} ± {se}");
}

#[test]
fn recidivism_falls_with_age_in_a_decreasing_hazard_cohort() {
    let mut spec = SyntheticSpec::default();
    spec.seed = 52;
    spec.population.recid_history_weight = 0.0;
    let c = generate(&spec, 5000).unwrap();
    let rows = build_profiles(&c.dataset, &SubscaleConfig::default());
    let curve = recid_probability_vs_age(&rows, ScoreKind::General, 3);
    let at = |a: u32| curve.iter().find(|p| p.age == a).unwrap().proportion;
    // Windows of 7 ages; compare well-separated windows to stay above noise.
    assert!(at(21) > at(35));
    assert!(at(35) > at(55));
}

#[test]
fn shifted_ages_move_the_group_median() {
    let mut spec = SyntheticSpec::default();
    spec.seed = 53;
    spec.population.races = vec![
        RaceShare {
            race: Race::AfricanAmerican,
            share: 0.5,
            age_shift: 0.0,
        },
        RaceShare {
            race: Race::Caucasian,
            share: 0.5,
            age_shift: 6.0,
        },
    ];
    let c = generate(&spec, 4000).unwrap();
    let rows = build_profiles(&c.dataset, &SubscaleConfig::default());
    let dist = age_distribution_by_race(&rows, ScoreKind::General);
    let med = |r: Race| dist.iter().find(|d| d.race == r).unwrap().median;
    let gap = med(Race::Caucasian) - med(Race::AfricanAmerican);
    assert!((4.0..=8.0).contains(&gap), "{gap}");
    for d in &dist {
        let total: f64 = d.histogram.iter().map(|h| h.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ten_fold_rates_for_each_race() {
    let mut spec = SyntheticSpec::default();
    spec.seed = 54;
    let c = generate(&spec, 2000).unwrap();
    let rows = build_profiles(&c.dataset, &SubscaleConfig::default());
    let rates = race_rates(&rows, RiskRule::Age { cutoff: 24 }, 10, 1).unwrap();
    let groups: std::collections::BTreeSet<&str> = rates.iter().map(|r| r.group.as_str()).collect();
    assert_eq!(rates.len(), groups.len() * 11);
    assert!(rates.iter().all(|r| r.identities_hold()));
}
