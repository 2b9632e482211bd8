//! Statistical and algebraic oracles for sampling, transforms and evaluation.

use epigraph::epi::InfectionState;
use epigraph::eval::{evaluate_model, DummyEstimator};
use epigraph::metapop::NodePopulation;
use epigraph::scenario::{
    generate_dataset, inverse_log1p, read_dataset, sample_change_points, sample_outbreak_init, sample_persistent_init,
    transform_log1p, Regime, ScenarioConfig, CHANGE_WINDOW,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn outbreak_symptomatic_mean_per_100k() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let node = NodePopulation::new(100_000.0);
    let draws = 10_000;
    let total: f64 = (0..draws)
        .map(|_| sample_outbreak_init(&mut rng, &node).unwrap().state_total(InfectionState::InfectedSymptoms))
        .sum();
    let mean = total / draws as f64;
    assert!((mean - 53.5).abs() < 2.0, "mean {mean}");
}

#[test]
fn change_point_count_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let draws = 100_000;
    let mut total = 0usize;
    for _ in 0..draws {
        let cps = sample_change_points(&mut rng, 3, CHANGE_WINDOW);
        assert!(cps.windows(2).all(|w| w[0].day < w[1].day));
        assert!(cps.iter().all(|c| (1.0..=30.0).contains(&c.day) && (0.0..1.0).contains(&c.reduction)));
        total += cps.len();
    }
    let mean = total as f64 / draws as f64;
    assert!((mean - 1.5).abs() < 0.02, "mean {mean}");
}

#[test]
fn persistent_shares_are_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10_000 {
        let node = NodePopulation::new(rng.random_range(1e3..1e6));
        let s = sample_persistent_init(&mut rng, &node).unwrap();
        assert!(s.min_value() >= 0.0);
        let share = s.total() / node.population;
        assert!((share - 1.0).abs() < 1e-12, "share {share}");
    }
}

#[test]
fn log1p_round_trip_on_a_million_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000_000 {
        let x: f64 = 10f64.powf(rng.random_range(-6.0..8.0));
        let back = inverse_log1p(transform_log1p(x).unwrap());
        worst = worst.max((back - x).abs() / x);
    }
    assert!(worst < 1e-12, "worst {worst}");
}

#[test]
fn per_node_mape_weights_to_overall() {
    let mut config = ScenarioConfig::new(Regime::PersistentThreat, 30, true, 12, 15);
    config.graph.n = 6;
    let mut bytes = Vec::new();
    generate_dataset(&config, &mut bytes).unwrap();
    let data = read_dataset(bytes.as_slice()).unwrap();
    let dummy = DummyEstimator::fit_dataset(&data.subset(&(0..8).collect::<Vec<_>>())).unwrap();
    let report = evaluate_model(&dummy, &data.subset(&(8..12).collect::<Vec<_>>())).unwrap();
    let (weighted, count) = report
        .per_node
        .iter()
        .fold((0.0, 0usize), |(s, c), n| (s + n.mape.unwrap() * n.participating as f64, c + n.participating));
    assert_eq!(count, report.overall.participating);
    let overall = report.overall.mape.unwrap();
    assert!((weighted / count as f64 - overall).abs() < 1e-9);
}
