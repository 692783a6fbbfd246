use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use smp_passage::estimate::{estimate, estimate_passage, TransitionTrace};
use smp_passage::linalg::Matrix;
use smp_passage::model::{SmpModel, SojournDist};
use smp_passage::passage::{higher_moments, residual_tolerance, verify_model};
use smp_passage::random::{random_distribution_model, state_names, ua_states};
use smp_passage::sim::{simulate_trace, InitialState, SimConfig};

fn gamma_cycle() -> SmpModel {
    let p = Matrix::from_rows(&[[0.0, 0.6, 0.4], [0.5, 0.0, 0.5], [0.3, 0.7, 0.0]]).unwrap();
    let d = vec![
        vec![
            None,
            Some(SojournDist::gamma(2.0, 0.5)),
            Some(SojournDist::uniform(0.0, 2.0)),
        ],
        vec![
            Some(SojournDist::exponential(2.0)),
            None,
            Some(SojournDist::lognormal(0.0, 0.3)),
        ],
        vec![
            Some(SojournDist::deterministic(1.5)),
            Some(SojournDist::gamma(1.0, 1.0)),
            None,
        ],
    ];
    SmpModel::with_distributions(state_names(3), p, d)
}

#[test]
fn csv_trace_survives_the_file_round_trip() {
    let model = gamma_cycle();
    let mut cfg = SimConfig::new(5, 40);
    cfg.max_transitions = 25;
    let trace = simulate_trace(&model, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    trace.write_csv_path(&path).unwrap();
    let back = TransitionTrace::read_csv_path(&path, 3).unwrap();
    assert_eq!(back, trace);
}

#[test]
fn estimated_passage_moments_converge_to_exact_ones() {
    let model = gamma_cycle();
    let exact = higher_moments(&model, 0, 2).unwrap();
    let mut cfg = SimConfig::new(11, 20_000);
    cfg.max_transitions = 50;
    cfg.initial = InitialState::Distribution(vec![1.0, 1.0, 1.0]);
    let est = estimate(&simulate_trace(&model, &cfg).unwrap(), 3, 2).unwrap();
    let pm = estimate_passage(&est, 0, 2).unwrap();
    for r in 0..2 {
        for i in 0..3 {
            let rel = (pm.mu[r][i] - exact.mu[r][i]).abs() / exact.mu[r][i];
            assert!(rel < 0.02, "order {} state {i}: {rel}", r + 1);
        }
    }
}

#[test]
fn model_files_round_trip_field_for_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dir = tempfile::tempdir().unwrap();
    for k in 0..20 {
        let model = random_distribution_model(&mut rng, 2 + k % 5, 0.6);
        let path = dir.path().join(format!("m{k}.json"));
        model.write(&path).unwrap();
        assert_eq!(SmpModel::read(&path).unwrap(), model);

        let lowered = SmpModel::with_moments(
            model.state_names.clone(),
            model.p.clone(),
            model.moment_set(3).unwrap().orders,
        );
        lowered.write(&path).unwrap();
        assert_eq!(SmpModel::read(&path).unwrap(), lowered);
    }
}

#[test]
fn lowered_models_give_identical_passage_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..30 {
        let model = random_distribution_model(&mut rng, 2 + k % 6, 0.5);
        let Some(&j) = ua_states(&model.p).last() else {
            continue;
        };
        let lowered = SmpModel::with_moments(
            model.state_names.clone(),
            model.p.clone(),
            model.moment_set(3).unwrap().orders,
        );
        let a = higher_moments(&model, j, 3).unwrap();
        let b = higher_moments(&lowered, j, 3).unwrap();
        assert_eq!(a, b);
        assert!(verify_model(&model, &a).unwrap() <= residual_tolerance(&a));
    }
}
