use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdpp::engine::{self, RunConfig, RunState};
use sdpp::experiment::{ExperimentConfig, Setup};
use sdpp::graph::{self, NetworkTopology, WeightParams, WeightSystem};
use sdpp::privacy::{self, NoNoise, PrivacyBudget};
use sdpp::problem::{self, RidgeInstance};

fn preset() -> Setup {
    Setup::build(&ExperimentConfig::ridge5()).unwrap()
}

/// Agent `i`'s sample redrawn from `seed`.
fn perturbed(instance: &RidgeInstance, agent: usize, seed: u64) -> RidgeInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..instance.p).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let v = u.iter().zip(&instance.anchors[agent]).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-3.0..3.0);
    instance.with_sample(agent, u, v).unwrap()
}

#[test]
fn coupled_replay_keeps_messages_and_matches_recursion() {
    let setup = preset();
    let k = 50;
    let other = perturbed(&setup.instance, 2, 99).suite().unwrap();
    let reference = setup.noise_free(k, true).unwrap();
    let c = problem::estimate_gradient_bound(&setup.suite, reference.iterates.as_deref().unwrap(), 2.0).unwrap();
    let budget = PrivacyBudget::uniform(5, 1.0, k, c, 10, 1e-6).unwrap();
    let mut noise = budget.streams(3).unwrap();
    let replay =
        privacy::replay_adjacent(&setup.weights, &setup.suite, &other, 2, &mut noise, setup.initial.clone(), k)
            .unwrap();
    assert!(replay.observation_gap <= 1e-9 * replay.observation_scale, "{}", replay.observation_gap);
    let calibrated = privacy::verify_sensitivity(&replay.run_1, &replay.run_2, 0.5, k, c).unwrap();
    assert_eq!(calibrated.agent, Some(2));
    // noise pushes the iterates far past the region the noise-free estimate covers
    assert!(!calibrated.gradient_bound_holds);
    let c = calibrated.max_gradient_norm;
    let report = privacy::verify_sensitivity(&replay.run_1, &replay.run_2, 0.5, k, c).unwrap();
    assert!(report.gradient_bound_holds && report.max_step_ratio <= 1.0);
    // realised gaps cover k = 0..K-1 (zero at k = 0); the recursion covers k = 1..K
    let realised = replay.realised_l1();
    assert_eq!(replay.noise_gap[0].amax(), 0.0);
    let shorter = privacy::verify_sensitivity(&replay.run_1, &replay.run_2, 0.5, k - 1, c).unwrap();
    assert!((realised - shorter.total_l1).abs() <= 1e-9 * shorter.total_l1, "{realised} vs {}", shorter.total_l1);
    assert!(realised < report.total_l1);
    assert!(report.passes, "{report:?}");
}

#[test]
fn replay_rejects_out_of_range_agent() {
    let setup = preset();
    let res = privacy::replay_adjacent(
        &setup.weights,
        &setup.suite,
        &setup.suite,
        7,
        &mut NoNoise,
        setup.initial.clone(),
        3,
    );
    assert!(res.is_err());
}

#[test]
fn noise_free_and_baseline_reach_the_optimum() {
    // well-conditioned: more agents than dimensions
    let topo = NetworkTopology::directed_ring(6).unwrap();
    let ws = WeightSystem::from_topology(&topo, &WeightParams::uniform(6, 1.0, 0.1, 1.0, 0.5)).unwrap();
    let (_, suite) = problem::generate_ridge(6, 2, 0.2, 4).unwrap();
    let x0 = RunState::uniform(6, 2, 4, 0.05).unwrap();
    let sd = engine::run(&ws, &suite, &mut NoNoise, x0.clone(), &RunConfig::new(6000)).unwrap();
    let plain = graph::build_plain_push_matrix(&topo, 1.0).unwrap();
    let base = engine::run_baseline_push_pull(&ws.r, &plain, &suite, x0.x, 0.05, 6000).unwrap();
    assert!(*sd.trace.residual.last().unwrap() < 1e-10);
    assert!(*base.residual.last().unwrap() < 1e-10);
    // different dynamics, same destination
    assert_ne!(sd.trace.residual[10], base.residual[10]);
}

#[test]
fn baseline_with_zero_horizon_is_trivial() {
    let setup = preset();
    let plain = graph::build_plain_push_matrix(&setup.topology, 1.0).unwrap();
    let t = engine::run_baseline_push_pull(&setup.weights.r, &plain, &setup.suite, setup.initial.x.clone(), 0.01, 0)
        .unwrap();
    assert_eq!(t.residual, vec![1.0]);
}

#[test]
fn observation_log_matches_transmitted_quantities() {
    let setup = preset();
    let budget = PrivacyBudget::uniform(5, 1.0, 10, 1.0, 10, 1e-6).unwrap();
    let mut noise = budget.streams(1).unwrap();
    let cfg = RunConfig {
        record_observations: true,
        record_iterates: true,
        ..RunConfig::new(10)
    };
    let out = engine::run(&setup.weights, &setup.suite, &mut noise, setup.initial.clone(), &cfg).unwrap();
    let obs = out.observations.unwrap();
    let edges: Vec<_> = setup.topology.edges().collect();
    for round in &obs {
        // one pull and one push per directed edge
        assert_eq!(round.pulled.len(), edges.len());
        assert_eq!(round.pushed.len(), edges.len());
        for m in &round.pushed {
            assert!(setup.weights.ctilde[(m.to, m.from)] > 0.0);
        }
    }
    // the pull payload reconstructs x_{k+1} through R
    let x1 = &out.iterates.as_ref().unwrap()[1];
    let first = &obs[0];
    for i in 0..5 {
        let mut acc = [0.0; 10];
        let mut own = None;
        for m in first.pulled.iter().filter(|m| m.to == i) {
            for (a, x) in acc.iter_mut().zip(&m.payload) {
                *a += setup.weights.r[(i, m.from)] * x;
            }
        }
        for m in first.pulled.iter().filter(|m| m.from == i) {
            own = Some(m.payload.clone());
        }
        let own = own.expect("every agent is pulled from");
        for r in 0..10 {
            let x = acc[r] + setup.weights.r[(i, i)] * own[r];
            assert!((x - x1[(i, r)]).abs() <= 1e-9 * x1[(i, r)].abs().max(1.0));
        }
    }
}

#[test]
fn noise_free_residual_settles_into_monotone_decrease() {
    let setup = preset();
    let out = setup.noise_free(3000, false).unwrap();
    let r = &out.trace.residual;
    let k0 = (1..r.len()).rev().find(|&k| r[k] > r[k - 1]).map_or(0, |k| k);
    assert!(k0 <= 100, "last increase at k = {k0}");
}

#[test]
fn starting_at_optimum_gives_guidance() {
    let setup = preset();
    let mut x0 = setup.initial.x.clone();
    let x_star = setup.suite.x_star().unwrap();
    x0.row_mut(3).copy_from(&x_star.transpose());
    let err = engine::run(&setup.weights, &setup.suite, &mut NoNoise, RunState::new(x0, 0.01).unwrap(), &RunConfig::new(1))
        .unwrap_err();
    assert!(err.to_string().contains("agent 4"));
}
