mod common;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rapql::env::{Env, EnvState};
use rapql::features::{FeatureMode, FeatureSchema};
use rapql::learner::{backup_sweeps, initial_value, Learner, LearnerConfig, TemperatureSchedule, TrainOptions};
use rapql::rap::{RapInstance, StateDist, StateId};
use rapql::store::HashQTable;
use rapql::svr::{kernel, train, SvrParams, TrainingSample};

use common::{best_policy_by_enumeration, dual_oracle, enumerable_corpus, makespan_env, policy_value, ValueOracle};

fn swept_store(env: &Env, schema: &FeatureSchema) -> HashQTable {
    let mut store = HashQTable::with_default_budget(schema.radices().to_vec());
    backup_sweeps(env, schema, &mut store, 1.0, 1);
    store
}

fn exploring_config(episodes: usize, seed: u64) -> LearnerConfig {
    LearnerConfig {
        discount: 1.0,
        temperature: TemperatureSchedule { tau0: 1e3, decay: 1.0, floor: 1e3, ..TemperatureSchedule::default() },
        episodes,
        warmup: 0,
        seed,
        ..LearnerConfig::default()
    }
}

#[test]
fn tabular_backups_match_value_iteration() {
    for (name, inst) in enumerable_corpus() {
        let env = makespan_env(inst.clone(), false);
        let schema = FeatureSchema::new(inst, FeatureMode::Packed);
        let store = swept_store(&env, &schema);
        let exact = ValueOracle::new(&env).initial();
        let got = initial_value(&env, &schema, &store);
        assert!((got - exact).abs() < 1e-6, "{name}: {got} vs {exact}");
    }
}

#[test]
fn greedy_policy_is_optimal_among_all_policies() {
    for (name, inst) in enumerable_corpus() {
        let env = makespan_env(inst.clone(), false);
        let schema = FeatureSchema::new(inst, FeatureMode::Packed);
        let store = swept_store(&env, &schema);
        let learner = Learner::new(env.clone(), schema, LearnerConfig { discount: 1.0, ..LearnerConfig::default() }).unwrap();
        let greedy = policy_value(&env, &|x: &EnvState| learner.greedy_action(&store, x).unwrap());
        let best = best_policy_by_enumeration(&env, 2_000_000).expect("corpus instances are enumerable");
        assert!((greedy - best).abs() < 1e-9, "{name}: greedy {greedy}, best {best}");
    }
}

#[test]
fn sampled_learning_finds_the_deterministic_optimum() {
    let (_, inst) = enumerable_corpus().into_iter().find(|(n, _)| *n == "jsp-2x2").unwrap();
    let env = makespan_env(inst.clone(), false);
    let exact = ValueOracle::new(&env).initial();
    let schema = FeatureSchema::new(inst, FeatureMode::Packed);
    let mut store = HashQTable::with_default_budget(schema.radices().to_vec());
    let mut learner = Learner::new(env, schema, exploring_config(500, 4)).unwrap();
    learner.train(&mut store, &TrainOptions::default()).unwrap();
    assert_eq!(learner.evaluate_greedy(&store, 1), exact);
}

#[test]
fn rollout_and_softmin_traces_reach_the_same_optimum() {
    let (_, inst) = enumerable_corpus().into_iter().find(|(n, _)| *n == "jsp-2x2").unwrap();
    let env = makespan_env(inst.clone(), false);
    let exact = ValueOracle::new(&env).initial();
    let schema = FeatureSchema::new(inst, FeatureMode::Packed);
    let run = |warmup: usize| {
        let mut store = HashQTable::with_default_budget(schema.radices().to_vec());
        let cfg = LearnerConfig { warmup, ..exploring_config(600, 9) };
        let mut learner = Learner::new(env.clone(), schema.clone(), cfg).unwrap();
        learner.train(&mut store, &TrainOptions::default()).unwrap();
        (initial_value(&env, &schema, &store), learner.evaluate_greedy(&store, 1))
    };
    let (q_rollout, g_rollout) = run(100);
    let (q_softmin, g_softmin) = run(0);
    assert!((q_rollout - exact).abs() < 1e-6 && (q_softmin - exact).abs() < 1e-6);
    assert_eq!(g_rollout, exact);
    assert_eq!(g_softmin, exact);
}

#[test]
fn svr_matches_brute_force_dual_on_tiny_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..60 {
        let l = 1 + trial % 3;
        let dim = 1 + trial % 2;
        let samples: Vec<TrainingSample> = (0..l)
            .map(|_| TrainingSample::new((0..dim).map(|_| rng.gen::<f64>()).collect(), rng.gen_range(-5.0..5.0)))
            .collect();
        let p = SvrParams { tolerance: 1e-9, ..SvrParams::for_dim(dim) };
        let fit = train(&samples, &p).unwrap();
        let (beta, b) = dual_oracle(&samples, &p);
        let oracle = |x: &[f64]| samples.iter().zip(&beta).map(|(s, &c)| c * kernel(&s.input, x, p.kernel)).sum::<f64>() + b;
        let probes: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| s.input.clone())
            .chain((0..5).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()))
            .collect();
        for x in probes {
            let (got, want) = (fit.model.predict(&x), oracle(&x));
            assert!((got - want).abs() < 1e-4, "trial {trial}: {got} vs {want} at {x:?}");
        }
    }
}

#[test]
fn extra_machine_never_hurts_the_optimum() {
    for (name, inst) in enumerable_corpus() {
        let before = ValueOracle::new(&makespan_env(inst.clone(), false)).initial();
        let template = inst.initial(rapql::rap::ResourceId(0)).clone();
        let mut b = inst.to_builder();
        b.add_resource(template);
        let grown: Arc<RapInstance> = Arc::new(b.build());
        let after = ValueOracle::new(&makespan_env(grown, false)).initial();
        assert!(after <= before + 1e-9, "{name}: {after} > {before}");
    }
    // a second machine in state 0 halves a two-task single-machine load
    let mut b = RapInstance::builder(1, 1, 2);
    for t in 0..2 {
        b.mark_task(rapql::rap::OpId(t));
        b.fixed(StateId(0), rapql::rap::OpId(t), 4);
    }
    b.set_initial(rapql::rap::ResourceId(0), StateDist::point(StateId(0)));
    let one = Arc::new(b.build());
    let mut b2 = one.to_builder();
    b2.add_resource(StateDist::point(StateId(0)));
    let two = Arc::new(b2.build());
    assert_eq!(ValueOracle::new(&makespan_env(one, false)).initial(), 8.0);
    assert_eq!(ValueOracle::new(&makespan_env(two, false)).initial(), 4.0);
}
