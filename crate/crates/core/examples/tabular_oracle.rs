//! Exact tabular backups on a tiny stochastic instance, followed by the
//! greedy policy's decisions.

use std::error::Error;
use std::sync::Arc;

use rapql::env::{Env, EnvConfig, Status};
use rapql::features::{FeatureMode, FeatureSchema};
use rapql::learner::{backup_sweeps, initial_value, Learner, LearnerConfig};
use rapql::rap::{DurationDist, OpId, PerformanceMeasure, RapInstance, ResourceId, StateDist, StateId};
use rapql::store::HashQTable;

fn main() -> Result<(), Box<dyn Error>> {
    // machine 0 is fast but unreliable, machine 1 steady
    let mut b = RapInstance::builder(2, 2, 3);
    for t in 0..3 {
        b.mark_task(OpId(t));
        b.capability(StateId(0), OpId(t), DurationDist::new(vec![(1, 0.7), (6, 0.3)])?, StateDist::point(StateId(0)));
        b.capability(StateId(1), OpId(t), DurationDist::point(3)?, StateDist::point(StateId(1)));
    }
    b.precede(OpId(0), OpId(2));
    b.set_initial(ResourceId(0), StateDist::point(StateId(0)));
    b.set_initial(ResourceId(1), StateDist::point(StateId(1)));
    let inst = Arc::new(b.build());

    let env = Env::new(inst.clone(), PerformanceMeasure::makespan(), EnvConfig::default())?;
    let schema = FeatureSchema::new(inst, FeatureMode::Packed);
    let mut store = HashQTable::with_default_budget(schema.radices().to_vec());
    backup_sweeps(&env, &schema, &mut store, 1.0, 1);
    println!("optimal expected makespan {:.4}", initial_value(&env, &schema, &store));

    let learner = Learner::new(env.clone(), schema, LearnerConfig { discount: 1.0, ..LearnerConfig::default() })?;
    let mut rng = rand::thread_rng();
    let mut x = env.initial_state(&mut rng);
    while env.status(&x) == Status::Running {
        let a = learner.greedy_action(&store, &x).ok_or("no action")?;
        println!("t={:>2}: {a}", x.now);
        x = env.decide(&x, a, &mut rng).next;
    }
    println!("realized makespan {}", x.now);
    Ok(())
}
