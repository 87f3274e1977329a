//! Fitted Q-learning with a ν-SVR value store on a small flexible shop.

use std::error::Error;
use std::sync::Arc;

use rapql::bench::parse_fjs;
use rapql::env::{Env, EnvConfig};
use rapql::features::{FeatureMode, FeatureSchema};
use rapql::learner::{Learner, LearnerConfig, TrainOptions};
use rapql::rap::{encode_jsp, PerformanceMeasure};
use rapql::store::{SvrStore, SvrStoreConfig};

const SHOP: &str = "\
3 2 1.6
2 2 1 3 2 4 1 2 2
2 1 2 3 2 1 1 2 3
1 2 1 2 2 2
";

fn main() -> Result<(), Box<dyn Error>> {
    let shop = parse_fjs(SHOP)?.to_job_shop();
    let inst = Arc::new(encode_jsp(&shop)?.instance);
    let env = Env::new(inst.clone(), PerformanceMeasure::makespan(), EnvConfig::default())?;
    let schema = FeatureSchema::new(inst, FeatureMode::Packed);
    let mut store = SvrStore::new(schema.bounds(), SvrStoreConfig { refit_every: 10, ..SvrStoreConfig::default() });
    let mut learner = Learner::new(env, schema, LearnerConfig { episodes: 300, warmup: 20, ..LearnerConfig::default() })?;
    let report = learner.train(&mut store, &TrainOptions { checkpoints: vec![50, 150, 300], ..TrainOptions::default() })?;
    for c in &report.checkpoints {
        println!("episode {:>3}: greedy makespan {}", c.episode, c.greedy_cost);
    }
    if let Some(m) = store.model() {
        println!("{} refits, {} samples, {} support vectors", store.refits(), store.num_samples(), m.num_support());
    }
    Ok(())
}
