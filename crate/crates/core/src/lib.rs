//! Stochastic resource allocation problems solved as acyclic stochastic
//! shortest path problems with fitted Q-learning.

pub mod bench;
pub mod cluster;
pub mod env;
pub mod features;
pub mod learner;
pub mod parallel;
pub mod rap;
pub mod store;
pub mod svr;
