pub mod agents;
pub mod baselines;
pub mod cli;
pub mod engine;
pub mod inject;
pub mod judge;
pub mod metrics;
pub mod model;
pub mod scenarios;
