//! TAMER with counterfactual feedback: environments, the H-model learner,
//! a synthetic feedback oracle, evaluation statistics and the experiment
//! runner.
pub mod envs;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod oracle;
pub mod tamer;

/// Crate version, folded into config hashes and manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
