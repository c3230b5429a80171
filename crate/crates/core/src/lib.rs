pub mod annotation;
pub mod behaviour;
pub mod cli;
pub mod error;
pub mod eval;
pub mod flow;
pub mod model;
pub mod nn;
pub mod sampler;
pub mod synth;

pub mod train;
