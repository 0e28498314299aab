pub mod data;
pub mod error;
pub mod graph;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rng;
