pub mod audit;
pub mod bench;
pub mod classifier;
pub mod data;
pub mod error;
pub mod expr;
pub mod metric;
pub mod par;
pub mod rng;
pub mod scm;
pub mod train;
