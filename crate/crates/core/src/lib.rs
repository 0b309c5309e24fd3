//! Adaptive single-patroller planning on a road network whose complaint
//! pattern can change without notice.

pub mod cli;
pub mod complaints;
pub mod detector;
pub mod engine;
pub mod error;
pub mod graph;
pub mod parallel;
pub mod planner;
pub mod rng;
pub mod scenario;
pub mod traffic;

pub use error::{Result, TampaError};
