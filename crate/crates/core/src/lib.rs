//! Semantic target search in unknown 2D environments.
//!
//! A robot explores a procedurally generated floorplan with a frontier
//! planner. Frontier viewpoints are ordered by a weighted minimum-latency
//! tour whose weights blend coverage gain with a linear semantic priority
//! learned from expert waypoint interventions.

pub mod bridge;
pub mod episode;
pub mod eval;
pub mod expert;
pub mod grid;
pub mod learn;
pub mod planner;
pub mod scenario;
pub mod semantics;
pub mod sim;
pub mod topo;
