//! Interference-aware pilot assignment.
//!
//! [`interference`] turns large-scale gains into cluster-pair interference
//! ratios, [`graph`] thresholds them into a conflict graph, [`ilp`] colors
//! the graph with the fewest pilots, [`threshold`] searches for the densest
//! graph that still colors optimally, and [`assign`] maps colors to pilots.

pub mod assign;
pub mod graph;
pub mod ilp;
pub mod interference;
pub mod threshold;

pub use assign::{assign_pilots, PilotAssignment, PilotMode};
pub use graph::{build_graph, read_dimacs, write_dimacs, Graph, GraphFile, InterferenceGraph};
pub use ilp::{solve_coloring, ColoringModel, ColoringSolution, ExitFlag};
pub use interference::{interference_matrix, InterferenceMatrix};
pub use threshold::{adaptive_threshold, ThresholdOutcome};
