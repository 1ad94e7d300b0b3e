//! Binary search over the interference threshold.
//!
//! `C_value` is a target number of directed interference entries allowed
//! above the threshold. Each round scans the threshold upward in 0.001
//! steps until fewer than `C_value` entries exceed it, solves the coloring
//! of the induced graph, and moves `C_value` toward `max_value` after an
//! optimal solve (try a denser graph) or toward `min_value` otherwise. The
//! search stops once `C_value` no longer changes.

use crate::config::PilotOptConfig;
use crate::error::Result;
use crate::pilotopt::graph::{build_graph, InterferenceGraph};
use crate::pilotopt::ilp::{solve_coloring, ColoringModel, ColoringSolution, ExitFlag};
use crate::pilotopt::interference::InterferenceMatrix;

pub const THRESHOLD_STEP: f64 = 0.001;
/// The scan runs steps 1 through 1999 and stops at 2.0 if never satisfied.
pub const SCAN_STEPS: usize = 2000;

/// Bounds of the binary search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchState {
    pub min_value: usize,
    pub max_value: usize,
    pub c_value: usize,
}

fn midpoint(a: usize, b: usize) -> usize {
    // f64::round rounds halves away from zero
    ((a + b) as f64 / 2.0).round() as usize
}

impl SearchState {
    pub fn new(cells: usize, clusters: usize) -> Self {
        Self {
            min_value: 1,
            max_value: cells * clusters * clusters,
            c_value: 1,
        }
    }

    /// Applies one solve outcome; true when the search has converged.
    pub fn update(&mut self, optimal: bool) -> bool {
        let prev = self.c_value;
        if optimal {
            self.c_value = midpoint(self.c_value, self.max_value);
            self.min_value = prev;
        } else {
            self.c_value = midpoint(self.c_value, self.min_value);
            self.max_value = prev;
        }
        prev == self.c_value
    }
}

/// Directed entries of an interference matrix, sorted for counting.
#[derive(Debug, Clone)]
pub struct SortedEntries(Vec<f64>);

impl SortedEntries {
    pub fn new(im: &InterferenceMatrix) -> Self {
        let mut v: Vec<f64> = im.inter_cell_entries().collect();
        v.sort_by(f64::total_cmp);
        Self(v)
    }

    /// Distinct entries strictly above `t`, ascending.
    pub fn distinct_above(&self, t: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self.0[self.0.partition_point(|&v| v <= t)..].to_vec();
        v.dedup();
        v
    }

    /// Entries strictly above `t`.
    pub fn count_above(&self, t: f64) -> usize {
        self.0.len() - self.0.partition_point(|&v| v <= t)
    }

    /// Lowest scanned threshold with fewer than `c_value` entries above it,
    /// or the end of the scan.
    pub fn scan(&self, c_value: usize) -> f64 {
        let mut step = 1;
        for _ in 1..SCAN_STEPS {
            if self.count_above(step as f64 * THRESHOLD_STEP) < c_value {
                break;
            }
            step += 1;
        }
        step as f64 * THRESHOLD_STEP
    }
}

/// One round of the search.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdStep {
    pub c_value: usize,
    pub threshold: f64,
    pub edges: usize,
    pub exit_flag: ExitFlag,
}

#[derive(Debug, Clone)]
pub struct ThresholdOutcome {
    pub threshold: f64,
    /// `C_value` of the returned round.
    pub c_value: usize,
    pub solution: ColoringSolution,
    pub graph: InterferenceGraph,
    /// Rounds of the binary search (coloring solves).
    pub iterations: usize,
    pub trace: Vec<ThresholdStep>,
    /// Extra solves spent past the scan cap when no round was optimal.
    pub fallback_solves: usize,
}

impl ThresholdOutcome {
    pub fn is_optimal(&self) -> bool {
        self.solution.exit_flag == ExitFlag::Optimal
    }
}

/// Solves the coloring for the threshold implied by `c_value`.
pub fn solve_at(
    im: &InterferenceMatrix,
    entries: &SortedEntries,
    c_value: usize,
    cfg: &PilotOptConfig,
) -> Result<(f64, InterferenceGraph, ColoringSolution)> {
    let threshold = entries.scan(c_value);
    let graph = build_graph(im, threshold)?;
    let model = ColoringModel::new(graph.graph.clone(), im.clusters, cfg).with_weights(im.pair_weights());
    let solution = solve_coloring(&model)?;
    Ok((threshold, graph, solution))
}

/// Runs the search with palette `C` (one pilot per cluster) and returns
/// the last round that solved to optimality.
///
/// If no round is optimal (typically because entries above the 2.0 scan
/// cap already force more than `C` colors), the threshold keeps rising
/// past the last one tried: a bisection over the larger matrix entries
/// finds the densest of those sparser graphs that colors optimally. At
/// the largest entry only the intra-cell cliques remain, so one always
/// exists. That outcome is flagged `TimedOut` and logged as a warning.
pub fn adaptive_threshold(im: &InterferenceMatrix, cfg: &PilotOptConfig) -> Result<ThresholdOutcome> {
    cfg.validate()?;
    let entries = SortedEntries::new(im);
    let mut state = SearchState::new(im.cells, im.clusters);
    let rounds = state.max_value;
    let mut trace = Vec::new();
    let mut best: Option<(usize, f64, InterferenceGraph, ColoringSolution)> = None;
    let mut highest = 0.0f64;
    for _ in 0..rounds {
        let c_value = state.c_value;
        let (threshold, graph, solution) = solve_at(im, &entries, c_value, cfg)?;
        let optimal = solution.exit_flag == ExitFlag::Optimal;
        trace.push(ThresholdStep {
            c_value,
            threshold,
            edges: graph.graph.edge_count(),
            exit_flag: solution.exit_flag,
        });
        highest = highest.max(threshold);
        if optimal {
            best = Some((c_value, threshold, graph, solution));
        }
        if state.update(optimal) {
            break;
        }
    }
    let iterations = trace.len();
    if let Some((c_value, threshold, graph, solution)) = best {
        return Ok(ThresholdOutcome {
            threshold,
            c_value,
            solution,
            graph,
            iterations,
            trace,
            fallback_solves: 0,
        });
    }

    // past the cap: colorability is monotone in the threshold, so bisect
    // for the lowest larger entry whose graph colors optimally
    let candidates = entries.distinct_above(highest);
    let solve = |t: f64| -> Result<(InterferenceGraph, ColoringSolution)> {
        let graph = build_graph(im, t)?;
        let model = ColoringModel::new(graph.graph.clone(), im.clusters, cfg).with_weights(im.pair_weights());
        let solution = solve_coloring(&model)?;
        Ok((graph, solution))
    };
    let mut fallback_solves = 0;
    let (mut lo, mut hi) = (0usize, candidates.len());
    let mut found: Option<(f64, InterferenceGraph, ColoringSolution)> = None;
    while lo < hi {
        let mid = (lo + hi) / 2;
        let (graph, solution) = solve(candidates[mid])?;
        fallback_solves += 1;
        if solution.exit_flag == ExitFlag::Optimal {
            found = Some((candidates[mid], graph, solution));
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let (threshold, graph, mut solution) = match found {
        Some(f) => f,
        None => {
            // every entry above the last threshold was tried or none exist;
            // the graph above the largest entry holds only the cliques
            let t = candidates.last().copied().unwrap_or(highest).max(highest);
            let (graph, solution) = solve(t)?;
            fallback_solves += 1;
            (t, graph, solution)
        }
    };
    log::warn!(
        "no scanned threshold solved to optimality; using threshold {threshold} ({} edges)",
        graph.graph.edge_count()
    );
    solution.exit_flag = ExitFlag::TimedOut;
    Ok(ThresholdOutcome {
        threshold,
        c_value: 0,
        solution,
        graph,
        iterations,
        trace,
        fallback_solves,
    })
}

/// `ceil(log2(L C^2)) + 2`.
pub fn iteration_bound(cells: usize, clusters: usize) -> usize {
    let m = (cells * clusters * clusters).max(1);
    (usize::BITS - (m - 1).leading_zeros()) as usize + 2
}
