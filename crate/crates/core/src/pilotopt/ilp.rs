//! Minimum-coloring 0-1 program and its exact solver.
//!
//! Variables are `x[v][p]` (vertex `v` takes color `p`) followed by `y[p]`
//! (color `p` is used), `N = n P + P` in total. The program is
//!
//! ```text
//! minimize   sum_p y[p]
//! subject to sum_p x[v][p] = 1                 for every vertex v
//!            x[u][p] + x[v][p] - y[p] <= 0     for every edge (u, v), color p
//!            x[v][p] - y[p] <= 0               for every vertex v, color p
//!            y[p+1] - y[p] <= 0                (colors are used in order)
//!            x, y in {0, 1}
//! ```
//!
//! The solver never builds the constraint matrix: it runs a branch and
//! bound directly on colorings (DSATUR branching, greedy-clique lower
//! bound, DSATUR upper bound), which explores exactly the feasible points
//! of the program above. The row accessors exist so that solutions can be
//! checked against the program itself.

use std::time::Instant;

use crate::config::PilotOptConfig;
use crate::error::{Error, Result};
use crate::pilotopt::graph::Graph;

/// One linear constraint `sum coeff * var (=|<=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Row {
    fn lhs(&self, x: &[u8]) -> f64 {
        self.coeffs.iter().map(|&(i, c)| c * f64::from(x[i])).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColoringModel {
    pub graph: Graph,
    /// Colors available (pilots per cell).
    pub palette: usize,
    pub time_budget_s: f64,
    /// Branch nodes allowed per solve; 0 means no limit.
    pub node_limit: u64,
    /// Symmetric pair weights (`n x n`, row-major). Among the colors that
    /// keep a vertex proper, the lightest toward same-colored vertices is
    /// tried first. They only order the search; the optimum is unchanged.
    pub weights: Option<Vec<f64>>,
}

impl ColoringModel {
    pub fn new(graph: Graph, palette: usize, cfg: &PilotOptConfig) -> Self {
        Self {
            graph,
            palette,
            time_budget_s: cfg.time_budget_s,
            node_limit: cfg.node_limit,
            weights: None,
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn num_vars(&self) -> usize {
        self.graph.vertices() * self.palette + self.palette
    }

    pub fn x(&self, v: usize, p: usize) -> usize {
        v * self.palette + p
    }

    pub fn y(&self, p: usize) -> usize {
        self.graph.vertices() * self.palette + p
    }

    pub fn objective(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.num_vars()];
        for p in 0..self.palette {
            f[self.y(p)] = 1.0;
        }
        f
    }

    pub fn equality_rows(&self) -> Vec<Row> {
        (0..self.graph.vertices())
            .map(|v| Row {
                coeffs: (0..self.palette).map(|p| (self.x(v, p), 1.0)).collect(),
                rhs: 1.0,
            })
            .collect()
    }

    pub fn inequality_rows(&self) -> Vec<Row> {
        let mut rows = Vec::new();
        for (u, v) in self.graph.edges() {
            for p in 0..self.palette {
                rows.push(Row {
                    coeffs: vec![(self.x(u, p), 1.0), (self.x(v, p), 1.0), (self.y(p), -1.0)],
                    rhs: 0.0,
                });
            }
        }
        // without these an isolated vertex could take an unused color
        for v in 0..self.graph.vertices() {
            for p in 0..self.palette {
                rows.push(Row {
                    coeffs: vec![(self.x(v, p), 1.0), (self.y(p), -1.0)],
                    rhs: 0.0,
                });
            }
        }
        for p in 0..self.palette.saturating_sub(1) {
            rows.push(Row {
                coeffs: vec![(self.y(p + 1), 1.0), (self.y(p), -1.0)],
                rhs: 0.0,
            });
        }
        rows
    }

    /// 0-1 vector of a coloring; colors must lie in `[0, palette)`.
    pub fn encode(&self, colors: &[usize]) -> Vec<u8> {
        let mut x = vec![0u8; self.num_vars()];
        for (v, &c) in colors.iter().enumerate() {
            x[self.x(v, c)] = 1;
            x[self.y(c)] = 1;
        }
        // fill gaps so the used colors form a prefix
        if let Some(top) = colors.iter().max() {
            for p in 0..=*top {
                x[self.y(p)] = 1;
            }
        }
        x
    }

    pub fn is_feasible(&self, x: &[u8]) -> bool {
        x.len() == self.num_vars()
            && x.iter().all(|&b| b <= 1)
            && self.equality_rows().iter().all(|r| r.lhs(x) == r.rhs)
            && self.inequality_rows().iter().all(|r| r.lhs(x) <= r.rhs)
    }

    pub fn objective_value(&self, x: &[u8]) -> f64 {
        self.objective().iter().zip(x).map(|(f, &b)| f * f64::from(b)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExitFlag {
    /// Proven minimum within the budget.
    Optimal,
    /// Budget exhausted; the solution (if any) is the best incumbent.
    TimedOut,
    /// No coloring fits in the palette.
    Infeasible,
}

impl std::fmt::Display for ExitFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExitFlag::Optimal => "optimal",
            ExitFlag::TimedOut => "timed_out",
            ExitFlag::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColoringSolution {
    /// Color of each vertex; empty when no coloring was found.
    pub colors: Vec<usize>,
    pub num_colors_used: usize,
    pub exit_flag: ExitFlag,
    pub elapsed_s: f64,
    /// Branch nodes explored.
    pub nodes: u64,
    pub lower_bound: usize,
}

impl ColoringSolution {
    pub fn has_coloring(&self) -> bool {
        !self.colors.is_empty()
    }
}

/// Largest clique found by greedy extension from every start vertex.
pub fn greedy_clique(g: &Graph) -> Vec<usize> {
    let n = g.vertices();
    let deg: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let mut best: Vec<usize> = Vec::new();
    for start in 0..n {
        let mut clique = vec![start];
        let mut cand: Vec<usize> = g.neighbors(start).collect();
        while !cand.is_empty() {
            let &v = cand
                .iter()
                .max_by(|&&a, &&b| deg[a].cmp(&deg[b]).then(b.cmp(&a)))
                .expect("non-empty");
            clique.push(v);
            cand.retain(|&u| u != v && g.has_edge(u, v));
        }
        if clique.len() > best.len() {
            best = clique;
        }
    }
    best
}

/// Greedy DSATUR coloring; returns colors and the number used.
pub fn dsatur(g: &Graph) -> (Vec<usize>, usize) {
    dsatur_weighted(g, None)
}

/// DSATUR that reuses the lightest admissible color under `weights`
/// instead of the lowest one.
pub fn dsatur_weighted(g: &Graph, weights: Option<&[f64]>) -> (Vec<usize>, usize) {
    let n = g.vertices();
    let deg: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let load = vertex_loads(n, weights);
    let mut colors = vec![usize::MAX; n];
    let mut seen: Vec<Vec<bool>> = vec![vec![false; n + 1]; n];
    let mut cost: Vec<Vec<f64>> = vec![vec![0.0; n + 1]; if weights.is_some() { n } else { 0 }];
    let mut sat = vec![0usize; n];
    let mut used = 0;
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| colors[v] == usize::MAX)
            .max_by(|&a, &b| {
                sat[a]
                    .cmp(&sat[b])
                    .then(deg[a].cmp(&deg[b]))
                    .then(load[a].total_cmp(&load[b]))
                    .then(b.cmp(&a))
            })
            .expect("an uncolored vertex remains");
        let c = match weights {
            Some(_) => (0..used)
                .filter(|&c| !seen[v][c])
                .min_by(|&a, &b| cost[v][a].total_cmp(&cost[v][b]).then(a.cmp(&b)))
                .unwrap_or(used),
            None => (0..=n).find(|&c| !seen[v][c]).expect("n + 1 colors always suffice"),
        };
        colors[v] = c;
        used = used.max(c + 1);
        for u in g.neighbors(v) {
            if !seen[u][c] {
                seen[u][c] = true;
                sat[u] += 1;
            }
        }
        if let Some(w) = weights {
            for (u, row) in cost.iter_mut().enumerate() {
                row[c] += w[v * n + u];
            }
        }
    }
    (colors, used)
}

fn vertex_loads(n: usize, weights: Option<&[f64]>) -> Vec<f64> {
    match weights {
        Some(w) => (0..n).map(|v| w[v * n..(v + 1) * n].iter().sum()).collect(),
        None => vec![0.0; n],
    }
}

const NONE: usize = usize::MAX;

struct Search<'a> {
    g: &'a Graph,
    deg: Vec<usize>,
    load: Vec<f64>,
    weights: Option<&'a [f64]>,
    /// `cost[v][c]`: weight from `v` to vertices colored `c`.
    cost: Vec<Vec<f64>>,
    colors: Vec<usize>,
    /// `counts[v][c]`: colored neighbors of `v` with color `c`.
    counts: Vec<Vec<u32>>,
    sat: Vec<usize>,
    /// Size of the best coloring so far (palette + 1 if none).
    best_k: usize,
    best: Option<Vec<usize>>,
    lower: usize,
    nodes: u64,
    node_limit: u64,
    start: Instant,
    budget_s: f64,
    aborted: bool,
}

impl Search<'_> {
    fn set(&mut self, v: usize, c: usize) {
        self.colors[v] = c;
        if let Some(w) = self.weights {
            let n = self.g.vertices();
            for (u, row) in self.cost.iter_mut().enumerate() {
                row[c] += w[v * n + u];
            }
        }
        for u in self.g.neighbors(v) {
            self.counts[u][c] += 1;
            if self.counts[u][c] == 1 {
                self.sat[u] += 1;
            }
        }
    }

    fn unset(&mut self, v: usize) {
        let c = self.colors[v];
        self.colors[v] = NONE;
        if let Some(w) = self.weights {
            let n = self.g.vertices();
            for (u, row) in self.cost.iter_mut().enumerate() {
                row[c] -= w[v * n + u];
            }
        }
        for u in self.g.neighbors(v) {
            self.counts[u][c] -= 1;
            if self.counts[u][c] == 0 {
                self.sat[u] -= 1;
            }
        }
    }

    fn out_of_budget(&mut self) -> bool {
        if (self.node_limit > 0 && self.nodes > self.node_limit)
            || self.start.elapsed().as_secs_f64() > self.budget_s
        {
            self.aborted = true;
        }
        self.aborted
    }

    fn recurse(&mut self, used: usize) {
        self.nodes += 1;
        if used >= self.best_k || self.out_of_budget() {
            return;
        }
        let n = self.g.vertices();
        let pick = (0..n).filter(|&v| self.colors[v] == NONE).max_by(|&a, &b| {
            self.sat[a]
                .cmp(&self.sat[b])
                .then(self.deg[a].cmp(&self.deg[b]))
                .then(self.load[a].total_cmp(&self.load[b]))
                .then(b.cmp(&a))
        });
        let Some(v) = pick else {
            self.best_k = used;
            self.best = Some(self.colors.clone());
            return;
        };
        // a coloring must beat best_k, so colors stay below best_k - 1
        let allowed = (used + 1).min(self.best_k - 1);
        let mut order: Vec<usize> = (0..allowed).filter(|&c| self.counts[v][c] == 0).collect();
        if self.weights.is_some() {
            // reused colors lightest first, a fresh color last
            order.sort_by(|&a, &b| {
                (a >= used)
                    .cmp(&(b >= used))
                    .then(self.cost[v][a].total_cmp(&self.cost[v][b]))
                    .then(a.cmp(&b))
            });
        }
        for c in order {
            self.set(v, c);
            let cap = self.best_k - 1;
            let dead = self
                .g
                .neighbors(v)
                .any(|u| self.colors[u] == NONE && self.sat[u] >= cap);
            if !dead {
                self.recurse(used.max(c + 1));
            }
            self.unset(v);
            if self.aborted || self.best_k <= self.lower {
                return;
            }
        }
    }
}

/// Minimum coloring within the palette.
///
/// `Optimal` when the search completes (the coloring is a proven minimum),
/// `Infeasible` when it completes without any coloring that fits the
/// palette, `TimedOut` when the time or node budget runs out first.
pub fn solve_coloring(model: &ColoringModel) -> Result<ColoringSolution> {
    if !(model.time_budget_s.is_finite() && model.time_budget_s > 0.0) {
        return Err(Error::config("pilotopt.time_budget_s", "must be positive"));
    }
    let start = Instant::now();
    let g = &model.graph;
    let n = g.vertices();
    let palette = model.palette;
    let finish = |colors: Vec<usize>, exit_flag, nodes, lower_bound| {
        let num_colors_used = colors.iter().max().map_or(0, |&c| c + 1);
        ColoringSolution {
            colors,
            num_colors_used,
            exit_flag,
            elapsed_s: start.elapsed().as_secs_f64(),
            nodes,
            lower_bound,
        }
    };
    if n == 0 {
        return Ok(finish(Vec::new(), ExitFlag::Optimal, 0, 0));
    }
    let clique = greedy_clique(g);
    let lower = clique.len();
    if lower > palette {
        return Ok(finish(Vec::new(), ExitFlag::Infeasible, 0, lower));
    }
    let weights = model.weights.as_deref();
    if weights.is_some_and(|w| w.len() != n * n) {
        return Err(Error::domain(format!("expected {} pair weights", n * n)));
    }
    let (greedy, k) = dsatur_weighted(g, weights);
    let (best_k, best) = if k <= palette {
        (k, Some(greedy))
    } else {
        (palette + 1, None)
    };
    if best_k == lower {
        return Ok(finish(best.unwrap_or_default(), ExitFlag::Optimal, 0, lower));
    }
    let mut s = Search {
        g,
        deg: (0..n).map(|v| g.degree(v)).collect(),
        load: vertex_loads(n, weights),
        weights,
        cost: vec![vec![0.0; palette]; if weights.is_some() { n } else { 0 }],
        colors: vec![NONE; n],
        counts: vec![vec![0; palette]; n],
        sat: vec![0; n],
        best_k,
        best,
        lower,
        nodes: 0,
        node_limit: model.node_limit,
        start,
        budget_s: model.time_budget_s,
        aborted: false,
    };
    // any clique needs distinct colors, so fixing them loses nothing
    for (c, &v) in clique.iter().enumerate() {
        s.set(v, c);
    }
    s.recurse(lower);
    let exit = if s.aborted {
        ExitFlag::TimedOut
    } else if s.best.is_some() {
        ExitFlag::Optimal
    } else {
        ExitFlag::Infeasible
    };
    let nodes = s.nodes;
    let colors = s.best.unwrap_or_default();
    debug_assert!(colors.is_empty() || g.is_proper(&colors));
    Ok(finish(colors, exit, nodes, lower))
}
