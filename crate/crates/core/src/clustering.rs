//! Correlation-similarity clustering of each cell's devices (k-medoids).

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;

use crate::channel::ToeplitzCorrelation;
use crate::config::ClusteringConfig;
use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Anything with a real trace inner product `Re tr(A B^H)`.
pub trait TraceInner {
    fn trace_inner(&self, other: &Self) -> f64;
}

impl TraceInner for CMat {
    fn trace_inner(&self, other: &Self) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| (a * b.conj()).re).sum()
    }
}

impl TraceInner for ToeplitzCorrelation {
    fn trace_inner(&self, other: &Self) -> f64 {
        ToeplitzCorrelation::trace_inner(self, other)
    }
}

/// `Re tr(A B^H) / (|A|_F |B|_F)`, clamped to `[0, 1]`.
pub fn similarity<T: TraceInner>(a: &T, b: &T) -> Result<f64> {
    let na = a.trace_inner(a);
    let nb = b.trace_inner(b);
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::domain("similarity of a zero correlation matrix"));
    }
    Ok((a.trace_inner(b) / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0))
}

/// Pairwise similarities of one cell's devices.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub cell: usize,
    n: usize,
    s: Vec<f64>,
}

impl SimilarityMatrix {
    /// From a full row-major matrix; the diagonal is forced to 1.
    pub fn from_rows(cell: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut s = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::domain("similarity matrix must be square"));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::domain(format!("similarity {v} outside [0, 1]")));
                }
                s.push(if i == j { 1.0 } else { v });
            }
        }
        Ok(Self { cell, n, s })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.s[a * self.n + b]
    }

    pub fn dissimilarity(&self, a: usize, b: usize) -> f64 {
        1.0 - self.get(a, b)
    }

    /// Same matrix with devices reordered: new device `i` is old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        Self { cell: self.cell, n, s }
    }
}

pub fn build_similarity_matrix<T: TraceInner>(cell: usize, correlations: &[T]) -> Result<SimilarityMatrix> {
    let n = correlations.len();
    let norms: Vec<f64> = correlations.iter().map(|r| r.trace_inner(r)).collect();
    if norms.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::domain("similarity of a zero correlation matrix"));
    }
    let mut s = vec![1.0; n * n];
    for a in 0..n {
        for b in a + 1..n {
            let v = (correlations[a].trace_inner(&correlations[b]) / (norms[a] * norms[b]).sqrt()).clamp(0.0, 1.0);
            s[a * n + b] = v;
            s[b * n + a] = v;
        }
    }
    Ok(SimilarityMatrix { cell, n, s })
}

/// A partition of one cell's devices.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster of each device, in `[0, C)`.
    pub assignment: Vec<usize>,
    /// Medoid device of each cluster, ascending.
    pub medoids: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Total dissimilarity of devices to their medoids.
    pub cost: f64,
    /// Cost after the initial assignment and after every iteration of
    /// the winning run.
    pub cost_history: Vec<f64>,
}

impl Clustering {
    pub fn clusters(&self) -> usize {
        self.medoids.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&k| self.assignment[k] == cluster)
            .collect()
    }

    /// Clustering with one device per cluster (`C = K`).
    pub fn singletons(k: usize) -> Self {
        Self {
            assignment: (0..k).collect(),
            medoids: (0..k).collect(),
            sizes: vec![1; k],
            cost: 0.0,
            cost_history: vec![0.0],
        }
    }

    /// Checks the partition invariants.
    pub fn validate(&self) -> Result<()> {
        let c = self.medoids.len();
        let mut sizes = vec![0; c];
        for &a in &self.assignment {
            if a >= c {
                return Err(Error::domain(format!("cluster id {a} out of range")));
            }
            sizes[a] += 1;
        }
        if sizes != self.sizes || sizes.contains(&0) {
            return Err(Error::domain("cluster sizes inconsistent or empty cluster"));
        }
        for (cl, &m) in self.medoids.iter().enumerate() {
            if self.assignment.get(m) != Some(&cl) {
                return Err(Error::domain(format!("medoid {m} outside its cluster")));
            }
        }
        Ok(())
    }
}

pub fn partition_cost(s: &SimilarityMatrix, assignment: &[usize], medoids: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(k, &c)| s.dissimilarity(k, medoids[c]))
        .sum()
}

/// Greedy build: each new medoid is the device that lowers the total
/// cost most. Near ties go to the more central device (smaller total
/// dissimilarity), which does not depend on device numbering; exact
/// ties after that go to the lowest index.
fn build_init(s: &SimilarityMatrix, c: usize) -> Vec<usize> {
    let n = s.len();
    let spread: Vec<f64> = (0..n).map(|a| (0..n).map(|b| s.dissimilarity(a, b)).sum()).collect();
    let mut nearest = vec![f64::INFINITY; n];
    let mut medoids = Vec::with_capacity(c);
    for _ in 0..c {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for cand in 0..n {
            if medoids.contains(&cand) {
                continue;
            }
            let gain: f64 = (0..n)
                .map(|j| {
                    let d = s.dissimilarity(cand, j);
                    if nearest[j].is_infinite() {
                        -d
                    } else {
                        (nearest[j] - d).max(0.0)
                    }
                })
                .sum();
            let tie = (gain - best.0).abs() <= 1e-12;
            if (!tie && gain > best.0) || (tie && spread[cand] < spread[best.1] - 1e-12) {
                best = (gain, cand);
            }
        }
        let m = best.1;
        medoids.push(m);
        for j in 0..n {
            nearest[j] = nearest[j].min(s.dissimilarity(m, j));
        }
    }
    medoids
}

/// Nearest medoid per device; ties go to the medoid with the lowest
/// index, and a medoid always stays in its own cluster.
fn assign(s: &SimilarityMatrix, medoids: &[usize]) -> Vec<usize> {
    (0..s.len())
        .map(|k| {
            if let Some(c) = medoids.iter().position(|&m| m == k) {
                return c;
            }
            let mut best = (f64::INFINITY, usize::MAX, 0);
            for (c, &m) in medoids.iter().enumerate() {
                let d = s.dissimilarity(k, m);
                if d < best.0 || (d == best.0 && m < best.1) {
                    best = (d, m, c);
                }
            }
            best.2
        })
        .collect()
}

/// Reseeds every empty cluster with the non-medoid device farthest from
/// its medoid. Assignment keeps medoids in place, so this only fires on
/// inconsistent medoid sets (duplicates).
fn repair_empty(s: &SimilarityMatrix, assignment: &mut [usize], medoids: &mut [usize]) {
    let c = medoids.len();
    loop {
        let mut sizes = vec![0usize; c];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&z| z == 0) else {
            return;
        };
        let far = (0..assignment.len())
            .filter(|&k| sizes[assignment[k]] > 1 && medoids[assignment[k]] != k)
            .max_by(|&a, &b| {
                let da = s.dissimilarity(a, medoids[assignment[a]]);
                let db = s.dissimilarity(b, medoids[assignment[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("C <= K leaves a cluster with a non-medoid member");
        medoids[empty] = far;
        assignment[far] = empty;
    }
}

struct Run {
    assignment: Vec<usize>,
    medoids: Vec<usize>,
    cost: f64,
    history: Vec<f64>,
}

fn alternate(s: &SimilarityMatrix, mut medoids: Vec<usize>, max_iterations: usize) -> Run {
    let n = s.len();
    let mut assignment = assign(s, &medoids);
    repair_empty(s, &mut assignment, &mut medoids);
    let mut history = vec![partition_cost(s, &assignment, &medoids)];
    for _ in 0..max_iterations.max(1) {
        for (cl, med) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&k| assignment[k] == cl).collect();
            let spread = |cand: usize| members.iter().map(|&j| s.dissimilarity(cand, j)).sum::<f64>();
            // the current medoid wins ties, which keeps the update
            // independent of device numbering; otherwise lowest index
            let mut best = (spread(*med), *med);
            for &cand in &members {
                let tot = spread(cand);
                if tot < best.0 - 1e-12 {
                    best = (tot, cand);
                }
            }
            *med = best.1;
        }
        let mut next = assign(s, &medoids);
        repair_empty(s, &mut next, &mut medoids);
        history.push(partition_cost(s, &next, &medoids));
        let done = next == assignment;
        assignment = next;
        if done {
            break;
        }
    }
    let cost = partition_cost(s, &assignment, &medoids);
    Run {
        assignment,
        medoids,
        cost,
        history,
    }
}

/// Partitions a cell's devices into `c` clusters minimizing the total
/// dissimilarity `1 - S` to the cluster medoids.
///
/// The first run starts from the greedy build; `cfg.restarts` more runs
/// start from medoids drawn with `rng`. The cheapest run wins, earlier
/// runs on ties.
pub fn kmedoids<R: Rng + ?Sized>(
    s: &SimilarityMatrix,
    c: usize,
    cfg: &ClusteringConfig,
    rng: &mut R,
) -> Result<Clustering> {
    let n = s.len();
    if c == 0 || c > n {
        return Err(Error::config(
            "network.clusters_per_cell",
            format!("cannot form {c} clusters from {n} devices"),
        ));
    }
    if c == n {
        return Ok(Clustering::singletons(n));
    }
    let mut best = alternate(s, build_init(s, c), cfg.max_iterations);
    for _ in 0..cfg.restarts {
        let start = sample(rng, n, c).into_vec();
        let run = alternate(s, start, cfg.max_iterations);
        if run.cost < best.cost - 1e-12 {
            best = run;
        }
    }
    // relabel so medoids are ascending
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by_key(|&i| best.medoids[i]);
    let mut relabel = vec![0; c];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let assignment: Vec<usize> = best.assignment.iter().map(|&a| relabel[a]).collect();
    let medoids: Vec<usize> = order.iter().map(|&o| best.medoids[o]).collect();
    let mut sizes = vec![0; c];
    for &a in &assignment {
        sizes[a] += 1;
    }
    let out = Clustering {
        assignment,
        medoids,
        sizes,
        cost: best.cost,
        cost_history: best.history,
    };
    debug_assert!(out.validate().is_ok());
    Ok(out)
}

/// CSV with columns `cell,device,cluster,medoid_flag`; `cells[i]` is the
/// clustering of cell `i`.
pub fn write_clustering_csv<W: Write>(out: W, cells: &[Clustering]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell", "device", "cluster", "medoid_flag"])?;
    for (cell, cl) in cells.iter().enumerate() {
        for (k, &a) in cl.assignment.iter().enumerate() {
            let flag = u8::from(cl.medoids[a] == k);
            w.write_record([cell.to_string(), k.to_string(), a.to_string(), flag.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
