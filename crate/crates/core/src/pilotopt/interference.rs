//! Inter-cluster interference ratios from large-scale gains.

use crate::clustering::Clustering;
use crate::error::{Error, Result};

/// Directed interference between every pair of clusters.
///
/// Node `a = cell * clusters + cluster`. For clusters in different cells,
/// entry `(a, b)` is the mean gain of cluster `a`'s devices toward cell
/// `b`'s base station over the mean gain of cluster `b`'s devices at their
/// own base station. Same-cell entries are zero and never used.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceMatrix {
    pub cells: usize,
    pub clusters: usize,
    values: Vec<f64>,
}

impl InterferenceMatrix {
    /// From explicit values (row-major, `n x n` with `n = cells * clusters`).
    /// Same-cell entries are zeroed.
    pub fn from_values(cells: usize, clusters: usize, mut values: Vec<f64>) -> Result<Self> {
        let n = cells * clusters;
        if values.len() != n * n {
            return Err(Error::domain(format!("expected {} entries, got {}", n * n, values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(format!("interference entry {v} is not a finite non-negative number")));
        }
        for a in 0..n {
            for b in 0..n {
                if a / clusters == b / clusters {
                    values[a * n + b] = 0.0;
                }
            }
        }
        Ok(Self {
            cells,
            clusters,
            values,
        })
    }

    pub fn nodes(&self) -> usize {
        self.cells * self.clusters
    }

    pub fn node(&self, cell: usize, cluster: usize) -> usize {
        cell * self.clusters + cluster
    }

    pub fn cell_of(&self, node: usize) -> usize {
        node / self.clusters
    }

    pub fn same_cell(&self, a: usize, b: usize) -> bool {
        self.cell_of(a) == self.cell_of(b)
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.nodes() + b]
    }

    /// All directed entries between clusters of different cells.
    pub fn inter_cell_entries(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.nodes();
        (0..n * n)
            .filter(move |&e| !self.same_cell(e / n, e % n))
            .map(move |e| self.values[e])
    }

    /// `I[a][b] + I[b][a]` for every pair, row-major.
    pub fn pair_weights(&self) -> Vec<f64> {
        let n = self.nodes();
        (0..n * n).map(|e| self.values[e] + self.values[(e % n) * n + e / n]).collect()
    }

    /// Number of directed entries strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.values.iter().filter(|&&v| v > threshold).count()
    }
}

fn mean_gain(betas: &[Vec<Vec<f64>>], cell: usize, members: &[usize], bs: usize) -> f64 {
    members.iter().map(|&k| betas[cell][k][bs]).sum::<f64>() / members.len() as f64
}

/// `betas[i][k][j]`: gain of device `k` of cell `i` at BS `j`.
pub fn interference_matrix(betas: &[Vec<Vec<f64>>], clusterings: &[Clustering]) -> Result<InterferenceMatrix> {
    let cells = clusterings.len();
    if betas.len() != cells {
        return Err(Error::domain("one clustering per cell is required"));
    }
    let clusters = clusterings.first().map_or(0, Clustering::clusters);
    if clusterings.iter().any(|c| c.clusters() != clusters) {
        return Err(Error::domain("every cell needs the same number of clusters"));
    }
    let members: Vec<Vec<Vec<usize>>> = clusterings
        .iter()
        .map(|cl| (0..clusters).map(|c| cl.members(c)).collect())
        .collect();
    if members.iter().flatten().any(Vec::is_empty) {
        return Err(Error::domain("empty cluster"));
    }
    let n = cells * clusters;
    let mut values = vec![0.0; n * n];
    for i in 0..cells {
        for c in 0..clusters {
            for j in 0..cells {
                if i == j {
                    continue;
                }
                let cross = mean_gain(betas, i, &members[i][c], j);
                for c2 in 0..clusters {
                    let own = mean_gain(betas, j, &members[j][c2], j);
                    values[(i * clusters + c) * n + j * clusters + c2] = cross / own;
                }
            }
        }
    }
    InterferenceMatrix::from_values(cells, clusters, values)
}
