//! Fixtures shared by the benchmarks.

use pilotgraph_core::channel::{local_scattering_profile, ToeplitzCorrelation};
use pilotgraph_core::linalg::CMat;
use pilotgraph_core::pilotopt::{Graph, InterferenceMatrix};
use pilotgraph_core::RandomStream;
use rand::Rng;

/// Erdos-Renyi graph on `n` vertices.
pub fn random_graph(seed: u64, n: usize, p: f64) -> Graph {
    let mut rng = RandomStream::new(seed).rng();
    let mut g = Graph::new(n);
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                g.add_edge(u, v).expect("valid vertices");
            }
        }
    }
    g
}

/// Interference ratios spread over several decades, like real drops.
pub fn random_interference(seed: u64, cells: usize, clusters: usize) -> InterferenceMatrix {
    let mut rng = RandomStream::new(seed).rng();
    let n = cells * clusters;
    let values = (0..n * n).map(|_| 10f64.powf(rng.random_range(-4.0..1.0))).collect();
    InterferenceMatrix::from_values(cells, clusters, values).expect("finite entries")
}

/// Local-scattering profiles at uniformly random angles.
pub fn random_profiles(seed: u64, count: usize, antennas: usize) -> Vec<ToeplitzCorrelation> {
    let mut rng = RandomStream::new(seed).rng();
    (0..count)
        .map(|_| {
            let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            local_scattering_profile(angle, 10f64.to_radians(), antennas, 0.5)
        })
        .collect()
}

/// Dense correlation matrices scaled by random gains.
pub fn random_correlations(seed: u64, count: usize, antennas: usize) -> Vec<CMat> {
    let mut rng = RandomStream::new(seed).rng();
    random_profiles(seed, count, antennas)
        .iter()
        .map(|t| t.scaled(rng.random_range(0.01..1.0)).to_dense())
        .collect()
}

/// Duty fractions in `(0, 0.5)`.
pub fn random_fractions(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = RandomStream::new(seed).rng();
    (0..count).map(|_| rng.random_range(0.001..0.5)).collect()
}
