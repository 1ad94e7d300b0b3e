//! Pilot assignment per cluster: interference-graph coloring or random.

use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::clustering::Clustering;
use crate::config::PilotOptConfig;
use crate::error::{Error, Result};
use crate::pilotopt::ilp::ExitFlag;
use crate::pilotopt::interference::interference_matrix;
use crate::pilotopt::threshold::adaptive_threshold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PilotMode {
    /// Coloring of the thresholded interference graph.
    Ilp,
    /// Independent random permutation of the pilots in every cell.
    Random,
}

impl PilotMode {
    pub const ALL: [PilotMode; 2] = [PilotMode::Ilp, PilotMode::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            PilotMode::Ilp => "ilp",
            PilotMode::Random => "random",
        }
    }
}

impl std::fmt::Display for PilotMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PilotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ilp" => Ok(PilotMode::Ilp),
            "random" => Ok(PilotMode::Random),
            other => Err(Error::config("modes", format!("unknown mode `{other}` (expected ilp or random)"))),
        }
    }
}

/// Pilot index of every cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotAssignment {
    /// `pilots[cell][cluster]`.
    pub pilots: Vec<Vec<usize>>,
    pub mode: PilotMode,
    /// Threshold and solver status for the coloring mode.
    pub threshold: Option<f64>,
    pub exit_flag: Option<ExitFlag>,
}

impl PilotAssignment {
    /// Pilot of every device, `[cell][device]`.
    pub fn device_pilots(&self, clusterings: &[Clustering]) -> Vec<Vec<usize>> {
        clusterings
            .iter()
            .zip(&self.pilots)
            .map(|(cl, p)| cl.assignment.iter().map(|&c| p[c]).collect())
            .collect()
    }

    /// CSV with columns `cell,cluster,pilot`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell", "cluster", "pilot"])?;
        for (cell, ps) in self.pilots.iter().enumerate() {
            for (cluster, p) in ps.iter().enumerate() {
                w.write_record([cell.to_string(), cluster.to_string(), p.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Gives each cell's clusters distinct pilots in `[0, C)`.
pub fn assign_pilots<R: Rng + ?Sized>(
    betas: &[Vec<Vec<f64>>],
    clusterings: &[Clustering],
    mode: PilotMode,
    cfg: &PilotOptConfig,
    rng: &mut R,
) -> Result<PilotAssignment> {
    let clusters = clusterings.first().map_or(0, Clustering::clusters);
    match mode {
        PilotMode::Random => {
            let pilots = clusterings
                .iter()
                .map(|_| {
                    let mut p: Vec<usize> = (0..clusters).collect();
                    p.shuffle(rng);
                    p
                })
                .collect();
            Ok(PilotAssignment {
                pilots,
                mode,
                threshold: None,
                exit_flag: None,
            })
        }
        PilotMode::Ilp => {
            let im = interference_matrix(betas, clusterings)?;
            let out = adaptive_threshold(&im, cfg)?;
            let pilots: Vec<Vec<usize>> = if out.solution.has_coloring() {
                debug_assert!(out.graph.graph.is_proper(&out.solution.colors));
                out.solution
                    .colors
                    .chunks(clusters)
                    .map(<[usize]>::to_vec)
                    .collect()
            } else {
                log::warn!("no coloring found; falling back to pilot c for cluster c");
                vec![(0..clusters).collect(); clusterings.len()]
            };
            Ok(PilotAssignment {
                pilots,
                mode,
                threshold: Some(out.threshold),
                exit_flag: Some(out.solution.exit_flag),
            })
        }
    }
}
