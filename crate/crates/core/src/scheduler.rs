//! Duty-cycle packing of heterogeneous devices and the pilot overhead it
//! implies.
//!
//! A device needs `8 * payload / (SE * bandwidth)` seconds of airtime every
//! `period` seconds. Devices in one cluster take turns on one pilot, so a
//! cluster is a bin of capacity 1 and the pilots a cell needs is the bin
//! count.

use rand::Rng;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::netgeom::{build_layout, drop_devices};
use crate::pilotopt::{assign_pilots, PilotMode};
use crate::rng::RandomStream;
use crate::sim::{blocks_for, cluster_cells, link_profiles, simulate_drop, BeamModel, LinkBudget};

pub const PAYLOADS_BYTES: [u32; 3] = [500, 750, 1000];
pub const PERIODS_S: [f64; 3] = [1.0, 2.0, 3.0];

/// Slack when testing a bin against capacity 1.
const CAPACITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceProfile {
    pub payload_bytes: u32,
    pub period_s: f64,
}

impl DeviceProfile {
    pub fn new(payload_bytes: u32, period_s: f64) -> Result<Self> {
        if payload_bytes == 0 || !(period_s.is_finite() && period_s > 0.0) {
            return Err(Error::domain("payload and period must be positive"));
        }
        Ok(Self {
            payload_bytes,
            period_s,
        })
    }

    /// Uniform over the 3 x 3 payload / period grid.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            payload_bytes: PAYLOADS_BYTES[rng.random_range(0..3)],
            period_s: PERIODS_S[rng.random_range(0..3)],
        }
    }

    pub fn bits(&self) -> f64 {
        8.0 * f64::from(self.payload_bytes)
    }
}

/// Airtime per period over the period length.
pub fn duty_fraction(profile: &DeviceProfile, se_bps_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(se_bps_hz > 0.0) {
        return Err(Error::Unschedulable { devices: Vec::new() });
    }
    if !(bandwidth_hz > 0.0) {
        return Err(Error::domain("bandwidth must be positive"));
    }
    Ok(profile.bits() / (se_bps_hz * bandwidth_hz) / profile.period_s)
}

/// Devices per cluster with their duty fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSchedule {
    pub clusters: Vec<Vec<(usize, f64)>>,
    /// False when some device needs more than the whole pilot; such a
    /// device gets a cluster of its own.
    pub feasible: bool,
}

impl ClusterSchedule {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn load(&self, cluster: usize) -> f64 {
        self.clusters[cluster].iter().map(|d| d.1).sum()
    }

    /// Every device `0..devices` appears exactly once and every bin with
    /// more than one device fits.
    pub fn validate(&self, devices: usize) -> Result<()> {
        let mut seen = vec![0usize; devices];
        for c in &self.clusters {
            for &(d, _) in c {
                if d >= devices {
                    return Err(Error::domain(format!("unknown device {d}")));
                }
                seen[d] += 1;
            }
        }
        if let Some(d) = seen.iter().position(|&s| s != 1) {
            return Err(Error::domain(format!("device {d} scheduled {} times", seen[d])));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if c.len() > 1 && self.load(i) > 1.0 + CAPACITY_EPS {
                return Err(Error::domain(format!("cluster {i} is over capacity")));
            }
        }
        Ok(())
    }
}

/// First-fit decreasing into unit bins. Fractions above 1 get a bin of
/// their own and mark the schedule infeasible.
pub fn ffd_pack(fractions: &[f64]) -> ClusterSchedule {
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| fractions[b].total_cmp(&fractions[a]).then(a.cmp(&b)));
    let mut clusters: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut loads: Vec<f64> = Vec::new();
    let mut feasible = true;
    for d in order {
        let f = fractions[d];
        if f > 1.0 {
            feasible = false;
            clusters.push(vec![(d, f)]);
            loads.push(f);
            continue;
        }
        match loads.iter().position(|&l| l + f <= 1.0 + CAPACITY_EPS) {
            Some(b) => {
                clusters[b].push((d, f));
                loads[b] += f;
            }
            None => {
                clusters.push(vec![(d, f)]);
                loads.push(f);
            }
        }
    }
    ClusterSchedule { clusters, feasible }
}

/// Fewest clusters (pilots) that give every device its airtime.
pub fn min_clusters(profiles: &[DeviceProfile], se: &[f64], bandwidth_hz: f64) -> Result<(usize, ClusterSchedule)> {
    if profiles.len() != se.len() {
        return Err(Error::domain("one SE value per device is required"));
    }
    let no_rate: Vec<usize> = (0..se.len()).filter(|&d| !(se[d] > 0.0)).collect();
    if !no_rate.is_empty() {
        return Err(Error::Unschedulable { devices: no_rate });
    }
    let fractions = profiles
        .iter()
        .zip(se)
        .map(|(p, &s)| duty_fraction(p, s, bandwidth_hz))
        .collect::<Result<Vec<f64>>>()?;
    let over: Vec<usize> = (0..fractions.len()).filter(|&d| fractions[d] > 1.0).collect();
    if !over.is_empty() {
        return Err(Error::Unschedulable { devices: over });
    }
    let schedule = ffd_pack(&fractions);
    Ok((schedule.len(), schedule))
}

/// Outcome of the SE / cluster-count iteration for one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct DropOverhead {
    /// Pilots each cell needs.
    pub per_cell: Vec<usize>,
    /// Cluster count used for the last SE evaluation.
    pub clusters: usize,
    pub rounds: usize,
    pub converged: bool,
    /// The schedule wanted more pilots than the coherence block or `K` allow.
    pub saturated: bool,
    pub schedules: Vec<ClusterSchedule>,
}

impl DropOverhead {
    pub fn mean_pilots(&self) -> f64 {
        self.per_cell.iter().sum::<usize>() as f64 / self.per_cell.len().max(1) as f64
    }
}

/// One drop of `cfg.network.devices_per_cell` devices per cell with random
/// profiles. Starting from `clusters_per_cell` clusters, alternates SE
/// evaluation (with that many pilots) and FFD packing; the next cluster
/// count is the largest per-cell requirement, since the pilot book is
/// shared. The count is clamped to `min(K, tau_c - 1)`; a requirement
/// above that marks the result `saturated`. Stops at a fixed point or
/// after `max_fixed_point_rounds`.
///
/// Everything except the pilot assignment draws from streams that do not
/// depend on `mode`, so modes compare on identical drops and channels.
pub fn drop_overhead(cfg: &SimConfig, mode: PilotMode, stream: &RandomStream) -> Result<DropOverhead> {
    cfg.validate()?;
    let net = &cfg.network;
    let k = net.devices_per_cell;
    let layout = build_layout(net)?;
    let drop = drop_devices(&layout, net, &stream.named("drop"))?;
    let mut prng = stream.named("profiles").rng();
    let profiles: Vec<Vec<DeviceProfile>> = (0..layout.cells())
        .map(|_| (0..k).map(|_| DeviceProfile::draw(&mut prng)).collect())
        .collect();
    let links = link_profiles(&drop, net.antennas, &cfg.channel);
    let model = BeamModel::new(&links);

    // at least one data sample must remain in the coherence block
    let cap = k.min(net.coherence_samples.saturating_sub(1)).max(1);
    let mut c = net.clusters_per_cell.clamp(1, cap);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let clusterings = cluster_cells(&links, c, &cfg.clustering, &stream.named("clustering").child(c as u64))?;
        let mut arng = stream.named("pilots").child(c as u64).rng();
        let pilots = assign_pilots(&drop.betas, &clusterings, mode, &cfg.pilotopt, &mut arng)?;
        let budget = LinkBudget::new(net, c);
        let prelog = (net.coherence_samples - c) as f64 / net.coherence_samples as f64;
        let blocks = blocks_for(&clusterings, cfg.experiment.overhead_realizations);
        let report = simulate_drop(
            &model,
            &clusterings,
            &pilots.pilots,
            blocks,
            &budget,
            prelog,
            &stream.named("blocks").child(c as u64),
        )?;
        let se = report.per_device_se();
        let mut schedules = Vec::with_capacity(se.len());
        for (cell_se, cell_profiles) in se.iter().zip(&profiles) {
            let fractions = cell_profiles
                .iter()
                .zip(cell_se)
                .enumerate()
                .map(|(d, (p, &s))| {
                    duty_fraction(p, s, net.bandwidth_hz).map_err(|_| Error::Unschedulable { devices: vec![d] })
                })
                .collect::<Result<Vec<f64>>>()?;
            let schedule = ffd_pack(&fractions);
            schedule.validate(k)?;
            schedules.push(schedule);
        }
        let per_cell: Vec<usize> = schedules.iter().map(ClusterSchedule::len).collect();
        let wanted = per_cell.iter().copied().max().unwrap_or(1);
        let next = wanted.clamp(1, cap);
        let converged = next == c;
        if converged || rounds >= cfg.experiment.max_fixed_point_rounds {
            let saturated = wanted > cap;
            if saturated {
                log::warn!("schedule needs {wanted} pilots but at most {cap} fit; stopping at {c}");
            } else if !converged {
                log::warn!("cluster count did not settle after {rounds} rounds (last {c} -> {next})");
            }
            return Ok(DropOverhead {
                per_cell,
                clusters: c,
                rounds,
                converged,
                saturated,
                schedules,
            });
        }
        c = next;
    }
}

/// Mean pilots per cell and its standard error over drops.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadPoint {
    pub devices: usize,
    pub antennas: usize,
    pub mode: PilotMode,
    pub mean: f64,
    pub stderr: f64,
    /// Mean pilots per cell of each drop.
    pub per_drop: Vec<f64>,
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Overhead curve over `devices` (K values) for one mode. Drop `d` of
/// every K uses `stream.child(K).child(d)`.
pub fn pilot_overhead_experiment(
    cfg: &SimConfig,
    devices: &[usize],
    mode: PilotMode,
    stream: &RandomStream,
) -> Result<Vec<OverheadPoint>> {
    devices
        .iter()
        .map(|&k| {
            let mut c = cfg.clone();
            c.network.devices_per_cell = k;
            c.network.clusters_per_cell = c.network.clusters_per_cell.min(k);
            let per_drop = (0..c.experiment.drops)
                .map(|d| drop_overhead(&c, mode, &stream.child(k as u64).child(d as u64)).map(|o| o.mean_pilots()))
                .collect::<Result<Vec<f64>>>()?;
            let (mean, stderr) = mean_stderr(&per_drop);
            Ok(OverheadPoint {
                devices: k,
                antennas: c.network.antennas,
                mode,
                mean,
                stderr,
                per_drop,
            })
        })
        .collect()
}
