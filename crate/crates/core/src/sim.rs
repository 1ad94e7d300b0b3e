//! Monte Carlo evaluation of one drop over coherence blocks.
//!
//! Within a cluster the devices take turns on the cluster's pilot: in
//! block `b` the active device of a cluster is member `b mod size`. Every
//! block draws the active channels, despreads the pilots at every BS,
//! forms MMSE estimates and evaluates M-MMSE combining with the true
//! channels.
//!
//! Two link models share that loop. [`DenseModel`] keeps full `M x M`
//! correlation matrices. [`BeamModel`] keeps only the DFT beam powers of
//! each Toeplitz correlation, which makes every covariance diagonal and
//! scales to hundreds of devices per cell.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{
    despread_pilots, local_scattering_profile, ChannelSampler, MmseFilter, PilotBook, ToeplitzCorrelation,
};
use crate::clustering::{build_similarity_matrix, kmedoids, Clustering};
use crate::config::{ChannelConfig, ClusteringConfig, NetworkConfig};
use crate::error::{Error, Result};
use crate::linalg::{cn01, CMat, CVec, ZERO};
use crate::netgeom::DeviceDrop;
use crate::receiver::{
    mmmse_combiner, mmmse_combiner_diagonal, residual_covariance, uplink_sinr_all, ReceivedSet, SeReport,
};
use crate::rng::RandomStream;

/// Common power, noise and pilot length of a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Uplink power of every device (mW).
    pub power: f64,
    /// Noise power per sample (mW).
    pub noise: f64,
    pub tau_p: usize,
}

impl LinkBudget {
    pub fn new(net: &NetworkConfig, tau_p: usize) -> Self {
        Self {
            power: net.power_mw(),
            noise: net.noise_mw(),
            tau_p,
        }
    }
}

/// Correlation of every link, `[cell][device][bs]`, scaled by its gain.
pub fn link_profiles(drop: &DeviceDrop, antennas: usize, ch: &ChannelConfig) -> Vec<Vec<Vec<ToeplitzCorrelation>>> {
    drop.links
        .iter()
        .zip(&drop.betas)
        .map(|(cell_links, cell_betas)| {
            cell_links
                .iter()
                .zip(cell_betas)
                .map(|(links, betas)| {
                    links
                        .iter()
                        .zip(betas)
                        .map(|(l, &b)| {
                            local_scattering_profile(l.angle, ch.asd_rad(), antennas, ch.antenna_spacing).scaled(b)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// k-medoids on each cell's serving-BS correlations.
pub fn cluster_cells(
    profiles: &[Vec<Vec<ToeplitzCorrelation>>],
    clusters: usize,
    cfg: &ClusteringConfig,
    stream: &RandomStream,
) -> Result<Vec<Clustering>> {
    profiles
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            let own: Vec<ToeplitzCorrelation> = cell.iter().map(|links| links[i].clone()).collect();
            let s = build_similarity_matrix(i, &own)?;
            kmedoids(&s, clusters, cfg, &mut stream.child(i as u64).rng())
        })
        .collect()
}

/// Active device of every cluster in block `block`, `[cell][cluster]`.
pub fn active_devices(clusterings: &[Clustering], block: usize) -> Vec<Vec<usize>> {
    clusterings
        .iter()
        .map(|cl| {
            (0..cl.clusters())
                .map(|c| {
                    let m = cl.members(c);
                    m[block % m.len()]
                })
                .collect()
        })
        .collect()
}

/// Blocks needed for every device to be active `rounds` times.
pub fn blocks_for(clusterings: &[Clustering], rounds: usize) -> usize {
    let largest = clusterings
        .iter()
        .flat_map(|cl| cl.sizes.iter().copied())
        .max()
        .unwrap_or(1);
    largest * rounds
}

/// Link statistics of one drop.
pub trait DropModel {
    /// Estimators and residual covariances for one active set.
    type Prepared;

    fn cells(&self) -> usize;

    fn antennas(&self) -> usize;

    fn devices_per_cell(&self) -> usize;

    fn prepare(&self, active: &[Vec<usize>], pilots: &[Vec<usize>], budget: &LinkBudget) -> Result<Self::Prepared>;

    /// Channels of the active devices, `[cell][cluster][bs]`.
    fn draw_channels<R: Rng + ?Sized>(&self, active: &[Vec<usize>], rng: &mut R) -> Vec<Vec<Vec<CVec>>>;

    /// SINR of every active device, `[cell][cluster]`, given the true
    /// channels and the despread pilots `y[bs][pilot]`.
    fn block_sinr(
        &self,
        prepared: &Self::Prepared,
        pilots: &[Vec<usize>],
        channels: &[Vec<Vec<CVec>>],
        y: &[Vec<CVec>],
        budget: &LinkBudget,
    ) -> Result<Vec<Vec<f64>>>;
}

/// Devices sharing each pilot, as flat indices `cell * C + cluster`.
fn pilot_groups(pilots: &[Vec<usize>], tau_p: usize) -> Vec<Vec<usize>> {
    let clusters = pilots.first().map_or(0, Vec::len);
    let mut groups = vec![Vec::new(); tau_p];
    for (i, ps) in pilots.iter().enumerate() {
        for (c, &p) in ps.iter().enumerate() {
            groups[p].push(i * clusters + c);
        }
    }
    groups
}

fn check_shape(pilots: &[Vec<usize>], active: &[Vec<usize>], cells: usize, tau_p: usize) -> Result<usize> {
    let clusters = pilots.first().map_or(0, Vec::len);
    if pilots.len() != cells || active.len() != cells {
        return Err(Error::domain("one pilot row and one active row per cell are required"));
    }
    if pilots.iter().chain(active).any(|r| r.len() != clusters) {
        return Err(Error::domain("every cell needs the same number of clusters"));
    }
    if pilots.iter().flatten().any(|&p| p >= tau_p) {
        return Err(Error::domain("pilot index exceeds the pilot length"));
    }
    Ok(clusters)
}

/// True channels at BS `bs` of every active device, as a received set.
fn received_at(channels: &[Vec<Vec<CVec>>], bs: usize, m: usize, power: f64) -> ReceivedSet {
    let flat: Vec<(usize, &CVec)> = channels
        .iter()
        .enumerate()
        .flat_map(|(i, cell)| cell.iter().map(move |links| (i, &links[bs])))
        .collect();
    ReceivedSet {
        g: CMat::from_fn(m, flat.len(), |a, n| flat[n].1[a]),
        cell: flat.iter().map(|f| f.0).collect(),
        power: vec![power; flat.len()],
    }
}

fn split_cells(gammas: Vec<f64>, clusters: usize) -> Vec<Vec<f64>> {
    gammas.chunks(clusters.max(1)).map(<[f64]>::to_vec).collect()
}

/// Full correlation matrices.
#[derive(Debug, Clone)]
pub struct DenseModel {
    /// `r[cell][device][bs]`.
    pub r: Vec<Vec<Vec<CMat>>>,
    samplers: Vec<Vec<Vec<ChannelSampler>>>,
}

/// Per-BS estimators and `Z`.
#[derive(Debug, Clone)]
pub struct DensePrepared {
    /// `filters[bs][cell * C + cluster]`.
    pub filters: Vec<Vec<MmseFilter>>,
    pub z: Vec<CMat>,
}

impl DenseModel {
    pub fn new(profiles: &[Vec<Vec<ToeplitzCorrelation>>]) -> Self {
        Self::from_matrices(
            profiles
                .iter()
                .map(|c| c.iter().map(|d| d.iter().map(ToeplitzCorrelation::to_dense).collect()).collect())
                .collect(),
        )
    }

    pub fn from_matrices(r: Vec<Vec<Vec<CMat>>>) -> Self {
        let samplers = r
            .iter()
            .map(|c| c.iter().map(|d| d.iter().map(ChannelSampler::new).collect()).collect())
            .collect();
        Self { r, samplers }
    }
}

impl DropModel for DenseModel {
    type Prepared = DensePrepared;

    fn cells(&self) -> usize {
        self.r.len()
    }

    fn antennas(&self) -> usize {
        self.r
            .first()
            .and_then(|c| c.first())
            .and_then(|d| d.first())
            .map_or(0, CMat::nrows)
    }

    fn devices_per_cell(&self) -> usize {
        self.r.first().map_or(0, Vec::len)
    }

    fn prepare(&self, active: &[Vec<usize>], pilots: &[Vec<usize>], budget: &LinkBudget) -> Result<DensePrepared> {
        let cells = self.cells();
        let clusters = check_shape(pilots, active, cells, budget.tau_p)?;
        let m = self.antennas();
        let groups = pilot_groups(pilots, budget.tau_p);
        let mut filters = Vec::with_capacity(cells);
        let mut z = Vec::with_capacity(cells);
        for j in 0..cells {
            let mut slots: Vec<Option<MmseFilter>> = vec![None; cells * clusters];
            for g in &groups {
                let rs: Vec<&CMat> = g
                    .iter()
                    .map(|&n| &self.r[n / clusters][active[n / clusters][n % clusters]][j])
                    .collect();
                let powers = vec![budget.power; g.len()];
                for (&n, f) in g.iter().zip(MmseFilter::group(&rs, &powers, budget.noise, budget.tau_p)?) {
                    slots[n] = Some(f);
                }
            }
            let fs: Vec<MmseFilter> = slots.into_iter().map(|f| f.expect("every device has a pilot")).collect();
            z.push(residual_covariance(fs.iter().map(|f| &f.error_cov), m, budget.noise, budget.power));
            filters.push(fs);
        }
        Ok(DensePrepared { filters, z })
    }

    fn draw_channels<R: Rng + ?Sized>(&self, active: &[Vec<usize>], rng: &mut R) -> Vec<Vec<Vec<CVec>>> {
        active
            .iter()
            .enumerate()
            .map(|(i, ks)| {
                ks.iter()
                    .map(|&k| self.samplers[i][k].iter().map(|s| s.draw(rng)).collect())
                    .collect()
            })
            .collect()
    }

    fn block_sinr(
        &self,
        prepared: &DensePrepared,
        pilots: &[Vec<usize>],
        channels: &[Vec<Vec<CVec>>],
        y: &[Vec<CVec>],
        budget: &LinkBudget,
    ) -> Result<Vec<Vec<f64>>> {
        let clusters = pilots.first().map_or(0, Vec::len);
        let m = self.antennas();
        let flat_pilots: Vec<usize> = pilots.iter().flatten().copied().collect();
        let mut gammas = Vec::with_capacity(flat_pilots.len());
        for (i, fs) in prepared.filters.iter().enumerate() {
            let est: Vec<CVec> = fs
                .iter()
                .zip(&flat_pilots)
                .map(|(f, &p)| f.estimate(&y[i][p]))
                .collect();
            let g_hat = CMat::from_fn(m, est.len(), |a, n| est[n][a]);
            let own: Vec<usize> = (i * clusters..(i + 1) * clusters).collect();
            let v = mmmse_combiner(&g_hat, &own, &prepared.z[i])?.v;
            let set = received_at(channels, i, m, budget.power);
            gammas.extend(uplink_sinr_all(&v, &set, &own, budget.noise)?.iter().map(|s| s.gamma()));
        }
        Ok(split_cells(gammas, clusters))
    }
}

/// Diagonal (beam-domain) link model.
#[derive(Debug, Clone)]
pub struct BeamModel {
    /// `lambda[cell][device][bs][beam]`.
    pub lambda: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Per-BS diagonal estimator gains and `Z`.
#[derive(Debug, Clone)]
pub struct BeamPrepared {
    /// `gains[bs][cell * C + cluster][beam]`.
    pub gains: Vec<Vec<Vec<f64>>>,
    pub z: Vec<Vec<f64>>,
}

impl BeamModel {
    pub fn new(profiles: &[Vec<Vec<ToeplitzCorrelation>>]) -> Self {
        Self {
            lambda: profiles
                .iter()
                .map(|c| c.iter().map(|d| d.iter().map(ToeplitzCorrelation::beam_powers).collect()).collect())
                .collect(),
        }
    }
}

impl DropModel for BeamModel {
    type Prepared = BeamPrepared;

    fn cells(&self) -> usize {
        self.lambda.len()
    }

    fn antennas(&self) -> usize {
        self.lambda
            .first()
            .and_then(|c| c.first())
            .and_then(|d| d.first())
            .map_or(0, Vec::len)
    }

    fn devices_per_cell(&self) -> usize {
        self.lambda.first().map_or(0, Vec::len)
    }

    fn prepare(&self, active: &[Vec<usize>], pilots: &[Vec<usize>], budget: &LinkBudget) -> Result<BeamPrepared> {
        let cells = self.cells();
        let clusters = check_shape(pilots, active, cells, budget.tau_p)?;
        let m = self.antennas();
        let groups = pilot_groups(pilots, budget.tau_p);
        let p = budget.power;
        let mut gains = Vec::with_capacity(cells);
        let mut z = Vec::with_capacity(cells);
        for j in 0..cells {
            let lam = |n: usize| &self.lambda[n / clusters][active[n / clusters][n % clusters]][j];
            let mut gj = vec![Vec::new(); cells * clusters];
            let mut zj = vec![budget.noise / p; m];
            for g in &groups {
                let mut q = vec![budget.noise / budget.tau_p as f64; m];
                for &n in g {
                    for (qa, l) in q.iter_mut().zip(lam(n)) {
                        *qa += p * l;
                    }
                }
                for &n in g {
                    let l = lam(n);
                    gj[n] = l.iter().zip(&q).map(|(l, q)| p * l / q).collect();
                    for ((za, l), q) in zj.iter_mut().zip(l).zip(&q) {
                        *za += l - p * l * l / q;
                    }
                }
            }
            gains.push(gj);
            z.push(zj);
        }
        Ok(BeamPrepared { gains, z })
    }

    fn draw_channels<R: Rng + ?Sized>(&self, active: &[Vec<usize>], rng: &mut R) -> Vec<Vec<Vec<CVec>>> {
        active
            .iter()
            .enumerate()
            .map(|(i, ks)| {
                ks.iter()
                    .map(|&k| {
                        self.lambda[i][k]
                            .iter()
                            .map(|l| CVec::from_iterator(l.len(), l.iter().map(|&x| cn01(rng) * x.sqrt())))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn block_sinr(
        &self,
        prepared: &BeamPrepared,
        pilots: &[Vec<usize>],
        channels: &[Vec<Vec<CVec>>],
        y: &[Vec<CVec>],
        budget: &LinkBudget,
    ) -> Result<Vec<Vec<f64>>> {
        let clusters = pilots.first().map_or(0, Vec::len);
        let m = self.antennas();
        let flat_pilots: Vec<usize> = pilots.iter().flatten().copied().collect();
        let scale = budget.power.sqrt() * budget.tau_p as f64;
        let mut gammas = Vec::with_capacity(flat_pilots.len());
        for (i, gs) in prepared.gains.iter().enumerate() {
            let mut g_hat = CMat::from_element(m, gs.len(), ZERO);
            for (n, (gain, &p)) in gs.iter().zip(&flat_pilots).enumerate() {
                for (a, w) in gain.iter().enumerate() {
                    g_hat[(a, n)] = y[i][p][a] * Complex64::new(w / scale, 0.0);
                }
            }
            let own: Vec<usize> = (i * clusters..(i + 1) * clusters).collect();
            let v = mmmse_combiner_diagonal(&g_hat, &own, &prepared.z[i])?;
            let set = received_at(channels, i, m, budget.power);
            gammas.extend(uplink_sinr_all(&v, &set, &own, budget.noise)?.iter().map(|s| s.gamma()));
        }
        Ok(split_cells(gammas, clusters))
    }
}

/// Runs `blocks` coherence blocks. Block `b` draws from `stream.child(b)`,
/// so two runs that differ only in `pilots` see the same channels and
/// noise.
pub fn simulate_drop<D: DropModel>(
    model: &D,
    clusterings: &[Clustering],
    pilots: &[Vec<usize>],
    blocks: usize,
    budget: &LinkBudget,
    prelog: f64,
    stream: &RandomStream,
) -> Result<SeReport> {
    let cells = model.cells();
    if clusterings.len() != cells {
        return Err(Error::domain("one clustering per cell is required"));
    }
    let book = PilotBook::new(budget.tau_p, pilots.to_vec())?;
    let powers = vec![vec![budget.power; pilots.first().map_or(0, Vec::len)]; cells];
    let mut report = SeReport::new(cells, model.devices_per_cell(), prelog);
    let mut cache: Option<(Vec<Vec<usize>>, D::Prepared)> = None;
    for b in 0..blocks {
        let active = active_devices(clusterings, b);
        if cache.as_ref().is_none_or(|(a, _)| *a != active) {
            let prepared = model.prepare(&active, pilots, budget)?;
            cache = Some((active.clone(), prepared));
        }
        let prepared = &cache.as_ref().expect("prepared above").1;
        let mut rng = stream.child(b as u64).rng();
        let channels = model.draw_channels(&active, &mut rng);
        let y = despread_pilots(&channels, &book, &powers, budget.noise, &mut rng);
        let gammas = model.block_sinr(prepared, pilots, &channels, &y, budget)?;
        for (i, row) in gammas.iter().enumerate() {
            for (c, &g) in row.iter().enumerate() {
                report.push(i, active[i][c], g);
            }
        }
    }
    Ok(report)
}
