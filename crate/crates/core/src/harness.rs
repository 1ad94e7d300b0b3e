//! Experiment orchestration: the SE sweep over antennas, the pilot
//! overhead sweep over devices, and plot-data emission.
//!
//! Grid points run on the rayon pool and are merged in sweep order, so
//! outputs depend only on the configuration and seed.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::netgeom::{build_layout, drop_devices};
use crate::pilotopt::{assign_pilots, PilotMode};
use crate::rng::RandomStream;
use crate::scheduler::{drop_overhead, mean_stderr};
use crate::sim::{blocks_for, cluster_cells, link_profiles, simulate_drop, DenseModel, LinkBudget};

pub const SE_HEADER: [&str; 4] = ["M", "mode", "mean_se_per_cell", "stderr"];
pub const OVERHEAD_HEADER: [&str; 5] = ["K", "M", "mode", "mean_pilots_per_cell", "stderr"];

/// What an experiment sweeps.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Antennas per base station, with `K = C` from the config.
    Antennas(Vec<usize>),
    /// Devices per cell, once for every antenna count in `antennas`.
    Devices { devices: Vec<usize>, antennas: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub sweep: Sweep,
    pub modes: Vec<PilotMode>,
    /// Fixed parameters, drop and realization counts.
    pub config: SimConfig,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// The SE sweep over `M = 10..=128` with both modes.
    pub fn se_default(config: SimConfig) -> Self {
        Self {
            name: "se_sweep".into(),
            sweep: Sweep::Antennas(vec![10, 20, 30, 40, 50, 64, 80, 100, 128]),
            modes: PilotMode::ALL.to_vec(),
            config,
            out: None,
        }
    }

    /// The overhead sweep over `K = 40..=400` at `M = 64` and `128`.
    pub fn overhead_default(config: SimConfig) -> Self {
        Self {
            name: "overhead_sweep".into(),
            sweep: Sweep::Devices {
                devices: vec![40, 80, 120, 160, 200, 240, 280, 320, 360, 400],
                antennas: vec![64, 128],
            },
            modes: PilotMode::ALL.to_vec(),
            config,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.modes.is_empty() {
            return Err(Error::config("modes", "at least one mode is required"));
        }
        let mut seen = self.modes.clone();
        seen.sort_by_key(|m| m.as_str());
        seen.dedup();
        if seen.len() != self.modes.len() {
            return Err(Error::config("modes", "modes must be distinct"));
        }
        match &self.sweep {
            Sweep::Antennas(ms) => {
                if ms.is_empty() {
                    return Err(Error::config("sweep", "antenna list is empty"));
                }
                if ms.contains(&0) {
                    return Err(Error::config("sweep", "antenna counts must be positive"));
                }
            }
            Sweep::Devices { devices, antennas } => {
                if devices.is_empty() || antennas.is_empty() {
                    return Err(Error::config("sweep", "device and antenna lists must be non-empty"));
                }
                if devices.contains(&0) || antennas.contains(&0) {
                    return Err(Error::config("sweep", "device and antenna counts must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// One point of the SE curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SeRow {
    pub antennas: usize,
    pub mode: PilotMode,
    pub mean: f64,
    pub stderr: f64,
    /// Per-cell SE averaged over cells, one value per drop.
    pub per_drop: Vec<f64>,
}

/// Per-cell SE of one drop, averaged over cells, for every mode.
///
/// All modes see the same devices, clusters and channel blocks; only the
/// pilot assignment differs.
pub fn se_drop(cfg: &SimConfig, modes: &[PilotMode], stream: &RandomStream) -> Result<Vec<f64>> {
    let net = &cfg.network;
    let layout = build_layout(net)?;
    let drop = drop_devices(&layout, net, &stream.named("drop"))?;
    let links = link_profiles(&drop, net.antennas, &cfg.channel);
    let clusterings = cluster_cells(&links, net.clusters_per_cell, &cfg.clustering, &stream.named("clustering"))?;
    let model = DenseModel::new(&links);
    let budget = LinkBudget::new(net, net.tau_p());
    let blocks = blocks_for(&clusterings, cfg.experiment.realizations_per_drop);
    modes
        .iter()
        .map(|&mode| {
            let mut rng = stream.named("pilots").child(mode as u64).rng();
            let pilots = assign_pilots(&drop.betas, &clusterings, mode, &cfg.pilotopt, &mut rng)?;
            let report = simulate_drop(
                &model,
                &clusterings,
                &pilots.pilots,
                blocks,
                &budget,
                net.prelog(),
                &stream.named("blocks"),
            )?;
            let cells = report.per_cell_se();
            Ok(cells.iter().sum::<f64>() / cells.len() as f64)
        })
        .collect()
}

/// Mean per-cell SE and standard error over drops for every `(M, mode)`.
///
/// Drop `d` at antenna count `M` uses `seed / M / d`, shared by all modes.
pub fn run_se_sweep(spec: &ExperimentSpec) -> Result<Vec<SeRow>> {
    spec.validate()?;
    let Sweep::Antennas(antennas) = &spec.sweep else {
        return Err(Error::config("sweep", "the SE sweep varies antennas"));
    };
    let root = RandomStream::new(spec.config.seed);
    let drops = spec.config.experiment.drops;
    let jobs: Vec<(usize, usize)> = antennas.iter().flat_map(|&m| (0..drops).map(move |d| (m, d))).collect();
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(m, d)| {
            let mut cfg = spec.config.clone();
            cfg.network.antennas = m;
            se_drop(&cfg, &spec.modes, &root.child(m as u64).child(d as u64))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (mi, &m) in antennas.iter().enumerate() {
        let block = &results[mi * drops..(mi + 1) * drops];
        for (k, &mode) in spec.modes.iter().enumerate() {
            let per_drop: Vec<f64> = block.iter().map(|r| r[k]).collect();
            let (mean, stderr) = mean_stderr(&per_drop);
            rows.push(SeRow {
                antennas: m,
                mode,
                mean,
                stderr,
                per_drop,
            });
        }
    }
    Ok(rows)
}

/// One point of the overhead curve.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub devices: usize,
    pub antennas: usize,
    pub mode: PilotMode,
    pub mean: f64,
    pub stderr: f64,
    /// Pilots per cell averaged over cells, one value per drop.
    pub per_drop: Vec<f64>,
}

/// Mean pilots per cell over cells and drops for every `(K, M, mode)`.
///
/// Drop `d` at `(K, M)` uses `seed / M / K / d`, shared by all modes.
pub fn run_overhead_sweep(spec: &ExperimentSpec) -> Result<Vec<OverheadRow>> {
    spec.validate()?;
    let Sweep::Devices { devices, antennas } = &spec.sweep else {
        return Err(Error::config("sweep", "the overhead sweep varies devices"));
    };
    let root = RandomStream::new(spec.config.seed);
    let drops = spec.config.experiment.drops;
    let mut jobs = Vec::new();
    for &m in antennas {
        for &k in devices {
            for &mode in &spec.modes {
                for d in 0..drops {
                    jobs.push((m, k, mode, d));
                }
            }
        }
    }
    let results: Vec<f64> = jobs
        .par_iter()
        .map(|&(m, k, mode, d)| {
            let mut cfg = spec.config.clone();
            cfg.network.antennas = m;
            cfg.network.devices_per_cell = k;
            cfg.network.clusters_per_cell = cfg.network.clusters_per_cell.min(k);
            let stream = root.child(m as u64).child(k as u64).child(d as u64);
            drop_overhead(&cfg, mode, &stream).map(|o| o.mean_pilots())
        })
        .collect::<Result<_>>()?;
    Ok(results
        .chunks(drops)
        .zip(jobs.iter().step_by(drops))
        .map(|(per_drop, &(m, k, mode, _))| {
            let (mean, stderr) = mean_stderr(per_drop);
            OverheadRow {
                devices: k,
                antennas: m,
                mode,
                mean,
                stderr,
                per_drop: per_drop.to_vec(),
            }
        })
        .collect())
}

pub fn write_se_csv<W: Write>(out: W, rows: &[SeRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SE_HEADER)?;
    for r in rows {
        w.write_record([
            r.antennas.to_string(),
            r.mode.to_string(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.stderr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_overhead_csv<W: Write>(out: W, rows: &[OverheadRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OVERHEAD_HEADER)?;
    for r in rows {
        w.write_record([
            r.devices.to_string(),
            r.antennas.to_string(),
            r.mode.to_string(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.stderr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One curve: a mode, optionally at a fixed antenna count.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub mode: String,
    /// Antenna count for overhead curves.
    pub antennas: Option<usize>,
    /// `(x, mean, stderr)` in input order.
    pub points: Vec<(f64, f64, f64)>,
}

impl Curve {
    pub fn file_name(&self, stem: &str) -> String {
        match self.antennas {
            Some(m) => format!("{stem}_M{m}_{}.dat", self.mode),
            None => format!("{stem}_{}.dat", self.mode),
        }
    }
}

/// Largest gap between two modes at a common x.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSummary {
    pub x_label: String,
    /// Antenna count of the curve pair, for overhead data.
    pub antennas: Option<usize>,
    pub x: f64,
    pub modes: (String, String),
    /// `mean(first) - mean(second)`.
    pub gap: f64,
    /// Gap relative to the second mode's mean.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub x_label: String,
    pub curves: Vec<Curve>,
    pub summary: GapSummary,
}

impl PlotData {
    /// Writes one whitespace-separated file per curve into `dir` and
    /// returns their paths.
    pub fn write_curves(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.curves
            .iter()
            .map(|c| {
                let path = dir.join(c.file_name(stem));
                let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
                writeln!(f, "# {} mean stderr", self.x_label)?;
                for (x, m, s) in &c.points {
                    writeln!(f, "{x} {m:.6} {s:.6}")?;
                }
                f.flush()?;
                Ok(path)
            })
            .collect()
    }

    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let at = match s.antennas {
            Some(m) => format!("{} = {} (M = {m})", s.x_label, s.x),
            None => format!("{} = {}", s.x_label, s.x),
        };
        format!(
            "max gap {} - {}: {:.6} ({:.2}%) at {at}\n",
            s.modes.0,
            s.modes.1,
            s.gap,
            100.0 * s.relative
        )
    }
}

/// Parses a sweep CSV (either schema) into curves and the max-gap summary.
///
/// The gap compares the first two modes in order of appearance; with a
/// single mode or no common x it is zero at the first row.
pub fn emit_plotdata<R: BufRead>(input: R) -> Result<PlotData> {
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::parse(1, "empty input")),
    };
    let cols: Vec<&str> = header.trim().split(',').collect();
    let overhead = if cols == SE_HEADER {
        false
    } else if cols == OVERHEAD_HEADER {
        true
    } else {
        return Err(Error::parse(1, format!("unknown header `{}`", header.trim())));
    };
    let x_label = if overhead { "K" } else { "M" }.to_string();

    let mut curves: Vec<Curve> = Vec::new();
    let mut mode_order: Vec<String> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::parse(lineno, format!("expected {} fields, got {}", cols.len(), f.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(lineno, format!("bad {what} `{s}`")))
        };
        let (antennas, x, mode, mean, stderr) = if overhead {
            let m = f[1].parse::<usize>().map_err(|_| Error::parse(lineno, format!("bad M `{}`", f[1])))?;
            (Some(m), num(f[0], "K")?, f[2], num(f[3], "mean")?, num(f[4], "stderr")?)
        } else {
            (None, num(f[0], "M")?, f[1], num(f[2], "mean")?, num(f[3], "stderr")?)
        };
        if mode.is_empty() {
            return Err(Error::parse(lineno, "empty mode"));
        }
        if !mode_order.iter().any(|m| m == mode) {
            mode_order.push(mode.to_string());
        }
        match curves.iter_mut().find(|c| c.mode == mode && c.antennas == antennas) {
            Some(c) => c.points.push((x, mean, stderr)),
            None => curves.push(Curve {
                mode: mode.to_string(),
                antennas,
                points: vec![(x, mean, stderr)],
            }),
        }
    }
    let Some(first) = curves.first() else {
        return Err(Error::parse(1, "no data rows"));
    };

    let mut summary = GapSummary {
        x_label: x_label.clone(),
        antennas: first.antennas,
        x: first.points[0].0,
        modes: (first.mode.clone(), mode_order.get(1).cloned().unwrap_or_else(|| first.mode.clone())),
        gap: 0.0,
        relative: 0.0,
    };
    if let [a, b, ..] = mode_order.as_slice() {
        // curves keyed by (antennas, x); BTreeMap keeps the scan order fixed
        let mut pairs: BTreeMap<(Option<usize>, u64), (Option<f64>, Option<f64>)> = BTreeMap::new();
        for c in &curves {
            for &(x, mean, _) in &c.points {
                let e = pairs.entry((c.antennas, x.to_bits())).or_default();
                if &c.mode == a {
                    e.0 = Some(mean);
                } else if &c.mode == b {
                    e.1 = Some(mean);
                }
            }
        }
        let mut best: Option<GapSummary> = None;
        for (&(antennas, xb), &(ma, mb)) in &pairs {
            let (Some(ma), Some(mb)) = (ma, mb) else { continue };
            let gap = ma - mb;
            if best.as_ref().is_none_or(|s| gap.abs() > s.gap.abs()) {
                best = Some(GapSummary {
                    x_label: x_label.clone(),
                    antennas,
                    x: f64::from_bits(xb),
                    modes: (a.clone(), b.clone()),
                    gap,
                    relative: if mb != 0.0 { gap / mb } else { 0.0 },
                });
            }
        }
        if let Some(b) = best {
            summary = b;
        }
    }
    Ok(PlotData {
        x_label,
        curves,
        summary,
    })
}
