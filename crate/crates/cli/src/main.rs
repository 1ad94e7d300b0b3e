use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pilotgraph_core::config::ExperimentConfig;
use pilotgraph_core::harness::{
    emit_plotdata, run_overhead_sweep, run_se_sweep, write_overhead_csv, write_se_csv, ExperimentSpec, Sweep,
};
use pilotgraph_core::netgeom::{build_layout, drop_devices};
use pilotgraph_core::pilotopt::{read_dimacs, solve_coloring, ColoringModel, ExitFlag, PilotMode};
use pilotgraph_core::sim::{cluster_cells, link_profiles};
use pilotgraph_core::{Error, RandomStream, Result, SimConfig};

#[derive(Parser)]
#[command(name = "pilotgraph", version, about = "Massive MIMO pilot assignment by interference-graph coloring")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated pilot modes (ilp, random).
    #[arg(long, global = true, value_delimiter = ',')]
    modes: Option<Vec<PilotMode>>,
    /// Output file (or directory for plot-data); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seconds allowed per coloring solve.
    #[arg(long, global = true)]
    time_budget: Option<f64>,
    /// Use 50 channel realizations per drop.
    #[arg(long, global = true)]
    paper: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral efficiency per cell against antenna count.
    SeSweep {
        /// Comma-separated antenna counts.
        #[arg(long, value_delimiter = ',')]
        antennas: Option<Vec<usize>>,
        #[arg(long)]
        drops: Option<usize>,
    },
    /// Required pilots per cell against devices per cell.
    OverheadSweep {
        /// Comma-separated device counts.
        #[arg(long, value_delimiter = ',')]
        devices: Option<Vec<usize>>,
        /// Comma-separated antenna counts.
        #[arg(long, value_delimiter = ',')]
        antennas: Option<Vec<usize>>,
        #[arg(long)]
        drops: Option<usize>,
    },
    /// Clusters one drop and prints device assignments as CSV.
    Cluster,
    /// Colors a DIMACS edge-list graph with the minimum number of colors.
    SolveColoring {
        graph: PathBuf,
        /// Palette size; defaults to the file's cluster count or the vertex count.
        #[arg(long)]
        colors: Option<usize>,
    },
    /// Checks a configuration file and prints it with defaults filled in.
    ValidateConfig,
    /// Turns a sweep CSV into per-curve data files and a gap summary.
    PlotData { csv: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        e if e.is_config() => 2,
        Error::Infeasible { .. } => 3,
        _ => 1,
    }
}

fn load_config(g: &Global) -> Result<SimConfig> {
    let mut cfg = match &g.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(t) = g.time_budget {
        cfg.pilotopt.time_budget_s = t;
    }
    if g.paper {
        cfg.experiment.realizations_per_drop = ExperimentConfig::PAPER_REALIZATIONS;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    let mut cfg = load_config(g)?;
    match cli.command {
        Command::SeSweep { antennas, drops } => {
            if let Some(d) = drops {
                cfg.experiment.drops = d;
            }
            let mut spec = ExperimentSpec::se_default(cfg);
            if let Some(ms) = antennas {
                spec.sweep = Sweep::Antennas(ms);
            }
            apply_modes(&mut spec, g);
            let rows = run_se_sweep(&spec)?;
            write_se_csv(output(g.out.as_deref())?, &rows)?;
        }
        Command::OverheadSweep {
            devices,
            antennas,
            drops,
        } => {
            if let Some(d) = drops {
                cfg.experiment.drops = d;
            }
            let mut spec = ExperimentSpec::overhead_default(cfg);
            if let Sweep::Devices {
                devices: ks,
                antennas: ms,
            } = &mut spec.sweep
            {
                if let Some(d) = devices {
                    *ks = d;
                }
                if let Some(a) = antennas {
                    *ms = a;
                }
            }
            apply_modes(&mut spec, g);
            let rows = run_overhead_sweep(&spec)?;
            write_overhead_csv(output(g.out.as_deref())?, &rows)?;
        }
        Command::Cluster => cluster(&cfg, g.out.as_deref())?,
        Command::SolveColoring { graph, colors } => return solve(&cfg, &graph, colors, g.out.as_deref()),
        Command::ValidateConfig => {
            let mut out = output(g.out.as_deref())?;
            out.write_all(cfg.to_toml_string().as_bytes())?;
            out.flush()?;
        }
        Command::PlotData { csv } => {
            let data = emit_plotdata(BufReader::new(File::open(&csv)?))?;
            let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("curve");
            for p in data.write_curves(&dir, stem)? {
                eprintln!("wrote {}", p.display());
            }
            print!("{}", data.summary_text());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn apply_modes(spec: &mut ExperimentSpec, g: &Global) {
    if let Some(m) = &g.modes {
        spec.modes = m.clone();
    }
}

fn cluster(cfg: &SimConfig, out: Option<&Path>) -> Result<()> {
    let net = &cfg.network;
    let stream = RandomStream::new(cfg.seed);
    let layout = build_layout(net)?;
    let drop = drop_devices(&layout, net, &stream.named("drop"))?;
    let links = link_profiles(&drop, net.antennas, &cfg.channel);
    let clusterings = cluster_cells(&links, net.clusters_per_cell, &cfg.clustering, &stream.named("clustering"))?;
    let mut out = output(out)?;
    writeln!(out, "cell,device,cluster,medoid")?;
    for (cell, c) in clusterings.iter().enumerate() {
        for (device, &k) in c.assignment.iter().enumerate() {
            writeln!(out, "{cell},{device},{k},{}", c.medoids[k])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn solve(cfg: &SimConfig, path: &Path, colors: Option<usize>, out: Option<&Path>) -> Result<ExitCode> {
    let file = read_dimacs(BufReader::new(File::open(path)?))?;
    let n = file.graph.vertices();
    let palette = colors.or(file.layout.map(|(_, c)| c)).unwrap_or(n.max(1));
    if palette == 0 {
        return Err(Error::Config {
            field: "colors".into(),
            reason: "must be positive".into(),
        });
    }
    let model = ColoringModel::new(file.graph, palette, &cfg.pilotopt);
    let sol = solve_coloring(&model)?;
    if sol.exit_flag == ExitFlag::Infeasible {
        return Err(Error::Infeasible { palette });
    }
    let mut w = output(out)?;
    match file.layout {
        Some((_, clusters)) => {
            writeln!(w, "cell,cluster,pilot")?;
            for (v, c) in sol.colors.iter().enumerate() {
                writeln!(w, "{},{},{c}", v / clusters, v % clusters)?;
            }
        }
        None => {
            writeln!(w, "vertex,color")?;
            for (v, c) in sol.colors.iter().enumerate() {
                writeln!(w, "{v},{c}")?;
            }
        }
    }
    w.flush()?;
    eprintln!(
        "{} colors, {} (lower bound {}, {} nodes)",
        sol.num_colors_used, sol.exit_flag, sol.lower_bound, sol.nodes
    );
    if sol.exit_flag == ExitFlag::TimedOut && !sol.has_coloring() {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
