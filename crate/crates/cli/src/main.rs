//! `gridguide`: collapse tracing, knot placement, schedule export and audits.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gridguide::collapse::{collapse, default_traced_nodes, reverse_for_deployment, CollapseSchedule, Orientation};
use gridguide::feasibility::{check_compression, DEFAULT_SAMPLES, DEFAULT_THRESHOLD};
use gridguide::geometry::{involute, PlanarArcCurve};
use gridguide::io::{self, ExportFormat};
use gridguide::reparam::{linearize, optimize_synchronized, select_n, sweep, GaConfig, OptimizerInfo};
use gridguide::samples;

/// Exit code for runs that completed but raised validation flags.
const FLAGGED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "gridguide",
    version,
    about = "Deployment guidance paths for elastic gridshells"
)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collapse a deployed grid and write the traced deployment paths.
    Collapse {
        model: PathBuf,
        /// Collapse configuration (schedule overrides and traced nodes).
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Place shared knots on a trace.
    Reparam {
        trace: PathBuf,
        /// Fixed number of interior knots.
        #[arg(long, conflicts_with = "auto_r", required_unless_present = "auto_r")]
        n: Option<usize>,
        /// Smallest n with √E_ass below this distance (meters).
        #[arg(long)]
        auto_r: Option<f64>,
        /// Largest n tried by --auto-r.
        #[arg(long, default_value_t = 12)]
        nmax: usize,
        #[command(flatten)]
        ga: GaArgs,
        /// Accept a trace that is not in deployment orientation.
        #[arg(long)]
        force: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the displacement schedule of a linearized path set.
    Export {
        linpaths: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Audit a linearized path set for member compression.
    Check {
        linpaths: PathBuf,
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Sample times per knot segment.
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        /// Skip the model fingerprint check.
        #[arg(long)]
        force: bool,
    },
    /// Involute of a polyline curve, as a timed path.
    Involute {
        #[arg(long)]
        curve: PathBuf,
        /// Traced material arc length along the curve.
        #[arg(long)]
        s0: f64,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Arc-length resampling of the input curve.
        #[arg(long, default_value_t = 4000)]
        resolution: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Optimized √E_ass for n = 1..nmax.
    Sweep {
        trace: PathBuf,
        /// Reference distance marked in the table (meters).
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 12)]
        nmax: usize,
        #[command(flatten)]
        ga: GaArgs,
        /// CSV copy of the table.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write a bundled synthetic model.
    Example {
        #[arg(value_enum)]
        name: ExampleName,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write a matching collapse configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Copy)]
struct GaArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = 60)]
    population: usize,
    #[arg(long, default_value_t = 150)]
    generations: usize,
}

impl GaArgs {
    fn config(self) -> GaConfig {
        GaConfig {
            seed: self.seed,
            restarts: self.restarts,
            population: self.population,
            generations: self.generations,
            ..GaConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleName {
    Dome,
    Strip,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Collapse {
            model,
            schedule,
            output,
        } => run_collapse(&model, schedule.as_deref(), &output),
        Command::Reparam {
            trace,
            n,
            auto_r,
            nmax,
            ga,
            force,
            output,
        } => run_reparam(&trace, n, auto_r, nmax, ga.config(), force, &output),
        Command::Export {
            linpaths,
            format,
            output,
        } => {
            let paths = io::load_linpaths(&linpaths)?;
            let format = match format {
                Format::Csv => ExportFormat::Csv,
                Format::Json => ExportFormat::Json,
            };
            io::export_schedule(&paths, format, &output)?;
            println!(
                "wrote {} ({} nodes, {} knots)",
                output.display(),
                paths.nodes.len(),
                paths.knots.len()
            );
            Ok(0)
        }
        Command::Check {
            linpaths,
            model,
            threshold,
            samples,
            force,
        } => run_check(&linpaths, &model, threshold, samples, force),
        Command::Involute {
            curve,
            s0,
            samples,
            resolution,
            output,
        } => {
            let points = io::load_curve(&curve)?;
            let curve = PlanarArcCurve::from_points(points, resolution)?;
            let path = involute(&curve, s0, samples)?;
            io::save_path(&path, &output)?;
            println!(
                "wrote {} ({} samples, curve length {:.6})",
                output.display(),
                path.len(),
                curve.length()
            );
            Ok(0)
        }
        Command::Sweep {
            trace,
            r,
            nmax,
            ga,
            output,
        } => run_sweep(&trace, r, nmax, ga.config(), output.as_deref()),
        Command::Example { name, output, config } => {
            let (grid, traced) = match name {
                ExampleName::Dome => {
                    let grid = samples::dome(&samples::DomeSpec::default())?;
                    let traced = samples::dome_traced_nodes(&grid);
                    (grid, traced)
                }
                ExampleName::Strip => {
                    let grid = samples::wrapped_strip(&samples::StripSpec::default())?;
                    let traced = default_traced_nodes(&grid);
                    (grid, traced)
                }
            };
            io::save_model(&grid, &output)?;
            if let Some(path) = config {
                let cfg = io::CollapseConfig {
                    schema: Some(io::COLLAPSE_CONFIG_SCHEMA.to_string()),
                    traced: Some(traced),
                    ..io::CollapseConfig::default()
                };
                io::write_json(&path, &cfg)?;
            }
            println!("wrote {}", output.display());
            Ok(0)
        }
    }
}

fn run_collapse(model: &Path, config: Option<&Path>, output: &Path) -> Result<u8> {
    let (grid, fingerprint) = io::load_model_fingerprinted(model)?;
    let config = match config {
        Some(path) => io::load_collapse_config(path)?,
        None => io::CollapseConfig::default(),
    };
    let schedule = config.apply(CollapseSchedule::for_grid(&grid));
    let traced = config.traced.clone().unwrap_or_else(|| default_traced_nodes(&grid));
    let trace = collapse(&grid, &schedule, &traced)?;
    let mut trace = reverse_for_deployment(&trace);
    trace.model_fingerprint = fingerprint;
    io::save_trace(&trace, output)?;
    println!(
        "wrote {}: {} paths, {} samples, {} accepted / {} rejected steps, max length drift {:.3e}",
        output.display(),
        trace.len(),
        trace.times().len(),
        trace.stats.accepted_steps,
        trace.stats.rejected_steps,
        trace.stats.max_length_drift
    );
    Ok(0)
}

fn load_deployment_trace(path: &Path, force: bool) -> Result<gridguide::collapse::TraceSet> {
    let trace = io::load_trace(path)?;
    if trace.orientation != Orientation::Deployment && !force {
        bail!(
            "{}: trace is in collapse orientation (use --force to accept)",
            path.display()
        );
    }
    Ok(trace)
}

fn run_reparam(
    trace_path: &Path,
    n: Option<usize>,
    auto_r: Option<f64>,
    nmax: usize,
    config: GaConfig,
    force: bool,
    output: &Path,
) -> Result<u8> {
    let trace = load_deployment_trace(trace_path, force)?;
    let (result, threshold, met) = match (n, auto_r) {
        (Some(n), _) => (optimize_synchronized(&trace.paths, n, &config)?, None, None),
        (None, Some(r)) => {
            let selection = select_n(&trace.paths, r, nmax, &config)?;
            (selection.result, Some(r), Some(selection.met))
        }
        (None, None) => bail!("either --n or --auto-r is required"),
    };
    let info = OptimizerInfo {
        ga: config,
        converged: result.converged,
        threshold,
        threshold_met: met,
    };
    let paths = linearize(&trace, &result.knots, Some(info))?;
    io::save_linpaths(&paths, output).with_context(|| format!("writing {}", output.display()))?;
    println!(
        "wrote {}: n={}, √E_ass={:.6e} m, worst d_max={:.6e} m, knots {:?}",
        output.display(),
        paths.n(),
        result.energy.sqrt(),
        result.report.worst(),
        result.knots.knots()
    );
    if !result.converged {
        println!("note: the best restart was still improving when the GA stopped");
    }
    if met == Some(false) {
        println!("flag: √E_ass < {} not reached for n <= {nmax}", threshold.unwrap());
        return Ok(FLAGGED);
    }
    Ok(0)
}

fn run_check(linpaths: &Path, model: &Path, threshold: f64, samples: usize, force: bool) -> Result<u8> {
    let paths = io::load_linpaths(linpaths)?;
    let (grid, fingerprint) = io::load_model_fingerprinted(model)?;
    if paths.source.model_fingerprint != fingerprint && !force {
        bail!(
            "{} was not derived from {} (model fingerprint mismatch; use --force to override)",
            linpaths.display(),
            model.display()
        );
    }
    let report = check_compression(&paths, &grid, samples, threshold)?;
    println!(
        "{} node pairs, {} samples per segment, worst chord ratio {:.6}",
        report.pairs, report.samples_per_segment, report.worst_ratio
    );
    if report.is_clean() {
        println!("no compression flags at threshold {threshold}");
        return Ok(0);
    }
    println!("flagged segments: {:?}", report.flagged_segments);
    for f in &report.flagged {
        println!(
            "  segment {} t={:.6} member {} nodes {}-{} ratio {:.6} (rest ratio {:.6})",
            f.segment, f.t, f.member, paths.nodes[f.nodes[0]], paths.nodes[f.nodes[1]], f.ratio, f.rest_ratio
        );
    }
    Ok(FLAGGED)
}

fn run_sweep(trace_path: &Path, r: f64, nmax: usize, config: GaConfig, output: Option<&Path>) -> Result<u8> {
    if !(r.is_finite() && r > 0.0) {
        bail!("--r must be > 0");
    }
    let trace = load_deployment_trace(trace_path, false)?;
    let entries = sweep(&trace.paths, nmax, &config)?;
    let mut csv = String::from("n,sqrt_e_ass,e_ass,k,below_r,converged,seed\n");
    println!(
        "{:>3}  {:>12}  {:>3}  {:>7}  {:>8}",
        "n", "√E_ass [m]", "k", "< r", "time [s]"
    );
    for e in &entries {
        let root = e.result.energy.sqrt();
        println!(
            "{:>3}  {:>12.6e}  {:>3}  {:>7}  {:>8.2}",
            e.n,
            root,
            e.result.report.k,
            root < r,
            e.seconds
        );
        csv.push_str(&format!(
            "{},{:.8e},{:.8e},{},{},{},{}\n",
            e.n,
            root,
            e.result.energy,
            e.result.report.k,
            root < r,
            e.result.converged,
            config.seed
        ));
    }
    match entries.iter().find(|e| e.result.energy.sqrt() < r) {
        Some(e) => println!("smallest n with √E_ass < {r}: {}", e.n),
        None => println!("√E_ass < {r} not reached for n <= {nmax}"),
    }
    if let Some(path) = output {
        io::write_atomic(path, csv.as_bytes())?;
    }
    Ok(0)
}
