//! Argument definitions and dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cpcp::diagnostics::{SwampOptions, DEFAULT_PROBE_SEED};
use cpcp::reduced;
use cpcp::solvers::{self, Method};

use crate::commands::{self, BenchSpec, RunFiles};
use crate::config::ConfigOverrides;
use crate::error::{CliError, Result, EXIT_OK};
use crate::generate::{generate, parse_dims, GeneratorKind, GeneratorSpec};
use crate::io;

#[derive(Debug, Parser)]
#[command(name = "cpcp", version, about = "CP decomposition with centroid projection initialization")]
pub struct Cli {
    /// Seed for generators and random initializations.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    /// Record factor iterates during `decompose`.
    #[arg(long, global = true)]
    pub keep_history: bool,
    /// Raise log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic tensor and its ground-truth factors.
    Generate(GenerateArgs),
    /// Report the lower, upper and gap bounds for a rank.
    Bounds(BoundsArgs),
    /// Fit a rank-R CP model and write factors, trace and summary.
    Decompose(DecomposeArgs),
    /// Compute swamp metrics from a factor history.
    Diagnose(DiagnoseArgs),
    /// Compare solver and initialization choices over seeded tensors.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GeneratorArgs {
    /// random_factors, swampy, symmetric, diagonal or noisy.
    #[arg(long, default_value = "random_factors")]
    pub kind: String,
    /// Dimensions as I,J,K.
    #[arg(long)]
    pub dims: String,
    #[arg(long)]
    pub rank: usize,
    /// Column collinearity of the swampy kind, in [0, 1).
    #[arg(long, default_value_t = 0.9)]
    pub collinearity: f64,
    /// Relative noise level of the noisy kind.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
}

impl GeneratorArgs {
    fn spec(&self, seed: u64) -> Result<GeneratorSpec> {
        Ok(GeneratorSpec {
            kind: GeneratorKind::parse(&self.kind, self.collinearity, self.noise)?,
            dims: parse_dims(&self.dims)?,
            rank: self.rank,
            seed,
        })
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Stem of the output files.
    #[arg(long, default_value = "tensor")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    pub tensor: PathBuf,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value = "bounds")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// key = value file with solver settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// als, rals or lsals.
    #[arg(long)]
    pub method: Option<String>,
    /// random, centroid or centroid_symmetric.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol_residual: Option<f64>,
    #[arg(long)]
    pub tol_stall: Option<f64>,
    /// Keep B = C throughout.
    #[arg(long)]
    pub symmetric: bool,
}

impl SolverArgs {
    fn overrides(&self) -> Result<ConfigOverrides> {
        let mut o = match &self.config {
            Some(path) => ConfigOverrides::parse(&path.display().to_string(), &io::read_text(path)?)?,
            None => ConfigOverrides::default(),
        };
        if let Some(v) = self.rank {
            o.set("rank", v);
        }
        if let Some(v) = &self.method {
            o.set("method", v);
        }
        if let Some(v) = &self.init {
            o.set("init", v);
        }
        if let Some(v) = self.max_iters {
            o.set("max_iters", v);
        }
        if let Some(v) = self.tol_residual {
            o.set("tol_residual", v);
        }
        if let Some(v) = self.tol_stall {
            o.set("tol_stall", v);
        }
        if self.symmetric {
            o.set("symmetric", true);
        }
        Ok(o)
    }
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    pub tensor: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write wall-clock times into the trace (makes it nondeterministic).
    #[arg(long)]
    pub timing: bool,
    #[arg(long, default_value = "run")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    pub tensor: PathBuf,
    /// History file written by `decompose --keep-history`.
    #[arg(long)]
    pub history: PathBuf,
    /// Trace of the same run; objectives are recomputed when absent.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Factors whose ranges the iterates are compared against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Number of probe vectors to average.
    #[arg(long, default_value_t = 1)]
    pub probes: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol_stall: f64,
    #[arg(long, default_value = "swamp")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub generator: GeneratorArgs,
    /// Comma-separated methods.
    #[arg(long, default_value = "als")]
    pub methods: String,
    /// Comma-separated init kinds.
    #[arg(long, default_value = "random,centroid")]
    pub inits: String,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
    /// Objective level for the iterations-to-threshold statistic.
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
    /// key = value file with shared solver settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, default_value = "bench")]
    pub name: String,
}

fn out_path(dir: &Path, file: String) -> PathBuf {
    dir.join(file)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let dir = cli.output_dir.as_path();
    match &cli.command {
        Command::Generate(args) => {
            let spec = args.generator.spec(cli.seed)?;
            let out = generate(&spec)?;
            io::write_text(&out_path(dir, format!("{}.tensor", args.name)), &io::format_tensor(&out.tensor))?;
            if let Some(f) = &out.factors {
                io::write_text(&out_path(dir, format!("{}.factors", args.name)), &io::format_factors(f))?;
            }
            Ok(EXIT_OK)
        }
        Command::Bounds(args) => {
            let t = io::read_tensor(&args.tensor)?;
            let report = commands::bounds_report(&t, args.rank)?;
            let text = commands::format_bounds(&report);
            io::write_text(&out_path(dir, format!("{}.json", args.name)), &text)?;
            print!("{text}");
            Ok(EXIT_OK)
        }
        Command::Decompose(args) => {
            let t = io::read_tensor(&args.tensor)?;
            let mut o = args.solver.overrides()?;
            if cli.keep_history {
                o.set("keep_history", true);
            }
            let cfg = o.build(cli.seed)?;
            let out = solvers::decompose(&t, &cfg)?;
            commands::write_run(&RunFiles::new(dir, &args.name), &cfg, &out, args.timing)?;
            println!(
                "{}: {} after {} iterations, objective {:.6e}",
                args.name,
                out.status,
                out.trace.records.len(),
                out.trace.final_objective()
            );
            Ok(commands::status_code(out.status))
        }
        Command::Diagnose(args) => {
            let t = io::read_tensor(&args.tensor)?;
            let history = io::read_history(&args.history)?;
            let trace = match &args.trace {
                Some(path) => {
                    let rest = io::parse_trace_objectives(&path.display().to_string(), &io::read_text(path)?)?;
                    let first = history.first().ok_or_else(|| CliError::Data("empty history".into()))?;
                    Some((reduced::objective(&t, first)?, rest))
                }
                None => None,
            };
            let opts = SwampOptions {
                probe_seed: DEFAULT_PROBE_SEED,
                probes: args.probes,
                tol_stall: args.tol_stall,
                reference: args.reference.as_deref().map(io::read_factors).transpose()?,
            };
            let report = commands::diagnose(&t, &history, trace, &opts)?;
            io::write_text(&out_path(dir, format!("{}.jsonl", args.name)), &commands::format_swamp(&report))?;
            Ok(EXIT_OK)
        }
        Command::Bench(args) => {
            let generator = args.generator.spec(cli.seed)?;
            let methods = args
                .methods
                .split(',')
                .map(|m| m.parse::<Method>())
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let inits: Vec<String> = args.inits.split(',').map(|s| s.trim().to_string()).collect();
            let mut o = match &args.config {
                Some(path) => ConfigOverrides::parse(&path.display().to_string(), &io::read_text(path)?)?,
                None => ConfigOverrides::default(),
            };
            o.set("rank", generator.rank);
            if let Some(v) = args.max_iters {
                o.set("max_iters", v);
            }
            let spec = BenchSpec {
                generator,
                methods,
                inits,
                repetitions: args.repetitions,
                config: o.build(cli.seed)?,
                threshold: args.threshold,
            };
            let report = commands::bench(&spec)?;
            let text = commands::format_bench(&report);
            io::write_text(&out_path(dir, format!("{}.json", args.name)), &text)?;
            for row in &report.rows {
                println!(
                    "{:<6} {:<18} median {:>8} iqr {:>8} reached {}/{}",
                    row.method,
                    row.init,
                    row.iters_median.map_or("inf".into(), |v| v.to_string()),
                    row.iters_iqr.map_or("inf".into(), |v| v.to_string()),
                    row.reached,
                    row.repetitions
                );
            }
            Ok(EXIT_OK)
        }
    }
}
