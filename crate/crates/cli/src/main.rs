//! Command-line front end: landscapes, experiment execution, annotation,
//! analysis and plotting.
//!
//! Exit codes: 0 success, 1 experiment finished with aborted runs, 2 usage,
//! configuration, format or integrity errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use alienlab::experiment::{self, AnalyzeOptions, AnnotationMode, ExperimentConfig};
use alienlab::landscape::{Landscape, MAX_EXHAUSTIVE_N};
use alienlab::plot;

#[derive(Parser)]
#[command(name = "alienlab", version, about = "NK-landscape search experiments with LLM and scripted agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect landscape files.
    #[command(subcommand)]
    Landscape(LandscapeCmd),
    /// Execute (or resume) an experiment.
    Run {
        config: PathBuf,
        /// Store directory; overrides `output_dir` in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Maximum number of runs executing at once.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Annotate the thought text of every stored trial.
    Annotate {
        store: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Build observation rows, the regression report and series files.
    Analyze {
        store: PathBuf,
        /// Output directory (default: STORE/analysis).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        allow_partial: bool,
        /// Analyze stores that mix configurations or fail manifest checks.
        #[arg(long)]
        force: bool,
        /// CSV with columns subject_id,k,trial,config_bits,payoff.
        #[arg(long)]
        human_baseline: Option<PathBuf>,
    },
    /// Render SVG charts from an analysis directory.
    Plot {
        series: PathBuf,
        /// Output directory (default: SERIES/figures).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum LandscapeCmd {
    /// Generate a landscape and write it to a file.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        /// Output file (default: landscape-n{N}-k{K}-s{SEED}.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print parameters, global optimum and local-optima count.
    Info { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Heuristic,
    Llm,
}

enum Failure {
    Usage(String),
    Error(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Error(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Landscape(LandscapeCmd::Gen { n, k, seed, out }) => {
            if n > MAX_EXHAUSTIVE_N {
                return Err(Failure::Usage(format!("capacity error: --n {n} exceeds the exhaustive bound of {MAX_EXHAUSTIVE_N}")));
            }
            if n == 0 || k >= n {
                return Err(Failure::Usage(format!("--k must be below --n (got k = {k}, n = {n})")));
            }
            let landscape = Landscape::generate(n, k, seed)?;
            let path = out.unwrap_or_else(|| PathBuf::from(format!("landscape-n{n}-k{k}-s{seed}.json")));
            std::fs::write(&path, landscape.save()).map_err(|e| format!("{}: {e}", path.display()))?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Landscape(LandscapeCmd::Info { file }) => {
            let bytes = std::fs::read(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            let l = Landscape::load(&bytes).map_err(|e| format!("{}: {e}", file.display()))?;
            print!("{}", landscape_report(&l)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, out, parallelism } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(p) = parallelism {
                if p == 0 {
                    return Err(Failure::Usage("--parallelism must be at least 1".into()));
                }
                cfg.parallelism = p;
            }
            let dir = out.unwrap_or_else(|| default_store_dir(&cfg, &config));
            eprintln!("running {} into {}", cfg.name, dir.display());
            let s = experiment::run_experiment(&cfg, &dir)?;
            println!("planned runs: {}", s.planned);
            println!("already stored: {}", s.skipped);
            println!("committed now: {}", s.committed);
            println!("aborted: {}", s.aborted.len());
            for id in &s.aborted {
                println!("  {id}");
            }
            Ok(if s.aborted.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Annotate { store, mode } => {
            require_store(&store)?;
            let mode = mode.map(|m| match m {
                ModeArg::Heuristic => AnnotationMode::Heuristic,
                ModeArg::Llm => AnnotationMode::Llm,
            });
            let r = experiment::annotate_store(&store, mode)?;
            println!("trials: {}", r.trials);
            println!("written: {}", r.written);
            println!("rewritten: {}", r.rewritten);
            println!("unchanged: {}", r.unchanged);
            println!("empty text: {}", r.empty_text);
            println!("heuristic fallbacks: {}", r.fallbacks);
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { store, out, allow_partial, force, human_baseline } => {
            require_store(&store)?;
            let r = experiment::analyze(&store, &AnalyzeOptions { out_dir: out, allow_partial, force, human_baseline })?;
            println!("runs: {}", r.runs);
            println!("observation rows: {}", r.rows);
            println!("active rows: {}", r.active_rows);
            match (&r.stage2_rows, &r.heckman_error) {
                (Some(n), _) => println!("stage-2 rows: {n}"),
                (None, Some(e)) => eprintln!("warning: two-step estimation failed: {e}"),
                _ => {}
            }
            println!("search distance while searching (mean, sd, n):");
            for (by, groups) in [("population", &r.distance_by_population), ("k", &r.distance_by_k)] {
                for g in groups {
                    println!("  {by} {}: {}, {}, {}", g.group, opt(g.mean), opt(g.sd), g.n_active);
                }
            }
            println!("outputs in {}", r.out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { series, out } => {
            let out = out.unwrap_or_else(|| series.join("figures"));
            for path in plot::plot_dir(&series, &out)? {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.3}"))
}

fn require_store(dir: &Path) -> Result<(), Failure> {
    let path = dir.join(experiment::STORE_FILE);
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Error(format!("no run store at {}", path.display())))
    }
}

/// `output_dir` from the configuration (relative to the configuration
/// file), or `runs/NAME` in the working directory.
fn default_store_dir(cfg: &ExperimentConfig, config_path: &Path) -> PathBuf {
    match &cfg.output_dir {
        Some(d) => config_path.parent().unwrap_or(Path::new("")).join(d),
        None => Path::new("runs").join(&cfg.name),
    }
}

fn landscape_report(l: &Landscape) -> Result<String, Failure> {
    let stats = l.enumerate_optima()?;
    let (peak, _) = &stats.global_optimum;
    Ok(format!(
        "n: {}\nk: {}\nseed: {}\nrng: {}\nglobal optimum: {peak} ({:.2} points)\nlocal optima: {}\n",
        l.n(),
        l.k(),
        l.seed(),
        alienlab::rng::RNG_ALGORITHM,
        l.payoff_points(peak)?,
        stats.local_optima.len()
    ))
}
