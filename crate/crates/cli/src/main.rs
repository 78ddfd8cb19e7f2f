//! `sdbe`: command line front end for occluded-feature estimation.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "sdbe",
    version,
    about = "Estimate occlusion-free features by subspace decomposition"
)]
struct Cli {
    /// key=value settings file; flags given on the command line take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct EstimatorArgs {
    #[arg(long, value_parser = ["l1", "l2"])]
    mode: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_parser = ["on", "off"])]
    normalize_columns: Option<String>,
    #[arg(long, value_parser = ["on", "off"])]
    normalize_query: Option<String>,
    #[arg(long, value_parser = ["on", "off"])]
    normalize_output: Option<String>,
}

#[derive(Debug, Args, Default)]
struct WorldArgs {
    /// default, benchmark or orthogonal
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    overlap: Option<f64>,
    /// Extra world or run settings as key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic world into a directory
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        world: WorldArgs,
    },
    /// Group training vectors by class into a class dictionary
    BuildCd {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = ["on", "off"], default_value = "on")]
        normalize: String,
    },
    /// Subtract paired occluded and occlusion-free vectors into an error dictionary
    BuildOed {
        #[arg(long)]
        occluded: PathBuf,
        #[arg(long)]
        free: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = ["on", "off"], default_value = "on")]
        normalize: String,
    },
    /// Fit an estimator from a class dictionary and an optional error dictionary
    Fit {
        #[arg(long)]
        cd: Option<PathBuf>,
        #[arg(long)]
        oed: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Fold an l2 model into a single linear layer
    Compile {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate occlusion-free features for a set of queries
    Estimate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-query diagnostics CSV (stdout when omitted)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Classify queries, optionally after estimation
    Classify {
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Nearest-neighbour prototypes (container or CSV)
        #[arg(long, conflicts_with = "softmax", required_unless_present = "softmax")]
        prototypes: Option<PathBuf>,
        /// Softmax weights CSV: class id, bias, then m weights per row
        #[arg(long)]
        softmax: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a softmax classifier and write its weights CSV
    TrainSoftmax {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 1.0)]
        learning_rate: f64,
        #[arg(long, default_value_t = 1e-4)]
        l2_penalty: f64,
    },
    /// Sweep methods and lambdas over synthetic worlds
    Eval {
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Comma separated lambda values
        #[arg(long)]
        lambda_grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histogram of correlations between class and error dictionary columns
    Corr {
        #[arg(long)]
        cd: Option<PathBuf>,
        #[arg(long)]
        oed: Option<PathBuf>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary CSV with pair counts and mean |rho|
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Relative l2 and l0 size of the error between clean and occluded vectors
    Stats {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        occluded: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a container as CSV
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl EstimatorArgs {
    fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        cfg.set_opt("mode", self.mode.as_ref())?;
        cfg.set_opt("lambda", self.lambda)?;
        cfg.set_opt("normalize_columns", self.normalize_columns.as_ref())?;
        cfg.set_opt("normalize_query", self.normalize_query.as_ref())?;
        cfg.set_opt("normalize_output", self.normalize_output.as_ref())
    }
}

impl WorldArgs {
    fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.set_opt("preset", self.preset.as_ref())?;
        cfg.set_opt("seed", self.seed)?;
        cfg.set_opt("overlap", self.overlap)
    }
}

fn path_opt(cfg: &mut RunConfig, key: &str, p: &Option<PathBuf>) -> CliResult<()> {
    cfg.set_opt(key, p.as_ref().map(|p| p.display().to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Synth { out_dir, world } => {
            world.apply(&mut cfg)?;
            commands::synth(&cfg, &out_dir)
        }
        Command::BuildCd {
            input,
            out,
            normalize,
        } => commands::build_cd(&input, &out, normalize == "on"),
        Command::BuildOed {
            occluded,
            free,
            out,
            normalize,
        } => commands::build_oed(&occluded, &free, &out, normalize == "on"),
        Command::Fit { cd, oed, out, est } => {
            path_opt(&mut cfg, "cd", &cd)?;
            path_opt(&mut cfg, "oed", &oed)?;
            path_opt(&mut cfg, "out", &out)?;
            est.apply(&mut cfg)?;
            commands::fit(&cfg)
        }
        Command::Compile { model, out } => {
            path_opt(&mut cfg, "model", &model)?;
            path_opt(&mut cfg, "out", &out)?;
            commands::compile(&cfg)
        }
        Command::Estimate {
            model,
            queries,
            out,
            report,
        } => {
            path_opt(&mut cfg, "model", &model)?;
            path_opt(&mut cfg, "queries", &queries)?;
            path_opt(&mut cfg, "out", &out)?;
            commands::estimate(&cfg, report.as_deref())
        }
        Command::Classify {
            queries,
            model,
            prototypes,
            softmax,
            out,
        } => {
            path_opt(&mut cfg, "queries", &queries)?;
            path_opt(&mut cfg, "model", &model)?;
            let classifier = match (prototypes, softmax) {
                (Some(p), None) => commands::ClassifierFile::Prototypes(p),
                (None, Some(s)) => commands::ClassifierFile::Softmax(s),
                _ => {
                    return Err(CliError::Usage(
                        "give exactly one of --prototypes or --softmax".into(),
                    ))
                }
            };
            commands::classify(&cfg, &classifier, out.as_deref())
        }
        Command::TrainSoftmax {
            data,
            out,
            seed,
            epochs,
            learning_rate,
            l2_penalty,
        } => {
            cfg.set_opt("seed", seed)?;
            let train = sdbe_core::TrainConfig {
                learning_rate,
                epochs,
                l2_penalty,
                seed: cfg.parsed_or("seed", 0)?,
            };
            commands::train_softmax(&data, &train, out.as_deref())
        }
        Command::Eval {
            world,
            est,
            lambda_grid,
            out,
        } => {
            world.apply(&mut cfg)?;
            est.apply(&mut cfg)?;
            cfg.set_opt("lambda_grid", lambda_grid)?;
            commands::eval(&cfg, out.as_deref())
        }
        Command::Corr {
            cd,
            oed,
            bins,
            out,
            summary,
        } => {
            path_opt(&mut cfg, "cd", &cd)?;
            path_opt(&mut cfg, "oed", &oed)?;
            cfg.set_opt("bins", bins)?;
            commands::corr(&cfg, out.as_deref(), summary.as_deref())
        }
        Command::Stats {
            clean,
            occluded,
            tau,
            out,
        } => {
            cfg.set_opt("tau", tau)?;
            commands::stats(&cfg, &clean, &occluded, out.as_deref())
        }
        Command::Export { input, out } => commands::export(&input, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error:usage:{first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error:{}:{msg}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
