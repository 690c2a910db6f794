//! `fanova`: fit FANOVA GP models and emit Shapley explanations.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use fanova_shapley::datasets::{generate_synthetic, read_csv, read_queries, write_csv, SyntheticSpec};
use fanova_shapley::evaluation::{
    benchmark_csv, default_max_order, default_search_budget, rank_evaluation, run_benchmark, BenchmarkOptions,
    RankEvalOptions,
};
use fanova_shapley::gp::{fit_hyperparameters, load_model, save_model, FitConfig, Hyperparameters, MeasureKind};
use fanova_shapley::{
    dominance_matrix, explain_global, explain_local, Error, FittedModel, GlobalOptions, SearchOptions,
};

#[derive(Parser, Debug)]
#[command(
    name = "fanova",
    version,
    about = "FANOVA Gaussian processes with exact Shapley attributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Measure {
    Empirical,
    StandardNormal,
}

impl From<Measure> for MeasureKind {
    fn from(m: Measure) -> Self {
        match m {
            Measure::Empirical => MeasureKind::Empirical,
            Measure::StandardNormal => MeasureKind::StandardNormal,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model to a CSV file and write the model archive.
    Train {
        /// Training CSV with a header row.
        #[arg(long)]
        data: PathBuf,
        /// Label column (default: last column).
        #[arg(long)]
        target: Option<String>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        /// Highest interaction order (default: min(d, 5)).
        #[arg(long)]
        max_order: Option<usize>,
        #[arg(long, value_enum, default_value = "empirical")]
        measure: Measure,
        /// Subsample size for the empirical measure.
        #[arg(long)]
        max_background: Option<usize>,
        /// Line searches for hyperparameter tuning; 0 keeps the initial values.
        #[arg(long, default_value_t = 0)]
        search_budget: usize,
        #[arg(long, default_value_t = 0)]
        restarts: usize,
        /// Fit on raw targets instead of standardized ones.
        #[arg(long)]
        no_standardize: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Explain rows of the training data or of a query CSV.
    ExplainLocal {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated training row indices (0-based).
        #[arg(long, value_delimiter = ',', conflicts_with = "queries")]
        rows: Vec<usize>,
        /// CSV of query points with the model's feature columns.
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Monte-Carlo samples for the pairwise dominance matrix.
        #[arg(long)]
        dominance: Option<usize>,
        /// Output JSON file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Global variance attributions of a model.
    ExplainGlobal {
        #[arg(long)]
        model: PathBuf,
        /// Samples for the Monte-Carlo total-variance check.
        #[arg(long)]
        mc_samples: Option<usize>,
        /// Sequential accumulation with a single workspace.
        #[arg(long)]
        low_memory: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic dataset as CSV.
    Synth {
        /// Dataset id, 1 to 4.
        #[arg(long)]
        id: u8,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a synthetic dataset and report average ranks of the true features.
    RankEval {
        #[arg(long)]
        id: u8,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        d: usize,
        /// Number of explained training rows.
        #[arg(long)]
        instances: usize,
        #[arg(long)]
        max_order: Option<usize>,
        /// Line searches for hyperparameter tuning; 0 keeps the initial values
        /// (default: ten passes over all hyperparameters).
        #[arg(long)]
        search_budget: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time fast and naive Shapley means over a grid of dimensions.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_value = "8,12,16")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Largest dimension for which the naive enumeration runs.
        #[arg(long, default_value_t = 16)]
        naive_ceiling: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn json_text(value: &serde_json::Value) -> Result<String, Error> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn search_options(budget: usize, restarts: usize, seed: u64) -> Option<SearchOptions> {
    (budget > 0).then(|| SearchOptions {
        budget,
        restarts,
        seed,
        ..SearchOptions::default()
    })
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Train {
            data,
            target,
            out,
            max_order,
            measure,
            max_background,
            search_budget,
            restarts,
            no_standardize,
            seed,
        } => {
            let (data, report) = read_csv(&data, target.as_deref())?;
            if report.dropped_missing_target > 0 {
                eprintln!(
                    "warning: dropped {} rows with a missing target",
                    report.dropped_missing_target
                );
            }
            let config = FitConfig {
                measure: measure.into(),
                max_background,
                background_seed: seed,
                standardize: !no_standardize,
            };
            let q = max_order.unwrap_or_else(|| default_max_order(data.d()));
            let mut hp = Hyperparameters::initial(&data, q);
            if let Some(opts) = search_options(search_budget, restarts, seed) {
                hp = fit_hyperparameters(&data, &hp, &config, &opts)?.hyperparameters;
            }
            let model = FittedModel::fit(&data, &hp, &config)?;
            save_model(&model, &out)?;
            eprintln!(
                "trained n={} d={} Q={} log marginal likelihood {:.6}",
                model.n(),
                model.d(),
                model.max_order(),
                model.log_marginal_likelihood()
            );
        }
        Command::ExplainLocal {
            model,
            rows,
            queries,
            dominance,
            out,
            seed,
        } => {
            let model = load_model(&model)?;
            let points: Vec<Vec<f64>> =
                match queries {
                    Some(path) => read_queries(&path, model.data().feature_names())?,
                    None => {
                        if rows.is_empty() {
                            return Err(Error::InvalidInput("give --rows or --queries".into()));
                        }
                        rows.iter()
                            .map(|&i| {
                                model.data().rows().get(i).cloned().ok_or_else(|| {
                                    Error::InvalidInput(format!("row {i} out of range (n = {})", model.n()))
                                })
                            })
                            .collect::<Result<_, _>>()?
                    }
                };
            let objects = points
                .par_iter()
                .enumerate()
                .map(|(k, x)| {
                    let e = explain_local(&model, x)?;
                    let dom = dominance
                        .map(|s| dominance_matrix(&e, s, seed.wrapping_add(k as u64)))
                        .transpose()?;
                    Ok(e.to_json(dom.as_deref()))
                })
                .collect::<Result<Vec<_>, Error>>()?;
            eprintln!("explained {} rows", objects.len());
            emit(out.as_deref(), &json_text(&serde_json::Value::Array(objects))?)?;
        }
        Command::ExplainGlobal {
            model,
            mc_samples,
            low_memory,
            out,
            seed,
        } => {
            let model = load_model(&model)?;
            let g = explain_global(
                &model,
                &GlobalOptions {
                    mc_samples,
                    seed,
                    low_memory,
                },
            )?;
            emit(out.as_deref(), &json_text(&g.to_json())?)?;
        }
        Command::Synth { id, n, d, seed, out } => {
            let data = generate_synthetic(&SyntheticSpec::new(id, n, d, seed)?)?;
            write_csv(&data, &out)?;
        }
        Command::RankEval {
            id,
            n,
            d,
            instances,
            max_order,
            search_budget,
            seed,
            out,
        } => {
            let spec = SyntheticSpec::new(id, n, d, seed)?;
            let mut opts = RankEvalOptions::new(spec, instances);
            if let Some(q) = max_order {
                opts.max_order = q;
            }
            let budget = search_budget.unwrap_or_else(|| default_search_budget(d, opts.max_order));
            opts.search = search_options(budget, 0, seed);
            let r = rank_evaluation(&opts)?;
            emit(out.as_deref(), &json_text(&serde_json::to_value(&r)?)?)?;
        }
        Command::Benchmark {
            dims,
            n,
            naive_ceiling,
            repeats,
            seed,
            out,
        } => {
            let rows = run_benchmark(&BenchmarkOptions {
                dims,
                n,
                naive_ceiling,
                repeats,
                seed,
            })?;
            emit(out.as_deref(), &benchmark_csv(&rows))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
