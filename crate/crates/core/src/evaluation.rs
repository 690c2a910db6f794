//! Rank evaluation on synthetic data and the fast-vs-naive timing protocol.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{average_rank, generate_synthetic, RankReport, SyntheticSpec};
use crate::error::{Error, Result};
use crate::explain_local::ssv_mean_all;
use crate::gp::{fit_hyperparameters, FitConfig, FittedModel, Hyperparameters, SearchOptions};
use crate::oracle::naive_ssv_means_unbounded;

/// Default interaction order: `min(d, 5)`.
pub fn default_max_order(d: usize) -> usize {
    d.min(5)
}

#[derive(Clone, Debug)]
pub struct RankEvalOptions {
    pub spec: SyntheticSpec,
    /// Number of training rows explained.
    pub instances: usize,
    pub max_order: usize,
    /// `None` keeps the initial hyperparameters.
    pub search: Option<SearchOptions>,
    pub config: FitConfig,
}

/// Ten full coordinate passes over `d` lengthscales, `Q + 1` order
/// variances and the noise.
pub fn default_search_budget(d: usize, max_order: usize) -> usize {
    10 * (d + max_order + 2)
}

impl RankEvalOptions {
    pub fn new(spec: SyntheticSpec, instances: usize) -> Self {
        let max_order = default_max_order(spec.d);
        RankEvalOptions {
            spec,
            instances,
            max_order,
            search: Some(SearchOptions {
                budget: default_search_budget(spec.d, max_order),
                seed: spec.seed,
                ..SearchOptions::default()
            }),
            config: FitConfig::standard_normal(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEvaluation {
    pub dataset: u8,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub truth: Vec<usize>,
    pub ideal: f64,
    pub log_marginal_likelihood: f64,
    pub report: RankReport,
}

/// Fits a model on the synthetic set, explains the first `instances` rows
/// and ranks the truth features by `|mean attribution|`.
pub fn rank_evaluation(options: &RankEvalOptions) -> Result<RankEvaluation> {
    let spec = options.spec;
    let data = generate_synthetic(&spec)?;
    if options.instances == 0 || options.instances > data.n() {
        return Err(Error::InvalidInput(format!(
            "instances must be in 1..={}, got {}",
            data.n(),
            options.instances
        )));
    }
    let init = Hyperparameters::initial(&data, options.max_order);
    let hp = match &options.search {
        Some(search) => fit_hyperparameters(&data, &init, &options.config, search)?.hyperparameters,
        None => init,
    };
    let model = FittedModel::fit(&data, &hp, &options.config)?;
    let truth = spec.truth();
    let ranks = data.rows()[..options.instances]
        .par_iter()
        .map(|x| average_rank(&ssv_mean_all(&model, x)?, &truth))
        .collect::<Result<Vec<f64>>>()?;
    Ok(RankEvaluation {
        dataset: spec.id,
        n: spec.n,
        d: spec.d,
        seed: spec.seed,
        ideal: spec.ideal_rank(),
        truth: truth.iter().map(|t| t + 1).collect(),
        log_marginal_likelihood: model.log_marginal_likelihood(),
        report: RankReport::from_ranks(ranks)?,
    })
}

#[derive(Clone, Debug)]
pub struct BenchmarkOptions {
    pub dims: Vec<usize>,
    pub n: usize,
    /// Largest `d` for which the naive enumeration is timed.
    pub naive_ceiling: usize,
    /// Timed repetitions; the minimum is reported.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            dims: vec![8, 12, 16],
            n: 200,
            naive_ceiling: 16,
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub d: usize,
    pub fast_seconds: f64,
    pub naive_seconds: Option<f64>,
}

fn time_min<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        std::hint::black_box(f()?);
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Model used for timing at dimension `d`: synthetic dataset 1 with the
/// initial hyperparameters and `Q = min(d, 5)`.
pub fn benchmark_model(d: usize, n: usize, seed: u64) -> Result<FittedModel> {
    let data = generate_synthetic(&SyntheticSpec::new(1, n, d, seed)?)?;
    let hp = Hyperparameters::initial(&data, default_max_order(d));
    FittedModel::fit(&data, &hp, &FitConfig::standard_normal())
}

/// Times fast and naive Shapley means for one query per dimension.
pub fn run_benchmark(options: &BenchmarkOptions) -> Result<Vec<BenchmarkRow>> {
    options
        .dims
        .iter()
        .map(|&d| {
            let model = benchmark_model(d, options.n, options.seed)?;
            let x = model.data().rows()[0].clone();
            let fast_seconds = time_min(options.repeats, || ssv_mean_all(&model, &x))?;
            let naive_seconds = if d <= options.naive_ceiling {
                Some(time_min(options.repeats, || naive_ssv_means_unbounded(&model, &x))?)
            } else {
                None
            };
            log::info!("benchmark d={d}: fast {fast_seconds:.6}s naive {naive_seconds:?}");
            Ok(BenchmarkRow {
                d,
                fast_seconds,
                naive_seconds,
            })
        })
        .collect()
}

/// CSV with columns `d,fast_seconds,naive_seconds`.
pub fn benchmark_csv(rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("d,fast_seconds,naive_seconds\n");
    for r in rows {
        let naive = r.naive_seconds.map_or("skipped".to_string(), |s| format!("{s:?}"));
        out.push_str(&format!("{},{:?},{}\n", r.d, r.fast_seconds, naive));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_marks_skipped() {
        let rows = [
            BenchmarkRow {
                d: 4,
                fast_seconds: 0.5,
                naive_seconds: Some(1.0),
            },
            BenchmarkRow {
                d: 40,
                fast_seconds: 0.25,
                naive_seconds: None,
            },
        ];
        assert_eq!(
            benchmark_csv(&rows),
            "d,fast_seconds,naive_seconds\n4,0.5,1.0\n40,0.25,skipped\n"
        );
    }

    #[test]
    fn benchmark_fast_matches_naive() {
        let model = benchmark_model(6, 30, 1).unwrap();
        let x = model.data().rows()[3].clone();
        let fast = ssv_mean_all(&model, &x).unwrap();
        let naive = naive_ssv_means_unbounded(&model, &x).unwrap();
        for (a, b) in fast.iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn small_rank_evaluation() {
        let mut opts = RankEvalOptions::new(SyntheticSpec::new(1, 60, 4, 0).unwrap(), 5);
        opts.search = None;
        let r = rank_evaluation(&opts).unwrap();
        assert_eq!(r.report.per_instance.len(), 5);
        assert!(r.report.per_instance.iter().all(|&v| (1.5..=3.5).contains(&v)));
    }
}
