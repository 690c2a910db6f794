//! Deterministic coordinate search over log-hyperparameters.
//!
//! Each iteration runs a golden-section probe along one coordinate inside a
//! bracket around the current value and only moves if the log marginal
//! likelihood strictly improves. Coordinates are visited in a seeded order,
//! one full pass at a time. Optional restarts perturb the initial point with
//! seeded Gaussian noise; the best starting point wins.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{combine_grams, factorize, feature_gram, log_det_and_quad, Dataset, FitConfig, Hyperparameters, Scaler};
use crate::error::{Error, Result};
use crate::kernels::{constrain, BaseKernel, FeatureMeasure, OrderVariances};

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOptions {
    /// Number of one-dimensional line searches.
    pub budget: usize,
    pub seed: u64,
    /// Perturbed starting points tried in addition to the initial one.
    pub restarts: usize,
    /// Half-width of the line-search bracket in log units.
    pub bracket: f64,
    /// Golden-section iterations per line search.
    pub probes: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            budget: 60,
            seed: 0,
            restarts: 0,
            bracket: 1.5,
            probes: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub hyperparameters: Hyperparameters,
    pub log_marginal_likelihood: f64,
    /// Objective at the starting point followed by every accepted step.
    pub trace: Vec<f64>,
}

const LOG_LENGTHSCALE_BOUNDS: (f64, f64) = (-6.9, 6.9);
const LOG_VARIANCE_BOUNDS: (f64, f64) = (-18.4, 6.9);
const LOG_NOISE_BOUNDS: (f64, f64) = (-13.8, 2.3);

struct Objective<'a> {
    data: &'a Dataset,
    columns: Vec<Vec<f64>>,
    measures: Vec<FeatureMeasure>,
    targets: DVector<f64>,
    cached: Vec<Option<(f64, Vec<f64>)>>,
}

impl<'a> Objective<'a> {
    fn new(data: &'a Dataset, config: &FitConfig) -> Self {
        let scaler = if config.standardize {
            Scaler::fit(data.targets())
        } else {
            Scaler::identity()
        };
        Objective {
            data,
            columns: data.columns(),
            measures: config.measures(data),
            targets: DVector::from_iterator(data.n(), data.targets().iter().map(|&y| scaler.apply(y))),
            cached: vec![None; data.d()],
        }
    }

    fn feature(&mut self, j: usize, log_l: f64) -> Option<&[f64]> {
        let stale = !matches!(&self.cached[j], Some((l, _)) if *l == log_l);
        if stale {
            let base = BaseKernel::squared_exponential(log_l.exp()).ok()?;
            let k = constrain(base, &self.measures[j]).ok()?;
            let emb = k.embeddings(&self.columns[j]);
            self.cached[j] = Some((log_l, feature_gram(&k, &self.columns[j], &emb)));
        }
        self.cached[j].as_ref().map(|(_, g)| g.as_slice())
    }

    /// Log marginal likelihood, `None` when the fit is not possible.
    fn eval(&mut self, hp: &Hyperparameters) -> Option<f64> {
        let params = hp.to_params().ok()?;
        for j in 0..self.data.d() {
            self.feature(j, hp.log_lengthscales[j])?;
        }
        let grams = self.cached.iter().flatten().map(|(_, g)| g.as_slice());
        let gram = combine_grams(grams, &params.order_variances, self.data.n());
        let (chol, _) = factorize(gram, params.noise).ok()?;
        let alpha = chol.solve(&self.targets);
        let v = log_det_and_quad(&chol, &self.targets, &alpha);
        v.is_finite().then_some(v)
    }
}

fn bounds(hp: &Hyperparameters, i: usize) -> (f64, f64) {
    let d = hp.log_lengthscales.len();
    let q = hp.log_order_variances.len();
    if i < d {
        LOG_LENGTHSCALE_BOUNDS
    } else if i < d + q {
        LOG_VARIANCE_BOUNDS
    } else {
        LOG_NOISE_BOUNDS
    }
}

/// Golden-section maximization of `f` on `[a, b]`; returns the best probe.
fn golden_section(mut a: f64, mut b: f64, probes: usize, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut e = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fe = f(e);
    let mut best = if fe > fc { (e, fe) } else { (c, fc) };
    for _ in 0..probes {
        if fc >= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + inv_phi * (b - a);
            fe = f(e);
            if fe > best.1 {
                best = (e, fe);
            }
        }
    }
    best
}

/// Maximizes the log marginal likelihood starting from `init`.
///
/// The result never scores below the best feasible starting point, and with
/// `restarts = 0` never below `init`.
pub fn fit_hyperparameters(
    data: &Dataset,
    init: &Hyperparameters,
    config: &FitConfig,
    options: &SearchOptions,
) -> Result<SearchResult> {
    if options.budget == 0 {
        return Err(Error::InvalidInput("search budget must be at least 1".into()));
    }
    if init.log_lengthscales.len() != data.d() {
        return Err(Error::InvalidInput(format!(
            "{} lengthscales for {} features",
            init.log_lengthscales.len(),
            data.d()
        )));
    }
    OrderVariances::new(init.log_order_variances.iter().map(|v| v.exp()).collect())?;

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut objective = Objective::new(data, config);

    let mut starts = vec![init.clone()];
    let jitter = Normal::new(0.0, 0.5).expect("valid normal");
    for _ in 0..options.restarts {
        let mut hp = init.clone();
        for i in 0..hp.len() {
            let (lo, hi) = bounds(&hp, i);
            hp.set(i, (hp.get(i) + jitter.sample(&mut rng)).clamp(lo, hi));
        }
        starts.push(hp);
    }
    let mut best: Option<(Hyperparameters, f64)> = None;
    for hp in starts {
        if let Some(v) = objective.eval(&hp) {
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((hp, v));
            }
        }
    }
    let Some((mut current, mut value)) = best else {
        return Err(Error::OptimizationFailed);
    };
    let mut trace = vec![value];

    let dims = current.len();
    let mut order: Vec<usize> = Vec::new();
    for _ in 0..options.budget {
        if order.is_empty() {
            order = (0..dims).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let i = order.pop().expect("refilled above");
        let (lo, hi) = bounds(&current, i);
        let centre = current.get(i);
        let a = (centre - options.bracket).max(lo);
        let b = (centre + options.bracket).min(hi);
        let mut probe = current.clone();
        let (best_x, best_v) = golden_section(a, b, options.probes, |x| {
            probe.set(i, x);
            objective.eval(&probe).unwrap_or(f64::NEG_INFINITY)
        });
        if best_v > value {
            current.set(i, best_x);
            value = best_v;
            trace.push(value);
        }
    }

    Ok(SearchResult {
        hyperparameters: current,
        log_marginal_likelihood: value,
        trace,
    })
}
