#![allow(dead_code)]

use fanova_shapley::gp::{Dataset, FitConfig, FittedModel, ModelParams};
use fanova_shapley::kernels::OrderVariances;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian features with a smooth nonlinear target.
pub fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let coef: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = rows
        .iter()
        .map(|r| {
            let lin: f64 = r.iter().zip(&coef).map(|(a, b)| a * b).sum();
            lin.sin() + 0.3 * r[0] * r[d - 1] + 0.05 * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Dataset::unnamed(rows, y).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, d: usize, q: usize) -> ModelParams {
    let ls = (0..d).map(|_| rng.gen_range(0.5..2.5)).collect();
    let ov = (0..=q).map(|_| rng.gen_range(0.05..1.5)).collect();
    ModelParams::new(ls, OrderVariances::new(ov).unwrap(), rng.gen_range(0.01..0.5)).unwrap()
}

pub fn random_model_with(seed: u64, n: usize, d: usize, q: usize, config: &FitConfig) -> FittedModel {
    let mut r = rng(seed);
    let data = random_data(&mut r, n, d);
    let params = random_params(&mut r, d, q);
    FittedModel::fit_params(&data, &params, config).unwrap()
}

pub fn random_model(seed: u64, n: usize, d: usize, q: usize) -> FittedModel {
    random_model_with(seed, n, d, q, &FitConfig::default())
}

pub fn random_query(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// `max |a - b| / max |b|`, the error relative to the reference's scale.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
