//! Exact FANOVA Gaussian-process regression.
//!
//! The posterior of a zero-mean GP with the additive constrained kernel is
//! stored as the Cholesky factor of `Sigma = K_add + (noise + jitter) I` and
//! the weight vector `alpha = Sigma^-1 y`. Targets are standardized before
//! fitting unless [`FitConfig::standardize`] is off; everything the model
//! reports is in standardized units.
//!
//! Exact inference only; expect a practical ceiling around `n = 2000`.

mod file;
mod search;

pub use file::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT};
pub use search::{fit_hyperparameters, SearchOptions, SearchResult};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::esp::EspAccumulator;
use crate::kernels::{constrain, weighted_sum, AdditiveKernel, BaseKernel, FeatureMeasure, OrderVariances};

/// Relative jitter added to the Gram diagonal before factorization.
pub const JITTER_RELATIVE: f64 = 1e-8;
/// Number of tenfold jitter escalations tried after the first attempt.
pub const JITTER_ESCALATIONS: usize = 3;

/// Training data: `n` rows of `d` features and one target per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("dataset has no rows".into()));
        }
        if rows.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let d = feature_names.len();
        if d == 0 {
            return Err(Error::InvalidInput("dataset has no features".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} values, expected {d}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has non-finite values")));
            }
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("targets contain non-finite values".into()));
        }
        Ok(Dataset {
            rows,
            targets,
            feature_names,
        })
    }

    /// Dataset with generated names `x1 .. xd`.
    pub fn unnamed(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let names = (1..=d).map(|j| format!("x{j}")).collect();
        Dataset::new(rows, targets, names)
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.d()).map(|j| self.column(j)).collect()
    }

    /// Same data with rows reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Dataset {
            rows: perm.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: perm.iter().map(|&i| self.targets[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Hex SHA-256 over shape, names and the exact bit patterns of the values.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.d() as u64).to_le_bytes());
        for name in &self.feature_names {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        for row in &self.rows {
            for v in row {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for v in &self.targets {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Hyperparameters in log space, the coordinates the optimizer works in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub log_lengthscales: Vec<f64>,
    pub log_order_variances: Vec<f64>,
    pub log_noise: f64,
}

impl Hyperparameters {
    /// Lengthscale per feature set to that feature's standard deviation,
    /// every order variance `1 / (Q + 1)` and noise variance `0.1`.
    pub fn initial(data: &Dataset, max_order: usize) -> Self {
        let log_lengthscales = data
            .columns()
            .iter()
            .map(|c| {
                let sd = std_dev(c);
                if sd > 0.0 {
                    sd.ln()
                } else {
                    0.0
                }
            })
            .collect();
        let s2 = 1.0 / (max_order + 1) as f64;
        Hyperparameters {
            log_lengthscales,
            log_order_variances: vec![s2.ln(); max_order + 1],
            log_noise: 0.1f64.ln(),
        }
    }

    pub fn max_order(&self) -> usize {
        self.log_order_variances.len().saturating_sub(1)
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        let all = self
            .log_lengthscales
            .iter()
            .chain(&self.log_order_variances)
            .chain(std::iter::once(&self.log_noise));
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("hyperparameters must be finite".into()));
        }
        ModelParams::new(
            self.log_lengthscales.iter().map(|v| v.exp()).collect(),
            OrderVariances::new(self.log_order_variances.iter().map(|v| v.exp()).collect())?,
            self.log_noise.exp(),
        )
    }

    pub(crate) fn len(&self) -> usize {
        self.log_lengthscales.len() + self.log_order_variances.len() + 1
    }

    pub(crate) fn get(&self, i: usize) -> f64 {
        let d = self.log_lengthscales.len();
        let q = self.log_order_variances.len();
        if i < d {
            self.log_lengthscales[i]
        } else if i < d + q {
            self.log_order_variances[i - d]
        } else {
            self.log_noise
        }
    }

    pub(crate) fn set(&mut self, i: usize, v: f64) {
        let d = self.log_lengthscales.len();
        let q = self.log_order_variances.len();
        if i < d {
            self.log_lengthscales[i] = v;
        } else if i < d + q {
            self.log_order_variances[i - d] = v;
        } else {
            self.log_noise = v;
        }
    }
}

/// Model parameters on their natural scale; order variances may be zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lengthscales: Vec<f64>,
    pub order_variances: OrderVariances,
    pub noise: f64,
}

impl ModelParams {
    pub fn new(lengthscales: Vec<f64>, order_variances: OrderVariances, noise: f64) -> Result<Self> {
        if !(noise > 0.0 && noise.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise variance must be positive, got {noise}"
            )));
        }
        for &l in &lengthscales {
            BaseKernel::squared_exponential(l)?;
        }
        Ok(ModelParams {
            lengthscales,
            order_variances,
            noise,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    /// Empirical measure over (a subsample of) the training column.
    Empirical,
    StandardNormal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub measure: MeasureKind,
    /// Subsample size for the empirical background; `None` uses every row.
    pub max_background: Option<usize>,
    pub background_seed: u64,
    pub standardize: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            measure: MeasureKind::Empirical,
            max_background: None,
            background_seed: 0,
            standardize: true,
        }
    }
}

impl FitConfig {
    pub fn standard_normal() -> Self {
        FitConfig {
            measure: MeasureKind::StandardNormal,
            ..FitConfig::default()
        }
    }

    /// Per-feature measures for `data` under this configuration.
    pub fn measures(&self, data: &Dataset) -> Vec<FeatureMeasure> {
        match self.measure {
            MeasureKind::StandardNormal => vec![FeatureMeasure::StandardNormal; data.d()],
            MeasureKind::Empirical => {
                let rows: Vec<usize> = match self.max_background {
                    Some(m) if m < data.n() => {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.background_seed);
                        let mut idx = rand::seq::index::sample(&mut rng, data.n(), m.max(1)).into_vec();
                        idx.sort_unstable();
                        idx
                    }
                    _ => (0..data.n()).collect(),
                };
                (0..data.d())
                    .map(|j| FeatureMeasure::Empirical {
                        background: rows.iter().map(|&i| data.rows()[i][j]).collect(),
                    })
                    .collect()
            }
        }
    }
}

/// Affine target transform `(y - mean) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub scale: f64,
}

impl Scaler {
    pub fn identity() -> Self {
        Scaler { mean: 0.0, scale: 1.0 }
    }

    pub fn fit(values: &[f64]) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let sd = std_dev(values);
        Scaler {
            mean,
            scale: if sd > 0.0 { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    /// Maps a standardized posterior mean back to target units.
    pub fn inverse_mean(&self, m: f64) -> f64 {
        m * self.scale + self.mean
    }
}

/// Population standard deviation.
fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Fitted posterior of a FANOVA GP.
#[derive(Clone, Debug)]
pub struct FittedModel {
    data: Dataset,
    columns: Vec<Vec<f64>>,
    targets: DVector<f64>,
    scaler: Scaler,
    config: FitConfig,
    params: ModelParams,
    kernel: AdditiveKernel,
    embeddings: Vec<Vec<f64>>,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
    alpha: DVector<f64>,
    constant_mean: f64,
}

/// Per-feature constrained Gram matrices, row-major.
pub(crate) fn feature_gram(kernel: &crate::kernels::ConstrainedKernel, column: &[f64], embedded: &[f64]) -> Vec<f64> {
    let n = column.len();
    let mut g = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v = kernel.eval_embedded(column[a], embedded[a], column[b], embedded[b]);
            g[a * n + b] = v;
            g[b * n + a] = v;
        }
    }
    g
}

/// Additive Gram matrix from per-feature Gram matrices.
pub(crate) fn combine_grams<'g>(
    grams: impl IntoIterator<Item = &'g [f64]>,
    weights: &OrderVariances,
    n: usize,
) -> DMatrix<f64> {
    let q_max = weights.max_order();
    let mut acc = EspAccumulator::new(n * n, q_max);
    for g in grams {
        acc.push(g);
    }
    let k = weighted_sum(&acc, weights, 0);
    DMatrix::from_row_slice(n, n, &k)
}

/// Factorizes `gram + (noise + jitter) I`, escalating the jitter tenfold on
/// failure.
pub(crate) fn factorize(mut gram: DMatrix<f64>, noise: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = gram.nrows();
    let mean_diag = gram.diagonal().iter().sum::<f64>() / n as f64;
    let base = JITTER_RELATIVE * mean_diag.abs();
    for i in 0..n {
        gram[(i, i)] += noise + base;
    }
    let mut jitter = base;
    for attempt in 0..=JITTER_ESCALATIONS {
        if let Some(chol) = Cholesky::new(gram.clone()) {
            if chol.l_dirty().diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
                return Ok((chol, jitter));
            }
        }
        if attempt == JITTER_ESCALATIONS {
            break;
        }
        let next = if jitter > 0.0 { jitter * 10.0 } else { JITTER_RELATIVE };
        for i in 0..n {
            gram[(i, i)] += next - jitter;
        }
        jitter = next;
    }
    Err(Error::IllConditioned { jitter })
}

pub(crate) fn log_det_and_quad(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

impl FittedModel {
    /// Fits the posterior for log-space hyperparameters.
    pub fn fit(data: &Dataset, hp: &Hyperparameters, config: &FitConfig) -> Result<Self> {
        FittedModel::fit_params(data, &hp.to_params()?, config)
    }

    /// Fits the posterior for natural-scale parameters.
    pub fn fit_params(data: &Dataset, params: &ModelParams, config: &FitConfig) -> Result<Self> {
        let measures = config.measures(data);
        FittedModel::fit_with_measures(data, params, config, &measures)
    }

    pub(crate) fn fit_with_measures(
        data: &Dataset,
        params: &ModelParams,
        config: &FitConfig,
        measures: &[FeatureMeasure],
    ) -> Result<Self> {
        let (kernel, columns, embeddings) = build_kernel(data, params, measures)?;
        let n = data.n();
        let scaler = if config.standardize {
            Scaler::fit(data.targets())
        } else {
            Scaler::identity()
        };
        let targets = DVector::from_iterator(n, data.targets().iter().map(|&y| scaler.apply(y)));

        let grams: Vec<Vec<f64>> = kernel
            .components()
            .par_iter()
            .zip(columns.par_iter().zip(embeddings.par_iter()))
            .map(|(k, (c, e))| feature_gram(k, c, e))
            .collect();
        let gram = combine_grams(grams.iter().map(Vec::as_slice), kernel.order_variances(), n);
        drop(grams);

        let (chol, jitter) = factorize(gram, params.noise)?;
        let alpha = chol.solve(&targets);
        let constant_mean = kernel.order_variances().get(0) * alpha.sum();
        // Overflow in the weights or the data fit leaves nothing usable.
        if !constant_mean.is_finite() || !log_det_and_quad(&chol, &targets, &alpha).is_finite() {
            return Err(Error::IllConditioned { jitter });
        }
        let lower = chol.l();
        Ok(FittedModel {
            data: data.clone(),
            columns,
            targets,
            scaler,
            config: config.clone(),
            params: params.clone(),
            kernel,
            embeddings,
            jitter,
            chol,
            lower,
            alpha,
            constant_mean,
        })
    }

    /// Reassembles a model from stored parts without refactorizing.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        data: Dataset,
        params: ModelParams,
        config: FitConfig,
        measures: &[FeatureMeasure],
        scaler: Scaler,
        jitter: f64,
        lower: DMatrix<f64>,
        alpha: DVector<f64>,
    ) -> Result<Self> {
        let (kernel, columns, embeddings) = build_kernel(&data, &params, measures)?;
        let targets = DVector::from_iterator(data.n(), data.targets().iter().map(|&y| scaler.apply(y)));
        let chol = Cholesky::pack_dirty(lower.clone());
        let constant_mean = kernel.order_variances().get(0) * alpha.sum();
        Ok(FittedModel {
            data,
            columns,
            targets,
            scaler,
            config,
            params,
            kernel,
            embeddings,
            jitter,
            chol,
            lower,
            alpha,
            constant_mean,
        })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn d(&self) -> usize {
        self.data.d()
    }

    /// Truncation order `Q`.
    pub fn max_order(&self) -> usize {
        self.kernel.max_order()
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn kernel(&self) -> &AdditiveKernel {
        &self.kernel
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn order_variances(&self) -> &OrderVariances {
        self.kernel.order_variances()
    }

    pub fn scaler(&self) -> Scaler {
        self.scaler
    }

    /// Standardized training targets.
    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn noise(&self) -> f64 {
        self.params.noise
    }

    /// Jitter that was added on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Lower Cholesky factor of `Sigma`.
    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Posterior mean of the constant component, `sigma_0^2 * sum(alpha)`.
    pub fn constant_mean(&self) -> f64 {
        self.constant_mean
    }

    /// The factorized matrix `K_add + (noise + jitter) I`, rebuilt densely.
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    /// Additive Gram matrix of the training inputs, without noise.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let grams: Vec<Vec<f64>> = self
            .kernel
            .components()
            .iter()
            .zip(self.columns.iter().zip(&self.embeddings))
            .map(|(k, (c, e))| feature_gram(k, c, e))
            .collect();
        combine_grams(grams.iter().map(Vec::as_slice), self.kernel.order_variances(), self.n())
    }

    /// `L^-1 v`, so that `v' Sigma^-1 w = (L^-1 v)'(L^-1 w)`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        // The factor has a strictly positive diagonal, so this cannot fail.
        self.lower.solve_lower_triangular_mut(&mut out);
        out
    }

    /// `L^-1 B` for a block of columns, by blocked forward substitution.
    pub fn whiten_columns(&self, mut b: DMatrix<f64>) -> DMatrix<f64> {
        const BLOCK: usize = 48;
        let n = self.lower.nrows();
        assert_eq!(b.nrows(), n, "row count must match the training size");
        let mut k = 0;
        while k < n {
            let kb = BLOCK.min(n - k);
            let (mut top, mut rest) = b.rows_range_pair_mut(k..k + kb, k + kb..);
            // Diagonal blocks of the factor are strictly positive.
            self.lower.view((k, k), (kb, kb)).solve_lower_triangular_mut(&mut top);
            if k + kb < n {
                rest.gemm(-1.0, &self.lower.view((k + kb, k), (n - k - kb, kb)), &top, 1.0);
            }
            k += kb;
        }
        b
    }

    /// `Sigma^-1 v` through two triangular solves.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::InvalidInput(format!(
                "query has {} coordinates, model has {} features",
                x.len(),
                self.d()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("query has non-finite coordinates".into()));
        }
        Ok(())
    }

    /// Per-feature kernel vectors `z_j = k~_j(x_j, X_j)` and self-kernels
    /// `zbar_j = k~_j(x_j, x_j)`.
    pub fn feature_vectors(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        self.check_point(x)?;
        let n = self.n();
        let mut z = Vec::with_capacity(self.d());
        let mut zbar = Vec::with_capacity(self.d());
        for (j, k) in self.kernel.components().iter().enumerate() {
            let mut row = vec![0.0; n];
            k.eval_row(x[j], &self.columns[j], &self.embeddings[j], &mut row);
            z.push(row);
            zbar.push(k.eval(x[j], x[j]));
        }
        Ok((z, zbar))
    }

    /// `k_add(x, X)` and `k_add(x, x)`.
    pub fn cross_kernel(&self, x: &[f64]) -> Result<(DVector<f64>, f64)> {
        let (z, zbar) = self.feature_vectors(x)?;
        let q = self.max_order();
        let mut acc = EspAccumulator::new(self.n(), q);
        for zj in &z {
            acc.push(zj);
        }
        let kx = DVector::from_vec(weighted_sum(&acc, self.order_variances(), 0));
        Ok((kx, self.kernel.combine(&zbar)))
    }

    /// Posterior mean and (clamped) variance of the latent function at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let (kx, kxx) = self.cross_kernel(x)?;
        let mean = kx.dot(&self.alpha);
        let v = self.whiten(&kx);
        let raw = kxx - v.norm_squared();
        if raw < 0.0 && -raw > 1e-8 * kxx.abs().max(f64::MIN_POSITIVE) {
            log::warn!("predictive variance {raw:e} clamped to zero (prior {kxx:e})");
        }
        Ok(Prediction {
            mean,
            variance: raw.max(0.0),
        })
    }

    /// Posterior mean only; cheaper than [`FittedModel::predict`].
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.cross_kernel(x)?.0.dot(&self.alpha))
    }

    /// Prediction with the kernel restricted to the features in `subset`
    /// (indices into `0..d`), keeping every other fitted quantity.
    pub fn predict_subset(&self, x: &[f64], subset: &[usize]) -> Result<f64> {
        self.check_point(x)?;
        let mut seen = vec![false; self.d()];
        for &j in subset {
            if j >= self.d() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidInput(format!("invalid feature subset {subset:?}")));
            }
        }
        if subset.is_empty() {
            return Ok(self.constant_mean());
        }
        let q = self.max_order().min(subset.len());
        let n = self.n();
        let mut acc = EspAccumulator::new(n, q);
        let mut row = vec![0.0; n];
        for j in 0..self.d() {
            if seen[j] {
                self.kernel
                    .component(j)
                    .eval_row(x[j], &self.columns[j], &self.embeddings[j], &mut row);
                acc.push(&row);
            }
        }
        let k = DVector::from_vec(weighted_sum(&acc, self.order_variances(), 0));
        Ok(k.dot(&self.alpha))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        log_det_and_quad(&self.chol, &self.targets, &self.alpha)
    }

    /// Derivative of the log marginal likelihood in the noise variance,
    /// `(alpha' alpha - tr Sigma^-1) / 2`.
    pub fn noise_gradient(&self) -> f64 {
        let n = self.n();
        let mut inv_l = DMatrix::<f64>::identity(n, n);
        self.lower.solve_lower_triangular_mut(&mut inv_l);
        0.5 * (self.alpha.norm_squared() - inv_l.norm_squared())
    }
}

type KernelParts = (AdditiveKernel, Vec<Vec<f64>>, Vec<Vec<f64>>);

fn build_kernel(data: &Dataset, params: &ModelParams, measures: &[FeatureMeasure]) -> Result<KernelParts> {
    let d = data.d();
    if params.lengthscales.len() != d || measures.len() != d {
        return Err(Error::InvalidInput(format!(
            "expected {d} lengthscales and measures, got {} and {}",
            params.lengthscales.len(),
            measures.len()
        )));
    }
    let components = params
        .lengthscales
        .iter()
        .zip(measures)
        .map(|(&l, m)| constrain(BaseKernel::squared_exponential(l)?, m))
        .collect::<Result<Vec<_>>>()?;
    let kernel = AdditiveKernel::new(components, params.order_variances.clone())?;
    let columns = data.columns();
    let embeddings = kernel
        .components()
        .iter()
        .zip(&columns)
        .map(|(k, c)| k.embeddings(c))
        .collect();
    Ok((kernel, columns, embeddings))
}
