//! Exact stochastic Shapley values for a single query point.
//!
//! Under the subset-sum value function the Shapley value of feature `i` is the
//! Gaussian `sum_{S containing i} mu(S) / |S|`, where `mu(S)` is the posterior
//! of the FANOVA component on `S`. Factoring `k~_i` out of every product gives
//! the intermediate vector
//!
//! ```text
//! l_i = z_i * sum_{q=0}^{Q-1} w_{q+1} e_q(Z_{-i}),   w_s = sigma_s^2 / s
//! ```
//!
//! over the kernel vectors `z_j = k~_j(x_j, X_j)`, from which
//! `mean_i = l_i' alpha` and the data term of every covariance entry,
//! `l_i' Sigma^-1 l_j`, follow. The prior term uses the same expansion over
//! the self-kernels `zbar_j = k~_j(x_j, x_j)`.
//!
//! Everything is computed in `O(n d^2 Q + n^2 d)` per query.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esp::{esp_scalars, EspAccumulator};
use crate::gp::FittedModel;

/// Efficiency residuals above this are reported as warnings.
pub const EFFICIENCY_WARN: f64 = 1e-6;
/// Relative size of a negative variance that is clamped silently.
pub const VARIANCE_CLAMP_TOL: f64 = 1e-8;

/// Per-query quantities shared by the mean, variance and covariance paths.
#[derive(Clone, Debug)]
pub struct LocalWorkspace {
    /// `z_j = k~_j(x_j, X_j)`.
    pub z: Vec<Vec<f64>>,
    /// `zbar_j = k~_j(x_j, x_j)`.
    pub zbar: Vec<f64>,
    /// Intermediate vectors `l_i` as the columns of an `n x d` matrix.
    pub ell: DMatrix<f64>,
    /// Shapley order weights `w_s = sigma_s^2 / s` for `s = 1..=Q`.
    pub weights: Vec<f64>,
}

impl LocalWorkspace {
    pub fn new(model: &FittedModel, x: &[f64]) -> Result<Self> {
        let (z, zbar) = model.feature_vectors(x)?;
        let d = model.d();
        let n = model.n();
        let q_max = model.max_order();
        let ov = model.order_variances();
        let weights: Vec<f64> = (1..=q_max).map(|s| ov.get(s) / s as f64).collect();

        let mut ell = DMatrix::zeros(n, d);
        if q_max > 0 {
            let mut acc = EspAccumulator::new(n, q_max - 1);
            for i in 0..d {
                acc.reset();
                for (j, zj) in z.iter().enumerate() {
                    if j != i {
                        acc.push(zj);
                    }
                }
                let mut li = ell.column_mut(i);
                for (q, &w) in weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (l, &e) in li.iter_mut().zip(acc.coeff(q)) {
                        *l += w * e;
                    }
                }
                for (l, &zi) in li.iter_mut().zip(&z[i]) {
                    *l *= zi;
                }
            }
        }
        Ok(LocalWorkspace { z, zbar, ell, weights })
    }

    pub fn d(&self) -> usize {
        self.zbar.len()
    }

    pub fn means(&self, model: &FittedModel) -> Vec<f64> {
        self.ell.tr_mul(model.alpha()).as_slice().to_vec()
    }

    /// `L^-1 l_i` for every feature, as columns.
    pub fn whitened(&self, model: &FittedModel) -> DMatrix<f64> {
        model.whiten_columns(self.ell.clone())
    }

    /// Prior part of `Var(phi_i)`:
    /// `zbar_i sum_{q=0}^{Q-1} sigma_{q+1}^2 / (q+1)^2 e_q(Zbar_{-i})`.
    pub fn prior_variance(&self, model: &FittedModel, i: usize) -> f64 {
        let q_max = model.max_order();
        if q_max == 0 {
            return 0.0;
        }
        let others: Vec<f64> = (0..self.d()).filter(|&j| j != i).map(|j| self.zbar[j]).collect();
        let e = esp_scalars(&others, q_max - 1);
        let ov = model.order_variances();
        let s: f64 = (0..q_max)
            .map(|q| {
                let o = (q + 1) as f64;
                ov.get(q + 1) / (o * o) * e[q]
            })
            .sum();
        self.zbar[i] * s
    }

    /// Prior part of `Cov(phi_i, phi_j)` for `i != j`:
    /// `zbar_i zbar_j sum_{q=0}^{Q-2} sigma_{q+2}^2 / (q+2)^2 e_q(Zbar_{-i,j})`.
    pub fn prior_cross(&self, model: &FittedModel, i: usize, j: usize) -> f64 {
        let q_max = model.max_order();
        if q_max < 2 {
            return 0.0;
        }
        let others: Vec<f64> = (0..self.d())
            .filter(|&k| k != i && k != j)
            .map(|k| self.zbar[k])
            .collect();
        let e = esp_scalars(&others, q_max - 2);
        let ov = model.order_variances();
        let s: f64 = (0..=q_max - 2)
            .map(|q| {
                let o = (q + 2) as f64;
                ov.get(q + 2) / (o * o) * e[q]
            })
            .sum();
        self.zbar[i] * self.zbar[j] * s
    }

    fn variances_from(&self, model: &FittedModel, white: &DMatrix<f64>) -> Vec<f64> {
        (0..self.d())
            .map(|i| clamp_variance(self.prior_variance(model, i), white.column(i).norm_squared(), i))
            .collect()
    }
}

fn clamp_variance(prior: f64, data: f64, feature: usize) -> f64 {
    let v = prior - data;
    if v < 0.0 && -v > VARIANCE_CLAMP_TOL * prior.abs().max(f64::MIN_POSITIVE) {
        log::warn!("variance of feature {feature} clamped to zero (pre-clamp {v:e}, prior {prior:e})");
    }
    v.max(0.0)
}

/// Shapley value means for every feature.
pub fn ssv_mean_all(model: &FittedModel, x: &[f64]) -> Result<Vec<f64>> {
    Ok(LocalWorkspace::new(model, x)?.means(model))
}

/// Shapley value variances for every feature, clamped at zero.
pub fn ssv_variance_all(model: &FittedModel, x: &[f64]) -> Result<Vec<f64>> {
    let ws = LocalWorkspace::new(model, x)?;
    let white = ws.whitened(model);
    Ok(ws.variances_from(model, &white))
}

/// Means and variances from one workspace.
pub fn ssv_mean_variance(model: &FittedModel, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let ws = LocalWorkspace::new(model, x)?;
    let white = ws.whitened(model);
    Ok((ws.means(model), ws.variances_from(model, &white)))
}

fn covariance_from(ws: &LocalWorkspace, model: &FittedModel, white: &DMatrix<f64>) -> DMatrix<f64> {
    let d = ws.d();
    let mut k = DMatrix::zeros(d, d);
    let diag = ws.variances_from(model, white);
    let data = white.tr_mul(white);
    for i in 0..d {
        k[(i, i)] = diag[i];
        for j in i + 1..d {
            let v = ws.prior_cross(model, i, j) - data[(i, j)];
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Full `d x d` covariance of the Shapley values.
pub fn ssv_covariance(model: &FittedModel, x: &[f64]) -> Result<DMatrix<f64>> {
    let ws = LocalWorkspace::new(model, x)?;
    let white = ws.whitened(model);
    Ok(covariance_from(&ws, model, &white))
}

/// Joint Gaussian over the local Shapley values of one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub query: Vec<f64>,
    /// Standardized target units.
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub posterior_mean: f64,
    pub constant: f64,
    /// `sum(mean) - (posterior_mean - constant)`.
    pub efficiency_residual: f64,
    pub max_order: usize,
}

impl LocalExplanation {
    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let d = self.d();
        DMatrix::from_fn(d, d, |i, j| self.covariance[i][j])
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.d()).map(|i| self.covariance[i][i]).collect()
    }

    /// JSON object with the documented explanation schema.
    pub fn to_json(&self, dominance: Option<&[Vec<f64>]>) -> serde_json::Value {
        serde_json::json!({
            "query": self.query,
            "mean": self.mean,
            "covariance": self.covariance,
            "posterior_mean": self.posterior_mean,
            "constant": self.constant,
            "efficiency_residual": self.efficiency_residual,
            "dominance": dominance,
        })
    }
}

/// Mean vector, covariance and efficiency check for one query.
pub fn explain_local(model: &FittedModel, x: &[f64]) -> Result<LocalExplanation> {
    let ws = LocalWorkspace::new(model, x)?;
    let white = ws.whitened(model);
    let mean = ws.means(model);
    let cov = covariance_from(&ws, model, &white);
    let posterior_mean = model.predict_mean(x)?;
    let constant = model.constant_mean();
    let efficiency_residual = mean.iter().sum::<f64>() - (posterior_mean - constant);
    if efficiency_residual.abs() > EFFICIENCY_WARN {
        log::warn!("efficiency residual {efficiency_residual:e} exceeds {EFFICIENCY_WARN:e}");
    }
    let d = mean.len();
    Ok(LocalExplanation {
        query: x.to_vec(),
        mean,
        covariance: (0..d).map(|i| (0..d).map(|j| cov[(i, j)]).collect()).collect(),
        posterior_mean,
        constant,
        efficiency_residual,
        max_order: model.max_order(),
    })
}

/// Monte-Carlo estimate of `P(|phi_i| >= |phi_j|)` for every pair.
///
/// Samples `mean + V sqrt(max(Lambda, 0)) eps` from the eigendecomposition of
/// the covariance with a seeded ChaCha stream. Ties count for both orders, so
/// `(i, j) + (j, i) >= 1` and the diagonal is exactly 1.
pub fn dominance_matrix(expl: &LocalExplanation, num_samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if num_samples == 0 {
        return Err(Error::InvalidInput("dominance needs at least one sample".into()));
    }
    let d = expl.d();
    let cov = expl.covariance_matrix();
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::ExplanationDegenerate);
    }
    let eig = SymmetricEigen::try_new(cov, f64::EPSILON, 0).ok_or(Error::ExplanationDegenerate)?;
    if eig
        .eigenvalues
        .iter()
        .chain(eig.eigenvectors.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::ExplanationDegenerate);
    }
    let mut factor = eig.eigenvectors.clone();
    for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(c).scale_mut(s);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![vec![0usize; d]; d];
    let mut eps = DVector::zeros(d);
    let mean = DVector::from_column_slice(&expl.mean);
    for _ in 0..num_samples {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        let phi = &mean + &factor * &eps;
        for i in 0..d {
            for j in 0..d {
                if phi[i].abs() >= phi[j].abs() {
                    counts[i][j] += 1;
                }
            }
        }
    }
    let total = num_samples as f64;
    Ok((0..d)
        .map(|i| {
            (0..d)
                .map(|j| if i == j { 1.0 } else { counts[i][j] as f64 / total })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, FitConfig, ModelParams};
    use crate::kernels::OrderVariances;

    fn model(ov: Vec<f64>) -> FittedModel {
        let rows: Vec<Vec<f64>> = (0..15)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.7).sin(), (t * 0.3).cos(), (t * 1.1).sin() * 0.5]
            })
            .collect();
        let y = rows.iter().map(|r| r[0] * r[1] + r[2]).collect();
        let data = Dataset::unnamed(rows, y).unwrap();
        let params = ModelParams::new(vec![0.8, 1.1, 0.6], OrderVariances::new(ov).unwrap(), 0.05).unwrap();
        FittedModel::fit_params(&data, &params, &FitConfig::default()).unwrap()
    }

    #[test]
    fn constant_model_has_null_explanations() {
        let m = model(vec![1.0, 0.0, 0.0, 0.0]);
        let e = explain_local(&m, &[0.1, 0.2, 0.3]).unwrap();
        assert!(e.mean.iter().all(|&v| v == 0.0));
        assert!(e.covariance.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn diagonal_matches_variance_path() {
        let m = model(vec![0.2, 0.5, 0.3, 0.1]);
        let x = [0.4, -0.2, 0.9];
        let cov = ssv_covariance(&m, &x).unwrap();
        let var = ssv_variance_all(&m, &x).unwrap();
        for i in 0..3 {
            assert!((cov[(i, i)] - var[i]).abs() <= 1e-10);
            for j in 0..3 {
                assert_eq!(cov[(i, j)], cov[(j, i)]);
            }
        }
    }

    #[test]
    fn explanation_is_deterministic_and_efficient() {
        let m = model(vec![0.2, 0.5, 0.3, 0.1]);
        let x = [0.4, -0.2, 0.9];
        let a = explain_local(&m, &x).unwrap();
        assert_eq!(a, explain_local(&m, &x).unwrap());
        assert!(a.efficiency_residual.abs() <= 1e-8 * a.posterior_mean.abs().max(1.0));
    }

    #[test]
    fn dominance_point_mass_and_reflexive() {
        let e = LocalExplanation {
            query: vec![0.0; 3],
            mean: vec![2.0, -1.0, 0.5],
            covariance: vec![vec![0.0; 3]; 3],
            posterior_mean: 1.5,
            constant: 0.0,
            efficiency_residual: 0.0,
            max_order: 1,
        };
        let p = dominance_matrix(&e, 50, 1).unwrap();
        assert_eq!(p[0][1], 1.0);
        assert_eq!(p[1][0], 0.0);
        assert_eq!(p[1][2], 1.0);
        for i in 0..3 {
            assert_eq!(p[i][i], 1.0);
        }
        assert!(dominance_matrix(&e, 0, 1).is_err());
    }

    #[test]
    fn dominance_is_seeded_and_complementary() {
        let m = model(vec![0.2, 0.5, 0.3, 0.1]);
        let e = explain_local(&m, &[0.4, -0.2, 0.9]).unwrap();
        let a = dominance_matrix(&e, 500, 9).unwrap();
        assert_eq!(a, dominance_matrix(&e, 500, 9).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert!(a[i][j] + a[j][i] >= 1.0);
            }
        }
    }

    #[test]
    fn non_finite_covariance_is_degenerate() {
        let e = LocalExplanation {
            query: vec![0.0; 2],
            mean: vec![0.0; 2],
            covariance: vec![vec![f64::NAN, 0.0], vec![0.0, 1.0]],
            posterior_mean: 0.0,
            constant: 0.0,
            efficiency_residual: 0.0,
            max_order: 1,
        };
        assert!(matches!(dominance_matrix(&e, 10, 0), Err(Error::ExplanationDegenerate)));
    }
}
