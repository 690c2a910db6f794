//! Global variance-based Shapley attribution.
//!
//! With the value function `v(S) = sum_{T subset of S} Var_X f_T`, the Shapley
//! value of feature `i` is `alpha' M_i alpha` where
//!
//! ```text
//! M_i = L_i . sum_{r=0}^{Q-1} sigma_{r+1}^4 / (r+1) e_r({L_j : j != i})
//! ```
//!
//! `.` is the Hadamard product and `L_j = E_p[k~_j(x, X_j) k~_j(x, X_j)']` is
//! the second-moment matrix of feature `j`'s kernel vector under its measure.
//! The ESPs run over matrix carriers, so memory is `O(Q n^2)` per worker.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esp::EspAccumulator;
use crate::gp::FittedModel;
use crate::kernels::{gaussian_bump_expectation, ConstrainedKernel, FeatureMeasure};

/// Per-feature `n x n` second-moment matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct LMatrices {
    mats: Vec<DMatrix<f64>>,
}

impl LMatrices {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = mats.first().map(|m| m.nrows()).unwrap_or(0);
        if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::InvalidInput("L matrices must share one square shape".into()));
        }
        Ok(LMatrices { mats })
    }

    pub fn get(&self, i: usize) -> &DMatrix<f64> {
        &self.mats[i]
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.mats.iter()
    }

    /// The same matrices with rows and columns reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mats = self
            .mats
            .iter()
            .map(|m| DMatrix::from_fn(perm.len(), perm.len(), |a, b| m[(perm[a], perm[b])]))
            .collect();
        LMatrices { mats }
    }
}

/// `(1/m) sum_s k~(b_s, X) k~(b_s, X)'` over background samples `b_s`.
fn average_outer(kernel: &ConstrainedKernel, column: &[f64], background: &[f64]) -> DMatrix<f64> {
    let n = column.len();
    let m = background.len();
    let emb = kernel.embeddings(column);
    let mut rows = DMatrix::zeros(m, n);
    let mut buf = vec![0.0; n];
    for (s, &b) in background.iter().enumerate() {
        kernel.eval_row(b, column, &emb, &mut buf);
        for (a, &v) in buf.iter().enumerate() {
            rows[(s, a)] = v;
        }
    }
    let mut l = rows.tr_mul(&rows) / m as f64;
    // The product is symmetric up to summation order; make it exact.
    for a in 0..n {
        for b in a + 1..n {
            let v = 0.5 * (l[(a, b)] + l[(b, a)]);
            l[(a, b)] = v;
            l[(b, a)] = v;
        }
    }
    l
}

/// Product of two Gaussian bumps `exp(-(x-mu)^2 / (2v))` as `scale * bump(mu, v)`.
fn bump_product(mu1: f64, v1: f64, mu2: f64, v2: f64) -> (f64, f64, f64) {
    let s = v1 + v2;
    let scale = (-(mu1 - mu2) * (mu1 - mu2) / (2.0 * s)).exp();
    (scale, (mu1 * v2 + mu2 * v1) / s, v1 * v2 / s)
}

/// Closed-form `L` for a squared-exponential kernel constrained against, and
/// integrated over, the standard normal measure.
pub fn l_matrix_gaussian(kernel: &ConstrainedKernel, column: &[f64]) -> DMatrix<f64> {
    let l2 = kernel.base().lengthscale().powi(2);
    let z = kernel.normalizer();
    let r = (l2 / (l2 + 1.0)).sqrt();
    let emb: Vec<f64> = kernel.embeddings(column);
    // E[k(x, a) m(x)]
    let cross: Vec<f64> = column
        .iter()
        .map(|&a| {
            let (scale, mu, v) = bump_product(a, l2, 0.0, l2 + 1.0);
            r * scale * gaussian_bump_expectation(mu, v)
        })
        .collect();
    let mm = r * r * gaussian_bump_expectation(0.0, 0.5 * (l2 + 1.0));
    let n = column.len();
    let mut out = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let (scale, mu, v) = bump_product(column[a], l2, column[b], l2);
            let kk = scale * gaussian_bump_expectation(mu, v);
            let val = kk - emb[b] / z * cross[a] - emb[a] / z * cross[b] + emb[a] * emb[b] / (z * z) * mm;
            out[(a, b)] = val;
            out[(b, a)] = val;
        }
    }
    out
}

/// L matrices under the same measures the model's kernels were constrained
/// against: background averages for empirical measures, closed form for the
/// standard normal.
pub fn l_matrices(model: &FittedModel) -> LMatrices {
    let mats = model
        .kernel()
        .components()
        .par_iter()
        .zip(model.columns().par_iter())
        .map(|(k, col)| match k.measure() {
            FeatureMeasure::Empirical { background } => average_outer(k, col, background),
            FeatureMeasure::StandardNormal => l_matrix_gaussian(k, col),
        })
        .collect();
    LMatrices { mats }
}

/// Empirical L matrices over caller-supplied per-feature samples.
pub fn l_matrices_empirical(model: &FittedModel, backgrounds: &[Vec<f64>]) -> Result<LMatrices> {
    if backgrounds.len() != model.d() || backgrounds.iter().any(Vec::is_empty) {
        return Err(Error::InvalidInput(format!(
            "need one nonempty background per feature ({})",
            model.d()
        )));
    }
    let mats = model
        .kernel()
        .components()
        .par_iter()
        .zip(model.columns().par_iter().zip(backgrounds.par_iter()))
        .map(|(k, (col, bg))| average_outer(k, col, bg))
        .collect();
    Ok(LMatrices { mats })
}

fn check_l(model: &FittedModel, l: &LMatrices) -> Result<()> {
    if l.len() != model.d() || l.iter().any(|m| m.nrows() != model.n()) {
        return Err(Error::InvalidInput(format!(
            "expected {} L matrices of order {}",
            model.d(),
            model.n()
        )));
    }
    Ok(())
}

fn attribution(model: &FittedModel, l: &LMatrices, i: usize, acc: &mut EspAccumulator) -> f64 {
    let n = model.n();
    let q_max = model.max_order();
    let ov = model.order_variances();
    acc.reset();
    for (j, lj) in l.iter().enumerate() {
        if j != i {
            acc.push(lj.as_slice());
        }
    }
    // Column-major storage; the weighted sum and the L_i entries line up.
    let mut weighted = vec![0.0; n * n];
    for r in 0..q_max {
        let s2 = ov.get(r + 1);
        let w = s2 * s2 / (r + 1) as f64;
        if w == 0.0 {
            continue;
        }
        for (o, &e) in weighted.iter_mut().zip(acc.coeff(r)) {
            *o += w * e;
        }
    }
    let alpha = model.alpha();
    let li = l.get(i);
    let mut total = 0.0;
    for b in 0..n {
        let mut col = 0.0;
        for a in 0..n {
            col += alpha[a] * li[(a, b)] * weighted[b * n + a];
        }
        total += col * alpha[b];
    }
    total
}

/// Global Shapley values `alpha' M_i alpha` for every feature.
pub fn global_shapley(model: &FittedModel, l: &LMatrices) -> Result<Vec<f64>> {
    global_shapley_with(model, l, true)
}

/// As [`global_shapley`]; with `parallel = false` a single `Q n^2`
/// accumulator is reused for every feature.
pub fn global_shapley_with(model: &FittedModel, l: &LMatrices, parallel: bool) -> Result<Vec<f64>> {
    check_l(model, l)?;
    let n = model.n();
    let q_max = model.max_order();
    if q_max == 0 {
        return Ok(vec![0.0; model.d()]);
    }
    let order = q_max - 1;
    if parallel {
        Ok((0..model.d())
            .into_par_iter()
            .map_init(
                || EspAccumulator::new(n * n, order),
                |acc, i| attribution(model, l, i, acc),
            )
            .collect())
    } else {
        let mut acc = EspAccumulator::new(n * n, order);
        Ok((0..model.d()).map(|i| attribution(model, l, i, &mut acc)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McCheck {
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalExplanation {
    /// Squared standardized-target units.
    pub attribution: Vec<f64>,
    pub shares: Vec<f64>,
    pub total: f64,
    pub mc_check: Option<McCheck>,
}

impl GlobalExplanation {
    pub fn from_attribution(attribution: Vec<f64>, mc_check: Option<McCheck>) -> Self {
        let total: f64 = attribution.iter().sum();
        let shares = if total > 0.0 {
            attribution.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; attribution.len()]
        };
        GlobalExplanation {
            attribution,
            shares,
            total,
            mc_check,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "attribution": self.attribution,
            "shares": self.shares,
            "total": self.total,
            "mc_check": self.mc_check.map(|c| serde_json::json!({
                "estimate": c.estimate,
                "stderr": c.stderr,
            })),
        })
    }
}

/// Draws one point from the product of the model's feature measures.
pub fn sample_measure<R: Rng>(model: &FittedModel, rng: &mut R) -> Vec<f64> {
    model
        .kernel()
        .components()
        .iter()
        .map(|k| match k.measure() {
            FeatureMeasure::Empirical { background } => background[rng.gen_range(0..background.len())],
            FeatureMeasure::StandardNormal => StandardNormal.sample(rng),
        })
        .collect()
}

/// Monte-Carlo variance of `xi(x) - xi_0` over the product measure, with the
/// standard error of the sample variance.
pub fn monte_carlo_variance(model: &FittedModel, samples: usize, seed: u64) -> Result<McCheck> {
    if samples < 2 {
        return Err(Error::InvalidInput(
            "Monte-Carlo check needs at least two samples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples).map(|_| sample_measure(model, &mut rng)).collect();
    let values = points
        .par_iter()
        .map(|x| model.predict_mean(x).map(|m| m - model.constant_mean()))
        .collect::<Result<Vec<f64>>>()?;
    let n = samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in &values {
        let c = (v - mean) * (v - mean);
        m2 += c;
        m4 += c * c;
    }
    let var = m2 / (n - 1.0);
    let mu2 = m2 / n;
    let mu4 = m4 / n;
    let stderr = ((mu4 - mu2 * mu2).max(0.0) / n).sqrt();
    Ok(McCheck { estimate: var, stderr })
}

#[derive(Clone, Debug, Default)]
pub struct GlobalOptions {
    /// Sample count for the Monte-Carlo total-variance check.
    pub mc_samples: Option<usize>,
    pub seed: u64,
    /// Reuse one accumulator instead of one per worker.
    pub low_memory: bool,
}

/// L matrices, attributions, shares and the optional Monte-Carlo check.
pub fn explain_global(model: &FittedModel, options: &GlobalOptions) -> Result<GlobalExplanation> {
    let l = l_matrices(model);
    let attribution = global_shapley_with(model, &l, !options.low_memory)?;
    let mc = options
        .mc_samples
        .map(|s| monte_carlo_variance(model, s, options.seed))
        .transpose()?;
    Ok(GlobalExplanation::from_attribution(attribution, mc))
}

/// `v' L v` for checking positive semi-definiteness.
pub fn quadratic_form(l: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(l * v))
}
