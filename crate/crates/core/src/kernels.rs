//! Per-feature base kernels, their orthogonality-constrained versions and the
//! additive kernel built from them.
//!
//! For a base kernel `k` and a feature measure `p`, the constrained kernel is
//!
//! ```text
//! k~(a, b) = k(a, b) - m(a) m(b) / Z,   m(a) = E_p[k(a, S)],   Z = E_p[k(S, T)]
//! ```
//!
//! which makes every function drawn from it integrate to zero under `p`. The
//! additive kernel sums products of constrained kernels over all feature
//! subsets of size at most `Q`, weighted per order:
//! `sigma_0^2 + sum_q sigma_q^2 e_q(k~_1, .., k~_d)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esp::EspAccumulator;

/// Normalizers below this are treated as a degenerate kernel.
pub const NORMALIZER_FLOOR: f64 = 1e-12;

/// Unconstrained one-dimensional kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseKernel {
    SquaredExponential { lengthscale: f64 },
}

impl BaseKernel {
    pub fn squared_exponential(lengthscale: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        Ok(BaseKernel::SquaredExponential { lengthscale })
    }

    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match *self {
            BaseKernel::SquaredExponential { lengthscale } => {
                let r = (a - b) / lengthscale;
                (-0.5 * r * r).exp()
            }
        }
    }

    pub fn lengthscale(&self) -> f64 {
        match *self {
            BaseKernel::SquaredExponential { lengthscale } => lengthscale,
        }
    }
}

/// Density over one feature used by the orthogonality constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureMeasure {
    /// Uniform over the stored background samples.
    Empirical { background: Vec<f64> },
    /// `N(0, 1)`; integrals are taken in closed form.
    StandardNormal,
}

/// `E_{X ~ N(0,1)}[exp(-(X - mu)^2 / (2 v))]`.
#[inline]
pub fn gaussian_bump_expectation(mu: f64, v: f64) -> f64 {
    (v / (v + 1.0)).sqrt() * (-mu * mu / (2.0 * (v + 1.0))).exp()
}

/// Base kernel constrained to integrate to zero under its feature measure.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedKernel {
    base: BaseKernel,
    measure: FeatureMeasure,
    normalizer: f64,
}

/// Constrains `base` against the empirical measure of `background`.
pub fn constrain_empirical(base: BaseKernel, background: &[f64]) -> Result<ConstrainedKernel> {
    if background.is_empty() {
        return Err(Error::InvalidInput(
            "empirical measure needs at least one background sample".into(),
        ));
    }
    if background.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("background contains non-finite values".into()));
    }
    let m = background.len();
    let mut off_diag = 0.0;
    let mut diag = 0.0;
    for (s, &bs) in background.iter().enumerate() {
        diag += base.eval(bs, bs);
        for &bt in &background[s + 1..] {
            off_diag += base.eval(bs, bt);
        }
    }
    let normalizer = (diag + 2.0 * off_diag) / (m * m) as f64;
    if normalizer <= NORMALIZER_FLOOR {
        return Err(Error::DegenerateKernel { normalizer });
    }
    Ok(ConstrainedKernel {
        base,
        measure: FeatureMeasure::Empirical {
            background: background.to_vec(),
        },
        normalizer,
    })
}

/// Squared-exponential kernel constrained against a standard normal measure.
///
/// With `l` the lengthscale, `m(a) = l / sqrt(l^2 + 1) * exp(-a^2 / (2 (l^2 + 1)))`
/// and `Z = l / sqrt(l^2 + 2)`.
pub fn constrain_gaussian_rbf(lengthscale: f64) -> Result<ConstrainedKernel> {
    let base = BaseKernel::squared_exponential(lengthscale)?;
    let l2 = lengthscale * lengthscale;
    Ok(ConstrainedKernel {
        base,
        measure: FeatureMeasure::StandardNormal,
        normalizer: lengthscale / (l2 + 2.0).sqrt(),
    })
}

/// Dispatches on the measure kind.
pub fn constrain(base: BaseKernel, measure: &FeatureMeasure) -> Result<ConstrainedKernel> {
    match measure {
        FeatureMeasure::Empirical { background } => constrain_empirical(base, background),
        FeatureMeasure::StandardNormal => constrain_gaussian_rbf(base.lengthscale()),
    }
}

impl ConstrainedKernel {
    pub fn base(&self) -> BaseKernel {
        self.base
    }

    pub fn measure(&self) -> &FeatureMeasure {
        &self.measure
    }

    /// The double integral `Z`.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Single integral `m(a) = E_p[k(a, S)]`.
    pub fn embedding(&self, a: f64) -> f64 {
        match &self.measure {
            FeatureMeasure::Empirical { background } => {
                background.iter().map(|&s| self.base.eval(a, s)).sum::<f64>() / background.len() as f64
            }
            FeatureMeasure::StandardNormal => {
                let l = self.base.lengthscale();
                let v = l * l;
                // E[exp(-(a - S)^2 / (2 l^2))] with S ~ N(0, 1)
                gaussian_bump_expectation(a, v)
            }
        }
    }

    pub fn embeddings(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&a| self.embedding(a)).collect()
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.eval_embedded(a, self.embedding(a), b, self.embedding(b))
    }

    /// Evaluation with precomputed embeddings `ma = m(a)`, `mb = m(b)`.
    #[inline]
    pub fn eval_embedded(&self, a: f64, ma: f64, b: f64, mb: f64) -> f64 {
        self.base.eval(a, b) - ma * mb / self.normalizer
    }

    /// `out[s] = k~(a, xs[s])` given the embeddings of `xs`.
    pub fn eval_row(&self, a: f64, xs: &[f64], xs_embedded: &[f64], out: &mut [f64]) {
        let ma = self.embedding(a) / self.normalizer;
        for ((o, &b), &mb) in out.iter_mut().zip(xs).zip(xs_embedded) {
            *o = self.base.eval(a, b) - ma * mb;
        }
    }
}

/// Order variances `sigma_0^2 ..= sigma_Q^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderVariances(Vec<f64>);

impl OrderVariances {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("order variances need sigma_0^2".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "order variances must be finite and nonnegative: {values:?}"
            )));
        }
        Ok(OrderVariances(values))
    }

    /// Maximum interaction order `Q`.
    pub fn max_order(&self) -> usize {
        self.0.len() - 1
    }

    /// `sigma_q^2`, zero above the truncation order.
    #[inline]
    pub fn get(&self, q: usize) -> f64 {
        self.0.get(q).copied().unwrap_or(0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Additive kernel over `d` constrained components truncated at order `Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveKernel {
    components: Vec<ConstrainedKernel>,
    order_variances: OrderVariances,
}

impl AdditiveKernel {
    pub fn new(components: Vec<ConstrainedKernel>, order_variances: OrderVariances) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("additive kernel needs at least one feature".into()));
        }
        if order_variances.max_order() > components.len() {
            return Err(Error::InvalidInput(format!(
                "interaction order {} exceeds feature count {}",
                order_variances.max_order(),
                components.len()
            )));
        }
        Ok(AdditiveKernel {
            components,
            order_variances,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn max_order(&self) -> usize {
        self.order_variances.max_order()
    }

    pub fn components(&self) -> &[ConstrainedKernel] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &ConstrainedKernel {
        &self.components[j]
    }

    pub fn order_variances(&self) -> &OrderVariances {
        &self.order_variances
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates, kernel expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Weighted ESP sum over per-feature values of one pair.
    pub fn combine(&self, values: &[f64]) -> f64 {
        let q_max = self.max_order();
        let mut acc = EspAccumulator::new(1, q_max);
        for &v in values {
            acc.push_scalar(v);
        }
        (0..=q_max).map(|q| self.order_variances.get(q) * acc.coeff(q)[0]).sum()
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(x2)?;
        let values: Vec<f64> = self
            .components
            .iter()
            .zip(x.iter().zip(x2))
            .map(|(k, (&a, &b))| k.eval(a, b))
            .collect();
        Ok(self.combine(&values))
    }

    /// Kernel between `x` and every row of `batch`, one ESP expansion over
    /// vector carriers.
    pub fn eval_batch(&self, x: &[f64], batch: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        for row in batch {
            self.check_point(row)?;
        }
        let n = batch.len();
        let q_max = self.max_order();
        let mut acc = EspAccumulator::new(n, q_max);
        let mut column = vec![0.0; n];
        let mut lane = vec![0.0; n];
        for (j, k) in self.components.iter().enumerate() {
            for (c, row) in column.iter_mut().zip(batch) {
                *c = row[j];
            }
            let emb = k.embeddings(&column);
            k.eval_row(x[j], &column, &emb, &mut lane);
            acc.push(&lane);
        }
        Ok(weighted_sum(&acc, &self.order_variances, 0))
    }
}

/// `sum_{q >= 0} sigma_(q + shift)^2 * e_q` lane by lane.
pub(crate) fn weighted_sum(acc: &EspAccumulator, weights: &OrderVariances, shift: usize) -> Vec<f64> {
    let mut out = vec![0.0; acc.lanes()];
    for q in 0..=acc.order() {
        let w = weights.get(q + shift);
        if w == 0.0 {
            continue;
        }
        for (o, &e) in out.iter_mut().zip(acc.coeff(q)) {
            *o += w * e;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn se(l: f64) -> BaseKernel {
        BaseKernel::squared_exponential(l).unwrap()
    }

    #[test]
    fn single_point_background() {
        let x1 = 0.7;
        let k = constrain_empirical(se(1.3), &[x1]).unwrap();
        let base = se(1.3);
        for &(a, b) in &[(0.1, -0.4), (2.0, 0.7), (-1.0, -1.0)] {
            let expected = base.eval(a, b) - base.eval(a, x1) * base.eval(b, x1) / base.eval(x1, x1);
            assert!((k.eval(a, b) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn empirical_mean_is_zero() {
        let bg = [-1.2, 0.3, 0.9, 2.4, -0.1, 0.05];
        let k = constrain_empirical(se(0.8), &bg).unwrap();
        for &a in &[-3.0, -0.5, 0.0, 1.7, 4.0] {
            let mean: f64 = bg.iter().map(|&s| k.eval(s, a)).sum::<f64>() / bg.len() as f64;
            assert!(mean.abs() < 1e-10, "{mean}");
        }
    }

    #[test]
    fn constrained_kernels_are_symmetric() {
        let k = constrain_empirical(se(0.5), &[0.0, 1.0, -2.0]).unwrap();
        let g = constrain_gaussian_rbf(0.5).unwrap();
        for &(a, b) in &[(0.3, -1.1), (2.5, 0.4)] {
            assert_eq!(k.eval(a, b), k.eval(b, a));
            assert_eq!(g.eval(a, b), g.eval(b, a));
        }
    }

    #[test]
    fn gaussian_embedding_at_unit_lengthscale() {
        let g = constrain_gaussian_rbf(1.0).unwrap();
        assert!((g.embedding(0.0) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((g.normalizer() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs() {
        assert!(BaseKernel::squared_exponential(0.0).is_err());
        assert!(constrain_empirical(se(1.0), &[]).is_err());
        assert!(OrderVariances::new(vec![]).is_err());
        assert!(OrderVariances::new(vec![1.0, -0.1]).is_err());
        let k = constrain_gaussian_rbf(1.0).unwrap();
        let ov = OrderVariances::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(AdditiveKernel::new(vec![k.clone()], ov.clone()).is_err());
        let add = AdditiveKernel::new(vec![k.clone(), k], ov).unwrap();
        assert!(add.eval(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn tiny_lengthscale_background_is_not_degenerate() {
        // Z >= 1/m because of the diagonal, so SE never trips the floor.
        let k = constrain_empirical(se(1e-6), &[0.0, 1.0, 2.0]).unwrap();
        assert!((k.normalizer() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_feature_expansion() {
        let ks = vec![
            constrain_gaussian_rbf(0.7).unwrap(),
            constrain_gaussian_rbf(1.9).unwrap(),
        ];
        let add = AdditiveKernel::new(ks.clone(), OrderVariances::new(vec![1.0; 3]).unwrap()).unwrap();
        let (x, y) = ([0.2, -0.8], [1.1, 0.3]);
        let k1 = ks[0].eval(x[0], y[0]);
        let k2 = ks[1].eval(x[1], y[1]);
        let v = add.eval(&x, &y).unwrap();
        assert!((v - (1.0 + k1 + k2 + k1 * k2)).abs() < 1e-14);
    }

    #[test]
    fn constant_kernel_when_higher_orders_vanish() {
        let ks = vec![constrain_gaussian_rbf(1.0).unwrap(); 3];
        let add = AdditiveKernel::new(ks, OrderVariances::new(vec![2.5, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(add.eval(&[0.1, 0.2, 0.3], &[1.0, -1.0, 0.0]).unwrap(), 2.5);
        let batch = vec![vec![0.0; 3], vec![1.0; 3]];
        assert_eq!(add.eval_batch(&[0.5; 3], &batch).unwrap(), vec![2.5, 2.5]);
    }

    #[test]
    fn batch_matches_pairwise() {
        let bg = [0.0, 0.5, -0.5, 1.5];
        let ks = vec![
            constrain_empirical(se(0.9), &bg).unwrap(),
            constrain_gaussian_rbf(1.2).unwrap(),
            constrain_empirical(se(2.0), &bg).unwrap(),
        ];
        let add = AdditiveKernel::new(ks, OrderVariances::new(vec![0.3, 0.5, 0.2]).unwrap()).unwrap();
        let x = [0.1, -0.3, 0.8];
        let batch = vec![vec![1.0, 0.0, -1.0], vec![0.2, 0.2, 0.2], x.to_vec()];
        let got = add.eval_batch(&x, &batch).unwrap();
        for (row, g) in batch.iter().zip(got) {
            assert!((add.eval(&x, row).unwrap() - g).abs() < 1e-14);
        }
    }
}
