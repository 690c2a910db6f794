//! Exponential-time reference implementations.
//!
//! Everything here enumerates feature subsets explicitly and uses dense
//! explicit inverses instead of the stored factorization. The fast paths in
//! [`crate::kernels`], [`crate::gp`], [`crate::explain_local`] and
//! [`crate::explain_global`] are tested against these functions. Hard feature
//! ceilings keep the enumeration from running away.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::explain_global::LMatrices;
use crate::gp::FittedModel;
use crate::kernels::AdditiveKernel;

/// Largest feature count any oracle accepts.
pub const MAX_FEATURES: usize = 15;
/// Largest feature count for the covariance oracle.
pub const MAX_COVARIANCE_FEATURES: usize = 10;
/// Largest feature count for the global oracle.
pub const MAX_GLOBAL_FEATURES: usize = 8;

/// Feature subset as a bitmask over at most [`MAX_FEATURES`] features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetIndex(u32);

impl SubsetIndex {
    pub fn empty() -> Self {
        SubsetIndex(0)
    }

    pub fn from_bits(bits: u32) -> Self {
        SubsetIndex(bits)
    }

    pub fn from_features(features: &[usize]) -> Result<Self> {
        let mut bits = 0u32;
        for &j in features {
            if j >= MAX_FEATURES {
                return Err(Error::OracleTooLarge {
                    max: MAX_FEATURES,
                    got: j + 1,
                });
            }
            bits |= 1 << j;
        }
        Ok(SubsetIndex(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, j: usize) -> bool {
        self.0 & (1 << j) != 0
    }

    pub fn features(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..32).filter(move |&j| bits & (1 << j) != 0)
    }

    /// Every subset of `{0, .., d-1}`.
    pub fn all(d: usize) -> impl Iterator<Item = SubsetIndex> {
        (0..1u32 << d).map(SubsetIndex)
    }
}

fn check_dim(d: usize, max: usize) -> Result<()> {
    if d > max {
        Err(Error::OracleTooLarge { max, got: d })
    } else {
        Ok(())
    }
}

/// Additive kernel by enumerating every subset of size at most `Q`.
pub fn naive_additive_kernel(x: &[f64], x2: &[f64], kernel: &AdditiveKernel) -> Result<f64> {
    let d = kernel.dim();
    check_dim(d, MAX_FEATURES)?;
    if x.len() != d || x2.len() != d {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let k: Vec<f64> = (0..d).map(|j| kernel.component(j).eval(x[j], x2[j])).collect();
    let ov = kernel.order_variances();
    let mut total = 0.0;
    for s in SubsetIndex::all(d) {
        let w = ov.get(s.len());
        if w == 0.0 {
            continue;
        }
        total += w * s.features().map(|j| k[j]).product::<f64>();
    }
    Ok(total)
}

/// Explicit dense `Sigma^-1`, independent of the stored factor.
pub fn sigma_inverse(model: &FittedModel) -> Result<DMatrix<f64>> {
    let mut sigma = model.gram_matrix();
    let eff = model.noise() + model.jitter();
    for i in 0..model.n() {
        sigma[(i, i)] += eff;
    }
    sigma
        .try_inverse()
        .ok_or(Error::IllConditioned { jitter: model.jitter() })
}

/// Posterior mean and variance by explicit dense algebra.
pub fn naive_predict(model: &FittedModel, x: &[f64]) -> Result<(f64, f64)> {
    let inv = sigma_inverse(model)?;
    let kernel = model.kernel();
    let kx = DVector::from_iterator(
        model.n(),
        model
            .data()
            .rows()
            .iter()
            .map(|r| naive_additive_kernel(x, r, kernel))
            .collect::<Result<Vec<_>>>()?,
    );
    let y = model.targets();
    let alpha = &inv * y;
    let kxx = naive_additive_kernel(x, x, kernel)?;
    Ok((kx.dot(&alpha), kxx - kx.dot(&(&inv * &kx))))
}

/// `k~_j(x_j, X_j)` and `k~_j(x_j, x_j)` by direct pointwise evaluation.
fn kernel_values(model: &FittedModel, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let kernel = model.kernel();
    let rows = model.data().rows();
    let z = (0..model.d())
        .map(|j| rows.iter().map(|r| kernel.component(j).eval(x[j], r[j])).collect())
        .collect();
    let zbar = (0..model.d()).map(|j| kernel.component(j).eval(x[j], x[j])).collect();
    (z, zbar)
}

/// `k~_S(x_S, X_S)` for every subset `S`, indexed by bitmask.
fn subset_products(z: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let d = z.len();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(1 << d);
    out.push(vec![1.0; n]);
    for s in 1usize..1 << d {
        let low = s.trailing_zeros() as usize;
        let rest = &out[s & (s - 1)];
        let v = rest.iter().zip(&z[low]).map(|(a, b)| a * b).collect();
        out.push(v);
    }
    out
}

/// Posterior moments of Moebius coefficients `mu_x(S)` and `mu_x(S')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoebiusPosterior {
    pub mean: f64,
    pub covariance: f64,
    pub other_mean: f64,
}

/// Literal posterior of the FANOVA components on `s` and `s2` at `x`.
/// The empty set is the constant component: mean `xi_0`, variance 0.
pub fn moebius_posterior(model: &FittedModel, x: &[f64], s: SubsetIndex, s2: SubsetIndex) -> Result<MoebiusPosterior> {
    check_dim(model.d(), MAX_FEATURES)?;
    model.check_point(x)?;
    let inv = sigma_inverse(model)?;
    let (z, zbar) = kernel_values(model, x);
    let ov = model.order_variances();
    let n = model.n();
    let vec_of = |t: SubsetIndex| -> DVector<f64> {
        let mut v = DVector::from_element(n, ov.get(t.len()));
        for j in t.features() {
            for (a, e) in v.iter_mut().enumerate() {
                *e *= z[j][a];
            }
        }
        v
    };
    let alpha = &inv * model.targets();
    let mean_of = |t: SubsetIndex| vec_of(t).dot(&alpha);
    let covariance = if s.is_empty() || s2.is_empty() {
        0.0
    } else {
        let prior = if s == s2 {
            ov.get(s.len()) * s.features().map(|j| zbar[j]).product::<f64>()
        } else {
            0.0
        };
        prior - vec_of(s).dot(&(&inv * vec_of(s2)))
    };
    Ok(MoebiusPosterior {
        mean: mean_of(s),
        covariance,
        other_mean: mean_of(s2),
    })
}

/// Mean of the value function `nu_x(S) = sum_{T subset of S} mu_x(T)`.
pub fn value_function_mean(model: &FittedModel, x: &[f64], s: SubsetIndex) -> Result<f64> {
    let mut total = 0.0;
    let mut t = s.bits();
    loop {
        total += moebius_posterior(model, x, SubsetIndex(t), SubsetIndex(t))?.mean;
        if t == 0 {
            break;
        }
        t = (t - 1) & s.bits();
    }
    Ok(total)
}

/// Restricted prediction `sum_{T subset of S} sigma_|T|^2 k~_T(x_T, X_T)' alpha`.
pub fn naive_subset_prediction(model: &FittedModel, x: &[f64], subset: &[usize]) -> Result<f64> {
    check_dim(model.d(), MAX_FEATURES)?;
    let s = SubsetIndex::from_features(subset)?;
    let (z, _) = kernel_values(model, x);
    let prods = subset_products(&z, model.n());
    let alpha = sigma_inverse(model)? * model.targets();
    let ov = model.order_variances();
    let mut total = 0.0;
    for t in SubsetIndex::all(model.d()) {
        if t.bits() & !s.bits() == 0 {
            let w = ov.get(t.len());
            total += w * prods[t.bits() as usize]
                .iter()
                .zip(alpha.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
    }
    Ok(total)
}

/// Shapley means and covariances from two independent routes.
#[derive(Clone, Debug)]
pub struct NaiveSsv {
    /// Route A: permutation-weighted marginal contributions of `nu`.
    pub mean_a: Vec<f64>,
    pub covariance_a: Option<DMatrix<f64>>,
    /// Route B: `sum_{T containing i} mu(T) / |T|`.
    pub mean_b: Vec<f64>,
    pub covariance_b: Option<DMatrix<f64>>,
    /// Largest absolute difference between the two routes.
    pub discrepancy: f64,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Brute-force stochastic Shapley values. Covariances are only computed for
/// `d <= MAX_COVARIANCE_FEATURES`.
pub fn naive_ssv(model: &FittedModel, x: &[f64]) -> Result<NaiveSsv> {
    let d = model.d();
    check_dim(d, MAX_FEATURES)?;
    model.check_point(x)?;
    let with_cov = d <= MAX_COVARIANCE_FEATURES;
    let n = model.n();
    let inv = sigma_inverse(model)?;
    let alpha = &inv * model.targets();
    let ov = model.order_variances();
    let (z, zbar) = kernel_values(model, x);
    let prods = subset_products(&z, n);
    let full = 1usize << d;

    // Weighted component vectors sigma_|T|^2 k~_T and their posterior means;
    // the empty set is excluded (it cancels from every marginal contribution).
    let comp: Vec<DVector<f64>> = (0..full)
        .map(|t| {
            let w = if t == 0 { 0.0 } else { ov.get(t.count_ones() as usize) };
            DVector::from_iterator(n, prods[t].iter().map(|v| w * v))
        })
        .collect();
    let comp_mean: Vec<f64> = comp.iter().map(|v| v.dot(&alpha)).collect();
    let prior: Vec<f64> = (0..full)
        .map(|t| {
            if t == 0 {
                return 0.0;
            }
            let s = SubsetIndex(t as u32);
            ov.get(s.len()) * s.features().map(|j| zbar[j]).product::<f64>()
        })
        .collect();

    // Route B.
    let mut mean_b = vec![0.0; d];
    for t in 1..full {
        let s = SubsetIndex(t as u32);
        for i in s.features() {
            mean_b[i] += comp_mean[t] / s.len() as f64;
        }
    }
    let covariance_b = with_cov.then(|| {
        let mut agg: Vec<DVector<f64>> = vec![DVector::zeros(n); d];
        for t in 1..full {
            let s = SubsetIndex(t as u32);
            for i in s.features() {
                agg[i] += &comp[t] / s.len() as f64;
            }
        }
        DMatrix::from_fn(d, d, |i, j| {
            let mut p = 0.0;
            for t in 1..full {
                let s = SubsetIndex(t as u32);
                if s.contains(i) && s.contains(j) {
                    let k = s.len() as f64;
                    p += prior[t] / (k * k);
                }
            }
            p - agg[i].dot(&(&inv * &agg[j]))
        })
    });

    // Route A: the value function and its covariance via subset sums.
    let mut nu_mean = comp_mean.clone();
    let mut nu_vec = comp.clone();
    let mut nu_prior = prior.clone();
    for j in 0..d {
        for s in 0..full {
            if s & (1 << j) != 0 {
                let lo = s ^ (1 << j);
                nu_mean[s] += nu_mean[lo];
                if with_cov {
                    let v = nu_vec[lo].clone();
                    nu_vec[s] += v;
                }
                nu_prior[s] += nu_prior[lo];
            }
        }
    }
    let d_fact = factorial(d);
    let coef: Vec<f64> = (0..d).map(|k| factorial(k) * factorial(d - k - 1) / d_fact).collect();
    // a[i][S]: coefficient of nu(S) in phi_i.
    let a: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut row = vec![0.0; full];
            for s in 0..full {
                if s & (1 << i) == 0 {
                    let c = coef[s.count_ones() as usize];
                    row[s | (1 << i)] += c;
                    row[s] -= c;
                }
            }
            row
        })
        .collect();
    let mean_a: Vec<f64> = a
        .iter()
        .map(|row| row.iter().zip(&nu_mean).map(|(c, m)| c * m).sum())
        .collect();
    let covariance_a = with_cov.then(|| {
        let agg: Vec<DVector<f64>> = a
            .iter()
            .map(|row| {
                let mut v = DVector::zeros(n);
                for (s, &c) in row.iter().enumerate() {
                    if c != 0.0 {
                        v += &nu_vec[s] * c;
                    }
                }
                v
            })
            .collect();
        DMatrix::from_fn(d, d, |i, j| {
            let mut p = 0.0;
            for s in 0..full {
                let ci = a[i][s];
                if ci == 0.0 {
                    continue;
                }
                for s2 in 0..full {
                    p += ci * a[j][s2] * nu_prior[s & s2];
                }
            }
            p - agg[i].dot(&(&inv * &agg[j]))
        })
    });

    let mut discrepancy = mean_a
        .iter()
        .zip(&mean_b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    if let (Some(ca), Some(cb)) = (&covariance_a, &covariance_b) {
        discrepancy = discrepancy.max((ca - cb).amax());
    }
    Ok(NaiveSsv {
        mean_a,
        covariance_a,
        mean_b,
        covariance_b,
        discrepancy,
    })
}

/// Shapley-mean enumeration used as the "naive" side of timing comparisons.
/// Visits all `2^d` subsets; no ceiling beyond the bitmask width.
pub fn naive_ssv_means_unbounded(model: &FittedModel, x: &[f64]) -> Result<Vec<f64>> {
    let d = model.d();
    if d > 30 {
        return Err(Error::OracleTooLarge { max: 30, got: d });
    }
    let (z, _) = model.feature_vectors(x)?;
    let ov = model.order_variances();
    let alpha = model.alpha();
    let n = model.n();
    let mut out = vec![0.0; d];
    let mut prod = vec![0.0; n];
    for t in 1u32..1 << d {
        // Zero-weight subsets are still visited: this is the 2^d baseline.
        let k = t.count_ones() as usize;
        prod.fill(ov.get(k) / k as f64);
        for j in 0..d {
            if t & (1 << j) != 0 {
                for (p, v) in prod.iter_mut().zip(&z[j]) {
                    *p *= v;
                }
            }
        }
        let m: f64 = prod.iter().zip(alpha.iter()).map(|(p, a)| p * a).sum();
        for (j, o) in out.iter_mut().enumerate() {
            if t & (1 << j) != 0 {
                *o += m;
            }
        }
    }
    Ok(out)
}

fn hadamard_products(l: &LMatrices) -> Vec<DMatrix<f64>> {
    let d = l.len();
    let n = l.get(0).nrows();
    let mut out = Vec::with_capacity(1 << d);
    out.push(DMatrix::from_element(n, n, 1.0));
    for s in 1usize..1 << d {
        let low = s.trailing_zeros() as usize;
        let m = out[s & (s - 1)].component_mul(l.get(low));
        out.push(m);
    }
    out
}

fn moebius_variances(model: &FittedModel, l: &LMatrices) -> Result<Vec<f64>> {
    let d = model.d();
    check_dim(d, MAX_GLOBAL_FEATURES)?;
    if l.len() != d {
        return Err(Error::InvalidInput("one L matrix per feature required".into()));
    }
    let alpha = sigma_inverse(model)? * model.targets();
    let ov = model.order_variances();
    Ok(hadamard_products(l)
        .iter()
        .enumerate()
        .map(|(s, ls)| {
            if s == 0 {
                return 0.0;
            }
            let s2 = ov.get(s.count_ones() as usize);
            s2 * s2 * alpha.dot(&(ls * &alpha))
        })
        .collect())
}

/// `phi_i = sum_{S containing i} sigma_|S|^4 / |S| alpha' L_S alpha`.
pub fn naive_global(model: &FittedModel, l: &LMatrices) -> Result<Vec<f64>> {
    let m = moebius_variances(model, l)?;
    let d = model.d();
    let mut phi = vec![0.0; d];
    for (s, v) in m.iter().enumerate().skip(1) {
        let k = s.count_ones() as f64;
        for (i, p) in phi.iter_mut().enumerate() {
            if s & (1 << i) != 0 {
                *p += v / k;
            }
        }
    }
    Ok(phi)
}

/// `sum_{S nonempty} sigma_|S|^4 alpha' L_S alpha`.
pub fn naive_global_total(model: &FittedModel, l: &LMatrices) -> Result<f64> {
    Ok(moebius_variances(model, l)?.iter().sum())
}

/// Elementary symmetric polynomial of order `q` by subset enumeration.
pub fn naive_esp(items: &[f64], q: usize) -> Result<f64> {
    check_dim(items.len(), MAX_FEATURES)?;
    Ok(SubsetIndex::all(items.len())
        .filter(|s| s.len() == q)
        .map(|s| s.features().map(|j| items[j]).product::<f64>())
        .sum())
}

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let x = h * XGK[k];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]` to absolute
/// tolerance `tol`, bisecting the worst interval up to 4000 times.
pub fn quadrature<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gauss_kronrod(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::QuadratureFailed { estimate: total, error });
        }
        if error <= tol {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureFailed { estimate: total, error });
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod(&f, lo, mid);
        let (v2, e2) = gauss_kronrod(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Gauss-Hermite rule for `E[f(X)]` with `X ~ N(0, 1)` (Golub-Welsch).
pub fn gauss_hermite(points: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(points, points, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..points)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_basics() {
        assert!((quadrature(|_| 1.0, 0.0, 1.0, 1e-13).unwrap() - 1.0).abs() < 1e-12);
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((quadrature(pdf, -8.0, 8.0, 1e-12).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadrature_reports_failure() {
        let r = quadrature(|x: f64| 1.0 / x.abs().max(1e-300), -1.0, 1.0, 1e-10);
        assert!(matches!(r, Err(Error::QuadratureFailed { .. })));
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let m = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-12);
        assert!(m(1).abs() < 1e-12);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
    }

    #[test]
    fn subset_index() {
        let s = SubsetIndex::from_features(&[0, 3]).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.contains(3) && !s.contains(1));
        assert_eq!(s.features().collect::<Vec<_>>(), vec![0, 3]);
        assert!(SubsetIndex::from_features(&[15]).is_err());
        assert_eq!(SubsetIndex::all(3).count(), 8);
    }

    #[test]
    fn naive_esp_small() {
        assert_eq!(naive_esp(&[1.0, 2.0, 3.0], 2).unwrap(), 11.0);
        assert_eq!(naive_esp(&[], 0).unwrap(), 1.0);
        assert!(naive_esp(&[1.0; 16], 1).is_err());
    }
}
