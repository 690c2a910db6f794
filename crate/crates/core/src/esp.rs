//! Elementary symmetric polynomials over homogeneous collections of carriers.
//!
//! A carrier is a scalar, a vector or a square matrix; every arithmetic
//! operation is element-wise, so a collection of carriers of the same shape
//! is just a set of independent "lanes" that share one expansion.
//!
//! Two routes are provided. [`esp_stable`] expands the generating polynomial
//! `prod_j (1 + z_j t)` in place, highest order first, and never divides or
//! subtracts. [`esp_newton`] uses the power-sum recursion
//! `q e_q = sum_s (-1)^(s-1) e_(q-s) p_s`; it is kept to cross-check the stable
//! route and is noticeably less accurate when items span many magnitudes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape shared by every carrier in one computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Scalar,
    Vector(usize),
    /// Square `n x n` matrix, stored row-major.
    Matrix(usize),
}

impl Shape {
    /// Number of independent element-wise lanes.
    pub fn lanes(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(n) => n * n,
        }
    }
}

/// A real scalar, vector or square matrix under the Hadamard product.
#[derive(Clone, Debug, PartialEq)]
pub struct Carrier {
    shape: Shape,
    data: Vec<f64>,
}

impl Carrier {
    pub fn scalar(value: f64) -> Self {
        Carrier {
            shape: Shape::Scalar,
            data: vec![value],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Carrier {
            shape: Shape::Vector(values.len()),
            data: values,
        }
    }

    /// Builds an `n x n` matrix carrier from row-major data.
    pub fn matrix(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "matrix carrier of order {n} needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Carrier {
            shape: Shape::Matrix(n),
            data,
        })
    }

    /// The Hadamard identity of a shape.
    pub fn ones(shape: Shape) -> Self {
        Carrier {
            shape,
            data: vec![1.0; shape.lanes()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Carrier {
            shape,
            data: vec![0.0; shape.lanes()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Values `e_0 ..= e_r` of the elementary symmetric polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct EspTable {
    shape: Shape,
    entries: Vec<Vec<f64>>,
}

impl EspTable {
    /// Highest order `r` held by the table.
    pub fn order(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Lanes of `e_q`.
    pub fn get(&self, q: usize) -> &[f64] {
        &self.entries[q]
    }

    /// `e_q` for scalar tables (lane 0 otherwise).
    pub fn scalar(&self, q: usize) -> f64 {
        self.entries[q][0]
    }

    pub fn carrier(&self, q: usize) -> Carrier {
        Carrier {
            shape: self.shape,
            data: self.entries[q].clone(),
        }
    }

    /// Scalar table as a plain vector `[e_0, .., e_r]`.
    pub fn to_scalars(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e[0]).collect()
    }
}

/// Reusable in-place expansion of `prod_j (1 + z_j t)` truncated at order `r`.
///
/// Coefficient storage is `(r + 1) * lanes` and is reused across
/// [`EspAccumulator::reset`] calls, which is what the explanation code paths
/// need when they rebuild leave-one-out tables for every feature.
#[derive(Clone, Debug)]
pub struct EspAccumulator {
    lanes: usize,
    order: usize,
    pushed: usize,
    coeffs: Vec<f64>,
}

impl EspAccumulator {
    pub fn new(lanes: usize, order: usize) -> Self {
        let mut acc = EspAccumulator {
            lanes,
            order,
            pushed: 0,
            coeffs: vec![0.0; (order + 1) * lanes],
        };
        acc.reset();
        acc
    }

    pub fn reset(&mut self) {
        self.pushed = 0;
        let (head, tail) = self.coeffs.split_at_mut(self.lanes);
        head.fill(1.0);
        tail.fill(0.0);
    }

    pub fn lanes(&self) -> usize {
        self.lanes
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of items folded in since the last reset.
    pub fn len(&self) -> usize {
        self.pushed
    }

    pub fn is_empty(&self) -> bool {
        self.pushed == 0
    }

    /// Folds one item into the expansion: `e_q += z * e_(q-1)` for `q` from
    /// the top order down to 1.
    pub fn push(&mut self, item: &[f64]) {
        assert_eq!(item.len(), self.lanes, "carrier lane count mismatch");
        self.pushed += 1;
        let top = self.order.min(self.pushed);
        let lanes = self.lanes;
        for q in (1..=top).rev() {
            let (lower, upper) = self.coeffs.split_at_mut(q * lanes);
            let prev = &lower[(q - 1) * lanes..];
            let cur = &mut upper[..lanes];
            for ((c, &p), &z) in cur.iter_mut().zip(prev).zip(item) {
                *c += z * p;
            }
        }
    }

    /// Scalar version of [`EspAccumulator::push`] for single-lane tables.
    pub fn push_scalar(&mut self, z: f64) {
        self.push(std::slice::from_ref(&z));
    }

    /// Lanes of `e_q`.
    pub fn coeff(&self, q: usize) -> &[f64] {
        &self.coeffs[q * self.lanes..(q + 1) * self.lanes]
    }

    pub fn into_table(self, shape: Shape) -> EspTable {
        let entries = self.coeffs.chunks(self.lanes).map(<[f64]>::to_vec).collect();
        EspTable { shape, entries }
    }
}

fn common_shape(items: &[Carrier], r: usize) -> Result<Shape> {
    let Some(first) = items.first() else {
        if r == 0 {
            return Ok(Shape::Scalar);
        }
        return Err(Error::InvalidInput(format!(
            "cannot infer carrier shape for order {r} from an empty item set"
        )));
    };
    let shape = first.shape;
    if let Some(bad) = items.iter().find(|c| c.shape != shape) {
        return Err(Error::InvalidInput(format!(
            "carrier shape mismatch: {:?} vs {:?}",
            shape, bad.shape
        )));
    }
    Ok(shape)
}

/// ESPs by in-place generating-polynomial expansion (items in the given
/// order, orders descending). No divisions.
pub fn esp_stable(items: &[Carrier], r: usize) -> Result<EspTable> {
    let shape = common_shape(items, r)?;
    let mut acc = EspAccumulator::new(shape.lanes(), r);
    for item in items {
        acc.push(&item.data);
    }
    Ok(acc.into_table(shape))
}

/// Like [`esp_stable`], but each lane's items are first sorted by their
/// total order, so the result does not depend on how the items are listed.
pub fn esp_stable_canonical(items: &[Carrier], r: usize) -> Result<EspTable> {
    let shape = common_shape(items, r)?;
    let lanes = shape.lanes();
    let mut entries = vec![vec![0.0; lanes]; r + 1];
    let mut column = Vec::with_capacity(items.len());
    let mut acc = EspAccumulator::new(1, r);
    for lane in 0..lanes {
        column.clear();
        column.extend(items.iter().map(|c| c.data[lane]));
        column.sort_by(f64::total_cmp);
        acc.reset();
        for &z in &column {
            acc.push_scalar(z);
        }
        for (q, e) in entries.iter_mut().enumerate() {
            e[lane] = acc.coeff(q)[0];
        }
    }
    Ok(EspTable { shape, entries })
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2` (double-double).
#[derive(Clone, Copy, Debug, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let u = Dd::two_sum(s.hi, s.lo + t.hi);
        Dd::two_sum(u.hi, u.lo + t.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn div_f64(self, d: f64) -> Dd {
        let q1 = self.hi / d;
        let r = self.add(Dd::new(q1).mul(Dd::new(d)).neg());
        Dd::two_sum(q1, r.hi / d)
    }
}

/// ESPs through Newton's identities on element-wise power sums.
///
/// The alternating recursion cancels heavily, so power sums and the
/// recursion are carried in double-double precision and rounded once.
pub fn esp_newton(items: &[Carrier], r: usize) -> Result<EspTable> {
    let shape = common_shape(items, r)?;
    let lanes = shape.lanes();

    // p_s for s = 1..=r
    let mut power_sums = vec![vec![Dd::default(); lanes]; r + 1];
    for item in items {
        let mut pow: Vec<Dd> = item.data.iter().map(|&v| Dd::new(v)).collect();
        for s in 1..=r {
            for (p, &v) in power_sums[s].iter_mut().zip(&pow) {
                *p = p.add(v);
            }
            if s < r {
                for (v, &z) in pow.iter_mut().zip(&item.data) {
                    *v = v.mul(Dd::new(z));
                }
            }
        }
    }

    let mut entries = vec![vec![Dd::default(); lanes]; r + 1];
    entries[0].fill(Dd::new(1.0));
    for q in 1..=r.min(items.len()) {
        let mut acc = vec![Dd::default(); lanes];
        for s in 1..=q {
            let (e_prev, p) = (&entries[q - s], &power_sums[s]);
            for ((a, &e), &ps) in acc.iter_mut().zip(e_prev).zip(p) {
                let term = e.mul(ps);
                *a = a.add(if s % 2 == 1 { term } else { term.neg() });
            }
        }
        entries[q] = acc.into_iter().map(|a| a.div_f64(q as f64)).collect();
    }
    Ok(EspTable {
        shape,
        entries: entries
            .into_iter()
            .map(|e| e.into_iter().map(|v| v.hi).collect())
            .collect(),
    })
}

/// Scalar shortcut for [`esp_stable`].
pub fn esp_scalars(items: &[f64], r: usize) -> Vec<f64> {
    let mut acc = EspAccumulator::new(1, r);
    for &z in items {
        acc.push_scalar(z);
    }
    acc.coeffs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(v: &[f64]) -> Vec<Carrier> {
        v.iter().copied().map(Carrier::scalar).collect()
    }

    #[test]
    fn stable_small_expansion_is_exact() {
        let t = esp_stable(&scalars(&[1.0, 2.0, 3.0]), 3).unwrap();
        assert_eq!(t.to_scalars(), vec![1.0, 6.0, 11.0, 6.0]);
    }

    #[test]
    fn newton_small_expansion() {
        let t = esp_newton(&scalars(&[1.0, 2.0, 3.0]), 3).unwrap();
        assert_eq!(t.to_scalars(), vec![1.0, 6.0, 11.0, 6.0]);
    }

    #[test]
    fn empty_product() {
        assert_eq!(esp_stable(&[], 0).unwrap().to_scalars(), vec![1.0]);
        assert_eq!(esp_newton(&[], 0).unwrap().to_scalars(), vec![1.0]);
        assert!(esp_stable(&[], 2).is_err());
    }

    #[test]
    fn widely_spread_pair() {
        let t = esp_stable(&scalars(&[1e-8, 1e8]), 2).unwrap();
        assert_eq!(t.scalar(1), 1e8 + 1e-8);
        assert_eq!(t.scalar(2), 1.0);
    }

    #[test]
    fn orders_beyond_item_count_are_zero() {
        let t = esp_stable(&scalars(&[0.5, 2.0]), 4).unwrap();
        assert_eq!(t.scalar(3), 0.0);
        assert_eq!(t.scalar(4), 0.0);
        let t = esp_newton(&scalars(&[0.5, 2.0]), 4).unwrap();
        assert_eq!(t.scalar(3), 0.0);
        assert_eq!(t.scalar(4), 0.0);
    }

    #[test]
    fn second_order_from_power_sums() {
        let z = [0.3, -1.7, 2.2, 0.9, 4.1];
        let p1: f64 = z.iter().sum();
        let p2: f64 = z.iter().map(|v| v * v).sum();
        let e2 = (p1 * p1 - p2) / 2.0;
        let t = esp_newton(&scalars(&z), 2).unwrap();
        assert!((t.scalar(2) - e2).abs() < 1e-12);
        let t = esp_stable(&scalars(&z), 2).unwrap();
        assert!((t.scalar(2) - e2).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let items = vec![Carrier::scalar(1.0), Carrier::vector(vec![1.0, 2.0])];
        assert!(matches!(esp_stable(&items, 1), Err(Error::InvalidInput(_))));
        assert!(matches!(esp_newton(&items, 1), Err(Error::InvalidInput(_))));
        assert!(Carrier::matrix(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn vector_lanes_are_independent() {
        let items = vec![
            Carrier::vector(vec![1.0, 2.0]),
            Carrier::vector(vec![2.0, 3.0]),
            Carrier::vector(vec![3.0, 5.0]),
        ];
        let t = esp_stable(&items, 3).unwrap();
        assert_eq!(t.get(0), &[1.0, 1.0]);
        assert_eq!(t.get(1), &[6.0, 10.0]);
        assert_eq!(t.get(2), &[11.0, 31.0]);
        assert_eq!(t.get(3), &[6.0, 30.0]);
    }

    #[test]
    fn matrix_identity_is_all_ones() {
        let items = vec![Carrier::matrix(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()];
        let t = esp_stable(&items, 1).unwrap();
        assert_eq!(t.carrier(0), Carrier::ones(Shape::Matrix(2)));
        assert_eq!(t.get(1), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn accumulator_reset_reuses_storage() {
        let mut acc = EspAccumulator::new(1, 2);
        acc.push_scalar(4.0);
        acc.reset();
        for z in [1.0, 2.0, 3.0] {
            acc.push_scalar(z);
        }
        assert_eq!(acc.coeff(2), &[11.0]);
        assert_eq!(acc.len(), 3);
    }
}
