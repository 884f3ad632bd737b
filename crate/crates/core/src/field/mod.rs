//! Function representations with derivative oracles.
//!
//! A [`Field`] answers value and derivative queries through jets: one call
//! to [`Field::jet`] returns every normalized derivative up to a given order
//! at a point. Three backends exist: exact polynomials, finite differences
//! of a callable, and evaluation trees built from other fields.

mod fd;
mod polynomial;
mod tree;

pub use fd::{finite_difference_field, FiniteDifferenceField};
pub use polynomial::{polynomial_field, PolynomialField, PolynomialSpec, TermSpec};
pub use tree::{Expr, ExprField};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SosError};
use crate::jet::{factorial, Jet};
use crate::sampling::ball_point;

/// Dimension, derivative order and Hölder exponent of a function class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessClass {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
}

impl SmoothnessClass {
    pub fn new(n: usize, k: usize, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(SosError::InvalidInput(
                "dimension must be at least 1".into(),
            ));
        }
        if k == 0 {
            return Err(SosError::InvalidInput(
                "derivative order k must be at least 1".into(),
            ));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(SosError::InvalidInput(format!(
                "alpha = {alpha} outside (0, 1]"
            )));
        }
        Ok(SmoothnessClass { n, k, alpha })
    }

    /// `k + α`.
    pub fn total(&self) -> f64 {
        self.k as f64 + self.alpha
    }

    /// Same `k` and `α` in another dimension.
    pub fn with_dim(&self, n: usize) -> Self {
        SmoothnessClass { n, ..*self }
    }
}

/// Multi-index `β = (β_1, …, β_n)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = vec![0; n];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Entrywise partial order `self ≤ other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `β!`.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&b| factorial(b)).product()
    }

    /// Every multi-index of dimension `n` with order exactly `m`.
    pub fn all_of_order(n: usize, m: usize) -> Vec<MultiIndex> {
        crate::jet::JetSpace::get(n, m)
            .indices()
            .iter()
            .filter(|b| b.iter().sum::<usize>() == m)
            .map(|b| MultiIndex(b.clone()))
            .collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    PolynomialExact,
    ClosureWithFiniteDifference,
    EvaluationTree,
}

/// A real function on `R^n` with smoothness metadata and derivative oracle.
pub trait Field: Send + Sync {
    fn smoothness(&self) -> SmoothnessClass;

    fn backend(&self) -> Backend;

    /// All normalized derivatives `∂^β f(x)/β!` with `|β| ≤ order`.
    fn jet(&self, x: &[f64], order: usize) -> Jet;

    fn dim(&self) -> usize {
        self.smoothness().n
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.jet(x, 0).value()
    }

    fn deriv(&self, beta: &MultiIndex, x: &[f64]) -> f64 {
        self.jet(x, beta.order()).derivative(&beta.0)
    }

    /// Taylor coefficients of `t ↦ f(x + t·dir)` up to `order`.
    fn line_taylor(&self, x: &[f64], dir: &[f64], order: usize) -> Vec<f64> {
        self.jet(x, order).along(dir)
    }
}

pub type FieldRef = Arc<dyn Field>;

/// `∂^j_ξ f(x) = Σ_{|β|=j} (j!/β!) ξ^β ∂^β f(x)` for a unit vector `ξ`.
pub fn directional_derivative(f: &dyn Field, x: &[f64], xi: &[f64], j: usize) -> Result<f64> {
    let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(SosError::InvalidInput(format!(
            "direction has norm {norm}, expected 1"
        )));
    }
    Ok(directional_form(&f.jet(x, j), xi, j))
}

/// The degree-`j` form `j!·Σ_{|β|=j} c_β ξ^β` of a jet, for any `ξ`.
pub fn directional_form(jet: &Jet, xi: &[f64], j: usize) -> f64 {
    let mut s = 0.0;
    for (b, c) in jet.homogeneous(j) {
        let mut m = c;
        for (e, v) in b.iter().zip(xi) {
            m *= v.powi(*e as i32);
        }
        s += m;
    }
    s * factorial(j)
}

/// Frobenius norm of the symmetric derivative tensor of order `l`,
/// `(Σ_{|β|=l} (l!/β!) (∂^β f)²)^{1/2}`.
pub fn tensor_norm(jet: &Jet, l: usize) -> f64 {
    let lf = factorial(l);
    jet.homogeneous(l)
        .map(|(b, c)| {
            let bf: f64 = b.iter().map(|&e| factorial(e)).product();
            let d = c * bf;
            lf / bf * d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Sampled surrogate for the pointwise Hölder seminorm of `∂^β f` at `x`:
/// the maximum difference quotient over all pairs drawn from `x` and the
/// first `samples − 1` points of a fixed schedule in the ball of `radius`.
pub fn pointwise_seminorm_estimate(
    f: &dyn Field,
    beta: &MultiIndex,
    lambda: f64,
    x: &[f64],
    radius: f64,
    samples: usize,
) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(SosError::InvalidInput("radius must be positive".into()));
    }
    if samples < 2 {
        return Err(SosError::InvalidInput("need at least two samples".into()));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(SosError::InvalidInput(format!(
            "exponent {lambda} outside (0, 1]"
        )));
    }
    let n = x.len();
    let mut pts = vec![x.to_vec()];
    for i in 0..(samples - 1) as u64 {
        let b = ball_point(i, n, 1.0);
        pts.push(x.iter().zip(&b).map(|(a, o)| a + radius * o).collect());
    }
    let vals: Vec<f64> = pts.iter().map(|p| f.deriv(beta, p)).collect();
    Ok(max_quotient(&pts, &vals, lambda))
}

/// `max |v_i − v_j| / |p_i − p_j|^λ` over all distinct pairs.
pub fn max_quotient(pts: &[Vec<f64>], vals: &[f64], lambda: f64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let d = dist(&pts[i], &pts[j]);
            if d > 0.0 {
                best = best.max((vals[i] - vals[j]).abs() / d.powf(lambda));
            }
        }
    }
    best
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Symmetric Hessian of a jet of order ≥ 2.
pub fn hessian(jet: &Jet) -> Vec<Vec<f64>> {
    let n = jet.nvars();
    let mut h = vec![vec![0.0; n]; n];
    for (i, row) in h.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let mut b = vec![0; n];
            b[i] += 1;
            b[j] += 1;
            *v = jet.derivative(&b);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn quad(signs: (i64, i64)) -> PolynomialField {
        let mut p = PolynomialField::zero(SmoothnessClass::new(2, 2, 1.0).unwrap());
        p.add_term(vec![2, 0], BigRational::from_integer(signs.0.into()));
        p.add_term(vec![0, 2], BigRational::from_integer(signs.1.into()));
        p
    }

    #[test]
    fn directional_second_derivatives() {
        let f = quad((1, 1));
        assert!(
            (directional_derivative(&f, &[0.3, -2.0], &[1.0, 0.0], 2).unwrap() - 2.0).abs() < 1e-14
        );
        let g = quad((1, -1));
        assert!(
            (directional_derivative(&g, &[0.3, -2.0], &[0.0, 1.0], 2).unwrap() + 2.0).abs() < 1e-14
        );
        assert_eq!(
            directional_derivative(&g, &[0.5, 0.25], &[0.6, 0.8], 0).unwrap(),
            g.eval(&[0.5, 0.25])
        );
    }

    #[test]
    fn non_unit_direction_rejected() {
        let f = quad((1, 1));
        assert!(directional_derivative(&f, &[0.0, 0.0], &[1.0, 1.0], 2).is_err());
    }

    #[test]
    fn smoothness_validation() {
        assert!(SmoothnessClass::new(0, 2, 1.0).is_err());
        assert!(SmoothnessClass::new(2, 0, 1.0).is_err());
        assert!(SmoothnessClass::new(2, 2, 0.0).is_err());
        assert!(SmoothnessClass::new(2, 2, 1.5).is_err());
        assert!(SmoothnessClass::new(2, 2, 1.0).is_ok());
    }

    #[test]
    fn multi_index_order_and_partial_order() {
        let a = MultiIndex(vec![1, 2]);
        let b = MultiIndex(vec![2, 2]);
        assert_eq!(a.order(), 3);
        assert!(a.le(&b));
        assert!(!b.le(&a));
        assert_eq!(MultiIndex::all_of_order(2, 2).len(), 3);
    }

    #[test]
    fn seminorm_of_abs_approaches_one() {
        let f = finite_difference_field(
            Arc::new(|x: &[f64]| x[0].abs()),
            SmoothnessClass::new(1, 1, 1.0).unwrap(),
            1e-4,
        )
        .unwrap();
        let s =
            pointwise_seminorm_estimate(&f, &MultiIndex::zero(1), 1.0, &[0.0], 0.5, 64).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn seminorm_of_derivative_of_square() {
        let mut p = PolynomialField::zero(SmoothnessClass::new(1, 2, 1.0).unwrap());
        p.add_term(vec![2], BigRational::from_integer(1.into()));
        let s =
            pointwise_seminorm_estimate(&p, &MultiIndex(vec![1]), 1.0, &[0.0], 0.5, 64).unwrap();
        assert!((s - 2.0).abs() < 1e-9);
        let mut c = PolynomialField::zero(SmoothnessClass::new(1, 2, 1.0).unwrap());
        c.add_term(vec![0], BigRational::from_integer(3.into()));
        let s0 =
            pointwise_seminorm_estimate(&c, &MultiIndex(vec![1]), 0.5, &[1.0], 0.5, 32).unwrap();
        assert_eq!(s0, 0.0);
    }

    #[test]
    fn seminorm_monotone_in_samples() {
        let f = finite_difference_field(
            Arc::new(|x: &[f64]| (3.0 * x[0]).sin() * x[1]),
            SmoothnessClass::new(2, 2, 1.0).unwrap(),
            1e-3,
        )
        .unwrap();
        let mut prev = 0.0;
        for m in [2, 4, 8, 16, 32] {
            let s = pointwise_seminorm_estimate(&f, &MultiIndex::zero(2), 0.5, &[0.1, 0.2], 0.3, m)
                .unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }
}
