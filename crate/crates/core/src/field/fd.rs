use std::sync::Arc;

use super::{Backend, Field, SmoothnessClass};
use crate::error::{Result, SosError};
use crate::jet::{factorial, Jet, JetSpace};

type Callable = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A callable whose derivatives come from iterated central differences.
#[derive(Clone)]
pub struct FiniteDifferenceField {
    f: Callable,
    smooth: SmoothnessClass,
    step: f64,
}

pub fn finite_difference_field(
    f: Callable,
    smoothness: SmoothnessClass,
    step: f64,
) -> Result<FiniteDifferenceField> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(SosError::InvalidInput(format!(
            "finite-difference step {step} must be positive"
        )));
    }
    Ok(FiniteDifferenceField {
        f,
        smooth: smoothness,
        step,
    })
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |r, i| r * (n - i) as f64 / (i + 1) as f64)
}

impl FiniteDifferenceField {
    pub fn step(&self) -> f64 {
        self.step
    }

    /// `∂^β f(x)` by the tensor product of the one-dimensional stencils
    /// `D^m ≈ h^{−m} Σ_j (−1)^j C(m,j) f(x + (m/2 − j) h)`.
    fn central(&self, beta: &[usize], x: &[f64]) -> f64 {
        let n = x.len();
        let h = self.step;
        let total: usize = beta.iter().map(|m| m + 1).product();
        let mut acc = 0.0;
        let mut p = x.to_vec();
        for mut code in 0..total {
            let mut w = 1.0;
            for i in 0..n {
                let m = beta[i];
                let j = code % (m + 1);
                code /= m + 1;
                p[i] = x[i] + (m as f64 / 2.0 - j as f64) * h;
                w *= if j.is_multiple_of(2) { 1.0 } else { -1.0 } * binom(m, j);
            }
            acc += w * (self.f)(&p);
        }
        let order: i32 = beta.iter().sum::<usize>() as i32;
        acc / h.powi(order)
    }
}

impl Field for FiniteDifferenceField {
    fn smoothness(&self) -> SmoothnessClass {
        self.smooth
    }

    fn backend(&self) -> Backend {
        Backend::ClosureWithFiniteDifference
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn jet(&self, x: &[f64], order: usize) -> Jet {
        let n = self.smooth.n;
        let space = JetSpace::get(n, order);
        let c = space
            .indices()
            .iter()
            .map(|b| {
                if b.iter().all(|&e| e == 0) {
                    (self.f)(x)
                } else {
                    let bf: f64 = b.iter().map(|&e| factorial(e)).product();
                    self.central(b, x) / bf
                }
            })
            .collect();
        Jet::from_coeffs(n, order, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MultiIndex;

    #[test]
    fn second_derivative_of_square() {
        let f = finite_difference_field(
            Arc::new(|x: &[f64]| x[0] * x[0]),
            SmoothnessClass::new(1, 2, 1.0).unwrap(),
            1e-3,
        )
        .unwrap();
        assert!((f.deriv(&MultiIndex(vec![2]), &[0.0]) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn constant_has_zero_slope() {
        let f = finite_difference_field(
            Arc::new(|_: &[f64]| 4.5),
            SmoothnessClass::new(1, 2, 1.0).unwrap(),
            1e-3,
        )
        .unwrap();
        assert!(f.deriv(&MultiIndex(vec![1]), &[2.0]).abs() < 1e-9);
    }

    #[test]
    fn mixed_partial_of_product() {
        let f = finite_difference_field(
            Arc::new(|x: &[f64]| x[0] * x[1]),
            SmoothnessClass::new(2, 2, 1.0).unwrap(),
            1e-3,
        )
        .unwrap();
        assert!((f.deriv(&MultiIndex(vec![1, 1]), &[0.0, 0.0]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nonpositive_step_rejected() {
        let c: Callable = Arc::new(|_: &[f64]| 0.0);
        assert!(
            finite_difference_field(c.clone(), SmoothnessClass::new(1, 2, 1.0).unwrap(), 0.0)
                .is_err()
        );
        assert!(
            finite_difference_field(c, SmoothnessClass::new(1, 2, 1.0).unwrap(), -1.0).is_err()
        );
    }
}
