//! Exact weights `q_k ≥ 0` on nodes `η_k` with `Σ q_k η_k^j = 0` for odd
//! `j < ℓ` and `Σ q_k η_k^ℓ = 1`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SosError};

pub const MAX_ELL: usize = 99;

#[derive(Clone, Debug, PartialEq)]
pub struct RationalWeights {
    pub ell: usize,
    pub etas: Vec<BigRational>,
    pub qs: Vec<BigRational>,
}

/// Printable form with `"p/q"` strings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightsDoc {
    pub ell: usize,
    pub s: usize,
    pub etas: Vec<String>,
    pub qs: Vec<String>,
    pub pass: bool,
}

impl RationalWeights {
    pub fn s(&self) -> usize {
        self.etas.len()
    }

    pub fn to_doc(&self) -> WeightsDoc {
        WeightsDoc {
            ell: self.ell,
            s: self.s(),
            etas: self.etas.iter().map(ToString::to_string).collect(),
            qs: self.qs.iter().map(ToString::to_string).collect(),
            pass: verify_odd_moments(self),
        }
    }
}

fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// `η_k = (−1)^{s+k} k` and `q_k = (η_k Π_{i≠k}(η_k² − η_i²))^{−1}`.
pub fn odd_moment_weights(ell: usize) -> Result<RationalWeights> {
    if ell.is_multiple_of(2) || ell > MAX_ELL {
        return Err(SosError::InvalidInput(format!(
            "ell = {ell} must be odd and in 1..={MAX_ELL}"
        )));
    }
    let s = ell.div_ceil(2);
    let etas: Vec<BigRational> = (1..=s as i64)
        .map(|k| {
            if (s as i64 + k) % 2 == 0 {
                int(k)
            } else {
                int(-k)
            }
        })
        .collect();
    let qs = etas
        .iter()
        .enumerate()
        .map(|(k, ek)| {
            let ek2 = ek * ek;
            let prod = etas
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .fold(ek.clone(), |acc, (_, ei)| acc * (&ek2 - ei * ei));
            prod.recip()
        })
        .collect();
    Ok(RationalWeights { ell, etas, qs })
}

/// Evaluates every constraint directly; also rejects negative weights,
/// repeated node magnitudes and length mismatches.
pub fn verify_odd_moments(w: &RationalWeights) -> bool {
    let s = w.etas.len();
    if w.ell.is_multiple_of(2) || s != w.ell.div_ceil(2) || w.qs.len() != s {
        return false;
    }
    if w.qs.iter().any(|q| q.is_negative()) {
        return false;
    }
    for i in 0..s {
        for j in 0..i {
            if w.etas[i].abs() == w.etas[j].abs() {
                return false;
            }
        }
    }
    (1..=w.ell).step_by(2).all(|j| {
        let m: BigRational =
            w.qs.iter()
                .zip(&w.etas)
                .map(|(q, e)| q * Pow::pow(e, j as u32))
                .fold(BigRational::zero(), |a, b| a + b);
        if j == w.ell {
            m.is_one()
        } else {
            m.is_zero()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn small_cases() {
        let w = odd_moment_weights(1).unwrap();
        assert_eq!(
            (w.etas.clone(), w.qs.clone()),
            (vec![r(1, 1)], vec![r(1, 1)])
        );
        let w = odd_moment_weights(3).unwrap();
        assert_eq!(w.etas, vec![r(-1, 1), r(2, 1)]);
        assert_eq!(w.qs, vec![r(1, 3), r(1, 6)]);
        let w = odd_moment_weights(5).unwrap();
        assert_eq!(w.etas, vec![r(1, 1), r(-2, 1), r(3, 1)]);
        assert_eq!(w.qs, vec![r(1, 24), r(1, 30), r(1, 120)]);
        assert!(verify_odd_moments(&w));
    }

    #[test]
    fn tampering_and_singular_nodes_fail() {
        let mut w = odd_moment_weights(7).unwrap();
        w.qs[0] += r(1, 1);
        assert!(!verify_odd_moments(&w));
        let sing = RationalWeights {
            ell: 3,
            etas: vec![r(1, 1), r(-1, 1)],
            qs: vec![r(1, 2), r(1, 2)],
        };
        assert!(!verify_odd_moments(&sing));
    }

    #[test]
    fn bad_ell() {
        assert!(odd_moment_weights(4).is_err());
        assert!(odd_moment_weights(0).is_err());
        assert!(odd_moment_weights(101).is_err());
        assert!(odd_moment_weights(99).is_ok());
    }

    #[test]
    fn doc_strings() {
        let d = odd_moment_weights(5).unwrap().to_doc();
        assert_eq!(d.qs, vec!["1/24", "1/30", "1/120"]);
        assert_eq!(d.etas, vec!["1", "-2", "3"]);
        assert!(d.pass);
    }
}
