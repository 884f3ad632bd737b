//! Square-count recursions, their closed-form envelopes and the
//! Pythagoras-number lower bound.

use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SosError};

fn graph_factor(n: u32) -> BigUint {
    BigUint::from(4u32).pow(n) - BigUint::from(2u32).pow(n)
}

fn recurse(n: u32, s1: u32, s2_factor: u32) -> Result<BigUint> {
    if n == 0 {
        return Err(SosError::InvalidInput(
            "dimension must be at least 1".into(),
        ));
    }
    let mut s = BigUint::from(s1);
    for m in 2..=n {
        let f = if m == 2 {
            BigUint::from(s2_factor)
        } else {
            graph_factor(m)
        };
        s = f * (s + 1u32);
    }
    Ok(s)
}

/// `s_1 = 2`, `s_2 = 9(s_1 + 1) = 27`, `s_n = (4^n − 2^n)(s_{n−1} + 1)`.
pub fn upper_count(n: u32) -> Result<BigUint> {
    recurse(n, 2, 9)
}

/// The same recursion started from the four one-dimensional classes the
/// base construction actually emits: 4, 45, 2576, …
pub fn constructive_count(n: u32) -> Result<BigUint> {
    recurse(n, 4, 9)
}

/// Constructive class budget for one level of the pipeline in dimension `n`.
pub fn constructive_budget(n: usize) -> usize {
    constructive_count(n as u32)
        .ok()
        .and_then(|v| v.to_usize())
        .unwrap_or(usize::MAX)
}

/// `s_n < 2^{n²+n−1.3844} < 2^{n²+n−1}`, decided exactly by comparing
/// `s_n^{2500}` with `2^{2500(n²+n) − 3461}`.
pub fn upper_bound_check(n: u32) -> Result<bool> {
    if !(3..=12).contains(&n) {
        return Err(SosError::InvalidInput(format!("n = {n} outside 3..=12")));
    }
    let s = upper_count(n)?;
    let e = u64::from(n * n + n);
    let refined = s.pow(2500).bits() <= 2500 * e - 3461;
    let weak = s.bits() < e;
    Ok(refined && weak)
}

fn effective_k(k: u32) -> u32 {
    if k % 2 == 1 {
        k - 1
    } else {
        k
    }
}

/// `2^{n−1} Π_{j=1}^{n−1} (j+k)/(2j+k)` with `k ↦ k−1` for odd `k`.
pub fn lower_bound(n: u32, k: u32) -> Result<BigRational> {
    if n == 0 || k < 2 {
        return Err(SosError::InvalidInput(format!(
            "need n ≥ 1 and k ≥ 2, got n = {n}, k = {k}"
        )));
    }
    let ke = BigInt::from(effective_k(k));
    let mut v = BigRational::from_integer(BigInt::from(2u32).pow(n - 1));
    for j in 1..n {
        let j = BigInt::from(j);
        v *= BigRational::new(&j + &ke, BigInt::from(2) * &j + &ke);
    }
    Ok(v)
}

/// `2^{n−1}(k/(k+n))^{n/2}` with the same odd-`k` substitution.
pub fn lower_bound_closed_form(n: u32, k: u32) -> f64 {
    let ke = f64::from(effective_k(k));
    2f64.powi(n as i32 - 1) * (ke / (ke + f64::from(n))).powf(f64::from(n) / 2.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundsRow {
    pub n: u32,
    pub k: u32,
    pub k_effective: u32,
    pub s_n: String,
    pub constructive: String,
    pub upper_exponent: f64,
    pub refined_exponent: f64,
    pub lower: String,
    pub lower_value: f64,
    pub lower_closed_form: f64,
}

pub fn bounds_table(
    ns: std::ops::RangeInclusive<u32>,
    ks: std::ops::RangeInclusive<u32>,
) -> Result<Vec<BoundsRow>> {
    let mut rows = Vec::new();
    for n in ns {
        for k in ks.clone() {
            let lo = lower_bound(n, k)?;
            let e = f64::from(n * n + n);
            rows.push(BoundsRow {
                n,
                k,
                k_effective: effective_k(k),
                s_n: upper_count(n)?.to_string(),
                constructive: constructive_count(n)?.to_string(),
                upper_exponent: e - 1.0,
                refined_exponent: e - 1.3844,
                lower: lo.to_string(),
                lower_value: lo.to_f64().unwrap_or(f64::NAN),
                lower_closed_form: lower_bound_closed_form(n, k),
            });
        }
    }
    Ok(rows)
}

pub fn table_markdown(rows: &[BoundsRow]) -> String {
    let mut out = String::from(
        "| n | k | k used | s_n | constructive | 2^(n²+n−1.3844) | lower | lower (closed) |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | 2^{:.4} | {} | {:.4} |",
            r.n,
            r.k,
            r.k_effective,
            r.s_n,
            r.constructive,
            r.refined_exponent,
            r.lower,
            r.lower_closed_form
        );
    }
    out
}

pub fn table_csv(rows: &[BoundsRow]) -> String {
    let mut out =
        String::from("n,k,k_effective,s_n,constructive,refined_exponent,lower,lower_closed_form\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n,
            r.k,
            r.k_effective,
            r.s_n,
            r.constructive,
            r.refined_exponent,
            r.lower,
            r.lower_closed_form
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(upper_count(1).unwrap(), BigUint::from(2u32));
        assert_eq!(upper_count(2).unwrap(), BigUint::from(27u32));
        assert_eq!(upper_count(3).unwrap(), BigUint::from(1568u32));
        assert_eq!(upper_count(4).unwrap(), BigUint::from(376_560u32));
        assert_eq!(constructive_count(1).unwrap(), BigUint::from(4u32));
        assert_eq!(constructive_count(2).unwrap(), BigUint::from(45u32));
        assert_eq!(constructive_count(3).unwrap(), BigUint::from(56u32 * 46));
        assert!(upper_count(0).is_err());
    }

    #[test]
    fn envelope() {
        for n in 3..=12 {
            assert!(upper_bound_check(n).unwrap(), "n = {n}");
        }
        assert!(upper_bound_check(2).is_err());
    }

    #[test]
    fn lower_examples() {
        let h = |p: i64, q: i64| BigRational::new(BigInt::from(p), BigInt::from(q));
        assert_eq!(lower_bound(1, 7).unwrap(), h(1, 1));
        assert_eq!(lower_bound(2, 2).unwrap(), h(3, 2));
        assert_eq!(lower_bound(3, 2).unwrap(), h(2, 1));
        // odd k is read as k − 1
        assert_eq!(lower_bound(2, 3).unwrap(), lower_bound(2, 2).unwrap());
        assert!(lower_bound(2, 1).is_err());
        assert!((lower_bound_closed_form(2, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn table_row() {
        let rows = bounds_table(1..=4, 2..=3).unwrap();
        let r = rows.iter().find(|r| r.n == 2 && r.k == 2).unwrap();
        assert_eq!((r.lower.as_str(), r.s_n.as_str()), ("3/2", "27"));
        assert!(table_markdown(&rows).contains("| 2 | 2 | 2 | 27 | 45 |"));
        assert_eq!(table_csv(&rows).lines().count(), 9);
    }
}
