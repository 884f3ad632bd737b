use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::{Backend, Field, SmoothnessClass};
use crate::error::{Result, SosError};
use crate::jet::{Jet, JetSpace};

/// Exact polynomial with rational coefficients.
#[derive(Clone, Debug)]
pub struct PolynomialField {
    smooth: SmoothnessClass,
    terms: BTreeMap<Vec<usize>, BigRational>,
    cache: Vec<(Vec<usize>, f64)>,
}

/// JSON form `{"dim", "k", "alpha", "terms": [{"exps", "coef"}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSpec {
    pub dim: usize,
    pub k: usize,
    pub alpha: f64,
    pub terms: Vec<TermSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub exps: Vec<usize>,
    pub coef: String,
}

/// Parses `"p/q"`, an integer, or a decimal such as `"-0.125"` or `"1e-3"`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    if s.contains('/') {
        return BigRational::from_str(s)
            .map_err(|e| SosError::Parse(format!("bad rational {s:?}: {e}")));
    }
    let bad = || SosError::Parse(format!("bad number {s:?}"));
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(p) => (&s[..p], s[p + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(p) => (&mant[..p], &mant[p + 1..]),
        None => (mant, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let num = BigInt::from_str(&digits).map_err(|_| bad())?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    if neg {
        r = -r;
    }
    Ok(r)
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

impl PolynomialField {
    pub fn zero(smooth: SmoothnessClass) -> Self {
        PolynomialField {
            smooth,
            terms: BTreeMap::new(),
            cache: Vec::new(),
        }
    }

    pub fn add_term(&mut self, exps: Vec<usize>, coef: BigRational) {
        assert_eq!(
            exps.len(),
            self.smooth.n,
            "exponent vector has wrong length"
        );
        let e = self.terms.entry(exps).or_insert_with(BigRational::zero);
        *e += coef;
        self.terms.retain(|_, c| !c.is_zero());
        self.refresh();
    }

    fn refresh(&mut self) {
        self.cache = self
            .terms
            .iter()
            .map(|(e, c)| (e.clone(), c.to_f64().unwrap_or(f64::NAN)))
            .collect();
    }

    pub fn terms(&self) -> &BTreeMap<Vec<usize>, BigRational> {
        &self.terms
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Exact value at a rational point.
    pub fn eval_exact(&self, x: &[BigRational]) -> BigRational {
        let mut s = BigRational::zero();
        for (e, c) in &self.terms {
            let mut m = c.clone();
            for (xi, &p) in x.iter().zip(e) {
                m *= num_traits::pow(xi.clone(), p);
            }
            s += m;
        }
        s
    }

    /// Exact derivative `∂^β p` as a new polynomial.
    pub fn differentiate(&self, beta: &[usize]) -> PolynomialField {
        let mut out = PolynomialField::zero(self.smooth);
        for (e, c) in &self.terms {
            if e.iter().zip(beta).any(|(a, b)| a < b) {
                continue;
            }
            let mut coef = c.clone();
            let mut ne = e.clone();
            for (i, &b) in beta.iter().enumerate() {
                for t in 0..b {
                    coef *= BigRational::from_integer(BigInt::from(e[i] - t));
                }
                ne[i] -= b;
            }
            *out.terms.entry(ne).or_insert_with(BigRational::zero) += coef;
        }
        out.terms.retain(|_, c| !c.is_zero());
        out.refresh();
        out
    }

    pub fn to_spec(&self) -> PolynomialSpec {
        PolynomialSpec {
            dim: self.smooth.n,
            k: self.smooth.k,
            alpha: self.smooth.alpha,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| TermSpec {
                    exps: e.clone(),
                    coef: c.to_string(),
                })
                .collect(),
        }
    }

    pub fn from_spec(spec: &PolynomialSpec) -> Result<Self> {
        let smooth = SmoothnessClass::new(spec.dim, spec.k, spec.alpha)?;
        let mut terms = BTreeMap::new();
        for t in &spec.terms {
            if t.exps.len() != spec.dim {
                return Err(SosError::Parse(format!(
                    "term exponents {:?} do not match dimension {}",
                    t.exps, spec.dim
                )));
            }
            *terms
                .entry(t.exps.clone())
                .or_insert_with(BigRational::zero) += parse_rational(&t.coef)?;
        }
        terms.retain(|_, c: &mut BigRational| !c.is_zero());
        let mut p = PolynomialField {
            smooth,
            terms,
            cache: Vec::new(),
        };
        p.refresh();
        Ok(p)
    }

    pub fn with_smoothness(mut self, smooth: SmoothnessClass) -> Self {
        assert_eq!(smooth.n, self.smooth.n);
        self.smooth = smooth;
        self
    }
}

/// Builds a polynomial field from a sparse monomial → coefficient map.
pub fn polynomial_field(
    coefficients: impl IntoIterator<Item = (Vec<usize>, BigRational)>,
    smoothness: SmoothnessClass,
) -> Result<PolynomialField> {
    let mut p = PolynomialField::zero(smoothness);
    for (e, c) in coefficients {
        if e.len() != smoothness.n {
            return Err(SosError::InvalidInput(format!(
                "monomial {e:?} does not match dimension {}",
                smoothness.n
            )));
        }
        *p.terms.entry(e).or_insert_with(BigRational::zero) += c;
    }
    p.terms.retain(|_, c| !c.is_zero());
    p.refresh();
    Ok(p)
}

impl Field for PolynomialField {
    fn smoothness(&self) -> SmoothnessClass {
        self.smooth
    }

    fn backend(&self) -> Backend {
        Backend::PolynomialExact
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.cache
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(*c, |m, (&p, xi)| m * xi.powi(p as i32))
            })
            .sum()
    }

    fn jet(&self, x: &[f64], order: usize) -> Jet {
        let n = self.smooth.n;
        let space = JetSpace::get(n, order);
        let mut c = vec![0.0; space.len()];
        for (e, coef) in &self.cache {
            for (idx, b) in space.indices().iter().enumerate() {
                if b.iter().zip(e).any(|(bi, ei)| bi > ei) {
                    continue;
                }
                let mut m = *coef;
                for i in 0..n {
                    m *= binom(e[i], b[i]) * x[i].powi((e[i] - b[i]) as i32);
                }
                c[idx] += m;
            }
        }
        Jet::from_coeffs(n, order, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MultiIndex;

    fn r(v: i64) -> BigRational {
        BigRational::from_integer(v.into())
    }

    pub(crate) fn motzkin(k: usize) -> PolynomialField {
        polynomial_field(
            [
                (vec![4, 2], r(1)),
                (vec![2, 4], r(1)),
                (vec![2, 2], r(-3)),
                (vec![0, 0], r(1)),
            ],
            SmoothnessClass::new(2, k, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn square_has_constant_second_derivative() {
        let p =
            polynomial_field([(vec![2], r(1))], SmoothnessClass::new(1, 2, 1.0).unwrap()).unwrap();
        for x in [-3.0, 0.0, 0.5, 7.0] {
            assert_eq!(p.deriv(&MultiIndex(vec![2]), &[x]), 2.0);
        }
    }

    #[test]
    fn separable_quadratic_has_no_mixed_partial() {
        let p = polynomial_field(
            [(vec![2, 0], r(1)), (vec![0, 2], r(1))],
            SmoothnessClass::new(2, 2, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(p.deriv(&MultiIndex(vec![1, 1]), &[3.0, 4.0]), 0.0);
    }

    #[test]
    fn motzkin_vanishes_at_one_one() {
        let m = motzkin(3);
        assert_eq!(m.eval(&[1.0, 1.0]), 0.0);
        assert_eq!(m.eval_exact(&[r(1), r(1)]), r(0));
    }

    #[test]
    fn jet_matches_exact_differentiation() {
        let m = motzkin(4);
        let x = [0.75, -1.25];
        let j = m.jet(&x, 4);
        for b in JetSpace::get(2, 4).indices() {
            let d = m.differentiate(b).eval(&x);
            assert!(
                (j.derivative(b) - d).abs() < 1e-11 * (1.0 + d.abs()),
                "{b:?}"
            );
        }
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(
            parse_rational("3/4").unwrap(),
            BigRational::new(3.into(), 4.into())
        );
        assert_eq!(
            parse_rational("-0.125").unwrap(),
            BigRational::new((-1).into(), 8.into())
        );
        assert_eq!(
            parse_rational("1e-3").unwrap(),
            BigRational::new(1.into(), 1000.into())
        );
        assert_eq!(parse_rational("12").unwrap(), r(12));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = motzkin(3);
        let text = serde_json::to_string(&m.to_spec()).unwrap();
        let back = PolynomialField::from_spec(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.terms(), m.terms());
    }

    #[test]
    fn empty_polynomial_is_zero_field() {
        let p = polynomial_field([], SmoothnessClass::new(2, 2, 1.0).unwrap()).unwrap();
        assert_eq!(p.eval(&[1.0, 2.0]), 0.0);
    }
}
