//! Truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] of order `d` in `n` variables stores the normalized Taylor
//! coefficients `∂^β f(x₀) / β!` for every multi-index `|β| ≤ d`. Sums,
//! products and composition with univariate or multivariate jets follow
//! the truncated power-series rules, which makes jets a compact way to
//! carry the generalized chain rule through arbitrarily nested fields.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Index tables shared by every jet with the same `(n, order)`.
#[derive(Debug)]
pub struct JetSpace {
    pub n: usize,
    pub order: usize,
    indices: Vec<Vec<usize>>,
    lookup: HashMap<Vec<usize>, usize>,
    degree: Vec<usize>,
    mul_table: Vec<(u32, u32, u32)>,
    // per variable: (source, target, factor) so that d/dx_i maps c_src to c_tgt
    diff_table: Vec<Vec<(u32, u32, f64)>>,
}

fn graded_indices(n: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for d in 0..=order {
        let mut cur = vec![0usize; n];
        fill_degree(n, d, 0, &mut cur, &mut out);
    }
    out
}

fn fill_degree(n: usize, left: usize, pos: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if n == 0 {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        fill_degree(n, left - e, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

impl JetSpace {
    fn build(n: usize, order: usize) -> Self {
        let indices = graded_indices(n, order);
        let lookup: HashMap<Vec<usize>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, b)| (b.clone(), i))
            .collect();
        let degree = indices
            .iter()
            .map(|b| b.iter().sum())
            .collect::<Vec<usize>>();
        let mut mul_table = Vec::new();
        for (a, ba) in indices.iter().enumerate() {
            for (b, bb) in indices.iter().enumerate() {
                if degree[a] + degree[b] > order {
                    continue;
                }
                let sum: Vec<usize> = ba.iter().zip(bb).map(|(x, y)| x + y).collect();
                mul_table.push((a as u32, b as u32, lookup[&sum] as u32));
            }
        }
        let mut diff_table = vec![Vec::new(); n];
        for (var, table) in diff_table.iter_mut().enumerate() {
            for (src, b) in indices.iter().enumerate() {
                if b[var] == 0 {
                    continue;
                }
                let mut t = b.clone();
                t[var] -= 1;
                table.push((src as u32, lookup[&t] as u32, b[var] as f64));
            }
        }
        JetSpace {
            n,
            order,
            indices,
            lookup,
            degree,
            mul_table,
            diff_table,
        }
    }

    /// The shared space for `n` variables truncated at `order`.
    pub fn get(n: usize, order: usize) -> &'static JetSpace {
        static SPACES: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> =
            OnceLock::new();
        let map = SPACES.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = map.lock().expect("jet space cache poisoned");
        guard
            .entry((n, order))
            .or_insert_with(|| Box::leak(Box::new(JetSpace::build(n, order))))
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn degree_of(&self, idx: usize) -> usize {
        self.degree[idx]
    }

    pub fn index_of(&self, beta: &[usize]) -> Option<usize> {
        self.lookup.get(beta).copied()
    }
}

/// Normalized Taylor coefficients of a function at a point.
#[derive(Clone, Debug)]
pub struct Jet {
    space: &'static JetSpace,
    c: Vec<f64>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.space.n == other.space.n && self.space.order == other.space.order && self.c == other.c
    }
}

impl Jet {
    pub fn zeros(n: usize, order: usize) -> Self {
        let space = JetSpace::get(n, order);
        Jet {
            space,
            c: vec![0.0; space.len()],
        }
    }

    pub fn constant(n: usize, order: usize, v: f64) -> Self {
        let mut j = Self::zeros(n, order);
        j.c[0] = v;
        j
    }

    /// The coordinate function `x_i` expanded at a point where it equals `v`.
    pub fn variable(n: usize, order: usize, i: usize, v: f64) -> Self {
        let mut j = Self::constant(n, order, v);
        if order >= 1 {
            let mut b = vec![0; n];
            b[i] = 1;
            let idx = j.space.lookup[&b];
            j.c[idx] = 1.0;
        }
        j
    }

    /// `v + Σ grad_i (x_i − x₀_i)`.
    pub fn affine(order: usize, v: f64, grad: &[f64]) -> Self {
        let n = grad.len();
        let mut j = Self::constant(n, order, v);
        if order >= 1 {
            for (i, g) in grad.iter().enumerate() {
                j.c[1 + i] = *g;
            }
        }
        j
    }

    /// Embeds univariate Taylor coefficients `g[m]` in variable `i`, scaling
    /// the `m`-th coefficient by `scale^m` (for `x_i ↦ (x_i − c)·scale`).
    pub fn from_univariate(n: usize, order: usize, i: usize, g: &[f64], scale: f64) -> Self {
        let mut j = Self::zeros(n, order);
        let mut b = vec![0; n];
        let mut s = 1.0;
        for (m, gm) in g.iter().enumerate().take(order + 1) {
            b[i] = m;
            let idx = j.space.lookup[&b];
            j.c[idx] = gm * s;
            s *= scale;
        }
        j
    }

    /// Builds a jet from coefficients listed in the space's graded order.
    pub fn from_coeffs(n: usize, order: usize, c: Vec<f64>) -> Self {
        let space = JetSpace::get(n, order);
        assert_eq!(c.len(), space.len(), "coefficient count mismatch");
        Jet { space, c }
    }

    pub fn space(&self) -> &'static JetSpace {
        self.space
    }

    pub fn nvars(&self) -> usize {
        self.space.n
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Normalized coefficient `∂^β f / β!`; zero beyond the truncation order.
    pub fn coeff(&self, beta: &[usize]) -> f64 {
        self.space.index_of(beta).map_or(0.0, |i| self.c[i])
    }

    /// The partial derivative `∂^β f` at the expansion point.
    pub fn derivative(&self, beta: &[usize]) -> f64 {
        let fact: f64 = beta.iter().map(|&b| factorial(b)).product();
        self.coeff(beta) * fact
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let space = JetSpace::get(self.nvars(), order);
        Jet {
            space,
            c: self.c[..space.len()].to_vec(),
        }
    }

    /// Zero-pads to a higher truncation order.
    pub fn extend(&self, order: usize) -> Jet {
        if order <= self.order() {
            return self.truncate(order);
        }
        let mut out = Jet::zeros(self.nvars(), order);
        out.c[..self.c.len()].copy_from_slice(&self.c);
        out
    }

    fn check_same(&self, o: &Jet) {
        debug_assert!(
            std::ptr::eq(self.space, o.space),
            "jets from different spaces: ({}, {}) vs ({}, {})",
            self.space.n,
            self.space.order,
            o.space.n,
            o.space.order
        );
    }

    pub fn add(&self, o: &Jet) -> Jet {
        self.check_same(o);
        Jet {
            space: self.space,
            c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        self.check_same(o);
        Jet {
            space: self.space,
            c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add_assign(&mut self, o: &Jet) {
        self.check_same(o);
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            *a += b;
        }
    }

    pub fn axpy(&mut self, s: f64, o: &Jet) {
        self.check_same(o);
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            *a += s * b;
        }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            space: self.space,
            c: self.c.iter().map(|a| a * s).collect(),
        }
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    pub fn add_const(&self, v: f64) -> Jet {
        let mut out = self.clone();
        out.c[0] += v;
        out
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        self.check_same(o);
        if self.order() == 0 {
            return Jet {
                space: self.space,
                c: vec![self.c[0] * o.c[0]],
            };
        }
        let mut c = vec![0.0; self.c.len()];
        for &(a, b, t) in &self.space.mul_table {
            c[t as usize] += self.c[a as usize] * o.c[b as usize];
        }
        Jet {
            space: self.space,
            c,
        }
    }

    /// Partial derivative with respect to `var`, one order lower.
    pub fn diff(&self, var: usize) -> Jet {
        assert!(self.order() >= 1, "cannot differentiate an order-0 jet");
        let space = JetSpace::get(self.nvars(), self.order() - 1);
        let mut c = vec![0.0; space.len()];
        for &(src, tgt, f) in &self.space.diff_table[var] {
            if (tgt as usize) < c.len() {
                c[tgt as usize] = self.c[src as usize] * f;
            }
        }
        Jet { space, c }
    }

    /// `g ∘ self` where `g_taylor[m] = g^{(m)}(a)/m!` at `a = self.value()`.
    pub fn compose_univariate(&self, g_taylor: &[f64]) -> Jet {
        let d = self.order();
        let mut delta = self.clone();
        delta.c[0] = 0.0;
        // Horner in the nilpotent increment
        let top = d.min(g_taylor.len().saturating_sub(1));
        let mut acc = Jet::constant(self.nvars(), d, g_taylor[top]);
        for m in (0..top).rev() {
            acc = acc.mul(&delta);
            acc.c[0] += g_taylor[m];
        }
        acc
    }

    pub fn powf(&self, p: f64) -> Jet {
        let a = self.value();
        let d = self.order();
        let mut g = Vec::with_capacity(d + 1);
        let mut coef = 1.0;
        for m in 0..=d {
            g.push(coef * a.powf(p - m as f64));
            coef *= (p - m as f64) / (m as f64 + 1.0);
        }
        self.compose_univariate(&g)
    }

    pub fn sqrt(&self) -> Jet {
        if self.order() == 0 {
            return Jet {
                space: self.space,
                c: vec![self.c[0].sqrt()],
            };
        }
        self.powf(0.5)
    }

    pub fn recip(&self) -> Jet {
        let a = self.value();
        let g: Vec<f64> = (0..=self.order())
            .map(|m| if m % 2 == 0 { 1.0 } else { -1.0 } / a.powi(m as i32 + 1))
            .collect();
        self.compose_univariate(&g)
    }

    pub fn div(&self, o: &Jet) -> Jet {
        self.mul(&o.recip())
    }

    pub fn exp(&self) -> Jet {
        let ea = self.value().exp();
        let mut g = Vec::with_capacity(self.order() + 1);
        let mut f = 1.0;
        for m in 0..=self.order() {
            if m > 0 {
                f *= m as f64;
            }
            g.push(ea / f);
        }
        self.compose_univariate(&g)
    }

    /// Substitutes jets `inner` (in the caller's variables, with values equal
    /// to this jet's expansion point) into this multivariate jet.
    pub fn compose(&self, inner: &[Jet]) -> Jet {
        assert_eq!(inner.len(), self.nvars(), "composition arity mismatch");
        assert!(
            !inner.is_empty(),
            "composition needs at least one inner jet"
        );
        let n_out = inner[0].nvars();
        let d = inner[0].order();
        let deltas: Vec<Jet> = inner
            .iter()
            .map(|j| {
                let mut dj = j.clone();
                dj.c[0] = 0.0;
                dj
            })
            .collect();
        let space = self.space;
        let mut prods: Vec<Option<Jet>> = vec![None; space.len()];
        let mut out = Jet::zeros(n_out, d);
        for (idx, gamma) in space.indices.iter().enumerate() {
            let deg = space.degree[idx];
            if deg > d {
                break;
            }
            let p = if deg == 0 {
                Jet::constant(n_out, d, 1.0)
            } else {
                let last = gamma.iter().rposition(|&e| e > 0).unwrap();
                let mut prev = gamma.clone();
                prev[last] -= 1;
                let pi = space.lookup[&prev];
                prods[pi].as_ref().expect("graded order").mul(&deltas[last])
            };
            let c = self.c[idx];
            if c != 0.0 {
                out.axpy(c, &p);
            }
            prods[idx] = Some(p);
        }
        out
    }

    /// Taylor coefficients of `t ↦ f(x₀ + t·dir)`.
    pub fn along(&self, dir: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.order() + 1];
        for (idx, b) in self.space.indices.iter().enumerate() {
            let mut m = 1.0;
            for (e, d) in b.iter().zip(dir) {
                m *= d.powi(*e as i32);
            }
            out[self.space.degree[idx]] += self.c[idx] * m;
        }
        out
    }

    /// Coefficients of total degree exactly `deg`, paired with their indices.
    pub fn homogeneous(&self, deg: usize) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.space
            .indices
            .iter()
            .enumerate()
            .filter(move |(i, _)| self.space.degree[*i] == deg)
            .map(move |(i, b)| (b.as_slice(), self.c[i]))
    }
}

pub fn factorial(m: usize) -> f64 {
    (1..=m).map(|v| v as f64).product()
}

/// Linear jets `x₀ + M (y − y₀)`: row `i` of `m` gives the gradient of output `i`.
pub fn linear_map(order: usize, x0: &[f64], m: &[Vec<f64>]) -> Vec<Jet> {
    x0.iter()
        .zip(m)
        .map(|(v, row)| Jet::affine(order, *v, row))
        .collect()
}
