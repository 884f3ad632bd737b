//! Deterministic low-discrepancy sampling schedules.
//!
//! Every sampled check in the crate draws its points from scaled Halton
//! sequences, so reports are reproducible bit for bit and a schedule with
//! `2m` points always contains the schedule with `m` points.

use serde::{Deserialize, Serialize};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// Point `index` of the `dim`-dimensional Halton sequence in `[0,1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton dimension {dim} unsupported");
    PRIMES[..dim]
        .iter()
        .map(|&p| radical_inverse(index, p))
        .collect()
}

/// Stable offset into the Halton sequence derived from a label (FNV-1a).
pub fn seed_offset(label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h % 100_003
}

/// Axis-aligned working box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        BoxDomain { lo, hi }
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        BoxDomain {
            lo: vec![lo; n],
            hi: vec![hi; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_valid(&self) -> bool {
        !self.lo.is_empty()
            && self.lo.len() == self.hi.len()
            && self
                .lo
                .iter()
                .zip(&self.hi)
                .all(|(a, b)| a.is_finite() && b.is_finite() && a < b)
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (a, b)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*a, *b);
        }
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (a, b))| a + t * (b - a))
            .collect()
    }

    /// `count` Halton points in the box starting after `offset`.
    pub fn halton_points(&self, count: usize, offset: u64) -> Vec<Vec<f64>> {
        (0..count as u64)
            .map(|i| self.from_unit(&halton(offset + i + 1, self.dim())))
            .collect()
    }

    /// Regular grid with `per_axis` nodes per axis, endpoints included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let m = per_axis.max(2);
        let total = m.pow(n as u32);
        (0..total)
            .map(|mut code| {
                let mut u = vec![0.0; n];
                for ui in u.iter_mut() {
                    *ui = (code % m) as f64 / (m - 1) as f64;
                    code /= m;
                }
                self.from_unit(&u)
            })
            .collect()
    }
}

/// Deterministic point in the unit ball of dimension `n`, taken from the
/// `index`-th Halton point of dimension `n + 1` (direction by normalizing a
/// cube point, radius from the last coordinate raised to `radial_power`).
pub fn ball_point(index: u64, n: usize, radial_power: f64) -> Vec<f64> {
    let mut k = index;
    loop {
        let h = halton(k + 1, n + 1);
        let v: Vec<f64> = h[..n].iter().map(|t| 2.0 * t - 1.0).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            let rad = h[n].powf(radial_power);
            return v.iter().map(|a| a / norm * rad).collect();
        }
        k += 7919;
    }
}

/// Deterministic pairs `(x, y)` with `x` in the box and `|x − y| ≤ radius(x)`,
/// `y` clamped into the box. Radii are skewed toward small separations so
/// that difference quotients probe both short and long scales.
pub fn local_pairs(
    b: &BoxDomain,
    count: usize,
    offset: u64,
    radius: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = b.dim();
    (0..count as u64)
        .map(|i| {
            let h = halton(offset + i + 1, 2 * n + 1);
            let x = b.from_unit(&h[..n]);
            let rad = radius(&x);
            let dir: Vec<f64> = h[n..2 * n].iter().map(|t| 2.0 * t - 1.0).collect();
            let norm = dir.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            let s = h[2 * n].powi(3) * rad;
            let mut y: Vec<f64> = x
                .iter()
                .zip(&dir)
                .map(|(xi, di)| xi + s * di / norm)
                .collect();
            b.clamp(&mut y);
            (x, y)
        })
        .collect()
}
