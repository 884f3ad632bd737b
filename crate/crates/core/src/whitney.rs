//! Dyadic Whitney-type cube families and their squared partition of unity.
//!
//! Cubes are cells of the lattice `scale·2^{−level}·(index + [0,1]^n)`
//! anchored at the origin. A cube is kept when its side satisfies
//! `ℓ(Q) ≤ (ν/(2√n))·r_Q`, where `r_Q` is a sampled lower estimate of
//! `inf_Q r`; otherwise it is split. After refinement the family is
//! balanced so that touching cubes differ by at most one level.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SosError};
use crate::jet::Jet;
use crate::sampling::BoxDomain;

/// Hard cap on the number of cubes a single partition may visit.
pub const MAX_CUBES: usize = 4_000_000;

/// Lattice cell `Q` with side `scale·2^{−level}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub index: Vec<i64>,
    pub scale: f64,
}

impl DyadicCube {
    pub fn side(&self) -> f64 {
        self.scale * 0.5f64.powi(self.level as i32)
    }

    pub fn corner(&self) -> Vec<f64> {
        let s = self.side();
        self.index.iter().map(|&i| i as f64 * s).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let s = self.side();
        self.index.iter().map(|&i| (i as f64 + 0.5) * s).collect()
    }

    pub fn parent(&self) -> Option<DyadicCube> {
        (self.level > 0).then(|| DyadicCube {
            level: self.level - 1,
            index: self.index.iter().map(|i| i.div_euclid(2)).collect(),
            scale: self.scale,
        })
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        let n = self.index.len();
        (0..1usize << n)
            .map(|code| DyadicCube {
                level: self.level + 1,
                index: self
                    .index
                    .iter()
                    .enumerate()
                    .map(|(d, i)| 2 * i + ((code >> d) & 1) as i64)
                    .collect(),
                scale: self.scale,
            })
            .collect()
    }

    /// `true` when the closed cube contains `x`.
    pub fn contains(&self, x: &[f64]) -> bool {
        let s = self.side();
        self.index
            .iter()
            .zip(x)
            .all(|(&i, v)| *v >= i as f64 * s && *v <= (i + 1) as f64 * s)
    }

    /// `true` when the closed dilate `λQ` contains `x`.
    pub fn dilate_contains(&self, x: &[f64], lambda: f64) -> bool {
        let s = self.side();
        self.center()
            .iter()
            .zip(x)
            .all(|(c, v)| (v - c).abs() <= 0.5 * lambda * s)
    }

    /// Exact test whether the closed cubes intersect, on integer coordinates.
    pub fn closure_intersects(&self, other: &DyadicCube) -> bool {
        let m = self.level.max(other.level);
        let (sa, sb) = (m - self.level, m - other.level);
        self.index.iter().zip(&other.index).all(|(&a, &b)| {
            let (a_lo, a_hi) = ((a as i128) << sa, ((a + 1) as i128) << sa);
            let (b_lo, b_hi) = ((b as i128) << sb, ((b + 1) as i128) << sb);
            a_lo <= b_hi && b_lo <= a_hi
        })
    }

    fn clipped(&self, b: &BoxDomain) -> Option<BoxDomain> {
        let c = self.corner();
        let s = self.side();
        let lo: Vec<f64> = c.iter().zip(&b.lo).map(|(a, l)| a.max(*l)).collect();
        let hi: Vec<f64> = c.iter().zip(&b.hi).map(|(a, h)| (a + s).min(*h)).collect();
        lo.iter()
            .zip(&hi)
            .all(|(a, h)| a < h)
            .then(|| BoxDomain::new(lo, hi))
    }
}

/// Smooth step `H(u) = h(u)/(h(u) + h(1−u))` with `h(u) = e^{−1/u}` for
/// `u > 0`; equal to 0 for `u ≤ 0` and 1 for `u ≥ 1`. Returns its Taylor
/// coefficients at `u` up to `order`.
pub fn smooth_step_taylor(u: f64, order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    if u <= 0.0 {
        return out;
    }
    if u >= 1.0 {
        out[0] = 1.0;
        return out;
    }
    let h = |v: Jet| -> Jet {
        if v.value() < 1.0 / 700.0 {
            Jet::zeros(1, order)
        } else {
            v.recip().neg().exp()
        }
    };
    let uj = Jet::variable(1, order, 0, u);
    let a = h(uj.clone());
    let b = h(uj.neg().add_const(1.0));
    let q = a.div(&a.add(&b));
    out.copy_from_slice(q.coeffs());
    out
}

pub fn smooth_step(u: f64) -> f64 {
    smooth_step_taylor(u, 0)[0]
}

/// One-dimensional bump: 1 on `[−1/2, 1/2]`, 0 outside `[−λ/2, λ/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub lambda: f64,
}

impl BumpSpec {
    pub fn plateau(&self) -> f64 {
        0.5
    }

    pub fn support(&self) -> f64 {
        0.5 * self.lambda
    }

    /// Taylor coefficients of `φ` at `t`.
    pub fn phi_taylor(&self, t: f64, order: usize) -> Vec<f64> {
        let a = t.abs();
        let mut out = vec![0.0; order + 1];
        if a <= 0.5 {
            out[0] = 1.0;
            return out;
        }
        if a >= self.support() {
            return out;
        }
        let w = 0.5 * (self.lambda - 1.0);
        let u = (self.support() - a) / w;
        let du = -t.signum() / w;
        let g = smooth_step_taylor(u, order);
        let mut s = 1.0;
        for (o, gm) in out.iter_mut().zip(&g) {
            *o = gm * s;
            s *= du;
        }
        out
    }

    pub fn phi(&self, t: f64) -> f64 {
        self.phi_taylor(t, 0)[0]
    }
}

/// A cube kept by the refinement, with its sampled `r_Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeptCube {
    pub level: u32,
    pub index: Vec<i64>,
    #[serde(rename = "rQ")]
    pub r_q: f64,
    #[serde(default)]
    pub boundary: bool,
}

/// Serialized partition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionDoc {
    pub scale: f64,
    pub lambda: f64,
    pub nu: f64,
    pub delta_cut: f64,
    #[serde(rename = "box")]
    pub domain: BoxDomain,
    pub cubes: Vec<KeptCube>,
    pub uncovered_volume: f64,
    pub dropped_volume: f64,
}

/// The kept cube family with the data needed to evaluate `ψ_j`.
#[derive(Clone, Debug)]
pub struct Partition {
    pub n: usize,
    pub scale: f64,
    pub lambda: f64,
    pub nu: f64,
    pub delta_cut: f64,
    pub domain: BoxDomain,
    pub bump: BumpSpec,
    pub cubes: Vec<KeptCube>,
    pub uncovered_volume: f64,
    pub dropped_volume: f64,
    lookup: HashMap<(u32, Vec<i64>), usize>,
    levels: Vec<u32>,
    offsets: Vec<Vec<i64>>,
}

fn offsets(n: usize) -> Vec<Vec<i64>> {
    (0..3usize.pow(n as u32))
        .map(|mut c| {
            (0..n)
                .map(|_| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    o
                })
                .collect()
        })
        .collect()
}

fn visit_range(lo: &[i64], hi: &[i64], f: &mut impl FnMut(&[i64])) {
    let mut idx = lo.to_vec();
    loop {
        f(&idx);
        let mut d = 0;
        while d < idx.len() {
            idx[d] += 1;
            if idx[d] <= hi[d] {
                break;
            }
            idx[d] = lo[d];
            d += 1;
        }
        if d == idx.len() {
            return;
        }
    }
}

struct Acc {
    kept: Vec<KeptCube>,
    uncovered: f64,
    dropped: f64,
}

impl Acc {
    fn empty() -> Self {
        Acc {
            kept: Vec::new(),
            uncovered: 0.0,
            dropped: 0.0,
        }
    }

    fn merge(mut self, o: Acc) -> Acc {
        self.kept.extend(o.kept);
        self.uncovered += o.uncovered;
        self.dropped += o.dropped;
        self
    }
}

struct Refiner<'a> {
    r: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    domain: &'a BoxDomain,
    nu: f64,
    max_level: u32,
    delta_cut: f64,
    scale: f64,
    grid: Vec<Vec<f64>>,
    visited: AtomicUsize,
    cap: usize,
}

impl Refiner<'_> {
    fn refine(&self, cube: DyadicCube) -> Acc {
        let Some(clip) = cube.clipped(self.domain) else {
            return Acc::empty();
        };
        if self.visited.fetch_add(1, Ordering::Relaxed) > self.cap {
            return Acc::empty();
        }
        let n = cube.index.len();
        let (mut rmin, mut rmax) = (f64::INFINITY, 0.0f64);
        for u in &self.grid {
            let p = clip.from_unit(u);
            let v = (self.r)(&p);
            rmin = rmin.min(v);
            rmax = rmax.max(v);
        }
        if !(rmax > self.delta_cut) {
            return Acc {
                kept: vec![],
                uncovered: 0.0,
                dropped: clip.volume(),
            };
        }
        let r_q = (1.0 - self.nu / 4.0) * rmin;
        let side = cube.side();
        if r_q > 0.0 && side <= self.nu / (2.0 * (n as f64).sqrt()) * r_q {
            let boundary = (0..n).any(|d| {
                let c = cube.index[d] as f64 * side;
                c <= self.domain.lo[d] || c + side >= self.domain.hi[d]
            });
            return Acc {
                kept: vec![KeptCube {
                    level: cube.level,
                    index: cube.index,
                    r_q,
                    boundary,
                }],
                uncovered: 0.0,
                dropped: 0.0,
            };
        }
        if cube.level >= self.max_level {
            return Acc {
                kept: vec![],
                uncovered: clip.volume(),
                dropped: 0.0,
            };
        }
        cube.children()
            .into_par_iter()
            .map(|c| self.refine(c))
            .reduce(Acc::empty, Acc::merge)
    }

    fn cube(&self, level: u32, index: Vec<i64>) -> DyadicCube {
        DyadicCube {
            level,
            index,
            scale: self.scale,
        }
    }
}

/// Builds the balanced maximal dyadic family for the control `r` on a box.
pub fn build_partition(
    r: &(dyn Fn(&[f64]) -> f64 + Sync),
    domain: &BoxDomain,
    nu: f64,
    lambda: f64,
    max_level: u32,
    delta_cut: f64,
) -> Result<Partition> {
    build_partition_capped(r, domain, nu, lambda, max_level, delta_cut, MAX_CUBES)
}

/// [`build_partition`] with an explicit bound on visited cubes.
pub fn build_partition_capped(
    r: &(dyn Fn(&[f64]) -> f64 + Sync),
    domain: &BoxDomain,
    nu: f64,
    lambda: f64,
    max_level: u32,
    delta_cut: f64,
    cap: usize,
) -> Result<Partition> {
    if !(lambda > 1.0 && lambda < 1.5) {
        return Err(SosError::InvalidInput(format!(
            "lambda = {lambda} outside (1, 3/2)"
        )));
    }
    if !domain.is_valid() {
        return Err(SosError::InvalidInput("empty or malformed box".into()));
    }
    if !(nu > 0.0) {
        return Err(SosError::InvalidInput(format!(
            "nu = {nu} must be positive"
        )));
    }
    if !(delta_cut >= 0.0) {
        return Err(SosError::InvalidInput(format!(
            "delta_cut = {delta_cut} must be non-negative"
        )));
    }
    let n = domain.dim();
    let extent = domain
        .lo
        .iter()
        .zip(&domain.hi)
        .map(|(a, b)| b - a)
        .fold(0.0, f64::max);
    let scale = 2f64.powi(extent.log2().ceil() as i32);
    let grid = BoxDomain::cube(n, 0.0, 1.0).grid(3);
    let refiner = Refiner {
        r,
        domain,
        nu,
        max_level,
        delta_cut,
        scale,
        grid,
        visited: AtomicUsize::new(0),
        cap,
    };
    // level-0 lattice cells meeting the box
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|d| {
            (
                (domain.lo[d] / scale).floor() as i64,
                (domain.hi[d] / scale).ceil() as i64 - 1,
            )
        })
        .collect();
    let mut roots = vec![Vec::new()];
    for (lo, hi) in &ranges {
        roots = roots
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                (*lo..=*hi).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    let mut acc = roots
        .into_par_iter()
        .map(|idx| refiner.refine(refiner.cube(0, idx)))
        .reduce(Acc::empty, Acc::merge);
    let mut part = Partition::assemble(
        n,
        scale,
        lambda,
        nu,
        delta_cut,
        domain.clone(),
        std::mem::take(&mut acc.kept),
    );
    part.uncovered_volume = acc.uncovered;
    part.dropped_volume = acc.dropped;
    // enforce 2:1 balance between touching cubes
    loop {
        if refiner.visited.load(Ordering::Relaxed) > cap {
            return Err(SosError::TooManyCubes(cap));
        }
        let split = part.unbalanced();
        if split.is_empty() {
            break;
        }
        let split_set: HashSet<usize> = split.iter().copied().collect();
        let mut kept: Vec<KeptCube> = part
            .cubes
            .iter()
            .enumerate()
            .filter(|(i, _)| !split_set.contains(i))
            .map(|(_, c)| c.clone())
            .collect();
        let fresh = split
            .par_iter()
            .map(|&i| {
                let c = &part.cubes[i];
                refiner
                    .cube(c.level, c.index.clone())
                    .children()
                    .into_par_iter()
                    .map(|ch| refiner.refine(ch))
                    .reduce(Acc::empty, Acc::merge)
            })
            .reduce(Acc::empty, Acc::merge);
        kept.extend(fresh.kept);
        let (unc, drop) = (
            part.uncovered_volume + fresh.uncovered,
            part.dropped_volume + fresh.dropped,
        );
        part = Partition::assemble(n, scale, lambda, nu, delta_cut, domain.clone(), kept);
        part.uncovered_volume = unc;
        part.dropped_volume = drop;
    }
    if refiner.visited.load(Ordering::Relaxed) > cap {
        return Err(SosError::TooManyCubes(cap));
    }
    Ok(part)
}

impl Partition {
    fn assemble(
        n: usize,
        scale: f64,
        lambda: f64,
        nu: f64,
        delta_cut: f64,
        domain: BoxDomain,
        mut cubes: Vec<KeptCube>,
    ) -> Partition {
        let top = cubes.iter().map(|c| c.level).max().unwrap_or(0);
        cubes.sort_by(|a, b| {
            let ka: Vec<i128> = a
                .index
                .iter()
                .map(|&i| (i as i128) << (top - a.level))
                .collect();
            let kb: Vec<i128> = b
                .index
                .iter()
                .map(|&i| (i as i128) << (top - b.level))
                .collect();
            ka.cmp(&kb).then(a.level.cmp(&b.level))
        });
        let lookup = cubes
            .iter()
            .enumerate()
            .map(|(i, c)| ((c.level, c.index.clone()), i))
            .collect();
        let mut levels: Vec<u32> = cubes.iter().map(|c| c.level).collect();
        levels.sort_unstable();
        levels.dedup();
        Partition {
            n,
            scale,
            lambda,
            nu,
            delta_cut,
            domain,
            bump: BumpSpec { lambda },
            cubes,
            uncovered_volume: 0.0,
            dropped_volume: 0.0,
            lookup,
            levels,
            offsets: offsets(n),
        }
    }

    pub fn from_doc(doc: PartitionDoc) -> Result<Partition> {
        if !doc.domain.is_valid() {
            return Err(SosError::Parse("partition box is malformed".into()));
        }
        let n = doc.domain.dim();
        if doc.cubes.iter().any(|c| c.index.len() != n) {
            return Err(SosError::Parse("cube index has wrong dimension".into()));
        }
        let mut p = Partition::assemble(
            n,
            doc.scale,
            doc.lambda,
            doc.nu,
            doc.delta_cut,
            doc.domain,
            doc.cubes,
        );
        p.uncovered_volume = doc.uncovered_volume;
        p.dropped_volume = doc.dropped_volume;
        Ok(p)
    }

    pub fn to_doc(&self) -> PartitionDoc {
        PartitionDoc {
            scale: self.scale,
            lambda: self.lambda,
            nu: self.nu,
            delta_cut: self.delta_cut,
            domain: self.domain.clone(),
            cubes: self.cubes.clone(),
            uncovered_volume: self.uncovered_volume,
            dropped_volume: self.dropped_volume,
        }
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn cube(&self, j: usize) -> DyadicCube {
        let c = &self.cubes[j];
        DyadicCube {
            level: c.level,
            index: c.index.clone(),
            scale: self.scale,
        }
    }

    pub fn side(&self, j: usize) -> f64 {
        self.scale * 0.5f64.powi(self.cubes[j].level as i32)
    }

    pub fn find(&self, level: u32, index: &[i64]) -> Option<usize> {
        self.lookup.get(&(level, index.to_vec())).copied()
    }

    /// Indices of kept cubes whose closures meet that of cube `j`.
    pub fn touching(&self, j: usize) -> Vec<usize> {
        let c = &self.cubes[j];
        let me = self.cube(j);
        let mut out = Vec::new();
        for &lv in &self.levels {
            let (lo, hi): (Vec<i64>, Vec<i64>) = if lv >= c.level {
                let sh = lv - c.level;
                c.index
                    .iter()
                    .map(|&i| ((i << sh) - 1, ((i + 1) << sh)))
                    .unzip()
            } else {
                let sh = c.level - lv;
                c.index
                    .iter()
                    .map(|&i| ((i - 1) >> sh, (i + 1) >> sh))
                    .unzip()
            };
            let mut hit = |idx: &[i64]| {
                if let Some(&i) = self.lookup.get(&(lv, idx.to_vec())) {
                    if i != j && me.closure_intersects(&self.cube(i)) {
                        out.push(i);
                    }
                }
            };
            let count: i64 = lo.iter().zip(&hi).map(|(a, b)| b - a + 1).product();
            if lv <= c.level + 1 || count <= 4096 {
                visit_range(&lo, &hi, &mut hit);
            } else {
                // finer cells strictly inside Q cannot be kept; walk the outer shell only
                for d in 0..lo.len() {
                    for side in [lo[d], hi[d]] {
                        let (mut a, mut b) = (lo.clone(), hi.clone());
                        a[d] = side;
                        b[d] = side;
                        visit_range(&a, &b, &mut hit);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Cubes that touch a kept cube more than one level finer.
    fn unbalanced(&self) -> Vec<usize> {
        let found: HashSet<usize> = self
            .cubes
            .par_iter()
            .flat_map_iter(|c| {
                let mut hits = Vec::new();
                for off in &self.offsets {
                    if off.iter().all(|&o| o == 0) {
                        continue;
                    }
                    let nb: Vec<i64> = c.index.iter().zip(off).map(|(i, o)| i + o).collect();
                    for &lv in self.levels.iter().filter(|&&l| l + 2 <= c.level) {
                        let sh = c.level - lv;
                        let anc: Vec<i64> = nb.iter().map(|&i| i >> sh).collect();
                        if let Some(&i) = self.lookup.get(&(lv, anc)) {
                            hits.push(i);
                        }
                    }
                }
                hits
            })
            .collect();
        let mut v: Vec<usize> = found.into_iter().collect();
        v.sort_unstable();
        v
    }

    fn candidates(&self, x: &[f64], mut keep: impl FnMut(usize)) {
        for &lv in &self.levels {
            let side = self.scale * 0.5f64.powi(lv as i32);
            let cell: Vec<i64> = x.iter().map(|v| (v / side).floor() as i64).collect();
            for off in &self.offsets {
                let idx: Vec<i64> = cell.iter().zip(off).map(|(c, o)| c + o).collect();
                if let Some(&j) = self.lookup.get(&(lv, idx)) {
                    keep(j);
                }
            }
        }
    }

    /// Cubes whose open dilate contains `x`, i.e. with `ψ_{Q_j}(x) > 0`.
    pub fn active(&self, x: &[f64]) -> Vec<usize> {
        let mut out = Vec::new();
        self.candidates(x, |j| {
            let side = self.side(j);
            let half = 0.5 * self.lambda * side;
            let c = &self.cubes[j];
            if c.index
                .iter()
                .zip(x)
                .all(|(&i, v)| (v - (i as f64 + 0.5) * side).abs() < half)
            {
                out.push(j);
            }
        });
        out
    }

    /// Number of closed dilates `λQ_j` containing `x`.
    pub fn overlap_count(&self, x: &[f64]) -> usize {
        let mut count = 0;
        self.candidates(x, |j| {
            if self.cube(j).dilate_contains(x, self.lambda) {
                count += 1;
            }
        });
        count
    }

    /// `true` when some undilated kept cube contains `x`.
    pub fn covered(&self, x: &[f64]) -> bool {
        let mut hit = false;
        self.candidates(x, |j| hit |= self.cube(j).contains(x));
        hit
    }

    /// Unnormalized bump `ψ_Q(x) = Π φ((x_i − c_i)/ℓ)` as a jet.
    pub fn bump_jet(&self, j: usize, x: &[f64], order: usize) -> Jet {
        let side = self.side(j);
        let c = &self.cubes[j];
        let mut acc = Jet::constant(self.n, order, 1.0);
        for (d, (&i, v)) in c.index.iter().zip(x).enumerate() {
            let t = (v - (i as f64 + 0.5) * side) / side;
            let g = self.bump.phi_taylor(t, order);
            acc = acc.mul(&Jet::from_univariate(self.n, order, d, &g, 1.0 / side));
        }
        acc
    }

    /// `ψ_j = ψ_{Q_j}/(Σ_i ψ_{Q_i}²)^{1/2}` for every active cube, as jets.
    pub fn psi_jets(&self, x: &[f64], order: usize) -> Vec<(usize, Jet)> {
        let act = self.active(x);
        let bumps: Vec<Jet> = act.iter().map(|&j| self.bump_jet(j, x, order)).collect();
        let mut s = Jet::zeros(self.n, order);
        for b in &bumps {
            s.add_assign(&b.mul(b));
        }
        if !(s.value() > 0.0) {
            return Vec::new();
        }
        let inv = s.powf(-0.5);
        act.into_iter()
            .zip(bumps)
            .map(|(j, b)| (j, b.mul(&inv)))
            .collect()
    }

    pub fn psi_values(&self, x: &[f64]) -> Vec<(usize, f64)> {
        self.psi_jets(x, 0)
            .into_iter()
            .map(|(j, v)| (j, v.value()))
            .collect()
    }

    pub fn psi(&self, j: usize, x: &[f64]) -> f64 {
        self.psi_values(x)
            .into_iter()
            .find(|(i, _)| *i == j)
            .map_or(0.0, |(_, v)| v)
    }

    pub fn psi_derivative(&self, j: usize, beta: &[usize], x: &[f64]) -> f64 {
        let order = beta.iter().sum();
        self.psi_jets(x, order)
            .into_iter()
            .find(|(i, _)| *i == j)
            .map_or(0.0, |(_, v)| v.derivative(beta))
    }

    /// SVG outline drawing of a planar partition, filled by colour class.
    pub fn to_svg(&self, colors: Option<&[usize]>) -> String {
        const PALETTE: [&str; 12] = [
            "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
            "#9c755f", "#bab0ac", "#86bcb6", "#d37295",
        ];
        let size = 800.0;
        let (lo, hi) = (&self.domain.lo, &self.domain.hi);
        let (w, h) = (hi[0] - lo[0], if self.n > 1 { hi[1] - lo[1] } else { 1.0 });
        let s = size / w.max(h);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.3} {:.3}">"#,
            w * s,
            h * s,
            w * s,
            h * s
        );
        for (j, c) in self.cubes.iter().enumerate() {
            let side = self.side(j);
            let x0 = c.index[0] as f64 * side;
            let y0 = if self.n > 1 {
                c.index[1] as f64 * side
            } else {
                lo[0]
            };
            let fill = colors.map_or("none", |cs| PALETTE[cs[j] % PALETTE.len()]);
            let yh = if self.n > 1 { side } else { h };
            let _ = writeln!(
                out,
                r##"<rect x="{:.4}" y="{:.4}" width="{:.4}" height="{:.4}" fill="{}" stroke="#222" stroke-width="0.3"/>"##,
                (x0 - lo[0]) * s,
                (if self.n > 1 { hi[1] - (y0 + yh) } else { 0.0 }) * s,
                side * s,
                yh * s,
                fill
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Partition {
        build_partition(
            &|_: &[f64]| 1.0,
            &BoxDomain::cube(n, 0.0, 1.0),
            0.05,
            1.25,
            20,
            1e-6,
        )
        .unwrap()
    }

    #[test]
    fn constant_control_in_the_plane() {
        let p = unit(2);
        assert_eq!(p.len(), 4096);
        assert!(p.cubes.iter().all(|c| c.level == 6));
    }

    #[test]
    fn constant_control_on_the_line() {
        let p = unit(1);
        assert_eq!(p.len(), 64);
        assert!((p.side(0) - 0.015625).abs() < 1e-15);
    }

    #[test]
    fn zero_control_drops_everything() {
        let p = build_partition(
            &|_: &[f64]| 0.0,
            &BoxDomain::cube(2, 0.0, 1.0),
            0.05,
            1.25,
            20,
            1e-6,
        )
        .unwrap();
        assert!(p.is_empty());
        assert!((p.dropped_volume - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_parameters_rejected() {
        let b = BoxDomain::cube(1, 0.0, 1.0);
        assert!(build_partition(&|_: &[f64]| 1.0, &b, 0.05, 1.6, 20, 0.0).is_err());
        assert!(build_partition(&|_: &[f64]| 1.0, &b, 0.05, 1.0, 20, 0.0).is_err());
        assert!(build_partition(
            &|_: &[f64]| 1.0,
            &BoxDomain::new(vec![1.0], vec![1.0]),
            0.05,
            1.25,
            20,
            0.0
        )
        .is_err());
    }

    #[test]
    fn bump_profile() {
        let b = BumpSpec { lambda: 1.25 };
        assert_eq!(b.phi(0.0), 1.0);
        assert_eq!(b.phi(0.5), 1.0);
        assert_eq!(b.phi(0.625), 0.0);
        assert!((b.phi(0.5625) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for i in 0..=100 {
            let v = b.phi(0.5 + 0.125 * i as f64 / 100.0);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn bump_derivative_matches_difference_quotient() {
        let b = BumpSpec { lambda: 1.25 };
        for t in [0.52, 0.55, 0.58, 0.61, -0.57] {
            let g = b.phi_taylor(t, 2);
            let h = 1e-6;
            let fd = (b.phi(t + h) - b.phi(t - h)) / (2.0 * h);
            assert!((g[1] - fd).abs() < 1e-6, "{t}: {} vs {fd}", g[1]);
        }
    }

    #[test]
    fn psi_examples() {
        let p = unit(2);
        let j = p.find(6, &[10, 10]).unwrap();
        let c = p.cube(j).center();
        assert!((p.psi(j, &c) - 1.0).abs() < 1e-15);
        assert_eq!(p.psi(j, &[0.9, 0.9]), 0.0);
        // on the shared face of two equal cubes both bumps equal 1
        let x = [11.0 / 64.0, 10.5 / 64.0];
        let k = p.find(6, &[11, 10]).unwrap();
        assert!((p.psi(j, &x) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((p.psi(k, &x) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.psi_derivative(j, &[1, 0], &c), 0.0);
        assert_eq!(p.psi_derivative(j, &[0, 0], &x), p.psi(j, &x));
    }

    #[test]
    fn overlap_near_corner() {
        let p = unit(2);
        let x = [10.0 / 64.0 + 1e-4, 10.0 / 64.0 - 1e-4];
        assert_eq!(p.overlap_count(&x), 4);
        assert_eq!(p.overlap_count(&[10.5 / 64.0, 10.5 / 64.0]), 1);
    }

    #[test]
    fn exact_closure_test() {
        let a = DyadicCube {
            level: 2,
            index: vec![1, 1],
            scale: 1.0,
        };
        let b = DyadicCube {
            level: 3,
            index: vec![4, 1],
            scale: 1.0,
        };
        let c = DyadicCube {
            level: 3,
            index: vec![5, 1],
            scale: 1.0,
        };
        assert!(a.closure_intersects(&b));
        assert!(!a.closure_intersects(&c));
        assert!(a.closure_intersects(&a));
    }

    #[test]
    fn json_round_trip() {
        let p = unit(1);
        let doc = serde_json::to_string(&p.to_doc()).unwrap();
        assert!(doc.contains("\"rQ\""));
        let back = Partition::from_doc(serde_json::from_str(&doc).unwrap()).unwrap();
        assert_eq!(back.cubes, p.cubes);
    }
}
