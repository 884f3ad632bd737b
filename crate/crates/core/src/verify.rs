//! Sampled checks of the inequalities behind the construction, run against
//! built artifacts. Every check returns a [`CheckReport`]; a run's reports
//! aggregate into a [`Verdict`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{check_derivative_control, is_stable, ControlFunction, TINY};
use crate::decompose::{CubeBranch, Decomposition, Level};
use crate::error::{Result, SosError};
use crate::field::{dist, Field, MultiIndex};
use crate::jet::Jet;
use crate::sampling::{halton, local_pairs, BoxDomain};
use crate::whitney::Partition;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub samples: usize,
    pub worst: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckReport {
    /// Passes iff `worst ≤ threshold`.
    pub fn bound(name: &str, samples: usize, worst: f64, threshold: f64) -> Self {
        CheckReport {
            name: name.into(),
            samples,
            worst,
            threshold,
            pass: worst <= threshold && !worst.is_nan(),
            fitted: None,
            note: None,
        }
    }

    /// Passes iff the fit is finite and moves by less than 10% from `small`
    /// samples to twice as many.
    pub fn stable(name: &str, samples: usize, small: f64, big: f64) -> Self {
        CheckReport {
            name: name.into(),
            samples,
            worst: (big - small).abs(),
            threshold: 0.1 * small.abs().max(big.abs()),
            pass: is_stable(small, big),
            fitted: Some(big),
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub checks: Vec<CheckReport>,
}

impl Verdict {
    pub fn new(checks: Vec<CheckReport>) -> Self {
        Verdict {
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }

    pub fn failures(&self) -> Vec<&CheckReport> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

fn fold_max(v: impl ParallelIterator<Item = f64>) -> f64 {
    v.reduce(
        || 0.0,
        |a, b| {
            if a.is_nan() || b.is_nan() {
                f64::NAN
            } else {
                a.max(b)
            }
        },
    )
}

/// Worst `|Σ g² − f|` over the covered points of `grid`, against
/// `1e−8 (1 + max f)`.
pub fn check_reconstruction(dec: &Decomposition, f: &dyn Field, grid: &[Vec<f64>]) -> CheckReport {
    check_reconstruction_with(f, grid, &|x| dec.covered(x), &|x| dec.values(x))
}

/// Same check for an arbitrary list of square roots.
pub fn check_reconstruction_with(
    f: &dyn Field,
    grid: &[Vec<f64>],
    covered: &(dyn Fn(&[f64]) -> bool + Sync),
    values: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
) -> CheckReport {
    let pts: Vec<&Vec<f64>> = grid.par_iter().filter(|x| covered(x)).collect();
    let fmax = fold_max(pts.par_iter().map(|x| f.eval(x)));
    let worst = fold_max(
        pts.par_iter()
            .map(|x| (values(x).iter().map(|g| g * g).sum::<f64>() - f.eval(x)).abs()),
    );
    CheckReport::bound("reconstruction", pts.len(), worst, 1e-8 * (1.0 + fmax))
}

fn pair_seminorm(vals: &[(f64, f64)], pairs: &[(Vec<f64>, Vec<f64>)], alpha: f64) -> f64 {
    fold_max(pairs.par_iter().zip(vals).map(|((x, y), (a, b))| {
        let d = dist(x, y);
        if d > 0.0 {
            (a - b).abs() / d.powf(alpha)
        } else {
            0.0
        }
    }))
}

/// `|f(x)^s − f(y)^s| ≤ (1+ε)[f]_α^s ((1+ε)^{1/(s−1)} − 1)^{1−s} |x−y|^{sα}
/// + ε max(f(x)^s, f(y)^s)` with `[f]_α` fitted on the same pairs.
pub fn check_power_difference(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    alpha: f64,
    s: f64,
    eps: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<CheckReport> {
    if !(s > 1.0 && eps > 0.0 && alpha > 0.0 && alpha <= 1.0) {
        return Err(SosError::InvalidInput(format!(
            "need s > 1, eps > 0, alpha in (0, 1]; got {s}, {eps}, {alpha}"
        )));
    }
    let vals: Vec<(f64, f64)> = pairs.par_iter().map(|(x, y)| (f(x), f(y))).collect();
    let semi = pair_seminorm(&vals, pairs, alpha);
    let c = (1.0 + eps) * semi.powf(s) / ((1.0 + eps).powf(1.0 / (s - 1.0)) - 1.0).powf(s - 1.0);
    let worst = fold_max(pairs.par_iter().zip(&vals).map(|((x, y), (a, b))| {
        let (ps, qs) = (a.powf(s), b.powf(s));
        let lhs = (ps - qs).abs();
        let rhs = c * dist(x, y).powf(s * alpha) + eps * ps.max(qs);
        (lhs - rhs) / (1.0 + rhs)
    }));
    let mut r = CheckReport::bound("power-difference", pairs.len(), worst.max(0.0), 1e-12);
    r.fitted = Some(semi);
    Ok(r)
}

/// Taylor estimate for `∂^β f` between `x` and `y` with remainder constant
/// `Σ_{|γ|=k−|β|} [∂^{β+γ} f]_α / γ!`, the seminorms fitted on the pairs and
/// their midpoints.
pub fn check_taylor_gap(
    f: &dyn Field,
    beta: &MultiIndex,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<CheckReport> {
    let s = f.smoothness();
    let b = beta.order();
    if b >= s.k || beta.dim() != s.n {
        return Err(SosError::InvalidInput(format!(
            "need |beta| < k = {} in dimension {}",
            s.k, s.n
        )));
    }
    let m = s.k - b;
    let top: Vec<MultiIndex> = MultiIndex::all_of_order(s.n, m);
    let jets: Vec<(Jet, Jet, Jet)> = pairs
        .par_iter()
        .map(|(x, y)| {
            let mid: Vec<f64> = x.iter().zip(y).map(|(a, c)| 0.5 * (a + c)).collect();
            (f.jet(x, s.k), f.jet(y, s.k), f.jet(&mid, s.k))
        })
        .collect();
    let mut c = 0.0;
    for g in &top {
        let idx = beta.add(g);
        let mut semi: f64 = 0.0;
        for ((x, y), (jx, jy, jm)) in pairs.iter().zip(&jets) {
            let mid: Vec<f64> = x.iter().zip(y).map(|(a, c)| 0.5 * (a + c)).collect();
            let (vx, vy, vm) = (
                jx.derivative(&idx.0),
                jy.derivative(&idx.0),
                jm.derivative(&idx.0),
            );
            for (p, q, a, bb) in [(x, y, vx, vy), (x, &mid, vx, vm), (&mid, y, vm, vy)] {
                let d = dist(p, q);
                if d > 0.0 {
                    semi = semi.max((a - bb).abs() / d.powf(s.alpha));
                }
            }
        }
        c += semi / g.factorial();
    }
    let lower: Vec<MultiIndex> = (1..=m)
        .flat_map(|o| MultiIndex::all_of_order(s.n, o))
        .collect();
    let worst = fold_max(pairs.par_iter().zip(&jets).map(|((x, y), (jx, jy, _))| {
        let d = dist(x, y);
        let lhs = (jx.derivative(&beta.0) - jy.derivative(&beta.0)).abs();
        let mut rhs = c * d.powf(m as f64 + s.alpha);
        for g in &lower {
            rhs += d.powi(g.order() as i32) * jx.derivative(&beta.add(g).0).abs() / g.factorial();
        }
        (lhs - rhs) / (1.0 + rhs)
    }));
    let mut r = CheckReport::bound("taylor-gap", pairs.len(), worst.max(0.0), 1e-10);
    r.fitted = Some(c);
    Ok(r)
}

/// `|∇f(x)| ≤ [∇f]_α^{1/(1+α)} f(x)^{α/(1+α)} (α^{1/(1+α)} + α^{−α/(1+α)})`
/// for non-negative `f` with `k = 1`; `[∇f]_α` is fitted on the pairs.
pub fn check_gradient_bound(f: &dyn Field, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<CheckReport> {
    let s = f.smoothness();
    if s.k != 1 {
        return Err(SosError::InvalidInput(format!(
            "gradient bound needs k = 1, got {}",
            s.k
        )));
    }
    let a = s.alpha;
    let grads: Vec<(Jet, Jet)> = pairs
        .par_iter()
        .map(|(x, y)| (f.jet(x, 1), f.jet(y, 1)))
        .collect();
    let grad = |j: &Jet| -> Vec<f64> {
        (0..s.n)
            .map(|i| j.derivative(&MultiIndex::unit(s.n, i).0))
            .collect()
    };
    let semi = fold_max(pairs.par_iter().zip(&grads).map(|((x, y), (jx, jy))| {
        let d = dist(x, y);
        if d > 0.0 {
            dist(&grad(jx), &grad(jy)) / d.powf(a)
        } else {
            0.0
        }
    }));
    let k = a.powf(1.0 / (1.0 + a)) + a.powf(-a / (1.0 + a));
    let worst = fold_max(grads.par_iter().map(|(jx, _)| {
        let g = grad(jx).iter().map(|v| v * v).sum::<f64>().sqrt();
        let rhs = semi.powf(1.0 / (1.0 + a)) * jx.value().max(0.0).powf(a / (1.0 + a)) * k;
        (g - rhs) / (1.0 + rhs)
    }));
    let mut r = CheckReport::bound("gradient-bound", pairs.len(), worst.max(0.0), 1e-10);
    r.fitted = Some(semi);
    Ok(r)
}

/// Order `m = ⌊k/2⌋` and exponent `λ = (k+α)/2 − m` of the half-regular space.
pub fn half_regular_split(k: usize, alpha: f64) -> (usize, f64) {
    let m = k / 2;
    (m, (k as f64 + alpha) / 2.0 - m as f64)
}

/// Largest `λ`-difference quotient of every `∂^β g`, `|β| ≤ m`, over pairs.
pub fn fit_half_seminorm(
    g: &(dyn Fn(&[f64], usize) -> Vec<Jet> + Sync),
    n: usize,
    k: usize,
    alpha: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Vec<f64> {
    let (m, lam) = half_regular_split(k, alpha);
    let betas: Vec<MultiIndex> = (0..=m)
        .flat_map(|o| MultiIndex::all_of_order(n, o))
        .collect();
    let per_pair: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|(x, y)| {
            let d = dist(x, y);
            let (gx, gy) = (g(x, m), g(y, m));
            gx.iter()
                .zip(&gy)
                .map(|(a, b)| {
                    if d <= 0.0 {
                        return 0.0;
                    }
                    betas
                        .iter()
                        .map(|be| (a.derivative(&be.0) - b.derivative(&be.0)).abs() / d.powf(lam))
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect();
    let classes = per_pair.first().map_or(0, Vec::len);
    (0..classes)
        .map(|c| per_pair.iter().map(|v| v[c]).fold(0.0, f64::max))
        .collect()
}

/// Half-regularity of a list of terms: fitted `λ`-seminorms of `∂^β g`,
/// `|β| ≤ ⌊k/2⌋`, over local pairs in `region`; passes iff every fit is finite
/// and stable when the pair count doubles.
pub fn check_half_regularity(
    g: &(dyn Fn(&[f64], usize) -> Vec<Jet> + Sync),
    n: usize,
    k: usize,
    alpha: f64,
    region: &BoxDomain,
    samples: usize,
) -> CheckReport {
    let radius = 0.05 * region.diameter();
    let pairs = local_pairs(region, 2 * samples, 29, &|_| radius);
    let small = fit_half_seminorm(g, n, k, alpha, &pairs[..samples]);
    let big = fit_half_seminorm(g, n, k, alpha, &pairs);
    let (s, b) = small
        .iter()
        .zip(&big)
        .fold((0.0f64, 0.0f64), |acc, (s, b)| {
            if is_stable(*s, *b) {
                (acc.0.max(*s), acc.1.max(*b))
            } else {
                (acc.0.max(*s), f64::INFINITY)
            }
        });
    let unstable = small
        .iter()
        .zip(&big)
        .filter(|(s, b)| !is_stable(**s, **b))
        .count();
    let mut r = CheckReport::stable("half-regularity", 2 * samples, s, b);
    if unstable > 0 {
        r.pass = false;
        r.fitted = Some(big.iter().copied().fold(0.0, f64::max));
        r = r.with_note(format!(
            "{unstable} of {} terms unstable under doubling",
            big.len()
        ));
    }
    r
}

/// `|∇^ℓ f| ≤ C r^{k−ℓ+α}` for every `ℓ ≤ k`, each fit stable under doubling.
pub fn check_control_ratios(
    f: &dyn Field,
    r: &ControlFunction,
    b: &BoxDomain,
    samples: usize,
) -> Result<Vec<CheckReport>> {
    let k = f.smoothness().k;
    (0..=k)
        .map(|ell| {
            let rep = check_derivative_control(f, r, b, ell, samples)?;
            let mut c = CheckReport::stable(
                &format!("control-ratio-{ell}"),
                rep.samples,
                rep.fitted_half,
                rep.fitted_c,
            );
            c.pass = rep.pass;
            c.fitted = Some(rep.fitted_c);
            Ok(c)
        })
        .collect()
}

/// Cube indices spread evenly over `0..len`, at most `count` of them.
fn spread(len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    (0..count).map(|i| i * len / count).collect()
}

/// Nodes per axis across a dilate so that each bump transition of width
/// `(λ−1)ℓ/2` holds `per_transition` grid intervals, and the refinement with
/// half the spacing.
fn grid_pair(lambda: f64, per_transition: usize) -> (usize, usize) {
    let p = (per_transition.max(1) as f64 * 2.0 * lambda / (lambda - 1.0)).ceil() as usize + 1;
    (p, 2 * p - 1)
}

fn all_betas(n: usize, max: usize) -> Vec<MultiIndex> {
    (0..=max)
        .flat_map(|o| MultiIndex::all_of_order(n, o))
        .collect()
}

/// Sup of each component of `obj` over `bounds`: evaluated on a grid with
/// `per_axis` nodes per axis, then refined by a shrinking coordinate search
/// started from the highest distinct discrete local maxima.
pub fn polished_max(
    obj: &(dyn Fn(&[f64]) -> [f64; 2] + Sync),
    bounds: &BoxDomain,
    per_axis: usize,
) -> [f64; 2] {
    const STARTS: usize = 12;
    let n = bounds.dim();
    let m = per_axis.max(2);
    let pts = bounds.grid(m);
    let vals: Vec<[f64; 2]> = pts.iter().map(|p| obj(p)).collect();
    let step: Vec<f64> = bounds
        .lo
        .iter()
        .zip(&bounds.hi)
        .map(|(l, h)| (h - l) / (m - 1) as f64)
        .collect();
    let mut out = [0.0; 2];
    for (c, slot) in out.iter_mut().enumerate() {
        if vals.iter().any(|v| v[c].is_nan()) {
            *slot = f64::NAN;
            continue;
        }
        let is_peak = |code: usize| {
            let v = vals[code][c];
            let mut stride = 1;
            for _ in 0..n {
                let digit = (code / stride) % m;
                if (digit > 0 && vals[code - stride][c] > v)
                    || (digit + 1 < m && vals[code + stride][c] > v)
                {
                    return false;
                }
                stride *= m;
            }
            true
        };
        let mut peaks: Vec<(f64, usize)> = (0..pts.len())
            .filter(|&i| is_peak(i))
            .map(|i| (vals[i][c], i))
            .collect();
        peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
        peaks.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-9 * b.0.abs());
        let mut best: f64 = peaks.first().map_or(0.0, |p| p.0);
        for &(v0, i) in peaks.iter().take(STARTS) {
            let (mut at, mut val, mut h) = (pts[i].clone(), v0, 1.0);
            for _ in 0..40 {
                // a short ladder of steps so that peaks narrower than `h` are found
                let mut next: Option<(Vec<f64>, f64)> = None;
                for d in 0..n {
                    for sgn in [-1.0, 1.0] {
                        for scale in [1.0, 0.5, 0.25] {
                            let mut q = at.clone();
                            q[d] += sgn * h * scale * step[d];
                            if !bounds.contains(&q) {
                                continue;
                            }
                            let v = obj(&q)[c];
                            if v > next.as_ref().map_or(val, |x| x.1) {
                                next = Some((q, v));
                            }
                        }
                    }
                }
                match next {
                    Some((q, v)) => {
                        at = q;
                        val = v;
                    }
                    None => h *= 0.5,
                }
                if h < 1e-6 {
                    break;
                }
            }
            best = best.max(val);
        }
        *slot = best.max(0.0);
    }
    out
}

/// The dilate of cube `j` clipped to the partition's box, where the squared
/// bumps sum to one.
fn dilate_box(p: &Partition, j: usize) -> BoxDomain {
    let c = p.cube(j).center();
    let h = 0.5 * p.lambda * p.side(j);
    BoxDomain::new(
        c.iter()
            .zip(&p.domain.lo)
            .map(|(v, l)| (v - h).max(*l))
            .collect(),
        c.iter()
            .zip(&p.domain.hi)
            .map(|(v, u)| (v + h).min(*u))
            .collect(),
    )
}

/// Up to `count` cubes from `set`, spread evenly, skipping cubes that touch
/// the box boundary unless nothing else is left.
fn pick_cubes(p: &Partition, set: &[usize], count: usize) -> Vec<usize> {
    let inner: Vec<usize> = set
        .iter()
        .copied()
        .filter(|&j| !p.cubes[j].boundary)
        .collect();
    let pool = if inner.is_empty() {
        set.to_vec()
    } else {
        inner
    };
    spread(pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

type SupPair = ((f64, f64), (f64, f64), usize);
type CubeObjective<'a> = dyn Fn(usize, &[f64]) -> (f64, f64) + Sync + 'a;

/// Sup estimates of `(pointwise, hölder)` objectives per cube, on the coarse
/// and the refined grid.
fn fit_pair(
    p: &Partition,
    js: &[usize],
    per_transition: usize,
    objectives: &CubeObjective<'_>,
) -> SupPair {
    let (small, big) = grid_pair(p.lambda, per_transition);
    let fit = |per_axis: usize| -> (f64, f64) {
        js.par_iter()
            .map(|&j| {
                let [d, h] = polished_max(
                    &|x| {
                        let (d, h) = objectives(j, x);
                        [d, h]
                    },
                    &dilate_box(p, j),
                    per_axis,
                );
                (d, h)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
    };
    (fit(small), fit(big), js.len() * big.pow(p.n as u32))
}

/// `|∂^β ψ_j(x)| r(x)^{|β|}` and `[∂^β ψ_j]_α(x) r(x)^{|β|+α}` for
/// `|β| ≤ order`, fitted over sampled dilates. The Hölder quotient pairs `x`
/// with a nearby point at distance up to `ℓ(Q_j)/20`. Each sup is taken over
/// a grid with `per_transition` intervals across each bump transition and
/// polished locally; stability is judged against the grid with half the
/// spacing.
pub fn check_partition_bounds(
    p: &Partition,
    r: &(dyn Fn(&[f64]) -> f64 + Sync),
    order: usize,
    alpha: f64,
    cubes: usize,
    per_transition: usize,
) -> Vec<CheckReport> {
    let js = pick_cubes(p, &(0..p.len()).collect::<Vec<_>>(), cubes);
    let betas = all_betas(p.n, order);
    let dir: Vec<f64> = halton(3, p.n).iter().map(|t| 2.0 * t - 1.0).collect();
    let objectives = |j: usize, x: &[f64]| -> (f64, f64) {
        let rx = r(x);
        if rx < TINY {
            return (0.0, 0.0);
        }
        let step = 0.05 * p.side(j);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, t)| a + step * t).collect();
        let pick = |z: &[f64]| {
            p.psi_jets(z, order)
                .into_iter()
                .find(|(i, _)| *i == j)
                .map(|(_, v)| v)
        };
        let (jx, jy) = (pick(x), pick(&y));
        let dxy = dist(x, &y);
        let (mut d, mut h): (f64, f64) = (0.0, 0.0);
        for b in &betas {
            let vx = jx.as_ref().map_or(0.0, |v| v.derivative(&b.0));
            let vy = jy.as_ref().map_or(0.0, |v| v.derivative(&b.0));
            d = d.max(vx.abs() * rx.powi(b.order() as i32));
            h = h.max((vx - vy).abs() / dxy.powf(alpha) * rx.powf(b.order() as f64 + alpha));
        }
        (d, h)
    };
    let ((d1, h1), (d2, h2), n) = fit_pair(p, &js, per_transition, &objectives);
    vec![
        CheckReport::stable("bump-derivatives", n, d1, d2),
        CheckReport::stable("bump-holder", n, h1, h2),
    ]
}

/// Partition-of-unity residual at covered points, and the worst overlap
/// against `2^n`.
pub fn check_partition_of_unity(p: &Partition, points: &[Vec<f64>]) -> Vec<CheckReport> {
    let cov: Vec<&Vec<f64>> = points.par_iter().filter(|x| p.covered(x)).collect();
    let pou = fold_max(
        cov.par_iter()
            .map(|x| (p.psi_values(x).iter().map(|(_, v)| v * v).sum::<f64>() - 1.0).abs()),
    );
    let overlap = points
        .par_iter()
        .map(|x| p.overlap_count(x))
        .max()
        .unwrap_or(0);
    vec![
        CheckReport::bound("partition-of-unity", cov.len(), pou, 1e-10),
        CheckReport::bound(
            "overlap",
            points.len(),
            overlap as f64,
            (1usize << p.n) as f64,
        ),
    ]
}

fn level_control(level: &Level) -> ControlFunction {
    ControlFunction::new(level.f.clone(), 0.0, level.omega)
}

/// Pointwise and Hölder estimates for the weighted pieces `ψ_j √f` on root
/// cubes and `ψ_j (u_n − X)√H` on minimum cubes, fitted over their dilates:
/// `|∂^β g| ≤ C r^{(k+α)/2−|β|}` for `|β| ≤ (k+α)/2` and
/// `[∂^β g]_λ ≤ C r^{(k+α)/2−|β|−λ}` for `|β| ≤ ⌊k/2⌋`.
pub fn check_piece_estimates(
    level: &Level,
    cubes: usize,
    per_transition: usize,
) -> Vec<CheckReport> {
    let s = level.f.smoothness();
    let half = s.total() / 2.0;
    let top = half.floor() as usize;
    let (m, lam) = half_regular_split(s.k, s.alpha);
    let ctrl = level_control(level);
    let betas = all_betas(s.n, top);
    let hol = all_betas(s.n, m);
    let p = &level.partition;
    let dir: Vec<f64> = halton(5, s.n).iter().map(|t| 2.0 * t - 1.0).collect();
    let root: Vec<usize> = (0..p.len())
        .filter(|&j| matches!(level.plans[j].branch, CubeBranch::Root { fallback: None }))
        .collect();
    let min: Vec<usize> = (0..p.len())
        .filter(|&j| matches!(level.plans[j].branch, CubeBranch::Min { .. }))
        .collect();
    let fallback = p.len() - root.len() - min.len();
    let objectives = |j: usize, x: &[f64]| -> (f64, f64) {
        let rx = ctrl.eval(x);
        if rx < TINY {
            return (0.0, 0.0);
        }
        let piece = |z: &[f64]| -> Jet {
            match p.psi_jets(z, top).into_iter().find(|(i, _)| *i == j) {
                Some((_, w)) => w.mul(&level.main_piece_jet(j, z, top)),
                None => Jet::zeros(s.n, top),
            }
        };
        let step = 0.05 * p.side(j);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, t)| a + step * t).collect();
        let (jx, jy) = (piece(x), piece(&y));
        let dxy = dist(x, &y);
        let mut d: f64 = 0.0;
        for b in &betas {
            d = d.max(jx.derivative(&b.0).abs() / rx.powf(half - b.order() as f64));
        }
        let mut h: f64 = 0.0;
        for b in &hol {
            let q = (jx.derivative(&b.0) - jy.derivative(&b.0)).abs() / dxy.powf(lam);
            h = h.max(q / rx.powf(half - b.order() as f64 - lam));
        }
        (d, h)
    };
    let mut out = Vec::new();
    for (name, set) in [("root", root), ("min", min)] {
        let js = pick_cubes(p, &set, cubes);
        let ((d1, h1), (d2, h2), n) = fit_pair(p, &js, per_transition, &objectives);
        let note = format!(
            "{} cubes sampled; {fallback} fallback cubes excluded",
            js.len()
        );
        out.push(
            CheckReport::stable(&format!("{name}-piece-derivatives"), n, d1, d2)
                .with_note(note.clone()),
        );
        out.push(CheckReport::stable(&format!("{name}-piece-holder"), n, h1, h2).with_note(note));
    }
    out
}

/// Minimum-cube identities: the fibre derivative vanishes at `X`, `X` stays
/// in its window, and `f̃(u', X) ≤ f̃(u', t)` along sampled fibres.
pub fn check_minimizer_identities(level: &Level, cubes: usize, samples: usize) -> Vec<CheckReport> {
    let maps = level.min_maps();
    let s = level.f.smoothness();
    let ctrl = level_control(level);
    let js: Vec<usize> = spread(maps.len(), cubes);
    let rows: Vec<(f64, f64, f64, usize)> = js
        .par_iter()
        .map(|&i| {
            let (j, map) = &maps[i];
            let n = map.n();
            let (lo, hi) = map.window();
            let (mut grad, mut out_of_window, mut order) = (0.0f64, 0.0f64, 0.0f64);
            let mut count = 0;
            let ups: Vec<Vec<f64>> = if n == 1 {
                vec![vec![]]
            } else {
                BoxDomain::new(map.a.iter().map(|v| -v).collect(), map.a.clone())
                    .halton_points(samples.max(1), 3)
            };
            for up in &ups {
                let x = map.minimizer(up);
                let mut u = up.clone();
                u.push(x);
                let rq = level.partition.cubes[*j].r_q;
                let scale = rq.powf(s.total() - 1.0).max(TINY);
                let (d, _) = map.fibre_derivatives(up, x);
                grad = grad.max(d.abs() / scale);
                out_of_window = out_of_window
                    .max((lo - x).max(x - hi).max(0.0) / ctrl.eval(&map.to_x(&u)).max(TINY));
                let fx = map.tilde_value(up, x);
                for q in 0..9 {
                    let t = lo + (hi - lo) * q as f64 / 8.0;
                    order = order.max((fx - map.tilde_value(up, t)) / (1.0 + fx.abs()));
                }
                count += 1;
            }
            (grad, out_of_window, order, count)
        })
        .collect();
    let total: usize = rows.iter().map(|r| r.3).sum();
    let g = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let w = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let o = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    vec![
        CheckReport::bound("minimizer-stationary", total, g, 1e-9),
        CheckReport::bound("minimizer-window", total, w, 0.0),
        CheckReport::bound("minimizer-fibre-minimum", total, o, 1e-12),
    ]
}

/// `|∂^β F(u')| ≤ C r(y)^{k+α−|β|}` for the remainders of sampled minimum
/// cubes, `|β| ≤ k − 1`, with `y = (u', X(u'))`.
pub fn check_remainder_estimates(
    level: &Level,
    cubes: usize,
    samples: usize,
) -> Option<CheckReport> {
    let s = level.f.smoothness();
    if s.n < 2 {
        return None;
    }
    let maps = level.min_maps();
    if maps.is_empty() {
        return None;
    }
    let ctrl = level_control(level);
    let order = s.k.saturating_sub(1);
    let betas = all_betas(s.n - 1, order);
    let js = spread(maps.len(), cubes);
    let fit = |count: usize| -> f64 {
        fold_max(js.par_iter().map(|&i| {
            let map = &maps[i].1;
            let b = BoxDomain::new(map.a.iter().map(|v| -v).collect(), map.a.clone());
            let mut best: f64 = 0.0;
            for up in b.grid(count) {
                let fj = map.remainder_jet(&up, order);
                let mut u = up.clone();
                u.push(map.minimizer(&up));
                let r = ctrl.eval(&map.to_x(&u));
                if r < TINY {
                    continue;
                }
                for be in &betas {
                    best = best
                        .max(fj.derivative(&be.0).abs() / r.powf(s.total() - be.order() as f64));
                }
            }
            best
        }))
    };
    let (small, big) = (samples.max(2), 2 * samples.max(2) - 1);
    let (c1, c2) = (fit(small), fit(big));
    Some(CheckReport::stable(
        "remainder-derivatives",
        js.len() * big.pow(s.n as u32 - 1),
        c1,
        c2,
    ))
}

/// Half-regularity of the class terms of a decomposition: the largest
/// `λ`-difference quotient of `∂^β g_c`, `|β| ≤ ⌊k/2⌋`, over all classes,
/// with `x` swept over sampled top-level dilates and `y` at distance
/// `ℓ(Q_j)/20`. Grid and stability rule as for the partition bounds.
pub fn check_term_half_regularity(
    dec: &Decomposition,
    cubes: usize,
    per_transition: usize,
) -> Option<CheckReport> {
    let top = dec.top.as_ref()?;
    let s = dec.f.smoothness();
    let (m, lam) = half_regular_split(s.k, s.alpha);
    let betas = all_betas(s.n, m);
    let p = &top.partition;
    let dir: Vec<f64> = halton(7, s.n).iter().map(|t| 2.0 * t - 1.0).collect();
    let js = pick_cubes(p, &(0..p.len()).collect::<Vec<_>>(), cubes);
    let objectives = |j: usize, x: &[f64]| -> (f64, f64) {
        let step = 0.05 * p.side(j);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(a, t)| a + step * t).collect();
        if !dec.domain.contains(&y) {
            return (0.0, 0.0);
        }
        let d = dist(x, &y).powf(lam);
        let (gx, gy) = (dec.jets(x, m), dec.jets(&y, m));
        let mut h: f64 = 0.0;
        for (a, b) in gx.iter().zip(&gy) {
            for be in &betas {
                h = h.max((a.derivative(&be.0) - b.derivative(&be.0)).abs() / d);
            }
        }
        (0.0, h)
    };
    let ((_, h1), (_, h2), n) = fit_pair(p, &js, per_transition, &objectives);
    Some(
        CheckReport::stable("half-regularity", n, h1, h2)
            .with_note(format!("{} cubes sampled", js.len())),
    )
}

/// Points where pieces of touching cubes share a class.
pub fn check_disjointness(dec: &Decomposition, points: &[Vec<f64>]) -> CheckReport {
    let bad: usize = match &dec.top {
        Some(l) => points.par_iter().map(|x| l.class_conflicts(x)).sum(),
        None => 0,
    };
    CheckReport::bound("class-disjointness", points.len(), bad as f64, 0.0)
}

/// Class count against `χ (s_{n−1} + 1)` and, for `n ≤ 2`, the fixed limits
/// 4 and 27.
pub fn check_class_count(dec: &Decomposition) -> CheckReport {
    let n = dec.n();
    let limit = match n {
        1 => 4,
        2 => 27,
        _ => dec.diagnostics.class_budget,
    };
    CheckReport::bound("class-count", 1, dec.class_count() as f64, limit as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    /// Reconstruction grid nodes per axis; 0 picks 4001, 101 or 21 by dimension.
    pub grid_per_axis: usize,
    /// Cubes sampled per branch for the local estimates.
    pub cubes: usize,
    /// Grid intervals per bump transition for the local sups.
    pub per_transition: usize,
    /// Fibre points per sampled minimum cube, and remainder grid nodes per axis.
    pub fibre_samples: usize,
    /// Pairs for the half-regularity fit.
    pub pairs: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            grid_per_axis: 0,
            cubes: 12,
            per_transition: 6,
            fibre_samples: 16,
            pairs: 2000,
        }
    }
}

impl VerifyConfig {
    fn grid(&self, n: usize) -> usize {
        if self.grid_per_axis > 0 {
            self.grid_per_axis
        } else {
            match n {
                1 => 4001,
                2 => 101,
                _ => 21,
            }
        }
    }
}

/// Every check that applies to a decomposition run.
pub fn verify_decomposition(dec: &Decomposition, cfg: &VerifyConfig) -> Verdict {
    let f = dec.f.as_ref();
    let s = f.smoothness();
    let grid = dec.domain.grid(cfg.grid(s.n));
    let mut checks = vec![check_reconstruction(dec, f, &grid), check_class_count(dec)];
    let terms = |x: &[f64], o: usize| dec.jets(x, o);
    if let Some(top) = &dec.top {
        checks.push(check_disjointness(dec, &grid));
        checks.extend(check_partition_of_unity(&top.partition, &grid));
        let ctrl = level_control(top);
        if let Ok(c) = check_control_ratios(f, &ctrl, &dec.domain, cfg.pairs / 4) {
            checks.extend(c);
        }
        checks.extend(check_partition_bounds(
            &top.partition,
            &|x| ctrl.eval(x),
            2,
            s.alpha,
            cfg.cubes,
            cfg.per_transition,
        ));
        checks.extend(check_piece_estimates(top, cfg.cubes, cfg.per_transition));
        checks.extend(check_minimizer_identities(
            top,
            cfg.cubes,
            cfg.fibre_samples,
        ));
        checks.extend(check_remainder_estimates(top, cfg.cubes, cfg.fibre_samples));
    }
    match check_term_half_regularity(dec, cfg.cubes, cfg.per_transition) {
        Some(c) => checks.push(c),
        None => checks.push(check_half_regularity(
            &terms,
            s.n,
            s.k,
            s.alpha,
            &dec.domain,
            cfg.pairs,
        )),
    }
    Verdict::new(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompose::{decompose, DecomposeConfig};
    use crate::field::{polynomial_field, FieldRef, SmoothnessClass};
    use num_rational::BigRational;
    use std::sync::Arc;

    fn poly(n: usize, k: usize, terms: &[(&[usize], i64)]) -> FieldRef {
        Arc::new(
            polynomial_field(
                terms
                    .iter()
                    .map(|(e, c)| (e.to_vec(), BigRational::from_integer((*c).into()))),
                SmoothnessClass::new(n, k, 1.0).unwrap(),
            )
            .unwrap(),
        )
    }

    fn pairs_1d(count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        local_pairs(&BoxDomain::cube(1, -3.0, 3.0), count, 0, &|_| 1.0)
    }

    #[test]
    fn reconstruction_and_deleted_term() {
        let f = poly(1, 2, &[(&[2], 1)]);
        let b = BoxDomain::cube(1, -10.0, 10.0);
        let d = decompose(f.clone(), &b, &DecomposeConfig::default()).unwrap();
        let grid = b.grid(2001);
        assert!(check_reconstruction(&d, f.as_ref(), &grid).pass);
        let cut = check_reconstruction_with(f.as_ref(), &grid, &|x| d.covered(x), &|x| {
            let mut v = d.values(x);
            v.remove(0);
            v
        });
        assert!(!cut.pass);
        let z = poly(1, 2, &[]);
        let dz = decompose(z.clone(), &b, &DecomposeConfig::default()).unwrap();
        assert_eq!(check_reconstruction(&dz, z.as_ref(), &grid).worst, 0.0);
    }

    #[test]
    fn power_difference_examples() {
        let pairs = pairs_1d(2000);
        let abs = |x: &[f64]| x[0].abs();
        let r = check_power_difference(&abs, 1.0, 2.0, 1.0, &pairs).unwrap();
        assert!(r.pass && (r.fitted.unwrap() - 1.0).abs() < 1e-12);
        let c = check_power_difference(&|_: &[f64]| 3.0, 1.0, 2.0, 1.0, &pairs).unwrap();
        assert!(c.pass && c.worst == 0.0);
        let same = vec![(vec![0.5], vec![0.5])];
        assert!(
            check_power_difference(&abs, 1.0, 3.0, 0.5, &same)
                .unwrap()
                .pass
        );
        assert!(check_power_difference(&abs, 1.0, 1.0, 0.5, &same).is_err());
    }

    #[test]
    fn taylor_gap_examples() {
        let pairs = pairs_1d(1000);
        let cube = poly(1, 3, &[(&[3], 1)]);
        let r = check_taylor_gap(cube.as_ref(), &MultiIndex(vec![0]), &pairs).unwrap();
        assert!(r.pass, "{r:?}");
        // third derivative is constant, so the fitted seminorm is zero
        assert!(r.fitted.unwrap().abs() < 1e-9);
        let q = poly(1, 2, &[(&[2], 1), (&[1], -1)]);
        let rq = check_taylor_gap(q.as_ref(), &MultiIndex(vec![1]), &pairs).unwrap();
        assert!(rq.pass && rq.worst < 1e-14);
        assert!(check_taylor_gap(q.as_ref(), &MultiIndex(vec![2]), &pairs).is_err());
    }

    #[test]
    fn gradient_bound_examples() {
        let pairs = pairs_1d(1000);
        let f = poly(1, 1, &[(&[2], 1)]);
        let r = check_gradient_bound(f.as_ref(), &pairs).unwrap();
        assert!(r.pass && (r.fitted.unwrap() - 2.0).abs() < 1e-9);
        let c = poly(1, 1, &[(&[0], 2)]);
        assert!(check_gradient_bound(c.as_ref(), &pairs).unwrap().pass);
        let g = poly(2, 1, &[(&[2, 0], 1), (&[0, 2], 1)]);
        let p2 = local_pairs(&BoxDomain::cube(2, -2.0, 2.0), 1000, 0, &|_| 0.5);
        assert!(check_gradient_bound(g.as_ref(), &p2).unwrap().pass);
    }

    #[test]
    fn half_regularity_of_abs() {
        let f = poly(1, 1, &[(&[2], 1)]);
        let g = |x: &[f64], o: usize| vec![f.jet(x, o).sqrt()];
        let r = check_half_regularity(&g, 1, 1, 1.0, &BoxDomain::cube(1, -1.0, 1.0), 2000);
        assert!(r.pass);
        assert!((r.fitted.unwrap() - 1.0).abs() < 0.02);
        let c = |_: &[f64], o: usize| vec![Jet::constant(1, o, 2.0)];
        let rc = check_half_regularity(&c, 1, 2, 1.0, &BoxDomain::cube(1, -1.0, 1.0), 100);
        assert!(rc.pass && rc.fitted == Some(0.0));
    }

    #[test]
    fn whole_run_on_the_line() {
        let f = poly(1, 2, &[(&[2], 1)]);
        let d = decompose(
            f,
            &BoxDomain::cube(1, -10.0, 10.0),
            &DecomposeConfig::default(),
        )
        .unwrap();
        let v = verify_decomposition(&d, &VerifyConfig::default());
        assert!(v.pass, "{:#?}", v.failures());
    }

    #[test]
    fn verdict_aggregation() {
        let ok = CheckReport::bound("a", 1, 0.0, 1.0);
        let bad = CheckReport::bound("b", 1, 2.0, 1.0);
        assert!(Verdict::new(vec![ok.clone()]).pass);
        let v = Verdict::new(vec![ok, bad]);
        assert!(!v.pass && v.failures().len() == 1);
        assert!(!CheckReport::bound("nan", 1, f64::NAN, 1.0).pass);
    }
}
