//! Sum-of-squares decomposition driver.
//!
//! Every kept cube `Q_j` contributes `ψ_j² f`. On a root cube this is the
//! square of `ψ_j √f`. On a minimum cube `f` is written in a rotated frame
//! `u = Rᵀ(x − c)` whose last axis is the top Hessian direction, as
//! `f̃(u) = F(u') + (u_n − X(u'))² H(u)` with `X` the fibre minimizer and
//! `H = ∫₀¹ (1−s) ∂²_n f̃(u', X + s(u_n − X)) ds`; the square
//! `(ψ_j (u_n − X) √H)²` is emitted and the cut-off remainder `F` is
//! decomposed one dimension down. In one dimension `F` is the constant
//! `f(X)`. Pieces of non-touching cubes share a class.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{check_needed_condition, control_from_jet, fit_omega, top_eigen, top_even};
use crate::error::{Result, SosError};
use crate::field::{hessian, Backend, Field, FieldRef, SmoothnessClass};
use crate::graph::{adjacency_graph, welsh_powell_color, CubeGraph};
use crate::jet::{linear_map, Jet};
use crate::sampling::BoxDomain;
use crate::whitney::{build_partition_capped, BumpSpec, Partition, MAX_CUBES};

const GL_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];
const CACHE_LIMIT: usize = 200_000;
const SCAN_T: usize = 17;
const SCAN_U: usize = 5;

/// 8-point Gauss–Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre() -> [(f64, f64); 8] {
    let mut out = [(0.0, 0.0); 8];
    for i in 0..4 {
        out[2 * i] = (0.5 * (1.0 - GL_X[i]), 0.5 * GL_W[i]);
        out[2 * i + 1] = (0.5 * (1.0 + GL_X[i]), 0.5 * GL_W[i]);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeConfig {
    pub nu: f64,
    pub lambda: f64,
    /// Fixed `ω`; fitted per level when absent.
    pub omega: Option<f64>,
    pub max_level: u32,
    /// Defaults to `1e-6 · diameter`.
    pub delta_cut: Option<f64>,
    pub omega_samples: usize,
    pub inner_omega_samples: usize,
    pub inner_max_cubes: usize,
    pub nonneg_samples: usize,
    pub gate_samples: usize,
    /// Turn minimizer failures into errors instead of root fallbacks.
    pub strict_minimizer: bool,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            nu: 0.05,
            lambda: 1.25,
            omega: None,
            max_level: 20,
            delta_cut: None,
            omega_samples: 256,
            inner_omega_samples: 32,
            inner_max_cubes: 20_000,
            nonneg_samples: 1000,
            gate_samples: 200,
            strict_minimizer: false,
        }
    }
}

impl DecomposeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 1.0 && self.lambda < 1.5) {
            return Err(SosError::InvalidInput(format!(
                "lambda = {} outside (1, 3/2)",
                self.lambda
            )));
        }
        if !(self.nu > 0.0 && self.nu < 4.0) {
            return Err(SosError::InvalidInput(format!(
                "nu = {} outside (0, 4)",
                self.nu
            )));
        }
        if let Some(w) = self.omega {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(SosError::InvalidInput(format!(
                    "omega = {w} must be finite and non-negative"
                )));
            }
        }
        if let Some(d) = self.delta_cut {
            if !(d >= 0.0) {
                return Err(SosError::InvalidInput(format!(
                    "delta_cut = {d} must be non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn delta_cut_for(&self, b: &BoxDomain) -> f64 {
        self.delta_cut.unwrap_or(1e-6 * b.diameter())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchTag {
    Root,
    Min,
    Recursive,
}

/// `Root` iff `f(center) ≥ ω ν r_Q^{k+α}`.
pub fn classify_cube(f: &dyn Field, center: &[f64], r_q: f64, omega: f64, nu: f64) -> BranchTag {
    let tot = f.smoothness().total();
    if f.eval(center) >= omega * nu * r_q.powf(tot) {
        BranchTag::Root
    } else {
        BranchTag::Min
    }
}

/// Orthogonal matrix whose last column is the top unit eigenvector `ξ` of
/// the Hessian, with `ξ_n ≥ 0` (first non-zero entry positive on ties).
pub fn principal_direction(f: &dyn Field, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = f.dim();
    let h = hessian(&f.jet(x, 2));
    let (top, mut xi, low) = top_eigen(&h);
    if !(top > 0.0) {
        return Err(SosError::InvalidInput(format!(
            "top Hessian eigenvalue {top} is not positive"
        )));
    }
    if n >= 2 && (top - low) <= 1e-12 * top.abs() {
        xi = vec![0.0; n];
        xi[n - 1] = 1.0;
    }
    let lead = if xi[n - 1].abs() > 1e-15 {
        xi[n - 1]
    } else {
        xi.iter().copied().find(|v| v.abs() > 1e-15).unwrap_or(1.0)
    };
    if lead < 0.0 {
        xi.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(rotation_with_last(&xi))
}

fn rotation_with_last(xi: &[f64]) -> Vec<Vec<f64>> {
    let n = xi.len();
    match n {
        1 => vec![vec![1.0]],
        2 => vec![vec![xi[1], xi[0]], vec![-xi[0], xi[1]]],
        _ => {
            // Gram–Schmidt on the coordinate axes, most transverse first
            let mut axes: Vec<usize> = (0..n).collect();
            axes.sort_by(|&a, &b| {
                xi[a]
                    .abs()
                    .partial_cmp(&xi[b].abs())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let mut cols: Vec<Vec<f64>> = vec![xi.to_vec()];
            for &a in &axes {
                if cols.len() == n {
                    break;
                }
                let mut v = vec![0.0; n];
                v[a] = 1.0;
                for c in &cols {
                    let d: f64 = v.iter().zip(c).map(|(p, q)| p * q).sum();
                    v.iter_mut().zip(c).for_each(|(p, q)| *p -= d * q);
                }
                let norm = v.iter().map(|p| p * p).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    v.iter_mut().for_each(|p| *p /= norm);
                    cols.push(v);
                }
            }
            let mut ordered: Vec<Vec<f64>> = cols[1..].to_vec();
            ordered.push(cols[0].clone());
            let mut r = vec![vec![0.0; n]; n];
            for (j, c) in ordered.iter().enumerate() {
                for i in 0..n {
                    r[i][j] = c[i];
                }
            }
            r
        }
    }
}

/// Fibre minimizer `X(u')` in a rotated frame around a cube centre.
pub struct MinMap {
    f: FieldRef,
    center: Vec<f64>,
    rot: Vec<Vec<f64>>,
    xi: Vec<f64>,
    t_lo: f64,
    t_hi: f64,
    /// Half-extents of the projected dilate in the `u'` coordinates.
    pub a: Vec<f64>,
    cache: Mutex<HashMap<Vec<u64>, f64>>,
    misses: AtomicUsize,
}

impl MinMap {
    /// Builds the map with an explicit rotation and search window `[t_lo, t_hi]`.
    pub fn with_rotation(
        f: FieldRef,
        center: Vec<f64>,
        rot: Vec<Vec<f64>>,
        t_lo: f64,
        t_hi: f64,
        a: Vec<f64>,
    ) -> Self {
        let n = center.len();
        let xi = (0..n).map(|i| rot[i][n - 1]).collect();
        MinMap {
            f,
            center,
            rot,
            xi,
            t_lo,
            t_hi,
            a,
            cache: Mutex::new(HashMap::new()),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn n(&self) -> usize {
        self.center.len()
    }

    pub fn rotation(&self) -> &[Vec<f64>] {
        &self.rot
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn window(&self) -> (f64, f64) {
        (self.t_lo, self.t_hi)
    }

    /// Evaluations whose window had no sign change.
    pub fn bracket_failures(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn to_x(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| self.center[i] + (0..n).map(|j| self.rot[i][j] * u[j]).sum::<f64>())
            .collect()
    }

    pub fn to_u(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|j| {
                (0..n)
                    .map(|i| self.rot[i][j] * (x[i] - self.center[i]))
                    .sum()
            })
            .collect()
    }

    fn point(&self, up: &[f64], t: f64) -> Vec<f64> {
        let mut u = up.to_vec();
        u.push(t);
        self.to_x(&u)
    }

    /// `(∂_n f̃, ∂²_n f̃)` at `(u', t)`.
    pub fn fibre_derivatives(&self, up: &[f64], t: f64) -> (f64, f64) {
        let c = self.f.line_taylor(&self.point(up, t), &self.xi, 2);
        (c[1], 2.0 * c[2])
    }

    pub fn tilde_value(&self, up: &[f64], t: f64) -> f64 {
        self.f.eval(&self.point(up, t))
    }

    /// The zero of `t ↦ ∂_n f̃(u', t)` in the window, by safeguarded Newton.
    pub fn minimizer(&self, up: &[f64]) -> f64 {
        let key: Vec<u64> = up.iter().map(|v| v.to_bits()).collect();
        if let Some(&x) = self.cache.lock().unwrap().get(&key) {
            return x;
        }
        let x = self.solve(up);
        let mut c = self.cache.lock().unwrap();
        if c.len() >= CACHE_LIMIT {
            c.clear();
        }
        c.insert(key, x);
        x
    }

    fn solve(&self, up: &[f64]) -> f64 {
        let (mut a, mut b) = (self.t_lo, self.t_hi);
        let (pa, _) = self.fibre_derivatives(up, a);
        let (pb, _) = self.fibre_derivatives(up, b);
        if pa >= 0.0 || pb <= 0.0 {
            self.misses.fetch_add(1, Ordering::Relaxed);
            if pa >= 0.0 && pb >= 0.0 {
                return a;
            }
            if pa <= 0.0 && pb <= 0.0 {
                return b;
            }
        }
        let width = b - a;
        let mut t = 0.0f64.clamp(a, b);
        for _ in 0..200 {
            let (p, dp) = self.fibre_derivatives(up, t);
            if p == 0.0 {
                return t;
            }
            if p < 0.0 {
                a = t;
            } else {
                b = t;
            }
            let newton = t - p / dp;
            let next = if dp > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if (next - t).abs() <= 1e-15 * (t.abs() + width) || b - a <= 1e-15 * width {
                return next;
            }
            t = next;
        }
        t
    }

    /// Jet of `f̃` in the `u` variables at the frame point `u0`.
    fn tilde_jet(&self, u0: &[f64], order: usize) -> Jet {
        let x0 = self.to_x(u0);
        let inner = linear_map(order, &x0, &self.rot);
        self.f.jet(&x0, order).compose(&inner)
    }

    /// `X` as a jet in the `u'` variables, by Newton iteration on jets.
    pub fn minimizer_jet(&self, up: &[f64], order: usize) -> Jet {
        let m = up.len();
        let n = self.n();
        let x0 = self.minimizer(up);
        let mut x = Jet::constant(m, order, x0);
        if order == 0 {
            return x;
        }
        let mut p0 = up.to_vec();
        p0.push(x0);
        let big = self.tilde_jet(&p0, order + 2);
        let phi = big.diff(n - 1);
        let dphi = phi.diff(n - 1);
        let vars: Vec<Jet> = (0..m).map(|i| Jet::variable(m, order, i, up[i])).collect();
        let mut steps = 1;
        while (1 << steps) <= order + 1 {
            steps += 1;
        }
        for _ in 0..=steps {
            let mut inner = vars.clone();
            inner.push(x.clone());
            let num = phi.compose(&inner);
            let den = dphi.compose(&inner);
            let mut corr = num.div(&den);
            // keep the solved value; only the Taylor tail is refined
            corr.coeffs_mut()[0] = 0.0;
            x = x.sub(&corr);
        }
        x
    }

    /// Jet of the remainder `F(u') = f̃(u', X(u'))` in the `u'` variables.
    pub fn remainder_jet(&self, up: &[f64], order: usize) -> Jet {
        let m = up.len();
        let x = self.minimizer_jet(up, order);
        let mut p0 = up.to_vec();
        p0.push(x.value());
        if order == 0 {
            return Jet::constant(m, 0, self.tilde_value(up, x.value()));
        }
        let t = self.tilde_jet(&p0, order);
        let mut inner: Vec<Jet> = (0..m).map(|i| Jet::variable(m, order, i, up[i])).collect();
        inner.push(x);
        t.compose(&inner)
    }

    /// `H(u) = ∫₀¹ (1−s) ∂²_n f̃(u', X + s(u_n − X)) ds`.
    pub fn h_value(&self, up: &[f64], un: f64) -> f64 {
        let x = self.minimizer(up);
        gauss_legendre()
            .iter()
            .map(|&(s, w)| w * (1.0 - s) * self.fibre_derivatives(up, x + s * (un - x)).1)
            .sum()
    }

    /// `(u_n − X(u')) √H(u)` at `x`.
    pub fn min_piece(&self, x: &[f64]) -> f64 {
        let u = self.to_u(x);
        let n = u.len();
        let up = &u[..n - 1];
        (u[n - 1] - self.minimizer(up)) * self.h_value(up, u[n - 1]).max(0.0).sqrt()
    }

    /// Jets in the `x` variables of `u` and of `X(u'(x))`.
    fn frame_jets(&self, x: &[f64], order: usize) -> (Vec<Jet>, Jet) {
        let n = self.n();
        let u0 = self.to_u(x);
        let rt: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|i| self.rot[i][j]).collect())
            .collect();
        let u = linear_map(order, &u0, &rt);
        let xm = self.minimizer_jet(&u0[..n - 1], order);
        let xj = if n == 1 {
            Jet::constant(1, order, xm.value())
        } else {
            xm.compose(&u[..n - 1])
        };
        (u, xj)
    }

    pub fn min_piece_jet(&self, x: &[f64], order: usize) -> Jet {
        if order == 0 {
            return Jet::constant(self.n(), 0, self.min_piece(x));
        }
        let n = self.n();
        let (u, xj) = self.frame_jets(x, order);
        let diff = u[n - 1].sub(&xj);
        let mut h = Jet::zeros(n, order);
        for (s, w) in gauss_legendre() {
            let arg = xj.add(&diff.scale(s));
            let mut p = u.clone();
            p[n - 1] = arg;
            let pv: Vec<f64> = p.iter().map(Jet::value).collect();
            let d2 = self.tilde_jet(&pv, order + 2).diff(n - 1).diff(n - 1);
            h.axpy(w * (1.0 - s), &d2.compose(&p));
        }
        if h.value() <= 0.0 {
            return diff.scale(0.0);
        }
        diff.mul(&h.sqrt())
    }

    /// Maps `x` to the `u'` coordinates and their jets.
    fn projection_jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let n = self.n();
        let u0 = self.to_u(x);
        let rt: Vec<Vec<f64>> = (0..n - 1)
            .map(|j| (0..n).map(|i| self.rot[i][j]).collect())
            .collect();
        linear_map(order, &u0[..n - 1], &rt)
    }
}

/// Cut-off remainder `ψ_ext(u') F(u')`, equal to `F` on `[−3a/2, 3a/2]` and
/// zero outside `[−2a, 2a]`.
pub struct Remainder {
    map: Arc<MinMap>,
    smooth: SmoothnessClass,
}

const EXT_BUMP: BumpSpec = BumpSpec { lambda: 4.0 / 3.0 };

impl Remainder {
    pub fn new(map: Arc<MinMap>, k: usize, alpha: f64) -> Self {
        let smooth = SmoothnessClass {
            n: map.n() - 1,
            k,
            alpha,
        };
        Remainder { map, smooth }
    }

    fn cutoff(&self, up: &[f64], order: usize) -> Jet {
        let m = up.len();
        let mut acc = Jet::constant(m, order, 1.0);
        for (i, (&v, &a)) in up.iter().zip(&self.map.a).enumerate() {
            let g = EXT_BUMP.phi_taylor(v / (3.0 * a), order);
            acc = acc.mul(&Jet::from_univariate(m, order, i, &g, 1.0 / (3.0 * a)));
        }
        acc
    }
}

impl Field for Remainder {
    fn smoothness(&self) -> SmoothnessClass {
        self.smooth
    }

    fn backend(&self) -> Backend {
        Backend::EvaluationTree
    }

    fn jet(&self, x: &[f64], order: usize) -> Jet {
        let cut = self.cutoff(x, order);
        if cut.coeffs().iter().all(|c| *c == 0.0) {
            return cut;
        }
        cut.mul(&self.map.remainder_jet(x, order))
    }
}

/// Why a minimum cube fell back to the root square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    FlatHessian,
    WindowClipped,
    NotConvex,
    NoSignChange,
    InnerTooLarge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Slot {
    Main,
    Const,
    Inner(usize),
}

impl Slot {
    pub fn index(&self) -> usize {
        match self {
            Slot::Main => 0,
            Slot::Const => 1,
            Slot::Inner(c) => 1 + c,
        }
    }
}

pub enum CubeBranch {
    Root {
        fallback: Option<Fallback>,
    },
    Min {
        map: Arc<MinMap>,
        constant: Option<f64>,
        inner: Option<Box<Level>>,
    },
}

pub struct CubePlan {
    pub branch: CubeBranch,
    /// `(slot, class)` for each emitted piece.
    pub pieces: Vec<(Slot, usize)>,
}

impl CubePlan {
    pub fn tag(&self) -> BranchTag {
        match self.branch {
            CubeBranch::Root { .. } => BranchTag::Root,
            CubeBranch::Min { .. } => BranchTag::Min,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DepthStats {
    pub depth: usize,
    pub levels: usize,
    pub cubes: usize,
    pub root: usize,
    pub min: usize,
    pub fallback: BTreeMap<String, usize>,
    pub inner_skipped: usize,
    pub max_colors: usize,
    pub max_classes: usize,
    pub uncovered_volume: f64,
    pub dropped_volume: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

struct Ctx<'a> {
    cfg: &'a DecomposeConfig,
    depth: usize,
    plateau: Option<BoxDomain>,
    fmax: f64,
    cap: usize,
}

/// One level of the construction in some dimension.
pub struct Level {
    pub f: FieldRef,
    pub domain: BoxDomain,
    pub depth: usize,
    pub omega: f64,
    pub partition: Partition,
    pub graph: CubeGraph,
    pub colors: Vec<usize>,
    pub chromatic: usize,
    pub plans: Vec<CubePlan>,
    pub classes: usize,
}

fn fallback_or_err(
    cfg: &DecomposeConfig,
    why: Fallback,
    cube: usize,
    depth: usize,
) -> Result<CubeBranch> {
    if cfg.strict_minimizer {
        Err(SosError::Minimizer { cube, depth })
    } else {
        Ok(CubeBranch::Root {
            fallback: Some(why),
        })
    }
}

impl Level {
    fn build(f: FieldRef, domain: BoxDomain, ctx: &Ctx) -> Result<Level> {
        let s = f.smoothness();
        let cfg = ctx.cfg;
        let order = top_even(s.k);
        let r = |x: &[f64]| control_from_jet(&f.jet(x, order), s.k, s.alpha);
        let omega = match cfg.omega {
            Some(w) => w,
            None => {
                let samples = if ctx.depth == 0 {
                    cfg.omega_samples
                } else {
                    cfg.inner_omega_samples
                };
                let w = fit_omega(f.as_ref(), &r, &domain, cfg.nu, samples);
                if w.is_finite() {
                    w
                } else {
                    0.0
                }
            }
        };
        let delta = cfg.delta_cut_for(&domain);
        let partition = build_partition_capped(
            &r,
            &domain,
            cfg.nu,
            cfg.lambda,
            cfg.max_level,
            delta,
            ctx.cap,
        )?;
        let graph = adjacency_graph(&partition);
        let coloring = welsh_powell_color(&graph);
        let branches: Vec<Result<CubeBranch>> = (0..partition.len())
            .into_par_iter()
            .map(|j| Level::plan_cube(&f, &partition, j, omega, ctx))
            .collect();
        let branches: Vec<CubeBranch> = branches.into_iter().collect::<Result<_>>()?;
        let mut level = Level {
            f,
            domain,
            depth: ctx.depth,
            omega,
            partition,
            graph,
            colors: coloring.colors,
            chromatic: coloring.classes,
            plans: branches
                .into_iter()
                .map(|b| CubePlan {
                    branch: b,
                    pieces: vec![],
                })
                .collect(),
            classes: 0,
        };
        level.assign_classes();
        Ok(level)
    }

    fn plan_cube(
        f: &FieldRef,
        p: &Partition,
        j: usize,
        omega: f64,
        ctx: &Ctx,
    ) -> Result<CubeBranch> {
        let cfg = ctx.cfg;
        let n = p.n;
        let cube = p.cube(j);
        let center = cube.center();
        let r_q = p.cubes[j].r_q;
        if classify_cube(f.as_ref(), &center, r_q, omega, cfg.nu) == BranchTag::Root {
            return Ok(CubeBranch::Root { fallback: None });
        }
        let s = f.smoothness();
        let rot = match principal_direction(f.as_ref(), &center) {
            Ok(r) => r,
            Err(_) => return fallback_or_err(cfg, Fallback::FlatHessian, j, ctx.depth),
        };
        let side = cube.side();
        let half = 0.5 * cfg.lambda * side;
        let extent = |col: usize| half * (0..n).map(|i| rot[i][col].abs()).sum::<f64>();
        let e = extent(n - 1);
        let a: Vec<f64> = (0..n - 1).map(extent).collect();
        let w = (6.0 * omega * cfg.nu).sqrt() * r_q;
        let w_eff = w.max(e * (1.0 + 1e-9));
        let (mut t_lo, mut t_hi) = (-w_eff, w_eff);
        if let Some(pl) = &ctx.plateau {
            for i in 0..n {
                let xi = rot[i][n - 1];
                if xi.abs() < 1e-15 {
                    continue;
                }
                let (l, h) = ((pl.lo[i] - center[i]) / xi, (pl.hi[i] - center[i]) / xi);
                t_lo = t_lo.max(l.min(h));
                t_hi = t_hi.min(l.max(h));
            }
            if t_lo > -e || t_hi < e {
                return fallback_or_err(cfg, Fallback::WindowClipped, j, ctx.depth);
            }
        }
        let map = Arc::new(MinMap::with_rotation(
            f.clone(),
            center,
            rot,
            t_lo,
            t_hi,
            a.clone(),
        ));
        // convexity and sign change over the doubled projected cube
        let ugrid: Vec<Vec<f64>> = if n == 1 {
            vec![vec![]]
        } else {
            let b = BoxDomain::new(
                a.iter().map(|v| -2.0 * v).collect(),
                a.iter().map(|v| 2.0 * v).collect(),
            );
            b.grid(SCAN_U)
        };
        for up in &ugrid {
            for i in 0..SCAN_T {
                let t = t_lo + (t_hi - t_lo) * i as f64 / (SCAN_T - 1) as f64;
                if !(map.fibre_derivatives(up, t).1 > 0.0) {
                    return fallback_or_err(cfg, Fallback::NotConvex, j, ctx.depth);
                }
            }
            if !(map.fibre_derivatives(up, t_lo).0 < 0.0 && map.fibre_derivatives(up, t_hi).0 > 0.0)
            {
                return fallback_or_err(cfg, Fallback::NoSignChange, j, ctx.depth);
            }
        }
        let tiny = 1e-13 * (1.0 + ctx.fmax);
        if n == 1 {
            let x = map.minimizer(&[]);
            let fx = map.tilde_value(&[], x);
            return Ok(CubeBranch::Min {
                map,
                constant: (fx > tiny).then_some(fx),
                inner: None,
            });
        }
        let rem: FieldRef = Arc::new(Remainder::new(map.clone(), s.k, s.alpha));
        let inner_box = BoxDomain::new(a.iter().map(|v| -v).collect(), a.clone());
        let probe = inner_box.grid(9);
        let fmax_rem = probe.iter().map(|u| rem.eval(u)).fold(0.0, f64::max);
        if fmax_rem <= 0.1 * tiny {
            return Ok(CubeBranch::Min {
                map,
                constant: None,
                inner: None,
            });
        }
        let plateau = BoxDomain::new(
            a.iter().map(|v| -1.5 * v).collect(),
            a.iter().map(|v| 1.5 * v).collect(),
        );
        let sub = Ctx {
            cfg,
            depth: ctx.depth + 1,
            plateau: Some(plateau),
            fmax: ctx.fmax,
            cap: cfg.inner_max_cubes,
        };
        match Level::build(rem, inner_box, &sub) {
            Ok(level) => Ok(CubeBranch::Min {
                map,
                constant: None,
                inner: Some(Box::new(level)),
            }),
            Err(SosError::TooManyCubes(_)) => {
                fallback_or_err(cfg, Fallback::InnerTooLarge, j, ctx.depth)
            }
            Err(e) => Err(e),
        }
    }

    /// First-fit classes over `(slot, colour, cube)`-ordered pieces; pieces of
    /// the same or touching cubes never share a class.
    fn assign_classes(&mut self) {
        let mut pieces: Vec<(usize, usize, usize, Slot)> = Vec::new();
        for (j, plan) in self.plans.iter().enumerate() {
            let slots: Vec<Slot> = match &plan.branch {
                CubeBranch::Root { .. } => vec![Slot::Main],
                CubeBranch::Min {
                    constant, inner, ..
                } => {
                    let mut v = vec![Slot::Main];
                    if constant.is_some() {
                        v.push(Slot::Const);
                    }
                    if let Some(l) = inner {
                        v.extend((0..l.classes).map(Slot::Inner));
                    }
                    v
                }
            };
            for s in slots {
                pieces.push((s.index(), self.colors[j], j, s));
            }
        }
        pieces.sort();
        let mut taken: Vec<Vec<usize>> = vec![Vec::new(); self.plans.len()];
        let mut classes = 0;
        let mut used = Vec::new();
        for (_, _, j, slot) in pieces {
            used.clear();
            used.extend_from_slice(&taken[j]);
            for &nb in self.graph.neighbors(j) {
                used.extend_from_slice(&taken[nb]);
            }
            used.sort_unstable();
            used.dedup();
            let c = used
                .iter()
                .enumerate()
                .find(|(i, &c)| *i != c)
                .map_or(used.len(), |(i, _)| i);
            taken[j].push(c);
            self.plans[j].pieces.push((slot, c));
            classes = classes.max(c + 1);
        }
        self.classes = classes;
    }

    /// Values of every class at `x`.
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.classes];
        for (j, psi) in self.partition.psi_values(x) {
            let plan = &self.plans[j];
            match &plan.branch {
                CubeBranch::Root { .. } => {
                    out[plan.pieces[0].1] += psi * self.f.eval(x).max(0.0).sqrt();
                }
                CubeBranch::Min {
                    map,
                    constant,
                    inner,
                } => {
                    let inner_vals = inner
                        .as_ref()
                        .map(|l| l.values(&map.to_u(x)[..map.n() - 1]));
                    for &(slot, c) in &plan.pieces {
                        out[c] += psi
                            * match slot {
                                Slot::Main => map.min_piece(x),
                                Slot::Const => constant.unwrap_or(0.0).sqrt(),
                                Slot::Inner(i) => inner_vals.as_ref().map_or(0.0, |v| v[i]),
                            };
                    }
                }
            }
        }
        out
    }

    /// Jets of every class at `x`.
    pub fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        let n = self.partition.n;
        let mut out = vec![Jet::zeros(n, order); self.classes];
        for (j, psi) in self.partition.psi_jets(x, order) {
            let plan = &self.plans[j];
            match &plan.branch {
                CubeBranch::Root { .. } => {
                    let fj = self.f.jet(x, order);
                    let root = if fj.value() > 0.0 {
                        fj.sqrt()
                    } else {
                        Jet::zeros(n, order)
                    };
                    out[plan.pieces[0].1].add_assign(&psi.mul(&root));
                }
                CubeBranch::Min {
                    map,
                    constant,
                    inner,
                } => {
                    let inner_jets = inner.as_ref().map(|l| {
                        let proj = map.projection_jets(x, order);
                        let up: Vec<f64> = proj.iter().map(Jet::value).collect();
                        l.jets(&up, order)
                            .into_iter()
                            .map(|g| g.compose(&proj))
                            .collect::<Vec<_>>()
                    });
                    for &(slot, c) in &plan.pieces {
                        let piece = match slot {
                            Slot::Main => map.min_piece_jet(x, order),
                            Slot::Const => Jet::constant(n, order, constant.unwrap_or(0.0).sqrt()),
                            Slot::Inner(i) => inner_jets
                                .as_ref()
                                .map_or(Jet::zeros(n, order), |v| v[i].clone()),
                        };
                        out[c].add_assign(&psi.mul(&piece));
                    }
                }
            }
        }
        out
    }

    fn collect_stats(&self, stats: &mut Vec<DepthStats>) {
        if stats.len() <= self.depth {
            stats.resize_with(self.depth + 1, DepthStats::default);
        }
        let st = &mut stats[self.depth];
        st.depth = self.depth;
        st.omega_min = if st.levels == 0 {
            self.omega
        } else {
            st.omega_min.min(self.omega)
        };
        st.omega_max = st.omega_max.max(self.omega);
        st.levels += 1;
        st.cubes += self.plans.len();
        st.max_colors = st.max_colors.max(self.chromatic);
        st.max_classes = st.max_classes.max(self.classes);
        st.uncovered_volume += self.partition.uncovered_volume;
        st.dropped_volume += self.partition.dropped_volume;
        let mut inners = Vec::new();
        for p in &self.plans {
            match &p.branch {
                CubeBranch::Root { fallback: None } => st.root += 1,
                CubeBranch::Root {
                    fallback: Some(why),
                } => {
                    st.root += 1;
                    let key = serde_json::to_value(why)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default();
                    *st.fallback.entry(key).or_default() += 1;
                }
                CubeBranch::Min { inner, .. } => {
                    st.min += 1;
                    match inner {
                        Some(l) => inners.push(l),
                        None if self.partition.n > 1 => st.inner_skipped += 1,
                        None => {}
                    }
                }
            }
        }
        for l in inners {
            l.collect_stats(stats);
        }
    }

    /// Jet of the unweighted main piece of cube `j`: `√f` or `(u_n − X)√H`.
    pub fn main_piece_jet(&self, j: usize, x: &[f64], order: usize) -> Jet {
        match &self.plans[j].branch {
            CubeBranch::Root { .. } => {
                let fj = self.f.jet(x, order);
                if fj.value() > 0.0 {
                    fj.sqrt()
                } else {
                    Jet::zeros(self.partition.n, order)
                }
            }
            CubeBranch::Min { map, .. } => map.min_piece_jet(x, order),
        }
    }

    /// Pairs of distinct cubes at `x` (at any depth) whose pieces share a class.
    pub fn class_conflicts(&self, x: &[f64]) -> usize {
        let act = self.partition.active(x);
        let mut seen: Vec<(usize, usize)> = Vec::new();
        let mut bad = 0;
        for &j in &act {
            for &(_, c) in &self.plans[j].pieces {
                bad += seen.iter().filter(|(i, d)| *d == c && *i != j).count();
                seen.push((j, c));
            }
            if let CubeBranch::Min {
                map,
                inner: Some(l),
                ..
            } = &self.plans[j].branch
            {
                bad += l.class_conflicts(&map.to_u(x)[..map.n() - 1]);
            }
        }
        bad
    }

    /// Every minimum-branch map of this level, with its cube index.
    pub fn min_maps(&self) -> Vec<(usize, Arc<MinMap>)> {
        self.plans
            .iter()
            .enumerate()
            .filter_map(|(j, p)| match &p.branch {
                CubeBranch::Min { map, .. } => Some((j, map.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn inner_levels(&self) -> Vec<(usize, &Level)> {
        self.plans
            .iter()
            .enumerate()
            .filter_map(|(j, p)| match &p.branch {
                CubeBranch::Min { inner: Some(l), .. } => Some((j, l.as_ref())),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermRef {
    pub cube: usize,
    pub branch: BranchTag,
    pub depth: usize,
    pub slot: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_class: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassDoc {
    pub color: usize,
    pub terms: Vec<TermRef>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub class_count: usize,
    pub class_budget: usize,
    pub chromatic: usize,
    pub cubes: usize,
    pub omega: f64,
    pub delta_cut: f64,
    pub fmax: f64,
    pub uncovered_volume: f64,
    pub dropped_volume: f64,
    pub depths: Vec<DepthStats>,
    pub sqrt_only: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    #[serde(rename = "box")]
    pub domain: BoxDomain,
    pub config: DecomposeConfig,
    pub classes: Vec<ClassDoc>,
    pub diagnostics: Diagnostics,
}

/// `f = Σ g_c²` on the covered part of a box.
pub struct Decomposition {
    pub f: FieldRef,
    pub domain: BoxDomain,
    pub config: DecomposeConfig,
    pub top: Option<Level>,
    pub diagnostics: Diagnostics,
}

impl Decomposition {
    pub fn n(&self) -> usize {
        self.f.dim()
    }

    pub fn smoothness(&self) -> SmoothnessClass {
        self.f.smoothness()
    }

    pub fn class_count(&self) -> usize {
        match &self.top {
            Some(l) => l.classes,
            None => 1,
        }
    }

    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        match &self.top {
            Some(l) => l.values(x),
            None => vec![self.f.eval(x).max(0.0).sqrt()],
        }
    }

    pub fn jets(&self, x: &[f64], order: usize) -> Vec<Jet> {
        match &self.top {
            Some(l) => l.jets(x, order),
            None => {
                let fj = self.f.jet(x, order);
                vec![if fj.value() > 0.0 {
                    fj.sqrt()
                } else {
                    Jet::zeros(self.n(), order)
                }]
            }
        }
    }

    pub fn sum_of_squares(&self, x: &[f64]) -> f64 {
        self.values(x).iter().map(|g| g * g).sum()
    }

    pub fn term(&self, class: usize) -> SquareTerm<'_> {
        SquareTerm { dec: self, class }
    }

    pub fn terms(&self) -> Vec<SquareTerm<'_>> {
        (0..self.class_count()).map(|c| self.term(c)).collect()
    }

    /// `true` when `x` lies in an undilated cube, so the squares sum to `f`.
    pub fn covered(&self, x: &[f64]) -> bool {
        match &self.top {
            Some(l) => l.partition.covered(x),
            None => true,
        }
    }

    pub fn manifest(&self) -> Manifest {
        let s = self.smoothness();
        let mut classes: Vec<ClassDoc> = (0..self.class_count())
            .map(|c| ClassDoc {
                color: c,
                terms: vec![],
            })
            .collect();
        if let Some(top) = &self.top {
            for (j, plan) in top.plans.iter().enumerate() {
                for &(slot, c) in &plan.pieces {
                    let (branch, depth, inner_class) = match (&plan.branch, slot) {
                        (CubeBranch::Root { .. }, _) => (BranchTag::Root, 0, None),
                        (CubeBranch::Min { .. }, Slot::Inner(i)) => {
                            (BranchTag::Recursive, 1, Some(i))
                        }
                        (CubeBranch::Min { .. }, _) => (BranchTag::Min, 0, None),
                    };
                    classes[c].terms.push(TermRef {
                        cube: j,
                        branch,
                        depth,
                        slot: slot.index(),
                        inner_class,
                    });
                }
            }
        } else {
            classes[0].terms.push(TermRef {
                cube: 0,
                branch: BranchTag::Root,
                depth: 0,
                slot: 0,
                inner_class: None,
            });
        }
        Manifest {
            n: s.n,
            k: s.k,
            alpha: s.alpha,
            domain: self.domain.clone(),
            config: self.config.clone(),
            classes,
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// CSV rows `x_1,…,x_n,g_1,…,g_s`.
    pub fn sample_csv(&self, points: &[Vec<f64>]) -> String {
        let n = self.n();
        let mut out: Vec<String> = vec![(0..n)
            .map(|i| format!("x{}", i + 1))
            .chain((0..self.class_count()).map(|c| format!("g{}", c + 1)))
            .collect::<Vec<_>>()
            .join(",")];
        let rows: Vec<String> = points
            .par_iter()
            .map(|p| {
                p.iter()
                    .copied()
                    .chain(self.values(p))
                    .map(|v| format!("{v:e}"))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        out.extend(rows);
        out.join("\n") + "\n"
    }
}

/// One final square `g_c`, a sum of disjointly supported pieces.
#[derive(Clone, Copy)]
pub struct SquareTerm<'a> {
    dec: &'a Decomposition,
    pub class: usize,
}

impl SquareTerm<'_> {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.dec.values(x)[self.class]
    }

    pub fn jet(&self, x: &[f64], order: usize) -> Jet {
        self.dec.jets(x, order).swap_remove(self.class)
    }

    /// Cube indices of the top-level pieces in this class.
    pub fn cubes(&self) -> Vec<usize> {
        match &self.dec.top {
            Some(l) => (0..l.plans.len())
                .filter(|&j| l.plans[j].pieces.iter().any(|p| p.1 == self.class))
                .collect(),
            None => vec![],
        }
    }
}

/// A field as a `Field` of its own square root, with half the smoothness.
pub struct SqrtField {
    f: FieldRef,
}

impl SqrtField {
    pub fn new(f: FieldRef) -> Self {
        SqrtField { f }
    }
}

impl Field for SqrtField {
    fn smoothness(&self) -> SmoothnessClass {
        let s = self.f.smoothness();
        SmoothnessClass {
            n: s.n,
            k: 0,
            alpha: (s.k as f64 + s.alpha) / 2.0,
        }
    }

    fn backend(&self) -> Backend {
        Backend::EvaluationTree
    }

    fn jet(&self, x: &[f64], order: usize) -> Jet {
        let fj = self.f.jet(x, order);
        if fj.value() > 0.0 {
            fj.sqrt()
        } else {
            Jet::zeros(self.f.dim(), order)
        }
    }
}

/// Single-term decomposition `f = (√f)²` for `k = 1`.
pub fn sqrt_field(f: FieldRef, domain: &BoxDomain, samples: usize) -> Result<FieldRef> {
    if f.smoothness().k != 1 {
        return Err(SosError::InvalidInput("sqrt_field needs k = 1".into()));
    }
    spot_check_nonnegative(f.as_ref(), domain, samples)?;
    Ok(Arc::new(SqrtField::new(f)))
}

/// Rejects `f` if it is negative beyond rounding at any Halton sample.
pub fn spot_check_nonnegative(f: &dyn Field, domain: &BoxDomain, samples: usize) -> Result<()> {
    let mut pts = domain.halton_points(samples, 1);
    pts.extend(domain.grid(3));
    let bad = pts
        .par_iter()
        .map(|x| (x, f.eval(x)))
        .find_any(|(_, v)| *v < -1e-12 * (1.0 + v.abs()) || v.is_nan());
    match bad {
        Some((x, v)) => Err(SosError::Negative {
            point: x.clone(),
            value: v,
        }),
        None => Ok(()),
    }
}

pub fn decompose(
    f: FieldRef,
    domain: &BoxDomain,
    config: &DecomposeConfig,
) -> Result<Decomposition> {
    config.validate()?;
    if !domain.is_valid() {
        return Err(SosError::InvalidInput("empty or malformed box".into()));
    }
    let s = f.smoothness();
    if domain.dim() != s.n {
        return Err(SosError::InvalidInput(format!(
            "box has dimension {}, field has {}",
            domain.dim(),
            s.n
        )));
    }
    if !(1..=3).contains(&s.n) {
        return Err(SosError::InvalidInput(format!(
            "dimension {} not supported (1 to 3)",
            s.n
        )));
    }
    spot_check_nonnegative(f.as_ref(), domain, config.nonneg_samples)?;
    let delta = config.delta_cut_for(domain);
    if s.k == 1 {
        return Ok(Decomposition {
            f,
            domain: domain.clone(),
            config: config.clone(),
            top: None,
            diagnostics: Diagnostics {
                class_count: 1,
                class_budget: 1,
                delta_cut: delta,
                sqrt_only: true,
                ..Default::default()
            },
        });
    }
    if s.k >= 4 {
        if s.n != 2 {
            return Err(SosError::InvalidInput(format!(
                "k = {} is supported only for n = 2",
                s.k
            )));
        }
        if !check_needed_condition(f.as_ref(), domain, config.gate_samples) {
            return Err(SosError::GateFailed { k: s.k });
        }
    }
    let fmax = domain
        .halton_points(config.nonneg_samples, 2)
        .iter()
        .map(|x| f.eval(x))
        .fold(0.0, f64::max);
    let ctx = Ctx {
        cfg: config,
        depth: 0,
        plateau: None,
        fmax,
        cap: MAX_CUBES,
    };
    let top = Level::build(f.clone(), domain.clone(), &ctx)?;
    let mut depths = Vec::new();
    top.collect_stats(&mut depths);
    let diagnostics = Diagnostics {
        class_count: top.classes,
        class_budget: class_budget(s.n, top.chromatic),
        chromatic: top.chromatic,
        cubes: top.plans.len(),
        omega: top.omega,
        delta_cut: delta,
        fmax,
        uncovered_volume: top.partition.uncovered_volume,
        dropped_volume: top.partition.dropped_volume,
        depths,
        sqrt_only: false,
    };
    Ok(Decomposition {
        f,
        domain: domain.clone(),
        config: config.clone(),
        top: Some(top),
        diagnostics,
    })
}

/// `χ·(s_{n−1} + 1)` with the constructive one-dimensional count.
pub fn class_budget(n: usize, chromatic: usize) -> usize {
    let graph_bound = if n == 2 {
        9
    } else {
        4usize.pow(n as u32) - 2usize.pow(n as u32)
    };
    let chi = chromatic.max(1).min(graph_bound);
    match n {
        1 => 2 * chi,
        _ => chi * (crate::bounds::constructive_budget(n - 1) + 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::polynomial_field;
    use num_rational::BigRational;

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

    #[test]
    fn classification_examples() {
        let one = poly(1, 2, &[(&[0], 1)]);
        assert_eq!(
            classify_cube(one.as_ref(), &[0.3], 1.0, 1.0, 0.05),
            BranchTag::Root
        );
        let sq = poly(1, 2, &[(&[2], 1)]);
        assert_eq!(
            classify_cube(sq.as_ref(), &[0.0], 2.0, 1.0, 0.05),
            BranchTag::Min
        );
        // r = |x|^{2/3} far out, so the threshold grows like x²·ων
        let r = 1e6f64.powf(2.0 / 3.0);
        assert_eq!(
            classify_cube(sq.as_ref(), &[1e6], r, 1.0, 0.05),
            BranchTag::Root
        );
    }

    #[test]
    fn principal_direction_examples() {
        let y2 = poly(2, 2, &[(&[0, 2], 1)]);
        assert_eq!(
            principal_direction(y2.as_ref(), &[0.3, 0.2]).unwrap(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        let x2 = poly(2, 2, &[(&[2, 0], 1)]);
        let r = principal_direction(x2.as_ref(), &[0.3, 0.2]).unwrap();
        assert_eq!((r[0][1], r[1][1]), (1.0, 0.0));
        assert_eq!((r[0][0], r[1][0]), (0.0, -1.0));
        // (x+y)²/2 = x²/2 + xy + y²/2
        let d = Arc::new(
            polynomial_field(
                [
                    (vec![2, 0], BigRational::new(1.into(), 2.into())),
                    (vec![1, 1], BigRational::from_integer(1.into())),
                    (vec![0, 2], BigRational::new(1.into(), 2.into())),
                ],
                SmoothnessClass::new(2, 2, 1.0).unwrap(),
            )
            .unwrap(),
        );
        let r = principal_direction(d.as_ref(), &[0.0, 0.0]).unwrap();
        let h = 0.5f64.sqrt();
        assert!((r[0][1] - h).abs() < 1e-14 && (r[1][1] - h).abs() < 1e-14);
        let neg = poly(2, 2, &[(&[2, 0], -1)]);
        assert!(principal_direction(neg.as_ref(), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn rotation_in_three_dimensions_is_orthogonal() {
        let xi = [0.48, -0.6, 0.64];
        let r = rotation_with_last(&xi);
        for a in 0..3 {
            assert!((r[a][2] - xi[a]).abs() < 1e-15);
            for b in 0..3 {
                let d: f64 = (0..3).map(|i| r[i][a] * r[i][b]).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    fn identity_map(f: FieldRef) -> MinMap {
        MinMap::with_rotation(
            f,
            vec![0.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            -1.0,
            1.0,
            vec![0.5],
        )
    }

    #[test]
    fn minimizer_examples() {
        // (y − x²)² = y² − 2x²y + x⁴
        let f = poly(2, 3, &[(&[0, 2], 1), (&[2, 1], -2), (&[4, 0], 1)]);
        let m = identity_map(f);
        assert!((m.minimizer(&[0.5]) - 0.25).abs() < 1e-14);
        assert!(m
            .remainder_jet(&[0.5], 2)
            .coeffs()
            .iter()
            .all(|c| c.abs() < 1e-13));
        // X = x² so X' = 2x and X'' / 2 = 1
        let xj = m.minimizer_jet(&[0.5], 3);
        assert!((xj.coeff(&[1]) - 1.0).abs() < 1e-12 && (xj.coeff(&[2]) - 1.0).abs() < 1e-12);
        assert!(xj.coeff(&[3]).abs() < 1e-12);
        let y2 = identity_map(poly(2, 2, &[(&[0, 2], 1)]));
        assert_eq!(y2.minimizer(&[0.3]), 0.0);
        let shifted = MinMap::with_rotation(
            poly(2, 2, &[(&[0, 2], 1), (&[0, 1], -2), (&[0, 0], 1)]),
            vec![0.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            -0.5,
            2.0,
            vec![0.5],
        );
        assert!((shifted.minimizer(&[0.1]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn remainder_examples() {
        // y² + x²: F = x² on the plateau
        let m = Arc::new(identity_map(poly(2, 2, &[(&[0, 2], 1), (&[2, 0], 1)])));
        let rem = Remainder::new(m.clone(), 2, 1.0);
        for u in [-0.7, -0.2, 0.0, 0.4, 0.75] {
            assert!((rem.eval(&[u]) - u * u).abs() < 1e-15);
            let j = rem.jet(&[u], 2);
            assert!((j.coeff(&[1]) - 2.0 * u).abs() < 1e-13 && (j.coeff(&[2]) - 1.0).abs() < 1e-13);
        }
        assert_eq!(rem.eval(&[1.0]), 0.0);
        assert!(rem.eval(&[0.9]) < 0.81 && rem.eval(&[0.9]) > 0.0);
        let one = Remainder::new(
            Arc::new(identity_map(poly(2, 2, &[(&[0, 2], 1), (&[0, 0], 1)]))),
            2,
            1.0,
        );
        assert!((one.eval(&[0.3]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn min_piece_factorization() {
        let f = poly(
            2,
            3,
            &[(&[0, 2], 1), (&[2, 1], -2), (&[4, 0], 1), (&[2, 0], 1)],
        );
        let m = identity_map(f.clone());
        for x in [[0.3, 0.5], [-0.4, -0.2], [0.1, 0.0]] {
            let g = m.min_piece(&x);
            let fr = m.remainder_jet(&x[..1], 0).value();
            assert!((g * g + fr - f.eval(&x)).abs() < 1e-14);
            let gj = m.min_piece_jet(&x, 1);
            let h = 1e-6;
            let fd = (m.min_piece(&[x[0], x[1] + h]) - m.min_piece(&[x[0], x[1] - h])) / (2.0 * h);
            assert!((gj.coeff(&[0, 1]) - fd).abs() < 1e-7);
            let fdx = (m.min_piece(&[x[0] + h, x[1]]) - m.min_piece(&[x[0] - h, x[1]])) / (2.0 * h);
            assert!((gj.coeff(&[1, 0]) - fdx).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_function_gives_empty_decomposition() {
        let z = poly(2, 2, &[]);
        let d = decompose(
            z,
            &BoxDomain::cube(2, -1.0, 1.0),
            &DecomposeConfig::default(),
        )
        .unwrap();
        assert_eq!(d.class_count(), 0);
        assert_eq!(d.sum_of_squares(&[0.2, 0.1]), 0.0);
    }

    #[test]
    fn square_on_the_line() {
        let f = poly(1, 2, &[(&[2], 1)]);
        let b = BoxDomain::cube(1, -10.0, 10.0);
        let d = decompose(f.clone(), &b, &DecomposeConfig::default()).unwrap();
        assert!(d.class_count() <= 4, "{}", d.class_count());
        let mut worst: f64 = 0.0;
        for i in 0..=2000 {
            let x = [-10.0 + 20.0 * i as f64 / 2000.0];
            worst = worst.max((d.sum_of_squares(&x) - f.eval(&x)).abs());
        }
        assert!(worst <= 1e-8 * 101.0, "{worst}");
        assert!(d.diagnostics.depths[0].min > 0);
    }

    #[test]
    fn negative_input_rejected() {
        let f = poly(1, 2, &[(&[2], 1), (&[0], -1)]);
        assert!(matches!(
            decompose(
                f,
                &BoxDomain::cube(1, -1.0, 1.0),
                &DecomposeConfig::default()
            ),
            Err(SosError::Negative { .. })
        ));
    }

    #[test]
    fn bad_config_and_gate() {
        let f = poly(1, 2, &[(&[2], 1)]);
        let cfg = DecomposeConfig {
            lambda: 1.6,
            ..Default::default()
        };
        assert!(decompose(f.clone(), &BoxDomain::cube(1, -1.0, 1.0), &cfg).is_err());
        let q = poly(2, 4, &[(&[4, 0], 1), (&[0, 4], 1)]);
        assert!(matches!(
            decompose(
                q,
                &BoxDomain::cube(2, -1.0, 1.0),
                &DecomposeConfig::default()
            ),
            Err(SosError::GateFailed { k: 4 })
        ));
        let q1 = poly(1, 4, &[(&[4], 1)]);
        assert!(decompose(
            q1,
            &BoxDomain::cube(1, -1.0, 1.0),
            &DecomposeConfig::default()
        )
        .is_err());
    }

    #[test]
    fn k1_is_a_single_root() {
        let f = poly(2, 1, &[(&[2, 0], 1), (&[0, 2], 1)]);
        let d = decompose(
            f,
            &BoxDomain::cube(2, -1.0, 1.0),
            &DecomposeConfig::default(),
        )
        .unwrap();
        assert_eq!(d.class_count(), 1);
        assert!((d.values(&[0.3, 0.4])[0] - 0.5).abs() < 1e-15);
    }
}
