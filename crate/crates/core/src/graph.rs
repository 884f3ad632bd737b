//! Cube adjacency graphs, Welsh–Powell colouring and the `α_s` detector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SosError};
use crate::whitney::Partition;

/// Above this many vertices the `α_s` search refuses to run.
pub const ALPHA_MAX_VERTICES: usize = 2000;

/// Simple undirected graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CubeGraph {
    adj: Vec<Vec<usize>>,
}

impl CubeGraph {
    pub fn empty(vertices: usize) -> Self {
        CubeGraph {
            adj: vec![Vec::new(); vertices],
        }
    }

    /// Builds a graph from an edge list; loops and repeats are ignored.
    pub fn from_edges(vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = CubeGraph::empty(vertices);
        for &(a, b) in edges {
            if a >= vertices || b >= vertices {
                return Err(SosError::InvalidInput(format!(
                    "edge ({a}, {b}) out of range"
                )));
            }
            if a != b {
                g.adj[a].push(b);
                g.adj[b].push(a);
            }
        }
        for l in &mut g.adj {
            l.sort_unstable();
            l.dedup();
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, l)| l.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Vertices by decreasing degree, ties by ascending id.
    pub fn degree_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&v| (std::cmp::Reverse(self.degree(v)), v));
        order
    }
}

/// Edge iff the closed cubes of the partition intersect.
pub fn adjacency_graph(p: &Partition) -> CubeGraph {
    let adj: Vec<Vec<usize>> = (0..p.len())
        .into_par_iter()
        .map(|j| p.touching(j))
        .collect();
    CubeGraph { adj }
}

/// Colour index per vertex, 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    pub colors: Vec<usize>,
    pub classes: usize,
}

impl Coloring {
    pub fn is_valid(&self, g: &CubeGraph) -> bool {
        self.colors.len() == g.len()
            && g.edges()
                .iter()
                .all(|&(a, b)| self.colors[a] != self.colors[b])
    }

    /// Vertices of each class, in ascending id order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.classes];
        for (v, &c) in self.colors.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

/// First-fit colouring along [`CubeGraph::degree_order`]. Class `T_i` is
/// exactly what the repeated maximal-independent-set sweep would produce.
pub fn welsh_powell_color(g: &CubeGraph) -> Coloring {
    let mut colors = vec![usize::MAX; g.len()];
    let mut classes = 0;
    let mut used = Vec::new();
    for v in g.degree_order() {
        used.clear();
        used.extend(
            g.neighbors(v)
                .iter()
                .map(|&u| colors[u])
                .filter(|&c| c != usize::MAX),
        );
        used.sort_unstable();
        used.dedup();
        let c = used
            .iter()
            .enumerate()
            .find(|(i, &c)| *i != c)
            .map_or(used.len(), |(i, _)| i);
        colors[v] = c;
        classes = classes.max(c + 1);
    }
    Coloring { colors, classes }
}

/// `max_i min(deg v_i + 1, i)` over vertices sorted by decreasing degree.
pub fn welsh_powell_bound(g: &CubeGraph) -> usize {
    g.degree_order()
        .iter()
        .enumerate()
        .map(|(i, &v)| (g.degree(v) + 1).min(i + 1))
        .max()
        .unwrap_or(0)
}

/// `1 + max_v #{neighbours u of v with deg u ≥ deg v}`.
pub fn heavier_neighbor_bound(g: &CubeGraph) -> usize {
    if g.is_empty() {
        return 0;
    }
    1 + (0..g.len())
        .map(|v| {
            g.neighbors(v)
                .iter()
                .filter(|&&u| g.degree(u) >= g.degree(v))
                .count()
        })
        .max()
        .unwrap_or(0)
}

/// Witness of the `α_s` structure: `v`, the ordered `w_1..w_s`, and for each
/// non-adjacent pair `i < j` (0-based) the vertex `z` serving it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaWitness {
    pub v: usize,
    pub ws: Vec<usize>,
    pub zs: Vec<(usize, usize, usize)>,
}

/// Checks a claimed witness against the definition.
pub fn check_alpha_witness(g: &CubeGraph, s: usize, w: &AlphaWitness) -> bool {
    let n = g.len();
    if w.ws.len() != s || w.v >= n || w.ws.iter().any(|&x| x >= n) {
        return false;
    }
    let mut all = w.ws.clone();
    all.push(w.v);
    all.sort_unstable();
    if all.windows(2).any(|p| p[0] == p[1]) {
        return false;
    }
    let dv = g.degree(w.v);
    if w.ws
        .iter()
        .any(|&x| !g.has_edge(w.v, x) || g.degree(x) < dv)
    {
        return false;
    }
    for j in 0..s {
        for i in 0..j {
            let (wi, wj) = (w.ws[i], w.ws[j]);
            if g.has_edge(wi, wj) {
                continue;
            }
            let Some(&(_, _, z)) = w.zs.iter().find(|t| t.0 == i && t.1 == j) else {
                return false;
            };
            if z >= n || all.binary_search(&z).is_ok() {
                return false;
            }
            if g.degree(z) < g.degree(wj) || g.has_edge(wi, z) || !g.has_edge(wj, z) {
                return false;
            }
        }
    }
    true
}

struct AlphaSearch<'a> {
    g: &'a CubeGraph,
    s: usize,
    v: usize,
    cands: Vec<usize>,
    ws: Vec<usize>,
}

impl AlphaSearch<'_> {
    fn find_z(&self, wi: usize, wj: usize) -> Option<usize> {
        let dj = self.g.degree(wj);
        self.g.neighbors(wj).iter().copied().find(|&z| {
            z != self.v
                && !self.ws.contains(&z)
                && self.g.degree(z) >= dj
                && !self.g.has_edge(wi, z)
        })
    }

    fn zs(&self) -> Option<Vec<(usize, usize, usize)>> {
        let mut out = Vec::new();
        for j in 0..self.ws.len() {
            for i in 0..j {
                if !self.g.has_edge(self.ws[i], self.ws[j]) {
                    out.push((i, j, self.find_z(self.ws[i], self.ws[j])?));
                }
            }
        }
        Some(out)
    }

    fn extend(&mut self) -> Option<AlphaWitness> {
        if self.ws.len() == self.s {
            // z must avoid the full tuple, so pairs are re-served at the end
            return self.zs().map(|zs| AlphaWitness {
                v: self.v,
                ws: self.ws.clone(),
                zs,
            });
        }
        for k in 0..self.cands.len() {
            let w = self.cands[k];
            if self.ws.contains(&w) {
                continue;
            }
            let ok = self
                .ws
                .iter()
                .all(|&wi| self.g.has_edge(wi, w) || self.find_z(wi, w).is_some());
            if !ok {
                continue;
            }
            self.ws.push(w);
            if let Some(found) = self.extend() {
                return Some(found);
            }
            self.ws.pop();
        }
        None
    }
}

/// Exhaustive search for the `α_s` structure, with the first witness in
/// ascending `v` order.
pub fn alpha_s_structure_present(g: &CubeGraph, s: usize) -> Result<Option<AlphaWitness>> {
    if s == 0 {
        return Err(SosError::InvalidInput("s must be at least 1".into()));
    }
    if g.len() > ALPHA_MAX_VERTICES {
        return Err(SosError::InvalidInput(format!(
            "alpha_s search limited to {ALPHA_MAX_VERTICES} vertices, graph has {}",
            g.len()
        )));
    }
    let found: Vec<Option<AlphaWitness>> = (0..g.len())
        .into_par_iter()
        .map(|v| {
            let dv = g.degree(v);
            let cands: Vec<usize> = g
                .neighbors(v)
                .iter()
                .copied()
                .filter(|&u| g.degree(u) >= dv)
                .collect();
            if cands.len() < s {
                return None;
            }
            AlphaSearch {
                g,
                s,
                v,
                cands,
                ws: Vec::with_capacity(s),
            }
            .extend()
        })
        .collect();
    Ok(found.into_iter().flatten().next())
}

/// Pass iff the maximum degree is at most `4^n − 2^n`.
pub fn degree_certificate(g: &CubeGraph, n: usize) -> bool {
    let bound = 4usize.pow(n as u32) - 2usize.pow(n as u32);
    g.max_degree() <= bound
}

/// JSON form `{"edges": [[i, j], ..], "colors": [c_0, ..]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphDoc {
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub colors: Vec<usize>,
}

impl GraphDoc {
    pub fn new(g: &CubeGraph, c: Option<&Coloring>) -> Self {
        GraphDoc {
            edges: g.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            colors: c.map(|c| c.colors.clone()).unwrap_or_default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::BoxDomain;
    use crate::whitney::build_partition;

    fn g(n: usize, e: &[(usize, usize)]) -> CubeGraph {
        CubeGraph::from_edges(n, e).unwrap()
    }

    // r ≡ 4 and ν = 0.8/side put the size threshold in [1/side, 2/side)
    fn grid_partition(side: usize) -> Partition {
        let p = build_partition(
            &|_: &[f64]| 4.0,
            &BoxDomain::cube(2, 0.0, 1.0),
            0.8 / side as f64,
            1.25,
            10,
            0.0,
        )
        .unwrap();
        assert_eq!(p.len(), side * side);
        p
    }

    fn grid(side: usize) -> CubeGraph {
        adjacency_graph(&grid_partition(side))
    }

    #[test]
    fn adjacency_examples() {
        let p = grid_partition(4);
        let gr = adjacency_graph(&p);
        let v = p.find(2, &[1, 1]).unwrap();
        assert_eq!(gr.degree(v), 8);
        assert_eq!(gr.max_degree(), 8);
        assert!(degree_certificate(&gr, 2));
        let one = build_partition(
            &|_: &[f64]| 4.0,
            &BoxDomain::cube(1, 0.0, 1.0),
            1.0,
            1.25,
            10,
            0.0,
        )
        .unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(adjacency_graph(&one).edge_count(), 0);
        let two = build_partition(
            &|_: &[f64]| 4.0,
            &BoxDomain::cube(1, 0.0, 1.0),
            0.5,
            1.25,
            10,
            0.0,
        )
        .unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(adjacency_graph(&two).edge_count(), 1);
    }

    #[test]
    fn line_degree_certificate() {
        let p = build_partition(
            &|_: &[f64]| 1.0,
            &BoxDomain::cube(1, 0.0, 1.0),
            0.05,
            1.25,
            10,
            0.0,
        )
        .unwrap();
        let gr = adjacency_graph(&p);
        assert_eq!(gr.max_degree(), 2);
        assert!(degree_certificate(&gr, 1));
    }

    #[test]
    fn coloring_examples() {
        let tri = g(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(welsh_powell_color(&tri).classes, 3);
        let path = g(3, &[(0, 1), (1, 2)]);
        let c = welsh_powell_color(&path);
        assert_eq!(c.classes, 2);
        assert!(c.is_valid(&path));
        let gr = grid(8);
        let c = welsh_powell_color(&gr);
        assert!(c.is_valid(&gr) && c.classes <= 9 && c.classes <= welsh_powell_bound(&gr));
    }

    #[test]
    fn heavier_neighbor_examples() {
        let star = g(4, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(heavier_neighbor_bound(&star), 2);
        assert!(welsh_powell_color(&star).classes <= 2);
        let tri = g(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(heavier_neighbor_bound(&tri), 3);
        assert_eq!(heavier_neighbor_bound(&g(0, &[])), 0);
    }

    #[test]
    fn alpha_examples() {
        let star = g(4, &[(0, 1), (0, 2), (0, 3)]);
        let w = alpha_s_structure_present(&star, 1).unwrap().unwrap();
        assert_eq!((w.v, w.ws.clone()), (1, vec![0]));
        assert!(check_alpha_witness(&star, 1, &w));
        assert!(alpha_s_structure_present(&g(2, &[(0, 1)]), 2)
            .unwrap()
            .is_none());
        let tri = g(3, &[(0, 1), (1, 2), (0, 2)]);
        let w = alpha_s_structure_present(&tri, 2).unwrap().unwrap();
        assert!(check_alpha_witness(&tri, 2, &w) && w.zs.is_empty());
        assert!(alpha_s_structure_present(&tri, 0).is_err());
    }

    #[test]
    fn witness_checker_rejects_tampering() {
        let tri = g(3, &[(0, 1), (1, 2), (0, 2)]);
        let bad = AlphaWitness {
            v: 0,
            ws: vec![1, 1],
            zs: vec![],
        };
        assert!(!check_alpha_witness(&tri, 2, &bad));
    }

    #[test]
    fn json_shape() {
        let path = g(3, &[(0, 1), (1, 2)]);
        let c = welsh_powell_color(&path);
        let s = serde_json::to_string(&GraphDoc::new(&path, Some(&c))).unwrap();
        assert_eq!(s, r#"{"edges":[[0,1],[1,2]],"colors":[1,0,1]}"#);
    }
}
