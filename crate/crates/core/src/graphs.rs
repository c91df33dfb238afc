//! Two-colored coincidence graphs.
//!
//! Vertices are indices `v ∈ [q]` of the collections `A_v`; an edge of color
//! `j ∈ {2, 3}` between `v` and `w` records that the vectors chosen from `A_v`
//! and `A_w` agree in coordinate `j`.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use thiserror::Error;

use crate::gridfn::{Grid, GridFunction, Lp, NormEstimate, NormMode, DEFAULT_MAX_CELLS};
use crate::riesz::{collections, make_r_function, scan_blocks, scan_to_layers, HyperbolicVector, RFunction, RieszError, SignRule, TupleGroup};

/// Largest vertex set accepted by the exhaustive enumerations.
pub const MAX_ENUM_VERTICES: usize = 6;

/// Largest vertex set accepted by cycle and clique searches.
pub const MAX_GRAPH_VERTICES: usize = 16;

/// Default cap on `|X(G)|`.
pub const DEFAULT_TUPLE_BUDGET: u64 = 10_000_000;

/// `c` in `#admissible(V) <= c |V|^{2|V|}`, fixed by the two-vertex count `2 / 2^4`.
pub const ADMISSIBLE_COUNT_CONSTANT: f64 = 0.125;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("vertex set is empty")]
    EmptyVertexSet,
    #[error("vertex {0} is listed twice")]
    DuplicateVertex(u32),
    #[error("loop at vertex {0}")]
    Loop(u32),
    #[error("edge endpoint {0} is not a vertex")]
    UnknownVertex(u32),
    #[error("color must be 2 or 3, got {0}")]
    InvalidColor(u8),
    #[error("vertex {vertex} is outside [1, {q}]")]
    VertexOutOfRange { vertex: u32, q: u32 },
    #[error("graph is not connected")]
    NotConnected,
    #[error("graph is not admissible: {0}")]
    NotAdmissible(String),
    #[error("{what} = {value} exceeds the budget {budget}")]
    BudgetExceeded { what: &'static str, value: u64, budget: u64 },
    #[error(transparent)]
    Riesz(#[from] RieszError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    Two,
    Three,
}

impl Color {
    pub fn from_u8(c: u8) -> Result<Self, GraphError> {
        match c {
            2 => Ok(Color::Two),
            3 => Ok(Color::Three),
            _ => Err(GraphError::InvalidColor(c)),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Color::Two => 2,
            Color::Three => 3,
        }
    }

    /// Zero-based coordinate of the hyperbolic vector the color refers to.
    pub fn coordinate(self) -> usize {
        self.as_u8() as usize - 1
    }

    fn bit(self) -> u8 {
        match self {
            Color::Two => 1,
            Color::Three => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub color: Color,
}

/// `G = (V, E_2, E_3)` with undirected, loop-free edges.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TwoColoredGraph {
    vertices: Vec<u32>,
    edges: BTreeSet<Edge>,
}

impl TwoColoredGraph {
    pub fn new(vertices: &[u32], edges: &[(u32, u32, u8)]) -> Result<Self, GraphError> {
        if vertices.is_empty() {
            return Err(GraphError::EmptyVertexSet);
        }
        let mut vs = vertices.to_vec();
        vs.sort_unstable();
        if let Some(w) = vs.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateVertex(w[0]));
        }
        if vs.len() > MAX_GRAPH_VERTICES {
            return Err(GraphError::BudgetExceeded {
                what: "vertices",
                value: vs.len() as u64,
                budget: MAX_GRAPH_VERTICES as u64,
            });
        }
        let mut set = BTreeSet::new();
        for &(a, b, c) in edges {
            let color = Color::from_u8(c)?;
            if a == b {
                return Err(GraphError::Loop(a));
            }
            for x in [a, b] {
                if vs.binary_search(&x).is_err() {
                    return Err(GraphError::UnknownVertex(x));
                }
            }
            set.insert(Edge {
                u: a.min(b),
                v: a.max(b),
                color,
            });
        }
        Ok(Self { vertices: vs, edges: set })
    }

    pub fn vertices(&self) -> &[u32] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn edge_list(&self) -> Vec<(u32, u32, u8)> {
        self.edges.iter().map(|e| (e.u, e.v, e.color.as_u8())).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: u32, b: u32, color: Color) -> bool {
        self.edges.contains(&Edge {
            u: a.min(b),
            v: a.max(b),
            color,
        })
    }

    fn pos(&self, v: u32) -> usize {
        self.vertices.binary_search(&v).expect("vertex of this graph")
    }

    /// Color masks between vertex positions (bit 0: color 2, bit 1: color 3).
    fn masks(&self) -> Vec<Vec<u8>> {
        let m = self.vertices.len();
        let mut out = vec![vec![0u8; m]; m];
        for e in &self.edges {
            let (a, b) = (self.pos(e.u), self.pos(e.v));
            out[a][b] |= e.color.bit();
            out[b][a] |= e.color.bit();
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        let m = self.vertices.len();
        let masks = self.masks();
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for b in 0..m {
                if masks[a][b] != 0 && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Vertex sets of the connected components, in order of smallest vertex.
    pub fn components(&self) -> Vec<Vec<u32>> {
        let m = self.vertices.len();
        let masks = self.masks();
        let mut label = vec![usize::MAX; m];
        let mut out = Vec::new();
        for s in 0..m {
            if label[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = vec![];
            let mut stack = vec![s];
            label[s] = id;
            while let Some(a) = stack.pop() {
                comp.push(self.vertices[a]);
                for b in 0..m {
                    if masks[a][b] != 0 && label[b] == usize::MAX {
                        label[b] = id;
                        stack.push(b);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// The subgraph induced on `vertices`.
    pub fn induced(&self, vertices: &[u32]) -> Result<Self, GraphError> {
        let keep: BTreeSet<u32> = vertices.iter().copied().collect();
        let edges: Vec<(u32, u32, u8)> = self
            .edge_list()
            .into_iter()
            .filter(|(a, b, _)| keep.contains(a) && keep.contains(b))
            .collect();
        Self::new(vertices, &edges)
    }

    /// Disjoint union; fails if the vertex sets overlap.
    pub fn disjoint_union(&self, other: &Self) -> Result<Self, GraphError> {
        let mut vs = self.vertices.clone();
        vs.extend_from_slice(&other.vertices);
        let mut es = self.edge_list();
        es.extend(other.edge_list());
        Self::new(&vs, &es)
    }

    /// Maximal cliques of size at least two in one color.
    pub fn maximal_cliques(&self, color: Color) -> Vec<Vec<u32>> {
        let m = self.vertices.len();
        let masks = self.masks();
        let bit = color.bit();
        let adj: Vec<u32> = (0..m)
            .map(|a| (0..m).filter(|&b| masks[a][b] & bit != 0).fold(0u32, |acc, b| acc | 1 << b))
            .collect();
        let is_clique = |s: u32| (0..m).filter(|&a| s >> a & 1 == 1).all(|a| s & !(1 << a) & !adj[a] == 0);
        let cliques: Vec<u32> = (1u32..1 << m).filter(|s| s.count_ones() >= 2 && is_clique(*s)).collect();
        let mut out: Vec<Vec<u32>> = cliques
            .iter()
            .filter(|&&s| !cliques.iter().any(|&t| t != s && t & s == s))
            .map(|&s| (0..m).filter(|&a| s >> a & 1 == 1).map(|a| self.vertices[a]).collect())
            .collect();
        out.sort();
        out
    }

    pub fn clique_decomposition(&self) -> Option<CliqueDecomposition> {
        if !check_admissible(self).union_of_cliques {
            return None;
        }
        Some(CliqueDecomposition {
            color2: self.maximal_cliques(Color::Two),
            color3: self.maximal_cliques(Color::Three),
        })
    }

    /// Stable textual identifier, e.g. `V1.2.3|2:1-2|3:2-3`.
    pub fn id(&self) -> String {
        let vs: Vec<String> = self.vertices.iter().map(u32::to_string).collect();
        let mut s = format!("V{}", vs.join("."));
        for c in [Color::Two, Color::Three] {
            let es: Vec<String> = self
                .edges
                .iter()
                .filter(|e| e.color == c)
                .map(|e| format!("{}-{}", e.u, e.v))
                .collect();
            s.push_str(&format!("|{}:{}", c.as_u8(), es.join(",")));
        }
        s
    }
}

impl fmt::Display for TwoColoredGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Cliques per color, each of size at least two.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliqueDecomposition {
    pub color2: Vec<Vec<u32>>,
    pub color3: Vec<Vec<u32>>,
}

/// Outcome of the four admissibility conditions, checked independently.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdmissibilityReport {
    /// Every color class is a disjoint union of complete graphs.
    pub union_of_cliques: bool,
    /// Cliques of different colors share at most one vertex.
    pub clique_intersections: bool,
    /// Every vertex lies in some clique.
    pub covered: bool,
    /// Cliques of the same color are disjoint.
    pub same_color_disjoint: bool,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.union_of_cliques && self.clique_intersections && self.covered && self.same_color_disjoint
    }
}

pub fn check_admissible(g: &TwoColoredGraph) -> AdmissibilityReport {
    let c2 = g.maximal_cliques(Color::Two);
    let c3 = g.maximal_cliques(Color::Three);
    let clique_edges = |cs: &[Vec<u32>]| {
        let mut s = BTreeSet::new();
        for c in cs {
            for (i, &a) in c.iter().enumerate() {
                for &b in &c[i + 1..] {
                    s.insert((a, b));
                }
            }
        }
        s
    };
    let edges_of = |color: Color| -> BTreeSet<(u32, u32)> {
        g.edges().filter(|e| e.color == color).map(|e| (e.u, e.v)).collect()
    };
    let disjoint = |cs: &[Vec<u32>]| {
        cs.iter()
            .enumerate()
            .all(|(i, a)| cs[i + 1..].iter().all(|b| !a.iter().any(|v| b.contains(v))))
    };
    let same_color_disjoint = disjoint(&c2) && disjoint(&c3);
    let union_of_cliques = same_color_disjoint
        && clique_edges(&c2) == edges_of(Color::Two)
        && clique_edges(&c3) == edges_of(Color::Three);
    let clique_intersections = c2
        .iter()
        .all(|a| c3.iter().all(|b| a.iter().filter(|v| b.contains(v)).count() <= 1));
    let covered = g
        .vertices()
        .iter()
        .all(|v| c2.iter().chain(&c3).any(|c| c.contains(v)));
    AdmissibilityReport {
        union_of_cliques,
        clique_intersections,
        covered,
        same_color_disjoint,
    }
}

/// An admissible graph with its clique data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdmissibleGraph {
    pub graph: TwoColoredGraph,
    pub cliques: CliqueDecomposition,
}

/// Set partitions of `0..m` as block lists, in restricted-growth order.
fn set_partitions(m: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, m: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == m {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(i);
            rec(i + 1, m, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![i]);
        rec(i + 1, m, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    if m > 0 {
        rec(0, m, &mut Vec::new(), &mut out);
    }
    out
}

/// All admissible graphs on `vertices`.
///
/// Each color class is an equivalence relation whose non-trivial blocks are the
/// cliques, so the graphs correspond to pairs of set partitions.
pub fn enumerate_admissible(vertices: &[u32]) -> Result<Vec<AdmissibleGraph>, GraphError> {
    if vertices.is_empty() {
        return Err(GraphError::EmptyVertexSet);
    }
    if vertices.len() > MAX_ENUM_VERTICES {
        return Err(GraphError::BudgetExceeded {
            what: "vertices",
            value: vertices.len() as u64,
            budget: MAX_ENUM_VERTICES as u64,
        });
    }
    let mut vs = vertices.to_vec();
    vs.sort_unstable();
    TwoColoredGraph::new(&vs, &[])?;
    let m = vs.len();
    let parts: Vec<Vec<Vec<u32>>> = set_partitions(m)
        .into_iter()
        .map(|p| {
            p.into_iter()
                .filter(|b| b.len() >= 2)
                .map(|b| b.into_iter().map(|i| vs[i]).collect())
                .collect()
        })
        .collect();
    let out: Vec<Vec<AdmissibleGraph>> = parts
        .par_iter()
        .map(|p2| {
            let mut local = Vec::new();
            for p3 in &parts {
                let covered = vs.iter().all(|v| p2.iter().chain(p3).any(|c| c.contains(v)));
                let meet_ok = p2
                    .iter()
                    .all(|a| p3.iter().all(|b| a.iter().filter(|v| b.contains(v)).count() <= 1));
                if !(covered && meet_ok) {
                    continue;
                }
                let mut edges = Vec::new();
                for (cs, c) in [(p2, 2u8), (p3, 3u8)] {
                    for q in cs {
                        for (i, &a) in q.iter().enumerate() {
                            for &b in &q[i + 1..] {
                                edges.push((a, b, c));
                            }
                        }
                    }
                }
                let graph = TwoColoredGraph::new(&vs, &edges).expect("vertices validated");
                let mut c2 = p2.clone();
                let mut c3 = p3.clone();
                c2.sort();
                c3.sort();
                local.push(AdmissibleGraph {
                    graph,
                    cliques: CliqueDecomposition { color2: c2, color3: c3 },
                });
            }
            local
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClassTag {
    /// Every cycle is monochromatic (or there is none).
    GeneralizedTree,
    /// Some cycle uses both colors.
    BicoloredCycle,
}

impl ClassTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassTag::GeneralizedTree => "T",
            ClassTag::BicoloredCycle => "C",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphClass {
    pub tag: ClassTag,
    /// Largest number of vertex-disjoint bicolored cycles.
    pub t: usize,
    /// Vertex sets of all bicolored cycles found.
    pub cycles: Vec<Vec<u32>>,
}

/// Vertex sets (as bitmasks) of simple cycles that can use both colors. A
/// pair joined by edges of both colors is such a cycle of length two.
fn bicolored_cycle_sets(g: &TwoColoredGraph) -> BTreeSet<u32> {
    let m = g.vertices().len();
    let masks = g.masks();
    let mut out = BTreeSet::new();
    for a in 0..m {
        for b in a + 1..m {
            if masks[a][b] == 3 {
                out.insert(1 << a | 1 << b);
            }
        }
    }
    // Cycles through their smallest vertex `s`, length at least three.
    fn dfs(s: usize, cur: usize, visited: u32, colors: u8, len: usize, masks: &[Vec<u8>], out: &mut BTreeSet<u32>) {
        let m = masks.len();
        for nxt in s..m {
            let mk = masks[cur][nxt];
            if mk == 0 {
                continue;
            }
            if nxt == s {
                if len >= 3 && colors | mk == 3 {
                    out.insert(visited);
                }
                continue;
            }
            if visited >> nxt & 1 == 1 {
                continue;
            }
            dfs(s, nxt, visited | 1 << nxt, colors | mk, len + 1, masks, out);
        }
    }
    for s in 0..m {
        dfs(s, s, 1 << s, 0, 1, &masks, &mut out);
    }
    out
}

fn max_disjoint(sets: &[u32], used: u32) -> usize {
    let mut best = 0;
    for (i, &s) in sets.iter().enumerate() {
        if s & used == 0 {
            best = best.max(1 + max_disjoint(&sets[i + 1..], used | s));
        }
    }
    best
}

/// Tree/cycle classification of a connected two-colored graph.
pub fn classify(g: &TwoColoredGraph) -> Result<GraphClass, GraphError> {
    if !g.is_connected() {
        return Err(GraphError::NotConnected);
    }
    let sets: Vec<u32> = bicolored_cycle_sets(g).into_iter().collect();
    let t = max_disjoint(&sets, 0);
    let cycles = sets
        .iter()
        .map(|&s| {
            (0..g.vertices().len())
                .filter(|&a| s >> a & 1 == 1)
                .map(|a| g.vertices()[a])
                .collect()
        })
        .collect();
    Ok(GraphClass {
        tag: if t == 0 { ClassTag::GeneralizedTree } else { ClassTag::BicoloredCycle },
        t,
        cycles,
    })
}

/// `|V|^{|V|-2}`, the number of labeled trees on `|V|` vertices.
pub fn labeled_tree_count(v: u32) -> u64 {
    match v {
        0 => 0,
        1 => 1,
        _ => (v as u64).pow(v - 2),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphCounts {
    pub vertices: usize,
    pub admissible: u64,
    pub connected: u64,
    pub generalized_trees: u64,
    pub cycle_class: u64,
    pub labeled_trees: u64,
    /// `2^{|V|} |V|^{|V|-2}`.
    pub tree_bound: u64,
    /// `c |V|^{2|V|}` with [`ADMISSIBLE_COUNT_CONSTANT`].
    pub admissible_bound: f64,
}

impl GraphCounts {
    pub fn tree_bound_holds(&self) -> bool {
        self.generalized_trees <= self.tree_bound
    }

    pub fn admissible_bound_holds(&self) -> bool {
        self.admissible as f64 <= self.admissible_bound
    }
}

/// Counts of admissible, connected and generalized-tree graphs on `{1..v}`.
pub fn count_generalized_trees(v: usize) -> Result<GraphCounts, GraphError> {
    let vs: Vec<u32> = (1..=v as u32).collect();
    let all = enumerate_admissible(&vs)?;
    let mut connected = 0;
    let mut trees = 0;
    for a in &all {
        if a.graph.is_connected() {
            connected += 1;
            if classify(&a.graph)?.tag == ClassTag::GeneralizedTree {
                trees += 1;
            }
        }
    }
    let lt = labeled_tree_count(v as u32);
    Ok(GraphCounts {
        vertices: v,
        admissible: all.len() as u64,
        connected,
        generalized_trees: trees,
        cycle_class: connected - trees,
        labeled_trees: lt,
        tree_bound: (1u64 << v) * lt,
        admissible_bound: ADMISSIBLE_COUNT_CONSTANT * (v as f64).powi(2 * v as i32),
    })
}

/// `X(G)`: tuples `(r_v)_{v ∈ V}` with `r_v ∈ A_v` agreeing along every edge.
#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceSet {
    pub graph: TwoColoredGraph,
    pub n: u32,
    pub q: u32,
    /// `A_v` for each vertex of the graph, in vertex order.
    pub collections: Vec<Vec<HyperbolicVector>>,
    /// Per tuple, the index into each vertex's collection (flattened).
    choices: Vec<u16>,
}

impl CoincidenceSet {
    pub fn len(&self) -> usize {
        self.choices.len() / self.collections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn tuple(&self, i: usize) -> Vec<HyperbolicVector> {
        let k = self.collections.len();
        self.choices[i * k..(i + 1) * k]
            .iter()
            .zip(&self.collections)
            .map(|(&c, col)| col[c as usize])
            .collect()
    }

    pub fn tuples(&self) -> impl Iterator<Item = Vec<HyperbolicVector>> + '_ {
        (0..self.len()).map(|i| self.tuple(i))
    }

    /// The r-functions of all vectors that may occur, and the tuples as indices
    /// into that list.
    fn scan_input(&self, rule: &SignRule) -> Result<(Vec<RFunction>, TupleGroup), GraphError> {
        let mut offsets = Vec::new();
        let mut fns = Vec::new();
        for col in &self.collections {
            offsets.push(fns.len());
            for r in col {
                fns.push(make_r_function(&r.entries(), rule)?);
            }
        }
        let k = self.collections.len();
        let mut group = TupleGroup::new();
        let mut buf = vec![0usize; k];
        for chunk in self.choices.chunks(k) {
            for (j, &c) in chunk.iter().enumerate() {
                buf[j] = offsets[j] + c as usize;
            }
            group.push(&buf);
        }
        Ok((fns, group))
    }
}

pub fn coincidence_set(g: &TwoColoredGraph, n: u32, q: u32) -> Result<CoincidenceSet, GraphError> {
    coincidence_set_with_budget(g, n, q, DEFAULT_TUPLE_BUDGET)
}

pub fn coincidence_set_with_budget(g: &TwoColoredGraph, n: u32, q: u32, budget: u64) -> Result<CoincidenceSet, GraphError> {
    if q == 0 || q > n {
        return Err(RieszError::ParameterDomain(format!("q = {q} must lie in [1, n = {n}]")).into());
    }
    for &v in g.vertices() {
        if v == 0 || v > q {
            return Err(GraphError::VertexOutOfRange { vertex: v, q });
        }
    }
    let all = collections(n, q);
    let cols: Vec<Vec<HyperbolicVector>> = g.vertices().iter().map(|&v| all[v as usize - 1].clone()).collect();
    if cols.iter().any(|c| c.len() > u16::MAX as usize) {
        return Err(GraphError::BudgetExceeded {
            what: "vectors per collection",
            value: cols.iter().map(Vec::len).max().unwrap_or(0) as u64,
            budget: u16::MAX as u64,
        });
    }
    let k = cols.len();
    // Constraints against earlier vertices: (earlier position, coordinate).
    let constraints: Vec<Vec<(usize, usize)>> = (0..k)
        .map(|j| {
            g.edges()
                .filter_map(|e| {
                    let (a, b) = (g.pos(e.u), g.pos(e.v));
                    let (lo, hi) = (a.min(b), a.max(b));
                    (hi == j).then_some((lo, e.color.coordinate()))
                })
                .collect()
        })
        .collect();

    fn extend(
        j: usize,
        chosen: &mut Vec<u16>,
        cols: &[Vec<HyperbolicVector>],
        constraints: &[Vec<(usize, usize)>],
        out: &mut Vec<u16>,
        count: &mut u64,
        budget: u64,
    ) -> bool {
        if j == cols.len() {
            *count += 1;
            if *count > budget {
                return false;
            }
            out.extend_from_slice(chosen);
            return true;
        }
        for (c, r) in cols[j].iter().enumerate() {
            let ok = constraints[j]
                .iter()
                .all(|&(i, t)| cols[i][chosen[i] as usize].get(t) == r.get(t));
            if ok {
                chosen.push(c as u16);
                let cont = extend(j + 1, chosen, cols, constraints, out, count, budget);
                chosen.pop();
                if !cont {
                    return false;
                }
            }
        }
        true
    }

    let parts: Vec<Result<Vec<u16>, u64>> = (0..cols[0].len())
        .into_par_iter()
        .map(|c0| {
            let mut out = Vec::new();
            let mut count = 0u64;
            let mut chosen = vec![c0 as u16];
            if extend(1, &mut chosen, &cols, &constraints, &mut out, &mut count, budget) {
                Ok(out)
            } else {
                Err(count)
            }
        })
        .collect();
    let mut choices = Vec::new();
    for p in parts {
        match p {
            Ok(v) => choices.extend(v),
            Err(c) => {
                return Err(GraphError::BudgetExceeded {
                    what: "coincidence tuples",
                    value: c,
                    budget,
                })
            }
        }
        if (choices.len() / k) as u64 > budget {
            return Err(GraphError::BudgetExceeded {
                what: "coincidence tuples",
                value: (choices.len() / k) as u64,
                budget,
            });
        }
    }
    Ok(CoincidenceSet {
        graph: g.clone(),
        n,
        q,
        collections: cols,
        choices,
    })
}

/// Grid `(n+1, n, n)`: every vector of a collection has a positive first entry.
pub fn coincidence_grid(n: u32, max_cells: u64) -> Result<Grid, GraphError> {
    Ok(Grid::with_budget(&[n + 1, n, n], max_cells).map_err(RieszError::from)?)
}

/// `Prod(X(G)) = Σ_{tuples} f_{r_1} ⋯ f_{r_|V|}` on the grid `(n+1, n, n)`.
pub fn prod_x(x: &CoincidenceSet, rule: &SignRule, max_cells: u64) -> Result<GridFunction<i32>, GraphError> {
    let grid = coincidence_grid(x.n, max_cells)?;
    let (fns, group) = x.scan_input(rule)?;
    let refs: Vec<&RFunction> = fns.iter().collect();
    let mut layers = scan_to_layers(&grid, &refs, &[group])?;
    Ok(layers.pop().expect("one group"))
}

/// `‖Prod(X(G))‖_p` streamed over the grid without materializing it.
pub fn prod_x_norm(x: &CoincidenceSet, rule: &SignRule, p: f64, max_cells: u64) -> Result<NormEstimate, GraphError> {
    let grid = coincidence_grid(x.n, max_cells)?;
    let lp = Lp::Finite(p);
    if !(p >= 1.0) {
        return Err(RieszError::from(crate::gridfn::GridError::InvalidExponent(p)).into());
    }
    let log2_cells = grid.log2_cells();
    let zero = || NormEstimate {
        p: lp,
        value: 0.0,
        mode: NormMode::Exact,
        ci_halfwidth: 0.0,
        sample_count: 0,
        seed: None,
        exact_power: Some(BigRational::from_integer(0.into())),
    };
    if x.is_empty() {
        return Ok(zero());
    }
    let (fns, group) = x.scan_input(rule)?;
    let refs: Vec<&RFunction> = fns.iter().collect();
    let pi = lp.integer();
    let mut float_sum = 0.0f64;
    let mut exact: Option<i128> = pi.map(|_| 0);
    scan_blocks(&grid, &refs, &[group], |_, len, rows| {
        for &v in &rows[0][..len] {
            let a = v.unsigned_abs() as i128;
            float_sum += (a as f64).powf(p);
            if let (Some(acc), Some(k)) = (exact.as_mut(), pi) {
                match a.checked_pow(k).and_then(|w| acc.checked_add(w)) {
                    Some(s) => *acc = s,
                    None => exact = None,
                }
            }
        }
    })?;
    let vol = 0.5f64.powi(log2_cells as i32);
    let exact_power = exact.map(|s| BigRational::new(BigInt::from(s), BigInt::from(1u8) << log2_cells as usize));
    Ok(NormEstimate {
        p: lp,
        value: (float_sum * vol).powf(1.0 / p),
        mode: NormMode::Exact,
        ci_halfwidth: 0.0,
        sample_count: 0,
        seed: None,
        exact_power,
    })
}

/// Both sides of the norm estimate for one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct BeckGainRecord {
    pub graph_id: String,
    pub class: ClassTag,
    pub t: usize,
    pub n: u32,
    pub q: u32,
    pub l: u32,
    pub tuples: u64,
    /// `ρ̃^{|V|} ‖Prod(X(G))‖_{l q^{1/2}}`.
    pub measured: f64,
    /// `M_{|V|,l} l^{-t/2} q^{t/4} n^{-t/2}`.
    pub bound: f64,
    pub ratio: f64,
}

/// `min{l^{3/2} q n^{-1/2}, l^{|V|/2} n^{1-|V|/2}}`.
pub fn beck_m(vertices: usize, l: u32, q: u32, n: u32) -> f64 {
    let (l, q, n, v) = (l as f64, q as f64, n as f64, vertices as f64);
    (l.powf(1.5) * q / n.sqrt()).min(l.powf(v / 2.0) * n.powf(1.0 - v / 2.0))
}

/// `ρ̃ = a q^b / n`.
pub fn rho_tilde(n: u32, q: u32, a: f64, b: f64) -> f64 {
    a * (q as f64).powf(b) / n as f64
}

#[allow(clippy::too_many_arguments)]
pub fn verify_beckgain(
    g: &TwoColoredGraph,
    n: u32,
    q: u32,
    l: u32,
    a: f64,
    b: f64,
    rule: &SignRule,
    max_cells: u64,
) -> Result<BeckGainRecord, GraphError> {
    if l == 0 || l > q {
        return Err(RieszError::ParameterDomain(format!("l = {l} must lie in [1, q = {q}]")).into());
    }
    if !(b < 0.25) {
        return Err(RieszError::ParameterDomain(format!("b = {b} must be < 1/4")).into());
    }
    let class = classify(g)?;
    let x = coincidence_set(g, n, q)?;
    let p = l as f64 * (q as f64).sqrt();
    let norm = prod_x_norm(&x, rule, p, max_cells)?;
    let v = g.vertices().len();
    let measured = rho_tilde(n, q, a, b).powi(v as i32) * norm.value;
    let t = class.t as f64;
    let (lf, qf, nf) = (l as f64, q as f64, n as f64);
    let bound = beck_m(v, l, q, n) * lf.powf(-t / 2.0) * qf.powf(t / 4.0) * nf.powf(-t / 2.0);
    Ok(BeckGainRecord {
        graph_id: g.id(),
        class: class.tag,
        t: class.t,
        n,
        q,
        l,
        tuples: x.len() as u64,
        measured,
        bound,
        ratio: measured / bound,
    })
}

/// [`verify_beckgain`] with the default cell budget.
pub fn verify_beckgain_default(
    g: &TwoColoredGraph,
    n: u32,
    q: u32,
    l: u32,
    a: f64,
    b: f64,
    rule: &SignRule,
) -> Result<BeckGainRecord, GraphError> {
    verify_beckgain(g, n, q, l, a, b, rule, DEFAULT_MAX_CELLS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(vs: &[u32], es: &[(u32, u32, u8)]) -> TwoColoredGraph {
        TwoColoredGraph::new(vs, es).unwrap()
    }

    #[test]
    fn construction_errors() {
        assert_eq!(TwoColoredGraph::new(&[], &[]), Err(GraphError::EmptyVertexSet));
        assert_eq!(TwoColoredGraph::new(&[1], &[(1, 1, 2)]), Err(GraphError::Loop(1)));
        assert_eq!(TwoColoredGraph::new(&[1, 2], &[(1, 2, 4)]), Err(GraphError::InvalidColor(4)));
        assert_eq!(TwoColoredGraph::new(&[1, 2], &[(1, 3, 2)]), Err(GraphError::UnknownVertex(3)));
        let a = g(&[2, 1], &[(2, 1, 3)]);
        assert_eq!(a.id(), "V1.2|2:|3:1-2");
    }

    #[test]
    fn small_enumerations() {
        assert_eq!(enumerate_admissible(&[1]).unwrap().len(), 0);
        let two = enumerate_admissible(&[1, 2]).unwrap();
        assert_eq!(two.len(), 2);
        for a in &two {
            assert!(check_admissible(&a.graph).is_admissible());
        }
        let double = g(&[1, 2], &[(1, 2, 2), (1, 2, 3)]);
        let rep = check_admissible(&double);
        assert!(!rep.clique_intersections && rep.covered);
        let bad = g(&[1, 2, 3], &[(1, 2, 2), (2, 3, 2)]);
        assert!(!check_admissible(&bad).union_of_cliques);
        assert!(!check_admissible(&g(&[1, 2, 3], &[(1, 2, 2)])).covered);
    }

    #[test]
    fn classification_examples() {
        let path = g(&[1, 2, 3], &[(1, 2, 2), (2, 3, 3)]);
        assert_eq!(classify(&path).unwrap().tag, ClassTag::GeneralizedTree);
        let tri = g(&[1, 2, 3], &[(1, 2, 2), (2, 3, 2), (1, 3, 2)]);
        assert_eq!(classify(&tri).unwrap().t, 0);
        let double = g(&[1, 2], &[(1, 2, 2), (1, 2, 3)]);
        let c = classify(&double).unwrap();
        assert_eq!((c.tag, c.t), (ClassTag::BicoloredCycle, 1));
        let square = g(&[1, 2, 3, 4], &[(1, 2, 2), (2, 3, 3), (3, 4, 2), (1, 4, 3)]);
        assert!(check_admissible(&square).is_admissible());
        assert_eq!(classify(&square).unwrap().t, 1);
        let apart = g(&[1, 2, 3], &[(1, 2, 2)]);
        assert_eq!(classify(&apart), Err(GraphError::NotConnected));
    }

    #[test]
    fn count_examples() {
        let c2 = count_generalized_trees(2).unwrap();
        assert_eq!((c2.generalized_trees, c2.tree_bound), (2, 4));
        assert_eq!(labeled_tree_count(4), 16);
        assert_eq!(labeled_tree_count(3), 3);
        let c3 = count_generalized_trees(3).unwrap();
        assert_eq!(c3.generalized_trees, 8);
    }

    #[test]
    fn coincidence_examples() {
        let double = g(&[1, 2], &[(1, 2, 2), (1, 2, 3)]);
        assert!(coincidence_set(&double, 6, 2).unwrap().is_empty());
        let single = g(&[2], &[]);
        let x = coincidence_set(&single, 6, 2).unwrap();
        assert_eq!(x.len(), collections(6, 2)[1].len());
        let g0 = g(&[1, 2, 3], &[(1, 2, 2), (2, 3, 3)]);
        let x = coincidence_set(&g0, 6, 3).unwrap();
        assert!(!x.is_empty());
        for t in x.tuples() {
            assert_eq!(t[0].get(1), t[1].get(1));
            assert_eq!(t[1].get(2), t[2].get(2));
        }
        assert!(matches!(
            coincidence_set(&g(&[3], &[]), 6, 2),
            Err(GraphError::VertexOutOfRange { vertex: 3, q: 2 })
        ));
        assert!(matches!(
            coincidence_set_with_budget(&g0, 6, 3, 2),
            Err(GraphError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn prod_x_single_vertex_has_mean_zero() {
        let x = coincidence_set(&g(&[1], &[]), 4, 2).unwrap();
        let f = prod_x(&x, &SignRule::AllPlus, DEFAULT_MAX_CELLS).unwrap();
        assert_eq!(f.integral(), BigRational::from_integer(0.into()));
        let norm = prod_x_norm(&x, &SignRule::AllPlus, 2.0, DEFAULT_MAX_CELLS).unwrap();
        assert_eq!(norm.exact_power, Some(f.power_integral(2)));
    }
}
