//! Global repair of scored edge sets.
//!
//! Temporal cycles are broken with the greedy feedback-arc-set ordering of
//! Eades, Lin and Smyth, weighted by edge confidence. The surviving edges of
//! each kind are then transitively reduced.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{find_cycle, EdgeKind, EventId, SchemaGraph};

#[derive(Debug, Error, PartialEq)]
pub enum FinalizeError {
    #[error("ordering is not a permutation of the graph's vertices")]
    NotAPermutation,
    #[error("graph has a cycle through {0}")]
    Cycle(String),
}

/// Small weighted digraph with deterministic iteration order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph<N: Ord> {
    nodes: BTreeSet<N>,
    edges: BTreeMap<(N, N), f64>,
}

impl<N: Ord> Default for WeightedDigraph<N> {
    fn default() -> Self {
        WeightedDigraph {
            nodes: BTreeSet::new(),
            edges: BTreeMap::new(),
        }
    }
}

impl<N: Ord + Clone> WeightedDigraph<N> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(nodes: impl IntoIterator<Item = N>, edges: impl IntoIterator<Item = (N, N, f64)>) -> Self {
        let mut g = Self::new();
        for n in nodes {
            g.add_node(n);
        }
        for (s, d, w) in edges {
            g.add_edge(s, d, w);
        }
        g
    }

    pub fn add_node(&mut self, n: N) {
        self.nodes.insert(n);
    }

    /// Adds (or reweights) an edge; self-loops are ignored.
    pub fn add_edge(&mut self, src: N, dst: N, weight: f64) {
        if src == dst {
            return;
        }
        self.nodes.insert(src.clone());
        self.nodes.insert(dst.clone());
        self.edges.insert((src, dst), weight);
    }

    pub fn remove_edge(&mut self, src: &N, dst: &N) -> Option<f64> {
        self.edges.remove(&(src.clone(), dst.clone()))
    }

    pub fn has_edge(&self, src: &N, dst: &N) -> bool {
        self.edges.contains_key(&(src.clone(), dst.clone()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &N> {
        self.nodes.iter()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&N, &N, f64)> {
        self.edges.iter().map(|((s, d), w)| (s, d, *w))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }

    pub fn find_cycle(&self) -> Option<Vec<N>> {
        let edges: Vec<(N, N, f64)> = self.edges().map(|(s, d, w)| (s.clone(), d.clone(), w)).collect();
        find_cycle(&self.nodes, &edges)
    }
}

/// A vertex sequence covering every vertex once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VertexOrdering<N>(pub Vec<N>);

impl<N: Ord + Clone> VertexOrdering<N> {
    fn positions(&self) -> BTreeMap<N, usize> {
        self.0.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect()
    }
}

/// Greedy feedback-arc-set vertex ordering.
///
/// Each round strips sinks (prepended to the tail list), then sources
/// (appended to the head list), then moves the vertex with the largest
/// out-weight minus in-weight to the head list. Ties go to the smallest
/// vertex. If the edges running against the result outweigh those running
/// with it, the reversed sequence is returned instead.
pub fn greedy_fas_ordering<N: Ord + Clone>(g: &WeightedDigraph<N>) -> VertexOrdering<N> {
    let mut out_w: BTreeMap<&N, BTreeMap<&N, f64>> = g.nodes.iter().map(|n| (n, BTreeMap::new())).collect();
    let mut in_w: BTreeMap<&N, BTreeMap<&N, f64>> = g.nodes.iter().map(|n| (n, BTreeMap::new())).collect();
    for ((s, d), w) in &g.edges {
        out_w.get_mut(s).unwrap().insert(d, *w);
        in_w.get_mut(d).unwrap().insert(s, *w);
    }

    let mut head: Vec<&N> = Vec::new();
    let mut tail: Vec<&N> = Vec::new();

    fn detach<'a, N: Ord>(
        v: &'a N,
        out_w: &mut BTreeMap<&'a N, BTreeMap<&'a N, f64>>,
        in_w: &mut BTreeMap<&'a N, BTreeMap<&'a N, f64>>,
    ) {
        for (d, _) in out_w.remove(v).unwrap_or_default() {
            in_w.get_mut(d).unwrap().remove(v);
        }
        for (s, _) in in_w.remove(v).unwrap_or_default() {
            out_w.get_mut(s).unwrap().remove(v);
        }
    }

    while !out_w.is_empty() {
        while let Some(v) = out_w.iter().find(|(_, outs)| outs.is_empty()).map(|(v, _)| *v) {
            detach(v, &mut out_w, &mut in_w);
            tail.push(v);
        }
        while let Some(v) = in_w.iter().find(|(_, ins)| ins.is_empty()).map(|(v, _)| *v) {
            detach(v, &mut out_w, &mut in_w);
            head.push(v);
        }
        if out_w.is_empty() {
            break;
        }
        let mut best: Option<(&N, f64)> = None;
        for (v, outs) in &out_w {
            let delta = outs.values().sum::<f64>() - in_w[v].values().sum::<f64>();
            // Strict comparison keeps the smallest vertex on ties.
            if best.is_none_or(|(_, b)| delta > b) {
                best = Some((v, delta));
            }
        }
        let (v, _) = best.expect("graph is non-empty");
        detach(v, &mut out_w, &mut in_w);
        head.push(v);
    }

    // Sinks were pushed in removal order; the tail list is built by prepending.
    let mut seq: Vec<N> = head.into_iter().cloned().collect();
    seq.extend(tail.into_iter().rev().cloned());
    let ordering = VertexOrdering(seq);

    let pos = ordering.positions();
    let (mut forward, mut backward) = (0.0, 0.0);
    for ((s, d), w) in &g.edges {
        if pos[s] < pos[d] {
            forward += w;
        } else {
            backward += w;
        }
    }
    if backward > forward {
        let mut rev = ordering.0;
        rev.reverse();
        VertexOrdering(rev)
    } else {
        ordering
    }
}

/// A pruned graph and the `(src, dst, weight)` edges taken out of it.
pub type Pruned<N> = (WeightedDigraph<N>, Vec<(N, N, f64)>);

/// Deletes every edge running against `ordering`. Returns the acyclic graph
/// and the removed edges.
pub fn remove_feedback_edges<N: Ord + Clone>(
    g: &WeightedDigraph<N>,
    ordering: &VertexOrdering<N>,
) -> Result<Pruned<N>, FinalizeError> {
    let pos = ordering.positions();
    if pos.len() != ordering.0.len() || pos.len() != g.nodes.len() || !g.nodes.iter().all(|n| pos.contains_key(n)) {
        return Err(FinalizeError::NotAPermutation);
    }
    let mut kept = WeightedDigraph {
        nodes: g.nodes.clone(),
        edges: BTreeMap::new(),
    };
    let mut removed = Vec::new();
    for ((s, d), w) in &g.edges {
        if pos[s] > pos[d] {
            removed.push((s.clone(), d.clone(), *w));
        } else {
            kept.edges.insert((s.clone(), d.clone()), *w);
        }
    }
    Ok((kept, removed))
}

/// Minimal edge set with the same reachability. Requires a DAG.
pub fn transitive_reduce<N: Ord + Clone + std::fmt::Debug>(
    g: &WeightedDigraph<N>,
) -> Result<Pruned<N>, FinalizeError> {
    if let Some(cycle) = g.find_cycle() {
        return Err(FinalizeError::Cycle(format!("{cycle:?}")));
    }
    let index: BTreeMap<&N, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let n = index.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, d) in g.edges.keys() {
        succ[index[s]].push(index[d]);
    }
    // reach[v] = vertices reachable from v by a path of length >= 1
    let mut reach: Vec<Option<Vec<bool>>> = vec![None; n];
    fn fill(v: usize, succ: &[Vec<usize>], reach: &mut Vec<Option<Vec<bool>>>) {
        if reach[v].is_some() {
            return;
        }
        let mut r = vec![false; succ.len()];
        for &w in &succ[v] {
            fill(w, succ, reach);
            r[w] = true;
            for (i, x) in reach[w].as_ref().unwrap().iter().enumerate() {
                r[i] |= *x;
            }
        }
        reach[v] = Some(r);
    }
    for v in 0..n {
        fill(v, &succ, &mut reach);
    }

    let mut kept = WeightedDigraph {
        nodes: g.nodes.clone(),
        edges: BTreeMap::new(),
    };
    let mut removed = Vec::new();
    for ((s, d), w) in &g.edges {
        let (si, di) = (index[s], index[d]);
        let redundant = succ[si]
            .iter()
            .any(|&m| m != di && reach[m].as_ref().unwrap()[di]);
        if redundant {
            removed.push((s.clone(), d.clone(), *w));
        } else {
            kept.edges.insert((s.clone(), d.clone()), *w);
        }
    }
    Ok((kept, removed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion<N: Ord> {
    pub graph: WeightedDigraph<N>,
    pub added: Vec<(N, N, f64)>,
    pub connected: bool,
}

/// Adds the heaviest candidate edges joining separate weakly connected
/// components until the graph is connected or candidates run out. Candidates
/// that would close a directed cycle are skipped.
pub fn complete_connectivity<N: Ord + Clone>(
    g: &WeightedDigraph<N>,
    candidates: &[(N, N, f64)],
) -> Completion<N> {
    let mut graph = g.clone();
    let nodes: Vec<&N> = g.nodes.iter().collect();
    let index: BTreeMap<&N, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = nodes.len();
    for (s, d) in g.edges.keys() {
        let (a, b) = (root(&mut parent, index[s]), root(&mut parent, index[d]));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }

    let mut order: Vec<&(N, N, f64)> = candidates
        .iter()
        .filter(|(s, d, _)| s != d && index.contains_key(s) && index.contains_key(d))
        .collect();
    order.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| (&a.0, &a.1).cmp(&(&b.0, &b.1))));

    let mut added = Vec::new();
    for (s, d, w) in order {
        if components <= 1 {
            break;
        }
        let (a, b) = (root(&mut parent, index[s]), root(&mut parent, index[d]));
        if a == b || graph.has_edge(s, d) {
            continue;
        }
        graph.add_edge(s.clone(), d.clone(), *w);
        if !graph.is_acyclic() {
            graph.remove_edge(s, d);
            continue;
        }
        parent[a] = b;
        components -= 1;
        added.push((s.clone(), d.clone(), *w));
    }
    Completion {
        graph,
        added,
        connected: components <= 1,
    }
}

/// Why finalize dropped an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalReason {
    FeedbackArc,
    TransitiveReduction,
    ExtraParent,
    KindConflict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemovedEdge {
    pub src: EventId,
    pub dst: EventId,
    pub kind: EdgeKind,
    pub weight: f64,
    pub reason: RemovalReason,
}

fn subgraph(g: &SchemaGraph, kind: EdgeKind, nodes: &BTreeSet<EventId>) -> WeightedDigraph<EventId> {
    WeightedDigraph::from_parts(nodes.iter().cloned(), g.kind_edges(kind, nodes))
}

/// Repairs one chapter in place:
///
/// 1. both-kind pairs keep only their heavier edge (hierarchy on ties);
/// 2. feedback arcs are removed from the temporal and the hierarchical
///    subgraph among the chapter's members;
/// 3. each kind is transitively reduced (the chapter event takes part in
///    the hierarchical reduction);
/// 4. members left with several parents keep the heaviest one.
pub fn finalize_chapter(g: &mut SchemaGraph, chapter: &EventId) -> Vec<RemovedEdge> {
    let members: BTreeSet<EventId> = g.chapter_members(chapter).into_iter().map(|e| e.id.clone()).collect();
    let mut removed = Vec::new();
    let mut drop = |g: &mut SchemaGraph, s: &EventId, d: &EventId, kind: EdgeKind, reason: RemovalReason| {
        if let Some(weight) = g.remove_edge(s, d, kind) {
            removed.push(RemovedEdge {
                src: s.clone(),
                dst: d.clone(),
                kind,
                weight,
                reason,
            });
        }
    };

    for (s, d, wt) in g.kind_edges(EdgeKind::Temporal, &members) {
        if let Some(wh) = g.edge_weight(&s, &d, EdgeKind::Hierarchical) {
            if wt > wh {
                drop(g, &s, &d, EdgeKind::Hierarchical, RemovalReason::KindConflict);
            } else {
                drop(g, &s, &d, EdgeKind::Temporal, RemovalReason::KindConflict);
            }
        }
    }

    for kind in [EdgeKind::Temporal, EdgeKind::Hierarchical] {
        let sub = subgraph(g, kind, &members);
        let ordering = greedy_fas_ordering(&sub);
        let (_, arcs) = remove_feedback_edges(&sub, &ordering).expect("ordering covers subgraph");
        for (s, d, _) in arcs {
            drop(g, &s, &d, kind, RemovalReason::FeedbackArc);
        }
    }

    let mut with_chapter = members.clone();
    with_chapter.insert(chapter.clone());
    for (kind, nodes) in [(EdgeKind::Temporal, &members), (EdgeKind::Hierarchical, &with_chapter)] {
        let sub = subgraph(g, kind, nodes);
        let (_, redundant) = transitive_reduce(&sub).expect("feedback arcs already removed");
        for (s, d, _) in redundant {
            drop(g, &s, &d, kind, RemovalReason::TransitiveReduction);
        }
    }

    for m in &members {
        let parents = g.parents(m);
        if parents.len() > 1 {
            let keep = parents
                .iter()
                .map(|p| (p, g.edge_weight(p, m, EdgeKind::Hierarchical).unwrap_or(0.0)))
                .fold(None::<(&EventId, f64)>, |best, (p, w)| match best {
                    Some((_, bw)) if bw >= w => best,
                    _ => Some((p, w)),
                })
                .map(|(p, _)| p.clone())
                .expect("at least two parents");
            for p in parents.iter().filter(|p| **p != keep) {
                drop(g, p, m, EdgeKind::Hierarchical, RemovalReason::ExtraParent);
            }
        }
    }
    removed
}

/// Runs [`finalize_chapter`] on every chapter.
pub fn finalize_schema(g: &mut SchemaGraph) -> Vec<RemovedEdge> {
    let chapters: Vec<EventId> = g.chapters().map(|c| c.id.clone()).collect();
    chapters.iter().flat_map(|c| finalize_chapter(g, c)).collect()
}
