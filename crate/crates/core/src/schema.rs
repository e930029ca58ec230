//! Event schema data model.
//!
//! A [`SchemaGraph`] holds events (chapters included) and typed edges. Temporal
//! edges point from the earlier event to the later one; hierarchical edges point
//! from parent to child. Every non-chapter event descends from a chapter event.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("scenario name is empty")]
    EmptyScenario,
    #[error("duplicate chapter name {0:?}")]
    DuplicateChapter(String),
    #[error("chapter edge references index {0}, but only {1} chapters are defined")]
    ChapterIndexOutOfRange(usize, usize),
    #[error("chapter edges form a cycle through {0:?}")]
    ChapterCycle(String),
    #[error("event id {0} already exists")]
    DuplicateId(EventId),
    #[error("event {event} references chapter {chapter}, which is not a chapter event")]
    DanglingChapter { event: EventId, chapter: EventId },
    #[error("event {0} is missing a chapter reference")]
    MissingChapter(EventId),
    #[error("event {0} has an empty name or description")]
    EmptyText(EventId),
    #[error("self-loop on {0}")]
    SelfLoop(EventId),
    #[error("unknown event {0}")]
    UnknownEvent(EventId),
    #[error("edge weight {0} is outside [0, 1]")]
    BadWeight(f64),
    #[error("duplicate {kind} edge {src} -> {dst}")]
    DuplicateEdge {
        src: EventId,
        dst: EventId,
        kind: EdgeKind,
    },
    #[error("malformed schema JSON: {0}")]
    Json(String),
}

/// Opaque event identifier. Ids are minted from event names, so they read
/// like `declare-emergency` or `declare-emergency-2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(String);

impl EventId {
    pub fn new(id: impl Into<String>) -> Self {
        EventId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EventId {
    fn from(s: &str) -> Self {
        EventId(s.to_string())
    }
}

/// Lowercase ASCII slug: alphanumerics kept, everything else collapsed to `-`.
pub fn slugify(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut dash = false;
    for c in name.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_alphanumeric() {
            out.push(c);
            dash = false;
        } else if !dash && !out.is_empty() {
            out.push('-');
            dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("event");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    GivenChapter,
    Skeleton,
    Expansion,
    DotParse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub name: String,
    pub description: String,
    pub is_chapter: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chapter: Option<EventId>,
    pub provenance: Provenance,
}

/// Edge kinds. Declaration order is the canonical sort order in files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Temporal,
    Hierarchical,
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Temporal => "temporal",
            EdgeKind::Hierarchical => "hierarchical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: EventId,
    pub dst: EventId,
    pub kind: EdgeKind,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl Edge {
    pub fn new(src: impl Into<EventId>, dst: impl Into<EventId>, kind: EdgeKind, weight: f64) -> Self {
        Edge {
            src: src.into(),
            dst: dst.into(),
            kind,
            weight,
        }
    }

    pub fn temporal(src: impl Into<EventId>, dst: impl Into<EventId>) -> Self {
        Edge::new(src, dst, EdgeKind::Temporal, 1.0)
    }

    pub fn hierarchical(parent: impl Into<EventId>, child: impl Into<EventId>) -> Self {
        Edge::new(parent, child, EdgeKind::Hierarchical, 1.0)
    }
}

/// Chapter structure supplied with a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterSpec {
    pub chapters: Vec<ChapterDef>,
    /// Temporal precedence between chapters, as index pairs into `chapters`.
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterDef {
    pub name: String,
    pub description: String,
}

/// A structural problem found by [`SchemaGraph::check_integrity`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    /// Temporal edges inside one chapter form a cycle.
    TemporalCycle { chapter: EventId, witness: Vec<EventId> },
    /// No hierarchical path leads from a chapter event to this event.
    Orphan { event: EventId },
    /// More than one hierarchical parent.
    MultipleParents { event: EventId, parents: Vec<EventId> },
    /// A chapter event has a hierarchical parent.
    ChapterHasParent { chapter: EventId },
    /// The chapter reached through the hierarchy differs from the event's chapter field.
    ChapterMismatch {
        event: EventId,
        declared: Option<EventId>,
        ancestor: EventId,
    },
    /// The chapter field is missing or points at a non-chapter event.
    BadChapterRef { event: EventId },
    /// The same ordered pair carries both a temporal and a hierarchical edge.
    DualEdge { src: EventId, dst: EventId },
    NoChapter,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaGraph {
    scenario: String,
    events: BTreeMap<EventId, Event>,
    edges: BTreeMap<(EdgeKind, EventId, EventId), f64>,
    /// Every id handed out, so removed ids are never minted again.
    issued: BTreeSet<EventId>,
}

impl SchemaGraph {
    /// Builds a schema holding only chapter events. Without a chapter spec a
    /// single chapter named after the scenario is created.
    pub fn new(scenario: &str, chapters: Option<&ChapterSpec>) -> Result<Self, SchemaError> {
        let scenario = scenario.trim();
        if scenario.is_empty() {
            return Err(SchemaError::EmptyScenario);
        }
        let mut g = SchemaGraph {
            scenario: scenario.to_string(),
            ..Default::default()
        };
        let defs = match chapters {
            Some(spec) if !spec.chapters.is_empty() => spec.chapters.clone(),
            _ => vec![ChapterDef {
                name: scenario.to_string(),
                description: scenario.to_string(),
            }],
        };

        let mut seen = BTreeSet::new();
        for def in &defs {
            if !seen.insert(def.name.trim().to_lowercase()) {
                return Err(SchemaError::DuplicateChapter(def.name.clone()));
            }
        }

        let mut ids = Vec::with_capacity(defs.len());
        for def in &defs {
            let id = g.mint_id(&def.name);
            g.add_event(Event {
                id: id.clone(),
                name: def.name.trim().to_string(),
                description: def.description.trim().to_string(),
                is_chapter: true,
                chapter: None,
                provenance: Provenance::GivenChapter,
            })?;
            ids.push(id);
        }

        if let Some(spec) = chapters {
            for &[i, j] in &spec.edges {
                let n = ids.len();
                if i >= n || j >= n {
                    return Err(SchemaError::ChapterIndexOutOfRange(i.max(j), n));
                }
                g.upsert_edge(Edge::temporal(ids[i].clone(), ids[j].clone()))?;
            }
            let chapter_set: BTreeSet<EventId> = ids.iter().cloned().collect();
            if let Some(cycle) = find_cycle(&chapter_set, &g.kind_edges(EdgeKind::Temporal, &chapter_set)) {
                return Err(SchemaError::ChapterCycle(g.events[&cycle[0]].name.clone()));
            }
        }
        Ok(g)
    }

    pub fn scenario(&self) -> &str {
        &self.scenario
    }

    /// Returns a fresh id derived from `name`, suffixed on collision.
    pub fn mint_id(&mut self, name: &str) -> EventId {
        let base = slugify(name);
        let mut candidate = EventId(base.clone());
        let mut n = 2;
        while self.issued.contains(&candidate) {
            candidate = EventId(format!("{base}-{n}"));
            n += 1;
        }
        self.issued.insert(candidate.clone());
        candidate
    }

    /// Inserts an event. Non-chapter events get a hierarchical edge from their
    /// chapter with weight 1.0.
    pub fn add_event(&mut self, e: Event) -> Result<EventId, SchemaError> {
        if self.events.contains_key(&e.id) {
            return Err(SchemaError::DuplicateId(e.id));
        }
        if e.name.trim().is_empty() || e.description.trim().is_empty() {
            return Err(SchemaError::EmptyText(e.id));
        }
        let parent = if e.is_chapter {
            None
        } else {
            let chapter = e.chapter.clone().ok_or_else(|| SchemaError::MissingChapter(e.id.clone()))?;
            match self.events.get(&chapter) {
                Some(c) if c.is_chapter => Some(chapter),
                _ => {
                    return Err(SchemaError::DanglingChapter {
                        event: e.id.clone(),
                        chapter,
                    })
                }
            }
        };
        let id = e.id.clone();
        self.issued.insert(id.clone());
        self.events.insert(id.clone(), e);
        if let Some(chapter) = parent {
            self.edges.insert((EdgeKind::Hierarchical, chapter, id.clone()), 1.0);
        }
        Ok(id)
    }

    /// Mints an id from `name` and adds a non-chapter event under `chapter`.
    pub fn add_child(
        &mut self,
        chapter: &EventId,
        name: &str,
        description: &str,
        provenance: Provenance,
    ) -> Result<EventId, SchemaError> {
        match self.events.get(chapter) {
            Some(c) if c.is_chapter => {}
            _ => {
                return Err(SchemaError::DanglingChapter {
                    event: EventId(slugify(name)),
                    chapter: chapter.clone(),
                })
            }
        }
        let id = self.mint_id(name);
        self.add_event(Event {
            id,
            name: name.trim().to_string(),
            description: description.trim().to_string(),
            is_chapter: false,
            chapter: Some(chapter.clone()),
            provenance,
        })
    }

    /// Removes an event and all incident edges. The id stays retired.
    pub fn remove_event(&mut self, id: &EventId) -> Option<Event> {
        let e = self.events.remove(id)?;
        self.edges.retain(|(_, s, d), _| s != id && d != id);
        Some(e)
    }

    /// Inserts or overwrites the `(src, dst, kind)` edge.
    pub fn upsert_edge(&mut self, edge: Edge) -> Result<(), SchemaError> {
        if edge.src == edge.dst {
            return Err(SchemaError::SelfLoop(edge.src));
        }
        for end in [&edge.src, &edge.dst] {
            if !self.events.contains_key(end) {
                return Err(SchemaError::UnknownEvent(end.clone()));
            }
        }
        if !(0.0..=1.0).contains(&edge.weight) {
            return Err(SchemaError::BadWeight(edge.weight));
        }
        self.edges.insert((edge.kind, edge.src, edge.dst), edge.weight);
        Ok(())
    }

    pub fn remove_edge(&mut self, src: &EventId, dst: &EventId, kind: EdgeKind) -> Option<f64> {
        self.edges.remove(&(kind, src.clone(), dst.clone()))
    }

    /// Removes every edge of either kind between `a` and `b`, both directions.
    pub fn clear_pair(&mut self, a: &EventId, b: &EventId) -> Vec<Edge> {
        let mut removed = Vec::new();
        for kind in [EdgeKind::Temporal, EdgeKind::Hierarchical] {
            for (s, d) in [(a, b), (b, a)] {
                if let Some(w) = self.remove_edge(s, d, kind) {
                    removed.push(Edge::new(s.clone(), d.clone(), kind, w));
                }
            }
        }
        removed
    }

    pub fn event(&self, id: &EventId) -> Option<&Event> {
        self.events.get(id)
    }

    pub fn contains(&self, id: &EventId) -> bool {
        self.events.contains_key(id)
    }

    /// Events in canonical (id) order.
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.events.values()
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn chapters(&self) -> impl Iterator<Item = &Event> {
        self.events.values().filter(|e| e.is_chapter)
    }

    /// Non-chapter events whose chapter field is `chapter`, in id order.
    pub fn chapter_members(&self, chapter: &EventId) -> Vec<&Event> {
        self.events
            .values()
            .filter(|e| !e.is_chapter && e.chapter.as_ref() == Some(chapter))
            .collect()
    }

    /// Edges in canonical `(kind, src, dst)` order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges
            .iter()
            .map(|((k, s, d), w)| Edge::new(s.clone(), d.clone(), *k, *w))
    }

    pub fn edge_weight(&self, src: &EventId, dst: &EventId, kind: EdgeKind) -> Option<f64> {
        self.edges.get(&(kind, src.clone(), dst.clone())).copied()
    }

    pub fn has_edge(&self, src: &EventId, dst: &EventId, kind: EdgeKind) -> bool {
        self.edge_weight(src, dst, kind).is_some()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges of `kind` with both endpoints in `nodes`.
    pub fn kind_edges(&self, kind: EdgeKind, nodes: &BTreeSet<EventId>) -> Vec<(EventId, EventId, f64)> {
        self.edges
            .iter()
            .filter(|((k, s, d), _)| *k == kind && nodes.contains(s) && nodes.contains(d))
            .map(|((_, s, d), w)| (s.clone(), d.clone(), *w))
            .collect()
    }

    /// Hierarchical parents of `id`, in id order.
    pub fn parents(&self, id: &EventId) -> Vec<EventId> {
        self.edges
            .keys()
            .filter(|(k, _, d)| *k == EdgeKind::Hierarchical && d == id)
            .map(|(_, s, _)| s.clone())
            .collect()
    }

    /// Reports every violated structural invariant. Empty means well-formed.
    pub fn check_integrity(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let chapters: BTreeSet<EventId> = self.chapters().map(|c| c.id.clone()).collect();
        if chapters.is_empty() {
            out.push(Violation::NoChapter);
        }

        // Chapter-level temporal edges form their own group.
        if let Some(witness) = find_cycle(&chapters, &self.kind_edges(EdgeKind::Temporal, &chapters)) {
            out.push(Violation::TemporalCycle {
                chapter: witness[0].clone(),
                witness,
            });
        }
        for chapter in &chapters {
            let members: BTreeSet<EventId> = self.chapter_members(chapter).into_iter().map(|e| e.id.clone()).collect();
            if let Some(witness) = find_cycle(&members, &self.kind_edges(EdgeKind::Temporal, &members)) {
                out.push(Violation::TemporalCycle {
                    chapter: chapter.clone(),
                    witness,
                });
            }
        }

        for e in self.events.values() {
            let parents = self.parents(&e.id);
            if e.is_chapter {
                if !parents.is_empty() {
                    out.push(Violation::ChapterHasParent { chapter: e.id.clone() });
                }
                continue;
            }
            match &e.chapter {
                Some(c) if chapters.contains(c) => {}
                _ => out.push(Violation::BadChapterRef { event: e.id.clone() }),
            }
            match parents.len() {
                0 => out.push(Violation::Orphan { event: e.id.clone() }),
                1 => match self.chapter_ancestor(&e.id) {
                    None => out.push(Violation::Orphan { event: e.id.clone() }),
                    Some(anc) if e.chapter.as_ref() != Some(&anc) => out.push(Violation::ChapterMismatch {
                        event: e.id.clone(),
                        declared: e.chapter.clone(),
                        ancestor: anc,
                    }),
                    Some(_) => {}
                },
                _ => out.push(Violation::MultipleParents {
                    event: e.id.clone(),
                    parents,
                }),
            }
        }

        for (kind, s, d) in self.edges.keys() {
            if *kind == EdgeKind::Temporal && self.edges.contains_key(&(EdgeKind::Hierarchical, s.clone(), d.clone())) {
                out.push(Violation::DualEdge {
                    src: s.clone(),
                    dst: d.clone(),
                });
            }
        }
        out
    }

    /// Follows single hierarchical parents up to a chapter event. `None` when
    /// the chain breaks, forks, or loops.
    fn chapter_ancestor(&self, id: &EventId) -> Option<EventId> {
        let mut cur = id.clone();
        let mut seen = BTreeSet::new();
        loop {
            if !seen.insert(cur.clone()) {
                return None;
            }
            let parents = self.parents(&cur);
            let [parent] = parents.as_slice() else {
                return None;
            };
            if self.events.get(parent).is_some_and(|p| p.is_chapter) {
                return Some(parent.clone());
            }
            cur = parent.clone();
        }
    }

    /// Canonical JSON: events by id, edges by `(kind, src, dst)`.
    pub fn to_json(&self) -> String {
        let file = SchemaFile {
            scenario: self.scenario.clone(),
            events: self.events.values().cloned().collect(),
            edges: self.edges().collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("schema serializes");
        s.push('\n');
        s
    }

    /// Loads a schema file. Structural problems (orphans, multiple parents)
    /// are accepted here and surface through [`check_integrity`](Self::check_integrity).
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let file: SchemaFile = serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))?;
        let mut g = SchemaGraph {
            scenario: file.scenario,
            ..Default::default()
        };
        for e in file.events {
            if g.events.contains_key(&e.id) {
                return Err(SchemaError::DuplicateId(e.id));
            }
            if e.name.trim().is_empty() || e.description.trim().is_empty() {
                return Err(SchemaError::EmptyText(e.id));
            }
            g.issued.insert(e.id.clone());
            g.events.insert(e.id.clone(), e);
        }
        for edge in file.edges {
            let key = (edge.kind, edge.src.clone(), edge.dst.clone());
            if g.edges.contains_key(&key) {
                return Err(SchemaError::DuplicateEdge {
                    src: edge.src,
                    dst: edge.dst,
                    kind: edge.kind,
                });
            }
            g.upsert_edge(edge)?;
        }
        Ok(g)
    }

    /// Returns a copy with every event id rewritten through `f`.
    pub fn relabel(&self, mut f: impl FnMut(&EventId) -> EventId) -> SchemaGraph {
        let map: BTreeMap<EventId, EventId> = self.events.keys().map(|id| (id.clone(), f(id))).collect();
        let mut g = SchemaGraph {
            scenario: self.scenario.clone(),
            ..Default::default()
        };
        for e in self.events.values() {
            let mut e = e.clone();
            e.id = map[&e.id].clone();
            e.chapter = e.chapter.map(|c| map.get(&c).cloned().unwrap_or(c));
            g.issued.insert(e.id.clone());
            g.events.insert(e.id.clone(), e);
        }
        for ((k, s, d), w) in &self.edges {
            g.edges.insert((*k, map[s].clone(), map[d].clone()), *w);
        }
        g
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    scenario: String,
    events: Vec<Event>,
    edges: Vec<Edge>,
}

/// Finds a directed cycle among `nodes`, returned as a vertex sequence.
pub(crate) fn find_cycle<N: Ord + Clone>(nodes: &BTreeSet<N>, edges: &[(N, N, f64)]) -> Option<Vec<N>> {
    let mut adj: BTreeMap<&N, Vec<&N>> = nodes.iter().map(|n| (n, Vec::new())).collect();
    for (s, d, _) in edges {
        if let Some(list) = adj.get_mut(s) {
            if nodes.contains(d) {
                list.push(d);
            }
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<&N, u8> = nodes.iter().map(|n| (n, 0)).collect();
    for root in nodes {
        if state[root] != 0 {
            continue;
        }
        let mut stack: Vec<(&N, usize)> = vec![(root, 0)];
        state.insert(root, 1);
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(&succ) = adj[node].get(*next) {
                *next += 1;
                match state[succ] {
                    0 => {
                        state.insert(succ, 1);
                        stack.push((succ, 0));
                    }
                    1 => {
                        let start = stack.iter().position(|(n, _)| *n == succ).unwrap();
                        return Some(stack[start..].iter().map(|(n, _)| (*n).clone()).collect());
                    }
                    _ => {}
                }
            } else {
                state.insert(node, 2);
                stack.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outbreak_spec() -> ChapterSpec {
        ChapterSpec {
            chapters: ["outbreak", "response", "impact"]
                .iter()
                .map(|n| ChapterDef {
                    name: n.to_string(),
                    description: format!("The {n} of the disease."),
                })
                .collect(),
            edges: vec![[0, 1], [1, 2]],
        }
    }

    #[test]
    fn default_single_chapter() {
        let g = SchemaGraph::new("disease outbreak", None).unwrap();
        let chapters: Vec<_> = g.chapters().collect();
        assert_eq!(chapters.len(), 1);
        assert_eq!(chapters[0].name, "disease outbreak");
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn given_chapters_with_order() {
        let g = SchemaGraph::new("disease outbreak", Some(&outbreak_spec())).unwrap();
        assert_eq!(g.chapters().count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert!(g.has_edge(&"outbreak".into(), &"response".into(), EdgeKind::Temporal));
        assert!(g.has_edge(&"response".into(), &"impact".into(), EdgeKind::Temporal));
        assert!(g.check_integrity().is_empty());
    }

    #[test]
    fn duplicate_chapter_names_rejected() {
        let mut spec = outbreak_spec();
        spec.chapters[1].name = "outbreak".into();
        assert_eq!(
            SchemaGraph::new("x", Some(&spec)).unwrap_err(),
            SchemaError::DuplicateChapter("outbreak".into())
        );
    }

    #[test]
    fn add_event_links_chapter() {
        let mut g = SchemaGraph::new("disease outbreak", Some(&outbreak_spec())).unwrap();
        let id = g
            .add_child(&"outbreak".into(), "Cases Increase", "The number of cases rises.", Provenance::Skeleton)
            .unwrap();
        assert_eq!(id.as_str(), "cases-increase");
        assert!(g.has_edge(&"outbreak".into(), &id, EdgeKind::Hierarchical));
        assert_eq!(g.edge_weight(&"outbreak".into(), &id, EdgeKind::Hierarchical), Some(1.0));

        let err = g.add_child(&"missing".into(), "X", "y", Provenance::Skeleton).unwrap_err();
        assert!(matches!(err, SchemaError::DanglingChapter { .. }));

        let dup = g.event(&id).unwrap().clone();
        assert_eq!(g.add_event(dup).unwrap_err(), SchemaError::DuplicateId(id));
    }

    #[test]
    fn ids_suffix_on_collision_and_never_reuse() {
        let mut g = SchemaGraph::new("s", None).unwrap();
        let ch = EventId::from("s");
        let a = g.add_child(&ch, "Arrive", "a", Provenance::Skeleton).unwrap();
        let b = g.add_child(&ch, "Arrive", "b", Provenance::Skeleton).unwrap();
        assert_eq!(b.as_str(), "arrive-2");
        g.remove_event(&b);
        let c = g.add_child(&ch, "Arrive", "c", Provenance::Skeleton).unwrap();
        assert_eq!(c.as_str(), "arrive-3");
        assert_eq!(a.as_str(), "arrive");
    }

    #[test]
    fn upsert_overwrites_weight() {
        let mut g = SchemaGraph::new("s", None).unwrap();
        let ch = EventId::from("s");
        let a = g.add_child(&ch, "a", "a", Provenance::Skeleton).unwrap();
        let b = g.add_child(&ch, "b", "b", Provenance::Skeleton).unwrap();
        g.upsert_edge(Edge::new(a.clone(), b.clone(), EdgeKind::Temporal, 0.6)).unwrap();
        g.upsert_edge(Edge::new(a.clone(), b.clone(), EdgeKind::Temporal, 0.8)).unwrap();
        let temporal: Vec<_> = g.edges().filter(|e| e.kind == EdgeKind::Temporal).collect();
        assert_eq!(temporal.len(), 1);
        assert_eq!(temporal[0].weight, 0.8);

        assert_eq!(
            g.upsert_edge(Edge::temporal(a.clone(), a.clone())).unwrap_err(),
            SchemaError::SelfLoop(a.clone())
        );
        assert_eq!(
            g.upsert_edge(Edge::temporal(a.clone(), "nope")).unwrap_err(),
            SchemaError::UnknownEvent("nope".into())
        );
    }

    fn chain() -> SchemaGraph {
        let mut g = SchemaGraph::new("s", None).unwrap();
        let ch = EventId::from("s");
        for n in ["a", "b", "c"] {
            g.add_child(&ch, n, n, Provenance::Skeleton).unwrap();
        }
        g.upsert_edge(Edge::temporal("a", "b")).unwrap();
        g.upsert_edge(Edge::temporal("b", "c")).unwrap();
        g
    }

    #[test]
    fn integrity_clean_chain() {
        assert!(chain().check_integrity().is_empty());
    }

    #[test]
    fn integrity_temporal_cycle() {
        let mut g = chain();
        g.upsert_edge(Edge::temporal("b", "a")).unwrap();
        let v = g.check_integrity();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(matches!(v[0], Violation::TemporalCycle { .. }));
    }

    #[test]
    fn integrity_orphan() {
        let mut g = chain();
        g.remove_edge(&"s".into(), &"c".into(), EdgeKind::Hierarchical);
        assert_eq!(g.check_integrity(), vec![Violation::Orphan { event: "c".into() }]);
    }

    #[test]
    fn integrity_multiple_parents_and_dual_edges() {
        let mut g = chain();
        g.upsert_edge(Edge::hierarchical("a", "c")).unwrap();
        let v = g.check_integrity();
        assert!(v.contains(&Violation::MultipleParents {
            event: "c".into(),
            parents: vec!["a".into(), "s".into()],
        }));
        g.upsert_edge(Edge::hierarchical("a", "b")).unwrap();
        assert!(g.check_integrity().contains(&Violation::DualEdge {
            src: "a".into(),
            dst: "b".into()
        }));
    }

    #[test]
    fn json_roundtrip_is_byte_identical() {
        let mut g = SchemaGraph::new("disease outbreak", Some(&outbreak_spec())).unwrap();
        g.add_child(&"response".into(), "Sanitize", "Disinfect the area.", Provenance::Expansion)
            .unwrap();
        let text = g.to_json();
        let back = SchemaGraph::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert_eq!(back, g);
    }

    #[test]
    fn json_keeps_gold_violations() {
        let text = r#"{"scenario":"s","events":[
            {"id":"s","name":"s","description":"s","is_chapter":true,"provenance":"given-chapter"},
            {"id":"a","name":"a","description":"a","is_chapter":false,"chapter":"s","provenance":"skeleton"}
        ],"edges":[]}"#;
        let g = SchemaGraph::from_json(text).unwrap();
        assert_eq!(g.check_integrity(), vec![Violation::Orphan { event: "a".into() }]);
    }

    #[test]
    fn slugs() {
        assert_eq!(slugify("Test for Virus"), "test-for-virus");
        assert_eq!(slugify("  --Déclare!! Emergency "), "d-clare-emergency");
        assert_eq!(slugify("!!!"), "event");
    }
}
