//! Single-pass DOT baseline: prompt the model for a whole schema in a small
//! DOT dialect, parse the answer tolerantly, and convert it to a schema.
//!
//! The dialect:
//!
//! ```text
//! List relevant events and edges in "chemical spills":
//! events:
//! 0: Chemicals are spilled into the environment.
//! 1: The spill causes other hazards such as fire.
//! edges:
//! 0->1[label='temporal']
//! ```
//!
//! [`to_graphviz`] writes a separate, fully quoted dialect for rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finalize::finalize_chapter;
use crate::llm::{CompletionRequest, LlmError, Provider, Sampling};
use crate::pipeline::fallback_name;
use crate::schema::{Edge, EdgeKind, EventId, Provenance, SchemaError, SchemaGraph};

/// In-context example shipped with the crate.
pub const CHEMICAL_SPILL_EXAMPLE: &str = include_str!("../data/dot/chemical_spill.txt");

#[derive(Debug, Error)]
pub enum DotError {
    #[error("no event lines found in DOT text")]
    NoEvents,
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DotLabel {
    Temporal,
    Hierarchical,
}

impl DotLabel {
    fn as_str(self) -> &'static str {
        match self {
            DotLabel::Temporal => "temporal",
            DotLabel::Hierarchical => "hierarchical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DotEdge {
    pub src: usize,
    pub dst: usize,
    pub label: DotLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DotDocument {
    /// Scenario named in the `List relevant events ...` line.
    pub header: Option<String>,
    pub events: Vec<(usize, String)>,
    pub edges: Vec<DotEdge>,
}

fn header_line(scenario: &str) -> String {
    format!("List relevant events and edges in \"{scenario}\":")
}

impl fmt::Display for DotDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(h) = &self.header {
            writeln!(f, "{}", header_line(h))?;
        }
        writeln!(f, "events:")?;
        for (i, d) in &self.events {
            writeln!(f, "{i}: {d}")?;
        }
        write!(f, "edges:")?;
        for e in &self.edges {
            write!(f, "\n{}->{}[label='{}']", e.src, e.dst, e.label.as_str())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDot {
    pub doc: DotDocument,
    pub warnings: Vec<String>,
}

struct Patterns {
    header: Regex,
    event: Regex,
    edge: Regex,
    section: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        header: Regex::new(r#"^List relevant events and edges in "(.*)":$"#).unwrap(),
        event: Regex::new(r"^(\d+)\s*:\s*(.*?)$").unwrap(),
        edge: Regex::new(r#"^(\d+)\s*->\s*(\d+)\s*(?:\[\s*label\s*=\s*['"]?([A-Za-z_]*)['"]?\s*\])?\s*;?$"#).unwrap(),
        section: Regex::new(r"(?i)^(events|edges)\s*:$").unwrap(),
    })
}

/// Parses the DOT dialect. Malformed lines, unknown labels, self-loops,
/// duplicate edges and edges to undeclared events are dropped with a
/// warning; a missing label reads as temporal.
pub fn parse_dot(text: &str) -> Result<ParsedDot, DotError> {
    let p = patterns();
    let mut doc = DotDocument::default();
    let mut warnings = Vec::new();
    let mut raw_edges = Vec::new();
    let mut declared = BTreeSet::new();

    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let n = n + 1;
        if line.is_empty() || p.section.is_match(line) {
            continue;
        }
        if let Some(c) = p.header.captures(line) {
            doc.header = Some(c[1].to_string());
        } else if let Some(c) = p.edge.captures(line) {
            let (Ok(src), Ok(dst)) = (c[1].parse::<usize>(), c[2].parse::<usize>()) else {
                warnings.push(format!("line {n}: index out of range: {line}"));
                continue;
            };
            let label = match c.get(3).map(|m| m.as_str().to_ascii_lowercase()) {
                None => DotLabel::Temporal,
                Some(l) if l == "temporal" => DotLabel::Temporal,
                Some(l) if l == "hierarchical" => DotLabel::Hierarchical,
                Some(l) => {
                    warnings.push(format!("line {n}: unknown label {l:?}"));
                    continue;
                }
            };
            raw_edges.push((n, DotEdge { src, dst, label }));
        } else if let Some(c) = p.event.captures(line) {
            let Ok(i) = c[1].parse::<usize>() else {
                warnings.push(format!("line {n}: index out of range: {line}"));
                continue;
            };
            let desc = c[2].trim();
            if desc.is_empty() {
                warnings.push(format!("line {n}: event {i} has no description"));
            } else if !declared.insert(i) {
                warnings.push(format!("line {n}: event {i} declared twice, keeping the first"));
            } else {
                doc.events.push((i, desc.to_string()));
            }
        } else {
            warnings.push(format!("line {n}: unrecognized: {line}"));
        }
    }
    if doc.events.is_empty() {
        return Err(DotError::NoEvents);
    }

    let mut seen = BTreeSet::new();
    for (n, e) in raw_edges {
        if e.src == e.dst {
            warnings.push(format!("line {n}: self-loop on {}", e.src));
        } else if let Some(missing) = [e.src, e.dst].into_iter().find(|i| !declared.contains(i)) {
            warnings.push(format!("line {n}: edge {}->{} references undeclared event {missing}", e.src, e.dst));
        } else if !seen.insert((e.src, e.dst, e.label)) {
            warnings.push(format!("line {n}: duplicate edge {}->{}", e.src, e.dst));
        } else {
            doc.edges.push(e);
        }
    }
    Ok(ParsedDot { doc, warnings })
}

/// Prompt: the example document, then the query header for `scenario`, then
/// one seed line per chapter name.
pub fn render_dot_prompt(scenario: &str, chapters: Option<&[String]>, example: &DotDocument) -> String {
    let mut out = example.to_string();
    out.push_str("\n\n");
    out.push_str(&header_line(scenario));
    if let Some(chapters) = chapters.filter(|c| !c.is_empty()) {
        out.push_str("\nevents:");
        for (i, c) in chapters.iter().enumerate() {
            write!(out, "\n{i}: {c}").unwrap();
        }
    }
    out
}

/// Converts a parsed document to a schema under one default chapter and
/// repairs it the same way pipeline output is repaired.
pub fn dot_to_schema(d: &DotDocument, scenario: &str) -> Result<SchemaGraph, DotError> {
    let mut g = SchemaGraph::new(scenario, None)?;
    let chapter = g.chapters().next().expect("default chapter").id.clone();
    let mut ids: BTreeMap<usize, EventId> = BTreeMap::new();
    for (i, desc) in &d.events {
        let id = g.add_child(&chapter, &fallback_name(desc), desc, Provenance::DotParse)?;
        ids.insert(*i, id);
    }
    for e in &d.edges {
        let (Some(s), Some(t)) = (ids.get(&e.src), ids.get(&e.dst)) else {
            continue;
        };
        let kind = match e.label {
            DotLabel::Temporal => EdgeKind::Temporal,
            DotLabel::Hierarchical => EdgeKind::Hierarchical,
        };
        g.upsert_edge(Edge::new(s.clone(), t.clone(), kind, 1.0))?;
    }
    finalize_chapter(&mut g, &chapter);
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub prompt: String,
    pub response: String,
    pub parsed: ParsedDot,
    pub schema: SchemaGraph,
}

/// Parses a completion of `prompt`. The model continues after the query
/// header and any seed lines, so those are parsed together with the answer.
pub fn parse_completion(prompt: &str, scenario: &str, completion: &str) -> Result<ParsedDot, DotError> {
    let tail = &prompt[prompt.rfind(&header_line(scenario)).unwrap_or(0)..];
    parse_dot(&format!("{tail}\n{completion}"))
}

/// Renders the prompt, asks once, and converts the answer.
pub fn run_baseline(
    provider: &dyn Provider,
    scenario: &str,
    chapters: Option<&[String]>,
    example: &DotDocument,
    sampling: &Sampling,
    max_tokens: u32,
) -> Result<BaselineRun, DotError> {
    let prompt = render_dot_prompt(scenario, chapters, example);
    let resp = provider.complete(&CompletionRequest::new(prompt.clone(), sampling, max_tokens))?;
    let parsed = parse_completion(&prompt, scenario, &resp.text)?;
    let schema = dot_to_schema(&parsed.doc, scenario)?;
    Ok(BaselineRun {
        prompt,
        response: resp.text,
        parsed,
        schema,
    })
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Graphviz rendering of a schema. Chapters are bold boxes; hierarchical
/// edges are dashed and grey, temporal edges solid.
pub fn to_graphviz(g: &SchemaGraph) -> String {
    let mut out = format!("digraph {} {{\n  rankdir=LR;\n  node [shape=box];\n", quote(g.scenario()));
    for e in g.events() {
        let style = if e.is_chapter { ", style=bold" } else { "" };
        writeln!(out, "  {} [label={}{style}];", quote(e.id.as_str()), quote(&e.name)).unwrap();
    }
    for e in g.edges() {
        let attrs = match e.kind {
            EdgeKind::Temporal => "style=solid",
            EdgeKind::Hierarchical => "style=dashed, color=gray40, arrowhead=empty",
        };
        writeln!(
            out,
            "  {} -> {} [{attrs}, weight={}];",
            quote(e.src.as_str()),
            quote(e.dst.as_str()),
            e.weight
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}
