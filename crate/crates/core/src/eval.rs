//! Event F1 and relation F1 between a predicted and a gold schema.
//!
//! Non-chapter events are aligned by an optimal one-to-one assignment on
//! description-embedding cosine. Event precision and recall are the summed
//! matched similarity (negatives clamped to 0) over the predicted and gold
//! event counts. Relation scores count a predicted edge as correct when its
//! image under the alignment is a gold edge of the same kind and direction,
//! considering only edges between aligned events.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::schema::{EdgeKind, Event, EventId, SchemaGraph};
use crate::similarity::{cosine, EmbeddingProvider, SimilarityError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0} schema has no non-chapter events")]
    EmptySchema(&'static str),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("writing pairs CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Optimal assignment maximizing total weight on a rectangular matrix.
/// Returns `min(rows, cols)` pairs `(row, col)` sorted by row.
///
/// Shortest augmenting paths with vertex potentials, O(n² m).
pub fn max_weight_assignment(w: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| w[i][j]).collect()).collect();
        let mut pairs: Vec<(usize, usize)> = max_weight_assignment(&t).into_iter().map(|(j, i)| (i, j)).collect();
        pairs.sort_unstable();
        return pairs;
    }

    // Minimize cost = -weight. Index 0 is a sentinel on both sides.
    let (n, m) = (rows, cols);
    let cost = |i: usize, j: usize| -w[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    pub pred: EventId,
    pub gold: EventId,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EventMatching {
    /// Sorted by predicted id.
    pub pairs: Vec<MatchedPair>,
}

impl EventMatching {
    pub fn total_similarity(&self) -> f64 {
        self.pairs.iter().map(|p| p.similarity).sum()
    }

    fn pred_to_gold(&self) -> BTreeMap<&EventId, &EventId> {
        self.pairs.iter().map(|p| (&p.pred, &p.gold)).collect()
    }
}

/// Non-chapter events ordered by description, then id, so the alignment does
/// not depend on how events are labelled.
fn matchable(g: &SchemaGraph) -> Vec<&Event> {
    let mut v: Vec<&Event> = g.events().filter(|e| !e.is_chapter).collect();
    v.sort_by(|a, b| a.description.cmp(&b.description).then_with(|| a.id.cmp(&b.id)));
    v
}

/// Aligns predicted and gold events. With `threshold`, pairs whose
/// similarity falls below it are dropped after the assignment.
pub fn match_events(
    pred: &SchemaGraph,
    gold: &SchemaGraph,
    embedder: &dyn EmbeddingProvider,
    threshold: Option<f64>,
) -> Result<EventMatching, EvalError> {
    let p = matchable(pred);
    let g = matchable(gold);
    if p.is_empty() {
        return Err(EvalError::EmptySchema("predicted"));
    }
    if g.is_empty() {
        return Err(EvalError::EmptySchema("gold"));
    }
    let embed = |events: &[&Event]| {
        let texts: Vec<&str> = events.iter().map(|e| e.description.as_str()).collect();
        embedder.embed_batch(&texts)
    };
    let (pv, gv) = (embed(&p)?, embed(&g)?);
    let mut sim = vec![vec![0.0; g.len()]; p.len()];
    for (i, a) in pv.iter().enumerate() {
        for (j, b) in gv.iter().enumerate() {
            sim[i][j] = cosine(a, b)?;
        }
    }
    Ok(matching_from_matrix(&p, &g, &sim, threshold))
}

fn matching_from_matrix(p: &[&Event], g: &[&Event], sim: &[Vec<f64>], threshold: Option<f64>) -> EventMatching {
    let mut pairs: Vec<MatchedPair> = max_weight_assignment(sim)
        .into_iter()
        .filter(|&(i, j)| threshold.is_none_or(|t| sim[i][j] >= t))
        .map(|(i, j)| MatchedPair {
            pred: p[i].id.clone(),
            gold: g[j].id.clone(),
            similarity: sim[i][j],
        })
        .collect();
    pairs.sort_by(|a, b| a.pred.cmp(&b.pred));
    EventMatching { pairs }
}

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

/// Soft event precision/recall from matched similarities.
pub fn event_f1(m: &EventMatching, n_pred: usize, n_gold: usize) -> Result<Prf, EvalError> {
    if n_pred == 0 {
        return Err(EvalError::EmptySchema("predicted"));
    }
    if n_gold == 0 {
        return Err(EvalError::EmptySchema("gold"));
    }
    let mass: f64 = m.pairs.iter().map(|p| p.similarity.max(0.0)).sum();
    Ok(Prf::new(mass / n_pred as f64, mass / n_gold as f64))
}

/// Direction-sensitive edge precision/recall over aligned events. An empty
/// denominator scores 1 when both sides are empty and 0 otherwise.
pub fn relation_f1(pred: &SchemaGraph, gold: &SchemaGraph, m: &EventMatching, kind: EdgeKind) -> Prf {
    let phi = m.pred_to_gold();
    let gold_matched: std::collections::BTreeSet<&EventId> = m.pairs.iter().map(|p| &p.gold).collect();
    let gold_edges: std::collections::BTreeSet<(EventId, EventId)> = gold
        .edges()
        .filter(|e| e.kind == kind && gold_matched.contains(&e.src) && gold_matched.contains(&e.dst))
        .map(|e| (e.src, e.dst))
        .collect();
    let mut n_pred = 0usize;
    let mut tp = 0usize;
    for e in pred.edges().filter(|e| e.kind == kind) {
        if let (Some(s), Some(d)) = (phi.get(&e.src), phi.get(&e.dst)) {
            n_pred += 1;
            if gold_edges.contains(&((*s).clone(), (*d).clone())) {
                tp += 1;
            }
        }
    }
    let ratio = |num: usize, den: usize, other: usize| match (den, other) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => num as f64 / den as f64,
    };
    Prf::new(ratio(tp, n_pred, gold_edges.len()), ratio(tp, gold_edges.len(), n_pred))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub event: Prf,
    pub temporal: Prf,
    pub hierarchical: Prf,
    pub matched_pair_count: usize,
    pub n_pred: usize,
    pub n_gold: usize,
}

/// Aligns the schemas and computes all three scores.
pub fn evaluate(
    pred: &SchemaGraph,
    gold: &SchemaGraph,
    embedder: &dyn EmbeddingProvider,
    threshold: Option<f64>,
) -> Result<(MetricReport, EventMatching), EvalError> {
    let m = match_events(pred, gold, embedder, threshold)?;
    let n_pred = pred.events().filter(|e| !e.is_chapter).count();
    let n_gold = gold.events().filter(|e| !e.is_chapter).count();
    let report = MetricReport {
        event: event_f1(&m, n_pred, n_gold)?,
        temporal: relation_f1(pred, gold, &m, EdgeKind::Temporal),
        hierarchical: relation_f1(pred, gold, &m, EdgeKind::Hierarchical),
        matched_pair_count: m.pairs.len(),
        n_pred,
        n_gold,
    };
    Ok((report, m))
}

/// Writes `pred_id,gold_id,similarity` rows.
pub fn write_pairs_csv<W: Write>(m: &EventMatching, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pred_id", "gold_id", "similarity"])?;
    for p in &m.pairs {
        w.write_record([p.pred.as_str(), p.gold.as_str(), &format!("{:.6}", p.similarity)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Edge, Provenance};
    use crate::similarity::TrigramEmbedder;

    fn schema(events: &[&str], temporal: &[(usize, usize)]) -> SchemaGraph {
        let mut g = SchemaGraph::new("s", None).unwrap();
        let c = EventId::from("s");
        let ids: Vec<EventId> = events
            .iter()
            .map(|d| g.add_child(&c, d, d, Provenance::Skeleton).unwrap())
            .collect();
        for &(a, b) in temporal {
            g.upsert_edge(Edge::temporal(ids[a].clone(), ids[b].clone())).unwrap();
        }
        g
    }

    #[test]
    fn two_by_two() {
        let pairs = max_weight_assignment(&[vec![0.9, 0.1], vec![0.2, 0.8]]);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
        let pairs = max_weight_assignment(&[vec![0.1, 0.9], vec![0.8, 0.2]]);
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn rectangular() {
        assert_eq!(max_weight_assignment(&[vec![0.1, 0.7, 0.3]]), vec![(0, 1)]);
        assert_eq!(max_weight_assignment(&[vec![0.1], vec![0.7], vec![0.3]]), vec![(1, 0)]);
        assert!(max_weight_assignment(&[]).is_empty());
    }

    #[test]
    fn f1_arithmetic() {
        let m = EventMatching {
            pairs: (0..2)
                .map(|i| MatchedPair {
                    pred: EventId::new(format!("p{i}")),
                    gold: EventId::new(format!("g{i}")),
                    similarity: 1.0,
                })
                .collect(),
        };
        let r = event_f1(&m, 4, 8).unwrap();
        assert_eq!((r.precision, r.recall), (0.5, 0.25));
        assert!((r.f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(event_f1(&EventMatching::default(), 3, 3).unwrap(), Prf::new(0.0, 0.0));
        assert!(event_f1(&m, 0, 3).is_err());
    }

    #[test]
    fn identical_schemas_score_one() {
        let g = schema(&["Crews contain the leak.", "Officials issue a warning.", "Water is tested."], &[(0, 1), (1, 2)]);
        let (r, m) = evaluate(&g, &g, &TrigramEmbedder::default(), None).unwrap();
        assert!(m.pairs.iter().all(|p| p.pred == p.gold && (p.similarity - 1.0).abs() < 1e-9));
        for prf in [r.event, r.temporal, r.hierarchical] {
            assert!((prf.f1 - 1.0).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn direction_and_unmatched() {
        let gold = schema(&["Crews contain the leak.", "Officials issue a warning."], &[(1, 0)]);
        let pred = schema(&["Crews contain the leak.", "Officials issue a warning."], &[(0, 1)]);
        let (r, _) = evaluate(&pred, &gold, &TrigramEmbedder::default(), None).unwrap();
        assert_eq!(r.temporal.precision, 0.0);
        assert_eq!(r.temporal.recall, 0.0);

        // Third predicted event has no partner, so its edge is not counted.
        let pred = schema(
            &["Crews contain the leak.", "Officials issue a warning.", "Fish die downstream."],
            &[(1, 0), (0, 2)],
        );
        let (r, m) = evaluate(&pred, &gold, &TrigramEmbedder::default(), None).unwrap();
        assert_eq!(m.pairs.len(), 2);
        assert_eq!(r.temporal, Prf::new(1.0, 1.0));
    }

    #[test]
    fn threshold_drops_weak_pairs() {
        let gold = schema(&["Crews contain the leak."], &[]);
        let pred = schema(&["Zebra quantum xylophone."], &[]);
        let e = TrigramEmbedder::default();
        assert_eq!(match_events(&pred, &gold, &e, None).unwrap().pairs.len(), 1);
        assert!(match_events(&pred, &gold, &e, Some(0.99)).unwrap().pairs.is_empty());
    }

    #[test]
    fn csv_rows() {
        let g = schema(&["a b c.", "d e f."], &[]);
        let (_, m) = evaluate(&g, &g, &TrigramEmbedder::default(), None).unwrap();
        let mut buf = Vec::new();
        write_pairs_csv(&m, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next(), Some("pred_id,gold_id,similarity"));
        assert_eq!(s.lines().count(), 3);
    }
}
