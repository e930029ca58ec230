//! Pairwise temporal/hierarchical relation decisions.
//!
//! Each ordered pair is probed with start, end and duration questions asked in
//! both orderings and both phrasings. The averaged answers are read against
//! the interval decision table:
//!
//! | relation      | starts before | ends before | longer |
//! |---------------|---------------|-------------|--------|
//! | e1 before e2  | yes           | yes         | -      |
//! | e1 after e2   | no            | no          | -      |
//! | e1 child of   | no            | yes         | no     |
//! | e1 parent of  | yes           | no          | yes    |
//! | overlap       | yes           | no          | no     |
//! | overlap       | no            | yes         | yes    |
//!
//! Overlapping pairs get no edge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{CompletionRequest, LlmError, Provider, Sampling};
use crate::prompts::{parse_yes_no, AnswerDistribution, PromptError, TemplateId, TemplateSet};
use crate::schema::{Edge, EdgeKind, Event};

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("no parseable answer for the {0} question")]
    Unanswered(&'static str),
    #[error("{0:?} carries no edge weight")]
    NoEdge(PairRelation),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Tolerance for threshold comparisons and tie detection, so mirrored scores
/// (`1 - x`) resolve symmetrically despite rounding.
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelationThresholds {
    /// Minimum supporting score for start/end answers.
    pub start_end_threshold: f64,
    /// Minimum supporting score for the duration answer.
    pub duration_threshold: f64,
}

impl Default for RelationThresholds {
    fn default() -> Self {
        RelationThresholds {
            start_end_threshold: 0.2,
            duration_threshold: 0.7,
        }
    }
}

/// One asked question and what it contributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub template: TemplateId,
    /// `true` when the question was asked as (e2, e1).
    pub swapped: bool,
    /// `true` when a "yes" supports the e1-first reading.
    pub aligned: bool,
    pub answer: Option<AnswerDistribution>,
}

impl Probe {
    /// Mass supporting the e1-first reading, `None` when unparseable.
    pub fn support(&self) -> Option<f64> {
        self.answer.map(|a| if self.aligned { a.yes } else { a.no })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationScores {
    /// Averaged support that e1 starts before e2.
    pub start_before: f64,
    /// Averaged support that e1 ends before e2.
    pub end_before: f64,
    /// Averaged support that e1 lasts longer than e2.
    pub duration_longer: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<Probe>,
}

impl RelationScores {
    pub fn new(start_before: f64, end_before: f64, duration_longer: f64) -> Self {
        RelationScores {
            start_before,
            end_before,
            duration_longer,
            probes: Vec::new(),
        }
    }

    /// The same scores seen from (e2, e1).
    pub fn swapped(&self) -> Self {
        RelationScores::new(1.0 - self.start_before, 1.0 - self.end_before, 1.0 - self.duration_longer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairRelation {
    /// e1 precedes e2.
    Before,
    /// e2 precedes e1.
    After,
    /// e1 is contained in e2.
    ChildOf,
    /// e1 contains e2.
    ParentOf,
    /// Temporal overlap: no edge.
    Overlap,
    /// No table row satisfied.
    None,
}

impl PairRelation {
    fn mirror(self) -> Self {
        match self {
            PairRelation::Before => PairRelation::After,
            PairRelation::After => PairRelation::Before,
            PairRelation::ChildOf => PairRelation::ParentOf,
            PairRelation::ParentOf => PairRelation::ChildOf,
            other => other,
        }
    }

    /// The schema edge this relation implies for the pair `(e1, e2)`.
    pub fn edge(self, e1: &Event, e2: &Event, weight: f64) -> Option<Edge> {
        let (a, b) = (e1.id.clone(), e2.id.clone());
        match self {
            PairRelation::Before => Some(Edge::new(a, b, EdgeKind::Temporal, weight)),
            PairRelation::After => Some(Edge::new(b, a, EdgeKind::Temporal, weight)),
            PairRelation::ChildOf => Some(Edge::new(b, a, EdgeKind::Hierarchical, weight)),
            PairRelation::ParentOf => Some(Edge::new(a, b, EdgeKind::Hierarchical, weight)),
            PairRelation::Overlap | PairRelation::None => None,
        }
    }
}

/// Which answer each table row needs, as (score index, wants yes).
/// Indices: 0 = start_before, 1 = end_before, 2 = duration_longer.
const ROWS: [(PairRelation, &[(usize, bool)]); 6] = [
    (PairRelation::Before, &[(0, true), (1, true)]),
    (PairRelation::After, &[(0, false), (1, false)]),
    (PairRelation::ChildOf, &[(0, false), (1, true), (2, false)]),
    (PairRelation::ParentOf, &[(0, true), (1, false), (2, true)]),
    (PairRelation::Overlap, &[(0, true), (1, false), (2, false)]),
    (PairRelation::Overlap, &[(0, false), (1, true), (2, true)]),
];

fn supporting(s: &RelationScores, row: &[(usize, bool)]) -> Vec<(usize, f64)> {
    let raw = [s.start_before, s.end_before, s.duration_longer];
    row.iter()
        .map(|&(i, yes)| (i, if yes { raw[i] } else { 1.0 - raw[i] }))
        .collect()
}

/// Picks the table row the scores satisfy. When several rows hold, the one
/// with the largest product of supporting scores wins; a tie between a row
/// and its mirror image yields `None`.
pub fn resolve(s: &RelationScores, t: &RelationThresholds) -> PairRelation {
    let satisfied: Vec<(PairRelation, f64)> = ROWS
        .iter()
        .filter_map(|(rel, row)| {
            let support = supporting(s, row);
            let ok = support.iter().all(|&(i, v)| {
                let threshold = if i == 2 { t.duration_threshold } else { t.start_end_threshold };
                v >= threshold - EPS
            });
            ok.then(|| (*rel, support.iter().map(|(_, v)| v).product()))
        })
        .collect();
    let Some(best) = satisfied.iter().map(|(_, p)| *p).reduce(f64::max) else {
        return PairRelation::None;
    };
    let tied: Vec<PairRelation> = satisfied
        .iter()
        .filter(|(_, p)| *p >= best - EPS)
        .map(|(r, _)| *r)
        .collect();
    if tied.iter().any(|r| *r != r.mirror() && tied.contains(&r.mirror())) {
        return PairRelation::None;
    }
    tied[0]
}

/// Mean of the supporting scores named by the relation's table row.
pub fn edge_weight(s: &RelationScores, r: PairRelation) -> Result<f64, RelationError> {
    let (_, row) = ROWS
        .iter()
        .find(|(rel, _)| *rel == r && r != PairRelation::Overlap)
        .ok_or(RelationError::NoEdge(r))?;
    let support = supporting(s, row);
    Ok(support.iter().map(|(_, v)| v).sum::<f64>() / support.len() as f64)
}

/// Question instantiations per dimension: (template, swapped, aligned).
const START_PROBES: [(TemplateId, bool, bool); 4] = [
    (TemplateId::RelStart, false, true),
    (TemplateId::RelStart, true, false),
    (TemplateId::RelStartAfter, false, false),
    (TemplateId::RelStartAfter, true, true),
];
const END_PROBES: [(TemplateId, bool, bool); 4] = [
    (TemplateId::RelEnd, false, true),
    (TemplateId::RelEnd, true, false),
    (TemplateId::RelEndAfter, false, false),
    (TemplateId::RelEndAfter, true, true),
];
const DURATION_PROBES: [(TemplateId, bool, bool); 2] =
    [(TemplateId::RelDuration, false, true), (TemplateId::RelDuration, true, false)];

/// Every probe for the pair, in a fixed order.
pub fn probe_plan() -> impl Iterator<Item = (TemplateId, bool, bool)> {
    START_PROBES.into_iter().chain(END_PROBES).chain(DURATION_PROBES)
}

/// Asks all ten relation questions for `(e1, e2)` and averages the
/// supporting masses per dimension. Unparseable answers are skipped; a
/// dimension with no parseable answer fails the pair.
pub fn score_pair(
    provider: &dyn Provider,
    templates: &TemplateSet,
    sampling: &Sampling,
    max_tokens: u32,
    e1: &Event,
    e2: &Event,
) -> Result<RelationScores, RelationError> {
    let mut probes = Vec::with_capacity(10);
    for (template, swapped, aligned) in probe_plan() {
        let (a, b) = if swapped { (e2, e1) } else { (e1, e2) };
        let prompt = templates.render(
            template,
            &[("e1.description", a.description.as_str()), ("e2.description", b.description.as_str())],
        )?;
        let resp = provider.complete(&CompletionRequest::new(prompt, sampling, max_tokens))?;
        probes.push(Probe {
            template,
            swapped,
            aligned,
            answer: parse_yes_no(&resp).ok(),
        });
    }
    scores_from_probes(probes)
}

/// Averages probe support per dimension.
pub fn scores_from_probes(probes: Vec<Probe>) -> Result<RelationScores, RelationError> {
    let mean = |dim: &'static str, ids: &[TemplateId]| -> Result<f64, RelationError> {
        let vals: Vec<f64> = probes
            .iter()
            .filter(|p| ids.contains(&p.template))
            .filter_map(Probe::support)
            .collect();
        if vals.is_empty() {
            return Err(RelationError::Unanswered(dim));
        }
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let start_before = mean("start", &[TemplateId::RelStart, TemplateId::RelStartAfter])?;
    let end_before = mean("end", &[TemplateId::RelEnd, TemplateId::RelEndAfter])?;
    let duration_longer = mean("duration", &[TemplateId::RelDuration])?;
    Ok(RelationScores {
        start_before,
        end_before,
        duration_longer,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> RelationThresholds {
        RelationThresholds::default()
    }

    fn probe(template: TemplateId, aligned: bool, yes: f64, no: f64) -> Probe {
        Probe {
            template,
            swapped: false,
            aligned,
            answer: Some(AnswerDistribution {
                yes,
                no,
                unknown: 1.0 - yes - no,
            }),
        }
    }

    fn filler() -> Vec<Probe> {
        vec![
            probe(TemplateId::RelEnd, true, 1.0, 0.0),
            probe(TemplateId::RelDuration, true, 1.0, 0.0),
        ]
    }

    #[test]
    fn start_averages() {
        let mut p = filler();
        p.extend(
            [0.8, 0.6, 0.7, 0.9]
                .iter()
                .map(|&y| probe(TemplateId::RelStart, true, y, 1.0 - y)),
        );
        assert!((scores_from_probes(p).unwrap().start_before - 0.75).abs() < 1e-12);

        let mut p = filler();
        p.extend((0..4).map(|_| probe(TemplateId::RelStart, true, 1.0, 0.0)));
        assert_eq!(scores_from_probes(p).unwrap().start_before, 1.0);

        // Unknown mass supports neither ordering.
        let mut p = filler();
        p.push(probe(TemplateId::RelStart, true, 0.0, 0.0));
        p.push(probe(TemplateId::RelStartAfter, false, 0.0, 0.0));
        assert_eq!(scores_from_probes(p).unwrap().start_before, 0.0);
    }

    #[test]
    fn reversed_probes_use_no_mass() {
        let mut p = filler();
        p.push(probe(TemplateId::RelStart, false, 0.1, 0.9));
        assert!((scores_from_probes(p).unwrap().start_before - 0.9).abs() < 1e-12);
    }

    #[test]
    fn all_unparseable_is_error() {
        let mut p = filler();
        p.push(Probe {
            template: TemplateId::RelStart,
            swapped: false,
            aligned: true,
            answer: None,
        });
        assert!(matches!(scores_from_probes(p), Err(RelationError::Unanswered("start"))));
    }

    #[test]
    fn table_examples() {
        assert_eq!(resolve(&RelationScores::new(0.9, 0.9, 0.5), &t()), PairRelation::Before);
        assert_eq!(resolve(&RelationScores::new(0.05, 0.9, 0.1), &t()), PairRelation::ChildOf);
        assert_eq!(resolve(&RelationScores::new(0.9, 0.05, 0.1), &t()), PairRelation::Overlap);
    }

    #[test]
    fn mirror_tie_gives_none() {
        // Before and After both hold with equal products.
        assert_eq!(resolve(&RelationScores::new(0.3, 0.7, 0.5), &t()), PairRelation::None);
    }

    #[test]
    fn weights() {
        let w = edge_weight(&RelationScores::new(0.9, 0.7, 0.0), PairRelation::Before).unwrap();
        assert!((w - 0.8).abs() < 1e-12);
        let w = edge_weight(&RelationScores::new(0.1, 0.9, 0.1), PairRelation::ChildOf).unwrap();
        assert!((w - 0.9).abs() < 1e-12);
        assert!(edge_weight(&RelationScores::new(0.9, 0.05, 0.1), PairRelation::Overlap).is_err());
        assert!(edge_weight(&RelationScores::new(0.9, 0.05, 0.1), PairRelation::None).is_err());
    }

    #[test]
    fn probe_plan_has_ten_questions() {
        assert_eq!(probe_plan().count(), 10);
        assert_eq!(probe_plan().filter(|p| p.2).count(), 5);
    }
}
