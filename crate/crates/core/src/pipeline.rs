//! Three-stage schema induction: skeleton construction, event expansion with
//! validation, and pairwise relation verification followed by graph repair.
//!
//! Independent LLM calls inside a stage run on a rayon pool; results are
//! merged in sorted order, so the output does not depend on the pool size.
//! Candidate validation is sequential because each admission changes what
//! later candidates are compared against.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finalize::{complete_connectivity, finalize_chapter, RemovalReason, WeightedDigraph};
use crate::llm::{request_key, CompletionRequest, CompletionResponse, LlmError, Provider, Sampling};
use crate::prompts::{
    assign_name, parse_event_list, parse_yes_no, AnswerDistribution, MaxTokens, PromptError, TemplateId, TemplateSet,
};
use crate::relation::{edge_weight, resolve, score_pair, PairRelation, RelationScores, RelationThresholds};
use crate::retrieval::{augment_prompt, Passage, Retriever};
use crate::schema::{ChapterSpec, Edge, EdgeKind, Event, EventId, Provenance, SchemaError, SchemaGraph, Violation};
use crate::similarity::{compare_texts, DuplicateThresholds, EmbeddingProvider, EventText, SimilarityError};

/// Weight of edges proposed by expansion prompts before verification.
pub const PROVISIONAL_WEIGHT: f64 = 0.5;
/// Words kept when a description has to stand in for an empty name.
pub const FALLBACK_NAME_WORDS: usize = 6;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("chapter {chapter}: skeleton had {found} events after {attempts} attempts, need {min}")]
    TooFewEvents {
        chapter: EventId,
        found: usize,
        min: usize,
        attempts: u32,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("finalized schema violates {} invariant(s): {:?}", .0.len(), .0)]
    Integrity(Vec<Violation>),
}

/// Which stages prepend retrieved passages to their prompts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalStages {
    pub skeleton: bool,
    pub expansion: bool,
    /// Passages per prompt.
    pub k: usize,
}

impl Default for RetrievalStages {
    fn default() -> Self {
        RetrievalStages {
            skeleton: true,
            expansion: true,
            k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub min_events_per_chapter: usize,
    pub max_events_per_chapter: usize,
    /// Extra skeleton attempts after the first.
    pub max_resamples: u32,
    pub retrieval: RetrievalStages,
    pub sampling: Sampling,
    pub max_tokens: MaxTokens,
    pub duplicate: DuplicateThresholds,
    pub relation: RelationThresholds,
    pub skip_expansion: bool,
    pub complete_connectivity: bool,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            min_events_per_chapter: 3,
            max_events_per_chapter: 10,
            max_resamples: 5,
            retrieval: RetrievalStages::default(),
            sampling: Sampling::default(),
            max_tokens: MaxTokens::default(),
            duplicate: DuplicateThresholds::default(),
            relation: RelationThresholds::default(),
            skip_expansion: false,
            complete_connectivity: false,
            jobs: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.min_events_per_chapter < 1 || self.min_events_per_chapter > self.max_events_per_chapter {
            return bad("need 1 <= min_events_per_chapter <= max_events_per_chapter");
        }
        if self.max_resamples < 1 {
            return bad("max_resamples must be positive");
        }
        if self.jobs < 1 {
            return bad("jobs must be positive");
        }
        let s = &self.sampling;
        if s.temperature < 0.0 || !(s.top_p > 0.0 && s.top_p <= 1.0) {
            return bad("sampling needs temperature >= 0 and 0 < top_p <= 1");
        }
        Ok(())
    }
}

/// External services the pipeline talks to.
#[derive(Clone, Copy)]
pub struct Deps<'a> {
    pub provider: &'a dyn Provider,
    pub retriever: Option<&'a dyn Retriever>,
    pub embedder: &'a dyn EmbeddingProvider,
    pub templates: &'a TemplateSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Chapters,
    Skeleton,
    Expansion,
    Verification,
    Finalize,
}

/// Which validation step turned a candidate away.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Duplication,
    Specificity,
    Naming,
    Chapter,
}

/// One line of the stage trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "kebab-case")]
pub enum TraceEntry {
    LlmCall {
        stage: Stage,
        chapter: EventId,
        key: String,
        attempt: u32,
        prompt: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        passages: Vec<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        response: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    SkeletonParsed {
        chapter: EventId,
        attempt: u32,
        items: Vec<String>,
    },
    Resample {
        chapter: EventId,
        attempt: u32,
        found: usize,
    },
    Truncated {
        chapter: EventId,
        kept: usize,
        dropped: Vec<String>,
    },
    Candidate {
        chapter: EventId,
        seed: EventId,
        template: TemplateId,
        description: String,
    },
    CheckPassed {
        chapter: EventId,
        description: String,
        check: Check,
        #[serde(skip_serializing_if = "Option::is_none")]
        answer: Option<AnswerDistribution>,
    },
    Rejected {
        chapter: EventId,
        description: String,
        check: Check,
        reason: String,
    },
    CapReached {
        chapter: EventId,
        skipped: usize,
    },
    EventAdded {
        stage: Stage,
        id: EventId,
        name: String,
        description: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        chapter: Option<EventId>,
    },
    EdgeAdded {
        stage: Stage,
        src: EventId,
        dst: EventId,
        kind: EdgeKind,
        weight: f64,
    },
    PairScored {
        chapter: EventId,
        e1: EventId,
        e2: EventId,
        start_before: f64,
        end_before: f64,
        duration_longer: f64,
        relation: PairRelation,
        replaced: Vec<Edge>,
    },
    PairFailed {
        chapter: EventId,
        e1: EventId,
        e2: EventId,
        error: String,
    },
    EdgeRemoved {
        src: EventId,
        dst: EventId,
        kind: EdgeKind,
        weight: f64,
        reason: RemovalReason,
    },
    Connectivity {
        chapter: EventId,
        added: usize,
        connected: bool,
    },
    StageFailed {
        stage: Stage,
        chapter: EventId,
        error: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTrace {
    pub entries: Vec<TraceEntry>,
}

impl StageTrace {
    pub fn push(&mut self, e: TraceEntry) {
        self.entries.push(e);
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("trace entry serializes"));
            out.push('\n');
        }
        out
    }
}

/// Provider wrapper that remembers every call made through it, so calls made
/// on worker threads can be merged into the trace in a fixed order.
struct Logged<'a> {
    inner: &'a dyn Provider,
    calls: Mutex<Vec<(CompletionRequest, Result<CompletionResponse, String>)>>,
}

impl<'a> Logged<'a> {
    fn new(inner: &'a dyn Provider) -> Self {
        Logged {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    fn drain_into(self, trace: &mut StageTrace, stage: Stage, chapter: &EventId, passages: &[Passage]) {
        let passage_ids: Vec<String> = passages.iter().map(|p| p.id.clone()).collect();
        for (req, res) in self.calls.into_inner().expect("log mutex") {
            let (response, error) = match res {
                Ok(r) => (Some(r.text), None),
                Err(e) => (None, Some(e)),
            };
            trace.push(TraceEntry::LlmCall {
                stage,
                chapter: chapter.clone(),
                key: request_key(&req),
                attempt: req.attempt,
                prompt: req.prompt,
                passages: passage_ids.clone(),
                response,
                error,
            });
        }
    }
}

impl Provider for Logged<'_> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let res = self.inner.complete(req);
        let logged = res.as_ref().map(Clone::clone).map_err(ToString::to_string);
        self.calls.lock().expect("log mutex").push((req.clone(), logged));
        res
    }
}

/// First six words of a description, used when naming returns nothing.
pub fn fallback_name(description: &str) -> String {
    description
        .split_whitespace()
        .take(FALLBACK_NAME_WORDS)
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .to_string()
}

fn name_for(provider: &dyn Provider, deps: &Deps<'_>, cfg: &PipelineConfig, description: &str) -> Result<String, PromptError> {
    let name = assign_name(provider, deps.templates, &cfg.sampling, cfg.max_tokens.naming, description)?;
    Ok(if name.is_empty() { fallback_name(description) } else { name })
}

fn retrieve(deps: &Deps<'_>, enabled: bool, k: usize, query: &str) -> Vec<Passage> {
    match deps.retriever {
        Some(r) if enabled && k > 0 => r.search(query, k).into_iter().map(|s| s.passage).collect(),
        _ => Vec::new(),
    }
}

fn chapter_event(g: &SchemaGraph, chapter: &EventId) -> Result<Event, PipelineError> {
    match g.event(chapter) {
        Some(c) if c.is_chapter => Ok(c.clone()),
        _ => Err(SchemaError::UnknownEvent(chapter.clone()).into()),
    }
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool")
}

/// Builds the chapter's temporal chain of major events. Resamples while the
/// list is shorter than the minimum and truncates it at the maximum.
pub fn build_skeleton(
    g: &mut SchemaGraph,
    chapter: &EventId,
    deps: &Deps<'_>,
    cfg: &PipelineConfig,
    trace: &mut StageTrace,
) -> Result<Vec<EventId>, PipelineError> {
    let ch = chapter_event(g, chapter)?;
    let prompt = deps.templates.render(
        TemplateId::Skeleton,
        &[
            ("evt.name", ch.name.as_str()),
            ("evt.description", ch.description.as_str()),
            ("scenario", g.scenario()),
        ],
    )?;
    let passages = retrieve(deps, cfg.retrieval.skeleton, cfg.retrieval.k, &prompt);
    let prompt = augment_prompt(&passages, &prompt);

    let mut items = Vec::new();
    let attempts = cfg.max_resamples + 1;
    for attempt in 0..attempts {
        let logged = Logged::new(deps.provider);
        let req = CompletionRequest::new(prompt.clone(), &cfg.sampling, cfg.max_tokens.list).with_attempt(attempt);
        let res = logged.complete(&req);
        logged.drain_into(trace, Stage::Skeleton, chapter, &passages);
        items = parse_event_list(&res?.text).items;
        trace.push(TraceEntry::SkeletonParsed {
            chapter: chapter.clone(),
            attempt,
            items: items.clone(),
        });
        if items.len() >= cfg.min_events_per_chapter {
            break;
        }
        if attempt + 1 < attempts {
            trace.push(TraceEntry::Resample {
                chapter: chapter.clone(),
                attempt: attempt + 1,
                found: items.len(),
            });
        }
    }
    if items.len() < cfg.min_events_per_chapter {
        return Err(PipelineError::TooFewEvents {
            chapter: chapter.clone(),
            found: items.len(),
            min: cfg.min_events_per_chapter,
            attempts,
        });
    }
    if items.len() > cfg.max_events_per_chapter {
        let dropped = items.split_off(cfg.max_events_per_chapter);
        trace.push(TraceEntry::Truncated {
            chapter: chapter.clone(),
            kept: items.len(),
            dropped,
        });
    }

    let named: Vec<(Logged<'_>, Result<String, PromptError>)> = pool(cfg.jobs).install(|| {
        items
            .par_iter()
            .map(|d| {
                let logged = Logged::new(deps.provider);
                let name = name_for(&logged, deps, cfg, d);
                (logged, name)
            })
            .collect()
    });

    let mut ids = Vec::with_capacity(items.len());
    for (description, (logged, name)) in items.iter().zip(named) {
        logged.drain_into(trace, Stage::Skeleton, chapter, &[]);
        let name = name?;
        let id = g.add_child(chapter, &name, description, Provenance::Skeleton)?;
        trace.push(TraceEntry::EventAdded {
            stage: Stage::Skeleton,
            id: id.clone(),
            name,
            description: description.clone(),
            chapter: Some(chapter.clone()),
        });
        if let Some(prev) = ids.last() {
            let e = Edge::temporal(EventId::clone(prev), id.clone());
            trace.push(edge_added(Stage::Skeleton, &e));
            g.upsert_edge(e)?;
        }
        ids.push(id);
    }
    Ok(ids)
}

fn edge_added(stage: Stage, e: &Edge) -> TraceEntry {
    TraceEntry::EdgeAdded {
        stage,
        src: e.src.clone(),
        dst: e.dst.clone(),
        kind: e.kind,
        weight: e.weight,
    }
}

/// Edge between a seed and an event found by asking `template` about it.
pub fn provisional_edge(template: TemplateId, seed: &EventId, new: &EventId) -> Option<Edge> {
    let (src, dst, kind) = match template {
        TemplateId::ExpansionDuring | TemplateId::ExpansionSteps => (seed, new, EdgeKind::Hierarchical),
        TemplateId::ExpansionAfter | TemplateId::ExpansionConsequences => (seed, new, EdgeKind::Temporal),
        TemplateId::ExpansionBefore | TemplateId::ExpansionCauses => (new, seed, EdgeKind::Temporal),
        _ => return None,
    };
    Some(Edge::new(src.clone(), dst.clone(), kind, PROVISIONAL_WEIGHT))
}

/// Outcome of a yes/no validation question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    pub verdict: bool,
    /// `None` when the answer could not be parsed.
    pub answer: Option<AnswerDistribution>,
}

/// True when the text names specific entities, numbers, places or dates.
/// Ties and unparseable answers count as too specific.
pub fn run_specificity_test(
    provider: &dyn Provider,
    templates: &TemplateSet,
    sampling: &Sampling,
    max_tokens: u32,
    text: &str,
) -> Result<TestOutcome, PipelineError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(PromptError::EmptyDescription.into());
    }
    let prompt = templates.render(TemplateId::Specificity, &[("evt.description", text)])?;
    let resp = provider.complete(&CompletionRequest::new(prompt, sampling, max_tokens))?;
    let answer = parse_yes_no(&resp).ok();
    Ok(TestOutcome {
        verdict: answer.is_none_or(|a| a.yes >= a.no),
        answer,
    })
}

/// True when the model says `e` is part of `chapter`: yes must outweigh both
/// no and unknown.
pub fn run_chapter_test(
    provider: &dyn Provider,
    templates: &TemplateSet,
    sampling: &Sampling,
    max_tokens: u32,
    chapter: &Event,
    e: &Event,
) -> Result<TestOutcome, PipelineError> {
    let prompt = templates.render(
        TemplateId::ChapterTest,
        &[
            ("chapter_evt.name", chapter.name.as_str()),
            ("chapter_evt.description", chapter.description.as_str()),
            ("evt.name", e.name.as_str()),
            ("evt.description", e.description.as_str()),
        ],
    )?;
    let resp = provider.complete(&CompletionRequest::new(prompt, sampling, max_tokens))?;
    let answer = parse_yes_no(&resp).ok();
    Ok(TestOutcome {
        verdict: answer.is_some_and(|a| a.yes > a.no && a.yes > a.unknown),
        answer,
    })
}

struct EmbeddingCache<'a> {
    embedder: &'a dyn EmbeddingProvider,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingCache<'_> {
    fn get(&mut self, text: &str) -> Result<&[f64], SimilarityError> {
        if !self.vectors.contains_key(text) {
            let v = self.embedder.embed(text)?;
            self.vectors.insert(text.to_string(), v);
        }
        Ok(&self.vectors[text])
    }
}

/// First existing event the candidate duplicates, with the firing clause.
fn find_duplicate(
    g: &SchemaGraph,
    cache: &mut EmbeddingCache<'_>,
    candidate: EventText<'_>,
    t: &DuplicateThresholds,
) -> Result<Option<(EventId, &'static str)>, SimilarityError> {
    let cv = cache.get(candidate.description)?.to_vec();
    for e in g.events() {
        let ev = cache.get(&e.description)?;
        let verdict = compare_texts(candidate, &cv, e.into(), ev, t)?;
        if let Some(reason) = verdict.reason(t) {
            return Ok(Some((e.id.clone(), reason)));
        }
    }
    Ok(None)
}

/// Asks the six expansion questions about every current chapter member and
/// admits candidates that pass duplication, specificity and chapter tests.
pub fn expand_events(
    g: &mut SchemaGraph,
    chapter: &EventId,
    deps: &Deps<'_>,
    cfg: &PipelineConfig,
    trace: &mut StageTrace,
) -> Result<Vec<EventId>, PipelineError> {
    let ch = chapter_event(g, chapter)?;
    let seeds: Vec<Event> = g.chapter_members(chapter).into_iter().cloned().collect();
    let work: Vec<(&Event, TemplateId)> = seeds
        .iter()
        .flat_map(|s| TemplateId::EXPANSION.into_iter().map(move |t| (s, t)))
        .collect();

    type Asked<'p> = (Logged<'p>, Vec<Passage>, Result<Vec<String>, PipelineError>);
    let asked: Vec<Asked<'_>> = pool(cfg.jobs).install(|| {
        work.par_iter()
            .map(|(seed, template)| {
                let logged = Logged::new(deps.provider);
                let mut passages = Vec::new();
                let items = (|| {
                    let prompt = deps.templates.render(
                        *template,
                        &[("evt.name", seed.name.as_str()), ("evt.description", seed.description.as_str())],
                    )?;
                    passages = retrieve(deps, cfg.retrieval.expansion, cfg.retrieval.k, &prompt);
                    let prompt = augment_prompt(&passages, &prompt);
                    let resp = logged.complete(&CompletionRequest::new(prompt, &cfg.sampling, cfg.max_tokens.list))?;
                    Ok(parse_event_list(&resp.text).items)
                })();
                (logged, passages, items)
            })
            .collect()
    });

    let mut candidates = Vec::new();
    for ((seed, template), (logged, passages, items)) in work.iter().zip(asked) {
        logged.drain_into(trace, Stage::Expansion, chapter, &passages);
        match items {
            Ok(items) => candidates.extend(items.into_iter().map(|d| (*seed, *template, d))),
            Err(e) => trace.push(TraceEntry::StageFailed {
                stage: Stage::Expansion,
                chapter: chapter.clone(),
                error: format!("{template} on {}: {e}", seed.id),
            }),
        }
    }

    let mut cache = EmbeddingCache {
        embedder: deps.embedder,
        vectors: HashMap::new(),
    };
    let mut admitted = Vec::new();
    let total = candidates.len();
    for (i, (seed, template, description)) in candidates.into_iter().enumerate() {
        if g.chapter_members(chapter).len() >= cfg.max_events_per_chapter {
            trace.push(TraceEntry::CapReached {
                chapter: chapter.clone(),
                skipped: total - i,
            });
            break;
        }
        trace.push(TraceEntry::Candidate {
            chapter: chapter.clone(),
            seed: seed.id.clone(),
            template,
            description: description.clone(),
        });
        let logged = Logged::new(deps.provider);
        let outcome = admit_candidate(g, &ch, &description, &logged, deps, cfg, &mut cache, trace);
        logged.drain_into(trace, Stage::Expansion, chapter, &[]);
        let name = match outcome {
            Ok(Some(name)) => name,
            Ok(None) => continue,
            Err((check, e)) => {
                trace.push(TraceEntry::Rejected {
                    chapter: chapter.clone(),
                    description,
                    check,
                    reason: format!("error: {e}"),
                });
                continue;
            }
        };
        let id = g.add_child(chapter, &name, &description, Provenance::Expansion)?;
        trace.push(TraceEntry::EventAdded {
            stage: Stage::Expansion,
            id: id.clone(),
            name,
            description,
            chapter: Some(chapter.clone()),
        });
        if let Some(e) = provisional_edge(template, &seed.id, &id) {
            trace.push(edge_added(Stage::Expansion, &e));
            g.upsert_edge(e)?;
        }
        admitted.push(id);
    }
    Ok(admitted)
}

/// Runs the validation chain on one candidate. `Ok(Some(name))` admits it,
/// `Ok(None)` means a check rejected it (already traced).
#[allow(clippy::too_many_arguments)]
fn admit_candidate(
    g: &SchemaGraph,
    chapter: &Event,
    description: &str,
    provider: &dyn Provider,
    deps: &Deps<'_>,
    cfg: &PipelineConfig,
    cache: &mut EmbeddingCache<'_>,
    trace: &mut StageTrace,
) -> Result<Option<String>, (Check, PipelineError)> {
    let reject = |trace: &mut StageTrace, check: Check, reason: String| {
        trace.push(TraceEntry::Rejected {
            chapter: chapter.id.clone(),
            description: description.to_string(),
            check,
            reason,
        });
        Ok(None)
    };
    let passed = |trace: &mut StageTrace, check: Check, answer: Option<AnswerDistribution>| {
        trace.push(TraceEntry::CheckPassed {
            chapter: chapter.id.clone(),
            description: description.to_string(),
            check,
            answer,
        });
    };

    let unnamed = EventText {
        name: None,
        description,
    };
    let dup = find_duplicate(g, cache, unnamed, &cfg.duplicate).map_err(|e| (Check::Duplication, e.into()))?;
    if let Some((id, why)) = dup {
        return reject(trace, Check::Duplication, format!("{why} match with {id}"));
    }

    let spec = run_specificity_test(
        provider,
        deps.templates,
        &cfg.sampling,
        cfg.max_tokens.answer,
        description,
    )
    .map_err(|e| (Check::Specificity, e))?;
    if spec.verdict {
        let why = match spec.answer {
            Some(a) => format!("too specific (yes {:.4}, no {:.4})", a.yes, a.no),
            None => "unparseable answer".to_string(),
        };
        return reject(trace, Check::Specificity, why);
    }
    passed(trace, Check::Specificity, spec.answer);

    let name = name_for(provider, deps, cfg, description).map_err(|e| (Check::Naming, e.into()))?;
    let named = EventText {
        name: Some(&name),
        description,
    };
    let dup = find_duplicate(g, cache, named, &cfg.duplicate).map_err(|e| (Check::Duplication, e.into()))?;
    if let Some((id, why)) = dup {
        return reject(trace, Check::Duplication, format!("{why} match with {id}"));
    }
    passed(trace, Check::Duplication, None);

    let probe = Event {
        id: EventId::new("candidate"),
        name: name.clone(),
        description: description.to_string(),
        is_chapter: false,
        chapter: Some(chapter.id.clone()),
        provenance: Provenance::Expansion,
    };
    let member = run_chapter_test(provider, deps.templates, &cfg.sampling, cfg.max_tokens.answer, chapter, &probe)
        .map_err(|e| (Check::Chapter, e))?;
    if !member.verdict {
        let why = match member.answer {
            Some(a) => format!("not part of chapter (yes {:.4}, no {:.4})", a.yes, a.no),
            None => "unparseable answer".to_string(),
        };
        return reject(trace, Check::Chapter, why);
    }
    passed(trace, Check::Chapter, member.answer);
    Ok(Some(name))
}

/// Scores every pair of chapter members, replaces their edges with the
/// resolved relation, then repairs the chapter graph.
pub fn verify_relations(
    g: &mut SchemaGraph,
    chapter: &EventId,
    deps: &Deps<'_>,
    cfg: &PipelineConfig,
    trace: &mut StageTrace,
) -> Result<(), PipelineError> {
    chapter_event(g, chapter)?;
    let members: Vec<Event> = g.chapter_members(chapter).into_iter().cloned().collect();
    let pairs: Vec<(&Event, &Event)> = members
        .iter()
        .enumerate()
        .flat_map(|(i, a)| members[i + 1..].iter().map(move |b| (a, b)))
        .collect();

    let scored: Vec<(Logged<'_>, Result<RelationScores, String>)> = pool(cfg.jobs).install(|| {
        pairs
            .par_iter()
            .map(|(a, b)| {
                let logged = Logged::new(deps.provider);
                let s = score_pair(&logged, deps.templates, &cfg.sampling, cfg.max_tokens.answer, a, b)
                    .map_err(|e| e.to_string());
                (logged, s)
            })
            .collect()
    });

    let mut candidates = Vec::new();
    for ((a, b), (logged, scores)) in pairs.iter().zip(scored) {
        logged.drain_into(trace, Stage::Verification, chapter, &[]);
        let scores = match scores {
            Ok(s) => s,
            Err(error) => {
                trace.push(TraceEntry::PairFailed {
                    chapter: chapter.clone(),
                    e1: a.id.clone(),
                    e2: b.id.clone(),
                    error,
                });
                continue;
            }
        };
        let relation = resolve(&scores, &cfg.relation);
        let replaced = g.clear_pair(&a.id, &b.id);
        trace.push(TraceEntry::PairScored {
            chapter: chapter.clone(),
            e1: a.id.clone(),
            e2: b.id.clone(),
            start_before: scores.start_before,
            end_before: scores.end_before,
            duration_longer: scores.duration_longer,
            relation,
            replaced,
        });
        if let Ok(w) = edge_weight(&scores, relation) {
            if let Some(e) = relation.edge(a, b, w) {
                trace.push(edge_added(Stage::Verification, &e));
                g.upsert_edge(e)?;
            }
        }
        // Better temporal direction, for connectivity completion.
        let fwd = (scores.start_before + scores.end_before) / 2.0;
        let bwd = 1.0 - fwd;
        candidates.push(if fwd >= bwd {
            (a.id.clone(), b.id.clone(), fwd)
        } else {
            (b.id.clone(), a.id.clone(), bwd)
        });
    }

    for r in finalize_chapter(g, chapter) {
        trace.push(TraceEntry::EdgeRemoved {
            src: r.src,
            dst: r.dst,
            kind: r.kind,
            weight: r.weight,
            reason: r.reason,
        });
    }

    if cfg.complete_connectivity {
        let ids: BTreeSet<EventId> = members.iter().map(|e| e.id.clone()).collect();
        let temporal = WeightedDigraph::from_parts(ids.iter().cloned(), g.kind_edges(EdgeKind::Temporal, &ids));
        let done = complete_connectivity(&temporal, &candidates);
        for (s, d, w) in &done.added {
            let e = Edge::new(s.clone(), d.clone(), EdgeKind::Temporal, *w);
            trace.push(edge_added(Stage::Finalize, &e));
            g.upsert_edge(e)?;
        }
        trace.push(TraceEntry::Connectivity {
            chapter: chapter.clone(),
            added: done.added.len(),
            connected: done.connected,
        });
    }
    Ok(())
}

/// A failed run with everything traced up to the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct InduceFailure {
    pub error: PipelineError,
    pub trace: StageTrace,
    pub partial: Option<SchemaGraph>,
}

/// Runs all three stages on every chapter, in chapter id order.
pub fn induce(
    scenario: &str,
    chapters: Option<&ChapterSpec>,
    deps: &Deps<'_>,
    cfg: &PipelineConfig,
) -> Result<(SchemaGraph, StageTrace), Box<InduceFailure>> {
    let mut trace = StageTrace::default();
    let fail = |error: PipelineError, trace: StageTrace, partial: Option<SchemaGraph>| {
        Box::new(InduceFailure { error, trace, partial })
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, trace, None));
    }
    let mut g = match SchemaGraph::new(scenario, chapters) {
        Ok(g) => g,
        Err(e) => return Err(fail(e.into(), trace, None)),
    };
    for c in g.chapters() {
        trace.push(TraceEntry::EventAdded {
            stage: Stage::Chapters,
            id: c.id.clone(),
            name: c.name.clone(),
            description: c.description.clone(),
            chapter: None,
        });
    }
    for e in g.edges().collect::<Vec<_>>() {
        trace.push(edge_added(Stage::Chapters, &e));
    }

    let chapter_ids: Vec<EventId> = g.chapters().map(|c| c.id.clone()).collect();
    for chapter in &chapter_ids {
        let stages: [(Stage, bool); 3] = [
            (Stage::Skeleton, true),
            (Stage::Expansion, !cfg.skip_expansion),
            (Stage::Verification, true),
        ];
        for (stage, enabled) in stages {
            if !enabled {
                continue;
            }
            let res = match stage {
                Stage::Skeleton => build_skeleton(&mut g, chapter, deps, cfg, &mut trace).map(drop),
                Stage::Expansion => expand_events(&mut g, chapter, deps, cfg, &mut trace).map(drop),
                _ => verify_relations(&mut g, chapter, deps, cfg, &mut trace),
            };
            if let Err(e) = res {
                trace.push(TraceEntry::StageFailed {
                    stage,
                    chapter: chapter.clone(),
                    error: e.to_string(),
                });
                return Err(fail(e, trace, Some(g)));
            }
        }
    }

    let violations = g.check_integrity();
    if !violations.is_empty() {
        return Err(fail(PipelineError::Integrity(violations), trace, Some(g)));
    }
    Ok((g, trace))
}

/// Counts how many trace entries mention each event and edge; used to check
/// that everything in a schema is accounted for.
pub fn untraced_items(g: &SchemaGraph, trace: &StageTrace) -> Vec<String> {
    let mut events = BTreeSet::new();
    let mut edges: BTreeMap<(EdgeKind, EventId, EventId), ()> = BTreeMap::new();
    for e in &trace.entries {
        match e {
            TraceEntry::EventAdded { id, chapter, .. } => {
                events.insert(id.clone());
                if let Some(c) = chapter {
                    edges.insert((EdgeKind::Hierarchical, c.clone(), id.clone()), ());
                }
            }
            TraceEntry::EdgeAdded { src, dst, kind, .. } => {
                edges.insert((*kind, src.clone(), dst.clone()), ());
            }
            _ => {}
        }
    }
    let mut missing: Vec<String> = g
        .events()
        .filter(|e| !events.contains(&e.id))
        .map(|e| format!("event {}", e.id))
        .collect();
    missing.extend(
        g.edges()
            .filter(|e| !edges.contains_key(&(e.kind, e.src.clone(), e.dst.clone())))
            .map(|e| format!("{} edge {} -> {}", e.kind, e.src, e.dst)),
    );
    missing
}
