//! A small deterministic stand-in for a completion model.
//!
//! A [`World`] holds events with time intervals. [`ToyModel`] answers every
//! prompt the pipeline sends by reading the world: skeleton and expansion
//! lists, names, yes/no tests and interval questions. The bundled fixtures,
//! gold schemas and corpus are generated from it by [`generate`].

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use eventschema::llm::{CompletionRequest, CompletionResponse, LlmError, Provider, RecordingProvider};
use eventschema::pipeline::{induce, Deps, PipelineConfig};
use eventschema::prompts::TemplateSet;
use eventschema::retrieval::{read_corpus, PassageIndex};
use eventschema::schema::{ChapterDef, ChapterSpec, Edge, EdgeKind, EventId, Provenance, SchemaGraph};
use eventschema::similarity::TrigramEmbedder;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ask {
    During,
    Steps,
    After,
    Before,
    Consequences,
    Causes,
}

#[derive(Debug, Clone)]
pub struct WorldEvent {
    pub name: &'static str,
    pub description: &'static str,
    pub chapter: usize,
    pub start: f64,
    pub end: f64,
    /// Listed by the skeleton prompt; otherwise only found by expansion.
    pub skeleton: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flaw {
    /// Names specific people, places, numbers or dates.
    Specific,
    /// Belongs to a different chapter.
    OffChapter,
    /// Rewords an existing event.
    Paraphrase,
}

/// A wrong answer the model offers when asked `ask` about `seed`.
#[derive(Debug, Clone)]
pub struct Distractor {
    pub seed: &'static str,
    pub ask: Ask,
    pub name: &'static str,
    pub description: &'static str,
    pub flaw: Flaw,
}

#[derive(Debug, Clone)]
pub enum SkeletonPlan {
    /// Every skeleton event, by start time.
    Natural,
    /// The first `n[attempt]` skeleton events (last entry repeats).
    Lengths(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct World {
    pub scenario: &'static str,
    /// `None` means the default single chapter.
    pub chapters: Option<Vec<(&'static str, &'static str)>>,
    pub chapter_edges: Vec<[usize; 2]>,
    pub events: Vec<WorldEvent>,
    pub distractors: Vec<Distractor>,
    pub skeleton: SkeletonPlan,
}

const fn ev(name: &'static str, description: &'static str, chapter: usize, start: f64, end: f64, skeleton: bool) -> WorldEvent {
    WorldEvent {
        name,
        description,
        chapter,
        start,
        end,
        skeleton,
    }
}

/// Three chapters, fifteen events.
pub fn disease_outbreak() -> World {
    World {
        scenario: "disease outbreak",
        chapters: Some(vec![
            ("Outbreak", "A new infectious disease emerges and spreads through a population."),
            ("Response", "Governments and health workers act to contain the disease."),
            ("Impact", "The disease disrupts daily life and the economy."),
        ]),
        chapter_edges: vec![[0, 1], [1, 2]],
        events: vec![
            ev("Animal Spillover", "The pathogen jumps from animals to humans.", 0, -10.0, -2.0, false),
            ev("Emerge Pathogen", "A novel pathogen begins infecting people in a community.", 0, 0.0, 20.0, true),
            ev("Spread Disease", "The disease spreads quickly through crowded areas.", 0, 25.0, 60.0, true),
            ev("Transmit Virus", "Infected people pass the virus to their close contacts.", 0, 30.0, 50.0, false),
            ev("Identify Disease", "Health authorities identify the disease and confirm cases.", 0, 62.0, 80.0, true),
            ev("Declare Emergency", "The government declares a state of emergency.", 1, 100.0, 110.0, true),
            ev("Restrict Travel", "Authorities restrict travel in and out of affected regions.", 1, 111.0, 130.0, false),
            ev("Treat Patients", "Hospitals treat infected patients.", 1, 115.0, 170.0, true),
            ev("Isolate Patients", "Doctors isolate sick patients in separate wards.", 1, 118.0, 140.0, false),
            ev("Develop Vaccine", "Scientists develop a vaccine against the disease.", 1, 120.0, 185.0, true),
            ev("Lose Jobs", "Businesses close and many workers lose their jobs.", 2, 200.0, 240.0, true),
            ev("Move Classes Online", "Schools move their classes online.", 2, 210.0, 250.0, true),
            ev("Struggle Financially", "Families struggle to pay for food and housing.", 2, 215.0, 255.0, false),
            ev("Recover Economy", "The economy slowly recovers.", 2, 260.0, 300.0, true),
            ev("Rehire Staff", "Companies hire back the staff they let go.", 2, 265.0, 290.0, false),
        ],
        distractors: vec![
            Distractor {
                seed: "Emerge Pathogen",
                ask: Ask::Steps,
                name: "Emerge Pathogen",
                description: "A novel pathogen starts infecting people in a community.",
                flaw: Flaw::Paraphrase,
            },
            Distractor {
                seed: "Identify Disease",
                ask: Ask::During,
                name: "Report Cases",
                description: "On March 3, 2020, officials in Wuhan reported 41 cases.",
                flaw: Flaw::Specific,
            },
            Distractor {
                seed: "Identify Disease",
                ask: Ask::Consequences,
                name: "Close Borders",
                description: "Neighboring countries close their borders.",
                flaw: Flaw::OffChapter,
            },
            Distractor {
                seed: "Declare Emergency",
                ask: Ask::Causes,
                name: "Evacuate Mariupol",
                description: "About 100,000 people evacuated Mariupol.",
                flaw: Flaw::Specific,
            },
            Distractor {
                seed: "Treat Patients",
                ask: Ask::Consequences,
                name: "Lose Jobs",
                description: "Many workers lose their jobs as businesses close.",
                flaw: Flaw::OffChapter,
            },
            Distractor {
                seed: "Recover Economy",
                ask: Ask::Causes,
                name: "Develop Vaccine",
                description: "Scientists develop a vaccine for the disease.",
                flaw: Flaw::Paraphrase,
            },
        ],
        skeleton: SkeletonPlan::Natural,
    }
}

/// One chapter whose first skeleton answer is too short.
pub fn resample_drill() -> World {
    World {
        scenario: "flood evacuation",
        chapters: None,
        chapter_edges: Vec::new(),
        events: vec![
            ev("Issue Warning", "Forecasters issue a flood warning.", 0, 0.0, 5.0, true),
            ev("Pack Belongings", "Residents pack their essential belongings.", 0, 6.0, 10.0, true),
            ev("Leave Homes", "Families leave their homes for higher ground.", 0, 11.0, 20.0, true),
            ev("Open Shelters", "Volunteers open emergency shelters.", 0, 21.0, 40.0, true),
        ],
        distractors: Vec::new(),
        skeleton: SkeletonPlan::Lengths(vec![2, 4]),
    }
}

/// One chapter whose skeleton answer lists twelve events.
pub fn overflow_drill() -> World {
    let steps = [
        ("Get Engaged", "The couple gets engaged."),
        ("Set Budget", "The pair agrees on a spending limit."),
        ("Pick Date", "A wedding date is chosen."),
        ("Book Venue", "They reserve a hall for the celebration."),
        ("Send Invitations", "Invitations are mailed to friends and relatives."),
        ("Collect Replies", "Guests answer whether they will come."),
        ("Buy Outfits", "Formal clothes are bought and fitted."),
        ("Rehearse Ceremony", "The wedding party practices the ceremony."),
        ("Exchange Vows", "Bride and groom exchange vows."),
        ("Hold Reception", "Everyone celebrates at a reception with dinner and dancing."),
        ("Leave On Honeymoon", "Newlyweds depart on their honeymoon."),
        ("Send Thanks", "Thank-you notes go out to every guest."),
    ];
    World {
        scenario: "wedding planning",
        chapters: None,
        chapter_edges: Vec::new(),
        events: steps
            .iter()
            .enumerate()
            .map(|(i, (n, d))| ev(n, d, 0, i as f64 * 10.0, i as f64 * 10.0 + 8.0, true))
            .collect(),
        distractors: Vec::new(),
        skeleton: SkeletonPlan::Lengths(vec![12]),
    }
}

impl World {
    pub fn chapter_spec(&self) -> Option<ChapterSpec> {
        self.chapters.as_ref().map(|cs| ChapterSpec {
            chapters: cs
                .iter()
                .map(|(n, d)| ChapterDef {
                    name: n.to_string(),
                    description: d.to_string(),
                })
                .collect(),
            edges: self.chapter_edges.clone(),
        })
    }

    fn chapter_names(&self) -> Vec<String> {
        match &self.chapters {
            Some(cs) => cs.iter().map(|(n, _)| n.to_string()).collect(),
            None => vec![self.scenario.to_string()],
        }
    }

    fn by_description(&self, d: &str) -> Option<&WorldEvent> {
        self.events.iter().find(|e| e.description == d.trim())
    }

    fn in_chapter(&self, c: usize) -> impl Iterator<Item = &WorldEvent> {
        let mut v: Vec<&WorldEvent> = self.events.iter().filter(|e| e.chapter == c).collect();
        v.sort_by(|a, b| a.start.total_cmp(&b.start));
        v.into_iter()
    }

    /// `a` strictly inside `b`.
    fn contains(b: &WorldEvent, a: &WorldEvent) -> bool {
        b.start < a.start && a.end < b.end
    }

    /// `a` starts and ends before `b`.
    fn precedes(a: &WorldEvent, b: &WorldEvent) -> bool {
        a.start < b.start && a.end < b.end
    }

    fn related(&self, seed: &WorldEvent, ask: Ask) -> Vec<&'static str> {
        self.in_chapter(seed.chapter)
            .filter(|e| e.name != seed.name)
            .filter(|e| match ask {
                Ask::During | Ask::Steps => Self::contains(seed, e),
                Ask::After | Ask::Consequences => e.start >= seed.end,
                Ask::Before | Ask::Causes => e.end <= seed.start,
            })
            .map(|e| e.description)
            .collect()
    }

    /// The schema a perfect run would produce: all events, the Hasse
    /// diagrams of precedence and containment within each chapter, and the
    /// chapter order.
    pub fn gold(&self) -> SchemaGraph {
        let spec = self.chapter_spec();
        let mut g = SchemaGraph::new(self.scenario, spec.as_ref()).expect("valid world");
        let chapter_ids: Vec<EventId> = {
            let names = self.chapter_names();
            names
                .iter()
                .map(|n| g.chapters().find(|c| &c.name == n).expect("chapter").id.clone())
                .collect()
        };
        let mut ids = BTreeMap::new();
        for e in &self.events {
            let id = g
                .add_child(&chapter_ids[e.chapter], e.name, e.description, Provenance::Skeleton)
                .expect("distinct events");
            ids.insert(e.name, id);
        }
        for (c, chapter_id) in chapter_ids.iter().enumerate() {
            let members: Vec<&WorldEvent> = self.in_chapter(c).collect();
            let hasse = |rel: &dyn Fn(&WorldEvent, &WorldEvent) -> bool, a: &WorldEvent, b: &WorldEvent| {
                rel(a, b) && !members.iter().any(|m| rel(a, m) && rel(m, b))
            };
            let inside = |a: &WorldEvent, b: &WorldEvent| Self::contains(a, b);
            for a in &members {
                for b in &members {
                    if Self::precedes(a, b) && !Self::contains(a, b) && !Self::contains(b, a) {
                        let temporal = |x: &WorldEvent, y: &WorldEvent| {
                            Self::precedes(x, y) && !Self::contains(x, y) && !Self::contains(y, x)
                        };
                        if hasse(&temporal, a, b) {
                            g.upsert_edge(Edge::temporal(ids[a.name].clone(), ids[b.name].clone())).unwrap();
                        }
                    }
                    if hasse(&inside, a, b) {
                        g.remove_edge(chapter_id, &ids[b.name], EdgeKind::Hierarchical);
                        g.upsert_edge(Edge::hierarchical(ids[a.name].clone(), ids[b.name].clone())).unwrap();
                    }
                }
            }
        }
        g
    }
}

/// Answers prompts from a [`World`].
pub struct ToyModel {
    pub world: World,
}

fn yes_no(yes: bool) -> CompletionResponse {
    dist(if yes { [0.80, 0.08, 0.04] } else { [0.06, 0.82, 0.04] }, if yes { " Yes" } else { " No" })
}

fn dist(m: [f64; 3], text: &str) -> CompletionResponse {
    let mut pos = BTreeMap::new();
    pos.insert(" Yes".to_string(), m[0].ln());
    pos.insert(" No".to_string(), m[1].ln());
    pos.insert(" unknown".to_string(), m[2].ln());
    pos.insert(" yes".to_string(), (m[0] / 8.0).ln());
    pos.insert(" no".to_string(), (m[1] / 8.0).ln());
    CompletionResponse {
        text: text.to_string(),
        token_logprobs: vec![pos],
    }
}

fn unknown() -> CompletionResponse {
    dist([0.05, 0.05, 0.85], " unknown")
}

fn numbered(items: &[&str]) -> CompletionResponse {
    let text = items
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{}. {d}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    CompletionResponse::text(format!("\n{text}"))
}

fn between<'a>(s: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = s.find(open)? + open.len();
    let end = start + s[start..].find(close)?;
    Some(&s[start..end])
}

const EXPANSION_OPENERS: [(&str, Ask); 6] = [
    ("What happened during \"", Ask::During),
    ("What are the steps in \"", Ask::Steps),
    ("What happens after \"", Ask::After),
    ("What happened before \"", Ask::Before),
    ("List the consequences of \"", Ask::Consequences),
    ("List the possible causes of \"", Ask::Causes),
];

impl ToyModel {
    pub fn new(world: World) -> Self {
        ToyModel { world }
    }

    fn answer(&self, req: &CompletionRequest) -> CompletionResponse {
        // Retrieved passages are background only.
        let p = match req.prompt.strip_prefix("Based on the following passages ") {
            Some(rest) => &rest[rest.rfind(",\n").map_or(0, |i| i + 2)..],
            None => req.prompt.as_str(),
        };
        let w = &self.world;

        if p.starts_with("Give names to the described event.") {
            let d = p.rsplit("Description:").next().unwrap().trim_end_matches("Name:").trim();
            let name = w
                .by_description(d)
                .map(|e| e.name)
                .or_else(|| w.distractors.iter().find(|x| x.description == d).map(|x| x.name))
                .unwrap_or("");
            return CompletionResponse::text(format!(" {name}\n"));
        }
        if p.starts_with("Does the text contain any specific") {
            let d = p.rsplit("Text: ").next().unwrap().trim_end_matches("Answer:").trim();
            let specific = w.distractors.iter().any(|x| x.description == d && x.flaw == Flaw::Specific);
            return yes_no(specific);
        }
        if p.contains("List relevant events and edges in \"") {
            return self.dot_answer();
        }
        if p.contains(" is defined as \"") && p.ends_with("Answer yes or no.") {
            let lines: Vec<&str> = p.lines().collect();
            let chapter = lines[0].split(" is defined as ").next().unwrap();
            let d = between(lines[1], " is defined as \"", "\"").unwrap_or("");
            let names = w.chapter_names();
            let yes = w
                .by_description(d)
                .is_some_and(|e| names.get(e.chapter).is_some_and(|n| n.eq_ignore_ascii_case(chapter)));
            return yes_no(yes);
        }
        if let Some(chapter) = between(p, "List the major events that happen in the ", " of a ") {
            let c = w
                .chapter_names()
                .iter()
                .position(|n| n.eq_ignore_ascii_case(chapter))
                .unwrap_or(0);
            let all: Vec<&str> = w.in_chapter(c).filter(|e| e.skeleton).map(|e| e.description).collect();
            let n = match &w.skeleton {
                SkeletonPlan::Natural => all.len(),
                SkeletonPlan::Lengths(l) => l[(req.attempt as usize).min(l.len() - 1)],
            };
            return numbered(&all[..n.min(all.len())]);
        }
        for (opener, ask) in EXPANSION_OPENERS {
            if let Some(rest) = p.strip_prefix(opener) {
                // The consequences prompt never closes its quote.
                let d = rest.split('"').next().unwrap_or("").trim_end_matches(':');
                let Some(seed) = w.by_description(d) else {
                    return CompletionResponse::text("");
                };
                let mut items = w.related(seed, ask);
                items.extend(
                    w.distractors
                        .iter()
                        .filter(|x| x.seed == seed.name && x.ask == ask)
                        .map(|x| x.description),
                );
                return numbered(&items);
            }
        }
        if let Some(rest) = p.strip_prefix("Does \"") {
            let (a, rest) = rest.split_once("\" ").unwrap_or(("", ""));
            let (verb, rest) = rest.split_once(" \"").unwrap_or(("", ""));
            let b = rest.split('"').next().unwrap_or("");
            let (Some(x), Some(y)) = (w.by_description(a), w.by_description(b)) else {
                return unknown();
            };
            let truth = match verb {
                "start before" => x.start < y.start,
                "start after" => x.start > y.start,
                "end before" => x.end < y.end,
                "end after" => x.end > y.end,
                _ => return unknown(),
            };
            return yes_no(truth);
        }
        if let Some(rest) = p.strip_prefix("Is the duration of ") {
            let rest = rest.trim_end_matches("? Answer yes or no.");
            if let Some((a, b)) = rest.split_once(" longer than ") {
                if let (Some(x), Some(y)) = (w.by_description(a), w.by_description(b)) {
                    return yes_no(x.end - x.start > y.end - y.start);
                }
            }
            return unknown();
        }
        CompletionResponse::text("")
    }

    /// Continues a DOT prompt whose seed lines are the chapter names.
    fn dot_answer(&self) -> CompletionResponse {
        let w = &self.world;
        let chapters = w.chapter_names();
        let mut lines = Vec::new();
        let mut index = BTreeMap::new();
        let mut next = chapters.len();
        for e in &w.events {
            if e.skeleton {
                lines.push(format!("{next}: {}", e.description));
                index.insert(e.name, next);
                next += 1;
            }
        }
        lines.push("edges:".into());
        for pair in &w.chapter_edges {
            lines.push(format!("{}->{}[label='temporal']", pair[0], pair[1]));
        }
        for c in 0..chapters.len() {
            let sk: Vec<&WorldEvent> = w.in_chapter(c).filter(|e| e.skeleton).collect();
            for e in &sk {
                lines.push(format!("{c}->{}[label='hierarchical']", index[e.name]));
            }
            for pair in sk.windows(2) {
                lines.push(format!("{}->{}[label='temporal']", index[pair[0].name], index[pair[1].name]));
            }
        }
        // Models often reference an event they never listed.
        lines.push(format!("{}->{}[label='temporal']", next - 1, next));
        CompletionResponse::text(format!("\n{}", lines.join("\n")))
    }
}

impl Provider for ToyModel {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        req.validate()?;
        Ok(self.answer(req))
    }
}

const CORPUS_SENTENCES: [&str; 30] = [
    "A novel pathogen began infecting people in a crowded market town.",
    "Doctors noticed an unusual cluster of pneumonia cases.",
    "The disease spread quickly through crowded areas.",
    "Infected people passed the virus to their close contacts.",
    "Health authorities confirmed the first cases after laboratory tests.",
    "Researchers suspect the pathogen jumped from animals to humans.",
    "The government declared a state of emergency.",
    "Authorities restricted travel in and out of affected regions.",
    "Hospitals treated a growing number of infected patients.",
    "Doctors isolated sick patients in separate wards.",
    "Scientists raced to develop a vaccine against the disease.",
    "Clinical trials tested the vaccine on volunteers.",
    "Public health officials urged people to wash their hands.",
    "Masks became mandatory in shops and on public transport.",
    "Businesses closed and many workers lost their jobs.",
    "Schools moved their classes online.",
    "Families struggled to pay for food and housing.",
    "Food banks reported record demand.",
    "The economy slowly recovered as restrictions eased.",
    "Companies hired back the staff they had let go.",
    "Tourism collapsed during the worst months.",
    "Nurses worked long shifts to care for patients.",
    "Contact tracers called everyone who had met an infected person.",
    "Case numbers began to fall after several weeks.",
    "Some regions saw a second wave of infections.",
    "Governments approved emergency funding for hospitals.",
    "Testing sites opened in parking lots.",
    "Parents juggled work and home schooling.",
    "Small shops moved their sales online.",
    "Officials reviewed what went well and what failed.",
];

/// Fifty documents built from a fixed sentence pool; every fifth one is too
/// short to yield a passage.
pub fn corpus() -> Vec<(String, String)> {
    (0..50)
        .map(|i| {
            let len = if i % 5 == 4 { 3 } else { 4 + i % 7 };
            let text = (0..len)
                .map(|j| CORPUS_SENTENCES[(i * 7 + j * 11) % CORPUS_SENTENCES.len()])
                .collect::<Vec<_>>()
                .join(" ");
            (format!("doc{i:02}"), text)
        })
        .collect()
}

fn corpus_jsonl() -> String {
    corpus()
        .into_iter()
        .map(|(doc_id, text)| serde_json::json!({ "doc_id": doc_id, "text": text }).to_string() + "\n")
        .collect()
}

/// Runs the pipeline against the toy model, recording every completion.
/// Records are sorted by key so the store is independent of call order.
pub fn record_run(world: &World, corpus_path: Option<&Path>, store: &Path) -> io::Result<SchemaGraph> {
    let _ = fs::remove_file(store);
    let recorder = RecordingProvider::new(ToyModel::new(world.clone()), store).map_err(io::Error::other)?;
    let index = match corpus_path {
        Some(p) => Some(PassageIndex::from_documents(&read_corpus(p).map_err(io::Error::other)?)),
        None => None,
    };
    let templates = TemplateSet::default();
    let embedder = TrigramEmbedder::default();
    let deps = Deps {
        provider: &recorder,
        retriever: index.as_ref().map(|i| i as _),
        embedder: &embedder,
        templates: &templates,
    };
    let spec = world.chapter_spec();
    let result = induce(world.scenario, spec.as_ref(), &deps, &PipelineConfig::default());
    drop(recorder);
    sort_store(store)?;
    match result {
        Ok((g, _)) => Ok(g),
        Err(f) => Err(io::Error::other(f.error.to_string())),
    }
}

fn sort_store(path: &Path) -> io::Result<()> {
    let text = fs::read_to_string(path)?;
    let mut lines: Vec<(String, &str)> = text
        .lines()
        .map(|l| {
            let key = serde_json::from_str::<serde_json::Value>(l)
                .ok()
                .and_then(|v| v["key"].as_str().map(str::to_string))
                .unwrap_or_default();
            (key, l)
        })
        .collect();
    lines.sort();
    let out: String = lines.into_iter().map(|(_, l)| format!("{l}\n")).collect();
    fs::write(path, out)
}

/// Records the DOT baseline completion for `world`.
pub fn record_baseline(world: &World, store: &Path) -> io::Result<()> {
    use eventschema::dot::{parse_dot, render_dot_prompt, CHEMICAL_SPILL_EXAMPLE};
    use eventschema::llm::Sampling;
    use eventschema::prompts::MaxTokens;

    let _ = fs::remove_file(store);
    let recorder = RecordingProvider::new(ToyModel::new(world.clone()), store).map_err(io::Error::other)?;
    let example = parse_dot(CHEMICAL_SPILL_EXAMPLE).map_err(io::Error::other)?.doc;
    let names = world.chapter_names();
    let prompt = render_dot_prompt(world.scenario, world.chapters.as_ref().map(|_| names.as_slice()), &example);
    let req = CompletionRequest::new(prompt, &Sampling::default(), MaxTokens::default().dot);
    recorder.complete(&req).map_err(io::Error::other)?;
    Ok(())
}

/// Gold schema for the chemical-spill in-context example.
pub fn chemical_spill_gold() -> SchemaGraph {
    use eventschema::dot::{parse_dot, CHEMICAL_SPILL_EXAMPLE};
    let doc = parse_dot(CHEMICAL_SPILL_EXAMPLE).expect("bundled example").doc;
    let mut g = SchemaGraph::new("chemical spills", None).expect("scenario");
    let chapter = EventId::from("chemical-spills");
    let mut ids = BTreeMap::new();
    for (i, d) in &doc.events {
        let name = d.split_whitespace().take(4).collect::<Vec<_>>().join(" ");
        let name = name.trim_end_matches('.');
        ids.insert(*i, g.add_child(&chapter, name, d, Provenance::DotParse).expect("event"));
    }
    for e in &doc.edges {
        let (s, d) = (ids[&e.src].clone(), ids[&e.dst].clone());
        match e.label {
            eventschema::dot::DotLabel::Temporal => g.upsert_edge(Edge::temporal(s, d)).unwrap(),
            eventschema::dot::DotLabel::Hierarchical => {
                g.remove_edge(&chapter, &d, EdgeKind::Hierarchical);
                g.upsert_edge(Edge::hierarchical(s, d)).unwrap();
            }
        }
    }
    g
}

/// Writes every generated artifact under `data` (the core crate's data
/// directory).
pub fn generate(data: &Path) -> io::Result<()> {
    let toy = data.join("toy");
    let fixtures = data.join("fixtures");
    let gold = data.join("gold");
    for d in [&toy, &fixtures, &gold] {
        fs::create_dir_all(d)?;
    }
    let world = disease_outbreak();
    let spec = world.chapter_spec().expect("chapters");
    fs::write(toy.join("chapters.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    fs::write(toy.join("corpus.jsonl"), corpus_jsonl())?;
    fs::write(gold.join("disease_outbreak.json"), world.gold().to_json())?;
    fs::write(gold.join("chemical_spills.json"), chemical_spill_gold().to_json())?;
    fs::write(gold.join("flood_evacuation.json"), resample_drill().gold().to_json())?;
    fs::write(gold.join("wedding_planning.json"), overflow_drill().gold().to_json())?;

    record_run(&world, None, &fixtures.join("toy.jsonl"))?;
    record_run(&world, Some(&toy.join("corpus.jsonl")), &fixtures.join("toy_corpus.jsonl"))?;
    record_run(&resample_drill(), None, &fixtures.join("limits_resample.jsonl"))?;
    record_run(&overflow_drill(), None, &fixtures.join("limits_cap.jsonl"))?;
    record_baseline(&world, &fixtures.join("baseline_dot.jsonl"))?;
    Ok(())
}
