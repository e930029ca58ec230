//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, RetrievalMode, Settings};
use crate::dot::{dot_to_schema, parse_completion, parse_dot, render_dot_prompt, to_graphviz, DotDocument, CHEMICAL_SPILL_EXAMPLE};
use crate::eval::{evaluate, write_pairs_csv};
use crate::llm::{CompletionRequest, FixtureProvider, HttpProvider, Provider, RecordingProvider};
use crate::pipeline::{induce, Deps};
use crate::prompts::TemplateSet;
use crate::retrieval::{passages_for, read_corpus, DenseIndex, PassageIndex, Retriever};
use crate::schema::{ChapterSpec, SchemaGraph};
use crate::similarity::{EmbeddingProvider, HttpEmbedder, TrigramEmbedder};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "eventschema", version, about = "Induce event schemas with a language model")]
pub struct Cli {
    /// TOML or JSON settings file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Build a schema with skeleton, expansion and relation verification.
    Induce(InduceArgs),
    /// Ask for the whole schema in one DOT-formatted completion.
    BaselineDot(BaselineArgs),
    /// Score a predicted schema against a gold schema.
    Eval(EvalArgs),
    /// Render a schema JSON file as Graphviz DOT.
    ExportDot(ExportArgs),
    /// Split a JSON Lines corpus into retrieval passages.
    IngestCorpus(IngestArgs),
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    /// Replay completions from a JSON Lines fixture store instead of calling an API.
    #[arg(long, value_name = "FILE", conflicts_with = "record")]
    pub fixtures: Option<PathBuf>,
    /// Append live completions to this fixture store.
    #[arg(long, value_name = "FILE")]
    pub record: Option<PathBuf>,
    /// Completions API base URL [config: http.base_url, default https://api.openai.com/v1].
    #[arg(long, value_name = "URL")]
    pub api_base: Option<String>,
    /// Model name [config: http.model, default text-davinci-003].
    #[arg(long)]
    pub model: Option<String>,
    /// Sampling temperature [config: pipeline.sampling.temperature, default 0.7].
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Nucleus sampling mass [config: pipeline.sampling.top_p, default 0.95].
    #[arg(long)]
    pub top_p: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InduceArgs {
    /// Scenario name, e.g. "disease outbreak".
    #[arg(long)]
    pub scenario: String,
    /// Chapter spec JSON: {"chapters": [{"name", "description"}], "edges": [[i, j]]}.
    #[arg(long, value_name = "FILE")]
    pub chapters: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// JSON Lines corpus of {doc_id, text} used for retrieval.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Retrieval scorer when a corpus is given [config: retrieval_mode, default lexical].
    #[arg(long, value_enum)]
    pub retrieval: Option<RetrievalMode>,
    /// Passages per prompt [config: pipeline.retrieval.k, default 3].
    #[arg(long)]
    pub k: Option<usize>,
    /// Worker threads for LLM calls [config: pipeline.jobs, default 1].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory of <template-id>.txt files overriding the built-in prompts.
    #[arg(long, value_name = "DIR")]
    pub templates: Option<PathBuf>,
    /// Embedding service URL [config: embedder_url, default built-in trigram embedder].
    #[arg(long, value_name = "URL")]
    pub embedder_url: Option<String>,
    /// Fewest skeleton events per chapter [config: pipeline.min_events_per_chapter, default 3].
    #[arg(long)]
    pub min_events: Option<usize>,
    /// Most events per chapter [config: pipeline.max_events_per_chapter, default 10].
    #[arg(long)]
    pub max_events: Option<usize>,
    /// Skeleton resamples after the first attempt [config: pipeline.max_resamples, default 5].
    #[arg(long)]
    pub max_resamples: Option<u32>,
    /// Jaro-Winkler duplicate threshold [config: pipeline.duplicate.jaro_winkler, default 0.9].
    #[arg(long)]
    pub jw_threshold: Option<f64>,
    /// Embedding cosine duplicate threshold [config: pipeline.duplicate.cosine, default 0.85].
    #[arg(long)]
    pub cosine_threshold: Option<f64>,
    /// Names closer than this edit distance are duplicates [config: pipeline.duplicate.name_edit_distance, default 3].
    #[arg(long)]
    pub name_edit_distance: Option<usize>,
    /// Minimum start/end support [config: pipeline.relation.start_end_threshold, default 0.2].
    #[arg(long)]
    pub start_end_threshold: Option<f64>,
    /// Minimum duration support [config: pipeline.relation.duration_threshold, default 0.7].
    #[arg(long)]
    pub duration_threshold: Option<f64>,
    /// Stop after the skeleton stage [config: pipeline.skip_expansion, default false].
    #[arg(long)]
    pub skip_expansion: bool,
    /// Add temporal edges until each chapter is connected [config: pipeline.complete_connectivity, default false].
    #[arg(long)]
    pub complete_connectivity: bool,
    /// Output directory for schema.json, trace.jsonl and schema.dot.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub scenario: String,
    /// Chapter spec JSON; chapter names are given to the model as seed events.
    #[arg(long, value_name = "FILE")]
    pub chapters: Option<PathBuf>,
    /// In-context DOT example [default: bundled chemical-spill example].
    #[arg(long, value_name = "FILE")]
    pub example: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Output directory for completion.txt, schema.json and schema.dot.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub gold: PathBuf,
    /// Drop aligned pairs below this similarity [config: match_threshold, default unset].
    #[arg(long)]
    pub match_threshold: Option<f64>,
    /// Embedding service URL [config: embedder_url, default built-in trigram embedder].
    #[arg(long, value_name = "URL")]
    pub embedder_url: Option<String>,
    /// Directory for report.json and pairs.csv.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, value_name = "FILE")]
    pub schema: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Passage JSON Lines output; only statistics are printed when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output dir {}: {e}", dir.display())))
}

fn read_chapters(path: Option<&Path>) -> Result<Option<ChapterSpec>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("chapter spec {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::Config(format!("chapter spec {}: {e}", path.display())))
}

fn read_schema(path: &Path) -> Result<SchemaGraph, CliError> {
    let text = fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    SchemaGraph::from_json(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn apply_provider_args(s: &mut Settings, p: &ProviderArgs) -> Result<(), CliError> {
    if p.fixtures.is_some() && p.api_base.is_some() {
        return Err(CliError::Config("--fixtures and --api-base are mutually exclusive".into()));
    }
    if let Some(b) = &p.api_base {
        s.http.base_url = b.clone();
    }
    if let Some(m) = &p.model {
        s.http.model = m.clone();
    }
    if let Some(t) = p.temperature {
        s.pipeline.sampling.temperature = t;
    }
    if let Some(t) = p.top_p {
        s.pipeline.sampling.top_p = t;
    }
    Ok(())
}

fn build_provider(s: &Settings, p: &ProviderArgs) -> Result<Box<dyn Provider>, CliError> {
    if let Some(path) = &p.fixtures {
        let f = FixtureProvider::open(path).map_err(|e| CliError::Config(e.to_string()))?;
        return Ok(Box::new(f));
    }
    let http = HttpProvider::new(s.http.clone()).map_err(runtime)?;
    match &p.record {
        Some(store) => Ok(Box::new(RecordingProvider::new(http, store).map_err(runtime)?)),
        None => Ok(Box::new(http)),
    }
}

fn build_embedder(s: &Settings) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    match &s.embedder_url {
        Some(url) => Ok(Box::new(HttpEmbedder::new(url.clone()).map_err(runtime)?)),
        None => Ok(Box::new(TrigramEmbedder::default())),
    }
}

fn load_settings(path: Option<&Path>) -> Result<Settings, CliError> {
    Ok(match path {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    })
}

fn cmd_induce(mut s: Settings, a: &InduceArgs) -> Result<(), CliError> {
    apply_provider_args(&mut s, &a.provider)?;
    let p = &mut s.pipeline;
    macro_rules! set {
        ($($flag:expr => $field:expr),* $(,)?) => {$(if let Some(v) = $flag { $field = v; })*};
    }
    set! {
        a.k => p.retrieval.k,
        a.jobs => p.jobs,
        a.min_events => p.min_events_per_chapter,
        a.max_events => p.max_events_per_chapter,
        a.max_resamples => p.max_resamples,
        a.jw_threshold => p.duplicate.jaro_winkler,
        a.cosine_threshold => p.duplicate.cosine,
        a.name_edit_distance => p.duplicate.name_edit_distance,
        a.start_end_threshold => p.relation.start_end_threshold,
        a.duration_threshold => p.relation.duration_threshold,
    }
    p.skip_expansion |= a.skip_expansion;
    p.complete_connectivity |= a.complete_connectivity;
    if let Some(m) = a.retrieval {
        s.retrieval_mode = m;
    }
    if let Some(u) = &a.embedder_url {
        s.embedder_url = Some(u.clone());
    }
    s.validate()?;

    let chapters = read_chapters(a.chapters.as_deref())?;
    let templates = match &a.templates {
        Some(dir) => TemplateSet::with_overrides(dir).map_err(|e| CliError::Config(e.to_string()))?,
        None => TemplateSet::default(),
    };
    out_dir(&a.out)?;
    let provider = build_provider(&s, &a.provider)?;
    let embedder = build_embedder(&s)?;

    let retriever: Option<Box<dyn Retriever>> = match (&a.corpus, s.retrieval_mode) {
        (None, _) | (_, RetrievalMode::Off) => None,
        (Some(path), mode) => {
            let docs = read_corpus(path).map_err(|e| CliError::Config(e.to_string()))?;
            Some(match mode {
                RetrievalMode::Dense => {
                    let passages = docs.iter().flat_map(passages_for).collect();
                    Box::new(DenseIndex::build(passages, build_embedder(&s)?).map_err(runtime)?)
                }
                _ => Box::new(PassageIndex::from_documents(&docs)),
            })
        }
    };

    let deps = Deps {
        provider: provider.as_ref(),
        retriever: retriever.as_deref(),
        embedder: embedder.as_ref(),
        templates: &templates,
    };
    match induce(&a.scenario, chapters.as_ref(), &deps, &s.pipeline) {
        Ok((g, trace)) => {
            write(&a.out.join("schema.json"), g.to_json())?;
            write(&a.out.join("trace.jsonl"), trace.to_jsonl())?;
            write(&a.out.join("schema.dot"), to_graphviz(&g))?;
            eprintln!(
                "wrote {} events and {} edges to {}",
                g.event_count(),
                g.edge_count(),
                a.out.display()
            );
            Ok(())
        }
        Err(f) => {
            write(&a.out.join("trace.jsonl"), f.trace.to_jsonl())?;
            if let Some(g) = &f.partial {
                write(&a.out.join("partial_schema.json"), g.to_json())?;
            }
            Err(runtime(f.error))
        }
    }
}

fn cmd_baseline(mut s: Settings, a: &BaselineArgs) -> Result<(), CliError> {
    apply_provider_args(&mut s, &a.provider)?;
    s.validate()?;
    let chapters = read_chapters(a.chapters.as_deref())?;
    let example_text = match &a.example {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("example {}: {e}", p.display())))?,
        None => CHEMICAL_SPILL_EXAMPLE.to_string(),
    };
    let example: DotDocument = parse_dot(&example_text)
        .map_err(|e| CliError::Config(format!("example: {e}")))?
        .doc;
    out_dir(&a.out)?;
    let provider = build_provider(&s, &a.provider)?;

    let names: Option<Vec<String>> = chapters.map(|c| c.chapters.into_iter().map(|d| d.name).collect());
    let prompt = render_dot_prompt(&a.scenario, names.as_deref(), &example);
    let req = CompletionRequest::new(prompt.clone(), &s.pipeline.sampling, s.pipeline.max_tokens.dot);
    let resp = provider.complete(&req).map_err(runtime)?;
    write(&a.out.join("completion.txt"), &resp.text)?;

    let parsed = parse_completion(&prompt, &a.scenario, &resp.text).map_err(runtime)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let g = dot_to_schema(&parsed.doc, &a.scenario).map_err(runtime)?;
    write(&a.out.join("schema.json"), g.to_json())?;
    write(&a.out.join("schema.dot"), to_graphviz(&g))?;
    println!("wrote {} events and {} edges to {}", g.event_count(), g.edge_count(), a.out.display());
    Ok(())
}

fn cmd_eval(mut s: Settings, a: &EvalArgs) -> Result<(), CliError> {
    if a.match_threshold.is_some() {
        s.match_threshold = a.match_threshold;
    }
    if let Some(u) = &a.embedder_url {
        s.embedder_url = Some(u.clone());
    }
    s.validate()?;
    let pred = read_schema(&a.pred)?;
    let gold = read_schema(&a.gold)?;
    let embedder = build_embedder(&s)?;
    let (report, matching) = evaluate(&pred, &gold, embedder.as_ref(), s.match_threshold).map_err(runtime)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    print!("{json}");
    if let Some(dir) = &a.out {
        out_dir(dir)?;
        write(&dir.join("report.json"), &json)?;
        let mut csv = Vec::new();
        write_pairs_csv(&matching, &mut csv).map_err(runtime)?;
        write(&dir.join("pairs.csv"), csv)?;
    }
    Ok(())
}

fn cmd_export(a: &ExportArgs) -> Result<(), CliError> {
    let dot = to_graphviz(&read_schema(&a.schema)?);
    match &a.out {
        Some(p) => write(p, dot),
        None => {
            print!("{dot}");
            Ok(())
        }
    }
}

fn cmd_ingest(a: &IngestArgs) -> Result<(), CliError> {
    let docs = read_corpus(&a.corpus).map_err(runtime)?;
    let passages: Vec<_> = docs.iter().flat_map(passages_for).collect();
    let used = passages.iter().map(|p| &p.doc_id).collect::<std::collections::BTreeSet<_>>().len();
    println!(
        "{} documents, {} passages, {} documents skipped as too short",
        docs.len(),
        passages.len(),
        docs.len() - used
    );
    if let Some(out) = &a.out {
        let mut s = String::new();
        for p in &passages {
            s.push_str(&serde_json::to_string(p).expect("passage serializes"));
            s.push('\n');
        }
        write(out, s)?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let settings = load_settings(cli.config.as_deref())?;
    match &cli.command {
        Command::Induce(a) => cmd_induce(settings, a),
        Command::BaselineDot(a) => cmd_baseline(settings, a),
        Command::Eval(a) => cmd_eval(settings, a),
        Command::ExportDot(a) => cmd_export(a),
        Command::IngestCorpus(a) => cmd_ingest(a),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn conflicting_provider_modes() {
        let dir = tempfile::tempdir().unwrap();
        let fx = dir.path().join("f.jsonl");
        fs::write(&fx, "").unwrap();
        let code = main_with([
            "eventschema",
            "induce",
            "--scenario",
            "x",
            "--fixtures",
            fx.to_str().unwrap(),
            "--api-base",
            "http://localhost:1",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn missing_chapter_spec() {
        let dir = tempfile::tempdir().unwrap();
        let fx = dir.path().join("f.jsonl");
        fs::write(&fx, "").unwrap();
        let code = main_with([
            "eventschema",
            "induce",
            "--scenario",
            "x",
            "--chapters",
            dir.path().join("nope.json").to_str().unwrap(),
            "--fixtures",
            fx.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn help_names_config_keys() {
        let mut cmd = Cli::command();
        let help = cmd.find_subcommand_mut("induce").unwrap().render_long_help().to_string();
        for key in [
            "pipeline.min_events_per_chapter, default 3",
            "pipeline.max_events_per_chapter, default 10",
            "pipeline.duplicate.jaro_winkler, default 0.9",
            "pipeline.duplicate.cosine, default 0.85",
            "pipeline.relation.start_end_threshold, default 0.2",
            "pipeline.relation.duration_threshold, default 0.7",
            "pipeline.sampling.temperature, default 0.7",
        ] {
            assert!(help.contains(key), "missing {key}");
        }
    }
}
