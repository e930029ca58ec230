//! Prompt templates and parsers for model completions.
//!
//! Templates are plain text with `{slot}` placeholders. The defaults are
//! compiled in; a directory holding `<template-id>.txt` files overrides them.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{CompletionRequest, CompletionResponse, LlmError, Provider, Sampling};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template} needs slot {{{slot}}}")]
    MissingSlot { template: TemplateId, slot: String },
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no yes/no/unknown answer token in completion {0:?}")]
    UnparseableAnswer(String),
    #[error("empty description")]
    EmptyDescription,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateId {
    Skeleton,
    ExpansionDuring,
    ExpansionSteps,
    ExpansionAfter,
    ExpansionBefore,
    ExpansionConsequences,
    ExpansionCauses,
    Naming,
    Specificity,
    ChapterTest,
    RelStart,
    RelStartAfter,
    RelEnd,
    RelEndAfter,
    RelDuration,
}

impl TemplateId {
    pub const ALL: [TemplateId; 15] = [
        TemplateId::Skeleton,
        TemplateId::ExpansionDuring,
        TemplateId::ExpansionSteps,
        TemplateId::ExpansionAfter,
        TemplateId::ExpansionBefore,
        TemplateId::ExpansionConsequences,
        TemplateId::ExpansionCauses,
        TemplateId::Naming,
        TemplateId::Specificity,
        TemplateId::ChapterTest,
        TemplateId::RelStart,
        TemplateId::RelStartAfter,
        TemplateId::RelEnd,
        TemplateId::RelEndAfter,
        TemplateId::RelDuration,
    ];

    pub const EXPANSION: [TemplateId; 6] = [
        TemplateId::ExpansionDuring,
        TemplateId::ExpansionSteps,
        TemplateId::ExpansionAfter,
        TemplateId::ExpansionBefore,
        TemplateId::ExpansionConsequences,
        TemplateId::ExpansionCauses,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Skeleton => "skeleton",
            TemplateId::ExpansionDuring => "expansion-during",
            TemplateId::ExpansionSteps => "expansion-steps",
            TemplateId::ExpansionAfter => "expansion-after",
            TemplateId::ExpansionBefore => "expansion-before",
            TemplateId::ExpansionConsequences => "expansion-consequences",
            TemplateId::ExpansionCauses => "expansion-causes",
            TemplateId::Naming => "naming",
            TemplateId::Specificity => "specificity",
            TemplateId::ChapterTest => "chapter-test",
            TemplateId::RelStart => "rel-start",
            TemplateId::RelStartAfter => "rel-start-after",
            TemplateId::RelEnd => "rel-end",
            TemplateId::RelEndAfter => "rel-end-after",
            TemplateId::RelDuration => "rel-duration",
        }
    }

    fn default_text(self) -> &'static str {
        match self {
            TemplateId::Skeleton => include_str!("../templates/skeleton.txt"),
            TemplateId::ExpansionDuring => include_str!("../templates/expansion-during.txt"),
            TemplateId::ExpansionSteps => include_str!("../templates/expansion-steps.txt"),
            TemplateId::ExpansionAfter => include_str!("../templates/expansion-after.txt"),
            TemplateId::ExpansionBefore => include_str!("../templates/expansion-before.txt"),
            TemplateId::ExpansionConsequences => include_str!("../templates/expansion-consequences.txt"),
            TemplateId::ExpansionCauses => include_str!("../templates/expansion-causes.txt"),
            TemplateId::Naming => include_str!("../templates/naming.txt"),
            TemplateId::Specificity => include_str!("../templates/specificity.txt"),
            TemplateId::ChapterTest => include_str!("../templates/chapter-test.txt"),
            TemplateId::RelStart => include_str!("../templates/rel-start.txt"),
            TemplateId::RelStartAfter => include_str!("../templates/rel-start-after.txt"),
            TemplateId::RelEnd => include_str!("../templates/rel-end.txt"),
            TemplateId::RelEndAfter => include_str!("../templates/rel-end-after.txt"),
            TemplateId::RelDuration => include_str!("../templates/rel-duration.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

/// One template per [`TemplateId`].
#[derive(Debug, Clone)]
pub struct TemplateSet {
    texts: BTreeMap<TemplateId, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            texts: TemplateId::ALL
                .into_iter()
                .map(|t| (t, t.default_text().to_string()))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Defaults, with any `<id>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut set = TemplateSet::default();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{id}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                set.texts.insert(id, text);
            }
        }
        Ok(set)
    }

    pub fn text(&self, id: TemplateId) -> &str {
        &self.texts[&id]
    }

    /// Substitutes every `{slot}` in the template. Every slot the template
    /// names must be supplied; extra slots are ignored.
    pub fn render(&self, id: TemplateId, slots: &[(&str, &str)]) -> Result<String, PromptError> {
        render_text(id, self.text(id), slots)
    }
}

fn is_slot_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.'
}

fn render_text(id: TemplateId, text: &str, slots: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len() + 64);
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if close > 0 && after[..close].chars().all(is_slot_char) => {
                let name = &after[..close];
                let value = slots
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| PromptError::MissingSlot {
                        template: id,
                        slot: name.to_string(),
                    })?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Sentences extracted from a list-style completion.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ParsedList {
    pub items: Vec<String>,
}

impl ParsedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn strip_markers(mut s: &str) -> &str {
    loop {
        let t = s.trim();
        let stripped = if let Some(r) = t.strip_prefix(['-', '*', '•']) {
            r
        } else {
            let digits = t.chars().take_while(char::is_ascii_digit).count();
            match t[digits..].chars().next() {
                Some('.' | ')') if digits > 0 => {
                    let r = &t[digits + 1..];
                    // "1.5 million" is not a marker.
                    if r.is_empty() || r.starts_with(char::is_whitespace) {
                        r
                    } else {
                        return t;
                    }
                }
                _ => return t,
            }
        };
        s = stripped;
    }
}

/// Splits a completion into candidate event sentences.
///
/// Lines are split further on `". "` when the fragment before the break has
/// at least three words, which keeps abbreviations like "Dr. Smith" whole.
pub fn parse_event_list(text: &str) -> ParsedList {
    let mut items = Vec::new();
    for line in text.lines() {
        let line = strip_markers(line);
        let mut start = 0;
        let mut search = 0;
        while let Some(pos) = line[search..].find(". ") {
            let end = search + pos + 1;
            let fragment = &line[start..end];
            if strip_markers(fragment).split_whitespace().count() >= 3 {
                push_item(&mut items, fragment);
                start = end;
            }
            search = end;
        }
        push_item(&mut items, &line[start..]);
    }
    ParsedList { items }
}

fn push_item(items: &mut Vec<String>, fragment: &str) {
    let s = strip_markers(fragment);
    if !s.is_empty() {
        items.push(s.to_string());
    }
}

/// Normalized probability mass over the three answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    pub yes: f64,
    pub no: f64,
    pub unknown: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Answer {
    Yes,
    No,
    Unknown,
}

fn classify(token: &str) -> Option<Answer> {
    let body = token.strip_prefix(' ').unwrap_or(token);
    let answer = match body.to_ascii_lowercase().as_str() {
        "yes" => Answer::Yes,
        "no" => Answer::No,
        "unknown" => Answer::Unknown,
        _ => return None,
    };
    // Lower, Title or UPPER casing only.
    let lower = body.to_ascii_lowercase();
    let upper = body.to_ascii_uppercase();
    let mut title = lower.clone();
    title[..1].make_ascii_uppercase();
    (body == lower || body == upper || body == title).then_some(answer)
}

/// Reads the answer distribution from the first token position whose top
/// candidates include a yes/no/unknown variant.
pub fn parse_yes_no(resp: &CompletionResponse) -> Result<AnswerDistribution, PromptError> {
    for position in &resp.token_logprobs {
        let mut mass = [0.0f64; 3];
        let mut found = false;
        for (token, lp) in position {
            if let Some(a) = classify(token) {
                found = true;
                mass[a as usize] += lp.exp();
            }
        }
        let total: f64 = mass.iter().sum();
        if found && total > 0.0 {
            return Ok(AnswerDistribution {
                yes: mass[0] / total,
                no: mass[1] / total,
                unknown: mass[2] / total,
            });
        }
    }
    Err(PromptError::UnparseableAnswer(resp.text.clone()))
}

/// Token budgets per kind of request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxTokens {
    pub list: u32,
    pub naming: u32,
    pub answer: u32,
    pub dot: u32,
}

impl Default for MaxTokens {
    fn default() -> Self {
        MaxTokens {
            list: 512,
            naming: 16,
            answer: 8,
            dot: 1024,
        }
    }
}

const MAX_NAME_WORDS: usize = 8;

/// Names an event description with the in-context naming prompt. Returns the
/// first non-empty line of the completion, trimmed and cut to eight words.
pub fn assign_name(
    provider: &dyn Provider,
    templates: &TemplateSet,
    sampling: &Sampling,
    max_tokens: u32,
    description: &str,
) -> Result<String, PromptError> {
    let description = description.trim();
    if description.is_empty() {
        return Err(PromptError::EmptyDescription);
    }
    let prompt = templates.render(TemplateId::Naming, &[("evt.description", description)])?;
    let resp = provider.complete(&CompletionRequest::new(prompt, sampling, max_tokens))?;
    Ok(clean_name(&resp.text))
}

/// First non-empty line, trimmed, at most eight words. May be empty.
pub fn clean_name(text: &str) -> String {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    line.split_whitespace().take(MAX_NAME_WORDS).collect::<Vec<_>>().join(" ")
}
