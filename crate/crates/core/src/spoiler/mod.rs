//! Spoiler production, either by prompting a generative backend with a
//! one-shot prompt or by selecting verbatim spans from the article.

mod extract;
mod generate;
mod prompt;

pub use extract::{
    extract_spans, extract_spoiler, extract_spoiler_with, score_span, ArticleIndex, ExtractError, ExtractOptions,
    SpanCandidate, PHRASE_MAX_TOKENS,
};
pub use generate::{generate_spoiler, CompletionBackend, GenerateError};
pub use prompt::{build_prompt, Prompt, PromptError, PromptTemplate, DEFAULT_PROMPT_BUDGET, INSTRUCTION};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_corpus, Corpus, Record, SpoilerTag};
use crate::metrics::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Generative,
    Extractive,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Generative => "generative",
            Method::Extractive => "extractive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpoilerPrediction {
    pub tag: SpoilerTag,
    pub method: Method,
    pub texts: Vec<String>,
    /// Length/shape rules broken by generated output.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SpoilerPrediction {
    /// Texts joined by a single space, the form compared against gold.
    pub fn joined(&self) -> String {
        self.texts.join(" ")
    }

    /// Human-readable descriptions of every broken shape rule.
    pub fn shape_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.tag {
            SpoilerTag::Phrase | SpoilerTag::Passage if self.texts.len() != 1 => {
                out.push(format!("{} expects one text, got {}", self.tag, self.texts.len()))
            }
            SpoilerTag::Multi if self.texts.len() < 2 => {
                out.push(format!("multi expects at least 2 texts, got {}", self.texts.len()))
            }
            _ => {}
        }
        if matches!(self.tag, SpoilerTag::Phrase | SpoilerTag::Passage) {
            if let Some(t) = self.texts.first() {
                let n = tokenize(t).len();
                if self.tag == SpoilerTag::Phrase && n > PHRASE_MAX_TOKENS {
                    out.push(format!("phrase has {n} tokens, limit is {PHRASE_MAX_TOKENS}"));
                }
                if self.tag == SpoilerTag::Passage && n <= PHRASE_MAX_TOKENS {
                    out.push(format!("passage has only {n} tokens"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpoilMode {
    Generative,
    #[default]
    Extractive,
    /// Generate, and extract instead whenever generation fails.
    Fallback,
}

impl FromStr for SpoilMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "generative" => Ok(SpoilMode::Generative),
            "extractive" => Ok(SpoilMode::Extractive),
            "fallback" | "generative-with-extractive-fallback" => Ok(SpoilMode::Fallback),
            other => Err(format!("unknown spoiling mode `{other}` (expected generative, extractive or fallback)")),
        }
    }
}

const APPENDIX_EXEMPLARS: &str = include_str!("../../data/appendix_exemplars.jsonl");

#[derive(Debug, Error)]
pub enum ExemplarError {
    #[error("no exemplar with id `{0}`")]
    UnknownId(String),
    #[error("exemplar `{id}` is tagged {found:?}, not {wanted}")]
    WrongTag {
        id: String,
        wanted: SpoilerTag,
        found: Option<SpoilerTag>,
    },
    #[error("no usable `{0}` exemplar")]
    Missing(SpoilerTag),
}

/// One-shot exemplar candidates per tag, in corpus order.
#[derive(Debug, Clone, Default)]
pub struct ExemplarSet {
    by_tag: BTreeMap<SpoilerTag, Vec<Record>>,
}

impl ExemplarSet {
    /// The first two usable records of each tag; the second one stands in
    /// when the first is the record being spoiled.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut by_tag: BTreeMap<SpoilerTag, Vec<Record>> = BTreeMap::new();
        for r in &corpus.records {
            let Some(tag) = r.tag else { continue };
            if r.spoilers.is_empty() || !r.validate().is_empty() {
                continue;
            }
            let slot = by_tag.entry(tag).or_default();
            if slot.len() < 2 {
                slot.push(r.clone());
            }
        }
        ExemplarSet { by_tag }
    }

    /// The three worked examples shipped with the crate.
    pub fn builtin() -> Self {
        let corpus = parse_corpus(APPENDIX_EXEMPLARS, "builtin-exemplars", true).expect("bundled exemplars parse");
        Self::from_corpus(&corpus)
    }

    /// Takes candidates for any tag this set lacks from `other`.
    pub fn or_else(mut self, other: ExemplarSet) -> Self {
        for (tag, records) in other.by_tag {
            self.by_tag.entry(tag).or_insert(records);
        }
        self
    }

    pub fn has(&self, tag: SpoilerTag) -> bool {
        self.by_tag.get(&tag).is_some_and(|v| !v.is_empty())
    }

    /// Pins the exemplar for the record's tag to `id`.
    pub fn with_override(mut self, corpus: &Corpus, id: &str, tag: SpoilerTag) -> Result<Self, ExemplarError> {
        let r = corpus.get(id).ok_or_else(|| ExemplarError::UnknownId(id.to_string()))?;
        if r.tag != Some(tag) {
            return Err(ExemplarError::WrongTag {
                id: id.to_string(),
                wanted: tag,
                found: r.tag,
            });
        }
        self.by_tag.insert(tag, vec![r.clone()]);
        Ok(self)
    }

    /// First candidate of `tag` that is not `target` itself.
    pub fn select(&self, tag: SpoilerTag, target: &Record) -> Result<&Record, ExemplarError> {
        self.by_tag
            .get(&tag)
            .and_then(|c| c.iter().find(|r| *r != target))
            .ok_or(ExemplarError::Missing(tag))
    }
}

#[derive(Debug, Error)]
pub enum SpoilError {
    #[error("generative mode needs a completion backend")]
    NoBackend,
    #[error(transparent)]
    Exemplar(#[from] ExemplarError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// Everything [`spoil`] needs besides the record itself.
pub struct SpoilContext<'a> {
    pub mode: SpoilMode,
    pub backend: Option<&'a dyn CompletionBackend>,
    pub exemplars: &'a ExemplarSet,
    pub prompt_budget: usize,
    pub max_output_tokens: u32,
    pub extract: ExtractOptions,
}

impl<'a> SpoilContext<'a> {
    pub fn extractive(exemplars: &'a ExemplarSet) -> Self {
        SpoilContext {
            mode: SpoilMode::Extractive,
            backend: None,
            exemplars,
            prompt_budget: DEFAULT_PROMPT_BUDGET,
            max_output_tokens: 64,
            extract: ExtractOptions::default(),
        }
    }
}

fn generate(record: &Record, tag: SpoilerTag, ctx: &SpoilContext<'_>) -> Result<SpoilerPrediction, SpoilError> {
    let backend = ctx.backend.ok_or(SpoilError::NoBackend)?;
    let exemplar = ctx.exemplars.select(tag, record)?;
    let prompt = build_prompt(tag, record, exemplar, ctx.prompt_budget)?;
    Ok(generate_spoiler(backend, &prompt, ctx.max_output_tokens)?)
}

/// Produces a spoiler for `record` given its (predicted) spoiler type.
pub fn spoil(record: &Record, tag: SpoilerTag, ctx: &SpoilContext<'_>) -> Result<SpoilerPrediction, SpoilError> {
    match ctx.mode {
        SpoilMode::Extractive => Ok(extract_spoiler_with(record, tag, &ctx.extract)?),
        SpoilMode::Generative => generate(record, tag, ctx),
        SpoilMode::Fallback => match generate(record, tag, ctx) {
            Ok(p) => Ok(p),
            Err(e) => {
                tracing::warn!(record = %record.id, "generation failed, extracting instead: {e}");
                let mut p = extract_spoiler_with(record, tag, &ctx.extract)?;
                p.warnings.push(format!("generation failed: {e}"));
                Ok(p)
            }
        },
    }
}
