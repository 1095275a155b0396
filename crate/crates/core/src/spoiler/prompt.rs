//! One-shot prompts: an instruction, one worked example of the requested
//! spoiler type, then the target with an empty `Spoiler:` cue.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{full_text, Record, SpoilerTag};

pub const INSTRUCTION: &str = "Predict the spoiler to the clickbait title similar to the example below:";

/// Marker appended to a truncated article.
pub const TRUNCATION_MARKER: &str = "[...]";

/// Default prompt size limit, in whitespace-separated words.
pub const DEFAULT_PROMPT_BUDGET: usize = 1500;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("exemplar `{id}` is tagged {found:?} but a {requested} prompt was requested")]
    TagMismatch {
        id: String,
        requested: SpoilerTag,
        found: Option<SpoilerTag>,
    },
    #[error("exemplar and target are the same record `{0}`")]
    ExemplarIsTarget(String),
    #[error("exemplar `{0}` has an empty title, article or spoiler")]
    IncompleteExemplar(String),
    #[error("budget of {budget} words cannot hold the fixed prompt parts ({required} words)")]
    BudgetTooSmall { budget: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub tag: SpoilerTag,
    pub instruction: String,
    pub exemplar_title: String,
    pub exemplar_article: String,
    pub exemplar_spoiler: String,
}

impl PromptTemplate {
    pub fn from_exemplar(tag: SpoilerTag, exemplar: &Record) -> Result<Self, PromptError> {
        if exemplar.tag != Some(tag) {
            return Err(PromptError::TagMismatch {
                id: exemplar.id.clone(),
                requested: tag,
                found: exemplar.tag,
            });
        }
        let t = PromptTemplate {
            tag,
            instruction: INSTRUCTION.to_string(),
            exemplar_title: exemplar.title.clone(),
            exemplar_article: full_text(exemplar),
            exemplar_spoiler: exemplar.spoilers.join(", "),
        };
        if [&t.exemplar_title, &t.exemplar_article, &t.exemplar_spoiler]
            .iter()
            .any(|s| s.trim().is_empty())
        {
            return Err(PromptError::IncompleteExemplar(exemplar.id.clone()));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub rendered: String,
    pub tag: SpoilerTag,
    pub source_record_id: String,
}

fn words(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Keeps the text within `limit` words, counting the marker as one word.
fn truncate_words(text: &str, limit: usize) -> String {
    if words(text) <= limit {
        return text.to_string();
    }
    let keep = limit.saturating_sub(1);
    if keep == 0 {
        return TRUNCATION_MARKER.to_string();
    }
    let mut seen = 0;
    let mut in_word = false;
    let mut cut = text.len();
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_word {
                seen += 1;
                if seen == keep {
                    cut = i;
                    break;
                }
            }
            in_word = false;
        } else {
            in_word = true;
        }
    }
    format!("{} {TRUNCATION_MARKER}", &text[..cut])
}

/// Splits `available` words between two articles: each gets half, and a
/// share one article does not need goes to the other.
fn allocate(available: usize, first: usize, second: usize) -> (usize, usize) {
    if first + second <= available {
        return (first, second);
    }
    let half = available / 2;
    if first <= half {
        (first, available - first)
    } else if second <= available - half {
        (available - second, second)
    } else {
        (half, available - half)
    }
}

fn render(instruction: &str, sections: &[(&str, &str)]) -> String {
    let mut out = String::from(instruction);
    for (label, body) in sections {
        out.push_str("\n\n");
        out.push_str(label);
        if !body.is_empty() {
            out.push(' ');
            out.push_str(body);
        }
    }
    out
}

/// Renders a one-shot prompt for `target` using `exemplar` as the worked
/// example. `budget` bounds the prompt's whitespace-separated word count;
/// only the two articles are shortened to meet it.
pub fn build_prompt(tag: SpoilerTag, target: &Record, exemplar: &Record, budget: usize) -> Result<Prompt, PromptError> {
    let template = PromptTemplate::from_exemplar(tag, exemplar)?;
    if exemplar.id == target.id && exemplar == target {
        return Err(PromptError::ExemplarIsTarget(target.id.clone()));
    }
    let target_article = full_text(target);

    let fixed = words(&template.instruction)
        + words(&template.exemplar_title)
        + words(&template.exemplar_spoiler)
        + words(&target.title)
        + 6; // Title:/Article:/Spoiler: labels, twice
    if fixed > budget {
        return Err(PromptError::BudgetTooSmall {
            budget,
            required: fixed,
        });
    }
    let (ex_limit, target_limit) = allocate(
        budget - fixed,
        words(&template.exemplar_article),
        words(&target_article),
    );
    let ex_article = truncate_words(&template.exemplar_article, ex_limit);
    let target_article = truncate_words(&target_article, target_limit);

    let rendered = render(
        &template.instruction,
        &[
            ("Title:", &template.exemplar_title),
            ("Article:", &ex_article),
            ("Spoiler:", &template.exemplar_spoiler),
            ("Title:", &target.title),
            ("Article:", &target_article),
            ("Spoiler:", ""),
        ],
    );
    Ok(Prompt {
        rendered,
        tag,
        source_record_id: target.id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, tag: SpoilerTag, title: &str, article: &str, spoilers: &[&str]) -> Record {
        Record {
            id: id.into(),
            title: title.into(),
            paragraphs: vec![article.into()],
            spoilers: spoilers.iter().map(|s| s.to_string()).collect(),
            tag: Some(tag),
        }
    }

    #[test]
    fn truncation_keeps_prefix_and_marks() {
        assert_eq!(truncate_words("a b c d", 4), "a b c d");
        assert_eq!(truncate_words("a b c d", 3), "a b [...]");
        assert_eq!(truncate_words("a  b\nc d", 3), "a  b [...]");
        assert_eq!(truncate_words("a b c d", 1), "[...]");
        assert_eq!(truncate_words("a b c d", 0), "[...]");
    }

    #[test]
    fn allocation_is_fair() {
        assert_eq!(allocate(10, 3, 4), (3, 4));
        assert_eq!(allocate(10, 2, 40), (2, 8));
        assert_eq!(allocate(10, 40, 3), (7, 3));
        assert_eq!(allocate(11, 40, 40), (5, 6));
    }

    #[test]
    fn small_budget_truncates_both_articles() {
        let long = "one two three four five six seven eight nine ten eleven twelve";
        let ex = rec("e", SpoilerTag::Phrase, "Exemplar title", long, &["two"]);
        let target = rec("t", SpoilerTag::Phrase, "Target title", long, &["x"]);
        let fixed = 12 + 2 + 1 + 2 + 6;
        let p = build_prompt(SpoilerTag::Phrase, &target, &ex, fixed + 8).unwrap();
        let articles: Vec<&str> = p
            .rendered
            .split("\n\n")
            .filter_map(|s| s.strip_prefix("Article: "))
            .collect();
        assert_eq!(articles.len(), 2);
        assert!(articles.iter().all(|a| a.ends_with("[...]")));
        assert_eq!(p.rendered.split_whitespace().count(), fixed + 8);
        assert!(p.rendered.ends_with("\n\nSpoiler:"));
    }

    #[test]
    fn budget_errors_and_tag_checks() {
        let ex = rec("e", SpoilerTag::Multi, "Exemplar", "body", &["a", "b"]);
        let target = rec("t", SpoilerTag::Phrase, "Target", "body", &["x"]);
        assert!(matches!(
            build_prompt(SpoilerTag::Multi, &target, &ex, 5),
            Err(PromptError::BudgetTooSmall { .. })
        ));
        assert!(matches!(
            build_prompt(SpoilerTag::Phrase, &target, &ex, 500),
            Err(PromptError::TagMismatch { .. })
        ));
        assert!(matches!(
            build_prompt(SpoilerTag::Multi, &ex, &ex, 500),
            Err(PromptError::ExemplarIsTarget(_))
        ));
        let p = build_prompt(SpoilerTag::Multi, &target, &ex, 500).unwrap();
        assert!(p.rendered.contains("Spoiler: a, b\n\n"));
    }

    #[test]
    fn deterministic() {
        let ex = rec("e", SpoilerTag::Passage, "E", "some words here", &["some words here"]);
        let target = rec("t", SpoilerTag::Passage, "T", "other words", &["x"]);
        let a = build_prompt(SpoilerTag::Passage, &target, &ex, 100).unwrap();
        let b = build_prompt(SpoilerTag::Passage, &target, &ex, 100).unwrap();
        assert_eq!(a.rendered.as_bytes(), b.rendered.as_bytes());
    }
}
