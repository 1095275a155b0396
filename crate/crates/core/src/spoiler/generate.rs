use thiserror::Error;

use super::{Method, Prompt, SpoilerPrediction};
use crate::corpus::SpoilerTag;
use crate::pipeline::backend::BackendError;

/// Anything that turns a rendered prompt into a completion.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str, max_tokens: u32) -> Result<String, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn complete(&self, prompt: &str, max_tokens: u32) -> Result<String, BackendError> {
        (**self).complete(prompt, max_tokens)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn complete(&self, prompt: &str, max_tokens: u32) -> Result<String, BackendError> {
        (**self).complete(prompt, max_tokens)
    }
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend returned an empty completion for record `{0}`")]
    EmptyCompletion(String),
}

fn strip_cue(text: &str) -> &str {
    let t = text.trim();
    match t.get(..8) {
        Some(head) if head.eq_ignore_ascii_case("spoiler:") => t[8..].trim(),
        _ => t,
    }
}

/// Sends the prompt and cleans up the completion. Shape rules are not
/// enforced on generated text; breaches are recorded as warnings.
pub fn generate_spoiler<B: CompletionBackend + ?Sized>(
    backend: &B,
    prompt: &Prompt,
    max_output_tokens: u32,
) -> Result<SpoilerPrediction, GenerateError> {
    let raw = backend.complete(&prompt.rendered, max_output_tokens)?;
    let text = strip_cue(&raw);
    if text.is_empty() {
        return Err(GenerateError::EmptyCompletion(prompt.source_record_id.clone()));
    }
    let texts: Vec<String> = match prompt.tag {
        SpoilerTag::Multi => text
            .split(", ")
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
        _ => vec![text.to_string()],
    };
    let mut prediction = SpoilerPrediction {
        tag: prompt.tag,
        method: Method::Generative,
        texts,
        warnings: Vec::new(),
    };
    prediction.warnings = prediction.shape_violations();
    for w in &prediction.warnings {
        tracing::debug!(record = %prompt.source_record_id, "generated spoiler: {w}");
    }
    Ok(prediction)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(&'static str);

    impl CompletionBackend for Fixed {
        fn complete(&self, _: &str, _: u32) -> Result<String, BackendError> {
            Ok(self.0.to_string())
        }
    }

    fn prompt(tag: SpoilerTag) -> Prompt {
        Prompt {
            rendered: "p".into(),
            tag,
            source_record_id: "r".into(),
        }
    }

    #[test]
    fn passthrough_and_cue_stripping() {
        let p = generate_spoiler(&Fixed("Cyprus"), &prompt(SpoilerTag::Phrase), 16).unwrap();
        assert_eq!(p.texts, ["Cyprus"]);
        assert!(p.warnings.is_empty());
        let p = generate_spoiler(&Fixed("  Spoiler: Cyprus \n"), &prompt(SpoilerTag::Phrase), 16).unwrap();
        assert_eq!(p.texts, ["Cyprus"]);
    }

    #[test]
    fn multi_split() {
        let p = generate_spoiler(&Fixed("a, b, c"), &prompt(SpoilerTag::Multi), 16).unwrap();
        assert_eq!(p.texts, ["a", "b", "c"]);
        let p = generate_spoiler(&Fixed("only one"), &prompt(SpoilerTag::Multi), 16).unwrap();
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn long_phrase_is_a_warning_not_an_error() {
        let p = generate_spoiler(&Fixed("this is far too long a phrase"), &prompt(SpoilerTag::Phrase), 16).unwrap();
        assert_eq!(p.method, Method::Generative);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn empty_completion_fails() {
        assert!(matches!(
            generate_spoiler(&Fixed("Spoiler:   "), &prompt(SpoilerTag::Phrase), 16),
            Err(GenerateError::EmptyCompletion(_))
        ));
    }
}
