//! Splitting a stylization instruction into a style description and a
//! referring expression for the target object.

mod eval;
mod fallback;
mod llm;
mod prompt;
mod response;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eval::{bundled_corpus, evaluate_corpus, load_corpus, parse_corpus, CorpusItem, EvalItem, EvalReport};
pub use fallback::fallback_split;
pub use llm::{judge_score, query_llm, EndpointConfig, LLM_TOKEN_ENV};
pub use prompt::{build_prompt, instruction_from_prompt};
pub use response::parse_llm_response;

/// The user's full natural-language command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RawInstruction(String);

impl RawInstruction {
    /// Rejects instructions that are empty after trimming. The stored text is trimmed.
    pub fn new(text: impl AsRef<str>) -> Result<Self> {
        let text = text.as_ref().trim();
        if text.is_empty() {
            return Err(Error::invalid("instruction is empty"));
        }
        Ok(Self(text.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RawInstruction {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<RawInstruction> for String {
    fn from(value: RawInstruction) -> Self {
        value.0
    }
}

impl std::fmt::Display for RawInstruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// The (style, target object) pair extracted from an instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedInstruction {
    /// The style to apply, e.g. "art on fire".
    pub stylized_content: String,
    /// Referring expression for the object to stylize.
    pub stylized_objects: String,
}

impl ParsedInstruction {
    /// Trims both fields; errors naming the field if one ends up empty.
    pub fn new(content: impl AsRef<str>, objects: impl AsRef<str>) -> Result<Self> {
        let stylized_content = content.as_ref().trim().to_owned();
        let stylized_objects = objects.as_ref().trim().to_owned();
        if stylized_content.is_empty() {
            return Err(Error::MissingField {
                key: "StylizedContent".into(),
            });
        }
        if stylized_objects.is_empty() {
            return Err(Error::MissingField {
                key: "StylizedObjects".into(),
            });
        }
        Ok(Self {
            stylized_content,
            stylized_objects,
        })
    }

    /// Exact-match comparison used for corpus scoring: trimmed, case-insensitive.
    pub fn matches(&self, gold: &ParsedInstruction) -> bool {
        let eq = |a: &str, b: &str| a.trim().to_lowercase() == b.trim().to_lowercase();
        eq(&self.stylized_content, &gold.stylized_content) && eq(&self.stylized_objects, &gold.stylized_objects)
    }
}

/// Which parser produced a [`ParsedInstruction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserKind {
    Llm,
    Fallback,
}
