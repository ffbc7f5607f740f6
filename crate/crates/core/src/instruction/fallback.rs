use std::sync::LazyLock;

use regex::Regex;

use super::{ParsedInstruction, RawInstruction};
use crate::error::{Error, Result};

struct Pattern {
    name: &'static str,
    regex: Regex,
}

fn pattern(name: &'static str, src: &str) -> Pattern {
    Pattern {
        name,
        regex: Regex::new(&format!("(?is){src}")).expect("static pattern compiles"),
    }
}

// Tried in order; the first match wins.
static PATTERNS: LazyLock<Vec<Pattern>> = LazyLock::new(|| {
    vec![
        pattern(
            "turn-into",
            r"^(?:please\s+)?(?:turn|change|transform|convert)\s+(?P<obj>.+?)\s+(?:into|to)\s+(?P<content>.+)$",
        ),
        pattern(
            "make-look-like",
            r"^(?:please\s+)?make\s+(?P<obj>.+?)\s+(?:look\s+like|appear\s+like|resemble)\s+(?P<content>.+)$",
        ),
        pattern(
            "make-bare",
            r"^(?:please\s+)?make\s+(?P<obj>(?:the|a|an|this|that|my|our|your|his|her|their|its)\s+\S+)\s+(?P<content>.+)$",
        ),
        pattern(
            "apply-to",
            r"^(?:please\s+)?apply\s+(?P<content>.+?)\s+(?:to|onto|on)\s+(?P<obj>.+)$",
        ),
        pattern("in-style-of", r"^(?P<obj>.+?)\s+in\s+(?P<content>.+)$"),
    ]
});

static STYLE_OF_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(?:the\s+)?(?:art|style)\s+of\s+").unwrap());
static THE_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^the\s+").unwrap());

fn clean_content(content: &str) -> String {
    let content = content.trim();
    if let Some(m) = STYLE_OF_PREFIX.find(content) {
        return content[m.end()..].trim().to_owned();
    }
    THE_PREFIX.replace(content, "").trim().to_owned()
}

/// Deterministic rule-based splitter used when no language model is configured.
///
/// Recognised shapes, in priority order:
/// "turn/change/transform/convert X to/into Y", "make X look like Y",
/// "make the X Y", "apply Y to X" and "X in (the style of) Y".
/// A leading "the", "the style of" or "the art of" is removed from the style.
pub fn fallback_split(instruction: &RawInstruction) -> Result<ParsedInstruction> {
    let text = instruction.as_str().trim().trim_end_matches(['.', '!', '?']).trim();
    for p in PATTERNS.iter() {
        let Some(caps) = p.regex.captures(text) else {
            continue;
        };
        let objects = caps["obj"].trim();
        let content = clean_content(&caps["content"]);
        if objects.is_empty() || content.is_empty() {
            continue;
        }
        log::debug!("fallback pattern {} matched {:?}", p.name, text);
        return ParsedInstruction::new(content, objects);
    }
    Err(Error::NoMatch(instruction.as_str().to_owned()))
}
