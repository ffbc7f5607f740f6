use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParsedInstruction, RawInstruction};
use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../../data/gold_corpus.jsonl");

/// One instruction with its reference split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusItem {
    pub instruction: RawInstruction,
    pub gold: ParsedInstruction,
}

#[derive(Deserialize)]
struct CorpusLine {
    instruction: String,
    stylized_content: String,
    stylized_objects: String,
}

/// Parses the JSON-lines corpus format (`instruction`, `stylized_content`,
/// `stylized_objects` per line). Blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Vec<CorpusItem>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let raw: CorpusLine =
                serde_json::from_str(line).map_err(|e| Error::Config(format!("corpus line {}: {e}", i + 1)))?;
            Ok(CorpusItem {
                instruction: RawInstruction::new(raw.instruction)?,
                gold: ParsedInstruction::new(raw.stylized_content, raw.stylized_objects)?,
            })
        })
        .collect()
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusItem>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

/// The 20-item gold corpus shipped with the crate.
pub fn bundled_corpus() -> Vec<CorpusItem> {
    parse_corpus(BUNDLED).expect("bundled corpus is well-formed")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub instruction: String,
    pub gold: ParsedInstruction,
    pub predicted: Option<ParsedInstruction>,
    pub error: Option<String>,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub exact_matches: usize,
    pub accuracy: f64,
    pub per_item: Vec<EvalItem>,
}

/// Scores a parser by exact match against gold splits.
///
/// A prediction counts only if both fields agree with the reference after
/// trimming, ignoring case. Parser errors count as misses.
pub fn evaluate_corpus<F>(corpus: &[CorpusItem], parser: F) -> Result<EvalReport>
where
    F: Fn(&RawInstruction) -> Result<ParsedInstruction>,
{
    if corpus.is_empty() {
        return Err(Error::invalid("evaluation corpus is empty"));
    }
    let per_item: Vec<EvalItem> = corpus
        .iter()
        .map(|item| {
            let (predicted, error) = match parser(&item.instruction) {
                Ok(p) => (Some(p), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let matched = predicted.as_ref().is_some_and(|p| p.matches(&item.gold));
            EvalItem {
                instruction: item.instruction.to_string(),
                gold: item.gold.clone(),
                predicted,
                error,
                matched,
            }
        })
        .collect();
    let exact_matches = per_item.iter().filter(|i| i.matched).count();
    Ok(EvalReport {
        total: per_item.len(),
        exact_matches,
        accuracy: exact_matches as f64 / per_item.len() as f64,
        per_item,
    })
}
