use serde_json::{Map, Value};

use super::ParsedInstruction;
use crate::error::{Error, Result};

const CONTENT_KEY: &str = "StylizedContent";
const OBJECTS_KEY: &str = "StylizedObjects";

/// Extracts the (content, objects) pair from free-form model output.
///
/// The first JSON object in the text wins; prose and Markdown fences around it
/// are ignored. Keys are matched ignoring case and spaces, so both
/// `StylizedContent` and `"Stylized Content"` are accepted.
pub fn parse_llm_response(response: &str) -> Result<ParsedInstruction> {
    let object = first_json_object(response).ok_or(Error::NoJsonObject)?;
    let content = lookup(&object, CONTENT_KEY)?;
    let objects = lookup(&object, OBJECTS_KEY)?;
    ParsedInstruction::new(content, objects)
}

fn normalize_key(key: &str) -> String {
    key.chars()
        .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
        .flat_map(char::to_lowercase)
        .collect()
}

fn lookup<'a>(object: &'a Map<String, Value>, key: &str) -> Result<&'a str> {
    let wanted = normalize_key(key);
    object
        .iter()
        .find(|(k, _)| normalize_key(k) == wanted)
        .and_then(|(_, v)| v.as_str())
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| Error::MissingField { key: key.into() })
}

/// Bodies of ```-fenced blocks, in order.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        // Skip an info string such as `json`.
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(end) => {
                blocks.push(&body[..end]);
                rest = &body[end + 3..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

fn scan_for_object(text: &str) -> Option<Map<String, Value>> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

fn first_json_object(text: &str) -> Option<Map<String, Value>> {
    fenced_blocks(text)
        .into_iter()
        .find_map(scan_for_object)
        .or_else(|| scan_for_object(text))
}
