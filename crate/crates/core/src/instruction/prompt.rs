use super::RawInstruction;

const PREFIX: &str = "Split [\"";
const SUFFIX: &str = "\"] into [Stylized Content] and [Stylized Objects]. Returns a json with two keys: StylizedContent and StylizedObjects.";

/// Fills the instruction into the splitting prompt.
///
/// Backslashes and double quotes inside the instruction are backslash-escaped so
/// the `["..."]` framing stays unambiguous; [`instruction_from_prompt`] undoes it.
pub fn build_prompt(instruction: &RawInstruction) -> String {
    let mut escaped = String::with_capacity(instruction.as_str().len());
    for ch in instruction.as_str().chars() {
        if ch == '"' || ch == '\\' {
            escaped.push('\\');
        }
        escaped.push(ch);
    }
    format!("{PREFIX}{escaped}{SUFFIX}")
}

/// Recovers the instruction text embedded by [`build_prompt`].
pub fn instruction_from_prompt(prompt: &str) -> Option<String> {
    let body = prompt.strip_prefix(PREFIX)?.strip_suffix(SUFFIX)?;
    let mut out = String::with_capacity(body.len());
    let mut chars = body.chars();
    while let Some(ch) = chars.next() {
        if ch == '\\' {
            out.push(chars.next()?);
        } else if ch == '"' {
            return None;
        } else {
            out.push(ch);
        }
    }
    Some(out)
}
