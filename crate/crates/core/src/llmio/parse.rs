//! Structured-output parsing with one bounded repair round.
//!
//! Model output is rarely clean JSON: it may be fenced, prefixed with prose,
//! or truncated. [`parse_structured`] strips fences, parses the first JSON
//! value it can find, and deserializes it into the stage's expected type.
//! On failure it issues at most one repair re-prompt (supplied by the
//! caller, with the parse error embedded) and tries again.

use serde::de::DeserializeOwned;

use super::LlmError;

/// A successfully parsed value plus how many repair rounds it took (0 or 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub repair_count: u32,
}

/// What went wrong in a parse attempt; handed to the repair closure so the
/// re-prompt can quote the error.
#[derive(Debug, Clone)]
pub struct ParseFailure {
    pub message: String,
}

/// Repair hook: given the failure, produce a fresh raw completion.
pub type RepairFn<'a> = &'a mut dyn FnMut(&ParseFailure) -> Result<String, LlmError>;

enum AttemptError {
    /// Not JSON at all, or truncated mid-value.
    Syntax(String),
    /// Valid JSON that does not match the schema; carries the field path.
    Schema { field: String, detail: String },
}

impl AttemptError {
    fn message(&self) -> String {
        match self {
            AttemptError::Syntax(m) => m.clone(),
            AttemptError::Schema { field, detail } => format!("field `{field}`: {detail}"),
        }
    }

    fn into_llm_error(self) -> LlmError {
        match self {
            AttemptError::Syntax(m) => LlmError::MalformedOutput(m),
            AttemptError::Schema { field, detail } => LlmError::SchemaViolation { field, detail },
        }
    }
}

/// Strip a leading/trailing markdown code fence if present.
fn strip_code_fences(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    // Drop the info string ("json", "JSON", ...) up to the first newline.
    let rest = match rest.find('\n') {
        Some(pos) => &rest[pos + 1..],
        None => rest,
    };
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

fn attempt<T: DeserializeOwned>(raw: &str) -> Result<T, AttemptError> {
    let body = strip_code_fences(raw);
    let start = body
        .find(['{', '['])
        .ok_or_else(|| AttemptError::Syntax("no JSON value found in output".to_string()))?;
    let mut stream = serde_json::Deserializer::from_str(&body[start..]).into_iter::<serde_json::Value>();
    let value = match stream.next() {
        Some(Ok(value)) => value,
        Some(Err(e)) => return Err(AttemptError::Syntax(e.to_string())),
        None => return Err(AttemptError::Syntax("empty JSON stream".to_string())),
    };
    let deserializer = value.clone();
    serde_path_to_error::deserialize(deserializer).map_err(|e| {
        let field = e.path().to_string();
        AttemptError::Schema {
            field: if field == "." { String::new() } else { field },
            detail: e.inner().to_string(),
        }
    })
}

/// Parse `raw` into `T`, repairing once via `repair` when provided.
///
/// The final error is classified by nature: output with no parsable JSON is
/// [`LlmError::MalformedOutput`]; well-formed JSON missing or mistyping a
/// field is [`LlmError::SchemaViolation`] naming the field path.
pub fn parse_structured<T: DeserializeOwned>(
    raw: &str,
    repair: Option<RepairFn<'_>>,
) -> Result<Parsed<T>, LlmError> {
    let first = match attempt::<T>(raw) {
        Ok(value) => {
            return Ok(Parsed {
                value,
                repair_count: 0,
            })
        }
        Err(e) => e,
    };
    let Some(repair) = repair else {
        return Err(first.into_llm_error());
    };
    let failure = ParseFailure {
        message: first.message(),
    };
    let repaired_raw = repair(&failure)?;
    match attempt::<T>(&repaired_raw) {
        Ok(value) => Ok(Parsed {
            value,
            repair_count: 1,
        }),
        Err(second) => Err(second.into_llm_error()),
    }
}
