//! Prompt templates: plain text files with `{{placeholder}}` substitution.
//!
//! Prompt wording is data, not code. The crate embeds a default set from
//! `templates/`; a directory of same-named `.txt` files can override any of
//! them at runtime.

use std::collections::BTreeMap;
use std::path::Path;

use super::LlmError;

/// Substitute `{{name}}` placeholders from `vars`.
///
/// Placeholders are scanned in the template only — substituted values are
/// never re-scanned, so novel text containing braces cannot inject.
/// A placeholder with no matching var is an error naming it.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, LlmError> {
    let map: BTreeMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else {
            return Err(LlmError::Template(format!(
                "unterminated placeholder near `{}`",
                &rest[open..rest.len().min(open + 20)]
            )));
        };
        let name = after[..close].trim();
        match map.get(name) {
            Some(value) => out.push_str(value),
            None => {
                return Err(LlmError::Template(format!(
                    "no value supplied for placeholder `{name}`"
                )))
            }
        }
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

macro_rules! embedded_templates {
    ($($name:literal),* $(,)?) => {
        [$(($name, include_str!(concat!("../../templates/", $name, ".txt")))),*]
    };
}

/// Named prompt templates for every stage.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl TemplateSet {
    /// The default templates compiled into the crate.
    pub fn embedded() -> Self {
        let templates = embedded_templates![
            "system",
            "extract_events",
            "extract_arcs",
            "reader_feedback",
            "reader_refine",
            "extract_relations",
            "outline_core",
            "outline_structure",
            "outline_plans",
            "outline_feedback",
            "outline_refine",
            "scene",
            "scene_feedback",
            "scene_refine",
            "judge",
            "repair",
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        TemplateSet { templates }
    }

    /// Embedded defaults with any `<name>.txt` files in `dir` layered on top.
    pub fn with_overrides(dir: &Path) -> Result<Self, LlmError> {
        let mut set = TemplateSet::embedded();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| LlmError::Template(format!("{}: {e}", dir.display())))?;
        for entry in entries.filter_map(|e| e.ok()) {
            let path = entry.path();
            if path.extension().is_some_and(|ext| ext == "txt") {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let body = std::fs::read_to_string(&path)
                    .map_err(|e| LlmError::Template(format!("{}: {e}", path.display())))?;
                set.templates.insert(name, body);
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&str, LlmError> {
        self.templates
            .get(name)
            .map(|s| s.as_str())
            .ok_or_else(|| LlmError::Template(format!("unknown template `{name}`")))
    }

    /// Fetch `name` and render it with `vars` in one step.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, LlmError> {
        render(self.get(name)?, vars)
    }
}
