//! Hallucination-aware refinement: a generic locate → retrieve → refine →
//! merge loop applied to any refinable artifact.
//!
//! One round asks the backend where the artifact is wrong and how to fix it
//! (feedback), pulls the flagged items and their source chapters back into
//! context (retrieve), asks for replacements (refine), and merges them in by
//! id. The loop stops as soon as a feedback round reports zero issues, or
//! when the round budget runs out. Four rounds is the default budget — more
//! buys little and costs linearly.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::estimate_tokens;
use crate::llmio::{Backend, LlmError};

/// What kind of defect a feedback round located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueKind {
    /// Something that should have been extracted or generated is absent.
    Missing,
    /// Two items contradict each other.
    Inconsistent,
    /// An item disagrees with its counterpart (event vs. arc, plan vs. graph).
    Unaligned,
}

/// Where a defect lives and what to do about it.
///
/// `target_ids` may be empty only for [`IssueKind::Missing`], which can
/// instead point at a chapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueLocation {
    #[serde(default)]
    pub target_ids: Vec<String>,
    pub kind: IssueKind,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub chapter_hint: Option<usize>,
}

/// One refinement round's full record, persisted as a JSON line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementRound {
    pub round: usize,
    pub locations: Vec<IssueLocation>,
    /// One suggestion per location, carried verbatim into the refine prompt.
    pub suggestions: Vec<String>,
    pub context: String,
    /// Raw replacement payloads returned by the refine call.
    pub refined_items: Vec<serde_json::Value>,
    /// How many of the refined items the merge actually adopted.
    pub adopted: usize,
}

/// Refinement loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub max_rounds: usize,
    pub stop_on_zero_issues: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            max_rounds: 4,
            stop_on_zero_issues: true,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_rounds < 1 {
            return Err("max_rounds must be at least 1".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("refinement round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<RefineError>,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("merge conflict: item `{id}` matches nothing and is not flagged new")]
    MergeConflict { id: String },
    #[error("issue location of kind {kind:?} has no target ids")]
    EmptyTarget { kind: IssueKind },
}

impl RefineError {
    fn at_round(self, round: usize) -> RefineError {
        RefineError::AtRound {
            round,
            source: Box::new(self),
        }
    }
}

/// A feedback round's parsed output: paired locations and suggestions.
#[derive(Debug, Clone, Default)]
pub struct Feedback {
    pub locations: Vec<IssueLocation>,
    pub suggestions: Vec<String>,
}

impl Feedback {
    pub fn is_clean(&self) -> bool {
        self.locations.is_empty()
    }

    /// Suggestions rendered for the refine prompt, one bullet per line.
    pub fn suggestions_text(&self) -> String {
        self.suggestions
            .iter()
            .map(|s| format!("- {s}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Wire shape of a feedback completion: `{"issues": [...]}` with one
/// suggestion per issue.
#[derive(Debug, Deserialize)]
pub struct IssueReport {
    #[serde(flatten)]
    pub location: IssueLocation,
    #[serde(default)]
    pub suggestion: String,
}

#[derive(Debug, Deserialize)]
pub struct IssuesPayload {
    pub issues: Vec<IssueReport>,
}

impl From<IssuesPayload> for Feedback {
    fn from(payload: IssuesPayload) -> Feedback {
        let mut feedback = Feedback::default();
        for issue in payload.issues {
            feedback.locations.push(issue.location);
            feedback.suggestions.push(issue.suggestion);
        }
        feedback
    }
}

/// Stage-specific hooks for one refinement loop: how to ask for feedback,
/// what context to retrieve for located issues, how to ask for refined
/// items, and how to merge them back into the artifact.
pub trait HarStage {
    type Artifact;

    fn feedback(
        &mut self,
        artifact: &Self::Artifact,
        backend: &dyn Backend,
    ) -> Result<Feedback, RefineError>;

    fn retrieve(&mut self, artifact: &Self::Artifact, locations: &[IssueLocation]) -> String;

    fn refine(
        &mut self,
        artifact: &Self::Artifact,
        context: &str,
        feedback: &Feedback,
        backend: &dyn Backend,
    ) -> Result<Vec<serde_json::Value>, RefineError>;

    /// Merge refined items into the artifact; returns how many were adopted.
    /// Untouched items must pass through bit-identical.
    fn merge(
        &mut self,
        artifact: &mut Self::Artifact,
        refined: &[serde_json::Value],
    ) -> Result<usize, RefineError>;
}

/// Run the refinement loop over `artifact` until feedback comes back clean
/// or the round budget is exhausted. Returns the refined artifact and the
/// full round trace (one entry per feedback call, including the final
/// stopping round).
pub fn har_refine<S: HarStage>(
    stage: &mut S,
    mut artifact: S::Artifact,
    backend: &dyn Backend,
    cfg: &RefineConfig,
) -> Result<(S::Artifact, Vec<RefinementRound>), RefineError> {
    let mut trace = Vec::new();
    for round in 0..cfg.max_rounds {
        let feedback = stage
            .feedback(&artifact, backend)
            .map_err(|e| e.at_round(round))?;
        // Only a missing-item report may come without targets (it can point
        // at a chapter instead).
        for location in &feedback.locations {
            if location.target_ids.is_empty() && location.kind != IssueKind::Missing {
                return Err(RefineError::EmptyTarget {
                    kind: location.kind,
                }
                .at_round(round));
            }
        }
        let context = stage.retrieve(&artifact, &feedback.locations);

        let stop =
            (cfg.stop_on_zero_issues && feedback.is_clean()) || round + 1 == cfg.max_rounds;
        if stop {
            trace.push(RefinementRound {
                round,
                locations: feedback.locations,
                suggestions: feedback.suggestions,
                context,
                refined_items: Vec::new(),
                adopted: 0,
            });
            break;
        }

        let refined = stage
            .refine(&artifact, &context, &feedback, backend)
            .map_err(|e| e.at_round(round))?;
        let adopted = stage
            .merge(&mut artifact, &refined)
            .map_err(|e| e.at_round(round))?;
        trace.push(RefinementRound {
            round,
            locations: feedback.locations,
            suggestions: feedback.suggestions,
            context,
            refined_items: refined,
            adopted,
        });
    }
    Ok((artifact, trace))
}

/// Support corpus for context retrieval: items addressable by id, chapters
/// by index, and an item-to-chapters mapping.
pub trait SupportCorpus {
    /// Render the current value of the item with this id, if it exists.
    fn item(&self, id: &str) -> Option<String>;

    /// Chapters an item references (an event's chapter, an arc's biography
    /// chapters).
    fn chapters_for_item(&self, id: &str) -> Vec<usize>;

    fn chapter_text(&self, index: usize) -> Option<String>;
}

/// Context retrieved for one issue location, plus ids that resolved nowhere.
#[derive(Debug, Clone, Default)]
pub struct RetrievedContext {
    pub text: String,
    pub unknown_ids: Vec<String>,
}

/// Pull the located items' current values and the chapters they reference,
/// truncated to `budget_tokens`. Located items take budget priority over
/// chapter text. Unknown ids are reported and skipped, never fatal.
pub fn retrieve_context(
    location: &IssueLocation,
    support: &dyn SupportCorpus,
    budget_tokens: usize,
    chars_per_token: f64,
) -> RetrievedContext {
    let mut items = String::new();
    let mut unknown_ids = Vec::new();
    let mut chapters: Vec<usize> = Vec::new();

    for id in &location.target_ids {
        match support.item(id) {
            Some(rendered) => {
                items.push_str(&rendered);
                items.push('\n');
                chapters.extend(support.chapters_for_item(id));
            }
            None => unknown_ids.push(id.clone()),
        }
    }
    if let Some(hint) = location.chapter_hint {
        chapters.push(hint);
    }
    chapters.sort_unstable();
    chapters.dedup();

    let item_tokens = estimate_tokens(&items, chars_per_token);
    if item_tokens >= budget_tokens {
        let max_chars = (budget_tokens as f64 * chars_per_token) as usize;
        let text: String = items.chars().take(max_chars).collect();
        return RetrievedContext { text, unknown_ids };
    }

    let mut remaining = budget_tokens - item_tokens;
    let mut text = items;
    for index in chapters {
        let Some(chapter) = support.chapter_text(index) else {
            continue;
        };
        let section = format!("[chapter {index}]\n{chapter}\n");
        let section_tokens = estimate_tokens(&section, chars_per_token);
        if section_tokens <= remaining {
            remaining -= section_tokens;
            text.push_str(&section);
        } else {
            let max_chars = (remaining as f64 * chars_per_token) as usize;
            text.extend(section.chars().take(max_chars));
            break;
        }
    }
    RetrievedContext { text, unknown_ids }
}

/// Append rounds to a JSON Lines trace file, one round per line.
pub fn write_trace(path: &Path, rounds: &[RefinementRound]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    for round in rounds {
        let line = serde_json::to_string(round)?;
        writeln!(file, "{line}")?;
    }
    Ok(())
}

pub fn read_trace(path: &Path) -> std::io::Result<Vec<RefinementRound>> {
    let raw = std::fs::read_to_string(path)?;
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}
