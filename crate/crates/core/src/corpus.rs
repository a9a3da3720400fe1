//! Novel ingestion: chapter splitting, token estimation, sliding extraction
//! windows, and excerpt selection for the evaluation kit.
//!
//! Token counts are a character heuristic (`ceil(chars / chars_per_token)`),
//! not a tokenizer — the pipeline only needs budgets, not exact counts, and
//! the divisor is configurable per model family.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plotgraph::PlotEvent;

pub const DEFAULT_CHARS_PER_TOKEN: f64 = 4.0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input text is empty or whitespace-only")]
    EmptyInput,
    #[error(
        "focus chapter {chapter} needs ~{needed} tokens but the window budget is {budget}"
    )]
    BudgetTooSmall {
        chapter: usize,
        needed: usize,
        budget: usize,
    },
    #[error("chapter index {0} out of range ({1} chapters)")]
    ChapterOutOfRange(usize, usize),
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// A chapter of the source novel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chapter {
    pub index: usize,
    /// The heading line as matched, empty for unheaded text.
    pub heading: String,
    pub body: String,
    pub token_estimate: usize,
}

impl Chapter {
    /// Heading plus body, the form rendered into prompts.
    pub fn full_text(&self) -> String {
        if self.heading.is_empty() {
            self.body.clone()
        } else {
            format!("{}\n{}", self.heading, self.body)
        }
    }
}

/// A chapterized novel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Novel {
    pub title: String,
    pub chapters: Vec<Chapter>,
    pub source_path: String,
}

impl Novel {
    /// Load from a UTF-8 text file, or from a directory of `NNN_title.txt`
    /// chapter files consumed in lexical order.
    pub fn load(path: &Path) -> Result<Novel, CorpusError> {
        let title = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "untitled".to_string());
        if path.is_dir() {
            Novel::from_chapter_dir(&title, path)
        } else {
            let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let chapters = split_chapters(&raw)?;
            Ok(Novel {
                title,
                chapters,
                source_path: path.display().to_string(),
            })
        }
    }

    fn from_chapter_dir(title: &str, dir: &Path) -> Result<Novel, CorpusError> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .map_err(|source| CorpusError::Io {
                path: dir.display().to_string(),
                source,
            })?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        files.sort();
        let mut chapters = Vec::new();
        for (index, file) in files.iter().enumerate() {
            let body = fs::read_to_string(file).map_err(|source| CorpusError::Io {
                path: file.display().to_string(),
                source,
            })?;
            if body.trim().is_empty() {
                continue;
            }
            let heading = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            chapters.push(Chapter {
                index,
                heading,
                token_estimate: estimate_tokens(&body, DEFAULT_CHARS_PER_TOKEN),
                body,
            });
        }
        if chapters.is_empty() {
            return Err(CorpusError::EmptyInput);
        }
        // Re-index in case empty files were skipped.
        for (i, chapter) in chapters.iter_mut().enumerate() {
            chapter.index = i;
        }
        Ok(Novel {
            title: title.to_string(),
            chapters,
            source_path: dir.display().to_string(),
        })
    }
}

/// Sliding-window settings for chapter-by-chapter extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// How many subsequent chapters feed the lookahead text.
    pub lookahead_chapters: usize,
    /// Token budget for the whole rendered window.
    pub context_token_budget: usize,
    pub chars_per_token: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            lookahead_chapters: 1,
            context_token_budget: 8192,
            chars_per_token: DEFAULT_CHARS_PER_TOKEN,
        }
    }
}

pub const MIN_CONTEXT_TOKEN_BUDGET: usize = 256;

impl WindowConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.context_token_budget < MIN_CONTEXT_TOKEN_BUDGET {
            return Err(format!(
                "context_token_budget must be at least {MIN_CONTEXT_TOKEN_BUDGET}"
            ));
        }
        if self.chars_per_token <= 0.0 {
            return Err("chars_per_token must be positive".to_string());
        }
        Ok(())
    }
}

/// One extraction window: digest of everything already extracted, the focus
/// chapter in full, and budget-truncated lookahead from later chapters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub focus_chapter: usize,
    pub prior_events_digest: String,
    pub lookahead_text: String,
    pub focus_text: String,
}

/// An excerpt cut from a document at sentence boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excerpt {
    pub source_id: String,
    /// Character (not byte) offset of the excerpt start.
    pub start_offset: usize,
    pub text: String,
    pub token_estimate: usize,
}

/// Result of excerpt selection; `doc_too_short` flags that fewer excerpts
/// than requested could be cut.
#[derive(Debug, Clone)]
pub struct ExcerptSelection {
    pub excerpts: Vec<Excerpt>,
    pub doc_too_short: bool,
}

/// `ceil(chars / chars_per_token)`, the pipeline-wide token heuristic.
pub fn estimate_tokens(text: &str, chars_per_token: f64) -> usize {
    assert!(chars_per_token > 0.0, "chars_per_token must be positive");
    let chars = text.chars().count();
    (chars as f64 / chars_per_token).ceil() as usize
}

/// Default heading patterns, tried in order; the first with at least two
/// matches wins. Requiring two avoids splitting a novel that merely mentions
/// "chapter" in prose.
fn default_heading_patterns() -> Vec<Regex> {
    [
        // "Chapter 1", "CHAPTER XII", "Chapter One."
        r"(?i)^\s*chapter\s+\S+.*$",
        // A bare roman numeral line: "XII." or "IV"
        r"^\s*[IVXLCDM]+\.?\s*$",
        // Markdown top-level heading
        r"^#\s+.*$",
    ]
    .iter()
    .map(|p| Regex::new(p).expect("built-in heading pattern"))
    .collect()
}

/// Split raw novel text into chapters at recognized heading lines.
///
/// Line endings are normalized to `\n` first. The heading line goes to
/// `heading` and everything up to the next heading to `body`, so the chapter
/// list reassembles to the normalized input (see [`reassemble`]). Text
/// before the first heading becomes its own unheaded chapter; if no pattern
/// matches twice, the whole text is one chapter.
pub fn split_chapters(raw: &str) -> Result<Vec<Chapter>, CorpusError> {
    split_chapters_with(raw, &default_heading_patterns(), DEFAULT_CHARS_PER_TOKEN)
}

pub fn split_chapters_with(
    raw: &str,
    patterns: &[Regex],
    chars_per_token: f64,
) -> Result<Vec<Chapter>, CorpusError> {
    if raw.trim().is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let text = raw.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<&str> = text.split_inclusive('\n').collect();

    let mut heading_lines: Vec<usize> = Vec::new();
    for pattern in patterns {
        let matches: Vec<usize> = lines
            .iter()
            .enumerate()
            .filter(|(_, line)| pattern.is_match(line.trim_end_matches('\n')))
            .map(|(i, _)| i)
            .collect();
        if matches.len() >= 2 {
            heading_lines = matches;
            break;
        }
    }

    let chapter = |index: usize, heading: &str, body: String| Chapter {
        index,
        heading: heading.to_string(),
        token_estimate: estimate_tokens(&body, chars_per_token),
        body,
    };

    if heading_lines.is_empty() {
        return Ok(vec![chapter(0, "", text)]);
    }

    let mut chapters = Vec::new();
    if heading_lines[0] > 0 {
        let preamble: String = lines[..heading_lines[0]].concat();
        if !preamble.trim().is_empty() {
            chapters.push(chapter(chapters.len(), "", preamble));
        }
    }
    for (slot, &start) in heading_lines.iter().enumerate() {
        let end = heading_lines
            .get(slot + 1)
            .copied()
            .unwrap_or(lines.len());
        let heading = lines[start].trim_end_matches('\n');
        let body: String = lines[start + 1..end].concat();
        if body.is_empty() {
            // A trailing bare heading has nothing to head; keep the text by
            // appending it to the previous chapter's body.
            if let Some(prev) = chapters.last_mut() {
                prev.body.push_str(lines[start]);
                prev.token_estimate = estimate_tokens(&prev.body, chars_per_token);
                continue;
            }
        }
        chapters.push(chapter(chapters.len(), heading, body));
    }
    Ok(chapters)
}

/// Join chapters back into the normalized source text.
pub fn reassemble(chapters: &[Chapter]) -> String {
    let mut out = String::new();
    for chapter in chapters {
        if !chapter.heading.is_empty() {
            out.push_str(&chapter.heading);
            out.push('\n');
        }
        out.push_str(&chapter.body);
    }
    out
}

/// Render prior events one per line for the window digest.
fn render_event_digest(events: &[PlotEvent]) -> String {
    events
        .iter()
        .map(|e| format!("{} [{}] {}", e.id, e.place_time, e.description))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Truncate `text` to at most `tokens` estimated tokens.
fn truncate_to_tokens(text: &str, tokens: usize, chars_per_token: f64) -> String {
    let max_chars = (tokens as f64 * chars_per_token).floor() as usize;
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    text.chars().take(max_chars).collect()
}

/// Assemble the sliding window for one focus chapter.
///
/// The focus chapter is never truncated (the window fails instead); the
/// digest of prior events yields only after the lookahead is gone; the
/// lookahead absorbs whatever budget remains.
pub fn build_window(
    novel: &Novel,
    focus: usize,
    prior_events: &[PlotEvent],
    cfg: &WindowConfig,
) -> Result<Window, CorpusError> {
    let chapter = novel
        .chapters
        .get(focus)
        .ok_or(CorpusError::ChapterOutOfRange(focus, novel.chapters.len()))?;
    let focus_text = chapter.full_text();
    let focus_tokens = estimate_tokens(&focus_text, cfg.chars_per_token);
    if focus_tokens > cfg.context_token_budget {
        return Err(CorpusError::BudgetTooSmall {
            chapter: focus,
            needed: focus_tokens,
            budget: cfg.context_token_budget,
        });
    }
    let mut remaining = cfg.context_token_budget - focus_tokens;

    let digest_full = render_event_digest(prior_events);
    let digest_tokens = estimate_tokens(&digest_full, cfg.chars_per_token);
    let prior_events_digest = if digest_tokens <= remaining {
        remaining -= digest_tokens;
        digest_full
    } else {
        let truncated = truncate_to_tokens(&digest_full, remaining, cfg.chars_per_token);
        remaining = 0;
        truncated
    };

    let mut lookahead_full = String::new();
    let lookahead_end = (focus + 1 + cfg.lookahead_chapters).min(novel.chapters.len());
    for next in &novel.chapters[focus + 1..lookahead_end] {
        if !lookahead_full.is_empty() {
            lookahead_full.push('\n');
        }
        lookahead_full.push_str(&next.full_text());
    }
    let lookahead_text = truncate_to_tokens(&lookahead_full, remaining, cfg.chars_per_token);

    Ok(Window {
        focus_chapter: focus,
        prior_events_digest,
        lookahead_text,
        focus_text,
    })
}

/// Character offsets at which sentences start, always including 0.
fn sentence_starts(chars: &[char]) -> Vec<usize> {
    let mut starts = vec![0];
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') {
            let mut j = i + 1;
            // Closing quotes ride along with the terminator.
            while j < chars.len() && matches!(chars[j], '"' | '\'' | '”' | '’' | ')') {
                j += 1;
            }
            if j < chars.len() && chars[j].is_whitespace() {
                while j < chars.len() && chars[j].is_whitespace() {
                    j += 1;
                }
                if j < chars.len() {
                    starts.push(j);
                }
                i = j;
                continue;
            }
        }
        i += 1;
    }
    starts
}

/// Cut `n` non-overlapping excerpts of roughly `target_tokens` each, at
/// sentence boundaries, deterministically for a fixed seed.
///
/// The document is divided into as many target-sized slots as fit; `n`
/// distinct slots are drawn with a seeded RNG and each excerpt snaps to the
/// sentence grid. When the document cannot yield `n` excerpts the selection
/// returns fewer and sets `doc_too_short` instead of failing.
pub fn select_excerpts(
    source_id: &str,
    doc: &str,
    n: usize,
    seed: u64,
    target_tokens: usize,
) -> ExcerptSelection {
    assert!(n >= 1, "at least one excerpt must be requested");
    let chars: Vec<char> = doc.chars().collect();
    let total_chars = chars.len();
    let target_chars = ((target_tokens as f64) * DEFAULT_CHARS_PER_TOKEN) as usize;

    // A document at or under the target is a single whole-document excerpt.
    if total_chars <= target_chars {
        let text: String = chars.iter().collect();
        return ExcerptSelection {
            excerpts: vec![Excerpt {
                source_id: source_id.to_string(),
                start_offset: 0,
                token_estimate: estimate_tokens(&text, DEFAULT_CHARS_PER_TOKEN),
                text,
            }],
            doc_too_short: n > 1,
        };
    }

    let slots = total_chars / target_chars;
    let take = n.min(slots);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, slots, take).into_iter().collect();
    chosen.sort_unstable();

    let starts = sentence_starts(&chars);
    let min_chars = (target_chars as f64 * 0.8) as usize;
    let mut excerpts = Vec::new();
    let mut prev_end = 0usize;

    for slot in chosen {
        let slot_start = slot * target_chars;
        let from = slot_start.max(prev_end);
        // First sentence start at or after `from`.
        let Some(&start) = starts.iter().find(|&&s| s >= from) else {
            continue;
        };
        if start >= total_chars {
            continue;
        }
        // Extend to the sentence boundary closest to the target length.
        let mut end = total_chars;
        let mut best_gap = usize::MAX;
        for &boundary in starts.iter().chain(std::iter::once(&total_chars)) {
            if boundary <= start {
                continue;
            }
            let len = boundary - start;
            let gap = len.abs_diff(target_chars);
            if gap < best_gap {
                best_gap = gap;
                end = boundary;
            }
            if boundary - start > target_chars && gap > best_gap {
                break;
            }
        }
        if end - start < min_chars {
            continue;
        }
        let text: String = chars[start..end].iter().collect::<String>();
        let text = text.trim_end().to_string();
        excerpts.push(Excerpt {
            source_id: source_id.to_string(),
            start_offset: start,
            token_estimate: estimate_tokens(&text, DEFAULT_CHARS_PER_TOKEN),
            text,
        });
        prev_end = end;
    }

    let doc_too_short = excerpts.len() < n;
    ExcerptSelection {
        excerpts,
        doc_too_short,
    }
}
