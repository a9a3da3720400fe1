//! Fountain plain-text emission and the round-trip reader that keeps it
//! honest.
//!
//! The emitter canonicalizes scene bodies: blocks separated by single blank
//! lines, character cues uppercase on their own line, dialogue indented
//! beneath them, action flush left. The parser reverses exactly that subset,
//! so `emit(parse(emit(x))) == emit(x)`.

use super::{GenerationMeta, RewriterError, Scene, Screenplay};
use crate::plotgraph::TraversalMode;

const DIALOGUE_INDENT: &str = "    ";

/// A slugline is uppercase, starts with a scene-heading prefix, and names a
/// location and time separated by " - ".
pub fn validate_slugline(line: &str) -> bool {
    let line = line.trim();
    if line != line.to_uppercase() {
        return false;
    }
    let rest = ["INT./EXT.", "INT.", "EXT.", "I/E."]
        .iter()
        .find_map(|prefix| line.strip_prefix(prefix));
    let Some(rest) = rest else {
        return false;
    };
    match rest.split_once(" - ") {
        Some((location, time)) => !location.trim().is_empty() && !time.trim().is_empty(),
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Block {
    Action(Vec<String>),
    Dialogue { cue: String, lines: Vec<String> },
}

fn is_cue(line: &str) -> bool {
    !line.is_empty()
        && line == line.to_uppercase()
        && line.chars().any(|c| c.is_alphabetic())
        && !line.ends_with(':')
        && !validate_slugline(line)
        && line.len() <= 60
}

fn parse_blocks(body: &str) -> Vec<Block> {
    let mut blocks = Vec::new();
    for paragraph in body.split("\n\n") {
        let lines: Vec<String> = paragraph
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if lines.is_empty() {
            continue;
        }
        if lines.len() > 1 && is_cue(&lines[0]) {
            blocks.push(Block::Dialogue {
                cue: lines[0].clone(),
                lines: lines[1..].to_vec(),
            });
        } else {
            blocks.push(Block::Action(lines));
        }
    }
    blocks
}

fn render_blocks(blocks: &[Block]) -> String {
    blocks
        .iter()
        .map(|block| match block {
            Block::Action(lines) => lines.join("\n"),
            Block::Dialogue { cue, lines } => {
                let mut out = cue.clone();
                for line in lines {
                    out.push('\n');
                    out.push_str(DIALOGUE_INDENT);
                    out.push_str(line);
                }
                out
            }
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Render the screenplay as Fountain text: a title page, then each scene as
/// an uppercase slugline followed by its canonicalized body.
pub fn emit_fountain(screenplay: &Screenplay) -> Result<String, RewriterError> {
    let invalid: Vec<usize> = screenplay
        .scenes
        .iter()
        .filter(|s| !validate_slugline(&s.slugline))
        .map(|s| s.index)
        .collect();
    if !invalid.is_empty() {
        return Err(RewriterError::InvalidSlugline(invalid));
    }

    let mut out = String::new();
    out.push_str(&format!("Title: {}\n", screenplay.title));
    out.push_str("Credit: Adapted screenplay\n\n");
    for scene in &screenplay.scenes {
        out.push_str(scene.slugline.trim());
        out.push_str("\n\n");
        out.push_str(&render_blocks(&parse_blocks(&scene.body)));
        out.push_str("\n\n");
    }
    while out.ends_with('\n') {
        out.pop();
    }
    out.push('\n');
    Ok(out)
}

/// Parse Fountain text produced by [`emit_fountain`] back into a screenplay.
///
/// Fountain carries no generation metadata, so the parsed screenplay gets
/// neutral meta; the round-trip property is about the text.
pub fn parse_fountain(text: &str) -> Result<Screenplay, RewriterError> {
    let mut title = String::new();
    let mut scenes: Vec<Scene> = Vec::new();
    let mut current: Option<(String, Vec<String>)> = None;

    for line in text.lines() {
        let trimmed = line.trim_end();
        if scenes.is_empty() && current.is_none() {
            if let Some(value) = trimmed.strip_prefix("Title:") {
                title = value.trim().to_string();
                continue;
            }
            if trimmed.strip_prefix("Credit:").is_some() || trimmed.is_empty() {
                continue;
            }
        }
        if validate_slugline(trimmed) {
            if let Some((slugline, body_lines)) = current.take() {
                scenes.push(finish_scene(scenes.len(), slugline, body_lines)?);
            }
            current = Some((trimmed.trim().to_string(), Vec::new()));
        } else if let Some((_, body_lines)) = current.as_mut() {
            body_lines.push(trimmed.to_string());
        } else if !trimmed.is_empty() {
            return Err(RewriterError::NotFountain(format!(
                "text before first scene heading: `{trimmed}`"
            )));
        }
    }
    if let Some((slugline, body_lines)) = current.take() {
        scenes.push(finish_scene(scenes.len(), slugline, body_lines)?);
    }
    if scenes.is_empty() {
        return Err(RewriterError::NotFountain(
            "no scene headings found".to_string(),
        ));
    }
    Ok(Screenplay {
        title,
        scenes,
        traversal_mode: TraversalMode::Chapter,
        meta: GenerationMeta {
            backend: "fountain".to_string(),
            fingerprint: String::new(),
        },
    })
}

fn finish_scene(
    index: usize,
    slugline: String,
    body_lines: Vec<String>,
) -> Result<Scene, RewriterError> {
    let body = render_blocks(&parse_blocks(&body_lines.join("\n")));
    Ok(Scene {
        index,
        slugline,
        body,
        plan_index: index,
        refinement_rounds: 0,
        goal_unmet: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(index: usize, slugline: &str, body: &str) -> Scene {
        Scene {
            index,
            slugline: slugline.to_string(),
            body: body.to_string(),
            plan_index: index,
            refinement_rounds: 0,
            goal_unmet: false,
        }
    }

    fn screenplay(scenes: Vec<Scene>) -> Screenplay {
        Screenplay {
            title: "The Keeper".to_string(),
            scenes,
            traversal_mode: TraversalMode::Bft,
            meta: GenerationMeta {
                backend: "mock".to_string(),
                fingerprint: "fp".to_string(),
            },
        }
    }

    #[test]
    fn slugline_patterns() {
        assert!(validate_slugline("INT. LIGHTHOUSE - NIGHT"));
        assert!(validate_slugline("EXT. HARBOR ROAD - DAY"));
        assert!(validate_slugline("INT./EXT. CAR - CONTINUOUS"));
        assert!(!validate_slugline("somewhere, later"));
        assert!(!validate_slugline("Int. Lighthouse - Night"));
        assert!(!validate_slugline("INT. LIGHTHOUSE"));
        assert!(!validate_slugline("INT.  - NIGHT"));
    }

    #[test]
    fn one_scene_with_dialogue_matches_golden() {
        let sp = screenplay(vec![scene(
            0,
            "INT. LIGHTHOUSE - NIGHT",
            "The lamp gutters. MARA climbs the last stair.\n\nMARA\nWho left the light to die?",
        )]);
        let out = emit_fountain(&sp).unwrap();
        let golden = "Title: The Keeper\n\
                      Credit: Adapted screenplay\n\
                      \n\
                      INT. LIGHTHOUSE - NIGHT\n\
                      \n\
                      The lamp gutters. MARA climbs the last stair.\n\
                      \n\
                      MARA\n    Who left the light to die?\n";
        assert_eq!(out, golden);
    }

    #[test]
    fn action_only_scene_has_no_cues() {
        let sp = screenplay(vec![scene(
            0,
            "EXT. HARBOR ROAD - DAY",
            "Rain over the harbor. A cart rolls past empty stalls.",
        )]);
        let out = emit_fountain(&sp).unwrap();
        assert!(out.contains("Rain over the harbor."));
        assert!(!out.contains(DIALOGUE_INDENT));
    }

    #[test]
    fn invalid_slugline_lists_scene_indices() {
        let sp = screenplay(vec![
            scene(0, "somewhere, later", "body"),
            scene(1, "INT. HOME - DAY", "body"),
        ]);
        match emit_fountain(&sp).unwrap_err() {
            RewriterError::InvalidSlugline(indices) => assert_eq!(indices, vec![0]),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn emit_parse_emit_is_a_fixpoint() {
        let sp = screenplay(vec![
            scene(
                0,
                "INT. LIGHTHOUSE - NIGHT",
                "The lamp gutters.\n\nMARA\nWho left the light to die?\nAnswer me.\n\nShe waits.",
            ),
            scene(1, "EXT. HARBOR ROAD - DAY", "Rain.\n\nTOLL KEEPER\nPapers, please."),
        ]);
        let first = emit_fountain(&sp).unwrap();
        let reparsed = parse_fountain(&first).unwrap();
        let second = emit_fountain(&reparsed).unwrap();
        assert_eq!(first, second);
        assert_eq!(reparsed.scenes.len(), 2);
        assert_eq!(reparsed.title, "The Keeper");
    }

    #[test]
    fn parse_recovers_scene_structure() {
        let text = "Title: T\nCredit: C\n\nINT. A - DAY\n\nAction line.\n\nEXT. B - NIGHT\n\nMore action.\n";
        let sp = parse_fountain(text).unwrap();
        assert_eq!(sp.scenes.len(), 2);
        assert_eq!(sp.scenes[0].slugline, "INT. A - DAY");
        assert_eq!(sp.scenes[1].body, "More action.");
    }

    #[test]
    fn transitions_stay_action_level() {
        // An uppercase line ending in ':' is not a cue.
        let sp = screenplay(vec![scene(
            0,
            "INT. A - DAY",
            "CUT TO:\n\nThe hall, later.",
        )]);
        let out = emit_fountain(&sp).unwrap();
        assert!(out.contains("CUT TO:\n\nThe hall"));
    }

    #[test]
    fn parse_rejects_non_fountain_text() {
        assert!(parse_fountain("just a paragraph of prose").is_err());
    }
}
