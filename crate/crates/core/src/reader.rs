//! The reader: slide a window over the novel extracting events and character
//! arcs, refine the combined extraction, extract causal relations until they
//! stabilize, and assemble the causal plot graph.

use std::collections::{BTreeSet, HashSet};

use serde::Deserialize;
use serde_json::Value;

use crate::corpus::{build_window, Novel, Window, WindowConfig};
use crate::llmio::{complete_structured, Backend, TemplateSet};
use crate::pipeline::PipelineError;
use crate::plotgraph::{
    break_cycles_detailed, sanitize_edges, CausalEdge, CharacterArc, EventId, PlotEvent,
    PlotGraph, Strength,
};
use crate::refine::{
    har_refine, retrieve_context, Feedback, HarStage, IssueLocation, IssuesPayload, RefineConfig,
    RefineError, RefinementRound, SupportCorpus,
};

/// The reader's combined artifact while extraction is in flight.
#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub events: Vec<PlotEvent>,
    pub arcs: Vec<CharacterArc>,
}

/// Final reader output: refined extraction plus the refinement trace.
#[derive(Debug, Clone)]
pub struct ReaderOutput {
    pub events: Vec<PlotEvent>,
    pub arcs: Vec<CharacterArc>,
    pub trace: Vec<RefinementRound>,
}

/// Relation extraction outcome: raw edges, passes used, and dropped edges
/// that named nonexistent events.
#[derive(Debug, Clone, Default)]
pub struct RelationExtraction {
    pub edges: Vec<CausalEdge>,
    pub passes: usize,
    pub dropped_unknown: Vec<(String, String)>,
}

/// What graph assembly kept and dropped, for the stage log.
#[derive(Debug, Clone, Default)]
pub struct GraphBuildReport {
    pub nodes: usize,
    pub input_edges: usize,
    pub dropped_dangling: Vec<(String, String)>,
    pub dropped_self_loops: usize,
    pub dropped_duplicates: usize,
    pub dropped_cycles: usize,
    pub kept: usize,
}

impl GraphBuildReport {
    pub fn summary(&self) -> String {
        format!(
            "graph: {} events, {} raw edges -> {} kept ({} dangling, {} self-loops, {} duplicates, {} cycle edges dropped)",
            self.nodes,
            self.input_edges,
            self.kept,
            self.dropped_dangling.len(),
            self.dropped_self_loops,
            self.dropped_duplicates,
            self.dropped_cycles,
        )
    }
}

#[derive(Debug, Deserialize)]
struct EventDraft {
    #[serde(default)]
    place_time: String,
    #[serde(default)]
    background: String,
    description: String,
    #[serde(default)]
    characters: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ArcDraft {
    character: String,
    #[serde(default)]
    biography: Vec<crate::plotgraph::BiographyEntry>,
    #[serde(default)]
    relations: Vec<crate::plotgraph::Relation>,
}

#[derive(Debug, Deserialize)]
struct EdgeDraft {
    from: String,
    to: String,
    #[serde(default)]
    description: String,
    strength: Strength,
}

/// Wire shape of a reader refine completion: replacement events and arcs.
#[derive(Debug, Deserialize)]
struct ReaderRefinePayload {
    #[serde(default)]
    events: Vec<Value>,
    #[serde(default)]
    arcs: Vec<Value>,
}

#[derive(Debug, Deserialize)]
struct RefinedEvent {
    #[serde(flatten)]
    event: PlotEvent,
    #[serde(default)]
    new: bool,
}

fn render_events(events: &[PlotEvent]) -> String {
    if events.is_empty() {
        return "(none)".to_string();
    }
    events
        .iter()
        .map(|e| format!("{} [{}] {}", e.id, e.place_time, e.description))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_arc_names(arcs: &[CharacterArc]) -> String {
    if arcs.is_empty() {
        return "(none)".to_string();
    }
    arcs.iter()
        .map(|a| a.character.clone())
        .collect::<Vec<_>>()
        .join(", ")
}

fn or_none(text: &str) -> &str {
    if text.trim().is_empty() {
        "(none)"
    } else {
        text
    }
}

/// Accumulate `additions` into `base`: same-name characters gain biography
/// entries and relations (exact duplicates stored once), new characters are
/// appended in encounter order.
pub fn merge_arcs(mut base: Vec<CharacterArc>, additions: Vec<CharacterArc>) -> Vec<CharacterArc> {
    for add in additions {
        match base.iter_mut().find(|a| a.character == add.character) {
            Some(existing) => {
                for entry in add.biography {
                    if !existing.biography.contains(&entry) {
                        existing.biography.push(entry);
                    }
                }
                for relation in add.relations {
                    if !existing.relations.contains(&relation) {
                        existing.relations.push(relation);
                    }
                }
            }
            None => base.push(add),
        }
    }
    base
}

/// Make the relation set symmetric: whenever A lists B, B lists A with the
/// same description, creating an arc for B if none exists yet.
pub fn symmetrize_relations(arcs: &mut Vec<CharacterArc>) {
    let links: Vec<(String, String, String)> = arcs
        .iter()
        .flat_map(|arc| {
            arc.relations
                .iter()
                .map(|r| (arc.character.clone(), r.other.clone(), r.description.clone()))
        })
        .collect();
    for (character, other, description) in links {
        if !arcs.iter().any(|a| a.character == other) {
            arcs.push(CharacterArc::new(other.clone()));
        }
        let arc = arcs
            .iter_mut()
            .find(|a| a.character == other)
            .expect("arc just ensured");
        let mirrored = crate::plotgraph::Relation {
            other: character,
            description,
        };
        if !arc.relations.contains(&mirrored) {
            arc.relations.push(mirrored);
        }
    }
}

/// The reader pipeline over one backend and template set.
pub struct Reader<'a> {
    backend: &'a dyn Backend,
    templates: &'a TemplateSet,
    window_cfg: WindowConfig,
    refine_cfg: RefineConfig,
}

impl<'a> Reader<'a> {
    pub fn new(
        backend: &'a dyn Backend,
        templates: &'a TemplateSet,
        window_cfg: WindowConfig,
        refine_cfg: RefineConfig,
    ) -> Self {
        Reader {
            backend,
            templates,
            window_cfg,
            refine_cfg,
        }
    }

    /// Extract this window's plot events; ids are minted as
    /// `c{chapter:02}-e{seq:02}` in response order.
    pub fn extract_window_events(&self, window: &Window) -> Result<Vec<PlotEvent>, PipelineError> {
        let chapter_index = window.focus_chapter.to_string();
        let prompt = self.templates.render(
            "extract_events",
            &[
                ("chapter_index", chapter_index.as_str()),
                ("digest", or_none(&window.prior_events_digest)),
                ("focus", &window.focus_text),
                ("lookahead", or_none(&window.lookahead_text)),
            ],
        )?;
        let parsed = complete_structured::<Vec<EventDraft>>(
            self.backend,
            self.templates,
            "extract_events",
            &prompt,
        )?;
        Ok(parsed
            .value
            .into_iter()
            .enumerate()
            .map(|(seq, draft)| PlotEvent {
                id: EventId::new(window.focus_chapter, seq),
                place_time: draft.place_time,
                background: draft.background,
                description: draft.description,
                characters: draft.characters,
                chapter: window.focus_chapter,
                seq,
            })
            .collect())
    }

    /// Extract this window's character arcs and merge them into the prior
    /// set. Relations are symmetrized on ingest.
    pub fn extract_window_arcs(
        &self,
        window: &Window,
        prior_arcs: &[CharacterArc],
        window_events: &[PlotEvent],
    ) -> Result<Vec<CharacterArc>, PipelineError> {
        let chapter_index = window.focus_chapter.to_string();
        let known = render_arc_names(prior_arcs);
        let events = render_events(window_events);
        let prompt = self.templates.render(
            "extract_arcs",
            &[
                ("chapter_index", chapter_index.as_str()),
                ("known_arcs", known.as_str()),
                ("focus", &window.focus_text),
                ("lookahead", or_none(&window.lookahead_text)),
                ("events", events.as_str()),
            ],
        )?;
        let parsed = complete_structured::<Vec<ArcDraft>>(
            self.backend,
            self.templates,
            "extract_arcs",
            &prompt,
        )?;
        let additions = parsed
            .value
            .into_iter()
            .map(|d| CharacterArc {
                character: d.character,
                biography: d.biography,
                relations: d.relations,
            })
            .collect();
        let mut merged = merge_arcs(prior_arcs.to_vec(), additions);
        symmetrize_relations(&mut merged);
        Ok(merged)
    }

    /// Sequential pass over all windows, then one refinement loop over the
    /// combined extraction with the chapters as support corpus.
    ///
    /// `progress` receives events and arcs as they accumulate so a caller
    /// can checkpoint partial work when a backend error aborts the pass.
    pub fn read_novel(
        &self,
        novel: &Novel,
        progress: &mut Extraction,
    ) -> Result<ReaderOutput, PipelineError> {
        for focus in 0..novel.chapters.len() {
            let window = build_window(novel, focus, &progress.events, &self.window_cfg)
                .map_err(|e| PipelineError::at(format!("read: window {focus}"), e))?;
            let events = self
                .extract_window_events(&window)
                .map_err(|e| PipelineError::at(format!("read: events, chapter {focus}"), e))?;
            progress.events.extend(events.clone());
            progress.arcs = self
                .extract_window_arcs(&window, &progress.arcs, &events)
                .map_err(|e| PipelineError::at(format!("read: arcs, chapter {focus}"), e))?;
        }

        let mut stage = ReaderHar {
            templates: self.templates,
            novel,
            window_cfg: &self.window_cfg,
            unknown_ids: Vec::new(),
        };
        let artifact = Extraction {
            events: progress.events.clone(),
            arcs: progress.arcs.clone(),
        };
        let (refined, trace) = har_refine(&mut stage, artifact, self.backend, &self.refine_cfg)
            .map_err(|e| PipelineError::at("read: refinement", e))?;
        Ok(ReaderOutput {
            events: refined.events,
            arcs: refined.arcs,
            trace,
        })
    }

    /// Prompt for causal relations in passes, feeding previously extracted
    /// relations back as context, until a pass adds no new `(from, to)` pair
    /// or `max_passes` is reached. Repeated pairs keep their first
    /// extraction; edges naming unknown events are dropped and reported.
    pub fn extract_relations(
        &self,
        events: &[PlotEvent],
        max_passes: usize,
    ) -> Result<RelationExtraction, PipelineError> {
        let mut out = RelationExtraction::default();
        if events.len() < 2 {
            return Ok(out);
        }
        let ids: HashSet<&EventId> = events.iter().map(|e| &e.id).collect();
        let events_render = render_events(events);
        let mut seen: HashSet<(EventId, EventId)> = HashSet::new();

        for pass in 1..=max_passes {
            out.passes = pass;
            let known = if out.edges.is_empty() {
                "(none)".to_string()
            } else {
                out.edges
                    .iter()
                    .map(|e| format!("{} -> {} [{}] {}", e.from_event, e.to_event, e.strength, e.description))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            let pass_str = pass.to_string();
            let prompt = self.templates.render(
                "extract_relations",
                &[
                    ("pass", pass_str.as_str()),
                    ("events", events_render.as_str()),
                    ("known_edges", known.as_str()),
                ],
            )?;
            let parsed = complete_structured::<Vec<EdgeDraft>>(
                self.backend,
                self.templates,
                "extract_relations",
                &prompt,
            )
            .map_err(|e| PipelineError::at(format!("relations: pass {pass}"), e))?;

            let mut new_pairs = 0;
            for draft in parsed.value {
                let from = EventId::from(draft.from);
                let to = EventId::from(draft.to);
                if !ids.contains(&from) || !ids.contains(&to) {
                    out.dropped_unknown.push((from.to_string(), to.to_string()));
                    continue;
                }
                let pair = (from.clone(), to.clone());
                if seen.contains(&pair) {
                    continue; // rewording of a known pair is not new
                }
                seen.insert(pair);
                out.edges.push(CausalEdge {
                    order: out.edges.len(),
                    from_event: from,
                    to_event: to,
                    description: draft.description,
                    strength: draft.strength,
                });
                new_pairs += 1;
            }
            if new_pairs == 0 {
                break;
            }
        }
        Ok(out)
    }
}

/// Assemble the causal plot graph: drop edges referencing missing events,
/// sanitize, break cycles, and flag the result acyclic.
pub fn build_plot_graph(
    events: Vec<PlotEvent>,
    edges: Vec<CausalEdge>,
) -> Result<(PlotGraph, GraphBuildReport), PipelineError> {
    let ids: BTreeSet<EventId> = events.iter().map(|e| e.id.clone()).collect();
    let mut report = GraphBuildReport {
        nodes: events.len(),
        input_edges: edges.len(),
        ..GraphBuildReport::default()
    };

    let (valid, dangling): (Vec<_>, Vec<_>) = edges
        .into_iter()
        .partition(|e| ids.contains(&e.from_event) && ids.contains(&e.to_event));
    report.dropped_dangling = dangling
        .iter()
        .map(|e| (e.from_event.to_string(), e.to_event.to_string()))
        .collect();

    report.dropped_self_loops = valid.iter().filter(|e| e.from_event == e.to_event).count();
    let valid_len = valid.len();
    let sanitized = sanitize_edges(&ids, valid).map_err(PipelineError::from)?;
    report.dropped_duplicates = valid_len - report.dropped_self_loops - sanitized.len();

    let outcome = break_cycles_detailed(&events, &sanitized);
    report.dropped_cycles = outcome.skipped.len();
    report.kept = outcome.kept.len();

    let graph = PlotGraph::new_acyclic(events, outcome.kept)?;
    Ok((graph, report))
}

/// Refinement hooks for the combined (events, arcs) extraction.
struct ReaderHar<'a> {
    templates: &'a TemplateSet,
    novel: &'a Novel,
    window_cfg: &'a WindowConfig,
    unknown_ids: Vec<String>,
}

/// Support view over the current extraction plus the novel chapters.
struct ExtractionSupport<'a> {
    extraction: &'a Extraction,
    novel: &'a Novel,
}

impl SupportCorpus for ExtractionSupport<'_> {
    fn item(&self, id: &str) -> Option<String> {
        let event_id = EventId::from(id);
        if let Some(event) = self.extraction.events.iter().find(|e| e.id == event_id) {
            return serde_json::to_string(event).ok();
        }
        self.extraction
            .arcs
            .iter()
            .find(|a| a.character == id)
            .and_then(|arc| serde_json::to_string(arc).ok())
    }

    fn chapters_for_item(&self, id: &str) -> Vec<usize> {
        let event_id = EventId::from(id);
        if let Some(event) = self.extraction.events.iter().find(|e| e.id == event_id) {
            return vec![event.chapter];
        }
        if let Some(arc) = self.extraction.arcs.iter().find(|a| a.character == id) {
            let mut chapters: Vec<usize> = arc
                .biography
                .iter()
                .filter_map(|entry| {
                    self.extraction
                        .events
                        .iter()
                        .find(|e| e.id == entry.event)
                        .map(|e| e.chapter)
                })
                .collect();
            chapters.sort_unstable();
            chapters.dedup();
            return chapters;
        }
        Vec::new()
    }

    fn chapter_text(&self, index: usize) -> Option<String> {
        self.novel.chapters.get(index).map(|c| c.full_text())
    }
}

impl HarStage for ReaderHar<'_> {
    type Artifact = Extraction;

    fn feedback(
        &mut self,
        artifact: &Extraction,
        backend: &dyn Backend,
    ) -> Result<Feedback, RefineError> {
        let events = serde_json::to_string_pretty(&artifact.events)
            .map_err(|e| RefineError::Llm(crate::llmio::LlmError::MalformedOutput(e.to_string())))?;
        let arcs = serde_json::to_string_pretty(&artifact.arcs)
            .map_err(|e| RefineError::Llm(crate::llmio::LlmError::MalformedOutput(e.to_string())))?;
        let prompt = self
            .templates
            .render("reader_feedback", &[("events", events.as_str()), ("arcs", arcs.as_str())])
            .map_err(RefineError::Llm)?;
        let parsed = complete_structured::<IssuesPayload>(
            backend,
            self.templates,
            "reader_feedback",
            &prompt,
        )?;
        Ok(parsed.value.into())
    }

    fn retrieve(&mut self, artifact: &Extraction, locations: &[IssueLocation]) -> String {
        let support = ExtractionSupport {
            extraction: artifact,
            novel: self.novel,
        };
        let mut text = String::new();
        for location in locations {
            let retrieved = retrieve_context(
                location,
                &support,
                self.window_cfg.context_token_budget,
                self.window_cfg.chars_per_token,
            );
            text.push_str(&retrieved.text);
            self.unknown_ids.extend(retrieved.unknown_ids);
        }
        text
    }

    fn refine(
        &mut self,
        _artifact: &Extraction,
        context: &str,
        feedback: &Feedback,
        backend: &dyn Backend,
    ) -> Result<Vec<Value>, RefineError> {
        let suggestions = feedback.suggestions_text();
        let prompt = self
            .templates
            .render(
                "reader_refine",
                &[("context", context), ("suggestions", suggestions.as_str())],
            )
            .map_err(RefineError::Llm)?;
        let parsed = complete_structured::<ReaderRefinePayload>(
            backend,
            self.templates,
            "reader_refine",
            &prompt,
        )?;
        let mut items = parsed.value.events;
        items.extend(parsed.value.arcs);
        Ok(items)
    }

    fn merge(&mut self, artifact: &mut Extraction, refined: &[Value]) -> Result<usize, RefineError> {
        let mut adopted = 0;
        for item in refined {
            if item.get("character").is_some() {
                let arc: CharacterArc = serde_json::from_value(item.clone()).map_err(|e| {
                    RefineError::Llm(crate::llmio::LlmError::SchemaViolation {
                        field: "arcs".to_string(),
                        detail: e.to_string(),
                    })
                })?;
                match artifact
                    .arcs
                    .iter_mut()
                    .find(|a| a.character == arc.character)
                {
                    Some(existing) => *existing = arc,
                    None => artifact.arcs.push(arc),
                }
                adopted += 1;
            } else {
                let refined_event: RefinedEvent =
                    serde_json::from_value(item.clone()).map_err(|e| {
                        RefineError::Llm(crate::llmio::LlmError::SchemaViolation {
                            field: "events".to_string(),
                            detail: e.to_string(),
                        })
                    })?;
                let position = artifact
                    .events
                    .iter()
                    .position(|e| e.id == refined_event.event.id);
                match position {
                    Some(i) => artifact.events[i] = refined_event.event,
                    None if refined_event.new => artifact.events.push(refined_event.event),
                    None => {
                        return Err(RefineError::MergeConflict {
                            id: refined_event.event.id.to_string(),
                        })
                    }
                }
                adopted += 1;
            }
        }
        artifact.events.sort_by_key(|e| e.position());
        symmetrize_relations(&mut artifact.arcs);
        Ok(adopted)
    }
}
