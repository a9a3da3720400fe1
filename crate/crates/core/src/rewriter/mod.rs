//! The rewriter: adaptation outline from the traversed plot graph, then
//! scene-by-scene screenplay generation with scene-aware context, both under
//! the refinement loop, assembled and emitted as Fountain text.

pub mod fountain;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{estimate_tokens, Novel};
use crate::llmio::{complete_structured, Backend, ChatRequest, LlmError, TemplateSet};
use crate::pipeline::PipelineError;
use crate::plotgraph::{traverse, EventId, PlotGraph, TraversalMode, CharacterArc};
use crate::refine::{
    har_refine, Feedback, HarStage, IssueKind, IssueLocation, IssuesPayload, RefineConfig,
    RefineError, RefinementRound,
};

pub use fountain::{emit_fountain, parse_fountain, validate_slugline};

/// Screenplay structure choice: a label plus its act list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub label: String,
    #[serde(default)]
    pub acts: Vec<String>,
}

/// Per-scene writing plan inside the adaptation outline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePlan {
    pub index: usize,
    #[serde(default)]
    pub storyline: String,
    pub goal: String,
    #[serde(default)]
    pub place_time: String,
    #[serde(default)]
    pub character_experiences: String,
    #[serde(default)]
    pub source_events: Vec<EventId>,
}

/// The adaptation outline: story core elements, structure, and the writing
/// plan for every scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outline {
    pub core_elements: String,
    pub structure: Structure,
    pub plans: Vec<ScenePlan>,
}

/// One generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub index: usize,
    pub slugline: String,
    pub body: String,
    pub plan_index: usize,
    /// How many refine rounds the verification loop adopted.
    pub refinement_rounds: usize,
    /// Set when verification still reported issues at the round budget; the
    /// scene is returned anyway for operator inspection.
    #[serde(default)]
    pub goal_unmet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub backend: String,
    pub fingerprint: String,
}

/// The assembled screenplay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screenplay {
    pub title: String,
    pub scenes: Vec<Scene>,
    pub traversal_mode: TraversalMode,
    pub meta: GenerationMeta,
}

#[derive(Debug, Error)]
pub enum RewriterError {
    #[error("scene count mismatch: {plans} plans but {scenes} scenes")]
    CountMismatch { plans: usize, scenes: usize },
    #[error("invalid slugline in scenes {0:?}")]
    InvalidSlugline(Vec<usize>),
    #[error("plan {plan} cites unknown event id `{id}`")]
    UnknownEventId { plan: usize, id: String },
    #[error("outline has no scene plans")]
    EmptyOutline,
    #[error("not fountain text: {0}")]
    NotFountain(String),
}

#[derive(Debug, Deserialize)]
struct CoreEnvelope {
    core_elements: String,
}

#[derive(Debug, Deserialize)]
struct PlanDraft {
    #[serde(default)]
    storyline: String,
    goal: String,
    #[serde(default)]
    place_time: String,
    #[serde(default)]
    character_experiences: String,
    #[serde(default)]
    source_events: Vec<EventId>,
}

#[derive(Debug, Deserialize)]
struct PlansEnvelope {
    plans: Vec<PlanDraft>,
}

#[derive(Debug, Deserialize)]
struct PlanPatch {
    index: usize,
    #[serde(default)]
    storyline: String,
    goal: String,
    #[serde(default)]
    place_time: String,
    #[serde(default)]
    character_experiences: String,
    #[serde(default)]
    source_events: Vec<EventId>,
}

#[derive(Debug, Deserialize)]
struct PlansRefinePayload {
    #[serde(default)]
    plans: Vec<Value>,
}

/// Render the graph for prompts: events in traversal order, then edges.
fn render_graph(graph: &PlotGraph, order: &[EventId]) -> String {
    let mut out = String::from("EVENTS (in adaptation order):\n");
    for id in order {
        if let Some(event) = graph.event(id) {
            out.push_str(&format!(
                "- {} [{}] {} (characters: {})\n",
                event.id,
                event.place_time,
                event.description,
                event.characters.join(", ")
            ));
        }
    }
    out.push_str("CAUSAL LINKS:\n");
    for edge in graph.edges() {
        out.push_str(&format!(
            "- {} -> {} [{}] {}\n",
            edge.from_event, edge.to_event, edge.strength, edge.description
        ));
    }
    out
}

fn render_arcs(arcs: &[CharacterArc]) -> String {
    serde_json::to_string_pretty(arcs).unwrap_or_else(|_| "[]".to_string())
}

/// Generate the adaptation outline: core elements, structure, and scene
/// plans in three sequential calls, then a refinement pass focused on the
/// alignment of key events and major characters.
///
/// `target_scenes` pins the plan count in the planning prompt. Plans citing
/// unknown event ids are routed into refinement as `unaligned` issues; only
/// if refinement exhausts its budget with bad ids left does this fail.
pub fn generate_outline(
    graph: &PlotGraph,
    arcs: &[CharacterArc],
    mode: TraversalMode,
    backend: &dyn Backend,
    templates: &TemplateSet,
    refine_cfg: &RefineConfig,
    target_scenes: Option<usize>,
) -> Result<(Outline, Vec<RefinementRound>), PipelineError> {
    let order = traverse(graph, mode)?;
    let graph_text = render_graph(graph, &order);
    let arcs_text = render_arcs(arcs);

    let core_prompt = templates.render(
        "outline_core",
        &[("graph", graph_text.as_str()), ("arcs", arcs_text.as_str())],
    )?;
    let core = complete_structured::<CoreEnvelope>(backend, templates, "outline_core", &core_prompt)
        .map_err(|e| PipelineError::at("outline: core elements", e))?
        .value
        .core_elements;

    let structure_prompt = templates.render(
        "outline_structure",
        &[("core", core.as_str()), ("graph", graph_text.as_str())],
    )?;
    let structure = complete_structured::<Structure>(
        backend,
        templates,
        "outline_structure",
        &structure_prompt,
    )
    .map_err(|e| PipelineError::at("outline: structure", e))?
    .value;

    let count_instruction = match target_scenes {
        Some(n) => format!("Produce exactly {n} scene plans. "),
        None => String::new(),
    };
    let structure_text = serde_json::to_string(&structure).unwrap_or_default();
    let plans_prompt = templates.render(
        "outline_plans",
        &[
            ("core", core.as_str()),
            ("structure", structure_text.as_str()),
            ("graph", graph_text.as_str()),
            ("arcs", arcs_text.as_str()),
            ("scene_count_instruction", count_instruction.as_str()),
        ],
    )?;
    let drafts = complete_structured::<PlansEnvelope>(backend, templates, "outline_plans", &plans_prompt)
        .map_err(|e| PipelineError::at("outline: scene plans", e))?
        .value
        .plans;
    if drafts.is_empty() {
        return Err(RewriterError::EmptyOutline.into());
    }

    let plans: Vec<ScenePlan> = drafts
        .into_iter()
        .enumerate()
        .map(|(index, d)| ScenePlan {
            index,
            storyline: d.storyline,
            goal: d.goal,
            place_time: d.place_time,
            character_experiences: d.character_experiences,
            source_events: d.source_events,
        })
        .collect();
    let outline = Outline {
        core_elements: core,
        structure,
        plans,
    };

    let mut stage = OutlineHar { graph, templates };
    let (outline, trace) = har_refine(&mut stage, outline, backend, refine_cfg)
        .map_err(|e| PipelineError::at("outline: refinement", e))?;

    // Whatever refinement could not fix is now fatal.
    for plan in &outline.plans {
        if plan.goal.trim().is_empty() {
            return Err(LlmError::SchemaViolation {
                field: format!("plans[{}].goal", plan.index),
                detail: "scene plan has an empty goal".to_string(),
            }
            .into());
        }
        for id in &plan.source_events {
            if graph.event(id).is_none() {
                return Err(RewriterError::UnknownEventId {
                    plan: plan.index,
                    id: id.to_string(),
                }
                .into());
            }
        }
    }
    Ok((outline, trace))
}

/// Refinement hooks for the outline, focused on event/character alignment.
struct OutlineHar<'a> {
    graph: &'a PlotGraph,
    templates: &'a TemplateSet,
}

impl OutlineHar<'_> {
    fn unknown_id_issues(&self, outline: &Outline) -> Feedback {
        let mut feedback = Feedback::default();
        for plan in &outline.plans {
            let unknown: Vec<String> = plan
                .source_events
                .iter()
                .filter(|id| self.graph.event(id).is_none())
                .map(|id| id.to_string())
                .collect();
            if !unknown.is_empty() {
                feedback.locations.push(IssueLocation {
                    target_ids: vec![plan.index.to_string()],
                    kind: IssueKind::Unaligned,
                    note: format!("plan {} cites unknown event ids {unknown:?}", plan.index),
                    chapter_hint: None,
                });
                feedback.suggestions.push(format!(
                    "replace {unknown:?} in plan {} with valid event ids",
                    plan.index
                ));
            }
        }
        feedback
    }
}

impl HarStage for OutlineHar<'_> {
    type Artifact = Outline;

    fn feedback(
        &mut self,
        outline: &Outline,
        backend: &dyn Backend,
    ) -> Result<Feedback, RefineError> {
        let outline_text = serde_json::to_string_pretty(outline)
            .map_err(|e| RefineError::Llm(LlmError::MalformedOutput(e.to_string())))?;
        let ids = self
            .graph
            .event_ids()
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let prompt = self
            .templates
            .render(
                "outline_feedback",
                &[("outline", outline_text.as_str()), ("graph_ids", ids.as_str())],
            )
            .map_err(RefineError::Llm)?;
        let parsed = complete_structured::<IssuesPayload>(
            backend,
            self.templates,
            "outline_feedback",
            &prompt,
        )?;
        let mut feedback: Feedback = parsed.value.into();
        // Local validation rides along: unknown source events become
        // unaligned issues before they can fail the stage.
        let synthetic = self.unknown_id_issues(outline);
        feedback.locations.extend(synthetic.locations);
        feedback.suggestions.extend(synthetic.suggestions);
        Ok(feedback)
    }

    fn retrieve(&mut self, outline: &Outline, locations: &[IssueLocation]) -> String {
        let mut text = String::new();
        for location in locations {
            for target in &location.target_ids {
                if let Ok(index) = target.parse::<usize>() {
                    if let Some(plan) = outline.plans.get(index) {
                        if let Ok(rendered) = serde_json::to_string(plan) {
                            text.push_str(&rendered);
                            text.push('\n');
                        }
                        continue;
                    }
                }
                let id = EventId::from(target.as_str());
                if let Some(event) = self.graph.event(&id) {
                    if let Ok(rendered) = serde_json::to_string(event) {
                        text.push_str(&rendered);
                        text.push('\n');
                    }
                }
            }
        }
        text
    }

    fn refine(
        &mut self,
        _outline: &Outline,
        context: &str,
        feedback: &Feedback,
        backend: &dyn Backend,
    ) -> Result<Vec<Value>, RefineError> {
        let suggestions = feedback.suggestions_text();
        let prompt = self
            .templates
            .render(
                "outline_refine",
                &[("context", context), ("suggestions", suggestions.as_str())],
            )
            .map_err(RefineError::Llm)?;
        let parsed = complete_structured::<PlansRefinePayload>(
            backend,
            self.templates,
            "outline_refine",
            &prompt,
        )?;
        Ok(parsed.value.plans)
    }

    fn merge(&mut self, outline: &mut Outline, refined: &[Value]) -> Result<usize, RefineError> {
        let mut adopted = 0;
        for item in refined {
            let patch: PlanPatch = serde_json::from_value(item.clone()).map_err(|e| {
                RefineError::Llm(LlmError::SchemaViolation {
                    field: "plans".to_string(),
                    detail: e.to_string(),
                })
            })?;
            let plan = ScenePlan {
                index: patch.index,
                storyline: patch.storyline,
                goal: patch.goal,
                place_time: patch.place_time,
                character_experiences: patch.character_experiences,
                source_events: patch.source_events,
            };
            if patch.index < outline.plans.len() {
                outline.plans[patch.index] = plan;
            } else if patch.index == outline.plans.len() {
                outline.plans.push(plan);
            } else {
                return Err(RefineError::MergeConflict {
                    id: format!("plan {}", patch.index),
                });
            }
            adopted += 1;
        }
        Ok(adopted)
    }
}

/// Build the generation context for one scene: its source-event records, the
/// distinct chapters those events came from (the only part that yields to
/// the budget), and the previous scene's full text.
pub fn scene_context(
    plan: &ScenePlan,
    graph: &PlotGraph,
    novel: &Novel,
    prev_scene: Option<&Scene>,
    budget_tokens: usize,
    chars_per_token: f64,
) -> String {
    let mut events_section = String::from("SOURCE EVENTS:\n");
    let mut chapters: Vec<usize> = Vec::new();
    for id in &plan.source_events {
        if let Some(event) = graph.event(id) {
            events_section.push_str(&format!(
                "- {} [{}] {} (background: {})\n",
                event.id, event.place_time, event.description, event.background
            ));
            chapters.push(event.chapter);
        }
    }
    chapters.sort_unstable();
    chapters.dedup();

    let prev_section = match prev_scene {
        Some(scene) => format!("PREVIOUS SCENE:\n{}\n\n{}\n", scene.slugline, scene.body),
        None => String::new(),
    };

    let fixed = estimate_tokens(&events_section, chars_per_token)
        + estimate_tokens(&prev_section, chars_per_token);
    let mut remaining = budget_tokens.saturating_sub(fixed);

    let mut chapters_section = String::new();
    for index in chapters {
        let Some(chapter) = novel.chapters.get(index) else {
            continue;
        };
        let block = format!("NOVEL EXCERPT (chapter {index}):\n{}\n", chapter.full_text());
        let block_tokens = estimate_tokens(&block, chars_per_token);
        if block_tokens <= remaining {
            remaining -= block_tokens;
            chapters_section.push_str(&block);
        } else {
            let max_chars = (remaining as f64 * chars_per_token) as usize;
            chapters_section.extend(block.chars().take(max_chars));
            break;
        }
    }

    let mut out = events_section;
    out.push('\n');
    out.push_str(&chapters_section);
    if !prev_section.is_empty() {
        out.push('\n');
        out.push_str(&prev_section);
    }
    out
}

/// A scene in flight through verification.
#[derive(Debug, Clone)]
struct SceneDraft {
    slugline: String,
    body: String,
}

fn split_scene_text(text: &str) -> Result<SceneDraft, LlmError> {
    let mut lines = text.trim().lines();
    let slugline = lines
        .next()
        .map(|l| l.trim().to_string())
        .unwrap_or_default();
    let body = lines.collect::<Vec<_>>().join("\n").trim().to_string();
    if slugline.is_empty() || body.is_empty() {
        return Err(LlmError::MalformedOutput(
            "scene text needs a slugline line and a body".to_string(),
        ));
    }
    Ok(SceneDraft { slugline, body })
}

/// Verification hooks for one scene against its writing plan.
struct SceneHar<'a> {
    templates: &'a TemplateSet,
    plan: &'a ScenePlan,
    context: &'a str,
}

impl SceneHar<'_> {
    fn plan_vars(&self) -> [(&'static str, &str); 4] {
        [
            ("storyline", self.plan.storyline.as_str()),
            ("goal", self.plan.goal.as_str()),
            ("place_time", self.plan.place_time.as_str()),
            ("character_experiences", self.plan.character_experiences.as_str()),
        ]
    }
}

impl HarStage for SceneHar<'_> {
    type Artifact = SceneDraft;

    fn feedback(
        &mut self,
        scene: &SceneDraft,
        backend: &dyn Backend,
    ) -> Result<Feedback, RefineError> {
        let scene_text = format!("{}\n{}", scene.slugline, scene.body);
        let mut vars: Vec<(&str, &str)> = self.plan_vars().to_vec();
        vars.push(("scene", scene_text.as_str()));
        let prompt = self
            .templates
            .render("scene_feedback", &vars)
            .map_err(RefineError::Llm)?;
        let parsed =
            complete_structured::<IssuesPayload>(backend, self.templates, "scene_feedback", &prompt)?;
        Ok(parsed.value.into())
    }

    fn retrieve(&mut self, _scene: &SceneDraft, _locations: &[IssueLocation]) -> String {
        // The scene's support corpus is its generation context, already
        // budget-bounded.
        self.context.to_string()
    }

    fn refine(
        &mut self,
        scene: &SceneDraft,
        context: &str,
        feedback: &Feedback,
        backend: &dyn Backend,
    ) -> Result<Vec<Value>, RefineError> {
        let scene_text = format!("{}\n{}", scene.slugline, scene.body);
        let suggestions = feedback.suggestions_text();
        let prompt = self
            .templates
            .render(
                "scene_refine",
                &[
                    ("scene", scene_text.as_str()),
                    ("context", context),
                    ("suggestions", suggestions.as_str()),
                ],
            )
            .map_err(RefineError::Llm)?;
        let system = self.templates.get("system").map_err(RefineError::Llm)?;
        let response = backend.complete(&ChatRequest::new("scene_refine", system, &prompt))?;
        Ok(vec![Value::String(response.text)])
    }

    fn merge(&mut self, scene: &mut SceneDraft, refined: &[Value]) -> Result<usize, RefineError> {
        let mut adopted = 0;
        for item in refined {
            let text = item.as_str().ok_or_else(|| {
                RefineError::Llm(LlmError::MalformedOutput(
                    "scene refinement must be plain text".to_string(),
                ))
            })?;
            *scene = split_scene_text(text)?;
            adopted += 1;
        }
        Ok(adopted)
    }
}

/// Generate one scene from its plan and context, then verify it against the
/// plan's goal through the refinement loop.
///
/// When verification still reports issues at the round budget the scene is
/// returned with `goal_unmet` set rather than failing — the operator can
/// inspect the checkpoint and rerun a single scene.
pub fn generate_scene(
    plan: &ScenePlan,
    context: &str,
    backend: &dyn Backend,
    templates: &TemplateSet,
    refine_cfg: &RefineConfig,
) -> Result<(Scene, Vec<RefinementRound>), PipelineError> {
    let index = plan.index.to_string();
    let prompt = templates.render(
        "scene",
        &[
            ("index", index.as_str()),
            ("storyline", plan.storyline.as_str()),
            ("goal", plan.goal.as_str()),
            ("place_time", plan.place_time.as_str()),
            ("character_experiences", plan.character_experiences.as_str()),
            ("context", context),
        ],
    )?;
    let system = templates.get("system")?;
    let response = backend
        .complete(&ChatRequest::new("scene", system, &prompt))
        .map_err(|e| PipelineError::at(format!("scene {}", plan.index), e))?;
    let draft = split_scene_text(&response.text)
        .map_err(|e| PipelineError::at(format!("scene {}", plan.index), e))?;

    let mut stage = SceneHar {
        templates,
        plan,
        context,
    };
    let (draft, trace) = har_refine(&mut stage, draft, backend, refine_cfg)
        .map_err(|e| PipelineError::at(format!("scene {}: verification", plan.index), e))?;

    let refinement_rounds = trace.iter().filter(|r| !r.refined_items.is_empty()).count();
    let goal_unmet = trace
        .last()
        .map(|round| !round.locations.is_empty())
        .unwrap_or(false);
    Ok((
        Scene {
            index: plan.index,
            slugline: draft.slugline,
            body: draft.body,
            plan_index: plan.index,
            refinement_rounds,
            goal_unmet,
        },
        trace,
    ))
}

/// Assemble scenes into the final screenplay, in plan order, validating the
/// scene count and every slugline.
pub fn assemble_screenplay(
    title: &str,
    outline: &Outline,
    mut scenes: Vec<Scene>,
    traversal_mode: TraversalMode,
    meta: GenerationMeta,
) -> Result<Screenplay, RewriterError> {
    if scenes.len() != outline.plans.len() {
        return Err(RewriterError::CountMismatch {
            plans: outline.plans.len(),
            scenes: scenes.len(),
        });
    }
    scenes.sort_by_key(|s| s.index);
    let invalid: Vec<usize> = scenes
        .iter()
        .filter(|s| !validate_slugline(&s.slugline))
        .map(|s| s.index)
        .collect();
    if !invalid.is_empty() {
        return Err(RewriterError::InvalidSlugline(invalid));
    }
    Ok(Screenplay {
        title: title.to_string(),
        scenes,
        traversal_mode,
        meta,
    })
}
