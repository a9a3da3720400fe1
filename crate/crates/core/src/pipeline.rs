//! Stage orchestration over a run directory.
//!
//! Each stage reads the previous stage's checkpoint — hand edits included —
//! and writes its own, stamped with the config fingerprint. `--resume` skips
//! stages whose outputs already exist; fingerprint mismatches are refused
//! unless forced.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError};
use crate::config::{fingerprint, ConfigError, PipelineConfig};
use crate::corpus::{CorpusError, Novel};
use crate::llmio::{build_backend, Backend, LlmError, TemplateSet};
use crate::plotgraph::{to_dot, CausalEdge, CharacterArc, GraphError, PlotEvent, PlotGraph};
use crate::reader::{build_plot_graph, Extraction, Reader};
use crate::refine::{write_trace, RefineError};
use crate::rewriter::{
    assemble_screenplay, emit_fountain, generate_outline, generate_scene, scene_context,
    GenerationMeta, Outline, RewriterError, Scene,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Rewriter(#[from] RewriterError),
    #[error(transparent)]
    Eval(#[from] crate::evalkit::EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(
        "checkpoint `{artifact}` was produced under config {found}, current config is {expected}; \
         rerun the earlier stages or pass --force"
    )]
    FingerprintMismatch {
        artifact: String,
        expected: String,
        found: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Wrap an error with stage context ("read: events, chapter 2").
    pub fn at(stage: impl Into<String>, source: impl Into<PipelineError>) -> Self {
        PipelineError::Stage {
            stage: stage.into(),
            source: Box::new(source.into()),
        }
    }

    /// True when the failure is a missing-checkpoint dependency.
    pub fn is_missing_checkpoint(&self) -> bool {
        match self {
            PipelineError::Checkpoint(CheckpointError::Missing(_)) => true,
            PipelineError::Stage { source, .. } => source.is_missing_checkpoint(),
            _ => false,
        }
    }
}

/// File layout of one run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunPaths { root: root.into() }
    }

    pub fn chapters(&self) -> PathBuf {
        self.root.join("chapters.json")
    }

    pub fn events(&self) -> PathBuf {
        self.root.join("events.json")
    }

    pub fn events_partial(&self) -> PathBuf {
        self.root.join("events.partial.json")
    }

    pub fn arcs(&self) -> PathBuf {
        self.root.join("arcs.json")
    }

    pub fn arcs_partial(&self) -> PathBuf {
        self.root.join("arcs.partial.json")
    }

    pub fn edges_raw(&self) -> PathBuf {
        self.root.join("edges_raw.json")
    }

    pub fn plot_graph(&self) -> PathBuf {
        self.root.join("plot_graph.json")
    }

    pub fn plot_graph_dot(&self) -> PathBuf {
        self.root.join("plot_graph.dot")
    }

    pub fn outline(&self) -> PathBuf {
        self.root.join("outline.json")
    }

    pub fn scenes_dir(&self) -> PathBuf {
        self.root.join("scenes")
    }

    pub fn scene(&self, index: usize) -> PathBuf {
        self.scenes_dir().join(format!("scene_{index:03}.json"))
    }

    pub fn screenplay_json(&self) -> PathBuf {
        self.root.join("screenplay.json")
    }

    pub fn screenplay_fountain(&self) -> PathBuf {
        self.root.join("screenplay.fountain")
    }

    pub fn trace_dir(&self) -> PathBuf {
        self.root.join("trace")
    }

    pub fn reader_trace(&self) -> PathBuf {
        self.trace_dir().join("reader_rounds.jsonl")
    }

    pub fn outline_trace(&self) -> PathBuf {
        self.trace_dir().join("outline_rounds.jsonl")
    }

    pub fn scene_trace(&self, index: usize) -> PathBuf {
        self.trace_dir().join(format!("scene_{index:03}_rounds.jsonl"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EventsDoc {
    pub events: Vec<PlotEvent>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ArcsDoc {
    pub arcs: Vec<CharacterArc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EdgesDoc {
    pub edges: Vec<CausalEdge>,
    pub passes: usize,
}

/// The pipeline: stages share a config, a fingerprint, a lazily built
/// backend, and a run directory.
pub struct Pipeline {
    cfg: PipelineConfig,
    fingerprint: String,
    paths: RunPaths,
    templates: TemplateSet,
    backend: Option<Box<dyn Backend>>,
    pub force: bool,
    pub resume: bool,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, out_dir: &Path) -> Result<Self, PipelineError> {
        let templates = match &cfg.template_dir {
            Some(dir) => TemplateSet::with_overrides(dir)?,
            None => TemplateSet::embedded(),
        };
        let fingerprint = fingerprint(&cfg);
        Ok(Pipeline {
            cfg,
            fingerprint,
            paths: RunPaths::new(out_dir),
            templates,
            backend: None,
            force: false,
            resume: false,
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn paths(&self) -> &RunPaths {
        &self.paths
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// The backend is built on first use so stages that never call it
    /// (ingest) work without credentials or a script.
    pub fn backend(&mut self) -> Result<&dyn Backend, PipelineError> {
        if self.backend.is_none() {
            self.backend = Some(build_backend(&self.cfg.backend)?);
        }
        Ok(self.backend.as_deref().expect("backend just built"))
    }

    fn save<T: Serialize>(&self, path: &Path, data: &T) -> Result<(), PipelineError> {
        checkpoint::save(path, &self.fingerprint, data)?;
        Ok(())
    }

    /// Load a checkpoint, honoring hand edits but refusing to mix
    /// fingerprints unless forced.
    pub fn load<T: DeserializeOwned>(&self, path: &Path, stage: &str) -> Result<T, PipelineError> {
        let doc = checkpoint::load::<T>(path, stage)?;
        if doc.fingerprint != self.fingerprint && !self.force {
            return Err(PipelineError::FingerprintMismatch {
                artifact: stage.to_string(),
                expected: self.fingerprint.clone(),
                found: doc.fingerprint,
            });
        }
        Ok(doc.data)
    }

    /// Split the novel into chapters and checkpoint them.
    pub fn stage_ingest(&mut self) -> Result<Vec<String>, PipelineError> {
        let novel_path = self.cfg.novel.clone().ok_or_else(|| {
            PipelineError::Config(ConfigError::new("novel", "no novel path configured"))
        })?;
        let novel = Novel::load(&novel_path).map_err(|e| PipelineError::at("ingest", e))?;
        let chapter_count = novel.chapters.len();
        self.save(&self.paths.chapters(), &novel)?;
        Ok(vec![format!(
            "ingest: {chapter_count} chapters from {}",
            novel_path.display()
        )])
    }

    /// Extract events and arcs over sliding windows, refine, checkpoint. On
    /// an unrecoverable backend error the partial extraction is written to
    /// `events.partial.json` / `arcs.partial.json` before the error returns.
    pub fn stage_read(&mut self) -> Result<Vec<String>, PipelineError> {
        let novel: Novel = self.load(&self.paths.chapters(), "chapters")?;
        let window_cfg = self.cfg.window.clone();
        let refine_cfg = self.cfg.refine.clone();
        let templates = self.templates.clone();
        let backend = self.backend()?;
        let reader = Reader::new(backend, &templates, window_cfg, refine_cfg);

        let mut progress = Extraction::default();
        let output = match reader.read_novel(&novel, &mut progress) {
            Ok(output) => output,
            Err(error) => {
                checkpoint::save(
                    &self.paths.events_partial(),
                    &self.fingerprint,
                    &EventsDoc {
                        events: progress.events,
                    },
                )?;
                checkpoint::save(
                    &self.paths.arcs_partial(),
                    &self.fingerprint,
                    &ArcsDoc {
                        arcs: progress.arcs,
                    },
                )?;
                return Err(PipelineError::at(
                    format!(
                        "read (partial checkpoint written to {})",
                        self.paths.events_partial().display()
                    ),
                    error,
                ));
            }
        };

        self.save(&self.paths.events(), &EventsDoc { events: output.events.clone() })?;
        self.save(&self.paths.arcs(), &ArcsDoc { arcs: output.arcs.clone() })?;
        write_trace(&self.paths.reader_trace(), &output.trace)?;
        Ok(vec![format!(
            "read: {} events, {} arcs, {} refinement rounds",
            output.events.len(),
            output.arcs.len(),
            output.trace.len()
        )])
    }

    /// Extract causal relations to stabilization, then build the DAG.
    pub fn stage_graph(&mut self) -> Result<Vec<String>, PipelineError> {
        let events: EventsDoc = self.load(&self.paths.events(), "events")?;
        let window_cfg = self.cfg.window.clone();
        let refine_cfg = self.cfg.refine.clone();
        let max_passes = self.cfg.max_relation_passes;
        let templates = self.templates.clone();
        let backend = self.backend()?;
        let reader = Reader::new(backend, &templates, window_cfg, refine_cfg);

        let relations = reader.extract_relations(&events.events, max_passes)?;
        self.save(
            &self.paths.edges_raw(),
            &EdgesDoc {
                edges: relations.edges.clone(),
                passes: relations.passes,
            },
        )?;

        let (graph, report) = build_plot_graph(events.events, relations.edges)?;
        self.save(&self.paths.plot_graph(), &graph)?;
        std::fs::write(self.paths.plot_graph_dot(), to_dot(&graph))?;

        let mut notes = vec![format!(
            "relations: {} edges in {} passes ({} unknown-id edges dropped)",
            graph.edges().len() + report.dropped_self_loops + report.dropped_duplicates
                + report.dropped_cycles,
            relations.passes,
            relations.dropped_unknown.len()
        )];
        notes.push(report.summary());
        Ok(notes)
    }

    /// Generate and refine the adaptation outline from the traversed graph.
    pub fn stage_outline(&mut self) -> Result<Vec<String>, PipelineError> {
        let graph: PlotGraph = self.load(&self.paths.plot_graph(), "plot_graph")?;
        let arcs: ArcsDoc = self.load(&self.paths.arcs(), "arcs")?;
        let mode = self.cfg.traversal;
        let refine_cfg = self.cfg.refine.clone();
        let scenes = self.cfg.scenes;
        let templates = self.templates.clone();
        let backend = self.backend()?;

        let (outline, trace) = generate_outline(
            &graph,
            &arcs.arcs,
            mode,
            backend,
            &templates,
            &refine_cfg,
            scenes,
        )?;
        self.save(&self.paths.outline(), &outline)?;
        write_trace(&self.paths.outline_trace(), &trace)?;
        Ok(vec![format!(
            "outline: {} scene plans under a {} structure ({mode} traversal)",
            outline.plans.len(),
            outline.structure.label
        )])
    }

    /// Generate every scene (resume reuses existing scene checkpoints),
    /// assemble the screenplay, and emit Fountain text.
    pub fn stage_write(&mut self) -> Result<Vec<String>, PipelineError> {
        let outline: Outline = self.load(&self.paths.outline(), "outline")?;
        let graph: PlotGraph = self.load(&self.paths.plot_graph(), "plot_graph")?;
        let novel: Novel = self.load(&self.paths.chapters(), "chapters")?;
        let window_cfg = self.cfg.window.clone();
        let refine_cfg = self.cfg.refine.clone();
        let traversal = self.cfg.traversal;
        let templates = self.templates.clone();
        let resume = self.resume;
        let paths = self.paths.clone();
        let run_fingerprint = self.fingerprint.clone();
        let backend = self.backend()?;
        let backend_name = backend.name().to_string();
        let mut scenes: Vec<Scene> = Vec::new();
        let mut prev_scene: Option<Scene> = None;
        for plan in &outline.plans {
            let path = paths.scene(plan.index);
            let scene = if resume && path.exists() {
                checkpoint::load::<Scene>(&path, "scene")?.data
            } else {
                let context = scene_context(
                    plan,
                    &graph,
                    &novel,
                    prev_scene.as_ref(),
                    window_cfg.context_token_budget,
                    window_cfg.chars_per_token,
                );
                let (scene, trace) =
                    generate_scene(plan, &context, backend, &templates, &refine_cfg)?;
                checkpoint::save(&path, &run_fingerprint, &scene)?;
                write_trace(&paths.scene_trace(plan.index), &trace)?;
                scene
            };
            prev_scene = Some(scene.clone());
            scenes.push(scene);
        }

        let flagged: Vec<usize> = scenes
            .iter()
            .filter(|s| s.goal_unmet)
            .map(|s| s.index)
            .collect();
        let screenplay = assemble_screenplay(
            &novel.title,
            &outline,
            scenes,
            traversal,
            GenerationMeta {
                backend: backend_name,
                fingerprint: self.fingerprint.clone(),
            },
        )?;
        self.save(&self.paths.screenplay_json(), &screenplay)?;
        std::fs::write(self.paths.screenplay_fountain(), emit_fountain(&screenplay)?)?;

        let mut notes = vec![format!(
            "write: {} scenes assembled into {}",
            screenplay.scenes.len(),
            self.paths.screenplay_fountain().display()
        )];
        if !flagged.is_empty() {
            notes.push(format!(
                "warning: scenes {flagged:?} ended refinement with goals unmet"
            ));
        }
        Ok(notes)
    }

    /// Run every stage in order; with `resume`, skip stages whose outputs
    /// all exist.
    pub fn run_all(&mut self) -> Result<Vec<String>, PipelineError> {
        type StageFn = fn(&mut Pipeline) -> Result<Vec<String>, PipelineError>;
        let mut notes = Vec::new();
        let stages: [(&str, StageFn, Vec<PathBuf>); 5] = [
            ("ingest", Pipeline::stage_ingest, vec![self.paths.chapters()]),
            (
                "read",
                Pipeline::stage_read,
                vec![self.paths.events(), self.paths.arcs()],
            ),
            (
                "graph",
                Pipeline::stage_graph,
                vec![self.paths.edges_raw(), self.paths.plot_graph()],
            ),
            ("outline", Pipeline::stage_outline, vec![self.paths.outline()]),
            (
                "write",
                Pipeline::stage_write,
                vec![self.paths.screenplay_json(), self.paths.screenplay_fountain()],
            ),
        ];
        for (name, stage, outputs) in stages {
            if self.resume && outputs.iter().all(|p| p.exists()) {
                notes.push(format!("{name}: skipped (checkpoints present)"));
                continue;
            }
            notes.extend(stage(self)?);
        }
        Ok(notes)
    }
}
