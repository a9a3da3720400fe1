//! Core engine for adapting full-length novels into screenplays.
//!
//! The pipeline mirrors how a screenwriter works: a *reader* pass extracts
//! plot events, character arcs, and a causality-weighted plot graph from the
//! novel, and a *rewriter* pass turns the traversed graph into an adaptation
//! outline and then a scene-by-scene screenplay. Every LLM-facing stage runs
//! through a hallucination-aware refinement loop, and an evaluation kit
//! scores pairwise comparisons between generated screenplays.
//!
//! Modules:
//! - [`corpus`]: chapter splitting, token estimation, sliding windows, excerpts
//! - [`plotgraph`]: the causal plot graph, greedy cycle breaking, traversals
//! - [`llmio`]: chat backends (live + scripted mock), structured-output parsing
//! - [`refine`]: the generic locate/retrieve/refine/merge refinement engine
//! - [`reader`]: window extraction, relation extraction, graph assembly
//! - [`rewriter`]: outline and scene generation, Fountain emission
//! - [`evalkit`]: questionnaires, win rates, Cohen's kappa, LLM judging
//! - [`pipeline`]: stage orchestration over a checkpoint directory

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod evalkit;
pub mod llmio;
pub mod pipeline;
pub mod plotgraph;
pub mod reader;
pub mod refine;
pub mod rewriter;

pub use config::{ConfigError, PipelineConfig};
pub use pipeline::{Pipeline, PipelineError};
