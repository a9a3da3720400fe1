//! `plotloom` — adapt a full-length novel into a screenplay through a
//! causality-weighted plot graph, stage by stage, over an editable
//! checkpoint directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use plotloom_core::config::{load_config, ConfigOverrides, PipelineConfig};
use plotloom_core::evalkit::{
    self, default_aspects, judge_with_llm, kappa_matrix, kappa_matrix_csv, read_responses_csv,
    render_markdown, unblind, win_rate_table_csv, win_rate_table_markdown, AnswerKey, EvalDoc,
    Questionnaire, ResponseSet,
};
use plotloom_core::llmio::{build_backend, TemplateSet};
use plotloom_core::pipeline::{Pipeline, PipelineError};

#[derive(Parser)]
#[command(
    name = "plotloom",
    version,
    about = "Adapt a novel into a screenplay via a causal plot graph",
    propagate_version = true
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Config file (TOML or JSON); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Backend kind: openai or mock.
    #[arg(long, global = true)]
    backend: Option<String>,

    /// OpenAI-compatible API root, e.g. https://api.openai.com/v1
    #[arg(long, global = true)]
    base_url: Option<String>,

    /// Model name for the live backend.
    #[arg(long, global = true)]
    model: Option<String>,

    /// Mock script file.
    #[arg(long, global = true)]
    script: Option<PathBuf>,

    /// Subsequent chapters included in each extraction window.
    #[arg(long, global = true)]
    window_lookahead: Option<usize>,

    /// Token budget for rendered windows and retrieved context.
    #[arg(long, global = true)]
    budget_tokens: Option<usize>,

    /// Plot-graph traversal for the outline: dft, bft, or chapter.
    #[arg(long, global = true)]
    traversal: Option<String>,

    /// Refinement round budget per loop.
    #[arg(long, global = true)]
    max_rounds: Option<usize>,

    /// Target scene count for outline planning.
    #[arg(long, global = true)]
    scenes: Option<usize>,

    /// Seed for excerpt selection and questionnaire assignment.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory for checkpoints and outputs.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,

    /// Skip stages whose checkpoints already exist.
    #[arg(long, global = true)]
    resume: bool,

    /// Proceed across config-fingerprint mismatches.
    #[arg(long, global = true)]
    force: bool,

    /// Concurrent backend calls for `eval judge`.
    #[arg(long, global = true, default_value_t = 1)]
    parallel: usize,

    /// Directory of prompt-template overrides.
    #[arg(long, global = true)]
    template_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Split the novel into chapters.
    Ingest {
        /// Novel text file, or a directory of NNN_title.txt chapters.
        novel: Option<PathBuf>,
    },
    /// Extract plot events and character arcs (with refinement).
    Read,
    /// Extract causal relations and build the acyclic plot graph.
    Graph,
    /// Generate the adaptation outline from the traversed graph.
    Outline,
    /// Generate scenes, assemble the screenplay, emit Fountain text.
    Write,
    /// Run every stage in order.
    Run {
        novel: Option<PathBuf>,
    },
    /// Pairwise evaluation: questionnaires, judging, scoring, agreement.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Build blinded questionnaires over excerpt pairs.
    Build {
        /// The source novel text.
        #[arg(long)]
        novel: PathBuf,
        /// First screenplay document.
        #[arg(long)]
        doc_a: PathBuf,
        /// Second screenplay document.
        #[arg(long)]
        doc_b: PathBuf,
        /// Number of questionnaires.
        #[arg(short, long, default_value_t = 15)]
        n: usize,
    },
    /// Answer every questionnaire with the configured backend as judge.
    Judge {
        /// Rater id recorded in the responses.
        #[arg(long, default_value = "llm-judge")]
        rater: String,
    },
    /// Aggregate responses into per-aspect win rates.
    Score {
        /// Report in presented A/B terms instead of unblinded sources.
        #[arg(long)]
        blind: bool,
    },
    /// Pairwise Cohen's kappa matrix across raters.
    Kappa,
}

enum AppError {
    Config(String),
    Stage(String),
}

impl From<plotloom_core::ConfigError> for AppError {
    fn from(e: plotloom_core::ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<PipelineError> for AppError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(inner) => AppError::Config(inner.to_string()),
            other => AppError::Stage(other.to_string()),
        }
    }
}

impl From<plotloom_core::evalkit::EvalError> for AppError {
    fn from(e: plotloom_core::evalkit::EvalError) -> Self {
        AppError::Stage(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Stage(format!("io: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(AppError::Stage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn resolve_config(common: &CommonArgs, novel: Option<&PathBuf>) -> Result<PipelineConfig, AppError> {
    let overrides = ConfigOverrides {
        novel: novel.cloned(),
        backend: common.backend.clone(),
        base_url: common.base_url.clone(),
        model: common.model.clone(),
        script: common.script.clone(),
        window_lookahead: common.window_lookahead,
        budget_tokens: common.budget_tokens,
        traversal: common.traversal.clone(),
        max_rounds: common.max_rounds,
        scenes: common.scenes,
        seed: common.seed,
        template_dir: common.template_dir.clone(),
    };
    Ok(load_config(common.config.as_deref(), &overrides)?)
}

fn pipeline(common: &CommonArgs, novel: Option<&PathBuf>) -> Result<Pipeline, AppError> {
    let cfg = resolve_config(common, novel)?;
    let mut pipeline = Pipeline::new(cfg, &common.out)?;
    pipeline.force = common.force;
    pipeline.resume = common.resume;
    Ok(pipeline)
}

fn report(notes: Vec<String>) {
    for note in notes {
        eprintln!("{note}");
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Ingest { ref novel } => {
            let mut p = pipeline(&cli.common, novel.as_ref())?;
            report(p.stage_ingest()?);
        }
        Command::Read => {
            let mut p = pipeline(&cli.common, None)?;
            report(p.stage_read()?);
        }
        Command::Graph => {
            let mut p = pipeline(&cli.common, None)?;
            report(p.stage_graph()?);
        }
        Command::Outline => {
            let mut p = pipeline(&cli.common, None)?;
            report(p.stage_outline()?);
        }
        Command::Write => {
            let mut p = pipeline(&cli.common, None)?;
            report(p.stage_write()?);
        }
        Command::Run { ref novel } => {
            let mut p = pipeline(&cli.common, novel.as_ref())?;
            report(p.run_all()?);
            eprintln!("run complete: {}", cli.common.out.display());
        }
        Command::Eval { ref command } => run_eval(&cli.common, command)?,
    }
    Ok(())
}

fn eval_paths(out: &std::path::Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        out.join("questionnaires.json"),
        out.join("answer_key.json"),
        out.join("responses.csv"),
    )
}

fn load_questionnaires(path: &std::path::Path) -> Result<Vec<Questionnaire>, AppError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| AppError::Stage(format!("missing checkpoint: questionnaires ({e})")))?;
    serde_json::from_str(&raw).map_err(|e| AppError::Stage(format!("questionnaires: {e}")))
}

fn load_key(path: &std::path::Path) -> Result<AnswerKey, AppError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| AppError::Stage(format!("missing checkpoint: answer key ({e})")))?;
    serde_json::from_str(&raw).map_err(|e| AppError::Stage(format!("answer key: {e}")))
}

fn run_eval(common: &CommonArgs, command: &EvalCommand) -> Result<(), AppError> {
    let (questionnaires_path, key_path, responses_path) = eval_paths(&common.out);
    match command {
        EvalCommand::Build {
            novel,
            doc_a,
            doc_b,
            n,
        } => {
            let cfg = resolve_config_lenient(common)?;
            let novel_text = std::fs::read_to_string(novel)?;
            let a_text = std::fs::read_to_string(doc_a)?;
            let b_text = std::fs::read_to_string(doc_b)?;
            let label = |p: &PathBuf| {
                p.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string())
            };
            let build = evalkit::build_questionnaires(
                &novel_text,
                &EvalDoc {
                    label: &label(doc_a),
                    text: &a_text,
                },
                &EvalDoc {
                    label: &label(doc_b),
                    text: &b_text,
                },
                *n,
                cfg.seed,
                &default_aspects(),
            )?;
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(
                &questionnaires_path,
                serde_json::to_string_pretty(&build.questionnaires)
                    .map_err(|e| AppError::Stage(e.to_string()))?,
            )?;
            std::fs::write(
                &key_path,
                serde_json::to_string_pretty(&build.key)
                    .map_err(|e| AppError::Stage(e.to_string()))?,
            )?;
            for q in &build.questionnaires {
                std::fs::write(
                    common.out.join(format!("questionnaire_{}.md", q.id)),
                    render_markdown(q),
                )?;
            }
            if build.short_source {
                eprintln!(
                    "warning: a source was too short; built {} questionnaires",
                    build.questionnaires.len()
                );
            }
            eprintln!(
                "eval build: {} questionnaires in {}",
                build.questionnaires.len(),
                common.out.display()
            );
        }
        EvalCommand::Judge { rater } => {
            let cfg = resolve_config(common, None)?;
            let questionnaires = load_questionnaires(&questionnaires_path)?;
            let backend = build_backend(&cfg.backend).map_err(|e| AppError::Stage(e.to_string()))?;
            let templates = match &cfg.template_dir {
                Some(dir) => {
                    TemplateSet::with_overrides(dir).map_err(|e| AppError::Stage(e.to_string()))?
                }
                None => TemplateSet::embedded(),
            };
            let parallel = common.parallel.max(1);
            let mut responses: Vec<Option<ResponseSet>> = vec![None; questionnaires.len()];
            for chunk_start in (0..questionnaires.len()).step_by(parallel) {
                let chunk_end = (chunk_start + parallel).min(questionnaires.len());
                let results: Vec<(usize, Result<ResponseSet, evalkit::EvalError>)> =
                    std::thread::scope(|scope| {
                        let handles: Vec<_> = (chunk_start..chunk_end)
                            .map(|i| {
                                let q = &questionnaires[i];
                                let backend = &*backend;
                                let templates = &templates;
                                let rater = rater.as_str();
                                scope.spawn(move || (i, judge_with_llm(q, backend, templates, rater)))
                            })
                            .collect();
                        handles.into_iter().map(|h| h.join().unwrap()).collect()
                    });
                for (i, result) in results {
                    responses[i] = Some(result?);
                }
            }
            let responses: Vec<ResponseSet> = responses.into_iter().flatten().collect();
            // Merge with any existing responses from other raters.
            let mut all = if responses_path.exists() {
                read_responses_csv(&responses_path)?
            } else {
                Vec::new()
            };
            all.retain(|r| r.rater_id != *rater);
            all.extend(responses);
            evalkit::write_responses_csv(&responses_path, &all)?;
            eprintln!(
                "eval judge: {} questionnaires answered by `{rater}`",
                questionnaires.len()
            );
        }
        EvalCommand::Score { blind } => {
            let questionnaires = load_questionnaires(&questionnaires_path)?;
            let key = load_key(&key_path)?;
            let responses = read_responses_csv(&responses_path)?;
            let (label_a, label_b, aggregate) = if *blind {
                let agg = evalkit::aggregate(&responses, &questionnaires, Some(&key))?;
                ("A".to_string(), "B".to_string(), agg)
            } else {
                let mut labels: Vec<String> = key
                    .entries
                    .iter()
                    .flat_map(|e| [e.item_a_source.clone(), e.item_b_source.clone()])
                    .collect();
                labels.sort();
                labels.dedup();
                if labels.len() != 2 {
                    return Err(AppError::Stage(format!(
                        "expected two source labels in the key, found {labels:?}"
                    )));
                }
                let agg = unblind(&responses, &questionnaires, &key, &labels[0], &labels[1])?;
                (labels[0].clone(), labels[1].clone(), agg)
            };
            if !aggregate.excluded.is_empty() {
                eprintln!(
                    "excluded {} response sets for failed control questions",
                    aggregate.excluded.len()
                );
            }
            let markdown = win_rate_table_markdown(&label_a, &label_b, &aggregate.counts)?;
            let csv = win_rate_table_csv(&label_a, &label_b, &aggregate.counts)?;
            std::fs::write(common.out.join("win_rates.md"), &markdown)?;
            std::fs::write(common.out.join("win_rates.csv"), &csv)?;
            println!("{markdown}");
        }
        EvalCommand::Kappa => {
            let responses = read_responses_csv(&responses_path)?;
            let (raters, matrix) = kappa_matrix(&responses);
            let csv = kappa_matrix_csv(&raters, &matrix);
            std::fs::write(common.out.join("kappa.csv"), &csv)?;
            println!("{csv}");
        }
    }
    Ok(())
}

/// `eval build` needs only the seed; don't demand a backend script.
fn resolve_config_lenient(common: &CommonArgs) -> Result<PipelineConfig, AppError> {
    let mut common = common.clone();
    if common.backend.is_none() && common.script.is_none() {
        common.script = Some(PathBuf::from("/dev/null"));
    }
    resolve_config(&common, None)
}
