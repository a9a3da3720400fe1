//! Pairwise-comparison evaluation: blinded questionnaires over excerpt
//! pairs, per-aspect win rates, inter-rater agreement, and an optional LLM
//! judge.
//!
//! A questionnaire shows a novel passage and two screenplay excerpts labeled
//! A and B (assignment drawn from the build seed and recorded only in a
//! sealed answer key), then asks one or two questions per evaluation aspect
//! plus a mechanically checkable control question. Win rates use exact
//! rational arithmetic.

use std::collections::BTreeMap;
use std::path::Path;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{select_excerpts, Excerpt};
use crate::llmio::{Backend, ChatRequest, LlmError, TemplateSet};

/// The seven evaluation aspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AspectKey {
    Interesting,
    Coherent,
    Humanlike,
    DictGram,
    Transition,
    Format,
    Consistency,
}

impl AspectKey {
    pub const ALL: [AspectKey; 7] = [
        AspectKey::Interesting,
        AspectKey::Coherent,
        AspectKey::Humanlike,
        AspectKey::DictGram,
        AspectKey::Transition,
        AspectKey::Format,
        AspectKey::Consistency,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AspectKey::Interesting => "Interesting",
            AspectKey::Coherent => "Coherent",
            AspectKey::Humanlike => "Human-like",
            AspectKey::DictGram => "Diction & Grammar",
            AspectKey::Transition => "Transition",
            AspectKey::Format => "Format",
            AspectKey::Consistency => "Consistency",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            AspectKey::Interesting => "interesting",
            AspectKey::Coherent => "coherent",
            AspectKey::Humanlike => "humanlike",
            AspectKey::DictGram => "dict_gram",
            AspectKey::Transition => "transition",
            AspectKey::Format => "format",
            AspectKey::Consistency => "consistency",
        }
    }

    /// Canonical question phrasings; the first `question_count` are used.
    fn question_texts(self) -> [&'static str; 2] {
        match self {
            AspectKey::Interesting => [
                "Which excerpt better captures your interest as a reader?",
                "Which excerpt would make you want to keep reading?",
            ],
            AspectKey::Coherent => [
                "In which excerpt does the plot develop more smoothly, without abrupt scene changes?",
                "Which excerpt is more coherent overall?",
            ],
            AspectKey::Humanlike => [
                "Which excerpt reads more like natural human writing?",
                "Which excerpt's language feels less machine-generated?",
            ],
            AspectKey::DictGram => [
                "Which excerpt shows more accurate word choice and grammar?",
                "Which excerpt is better written at the sentence level?",
            ],
            AspectKey::Transition => [
                "In which excerpt do the story's rhythm and the characters' emotional shifts flow more naturally?",
                "Which excerpt handles transitions between moments more smoothly?",
            ],
            AspectKey::Format => [
                "Which excerpt adheres better to standard screenplay formatting rules?",
                "Which excerpt looks more like a professional screenplay?",
            ],
            AspectKey::Consistency => [
                "Which excerpt is more consistent with the plot of the novel passage above?",
                "Which excerpt better preserves the original novel's plot?",
            ],
        }
    }
}

/// One aspect with its per-questionnaire question count (1 or 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aspect {
    pub key: AspectKey,
    pub question_count: u8,
}

/// All seven aspects with one question each.
pub fn default_aspects() -> Vec<Aspect> {
    AspectKey::ALL
        .into_iter()
        .map(|key| Aspect {
            key,
            question_count: 1,
        })
        .collect()
}

/// The four possible answers to every question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    A,
    B,
    #[serde(rename = "BOTH")]
    Both,
    #[serde(rename = "NEITHER")]
    Neither,
}

impl Answer {
    pub fn parse(raw: &str) -> Option<Answer> {
        match raw.trim().to_ascii_uppercase().as_str() {
            "A" => Some(Answer::A),
            "B" => Some(Answer::B),
            "BOTH" => Some(Answer::Both),
            "NEITHER" => Some(Answer::Neither),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::A => "A",
            Answer::B => "B",
            Answer::Both => "BOTH",
            Answer::Neither => "NEITHER",
        }
    }
}

/// One question on a questionnaire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    /// None for the control question.
    pub aspect: Option<AspectKey>,
    pub text: String,
    pub control: bool,
}

/// A blinded questionnaire. Source labels live only in the answer key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Questionnaire {
    pub id: String,
    pub novel_excerpt: Excerpt,
    pub item_a: Excerpt,
    pub item_b: Excerpt,
    pub questions: Vec<Question>,
    pub seed: u64,
}

/// Sealed per-questionnaire key: which source sits behind each slot, and the
/// computed control answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerKeyEntry {
    pub questionnaire_id: String,
    pub item_a_source: String,
    pub item_b_source: String,
    pub control_expected: Answer,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub entries: Vec<AnswerKeyEntry>,
}

impl AnswerKey {
    pub fn entry(&self, questionnaire_id: &str) -> Option<&AnswerKeyEntry> {
        self.entries
            .iter()
            .find(|e| e.questionnaire_id == questionnaire_id)
    }
}

/// One rater's answers to one questionnaire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub questionnaire_id: String,
    pub rater_id: String,
    pub answers: Vec<(String, Answer)>,
}

/// Per-aspect answer tallies. `n_raters` counts the response sets that went
/// into the tally, so `n_a + n_b + n_both + n_neither = n_raters × q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectCounts {
    pub aspect: AspectKey,
    pub n_a: u64,
    pub n_b: u64,
    pub n_both: u64,
    pub n_neither: u64,
    pub n_raters: u64,
    pub question_count: u64,
}

/// Which side of the pair a win rate is computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    A,
    B,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(
        "invalid counts for {aspect:?}: {got} answers but n_raters × q = {expected}"
    )]
    InvalidCounts {
        aspect: AspectKey,
        expected: u64,
        got: u64,
    },
    #[error("answer vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot compute agreement over zero answers")]
    EmptyAnswers,
    #[error("aspect config error: {0}")]
    InvalidAspectConfig(String),
    #[error("document `{0}` is empty")]
    EmptyDocument(String),
    #[error("unknown questionnaire `{0}` in responses")]
    UnknownQuestionnaire(String),
    #[error("rater `{rater}` on `{questionnaire}`: {detail}")]
    IncompleteResponse {
        rater: String,
        questionnaire: String,
        detail: String,
    },
    #[error("judge output: {0}")]
    Judge(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A source document entering a pairwise comparison.
#[derive(Debug, Clone)]
pub struct EvalDoc<'a> {
    pub label: &'a str,
    pub text: &'a str,
}

/// Everything `eval build` produces.
#[derive(Debug, Clone)]
pub struct QuestionnaireBuild {
    pub questionnaires: Vec<Questionnaire>,
    pub key: AnswerKey,
    /// Set when any source was too short to yield `n` excerpts.
    pub short_source: bool,
}

const EXCERPT_TARGET_TOKENS: usize = 1000;

fn derive_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt)
        .rotate_left(17)
}

fn blinded(excerpt: &Excerpt, slot: &str) -> Excerpt {
    Excerpt {
        source_id: slot.to_string(),
        ..excerpt.clone()
    }
}

/// Sentences of `text` long enough to anchor a control question.
fn control_candidates(text: &str) -> Vec<String> {
    text.split_terminator(['.', '!', '?'])
        .map(|s| s.trim())
        .filter(|s| s.len() >= 40 && s.len() <= 200)
        .map(|s| s.to_string())
        .collect()
}

/// Build `n` blinded questionnaires comparing `doc1` and `doc2` against the
/// novel. Excerpt choice and A/B assignment are pure functions of `seed`;
/// the assignment and the computed control answer go into the sealed key.
pub fn build_questionnaires(
    novel: &str,
    doc1: &EvalDoc<'_>,
    doc2: &EvalDoc<'_>,
    n: usize,
    seed: u64,
    aspects: &[Aspect],
) -> Result<QuestionnaireBuild, EvalError> {
    if novel.trim().is_empty() {
        return Err(EvalError::EmptyDocument("novel".to_string()));
    }
    for doc in [doc1, doc2] {
        if doc.text.trim().is_empty() {
            return Err(EvalError::EmptyDocument(doc.label.to_string()));
        }
    }
    for aspect in aspects {
        if !(1..=2).contains(&aspect.question_count) {
            return Err(EvalError::InvalidAspectConfig(format!(
                "{:?} has question_count {}, expected 1 or 2",
                aspect.key, aspect.question_count
            )));
        }
    }

    let novel_sel = select_excerpts("novel", novel, n, derive_seed(seed, 1), EXCERPT_TARGET_TOKENS);
    let doc1_sel = select_excerpts(doc1.label, doc1.text, n, derive_seed(seed, 2), EXCERPT_TARGET_TOKENS);
    let doc2_sel = select_excerpts(doc2.label, doc2.text, n, derive_seed(seed, 3), EXCERPT_TARGET_TOKENS);
    let short_source = novel_sel.doc_too_short || doc1_sel.doc_too_short || doc2_sel.doc_too_short;
    let count = n
        .min(novel_sel.excerpts.len())
        .min(doc1_sel.excerpts.len())
        .min(doc2_sel.excerpts.len());

    let mut questionnaires = Vec::with_capacity(count);
    let mut key = AnswerKey::default();
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 100 + i as u64));
        let doc1_is_a: bool = rng.gen();
        let (a_excerpt, a_label, b_excerpt, b_label) = if doc1_is_a {
            (&doc1_sel.excerpts[i], doc1.label, &doc2_sel.excerpts[i], doc2.label)
        } else {
            (&doc2_sel.excerpts[i], doc2.label, &doc1_sel.excerpts[i], doc1.label)
        };
        let novel_excerpt = blinded(&novel_sel.excerpts[i], "novel");
        let item_a = blinded(a_excerpt, "A");
        let item_b = blinded(b_excerpt, "B");

        let mut questions = Vec::new();
        for aspect in aspects {
            let texts = aspect.key.question_texts();
            for (k, text) in texts.iter().take(aspect.question_count as usize).enumerate() {
                questions.push(Question {
                    id: format!("q_{}_{}", aspect.key.slug(), k + 1),
                    aspect: Some(aspect.key),
                    text: text.to_string(),
                    control: false,
                });
            }
        }

        // Control question: does a seeded sentence from the novel passage
        // appear verbatim in A, B, both, or neither? The expected answer is
        // computed by substring search, so a careless rater is detectable.
        let candidates = control_candidates(&novel_excerpt.text);
        let sentence = candidates
            .choose(&mut rng)
            .cloned()
            .unwrap_or_else(|| novel_excerpt.text.chars().take(60).collect());
        let in_a = item_a.text.contains(&sentence);
        let in_b = item_b.text.contains(&sentence);
        let control_expected = match (in_a, in_b) {
            (true, true) => Answer::Both,
            (true, false) => Answer::A,
            (false, true) => Answer::B,
            (false, false) => Answer::Neither,
        };
        questions.push(Question {
            id: "q_control".to_string(),
            aspect: None,
            text: format!(
                "Control: which excerpt quotes this sentence from the novel passage verbatim? \"{sentence}\""
            ),
            control: true,
        });

        let id = format!("q{i:03}");
        key.entries.push(AnswerKeyEntry {
            questionnaire_id: id.clone(),
            item_a_source: a_label.to_string(),
            item_b_source: b_label.to_string(),
            control_expected,
        });
        questionnaires.push(Questionnaire {
            id,
            novel_excerpt,
            item_a,
            item_b,
            questions,
            seed,
        });
    }

    Ok(QuestionnaireBuild {
        questionnaires,
        key,
        short_source,
    })
}

/// Render a questionnaire as Markdown for human raters.
pub fn render_markdown(q: &Questionnaire) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Questionnaire {}\n\n", q.id));
    out.push_str("## Novel passage\n\n");
    out.push_str(&q.novel_excerpt.text);
    out.push_str("\n\n## Excerpt A\n\n");
    out.push_str(&q.item_a.text);
    out.push_str("\n\n## Excerpt B\n\n");
    out.push_str(&q.item_b.text);
    out.push_str("\n\n## Questions\n\n");
    out.push_str("Answer each question with exactly one of: A, B, BOTH, NEITHER.\n\n");
    for question in &q.questions {
        out.push_str(&format!("- `{}`: {}\n", question.id, question.text));
    }
    out
}

/// Exact win rate for one side: `(n_side + n_both) / (n_raters × q)`.
pub fn win_rate(counts: &AspectCounts, winner: Winner) -> Result<Ratio<u64>, EvalError> {
    let expected = counts.n_raters * counts.question_count;
    let got = counts.n_a + counts.n_b + counts.n_both + counts.n_neither;
    if got != expected || expected == 0 {
        return Err(EvalError::InvalidCounts {
            aspect: counts.aspect,
            expected,
            got,
        });
    }
    let numerator = match winner {
        Winner::A => counts.n_a + counts.n_both,
        Winner::B => counts.n_b + counts.n_both,
    };
    Ok(Ratio::new(numerator, expected))
}

/// Unweighted mean of per-aspect win rates (the "Overall" column).
pub fn overall_win_rate(rates: &[Ratio<u64>]) -> Option<Ratio<u64>> {
    if rates.is_empty() {
        return None;
    }
    let sum: Ratio<u64> = rates.iter().copied().sum();
    Some(sum / Ratio::from_integer(rates.len() as u64))
}

/// Cohen's kappa over two equal-length categorical answer vectors.
///
/// `κ = (p_o − p_e) / (1 − p_e)` with expected agreement from the marginal
/// products. Perfect chance agreement (`p_e = 1`) forces `p_o = 1`, so that
/// degenerate case returns 1.0 explicitly.
pub fn cohens_kappa(r1: &[Answer], r2: &[Answer]) -> Result<f64, EvalError> {
    if r1.len() != r2.len() {
        return Err(EvalError::LengthMismatch {
            left: r1.len(),
            right: r2.len(),
        });
    }
    if r1.is_empty() {
        return Err(EvalError::EmptyAnswers);
    }
    let n = r1.len() as f64;
    let categories = [Answer::A, Answer::B, Answer::Both, Answer::Neither];
    let observed = r1
        .iter()
        .zip(r2)
        .filter(|(a, b)| a == b)
        .count() as f64
        / n;
    let expected: f64 = categories
        .iter()
        .map(|c| {
            let p1 = r1.iter().filter(|a| *a == c).count() as f64 / n;
            let p2 = r2.iter().filter(|a| *a == c).count() as f64 / n;
            p1 * p2
        })
        .sum();
    if (1.0 - expected).abs() < f64::EPSILON {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

#[derive(Debug, Deserialize)]
struct JudgeAnswer {
    question_id: String,
    answer: String,
}

#[derive(Debug, Deserialize)]
struct JudgeSheet {
    answers: Vec<JudgeAnswer>,
}

fn try_parse_judge(raw: &str, q: &Questionnaire) -> Result<Vec<(String, Answer)>, String> {
    let sheet: crate::llmio::Parsed<JudgeSheet> =
        crate::llmio::parse_structured(raw, None).map_err(|e| e.to_string())?;
    let mut by_id: BTreeMap<&str, Answer> = BTreeMap::new();
    for entry in &sheet.value.answers {
        let answer = Answer::parse(&entry.answer)
            .ok_or_else(|| format!("answer `{}` is not one of A, B, BOTH, NEITHER", entry.answer))?;
        by_id.insert(entry.question_id.as_str(), answer);
    }
    let mut answers = Vec::with_capacity(q.questions.len());
    for question in &q.questions {
        let answer = by_id
            .get(question.id.as_str())
            .ok_or_else(|| format!("question `{}` is unanswered", question.id))?;
        answers.push((question.id.clone(), *answer));
    }
    Ok(answers)
}

/// Submit one questionnaire to the backend as judge. The judge sees only the
/// blinded rendering, never the answer key. One repair re-prompt is allowed;
/// a second malformed sheet is fatal.
pub fn judge_with_llm(
    q: &Questionnaire,
    backend: &dyn Backend,
    templates: &TemplateSet,
    rater_id: &str,
) -> Result<ResponseSet, EvalError> {
    let rendered = render_markdown(q);
    let prompt = templates.render("judge", &[("questionnaire", rendered.as_str())])?;
    let system = templates.get("system")?;
    let first = backend.complete(&ChatRequest::new("judge", system, &prompt))?;
    let answers = match try_parse_judge(&first.text, q) {
        Ok(answers) => answers,
        Err(error) => {
            let repair_prompt = templates.render(
                "repair",
                &[("error", error.as_str()), ("raw", first.text.as_str())],
            )?;
            let second = backend.complete(&ChatRequest::new("judge", system, &repair_prompt))?;
            try_parse_judge(&second.text, q)
                .map_err(|e| EvalError::Llm(LlmError::MalformedOutput(e)))?
        }
    };
    Ok(ResponseSet {
        questionnaire_id: q.id.clone(),
        rater_id: rater_id.to_string(),
        answers,
    })
}

/// Aggregated tallies plus bookkeeping about exclusions.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub counts: Vec<AspectCounts>,
    /// Response sets excluded for failing the control question.
    pub excluded: Vec<(String, String)>,
    pub included: u64,
}

/// Tally responses per aspect, in presented A/B terms.
///
/// With an answer key, response sets whose control answer mismatches the
/// computed expectation are excluded, and answers can instead be credited to
/// source documents via [`unblind`].
pub fn aggregate(
    responses: &[ResponseSet],
    questionnaires: &[Questionnaire],
    key: Option<&AnswerKey>,
) -> Result<Aggregate, EvalError> {
    let by_id: BTreeMap<&str, &Questionnaire> = questionnaires
        .iter()
        .map(|q| (q.id.as_str(), q))
        .collect();

    // Derive per-aspect question counts from the first questionnaire.
    let mut question_counts: BTreeMap<AspectKey, u64> = BTreeMap::new();
    if let Some(first) = questionnaires.first() {
        for question in &first.questions {
            if let Some(aspect) = question.aspect {
                *question_counts.entry(aspect).or_insert(0) += 1;
            }
        }
    }

    let mut tallies: BTreeMap<AspectKey, (u64, u64, u64, u64)> = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut included = 0u64;

    for response in responses {
        let questionnaire = by_id
            .get(response.questionnaire_id.as_str())
            .ok_or_else(|| EvalError::UnknownQuestionnaire(response.questionnaire_id.clone()))?;
        let answer_of = |id: &str| response.answers.iter().find(|(q, _)| q == id).map(|(_, a)| *a);

        if let Some(key) = key {
            let entry = key.entry(&response.questionnaire_id).ok_or_else(|| {
                EvalError::UnknownQuestionnaire(response.questionnaire_id.clone())
            })?;
            let control = questionnaire.questions.iter().find(|q| q.control);
            if let Some(control) = control {
                match answer_of(&control.id) {
                    Some(answer) if answer == entry.control_expected => {}
                    _ => {
                        excluded
                            .push((response.questionnaire_id.clone(), response.rater_id.clone()));
                        continue;
                    }
                }
            }
        }

        for question in &questionnaire.questions {
            let Some(aspect) = question.aspect else {
                continue;
            };
            let answer = answer_of(&question.id).ok_or_else(|| EvalError::IncompleteResponse {
                rater: response.rater_id.clone(),
                questionnaire: response.questionnaire_id.clone(),
                detail: format!("question `{}` unanswered", question.id),
            })?;
            let slot = tallies.entry(aspect).or_insert((0, 0, 0, 0));
            match answer {
                Answer::A => slot.0 += 1,
                Answer::B => slot.1 += 1,
                Answer::Both => slot.2 += 1,
                Answer::Neither => slot.3 += 1,
            }
        }
        included += 1;
    }

    let counts = question_counts
        .into_iter()
        .map(|(aspect, question_count)| {
            let (n_a, n_b, n_both, n_neither) =
                tallies.get(&aspect).copied().unwrap_or((0, 0, 0, 0));
            AspectCounts {
                aspect,
                n_a,
                n_b,
                n_both,
                n_neither,
                n_raters: included,
                question_count,
            }
        })
        .collect();

    Ok(Aggregate {
        counts,
        excluded,
        included,
    })
}

/// Re-credit presented-slot answers to source documents using the key:
/// the returned counts put `label_1` in the A slot and `label_2` in B.
pub fn unblind(
    responses: &[ResponseSet],
    questionnaires: &[Questionnaire],
    key: &AnswerKey,
    label_1: &str,
    label_2: &str,
) -> Result<Aggregate, EvalError> {
    let mut remapped = Vec::with_capacity(responses.len());
    for response in responses {
        let entry = key
            .entry(&response.questionnaire_id)
            .ok_or_else(|| EvalError::UnknownQuestionnaire(response.questionnaire_id.clone()))?;
        let mut mapped = response.clone();
        for (_, answer) in mapped.answers.iter_mut() {
            *answer = match *answer {
                Answer::A if entry.item_a_source == label_1 => Answer::A,
                Answer::A => Answer::B,
                Answer::B if entry.item_b_source == label_2 => Answer::B,
                Answer::B => Answer::A,
                keep => keep,
            };
        }
        remapped.push(mapped);
    }
    aggregate(&remapped, questionnaires, Some(key))
}

/// Pairwise kappa matrix across raters; `None` where two raters share no
/// answered questions.
pub fn kappa_matrix(responses: &[ResponseSet]) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let mut raters: Vec<String> = responses.iter().map(|r| r.rater_id.clone()).collect();
    raters.sort();
    raters.dedup();

    let answers_of = |rater: &str| -> BTreeMap<(String, String), Answer> {
        responses
            .iter()
            .filter(|r| r.rater_id == rater)
            .flat_map(|r| {
                r.answers
                    .iter()
                    .map(|(q, a)| ((r.questionnaire_id.clone(), q.clone()), *a))
            })
            .collect()
    };

    let maps: Vec<BTreeMap<(String, String), Answer>> =
        raters.iter().map(|r| answers_of(r)).collect();
    let mut matrix = vec![vec![None; raters.len()]; raters.len()];
    for i in 0..raters.len() {
        for j in 0..raters.len() {
            let mut left = Vec::new();
            let mut right = Vec::new();
            for (key, answer) in &maps[i] {
                if let Some(other) = maps[j].get(key) {
                    left.push(*answer);
                    right.push(*other);
                }
            }
            matrix[i][j] = cohens_kappa(&left, &right).ok();
        }
    }
    (raters, matrix)
}

/// Write responses as CSV rows `(questionnaire_id, rater_id, question_id,
/// answer)`.
pub fn write_responses_csv(path: &Path, responses: &[ResponseSet]) -> Result<(), EvalError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| EvalError::Csv(e.to_string()))?;
    writer
        .write_record(["questionnaire_id", "rater_id", "question_id", "answer"])
        .map_err(|e| EvalError::Csv(e.to_string()))?;
    for response in responses {
        for (question_id, answer) in &response.answers {
            writer
                .write_record([
                    response.questionnaire_id.as_str(),
                    response.rater_id.as_str(),
                    question_id.as_str(),
                    answer.as_str(),
                ])
                .map_err(|e| EvalError::Csv(e.to_string()))?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_responses_csv(path: &Path) -> Result<Vec<ResponseSet>, EvalError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| EvalError::Csv(e.to_string()))?;
    let mut sets: Vec<ResponseSet> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| EvalError::Csv(e.to_string()))?;
        let (Some(qid), Some(rater), Some(question), Some(answer)) =
            (row.get(0), row.get(1), row.get(2), row.get(3))
        else {
            return Err(EvalError::Csv(format!("short row: {row:?}")));
        };
        let answer = Answer::parse(answer)
            .ok_or_else(|| EvalError::Csv(format!("bad answer `{answer}`")))?;
        match sets
            .iter_mut()
            .find(|s| s.questionnaire_id == qid && s.rater_id == rater)
        {
            Some(set) => set.answers.push((question.to_string(), answer)),
            None => sets.push(ResponseSet {
                questionnaire_id: qid.to_string(),
                rater_id: rater.to_string(),
                answers: vec![(question.to_string(), answer)],
            }),
        }
    }
    Ok(sets)
}

/// Win-rate table shaped like the evaluation report: one row per side, one
/// column per aspect plus Overall.
pub fn win_rate_table_markdown(
    label_a: &str,
    label_b: &str,
    counts: &[AspectCounts],
) -> Result<String, EvalError> {
    let mut header = String::from("| Side |");
    let mut divider = String::from("|---|");
    for c in counts {
        header.push_str(&format!(" {} |", c.aspect.label()));
        divider.push_str("---|");
    }
    header.push_str(" Overall |");
    divider.push_str("---|");

    let mut out = format!("{header}\n{divider}\n");
    for (label, winner) in [(label_a, Winner::A), (label_b, Winner::B)] {
        let mut rates = Vec::new();
        let mut row = format!("| {label} |");
        for c in counts {
            let rate = win_rate(c, winner)?;
            row.push_str(&format!(" {:.1} |", ratio_to_percent(rate)));
            rates.push(rate);
        }
        let overall = overall_win_rate(&rates).unwrap_or_else(|| Ratio::from_integer(0));
        row.push_str(&format!(" {:.1} |", ratio_to_percent(overall)));
        out.push_str(&row);
        out.push('\n');
    }
    Ok(out)
}

pub fn win_rate_table_csv(
    label_a: &str,
    label_b: &str,
    counts: &[AspectCounts],
) -> Result<String, EvalError> {
    let mut out = String::from("side");
    for c in counts {
        out.push_str(&format!(",{}", c.aspect.label()));
    }
    out.push_str(",Overall\n");
    for (label, winner) in [(label_a, Winner::A), (label_b, Winner::B)] {
        let mut rates = Vec::new();
        out.push_str(label);
        for c in counts {
            let rate = win_rate(c, winner)?;
            out.push_str(&format!(",{:.4}", ratio_to_f64(rate)));
            rates.push(rate);
        }
        let overall = overall_win_rate(&rates).unwrap_or_else(|| Ratio::from_integer(0));
        out.push_str(&format!(",{:.4}\n", ratio_to_f64(overall)));
    }
    Ok(out)
}

pub fn kappa_matrix_csv(raters: &[String], matrix: &[Vec<Option<f64>>]) -> String {
    let mut out = String::from("rater");
    for rater in raters {
        out.push_str(&format!(",{rater}"));
    }
    out.push('\n');
    for (i, rater) in raters.iter().enumerate() {
        out.push_str(rater);
        for cell in &matrix[i] {
            match cell {
                Some(value) => out.push_str(&format!(",{value:.4}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn ratio_to_f64(ratio: Ratio<u64>) -> f64 {
    *ratio.numer() as f64 / *ratio.denom() as f64
}

fn ratio_to_percent(ratio: Ratio<u64>) -> f64 {
    ratio_to_f64(ratio) * 100.0
}
