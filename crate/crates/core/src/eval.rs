//! Interpretability metrics for generated feedback.
//!
//! Metrics either come from an external evaluator through `metrics.csv`
//! ([`ingest_metrics`]) or from the simplified judges in this module, which
//! drive a chat provider with small yes/no and extraction prompts.

use std::collections::BTreeSet;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{cosine, Embedder, Gateway, TASK_HEADER};
use crate::prompt::PromptStrategy;

pub const METRICS_HEADER: [&str; 7] = [
    "image_id",
    "object_id",
    "strategy",
    "context_precision",
    "faithfulness",
    "answer_relevancy",
    "source",
];

/// Label attached to judged metrics in run metadata.
pub const JUDGE_LABEL: &str = "simplified";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionNote {
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
}

/// Manual assessment of one labeled object on the four criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub object_id: u32,
    pub openness: CriterionNote,
    pub boundary: CriterionNote,
    pub alignment: CriterionNote,
    pub overlay: CriterionNote,
    pub reference_answer: String,
}

impl GroundTruth {
    /// Plain-text rendering used inside judge prompts.
    pub fn as_text(&self) -> String {
        let line = |name: &str, c: &CriterionNote| {
            let v = match c.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
            };
            if c.note.is_empty() {
                format!("{name}: {v}")
            } else {
                format!("{name}: {v} ({})", c.note)
            }
        };
        [
            line("openness", &self.openness),
            line("boundary", &self.boundary),
            line("alignment", &self.alignment),
            line("overlay", &self.overlay),
            self.reference_answer.clone(),
        ]
        .join("\n")
    }
}

/// Read a ground-truth file holding one record or an array of records.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruth>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(GroundTruth),
        Many(Vec<GroundTruth>),
    }
    let parsed: OneOrMany = serde_json::from_str(&text)
        .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
    Ok(match parsed {
        OneOrMany::One(g) => vec![g],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSource {
    Ingested,
    Judged,
}

impl MetricSource {
    fn as_str(self) -> &'static str {
        match self {
            MetricSource::Ingested => "ingested",
            MetricSource::Judged => "judged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub image_id: String,
    pub object_id: u32,
    pub strategy: PromptStrategy,
    pub context_precision: f64,
    pub faithfulness: f64,
    pub answer_relevancy: f64,
    pub source: MetricSource,
}

impl MetricRecord {
    pub fn metric(&self, name: MetricName) -> f64 {
        match name {
            MetricName::ContextPrecision => self.context_precision,
            MetricName::Faithfulness => self.faithfulness,
            MetricName::AnswerRelevancy => self.answer_relevancy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    ContextPrecision,
    Faithfulness,
    AnswerRelevancy,
}

impl MetricName {
    pub const ALL: [MetricName; 3] = [
        MetricName::ContextPrecision,
        MetricName::Faithfulness,
        MetricName::AnswerRelevancy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::ContextPrecision => "context_precision",
            MetricName::Faithfulness => "faithfulness",
            MetricName::AnswerRelevancy => "answer_relevancy",
        }
    }
}

/// Parse and validate a metrics table. Row numbers in errors count the
/// header as row 1.
pub fn read_metrics<R: std::io::Read>(input: R) -> Result<Vec<MetricRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| Error::Metrics(format!("unreadable header: {e}")))?
        .clone();
    let got: Vec<&str> = header.iter().collect();
    if got.len() == 1 && got[0].is_empty() || got.is_empty() {
        return Err(Error::Metrics("no records".into()));
    }
    if got != METRICS_HEADER {
        return Err(Error::Metrics(format!(
            "header {:?} does not match {:?}",
            got, METRICS_HEADER
        )));
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Metrics(format!("row {row}: {e}")))?;
        let strategy: PromptStrategy = rec[2]
            .parse()
            .map_err(|_| Error::Metrics(format!("row {row}: unknown strategy {:?}", &rec[2])))?;
        let object_id: u32 = rec[1]
            .parse()
            .map_err(|_| Error::Metrics(format!("row {row}, column object_id: not an integer")))?;
        let mut vals = [0.0; 3];
        for (j, v) in vals.iter_mut().enumerate() {
            let col = METRICS_HEADER[3 + j];
            let x: f64 = rec[3 + j]
                .parse()
                .map_err(|_| Error::Metrics(format!("row {row}, column {col}: not a number")))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Metrics(format!(
                    "row {row}, column {col}: value {x} outside [0, 1]"
                )));
            }
            *v = x;
        }
        let source = match &rec[6] {
            "" | "ingested" => MetricSource::Ingested,
            "judged" => MetricSource::Judged,
            other => {
                return Err(Error::Metrics(format!(
                    "row {row}, column source: unknown value {other:?}"
                )))
            }
        };
        if !seen.insert((rec[0].to_string(), object_id, strategy)) {
            return Err(Error::Metrics(format!(
                "row {row}: duplicate record for {}/{object_id}/{strategy}",
                &rec[0]
            )));
        }
        out.push(MetricRecord {
            image_id: rec[0].to_string(),
            object_id,
            strategy,
            context_precision: vals[0],
            faithfulness: vals[1],
            answer_relevancy: vals[2],
            source,
        });
    }
    if out.is_empty() {
        return Err(Error::Metrics("no records".into()));
    }
    Ok(out)
}

/// Load externally computed metrics from a CSV file.
pub fn ingest_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_metrics(f)
}

pub fn write_metrics<W: std::io::Write>(out: W, records: &[MetricRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record([
            r.image_id.clone(),
            r.object_id.to_string(),
            r.strategy.to_string(),
            r.context_precision.to_string(),
            r.faithfulness.to_string(),
            r.answer_relevancy.to_string(),
            r.source.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(())
}

fn parse_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| {
            l.trim()
                .trim_start_matches(|c: char| {
                    c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*')
                })
                .trim()
                .to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

fn parse_yes(text: &str) -> bool {
    text.trim().to_ascii_lowercase().starts_with("yes")
}

fn require_text(what: &str, s: &str) -> Result<()> {
    if s.trim().is_empty() {
        Err(Error::InvalidInput(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}

/// Fraction of feedback statements supported by the context. Feedback that
/// yields no statements scores 1.0.
pub fn judge_faithfulness(feedback: &str, context: &str, llm: &Gateway) -> Result<f64> {
    require_text("feedback", feedback)?;
    require_text("context", context)?;
    let statements = parse_lines(&llm.ask(&format!(
        "{TASK_HEADER}extract_statements\n\n\
         Break the answer into short standalone factual statements, one per line.\n\n\
         ANSWER:\n{feedback}\n"
    ))?);
    if statements.is_empty() {
        warn!("no statements extracted from feedback; faithfulness is vacuously 1");
        return Ok(1.0);
    }
    let mut supported = 0usize;
    for st in &statements {
        let reply = llm.ask(&format!(
            "{TASK_HEADER}verify_statement\n\n\
             Can the statement be inferred from the context? Answer yes or no.\n\n\
             CONTEXT:\n{context}\n\nSTATEMENT:\n{st}\n"
        ))?;
        if parse_yes(&reply) {
            supported += 1;
        }
    }
    Ok(supported as f64 / statements.len() as f64)
}

/// Mean cosine similarity between the question and `k` questions
/// regenerated from the feedback, clamped to [0, 1].
pub fn judge_answer_relevancy(
    feedback: &str,
    question: &str,
    llm: &Gateway,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    require_text("feedback", feedback)?;
    require_text("question", question)?;
    let generated = parse_lines(&llm.ask(&format!(
        "{TASK_HEADER}generate_questions\n\n\
         Write questions that the answer below responds to, one per line.\n\n\
         COUNT:\n{k}\n\nANSWER:\n{feedback}\n"
    ))?);
    let generated: Vec<&String> = generated.iter().take(k).collect();
    if generated.is_empty() {
        warn!("no questions generated; answer relevancy is 0");
        return Ok(0.0);
    }
    let target = embedder.embed(question)?;
    let mut total = 0.0;
    for q in &generated {
        total += cosine(&target, &embedder.embed(q)?);
    }
    Ok((total / generated.len() as f64).clamp(0.0, 1.0))
}

/// Rank-weighted precision of binary relevance verdicts:
/// `sum_k precision@k * v_k / max(1, sum v_k)`.
pub fn context_precision_from_verdicts(verdicts: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (i, &v) in verdicts.iter().enumerate() {
        if v {
            hits += 1;
            acc += hits as f64 / (i + 1) as f64;
        }
    }
    acc / hits.max(1) as f64
}

pub fn judge_context_precision(
    context_items: &[String],
    question: &str,
    ground_truth: &GroundTruth,
    llm: &Gateway,
) -> Result<f64> {
    if context_items.is_empty() {
        return Err(Error::InvalidInput(
            "at least one context item is required".into(),
        ));
    }
    let gt = ground_truth.as_text();
    let mut verdicts = Vec::with_capacity(context_items.len());
    for item in context_items {
        let reply = llm.ask(&format!(
            "{TASK_HEADER}context_relevance\n\n\
             Is the context item useful for answering the question, given the ground truth? \
             Answer yes or no.\n\n\
             QUESTION:\n{question}\n\nGROUND_TRUTH:\n{gt}\n\nCONTEXT_ITEM:\n{item}\n"
        ))?;
        verdicts.push(parse_yes(&reply));
    }
    Ok(context_precision_from_verdicts(&verdicts))
}

/// Everything the judges need for one (image, object, strategy) record.
pub struct JudgeInput<'a> {
    pub image_id: &'a str,
    pub object_id: u32,
    pub strategy: PromptStrategy,
    pub feedback: &'a str,
    pub ground_truth: &'a GroundTruth,
}

/// Run all three judges. The context is the strategy's task description
/// plus the ground-truth reference answer; the question is the user turn.
pub fn judge_record(
    input: &JudgeInput<'_>,
    llm: &Gateway,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<MetricRecord> {
    let items = vec![
        input.strategy.system_text().to_string(),
        input.ground_truth.reference_answer.clone(),
    ];
    let context = items.join("\n\n");
    let question = input.strategy.user_text();
    Ok(MetricRecord {
        image_id: input.image_id.to_string(),
        object_id: input.object_id,
        strategy: input.strategy,
        context_precision: judge_context_precision(&items, question, input.ground_truth, llm)?,
        faithfulness: judge_faithfulness(input.feedback, &context, llm)?,
        answer_relevancy: judge_answer_relevancy(input.feedback, question, llm, embedder, k)?,
        source: MetricSource::Judged,
    })
}
