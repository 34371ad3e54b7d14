//! QA evaluation: dataset loading, normalized answer matching, and
//! per-question plus macro-averaged Hit@1 / Accuracy / Precision / Recall /
//! F1 reports.
//!
//! Predictions and gold answers are compared as normalized sets (Unicode
//! NFC, case-folded, whitespace-collapsed exact match — no alias tables, so
//! scores are never silently inflated). Accuracy equals recall by
//! definition here, matching how the two columns coincide in practice.

use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::EvalError;
use crate::exec;

/// One dataset question: id, text, non-empty gold answer set, optional hop
/// count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hops: Option<u32>,
}

/// Load a JSON Lines dataset: one object per line with fields `id`,
/// `question`, `answers`, optional `hops`. Blank lines are skipped; any
/// malformed line is fatal with its line number.
pub fn load_dataset(reader: impl BufRead) -> Result<Vec<QAItem>, EvalError> {
    let mut items = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = (idx + 1) as u64;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: QAItem = serde_json::from_str(&line).map_err(|e| EvalError::BadDataset {
            line: line_no,
            reason: e.to_string(),
        })?;
        if item.id.trim().is_empty() {
            return Err(EvalError::BadDataset {
                line: line_no,
                reason: "empty id".to_owned(),
            });
        }
        if item.question.trim().is_empty() {
            return Err(EvalError::BadDataset {
                line: line_no,
                reason: "empty question".to_owned(),
            });
        }
        if item.answers.is_empty() {
            return Err(EvalError::BadDataset {
                line: line_no,
                reason: "empty gold answer list".to_owned(),
            });
        }
        if !seen_ids.insert(item.id.clone()) {
            return Err(EvalError::BadDataset {
                line: line_no,
                reason: format!("duplicate id {:?}", item.id),
            });
        }
        items.push(item);
    }
    Ok(items)
}

/// Canonical answer form: Unicode NFC, case-folded, trimmed, internal
/// whitespace collapsed to single spaces.
pub fn normalize_answer(s: &str) -> String {
    let composed: String = s.nfc().collect();
    composed
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn normalized_set<S: AsRef<str>>(items: &[S]) -> BTreeSet<String> {
    items
        .iter()
        .map(|s| normalize_answer(s.as_ref()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// 1 iff any normalized prediction matches a gold answer.
pub fn hit_at_1<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], gold: &[T]) -> u32 {
    let preds = normalized_set(predictions);
    let gold = normalized_set(gold);
    u32::from(preds.intersection(&gold).next().is_some())
}

/// Precision, recall, and their harmonic mean over normalized answer sets.
/// Precision is 0 with no predictions; F1 is 0 when precision + recall = 0.
pub fn precision_recall_f1<S: AsRef<str>, T: AsRef<str>>(
    predictions: &[S],
    gold: &[T],
) -> (f64, f64, f64) {
    let preds = normalized_set(predictions);
    let gold = normalized_set(gold);
    let correct = preds.intersection(&gold).count() as f64;
    let precision = if preds.is_empty() { 0.0 } else { correct / preds.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { correct / gold.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// The fraction of gold answers recovered — identical to recall.
pub fn accuracy<S: AsRef<str>, T: AsRef<str>>(predictions: &[S], gold: &[T]) -> f64 {
    precision_recall_f1(predictions, gold).1
}

/// Scores and predictions for one question. A question whose run failed
/// keeps its row with all-zero metrics and the error note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub id: String,
    pub question: String,
    pub hit1: u32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub predictions: Vec<String>,
    pub error: Option<String>,
}

/// Arithmetic means of the per-question metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MacroAverages {
    pub hit1: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// How the run was produced; echoed into every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub mode: String,
    pub seed: u64,
    pub max_pop: usize,
    pub top_k: usize,
    pub model: String,
}

/// The full evaluation result: metadata, one row per question (sorted by
/// id), and macro averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: RunMetadata,
    pub rows: Vec<QuestionRow>,
    pub macro_avg: MacroAverages,
}

/// Run `runner` over every question and assemble the report. Questions are
/// scored independently (and may run in parallel); per-question failures
/// become all-zero rows carrying the error text. Rows are ordered by id.
pub fn evaluate<E: std::fmt::Display>(
    items: &[QAItem],
    metadata: RunMetadata,
    runner: impl Fn(&QAItem) -> Result<Vec<String>, E> + Sync,
) -> EvalReport {
    let mut rows = exec::map(items, |item| match runner(item) {
        Ok(predictions) => {
            let (precision, recall, f1) = precision_recall_f1(&predictions, &item.answers);
            QuestionRow {
                id: item.id.clone(),
                question: item.question.clone(),
                hit1: hit_at_1(&predictions, &item.answers),
                precision,
                recall,
                f1,
                accuracy: recall,
                predictions,
                error: None,
            }
        }
        Err(e) => QuestionRow {
            id: item.id.clone(),
            question: item.question.clone(),
            hit1: 0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            accuracy: 0.0,
            predictions: Vec::new(),
            error: Some(e.to_string()),
        },
    });
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    let macro_avg = macro_averages(&rows);
    EvalReport {
        metadata,
        rows,
        macro_avg,
    }
}

fn macro_averages(rows: &[QuestionRow]) -> MacroAverages {
    if rows.is_empty() {
        return MacroAverages::default();
    }
    let n = rows.len() as f64;
    MacroAverages {
        hit1: rows.iter().map(|r| f64::from(r.hit1)).sum::<f64>() / n,
        precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
        accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / n,
    }
}

impl EvalReport {
    /// Machine-readable form (stable field order, trailing newline).
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    /// Human-readable aligned table with the same content.
    pub fn to_text(&self) -> String {
        let m = &self.metadata;
        let mut out = format!(
            "run: mode={} seed={} max_pop={} top_k={} model={}\n\n",
            m.mode, m.seed, m.max_pop, m.top_k, m.model
        );
        let id_width = self
            .rows
            .iter()
            .map(|r| r.id.len())
            .chain(["id".len(), "macro".len()])
            .max()
            .unwrap_or(5);
        let header = [
            ("id", id_width),
            ("hit@1", 6),
            ("precision", 9),
            ("recall", 6),
            ("f1", 6),
            ("accuracy", 8),
            ("note", 4),
        ];
        let fmt_row = |cells: &[String]| -> String {
            let line = cells
                .iter()
                .zip(header.iter())
                .map(|(cell, (_, w))| format!("{cell:<w$}"))
                .collect::<Vec<_>>()
                .join("  ");
            format!("{}\n", line.trim_end())
        };
        out.push_str(&fmt_row(
            &header.iter().map(|(h, _)| h.to_string()).collect::<Vec<_>>(),
        ));
        for r in &self.rows {
            out.push_str(&fmt_row(&[
                r.id.clone(),
                r.hit1.to_string(),
                format!("{:.4}", r.precision),
                format!("{:.4}", r.recall),
                format!("{:.4}", r.f1),
                format!("{:.4}", r.accuracy),
                r.error.clone().unwrap_or_default(),
            ]));
        }
        let a = &self.macro_avg;
        out.push_str(&fmt_row(&[
            "macro".to_owned(),
            format!("{:.4}", a.hit1),
            format!("{:.4}", a.precision),
            format!("{:.4}", a.recall),
            format!("{:.4}", a.f1),
            format!("{:.4}", a.accuracy),
            String::new(),
        ]));
        out
    }
}
