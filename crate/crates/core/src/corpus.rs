//! Move-labeled case corpus and fine-tune training file emission.
//!
//! Input is JSON Lines, one [`CaseRecord`] per line. Output is JSON Lines of
//! `{"prompt": ..., "completion": ...}` pairs in the legacy completion-model
//! fine-tune layout:
//!
//! ```text
//! prompt     = "Problem: " + problem + "\nMove: " + move_label + "\n\n###\n\n"
//! completion = " " + narrative + " END"
//! ```
//!
//! The exact byte layout is documented in `docs/corpus-format.md`.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moves::MoveId;

/// The move labels a case may carry.
pub const FINETUNE_LABELS: [&str; 10] = [
    "groupify-hierarchy",
    "groupify-democracy",
    "groupify-market",
    "groupify-community",
    "groupify-ecosystem",
    "cognify-create",
    "cognify-decide",
    "cognify-sense",
    "cognify-remember",
    "cognify-learn",
];

pub const PROMPT_SEPARATOR: &str = "\n\n###\n\n";
pub const COMPLETION_SUFFIX: &str = " END";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRecord {
    pub id: String,
    pub problem: String,
    pub narrative: String,
    pub move_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl CaseRecord {
    /// Every violated invariant, as human-readable messages.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.trim().is_empty() {
            out.push("id is empty".to_owned());
        }
        if self.problem.trim().is_empty() {
            out.push("problem is empty".to_owned());
        }
        if self.narrative.trim().is_empty() {
            out.push("narrative is empty".to_owned());
        } else if self.narrative.starts_with(char::is_whitespace) {
            // The completion must begin with exactly one space.
            out.push("narrative starts with whitespace".to_owned());
        }
        if self.problem.contains(PROMPT_SEPARATOR) || self.narrative.contains(PROMPT_SEPARATOR) {
            out.push("text contains the prompt separator".to_owned());
        }
        if !FINETUNE_LABELS.contains(&self.move_label.as_str()) {
            out.push(format!(
                "label not in groupify/cognify set: {:?}",
                self.move_label
            ));
        }
        out
    }

    pub fn move_id(&self) -> Option<MoveId> {
        MoveId::new(self.move_label.as_str()).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    /// 1-based line number in the input file.
    pub line: usize,
    pub record_id: Option<String>,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.record_id {
            Some(id) => write!(f, "line {}: record {id:?}: {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Records that parsed and satisfy every invariant.
    pub records: Vec<CaseRecord>,
    pub issues: Vec<Issue>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("record {id:?} is invalid: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("training file line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
}

pub fn ingest(path: impl AsRef<Path>) -> Result<IngestReport, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(ingest_str(&text))
}

/// Parses JSON Lines text. Blank lines are skipped silently. A record whose
/// id repeats an earlier valid record is reported and left out.
pub fn ingest_str(text: &str) -> IngestReport {
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CaseRecord>(line) {
            Ok(record) => {
                let mut problems = record.problems();
                if problems.is_empty() && seen.contains(&record.id) {
                    problems.push(format!("duplicate id {:?}", record.id));
                }
                if problems.is_empty() {
                    seen.insert(record.id.clone());
                    report.records.push(record);
                } else {
                    report
                        .issues
                        .extend(problems.into_iter().map(|message| Issue {
                            line: line_no,
                            record_id: Some(record.id.clone()),
                            message,
                        }));
                }
            }
            Err(e) => report.issues.push(Issue {
                line: line_no,
                record_id: None,
                message: format!("malformed record: {e}"),
            }),
        }
    }
    report
}

/// Ids that occur more than once, in order of their second occurrence.
pub fn duplicate_ids(records: &[CaseRecord]) -> Vec<&str> {
    let mut seen = HashSet::new();
    records
        .iter()
        .filter(|r| !seen.insert(r.id.as_str()))
        .map(|r| r.id.as_str())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingExample {
    pub prompt: String,
    pub completion: String,
}

impl TrainingExample {
    pub fn from_case(record: &CaseRecord) -> Self {
        Self {
            prompt: format!(
                "Problem: {}\nMove: {}{PROMPT_SEPARATOR}",
                record.problem, record.move_label
            ),
            completion: format!(" {}{COMPLETION_SUFFIX}", record.narrative),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !self.prompt.ends_with(PROMPT_SEPARATOR) {
            return Err("prompt does not end with the separator".into());
        }
        if !self.completion.starts_with(' ') || self.completion.starts_with("  ") {
            return Err("completion must begin with exactly one space".into());
        }
        if !self.completion.ends_with(COMPLETION_SUFFIX) {
            return Err("completion does not end with \" END\"".into());
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("training example always serializes")
    }
}

/// Serializes examples, one compact JSON object per LF-terminated line.
pub fn emit_examples(examples: &[TrainingExample]) -> String {
    examples.iter().fold(String::new(), |mut out, ex| {
        out.push_str(&ex.to_line());
        out.push('\n');
        out
    })
}

/// Builds the training document for `records`, preserving their order.
pub fn emit_training_file(records: &[CaseRecord]) -> Result<String, CorpusError> {
    for record in records {
        let problems = record.problems();
        if !problems.is_empty() {
            return Err(CorpusError::InvalidRecord {
                id: record.id.clone(),
                reason: problems.join("; "),
            });
        }
    }
    if let Some(dup) = duplicate_ids(records).first() {
        return Err(CorpusError::DuplicateId((*dup).to_owned()));
    }
    let examples: Vec<_> = records.iter().map(TrainingExample::from_case).collect();
    Ok(emit_examples(&examples))
}

pub fn parse_training_file(document: &str) -> Result<Vec<TrainingExample>, CorpusError> {
    if !document.is_empty() && !document.ends_with('\n') {
        return Err(CorpusError::MalformedLine {
            line: document.lines().count(),
            reason: "final line is not LF-terminated".into(),
        });
    }
    document
        .split_terminator('\n')
        .enumerate()
        .map(|(idx, line)| {
            let malformed = |reason: String| CorpusError::MalformedLine {
                line: idx + 1,
                reason,
            };
            let example: TrainingExample =
                serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
            example.check().map_err(malformed)?;
            Ok(example)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    /// Every allowed label appears, with zero when absent.
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
}

pub fn stats(records: &[CaseRecord]) -> CorpusStats {
    let mut counts: BTreeMap<String, usize> = FINETUNE_LABELS
        .iter()
        .map(|l| ((*l).to_owned(), 0))
        .collect();
    for record in records {
        *counts.entry(record.move_label.clone()).or_default() += 1;
    }
    CorpusStats {
        counts,
        total: records.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(id: &str, label: &str) -> CaseRecord {
        CaseRecord {
            id: id.into(),
            problem: "P".into(),
            narrative: "N".into(),
            move_label: label.into(),
            source: None,
        }
    }

    #[test]
    fn empty_input() {
        assert_eq!(ingest_str(""), IngestReport::default());
        assert_eq!(emit_training_file(&[]).unwrap(), "");
        let s = stats(&[]);
        assert_eq!(s.total, 0);
        assert_eq!(s.counts.len(), 10);
        assert!(s.counts.values().all(|c| *c == 0));
    }

    #[test]
    fn wrong_label_is_reported_at_its_line() {
        let text = format!(
            "{}\n\n{}\n",
            serde_json::to_string(&case("a", "groupify-market")).unwrap(),
            serde_json::to_string(&case("b", "technify")).unwrap()
        );
        let report = ingest_str(&text);
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].line, 3);
        assert!(report.issues[0]
            .message
            .starts_with("label not in groupify/cognify set"));
    }

    #[test]
    fn repeated_id_is_an_issue() {
        let line = serde_json::to_string(&case("a", "cognify-learn")).unwrap();
        let report = ingest_str(&format!("{line}\n{line}\n"));
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].line, 2);
        assert_eq!(report.issues[0].message, "duplicate id \"a\"");
    }

    #[test]
    fn malformed_line_is_an_issue() {
        let report = ingest_str("{not json}\n");
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].record_id, None);
    }

    #[test]
    fn single_record_layout() {
        let doc = emit_training_file(&[case("a", "groupify-market")]).unwrap();
        assert_eq!(
            doc,
            "{\"prompt\":\"Problem: P\\nMove: groupify-market\\n\\n###\\n\\n\",\"completion\":\" N END\"}\n"
        );
        let s = stats(&[case("a", "groupify-market")]);
        assert_eq!(s.counts["groupify-market"], 1);
        assert_eq!(s.total, 1);
    }

    #[test]
    fn duplicates_abort_emission() {
        let records = [case("a", "cognify-learn"), case("a", "cognify-sense")];
        assert!(matches!(
            emit_training_file(&records),
            Err(CorpusError::DuplicateId(id)) if id == "a"
        ));
        assert_eq!(duplicate_ids(&records), ["a"]);
    }

    #[test]
    fn invalid_record_aborts_with_its_id() {
        let records = [case("ok", "cognify-learn"), case("bad", "reflect")];
        assert!(matches!(
            emit_training_file(&records),
            Err(CorpusError::InvalidRecord { id, .. }) if id == "bad"
        ));
    }

    #[test]
    fn parser_rejects_bad_lines() {
        assert!(parse_training_file("{\"prompt\":\"x\",\"completion\":\" y END\"}\n").is_err());
        assert!(parse_training_file(
            "{\"prompt\":\"x\\n\\n###\\n\\n\",\"completion\":\"y END\"}\n"
        )
        .is_err());
        assert!(
            parse_training_file("{\"prompt\":\"x\\n\\n###\\n\\n\",\"completion\":\" y END\"}")
                .is_err()
        );
        assert_eq!(parse_training_file("").unwrap(), vec![]);
    }
}
