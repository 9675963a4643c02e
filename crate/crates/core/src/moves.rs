//! Move taxonomy, prompt templates, move sets and the creativity scale.
//!
//! Moves are never defined in code. A registry is loaded from a definition
//! document (layout in `docs/registry-format.md`) and validated as a whole, so
//! a broken file reports every problem at once instead of the first one. The
//! built-in registry ships as `data/registry.json`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The only placeholder token a template may contain.
pub const PROBLEM_PLACEHOLDER: &str = "{problem}";

/// Upper bound on a problem statement, counted in characters after trimming.
pub const MAX_PROBLEM_CHARS: usize = 2000;

/// Label carried by every idea produced by a fine-tune move.
/// Ideas requested per move when the caller does not say.
pub const DEFAULT_IDEAS_PER_MOVE: u32 = 3;

pub const FICTITIOUS_LABEL: &str = "possible (maybe fictitious) idea(s)";

const BUILTIN_REGISTRY: &str = include_str!("../data/registry.json");

static BUILTIN: LazyLock<MoveRegistry> = LazyLock::new(|| {
    load_registry(BUILTIN_REGISTRY)
        .unwrap_or_else(|err| panic!("bundled registry definition is invalid: {err}"))
});

fn is_kebab_case(value: &str) -> bool {
    !value.is_empty()
        && value.split('-').all(|segment| {
            !segment.is_empty()
                && segment
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid move id {0:?}: expected lowercase kebab-case")]
pub struct InvalidMoveId(pub String);

/// Lowercase kebab-case move identifier, e.g. `groupify-market`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MoveId(String);

impl MoveId {
    pub fn new(value: impl Into<String>) -> Result<Self, InvalidMoveId> {
        let value = value.into();
        if is_kebab_case(&value) {
            Ok(Self(value))
        } else {
            Err(InvalidMoveId(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for MoveId {
    type Error = InvalidMoveId;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<MoveId> for String {
    fn from(id: MoveId) -> Self {
        id.0
    }
}

impl AsRef<str> for MoveId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MoveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for MoveId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for MoveId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoveCategory {
    Basic,
    Supermind,
    Experimental,
}

impl MoveCategory {
    pub const ALL: [MoveCategory; 3] = [Self::Basic, Self::Supermind, Self::Experimental];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Basic => "basic",
            Self::Supermind => "supermind",
            Self::Experimental => "experimental",
        }
    }
}

impl fmt::Display for MoveCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MoveCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown move category {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptingMode {
    ZeroShot,
    FewShot,
    FineTune,
}

impl PromptingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ZeroShot => "zero-shot",
            Self::FewShot => "few-shot",
            Self::FineTune => "fine-tune",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template has no {PROBLEM_PLACEHOLDER} placeholder")]
    MissingPlaceholder,
    #[error("template contains unsupported placeholder {0}")]
    ForeignPlaceholder(String),
}

/// Prompt text with one or more `{problem}` slots and no other placeholders.
///
/// A placeholder token is `{` followed by zero or more ASCII letters, digits
/// or underscores and a closing `}`. Braces around anything else (JSON
/// snippets, prose) are left alone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        let mut found = false;
        for token in placeholder_tokens(&text) {
            if token == PROBLEM_PLACEHOLDER {
                found = true;
            } else {
                return Err(TemplateError::ForeignPlaceholder(token.to_owned()));
            }
        }
        if found {
            Ok(Self(text))
        } else {
            Err(TemplateError::MissingPlaceholder)
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn placeholder_count(&self) -> usize {
        self.0.matches(PROBLEM_PLACEHOLDER).count()
    }

    fn fill(&self, problem: &str) -> String {
        self.0.replace(PROBLEM_PLACEHOLDER, problem)
    }
}

impl TryFrom<String> for PromptTemplate {
    type Error = TemplateError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<PromptTemplate> for String {
    fn from(t: PromptTemplate) -> Self {
        t.0
    }
}

fn placeholder_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.match_indices('{').filter_map(move |(start, _)| {
        let rest = &text[start + 1..];
        let ident_len = rest
            .bytes()
            .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
            .count();
        (rest.as_bytes().get(ident_len) == Some(&b'}')).then(|| &text[start..start + ident_len + 2])
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProblemError {
    #[error("problem statement is empty")]
    Empty,
    #[error("problem statement is {len} characters; the limit is {max}")]
    TooLong { len: usize, max: usize },
}

/// A trimmed, non-empty problem statement of at most [`MAX_PROBLEM_CHARS`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemStatement(String);

impl ProblemStatement {
    pub fn parse(raw: &str) -> Result<Self, ProblemError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return Err(ProblemError::Empty);
        }
        let len = trimmed.chars().count();
        if len > MAX_PROBLEM_CHARS {
            return Err(ProblemError::TooLong {
                len,
                max: MAX_PROBLEM_CHARS,
            });
        }
        Ok(Self(trimmed.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

/// One ideation technique together with everything needed to prompt for it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Move {
    pub id: MoveId,
    pub display_name: String,
    pub category: MoveCategory,
    pub question: String,
    pub template: PromptTemplate,
    pub prompting_mode: PromptingMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub few_shot_preamble: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_sequence: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finetune_model_ref: Option<String>,
    pub fictitious: bool,
}

/// Substitutes the problem into every `{problem}` slot of the move's template.
pub fn render_prompt(mv: &Move, problem: &str) -> Result<String, ProblemError> {
    let problem = ProblemStatement::parse(problem)?;
    Ok(mv.template.fill(problem.as_str()))
}

impl Move {
    pub fn render(&self, problem: &str) -> Result<String, ProblemError> {
        render_prompt(self, problem)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MoveSet {
    pub id: String,
    pub display_name: String,
    pub move_ids: Vec<MoveId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CreativityLevel {
    Low,
    #[default]
    Medium,
    High,
}

impl CreativityLevel {
    pub const ALL: [CreativityLevel; 3] = [Self::Low, Self::Medium, Self::High];

    pub fn temperature(self) -> f64 {
        match self {
            Self::Low => 0.7,
            Self::Medium => 1.0,
            Self::High => 1.3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }
}

pub fn creativity_to_temperature(level: CreativityLevel) -> f64 {
    level.temperature()
}

impl FromStr for CreativityLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown creativity level {s:?} (expected low, medium or high)"))
    }
}

impl fmt::Display for CreativityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// On-disk shape of a registry definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryDocument {
    pub version: String,
    pub moves: Vec<MoveDefinition>,
    pub move_sets: Vec<MoveSetDefinition>,
}

/// Unvalidated move record as it appears in a definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveDefinition {
    pub id: String,
    pub display_name: String,
    pub category: MoveCategory,
    pub question: String,
    pub template: String,
    pub prompting_mode: PromptingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub few_shot_preamble: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_sequence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finetune_model_ref: Option<String>,
    pub fictitious: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveSetDefinition {
    pub id: String,
    pub display_name: String,
    pub move_ids: Vec<String>,
}

/// A single violated registry invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryIssue {
    #[error("registry version is empty")]
    EmptyVersion,
    #[error("{0}")]
    InvalidMoveId(InvalidMoveId),
    #[error("duplicate move id {0:?}")]
    DuplicateMove(String),
    #[error("move {move_id:?}: {field} is empty")]
    EmptyField {
        move_id: String,
        field: &'static str,
    },
    #[error("move {move_id:?}: {source}")]
    Template {
        move_id: String,
        source: TemplateError,
    },
    #[error("move {move_id:?}: {detail}")]
    ModeMismatch { move_id: String, detail: String },
    #[error("move {move_id:?}: fictitious must be {expected} for {mode} moves")]
    FictitiousMismatch {
        move_id: String,
        mode: &'static str,
        expected: bool,
    },
    #[error("invalid move set id {0:?}: expected lowercase kebab-case")]
    InvalidSetId(String),
    #[error("duplicate move set id {0:?}")]
    DuplicateSet(String),
    #[error("move set {0:?} is empty")]
    EmptySet(String),
    #[error("move set {set_id:?} references unknown move {move_id:?}")]
    DanglingReference { set_id: String, move_id: String },
    #[error("move set {set_id:?} lists move {move_id:?} more than once")]
    DuplicateInSet { set_id: String, move_id: String },
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("malformed registry document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read registry file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid registry ({} issue(s)): {}", .0.len(), join_issues(.0))]
    Invalid(Vec<RegistryIssue>),
}

fn join_issues(issues: &[RegistryIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown move {0:?}")]
pub struct UnknownMove(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown move set {0:?}")]
pub struct UnknownMoveSet(pub String);

/// Validated, immutable collection of moves and move sets.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveRegistry {
    version: String,
    moves: IndexMap<MoveId, Move>,
    move_sets: IndexMap<String, MoveSet>,
}

/// Parses and validates a registry definition document (JSON).
pub fn load_registry(document: &str) -> Result<MoveRegistry, RegistryError> {
    let doc: RegistryDocument = serde_json::from_str(document)?;
    MoveRegistry::from_document(doc)
}

impl MoveRegistry {
    /// The registry bundled with the crate.
    pub fn builtin() -> &'static MoveRegistry {
        &BUILTIN
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        load_registry(&text)
    }

    pub fn from_document(doc: RegistryDocument) -> Result<Self, RegistryError> {
        let mut issues = Vec::new();
        if doc.version.trim().is_empty() {
            issues.push(RegistryIssue::EmptyVersion);
        }

        let mut moves = IndexMap::new();
        for def in doc.moves {
            let raw_id = def.id.clone();
            if let Some(mv) = validate_move(def, &mut issues) {
                if moves.contains_key(&mv.id) {
                    issues.push(RegistryIssue::DuplicateMove(raw_id));
                } else {
                    moves.insert(mv.id.clone(), mv);
                }
            }
        }

        let mut move_sets: IndexMap<String, MoveSet> = IndexMap::new();
        for def in doc.move_sets {
            if !is_kebab_case(&def.id) {
                issues.push(RegistryIssue::InvalidSetId(def.id.clone()));
            }
            if move_sets.contains_key(&def.id) {
                issues.push(RegistryIssue::DuplicateSet(def.id.clone()));
                continue;
            }
            if def.move_ids.is_empty() {
                issues.push(RegistryIssue::EmptySet(def.id.clone()));
            }
            let mut ids: Vec<MoveId> = Vec::with_capacity(def.move_ids.len());
            for raw in &def.move_ids {
                match MoveId::new(raw.as_str()) {
                    Ok(id) if moves.contains_key(&id) => {
                        if ids.contains(&id) {
                            issues.push(RegistryIssue::DuplicateInSet {
                                set_id: def.id.clone(),
                                move_id: raw.clone(),
                            });
                        } else {
                            ids.push(id);
                        }
                    }
                    _ => issues.push(RegistryIssue::DanglingReference {
                        set_id: def.id.clone(),
                        move_id: raw.clone(),
                    }),
                }
            }
            move_sets.insert(
                def.id.clone(),
                MoveSet {
                    id: def.id,
                    display_name: def.display_name,
                    move_ids: ids,
                },
            );
        }

        if issues.is_empty() {
            Ok(Self {
                version: doc.version,
                moves,
                move_sets,
            })
        } else {
            Err(RegistryError::Invalid(issues))
        }
    }

    pub fn to_document(&self) -> RegistryDocument {
        RegistryDocument {
            version: self.version.clone(),
            moves: self
                .moves
                .values()
                .map(|m| MoveDefinition {
                    id: m.id.to_string(),
                    display_name: m.display_name.clone(),
                    category: m.category,
                    question: m.question.clone(),
                    template: m.template.as_str().to_owned(),
                    prompting_mode: m.prompting_mode,
                    few_shot_preamble: m.few_shot_preamble.clone(),
                    system_message: m.system_message.clone(),
                    stop_sequence: m.stop_sequence.clone(),
                    finetune_model_ref: m.finetune_model_ref.clone(),
                    fictitious: m.fictitious,
                })
                .collect(),
            move_sets: self
                .move_sets
                .values()
                .map(|s| MoveSetDefinition {
                    id: s.id.clone(),
                    display_name: s.display_name.clone(),
                    move_ids: s.move_ids.iter().map(ToString::to_string).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&self.to_document())
            .expect("registry document always serializes");
        out.push('\n');
        out
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Moves in definition order.
    pub fn moves(&self) -> impl ExactSizeIterator<Item = &Move> {
        self.moves.values()
    }

    pub fn move_sets(&self) -> impl ExactSizeIterator<Item = &MoveSet> {
        self.move_sets.values()
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Move> {
        self.moves.iter().find_map(|(k, v)| (k == id).then_some(v))
    }

    pub fn require(&self, id: &str) -> Result<&Move, UnknownMove> {
        self.get(id).ok_or_else(|| UnknownMove(id.to_owned()))
    }

    pub fn move_set(&self, set_id: &str) -> Option<&MoveSet> {
        self.move_sets.get(set_id)
    }

    /// Moves of a set, in the set's declared order.
    pub fn resolve_move_set(&self, set_id: &str) -> Result<Vec<&Move>, UnknownMoveSet> {
        let set = self
            .move_sets
            .get(set_id)
            .ok_or_else(|| UnknownMoveSet(set_id.to_owned()))?;
        Ok(set.move_ids.iter().map(|id| &self.moves[id]).collect())
    }

    /// Looks up an ad-hoc selection, keeping the caller's order.
    pub fn resolve_moves<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<&Move>, UnknownMove> {
        ids.iter().map(|id| self.require(id.as_ref())).collect()
    }
}

fn validate_move(def: MoveDefinition, issues: &mut Vec<RegistryIssue>) -> Option<Move> {
    let before = issues.len();
    let id = MoveId::new(def.id.as_str())
        .map_err(|e| issues.push(RegistryIssue::InvalidMoveId(e)))
        .ok();

    for (field, value) in [
        ("display_name", &def.display_name),
        ("question", &def.question),
    ] {
        if value.trim().is_empty() {
            issues.push(RegistryIssue::EmptyField {
                move_id: def.id.clone(),
                field,
            });
        }
    }

    let template = PromptTemplate::new(def.template.as_str())
        .map_err(|source| {
            issues.push(RegistryIssue::Template {
                move_id: def.id.clone(),
                source,
            })
        })
        .ok();

    let present = |v: &Option<String>| v.as_deref().is_some_and(|s| !s.is_empty());
    let mut mismatch = |detail: &str| {
        issues.push(RegistryIssue::ModeMismatch {
            move_id: def.id.clone(),
            detail: detail.to_owned(),
        })
    };
    match def.prompting_mode {
        PromptingMode::ZeroShot => {
            if def.few_shot_preamble.is_some() {
                mismatch("zero-shot moves must not carry a few_shot_preamble");
            }
            if def.finetune_model_ref.is_some() {
                mismatch("zero-shot moves must not name a finetune_model_ref");
            }
        }
        PromptingMode::FewShot => {
            if !present(&def.few_shot_preamble) {
                mismatch("few-shot moves require a non-empty few_shot_preamble");
            }
            if def.finetune_model_ref.is_some() {
                mismatch("few-shot moves must not name a finetune_model_ref");
            }
        }
        PromptingMode::FineTune => {
            if !present(&def.finetune_model_ref) {
                mismatch("fine-tune moves require a non-empty finetune_model_ref");
            }
            if !present(&def.few_shot_preamble) {
                mismatch(
                    "fine-tune moves require a few_shot_preamble for use when no fine-tuned model is configured",
                );
            }
        }
    }

    let expected = def.prompting_mode == PromptingMode::FineTune;
    if def.fictitious != expected {
        issues.push(RegistryIssue::FictitiousMismatch {
            move_id: def.id.clone(),
            mode: def.prompting_mode.as_str(),
            expected,
        });
    }

    if issues.len() != before {
        return None;
    }
    Some(Move {
        id: id?,
        display_name: def.display_name,
        category: def.category,
        question: def.question,
        template: template?,
        prompting_mode: def.prompting_mode,
        few_shot_preamble: def.few_shot_preamble,
        system_message: def.system_message,
        stop_sequence: def.stop_sequence,
        finetune_model_ref: def.finetune_model_ref,
        fictitious: def.fictitious,
    })
}
