//! JSON shapes returned by the API.

use chrono::{DateTime, Utc};
use ideator_core::{BatchOutcome, IdeaRecord, Move, MoveRegistry, MoveSet, Session};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveView {
    pub id: String,
    pub name: String,
    pub category: String,
    pub question: String,
    pub prompting_mode: String,
    pub fictitious: bool,
}

impl From<&Move> for MoveView {
    fn from(m: &Move) -> Self {
        Self {
            id: m.id.to_string(),
            name: m.display_name.clone(),
            category: m.category.as_str().to_owned(),
            question: m.question.clone(),
            prompting_mode: m.prompting_mode.as_str().to_owned(),
            fictitious: m.fictitious,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveSetView {
    pub id: String,
    pub name: String,
    pub move_ids: Vec<String>,
}

impl From<&MoveSet> for MoveSetView {
    fn from(s: &MoveSet) -> Self {
        Self {
            id: s.id.clone(),
            name: s.display_name.clone(),
            move_ids: s.move_ids.iter().map(ToString::to_string).collect(),
        }
    }
}

/// An idea record plus, for fine-tune moves, the label to show with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdeaView {
    #[serde(flatten)]
    pub record: IdeaRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl From<&IdeaRecord> for IdeaView {
    fn from(r: &IdeaRecord) -> Self {
        Self {
            record: r.clone(),
            label: r.label().map(str::to_owned),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: Uuid,
    pub format_version: u32,
    pub created_at: DateTime<Utc>,
    pub problem: String,
    pub registry_version: String,
    pub ideas: Vec<IdeaView>,
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        Self {
            id: s.id(),
            format_version: s.format_version(),
            created_at: s.created_at(),
            problem: s.problem().to_owned(),
            registry_version: s.registry_version().to_owned(),
            ideas: s.ideas().iter().map(IdeaView::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchView {
    pub move_id: String,
    pub name: String,
    pub ideas: Vec<IdeaView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub session_id: Uuid,
    pub batches: Vec<BatchView>,
}

impl GenerateResponse {
    pub fn new(session_id: Uuid, registry: &MoveRegistry, outcome: &BatchOutcome) -> Self {
        let batches = outcome
            .batches
            .iter()
            .map(|b| BatchView {
                move_id: b.move_id.to_string(),
                name: registry
                    .get(b.move_id.as_str())
                    .map(|m| m.display_name.clone())
                    .unwrap_or_else(|| b.move_id.to_string()),
                ideas: b.ideas.iter().map(IdeaView::from).collect(),
                warning: b.warning.clone(),
            })
            .collect();
        Self {
            session_id,
            batches,
        }
    }
}
