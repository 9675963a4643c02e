//! Ideation sessions: a problem statement plus the ideas generated for it.
//!
//! Ideas are only ever appended. A re-run on an existing idea records that
//! idea as its parent, and parents always precede their children, so the
//! idea list is a forest rooted at the problem.

mod export;
mod sources;
mod store;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::moves::{MoveId, ProblemError, ProblemStatement, FICTITIOUS_LABEL};

pub use export::{export_transcript, ExportOptions};
pub use sources::{Clock, IdSource, RandomIds, SequentialIds, Sources, SteppingClock, SystemClock};
pub use store::{read_session_file, write_session_file, SessionStore, StoreError};

pub const SESSION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Rating {
    #[default]
    #[serde(rename = "none")]
    Unrated,
    #[serde(rename = "up")]
    Up,
    #[serde(rename = "down")]
    Down,
}

impl Rating {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Unrated => "none",
            Self::Up => "up",
            Self::Down => "down",
        }
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rating {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::Unrated),
            "up" => Ok(Self::Up),
            "down" => Ok(Self::Down),
            other => Err(format!(
                "unknown rating {other:?} (expected none, up or down)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdeaRecord {
    pub id: Uuid,
    pub parent_id: Option<Uuid>,
    pub move_id: MoveId,
    /// The problem statement, or the parent idea's text for re-runs.
    pub input_text: String,
    pub output_text: String,
    pub fictitious_label: bool,
    pub rating: Rating,
    pub bookmarked: bool,
    pub temperature: f64,
    pub model_ref: String,
    pub created_at: DateTime<Utc>,
}

impl IdeaRecord {
    /// The output text as it should be shown to a person.
    pub fn display_text(&self) -> String {
        if self.fictitious_label {
            format!("{FICTITIOUS_LABEL}: {}", self.output_text)
        } else {
            self.output_text.clone()
        }
    }

    pub fn label(&self) -> Option<&'static str> {
        self.fictitious_label.then_some(FICTITIOUS_LABEL)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("unknown idea {0}")]
    UnknownIdea(Uuid),
    #[error("idea {0} already exists in the session")]
    DuplicateIdea(Uuid),
    #[error("idea {idea} names parent {parent}, which is not an earlier idea")]
    DanglingParent { idea: Uuid, parent: Uuid },
    #[error("unsupported session format_version {0} (expected {SESSION_FORMAT_VERSION})")]
    FormatVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    format_version: u32,
    id: Uuid,
    created_at: DateTime<Utc>,
    problem: String,
    registry_version: String,
    ideas: Vec<IdeaRecord>,
}

impl Session {
    pub fn create(
        problem: &str,
        registry_version: &str,
        sources: &Sources,
    ) -> Result<Self, ProblemError> {
        let problem = ProblemStatement::parse(problem)?;
        Ok(Self {
            format_version: SESSION_FORMAT_VERSION,
            id: sources.ids.next_id(),
            created_at: sources.clock.now(),
            problem: problem.into_string(),
            registry_version: registry_version.to_owned(),
            ideas: Vec::new(),
        })
    }

    pub fn id(&self) -> Uuid {
        self.id
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn problem(&self) -> &str {
        &self.problem
    }

    pub fn registry_version(&self) -> &str {
        &self.registry_version
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    pub fn ideas(&self) -> &[IdeaRecord] {
        &self.ideas
    }

    pub fn idea(&self, id: Uuid) -> Option<&IdeaRecord> {
        self.ideas.iter().find(|i| i.id == id)
    }

    fn idea_mut(&mut self, id: Uuid) -> Result<&mut IdeaRecord, SessionError> {
        self.ideas
            .iter_mut()
            .find(|i| i.id == id)
            .ok_or(SessionError::UnknownIdea(id))
    }

    pub fn rate(&mut self, id: Uuid, rating: Rating) -> Result<&IdeaRecord, SessionError> {
        let idea = self.idea_mut(id)?;
        idea.rating = rating;
        Ok(idea)
    }

    pub fn set_bookmark(
        &mut self,
        id: Uuid,
        bookmarked: bool,
    ) -> Result<&IdeaRecord, SessionError> {
        let idea = self.idea_mut(id)?;
        idea.bookmarked = bookmarked;
        Ok(idea)
    }

    /// Bookmarked ideas in creation order.
    pub fn bookmarks(&self) -> Vec<&IdeaRecord> {
        self.ideas.iter().filter(|i| i.bookmarked).collect()
    }

    /// Appends a batch atomically: either every record is added or none is.
    pub(crate) fn append(&mut self, records: Vec<IdeaRecord>) -> Result<(), SessionError> {
        let mut known: HashSet<Uuid> = self.ideas.iter().map(|i| i.id).collect();
        for record in &records {
            if let Some(parent) = record.parent_id {
                if !known.contains(&parent) {
                    return Err(SessionError::DanglingParent {
                        idea: record.id,
                        parent,
                    });
                }
            }
            if !known.insert(record.id) {
                return Err(SessionError::DuplicateIdea(record.id));
            }
        }
        self.ideas.extend(records);
        Ok(())
    }

    /// Checks the structural invariants of a session read from elsewhere.
    pub fn check_integrity(&self) -> Result<(), SessionError> {
        if self.format_version != SESSION_FORMAT_VERSION {
            return Err(SessionError::FormatVersion(self.format_version));
        }
        let mut seen = HashSet::new();
        for idea in &self.ideas {
            if let Some(parent) = idea.parent_id {
                if !seen.contains(&parent) {
                    return Err(SessionError::DanglingParent {
                        idea: idea.id,
                        parent,
                    });
                }
            }
            if !seen.insert(idea.id) {
                return Err(SessionError::DuplicateIdea(idea.id));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("session always serializes");
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn record(n: u128, parent: Option<u128>) -> IdeaRecord {
        IdeaRecord {
            id: Uuid::from_u128(n),
            parent_id: parent.map(Uuid::from_u128),
            move_id: MoveId::new("reflect").unwrap(),
            input_text: "p".into(),
            output_text: format!("idea {n}"),
            fictitious_label: false,
            rating: Rating::Unrated,
            bookmarked: false,
            temperature: 1.0,
            model_ref: "m".into(),
            created_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    fn session() -> Session {
        Session::create("A problem", "1.0.0", &Sources::deterministic()).unwrap()
    }

    #[test]
    fn create_validates_problem() {
        let s = Session::create(
            "I want to improve the way companies retrain employees whose jobs have been replaced by automation",
            "1.0.0",
            &Sources::system(),
        )
        .unwrap();
        assert!(s.ideas().is_empty());
        assert_eq!(s.format_version(), 1);
        assert_eq!(
            Session::create("", "v", &Sources::system()),
            Err(ProblemError::Empty)
        );
        assert!(matches!(
            Session::create(&"x".repeat(2001), "v", &Sources::system()),
            Err(ProblemError::TooLong { len: 2001, .. })
        ));
    }

    #[test]
    fn append_is_all_or_nothing() {
        let mut s = session();
        s.append(vec![record(10, None), record(11, Some(10))])
            .unwrap();
        let err = s
            .append(vec![record(12, None), record(13, Some(99))])
            .unwrap_err();
        assert_eq!(
            err,
            SessionError::DanglingParent {
                idea: Uuid::from_u128(13),
                parent: Uuid::from_u128(99)
            }
        );
        assert_eq!(s.ideas().len(), 2);
        assert_eq!(
            s.append(vec![record(10, None)]),
            Err(SessionError::DuplicateIdea(Uuid::from_u128(10)))
        );
    }

    #[test]
    fn rating_transitions() {
        let mut s = session();
        s.append(vec![record(1, None)]).unwrap();
        let id = Uuid::from_u128(1);
        s.rate(id, Rating::Up).unwrap();
        assert_eq!(s.rate(id, Rating::Up).unwrap().rating, Rating::Up);
        assert_eq!(s.rate(id, Rating::Unrated).unwrap().rating, Rating::Unrated);
        assert_eq!(s.rate(id, Rating::Down).unwrap().rating, Rating::Down);
        assert_eq!(
            s.rate(Uuid::from_u128(2), Rating::Up).unwrap_err(),
            SessionError::UnknownIdea(Uuid::from_u128(2))
        );
    }

    #[test]
    fn bookmarks_in_creation_order() {
        let mut s = session();
        s.append((1..=4).map(|n| record(n, None)).collect())
            .unwrap();
        s.set_bookmark(Uuid::from_u128(3), true).unwrap();
        s.set_bookmark(Uuid::from_u128(1), true).unwrap();
        let ids: Vec<_> = s.bookmarks().iter().map(|i| i.id.as_u128()).collect();
        assert_eq!(ids, [1, 3]);
        let before = s.idea(Uuid::from_u128(3)).unwrap().clone();
        let after = s.set_bookmark(Uuid::from_u128(3), false).unwrap();
        assert_eq!(
            IdeaRecord {
                bookmarked: true,
                ..after.clone()
            },
            before
        );
    }

    #[test]
    fn rating_serializes_as_lowercase_words() {
        assert_eq!(serde_json::to_string(&Rating::Unrated).unwrap(), "\"none\"");
        assert_eq!("down".parse::<Rating>(), Ok(Rating::Down));
        assert!("meh".parse::<Rating>().is_err());
    }

    #[test]
    fn integrity_catches_forward_parent() {
        let mut s = session();
        s.ideas = vec![record(2, Some(1)), record(1, None)];
        assert!(matches!(
            s.check_integrity(),
            Err(SessionError::DanglingParent { .. })
        ));
        s.ideas = vec![record(1, None)];
        s.format_version = 2;
        assert_eq!(s.check_integrity(), Err(SessionError::FormatVersion(2)));
    }
}
