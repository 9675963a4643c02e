//! Markdown transcript of a session.

use std::fmt::Write as _;

use chrono::SecondsFormat;

use super::{IdeaRecord, Rating, Session};
use crate::moves::{MoveId, MoveRegistry};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExportOptions {
    pub bookmarks_only: bool,
}

/// Renders ideas grouped by move, groups ordered by first appearance and
/// ideas in creation order within a group. Display names come from
/// `registry` when the move is known to it.
pub fn export_transcript(
    session: &Session,
    registry: Option<&MoveRegistry>,
    options: ExportOptions,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Ideation transcript\n");
    let _ = writeln!(out, "- Session: {}", session.id());
    let _ = writeln!(
        out,
        "- Created: {}",
        session
            .created_at()
            .to_rfc3339_opts(SecondsFormat::Secs, true)
    );
    let _ = writeln!(out, "- Registry version: {}", session.registry_version());
    if options.bookmarks_only {
        let _ = writeln!(out, "- Showing: bookmarked ideas only");
    }
    let _ = writeln!(out, "\n## Problem\n\n{}\n", session.problem());

    let ideas: Vec<&IdeaRecord> = session
        .ideas()
        .iter()
        .filter(|i| !options.bookmarks_only || i.bookmarked)
        .collect();
    if ideas.is_empty() {
        let _ = writeln!(out, "_No ideas._");
        return out;
    }

    let mut order: Vec<&MoveId> = Vec::new();
    for idea in &ideas {
        if !order.contains(&&idea.move_id) {
            order.push(&idea.move_id);
        }
    }

    for move_id in order {
        let name = registry
            .and_then(|r| r.get(move_id.as_str()))
            .map(|m| m.display_name.as_str())
            .unwrap_or(move_id.as_str());
        let _ = writeln!(out, "## {name} (`{move_id}`)\n");
        for idea in ideas.iter().filter(|i| &i.move_id == move_id) {
            write_idea(&mut out, idea);
        }
    }
    out
}

fn write_idea(out: &mut String, idea: &IdeaRecord) {
    let flag = if idea.bookmarked { " [bookmarked]" } else { "" };
    let _ = writeln!(out, "### Idea {}{flag}\n", idea.id);
    let rating = match idea.rating {
        Rating::Up => "thumbs up",
        Rating::Down => "thumbs down",
        Rating::Unrated => "none",
    };
    let _ = writeln!(out, "- Rating: {rating}");
    match idea.parent_id {
        Some(parent) => {
            let _ = writeln!(out, "- Re-run on: idea {parent}");
        }
        None => {
            let _ = writeln!(out, "- Re-run on: problem");
        }
    }
    let _ = writeln!(out, "- Temperature: {:.1}", idea.temperature);
    let _ = writeln!(out, "- Model: {}", idea.model_ref);
    let _ = writeln!(out, "\n{}\n", idea.display_text());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moves::FICTITIOUS_LABEL;
    use crate::session::Sources;
    use chrono::{TimeZone, Utc};
    use uuid::Uuid;

    fn idea(n: u128, move_id: &str, fictitious: bool) -> IdeaRecord {
        IdeaRecord {
            id: Uuid::from_u128(n),
            parent_id: None,
            move_id: MoveId::new(move_id).unwrap(),
            input_text: "p".into(),
            output_text: format!("text {n}"),
            fictitious_label: fictitious,
            rating: Rating::Unrated,
            bookmarked: false,
            temperature: 1.3,
            model_ref: "m".into(),
            created_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    fn sample() -> Session {
        let mut s = Session::create("Problem text", "1.0.0", &Sources::deterministic()).unwrap();
        s.append(vec![
            idea(10, "reflect", false),
            idea(11, "groupify-market", true),
            idea(12, "reflect", false),
        ])
        .unwrap();
        s.set_bookmark(Uuid::from_u128(12), true).unwrap();
        s.rate(Uuid::from_u128(12), Rating::Up).unwrap();
        s
    }

    #[test]
    fn groups_by_first_appearance() {
        let text = export_transcript(
            &sample(),
            Some(MoveRegistry::builtin()),
            ExportOptions::default(),
        );
        let reflect = text.find("## Reflect (`reflect`)").unwrap();
        let market = text
            .find("## Groupify - Market (`groupify-market`)")
            .unwrap();
        assert!(reflect < market);
        assert!(text.find("text 12").unwrap() < market);
        assert!(text.contains(&format!("{FICTITIOUS_LABEL}: text 11")));
        assert!(!text.contains(&format!("{FICTITIOUS_LABEL}: text 10")));
        assert!(text.contains(&format!("### Idea {} [bookmarked]", Uuid::from_u128(12))));
        assert!(text.contains("- Rating: thumbs up"));
        assert!(text.contains("- Temperature: 1.3"));
    }

    #[test]
    fn bookmarks_only_filters() {
        let text = export_transcript(
            &sample(),
            None,
            ExportOptions {
                bookmarks_only: true,
            },
        );
        assert!(text.contains("text 12"));
        assert!(!text.contains("text 10"));
        assert!(!text.contains("groupify-market"));
    }

    #[test]
    fn empty_session() {
        let s = Session::create("p", "1", &Sources::deterministic()).unwrap();
        assert!(export_transcript(&s, None, ExportOptions::default()).ends_with("_No ideas._\n"));
    }
}
