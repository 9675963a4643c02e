use std::sync::Arc;

use ideator_core::llm::{CompletionRequest, GenerationSettings};
use ideator_core::moves::RegistryDocument;
use ideator_core::session::{SessionError, Sources};
use ideator_core::{
    load_registry, CreativityLevel, IdeaRecord, Ideator, MockBackend, MoveRegistry, PromptingMode,
    Rating, Session, SessionStore,
};
use proptest::prelude::*;
use proptest::sample::Index;
use uuid::Uuid;

fn registry() -> &'static MoveRegistry {
    MoveRegistry::builtin()
}

fn problem_text() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z ,.'-]{0,80}"
}

fn creativity() -> impl Strategy<Value = CreativityLevel> {
    prop::sample::select(CreativityLevel::ALL.to_vec())
}

fn rating() -> impl Strategy<Value = Rating> {
    prop::sample::select(vec![Rating::Unrated, Rating::Up, Rating::Down])
}

#[derive(Debug, Clone)]
enum Op {
    RunMove {
        move_index: Index,
        target: Option<Index>,
        creativity: CreativityLevel,
        count: u32,
    },
    RunSet {
        set_index: Index,
        target: Option<Index>,
        creativity: CreativityLevel,
    },
    Rate(Index, Rating),
    Bookmark(Index, bool),
    RateUnknown(u128),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (any::<Index>(), prop::option::of(any::<Index>()), creativity(), 1u32..=3).prop_map(
            |(move_index, target, creativity, count)| Op::RunMove {
                move_index,
                target,
                creativity,
                count
            }
        ),
        1 => (any::<Index>(), prop::option::of(any::<Index>()), creativity()).prop_map(
            |(set_index, target, creativity)| Op::RunSet {
                set_index,
                target,
                creativity
            }
        ),
        3 => (any::<Index>(), rating()).prop_map(|(i, r)| Op::Rate(i, r)),
        2 => (any::<Index>(), any::<bool>()).prop_map(|(i, b)| Op::Bookmark(i, b)),
        1 => (1u128 << 100..u128::MAX).prop_map(Op::RateUnknown),
    ]
}

fn pick(session: &Session, index: &Index) -> Option<Uuid> {
    let ideas = session.ideas();
    (!ideas.is_empty()).then(|| ideas[index.index(ideas.len())].id)
}

fn ideator(seed: u64) -> Ideator {
    Ideator::new(
        Arc::new(registry().clone()),
        Arc::new(MockBackend::new(seed)),
        GenerationSettings::default(),
        Sources::deterministic(),
    )
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread()
        .build()
        .unwrap()
}

fn check_invariants(before: &[IdeaRecord], session: &Session) -> Result<(), TestCaseError> {
    // Append-only: the previous records are an untouched prefix, except for
    // the rating and bookmark fields which are the only mutable ones.
    prop_assert!(session.ideas().len() >= before.len());
    for (old, new) in before.iter().zip(session.ideas()) {
        prop_assert_eq!(old.id, new.id);
        prop_assert_eq!(old.parent_id, new.parent_id);
        prop_assert_eq!(&old.move_id, &new.move_id);
        prop_assert_eq!(&old.output_text, &new.output_text);
        prop_assert_eq!(old.created_at, new.created_at);
    }
    // Forest: every parent is an earlier record.
    prop_assert_eq!(session.check_integrity(), Ok(()));
    for idea in session.ideas() {
        let mv = registry().require(idea.move_id.as_str()).unwrap();
        prop_assert_eq!(idea.fictitious_label, mv.fictitious);
        prop_assert_eq!(
            idea.fictitious_label,
            mv.prompting_mode == PromptingMode::FineTune
        );
    }
    let expected: Vec<Uuid> = session
        .ideas()
        .iter()
        .filter(|i| i.bookmarked)
        .map(|i| i.id)
        .collect();
    let listed: Vec<Uuid> = session.bookmarks().iter().map(|i| i.id).collect();
    prop_assert_eq!(listed, expected);
    Ok(())
}

/// Applies `ops` to a fresh session, checking invariants after each step.
fn replay(seed: u64, problem: &str, ops: &[Op]) -> Result<Session, TestCaseError> {
    let rt = runtime();
    let ideator = ideator(seed);
    let mut session = ideator.create_session(problem).unwrap();
    let move_ids: Vec<String> = registry().moves().map(|m| m.id.to_string()).collect();
    let set_ids: Vec<String> = registry().move_sets().map(|s| s.id.clone()).collect();

    for op in ops {
        let before = session.ideas().to_vec();
        match op {
            Op::RunMove {
                move_index,
                target,
                creativity,
                count,
            } => {
                let target = target.as_ref().and_then(|t| pick(&session, t));
                let id = move_index.get(&move_ids);
                let added = rt
                    .block_on(ideator.run_move(&mut session, id, target, *creativity, *count))
                    .unwrap();
                prop_assert_eq!(added.len(), *count as usize);
                prop_assert!(added.iter().all(|i| i.parent_id == target));
                prop_assert!(added
                    .iter()
                    .all(|i| i.temperature == creativity.temperature()));
            }
            Op::RunSet {
                set_index,
                target,
                creativity,
            } => {
                let target = target.as_ref().and_then(|t| pick(&session, t));
                let id = set_index.get(&set_ids);
                let outcome = rt
                    .block_on(ideator.run_move_set(&mut session, id, target, *creativity, 1))
                    .unwrap();
                prop_assert!(outcome.is_complete());
                prop_assert_eq!(
                    outcome.batches.len(),
                    registry().move_set(id).unwrap().move_ids.len()
                );
            }
            Op::Rate(index, rating) => {
                if let Some(id) = pick(&session, index) {
                    session.rate(id, *rating).unwrap();
                    let once = session.clone();
                    session.rate(id, *rating).unwrap();
                    prop_assert_eq!(&once, &session);
                    prop_assert_eq!(session.idea(id).unwrap().rating, *rating);
                }
            }
            Op::Bookmark(index, flag) => {
                if let Some(id) = pick(&session, index) {
                    session.set_bookmark(id, *flag).unwrap();
                    prop_assert_eq!(session.idea(id).unwrap().bookmarked, *flag);
                }
            }
            Op::RateUnknown(raw) => {
                let id = Uuid::from_u128(*raw);
                let snapshot = session.clone();
                prop_assert_eq!(
                    session.rate(id, Rating::Up).unwrap_err(),
                    SessionError::UnknownIdea(id)
                );
                prop_assert_eq!(&snapshot, &session);
            }
        }
        check_invariants(&before, &session)?;
    }
    Ok(session)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn random_operation_sequences_keep_invariants(
        seed in any::<u64>(),
        problem in problem_text(),
        ops in prop::collection::vec(op(), 0..24),
    ) {
        replay(seed, &problem, &ops)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn replay_is_byte_identical(
        seed in any::<u64>(),
        problem in problem_text(),
        ops in prop::collection::vec(op(), 0..16),
    ) {
        let first = replay(seed, &problem, &ops)?;
        let second = replay(seed, &problem, &ops)?;
        prop_assert_eq!(first.to_json(), second.to_json());
    }

    #[test]
    fn save_load_round_trip(
        seed in any::<u64>(),
        problem in problem_text(),
        ops in prop::collection::vec(op(), 0..16),
    ) {
        let session = replay(seed, &problem, &ops)?;
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        store.save(&session).unwrap();
        prop_assert_eq!(store.load(session.id()).unwrap(), session);
    }

    #[test]
    fn render_substitutes_every_placeholder(body in "[a-z ]{0,40}") {
        // Brackets absent from every template make occurrences countable.
        let problem = format!("<<{body}>>");
        for mv in registry().moves() {
            let rendered = mv.render(&problem).unwrap();
            prop_assert_eq!(rendered.matches(&problem).count(), mv.template.placeholder_count());
            prop_assert_eq!(&rendered, &mv.template.as_str().replace("{problem}", &problem));
            let leftover = rendered.contains("{problem}");
            prop_assert!(!leftover);
        }
    }

    #[test]
    fn mock_is_deterministic_and_input_sensitive(
        prompt in "\\PC{1,120}",
        seed in any::<u64>(),
        level in creativity(),
        n in 1u32..=5,
    ) {
        let request = CompletionRequest {
            model_ref: "m".into(),
            prompt: prompt.clone(),
            system_message: None,
            few_shot_preamble: None,
            stop_sequence: None,
            temperature: level.temperature(),
            max_tokens: 64,
            candidate_count: n,
        };
        let a = MockBackend::new(seed).respond(&request).unwrap();
        let b = MockBackend::new(seed).respond(&request).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.candidates.len(), n as usize);
        let echo: String = prompt.chars().take(40).collect();
        for c in &a.candidates {
            prop_assert!(c.starts_with("IDEA("));
            prop_assert_eq!(&c[17..19], "):");
            prop_assert!(c[5..17].bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()));
            let tail = format!("): {echo}");
            prop_assert!(c.ends_with(&tail));
        }
        let other_seed = MockBackend::new(seed.wrapping_add(1)).respond(&request).unwrap();
        prop_assert_ne!(&a.candidates[0], &other_seed.candidates[0]);
        let mut hotter = request.clone();
        hotter.temperature += 0.1;
        let other_temp = MockBackend::new(seed).respond(&hotter).unwrap();
        prop_assert_ne!(&a.candidates[0], &other_temp.candidates[0]);
    }

    #[test]
    fn registry_round_trips_through_json(
        keep in prop::collection::vec(any::<bool>(), 19),
        shuffle in any::<prop::sample::Index>(),
    ) {
        let base = registry().to_document();
        let mut moves: Vec<_> = base
            .moves
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(m, _)| m.clone())
            .collect();
        if !moves.is_empty() {
            let pivot = shuffle.index(moves.len());
            moves.rotate_left(pivot);
        }
        let kept: Vec<String> = moves.iter().map(|m| m.id.clone()).collect();
        let move_sets = base
            .move_sets
            .iter()
            .cloned()
            .map(|mut s| {
                s.move_ids.retain(|id| kept.contains(id));
                s
            })
            .filter(|s| !s.move_ids.is_empty())
            .collect();
        let doc = RegistryDocument { version: "9.9.9".into(), moves, move_sets };
        let reg = MoveRegistry::from_document(doc.clone()).unwrap();
        prop_assert_eq!(reg.to_document(), doc);
        prop_assert_eq!(load_registry(&reg.to_json()).unwrap(), reg);
    }
}
