//! Runs moves against a backend and records the results in a session.

use std::sync::Arc;

use thiserror::Error;
use uuid::Uuid;

use crate::llm::{build_request, CompletionBackend, GenerationSettings, LlmError, RequestError};
use crate::moves::{CreativityLevel, Move, MoveId, MoveRegistry, ProblemError};
use crate::session::{IdeaRecord, Rating, Session, SessionError, Sources};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("unknown move {0:?}")]
    UnknownMove(String),
    #[error("unknown move set {0:?}")]
    UnknownSet(String),
    #[error("unknown target idea {0}")]
    UnknownTarget(Uuid),
    #[error("no moves selected")]
    EmptySelection,
    #[error(transparent)]
    Request(#[from] RequestError),
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl From<ProblemError> for RunError {
    fn from(e: ProblemError) -> Self {
        Self::Request(RequestError::Problem(e))
    }
}

/// Ideas appended for one move of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveBatch {
    pub move_id: MoveId,
    pub ideas: Vec<IdeaRecord>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoveFailure {
    pub move_id: MoveId,
    pub error: RunError,
}

/// Outcome of running several moves. Moves before a failure keep their
/// appended ideas; moves after it are not attempted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOutcome {
    pub batches: Vec<MoveBatch>,
    pub failure: Option<MoveFailure>,
}

impl BatchOutcome {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn idea_count(&self) -> usize {
        self.batches.iter().map(|b| b.ideas.len()).sum()
    }
}

pub struct Ideator {
    registry: Arc<MoveRegistry>,
    backend: Arc<dyn CompletionBackend>,
    settings: GenerationSettings,
    sources: Sources,
}

impl Ideator {
    pub fn new(
        registry: Arc<MoveRegistry>,
        backend: Arc<dyn CompletionBackend>,
        settings: GenerationSettings,
        sources: Sources,
    ) -> Self {
        Self {
            registry,
            backend,
            settings,
            sources,
        }
    }

    pub fn registry(&self) -> &MoveRegistry {
        &self.registry
    }

    pub fn backend(&self) -> &Arc<dyn CompletionBackend> {
        &self.backend
    }

    pub fn settings(&self) -> &GenerationSettings {
        &self.settings
    }

    pub fn sources(&self) -> &Sources {
        &self.sources
    }

    pub fn create_session(&self, problem: &str) -> Result<Session, ProblemError> {
        Session::create(problem, self.registry.version(), &self.sources)
    }

    fn input_for(&self, session: &Session, target: Option<Uuid>) -> Result<String, RunError> {
        match target {
            None => Ok(session.problem().to_owned()),
            Some(id) => session
                .idea(id)
                .map(|idea| idea.output_text.clone())
                .ok_or(RunError::UnknownTarget(id)),
        }
    }

    async fn generate(
        &self,
        mv: &Move,
        input: &str,
        target: Option<Uuid>,
        creativity: CreativityLevel,
        count: u32,
    ) -> Result<(Vec<IdeaRecord>, Option<String>), RunError> {
        let request = build_request(mv, input, creativity, count, &self.settings)?;
        let response = self.backend.complete(&request).await?;
        let records = response
            .candidates
            .into_iter()
            .map(|text| IdeaRecord {
                id: self.sources.ids.next_id(),
                parent_id: target,
                move_id: mv.id.clone(),
                input_text: input.to_owned(),
                output_text: text,
                fictitious_label: mv.fictitious,
                rating: Rating::Unrated,
                bookmarked: false,
                temperature: request.temperature,
                model_ref: response.model_ref.clone(),
                created_at: self.sources.clock.now(),
            })
            .collect();
        Ok((records, response.warning))
    }

    /// Runs one move. Nothing is appended unless the whole call succeeds.
    pub async fn run_move(
        &self,
        session: &mut Session,
        move_id: &str,
        target: Option<Uuid>,
        creativity: CreativityLevel,
        count: u32,
    ) -> Result<Vec<IdeaRecord>, RunError> {
        let mv = self
            .registry
            .get(move_id)
            .ok_or_else(|| RunError::UnknownMove(move_id.to_owned()))?;
        let input = self.input_for(session, target)?;
        let (records, _) = self.generate(mv, &input, target, creativity, count).await?;
        session.append(records.clone())?;
        Ok(records)
    }

    /// Runs a registry move set in its declared order.
    pub async fn run_move_set(
        &self,
        session: &mut Session,
        set_id: &str,
        target: Option<Uuid>,
        creativity: CreativityLevel,
        count_per_move: u32,
    ) -> Result<BatchOutcome, RunError> {
        let moves = self
            .registry
            .resolve_move_set(set_id)
            .map_err(|e| RunError::UnknownSet(e.0))?;
        self.run_resolved(session, &moves, target, creativity, count_per_move)
            .await
    }

    /// Runs an ad-hoc selection in the order given.
    pub async fn run_moves<S: AsRef<str>>(
        &self,
        session: &mut Session,
        move_ids: &[S],
        target: Option<Uuid>,
        creativity: CreativityLevel,
        count_per_move: u32,
    ) -> Result<BatchOutcome, RunError> {
        if move_ids.is_empty() {
            return Err(RunError::EmptySelection);
        }
        let moves = self
            .registry
            .resolve_moves(move_ids)
            .map_err(|e| RunError::UnknownMove(e.0))?;
        self.run_resolved(session, &moves, target, creativity, count_per_move)
            .await
    }

    async fn run_resolved(
        &self,
        session: &mut Session,
        moves: &[&Move],
        target: Option<Uuid>,
        creativity: CreativityLevel,
        count: u32,
    ) -> Result<BatchOutcome, RunError> {
        // Checked up front so an invalid call leaves the session untouched.
        let input = self.input_for(session, target)?;
        if count == 0 {
            return Err(RequestError::ZeroCount.into());
        }
        crate::moves::ProblemStatement::parse(&input)?;

        let mut outcome = BatchOutcome::default();
        for mv in moves {
            let result = self
                .generate(mv, &input, target, creativity, count)
                .await
                .and_then(|(records, warning)| {
                    session.append(records.clone())?;
                    Ok((records, warning))
                });
            match result {
                Ok((ideas, warning)) => outcome.batches.push(MoveBatch {
                    move_id: mv.id.clone(),
                    ideas,
                    warning,
                }),
                Err(error) => {
                    outcome.failure = Some(MoveFailure {
                        move_id: mv.id.clone(),
                        error,
                    });
                    break;
                }
            }
        }
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CompletionRequest, CompletionResponse, MockBackend};
    use async_trait::async_trait;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Fails every call after the first `ok_calls`.
    struct FlakyBackend {
        ok_calls: usize,
        calls: AtomicUsize,
    }

    #[async_trait]
    impl CompletionBackend for FlakyBackend {
        fn backend_id(&self) -> &str {
            "flaky"
        }

        async fn complete(
            &self,
            request: &CompletionRequest,
        ) -> Result<CompletionResponse, LlmError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) < self.ok_calls {
                MockBackend::new(0).respond(request)
            } else {
                Err(LlmError::ProviderRejected {
                    status: 503,
                    message: "overloaded".into(),
                })
            }
        }
    }

    fn ideator(backend: Arc<dyn CompletionBackend>) -> Ideator {
        Ideator::new(
            Arc::new(MoveRegistry::builtin().clone()),
            backend,
            GenerationSettings::default(),
            Sources::deterministic(),
        )
    }

    fn block_on<F: std::future::Future>(f: F) -> F::Output {
        tokio::runtime::Builder::new_current_thread()
            .build()
            .unwrap()
            .block_on(f)
    }

    #[test]
    fn reflect_on_fresh_session() {
        let ideator = ideator(Arc::new(MockBackend::new(42)));
        let mut s = ideator
            .create_session("I want to reduce customer churn")
            .unwrap();
        let ideas =
            block_on(ideator.run_move(&mut s, "reflect", None, CreativityLevel::Low, 1)).unwrap();
        assert_eq!(ideas.len(), 1);
        assert_eq!(ideas[0].parent_id, None);
        assert!(!ideas[0].fictitious_label);
        assert_eq!(ideas[0].input_text, "I want to reduce customer churn");
        assert_eq!(ideas[0].temperature, 0.7);
        assert_eq!(s.ideas(), ideas.as_slice());
    }

    #[test]
    fn rerun_on_idea_nests_under_it() {
        let ideator = ideator(Arc::new(MockBackend::new(42)));
        let mut s = ideator.create_session("p").unwrap();
        let first = block_on(ideator.run_move(&mut s, "reflect", None, CreativityLevel::Medium, 1))
            .unwrap();
        let x = &first[0];
        let nested = block_on(ideator.run_move(
            &mut s,
            "groupify-market",
            Some(x.id),
            CreativityLevel::Medium,
            2,
        ))
        .unwrap();
        assert_eq!(nested.len(), 2);
        for idea in &nested {
            assert_eq!(idea.parent_id, Some(x.id));
            assert_eq!(idea.input_text, x.output_text);
            assert!(idea.fictitious_label);
        }
    }

    #[test]
    fn unknown_move_and_target_leave_session_unchanged() {
        let ideator = ideator(Arc::new(MockBackend::new(42)));
        let mut s = ideator.create_session("p").unwrap();
        let before = s.clone();
        assert_eq!(
            block_on(ideator.run_move(&mut s, "unknown-move", None, CreativityLevel::Low, 1)),
            Err(RunError::UnknownMove("unknown-move".into()))
        );
        let ghost = Uuid::from_u128(999);
        assert_eq!(
            block_on(ideator.run_move(&mut s, "reflect", Some(ghost), CreativityLevel::Low, 1)),
            Err(RunError::UnknownTarget(ghost))
        );
        assert_eq!(
            block_on(ideator.run_move_set(&mut s, "nope", None, CreativityLevel::Low, 1)),
            Err(RunError::UnknownSet("nope".into()))
        );
        assert_eq!(
            block_on(ideator.run_moves(
                &mut s,
                &["reflect", "bogus"],
                None,
                CreativityLevel::Low,
                1
            )),
            Err(RunError::UnknownMove("bogus".into()))
        );
        assert_eq!(s, before);
    }

    #[test]
    fn backend_failure_appends_nothing_for_single_move() {
        let ideator = ideator(Arc::new(FlakyBackend {
            ok_calls: 0,
            calls: AtomicUsize::new(0),
        }));
        let mut s = ideator.create_session("p").unwrap();
        let err = block_on(ideator.run_move(&mut s, "reflect", None, CreativityLevel::Low, 3))
            .unwrap_err();
        assert!(matches!(
            err,
            RunError::Backend(LlmError::ProviderRejected { status: 503, .. })
        ));
        assert!(s.ideas().is_empty());
    }

    #[test]
    fn set_failure_keeps_earlier_moves() {
        let ideator = ideator(Arc::new(FlakyBackend {
            ok_calls: 3,
            calls: AtomicUsize::new(0),
        }));
        let mut s = ideator.create_session("p").unwrap();
        let outcome = block_on(ideator.run_move_set(
            &mut s,
            "explore-problem",
            None,
            CreativityLevel::Low,
            2,
        ))
        .unwrap();
        assert_eq!(outcome.batches.len(), 3);
        assert_eq!(s.ideas().len(), 6);
        let failure = outcome.failure.unwrap();
        assert_eq!(failure.move_id, "zoom-out-types");
    }

    #[test]
    fn selection_runs_in_given_order() {
        let ideator = ideator(Arc::new(MockBackend::new(1)));
        let mut s = ideator.create_session("p").unwrap();
        let outcome = block_on(ideator.run_moves(
            &mut s,
            &["technify", "reflect"],
            None,
            CreativityLevel::High,
            1,
        ))
        .unwrap();
        let order: Vec<_> = outcome
            .batches
            .iter()
            .map(|b| b.move_id.to_string())
            .collect();
        assert_eq!(order, ["technify", "reflect"]);
        assert!(outcome.is_complete());
    }
}
