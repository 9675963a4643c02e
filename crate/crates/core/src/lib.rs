//! Move-based orchestration of LLM idea generation.
//!
//! * [`moves`]: the move registry, prompt templates and creativity scale.
//! * [`llm`]: the completion contract plus mock and HTTP backends.
//! * [`session`]: idea threads with ratings, bookmarks, persistence, export.
//! * [`engine`]: runs moves and move sets into a session.
//! * [`corpus`]: case corpus validation and fine-tune file emission.

pub mod corpus;
pub mod engine;
pub mod llm;
pub mod moves;
pub mod session;

pub use engine::{BatchOutcome, Ideator, MoveBatch, MoveFailure, RunError};
pub use llm::{
    build_request, BackendConfig, BackendKind, CompletionBackend, CompletionRequest,
    CompletionResponse, GenerationSettings, LlmError, MockBackend,
};
pub use moves::{
    creativity_to_temperature, load_registry, render_prompt, CreativityLevel, Move, MoveCategory,
    MoveId, MoveRegistry, MoveSet, PromptingMode, DEFAULT_IDEAS_PER_MOVE, FICTITIOUS_LABEL,
    MAX_PROBLEM_CHARS,
};
pub use session::{
    export_transcript, ExportOptions, IdeaRecord, Rating, Session, SessionStore, Sources,
};
