//! The `ideator` command line.
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 when the
//! completion backend fails.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ideator_core::corpus::{self, CorpusStats};
use ideator_core::llm::{connect, RetryPolicy, DEFAULT_TIMEOUT_MS};
use ideator_core::session::{read_session_file, write_session_file, StoreError};
use ideator_core::{
    export_transcript, BackendConfig, BackendKind, BatchOutcome, CreativityLevel, ExportOptions,
    GenerationSettings, Ideator, MoveCategory, MoveRegistry, Rating, RunError, Session, Sources,
    DEFAULT_IDEAS_PER_MOVE,
};
use ideator_server::{ApiConfig, MoveView};
use uuid::Uuid;

#[derive(Debug, Parser)]
#[command(
    name = "ideator",
    version,
    about = "Move-based idea generation with LLMs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect the move registry.
    Moves {
        #[command(subcommand)]
        command: MovesCommand,
    },
    /// Run moves or a move set against a problem.
    Run(Box<RunArgs>),
    /// Work with saved session files.
    Session {
        #[command(subcommand)]
        command: SessionCommand,
    },
    /// Validate case corpora and emit fine-tune training files.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Start the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    /// One JSON object per line.
    Machine,
}

#[derive(Debug, Subcommand)]
pub enum MovesCommand {
    List {
        /// Only moves of this category; repeat to include several.
        #[arg(long, value_parser = parse_category)]
        category: Vec<MoveCategory>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long, env = "IDEATOR_REGISTRY")]
        registry: Option<PathBuf>,
    },
}

fn parse_category(s: &str) -> Result<MoveCategory, String> {
    s.parse()
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse()
}

fn parse_creativity(s: &str) -> Result<CreativityLevel, String> {
    s.parse()
}

fn parse_rating(s: &str) -> Result<Rating, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// mock, remote-chat or remote-completion.
    #[arg(long, env = "IDEATOR_BACKEND", value_parser = parse_backend)]
    pub backend: Option<BackendKind>,
    #[arg(long, env = "IDEATOR_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the provider token.
    #[arg(long, env = "IDEATOR_CREDENTIAL_ENV")]
    pub credential_env: Option<String>,
    #[arg(long, env = "IDEATOR_MOCK_SEED")]
    pub mock_seed: Option<u64>,
    #[arg(long, env = "IDEATOR_TIMEOUT_MS", default_value_t = DEFAULT_TIMEOUT_MS)]
    pub timeout_ms: u64,
    /// Model for zero-shot and few-shot moves.
    #[arg(long, env = "IDEATOR_MODEL")]
    pub model: Option<String>,
    /// Provider model for a fine-tune reference, as REF=MODEL. Repeatable.
    #[arg(long = "finetuned-model", value_name = "REF=MODEL")]
    pub finetuned_models: Vec<String>,
}

impl BackendArgs {
    pub fn backend_config(&self) -> Result<BackendConfig, CliError> {
        let kind = self.backend.unwrap_or(BackendKind::Mock);
        let config = if kind.is_remote() {
            BackendConfig {
                kind,
                endpoint_url: self.endpoint.clone(),
                credential_env: self.credential_env.clone(),
                timeout_ms: self.timeout_ms,
                retry: RetryPolicy::default(),
                seed: None,
            }
        } else {
            BackendConfig {
                timeout_ms: self.timeout_ms,
                ..BackendConfig::mock(self.mock_seed.unwrap_or(0))
            }
        };
        config
            .validate()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        Ok(config)
    }

    pub fn generation(&self) -> Result<GenerationSettings, CliError> {
        let mut settings = GenerationSettings::default();
        if let Some(model) = &self.model {
            settings.default_model = model.clone();
        }
        for pair in &self.finetuned_models {
            let (reference, model) = pair
                .split_once('=')
                .filter(|(r, m)| !r.is_empty() && !m.is_empty())
                .ok_or_else(|| {
                    CliError::Invalid(format!("--finetuned-model {pair:?} is not REF=MODEL"))
                })?;
            settings
                .finetuned_models
                .insert(reference.to_owned(), model.to_owned());
        }
        Ok(settings)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// The problem statement. Optional when --session names an existing file.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long, conflicts_with = "moves", required_unless_present = "moves")]
    pub set: Option<String>,
    /// A move to run; repeat to run several in the given order.
    #[arg(long = "move", value_name = "ID")]
    pub moves: Vec<String>,
    #[arg(long, default_value = "medium", value_parser = parse_creativity)]
    pub creativity: CreativityLevel,
    /// Ideas per move.
    #[arg(long, default_value_t = DEFAULT_IDEAS_PER_MOVE)]
    pub count: u32,
    /// Session file to create or extend.
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// Re-run on this idea of the session instead of the problem.
    #[arg(long, requires = "session")]
    pub target: Option<Uuid>,
    /// Sequential ids and a fixed clock, for reproducible output.
    #[arg(long, env = "IDEATOR_DETERMINISTIC")]
    pub deterministic: bool,
    #[arg(long, env = "IDEATOR_REGISTRY")]
    pub registry: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Print a Markdown transcript.
    Export {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        bookmarks_only: bool,
        #[arg(long, env = "IDEATOR_REGISTRY")]
        registry: Option<PathBuf>,
    },
    /// Set the rating of one idea.
    Rate {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        idea: Uuid,
        #[arg(long, value_parser = parse_rating)]
        rating: Rating,
    },
    /// Bookmark one idea, or clear its bookmark with --off.
    Bookmark {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        idea: Uuid,
        #[arg(long)]
        off: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Report every invalid line.
    Validate { file: PathBuf },
    /// Write the fine-tune training file for a valid corpus.
    Emit {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count records per move label.
    Stats {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Invalid(_) => 1,
            Self::Backend(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Invalid(m) | Self::Backend(m) => m,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Backend(_) => Self::Backend(e.to_string()),
            other => Self::Invalid(other.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        Self::Invalid(e.to_string())
    }
}

fn io(context: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Invalid(format!("{}: {e}", context.display()))
}

/// Runs a parsed command, returning the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Moves { command } => moves(command, out),
        Command::Run(args) => run_moves(*args, out, err),
        Command::Session { command } => session(command, out),
        Command::Corpus { command } => corpus_cmd(command, out, err),
        Command::Serve { config } => serve(&config),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn load_registry(path: Option<&Path>) -> Result<MoveRegistry, CliError> {
    match path {
        Some(p) => MoveRegistry::from_path(p).map_err(|e| CliError::Invalid(e.to_string())),
        None => Ok(MoveRegistry::builtin().clone()),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Invalid(format!("stdout: {e}")))
}

fn moves(command: MovesCommand, out: &mut dyn Write) -> Result<u8, CliError> {
    let MovesCommand::List {
        category,
        format,
        registry,
    } = command;
    let registry = load_registry(registry.as_deref())?;
    let rows: Vec<MoveView> = registry
        .moves()
        .filter(|m| category.is_empty() || category.contains(&m.category))
        .map(MoveView::from)
        .collect();
    let text = match format {
        Format::Machine => rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("move view serializes") + "\n")
            .collect(),
        Format::Table => moves_table(&rows),
    };
    write_out(out, &text)?;
    Ok(0)
}

/// Columns are separated by at least two spaces; no cell contains two
/// consecutive spaces, so rows can be split back into cells.
pub fn moves_table(rows: &[MoveView]) -> String {
    let header = ["ID", "NAME", "CATEGORY", "MODE", "FICTITIOUS", "QUESTION"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.id.clone(),
                r.name.clone(),
                r.category.clone(),
                r.prompting_mode.clone(),
                if r.fictitious { "yes" } else { "no" }.to_owned(),
                r.question.clone(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |row: &[&str]| {
        let mut s = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i + 1 == row.len() {
                s.push_str(cell);
            } else {
                s.push_str(&format!("{cell:<width$}  ", width = widths[i]));
            }
        }
        s.push('\n');
        s
    };
    let mut text = line(&header);
    for row in &cells {
        text.push_str(&line(&row.each_ref().map(String::as_str)));
    }
    text
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Invalid(format!("async runtime: {e}")))
}

fn run_moves(args: RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    if args.count == 0 {
        return Err(CliError::Invalid("--count must be at least 1".into()));
    }
    let registry = load_registry(args.registry.as_deref())?;
    let backend_config = args.backend.backend_config()?;
    let settings = args.backend.generation()?;
    let backend = connect(&backend_config).map_err(|e| CliError::Invalid(e.to_string()))?;

    let existing = match &args.session {
        Some(path) if path.exists() => Some(read_session_file(path)?),
        _ => None,
    };
    if let (Some(session), Some(problem)) = (&existing, &args.problem) {
        if session.problem() != problem.trim() {
            return Err(CliError::Invalid(format!(
                "--problem differs from the problem stored in {}",
                args.session.as_deref().unwrap_or(Path::new("")).display()
            )));
        }
    }
    let sources = match (&existing, args.deterministic) {
        (_, false) => Sources::system(),
        (None, true) => Sources::deterministic(),
        (Some(s), true) => Sources::deterministic_after(s.ideas().len() as u64 + 1),
    };
    let ideator = Ideator::new(Arc::new(registry), backend, settings, sources);
    let mut session = match existing {
        Some(s) => s,
        None => {
            let problem = args.problem.as_deref().ok_or_else(|| {
                CliError::Invalid("--problem is required for a new session".into())
            })?;
            ideator
                .create_session(problem)
                .map_err(|e| CliError::Invalid(e.to_string()))?
        }
    };

    let rt = runtime()?;
    let outcome: BatchOutcome = rt.block_on(async {
        match &args.set {
            Some(set) => {
                ideator
                    .run_move_set(&mut session, set, args.target, args.creativity, args.count)
                    .await
            }
            None => {
                ideator
                    .run_moves(
                        &mut session,
                        &args.moves,
                        args.target,
                        args.creativity,
                        args.count,
                    )
                    .await
            }
        }
    })?;

    write_out(out, &render_outcome(ideator.registry(), &outcome))?;
    for batch in &outcome.batches {
        if let Some(w) = &batch.warning {
            let _ = writeln!(err, "warning: {}: {w}", batch.move_id);
        }
    }
    if let Some(path) = &args.session {
        if !outcome.batches.is_empty() || !path.exists() {
            write_session_file(path, &session)?;
        }
    }
    match outcome.failure {
        None => Ok(0),
        Some(f) => Err(CliError::from(f.error)).map_err(|e| match e {
            CliError::Backend(m) => CliError::Backend(format!("move {}: {m}", f.move_id)),
            other => other,
        }),
    }
}

/// Ideas grouped by move, one block per move.
pub fn render_outcome(registry: &MoveRegistry, outcome: &BatchOutcome) -> String {
    let mut text = String::new();
    for batch in &outcome.batches {
        let name = registry
            .get(batch.move_id.as_str())
            .map_or(batch.move_id.as_str(), |m| m.display_name.as_str());
        text.push_str(&format!("=== {name} ({}) ===\n", batch.move_id));
        for idea in &batch.ideas {
            text.push_str(&format!("* {}\n", idea.id));
            for line in idea.display_text().lines() {
                text.push_str(&format!("  {line}\n"));
            }
        }
        text.push('\n');
    }
    text
}

fn session(command: SessionCommand, out: &mut dyn Write) -> Result<u8, CliError> {
    match command {
        SessionCommand::Export {
            session,
            bookmarks_only,
            registry,
        } => {
            let registry = load_registry(registry.as_deref())?;
            let session = read_session_file(&session)?;
            let text =
                export_transcript(&session, Some(&registry), ExportOptions { bookmarks_only });
            write_out(out, &text)?;
        }
        SessionCommand::Rate {
            session: path,
            idea,
            rating,
        } => {
            update(&path, |s| s.rate(idea, rating).map(|_| ()))?;
            write_out(out, &format!("{idea} rating {rating}\n"))?;
        }
        SessionCommand::Bookmark {
            session: path,
            idea,
            off,
        } => {
            update(&path, |s| s.set_bookmark(idea, !off).map(|_| ()))?;
            let state = if off { "cleared" } else { "set" };
            write_out(out, &format!("{idea} bookmark {state}\n"))?;
        }
    }
    Ok(0)
}

fn update(
    path: &Path,
    op: impl FnOnce(&mut Session) -> Result<(), ideator_core::session::SessionError>,
) -> Result<(), CliError> {
    let mut session = read_session_file(path)?;
    op(&mut session).map_err(|e| CliError::Invalid(e.to_string()))?;
    write_session_file(path, &session)?;
    Ok(())
}

fn corpus_cmd(
    command: CorpusCommand,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, CliError> {
    let ingest = |file: &Path| corpus::ingest(file).map_err(|e| CliError::Invalid(e.to_string()));
    match command {
        CorpusCommand::Validate { file } => {
            let report = ingest(&file)?;
            for issue in &report.issues {
                write_out(out, &format!("{}: {issue}\n", file.display()))?;
            }
            let _ = writeln!(
                err,
                "{} valid records, {} issues",
                report.records.len(),
                report.issues.len()
            );
            Ok(u8::from(!report.issues.is_empty()))
        }
        CorpusCommand::Emit { file, out: target } => {
            let report = ingest(&file)?;
            if !report.issues.is_empty() {
                for issue in &report.issues {
                    let _ = writeln!(err, "{}: {issue}", file.display());
                }
                return Err(CliError::Invalid(format!(
                    "{} has {} issues; nothing written",
                    file.display(),
                    report.issues.len()
                )));
            }
            let doc = corpus::emit_training_file(&report.records)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            std::fs::write(&target, doc).map_err(io(&target))?;
            let _ = writeln!(
                err,
                "wrote {} examples to {}",
                report.records.len(),
                target.display()
            );
            Ok(0)
        }
        CorpusCommand::Stats { file, format } => {
            let report = ingest(&file)?;
            if !report.issues.is_empty() {
                let _ = writeln!(
                    err,
                    "warning: {} invalid lines skipped; run `corpus validate` for details",
                    report.issues.len()
                );
            }
            let stats = corpus::stats(&report.records);
            write_out(out, &render_stats(&stats, format))?;
            Ok(0)
        }
    }
}

fn render_stats(stats: &CorpusStats, format: Format) -> String {
    match format {
        Format::Machine => serde_json::to_string(stats).expect("stats serialize") + "\n",
        Format::Table => {
            let width = stats
                .counts
                .keys()
                .map(String::len)
                .max()
                .unwrap_or(0)
                .max(5);
            let mut text: String = stats
                .counts
                .iter()
                .map(|(label, n)| format!("{label:<width$}  {n}\n"))
                .collect();
            text.push_str(&format!("{:<width$}  {}\n", "total", stats.total));
            text
        }
    }
}

fn serve(config: &Path) -> Result<u8, CliError> {
    let config = ApiConfig::from_path(config).map_err(|e| CliError::Invalid(e.to_string()))?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let rt = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Invalid(format!("async runtime: {e}")))?;
    rt.block_on(ideator_server::serve(&config))
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(0)
}
