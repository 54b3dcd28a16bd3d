//! `kahm` — command-line pipeline around the `kahm` library.
//!
//! Subcommands cover the full workflow: `gen-synth` writes a synthetic
//! benchmark to disk, `train` fits one encoder per law and saves a registry,
//! `evaluate` routes queries, searches a corpus, and reports retrieval
//! metrics with bootstrap intervals, and `ablate-clusters` sweeps the
//! cluster-count knob and reports encoder quality per setting.
//!
//! Exit codes: 0 on success, 2 for validation errors (bad flags or
//! preconditions the caller can fix), 3 for data errors (missing, malformed,
//! or inconsistent files), 4 for numerical failures during model fitting.
//! On failure a one-line JSON error record is written to stderr.

mod ablate;
mod common;
mod evaluate;
mod gen_synth;
mod manifest;
mod train;

use clap::{Parser, Subcommand};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Terminal error carried up to `main`: a message plus the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: i32,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { message: message.into(), code: EXIT_VALIDATION }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { message: message.into(), code: EXIT_DATA }
    }

    pub fn category(&self) -> &'static str {
        match self.code {
            EXIT_VALIDATION => "validation",
            EXIT_DATA => "data",
            EXIT_NUMERICAL => "numerical",
            _ => "error",
        }
    }

    /// Prefix the message with a context fragment (e.g. the law or file the
    /// failure belongs to) without changing the exit code.
    pub fn context(mut self, ctx: impl AsRef<str>) -> Self {
        self.message = format!("{}: {}", ctx.as_ref(), self.message);
        self
    }
}

impl From<kahm::Error> for CliError {
    fn from(err: kahm::Error) -> Self {
        use kahm::Error::*;
        let code = match &err {
            // Caller-fixable preconditions: bad flag values, impossible
            // requests against otherwise well-formed data.
            InvalidArgument(_) | TooFewSamples { .. } | CutoffTooLarge { .. } | EmptyInput
            | EmptyRegistry => EXIT_VALIDATION,
            // Broken or inconsistent inputs on disk.
            Io(_) | MalformedManifest(_) | SizeMismatch { .. } | NonFiniteValue { .. }
            | BadMagic | VersionUnsupported(_) | CorruptSection(_) | DuplicateId(_)
            | DuplicateLaw(_) | ZeroRow(_) | EmptyQuery | MissingPrior(_) | NoNeighbor => {
                EXIT_DATA
            }
            // Model fitting went numerically wrong.
            DegenerateData | SingularCovariance | NoConvergence(_) | ZeroData
            | UnstableDenominator(_) => EXIT_NUMERICAL,
        };
        CliError { message: err.to_string(), code }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError { message: format!("i/o error: {err}"), code: EXIT_DATA }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError { message: format!("json error: {err}"), code: EXIT_DATA }
    }
}

/// Extension trait so command code can bolt context onto any fallible call.
pub trait ResultExt<T> {
    fn ctx(self, ctx: impl AsRef<str>) -> Result<T, CliError>;
}

impl<T, E: Into<CliError>> ResultExt<T> for Result<T, E> {
    fn ctx(self, ctx: impl AsRef<str>) -> Result<T, CliError> {
        self.map_err(|e| e.into().context(ctx))
    }
}

#[derive(Parser)]
#[command(
    name = "kahm",
    version,
    about = "Train, route, and evaluate kernel affine hull encoders over a frozen embedding space"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-law benchmark (training bundles, test
    /// queries, and a retrieval corpus) under an output directory.
    GenSynth(gen_synth::GenSynthArgs),
    /// Train one encoder per law from training bundles and save a registry.
    Train(train::TrainArgs),
    /// Route queries, search the corpus, and report retrieval metrics.
    Evaluate(evaluate::EvaluateArgs),
    /// Sweep cluster counts and report encoder quality per setting.
    AblateClusters(ablate::AblateArgs),
}

/// Dies quietly when stdout closes early (e.g. piping into `head`) instead
/// of panicking on the broken pipe.
#[cfg(unix)]
fn restore_default_sigpipe() {
    // SAFETY: installing the default disposition for SIGPIPE has no
    // preconditions; nothing else has touched signal handlers yet.
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn restore_default_sigpipe() {}

fn main() {
    restore_default_sigpipe();
    let invocation: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(args) => gen_synth::run(args, &invocation),
        Command::Train(args) => train::run(args, &invocation),
        Command::Evaluate(args) => evaluate::run(args, &invocation),
        Command::AblateClusters(args) => ablate::run(args, &invocation),
    };
    if let Err(err) = result {
        let record = serde_json::json!({
            "error": err.message,
            "category": err.category(),
            "exit_code": err.code,
        });
        eprintln!("{record}");
        std::process::exit(err.code);
    }
}
