//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 backend failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::orchestrator::{write_report, BackendSpec, Study, StudyConfig, StudyError};
use crate::report::{analyze, build_review_table, AnalyzeOptions, ReportFormat};
use crate::stats::{DEFAULT_BOOTSTRAP_SAMPLES, DEFAULT_LEVEL};
use crate::store::{StoreContents, StoreError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mcq-consensus", version, about = "Validate multiple-choice answers through multi-model consensus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the question-generation phase of every rotation block.
    Generate(StudyArgs),
    /// Run the answering phase over the questions already stored.
    Answer(StudyArgs),
    /// Run the full study and write the report.
    Run(RunArgs),
    /// Compute statistics and the report from an existing record store.
    Analyze(AnalyzeArgs),
    /// Run a full study with scripted agents (no network).
    Simulate(SimulateArgs),
    /// Check record-store integrity.
    Validate(ValidateArgs),
    /// Export every question with its key, answers and outcome for manual review.
    Review(ReviewArgs),
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Record-store directory (overrides the config).
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap resamples.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Confidence level of the bootstrap intervals.
    #[arg(long)]
    level: Option<f64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Md)]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    records: Option<PathBuf>,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    records: PathBuf,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Study config whose models are all scripted; four default agents when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    records: Option<PathBuf>,
    /// Questions per generator (default agents only).
    #[arg(long, default_value_t = 25)]
    questions: usize,
    #[command(flatten)]
    report: ReportArgs,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    records: PathBuf,
}

#[derive(Debug, Args)]
struct ReviewArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Md)]
    format: FormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Md,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Md => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

fn exit_code(e: &StudyError) -> i32 {
    match e {
        StudyError::Backend { .. } => EXIT_BACKEND,
        _ => EXIT_DATA,
    }
}

fn apply_report_args(config: &mut StudyConfig, args: &ReportArgs) {
    if let Some(out) = &args.out {
        config.report_path = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(b) = args.bootstrap {
        config.bootstrap_samples = b;
    }
    if let Some(l) = args.level {
        config.level = l;
    }
}

fn load_config(path: &Path, records: &Option<PathBuf>) -> Result<StudyConfig, StudyError> {
    let mut config = StudyConfig::load(path)?;
    if let Some(r) = records {
        config.records_dir = r.clone();
    }
    Ok(config)
}

fn run_study(config: StudyConfig, format: ReportFormat, out: &mut dyn Write) -> Result<(), StudyError> {
    config.check()?;
    let study = Study::from_config(config)?;
    let outcome = study.run_full_study(format)?;
    let _ = writeln!(
        out,
        "study complete: {} records ({} excluded), report written to {}",
        outcome.records.len(),
        outcome.exclusions,
        study.config().report_path.display()
    );
    Ok(())
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), StudyError> {
    match command {
        Command::Generate(args) => {
            let mut config = load_config(&args.config, &args.records)?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            let questions = Study::from_config(config)?.run_generation()?;
            let _ = writeln!(out, "{} questions stored", questions.len());
        }
        Command::Answer(args) => {
            let mut config = load_config(&args.config, &args.records)?;
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            let records = Study::from_config(config)?.run_answering()?;
            let _ = writeln!(out, "{} records stored", records.len());
        }
        Command::Run(args) => {
            let mut config = load_config(&args.config, &args.records)?;
            apply_report_args(&mut config, &args.report);
            run_study(config, args.report.format.into(), out)?;
        }
        Command::Simulate(args) => {
            let mut config = match &args.config {
                Some(path) => {
                    let config = load_config(path, &args.records)?;
                    if let Some(m) = config.models.iter().find(|m| matches!(m.backend, BackendSpec::Http(_))) {
                        return Err(StudyError::Config(format!(
                            "simulate needs scripted backends, but {} uses http",
                            m.id
                        )));
                    }
                    config
                }
                None => StudyConfig::scripted_default(args.report.seed.unwrap_or(0), args.questions),
            };
            if let Some(r) = &args.records {
                config.records_dir = r.clone();
            }
            apply_report_args(&mut config, &args.report);
            run_study(config, args.report.format.into(), out)?;
        }
        Command::Analyze(args) => {
            let r = &args.report;
            let options = AnalyzeOptions {
                seed: r.seed.unwrap_or(0),
                bootstrap_samples: r.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP_SAMPLES),
                level: r.level.unwrap_or(DEFAULT_LEVEL),
            };
            if options.bootstrap_samples == 0 || !(options.level > 0.0 && options.level < 1.0) {
                return Err(StudyError::Config("--bootstrap must be positive and --level in (0, 1)".into()));
            }
            let records = StoreContents::load(&args.records)?.records()?;
            let report = analyze(&records, &options)?;
            match &r.out {
                Some(path) => {
                    write_report(path, &report, r.format.into())?;
                    let _ = writeln!(out, "report written to {}", path.display());
                }
                None => {
                    let _ = out.write_all(report.render(r.format.into()).as_bytes());
                }
            }
        }
        Command::Review(args) => {
            let records = StoreContents::load(&args.records)?.records()?;
            let table = build_review_table(&records)?;
            let text = match args.format {
                FormatArg::Md => table.to_markdown(),
                FormatArg::Csv => table.to_csv(),
            };
            match &args.out {
                Some(path) => {
                    std::fs::write(path, text).map_err(|source| StoreError::Io { path: path.clone(), source })?;
                    let _ = writeln!(out, "{} questions written to {}", records.len(), path.display());
                }
                None => {
                    let _ = out.write_all(text.as_bytes());
                }
            }
        }
        Command::Validate(args) => {
            let contents = StoreContents::load(&args.records)?;
            let issues = contents.integrity();
            if !issues.is_empty() {
                return Err(StoreError::Integrity(issues).into());
            }
            let _ = writeln!(
                out,
                "ok: {} questions, {} answers, {} records",
                contents.questions.len(),
                contents.answers.len(),
                contents.entries.len()
            );
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn cli_main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_cli(std::iter::once("mcq-consensus").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run(&["analyze", "--records", "x", "--bogus"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--bogus"));
        assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run(&["analyze", "--format", "xml", "--records", "x"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("simulate"));
    }

    #[test]
    fn missing_config_is_data_error() {
        let (code, _, err) = run(&["run", "--config", "/nonexistent/study.json"]);
        assert_eq!(code, EXIT_DATA);
        assert!(err.contains("study.json"));
    }
}
