//! `dupcurate` command line: argument model, config-file merging, run
//! directories and exit codes. Subcommands live in [`commands`].

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dupcurate_core::corpus_io::ParsePolicy;
use serde::Serialize;

pub mod commands;
mod common;

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";
pub const SUMMARY: &str = "summary.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "dupcurate",
    version,
    about = "Near-duplicate detection, duplication statistics and budget-aware resampling for sharded text corpora"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice (and the minhash family).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to all cores. Never changes outputs.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub workers: Option<u16>,
    /// JSON object of flag values. Flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Fail on the first malformed input line (default).
    #[arg(long, global = true, overrides_with = "lenient")]
    pub strict: bool,
    /// Skip malformed input lines and report how many were skipped.
    #[arg(long, global = true, overrides_with = "strict")]
    pub lenient: bool,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,
}

impl GlobalArgs {
    pub fn policy(&self) -> ParsePolicy {
        if self.lenient {
            ParsePolicy::Lenient
        } else {
            ParsePolicy::Strict
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read raw shards, attach scores and write a normalized corpus.
    Ingest(commands::ingest::IngestArgs),
    /// Cluster fuzzy or exact duplicates.
    Dedup(commands::dedup::DedupArgs),
    /// Duplication profile, growth curve and score reports.
    Stats(commands::stats::StatsArgs),
    /// Subsample a corpus (uniform, dedup, duplicate-aware, floor/ceil, epochs).
    Sample(commands::sample::SampleArgs),
    /// Resample to per-document copy counts driven by quality rank.
    Manipulate(commands::manipulate::ManipulateArgs),
    /// Epochs, Chinchilla multiple and weight decay for a token budget.
    Plan(commands::plan::PlanArgs),
    /// Re-check a run directory's outputs against its summary.
    Verify(commands::verify::VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Dedup(_) => "dedup",
            Command::Stats(_) => "stats",
            Command::Sample(_) => "sample",
            Command::Manipulate(_) => "manipulate",
            Command::Plan(_) => "plan",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<dupcurate_core::Error> for CliError {
    fn from(e: dupcurate_core::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Global options that take a value; needed to find the subcommand token.
const VALUED_GLOBALS: [&str; 4] = ["--seed", "--workers", "--config", "--log-level"];

const SUBCOMMANDS: [&str; 7] = ["ingest", "dedup", "stats", "sample", "manipulate", "plan", "verify"];

/// Position of the subcommand token: the first bare word that is not the
/// value of a global option.
fn subcommand_position(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let t = argv[i].to_string_lossy();
        if SUBCOMMANDS.contains(&t.as_ref()) {
            return Some(i);
        }
        if VALUED_GLOBALS.contains(&t.as_ref()) {
            i += 1;
        }
        i += 1;
    }
    None
}

/// Value of the last `--config` option, if any.
fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut found = None;
    let mut it = argv.iter().skip(1);
    while let Some(t) = it.next() {
        let t = t.to_string_lossy();
        if t == "--" {
            break;
        }
        if t == "--config" {
            found = it.next().map(PathBuf::from);
        } else if let Some(v) = t.strip_prefix("--config=") {
            found = Some(PathBuf::from(v));
        }
    }
    found
}

/// Turn a JSON config object into flag tokens, skipping flags the user gave
/// explicitly.
fn config_tokens(path: &Path, user: &[OsString]) -> CliResult<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: invalid config: {e}", path.display())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::Usage(format!("{}: config must be a JSON object", path.display())))?;
    let given = |flag: &str| {
        user.iter().any(|t| {
            let t = t.to_string_lossy();
            t == flag || t.starts_with(&format!("{flag}="))
        })
    };
    let mut out = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || given(&flag) {
            continue;
        }
        // The parse-policy pair counts as one setting.
        if (flag == "--strict" && given("--lenient")) || (flag == "--lenient" && given("--strict")) {
            continue;
        }
        let scalar = |v: &serde_json::Value| -> CliResult<String> {
            match v {
                serde_json::Value::String(s) => Ok(s.clone()),
                serde_json::Value::Number(n) => Ok(n.to_string()),
                other => Err(CliError::Usage(format!("config key {key}: unsupported value {other}"))),
            }
        };
        match v {
            serde_json::Value::Bool(true) => out.push(flag.into()),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::Array(items) => {
                if !items.is_empty() {
                    out.push(flag.into());
                    for item in items {
                        out.push(scalar(item)?.into());
                    }
                }
            }
            other => {
                out.push(flag.into());
                out.push(scalar(other)?.into());
            }
        }
    }
    Ok(out)
}

/// Parse `argv`, merging `--config`. `Err` carries the exit code after the
/// message has been printed.
pub fn parse(argv: Vec<OsString>) -> std::result::Result<Cli, i32> {
    let report = |e: clap::Error| {
        let _ = e.print();
        if e.use_stderr() {
            EXIT_USAGE
        } else {
            EXIT_OK
        }
    };
    // Config values may supply required flags, so merge before parsing.
    let (Some(config), Some(pos)) = (config_path(&argv), subcommand_position(&argv)) else {
        return Cli::try_parse_from(&argv).map_err(report);
    };
    let extra = config_tokens(&config, &argv[1..]).map_err(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })?;
    // Config values go right after the subcommand, ahead of every user flag.
    let mut merged = vec![argv[0].clone(), argv[pos].clone()];
    merged.extend(extra);
    merged.extend(argv[1..pos].iter().cloned());
    merged.extend(argv[pos + 1..].iter().cloned());
    Cli::try_parse_from(merged).map_err(report)
}

fn init_logging(level: LogLevel) {
    let filter = match level {
        LogLevel::Error => log::LevelFilter::Error,
        LogLevel::Warn => log::LevelFilter::Warn,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
    log::set_max_level(filter);
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest(a) => commands::ingest::run(g, a),
        Command::Dedup(a) => commands::dedup::run(g, a),
        Command::Stats(a) => commands::stats::run(g, a),
        Command::Sample(a) => commands::sample::run(g, a),
        Command::Manipulate(a) => commands::manipulate::run(g, a),
        Command::Plan(a) => commands::plan::run(g, a),
        Command::Verify(a) => commands::verify::run(g, a),
    }
}

/// Run the CLI on `args` (including the program name) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse(argv) {
        Ok(c) => c,
        Err(code) => return code,
    };
    init_logging(cli.global.log_level);
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.workers.map_or(0, usize::from))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_IO;
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
