//! Command-line front end. Exit codes: 0 success, 1 I/O or runtime
//! failure, 2 invalid input (bad dump, config or session).

use std::path::{Path, PathBuf};

use chaintest_core::metrics::render_markdown;
use clap::{Parser, Subcommand, ValueEnum};

use crate::analyze::{analyze, minimize_file, AnalyzeError, ChainsFile};
use crate::config::{ConfigError, SessionConfig};
use crate::dump::{load_model, pretty_json, read_json, DumpError};
use crate::report::{render_json, write_reports, ReportError};
use crate::session::{generate, SessionError, SessionOptions};

#[derive(Parser, Debug)]
#[command(name = "chaintest", version, about = "Path-guided unit test generation for Rust crates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Enumerate condition chains for every function of a program-model dump.
    Analyze {
        dump: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Evaluations allowed per branch site along one path.
        #[arg(long, default_value_t = 2)]
        max_occurrences: u32,
        #[arg(long, default_value_t = 4096)]
        max_paths: usize,
    },
    /// Select a covering subset of the chains in a chains file.
    Minimize {
        chains: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Generate, repair and run tests, writing a resumable session.
    Generate {
        dump: PathBuf,
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        parallel: usize,
        #[arg(long)]
        template: Option<PathBuf>,
        /// Use the mock provider with this script.
        #[arg(long)]
        mock_script: Option<PathBuf>,
        /// Use scripted build outcomes instead of the toolchain.
        #[arg(long)]
        stub_runner: Option<PathBuf>,
    },
    /// Rebuild the report of a session and print it.
    Report {
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Md,
}

const INVALID: i32 = 2;
const FAILURE: i32 = 1;

fn dump_code(e: &DumpError) -> i32 {
    match e {
        DumpError::Parse { .. } => INVALID,
        DumpError::Io { .. } => FAILURE,
    }
}

fn config_code(e: &ConfigError) -> i32 {
    match e {
        ConfigError::Read(d) => dump_code(d),
        _ => INVALID,
    }
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

fn print_issues(issues: &[chaintest_core::validate::ValidationIssue]) {
    for i in issues {
        eprintln!("{i}");
    }
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Analyze { dump, out, max_occurrences, max_paths } => cmd_analyze(&dump, &out, max_occurrences, max_paths),
        Command::Minimize { chains, out } => cmd_minimize(&chains, &out),
        Command::Generate { dump, config, out, parallel, template, mock_script, stub_runner } => {
            let opts = SessionOptions { parallel, template, mock_script, stub_runner };
            cmd_generate(&dump, &config, &out, &opts)
        }
        Command::Report { dir, format } => cmd_report(&dir, format),
    }
}

fn cmd_analyze(dump: &Path, out: &Path, max_occurrences: u32, max_paths: usize) -> i32 {
    if max_occurrences == 0 {
        return fail(INVALID, "--max-occurrences must be at least 1");
    }
    let model = match load_model(dump) {
        Ok(m) => m,
        Err(e) => return fail(dump_code(&e), e),
    };
    let config = chaintest_core::paths::TraversalConfig { max_occurrences_per_site: max_occurrences, max_paths };
    match analyze(&model, out, &config) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(AnalyzeError::Invalid(issues)) => {
            print_issues(&issues);
            fail(INVALID, format!("{}: {} validation issue(s)", dump.display(), issues.len()))
        }
        Err(e @ AnalyzeError::Paths { .. }) => fail(INVALID, e),
        Err(e @ AnalyzeError::Io(_)) => fail(FAILURE, e),
    }
}

fn cmd_minimize(chains: &Path, out: &Path) -> i32 {
    let input: ChainsFile = match read_json(chains) {
        Ok(c) => c,
        Err(e) => return fail(dump_code(&e), e),
    };
    let min = minimize_file(&input);
    if let Err(e) = std::fs::write(out, pretty_json(&min)) {
        return fail(FAILURE, format!("{}: {e}", out.display()));
    }
    let ids: Vec<String> = min.paths.iter().map(|c| c.path_id.to_string()).collect();
    println!("selected paths [{}] of {}", ids.join(", "), input.paths.len());
    0
}

fn cmd_generate(dump: &Path, config: &Path, out: &Path, opts: &SessionOptions) -> i32 {
    let model = match load_model(dump) {
        Ok(m) => m,
        Err(e) => return fail(dump_code(&e), e),
    };
    let cfg = match SessionConfig::load(config) {
        Ok(c) => c,
        Err(e) => return fail(config_code(&e), e),
    };
    match generate(&model, cfg, opts, out) {
        Ok(s) => {
            println!(
                "{} focal method(s) processed, {} skipped, {} failed, {} provider call(s)",
                s.processed, s.skipped, s.failed, s.gateway_requests
            );
            if s.truncated {
                println!("session truncated: token budget exhausted; rerun with a larger budget to resume");
            }
            0
        }
        Err(SessionError::Invalid(issues)) => {
            print_issues(&issues);
            fail(INVALID, format!("{}: {} validation issue(s)", dump.display(), issues.len()))
        }
        Err(SessionError::Config(e)) => fail(config_code(&e), e),
        Err(e) => fail(FAILURE, e),
    }
}

fn cmd_report(dir: &Path, format: Format) -> i32 {
    match write_reports(dir) {
        Ok(report) => {
            match format {
                Format::Json => print!("{}", render_json(&report)),
                Format::Md => print!("{}", render_markdown(&report)),
            }
            0
        }
        Err(e @ (ReportError::Missing(_) | ReportError::Index { .. })) => fail(INVALID, e),
        Err(e) => fail(FAILURE, e),
    }
}
