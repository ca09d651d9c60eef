//! `ujmmd`: run adaptation, label-shift and ablation experiments, or the
//! built-in property suite.

mod config;
mod error;
mod report;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use ujmmd::checks::{self, CheckOptions};
use ujmmd::data::DomainPair;
use ujmmd::pipeline::{run_da, run_label_shift_experiment, Preset};

use crate::config::{DataSource, ExperimentArgs, Format, Settings};
use crate::error::{CliError, CliResult};
use crate::report::{ResultTable, Row};

#[derive(Debug, Parser)]
#[command(name = "ujmmd", version, about = "Unified JMMD domain adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Standard adaptation: one row per (task, preset, seed).
    Run(ExperimentArgs),
    /// Label-shift protocol: drop half of each of the first half of the
    /// classes from the source, repeated with consecutive seeds.
    Shift(ExperimentArgs),
    /// Final accuracy, feature distance and HSI of each preset's embedding.
    Ablate(ExperimentArgs),
    /// Run the property suite on fixed-seed random instances.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Negate the cross block of the marginal MMD matrix (suite self-test).
    #[arg(long, hide = true)]
    inject_sign_error: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Run,
    Shift,
    Ablate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => experiment(Mode::Run, &args),
        Command::Shift(args) => experiment(Mode::Shift, &args),
        Command::Ablate(args) => experiment(Mode::Ablate, &args),
        Command::Check(args) => check(&args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// A pair to run on: file tasks are loaded once, synthetic pairs are drawn
/// per seed.
enum PairSource {
    Loaded(String, DomainPair),
    Synthetic,
}

fn experiment(mode: Mode, args: &ExperimentArgs) -> CliResult<bool> {
    let settings = Settings::load(args)?;
    let sources: Vec<PairSource> = match &settings.data {
        DataSource::Synthetic(_) => vec![PairSource::Synthetic],
        DataSource::Tasks(tasks) => tasks
            .iter()
            .map(|t| Ok(PairSource::Loaded(t.name.clone(), t.load()?)))
            .collect::<CliResult<_>>()?,
    };
    if mode == Mode::Ablate {
        if let Some(PairSource::Loaded(name, _)) = sources
            .iter()
            .find(|s| matches!(s, PairSource::Loaded(_, p) if p.target_truth().is_none()))
        {
            return Err(CliError::Usage(format!(
                "ablate needs target labels; task {name:?} has no target_labels"
            )));
        }
    }

    let table = with_pool(|| build_table(mode, &settings, &sources))??;
    emit(&table, &settings)?;
    Ok(true)
}

fn build_table(mode: Mode, settings: &Settings, sources: &[PairSource]) -> CliResult<ResultTable> {
    // Jobs are enumerated in report order, so collecting keeps rows ordered
    // by task, then canonical preset, then seed.
    let mut jobs: Vec<(usize, Preset)> = Vec::new();
    for s in 0..sources.len() {
        jobs.extend(settings.presets.iter().map(|&p| (s, p)));
    }
    let groups: Vec<Vec<Row>> = jobs
        .into_par_iter()
        .map(|(s, preset)| {
            let method = settings.method(preset)?;
            let (task, results) = match mode {
                Mode::Run | Mode::Ablate => {
                    let seeds = settings.run_seeds();
                    let results = seeds
                        .iter()
                        .map(|&seed| with_pair(settings, &sources[s], seed, |pair| run_da(pair, &method, seed)))
                        .collect::<CliResult<Vec<_>>>()?;
                    (task_name(settings, &sources[s]), results)
                }
                Mode::Shift => {
                    let (base, repeats) = settings.shift_protocol();
                    let summary = with_pair(settings, &sources[s], base, |pair| {
                        run_label_shift_experiment(pair, &method, repeats, base)
                    })?;
                    (task_name(settings, &sources[s]), summary.per_run)
                }
            };
            Ok(results
                .into_iter()
                .map(|result| Row {
                    task: task.clone(),
                    result,
                })
                .collect())
        })
        .collect::<CliResult<_>>()?;
    Ok(ResultTable {
        rows: groups.into_iter().flatten().collect(),
    })
}

fn with_pair<T>(
    settings: &Settings,
    source: &PairSource,
    seed: u64,
    f: impl FnOnce(&DomainPair) -> ujmmd::Result<T>,
) -> CliResult<T> {
    match (source, &settings.data) {
        (PairSource::Loaded(_, pair), _) => Ok(f(pair)?),
        (PairSource::Synthetic, DataSource::Synthetic(template)) => Ok(f(&template.pair(seed)?)?),
        (PairSource::Synthetic, DataSource::Tasks(_)) => unreachable!("synthetic source without template"),
    }
}

fn task_name(settings: &Settings, source: &PairSource) -> String {
    match (source, &settings.data) {
        (PairSource::Loaded(name, _), _) => name.clone(),
        _ => "synthetic".into(),
    }
}

/// Runs `f` on a pool capped by `UJMMD_THREADS` when it is set.
fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let threads = match std::env::var("UJMMD_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("UJMMD_THREADS must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Writes `--out` if given and prints to stdout: the fixed-width table, or
/// the raw format when `--format` is set without `--out`.
fn emit(table: &ResultTable, settings: &Settings) -> CliResult<()> {
    if let Some(path) = &settings.out {
        let format = settings.format.unwrap_or_else(|| format_from_extension(path));
        fs::write(path, render(table, format)?).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        print!("{}", table.to_table());
    } else {
        print!("{}", render(table, settings.format.unwrap_or(Format::Table))?);
    }
    Ok(())
}

fn render(table: &ResultTable, format: Format) -> CliResult<String> {
    match format {
        Format::Table => Ok(table.to_table()),
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json(),
    }
}

fn format_from_extension(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
        Some(e) if e.eq_ignore_ascii_case("txt") => Format::Table,
        _ => Format::Csv,
    }
}

fn check(args: &CheckArgs) -> CliResult<bool> {
    let report = checks::run_all(CheckOptions {
        flip_marginal_cross_sign: args.inject_sign_error,
    });
    let width = report.outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    for o in &report.outcomes {
        println!(
            "{}  {:<width$}  {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
    }
    let passed = report.outcomes.iter().filter(|o| o.passed).count();
    println!("{passed}/{} properties passed", report.outcomes.len());
    Ok(report.all_passed())
}
