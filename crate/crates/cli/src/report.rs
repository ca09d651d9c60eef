//! Result rows and their CSV, JSON and fixed-width renderings.

use std::fmt::Write as _;

use serde::Serialize;
use ujmmd::pipeline::{mean_std, RunResult};

use crate::error::CliResult;

pub const CSV_HEADER: [&str; 6] = ["task", "preset", "seed", "final_accuracy", "feature_distance", "hsi"];

/// One run of one preset on one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub task: String,
    pub result: RunResult,
}

#[derive(Serialize)]
struct Record<'a> {
    task: &'a str,
    #[serde(flatten)]
    result: RunResult,
}

/// Mean and population std of one metric over a group's runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: impl Iterator<Item = Option<f64>>) -> Option<Stat> {
        let values: Option<Vec<f64>> = values.collect();
        let values = values.filter(|v| !v.is_empty())?;
        let (mean, std) = mean_std(&values);
        Some(Stat { mean, std })
    }
}

/// Summary of all runs sharing a `(task, preset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub task: String,
    pub preset: String,
    pub runs: usize,
    pub accuracy: Option<Stat>,
    pub feature_distance: Option<Stat>,
    pub hsi: Option<Stat>,
}

/// Rows in the order given, which callers keep as task, preset, seed.
#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<Row>,
}

impl ResultTable {
    /// Consecutive rows with the same task and preset form one group.
    pub fn groups(&self) -> Vec<Group> {
        self.rows
            .chunk_by(|a, b| a.task == b.task && a.result.preset == b.result.preset)
            .map(|chunk| Group {
                task: chunk[0].task.clone(),
                preset: chunk[0].result.preset.clone(),
                runs: chunk.len(),
                accuracy: Stat::of(chunk.iter().map(|r| r.result.final_accuracy)),
                feature_distance: Stat::of(chunk.iter().map(|r| r.result.final_feature_distance)),
                hsi: Stat::of(chunk.iter().map(|r| r.result.final_hsi)),
            })
            .collect()
    }

    /// Per-run rows; after each group a `seed=aggregate` row of means and a
    /// `seed=aggregate_std` row of standard deviations.
    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        let groups = self.groups();
        let mut rows = self.rows.iter();
        for g in &groups {
            for row in rows.by_ref().take(g.runs) {
                let r = &row.result;
                w.write_record([
                    row.task.clone(),
                    r.preset.clone(),
                    r.seed.to_string(),
                    cell(r.final_accuracy),
                    cell(r.final_feature_distance),
                    cell(r.final_hsi),
                ])?;
            }
            for (seed, pick) in [
                ("aggregate", (|s: Stat| s.mean) as fn(Stat) -> f64),
                ("aggregate_std", |s| s.std),
            ] {
                w.write_record([
                    g.task.clone(),
                    g.preset.clone(),
                    seed.to_string(),
                    cell(g.accuracy.map(pick)),
                    cell(g.feature_distance.map(pick)),
                    cell(g.hsi.map(pick)),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// A JSON list of `{task, ...RunResult}` records without label history.
    pub fn to_json(&self) -> CliResult<String> {
        let records: Vec<Record> = self
            .rows
            .iter()
            .map(|row| Record {
                task: &row.task,
                result: RunResult {
                    pseudo_label_history: None,
                    ..row.result.clone()
                },
            })
            .collect();
        let mut out = serde_json::to_string_pretty(&records)?;
        out.push('\n');
        Ok(out)
    }

    /// One line per group: mean ± std of each metric.
    pub fn to_table(&self) -> String {
        let groups = self.groups();
        let task_w = groups.iter().map(|g| g.task.len()).chain([4]).max().unwrap_or(4);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<task_w$}  {:<12}  {:>4}  {:>17}  {:>23}  {:>23}",
            "task", "preset", "runs", "accuracy", "feature_distance", "hsi"
        );
        for g in &groups {
            let _ = writeln!(
                out,
                "{:<task_w$}  {:<12}  {:>4}  {:>17}  {:>23}  {:>23}",
                g.task,
                g.preset,
                g.runs,
                fixed(g.accuracy),
                sci(g.feature_distance),
                sci(g.hsi),
            );
        }
        out
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn fixed(s: Option<Stat>) -> String {
    s.map_or_else(|| "-".into(), |s| format!("{:.4} ± {:.4}", s.mean, s.std))
}

fn sci(s: Option<Stat>) -> String {
    s.map_or_else(|| "-".into(), |s| format!("{:.4e} ± {:.3e}", s.mean, s.std))
}
