use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context};
use hetcc::io::write_atomic;
use hetcc::sca::ScaOutcome;
use hetcc::ScheduleF64;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::policy::Policy;

pub const REPORT_HEADER: &str =
    "policy,master,t_approx_ms,mean_completion_ms,infeasible_trials,trials";
pub const TRACE_HEADER: &str = "iteration,t_ms,gamma,relative_change";

/// Which master a report row describes; `all` is the slowest-master summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MasterKey {
    Index(usize),
    All,
}

impl fmt::Display for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MasterKey::Index(m) => write!(f, "{m}"),
            MasterKey::All => f.write_str("all"),
        }
    }
}

impl FromStr for MasterKey {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "all" => Ok(MasterKey::All),
            _ => Ok(MasterKey::Index(s.parse().with_context(|| {
                format!("master {s:?} is neither an index nor `all`")
            })?)),
        }
    }
}

impl From<MasterKey> for String {
    fn from(key: MasterKey) -> String {
        key.to_string()
    }
}

impl TryFrom<String> for MasterKey {
    type Error = anyhow::Error;

    fn try_from(s: String) -> anyhow::Result<Self> {
        s.parse()
    }
}

/// One line of the comparison CSV. Times are in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: Policy,
    pub master: MasterKey,
    /// Empty for schedules without a predicted time (uncoded).
    pub t_approx_ms: Option<f64>,
    pub mean_completion_ms: f64,
    pub infeasible_trials: usize,
    pub trials: usize,
}

/// One SCA iterate. `gamma` is the step that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub t_ms: f64,
    pub gamma: Option<f64>,
    /// `|1 − t/t_prev|`.
    pub relative_change: Option<f64>,
}

impl TraceRow {
    pub fn from_outcome(outcome: &ScaOutcome<f64>) -> Vec<TraceRow> {
        outcome
            .trace
            .iter()
            .enumerate()
            .map(|(i, &t)| TraceRow {
                iteration: i,
                t_ms: t,
                gamma: i.checked_sub(1).map(|j| outcome.gammas[j]),
                relative_change: i.checked_sub(1).map(|j| (1.0 - t / outcome.trace[j]).abs()),
            })
            .collect()
    }
}

/// Probability and load of every assigned pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub master: usize,
    pub worker: usize,
    pub probability: f64,
    pub load_rows: f64,
}

impl ScheduleRow {
    pub fn from_schedule(schedule: &ScheduleF64) -> Vec<ScheduleRow> {
        let k = schedule.assignment.matrix();
        let mut rows = Vec::new();
        for m in 0..k.rows() {
            for n in 0..k.cols() {
                if k.get(m, n) > 0.0 {
                    rows.push(ScheduleRow {
                        master: m,
                        worker: n,
                        probability: k.get(m, n),
                        load_rows: schedule.loads.l(m, n),
                    });
                }
            }
        }
        rows
    }
}

fn to_csv<R: Serialize>(rows: &[R], header: &str) -> anyhow::Result<Vec<u8>> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    writer.write_record(header.split(','))?;
    for row in rows {
        writer.serialize(row)?;
    }
    Ok(writer.into_inner()?)
}

fn from_csv<R: DeserializeOwned>(bytes: &[u8], header: &str) -> anyhow::Result<Vec<R>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let found: Vec<&str> = reader.headers()?.iter().collect();
    if found.join(",") != header {
        bail!(
            "unexpected CSV header {:?}; expected {header:?}",
            found.join(",")
        );
    }
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

pub fn rows_to_csv(rows: &[ReportRow]) -> anyhow::Result<Vec<u8>> {
    to_csv(rows, REPORT_HEADER)
}

pub fn rows_from_csv(bytes: &[u8]) -> anyhow::Result<Vec<ReportRow>> {
    from_csv(bytes, REPORT_HEADER)
}

pub fn trace_to_csv(rows: &[TraceRow]) -> anyhow::Result<Vec<u8>> {
    to_csv(rows, TRACE_HEADER)
}

pub fn trace_from_csv(bytes: &[u8]) -> anyhow::Result<Vec<TraceRow>> {
    from_csv(bytes, TRACE_HEADER)
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn write_rows(path: &Path, rows: &[ReportRow]) -> anyhow::Result<()> {
    write_file(path, &rows_to_csv(rows)?)
}

pub fn read_rows(path: &Path) -> anyhow::Result<Vec<ReportRow>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    rows_from_csv(&bytes)
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> anyhow::Result<()> {
    write_file(path, &trace_to_csv(rows)?)
}

pub fn write_schedule(path: &Path, rows: &[ScheduleRow]) -> anyhow::Result<()> {
    write_file(path, &to_csv(rows, "master,worker,probability,load_rows")?)
}

fn seconds(ms: Option<f64>) -> String {
    ms.map_or_else(|| "-".to_string(), |ms| format!("{:.2}", ms / 1000.0))
}

/// Human-readable table with times in seconds.
pub fn format_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>6} {:>12} {:>12} {:>16}",
        "policy", "master", "t_approx (s)", "mean (s)", "infeasible/trials"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>12} {:>12} {:>16}",
            r.policy.name(),
            r.master.to_string(),
            seconds(r.t_approx_ms),
            seconds(Some(r.mean_completion_ms)),
            format!("{}/{}", r.infeasible_trials, r.trials)
        );
    }
    out
}
