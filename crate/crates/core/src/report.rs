//! Result formatting shared by the command line and the suite runner.

use serde::{Deserialize, Serialize};

use crate::model::Network;
use crate::smc::{CompareVerdict, RunTrajectory, SmcKind};
use crate::zone::{CmcResult, LimitKind, WitnessStep};

/// Table-1-style performance columns attached to every verdict.
///
/// Both fields besides the state count come from deterministic cost
/// models, not the operating system: `peak_mem_kib` is states times a
/// per-state footprint and `cpu_ms` is bookkept work divided by a fixed
/// throughput constant. That keeps reports identical across platforms and
/// repeat runs, which matters more here than wall-clock fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerfTriple {
    pub states_explored: u64,
    pub cpu_ms: u64,
    pub peak_mem_kib: u64,
}

/// Output shape of every reporting command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
    Csv,
}

/// One-line rendering of a classical verdict.
pub fn cmc_label(result: &CmcResult) -> String {
    match result {
        CmcResult::Satisfied => "Satisfied".into(),
        CmcResult::NotSatisfied => "Not satisfied".into(),
        CmcResult::ResourceLimit(LimitKind::States) => "Out of states".into(),
        CmcResult::ResourceLimit(LimitKind::Memory) => "Out of memory".into(),
    }
}

/// One-line rendering of a statistical verdict.
pub fn smc_label(kind: &SmcKind) -> String {
    match kind {
        SmcKind::ProbBound { direction, bound, .. } => {
            format!("Pr {} {bound:.6}", direction_symbol(*direction))
        }
        SmcKind::Estimate { mean, half_width, .. } => {
            format!("{mean:.2} +/- {half_width:.2} ms")
        }
        SmcKind::TestResult { rel, theta, holds, .. } => match holds {
            Some(true) => format!("accepted: Pr {} {theta}", direction_symbol(*rel)),
            Some(false) => format!("rejected: Pr {} {theta}", direction_symbol(*rel)),
            None => "inconclusive".into(),
        },
        SmcKind::Compare { verdict, .. } => match verdict {
            CompareVerdict::GreaterOrEqual => "left >= right".into(),
            CompareVerdict::Less => "left < right".into(),
            CompareVerdict::Inconclusive => "inconclusive".into(),
        },
        SmcKind::Trajectories { runs, .. } => format!("trajectories: {} runs", runs.len()),
    }
}

fn direction_symbol(rel: crate::query::TestRel) -> &'static str {
    match rel {
        crate::query::TestRel::AtLeast => ">=",
        crate::query::TestRel::AtMost => "<=",
    }
}

/// Number of simulated runs behind a statistical verdict.
pub fn smc_runs(kind: &SmcKind) -> u64 {
    match kind {
        SmcKind::ProbBound { runs, .. }
        | SmcKind::Estimate { runs, .. }
        | SmcKind::TestResult { runs, .. }
        | SmcKind::Compare { runs, .. } => *runs,
        SmcKind::Trajectories { runs, .. } => runs.len() as u64,
    }
}

/// A witness trace as CSV: one fired edge per row, with the earliest
/// sojourn of the firing automaton, resolved to names where they exist.
pub fn witness_csv(steps: &[WitnessStep], net: &Network) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "min_elapse_ms", "automaton", "edge", "channel"])
        .expect("writing to a vector cannot fail");
    for (i, s) in steps.iter().enumerate() {
        let channel = s.channel.map_or("", |c| net.channels[c.0].as_str());
        w.write_record([
            i.to_string(),
            s.min_elapse_ms.to_string(),
            net.automata[s.automaton].name.clone(),
            s.edge.to_string(),
            channel.to_string(),
        ])
        .expect("writing to a vector cannot fail");
    }
    String::from_utf8(w.into_inner().expect("vector writer never errors"))
        .expect("csv output is utf-8")
}

/// Sampled trajectories as CSV: one row per run, observation point and
/// expression, in that nesting order.
pub fn trajectory_csv(exprs: &[String], runs: &[RunTrajectory]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["run", "time_ms", "expr_name", "value"])
        .expect("writing to a vector cannot fail");
    for run in runs {
        for point in &run.points {
            for (name, value) in exprs.iter().zip(&point.values) {
                w.write_record([
                    run.run.to_string(),
                    point.time_ms.to_string(),
                    name.clone(),
                    value.to_string(),
                ])
                .expect("writing to a vector cannot fail");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("vector writer never errors"))
        .expect("csv output is utf-8")
}

/// A rectangular report, renderable as an aligned text table or as CSV.
#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push_row<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        assert_eq!(row.len(), self.headers.len(), "row width must match the header");
        self.rows.push(row);
    }

    /// Space-padded columns joined by ` | `, one line per row.
    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let joined: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            out.push_str(joined.join(" | ").trim_end());
            out.push('\n');
        };
        line(&self.headers);
        for row in &self.rows {
            line(row);
        }
        out
    }

    /// The same rows as CSV, headers first.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("writing to a vector cannot fail");
        for row in &self.rows {
            w.write_record(row).expect("writing to a vector cannot fail");
        }
        String::from_utf8(w.into_inner().expect("vector writer never errors"))
            .expect("csv output is utf-8")
    }
}
