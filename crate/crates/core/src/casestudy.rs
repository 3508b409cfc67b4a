//! A bundled cosimulation study: five components exchanging obstacle,
//! path, control and log messages, a thirteen-property suite with
//! qualitative expectations, and a compact demonstration of how the two
//! engines can disagree when empirical delays are collapsed to fixed
//! ones.
//!
//! The model and its timing profiles are embedded in the binary, so the
//! suite runs without touching the filesystem. Two profiles ship with
//! it: under `slow` the timeliness properties fail and under `fast`
//! they hold, which exercises both directions of every expectation.
//! The classical engine always sees the approximated network (every
//! `empirical` delay collapsed to `fixed`); the statistical engine sees
//! the network as written.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    parse_model, resolve_distributions, to_approximate, validate, ModelError, Network,
};
use crate::query::{parse_query, EngineKind, QueryError, TestRel};
use crate::report::{cmc_label, smc_label, PerfTriple};
use crate::rng::DEFAULT_SEED;
use crate::smc::{self, RunTrajectory, SmcConfig, SmcKind, SmcVerdict};
use crate::zone::{self, CmcResult, CmcVerdict, ExploreConfig};

/// Embedded model of the cosimulation loop.
pub const DT_MODEL: &str = include_str!("../assets/dt.tvm");

/// Embedded property suite, one `id | engine | expectation | query` line
/// per check.
pub const DT_SUITE: &str = include_str!("../assets/suite.tvq");

/// Embedded two-component network behind [`discrepancy_demo`].
pub const DISCREPANCY_MODEL: &str = include_str!("../assets/discrepancy.tvm");

/// Which set of measured service times the model runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Degraded timings: frame, control and planning periods exceed the
    /// budgets the suite checks against.
    Slow,
    /// Healthy timings: every period fits its budget.
    Fast,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Slow => "slow",
            Profile::Fast => "fast",
        }
    }
}

/// Qualitative direction a suite line is expected to come out at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Satisfied,
    NotSatisfied,
    /// Satisfied when resources allow; hitting an exploration cap is
    /// acceptable for this line.
    SatisfiedOrLimit,
    /// A probability bound read from below one half.
    LowProbability,
    /// A probability bound read from above one half.
    HighProbability,
    /// A mean-with-half-width value estimate of any magnitude.
    Estimate,
    /// Retained simulation trajectories.
    Trajectories,
}

impl Expect {
    pub fn name(self) -> &'static str {
        match self {
            Expect::Satisfied => "satisfied",
            Expect::NotSatisfied => "not-satisfied",
            Expect::SatisfiedOrLimit => "satisfied-or-limit",
            Expect::LowProbability => "low-probability",
            Expect::HighProbability => "high-probability",
            Expect::Estimate => "estimate",
            Expect::Trajectories => "trajectories",
        }
    }

    fn parse(text: &str) -> Option<Expect> {
        Some(match text {
            "satisfied" => Expect::Satisfied,
            "not-satisfied" => Expect::NotSatisfied,
            "satisfied-or-limit" => Expect::SatisfiedOrLimit,
            "low-probability" => Expect::LowProbability,
            "high-probability" => Expect::HighProbability,
            "estimate" => Expect::Estimate,
            "trajectories" => Expect::Trajectories,
            _ => return None,
        })
    }
}

/// One line of the suite: a property id, the engine that checks it, the
/// expected direction and the query text.
#[derive(Debug, Clone)]
pub struct SuiteProperty {
    pub id: u32,
    pub engine: EngineKind,
    pub expect: Expect,
    pub query: String,
}

/// The bundled study, ready to run: the network as written, its
/// approximation for the classical engine, and the parsed suite.
#[derive(Debug, Clone)]
pub struct SuiteDefinition {
    pub sta: Network,
    pub ta: Network,
    pub properties: Vec<SuiteProperty>,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Parse(#[from] crate::model::ParseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("suite line {line}: {message}")]
    BadLine { line: usize, message: String },
    #[error("suite line {line}: {source}")]
    BadQuery { line: usize, source: QueryError },
}

fn profile_csv(profile: Profile, path: &str) -> Option<&'static str> {
    match (profile, path) {
        (Profile::Slow, "frame.csv") => {
            Some(include_str!("../assets/profiles/slow/frame.csv"))
        }
        (Profile::Slow, "control.csv") => {
            Some(include_str!("../assets/profiles/slow/control.csv"))
        }
        (Profile::Slow, "plan.csv") => Some(include_str!("../assets/profiles/slow/plan.csv")),
        (Profile::Slow, "log.csv") => Some(include_str!("../assets/profiles/slow/log.csv")),
        (Profile::Fast, "frame.csv") => {
            Some(include_str!("../assets/profiles/fast/frame.csv"))
        }
        (Profile::Fast, "control.csv") => {
            Some(include_str!("../assets/profiles/fast/control.csv"))
        }
        (Profile::Fast, "plan.csv") => Some(include_str!("../assets/profiles/fast/plan.csv")),
        (Profile::Fast, "log.csv") => Some(include_str!("../assets/profiles/fast/log.csv")),
        _ => None,
    }
}

/// Parses suite lines of the form `id | engine | expectation | query`.
fn parse_suite(text: &str, net: &Network) -> Result<Vec<SuiteProperty>, SuiteError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.splitn(4, '|').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(SuiteError::BadLine {
                line,
                message: format!("expected 4 fields `id | engine | expectation | query`, got {}", fields.len()),
            });
        }
        let id: u32 = fields[0].parse().map_err(|_| SuiteError::BadLine {
            line,
            message: format!("bad property id {:?}", fields[0]),
        })?;
        let engine = match fields[1] {
            "cmc" => EngineKind::Classical,
            "smc" => EngineKind::Statistical,
            other => {
                return Err(SuiteError::BadLine {
                    line,
                    message: format!("unknown engine {other:?}, expected `cmc` or `smc`"),
                })
            }
        };
        let expect = Expect::parse(fields[2]).ok_or_else(|| SuiteError::BadLine {
            line,
            message: format!("unknown expectation {:?}", fields[2]),
        })?;
        let query = fields[3].to_string();
        let parsed =
            parse_query(&query, net).map_err(|source| SuiteError::BadQuery { line, source })?;
        if parsed.engine() != engine {
            return Err(SuiteError::BadLine {
                line,
                message: format!(
                    "query {:?} belongs to the other engine than the line declares",
                    query
                ),
            });
        }
        out.push(SuiteProperty { id, engine, expect, query });
    }
    Ok(out)
}

/// Builds the bundled study under one timing profile: parses the model,
/// resolves its distributions from the embedded profile CSVs, derives
/// the approximation for the classical engine and parses the suite.
///
/// The shipped expectations state the slow-profile directions; under
/// the fast profile the timeliness rows (7 to 11) are flipped to their
/// healthy directions.
pub fn build_case_study(profile: Profile) -> Result<SuiteDefinition, SuiteError> {
    let mut sta = parse_model(DT_MODEL)?;
    resolve_distributions(&mut sta, |path| {
        profile_csv(profile, path)
            .map(str::to_string)
            .ok_or_else(|| format!("no embedded histogram named {path:?}"))
    })?;
    debug_assert!(
        validate(&sta).is_empty(),
        "the bundled model must validate cleanly"
    );
    let ta = to_approximate(&sta)?;
    let mut properties = parse_suite(DT_SUITE, &sta)?;
    if profile == Profile::Fast {
        for p in &mut properties {
            if (7..=11).contains(&p.id) {
                p.expect = match p.engine {
                    EngineKind::Classical => Expect::Satisfied,
                    EngineKind::Statistical => Expect::HighProbability,
                };
            }
        }
    }
    Ok(SuiteDefinition { sta, ta, properties })
}

/// Outcome of one suite line.
#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub id: u32,
    pub engine: EngineKind,
    pub expect: Expect,
    /// Human-readable verdict, or the error message when the engine
    /// refused the line.
    pub verdict: String,
    /// Whether the outcome matches the expectation.
    pub ok: bool,
    pub stats: PerfTriple,
    /// Retained trajectories of a `simulate` line, for CSV export.
    pub trajectories: Option<(Vec<String>, Vec<RunTrajectory>)>,
}

fn classical_row(p: &SuiteProperty, verdict: &CmcVerdict) -> (String, bool) {
    let label = cmc_label(&verdict.result);
    let ok = match p.expect {
        Expect::Satisfied => verdict.result == CmcResult::Satisfied,
        Expect::NotSatisfied => verdict.result == CmcResult::NotSatisfied,
        Expect::SatisfiedOrLimit => matches!(
            verdict.result,
            CmcResult::Satisfied | CmcResult::ResourceLimit(_)
        ),
        _ => false,
    };
    (label, ok)
}

fn statistical_row(p: &SuiteProperty, verdict: &SmcVerdict) -> (String, bool) {
    let label = smc_label(&verdict.kind);
    let ok = match (p.expect, &verdict.kind) {
        (Expect::LowProbability, SmcKind::ProbBound { direction, .. }) => {
            *direction == TestRel::AtMost
        }
        (Expect::HighProbability, SmcKind::ProbBound { direction, .. }) => {
            *direction == TestRel::AtLeast
        }
        (Expect::Estimate, SmcKind::Estimate { .. }) => true,
        (Expect::Trajectories, SmcKind::Trajectories { .. }) => true,
        _ => false,
    };
    (label, ok)
}

fn run_property(
    def: &SuiteDefinition,
    p: &SuiteProperty,
    explore: &ExploreConfig,
    cfg: &SmcConfig,
) -> SuiteRow {
    let mut row = SuiteRow {
        id: p.id,
        engine: p.engine,
        expect: p.expect,
        verdict: String::new(),
        ok: false,
        stats: PerfTriple::default(),
        trajectories: None,
    };
    let query = match parse_query(&p.query, &def.sta) {
        Ok(q) => q,
        Err(e) => {
            row.verdict = e.to_string();
            return row;
        }
    };
    match p.engine {
        EngineKind::Classical => match zone::check_query(&def.ta, &query, explore) {
            Ok(v) => {
                let (label, ok) = classical_row(p, &v);
                row.verdict = label;
                row.ok = ok;
                row.stats = v.stats;
            }
            Err(e) => row.verdict = e.to_string(),
        },
        EngineKind::Statistical => match smc::check_query(&def.sta, &query, cfg) {
            Ok(v) => {
                let (label, ok) = statistical_row(p, &v);
                row.verdict = label;
                row.ok = ok;
                row.stats = v.stats;
                if let SmcKind::Trajectories { exprs, runs } = v.kind {
                    row.trajectories = Some((exprs, runs));
                }
            }
            Err(e) => row.verdict = e.to_string(),
        },
    }
    row
}

/// Runs every suite line and reports the outcomes in suite order
/// (ascending property id, classical before statistical). Lines run in
/// parallel; an engine error becomes that line's verdict text rather
/// than aborting the suite.
pub fn run_suite(
    def: &SuiteDefinition,
    explore: &ExploreConfig,
    cfg: &SmcConfig,
) -> Vec<SuiteRow> {
    let mut rows: Vec<SuiteRow> = def
        .properties
        .par_iter()
        .map(|p| run_property(def, p, explore, cfg))
        .collect();
    rows.sort_by_key(|r| (r.id, r.engine == EngineKind::Statistical));
    rows
}

/// Checks the same deadline property of the bundled two-component
/// network with both engines and returns the pair of verdicts: the
/// classical engine sees the 4 ms weighted average and reports the 3 ms
/// deadline violated, while the statistical engine sees the bimodal
/// histogram under which 97% of jobs meet it.
pub fn discrepancy_demo() -> (CmcVerdict, SmcVerdict) {
    let net = parse_model(DISCREPANCY_MODEL).expect("the bundled demo model parses");
    let ta = to_approximate(&net).expect("the bundled demo histogram is inline");
    let query_text = "A[] late == 0";
    let cmc_query = parse_query(query_text, &ta).expect("the demo query parses");
    let cmc = zone::check_query(&ta, &cmc_query, &ExploreConfig::new())
        .expect("the demo network is classical-checkable");
    let smc_query =
        parse_query("Pr[<=200]([] late == 0)", &net).expect("the demo query parses");
    let cfg = SmcConfig {
        runs_override: Some(2_000),
        master_seed: DEFAULT_SEED,
        ..SmcConfig::default()
    };
    let smc = smc::check_query(&net, &smc_query, &cfg)
        .expect("the demo network is statistically checkable");
    (cmc, smc)
}
