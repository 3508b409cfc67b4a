//! Command-line front-end for the dual-mode verifier: exhaustive
//! classical checks, seeded statistical queries, histogram ingestion and
//! the bundled case-study suite.
//!
//! The report goes to stdout, or with `--out` to a file written
//! atomically; diagnostics and progress notes go to stderr. Exit codes:
//! 0 every query came out satisfied (or every estimate was produced),
//! 1 a query was not satisfied or a hypothesis was rejected, 2 a
//! resource limit was hit or a sequential test stayed inconclusive,
//! 3 malformed input or usage.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use twinverify_core::casestudy::{build_case_study, run_suite, Profile, SuiteRow};
use twinverify_core::model::{
    parse_model, resolve_distributions, to_approximate, validate, Network, Severity,
};
use twinverify_core::query::{parse_query, EngineKind, Query};
use twinverify_core::report::{
    cmc_label, smc_label, smc_runs, trajectory_csv, witness_csv, Table,
};
use twinverify_core::rng::DEFAULT_SEED;
use twinverify_core::smc::{self, SmcConfig, SmcKind};
use twinverify_core::zone::{self, CmcResult, ExploreConfig};

const EXIT_OK: u8 = 0;
const EXIT_VIOLATED: u8 = 1;
const EXIT_LIMIT: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "twinverify",
    version,
    about = "Dual-mode verifier for networks of timed automata"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check classical queries by exhaustive zone exploration
    Check(CheckArgs),
    /// Run statistical queries by seeded stochastic simulation
    Smc(SmcArgs),
    /// Build a latency histogram from a component event log
    Ingest(IngestArgs),
    /// Run the bundled case-study property suite
    Suite(SuiteArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Json,
    Csv,
}

#[derive(Args)]
struct OutputArgs {
    /// Report format
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
    /// Write the report to this file (atomically) instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    /// Inline query; may be given more than once
    #[arg(long = "query", value_name = "TEXT")]
    queries: Vec<String>,
    /// File with one query per line; `#` starts a comment
    #[arg(long, value_name = "FILE")]
    query_file: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Model file
    model: PathBuf,
    #[command(flatten)]
    queries: QueryArgs,
    /// Cap on explored states (overrides TWINVERIFY_MAX_STATES)
    #[arg(long, value_name = "N")]
    max_states: Option<u64>,
    /// Cap on modeled memory in KiB (overrides TWINVERIFY_MAX_MEM_KIB)
    #[arg(long, value_name = "KIB")]
    max_mem_kib: Option<u64>,
    /// Explore without inclusion subsumption
    #[arg(long)]
    no_subsumption: bool,
    /// Directory holding `from "..."` histogram files (default: the
    /// model's directory)
    #[arg(long, value_name = "DIR")]
    dist_dir: Option<PathBuf>,
    /// Directory for witness CSVs of queries that produce a trace
    #[arg(long, value_name = "DIR", default_value = ".")]
    witness_dir: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SmcArgs {
    /// Model file
    model: PathBuf,
    #[command(flatten)]
    queries: QueryArgs,
    /// Half-width of probability estimates
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// One minus the confidence of estimates; type-I error of tests
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Type-II error of sequential tests
    #[arg(long, default_value_t = 0.05)]
    beta: f64,
    /// Half-width of the indifference region of sequential tests
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Fixed run count for estimates, instead of the Chernoff-Hoeffding
    /// default
    #[arg(long, value_name = "N")]
    runs: Option<u64>,
    /// Cap on sequential-test runs before giving up as inconclusive
    #[arg(long, default_value_t = 10_000, value_name = "N")]
    max_runs: u64,
    /// Cap on events per simulated run
    #[arg(long, default_value_t = 1_000_000, value_name = "N")]
    step_bound: u64,
    /// Master seed; runs derive their seeds from it
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads for independent runs (default: all cores)
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Directory holding `from "..."` histogram files (default: the
    /// model's directory)
    #[arg(long, value_name = "DIR")]
    dist_dir: Option<PathBuf>,
    /// Trajectory CSV written by `simulate` queries
    #[arg(long, value_name = "FILE", default_value = "trajectories.csv")]
    traj: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct IngestArgs {
    /// Event log CSV with `timestamp_ms,component,event` rows
    log: PathBuf,
    /// Event name starting each latency measurement
    #[arg(long, value_name = "EVENT")]
    source: String,
    /// Event name ending each latency measurement
    #[arg(long, value_name = "EVENT")]
    target: String,
    /// Histogram bucket width in milliseconds
    #[arg(long, default_value_t = 10.0, value_name = "MS")]
    bucket_width: f64,
    /// Output histogram CSV (default: `<log stem>_hist.csv`)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProfileArg {
    Slow,
    Fast,
}

impl From<ProfileArg> for Profile {
    fn from(value: ProfileArg) -> Self {
        match value {
            ProfileArg::Slow => Profile::Slow,
            ProfileArg::Fast => Profile::Fast,
        }
    }
}

#[derive(Args)]
struct SuiteArgs {
    /// Bundled study to run; the only one is `dt`
    study: String,
    /// Timing profile the distributions are loaded from
    #[arg(long, value_enum, default_value_t = ProfileArg::Slow)]
    profile: ProfileArg,
    /// Master seed for the statistical lines
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Cap on explored states (overrides TWINVERIFY_MAX_STATES)
    #[arg(long, value_name = "N")]
    max_states: Option<u64>,
    /// Cap on modeled memory in KiB (overrides TWINVERIFY_MAX_MEM_KIB)
    #[arg(long, value_name = "KIB")]
    max_mem_kib: Option<u64>,
    /// Worker threads for suite lines and runs (default: all cores)
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Trajectory CSV written by the simulation line
    #[arg(long, value_name = "FILE", default_value = "dt_trajectories.csv")]
    traj: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Smc(args) => cmd_smc(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Suite(args) => cmd_suite(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

/// One report line of `check` or `smc`.
struct ReportRow {
    query: String,
    engine: &'static str,
    verdict: String,
    states: u64,
    cpu_ms: u64,
    mem_kib: u64,
    detail: String,
}

fn cmd_check(args: CheckArgs) -> Result<u8, String> {
    let explore = explore_config(args.max_states, args.max_mem_kib, !args.no_subsumption)?;
    let net = load_model(&args.model, args.dist_dir.as_deref())?;
    let queries = collect_queries(&args.queries, &net)?;
    require_engine(&queries, EngineKind::Classical)?;
    let ta = to_approximate(&net).map_err(|e| e.to_string())?;

    let mut rows = Vec::new();
    let mut violated = false;
    let mut limited = false;
    for (idx, (text, query)) in queries.iter().enumerate() {
        let verdict = zone::check_query(&ta, query, &explore).map_err(|e| e.to_string())?;
        match verdict.result {
            CmcResult::Satisfied => {}
            CmcResult::NotSatisfied => violated = true,
            CmcResult::ResourceLimit(_) => limited = true,
        }
        let mut detail = String::new();
        if let Some(steps) = &verdict.witness {
            let file = args.witness_dir.join(format!("witness_q{}.csv", idx + 1));
            write_atomic(&file, &witness_csv(steps, &ta))?;
            detail = file.display().to_string();
        }
        rows.push(ReportRow {
            query: text.clone(),
            engine: "cmc",
            verdict: cmc_label(&verdict.result),
            states: verdict.stats.states_explored,
            cpu_ms: verdict.stats.cpu_ms,
            mem_kib: verdict.stats.peak_mem_kib,
            detail,
        });
    }
    emit_rows(&rows, &args.output)?;
    Ok(if violated {
        EXIT_VIOLATED
    } else if limited {
        EXIT_LIMIT
    } else {
        EXIT_OK
    })
}

fn cmd_smc(args: SmcArgs) -> Result<u8, String> {
    let cfg = smc_config(&args)?;
    let net = load_model(&args.model, args.dist_dir.as_deref())?;
    let queries = collect_queries(&args.queries, &net)?;
    require_engine(&queries, EngineKind::Statistical)?;
    let pool = thread_pool(args.workers)?;

    let mut rows = Vec::new();
    let mut violated = false;
    let mut limited = false;
    let mut simulations = 0u32;
    for (text, query) in &queries {
        let verdict = pool
            .install(|| smc::check_query(&net, query, &cfg))
            .map_err(|e| e.to_string())?;
        match &verdict.kind {
            SmcKind::TestResult { holds: Some(false), .. } => violated = true,
            SmcKind::TestResult { holds: None, .. } => limited = true,
            SmcKind::Compare { verdict: smc::CompareVerdict::Less, .. } => violated = true,
            SmcKind::Compare { verdict: smc::CompareVerdict::Inconclusive, .. } => {
                limited = true
            }
            _ => {}
        }
        let mut detail = format!("seed={} runs={}", args.seed, smc_runs(&verdict.kind));
        if let SmcKind::Trajectories { exprs, runs } = &verdict.kind {
            let file = numbered_path(&args.traj, simulations);
            simulations += 1;
            write_atomic(&file, &trajectory_csv(exprs, runs))?;
            detail.push_str(&format!(" traj={}", file.display()));
        }
        rows.push(ReportRow {
            query: text.clone(),
            engine: "smc",
            verdict: smc_label(&verdict.kind),
            states: verdict.stats.states_explored,
            cpu_ms: verdict.stats.cpu_ms,
            mem_kib: verdict.stats.peak_mem_kib,
            detail,
        });
    }
    emit_rows(&rows, &args.output)?;
    Ok(if violated {
        EXIT_VIOLATED
    } else if limited {
        EXIT_LIMIT
    } else {
        EXIT_OK
    })
}

fn cmd_ingest(args: IngestArgs) -> Result<u8, String> {
    let text = read_file(&args.log)?;
    let events = twinverify_core::timing::parse_log(&text).map_err(|e| e.to_string())?;
    let dist =
        twinverify_core::timing::build_histogram(&events, &args.source, &args.target, args.bucket_width)
            .map_err(|e| e.to_string())?;
    let out = args.out.unwrap_or_else(|| {
        let stem = args.log.file_stem().unwrap_or_default().to_string_lossy();
        args.log.with_file_name(format!("{stem}_hist.csv"))
    });
    write_atomic(&out, &twinverify_core::timing::render_histogram(&dist))?;
    eprintln!(
        "{} buckets over {} samples -> {}",
        dist.buckets().len(),
        dist.total(),
        out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_suite(args: SuiteArgs) -> Result<u8, String> {
    if args.study != "dt" {
        return Err(format!(
            "unknown study {:?}; the bundled study is \"dt\"",
            args.study
        ));
    }
    let explore = explore_config(args.max_states, args.max_mem_kib, true)?;
    let cfg = SmcConfig { master_seed: args.seed, ..SmcConfig::default() };
    let def = build_case_study(args.profile.into()).map_err(|e| e.to_string())?;
    let pool = thread_pool(args.workers)?;
    let rows = pool.install(|| run_suite(&def, &explore, &cfg));

    for row in &rows {
        if let Some((exprs, runs)) = &row.trajectories {
            write_atomic(&args.traj, &trajectory_csv(exprs, runs))?;
        }
    }
    let all_ok = rows.iter().all(|r| r.ok);
    emit_suite(&rows, args.profile.into(), args.seed, &args.traj, &args.output)?;
    Ok(if all_ok { EXIT_OK } else { EXIT_VIOLATED })
}

fn engine_name(engine: EngineKind) -> &'static str {
    match engine {
        EngineKind::Classical => "cmc",
        EngineKind::Statistical => "smc",
    }
}

fn suite_detail(row: &SuiteRow, seed: u64, traj: &Path) -> String {
    match row.engine {
        EngineKind::Classical => String::new(),
        EngineKind::Statistical => {
            let mut detail = format!("seed={seed}");
            if row.trajectories.is_some() {
                detail.push_str(&format!(" traj={}", traj.display()));
            }
            detail
        }
    }
}

fn emit_suite(
    rows: &[SuiteRow],
    profile: Profile,
    seed: u64,
    traj: &Path,
    output: &OutputArgs,
) -> Result<(), String> {
    let text = match output.format {
        OutputFormat::Json => {
            let rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "id": r.id,
                        "engine": engine_name(r.engine),
                        "expect": r.expect.name(),
                        "verdict": r.verdict,
                        "ok": r.ok,
                        "states_explored": r.stats.states_explored,
                        "cpu_ms": r.stats.cpu_ms,
                        "peak_mem_kib": r.stats.peak_mem_kib,
                        "detail": suite_detail(r, seed, traj),
                    })
                })
                .collect();
            let report = serde_json::json!({
                "command": "suite",
                "study": "dt",
                "profile": profile.name(),
                "seed": seed,
                "all_ok": rows.iter().all(|r| r["ok"] == serde_json::json!(true)),
                "rows": rows,
            });
            let mut s = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            s.push('\n');
            s
        }
        OutputFormat::Table | OutputFormat::Csv => {
            let mut table = Table::new([
                "id", "engine", "expect", "verdict", "ok", "states", "cpu ms", "mem KiB",
                "detail",
            ]);
            for r in rows {
                table.push_row([
                    r.id.to_string(),
                    engine_name(r.engine).to_string(),
                    r.expect.name().to_string(),
                    r.verdict.clone(),
                    if r.ok { "yes".to_string() } else { "no".to_string() },
                    r.stats.states_explored.to_string(),
                    r.stats.cpu_ms.to_string(),
                    r.stats.peak_mem_kib.to_string(),
                    suite_detail(r, seed, traj),
                ]);
            }
            match output.format {
                OutputFormat::Csv => table.to_csv(),
                _ => table.render(),
            }
        }
    };
    print_or_write(&text, output.out.as_deref())
}

fn emit_rows(rows: &[ReportRow], output: &OutputArgs) -> Result<(), String> {
    let text = match output.format {
        OutputFormat::Json => {
            let rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "query": r.query,
                        "engine": r.engine,
                        "verdict": r.verdict,
                        "states_explored": r.states,
                        "cpu_ms": r.cpu_ms,
                        "peak_mem_kib": r.mem_kib,
                        "detail": r.detail,
                    })
                })
                .collect();
            let report = serde_json::json!({ "rows": rows });
            let mut s = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            s.push('\n');
            s
        }
        OutputFormat::Table | OutputFormat::Csv => {
            let mut table = Table::new([
                "#", "engine", "query", "verdict", "states", "cpu ms", "mem KiB", "detail",
            ]);
            for (idx, r) in rows.iter().enumerate() {
                table.push_row([
                    (idx + 1).to_string(),
                    r.engine.to_string(),
                    r.query.clone(),
                    r.verdict.clone(),
                    r.states.to_string(),
                    r.cpu_ms.to_string(),
                    r.mem_kib.to_string(),
                    r.detail.clone(),
                ]);
            }
            match output.format {
                OutputFormat::Csv => table.to_csv(),
                _ => table.render(),
            }
        }
    };
    print_or_write(&text, output.out.as_deref())
}

fn smc_config(args: &SmcArgs) -> Result<SmcConfig, String> {
    let in_unit = |x: f64| x > 0.0 && x < 1.0;
    if !in_unit(args.epsilon) || args.epsilon > 0.5 {
        return Err(format!("--epsilon must lie in (0, 0.5], got {}", args.epsilon));
    }
    if !in_unit(args.alpha) {
        return Err(format!("--alpha must lie in (0, 1), got {}", args.alpha));
    }
    if !in_unit(args.beta) {
        return Err(format!("--beta must lie in (0, 1), got {}", args.beta));
    }
    if !in_unit(args.delta) || args.delta >= 0.5 {
        return Err(format!("--delta must lie in (0, 0.5), got {}", args.delta));
    }
    if args.runs == Some(0) {
        return Err("--runs must be positive".into());
    }
    if args.max_runs == 0 || args.step_bound == 0 {
        return Err("--max-runs and --step-bound must be positive".into());
    }
    Ok(SmcConfig {
        epsilon: args.epsilon,
        alpha: args.alpha,
        beta: args.beta,
        delta: args.delta,
        runs_override: args.runs,
        max_runs: args.max_runs,
        step_bound: args.step_bound,
        master_seed: args.seed,
    })
}

fn explore_config(
    max_states: Option<u64>,
    max_mem_kib: Option<u64>,
    subsumption: bool,
) -> Result<ExploreConfig, String> {
    let mut cfg = ExploreConfig::new();
    cfg.subsumption = subsumption;
    let states = match max_states {
        Some(n) => Some(n),
        None => env_cap("TWINVERIFY_MAX_STATES")?,
    };
    if let Some(n) = states {
        cfg.caps.max_states = n;
    }
    let mem = match max_mem_kib {
        Some(n) => Some(n),
        None => env_cap("TWINVERIFY_MAX_MEM_KIB")?,
    };
    if let Some(n) = mem {
        cfg.caps.max_mem_kib = n;
    }
    Ok(cfg)
}

fn env_cap(name: &str) -> Result<Option<u64>, String> {
    match std::env::var(name) {
        Ok(value) => value
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| format!("{name} must be an unsigned integer, got {value:?}")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(format!("{name}: {e}")),
    }
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| e.to_string())
}

fn read_file(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_model(path: &Path, dist_dir: Option<&Path>) -> Result<Network, String> {
    let text = read_file(path)?;
    let mut net = parse_model(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let dir = match dist_dir {
        Some(d) => d.to_path_buf(),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    resolve_distributions(&mut net, |name| {
        let file = dir.join(name);
        fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))
    })
    .map_err(|e| e.to_string())?;
    let mut errors = Vec::new();
    for diag in validate(&net) {
        match diag.severity {
            Severity::Warning => eprintln!("{diag}"),
            Severity::Error => errors.push(diag.to_string()),
        }
    }
    if errors.is_empty() {
        Ok(net)
    } else {
        Err(errors.join("\n"))
    }
}

fn collect_queries(args: &QueryArgs, net: &Network) -> Result<Vec<(String, Query)>, String> {
    let mut texts = args.queries.clone();
    if let Some(path) = &args.query_file {
        let body = read_file(path)?;
        texts.extend(
            body.lines()
                .map(str::trim)
                .filter(|line| !line.is_empty() && !line.starts_with('#'))
                .map(String::from),
        );
    }
    if texts.is_empty() {
        return Err("no query given; use --query or --query-file".into());
    }
    texts
        .into_iter()
        .map(|text| match parse_query(&text, net) {
            Ok(query) => Ok((text, query)),
            Err(e) => Err(format!("query {text:?}: {e}")),
        })
        .collect()
}

fn require_engine(queries: &[(String, Query)], expected: EngineKind) -> Result<(), String> {
    for (text, query) in queries {
        if query.engine() != expected {
            let needs = match query.engine() {
                EngineKind::Classical => "the classical engine; use `check`",
                EngineKind::Statistical => "the statistical engine; use `smc`",
            };
            return Err(format!("ENGINE_MISMATCH: query {text:?} requires {needs}"));
        }
    }
    Ok(())
}

/// Appends `_<n>` to the file stem for every simulation after the first,
/// so several `simulate` queries in one invocation keep distinct files.
fn numbered_path(base: &Path, index: u32) -> PathBuf {
    if index == 0 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let ext = base.extension().map(|e| e.to_string_lossy().into_owned());
    let name = match ext {
        Some(ext) => format!("{stem}_{index}.{ext}"),
        None => format!("{stem}_{index}"),
    };
    base.with_file_name(name)
}

fn print_or_write(text: &str, out: Option<&Path>) -> Result<(), String> {
    match out {
        Some(path) => write_atomic(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Writes through a temporary sibling and renames it into place, so a
/// crash can not leave a half-written report behind.
fn write_atomic(path: &Path, contents: &str) -> Result<(), String> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".{}.tmp", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| format!("{}: {e}", tmp.display()))?;
    fs::rename(&tmp, path).map_err(|e| format!("{}: {e}", path.display()))
}
