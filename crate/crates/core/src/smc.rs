//! Stochastic simulation and statistical verification.
//!
//! The statistical engine runs the network under race semantics: on
//! entering a location every automaton samples how long it intends to
//! stay, the earliest pending wake-up acts first, and a handshake pairs
//! the initiating emitter with a receiver that is ready at that instant.
//! Sampled wake-ups gate only self-initiated moves (internal edges and
//! emits); receive edges are passive and fire the moment some emitter
//! picks them.
//!
//! The intended sojourn of a location is drawn as follows.
//!
//! * `delay fixed d` wakes exactly `d` ms after entry.
//! * `delay empirical h` draws from the histogram `h`: a bucket with
//!   probability proportional to its count, then uniformly within it.
//! * No delay annotation, but an invariant with an upper bound: the
//!   tightest bound acts as a deterministic timeout and the automaton
//!   wakes when it expires. Strict bounds are treated as their closure.
//! * Neither: the sojourn is exponential with the location's rate, the
//!   model-wide rate, or [`crate::model::DEFAULT_UNBOUNDED_RATE`].
//!
//! A sampled delay never outlives a declared invariant: the wake-up is
//! capped at the earliest invariant expiry. Invariants act as local
//! timeouts rather than global time blockers; an automaton that cannot
//! move when its timeout expires waits for the next event instead of
//! stopping the world.
//!
//! When an automaton wakes and none of its edges is enabled (a guard is
//! false, or no receiver is ready) it stays pending and retries after
//! the next event. When every automaton is pending or has nothing to
//! initiate, the run is stuck and ends at the last event's timestamp.
//!
//! Reproducibility: each run derives its own generator from the master
//! seed and the run index, guards are evaluated on clock values computed
//! as `now - last_reset`, so fixed delays stay exactly integral, and
//! random choices among equals consume the generator only when there is
//! a real choice (ties between wake-ups, several enabled edges, several
//! ready receivers). Identical inputs and seeds therefore give identical
//! traces and verdicts regardless of worker count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ChanId, ClockConstraint, Delay, Edge, LocId, Network, Relation, Sync};
use crate::query::{NamedExpr, PathProp, Query, Reduce, StateProp, TestRel};
use crate::report::PerfTriple;
use crate::rng::run_seed;

/// Billed bookkeeping units per charged millisecond of `cpu_ms`, shared
/// with the classical engine's cost model; see [`PerfTriple`].
const CPU_UNITS_PER_MS: u64 = 50_000;

/// Two-sided 95% normal quantile, frozen so value reports never drift.
const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Error)]
pub enum SmcError {
    #[error("query requires the classical engine")]
    EngineMismatch,
    #[error("distribution {name:?} is unresolved; load its sidecar histogram first")]
    UnresolvedDistribution { name: String },
    #[error(
        "monitor bound {need} ms exceeds the run horizon {have} ms; generate runs \
         with a time bound of at least {need} ms"
    )]
    Horizon { need: u64, have: f64 },
    #[error("monitor bound must be positive")]
    ZeroHorizon,
    #[error("{what} must lie strictly between {lo} and {hi}, got {got}")]
    OutOfRange { what: &'static str, lo: f64, hi: f64, got: f64 },
    #[error("hypothesis bounds need 0 < theta - delta and theta + delta < 1 (theta = {theta}, delta = {delta})")]
    BadIndifference { theta: f64, delta: f64 },
    #[error("{what} needs at least {min} runs, got {got}")]
    TooFewRuns { what: &'static str, min: u64, got: u64 },
    #[error("compared monitors must share a time bound, got {left} ms and {right} ms")]
    UnequalHorizons { left: u64, right: u64 },
}

/// Discrete part of a state: where every automaton is and what the
/// variables hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Snapshot {
    pub locations: Vec<LocId>,
    pub vars: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Internal,
    Sync(ChanId),
}

/// One discrete step of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time_ms: f64,
    pub kind: EventKind,
    /// Automaton whose wake-up initiated the step.
    pub initiator: usize,
    /// Receiving automaton of a handshake.
    pub receiver: Option<usize>,
    /// Clock values at the firing instant, before the edge resets.
    pub clocks: Vec<f64>,
    /// State after updates and resets.
    pub after: Snapshot,
}

impl Event {
    /// Channel of the event, if it was a handshake.
    pub fn channel(&self) -> Option<ChanId> {
        match self.kind {
            EventKind::Sync(c) => Some(c),
            EventKind::Internal => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EndReason {
    /// The next wake-up lay beyond the requested time bound.
    TimeBound,
    /// The step cap was reached; the run was cut short.
    StepBound,
    /// No automaton can ever move again.
    Stuck,
}

/// A simulated run: the initial state plus every discrete step, in time
/// order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub initial: Snapshot,
    pub events: Vec<Event>,
    /// Time up to which the run is defined; at least the last event's
    /// timestamp.
    pub end_time: f64,
    pub end_reason: EndReason,
}

/// A bounded path property, evaluated over the snapshots of one trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Monitor {
    /// True iff the proposition holds in some snapshot with timestamp at
    /// most the bound; the initial state counts at t = 0.
    EventuallyWithin(StateProp, u64),
    /// True iff the proposition holds in the initial state and in every
    /// snapshot with timestamp at most the bound.
    GloballyWithin(StateProp, u64),
}

impl Monitor {
    pub fn from_path(path: &PathProp, horizon_ms: u64) -> Result<Monitor, SmcError> {
        if horizon_ms == 0 {
            return Err(SmcError::ZeroHorizon);
        }
        Ok(match path {
            PathProp::Eventually(p) => Monitor::EventuallyWithin(p.clone(), horizon_ms),
            PathProp::Globally(p) => Monitor::GloballyWithin(p.clone(), horizon_ms),
        })
    }

    pub fn bound_ms(&self) -> u64 {
        match self {
            Monitor::EventuallyWithin(_, t) | Monitor::GloballyWithin(_, t) => *t,
        }
    }
}

/// Knobs of the statistical engine. Every operation is a pure function
/// of the network, the query, this configuration and the master seed.
#[derive(Debug, Clone)]
pub struct SmcConfig {
    /// Half-width of the probability estimate used to size the default
    /// run count.
    pub epsilon: f64,
    /// One minus the confidence of estimates, and the type-I error bound
    /// of sequential tests.
    pub alpha: f64,
    /// Type-II error bound of sequential tests.
    pub beta: f64,
    /// Half-width of the indifference region of sequential tests.
    pub delta: f64,
    /// Fixed run count for probability estimation, overriding the
    /// Chernoff-Hoeffding default.
    pub runs_override: Option<u64>,
    /// Cap on sequential-test runs; reaching it yields Inconclusive.
    pub max_runs: u64,
    /// Safety cap on steps per run, so livelocks cannot hang a command.
    pub step_bound: u64,
    pub master_seed: u64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        SmcConfig {
            epsilon: 0.05,
            alpha: 0.05,
            beta: 0.05,
            delta: 0.01,
            runs_override: None,
            max_runs: 10_000,
            step_bound: 1_000_000,
            master_seed: 0,
        }
    }
}

/// Accepted direction of a probability comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CompareVerdict {
    /// The first probability is at least the second.
    GreaterOrEqual,
    /// The first probability is below the second.
    Less,
    /// The run cap was reached without leaving the indifference region.
    Inconclusive,
}

/// Values of the tracked expressions at one observation point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub time_ms: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrajectory {
    pub run: u64,
    pub points: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SmcKind {
    /// One-sided reading of an estimated probability: the Clopper-Pearson
    /// lower bound when the point estimate is at least one half, the
    /// upper bound otherwise.
    ProbBound {
        direction: TestRel,
        bound: f64,
        confidence: f64,
        successes: u64,
        runs: u64,
    },
    /// Mean with a 95% normal-approximation half-width.
    Estimate { mean: f64, half_width: f64, confidence: f64, runs: u64 },
    /// Outcome of a sequential probability-threshold test. `holds` is
    /// None when the run cap was reached inside the indifference region.
    TestResult {
        rel: TestRel,
        theta: f64,
        holds: Option<bool>,
        alpha: f64,
        beta: f64,
        runs: u64,
    },
    Compare { verdict: CompareVerdict, alpha: f64, runs: u64 },
    Trajectories { exprs: Vec<String>, runs: Vec<RunTrajectory> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmcVerdict {
    pub kind: SmcKind,
    pub stats: PerfTriple,
}

/// Checks one statistical query. Classical queries belong to
/// [`crate::zone::check_query`].
pub fn check_query(net: &Network, query: &Query, cfg: &SmcConfig) -> Result<SmcVerdict, SmcError> {
    match query {
        Query::Reach(_)
        | Query::Invariant(_)
        | Query::Eventually(_)
        | Query::LeadsTo(_, _)
        | Query::DeadlockFree => Err(SmcError::EngineMismatch),
        Query::ProbEstimate { horizon, path } => {
            estimate_probability(net, &Monitor::from_path(path, *horizon)?, cfg)
        }
        Query::ProbTest { horizon, path, rel, theta } => {
            hypothesis_test(net, &Monitor::from_path(path, *horizon)?, *rel, *theta, cfg)
        }
        Query::ProbCompare { left_horizon, left, right_horizon, right } => compare_probability(
            net,
            &Monitor::from_path(left, *left_horizon)?,
            &Monitor::from_path(right, *right_horizon)?,
            cfg,
        ),
        Query::ValueEstimate { horizon, runs, reduce, expr } => {
            estimate_value(net, expr, *reduce, *horizon, *runs, cfg)
        }
        Query::Simulate { runs, horizon, exprs } => {
            simulate_query(net, *runs, *horizon, exprs, cfg)
        }
    }
}

/// An enabled self-initiated edge: internal when `receivers` is empty,
/// otherwise an emit with its ready receiver (automaton, edge) pairs.
struct Cand {
    edge: usize,
    receivers: Vec<(usize, usize)>,
}

struct Sim<'a> {
    net: &'a Network,
    t: f64,
    locs: Vec<LocId>,
    vars: Vec<i64>,
    /// Absolute time each clock was last reset; its value is `t` minus
    /// this, so guard checks never accumulate rounding error.
    reset_at: Vec<f64>,
    /// Absolute wake-up per automaton, None when the current location
    /// has nothing to initiate.
    wake: Vec<Option<f64>>,
    /// Automata that woke, found nothing enabled, and wait for the next
    /// event before retrying.
    blocked: Vec<bool>,
    rng: ChaCha8Rng,
}

impl<'a> Sim<'a> {
    fn new(net: &'a Network, seed: u64) -> Self {
        let mut sim = Sim {
            net,
            t: 0.0,
            locs: net.initial_locations(),
            vars: net.initial_vars(),
            reset_at: vec![0.0; net.clocks.len()],
            wake: vec![None; net.automata.len()],
            blocked: vec![false; net.automata.len()],
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        for aut in 0..net.automata.len() {
            sim.wake[aut] = sim.sample_wake(aut);
        }
        sim
    }

    fn clock_values(&self) -> Vec<f64> {
        self.reset_at.iter().map(|r| self.t - r).collect()
    }

    /// Samples the absolute wake-up of an automaton for its current
    /// location, or None when every outgoing edge is a receive.
    fn sample_wake(&mut self, aut: usize) -> Option<f64> {
        let a = &self.net.automata[aut];
        let loc = self.locs[aut];
        if !a
            .edges
            .iter()
            .any(|e| e.source == loc && !matches!(e.sync, Sync::Receive(_)))
        {
            return None;
        }
        let l = a.location(loc);
        let expiry = l
            .invariant
            .iter()
            .filter_map(|c| match *c {
                ClockConstraint::Single {
                    clock,
                    rel: Relation::Lt | Relation::Le | Relation::Eq,
                    bound,
                } => Some(self.reset_at[clock.0] + bound as f64),
                _ => None,
            })
            .reduce(f64::min);
        let base = match l.delay {
            Delay::Fixed(d) => Some(self.t + d as f64),
            Delay::Empirical(id) => {
                let h = self.net.histogram(id).expect("checked before simulation");
                Some(self.t + h.sample(&mut self.rng))
            }
            Delay::None => None,
        };
        let wake = match (base, expiry) {
            (Some(b), Some(e)) => b.min(e),
            (Some(b), None) => b,
            (None, Some(e)) => e,
            (None, None) => {
                let rate = self.net.unbounded_rate(aut, loc);
                let u: f64 = self.rng.random();
                self.t + -(1.0 - u).ln() / rate
            }
        };
        Some(wake.max(self.t))
    }

    /// Raw guard of an edge at the current instant. The exact-delay
    /// guard derived from a `fixed` annotation is realised by the
    /// wake-up itself and is not re-evaluated, which keeps enabledness
    /// immune to floating-point round-trips.
    fn edge_ready(&self, edge: &Edge, values: &[f64]) -> bool {
        edge.guard.vars_hold(&self.vars) && edge.guard.clocks.iter().all(|c| c.holds(values))
    }

    /// Would the target invariants still hold after taking these edges?
    /// Only declared invariant atoms matter: the bound derived from a
    /// `fixed` delay is on the sojourn clock, which every dwell-ending
    /// edge resets.
    fn entry_ok(&self, values: &[f64], parts: &[(usize, &Edge)]) -> bool {
        let mut post = values.to_vec();
        for (aut, e) in parts {
            for c in self.net.effective_resets(*aut, e) {
                post[c.0] = 0.0;
            }
        }
        parts.iter().all(|(aut, e)| {
            self.net.automata[*aut]
                .location(e.target)
                .invariant
                .iter()
                .all(|c| c.holds(&post))
        })
    }

    /// Self-initiated edges of an automaton that can fire right now, in
    /// edge order; emits are included only with at least one ready
    /// receiver.
    fn enabled(&self, aut: usize) -> Vec<Cand> {
        let values = self.clock_values();
        let a = &self.net.automata[aut];
        let mut out = Vec::new();
        for (ei, e) in a.edges.iter().enumerate() {
            if e.source != self.locs[aut] {
                continue;
            }
            match e.sync {
                Sync::Receive(_) => {}
                Sync::Internal => {
                    if self.edge_ready(e, &values) && self.entry_ok(&values, &[(aut, e)]) {
                        out.push(Cand { edge: ei, receivers: Vec::new() });
                    }
                }
                Sync::Emit(c) => {
                    if !self.edge_ready(e, &values) {
                        continue;
                    }
                    let mut receivers = Vec::new();
                    for (j, b) in self.net.automata.iter().enumerate() {
                        if j == aut {
                            continue;
                        }
                        for (ri, re) in b.edges.iter().enumerate() {
                            if re.source == self.locs[j]
                                && re.sync == Sync::Receive(c)
                                && self.edge_ready(re, &values)
                                && self.entry_ok(&values, &[(aut, e), (j, re)])
                            {
                                receivers.push((j, ri));
                            }
                        }
                    }
                    if !receivers.is_empty() {
                        out.push(Cand { edge: ei, receivers });
                    }
                }
            }
        }
        out
    }

    /// Takes one edge (plus a paired receive) at the current instant:
    /// emitter updates, then receiver updates, then both edges' resets.
    fn fire(&mut self, mover: usize, eidx: usize, recv: Option<(usize, usize)>) -> Event {
        let clocks = self.clock_values();
        let net = self.net;
        let e = &net.automata[mover].edges[eidx];
        net.apply_updates(&mut self.vars, &e.updates);
        if let Some((j, je)) = recv {
            net.apply_updates(&mut self.vars, &net.automata[j].edges[je].updates);
        }
        for c in net.effective_resets(mover, e) {
            self.reset_at[c.0] = self.t;
        }
        self.locs[mover] = e.target;
        if let Some((j, je)) = recv {
            let re = &net.automata[j].edges[je];
            for c in net.effective_resets(j, re) {
                self.reset_at[c.0] = self.t;
            }
            self.locs[j] = re.target;
        }
        let kind = match e.sync {
            Sync::Emit(c) => EventKind::Sync(c),
            Sync::Internal => EventKind::Internal,
            Sync::Receive(_) => unreachable!("receives never initiate"),
        };
        self.wake[mover] = self.sample_wake(mover);
        if let Some((j, je)) = recv {
            let re = &net.automata[j].edges[je];
            // A receive that stays in place leaves the dwell untouched,
            // so the pending wake-up (if any) remains valid.
            if re.source != re.target {
                self.wake[j] = self.sample_wake(j);
            }
        }
        self.blocked.fill(false);
        Event {
            time_ms: self.t,
            kind,
            initiator: mover,
            receiver: recv.map(|(j, _)| j),
            clocks,
            after: Snapshot { locations: self.locs.clone(), vars: self.vars.clone() },
        }
    }

    fn pick<T: Copy>(&mut self, options: &[T]) -> T {
        if options.len() == 1 {
            options[0]
        } else {
            options[self.rng.random_range(0..options.len())]
        }
    }
}

/// Simulates one run under race semantics. Identical inputs and seed
/// give an identical trace.
pub fn simulate_run(
    net: &Network,
    time_bound_ms: u64,
    step_bound: u64,
    seed: u64,
) -> Result<Trace, SmcError> {
    for a in &net.automata {
        for l in &a.locations {
            if let Delay::Empirical(id) = l.delay {
                net.histogram(id).map_err(|_| SmcError::UnresolvedDistribution {
                    name: net.distributions[id.0].name.clone(),
                })?;
            }
        }
    }
    let mut sim = Sim::new(net, seed);
    let initial = Snapshot { locations: sim.locs.clone(), vars: sim.vars.clone() };
    let horizon = time_bound_ms as f64;
    let mut events: Vec<Event> = Vec::new();
    loop {
        let last = events.last().map_or(0.0, |e| e.time_ms);
        if events.len() as u64 >= step_bound {
            return Ok(Trace { initial, events, end_time: last, end_reason: EndReason::StepBound });
        }
        let mut ready: Option<(f64, Vec<usize>)> = None;
        for aut in 0..sim.wake.len() {
            if sim.blocked[aut] {
                continue;
            }
            let Some(w) = sim.wake[aut] else { continue };
            let r = w.max(sim.t);
            match &mut ready {
                None => ready = Some((r, vec![aut])),
                Some((best, tied)) => {
                    if r < *best {
                        *best = r;
                        tied.clear();
                        tied.push(aut);
                    } else if r == *best {
                        tied.push(aut);
                    }
                }
            }
        }
        let Some((at, tied)) = ready else {
            return Ok(Trace { initial, events, end_time: last, end_reason: EndReason::Stuck });
        };
        if at > horizon {
            return Ok(Trace {
                initial,
                events,
                end_time: horizon,
                end_reason: EndReason::TimeBound,
            });
        }
        let mover = sim.pick(&tied);
        sim.t = at;
        let cands = sim.enabled(mover);
        if cands.is_empty() {
            sim.blocked[mover] = true;
            continue;
        }
        let pick = if cands.len() == 1 { 0 } else { sim.rng.random_range(0..cands.len()) };
        let cand = &cands[pick];
        let edge = cand.edge;
        let recv = if cand.receivers.is_empty() { None } else { Some(sim.pick(&cand.receivers)) };
        events.push(sim.fire(mover, edge, recv));
    }
}

/// Evaluates a monitor on one trace. A non-stuck trace must cover the
/// monitor's bound; a stuck trace extends its final state to the bound.
pub fn evaluate(m: &Monitor, tr: &Trace) -> Result<bool, SmcError> {
    let bound = m.bound_ms() as f64;
    if tr.end_reason != EndReason::Stuck && bound > tr.end_time {
        return Err(SmcError::Horizon { need: m.bound_ms(), have: tr.end_time });
    }
    let within =
        |e: &&Event| e.time_ms <= bound;
    Ok(match m {
        Monitor::EventuallyWithin(p, _) => {
            p.holds(&tr.initial.locations, &tr.initial.vars)
                || tr
                    .events
                    .iter()
                    .filter(within)
                    .any(|e| p.holds(&e.after.locations, &e.after.vars))
        }
        Monitor::GloballyWithin(p, _) => {
            p.holds(&tr.initial.locations, &tr.initial.vars)
                && tr
                    .events
                    .iter()
                    .filter(within)
                    .all(|e| p.holds(&e.after.locations, &e.after.vars))
        }
    })
}

/// Chernoff-Hoeffding run count for a probability estimate with the
/// given half-width and error bound: ceil(ln(2/alpha) / (2 epsilon^2)).
pub fn chernoff_runs(epsilon: f64, alpha: f64) -> u64 {
    ((2.0 / alpha).ln() / (2.0 * epsilon * epsilon)).ceil() as u64
}

/// Two-sided (1 - alpha) Clopper-Pearson interval for `k` successes in
/// `n` runs, computed by inverting the regularised incomplete beta
/// function.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> (f64, f64) {
    let lower = if k == 0 {
        0.0
    } else {
        inv_beta_reg(k as f64, (n - k + 1) as f64, alpha / 2.0)
    };
    let upper = if k == n {
        1.0
    } else {
        inv_beta_reg((k + 1) as f64, (n - k) as f64, 1.0 - alpha / 2.0)
    };
    (lower, upper)
}

/// Solves `beta_reg(a, b, x) = target` for x by bisection. The forward
/// direction is monotone, so 200 halvings pin x to one representable
/// value, keeping intervals reproducible bit for bit.
fn inv_beta_reg(a: f64, b: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if statrs::function::beta::beta_reg(a, b, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Cost-model units billed per recorded simulation step.
fn step_cost_units(net: &Network) -> u64 {
    16 + 4 * net.automata.len() as u64 + 2 * net.clocks.len() as u64 + net.vars.len() as u64
}

/// Estimated bytes one stored observation point occupies: the snapshot
/// vectors plus fixed overhead for the timestamp and kind.
fn point_bytes(net: &Network) -> u64 {
    8 * (net.automata.len() + net.vars.len() + net.clocks.len()) as u64 + 48
}

/// Per-run bookkeeping folded into a [`PerfTriple`].
#[derive(Debug, Clone, Copy)]
struct RunCost {
    steps: u64,
    bytes: u64,
}

fn cost_of(tr: &Trace, net: &Network) -> RunCost {
    let steps = tr.events.len() as u64;
    RunCost { steps, bytes: (steps + 1) * point_bytes(net) }
}

/// Accumulates run costs in run order. Runs are simulated one at a time
/// and dropped, so the memory estimate is the largest single run unless
/// `retain_all` (used when trajectories are kept).
struct StatsFold {
    unit: u64,
    steps: u64,
    peak_bytes: u64,
    retain_all: bool,
}

impl StatsFold {
    fn new(net: &Network, retain_all: bool) -> Self {
        StatsFold { unit: step_cost_units(net), steps: 0, peak_bytes: 0, retain_all }
    }

    fn add(&mut self, cost: RunCost) {
        self.steps += cost.steps;
        if self.retain_all {
            self.peak_bytes += cost.bytes;
        } else {
            self.peak_bytes = self.peak_bytes.max(cost.bytes);
        }
    }

    fn stats(&self) -> PerfTriple {
        PerfTriple {
            states_explored: self.steps,
            cpu_ms: self.steps * self.unit / CPU_UNITS_PER_MS,
            peak_mem_kib: self.peak_bytes.div_ceil(1024),
        }
    }
}

/// Runs `n` independent simulations and maps each trace, in parallel.
/// Results and errors are folded strictly in run order, so the worker
/// count never shows in the output.
fn parallel_runs<T: Send>(
    net: &Network,
    n: u64,
    horizon: u64,
    cfg: &SmcConfig,
    f: impl Fn(u64, &Trace) -> Result<T, SmcError> + std::marker::Sync,
) -> Result<(Vec<T>, PerfTriple), SmcError> {
    let results: Vec<Result<(T, RunCost), SmcError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let tr = simulate_run(net, horizon, cfg.step_bound, run_seed(cfg.master_seed, i))?;
            let v = f(i, &tr)?;
            Ok((v, cost_of(&tr, net)))
        })
        .collect();
    let mut fold = StatsFold::new(net, false);
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        let (v, cost) = r?;
        fold.add(cost);
        out.push(v);
    }
    Ok((out, fold.stats()))
}

fn check_unit_interval(what: &'static str, value: f64) -> Result<(), SmcError> {
    if !(value > 0.0 && value < 1.0) {
        return Err(SmcError::OutOfRange { what, lo: 0.0, hi: 1.0, got: value });
    }
    Ok(())
}

/// Estimates the probability that a monitor accepts a run, from
/// `runs_override` or the Chernoff-Hoeffding count of independent runs,
/// and reports the Clopper-Pearson bound on the side of the point
/// estimate: `Pr >= lower` when at least half the runs succeed,
/// `Pr <= upper` otherwise.
pub fn estimate_probability(
    net: &Network,
    m: &Monitor,
    cfg: &SmcConfig,
) -> Result<SmcVerdict, SmcError> {
    check_unit_interval("epsilon", cfg.epsilon)?;
    check_unit_interval("alpha", cfg.alpha)?;
    let n = cfg.runs_override.unwrap_or_else(|| chernoff_runs(cfg.epsilon, cfg.alpha));
    if n == 0 {
        return Err(SmcError::TooFewRuns { what: "probability estimation", min: 1, got: 0 });
    }
    let (outcomes, stats) = parallel_runs(net, n, m.bound_ms(), cfg, |_, tr| evaluate(m, tr))?;
    let k = outcomes.iter().filter(|&&s| s).count() as u64;
    let (lower, upper) = clopper_pearson(k, n, cfg.alpha);
    let kind = if 2 * k >= n {
        SmcKind::ProbBound {
            direction: TestRel::AtLeast,
            bound: lower,
            confidence: 1.0 - cfg.alpha,
            successes: k,
            runs: n,
        }
    } else {
        SmcKind::ProbBound {
            direction: TestRel::AtMost,
            bound: upper,
            confidence: 1.0 - cfg.alpha,
            successes: k,
            runs: n,
        }
    };
    Ok(SmcVerdict { kind, stats })
}

/// Wald boundaries and per-observation increments of an SPRT between
/// Bernoulli rates p0 < p1.
struct Sprt {
    llr: f64,
    win: f64,
    lose: f64,
    accept_h1: f64,
    accept_h0: f64,
}

impl Sprt {
    fn new(p0: f64, p1: f64, alpha: f64, beta: f64) -> Self {
        Sprt {
            llr: 0.0,
            win: (p1 / p0).ln(),
            lose: ((1.0 - p1) / (1.0 - p0)).ln(),
            accept_h1: ((1.0 - beta) / alpha).ln(),
            accept_h0: (beta / (1.0 - alpha)).ln(),
        }
    }

    /// Feeds one observation; Some(true) accepts H1 (rate at least p1),
    /// Some(false) accepts H0 (rate at most p0).
    fn feed(&mut self, success: bool) -> Option<bool> {
        self.llr += if success { self.win } else { self.lose };
        if self.llr >= self.accept_h1 {
            Some(true)
        } else if self.llr <= self.accept_h0 {
            Some(false)
        } else {
            None
        }
    }
}

/// Sequential probability-ratio test of `Pr(m) >= theta` (or `<=` for
/// [`TestRel::AtMost`]) with indifference half-width `delta`. Runs are
/// consumed strictly in index order; the run cap yields `holds: None`.
pub fn hypothesis_test(
    net: &Network,
    m: &Monitor,
    rel: TestRel,
    theta: f64,
    cfg: &SmcConfig,
) -> Result<SmcVerdict, SmcError> {
    check_unit_interval("alpha", cfg.alpha)?;
    check_unit_interval("beta", cfg.beta)?;
    if theta - cfg.delta <= 0.0 || theta + cfg.delta >= 1.0 {
        return Err(SmcError::BadIndifference { theta, delta: cfg.delta });
    }
    let mut sprt = Sprt::new(theta - cfg.delta, theta + cfg.delta, cfg.alpha, cfg.beta);
    let mut fold = StatsFold::new(net, false);
    let mut decided = None;
    let mut consumed = 0;
    for i in 0..cfg.max_runs {
        let tr = simulate_run(net, m.bound_ms(), cfg.step_bound, run_seed(cfg.master_seed, i))?;
        let success = evaluate(m, &tr)?;
        fold.add(cost_of(&tr, net));
        consumed = i + 1;
        if let Some(h1) = sprt.feed(success) {
            decided = Some(h1);
            break;
        }
    }
    let holds = decided.map(|h1| match rel {
        TestRel::AtLeast => h1,
        TestRel::AtMost => !h1,
    });
    Ok(SmcVerdict {
        kind: SmcKind::TestResult {
            rel,
            theta,
            holds,
            alpha: cfg.alpha,
            beta: cfg.beta,
            runs: consumed,
        },
        stats: fold.stats(),
    })
}

/// Sequential test of `Pr(m1) >= Pr(m2)` on paired runs: both monitors
/// are evaluated on the same trace per run index, concordant pairs carry
/// no information, and an SPRT on the winner of each discordant pair
/// decides the direction. Identical monitors never leave the
/// indifference region and come back Inconclusive at the run cap.
pub fn compare_probability(
    net: &Network,
    m1: &Monitor,
    m2: &Monitor,
    cfg: &SmcConfig,
) -> Result<SmcVerdict, SmcError> {
    check_unit_interval("alpha", cfg.alpha)?;
    if m1.bound_ms() != m2.bound_ms() {
        return Err(SmcError::UnequalHorizons { left: m1.bound_ms(), right: m2.bound_ms() });
    }
    if cfg.delta <= 0.0 || cfg.delta >= 0.5 {
        return Err(SmcError::OutOfRange { what: "delta", lo: 0.0, hi: 0.5, got: cfg.delta });
    }
    let mut sprt = Sprt::new(0.5 - cfg.delta, 0.5 + cfg.delta, cfg.alpha, cfg.alpha);
    let mut fold = StatsFold::new(net, false);
    let mut verdict = CompareVerdict::Inconclusive;
    let mut consumed = 0;
    for i in 0..cfg.max_runs {
        let tr = simulate_run(net, m1.bound_ms(), cfg.step_bound, run_seed(cfg.master_seed, i))?;
        let a = evaluate(m1, &tr)?;
        let b = evaluate(m2, &tr)?;
        fold.add(cost_of(&tr, net));
        consumed = i + 1;
        if a == b {
            continue;
        }
        if let Some(h1) = sprt.feed(a) {
            verdict = if h1 { CompareVerdict::GreaterOrEqual } else { CompareVerdict::Less };
            break;
        }
    }
    Ok(SmcVerdict {
        kind: SmcKind::Compare { verdict, alpha: cfg.alpha, runs: consumed },
        stats: fold.stats(),
    })
}

/// Observation points of a trace within the horizon: the initial state
/// at t = 0, then each event with post-update variables, pre-reset
/// clocks and its channel.
fn observe<T>(
    tr: &Trace,
    net: &Network,
    horizon: u64,
    mut f: impl FnMut(f64, &[i64], &[f64], Option<ChanId>) -> T,
) -> Vec<T> {
    let zeros = vec![0.0; net.clocks.len()];
    let bound = horizon as f64;
    let mut out = vec![f(0.0, &tr.initial.vars, &zeros, None)];
    for e in tr.events.iter().filter(|e| e.time_ms <= bound) {
        out.push(f(e.time_ms, &e.after.vars, &e.clocks, e.channel()));
    }
    out
}

/// A non-stuck run that ends short of the horizon cannot be observed up
/// to it; value estimation and trajectories refuse such runs instead of
/// silently truncating.
fn check_covered(tr: &Trace, horizon: u64) -> Result<(), SmcError> {
    if tr.end_reason != EndReason::Stuck && (horizon as f64) > tr.end_time {
        return Err(SmcError::Horizon { need: horizon, have: tr.end_time });
    }
    Ok(())
}

/// Estimates the per-run maximum or minimum of a numeric expression over
/// all observation points up to the horizon, reported as mean plus a
/// 95% normal-approximation half-width.
pub fn estimate_value(
    net: &Network,
    expr: &NamedExpr,
    reduce: Reduce,
    horizon: u64,
    runs: u64,
    cfg: &SmcConfig,
) -> Result<SmcVerdict, SmcError> {
    if runs < 2 {
        return Err(SmcError::TooFewRuns { what: "value estimation", min: 2, got: runs });
    }
    let (xs, stats) = parallel_runs(net, runs, horizon, cfg, |_, tr| {
        check_covered(tr, horizon)?;
        let samples = observe(tr, net, horizon, |_, vars, clocks, fired| {
            expr.expr.eval_observed(vars, clocks, fired)
        });
        Ok(samples
            .into_iter()
            .reduce(match reduce {
                Reduce::Max => f64::max,
                Reduce::Min => f64::min,
            })
            .expect("the initial state is always observed"))
    })?;
    let n = runs as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let half_width = Z_95 * (var / n).sqrt();
    Ok(SmcVerdict {
        kind: SmcKind::Estimate { mean, half_width, confidence: 0.95, runs },
        stats,
    })
}

/// Samples every tracked expression at every observation point of `runs`
/// independent runs. Runs that go stuck simply stop early; the rows they
/// produced are kept.
pub fn simulate_query(
    net: &Network,
    runs: u64,
    horizon: u64,
    exprs: &[NamedExpr],
    cfg: &SmcConfig,
) -> Result<SmcVerdict, SmcError> {
    if runs == 0 {
        return Err(SmcError::TooFewRuns { what: "simulation", min: 1, got: 0 });
    }
    let (trajectories, mut stats) = parallel_runs(net, runs, horizon, cfg, |i, tr| {
        let points = observe(tr, net, horizon, |time_ms, vars, clocks, fired| TrajectoryPoint {
            time_ms,
            values: exprs.iter().map(|e| e.expr.eval_observed(vars, clocks, fired)).collect(),
        });
        Ok(RunTrajectory { run: i, points })
    })?;
    // Every trajectory is retained, so memory is their sum rather than
    // the largest single run.
    let bytes: u64 = trajectories
        .iter()
        .map(|t| t.points.len() as u64 * point_bytes(net))
        .sum();
    stats.peak_mem_kib = bytes.div_ceil(1024);
    Ok(SmcVerdict {
        kind: SmcKind::Trajectories {
            exprs: exprs.iter().map(|e| e.text.clone()).collect(),
            runs: trajectories,
        },
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::query::parse_query;

    const FIXED_LOOP: &str = "
        automaton A {
          sojourn t;
          init L;
          loc L { delay fixed 5; }
          edge L -> L;
        }
    ";

    const COIN: &str = "
        dist coin { [0,100): 1 }
        automaton A {
          sojourn t;
          init L;
          loc L { delay empirical coin; }
          loc Win;
          edge L -> Win { guard t < 30; }
        }
    ";

    fn coin_net(threshold: u64) -> Network {
        let text = COIN.replace("t < 30", &format!("t < {threshold}"));
        parse_model(&text).unwrap()
    }

    fn win_monitor(net: &Network, horizon: u64) -> Monitor {
        let aut = net.automaton_index("A").unwrap();
        let q = parse_query(&format!("Pr[<={horizon}](<> A.Win)"), net).unwrap();
        let Query::ProbEstimate { path, .. } = q else { panic!("expected an estimate") };
        let _ = aut;
        Monitor::from_path(&path, horizon).unwrap()
    }

    #[test]
    fn fixed_loop_fires_at_exact_multiples() {
        let net = parse_model(FIXED_LOOP).unwrap();
        let tr = simulate_run(&net, 12, 1_000, 7).unwrap();
        let times: Vec<f64> = tr.events.iter().map(|e| e.time_ms).collect();
        assert_eq!(times, vec![5.0, 10.0]);
        assert_eq!(tr.end_reason, EndReason::TimeBound);
        assert_eq!(tr.end_time, 12.0);
        // The sojourn is observed before the loop's reset.
        assert_eq!(tr.events[0].clocks, vec![5.0]);
    }

    #[test]
    fn crossed_emitters_go_stuck_at_zero() {
        let model = "
            chan a;
            chan b;
            automaton P {
              sojourn t;
              init L;
              loc L;
              edge L -> L { sync a!; }
            }
            automaton Q {
              sojourn u;
              init M;
              loc M;
              edge M -> M { sync b!; }
            }
        ";
        let net = parse_model(model).unwrap();
        let tr = simulate_run(&net, 1_000, 1_000, 3).unwrap();
        assert!(tr.events.is_empty());
        assert_eq!(tr.end_reason, EndReason::Stuck);
        assert_eq!(tr.end_time, 0.0);
    }

    #[test]
    fn handshakes_update_emitter_before_receiver() {
        let model = "
            chan go;
            var n = 0 in [0, 3];
            automaton S {
              sojourn t;
              init A;
              loc A { delay fixed 2; }
              loc B;
              edge A -> B { sync go!; update n = n + 1; }
            }
            automaton R {
              sojourn u;
              init W;
              loc W;
              loc D;
              edge W -> D { sync go?; update n = n + 2; }
            }
        ";
        let net = parse_model(model).unwrap();
        let tr = simulate_run(&net, 100, 1_000, 11).unwrap();
        assert_eq!(tr.events.len(), 1);
        let e = &tr.events[0];
        assert_eq!(e.time_ms, 2.0);
        assert_eq!(e.kind, EventKind::Sync(net.channel_index("go").unwrap()));
        assert_eq!(e.initiator, 0);
        assert_eq!(e.receiver, Some(1));
        // n + 1 on the emitter, then n + 2 on the receiver.
        assert_eq!(e.after.vars, vec![3]);
        assert_eq!(tr.end_reason, EndReason::Stuck);
        assert_eq!(tr.end_time, 2.0);
    }

    #[test]
    fn empirical_gaps_stay_inside_the_support() {
        let net = coin_net(100);
        for seed in 0..300 {
            let tr = simulate_run(&net, 10_000, 10, seed).unwrap();
            assert_eq!(tr.events.len(), 1, "every sample is below the win threshold");
            let gap = tr.events[0].time_ms;
            assert!((0.0..100.0).contains(&gap), "gap {gap} outside the bucket");
        }
    }

    #[test]
    fn identical_seeds_reproduce_traces() {
        let net = coin_net(100);
        let a = simulate_run(&net, 1_000, 100, 42).unwrap();
        let b = simulate_run(&net, 1_000, 100, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_run(&net, 1_000, 100, 43).unwrap();
        assert_ne!(a.events[0].time_ms, c.events[0].time_ms);
    }

    #[test]
    fn monitors_follow_the_spec_examples() {
        // n toggles to 1 at t = 7; within 5 ms the invariant holds,
        // within 10 ms it does not.
        let model = "
            var n = 0 in [0, 1];
            automaton A {
              sojourn t;
              init L;
              loc L { delay fixed 7; }
              loc M;
              edge L -> M { update n = 1; }
            }
        ";
        let net = parse_model(model).unwrap();
        let tr = simulate_run(&net, 100, 100, 1).unwrap();
        assert_eq!(tr.end_reason, EndReason::Stuck);
        let prop = |text: &str, horizon: u64| {
            let q = parse_query(&format!("Pr[<={horizon}]([] {text})"), &net).unwrap();
            let Query::ProbEstimate { path, .. } = q else { panic!() };
            Monitor::from_path(&path, horizon).unwrap()
        };
        assert!(evaluate(&prop("n == 0", 5), &tr).unwrap());
        assert!(!evaluate(&prop("n == 0", 10), &tr).unwrap());
        let ev = Monitor::EventuallyWithin(StateProp::True, 3);
        assert!(evaluate(&ev, &tr).unwrap());
        let never = Monitor::EventuallyWithin(StateProp::False, 50);
        assert!(!evaluate(&never, &tr).unwrap());
    }

    #[test]
    fn monitor_bounds_must_fit_the_run() {
        let net = parse_model(FIXED_LOOP).unwrap();
        let tr = simulate_run(&net, 12, 1_000, 7).unwrap();
        let m = Monitor::EventuallyWithin(StateProp::False, 20);
        match evaluate(&m, &tr) {
            Err(SmcError::Horizon { need: 20, .. }) => {}
            other => panic!("expected a horizon error, got {other:?}"),
        }
        // A stuck trace extends to any bound.
        let stuck = simulate_run(&coin_net(30), 1_000, 100, 5).unwrap();
        assert_eq!(stuck.end_reason, EndReason::Stuck);
        let far = Monitor::EventuallyWithin(StateProp::True, 1_000_000);
        assert!(evaluate(&far, &stuck).unwrap());
    }

    #[test]
    fn eventually_not_is_the_negation_of_globally() {
        let net = coin_net(50);
        let q = parse_query("Pr[<=500]([] n == 0)", &parse_model("var n = 0 in [0,1]; automaton B { sojourn s; init I; loc I; }").unwrap());
        assert!(q.is_ok(), "sanity: the query grammar accepts the shape");
        let prop = StateProp::At { aut: 0, loc: LocId(1) };
        for seed in 0..60 {
            let tr = simulate_run(&net, 500, 100, seed).unwrap();
            let glob = Monitor::GloballyWithin(prop.clone(), 400);
            let ev_not =
                Monitor::EventuallyWithin(StateProp::Not(Box::new(prop.clone())), 400);
            assert_eq!(evaluate(&ev_not, &tr).unwrap(), !evaluate(&glob, &tr).unwrap());
        }
    }

    #[test]
    fn chernoff_count_matches_the_closed_form() {
        assert_eq!(chernoff_runs(0.05, 0.05), 738);
        assert_eq!(chernoff_runs(0.01, 0.05), 18_445);
    }

    /// Independent route to Clopper-Pearson: bisection on exact binomial
    /// tail sums, with log factorials accumulated by plain addition.
    fn binomial_bound(k: u64, n: u64, alpha: f64, upper: bool) -> f64 {
        let lnfact: Vec<f64> = std::iter::once(0.0)
            .chain((1..=n).scan(0.0, |acc, i| {
                *acc += (i as f64).ln();
                Some(*acc)
            }))
            .collect();
        let tail = |p: f64, from: u64, to: u64| -> f64 {
            (from..=to)
                .map(|i| {
                    let ln_c = lnfact[n as usize] - lnfact[i as usize] - lnfact[(n - i) as usize];
                    (ln_c + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp()
                })
                .sum()
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let reached = if upper { tail(mid, 0, k) <= alpha / 2.0 } else { tail(mid, k, n) >= alpha / 2.0 };
            if reached {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn clopper_pearson_matches_binomial_tail_bisection() {
        for &(k, n) in &[(1u64, 10u64), (3, 10), (5, 10), (9, 10), (7, 20), (350, 738)] {
            let (lo, hi) = clopper_pearson(k, n, 0.05);
            let olo = binomial_bound(k, n, 0.05, false);
            let ohi = binomial_bound(k, n, 0.05, true);
            assert!((lo - olo).abs() < 1e-8, "lower {lo} vs oracle {olo} at k={k} n={n}");
            assert!((hi - ohi).abs() < 1e-8, "upper {hi} vs oracle {ohi} at k={k} n={n}");
        }
        assert_eq!(clopper_pearson(0, 10, 0.05).0, 0.0);
        assert_eq!(clopper_pearson(10, 10, 0.05).1, 1.0);
    }

    #[test]
    fn estimation_brackets_a_known_bernoulli_rate() {
        let net = coin_net(30);
        let m = win_monitor(&net, 200);
        let cfg = SmcConfig { runs_override: Some(500), master_seed: 42, ..SmcConfig::default() };
        let v = estimate_probability(&net, &m, &cfg).unwrap();
        let SmcKind::ProbBound { direction, bound, confidence, successes, runs } = v.kind else {
            panic!("expected a probability bound");
        };
        assert_eq!(runs, 500);
        assert_eq!(confidence, 0.95);
        let p_hat = successes as f64 / runs as f64;
        assert!((p_hat - 0.3).abs() < 0.07, "estimate {p_hat} far from 0.3");
        // Low point estimates are reported from above.
        assert_eq!(direction, TestRel::AtMost);
        assert!(bound > 0.3 && bound < 0.45, "upper bound {bound}");
        assert!(v.stats.states_explored > 0);
    }

    #[test]
    fn certain_monitors_reach_the_interval_ends() {
        let net = coin_net(100);
        let m = win_monitor(&net, 200);
        let cfg = SmcConfig { runs_override: Some(60), master_seed: 9, ..SmcConfig::default() };
        let v = estimate_probability(&net, &m, &cfg).unwrap();
        let SmcKind::ProbBound { direction, successes, runs, .. } = v.kind else { panic!() };
        assert_eq!(successes, runs);
        assert_eq!(direction, TestRel::AtLeast);
    }

    #[test]
    fn sprt_accepts_clear_hypotheses_quickly() {
        let cfg = SmcConfig { master_seed: 7, ..SmcConfig::default() };
        let strong = coin_net(90);
        let v = hypothesis_test(&strong, &win_monitor(&strong, 200), TestRel::AtLeast, 0.5, &cfg)
            .unwrap();
        let SmcKind::TestResult { holds, runs, .. } = v.kind else { panic!() };
        assert_eq!(holds, Some(true));
        assert!(runs < 200, "needed {runs} runs");

        let weak = coin_net(10);
        let v = hypothesis_test(&weak, &win_monitor(&weak, 200), TestRel::AtLeast, 0.5, &cfg)
            .unwrap();
        let SmcKind::TestResult { holds, .. } = v.kind else { panic!() };
        assert_eq!(holds, Some(false));

        // The same evidence supports the mirrored claim.
        let v = hypothesis_test(&weak, &win_monitor(&weak, 200), TestRel::AtMost, 0.5, &cfg)
            .unwrap();
        let SmcKind::TestResult { holds, .. } = v.kind else { panic!() };
        assert_eq!(holds, Some(true));
    }

    #[test]
    fn sprt_rejects_degenerate_indifference_regions() {
        let net = coin_net(30);
        let m = win_monitor(&net, 200);
        let cfg = SmcConfig { delta: 0.02, ..SmcConfig::default() };
        assert!(matches!(
            hypothesis_test(&net, &m, TestRel::AtLeast, 0.01, &cfg),
            Err(SmcError::BadIndifference { .. })
        ));
        assert!(matches!(
            hypothesis_test(&net, &m, TestRel::AtLeast, 0.999, &cfg),
            Err(SmcError::BadIndifference { .. })
        ));
    }

    #[test]
    fn comparison_separates_unequal_rates() {
        let model = "
            dist coin { [0,100): 1 }
            automaton A {
              sojourn t;
              init L;
              loc L { delay empirical coin; }
              loc Win;
              edge L -> Win { guard t < 80; }
            }
            automaton B {
              sojourn u;
              init M;
              loc M { delay empirical coin; }
              loc Win;
              edge M -> Win { guard u < 20; }
            }
        ";
        let net = parse_model(model).unwrap();
        let m = |text: &str| {
            let q = parse_query(&format!("Pr[<=500](<> {text})"), &net).unwrap();
            let Query::ProbEstimate { path, .. } = q else { panic!() };
            Monitor::from_path(&path, 500).unwrap()
        };
        let cfg = SmcConfig { master_seed: 21, delta: 0.1, ..SmcConfig::default() };
        let v = compare_probability(&net, &m("A.Win"), &m("B.Win"), &cfg).unwrap();
        let SmcKind::Compare { verdict, .. } = v.kind else { panic!() };
        assert_eq!(verdict, CompareVerdict::GreaterOrEqual);
        let v = compare_probability(&net, &m("B.Win"), &m("A.Win"), &cfg).unwrap();
        let SmcKind::Compare { verdict, .. } = v.kind else { panic!() };
        assert_eq!(verdict, CompareVerdict::Less);
    }

    #[test]
    fn comparing_a_monitor_with_itself_is_inconclusive() {
        let net = coin_net(30);
        let m = win_monitor(&net, 200);
        let cfg = SmcConfig { master_seed: 1, max_runs: 50, ..SmcConfig::default() };
        let v = compare_probability(&net, &m, &m, &cfg).unwrap();
        let SmcKind::Compare { verdict, runs, .. } = v.kind else { panic!() };
        assert_eq!(verdict, CompareVerdict::Inconclusive);
        assert_eq!(runs, 50);
    }

    #[test]
    fn compared_monitors_must_share_a_bound() {
        let net = coin_net(30);
        let a = win_monitor(&net, 200);
        let b = win_monitor(&net, 300);
        assert!(matches!(
            compare_probability(&net, &a, &b, &SmcConfig::default()),
            Err(SmcError::UnequalHorizons { left: 200, right: 300 })
        ));
    }

    #[test]
    fn value_estimates_recover_deterministic_extremes() {
        let net = parse_model(FIXED_LOOP).unwrap();
        let cfg = SmcConfig { master_seed: 4, ..SmcConfig::default() };
        let q = parse_query("E[<=12; 5](max: t)", &net).unwrap();
        let Query::ValueEstimate { horizon, runs, reduce, expr } = q else { panic!() };
        let v = estimate_value(&net, &expr, reduce, horizon, runs, &cfg).unwrap();
        let SmcKind::Estimate { mean, half_width, confidence, runs } = v.kind else { panic!() };
        assert_eq!(mean, 5.0);
        assert_eq!(half_width, 0.0);
        assert_eq!(confidence, 0.95);
        assert_eq!(runs, 5);

        let q = parse_query("E[<=12; 5](min: 7)", &net).unwrap();
        let Query::ValueEstimate { horizon, runs, reduce, expr } = q else { panic!() };
        let v = estimate_value(&net, &expr, reduce, horizon, runs, &cfg).unwrap();
        let SmcKind::Estimate { mean, half_width, .. } = v.kind else { panic!() };
        assert_eq!(mean, 7.0);
        assert_eq!(half_width, 0.0);
    }

    #[test]
    fn value_estimation_needs_two_runs() {
        let net = parse_model(FIXED_LOOP).unwrap();
        let q = parse_query("E[<=12; 1](max: t)", &net).unwrap();
        let Query::ValueEstimate { horizon, runs, reduce, expr } = q else { panic!() };
        assert!(matches!(
            estimate_value(&net, &expr, reduce, horizon, runs, &SmcConfig::default()),
            Err(SmcError::TooFewRuns { min: 2, got: 1, .. })
        ));
    }

    #[test]
    fn trajectories_record_the_exact_schedule() {
        let model = "
            chan go;
            var n = 0 in [0, 3];
            automaton S {
              sojourn t;
              init A;
              loc A { delay fixed 2; }
              loc B;
              edge A -> B { sync go!; update n = n + 1; }
            }
            automaton R {
              sojourn u;
              init W;
              loc W;
              loc D;
              edge W -> D { sync go?; update n = n + 2; }
            }
        ";
        let net = parse_model(model).unwrap();
        let q = parse_query("simulate 1 [<=10] {n, fired(go)}", &net).unwrap();
        let Query::Simulate { runs, horizon, exprs } = q else { panic!() };
        let cfg = SmcConfig { master_seed: 2, ..SmcConfig::default() };
        let v = simulate_query(&net, runs, horizon, &exprs, &cfg).unwrap();
        let SmcKind::Trajectories { exprs, runs } = v.kind else { panic!() };
        assert_eq!(exprs, vec!["n".to_string(), "fired(go)".to_string()]);
        assert_eq!(runs.len(), 1);
        let points = &runs[0].points;
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].time_ms, 0.0);
        assert_eq!(points[0].values, vec![0.0, 0.0]);
        assert_eq!(points[1].time_ms, 2.0);
        assert_eq!(points[1].values, vec![3.0, 1.0]);
    }

    #[test]
    fn verdicts_ignore_the_worker_count() {
        let net = coin_net(30);
        let m = win_monitor(&net, 200);
        let cfg = SmcConfig { runs_override: Some(120), master_seed: 33, ..SmcConfig::default() };
        let with_threads = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| estimate_probability(&net, &m, &cfg).unwrap())
        };
        assert_eq!(with_threads(1), with_threads(4));
    }

    #[test]
    fn unresolved_distributions_are_rejected() {
        let model = "
            dist lag from \"lag.csv\";
            automaton A {
              sojourn t;
              init L;
              loc L { delay empirical lag; }
              edge L -> L;
            }
        ";
        let net = parse_model(model).unwrap();
        assert!(matches!(
            simulate_run(&net, 10, 10, 0),
            Err(SmcError::UnresolvedDistribution { name }) if name == "lag"
        ));
    }

    #[test]
    fn classical_queries_are_rejected() {
        let net = parse_model(FIXED_LOOP).unwrap();
        let q = parse_query("A[] not deadlock", &net).unwrap();
        assert!(matches!(
            check_query(&net, &q, &SmcConfig::default()),
            Err(SmcError::EngineMismatch)
        ));
    }

    #[test]
    fn dispatch_covers_every_statistical_form() {
        let net = coin_net(30);
        let cfg = SmcConfig {
            runs_override: Some(40),
            master_seed: 5,
            max_runs: 400,
            ..SmcConfig::default()
        };
        for text in [
            "Pr[<=200](<> A.Win)",
            "Pr[<=200]([] n == 0)",
            "Pr[<=200](<> A.Win) >= 0.1",
            "Pr[<=200](<> A.Win) >= Pr[<=200](<> A.Win)",
        ] {
            let text = text.replace("n == 0", "true");
            let q = parse_query(&text, &net).unwrap();
            check_query(&net, &q, &cfg).unwrap();
        }
    }
}
