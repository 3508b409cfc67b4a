//! Zone-graph exploration for the classical engine.
//!
//! Symbolic states pair a location vector and variable store with a
//! canonical DBM. Stored zones follow the delay-closed convention: after
//! each discrete step the zone is let flow (`up`), cut back to the active
//! invariants, and extrapolated with per-clock maximal constants, so the
//! graph is finite.
//!
//! Reachability-style queries run breadth-first, which makes witnesses
//! shortest; successors are generated in a fixed order (automaton index,
//! then edge index, then receiver automaton and edge for handshakes), so
//! ties in witness extraction resolve to the lowest indices.
//! Inevitability (`A<> p`) runs a depth-first search restricted to states
//! violating `p`: the property fails if that region contains a deadlocked
//! point or a cycle, where a cycle is a revisit of a (locations, store)
//! key whose zone is included in a state on the current search stack.
//! Zeno behaviour is not excluded: a cycle that stops time still counts
//! as a way of avoiding `p`.
//!
//! The deadlock predicate is exact on zones: a state is deadlocked if
//! some point of its zone cannot reach any enabled move by delaying
//! within the invariants. It is computed by subtracting, from the zone,
//! the past of every move's feasible set.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::dbm::Dbm;
use crate::model::{ChanId, ClockConstraint, Delay, LocId, Network, Relation, Sync};
use crate::query::{Query, StateProp};
use crate::report::PerfTriple;

/// Bookkept DBM cell updates per charged millisecond of `cpu_ms`. The
/// value is a fixed calibration constant; see [`PerfTriple`] for why the
/// engine bills work instead of reading a clock.
const CPU_UNITS_PER_MS: u64 = 50_000;

/// Fixed per-state overhead in the memory estimate, covering keys, queue
/// slots and map entries.
const STATE_OVERHEAD_BYTES: u64 = 64;

#[derive(Debug, Clone)]
pub struct ExploreCaps {
    pub max_states: u64,
    pub max_mem_kib: u64,
}

impl Default for ExploreCaps {
    fn default() -> Self {
        ExploreCaps { max_states: 1_000_000, max_mem_kib: 2 * 1024 * 1024 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExploreConfig {
    pub caps: ExploreCaps,
    /// Discard a new state when an explored state with the same discrete
    /// part has an including zone. Sound for every supported query; the
    /// switch exists to measure its effect.
    pub subsumption: bool,
}

impl ExploreConfig {
    pub fn new() -> Self {
        ExploreConfig { caps: ExploreCaps::default(), subsumption: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LimitKind {
    States,
    Memory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CmcResult {
    Satisfied,
    NotSatisfied,
    ResourceLimit(LimitKind),
}

/// One fired edge in a witness trace. For handshakes the emitting side is
/// listed; the receiver is implied by the channel.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct WitnessStep {
    /// Earliest sojourn of the firing automaton at which the step can
    /// fire, in milliseconds.
    pub min_elapse_ms: i64,
    pub automaton: usize,
    pub edge: usize,
    pub channel: Option<ChanId>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CmcVerdict {
    pub result: CmcResult,
    pub witness: Option<Vec<WitnessStep>>,
    pub stats: PerfTriple,
}

#[derive(Debug, Error)]
pub enum ZoneError {
    #[error("query requires the statistical engine")]
    EngineMismatch,
    #[error(
        "model still has empirical delays; collapse them to their weighted \
         averages before classical checking"
    )]
    EmpiricalDelays,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct SymState {
    locs: Vec<LocId>,
    vars: Vec<i64>,
    zone: Dbm,
}

type Key = (Vec<LocId>, Vec<i64>);

/// A discrete move: one internal edge, or an emit edge paired with a
/// receive edge on the same channel.
#[derive(Debug, Clone, Copy)]
struct Move {
    aut: usize,
    edge: usize,
    receiver: Option<(usize, usize)>,
    channel: Option<ChanId>,
}

/// Checks one classical query. The network must be free of empirical
/// delays; run it through [`crate::model::to_approximate`] first.
pub fn check_query(net: &Network, query: &Query, cfg: &ExploreConfig) -> Result<CmcVerdict, ZoneError> {
    for a in &net.automata {
        for l in &a.locations {
            if matches!(l.delay, Delay::Empirical(_)) {
                return Err(ZoneError::EmpiricalDelays);
            }
        }
    }
    let mut engine = Engine::new(net, cfg);
    let verdict = match query {
        Query::Reach(p) => {
            let (outcome, witness) = engine.search(Goal::FindProp(p));
            match outcome {
                Outcome::Hit => engine.verdict(CmcResult::Satisfied, witness),
                Outcome::Exhausted => engine.verdict(CmcResult::NotSatisfied, None),
                Outcome::Cap(kind) => engine.verdict(CmcResult::ResourceLimit(kind), None),
            }
        }
        Query::Invariant(p) => {
            let negated = StateProp::Not(Box::new(p.clone()));
            let (outcome, witness) = engine.search(Goal::FindProp(&negated));
            match outcome {
                Outcome::Hit => engine.verdict(CmcResult::NotSatisfied, witness),
                Outcome::Exhausted => engine.verdict(CmcResult::Satisfied, None),
                Outcome::Cap(kind) => engine.verdict(CmcResult::ResourceLimit(kind), None),
            }
        }
        Query::Eventually(p) => {
            let mut caches = LiveCaches::default();
            match engine.initial() {
                None => engine.verdict(CmcResult::Satisfied, None),
                Some(init) => match engine.a_eventually(init, p, &mut caches, Vec::new()) {
                    Ok((true, _)) => engine.verdict(CmcResult::Satisfied, None),
                    Ok((false, witness)) => {
                        engine.verdict(CmcResult::NotSatisfied, Some(witness))
                    }
                    Err(kind) => engine.verdict(CmcResult::ResourceLimit(kind), None),
                },
            }
        }
        Query::LeadsTo(from, to) => {
            let (outcome, witness) = engine.search(Goal::CheckLeadsTo { from, to });
            match outcome {
                Outcome::Hit => engine.verdict(CmcResult::NotSatisfied, witness),
                Outcome::Exhausted => engine.verdict(CmcResult::Satisfied, None),
                Outcome::Cap(kind) => engine.verdict(CmcResult::ResourceLimit(kind), None),
            }
        }
        Query::DeadlockFree => {
            let (outcome, witness) = engine.search(Goal::FindDeadlock);
            match outcome {
                Outcome::Hit => engine.verdict(CmcResult::NotSatisfied, witness),
                Outcome::Exhausted => engine.verdict(CmcResult::Satisfied, None),
                Outcome::Cap(kind) => engine.verdict(CmcResult::ResourceLimit(kind), None),
            }
        }
        _ => return Err(ZoneError::EngineMismatch),
    };
    Ok(verdict)
}

enum Goal<'q> {
    FindProp(&'q StateProp),
    FindDeadlock,
    CheckLeadsTo { from: &'q StateProp, to: &'q StateProp },
}

enum Outcome {
    Hit,
    Exhausted,
    Cap(LimitKind),
}

/// Exact-zone memo of inevitability verdicts, shared between the nested
/// searches of one leads-to query. Inclusion would be unsound here: a
/// smaller zone can satisfy `A<> p` while a larger one does not, and the
/// stack rule already errs on the conservative side.
#[derive(Default)]
struct LiveCaches {
    black: HashMap<Key, Vec<(Dbm, bool)>>,
}

struct Engine<'a> {
    net: &'a Network,
    cfg: &'a ExploreConfig,
    k: Vec<i64>,
    dim_cost: u64,
    state_bytes: u64,
    states_explored: u64,
    stored_states: u64,
    cost_units: u64,
}

impl<'a> Engine<'a> {
    fn new(net: &'a Network, cfg: &'a ExploreConfig) -> Self {
        let dim = net.clocks.len() + 1;
        let state_bytes = (dim * dim) as u64 * 16
            + net.automata.len() as u64 * 8
            + net.vars.len() as u64 * 8
            + STATE_OVERHEAD_BYTES;
        Engine {
            net,
            cfg,
            k: net.max_constants(),
            dim_cost: (dim * dim * dim) as u64,
            state_bytes,
            states_explored: 0,
            stored_states: 0,
            cost_units: 0,
        }
    }

    fn verdict(&self, result: CmcResult, witness: Option<Vec<WitnessStep>>) -> CmcVerdict {
        CmcVerdict {
            result,
            witness,
            stats: PerfTriple {
                states_explored: self.states_explored,
                cpu_ms: self.cost_units / CPU_UNITS_PER_MS,
                peak_mem_kib: (self.stored_states * self.state_bytes).div_ceil(1024),
            },
        }
    }

    /// Accounts one stored state against the caps.
    fn store(&mut self) -> Result<(), LimitKind> {
        self.stored_states += 1;
        if self.stored_states > self.cfg.caps.max_states {
            return Err(LimitKind::States);
        }
        if self.stored_states * self.state_bytes > self.cfg.caps.max_mem_kib.saturating_mul(1024) {
            return Err(LimitKind::Memory);
        }
        Ok(())
    }

    fn invariants(&self, locs: &[LocId]) -> Vec<ClockConstraint> {
        let mut out = Vec::new();
        for (i, l) in locs.iter().enumerate() {
            out.extend(self.net.effective_invariant(i, *l));
        }
        out
    }

    fn initial(&mut self) -> Option<SymState> {
        let locs = self.net.initial_locations();
        let vars = self.net.initial_vars();
        let mut zone = Dbm::zero(self.net.clocks.len());
        let inv = self.invariants(&locs);
        zone.constrain_all(&inv);
        if zone.is_empty() {
            return None;
        }
        zone.up();
        zone.constrain_all(&inv);
        zone.extrapolate(&self.k);
        Some(SymState { locs, vars, zone })
    }

    /// Enumerates discrete moves whose variable guards hold, in canonical
    /// order. Clock feasibility is left to the zone operations.
    fn moves(&self, locs: &[LocId], vars: &[i64]) -> Vec<Move> {
        let mut out = Vec::new();
        for (a, automaton) in self.net.automata.iter().enumerate() {
            for (e, edge) in automaton.edges.iter().enumerate() {
                if edge.source != locs[a] || !edge.guard.vars_hold(vars) {
                    continue;
                }
                match edge.sync {
                    Sync::Internal => {
                        out.push(Move { aut: a, edge: e, receiver: None, channel: None })
                    }
                    Sync::Emit(c) => {
                        for (b, partner) in self.net.automata.iter().enumerate() {
                            if b == a {
                                continue;
                            }
                            for (f, redge) in partner.edges.iter().enumerate() {
                                if redge.source == locs[b]
                                    && redge.sync == Sync::Receive(c)
                                    && redge.guard.vars_hold(vars)
                                {
                                    out.push(Move {
                                        aut: a,
                                        edge: e,
                                        receiver: Some((b, f)),
                                        channel: Some(c),
                                    });
                                }
                            }
                        }
                    }
                    Sync::Receive(_) => {}
                }
            }
        }
        out
    }

    /// The move's clock-feasible set before firing: the zone cut by the
    /// guards of both sides and by the target-invariant atoms whose
    /// clocks survive the move's resets. The zone is delay-closed within
    /// the current invariants already, so those need no re-check.
    fn feasible_now(&self, zone: &Dbm, mv: &Move) -> Option<Dbm> {
        let mut z = zone.clone();
        let mut parts = vec![(mv.aut, mv.edge)];
        if let Some(r) = mv.receiver {
            parts.push(r);
        }
        let mut resets = Vec::new();
        for (a, e) in &parts {
            resets.extend(self.net.effective_resets(*a, &self.net.automata[*a].edges[*e]));
        }
        for (a, e) in &parts {
            let edge = &self.net.automata[*a].edges[*e];
            z.constrain_all(&self.net.effective_guard(*a, edge));
            if z.is_empty() {
                return None;
            }
        }
        for (a, e) in &parts {
            let edge = &self.net.automata[*a].edges[*e];
            for atom in self.net.effective_invariant(*a, edge.target) {
                match atom {
                    ClockConstraint::Single { clock, rel, bound } if resets.contains(&clock) => {
                        // The clock restarts at zero on this move; the atom
                        // holds afterwards unless it excludes zero outright.
                        if bound < 0 || (bound == 0 && rel == Relation::Lt) {
                            return None;
                        }
                    }
                    atom => {
                        z.constrain_atom(&atom);
                        if z.is_empty() {
                            return None;
                        }
                    }
                }
            }
        }
        Some(z)
    }

    /// Computes the delay-closed successor, or `None` when the move is
    /// clock-infeasible. Also yields the step's earliest firing offset.
    fn fire(&self, state: &SymState, mv: &Move) -> Option<(SymState, WitnessStep)> {
        let mut zone = self.feasible_now(&state.zone, mv)?;
        let emitter = &self.net.automata[mv.aut];
        let min_elapse_ms = zone.lower_bound(emitter.sojourn.0);

        let mut vars = state.vars.clone();
        let mut locs = state.locs.clone();
        let mut parts = vec![(mv.aut, mv.edge)];
        if let Some(r) = mv.receiver {
            parts.push(r);
        }
        for (a, e) in &parts {
            let edge = &self.net.automata[*a].edges[*e];
            self.net.apply_updates(&mut vars, &edge.updates);
            locs[*a] = edge.target;
        }
        for (a, e) in &parts {
            let edge = &self.net.automata[*a].edges[*e];
            for c in self.net.effective_resets(*a, edge) {
                zone.reset(c.0);
            }
        }
        let inv = self.invariants(&locs);
        zone.constrain_all(&inv);
        if zone.is_empty() {
            return None;
        }
        zone.up();
        zone.constrain_all(&inv);
        zone.extrapolate(&self.k);
        let step = WitnessStep {
            min_elapse_ms,
            automaton: mv.aut,
            edge: mv.edge,
            channel: mv.channel,
        };
        Some((SymState { locs, vars, zone }, step))
    }

    /// Exact deadlock predicate: does some point of the zone fail to
    /// reach any enabled move by delaying inside the invariants?
    fn has_deadlocked_point(&mut self, state: &SymState) -> bool {
        let moves = self.moves(&state.locs, &state.vars);
        self.cost_units += self.dim_cost * (moves.len() as u64 + 1);
        let mut escapes = Vec::new();
        for mv in &moves {
            if let Some(feasible) = self.feasible_now(&state.zone, mv) {
                let mut past = feasible;
                past.down();
                escapes.push(past);
            }
        }
        state.zone.escapes_all(&escapes)
    }

    fn successors(&mut self, state: &SymState) -> Vec<(SymState, WitnessStep)> {
        let moves = self.moves(&state.locs, &state.vars);
        let mut out = Vec::new();
        for mv in &moves {
            if let Some(succ) = self.fire(state, mv) {
                out.push(succ);
            }
        }
        self.cost_units += self.dim_cost * (moves.len() as u64 + 1);
        out
    }

    /// Breadth-first search over the reachable symbolic graph. Returns a
    /// hit with its witness path, exhaustion, or the cap that fired.
    fn search(&mut self, goal: Goal<'_>) -> (Outcome, Option<Vec<WitnessStep>>) {
        struct Node {
            state: SymState,
            parent: Option<(usize, WitnessStep)>,
        }
        let mut arena: Vec<Node> = Vec::new();
        let mut passed: HashMap<Key, Vec<usize>> = HashMap::new();
        let mut waiting: VecDeque<usize> = VecDeque::new();
        let mut caches = LiveCaches::default();

        let path_to = |arena: &Vec<Node>, mut idx: usize| {
            let mut steps = Vec::new();
            while let Some((parent, step)) = &arena[idx].parent {
                steps.push(step.clone());
                idx = *parent;
            }
            steps.reverse();
            steps
        };

        let Some(init) = self.initial() else {
            // The invariants exclude even the zero valuation: no states.
            return (Outcome::Exhausted, None);
        };
        if let Err(kind) = self.store() {
            return (Outcome::Cap(kind), None);
        }
        arena.push(Node { state: init, parent: None });
        passed.insert(
            (arena[0].state.locs.clone(), arena[0].state.vars.clone()),
            vec![0],
        );
        waiting.push_back(0);

        // Checks the goal at one stored state; Some(witness) is a hit.
        let check = |engine: &mut Engine<'a>,
                         arena: &Vec<Node>,
                         caches: &mut LiveCaches,
                         idx: usize|
         -> Result<Option<Vec<WitnessStep>>, LimitKind> {
            let state = &arena[idx].state;
            match &goal {
                Goal::FindProp(p) => {
                    if p.holds(&state.locs, &state.vars) {
                        return Ok(Some(path_to(arena, idx)));
                    }
                }
                Goal::FindDeadlock => {
                    if engine.has_deadlocked_point(state) {
                        return Ok(Some(path_to(arena, idx)));
                    }
                }
                Goal::CheckLeadsTo { from, to } => {
                    if from.holds(&state.locs, &state.vars)
                        && !to.holds(&state.locs, &state.vars)
                    {
                        let (ok, inner) =
                            engine.a_eventually(state.clone(), to, caches, Vec::new())?;
                        if !ok {
                            let mut steps = path_to(arena, idx);
                            steps.extend(inner);
                            return Ok(Some(steps));
                        }
                    }
                }
            }
            Ok(None)
        };

        match check(self, &arena, &mut caches, 0) {
            Ok(Some(witness)) => return (Outcome::Hit, Some(witness)),
            Ok(None) => {}
            Err(kind) => return (Outcome::Cap(kind), None),
        }

        while let Some(idx) = waiting.pop_front() {
            self.states_explored += 1;
            let state = arena[idx].state.clone();
            for (succ, step) in self.successors(&state) {
                let key: Key = (succ.locs.clone(), succ.vars.clone());
                let known = passed.entry(key).or_default();
                let skip = if self.cfg.subsumption {
                    known.iter().any(|&i| arena[i].state.zone.includes(&succ.zone))
                } else {
                    known.iter().any(|&i| arena[i].state.zone == succ.zone)
                };
                if skip {
                    continue;
                }
                if let Err(kind) = self.store() {
                    return (Outcome::Cap(kind), None);
                }
                let new_idx = arena.len();
                known.push(new_idx);
                arena.push(Node { state: succ, parent: Some((idx, step)) });
                waiting.push_back(new_idx);
                match check(self, &arena, &mut caches, new_idx) {
                    Ok(Some(witness)) => return (Outcome::Hit, Some(witness)),
                    Ok(None) => {}
                    Err(kind) => return (Outcome::Cap(kind), None),
                }
            }
        }
        (Outcome::Exhausted, None)
    }

    /// Depth-first inevitability check: `true` when every maximal run
    /// from `root` reaches a state satisfying `prop`. On `false` the
    /// returned steps extend `prefix` to the state where avoidance was
    /// established (a deadlocked point or a zone-included revisit).
    fn a_eventually(
        &mut self,
        root: SymState,
        prop: &StateProp,
        caches: &mut LiveCaches,
        prefix: Vec<WitnessStep>,
    ) -> Result<(bool, Vec<WitnessStep>), LimitKind> {
        enum Visit {
            Verdict(bool),
            Expand,
        }

        struct Frame {
            key: Key,
            state: SymState,
            step: Option<WitnessStep>,
            succs: Vec<(SymState, WitnessStep)>,
            next: usize,
        }

        let mut grey: HashMap<Key, Vec<Dbm>> = HashMap::new();
        let mut stack: Vec<Frame> = Vec::new();

        let visit = |engine: &mut Engine<'a>,
                     grey: &HashMap<Key, Vec<Dbm>>,
                     caches: &LiveCaches,
                     state: &SymState|
         -> Visit {
            if prop.holds(&state.locs, &state.vars) {
                return Visit::Verdict(true);
            }
            let key: Key = (state.locs.clone(), state.vars.clone());
            if let Some(entries) = caches.black.get(&key) {
                if let Some((_, verdict)) = entries.iter().find(|(z, _)| *z == state.zone) {
                    return Visit::Verdict(*verdict);
                }
            }
            if let Some(zones) = grey.get(&key) {
                if zones.iter().any(|z| z.includes(&state.zone)) {
                    // Loop in the avoidance region.
                    return Visit::Verdict(false);
                }
            }
            if engine.has_deadlocked_point(state) {
                return Visit::Verdict(false);
            }
            Visit::Expand
        };

        let witness = |stack: &Vec<Frame>, last: Option<&WitnessStep>| {
            let mut steps = prefix.clone();
            steps.extend(stack.iter().filter_map(|f| f.step.clone()));
            if let Some(s) = last {
                steps.push(s.clone());
            }
            steps
        };

        let fail = |caches: &mut LiveCaches, stack: &Vec<Frame>| {
            // Every frame on the stack inherits the failure: a run that
            // avoids `prop` forever extends through it.
            for f in stack {
                caches.black.entry(f.key.clone()).or_default().push((f.state.zone.clone(), false));
            }
        };

        let push = |engine: &mut Engine<'a>,
                    grey: &mut HashMap<Key, Vec<Dbm>>,
                    stack: &mut Vec<Frame>,
                    state: SymState,
                    step: Option<WitnessStep>|
         -> Result<(), LimitKind> {
            engine.states_explored += 1;
            engine.store()?;
            let key: Key = (state.locs.clone(), state.vars.clone());
            grey.entry(key.clone()).or_default().push(state.zone.clone());
            let succs = engine.successors(&state);
            stack.push(Frame { key, state, step, succs, next: 0 });
            Ok(())
        };

        match visit(self, &grey, caches, &root) {
            Visit::Verdict(true) => return Ok((true, Vec::new())),
            Visit::Verdict(false) => return Ok((false, witness(&stack, None))),
            Visit::Expand => push(self, &mut grey, &mut stack, root, None)?,
        }

        enum Turn {
            Stalled,
            Next(SymState, WitnessStep),
            Done,
        }

        while !stack.is_empty() {
            let turn = {
                let frame = stack.last_mut().expect("stack non-empty");
                if frame.succs.is_empty() {
                    Turn::Stalled
                } else if frame.next < frame.succs.len() {
                    let item = frame.succs[frame.next].clone();
                    frame.next += 1;
                    Turn::Next(item.0, item.1)
                } else {
                    Turn::Done
                }
            };
            match turn {
                Turn::Stalled => {
                    // No discrete successor at all: every run stalls here.
                    let w = witness(&stack, None);
                    fail(caches, &stack);
                    return Ok((false, w));
                }
                Turn::Next(succ, step) => match visit(self, &grey, caches, &succ) {
                    Visit::Verdict(true) => {}
                    Visit::Verdict(false) => {
                        let w = witness(&stack, Some(&step));
                        caches
                            .black
                            .entry((succ.locs.clone(), succ.vars.clone()))
                            .or_default()
                            .push((succ.zone.clone(), false));
                        fail(caches, &stack);
                        return Ok((false, w));
                    }
                    Visit::Expand => {
                        push(self, &mut grey, &mut stack, succ, Some(step))?;
                    }
                },
                Turn::Done => {
                    let frame = stack.pop().expect("frame present");
                    let zones = grey.get_mut(&frame.key).expect("grey entry present");
                    zones.pop();
                    if zones.is_empty() {
                        grey.remove(&frame.key);
                    }
                    caches.black.entry(frame.key).or_default().push((frame.state.zone, true));
                }
            }
        }
        Ok((true, Vec::new()))
    }
}
