//! Networks of timed automata with per-location delay annotations.
//!
//! A network is a closed system: automata synchronise pairwise over binary
//! handshake channels (`c!` emits, `c?` receives), share bounded integer
//! variables, and read a global table of clocks. Each automaton designates
//! a sojourn clock that is reset implicitly whenever the automaton ends a
//! dwell, so "time spent in the current location" is always available to
//! guards and invariants. The one exception is a receive edge that stays
//! in place: listening for a message does not restart the dwell.
//!
//! Delay annotations give locations their dwell-time semantics. `fixed d`
//! uses the exact-delay idiom: the location implicitly carries the
//! invariant `sojourn <= d` and every self-initiated outgoing edge the
//! guard `sojourn >= d`; receive edges stay passive and may interrupt the
//! dwell at any time. Both engines read that idiom through
//! [`Network::effective_invariant`] and [`Network::effective_guard`] so the
//! two interpretations cannot drift apart. `empirical h` is meaningful to
//! the statistical engine only; [`to_approximate`] rewrites it to `fixed`
//! at the histogram's weighted average for the classical engine.
//!
//! One time unit is one millisecond; all constraint constants are integers.

mod parse;
mod render;
mod validate;

pub use parse::{parse_model, ParseError};
pub use render::render;
pub use validate::{validate, Diagnostic, DiagnosticCode, Severity};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timing::{weighted_average, EmpiricalDistribution, TimingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClockId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChanId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DistId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Lt => "<",
            Relation::Le => "<=",
            Relation::Eq => "==",
            Relation::Ge => ">=",
            Relation::Gt => ">",
        }
    }

    pub fn holds_int(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Gt => lhs > rhs,
        }
    }

    pub fn holds_f64(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Lt => lhs < rhs,
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Gt => lhs > rhs,
        }
    }
}

/// An atomic clock constraint with an integer bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClockConstraint {
    Single { clock: ClockId, rel: Relation, bound: i64 },
    Diff { left: ClockId, right: ClockId, rel: Relation, bound: i64 },
}

impl ClockConstraint {
    pub fn holds(&self, values: &[f64]) -> bool {
        match *self {
            ClockConstraint::Single { clock, rel, bound } => {
                rel.holds_f64(values[clock.0], bound as f64)
            }
            ClockConstraint::Diff { left, right, rel, bound } => {
                rel.holds_f64(values[left.0] - values[right.0], bound as f64)
            }
        }
    }
}

/// Small integer expression used in variable guards and updates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntExpr {
    Const(i64),
    Var(VarId),
    Add(Box<IntExpr>, Box<IntExpr>),
    Sub(Box<IntExpr>, Box<IntExpr>),
}

impl IntExpr {
    pub fn eval(&self, vars: &[i64]) -> i64 {
        match self {
            IntExpr::Const(c) => *c,
            IntExpr::Var(v) => vars[v.0],
            IntExpr::Add(a, b) => a.eval(vars).saturating_add(b.eval(vars)),
            IntExpr::Sub(a, b) => a.eval(vars).saturating_sub(b.eval(vars)),
        }
    }

    /// Interval of possible values assuming each variable stays inside the
    /// supplied per-variable interval.
    pub fn interval(&self, domains: &[(i64, i64)]) -> (i64, i64) {
        match self {
            IntExpr::Const(c) => (*c, *c),
            IntExpr::Var(v) => domains[v.0],
            IntExpr::Add(a, b) => {
                let (alo, ahi) = a.interval(domains);
                let (blo, bhi) = b.interval(domains);
                (alo.saturating_add(blo), ahi.saturating_add(bhi))
            }
            IntExpr::Sub(a, b) => {
                let (alo, ahi) = a.interval(domains);
                let (blo, bhi) = b.interval(domains);
                (alo.saturating_sub(bhi), ahi.saturating_sub(blo))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarConstraint {
    pub var: VarId,
    pub rel: Relation,
    pub value: i64,
}

impl VarConstraint {
    pub fn holds(&self, vars: &[i64]) -> bool {
        self.rel.holds_int(vars[self.var.0], self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Update {
    pub var: VarId,
    pub expr: IntExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Guard {
    pub clocks: Vec<ClockConstraint>,
    pub vars: Vec<VarConstraint>,
}

impl Guard {
    /// Do the variable atoms hold in this store?
    pub fn vars_hold(&self, vars: &[i64]) -> bool {
        self.vars.iter().all(|c| c.holds(vars))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sync {
    Internal,
    Emit(ChanId),
    Receive(ChanId),
}

/// Dwell-time annotation of a location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Delay {
    /// No prescribed sojourn; timing comes from invariants alone.
    None,
    /// Exactly `d` milliseconds, encoded via the exact-delay idiom.
    Fixed(u64),
    /// Sojourn sampled from a latency histogram (statistical engine only).
    Empirical(DistId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub name: String,
    pub invariant: Vec<ClockConstraint>,
    pub delay: Delay,
    /// Per-location override of the exponential rate used for unbounded
    /// sojourns in the statistical engine.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: LocId,
    pub target: LocId,
    pub guard: Guard,
    pub sync: Sync,
    pub resets: Vec<ClockId>,
    pub updates: Vec<Update>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Automaton {
    pub name: String,
    pub sojourn: ClockId,
    pub initial: LocId,
    pub locations: Vec<Location>,
    pub edges: Vec<Edge>,
}

impl Automaton {
    pub fn location(&self, id: LocId) -> &Location {
        &self.locations[id.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub init: i64,
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistSource {
    /// Resolved histogram, ready to sample.
    Histogram(EmpiricalDistribution),
    /// Reference to a sidecar histogram CSV, resolved by the loader.
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistDecl {
    pub name: String,
    pub source: DistSource,
}

/// Default exponential rate (per millisecond) for sampling the sojourn of
/// a location with neither a delay annotation nor an invariant bound.
pub const DEFAULT_UNBOUNDED_RATE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Network {
    pub clocks: Vec<String>,
    pub vars: Vec<VarDecl>,
    pub channels: Vec<String>,
    pub distributions: Vec<DistDecl>,
    pub automata: Vec<Automaton>,
    /// Model-wide override of [`DEFAULT_UNBOUNDED_RATE`].
    pub default_rate: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("distribution {name:?} is unresolved; load its sidecar histogram first")]
    UnresolvedDistribution { name: String },
    #[error("distribution {name:?}: {source}")]
    BadHistogram { name: String, source: TimingError },
    #[error("distribution loader failed for {name:?} ({path:?}): {message}")]
    LoaderFailed { name: String, path: String, message: String },
}

impl Network {
    pub fn clock_index(&self, name: &str) -> Option<ClockId> {
        self.clocks.iter().position(|c| c == name).map(ClockId)
    }

    pub fn var_index(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn channel_index(&self, name: &str) -> Option<ChanId> {
        self.channels.iter().position(|c| c == name).map(ChanId)
    }

    pub fn distribution_index(&self, name: &str) -> Option<DistId> {
        self.distributions.iter().position(|d| d.name == name).map(DistId)
    }

    pub fn automaton_index(&self, name: &str) -> Option<usize> {
        self.automata.iter().position(|a| a.name == name)
    }

    /// Resolved histogram for a distribution id.
    pub fn histogram(&self, id: DistId) -> Result<&EmpiricalDistribution, ModelError> {
        let decl = &self.distributions[id.0];
        match &decl.source {
            DistSource::Histogram(h) => Ok(h),
            DistSource::File(_) => {
                Err(ModelError::UnresolvedDistribution { name: decl.name.clone() })
            }
        }
    }

    pub fn initial_locations(&self) -> Vec<LocId> {
        self.automata.iter().map(|a| a.initial).collect()
    }

    pub fn initial_vars(&self) -> Vec<i64> {
        self.vars.iter().map(|v| v.init).collect()
    }

    /// Declared invariant of a location plus the bound derived from a
    /// `fixed` delay annotation.
    pub fn effective_invariant(&self, aut: usize, loc: LocId) -> Vec<ClockConstraint> {
        let a = &self.automata[aut];
        let l = a.location(loc);
        let mut out = l.invariant.clone();
        if let Delay::Fixed(d) = l.delay {
            out.push(ClockConstraint::Single {
                clock: a.sojourn,
                rel: Relation::Le,
                bound: d as i64,
            });
        }
        out
    }

    /// Declared clock guard of an edge plus the lower bound derived from a
    /// `fixed` delay on its source location. Receive edges are exempt
    /// from the derived bound: a handshake initiated by a peer may
    /// interrupt the dwell at any time.
    pub fn effective_guard(&self, aut: usize, edge: &Edge) -> Vec<ClockConstraint> {
        let a = &self.automata[aut];
        let mut out = edge.guard.clocks.clone();
        if let Delay::Fixed(d) = a.location(edge.source).delay {
            if !matches!(edge.sync, Sync::Receive(_)) {
                out.push(ClockConstraint::Single {
                    clock: a.sojourn,
                    rel: Relation::Ge,
                    bound: d as i64,
                });
            }
        }
        out
    }

    /// Declared resets of an edge plus the automaton's sojourn clock.
    /// A receive that stays in place is the one exception: it leaves
    /// the sojourn running, so listening for messages does not restart
    /// the dwell of the location doing the listening.
    pub fn effective_resets(&self, aut: usize, edge: &Edge) -> Vec<ClockId> {
        let a = &self.automata[aut];
        let mut out = edge.resets.clone();
        let listening = matches!(edge.sync, Sync::Receive(_)) && edge.source == edge.target;
        if !listening && !out.contains(&a.sojourn) {
            out.push(a.sojourn);
        }
        out
    }

    /// Applies one edge's updates in declaration order, clamping each
    /// result to the variable's domain. Later updates on the same edge
    /// see earlier ones.
    pub fn apply_updates(&self, vars: &mut [i64], updates: &[Update]) {
        for u in updates {
            let decl = &self.vars[u.var.0];
            vars[u.var.0] = u.expr.eval(vars).clamp(decl.min, decl.max);
        }
    }

    /// Exponential rate for a location with no delay annotation and no
    /// invariant bound on any clock.
    pub fn unbounded_rate(&self, aut: usize, loc: LocId) -> f64 {
        self.automata[aut]
            .location(loc)
            .rate
            .or(self.default_rate)
            .unwrap_or(DEFAULT_UNBOUNDED_RATE)
    }

    /// Per-clock maximal constants over all effective guards and
    /// invariants. A difference bound contributes its magnitude to both
    /// clocks involved.
    pub fn max_constants(&self) -> Vec<i64> {
        let mut k = vec![0i64; self.clocks.len()];
        let mut feed = |c: &ClockConstraint| match *c {
            ClockConstraint::Single { clock, bound, .. } => {
                k[clock.0] = k[clock.0].max(bound.abs());
            }
            ClockConstraint::Diff { left, right, bound, .. } => {
                k[left.0] = k[left.0].max(bound.abs());
                k[right.0] = k[right.0].max(bound.abs());
            }
        };
        for (i, a) in self.automata.iter().enumerate() {
            for l in 0..a.locations.len() {
                for c in self.effective_invariant(i, LocId(l)) {
                    feed(&c);
                }
            }
            for e in &a.edges {
                for c in self.effective_guard(i, e) {
                    feed(&c);
                }
            }
        }
        k
    }
}

/// Resolves `from "file"` distribution references through a loader that
/// maps a path to CSV text.
pub fn resolve_distributions<F>(net: &mut Network, mut loader: F) -> Result<(), ModelError>
where
    F: FnMut(&str) -> Result<String, String>,
{
    for decl in &mut net.distributions {
        if let DistSource::File(path) = &decl.source {
            let text = loader(path).map_err(|message| ModelError::LoaderFailed {
                name: decl.name.clone(),
                path: path.clone(),
                message,
            })?;
            let hist = crate::timing::ingest_histogram(&text)
                .map_err(|source| ModelError::BadHistogram { name: decl.name.clone(), source })?;
            decl.source = DistSource::Histogram(hist);
        }
    }
    Ok(())
}

/// Rewrites every `empirical` delay to `fixed` at the histogram's weighted
/// average, leaving everything else untouched. The result is a plain timed
/// automaton the classical engine can explore.
pub fn to_approximate(net: &Network) -> Result<Network, ModelError> {
    let mut out = net.clone();
    for a in &mut out.automata {
        for l in &mut a.locations {
            if let Delay::Empirical(id) = l.delay {
                let hist = net.histogram(id)?;
                l.delay = Delay::Fixed(weighted_average(hist));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timing::ingest_histogram;

    fn two_bucket_net() -> Network {
        parse_model(
            r#"
            dist d { [0,10): 3 [10,20): 1 }
            automaton A {
              sojourn t;
              init Work;
              loc Work { delay empirical d; }
              edge Work -> Work;
            }
            "#,
        )
        .unwrap()
    }

    #[test]
    fn to_approximate_replaces_empirical_with_weighted_average() {
        let net = two_bucket_net();
        let approx = to_approximate(&net).unwrap();
        assert_eq!(approx.automata[0].locations[0].delay, Delay::Fixed(8));
    }

    #[test]
    fn to_approximate_is_identity_without_empirical_delays() {
        let net = parse_model(
            "automaton A { sojourn t; init L; loc L { delay fixed 5; } edge L -> L; }",
        )
        .unwrap();
        assert_eq!(to_approximate(&net).unwrap(), net);
    }

    #[test]
    fn to_approximate_requires_resolved_distributions() {
        let mut net = two_bucket_net();
        net.distributions[0].source = DistSource::File("d.csv".into());
        assert!(matches!(
            to_approximate(&net),
            Err(ModelError::UnresolvedDistribution { .. })
        ));
    }

    #[test]
    fn locations_sharing_a_distribution_get_the_same_fixed_delay() {
        let net = parse_model(
            r#"
            dist d { [0,10): 3 [10,20): 1 }
            automaton A {
              sojourn t;
              init P;
              loc P { delay empirical d; }
              loc Q { delay empirical d; }
              edge P -> Q;
              edge Q -> P;
            }
            "#,
        )
        .unwrap();
        let approx = to_approximate(&net).unwrap();
        assert_eq!(approx.automata[0].locations[0].delay, Delay::Fixed(8));
        assert_eq!(approx.automata[0].locations[1].delay, Delay::Fixed(8));
    }

    #[test]
    fn fixed_delay_contributes_derived_invariant_and_guard() {
        let net = parse_model(
            "automaton A { sojourn t; init L; loc L { delay fixed 5; } edge L -> L; }",
        )
        .unwrap();
        let inv = net.effective_invariant(0, LocId(0));
        assert_eq!(
            inv,
            vec![ClockConstraint::Single { clock: ClockId(0), rel: Relation::Le, bound: 5 }]
        );
        let guard = net.effective_guard(0, &net.automata[0].edges[0]);
        assert_eq!(
            guard,
            vec![ClockConstraint::Single { clock: ClockId(0), rel: Relation::Ge, bound: 5 }]
        );
        assert_eq!(net.effective_resets(0, &net.automata[0].edges[0]), vec![ClockId(0)]);
    }

    #[test]
    fn max_constants_cover_derived_bounds_and_differences() {
        let net = parse_model(
            r#"
            clock x y;
            automaton A {
              sojourn t;
              init L;
              loc L { inv x <= 3; delay fixed 9; }
              edge L -> L { guard x - y <= 7; }
            }
            "#,
        )
        .unwrap();
        // x: max(3, 7); y: 7; t: 9 (derived from the fixed delay).
        assert_eq!(net.max_constants(), vec![7, 7, 9]);
    }

    #[test]
    fn resolve_distributions_loads_sidecar_histograms() {
        let mut net = two_bucket_net();
        net.distributions[0].source = DistSource::File("d.csv".into());
        resolve_distributions(&mut net, |path| {
            assert_eq!(path, "d.csv");
            Ok("0,4,1\n".to_string())
        })
        .unwrap();
        assert_eq!(
            net.distributions[0].source,
            DistSource::Histogram(ingest_histogram("0,4,1\n").unwrap())
        );
    }
}
