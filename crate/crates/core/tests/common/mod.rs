//! Seeded random inputs shared by the integration test binaries.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twinverify_core::model::{
    Automaton, ChanId, ClockConstraint, ClockId, Delay, Edge, Guard, LocId, Location, Network,
    Relation, Sync,
};

/// Grid resolution in steps per time unit. A satisfiable system of
/// difference constraints over three clocks and a zero reference has a
/// solution built from shortest-path potentials nudged by at most three
/// strictness offsets, so quarter steps never miss a solution.
pub const STEPS: i64 = 4;

pub fn rel_ok(rel: Relation, lhs: i64, rhs: i64) -> bool {
    match rel {
        Relation::Lt => lhs < rhs,
        Relation::Le => lhs <= rhs,
        Relation::Eq => lhs == rhs,
        Relation::Ge => lhs >= rhs,
        Relation::Gt => lhs > rhs,
    }
}

/// A random constraint atom with constants of magnitude at most five.
pub fn random_atom(rng: &mut ChaCha8Rng, clocks: usize) -> ClockConstraint {
    let rels = [Relation::Lt, Relation::Le, Relation::Eq, Relation::Ge, Relation::Gt];
    let rel = rels[rng.random_range(0..rels.len())];
    if clocks >= 2 && rng.random_range(0..10) < 3 {
        let left = rng.random_range(0..clocks);
        let mut right = rng.random_range(0..clocks - 1);
        if right >= left {
            right += 1;
        }
        ClockConstraint::Diff {
            left: ClockId(left),
            right: ClockId(right),
            rel,
            bound: rng.random_range(-5..=5),
        }
    } else {
        ClockConstraint::Single {
            clock: ClockId(rng.random_range(0..clocks)),
            rel,
            bound: rng.random_range(0..=5),
        }
    }
}

/// Truth of a constraint set at one grid point, in grid steps.
pub fn atoms_hold(atoms: &[ClockConstraint], q: &[i64]) -> bool {
    atoms.iter().all(|atom| match *atom {
        ClockConstraint::Single { clock, rel, bound } => rel_ok(rel, q[clock.0], STEPS * bound),
        ClockConstraint::Diff { left, right, rel, bound } => {
            rel_ok(rel, q[left.0] - q[right.0], STEPS * bound)
        }
    })
}

/// A random network of at most two automata over closed constraints only,
/// plus the query text and target of one reachability question.
pub fn random_closed_network(seed: u64) -> (Network, usize, LocId, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(1..=2usize);
    let names = ["A", "B"];
    let rels = [Relation::Le, Relation::Ge, Relation::Eq];
    let mut clocks = vec!["g".to_string()];
    let mut automata = Vec::new();
    for a in 0..count {
        let sojourn = ClockId(clocks.len());
        clocks.push(format!("{}_s", names[a]));
        let locs = rng.random_range(2..=4usize);
        let mut locations = Vec::new();
        for l in 0..locs {
            let delay = match rng.random_range(0..10) {
                0..=6 => Delay::None,
                7 => Delay::Fixed(0),
                _ => Delay::Fixed(rng.random_range(1..=4)),
            };
            let invariant = if rng.random_range(0..4) == 0 {
                vec![ClockConstraint::Single {
                    clock: if rng.random() { sojourn } else { ClockId(0) },
                    rel: Relation::Le,
                    bound: rng.random_range(0..=4),
                }]
            } else {
                Vec::new()
            };
            locations.push(Location { name: format!("L{l}"), invariant, delay, rate: None });
        }
        let mut edges = Vec::new();
        for _ in 0..rng.random_range(1..=6usize) {
            let guard_atoms = (0..rng.random_range(0..=2usize))
                .map(|_| ClockConstraint::Single {
                    clock: if rng.random() { sojourn } else { ClockId(0) },
                    rel: rels[rng.random_range(0..rels.len())],
                    bound: rng.random_range(0..=4),
                })
                .collect();
            let sync = if count == 2 {
                match rng.random_range(0..10) {
                    0..=5 => Sync::Internal,
                    6 | 7 => Sync::Emit(ChanId(0)),
                    _ => Sync::Receive(ChanId(0)),
                }
            } else {
                Sync::Internal
            };
            let resets = if rng.random_range(0..10) < 3 { vec![ClockId(0)] } else { Vec::new() };
            edges.push(Edge {
                source: LocId(rng.random_range(0..locs)),
                target: LocId(rng.random_range(0..locs)),
                guard: Guard { clocks: guard_atoms, vars: Vec::new() },
                sync,
                resets,
                updates: Vec::new(),
            });
        }
        automata.push(Automaton {
            name: names[a].to_string(),
            sojourn,
            initial: LocId(0),
            locations,
            edges,
        });
    }
    let target_aut = rng.random_range(0..count);
    let target_loc = rng.random_range(0..automata[target_aut].locations.len());
    let query = format!("E<> {}.L{}", names[target_aut], target_loc);
    let net = Network {
        clocks,
        vars: Vec::new(),
        channels: if count == 2 { vec!["c".to_string()] } else { Vec::new() },
        distributions: Vec::new(),
        automata,
        default_rate: None,
    };
    (net, target_aut, LocId(target_loc), query)
}
