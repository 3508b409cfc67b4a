//! Property-based invariants tying independent views of the engines
//! together: pointwise zone membership, textual round-trips, monitor
//! complements, sampling fidelity, and indifference to exploration
//! order and worker counts.

mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{atoms_hold, random_atom, random_closed_network, STEPS};
use twinverify_core::dbm::Dbm;
use twinverify_core::model::{
    parse_model, render, Automaton, ChanId, ClockConstraint, ClockId, Delay, DistDecl,
    DistSource, Edge, Guard, IntExpr, LocId, Location, Network, Relation, Sync, Update,
    VarConstraint, VarDecl, VarId,
};
use twinverify_core::query::parse_query;
use twinverify_core::smc::{self, SmcConfig, SmcKind};
use twinverify_core::timing::{Bucket, EmpiricalDistribution};
use twinverify_core::zone::{self, ExploreConfig};

/// A random network exercising the whole declaration surface: variables
/// with guards and updates, inline histograms, empirical and fixed
/// delays, rate overrides, and channels.
fn random_rich_network(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["A", "B"];
    let count = rng.random_range(1..=2usize);

    let dists = rng.random_range(0..=2usize);
    let mut distributions = Vec::new();
    for d in 0..dists {
        let mut lo = rng.random_range(0..=3u32) as f64;
        let mut buckets = Vec::new();
        for _ in 0..rng.random_range(1..=3usize) {
            let hi = lo + rng.random_range(1..=5u32) as f64;
            buckets.push(Bucket { lo, hi, count: rng.random_range(1..=9) });
            lo = hi + rng.random_range(0..=2u32) as f64;
        }
        distributions.push(DistDecl {
            name: format!("d{d}"),
            source: DistSource::Histogram(
                EmpiricalDistribution::new(buckets).expect("generated buckets are valid"),
            ),
        });
    }

    let nvars = rng.random_range(0..=2usize);
    let vars: Vec<VarDecl> = (0..nvars)
        .map(|v| {
            let min = rng.random_range(-3..=0i64);
            let max = rng.random_range(1..=9i64);
            VarDecl { name: format!("n{v}"), init: rng.random_range(min..=max), min, max }
        })
        .collect();

    let int_term = |rng: &mut ChaCha8Rng| {
        if nvars > 0 && rng.random() {
            IntExpr::Var(VarId(rng.random_range(0..nvars)))
        } else {
            IntExpr::Const(rng.random_range(0..=5))
        }
    };
    let rels = [Relation::Lt, Relation::Le, Relation::Eq, Relation::Ge, Relation::Gt];

    let mut clocks = vec!["g".to_string()];
    let mut automata = Vec::new();
    for a in 0..count {
        let sojourn = ClockId(clocks.len());
        clocks.push(format!("{}_s", names[a]));
        let locs = rng.random_range(2..=4usize);
        let mut locations = Vec::new();
        for l in 0..locs {
            let delay = match rng.random_range(0..10) {
                0..=5 => Delay::None,
                6 | 7 => Delay::Fixed(rng.random_range(0..=4)),
                _ if dists > 0 => Delay::Empirical(twinverify_core::model::DistId(
                    rng.random_range(0..dists),
                )),
                _ => Delay::None,
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
            let rate = (rng.random_range(0..8) == 0)
                .then(|| rng.random_range(1..=40u32) as f64 / 8.0);
            locations.push(Location { name: format!("L{l}"), invariant, delay, rate });
        }
        let mut edges = Vec::new();
        for _ in 0..rng.random_range(1..=5usize) {
            let clock_atoms: Vec<ClockConstraint> = (0..rng.random_range(0..=2usize))
                .map(|_| random_atom(&mut rng, clocks.len()).clamped(&clocks))
                .collect();
            let var_atoms: Vec<VarConstraint> = (0..rng.random_range(0..=nvars))
                .map(|_| VarConstraint {
                    var: VarId(rng.random_range(0..nvars)),
                    rel: rels[rng.random_range(0..rels.len())],
                    value: rng.random_range(-3..=9),
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
            let updates: Vec<Update> = (0..rng.random_range(0..=nvars))
                .map(|_| {
                    let mut expr = int_term(&mut rng);
                    for _ in 0..rng.random_range(0..=2) {
                        let next = Box::new(int_term(&mut rng));
                        expr = if rng.random() {
                            IntExpr::Add(Box::new(expr), next)
                        } else {
                            IntExpr::Sub(Box::new(expr), next)
                        };
                    }
                    Update { var: VarId(rng.random_range(0..nvars)), expr }
                })
                .collect();
            edges.push(Edge {
                source: LocId(rng.random_range(0..locs)),
                target: LocId(rng.random_range(0..locs)),
                guard: Guard { clocks: clock_atoms, vars: var_atoms },
                sync,
                resets,
                updates,
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
    Network {
        clocks,
        vars,
        channels: if count == 2 { vec!["c".to_string()] } else { Vec::new() },
        distributions,
        automata,
        default_rate: (rng.random_range(0..5) == 0)
            .then(|| rng.random_range(1..=40u32) as f64 / 8.0),
    }
}

/// Keeps a randomly drawn atom inside the declared clock range.
trait Clamp {
    fn clamped(self, clocks: &[String]) -> Self;
}

impl Clamp for ClockConstraint {
    fn clamped(self, clocks: &[String]) -> Self {
        match self {
            ClockConstraint::Single { clock, rel, bound } => ClockConstraint::Single {
                clock: ClockId(clock.0 % clocks.len()),
                rel,
                bound,
            },
            ClockConstraint::Diff { left, right, rel, bound } => {
                let l = left.0 % clocks.len();
                let mut r = right.0 % clocks.len();
                if r == l {
                    r = (r + 1) % clocks.len();
                }
                ClockConstraint::Diff { left: ClockId(l), right: ClockId(r), rel, bound }
            }
        }
    }
}

/// A one-shot network that reaches its final location within 5 ms with
/// probability `hits` in ten, setting `v` as it arrives.
fn flagged_bernoulli_net(hits: u64) -> Network {
    let text = format!(
        "
dist d {{ [0,1): {hits} [10,11): {} }}
var v = 0 in [0, 1];
automaton K {{
  sojourn x;
  init S;
  loc S {{ delay empirical d; }}
  loc Done;
  edge S -> Done {{ update v = 1; }}
}}
",
        10 - hits
    );
    parse_model(&text).expect("the one-shot model parses")
}

fn grid_points(rng: &mut ChaCha8Rng, clocks: usize, count: usize) -> Vec<Vec<i64>> {
    (0..count)
        .map(|_| (0..clocks).map(|_| rng.random_range(0..16 * STEPS)).collect())
        .collect()
}

fn to_f64(q: &[i64]) -> Vec<f64> {
    q.iter().map(|&v| v as f64 / STEPS as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Rendering a network and parsing the text back reproduces the
    /// network exactly, structure for structure.
    #[test]
    fn the_canonical_text_round_trips(seed in any::<u64>()) {
        let net = random_rich_network(seed);
        let text = render(&net);
        let parsed = parse_model(&text).expect("rendered text parses");
        prop_assert_eq!(parsed, net);
    }

    /// Zone intersection, inclusion, delay closure, and reset agree with
    /// pointwise membership on the sampling grid.
    #[test]
    fn dbm_operations_agree_with_pointwise_membership(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clocks = rng.random_range(1..=3usize);
        let left: Vec<ClockConstraint> =
            (0..rng.random_range(1..=4usize)).map(|_| random_atom(&mut rng, clocks)).collect();
        let right: Vec<ClockConstraint> =
            (0..rng.random_range(1..=4usize)).map(|_| random_atom(&mut rng, clocks)).collect();

        let mut za = Dbm::universal(clocks);
        for atom in &left {
            za.constrain_atom(atom);
        }
        let mut zb = Dbm::universal(clocks);
        for atom in &right {
            zb.constrain_atom(atom);
        }
        let both = za.intersect(&zb);
        prop_assert!(za.includes(&both));
        prop_assert!(zb.includes(&both));

        let mut up = za.clone();
        up.up();
        prop_assert!(up.includes(&za));

        let mut reset = za.clone();
        reset.reset(0);

        for q in grid_points(&mut rng, clocks, 64) {
            let point = to_f64(&q);
            let in_a = atoms_hold(&left, &q);
            let in_b = atoms_hold(&right, &q);
            prop_assert_eq!(za.contains_point(&point), in_a);
            prop_assert_eq!(both.contains_point(&point), in_a && in_b);
            if in_a {
                let mut zeroed = point.clone();
                zeroed[0] = 0.0;
                prop_assert!(reset.contains_point(&zeroed));
            }
            if reset.contains_point(&point) {
                prop_assert_eq!(point[0], 0.0);
            }
        }
    }

    /// Subtraction partitions a zone: a sampled point lies in exactly one
    /// piece when it is in the minuend and outside the subtrahend, and in
    /// no piece otherwise.
    #[test]
    fn dbm_subtraction_partitions_pointwise(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clocks = rng.random_range(1..=3usize);
        let left: Vec<ClockConstraint> =
            (0..rng.random_range(1..=4usize)).map(|_| random_atom(&mut rng, clocks)).collect();
        let right: Vec<ClockConstraint> =
            (0..rng.random_range(1..=4usize)).map(|_| random_atom(&mut rng, clocks)).collect();

        let mut za = Dbm::universal(clocks);
        for atom in &left {
            za.constrain_atom(atom);
        }
        let mut zb = Dbm::universal(clocks);
        for atom in &right {
            zb.constrain_atom(atom);
        }
        let pieces = za.subtract(&zb);
        for piece in &pieces {
            prop_assert!(za.includes(piece));
        }
        for q in grid_points(&mut rng, clocks, 64) {
            let point = to_f64(&q);
            let hits = pieces.iter().filter(|p| p.contains_point(&point)).count();
            let expected = atoms_hold(&left, &q) && !atoms_hold(&right, &q);
            prop_assert_eq!(hits == 1, expected, "point {:?} lies in {} pieces", point, hits);
            prop_assert!(hits <= 1);
        }
    }

    /// Every simulated run satisfies exactly one of `<> v == 1` and
    /// `[] v == 0` within the same horizon, so the success counts of the
    /// two monitors add up to the number of runs.
    #[test]
    fn complementary_monitors_split_the_runs(seed in any::<u64>(), hits in 0u64..=10) {
        let net = flagged_bernoulli_net(hits);
        let cfg = SmcConfig {
            runs_override: Some(60),
            master_seed: seed,
            ..SmcConfig::default()
        };
        let eventually = parse_query("Pr[<=5](<> v == 1)", &net).expect("the query parses");
        let globally = parse_query("Pr[<=5]([] v == 0)", &net).expect("the query parses");
        let one = smc::check_query(&net, &eventually, &cfg).expect("statistical query");
        let two = smc::check_query(&net, &globally, &cfg).expect("statistical query");
        let SmcKind::ProbBound { successes: up, runs, .. } = one.kind else {
            panic!("estimation returned {:?}", one.kind);
        };
        let SmcKind::ProbBound { successes: down, .. } = two.kind else {
            panic!("estimation returned {:?}", two.kind);
        };
        prop_assert_eq!(runs, 60);
        prop_assert_eq!(up + down, runs);
    }

    /// Histogram sampling lands in declared buckets with frequencies
    /// within five standard deviations of the declared weights.
    #[test]
    fn histogram_sampling_tracks_bucket_weights(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lo = rng.random_range(0..=3u32) as f64;
        let mut buckets = Vec::new();
        for _ in 0..rng.random_range(1..=4usize) {
            let hi = lo + rng.random_range(1..=5u32) as f64;
            buckets.push(Bucket { lo, hi, count: rng.random_range(1..=9) });
            lo = hi + rng.random_range(0..=2u32) as f64;
        }
        let dist = EmpiricalDistribution::new(buckets.clone()).expect("buckets are valid");
        let total: u64 = buckets.iter().map(|b| b.count).sum();

        let draws = 3_000usize;
        let mut counts = vec![0u64; buckets.len()];
        for _ in 0..draws {
            let sample = dist.sample(&mut rng);
            let slot = buckets.iter().position(|b| b.lo <= sample && sample < b.hi);
            match slot {
                Some(i) => counts[i] += 1,
                None => prop_assert!(false, "sample {} fell outside every bucket", sample),
            }
        }
        for (i, bucket) in buckets.iter().enumerate() {
            let p = bucket.count as f64 / total as f64;
            let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
            let expected = draws as f64 * p;
            prop_assert!(
                (counts[i] as f64 - expected).abs() <= 5.0 * sigma + 1.0,
                "bucket {i} drew {} times, expected {expected:.1}",
                counts[i]
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Subsumption prunes work, never answers.
    #[test]
    fn subsumption_never_changes_exploration_verdicts(seed in any::<u64>()) {
        let (net, _, _, query_text) = random_closed_network(seed);
        let query = parse_query(&query_text, &net).expect("generated query parses");
        let on = ExploreConfig::new();
        let mut off = ExploreConfig::new();
        off.subsumption = false;
        let with = zone::check_query(&net, &query, &on).expect("corpus nets are classical");
        let without = zone::check_query(&net, &query, &off).expect("corpus nets are classical");
        prop_assert_eq!(with.result, without.result);
    }

    /// Statistical verdicts depend on the seed, never on how many worker
    /// threads happen to run the simulations.
    #[test]
    fn worker_counts_leave_statistical_verdicts_unchanged(
        seed in any::<u64>(),
        hits in 0u64..=10,
    ) {
        let net = flagged_bernoulli_net(hits);
        let cfg = SmcConfig {
            runs_override: Some(80),
            master_seed: seed,
            ..SmcConfig::default()
        };
        let query = parse_query("Pr[<=5](<> v == 1)", &net).expect("the query parses");
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("pool builds")
            .install(|| smc::check_query(&net, &query, &cfg))
            .expect("statistical query");
        let quad = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .expect("pool builds")
            .install(|| smc::check_query(&net, &query, &cfg))
            .expect("statistical query");
        prop_assert_eq!(single.kind, quad.kind);
    }
}
