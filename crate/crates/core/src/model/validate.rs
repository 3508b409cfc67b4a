//! Structural checks that parsing alone cannot express.

use std::fmt;

use super::{ClockConstraint, DistSource, Network, Relation, Sync};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticCode {
    /// Invariants must be upper bounds on single clocks (`x < c` or
    /// `x <= c`); anything else breaks the delay-closure step.
    InvariantNotUpperBound,
    /// A channel with no emitting edge or no receiving edge can never fire.
    ChannelUnpaired,
    /// Variable initial value outside its declared domain, or an empty
    /// domain.
    VarDomainBroken,
    /// An update can push its variable outside the declared domain for
    /// some store satisfying the edge's own variable guard.
    UpdateMayLeaveDomain,
    /// Exponential rates must be positive and finite.
    NonPositiveRate,
    /// A `from "file"` distribution that was never resolved to a histogram.
    UnresolvedDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Checks a parsed network and returns every finding. An empty result means
/// the model is ready for either engine (empirical delays still need
/// resolved histograms, which is reported here too).
pub fn validate(net: &Network) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let error = |out: &mut Vec<Diagnostic>, code, message: String| {
        out.push(Diagnostic { code, severity: Severity::Error, message });
    };

    for v in &net.vars {
        if v.min > v.max {
            error(
                &mut out,
                DiagnosticCode::VarDomainBroken,
                format!("variable `{}` has empty domain [{}, {}]", v.name, v.min, v.max),
            );
        } else if v.init < v.min || v.init > v.max {
            error(
                &mut out,
                DiagnosticCode::VarDomainBroken,
                format!(
                    "variable `{}` starts at {} outside its domain [{}, {}]",
                    v.name, v.init, v.min, v.max
                ),
            );
        }
    }

    for d in &net.distributions {
        if let DistSource::File(path) = &d.source {
            error(
                &mut out,
                DiagnosticCode::UnresolvedDistribution,
                format!("distribution `{}` still points at \"{path}\"; load it first", d.name),
            );
        }
    }

    if let Some(rate) = net.default_rate {
        if !(rate.is_finite() && rate > 0.0) {
            error(
                &mut out,
                DiagnosticCode::NonPositiveRate,
                format!("model-level rate {rate} must be positive and finite"),
            );
        }
    }

    let mut emitters = vec![false; net.channels.len()];
    let mut receivers = vec![false; net.channels.len()];

    for a in &net.automata {
        for l in &a.locations {
            for c in &l.invariant {
                let upper = matches!(
                    c,
                    ClockConstraint::Single { rel: Relation::Lt | Relation::Le, .. }
                );
                if !upper {
                    error(
                        &mut out,
                        DiagnosticCode::InvariantNotUpperBound,
                        format!(
                            "automaton `{}`, location `{}`: invariant atoms must be upper \
                             bounds on a single clock",
                            a.name, l.name
                        ),
                    );
                }
            }
            if let Some(rate) = l.rate {
                if !(rate.is_finite() && rate > 0.0) {
                    error(
                        &mut out,
                        DiagnosticCode::NonPositiveRate,
                        format!(
                            "automaton `{}`, location `{}`: rate {rate} must be positive \
                             and finite",
                            a.name, l.name
                        ),
                    );
                }
            }
        }
        for (k, e) in a.edges.iter().enumerate() {
            match e.sync {
                Sync::Internal => {}
                Sync::Emit(c) => emitters[c.0] = true,
                Sync::Receive(c) => receivers[c.0] = true,
            }
            // Domains refined by the edge's own variable guard: an update
            // like `lag = lag + 1` is safe under `guard lag < 4` even when
            // the full domain would overflow.
            let mut domains: Vec<(i64, i64)> = net.vars.iter().map(|v| (v.min, v.max)).collect();
            for g in &e.guard.vars {
                let (lo, hi) = domains[g.var.0];
                domains[g.var.0] = match g.rel {
                    Relation::Lt => (lo, hi.min(g.value - 1)),
                    Relation::Le => (lo, hi.min(g.value)),
                    Relation::Eq => (lo.max(g.value), hi.min(g.value)),
                    Relation::Ge => (lo.max(g.value), hi),
                    Relation::Gt => (lo.max(g.value + 1), hi),
                };
            }
            for u in &e.updates {
                let (lo, hi) = u.expr.interval(&domains);
                let v = &net.vars[u.var.0];
                if lo < v.min || hi > v.max {
                    error(
                        &mut out,
                        DiagnosticCode::UpdateMayLeaveDomain,
                        format!(
                            "automaton `{}`, edge {} ({} -> {}): update of `{}` can reach \
                             [{lo}, {hi}] outside its domain [{}, {}]",
                            a.name,
                            k,
                            a.location(e.source).name,
                            a.location(e.target).name,
                            v.name,
                            v.min,
                            v.max
                        ),
                    );
                }
            }
        }
    }

    for (c, name) in net.channels.iter().enumerate() {
        if !(emitters[c] && receivers[c]) {
            let missing = match (emitters[c], receivers[c]) {
                (false, false) => "no emitter and no receiver",
                (false, true) => "no emitter",
                (true, false) => "no receiver",
                (true, true) => unreachable!(),
            };
            out.push(Diagnostic {
                code: DiagnosticCode::ChannelUnpaired,
                severity: Severity::Warning,
                message: format!("channel `{name}` has {missing}"),
            });
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_model;
    use super::*;

    fn codes(text: &str) -> Vec<DiagnosticCode> {
        validate(&parse_model(text).unwrap()).iter().map(|d| d.code).collect()
    }

    #[test]
    fn a_clean_model_produces_no_diagnostics() {
        let text = r#"
            chan go;
            var n = 0 in [0, 3];
            automaton A {
              sojourn t;
              init L;
              loc L { inv t <= 5; }
              edge L -> L { guard n < 3; sync go!; update n = n + 1; }
            }
            automaton B {
              sojourn u;
              init W;
              loc W;
              edge W -> W { sync go?; }
            }
        "#;
        assert_eq!(codes(text), Vec::new());
    }

    #[test]
    fn lower_bound_invariants_are_flagged() {
        let text = "automaton A { sojourn t; init L; loc L { inv t >= 2; } }";
        assert_eq!(codes(text), vec![DiagnosticCode::InvariantNotUpperBound]);
    }

    #[test]
    fn unpaired_channels_are_warnings() {
        let text = r#"
            chan go;
            automaton A { sojourn t; init L; loc L; edge L -> L { sync go!; } }
        "#;
        let diags = validate(&parse_model(text).unwrap());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagnosticCode::ChannelUnpaired);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert!(diags[0].message.contains("no receiver"));
    }

    #[test]
    fn bad_initial_values_and_empty_domains_are_flagged() {
        assert_eq!(
            codes("var n = 4 in [0, 3];"),
            vec![DiagnosticCode::VarDomainBroken]
        );
        assert_eq!(
            codes("var n = 0 in [2, 1];"),
            vec![DiagnosticCode::VarDomainBroken]
        );
    }

    #[test]
    fn unguarded_increment_on_a_saturating_variable_is_flagged() {
        let text = r#"
            var n = 0 in [0, 3];
            automaton A {
              sojourn t;
              init L;
              loc L;
              edge L -> L { update n = n + 1; }
            }
        "#;
        assert_eq!(codes(text), vec![DiagnosticCode::UpdateMayLeaveDomain]);
    }

    #[test]
    fn same_edge_guards_refine_the_update_interval() {
        let text = r#"
            var n = 0 in [0, 3];
            automaton A {
              sojourn t;
              init L;
              loc L;
              edge L -> L { guard n < 3; update n = n + 1; }
            }
        "#;
        assert_eq!(codes(text), Vec::new());
    }

    #[test]
    fn non_positive_rates_are_flagged() {
        let text = "automaton A { sojourn t; init L; loc L { rate 0.0; } }";
        assert_eq!(codes(text), vec![DiagnosticCode::NonPositiveRate]);
    }

    #[test]
    fn unresolved_file_distributions_are_flagged() {
        let text = r#"dist d from "d.csv";"#;
        assert_eq!(codes(text), vec![DiagnosticCode::UnresolvedDistribution]);
    }
}
