//! Canonical textual form of a network.
//!
//! The output parses back to an identical [`Network`]: declarations appear
//! in id order, every sojourn clock is declared up front in the global
//! `clock` line and then claimed by its automaton, and update expressions
//! are written as the left-associative chains the parser produces.

use std::fmt::Write;

use super::{ClockConstraint, Delay, DistSource, IntExpr, Network, Sync};

/// Renders a network in the textual model format.
pub fn render(net: &Network) -> String {
    let mut out = String::new();
    if !net.clocks.is_empty() {
        writeln!(out, "clock {};", net.clocks.join(" ")).unwrap();
    }
    for v in &net.vars {
        writeln!(out, "var {} = {} in [{}, {}];", v.name, v.init, v.min, v.max).unwrap();
    }
    if !net.channels.is_empty() {
        writeln!(out, "chan {};", net.channels.join(" ")).unwrap();
    }
    for d in &net.distributions {
        match &d.source {
            DistSource::Histogram(hist) => {
                let body: Vec<String> = hist
                    .buckets()
                    .iter()
                    .map(|b| format!("[{},{}): {}", b.lo, b.hi, b.count))
                    .collect();
                writeln!(out, "dist {} {{ {} }}", d.name, body.join(" ")).unwrap();
            }
            DistSource::File(path) => {
                writeln!(out, "dist {} from \"{}\";", d.name, path).unwrap();
            }
        }
    }
    if let Some(rate) = net.default_rate {
        writeln!(out, "rate {rate};").unwrap();
    }
    for automaton in &net.automata {
        writeln!(out, "automaton {} {{", automaton.name).unwrap();
        writeln!(out, "  sojourn {};", net.clocks[automaton.sojourn.0]).unwrap();
        writeln!(out, "  init {};", automaton.location(automaton.initial).name).unwrap();
        for loc in &automaton.locations {
            let mut attrs: Vec<String> = Vec::new();
            if !loc.invariant.is_empty() {
                let atoms: Vec<String> =
                    loc.invariant.iter().map(|c| clock_constraint(net, c)).collect();
                attrs.push(format!("inv {};", atoms.join(" and ")));
            }
            match loc.delay {
                Delay::None => {}
                Delay::Fixed(d) => attrs.push(format!("delay fixed {d};")),
                Delay::Empirical(id) => {
                    attrs.push(format!("delay empirical {};", net.distributions[id.0].name))
                }
            }
            if let Some(rate) = loc.rate {
                attrs.push(format!("rate {rate};"));
            }
            if attrs.is_empty() {
                writeln!(out, "  loc {};", loc.name).unwrap();
            } else {
                writeln!(out, "  loc {} {{ {} }}", loc.name, attrs.join(" ")).unwrap();
            }
        }
        for edge in &automaton.edges {
            let mut attrs: Vec<String> = Vec::new();
            let mut atoms: Vec<String> =
                edge.guard.clocks.iter().map(|c| clock_constraint(net, c)).collect();
            for vc in &edge.guard.vars {
                atoms.push(format!(
                    "{} {} {}",
                    net.vars[vc.var.0].name,
                    vc.rel.symbol(),
                    vc.value
                ));
            }
            if !atoms.is_empty() {
                attrs.push(format!("guard {};", atoms.join(" and ")));
            }
            match edge.sync {
                Sync::Internal => {}
                Sync::Emit(c) => attrs.push(format!("sync {}!;", net.channels[c.0])),
                Sync::Receive(c) => attrs.push(format!("sync {}?;", net.channels[c.0])),
            }
            if !edge.resets.is_empty() {
                let names: Vec<&str> =
                    edge.resets.iter().map(|c| net.clocks[c.0].as_str()).collect();
                attrs.push(format!("reset {};", names.join(", ")));
            }
            if !edge.updates.is_empty() {
                let upds: Vec<String> = edge
                    .updates
                    .iter()
                    .map(|u| {
                        format!("{} = {}", net.vars[u.var.0].name, int_expr(net, &u.expr))
                    })
                    .collect();
                attrs.push(format!("update {};", upds.join(", ")));
            }
            let head = format!(
                "edge {} -> {}",
                automaton.location(edge.source).name,
                automaton.location(edge.target).name
            );
            if attrs.is_empty() {
                writeln!(out, "  {head};").unwrap();
            } else {
                writeln!(out, "  {head} {{ {} }}", attrs.join(" ")).unwrap();
            }
        }
        writeln!(out, "}}").unwrap();
    }
    out
}

fn clock_constraint(net: &Network, c: &ClockConstraint) -> String {
    match c {
        ClockConstraint::Single { clock, rel, bound } => {
            format!("{} {} {}", net.clocks[clock.0], rel.symbol(), bound)
        }
        ClockConstraint::Diff { left, right, rel, bound } => format!(
            "{} - {} {} {}",
            net.clocks[left.0],
            net.clocks[right.0],
            rel.symbol(),
            bound
        ),
    }
}

fn int_expr(net: &Network, expr: &IntExpr) -> String {
    match expr {
        IntExpr::Const(c) => c.to_string(),
        IntExpr::Var(v) => net.vars[v.0].name.clone(),
        IntExpr::Add(a, b) => format!("{} + {}", int_expr(net, a), int_expr(net, b)),
        IntExpr::Sub(a, b) => format!("{} - {}", int_expr(net, a), int_expr(net, b)),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_model;
    use super::*;

    #[test]
    fn render_then_parse_is_identity() {
        let text = r#"
            clock x;
            var n = 2 in [-1, 5];
            chan go stop;
            dist lat { [0,10): 3 [10,20): 1 }
            dist ext from "lat.csv";
            rate 0.001;
            automaton A {
              sojourn t;
              init Idle;
              loc Idle { inv t <= 5 and x - t <= 2; delay fixed 5; }
              loc Busy { delay empirical lat; rate 0.5; }
              edge Idle -> Busy { guard x >= 2 and n == 0; sync go!; reset x; update n = n + 1; }
              edge Busy -> Idle { sync stop?; }
            }
            automaton B {
              sojourn u;
              init W;
              loc W;
              edge W -> W { sync go?; }
              edge W -> W { sync stop!; }
            }
        "#;
        let net = parse_model(text).unwrap();
        let rendered = render(&net);
        let reparsed = parse_model(&rendered).unwrap();
        assert_eq!(net, reparsed);
        assert_eq!(render(&reparsed), rendered);
    }

    #[test]
    fn attribute_free_items_render_compactly() {
        let net = parse_model("automaton A { sojourn t; init L; loc L; edge L -> L; }").unwrap();
        let rendered = render(&net);
        assert!(rendered.contains("loc L;"));
        assert!(rendered.contains("edge L -> L;"));
        assert_eq!(parse_model(&rendered).unwrap(), net);
    }
}
