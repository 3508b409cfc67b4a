//! Text format for networks, one network per file.
//!
//! ```text
//! # comments run to end of line
//! clock x y;                     # global clocks
//! var n = 0 in [0, 3];           # bounded integer variable with initial value
//! chan go done;                  # binary handshake channels
//! dist lat { [0,10): 3 [10,20): 1 }
//! dist net from "net_lat.csv";   # sidecar histogram, resolved by the loader
//! rate 0.001;                    # exponential rate for unbounded sojourns
//!
//! automaton Ctrl {
//!   sojourn t;                   # reset implicitly on every edge of Ctrl
//!   init Idle;
//!   loc Idle { inv t <= 5; delay fixed 5; }
//!   loc Busy { delay empirical lat; }
//!   edge Idle -> Busy { guard n == 0; sync go!; reset x; update n = n + 1; }
//!   edge Busy -> Idle { sync done?; }
//! }
//! ```
//!
//! Network-level names (clocks, variables, channels, distributions) must be
//! declared before use. `sojourn` may name an already declared clock or
//! declare a fresh one; either way it must appear before guards that use
//! it. Locations may be referenced anywhere inside their automaton block.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::{
    Automaton, ClockConstraint, ClockId, Delay, DistDecl, DistSource, Edge, Guard, IntExpr,
    Location, LocId, Network, Relation, Sync, Update, VarConstraint, VarDecl,
};
use crate::timing::{Bucket, EmpiricalDistribution};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

const KEYWORDS: &[&str] = &[
    "clock", "var", "chan", "dist", "from", "rate", "automaton", "sojourn", "init", "loc",
    "edge", "inv", "delay", "none", "fixed", "empirical", "guard", "sync", "reset", "update",
    "in", "and", "not", "or", "imply", "true", "false", "deadlock",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    RParen,
    Semi,
    Comma,
    Colon,
    Bang,
    Question,
    Assign,
    Arrow,
    Minus,
    Plus,
    Lt,
    Le,
    EqEq,
    Ge,
    Gt,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Float(v) => write!(f, "`{v}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Question => write!(f, "`?`"),
            Tok::Assign => write!(f, "`=`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::EqEq => write!(f, "`==`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = text.chars().peekable();

    macro_rules! push {
        ($tok:expr, $line:expr, $col:expr) => {
            out.push(Token { tok: $tok, line: $line, col: $col })
        };
    }

    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump(&mut chars);
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump(&mut chars);
                }
            }
            '"' => {
                bump(&mut chars);
                let mut s = String::new();
                loop {
                    match chars.peek() {
                        Some(&'"') => {
                            bump(&mut chars);
                            break;
                        }
                        Some(_) => s.push(bump(&mut chars)),
                        None => {
                            return Err(ParseError {
                                line: tline,
                                col: tcol,
                                message: "unterminated string literal".into(),
                            })
                        }
                    }
                }
                push!(Tok::Str(s), tline, tcol);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(bump(&mut chars));
                    } else {
                        break;
                    }
                }
                push!(Tok::Ident(s), tline, tcol);
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                let mut is_float = false;
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        s.push(bump(&mut chars));
                    } else if c == '.' && !is_float {
                        is_float = true;
                        s.push(bump(&mut chars));
                    } else {
                        break;
                    }
                }
                if is_float {
                    let v: f64 = s.parse().map_err(|_| ParseError {
                        line: tline,
                        col: tcol,
                        message: format!("bad number literal {s:?}"),
                    })?;
                    push!(Tok::Float(v), tline, tcol);
                } else {
                    let v: i64 = s.parse().map_err(|_| ParseError {
                        line: tline,
                        col: tcol,
                        message: format!("integer literal {s:?} out of range"),
                    })?;
                    push!(Tok::Int(v), tline, tcol);
                }
            }
            _ => {
                let c = bump(&mut chars);
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ')' => Tok::RParen,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    '!' => Tok::Bang,
                    '?' => Tok::Question,
                    '+' => Tok::Plus,
                    '-' => {
                        if chars.peek() == Some(&'>') {
                            bump(&mut chars);
                            Tok::Arrow
                        } else {
                            Tok::Minus
                        }
                    }
                    '=' => {
                        if chars.peek() == Some(&'=') {
                            bump(&mut chars);
                            Tok::EqEq
                        } else {
                            Tok::Assign
                        }
                    }
                    '<' => {
                        if chars.peek() == Some(&'=') {
                            bump(&mut chars);
                            Tok::Le
                        } else {
                            Tok::Lt
                        }
                    }
                    '>' => {
                        if chars.peek() == Some(&'=') {
                            bump(&mut chars);
                            Tok::Ge
                        } else {
                            Tok::Gt
                        }
                    }
                    other => {
                        return Err(ParseError {
                            line: tline,
                            col: tcol,
                            message: format!("unexpected character {other:?}"),
                        })
                    }
                };
                push!(tok, tline, tcol);
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    index: usize,
    net: Network,
    /// Clocks already claimed as some automaton's sojourn.
    claimed_sojourns: HashMap<ClockId, String>,
}

/// Parses a network from its textual form.
pub fn parse_model(text: &str) -> Result<Network, ParseError> {
    let tokens = lex(text)?;
    let mut p = Parser {
        tokens,
        index: 0,
        net: Network::default(),
        claimed_sojourns: HashMap::new(),
    };
    p.model()?;
    Ok(p.net)
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.index]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.index].clone();
        if self.index + 1 < self.tokens.len() {
            self.index += 1;
        }
        t
    }

    fn err_at(&self, token: &Token, message: String) -> ParseError {
        ParseError { line: token.line, col: token.col, message }
    }

    fn error(&self, message: String) -> ParseError {
        self.err_at(self.peek(), message)
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, ParseError> {
        if self.peek().tok == tok {
            Ok(self.advance())
        } else {
            Err(self.error(format!("expected {}, found {}", tok, self.peek().tok)))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if let Tok::Ident(s) = &self.peek().tok {
            if s == kw {
                self.advance();
                return true;
            }
        }
        false
    }

    fn ident(&mut self) -> Result<(String, Token), ParseError> {
        match self.peek().tok.clone() {
            Tok::Ident(s) => {
                let t = self.advance();
                Ok((s, t))
            }
            other => Err(self.error(format!("expected identifier, found {other}"))),
        }
    }

    fn fresh_name(&mut self) -> Result<(String, Token), ParseError> {
        let (name, token) = self.ident()?;
        if KEYWORDS.contains(&name.as_str()) {
            return Err(self.err_at(&token, format!("`{name}` is a reserved word")));
        }
        Ok((name, token))
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        let negative = if self.peek().tok == Tok::Minus {
            self.advance();
            true
        } else {
            false
        };
        match self.peek().tok {
            Tok::Int(v) => {
                self.advance();
                Ok(if negative { -v } else { v })
            }
            _ => Err(self.error(format!("expected integer, found {}", self.peek().tok))),
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match self.peek().tok {
            Tok::Int(v) => {
                self.advance();
                Ok(v as f64)
            }
            Tok::Float(v) => {
                self.advance();
                Ok(v)
            }
            _ => Err(self.error(format!("expected number, found {}", self.peek().tok))),
        }
    }

    fn model(&mut self) -> Result<(), ParseError> {
        loop {
            if self.peek().tok == Tok::Eof {
                return Ok(());
            }
            if self.eat_keyword("clock") {
                loop {
                    let (name, token) = self.fresh_name()?;
                    self.declare_clock(&name, &token)?;
                    if self.peek().tok == Tok::Semi {
                        self.advance();
                        break;
                    }
                }
            } else if self.eat_keyword("var") {
                let (name, token) = self.fresh_name()?;
                if self.net.var_index(&name).is_some() {
                    return Err(self.err_at(&token, format!("duplicate variable `{name}`")));
                }
                self.expect(Tok::Assign)?;
                let init = self.int()?;
                if !self.eat_keyword("in") {
                    return Err(self.error(format!("expected `in`, found {}", self.peek().tok)));
                }
                self.expect(Tok::LBracket)?;
                let min = self.int()?;
                self.expect(Tok::Comma)?;
                let max = self.int()?;
                self.expect(Tok::RBracket)?;
                self.expect(Tok::Semi)?;
                self.net.vars.push(VarDecl { name, init, min, max });
            } else if self.eat_keyword("chan") {
                loop {
                    let (name, token) = self.fresh_name()?;
                    if self.net.channel_index(&name).is_some() {
                        return Err(self.err_at(&token, format!("duplicate channel `{name}`")));
                    }
                    self.net.channels.push(name);
                    if self.peek().tok == Tok::Semi {
                        self.advance();
                        break;
                    }
                }
            } else if self.eat_keyword("dist") {
                self.dist_decl()?;
            } else if self.eat_keyword("rate") {
                if self.net.default_rate.is_some() {
                    return Err(self.error("duplicate model-level `rate`".into()));
                }
                self.net.default_rate = Some(self.number()?);
                self.expect(Tok::Semi)?;
            } else if self.eat_keyword("automaton") {
                self.automaton()?;
            } else {
                return Err(self.error(format!(
                    "expected `clock`, `var`, `chan`, `dist`, `rate` or `automaton`, found {}",
                    self.peek().tok
                )));
            }
        }
    }

    fn declare_clock(&mut self, name: &str, token: &Token) -> Result<ClockId, ParseError> {
        if self.net.clock_index(name).is_some() {
            return Err(self.err_at(token, format!("duplicate clock `{name}`")));
        }
        self.net.clocks.push(name.to_string());
        Ok(ClockId(self.net.clocks.len() - 1))
    }

    fn dist_decl(&mut self) -> Result<(), ParseError> {
        let (name, token) = self.fresh_name()?;
        if self.net.distribution_index(&name).is_some() {
            return Err(self.err_at(&token, format!("duplicate distribution `{name}`")));
        }
        if self.eat_keyword("from") {
            let path = match self.peek().tok.clone() {
                Tok::Str(s) => {
                    self.advance();
                    s
                }
                other => return Err(self.error(format!("expected string path, found {other}"))),
            };
            self.expect(Tok::Semi)?;
            self.net.distributions.push(DistDecl { name, source: DistSource::File(path) });
            return Ok(());
        }
        let open = self.expect(Tok::LBrace)?;
        let mut buckets = Vec::new();
        while self.peek().tok != Tok::RBrace {
            self.expect(Tok::LBracket)?;
            let lo = self.number()?;
            self.expect(Tok::Comma)?;
            let hi = self.number()?;
            self.expect(Tok::RParen)?;
            self.expect(Tok::Colon)?;
            let count = self.int()?;
            if count < 0 {
                return Err(self.error("bucket count must be non-negative".into()));
            }
            buckets.push(Bucket { lo, hi, count: count as u64 });
        }
        self.advance();
        let hist = EmpiricalDistribution::new(buckets)
            .map_err(|e| self.err_at(&open, format!("distribution `{name}`: {e}")))?;
        self.net.distributions.push(DistDecl { name, source: DistSource::Histogram(hist) });
        Ok(())
    }

    fn lookup_clock(&self, name: &str, token: &Token) -> Result<ClockId, ParseError> {
        self.net
            .clock_index(name)
            .ok_or_else(|| self.err_at(token, format!("undeclared clock `{name}`")))
    }

    fn automaton(&mut self) -> Result<(), ParseError> {
        let (name, name_token) = self.fresh_name()?;
        if self.net.automaton_index(&name).is_some() {
            return Err(self.err_at(&name_token, format!("duplicate automaton `{name}`")));
        }
        self.expect(Tok::LBrace)?;

        let mut sojourn: Option<ClockId> = None;
        let mut initial: Option<(String, Token)> = None;
        let mut locations: Vec<Location> = Vec::new();
        // Edges keep textual location references until the block closes.
        let mut raw_edges: Vec<(String, Token, String, Token, Guard, Sync, Vec<ClockId>, Vec<Update>)> =
            Vec::new();

        while self.peek().tok != Tok::RBrace {
            if self.eat_keyword("sojourn") {
                if sojourn.is_some() {
                    return Err(self.error(format!("automaton `{name}` already has a sojourn clock")));
                }
                let (cname, ctoken) = self.fresh_name()?;
                let id = match self.net.clock_index(&cname) {
                    Some(id) => {
                        if let Some(owner) = self.claimed_sojourns.get(&id) {
                            return Err(self.err_at(
                                &ctoken,
                                format!("clock `{cname}` is already the sojourn clock of `{owner}`"),
                            ));
                        }
                        id
                    }
                    None => self.declare_clock(&cname, &ctoken)?,
                };
                self.claimed_sojourns.insert(id, name.clone());
                sojourn = Some(id);
                self.expect(Tok::Semi)?;
            } else if self.eat_keyword("init") {
                if initial.is_some() {
                    return Err(self.error(format!("automaton `{name}` already has an init location")));
                }
                let (lname, ltoken) = self.ident()?;
                initial = Some((lname, ltoken));
                self.expect(Tok::Semi)?;
            } else if self.eat_keyword("loc") {
                let (lname, ltoken) = self.fresh_name()?;
                if locations.iter().any(|l| l.name == lname) {
                    return Err(self.err_at(&ltoken, format!("duplicate location `{lname}`")));
                }
                let mut loc = Location {
                    name: lname,
                    invariant: Vec::new(),
                    delay: Delay::None,
                    rate: None,
                };
                if self.peek().tok == Tok::Semi {
                    self.advance();
                } else {
                    self.expect(Tok::LBrace)?;
                    while self.peek().tok != Tok::RBrace {
                        if self.eat_keyword("inv") {
                            loop {
                                loc.invariant.push(self.clock_atom()?);
                                if !self.eat_keyword("and") {
                                    break;
                                }
                            }
                            self.expect(Tok::Semi)?;
                        } else if self.eat_keyword("delay") {
                            if self.eat_keyword("none") {
                                loc.delay = Delay::None;
                            } else if self.eat_keyword("fixed") {
                                let d = self.int()?;
                                if d < 0 {
                                    return Err(self.error("fixed delay must be non-negative".into()));
                                }
                                loc.delay = Delay::Fixed(d as u64);
                            } else if self.eat_keyword("empirical") {
                                let (dname, dtoken) = self.ident()?;
                                let id = self.net.distribution_index(&dname).ok_or_else(|| {
                                    self.err_at(&dtoken, format!("undeclared distribution `{dname}`"))
                                })?;
                                loc.delay = Delay::Empirical(id);
                            } else {
                                return Err(self.error(format!(
                                    "expected `none`, `fixed` or `empirical`, found {}",
                                    self.peek().tok
                                )));
                            }
                            self.expect(Tok::Semi)?;
                        } else if self.eat_keyword("rate") {
                            loc.rate = Some(self.number()?);
                            self.expect(Tok::Semi)?;
                        } else {
                            return Err(self.error(format!(
                                "expected `inv`, `delay` or `rate`, found {}",
                                self.peek().tok
                            )));
                        }
                    }
                    self.advance();
                }
                locations.push(loc);
            } else if self.eat_keyword("edge") {
                let (src, src_token) = self.ident()?;
                self.expect(Tok::Arrow)?;
                let (dst, dst_token) = self.ident()?;
                let mut guard = Guard::default();
                let mut sync = Sync::Internal;
                let mut resets: Vec<ClockId> = Vec::new();
                let mut updates: Vec<Update> = Vec::new();
                if self.peek().tok == Tok::Semi {
                    self.advance();
                } else {
                    self.expect(Tok::LBrace)?;
                    while self.peek().tok != Tok::RBrace {
                        if self.eat_keyword("guard") {
                            loop {
                                self.guard_atom(&mut guard)?;
                                if !self.eat_keyword("and") {
                                    break;
                                }
                            }
                            self.expect(Tok::Semi)?;
                        } else if self.eat_keyword("sync") {
                            let (cname, ctoken) = self.ident()?;
                            let chan = self.net.channel_index(&cname).ok_or_else(|| {
                                self.err_at(&ctoken, format!("undeclared channel `{cname}`"))
                            })?;
                            sync = match self.peek().tok {
                                Tok::Bang => {
                                    self.advance();
                                    Sync::Emit(chan)
                                }
                                Tok::Question => {
                                    self.advance();
                                    Sync::Receive(chan)
                                }
                                _ => {
                                    return Err(self.error(format!(
                                        "expected `!` or `?` after channel, found {}",
                                        self.peek().tok
                                    )))
                                }
                            };
                            self.expect(Tok::Semi)?;
                        } else if self.eat_keyword("reset") {
                            loop {
                                let (cname, ctoken) = self.ident()?;
                                resets.push(self.lookup_clock(&cname, &ctoken)?);
                                if self.peek().tok == Tok::Comma {
                                    self.advance();
                                } else {
                                    break;
                                }
                            }
                            self.expect(Tok::Semi)?;
                        } else if self.eat_keyword("update") {
                            loop {
                                let (vname, vtoken) = self.ident()?;
                                let var = self.net.var_index(&vname).ok_or_else(|| {
                                    self.err_at(&vtoken, format!("undeclared variable `{vname}`"))
                                })?;
                                self.expect(Tok::Assign)?;
                                let expr = self.int_expr()?;
                                updates.push(Update { var, expr });
                                if self.peek().tok == Tok::Comma {
                                    self.advance();
                                } else {
                                    break;
                                }
                            }
                            self.expect(Tok::Semi)?;
                        } else {
                            return Err(self.error(format!(
                                "expected `guard`, `sync`, `reset` or `update`, found {}",
                                self.peek().tok
                            )));
                        }
                    }
                    self.advance();
                }
                raw_edges.push((src, src_token, dst, dst_token, guard, sync, resets, updates));
            } else {
                return Err(self.error(format!(
                    "expected `sojourn`, `init`, `loc` or `edge`, found {}",
                    self.peek().tok
                )));
            }
        }
        self.advance();

        let sojourn = sojourn.ok_or_else(|| {
            self.err_at(&name_token, format!("automaton `{name}` has no sojourn declaration"))
        })?;
        if locations.is_empty() {
            return Err(self.err_at(&name_token, format!("automaton `{name}` has no locations")));
        }
        let resolve = |lname: &str, token: &Token, locations: &[Location]| {
            locations
                .iter()
                .position(|l| l.name == lname)
                .map(LocId)
                .ok_or_else(|| self.err_at(token, format!("undeclared location `{lname}`")))
        };
        let (iname, itoken) = initial.ok_or_else(|| {
            self.err_at(&name_token, format!("automaton `{name}` has no init declaration"))
        })?;
        let initial = resolve(&iname, &itoken, &locations)?;
        let mut edges = Vec::new();
        for (src, st, dst, dt, guard, sync, resets, updates) in raw_edges {
            edges.push(Edge {
                source: resolve(&src, &st, &locations)?,
                target: resolve(&dst, &dt, &locations)?,
                guard,
                sync,
                resets,
                updates,
            });
        }
        self.net.automata.push(Automaton { name, sojourn, initial, locations, edges });
        Ok(())
    }

    fn relation(&mut self) -> Result<Relation, ParseError> {
        let rel = match self.peek().tok {
            Tok::Lt => Relation::Lt,
            Tok::Le => Relation::Le,
            Tok::EqEq => Relation::Eq,
            Tok::Ge => Relation::Ge,
            Tok::Gt => Relation::Gt,
            _ => {
                return Err(self.error(format!(
                    "expected a comparison operator, found {}",
                    self.peek().tok
                )))
            }
        };
        self.advance();
        Ok(rel)
    }

    /// `clock rel int` or `clock - clock rel int`; used in invariants.
    fn clock_atom(&mut self) -> Result<ClockConstraint, ParseError> {
        let (name, token) = self.ident()?;
        let left = self.lookup_clock(&name, &token)?;
        if self.peek().tok == Tok::Minus {
            self.advance();
            let (rname, rtoken) = self.ident()?;
            let right = self.lookup_clock(&rname, &rtoken)?;
            let rel = self.relation()?;
            let bound = self.int()?;
            Ok(ClockConstraint::Diff { left, right, rel, bound })
        } else {
            let rel = self.relation()?;
            let bound = self.int()?;
            Ok(ClockConstraint::Single { clock: left, rel, bound })
        }
    }

    /// Guard atom: the identifier decides whether it constrains a clock or
    /// a variable.
    fn guard_atom(&mut self, guard: &mut Guard) -> Result<(), ParseError> {
        let (name, token) = self.ident()?;
        if let Some(clock) = self.net.clock_index(&name) {
            if self.peek().tok == Tok::Minus {
                self.advance();
                let (rname, rtoken) = self.ident()?;
                let right = self.lookup_clock(&rname, &rtoken)?;
                let rel = self.relation()?;
                let bound = self.int()?;
                guard.clocks.push(ClockConstraint::Diff { left: clock, right, rel, bound });
            } else {
                let rel = self.relation()?;
                let bound = self.int()?;
                guard.clocks.push(ClockConstraint::Single { clock, rel, bound });
            }
            Ok(())
        } else if let Some(var) = self.net.var_index(&name) {
            let rel = self.relation()?;
            let value = self.int()?;
            guard.vars.push(VarConstraint { var, rel, value });
            Ok(())
        } else {
            Err(self.err_at(&token, format!("undeclared clock or variable `{name}`")))
        }
    }

    fn int_expr(&mut self) -> Result<IntExpr, ParseError> {
        let mut expr = self.int_term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.advance();
                    expr = IntExpr::Add(Box::new(expr), Box::new(self.int_term()?));
                }
                Tok::Minus => {
                    self.advance();
                    expr = IntExpr::Sub(Box::new(expr), Box::new(self.int_term()?));
                }
                _ => return Ok(expr),
            }
        }
    }

    fn int_term(&mut self) -> Result<IntExpr, ParseError> {
        match self.peek().tok.clone() {
            Tok::Int(_) | Tok::Minus => Ok(IntExpr::Const(self.int()?)),
            Tok::Ident(name) => {
                let token = self.advance();
                let var = self
                    .net
                    .var_index(&name)
                    .ok_or_else(|| self.err_at(&token, format!("undeclared variable `{name}`")))?;
                Ok(IntExpr::Var(var))
            }
            other => Err(self.error(format!("expected integer or variable, found {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{ChanId, VarId};
    use super::*;

    const HANDSHAKE: &str = r#"
        chan go;
        var n = 0 in [0, 1];
        automaton Sender {
          sojourn s;
          init Idle;
          loc Idle { delay fixed 5; }
          loc Done;
          edge Idle -> Done { sync go!; update n = 1; }
        }
        automaton Receiver {
          sojourn r;
          init Wait;
          loc Wait;
          loc Got;
          edge Wait -> Got { sync go?; }
        }
    "#;

    #[test]
    fn parses_a_two_automaton_handshake() {
        let net = parse_model(HANDSHAKE).unwrap();
        assert_eq!(net.automata.len(), 2);
        assert_eq!(net.clocks, vec!["s", "r"]);
        assert_eq!(net.channels, vec!["go"]);
        let sender = &net.automata[0];
        assert_eq!(sender.sojourn, ClockId(0));
        assert_eq!(sender.edges[0].sync, Sync::Emit(ChanId(0)));
        assert_eq!(sender.edges[0].updates, vec![Update { var: VarId(0), expr: IntExpr::Const(1) }]);
        assert_eq!(net.automata[1].edges[0].sync, Sync::Receive(ChanId(0)));
    }

    #[test]
    fn guard_identifiers_resolve_against_declarations() {
        let net = parse_model(
            r#"
            clock x;
            var n = 0 in [0, 3];
            automaton A {
              sojourn t;
              init L;
              loc L;
              edge L -> L { guard x >= 2 and n < 3 and t - x <= 1; }
            }
            "#,
        )
        .unwrap();
        let guard = &net.automata[0].edges[0].guard;
        assert_eq!(guard.clocks.len(), 2);
        assert_eq!(guard.vars.len(), 1);
    }

    #[test]
    fn undeclared_clock_in_guard_is_a_positioned_error() {
        let err = parse_model(
            "automaton A {\n  sojourn t;\n  init L;\n  loc L;\n  edge L -> L { guard zz >= 2; }\n}",
        )
        .unwrap_err();
        assert!(err.message.contains("`zz`"), "message was {:?}", err.message);
        assert_eq!((err.line, err.col), (5, 23));
    }

    #[test]
    fn init_may_precede_location_declarations() {
        let net = parse_model("automaton A { sojourn t; init B; loc A0; loc B; edge B -> A0; }")
            .unwrap();
        assert_eq!(net.automata[0].initial, LocId(1));
    }

    #[test]
    fn sojourn_may_claim_a_predeclared_clock_once() {
        let net = parse_model(
            "clock t u;\nautomaton A { sojourn t; init L; loc L; }\nautomaton B { sojourn u; init L; loc L; }",
        )
        .unwrap();
        assert_eq!(net.automata[0].sojourn, ClockId(0));
        let err = parse_model(
            "clock t;\nautomaton A { sojourn t; init L; loc L; }\nautomaton B { sojourn t; init L; loc L; }",
        )
        .unwrap_err();
        assert!(err.message.contains("already the sojourn"));
    }

    #[test]
    fn missing_sojourn_or_init_is_rejected() {
        let err = parse_model("automaton A { init L; loc L; }").unwrap_err();
        assert!(err.message.contains("no sojourn"));
        let err = parse_model("automaton A { sojourn t; loc L; }").unwrap_err();
        assert!(err.message.contains("no init"));
    }

    #[test]
    fn inline_distributions_validate_their_buckets() {
        let err = parse_model("dist d { [10,5): 1 }").unwrap_err();
        assert!(err.message.contains("distribution `d`"));
        let net = parse_model("dist d { [0,10): 3 [10,20): 1 }").unwrap();
        assert!(matches!(net.distributions[0].source, DistSource::Histogram(_)));
    }

    #[test]
    fn reserved_words_cannot_name_things() {
        let err = parse_model("clock delay;").unwrap_err();
        assert!(err.message.contains("reserved"));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        assert!(parse_model("clock x x;").is_err());
        assert!(parse_model("chan c; chan c;").is_err());
        let err =
            parse_model("automaton A { sojourn t; init L; loc L; loc L; }").unwrap_err();
        assert!(err.message.contains("duplicate location"));
    }
}
