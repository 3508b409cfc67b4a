//! Query language shared by both engines.
//!
//! Classical forms:
//!
//! ```text
//! E<> prop                      # reachability
//! A[] prop                      # invariance
//! A<> prop                      # inevitability
//! prop --> prop                 # leads-to (response)
//! A[] not deadlock              # deadlock freedom
//! ```
//!
//! Statistical forms:
//!
//! ```text
//! Pr[<=T](<> prop)              # probability estimation, also with []
//! Pr[<=T]([] prop) >= 0.95      # hypothesis test, also <=
//! Pr[<=T](<> p) >= Pr[<=T](<> q)
//! E[<=T; N](max: expr)          # value estimation, also min
//! simulate N [<=T] { e1, e2 }   # trajectory sampling
//! ```
//!
//! Propositions combine location references (`Proc.Loc`) and integer
//! comparisons with `not`, `and`, `or` and right-associative `imply`;
//! parentheses group. Clock names and `fired(chan)` are observables: they
//! may appear in the expressions of `E[...]` and `simulate`, which are
//! evaluated along a sampled trace, but not in propositions, which are
//! evaluated on states.

use thiserror::Error;

use crate::model::{ChanId, ClockId, LocId, Network, Relation, VarId};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("column {col}: {message}")]
pub struct QueryError {
    pub col: usize,
    pub message: String,
}

/// Numeric expression over variables and, where allowed, observables.
#[derive(Debug, Clone, PartialEq)]
pub enum NumExpr {
    Int(i64),
    Var(VarId),
    Clock(ClockId),
    Fired(ChanId),
    Add(Box<NumExpr>, Box<NumExpr>),
    Sub(Box<NumExpr>, Box<NumExpr>),
}

impl NumExpr {
    /// Evaluates a proposition-side expression. Observables never occur
    /// here; the parser rejects them outside trace expressions.
    pub fn eval_vars(&self, vars: &[i64]) -> i64 {
        match self {
            NumExpr::Int(v) => *v,
            NumExpr::Var(v) => vars[v.0],
            NumExpr::Clock(_) | NumExpr::Fired(_) => {
                unreachable!("observables cannot appear in propositions")
            }
            NumExpr::Add(a, b) => a.eval_vars(vars).saturating_add(b.eval_vars(vars)),
            NumExpr::Sub(a, b) => a.eval_vars(vars).saturating_sub(b.eval_vars(vars)),
        }
    }

    /// Evaluates a trace expression at one observation point: variables
    /// after the event's updates, clocks at the firing instant before its
    /// resets, and `fired(c) = 1` exactly when the event synchronised on
    /// `c`.
    pub fn eval_observed(&self, vars: &[i64], clocks: &[f64], fired: Option<ChanId>) -> f64 {
        match self {
            NumExpr::Int(v) => *v as f64,
            NumExpr::Var(v) => vars[v.0] as f64,
            NumExpr::Clock(c) => clocks[c.0],
            NumExpr::Fired(c) => {
                if fired == Some(*c) {
                    1.0
                } else {
                    0.0
                }
            }
            NumExpr::Add(a, b) => {
                a.eval_observed(vars, clocks, fired) + b.eval_observed(vars, clocks, fired)
            }
            NumExpr::Sub(a, b) => {
                a.eval_observed(vars, clocks, fired) - b.eval_observed(vars, clocks, fired)
            }
        }
    }
}

/// A state proposition, evaluated on a location vector and variable store.
#[derive(Debug, Clone, PartialEq)]
pub enum StateProp {
    True,
    False,
    /// Automaton `aut` is in location `loc`.
    At { aut: usize, loc: LocId },
    Cmp(NumExpr, Relation, NumExpr),
    Not(Box<StateProp>),
    And(Box<StateProp>, Box<StateProp>),
    Or(Box<StateProp>, Box<StateProp>),
    Imply(Box<StateProp>, Box<StateProp>),
}

impl StateProp {
    pub fn holds(&self, locations: &[LocId], vars: &[i64]) -> bool {
        match self {
            StateProp::True => true,
            StateProp::False => false,
            StateProp::At { aut, loc } => locations[*aut] == *loc,
            StateProp::Cmp(a, rel, b) => rel.holds_int(a.eval_vars(vars), b.eval_vars(vars)),
            StateProp::Not(p) => !p.holds(locations, vars),
            StateProp::And(a, b) => a.holds(locations, vars) && b.holds(locations, vars),
            StateProp::Or(a, b) => a.holds(locations, vars) || b.holds(locations, vars),
            StateProp::Imply(a, b) => !a.holds(locations, vars) || b.holds(locations, vars),
        }
    }
}

/// A bounded path property: the monitor side of `Pr[...]`.
#[derive(Debug, Clone, PartialEq)]
pub enum PathProp {
    Eventually(StateProp),
    Globally(StateProp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Max,
    Min,
}

/// A trace expression together with its source text, used to label
/// report columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedExpr {
    pub text: String,
    pub expr: NumExpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum TestRel {
    /// `Pr[...] >= theta`
    AtLeast,
    /// `Pr[...] <= theta`
    AtMost,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Reach(StateProp),
    Invariant(StateProp),
    Eventually(StateProp),
    LeadsTo(StateProp, StateProp),
    DeadlockFree,
    ProbEstimate { horizon: u64, path: PathProp },
    ProbTest { horizon: u64, path: PathProp, rel: TestRel, theta: f64 },
    ProbCompare { left_horizon: u64, left: PathProp, right_horizon: u64, right: PathProp },
    ValueEstimate { horizon: u64, runs: u64, reduce: Reduce, expr: NamedExpr },
    Simulate { runs: u64, horizon: u64, exprs: Vec<NamedExpr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Classical,
    Statistical,
}

impl Query {
    pub fn engine(&self) -> EngineKind {
        match self {
            Query::Reach(_)
            | Query::Invariant(_)
            | Query::Eventually(_)
            | Query::LeadsTo(_, _)
            | Query::DeadlockFree => EngineKind::Classical,
            _ => EngineKind::Statistical,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Diamond,
    BoxOp,
    LeadsTo,
    Dot,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Plus,
    Minus,
    Lt,
    Le,
    EqEq,
    Ge,
    Gt,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(v) => write!(f, "`{v}`"),
            Tok::Float(v) => write!(f, "`{v}`"),
            Tok::Diamond => write!(f, "`<>`"),
            Tok::BoxOp => write!(f, "`[]`"),
            Tok::LeadsTo => write!(f, "`-->`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::EqEq => write!(f, "`==`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Eof => write!(f, "end of query"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    /// 1-based character position, for error messages.
    col: usize,
    /// Byte offset into the query text, for slicing expression spans.
    byte: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, QueryError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0usize;
    let at = |i: usize| chars[i].1;
    while i < chars.len() {
        let col = i + 1;
        let byte = chars[i].0;
        let c = at(i);
        match c {
            ' ' | '\t' | '\r' | '\n' => i += 1,
            '#' => {
                while i < chars.len() && at(i) != '\n' {
                    i += 1;
                }
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (at(i).is_ascii_alphanumeric() || at(i) == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().map(|(_, c)| *c).collect();
                out.push(Token { tok: Tok::Ident(s), col, byte });
            }
            _ if c.is_ascii_digit() => {
                let start = i;
                let mut is_float = false;
                while i < chars.len()
                    && (at(i).is_ascii_digit()
                        || (at(i) == '.'
                            && !is_float
                            && i + 1 < chars.len()
                            && at(i + 1).is_ascii_digit()))
                {
                    if at(i) == '.' {
                        is_float = true;
                    }
                    i += 1;
                }
                let s: String = chars[start..i].iter().map(|(_, c)| *c).collect();
                let tok = if is_float {
                    Tok::Float(s.parse().map_err(|_| QueryError {
                        col,
                        message: format!("bad number literal {s:?}"),
                    })?)
                } else {
                    Tok::Int(s.parse().map_err(|_| QueryError {
                        col,
                        message: format!("integer literal {s:?} out of range"),
                    })?)
                };
                out.push(Token { tok, col, byte });
            }
            _ => {
                let two = |a: char, b: char| i + 1 < chars.len() && c == a && at(i + 1) == b;
                let (tok, len) = if two('-', '-') && i + 2 < chars.len() && at(i + 2) == '>' {
                    (Tok::LeadsTo, 3)
                } else if two('<', '>') {
                    (Tok::Diamond, 2)
                } else if two('[', ']') {
                    (Tok::BoxOp, 2)
                } else if two('<', '=') {
                    (Tok::Le, 2)
                } else if two('>', '=') {
                    (Tok::Ge, 2)
                } else if two('=', '=') {
                    (Tok::EqEq, 2)
                } else {
                    let tok = match c {
                        '.' => Tok::Dot,
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        '[' => Tok::LBracket,
                        ']' => Tok::RBracket,
                        ',' => Tok::Comma,
                        ';' => Tok::Semi,
                        ':' => Tok::Colon,
                        '+' => Tok::Plus,
                        '-' => Tok::Minus,
                        '<' => Tok::Lt,
                        '>' => Tok::Gt,
                        other => {
                            return Err(QueryError {
                                col,
                                message: format!("unexpected character {other:?}"),
                            })
                        }
                    };
                    (tok, 1)
                };
                out.push(Token { tok, col, byte });
                i += len;
            }
        }
    }
    out.push(Token { tok: Tok::Eof, col: chars.len() + 1, byte: text.len() });
    Ok(out)
}

struct Parser<'a> {
    net: &'a Network,
    text: &'a str,
    tokens: Vec<Token>,
    index: usize,
}

/// Parses one query against a network's declarations.
pub fn parse_query(text: &str, net: &Network) -> Result<Query, QueryError> {
    let tokens = lex(text)?;
    let mut p = Parser { net, text, tokens, index: 0 };
    let q = p.query()?;
    p.expect(Tok::Eof)?;
    Ok(q)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.index]
    }

    fn peek2(&self) -> &Tok {
        &self.tokens[(self.index + 1).min(self.tokens.len() - 1)].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.index].clone();
        if self.index + 1 < self.tokens.len() {
            self.index += 1;
        }
        t
    }

    fn error(&self, message: String) -> QueryError {
        QueryError { col: self.peek().col, message }
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, QueryError> {
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

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn query(&mut self) -> Result<Query, QueryError> {
        if self.peek_keyword("E") && matches!(self.peek2(), Tok::Diamond) {
            self.advance();
            self.advance();
            return Ok(Query::Reach(self.prop()?));
        }
        if self.peek_keyword("E") && matches!(self.peek2(), Tok::LBracket) {
            return self.value_estimate();
        }
        if self.peek_keyword("A") && matches!(self.peek2(), Tok::BoxOp) {
            self.advance();
            self.advance();
            if self.peek_keyword("not") && matches!(self.peek2(), Tok::Ident(s) if s == "deadlock")
            {
                self.advance();
                self.advance();
                return Ok(Query::DeadlockFree);
            }
            return Ok(Query::Invariant(self.prop()?));
        }
        if self.peek_keyword("A") && matches!(self.peek2(), Tok::Diamond) {
            self.advance();
            self.advance();
            return Ok(Query::Eventually(self.prop()?));
        }
        if self.peek_keyword("Pr") {
            return self.probability();
        }
        if self.peek_keyword("simulate") {
            return self.simulate();
        }
        let left = self.prop()?;
        self.expect(Tok::LeadsTo).map_err(|e| QueryError {
            col: e.col,
            message: format!("{} (a bare proposition is not a query)", e.message),
        })?;
        let right = self.prop()?;
        Ok(Query::LeadsTo(left, right))
    }

    fn probability(&mut self) -> Result<Query, QueryError> {
        self.advance();
        let horizon = self.horizon()?;
        let path = self.path_prop()?;
        let rel = match self.peek().tok {
            Tok::Ge => TestRel::AtLeast,
            Tok::Le => TestRel::AtMost,
            _ => return Ok(Query::ProbEstimate { horizon, path }),
        };
        self.advance();
        if self.peek_keyword("Pr") {
            if rel != TestRel::AtLeast {
                return Err(self.error("probability comparison uses `>=`".into()));
            }
            self.advance();
            let right_horizon = self.horizon()?;
            let right = self.path_prop()?;
            return Ok(Query::ProbCompare {
                left_horizon: horizon,
                left: path,
                right_horizon,
                right,
            });
        }
        let theta = self.number()?;
        if !(0.0..=1.0).contains(&theta) {
            return Err(self.error(format!("threshold {theta} must lie in [0, 1]")));
        }
        Ok(Query::ProbTest { horizon, path, rel, theta })
    }

    /// `[<=T]` with an integer bound in milliseconds.
    fn horizon(&mut self) -> Result<u64, QueryError> {
        self.expect(Tok::LBracket)?;
        self.expect(Tok::Le)?;
        let t = self.unsigned("time bound")?;
        self.expect(Tok::RBracket)?;
        Ok(t)
    }

    fn path_prop(&mut self) -> Result<PathProp, QueryError> {
        self.expect(Tok::LParen)?;
        let path = match self.peek().tok {
            Tok::Diamond => {
                self.advance();
                PathProp::Eventually(self.prop()?)
            }
            Tok::BoxOp => {
                self.advance();
                PathProp::Globally(self.prop()?)
            }
            _ => return Err(self.error(format!("expected `<>` or `[]`, found {}", self.peek().tok))),
        };
        self.expect(Tok::RParen)?;
        Ok(path)
    }

    fn value_estimate(&mut self) -> Result<Query, QueryError> {
        self.advance();
        self.expect(Tok::LBracket)?;
        self.expect(Tok::Le)?;
        let horizon = self.unsigned("time bound")?;
        self.expect(Tok::Semi)?;
        let runs = self.runs()?;
        self.expect(Tok::RBracket)?;
        self.expect(Tok::LParen)?;
        let reduce = if self.eat_keyword("max") {
            Reduce::Max
        } else if self.eat_keyword("min") {
            Reduce::Min
        } else {
            return Err(self.error(format!("expected `max` or `min`, found {}", self.peek().tok)));
        };
        self.expect(Tok::Colon)?;
        let expr = self.named_expr()?;
        self.expect(Tok::RParen)?;
        Ok(Query::ValueEstimate { horizon, runs, reduce, expr })
    }

    fn simulate(&mut self) -> Result<Query, QueryError> {
        self.advance();
        let runs = self.runs()?;
        let horizon = self.horizon()?;
        self.expect(Tok::LBrace)?;
        let mut exprs = vec![self.named_expr()?];
        while self.peek().tok == Tok::Comma {
            self.advance();
            exprs.push(self.named_expr()?);
        }
        self.expect(Tok::RBrace)?;
        Ok(Query::Simulate { runs, horizon, exprs })
    }

    fn runs(&mut self) -> Result<u64, QueryError> {
        let n = self.unsigned("run count")?;
        if n == 0 {
            return Err(self.error("run count must be at least 1".into()));
        }
        Ok(n)
    }

    fn unsigned(&mut self, what: &str) -> Result<u64, QueryError> {
        match self.peek().tok {
            Tok::Int(v) if v >= 0 => {
                self.advance();
                Ok(v as u64)
            }
            _ => Err(self.error(format!("expected non-negative {what}, found {}", self.peek().tok))),
        }
    }

    fn number(&mut self) -> Result<f64, QueryError> {
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

    fn prop(&mut self) -> Result<StateProp, QueryError> {
        let left = self.prop_or()?;
        if self.eat_keyword("imply") {
            let right = self.prop()?;
            return Ok(StateProp::Imply(Box::new(left), Box::new(right)));
        }
        Ok(left)
    }

    fn prop_or(&mut self) -> Result<StateProp, QueryError> {
        let mut left = self.prop_and()?;
        while self.eat_keyword("or") {
            let right = self.prop_and()?;
            left = StateProp::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn prop_and(&mut self) -> Result<StateProp, QueryError> {
        let mut left = self.prop_unary()?;
        while self.eat_keyword("and") {
            let right = self.prop_unary()?;
            left = StateProp::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn prop_unary(&mut self) -> Result<StateProp, QueryError> {
        if self.eat_keyword("not") {
            return Ok(StateProp::Not(Box::new(self.prop_unary()?)));
        }
        self.prop_atom()
    }

    fn prop_atom(&mut self) -> Result<StateProp, QueryError> {
        if self.peek().tok == Tok::LParen {
            self.advance();
            let p = self.prop()?;
            self.expect(Tok::RParen)?;
            return Ok(p);
        }
        if self.eat_keyword("true") {
            return Ok(StateProp::True);
        }
        if self.eat_keyword("false") {
            return Ok(StateProp::False);
        }
        if self.peek_keyword("deadlock") {
            return Err(self.error("`deadlock` is only supported as `A[] not deadlock`".into()));
        }
        // `Proc.Loc` or the left side of a comparison.
        if let Tok::Ident(name) = self.peek().tok.clone() {
            if matches!(self.peek2(), Tok::Dot) {
                let token = self.advance();
                self.advance();
                let aut = self.net.automaton_index(&name).ok_or_else(|| QueryError {
                    col: token.col,
                    message: format!("unknown automaton `{name}`"),
                })?;
                let (lname, ltoken) = self.ident()?;
                let loc = self.net.automata[aut]
                    .locations
                    .iter()
                    .position(|l| l.name == lname)
                    .map(LocId)
                    .ok_or_else(|| QueryError {
                        col: ltoken.col,
                        message: format!("automaton `{name}` has no location `{lname}`"),
                    })?;
                return Ok(StateProp::At { aut, loc });
            }
        }
        let left = self.num_expr(false)?;
        let rel = self.relation()?;
        let right = self.num_expr(false)?;
        Ok(StateProp::Cmp(left, rel, right))
    }

    fn relation(&mut self) -> Result<Relation, QueryError> {
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

    fn ident(&mut self) -> Result<(String, Token), QueryError> {
        match self.peek().tok.clone() {
            Tok::Ident(s) => {
                let t = self.advance();
                Ok((s, t))
            }
            other => Err(self.error(format!("expected identifier, found {other}"))),
        }
    }

    fn named_expr(&mut self) -> Result<NamedExpr, QueryError> {
        let start = self.peek().byte;
        let expr = self.num_expr(true)?;
        let end = self.peek().byte;
        let text = self.text[start..end].trim().to_string();
        Ok(NamedExpr { text, expr })
    }

    fn num_expr(&mut self, observables: bool) -> Result<NumExpr, QueryError> {
        let mut left = self.num_term(observables)?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.advance();
                    left = NumExpr::Add(Box::new(left), Box::new(self.num_term(observables)?));
                }
                Tok::Minus => {
                    self.advance();
                    left = NumExpr::Sub(Box::new(left), Box::new(self.num_term(observables)?));
                }
                _ => return Ok(left),
            }
        }
    }

    fn num_term(&mut self, observables: bool) -> Result<NumExpr, QueryError> {
        match self.peek().tok.clone() {
            Tok::Int(v) => {
                self.advance();
                Ok(NumExpr::Int(v))
            }
            Tok::Minus => {
                self.advance();
                match self.peek().tok {
                    Tok::Int(v) => {
                        self.advance();
                        Ok(NumExpr::Int(-v))
                    }
                    _ => Err(self.error(format!("expected integer, found {}", self.peek().tok))),
                }
            }
            Tok::LParen => {
                self.advance();
                let e = self.num_expr(observables)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) if name == "fired" => {
                let token = self.advance();
                if !observables {
                    return Err(QueryError {
                        col: token.col,
                        message: "`fired(...)` is only available in trace expressions".into(),
                    });
                }
                self.expect(Tok::LParen)?;
                let (cname, ctoken) = self.ident()?;
                let chan = self.net.channel_index(&cname).ok_or_else(|| QueryError {
                    col: ctoken.col,
                    message: format!("unknown channel `{cname}`"),
                })?;
                self.expect(Tok::RParen)?;
                Ok(NumExpr::Fired(chan))
            }
            Tok::Ident(name) => {
                let token = self.advance();
                if let Some(var) = self.net.var_index(&name) {
                    return Ok(NumExpr::Var(var));
                }
                if let Some(clock) = self.net.clock_index(&name) {
                    if observables {
                        return Ok(NumExpr::Clock(clock));
                    }
                    return Err(QueryError {
                        col: token.col,
                        message: format!(
                            "clock `{name}` cannot appear in a proposition; clocks are \
                             observable only in `E[...]` and `simulate` expressions"
                        ),
                    });
                }
                Err(QueryError {
                    col: token.col,
                    message: format!("unknown variable `{name}`"),
                })
            }
            other => Err(self.error(format!("expected expression, found {other}"))),
        }
    }
}
