//! Difference-bound matrices over the model's clocks.
//!
//! A matrix of dimension `n + 1` represents a convex set of clock
//! valuations: entry `(i, j)` bounds `x_i - x_j` where index 0 is the
//! constant reference clock. Every public operation keeps the matrix in
//! closed (canonical) form, so syntactic equality coincides with set
//! equality for non-empty zones and inclusion is a pointwise comparison.
//!
//! Bounds carry their strictness explicitly. At equal values a strict
//! bound is the tighter one: `(m, <)` sorts before `(m, <=)`.

use std::cmp::Ordering;

use crate::model::{ClockConstraint, Relation};

/// An upper bound `x_i - x_j < value` or `<= value`, or unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bound {
    value: i64,
    strict: bool,
}

impl Bound {
    pub const INF: Bound = Bound { value: i64::MAX, strict: false };
    pub const LE_ZERO: Bound = Bound { value: 0, strict: false };

    pub fn le(value: i64) -> Bound {
        Bound { value, strict: false }
    }

    pub fn lt(value: i64) -> Bound {
        Bound { value, strict: true }
    }

    pub fn is_inf(self) -> bool {
        self == Bound::INF
    }

    pub fn value(self) -> i64 {
        self.value
    }

    pub fn is_strict(self) -> bool {
        self.strict
    }

    fn add(self, other: Bound) -> Bound {
        if self.is_inf() || other.is_inf() {
            return Bound::INF;
        }
        Bound {
            value: self.value.saturating_add(other.value),
            strict: self.strict || other.strict,
        }
    }

    /// Bound of the complement constraint: negating `x - y <= m` yields
    /// `y - x < -m`, and negating `x - y < m` yields `y - x <= -m`. The
    /// result applies at the transposed matrix position.
    pub fn negated(self) -> Bound {
        debug_assert!(!self.is_inf());
        Bound { value: -self.value, strict: !self.strict }
    }

    /// Does the difference `lhs` satisfy this bound?
    fn admits(self, lhs: f64) -> bool {
        if self.is_inf() {
            return true;
        }
        if self.strict {
            lhs < self.value as f64
        } else {
            lhs <= self.value as f64
        }
    }
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        if self == other {
            return Ordering::Equal;
        }
        if self.is_inf() {
            return Ordering::Greater;
        }
        if other.is_inf() {
            return Ordering::Less;
        }
        // At equal values the strict bound is tighter, hence smaller.
        self.value.cmp(&other.value).then_with(|| other.strict.cmp(&self.strict))
    }
}

/// A zone in closed form. `dim` counts the reference clock.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dbm {
    dim: usize,
    m: Vec<Bound>,
}

impl Dbm {
    /// The zone where every clock equals zero.
    pub fn zero(clocks: usize) -> Dbm {
        Dbm { dim: clocks + 1, m: vec![Bound::LE_ZERO; (clocks + 1) * (clocks + 1)] }
    }

    /// The zone of all non-negative valuations. Already in closed form.
    pub fn universal(clocks: usize) -> Dbm {
        let dim = clocks + 1;
        let mut m = vec![Bound::INF; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = Bound::LE_ZERO;
            m[i] = Bound::LE_ZERO;
        }
        Dbm { dim, m }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, i: usize, j: usize) -> Bound {
        self.m[i * self.dim + j]
    }

    fn set(&mut self, i: usize, j: usize, b: Bound) {
        self.m[i * self.dim + j] = b;
    }

    /// Floyd-Warshall closure. Leaves a negative diagonal entry in place
    /// when the zone is empty.
    pub fn close(&mut self) {
        let n = self.dim;
        for k in 0..n {
            for i in 0..n {
                let ik = self.at(i, k);
                if ik.is_inf() {
                    continue;
                }
                for j in 0..n {
                    let through = ik.add(self.at(k, j));
                    if through < self.at(i, j) {
                        self.set(i, j, through);
                    }
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim).any(|i| self.at(i, i) < Bound::LE_ZERO)
    }

    /// Future operator: drop all upper bounds on individual clocks.
    pub fn up(&mut self) {
        for i in 1..self.dim {
            self.set(i, 0, Bound::INF);
        }
    }

    /// Past operator: relax every lower bound to zero, then restore
    /// closure so difference constraints tighten what they must.
    pub fn down(&mut self) {
        for j in 1..self.dim {
            if self.at(0, j) < Bound::LE_ZERO {
                self.set(0, j, Bound::LE_ZERO);
            }
        }
        self.close();
    }

    /// Resets a clock (model index, not matrix index) to zero.
    pub fn reset(&mut self, clock: usize) {
        let x = clock + 1;
        for j in 0..self.dim {
            self.set(x, j, self.at(0, j));
            self.set(j, x, self.at(j, 0));
        }
    }

    /// Adds `x_i - x_j (<|<=) bound` and restores closure incrementally.
    pub fn constrain(&mut self, i: usize, j: usize, bound: Bound) {
        if bound >= self.at(i, j) {
            return;
        }
        self.set(i, j, bound);
        let n = self.dim;
        for a in 0..n {
            let ai = self.at(a, i);
            if ai.is_inf() {
                continue;
            }
            for b in 0..n {
                let through = ai.add(bound).add(self.at(j, b));
                if through < self.at(a, b) {
                    self.set(a, b, through);
                }
            }
        }
    }

    /// Conjoins one atomic constraint from the model.
    pub fn constrain_atom(&mut self, c: &ClockConstraint) {
        match *c {
            ClockConstraint::Single { clock, rel, bound } => {
                let x = clock.0 + 1;
                match rel {
                    Relation::Lt => self.constrain(x, 0, Bound::lt(bound)),
                    Relation::Le => self.constrain(x, 0, Bound::le(bound)),
                    Relation::Eq => {
                        self.constrain(x, 0, Bound::le(bound));
                        self.constrain(0, x, Bound::le(-bound));
                    }
                    Relation::Ge => self.constrain(0, x, Bound::le(-bound)),
                    Relation::Gt => self.constrain(0, x, Bound::lt(-bound)),
                }
            }
            ClockConstraint::Diff { left, right, rel, bound } => {
                let l = left.0 + 1;
                let r = right.0 + 1;
                match rel {
                    Relation::Lt => self.constrain(l, r, Bound::lt(bound)),
                    Relation::Le => self.constrain(l, r, Bound::le(bound)),
                    Relation::Eq => {
                        self.constrain(l, r, Bound::le(bound));
                        self.constrain(r, l, Bound::le(-bound));
                    }
                    Relation::Ge => self.constrain(r, l, Bound::le(-bound)),
                    Relation::Gt => self.constrain(r, l, Bound::lt(-bound)),
                }
            }
        }
    }

    pub fn constrain_all(&mut self, atoms: &[ClockConstraint]) {
        for c in atoms {
            self.constrain_atom(c);
            if self.is_empty() {
                return;
            }
        }
    }

    /// Pointwise minimum of two closed matrices, re-closed.
    pub fn intersect(&self, other: &Dbm) -> Dbm {
        debug_assert_eq!(self.dim, other.dim);
        let m = self.m.iter().zip(&other.m).map(|(a, b)| (*a).min(*b)).collect();
        let mut out = Dbm { dim: self.dim, m };
        out.close();
        out
    }

    /// `other` is a subset of `self`. Both matrices must be closed and
    /// non-empty.
    pub fn includes(&self, other: &Dbm) -> bool {
        debug_assert_eq!(self.dim, other.dim);
        self.m.iter().zip(&other.m).all(|(a, b)| b <= a)
    }

    /// Classic per-clock maximal-constant extrapolation. `k[c]` is the
    /// largest constant compared against model clock `c`; the reference
    /// clock uses zero. Bounds above `k` are dropped, bounds below `-k`
    /// are clamped, and the matrix is re-closed.
    pub fn extrapolate(&mut self, k: &[i64]) {
        debug_assert_eq!(k.len() + 1, self.dim);
        let cap = |idx: usize| if idx == 0 { 0 } else { k[idx - 1] };
        let mut changed = false;
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i == j {
                    continue;
                }
                let b = self.at(i, j);
                if !b.is_inf() && b > Bound::le(cap(i)) {
                    self.set(i, j, Bound::INF);
                    changed = true;
                } else if b < Bound::lt(-cap(j)) {
                    self.set(i, j, Bound::lt(-cap(j)));
                    changed = true;
                }
            }
        }
        if changed {
            self.close();
        }
    }

    /// Splits `self \ other` into disjoint convex pieces, dropping empty
    /// ones. Pieces are produced in row-major order of the constraints of
    /// `other` that cut `self`.
    pub fn subtract(&self, other: &Dbm) -> Vec<Dbm> {
        debug_assert_eq!(self.dim, other.dim);
        let mut pieces = Vec::new();
        let mut rest = self.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i == j {
                    continue;
                }
                let b = other.at(i, j);
                if b.is_inf() || b >= rest.at(i, j) {
                    continue;
                }
                // The part of `rest` violating `x_i - x_j (<|<=) b`.
                let mut outside = rest.clone();
                outside.constrain(j, i, b.negated());
                if !outside.is_empty() {
                    pieces.push(outside);
                }
                rest.constrain(i, j, b);
                if rest.is_empty() {
                    return pieces;
                }
            }
        }
        // Whatever is left lies inside `other` and is discarded.
        pieces
    }

    /// Is `self \ (w_1 ∪ ... ∪ w_n)` non-empty?
    pub fn escapes_all(&self, others: &[Dbm]) -> bool {
        let mut remaining = vec![self.clone()];
        for w in others {
            let mut next = Vec::new();
            for piece in &remaining {
                next.extend(piece.subtract(w));
            }
            if next.is_empty() {
                return false;
            }
            remaining = next;
        }
        true
    }

    /// Smallest value of a clock anywhere in the zone.
    pub fn lower_bound(&self, clock: usize) -> i64 {
        -self.at(0, clock + 1).value()
    }

    /// Membership test for a concrete valuation, mainly for oracles and
    /// tests. `values[c]` is model clock `c`.
    pub fn contains_point(&self, values: &[f64]) -> bool {
        debug_assert_eq!(values.len() + 1, self.dim);
        let v = |i: usize| if i == 0 { 0.0 } else { values[i - 1] };
        for i in 0..self.dim {
            for j in 0..self.dim {
                if !self.at(i, j).admits(v(i) - v(j)) {
                    return false;
                }
            }
        }
        true
    }
}
