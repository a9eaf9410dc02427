//! Scalar reverse-mode automatic differentiation.
//!
//! Every differentiable computation in the crate is written once, generically over
//! [`Real`]. Evaluating with `f64` gives plain values; evaluating with [`Var`] records
//! a [`Tape`] that can be replayed backward.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by `f64` and tape variables.
pub trait Real:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn relu(self) -> Self;
    fn leaky_relu(self, slope: f64) -> Self;
    fn sigmoid(self) -> Self;
    fn sqrt(self) -> Self;
    /// `max(self, floor)`; the floor branch carries no derivative.
    fn floor_at(self, floor: f64) -> Self;

    fn scale(self, c: f64) -> Self {
        self * Self::cst(c)
    }

    fn zero() -> Self {
        Self::cst(0.0)
    }

    /// `Σ w_i x_i + b`.
    fn affine(w: &[Self], x: &[Self], b: Self) -> Self {
        w.iter().zip(x).fold(b, |acc, (&wi, &xi)| acc + wi * xi)
    }

    /// `Σ c_i x_i` with constant coefficients.
    fn lincomb(coef: &[f64], x: &[Self]) -> Self {
        coef.iter()
            .zip(x)
            .fold(Self::zero(), |acc, (&c, &xi)| acc + xi.scale(c))
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        Self::affine(a, b, Self::zero())
    }

    fn sum(xs: &[Self]) -> Self {
        xs.iter().fold(Self::zero(), |acc, &x| acc + x)
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn relu(self) -> Self {
        self.max(0.0)
    }
    fn leaky_relu(self, slope: f64) -> Self {
        if self > 0.0 {
            self
        } else {
            slope * self
        }
    }
    fn sigmoid(self) -> Self {
        1.0 / (1.0 + (-self).exp())
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn floor_at(self, floor: f64) -> Self {
        self.max(floor)
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn affine(w: &[f64], x: &[f64], b: f64) -> f64 {
        w.iter().zip(x).fold(b, |acc, (wi, xi)| acc + wi * xi)
    }
    fn lincomb(coef: &[f64], x: &[f64]) -> f64 {
        coef.iter().zip(x).map(|(c, xi)| c * xi).sum()
    }
}

pub fn values<T: Real>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(Real::value).collect()
}

pub fn consts<T: Real>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&v| T::cst(v)).collect()
}

#[derive(Default)]
struct Arena {
    /// `starts[i]..starts[i + 1]` indexes the parents of node `i`.
    starts: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Arena {
    fn push(&mut self, entries: impl IntoIterator<Item = (u32, f64)>) -> u32 {
        let id = (self.starts.len() - 1) as u32;
        for (p, d) in entries {
            self.parents.push(p);
            self.partials.push(d);
        }
        self.starts.push(self.parents.len() as u32);
        id
    }
}

/// Record of one forward evaluation.
pub struct Tape {
    arena: RefCell<Arena>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            arena: RefCell::new(Arena {
                starts: vec![0],
                ..Arena::default()
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.arena.borrow().starts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.arena.borrow_mut().push(std::iter::empty());
        Var {
            val: value,
            idx,
            tape: Some(self),
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    fn node(&self, val: f64, entries: impl IntoIterator<Item = (u32, f64)>) -> Var<'_> {
        let idx = self.arena.borrow_mut().push(entries);
        Var {
            val,
            idx,
            tape: Some(self),
        }
    }

    /// Reverse sweep seeded with `Σ cotangent_i · ∂output_i`.
    pub fn backward(&self, seeds: &[(Var<'_>, f64)]) -> Adjoints {
        let arena = self.arena.borrow();
        let n = arena.starts.len() - 1;
        let mut adj = vec![0.0; n];
        let mut highest = 0usize;
        for (v, c) in seeds {
            if let Some(t) = v.tape {
                debug_assert!(std::ptr::eq(t, self), "seed from a different tape");
                adj[v.idx as usize] += c;
                highest = highest.max(v.idx as usize + 1);
            }
        }
        for i in (0..highest).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (s, e) = (arena.starts[i] as usize, arena.starts[i + 1] as usize);
            for k in s..e {
                adj[arena.parents[k] as usize] += a * arena.partials[k];
            }
        }
        Adjoints { adj }
    }

    pub fn gradient(&self, output: Var<'_>) -> Adjoints {
        self.backward(&[(output, 1.0)])
    }
}

/// Accumulated adjoints of one reverse sweep.
#[derive(Debug, Clone)]
pub struct Adjoints {
    adj: Vec<f64>,
}

impl Adjoints {
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        match v.tape {
            Some(_) => self.adj.get(v.idx as usize).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|v| self.wrt(v)).collect()
    }

    /// Adds `∂/∂vs` into `out`.
    pub fn accumulate(&self, vs: &[Var<'_>], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(vs) {
            *o += self.wrt(v);
        }
    }
}

/// Scalar on a tape. Variables without a tape are constants.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    val: f64,
    idx: u32,
    tape: Option<&'t Tape>,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var({}#{})", self.val, self.idx),
            None => write!(f, "Const({})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub fn is_tracked(&self) -> bool {
        self.tape.is_some()
    }

    fn constant(val: f64) -> Self {
        Var {
            val,
            idx: u32::MAX,
            tape: None,
        }
    }

    fn unary(self, val: f64, d: f64) -> Self {
        match self.tape {
            Some(t) => t.node(val, [(self.idx, d)]),
            None => Var::constant(val),
        }
    }

    fn binary(self, rhs: Self, val: f64, da: f64, db: f64) -> Self {
        match (self.tape, rhs.tape) {
            (Some(t), Some(_)) => t.node(val, [(self.idx, da), (rhs.idx, db)]),
            (Some(t), None) => t.node(val, [(self.idx, da)]),
            (None, Some(t)) => t.node(val, [(rhs.idx, db)]),
            (None, None) => Var::constant(val),
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.binary(rhs, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl AddAssign for Var<'_> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<'t> Real for Var<'t> {
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }

    fn value(&self) -> f64 {
        self.val
    }

    // subgradient 0 at the kink
    fn relu(self) -> Self {
        if self.val > 0.0 {
            self
        } else {
            Var::constant(0.0)
        }
    }

    fn leaky_relu(self, slope: f64) -> Self {
        if self.val > 0.0 {
            self
        } else {
            self.unary(slope * self.val, slope)
        }
    }

    fn sigmoid(self) -> Self {
        let s = 1.0 / (1.0 + (-self.val).exp());
        self.unary(s, s * (1.0 - s))
    }

    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }

    fn floor_at(self, floor: f64) -> Self {
        if self.val >= floor {
            self
        } else {
            Var::constant(floor)
        }
    }

    fn scale(self, c: f64) -> Self {
        self.unary(self.val * c, c)
    }

    fn affine(w: &[Self], x: &[Self], b: Self) -> Self {
        let mut val = b.val;
        let mut tape = b.tape;
        for (wi, xi) in w.iter().zip(x) {
            val += wi.val * xi.val;
            tape = tape.or(wi.tape).or(xi.tape);
        }
        let Some(t) = tape else {
            return Var::constant(val);
        };
        let mut entries = Vec::with_capacity(2 * w.len() + 1);
        for (wi, xi) in w.iter().zip(x) {
            if wi.tape.is_some() {
                entries.push((wi.idx, xi.val));
            }
            if xi.tape.is_some() {
                entries.push((xi.idx, wi.val));
            }
        }
        if b.tape.is_some() {
            entries.push((b.idx, 1.0));
        }
        t.node(val, entries)
    }

    fn lincomb(coef: &[f64], x: &[Self]) -> Self {
        let mut val = 0.0;
        let mut tape = None;
        for (c, xi) in coef.iter().zip(x) {
            val += c * xi.val;
            tape = tape.or(xi.tape);
        }
        let Some(t) = tape else {
            return Var::constant(val);
        };
        let entries: Vec<(u32, f64)> = coef
            .iter()
            .zip(x)
            .filter(|(_, xi)| xi.tape.is_some())
            .map(|(&c, xi)| (xi.idx, c))
            .collect();
        t.node(val, entries)
    }

    fn sum(xs: &[Self]) -> Self {
        let val = xs.iter().map(|x| x.val).sum();
        let Some(t) = xs.iter().find_map(|x| x.tape) else {
            return Var::constant(val);
        };
        let entries: Vec<(u32, f64)> = xs
            .iter()
            .filter(|x| x.tape.is_some())
            .map(|x| (x.idx, 1.0))
            .collect();
        t.node(val, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        let z = x * y + x / y;
        let adj = tape.gradient(z);
        assert!((adj.wrt(&x) - (-2.0 + 1.0 / -2.0)).abs() < 1e-15);
        assert!((adj.wrt(&y) - (3.0 - 3.0 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn constants_do_not_touch_tape() {
        let tape = Tape::new();
        let a = Var::cst(2.0) * Var::cst(3.0);
        assert!(!a.is_tracked());
        assert!(tape.is_empty());
    }

    #[test]
    fn affine_matches_composition() {
        let tape = Tape::new();
        let w = tape.vars(&[0.5, -1.5]);
        let x = tape.vars(&[2.0, 4.0]);
        let b = tape.var(0.25);
        let y = Var::affine(&w, &x, b);
        assert_eq!(y.value(), 0.5 * 2.0 - 1.5 * 4.0 + 0.25);
        let adj = tape.gradient(y);
        assert_eq!(adj.wrt_all(&w), vec![2.0, 4.0]);
        assert_eq!(adj.wrt_all(&x), vec![0.5, -1.5]);
        assert_eq!(adj.wrt(&b), 1.0);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let tape = Tape::new();
        let x = tape.var(1.3);
        let y = x.sigmoid() * x;
        let adj = tape.backward(&[(y, 0.0)]);
        assert_eq!(adj.wrt(&x), 0.0);
    }
}
