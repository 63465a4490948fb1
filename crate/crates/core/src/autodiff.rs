//! Scalar reverse-mode automatic differentiation.
//!
//! Every truth-value strength lives on a [`Tape`] as a [`Var`]. Formulas are
//! written against the [`Algebra`] trait, so the same code can either record
//! onto a tape (for gradients) or evaluate plain `f64`s through [`Plain`]
//! (for re-checking a recorded value bit for bit).
//!
//! The tape is append-only between [`Tape::mark`] and [`Tape::rewind`]:
//! training loops create their parameters once, mark the tape, and re-trace
//! the graph on every step.

use std::sync::atomic::{AtomicU32, Ordering};

use thiserror::Error;

/// Lower bound applied to the input of [`Algebra::log`].
pub const LOG_EPSILON: f64 = 1e-7;

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("variable belongs to tape {found}, expected tape {expected}")]
    TapeMismatch { expected: u32, found: u32 },
    #[error("variable index {0} is not on the tape (rewound?)")]
    StaleVar(usize),
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of negative value {0}")]
    LogDomain(f64),
    #[error("invalid clamp interval [{lo}, {hi}]")]
    ClampInterval { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a scalar recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.index as usize
    }

    pub fn tape_id(self) -> u32 {
        self.tape
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    OneMinus(u32),
    Log(u32),
    Sigmoid(u32),
    Clamp { input: u32, lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
struct Record {
    op: Op,
    value: f64,
    grad: f64,
    requires_grad: bool,
}

/// Append-only record of scalar operations.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    records: Vec<Record>,
    parameters: Vec<Var>,
}

/// Position on a tape that [`Tape::rewind`] can return to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mark(usize);

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            records: Vec::new(),
            parameters: Vec::new(),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Trainable leaves, in creation order.
    pub fn parameters(&self) -> &[Var] {
        &self.parameters
    }

    pub fn mark(&self) -> Mark {
        Mark(self.records.len())
    }

    /// Drops every record created after `mark`. Vars pointing past the mark
    /// become stale and are rejected by every accessor.
    pub fn rewind(&mut self, mark: Mark) {
        self.records.truncate(mark.0);
        self.parameters.retain(|p| p.index() < mark.0);
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(AutodiffError::TapeMismatch {
                expected: self.id,
                found: v.tape,
            });
        }
        let i = v.index();
        if i >= self.records.len() {
            return Err(AutodiffError::StaleVar(i));
        }
        Ok(i)
    }

    fn push(&mut self, op: Op, value: f64, requires_grad: bool) -> Var {
        let index = u32::try_from(self.records.len()).expect("tape exceeds u32::MAX records");
        self.records.push(Record {
            op,
            value,
            grad: 0.0,
            requires_grad,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    /// Creates a trainable leaf and registers it as a parameter.
    pub fn parameter(&mut self, x: f64) -> Result<Var> {
        if !x.is_finite() {
            return Err(AutodiffError::NonFinite(x));
        }
        let v = self.push(Op::Leaf, x, true);
        self.parameters.push(v);
        Ok(v)
    }

    pub fn grad(&self, v: Var) -> Result<f64> {
        let i = self.check(v)?;
        Ok(self.records[i].grad)
    }

    pub fn requires_grad(&self, v: Var) -> Result<bool> {
        let i = self.check(v)?;
        Ok(self.records[i].requires_grad)
    }

    /// Overwrites a leaf value. Records derived from it keep their cached
    /// values until the graph is re-traced.
    pub fn set_value(&mut self, v: Var, x: f64) -> Result<()> {
        let i = self.check(v)?;
        if !x.is_finite() {
            return Err(AutodiffError::NonFinite(x));
        }
        self.records[i].value = x;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for r in &mut self.records {
            r.grad = 0.0;
        }
    }

    /// Accumulates d(loss)/d(var) into the gradient of every record that
    /// `loss` depends on. Gradients from earlier calls are kept and added to.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let root = self.check(loss)?;
        let mut adjoint = vec![0.0; root + 1];
        adjoint[root] = 1.0;
        for i in (0..=root).rev() {
            let g = adjoint[i];
            if g == 0.0 {
                continue;
            }
            let value = self.records[i].value;
            let val = |j: u32| self.records[j as usize].value;
            match self.records[i].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    adjoint[a as usize] += g;
                    adjoint[b as usize] += g;
                }
                Op::Sub(a, b) => {
                    adjoint[a as usize] += g;
                    adjoint[b as usize] -= g;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(a), val(b));
                    adjoint[a as usize] += g * vb;
                    adjoint[b as usize] += g * va;
                }
                Op::Div(a, b) => {
                    let vb = val(b);
                    adjoint[a as usize] += g / vb;
                    adjoint[b as usize] -= g * value / vb;
                }
                Op::Neg(a) => adjoint[a as usize] -= g,
                Op::OneMinus(a) => adjoint[a as usize] -= g,
                Op::Log(a) => {
                    let x = val(a);
                    if (LOG_EPSILON..=1.0).contains(&x) {
                        adjoint[a as usize] += g / x;
                    }
                }
                Op::Sigmoid(a) => adjoint[a as usize] += g * value * (1.0 - value),
                Op::Clamp { input, lo, hi } => {
                    let x = val(input);
                    if (lo..=hi).contains(&x) {
                        adjoint[input as usize] += g;
                    }
                }
            }
        }
        for (r, a) in self.records.iter_mut().zip(adjoint) {
            r.grad += a;
        }
        Ok(())
    }

    /// Recomputes every record from its inputs and reports the first index
    /// whose cached value differs. Used to check the no-stale-value invariant.
    pub fn first_stale_record(&self) -> Option<usize> {
        let mut fresh: Vec<f64> = Vec::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            let v = |j: u32| fresh[j as usize];
            let recomputed = match r.op {
                Op::Leaf => r.value,
                Op::Add(a, b) => v(a) + v(b),
                Op::Sub(a, b) => v(a) - v(b),
                Op::Mul(a, b) => v(a) * v(b),
                Op::Div(a, b) => v(a) / v(b),
                Op::Neg(a) => -v(a),
                Op::OneMinus(a) => 1.0 - v(a),
                Op::Log(a) => log_clamped(v(a)),
                Op::Sigmoid(a) => sigmoid(v(a)),
                Op::Clamp { input, lo, hi } => v(input).clamp(lo, hi),
            };
            if recomputed.to_bits() != r.value.to_bits() {
                return Some(i);
            }
            fresh.push(recomputed);
        }
        None
    }
}

/// Logistic function, evaluated without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_clamped(x: f64) -> f64 {
    x.clamp(LOG_EPSILON, 1.0).ln()
}

/// Scalar operations shared by the recording tape and plain evaluation.
pub trait Algebra {
    type Value: Copy;

    fn constant(&mut self, x: f64) -> Result<Self::Value>;
    fn value(&self, a: Self::Value) -> Result<f64>;
    fn add(&mut self, a: Self::Value, b: Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: Self::Value, b: Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: Self::Value, b: Self::Value) -> Result<Self::Value>;
    fn div(&mut self, a: Self::Value, b: Self::Value) -> Result<Self::Value>;
    fn neg(&mut self, a: Self::Value) -> Result<Self::Value>;
    fn one_minus(&mut self, a: Self::Value) -> Result<Self::Value>;
    /// Natural log of the input clamped to `[LOG_EPSILON, 1]`. Negative
    /// inputs are an error; the gradient is zero outside the interval.
    fn log(&mut self, a: Self::Value) -> Result<Self::Value>;
    fn sigmoid(&mut self, a: Self::Value) -> Result<Self::Value>;
    /// Clamp into `[lo, hi]` with zero gradient outside the interval.
    fn clamp(&mut self, a: Self::Value, lo: f64, hi: f64) -> Result<Self::Value>;
}

fn check_log_input(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        Err(AutodiffError::LogDomain(x))
    } else {
        Ok(())
    }
}

fn check_clamp(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(AutodiffError::ClampInterval { lo, hi })
    }
}

impl Algebra for Tape {
    type Value = Var;

    fn constant(&mut self, x: f64) -> Result<Var> {
        if !x.is_finite() {
            return Err(AutodiffError::NonFinite(x));
        }
        Ok(self.push(Op::Leaf, x, false))
    }

    fn value(&self, a: Var) -> Result<f64> {
        let i = self.check(a)?;
        Ok(self.records[i].value)
    }

    fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a)?, self.value(b)?);
        Ok(self.push(Op::Add(a.index, b.index), va + vb, false))
    }

    fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a)?, self.value(b)?);
        Ok(self.push(Op::Sub(a.index, b.index), va - vb, false))
    }

    fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a)?, self.value(b)?);
        Ok(self.push(Op::Mul(a.index, b.index), va * vb, false))
    }

    fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a)?, self.value(b)?);
        if vb == 0.0 {
            return Err(AutodiffError::DivisionByZero);
        }
        Ok(self.push(Op::Div(a.index, b.index), va / vb, false))
    }

    fn neg(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a)?;
        Ok(self.push(Op::Neg(a.index), -va, false))
    }

    fn one_minus(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a)?;
        Ok(self.push(Op::OneMinus(a.index), 1.0 - va, false))
    }

    fn log(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a)?;
        check_log_input(va)?;
        Ok(self.push(Op::Log(a.index), log_clamped(va), false))
    }

    fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a)?;
        Ok(self.push(Op::Sigmoid(a.index), sigmoid(va), false))
    }

    fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        check_clamp(lo, hi)?;
        let va = self.value(a)?;
        Ok(self.push(Op::Clamp { input: a.index, lo, hi }, va.clamp(lo, hi), false))
    }
}

/// Plain `f64` evaluation with the exact arithmetic the tape records.
#[derive(Debug, Default, Clone, Copy)]
pub struct Plain;

impl Algebra for Plain {
    type Value = f64;

    fn constant(&mut self, x: f64) -> Result<f64> {
        if x.is_finite() {
            Ok(x)
        } else {
            Err(AutodiffError::NonFinite(x))
        }
    }

    fn value(&self, a: f64) -> Result<f64> {
        Ok(a)
    }

    fn add(&mut self, a: f64, b: f64) -> Result<f64> {
        Ok(a + b)
    }

    fn sub(&mut self, a: f64, b: f64) -> Result<f64> {
        Ok(a - b)
    }

    fn mul(&mut self, a: f64, b: f64) -> Result<f64> {
        Ok(a * b)
    }

    fn div(&mut self, a: f64, b: f64) -> Result<f64> {
        if b == 0.0 {
            Err(AutodiffError::DivisionByZero)
        } else {
            Ok(a / b)
        }
    }

    fn neg(&mut self, a: f64) -> Result<f64> {
        Ok(-a)
    }

    fn one_minus(&mut self, a: f64) -> Result<f64> {
        Ok(1.0 - a)
    }

    fn log(&mut self, a: f64) -> Result<f64> {
        check_log_input(a)?;
        Ok(log_clamped(a))
    }

    fn sigmoid(&mut self, a: f64) -> Result<f64> {
        Ok(sigmoid(a))
    }

    fn clamp(&mut self, a: f64, lo: f64, hi: f64) -> Result<f64> {
        check_clamp(lo, hi)?;
        Ok(a.clamp(lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let a = t.constant(2.0).unwrap();
        let b = t.constant(3.0).unwrap();
        let p = t.mul(a, b).unwrap();
        assert_eq!(t.value(p).unwrap(), 6.0);
        t.backward(p).unwrap();
        assert_eq!(t.grad(a).unwrap(), 3.0);
        assert_eq!(t.grad(b).unwrap(), 2.0);
    }

    #[test]
    fn one_minus_value_and_grad() {
        let mut t = Tape::new();
        let a = t.constant(0.3).unwrap();
        let y = t.one_minus(a).unwrap();
        assert!(close(t.value(y).unwrap(), 0.7));
        t.backward(y).unwrap();
        assert_eq!(t.grad(a).unwrap(), -1.0);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut t = Tape::new();
        let x = t.parameter(1.5).unwrap();
        let y = t.add(x, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap(), 2.0);

        let mut t = Tape::new();
        let a = t.parameter(3.0).unwrap();
        let sq = t.mul(a, a).unwrap();
        t.backward(sq).unwrap();
        assert_eq!(t.grad(a).unwrap(), 6.0);
    }

    #[test]
    fn sigmoid_and_log_at_reference_points() {
        let mut t = Tape::new();
        let z = t.constant(0.0).unwrap();
        let s = t.sigmoid(z).unwrap();
        assert_eq!(t.value(s).unwrap(), 0.5);
        t.backward(s).unwrap();
        assert_eq!(t.grad(z).unwrap(), 0.25);

        let one = t.constant(1.0).unwrap();
        let l = t.log(one).unwrap();
        assert_eq!(t.value(l).unwrap(), 0.0);
        t.backward(l).unwrap();
        assert_eq!(t.grad(one).unwrap(), 1.0);
    }

    #[test]
    fn log_clamps_saturated_probabilities() {
        let mut t = Tape::new();
        let zero = t.constant(0.0).unwrap();
        let l = t.log(zero).unwrap();
        assert!(close(t.value(l).unwrap(), LOG_EPSILON.ln()));
        t.backward(l).unwrap();
        assert_eq!(t.grad(zero).unwrap(), 0.0);

        let neg = t.constant(-0.1).unwrap();
        assert_eq!(t.log(neg), Err(AutodiffError::LogDomain(-0.1)));
    }

    #[test]
    fn constant_loss_leaves_zero_grads() {
        let mut t = Tape::new();
        let a = t.parameter(0.4).unwrap();
        let _ = t.mul(a, a).unwrap();
        let c = t.constant(2.0).unwrap();
        t.backward(c).unwrap();
        assert_eq!(t.grad(a).unwrap(), 0.0);
    }

    #[test]
    fn repeated_backward_doubles_and_zero_resets() {
        let mut t = Tape::new();
        let a = t.parameter(2.0).unwrap();
        let b = t.constant(5.0).unwrap();
        let y = t.mul(a, b).unwrap();
        t.backward(y).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(a).unwrap(), 10.0);
        assert_eq!(t.grad(y).unwrap(), 2.0);
        t.zero_grads();
        for v in [a, b, y] {
            assert_eq!(t.grad(v).unwrap(), 0.0);
        }
    }

    #[test]
    fn leaves_reject_non_finite() {
        let mut t = Tape::new();
        assert!(matches!(t.constant(f64::NAN), Err(AutodiffError::NonFinite(_))));
        assert!(matches!(t.parameter(f64::INFINITY), Err(AutodiffError::NonFinite(_))));
        let p = t.parameter(0.3).unwrap();
        let q = t.parameter(0.3).unwrap();
        assert_ne!(p, q);
        assert_eq!(t.value(p).unwrap(), 0.3);
        assert!(t.requires_grad(p).unwrap());
        assert_eq!(t.parameters(), &[p, q]);
    }

    #[test]
    fn division_by_zero_and_tape_mismatch() {
        let mut t = Tape::new();
        let a = t.constant(1.0).unwrap();
        let z = t.constant(0.0).unwrap();
        assert_eq!(t.div(a, z), Err(AutodiffError::DivisionByZero));

        let mut other = Tape::new();
        let b = other.constant(1.0).unwrap();
        assert!(matches!(t.add(a, b), Err(AutodiffError::TapeMismatch { .. })));
        assert!(matches!(t.backward(b), Err(AutodiffError::TapeMismatch { .. })));
    }

    #[test]
    fn rewind_keeps_parameters_before_mark() {
        let mut t = Tape::new();
        let p = t.parameter(1.0).unwrap();
        let mark = t.mark();
        let q = t.parameter(2.0).unwrap();
        let y = t.mul(p, q).unwrap();
        t.rewind(mark);
        assert_eq!(t.parameters(), &[p]);
        assert!(matches!(t.value(y), Err(AutodiffError::StaleVar(_))));
        assert_eq!(t.value(p).unwrap(), 1.0);
    }

    #[test]
    fn clamp_blocks_gradient_outside() {
        let mut t = Tape::new();
        let a = t.parameter(1.4).unwrap();
        let c = t.clamp(a, 0.0, 1.0).unwrap();
        assert_eq!(t.value(c).unwrap(), 1.0);
        t.backward(c).unwrap();
        assert_eq!(t.grad(a).unwrap(), 0.0);
        assert!(t.clamp(a, 1.0, 0.0).is_err());
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(30.0) < 1.0);
    }

    #[test]
    fn cached_values_match_reevaluation() {
        let mut t = Tape::new();
        let a = t.parameter(0.2).unwrap();
        let b = t.constant(0.9).unwrap();
        let m = t.mul(a, b).unwrap();
        let s = t.sigmoid(m).unwrap();
        let l = t.log(s).unwrap();
        let _ = t.div(l, b).unwrap();
        assert_eq!(t.first_stale_record(), None);
        t.set_value(a, 0.7).unwrap();
        assert_eq!(t.first_stale_record(), Some(m.index()));
    }
}
