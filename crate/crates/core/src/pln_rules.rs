//! Strength formulas and the standard rule set.
//!
//! Each formula is generic over [`Algebra`], so the same code records onto a
//! tape during inference and evaluates plain floats when a trace is checked.
//!
//! | formula | output |
//! |---|---|
//! | modus ponens | `P(B|A)·P(A) + P(B|¬A)·(1 − P(A))` |
//! | deduction | `sAB·sBC + (1 − sAB)·clamp((sC − sB·sBC)/(1 − sB))` |
//! | and / or / not | `a·b`, `1 − (1 − a)(1 − b)`, `1 − a` |
//! | trainable modus ponens | `σ(w0·P(A)·P(B|A) + w1·P(A) + w2·P(B|A) + w3)` |

use thiserror::Error;

use crate::atom_store::{AtomError, AtomSpace, AtomType};
use crate::autodiff::{Algebra, AutodiffError, Plain, Tape, Var};
use crate::pattern_matcher::{VarDecl, VarDecls};
use crate::rule_engine::{InputSource, Rule, RuleError};

/// Guard on `1 − sB` in the deduction formula.
pub const DEDUCTION_EPSILON: f64 = 1e-6;

/// `P(B|¬A)` used when the KB has no `Impl(Not(A), B)`.
pub const DEFAULT_P_B_GIVEN_NOT_A: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulaError {
    #[error("{input} = {value} is outside [0, 1]")]
    OutOfRange { input: &'static str, value: f64 },
    #[error("formula takes {expected} inputs, got {found}")]
    Arity { expected: usize, found: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, FormulaError>;

fn unit<A: Algebra>(alg: &A, v: A::Value, input: &'static str) -> Result<()> {
    let value = alg.value(v)?;
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(FormulaError::OutOfRange { input, value })
    }
}

pub fn modus_ponens_strength<A: Algebra>(
    alg: &mut A,
    p_a: A::Value,
    p_b_given_a: A::Value,
    p_b_given_not_a: A::Value,
) -> Result<A::Value> {
    unit(alg, p_a, "P(A)")?;
    unit(alg, p_b_given_a, "P(B|A)")?;
    unit(alg, p_b_given_not_a, "P(B|not A)")?;
    let with_a = alg.mul(p_b_given_a, p_a)?;
    let p_not_a = alg.one_minus(p_a)?;
    let without_a = alg.mul(p_b_given_not_a, p_not_a)?;
    let sum = alg.add(with_a, without_a)?;
    // rounding can leave a convex combination one ulp above 1
    Ok(alg.clamp(sum, 0.0, 1.0)?)
}

pub fn deduction_strength<A: Algebra>(
    alg: &mut A,
    s_ab: A::Value,
    s_bc: A::Value,
    s_b: A::Value,
    s_c: A::Value,
) -> Result<A::Value> {
    unit(alg, s_ab, "sAB")?;
    unit(alg, s_bc, "sBC")?;
    unit(alg, s_b, "sB")?;
    unit(alg, s_c, "sC")?;
    let direct = alg.mul(s_ab, s_bc)?;
    let conditional = if alg.value(s_b)? >= 1.0 - DEDUCTION_EPSILON {
        s_c
    } else {
        let through_b = alg.mul(s_b, s_bc)?;
        let num = alg.sub(s_c, through_b)?;
        let den = alg.one_minus(s_b)?;
        let ratio = alg.div(num, den)?;
        alg.clamp(ratio, 0.0, 1.0)?
    };
    let not_ab = alg.one_minus(s_ab)?;
    let indirect = alg.mul(not_ab, conditional)?;
    let sum = alg.add(direct, indirect)?;
    Ok(alg.clamp(sum, 0.0, 1.0)?)
}

pub fn fuzzy_and<A: Algebra>(alg: &mut A, a: A::Value, b: A::Value) -> Result<A::Value> {
    unit(alg, a, "a")?;
    unit(alg, b, "b")?;
    Ok(alg.mul(a, b)?)
}

pub fn fuzzy_or<A: Algebra>(alg: &mut A, a: A::Value, b: A::Value) -> Result<A::Value> {
    unit(alg, a, "a")?;
    unit(alg, b, "b")?;
    let na = alg.one_minus(a)?;
    let nb = alg.one_minus(b)?;
    let neither = alg.mul(na, nb)?;
    Ok(alg.one_minus(neither)?)
}

pub fn fuzzy_not<A: Algebra>(alg: &mut A, a: A::Value) -> Result<A::Value> {
    unit(alg, a, "a")?;
    Ok(alg.one_minus(a)?)
}

pub fn trainable_mp_strength<A: Algebra>(
    alg: &mut A,
    p_a: A::Value,
    p_b_given_a: A::Value,
    w: &[A::Value; 4],
) -> Result<A::Value> {
    unit(alg, p_a, "P(A)")?;
    unit(alg, p_b_given_a, "P(B|A)")?;
    let product = alg.mul(p_a, p_b_given_a)?;
    let t0 = alg.mul(w[0], product)?;
    let t1 = alg.mul(w[1], p_a)?;
    let t2 = alg.mul(w[2], p_b_given_a)?;
    let s = alg.add(t0, t1)?;
    let s = alg.add(s, t2)?;
    let s = alg.add(s, w[3])?;
    Ok(alg.sigmoid(s)?)
}

/// Trainable weights `w0..w3` of the sigmoid-linear modus ponens family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormulaWeights {
    pub w: [Var; 4],
}

impl FormulaWeights {
    /// All-zero parameters: the formula starts at 0.5 everywhere.
    pub fn zeros(tape: &mut Tape) -> Result<Self> {
        Self::from_values(tape, [0.0; 4])
    }

    pub fn from_values(tape: &mut Tape, values: [f64; 4]) -> Result<Self> {
        Ok(FormulaWeights {
            w: [
                tape.parameter(values[0])?,
                tape.parameter(values[1])?,
                tape.parameter(values[2])?,
                tape.parameter(values[3])?,
            ],
        })
    }

    pub fn values(&self, tape: &Tape) -> Result<[f64; 4]> {
        let mut out = [0.0; 4];
        for (o, &v) in out.iter_mut().zip(&self.w) {
            *o = tape.value(v)?;
        }
        Ok(out)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.w.to_vec()
    }
}

/// The strength function attached to a rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Formula {
    ModusPonens,
    TrainableModusPonens(FormulaWeights),
    Deduction,
    And,
    Or,
    Not,
}

impl Formula {
    pub fn arity(&self) -> usize {
        match self {
            Formula::ModusPonens => 3,
            Formula::TrainableModusPonens(_) => 2,
            Formula::Deduction => 4,
            Formula::And | Formula::Or => 2,
            Formula::Not => 1,
        }
    }

    fn run<A: Algebra>(&self, alg: &mut A, x: &[A::Value], w: Option<[A::Value; 4]>) -> Result<A::Value> {
        if x.len() != self.arity() {
            return Err(FormulaError::Arity {
                expected: self.arity(),
                found: x.len(),
            });
        }
        match self {
            Formula::ModusPonens => modus_ponens_strength(alg, x[0], x[1], x[2]),
            Formula::TrainableModusPonens(_) => {
                let w = w.expect("weights supplied for trainable formula");
                trainable_mp_strength(alg, x[0], x[1], &w)
            }
            Formula::Deduction => deduction_strength(alg, x[0], x[1], x[2], x[3]),
            Formula::And => fuzzy_and(alg, x[0], x[1]),
            Formula::Or => fuzzy_or(alg, x[0], x[1]),
            Formula::Not => fuzzy_not(alg, x[0]),
        }
    }

    /// Records the formula on the tape.
    pub fn apply(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Var> {
        let w = match self {
            Formula::TrainableModusPonens(fw) => Some(fw.w),
            _ => None,
        };
        self.run(tape, inputs, w)
    }

    /// Plain evaluation; trainable weights are read from `tape`.
    pub fn evaluate(&self, tape: &Tape, inputs: &[f64]) -> Result<f64> {
        let w = match self {
            Formula::TrainableModusPonens(fw) => Some(fw.values(tape)?),
            _ => None,
        };
        self.run(&mut Plain, inputs, w)
    }
}

/// The concrete rules, built against one KB (their patterns are interned
/// there) and one tape (the trainable weights live there).
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub modus_ponens: Rule,
    pub deduction: Rule,
    pub and: Rule,
    pub or: Rule,
    pub not: Rule,
    pub trainable_modus_ponens: Rule,
    pub weights: FormulaWeights,
}

impl RuleSet {
    /// Modus ponens, deduction and the three connectives.
    pub fn standard(&self) -> Vec<Rule> {
        vec![
            self.modus_ponens.clone(),
            self.deduction.clone(),
            self.and.clone(),
            self.or.clone(),
            self.not.clone(),
        ]
    }

    /// Same as [`standard`](Self::standard) with the trainable modus ponens
    /// in place of the exact one.
    pub fn trainable(&self) -> Vec<Rule> {
        vec![
            self.trainable_modus_ponens.clone(),
            self.deduction.clone(),
            self.and.clone(),
            self.or.clone(),
            self.not.clone(),
        ]
    }
}

#[derive(Debug, Error)]
pub enum RuleSetError {
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// Builds the standard rules. `p_b_given_not_a` is the modus ponens fallback
/// when no `Impl(Not(A), B)` is stored. Weights start at zero.
pub fn make_rule_set(kb: &mut AtomSpace, tape: &mut Tape, p_b_given_not_a: f64) -> std::result::Result<RuleSet, RuleSetError> {
    let weights = FormulaWeights::zeros(tape)?;
    make_rule_set_with_weights(kb, p_b_given_not_a, weights)
}

pub fn make_rule_set_with_weights(
    kb: &mut AtomSpace,
    p_b_given_not_a: f64,
    weights: FormulaWeights,
) -> std::result::Result<RuleSet, RuleSetError> {
    let var = |kb: &mut AtomSpace, name: &str| kb.intern_node(AtomType::VARIABLE_NODE, name);
    let (p, q, x) = (var(kb, "$P")?, var(kb, "$Q")?, var(kb, "$X")?);
    let (y, z) = (var(kb, "$Y")?, var(kb, "$Z")?);
    let (a, b) = (var(kb, "$A")?, var(kb, "$B")?);
    let typed = |v, t| VarDecl {
        var: v,
        constraint: Some(t),
    };
    let untyped = |v| VarDecl { var: v, constraint: None };

    let impl_pq = kb.intern_link(AtomType::IMPLICATION_LINK, &[p, q])?;
    let eval_px = kb.intern_link(AtomType::EVALUATION_LINK, &[p, x])?;
    let eval_qx = kb.intern_link(AtomType::EVALUATION_LINK, &[q, x])?;
    let not_p = kb.intern_link(AtomType::NOT_LINK, &[p])?;
    let impl_not_pq = kb.intern_link(AtomType::IMPLICATION_LINK, &[not_p, q])?;
    let mp_vars = VarDecls::new(vec![
        typed(p, AtomType::PREDICATE_NODE),
        typed(q, AtomType::PREDICATE_NODE),
        typed(x, AtomType::CONCEPT_NODE),
    ]);
    let modus_ponens = Rule::new(
        kb,
        "modus-ponens",
        mp_vars.clone(),
        vec![impl_pq, eval_px],
        eval_qx,
        Formula::ModusPonens,
        vec![
            InputSource::Premise(1),
            InputSource::Premise(0),
            InputSource::Lookup {
                template: impl_not_pq,
                fallback: p_b_given_not_a,
            },
        ],
    )?;
    let trainable_modus_ponens = Rule::new(
        kb,
        "trainable-modus-ponens",
        mp_vars,
        vec![impl_pq, eval_px],
        eval_qx,
        Formula::TrainableModusPonens(weights),
        vec![InputSource::Premise(1), InputSource::Premise(0)],
    )?;

    let inh_xy = kb.intern_link(AtomType::INHERITANCE_LINK, &[x, y])?;
    let inh_yz = kb.intern_link(AtomType::INHERITANCE_LINK, &[y, z])?;
    let inh_xz = kb.intern_link(AtomType::INHERITANCE_LINK, &[x, z])?;
    let deduction = Rule::new(
        kb,
        "deduction",
        VarDecls::new(vec![
            typed(x, AtomType::CONCEPT_NODE),
            typed(y, AtomType::CONCEPT_NODE),
            typed(z, AtomType::CONCEPT_NODE),
        ]),
        vec![inh_xy, inh_yz],
        inh_xz,
        Formula::Deduction,
        vec![
            InputSource::Premise(0),
            InputSource::Premise(1),
            InputSource::TermOf(y),
            InputSource::TermOf(z),
        ],
    )?;

    let and_ab = kb.intern_link(AtomType::AND_LINK, &[a, b])?;
    let or_ab = kb.intern_link(AtomType::OR_LINK, &[a, b])?;
    let not_a = kb.intern_link(AtomType::NOT_LINK, &[a])?;
    let binary = VarDecls::new(vec![untyped(a), untyped(b)]);
    let both = vec![InputSource::Premise(0), InputSource::Premise(1)];
    let and = Rule::new(kb, "and", binary.clone(), vec![a, b], and_ab, Formula::And, both.clone())?.backward_only();
    let or = Rule::new(kb, "or", binary, vec![a, b], or_ab, Formula::Or, both)?.backward_only();
    let not = Rule::new(
        kb,
        "not",
        VarDecls::new(vec![untyped(a)]),
        vec![a],
        not_a,
        Formula::Not,
        vec![InputSource::Premise(0)],
    )?
    .backward_only();

    Ok(RuleSet {
        modus_ponens,
        deduction,
        and,
        or,
        not,
        trainable_modus_ponens,
        weights,
    })
}
