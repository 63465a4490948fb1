//! Gradient training of truth values and formula weights.
//!
//! Each step retraces the whole inference: learnable strengths are pushed
//! into the KB as fresh sigmoid nodes, every target is backward-chained, and
//! the cross-entropy of the predictions is differentiated back to the
//! parameters.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::atom_store::{format_atom, AtomError, AtomId, AtomSpace, TruthValue};
use crate::autodiff::{sigmoid, Algebra, AutodiffError, Tape, Var};
use crate::rule_engine::{BackwardChainer, FactSnapshot, Rule, RuleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("predictions and labels differ in length ({preds} vs {labels})")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("empty dataset")]
    Empty,
    #[error("label {0} outside [0, 1]")]
    BadLabel(f64),
    #[error("nothing to train: no parameters given")]
    NoParameters,
    #[error("example {index}: target {target} is not derivable")]
    Underivable { index: usize, target: String },
    #[error("invalid train config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Strength kept in (0, 1) by a logit parametrization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnableStrength {
    theta: Var,
}

impl LearnableStrength {
    /// Fresh parameter whose exposed strength is `init` (clamped away from
    /// 0 and 1 so the logit is finite).
    pub fn new(tape: &mut Tape, init: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&init) {
            return Err(TrainError::BadLabel(init));
        }
        let p = init.clamp(1e-6, 1.0 - 1e-6);
        Self::from_logit(tape, (p / (1.0 - p)).ln())
    }

    pub fn from_logit(tape: &mut Tape, theta: f64) -> Result<Self> {
        Ok(LearnableStrength {
            theta: tape.parameter(theta)?,
        })
    }

    pub fn theta(&self) -> Var {
        self.theta
    }

    /// Records sigmoid(theta) on the tape.
    pub fn strength(&self, tape: &mut Tape) -> Result<Var> {
        Ok(tape.sigmoid(self.theta)?)
    }

    pub fn value(&self, tape: &Tape) -> Result<f64> {
        Ok(sigmoid(tape.value(self.theta)?))
    }
}

/// One supervised target: the atom to infer and its desired strength.
///
/// Labels are 0/1 for observed data; fractional labels serve as soft
/// targets when fitting a formula to another formula's outputs. Examples
/// sharing a `group` are averaged before summing across groups.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub target: AtomId,
    pub label: f64,
    pub group: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    learning_rate: f64,
    steps: usize,
    seed: u64,
    log_every: usize,
    max_depth: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            steps: 2000,
            seed: 0,
            log_every: 1,
            max_depth: 2,
        }
    }
}

impl TrainConfig {
    pub fn new(learning_rate: f64, steps: usize, seed: u64, log_every: usize, max_depth: usize) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive"));
        }
        if steps == 0 {
            return Err(TrainError::InvalidConfig("steps must be at least 1"));
        }
        if log_every == 0 {
            return Err(TrainError::InvalidConfig("log_every must be at least 1"));
        }
        if max_depth == 0 {
            return Err(TrainError::InvalidConfig("max_depth must be at least 1"));
        }
        Ok(TrainConfig {
            learning_rate,
            steps,
            seed,
            log_every,
            max_depth,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn log_every(&self) -> usize {
        self.log_every
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }
}

/// −Σ [y log p + (1 − y) log(1 − p)], with logs clamped at the tape's epsilon.
pub fn cross_entropy(tape: &mut Tape, preds: &[Var], labels: &[f64]) -> Result<Var> {
    if preds.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut total = tape.constant(0.0)?;
    for (&p, &y) in preds.iter().zip(labels) {
        if !(0.0..=1.0).contains(&y) {
            return Err(TrainError::BadLabel(y));
        }
        let lp = tape.log(p)?;
        let q = tape.one_minus(p)?;
        let lq = tape.log(q)?;
        let y_c = tape.constant(y)?;
        let ny_c = tape.constant(1.0 - y)?;
        let a = tape.mul(y_c, lp)?;
        let b = tape.mul(ny_c, lq)?;
        let term = tape.add(a, b)?;
        total = tape.sub(total, term)?;
    }
    Ok(total)
}

/// value −= lr · grad for each parameter.
pub fn sgd_step(tape: &mut Tape, params: &[Var], learning_rate: f64) -> Result<()> {
    for &p in params {
        let x = tape.value(p)? - learning_rate * tape.grad(p)?;
        tape.set_value(p, x)?;
    }
    Ok(())
}

/// Mean label: the closed-form optimum of a single learnable strength.
pub fn empirical_frequency(dataset: &[LabeledExample]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(TrainError::Empty);
    }
    Ok(dataset.iter().map(|e| e.label).sum::<f64>() / dataset.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// (step, loss before that step's update).
    pub loss_curve: Vec<(usize, f64)>,
    /// Final raw values of the named parameters.
    pub params: BTreeMap<String, f64>,
    /// Final exposed strengths, keyed by the atom's text form.
    pub learned_strengths: BTreeMap<String, f64>,
}

/// A strength to learn and the atom it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Learnable {
    pub atom: AtomId,
    pub strength: LearnableStrength,
    pub confidence: f64,
}

/// Groups in first-appearance order with the member indices.
fn groups(dataset: &[LabeledExample]) -> Vec<Vec<usize>> {
    let mut order: Vec<&str> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, e) in dataset.iter().enumerate() {
        match order.iter().position(|g| *g == e.group) {
            Some(k) => members[k].push(i),
            None => {
                order.push(&e.group);
                members.push(vec![i]);
            }
        }
    }
    members
}

fn push_learnables(kb: &mut AtomSpace, tape: &mut Tape, learnables: &[Learnable]) -> Result<()> {
    for l in learnables {
        let s = l.strength.strength(tape)?;
        let tv = TruthValue::new(tape, s, l.confidence)?;
        kb.set_tv(l.atom, tv)?;
    }
    Ok(())
}

/// Loss of the current parameters: Σ over groups of the group's mean
/// cross-entropy. Returns the loss node and the prediction nodes.
pub fn dataset_loss(
    kb: &mut AtomSpace,
    tape: &mut Tape,
    rules: &[Rule],
    facts: &FactSnapshot,
    dataset: &[LabeledExample],
    max_depth: usize,
) -> Result<(Var, Vec<Var>)> {
    if dataset.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut chainer = BackwardChainer::with_facts(facts.clone(), rules, max_depth);
    let mut preds = Vec::with_capacity(dataset.len());
    for (index, e) in dataset.iter().enumerate() {
        let proofs = chainer.prove(kb, tape, e.target)?;
        let Some(first) = proofs.first() else {
            return Err(TrainError::Underivable {
                index,
                target: format_atom(kb, e.target)?,
            });
        };
        preds.push(first.strength);
    }
    let mut loss = tape.constant(0.0)?;
    for members in groups(dataset) {
        let p: Vec<Var> = members.iter().map(|&i| preds[i]).collect();
        let y: Vec<f64> = members.iter().map(|&i| dataset[i].label).collect();
        let ce = cross_entropy(tape, &p, &y)?;
        let n = tape.constant(members.len() as f64)?;
        let mean = tape.div(ce, n)?;
        loss = tape.add(loss, mean)?;
    }
    Ok((loss, preds))
}

/// Plain SGD over the learnable strengths and `params`.
///
/// Training runs on a clone of `kb`, so derived atoms with per-step truth
/// values never leak out. On return the learnable atoms of `kb` hold
/// sigmoid nodes of the trained parameters.
pub fn train(
    kb: &mut AtomSpace,
    tape: &mut Tape,
    rules: &[Rule],
    dataset: &[LabeledExample],
    learnables: &[Learnable],
    params: &[(String, Var)],
    config: &TrainConfig,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(TrainError::Empty);
    }
    if learnables.is_empty() && params.is_empty() {
        return Err(TrainError::NoParameters);
    }
    let trainable: Vec<Var> = learnables
        .iter()
        .map(|l| l.strength.theta())
        .chain(params.iter().map(|(_, v)| *v))
        .collect();

    let mark = tape.mark();
    let mut work = kb.clone();
    push_learnables(&mut work, tape, learnables)?;
    let mut facts = FactSnapshot::of(&work);
    let mut loss_curve = Vec::new();

    for step in 0..config.steps {
        tape.rewind(mark);
        push_learnables(&mut work, tape, learnables)?;
        facts.refresh(&work)?;
        let (loss, _) = dataset_loss(&mut work, tape, rules, &facts, dataset, config.max_depth)?;
        if step % config.log_every == 0 || step + 1 == config.steps {
            loss_curve.push((step, tape.value(loss)?));
        }
        tape.backward(loss)?;
        sgd_step(tape, &trainable, config.learning_rate)?;
        tape.zero_grads();
    }

    tape.rewind(mark);
    push_learnables(kb, tape, learnables)?;

    let mut learned_strengths = BTreeMap::new();
    for l in learnables {
        learned_strengths.insert(format_atom(kb, l.atom)?, l.strength.value(tape)?);
    }
    let mut out_params = BTreeMap::new();
    for (name, v) in params {
        out_params.insert(name.clone(), tape.value(*v)?);
    }
    Ok(TrainReport {
        loss_curve,
        params: out_params,
        learned_strengths,
    })
}
