//! Forward and backward chaining over an [`AtomSpace`].
//!
//! Rule formulas record onto the shared [`Tape`], and a conclusion's truth
//! value is the formula's output [`Var`] itself. A chain of rule applications
//! is therefore one computation graph from KB strengths to the final
//! conclusion, and `tape.backward(conclusion)` reaches every premise.
//!
//! Chaining treats *facts* as given: ground atoms that carry an explicitly
//! attached truth value. Backward chaining snapshots the facts when it
//! starts, so conclusions it derives never count as depth-0 proofs.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::atom_store::{AtomError, AtomId, AtomRef, AtomSpace, TruthValue};
use crate::autodiff::{Algebra, AutodiffError, Tape, Var};
use crate::pattern_matcher::{
    self, instantiate, match_clause, match_clauses, resolve, unify, Binding, MatchError, Resolved,
    VarDecls,
};
use crate::pln_rules::{Formula, FormulaError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("rule `{rule}`: conclusion variable `{var}` does not occur in any premise")]
    ConclusionVariable { rule: String, var: String },
    #[error("rule `{rule}`: {message}")]
    BadInputs { rule: String, message: String },
    #[error("rule `{rule}`: premise {index} is not grounded by the binding")]
    UngroundedPremise { rule: String, index: usize },
    #[error("no rules given")]
    NoRules,
    #[error("invalid chain config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, RuleError>;

/// Where one formula argument comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSource {
    /// Strength of the i-th premise.
    Premise(usize),
    /// Strength of the atom bound to this variable (e.g. a deduction term).
    TermOf(AtomId),
    /// Strength of an instantiated template if it is a fact, else a constant.
    Lookup { template: AtomId, fallback: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    name: String,
    variables: VarDecls,
    premises: Vec<AtomId>,
    conclusion: AtomId,
    formula: Formula,
    inputs: Vec<InputSource>,
    forward: bool,
}

impl Rule {
    pub fn new(
        kb: &AtomSpace,
        name: &str,
        variables: VarDecls,
        premises: Vec<AtomId>,
        conclusion: AtomId,
        formula: Formula,
        inputs: Vec<InputSource>,
    ) -> Result<Self> {
        let bad = |message: String| RuleError::BadInputs {
            rule: name.to_string(),
            message,
        };
        if premises.is_empty() {
            return Err(bad("a rule needs at least one premise".into()));
        }
        let mut premise_vars = Vec::new();
        for &p in &premises {
            for v in pattern_matcher::variables_of(kb, p)? {
                if !variables.declares(v) {
                    return Err(MatchError::UndeclaredVariable(kb.name(v)?.unwrap_or("?").to_string()).into());
                }
                premise_vars.push(v);
            }
        }
        let covered = |v: AtomId| premise_vars.contains(&v);
        for v in pattern_matcher::variables_of(kb, conclusion)? {
            if !covered(v) {
                return Err(RuleError::ConclusionVariable {
                    rule: name.to_string(),
                    var: kb.name(v)?.unwrap_or("?").to_string(),
                });
            }
        }
        if inputs.len() != formula.arity() {
            return Err(bad(format!(
                "formula takes {} inputs but {} sources are given",
                formula.arity(),
                inputs.len()
            )));
        }
        for src in &inputs {
            match *src {
                InputSource::Premise(i) if i >= premises.len() => {
                    return Err(bad(format!("premise index {i} out of range")))
                }
                InputSource::TermOf(v) if !covered(v) => {
                    return Err(bad("term variable is not bound by the premises".into()))
                }
                InputSource::Lookup { template, fallback } => {
                    if !(0.0..=1.0).contains(&fallback) {
                        return Err(bad(format!("fallback strength {fallback} outside [0, 1]")));
                    }
                    if pattern_matcher::variables_of(kb, template)?.into_iter().any(|v| !covered(v)) {
                        return Err(bad("lookup template uses unbound variables".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(Rule {
            name: name.to_string(),
            variables,
            premises,
            conclusion,
            formula,
            inputs,
            forward: true,
        })
    }

    /// Excludes the rule from forward chaining. Used for rules whose
    /// premises are bare variables and would match every atom.
    pub fn backward_only(mut self) -> Self {
        self.forward = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &VarDecls {
        &self.variables
    }

    pub fn premises(&self) -> &[AtomId] {
        &self.premises
    }

    pub fn conclusion(&self) -> AtomId {
        self.conclusion
    }

    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn inputs(&self) -> &[InputSource] {
        &self.inputs
    }

    pub fn is_forward(&self) -> bool {
        self.forward
    }
}

/// Rule application tree from KB strengths to a conclusion.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    /// A strength read from the KB.
    Leaf { atom: AtomId, strength: Var },
    /// A fallback constant that stands in for a missing fact.
    Constant { strength: Var, value: f64 },
    Step(Box<StepTrace>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub rule: String,
    pub formula: Formula,
    pub binding: Binding,
    pub conclusion: AtomId,
    pub strength: Var,
    /// Formula arguments, in formula order.
    pub inputs: Vec<Trace>,
}

impl Trace {
    pub fn strength(&self) -> Var {
        match self {
            Trace::Leaf { strength, .. } | Trace::Constant { strength, .. } => *strength,
            Trace::Step(s) => s.strength,
        }
    }

    /// Recomputes the conclusion bottom-up in plain floats from the leaf
    /// values currently on the tape.
    pub fn evaluate(&self, tape: &Tape) -> std::result::Result<f64, FormulaError> {
        match self {
            Trace::Leaf { strength, .. } => Ok(tape.value(*strength)?),
            Trace::Constant { value, .. } => Ok(*value),
            Trace::Step(step) => {
                let xs = step
                    .inputs
                    .iter()
                    .map(|t| t.evaluate(tape))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                step.formula.evaluate(tape, &xs)
            }
        }
    }

    /// Distinct KB leaves, in first-visit order.
    pub fn leaves(&self) -> Vec<(AtomId, Var)> {
        fn walk(t: &Trace, out: &mut Vec<(AtomId, Var)>) {
            match t {
                Trace::Leaf { atom, strength } => {
                    if !out.iter().any(|(a, _)| a == atom) {
                        out.push((*atom, *strength));
                    }
                }
                Trace::Constant { .. } => {}
                Trace::Step(s) => s.inputs.iter().for_each(|c| walk(c, out)),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Number of rule applications.
    pub fn steps(&self) -> usize {
        match self {
            Trace::Step(s) => 1 + s.inputs.iter().map(Trace::steps).sum::<usize>(),
            _ => 0,
        }
    }

    /// Longest chain of rule applications from a leaf.
    pub fn height(&self) -> usize {
        match self {
            Trace::Step(s) => 1 + s.inputs.iter().map(Trace::height).max().unwrap_or(0),
            _ => 0,
        }
    }
}

/// A conclusion together with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub rule: String,
    pub binding: Binding,
    pub conclusion: AtomId,
    pub strength: Var,
    pub confidence: f64,
    pub trace: Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    max_steps: usize,
    max_depth: usize,
    seed: u64,
    dedup: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            max_steps: 100,
            max_depth: 3,
            seed: 0,
            dedup: true,
        }
    }
}

impl ChainConfig {
    pub fn new(max_steps: usize, max_depth: usize, seed: u64, dedup: bool) -> Result<Self> {
        if max_steps == 0 {
            return Err(RuleError::InvalidConfig("max_steps must be at least 1"));
        }
        if max_depth == 0 {
            return Err(RuleError::InvalidConfig("max_depth must be at least 1"));
        }
        Ok(ChainConfig {
            max_steps,
            max_depth,
            seed,
            dedup,
        })
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dedup(&self) -> bool {
        self.dedup
    }
}

/// Truth value an atom had as a fact, or `None` if it is not a fact.
type FactView<'a> = &'a dyn Fn(AtomId) -> Option<TruthValue>;

fn leaf(atom: AtomId, tv: TruthValue) -> (Trace, f64) {
    (
        Trace::Leaf {
            atom,
            strength: tv.strength,
        },
        tv.confidence,
    )
}

fn live_fact(kb: &AtomSpace, id: AtomId) -> Option<TruthValue> {
    if kb_has_fact(kb, id) {
        kb.get_tv(id).ok()
    } else {
        None
    }
}

fn kb_has_fact(kb: &AtomSpace, id: AtomId) -> bool {
    kb.has_explicit_tv(id).unwrap_or(false) && kb.is_ground(id).unwrap_or(false)
}

/// Collects the formula arguments for one application.
fn formula_inputs(
    kb: &AtomSpace,
    tape: &mut Tape,
    rule: &Rule,
    binding: &Binding,
    premises: &[Trace],
    facts: FactView<'_>,
) -> Result<Vec<Trace>> {
    let mut inputs = Vec::with_capacity(rule.inputs.len());
    for src in &rule.inputs {
        let t = match *src {
            InputSource::Premise(i) => premises[i].clone(),
            InputSource::TermOf(v) => {
                let atom = binding.get(v).ok_or_else(|| {
                    MatchError::UnboundVariable(kb.name(v).ok().flatten().unwrap_or("?").to_string())
                })?;
                let tv = match facts(atom) {
                    Some(tv) => tv,
                    None => kb.get_tv(atom)?,
                };
                leaf(atom, tv).0
            }
            InputSource::Lookup { template, fallback } => match resolve(kb, template, binding)? {
                Resolved::Present(id) if facts(id).is_some() => leaf(id, facts(id).unwrap_or(kb.default_tv())).0,
                _ => Trace::Constant {
                    strength: tape.constant(fallback)?,
                    value: fallback,
                },
            },
        };
        inputs.push(t);
    }
    Ok(inputs)
}

/// Evaluates the formula and stores the result as the conclusion's truth
/// value, overwriting any earlier one.
fn conclude(
    kb: &mut AtomSpace,
    tape: &mut Tape,
    rule: &Rule,
    binding: &Binding,
    conclusion: AtomId,
    inputs: Vec<Trace>,
    confidence: f64,
) -> Result<Derivation> {
    let vars: Vec<Var> = inputs.iter().map(Trace::strength).collect();
    let strength = rule.formula.apply(tape, &vars)?;
    let tv = TruthValue::new(tape, strength, confidence)?;
    kb.set_tv(conclusion, tv)?;
    Ok(Derivation {
        rule: rule.name.clone(),
        binding: binding.clone(),
        conclusion,
        strength,
        confidence,
        trace: Trace::Step(Box::new(StepTrace {
            rule: rule.name.clone(),
            formula: rule.formula,
            binding: binding.clone(),
            conclusion,
            strength,
            inputs,
        })),
    })
}

/// Applies `rule` with every premise read directly from the KB.
pub fn apply_rule(kb: &mut AtomSpace, tape: &mut Tape, rule: &Rule, binding: &Binding) -> Result<Derivation> {
    let mut premises = Vec::with_capacity(rule.premises.len());
    let mut confidence = 1.0_f64;
    for (index, &p) in rule.premises.iter().enumerate() {
        match resolve(kb, p, binding)? {
            Resolved::Present(id) => {
                let (t, c) = leaf(id, kb.get_tv(id)?);
                premises.push(t);
                confidence = confidence.min(c);
            }
            _ => {
                return Err(RuleError::UngroundedPremise {
                    rule: rule.name.clone(),
                    index,
                })
            }
        }
    }
    let conclusion = instantiate(kb, rule.conclusion, binding)?;
    let inputs = {
        let view = |id: AtomId| live_fact(kb, id);
        formula_inputs(kb, tape, rule, binding, &premises, &view)?
    };
    conclude(kb, tape, rule, binding, conclusion, inputs, confidence)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardResult {
    /// Atoms that did not exist before chaining, in derivation order.
    pub new_atoms: Vec<AtomId>,
    pub derivations: Vec<Derivation>,
}

/// Applies up to `max_steps` rules. Each step gathers every applicable
/// forward rule binding over the current facts, shuffles the queue with the
/// seeded RNG and applies the first. With `dedup`, a (rule, binding) pair
/// fires at most once.
pub fn forward_chain(kb: &mut AtomSpace, tape: &mut Tape, rules: &[Rule], config: &ChainConfig) -> Result<ForwardResult> {
    if rules.is_empty() {
        return Err(RuleError::NoRules);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut applied: HashSet<(usize, Binding)> = HashSet::new();
    let mut result = ForwardResult::default();
    let start_len = kb.len();
    for _ in 0..config.max_steps {
        let mut queue = Vec::new();
        for (ri, rule) in rules.iter().enumerate().filter(|(_, r)| r.forward) {
            let present = |id: AtomId| kb_has_fact(kb, id);
            let vars = rule.variables.vars();
            for b in match_clauses(kb, &rule.variables, &rule.premises, &present)? {
                let b = b.restricted_to(&vars);
                if !(config.dedup && applied.contains(&(ri, b.clone()))) {
                    queue.push((ri, b));
                }
            }
        }
        if queue.is_empty() {
            break;
        }
        queue.shuffle(&mut rng);
        let (ri, binding) = queue.swap_remove(0);
        let d = apply_rule(kb, tape, &rules[ri], &binding)?;
        if d.conclusion.index() >= start_len && !result.new_atoms.contains(&d.conclusion) {
            result.new_atoms.push(d.conclusion);
        }
        result.derivations.push(d);
        applied.insert((ri, binding));
    }
    Ok(result)
}

/// One way of proving a (pattern, binding) goal.
#[derive(Debug, Clone)]
struct Proof {
    binding: Binding,
    atom: AtomId,
    confidence: f64,
    trace: Trace,
}

const TARGET_OWNER: usize = usize::MAX;

/// The facts, with their truth values, at the moment chaining started.
///
/// Backward chaining reads premises from the snapshot, so a derivation that
/// overwrites a stored truth value never feeds back into the same search.
#[derive(Debug, Clone)]
pub struct FactSnapshot(Vec<Option<TruthValue>>);

impl FactSnapshot {
    pub fn of(kb: &AtomSpace) -> Self {
        FactSnapshot(kb.ids().map(|id| live_fact(kb, id)).collect())
    }

    /// Re-reads the truth values of the same set of facts.
    pub fn refresh(&mut self, kb: &AtomSpace) -> Result<()> {
        for (id, slot) in kb.ids().zip(self.0.iter_mut()) {
            if slot.is_some() {
                *slot = Some(kb.get_tv(id)?);
            }
        }
        Ok(())
    }

    pub fn get(&self, id: AtomId) -> Option<TruthValue> {
        self.0.get(id.index()).copied().flatten()
    }

    pub fn contains(&self, id: AtomId) -> bool {
        self.get(id).is_some()
    }
}

/// Result of proving a target.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardResult {
    /// Grounding of the target's variables.
    pub binding: Binding,
    pub conclusion: AtomId,
    pub strength: Var,
    pub confidence: f64,
    pub trace: Trace,
}

type MemoKey = (usize, AtomId, Binding, usize);

/// Exhaustive depth-bounded backward search with memoization on
/// (goal, binding, remaining depth). One chainer can prove several targets
/// against the same fact snapshot; proofs of shared subgoals share tape
/// nodes.
pub struct BackwardChainer<'r> {
    rules: &'r [Rule],
    facts: FactSnapshot,
    max_depth: usize,
    memo: HashMap<MemoKey, Rc<Vec<Proof>>>,
}

impl<'r> BackwardChainer<'r> {
    pub fn new(kb: &AtomSpace, rules: &'r [Rule], max_depth: usize) -> Self {
        Self::with_facts(FactSnapshot::of(kb), rules, max_depth)
    }

    pub fn with_facts(facts: FactSnapshot, rules: &'r [Rule], max_depth: usize) -> Self {
        BackwardChainer {
            rules,
            facts,
            max_depth,
            memo: HashMap::new(),
        }
    }

    /// Every derivation of an instance of `target` with at most `max_depth`
    /// nested rule applications. Stored facts come first, then rule
    /// derivations in rule order.
    pub fn prove(&mut self, kb: &mut AtomSpace, tape: &mut Tape, target: AtomId) -> Result<Vec<BackwardResult>> {
        let decls = VarDecls::default();
        let proofs = self.solve(kb, tape, TARGET_OWNER, &decls, target, &Binding::new(), self.max_depth)?;
        Ok(proofs
            .iter()
            .map(|p| BackwardResult {
                binding: p.binding.clone(),
                conclusion: p.atom,
                strength: p.trace.strength(),
                confidence: p.confidence,
                trace: p.trace.clone(),
            })
            .collect())
    }

    #[allow(clippy::too_many_arguments)]
    fn solve(
        &mut self,
        kb: &mut AtomSpace,
        tape: &mut Tape,
        owner: usize,
        decls: &VarDecls,
        pattern: AtomId,
        binding: &Binding,
        remaining: usize,
    ) -> Result<Rc<Vec<Proof>>> {
        let pattern_vars = pattern_matcher::variables_of(kb, pattern)?;
        let binding = binding.restricted_to(&pattern_vars);
        let key = (owner, pattern, binding.clone(), remaining);
        if let Some(hit) = self.memo.get(&key) {
            return Ok(Rc::clone(hit));
        }

        let mut proofs = Vec::new();
        {
            let facts = &self.facts;
            let present = |id: AtomId| facts.contains(id);
            for (b, atom) in match_clause(kb, decls, pattern, &binding, &present)? {
                let (trace, confidence) = leaf(atom, facts.get(atom).unwrap_or(kb.default_tv()));
                proofs.push(Proof {
                    binding: b.restricted_to(&pattern_vars),
                    atom,
                    confidence,
                    trace,
                });
            }
        }

        // a bare unbound variable goal would match every rule conclusion
        let open_variable = kb.is_variable(pattern) && binding.get(pattern).is_none();
        if remaining > 0 && !open_variable {
            let rules = self.rules;
            for (ri, rule) in rules.iter().enumerate() {
                let mut seed = Binding::new();
                if !pre_unify(kb, &rule.variables, rule.conclusion, pattern, &binding, &mut seed) {
                    continue;
                }
                let mut partial: Vec<(Binding, Vec<Trace>, f64)> = vec![(seed, Vec::new(), 1.0)];
                for &premise in &rule.premises {
                    let mut next = Vec::new();
                    for (b, traces, conf) in &partial {
                        let sub = self.solve(kb, tape, ri, &rule.variables, premise, b, remaining - 1)?;
                        for p in sub.iter() {
                            let mut merged = b.clone();
                            for (k, v) in p.binding.iter() {
                                merged.insert(k, v);
                            }
                            let mut t = traces.clone();
                            t.push(p.trace.clone());
                            next.push((merged, t, conf.min(p.confidence)));
                        }
                    }
                    partial = next;
                    if partial.is_empty() {
                        break;
                    }
                }
                for (b, traces, conf) in partial {
                    let conclusion = instantiate(kb, rule.conclusion, &b)?;
                    let Some(goal_binding) = unify(kb, decls, pattern, conclusion, &binding) else {
                        continue;
                    };
                    let facts = &self.facts;
                    let inputs = formula_inputs(kb, tape, rule, &b, &traces, &|id| facts.get(id))?;
                    let d = conclude(kb, tape, rule, &b, conclusion, inputs, conf)?;
                    proofs.push(Proof {
                        binding: goal_binding.restricted_to(&pattern_vars),
                        atom: conclusion,
                        confidence: d.confidence,
                        trace: d.trace,
                    });
                }
            }
        }

        let proofs = Rc::new(proofs);
        self.memo.insert(key, Rc::clone(&proofs));
        Ok(proofs)
    }
}

/// Cheap necessary condition for `template` (rule variables, bound in
/// `rule_binding`) to have an instance matching the goal `pattern` under
/// `goal_binding`. Open goal positions act as wildcards.
fn pre_unify(
    kb: &AtomSpace,
    rule_decls: &VarDecls,
    template: AtomId,
    pattern: AtomId,
    goal_binding: &Binding,
    rule_binding: &mut Binding,
) -> bool {
    if kb.is_variable(pattern) {
        return match goal_binding.get(pattern) {
            Some(g) => pattern_matcher::unify_into(kb, rule_decls, template, g, rule_binding),
            None => true,
        };
    }
    if kb.is_ground(pattern).unwrap_or(false) {
        return pattern_matcher::unify_into(kb, rule_decls, template, pattern, rule_binding);
    }
    if kb.is_variable(template) {
        return true;
    }
    if kb.is_ground(template).unwrap_or(false) {
        return unify(kb, &VarDecls::default(), pattern, template, goal_binding).is_some();
    }
    let (Ok(AtomRef::Link { ty: tt, outgoing: to }), Ok(AtomRef::Link { ty: pt, outgoing: po })) =
        (kb.get(template), kb.get(pattern))
    else {
        return false;
    };
    tt == pt
        && to.len() == po.len()
        && to
            .iter()
            .zip(po)
            .all(|(&t, &p)| pre_unify(kb, rule_decls, t, p, goal_binding, rule_binding))
}

/// Convenience wrapper: a fresh [`BackwardChainer`] for one target.
pub fn backward_chain(
    kb: &mut AtomSpace,
    tape: &mut Tape,
    rules: &[Rule],
    target: AtomId,
    config: &ChainConfig,
) -> Result<Vec<BackwardResult>> {
    if rules.is_empty() {
        return Err(RuleError::NoRules);
    }
    BackwardChainer::new(kb, rules, config.max_depth).prove(kb, tape, target)
}
