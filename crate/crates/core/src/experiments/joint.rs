//! Joint learning of formula weights and unknown truth values.
//!
//! The dataset mixes two kinds of examples. In the first, implication
//! strengths are known and instance strengths are learned; in the second,
//! instance strengths are known and implication strengths are learned.
//! Labels are exact modus ponens outputs for the generating values.

use std::collections::BTreeMap;

use serde::Serialize;

use super::config::{JointConfig, JointMode};
use super::formula::exact_mp;
use super::report::{loss_csv, to_json, RunOutput, TrainSection};
use super::{ExperimentError, Result};
use crate::atom_store::{format_atom, AtomId, AtomSpace, AtomType, TruthValue};
use crate::autodiff::{Algebra, Tape};
use crate::numfmt::round_sig9;
use crate::pln_rules::make_rule_set;
use crate::rule_engine::BackwardChainer;
use crate::trainer::{train, LabeledExample, Learnable, LearnableStrength, TrainConfig};

/// Generating instance strengths of the first kind.
pub fn hidden_instance_strengths() -> Vec<f64> {
    (0..8).map(|i| 0.05 + 0.9 * i as f64 / 7.0).collect()
}
/// Known implication strengths of the first kind.
pub const KNOWN_IMPLICATIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Generating implication strengths of the second kind.
pub const HIDDEN_IMPLICATIONS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
/// Implication strengths used only for held-out targets of the first kind.
pub const HELD_OUT_IMPLICATIONS: [f64; 4] = [0.125, 0.375, 0.625, 0.875];

/// Known instance strengths of the second kind.
pub fn known_instance_strengths() -> Vec<f64> {
    (0..=10).map(|j| j as f64 / 10.0).collect()
}

/// Instance strengths used only for held-out targets of the second kind.
pub fn held_out_instance_strengths() -> Vec<f64> {
    (0..10).map(|j| 0.05 + j as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StrengthReport {
    pub atom: String,
    pub generating: f64,
    pub learned: f64,
    pub abs_deviation: f64,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct HeldOut {
    pub count: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct JointReport {
    pub experiment: &'static str,
    pub mode: &'static str,
    pub lr: f64,
    pub steps: usize,
    pub p_b_given_not_a: f64,
    pub train_examples: usize,
    pub held_out: HeldOut,
    pub strengths: Vec<StrengthReport>,
    pub max_strength_deviation: f64,
    pub weights: BTreeMap<String, f64>,
    pub train: TrainSection,
}

struct Unknown {
    atom: AtomId,
    generating: f64,
}

struct Builder {
    tape: Tape,
    kb: AtomSpace,
}

impl Builder {
    fn pred(&mut self, name: &str) -> Result<AtomId> {
        Ok(self.kb.intern_node(AtomType::PREDICATE_NODE, name)?)
    }
    fn concept(&mut self, name: &str) -> Result<AtomId> {
        Ok(self.kb.intern_node(AtomType::CONCEPT_NODE, name)?)
    }
    fn link(&mut self, ty: AtomType, out: &[AtomId]) -> Result<AtomId> {
        Ok(self.kb.intern_link(ty, out)?)
    }
    fn fact(&mut self, atom: AtomId, s: f64) -> Result<()> {
        let tv = TruthValue::constant(&mut self.tape, s, 1.0)?;
        Ok(self.kb.set_tv(atom, tv)?)
    }
}

pub fn run(config: &JointConfig) -> Result<(JointReport, RunOutput)> {
    let mut tape = Tape::new();
    let kb = AtomSpace::new(&mut tape);
    let mut w = Builder { tape, kb };
    let p_not = config.p_b_given_not_a;
    let mut unknowns = Vec::new();
    let mut dataset = Vec::new();
    let mut held_out: Vec<(AtomId, f64)> = Vec::new();

    // first kind: known implications, hidden instance strengths
    let a1 = w.pred("s1-a")?;
    let hidden_a = hidden_instance_strengths();
    let mut xs = Vec::new();
    for (i, &a) in hidden_a.iter().enumerate() {
        let x = w.concept(&format!("s1-x{i}"))?;
        let ev = w.link(AtomType::EVALUATION_LINK, &[a1, x])?;
        unknowns.push(Unknown { atom: ev, generating: a });
        xs.push((x, a));
    }
    for (k, &b) in KNOWN_IMPLICATIONS.iter().enumerate() {
        let name = format!("s1-c{k}");
        let c = w.pred(&name)?;
        let imp = w.link(AtomType::IMPLICATION_LINK, &[a1, c])?;
        w.fact(imp, b)?;
        for &(x, a) in &xs {
            let target = w.link(AtomType::EVALUATION_LINK, &[c, x])?;
            dataset.push(LabeledExample {
                target,
                label: exact_mp(a, b, p_not)?,
                group: name.clone(),
            });
        }
    }
    for (k, &b) in HELD_OUT_IMPLICATIONS.iter().enumerate() {
        let c = w.pred(&format!("s1-e{k}"))?;
        let imp = w.link(AtomType::IMPLICATION_LINK, &[a1, c])?;
        w.fact(imp, b)?;
        for &(x, a) in &xs {
            let target = w.link(AtomType::EVALUATION_LINK, &[c, x])?;
            held_out.push((target, exact_mp(a, b, p_not)?));
        }
    }

    // second kind: known instance strengths, hidden implications
    let a2 = w.pred("s2-a")?;
    let instances = |w: &mut Builder, prefix: &str, values: &[f64]| -> Result<Vec<(AtomId, f64)>> {
        let mut out = Vec::new();
        for (j, &a) in values.iter().enumerate() {
            let y = w.concept(&format!("{prefix}{j}"))?;
            let ev = w.link(AtomType::EVALUATION_LINK, &[a2, y])?;
            w.fact(ev, a)?;
            out.push((y, a));
        }
        Ok(out)
    };
    let ys = instances(&mut w, "s2-y", &known_instance_strengths())?;
    let hs = instances(&mut w, "s2-h", &held_out_instance_strengths())?;
    for (k, &b) in HIDDEN_IMPLICATIONS.iter().enumerate() {
        let name = format!("s2-d{k}");
        let d = w.pred(&name)?;
        let imp = w.link(AtomType::IMPLICATION_LINK, &[a2, d])?;
        unknowns.push(Unknown { atom: imp, generating: b });
        for &(y, a) in &ys {
            let target = w.link(AtomType::EVALUATION_LINK, &[d, y])?;
            dataset.push(LabeledExample {
                target,
                label: exact_mp(a, b, p_not)?,
                group: name.clone(),
            });
        }
        for &(h, a) in &hs {
            let target = w.link(AtomType::EVALUATION_LINK, &[d, h])?;
            held_out.push((target, exact_mp(a, b, p_not)?));
        }
    }

    let Builder { mut tape, mut kb } = w;
    let rule_set = make_rule_set(&mut kb, &mut tape, p_not)?;
    let weights = rule_set.weights;
    let names = ["w0", "w1", "w2", "w3"];

    let mut learnables = Vec::new();
    for u in &unknowns {
        if config.mode == JointMode::FreezeStrengths {
            let tv = TruthValue::constant(&mut tape, u.generating, 1.0)?;
            kb.set_tv(u.atom, tv)?;
        } else {
            learnables.push(Learnable {
                atom: u.atom,
                strength: LearnableStrength::new(&mut tape, 0.5)?,
                confidence: 1.0,
            });
        }
    }
    let (rules, params) = match config.mode {
        JointMode::FreezeFormula => (vec![rule_set.modus_ponens.clone()], Vec::new()),
        _ => (
            vec![rule_set.trainable_modus_ponens.clone()],
            names.iter().map(|n| n.to_string()).zip(weights.vars()).collect::<Vec<_>>(),
        ),
    };

    let t = &config.training;
    let cfg = TrainConfig::new(t.lr, t.steps, t.seed, t.log_every, 1)?;
    let trained = train(&mut kb, &mut tape, &rules, &dataset, &learnables, &params, &cfg)?;

    let mut chainer = BackwardChainer::new(&kb, &rules, 1);
    let (mut max, mut sum) = (0.0_f64, 0.0);
    for &(target, truth) in &held_out {
        let proofs = chainer.prove(&mut kb, &mut tape, target)?;
        let Some(p) = proofs.first() else {
            return Err(ExperimentError::Internal(format!(
                "held-out target {} is not derivable",
                format_atom(&kb, target)?
            )));
        };
        let e = (tape.value(p.strength)? - truth).abs();
        max = max.max(e);
        sum += e;
    }

    let mut strengths = Vec::new();
    for u in &unknowns {
        let learned = tape.value(kb.get_tv(u.atom)?.strength)?;
        strengths.push(StrengthReport {
            atom: format_atom(&kb, u.atom)?,
            generating: round_sig9(u.generating),
            learned: round_sig9(learned),
            abs_deviation: round_sig9((learned - u.generating).abs()),
        });
    }
    let max_strength_deviation = strengths.iter().map(|s| s.abs_deviation).fold(0.0, f64::max);
    let weights_out = if config.mode == JointMode::FreezeFormula {
        BTreeMap::new()
    } else {
        names.iter().map(|n| n.to_string()).zip(weights.values(&tape)?.map(round_sig9)).collect()
    };
    let report = JointReport {
        experiment: "joint",
        mode: config.mode.name(),
        lr: round_sig9(t.lr),
        steps: t.steps,
        p_b_given_not_a: round_sig9(p_not),
        train_examples: dataset.len(),
        held_out: HeldOut {
            count: held_out.len(),
            max_abs_error: round_sig9(max),
            mean_abs_error: round_sig9(sum / held_out.len() as f64),
        },
        strengths,
        max_strength_deviation,
        weights: weights_out,
        train: TrainSection::new(&trained),
    };
    let summary = format!(
        "mode {}: held-out mean abs error {} max {}; max learned-strength deviation {}\n",
        report.mode, report.held_out.mean_abs_error, report.held_out.max_abs_error, report.max_strength_deviation
    );
    let out = RunOutput {
        report_json: to_json(&report),
        loss_csv: loss_csv(&trained.loss_curve),
        summary,
    };
    Ok((report, out))
}
