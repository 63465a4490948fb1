//! Learn-formula: fit the trainable modus ponens weights to the exact rule.

use std::collections::BTreeMap;

use serde::Serialize;

use super::config::FormulaConfig;
use super::report::{loss_csv, to_json, RunOutput, TrainSection};
use super::Result;
use crate::atom_store::{AtomSpace, AtomType, TruthValue};
use crate::autodiff::{Plain, Tape};
use crate::numfmt::round_sig9;
use crate::pln_rules::{make_rule_set, modus_ponens_strength, Formula, FormulaWeights};
use crate::trainer::{train, LabeledExample, TrainConfig};

/// `n` evenly spaced points covering [0, 1]; the midpoint when `n == 1`.
pub fn grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn exact_mp(p_a: f64, p_b_given_a: f64, p_b_given_not_a: f64) -> Result<f64> {
    Ok(modus_ponens_strength(&mut Plain, p_a, p_b_given_a, p_b_given_not_a)?)
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct FitError {
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    /// (P(A), P(B|A)) where the error peaks.
    pub worst_point: [f64; 2],
}

/// Error of the fitted formula against the exact rule on an n×n grid.
pub fn fit_error(tape: &Tape, weights: FormulaWeights, n: usize, p_b_given_not_a: f64) -> Result<FitError> {
    let formula = Formula::TrainableModusPonens(weights);
    let (mut max, mut sum, mut worst, mut count) = (0.0_f64, 0.0, [0.0; 2], 0usize);
    for &a in &grid(n) {
        for &b in &grid(n) {
            let e = (formula.evaluate(tape, &[a, b])? - exact_mp(a, b, p_b_given_not_a)?).abs();
            if e > max {
                max = e;
                worst = [a, b];
            }
            sum += e;
            count += 1;
        }
    }
    Ok(FitError {
        max_abs_error: max,
        mean_abs_error: sum / count as f64,
        worst_point: worst,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FormulaReport {
    pub experiment: &'static str,
    pub lr: f64,
    pub steps: usize,
    pub grid_size: usize,
    pub eval_grid_size: usize,
    pub p_b_given_not_a: f64,
    pub weights: BTreeMap<String, f64>,
    pub train_error: FitError,
    pub eval_error: FitError,
    pub train: TrainSection,
}

/// Fitted weights plus the report.
pub struct FormulaRun {
    pub report: FormulaReport,
    pub weights: [f64; 4],
    pub loss_curve: Vec<(usize, f64)>,
}

pub fn fit(config: &FormulaConfig) -> Result<FormulaRun> {
    let mut tape = Tape::new();
    let mut kb = AtomSpace::new(&mut tape);
    let p_not = config.p_b_given_not_a;
    let mut dataset = Vec::new();
    let points = grid(config.grid_size);
    for (i, &a) in points.iter().enumerate() {
        for (j, &b) in points.iter().enumerate() {
            let pa = kb.intern_node(AtomType::PREDICATE_NODE, &format!("a-{i}-{j}"))?;
            let pb = kb.intern_node(AtomType::PREDICATE_NODE, &format!("b-{i}-{j}"))?;
            let x = kb.intern_node(AtomType::CONCEPT_NODE, &format!("x-{i}-{j}"))?;
            let eval_a = kb.intern_link(AtomType::EVALUATION_LINK, &[pa, x])?;
            let tv = TruthValue::constant(&mut tape, a, 1.0)?;
            kb.set_tv(eval_a, tv)?;
            let imp = kb.intern_link(AtomType::IMPLICATION_LINK, &[pa, pb])?;
            let tv = TruthValue::constant(&mut tape, b, 1.0)?;
            kb.set_tv(imp, tv)?;
            let target = kb.intern_link(AtomType::EVALUATION_LINK, &[pb, x])?;
            dataset.push(LabeledExample {
                target,
                label: exact_mp(a, b, p_not)?,
                group: "grid".into(),
            });
        }
    }

    let rule_set = make_rule_set(&mut kb, &mut tape, p_not)?;
    let weights = rule_set.weights;
    let rules = vec![rule_set.trainable_modus_ponens.clone()];
    let names = ["w0", "w1", "w2", "w3"];
    let params: Vec<(String, _)> = names.iter().map(|n| n.to_string()).zip(weights.vars()).collect();
    let t = &config.training;

    let trained = if t.steps == 0 {
        None
    } else {
        let cfg = TrainConfig::new(t.lr, t.steps, t.seed, t.log_every, 1)?;
        Some(train(&mut kb, &mut tape, &rules, &dataset, &[], &params, &cfg)?)
    };

    let values = weights.values(&tape)?;
    let round = |e: FitError| FitError {
        max_abs_error: round_sig9(e.max_abs_error),
        mean_abs_error: round_sig9(e.mean_abs_error),
        worst_point: e.worst_point.map(round_sig9),
    };
    let report = FormulaReport {
        experiment: "learn-formula",
        lr: round_sig9(t.lr),
        steps: t.steps,
        grid_size: config.grid_size,
        eval_grid_size: config.eval_grid_size,
        p_b_given_not_a: round_sig9(p_not),
        weights: names.iter().map(|n| n.to_string()).zip(values.map(round_sig9)).collect(),
        train_error: round(fit_error(&tape, weights, config.grid_size, p_not)?),
        eval_error: round(fit_error(&tape, weights, config.eval_grid_size, p_not)?),
        train: trained.as_ref().map(TrainSection::new).unwrap_or_else(TrainSection::empty),
    };
    Ok(FormulaRun {
        report,
        weights: values,
        loss_curve: trained.map(|r| r.loss_curve).unwrap_or_default(),
    })
}

pub fn run(config: &FormulaConfig) -> Result<(FormulaReport, RunOutput)> {
    let run = fit(config)?;
    let e = &run.report.eval_error;
    let summary = format!(
        "weights w0..w3 = {:?}\nheld-out {}x{}: max abs error {} mean abs error {}\n",
        run.report.weights.values().collect::<Vec<_>>(),
        config.eval_grid_size,
        config.eval_grid_size,
        e.max_abs_error,
        e.mean_abs_error
    );
    let out = RunOutput {
        report_json: to_json(&run.report),
        loss_csv: loss_csv(&run.loss_curve),
        summary,
    };
    Ok((run.report, out))
}
