//! Fruit colors: learn Impl(fruit -> color) strengths from sampled labels.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::FruitConfig;
use super::report::{loss_csv, to_json, RunOutput, TrainSection};
use super::{ExperimentError, Result};
use crate::atom_store::{AtomSpace, AtomType, TruthValue};
use crate::autodiff::Tape;
use crate::numfmt::round_sig9;
use crate::pln_rules::{make_rule_set, DEFAULT_P_B_GIVEN_NOT_A};
use crate::trainer::{empirical_frequency, train, LabeledExample, Learnable, LearnableStrength, TrainConfig};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PairReport {
    pub fruit: String,
    pub color: String,
    pub true_probability: f64,
    pub empirical_frequency: f64,
    pub learned: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FruitReport {
    pub experiment: &'static str,
    pub seed: u64,
    pub lr: f64,
    pub steps: usize,
    pub n_samples: usize,
    pub pairs: Vec<PairReport>,
    pub max_abs_diff: f64,
    pub train: TrainSection,
}

/// `apple-001` style names; at least three digits.
pub fn instance_name(fruit: &str, index: usize, n: usize) -> String {
    let width = n.to_string().len().max(3);
    format!("{fruit}-{:0width$}", index + 1)
}

/// Color index per instance, fruits in order then instances in order.
pub fn sample_colors(config: &FruitConfig) -> Result<Vec<Vec<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.training.seed);
    config
        .probabilities
        .iter()
        .map(|ps| {
            let dist = WeightedIndex::new(ps).map_err(|e| ExperimentError::Internal(e.to_string()))?;
            Ok((0..config.n_samples).map(|_| dist.sample(&mut rng)).collect())
        })
        .collect()
}

pub fn run(config: &FruitConfig) -> Result<(FruitReport, RunOutput)> {
    let mut tape = Tape::new();
    let mut kb = AtomSpace::new(&mut tape);
    let samples = sample_colors(config)?;
    let certain = TruthValue::constant(&mut tape, 1.0, 1.0)?;

    let preds = |kb: &mut AtomSpace, names: &[String]| {
        names
            .iter()
            .map(|n| kb.intern_node(AtomType::PREDICATE_NODE, n))
            .collect::<std::result::Result<Vec<_>, _>>()
    };
    let fruit_p = preds(&mut kb, &config.fruits)?;
    let color_p = preds(&mut kb, &config.colors)?;

    let mut learnables = Vec::new();
    for &f in &fruit_p {
        for &c in &color_p {
            let atom = kb.intern_link(AtomType::IMPLICATION_LINK, &[f, c])?;
            learnables.push(Learnable {
                atom,
                strength: LearnableStrength::new(&mut tape, 0.5)?,
                confidence: 1.0,
            });
        }
    }

    // per pair, so each pair's examples form one loss group
    let mut by_pair: Vec<Vec<LabeledExample>> = vec![Vec::new(); learnables.len()];
    for (fi, &f) in fruit_p.iter().enumerate() {
        for (i, &color) in samples[fi].iter().enumerate() {
            let name = instance_name(&config.fruits[fi], i, config.n_samples);
            let inst = kb.intern_node(AtomType::CONCEPT_NODE, &name)?;
            let fact = kb.intern_link(AtomType::EVALUATION_LINK, &[f, inst])?;
            kb.set_tv(fact, certain)?;
            for (ci, &c) in color_p.iter().enumerate() {
                let target = kb.intern_link(AtomType::EVALUATION_LINK, &[c, inst])?;
                let k = fi * color_p.len() + ci;
                by_pair[k].push(LabeledExample {
                    target,
                    label: if color == ci { 1.0 } else { 0.0 },
                    group: format!("{}->{}", config.fruits[fi], config.colors[ci]),
                });
            }
        }
    }

    let rules = make_rule_set(&mut kb, &mut tape, DEFAULT_P_B_GIVEN_NOT_A)?.standard();
    let t = &config.training;
    let train_cfg = TrainConfig::new(t.lr, t.steps, t.seed, t.log_every, 1)?;
    let dataset: Vec<LabeledExample> = by_pair.iter().flatten().cloned().collect();
    let trained = train(&mut kb, &mut tape, &rules, &dataset, &learnables, &[], &train_cfg)?;

    let mut pairs = Vec::new();
    for (fi, fruit) in config.fruits.iter().enumerate() {
        for (ci, color) in config.colors.iter().enumerate() {
            let k = fi * config.colors.len() + ci;
            let learned = learnables[k].strength.value(&tape)?;
            let freq = empirical_frequency(&by_pair[k])?;
            pairs.push(PairReport {
                fruit: fruit.clone(),
                color: color.clone(),
                true_probability: round_sig9(config.probabilities[fi][ci]),
                empirical_frequency: round_sig9(freq),
                learned: round_sig9(learned),
                abs_diff: round_sig9((learned - freq).abs()),
            });
        }
    }
    let max_abs_diff = pairs.iter().map(|p| p.abs_diff).fold(0.0, f64::max);
    let report = FruitReport {
        experiment: "fruit-colors",
        seed: t.seed,
        lr: round_sig9(t.lr),
        steps: t.steps,
        n_samples: config.n_samples,
        pairs,
        max_abs_diff,
        train: TrainSection::new(&trained),
    };
    let mut summary = String::new();
    for p in &report.pairs {
        summary.push_str(&format!(
            "{} -> {}: learned {} empirical {} |diff| {}\n",
            p.fruit, p.color, p.learned, p.empirical_frequency, p.abs_diff
        ));
    }
    let out = RunOutput {
        report_json: to_json(&report),
        loss_csv: loss_csv(&trained.loss_curve),
        summary,
    };
    Ok((report, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::Training;

    fn cfg(ps: Vec<f64>, n: usize, steps: usize) -> FruitConfig {
        FruitConfig {
            fruits: vec!["apple".into()],
            colors: vec!["green".into(), "red".into()],
            probabilities: vec![ps],
            n_samples: n,
            training: Training {
                lr: 0.1,
                steps,
                seed: 7,
                log_every: 1,
            },
        }
    }

    #[test]
    fn names_are_padded() {
        assert_eq!(instance_name("apple", 0, 500), "apple-001");
        assert_eq!(instance_name("apple", 999, 1000), "apple-1000");
    }

    #[test]
    fn single_fruit_matches_frequency() {
        let (rep, out) = run(&cfg(vec![0.7, 0.3], 500, 2000)).unwrap();
        assert_eq!(rep.pairs.len(), 2);
        for p in &rep.pairs {
            assert!(p.abs_diff <= 0.01, "{p:?}");
        }
        assert!(out.loss_csv.starts_with("step,loss\n0,"));
        assert_eq!(out.loss_csv.lines().count(), 2001);
    }

    #[test]
    fn certain_color_saturates() {
        let (rep, _) = run(&cfg(vec![1.0, 0.0], 50, 2000)).unwrap();
        assert!(rep.pairs[0].learned >= 0.99);
        assert!(rep.pairs[1].learned <= 0.01);
    }
}
