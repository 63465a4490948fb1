//! JSON and CSV rendering shared by the experiment runners.

use serde::Serialize;

use crate::numfmt::{format_real, round_sig9};
use crate::trainer::TrainReport;

/// What a runner produced; the CLI decides where it goes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report_json: String,
    pub loss_csv: String,
    /// Short human-readable result for stdout.
    pub summary: String,
}

/// Trainer output as it appears inside a report.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TrainSection {
    pub loss_curve: Vec<f64>,
    pub params: std::collections::BTreeMap<String, f64>,
    pub learned_strengths: std::collections::BTreeMap<String, f64>,
}

impl TrainSection {
    pub fn new(r: &TrainReport) -> Self {
        TrainSection {
            loss_curve: r.loss_curve.iter().map(|&(_, l)| round_sig9(l)).collect(),
            params: r.params.iter().map(|(k, &v)| (k.clone(), round_sig9(v))).collect(),
            learned_strengths: r.learned_strengths.iter().map(|(k, &v)| (k.clone(), round_sig9(v))).collect(),
        }
    }

    pub fn empty() -> Self {
        TrainSection {
            loss_curve: Vec::new(),
            params: Default::default(),
            learned_strengths: Default::default(),
        }
    }
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports contain only finite numbers");
    s.push('\n');
    s
}

pub fn loss_csv(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("step,loss\n");
    for &(step, loss) in curve {
        out.push_str(&format!("{step},{}\n", format_real(loss)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        assert_eq!(loss_csv(&[(0, 0.5), (1, 0.123456789123)]), "step,loss\n0,0.5\n1,0.123456789\n");
    }
}
