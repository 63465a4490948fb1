//! Chain: load a KB file and run forward or backward chaining on it.

use serde::Serialize;

use super::report::to_json;
use super::{ExperimentError, Result};
use crate::atom_store::{format_atom_with_stv, parse_kb, parse_single, AtomError, AtomSpace};
use crate::autodiff::{Algebra, Tape};
use crate::numfmt::round_sig9;
use crate::pln_rules::make_rule_set;
use crate::rule_engine::{backward_chain, forward_chain, ChainConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum ChainMode {
    Backward { target: String },
    Forward { steps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRequest {
    pub mode: ChainMode,
    pub max_depth: usize,
    pub seed: u64,
    /// Modus ponens P(B|not A) when the KB has no matching implication.
    pub p_b_given_not_a: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Conclusion {
    pub atom: String,
    pub strength: f64,
    pub confidence: f64,
    pub rule_steps: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChainReport {
    pub experiment: &'static str,
    pub mode: &'static str,
    pub conclusions: Vec<Conclusion>,
}

impl ChainReport {
    pub fn to_json(&self) -> String {
        to_json(self)
    }

    /// One KB-format line per conclusion.
    pub fn text(&self) -> String {
        self.conclusions.iter().map(|c| format!("{}\n", c.atom)).collect()
    }
}

fn input_error(e: AtomError) -> ExperimentError {
    match e {
        AtomError::Parse { .. }
        | AtomError::UnknownType(_)
        | AtomError::KindMismatch { .. }
        | AtomError::StrengthOutOfRange(_)
        | AtomError::ConfidenceOutOfRange(_) => ExperimentError::Input(e.to_string()),
        other => ExperimentError::Internal(other.to_string()),
    }
}

pub fn run(kb_text: &str, request: &ChainRequest) -> Result<ChainReport> {
    let mut tape = Tape::new();
    let mut kb = AtomSpace::new(&mut tape);
    parse_kb(kb_text, &mut kb, &mut tape).map_err(input_error)?;
    if request.max_depth == 0 {
        return Err(ExperimentError::Input("max depth must be at least 1".into()));
    }
    let p = request.p_b_given_not_a;
    if !(0.0..=1.0).contains(&p) {
        return Err(ExperimentError::Input(format!("p_b_given_not_a must be in [0,1], got {p}")));
    }
    let rules = make_rule_set(&mut kb, &mut tape, p)?.standard();

    let mut conclusions = Vec::new();
    let mut push = |kb: &AtomSpace, atom, strength, confidence, rule_steps| -> Result<()> {
        conclusions.push(Conclusion {
            atom: format_atom_with_stv(kb, atom, strength, confidence)?,
            strength: round_sig9(strength),
            confidence: round_sig9(confidence),
            rule_steps,
        });
        Ok(())
    };

    let mode = match &request.mode {
        ChainMode::Backward { target } => {
            let target = parse_single(target, &mut kb, &mut tape).map_err(input_error)?;
            let cfg = ChainConfig::new(1, request.max_depth, request.seed, true)?;
            for r in backward_chain(&mut kb, &mut tape, &rules, target, &cfg)? {
                let s = tape.value(r.strength)?;
                push(&kb, r.conclusion, s, r.confidence, r.trace.steps())?;
            }
            "backward"
        }
        ChainMode::Forward { steps } => {
            if *steps == 0 {
                return Err(ExperimentError::Input("--steps must be at least 1".into()));
            }
            let cfg = ChainConfig::new(*steps, request.max_depth, request.seed, true)?;
            let res = forward_chain(&mut kb, &mut tape, &rules, &cfg)?;
            for a in res.new_atoms {
                let tv = kb.get_tv(a)?;
                let s = tape.value(tv.strength)?;
                let steps = res
                    .derivations
                    .iter()
                    .rev()
                    .find(|d| d.conclusion == a)
                    .map_or(0, |d| d.trace.steps());
                push(&kb, a, s, tv.confidence, steps)?;
            }
            "forward"
        }
    };
    Ok(ChainReport {
        experiment: "chain",
        mode,
        conclusions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pln_rules::DEFAULT_P_B_GIVEN_NOT_A;

    const SPARROW: &str = r#"
        (InheritanceLink (ConceptNode "sparrow") (ConceptNode "bird"))
        (InheritanceLink (ConceptNode "bird") (ConceptNode "animal"))
    "#;

    fn req(mode: ChainMode) -> ChainRequest {
        ChainRequest {
            mode,
            max_depth: 3,
            seed: 0,
            p_b_given_not_a: DEFAULT_P_B_GIVEN_NOT_A,
        }
    }

    #[test]
    fn forward_sparrow() {
        let r = run(SPARROW, &req(ChainMode::Forward { steps: 10 })).unwrap();
        assert_eq!(
            r.text(),
            "(InheritanceLink (stv 1.0 0.0) (ConceptNode \"sparrow\") (ConceptNode \"animal\"))\n"
        );
    }

    #[test]
    fn backward_apple() {
        let kb = r#"
            (EvaluationLink (stv 1.0 1.0) (PredicateNode "apple") (ConceptNode "apple-001"))
            (ImplicationLink (stv 0.6 1.0) (PredicateNode "apple") (PredicateNode "green"))
        "#;
        let target = r#"(EvaluationLink (PredicateNode "green") (ConceptNode "apple-001"))"#.to_string();
        let r = run(kb, &req(ChainMode::Backward { target })).unwrap();
        assert_eq!(r.conclusions.len(), 1);
        assert_eq!(r.conclusions[0].strength, 0.6);
    }

    #[test]
    fn underivable_and_malformed() {
        let target = r#"(InheritanceLink (ConceptNode "animal") (ConceptNode "sparrow"))"#.to_string();
        let r = run(SPARROW, &req(ChainMode::Backward { target })).unwrap();
        assert!(r.conclusions.is_empty());
        let err = run("(InheritanceLink\n  (ConceptNode \"a\"", &req(ChainMode::Forward { steps: 1 })).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("line"), "{err}");
    }
}
