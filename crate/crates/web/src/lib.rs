//! Browser bindings. Each export takes text in and returns JSON text; the
//! page in `www/` does the drawing.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use dpln::experiments::chain::{self, ChainMode, ChainRequest};
use dpln::experiments::config::{FormulaConfig, FruitConfig};
use dpln::experiments::formula::{self, FormulaReport};
use dpln::autodiff::Plain;
use dpln::experiments::{fruit, ExperimentConfig, ExperimentError};
use dpln::numfmt::round_sig9;
use dpln::pln_rules::trainable_mp_strength;

fn message(e: ExperimentError) -> String {
    e.to_string()
}

/// Runs fruit-colors from TOML config text; returns report.json.
#[wasm_bindgen]
pub fn fruit_colors(config: &str) -> Result<String, String> {
    let cfg = ExperimentConfig::parse(config).map_err(|e| message(e.into()))?;
    let cfg = FruitConfig::from_config(&cfg).map_err(|e| message(e.into()))?;
    let (_, out) = fruit::run(&cfg).map_err(message)?;
    Ok(out.report_json)
}

#[derive(Serialize)]
struct Surface {
    n: usize,
    axis: Vec<f64>,
    /// Row-major over (p_a, p_b_given_a).
    exact: Vec<f64>,
    learned: Vec<f64>,
}

#[derive(Serialize)]
struct FormulaOut {
    report: FormulaReport,
    surface: Surface,
}

/// Fits the trainable formula and samples both surfaces on the
/// evaluation grid.
#[wasm_bindgen]
pub fn learn_formula(config: &str) -> Result<String, String> {
    let cfg = ExperimentConfig::parse(config).map_err(|e| message(e.into()))?;
    let cfg = FormulaConfig::from_config(&cfg).map_err(|e| message(e.into()))?;
    let run = formula::fit(&cfg).map_err(message)?;
    let n = cfg.eval_grid_size;
    let axis = formula::grid(n);
    let (mut exact, mut learned) = (Vec::new(), Vec::new());
    for &a in &axis {
        for &b in &axis {
            exact.push(round_sig9(formula::exact_mp(a, b, cfg.p_b_given_not_a).map_err(message)?));
            let v = trainable_mp_strength(&mut Plain, a, b, &run.weights).map_err(|e| e.to_string())?;
            learned.push(round_sig9(v));
        }
    }
    let out = FormulaOut {
        report: run.report,
        surface: Surface { n, axis, exact, learned },
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Chains over KB text. An empty `target` means forward chaining for
/// `steps` rule applications.
#[wasm_bindgen]
pub fn chain(kb: &str, target: &str, steps: usize, max_depth: usize, p_b_given_not_a: f64) -> Result<String, String> {
    let mode = if target.trim().is_empty() {
        ChainMode::Forward { steps }
    } else {
        ChainMode::Backward { target: target.to_string() }
    };
    let report = chain::run(kb, &ChainRequest {
            mode,
            max_depth,
            seed: 0,
            p_b_given_not_a,
        },).map_err(message)?;
    Ok(report.to_json())
}
