//! Experiment config files and their per-experiment validation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn field<T>(field: &'static str, message: impl Into<String>) -> Result<T> {
    Err(ConfigError::Field {
        field,
        message: message.into(),
    })
}

/// Flat key/value config shared by every experiment. Keys an experiment
/// does not use are ignored by it; unknown keys are rejected at parse time.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub kb_path: Option<PathBuf>,
    pub fruits: Option<Vec<String>>,
    pub colors: Option<Vec<String>>,
    pub true_probabilities: Option<BTreeMap<String, BTreeMap<String, f64>>>,
    pub n_samples: Option<usize>,
    pub lr: Option<f64>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub log_every: Option<usize>,
    pub p_b_given_not_a: Option<f64>,
    pub grid_size: Option<usize>,
    pub eval_grid_size: Option<usize>,
    pub mode: Option<String>,
    pub max_depth: Option<usize>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub lr: Option<f64>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

pub const DEFAULT_LR: f64 = 0.1;
pub const DEFAULT_STEPS: usize = 2000;

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().trim_end().to_string();
            ConfigError::Parse(match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count();
                    let source = text.lines().nth(line).unwrap_or("").trim();
                    format!("line {} (`{source}`): {message}", line + 1)
                }
                None => message,
            })
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.lr.is_some() {
            self.lr = o.lr;
        }
        if o.steps.is_some() {
            self.steps = o.steps;
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.out_dir.is_some() {
            self.out_dir = o.out_dir.clone();
        }
    }

    fn check_experiment(&self, name: &str) -> Result<()> {
        match &self.experiment {
            Some(e) if e != name => field("experiment", format!("is `{e}` but the command is `{name}`")),
            _ => Ok(()),
        }
    }

    fn training(&self) -> Result<Training> {
        let lr = self.lr.unwrap_or(DEFAULT_LR);
        if !(lr.is_finite() && lr > 0.0) {
            return field("lr", format!("must be a positive number, got {lr}"));
        }
        let log_every = self.log_every.unwrap_or(1);
        if log_every == 0 {
            return field("log_every", "must be at least 1");
        }
        Ok(Training {
            lr,
            steps: self.steps.unwrap_or(DEFAULT_STEPS),
            seed: self.seed.unwrap_or(0),
            log_every,
        })
    }

    fn p_b_given_not_a(&self) -> Result<f64> {
        let p = self.p_b_given_not_a.unwrap_or(crate::pln_rules::DEFAULT_P_B_GIVEN_NOT_A);
        if !(0.0..=1.0).contains(&p) {
            return field("p_b_given_not_a", format!("must be in [0, 1], got {p}"));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Training {
    pub lr: f64,
    /// May be 0 only where an experiment says so.
    pub steps: usize,
    pub seed: u64,
    pub log_every: usize,
}

fn require_steps(t: &Training) -> Result<()> {
    if t.steps == 0 {
        return field("steps", "must be at least 1");
    }
    Ok(())
}

fn names(raw: &Option<Vec<String>>, name: &'static str) -> Result<Vec<String>> {
    let Some(list) = raw else {
        return field(name, "is required");
    };
    if list.is_empty() {
        return field(name, "must not be empty");
    }
    for (i, n) in list.iter().enumerate() {
        if n.is_empty() || n.chars().any(|c| c.is_whitespace() || c == '"' || c == '(' || c == ')') {
            return field(name, format!("`{n}` is not a usable name"));
        }
        if list[..i].contains(n) {
            return field(name, format!("`{n}` is listed twice"));
        }
    }
    Ok(list.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FruitConfig {
    pub fruits: Vec<String>,
    pub colors: Vec<String>,
    /// `probabilities[f][c]` for fruit f and color c, in list order.
    pub probabilities: Vec<Vec<f64>>,
    pub n_samples: usize,
    pub training: Training,
}

impl FruitConfig {
    pub fn from_config(c: &ExperimentConfig) -> Result<Self> {
        c.check_experiment("fruit-colors")?;
        let fruits = names(&c.fruits, "fruits")?;
        let colors = names(&c.colors, "colors")?;
        let Some(table) = &c.true_probabilities else {
            return field("true_probabilities", "is required");
        };
        if let Some(extra) = table.keys().find(|k| !fruits.contains(k)) {
            return field("true_probabilities", format!("`{extra}` is not in fruits"));
        }
        let mut probabilities = Vec::new();
        for f in &fruits {
            let Some(row) = table.get(f) else {
                return field("true_probabilities", format!("missing fruit `{f}`"));
            };
            if let Some(extra) = row.keys().find(|k| !colors.contains(k)) {
                return field("true_probabilities", format!("`{f}.{extra}` is not in colors"));
            }
            let mut ps = Vec::new();
            for col in &colors {
                let p = row.get(col).copied().unwrap_or(0.0);
                if !(0.0..=1.0).contains(&p) {
                    return field("true_probabilities", format!("`{f}.{col}` = {p} is outside [0, 1]"));
                }
                ps.push(p);
            }
            let sum: f64 = ps.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return field("true_probabilities", format!("probabilities for `{f}` sum to {sum}, not 1"));
            }
            probabilities.push(ps);
        }
        let n_samples = c.n_samples.unwrap_or(0);
        if n_samples == 0 {
            return field("n_samples", "must be at least 1");
        }
        let training = c.training()?;
        require_steps(&training)?;
        Ok(FruitConfig {
            fruits,
            colors,
            probabilities,
            n_samples,
            training,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormulaConfig {
    pub grid_size: usize,
    pub eval_grid_size: usize,
    pub p_b_given_not_a: f64,
    pub training: Training,
}

impl FormulaConfig {
    pub fn from_config(c: &ExperimentConfig) -> Result<Self> {
        c.check_experiment("learn-formula")?;
        let grid_size = c.grid_size.unwrap_or(11);
        if grid_size == 0 {
            return field("grid_size", "must be at least 1");
        }
        let eval_grid_size = c.eval_grid_size.unwrap_or(21);
        if eval_grid_size == 0 {
            return field("eval_grid_size", "must be at least 1");
        }
        Ok(FormulaConfig {
            grid_size,
            eval_grid_size,
            p_b_given_not_a: c.p_b_given_not_a()?,
            training: c.training()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointMode {
    /// Formula weights and unknown strengths together.
    Joint,
    /// Exact modus ponens; only the unknown strengths train.
    FreezeFormula,
    /// Unknown strengths fixed at their generating values; only weights train.
    FreezeStrengths,
}

impl JointMode {
    pub fn name(self) -> &'static str {
        match self {
            JointMode::Joint => "joint",
            JointMode::FreezeFormula => "freeze-formula",
            JointMode::FreezeStrengths => "freeze-strengths",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig {
    pub mode: JointMode,
    pub p_b_given_not_a: f64,
    pub training: Training,
}

impl JointConfig {
    pub fn from_config(c: &ExperimentConfig) -> Result<Self> {
        c.check_experiment("joint")?;
        let mode = match c.mode.as_deref().unwrap_or("joint") {
            "joint" => JointMode::Joint,
            "freeze-formula" => JointMode::FreezeFormula,
            "freeze-strengths" => JointMode::FreezeStrengths,
            other => {
                return field(
                    "mode",
                    format!("`{other}` is not one of joint, freeze-formula, freeze-strengths"),
                )
            }
        };
        let training = c.training()?;
        require_steps(&training)?;
        Ok(JointConfig {
            mode,
            p_b_given_not_a: c.p_b_given_not_a()?,
            training,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FRUIT: &str = r#"
        fruits = ["apple"]
        colors = ["green", "red"]
        n_samples = 10
        [true_probabilities.apple]
        green = 0.7
        red = 0.3
    "#;

    fn field_of(r: Result<FruitConfig>) -> &'static str {
        match r {
            Err(ConfigError::Field { field, .. }) => field,
            other => panic!("expected field error, got {other:?}"),
        }
    }

    #[test]
    fn fruit_config_parses() {
        let c = ExperimentConfig::parse(FRUIT).unwrap();
        let f = FruitConfig::from_config(&c).unwrap();
        assert_eq!(f.probabilities, vec![vec![0.7, 0.3]]);
        assert_eq!(f.training.lr, DEFAULT_LR);
        assert_eq!(f.training.steps, DEFAULT_STEPS);
    }

    #[test]
    fn bad_probabilities_name_the_field() {
        let c = ExperimentConfig::parse(&FRUIT.replace("0.3", "0.2")).unwrap();
        assert_eq!(field_of(FruitConfig::from_config(&c)), "true_probabilities");
        let c = ExperimentConfig::parse(&FRUIT.replace("n_samples = 10", "n_samples = 0")).unwrap();
        assert_eq!(field_of(FruitConfig::from_config(&c)), "n_samples");
        let mut c = ExperimentConfig::parse(FRUIT).unwrap();
        c.apply(&Overrides {
            lr: Some(-1.0),
            ..Default::default()
        });
        assert_eq!(field_of(FruitConfig::from_config(&c)), "lr");
    }

    #[test]
    fn overrides_win() {
        let mut c = ExperimentConfig::parse(&format!("lr = 0.5\nsteps = 3\n{FRUIT}")).unwrap();
        c.apply(&Overrides {
            steps: Some(9),
            ..Default::default()
        });
        let f = FruitConfig::from_config(&c).unwrap();
        assert_eq!((f.training.lr, f.training.steps), (0.5, 9));
    }

    #[test]
    fn unknown_keys_and_wrong_experiment() {
        assert!(matches!(ExperimentConfig::parse("bogus = 1"), Err(ConfigError::Parse(_))));
        let c = ExperimentConfig::parse(&format!("experiment = \"joint\"\n{FRUIT}")).unwrap();
        assert_eq!(field_of(FruitConfig::from_config(&c)), "experiment");
    }
}
