use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dpln::experiments::chain::{self, ChainMode, ChainRequest};
use dpln::experiments::config::{FormulaConfig, FruitConfig, JointConfig};
use dpln::pln_rules::DEFAULT_P_B_GIVEN_NOT_A;
use dpln::experiments::{formula, fruit, joint, ExperimentConfig, ExperimentError, Overrides, RunOutput};

#[derive(Parser)]
#[command(name = "dpln", version, about = "Differentiable PLN experiments and chaining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and loss.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn fruit -> color implication strengths from sampled instances.
    FruitColors(Common),
    /// Fit the trainable modus ponens formula to the exact one.
    LearnFormula(Common),
    /// Learn formula weights and unknown strengths together.
    Joint(Common),
    /// Load a KB and chain over it.
    Chain {
        #[arg(long)]
        kb: PathBuf,
        /// Backward-chain this target, e.g. '(InheritanceLink (ConceptNode "a") $X)'.
        #[arg(long, conflicts_with = "forward")]
        target: Option<String>,
        /// Forward-chain instead.
        #[arg(long)]
        forward: bool,
        /// Rule applications for --forward.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 3)]
        max_depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Modus ponens P(B|not A) when the KB has no Impl(Not A, B).
        #[arg(long, default_value_t = DEFAULT_P_B_GIVEN_NOT_A)]
        p_b_given_not_a: f64,
        /// Also write report.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<(ExperimentConfig, PathBuf), ExperimentError> {
    let text = fs::read_to_string(&c.config)
        .map_err(|e| ExperimentError::Input(format!("cannot read {}: {e}", c.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.apply(&Overrides {
        lr: c.lr,
        steps: c.steps,
        seed: c.seed,
        out_dir: c.out.clone(),
    });
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn write_out(dir: &Path, out: &RunOutput) -> Result<(), ExperimentError> {
    let io = |e: std::io::Error| ExperimentError::Internal(format!("writing {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join("report.json"), &out.report_json).map_err(io)?;
    fs::write(dir.join("loss.csv"), &out.loss_csv).map_err(io)?;
    emit(&format!("{}wrote {}\n", out.summary, dir.join("report.json").display()));
    Ok(())
}

/// Prints to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::FruitColors(c) => {
            let (cfg, dir) = load_config(&c)?;
            let (_, out) = fruit::run(&FruitConfig::from_config(&cfg)?)?;
            write_out(&dir, &out)
        }
        Command::LearnFormula(c) => {
            let (cfg, dir) = load_config(&c)?;
            let (_, out) = formula::run(&FormulaConfig::from_config(&cfg)?)?;
            write_out(&dir, &out)
        }
        Command::Joint(c) => {
            let (cfg, dir) = load_config(&c)?;
            let (_, out) = joint::run(&JointConfig::from_config(&cfg)?)?;
            write_out(&dir, &out)
        }
        Command::Chain {
            kb,
            target,
            forward,
            steps,
            max_depth,
            seed,
            p_b_given_not_a,
            out,
        } => {
            let text = fs::read_to_string(&kb)
                .map_err(|e| ExperimentError::Input(format!("cannot read {}: {e}", kb.display())))?;
            let mode = match (target, forward) {
                (Some(target), false) => ChainMode::Backward { target },
                (None, true) => ChainMode::Forward { steps },
                _ => return Err(ExperimentError::Input("give either --target or --forward".into())),
            };
            let report = chain::run(
                &text,
                &ChainRequest {
                    mode,
                    max_depth,
                    seed,
                    p_b_given_not_a,
                },
            )
            .map_err(|e| match e {
                ExperimentError::Input(m) => ExperimentError::Input(format!("{}: {m}", kb.display())),
                other => other,
            })?;
            emit(&report.text());
            if let Some(dir) = out {
                fs::create_dir_all(&dir)
                    .and_then(|_| fs::write(dir.join("report.json"), report.to_json()))
                    .map_err(|e| ExperimentError::Internal(format!("writing {}: {e}", dir.display())))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
