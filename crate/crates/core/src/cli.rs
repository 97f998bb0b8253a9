//! Command-line surface.
//!
//! [`run`] parses arguments and executes one subcommand, writing to the given
//! streams. It returns the process exit status: 0 on success, 1 on a runtime
//! error, 2 on a usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::beliefs::{fit_belief_regression, CensorMode};
use crate::design::{bayes_cutoff, bayes_posterior, choice_from_posterior, Cell, Design, Trial};
use crate::error::{Error, Result};
use crate::estimation::{
    covariance_and_wald, fit_ec, fit_mixture_em, fit_mle, lr_aic, vuong_test, FitConfig, FitResult,
    LinearRestriction, ModelSpec,
};
use crate::io;
use crate::likelihood::MixtureSpec;
use crate::metrics::{loss_curve, score_card, DesignWeights, Rule};
use crate::models::{BeliefParams, Params, StructuralLogitParams};
use crate::par;
use crate::simulate::{simulate_choice_panel, simulate_report_panel, Generator, SimSpec};

#[derive(Debug, Parser)]
#[command(name = "cagelogit", version, about = "Bayesian classification experiments: posteriors, model fits and diagnostics")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bayes posterior, LLR, LPR and optimal choice for one trial.
    Posterior(PosteriorArgs),
    /// Bayes cutoff for each prior under one design.
    Cutoffs(CutoffArgs),
    /// Write a synthetic trial file.
    Simulate(SimulateArgs),
    /// Estimate a model on a choice file.
    Fit(FitArgs),
    /// Efficiency, accuracy and loss curve.
    Metrics(MetricsArgs),
    /// AIC, likelihood-ratio and Vuong comparisons of fitted results.
    Compare(CompareArgs),
    /// Elicited-belief analysis.
    Beliefs {
        #[command(subcommand)]
        command: BeliefsCommand,
    },
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[arg(long)]
    pa: f64,
    #[arg(long)]
    pb: f64,
    #[arg(long)]
    draws: u32,
}

impl DesignArgs {
    fn design(&self) -> Result<Design> {
        Design::new(self.pa, self.pb, self.draws)
    }
}

#[derive(Debug, Args)]
struct PosteriorArgs {
    #[arg(long)]
    prior: f64,
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    marked: u32,
}

#[derive(Debug, Args)]
struct CutoffArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Comma-separated priors.
    #[arg(long, value_delimiter = ',', required = true)]
    priors: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FileMode {
    Choice,
    Report,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Priors cycled through the trial schedule.
    #[arg(long, value_delimiter = ',', required = true)]
    priors: Vec<f64>,
    /// Trials per subject (default: one per prior).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 100)]
    subjects: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FileMode::Choice)]
    mode: FileMode,
    /// JSON file with the generating model (single parameters or a mixture).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Belief coefficients `b0,b1,b2` when no truth file is given.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 1.0, 1.0])]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the hidden cages, types and noise draws.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gauss–Hermite nodes for mixed models.
    #[arg(long, default_value_t = 32)]
    nodes: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Relative log-likelihood tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iter: usize,
}

impl ConfigArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            restarts: self.restarts,
            max_iter: self.max_iter,
            ll_tol: self.tol,
            seed: self.seed,
            nodes: self.nodes,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "logit")]
    model: String,
    /// `noisy-bayes` or `bayes-beliefs`.
    #[arg(long)]
    restrict: Option<String>,
    /// Finite mixture with K types, estimated by EM.
    #[arg(long, conflicts_with = "ec")]
    mixture: Option<usize>,
    /// Estimation-Classification with K types.
    #[arg(long)]
    ec: Option<usize>,
    /// Wald restrictions `name=value,...` to test.
    #[arg(long)]
    wald: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightMode {
    Uniform,
    Empirical,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    data: PathBuf,
    /// Fitted results to score; the Bayes rule when omitted.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = WeightMode::Uniform)]
    weights: WeightMode,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a `prior,loss` CSV for the first design in the data.
    #[arg(long)]
    loss_curve: Option<PathBuf>,
    /// Grid points on [0, 1] for the loss curve.
    #[arg(long, default_value_t = 101)]
    grid: usize,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Two or more results files.
    #[arg(required = true, num_args = 2..)]
    results: Vec<PathBuf>,
    /// Likelihood-ratio test of the first two (nested) results.
    #[arg(long)]
    nested: bool,
    /// Choice file for a Vuong test of the first two results.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum BeliefsCommand {
    /// Censored regression of report log-odds on LLR and LPR.
    Fit(BeliefsFitArgs),
}

#[derive(Debug, Args)]
struct BeliefsFitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Drop reports of exactly 0 or 1 instead of treating them as censored.
    #[arg(long)]
    drop_censored: bool,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse `args` (including the program name) and run.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    // buffered so the pool closure owns everything it touches
    let mut buf = Vec::new();
    let result = match cli.threads {
        Some(n) => par::with_threads(n, || execute(cli.command, &mut buf).map(|()| buf)),
        None => execute(cli.command, &mut buf).map(|()| buf),
    };
    match result.and_then(|bytes| Ok(out.write_all(&bytes)?)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Posterior(a) => posterior(a, out),
        Command::Cutoffs(a) => cutoffs(a, out),
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a, out),
        Command::Metrics(a) => metrics(a, out),
        Command::Compare(a) => compare(a, out),
        Command::Beliefs {
            command: BeliefsCommand::Fit(a),
        } => beliefs_fit(a, out),
    }
}

fn emit<T: serde::Serialize>(value: &T, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => io::save_json(p, value),
        None => io::write_json(out, value),
    }
}

fn posterior(a: PosteriorArgs, out: &mut dyn Write) -> Result<()> {
    let trial = Trial::new(a.prior, a.marked, a.design.design()?)?;
    let p = bayes_posterior(&trial)?;
    writeln!(out, "posterior {:.6}", p.pi_a)?;
    writeln!(out, "llr {:.6}", p.llr)?;
    writeln!(out, "lpr {:.6}", p.lpr)?;
    writeln!(out, "choice {}", choice_from_posterior(p.pi_a))?;
    Ok(())
}

fn cutoffs(a: CutoffArgs, out: &mut dyn Write) -> Result<()> {
    let design = a.design.design()?;
    writeln!(out, "prior,cutoff")?;
    for prior in a.priors {
        writeln!(out, "{prior},{}", bayes_cutoff(&design, prior)?)?;
    }
    Ok(())
}

fn read_generator(path: &Path) -> Result<Generator> {
    let value: serde_json::Value = io::load_json(path)?;
    if let Ok(g) = serde_json::from_value::<Generator>(value.clone()) {
        return Ok(g);
    }
    if let Ok(m) = serde_json::from_value::<MixtureSpec>(value.clone()) {
        m.validate()?;
        return Ok(Generator::Mixture(m));
    }
    serde_json::from_value::<Params>(value)
        .map(Generator::Single)
        .map_err(|e| Error::config(format!("{}: not a model or mixture ({e})", path.display())))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let design = a.design.design()?;
    let trials = a.trials.unwrap_or(a.priors.len());
    let schedule = (0..trials)
        .map(|t| Cell {
            prior: a.priors[t % a.priors.len()],
            design,
        })
        .collect();
    let generator = match &a.truth {
        Some(path) => read_generator(path)?,
        None => Generator::Single(Params::StructuralLogit(StructuralLogitParams::new(
            BeliefParams::new(a.beta[0], a.beta[1], a.beta[2]),
            a.sigma,
            a.eta,
        ))),
    };
    let spec = SimSpec {
        schedule,
        generator,
        subjects: a.subjects,
        seed: a.seed,
    };
    match a.mode {
        FileMode::Choice => {
            let panel = simulate_choice_panel(&spec)?;
            io::save_choices(&a.out, &panel.data)?;
            if let Some(p) = &a.truth_out {
                io::save_json(p, &panel.truth)?;
            }
        }
        FileMode::Report => {
            let panel = simulate_report_panel(&spec)?;
            io::save_reports(&a.out, &panel)?;
        }
    }
    Ok(())
}

fn fit(a: FitArgs, out: &mut dyn Write) -> Result<()> {
    let data = io::load_choices(&a.data)?;
    let mut spec: ModelSpec = a.model.parse()?;
    if let Some(r) = &a.restrict {
        spec = spec.restricted(r)?;
    }
    let config = a.config.config();
    let mut result = match (a.mixture, a.ec) {
        (Some(k), _) => fit_mixture_em(&spec, k, &data, &config)?,
        (None, Some(k)) => fit_ec(&spec, k, &data, &config)?,
        (None, None) => fit_mle(&spec, &data, &config)?,
    };
    if let Some(w) = &a.wald {
        let test = covariance_and_wald(&result, &LinearRestriction::parse(w)?)?;
        result.tests.insert("wald".into(), serde_json::to_value(test)?);
    }
    emit(&result, a.out.as_deref(), out)
}

fn rule_from_results(result: &FitResult) -> Result<Rule> {
    Ok(match result.components.len() {
        1 => Rule::Model(result.components[0].clone()),
        _ => Rule::Mixture(MixtureSpec::new(result.components.clone(), result.lambdas.clone())?),
    })
}

fn metrics(a: MetricsArgs, out: &mut dyn Write) -> Result<()> {
    let data = io::load_choices(&a.data)?;
    let rule = match &a.results {
        Some(p) => rule_from_results(&io::read_results(p)?)?,
        None => Rule::Bayes,
    };
    let weights = match a.weights {
        WeightMode::Uniform => DesignWeights::from_dataset(&data)?,
        WeightMode::Empirical => DesignWeights::empirical(&data)?,
    };
    let card = score_card(&rule, &data, Some(&weights))?;
    if let Some(path) = &a.loss_curve {
        if a.grid < 2 {
            return Err(Error::config("loss-curve grid needs at least 2 points"));
        }
        let design = data.subjects[0].trials[0].design;
        let grid: Vec<f64> = (0..a.grid).map(|i| i as f64 / (a.grid - 1) as f64).collect();
        let curve = loss_curve(&rule, design, &grid)?;
        io::write_loss_curve(std::fs::File::create(path)?, &curve)?;
    }
    emit(&card, a.out.as_deref(), out)
}

fn compare(a: CompareArgs, out: &mut dyn Write) -> Result<()> {
    let results = a
        .results
        .iter()
        .map(io::read_results)
        .collect::<Result<Vec<_>>>()?;
    let models: Vec<_> = results
        .iter()
        .zip(&a.results)
        .map(|(r, p)| {
            json!({
                "file": p.display().to_string(),
                "model": r.model,
                "k": r.k(),
                "loglik": r.loglik,
                "n_params": r.n_params,
                "aic": r.aic,
            })
        })
        .collect();
    let best = results
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.aic.total_cmp(&y.1.aic).then(x.0.cmp(&y.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut report = json!({ "models": models, "best_aic": best });
    if a.nested {
        let (full, restricted) = if results[0].n_params >= results[1].n_params {
            (&results[0], &results[1])
        } else {
            (&results[1], &results[0])
        };
        report["lr"] = serde_json::to_value(lr_aic(full, restricted)?)?;
    }
    if let Some(path) = &a.data {
        let data = io::load_choices(path)?;
        report["vuong"] = serde_json::to_value(vuong_test(&results[0], &results[1], &data)?)?;
    }
    emit(&report, a.out.as_deref(), out)
}

fn beliefs_fit(a: BeliefsFitArgs, out: &mut dyn Write) -> Result<()> {
    let panel = io::load_reports(&a.data)?;
    let mode = if a.drop_censored {
        CensorMode::Drop
    } else {
        CensorMode::Censor
    };
    let fit = fit_belief_regression(&panel.flatten(), &a.config.config(), mode)?;
    emit(&fit, a.out.as_deref(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("cagelogit").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn posterior_prints_benchmark() {
        let (code, out, _) = run_str(&[
            "posterior", "--prior", "0.6", "--pa", "0.4", "--pb", "0.6", "--draws", "7", "--marked", "3",
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("posterior 0.692308"));
        assert!(out.contains("choice A"));
    }

    #[test]
    fn cutoffs_table() {
        let (code, out, _) = run_str(&[
            "cutoffs", "--pa", "0.6667", "--pb", "0.5", "--draws", "6", "--priors", "0.3333,0.5,0.6667",
        ]);
        assert_eq!(code, 0);
        assert_eq!(out, "prior,cutoff\n0.3333,4\n0.5,3\n0.6667,2\n");
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run_str(&["posterior", "--bogus", "1"]);
        assert_ne!(code, 0);
        assert!(err.contains("Usage"));
    }

    #[test]
    fn empty_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        let (code, _, err) = run_str(&["fit", "--data", path.to_str().unwrap()]);
        assert_ne!(code, 0);
        assert!(err.contains("parse error"), "{err}");
    }
}
