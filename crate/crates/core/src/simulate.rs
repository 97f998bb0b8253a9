//! Synthetic panels drawn from any model, and a parameter-recovery harness.
//!
//! Each subject owns independent keyed streams for the cage draw, the balls,
//! the calculational noise, the choice and its type, so the panel depends on
//! the seed alone and never on thread scheduling.

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beliefs::ReportTrial;
use crate::design::{logistic, Cell, Choice, Trial};
use crate::error::{Error, Result};
use crate::estimation::inference::natural_value;
use crate::estimation::{fit_mixture_em, fit_mle, FitConfig, FitResult, ModelSpec};
use crate::likelihood::{Dataset, MixtureSpec, Subject};
use crate::models::{choice_layer, Params};
use crate::par;
use crate::rng::{derive_seed, stream, Role};

/// Choice-generating process: one model for everyone, or a population of
/// types drawn independently per subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Single(Params),
    Mixture(MixtureSpec),
}

impl Generator {
    fn types(&self) -> (&[Params], Vec<f64>) {
        match self {
            Generator::Single(p) => (std::slice::from_ref(p), vec![1.0]),
            Generator::Mixture(m) => (&m.components, m.lambdas.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    /// Control cell of each trial; every subject faces the same schedule.
    pub schedule: Vec<Cell>,
    pub generator: Generator,
    pub subjects: usize,
    pub seed: u64,
}

impl SimSpec {
    pub fn trials(&self) -> usize {
        self.schedule.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 {
            return Err(Error::config("simulation needs at least one subject"));
        }
        if self.schedule.is_empty() {
            return Err(Error::config("simulation needs at least one trial"));
        }
        for cell in &self.schedule {
            Trial::new(cell.prior, 0, cell.design)?;
        }
        if let Generator::Mixture(m) = &self.generator {
            m.validate()?;
        }
        Ok(())
    }
}

/// Latent quantities kept away from the estimation-facing data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenTruth {
    /// True cage per subject and trial.
    pub cages: Vec<Vec<Choice>>,
    /// Type index per subject (all 0 for a single generator).
    pub types: Vec<usize>,
    /// Calculational noise `η·ν` per trial; zero when the model has none.
    pub noise: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub data: Dataset,
    pub truth: HiddenTruth,
}

fn subject_id(s: usize) -> String {
    format!("s{:04}", s + 1)
}

fn draw_type(lambdas: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, l) in lambdas.iter().enumerate() {
        acc += l;
        if u < acc {
            return k;
        }
    }
    lambdas.len() - 1
}

/// Cage and sample for every trial of one subject.
fn draw_trials(spec: &SimSpec, s: u64) -> Result<(Vec<Trial>, Vec<Choice>)> {
    let mut cage_rng = stream(spec.seed, s, Role::Cage);
    let mut ball_rng = stream(spec.seed, s, Role::Balls);
    let mut trials = Vec::with_capacity(spec.trials());
    let mut cages = Vec::with_capacity(spec.trials());
    for cell in &spec.schedule {
        let u: f64 = cage_rng.random();
        let cage = if u < cell.prior { Choice::A } else { Choice::B };
        let p = match cage {
            Choice::A => cell.design.p_a,
            Choice::B => cell.design.p_b,
        };
        let marked = (0..cell.design.draws)
            .filter(|_| ball_rng.random::<f64>() < p)
            .count() as u32;
        trials.push(Trial::new(cell.prior, marked, cell.design)?);
        cages.push(cage);
    }
    Ok((trials, cages))
}

/// Choice probability after the trial's noise draw, and that draw.
fn conditional_ccp(params: &Params, trial: &Trial, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let f = trial.features()?;
    match params {
        Params::StructuralLogit(p) if p.eta > 0.0 => {
            let z: f64 = rng.sample(StandardNormal);
            let nu = p.eta * z;
            let index = p.beliefs.index(f.llr, f.lpr)? + nu;
            Ok((choice_layer(logistic(index), p.sigma), nu))
        }
        Params::StructuralProbit(b) => {
            let nu: f64 = rng.sample(StandardNormal);
            let index = b.index(f.llr, f.lpr)? + nu;
            Ok((choice_layer(logistic(index), 0.0), nu))
        }
        _ => Ok((params.ccp(&f)?, 0.0)),
    }
}

/// Simulate a choice panel; `y = 1` means cage A.
pub fn simulate_choice_panel(spec: &SimSpec) -> Result<SimulatedPanel> {
    spec.validate()?;
    let (types, lambdas) = spec.generator.types();
    let per_subject = par::map_range(spec.subjects, |s| -> Result<_> {
        let unit = s as u64;
        let k = draw_type(&lambdas, &mut stream(spec.seed, unit, Role::Type));
        let (trials, cages) = draw_trials(spec, unit)?;
        let mut noise_rng = stream(spec.seed, unit, Role::Noise);
        let mut choice_rng = stream(spec.seed, unit, Role::Choice);
        let mut choices = Vec::with_capacity(trials.len());
        let mut noise = Vec::with_capacity(trials.len());
        for t in &trials {
            let (p, nu) = conditional_ccp(&types[k], t, &mut noise_rng)?;
            let u: f64 = choice_rng.random();
            choices.push(u < p);
            noise.push(nu);
        }
        Ok((Subject::new(subject_id(s), trials, choices)?, cages, k, noise))
    });
    let mut subjects = Vec::with_capacity(spec.subjects);
    let mut truth = HiddenTruth {
        cages: Vec::new(),
        types: Vec::new(),
        noise: Vec::new(),
    };
    for item in per_subject {
        let (subject, cages, k, noise) = item?;
        subjects.push(subject);
        truth.cages.push(cages);
        truth.types.push(k);
        truth.noise.push(noise);
    }
    Ok(SimulatedPanel {
        data: Dataset::new(subjects)?,
        truth,
    })
}

/// Reports per subject, in schedule order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPanel {
    pub ids: Vec<String>,
    pub reports: Vec<Vec<ReportTrial>>,
}

impl ReportPanel {
    pub fn flatten(&self) -> Vec<ReportTrial> {
        self.reports.iter().flatten().copied().collect()
    }
}

/// Simulate elicited beliefs `logistic(β0 + β1·LLR + β2·LPR + η·ν)`. The
/// generator must be a single structural logit; its `σ` is ignored.
pub fn simulate_report_panel(spec: &SimSpec) -> Result<ReportPanel> {
    spec.validate()?;
    let (beliefs, eta) = match &spec.generator {
        Generator::Single(Params::StructuralLogit(p)) => (p.beliefs, p.eta),
        Generator::Single(Params::TransformedLogit(b)) => (*b, 0.0),
        _ => {
            return Err(Error::config(
                "report simulation needs a single structural logit generator",
            ))
        }
    };
    let per_subject = par::map_range(spec.subjects, |s| -> Result<Vec<ReportTrial>> {
        let unit = s as u64;
        let (trials, _) = draw_trials(spec, unit)?;
        let mut noise_rng = stream(spec.seed, unit, Role::Noise);
        trials
            .into_iter()
            .map(|t| {
                let f = t.features()?;
                let mut index = beliefs.index(f.llr, f.lpr)?;
                if eta > 0.0 {
                    let z: f64 = noise_rng.sample(StandardNormal);
                    index += eta * z;
                }
                ReportTrial::new(t, logistic(index))
            })
            .collect()
    });
    Ok(ReportPanel {
        ids: (0..spec.subjects).map(subject_id).collect(),
        reports: per_subject.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

/// Monte Carlo check of an estimator against a known truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySpec {
    pub model: ModelSpec,
    pub truth: Generator,
    pub schedule: Vec<Cell>,
    pub subjects: usize,
    pub replications: usize,
    pub seed: u64,
    pub config: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecovery {
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Share of replications whose 95% Wald interval covers the truth.
    pub coverage: f64,
    /// Replications that produced a finite standard error.
    pub with_se: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub replications: usize,
    pub params: IndexMap<String, ParamRecovery>,
}

/// True values under the estimator's naming, with types sorted the way fits
/// report them.
fn truth_values(truth: &Generator, names: &[String]) -> IndexMap<String, f64> {
    let (components, lambdas) = match truth {
        Generator::Single(p) => (vec![p.clone()], vec![1.0]),
        Generator::Mixture(m) => {
            let mut comps = m.components.clone();
            let mut lam = m.lambdas.clone();
            FitResult::sort_components(&mut comps, &mut lam, &mut []);
            (comps, lam)
        }
    };
    let estimates: Vec<_> = components.iter().map(Params::estimates).collect();
    names
        .iter()
        .filter_map(|n| {
            lookup(&estimates, &lambdas, n).map(|v| (n.clone(), v))
        })
        .collect()
}

fn lookup(estimates: &[IndexMap<String, f64>], lambdas: &[f64], name: &str) -> Option<f64> {
    if let Some(idx) = name.strip_prefix("lambda") {
        return lambdas.get(idx.parse::<usize>().ok()?.checked_sub(1)?).copied();
    }
    if let Some(rest) = name.strip_prefix("type") {
        let (k, param) = rest.split_once('.')?;
        return estimates.get(k.parse::<usize>().ok()?.checked_sub(1)?)?.get(param).copied();
    }
    estimates.first()?.get(name).copied()
}

/// Simulate and refit `replications` times; report mean bias and 95%-CI
/// coverage per parameter.
pub fn recovery_experiment(spec: &RecoverySpec) -> Result<RecoverySummary> {
    if spec.replications == 0 {
        return Err(Error::config("recovery needs at least one replication"));
    }
    let k = match &spec.truth {
        Generator::Single(_) => 1,
        Generator::Mixture(m) => m.k(),
    };
    let fits = par::map_range(spec.replications, |r| -> Result<FitResult> {
        let seed = derive_seed(spec.seed, r as u64);
        let sim = SimSpec {
            schedule: spec.schedule.clone(),
            generator: spec.truth.clone(),
            subjects: spec.subjects,
            seed,
        };
        let panel = simulate_choice_panel(&sim)?;
        let config = FitConfig {
            seed,
            ..spec.config.clone()
        };
        if k == 1 {
            fit_mle(&spec.model, &panel.data, &config)
        } else {
            fit_mixture_em(&spec.model, k, &panel.data, &config)
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let names: Vec<String> = match fits[0].covariance.as_ref() {
        Some(c) => c.names.clone(),
        None => fits[0].estimates[0].keys().cloned().collect(),
    };
    let truth = truth_values(&spec.truth, &names);
    let n = fits.len() as f64;
    let mut params = IndexMap::new();
    for (name, &true_value) in &truth {
        let mut sum = 0.0;
        let mut covered = 0usize;
        let mut with_se = 0usize;
        for fit in &fits {
            let est = natural_value(fit, name).unwrap_or(f64::NAN);
            sum += est;
            if let Some(&se) = fit.std_errors.get(name) {
                if se.is_finite() {
                    with_se += 1;
                    if (est - true_value).abs() <= 1.959963984540054 * se {
                        covered += 1;
                    }
                }
            }
        }
        let mean = sum / n;
        params.insert(
            name.clone(),
            ParamRecovery {
                truth: true_value,
                mean,
                bias: mean - true_value,
                coverage: if with_se > 0 {
                    covered as f64 / with_se as f64
                } else {
                    f64::NAN
                },
                with_se,
            },
        );
    }
    Ok(RecoverySummary {
        replications: spec.replications,
        params,
    })
}
