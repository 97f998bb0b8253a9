//! Log-likelihood assembly: one subject, a pooled panel, a finite mixture of
//! types, and the Estimation-Classification objective.
//!
//! Subject-level values are computed in parallel (see [`crate::par`]) and
//! reduced in subject order, so every total is reproducible bit for bit.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::design::{Cell, Features, Trial};
use crate::error::{Error, Result};
use crate::models::Params;
use crate::par;

/// Floor applied to the probability of the observed choice inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub trials: Vec<Trial>,
    /// `true` = cage A.
    pub choices: Vec<bool>,
    features: Vec<Features>,
}

impl Subject {
    pub fn new(id: impl Into<String>, trials: Vec<Trial>, choices: Vec<bool>) -> Result<Self> {
        let id = id.into();
        if trials.len() != choices.len() {
            return Err(Error::domain(format!(
                "subject {id}: {} trials but {} choices",
                trials.len(),
                choices.len()
            )));
        }
        let features = trials
            .iter()
            .map(Trial::features)
            .collect::<Result<Vec<_>>>()?;
        Ok(Subject {
            id,
            trials,
            choices,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn features(&self) -> &[Features] {
        &self.features
    }

    pub fn observations(&self) -> impl Iterator<Item = (&Features, bool)> {
        self.features.iter().zip(self.choices.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
}

impl Dataset {
    pub fn new(subjects: Vec<Subject>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::domain("dataset has no subjects"));
        }
        Ok(Dataset { subjects })
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_trials(&self) -> usize {
        self.subjects.iter().map(Subject::len).sum()
    }

    /// Estimation uses only priors strictly inside (0, 1).
    pub fn require_interior_priors(&self) -> Result<()> {
        for s in &self.subjects {
            if let Some((t, trial)) = s
                .trials
                .iter()
                .enumerate()
                .find(|(_, t)| !t.has_interior_prior())
            {
                return Err(Error::Estimation(format!(
                    "subject {} trial {t} has prior {}; estimation requires priors strictly between 0 and 1",
                    s.id, trial.prior
                )));
            }
        }
        Ok(())
    }

    pub fn features(&self) -> impl Iterator<Item = (&Features, bool)> {
        self.subjects.iter().flat_map(|s| s.observations())
    }
}

/// A log-likelihood value with the number of observations whose choice
/// probability hit [`PROB_FLOOR`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LogLik {
    pub value: f64,
    pub clamped: usize,
}

impl LogLik {
    pub fn is_degenerate(&self) -> bool {
        self.clamped > 0
    }
}

impl std::ops::Add for LogLik {
    type Output = LogLik;
    fn add(self, rhs: LogLik) -> LogLik {
        LogLik {
            value: self.value + rhs.value,
            clamped: self.clamped + rhs.clamped,
        }
    }
}

impl std::iter::Sum for LogLik {
    fn sum<I: Iterator<Item = LogLik>>(iter: I) -> LogLik {
        iter.fold(LogLik::default(), |a, b| a + b)
    }
}

/// Log probability of one observed choice, floored at [`PROB_FLOOR`].
pub fn observation_loglik(ccp: f64, choice: bool) -> LogLik {
    let q = if choice { ccp } else { 1.0 - ccp };
    if q < PROB_FLOOR || q.is_nan() {
        LogLik {
            value: PROB_FLOOR.ln(),
            clamped: 1,
        }
    } else {
        LogLik {
            value: q.ln(),
            clamped: 0,
        }
    }
}

pub fn trial_logliks(params: &Params, subject: &Subject) -> Result<Vec<f64>> {
    subject
        .observations()
        .map(|(f, y)| Ok(observation_loglik(params.ccp(f)?, y).value))
        .collect()
}

pub fn subject_loglik(params: &Params, subject: &Subject) -> Result<LogLik> {
    let mut total = LogLik::default();
    for (f, y) in subject.observations() {
        total = total + observation_loglik(params.ccp(f)?, y);
    }
    Ok(total)
}

/// Per-subject log-likelihoods in subject order.
pub fn subject_logliks(params: &Params, data: &Dataset) -> Result<Vec<LogLik>> {
    par::map(&data.subjects, |s| subject_loglik(params, s))
        .into_iter()
        .collect()
}

pub fn panel_loglik(params: &Params, data: &Dataset) -> Result<LogLik> {
    Ok(subject_logliks(params, data)?.into_iter().sum())
}

/// `Σ_s w_s·LL_s(θ)`; the M-step objective of EM.
pub fn weighted_panel_loglik(params: &Params, data: &Dataset, weights: &[f64]) -> Result<f64> {
    if weights.len() != data.n_subjects() {
        return Err(Error::domain("one weight per subject required"));
    }
    let values = par::map_range(data.n_subjects(), |s| {
        if weights[s] == 0.0 {
            Ok(0.0)
        } else {
            subject_loglik(params, &data.subjects[s]).map(|ll| weights[s] * ll.value)
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(par::ordered_sum(&values))
}

/// Choices collapsed to weighted counts per distinct trial. Subjects share
/// a handful of (cell, d) combinations, so a fit evaluates each CCP once per
/// combination instead of once per observation.
#[derive(Debug, Clone)]
pub struct CountTable {
    pub features: Vec<Features>,
    /// Weighted numbers of A and B choices.
    pub counts: Vec<(f64, f64)>,
}

impl CountTable {
    pub fn new(data: &Dataset, weights: Option<&[f64]>) -> Result<Self> {
        if let Some(w) = weights {
            if w.len() != data.n_subjects() {
                return Err(Error::domain("one weight per subject required"));
            }
        }
        let mut index: IndexMap<(Cell, u32), usize> = IndexMap::new();
        let mut features = Vec::new();
        let mut counts: Vec<(f64, f64)> = Vec::new();
        for (s, subject) in data.subjects.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[s]);
            if w == 0.0 {
                continue;
            }
            for (f, y) in subject.observations() {
                let key = (f.trial.cell(), f.trial.marked);
                let i = *index.entry(key).or_insert_with(|| {
                    features.push(*f);
                    counts.push((0.0, 0.0));
                    features.len() - 1
                });
                if y {
                    counts[i].0 += w;
                } else {
                    counts[i].1 += w;
                }
            }
        }
        Ok(CountTable { features, counts })
    }

    pub fn loglik(&self, params: &Params) -> Result<f64> {
        let mut total = 0.0;
        for (f, &(na, nb)) in self.features.iter().zip(&self.counts) {
            let p = params.ccp(f)?;
            if na > 0.0 {
                total += na * observation_loglik(p, true).value;
            }
            if nb > 0.0 {
                total += nb * observation_loglik(p, false).value;
            }
        }
        Ok(total)
    }
}

/// `K` types with population shares `lambdas`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<Params>,
    pub lambdas: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(components: Vec<Params>, lambdas: Vec<f64>) -> Result<Self> {
        let spec = MixtureSpec { components, lambdas };
        spec.validate()?;
        Ok(spec)
    }

    pub fn single(params: Params) -> Self {
        MixtureSpec {
            components: vec![params],
            lambdas: vec![1.0],
        }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.components.len() != self.lambdas.len() {
            return Err(Error::domain("mixture needs K >= 1 components with one weight each"));
        }
        if self.lambdas.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::domain("mixture weights must be non-negative"));
        }
        let total: f64 = self.lambdas.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `S × K` matrix of subject log-likelihoods, row per subject.
pub fn loglik_matrix(components: &[Params], data: &Dataset) -> Result<Vec<Vec<f64>>> {
    par::map(&data.subjects, |s| {
        components
            .iter()
            .map(|p| subject_loglik(p, s).map(|ll| ll.value))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect()
}

/// Mixture log-likelihood from a precomputed matrix.
pub fn mixture_loglik_from_matrix(lambdas: &[f64], matrix: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = matrix
        .iter()
        .map(|row| {
            let terms: Vec<f64> = row
                .iter()
                .zip(lambdas)
                .map(|(ll, &l)| if l > 0.0 { l.ln() + ll } else { f64::NEG_INFINITY })
                .collect();
            log_sum_exp(&terms)
        })
        .collect();
    par::ordered_sum(&rows)
}

/// `Σ_s ln Σ_k λ_k exp(LL_s(θ_k))`, evaluated with log-sum-exp.
pub fn mixture_loglik(spec: &MixtureSpec, data: &Dataset) -> Result<f64> {
    spec.validate()?;
    let matrix = loglik_matrix(&spec.components, data)?;
    Ok(mixture_loglik_from_matrix(&spec.lambdas, &matrix))
}

/// Index of the best-fitting type per subject; ties go to the lower index.
pub fn best_response_assignments(matrix: &[Vec<f64>]) -> Vec<usize> {
    matrix
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                    if v > best.1 {
                        (k, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

pub fn ec_loglik(thetas: &[Params], assignments: &[usize], data: &Dataset) -> Result<f64> {
    if assignments.len() != data.n_subjects() {
        return Err(Error::domain("one assignment per subject required"));
    }
    if let Some(&bad) = assignments.iter().find(|&&a| a >= thetas.len()) {
        return Err(Error::domain(format!(
            "assignment {bad} out of range for {} types",
            thetas.len()
        )));
    }
    let values = par::map_range(data.n_subjects(), |s| {
        subject_loglik(&thetas[assignments[s]], &data.subjects[s]).map(|ll| ll.value)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(par::ordered_sum(&values))
}
