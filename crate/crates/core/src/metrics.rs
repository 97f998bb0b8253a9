//! Win and loss probabilities, efficiency relative to the Bayes rule, and
//! accuracy.
//!
//! Expectations over the sample are exact sums over `d ∈ 0..=D`; nothing
//! here samples.
//!
//! Per-subject efficiency reads the exponent notation `Π^y (1−Π)^(1−y)` in
//! the usual definition as "the posterior of the cage that was chosen". That
//! is the only reading under which each term is a probability.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::design::{binomial_pmf, choice_from_posterior, Cell, Design, Features, Trial};
use crate::error::{Error, Result};
use crate::likelihood::{Dataset, MixtureSpec};
use crate::models::Params;
use crate::par;

/// A decision rule to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    /// Choose A iff the Bayes posterior is at least ½.
    Bayes,
    Model(Params),
    /// Population-average CCP of a finite mixture.
    Mixture(MixtureSpec),
}

impl Rule {
    pub fn ccp(&self, f: &Features) -> Result<f64> {
        match self {
            Rule::Bayes => Ok(if choice_from_posterior(f.posterior).is_a() {
                1.0
            } else {
                0.0
            }),
            Rule::Model(p) => p.ccp(f),
            Rule::Mixture(m) => {
                let mut total = 0.0;
                for (c, l) in m.components.iter().zip(&m.lambdas) {
                    total += l * c.ccp(f)?;
                }
                Ok(total)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinLoss {
    pub win: f64,
    pub loss: f64,
}

/// Probability of naming the right cage when A is chosen with probability
/// `ccp` and A is the true cage with probability `posterior`.
pub fn win_loss(ccp: f64, posterior: f64) -> WinLoss {
    let win = ccp * posterior + (1.0 - ccp) * (1.0 - posterior);
    WinLoss {
        win,
        loss: 1.0 - win,
    }
}

/// Empirical distribution of control cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignWeights {
    pub cells: Vec<(Cell, f64)>,
}

impl DesignWeights {
    pub fn new(cells: Vec<(Cell, f64)>) -> Result<Self> {
        let w = DesignWeights { cells };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::domain("design weights are empty".to_string()));
        }
        let mut total = 0.0;
        for (cell, w) in &self.cells {
            if !(*w >= 0.0) {
                return Err(Error::domain(format!("negative cell weight {w}")));
            }
            cell.design.validate()?;
            if !(0.0..=1.0).contains(&cell.prior) {
                return Err(Error::domain(format!("prior {} outside [0, 1]", cell.prior)));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("cell weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn uniform(cells: Vec<Cell>) -> Result<Self> {
        let n = cells.len() as f64;
        Self::new(cells.into_iter().map(|c| (c, 1.0 / n)).collect())
    }

    /// One design, equal weight on each prior.
    pub fn uniform_priors(design: Design, priors: &[f64]) -> Result<Self> {
        Self::uniform(priors.iter().map(|&prior| Cell { prior, design }).collect())
    }

    /// Equal weight on each distinct cell in the data, in order of first
    /// appearance.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let counts = cell_counts(data);
        Self::uniform(counts.into_keys().collect())
    }

    /// Weight proportional to the number of trials in each cell.
    pub fn empirical(data: &Dataset) -> Result<Self> {
        let counts = cell_counts(data);
        let n = data.n_trials() as f64;
        Self::new(counts.into_iter().map(|(c, k)| (c, k as f64 / n)).collect())
    }
}

fn cell_counts(data: &Dataset) -> IndexMap<Cell, usize> {
    let mut counts = IndexMap::new();
    for s in &data.subjects {
        for t in &s.trials {
            *counts.entry(t.cell()).or_insert(0) += 1;
        }
    }
    counts
}

/// Expected win and loss in one cell, summed over the possible samples.
/// Both are divided by the enumerated mass, which is 1 up to rounding, so a
/// constant ½ rule wins exactly ½ and a rule that is always right loses
/// exactly 0.
pub fn cell_win_loss(rule: &Rule, cell: &Cell) -> Result<WinLoss> {
    let Cell { prior, design } = *cell;
    let mut win = 0.0;
    let mut loss = 0.0;
    let mut mass = 0.0;
    for d in 0..=design.draws {
        // joint masses stay finite at the prior endpoints
        let fa = binomial_pmf(d, design.draws, design.p_a)? * prior;
        let fb = binomial_pmf(d, design.draws, design.p_b)? * (1.0 - prior);
        if fa + fb == 0.0 {
            continue;
        }
        let f = Trial::new(prior, d, design)?.features()?;
        let p = rule.ccp(&f)?;
        win += p * fa + (1.0 - p) * fb;
        loss += (1.0 - p) * fa + p * fb;
        mass += fa + fb;
    }
    Ok(WinLoss {
        win: win / mass,
        loss: loss / mass,
    })
}

pub fn cell_win(rule: &Rule, cell: &Cell) -> Result<f64> {
    Ok(cell_win_loss(rule, cell)?.win)
}

/// Unconditional loss as a function of the prior, for one design.
pub fn loss_curve(rule: &Rule, design: Design, priors: &[f64]) -> Result<Vec<(f64, f64)>> {
    priors
        .iter()
        .map(|&prior| Ok((prior, cell_win_loss(rule, &Cell { prior, design })?.loss)))
        .collect()
}

fn weighted_win(rule: &Rule, weights: &DesignWeights) -> Result<f64> {
    let parts = par::map(&weights.cells, |(cell, w)| cell_win(rule, cell).map(|v| v * w))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(par::ordered_sum(&parts))
}

/// One minus the expected rate of disagreeing with the Bayes choice.
fn weighted_accuracy(rule: &Rule, weights: &DesignWeights) -> Result<f64> {
    let mut miss = 0.0;
    for (cell, w) in &weights.cells {
        let Cell { prior, design } = *cell;
        for d in 0..=design.draws {
            let mass = binomial_pmf(d, design.draws, design.p_a)? * prior
                + binomial_pmf(d, design.draws, design.p_b)? * (1.0 - prior);
            if mass == 0.0 {
                continue;
            }
            let f = Trial::new(prior, d, design)?.features()?;
            let p = rule.ccp(&f)?;
            let disagree = if choice_from_posterior(f.posterior).is_a() {
                1.0 - p
            } else {
                p
            };
            miss += w * mass * disagree;
        }
    }
    Ok(1.0 - miss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub id: String,
    pub accuracy: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub win: f64,
    pub loss: f64,
    /// Bayes-rule win probability under the same weights.
    pub optimal_win: f64,
    pub efficiency: f64,
    /// Expected share of choices that match the Bayes choice.
    pub accuracy: f64,
    pub subjects: Vec<SubjectScore>,
}

/// Win, loss, efficiency and accuracy of `rule` under `weights`. The Bayes
/// win probability is at least ½ for every cell, so the ratio is always
/// defined.
pub fn overall_efficiency(rule: &Rule, weights: &DesignWeights) -> Result<ScoreCard> {
    weights.validate()?;
    let win = weighted_win(rule, weights)?;
    let optimal_win = weighted_win(&Rule::Bayes, weights)?;
    Ok(ScoreCard {
        win,
        loss: 1.0 - win,
        optimal_win,
        // ratio can exceed 1 only by rounding
        efficiency: (win / optimal_win).min(1.0),
        accuracy: weighted_accuracy(rule, weights)?,
        subjects: Vec::new(),
    })
}

/// Accuracy and realized efficiency of each subject's actual choices.
pub fn subject_scores(data: &Dataset) -> Result<Vec<SubjectScore>> {
    par::map(&data.subjects, |s| {
        if s.is_empty() {
            return Err(Error::domain(format!("subject {} has no trials", s.id)));
        }
        let mut hits = 0usize;
        let mut got = 0.0;
        let mut best = 0.0;
        for (f, y) in s.observations() {
            let pi = f.posterior;
            if choice_from_posterior(pi).is_a() == y {
                hits += 1;
            }
            got += if y { pi } else { 1.0 - pi };
            best += pi.max(1.0 - pi);
        }
        Ok(SubjectScore {
            id: s.id.clone(),
            accuracy: hits as f64 / s.len() as f64,
            efficiency: got / best,
        })
    })
    .into_iter()
    .collect()
}

/// Model-level scorecard under the data's cell weights plus per-subject
/// scores.
pub fn score_card(rule: &Rule, data: &Dataset, weights: Option<&DesignWeights>) -> Result<ScoreCard> {
    let default;
    let weights = match weights {
        Some(w) => w,
        None => {
            default = DesignWeights::from_dataset(data)?;
            &default
        }
    };
    let mut card = overall_efficiency(rule, weights)?;
    card.subjects = subject_scores(data)?;
    Ok(card)
}
