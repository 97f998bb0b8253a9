//! Conditional choice probabilities `P(A | trial, params)` for each decision
//! rule family.
//!
//! All families share one evaluation path: [`Params::ccp`] on precomputed
//! trial [`Features`]. The free functions below are thin wrappers taking a raw
//! [`Trial`].
//!
//! Sign convention: beliefs are Bayesian at `β = (0, 1, 1)`. The reward for a
//! correct choice is fixed at 1, so `σ` carries the whole signal-to-noise
//! ratio.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::{logistic, Cell, CutoffOrientation, Features, Trial};
use crate::error::{Error, Result};
use crate::quadrature::{GaussHermite, DEFAULT_NODES};

/// Payoff for a correct choice. Not separately identified from `σ`.
pub const REWARD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl BeliefParams {
    pub const BAYES: BeliefParams = BeliefParams {
        beta0: 0.0,
        beta1: 1.0,
        beta2: 1.0,
    };

    pub fn new(beta0: f64, beta1: f64, beta2: f64) -> Self {
        BeliefParams { beta0, beta1, beta2 }
    }

    /// `β0 + β1·LLR + β2·LPR`, with zero-weighted infinite covariates
    /// dropped. Errors if infinities of opposite sign meet.
    pub fn index(&self, llr: f64, lpr: f64) -> Result<f64> {
        let idx = self.beta0 + weighted(self.beta1, llr) + weighted(self.beta2, lpr);
        if idx.is_nan() {
            return Err(Error::domain(format!(
                "belief index undefined for llr = {llr}, lpr = {lpr}"
            )));
        }
        Ok(idx)
    }

    /// Mirror to the `(0, −1, −1)` display convention used by some tables.
    pub fn negated(&self) -> Self {
        BeliefParams::new(-self.beta0, -self.beta1, -self.beta2)
    }
}

fn weighted(coef: f64, x: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * x
    }
}

/// Two-layer structural logit: logistic subjective posterior, extreme-value
/// choice shocks with scale `sigma`, Gaussian calculational noise with SD
/// `eta`. `nodes` is the Gauss–Hermite rule used when `eta > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralLogitParams {
    pub beliefs: BeliefParams,
    pub sigma: f64,
    pub eta: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

impl StructuralLogitParams {
    pub fn new(beliefs: BeliefParams, sigma: f64, eta: f64) -> Self {
        StructuralLogitParams {
            beliefs,
            sigma,
            eta,
            nodes: DEFAULT_NODES,
        }
    }

    pub fn noisy_bayes(sigma: f64) -> Self {
        Self::new(BeliefParams::BAYES, sigma, 0.0)
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !(self.eta >= 0.0) {
            return Err(Error::domain(format!(
                "sigma = {}, eta = {} must be non-negative",
                self.sigma, self.eta
            )));
        }
        Ok(())
    }
}

/// One cutoff per control cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCutoff {
    pub cell: Cell,
    pub cutoff: i64,
}

/// Integer cutoff rule with a guessing probability `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub cutoffs: Vec<CellCutoff>,
    pub epsilon: f64,
}

impl CutoffParams {
    pub fn new(cutoffs: Vec<CellCutoff>, epsilon: f64) -> Result<Self> {
        let params = CutoffParams { cutoffs, epsilon };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::domain(format!("epsilon = {} outside [0, 1]", self.epsilon)));
        }
        for entry in &self.cutoffs {
            let orientation = entry.cell.design.orientation().ok_or_else(|| {
                Error::domain("cutoff rule needs p_a != p_b".to_string())
            })?;
            if !orientation.range(entry.cell.design.draws).contains(&entry.cutoff) {
                return Err(Error::domain(format!(
                    "cutoff {} out of range for draws = {}",
                    entry.cutoff, entry.cell.design.draws
                )));
            }
        }
        Ok(())
    }

    pub fn cutoff_for(&self, cell: &Cell) -> Option<i64> {
        self.cutoffs.iter().find(|e| e.cell == *cell).map(|e| e.cutoff)
    }
}

/// Output layer `logistic(a + w·Π_s)` on top of the belief layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nn5Params {
    pub beliefs: BeliefParams,
    pub out_weight: f64,
    pub out_bias: f64,
}

impl Nn5Params {
    /// The network point equivalent to a structural logit with noise `sigma`.
    pub fn from_sigma(beliefs: BeliefParams, sigma: f64) -> Self {
        Nn5Params {
            beliefs,
            out_weight: 2.0 / sigma,
            out_bias: -1.0 / sigma,
        }
    }

    pub fn is_structural(&self) -> bool {
        (self.out_bias + self.out_weight / 2.0).abs() <= 1e-12 * self.out_weight.abs().max(1.0)
    }
}

/// Binary logit on the untransformed controls `(1, d, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawLogitParams {
    pub gamma0: f64,
    pub gamma_d: f64,
    pub gamma_pi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducedMode {
    Raw,
    Transformed,
}

/// Coefficients for [`ccp_reduced_logit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReducedCoeffs {
    Raw(RawLogitParams),
    Transformed(BeliefParams),
}

/// Parameters of any decision-rule family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Params {
    StructuralLogit(StructuralLogitParams),
    StructuralProbit(BeliefParams),
    CutoffRule(CutoffParams),
    Nn5(Nn5Params),
    RawLogit(RawLogitParams),
    TransformedLogit(BeliefParams),
}

impl Params {
    /// Choice probability for cage A.
    pub fn ccp(&self, f: &Features) -> Result<f64> {
        match self {
            Params::StructuralLogit(p) => structural_logit_ccp(p, f.llr, f.lpr),
            Params::StructuralProbit(b) => Ok(standard_normal_cdf(b.index(f.llr, f.lpr)?)),
            Params::CutoffRule(p) => cutoff_ccp(p, &f.trial),
            Params::Nn5(p) => {
                let ps = logistic(p.beliefs.index(f.llr, f.lpr)?);
                Ok(logistic(p.out_bias + p.out_weight * ps))
            }
            Params::RawLogit(g) => Ok(logistic(
                g.gamma0 + g.gamma_d * f64::from(f.trial.marked) + g.gamma_pi * f.trial.prior,
            )),
            Params::TransformedLogit(b) => {
                if !f.trial.has_interior_prior() {
                    return Err(Error::domain(
                        "transformed logit needs a prior strictly inside (0, 1)".to_string(),
                    ));
                }
                Ok(logistic(b.index(f.llr, f.lpr)?))
            }
        }
    }

    pub fn ccp_trial(&self, trial: &Trial) -> Result<f64> {
        self.ccp(&trial.features()?)
    }

    pub fn family(&self) -> &'static str {
        match self {
            Params::StructuralLogit(p) if p.eta > 0.0 => "mixed_logit",
            Params::StructuralLogit(_) => "structural_logit",
            Params::StructuralProbit(_) => "structural_probit",
            Params::CutoffRule(_) => "cutoff_rule",
            Params::Nn5(_) => "nn5",
            Params::RawLogit(_) => "raw_logit",
            Params::TransformedLogit(_) => "transformed_logit",
        }
    }

    /// Named natural-scale values, in a fixed order.
    pub fn estimates(&self) -> IndexMap<String, f64> {
        let mut out = IndexMap::new();
        let beliefs = |out: &mut IndexMap<String, f64>, b: &BeliefParams| {
            out.insert("beta0".into(), b.beta0);
            out.insert("beta1".into(), b.beta1);
            out.insert("beta2".into(), b.beta2);
        };
        match self {
            Params::StructuralLogit(p) => {
                beliefs(&mut out, &p.beliefs);
                out.insert("sigma".into(), p.sigma);
                out.insert("eta".into(), p.eta);
            }
            Params::StructuralProbit(b) | Params::TransformedLogit(b) => beliefs(&mut out, b),
            Params::CutoffRule(p) => {
                for (i, e) in p.cutoffs.iter().enumerate() {
                    out.insert(format!("c{i}[pi={}]", e.cell.prior), e.cutoff as f64);
                }
                out.insert("epsilon".into(), p.epsilon);
            }
            Params::Nn5(p) => {
                beliefs(&mut out, &p.beliefs);
                out.insert("w".into(), p.out_weight);
                out.insert("a".into(), p.out_bias);
            }
            Params::RawLogit(g) => {
                out.insert("gamma0".into(), g.gamma0);
                out.insert("gamma_d".into(), g.gamma_d);
                out.insert("gamma_pi".into(), g.gamma_pi);
            }
        }
        out
    }

    /// Canonical ordering key for mixture components: ascending noise, then
    /// LLR weight.
    pub fn sort_key(&self) -> (f64, f64) {
        match self {
            Params::StructuralLogit(p) => (p.sigma, p.beliefs.beta1),
            Params::StructuralProbit(b) | Params::TransformedLogit(b) => (0.0, b.beta1),
            Params::CutoffRule(p) => (p.epsilon, 0.0),
            Params::Nn5(p) => {
                let noise = if p.out_weight != 0.0 {
                    2.0 / p.out_weight.abs()
                } else {
                    f64::INFINITY
                };
                (noise, p.beliefs.beta1)
            }
            Params::RawLogit(g) => (0.0, g.gamma_d),
        }
    }
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    Normal::standard().cdf(x)
}

/// Subjective posterior `logistic(β0 + β1·LLR + β2·LPR + ν)`.
pub fn subjective_posterior(beliefs: &BeliefParams, llr: f64, lpr: f64, nu: f64) -> f64 {
    logistic(beliefs.beta0 + beliefs.beta1 * llr + beliefs.beta2 * lpr + nu)
}

/// Logit choice layer on a subjective posterior: `1 / (1 + exp((1 − 2Π_s)/σ))`.
/// `σ = 0` gives the deterministic rule with ½ at indifference.
pub fn choice_layer(subjective: f64, sigma: f64) -> f64 {
    let gap = REWARD * (2.0 * subjective - 1.0);
    if sigma == 0.0 {
        return step(gap);
    }
    logistic(gap / sigma)
}

fn step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Choice layer expressed on the belief index: `2·logistic(x) − 1 = tanh(x/2)`.
fn choice_layer_on_index(index: f64, sigma: f64) -> f64 {
    let gap = REWARD * (0.5 * index).tanh();
    if sigma == 0.0 {
        step(gap)
    } else {
        logistic(gap / sigma)
    }
}

fn structural_logit_ccp(p: &StructuralLogitParams, llr: f64, lpr: f64) -> Result<f64> {
    p.validate()?;
    let index = p.beliefs.index(llr, lpr)?;
    if p.eta == 0.0 || !index.is_finite() {
        return Ok(choice_layer_on_index(index, p.sigma));
    }
    if p.sigma == 0.0 {
        // deterministic choice: A iff index + η·ν > 0
        return Ok(standard_normal_cdf(index / p.eta));
    }
    let rule = GaussHermite::cached(p.nodes)?;
    Ok(rule.expectation(|z| choice_layer_on_index(index + p.eta * z, p.sigma)))
}

fn cutoff_ccp(p: &CutoffParams, trial: &Trial) -> Result<f64> {
    let cell = trial.cell();
    let cutoff = p.cutoff_for(&cell).ok_or_else(|| {
        Error::domain(format!(
            "no cutoff for prior {} under design ({}, {}, {})",
            cell.prior, cell.design.p_a, cell.design.p_b, cell.design.draws
        ))
    })?;
    let orientation = trial
        .design
        .orientation()
        .unwrap_or(CutoffOrientation::Above);
    Ok(if orientation.chooses_a(trial.marked, cutoff) {
        1.0 - p.epsilon / 2.0
    } else {
        p.epsilon / 2.0
    })
}

/// Structural logit with `η = 0`.
pub fn ccp_structural_logit(params: &StructuralLogitParams, trial: &Trial) -> Result<f64> {
    let f = trial.features()?;
    let p = StructuralLogitParams { eta: 0.0, ..*params };
    structural_logit_ccp(&p, f.llr, f.lpr)
}

/// Mixed logit: the structural logit CCP averaged over `ν ~ N(0, 1)` scaled
/// by `η`, integrated with a `nodes`-point Gauss–Hermite rule.
pub fn ccp_mixed(params: &StructuralLogitParams, trial: &Trial, nodes: usize) -> Result<f64> {
    GaussHermite::cached(nodes)?;
    let f = trial.features()?;
    structural_logit_ccp(&params.with_nodes(nodes), f.llr, f.lpr)
}

pub fn ccp_structural_probit(beliefs: &BeliefParams, trial: &Trial) -> Result<f64> {
    Params::StructuralProbit(*beliefs).ccp_trial(trial)
}

pub fn ccp_cutoff_rule(params: &CutoffParams, trial: &Trial) -> Result<f64> {
    cutoff_ccp(params, trial)
}

pub fn ccp_nn5(params: &Nn5Params, trial: &Trial) -> Result<f64> {
    Params::Nn5(*params).ccp_trial(trial)
}

pub fn ccp_reduced_logit(coeffs: ReducedCoeffs, trial: &Trial) -> Result<f64> {
    match coeffs {
        ReducedCoeffs::Raw(g) => Params::RawLogit(g).ccp_trial(trial),
        ReducedCoeffs::Transformed(b) => Params::TransformedLogit(b).ccp_trial(trial),
    }
}

/// Structural logit restricted to Bayesian beliefs with only `σ` free.
pub fn noisy_bayesian(sigma: f64, trial: &Trial) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("sigma = {sigma} must be positive")));
    }
    ccp_structural_logit(&StructuralLogitParams::noisy_bayes(sigma), trial)
}
