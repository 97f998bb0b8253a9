//! Maximum-likelihood estimation: pooled fits, finite mixtures by EM,
//! Estimation-Classification, covariance and the hypothesis tests used to
//! compare fitted models.
//!
//! Continuous parameters are optimized by multi-start Nelder–Mead on an
//! unconstrained scale (`σ = exp(s)`, `η = exp(h)`, mixture weights by
//! softmax with the last logit pinned at 0). Standard errors come from a
//! central-difference Hessian on that scale, mapped back by the delta method.
//!
//! When both `σ` and `η` are free, binary choices identify them only weakly:
//! the likelihood has a nearly flat ridge along which the two noise sources
//! trade off. Expect wide standard errors in that configuration.

pub(crate) mod covariance;
mod ec;
mod mixture;
mod mle;
pub(crate) mod inference;

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::Dataset;
use crate::models::{
    BeliefParams, Nn5Params, Params, RawLogitParams, StructuralLogitParams,
};
use crate::quadrature::{DEFAULT_NODES, MAX_NODES, MIN_NODES};

pub use covariance::{numerical_hessian, Covariance};
pub use ec::{fit_ec, fit_ec_from};
pub use mixture::{fit_mixture_em, fit_mixture_em_from};
pub use mle::{fit_mle, fit_weighted};
pub use inference::{
    covariance_and_wald, lr_aic, type_posteriors, vuong_test, vuong_test_params, LinearRestriction,
    LrTest, VuongTest, WaldTest,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub restarts: usize,
    /// Simplex iterations per Nelder–Mead run.
    pub max_iter: usize,
    /// EM sweeps or EC reassignment rounds.
    pub em_max_iter: usize,
    /// Relative log-likelihood convergence tolerance.
    pub ll_tol: f64,
    pub seed: u64,
    pub nodes: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 10,
            max_iter: 2000,
            em_max_iter: 500,
            ll_tol: 1e-9,
            seed: 0,
            nodes: DEFAULT_NODES,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::config("restarts must be at least 1"));
        }
        if !(self.ll_tol > 0.0) {
            return Err(Error::config("ll_tol must be positive"));
        }
        if self.max_iter == 0 || self.em_max_iter == 0 {
            return Err(Error::config("iteration limits must be positive"));
        }
        if !(MIN_NODES..=MAX_NODES).contains(&self.nodes) {
            return Err(Error::config(format!(
                "nodes must be in {MIN_NODES}..={MAX_NODES}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefRestriction {
    Free,
    /// `β = (0, 1, 1)`.
    Bayes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// `η = 0`, `σ` free.
    Logit,
    /// `σ` and `η` free, `ν` integrated by quadrature.
    Mixed,
}

/// A model family together with its parameter restrictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    StructuralLogit {
        beliefs: BeliefRestriction,
        noise: NoiseSpec,
    },
    StructuralProbit,
    CutoffRule,
    Nn5,
    RawLogit,
    TransformedLogit,
    /// Intercept-only logit: the same choice probability on every trial.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Transform {
    Identity,
    Log,
}

impl Transform {
    pub(crate) fn to_natural(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::Log => u.exp(),
        }
    }

    pub(crate) fn to_free(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.max(1e-300).ln(),
        }
    }
}

impl ModelSpec {
    pub const STRUCTURAL_LOGIT: ModelSpec = ModelSpec::StructuralLogit {
        beliefs: BeliefRestriction::Free,
        noise: NoiseSpec::Logit,
    };
    pub const MIXED_LOGIT: ModelSpec = ModelSpec::StructuralLogit {
        beliefs: BeliefRestriction::Free,
        noise: NoiseSpec::Mixed,
    };
    pub const NOISY_BAYES: ModelSpec = ModelSpec::StructuralLogit {
        beliefs: BeliefRestriction::Bayes,
        noise: NoiseSpec::Logit,
    };

    pub fn name(&self) -> String {
        match self {
            ModelSpec::StructuralLogit { beliefs, noise } => match (beliefs, noise) {
                (BeliefRestriction::Free, NoiseSpec::Logit) => "structural_logit",
                (BeliefRestriction::Free, NoiseSpec::Mixed) => "mixed_logit",
                (BeliefRestriction::Bayes, NoiseSpec::Logit) => "noisy_bayes",
                (BeliefRestriction::Bayes, NoiseSpec::Mixed) => "mixed_logit_bayes_beliefs",
            },
            ModelSpec::StructuralProbit => "structural_probit",
            ModelSpec::CutoffRule => "cutoff_rule",
            ModelSpec::Nn5 => "nn5",
            ModelSpec::RawLogit => "raw_logit",
            ModelSpec::TransformedLogit => "transformed_logit",
            ModelSpec::Constant => "constant",
        }
        .to_string()
    }

    /// Apply a `--restrict` option.
    pub fn restricted(self, restriction: &str) -> Result<ModelSpec> {
        match (self, restriction) {
            (ModelSpec::StructuralLogit { .. }, "noisy-bayes") => Ok(ModelSpec::NOISY_BAYES),
            (ModelSpec::StructuralLogit { noise, .. }, "bayes-beliefs") => {
                Ok(ModelSpec::StructuralLogit {
                    beliefs: BeliefRestriction::Bayes,
                    noise,
                })
            }
            (_, "noisy-bayes" | "bayes-beliefs") => Err(Error::config(format!(
                "restriction {restriction} applies only to the structural logit family"
            ))),
            _ => Err(Error::config(format!("unknown restriction {restriction}"))),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ModelSpec::CutoffRule)
    }

    /// Names of the continuously optimized parameters.
    pub fn free_names(&self) -> Vec<&'static str> {
        match self {
            ModelSpec::StructuralLogit { beliefs, noise } => {
                let mut names = match beliefs {
                    BeliefRestriction::Free => vec!["beta0", "beta1", "beta2"],
                    BeliefRestriction::Bayes => vec![],
                };
                names.push("sigma");
                if *noise == NoiseSpec::Mixed {
                    names.push("eta");
                }
                names
            }
            ModelSpec::StructuralProbit | ModelSpec::TransformedLogit => {
                vec!["beta0", "beta1", "beta2"]
            }
            ModelSpec::CutoffRule => vec!["epsilon"],
            ModelSpec::Nn5 => vec!["beta0", "beta1", "beta2", "w", "a"],
            ModelSpec::RawLogit => vec!["gamma0", "gamma_d", "gamma_pi"],
            ModelSpec::Constant => vec!["gamma0"],
        }
    }

    pub(crate) fn transforms(&self) -> Vec<Transform> {
        self.free_names()
            .iter()
            .map(|n| match *n {
                "sigma" | "eta" => Transform::Log,
                _ => Transform::Identity,
            })
            .collect()
    }

    /// Number of estimated parameters, counting one per cutoff cell for
    /// the cutoff rule.
    pub fn n_params(&self, data: &Dataset) -> usize {
        match self {
            ModelSpec::CutoffRule => mle::cells(data).len() + 1,
            _ => self.free_names().len(),
        }
    }

    pub(crate) fn default_start(&self) -> Vec<f64> {
        match self {
            ModelSpec::StructuralLogit { beliefs, noise } => {
                let mut v = match beliefs {
                    BeliefRestriction::Free => vec![0.0, 1.0, 1.0],
                    BeliefRestriction::Bayes => vec![],
                };
                v.push(0.3);
                if *noise == NoiseSpec::Mixed {
                    v.push(0.5);
                }
                v
            }
            ModelSpec::StructuralProbit | ModelSpec::TransformedLogit => vec![0.0, 1.0, 1.0],
            ModelSpec::CutoffRule => vec![0.2],
            ModelSpec::Nn5 => vec![0.0, 1.0, 1.0, 2.0 / 0.3, -1.0 / 0.3],
            ModelSpec::RawLogit => vec![0.0, 0.0, 0.0],
            ModelSpec::Constant => vec![0.0],
        }
    }

    /// Build parameters from natural-scale free values. Not valid for the
    /// cutoff rule, whose cutoffs are discrete.
    pub fn unpack(&self, natural: &[f64], nodes: usize) -> Result<Params> {
        let want = self.free_names().len();
        if natural.len() != want {
            return Err(Error::domain(format!(
                "{} expects {want} parameters, got {}",
                self.name(),
                natural.len()
            )));
        }
        let b = |v: &[f64]| BeliefParams::new(v[0], v[1], v[2]);
        Ok(match self {
            ModelSpec::StructuralLogit { beliefs, noise } => {
                let (beliefs, rest) = match beliefs {
                    BeliefRestriction::Free => (b(natural), &natural[3..]),
                    BeliefRestriction::Bayes => (BeliefParams::BAYES, natural),
                };
                let eta = if *noise == NoiseSpec::Mixed { rest[1] } else { 0.0 };
                Params::StructuralLogit(
                    StructuralLogitParams::new(beliefs, rest[0], eta).with_nodes(nodes),
                )
            }
            ModelSpec::StructuralProbit => Params::StructuralProbit(b(natural)),
            ModelSpec::TransformedLogit => Params::TransformedLogit(b(natural)),
            ModelSpec::Nn5 => Params::Nn5(Nn5Params {
                beliefs: b(natural),
                out_weight: natural[3],
                out_bias: natural[4],
            }),
            ModelSpec::RawLogit => Params::RawLogit(RawLogitParams {
                gamma0: natural[0],
                gamma_d: natural[1],
                gamma_pi: natural[2],
            }),
            ModelSpec::Constant => Params::RawLogit(RawLogitParams {
                gamma0: natural[0],
                gamma_d: 0.0,
                gamma_pi: 0.0,
            }),
            ModelSpec::CutoffRule => {
                return Err(Error::domain("cutoff rule parameters are not continuous"))
            }
        })
    }

    /// Natural-scale free values of `params`.
    pub fn pack(&self, params: &Params) -> Result<Vec<f64>> {
        let estimates = params.estimates();
        self.free_names()
            .iter()
            .map(|n| {
                estimates.get(*n).copied().ok_or_else(|| {
                    Error::domain(format!("{} has no parameter {n}", params.family()))
                })
            })
            .collect()
    }

    pub(crate) fn to_free(&self, natural: &[f64]) -> Vec<f64> {
        natural
            .iter()
            .zip(self.transforms())
            .map(|(x, t)| t.to_free(*x))
            .collect()
    }

    pub(crate) fn to_natural(&self, free: &[f64]) -> Vec<f64> {
        free.iter()
            .zip(self.transforms())
            .map(|(u, t)| t.to_natural(*u))
            .collect()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.replace('_', "-").as_str() {
            "logit" | "structural-logit" => ModelSpec::STRUCTURAL_LOGIT,
            "mixed" | "mixed-logit" => ModelSpec::MIXED_LOGIT,
            "noisy-bayes" => ModelSpec::NOISY_BAYES,
            "probit" | "structural-probit" => ModelSpec::StructuralProbit,
            "cutoff" | "cutoff-rule" => ModelSpec::CutoffRule,
            "nn5" => ModelSpec::Nn5,
            "raw-logit" => ModelSpec::RawLogit,
            "transformed-logit" => ModelSpec::TransformedLogit,
            "constant" => ModelSpec::Constant,
            other => return Err(Error::config(format!("unknown model {other}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mle,
    Em,
    Ec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Parameters at a boundary or degenerate data (e.g. all choices equal).
    pub boundary: bool,
    /// Observations whose choice probability was floored inside the log.
    pub clamped: usize,
    pub hessian_rank: Option<usize>,
    /// Best log-likelihood of each restart, in restart order.
    pub restart_logliks: Vec<f64>,
    /// Objective after every EM sweep or EC round.
    pub loglik_history: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Output of any estimator. One component for pooled fits, `K` for mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub estimates: Vec<IndexMap<String, f64>>,
    pub std_errors: IndexMap<String, f64>,
    pub loglik: f64,
    pub aic: f64,
    #[serde(rename = "lambda")]
    pub lambdas: Vec<f64>,
    pub assignments: Option<Vec<usize>>,
    pub tests: IndexMap<String, serde_json::Value>,
    pub n_params: usize,
    pub spec: ModelSpec,
    pub method: Method,
    pub type_posteriors: Option<Vec<Vec<f64>>>,
    pub n_subjects: usize,
    pub n_obs: usize,
    pub covariance: Option<Covariance>,
    pub components: Vec<Params>,
    pub diagnostics: Diagnostics,
}

pub fn aic(n_params: usize, loglik: f64) -> f64 {
    2.0 * (n_params as f64 - loglik)
}

impl FitResult {
    pub fn params(&self) -> Result<&Params> {
        match self.components.as_slice() {
            [p] => Ok(p),
            _ => Err(Error::Estimation(format!(
                "{} has {} types; a single-type fit is required",
                self.model,
                self.components.len()
            ))),
        }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub(crate) fn assemble(
        spec: ModelSpec,
        method: Method,
        components: Vec<Params>,
        lambdas: Vec<f64>,
        loglik: f64,
        n_params: usize,
        data: &Dataset,
    ) -> FitResult {
        let estimates = components.iter().map(Params::estimates).collect();
        FitResult {
            model: spec.name(),
            spec,
            method,
            estimates,
            std_errors: IndexMap::new(),
            loglik,
            n_params,
            aic: aic(n_params, loglik),
            lambdas,
            assignments: None,
            type_posteriors: None,
            tests: IndexMap::new(),
            n_subjects: data.n_subjects(),
            n_obs: data.n_trials(),
            covariance: None,
            components,
            diagnostics: Diagnostics::default(),
        }
    }

    pub(crate) fn set_covariance(&mut self, cov: Covariance) {
        self.std_errors = cov.std_errors();
        self.diagnostics.hessian_rank = Some(cov.rank);
        if cov.rank < cov.names.len() {
            self.diagnostics.warnings.push(format!(
                "Hessian rank {} < {} parameters; covariance uses a pseudo-inverse",
                cov.rank,
                cov.names.len()
            ));
        }
        self.covariance = Some(cov);
    }

    /// Reorder types by [`Params::sort_key`] so that repeated fits report
    /// components in the same order.
    pub(crate) fn sort_components(
        components: &mut Vec<Params>,
        lambdas: &mut Vec<f64>,
        columns: &mut [Vec<f64>],
    ) -> Vec<usize> {
        let mut order: Vec<usize> = (0..components.len()).collect();
        order.sort_by(|&a, &b| {
            let (ka, kb) = (components[a].sort_key(), components[b].sort_key());
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
        });
        *components = order.iter().map(|&i| components[i].clone()).collect();
        *lambdas = order.iter().map(|&i| lambdas[i]).collect();
        for row in columns.iter_mut() {
            *row = order.iter().map(|&i| row[i]).collect();
        }
        order
    }
}

#[cfg(test)]
mod unit {
    use super::*;

    #[test]
    fn model_names_parse() {
        assert_eq!("logit".parse::<ModelSpec>().unwrap(), ModelSpec::STRUCTURAL_LOGIT);
        assert_eq!("noisy_bayes".parse::<ModelSpec>().unwrap(), ModelSpec::NOISY_BAYES);
        assert!("tree".parse::<ModelSpec>().is_err());
        assert_eq!(
            ModelSpec::MIXED_LOGIT.restricted("bayes-beliefs").unwrap().free_names(),
            vec!["sigma", "eta"]
        );
        assert!(ModelSpec::StructuralProbit.restricted("noisy-bayes").is_err());
    }

    #[test]
    fn pack_unpack_roundtrip() {
        for spec in [
            ModelSpec::STRUCTURAL_LOGIT,
            ModelSpec::MIXED_LOGIT,
            ModelSpec::NOISY_BAYES,
            ModelSpec::StructuralProbit,
            ModelSpec::Nn5,
            ModelSpec::RawLogit,
            ModelSpec::TransformedLogit,
            ModelSpec::Constant,
        ] {
            let start = spec.default_start();
            let p = spec.unpack(&start, 32).unwrap();
            assert_eq!(spec.pack(&p).unwrap(), start, "{spec}");
            let free = spec.to_free(&start);
            let back = spec.to_natural(&free);
            for (a, b) in back.iter().zip(&start) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        assert!(FitConfig { restarts: 0, ..Default::default() }.validate().is_err());
        assert!(FitConfig { ll_tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(FitConfig { nodes: 4, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn aic_values() {
        assert_eq!(aic(4, -1773.0), 3554.0);
        assert_eq!(aic(1, -1801.0), 3604.0);
    }
}
