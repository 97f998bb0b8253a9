//! Structural models of Bayesian classification in two-cage binomial
//! experiments.
//!
//! A subject sees a prior on cage A and a sample of balls drawn with
//! replacement from one of two cages, then names the cage they believe
//! produced it. This crate covers:
//!
//! - exact Bayes posteriors, optimal choices and cutoffs ([`design`]);
//! - choice-probability models: structural logit and its mixed, probit,
//!   neural-network and noisy-Bayes variants, and the integer cutoff rule
//!   ([`models`]);
//! - panel, finite-mixture and Estimation-Classification likelihoods
//!   ([`likelihood`]) with their estimators and tests ([`estimation`]);
//! - win/loss, efficiency and accuracy ([`metrics`]);
//! - elicited beliefs under the BDM mechanism ([`beliefs`]);
//! - simulation and parameter recovery ([`simulate`]);
//! - CSV/JSON I/O and the command line ([`io`], [`cli`]).

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beliefs;
pub mod cli;
pub mod design;
pub mod error;
pub mod estimation;
pub mod io;
pub mod likelihood;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod simulate;

pub use design::{
    bayes_choice, bayes_cutoff, bayes_posterior, binomial_pmf, llr, lpr, Choice, Design, Trial,
};
pub use error::{Error, Result};
pub use estimation::{fit_ec, fit_mixture_em, fit_mle, FitConfig, FitResult, ModelSpec};
pub use likelihood::{Dataset, MixtureSpec, Subject};
pub use models::{BeliefParams, Params, StructuralLogitParams};
