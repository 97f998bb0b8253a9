//! Elicited beliefs under the Becker–DeGroot–Marschak mechanism.
//!
//! A reported probability `p_r` of cage A is scored by a second-stage
//! lottery that makes truthful reporting optimal. Reports are then modeled
//! on the log-odds scale as `β0 + β1·LLR + β2·LPR + ν`, `ν ~ N(0, η²)`, with
//! reports of exactly 0 or 1 treated as censored at the smallest and largest
//! interior reports.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::design::{choice_from_posterior, logistic, logit, Choice, Features, Trial};
use crate::error::{Error, Result};
use crate::estimation::covariance::{delta_covariance, Covariance};
use crate::estimation::FitConfig;
use crate::models::BeliefParams;
use crate::optim::{minimize, NelderMeadOptions};

/// Smallest number of interior reports that can identify `(β, η)`.
pub const MIN_INTERIOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportTrial {
    pub trial: Trial,
    /// Stated probability of cage A.
    pub report: f64,
}

impl ReportTrial {
    pub fn new(trial: Trial, report: f64) -> Result<Self> {
        let rt = ReportTrial { trial, report };
        rt.validate()?;
        Ok(rt)
    }

    pub fn validate(&self) -> Result<()> {
        self.trial.validate()?;
        if !(0.0..=1.0).contains(&self.report) {
            return Err(Error::domain(format!("report {} outside [0, 1]", self.report)));
        }
        Ok(())
    }
}

/// Expected payoff of reporting `report` when the subjective probability of
/// cage A is `subjective`: `R·[(1 − p_r²)/2 + p_r·Π_s]`.
pub fn bdm_expected_payoff(report: f64, subjective: f64, reward: f64) -> f64 {
    reward * ((1.0 - report * report) / 2.0 + report * subjective)
}

/// The payoff derivative `R·(Π_s − p_r)` vanishes at `p_r = Π_s` and the
/// payoff is strictly concave, so truth-telling is the unique optimum.
pub fn bdm_optimal_report(subjective: f64) -> f64 {
    subjective
}

/// What to do with reports of exactly 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensorMode {
    #[default]
    Censor,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefFit {
    pub beliefs: BeliefParams,
    pub eta: f64,
    /// Censoring thresholds: smallest and largest interior report.
    pub lower: f64,
    pub upper: f64,
    pub loglik: f64,
    pub std_errors: IndexMap<String, f64>,
    pub covariance: Option<Covariance>,
    pub n: usize,
    pub n_censored: usize,
    pub mode: CensorMode,
}

struct Row {
    x: [f64; 3],
    kind: Obs,
}

#[derive(Clone, Copy)]
enum Obs {
    Interior(f64),
    Below,
    Above,
}

fn rows(data: &[ReportTrial], mode: CensorMode) -> Result<Vec<Row>> {
    let mut out = Vec::with_capacity(data.len());
    for (i, rt) in data.iter().enumerate() {
        rt.validate()?;
        let f = rt.trial.features()?;
        if !f.llr.is_finite() || !f.lpr.is_finite() {
            return Err(Error::Estimation(format!(
                "report {}: log odds covariates are infinite (prior {}, marked {})",
                i + 1,
                rt.trial.prior,
                rt.trial.marked
            )));
        }
        let kind = if rt.report <= 0.0 {
            Obs::Below
        } else if rt.report >= 1.0 {
            Obs::Above
        } else {
            Obs::Interior(logit(rt.report))
        };
        if mode == CensorMode::Drop && !matches!(kind, Obs::Interior(_)) {
            continue;
        }
        out.push(Row {
            x: [1.0, f.llr, f.lpr],
            kind,
        });
    }
    Ok(out)
}

fn ln_normal_cdf(z: f64) -> f64 {
    (0.5 * erfc(-z / std::f64::consts::SQRT_2)).max(1e-300).ln()
}

/// Log-likelihood of one report on the log-odds scale.
fn row_loglik(row: &Row, beta: &[f64], eta: f64, lo: f64, hi: f64) -> f64 {
    let xb = row.x[0] * beta[0] + row.x[1] * beta[1] + row.x[2] * beta[2];
    match row.kind {
        Obs::Interior(y) => {
            let z = (y - xb) / eta;
            -0.5 * z * z - eta.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        }
        Obs::Below => ln_normal_cdf((lo - xb) / eta),
        Obs::Above => ln_normal_cdf(-(hi - xb) / eta),
    }
}

/// Log-likelihood contribution of a single report given `(β, η)` and the
/// censoring thresholds on the probability scale.
pub fn report_loglik(
    rt: &ReportTrial,
    beliefs: &BeliefParams,
    eta: f64,
    lower: f64,
    upper: f64,
) -> Result<f64> {
    let rs = rows(std::slice::from_ref(rt), CensorMode::Censor)?;
    let beta = [beliefs.beta0, beliefs.beta1, beliefs.beta2];
    Ok(row_loglik(&rs[0], &beta, eta, logit(lower), logit(upper)))
}

fn ols(rows: &[Row]) -> Result<(Vec<f64>, f64, DMatrix<f64>)> {
    let n = rows.len();
    let x = DMatrix::from_fn(n, 3, |i, j| rows[i].x[j]);
    let y = DVector::from_iterator(
        n,
        rows.iter().map(|r| match r.kind {
            Obs::Interior(v) => v,
            _ => f64::NAN,
        }),
    );
    let xtx = x.transpose() * &x;
    let xtx_inv = xtx.clone().try_inverse().ok_or_else(|| {
        Error::Estimation(
            "belief regressors are collinear (constant LLR or LPR across reports)".into(),
        )
    })?;
    let beta = &xtx_inv * (x.transpose() * &y);
    let resid = &y - &x * &beta;
    let rss = resid.dot(&resid);
    Ok((beta.iter().copied().collect(), rss, xtx_inv))
}

/// Censored-normal regression of report log-odds on `(1, LLR, LPR)`.
pub fn fit_belief_regression(
    data: &[ReportTrial],
    config: &FitConfig,
    mode: CensorMode,
) -> Result<BeliefFit> {
    config.validate()?;
    let all = rows(data, mode)?;
    let interior: Vec<f64> = all
        .iter()
        .filter_map(|r| match r.kind {
            Obs::Interior(y) => Some(y),
            _ => None,
        })
        .collect();
    if interior.is_empty() && !all.is_empty() {
        return Err(Error::Estimation("every report is censored at 0 or 1".into()));
    }
    if interior.len() < MIN_INTERIOR {
        return Err(Error::Estimation(format!(
            "need at least {MIN_INTERIOR} interior reports, got {}",
            interior.len()
        )));
    }
    let lo = interior.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = interior.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = all.len();
    let n_censored = n - interior.len();
    let names: Vec<String> = ["beta0", "beta1", "beta2", "eta"].map(String::from).to_vec();

    let uncensored: Vec<Row> = all
        .iter()
        .filter(|r| matches!(r.kind, Obs::Interior(_)))
        .map(|r| Row { x: r.x, kind: r.kind })
        .collect();
    let (beta_ols, rss, xtx_inv) = ols(&uncensored)?;
    let m = uncensored.len() as f64;

    let (beta, eta, loglik, covariance) = if n_censored == 0 {
        let eta = (rss / m).sqrt();
        let loglik = if eta > 0.0 {
            all.iter().map(|r| row_loglik(r, &beta_ols, eta, lo, hi)).sum()
        } else {
            f64::INFINITY
        };
        // small-sample residual variance for the slope covariance
        let s2 = if m > 3.0 { rss / (m - 3.0) } else { f64::NAN };
        let mut matrix = vec![vec![0.0; 4]; 4];
        for i in 0..3 {
            for j in 0..3 {
                matrix[i][j] = s2 * xtx_inv[(i, j)];
            }
        }
        matrix[3][3] = eta * eta / (2.0 * m);
        (
            beta_ols,
            eta,
            loglik,
            Covariance {
                names,
                matrix,
                rank: 4,
            },
        )
    } else {
        let neg_ll = |u: &[f64]| -> f64 {
            let eta = u[3].exp();
            let ll: f64 = all.iter().map(|r| row_loglik(r, &u[..3], eta, lo, hi)).sum();
            if ll.is_finite() {
                -ll
            } else {
                f64::INFINITY
            }
        };
        let start_eta = (rss / m).sqrt().max(1e-3);
        let x0 = [beta_ols[0], beta_ols[1], beta_ols[2], start_eta.ln()];
        let opts = NelderMeadOptions {
            max_iter: config.max_iter,
            f_tol: config.ll_tol,
            ..NelderMeadOptions::default()
        };
        let res = minimize(neg_ll, &x0, &opts);
        let natural = |u: &[f64]| vec![u[0], u[1], u[2], u[3].exp()];
        let cov = delta_covariance(neg_ll, natural, &res.x, names);
        (res.x[..3].to_vec(), res.x[3].exp(), -res.f, cov)
    };

    let std_errors = covariance.std_errors();
    Ok(BeliefFit {
        beliefs: BeliefParams::new(beta[0], beta[1], beta[2]),
        eta,
        lower: logistic(lo),
        upper: logistic(hi),
        loglik,
        std_errors,
        covariance: Some(covariance),
        n,
        n_censored,
        mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedChoice {
    pub choice: Choice,
    /// `logistic(β0 + β1·LLR + β2·LPR)`; the noise is symmetric so this is
    /// the median report for any `η`.
    pub median: f64,
}

/// Binary choice implied by a report (or by the predicted median when no
/// report is given). A report of exactly ½ counts as A.
pub fn implied_choice_and_median(
    beliefs: &BeliefParams,
    trial: &Trial,
    report: Option<f64>,
) -> Result<ImpliedChoice> {
    let f: Features = trial.features()?;
    let median = logistic(beliefs.index(f.llr, f.lpr)?);
    let value = report.unwrap_or(median);
    Ok(ImpliedChoice {
        choice: choice_from_posterior(value),
        median,
    })
}
