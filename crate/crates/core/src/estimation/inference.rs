use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::covariance::psd_inverse;
use super::mixture::responsibilities;
use super::{aic, FitResult};
use crate::error::{Error, Result};
use crate::likelihood::{loglik_matrix, trial_logliks, Dataset, MixtureSpec};
use crate::models::Params;

/// Linear restrictions `R·θ = r` on named natural-scale parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearRestriction {
    pub rows: Vec<(IndexMap<String, f64>, f64)>,
}

impl LinearRestriction {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `name = value`.
    pub fn fix(mut self, name: &str, value: f64) -> Self {
        let mut coeffs = IndexMap::new();
        coeffs.insert(name.to_string(), 1.0);
        self.rows.push((coeffs, value));
        self
    }

    /// Add `Σ c_i·θ_i = rhs`.
    pub fn row(mut self, coeffs: &[(&str, f64)], rhs: f64) -> Self {
        self.rows.push((
            coeffs.iter().map(|(n, c)| (n.to_string(), *c)).collect(),
            rhs,
        ));
        self
    }

    /// Bayesian beliefs: `β0 = 0, β1 = 1, β2 = 1`.
    pub fn bayes_beliefs() -> Self {
        Self::new().fix("beta0", 0.0).fix("beta1", 1.0).fix("beta2", 1.0)
    }

    /// Parse `name=value[,name=value...]`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for part in text.split(',').filter(|p| !p.trim().is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| Error::config(format!("restriction `{part}` is not name=value")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad value in restriction `{part}`")))?;
            out = out.fix(name.trim(), value);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Rank of `R·V·Rᵀ`; below `df` means a pseudo-inverse was used.
    pub rank: usize,
}

/// Natural-scale value of a covariance coordinate.
pub(crate) fn natural_value(result: &FitResult, name: &str) -> Option<f64> {
    if let Some(idx) = name.strip_prefix("lambda") {
        let k: usize = idx.parse().ok()?;
        return result.lambdas.get(k.checked_sub(1)?).copied();
    }
    if let Some(rest) = name.strip_prefix("type") {
        let (k, param) = rest.split_once('.')?;
        let k: usize = k.parse().ok()?;
        return result.estimates.get(k.checked_sub(1)?)?.get(param).copied();
    }
    result.estimates.first()?.get(name).copied()
}

/// Wald test of linear restrictions using the reported covariance.
pub fn covariance_and_wald(result: &FitResult, restrictions: &LinearRestriction) -> Result<WaldTest> {
    if restrictions.is_empty() {
        return Err(Error::config("Wald test needs at least one restriction"));
    }
    let cov = result.covariance.as_ref().ok_or_else(|| {
        Error::Estimation(format!("{} has no covariance (boundary fit?)", result.model))
    })?;
    let k = cov.names.len();
    let q = restrictions.len();
    let mut r_mat = DMatrix::zeros(q, k);
    let mut resid = DVector::zeros(q);
    for (i, (coeffs, rhs)) in restrictions.rows.iter().enumerate() {
        let mut value = 0.0;
        for (name, c) in coeffs {
            let j = cov.index_of(name).ok_or_else(|| {
                Error::config(format!("{} has no free parameter {name}", result.model))
            })?;
            r_mat[(i, j)] = *c;
            value += c * natural_value(result, name).unwrap_or(f64::NAN);
        }
        resid[i] = value - rhs;
    }
    let v = cov.to_dmatrix();
    let middle = &r_mat * v * r_mat.transpose();
    let rows: Vec<Vec<f64>> = (0..q)
        .map(|i| (0..q).map(|j| middle[(i, j)]).collect())
        .collect();
    let (inv, rank) = psd_inverse(&rows);
    let statistic = (resid.transpose() * inv * &resid)[(0, 0)];
    let p_value = ChiSquared::new(q as f64)
        .map_err(|e| Error::Estimation(e.to_string()))?
        .sf(statistic);
    Ok(WaldTest {
        statistic,
        df: q,
        p_value,
        rank,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub aic_full: f64,
    pub aic_restricted: f64,
    /// A slightly negative statistic (optimizer noise) was set to 0.
    pub clipped: bool,
}

/// Likelihood-ratio test of a restricted model nested in `full`. Nesting is
/// the caller's responsibility.
pub fn lr_aic(full: &FitResult, restricted: &FitResult) -> Result<LrTest> {
    if full.n_params <= restricted.n_params {
        return Err(Error::config(format!(
            "full model has {} parameters, restricted {}; nothing to test",
            full.n_params, restricted.n_params
        )));
    }
    let df = full.n_params - restricted.n_params;
    let mut statistic = 2.0 * (full.loglik - restricted.loglik);
    let mut clipped = false;
    if statistic < 0.0 {
        let tol = 1e-6 * full.loglik.abs().max(1.0);
        if statistic < -tol {
            return Err(Error::Estimation(format!(
                "restricted log-likelihood {} exceeds full {}; models not nested or fit not converged",
                restricted.loglik, full.loglik
            )));
        }
        statistic = 0.0;
        clipped = true;
    }
    let p_value = ChiSquared::new(df as f64)
        .map_err(|e| Error::Estimation(e.to_string()))?
        .sf(statistic);
    Ok(LrTest {
        statistic,
        df,
        p_value,
        aic_full: aic(full.n_params, full.loglik),
        aic_restricted: aic(restricted.n_params, restricted.loglik),
        clipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VuongTest {
    /// Positive favors model A.
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Non-nested comparison on per-trial log-likelihood differences.
pub fn vuong_test_params(a: &Params, b: &Params, data: &Dataset) -> Result<VuongTest> {
    let mut diffs = Vec::with_capacity(data.n_trials());
    for s in &data.subjects {
        let la = trial_logliks(a, s)?;
        let lb = trial_logliks(b, s)?;
        diffs.extend(la.iter().zip(&lb).map(|(x, y)| x - y));
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1e-300)) || sd == 0.0 {
        return Err(Error::Estimation(
            "per-trial log-likelihood differences have zero variance; Vuong statistic undefined"
                .into(),
        ));
    }
    let statistic = diffs.iter().sum::<f64>() / (n.sqrt() * sd);
    let p_value = 2.0 * Normal::standard().sf(statistic.abs());
    Ok(VuongTest {
        statistic,
        p_value,
        n: diffs.len(),
    })
}

pub fn vuong_test(a: &FitResult, b: &FitResult, data: &Dataset) -> Result<VuongTest> {
    vuong_test_params(a.params()?, b.params()?, data)
}

/// Posterior type probabilities per subject given population shares.
pub fn type_posteriors(spec: &MixtureSpec, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let matrix = loglik_matrix(&spec.components, data)?;
    Ok(responsibilities(&spec.lambdas, &matrix))
}
