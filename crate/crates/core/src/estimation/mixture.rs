use rand::seq::SliceRandom;

use super::covariance::{delta_covariance, Covariance};
use super::mle::{fit_mle, fit_weighted};
use super::{FitConfig, FitResult, Method, ModelSpec};
use crate::error::{Error, Result};
use crate::likelihood::{log_sum_exp, loglik_matrix, mixture_loglik_from_matrix, Dataset};
use crate::models::{CutoffParams, Params};
use crate::par;
use crate::rng::{stream, Role};

/// Simplex iterations per M-step. EM revisits each type every sweep, so a
/// partial maximization is enough.
const M_STEP_ITER: usize = 300;
/// Types whose total responsibility falls below this are dropped.
const EMPTY_COMPONENT: f64 = 1e-6;

/// Row-normalized `λ_k exp(LL_sk)`.
pub(crate) fn responsibilities(lambdas: &[f64], matrix: &[Vec<f64>]) -> Vec<Vec<f64>> {
    matrix
        .iter()
        .map(|row| {
            let terms: Vec<f64> = row
                .iter()
                .zip(lambdas)
                .map(|(ll, &l)| if l > 0.0 { l.ln() + ll } else { f64::NEG_INFINITY })
                .collect();
            let norm = log_sum_exp(&terms);
            terms.iter().map(|t| (t - norm).exp()).collect()
        })
        .collect()
}

/// Random split of subjects into `k` non-empty groups, each fitted from the
/// pooled estimate.
fn partition_start(
    spec: &ModelSpec,
    k: usize,
    data: &Dataset,
    pooled: &Params,
    config: &FitConfig,
    restart: usize,
) -> Result<Vec<Params>> {
    let s = data.n_subjects();
    let mut order: Vec<usize> = (0..s).collect();
    order.shuffle(&mut stream(config.seed, restart as u64, Role::Partition));
    let mut groups = vec![vec![0.0; s]; k];
    for (pos, &subject) in order.iter().enumerate() {
        groups[pos % k][subject] = 1.0;
    }
    groups
        .iter()
        .map(|w| fit_weighted(spec, data, w, pooled, config, M_STEP_ITER).map(|f| f.params))
        .collect()
}

struct EmRun {
    components: Vec<Params>,
    lambdas: Vec<f64>,
    loglik: f64,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    warnings: Vec<String>,
}

fn run_em(
    spec: &ModelSpec,
    data: &Dataset,
    mut components: Vec<Params>,
    mut lambdas: Vec<f64>,
    config: &FitConfig,
) -> Result<EmRun> {
    let mut matrix = loglik_matrix(&components, data)?;
    let mut ll = mixture_loglik_from_matrix(&lambdas, &matrix);
    let mut history = vec![ll];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let s = data.n_subjects() as f64;

    while iterations < config.em_max_iter {
        iterations += 1;
        let resp = responsibilities(&lambdas, &matrix);
        for (k, lambda) in lambdas.iter_mut().enumerate() {
            *lambda = resp.iter().map(|r| r[k]).sum::<f64>() / s;
        }
        // drop empty types
        let keep: Vec<usize> = (0..components.len())
            .filter(|&k| lambdas[k] * s >= EMPTY_COMPONENT)
            .collect();
        if keep.len() < components.len() {
            warnings.push(format!(
                "dropped {} empty component(s) at sweep {iterations}",
                components.len() - keep.len()
            ));
        }
        let weights: Vec<Vec<f64>> = keep
            .iter()
            .map(|&k| resp.iter().map(|r| r[k]).collect())
            .collect();
        components = keep.iter().map(|&k| components[k].clone()).collect();
        lambdas = keep.iter().map(|&k| lambdas[k]).collect();
        let norm: f64 = lambdas.iter().sum();
        lambdas.iter_mut().for_each(|l| *l /= norm);

        for (theta, w) in components.iter_mut().zip(&weights) {
            let fit = fit_weighted(spec, data, w, theta, config, M_STEP_ITER)?;
            *theta = fit.params;
        }

        matrix = loglik_matrix(&components, data)?;
        let next = mixture_loglik_from_matrix(&lambdas, &matrix);
        if next < ll - 1e-9 * ll.abs().max(1.0) && keep.len() == weights.len() {
            warnings.push(format!(
                "log-likelihood decreased at sweep {iterations}: {ll} -> {next}"
            ));
        }
        history.push(next);
        let change = (next - ll).abs() / ll.abs().max(1e-300);
        ll = next;
        if change < config.ll_tol {
            converged = true;
            break;
        }
    }

    Ok(EmRun {
        components,
        lambdas,
        loglik: ll,
        history,
        iterations,
        converged,
        warnings,
    })
}

/// Finite-mixture MLE by EM. Restarts begin from random subject partitions;
/// the run with the highest mixture log-likelihood is reported with types
/// in canonical order.
pub fn fit_mixture_em(
    spec: &ModelSpec,
    k: usize,
    data: &Dataset,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    if k == 0 {
        return Err(Error::config("mixture needs K >= 1"));
    }
    if k == 1 {
        let mut fit = fit_mle(spec, data, config)?;
        fit.method = Method::Em;
        fit.type_posteriors = Some(vec![vec![1.0]; data.n_subjects()]);
        return Ok(fit);
    }
    if data.n_subjects() < k {
        return Err(Error::config(format!(
            "{} subjects cannot identify {k} types",
            data.n_subjects()
        )));
    }
    data.require_interior_priors()?;
    let pooled_config = FitConfig {
        restarts: config.restarts.min(3),
        ..config.clone()
    };
    let pooled = fit_mle(spec, data, &pooled_config)?.components.remove(0);
    let starts = (0..config.restarts)
        .map(|r| partition_start(spec, k, data, &pooled, config, r))
        .collect::<Result<Vec<_>>>()?;
    fit_mixture_em_from_starts(spec, data, starts, config)
}

/// EM from given starting types with equal weights.
pub fn fit_mixture_em_from(
    spec: &ModelSpec,
    components: Vec<Params>,
    data: &Dataset,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    data.require_interior_priors()?;
    fit_mixture_em_from_starts(spec, data, vec![components], config)
}

fn fit_mixture_em_from_starts(
    spec: &ModelSpec,
    data: &Dataset,
    starts: Vec<Vec<Params>>,
    config: &FitConfig,
) -> Result<FitResult> {
    let runs = par::map(&starts, |components| {
        let k = components.len();
        run_em(spec, data, components.clone(), vec![1.0 / k as f64; k], config)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let restart_lls: Vec<f64> = runs.iter().map(|r| r.loglik).collect();
    let best = runs
        .into_iter()
        .enumerate()
        .max_by(|a, b| a.1.loglik.total_cmp(&b.1.loglik).then(b.0.cmp(&a.0)))
        .map(|(_, r)| r)
        .ok_or_else(|| Error::Estimation("no EM runs".into()))?;

    let EmRun {
        mut components,
        mut lambdas,
        loglik,
        history,
        iterations,
        converged,
        mut warnings,
    } = best;
    let matrix = loglik_matrix(&components, data)?;
    let mut posteriors = responsibilities(&lambdas, &matrix);
    FitResult::sort_components(&mut components, &mut lambdas, &mut posteriors);

    let k = components.len();
    let per_type = spec.n_params(data);
    let n_params = k * per_type + (k - 1);
    let mut result =
        FitResult::assemble(*spec, Method::Em, components, lambdas, loglik, n_params, data);
    if !converged {
        warnings.push(format!(
            "EM did not converge within {} sweeps",
            config.em_max_iter
        ));
    }
    let cov = mixture_covariance(spec, &result.components, &result.lambdas, data, config.nodes)?;
    result.set_covariance(cov);
    result.type_posteriors = Some(posteriors);
    result.diagnostics.converged = converged;
    result.diagnostics.iterations = iterations;
    result.diagnostics.loglik_history = history;
    result.diagnostics.restart_logliks = restart_lls;
    result.diagnostics.warnings.extend(warnings);
    Ok(result)
}

/// Softmax with the last logit fixed at zero.
fn softmax_last_zero(z: &[f64]) -> Vec<f64> {
    let mut logits = z.to_vec();
    logits.push(0.0);
    let norm = log_sum_exp(&logits);
    logits.iter().map(|v| (v - norm).exp()).collect()
}

/// Joint covariance of all type parameters and weights.
fn mixture_covariance(
    spec: &ModelSpec,
    components: &[Params],
    lambdas: &[f64],
    data: &Dataset,
    nodes: usize,
) -> Result<Covariance> {
    let k = components.len();
    let names_one = spec.free_names();
    let p = names_one.len();
    let mut u = Vec::with_capacity(k * p + k - 1);
    for c in components {
        match c {
            Params::CutoffRule(cp) => u.push(cp.epsilon),
            _ => u.extend(spec.to_free(&spec.pack(c)?)),
        }
    }
    let last = lambdas[k - 1].max(1e-300).ln();
    u.extend(lambdas[..k - 1].iter().map(|l| l.max(1e-300).ln() - last));

    let natural = |u: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(k * p + k);
        for j in 0..k {
            let block = &u[j * p..(j + 1) * p];
            if spec.is_discrete() {
                out.extend_from_slice(block);
            } else {
                out.extend(spec.to_natural(block));
            }
        }
        out.extend(softmax_last_zero(&u[k * p..]));
        out
    };
    let unpack_all = |u: &[f64]| -> Option<(Vec<Params>, Vec<f64>)> {
        let mut comps = Vec::with_capacity(k);
        for (j, c) in components.iter().enumerate() {
            let block = &u[j * p..(j + 1) * p];
            let params = match c {
                Params::CutoffRule(cp) => Params::CutoffRule(CutoffParams {
                    epsilon: block[0],
                    ..cp.clone()
                }),
                _ => spec.unpack(&spec.to_natural(block), nodes).ok()?,
            };
            comps.push(params);
        }
        Some((comps, softmax_last_zero(&u[k * p..])))
    };
    let neg_ll = |u: &[f64]| -> f64 {
        let Some((comps, lam)) = unpack_all(u) else {
            return f64::INFINITY;
        };
        loglik_matrix(&comps, data)
            .map(|m| -mixture_loglik_from_matrix(&lam, &m))
            .unwrap_or(f64::INFINITY)
    };
    let mut names: Vec<String> = (1..=k)
        .flat_map(|j| names_one.iter().map(move |n| format!("type{j}.{n}")))
        .collect();
    names.extend((1..=k).map(|j| format!("lambda{j}")));
    Ok(delta_covariance(neg_ll, natural, &u, names))
}
