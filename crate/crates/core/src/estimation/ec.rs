use rand::seq::SliceRandom;

use super::covariance::Covariance;
use super::mle::{fit_mle, fit_weighted, single_covariance};
use super::{FitConfig, FitResult, Method, ModelSpec};
use crate::error::{Error, Result};
use crate::likelihood::{best_response_assignments, loglik_matrix, Dataset};
use crate::models::Params;
use crate::par;
use crate::rng::{stream, Role};

const REFIT_ITER: usize = 400;

struct EcRun {
    components: Vec<Params>,
    assignments: Vec<usize>,
    loglik: f64,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    warnings: Vec<String>,
}

fn indicator(assignments: &[usize], k: usize) -> Vec<f64> {
    assignments
        .iter()
        .map(|&a| if a == k { 1.0 } else { 0.0 })
        .collect()
}

fn ec_total(matrix: &[Vec<f64>], assignments: &[usize]) -> f64 {
    let values: Vec<f64> = matrix
        .iter()
        .zip(assignments)
        .map(|(row, &a)| row[a])
        .collect();
    par::ordered_sum(&values)
}

fn run_ec(
    spec: &ModelSpec,
    data: &Dataset,
    mut components: Vec<Params>,
    config: &FitConfig,
) -> Result<EcRun> {
    let k = components.len();
    let mut matrix = loglik_matrix(&components, data)?;
    let mut assignments = best_response_assignments(&matrix);
    let mut best = (ec_total(&matrix, &assignments), components.clone(), assignments.clone());
    let mut history = vec![best.0];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.em_max_iter {
        iterations += 1;
        for (j, theta) in components.iter_mut().enumerate() {
            let w = indicator(&assignments, j);
            if w.iter().all(|&v| v == 0.0) {
                continue;
            }
            *theta = fit_weighted(spec, data, &w, theta, config, REFIT_ITER)?.params;
        }
        matrix = loglik_matrix(&components, data)?;
        let next = best_response_assignments(&matrix);
        let ll = ec_total(&matrix, &next);
        history.push(ll);
        if ll > best.0 {
            best = (ll, components.clone(), next.clone());
        }
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    if !converged {
        warnings.push(format!(
            "assignments still changing after {} rounds; reporting best seen",
            config.em_max_iter
        ));
    }
    let empty = (0..k)
        .filter(|&j| !best.2.contains(&j))
        .count();
    if empty > 0 {
        warnings.push(format!("{empty} type(s) have no assigned subjects"));
    }
    Ok(EcRun {
        components: best.1,
        assignments: best.2,
        loglik: best.0,
        history,
        iterations,
        converged,
        warnings,
    })
}

/// Estimation-Classification: alternate hard assignment of each subject to
/// its best-fitting type with refitting each type on its subjects.
pub fn fit_ec(spec: &ModelSpec, k: usize, data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if k == 0 {
        return Err(Error::config("EC needs K >= 1"));
    }
    if k == 1 {
        let mut fit = fit_mle(spec, data, config)?;
        fit.method = Method::Ec;
        fit.assignments = Some(vec![0; data.n_subjects()]);
        fit.type_posteriors = Some(vec![vec![1.0]; data.n_subjects()]);
        return Ok(fit);
    }
    if data.n_subjects() < k {
        return Err(Error::config(format!(
            "EC needs at least {k} subjects, got {}",
            data.n_subjects()
        )));
    }
    data.require_interior_priors()?;
    let pooled_config = FitConfig {
        restarts: config.restarts.min(3),
        ..config.clone()
    };
    let pooled = fit_mle(spec, data, &pooled_config)?.components.remove(0);
    let s = data.n_subjects();
    let starts = (0..config.restarts)
        .map(|r| {
            let mut order: Vec<usize> = (0..s).collect();
            order.shuffle(&mut stream(config.seed, r as u64, Role::Partition));
            let mut assignment = vec![0; s];
            for (pos, &subject) in order.iter().enumerate() {
                assignment[subject] = pos % k;
            }
            (0..k)
                .map(|j| {
                    fit_weighted(spec, data, &indicator(&assignment, j), &pooled, config, REFIT_ITER)
                        .map(|f| f.params)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    fit_ec_starts(spec, data, starts, config)
}

/// EC warm-started from given types, e.g. a finite-mixture solution.
pub fn fit_ec_from(
    spec: &ModelSpec,
    components: Vec<Params>,
    data: &Dataset,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    data.require_interior_priors()?;
    fit_ec_starts(spec, data, vec![components], config)
}

fn fit_ec_starts(
    spec: &ModelSpec,
    data: &Dataset,
    starts: Vec<Vec<Params>>,
    config: &FitConfig,
) -> Result<FitResult> {
    let runs = par::map(&starts, |c| run_ec(spec, data, c.clone(), config))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let restart_lls: Vec<f64> = runs.iter().map(|r| r.loglik).collect();
    let best = runs
        .into_iter()
        .enumerate()
        .max_by(|a, b| a.1.loglik.total_cmp(&b.1.loglik).then(b.0.cmp(&a.0)))
        .map(|(_, r)| r)
        .ok_or_else(|| Error::Estimation("no EC runs".into()))?;
    let EcRun {
        mut components,
        assignments,
        loglik,
        history,
        iterations,
        converged,
        warnings,
    } = best;

    let k = components.len();
    let s = data.n_subjects();
    let mut lambdas: Vec<f64> = (0..k)
        .map(|j| assignments.iter().filter(|&&a| a == j).count() as f64 / s as f64)
        .collect();
    let mut posteriors: Vec<Vec<f64>> = assignments
        .iter()
        .map(|&a| (0..k).map(|j| if j == a { 1.0 } else { 0.0 }).collect())
        .collect();
    let order = FitResult::sort_components(&mut components, &mut lambdas, &mut posteriors);
    let relabel: Vec<usize> = {
        let mut inv = vec![0; k];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        assignments.iter().map(|&a| inv[a]).collect()
    };

    let n_params = k * spec.n_params(data);
    let mut result = FitResult::assemble(*spec, Method::Ec, components, lambdas, loglik, n_params, data);
    let blocks = result
        .components
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let w = indicator(&relabel, j);
            single_covariance(spec, c, data, Some(&w), config.nodes, &format!("type{}.", j + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    result.set_covariance(Covariance::block_diagonal(blocks));
    result.assignments = Some(relabel);
    result.type_posteriors = Some(posteriors);
    result.diagnostics.converged = converged;
    result.diagnostics.iterations = iterations;
    result.diagnostics.loglik_history = history;
    result.diagnostics.restart_logliks = restart_lls;
    result.diagnostics.warnings.extend(warnings);
    Ok(result)
}
