use rand_distr::{Distribution, StandardNormal};

use super::covariance::{delta_covariance, Covariance};
use super::{FitConfig, FitResult, Method, ModelSpec, Transform};
use crate::design::{bayes_cutoff, Cell};
use crate::error::{Error, Result};
use crate::likelihood::{panel_loglik, weighted_panel_loglik, CountTable, Dataset};
use crate::models::{CellCutoff, CutoffParams, Params};
use crate::optim::{minimize, NelderMeadOptions};
use crate::par;
use crate::rng::{stream, Role};

/// Outcome of a single weighted maximization.
#[derive(Debug, Clone)]
pub struct WeightedFit {
    pub params: Params,
    /// Weighted log-likelihood at `params`.
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub(crate) fn cells(data: &Dataset) -> Vec<Cell> {
    let mut out: Vec<Cell> = Vec::new();
    for (f, _) in data.features() {
        let cell = f.trial.cell();
        if !out.contains(&cell) {
            out.push(cell);
        }
    }
    out
}

pub(crate) fn nm_options(config: &FitConfig, max_iter: usize) -> NelderMeadOptions {
    NelderMeadOptions {
        max_iter,
        f_tol: config.ll_tol,
        x_tol: 1e-7,
        step: 0.5,
        restarts: 1,
    }
}

fn objective<'a>(
    spec: &'a ModelSpec,
    data: &'a Dataset,
    weights: Option<&'a [f64]>,
    nodes: usize,
) -> impl Fn(&[f64]) -> f64 + 'a {
    let table = CountTable::new(data, weights);
    move |u: &[f64]| {
        let Ok(table) = table.as_ref() else {
            return f64::INFINITY;
        };
        let natural = spec.to_natural(u);
        let Ok(params) = spec.unpack(&natural, nodes) else {
            return f64::INFINITY;
        };
        table.loglik(&params).map_or(f64::INFINITY, |v| -v)
    }
}

/// Maximize `Σ_s w_s·LL_s(θ)` starting from `start`. The result is never
/// worse than the start.
pub fn fit_weighted(
    spec: &ModelSpec,
    data: &Dataset,
    weights: &[f64],
    start: &Params,
    config: &FitConfig,
    max_iter: usize,
) -> Result<WeightedFit> {
    if spec.is_discrete() {
        let params = fit_cutoff(data, weights)?;
        let loglik = weighted_panel_loglik(&params, data, weights)?;
        return Ok(WeightedFit {
            params,
            loglik,
            converged: true,
            iterations: 1,
        });
    }
    let u0 = spec.to_free(&spec.pack(start)?);
    let f = objective(spec, data, Some(weights), config.nodes);
    let r = minimize(&f, &u0, &nm_options(config, max_iter));
    Ok(WeightedFit {
        params: spec.unpack(&spec.to_natural(&r.x), config.nodes)?,
        loglik: -r.f,
        converged: r.converged,
        iterations: r.iterations,
    })
}

/// Exact weighted MLE of the cutoff rule: per cell, the cutoff maximizing
/// weighted agreement; then the guessing rate from the overall agreement.
pub(crate) fn fit_cutoff(data: &Dataset, weights: &[f64]) -> Result<Params> {
    let cells = cells(data);
    // weighted count of A and B choices at each (cell, d)
    let mut counts: Vec<Vec<(f64, f64)>> = cells
        .iter()
        .map(|c| vec![(0.0, 0.0); c.design.draws as usize + 1])
        .collect();
    for (s, subject) in data.subjects.iter().enumerate() {
        let w = weights[s];
        for (f, y) in subject.observations() {
            let ci = cells.iter().position(|c| *c == f.trial.cell()).expect("cell listed");
            let slot = &mut counts[ci][f.trial.marked as usize];
            if y {
                slot.0 += w;
            } else {
                slot.1 += w;
            }
        }
    }
    let mut total = 0.0;
    let mut matched = 0.0;
    let mut cutoffs = Vec::with_capacity(cells.len());
    for (cell, by_d) in cells.iter().zip(&counts) {
        let orientation = cell
            .design
            .orientation()
            .ok_or_else(|| Error::Estimation("cutoff rule needs p_a != p_b".into()))?;
        let bayes = bayes_cutoff(&cell.design, cell.prior)?;
        let agreement = |c: i64| -> f64 {
            by_d.iter()
                .enumerate()
                .map(|(d, &(a, b))| {
                    if orientation.chooses_a(d as u32, c) {
                        a
                    } else {
                        b
                    }
                })
                .sum()
        };
        let mut best = (bayes, agreement(bayes));
        for c in orientation.range(cell.design.draws) {
            let m = agreement(c);
            if m > best.1 + 1e-12 * best.1.abs().max(1.0) {
                best = (c, m);
            }
        }
        total += by_d.iter().map(|(a, b)| a + b).sum::<f64>();
        matched += best.1;
        cutoffs.push(CellCutoff {
            cell: *cell,
            cutoff: best.0,
        });
    }
    let epsilon = if total > 0.0 {
        (2.0 * (total - matched) / total).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(Params::CutoffRule(CutoffParams::new(cutoffs, epsilon)?))
}

/// Delta-method covariance of the continuous parameters of `params`.
pub(crate) fn single_covariance(
    spec: &ModelSpec,
    params: &Params,
    data: &Dataset,
    weights: Option<&[f64]>,
    nodes: usize,
    prefix: &str,
) -> Result<Covariance> {
    let names: Vec<String> = spec
        .free_names()
        .iter()
        .map(|n| format!("{prefix}{n}"))
        .collect();
    if let Params::CutoffRule(cp) = params {
        let cp = cp.clone();
        let neg_ll = |u: &[f64]| {
            let p = Params::CutoffRule(CutoffParams {
                epsilon: u[0],
                ..cp.clone()
            });
            let ll = match weights {
                Some(w) => weighted_panel_loglik(&p, data, w),
                None => panel_loglik(&p, data).map(|l| l.value),
            };
            ll.map_or(f64::INFINITY, |v| -v)
        };
        return Ok(delta_covariance(neg_ll, |u| u.to_vec(), &[cp.epsilon], names));
    }
    let u = spec.to_free(&spec.pack(params)?);
    let f = objective(spec, data, weights, nodes);
    Ok(delta_covariance(f, |u| spec.to_natural(u), &u, names))
}

pub(crate) fn start_points(spec: &ModelSpec, config: &FitConfig) -> Vec<Vec<f64>> {
    let base = spec.to_free(&spec.default_start());
    let transforms = spec.transforms();
    (0..config.restarts)
        .map(|r| {
            if r == 0 {
                return base.clone();
            }
            let mut rng = stream(config.seed, r as u64, Role::Start);
            base.iter()
                .zip(&transforms)
                .map(|(u, t)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let scale = match t {
                        Transform::Identity => 0.5 * (1.0 + u.abs()),
                        Transform::Log => 0.7,
                    };
                    u + scale * z
                })
                .collect()
        })
        .collect()
}

pub(crate) fn all_choices_equal(data: &Dataset) -> bool {
    let mut it = data.features().map(|(_, y)| y);
    match it.next() {
        Some(first) => it.all(|y| y == first),
        None => true,
    }
}

/// Pooled maximum likelihood with multi-start Nelder–Mead. Starts run in
/// parallel; the best is chosen by log-likelihood, ties to the earliest start.
pub fn fit_mle(spec: &ModelSpec, data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    data.require_interior_priors()?;
    let n_params = spec.n_params(data);
    let mut warnings = Vec::new();
    let boundary_data = all_choices_equal(data);
    if boundary_data {
        warnings.push("all choices identical: estimates lie on the parameter boundary".into());
    }

    let (params, converged, iterations, restart_lls) = if spec.is_discrete() {
        let ones = vec![1.0; data.n_subjects()];
        (fit_cutoff(data, &ones)?, true, 1, vec![])
    } else {
        let f = objective(spec, data, None, config.nodes);
        let opts = nm_options(config, config.max_iter);
        let runs = par::map(&start_points(spec, config), |u0| minimize(&f, u0, &opts));
        let restart_lls: Vec<f64> = runs.iter().map(|r| -r.f).collect();
        let best = runs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
            .map(|(_, r)| r)
            .ok_or_else(|| Error::Estimation("no optimizer runs".into()))?;
        let params = spec.unpack(&spec.to_natural(&best.x), config.nodes)?;
        (params, best.converged, best.iterations, restart_lls)
    };

    let ll = panel_loglik(&params, data)?;
    let mut result = FitResult::assemble(
        *spec,
        Method::Mle,
        vec![params.clone()],
        vec![1.0],
        ll.value,
        n_params,
        data,
    );
    let near_zero_noise = spec
        .free_names()
        .iter()
        .zip(spec.pack(&params).unwrap_or_default())
        .any(|(n, v)| matches!(*n, "sigma" | "eta") && v < 1e-6);
    let eps_boundary = matches!(&params, Params::CutoffRule(c) if c.epsilon <= 0.0 || c.epsilon >= 1.0);
    result.diagnostics.boundary = boundary_data || near_zero_noise || eps_boundary;
    result.diagnostics.converged = converged;
    result.diagnostics.iterations = iterations;
    result.diagnostics.clamped = ll.clamped;
    result.diagnostics.restart_logliks = restart_lls;
    if !converged {
        warnings.push(format!(
            "optimizer did not converge within {} iterations",
            config.max_iter
        ));
    }
    if ll.clamped > 0 {
        warnings.push(format!(
            "{} observations have choice probability below the floor",
            ll.clamped
        ));
    }
    if !result.diagnostics.boundary {
        let cov = single_covariance(spec, &params, data, None, config.nodes, "")?;
        result.set_covariance(cov);
    }
    result.diagnostics.warnings.extend(warnings);
    Ok(result)
}
