#![allow(dead_code)]

use cagelogit::design::{Cell, Design};
use cagelogit::likelihood::{Dataset, MixtureSpec};
use cagelogit::models::{BeliefParams, Params, StructuralLogitParams};
use cagelogit::simulate::{simulate_choice_panel, Generator, SimSpec};

pub fn six_ball() -> Design {
    Design::new(2.0 / 3.0, 0.5, 6).unwrap()
}

/// Nine priors 0.1..0.9 cycled over `trials` trials of the 6-ball design.
pub fn schedule(trials: usize) -> Vec<Cell> {
    let design = six_ball();
    (0..trials)
        .map(|t| Cell {
            prior: 0.1 * ((t % 9) + 1) as f64,
            design,
        })
        .collect()
}

pub fn logit(beta: (f64, f64, f64), sigma: f64) -> Params {
    Params::StructuralLogit(StructuralLogitParams::new(
        BeliefParams::new(beta.0, beta.1, beta.2),
        sigma,
        0.0,
    ))
}

pub fn noisy(sigma: f64) -> Params {
    Params::StructuralLogit(StructuralLogitParams::noisy_bayes(sigma))
}

pub fn panel(generator: Generator, subjects: usize, trials: usize, seed: u64) -> Dataset {
    simulate_choice_panel(&SimSpec {
        schedule: schedule(trials),
        generator,
        subjects,
        seed,
    })
    .unwrap()
    .data
}

pub fn single(p: Params, subjects: usize, trials: usize, seed: u64) -> Dataset {
    panel(Generator::Single(p), subjects, trials, seed)
}

/// Half sharp Bayesians, half a representativeness type.
pub fn two_types() -> MixtureSpec {
    MixtureSpec::new(
        vec![logit((0.0, 1.0, 1.0), 0.05), logit((0.0, 2.0, 0.5), 0.2)],
        vec![0.5, 0.5],
    )
    .unwrap()
}

/// One-sample Kolmogorov–Smirnov test against U(0,1). Returns (D, p-value)
/// with the asymptotic Kolmogorov distribution.
pub fn ks_uniform(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((x - lo).abs()).max((hi - x).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    (d, p.clamp(0.0, 1.0))
}
