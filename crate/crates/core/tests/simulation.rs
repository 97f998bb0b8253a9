mod common;

use cagelogit::beliefs::{fit_belief_regression, CensorMode, ReportTrial};
use cagelogit::design::{bayes_choice, Choice, Design, Trial};
use cagelogit::estimation::{FitConfig, ModelSpec};
use cagelogit::metrics::subject_scores;
use cagelogit::models::{BeliefParams, Params, StructuralLogitParams};
use cagelogit::par;
use cagelogit::simulate::{
    recovery_experiment, simulate_choice_panel, simulate_report_panel, Generator, RecoverySpec,
    SimSpec,
};
use indexmap::IndexMap;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn spec(generator: Generator, subjects: usize, trials: usize, seed: u64) -> SimSpec {
    SimSpec {
        schedule: common::schedule(trials),
        generator,
        subjects,
        seed,
    }
}

#[test]
fn sharp_bayesians_are_accurate() {
    let data = common::single(common::noisy(1e-4), 2000, 10, 1);
    let scores = subject_scores(&data).unwrap();
    let mean = scores.iter().map(|s| s.accuracy).sum::<f64>() / scores.len() as f64;
    assert!(mean > 0.999, "accuracy {mean}");
}

#[test]
fn true_cage_share_matches_prior() {
    let sim = simulate_choice_panel(&spec(Generator::Single(common::noisy(0.3)), 2000, 18, 2)).unwrap();
    let sched = common::schedule(18);
    for (t, cell) in sched.iter().enumerate().take(9) {
        let n = 2.0 * 2000.0;
        let hits = sim
            .truth
            .cages
            .iter()
            .map(|c| (c[t] == Choice::A) as u32 + (c[t + 9] == Choice::A) as u32)
            .sum::<u32>() as f64;
        let se = (cell.prior * (1.0 - cell.prior) / n).sqrt();
        assert!((hits / n - cell.prior).abs() < 3.0 * se, "prior {} share {}", cell.prior, hits / n);
    }
}

/// Empirical choice frequencies per (prior, d) against the model CCP.
#[test]
fn choice_frequencies_fit_the_model() {
    let truth = common::logit((0.2, 0.8, 1.2), 0.25);
    let sim = simulate_choice_panel(&spec(Generator::Single(truth.clone()), 4000, 9, 3)).unwrap();
    let mut cells: IndexMap<(u64, u32), (f64, f64, Trial)> = IndexMap::new();
    for s in &sim.data.subjects {
        for (t, &y) in s.trials.iter().zip(&s.choices) {
            let e = cells.entry((t.prior.to_bits(), t.marked)).or_insert((0.0, 0.0, *t));
            e.0 += y as u32 as f64;
            e.1 += 1.0;
        }
    }
    // ten well-populated cells, in a fixed but arbitrary order
    let mut chosen: Vec<_> = cells.values().filter(|c| c.1 >= 200.0).copied().collect();
    chosen.sort_by_key(|c| c.2.marked * 31 + (c.2.prior * 97.0) as u32 % 13);
    chosen.truncate(10);
    assert_eq!(chosen.len(), 10);
    let stat: f64 = chosen
        .iter()
        .map(|(a, n, t)| {
            let p = truth.ccp_trial(t).unwrap();
            (a - n * p).powi(2) / (n * p * (1.0 - p))
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(10.0).unwrap().cdf(stat);
    assert!(p_value > 0.01, "chi2 {stat}, p {p_value}");
}

#[test]
fn calculational_noise_is_recorded_in_truth() {
    let truth = Params::StructuralLogit(StructuralLogitParams::new(BeliefParams::BAYES, 0.2, 0.7));
    let sim = simulate_choice_panel(&spec(Generator::Single(truth), 2000, 9, 4)).unwrap();
    let noise: Vec<f64> = sim.truth.noise.iter().flatten().copied().collect();
    let sd = (noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64).sqrt();
    assert!((sd / 0.7 - 1.0).abs() < 0.03, "noise sd {sd}");
    let plain = simulate_choice_panel(&spec(Generator::Single(common::noisy(0.2)), 10, 9, 4)).unwrap();
    assert!(plain.truth.noise.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn mixture_types_drawn_at_their_shares() {
    let mix = cagelogit::MixtureSpec::new(
        vec![common::noisy(0.1), common::noisy(1.0)],
        vec![0.3, 0.7],
    )
    .unwrap();
    let sim = simulate_choice_panel(&spec(Generator::Mixture(mix), 3000, 2, 5)).unwrap();
    let share = sim.truth.types.iter().filter(|&&k| k == 0).count() as f64 / 3000.0;
    assert!((share - 0.3).abs() < 3.0 * (0.21f64 / 3000.0).sqrt(), "{share}");
}

#[test]
fn simulation_is_thread_independent() {
    let s = spec(Generator::Mixture(common::two_types()), 50, 18, 6);
    let run = |n| par::with_threads(n, || simulate_choice_panel(&s).unwrap());
    let (a, b) = (run(1), run(4));
    assert_eq!(a.data, b.data);
    assert_eq!(a.truth, b.truth);
    let other = simulate_choice_panel(&SimSpec { seed: 7, ..s }).unwrap();
    assert_ne!(a.data, other.data);
}

#[test]
fn report_log_odds_spread_matches_eta() {
    let truth = Params::StructuralLogit(StructuralLogitParams::new(BeliefParams::new(0.1, 0.9, 0.8), 1.0, 0.5));
    let panel = simulate_report_panel(&spec(Generator::Single(truth), 1000, 10, 8)).unwrap();
    let resid: Vec<f64> = panel
        .flatten()
        .iter()
        .map(|r| {
            let f = r.trial.features().unwrap();
            let y = (r.report / (1.0 - r.report)).ln();
            y - (0.1 + 0.9 * f.llr + 0.8 * f.lpr)
        })
        .collect();
    let sd = (resid.iter().map(|v| v * v).sum::<f64>() / resid.len() as f64).sqrt();
    assert!((sd / 0.5 - 1.0).abs() < 0.05, "sd {sd}");
}

#[test]
fn single_replication_summary_is_the_fit() {
    let summary = recovery_experiment(&RecoverySpec {
        model: ModelSpec::NOISY_BAYES,
        truth: Generator::Single(common::noisy(0.3)),
        schedule: common::schedule(20),
        subjects: 100,
        replications: 1,
        seed: 9,
        config: FitConfig { restarts: 2, ..FitConfig::default() },
    })
    .unwrap();
    let sigma = &summary.params["sigma"];
    assert_eq!(summary.replications, 1);
    assert!((sigma.bias - (sigma.mean - 0.3)).abs() < 1e-15);
    assert!(sigma.coverage == 0.0 || sigma.coverage == 1.0);
}

fn belief_data(beliefs: BeliefParams, eta: f64, n: usize, seed: u64) -> Vec<ReportTrial> {
    let truth = Params::StructuralLogit(StructuralLogitParams::new(beliefs, 1.0, eta));
    simulate_report_panel(&spec(Generator::Single(truth), n / 10, 10, seed))
        .unwrap()
        .flatten()
}

#[test]
fn noiseless_reports_fit_exactly() {
    let b = BeliefParams::new(-0.2, 0.6, 1.4);
    let fit = fit_belief_regression(&belief_data(b, 0.0, 300, 1), &FitConfig::default(), CensorMode::Censor).unwrap();
    assert!((fit.beliefs.beta0 - b.beta0).abs() < 1e-9);
    assert!((fit.beliefs.beta1 - b.beta1).abs() < 1e-9);
    assert!((fit.beliefs.beta2 - b.beta2).abs() < 1e-9);
    assert!(fit.eta < 1e-9);
}

#[test]
fn censored_reports_are_handled() {
    // push a few reports to the boundary and check both modes still run
    let b = BeliefParams::new(0.0, 1.0, 1.0);
    let mut data = belief_data(b, 0.9, 400, 2);
    for r in data.iter_mut().take(40) {
        r.report = if r.report > 0.5 { 1.0 } else { 0.0 };
    }
    let cens = fit_belief_regression(&data, &FitConfig::default(), CensorMode::Censor).unwrap();
    let drop = fit_belief_regression(&data, &FitConfig::default(), CensorMode::Drop).unwrap();
    assert_eq!(cens.n_censored, 40);
    assert_eq!(drop.n, 360);
    assert!((cens.beliefs.beta1 - 1.0).abs() < 0.3);
    assert!(cens.covariance.is_some());
}

#[test]
fn belief_fit_rejects_degenerate_inputs() {
    let design = Design::new(2.0 / 3.0, 0.5, 6).unwrap();
    let few: Vec<_> = (0..3)
        .map(|d| ReportTrial::new(Trial::new(0.4, d, design).unwrap(), 0.3).unwrap())
        .collect();
    assert!(fit_belief_regression(&few, &FitConfig::default(), CensorMode::Censor).is_err());
    let endpoint = vec![ReportTrial::new(Trial::new(1.0, 2, design).unwrap(), 0.9).unwrap(); 10];
    assert!(fit_belief_regression(&endpoint, &FitConfig::default(), CensorMode::Censor).is_err());
    let censored = vec![ReportTrial::new(Trial::new(0.5, 2, design).unwrap(), 1.0).unwrap(); 10];
    assert!(fit_belief_regression(&censored, &FitConfig::default(), CensorMode::Censor).is_err());
}

#[test]
fn bayes_choice_of_simulated_trials_is_consistent() {
    let data = common::single(common::noisy(0.3), 20, 9, 12);
    for s in &data.subjects {
        for t in &s.trials {
            let post = cagelogit::design::bayes_posterior(t).unwrap().pi_a;
            assert_eq!(bayes_choice(t).unwrap().is_a(), post >= 0.5);
        }
    }
}
