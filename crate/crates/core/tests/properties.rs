use cagelogit::beliefs::{bdm_expected_payoff, implied_choice_and_median};
use cagelogit::design::{
    bayes_choice, bayes_cutoff, bayes_posterior, binomial_pmf, logistic, Cell, CutoffOrientation,
    Design, Trial,
};
use cagelogit::likelihood::{
    best_response_assignments, ec_loglik, log_sum_exp, loglik_matrix, mixture_loglik,
    panel_loglik, subject_loglik, Dataset, MixtureSpec, Subject,
};
use cagelogit::metrics::{cell_win_loss, overall_efficiency, win_loss, DesignWeights, Rule};
use cagelogit::models::{BeliefParams, Nn5Params, Params, StructuralLogitParams};
use proptest::prelude::*;

fn prob() -> impl Strategy<Value = f64> {
    (1u32..100).prop_map(|k| f64::from(k) / 100.0)
}

fn informative_design(max_draws: u32) -> impl Strategy<Value = Design> {
    (prob(), prob(), 1..=max_draws)
        .prop_filter("cages must differ", |(a, b, _)| a != b)
        .prop_map(|(a, b, n)| Design::new(a, b, n).unwrap())
}

fn beliefs() -> impl Strategy<Value = BeliefParams> {
    (-1.0..1.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b, c)| BeliefParams::new(a, b, c))
}

fn structural() -> impl Strategy<Value = Params> {
    (beliefs(), 0.01..2.0f64, prop_oneof![Just(0.0), 0.05..1.5f64]).prop_map(|(b, s, e)| {
        Params::StructuralLogit(StructuralLogitParams::new(b, s, e).with_nodes(16))
    })
}

/// Small random panel on one design with interior priors.
fn panel() -> impl Strategy<Value = Dataset> {
    let subject = prop::collection::vec((prob(), 0u32..=6, any::<bool>()), 1..6);
    prop::collection::vec(subject, 1..6).prop_map(|subjects| {
        let design = Design::new(2.0 / 3.0, 0.5, 6).unwrap();
        let subjects = subjects
            .into_iter()
            .enumerate()
            .map(|(i, obs)| {
                let trials = obs.iter().map(|&(p, d, _)| Trial::new(p, d, design).unwrap()).collect();
                let choices = obs.iter().map(|&(_, _, y)| y).collect();
                Subject::new(format!("s{i}"), trials, choices).unwrap()
            })
            .collect();
        Dataset::new(subjects).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pmf_sums_to_one(draws in 0u32..=30, p in 0.0..=1.0f64) {
        let total: f64 = (0..=draws).map(|d| binomial_pmf(d, draws, p).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "{}", total);
    }

    #[test]
    fn posterior_is_logistic_of_log_odds(design in informative_design(12), prior in prob(), frac in 0.0..=1.0f64) {
        let d = (frac * f64::from(design.draws)).round() as u32;
        let post = bayes_posterior(&Trial::new(prior, d, design).unwrap()).unwrap();
        if post.llr.is_finite() {
            prop_assert!((logistic(post.llr + post.lpr) - post.pi_a).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_monotone(design in informative_design(12), p1 in prob(), p2 in prob()) {
        prop_assume!(design.p_a > design.p_b);
        let a = design;
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let mut last = 0.0;
        for d in 0..=a.draws {
            let at_lo = bayes_posterior(&Trial::new(lo, d, a).unwrap()).unwrap().pi_a;
            let at_hi = bayes_posterior(&Trial::new(hi, d, a).unwrap()).unwrap().pi_a;
            prop_assert!(at_hi >= at_lo);
            prop_assert!(at_lo >= last);
            last = at_lo;
        }
    }

    #[test]
    fn ccp_strictly_inside_unit_interval(params in structural(), design in informative_design(10), prior in prob(), frac in 0.0..=1.0f64) {
        let d = (frac * f64::from(design.draws)).round() as u32;
        let trial = Trial::new(prior, d, design).unwrap();
        let p = params.ccp_trial(&trial).unwrap();
        prop_assert!(p > 0.0 && p < 1.0, "{}", p);
        // Φ rounds to exactly 1 beyond about 8.2 standard deviations
        let b = BeliefParams::new(0.1, 0.3, 0.2);
        let f = trial.features().unwrap();
        if b.index(f.llr, f.lpr).unwrap().abs() < 8.0 {
            let probit = Params::StructuralProbit(b).ccp_trial(&trial).unwrap();
            prop_assert!(probit > 0.0 && probit < 1.0);
        }
    }

    #[test]
    fn nn5_nests_structural_logit(b in beliefs(), sigma in 0.05..3.0f64, design in informative_design(10), prior in prob(), frac in 0.0..=1.0f64) {
        let d = (frac * f64::from(design.draws)).round() as u32;
        let trial = Trial::new(prior, d, design).unwrap();
        let logit = Params::StructuralLogit(StructuralLogitParams::new(b, sigma, 0.0)).ccp_trial(&trial).unwrap();
        let nn5 = Params::Nn5(Nn5Params::from_sigma(b, sigma)).ccp_trial(&trial).unwrap();
        prop_assert!((logit - nn5).abs() < 1e-14, "{} vs {}", logit, nn5);
    }

    #[test]
    fn win_plus_loss_is_one(ccp in 0.0..=1.0f64, posterior in 0.0..=1.0f64) {
        let wl = win_loss(ccp, posterior);
        prop_assert_eq!(wl.win + wl.loss, 1.0);
    }

    #[test]
    fn efficiency_never_exceeds_one(params in structural(), design in informative_design(8), priors in prop::collection::vec(prob(), 1..5)) {
        let mut priors = priors;
        priors.sort_by(f64::total_cmp);
        priors.dedup();
        let weights = DesignWeights::uniform_priors(design, &priors).unwrap();
        let card = overall_efficiency(&Rule::Model(params), &weights).unwrap();
        prop_assert!(card.efficiency >= 0.0 && card.efficiency <= 1.0);
        prop_assert!(card.win <= card.optimal_win + 1e-15);
    }

    #[test]
    fn bayes_loss_minorizes_models(params in structural(), design in informative_design(10), prior in 0.0..=1.0f64) {
        let cell = Cell { prior, design };
        let bayes = cell_win_loss(&Rule::Bayes, &cell).unwrap().loss;
        let model = cell_win_loss(&Rule::Model(params), &cell).unwrap().loss;
        prop_assert!(bayes <= model + 1e-15, "{} > {}", bayes, model);
    }

    #[test]
    fn log_sum_exp_matches_naive(values in prop::collection::vec(-50.0..50.0f64, 1..10)) {
        let naive = values.iter().map(|v| v.exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp(&values) - naive).abs() < 1e-10);
    }

    #[test]
    fn loglik_is_additive(params in structural(), data in panel()) {
        let total = panel_loglik(&params, &data).unwrap().value;
        let mut by_trial = 0.0;
        for s in &data.subjects {
            let single = subject_loglik(&params, s).unwrap().value;
            let mut acc = 0.0;
            for (t, y) in s.trials.iter().zip(&s.choices) {
                let one = Subject::new("x", vec![*t], vec![*y]).unwrap();
                acc += subject_loglik(&params, &one).unwrap().value;
            }
            prop_assert!((single - acc).abs() < 1e-12 * (1.0 + acc.abs()));
            by_trial += acc;
        }
        prop_assert!((total - by_trial).abs() < 1e-12 * (1.0 + by_trial.abs()));
    }

    #[test]
    fn mixture_label_switching(a in structural(), b in structural(), w in 0.01..0.99f64, data in panel()) {
        let ab = mixture_loglik(&MixtureSpec::new(vec![a.clone(), b.clone()], vec![w, 1.0 - w]).unwrap(), &data).unwrap();
        let ba = mixture_loglik(&MixtureSpec::new(vec![b, a], vec![1.0 - w, w]).unwrap(), &data).unwrap();
        prop_assert!((ab - ba).abs() < 1e-10 * (1.0 + ab.abs()));
    }

    #[test]
    fn best_response_ec_dominates_mixture(a in structural(), b in structural(), w in 0.0..=1.0f64, data in panel()) {
        let components = vec![a, b];
        let mix = mixture_loglik(&MixtureSpec::new(components.clone(), vec![w, 1.0 - w]).unwrap(), &data).unwrap();
        let assign = best_response_assignments(&loglik_matrix(&components, &data).unwrap());
        let ec = ec_loglik(&components, &assign, &data).unwrap();
        prop_assert!(ec >= mix - 1e-12 * mix.abs());
    }

    #[test]
    fn bdm_truthful_report_is_grid_argmax(subjective in 0.0..=1.0f64) {
        let best = (0..=10_000)
            .map(|i| f64::from(i) / 10_000.0)
            .max_by(|x, y| bdm_expected_payoff(*x, subjective, 1.0).total_cmp(&bdm_expected_payoff(*y, subjective, 1.0)))
            .unwrap();
        prop_assert!((best - subjective).abs() <= 0.5e-4 + 1e-12);
        // strict concavity: second difference equals −R·h²
        let h = 1e-3;
        let p = subjective.clamp(h, 1.0 - h);
        let second = bdm_expected_payoff(p + h, subjective, 1.0) - 2.0 * bdm_expected_payoff(p, subjective, 1.0)
            + bdm_expected_payoff(p - h, subjective, 1.0);
        prop_assert!((second + h * h).abs() < 1e-12);
    }

    #[test]
    fn median_report_ignores_eta(b in beliefs(), prior in prob(), d in 0u32..=6) {
        // the median prediction takes only β; η never enters
        let trial = Trial::new(prior, d, Design::new(2.0 / 3.0, 0.5, 6).unwrap()).unwrap();
        let f = trial.features().unwrap();
        let implied = implied_choice_and_median(&b, &trial, None).unwrap();
        prop_assert!((implied.median - logistic(b.index(f.llr, f.lpr).unwrap())).abs() < 1e-15);
    }
}

/// Exhaustive: the Bayes choice equals the Bayes cutoff rule for every
/// count and a grid of priors, over all designs with D ≤ 10 on a coarse grid.
#[test]
fn bayes_choice_matches_bayes_cutoff_exhaustively() {
    let ps: Vec<f64> = (1..10).map(|k| f64::from(k) / 10.0).chain([2.0 / 3.0, 1.0 / 3.0]).collect();
    let priors: Vec<f64> = (0..=100).map(|k| f64::from(k) / 100.0).chain([1.0 / 3.0, 2.0 / 3.0]).collect();
    for &pa in &ps {
        for &pb in &ps {
            if pa == pb {
                continue;
            }
            for draws in 0..=10 {
                let design = Design::new(pa, pb, draws).unwrap();
                let orientation = design.orientation().unwrap();
                for &prior in &priors {
                    let c = bayes_cutoff(&design, prior).unwrap();
                    assert!(orientation.range(draws).contains(&c));
                    for d in 0..=draws {
                        let trial = Trial::new(prior, d, design).unwrap();
                        let by_rule = orientation.chooses_a(d, c);
                        assert_eq!(
                            bayes_choice(&trial).unwrap().is_a(),
                            by_rule,
                            "design {pa}/{pb}/{draws} prior {prior} d {d} cutoff {c}"
                        );
                    }
                }
            }
        }
    }
    assert_eq!(CutoffOrientation::Above.range(6), -1..=6);
}
