//! Probability primitives for the two-cage binomial experiment.
//!
//! A design fixes the share of marked balls in each cage and the number of
//! with-replacement draws. A trial adds the prior on cage A and the observed
//! count of marked balls. Everything here is a pure function of those values.

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use statrs::function::factorial::binomial;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Binomial experiment: marked-ball probabilities for both cages and the
/// number of draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub p_a: f64,
    pub p_b: f64,
    pub draws: u32,
}

impl Design {
    pub fn new(p_a: f64, p_b: f64, draws: u32) -> Result<Self> {
        let design = Design { p_a, p_b, draws };
        design.validate()?;
        Ok(design)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_a", self.p_a), ("p_b", self.p_b)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Equal cage compositions carry no information; LLR is identically 0.
    pub fn is_uninformative(&self) -> bool {
        self.p_a == self.p_b
    }

    pub fn orientation(&self) -> Option<CutoffOrientation> {
        if self.p_a > self.p_b {
            Some(CutoffOrientation::Above)
        } else if self.p_a < self.p_b {
            Some(CutoffOrientation::Below)
        } else {
            None
        }
    }
}

impl Eq for Design {}

impl Hash for Design {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.p_a.to_bits().hash(state);
        self.p_b.to_bits().hash(state);
        self.draws.hash(state);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub prior: f64,
    pub marked: u32,
    pub design: Design,
}

impl Trial {
    pub fn new(prior: f64, marked: u32, design: Design) -> Result<Self> {
        let trial = Trial {
            prior,
            marked,
            design,
        };
        trial.validate()?;
        Ok(trial)
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if !(0.0..=1.0).contains(&self.prior) {
            return Err(Error::domain(format!("prior {} outside [0, 1]", self.prior)));
        }
        if self.marked > self.design.draws {
            return Err(Error::domain(format!(
                "marked = {} exceeds draws = {}",
                self.marked, self.design.draws
            )));
        }
        Ok(())
    }

    pub fn has_interior_prior(&self) -> bool {
        self.prior > 0.0 && self.prior < 1.0
    }

    pub fn cell(&self) -> Cell {
        Cell {
            prior: self.prior,
            design: self.design,
        }
    }

    pub fn features(&self) -> Result<Features> {
        let posterior = bayes_posterior(self)?;
        Ok(Features {
            trial: *self,
            llr: posterior.llr,
            lpr: posterior.lpr,
            posterior: posterior.pi_a,
        })
    }
}

/// An experimental control cell: one prior under one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub prior: f64,
    pub design: Design,
}

impl Eq for Cell {}

impl Hash for Cell {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.prior.to_bits().hash(state);
        self.design.hash(state);
    }
}

/// Trial covariates computed once and reused by every likelihood evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub trial: Trial,
    pub llr: f64,
    pub lpr: f64,
    pub posterior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorPair {
    pub pi_a: f64,
    pub llr: f64,
    pub lpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

impl Choice {
    pub fn from_indicator(y: bool) -> Self {
        if y {
            Choice::A
        } else {
            Choice::B
        }
    }

    pub fn is_a(self) -> bool {
        self == Choice::A
    }
}

impl std::fmt::Display for Choice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Choice::A => write!(f, "A"),
            Choice::B => write!(f, "B"),
        }
    }
}

/// Direction of an integer cutoff rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffOrientation {
    /// Cage A is chosen when `marked > c`, `c ∈ [-1, D]`. Used when `p_a > p_b`.
    Above,
    /// Cage A is chosen when `marked < c`, `c ∈ [0, D + 1]`. Used when `p_a < p_b`.
    Below,
}

impl CutoffOrientation {
    pub fn chooses_a(self, marked: u32, cutoff: i64) -> bool {
        match self {
            CutoffOrientation::Above => i64::from(marked) > cutoff,
            CutoffOrientation::Below => i64::from(marked) < cutoff,
        }
    }

    pub fn range(self, draws: u32) -> std::ops::RangeInclusive<i64> {
        let d = i64::from(draws);
        match self {
            CutoffOrientation::Above => -1..=d,
            CutoffOrientation::Below => 0..=d + 1,
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `d·ln p + (D−d)·ln(1−p)` with `0·ln 0 = 0`.
fn log_kernel(d: u32, draws: u32, p: f64) -> f64 {
    let term = |count: u32, q: f64| {
        if count == 0 {
            0.0
        } else {
            f64::from(count) * q.ln()
        }
    };
    term(d, p) + term(draws - d, 1.0 - p)
}

fn ln_choose(n: u32, k: u32) -> f64 {
    let n = f64::from(n);
    let k = f64::from(k);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

pub fn binomial_pmf(d: u32, draws: u32, p: f64) -> Result<f64> {
    if d > draws {
        return Err(Error::domain(format!("d = {d} outside 0..={draws}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p = {p} outside [0, 1]")));
    }
    if draws <= EXACT_PMF_DRAWS {
        // direct product is exact to rounding for small samples
        let q = 1.0 - p;
        return Ok(binomial(u64::from(draws), u64::from(d))
            * p.powi(d as i32)
            * q.powi((draws - d) as i32));
    }
    Ok((ln_choose(draws, d) + log_kernel(d, draws, p)).exp())
}

const EXACT_PMF_DRAWS: u32 = 60;

/// Log-likelihood ratio of the sample between cage A and cage B. The binomial
/// coefficient cancels. Signed infinity when exactly one cage can produce the
/// sample.
pub fn llr(trial: &Trial) -> Result<f64> {
    trial.validate()?;
    let Design { p_a, p_b, draws } = trial.design;
    if p_a == p_b {
        return Ok(0.0);
    }
    let la = log_kernel(trial.marked, draws, p_a);
    let lb = log_kernel(trial.marked, draws, p_b);
    match (la.is_finite(), lb.is_finite()) {
        (false, false) => Err(Error::domain(format!(
            "sample d = {} impossible under both cages",
            trial.marked
        ))),
        (true, false) => Ok(f64::INFINITY),
        (false, true) => Ok(f64::NEG_INFINITY),
        (true, true) => Ok(la - lb),
    }
}

/// Log prior odds of cage A. Signed infinity at 0 and 1.
pub fn lpr(prior: f64) -> f64 {
    if prior <= 0.0 {
        f64::NEG_INFINITY
    } else if prior >= 1.0 {
        f64::INFINITY
    } else {
        (prior / (1.0 - prior)).ln()
    }
}

pub fn bayes_posterior(trial: &Trial) -> Result<PosteriorPair> {
    let llr = llr(trial)?;
    let lpr = lpr(trial.prior);
    let pi_a = if trial.prior == 0.0 {
        0.0
    } else if trial.prior == 1.0 {
        1.0
    } else if trial.design.is_uninformative() {
        trial.prior
    } else {
        logistic(llr + lpr)
    };
    Ok(PosteriorPair { pi_a, llr, lpr })
}

/// Optimal pure strategy: A iff the posterior is at least one half.
pub fn bayes_choice(trial: &Trial) -> Result<Choice> {
    Ok(choice_from_posterior(bayes_posterior(trial)?.pi_a))
}

pub fn choice_from_posterior(pi_a: f64) -> Choice {
    Choice::from_indicator(pi_a >= 0.5)
}

/// The integer cutoff that reproduces the Bayes decision rule at `prior`.
///
/// For `p_a > p_b` returns `c ∈ [-1, D]` with A chosen iff `d > c`; for
/// `p_a < p_b` returns `c ∈ [0, D + 1]` with A chosen iff `d < c`.
pub fn bayes_cutoff(design: &Design, prior: f64) -> Result<i64> {
    let orientation = design.orientation().ok_or_else(|| {
        Error::domain("p_a = p_b: no informative cutoff exists".to_string())
    })?;
    let choices = (0..=design.draws)
        .map(|d| bayes_choice(&Trial::new(prior, d, *design)?).map(Choice::is_a))
        .collect::<Result<Vec<_>>>()?;
    let cutoff = match orientation {
        CutoffOrientation::Above => choices
            .iter()
            .rposition(|a| !a)
            .map_or(-1, |d| d as i64),
        CutoffOrientation::Below => choices
            .iter()
            .position(|a| !a)
            .map_or(i64::from(design.draws) + 1, |d| d as i64),
    };
    // the Bayes rule is monotone in d, so a single threshold reproduces it
    debug_assert!(choices
        .iter()
        .enumerate()
        .all(|(d, &a)| orientation.chooses_a(d as u32, cutoff) == a));
    Ok(cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn six_ball() -> Design {
        Design::new(2.0 / 3.0, 0.5, 6).unwrap()
    }

    fn seven_ball() -> Design {
        Design::new(0.4, 0.6, 7).unwrap()
    }

    #[test]
    fn pmf_matches_fractions() {
        assert_abs_diff_eq!(binomial_pmf(3, 6, 2.0 / 3.0).unwrap(), 160.0 / 729.0, epsilon = 1e-13);
        assert_abs_diff_eq!(binomial_pmf(3, 7, 0.4).unwrap(), 4536.0 / 15625.0, epsilon = 1e-13);
        assert_abs_diff_eq!(binomial_pmf(0, 5, 0.3).unwrap(), 0.7f64.powi(5), epsilon = 1e-14);
        assert_eq!(binomial_pmf(0, 4, 0.0).unwrap(), 1.0);
        assert_eq!(binomial_pmf(4, 4, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn pmf_rejects_out_of_range() {
        assert!(matches!(binomial_pmf(7, 6, 0.5), Err(Error::Domain(_))));
        assert!(binomial_pmf(1, 6, 1.5).is_err());
    }

    #[test]
    fn llr_examples() {
        let t = Trial::new(0.6, 3, seven_ball()).unwrap();
        assert_abs_diff_eq!(llr(&t).unwrap(), 1.5f64.ln(), epsilon = 1e-12);
        let t = Trial::new(0.5, 3, six_ball()).unwrap();
        assert_abs_diff_eq!(llr(&t).unwrap(), (512.0f64 / 729.0).ln(), epsilon = 1e-12);
        let flat = Design::new(0.3, 0.3, 5).unwrap();
        for d in 0..=5 {
            assert_eq!(llr(&Trial::new(0.5, d, flat).unwrap()).unwrap(), 0.0);
        }
    }

    #[test]
    fn llr_infinite_and_impossible() {
        let degenerate = Design::new(1.0, 0.5, 4).unwrap();
        assert_abs_diff_eq!(llr(&Trial::new(0.5, 4, degenerate).unwrap()).unwrap(), 4.0 * 2f64.ln(), epsilon = 1e-12);
        assert_eq!(llr(&Trial::new(0.5, 3, Design::new(0.5, 0.0, 4).unwrap()).unwrap()).unwrap(), f64::INFINITY);
        assert_eq!(llr(&Trial::new(0.5, 2, degenerate).unwrap()).unwrap(), f64::NEG_INFINITY);
        let both = Design::new(1.0, 0.0, 4).unwrap();
        assert!(llr(&Trial::new(0.5, 2, both).unwrap()).is_err());
        assert!(bayes_posterior(&Trial::new(0.5, 2, both).unwrap()).is_err());
    }

    #[test]
    fn lpr_examples() {
        assert_eq!(lpr(0.5), 0.0);
        assert_abs_diff_eq!(lpr(0.6), 0.405465, epsilon = 1e-6);
        assert_abs_diff_eq!(lpr(0.7), 0.847298, epsilon = 1e-6);
        assert_eq!(lpr(0.0), f64::NEG_INFINITY);
        assert_eq!(lpr(1.0), f64::INFINITY);
    }

    #[test]
    fn posterior_examples() {
        let t = Trial::new(0.6, 3, seven_ball()).unwrap();
        assert_abs_diff_eq!(bayes_posterior(&t).unwrap().pi_a, 9.0 / 13.0, epsilon = 1e-12);
        let t = Trial::new(0.7, 3, six_ball()).unwrap();
        assert_abs_diff_eq!(bayes_posterior(&t).unwrap().pi_a, 3584.0 / 5771.0, epsilon = 1e-12);
        let t = Trial::new(0.0, 5, six_ball()).unwrap();
        assert_eq!(bayes_posterior(&t).unwrap().pi_a, 0.0);
        let t = Trial::new(1.0, 0, six_ball()).unwrap();
        assert_eq!(bayes_posterior(&t).unwrap().pi_a, 1.0);
        let flat = Design::new(0.3, 0.3, 5).unwrap();
        assert_eq!(bayes_posterior(&Trial::new(0.37, 2, flat).unwrap()).unwrap().pi_a, 0.37);
    }

    #[test]
    fn choices() {
        assert_eq!(bayes_choice(&Trial::new(0.6, 3, seven_ball()).unwrap()).unwrap(), Choice::A);
        let t = Trial::new(0.3, 3, six_ball()).unwrap();
        assert_abs_diff_eq!(bayes_posterior(&t).unwrap().pi_a, 0.231, epsilon = 5e-4);
        assert_eq!(bayes_choice(&t).unwrap(), Choice::B);
        assert_eq!(choice_from_posterior(0.5), Choice::A);
    }

    #[test]
    fn cutoffs() {
        let c: Vec<i64> = [1.0 / 3.0, 0.5, 2.0 / 3.0]
            .iter()
            .map(|&p| bayes_cutoff(&six_ball(), p).unwrap())
            .collect();
        assert_eq!(c, vec![4, 3, 2]);
        assert_eq!(bayes_cutoff(&six_ball(), 0.9).unwrap(), 0);
        assert_eq!(bayes_cutoff(&six_ball(), 0.1).unwrap(), 6);
        assert_eq!(bayes_cutoff(&six_ball(), 1.0).unwrap(), -1);
        assert_eq!(bayes_cutoff(&six_ball(), 0.0).unwrap(), 6);
        assert!(bayes_cutoff(&Design::new(0.5, 0.5, 6).unwrap(), 0.5).is_err());
    }

    #[test]
    fn mirrored_cutoff_reproduces_choices() {
        let design = seven_ball();
        for prior in [0.1, 0.3, 0.5, 0.6, 0.9] {
            let c = bayes_cutoff(&design, prior).unwrap();
            for d in 0..=design.draws {
                let t = Trial::new(prior, d, design).unwrap();
                assert_eq!(
                    CutoffOrientation::Below.chooses_a(d, c),
                    bayes_choice(&t).unwrap().is_a()
                );
            }
        }
    }

    #[test]
    fn trial_validation() {
        assert!(Trial::new(0.5, 7, six_ball()).is_err());
        assert!(Trial::new(1.2, 1, six_ball()).is_err());
        assert!(Design::new(-0.1, 0.5, 3).is_err());
    }
}
