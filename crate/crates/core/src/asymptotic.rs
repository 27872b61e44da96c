//! Population-level likelihoods obtained by also assuming the sample is
//! drawn from an infinite population, and the two-proportion baseline.
//!
//! These are approximations kept for comparison; results carry an
//! `asymptotic` flag when serialized.

use num_rational::Ratio;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::lattice::{DataConfiguration, RandomizationSpec};
use crate::numeric::{LikelihoodValue, LnFactorial, LogProbability};
use crate::shares::SharePair;

const SHARE_SLACK: f64 = 1e-12;

/// Population shares of never-takers, defiers, compliers and always-takers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationConfiguration {
    pub pi: [f64; 4],
}

impl PopulationConfiguration {
    pub fn new(pi1: f64, pi2: f64, pi3: f64) -> Result<Self> {
        let pi4 = 1.0 - pi1 - pi2 - pi3;
        let pi = [pi1, pi2, pi3, pi4];
        if pi.iter().any(|x| !(-SHARE_SLACK..=1.0 + SHARE_SLACK).contains(x)) {
            return Err(invalid(format!("population shares {pi:?} are not a distribution")));
        }
        Ok(PopulationConfiguration { pi: pi.map(|x| x.clamp(0.0, 1.0)) })
    }

    /// Share treated under intervention: `1 - pi1 - pi2`.
    pub fn treated_if_intervention(&self) -> f64 {
        (self.pi[2] + self.pi[3]).clamp(0.0, 1.0)
    }

    /// Share treated under control: `1 - pi1 - pi3`.
    pub fn treated_if_control(&self) -> f64 {
        (self.pi[1] + self.pi[3]).clamp(0.0, 1.0)
    }

    pub fn average_effect(&self) -> f64 {
        self.pi[2] - self.pi[1]
    }

    /// Moves defiers into never-takers and as many compliers into
    /// always-takers; both arm-wise treated shares are unchanged.
    pub fn zero_defier_transform(&self) -> Option<Self> {
        let [p1, p2, p3, _] = self.pi;
        (p3 >= p2 - SHARE_SLACK).then(|| PopulationConfiguration::new(p1 + p2, 0.0, (p3 - p2).max(0.0)).ok())?
    }

    /// The mirror image for a negative effect.
    pub fn zero_complier_transform(&self) -> Option<Self> {
        let [p1, p2, p3, _] = self.pi;
        (p2 >= p3 - SHARE_SLACK).then(|| PopulationConfiguration::new(p1 + p3, (p2 - p3).max(0.0), 0.0).ok())?
    }
}

/// `k ln x`, with `0^0 = 1`.
fn pow_ln(x: f64, k: u32) -> f64 {
    if k == 0 {
        0.0
    } else if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        k as f64 * x.ln()
    }
}

fn ln_binom_pmf(lnf: &LnFactorial, k: u32, n: u32, x: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    lnf.ln_choose(n as i64, k as i64) + pow_ln(x, k) + pow_ln(1.0 - x, n - k)
}

/// Population likelihood under coin-flip assignment: a multinomial over the
/// four cells with probabilities `p v`, `p (1-v)`, `(1-p) c`, `(1-p)(1-c)`.
pub fn asymptotic_likelihood_iid(
    pi: &PopulationConfiguration,
    g: &DataConfiguration,
    p: Ratio<u64>,
) -> Result<LikelihoodValue> {
    let spec = RandomizationSpec::iid(*p.numer(), *p.denom())?;
    let RandomizationSpec::Iid { p } = spec else { unreachable!() };
    let s = g.total();
    let lnf = LnFactorial::new(s);
    let [g1, g2, g3, g4] = g.counts();
    let lp = LogProbability::new(p);
    let (n1, n0) = (g.intervention_size(), g.control_size());
    let mut v = lnf.get(s) - lnf.get(g1) - lnf.get(g2) - lnf.get(g3) - lnf.get(g4);
    if n1 > 0 {
        v += n1 as f64 * lp.ln_p;
    }
    if n0 > 0 {
        v += n0 as f64 * lp.ln_q;
    }
    let (tv, tc) = (pi.treated_if_intervention(), pi.treated_if_control());
    v += pow_ln(tv, g1) + pow_ln(1.0 - tv, g2) + pow_ln(tc, g3) + pow_ln(1.0 - tc, g4);
    Ok(LikelihoodValue::from_log(v))
}

/// Population likelihood under an urn draw of `m`: two independent binomials.
pub fn asymptotic_likelihood_urn(
    pi: &PopulationConfiguration,
    g: &DataConfiguration,
    m: u32,
) -> Result<LikelihoodValue> {
    if g.intervention_size() != m {
        return Err(invalid(format!("urn draw of {m} but {g} has {} in intervention", g.intervention_size())));
    }
    let s = g.total();
    let lnf = LnFactorial::new(s);
    let v = ln_binom_pmf(&lnf, g.g1(), m, pi.treated_if_intervention())
        + ln_binom_pmf(&lnf, g.g3(), s - m, pi.treated_if_control());
    Ok(LikelihoodValue::from_log(v))
}

/// Population likelihood for whichever form the mechanism implies.
pub fn asymptotic_likelihood(
    pi: &PopulationConfiguration,
    g: &DataConfiguration,
    spec: &RandomizationSpec,
) -> Result<LikelihoodValue> {
    match *spec {
        RandomizationSpec::Iid { p } => asymptotic_likelihood_iid(pi, g, p),
        RandomizationSpec::Urn { m } => asymptotic_likelihood_urn(pi, g, m),
    }
}

/// The set of maximizers of the population likelihood, which only pins
/// down the two arm-wise treated shares.
#[derive(Debug, Clone, Serialize)]
pub struct PopulationMle {
    pub asymptotic: bool,
    pub v_hat: f64,
    pub c_hat: f64,
    /// Maximizers are `(pi1, 1 - v - pi1, 1 - c - pi1, v + c + pi1 - 1)`
    /// for `pi1` in this interval.
    pub pi1_range: (f64, f64),
    pub representative: PopulationConfiguration,
    pub average_effect: f64,
    pub log_likelihood: f64,
    pub zero_defier: Option<PopulationConfiguration>,
    pub zero_complier: Option<PopulationConfiguration>,
}

fn to_f64(r: Ratio<u32>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn population_mle(g: &DataConfiguration, spec: &RandomizationSpec) -> Result<PopulationMle> {
    let (v, c) = SharePair::from_data(g).defined()?;
    let (v, c) = (to_f64(v), to_f64(c));
    let lo = (1.0 - v - c).max(0.0);
    let hi = (1.0 - v).min(1.0 - c);
    let representative = PopulationConfiguration::new((lo + hi) / 2.0, 1.0 - v - (lo + hi) / 2.0, 1.0 - c - (lo + hi) / 2.0)?;
    let log_likelihood = asymptotic_likelihood(&representative, g, spec)?.log_value;
    Ok(PopulationMle {
        asymptotic: true,
        v_hat: v,
        c_hat: c,
        pi1_range: (lo, hi),
        representative,
        average_effect: v - c,
        log_likelihood,
        zero_defier: if v >= c { representative.zero_defier_transform() } else { None },
        zero_complier: if v <= c { representative.zero_complier_transform() } else { None },
    })
}

/// Population likelihood ratio for "no defiers in the population".
#[derive(Debug, Clone, Serialize)]
pub struct ZeroDefierCheck {
    pub asymptotic: bool,
    pub point_estimate: f64,
    pub lambda: f64,
    pub zero_defier_maximizer_exists: bool,
    pub constrained_maximizer: PopulationConfiguration,
}

/// Maximizes with `pi2 = 0` and compares with the unconstrained maximum.
///
/// With no defiers the treated share under intervention cannot fall below
/// the one under control, so when `v_hat < c_hat` the constrained maximum
/// pools the arms.
pub fn zero_defier_check(g: &DataConfiguration, spec: &RandomizationSpec) -> Result<ZeroDefierCheck> {
    let mle = population_mle(g, spec)?;
    let constrained = match mle.zero_defier {
        Some(z) => z,
        None => {
            let r = (g.g1() + g.g3()) as f64 / g.total() as f64;
            PopulationConfiguration::new(1.0 - r, 0.0, 0.0)?
        }
    };
    let lc = asymptotic_likelihood(&constrained, g, spec)?.log_value;
    let lambda = (lc - mle.log_likelihood).exp().min(1.0);
    Ok(ZeroDefierCheck {
        asymptotic: true,
        point_estimate: mle.average_effect,
        lambda,
        zero_defier_maximizer_exists: mle.zero_defier.is_some()
            && (lc - mle.log_likelihood).abs() <= 1e-12 * mle.log_likelihood.abs().max(1.0),
        constrained_maximizer: constrained,
    })
}

/// Unpooled two-proportion z-test of `v_hat - c_hat`.
#[derive(Debug, Clone, Serialize)]
pub struct TwoProportionTest {
    pub asymptotic: bool,
    pub estimate: f64,
    pub standard_error: f64,
    pub z: f64,
    pub p_value: f64,
}

pub fn two_proportion_test(g: &DataConfiguration) -> Result<TwoProportionTest> {
    let (v, c) = SharePair::from_data(g).defined()?;
    let (v, c) = (to_f64(v), to_f64(c));
    let (n1, n0) = (g.intervention_size() as f64, g.control_size() as f64);
    let estimate = v - c;
    let se = (v * (1.0 - v) / n1 + c * (1.0 - c) / n0).sqrt();
    let (z, p_value) = if se > 0.0 {
        let z = estimate / se;
        let normal = Normal::new(0.0, 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
        (z, 2.0 * normal.cdf(-z.abs()))
    } else if estimate == 0.0 {
        (0.0, 1.0)
    } else {
        (estimate.signum() * f64::INFINITY, 0.0)
    };
    Ok(TwoProportionTest { asymptotic: true, estimate, standard_error: se, z, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Ratio<u64> {
        Ratio::new(1, 2)
    }

    #[test]
    fn single_individual() {
        let pi = PopulationConfiguration::new(0.25, 0.25, 0.25).unwrap();
        let l = asymptotic_likelihood_iid(&pi, &DataConfiguration::new(1, 0, 0, 0), half()).unwrap();
        assert!((l.value() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn impossible_cells() {
        let pi = PopulationConfiguration::new(0.5, 0.5, 0.0).unwrap();
        let l = asymptotic_likelihood_iid(&pi, &DataConfiguration::new(1, 0, 0, 1), half()).unwrap();
        assert!(l.is_zero());
        let all_compliers = PopulationConfiguration::new(0.0, 0.0, 1.0).unwrap();
        let l = asymptotic_likelihood_urn(&all_compliers, &DataConfiguration::new(1, 0, 0, 1), 1).unwrap();
        assert!((l.value() - 1.0).abs() < 1e-15);
        let never = PopulationConfiguration::new(1.0, 0.0, 0.0).unwrap();
        let l = asymptotic_likelihood_urn(&never, &DataConfiguration::new(0, 1, 0, 1), 1).unwrap();
        assert!((l.value() - 1.0).abs() < 1e-15);
        assert!(asymptotic_likelihood_urn(&never, &DataConfiguration::new(0, 2, 0, 0), 1).is_err());
    }

    #[test]
    fn mle_examples() {
        let spec = RandomizationSpec::urn(50);
        let m = population_mle(&DataConfiguration::new(35, 15, 15, 35), &spec).unwrap();
        assert!((m.average_effect - 0.4).abs() < 1e-15);
        assert!(m.zero_defier.is_some());
        let spec = RandomizationSpec::iid(1, 2).unwrap();
        let m = population_mle(&DataConfiguration::new(25, 25, 5, 45), &spec).unwrap();
        assert!((m.average_effect - 0.4).abs() < 1e-15);
        let m = population_mle(&DataConfiguration::new(3, 2, 3, 2), &spec).unwrap();
        assert_eq!(m.average_effect, 0.0);
        assert!(m.zero_defier.is_some() && m.zero_complier.is_some());
    }

    #[test]
    fn regression_baseline() {
        let t = two_proportion_test(&DataConfiguration::new(35, 15, 15, 35)).unwrap();
        assert!((t.estimate - 0.4).abs() < 1e-12);
        assert!((t.standard_error - 0.0917).abs() < 5e-5);
        assert!((t.p_value - 1.3e-5).abs() < 0.05e-5);
        let t = two_proportion_test(&DataConfiguration::new(25, 25, 5, 45)).unwrap();
        assert!((t.standard_error - 0.0825).abs() < 5e-5);
        assert!((t.p_value - 1.2302e-6).abs() < 1e-10);
        let t = two_proportion_test(&DataConfiguration::new(2, 2, 3, 3)).unwrap();
        assert_eq!((t.estimate, t.p_value), (0.0, 1.0));
        assert!(matches!(two_proportion_test(&DataConfiguration::new(0, 0, 1, 1)), Err(Error::EmptyArm(_))));
    }
}
