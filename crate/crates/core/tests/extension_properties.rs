mod common;

use common::{choose, compositions, rel_close};
use defiers::asymptotic::{asymptotic_likelihood_iid, asymptotic_likelihood_urn, PopulationConfiguration};
use defiers::lattice::{enumerate_data_configs, enumerate_type_configs, RandomizationSpec, SampleSize, TypeConfiguration};
use defiers::likelihood::Engine;
use defiers::shares::{bfh_lower_bounds, limited_data_likelihood, SharePair};
use num_rational::Ratio;
use num_traits::ToPrimitive;

/// Multinomial probability of the type counts under population shares.
fn multinomial(theta: [u32; 4], pi: [f64; 4]) -> f64 {
    let s: u32 = theta.iter().sum();
    let coef = choose(s, theta[0]) * choose(s - theta[0], theta[1]) * choose(s - theta[0] - theta[1], theta[2]);
    let c = coef.to_f64().unwrap();
    theta.iter().zip(pi).fold(c, |acc, (&k, p)| acc * p.powi(k as i32))
}

fn pi_grid() -> Vec<PopulationConfiguration> {
    let mut out = Vec::new();
    let d = 5;
    for a in 0..=d {
        for b in 0..=d - a {
            for c in 0..=d - a - b {
                let f = |x: u32| x as f64 / d as f64;
                out.push(PopulationConfiguration::new(f(a), f(b), f(c)).unwrap());
            }
        }
    }
    out
}

#[test]
fn population_likelihood_is_the_mixture_of_finite_ones() {
    for s in 1..=6u32 {
        let size = SampleSize::new(s).unwrap();
        for p in [Ratio::new(1u64, 2), Ratio::new(1, 3)] {
            let engine = Engine::new(size, RandomizationSpec::iid(*p.numer(), *p.denom()).unwrap()).unwrap();
            for pi in pi_grid() {
                for g in enumerate_data_configs(size) {
                    let mixture: f64 = compositions(s)
                        .into_iter()
                        .map(|t| engine.likelihood(&TypeConfiguration::from_counts(t), &g).unwrap().value() * multinomial(t, pi.pi))
                        .sum();
                    let direct = asymptotic_likelihood_iid(&pi, &g, p).unwrap().value();
                    assert!((mixture - direct).abs() <= 1e-10, "s={s} {g} {:?}: {mixture} vs {direct}", pi.pi);
                }
            }
        }
    }
}

#[test]
fn urn_form_is_iid_form_divided_by_the_arm_law() {
    for s in 2..=9u32 {
        let size = SampleSize::new(s).unwrap();
        for pi in pi_grid() {
            for g in enumerate_data_configs(size) {
                let m = g.intervention_size();
                if m == 0 || m == s {
                    continue;
                }
                for (num, den) in [(1u64, 2u64), (2, 5)] {
                    let p = num as f64 / den as f64;
                    let iid = asymptotic_likelihood_iid(&pi, &g, Ratio::new(num, den)).unwrap().value();
                    let arm = p.powi(m as i32) * (1.0 - p).powi((s - m) as i32) * choose(s, m).to_f64().unwrap();
                    let urn = asymptotic_likelihood_urn(&pi, &g, m).unwrap().value();
                    assert!(rel_close(urn, iid / arm, 1e-12), "{g} {:?}: {urn} vs {}", pi.pi, iid / arm);
                }
            }
        }
    }
}

#[test]
fn share_bounds_hold_for_every_lattice_point() {
    for s in 1..=10u32 {
        for theta in enumerate_type_configs(SampleSize::new(s).unwrap()) {
            let [t1, t2, t3, _] = theta.counts();
            let v = Ratio::new(s - t1 - t2, s);
            let c = Ratio::new(s - t1 - t3, s);
            let (d_lb, c_lb) = bfh_lower_bounds(&SharePair::new(v, c).unwrap()).unwrap();
            assert!(Ratio::new(t2 as i64, s as i64) >= d_lb, "{theta}");
            assert!(Ratio::new(t3 as i64, s as i64) >= c_lb, "{theta}");
        }
    }
}

/// Summing the shares-only likelihood over every defined share pair gives
/// the probability that both arms are non-empty.
#[test]
fn shares_likelihood_partitions_the_outcomes() {
    for s in 2..=7u32 {
        let size = SampleSize::new(s).unwrap();
        let engine = Engine::new(size, RandomizationSpec::iid(1, 3).unwrap()).unwrap();
        let mut pairs: Vec<SharePair> = enumerate_data_configs(size)
            .filter(|g| g.intervention_size() > 0 && g.control_size() > 0)
            .map(|g| SharePair::from_data(&g))
            .collect();
        pairs.sort();
        pairs.dedup();
        let both_arms = 1.0 - (2.0f64 / 3.0).powi(s as i32) - (1.0f64 / 3.0).powi(s as i32);
        for theta in enumerate_type_configs(size) {
            let total: f64 = pairs.iter().map(|sp| limited_data_likelihood(&engine, &theta, sp).unwrap().value()).sum();
            assert!((total - both_arms).abs() < 1e-12, "{theta}: {total} vs {both_arms}");
        }
    }
}
