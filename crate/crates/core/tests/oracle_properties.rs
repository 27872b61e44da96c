mod common;

use defiers::error::Error;
use defiers::lattice::{enumerate_type_configs, RandomizationSpec, SampleSize, TypeConfiguration};
use defiers::oracle::{exhaustive_distribution, exhaustive_distribution_with, OracleLimits};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};

#[test]
fn total_mass_is_exactly_one() {
    for s in 1..=7u32 {
        for spec in [RandomizationSpec::iid(1, 2).unwrap(), RandomizationSpec::iid(3, 7).unwrap(), RandomizationSpec::urn(1)] {
            if spec.validate(SampleSize::new(s).unwrap()).is_err() {
                continue;
            }
            for theta in enumerate_type_configs(SampleSize::new(s).unwrap()) {
                let total = exhaustive_distribution(&theta, &spec)
                    .unwrap()
                    .values()
                    .fold(BigRational::zero(), |a, b| a + b);
                assert!(total.is_one(), "{theta} {spec}");
            }
        }
    }
}

#[test]
fn intervention_arm_size_is_binomial() {
    let p = BigRational::new(BigInt::from(3), BigInt::from(7));
    let q = BigRational::one() - &p;
    for s in 1..=8u32 {
        let spec = RandomizationSpec::iid(3, 7).unwrap();
        for theta in enumerate_type_configs(SampleSize::new(s).unwrap()).step_by(5) {
            let dist = exhaustive_distribution(&theta, &spec).unwrap();
            for n1 in 0..=s {
                let got = dist
                    .iter()
                    .filter(|(g, _)| g.intervention_size() == n1)
                    .fold(BigRational::zero(), |a, (_, v)| a + v);
                let want = BigRational::from_integer(common::choose(s, n1)) * Pow::pow(&p, n1 as u64) * Pow::pow(&q, (s - n1) as u64);
                assert_eq!(got, want, "{theta} n1={n1}");
            }
        }
    }
}

#[test]
fn size_cap_is_enforced() {
    let theta = TypeConfiguration::new(5, 5, 5, 5);
    let limits = OracleLimits { iid_max_s: 10, urn_max_s: 10 };
    let r = exhaustive_distribution_with(&theta, &RandomizationSpec::iid(1, 2).unwrap(), limits);
    assert!(matches!(r, Err(Error::OracleTooLarge(_))));
}
