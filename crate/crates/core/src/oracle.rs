//! Brute-force ground truth for small samples.
//!
//! Every assignment vector is enumerated explicitly and weighted by its exact
//! probability; the induced data configurations are tallied in rationals.
//! Nothing here shares code with the likelihood formulas.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};

use crate::error::{Error, Result};
use crate::lattice::{DataConfiguration, RandomizationSpec, SampleSize, TypeConfiguration};

/// Largest sample sizes the oracle will enumerate.
#[derive(Debug, Clone, Copy)]
pub struct OracleLimits {
    pub iid_max_s: u32,
    pub urn_max_s: u32,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { iid_max_s: 12, urn_max_s: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Never,
    Defier,
    Complier,
    Always,
}

impl Kind {
    /// Treatment status under (control, intervention).
    fn treated(self, intervention: bool) -> bool {
        match self {
            Kind::Never => false,
            Kind::Always => true,
            Kind::Defier => !intervention,
            Kind::Complier => intervention,
        }
    }
}

/// Per-individual intervention indicators with individuals listed by type.
#[derive(Debug, Clone)]
pub struct AssignmentVector {
    pub z: Vec<bool>,
}

impl AssignmentVector {
    /// The data configuration this assignment produces for `theta`.
    pub fn data(&self, theta: &TypeConfiguration) -> DataConfiguration {
        let mut g = [0u32; 4];
        for (kind, z) in individuals(theta).zip(&self.z) {
            let d = kind.treated(*z);
            let cell = match (*z, d) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            g[cell] += 1;
        }
        DataConfiguration::new(g[0], g[1], g[2], g[3])
    }
}

fn individuals(theta: &TypeConfiguration) -> impl Iterator<Item = Kind> + '_ {
    let kinds = [Kind::Never, Kind::Defier, Kind::Complier, Kind::Always];
    theta
        .counts()
        .into_iter()
        .zip(kinds)
        .flat_map(|(n, k)| std::iter::repeat_n(k, n as usize))
}

fn to_big(r: num_rational::Ratio<u64>) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Exact distribution of the data configuration when the true type
/// configuration is `theta`, with the default enumeration caps.
pub fn exhaustive_distribution(
    theta: &TypeConfiguration,
    spec: &RandomizationSpec,
) -> Result<BTreeMap<DataConfiguration, BigRational>> {
    exhaustive_distribution_with(theta, spec, OracleLimits::default())
}

pub fn exhaustive_distribution_with(
    theta: &TypeConfiguration,
    spec: &RandomizationSpec,
    limits: OracleLimits,
) -> Result<BTreeMap<DataConfiguration, BigRational>> {
    let s = theta.total();
    spec.validate(SampleSize::new(s)?)?;
    let cap = match spec {
        RandomizationSpec::Iid { .. } => limits.iid_max_s,
        RandomizationSpec::Urn { .. } => limits.urn_max_s,
    };
    if s > cap {
        return Err(Error::OracleTooLarge(format!("s={s} exceeds the oracle cap {cap} for {spec}")));
    }
    let mut dist: BTreeMap<DataConfiguration, BigRational> = BTreeMap::new();
    let n = s as usize;
    let urn_weight = match *spec {
        RandomizationSpec::Urn { m } => {
            let ways = num_integer::binomial(BigInt::from(s), BigInt::from(m));
            Some((m, BigRational::new(BigInt::one(), ways)))
        }
        RandomizationSpec::Iid { .. } => None,
    };
    for mask in 0u64..(1u64 << n) {
        let k = mask.count_ones();
        let weight = match (&urn_weight, spec) {
            (Some((m, w)), _) => {
                if k != *m {
                    continue;
                }
                w.clone()
            }
            (None, RandomizationSpec::Iid { p }) => {
                let p = to_big(*p);
                let q = BigRational::one() - &p;
                Pow::pow(&p, k as u64) * Pow::pow(&q, (s - k) as u64)
            }
            (None, RandomizationSpec::Urn { .. }) => unreachable!(),
        };
        let z = AssignmentVector { z: (0..n).map(|i| mask >> i & 1 == 1).collect() };
        *dist.entry(z.data(theta)).or_insert_with(BigRational::zero) += weight;
    }
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn single_never_taker() {
        let dist = exhaustive_distribution(
            &TypeConfiguration::new(1, 0, 0, 0),
            &RandomizationSpec::iid(1, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(dist.len(), 2);
        assert_eq!(dist[&DataConfiguration::new(0, 1, 0, 0)], r(1, 2));
        assert_eq!(dist[&DataConfiguration::new(0, 0, 0, 1)], r(1, 2));
    }

    #[test]
    fn urn_by_hand() {
        let dist = exhaustive_distribution(&TypeConfiguration::new(2, 0, 2, 0), &RandomizationSpec::urn(2))
            .unwrap();
        assert_eq!(dist.len(), 3);
        assert_eq!(dist[&DataConfiguration::new(1, 1, 0, 2)], r(2, 3));
        assert_eq!(dist[&DataConfiguration::new(2, 0, 0, 2)], r(1, 6));
        assert_eq!(dist[&DataConfiguration::new(0, 2, 0, 2)], r(1, 6));
    }

    #[test]
    fn always_takers_are_always_treated() {
        for spec in [RandomizationSpec::iid(2, 3).unwrap(), RandomizationSpec::urn(2)] {
            let dist = exhaustive_distribution(&TypeConfiguration::new(0, 0, 0, 5), &spec).unwrap();
            assert!(dist.keys().all(|g| g.g2() == 0 && g.g4() == 0));
        }
    }

    #[test]
    fn mass_is_exactly_one() {
        for spec in [RandomizationSpec::iid(1, 4).unwrap(), RandomizationSpec::urn(3)] {
            let dist = exhaustive_distribution(&TypeConfiguration::new(2, 1, 2, 1), &spec).unwrap();
            let total: BigRational = dist.values().sum();
            assert_eq!(total, BigRational::one());
        }
    }

    #[test]
    fn arm_size_is_binomial() {
        let p = r(2, 3);
        let s = 7u32;
        let dist = exhaustive_distribution(
            &TypeConfiguration::new(2, 2, 1, 2),
            &RandomizationSpec::iid(2, 3).unwrap(),
        )
        .unwrap();
        let mut by_size = vec![BigRational::zero(); s as usize + 1];
        for (g, w) in &dist {
            by_size[g.intervention_size() as usize] += w;
        }
        for (k, got) in by_size.iter().enumerate() {
            let c = num_integer::binomial(BigInt::from(s), BigInt::from(k));
            let expect = BigRational::from_integer(c)
                * Pow::pow(&p, k as u64)
                * Pow::pow(&(BigRational::one() - &p), (s as usize - k) as u64);
            assert_eq!(*got, expect);
        }
    }

    #[test]
    fn cap_enforced() {
        let err = exhaustive_distribution(
            &TypeConfiguration::new(13, 0, 0, 0),
            &RandomizationSpec::iid(1, 2).unwrap(),
        );
        assert!(matches!(err, Err(Error::OracleTooLarge(_))));
    }
}
