//! Test-side ground truth. Nothing here calls the library's likelihood
//! code: likelihoods come from a direct sum over the four intervention
//! counts, and p-values from the definition applied to the full lattice.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};

use defiers::lattice::{DataConfiguration, TypeConfiguration};

pub const VITA: [u32; 4] = [25, 25, 5, 45];
pub const MORTEM: [u32; 4] = [35, 15, 15, 35];

pub fn vita() -> DataConfiguration {
    DataConfiguration::new(VITA[0], VITA[1], VITA[2], VITA[3])
}

pub fn mortem() -> DataConfiguration {
    DataConfiguration::new(MORTEM[0], MORTEM[1], MORTEM[2], MORTEM[3])
}

#[derive(Debug, Clone, Copy)]
pub enum Mech {
    Iid(u64, u64),
    Urn(u32),
}

pub fn choose(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn ratio(a: u64, b: u64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

/// Probability of the data given the types, by summing over how many of
/// each type were drawn into intervention.
pub fn direct_likelihood(theta: [u32; 4], g: [u32; 4], mech: Mech) -> BigRational {
    let s: u32 = theta.iter().sum();
    assert_eq!(s, g.iter().sum::<u32>());
    let mut k = BigInt::zero();
    let n1_target = g[0] + g[1];
    for a in 0..=theta[0] {
        for b in 0..=theta[1] {
            for c in 0..=theta[2] {
                for d in 0..=theta[3] {
                    // intervention: never/defier untreated, complier/always treated
                    let treated_i = c + d;
                    let untreated_i = a + b;
                    // control: defier/always treated, never/complier untreated
                    let treated_c = (theta[1] - b) + (theta[3] - d);
                    let untreated_c = (theta[0] - a) + (theta[2] - c);
                    if [treated_i, untreated_i, treated_c, untreated_c] == g {
                        k += choose(theta[0], a) * choose(theta[1], b) * choose(theta[2], c) * choose(theta[3], d);
                    }
                }
            }
        }
    }
    let arm = match mech {
        Mech::Iid(num, den) => {
            let p = ratio(num, den);
            let q = BigRational::one() - &p;
            Pow::pow(&p, n1_target as u64) * Pow::pow(&q, (s - n1_target) as u64)
        }
        Mech::Urn(m) => {
            if n1_target != m {
                return BigRational::zero();
            }
            BigRational::new(BigInt::one(), choose(s, m))
        }
    };
    BigRational::from_integer(k) * arm
}

pub fn compositions(s: u32) -> Vec<[u32; 4]> {
    let mut out = Vec::new();
    for a in 0..=s {
        for b in 0..=s - a {
            for c in 0..=s - a - b {
                out.push([a, b, c, s - a - b - c]);
            }
        }
    }
    out
}

/// Full likelihood matrix `l[theta][g]` in lattice order.
pub fn likelihood_matrix(s: u32, mech: Mech) -> Vec<Vec<BigRational>> {
    let pts = compositions(s);
    pts.iter().map(|t| pts.iter().map(|g| direct_likelihood(*t, *g, mech)).collect()).collect()
}

/// Worst-case p-values of the likelihood-ratio test for every outcome,
/// computed from the definition.
pub fn brute_force_p_values(l: &[Vec<BigRational>], null: &[bool]) -> Vec<BigRational> {
    let n = l.len();
    let lambda: Vec<Option<BigRational>> = (0..n)
        .map(|gi| {
            let den = (0..n).map(|t| l[t][gi].clone()).max().unwrap();
            if den.is_zero() {
                return None;
            }
            let num = (0..n).filter(|&t| null[t]).map(|t| l[t][gi].clone()).max().unwrap();
            Some(num / den)
        })
        .collect();
    (0..n)
        .map(|gi| {
            let obs = lambda[gi].clone().unwrap_or_else(BigRational::zero);
            (0..n)
                .filter(|&t| null[t])
                .map(|t| {
                    (0..n)
                        .filter(|&g2| matches!(&lambda[g2], Some(x) if *x <= obs))
                        .fold(BigRational::zero(), |acc, g2| acc + &l[t][g2])
                })
                .max()
                .unwrap()
        })
        .collect()
}

pub fn to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap()
}

pub fn theta(c: [u32; 4]) -> TypeConfiguration {
    TypeConfiguration::from_counts(c)
}

pub fn data(c: [u32; 4]) -> DataConfiguration {
    DataConfiguration::new(c[0], c[1], c[2], c[3])
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
