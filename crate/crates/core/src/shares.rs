//! Arm-wise treated shares: Boole-Fréchet-Hoeffding lower bounds and the
//! likelihood and test that only see the two shares instead of all of `g`.

use std::collections::HashMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::hypothesis::HypothesisSet;
use crate::lattice::{enumerate_data_configs, DataConfiguration, RandomizationSpec, SampleSize, TypeConfiguration};
use crate::likelihood::Engine;
use crate::numeric::{LikelihoodValue, TIE_RELATIVE_TOLERANCE};

/// Share treated in the intervention arm (`v_hat`) and in the control arm
/// (`c_hat`). `None` marks an empty arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SharePair {
    pub v_hat: Option<Ratio<u32>>,
    pub c_hat: Option<Ratio<u32>>,
}

fn share(part: u32, whole: u32) -> Option<Ratio<u32>> {
    (whole > 0).then(|| Ratio::new(part, whole))
}

impl SharePair {
    pub fn new(v_hat: Ratio<u32>, c_hat: Ratio<u32>) -> Result<Self> {
        for x in [v_hat, c_hat] {
            if x > Ratio::from_integer(1) {
                return Err(invalid(format!("share {x} exceeds one")));
            }
        }
        Ok(SharePair { v_hat: Some(v_hat), c_hat: Some(c_hat) })
    }

    pub fn from_data(g: &DataConfiguration) -> Self {
        SharePair {
            v_hat: share(g.g1(), g.intervention_size()),
            c_hat: share(g.g3(), g.control_size()),
        }
    }

    /// Both shares, or the arm that is empty.
    pub fn defined(&self) -> Result<(Ratio<u32>, Ratio<u32>)> {
        match (self.v_hat, self.c_hat) {
            (Some(v), Some(c)) => Ok((v, c)),
            (None, _) => Err(Error::EmptyArm("intervention")),
            (_, None) => Err(Error::EmptyArm("control")),
        }
    }

    /// `v_hat - c_hat`, the point estimate of the average effect.
    pub fn effect(&self) -> Result<Ratio<i64>> {
        let (v, c) = self.defined()?;
        Ok(widen(v) - widen(c))
    }
}

fn widen(r: Ratio<u32>) -> Ratio<i64> {
    Ratio::new(*r.numer() as i64, *r.denom() as i64)
}

impl fmt::Display for SharePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |x: Option<Ratio<u32>>| x.map_or("undefined".to_string(), |r| r.to_string());
        write!(f, "({}, {})", show(self.v_hat), show(self.c_hat))
    }
}

impl Serialize for SharePair {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let show = |x: Option<Ratio<u32>>| x.map(|r| r.to_string());
        let mut st = ser.serialize_struct("SharePair", 2)?;
        st.serialize_field("v_hat", &show(self.v_hat))?;
        st.serialize_field("c_hat", &show(self.c_hat))?;
        st.end()
    }
}

/// Lower bounds on the defier and complier shares from arm-wise shares:
/// `max(c - v, 0)` and `max(v - c, 0)`.
pub fn bfh_lower_bounds(shares: &SharePair) -> Result<(Ratio<i64>, Ratio<i64>)> {
    let d = shares.effect()?;
    let zero = Ratio::zero();
    Ok(((-d).max(zero), d.max(zero)))
}

/// Data configurations whose shares equal `shares`, found by stepping
/// `g1` through the values that make every implied cell integral.
pub fn share_preimage(s: SampleSize, shares: &SharePair) -> Result<Vec<DataConfiguration>> {
    let (v, c) = shares.defined()?;
    let n = s.get();
    let mut out = Vec::new();
    let mut push = |g1: u32, n1: u32| {
        if n1 == 0 || n1 >= n {
            return;
        }
        let n0 = n - n1;
        let g3 = c * Ratio::from_integer(n0);
        if g3.is_integer() {
            let g3 = g3.to_integer();
            out.push(DataConfiguration::new(g1, n1 - g1, g3, n0 - g3));
        }
    };
    if v.is_zero() {
        for g2 in 1..n {
            push(0, g2);
        }
    } else {
        let (a, b) = (*v.numer(), *v.denom());
        let mut g1 = a;
        while g1 <= n {
            push(g1, g1 / a * b);
            g1 += a;
        }
    }
    out.sort_by_key(|g| g.rank());
    Ok(out)
}

/// Probability, given `theta`, that the observed shares equal `shares`.
pub fn limited_data_likelihood(
    engine: &Engine,
    theta: &TypeConfiguration,
    shares: &SharePair,
) -> Result<LikelihoodValue> {
    let mut acc = f64::NEG_INFINITY;
    for g in share_preimage(engine.sample_size(), shares)? {
        let l = engine.likelihood(theta, &g)?.log_value;
        acc = crate::numeric::log_add(acc, l);
    }
    Ok(LikelihoodValue::from_log(acc))
}

/// How undefined shares are counted when tallying realizable share pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyArmConvention {
    /// Pairs with an undefined share are dropped.
    Exclude,
    /// Every pair with an undefined share is one extra point.
    SinglePoint,
    /// Undefined is one more value of that coordinate; the other share is kept.
    PerCoordinate,
}

/// The finite set of observable share pairs and the map from data ranks.
#[derive(Debug, Clone)]
pub struct ShareSpace {
    class_of: Vec<u32>,
    pairs: Vec<SharePair>,
}

const UNREACHABLE: u32 = u32::MAX;

impl ShareSpace {
    /// Classes in order of first appearance along the canonical data order.
    /// Configurations the mechanism cannot produce get no class.
    pub fn new(s: SampleSize, spec: &RandomizationSpec) -> Self {
        let mut ids: HashMap<SharePair, u32> = HashMap::new();
        let mut pairs = Vec::new();
        let class_of = enumerate_data_configs(s)
            .map(|g| {
                if !spec.admits(&g) {
                    return UNREACHABLE;
                }
                let p = SharePair::from_data(&g);
                *ids.entry(p).or_insert_with(|| {
                    pairs.push(p);
                    pairs.len() as u32 - 1
                })
            })
            .collect();
        ShareSpace { class_of, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn class_of(&self, rank: usize) -> Option<u32> {
        (self.class_of[rank] != UNREACHABLE).then_some(self.class_of[rank])
    }

    pub fn pair(&self, class: u32) -> SharePair {
        self.pairs[class as usize]
    }

    pub fn find(&self, shares: &SharePair) -> Option<u32> {
        self.pairs.iter().position(|p| p == shares).map(|i| i as u32)
    }

    /// Number of realizable pairs under a counting convention.
    pub fn count(&self, convention: EmptyArmConvention) -> usize {
        let defined = self.pairs.iter().filter(|p| p.v_hat.is_some() && p.c_hat.is_some()).count();
        let undefined = self.pairs.len() - defined;
        match convention {
            EmptyArmConvention::Exclude => defined,
            EmptyArmConvention::SinglePoint => defined + usize::from(undefined > 0),
            EmptyArmConvention::PerCoordinate => self.pairs.len(),
        }
    }
}

/// Outcome of the shares-only likelihood-ratio test.
#[derive(Debug, Clone, Serialize)]
pub struct LimitedTestResult {
    pub shares: SharePair,
    pub lambda: f64,
    pub p_value: f64,
    pub worst_case: TypeConfiguration,
    pub argmax_null: TypeConfiguration,
    pub argmax_global: TypeConfiguration,
    /// Number of distinct observable share pairs.
    pub share_pairs: usize,
}

struct Maxima {
    den: Vec<(f64, u32)>,
    num: Vec<(f64, u32)>,
}

fn better(a: (f64, u32), b: (f64, u32)) -> (f64, u32) {
    if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
        a
    } else {
        b
    }
}

/// Worst-case p-value of the likelihood-ratio test that observes only the
/// shares. Every `theta` is visited once to form its share-class
/// likelihoods; class maxima give the ratio for every possible outcome.
pub fn limited_data_p_value(
    engine: &Engine,
    shares: &SharePair,
    h0: &HypothesisSet,
) -> Result<LimitedTestResult> {
    let s = engine.sample_size();
    engine.binomials()?;
    let space = ShareSpace::new(s, engine.spec());
    let observed = space
        .find(shares)
        .ok_or_else(|| invalid(format!("shares {shares} cannot occur at s={s}")))?;
    let n1_max = s.get() as usize;
    let arm: Vec<f64> = (0..=n1_max).map(|n1| engine.log_arm_factor_by_size(n1 as u32)).collect();
    let top = arm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = arm.iter().map(|a| (a - top).exp()).collect();
    let classes = space.len();

    let fresh = || Maxima { den: vec![(0.0, u32::MAX); classes], num: vec![(0.0, u32::MAX); classes] };
    let maxima = (0..s.lattice_len() as u32)
        .into_par_iter()
        .fold(
            || (fresh(), vec![0.0f64; classes], Vec::<u32>::new()),
            |(mut m, mut sums, mut touched), t| {
                let theta = TypeConfiguration::from_rank(s, t as usize);
                engine
                    .scan_data(&theta, |rank, g, k| {
                        if k <= 0.0 {
                            return;
                        }
                        let Some(c) = space.class_of(rank) else { return };
                        if sums[c as usize] == 0.0 {
                            touched.push(c);
                        }
                        sums[c as usize] += k * scaled[(g[0] + g[1]) as usize];
                    })
                    .expect("binomial table checked above");
                let member = h0.contains_rank(t as usize);
                for &c in &touched {
                    let v = (sums[c as usize], t);
                    m.den[c as usize] = better(v, m.den[c as usize]);
                    if member {
                        m.num[c as usize] = better(v, m.num[c as usize]);
                    }
                    sums[c as usize] = 0.0;
                }
                touched.clear();
                (m, sums, touched)
            },
        )
        .map(|(m, _, _)| m)
        .reduce(fresh, |mut a, b| {
            for (x, y) in a.den.iter_mut().zip(b.den) {
                *x = better(*x, y);
            }
            for (x, y) in a.num.iter_mut().zip(b.num) {
                *x = better(*x, y);
            }
            a
        });

    let ratio = |c: usize| {
        let (d, _) = maxima.den[c];
        let (n, _) = maxima.num[c];
        if d > 0.0 {
            Some((n / d).min(1.0))
        } else {
            None
        }
    };
    let lambda = ratio(observed as usize).unwrap_or(0.0);
    let in_region: Vec<bool> = (0..classes)
        .map(|c| match ratio(c) {
            None => false,
            Some(r) if lambda == 0.0 => r == 0.0,
            Some(r) => r <= lambda * (1.0 + TIE_RELATIVE_TOLERANCE),
        })
        .collect();

    let (p_value, worst) = if lambda >= 1.0 {
        (1.0, h0.members()[0])
    } else {
        h0.members()
            .par_iter()
            .map(|&t| {
                let theta = TypeConfiguration::from_rank(s, t as usize);
                let mut acc = 0.0;
                engine
                    .scan_data(&theta, |rank, g, k| {
                        if k > 0.0 && space.class_of(rank).is_some_and(|c| in_region[c as usize]) {
                            acc += (k.ln() + arm[(g[0] + g[1]) as usize]).exp();
                        }
                    })
                    .expect("binomial table checked above");
                (acc, t)
            })
            .reduce(|| (f64::NEG_INFINITY, u32::MAX), better)
    };
    let cfg = |t: u32| TypeConfiguration::from_rank(s, t as usize);
    Ok(LimitedTestResult {
        shares: *shares,
        lambda,
        p_value: p_value.min(1.0),
        worst_case: cfg(worst),
        argmax_null: cfg(maxima.num[observed as usize].1),
        argmax_global: cfg(maxima.den[observed as usize].1),
        share_pairs: classes,
    })
}

/// Builds a share pair from `a/b` text or a decimal.
pub fn parse_share(text: &str) -> Result<Ratio<u32>> {
    let text = text.trim();
    let r = if let Some((a, b)) = text.split_once('/') {
        let a: u32 = a.trim().parse().map_err(|_| invalid(format!("bad share {text:?}")))?;
        let b: u32 = b.trim().parse().map_err(|_| invalid(format!("bad share {text:?}")))?;
        if b == 0 {
            return Err(invalid("share denominator is zero"));
        }
        Ratio::new(a, b)
    } else {
        let (int, frac) = text.split_once('.').unwrap_or((text, ""));
        let digits = frac.len() as u32;
        if digits > 9 {
            return Err(invalid(format!("too many decimals in {text:?}")));
        }
        let scale = 10u32.pow(digits);
        let int: u32 = if int.is_empty() { 0 } else { int.parse().map_err(|_| invalid(format!("bad share {text:?}")))? };
        let frac: u32 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| invalid(format!("bad share {text:?}")))? };
        Ratio::new(int * scale + frac, scale)
    };
    if r > Ratio::from_integer(1) {
        return Err(invalid(format!("share {text} exceeds one")));
    }
    Ok(r)
}
