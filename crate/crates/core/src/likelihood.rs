//! Finite-sample likelihood of a type configuration given observed data.
//!
//! For a type configuration `theta` and data `g`, the probability of `g` is a
//! sum over the number `ell` of never-takers drawn into intervention; once
//! `ell` is fixed the other three intervention counts are forced by `g`. The
//! summation range is tightened to the values of `ell` for which every
//! implied count lies inside its type.
//!
//! For both built-in mechanisms each term factors into the same product of
//! four binomial coefficients times a factor that depends on `g` only through
//! the intervention-arm size. [`Engine`] exploits this: it computes the
//! combinatorial count `K(theta, g)` (the number of assignments producing
//! `g`) and multiplies by the arm factor.

use num_bigint::{BigInt, BigUint};
use num_rational::{BigRational, Ratio};
use num_traits::{One, Pow, Zero};

use crate::error::{invalid, Error, Result};
use crate::lattice::{
    rank3, ArmSplit, DataConfiguration, RandomizationSpec, SampleSize, TypeConfiguration,
};
use crate::numeric::{
    ln_biguint, log_add, log_binom_pmf, BinomialTable, ExactBinomials, LikelihoodValue,
    LnFactorial, LogProbability, LINEAR_TABLE_LIMIT,
};

/// Evaluation mode for a likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Log-domain doubles.
    #[default]
    Log,
    /// Big-integer rationals alongside the log value.
    Exact,
}

/// Inclusive range of the never-taker index `ell` with every implied
/// intervention count inside its type, or `None` when the range is empty.
#[inline(always)]
pub fn split_range(theta: [u32; 4], g: [u32; 4]) -> Option<(u32, u32)> {
    let [t1, t2, t3, _] = theta.map(i64::from);
    let [g1, g2, g3, g4] = g.map(i64::from);
    let lo = 0.max(g2 - t2).max(t1 - g4).max(t1 + t3 - g1 - g4);
    let hi = t1.min(g2).min(t1 + t3 - g4).min(g2 + g3 - t2);
    (lo <= hi).then_some((lo as u32, hi as u32))
}

/// True iff some assignment reconciles `theta` with `g` under `spec`.
pub fn feasible(theta: &TypeConfiguration, g: &DataConfiguration, spec: &RandomizationSpec) -> bool {
    theta.total() == g.total() && spec.admits(g) && split_range(theta.counts(), g.counts()).is_some()
}

/// Joint pmf of the four intervention counts for a given type configuration.
pub trait AssignmentPmf {
    fn log_pmf(&self, split: &ArmSplit, theta: &TypeConfiguration) -> f64;

    /// Exact value, when the mechanism has rational parameters.
    fn exact_pmf(&self, _split: &ArmSplit, _theta: &TypeConfiguration) -> Option<BigRational> {
        None
    }
}

/// Independent coin flips: a product of four binomial pmfs.
#[derive(Debug)]
pub struct IidAssignment {
    p: LogProbability,
    lnf: LnFactorial,
    exact: ExactBinomials,
}

impl IidAssignment {
    pub fn new(s: SampleSize, p: Ratio<u64>) -> Self {
        IidAssignment {
            p: LogProbability::new(p),
            lnf: LnFactorial::new(s.get()),
            exact: ExactBinomials::new(s.get()),
        }
    }
}

fn split_cells(split: &ArmSplit, theta: &TypeConfiguration) -> [(i64, i64); 4] {
    let t = theta.counts().map(i64::from);
    [(split.n12, t[0]), (split.n22, t[1]), (split.n31, t[2]), (split.n41, t[3])]
}

impl AssignmentPmf for IidAssignment {
    fn log_pmf(&self, split: &ArmSplit, theta: &TypeConfiguration) -> f64 {
        split_cells(split, theta)
            .iter()
            .map(|&(a, b)| log_binom_pmf(&self.lnf, a, b, &self.p))
            .sum()
    }

    fn exact_pmf(&self, split: &ArmSplit, theta: &TypeConfiguration) -> Option<BigRational> {
        let p = BigRational::new(
            BigInt::from(*self.p.exact.numer()),
            BigInt::from(*self.p.exact.denom()),
        );
        let q = BigRational::one() - &p;
        let mut acc = BigRational::one();
        for (a, b) in split_cells(split, theta) {
            if a < 0 || a > b {
                return Some(BigRational::zero());
            }
            let c = BigInt::from(self.exact.choose(b, a));
            acc *= BigRational::from_integer(c) * Pow::pow(&p, a as u64) * Pow::pow(&q, (b - a) as u64);
        }
        Some(acc)
    }
}

/// Drawing exactly `m` names from an urn: multivariate hypergeometric.
#[derive(Debug)]
pub struct UrnAssignment {
    m: u32,
    s: u32,
    lnf: LnFactorial,
    exact: ExactBinomials,
}

impl UrnAssignment {
    pub fn new(s: SampleSize, m: u32) -> Result<Self> {
        RandomizationSpec::urn(m).validate(s)?;
        Ok(UrnAssignment {
            m,
            s: s.get(),
            lnf: LnFactorial::new(s.get()),
            exact: ExactBinomials::new(s.get()),
        })
    }
}

impl AssignmentPmf for UrnAssignment {
    fn log_pmf(&self, split: &ArmSplit, theta: &TypeConfiguration) -> f64 {
        if split.intervention_size() != self.m as i64 {
            return f64::NEG_INFINITY;
        }
        let num: f64 = split_cells(split, theta).iter().map(|&(a, b)| self.lnf.ln_choose(b, a)).sum();
        num - self.lnf.ln_choose(self.s as i64, self.m as i64)
    }

    fn exact_pmf(&self, split: &ArmSplit, theta: &TypeConfiguration) -> Option<BigRational> {
        if split.intervention_size() != self.m as i64 {
            return Some(BigRational::zero());
        }
        let mut num = BigUint::one();
        for (a, b) in split_cells(split, theta) {
            num *= self.exact.choose(b, a);
        }
        let den = self.exact.choose(self.s as i64, self.m as i64);
        Some(BigRational::new(num.into(), den.into()))
    }
}

fn check_same_size(theta: &TypeConfiguration, g: &DataConfiguration) -> Result<()> {
    if theta.total() != g.total() {
        return Err(invalid(format!(
            "type configuration {theta} and data configuration {g} have different sample sizes"
        )));
    }
    Ok(())
}

/// Sums `f` over the tightened `ell` range in ascending order.
pub fn general_likelihood<F: AssignmentPmf + ?Sized>(
    theta: &TypeConfiguration,
    g: &DataConfiguration,
    f: &F,
    mode: Mode,
) -> Result<LikelihoodValue> {
    check_same_size(theta, g)?;
    let Some((lo, hi)) = split_range(theta.counts(), g.counts()) else {
        return Ok(match mode {
            Mode::Log => LikelihoodValue::zero(),
            Mode::Exact => LikelihoodValue::from_exact(BigRational::zero()),
        });
    };
    sum_over(theta, g, f, mode, lo as i64..=hi as i64)
}

/// Reference form summing over the full `0..=theta.never` range; out-of-range
/// splits contribute zero through the pmf itself.
pub fn general_likelihood_unpruned<F: AssignmentPmf + ?Sized>(
    theta: &TypeConfiguration,
    g: &DataConfiguration,
    f: &F,
    mode: Mode,
) -> Result<LikelihoodValue> {
    check_same_size(theta, g)?;
    sum_over(theta, g, f, mode, 0..=theta.never as i64)
}

fn sum_over<F: AssignmentPmf + ?Sized>(
    theta: &TypeConfiguration,
    g: &DataConfiguration,
    f: &F,
    mode: Mode,
    range: std::ops::RangeInclusive<i64>,
) -> Result<LikelihoodValue> {
    let mut log_value = f64::NEG_INFINITY;
    let mut exact = (mode == Mode::Exact).then(BigRational::zero);
    for ell in range {
        let split = ArmSplit::for_index(theta, g, ell);
        log_value = log_add(log_value, f.log_pmf(&split, theta));
        if let Some(acc) = exact.as_mut() {
            let term = f
                .exact_pmf(&split, theta)
                .ok_or_else(|| invalid("assignment pmf has no exact form"))?;
            *acc += term;
        }
    }
    Ok(match exact {
        Some(e) => LikelihoodValue { log_value, exact_value: Some(e) },
        None => LikelihoodValue::from_log(log_value),
    })
}

/// `K(theta, g)` as a double from the binomial table; zero when infeasible.
#[inline(always)]
pub(crate) fn count_linear(binom: &BinomialTable, theta: [u32; 4], g: [u32; 4]) -> f64 {
    let Some((lo, hi)) = split_range(theta, g) else {
        return 0.0;
    };
    let [t1, t2, t3, t4] = theta;
    let [_, g2, g3, g4] = g;
    let (lo, hi) = (lo as usize, hi as usize);
    let r1 = binom.row(t1);
    let r2 = binom.row(t2);
    let r3 = binom.row(t3);
    let r4 = binom.row(t4);
    let a3 = (t1 + t3 - g4) as usize;
    let a4 = (g2 + g3 - t2) as usize;
    let g2 = g2 as usize;
    let mut acc = 0.0;
    for ell in lo..=hi {
        acc += r1[ell] * r2[g2 - ell] * r3[a3 - ell] * r4[a4 - ell];
    }
    acc
}

/// Likelihood machinery bound to one sample size and mechanism.
///
/// Holds the shared read-only tables; safe to share across threads.
#[derive(Debug)]
pub struct Engine {
    s: SampleSize,
    spec: RandomizationSpec,
    lnf: LnFactorial,
    binom: Option<BinomialTable>,
    exact: ExactBinomials,
    /// Log arm factor by intervention-arm size.
    ln_arm: Vec<f64>,
}

impl Engine {
    pub fn new(s: SampleSize, spec: RandomizationSpec) -> Result<Self> {
        spec.validate(s)?;
        let n = s.get();
        let lnf = LnFactorial::new(n);
        let ln_arm = (0..=n)
            .map(|n1| match spec {
                RandomizationSpec::Iid { p } => {
                    let lp = LogProbability::new(p);
                    let mut v = 0.0;
                    if n1 > 0 {
                        v += n1 as f64 * lp.ln_p;
                    }
                    if n1 < n {
                        v += (n - n1) as f64 * lp.ln_q;
                    }
                    v
                }
                RandomizationSpec::Urn { m } if m == n1 => -lnf.ln_choose(n as i64, m as i64),
                RandomizationSpec::Urn { .. } => f64::NEG_INFINITY,
            })
            .collect();
        Ok(Engine {
            s,
            spec,
            binom: (n <= LINEAR_TABLE_LIMIT).then(|| BinomialTable::new(n)),
            exact: ExactBinomials::new(n),
            lnf,
            ln_arm,
        })
    }

    pub fn sample_size(&self) -> SampleSize {
        self.s
    }

    pub fn spec(&self) -> &RandomizationSpec {
        &self.spec
    }

    pub fn ln_factorial(&self) -> &LnFactorial {
        &self.lnf
    }

    /// The floating binomial table; only available for `s <= 1000`.
    pub(crate) fn binomials(&self) -> Result<&BinomialTable> {
        self.binom.as_ref().ok_or_else(|| {
            Error::ResourceCap(format!(
                "lattice scans need s <= {LINEAR_TABLE_LIMIT}, got {}",
                self.s
            ))
        })
    }

    fn check(&self, theta: &TypeConfiguration, g: &DataConfiguration) -> Result<()> {
        check_same_size(theta, g)?;
        if g.total() != self.s.get() {
            return Err(invalid(format!("data configuration {g} does not sum to s={}", self.s)));
        }
        Ok(())
    }

    /// Log of the factor shared by every term for data `g`.
    #[inline]
    pub fn log_arm_factor(&self, g: &DataConfiguration) -> f64 {
        self.ln_arm[g.intervention_size() as usize]
    }

    #[inline]
    pub(crate) fn log_arm_factor_by_size(&self, n1: u32) -> f64 {
        self.ln_arm[n1 as usize]
    }

    /// Common denominator of every exact likelihood for this mechanism:
    /// `b^s` for `p = a/b`, `C(s, m)` for the urn.
    pub fn exact_denominator(&self) -> BigUint {
        match self.spec {
            RandomizationSpec::Iid { p } => Pow::pow(BigUint::from(*p.denom()), self.s.get()),
            RandomizationSpec::Urn { m } => self.exact.choose(self.s.get() as i64, m as i64),
        }
    }

    /// Exact arm factor times the common denominator, for arm size `n1`.
    pub fn exact_arm_numerator(&self, n1: u32) -> BigUint {
        match self.spec {
            RandomizationSpec::Iid { p } => {
                let a = BigUint::from(*p.numer());
                let b = BigUint::from(*p.denom() - *p.numer());
                Pow::pow(a, n1) * Pow::pow(b, self.s.get() - n1)
            }
            RandomizationSpec::Urn { m } if m == n1 => BigUint::one(),
            RandomizationSpec::Urn { .. } => BigUint::zero(),
        }
    }

    /// Number of assignments producing `g` from `theta`, as a double.
    pub fn count(&self, theta: &TypeConfiguration, g: &DataConfiguration) -> f64 {
        match &self.binom {
            Some(b) => count_linear(b, theta.counts(), g.counts()),
            None => self.log_count(theta, g).exp(),
        }
    }

    /// `ln K(theta, g)`.
    pub fn log_count(&self, theta: &TypeConfiguration, g: &DataConfiguration) -> f64 {
        if let Some(b) = &self.binom {
            return count_linear(b, theta.counts(), g.counts()).ln();
        }
        let Some((lo, hi)) = split_range(theta.counts(), g.counts()) else {
            return f64::NEG_INFINITY;
        };
        let t = theta.counts().map(i64::from);
        let mut acc = f64::NEG_INFINITY;
        for ell in lo as i64..=hi as i64 {
            let sp = ArmSplit::for_index(theta, g, ell);
            let v = self.lnf.ln_choose(t[0], sp.n12)
                + self.lnf.ln_choose(t[1], sp.n22)
                + self.lnf.ln_choose(t[2], sp.n31)
                + self.lnf.ln_choose(t[3], sp.n41);
            acc = log_add(acc, v);
        }
        acc
    }

    /// Exact `K(theta, g)`.
    pub fn exact_count(&self, theta: &TypeConfiguration, g: &DataConfiguration) -> BigUint {
        let Some((lo, hi)) = split_range(theta.counts(), g.counts()) else {
            return BigUint::zero();
        };
        let t = theta.counts().map(i64::from);
        let mut acc = BigUint::zero();
        for ell in lo as i64..=hi as i64 {
            let sp = ArmSplit::for_index(theta, g, ell);
            acc += self.exact.choose(t[0], sp.n12)
                * self.exact.choose(t[1], sp.n22)
                * self.exact.choose(t[2], sp.n31)
                * self.exact.choose(t[3], sp.n41);
        }
        acc
    }

    /// Likelihood in log mode.
    pub fn likelihood(&self, theta: &TypeConfiguration, g: &DataConfiguration) -> Result<LikelihoodValue> {
        self.check(theta, g)?;
        let arm = self.log_arm_factor(g);
        if arm == f64::NEG_INFINITY {
            return Ok(LikelihoodValue::zero());
        }
        Ok(LikelihoodValue::from_log(self.log_count(theta, g) + arm))
    }

    /// Likelihood with the exact rational populated.
    pub fn likelihood_exact(
        &self,
        theta: &TypeConfiguration,
        g: &DataConfiguration,
    ) -> Result<LikelihoodValue> {
        self.check(theta, g)?;
        let num = self.exact_count(theta, g) * self.exact_arm_numerator(g.intervention_size());
        let exact = BigRational::new(num.into(), self.exact_denominator().into());
        let log_value = if exact.is_zero() {
            f64::NEG_INFINITY
        } else {
            let lv = self.likelihood(theta, g)?.log_value;
            if lv.is_finite() {
                lv
            } else {
                crate::numeric::ln_rational(&exact)
            }
        };
        Ok(LikelihoodValue { log_value, exact_value: Some(exact) })
    }

    pub fn likelihood_in(
        &self,
        theta: &TypeConfiguration,
        g: &DataConfiguration,
        mode: Mode,
    ) -> Result<LikelihoodValue> {
        match mode {
            Mode::Log => self.likelihood(theta, g),
            Mode::Exact => self.likelihood_exact(theta, g),
        }
    }

    /// Visits every type configuration compatible with `g`, in canonical
    /// order, with its rank and `K(theta, g)`.
    pub fn scan_types(
        &self,
        g: &DataConfiguration,
        mut visit: impl FnMut(usize, [u32; 4], f64),
    ) -> Result<()> {
        let binom = self.binomials()?;
        if !self.spec.admits(g) {
            return Ok(());
        }
        let s = self.s.get();
        let [g1, g2, g3, g4] = g.counts();
        let mut pair = vec![0.0f64; s as usize + 1];
        for t1 in 0..=s.min(g2 + g4) {
            let t2_lo = g2.saturating_sub(t1);
            let t2_hi = (g2 + g3).min((g2 + g3 + g4).saturating_sub(t1)).min(s - t1);
            if t2_lo > t2_hi {
                continue;
            }
            let r1 = binom.row(t1);
            for t2 in t2_lo..=t2_hi {
                let t3_lo = g4.saturating_sub(t1).max((g2 + g4).saturating_sub(t1 + t2));
                let t3_hi = (g1 + g4).min((g1 + g2 + g4).saturating_sub(t1)).min(s - t1 - t2);
                if t3_lo > t3_hi {
                    continue;
                }
                // A(ell) = C(t1, ell) C(t2, g2 - ell)
                let r2 = binom.row(t2);
                let ell_lo = g2.saturating_sub(t2);
                let ell_hi = t1.min(g2);
                for ell in ell_lo..=ell_hi {
                    pair[ell as usize] = r1[ell as usize] * r2[(g2 - ell) as usize];
                }
                let base = rank3(s, t1, t2, 0);
                let a4 = g2 + g3 - t2;
                for t3 in t3_lo..=t3_hi {
                    let t4 = s - t1 - t2 - t3;
                    let a3 = t1 + t3 - g4;
                    let lo = ell_lo.max(t1.saturating_sub(g4)).max((t1 + t3).saturating_sub(g1 + g4));
                    let hi = ell_hi.min(a3).min(a4);
                    let r3 = binom.row(t3);
                    let r4 = binom.row(t4);
                    let mut acc = 0.0;
                    for ell in lo..=hi {
                        let e = ell as usize;
                        acc += pair[e] * r3[a3 as usize - e] * r4[a4 as usize - e];
                    }
                    visit(base + t3 as usize, [t1, t2, t3, t4], acc);
                }
            }
        }
        Ok(())
    }

    /// Visits every data configuration that `theta` can produce under the
    /// mechanism, in canonical order, with its rank and `K(theta, g)`.
    pub fn scan_data(
        &self,
        theta: &TypeConfiguration,
        mut visit: impl FnMut(usize, [u32; 4], f64),
    ) -> Result<()> {
        let binom = self.binomials()?;
        let s = self.s.get();
        let [t1, t2, t3, t4] = theta.counts();
        if theta.total() != s {
            return Err(invalid(format!("type configuration {theta} does not sum to s={s}")));
        }
        let r1 = binom.row(t1);
        let r2 = binom.row(t2);
        let r3 = binom.row(t3);
        let r4 = binom.row(t4);
        let mut pair = vec![0.0f64; s as usize + 1];
        let arm_size = match self.spec {
            RandomizationSpec::Urn { m } => Some(m),
            RandomizationSpec::Iid { .. } => None,
        };
        for g1 in 0..=(t3 + t4) {
            let (g2_lo, g2_hi) = match arm_size {
                Some(m) if m < g1 => continue,
                Some(m) => (m - g1, m - g1),
                None => (0, t1 + t2),
            };
            for g2 in g2_lo..=g2_hi.min(s - g1).min(t1 + t2) {
                let ell_lo = g2.saturating_sub(t2);
                let ell_hi = t1.min(g2);
                if ell_lo > ell_hi {
                    continue;
                }
                for ell in ell_lo..=ell_hi {
                    pair[ell as usize] = r1[ell as usize] * r2[(g2 - ell) as usize];
                }
                let g3_lo = (s - g1 - g2)
                    .saturating_sub(t1 + t3)
                    .max(t2.saturating_sub(g2))
                    .max(t4.saturating_sub(g1));
                // g1 <= t3 + t4 and g2 <= t1 + t2 keep these subtractions in range
                let g3_hi = (s - g1 - g2).min(s - g1 - t1).min(s - g2 - t3).min(t2 + t4);
                if g3_lo > g3_hi {
                    continue;
                }
                let base = rank3(s, g1, g2, 0);
                for g3 in g3_lo..=g3_hi {
                    let g4 = s - g1 - g2 - g3;
                    let a3 = t1 + t3 - g4;
                    let a4 = g2 + g3 - t2;
                    let lo = ell_lo.max(t1.saturating_sub(g4)).max((t1 + t3).saturating_sub(g1 + g4));
                    let hi = ell_hi.min(a3).min(a4);
                    let mut acc = 0.0;
                    for ell in lo..=hi {
                        let e = ell as usize;
                        acc += pair[e] * r3[a3 as usize - e] * r4[a4 as usize - e];
                    }
                    visit(base + g3 as usize, [g1, g2, g3, g4], acc);
                }
            }
        }
        Ok(())
    }
}

/// Likelihood under independent coin flips with probability `p`.
pub fn iid_likelihood(
    theta: &TypeConfiguration,
    g: &DataConfiguration,
    p: Ratio<u64>,
    mode: Mode,
) -> Result<LikelihoodValue> {
    check_same_size(theta, g)?;
    let s = SampleSize::new(g.total())?;
    let spec = RandomizationSpec::iid(*p.numer(), *p.denom())?;
    Engine::new(s, spec)?.likelihood_in(theta, g, mode)
}

/// Likelihood under an urn draw of `m` names.
pub fn urn_likelihood(
    theta: &TypeConfiguration,
    g: &DataConfiguration,
    m: u32,
    mode: Mode,
) -> Result<LikelihoodValue> {
    check_same_size(theta, g)?;
    let s = SampleSize::new(g.total())?;
    Engine::new(s, RandomizationSpec::urn(m))?.likelihood_in(theta, g, mode)
}

/// Number of type configurations compatible with `g` under `spec`.
pub fn compatible_count(g: &DataConfiguration, spec: &RandomizationSpec) -> u64 {
    if !spec.admits(g) {
        return 0;
    }
    let s = g.total();
    let [g1, g2, g3, g4] = g.counts();
    let mut total = 0u64;
    for t1 in 0..=s.min(g2 + g4) {
        let t2_lo = g2.saturating_sub(t1);
        let t2_hi = (g2 + g3).min((g2 + g3 + g4).saturating_sub(t1)).min(s - t1);
        for t2 in t2_lo..=t2_hi {
            if t2_lo > t2_hi {
                break;
            }
            let t3_lo = g4.saturating_sub(t1).max((g2 + g4).saturating_sub(t1 + t2));
            let t3_hi = (g1 + g4).min((g1 + g2 + g4).saturating_sub(t1)).min(s - t1 - t2);
            if t3_lo <= t3_hi {
                total += (t3_hi - t3_lo + 1) as u64;
            }
        }
    }
    total
}

/// `ln` of an exact count, for reporting.
pub fn ln_count(k: &BigUint) -> f64 {
    ln_biguint(k)
}
