//! Numeric substrate: log-factorials, log-space accumulation, binomial
//! coefficient tables (floating and exact) and the likelihood value type.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_rational::{BigRational, Ratio};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Relative tolerance below which two likelihoods (or likelihood ratios)
/// are treated as tied in floating-point mode.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Largest row for which the floating binomial table is built. Beyond this
/// `C(n, n/2)` no longer fits in an `f64`.
pub const LINEAR_TABLE_LIMIT: u32 = 1000;

/// `ln n!` for `n = 0..=limit`.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    pub fn new(limit: u32) -> Self {
        let mut table = Vec::with_capacity(limit as usize + 1);
        table.push(0.0);
        // compensated running sum of ln k
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for k in 1..=limit {
            let y = (k as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            table.push(sum);
        }
        LnFactorial { table }
    }

    #[inline]
    pub fn get(&self, n: u32) -> f64 {
        self.table[n as usize]
    }

    pub fn limit(&self) -> u32 {
        (self.table.len() - 1) as u32
    }

    /// `ln C(n, k)`, or negative infinity outside `0 <= k <= n`.
    #[inline]
    pub fn ln_choose(&self, n: i64, k: i64) -> f64 {
        if k < 0 || n < 0 || k > n {
            return f64::NEG_INFINITY;
        }
        self.table[n as usize] - self.table[k as usize] - self.table[(n - k) as usize]
    }
}

/// An exact success probability together with its cached logarithms.
#[derive(Debug, Clone, Copy)]
pub struct LogProbability {
    pub exact: Ratio<u64>,
    pub ln_p: f64,
    pub ln_q: f64,
}

impl LogProbability {
    pub fn new(p: Ratio<u64>) -> Self {
        let num = *p.numer() as f64;
        let den = *p.denom() as f64;
        let comp = (*p.denom() - *p.numer()) as f64;
        LogProbability { exact: p, ln_p: (num / den).ln(), ln_q: (comp / den).ln() }
    }
}

/// `ln binom(a; b, p)`, negative infinity when `a` is outside `0..=b`.
pub fn log_binom_pmf(lnf: &LnFactorial, a: i64, b: i64, p: &LogProbability) -> f64 {
    if a < 0 || b < 0 || a > b {
        return f64::NEG_INFINITY;
    }
    let ln_c = lnf.ln_choose(b, a);
    let mut v = ln_c;
    if a > 0 {
        v += a as f64 * p.ln_p;
    }
    if b > a {
        v += (b - a) as f64 * p.ln_q;
    }
    v
}

/// `ln(exp(a) + exp(b))` with negative infinity as the additive identity.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over a sequence, summed left to right.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let terms: Vec<f64> = terms.into_iter().collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Whether two log-domain values agree to the tie tolerance.
#[inline]
pub fn log_tied(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    if !a.is_finite() || !b.is_finite() {
        return false;
    }
    (a - b).abs() <= TIE_RELATIVE_TOLERANCE
}

/// Row-major table of `C(n, k)` as `f64` for `0 <= k <= n <= limit`.
///
/// Rows up to 127 are computed exactly in `u128` and rounded once; longer
/// rows are rounded from exact big integers.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    stride: usize,
    values: Vec<f64>,
}

impl BinomialTable {
    pub fn new(limit: u32) -> Self {
        assert!(limit <= LINEAR_TABLE_LIMIT, "binomial table limited to n <= {LINEAR_TABLE_LIMIT}");
        let stride = limit as usize + 1;
        let mut values = vec![0.0; stride * stride];
        let small = limit.min(127) as usize;
        let mut row: Vec<u128> = vec![1];
        for n in 0..=small {
            if n > 0 {
                let mut next = vec![1u128; n + 1];
                for k in 1..n {
                    next[k] = row[k - 1] + row[k];
                }
                row = next;
            }
            for (k, v) in row.iter().enumerate() {
                values[n * stride + k] = *v as f64;
            }
        }
        if limit as usize > small {
            let mut big: Vec<BigUint> = row.iter().map(|v| BigUint::from(*v)).collect();
            for n in small + 1..=limit as usize {
                let mut next = vec![BigUint::one(); n + 1];
                for k in 1..n {
                    next[k] = &big[k - 1] + &big[k];
                }
                big = next;
                for (k, v) in big.iter().enumerate() {
                    values[n * stride + k] = v.to_f64().unwrap_or(f64::INFINITY);
                }
            }
        }
        BinomialTable { stride, values }
    }

    /// `C(n, k)`; callers guarantee `0 <= k <= n <= limit`.
    #[inline(always)]
    pub fn get(&self, n: u32, k: u32) -> f64 {
        debug_assert!(k <= n);
        self.values[n as usize * self.stride + k as usize]
    }

    /// Row `n`, entries `0..=n`.
    #[inline(always)]
    pub fn row(&self, n: u32) -> &[f64] {
        let start = n as usize * self.stride;
        &self.values[start..start + n as usize + 1]
    }
}

/// Exact binomial coefficients; rows are materialised lazily.
#[derive(Debug)]
pub struct ExactBinomials {
    limit: u32,
    rows: OnceLock<Vec<Vec<BigUint>>>,
}

/// Rows beyond this are computed per call instead of cached.
const EXACT_ROW_CACHE_LIMIT: u32 = 400;

impl ExactBinomials {
    pub fn new(limit: u32) -> Self {
        ExactBinomials { limit, rows: OnceLock::new() }
    }

    fn rows(&self) -> &Vec<Vec<BigUint>> {
        self.rows.get_or_init(|| {
            let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(self.limit as usize + 1);
            rows.push(vec![BigUint::one()]);
            for n in 1..=self.limit as usize {
                let prev = &rows[n - 1];
                let mut next = vec![BigUint::one(); n + 1];
                for k in 1..n {
                    next[k] = &prev[k - 1] + &prev[k];
                }
                rows.push(next);
            }
            rows
        })
    }

    /// `C(n, k)`, zero outside `0 <= k <= n`.
    pub fn choose(&self, n: i64, k: i64) -> BigUint {
        if k < 0 || n < 0 || k > n {
            return BigUint::zero();
        }
        if self.limit <= EXACT_ROW_CACHE_LIMIT && n <= self.limit as i64 {
            return self.rows()[n as usize][k as usize].clone();
        }
        num_integer::binomial(BigUint::from(n as u64), BigUint::from(k as u64))
    }
}

/// A likelihood (a probability) held in log space, optionally with its
/// exact rational value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodValue {
    /// Natural log; negative infinity encodes zero.
    pub log_value: f64,
    #[serde(skip_serializing_if = "Option::is_none", with = "opt_rational")]
    #[serde(default)]
    pub exact_value: Option<BigRational>,
}

impl LikelihoodValue {
    pub fn from_log(log_value: f64) -> Self {
        LikelihoodValue { log_value, exact_value: None }
    }

    pub fn zero() -> Self {
        LikelihoodValue::from_log(f64::NEG_INFINITY)
    }

    /// Builds from an exact value, deriving the log from it.
    pub fn from_exact(exact: BigRational) -> Self {
        LikelihoodValue { log_value: ln_rational(&exact), exact_value: Some(exact) }
    }

    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.log_value == f64::NEG_INFINITY
    }
}

/// Natural log of a nonnegative big rational without overflowing `f64`.
pub fn ln_rational(r: &BigRational) -> f64 {
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    ln_biguint(&r.numer().magnitude().clone()) - ln_biguint(&r.denom().magnitude().clone())
}

/// Natural log of a positive big integer.
pub fn ln_biguint(n: &BigUint) -> f64 {
    if n.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    let top = (n >> shift).to_f64().unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    let v = ln_rational(r);
    if v == f64::NEG_INFINITY {
        0.0
    } else {
        v.exp()
    }
}

mod opt_rational {
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<BigRational>, ser: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(r) => ser.serialize_str(&format!("{}/{}", r.numer(), r.denom())),
            None => ser.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<BigRational>, D::Error> {
        use serde::de::Error;
        let text: Option<String> = Option::deserialize(de)?;
        text.map(|t| {
            let (n, d) = t.split_once('/').unwrap_or((t.as_str(), "1"));
            let n: BigInt = n.parse().map_err(D::Error::custom)?;
            let d: BigInt = d.parse().map_err(D::Error::custom)?;
            Ok(BigRational::new(n, d))
        })
        .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn half() -> LogProbability {
        LogProbability::new(Ratio::new(1, 2))
    }

    #[test]
    fn empty_trial_has_probability_one() {
        let lnf = LnFactorial::new(10);
        assert_eq!(log_binom_pmf(&lnf, 0, 0, &half()), 0.0);
    }

    #[test]
    fn out_of_support_is_log_zero() {
        let lnf = LnFactorial::new(10);
        assert_eq!(log_binom_pmf(&lnf, 3, 2, &half()), f64::NEG_INFINITY);
        assert_eq!(log_binom_pmf(&lnf, -1, 2, &half()), f64::NEG_INFINITY);
    }

    #[test]
    fn binom_pmf_matches_big_integer_ratio() {
        // C(30,25) / 2^30 = 142506 / 2^30
        let lnf = LnFactorial::new(30);
        let expected = (142_506f64 / 2f64.powi(30)).ln();
        let got = log_binom_pmf(&lnf, 25, 30, &half());
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn pmf_normalises() {
        let lnf = LnFactorial::new(200);
        for p in [Ratio::new(1, 2), Ratio::new(1, 4), Ratio::new(2, 3)] {
            let lp = LogProbability::new(p);
            for b in [0i64, 1, 7, 50, 200] {
                let total = log_sum_exp((0..=b).map(|a| log_binom_pmf(&lnf, a, b, &lp)));
                assert!(total.abs() < 1e-12, "b={b} p={p}: {total}");
            }
        }
    }

    #[test]
    fn float_table_agrees_with_exact() {
        let table = BinomialTable::new(300);
        let exact = ExactBinomials::new(300);
        for (n, k) in [(0, 0), (100, 50), (127, 63), (200, 77), (300, 150)] {
            let e = exact.choose(n, k).to_f64().unwrap();
            let f = table.get(n as u32, k as u32);
            assert!(((e - f) / e).abs() < 1e-15, "C({n},{k})");
        }
    }

    #[test]
    fn ln_of_huge_rational() {
        let big = BigUint::from(2u32).pow(3000);
        let r = BigRational::new(BigInt::from(1), BigInt::from(big));
        let v = ln_rational(&r);
        assert!((v + 3000.0 * std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn log_add_identity() {
        assert_eq!(log_add(f64::NEG_INFINITY, -2.0), -2.0);
        assert!((log_add(0.5f64.ln(), 0.5f64.ln())).abs() < 1e-15);
    }
}
