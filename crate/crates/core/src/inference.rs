//! Likelihood-ratio tests with worst-case p-values, and confidence intervals
//! by test inversion.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hypothesis::HypothesisSet;
use crate::lattice::{DataConfiguration, SampleSize, TypeConfiguration};
use crate::likelihood::{Engine, Mode};
use crate::numeric::{rational_to_f64, TIE_RELATIVE_TOLERANCE};
use crate::quantity::{Extended, Operand};
use crate::table::{max_count, LambdaTable, NullOverlay};

/// The likelihood ratio for one data configuration.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaResult {
    pub lambda: f64,
    pub log_lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "ser_ratio")]
    pub exact_lambda: Option<BigRational>,
    /// `ln` of the null maximum likelihood.
    pub log_numerator: f64,
    /// `ln` of the global maximum likelihood.
    pub log_denominator: f64,
    pub argmax_null: Vec<TypeConfiguration>,
    pub argmax_global: Vec<TypeConfiguration>,
}

/// A test outcome: the ratio, its worst-case p-value and where it is attained.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    #[serde(flatten)]
    pub lambda: LambdaResult,
    pub p_value: f64,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "ser_ratio")]
    pub exact_p_value: Option<BigRational>,
    /// The null member whose rejection probability is largest.
    pub worst_case: TypeConfiguration,
}

fn ser_ratio<S: serde::Serializer>(r: &Option<BigRational>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => ser.serialize_str(&format!("{}/{}", r.numer(), r.denom())),
        None => ser.serialize_none(),
    }
}

fn configs(s: SampleSize, ranks: &[u32]) -> Vec<TypeConfiguration> {
    ranks.iter().map(|&r| TypeConfiguration::from_rank(s, r as usize)).collect()
}

fn ln_or_neg_inf(k: f64) -> f64 {
    if k > 0.0 {
        k.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn big_ratio(num: &BigUint, den: &BigUint) -> BigRational {
    BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone()))
}

/// `lambda(g)` for the null `h0`. With a table the denominator is read from
/// it; otherwise it is computed by a full scan over the compatible `theta`.
pub fn lambda_statistic(
    engine: &Engine,
    g: &DataConfiguration,
    h0: &HypothesisSet,
    table: Option<&LambdaTable>,
    mode: Mode,
) -> Result<LambdaResult> {
    let s = engine.sample_size();
    if g.total() != s.get() || h0.sample_size() != s {
        return Err(Error::InvalidInput(format!("data {g} and null must have s={s}")));
    }
    if h0.is_empty() {
        return Err(Error::InvalidHypothesis("empty null set".into()));
    }
    let num = max_count(engine, g, |r| h0.contains_rank(r), mode)?;
    let den = match table {
        Some(t) => {
            t.check_matches(engine)?;
            let ranks = t.argmax(g.rank()).to_vec();
            let exact = match mode {
                Mode::Exact => ranks
                    .iter()
                    .map(|&r| engine.exact_count(&TypeConfiguration::from_rank(s, r as usize), g))
                    .max()
                    .or(Some(BigUint::zero())),
                Mode::Log => None,
            };
            let count = if t.log_max()[g.rank()].is_finite() {
                (t.log_max()[g.rank()] - engine.log_arm_factor(g)).exp()
            } else {
                0.0
            };
            crate::table::CountMax { count, ranks, exact }
        }
        None => max_count(engine, g, |_| true, mode)?,
    };
    let arm = engine.log_arm_factor(g);
    let log_numerator = ln_or_neg_inf(num.count) + arm;
    let log_denominator = match table {
        Some(t) => t.log_max()[g.rank()],
        None => ln_or_neg_inf(den.count) + arm,
    };
    let exact_lambda = match (&num.exact, &den.exact) {
        (Some(a), Some(b)) if !b.is_zero() => Some(big_ratio(a, b)),
        (Some(_), Some(_)) => Some(BigRational::zero()),
        _ => None,
    };
    let log_lambda = match &exact_lambda {
        Some(r) if r.is_one() => 0.0,
        Some(r) if r.is_zero() => f64::NEG_INFINITY,
        _ if num.count <= 0.0 => f64::NEG_INFINITY,
        _ => (log_numerator - log_denominator).min(0.0),
    };
    Ok(LambdaResult {
        lambda: exact_lambda.as_ref().map_or(log_lambda.exp(), rational_to_f64),
        log_lambda,
        exact_lambda,
        log_numerator,
        log_denominator,
        argmax_null: configs(s, &num.ranks),
        argmax_global: configs(s, &den.ranks),
    })
}

/// Exact `lambda` at data rank `rank`, from the candidate maximizers.
fn exact_lambda_at(
    engine: &Engine,
    table: &LambdaTable,
    h0_mask: &dyn Fn(usize) -> bool,
    rank: usize,
) -> Result<BigRational> {
    let s = engine.sample_size();
    let g = DataConfiguration::from_rank(s, rank);
    let num = max_count(engine, &g, h0_mask, Mode::Exact)?.exact.unwrap_or_default();
    let den = table
        .argmax(rank)
        .iter()
        .map(|&r| engine.exact_count(&TypeConfiguration::from_rank(s, r as usize), &g))
        .max()
        .unwrap_or_default();
    Ok(if den.is_zero() { BigRational::zero() } else { big_ratio(&num, &den) })
}

/// Data configurations whose ratio is at most the observed one, ties included.
fn rejection_region(
    engine: &Engine,
    table: &LambdaTable,
    overlay: &NullOverlay,
    h0_mask: &dyn Fn(usize) -> bool,
    observed: usize,
    mode: Mode,
) -> Result<Vec<bool>> {
    let den = table.log_max();
    let num = overlay.log_max();
    let log_lambda = |r: usize| {
        if den[r] == f64::NEG_INFINITY {
            None
        } else if num[r] == f64::NEG_INFINITY {
            Some(f64::NEG_INFINITY)
        } else {
            Some((num[r] - den[r]).min(0.0))
        }
    };
    let t = log_lambda(observed).unwrap_or(f64::NEG_INFINITY);
    let mut region = vec![false; den.len()];
    let mut band = Vec::new();
    for (r, slot) in region.iter_mut().enumerate() {
        let Some(v) = log_lambda(r) else { continue };
        if t == f64::NEG_INFINITY {
            *slot = v == f64::NEG_INFINITY;
        } else if v < t - TIE_RELATIVE_TOLERANCE {
            *slot = true;
        } else if v <= t + TIE_RELATIVE_TOLERANCE {
            *slot = true;
            if r != observed {
                band.push(r);
            }
        }
    }
    if mode == Mode::Exact && t.is_finite() && !band.is_empty() {
        let target = exact_lambda_at(engine, table, h0_mask, observed)?;
        for r in band {
            region[r] = exact_lambda_at(engine, table, h0_mask, r)? <= target;
        }
    }
    Ok(region)
}

/// Probability under `theta` of landing in `region`.
fn region_mass(engine: &Engine, theta: &TypeConfiguration, region: &[bool], arm: &[f64]) -> f64 {
    let mut acc = 0.0;
    engine
        .scan_data(theta, |rank, g, k| {
            if region[rank] && k > 0.0 {
                acc += (k.ln() + arm[(g[0] + g[1]) as usize]).exp();
            }
        })
        .expect("binomial table checked by caller");
    acc
}

fn exact_region_mass(engine: &Engine, theta: &TypeConfiguration, region: &[bool]) -> BigRational {
    let s = engine.sample_size();
    let mut acc = BigUint::zero();
    let mut hits = Vec::new();
    engine
        .scan_data(theta, |rank, _, k| {
            if region[rank] && k > 0.0 {
                hits.push(rank);
            }
        })
        .expect("binomial table checked by caller");
    for rank in hits {
        let g = DataConfiguration::from_rank(s, rank);
        acc += engine.exact_count(theta, &g) * engine.exact_arm_numerator(g.intervention_size());
    }
    big_ratio(&acc, &engine.exact_denominator())
}

/// Worst-case p-value for a null given by its members and their overlay.
///
/// This is the building block shared by [`p_value`] and the interval scans.
pub fn p_value_with_overlay(
    engine: &Engine,
    table: &LambdaTable,
    g: &DataConfiguration,
    h0: &HypothesisSet,
    overlay: &NullOverlay,
    mode: Mode,
) -> Result<TestResult> {
    table.check_matches(engine)?;
    let s = engine.sample_size();
    let lambda = lambda_statistic(engine, g, h0, Some(table), mode)?;
    let mask = |r: usize| h0.contains_rank(r);
    let observed = g.rank();
    let arm: Vec<f64> = (0..=s.get()).map(|n1| engine.log_arm_factor_by_size(n1)).collect();

    // lambda = 1 puts every outcome in the region.
    let everything = match &lambda.exact_lambda {
        Some(r) => r.is_one(),
        None => lambda.log_lambda == 0.0,
    };
    if everything {
        let worst = h0.iter().next().expect("nonempty null");
        return Ok(TestResult {
            lambda,
            p_value: 1.0,
            exact_p_value: (mode == Mode::Exact).then(BigRational::one),
            worst_case: worst,
        });
    }

    let region = rejection_region(engine, table, overlay, &mask, observed, mode)?;
    let masses: Vec<(f64, u32)> = h0
        .members()
        .par_iter()
        .map(|&t| {
            let theta = TypeConfiguration::from_rank(s, t as usize);
            (region_mass(engine, &theta, &region, &arm), t)
        })
        .collect();
    let (best_mass, best_rank) = masses
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, u32::MAX), |a, b| if b.0 > a.0 { b } else { a });

    let (p_value, exact_p_value, worst_rank) = match mode {
        Mode::Log => (best_mass.min(1.0), None, best_rank),
        Mode::Exact => {
            let mut best: Option<(BigRational, u32)> = None;
            for &(m, t) in &masses {
                if m < best_mass * (1.0 - TIE_RELATIVE_TOLERANCE) {
                    continue;
                }
                let theta = TypeConfiguration::from_rank(s, t as usize);
                let e = exact_region_mass(engine, &theta, &region);
                if best.as_ref().is_none_or(|(b, _)| e > *b) {
                    best = Some((e, t));
                }
            }
            let (e, t) = best.expect("nonempty null");
            (rational_to_f64(&e), Some(e), t)
        }
    };
    Ok(TestResult {
        lambda,
        p_value,
        exact_p_value,
        worst_case: TypeConfiguration::from_rank(s, worst_rank as usize),
    })
}

/// Worst-case p-value: the largest probability, over `theta` in the null,
/// that the ratio is at most its observed value.
pub fn p_value(
    engine: &Engine,
    table: &LambdaTable,
    g: &DataConfiguration,
    h0: &HypothesisSet,
    mode: Mode,
) -> Result<TestResult> {
    let overlay = NullOverlay::build(engine, h0.members())?;
    p_value_with_overlay(engine, table, g, h0, &overlay, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
    TwoSided,
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(text: &str) -> Result<Self> {
        match text {
            "lower" => Ok(Side::Lower),
            "upper" => Ok(Side::Upper),
            "two-sided" | "two_sided" | "both" => Ok(Side::TwoSided),
            other => Err(Error::InvalidInput(format!("unknown side {other:?}"))),
        }
    }
}

/// One candidate bound and the test behind it.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateTest {
    pub value: Extended,
    pub hypothesis: String,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceInterval {
    pub operand: Operand,
    pub side: Side,
    pub alpha: f64,
    /// `None` when unbounded on that side, or when every candidate was rejected.
    pub lower: Option<Extended>,
    pub upper: Option<Extended>,
    /// Every candidate was rejected on some side scanned.
    pub all_rejected: bool,
    pub scanned: Vec<CandidateTest>,
}

impl fmt::Display for ConfidenceInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: &Option<Extended>| v.map_or("—".to_string(), |v| v.to_string());
        if self.all_rejected {
            return write!(f, "empty (every candidate rejected)");
        }
        write!(f, "[{}, {}]", show(&self.lower), show(&self.upper))
    }
}

/// Sorted distinct defined values of `q` over the lattice.
pub fn quantity_range(s: SampleSize, q: &Operand) -> Vec<Extended> {
    let mut vals: Vec<Extended> = crate::lattice::enumerate_type_configs(s)
        .map(|t| q.eval(&t))
        .filter(Extended::is_defined)
        .collect();
    vals.sort();
    vals.dedup();
    vals
}

#[allow(clippy::too_many_arguments)]
fn scan_side(
    engine: &Engine,
    table: &LambdaTable,
    g: &DataConfiguration,
    q: &Operand,
    lower: bool,
    alpha: f64,
    mode: Mode,
    scanned: &mut Vec<CandidateTest>,
) -> Result<Option<Extended>> {
    let s = engine.sample_size();
    let mut values = quantity_range(s, q);
    if !lower {
        values.reverse();
    }
    let mut overlay = NullOverlay::empty(s);
    for v in values {
        let op = if lower { "<=" } else { ">=" };
        let label = format!("{q} {op} {v}");
        let h0 = HypothesisSet::from_predicate(label.clone(), s, |t| {
            let x = q.eval(t);
            match x.compare(&v) {
                Some(o) => if lower { o.is_le() } else { o.is_ge() },
                None => false,
            }
        })?;
        let fresh: Vec<u32> = h0
            .iter()
            .filter(|t| q.eval(t) == v)
            .map(|t| t.rank() as u32)
            .collect();
        overlay.extend(engine, &fresh)?;
        let r = p_value_with_overlay(engine, table, g, &h0, &overlay, mode)?;
        let rejected = r.p_value <= alpha;
        scanned.push(CandidateTest { value: v, hypothesis: label, p_value: r.p_value, rejected });
        if !rejected {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

/// Inverts one-sided tests over the finite range of `q`.
///
/// The lower bound is the smallest `v` for which `q <= v` is not rejected;
/// the upper bound is the largest `v` for which `q >= v` is not rejected.
/// A two-sided interval runs both at `alpha / 2`.
pub fn confidence_interval(
    engine: &Engine,
    table: &LambdaTable,
    g: &DataConfiguration,
    q: &Operand,
    side: Side,
    alpha: f64,
    mode: Mode,
) -> Result<ConfidenceInterval> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let each = if side == Side::TwoSided { alpha / 2.0 } else { alpha };
    let mut scanned = Vec::new();
    let mut all_rejected = false;
    let mut lower = None;
    let mut upper = None;
    if side != Side::Upper {
        lower = scan_side(engine, table, g, q, true, each, mode, &mut scanned)?;
        all_rejected |= lower.is_none();
    }
    if side != Side::Lower {
        upper = scan_side(engine, table, g, q, false, each, mode, &mut scanned)?;
        all_rejected |= upper.is_none();
    }
    Ok(ConfidenceInterval { operand: *q, side, alpha, lower, upper, all_rejected, scanned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::RandomizationSpec;
    use crate::quantity::Quantity;

    fn setup(s: u32) -> (Engine, LambdaTable) {
        let s = SampleSize::new(s).unwrap();
        let e = Engine::new(s, RandomizationSpec::iid(1, 2).unwrap()).unwrap();
        let t = LambdaTable::build(&e, Mode::Log, None).unwrap();
        (e, t)
    }

    #[test]
    fn whole_lattice_gives_one() {
        let (e, t) = setup(6);
        let h = HypothesisSet::everything(e.sample_size());
        let g = DataConfiguration::new(2, 1, 0, 3);
        let r = p_value(&e, &t, &g, &h, Mode::Exact).unwrap();
        assert_eq!(r.lambda.lambda, 1.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn log_and_exact_p_values_agree() {
        let (e, t) = setup(6);
        let h = HypothesisSet::parse("killed == 0", e.sample_size()).unwrap();
        for rank in 0..t.len() {
            let g = DataConfiguration::from_rank(e.sample_size(), rank);
            let a = p_value(&e, &t, &g, &h, Mode::Log).unwrap();
            let b = p_value(&e, &t, &g, &h, Mode::Exact).unwrap();
            assert!((a.p_value - b.p_value).abs() < 1e-12, "{g}");
        }
    }

    #[test]
    fn lambda_without_table_matches_table() {
        let (e, t) = setup(5);
        let h = HypothesisSet::fisher_null(e.sample_size());
        for rank in 0..t.len() {
            let g = DataConfiguration::from_rank(e.sample_size(), rank);
            let a = lambda_statistic(&e, &g, &h, None, Mode::Exact).unwrap();
            let b = lambda_statistic(&e, &g, &h, Some(&t), Mode::Exact).unwrap();
            assert_eq!(a.exact_lambda, b.exact_lambda);
            assert!(a.lambda >= 0.0 && a.lambda <= 1.0);
        }
    }

    #[test]
    fn alpha_one_rejects_everything() {
        let (e, t) = setup(4);
        let g = DataConfiguration::new(2, 0, 0, 2);
        let ci = confidence_interval(&e, &t, &g, &Quantity::Defiers.into(), Side::Lower, 1.0, Mode::Log)
            .unwrap();
        assert!(ci.all_rejected);
        assert_eq!(ci.to_string(), "empty (every candidate rejected)");
    }
}
