mod common;

use common::{brute_force_p_values, compositions, likelihood_matrix, Mech};
use defiers::hypothesis::{parse_expr, Cmp, Expr, HypothesisSet, Preset};
use defiers::inference::{confidence_interval, lambda_statistic, p_value, Side};
use defiers::lattice::{enumerate_type_configs, DataConfiguration, RandomizationSpec, SampleSize};
use defiers::likelihood::{Engine, Mode};
use defiers::quantity::{Extended, Operand, Quantity};
use defiers::table::LambdaTable;
use num_rational::Ratio;
use proptest::prelude::*;

const NULLS: &[&str] = &[
    "killed == 0",
    "fisher_null",
    "neyman_null",
    "saved / killed >= 2",
    "killed == 0 and saved >= 1",
    "always <= 1 or never >= 3",
];

fn setup(s: u32, spec: RandomizationSpec, mode: Mode) -> (Engine, LambdaTable) {
    let e = Engine::new(SampleSize::new(s).unwrap(), spec).unwrap();
    let t = LambdaTable::build(&e, mode, None).unwrap();
    (e, t)
}

#[test]
fn p_values_match_definition() {
    for (s, spec, mech) in [
        (5, RandomizationSpec::iid(1, 2).unwrap(), Mech::Iid(1, 2)),
        (6, RandomizationSpec::iid(1, 2).unwrap(), Mech::Iid(1, 2)),
        (6, RandomizationSpec::iid(1, 3).unwrap(), Mech::Iid(1, 3)),
        (6, RandomizationSpec::urn(3), Mech::Urn(3)),
    ] {
        let (engine, table) = setup(s, spec, Mode::Exact);
        let l = likelihood_matrix(s, mech);
        let pts = compositions(s);
        for text in NULLS {
            let h0 = HypothesisSet::parse(text, engine.sample_size()).unwrap();
            let mask: Vec<bool> = pts.iter().map(|t| h0.contains(&common::theta(*t))).collect();
            let want = brute_force_p_values(&l, &mask);
            for (gi, g) in pts.iter().enumerate() {
                let g = common::data(*g);
                if !spec.admits(&g) {
                    continue;
                }
                let exact = p_value(&engine, &table, &g, &h0, Mode::Exact).unwrap();
                assert_eq!(exact.exact_p_value.as_ref(), Some(&want[gi]), "s={s} {spec} {text} {g}");
                let log = p_value(&engine, &table, &g, &h0, Mode::Log).unwrap();
                let w = common::to_f64(&want[gi]);
                assert!((log.p_value - w).abs() <= 1e-12, "s={s} {spec} {text} {g}: {} vs {w}", log.p_value);
            }
        }
    }
}

#[test]
fn lambda_in_unit_interval_and_one_when_global_max_in_null() {
    for s in [4u32, 7] {
        let (engine, table) = setup(s, RandomizationSpec::iid(1, 2).unwrap(), Mode::Exact);
        let size = engine.sample_size();
        for text in NULLS {
            let h0 = HypothesisSet::parse(text, size).unwrap();
            for rank in 0..table.len() {
                let g = DataConfiguration::from_rank(size, rank);
                let r = lambda_statistic(&engine, &g, &h0, Some(&table), Mode::Exact).unwrap();
                assert!((0.0..=1.0).contains(&r.lambda));
                if r.argmax_global.iter().any(|t| h0.contains(t)) {
                    assert_eq!(r.lambda, 1.0, "{text} {g}");
                }
            }
        }
    }
}

/// Nested pairs `(smaller, larger)`.
fn nested_pairs() -> Vec<(&'static str, &'static str)> {
    vec![
        ("fisher_null", "killed == 0"),
        ("fisher_null", "neyman_null"),
        ("killed == 0 and saved >= 1", "killed == 0"),
        ("killed == 0", "killed <= 1"),
        ("killed <= 1", "killed <= 2"),
        ("saved / killed >= 3", "saved / killed >= 1"),
    ]
}

/// A larger null can only raise the ratio at every outcome.
#[test]
fn lambda_grows_with_the_null() {
    for s in 1..=8u32 {
        let (engine, table) = setup(s, RandomizationSpec::iid(1, 2).unwrap(), Mode::Exact);
        let size = engine.sample_size();
        for (small, large) in nested_pairs() {
            let (Ok(a), Ok(b)) = (HypothesisSet::parse(small, size), HypothesisSet::parse(large, size)) else {
                continue;
            };
            assert!(a.is_subset_of(&b));
            for rank in 0..table.len() {
                let g = DataConfiguration::from_rank(size, rank);
                let la = lambda_statistic(&engine, &g, &a, Some(&table), Mode::Exact).unwrap();
                let lb = lambda_statistic(&engine, &g, &b, Some(&table), Mode::Exact).unwrap();
                assert!(la.exact_lambda <= lb.exact_lambda, "s={s} {g} {small} {large}");
            }
        }
    }
}

/// The p-value itself is not monotone in the null: enlarging the null moves
/// the ratio of every other outcome too. Smallest case, checked against the
/// definition.
#[test]
fn p_value_need_not_grow_with_the_null() {
    let (engine, table) = setup(2, RandomizationSpec::iid(1, 2).unwrap(), Mode::Exact);
    let size = engine.sample_size();
    let g = DataConfiguration::new(0, 1, 1, 0);
    let fisher = HypothesisSet::fisher_null(size);
    let no_kill = HypothesisSet::parse("killed == 0", size).unwrap();
    assert!(fisher.is_subset_of(&no_kill));
    let pf = p_value(&engine, &table, &g, &fisher, Mode::Exact).unwrap();
    let pk = p_value(&engine, &table, &g, &no_kill, Mode::Exact).unwrap();

    let l = likelihood_matrix(2, Mech::Iid(1, 2));
    let pts = compositions(2);
    let gi = pts.iter().position(|x| *x == [0, 1, 1, 0]).unwrap();
    let mask = |h: &HypothesisSet| pts.iter().map(|t| h.contains(&common::theta(*t))).collect::<Vec<_>>();
    assert_eq!(pf.exact_p_value.unwrap(), brute_force_p_values(&l, &mask(&fisher))[gi]);
    assert_eq!(pk.exact_p_value.unwrap(), brute_force_p_values(&l, &mask(&no_kill))[gi]);
    assert_eq!(pf.p_value, 0.5);
    assert_eq!(pk.p_value, 0.25);
}

/// The returned bound is the most extreme unrejected value, so every
/// unrejected value lies inside. Where p-values are not monotone in the
/// candidate value, some rejected values also lie inside; those cases are
/// counted: none at the usual levels, a handful at 0.5.
#[test]
fn interval_is_the_set_of_unrejected_values() {
    let mut gaps = std::collections::BTreeMap::<String, (usize, usize)>::new();
    for s in 2..=6u32 {
        let (engine, table) = setup(s, RandomizationSpec::iid(1, 2).unwrap(), Mode::Log);
        let size = engine.sample_size();
        for q in [Operand::Single(Quantity::Defiers), Operand::Single(Quantity::Compliers), Operand::Single(Quantity::AvgEffect)] {
            for alpha in [0.05, 0.2, 0.5] {
                for rank in 0..table.len() {
                    let g = DataConfiguration::from_rank(size, rank);
                    for side in [Side::Lower, Side::Upper] {
                        let ci = confidence_interval(&engine, &table, &g, &q, side, alpha, Mode::Log).unwrap();
                        let bound = if side == Side::Lower { ci.lower } else { ci.upper };
                        let mut gap = false;
                        for v in defiers::inference::quantity_range(size, &q) {
                            let op = if side == Side::Lower { Cmp::Le } else { Cmp::Ge };
                            let h0 = HypothesisSet::new(Expr::compare(q, op, v), size).unwrap();
                            let rejected = p_value(&engine, &table, &g, &h0, Mode::Log).unwrap().p_value <= alpha;
                            let outside = match (side, bound) {
                                (_, None) => true,
                                (Side::Lower, Some(b)) => v < b,
                                (_, Some(b)) => v > b,
                            };
                            if outside {
                                assert!(rejected, "s={s} {g} {q} {side:?} alpha={alpha} v={v}");
                            } else if rejected {
                                gap = true;
                            }
                            if bound == Some(v) {
                                assert!(!rejected);
                            }
                        }
                        let e = gaps.entry(format!("alpha={alpha}")).or_default();
                        e.0 += usize::from(gap);
                        e.1 += 1;
                    }
                }
            }
        }
    }
    println!("intervals containing a rejected value: {gaps:?}");
    assert_eq!(gaps["alpha=0.05"].0, 0);
    assert_eq!(gaps["alpha=0.2"].0, 0);
    assert!(gaps["alpha=0.5"].0 * 100 <= gaps["alpha=0.5"].1, "{gaps:?}");
}

#[test]
fn two_sided_interval_uses_half_alpha_per_side() {
    let (engine, table) = setup(6, RandomizationSpec::iid(1, 2).unwrap(), Mode::Log);
    let q = Operand::Single(Quantity::Defiers);
    for rank in 0..table.len() {
        let g = DataConfiguration::from_rank(engine.sample_size(), rank);
        let both = confidence_interval(&engine, &table, &g, &q, Side::TwoSided, 0.1, Mode::Log).unwrap();
        let lo = confidence_interval(&engine, &table, &g, &q, Side::Lower, 0.05, Mode::Log).unwrap();
        let hi = confidence_interval(&engine, &table, &g, &q, Side::Upper, 0.05, Mode::Log).unwrap();
        assert_eq!(both.lower, lo.lower);
        assert_eq!(both.upper, hi.upper);
    }
}

fn operand_strategy() -> impl Strategy<Value = Operand> {
    let q = prop_oneof![
        Just(Quantity::Never),
        Just(Quantity::Defiers),
        Just(Quantity::Compliers),
        Just(Quantity::Always),
        Just(Quantity::Affected),
        Just(Quantity::AvgEffect),
    ];
    prop_oneof![q.clone().prop_map(Operand::Single), (q.clone(), q).prop_map(|(a, b)| Operand::Ratio(a, b))]
}

fn value_strategy() -> impl Strategy<Value = Extended> {
    prop_oneof![
        (-3i64..12, 1i64..4).prop_map(|(n, d)| Extended::Finite(Ratio::new(n, d))),
        Just(Extended::PosInf),
        Just(Extended::NegInf),
    ]
}

fn expr_strategy() -> impl Strategy<Value = Expr> {
    let cmp = prop_oneof![Just(Cmp::Eq), Just(Cmp::Le), Just(Cmp::Ge), Just(Cmp::Lt), Just(Cmp::Gt)];
    let leaf = prop_oneof![
        4 => (operand_strategy(), cmp, value_strategy()).prop_map(|(o, c, v)| Expr::compare(o, c, v)),
        1 => prop_oneof![Just(Preset::FisherNull), Just(Preset::NeymanNull)].prop_map(Expr::Preset),
    ];
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Or),
            prop::collection::vec(inner, 2..4).prop_map(Expr::And),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn formatted_hypothesis_reparses_to_the_same_members(expr in expr_strategy(), s in 1u32..=8) {
        let size = SampleSize::new(s).unwrap();
        let text = expr.to_string();
        let back = parse_expr(&text).unwrap();
        for t in enumerate_type_configs(size) {
            prop_assert_eq!(expr.eval(&t), back.eval(&t), "{} at {}", text, t);
        }
        prop_assert_eq!(back.to_string(), text);
    }
}
