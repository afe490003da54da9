//! Ball sizes and doubling behavior against closed forms.

use std::sync::Arc;

use qmetric_core::group::{ComponentSeq, FiniteGroup, GroupDescriptor, WeightSeq};
use qmetric_core::growth::{
    doubling_ratio, growth_table, linear_schedule, max_doubling_ratio, GrowthProperty, VerdictStatus,
};
use qmetric_core::length::{LengthFunction, LengthKind};

fn word(g: GroupDescriptor) -> LengthFunction {
    LengthFunction::word(Arc::new(g)).unwrap()
}

fn sum(c: ComponentSeq, w: WeightSeq) -> LengthFunction {
    LengthFunction::new(Arc::new(GroupDescriptor::direct_sum(c, w).unwrap()), LengthKind::MaxWeight).unwrap()
}

#[test]
fn integer_and_plane_balls() {
    let z = word(GroupDescriptor::integers());
    for r in 1..=64u128 {
        assert_eq!(z.ball_size(r as f64).unwrap(), 2 * r + 1);
        assert_eq!(z.ball_size(r as f64 + 0.5).unwrap(), 2 * r + 1);
    }
    let z2 = word(GroupDescriptor::free_abelian(2).unwrap());
    for r in 1..=32u128 {
        assert_eq!(z2.ball_size(r as f64).unwrap(), 2 * r * r + 2 * r + 1);
    }
    let rep = growth_table(&z2, &linear_schedule(32), None).unwrap();
    assert_eq!(rep.rows.len(), 32);
    assert_eq!(rep.verdict(GrowthProperty::StrongPolynomial).status, VerdictStatus::Consistent);
}

#[test]
fn z2_sum_with_square_exponent_weights() {
    let l = sum(ComponentSeq::Repeating(vec![FiniteGroup::Cyclic(2)]), WeightSeq::Pow2KSquared);
    for k in 1..=5u32 {
        assert_eq!(l.ball_size(2f64.powi((k * k) as i32)).unwrap(), 1u128 << k);
    }
    let (c, _) = max_doubling_ratio(&l, 1.0, 2f64.powi(25)).unwrap();
    assert!(c <= 2.0);
}

#[test]
fn catch_up_ratio_is_component_order() {
    let l = sum(ComponentSeq::CyclicIncreasing, WeightSeq::CatchUp);
    let mut a = 1.0;
    for n in 1..=6u32 {
        a *= (n + 1) as f64;
        // |B(a_n)| / |B(a_n / 2)| = |B(a_n)| / |B(a_{n-1})| = |G_n|
        assert_eq!(doubling_ratio(&l, a / 2.0).unwrap(), (n + 1) as f64);
    }
}

#[test]
fn log_length_is_not_polynomial() {
    let l = LengthFunction::new(Arc::new(GroupDescriptor::integers()), LengthKind::LogAbs).unwrap();
    let rep = growth_table(&l, &linear_schedule(8), None).unwrap();
    assert_eq!(rep.verdict(GrowthProperty::Polynomial).status, VerdictStatus::Refuted);
    assert!(rep.verdict(GrowthProperty::Polynomial).witness_r.unwrap() <= 8.0);
}
