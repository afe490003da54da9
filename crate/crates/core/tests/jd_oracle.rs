//! J_D on ℤ against a dense scan that rebuilds every block from integer arithmetic.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use qmetric_core::algebra::AlgebraElement;
use qmetric_core::group::{GroupDescriptor, GroupElement};
use qmetric_core::length::LengthFunction;
use qmetric_core::operator::{jd_seminorm, lipnorm_estimate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn z(x: i64) -> GroupElement {
    GroupElement::Vector(vec![x])
}

/// r·‖(I − M_{2r}) λ_f M_r‖ with f given as (shift, coefficient) pairs.
fn scan_value(f: &[(i64, Complex64)], r: f64) -> f64 {
    let lmax = f.iter().map(|p| p.0.abs()).max().unwrap_or(0);
    let k = r.floor() as i64;
    let cols: Vec<i64> = (-k..=k).collect();
    let span = lmax + k;
    let rows: Vec<i64> = (-span..=span).filter(|x| x.abs() as f64 > 2.0 * r).collect();
    if cols.is_empty() || rows.is_empty() {
        return 0.0;
    }
    let mut m = DMatrix::<Complex64>::zeros(rows.len(), cols.len());
    for (i, x) in rows.iter().enumerate() {
        for (j, y) in cols.iter().enumerate() {
            for (s, c) in f {
                if s + y == *x {
                    m[(i, j)] += c;
                }
            }
        }
    }
    r * m.singular_values().max()
}

/// sup over 10³ uniform radii in (0, Lmax] and left limits at every half-integer.
fn dense_scan(f: &[(i64, Complex64)]) -> f64 {
    let lmax = f.iter().map(|p| p.0.abs()).max().unwrap_or(0) as f64;
    if lmax == 0.0 {
        return 0.0;
    }
    let mut radii: Vec<f64> = (1..=1000).map(|i| lmax * i as f64 / 1000.0).collect();
    let mut k = 1.0;
    while k / 2.0 <= lmax {
        radii.push(k / 2.0);
        radii.push(k / 2.0 - 1e-13);
        k += 1.0;
    }
    radii.into_iter().map(|r| scan_value(f, r)).fold(0.0, f64::max)
}

fn element(f: &[(i64, Complex64)]) -> AlgebraElement {
    AlgebraElement::from_pairs(f.iter().map(|(s, c)| (z(*s), *c)))
}

fn zl() -> LengthFunction {
    LengthFunction::word(Arc::new(GroupDescriptor::integers())).unwrap()
}

#[test]
fn single_and_symmetric_atoms_match_scan() {
    let l = zl();
    let one = Complex64::new(1.0, 0.0);
    let a = [(1, one)];
    let b = [(1, one), (-1, one)];
    let ja = jd_seminorm(&l, &element(&a)).unwrap().value;
    let jb = jd_seminorm(&l, &element(&b)).unwrap().value;
    assert!((ja - 0.5).abs() < 1e-12);
    assert!((jb - 2f64.sqrt() / 2.0).abs() < 1e-12);
    assert!((dense_scan(&a) - ja).abs() < 1e-12);
    assert!((dense_scan(&b) - jb).abs() < 1e-12);
}

#[test]
fn random_elements_match_scan() {
    let l = zl();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..40 {
        let atoms = rng.gen_range(1..=5);
        let f: Vec<(i64, Complex64)> = (0..atoms)
            .map(|_| (rng.gen_range(-6..=6), Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
            .collect();
        let el = element(&f);
        let merged: Vec<(i64, Complex64)> = el.iter().map(|(g, c)| (g.as_int().unwrap(), *c)).collect();
        let j = jd_seminorm(&l, &el).unwrap().value;
        let oracle = dense_scan(&merged);
        assert!((j - oracle).abs() <= 1e-12 * j.max(1.0), "J_D {j} vs scan {oracle} for {merged:?}");
    }
}

#[test]
fn lipnorm_bracket_of_unit_shift_collapses() {
    let l = zl();
    let e = lipnorm_estimate(&l, &AlgebraElement::delta(z(1)), &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!((e.lower() - 1.0).abs() < 1e-9);
    assert!((e.upper() - 1.0).abs() < 1e-9);
}
