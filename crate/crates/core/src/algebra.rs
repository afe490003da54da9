//! Finitely supported functions on a group under convolution.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::group::{GroupDescriptor, GroupElement};
use crate::length::LengthFunction;

/// f : G → ℂ with finite support and no stored zeros.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlgebraElement {
    #[serde(with = "pairs")]
    coeffs: BTreeMap<GroupElement, Complex64>,
}

/// Serialized as a list of (element, [re, im]) so that text formats need no structured keys.
mod pairs {
    use std::collections::BTreeMap;

    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::group::GroupElement;

    pub fn serialize<S: Serializer>(m: &BTreeMap<GroupElement, Complex64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<GroupElement, Complex64>, D::Error> {
        let v: Vec<(GroupElement, Complex64)> = Vec::deserialize(d)?;
        Ok(v.into_iter().filter(|(_, c)| *c != Complex64::new(0.0, 0.0)).collect())
    }
}

impl AlgebraElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn delta(g: GroupElement) -> Self {
        Self::from_pairs([(g, Complex64::new(1.0, 0.0))])
    }

    /// Sums coefficients of repeated elements and drops zeros.
    pub fn from_pairs<I: IntoIterator<Item = (GroupElement, Complex64)>>(pairs: I) -> Self {
        let mut f = Self::zero();
        for (g, c) in pairs {
            f.add_at(g, c);
        }
        f
    }

    pub fn add_at(&mut self, g: GroupElement, c: Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        match self.coeffs.entry(g) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == zero {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                if c != zero {
                    v.insert(c);
                }
            }
        }
    }

    pub fn get(&self, g: &GroupElement) -> Complex64 {
        self.coeffs.get(g).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroupElement, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &GroupElement> {
        self.coeffs.keys()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_pairs(self.coeffs.iter().map(|(g, v)| (g.clone(), v * c)))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_pairs(self.iter().chain(other.iter()).map(|(g, v)| (g.clone(), *v)))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Pointwise product with a real weight function.
    pub fn pointwise<F: Fn(&GroupElement) -> f64>(&self, w: F) -> Self {
        Self::from_pairs(self.iter().map(|(g, v)| (g.clone(), v * w(g))))
    }

    /// Restriction to the elements satisfying `keep`.
    pub fn restrict<F: Fn(&GroupElement) -> bool>(&self, keep: F) -> Self {
        Self::from_pairs(self.iter().filter(|(g, _)| keep(g)).map(|(g, v)| (g.clone(), *v)))
    }

    /// f*(x) = conj(f(x⁻¹)).
    pub fn star(&self, group: &GroupDescriptor) -> Self {
        Self::from_pairs(self.iter().map(|(g, v)| (group.inverse(g), v.conj())))
    }

    pub fn is_hermitian(&self, group: &GroupDescriptor, tol: f64) -> bool {
        let s = self.star(group);
        self.sub(&s).iter().all(|(_, v)| v.norm() <= tol)
    }

    /// (f∗g)(x) = Σ_y f(xy⁻¹) g(y), i.e. Σ f(a) g(b) δ_{ab}.
    pub fn convolve(&self, other: &Self, group: &GroupDescriptor) -> Self {
        let mut out = Self::zero();
        for (a, fa) in self.iter() {
            for (b, gb) in other.iter() {
                out.add_at(group.mul(a, b), fa * gb);
            }
        }
        out
    }

    /// Σ_x |f(x)|.
    pub fn l1(&self) -> f64 {
        self.coeffs.values().map(|v| v.norm()).sum()
    }

    /// Σ_x |f(x)|².
    pub fn l2_sq(&self) -> f64 {
        self.coeffs.values().map(|v| v.norm_sqr()).sum()
    }

    /// Σ_x |f(x)| 𝕃(x), the ℓ¹-weighted bound.
    pub fn weighted_l1(&self, l: &LengthFunction) -> Result<f64> {
        let mut s = 0.0;
        for (g, v) in self.iter() {
            s += v.norm() * l.length(g)?;
        }
        Ok(s)
    }

    /// max{𝕃(s) : s ∈ supp f}, 0 for the zero element.
    pub fn support_length(&self, l: &LengthFunction) -> Result<f64> {
        let mut m: f64 = 0.0;
        for g in self.support() {
            m = m.max(l.length(g)?);
        }
        Ok(m)
    }

    /// A random element with `atoms` support points drawn from `ball`, coefficients
    /// with real and imaginary parts uniform in [-1, 1]; `real` zeroes the imaginary parts.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, ball: &[GroupElement], atoms: usize, real: bool) -> Self {
        let mut f = Self::zero();
        while f.len() < atoms.min(ball.len()) {
            let g = ball[rng.gen_range(0..ball.len())].clone();
            if f.coeffs.contains_key(&g) {
                continue;
            }
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = if real { 0.0 } else { rng.gen_range(-1.0..1.0) };
            f.add_at(g, Complex64::new(re, im));
        }
        f
    }
}
