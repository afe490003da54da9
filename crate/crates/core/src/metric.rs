//! Lower bounds on the state-space distance ρ(μ, ν) = sup{|μ(f) − ν(f)| : L(f) <= 1}.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::AlgebraElement;
use crate::error::{QmError, Result};
use crate::group::{GroupDescriptor, GroupElement};
use crate::length::LengthFunction;
use crate::operator::{jd_seminorm, JdBlocks};

const UNIT_TOL: f64 = 1e-12;
/// Slack allowed when auditing a returned optimizer against its constraint.
pub const AUDIT_TOL: f64 = 1e-12;
pub const DEFAULT_ITERATIONS: usize = 500;

/// A state on the group algebra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateDescriptor {
    /// τ(f) = f(e).
    Trace,
    /// μ_ξ(f) = ⟨λ_f ξ, ξ⟩ / ‖ξ‖², ξ finitely supported.
    Vector { xi: AlgebraElement },
    /// Σ w_i μ_i with w_i >= 0, Σ w_i = 1.
    Mixture { parts: Vec<(f64, StateDescriptor)> },
}

impl StateDescriptor {
    /// A vector state from an unnormalized ξ.
    pub fn vector(xi: AlgebraElement) -> Result<Self> {
        if xi.is_zero() {
            return Err(QmError::InvalidParameters("vector state needs a nonzero vector".into()));
        }
        Ok(StateDescriptor::Vector { xi })
    }

    /// A vector state from ξ that must already have ‖ξ‖₂ = 1.
    pub fn unit_vector(xi: AlgebraElement) -> Result<Self> {
        let n = xi.l2_sq().sqrt();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(QmError::InvalidParameters(format!("vector state has norm {n}, expected 1")));
        }
        Ok(StateDescriptor::Vector { xi })
    }

    pub fn mixture(parts: Vec<(f64, StateDescriptor)>) -> Result<Self> {
        let s: f64 = parts.iter().map(|p| p.0).sum();
        if parts.iter().any(|p| !(p.0 >= 0.0)) || (s - 1.0).abs() > UNIT_TOL {
            return Err(QmError::InvalidParameters(format!(
                "mixture weights must be nonnegative and sum to 1, got sum {s}"
            )));
        }
        Ok(StateDescriptor::Mixture { parts })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StateDescriptor::Trace => Ok(()),
            StateDescriptor::Vector { xi } => Self::vector(xi.clone()).map(|_| ()),
            StateDescriptor::Mixture { parts } => {
                Self::mixture(parts.clone())?;
                parts.iter().try_for_each(|p| p.1.validate())
            }
        }
    }

    /// Elements s with μ̂(s) possibly nonzero, when finite.
    fn atom_support(&self, group: &GroupDescriptor) -> Vec<GroupElement> {
        match self {
            StateDescriptor::Trace => vec![group.identity()],
            StateDescriptor::Vector { xi } => {
                let mut out: Vec<GroupElement> = xi
                    .support()
                    .flat_map(|a| xi.support().map(move |b| (a, b)))
                    .map(|(a, b)| group.mul(a, &group.inverse(b)))
                    .collect();
                out.sort();
                out.dedup();
                out
            }
            StateDescriptor::Mixture { parts } => {
                let mut out: Vec<GroupElement> = parts.iter().flat_map(|p| p.1.atom_support(group)).collect();
                out.sort();
                out.dedup();
                out
            }
        }
    }
}

/// μ(f).
pub fn state_eval(mu: &StateDescriptor, f: &AlgebraElement, group: &GroupDescriptor) -> Complex64 {
    match mu {
        StateDescriptor::Trace => f.get(&group.identity()),
        StateDescriptor::Vector { xi } => {
            // ⟨λ_f ξ, ξ⟩ = Σ_{s,y} f(s) ξ(y) conj(ξ(sy))
            let mut acc = Complex64::new(0.0, 0.0);
            for (s, fs) in f.iter() {
                for (y, xy) in xi.iter() {
                    let z = xi.get(&group.mul(s, y));
                    acc += fs * xy * z.conj();
                }
            }
            acc / xi.l2_sq()
        }
        StateDescriptor::Mixture { parts } => parts.iter().map(|(w, m)| state_eval(m, f, group) * *w).sum(),
    }
}

/// μ̂(s) = μ(δ_s).
pub fn atom_value(mu: &StateDescriptor, s: &GroupElement, group: &GroupDescriptor) -> Complex64 {
    state_eval(mu, &AlgebraElement::delta(s.clone()), group)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// Σ|f(s)|𝕃(s) <= 1.
    L1,
    /// J_D(f) <= 1.
    Jd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBound {
    pub value: f64,
    pub f: AlgebraElement,
    pub constraint: Constraint,
    pub iterations: usize,
    /// Objective value after each accepted step.
    pub trace: Vec<f64>,
    /// The iteration cap was reached before the ascent settled.
    pub flagged: bool,
}

/// max over s ∈ B(cap) \ {e} of |μ̂(s) − ν̂(s)| / 𝕃(s), realized by one scaled atom.
pub fn atom_metric_lower_bound(
    mu: &StateDescriptor,
    nu: &StateDescriptor,
    lf: &LengthFunction,
    cap: f64,
) -> Result<MetricBound> {
    let group = lf.group();
    let e = group.identity();
    let mut cands = mu.atom_support(group);
    cands.extend(nu.atom_support(group));
    cands.sort();
    cands.dedup();
    let mut best = 0.0;
    let mut f = AlgebraElement::zero();
    for s in cands {
        if s == e {
            continue;
        }
        let l = lf.length(&s)?;
        if l > cap {
            continue;
        }
        let d = atom_value(mu, &s, group) - atom_value(nu, &s, group);
        let v = d.norm() / l;
        if v > best {
            best = v;
            f = AlgebraElement::delta(s).scale(d.conj() / (d.norm() * l));
        }
    }
    Ok(MetricBound { value: best, f, constraint: Constraint::L1, iterations: 0, trace: vec![best], flagged: false })
}

/// Hermitian basis of the real slice over B(radius) \ {e}: δ_s + δ_{s⁻¹} and i(δ_s − δ_{s⁻¹}),
/// or δ_s alone when s = s⁻¹.
fn hermitian_basis(lf: &LengthFunction, radius: f64) -> Result<Vec<AlgebraElement>> {
    let group = lf.group();
    let e = group.identity();
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let mut out = Vec::new();
    for s in lf.ball(radius)?.elements() {
        if *s == e {
            continue;
        }
        let si = group.inverse(s);
        if si == *s {
            out.push(AlgebraElement::delta(s.clone()));
        } else if *s < si {
            out.push(AlgebraElement::from_pairs([(s.clone(), one), (si.clone(), one)]));
            out.push(AlgebraElement::from_pairs([(s.clone(), i), (si, -i)]));
        }
    }
    Ok(out)
}

fn combine(basis: &[AlgebraElement], x: &[f64]) -> AlgebraElement {
    let mut f = AlgebraElement::zero();
    for (b, &c) in basis.iter().zip(x) {
        if c != 0.0 {
            for (s, v) in b.iter() {
                f.add_at(s.clone(), v * c);
            }
        }
    }
    f
}

/// Independent re-evaluation of the constraint functional.
pub fn constraint_value(lf: &LengthFunction, f: &AlgebraElement, c: Constraint) -> Result<f64> {
    match c {
        Constraint::L1 => f.weighted_l1(lf),
        Constraint::Jd => Ok(jd_seminorm(lf, f)?.value),
    }
}

/// A supergradient of J_D at f in basis coordinates, from the top singular pair of the maximizing block.
fn jd_supergradient(lf: &LengthFunction, f: &AlgebraElement, basis: &[AlgebraElement]) -> Result<Vec<f64>> {
    let est = jd_seminorm(lf, f)?;
    let (Some(wr), true) = (est.breakpoint, est.value > 0.0) else {
        return Ok(vec![0.0; basis.len()]);
    };
    let blocks = JdBlocks::new(lf, f)?;
    let k = blocks.breakpoints.iter().position(|&w| w == wr).unwrap_or(1).max(1);
    let wl = blocks.breakpoints[k - 1];
    let group = lf.group();
    let lmax = f.support_length(lf)?;
    let ball = lf.ball(lmax)?;
    let cols: Vec<&GroupElement> =
        ball.elements().iter().zip(ball.lengths()).filter(|(_, &l)| l <= wl && l < lmax).map(|(y, _)| y).collect();
    let mut rows: HashMap<GroupElement, usize> = HashMap::new();
    let mut entries = Vec::new();
    for (j, y) in cols.iter().enumerate() {
        for (s, c) in f.iter() {
            let x = group.mul(s, y);
            if lf.length(&x)? > 2.0 * wl {
                let n = rows.len();
                let i = *rows.entry(x).or_insert(n);
                entries.push((i, j, *c));
            }
        }
    }
    if rows.is_empty() {
        return Ok(vec![0.0; basis.len()]);
    }
    let mut m = DMatrix::<Complex64>::zeros(rows.len(), cols.len());
    for (i, j, c) in entries {
        m[(i, j)] += c;
    }
    let svd = m.svd(true, true);
    let top = (0..svd.singular_values.len())
        .max_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap())
        .unwrap();
    let u = svd.u.unwrap().column(top).into_owned();
    let v = svd.v_t.unwrap().row(top).adjoint();
    let mut grad = Vec::with_capacity(basis.len());
    for b in basis {
        let mut acc = Complex64::new(0.0, 0.0);
        for (s, c) in b.iter() {
            for (j, y) in cols.iter().enumerate() {
                if let Some(&i) = rows.get(&group.mul(s, y)) {
                    acc += u[i].conj() * c * v[j];
                }
            }
        }
        grad.push(wr * acc.re);
    }
    Ok(grad)
}

/// Scales f onto the constraint surface, shrinking by ulps until it is feasible.
fn normalize(lf: &LengthFunction, f: &AlgebraElement, c: Constraint) -> Result<Option<AlgebraElement>> {
    let v = constraint_value(lf, f, c)?;
    if !(v > 0.0) {
        return Ok(None);
    }
    let mut g = f.scale(Complex64::new(1.0 / v, 0.0));
    let mut shrink = 1.0;
    while constraint_value(lf, &g, c)? > 1.0 {
        shrink *= 1.0 - 4.0 * f64::EPSILON;
        g = f.scale(Complex64::new(shrink / v, 0.0));
    }
    Ok(Some(g))
}

/// Ascent options.
#[derive(Clone, Debug)]
pub struct AscentOptions {
    pub max_iterations: usize,
    /// Stop once this many consecutive steps bring no improvement.
    pub patience: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions { max_iterations: DEFAULT_ITERATIONS, patience: 60 }
    }
}

/// Maximizes Re(μ(f) − ν(f)) over hermitian f on B(radius) \ {e} with the declared constraint,
/// starting from the atom optimum; the value never decreases.
pub fn metric_ascent(
    mu: &StateDescriptor,
    nu: &StateDescriptor,
    lf: &LengthFunction,
    radius: f64,
    constraint: Constraint,
    opts: &AscentOptions,
) -> Result<MetricBound> {
    let group = lf.group();
    let basis = hermitian_basis(lf, radius)?;
    let obj: Vec<f64> = basis.iter().map(|b| (state_eval(mu, b, group) - state_eval(nu, b, group)).re).collect();
    let value_of = |x: &[f64]| x.iter().zip(&obj).map(|(a, b)| a * b).sum::<f64>();

    // atom optimum in hermitian form
    let mut x = vec![0.0; basis.len()];
    let atom = atom_metric_lower_bound(mu, nu, lf, radius)?;
    if let Some((s, c)) = atom.f.iter().next() {
        let si = group.inverse(s);
        let key = if *s < si { s.clone() } else { si.clone() };
        let idx = basis.iter().position(|b| b.support().next() == Some(&key)).expect("atom in slice");
        // f = (ζ/𝕃)δ_s: hermitian part with the same objective is Re ζ·b₀ ± Im ζ·b₁ over 2𝕃
        let l = lf.length(s)?;
        if si == *s {
            x[idx] = c.re.signum() / l;
        } else {
            let sign = if *s == key { 1.0 } else { -1.0 };
            let z = c * l;
            x[idx] = z.re / (2.0 * l);
            x[idx + 1] = sign * z.im / (2.0 * l);
        }
    }
    let mut f = combine(&basis, &x);
    let mut best = 0.0;
    if let Some(g) = normalize(lf, &f, constraint)? {
        f = g;
        x = coords(&basis, &f);
        best = value_of(&x);
    }
    if best < 0.0 {
        f = f.scale(Complex64::new(-1.0, 0.0));
        x.iter_mut().for_each(|v| *v = -*v);
        best = -best;
    }
    let mut trace = vec![best];
    let obj_norm = obj.iter().map(|v| v * v).sum::<f64>().sqrt();
    if obj_norm == 0.0 {
        return Ok(MetricBound {
            value: 0.0,
            f: AlgebraElement::zero(),
            constraint,
            iterations: 0,
            trace,
            flagged: false,
        });
    }
    let mut since = 0;
    let mut it = 0;
    let mut flagged = true;
    while it < opts.max_iterations {
        it += 1;
        let grad_c = match constraint {
            Constraint::Jd => jd_supergradient(lf, &f, &basis)?,
            Constraint::L1 => {
                // ∂/∂x_k Σ|f(s)|𝕃(s) = Σ_s 𝕃(s) Re(conj(f(s)/|f(s)|) b_k(s))
                let mut g = vec![0.0; basis.len()];
                for (k, b) in basis.iter().enumerate() {
                    for (s, bs) in b.iter() {
                        let v = f.get(s);
                        if v.norm() > 0.0 {
                            g[k] += lf.length(s)? * (v.conj() / v.norm() * bs).re;
                        }
                    }
                }
                g
            }
        };
        // ascent direction for the ratio objective/constraint at constraint = 1
        let dir: Vec<f64> = obj.iter().zip(&grad_c).map(|(o, g)| o - best * g).collect();
        let dn = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let step = xn / (it as f64).sqrt();
        let trial: Vec<f64> = if dn > 0.0 {
            x.iter().zip(&dir).map(|(a, d)| a + step * d / dn).collect()
        } else {
            x.iter().zip(&obj).map(|(a, d)| a + step * d / obj_norm).collect()
        };
        let improved = match normalize(lf, &combine(&basis, &trial), constraint)? {
            Some(g) => {
                let gx = coords(&basis, &g);
                let v = value_of(&gx);
                if v > best {
                    f = g;
                    x = gx;
                    best = v;
                    trace.push(best);
                    true
                } else {
                    false
                }
            }
            None => false,
        };
        since = if improved { 0 } else { since + 1 };
        if since >= opts.patience {
            flagged = false;
            break;
        }
    }
    let value = (state_eval(mu, &f, group) - state_eval(nu, &f, group)).norm();
    Ok(MetricBound { value, f, constraint, iterations: it, trace, flagged })
}

/// Coordinates of a hermitian f in the basis.
fn coords(basis: &[AlgebraElement], f: &AlgebraElement) -> Vec<f64> {
    basis
        .iter()
        .map(|b| {
            let (s, c) = b.iter().next().expect("nonzero basis element");
            let v = f.get(s);
            if b.len() == 1 || c.re != 0.0 {
                v.re
            } else {
                v.im
            }
        })
        .collect()
}

/// Feasibility audit: constraint <= 1 + AUDIT_TOL and f(e) = 0.
pub fn audit(lf: &LengthFunction, b: &MetricBound) -> Result<bool> {
    let e = lf.group().identity();
    Ok(constraint_value(lf, &b.f, b.constraint)? <= 1.0 + AUDIT_TOL && b.f.get(&e) == Complex64::new(0.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn zl() -> LengthFunction {
        LengthFunction::word(Arc::new(GroupDescriptor::integers())).unwrap()
    }

    fn z(x: i64) -> GroupElement {
        GroupElement::Vector(vec![x])
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn half_pair() -> StateDescriptor {
        StateDescriptor::vector(AlgebraElement::from_pairs([(z(0), c(1.0)), (z(1), c(1.0))])).unwrap()
    }

    #[test]
    fn state_eval_examples() {
        let g = GroupDescriptor::integers();
        let f = AlgebraElement::from_pairs([(z(0), c(3.0)), (z(1), c(1.0))]);
        assert_eq!(state_eval(&StateDescriptor::Trace, &f, &g), c(3.0));
        let mu = half_pair();
        assert_eq!(atom_value(&mu, &z(1), &g), c(0.5));
        assert_eq!(atom_value(&mu, &z(-1), &g), c(0.5));
        assert_eq!(atom_value(&mu, &z(0), &g), c(1.0));
        let point = StateDescriptor::unit_vector(AlgebraElement::delta(z(4))).unwrap();
        for s in -3..=3 {
            assert_eq!(atom_value(&point, &z(s), &g), c(if s == 0 { 1.0 } else { 0.0 }));
        }
        let s = 1.0 / 2f64.sqrt();
        assert!(StateDescriptor::unit_vector(AlgebraElement::from_pairs([(z(0), c(s)), (z(1), c(s))])).is_ok());
        assert!(StateDescriptor::unit_vector(AlgebraElement::from_pairs([(z(0), c(1.0)), (z(1), c(1.0))])).is_err());
        assert!(StateDescriptor::mixture(vec![(0.5, StateDescriptor::Trace), (0.6, mu)]).is_err());
    }

    #[test]
    fn vector_state_matches_inner_product_oracle() {
        // ⟨λ_f ξ, ξ⟩ through the dense matrix of λ_f on a ball containing supp f · supp ξ
        use rand::SeedableRng;
        let g = GroupDescriptor::Heisenberg;
        let l = LengthFunction::word(Arc::new(g.clone())).unwrap();
        let ball = l.ball(4.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let xi = AlgebraElement::random(&mut rng, ball.sub_ball(2.0), 4, false);
            let f = AlgebraElement::random(&mut rng, ball.sub_ball(2.0), 3, false);
            let mu = StateDescriptor::vector(xi.clone()).unwrap();
            let idx = ball.elements();
            let mut acc = c(0.0);
            for (i, x) in idx.iter().enumerate() {
                for (j, y) in idx.iter().enumerate() {
                    // λ_f[x, y] = f(xy⁻¹)
                    let k = f.get(&g.mul(x, &g.inverse(y)));
                    acc += xi.get(&idx[i]).conj() * k * xi.get(&idx[j]);
                }
            }
            acc /= xi.l2_sq();
            assert!((acc - state_eval(&mu, &f, &g)).norm() < 1e-12);
            assert!((state_eval(&mu, &AlgebraElement::delta(g.identity()), &g) - c(1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn atom_bound_examples() {
        let l = zl();
        let mu = half_pair();
        let b = atom_metric_lower_bound(&mu, &StateDescriptor::Trace, &l, 5.0).unwrap();
        assert_eq!(b.value, 0.5);
        assert!(audit(&l, &b).unwrap());
        assert_eq!(atom_metric_lower_bound(&mu, &mu, &l, 5.0).unwrap().value, 0.0);
        let point = StateDescriptor::vector(AlgebraElement::delta(z(2))).unwrap();
        assert_eq!(atom_metric_lower_bound(&point, &StateDescriptor::Trace, &l, 5.0).unwrap().value, 0.0);
    }

    #[test]
    fn ascent_examples() {
        let l = zl();
        let mu = half_pair();
        let opts = AscentOptions::default();
        let l1 = metric_ascent(&mu, &StateDescriptor::Trace, &l, 3.0, Constraint::L1, &opts).unwrap();
        let jd = metric_ascent(&mu, &StateDescriptor::Trace, &l, 3.0, Constraint::Jd, &opts).unwrap();
        assert!(l1.value >= 0.5 * (1.0 - 1e-12));
        assert!(jd.value >= l1.value - 1e-9);
        // (δ₁ + δ₋₁)·√2 lies on the J_D ball and reaches √2
        assert!(jd.value >= 2f64.sqrt() * (1.0 - 1e-12));
        assert!(audit(&l, &l1).unwrap() && audit(&l, &jd).unwrap());
        assert!(jd.trace.windows(2).all(|w| w[1] >= w[0]));
        let same = metric_ascent(&mu, &mu, &l, 3.0, Constraint::Jd, &opts).unwrap();
        assert_eq!(same.value, 0.0);
    }
}
