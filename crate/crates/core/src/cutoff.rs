//! Smoothed annulus cutoffs g = h*∗k, the dyadic scale family g_n, the
//! sharp/flat decomposition f = f♯ + f♭ and the inequality verifier.
//!
//! Cutoff values are exact rationals: with k = w·χ_E and h = χ_F,
//! g(x) = w·#{y ∈ E : yx⁻¹ ∈ F}.

use std::collections::{BTreeMap, HashSet};

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::algebra::AlgebraElement;
use crate::error::{QmError, Result};
use crate::group::GroupElement;
use crate::growth::max_doubling_ratio;
use crate::length::LengthFunction;
use crate::operator::{jd_seminorm, lipnorm_estimate, localized_block, SeminormEstimate, SparseBlock};

pub type Rational = Ratio<u64>;

fn to_f64(q: &Rational) -> f64 {
    q.to_f64().expect("finite rational")
}

/// The set F of h = χ_F.
#[derive(Clone, Debug)]
pub enum HSet {
    /// A(s, t) = {x : s < 𝕃(x) <= t}.
    Annulus {
        s: f64,
        t: f64,
    },
    Set(HashSet<GroupElement>),
}

/// g = h*∗k with k = weight·χ_E and h = χ_F, evaluated lazily.
#[derive(Clone, Debug)]
pub struct ConvolutionCutoff {
    e: Vec<GroupElement>,
    /// E ⊆ B(e_radius).
    e_radius: f64,
    weight: Rational,
    h: HSet,
    /// |F|, when known.
    h_size: Option<u128>,
}

impl ConvolutionCutoff {
    /// k = |B(r)|⁻¹χ_{B(r)}, h = χ_{A(s,t)}; requires t > s > 2r > 0.
    pub fn annulus(lf: &LengthFunction, r: f64, s: f64, t: f64) -> Result<Self> {
        if !(t > s && s > 2.0 * r && r > 0.0) {
            return Err(QmError::Usage(format!(
                "smoothed annulus cutoff needs t > s > 2r > 0, got r={r}, s={s}, t={t}"
            )));
        }
        let e = lf.ball(r)?.elements().to_vec();
        let weight = Rational::new(1, e.len() as u64);
        let h_size = match (lf.ball_size(t), lf.ball_size(s)) {
            (Ok(a), Ok(b)) => Some(a - b),
            _ => None,
        };
        Ok(ConvolutionCutoff { e, e_radius: r, weight, h: HSet::Annulus { s, t }, h_size })
    }

    /// k = χ_E, h = χ_F with E ⊆ B(r).
    pub fn subsets(e: Vec<GroupElement>, r: f64, f: HashSet<GroupElement>) -> Self {
        let h_size = Some(f.len() as u128);
        ConvolutionCutoff { e, e_radius: r, weight: Rational::one(), h: HSet::Set(f), h_size }
    }

    /// ‖k‖₂.
    pub fn k_l2(&self) -> f64 {
        to_f64(&self.weight) * (self.e.len() as f64).sqrt()
    }

    /// ‖h‖₂, when |F| is known.
    pub fn h_l2(&self) -> Option<f64> {
        self.h_size.map(|n| (n as f64).sqrt())
    }

    pub fn e_size(&self) -> usize {
        self.e.len()
    }

    /// g(x) exactly.
    pub fn eval(&self, lf: &LengthFunction, x: &GroupElement) -> Result<Rational> {
        let group = lf.group();
        let xinv = group.inverse(x);
        let mut count: u64 = 0;
        match &self.h {
            HSet::Annulus { s, t } => {
                let lx = lf.length(x)?;
                if lx <= s - self.e_radius || lx > t + self.e_radius {
                    return Ok(Rational::zero());
                }
                for y in &self.e {
                    let l = lf.length(&group.mul(y, &xinv))?;
                    if l > *s && l <= *t {
                        count += 1;
                    }
                }
            }
            HSet::Set(f) => {
                for y in &self.e {
                    if f.contains(&group.mul(y, &xinv)) {
                        count += 1;
                    }
                }
            }
        }
        Ok(self.weight * Rational::from_integer(count))
    }

    /// The pointwise product g·f.
    pub fn apply(&self, lf: &LengthFunction, f: &AlgebraElement) -> Result<AlgebraElement> {
        let mut out = AlgebraElement::zero();
        for (x, v) in f.iter() {
            let g = self.eval(lf, x)?;
            if !g.is_zero() {
                out.add_at(x.clone(), v * to_f64(&g));
            }
        }
        Ok(out)
    }

    /// g on every element of `domain`, zeros omitted.
    pub fn values_on(&self, lf: &LengthFunction, domain: &[GroupElement]) -> Result<BTreeMap<GroupElement, Rational>> {
        let mut out = BTreeMap::new();
        for x in domain {
            let g = self.eval(lf, x)?;
            if !g.is_zero() {
                out.insert(x.clone(), g);
            }
        }
        Ok(out)
    }
}

/// Exact values of g = h*∗k, k = |B(r)|⁻¹χ_{B(r)}, h = χ_{A(s,t)}, over its support.
pub fn smoothed_annulus_values(
    lf: &LengthFunction,
    r: f64,
    s: f64,
    t: f64,
) -> Result<BTreeMap<GroupElement, Rational>> {
    let g = ConvolutionCutoff::annulus(lf, r, s, t)?;
    let ball = lf.ball(t + r)?;
    g.values_on(lf, ball.elements())
}

/// g = h*∗k as an algebra element.
pub fn smoothed_annulus_cutoff(lf: &LengthFunction, r: f64, s: f64, t: f64) -> Result<AlgebraElement> {
    Ok(AlgebraElement::from_pairs(
        smoothed_annulus_values(lf, r, s, t)?.into_iter().map(|(x, q)| (x, Complex64::new(to_f64(&q), 0.0))),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Constants {
    /// C₁ = C^K, C₂ = 4RC₁, C₃ = C^(1+log₂(6R+7)), C₄ = (1+C₂)C₃.
    pub fn nominal(c: f64, k: u32) -> Self {
        let r = 2f64.powi(k as i32);
        let c1 = c.powi(k as i32);
        let c2 = 4.0 * r * c1;
        let c3 = c.powf(1.0 + (6.0 * r + 7.0).log2());
        Constants { c1, c2, c3, c4: (1.0 + c2) * c3 }
    }

    /// The same chain with the radius factors r⁻¹ and the square root kept:
    /// C₁ = R·C^K, C₂ = 4RC₁, C₃ = 6R·C^((1+log₂(6R+7))/2), C₄ = (1+C₂)C₃.
    pub fn certified(c: f64, k: u32) -> Self {
        let r = 2f64.powi(k as i32);
        let c1 = r * c.powi(k as i32);
        let c2 = 4.0 * r * c1;
        let c3 = 6.0 * r * c.powf((1.0 + (6.0 * r + 7.0).log2()) / 2.0);
        Constants { c1, c2, c3, c4: (1.0 + c2) * c3 }
    }
}

/// The cutoffs g_n = h_n∗k_n at scale R = 2^K with their constants.
pub struct ScaleFamily<'a> {
    pub lf: &'a LengthFunction,
    pub k: u32,
    pub r: f64,
    pub doubling: f64,
    /// Doubling ratios were checked on r ∈ [1, validated_to].
    pub validated_to: f64,
    pub n_max: u32,
    pub constants: Constants,
    pub certified: Constants,
}

/// Largest radius r <= want with B(2r) inside the ball cap (at least 1).
pub fn materialized_range(lf: &LengthFunction, want: f64) -> Result<f64> {
    let mut r = want.max(1.0);
    loop {
        match lf.ball_size(2.0 * r) {
            Ok(n) if n <= lf.ball_cap() as u128 => return Ok(r),
            Ok(_) | Err(QmError::BallCap { .. }) if r > 1.0 => r = (r / 2.0).max(1.0),
            Ok(_) => return Ok(1.0),
            Err(e) => return Err(e),
        }
    }
}

/// Builds g_1..g_{n_max}; `c = None` uses the observed max doubling ratio.
pub fn build_scale_family<'a>(lf: &'a LengthFunction, k: u32, n_max: u32, c: Option<f64>) -> Result<ScaleFamily<'a>> {
    if k < 2 {
        return Err(QmError::Usage(format!("scale exponent K={k} must be at least 2 (R >= 4)")));
    }
    let r = 2f64.powi(k as i32);
    let validated_to = materialized_range(lf, r.powi(n_max as i32 + 1))?;
    let (observed, witness) = max_doubling_ratio(lf, 1.0, validated_to)?;
    let doubling = c.unwrap_or(observed);
    if doubling < observed {
        return Err(QmError::Doubling { constant: doubling, witness_r: witness, ratio: observed });
    }
    Ok(ScaleFamily {
        lf,
        k,
        r,
        doubling,
        validated_to,
        n_max,
        constants: Constants::nominal(doubling, k),
        certified: Constants::certified(doubling, k),
    })
}

/// Least N >= 2 with R^(-2N)·max(C₁, C₄) < ε/4.
pub fn choose_n(r: f64, constants: &Constants, eps: f64) -> Result<u32> {
    if !(eps > 0.0) {
        return Err(QmError::Usage(format!("epsilon {eps} must be positive")));
    }
    let m = constants.c1.max(constants.c4);
    let mut n = 2u32;
    while r.powi(-2 * n as i32) * m >= eps / 4.0 {
        n += 1;
    }
    Ok(n)
}

/// The ε at which `choose_n` first returns N: 4·R^(-2N)·max(C₁, C₄), nudged up one ulp.
pub fn epsilon_for(r: f64, constants: &Constants, n: u32) -> f64 {
    let e = 4.0 * r.powi(-2 * n as i32) * constants.c1.max(constants.c4);
    e * (1.0 + 4.0 * f64::EPSILON)
}

impl<'a> ScaleFamily<'a> {
    /// g_n = h_n∗k_n: k_n normalized on B(R^(n-1)), h_n = χ of A(R^n, R^(n+1)).
    pub fn g(&self, n: u32) -> Result<ConvolutionCutoff> {
        if n < 1 {
            return Err(QmError::Usage("cutoff index n must be at least 1".into()));
        }
        let rr = self.r.powi(n as i32 - 1);
        ConvolutionCutoff::annulus(self.lf, rr, self.r * rr, self.r * self.r * rr)
    }

    pub fn choose_n(&self, eps: f64) -> Result<u32> {
        choose_n(self.r, &self.constants, eps)
    }

    /// s_n = R^(2n-1) − R^(2n-3).
    pub fn s_n(&self, n: u32) -> f64 {
        self.r.powi(2 * n as i32 - 1) - self.r.powi(2 * n as i32 - 3)
    }

    /// t_n = R^(2n) + R^(2n-1).
    pub fn t_n(&self, n: u32) -> f64 {
        self.r.powi(2 * n as i32) + self.r.powi(2 * n as i32 - 1)
    }

    /// r_n = R^(2n-1)/6.
    pub fn r_n(&self, n: u32) -> f64 {
        self.r.powi(2 * n as i32 - 1) / 6.0
    }

    /// The three radius conditions used for the annuli A_n.
    pub fn radius_conditions(&self, n: u32) -> bool {
        let (r, s, t) = (self.r_n(n), self.s_n(n), self.t_n(n));
        let rr = self.r;
        3.0 * r < s
            && s - 2.0 * r >= rr.powi(2 * n as i32 - 2) + rr.powi(2 * n as i32 - 3)
            && t + 2.0 * r <= rr.powi(2 * n as i32 + 1) - rr.powi(2 * n as i32 - 1)
    }

    /// Indices n >= from whose g_{2n} support can meet a point of length l.
    fn even_indices_near(&self, l: f64, from: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut n = from;
        loop {
            let lo = self.r.powi(2 * n as i32) - self.r.powi(2 * n as i32 - 1);
            if lo >= l {
                break;
            }
            let hi = self.r.powi(2 * n as i32 + 1) + self.r.powi(2 * n as i32 - 1);
            if l <= hi {
                out.push(n);
            }
            n += 1;
        }
        out
    }

    /// Index n >= from with x ∈ A_n, if any.
    fn annulus_index(&self, l: f64, from: u32) -> Option<u32> {
        let mut n = from;
        loop {
            if self.s_n(n) >= l {
                return None;
            }
            if l <= self.t_n(n) {
                return Some(n);
            }
            n += 1;
        }
    }
}

/// Per-element rational weights of the decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionWeights {
    /// Σ_{n>=N} g_{2n}(x).
    pub p: Rational,
    /// x ∈ ∪_{n>=N} A_n.
    pub in_annuli: bool,
}

impl DecompositionWeights {
    pub fn q(&self) -> Rational {
        Rational::one() - self.p
    }

    pub fn rho(&self) -> Rational {
        if self.in_annuli {
            self.q()
        } else {
            Rational::zero()
        }
    }

    pub fn sharp(&self) -> Rational {
        self.p + self.rho()
    }

    pub fn flat(&self) -> Rational {
        Rational::one() - self.sharp()
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub n: u32,
    pub p: AlgebraElement,
    pub q: AlgebraElement,
    pub rho: AlgebraElement,
    pub flat: AlgebraElement,
    pub sharp: AlgebraElement,
    pub weights: BTreeMap<GroupElement, DecompositionWeights>,
    /// max 𝕃 over supp(f♭).
    pub flat_support_length: f64,
    /// R^(2N) + R^(2N-1).
    pub flat_support_bound: f64,
}

impl Decomposition {
    pub fn flat_support_ok(&self) -> bool {
        self.flat_support_length <= self.flat_support_bound
    }

    /// q·χ_{A_n}.
    pub fn q_on_annulus(&self, family: &ScaleFamily, n: u32) -> Result<AlgebraElement> {
        let (s, t) = (family.s_n(n), family.t_n(n));
        let mut out = AlgebraElement::zero();
        for (x, v) in self.q.iter() {
            let l = family.lf.length(x)?;
            if l > s && l <= t {
                out.add_at(x.clone(), *v);
            }
        }
        Ok(out)
    }
}

/// p_N = Σ_{n>=N} g_{2n}f, q_N = f − p_N, ρ_N = Σ_{n>=N} q_Nχ_{A_n}, f♯ = p_N + ρ_N, f♭ = f − f♯.
pub fn sharp_flat_decompose(f: &AlgebraElement, family: &ScaleFamily, n: u32) -> Result<Decomposition> {
    if n < 2 {
        return Err(QmError::Usage(format!("decomposition index N={n} must be at least 2")));
    }
    let lf = family.lf;
    let mut weights = BTreeMap::new();
    let mut parts: [AlgebraElement; 5] = Default::default();
    let mut flat_len: f64 = 0.0;
    for (x, v) in f.iter() {
        let l = lf.length(x)?;
        let mut p = Rational::zero();
        for m in family.even_indices_near(l, n) {
            p += family.g(2 * m)?.eval(lf, x)?;
        }
        let w = DecompositionWeights { p, in_annuli: family.annulus_index(l, n).is_some() };
        for (slot, q) in parts.iter_mut().zip([w.p, w.q(), w.rho(), w.flat(), w.sharp()]) {
            if !q.is_zero() {
                slot.add_at(x.clone(), v * to_f64(&q));
            }
        }
        if !w.flat().is_zero() {
            flat_len = flat_len.max(l);
        }
        weights.insert(x.clone(), w);
    }
    let [p, q, rho, flat, sharp] = parts;
    Ok(Decomposition {
        n,
        p,
        q,
        rho,
        flat,
        sharp,
        weights,
        flat_support_length: flat_len,
        flat_support_bound: family.r.powi(2 * n as i32) + family.r.powi(2 * n as i32 - 1),
    })
}

/// Which side of the true value a number certifies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    Exact,
    LowerBound,
    UpperBound,
    Stabilized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordStatus {
    Pass,
    Fail,
    Inconclusive,
}

/// One inequality lhs <= rhs (or lhs < rhs when strict).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityRecord {
    pub name: String,
    pub citation: String,
    pub lhs: f64,
    pub lhs_cert: Bound,
    pub rhs: f64,
    pub rhs_cert: Bound,
    pub margin: f64,
    pub status: RecordStatus,
    /// The certificate directions can detect a violation.
    pub rigorous: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn record_tolerance(rhs: f64) -> f64 {
    1e-9 * rhs.abs().max(1.0)
}

impl InequalityRecord {
    pub fn new(name: impl Into<String>, citation: &str, lhs: f64, lhs_cert: Bound, rhs: f64, rhs_cert: Bound) -> Self {
        use Bound::*;
        let tol = record_tolerance(rhs);
        let holds = lhs <= rhs + tol;
        let detects = matches!(lhs_cert, Exact | LowerBound) && matches!(rhs_cert, Exact | UpperBound);
        let proves = matches!(lhs_cert, Exact | UpperBound) && matches!(rhs_cert, Exact | LowerBound);
        let status = if !lhs.is_finite() || rhs.is_nan() {
            RecordStatus::Inconclusive
        } else if detects {
            if holds {
                RecordStatus::Pass
            } else {
                RecordStatus::Fail
            }
        } else if (proves || (lhs_cert == Stabilized && rhs_cert == Stabilized)) && holds {
            RecordStatus::Pass
        } else {
            RecordStatus::Inconclusive
        };
        InequalityRecord {
            name: name.into(),
            citation: citation.to_string(),
            lhs,
            lhs_cert,
            rhs,
            rhs_cert,
            margin: rhs - lhs,
            status,
            rigorous: detects,
            note: None,
        }
    }

    /// lhs < rhs, both exact.
    pub fn strict(name: impl Into<String>, citation: &str, lhs: f64, rhs: f64) -> Self {
        let mut r = Self::new(name, citation, lhs, Bound::Exact, rhs, Bound::Exact);
        r.status = if lhs < rhs { RecordStatus::Pass } else { RecordStatus::Fail };
        r
    }

    /// A record that could not be evaluated.
    pub fn inconclusive(name: impl Into<String>, citation: &str, note: String) -> Self {
        InequalityRecord {
            name: name.into(),
            citation: citation.to_string(),
            lhs: f64::NAN,
            lhs_cert: Bound::Exact,
            rhs: f64::NAN,
            rhs_cert: Bound::Exact,
            margin: f64::NAN,
            status: RecordStatus::Inconclusive,
            rigorous: false,
            note: Some(note),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub records: Vec<InequalityRecord>,
}

impl InequalityReport {
    pub fn failures(&self) -> impl Iterator<Item = &InequalityRecord> {
        self.records.iter().filter(|r| r.status == RecordStatus::Fail)
    }

    pub fn count(&self, s: RecordStatus) -> usize {
        self.records.iter().filter(|r| r.status == s).count()
    }

    pub fn extend(&mut self, other: InequalityReport) {
        self.records.extend(other.records);
    }

    fn push(&mut self, r: Result<InequalityRecord>, name: &str, citation: &str) {
        match r {
            Ok(rec) => self.records.push(rec),
            Err(e @ (QmError::BallCap { .. } | QmError::MatrixCap { .. })) => {
                self.records.push(InequalityRecord::inconclusive(name, citation, e.to_string()))
            }
            Err(e) => self.records.push(InequalityRecord::inconclusive(name, citation, format!("error: {e}"))),
        }
    }
}

/// ‖λ_g P‖ on the domain B(radius): a lower bound for ‖λ_g‖ with no truncation error on that domain.
pub fn lambda_norm_lower(lf: &LengthFunction, g: &AlgebraElement, radius: f64) -> Result<f64> {
    if g.is_zero() {
        return Ok(0.0);
    }
    let group = lf.group();
    let dom = lf.ball(radius.max(0.0))?;
    let mut rows: std::collections::HashMap<GroupElement, usize> = std::collections::HashMap::new();
    let mut block = SparseBlock { nrows: 0, ncols: dom.len(), entries: Vec::new() };
    for (j, y) in dom.elements().iter().enumerate() {
        for (s, c) in g.iter() {
            let n = rows.len();
            let i = *rows.entry(group.mul(s, y)).or_insert(n);
            block.entries.push((i, j, *c));
        }
    }
    block.nrows = rows.len();
    Ok(block.norm().value)
}

/// Certificate direction of a J_D estimate.
fn jd_bound(e: &SeminormEstimate) -> Bound {
    match e.certificate {
        crate::operator::Certificate::Exact => Bound::Exact,
        _ => Bound::LowerBound,
    }
}

/// Largest ball used for a dense L_D truncation.
pub const LIPNORM_BALL_LIMIT: u128 = 600;

/// The candidate radii (at least 1) whose balls stay within LIPNORM_BALL_LIMIT.
fn affordable_radii(lf: &LengthFunction, candidates: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for &r in candidates {
        let r = r.max(1.0);
        match lf.ball_size(r) {
            Ok(n) if n <= LIPNORM_BALL_LIMIT => out.push(r),
            Ok(_) | Err(QmError::BallCap { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn lipnorm_on(lf: &LengthFunction, f: &AlgebraElement, radii: &[f64]) -> Result<SeminormEstimate> {
    if radii.is_empty() {
        return Err(QmError::Unsupported(format!(
            "no truncation radius with at most {LIPNORM_BALL_LIMIT} ball elements"
        )));
    }
    lipnorm_estimate(lf, f, radii)
}

/// Truncation radius for ‖λ_g‖ lower bounds.
fn lambda_radius(lf: &LengthFunction, g: &AlgebraElement) -> Result<f64> {
    Ok(g.support_length(lf)?.max(1.0))
}

/// Verifier options.
#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Decomposition index N (>= 2).
    pub n: u32,
    /// Also check the N = 1 forms of the statements valid for every N >= 1.
    pub include_n1: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { n: 2, include_n1: true }
    }
}

/// Family-level records: the cutoff shape statements and disjointness, checked exactly on B(radius).
pub fn family_records(family: &ScaleFamily, radius: f64) -> InequalityReport {
    let mut rep = InequalityReport::default();
    let lf = family.lf;
    let ball = match lf.ball(radius) {
        Ok(b) => b,
        Err(e) => {
            rep.records.push(InequalityRecord::inconclusive("cutoff shape", "support", e.to_string()));
            return rep;
        }
    };
    let mut supports: Vec<HashSet<GroupElement>> = Vec::new();
    for n in 1..=family.n_max {
        let res = (|| -> Result<(usize, usize, usize, HashSet<GroupElement>)> {
            let g = family.g(n)?;
            let rr = family.r.powi(n as i32 - 1);
            let (s, t) = (family.r * rr, family.r * family.r * rr);
            let (mut range_bad, mut supp_bad, mut plateau_bad) = (0, 0, 0);
            let mut supp = HashSet::new();
            for (x, &l) in ball.elements().iter().zip(ball.lengths()) {
                let v = g.eval(lf, x)?;
                if v > Rational::one() {
                    range_bad += 1;
                }
                if !v.is_zero() {
                    supp.insert(x.clone());
                    if !(l > s - rr && l <= t + rr) {
                        supp_bad += 1;
                    }
                }
                if l > s + rr && l <= t - rr && v != Rational::one() {
                    plateau_bad += 1;
                }
            }
            Ok((range_bad, supp_bad, plateau_bad, supp))
        })();
        match res {
            Ok((a, b, c, supp)) => {
                let note = format!("exact check on B({radius})");
                rep.records.push(
                    InequalityRecord::new(
                        format!("0<=g_{n}<=1 violations"),
                        "support",
                        a as f64,
                        Bound::Exact,
                        0.0,
                        Bound::Exact,
                    )
                    .with_note(note.clone()),
                );
                rep.records.push(
                    InequalityRecord::new(
                        format!("supp g_{n} outside A(s-r,t+r)"),
                        "support",
                        b as f64,
                        Bound::Exact,
                        0.0,
                        Bound::Exact,
                    )
                    .with_note(note.clone()),
                );
                rep.records.push(
                    InequalityRecord::new(
                        format!("g_{n} != 1 on A(s+r,t-r)"),
                        "support",
                        c as f64,
                        Bound::Exact,
                        0.0,
                        Bound::Exact,
                    )
                    .with_note(note),
                );
                supports.push(supp);
            }
            Err(e) => {
                rep.records.push(InequalityRecord::inconclusive(format!("shape of g_{n}"), "support", e.to_string()));
                break;
            }
        }
    }
    for i in 0..supports.len() {
        for j in i + 2..supports.len() {
            let overlap = supports[i].intersection(&supports[j]).count();
            rep.records.push(
                InequalityRecord::new(
                    format!("|supp g_{} ∩ supp g_{}|", i + 1, j + 1),
                    "disjoint",
                    overlap as f64,
                    Bound::Exact,
                    0.0,
                    Bound::Exact,
                )
                .with_note(format!("exact check on B({radius})")),
            );
        }
    }
    for n in 1..=family.n_max {
        rep.records.push(InequalityRecord::new(
            format!("radius conditions for A_{n} unmet"),
            "qcut",
            if family.radius_conditions(n) { 0.0 } else { 1.0 },
            Bound::Exact,
            0.0,
            Bound::Exact,
        ));
    }
    rep
}

/// Every per-element record for f.
pub fn verify_inequalities(f: &AlgebraElement, family: &ScaleFamily, opts: &VerifyOptions) -> Result<InequalityReport> {
    let lf = family.lf;
    let mut rep = InequalityReport::default();
    let jd_f = jd_seminorm(lf, f)?;
    let jf = jd_f.value;
    let w1 = f.weighted_l1(lf)?;
    let lmax = f.support_length(lf)?;
    let e = lf.group().identity();

    rep.records.push(InequalityRecord::new("J_D(f) <= sum|f|L", "control", jf, jd_bound(&jd_f), w1, Bound::UpperBound));

    // localized blocks
    if lmax > 0.0 {
        for (a, b) in [(0.0, 0.25), (0.0, 0.5), (0.25, 0.75), (0.5, 1.0), (0.25, 1.5)] {
            let (r, s) = (a * lmax, b * lmax);
            let name = format!("(s-r)|(I-M_s)λ_f M_r| <= sum|f|L at r={r}, s={s}");
            rep.push(
                localized_block(lf, f, r, s).map(|(_, nv)| {
                    let cert = if nv.certificate == crate::operator::Certificate::Exact {
                        Bound::Exact
                    } else {
                        Bound::LowerBound
                    };
                    InequalityRecord::new(name.clone(), "weight", (s - r) * nv.value, cert, w1, Bound::UpperBound)
                }),
                &name,
                "weight",
            );
        }
    }

    if f.support().any(|x| *x != e) {
        rep.records.push(InequalityRecord::strict("0 < J_D(f)", "norm", 0.0, jf));
    }

    if lmax > 0.0 {
        rep.extend(cutoff_records(f, lf, &jd_f, lmax)?);
    }
    rep.extend(scale_records(f, family, &jd_f, opts)?);
    Ok(rep)
}

/// Records for one smoothed annulus cutoff placed across the support of f.
fn cutoff_records(
    f: &AlgebraElement,
    lf: &LengthFunction,
    jd_f: &SeminormEstimate,
    lmax: f64,
) -> Result<InequalityReport> {
    let mut rep = InequalityReport::default();
    let jf = jd_f.value;
    let jb = jd_bound(jd_f);
    let (r, s, t) = (lmax / 5.0, lmax / 2.0, lmax);
    let g = match ConvolutionCutoff::annulus(lf, r, s, t) {
        Ok(g) => g,
        Err(e) => {
            rep.records.push(InequalityRecord::inconclusive("cutoff setup", "power", e.to_string()));
            return Ok(rep);
        }
    };
    let gf = g.apply(lf, f)?;
    let hk = g.h_l2().unwrap_or(f64::INFINITY) * g.k_l2();
    let lam_gf = lambda_norm_lower(lf, &gf, lambda_radius(lf, &gf)?)?;
    let jd_gf = jd_seminorm(lf, &gf)?;
    let b_r = lf.ball_size(r)? as f64;
    let b_t = lf.ball_size(t)? as f64;

    rep.records.push(InequalityRecord::new(
        "|λ_{gf}| <= |λ_f| |h|_2 |k|_2",
        "cutoff",
        lam_gf,
        Bound::LowerBound,
        f.l1() * hk,
        Bound::UpperBound,
    ));
    let ld_radii = affordable_radii(lf, &[lmax, 2.0 * lmax])?;
    rep.push(
        lipnorm_on(lf, &gf, &ld_radii).and_then(|ld| {
            Ok(InequalityRecord::new(
                "L_D(gf) <= |h|_2 |k|_2 L_D(f)",
                "lip",
                ld.lower(),
                Bound::LowerBound,
                hk * f.weighted_l1(lf)?,
                Bound::UpperBound,
            ))
        }),
        "L_D(gf) <= |h|_2 |k|_2 L_D(f)",
        "lip",
    );
    rep.records.push(InequalityRecord::new(
        "|λ_{gf}| <= r^-1 |h|_2 |k|_2 J_D(f)",
        "bound",
        lam_gf,
        Bound::LowerBound,
        hk * jf / r,
        jb,
    ));
    rep.records.push(InequalityRecord::new(
        "J_D(gf) <= |h|_2 |k|_2 J_D(f)",
        "jip1",
        jd_gf.value,
        jd_bound(&jd_gf),
        hk * jf,
        jb,
    ));
    let ratio = (b_t / b_r).sqrt();
    rep.records.push(InequalityRecord::new(
        "|λ_{gf}| <= r^-1 (|B(t)|/|B(r)|)^1/2 J_D(f)",
        "power",
        lam_gf,
        Bound::LowerBound,
        ratio * jf / r,
        jb,
    ));
    rep.records.push(InequalityRecord::new(
        "J_D(gf) <= (|B(t)|/|B(r)|)^1/2 J_D(f)",
        "power",
        jd_gf.value,
        jd_bound(&jd_gf),
        ratio * jf,
        jb,
    ));

    // unnormalized subsets: E = B(r), F = supp f outside B(2r)
    let e_set = lf.ball(r)?.elements().to_vec();
    let f_set: HashSet<GroupElement> =
        f.support().filter(|x| lf.length(x).map(|l| l > 2.0 * r).unwrap_or(false)).cloned().collect();
    if !f_set.is_empty() {
        let gs = ConvolutionCutoff::subsets(e_set.clone(), r, f_set.clone());
        let gsf = gs.apply(lf, f)?;
        let c = ((e_set.len() * f_set.len()) as f64).sqrt();
        let lam = lambda_norm_lower(lf, &gsf, lambda_radius(lf, &gsf)?)?;
        let jd = jd_seminorm(lf, &gsf)?;
        rep.records.push(InequalityRecord::new(
            "|λ_{(h*k)f}| <= r^-1 |E|^1/2 |F|^1/2 J_D(f)",
            "subsets",
            lam,
            Bound::LowerBound,
            c * jf / r,
            jb,
        ));
        rep.records.push(InequalityRecord::new(
            "J_D((h*k)f) <= |E|^1/2 |F|^1/2 J_D(f)",
            "subsets",
            jd.value,
            jd_bound(&jd),
            c * jf,
            jb,
        ));
    }

    // annulus restriction: t' > s' > 3r', f' = f with A(s'-2r', s') and A(t', t'+2r') removed
    let (rk, sk, tk) = (lmax / 8.0, lmax / 2.0, 0.75 * lmax);
    let fprime = f.restrict(|x| {
        let l = lf.length(x).unwrap_or(0.0);
        !((l > sk - 2.0 * rk && l <= sk) || (l > tk && l <= tk + 2.0 * rk))
    });
    let fa = fprime.restrict(|x| {
        let l = lf.length(x).unwrap_or(0.0);
        l > sk && l <= tk
    });
    let jd_fp = jd_seminorm(lf, &fprime)?;
    let jd_fa = jd_seminorm(lf, &fa)?;
    let lam_fa = lambda_norm_lower(lf, &fa, lambda_radius(lf, &fa)?)?;
    let kr = (lf.ball_size(tk + rk)? as f64 / lf.ball_size(rk)? as f64).sqrt();
    rep.records.push(InequalityRecord::new(
        "|λ_{fχA(s,t)}| <= r^-1 (|B(t+r)|/|B(r)|)^1/2 J_D(f)",
        "keyprop",
        lam_fa,
        Bound::LowerBound,
        kr * jd_fp.value / rk,
        jd_bound(&jd_fp),
    ));
    rep.records.push(InequalityRecord::new(
        "J_D(fχA(s,t)) <= (|B(t+r)|/|B(r)|)^1/2 J_D(f)",
        "keyprop",
        jd_fa.value,
        jd_bound(&jd_fa),
        kr * jd_fp.value,
        jd_bound(&jd_fp),
    ));
    Ok(rep)
}

/// Records for the scale family: g_n f, p_N, q_N χ_{A_n}, ρ_N and the decomposition.
fn scale_records(
    f: &AlgebraElement,
    family: &ScaleFamily,
    jd_f: &SeminormEstimate,
    opts: &VerifyOptions,
) -> Result<InequalityReport> {
    let lf = family.lf;
    let mut rep = InequalityReport::default();
    let jf = jd_f.value;
    let jb = jd_bound(jd_f);
    let c = family.certified;
    let rr = family.r;
    let lmax = f.support_length(lf)?;

    for n in 1..=family.n_max {
        let name = format!("|λ_(g_{n} f)| <= C1 R^-{n} J_D(f)");
        let rec = (|| -> Result<InequalityRecord> {
            let gf = family.g(n)?.apply(lf, f)?;
            let lam = lambda_norm_lower(lf, &gf, lambda_radius(lf, &gf)?)?;
            Ok(InequalityRecord::new(
                name.clone(),
                "nilin",
                lam,
                Bound::LowerBound,
                c.c1 * rr.powi(-(n as i32)) * jf,
                jb,
            ))
        })();
        rep.push(rec, &name, "nilin");
        if rr.powi(n as i32) - rr.powi(n as i32 - 1) >= lmax {
            break;
        }
    }

    let mut ns = vec![opts.n];
    if opts.include_n1 && opts.n != 1 {
        ns.insert(0, 1);
    }
    for &nn in &ns {
        let name = format!("|λ_(p_{nn})| <= 2 C1 R^-{} J_D(f)", 2 * nn);
        let res = (|| -> Result<(AlgebraElement, AlgebraElement)> {
            let mut p = AlgebraElement::zero();
            for (x, v) in f.iter() {
                let l = lf.length(x)?;
                let mut w = Rational::zero();
                for m in family.even_indices_near(l, nn) {
                    w += family.g(2 * m)?.eval(lf, x)?;
                }
                if !w.is_zero() {
                    p.add_at(x.clone(), v * to_f64(&w));
                }
            }
            let q = f.sub(&p);
            Ok((p, q))
        })();
        let (p, q) = match res {
            Ok(pq) => pq,
            Err(e) => {
                rep.push(Err(e), &name, "double");
                continue;
            }
        };
        let lam_p = lambda_norm_lower(lf, &p, lambda_radius(lf, &p)?)?;
        rep.records.push(InequalityRecord::new(
            name,
            "double",
            lam_p,
            Bound::LowerBound,
            2.0 * c.c1 * rr.powi(-2 * nn as i32) * jf,
            jb,
        ));
        let jd_p = jd_seminorm(lf, &p)?;
        rep.records.push(InequalityRecord::new(
            format!("J_D(p_{nn}) <= C2 J_D(f)"),
            "jip2",
            jd_p.value,
            jd_bound(&jd_p),
            c.c2 * jf,
            jb,
        ));
        let jd_q = jd_seminorm(lf, &q)?;
        let mut n = nn;
        loop {
            let (s, t) = (family.s_n(n), family.t_n(n));
            if s >= lmax && n > nn {
                break;
            }
            let qa = q.restrict(|x| {
                let l = lf.length(x).unwrap_or(0.0);
                l > s && l <= t
            });
            let lam = lambda_norm_lower(lf, &qa, lambda_radius(lf, &qa)?)?;
            rep.records.push(InequalityRecord::new(
                format!("|λ_(q_{nn} χA_{n})| <= C4 R^-{} J_D(f)", 2 * n),
                "qcut",
                lam,
                Bound::LowerBound,
                c.c4 * rr.powi(-2 * n as i32) * jf,
                jb,
            ));
            rep.records.push(InequalityRecord::new(
                format!("|λ_(q_{nn} χA_{n})| <= C3 R^-{} J_D(q_{nn})", 2 * n),
                "qcut",
                lam,
                Bound::LowerBound,
                c.c3 * rr.powi(-2 * n as i32) * jd_q.value,
                jd_bound(&jd_q),
            ));
            n += 1;
        }
    }

    if opts.n >= 2 {
        let nn = opts.n;
        let d = sharp_flat_decompose(f, family, nn)?;
        let lam_rho = lambda_norm_lower(lf, &d.rho, lambda_radius(lf, &d.rho)?)?;
        rep.records.push(InequalityRecord::new(
            format!("|λ_(ρ_{nn})| <= 2 C4 R^-{} J_D(f)", 2 * nn),
            "sum",
            lam_rho,
            Bound::LowerBound,
            2.0 * c.c4 * rr.powi(-2 * nn as i32) * jf,
            jb,
        ));
        let jd_rho = jd_seminorm(lf, &d.rho)?;
        rep.records.push(InequalityRecord::new(
            format!("J_D(ρ_{nn}) <= 4 C4 J_D(f)"),
            "econt",
            jd_rho.value,
            jd_bound(&jd_rho),
            4.0 * c.c4 * jf,
            jb,
        ));
        rep.records.push(InequalityRecord::new(
            format!("max L on supp f♭ <= R^{} + R^{}", 2 * nn, 2 * nn - 1),
            "prosaic",
            d.flat_support_length,
            Bound::Exact,
            d.flat_support_bound,
            Bound::Exact,
        ));
        let lam_sharp = lambda_norm_lower(lf, &d.sharp, lambda_radius(lf, &d.sharp)?)?;
        rep.records.push(InequalityRecord::new(
            format!("|λ_(f♯)| <= 2 (C1 + C4) R^-{} J_D(f)", 2 * nn),
            "prosaic",
            lam_sharp,
            Bound::LowerBound,
            2.0 * (c.c1 + c.c4) * rr.powi(-2 * nn as i32) * jf,
            jb,
        ));
        let jd_flat = jd_seminorm(lf, &d.flat)?;
        rep.records.push(InequalityRecord::new(
            "J_D(f♭) <= (1 + C2 + 4 C4) J_D(f)",
            "prosaic",
            jd_flat.value,
            jd_bound(&jd_flat),
            (1.0 + c.c2 + 4.0 * c.c4) * jf,
            jb,
        ));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupDescriptor;
    use std::sync::Arc;

    fn zl() -> LengthFunction {
        LengthFunction::word(Arc::new(GroupDescriptor::integers())).unwrap()
    }

    fn z(x: i64) -> GroupElement {
        GroupElement::Vector(vec![x])
    }

    #[test]
    fn cutoff_examples() {
        let l = zl();
        let g = smoothed_annulus_values(&l, 1.0, 3.0, 6.0).unwrap();
        assert_eq!(g.get(&z(5)), Some(&Rational::one()));
        assert_eq!(g.get(&z(9)), None);
        assert_eq!(g.get(&z(4)), Some(&Rational::new(2, 3)));
        assert!(smoothed_annulus_values(&l, 2.0, 3.0, 6.0).is_err());
    }

    #[test]
    fn cutoff_matches_convolution_oracle() {
        // direct Σ_y h*(xy⁻¹) k(y) with k, h as algebra elements
        let l = zl();
        let group = GroupDescriptor::integers();
        let (r, s, t) = (2.0, 5.0, 11.0);
        let k = AlgebraElement::from_pairs(
            l.ball(r).unwrap().elements().iter().map(|y| (y.clone(), Complex64::new(1.0 / 5.0, 0.0))),
        );
        let h = AlgebraElement::from_pairs(l.annulus(s, t).unwrap().into_iter().map(|y| (y, Complex64::new(1.0, 0.0))));
        let conv = h.star(&group).convolve(&k, &group);
        let g = smoothed_annulus_values(&l, r, s, t).unwrap();
        for x in l.ball(20.0).unwrap().elements() {
            let exact = g.get(x).map(to_f64).unwrap_or(0.0);
            assert!((conv.get(x).re - exact).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn constants_examples() {
        let c = Constants::nominal(7.0 / 3.0, 2);
        assert!((c.c1 - 49.0 / 9.0).abs() < 1e-12);
        assert!((c.c2 - 784.0 / 9.0).abs() < 1e-9);
        assert!((c.c3 - (7.0f64 / 3.0).powf(1.0 + 31f64.log2())).abs() < 1e-9);
        assert_eq!(c.c4, (1.0 + c.c2) * c.c3);
        assert_eq!(choose_n(4.0, &c, 0.1).unwrap(), 5);
        let boundary = 4.0 * c.c1.max(c.c4) / 256.0;
        assert_eq!(choose_n(4.0, &c, boundary).unwrap(), 3);
        assert_eq!(choose_n(4.0, &c, epsilon_for(4.0, &c, 2)).unwrap(), 2);
        assert_eq!(choose_n(4.0, &c, epsilon_for(4.0, &c, 3)).unwrap(), 3);
        let one = Constants::nominal(1.0, 2);
        assert_eq!(one.c1, 1.0);
    }

    #[test]
    fn family_on_integers() {
        let l = zl();
        let fam = build_scale_family(&l, 2, 3, None).unwrap();
        assert_eq!(fam.doubling, 7.0 / 3.0);
        assert!(build_scale_family(&l, 2, 3, Some(2.0)).is_err());
        assert!(build_scale_family(&l, 1, 3, None).is_err());
        for n in 1..=5 {
            assert!(fam.radius_conditions(n));
        }
        let rep = family_records(&fam, 80.0);
        assert_eq!(rep.count(RecordStatus::Fail), 0);
        assert!(rep.records.iter().any(|r| r.citation == "disjoint"));
    }

    #[test]
    fn decomposition_examples() {
        let l = zl();
        let fam = build_scale_family(&l, 2, 3, None).unwrap();
        let d = sharp_flat_decompose(&AlgebraElement::delta(z(0)), &fam, 2).unwrap();
        assert!(d.p.is_zero() && d.rho.is_zero());
        assert_eq!(d.flat, AlgebraElement::delta(z(0)));
        let small = AlgebraElement::from_pairs((-16..=16).map(|x| (z(x), Complex64::new(x as f64, 1.0))));
        let d = sharp_flat_decompose(&small, &fam, 2).unwrap();
        assert_eq!(d.flat, small);
        // plateau of g_4: A(R^4 + R^3, R^5 − R^3) = A(320, 960)
        let plateau = AlgebraElement::from_pairs((321..=960).map(|x| (z(x), Complex64::new(1.0 / 640.0, 0.0))));
        let d = sharp_flat_decompose(&plateau, &fam, 2).unwrap();
        assert_eq!(d.p, plateau);
        assert!(d.flat.is_zero());
    }

    #[test]
    fn decomposition_is_exact() {
        let l = zl();
        let fam = build_scale_family(&l, 2, 3, None).unwrap();
        let f = AlgebraElement::from_pairs(
            [3, -70, 150, 190, -200, 250, 330, -1000, 1100].iter().map(|&x| (z(x), Complex64::new(0.5, -0.25))),
        );
        let d = sharp_flat_decompose(&f, &fam, 2).unwrap();
        for w in d.weights.values() {
            assert_eq!(w.sharp() + w.flat(), Rational::one());
            assert_eq!(w.p + w.q(), Rational::one());
        }
        let back = d.sharp.add(&d.flat);
        for (x, v) in f.iter() {
            assert!((back.get(x) - v).norm() <= 1e-12 * v.norm());
        }
        assert!(d.flat_support_ok());
        assert!(!d.p.is_zero());
        assert!(!d.rho.is_zero());
    }

    #[test]
    fn record_semantics() {
        use Bound::*;
        let r = InequalityRecord::new("a", "weight", 2.0, LowerBound, 1.0, UpperBound);
        assert_eq!((r.status, r.rigorous), (RecordStatus::Fail, true));
        let r = InequalityRecord::new("a", "weight", 0.5, LowerBound, 1.0, UpperBound);
        assert_eq!(r.status, RecordStatus::Pass);
        let r = InequalityRecord::new("a", "weight", 2.0, UpperBound, 1.0, LowerBound);
        assert_eq!((r.status, r.rigorous), (RecordStatus::Inconclusive, false));
        let r = InequalityRecord::new("a", "weight", 0.5, LowerBound, 1.0, LowerBound);
        assert_eq!(r.status, RecordStatus::Inconclusive);
        let r = InequalityRecord::new("a", "weight", 1.0 + 1e-12, Exact, 1.0, Exact);
        assert_eq!(r.status, RecordStatus::Pass);
        let r = InequalityRecord::new("a", "weight", 0.9, Stabilized, 1.0, Stabilized);
        assert_eq!((r.status, r.rigorous), (RecordStatus::Pass, false));
    }

    #[test]
    fn verifier_on_simple_elements() {
        let l = zl();
        let fam = build_scale_family(&l, 2, 3, None).unwrap();
        let rep = verify_inequalities(&AlgebraElement::delta(z(0)), &fam, &VerifyOptions::default()).unwrap();
        assert_eq!(rep.count(RecordStatus::Fail), 0);
        for r in &rep.records {
            if r.status != RecordStatus::Inconclusive {
                assert_eq!(r.lhs, 0.0, "{}", r.name);
            }
        }
        let rep = verify_inequalities(&AlgebraElement::delta(z(1)), &fam, &VerifyOptions::default()).unwrap();
        assert_eq!(rep.count(RecordStatus::Fail), 0);
        let w = rep.records.iter().find(|r| r.citation == "weight" && r.name.contains("r=0, s=0.5")).unwrap();
        assert_eq!(w.lhs, 0.5);
        assert_eq!(w.rhs, 1.0);
    }
}
