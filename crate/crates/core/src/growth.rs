//! Finite-schedule evidence for strong polynomial growth, bounded doubling
//! and polynomial growth.
//!
//! Verdicts only ever refute or fail to refute on the sampled radii.
//! Classification rules:
//! - polynomial: refuted when the largest local log-log slope in the upper
//!   half of the schedule exceeds `DRIFT` times the largest in the lower half;
//! - bounded doubling: refuted when the largest doubling ratio in the upper
//!   half exceeds `DRIFT` times the largest in the lower half;
//! - strong polynomial: refuted when the fitted degrees of the two halves
//!   differ by more than the factor `DRIFT`.
//!
//! Refutations propagate down the implication chain
//! strong polynomial ⇒ bounded doubling ⇒ polynomial, so a refuted weaker
//! property always refutes the stronger ones with the same witness.
//! Schedules with fewer than `MIN_POINTS` radii are inconclusive.

use serde::{Deserialize, Serialize};

use crate::error::{QmError, Result};
use crate::length::LengthFunction;

pub const DRIFT: f64 = 1.5;
pub const MIN_POINTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthProperty {
    StrongPolynomial,
    BoundedDoubling,
    Polynomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictStatus {
    Consistent,
    Refuted,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub property: GrowthProperty,
    pub status: VerdictStatus,
    /// Radius at which the refutation is witnessed.
    pub witness_r: Option<f64>,
    /// Witnessed constant: max doubling ratio, or fitted degree, as applicable.
    pub constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub r: f64,
    pub size: u128,
    /// |B(2r)| / |B(r)|.
    pub ratio: f64,
    /// ln|B(r)| / ln r, absent at r = 1.
    pub exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub rows: Vec<GrowthRow>,
    pub fitted_degree: f64,
    /// Ĉ_𝕃 and the radius achieving it.
    pub max_ratio: f64,
    pub max_ratio_r: f64,
    /// min and max of |B(r)| / r^d̂ over the schedule.
    pub min_normalized: f64,
    pub max_normalized: f64,
    pub verdicts: Vec<Verdict>,
    /// The ball cap stopped the schedule early.
    pub truncated: bool,
}

impl GrowthReport {
    pub fn verdict(&self, p: GrowthProperty) -> &Verdict {
        self.verdicts.iter().find(|v| v.property == p).expect("all verdicts present")
    }
}

/// Radii 1, 2, ..., n.
pub fn linear_schedule(n: u32) -> Vec<f64> {
    (1..=n).map(f64::from).collect()
}

/// Radii base^0, base^1, ..., base^(count-1).
pub fn geometric_schedule(base: f64, count: u32) -> Vec<f64> {
    (0..count as i32).map(|k| base.powi(k)).collect()
}

/// Least-squares slope of y against x.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// |B(2r)| / |B(r)|.
pub fn doubling_ratio(l: &LengthFunction, r: f64) -> Result<f64> {
    Ok(l.ball_size(2.0 * r)? as f64 / l.ball_size(r)? as f64)
}

/// Exact maximum of |B(2r)|/|B(r)| over r ∈ [lo, hi] and the smallest radius attaining it.
///
/// The ratio is right-continuous and piecewise constant, changing only where r or 2r
/// crosses a length value, so the candidates lo, ℓ and ℓ/2 cover every piece.
pub fn max_doubling_ratio(l: &LengthFunction, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !(lo > 0.0 && lo <= hi) {
        return Err(QmError::Usage(format!("doubling range [{lo}, {hi}] is empty")));
    }
    let mut cands = vec![lo];
    for v in l.length_values(lo, 2.0 * hi)? {
        if v <= hi {
            cands.push(v);
        }
        if v / 2.0 >= lo && v / 2.0 <= hi {
            cands.push(v / 2.0);
        }
    }
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    let mut best = (0.0, lo);
    for r in cands {
        let q = doubling_ratio(l, r)?;
        if q > best.0 {
            best = (q, r);
        }
    }
    Ok(best)
}

fn fit_degree(rows: &[GrowthRow]) -> f64 {
    let pts: Vec<&GrowthRow> = rows.iter().filter(|w| w.r > 0.0).collect();
    let x: Vec<f64> = pts.iter().map(|w| w.r.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|w| (w.size as f64).ln()).collect();
    ls_slope(&x, &y)
}

fn local_slopes(rows: &[GrowthRow]) -> Vec<(f64, f64)> {
    rows.windows(2)
        .filter(|w| w[1].r > w[0].r)
        .map(|w| {
            let s = ((w[1].size as f64).ln() - (w[0].size as f64).ln()) / (w[1].r.ln() - w[0].r.ln());
            (w[1].r, s)
        })
        .collect()
}

/// Upper-half values strictly above DRIFT times the lower-half maximum; returns the first witness.
fn drift_witness(vals: &[(f64, f64)]) -> (Option<(f64, f64)>, f64) {
    let mid = vals.len() / 2;
    let low = vals[..mid].iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let high = vals[mid..].iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let w = vals[mid..].iter().find(|v| v.1 > DRIFT * low.max(0.0) && v.1 > 0.0).copied();
    (w.filter(|_| high > DRIFT * low), high)
}

/// Exact ball sizes, ratios, fitted degree and verdicts on a radius schedule.
///
/// `window` selects the fit range as indices into the sorted schedule; the default
/// is the upper half.
pub fn growth_table(l: &LengthFunction, radii: &[f64], window: Option<(usize, usize)>) -> Result<GrowthReport> {
    let mut radii = radii.to_vec();
    if radii.iter().any(|r| !(r.is_finite() && *r >= 1.0)) {
        return Err(QmError::Usage("growth radii must be finite and >= 1".into()));
    }
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    radii.dedup();
    let mut rows = Vec::with_capacity(radii.len());
    let mut truncated = false;
    for &r in &radii {
        let sizes = l.ball_size(r).and_then(|s| Ok((s, l.ball_size(2.0 * r)?)));
        match sizes {
            Ok((s, s2)) => rows.push(GrowthRow {
                r,
                size: s,
                ratio: s2 as f64 / s as f64,
                exponent: (r > 1.0).then(|| (s as f64).ln() / r.ln()),
            }),
            Err(QmError::BallCap { .. }) => {
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let (lo, hi) = window.unwrap_or((rows.len() / 2, rows.len()));
    let hi = hi.min(rows.len());
    let fitted_degree = if hi >= lo + 2 { fit_degree(&rows[lo..hi]) } else { f64::NAN };
    let (max_ratio, max_ratio_r) =
        rows.iter().fold((0.0, f64::NAN), |acc, w| if w.ratio > acc.0 { (w.ratio, w.r) } else { acc });
    let d = if fitted_degree.is_finite() { fitted_degree } else { 0.0 };
    let normalized: Vec<f64> = rows.iter().map(|w| w.size as f64 / w.r.powf(d)).collect();
    let min_normalized = normalized.iter().copied().fold(f64::INFINITY, f64::min);
    let max_normalized = normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let verdicts = classify(&rows, truncated);
    Ok(GrowthReport {
        rows,
        fitted_degree,
        max_ratio,
        max_ratio_r,
        min_normalized,
        max_normalized,
        verdicts,
        truncated,
    })
}

fn classify(rows: &[GrowthRow], truncated: bool) -> Vec<Verdict> {
    use GrowthProperty::*;
    let inconclusive =
        |p| Verdict { property: p, status: VerdictStatus::Inconclusive, witness_r: None, constant: None };
    if truncated || rows.len() < MIN_POINTS {
        return vec![inconclusive(StrongPolynomial), inconclusive(BoundedDoubling), inconclusive(Polynomial)];
    }

    let slopes = local_slopes(rows);
    let (poly_w, poly_c) = drift_witness(&slopes);
    let mut poly =
        Verdict { property: Polynomial, status: VerdictStatus::Consistent, witness_r: None, constant: Some(poly_c) };
    if let Some((r, s)) = poly_w {
        poly.status = VerdictStatus::Refuted;
        poly.witness_r = Some(r);
        poly.constant = Some(s);
    }

    let ratios: Vec<(f64, f64)> = rows.iter().map(|w| (w.r, w.ratio)).collect();
    let (bd_w, _) = drift_witness(&ratios);
    let max_ratio = ratios.iter().map(|v| v.1).fold(0.0, f64::max);
    let mut bd = Verdict {
        property: BoundedDoubling,
        status: VerdictStatus::Consistent,
        witness_r: None,
        constant: Some(max_ratio),
    };
    if let Some((r, q)) = bd_w {
        bd.status = VerdictStatus::Refuted;
        bd.witness_r = Some(r);
        bd.constant = Some(q);
    } else if poly.status == VerdictStatus::Refuted {
        bd.status = VerdictStatus::Refuted;
        bd.witness_r = poly.witness_r;
    }

    let mid = rows.len() / 2;
    let d_low = fit_degree(&rows[..mid]);
    let d_high = fit_degree(&rows[mid..]);
    let drifted = !(d_low.is_finite() && d_high.is_finite()) || d_low > DRIFT * d_high || d_high > DRIFT * d_low;
    let mut strong = Verdict {
        property: StrongPolynomial,
        status: VerdictStatus::Consistent,
        witness_r: None,
        constant: Some(d_high),
    };
    if drifted {
        strong.status = VerdictStatus::Refuted;
        strong.witness_r = rows.last().map(|w| w.r);
    } else if bd.status == VerdictStatus::Refuted {
        strong.status = VerdictStatus::Refuted;
        strong.witness_r = bd.witness_r;
    }
    vec![strong, bd, poly]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub pass: bool,
    /// |B(r)|.
    pub lhs: f64,
    /// C^(1 + log₂(r/s)) |B(s)|.
    pub rhs: f64,
}

/// Checks |B(r)| <= C^(1 + log₂(r/s)) |B(s)| on materialized balls.
pub fn doubling_chain_check(l: &LengthFunction, s: f64, r: f64, c: f64) -> Result<ChainCheck> {
    if !(1.0 <= s && s <= r) || !(c >= 1.0) {
        return Err(QmError::Usage(format!("chain check needs 1 <= s <= r and C >= 1, got s={s}, r={r}, C={c}")));
    }
    let lhs = l.ball_size(r)? as f64;
    let rhs = c.powf(1.0 + (r / s).log2()) * l.ball_size(s)? as f64;
    Ok(ChainCheck { pass: lhs <= rhs, lhs, rhs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationProbe {
    /// Max of ln|B(r)|/ln r over the schedule.
    pub limsup_hat: f64,
    /// Min over the schedule.
    pub liminf_hat: f64,
    /// (r, exponent) for every schedule point.
    pub exponents: Vec<(f64, f64)>,
}

/// Extremes of ln|B(r)|/ln r over a tail schedule chosen by the caller.
pub fn oscillation_probe(l: &LengthFunction, radii: &[f64]) -> Result<OscillationProbe> {
    if radii.iter().any(|r| !(r.is_finite() && *r >= 2.0)) {
        return Err(QmError::Usage("oscillation radii must be finite and >= 2".into()));
    }
    let mut exponents = Vec::with_capacity(radii.len());
    for &r in radii {
        exponents.push((r, l.log_ball_size(r)? / r.ln()));
    }
    Ok(OscillationProbe {
        limsup_hat: exponents.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max),
        liminf_hat: exponents.iter().map(|e| e.1).fold(f64::INFINITY, f64::min),
        exponents,
    })
}
