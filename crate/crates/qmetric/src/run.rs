//! Command execution: one config in, one report payload plus side tables out.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use qmetric_core::algebra::AlgebraElement;
use qmetric_core::cutoff::{
    build_scale_family, epsilon_for, family_records, lambda_norm_lower, sharp_flat_decompose, verify_inequalities,
    Bound, InequalityRecord, InequalityReport, RecordStatus, ScaleFamily, VerifyOptions,
};
use qmetric_core::growth::{growth_table, max_doubling_ratio};
use qmetric_core::length::LengthFunction;
use qmetric_core::metric::{
    atom_metric_lower_bound, audit, constraint_value, metric_ascent, AscentOptions, Constraint, StateDescriptor,
};
use qmetric_core::operator::{jd_seminorm, lipnorm_estimate, Certificate};
use qmetric_core::{QmError, Result};

use crate::config::{parse_atoms, parse_state, Command, CorpusSpec, ElementSpec, ExperimentConfig};
use crate::output::{content_hash, Table};

/// Dense L_D truncations stay at or below this many ball elements.
const LIPNORM_BALL_LIMIT: u128 = 1500;
const RNG_NAME: &str = "chacha8";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitStatus {
    Ok,
    Usage,
    Failure,
    Inconclusive,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Ok => 0,
            ExitStatus::Usage => 1,
            ExitStatus::Failure => 2,
            ExitStatus::Inconclusive => 3,
        }
    }

    /// Exit status for a run-time error.
    pub fn of_error(e: &QmError) -> Self {
        match e {
            QmError::BallCap { .. } | QmError::MatrixCap { .. } => ExitStatus::Inconclusive,
            _ => ExitStatus::Usage,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub ball_cap: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub report: Value,
    pub tables: Vec<Table>,
    pub status: ExitStatus,
    /// Human-readable lines for stderr, one per failing record.
    pub messages: Vec<String>,
}

/// Parses, validates and runs `cmd`; errors mean nothing should be written.
pub fn run(cmd: Command, config_text: &str, opts: &RunOptions) -> Result<RunResult> {
    let start = Instant::now();
    let config = ExperimentConfig::parse(config_text)?;
    config.check_command(cmd)?;
    let lf = config.length_function(opts.ball_cap)?;
    let seed = opts.seed.or(config.seed).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = match cmd {
        Command::Growth => growth(&config, &lf)?,
        Command::Seminorm => seminorm(&config, &lf, &mut rng)?,
        Command::Decompose => decompose(&config, &lf, &mut rng)?,
        Command::Verify => verify(&config, &lf, &mut rng)?,
        Command::Metric => metric(&config, &lf, &mut rng)?,
        Command::CoveringDemo => covering(&config, &lf, &mut rng)?,
    };
    let (status, messages) = judge(&out.records, out.inconclusive);
    let echo: Value = serde_json::from_str(config_text).map_err(|e| QmError::Usage(e.to_string()))?;
    let counts = json!({
        "pass": out.records.count(RecordStatus::Pass),
        "fail": out.records.count(RecordStatus::Fail),
        "inconclusive": out.records.count(RecordStatus::Inconclusive),
        "rigorous": out.records.records.iter().filter(|r| r.rigorous).count(),
    });
    let failures: Vec<&InequalityRecord> = out.records.failures().collect();
    let report = json!({
        "command": cmd.name(),
        "config": echo,
        "config_hash": content_hash(config_text.as_bytes()),
        "seed": seed,
        "rng": RNG_NAME,
        "status": status,
        "records": counts,
        "failures": failures,
        "payload": out.payload,
        "notes": out.notes,
        "resources": { "peak_ball_size": lf.peak_ball_size(), "ball_cap": lf.ball_cap() },
        "timing": { "wall_clock_s": start.elapsed().as_secs_f64() },
    });
    let mut tables = out.tables;
    if !out.records.records.is_empty() {
        tables.push(records_table(&out.records, &out.record_owner)?);
    }
    Ok(RunResult { report, tables, status, messages })
}

/// Exit status and stderr lines from a record set.
pub fn judge(records: &InequalityReport, extra_inconclusive: bool) -> (ExitStatus, Vec<String>) {
    let msgs: Vec<String> = records
        .failures()
        .map(|r| format!("rigorous inequality failure [{}]: {} (lhs {} > rhs {})", r.citation, r.name, r.lhs, r.rhs))
        .collect();
    let status = if !msgs.is_empty() {
        ExitStatus::Failure
    } else if extra_inconclusive || records.count(RecordStatus::Inconclusive) > 0 {
        ExitStatus::Inconclusive
    } else {
        ExitStatus::Ok
    };
    (status, msgs)
}

#[derive(Default)]
struct Output {
    payload: Value,
    tables: Vec<Table>,
    records: InequalityReport,
    /// Element index per record (-1 for family-level records).
    record_owner: Vec<i64>,
    inconclusive: bool,
    notes: Vec<String>,
}

impl Output {
    fn add_records(&mut self, owner: i64, rep: InequalityReport) {
        self.record_owner.extend(std::iter::repeat_n(owner, rep.records.len()));
        self.records.extend(rep);
    }
}

fn io(e: std::io::Error) -> QmError {
    QmError::Unsupported(format!("table serialization failed: {e}"))
}

#[derive(Serialize)]
struct RecordRow<'a> {
    element: i64,
    name: &'a str,
    citation: &'a str,
    lhs: f64,
    lhs_cert: Bound,
    rhs: f64,
    rhs_cert: Bound,
    margin: f64,
    status: RecordStatus,
    rigorous: bool,
    note: &'a str,
}

fn records_table(rep: &InequalityReport, owner: &[i64]) -> Result<Table> {
    let rows: Vec<RecordRow> = rep
        .records
        .iter()
        .zip(owner)
        .map(|(r, &o)| RecordRow {
            element: o,
            name: &r.name,
            citation: &r.citation,
            lhs: r.lhs,
            lhs_cert: r.lhs_cert,
            rhs: r.rhs,
            rhs_cert: r.rhs_cert,
            margin: r.margin,
            status: r.status,
            rigorous: r.rigorous,
            note: r.note.as_deref().unwrap_or(""),
        })
        .collect();
    Table::from_rows("records.csv", &rows).map_err(io)
}

/// Random elements drawn from B(support_radius).
pub fn corpus(lf: &LengthFunction, spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Result<Vec<AlgebraElement>> {
    if spec.atoms[0] == 0 || spec.atoms[0] > spec.atoms[1] {
        return Err(QmError::Usage(format!("corpus atoms range {:?} must satisfy 1 <= lo <= hi", spec.atoms)));
    }
    let ball = lf.ball(spec.support_radius)?;
    let pool = if spec.vanish_at_identity { &ball.elements()[1..] } else { ball.elements() };
    if pool.is_empty() {
        return Err(QmError::Usage(format!("B({}) has no usable support points", spec.support_radius)));
    }
    Ok((0..spec.size)
        .map(|_| {
            let atoms = rng.gen_range(spec.atoms[0]..=spec.atoms[1]);
            AlgebraElement::random(rng, pool, atoms, spec.real)
        })
        .collect())
}

fn elements(
    lf: &LengthFunction,
    listed: &[ElementSpec],
    corpus_spec: Option<&CorpusSpec>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AlgebraElement>> {
    let mut out: Vec<AlgebraElement> =
        listed.iter().map(|e| parse_atoms(lf.group(), &e.atoms)).collect::<Result<_>>()?;
    if let Some(c) = corpus_spec {
        out.extend(corpus(lf, c, rng)?);
    }
    if out.is_empty() {
        return Err(QmError::Usage("no elements: give 'elements' or a 'corpus'".into()));
    }
    Ok(out)
}

/// f / J_D(f), or None when J_D(f) = 0.
fn normalize_jd(lf: &LengthFunction, f: &AlgebraElement) -> Result<Option<AlgebraElement>> {
    let j = jd_seminorm(lf, f)?.value;
    Ok((j > 0.0).then(|| f.scale(Complex64::new(1.0 / j, 0.0))))
}

fn growth(config: &ExperimentConfig, lf: &LengthFunction) -> Result<Output> {
    let p = config.growth.as_ref().expect("checked");
    let radii = p.radii.radii()?;
    let window = p.window.map(|[a, b]| (a, b));
    let rep = growth_table(lf, &radii, window)?;
    let mut out = Output::default();
    let doubling = match p.doubling_range {
        Some([lo, hi]) => {
            let (c, r) = max_doubling_ratio(lf, lo, hi)?;
            Some(json!({ "range": [lo, hi], "max_ratio": c, "at_r": r }))
        }
        None => None,
    };
    if rep.truncated {
        out.inconclusive = true;
        out.notes.push("radius schedule truncated at the ball cap".into());
    }
    out.tables.push(Table::from_rows("growth.csv", &rep.rows).map_err(io)?);
    out.payload = json!({ "growth": rep, "doubling": doubling });
    Ok(out)
}

fn affordable(lf: &LengthFunction, radii: impl IntoIterator<Item = f64>) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for r in radii {
        match lf.ball_size(r) {
            Ok(n) if n <= LIPNORM_BALL_LIMIT => out.push(r),
            Ok(_) | Err(QmError::BallCap { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SeminormRow {
    element: usize,
    atoms: usize,
    support_length: f64,
    weighted_l1: f64,
    jd: f64,
    jd_exact: bool,
    breakpoint: Option<f64>,
    attained: Option<bool>,
    ld_lower: Option<f64>,
    ld_upper: Option<f64>,
    ld_radius: Option<f64>,
}

fn seminorm(config: &ExperimentConfig, lf: &LengthFunction, rng: &mut ChaCha8Rng) -> Result<Output> {
    let p = config.seminorm.as_ref().expect("checked");
    let fs = elements(lf, &p.elements, p.corpus.as_ref(), rng)?;
    let mut out = Output::default();
    let results: Vec<Result<(SeminormRow, InequalityRecord)>> = fs
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let lmax = f.support_length(lf)?;
            let jd = jd_seminorm(lf, f)?;
            let w1 = f.weighted_l1(lf)?;
            let radii = match &p.lipnorm_radii {
                Some(r) => r.clone(),
                None => affordable(lf, (1..=4).map(|m| (m as f64 * lmax).max(1.0)))?,
            };
            let ld = if radii.is_empty() { None } else { Some(lipnorm_estimate(lf, f, &radii)?) };
            let cert = if jd.certificate == Certificate::Exact { Bound::Exact } else { Bound::LowerBound };
            let rec = InequalityRecord::new("J_D(f) <= sum|f|L", "control", jd.value, cert, w1, Bound::UpperBound);
            Ok((
                SeminormRow {
                    element: i,
                    atoms: f.len(),
                    support_length: lmax,
                    weighted_l1: w1,
                    jd: jd.value,
                    jd_exact: jd.certificate == Certificate::Exact,
                    breakpoint: jd.breakpoint,
                    attained: jd.attained,
                    ld_lower: ld.as_ref().map(|e| e.lower()),
                    ld_upper: ld.as_ref().map(|e| e.upper()),
                    ld_radius: radii.last().copied(),
                },
                rec,
            ))
        })
        .collect();
    let mut rows = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (row, rec) = r?;
        rows.push(row);
        out.add_records(i as i64, InequalityReport { records: vec![rec] });
    }
    out.tables.push(Table::from_rows("seminorm.csv", &rows).map_err(io)?);
    out.payload = json!({ "elements": rows.len(), "estimates": rows });
    Ok(out)
}

fn family_payload(fam: &ScaleFamily) -> Value {
    json!({
        "k": fam.k,
        "scale": fam.r,
        "doubling_constant": fam.doubling,
        "doubling_validated_to": fam.validated_to,
        "constants": fam.constants,
        "certified_constants": fam.certified,
    })
}

#[derive(Serialize)]
struct DecomposeRow {
    element: usize,
    jd_f: f64,
    support_length: f64,
    p_atoms: usize,
    rho_atoms: usize,
    flat_atoms: usize,
    flat_support_length: f64,
    flat_support_bound: f64,
    sharp_lambda_lower: f64,
    sharp_bound: f64,
    jd_flat: f64,
    jd_flat_bound: f64,
}

fn decompose(config: &ExperimentConfig, lf: &LengthFunction, rng: &mut ChaCha8Rng) -> Result<Output> {
    let p = config.decompose.as_ref().expect("checked");
    let fs = elements(lf, &p.elements, p.corpus.as_ref(), rng)?;
    let n_guess = p.n.unwrap_or(2);
    let fam = build_scale_family(lf, p.k, 2 * n_guess + 1, p.doubling)?;
    let (n, eps) = match (p.n, p.epsilon) {
        (Some(n), None) => (n, epsilon_for(fam.r, &fam.constants, n)),
        (None, Some(e)) => (fam.choose_n(e)?, e),
        _ => return Err(QmError::Usage("decompose needs exactly one of 'n' and 'epsilon'".into())),
    };
    let c = fam.constants;
    let flat_factor = 1.0 + c.c2 + 4.0 * c.c4;
    let mut out = Output::default();
    let results: Vec<Result<Option<(DecomposeRow, InequalityReport)>>> = fs
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let f = if p.normalize {
                match normalize_jd(lf, f)? {
                    Some(g) => g,
                    None => return Ok(None),
                }
            } else {
                f.clone()
            };
            let jd_f = jd_seminorm(lf, &f)?;
            let d = sharp_flat_decompose(&f, &fam, n)?;
            let lam = lambda_norm_lower(lf, &d.sharp, d.sharp.support_length(lf)?.max(1.0))?;
            let jd_flat = jd_seminorm(lf, &d.flat)?;
            let cert = |e: &qmetric_core::operator::SeminormEstimate| {
                if e.certificate == Certificate::Exact {
                    Bound::Exact
                } else {
                    Bound::LowerBound
                }
            };
            let mut rep = InequalityReport::default();
            rep.records.push(InequalityRecord::new(
                format!("max L on supp f♭ <= R^{} + R^{}", 2 * n, 2 * n - 1),
                "prosaic",
                d.flat_support_length,
                Bound::Exact,
                d.flat_support_bound,
                Bound::Exact,
            ));
            rep.records.push(InequalityRecord::new(
                "|λ_(f♯)| <= ε J_D(f)",
                "prosaic",
                lam,
                Bound::LowerBound,
                eps * jd_f.value,
                cert(&jd_f),
            ));
            rep.records.push(InequalityRecord::new(
                "J_D(f♭) <= (1 + C2 + 4 C4) J_D(f)",
                "prosaic",
                jd_flat.value,
                cert(&jd_flat),
                flat_factor * jd_f.value,
                cert(&jd_f),
            ));
            Ok(Some((
                DecomposeRow {
                    element: i,
                    jd_f: jd_f.value,
                    support_length: f.support_length(lf)?,
                    p_atoms: d.p.len(),
                    rho_atoms: d.rho.len(),
                    flat_atoms: d.flat.len(),
                    flat_support_length: d.flat_support_length,
                    flat_support_bound: d.flat_support_bound,
                    sharp_lambda_lower: lam,
                    sharp_bound: eps * jd_f.value,
                    jd_flat: jd_flat.value,
                    jd_flat_bound: flat_factor * jd_f.value,
                },
                rep,
            )))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some((row, rep)) => {
                out.add_records(row.element as i64, rep);
                rows.push(row);
            }
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        out.notes.push(format!("{skipped} elements with J_D(f) = 0 could not be normalized and were skipped"));
    }
    out.tables.push(Table::from_rows("decompose.csv", &rows).map_err(io)?);
    out.payload = json!({
        "family": family_payload(&fam),
        "n": n,
        "epsilon": eps,
        "elements": rows.len(),
        "rows": rows,
    });
    Ok(out)
}

/// Largest radius <= target whose ball, widened by `pad`, fits under the cap.
fn fitting_radius(lf: &LengthFunction, target: f64, pad: f64) -> Result<f64> {
    let mut r = target;
    loop {
        match lf.ball_size(r + pad) {
            Ok(n) if n <= lf.ball_cap() as u128 => return Ok(r),
            Ok(_) | Err(QmError::BallCap { .. }) if r > 1.0 => r = (r / 2.0).floor().max(1.0),
            Ok(_) | Err(QmError::BallCap { .. }) => return Ok(r),
            Err(e) => return Err(e),
        }
    }
}

fn verify(config: &ExperimentConfig, lf: &LengthFunction, rng: &mut ChaCha8Rng) -> Result<Output> {
    let p = config.verify.as_ref().expect("checked");
    if p.n < 2 {
        return Err(QmError::Usage(format!("verify needs n >= 2, got {}", p.n)));
    }
    let fs = elements(lf, &p.elements, p.corpus.as_ref(), rng)?;
    let fam = build_scale_family(lf, p.k, p.n_max, p.doubling)?;
    let rr = fam.r;
    let pad = rr.powi(p.n_max as i32 - 1);
    let radius = match p.family_radius {
        Some(r) => r,
        None => fitting_radius(lf, rr.powi(p.n_max as i32 + 1) + pad, pad)?,
    };
    let mut out = Output::default();
    out.add_records(-1, family_records(&fam, radius));
    let opts = VerifyOptions { n: p.n, include_n1: p.include_n1 };
    let reps: Vec<Result<InequalityReport>> = fs.par_iter().map(|f| verify_inequalities(f, &fam, &opts)).collect();
    for (i, r) in reps.into_iter().enumerate() {
        let rep = match r {
            Ok(rep) => rep,
            Err(e @ (QmError::BallCap { .. } | QmError::MatrixCap { .. })) => InequalityReport {
                records: vec![InequalityRecord::inconclusive("element records", "control", e.to_string())],
            },
            Err(e) => return Err(e),
        };
        out.add_records(i as i64, rep);
    }
    let mut by_anchor: std::collections::BTreeMap<&str, [usize; 3]> = Default::default();
    for r in &out.records.records {
        let e = by_anchor.entry(r.citation.as_str()).or_default();
        e[match r.status {
            RecordStatus::Pass => 0,
            RecordStatus::Fail => 1,
            RecordStatus::Inconclusive => 2,
        }] += 1;
    }
    let anchors: Value = by_anchor
        .iter()
        .map(|(k, v)| (k.to_string(), json!({ "pass": v[0], "fail": v[1], "inconclusive": v[2] })))
        .collect::<serde_json::Map<_, _>>()
        .into();
    out.payload = json!({
        "family": family_payload(&fam),
        "n": p.n,
        "family_radius": radius,
        "elements": fs.len(),
        "by_anchor": anchors,
    });
    Ok(out)
}

/// A random state: trace, a vector state, or a mixture of the two.
fn random_state(
    lf: &LengthFunction,
    pool: &[qmetric_core::group::GroupElement],
    atoms: [usize; 2],
    rng: &mut ChaCha8Rng,
) -> Result<StateDescriptor> {
    let k = rng.gen_range(atoms[0]..=atoms[1]);
    let xi = AlgebraElement::random(rng, pool, k, false);
    let _ = lf;
    Ok(match rng.gen_range(0..3) {
        0 => StateDescriptor::Trace,
        1 => StateDescriptor::vector(xi)?,
        _ => {
            let w: f64 = rng.gen_range(0.1..0.9);
            StateDescriptor::mixture(vec![(w, StateDescriptor::Trace), (1.0 - w, StateDescriptor::vector(xi)?)])?
        }
    })
}

type PairOutcome = (Vec<MetricRow>, Vec<Value>, InequalityReport);

#[derive(Serialize)]
struct MetricRow {
    pair: usize,
    constraint: Constraint,
    radius: f64,
    atom_bound: f64,
    bound: f64,
    f_support: usize,
    iterations: usize,
    flagged: bool,
    constraint_value: f64,
    audit: bool,
}

fn metric(config: &ExperimentConfig, lf: &LengthFunction, rng: &mut ChaCha8Rng) -> Result<Output> {
    let p = config.metric.as_ref().expect("checked");
    let group = lf.group();
    let mut pairs: Vec<(StateDescriptor, StateDescriptor)> =
        p.pairs.iter().map(|s| Ok((parse_state(group, &s.mu)?, parse_state(group, &s.nu)?))).collect::<Result<_>>()?;
    if let Some(rp) = &p.random_pairs {
        if rp.atoms[0] == 0 || rp.atoms[0] > rp.atoms[1] {
            return Err(QmError::Usage(format!("random_pairs atoms range {:?} must satisfy 1 <= lo <= hi", rp.atoms)));
        }
        let ball = lf.ball(rp.support_radius)?;
        for _ in 0..rp.count {
            let mu = StateDescriptor::vector({
                let k = rng.gen_range(rp.atoms[0]..=rp.atoms[1]);
                AlgebraElement::random(rng, ball.elements(), k, false)
            })?;
            let nu = random_state(lf, ball.elements(), rp.atoms, rng)?;
            pairs.push((mu, nu));
        }
    }
    if pairs.is_empty() {
        return Err(QmError::Usage("metric needs 'pairs' or 'random_pairs'".into()));
    }
    let opts = AscentOptions { max_iterations: p.max_iterations, ..Default::default() };
    let results: Vec<Result<PairOutcome>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (mu, nu))| {
            let atom = atom_metric_lower_bound(mu, nu, lf, p.radius)?;
            let mut rows = Vec::new();
            let mut json_rows = Vec::new();
            let mut rep = InequalityReport::default();
            let mut by_kind = Vec::new();
            for &c in &p.constraints {
                let b = metric_ascent(mu, nu, lf, p.radius, c, &opts)?;
                let cv = constraint_value(lf, &b.f, c)?;
                let ok = audit(lf, &b)?;
                rep.records.push(InequalityRecord::new(
                    format!("atom bound <= ascent ({c:?})"),
                    "metric",
                    atom.value,
                    Bound::Exact,
                    b.value,
                    Bound::Exact,
                ));
                rep.records.push(InequalityRecord::new(
                    format!("feasibility violations ({c:?})"),
                    "metric",
                    if ok { 0.0 } else { 1.0 },
                    Bound::Exact,
                    0.0,
                    Bound::Exact,
                ));
                json_rows.push(json!({
                    "mu": mu, "nu": nu, "constraint": c, "radius": p.radius, "bound": b.value,
                    "f_support": b.f.len(), "iterations": b.iterations, "flagged": b.flagged,
                }));
                rows.push(MetricRow {
                    pair: i,
                    constraint: c,
                    radius: p.radius,
                    atom_bound: atom.value,
                    bound: b.value,
                    f_support: b.f.len(),
                    iterations: b.iterations,
                    flagged: b.flagged,
                    constraint_value: cv,
                    audit: ok,
                });
                by_kind.push((c, b.value));
            }
            let l1 = by_kind.iter().find(|k| k.0 == Constraint::L1).map(|k| k.1);
            let jd = by_kind.iter().find(|k| k.0 == Constraint::Jd).map(|k| k.1);
            if let (Some(l1), Some(jd)) = (l1, jd) {
                // the J_D ball contains the surrogate ball
                let mut r = InequalityRecord::new(
                    "l1 surrogate bound <= J_D ball bound",
                    "control",
                    l1,
                    Bound::Exact,
                    jd + 1e-9,
                    Bound::Exact,
                );
                r.margin = jd - l1;
                rep.records.push(r);
            }
            Ok((rows, json_rows, rep))
        })
        .collect();
    let mut out = Output::default();
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (rs, js, rep) = r?;
        rows.extend(rs);
        bounds.extend(js);
        out.add_records(i as i64, rep);
    }
    out.notes.push("all values are lower bounds on the state distance; no upper bounds are produced".into());
    out.tables.push(Table::from_rows("metric.csv", &rows).map_err(io)?);
    out.payload = json!({ "pairs": pairs.len(), "bounds": bounds });
    Ok(out)
}

/// Greedy net: each element joins the first center within `eps`, else becomes a center.
fn greedy_net(points: &[AlgebraElement], eps: f64) -> usize {
    let mut centers: Vec<&AlgebraElement> = Vec::new();
    for p in points {
        // ‖λ_a − λ_b‖ <= ‖a − b‖₁
        if !centers.iter().any(|c| p.sub(c).l1() <= eps) {
            centers.push(p);
        }
    }
    centers.len()
}

fn covering(config: &ExperimentConfig, lf: &LengthFunction, rng: &mut ChaCha8Rng) -> Result<Output> {
    let p = config.covering.as_ref().expect("checked");
    if !(p.epsilon > 0.0) {
        return Err(QmError::Usage(format!("covering epsilon {} must be positive", p.epsilon)));
    }
    let mut spec = p.corpus.clone();
    spec.vanish_at_identity = true;
    let fs = corpus(lf, &spec, rng)?;
    let fam = build_scale_family(lf, p.k, 2 * p.n + 1, p.doubling)?;
    let c = fam.certified;
    let m = 1.0 + c.c2 + 4.0 * c.c4;
    let results: Vec<Result<Option<(AlgebraElement, InequalityReport)>>> = fs
        .par_iter()
        .map(|f| {
            let Some(f) = normalize_jd(lf, f)? else { return Ok(None) };
            let d = sharp_flat_decompose(&f, &fam, p.n)?;
            let jd_flat = jd_seminorm(lf, &d.flat)?.value;
            // |g(x)| <= 2 J_D(g) / 𝕃(x) whenever g(e) = 0
            let mut box_bad = 0usize;
            for (x, v) in d.flat.iter() {
                let l = lf.length(x)?;
                if l > 0.0 && v.norm() > 2.0 * m / l * (1.0 + 1e-12) {
                    box_bad += 1;
                }
            }
            let mut rep = InequalityReport::default();
            rep.records.push(InequalityRecord::new(
                format!("max L on supp f♭ <= R^{} + R^{}", 2 * p.n, 2 * p.n - 1),
                "prosaic",
                d.flat_support_length,
                Bound::Exact,
                d.flat_support_bound,
                Bound::Exact,
            ));
            rep.records.push(InequalityRecord::new(
                "J_D(f♭) <= (1 + C2 + 4 C4) J_D(f)",
                "prosaic",
                jd_flat,
                Bound::Exact,
                m,
                Bound::Exact,
            ));
            rep.records.push(InequalityRecord::new(
                "coordinates of f♭ outside the box",
                "proplip",
                box_bad as f64,
                Bound::Exact,
                0.0,
                Bound::Exact,
            ));
            Ok(Some((d.flat, rep)))
        })
        .collect();
    let mut out = Output::default();
    let mut flats = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        if let Some((fl, rep)) = r? {
            flats.push(fl);
            out.add_records(i as i64, rep);
        }
    }
    let bound = fam.r.powi(2 * p.n as i32) + fam.r.powi(2 * p.n as i32 - 1);
    let net = greedy_net(&flats, p.epsilon);
    let half = greedy_net(&flats[..flats.len() / 2], p.epsilon);
    let diameter = flats.iter().flat_map(|a| flats.iter().map(move |b| a.sub(b).l1())).fold(0.0, f64::max);
    out.payload = json!({
        "family": family_payload(&fam),
        "n": p.n,
        "epsilon": p.epsilon,
        "corpus": flats.len(),
        "support_bound": bound,
        "box_constant": 2.0 * m,
        "net_size": net,
        "net_size_half_corpus": half,
        "l1_diameter": diameter,
        "distance": "l1 upper bound on the operator-norm distance",
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn go(cmd: Command, cfg: &str) -> RunResult {
        run(cmd, cfg, &RunOptions::default()).unwrap()
    }

    #[test]
    fn growth_on_plane() {
        let r = go(Command::Growth, r#"{"group":{"family":"free-abelian","rank":2},"growth":{"radii":{"linear":32}}}"#);
        assert_eq!(r.status, ExitStatus::Ok);
        let csv = String::from_utf8(r.tables[0].body.clone()).unwrap();
        assert_eq!(csv.lines().count(), 33);
        let v = &r.report["payload"]["growth"]["verdicts"];
        assert!(v.to_string().contains("strong-polynomial"));
    }

    #[test]
    fn missing_family_is_usage_error() {
        let e = run(Command::Growth, r#"{"group":{},"growth":{"radii":[1]}}"#, &RunOptions::default()).unwrap_err();
        assert_eq!(ExitStatus::of_error(&e), ExitStatus::Usage);
        let e = run(Command::Verify, r#"{"group":{"family":"integers"}}"#, &RunOptions::default()).unwrap_err();
        assert_eq!(ExitStatus::of_error(&e), ExitStatus::Usage);
    }

    #[test]
    fn payload_is_deterministic() {
        let cfg = r#"{"group":{"family":"integers"},"seed":7,"verify":{"corpus":{"size":6,"support_radius":12}}}"#;
        let a = go(Command::Verify, cfg);
        let b = go(Command::Verify, cfg);
        assert_eq!(a.report["payload"], b.report["payload"]);
        assert_eq!(a.tables[0].body, b.tables[0].body);
        assert_eq!(a.status, ExitStatus::Ok);
    }

    #[test]
    fn covering_small_corpus() {
        let cfg = r#"{"group":{"family":"integers"},"seed":3,"covering":{"epsilon":1e9,"corpus":{"size":12,"support_radius":400}}}"#;
        let r = go(Command::CoveringDemo, cfg);
        assert_eq!(r.status, ExitStatus::Ok, "{:?}", r.messages);
        assert_eq!(r.report["payload"]["net_size"], 1);
        assert_eq!(r.report["payload"]["support_bound"], 320.0);
    }

    #[test]
    fn judge_names_anchor() {
        let mut rep = InequalityReport::default();
        rep.records.push(InequalityRecord::new("x", "jip2", 2.0, Bound::Exact, 1.0, Bound::Exact));
        let (s, m) = judge(&rep, false);
        assert_eq!(s, ExitStatus::Failure);
        assert!(m[0].contains("[jip2]"));
    }
}
