//! Acceptance criteria, one PASS/FAIL line each.

use std::process::Command as Process;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use qmetric::config::{Command, CorpusSpec, ExperimentConfig};
use qmetric::run::{corpus, judge, run, ExitStatus, RunOptions};
use qmetric_core::algebra::AlgebraElement;
use qmetric_core::cutoff::{
    build_scale_family, choose_n, epsilon_for, lambda_norm_lower, sharp_flat_decompose, Bound, Constants,
    InequalityRecord, InequalityReport, RecordStatus,
};
use qmetric_core::group::{GroupDescriptor, GroupElement};
use qmetric_core::growth::{growth_table, linear_schedule, max_doubling_ratio, GrowthProperty, VerdictStatus};
use qmetric_core::length::LengthFunction;
use qmetric_core::metric::{atom_metric_lower_bound, audit, metric_ascent, AscentOptions, Constraint, StateDescriptor};
use qmetric_core::operator::{jd_seminorm, lipnorm_estimate};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    check(t < limit, format!("runtime {:.1}s exceeds {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
}

fn lf(config: &str) -> LengthFunction {
    ExperimentConfig::parse(config).unwrap().length_function(None).unwrap()
}

fn z(x: i64) -> GroupElement {
    GroupElement::Vector(vec![x])
}

fn ball_sizes() -> Outcome {
    let start = Instant::now();
    let zl = lf(r#"{"group":{"family":"integers"}}"#);
    for r in 1..=64u128 {
        for dr in [0.0, 0.5] {
            let got = zl.ball_size(r as f64 + dr).map_err(e)?;
            check(got == 2 * r + 1, format!("|B({})| on Z = {got}", r as f64 + dr))?;
        }
    }
    let z2 = lf(r#"{"group":{"family":"free-abelian","rank":2}}"#);
    for r in 1..=32u128 {
        let got = z2.ball_size(r as f64).map_err(e)?;
        check(got == 2 * r * r + 2 * r + 1, format!("|B({r})| on Z^2 = {got}"))?;
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("Z r=1..64 and Z^2 r<=32 closed forms ({:.2}s)", start.elapsed().as_secs_f64()))
}

fn direct_sums() -> Outcome {
    let start = Instant::now();
    let l = lf(r#"{"group":{"family":"direct-sum","components":[2],"weights":"pow2-ksquared"}}"#);
    for k in 1..=5u32 {
        let got = l.ball_size(2f64.powi((k * k) as i32)).map_err(e)?;
        check(got == 1u128 << k, format!("|B(2^{})| = {got}", k * k))?;
    }
    let (c, at) = max_doubling_ratio(&l, 1.0, 2f64.powi(25)).map_err(e)?;
    check(c <= 2.0, format!("doubling ratio {c} at r = {at}"))?;

    let cu = lf(r#"{"group":{"family":"direct-sum","components":"cyclic-increasing","weights":"catch-up"}}"#);
    let GroupDescriptor::DirectSum(ds) = cu.group().as_ref() else {
        return Err("catch-up group is not a direct sum".into());
    };
    for n in 1..=6u32 {
        let a = ds.weight(n);
        let ratio = cu.ball_size(a).map_err(e)? as f64 / cu.ball_size(a / 2.0).map_err(e)? as f64;
        let order = ds.components.component(n).order() as f64;
        check(ratio == order, format!("catch-up ratio {ratio} at a_{n} vs |G_{n}| = {order}"))?;
    }

    let log = lf(r#"{"group":{"family":"integers"},"length":{"kind":"log-abs"}}"#);
    let rep = growth_table(&log, &linear_schedule(8), None).map_err(e)?;
    let v = rep.verdict(GrowthProperty::Polynomial);
    check(
        v.status == VerdictStatus::Refuted && v.witness_r.is_some_and(|r| r <= 8.0),
        format!("log length verdict {:?} at {:?}", v.status, v.witness_r),
    )?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "Z/2 sum sizes, doubling <= 2, catch-up ratios, log length refuted ({:.2}s)",
        start.elapsed().as_secs_f64()
    ))
}

/// r·‖(I − M_{2r}) λ_f M_r‖ on ℤ, built from integer shifts.
fn scan_value(f: &[(i64, f64)], r: f64) -> f64 {
    let lmax = f.iter().map(|p| p.0.abs()).max().unwrap_or(0);
    let k = r.floor() as i64;
    let cols: Vec<i64> = (-k..=k).collect();
    let rows: Vec<i64> = (-(lmax + k)..=lmax + k).filter(|x| x.abs() as f64 > 2.0 * r).collect();
    if rows.is_empty() {
        return 0.0;
    }
    let mut m = DMatrix::<f64>::zeros(rows.len(), cols.len());
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

/// sup over 10³ uniform radii and the left limits at half-integers.
fn dense_scan(f: &[(i64, f64)]) -> f64 {
    let lmax = f.iter().map(|p| p.0.abs()).max().unwrap_or(0) as f64;
    let mut radii: Vec<f64> = (1..=1000).map(|i| lmax * i as f64 / 1000.0).collect();
    let mut k = 1.0;
    while k / 2.0 <= lmax {
        radii.extend([k / 2.0, k / 2.0 - 1e-13]);
        k += 1.0;
    }
    radii.into_iter().map(|r| scan_value(f, r)).fold(0.0, f64::max)
}

fn seminorm_values() -> Outcome {
    let zl = lf(r#"{"group":{"family":"integers"}}"#);
    let el = |f: &[(i64, f64)]| AlgebraElement::from_pairs(f.iter().map(|(s, c)| (z(*s), Complex64::new(*c, 0.0))));
    let a = [(1, 1.0)];
    let b = [(1, 1.0), (-1, 1.0)];
    for (f, want) in [(&a[..], 0.5), (&b[..], 2f64.sqrt() / 2.0)] {
        let got = jd_seminorm(&zl, &el(f)).map_err(e)?.value;
        let oracle = dense_scan(f);
        check((got - want).abs() < 1e-12, format!("J_D = {got}, expected {want}"))?;
        check((got - oracle).abs() < 1e-12, format!("J_D = {got}, dense scan {oracle}"))?;
    }
    let ld = lipnorm_estimate(&zl, &el(&a), &[1.0, 2.0, 3.0, 4.0]).map_err(e)?;
    check(
        (ld.lower() - 1.0).abs() < 1e-9 && (ld.upper() - 1.0).abs() < 1e-9,
        format!("L_D(δ₁) bracket [{}, {}]", ld.lower(), ld.upper()),
    )?;
    Ok("J_D(δ₁) = 1/2, J_D(δ₁+δ₋₁) = √2/2 against dense scan, L_D(δ₁) in [1,1] by r = 4".into())
}

fn verify_config(group: &str, support: f64, n_max: u32) -> String {
    format!(
        r#"{{"group":{group},"ball_cap":20000,"seed":20,"verify":{{"n_max":{n_max},"corpus":{{"size":200,"support_radius":{support}}}}}}}"#
    )
}

fn verify_corpora() -> Outcome {
    let start = Instant::now();
    let mut total = 0usize;
    for (name, group, support, n_max) in [
        ("Z", r#"{"family":"integers"}"#, 12.0, 3),
        ("Z^2", r#"{"family":"free-abelian","rank":2}"#, 12.0, 3),
        ("Heisenberg", r#"{"family":"heisenberg"}"#, 6.0, 2),
    ] {
        let res = run(Command::Verify, &verify_config(group, support, n_max), &RunOptions::default()).map_err(e)?;
        let counts = &res.report["records"];
        check(
            res.status == ExitStatus::Ok,
            format!("{name}: status {:?}, records {counts}, {:?}", res.status, res.messages),
        )?;
        check(counts["fail"] == 0 && counts["inconclusive"] == 0, format!("{name}: {counts}"))?;
        check(counts["rigorous"] == counts["pass"], format!("{name}: non-rigorous passes {counts}"))?;
        total += counts["pass"].as_u64().unwrap_or(0) as usize;
    }
    within(start, Duration::from_secs(600))?;
    Ok(format!("200 elements per group, {total} rigorous records pass ({:.1}s)", start.elapsed().as_secs_f64()))
}

fn decomposition() -> Outcome {
    let start = Instant::now();
    let c = 7.0 / 3.0;
    let n = choose_n(4.0, &Constants::nominal(c, 2), 0.1).map_err(e)?;
    check(n == 5, format!("choose_N(0.1) = {n}"))?;

    let zl = lf(r#"{"group":{"family":"integers"}}"#);
    let fam = build_scale_family(&zl, 2, 5, Some(c)).map_err(e)?;
    let eps = epsilon_for(fam.r, &fam.constants, 2);
    let flat_bound = 1.0 + fam.constants.c2 + 4.0 * fam.constants.c4;
    let spec = CorpusSpec { size: 50, support_radius: 400.0, atoms: [1, 6], real: true, vanish_at_identity: false };
    let fs = corpus(&zl, &spec, &mut ChaCha8Rng::seed_from_u64(50)).map_err(e)?;
    let mut worst = (0.0f64, 0.0f64);
    for (i, f) in fs.iter().enumerate() {
        let j = jd_seminorm(&zl, f).map_err(e)?.value;
        let f = f.scale(Complex64::new(1.0 / j, 0.0));
        let jf = jd_seminorm(&zl, &f).map_err(e)?.value;
        check((jf - 1.0).abs() < 1e-12, format!("element {i}: J_D(f) = {jf} after normalization"))?;
        let d = sharp_flat_decompose(&f, &fam, 2).map_err(e)?;
        check(
            d.flat.support().all(|x| x.as_int().is_some_and(|v| v.abs() <= 320)),
            format!("element {i}: supp f♭ leaves B(320)"),
        )?;
        let lmax = d.sharp.support_length(&zl).map_err(e)?.max(1.0);
        for r in [lmax / 4.0, lmax / 2.0, lmax, 2.0 * lmax] {
            let lam = lambda_norm_lower(&zl, &d.sharp, r).map_err(e)?;
            worst.0 = worst.0.max(lam);
            check(lam <= eps, format!("element {i}: |λ_(f♯)| >= {lam} > ε = {eps} on B({r})"))?;
        }
        let jflat = jd_seminorm(&zl, &d.flat).map_err(e)?.value;
        worst.1 = worst.1.max(jflat / flat_bound);
        check(jflat <= flat_bound, format!("element {i}: J_D(f♭) = {jflat} > {flat_bound}"))?;
    }
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "N = 5 at ε = 0.1; 50 elements at N = 2, ε = {eps:.4}: max |λ_(f♯)| lower bound {:.3e}, max J_D(f♭)/bound = {:.2e} ({:.1}s)",
        worst.0,
        worst.1,
        start.elapsed().as_secs_f64()
    ))
}

fn metric_bounds() -> Outcome {
    let zl = lf(r#"{"group":{"family":"integers"}}"#);
    let xi = AlgebraElement::from_pairs([(z(0), Complex64::new(1.0, 0.0)), (z(1), Complex64::new(1.0, 0.0))]);
    let mu = StateDescriptor::vector(xi).map_err(e)?;
    let tau = StateDescriptor::Trace;
    let atom = atom_metric_lower_bound(&mu, &tau, &zl, 8.0).map_err(e)?;
    check(atom.value == 0.5, format!("atom bound {}", atom.value))?;
    for c in [Constraint::L1, Constraint::Jd] {
        let b = metric_ascent(&mu, &tau, &zl, 8.0, c, &AscentOptions::default()).map_err(e)?;
        check(b.value >= atom.value * (1.0 - 1e-12), format!("{c:?} ascent {} below atom bound", b.value))?;
        check(audit(&zl, &b).map_err(e)?, format!("{c:?} feasibility audit"))?;
    }
    let cfg = r#"{"group":{"family":"integers"},"seed":6,"metric":{"radius":8,"random_pairs":{"count":20,"support_radius":4}}}"#;
    let res = run(Command::Metric, cfg, &RunOptions::default()).map_err(e)?;
    let rows = csv::Reader::from_reader(
        res.tables.iter().find(|t| t.name == "metric.csv").ok_or("no metric.csv")?.body.as_slice(),
    )
    .into_deserialize::<(usize, String, f64, f64, f64, usize, usize, bool, f64, bool)>()
    .collect::<Result<Vec<_>, _>>()
    .map_err(e)?;
    let mut pairs = 0;
    for i in 0..20 {
        let get = |k: &str| rows.iter().find(|r| r.0 == i && r.1 == k).map(|r| r.4);
        let (Some(l1), Some(jd)) = (get("l1"), get("jd")) else {
            return Err(format!("pair {i} is missing a constraint row"));
        };
        check(jd >= l1 - 1e-9, format!("pair {i}: J_D bound {jd} < l1 bound {l1}"))?;
        pairs += 1;
    }
    check(rows.iter().all(|r| r.9), "random-pair feasibility audit")?;
    check(res.status == ExitStatus::Ok, format!("metric run status {:?}", res.status))?;
    Ok(format!("atom bound 1/2 exact, ascent >= atom, audit clean, dominance on {pairs} pairs"))
}

fn binary_verify() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let cfg = dir.path().join("verify.json");
    std::fs::write(&cfg, verify_config(r#"{"family":"integers"}"#, 12.0, 3).replace("\"size\":200", "\"size\":20"))
        .map_err(e)?;
    let out = dir.path().join("out");
    let o = Process::new(env!("CARGO_BIN_EXE_qmetric"))
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--threads", "1"])
        .output()
        .map_err(e)?;
    let stderr = String::from_utf8_lossy(&o.stderr);
    check(o.status.code() == Some(0), format!("exit {:?}: {stderr}", o.status.code()))?;
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).map_err(e)?).map_err(e)?;
    check(report["status"] == "ok", format!("report status {}", report["status"]))?;
    check(out.join("records.csv").exists(), "records.csv missing")?;

    let mut rep = InequalityReport::default();
    rep.records.push(InequalityRecord::new("probe", "jip2", 2.0, Bound::Exact, 1.0, Bound::Exact));
    let (status, msgs) = judge(&rep, false);
    check(status == ExitStatus::Failure && status.code() == 2, "a detected violation does not map to exit 2")?;
    check(msgs.iter().all(|m| m.contains("[jip2]")), format!("failure line lacks the anchor: {msgs:?}"))?;
    check(rep.records[0].status == RecordStatus::Fail, "probe record did not fail")?;
    Ok("headless verify exits 0 with report.json; violations exit 2 naming the anchor".into())
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 ball sizes", ball_sizes),
        ("2 direct-sum growth", direct_sums),
        ("3 J_D and L_D values", seminorm_values),
        ("4 rigorous records on random corpora", verify_corpora),
        ("5 choice of N and decomposition", decomposition),
        ("6 state-distance bounds", metric_bounds),
        ("7 headless verify", binary_verify),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(msg) => println!("PASS [{name}] {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{name}] {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
