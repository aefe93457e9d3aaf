//! Acceptance gate: one `[PASS]`/`[FAIL]` line per criterion, nonzero exit
//! if any fails. Pass criterion numbers as arguments to run a subset.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use quasimin::density::{exceptional_set_scan, map_density, time_t_scan, Classification};
use quasimin::field::{along_line, build_punctured_field, CompositeField, PunctureSet, SlopeParam, TOL_ORBIT};
use quasimin::integrator::{exact_linear_flow_map, flow_map, iterate_map, IntegratorConfig, Status};
use quasimin::recurrence::{build_conjugated_map, certificate_check, recurrence_scan, BallPair, ConjugacySpec};
use quasimin::{Error, TorusPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Slowing radius for the long-horizon density criteria; see README.
const THIN_R0: f64 = 1e-6;
const HORIZON: f64 = 1e4;
const M: usize = 20;

fn pt(x: f64, y: f64) -> TorusPoint {
    TorusPoint::wrap(x, y).unwrap()
}

fn random_points(seed: u64, n: usize) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| pt(rng.gen(), rng.gen())).collect()
}

fn slowed(points: Vec<TorusPoint>, r0: f64) -> CompositeField {
    let set = PunctureSet::new(points, r0).unwrap();
    build_punctured_field(SlopeParam::sqrt2(), set, 50).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let el = start.elapsed();
    ensure(el < limit, || format!("took {el:.1?}, limit {limit:?}"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let field = CompositeField::linear(SlopeParam::sqrt2());
    let cfg = IntegratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = pt(rng.gen(), rng.gen());
        let t = rng.gen_range(-10.0..=10.0);
        let got = flow_map(&field, &x, t, &cfg).map_err(|e| e.to_string())?;
        let err = got.point.dist(&exact_linear_flow_map(field.slope(), &x, t));
        worst = worst.max(err);
    }
    ensure(worst <= 1e-8, || format!("max error {worst:e}"))?;
    within(start, Duration::from_secs(10))?;
    Ok(format!("max error {worst:.2e}"))
}

fn flow_laws() -> Outcome {
    let start = Instant::now();
    let cfg = IntegratorConfig::default();
    let fields = [
        ("unslowed", CompositeField::linear(SlopeParam::sqrt2())),
        ("|F|=2", slowed(vec![pt(0.0, 0.0), pt(0.0, 0.5)], 0.05)),
    ];
    let mut details = Vec::new();
    for (name, field) in &fields {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut group, mut reversal) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let x = pt(rng.gen(), rng.gen());
            let s: f64 = rng.gen_range(-10.0..=10.0);
            let t: f64 = rng.gen_range(-10.0..=10.0);
            let run = |p: &TorusPoint, dt: f64| {
                let o = flow_map(field, p, dt, &cfg).map_err(|e| e.to_string())?;
                ensure(o.status == Status::Completed, || format!("{name}: status {}", o.status.as_str()))?;
                Ok::<_, String>(o.point)
            };
            let whole = run(&x, s + t)?;
            let split = run(&run(&x, s)?, t)?;
            group = group.max(whole.dist(&split));
            let back = run(&run(&x, t)?, -t)?;
            reversal = reversal.max(back.dist(&x));
        }
        ensure(group <= 1e-7 && reversal <= 1e-7, || {
            format!("{name}: group {group:e}, reversal {reversal:e}")
        })?;
        details.push(format!("{name}: group {group:.1e}, reversal {reversal:.1e}"));
    }
    within(start, Duration::from_secs(60))?;
    Ok(details.join("; "))
}

fn check_exceptional_set(field: &CompositeField, seed: u64) -> Outcome {
    let cfg = IntegratorConfig::default();
    let punctures = field.puncture_points().to_vec();
    let mut starts = punctures.clone();
    starts.extend(random_points(seed, 50));
    let scan = exceptional_set_scan(field, &starts, HORIZON, M, &cfg).map_err(|e| e.to_string())?;
    let exceptional = scan.exceptional();
    ensure(exceptional == punctures, || format!("exceptional set {exceptional:?}"))?;
    for e in &scan.entries[..punctures.len()] {
        ensure(e.forward.classification == Classification::Fixed, || {
            format!("puncture {} classified {}", e.start, e.forward.classification.as_str())
        })?;
    }
    let mut last_cover = 0.0f64;
    for e in &scan.entries[punctures.len()..] {
        for r in [&e.forward, &e.backward] {
            ensure(r.is_dense(), || {
                format!("{} {} classified {}", e.start, r.direction.as_str(), r.classification.as_str())
            })?;
            last_cover = last_cover.max(r.first_cover_time.unwrap_or(f64::NAN).abs());
        }
    }
    Ok(format!(
        "exceptional = {} point(s); 50/50 random starts Dense both ways, latest cover |t| = {last_cover:.1}",
        exceptional.len()
    ))
}

fn stopped_flow() -> Outcome {
    check_exceptional_set(&slowed(vec![pt(0.5, 0.5)], THIN_R0), 3)
}

fn two_punctures() -> Outcome {
    let cfg = IntegratorConfig::default();
    let f = vec![pt(0.0, 0.0), pt(0.0, 0.5)];
    let mut details = Vec::new();

    // (a) exact rest points of the time-t map, at the default and thin radii
    for r0 in [0.05, THIN_R0] {
        let field = slowed(f.clone(), r0);
        for &t in &[3f64.sqrt(), std::f64::consts::PI / 3.0, std::f64::consts::E / 2.0] {
            for p in &f {
                ensure(field.eval(p).is_zero(), || format!("field nonzero at {p}"))?;
                let trace = iterate_map(&field, t, p, 10, &cfg).map_err(|e| e.to_string())?;
                ensure(trace.samples.iter().all(|s| s.p == *p), || {
                    format!("{p} moves under the time-{t} map (r0 = {r0})")
                })?;
            }
        }
    }
    details.push("(a) punctures fixed exactly".to_string());

    // (b) discrete orbit of a random start under a generic time-t map
    let field = slowed(f.clone(), THIN_R0);
    let t = std::f64::consts::PI / 3.0;
    let x0 = random_points(4, 1)[0];
    let (report, _) = map_density(&field, t, &x0, 1_000_000, M, &cfg).map_err(|e| e.to_string())?;
    ensure(report.covered_fraction == 1.0, || {
        format!("(b) covered {} ({})", report.covered_fraction, report.status.as_str())
    })?;
    details.push(format!("(b) full cover at n = {}", report.first_cover_time.unwrap_or(f64::NAN)));

    // (c) empirical exceptional set
    details.push(format!("(c) {}", check_exceptional_set(&field, 5)?));
    Ok(details.join("; "))
}

fn genericity_scan() -> Outcome {
    use std::f64::consts::{E, FRAC_1_SQRT_2, PI};
    let field = CompositeField::linear(SlopeParam::sqrt2());
    let t_values = [1.0, 0.5, FRAC_1_SQRT_2, 3f64.sqrt(), PI / 3.0, E / 2.0];
    let x0 = pt(0.1234, 0.5678);
    let rows = time_t_scan(&field, &t_values, &x0, 100_000, M, &IntegratorConfig::default(), 10_000)
        .map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let v = r.oracle.ok_or("missing oracle verdict")?;
        let g = &r.discrete.grid;
        let (cols, rows_) = (g.occupied_columns(), g.occupied_rows());
        if i < 3 {
            ensure(v.dependent, || format!("t = {}: oracle independent", r.t))?;
            ensure(cols <= 2 || rows_ <= 2, || format!("t = {}: {cols} columns, {rows_} rows", r.t))?;
        } else {
            ensure(!v.dependent, || format!("t = {}: oracle relation {:?}", r.t, v.relation))?;
            ensure(r.discrete.covered_fraction == 1.0, || {
                format!("t = {}: covered {}", r.t, r.discrete.covered_fraction)
            })?;
        }
        ensure(r.agrees == Some(true), || format!("t = {}: empirical verdict disagrees", r.t))?;
        details.push(format!("{:.4}:{}", r.t, v.label()));
    }
    Ok(details.join(" "))
}

fn recurrence() -> Outcome {
    let t = std::f64::consts::SQRT_2 - 1.0;
    let mut worst = 0;
    for seed in 0..20u64 {
        let map = build_conjugated_map(ConjugacySpec::random(seed), t).map_err(|e| e.to_string())?;
        let report = recurrence_scan(&map, M, 0.05, 50_000).map_err(|e| e.to_string())?;
        ensure(report.failures() == 0, || format!("seed {seed}: {} failures", report.failures()))?;
        worst = worst.max(report.max_return().unwrap_or(0));

        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let pairs: Vec<BallPair> = (0..5)
            .map(|_| BallPair::concentric(pt(rng.gen(), rng.gen()), 0.02, 0.05))
            .collect();
        let verdicts = certificate_check(&map, &pairs, 17, 50_000).map_err(|e| e.to_string())?;
        for (p, v) in pairs.iter().zip(&verdicts) {
            ensure(v.passed(), || format!("seed {seed}: certificate {p:?} -> {v:?}"))?;
        }
    }
    Ok(format!("20 maps, 0 failures, max first return {worst}; 100/100 certificates"))
}

fn construction_gate() -> Outcome {
    let alpha = std::f64::consts::SQRT_2;
    let bad = PunctureSet::new(vec![pt(0.0, 0.0), pt(0.5, 0.5 * alpha)], 0.05).unwrap();
    let s = match build_punctured_field(SlopeParam::sqrt2(), bad, 50) {
        Err(Error::ConstructionRejected { first, second, s }) => {
            let gap = along_line(&first, alpha, s).dist(&second);
            ensure(gap <= TOL_ORBIT, || format!("witness s = {s} misses by {gap:e}"))?;
            s
        }
        other => return Err(format!("same-orbit pair not rejected: {other:?}")),
    };
    let good = PunctureSet::new(vec![pt(0.0, 0.0), pt(0.0, 0.5)], 0.05).unwrap();
    build_punctured_field(SlopeParam::sqrt2(), good, 50).map_err(|e| format!("{{(0,0),(0,0.5)}} rejected: {e}"))?;
    Ok(format!("rejected with s = {s}; accepted {{(0,0),(0,0.5)}}"))
}

const REPRO_CONFIG: &str = r#"{
  "seed": 7,
  "orbit": { "horizon": 5.0 },
  "density": { "horizon": 200.0, "random_starts": 3 },
  "scan_t": { "iterations": 5000 },
  "recurrence": { "n_max": 20000, "random_certificates": 2 }
}"#;

const COMMANDS: [&str; 6] = ["construct", "orbit", "density", "scan-t", "recurrence", "oracle"];

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("config.json");
    std::fs::write(&config, REPRO_CONFIG).map_err(|e| e.to_string())?;
    let mut total = 0;
    for cmd in COMMANDS {
        let mut runs = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("{cmd}-{run}"));
            let res = Command::new(env!("CARGO_BIN_EXE_qml"))
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .arg(cmd)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(res.status.success(), || {
                format!("{cmd} exited {:?}: {}", res.status.code(), String::from_utf8_lossy(&res.stderr))
            })?;
            runs.push((res.stdout, read_tree(&out)));
        }
        ensure(runs[0] == runs[1], || format!("{cmd}: outputs differ between runs"))?;
        ensure(!runs[0].1.is_empty(), || format!("{cmd}: wrote no files"))?;
        total += runs[0].1.len();
    }
    Ok(format!("6 commands, {total} files byte-identical"))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 8] = [
        (1, "oracle equivalence", oracle_equivalence),
        (2, "flow laws", flow_laws),
        (3, "stopped flow, |F|=1", stopped_flow),
        (4, "two punctures, |F|=2", two_punctures),
        (5, "genericity scan", genericity_scan),
        (6, "recurrence", recurrence),
        (7, "construction gate", construction_gate),
        (8, "reproducibility", reproducibility),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let el = start.elapsed();
        match outcome {
            Ok(detail) => println!("[PASS] {id}. {name} ({el:.1?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {id}. {name} ({el:.1?}): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
