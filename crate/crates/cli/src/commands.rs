use quasimin::density::{exceptional_set_scan, map_density, time_t_scan, DensityReport};
use quasimin::field::{build_punctured_field, check_distinct_dense_orbits, CompositeField, PunctureSet, SlopeParam};
use quasimin::integrator::{iterate_map, trace_orbit, OrbitTrace, Status};
use quasimin::oracle::translation_density_oracle;
use quasimin::recurrence::{build_conjugated_map, certificate_check, recurrence_scan, BallPair, ConjugacySpec};
use quasimin::TorusPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::output::{opt_f64, Csv, OutDir};
use crate::CliError;

const U_RADIUS: f64 = 0.02;
const V_RADIUS: f64 = 0.05;

fn point(p: &[f64; 2]) -> Result<TorusPoint, CliError> {
    Ok(TorusPoint::wrap(p[0], p[1])?)
}

fn points(ps: &[[f64; 2]]) -> Result<Vec<TorusPoint>, CliError> {
    ps.iter().map(point).collect()
}

fn build_field(cfg: &ExperimentConfig) -> Result<CompositeField, CliError> {
    let slope = SlopeParam::new(cfg.field.alpha)?;
    if cfg.field.punctures.is_empty() {
        return Ok(CompositeField::linear(slope));
    }
    let set = PunctureSet::new(points(&cfg.field.punctures)?, cfg.field.r0)?;
    Ok(build_punctured_field(slope, set, cfg.field.depth)?)
}

fn write_config(out: &OutDir, command: &str, cfg: &ExperimentConfig) -> Result<(), CliError> {
    out.write_json(&format!("{command}.config.json"), cfg)
}

pub fn construct(cfg: &ExperimentConfig, out: &OutDir) -> Result<(), CliError> {
    write_config(out, "construct", cfg)?;
    let slope = SlopeParam::new(cfg.field.alpha)?;
    let report = if cfg.field.punctures.is_empty() {
        None
    } else {
        let set = PunctureSet::new(points(&cfg.field.punctures)?, cfg.field.r0)?;
        Some(check_distinct_dense_orbits(
            &set,
            &slope,
            cfg.field.depth,
            &points(&cfg.field.special_points)?,
        )?)
    };
    match build_field(cfg) {
        Ok(field) => {
            let zeros: Vec<TorusPoint> = field
                .puncture_points()
                .iter()
                .copied()
                .filter(|p| field.eval(p).is_zero())
                .collect();
            println!("accepted: alpha = {}, |F| = {}, zeros = {}", field.alpha(), field.puncture_points().len(), zeros.len());
            for z in &zeros {
                println!("  zero at {z}");
            }
            out.write_json(
                "construct.json",
                &json!({
                    "config": cfg,
                    "accepted": true,
                    "alpha": field.alpha(),
                    "bound": field.bound(),
                    "convergents": field.slope().convergents(),
                    "zeros": zeros,
                    "report": report,
                }),
            )
        }
        Err(CliError::Rejected(msg)) => {
            let witness = report.as_ref().and_then(|r| r.first_same_orbit().copied());
            println!("rejected: {msg}");
            out.write_json(
                "construct.json",
                &json!({
                    "config": cfg,
                    "accepted": false,
                    "witness": witness,
                    "report": report,
                }),
            )?;
            Err(CliError::Rejected(msg))
        }
        Err(e) => Err(e),
    }
}

pub fn orbit(cfg: &ExperimentConfig, out: &OutDir) -> Result<(), CliError> {
    write_config(out, "orbit", cfg)?;
    let field = build_field(cfg)?;
    let x0 = point(&cfg.orbit.start)?;
    let trace: OrbitTrace = match cfg.orbit.map_t {
        Some(t) => iterate_map(&field, t, &x0, cfg.orbit.iterations, &cfg.integrator)?,
        None => trace_orbit(&field, &x0, cfg.orbit.horizon, cfg.orbit.direction, &cfg.integrator)?,
    };
    let mut csv = Csv::new(&["t", "x", "y"]);
    for s in &trace.samples {
        csv.row(&[s.t.to_string(), s.p.x().to_string(), s.p.y().to_string()]);
    }
    out.write("orbit.csv", &csv.into_bytes())?;
    out.write_json(
        "orbit.json",
        &json!({
            "config": cfg,
            "status": trace.status,
            "samples": trace.samples.len(),
            "start": trace.start(),
            "end": trace.end(),
        }),
    )?;
    println!("{} samples, status {}, end {}", trace.samples.len(), trace.status.as_str(), trace.end());
    if trace.status == Status::StepBudgetExhausted {
        return Err(CliError::Numeric("integrator step budget exhausted".into()));
    }
    Ok(())
}

fn density_row(csv: &mut Csv, start: &TorusPoint, r: &DensityReport) {
    csv.row(&[
        start.x().to_string(),
        start.y().to_string(),
        r.direction.as_str().to_string(),
        r.covered_fraction.to_string(),
        opt_f64(r.first_cover_time),
        r.classification.as_str().to_string(),
        r.status.as_str().to_string(),
    ]);
}

const DENSITY_HEADER: [&str; 7] = [
    "start_x",
    "start_y",
    "direction",
    "covered_fraction",
    "first_cover_time",
    "classification",
    "status",
];

pub fn density(cfg: &ExperimentConfig, out: &OutDir) -> Result<(), CliError> {
    write_config(out, "density", cfg)?;
    let field = build_field(cfg)?;
    let d = &cfg.density;
    let mut starts = Vec::new();
    if d.include_punctures {
        starts.extend_from_slice(field.puncture_points());
    }
    starts.extend(points(&d.starts)?);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..d.random_starts {
        starts.push(TorusPoint::wrap(rng.gen(), rng.gen())?);
    }
    if starts.is_empty() {
        return Err(CliError::Config("at `density`: no starts (enable punctures, list starts or random_starts)".into()));
    }

    let mut csv = Csv::new(&DENSITY_HEADER);
    let summary = if let Some(map) = &d.map {
        let reports = starts
            .par_iter()
            .map(|s| map_density(&field, map.t, s, map.iterations, d.m, &cfg.integrator).map(|(r, _)| r))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, (s, r)) in starts.iter().zip(&reports).enumerate() {
            density_row(&mut csv, s, r);
            if d.write_pgm {
                out.write(&format!("coverage/start_{i:03}_map.pgm"), &r.grid.to_pgm())?;
            }
        }
        json!({
            "config": cfg,
            "mode": "map",
            "starts": starts,
            "occupied_columns": reports.iter().map(|r| r.grid.occupied_columns()).collect::<Vec<_>>(),
            "occupied_rows": reports.iter().map(|r| r.grid.occupied_rows()).collect::<Vec<_>>(),
        })
    } else {
        let scan = exceptional_set_scan(&field, &starts, d.horizon, d.m, &cfg.integrator)?;
        for (i, e) in scan.entries.iter().enumerate() {
            for r in [&e.forward, &e.backward] {
                density_row(&mut csv, &e.start, r);
                if d.write_pgm {
                    out.write(
                        &format!("coverage/start_{i:03}_{}.pgm", r.direction.as_str()),
                        &r.grid.to_pgm(),
                    )?;
                }
            }
        }
        let exceptional = scan.exceptional();
        println!("{} starts, exceptional set: {:?}", starts.len(), exceptional);
        json!({
            "config": cfg,
            "mode": "flow",
            "starts": starts,
            "exceptional": exceptional,
            "undetermined": scan.undetermined(),
        })
    };
    out.write("density.csv", &csv.into_bytes())?;
    out.write_json("density.json", &summary)
}

#[derive(Serialize)]
struct ScanRow {
    t: f64,
    covered_fraction: f64,
    refined_fraction: f64,
    first_cover_iterate: Option<f64>,
    classification: &'static str,
    oracle: Option<quasimin::oracle::IndependenceVerdict>,
    agrees: Option<bool>,
    occupied_columns: usize,
    occupied_rows: usize,
}

pub fn scan_t(cfg: &ExperimentConfig, out: &OutDir) -> Result<(), CliError> {
    write_config(out, "scan_t", cfg)?;
    let s = &cfg.scan_t;
    let field = if s.slowed {
        build_field(cfg)?
    } else {
        CompositeField::linear(SlopeParam::new(cfg.field.alpha)?)
    };
    let x0 = point(&s.start)?;
    let rows = time_t_scan(&field, &s.t_values, &x0, s.iterations, s.m, &cfg.integrator, s.oracle_bound)?;
    let mut csv = Csv::new(&["t", "covered_fraction", "classification", "oracle_verdict", "relation"]);
    let mut summary = Vec::new();
    for r in &rows {
        let relation = r
            .oracle
            .and_then(|v| v.relation)
            .map(|(a, b, c)| format!("{a};{b};{c}"))
            .unwrap_or_default();
        csv.row(&[
            r.t.to_string(),
            r.discrete.covered_fraction.to_string(),
            r.discrete.classification.as_str().to_string(),
            r.oracle.map(|v| v.label().to_string()).unwrap_or_default(),
            relation,
        ]);
        println!(
            "t = {}: covered {} ({}), oracle {}",
            r.t,
            r.discrete.covered_fraction,
            r.discrete.classification.as_str(),
            r.oracle.map_or("-", |v| v.label())
        );
        summary.push(ScanRow {
            t: r.t,
            covered_fraction: r.discrete.covered_fraction,
            refined_fraction: r.refined_fraction,
            first_cover_iterate: r.discrete.first_cover_time,
            classification: r.discrete.classification.as_str(),
            oracle: r.oracle,
            agrees: r.agrees,
            occupied_columns: r.discrete.grid.occupied_columns(),
            occupied_rows: r.discrete.grid.occupied_rows(),
        });
    }
    out.write("scan_t.csv", &csv.into_bytes())?;
    out.write_json("scan_t.json", &json!({ "config": cfg, "rows": summary }))
}

/// Concentric certificate pairs with seed-derived centres.
pub fn random_certificates(seed: u64, count: usize) -> Vec<BallPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..count)
        .map(|_| {
            let c = TorusPoint::wrap(rng.gen(), rng.gen()).expect("unit interval samples are finite");
            BallPair::concentric(c, U_RADIUS, V_RADIUS)
        })
        .collect()
}

pub fn recurrence(cfg: &ExperimentConfig, out: &OutDir) -> Result<(), CliError> {
    write_config(out, "recurrence", cfg)?;
    let r = &cfg.recurrence;
    let spec = r.spec.clone().unwrap_or_else(|| ConjugacySpec::random(cfg.seed));
    let map = build_conjugated_map(spec, r.t)?;
    let report = recurrence_scan(&map, r.m, r.delta, r.n_max)?;

    let mut pairs = r.certificates.clone();
    pairs.extend(random_certificates(cfg.seed, r.random_certificates));
    let verdicts = certificate_check(&map, &pairs, r.samples_per_u, r.n_max)?;

    let mut csv = Csv::new(&["grid_x", "grid_y", "first_return_n"]);
    for g in &report.returns {
        csv.row(&[
            g.grid_x.to_string(),
            g.grid_y.to_string(),
            g.first_return.map_or_else(|| "FAIL".to_string(), |n| n.to_string()),
        ]);
    }
    out.write("recurrence.csv", &csv.into_bytes())?;
    let certificates: Vec<_> = pairs
        .iter()
        .zip(&verdicts)
        .map(|(p, v)| json!({ "pair": p, "verdict": v }))
        .collect();
    println!(
        "{} grid points, {} failures, max return {:?}, certificates passed {}/{}",
        report.returns.len(),
        report.failures(),
        report.max_return(),
        verdicts.iter().filter(|v| v.passed()).count(),
        verdicts.len()
    );
    out.write_json(
        "recurrence_summary.json",
        &json!({
            "config": cfg,
            "spec": map.spec(),
            "failure_count": report.failures(),
            "max_return": report.max_return(),
            "certificates": certificates,
        }),
    )
}

pub fn oracle(cfg: &ExperimentConfig, out: &OutDir) -> Result<(), CliError> {
    write_config(out, "oracle", cfg)?;
    let o = &cfg.oracle;
    let verdict = translation_density_oracle(o.beta, o.gamma, o.bound);
    match verdict.relation {
        Some((a, b, c)) => println!("dependent: {a} + {b}·β + {c}·γ ≈ 0"),
        None => println!("independent within bound {}", verdict.bound),
    }
    out.write_json("oracle.json", &json!({ "config": cfg, "verdict": verdict }))
}
