//! Acceptance gate: one PASS/FAIL line per criterion, then a single assertion.

use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tubeswarm::controller::ControlMode;
use tubeswarm::density::{DensityView, DesiredDensity, OccupiedRegion};
use tubeswarm::metrics::{amd, audit_condition23, min_pairwise_distance, throughput};
use tubeswarm::output::{mean_amd, tables};
use tubeswarm::scenario::{load_scenario, load_scenario_with, Overrides, Scenario};
use tubeswarm::sim::{run, SimulationLog, Termination};
use tubeswarm::tube::CurvilinearCoord;
use tubeswarm::Vec2;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn simulate(s: &Scenario, mode: ControlMode) -> SimulationLog {
    run(&s.sim_config(mode), s.initial_state()).expect("scenario runs")
}

struct Gate {
    failed: Vec<u32>,
}

impl Gate {
    fn report(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        // written to the handle directly so the verdicts show even when output is captured
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "criterion {id} ({name}): {} [{detail}]", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id);
        }
    }
}

fn at_time(log: &SimulationLog, t: f64) -> Option<f64> {
    log.metrics()
        .find(|m| (m.time - t).abs() < 1e-9)
        .and_then(|m| m.density_error_l2)
}

fn max_error(log: &SimulationLog, from: f64, to: f64) -> f64 {
    log.metrics()
        .filter(|m| m.time >= from - 1e-9 && m.time <= to + 1e-9)
        .filter_map(|m| m.density_error_l2)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn safety(log: &SimulationLog, pair_limit: f64, boundary_limit: f64) -> (bool, f64, f64) {
    let mut ok = log.termination != Termination::Fault;
    let (mut pair, mut bound) = (f64::INFINITY, f64::INFINITY);
    for m in log.metrics() {
        if let Some(d) = m.min_pairwise_distance {
            pair = pair.min(d);
            ok &= d > pair_limit;
        }
        if let Some(d) = m.min_boundary_distance {
            bound = bound.min(d);
            ok &= d > boundary_limit;
        }
    }
    (ok, pair, bound)
}

fn kde_brute(samples: &[Vec2], h: f64, p: Vec2) -> f64 {
    let mut s = 0.0;
    for q in samples {
        let d2 = (p - q).norm_squared() / (h * h);
        s += (-0.5 * d2).exp() / (2.0 * PI);
    }
    s / (samples.len() as f64 * h * h)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn oracles(narrow: &Scenario, full: &SimulationLog) -> (bool, String) {
    let tube = &narrow.tube;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples = full.records[1500].robots.iter().map(|r| r.position).collect::<Vec<_>>();
    let h = 1.2;
    let view = DensityView::new(samples.clone(), h, 1e-6).unwrap();

    let mut kde_err: f64 = 0.0;
    let mut grad_err: f64 = 0.0;
    for _ in 0..200 {
        let p = samples[rng.gen_range(0..samples.len())]
            + Vec2::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        kde_err = kde_err.max(rel(view.estimate(p), kde_brute(&samples, h, p)));
        let e = 1e-5;
        let fd = Vec2::new(
            (kde_brute(&samples, h, p + Vec2::new(e, 0.0)) - kde_brute(&samples, h, p - Vec2::new(e, 0.0))) / (2.0 * e),
            (kde_brute(&samples, h, p + Vec2::new(0.0, e)) - kde_brute(&samples, h, p - Vec2::new(0.0, e))) / (2.0 * e),
        );
        let g = view.gradient(p);
        grad_err = grad_err.max((g - fd).norm() / fd.norm().max(1e-3 * view.estimate(p) / h));
    }

    let mut trip_err: f64 = 0.0;
    for _ in 0..10_000 {
        let l = rng.gen_range(0.0..tube.length());
        let (rd, ru) = tube.widths_at(l);
        let r = rng.gen_range(-rd * 0.999..ru * 0.999);
        let p = tube.to_cartesian(CurvilinearCoord { l, r }).unwrap();
        let c = tube.to_curvilinear(p).unwrap();
        let back = tube.to_cartesian(c).unwrap();
        trip_err = trip_err.max((back - p).norm()).max((c.l - l).abs()).max((c.r - r).abs());
    }

    // ρ_d mass by composite Simpson along l; ρ_d is constant across each section
    // and the curvilinear Jacobian integrates to r_d + r_u over a section.
    let region = OccupiedRegion::from_positions(tube, &samples, 0.6).unwrap();
    let dd = DesiredDensity::new(tube, region, 1.2);
    let n = 200_000;
    let (a, b) = (region.l_b.max(0.0), region.l_f.min(tube.length()));
    let step = (b - a) / n as f64;
    let f = |l: f64| {
        let (rd, ru) = tube.widths_at(l);
        dd.at_arc_length(l) * (rd + ru)
    };
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * step);
    }
    let mass = s * step / 3.0;

    let mut metric_err: f64 = 0.0;
    for _ in 0..50 {
        let pts: Vec<Vec2> = (0..rng.gen_range(2..30))
            .map(|_| Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
            .collect();
        let nn: Vec<f64> = (0..pts.len())
            .map(|i| {
                (0..pts.len())
                    .filter(|&j| j != i)
                    .map(|j| ((pts[i].x - pts[j].x).powi(2) + (pts[i].y - pts[j].y).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let want_amd = nn.iter().sum::<f64>() / nn.len() as f64;
        let want_min = nn.iter().copied().fold(f64::INFINITY, f64::min);
        metric_err = metric_err
            .max((amd(&pts).unwrap() - want_amd).abs())
            .max((min_pairwise_distance(&pts).unwrap() - want_min).abs());
    }

    let ok = kde_err < 1e-12 && grad_err < 1e-6 && trip_err < 1e-6 && (mass - 1.0).abs() < 1e-6 && metric_err < 1e-12;
    (
        ok,
        format!(
            "kde rel {kde_err:.1e}, gradient rel {grad_err:.1e}, round trip {trip_err:.1e} m, mass-1 {:.1e}, metrics {metric_err:.1e}",
            mass - 1.0
        ),
    )
}

fn trace_bytes(log: &SimulationLog) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    tables::write_rows(&path, &tables::trace_rows(log)).unwrap();
    std::fs::read(path).unwrap()
}

fn max_position_gap(a: &SimulationLog, b: &SimulationLog) -> f64 {
    a.final_positions()
        .iter()
        .zip(b.final_positions())
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

fn determinism_and_convergence() -> (bool, String) {
    let short = |dt: f64| {
        load_scenario_with(
            scenario_path("narrow_s_tube.json"),
            Overrides {
                dt_s: Some(dt),
                t_end_s: Some(3.0),
                mode: None,
            },
        )
        .unwrap()
    };
    let s = short(0.01);
    let a = simulate(&s, ControlMode::Full);
    let b = simulate(&s, ControlMode::Full);
    let identical = trace_bytes(&a) == trace_bytes(&b);

    let runs: Vec<SimulationLog> = [0.02, 0.01, 0.005]
        .iter()
        .map(|&dt| simulate(&short(dt), ControlMode::Full))
        .collect();
    let d1 = max_position_gap(&runs[0], &runs[1]);
    let d2 = max_position_gap(&runs[1], &runs[2]);
    let ratio = d1 / d2;
    let clean = runs.iter().all(|r| audit_condition23(r).is_clean());
    (
        identical && (1.6..=2.4).contains(&ratio) && clean,
        format!("byte-identical {identical}, differences {d1:.3e} / {d2:.3e} = {ratio:.3}"),
    )
}

#[test]
fn acceptance() {
    let mut gate = Gate { failed: Vec::new() };
    let narrow = load_scenario(scenario_path("narrow_s_tube.json")).unwrap();
    let started = std::time::Instant::now();
    let full = simulate(&narrow, ControlMode::Full);
    let full_secs = started.elapsed().as_secs_f64();
    let baseline = simulate(&narrow, ControlMode::Baseline);

    let (safe, pair, bound) = safety(&full, 2.0 * narrow.params().r_s, narrow.params().r_s);
    gate.report(
        1,
        "safety",
        safe && full.records.len() == 3001,
        format!("{} records, min pair {pair:.4} m, min boundary {bound:.4} m, {full_secs:.1} s", full.records.len()),
    );

    let e0 = at_time(&full, 0.0).unwrap_or(f64::NAN);
    let e30 = at_time(&full, 30.0).unwrap_or(f64::NAN);
    let (early, late) = (max_error(&full, 0.0, 10.0), max_error(&full, 20.0, 30.0));
    gate.report(
        2,
        "density tracking",
        e30 < 0.5 * e0 && late < early,
        format!("err(0) {e0:.4}, err(30) {e30:.4}, max[0,10] {early:.4}, max[20,30] {late:.4}"),
    );

    let amd_full = mean_amd(&full, 20.0, 30.0).unwrap_or(f64::NAN);
    let amd_base = mean_amd(&baseline, 20.0, 30.0).unwrap_or(f64::NAN);
    gate.report(
        3,
        "AMD improvement",
        amd_full > amd_base,
        format!("mean AMD over [20,30]: full {amd_full:.4} m, baseline {amd_base:.4} m"),
    );

    let exited_full = throughput(&full, 30.0).unwrap();
    let exited_base = throughput(&baseline, 30.0).unwrap();
    gate.report(
        4,
        "throughput",
        exited_full > exited_base,
        format!("exited at 30 s: full {exited_full}, baseline {exited_base}"),
    );

    let annular = load_scenario(scenario_path("annular.json")).unwrap();
    let started = std::time::Instant::now();
    let ring = simulate(&annular, ControlMode::Full);
    let ring_secs = started.elapsed().as_secs_f64();

    let audits = [audit_condition23(&full), audit_condition23(&ring)];
    let evaluations: usize = audits.iter().map(|a| a.evaluations).sum();
    gate.report(
        5,
        "condition audit",
        audits.iter().all(|a| a.is_clean()),
        format!(
            "{evaluations} commands audited, {} violations",
            audits.iter().map(|a| a.violations.len()).sum::<usize>()
        ),
    );

    let (ring_safe, ring_pair, ring_bound) = safety(&ring, 2.0 * annular.params().r_s, annular.params().r_s);
    let no_exit = ring.metrics().all(|m| m.exited_count == 0);
    gate.report(
        6,
        "closed-tube endurance",
        ring_safe && no_exit && ring.termination == Termination::TimeLimit && ring.final_record().time >= 150.0 - 1e-9,
        format!(
            "ran to t = {}, min pair {ring_pair:.4} m, min boundary {ring_bound:.4} m, exits {}, {ring_secs:.1} s",
            ring.final_record().time,
            ring.final_record().metrics.exited_count
        ),
    );

    let (ok, detail) = oracles(&narrow, &full);
    gate.report(7, "numerical oracles", ok, detail);

    let (ok, detail) = determinism_and_convergence();
    gate.report(8, "determinism and convergence", ok, detail);

    assert!(gate.failed.is_empty(), "failed criteria: {:?}", gate.failed);
}
