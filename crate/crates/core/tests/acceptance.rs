//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use satfl::contact::{scan_windows, ScanConfig};
use satfl::experiment::write_line_csv;
use satfl::fl::{aggregate_weighted, sgd_step, LocalDataset, Mlp, ModelParams, ModelSpec, Objective};
use satfl::orbital::{
    build_constellation, builtin_catalog, is_visible_intersat, propagate, station_subset, ConstellationSpec,
    EarthModel, GroundStation, OrbitSpec,
};
use satfl::sim::{build_timeline, run_simulation, MetricsLog, SimConfig};
use satfl::strategy::StrategyKind;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let out = f();
    let took = t0.elapsed();
    let in_time = took <= budget;
    let pass = out.pass && in_time;
    println!(
        "criterion {n:2} {name:<34} {} | {} | {:.2}s (budget {}s{})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", exceeded" }
    );
    pass
}

fn desk(strategy: &str, stations: usize, seed: u64) -> SimConfig {
    SimConfig {
        constellation: ConstellationSpec::walker_star(2, 10),
        stations,
        strategy: strategy.parse::<StrategyKind>().unwrap(),
        horizon_s: 7.0 * 86_400.0,
        seed,
        dataset: "synthetic:classes=10".parse().unwrap(),
        ..Default::default()
    }
}

/// Runs are shared between criteria that use the same configuration.
struct Runs(BTreeMap<(String, usize, u64), MetricsLog>);

impl Runs {
    fn get(&mut self, strategy: &str, stations: usize, seed: u64) -> &MetricsLog {
        self.0
            .entry((strategy.to_string(), stations, seed))
            .or_insert_with(|| run_simulation(&desk(strategy, stations, seed)).expect("desk run"))
    }
}

fn c1_los_threshold() -> Outcome {
    let earth = EarthModel::default();
    let mut persistent = Vec::new();
    for n in 8..=11 {
        let spec = ConstellationSpec::walker_star(1, n);
        let sats = build_constellation(&spec, &earth).unwrap();
        let period = sats[0].1.period_s(&earth);
        let ok = (0..200).all(|i| {
            let t = period * i as f64 / 200.0;
            (0..n).all(|k| {
                let a = propagate(&sats[k].1, t, &earth);
                let b = propagate(&sats[(k + 1) % n].1, t, &earth);
                is_visible_intersat(&a, &b, &earth)
            })
        });
        // Closed form: the chord midpoint sits at r cos(pi / n).
        let analytic = (earth.radius_km + 500.0) * (PI / n as f64).cos() > earth.radius_km + earth.grazing_margin_km;
        persistent.push((n, ok, analytic));
    }
    let min_n = persistent.iter().find(|p| p.1).map(|p| p.0);
    let agree = persistent.iter().all(|p| p.1 == p.2);
    Outcome {
        pass: min_n == Some(10) && agree,
        detail: format!("minimum N = {min_n:?}; per N (sim, closed form) {persistent:?}"),
    }
}

fn c2_pass_envelope() -> Outcome {
    let cfg = SimConfig {
        constellation: ConstellationSpec::walker_star(10, 10),
        stations: 13,
        horizon_s: 3.0 * 86_400.0,
        ..Default::default()
    };
    let tl = build_timeline(&cfg).unwrap();
    let durations: Vec<f64> = tl.all_windows().iter().map(|w| w.end_s - w.start_s).collect();
    let in_range = durations.iter().all(|&d| d > 0.0 && d <= 900.0);
    let max_min = durations.iter().cloned().fold(0.0, f64::max) / 60.0;
    Outcome {
        pass: !durations.is_empty() && in_range && (max_min - 7.4).abs() <= 0.5,
        detail: format!(
            "{} windows, all in (0, 15 min]: {in_range}, longest {max_min:.3} min (want 7.4 +/- 0.5)",
            durations.len()
        ),
    }
}

/// Elevation from an Earth-fixed frame: the satellite is rotated into ECEF,
/// the station stays put.
fn ecef_elevation(orbit: &OrbitSpec, gs: &GroundStation, t: f64, earth: &EarthModel, gmst0: f64) -> f64 {
    let n = (earth.mu_km3_s2 / orbit.semi_major_axis_km.powi(3)).sqrt();
    let u = orbit.true_anomaly_epoch_rad + n * t;
    let r = orbit.semi_major_axis_km;
    // Perifocal -> inertial by Rz(raan) Rx(i).
    let p = [r * u.cos(), r * u.sin(), 0.0];
    let (si, ci) = orbit.inclination_rad.sin_cos();
    let q = [p[0], p[1] * ci - p[2] * si, p[1] * si + p[2] * ci];
    let (so, co) = orbit.raan_rad.sin_cos();
    let eci = [q[0] * co - q[1] * so, q[0] * so + q[1] * co, q[2]];
    let theta = gmst0 + earth.rotation_rate_rad_s * t;
    let (st, ct) = theta.sin_cos();
    let ecef = [eci[0] * ct + eci[1] * st, -eci[0] * st + eci[1] * ct, eci[2]];
    let (lat, lon) = (gs.lat_deg.to_radians(), gs.lon_deg.to_radians());
    let up = [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()];
    let rs = earth.radius_km + gs.alt_km;
    let d = [ecef[0] - rs * up[0], ecef[1] - rs * up[1], ecef[2] - rs * up[2]];
    let range = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    ((d[0] * up[0] + d[1] * up[1] + d[2] * up[2]) / range).asin()
}

fn c3_window_oracle() -> Outcome {
    let earth = EarthModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let catalog = builtin_catalog();
    let horizon = 86_400.0;
    let mut oracle_total = 0;
    let mut worst: f64 = 0.0;
    let mut unmatched = 0;
    for _ in 0..20 {
        let orbit = OrbitSpec::circular(
            earth.radius_km + 500.0,
            rng.random_range(0.0..PI),
            rng.random_range(0.0..TAU),
            rng.random_range(0.0..TAU),
        );
        let gs = catalog[rng.random_range(0..catalog.len())].clone();
        let cfg = ScanConfig {
            gmst0_rad: rng.random_range(0.0..TAU),
            ..ScanConfig::default()
        };
        let mask = gs.min_elev_deg.map_or(cfg.min_elev_rad, f64::to_radians);
        let got = scan_windows(satfl::orbital::SatelliteId::new(0, 0), &orbit, &gs, 0, (0.0, horizon), &cfg).unwrap();
        let mut oracle = Vec::new();
        let mut open: Option<f64> = None;
        for s in 0..=horizon as usize {
            let t = s as f64;
            let up = ecef_elevation(&orbit, &gs, t, &earth, cfg.gmst0_rad) >= mask;
            match (up, open) {
                (true, None) => open = Some(t),
                (false, Some(a)) => {
                    oracle.push((a, t - 1.0));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(a) = open {
            oracle.push((a, horizon));
        }
        oracle_total += oracle.len();
        for (a, b) in oracle {
            let best = got
                .iter()
                .map(|w| (w.start_s - a).abs().max((w.end_s - b).abs()))
                .fold(f64::INFINITY, f64::min);
            if best < 1.1 {
                worst = worst.max(best);
            } else {
                unmatched += 1;
            }
        }
    }
    Outcome {
        pass: unmatched == 0 && oracle_total > 0,
        detail: format!("{oracle_total} oracle windows, {unmatched} unmatched, worst edge error {worst:.3} s (< 1.1)"),
    }
}

fn c4_aggregation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut perm_ok = true;
    for _ in 0..1000 {
        let k = rng.random_range(1..8);
        let dim = rng.random_range(1..20);
        let ups: Vec<(ModelParams, usize)> = (0..k)
            .map(|_| {
                let w = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                (ModelParams::new(w), rng.random_range(1..500))
            })
            .collect();
        let got = aggregate_weighted(&ups).unwrap();
        let m: usize = ups.iter().map(|u| u.1).sum();
        let scale = ups.iter().flat_map(|u| u.0.values().iter()).fold(0.0f64, |a, v| a.max(v.abs()));
        for j in 0..dim {
            let brute: f64 = ups.iter().map(|(w, n)| *n as f64 * w.values()[j]).sum::<f64>() / m as f64;
            worst = worst.max((got.values()[j] - brute).abs() / scale);
        }
        let mut shuffled = ups.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        perm_ok &= aggregate_weighted(&shuffled).unwrap() == got;
    }
    Outcome {
        pass: worst <= 1e-12 && perm_ok,
        detail: format!("max relative error {worst:.2e} (<= 1e-12), permutation invariant: {perm_ok}"),
    }
}

fn c5_gradient_check() -> Outcome {
    let spec = ModelSpec::new(784, vec![8], 62).unwrap();
    let mlp = Mlp::new(spec.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for probe in 0..10 {
        let rows = 16;
        let features: Vec<f64> = (0..rows * 784).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels: Vec<u32> = (0..rows).map(|_| rng.random_range(0..62)).collect();
        let data = LocalDataset::new(features, 784, labels).unwrap();
        let idx: Vec<usize> = (0..rows).collect();
        let w0 = spec.init(probe).into_values();
        let anchor: Vec<f64> = w0.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect();
        // Even probes check plain SGD, odd ones the proximal step.
        let mu = if probe % 2 == 0 { 0.0 } else { 0.1 };
        let eta = 0.01;
        let mut w1 = w0.clone();
        let mut grad = vec![0.0; w0.len()];
        sgd_step(&mlp, &mut w1, &data, &idx, eta, mu, &anchor, &mut grad);
        let dir: Vec<f64> = (0..w0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let objective = |w: &[f64]| {
            let prox: f64 = w.iter().zip(&anchor).map(|(a, b)| (a - b) * (a - b)).sum();
            mlp.loss(w, &data, &idx) + 0.5 * mu * prox
        };
        let h = 1e-6;
        let plus: Vec<f64> = w0.iter().zip(&dir).map(|(w, d)| w + h * d).collect();
        let minus: Vec<f64> = w0.iter().zip(&dir).map(|(w, d)| w - h * d).collect();
        let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
        let step: f64 = w0.iter().zip(&w1).zip(&dir).map(|((a, b), d)| (a - b) / eta * d).sum();
        worst = worst.max((step - fd).abs() / fd.abs().max(1e-8));
    }
    Outcome {
        pass: worst <= 1e-4,
        detail: format!("max relative deviation over 10 probes {worst:.2e} (<= 1e-4)"),
    }
}

fn c6_convergence(runs: &mut Runs) -> Outcome {
    let accs: Vec<f64> = (0..5).map(|s| runs.get("fedavg:base", 13, s).max_accuracy()).collect();
    let above = accs.iter().filter(|&&a| a > 0.75).count();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    Outcome {
        pass: above >= 4 && mean >= 0.80,
        detail: format!("max accuracy per seed {accs:.3?}, mean {mean:.3} (>= 0.80), {above}/5 above 0.75"),
    }
}

fn mean_h(log: &MetricsLog) -> f64 {
    log.mean_round_duration_h().unwrap_or(f64::INFINITY)
}

fn c7_scheduler(runs: &mut Runs) -> Outcome {
    let base = mean_h(runs.get("fedavg:base", 13, 0));
    let sch = mean_h(runs.get("fedavg:schedule", 13, 0));
    Outcome {
        pass: sch <= 0.7 * base,
        detail: format!("FedAvgSch {sch:.3} h vs FedAvg {base:.3} h, ratio {:.3} (<= 0.7)", sch / base),
    }
}

fn c8_stations(runs: &mut Runs) -> Outcome {
    let d: Vec<(usize, f64)> = [1, 3, 5, 10, 13].iter().map(|&g| (g, mean_h(runs.get("fedavg:base", g, 0)))).collect();
    let by: BTreeMap<usize, f64> = d.iter().cloned().collect();
    let monotone = by[&1] > by[&3] && by[&3] > by[&5];
    let early = by[&1] - by[&5];
    let late = (by[&10] - by[&13]).abs();
    Outcome {
        pass: monotone && late < 0.2 * early,
        detail: format!(
            "mean round h by stations {d:.3?}; 1>3>5: {monotone}; |10->13| {late:.3} < 0.2 x (1->5) {:.3}",
            0.2 * early
        ),
    }
}

fn c9_idle(runs: &mut Runs) -> Outcome {
    let buff = runs.get("fedbuff:base", 13, 0).idle_fraction();
    let prox = runs.get("fedprox:base", 13, 0).idle_fraction();
    let avg = runs.get("fedavg:base", 13, 0).idle_fraction();
    Outcome {
        pass: buff < prox && prox < avg,
        detail: format!("idle fraction FedBuff {buff:.4} < FedProx {prox:.4} < FedAvg {avg:.4}"),
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_satfl")
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                let key = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c10_determinism(runs: &mut Runs) -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    let sweep_args = [
        "sweep",
        "--set",
        "horizon_days=1",
        "--set",
        "sweep.clusters=[1,2]",
        "--set",
        "sweep.sats_per_cluster=[2]",
        "--set",
        "sweep.stations=[3]",
        "--set",
        "sweep.seeds=[0,1]",
    ];
    let run_args = ["run", "--set", "horizon_days=2", "--set", "strategy=fedprox:schedule_v2", "--seed", "3"];
    for (label, args) in [("sweep", &sweep_args[..]), ("run", &run_args[..])] {
        let mut trees = Vec::new();
        for rep in 0..2 {
            let dir = tmp.path().join(format!("{label}{rep}"));
            let status = Command::new(bin()).args(args).arg("--out-dir").arg(&dir).output().unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            trees.push(files_under(&dir));
        }
        let same = trees[0] == trees[1] && !trees[0].is_empty();
        pass &= same;
        details.push(format!("{label}: {} csv files identical {same}", trees[0].len()));
    }
    let mut again = Vec::new();
    let mut first = Vec::new();
    write_line_csv(runs.get("fedavg:base", 13, 0), &[], &mut first).unwrap();
    write_line_csv(&run_simulation(&desk("fedavg:base", 13, 0)).unwrap(), &[], &mut again).unwrap();
    let lib_same = first == again;
    pass &= lib_same;
    details.push(format!("in-process rerun identical {lib_same}"));
    Outcome {
        pass,
        detail: details.join("; "),
    }
}

fn c11_sweep_shape() -> Outcome {
    let out = Command::new(bin())
        .args(["sweep", "--profile", "paper", "--dry-run"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let cells: Vec<&str> = text.lines().filter(|l| l.starts_with('c')).collect();
    let mut per_geometry: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for c in &cells {
        let parts: Vec<&str> = c.splitn(4, '_').collect();
        per_geometry.entry(parts[..3].join("_")).or_default().insert(parts[3].to_string());
    }
    let expected: BTreeSet<String> = [
        "fedavg-base",
        "fedavg-schedule",
        "fedavg-intra_cc",
        "fedprox-base",
        "fedprox-schedule",
        "fedprox-schedule_v2",
        "fedprox-intra_cc",
        "fedbuff-base",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let matrix_ok = per_geometry.len() == 96 && per_geometry.values().all(|v| *v == expected);
    Outcome {
        pass: out.status.success() && cells.len() == 768 && matrix_ok,
        detail: format!(
            "{} cells over {} geometries, 8-variant matrix everywhere: {matrix_ok}",
            cells.len(),
            per_geometry.len()
        ),
    }
}

fn main() {
    // `cargo test -- <filter>` passes arguments through; a filter that does not name
    // this suite skips it.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let _ = station_subset(&builtin_catalog(), 13).unwrap();
    let mut runs = Runs(BTreeMap::new());
    let s = Duration::from_secs;
    let results = [
        report(1, "LOS cluster threshold", s(1), c1_los_threshold),
        report(2, "pass-duration envelope", s(30), c2_pass_envelope),
        report(3, "window oracle equivalence", s(120), c3_window_oracle),
        report(4, "aggregation correctness", s(5), c4_aggregation),
        report(5, "gradient check", s(30), c5_gradient_check),
        report(6, "desk-scale convergence", s(600), || c6_convergence(&mut runs)),
        report(7, "scheduler speedup", s(600), || c7_scheduler(&mut runs)),
        report(8, "ground-station monotonicity", s(1200), || c8_stations(&mut runs)),
        report(9, "idle-time ordering", s(600), || c9_idle(&mut runs)),
        report(10, "determinism", s(600), || c10_determinism(&mut runs)),
        report(11, "sweep-shape fidelity", s(1), c11_sweep_shape),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
