//! Acceptance checks. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line; exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use powertalk::adaptive::{build_policy, policy_average_ser};
use powertalk::circuit::{bus_voltage, bus_voltage_thevenin, thevenin};
use powertalk::constellation::{segments_intersect, Family};
use powertalk::detection::{
    average_ser, conditional_ser, estimate_channel_state, estimate_line, mld_decide, DetectedLine,
    LineDistribution, SamplingConfig,
};
use powertalk::montecarlo::{run, training_experiment, loglog_slope, McSettings, Mode, Scheme, SimulationSpec, TrainingSettings};
use powertalk::signaling::power_deviation;
use powertalk::{Constellation, LoadModel, SystemConfig, VscParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Binomial standard error under the analytic error rate.
fn null_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let tx = VscParams::new(rng.gen_range(300.0..500.0), rng.gen_range(0.05..5.0)).unwrap();
        let rx = VscParams::new(rng.gen_range(300.0..500.0), rng.gen_range(0.05..5.0)).unwrap();
        let r = rng.gen_range(1.0..200.0);
        let direct = bus_voltage(tx, rx, r).unwrap();
        let reduced = bus_voltage_thevenin(tx, thevenin(rx, r).unwrap()).unwrap();
        worst = worst.max((direct - reduced).abs());
    }
    check(worst < 1e-9, format!("max |direct - thevenin| = {worst:.3e} V over 1e4 draws"))
}

fn criterion_2() -> Outcome {
    let sigma = 0.1;
    let n = 100;
    let sampling = SamplingConfig::new(0.1 * (n as f64 / 2.0).sqrt(), n);
    let cfg = SystemConfig::default();
    let state = cfg.state_at(37.0).unwrap();
    let sym = VscParams::new(401.0, 0.45).unwrap();
    let v = cfg.v_star(sym, 37.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let slots = 100_000;
    let mut samples = vec![0.0; n];
    let (mut ks, mut ns) = (Vec::with_capacity(slots), Vec::with_capacity(slots));
    for _ in 0..slots {
        for x in samples.iter_mut() {
            *x = v + sampling.sigma_m * rng.sample::<f64, _>(StandardNormal);
        }
        let line = estimate_line(&samples, state).unwrap();
        ks.push(line.k);
        ns.push(line.n);
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let var = |x: &[f64], m: f64| x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (x.len() - 1) as f64;
    let (mk, mn) = (mean(&ks), mean(&ns));
    let (vk, vn) = (var(&ks, mk), var(&ns, mn));
    let cov = ks.iter().zip(&ns).map(|(a, b)| (a - mk) * (b - mn)).sum::<f64>() / (slots - 1) as f64;
    let corr = cov / (vk * vn).sqrt();
    let (ek, en) = ((v - state.g) / state.h, v);
    let (evk, evn) = (sigma * sigma / (state.h * state.h), sigma * sigma);
    let zk = (mk - ek).abs() / (evk / slots as f64).sqrt();
    let zn = (mn - en).abs() / (evn / slots as f64).sqrt();
    let rk = (vk / evk - 1.0).abs();
    let rn = (vn / evn - 1.0).abs();
    check(
        zk < 3.0 && zn < 3.0 && rk < 0.05 && rn < 0.05 && corr.abs() < 0.01 && (sampling.sigma() - sigma).abs() < 1e-15,
        format!("mean z (k, n) = ({zk:.2}, {zn:.2}); var rel err ({rk:.4}, {rn:.4}); corr {corr:.4}"),
    )
}

fn criterion_3() -> Outcome {
    let mut cfg = SystemConfig::default();
    let r = 40.0;
    cfg.load = LoadModel::point(r).unwrap();
    let state = cfg.state_at(r).unwrap();
    let hi = cfg.pilot;
    // lower v_a so that the bus voltages differ by exactly 0.2 V
    let dv_a = 0.2 * (state.h + hi.r_d) / state.h;
    let lo = VscParams::new(hi.v - dv_a, hi.r_d).unwrap();
    let gap = cfg.v_star(hi, r).unwrap() - cfg.v_star(lo, r).unwrap();
    let c = Constellation::custom(vec![hi, lo], &cfg).unwrap();
    let oracle = 0.5 * libm::erfc(1.0);
    let frozen = 0.078_649_603_525_142_51;
    let trials = 1_000_000;
    let settings = McSettings {
        trials,
        seed: 303,
        mode: Mode::Direct,
        ..McSettings::default()
    };
    let res = run(&SimulationSpec::new(cfg, Scheme::Constellation(c), settings)).unwrap();
    let se = null_se(oracle, trials);
    let z = (res.ser - oracle).abs() / se;
    check(
        z < 3.0 && (oracle - frozen).abs() < 1e-15 && (gap - 0.2).abs() < 1e-9,
        format!("empirical {:.6} vs Q(sqrt 2) = {oracle:.6}, |z| = {z:.2}", res.ser),
    )
}

fn criterion_4() -> Outcome {
    let cfg = SystemConfig::default();
    let trials = 1_000_000;
    let mut worst_z = 0.0f64;
    let mut parts = Vec::new();
    for (k, family) in Family::DESIGNED.into_iter().enumerate() {
        for (j, m) in [2usize, 4, 8].into_iter().enumerate() {
            let c = Constellation::design(family, m, &cfg).unwrap();
            let analytic = average_ser(&c, &cfg).unwrap();
            let settings = McSettings {
                trials,
                block_length: 1,
                seed: 400 + (3 * k + j) as u64,
                mode: Mode::Raw,
                ..McSettings::default()
            };
            let res = run(&SimulationSpec::new(cfg.clone(), Scheme::Constellation(c), settings)).unwrap();
            let se = null_se(analytic, trials);
            let z = if se > 0.0 { (res.ser - analytic).abs() / se } else { 0.0 };
            worst_z = worst_z.max(z);
            parts.push(format!("{family}/M{m} {:.4e}~{analytic:.4e}", res.ser));
        }
    }
    check(worst_z < 3.0, format!("worst |z| = {worst_z:.2}; {}", parts.join(", ")))
}

fn criterion_5() -> Outcome {
    let base = SystemConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let designs: Vec<Constellation> = Family::DESIGNED
        .into_iter()
        .flat_map(|f| [2usize, 3, 4, 8].map(|m| Constellation::design(f, m, &base).unwrap()))
        .collect();
    let mut mismatches = 0;
    let mut ties = 0;
    for t in 0..100_000 {
        let c = &designs[t % designs.len()];
        let r = rng.gen_range(base.load.r_min..=base.load.r_max);
        let state = base.state_at(r).unwrap();
        let sigma = rng.gen_range(0.01..0.5);
        let outputs = c.outputs(state);
        let sent = rng.gen_range(0..c.len());
        let line = DetectedLine {
            n: outputs[sent] + sigma * rng.sample::<f64, _>(StandardNormal),
            k: (outputs[sent] + sigma * rng.sample::<f64, _>(StandardNormal) - state.g) / state.h,
        };
        // brute force: best log-likelihood, equal scores resolved toward the
        // higher bus voltage, then the lower index
        let mut best = 0;
        let mut best_ll = f64::NEG_INFINITY;
        for (i, &v) in outputs.iter().enumerate() {
            let ll = LineDistribution::new(v, state, sigma).log_density(line);
            let better = ll > best_ll || (ll == best_ll && v > outputs[best]);
            if better {
                if ll == best_ll {
                    ties += 1;
                }
                best = i;
                best_ll = ll;
            }
        }
        if mld_decide(line, c, state) != best {
            mismatches += 1;
        }
    }
    // statistic placed exactly on every boundary: the higher-voltage symbol wins
    let mut boundary_errors = 0;
    for c in &designs {
        let state = base.state_at(55.0).unwrap();
        let outputs = c.outputs(state);
        let mut order: Vec<usize> = (0..c.len()).collect();
        order.sort_by(|&a, &b| outputs[b].total_cmp(&outputs[a]));
        for w in order.windows(2) {
            let line = DetectedLine {
                n: outputs[w[0]],
                k: (outputs[w[1]] - state.g) / state.h,
            };
            if mld_decide(line, c, state) != w[0] {
                boundary_errors += 1;
            }
        }
    }
    check(
        mismatches == 0 && boundary_errors == 0,
        format!("{mismatches} disagreements in 1e5 trials ({ties} likelihood ties); {boundary_errors} boundary-rule violations"),
    )
}

fn criterion_6() -> Outcome {
    let cfg = SystemConfig::default();
    let scan: Vec<f64> = (0..=10_000)
        .map(|i| cfg.load.r_min + (cfg.load.r_max - cfg.load.r_min) * i as f64 / 10_000.0)
        .collect();
    let mut crossings = 0;
    for family in [Family::FixedVa, Family::FixedRda] {
        for m in [2usize, 4, 8, 16] {
            let c = Constellation::design(family, m, &cfg).unwrap();
            let outs: Vec<Vec<f64>> = scan.iter().map(|&r| c.outputs(cfg.state_at(r).unwrap())).collect();
            for i in 0..m {
                for j in i + 1..m {
                    let d0 = outs[0][i] - outs[0][j];
                    if outs.iter().any(|o| (o[i] - o[j]) * d0 <= 0.0) {
                        crossings += 1;
                    }
                }
            }
            crossings += segments_intersect(&c, &cfg).unwrap().len();
        }
    }
    let mut spread_worst = 0.0f64;
    let mut ser_gap_worst = 0.0f64;
    let mut all_pairs = true;
    for m in [4usize, 8] {
        let c = Constellation::design(Family::Diagonal, m, &cfg).unwrap();
        let xs = segments_intersect(&c, &cfg).unwrap();
        all_pairs &= xs.len() == m * (m - 1) / 2;
        let lo = xs.iter().map(|x| x.r_star).fold(f64::INFINITY, f64::min);
        let hi = xs.iter().map(|x| x.r_star).fold(f64::NEG_INFINITY, f64::max);
        spread_worst = spread_worst.max(hi - lo);
        let r_star = 0.5 * (lo + hi);
        let p = conditional_ser(&c, &cfg, r_star, cfg.sampling.sigma()).unwrap();
        ser_gap_worst = ser_gap_worst.max((p - (m as f64 - 1.0) / m as f64).abs());
    }
    check(
        crossings == 0 && all_pairs && spread_worst < 1e-6 && ser_gap_worst < 1e-6,
        format!(
            "fixed-va/fixed-rda crossings {crossings}; diagonal all pairs cross: {all_pairs}; \
             r* spread {spread_worst:.3e} ohm (need < 1e-6); |P(e|r*) - (M-1)/M| = {ser_gap_worst:.3e}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = SystemConfig::default();
    let mut worst_end = 0.0f64;
    let mut worst_excess = f64::NEG_INFINITY;
    for family in Family::DESIGNED {
        for m in [2usize, 3, 4, 8, 16] {
            let c = Constellation::design(family, m, &cfg).unwrap();
            let key = |s: &VscParams| if family == Family::FixedRda { s.v } else { s.r_d };
            let mut sorted = c.symbols.clone();
            sorted.sort_by(|a, b| key(a).total_cmp(&key(b)));
            for s in [sorted[0], sorted[m - 1]] {
                worst_end = worst_end.max((power_deviation(s, &cfg).unwrap() - cfg.gamma).abs());
            }
            for s in &sorted {
                worst_excess = worst_excess.max(power_deviation(*s, &cfg).unwrap() - cfg.gamma);
            }
        }
    }
    let pilot = power_deviation(cfg.pilot, &cfg).unwrap();
    check(
        worst_end < 1e-6 && worst_excess <= 1e-12 && pilot < 1e-12,
        format!("max endpoint |delta - gamma| = {worst_end:.3e}; max delta - gamma = {worst_excess:.3e}; delta(pilot) = {pilot:.1e}"),
    )
}

fn criterion_8() -> Outcome {
    let cfg = SystemConfig::default();
    let m = 8;
    let resolution = 2001;
    let cs: Vec<Constellation> = Family::DESIGNED
        .into_iter()
        .map(|f| Constellation::design(f, m, &cfg).unwrap())
        .collect();
    let p = build_policy(cs.clone(), &cfg, resolution).unwrap();
    let sigma = cfg.sampling.sigma();
    let fine = 10 * (resolution - 1) + 1;
    let mut worst = 0.0f64;
    for i in 0..fine {
        let r = cfg.load.r_min + (cfg.load.r_max - cfg.load.r_min) * i as f64 / (fine - 1) as f64;
        let min = cs
            .iter()
            .map(|c| conditional_ser(c, &cfg, r, sigma).unwrap())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((p.conditional_ser(&cfg, r).unwrap() - min).abs());
    }
    let pe = policy_average_ser(&p, &cfg).unwrap();
    let consts: Vec<f64> = cs.iter().map(|c| average_ser(c, &cfg).unwrap()).collect();
    let bound = consts.iter().all(|&a| pe <= a + 1e-11);
    let trials = 1_000_000;
    let settings = McSettings {
        trials,
        block_length: 1,
        seed: 808,
        mode: Mode::Direct,
        ..McSettings::default()
    };
    let res = run(&SimulationSpec::new(cfg, Scheme::Policy(p.clone()), settings)).unwrap();
    let z = (res.ser - pe).abs() / null_se(pe, trials);
    check(
        worst <= 1e-12 && bound && z < 3.0,
        format!(
            "{} thresholds; max |policy - min| = {worst:.1e} on {fine} points; P_e {pe:.5} vs constituents {:?}; MC {:.5} |z| = {z:.2}",
            p.thresholds_r.len(),
            consts.iter().map(|x| format!("{x:.5}")).collect::<Vec<_>>(),
            res.ser
        ),
    )
}

fn criterion_9() -> Outcome {
    let cfg = SystemConfig::default();
    let a = VscParams::new(400.0, 0.5).unwrap();
    let b = VscParams::new(398.0, 0.62).unwrap();
    let mut worst_rel = 0.0f64;
    for r in [10.0, 23.0, 55.5, 100.0] {
        let truth = cfg.state_at(r).unwrap();
        let pairs = [(a, cfg.v_star(a, r).unwrap()), (b, cfg.v_star(b, r).unwrap())];
        let est = estimate_channel_state(&pairs).unwrap();
        worst_rel = worst_rel
            .max(((est.g - truth.g) / truth.g).abs())
            .max(((est.h - truth.h) / truth.h).abs());
    }
    let settings = TrainingSettings {
        symbols: vec![a, VscParams::new(398.0, 0.5).unwrap(), VscParams::new(402.0, 0.6).unwrap()],
        load: 40.0,
        n_list: vec![100, 1_000, 10_000, 100_000],
        reps: 1000,
        seed: 909,
        workers: None,
    };
    let rows = training_experiment(&cfg, &settings).unwrap();
    let n: Vec<f64> = rows.iter().map(|r| r.n_samples as f64).collect();
    let g_slope = loglog_slope(&n, &rows.iter().map(|r| r.g_std).collect::<Vec<_>>());
    let h_slope = loglog_slope(&n, &rows.iter().map(|r| r.h_std).collect::<Vec<_>>());
    check(
        worst_rel < 1e-9 && (g_slope + 0.5).abs() <= 0.05 && (h_slope + 0.5).abs() <= 0.05,
        format!("noiseless rel err {worst_rel:.1e}; std slopes g {g_slope:.4}, h {h_slope:.4}"),
    )
}

fn criterion_10() -> Outcome {
    let cfg = SystemConfig::default();
    let ms = [2usize, 3, 4, 5, 6, 8, 10, 12, 16];
    let table: Vec<Vec<f64>> = Family::DESIGNED
        .into_iter()
        .map(|f| {
            ms.iter()
                .map(|&m| average_ser(&Constellation::design(f, m, &cfg).unwrap(), &cfg).unwrap())
                .collect()
        })
        .collect();
    let monotone = table.iter().all(|row| row.windows(2).all(|w| w[1] >= w[0]));
    let va_worst = (0..ms.len()).all(|j| table[0][j] > table[1][j] && table[0][j] > table[2][j]);
    let last = ms.len() - 1;
    check(
        monotone && va_worst,
        format!(
            "nondecreasing in M: {monotone}; fixed-va worst for M in {ms:?}: {va_worst} (M=16: {:.4}, {:.4}, {:.4})",
            table[0][last], table[1][last], table[2][last]
        ),
    )
}

fn run_cli(dir: &Path, config: &Path, workers: usize, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_powertalk"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(dir)
        .env("POWERTALK_WORKERS", workers.to_string())
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_11() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let default_cfg = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.cfg")).unwrap();
    let small = default_cfg
        .lines()
        .filter(|l| !l.starts_with("trials") && !l.starts_with("training_n_list") && !l.starts_with("training_reps"))
        .collect::<Vec<_>>()
        .join("\n")
        + "\ntrials = 50000\ntraining_n_list = 100, 1000\ntraining_reps = 300\n";
    let config = tmp.path().join("scenario.cfg");
    std::fs::write(&config, small).unwrap();
    let commands: [&[&str]; 6] = [
        &["space"],
        &["design", "--family", "diagonal", "--M", "8"],
        &["ser", "--family", "fixed-rda", "--mode", "both", "--seed", "17"],
        &["ser", "--family", "adaptive", "--mode", "both", "--M", "8"],
        &["thresholds", "--M", "8"],
        &["estimate", "--seed", "5"],
    ];
    let mut runs = Vec::new();
    for (tag, workers) in [("a", 1), ("b", 4), ("c", 4)] {
        let out = tmp.path().join(tag);
        let ok = commands.iter().all(|args| run_cli(&out, &config, workers, args));
        if !ok {
            return check(false, format!("a command failed with {workers} workers"));
        }
        runs.push(snapshot(&out));
    }
    let files = runs[0].len();
    check(
        files > 0 && runs[0] == runs[1] && runs[1] == runs[2],
        format!("{files} CSV files byte-identical across 1 and 4 workers and repeated runs"),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Outcome, Duration); 11] = [
        (1, criterion_1, Duration::from_secs(1)),
        (2, criterion_2, Duration::from_secs(10)),
        (3, criterion_3, Duration::from_secs(30)),
        (4, criterion_4, Duration::from_secs(300)),
        (5, criterion_5, Duration::from_secs(10)),
        (6, criterion_6, Duration::MAX),
        (7, criterion_7, Duration::MAX),
        (8, criterion_8, Duration::MAX),
        (9, criterion_9, Duration::MAX),
        (10, criterion_10, Duration::MAX),
        (11, criterion_11, Duration::MAX),
    ];
    let mut failed = Vec::new();
    for (n, f, limit) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let in_time = elapsed < limit;
        let pass = outcome.pass && in_time;
        let budget = if limit == Duration::MAX {
            String::new()
        } else {
            format!(" (limit {:.0} s)", limit.as_secs_f64())
        };
        println!(
            "criterion {n:>2}: {} [{:.2} s{budget}] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
        if !pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 11 criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
