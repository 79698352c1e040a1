//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nsum_core::analytic::{
    bias_scaled, bias_sign_region, expect_general, winner_grid, BiasSign, ClosedForm, GridFixed, GridPreset,
    LinkProbabilities, Metric, Winner,
};
use nsum_core::estimators::EstimatorKind;
use nsum_core::montecarlo::{
    hypergeom_check, run_case, s1_degree_mc_check, s1_prevalence_mc_check, s1_random_orderings, validate_analytic,
    RunOptions, SyntheticDesign, ValidationConfig, ValidationReport,
};
use nsum_core::netgen::BlockParams;
use nsum_core::seed;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

type Check = fn() -> Verdict;

struct Timed {
    report: ValidationReport,
    elapsed: Duration,
}

const N_TOTAL: usize = 20_000;
const N_PROBE: usize = 2_000;
const SAMPLE: usize = 500;
const REPS: usize = 2_000;

fn moment_run(a: f64, r: f64, salt: u64) -> Timed {
    let start = Instant::now();
    let nh = (N_TOTAL as f64 * r).round() as usize;
    let params = BlockParams::scaled(N_TOTAL, nh, a, 0.01).unwrap();
    let report = validate_analytic(&ValidationConfig::new(params, SAMPLE, N_PROBE, REPS, seed::mix(1, salt))).unwrap();
    Timed {
        report,
        elapsed: start.elapsed(),
    }
}

fn unit_scale_runs() -> &'static [Timed] {
    static RUNS: OnceLock<Vec<Timed>> = OnceLock::new();
    RUNS.get_or_init(|| {
        [0.05, 0.25, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &r)| moment_run(1.0, r, i as u64))
            .collect()
    })
}

fn scaled_run() -> &'static Timed {
    static RUN: OnceLock<Timed> = OnceLock::new();
    RUN.get_or_init(|| moment_run(2.0, 0.25, 100))
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn er_unbiasedness() -> Verdict {
    let runs = unit_scale_runs();
    let mut pass = true;
    let mut parts = Vec::new();
    let mut total = Duration::ZERO;
    for t in runs {
        let r = t.report.config.params.n_hidden as f64 / N_TOTAL as f64;
        total += t.elapsed;
        for name in ["dRpR", "dRpA"] {
            let e = t.report.estimator(name).unwrap();
            let ok = (e.mc_mean - r).abs() <= 3.0 * e.mc_se;
            pass &= ok;
            parts.push(format!("R={r} {name} mean {:.5} z {:.1}", e.mc_mean, (e.mc_mean - r) / e.mc_se));
        }
        let ratio = t.report.cross_variance_ratio;
        pass &= (0.9..=1.1).contains(&ratio);
        parts.push(format!("R={r} var ratio {ratio:.3}"));
    }
    pass &= total < Duration::from_secs(60);
    parts.push(format!("{:.1}s", secs(total)));
    Verdict {
        pass,
        detail: parts.join("; "),
    }
}

fn scaled_bias() -> Verdict {
    // dRpR: R (R a p + (1-R) p) / (R p + (1-R) a p); dRpA: R (R a + (1-R) / a)
    let (a, r): (f64, f64) = (2.0, 0.25);
    let oracle_drpr = r * (r * a + (1.0 - r)) / (r + (1.0 - r) * a);
    let oracle_drpa = r * (r * a + (1.0 - r) / a);
    let probs = LinkProbabilities::scaled(a, 0.01);
    let mut pass = (oracle_drpr - 0.17857).abs() < 5e-6 && oracle_drpa == 0.21875;
    let mut parts = Vec::new();
    let t = scaled_run();
    for (kind, oracle) in [(ClosedForm::DRpR, oracle_drpr), (ClosedForm::DRpA, oracle_drpa)] {
        let expected: f64 = expect_general(kind, &probs, r).unwrap();
        pass &= (expected - oracle).abs() < 1e-12;
        let e = t.report.estimator(&kind.to_string()).unwrap();
        let z = (e.mc_mean - expected) / e.mc_se;
        pass &= z.abs() <= 3.0;
        parts.push(format!("{kind} mean {:.5} vs {expected:.5} z {z:.1}", e.mc_mean));
    }
    pass &= t.elapsed < Duration::from_secs(60);
    parts.push(format!("{:.1}s", secs(t.elapsed)));
    Verdict {
        pass,
        detail: parts.join("; "),
    }
}

fn variance_formulas() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut total = Duration::ZERO;
    let scaled = scaled_run();
    let mut runs: Vec<(&Timed, f64)> = vec![(scaled, 0.25)];
    runs.extend(unit_scale_runs().iter().map(|t| (t, 0.10)));
    for (t, tol) in runs {
        total += t.elapsed;
        let a = t.report.config.params.p_hh / t.report.config.params.p_hl;
        let r = t.report.config.params.n_hidden as f64 / N_TOTAL as f64;
        for name in ["dRpR", "dRpA"] {
            let e = t.report.estimator(name).unwrap();
            let ratio = e.mc_variance / e.expected_variance;
            pass &= (ratio - 1.0).abs() <= tol;
            parts.push(format!("a={a} R={r} {name} {ratio:.3}"));
        }
    }
    pass &= total < Duration::from_secs(60);
    parts.push(format!("{:.1}s", secs(total)));
    Verdict {
        pass,
        detail: parts.join("; "),
    }
}

fn sign_regions() -> Verdict {
    let start = Instant::now();
    let mut rng = seed::rng(4);
    let mut disagreements = 0;
    for _ in 0..10_000 {
        let a = rng.random_range(-5.0f64..5.0).exp();
        let r = rng.random_range(1e-4f64..1.0);
        for kind in ClosedForm::BOTH {
            let b = bias_scaled(kind, a, r);
            let expected = if b > 0.0 {
                BiasSign::Positive
            } else if b < 0.0 {
                BiasSign::Negative
            } else {
                BiasSign::Zero
            };
            if bias_sign_region(kind, a, r) != expected {
                disagreements += 1;
            }
        }
    }
    let mut boundary_ok = true;
    for r in [0.05, 0.25, 0.5, 0.9] {
        boundary_ok &= bias_sign_region(ClosedForm::DRpR, 1.0, r) == BiasSign::Zero;
        boundary_ok &= bias_scaled(ClosedForm::DRpR, 1.0, r) == 0.0;
    }
    for a in [0.5, 3.0, 17.0] {
        boundary_ok &= bias_sign_region(ClosedForm::DRpR, a, 0.5) == BiasSign::Zero;
        boundary_ok &= bias_scaled(ClosedForm::DRpR, a, 0.5) == 0.0;
    }
    for r in [0.1, 0.3, 0.7] {
        boundary_ok &= bias_sign_region(ClosedForm::DRpA, (1.0 - r) / r, r) == BiasSign::Zero;
    }
    for (a, r) in [(3.0, 0.25), (7.0, 0.125), (1.0 / 3.0, 0.75)] {
        boundary_ok &= bias_sign_region(ClosedForm::DRpA, a, r) == BiasSign::Zero;
    }
    for (a, r) in [(3.0, 0.25), (7.0, 0.125)] {
        boundary_ok &= bias_scaled(ClosedForm::DRpA, a, r) == 0.0;
    }
    let elapsed = start.elapsed();
    Verdict {
        pass: disagreements == 0 && boundary_ok && elapsed < Duration::from_secs(1),
        detail: format!(
            "{disagreements} disagreements over 20000 sign evaluations; boundaries {}; {:.3}s",
            if boundary_ok { "exact" } else { "off" },
            secs(elapsed)
        ),
    }
}

fn grid(preset: GridPreset, p: f64, nn: f64) -> nsum_core::analytic::WinnerGrid<f64> {
    let (la, r) = preset.axes::<f64>();
    winner_grid(GridFixed::new(p, 0.1, nn).unwrap(), la, r)
}

fn winner_pattern() -> Verdict {
    let start = Instant::now();
    let bottom = grid(GridPreset::Fig1Bottom, 0.01, 5e5);
    let top = grid(GridPreset::Fig1Top, 0.01, 5e5);
    let mut region = 0;
    let mut region_bad = 0;
    for c in &bottom.cells {
        if c.log_a >= 0.5 - 1e-9 && c.log_a <= 2.0 + 1e-9 && c.r <= 0.05 + 1e-12 {
            region += 1;
            if c.rmse_winner != Winner::DRpA {
                region_bad += 1;
            }
        }
    }
    let mut line = 0;
    let mut line_bad = 0;
    for c in bottom.cells.iter().chain(&top.cells).filter(|c| c.log_a.abs() < 1e-9) {
        line += 1;
        if c.rmse_winner != Winner::Tie {
            line_bad += 1;
        }
    }
    let elapsed = start.elapsed();
    Verdict {
        pass: region > 0 && region_bad == 0 && line > 0 && line_bad == 0 && elapsed < Duration::from_secs(10),
        detail: format!(
            "{region_bad}/{region} region cells not dRpA; {line_bad}/{line} log a = 0 cells not tied; {:.2}s",
            secs(elapsed)
        ),
    }
}

fn monotone_in_sample_volume() -> Verdict {
    let start = Instant::now();
    let counts: Vec<usize> = [5e3, 5e4, 5e5, 5e6]
        .iter()
        .map(|&nn| grid(GridPreset::Fig1Top, 0.01, nn).count(Metric::Rmse, Winner::DRpA))
        .collect();
    let sparse = grid(GridPreset::Fig1Top, 0.001, 5e5).count(Metric::Rmse, Winner::DRpA);
    let monotone = counts.windows(2).all(|w| w[0] <= w[1]);
    let elapsed = start.elapsed();
    Verdict {
        pass: monotone && sparse < counts[2] && elapsed < Duration::from_secs(60),
        detail: format!(
            "dRpA RMSE wins {counts:?} over nN 5e3..5e6; p=0.001 at 5e5: {sparse}; {:.2}s",
            secs(elapsed)
        ),
    }
}

fn s1_orderings() -> Verdict {
    let start = Instant::now();
    let sweep = s1_random_orderings(1000, seed::mix(1, 300)).unwrap();
    let prev = s1_prevalence_mc_check(&[10, 20], 0.2, 1_000_000, seed::mix(1, 301)).unwrap();
    let deg = s1_degree_mc_check(10, 1000, &[100, 50], 1_000_000, seed::mix(1, 302)).unwrap();
    let elapsed = start.elapsed();
    Verdict {
        pass: sweep.pass() && prev.pass && deg.pass && elapsed < Duration::from_secs(120),
        detail: format!(
            "violations {}/{} prevalence, {}/{} degree; spot z prevalence {:.2}/{:.2}, degree {:.2}/{:.2}; {:.1}s",
            sweep.prevalence_violations,
            sweep.prevalence_checked,
            sweep.degree_violations,
            sweep.degree_checked,
            prev.roa.z,
            prev.aor.z,
            deg.roa.z,
            deg.aor.z,
            secs(elapsed)
        ),
    }
}

fn hypergeometric() -> Verdict {
    let start = Instant::now();
    let rep = hypergeom_check(30, 10, 0.3, 8, false, 1_000_000, seed::mix(1, 200)).unwrap();
    let elapsed = start.elapsed();
    Verdict {
        pass: rep.tv_distance < 0.02 && elapsed < Duration::from_secs(60),
        detail: format!("TV {:.5} over {} hits; {:.1}s", rep.tv_distance, rep.n_hits, secs(elapsed)),
    }
}

fn single_probe_identity() -> Verdict {
    let design = SyntheticDesign {
        block: BlockParams::scaled(3000, 150, 2.0, 0.006).unwrap(),
        n_probes: 1,
        probe_size: 120,
        probes_within_rest: false,
        sample_size: 300,
        n_surveys: 100,
        seed: 9,
    };
    let (net, case) = design.build(0).unwrap();
    let (_, log) = run_case(&net, &case, &[EstimatorKind::DRpA, EstimatorKind::DApA], RunOptions::default()).unwrap();
    let mut identical = 0;
    for pair in log.chunks(2) {
        if pair[0].outcome.value.to_bits() == pair[1].outcome.value.to_bits() && pair[0].outcome.flag == pair[1].outcome.flag {
            identical += 1;
        }
    }
    Verdict {
        pass: identical == 100 && log.len() == 200,
        detail: format!("{identical}/100 surveys bit-identical"),
    }
}

fn directional_synthetic() -> Verdict {
    let start = Instant::now();
    let mut wins = 0;
    let mut low_ratio = 0;
    let mut ratios = Vec::new();
    for c in 0..20usize {
        let cf = c as f64;
        let n = 3000 + 100 * c;
        let r = 0.02 + 0.002 * cf;
        let a = 2.0 + 0.15 * cf;
        let p = 40.0 / (n as f64 * (r + (1.0 - r) * a));
        let design = SyntheticDesign {
            block: BlockParams::scaled(n, (n as f64 * r).round() as usize, a, p).unwrap(),
            n_probes: 15,
            probe_size: n / 50,
            probes_within_rest: false,
            sample_size: 500,
            n_surveys: 500,
            seed: seed::mix(10, c as u64),
        };
        let (net, case) = design.build(c).unwrap();
        let (res, _) = run_case(&net, &case, &EstimatorKind::STANDARD, RunOptions::default()).unwrap();
        let ratio = res.degree_ratio.unwrap_or(f64::NAN);
        ratios.push(ratio);
        if ratio < 0.8 {
            low_ratio += 1;
        }
        let rel = |k| res.summary(k).unwrap().rel_rmse;
        if rel(EstimatorKind::DRpA) < rel(EstimatorKind::DRpR) {
            wins += 1;
        }
    }
    let elapsed = start.elapsed();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    Verdict {
        pass: low_ratio == 20 && wins >= 18 && elapsed < Duration::from_secs(300),
        detail: format!(
            "dRpA wins {wins}/20; degree ratios {lo:.2}..{hi:.2} ({low_ratio}/20 below 0.8); {:.1}s",
            secs(elapsed)
        ),
    }
}

fn nsum(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_nsum"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn output_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "manifest.json") {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn write_attrs(path: &Path, n: usize) {
    let mut text = String::from("node_id,club,year\n");
    for i in 0..n {
        let club = if i % 3 == 0 { format!("c{}", i % 24) } else { String::new() };
        text.push_str(&format!("{i},{club},y{}\n", i % 4));
    }
    fs::write(path, text).unwrap();
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let gen = s(root.join("gen-1"));
    let edges = s(root.join("gen-1/edges.csv"));
    let attrs = root.join("attrs.csv");
    write_attrs(&attrs, 1200);
    let attrs = s(attrs);
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("generate", ["generate", "--n", "1200", "--nh", "80", "--a", "2", "--p", "0.02", "--seed", "5"].map(String::from).to_vec()),
        ("ingest", vec!["ingest".into(), "--edges".into(), edges.clone(), "--attrs".into(), attrs.clone(), "--k".into(), "6".into(), "--surveys".into(), "40".into()]),
        ("simulate-ingest", vec!["simulate".into(), "--edges".into(), edges.clone(), "--attrs".into(), attrs.clone(), "--k".into(), "4".into(), "--surveys".into(), "40".into(), "--sample-size".into(), "100".into()]),
        ("simulate", ["simulate", "--n", "3000", "--nh", "120", "--probes", "6", "--cases", "2", "--surveys", "60", "--sample-size", "200", "--estimators", "drpr,drpa,dapa,dapr"].map(String::from).to_vec()),
        ("grid", ["grid", "--nn", "5e4", "--nn", "5e6", "--p", "0.001"].map(String::from).to_vec()),
        ("grid-bottom", ["grid", "--preset", "fig1-bottom"].map(String::from).to_vec()),
        ("validate", ["validate", "--suite", "s3-hypergeom", "--reps", "100000"].map(String::from).to_vec()),
    ];
    let mut compared = 0;
    let mut failures = Vec::new();
    for (name, args) in &runs {
        let first = if *name == "generate" { gen.clone() } else { s(root.join(format!("{name}-1"))) };
        let mut argv: Vec<&str> = args.iter().map(String::as_str).collect();
        argv.extend(["--threads", "1", "--out", &first]);
        if !nsum(&argv) {
            failures.push(format!("{name} failed"));
            continue;
        }
        let reference = output_files(Path::new(&first));
        let manifest = s(Path::new(&first).join("manifest.json"));
        let command = args[0].as_str();
        for threads in ["2", "4"] {
            let again = s(root.join(format!("{name}-{threads}")));
            if !nsum(&[command, "--config", &manifest, "--threads", threads, "--out", &again]) {
                failures.push(format!("{name} rerun at {threads} threads failed"));
                continue;
            }
            if output_files(Path::new(&again)) != reference {
                failures.push(format!("{name} differs at {threads} threads"));
            }
            compared += reference.len();
        }
    }
    let report_first = s(root.join("report-1"));
    let results = s(root.join("simulate-1/results.csv"));
    if nsum(&["report", "--results", &results, "--threads", "1", "--out", &report_first]) {
        let manifest = s(Path::new(&report_first).join("manifest.json"));
        let again = s(root.join("report-4"));
        if !nsum(&["report", "--config", &manifest, "--threads", "4", "--out", &again])
            || output_files(Path::new(&again)) != output_files(Path::new(&report_first))
        {
            failures.push("report differs".into());
        }
        compared += 2;
    } else {
        failures.push("report failed".into());
    }
    Verdict {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{compared} output files byte-identical across 1, 2 and 4 threads")
        } else {
            failures.join("; ")
        },
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 11] = [
        ("ER unbiasedness", er_unbiasedness),
        ("scaled-bias expectations", scaled_bias),
        ("variance formulas", variance_formulas),
        ("sign regions", sign_regions),
        ("winner-grid pattern", winner_pattern),
        ("monotonicity in nN and p", monotone_in_sample_volume),
        ("S1 orderings", s1_orderings),
        ("S3 hypergeometric", hypergeometric),
        ("single-probe identity", single_probe_identity),
        ("directional synthetic check", directional_synthetic),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
