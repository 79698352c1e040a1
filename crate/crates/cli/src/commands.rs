use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::{ArgAction, Args, ValueEnum};
use nsum_core::analytic::{grid_sweep, Axis, GridFixed, GridPreset};
use nsum_core::estimators::{write_survey_log, EstimatorKind, NanPolicy};
use nsum_core::ingest::{
    build_cases, derive_candidate_groups, load_network, register_candidates, write_candidates_csv, write_cases_csv,
    CaseSpec, DegreeBaseline,
};
use nsum_core::montecarlo::{
    hypergeom_check, read_results_csv, run_case, s1_degree_mc_check, s1_prevalence_mc_check, s1_random_orderings,
    summarize_by_band, validate_analytic, write_results_csv, CaseResult, NetworkMode, RunOptions, SyntheticDesign,
    ValidationConfig,
};
use nsum_core::netgen::{generate_sbm, BlockParams, Network};
use nsum_core::seed;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Context, Failure};

/// Parses a serde enum from its CLI spelling (`-` and `_` interchangeable).
fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown value '{s}'"))
}

fn estimator(s: &str) -> Result<EstimatorKind, String> {
    s.parse().map_err(|e: nsum_core::NsumError| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// Population size N.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Hidden group size N_H.
    #[arg(long, default_value_t = 100)]
    pub nh: usize,
    /// Assortativity ratio a = p_HH / p_HL = p_LL / p_HL.
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Between-block link probability p_HL.
    #[arg(long, default_value_t = 0.01)]
    pub p: f64,
    #[arg(long, env = "NSUM_SEED", default_value_t = 1)]
    pub seed: u64,
}

pub fn generate(ctx: &Context, args: GenerateArgs) -> Result<(), Failure> {
    let args = ctx.resolve("generate", args)?;
    let params = BlockParams::scaled(args.n, args.nh, args.a, args.p)?;
    ctx.prepare_out()?;
    let net = generate_sbm(&params, args.seed)?;
    net.write_edges_csv(ctx.create("edges.csv")?)?;
    net.write_labels_csv(ctx.create("labels.csv")?)?;
    ctx.write_manifest("generate", &args, Some(args.seed))?;
    println!("{} nodes, {} edges -> {}", net.n_nodes(), net.n_edges(), ctx.out.display());
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    /// Edge list CSV (`src,dst`).
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Attribute CSV (`node_id,<columns>...`).
    #[arg(long)]
    pub attrs: Option<PathBuf>,
    /// Lowest candidate prevalence (inclusive).
    #[arg(long, default_value_t = 0.001)]
    pub min_prev: f64,
    /// Highest candidate prevalence (inclusive).
    #[arg(long, default_value_t = 0.1)]
    pub max_prev: f64,
    /// Number of largest candidates forming the cases.
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[arg(long, default_value_t = 500)]
    pub surveys: usize,
    #[arg(long, default_value_t = 500)]
    pub sample_size: usize,
    #[arg(long, env = "NSUM_SEED", default_value_t = 1)]
    pub seed: u64,
}

struct Ingested {
    network: Network,
    cases: Vec<CaseSpec>,
}

fn ingest_inputs(ctx: &Context, args: &IngestArgs) -> Result<Ingested, Failure> {
    let (Some(edges), Some(attrs)) = (&args.edges, &args.attrs) else {
        return Err(Failure::Param("both --edges and --attrs are required".into()));
    };
    let (mut network, table) = load_network(edges, attrs)?;
    let candidates = derive_candidate_groups(&network, &table, args.min_prev, args.max_prev)?;
    write_candidates_csv(ctx.create("candidates.csv")?, &candidates)?;
    register_candidates(&mut network, &candidates)?;
    let cases = build_cases(&candidates, args.k, args.sample_size, args.surveys, args.seed)?;
    write_cases_csv(ctx.create("cases.csv")?, &cases)?;
    Ok(Ingested { network, cases })
}

pub fn ingest(ctx: &Context, args: IngestArgs) -> Result<(), Failure> {
    let args = ctx.resolve("ingest", args)?;
    ctx.prepare_out()?;
    let ingested = ingest_inputs(ctx, &args)?;
    ctx.write_manifest("ingest", &args, Some(args.seed))?;
    println!(
        "{} nodes, {} cases -> {}",
        ingested.network.n_nodes(),
        ingested.cases.len(),
        ctx.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Edge list CSV; with --attrs switches to ingest mode.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub attrs: Option<PathBuf>,
    #[arg(long, default_value_t = 0.001)]
    pub min_prev: f64,
    #[arg(long, default_value_t = 0.1)]
    pub max_prev: f64,
    #[arg(long, default_value_t = 16)]
    pub k: usize,

    /// Synthetic population size.
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub nh: usize,
    #[arg(long, default_value_t = 2.0)]
    pub a: f64,
    #[arg(long, default_value_t = 0.005)]
    pub p: f64,
    /// Probe groups per synthetic case.
    #[arg(long, default_value_t = 15)]
    pub probes: usize,
    #[arg(long, default_value_t = 100)]
    pub probe_size: usize,
    /// Draw synthetic probe members from outside the hidden group only.
    #[arg(long)]
    pub probes_within_rest: bool,
    /// Synthetic cases, each on its own network realization.
    #[arg(long, default_value_t = 1)]
    pub cases: usize,

    #[arg(long, value_delimiter = ',', value_parser = estimator, default_values_t = EstimatorKind::STANDARD)]
    pub estimators: Vec<EstimatorKind>,
    #[arg(long, default_value_t = 500)]
    pub surveys: usize,
    #[arg(long, default_value_t = 500)]
    pub sample_size: usize,
    /// `drop-term` or `poison-survey`.
    #[arg(long, value_parser = serde_enum::<NanPolicy>, default_value = "drop-term")]
    pub nan_policy: NanPolicy,
    /// Degree-ratio denominator: `all` or `rest`.
    #[arg(long, value_parser = serde_enum::<DegreeBaseline>, default_value = "all")]
    pub baseline: DegreeBaseline,
    #[arg(long, env = "NSUM_SEED", default_value_t = 1)]
    pub seed: u64,
}

pub fn simulate(ctx: &Context, args: SimulateArgs) -> Result<(), Failure> {
    let args = ctx.resolve("simulate", args)?;
    if args.estimators.is_empty() {
        return Err(Failure::Param("no estimators selected".into()));
    }
    ctx.prepare_out()?;
    let options = RunOptions {
        policy: args.nan_policy,
        baseline: args.baseline,
    };
    let mut results: Vec<CaseResult> = Vec::new();
    let mut run = |network: &Network, case: &CaseSpec| -> Result<(), Failure> {
        let (result, log) =
            run_case(network, case, &args.estimators, options).map_err(|e| Failure::from(e).context(format!("case {}", case.case_id)))?;
        write_survey_log(ctx.create(&format!("surveys/case_{:04}.csv", case.case_id))?, &log)?;
        results.push(result);
        Ok(())
    };

    if args.edges.is_some() || args.attrs.is_some() {
        let ingest_args = IngestArgs {
            edges: args.edges.clone(),
            attrs: args.attrs.clone(),
            min_prev: args.min_prev,
            max_prev: args.max_prev,
            k: args.k,
            surveys: args.surveys,
            sample_size: args.sample_size,
            seed: args.seed,
        };
        let ingested = ingest_inputs(ctx, &ingest_args)?;
        for case in &ingested.cases {
            run(&ingested.network, case)?;
        }
    } else {
        let block = BlockParams::scaled(args.n, args.nh, args.a, args.p)?;
        let mut specs = Vec::new();
        for i in 0..args.cases {
            let design = SyntheticDesign {
                block: block.clone(),
                n_probes: args.probes,
                probe_size: args.probe_size,
                probes_within_rest: args.probes_within_rest,
                sample_size: args.sample_size,
                n_surveys: args.surveys,
                seed: seed::mix(args.seed, i as u64),
            };
            let (network, case) = design.build(i)?;
            run(&network, &case)?;
            specs.push(case);
        }
        write_cases_csv(ctx.create("cases.csv")?, &specs)?;
    }
    write_results_csv(ctx.create("results.csv")?, &results)?;
    ctx.write_manifest("simulate", &args, Some(args.seed))?;
    println!("{} cases -> {}", results.len(), ctx.path("results.csv").display());
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Between-block link probability; repeat for a sweep.
    #[arg(long = "p", action = ArgAction::Append, default_values_t = [0.01])]
    pub p: Vec<f64>,
    /// Probe share r_K = N_K / N; repeatable.
    #[arg(long = "rk", action = ArgAction::Append, default_values_t = [0.1])]
    pub rk: Vec<f64>,
    /// Sample size times population size; repeatable.
    #[arg(long = "nn", action = ArgAction::Append, default_values_t = [500_000.0])]
    pub nn: Vec<f64>,
    /// `fig1-top` or `fig1-bottom`.
    #[arg(long, value_parser = parse_preset, default_value = "fig1-top")]
    pub preset: GridPreset,
    #[arg(long)]
    pub loga_min: Option<f64>,
    #[arg(long)]
    pub loga_max: Option<f64>,
    #[arg(long)]
    pub loga_step: Option<f64>,
    #[arg(long)]
    pub r_min: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub r_step: Option<f64>,
}

fn parse_preset(s: &str) -> Result<GridPreset, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| format!("unknown preset '{s}'"))
}

pub fn grid(ctx: &Context, args: GridArgs) -> Result<(), Failure> {
    let args = ctx.resolve("grid", args)?;
    let [a0, a1, da, r0, r1, dr] = args.preset.ranges();
    let log_a = Axis::range(
        args.loga_min.unwrap_or(a0),
        args.loga_max.unwrap_or(a1),
        args.loga_step.unwrap_or(da),
    )?;
    let r = Axis::range(args.r_min.unwrap_or(r0), args.r_max.unwrap_or(r1), args.r_step.unwrap_or(dr))?;
    if r.values.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Failure::Param("R axis must stay inside (0, 1)".into()));
    }
    let mut fixed = Vec::new();
    for &p in &args.p {
        for &rk in &args.rk {
            for &nn in &args.nn {
                fixed.push(GridFixed::new(p, rk, nn)?);
            }
        }
    }
    if fixed.is_empty() {
        return Err(Failure::Param("empty sweep".into()));
    }
    ctx.prepare_out()?;
    let grids = grid_sweep(&fixed, &log_a, &r);
    for (i, g) in grids.iter().enumerate() {
        let name = format!("grid_{i:03}");
        g.write_csv(ctx.create(&format!("{name}.csv"))?)?;
        let mut sidecar = g.sidecar();
        sidecar["preset"] = serde_json::to_value(args.preset).map_err(|e| Failure::Io(e.to_string()))?;
        ctx.write_json(&format!("{name}.json"), &sidecar)?;
        println!(
            "{name}: p={} r_K={} nN={} dRpA RMSE wins {}",
            g.fixed.p, g.fixed.r_k, g.fixed.nn, sidecar["rmse_drpa_wins"]
        );
    }
    ctx.write_manifest("grid", &args, None)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    ErUnbiased,
    ScaledBias,
    S3Hypergeom,
    S1Ordering,
    All,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Population size (suite default when omitted).
    #[arg(long)]
    pub n: Option<usize>,
    /// Hidden group size for the hypergeometric check.
    #[arg(long)]
    pub nh: Option<usize>,
    /// Probe group size N_K.
    #[arg(long)]
    pub nk: Option<usize>,
    /// Link probability (p_HL for the moment suites).
    #[arg(long)]
    pub p: Option<f64>,
    /// Assortativity for scaled-bias.
    #[arg(long)]
    pub a: Option<f64>,
    /// Prevalences to test; repeatable.
    #[arg(long = "r", action = ArgAction::Append)]
    pub r: Vec<f64>,
    /// Respondents per survey.
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Conditioning degree for the hypergeometric check.
    #[arg(long)]
    pub d: Option<usize>,
    /// `model`, `graph-fresh` or `graph-fixed`.
    #[arg(long, value_parser = serde_enum::<NetworkMode>, default_value = "model")]
    pub mode: NetworkMode,
    /// Plain SRS samples instead of a fixed hidden share.
    #[arg(long)]
    pub unconditioned: bool,
    #[arg(long, env = "NSUM_SEED", default_value_t = 1)]
    pub seed: u64,
}

struct SuiteOutcome {
    report: Value,
    pass: bool,
    lines: Vec<String>,
}

fn moment_suite(args: &ValidateArgs, a: f64, rs: &[f64], salt: u64) -> Result<SuiteOutcome, Failure> {
    let n_total = args.n.unwrap_or(20_000);
    let n_probe = args.nk.unwrap_or(n_total / 10);
    let p = args.p.unwrap_or(0.01);
    let mut reports = Vec::new();
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, &r) in rs.iter().enumerate() {
        let nh = (n_total as f64 * r).round() as usize;
        let params = BlockParams::scaled(n_total, nh, a, p)?;
        let mut cfg = ValidationConfig::new(
            params,
            args.sample_size.unwrap_or(500),
            n_probe,
            args.reps.unwrap_or(2000),
            seed::mix(args.seed, salt + i as u64),
        );
        cfg.mode = args.mode;
        cfg.conditioned = !args.unconditioned;
        let report = validate_analytic(&cfg)?;
        for e in &report.estimators {
            lines.push(format!(
                "a={a} R={r} {}: mean {:.6} vs {:.6} (z {:.2}) {}; var ratio {:.3} {}",
                e.estimator,
                e.mc_mean,
                e.expected_mean,
                e.z,
                verdict(e.mean_pass),
                e.variance_ratio,
                verdict(e.variance_pass)
            ));
        }
        if let Some(ok) = report.cross_ratio_pass {
            lines.push(format!(
                "a={a} R={r} dRpR/dRpA variance ratio {:.3} {}",
                report.cross_variance_ratio,
                verdict(ok)
            ));
        }
        pass &= report.pass;
        reports.push(report);
    }
    Ok(SuiteOutcome {
        report: json!({ "pass": pass, "runs": reports }),
        pass,
        lines,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn hypergeom_suite(args: &ValidateArgs) -> Result<SuiteOutcome, Failure> {
    let report = hypergeom_check(
        args.n.unwrap_or(30),
        args.nh.unwrap_or(10),
        args.p.unwrap_or(0.3),
        args.d.unwrap_or(8),
        false,
        args.reps.unwrap_or(1_000_000),
        seed::mix(args.seed, 200),
    )?;
    let pass = report.tv_distance < 0.02;
    let lines = vec![format!(
        "hypergeometric TV distance {:.5} over {} hits {}",
        report.tv_distance,
        report.n_hits,
        verdict(pass)
    )];
    Ok(SuiteOutcome {
        report: json!({ "pass": pass, "threshold": 0.02, "check": report }),
        pass,
        lines,
    })
}

fn s1_suite(args: &ValidateArgs) -> Result<SuiteOutcome, Failure> {
    let reps = args.reps.unwrap_or(1_000_000);
    let sweep = s1_random_orderings(1000, seed::mix(args.seed, 300))?;
    let prevalence = s1_prevalence_mc_check(&[10, 20], 0.2, reps, seed::mix(args.seed, 301))?;
    let degree = s1_degree_mc_check(10, 1000, &[100, 50], reps, seed::mix(args.seed, 302))?;
    let pass = sweep.pass() && prevalence.pass && degree.pass;
    let mut lines = vec![format!(
        "closed-form orderings: {} prevalence / {} degree violations {}",
        sweep.prevalence_violations,
        sweep.degree_violations,
        verdict(sweep.pass())
    )];
    for rep in [&prevalence, &degree] {
        lines.push(format!(
            "{:?}: RoA {:.6} vs {:.6} (z {:.2}), AoR {:.6} vs {:.6} (z {:.2}) {}",
            rep.family,
            rep.roa.simulated,
            rep.roa.closed_form,
            rep.roa.z,
            rep.aor.simulated,
            rep.aor.closed_form,
            rep.aor.z,
            verdict(rep.pass)
        ));
    }
    Ok(SuiteOutcome {
        report: json!({ "pass": pass, "orderings": sweep, "spot_checks": [prevalence, degree] }),
        pass,
        lines,
    })
}

pub fn validate(ctx: &Context, args: ValidateArgs) -> Result<(), Failure> {
    let args = ctx.resolve("validate", args)?;
    let suites: Vec<Suite> = match args.suite {
        Suite::All => vec![Suite::ErUnbiased, Suite::ScaledBias, Suite::S3Hypergeom, Suite::S1Ordering],
        s => vec![s],
    };
    ctx.prepare_out()?;
    let mut report = serde_json::Map::new();
    let mut failed = Vec::new();
    for suite in suites {
        let outcome = match suite {
            Suite::ErUnbiased => {
                let rs = if args.r.is_empty() { vec![0.05, 0.25, 0.5] } else { args.r.clone() };
                moment_suite(&args, 1.0, &rs, 0)?
            }
            Suite::ScaledBias => {
                let rs = if args.r.is_empty() { vec![0.25] } else { args.r.clone() };
                moment_suite(&args, args.a.unwrap_or(2.0), &rs, 100)?
            }
            Suite::S3Hypergeom => hypergeom_suite(&args)?,
            Suite::S1Ordering => s1_suite(&args)?,
            Suite::All => unreachable!(),
        };
        let name = serde_json::to_value(suite).map_err(|e| Failure::Io(e.to_string()))?;
        let name = name.as_str().unwrap_or_default().to_string();
        for line in &outcome.lines {
            println!("[{name}] {line}");
        }
        if !outcome.pass {
            failed.push(name.clone());
        }
        report.insert(name, outcome.report);
    }
    let pass = failed.is_empty();
    ctx.write_json("validation.json", &json!({ "pass": pass, "failed": failed, "suites": report }))?;
    ctx.write_manifest("validate", &args, Some(args.seed))?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Validation(format!("failed suites: {}", failed.join(", "))))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// results.csv written by `simulate`.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

pub fn report(ctx: &Context, args: ReportArgs) -> Result<(), Failure> {
    let args = ctx.resolve("report", args)?;
    let Some(path) = &args.results else {
        return Err(Failure::Param("--results is required".into()));
    };
    let file = File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let rows = read_results_csv(BufReader::new(file))?;
    let summary = summarize_by_band(&rows);
    ctx.prepare_out()?;
    ctx.write_json("report.json", &summary)?;
    let mut w = ctx.create("report.csv")?;
    writeln!(w, "band,estimator,cases,mean_rel_bias,mean_rel_rmse,drpa_beats_drpr")?;
    for (band, s) in &summary {
        for (est, stats) in &s.estimators {
            writeln!(
                w,
                "{band},{est},{},{},{},{}",
                stats.cases, stats.mean_rel_bias, stats.mean_rel_rmse, s.drpa_beats_drpr
            )?;
        }
        println!("{band}: {} cases, dRpA beats dRpR in {}", s.cases, s.drpa_beats_drpr);
    }
    w.flush()?;
    ctx.write_manifest("report", &args, None)?;
    Ok(())
}
