//! Replicate-survey harness.
//!
//! [`run_case`] repeats SRS surveys over a fixed network and summarises each
//! estimator; [`validate_analytic`] compares simulated moments with the closed
//! forms; the remaining checks cover the hypergeometric conditional
//! and the RoA/AoR variance orderings.

mod checks;
mod report;
mod validation;

pub use checks::{
    hypergeom_check, s1_degree_mc_check, s1_prevalence_mc_check, s1_random_orderings, HypergeomReport, MomentCheck,
    OrderingSweep, S1Family, S1Report,
};
pub use report::{read_results_csv, summarize_by_band, BandSummary, EstimatorBandStats, ResultRow};
pub use validation::{validate_analytic, EstimatorValidation, NetworkMode, ValidationConfig, ValidationReport};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NsumError, Result};
use crate::estimators::{estimate_with, EstimatorKind, NanPolicy, SurveyEstimate};
use crate::ingest::{self, CaseSpec, DegreeBaseline, DegreeRatioBand};
use crate::netgen::{generate_sbm, BlockParams, Network};
use crate::seed;
use crate::survey::{ard_from_graph, srs_without_replacement};

/// Mean, spread and error of one estimator over the valid surveys of a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub bias: f64,
    pub rmse: f64,
    pub rel_bias: f64,
    pub rel_se: f64,
    pub rel_rmse: f64,
    pub n_valid: usize,
    pub n_nan: usize,
    pub n_inf: usize,
}

impl EstimatorSummary {
    /// Summarises survey outcomes against the true prevalence. `NaN` fields
    /// mark statistics that need more valid surveys than there are.
    pub fn from_outcomes<'a>(
        estimator: EstimatorKind,
        outcomes: impl IntoIterator<Item = &'a crate::EstimateOutcome>,
        true_prevalence: f64,
    ) -> Self {
        let mut values = Vec::new();
        let (mut n_nan, mut n_inf) = (0, 0);
        for o in outcomes {
            match o.finite() {
                Some(v) => values.push(v),
                None if o.flag.is_nan() => n_nan += 1,
                None => n_inf += 1,
            }
        }
        let (mean, sd) = mean_sd(&values);
        let bias = mean - true_prevalence;
        let rmse = (bias * bias + sd * sd).sqrt();
        EstimatorSummary {
            estimator,
            mean,
            sd,
            bias,
            rmse,
            rel_bias: bias / true_prevalence,
            rel_se: sd / true_prevalence,
            rel_rmse: rmse / true_prevalence,
            n_valid: values.len(),
            n_nan,
            n_inf,
        }
    }
}

/// Mean and unbiased standard deviation.
pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: usize,
    pub true_prevalence: f64,
    pub degree_ratio: Option<f64>,
    pub band: Option<DegreeRatioBand>,
    pub assortativity: Option<f64>,
    pub estimators: Vec<EstimatorSummary>,
}

impl CaseResult {
    pub const CSV_HEADER: [&'static str; 16] = [
        "case_id",
        "estimator",
        "mean",
        "sd",
        "bias",
        "rmse",
        "rel_bias",
        "rel_se",
        "rel_rmse",
        "n_valid",
        "n_nan",
        "n_inf",
        "true_R",
        "degree_ratio",
        "band",
        "assortativity",
    ];

    pub fn summary(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == kind)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (case, estimator).
pub fn write_results_csv<W: Write>(out: W, results: &[CaseResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CaseResult::CSV_HEADER)?;
    for case in results {
        for s in &case.estimators {
            w.write_record([
                case.case_id.to_string(),
                s.estimator.to_string(),
                s.mean.to_string(),
                s.sd.to_string(),
                s.bias.to_string(),
                s.rmse.to_string(),
                s.rel_bias.to_string(),
                s.rel_se.to_string(),
                s.rel_rmse.to_string(),
                s.n_valid.to_string(),
                s.n_nan.to_string(),
                s.n_inf.to_string(),
                case.true_prevalence.to_string(),
                opt(case.degree_ratio),
                case.band.map(|b| b.name().to_string()).unwrap_or_default(),
                opt(case.assortativity),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunOptions {
    pub policy: NanPolicy,
    pub baseline: DegreeBaseline,
}

/// Runs `case.n_surveys` SRS surveys on `network`. Survey `r` uses seed
/// `case.seed + r`, so results do not depend on the thread count.
///
/// Returns the case summary and the per-survey log (survey-major, then
/// estimator order as given).
pub fn run_case(
    network: &Network,
    case: &CaseSpec,
    estimators: &[EstimatorKind],
    options: RunOptions,
) -> Result<(CaseResult, Vec<SurveyEstimate>)> {
    case.validate()?;
    if estimators.is_empty() {
        return Err(NsumError::param("no estimators selected"));
    }
    let n = network.n_nodes();
    if case.sample_size == 0 || case.sample_size > n {
        return Err(NsumError::param(format!(
            "case {}: sample size {} must lie in 1..={n}",
            case.case_id, case.sample_size
        )));
    }
    let hidden = network.group(case.hidden_group_id)?;
    if hidden.is_empty() || hidden.len() == n {
        return Err(NsumError::param(format!(
            "case {}: hidden group must be a proper non-empty subset",
            case.case_id
        )));
    }
    let probe_sizes: Vec<usize> = case
        .probe_group_ids
        .iter()
        .map(|&g| network.group(g).map(|g| g.len()))
        .collect::<Result<_>>()?;
    let true_prevalence = hidden.len() as f64 / n as f64;

    let per_survey: Vec<Vec<SurveyEstimate>> = (0..case.n_surveys)
        .into_par_iter()
        .map(|r| {
            let respondents = srs_without_replacement(n, case.sample_size, seed::replicate(case.seed, r as u64))?;
            let sample = ard_from_graph(network, &respondents, hidden.mask(), &case.probe_group_ids)?;
            estimators
                .iter()
                .map(|&kind| {
                    Ok(SurveyEstimate {
                        survey_id: r,
                        estimator: kind,
                        outcome: estimate_with(&sample, &probe_sizes, n, kind, options.policy)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let log: Vec<SurveyEstimate> = per_survey.into_iter().flatten().collect();

    let summaries = estimators
        .iter()
        .map(|&kind| {
            let outcomes = log.iter().filter(|e| e.estimator == kind).map(|e| &e.outcome);
            EstimatorSummary::from_outcomes(kind, outcomes, true_prevalence)
        })
        .collect();

    let degree_ratio = ingest::degree_ratio(network, hidden.members(), options.baseline).ok();
    let mut partition = vec![false; n];
    for &h in hidden.members() {
        partition[h as usize] = true;
    }
    let assortativity = match ingest::assortativity(network, &partition) {
        Ok(v) => Some(v),
        Err(NsumError::UndefinedStatistic(_)) => None,
        Err(e) => return Err(e),
    };

    Ok((
        CaseResult {
            case_id: case.case_id,
            true_prevalence,
            degree_ratio,
            band: degree_ratio.map(DegreeRatioBand::classify),
            assortativity,
            estimators: summaries,
        },
        log,
    ))
}

/// A planted SBM case: the hidden block plus `n_probes` probe groups of
/// `probe_size` nodes drawn at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign {
    pub block: BlockParams,
    pub n_probes: usize,
    pub probe_size: usize,
    /// Draw probe members from L only instead of the whole population.
    pub probes_within_rest: bool,
    pub sample_size: usize,
    pub n_surveys: usize,
    pub seed: u64,
}

impl SyntheticDesign {
    /// Realizes the network and registers the hidden block as group 0 and
    /// the probe groups as `1..=n_probes`.
    pub fn build(&self, case_id: usize) -> Result<(Network, CaseSpec)> {
        if self.n_probes == 0 {
            return Err(NsumError::param("at least one probe group is required"));
        }
        let mut network = generate_sbm(&self.block, seed::mix(self.seed, 0))?;
        let hidden = network.add_group((0..self.block.n_hidden as u32).collect())?;
        let probes = (0..self.n_probes)
            .map(|j| {
                network.assign_probe_group(self.probe_size, self.probes_within_rest, seed::mix(self.seed, 1 + j as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let case = CaseSpec {
            case_id,
            hidden_group_id: hidden,
            probe_group_ids: probes,
            sample_size: self.sample_size,
            n_surveys: self.n_surveys,
            seed: seed::mix(self.seed, u64::MAX),
        };
        Ok((network, case))
    }
}
