//! Degree and prevalence estimators and their four compositions.
//!
//! | kind | degrees | prevalence |
//! |------|---------|------------|
//! | dRpR | RoA     | RoA        |
//! | dRpA | RoA     | AoR        |
//! | dApA | AoR     | AoR        |
//! | dApR | AoR     | RoA        |

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NsumError, Result};
use crate::scalar::Scalar;
use crate::survey::ArdSample;

/// How per-respondent quantities are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pooling {
    /// Ratio of averages.
    RoA,
    /// Average of ratios.
    AoR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "dRpR")]
    DRpR,
    #[serde(rename = "dRpA")]
    DRpA,
    #[serde(rename = "dApA")]
    DApA,
    #[serde(rename = "dApR")]
    DApR,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::DRpR,
        EstimatorKind::DRpA,
        EstimatorKind::DApA,
        EstimatorKind::DApR,
    ];

    /// The three estimators compared in the replicate-survey experiments.
    pub const STANDARD: [EstimatorKind; 3] =
        [EstimatorKind::DRpR, EstimatorKind::DRpA, EstimatorKind::DApA];

    pub fn from_parts(degree: Pooling, prevalence: Pooling) -> Self {
        match (degree, prevalence) {
            (Pooling::RoA, Pooling::RoA) => EstimatorKind::DRpR,
            (Pooling::RoA, Pooling::AoR) => EstimatorKind::DRpA,
            (Pooling::AoR, Pooling::AoR) => EstimatorKind::DApA,
            (Pooling::AoR, Pooling::RoA) => EstimatorKind::DApR,
        }
    }

    pub fn degree_method(self) -> Pooling {
        match self {
            EstimatorKind::DRpR | EstimatorKind::DRpA => Pooling::RoA,
            EstimatorKind::DApA | EstimatorKind::DApR => Pooling::AoR,
        }
    }

    pub fn prevalence_method(self) -> Pooling {
        match self {
            EstimatorKind::DRpR | EstimatorKind::DApR => Pooling::RoA,
            EstimatorKind::DRpA | EstimatorKind::DApA => Pooling::AoR,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::DRpR => "dRpR",
            EstimatorKind::DRpA => "dRpA",
            EstimatorKind::DApA => "dApA",
            EstimatorKind::DApR => "dApR",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = NsumError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drpr" => Ok(EstimatorKind::DRpR),
            "drpa" => Ok(EstimatorKind::DRpA),
            "dapa" => Ok(EstimatorKind::DApA),
            "dapr" => Ok(EstimatorKind::DApR),
            _ => Err(NsumError::param(format!("unknown estimator '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeFlag {
    Ok,
    /// Every AoR term was 0/0, or both RoA sums were zero.
    NanAllExcluded,
    /// Some AoR term had a positive response over a zero degree.
    Inf,
    /// RoA denominator zero with a positive numerator.
    ZeroDenominator,
}

impl OutcomeFlag {
    pub fn name(self) -> &'static str {
        match self {
            OutcomeFlag::Ok => "ok",
            OutcomeFlag::NanAllExcluded => "nan_all_excluded",
            OutcomeFlag::Inf => "inf",
            OutcomeFlag::ZeroDenominator => "zero_denominator",
        }
    }

    /// Survey-level NaN (as opposed to Inf) outcome.
    pub fn is_nan(self) -> bool {
        self == OutcomeFlag::NanAllExcluded
    }

    /// Survey-level Inf outcome: `x / 0` with `x > 0` somewhere.
    pub fn is_inf(self) -> bool {
        matches!(self, OutcomeFlag::Inf | OutcomeFlag::ZeroDenominator)
    }
}

/// Handling of respondents with `y = 0` and estimated degree 0 in AoR
/// prevalence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NanPolicy {
    /// Drop the 0/0 term and average over the rest.
    #[default]
    DropTerm,
    /// Any 0/0 term makes the whole survey NaN.
    PoisonSurvey,
}

/// A survey-level estimate. `flag == Ok` exactly when `value` is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutcome<T> {
    pub value: T,
    pub flag: OutcomeFlag,
    /// Respondents contributing to the value.
    pub n_used: usize,
    /// AoR terms dropped as 0/0.
    pub n_nan_terms: usize,
}

impl<T: Scalar> EstimateOutcome<T> {
    fn ok(value: T, n_used: usize, n_nan_terms: usize) -> Self {
        EstimateOutcome {
            value,
            flag: OutcomeFlag::Ok,
            n_used,
            n_nan_terms,
        }
    }

    fn flagged(flag: OutcomeFlag, n_used: usize, n_nan_terms: usize) -> Self {
        let value = if flag.is_nan() { T::nan() } else { T::infinity() };
        EstimateOutcome {
            value,
            flag,
            n_used,
            n_nan_terms,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.flag == OutcomeFlag::Ok
    }

    /// The value when finite.
    pub fn finite(&self) -> Option<T> {
        self.is_ok().then_some(self.value)
    }
}

fn check_probe_inputs(row_len: usize, probe_sizes: &[usize]) -> Result<()> {
    if probe_sizes.is_empty() {
        return Err(NsumError::param("probe list is empty"));
    }
    if row_len != probe_sizes.len() {
        return Err(NsumError::param(format!(
            "{row_len} probe responses for {} probe groups",
            probe_sizes.len()
        )));
    }
    if probe_sizes.contains(&0) {
        return Err(NsumError::param("probe group sizes must be positive"));
    }
    Ok(())
}

/// `N * sum_j y_ij / sum_j N_j`.
pub fn degree_roa<T: Scalar>(row: &[u32], probe_sizes: &[usize], n_population: usize) -> Result<T> {
    check_probe_inputs(row.len(), probe_sizes)?;
    let responses: u64 = row.iter().map(|&y| y as u64).sum();
    let known: usize = probe_sizes.iter().sum();
    Ok(T::count(n_population) * T::from_u64(responses).unwrap() / T::count(known))
}

/// `N * (1/K) * sum_j y_ij / N_j`.
pub fn degree_aor<T: Scalar>(row: &[u32], probe_sizes: &[usize], n_population: usize) -> Result<T> {
    check_probe_inputs(row.len(), probe_sizes)?;
    // each term rounds like degree_roa, so a single probe group gives the
    // identical value
    let n = T::count(n_population);
    let scaled_sum = row
        .iter()
        .zip(probe_sizes)
        .fold(T::zero(), |acc, (&y, &size)| acc + n * T::from_u32(y).unwrap() / T::count(size));
    Ok(scaled_sum / T::count(row.len()))
}

pub fn degree<T: Scalar>(method: Pooling, row: &[u32], probe_sizes: &[usize], n_population: usize) -> Result<T> {
    match method {
        Pooling::RoA => degree_roa(row, probe_sizes, n_population),
        Pooling::AoR => degree_aor(row, probe_sizes, n_population),
    }
}

fn check_lengths<T>(y: &[u32], d: &[T]) -> Result<()> {
    if y.len() != d.len() {
        return Err(NsumError::param(format!(
            "{} responses but {} degrees",
            y.len(),
            d.len()
        )));
    }
    if y.is_empty() {
        return Err(NsumError::param("no respondents"));
    }
    Ok(())
}

/// `sum_i y_i / sum_i d_i`.
pub fn prevalence_roa<T: Scalar>(y_hidden: &[u32], degrees: &[T]) -> Result<EstimateOutcome<T>> {
    check_lengths(y_hidden, degrees)?;
    let num: u64 = y_hidden.iter().map(|&y| y as u64).sum();
    let den = degrees.iter().fold(T::zero(), |s, &d| s + d);
    let n = y_hidden.len();
    Ok(if den > T::zero() {
        EstimateOutcome::ok(T::from_u64(num).unwrap() / den, n, 0)
    } else if num == 0 {
        EstimateOutcome::flagged(OutcomeFlag::NanAllExcluded, 0, 0)
    } else {
        EstimateOutcome::flagged(OutcomeFlag::ZeroDenominator, n, 0)
    })
}

/// `(1/n) sum_i y_i / d_i` with 0/0 terms dropped and `y > 0, d = 0` terms
/// turning the survey into an Inf outcome.
pub fn prevalence_aor<T: Scalar>(y_hidden: &[u32], degrees: &[T]) -> Result<EstimateOutcome<T>> {
    prevalence_aor_with(y_hidden, degrees, NanPolicy::DropTerm)
}

pub fn prevalence_aor_with<T: Scalar>(
    y_hidden: &[u32],
    degrees: &[T],
    policy: NanPolicy,
) -> Result<EstimateOutcome<T>> {
    check_lengths(y_hidden, degrees)?;
    let mut sum = T::zero();
    let mut used = 0usize;
    let mut nan_terms = 0usize;
    let mut inf = false;
    for (&y, &d) in y_hidden.iter().zip(degrees) {
        if d > T::zero() {
            sum = sum + T::from_u32(y).unwrap() / d;
            used += 1;
        } else if y == 0 {
            nan_terms += 1;
        } else {
            inf = true;
        }
    }
    Ok(if inf {
        EstimateOutcome::flagged(OutcomeFlag::Inf, used, nan_terms)
    } else if used == 0 || (nan_terms > 0 && policy == NanPolicy::PoisonSurvey) {
        EstimateOutcome::flagged(OutcomeFlag::NanAllExcluded, used, nan_terms)
    } else {
        EstimateOutcome::ok(sum / T::count(used), used, nan_terms)
    })
}

pub fn prevalence<T: Scalar>(
    method: Pooling,
    y_hidden: &[u32],
    degrees: &[T],
    policy: NanPolicy,
) -> Result<EstimateOutcome<T>> {
    match method {
        Pooling::RoA => prevalence_roa(y_hidden, degrees),
        Pooling::AoR => prevalence_aor_with(y_hidden, degrees, policy),
    }
}

/// Estimated degrees of every respondent in the sample.
pub fn estimated_degrees<T: Scalar>(
    sample: &ArdSample,
    probe_sizes: &[usize],
    n_population: usize,
    method: Pooling,
) -> Result<Vec<T>> {
    if sample.n_probes() != probe_sizes.len() {
        return Err(NsumError::param(format!(
            "sample has {} probe columns but {} probe sizes were given",
            sample.n_probes(),
            probe_sizes.len()
        )));
    }
    (0..sample.len())
        .map(|i| degree(method, sample.probe_row(i), probe_sizes, n_population))
        .collect()
}

/// Composite estimate for one survey.
pub fn estimate<T: Scalar>(
    sample: &ArdSample,
    probe_sizes: &[usize],
    n_population: usize,
    kind: EstimatorKind,
) -> Result<EstimateOutcome<T>> {
    estimate_with(sample, probe_sizes, n_population, kind, NanPolicy::DropTerm)
}

pub fn estimate_with<T: Scalar>(
    sample: &ArdSample,
    probe_sizes: &[usize],
    n_population: usize,
    kind: EstimatorKind,
    policy: NanPolicy,
) -> Result<EstimateOutcome<T>> {
    if sample.is_empty() {
        return Err(NsumError::param("sample has no respondents"));
    }
    let degrees = estimated_degrees::<T>(sample, probe_sizes, n_population, kind.degree_method())?;
    prevalence(kind.prevalence_method(), sample.y_hidden(), &degrees, policy)
}

/// One row of the per-survey estimate log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyEstimate {
    pub survey_id: usize,
    pub estimator: EstimatorKind,
    pub outcome: EstimateOutcome<f64>,
}

/// Writes `survey_id,estimator,value,flag,n_used` rows.
pub fn write_survey_log<W: Write>(out: W, rows: &[SurveyEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["survey_id", "estimator", "value", "flag", "n_used"])?;
    for row in rows {
        w.write_record([
            row.survey_id.to_string(),
            row.estimator.to_string(),
            row.outcome.value.to_string(),
            row.outcome.flag.name().to_string(),
            row.outcome.n_used.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sample(y_hidden: Vec<u32>, rows: Vec<Vec<u32>>) -> ArdSample {
        ArdSample::from_responses(y_hidden, rows).unwrap()
    }

    #[test]
    fn kind_roundtrip() {
        for kind in EstimatorKind::ALL {
            assert_eq!(EstimatorKind::from_parts(kind.degree_method(), kind.prevalence_method()), kind);
            assert_eq!(kind.name().parse::<EstimatorKind>().unwrap(), kind);
        }
        assert!("dxpy".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn degree_estimators() {
        let d: f64 = degree_roa(&[3, 1], &[100, 50], 1000).unwrap();
        assert_relative_eq!(d, 1000.0 * 4.0 / 150.0, max_relative = 1e-15);
        let d: f64 = degree_aor(&[3, 1], &[100, 50], 1000).unwrap();
        assert_relative_eq!(d, 25.0, max_relative = 1e-15);
        assert_eq!(degree_roa::<f64>(&[0, 0], &[100, 50], 1000).unwrap(), 0.0);
        assert_eq!(degree_aor::<f64>(&[0, 0], &[100, 50], 1000).unwrap(), 0.0);
        assert_eq!(
            degree_roa::<f64>(&[7], &[40], 1000).unwrap(),
            degree_aor::<f64>(&[7], &[40], 1000).unwrap()
        );
        assert_eq!(
            degree_roa::<f64>(&[7, 2, 5], &[40, 40, 40], 1000).unwrap(),
            degree_aor::<f64>(&[7, 2, 5], &[40, 40, 40], 1000).unwrap()
        );
        assert!(degree_roa::<f64>(&[], &[], 10).is_err());
        assert!(degree_aor::<f64>(&[1], &[1, 2], 10).is_err());
    }

    #[test]
    fn prevalence_estimators() {
        let out = prevalence_roa(&[1, 4], &[10.0, 20.0]).unwrap();
        assert_relative_eq!(out.value, 1.0 / 6.0, max_relative = 1e-15);
        assert_eq!(prevalence_roa(&[3, 5], &[3.0, 5.0]).unwrap().value, 1.0);
        assert_eq!(prevalence_roa(&[0, 0], &[3.0, 5.0]).unwrap().value, 0.0);
        assert_eq!(prevalence_roa(&[0, 0], &[0.0, 0.0]).unwrap().flag, OutcomeFlag::NanAllExcluded);
        assert_eq!(prevalence_roa(&[1, 0], &[0.0, 0.0]).unwrap().flag, OutcomeFlag::ZeroDenominator);
        assert!(prevalence_roa::<f64>(&[1], &[1.0, 2.0]).is_err());

        let out = prevalence_aor(&[1, 4], &[10.0, 20.0]).unwrap();
        assert_relative_eq!(out.value, 0.15, max_relative = 1e-15);
        let out = prevalence_aor(&[1, 0], &[10.0, 0.0]).unwrap();
        assert_eq!((out.value, out.n_used, out.n_nan_terms), (0.1, 1, 1));
        let out = prevalence_aor(&[1, 2], &[10.0, 0.0]).unwrap();
        assert_eq!(out.flag, OutcomeFlag::Inf);
        assert!(f64::is_infinite(out.value));
        let out = prevalence_aor(&[0, 0], &[0.0, 0.0]).unwrap();
        assert_eq!(out.flag, OutcomeFlag::NanAllExcluded);
        assert!(f64::is_nan(out.value));
        let out = prevalence_aor_with(&[1, 0], &[10.0, 0.0], NanPolicy::PoisonSurvey).unwrap();
        assert_eq!(out.flag, OutcomeFlag::NanAllExcluded);
    }

    #[test]
    fn composite_hand_chain() {
        let s = sample(vec![2, 1], vec![vec![3, 1], vec![1, 1]]);
        let out: EstimateOutcome<f64> = estimate(&s, &[100, 50], 1000, EstimatorKind::DRpR).unwrap();
        assert_relative_eq!(out.value, 0.075, max_relative = 1e-14);
        // dRpA: (2/26.667 + 1/13.333)/2
        let out: EstimateOutcome<f64> = estimate(&s, &[100, 50], 1000, EstimatorKind::DRpA).unwrap();
        assert_relative_eq!(out.value, 0.075, max_relative = 1e-14);
        // dApA: degrees 25 and 15 -> (2/25 + 1/15)/2
        let out: EstimateOutcome<f64> = estimate(&s, &[100, 50], 1000, EstimatorKind::DApA).unwrap();
        assert_relative_eq!(out.value, (0.08 + 1.0 / 15.0) / 2.0, max_relative = 1e-14);
        let out: EstimateOutcome<f64> = estimate(&s, &[100, 50], 1000, EstimatorKind::DApR).unwrap();
        assert_relative_eq!(out.value, 3.0 / 40.0, max_relative = 1e-14);
    }

    #[test]
    fn single_probe_collapses_degree_method() {
        let s = sample(vec![2, 0, 5], vec![vec![3], vec![0], vec![9]]);
        let a: EstimateOutcome<f64> = estimate(&s, &[80], 1000, EstimatorKind::DRpA).unwrap();
        let b: EstimateOutcome<f64> = estimate(&s, &[80], 1000, EstimatorKind::DApA).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_mismatched_probe_columns() {
        let s = sample(vec![1], vec![vec![1, 2]]);
        assert!(estimate::<f64>(&s, &[10], 100, EstimatorKind::DRpR).is_err());
    }

    #[test]
    fn survey_log_format() {
        let rows = [SurveyEstimate {
            survey_id: 3,
            estimator: EstimatorKind::DRpA,
            outcome: EstimateOutcome::ok(0.25, 10, 0),
        }];
        let mut buf = Vec::new();
        write_survey_log(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "survey_id,estimator,value,flag,n_used\n3,dRpA,0.25,ok,10\n"
        );
    }

    fn ard_strategy() -> impl Strategy<Value = (Vec<u32>, Vec<Vec<u32>>, Vec<usize>)> {
        (1usize..12, 1usize..5).prop_flat_map(|(n, k)| {
            (
                prop::collection::vec(0u32..20, n),
                prop::collection::vec(prop::collection::vec(0u32..30, k), n),
                prop::collection::vec(1usize..200, k),
            )
        })
    }

    proptest! {
        #[test]
        fn scale_equivariance((y, rows, sizes) in ard_strategy(), c in 1u32..6) {
            let scaled: Vec<u32> = y.iter().map(|v| v * c).collect();
            let base = sample(y, rows.clone());
            let times = sample(scaled, rows);
            for kind in EstimatorKind::ALL {
                let a: EstimateOutcome<f64> = estimate(&base, &sizes, 1000, kind).unwrap();
                let b: EstimateOutcome<f64> = estimate(&times, &sizes, 1000, kind).unwrap();
                if let (Some(x), Some(z)) = (a.finite(), b.finite()) {
                    prop_assert!((x * c as f64 - z).abs() <= 1e-12 * z.abs().max(1e-300));
                    prop_assert!(x >= 0.0);
                }
            }
        }

        #[test]
        fn permutation_invariance(y in prop::collection::vec(0u32..20, 1..15), seed in 0u64..1000) {
            let d: Vec<f64> = y.iter().enumerate().map(|(i, _)| ((i as u64 * 7 + seed) % 13) as f64 + 1.0).collect();
            let mut idx: Vec<usize> = (0..y.len()).collect();
            idx.rotate_left((seed as usize) % y.len());
            let y2: Vec<u32> = idx.iter().map(|&i| y[i]).collect();
            let d2: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
            let r1 = prevalence_roa(&y, &d).unwrap().value;
            let r2 = prevalence_roa(&y2, &d2).unwrap().value;
            prop_assert!((r1 - r2).abs() <= 1e-12 * r1.abs().max(1e-300));
            let a1 = prevalence_aor(&y, &d).unwrap().value;
            let a2 = prevalence_aor(&y2, &d2).unwrap().value;
            prop_assert!((a1 - a2).abs() <= 1e-12 * a1.abs().max(1e-300));
        }

        #[test]
        fn constant_degrees_make_pooling_irrelevant(y in prop::collection::vec(0u32..50, 1..20), d in 1u32..100) {
            let degrees = vec![d as f64; y.len()];
            let roa = prevalence_roa(&y, &degrees).unwrap().value;
            let aor = prevalence_aor(&y, &degrees).unwrap().value;
            prop_assert!((roa - aor).abs() <= 1e-12 * roa.abs().max(1e-300));
        }

        #[test]
        fn single_probe_degrees_are_bit_identical(y in 0u32..5000, size in 1usize..100_000, n in 1usize..10_000_000) {
            let roa: f64 = degree_roa(&[y], &[size], n).unwrap();
            let aor: f64 = degree_aor(&[y], &[size], n).unwrap();
            prop_assert_eq!(roa.to_bits(), aor.to_bits());
        }

        #[test]
        fn equal_probe_sizes_and_constant_degrees_agree(y in prop::collection::vec(0u32..10, 1..10), row in prop::collection::vec(1u32..10, 1..4), size in 10usize..100) {
            let rows = vec![row.clone(); y.len()];
            let sizes = vec![size; row.len()];
            let s = sample(y, rows);
            let values: Vec<f64> = EstimatorKind::ALL.iter().map(|&k| estimate::<f64>(&s, &sizes, 1000, k).unwrap().value).collect();
            for v in &values[1..] {
                prop_assert!((v - values[0]).abs() <= 1e-12 * values[0].abs().max(1e-300));
            }
        }
    }
}
