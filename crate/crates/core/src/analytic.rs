//! First-order (delta method) moments of the dRpR and dRpA estimators under
//! the two-block SBM with a single probe group `K ⊂ L`, their scaled
//! `(a, p)` forms, bias sign regions, winner grids and the exact binomial
//! variances comparing RoA and AoR pooling.
//!
//! All expressions take the `n_H / n → R` limit and ignore the `-1` in the
//! starred group sizes, so `N_H* ≈ N_H` and `N_K* ≈ N_K`.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NsumError, Result};
use crate::estimators::EstimatorKind;
use crate::scalar::Scalar;

/// Relative difference below which two metric values count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Link probabilities of the two-block SBM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkProbabilities<T> {
    pub p_hh: T,
    pub p_hl: T,
    pub p_ll: T,
}

impl<T: Scalar> LinkProbabilities<T> {
    pub fn new(p_hh: T, p_hl: T, p_ll: T) -> Self {
        LinkProbabilities { p_hh, p_hl, p_ll }
    }

    /// `p_hh = p_ll = a * p`, `p_hl = p`.
    pub fn scaled(a: T, p: T) -> Self {
        LinkProbabilities {
            p_hh: a * p,
            p_hl: p,
            p_ll: a * p,
        }
    }

    pub fn uniform(p: T) -> Self {
        Self::new(p, p, p)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("p_hh", self.p_hh), ("p_hl", self.p_hl), ("p_ll", self.p_ll)] {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(NsumError::param(format!("{name} = {v} is not a probability")));
            }
        }
        Ok(())
    }
}

/// Estimators with closed-form moments: both use RoA degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClosedForm {
    DRpR,
    DRpA,
}

impl ClosedForm {
    pub const BOTH: [ClosedForm; 2] = [ClosedForm::DRpR, ClosedForm::DRpA];

    pub fn estimator(self) -> EstimatorKind {
        match self {
            ClosedForm::DRpR => EstimatorKind::DRpR,
            ClosedForm::DRpA => EstimatorKind::DRpA,
        }
    }
}

impl TryFrom<EstimatorKind> for ClosedForm {
    type Error = NsumError;

    fn try_from(kind: EstimatorKind) -> Result<Self> {
        match kind {
            EstimatorKind::DRpR => Ok(ClosedForm::DRpR),
            EstimatorKind::DRpA => Ok(ClosedForm::DRpA),
            other => Err(NsumError::param(format!("{other} has no closed-form moments"))),
        }
    }
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.estimator().fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair<T> {
    pub expectation: T,
    pub variance: T,
}

fn check_prevalence<T: Scalar>(r: T) -> Result<()> {
    if !(r > T::zero() && r < T::one()) {
        return Err(NsumError::param(format!("R = {r} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_positive<T: Scalar>(name: &str, v: T) -> Result<()> {
    if !(v > T::zero() && v.is_finite()) {
        return Err(NsumError::param(format!("{name} = {v} must be positive")));
    }
    Ok(())
}

fn check_singularities<T: Scalar>(kind: ClosedForm, probs: &LinkProbabilities<T>, r: T) -> Result<()> {
    match kind {
        ClosedForm::DRpR => {
            let denom = r * probs.p_hl + (T::one() - r) * probs.p_ll;
            if denom == T::zero() {
                return Err(NsumError::Singularity(
                    "expected probe count R p_HL + (1-R) p_LL is zero".into(),
                ));
            }
        }
        ClosedForm::DRpA => {
            if probs.p_hl == T::zero() || probs.p_ll == T::zero() {
                return Err(NsumError::Singularity(
                    "dRpA needs p_HL > 0 and p_LL > 0".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Limiting first-order expectation of the estimator.
pub fn expect_general<T: Scalar>(kind: ClosedForm, probs: &LinkProbabilities<T>, r: T) -> Result<T> {
    probs.validate()?;
    check_prevalence(r)?;
    check_singularities(kind, probs, r)?;
    let one = T::one();
    let LinkProbabilities { p_hh, p_hl, p_ll } = *probs;
    Ok(match kind {
        ClosedForm::DRpR => r * (r * p_hh + (one - r) * p_hl) / (r * p_hl + (one - r) * p_ll),
        ClosedForm::DRpA => r * (r * p_hh / p_hl + (one - r) * p_hl / p_ll),
    })
}

/// Limiting first-order variance for sample size `n`, population `n_total`
/// and probe group size `n_probe`.
///
/// For dRpA each respondent's ratio `Y_iH / Y_iK` is expanded with the
/// moments of its own block, so L respondents contribute terms in `p_LL`.
/// [`drpa_variance_printed`] keeps the alternative expression that divides
/// every term by `p_HL`; the two agree when `p_HL = p_LL`.
pub fn var_general<T: Scalar>(
    kind: ClosedForm,
    probs: &LinkProbabilities<T>,
    r: T,
    n: T,
    n_total: T,
    n_probe: T,
) -> Result<T> {
    probs.validate()?;
    check_prevalence(r)?;
    check_positive("n", n)?;
    check_positive("N", n_total)?;
    check_positive("N_K", n_probe)?;
    check_singularities(kind, probs, r)?;
    let one = T::one();
    let q = one - r;
    let LinkProbabilities { p_hh, p_hl, p_ll } = *probs;
    Ok(match kind {
        ClosedForm::DRpR => {
            let probe_mean = r * p_hl + q * p_ll;
            let hidden_mean = r * p_hh + q * p_hl;
            let hidden_var = r * p_hh * (one - p_hh) + q * p_hl * (one - p_hl);
            let probe_var = r * p_hl * (one - p_hl) + q * p_ll * (one - p_ll);
            let d4 = probe_mean.powi(4);
            r / (n * n_total) * probe_mean.powi(2) * hidden_var / d4
                + r * r / (n * n_probe) * hidden_mean.powi(2) * probe_var / d4
        }
        ClosedForm::DRpA => {
            let hidden_part = r * p_hh * (one - p_hh) / (n_total * p_hl.powi(2))
                + r * r * p_hh.powi(2) * (one - p_hl) / (n_probe * p_hl.powi(3));
            let rest_part = r * p_hl * (one - p_hl) / (n_total * p_ll.powi(2))
                + r * r * p_hl.powi(2) * (one - p_ll) / (n_probe * p_ll.powi(3));
            r / n * hidden_part + q / n * rest_part
        }
    })
}

/// dRpA variance with `p_HL` in every denominator, as it is commonly
/// printed. Differs from [`var_general`] whenever `p_HL != p_LL`.
pub fn drpa_variance_printed<T: Scalar>(
    probs: &LinkProbabilities<T>,
    r: T,
    n: T,
    n_total: T,
    n_probe: T,
) -> Result<T> {
    probs.validate()?;
    check_prevalence(r)?;
    check_singularities(ClosedForm::DRpA, probs, r)?;
    let one = T::one();
    let q = one - r;
    let LinkProbabilities { p_hh, p_hl, p_ll } = *probs;
    Ok(r / (n * n_total * p_hl.powi(2)) * (r * p_hh * (one - p_hh) + q * p_ll * (one - p_hl))
        + r * r / (n * n_probe * p_hl.powi(3))
            * (r * p_hh.powi(2) * (one - p_hl) + q * p_hl.powi(2) * (one - p_ll)))
}

pub fn moments_general<T: Scalar>(
    kind: ClosedForm,
    probs: &LinkProbabilities<T>,
    r: T,
    n: T,
    n_total: T,
    n_probe: T,
) -> Result<MomentPair<T>> {
    Ok(MomentPair {
        expectation: expect_general(kind, probs, r)?,
        variance: var_general(kind, probs, r, n, n_total, n_probe)?,
    })
}

/// Bias in the scaled model; depends on `a` and `R` only.
pub fn bias_scaled<T: Scalar>(kind: ClosedForm, a: T, r: T) -> T {
    let one = T::one();
    match kind {
        ClosedForm::DRpR => r * ((a - one) * (T::lit(2.0) * r - one) / ((one - r) * a + r)),
        ClosedForm::DRpA => r * ((a - one) * ((a + one) * r - one) / a),
    }
}

/// Scaled-form variance in terms of `(a, R, p, r_K, nN)`.
pub fn var_scaled<T: Scalar>(kind: ClosedForm, a: T, r: T, p: T, r_k: T, nn: T) -> Result<T> {
    check_positive("a", a)?;
    check_prevalence(r)?;
    if !(p > T::zero() && p <= T::one()) {
        return Err(NsumError::param(format!("p = {p} must lie in (0, 1]")));
    }
    if a * p > T::one() {
        return Err(NsumError::param(format!("a*p exceeds 1 (a = {a}, p = {p})")));
    }
    if !(r_k > T::zero() && r_k < T::one()) {
        return Err(NsumError::param(format!("r_K = {r_k} must lie in (0, 1)")));
    }
    check_positive("nN", nn)?;
    let one = T::one();
    let q = one - r;
    let prefactor = r / (nn * p);
    Ok(match kind {
        ClosedForm::DRpR => {
            let probe_mean = r + q * a;
            let hidden_mean = r * a + q;
            let d4 = probe_mean.powi(4);
            let first = probe_mean.powi(2) * (r * a + q - (r * a * a + q) * p) / d4;
            let second = r / r_k * hidden_mean.powi(2) * (r + q * a - (r + q * a * a) * p) / d4;
            prefactor * (first + second)
        }
        ClosedForm::DRpA => {
            let hidden = r * a * (one - a * p) + r * r * a * a * (one - p) / r_k;
            let rest = q * ((one - p) / (a * a) + r * (one - a * p) / (r_k * a.powi(3)));
            prefactor * (hidden + rest)
        }
    })
}

/// Scaled counterpart of [`drpa_variance_printed`].
pub fn drpa_variance_printed_scaled<T: Scalar>(a: T, r: T, p: T, r_k: T, nn: T) -> T {
    let one = T::one();
    r / (nn * p)
        * (p * a * (one - a) * r
            + (one - p) * a
            + ((((one - p) * a * a + p * a - one) * r * r) + (one - p * a) * r) / r_k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasSign {
    Positive,
    Zero,
    Negative,
}

/// Sign of the scaled bias from the piecewise case description, without
/// evaluating the bias itself.
pub fn bias_sign_region<T: Scalar>(kind: ClosedForm, a: T, r: T) -> BiasSign {
    let one = T::one();
    match kind {
        ClosedForm::DRpR => {
            let half = T::lit(0.5);
            if a == one || r == half {
                BiasSign::Zero
            } else if (a > one && r > half) || (a < one && r < half) {
                BiasSign::Positive
            } else {
                BiasSign::Negative
            }
        }
        ClosedForm::DRpA => {
            let boundary = (one - r) / r;
            if a == one || a == boundary {
                BiasSign::Zero
            } else if (a > one && a > boundary) || (a < one && a < boundary) {
                BiasSign::Positive
            } else {
                BiasSign::Negative
            }
        }
    }
}

/// Parameters held fixed across a winner grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFixed<T> {
    pub p: T,
    pub r_k: T,
    pub nn: T,
}

impl<T: Scalar> GridFixed<T> {
    pub fn new(p: T, r_k: T, nn: T) -> Result<Self> {
        if !(p > T::zero() && p <= T::one()) {
            return Err(NsumError::param(format!("p = {p} must lie in (0, 1]")));
        }
        if !(r_k > T::zero() && r_k < T::one()) {
            return Err(NsumError::param(format!("r_K = {r_k} must lie in (0, 1)")));
        }
        check_positive("nN", nn)?;
        Ok(GridFixed { p, r_k, nn })
    }
}

/// Evenly spaced axis values, snapped to a `1e-10` lattice so that e.g. the
/// `log a = 0` column is exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> Axis<T> {
    pub fn range(min: T, max: T, step: T) -> Result<Self> {
        if !(step > T::zero()) || !(max >= min) || !min.is_finite() || !max.is_finite() {
            return Err(NsumError::param(format!(
                "invalid axis range [{min}, {max}] step {step}"
            )));
        }
        let count = ((max - min) / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1;
        let snap = T::lit(1e10);
        let values = (0..count)
            .map(|i| ((min + T::count(i) * step) * snap).round() / snap)
            .collect();
        Ok(Axis { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Default grids: the wide view and the assortative, low-prevalence view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridPreset {
    Fig1Top,
    Fig1Bottom,
}

impl GridPreset {
    /// `(log_a min, max, step, R min, max, step)`
    pub fn ranges(self) -> [f64; 6] {
        match self {
            GridPreset::Fig1Top => [-4.0, 4.0, 0.1, 0.01, 0.99, 0.02],
            GridPreset::Fig1Bottom => [0.0, 4.0, 0.05, 0.001, 0.1, 0.001],
        }
    }

    pub fn axes<T: Scalar>(self) -> (Axis<T>, Axis<T>) {
        let [a0, a1, da, r0, r1, dr] = self.ranges().map(T::lit);
        (
            Axis::range(a0, a1, da).expect("preset log a axis"),
            Axis::range(r0, r1, dr).expect("preset R axis"),
        )
    }
}

/// Per-metric outcome of comparing dRpR with dRpA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Winner {
    #[serde(rename = "dRpR")]
    DRpR,
    #[serde(rename = "dRpA")]
    DRpA,
    #[serde(rename = "tie")]
    Tie,
    #[serde(rename = "invalid")]
    Invalid,
}

impl fmt::Display for Winner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Winner::DRpR => "dRpR",
            Winner::DRpA => "dRpA",
            Winner::Tie => "tie",
            Winner::Invalid => "invalid",
        })
    }
}

/// Smaller value wins; relative differences under [`TIE_TOLERANCE`] tie.
pub fn pick_winner<T: Scalar>(drpr: T, drpa: T) -> Winner {
    if !drpr.is_finite() || !drpa.is_finite() {
        return Winner::Invalid;
    }
    let scale = drpr.abs().max(drpa.abs());
    if scale == T::zero() || (drpr - drpa).abs() < T::lit(TIE_TOLERANCE) * scale {
        Winner::Tie
    } else if drpa < drpr {
        Winner::DRpA
    } else {
        Winner::DRpR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Bias,
    Variance,
    Rmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell<T> {
    pub log_a: T,
    pub r: T,
    pub bias_drpr: T,
    pub bias_drpa: T,
    pub var_drpr: T,
    pub var_drpa: T,
    pub rmse_drpr: T,
    pub rmse_drpa: T,
    pub bias_winner: Winner,
    pub var_winner: Winner,
    pub rmse_winner: Winner,
}

impl<T: Scalar> GridCell<T> {
    pub fn evaluate(fixed: &GridFixed<T>, log_a: T, r: T) -> Self {
        let a = log_a.exp();
        let vars = (
            var_scaled(ClosedForm::DRpR, a, r, fixed.p, fixed.r_k, fixed.nn),
            var_scaled(ClosedForm::DRpA, a, r, fixed.p, fixed.r_k, fixed.nn),
        );
        let (var_drpr, var_drpa) = match vars {
            (Ok(x), Ok(y)) => (x, y),
            _ => {
                let nan = T::nan();
                return GridCell {
                    log_a,
                    r,
                    bias_drpr: nan,
                    bias_drpa: nan,
                    var_drpr: nan,
                    var_drpa: nan,
                    rmse_drpr: nan,
                    rmse_drpa: nan,
                    bias_winner: Winner::Invalid,
                    var_winner: Winner::Invalid,
                    rmse_winner: Winner::Invalid,
                };
            }
        };
        let bias_drpr = bias_scaled(ClosedForm::DRpR, a, r);
        let bias_drpa = bias_scaled(ClosedForm::DRpA, a, r);
        let rmse_drpr = (bias_drpr * bias_drpr + var_drpr).sqrt();
        let rmse_drpa = (bias_drpa * bias_drpa + var_drpa).sqrt();
        GridCell {
            log_a,
            r,
            bias_drpr,
            bias_drpa,
            var_drpr,
            var_drpa,
            rmse_drpr,
            rmse_drpa,
            bias_winner: pick_winner(bias_drpr.abs(), bias_drpa.abs()),
            var_winner: pick_winner(var_drpr, var_drpa),
            rmse_winner: pick_winner(rmse_drpr, rmse_drpa),
        }
    }

    pub fn winner(&self, metric: Metric) -> Winner {
        match metric {
            Metric::Bias => self.bias_winner,
            Metric::Variance => self.var_winner,
            Metric::Rmse => self.rmse_winner,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.rmse_winner != Winner::Invalid
    }
}

/// Cells over `log_a_axis × r_axis`, row-major with `log a` outer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerGrid<T> {
    pub fixed: GridFixed<T>,
    pub log_a_axis: Axis<T>,
    pub r_axis: Axis<T>,
    pub cells: Vec<GridCell<T>>,
}

impl<T: Scalar> WinnerGrid<T> {
    pub fn cell(&self, a_index: usize, r_index: usize) -> &GridCell<T> {
        &self.cells[a_index * self.r_axis.len() + r_index]
    }

    pub fn count(&self, metric: Metric, winner: Winner) -> usize {
        self.cells.iter().filter(|c| c.winner(metric) == winner).count()
    }

    pub const CSV_HEADER: [&'static str; 11] = [
        "log_a",
        "R",
        "bias_drpr",
        "bias_drpa",
        "var_drpr",
        "var_drpa",
        "rmse_drpr",
        "rmse_drpa",
        "bias_winner",
        "var_winner",
        "rmse_winner",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for c in &self.cells {
            w.write_record([
                c.log_a.to_string(),
                c.r.to_string(),
                c.bias_drpr.to_string(),
                c.bias_drpa.to_string(),
                c.var_drpr.to_string(),
                c.var_drpa.to_string(),
                c.rmse_drpr.to_string(),
                c.rmse_drpa.to_string(),
                c.bias_winner.to_string(),
                c.var_winner.to_string(),
                c.rmse_winner.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed parameters and axis extents for the JSON sidecar.
    pub fn sidecar(&self) -> serde_json::Value {
        let extent = |axis: &Axis<T>| {
            serde_json::json!({
                "min": axis.values.first().and_then(|v| v.to_f64()),
                "max": axis.values.last().and_then(|v| v.to_f64()),
                "len": axis.len(),
            })
        };
        serde_json::json!({
            "p": self.fixed.p.to_f64(),
            "r_k": self.fixed.r_k.to_f64(),
            "nN": self.fixed.nn.to_f64(),
            "log_a": extent(&self.log_a_axis),
            "R": extent(&self.r_axis),
            "cells": self.cells.len(),
            "invalid_cells": self.count(Metric::Rmse, Winner::Invalid),
            "rmse_drpa_wins": self.count(Metric::Rmse, Winner::DRpA),
        })
    }
}

pub fn winner_grid<T: Scalar>(fixed: GridFixed<T>, log_a_axis: Axis<T>, r_axis: Axis<T>) -> WinnerGrid<T> {
    let cells = log_a_axis
        .values
        .par_iter()
        .flat_map_iter(|&log_a| r_axis.values.iter().map(move |&r| GridCell::evaluate(&fixed, log_a, r)))
        .collect();
    WinnerGrid {
        fixed,
        log_a_axis,
        r_axis,
        cells,
    }
}

/// One grid per fixed set, all over the same axes.
pub fn grid_sweep<T: Scalar>(fixed_sets: &[GridFixed<T>], log_a_axis: &Axis<T>, r_axis: &Axis<T>) -> Vec<WinnerGrid<T>> {
    fixed_sets
        .iter()
        .map(|&f| winner_grid(f, log_a_axis.clone(), r_axis.clone()))
        .collect()
}

/// Exact binomial-model variances of the RoA and AoR prevalence estimators
/// with known degrees: `R(1-R)/n` over the arithmetic and harmonic mean.
pub fn s1_prevalence_variances<T: Scalar>(degrees: &[T], r: T, n: usize) -> Result<(T, T)> {
    check_prevalence(r)?;
    if degrees.is_empty() {
        return Err(NsumError::param("degree vector is empty"));
    }
    if n != degrees.len() {
        return Err(NsumError::param(format!(
            "sample size {n} does not match {} degrees",
            degrees.len()
        )));
    }
    if let Some(d) = degrees.iter().find(|&&d| !(d > T::zero())) {
        return Err(NsumError::param(format!("degree {d} must be positive")));
    }
    let count = T::count(n);
    let mean = degrees.iter().fold(T::zero(), |s, &d| s + d) / count;
    let harmonic = count / degrees.iter().fold(T::zero(), |s, &d| s + d.recip());
    let base = r * (T::one() - r) / count;
    Ok((base / mean, base / harmonic))
}

/// Exact binomial-model variances of the RoA and AoR degree estimators for
/// a respondent of degree `d_i`.
pub fn s1_degree_variances<T: Scalar>(d_i: T, n_population: T, probe_sizes: &[T]) -> Result<(T, T)> {
    if probe_sizes.is_empty() {
        return Err(NsumError::param("probe list is empty"));
    }
    if let Some(s) = probe_sizes.iter().find(|&&s| !(s > T::zero())) {
        return Err(NsumError::param(format!("probe size {s} must be positive")));
    }
    check_positive("d_i", d_i)?;
    let total = probe_sizes.iter().fold(T::zero(), |s, &x| s + x);
    if !(total < n_population) {
        return Err(NsumError::param("probe sizes must sum to less than N"));
    }
    let k = T::count(probe_sizes.len());
    let squares = probe_sizes.iter().fold(T::zero(), |s, &x| s + x * x);
    let inverse = probe_sizes.iter().fold(T::zero(), |s, &x| s + x.recip());
    let var_roa = d_i * (n_population / total - squares / (total * total));
    let var_aor = d_i * (n_population / (k * k) * inverse - k.recip());
    Ok((var_roa, var_aor))
}
