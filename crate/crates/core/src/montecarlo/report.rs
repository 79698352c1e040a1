use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::EstimatorKind;

/// One row of an exported results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub case_id: usize,
    pub estimator: String,
    pub mean: f64,
    pub sd: f64,
    pub bias: f64,
    pub rmse: f64,
    pub rel_bias: f64,
    pub rel_se: f64,
    pub rel_rmse: f64,
    pub n_valid: usize,
    pub n_nan: usize,
    pub n_inf: usize,
    #[serde(rename = "true_R")]
    pub true_r: f64,
    pub degree_ratio: Option<f64>,
    pub band: Option<String>,
    pub assortativity: Option<f64>,
}

pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBandStats {
    pub cases: usize,
    pub mean_rel_bias: f64,
    pub mean_rel_rmse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub cases: usize,
    pub estimators: BTreeMap<String, EstimatorBandStats>,
    /// Cases where dRpA has the smaller relative RMSE (both present).
    pub drpa_beats_drpr: usize,
}

/// Per degree-ratio band (`"none"` when the ratio was undefined).
pub fn summarize_by_band(rows: &[ResultRow]) -> BTreeMap<String, BandSummary> {
    let mut out: BTreeMap<String, BandSummary> = BTreeMap::new();
    let mut cases: BTreeMap<usize, Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        cases.entry(row.case_id).or_default().push(row);
    }
    let drpr = EstimatorKind::DRpR.name();
    let drpa = EstimatorKind::DRpA.name();
    for rows in cases.values() {
        let band = rows[0].band.clone().unwrap_or_else(|| "none".into());
        let summary = out.entry(band).or_default();
        summary.cases += 1;
        for row in rows {
            if !row.rel_rmse.is_finite() {
                continue;
            }
            let s = summary.estimators.entry(row.estimator.clone()).or_default();
            s.cases += 1;
            s.mean_rel_bias += row.rel_bias;
            s.mean_rel_rmse += row.rel_rmse;
        }
        let find = |name: &str| rows.iter().find(|r| r.estimator == name).map(|r| r.rel_rmse);
        if let (Some(r), Some(a)) = (find(drpr), find(drpa)) {
            summary.drpa_beats_drpr += (a < r) as usize;
        }
    }
    for summary in out.values_mut() {
        for s in summary.estimators.values_mut() {
            s.mean_rel_bias /= s.cases as f64;
            s.mean_rel_rmse /= s.cases as f64;
        }
    }
    out
}
