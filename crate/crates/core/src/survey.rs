//! Survey samples and their ARD responses.
//!
//! Responses come either from a realized [`Network`] (exact neighbor counts)
//! or straight from the binomial response model of the two-block SBM, which
//! skips graph realization entirely.

use std::io::Write;

use fixedbitset::FixedBitSet;
use rand::seq::index;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{NsumError, Result};
use crate::netgen::{BlockParams, GroupId, Network};
use crate::seed;

/// One survey's aggregated relational data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArdSample {
    respondent_ids: Vec<u32>,
    is_hidden: Vec<bool>,
    y_hidden: Vec<u32>,
    /// Row-major `len × n_probes`.
    y_probe: Vec<u32>,
    n_probes: usize,
    true_degrees: Option<Vec<u32>>,
}

impl ArdSample {
    /// Builds a sample from raw responses; respondents get ids `0..n` and
    /// no group or degree information.
    pub fn from_responses(y_hidden: Vec<u32>, probe_rows: Vec<Vec<u32>>) -> Result<Self> {
        if y_hidden.len() != probe_rows.len() {
            return Err(NsumError::param("one probe row per respondent is required"));
        }
        let n_probes = probe_rows.first().map_or(0, Vec::len);
        if probe_rows.iter().any(|r| r.len() != n_probes) {
            return Err(NsumError::param("probe rows have different lengths"));
        }
        let n = y_hidden.len();
        Ok(ArdSample {
            respondent_ids: (0..n as u32).collect(),
            is_hidden: vec![false; n],
            y_hidden,
            y_probe: probe_rows.into_iter().flatten().collect(),
            n_probes,
            true_degrees: None,
        })
    }

    pub fn len(&self) -> usize {
        self.respondent_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.respondent_ids.is_empty()
    }

    pub fn n_probes(&self) -> usize {
        self.n_probes
    }

    pub fn respondent_ids(&self) -> &[u32] {
        &self.respondent_ids
    }

    pub fn is_hidden(&self) -> &[bool] {
        &self.is_hidden
    }

    pub fn y_hidden(&self) -> &[u32] {
        &self.y_hidden
    }

    pub fn probe_row(&self, i: usize) -> &[u32] {
        &self.y_probe[i * self.n_probes..(i + 1) * self.n_probes]
    }

    pub fn true_degrees(&self) -> Option<&[u32]> {
        self.true_degrees.as_deref()
    }

    pub fn n_hidden_in_sample(&self) -> usize {
        self.is_hidden.iter().filter(|&&h| h).count()
    }

    /// Writes `respondent_id,is_hidden,y_hidden,degree,y_probe_1,...`.
    /// The degree column is empty for model-mode samples.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "respondent_id".to_string(),
            "is_hidden".to_string(),
            "y_hidden".to_string(),
            "degree".to_string(),
        ];
        header.extend((1..=self.n_probes).map(|j| format!("y_probe_{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![
                self.respondent_ids[i].to_string(),
                (self.is_hidden[i] as u8).to_string(),
                self.y_hidden[i].to_string(),
                self.true_degrees
                    .as_ref()
                    .map_or(String::new(), |d| d[i].to_string()),
            ];
            row.extend(self.probe_row(i).iter().map(u32::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Uniform size-`n_sample` subset of `0..n_population`, in random order.
pub fn srs_without_replacement(n_population: usize, n_sample: usize, seed: u64) -> Result<Vec<u32>> {
    if n_sample > n_population {
        return Err(NsumError::param(format!(
            "sample size {n_sample} exceeds population {n_population}"
        )));
    }
    let mut rng = seed::rng(seed);
    Ok(index::sample(&mut rng, n_population, n_sample)
        .into_iter()
        .map(|i| i as u32)
        .collect())
}

/// Exact ARD for `respondents` in a realized network.
pub fn ard_from_graph(
    network: &Network,
    respondents: &[u32],
    hidden: &FixedBitSet,
    probes: &[GroupId],
) -> Result<ArdSample> {
    let n = network.n_nodes();
    let masks: Vec<&FixedBitSet> = probes
        .iter()
        .map(|&id| network.group(id).map(|g| g.mask()))
        .collect::<Result<_>>()?;
    let mut seen = FixedBitSet::with_capacity(n);
    let k = probes.len();
    let mut y_hidden = Vec::with_capacity(respondents.len());
    let mut y_probe = vec![0u32; respondents.len() * k];
    let mut degrees = Vec::with_capacity(respondents.len());
    let mut is_hidden = Vec::with_capacity(respondents.len());
    for (i, &r) in respondents.iter().enumerate() {
        if r as usize >= n {
            return Err(NsumError::param(format!("respondent {r} out of range")));
        }
        if seen.put(r as usize) {
            return Err(NsumError::param(format!("respondent {r} sampled twice")));
        }
        let row = &mut y_probe[i * k..(i + 1) * k];
        let mut yh = 0u32;
        let nbrs = network.neighbors(r);
        for &v in nbrs {
            let v = v as usize;
            yh += hidden.contains(v) as u32;
            for (count, mask) in row.iter_mut().zip(&masks) {
                *count += mask.contains(v) as u32;
            }
        }
        y_hidden.push(yh);
        degrees.push(nbrs.len() as u32);
        is_hidden.push(hidden.contains(r as usize));
    }
    Ok(ArdSample {
        respondent_ids: respondents.to_vec(),
        is_hidden,
        y_hidden,
        y_probe,
        n_probes: k,
        true_degrees: Some(degrees),
    })
}

/// How the hidden/rest split of a model-mode sample is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// Simple random sample from the whole population.
    Random,
    /// Exactly `round(n * R)` hidden respondents.
    Conditioned(f64),
}

/// ARD drawn from the binomial response model with a single probe group
/// `K ⊂ L` of `probe_size` nodes.
///
/// The population is laid out as H = `0..N_H`, K = `N_H..N_H + N_K`, and
/// the rest of L after that; respondent ids refer to this layout. Members
/// never count themselves: a hidden respondent sees `N_H - 1` possible
/// hidden alters and a probe member `N_K - 1` probe alters.
pub fn ard_from_model(
    params: &BlockParams,
    n_sample: usize,
    probe_size: usize,
    composition: Composition,
    seed: u64,
) -> Result<ArdSample> {
    params.validate()?;
    let nh = params.n_hidden;
    let nl = params.n_rest();
    if probe_size == 0 || probe_size > nl {
        return Err(NsumError::param(format!(
            "probe size {probe_size} must lie in 1..={nl}"
        )));
    }
    let mut rng = seed::rng(seed);
    let respondent_ids: Vec<u32> = match composition {
        Composition::Random => {
            if n_sample > params.n_total {
                return Err(NsumError::param("sample larger than population"));
            }
            index::sample(&mut rng, params.n_total, n_sample)
                .into_iter()
                .map(|i| i as u32)
                .collect()
        }
        Composition::Conditioned(r) => {
            if !(0.0..=1.0).contains(&r) {
                return Err(NsumError::param(format!("conditioned share {r} is not in [0, 1]")));
            }
            let n_h = (n_sample as f64 * r).round() as usize;
            let n_l = n_sample - n_h;
            if n_h > nh || n_l > nl {
                return Err(NsumError::param(format!(
                    "cannot draw {n_h} hidden and {n_l} other respondents from {nh} and {nl}"
                )));
            }
            let mut ids: Vec<u32> = index::sample(&mut rng, nh, n_h)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            ids.extend(index::sample(&mut rng, nl, n_l).into_iter().map(|i| (nh + i) as u32));
            ids
        }
    };

    let binom = |trials: usize, p: f64| {
        Binomial::new(trials as u64, p).map_err(|e| NsumError::param(format!("binomial({trials}, {p}): {e}")))
    };
    // (hidden alters, probe alters) per respondent type
    let hidden_resp = (binom(nh - 1, params.p_hh)?, binom(probe_size, params.p_hl)?);
    let probe_resp = (binom(nh, params.p_hl)?, binom(probe_size - 1, params.p_ll)?);
    let other_resp = (binom(nh, params.p_hl)?, binom(probe_size, params.p_ll)?);

    let mut is_hidden = Vec::with_capacity(respondent_ids.len());
    let mut y_hidden = Vec::with_capacity(respondent_ids.len());
    let mut y_probe = Vec::with_capacity(respondent_ids.len());
    for &id in &respondent_ids {
        let id = id as usize;
        let (to_hidden, to_probe) = if id < nh {
            &hidden_resp
        } else if id < nh + probe_size {
            &probe_resp
        } else {
            &other_resp
        };
        is_hidden.push(id < nh);
        y_hidden.push(to_hidden.sample(&mut rng) as u32);
        y_probe.push(to_probe.sample(&mut rng) as u32);
    }
    Ok(ArdSample {
        respondent_ids,
        is_hidden,
        y_hidden,
        y_probe,
        n_probes: 1,
        true_degrees: None,
    })
}
