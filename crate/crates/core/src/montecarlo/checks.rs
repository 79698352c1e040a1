use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, Hypergeometric};

use crate::analytic::{s1_degree_variances, s1_prevalence_variances};
use crate::error::{NsumError, Result};
use crate::seed;

const CHUNK: usize = 10_000;

/// Runs `n_reps` draws in fixed-size chunks, each chunk on its own stream,
/// and concatenates the results in order.
fn chunked<T: Send>(n_reps: usize, base: u64, draw: impl Fn(&mut seed::Rng) -> T + Sync) -> Vec<T> {
    let n_chunks = n_reps.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed::rng(seed::mix(base, c as u64));
            let len = CHUNK.min(n_reps - c * CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect::<Vec<T>>()
        })
        .flatten_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypergeomReport {
    pub n_total: usize,
    pub n_hidden: usize,
    /// Hidden alters available to the simulated node.
    pub hidden_alters: usize,
    pub p: f64,
    pub d_condition: usize,
    pub n_reps: usize,
    /// Draws with `d = d_condition`.
    pub n_hits: usize,
    pub empirical: Vec<f64>,
    pub exact: Vec<f64>,
    pub tv_distance: f64,
}

/// Simulates the `N - 1` potential links of one ER node and compares the
/// distribution of its hidden-alter count given degree `d_condition` with
/// Hypergeometric(N - 1, N_H*, d). `N_H* = N_H - 1` when the node itself is
/// hidden.
pub fn hypergeom_check(
    n_total: usize,
    n_hidden: usize,
    p: f64,
    d_condition: usize,
    respondent_hidden: bool,
    n_reps: usize,
    seed: u64,
) -> Result<HypergeomReport> {
    if !(2..=100).contains(&n_total) {
        return Err(NsumError::param(format!("N = {n_total} must lie in 2..=100")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(NsumError::param(format!("p = {p} must lie in (0, 1)")));
    }
    if n_hidden > n_total || (respondent_hidden && n_hidden == 0) {
        return Err(NsumError::param("hidden group size inconsistent with N"));
    }
    let alters = n_total - 1;
    if d_condition > alters {
        return Err(NsumError::param(format!("d = {d_condition} exceeds N - 1 = {alters}")));
    }
    let hidden_alters = if respondent_hidden { n_hidden - 1 } else { n_hidden };

    // alters 0..hidden_alters are hidden
    let draws = chunked(n_reps, seed, |rng| {
        let (mut d, mut y) = (0usize, 0usize);
        for j in 0..alters {
            if rng.random::<f64>() < p {
                d += 1;
                y += (j < hidden_alters) as usize;
            }
        }
        (d, y)
    });
    let mut counts = vec![0usize; d_condition + 1];
    for (d, y) in draws {
        if d == d_condition {
            counts[y] += 1;
        }
    }
    let n_hits: usize = counts.iter().sum();
    if n_hits == 0 {
        return Err(NsumError::InsufficientData(format!(
            "degree {d_condition} never occurred in {n_reps} draws"
        )));
    }
    let dist = Hypergeometric::new(alters as u64, hidden_alters as u64, d_condition as u64)
        .map_err(|e| NsumError::param(e.to_string()))?;
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / n_hits as f64).collect();
    let exact: Vec<f64> = (0..=d_condition).map(|y| dist.pmf(y as u64)).collect();
    let tv_distance = 0.5 * empirical.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(HypergeomReport {
        n_total,
        n_hidden,
        hidden_alters,
        p,
        d_condition,
        n_reps,
        n_hits,
        empirical,
        exact,
        tv_distance,
    })
}

/// Closed-form variance against its simulated counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub closed_form: f64,
    pub simulated: f64,
    /// Standard error of `simulated`: `sqrt((m4 - s^4) / reps)`.
    pub se: f64,
    pub z: f64,
    pub pass: bool,
}

impl MomentCheck {
    fn new(closed_form: f64, values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let simulated = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        let se = ((m4 - simulated * simulated).max(0.0) / n).sqrt();
        let diff = simulated - closed_form;
        let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        MomentCheck {
            closed_form,
            simulated,
            se,
            z,
            pass: z.abs() <= 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum S1Family {
    Prevalence,
    Degree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S1Report {
    pub family: S1Family,
    pub n_reps: usize,
    pub roa: MomentCheck,
    pub aor: MomentCheck,
    /// Closed-form RoA variance is below the AoR one (strictly, unless the
    /// inputs are constant, where they must agree).
    pub ordering_holds: bool,
    pub pass: bool,
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

fn ordering(roa: f64, aor: f64, constant: bool) -> bool {
    if constant {
        (roa - aor).abs() <= 1e-12 * aor.abs()
    } else {
        roa < aor
    }
}

fn binomials(trials: &[u64], p: &[f64]) -> Result<Vec<Binomial>> {
    trials
        .iter()
        .zip(p)
        .map(|(&t, &q)| Binomial::new(t, q).map_err(|e| NsumError::param(format!("binomial({t}, {q}): {e}"))))
        .collect()
}

/// Known degrees `d_i`, responses `y_i ~ Binomial(d_i, R)`; compares the
/// RoA (`sum y / sum d`) and AoR (`mean y/d`) prevalence variances with
/// their closed forms.
pub fn s1_prevalence_mc_check(degrees: &[u64], r: f64, n_reps: usize, seed: u64) -> Result<S1Report> {
    if n_reps < 2 {
        return Err(NsumError::param("need at least two replicates"));
    }
    let d: Vec<f64> = degrees.iter().map(|&x| x as f64).collect();
    let (roa_cf, aor_cf) = s1_prevalence_variances(&d, r, d.len())?;
    let dists = binomials(degrees, &vec![r; degrees.len()])?;
    let total: f64 = d.iter().sum();
    let draws = chunked(n_reps, seed, |rng| {
        let (mut sum_y, mut aor) = (0.0, 0.0);
        for (dist, di) in dists.iter().zip(&d) {
            let y = dist.sample(rng) as f64;
            sum_y += y;
            aor += y / di;
        }
        (sum_y / total, aor / d.len() as f64)
    });
    Ok(s1_report(S1Family::Prevalence, roa_cf, aor_cf, &draws, is_constant(&d)))
}

/// Respondent of degree `d_i` with `y_j ~ Binomial(d_i, N_j / N)` per probe
/// group; compares RoA and AoR degree-estimator variances with their
/// closed forms.
pub fn s1_degree_mc_check(
    d_i: u64,
    n_population: usize,
    probe_sizes: &[usize],
    n_reps: usize,
    seed: u64,
) -> Result<S1Report> {
    if n_reps < 2 {
        return Err(NsumError::param("need at least two replicates"));
    }
    let sizes: Vec<f64> = probe_sizes.iter().map(|&s| s as f64).collect();
    let n = n_population as f64;
    let (roa_cf, aor_cf) = s1_degree_variances(d_i as f64, n, &sizes)?;
    let shares: Vec<f64> = sizes.iter().map(|s| s / n).collect();
    let dists = binomials(&vec![d_i; sizes.len()], &shares)?;
    let total: f64 = sizes.iter().sum();
    let k = sizes.len() as f64;
    let draws = chunked(n_reps, seed, |rng| {
        let (mut sum_y, mut aor) = (0.0, 0.0);
        for (dist, s) in dists.iter().zip(&sizes) {
            let y = dist.sample(rng) as f64;
            sum_y += y;
            aor += n * y / s;
        }
        (n * sum_y / total, aor / k)
    });
    Ok(s1_report(S1Family::Degree, roa_cf, aor_cf, &draws, is_constant(&sizes)))
}

fn s1_report(family: S1Family, roa_cf: f64, aor_cf: f64, draws: &[(f64, f64)], constant: bool) -> S1Report {
    let roa_values: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let aor_values: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let roa = MomentCheck::new(roa_cf, &roa_values);
    let aor = MomentCheck::new(aor_cf, &aor_values);
    let ordering_holds = ordering(roa_cf, aor_cf, constant);
    let pass = roa.pass && aor.pass && ordering_holds;
    S1Report {
        family,
        n_reps: draws.len(),
        roa,
        aor,
        ordering_holds,
        pass,
    }
}

/// Outcome of [`s1_random_orderings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingSweep {
    pub prevalence_checked: usize,
    pub prevalence_violations: usize,
    pub degree_checked: usize,
    pub degree_violations: usize,
}

impl OrderingSweep {
    pub fn pass(&self) -> bool {
        self.prevalence_violations == 0 && self.degree_violations == 0
    }
}

/// Checks the closed-form RoA < AoR orderings on `n_vectors` random
/// non-constant degree vectors and as many random probe-size vectors.
pub fn s1_random_orderings(n_vectors: usize, seed: u64) -> Result<OrderingSweep> {
    let mut rng = seed::rng(seed);
    let non_constant = |rng: &mut seed::Rng, len_max: usize, hi: u64| loop {
        let len = rng.random_range(2..=len_max);
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(1..=hi) as f64).collect();
        if !is_constant(&v) {
            break v;
        }
    };
    let mut sweep = OrderingSweep {
        prevalence_checked: 0,
        prevalence_violations: 0,
        degree_checked: 0,
        degree_violations: 0,
    };
    for _ in 0..n_vectors {
        let d = non_constant(&mut rng, 60, 500);
        let r = rng.random_range(0.001..0.999);
        let (roa, aor) = s1_prevalence_variances(&d, r, d.len())?;
        sweep.prevalence_checked += 1;
        sweep.prevalence_violations += !(roa < aor) as usize;

        let sizes = non_constant(&mut rng, 30, 2000);
        let total: f64 = sizes.iter().sum();
        let n = (total * rng.random_range(2.0..200.0)).ceil();
        let d_i = rng.random_range(1.0..1000.0);
        let (roa, aor) = s1_degree_variances(d_i, n, &sizes)?;
        sweep.degree_checked += 1;
        sweep.degree_violations += !(roa < aor) as usize;
    }
    Ok(sweep)
}
