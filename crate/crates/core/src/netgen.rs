//! Two-block stochastic block model populations.
//!
//! Nodes `0..n_hidden` form the hidden block H, the remaining nodes form L.
//! Edges are drawn independently per unordered pair with the probability of
//! the pair's block, using geometric gap sampling so sparse graphs with
//! `10^5` nodes stay cheap.

use std::fmt;
use std::io::Write;

use fixedbitset::FixedBitSet;
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::analytic::LinkProbabilities;
use crate::error::{NsumError, Result};
use crate::seed;

/// Block membership of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "H")]
    Hidden,
    #[serde(rename = "L")]
    Rest,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Hidden => "H",
            Group::Rest => "L",
        })
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(NsumError::param(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

/// Full two-block SBM parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub n_total: usize,
    pub n_hidden: usize,
    pub p_hh: f64,
    pub p_hl: f64,
    pub p_ll: f64,
}

impl BlockParams {
    pub fn new(n_total: usize, n_hidden: usize, p_hh: f64, p_hl: f64, p_ll: f64) -> Result<Self> {
        let params = BlockParams {
            n_total,
            n_hidden,
            p_hh,
            p_hl,
            p_ll,
        };
        params.validate()?;
        Ok(params)
    }

    /// Erdős–Rényi population: all three probabilities equal.
    pub fn erdos_renyi(n_total: usize, n_hidden: usize, p: f64) -> Result<Self> {
        Self::new(n_total, n_hidden, p, p, p)
    }

    /// `p_hh = p_ll = a * p`, `p_hl = p`.
    pub fn scaled(n_total: usize, n_hidden: usize, a: f64, p: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(NsumError::param(format!("scale factor a = {a} must be positive")));
        }
        if a * p > 1.0 {
            return Err(NsumError::param(format!("a*p exceeds 1 (a = {a}, p = {p})")));
        }
        Self::new(n_total, n_hidden, a * p, p, a * p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_hidden == 0 || self.n_hidden >= self.n_total {
            return Err(NsumError::param(format!(
                "need 0 < n_hidden < n_total, got n_hidden = {} and n_total = {}",
                self.n_hidden, self.n_total
            )));
        }
        if self.n_total > u32::MAX as usize {
            return Err(NsumError::param("n_total exceeds u32 node ids"));
        }
        check_probability("p_hh", self.p_hh)?;
        check_probability("p_hl", self.p_hl)?;
        check_probability("p_ll", self.p_ll)?;
        Ok(())
    }

    pub fn n_rest(&self) -> usize {
        self.n_total - self.n_hidden
    }

    pub fn prevalence(&self) -> f64 {
        self.n_hidden as f64 / self.n_total as f64
    }

    pub fn probabilities(&self) -> LinkProbabilities<f64> {
        LinkProbabilities {
            p_hh: self.p_hh,
            p_hl: self.p_hl,
            p_ll: self.p_ll,
        }
    }
}

/// Reduced parameterization with `p_hh = p_ll = a * p` and `p_hl = p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    pub a: f64,
    pub p: f64,
    pub prevalence_r: f64,
    pub r_k: f64,
    pub n_times_n: f64,
}

impl ScaledParams {
    pub fn new(a: f64, p: f64, prevalence_r: f64, r_k: f64, n_times_n: f64) -> Result<Self> {
        let s = ScaledParams {
            a,
            p,
            prevalence_r,
            r_k,
            n_times_n,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(NsumError::param(format!("a = {} must be positive", self.a)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(NsumError::param(format!("p = {} must lie in (0, 1]", self.p)));
        }
        if self.a * self.p > 1.0 {
            return Err(NsumError::param(format!(
                "a*p exceeds 1 (a = {}, p = {})",
                self.a, self.p
            )));
        }
        for (name, v) in [("R", self.prevalence_r), ("r_K", self.r_k)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(NsumError::param(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        if !(self.n_times_n > 0.0) {
            return Err(NsumError::param("nN must be positive"));
        }
        Ok(())
    }

    pub fn probabilities(&self) -> LinkProbabilities<f64> {
        LinkProbabilities {
            p_hh: self.a * self.p,
            p_hl: self.p,
            p_ll: self.a * self.p,
        }
    }

    /// Expands to a finite population of `n_total` nodes with
    /// `n_hidden = round(R * n_total)`.
    pub fn to_block_params(&self, n_total: usize) -> Result<BlockParams> {
        let n_hidden = (self.prevalence_r * n_total as f64).round() as usize;
        BlockParams::new(
            n_total,
            n_hidden,
            self.a * self.p,
            self.p,
            self.a * self.p,
        )
    }
}

pub type GroupId = usize;

/// A registered node subset (probe group or hidden group).
#[derive(Debug, Clone)]
pub struct NodeGroup {
    members: Vec<u32>,
    mask: FixedBitSet,
}

impl NodeGroup {
    fn new(n_nodes: usize, mut members: Vec<u32>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        let mut mask = FixedBitSet::with_capacity(n_nodes);
        for &m in &members {
            if m as usize >= n_nodes {
                return Err(NsumError::param(format!(
                    "group member {m} out of range for {n_nodes} nodes"
                )));
            }
            mask.insert(m as usize);
        }
        Ok(NodeGroup { members, mask })
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn mask(&self) -> &FixedBitSet {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: u32) -> bool {
        self.mask.contains(node as usize)
    }
}

/// Undirected simple graph with block labels and registered node groups.
#[derive(Debug, Clone)]
pub struct Network {
    labels: Vec<Group>,
    adjacency: Vec<Vec<u32>>,
    groups: Vec<NodeGroup>,
}

impl Network {
    /// Builds a network from undirected edges. Duplicate and reversed pairs
    /// collapse to one edge; self-loops and out-of-range ids are rejected.
    pub fn from_edges(labels: Vec<Group>, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let n = labels.len();
        let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u == v {
                return Err(NsumError::param(format!("self-loop at node {u}")));
            }
            if u as usize >= n || v as usize >= n {
                return Err(NsumError::param(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        Ok(Network {
            labels,
            adjacency,
            groups: Vec::new(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Group] {
        &self.labels
    }

    pub fn label(&self, node: u32) -> Group {
        self.labels[node as usize]
    }

    pub fn count_label(&self, group: Group) -> usize {
        self.labels.iter().filter(|&&g| g == group).count()
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        &self.adjacency[node as usize]
    }

    pub fn degree(&self, node: u32) -> usize {
        self.adjacency[node as usize].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(src, dst)` with `src < dst`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, nbrs)| {
            let u = u as u32;
            nbrs.iter().filter(move |&&v| v > u).map(move |&v| (u, v))
        })
    }

    /// Mask of the nodes labeled H.
    pub fn hidden_mask(&self) -> FixedBitSet {
        let mut mask = FixedBitSet::with_capacity(self.n_nodes());
        for (i, g) in self.labels.iter().enumerate() {
            if *g == Group::Hidden {
                mask.insert(i);
            }
        }
        mask
    }

    /// Relabels the network so exactly `hidden` is H.
    pub fn set_hidden(&mut self, hidden: &[u32]) -> Result<()> {
        let n = self.n_nodes();
        if let Some(&bad) = hidden.iter().find(|&&h| h as usize >= n) {
            return Err(NsumError::param(format!("hidden node {bad} out of range")));
        }
        self.labels.iter_mut().for_each(|g| *g = Group::Rest);
        for &h in hidden {
            self.labels[h as usize] = Group::Hidden;
        }
        Ok(())
    }

    /// Registers an explicit node subset and returns its id.
    pub fn add_group(&mut self, members: Vec<u32>) -> Result<GroupId> {
        let group = NodeGroup::new(self.n_nodes(), members)?;
        self.groups.push(group);
        Ok(self.groups.len() - 1)
    }

    pub fn group(&self, id: GroupId) -> Result<&NodeGroup> {
        self.groups
            .get(id)
            .ok_or_else(|| NsumError::param(format!("unknown group id {id}")))
    }

    pub fn groups(&self) -> &[NodeGroup] {
        &self.groups
    }

    /// Registers a uniformly random probe group of exactly `size` nodes,
    /// drawn from L only when `within_l_only` is set.
    pub fn assign_probe_group(&mut self, size: usize, within_l_only: bool, seed: u64) -> Result<GroupId> {
        if size == 0 {
            return Err(NsumError::param("probe group size must be positive"));
        }
        let pool: Vec<u32> = if within_l_only {
            (0..self.n_nodes() as u32)
                .filter(|&i| self.labels[i as usize] == Group::Rest)
                .collect()
        } else {
            (0..self.n_nodes() as u32).collect()
        };
        if size > pool.len() {
            return Err(NsumError::param(format!(
                "probe group of size {size} exceeds eligible pool of {}",
                pool.len()
            )));
        }
        let mut rng = seed::rng(seed);
        let members = index::sample(&mut rng, pool.len(), size)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        self.add_group(members)
    }

    /// Writes `src,dst` rows with `src < dst`.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["src", "dst"])?;
        for (u, v) in self.edges() {
            w.write_record([u.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `node_id,group` rows with group in `{H, L}`.
    pub fn write_labels_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node_id", "group"])?;
        for (i, g) in self.labels.iter().enumerate() {
            w.write_record([i.to_string(), g.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Calls `hit` with each index in `0..count` that succeeds an independent
/// Bernoulli(`p`) trial, in increasing order.
fn bernoulli_hits(rng: &mut seed::Rng, p: f64, count: u64, mut hit: impl FnMut(u64)) {
    if count == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        (0..count).for_each(hit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut next = 0u64;
    loop {
        let u: f64 = rng.random();
        // gap ~ Geometric(p): number of failures before the next success
        let gap = ((1.0 - u).ln() / log_q).floor();
        if gap >= (count - next) as f64 {
            return;
        }
        next += gap as u64;
        hit(next);
        next += 1;
        if next >= count {
            return;
        }
    }
}

/// Unordered pairs within `start..start + size`, in triangular order.
fn sample_within(rng: &mut seed::Rng, p: f64, start: u32, size: u32, edges: &mut Vec<(u32, u32)>) {
    let size = size as u64;
    let pairs = size * size.saturating_sub(1) / 2;
    // index k -> (v, w) with w < v, k = v(v-1)/2 + w
    let mut v = 1u64;
    let mut base = 0u64;
    bernoulli_hits(rng, p, pairs, |k| {
        while k >= base + v {
            base += v;
            v += 1;
        }
        let w = k - base;
        edges.push((start + w as u32, start + v as u32));
    });
}

/// All pairs between `a_start..a_start + a_size` and `b_start..b_start + b_size`.
fn sample_between(
    rng: &mut seed::Rng,
    p: f64,
    (a_start, a_size): (u32, u32),
    (b_start, b_size): (u32, u32),
    edges: &mut Vec<(u32, u32)>,
) {
    let cols = b_size as u64;
    bernoulli_hits(rng, p, a_size as u64 * cols, |k| {
        let i = (k / cols) as u32;
        let j = (k % cols) as u32;
        edges.push((a_start + i, b_start + j));
    });
}

/// Samples a two-block SBM; H occupies node ids `0..n_hidden`.
pub fn generate_sbm(params: &BlockParams, seed: u64) -> Result<Network> {
    params.validate()?;
    let nh = params.n_hidden as u32;
    let nl = params.n_rest() as u32;
    let mut rng = seed::rng(seed);
    let mut edges = Vec::new();
    sample_within(&mut rng, params.p_hh, 0, nh, &mut edges);
    sample_between(&mut rng, params.p_hl, (0, nh), (nh, nl), &mut edges);
    sample_within(&mut rng, params.p_ll, nh, nl, &mut edges);

    let labels = (0..params.n_total)
        .map(|i| if i < params.n_hidden { Group::Hidden } else { Group::Rest })
        .collect();
    Network::from_edges(labels, edges)
}

/// Erdős–Rényi graph with the first `n_hidden` nodes labeled H.
pub fn generate_er(n_total: usize, n_hidden: usize, p: f64, seed: u64) -> Result<Network> {
    generate_sbm(&BlockParams::erdos_renyi(n_total, n_hidden, p)?, seed)
}
