//! Attributed real networks: CSV loading, candidate probe groups from
//! categorical attributes, case construction and per-case network statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{NsumError, Result};
use crate::netgen::{Group, GroupId, Network};
use crate::seed;

/// Per-node categorical attributes. `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeColumn {
    pub name: String,
    /// Distinct levels in lexicographic order.
    pub levels: Vec<String>,
    /// Level index per node.
    pub values: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeTable {
    pub n_nodes: usize,
    pub columns: Vec<AttributeColumn>,
}

fn ingest_err(path: &str, line: u64, msg: impl Into<String>) -> NsumError {
    NsumError::Ingest {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_id(path: &str, record: &csv::StringRecord, field: usize) -> Result<u32> {
    let raw = record.get(field).unwrap_or("").trim();
    raw.parse::<u32>()
        .map_err(|_| ingest_err(path, line_of(record), format!("invalid node id '{raw}'")))
}

impl AttributeTable {
    /// Reads `node_id,<col1>,<col2>,...`. Node ids must cover `0..n` exactly
    /// once, in any order; empty cells are missing values.
    pub fn read_csv<R: Read>(reader: R, path: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("node_id") {
            return Err(ingest_err(path, 1, "missing header: first column must be node_id"));
        }
        let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
        let mut rows: Vec<(u32, Vec<Option<String>>)> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(ingest_err(
                    path,
                    line_of(&record),
                    format!("expected {} fields, found {}", headers.len(), record.len()),
                ));
            }
            let id = parse_id(path, &record, 0)?;
            let cells = record
                .iter()
                .skip(1)
                .map(|c| {
                    let c = c.trim();
                    (!c.is_empty()).then(|| c.to_string())
                })
                .collect();
            rows.push((id, cells));
        }
        let n = rows.len();
        let mut seen = FixedBitSet::with_capacity(n);
        for (id, _) in &rows {
            if *id as usize >= n || seen.put(*id as usize) {
                return Err(ingest_err(
                    path,
                    0,
                    format!("node ids must be exactly 0..{n}; offending id {id}"),
                ));
            }
        }
        rows.sort_by_key(|(id, _)| *id);

        let columns = names
            .into_iter()
            .enumerate()
            .map(|(c, name)| {
                let mut levels: Vec<String> = rows.iter().filter_map(|(_, cells)| cells[c].clone()).collect();
                levels.sort();
                levels.dedup();
                let values = rows
                    .iter()
                    .map(|(_, cells)| {
                        cells[c]
                            .as_ref()
                            .map(|v| levels.binary_search(v).expect("level present") as u32)
                    })
                    .collect();
                AttributeColumn { name, levels, values }
            })
            .collect();
        Ok(AttributeTable { n_nodes: n, columns })
    }
}

/// Reads `src,dst` rows into an undirected network over `n_nodes` nodes,
/// every node labeled L.
pub fn read_edges_csv<R: Read>(reader: R, path: &str, n_nodes: usize) -> Result<Network> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols != ["src", "dst"] {
        return Err(ingest_err(path, 1, "missing header: expected 'src,dst'"));
    }
    let mut edges = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != 2 {
            return Err(ingest_err(path, line_of(&record), "malformed row: expected two fields"));
        }
        let u = parse_id(path, &record, 0)?;
        let v = parse_id(path, &record, 1)?;
        let line = line_of(&record);
        if u == v {
            return Err(ingest_err(path, line, format!("self-loop at node {u}")));
        }
        if u as usize >= n_nodes || v as usize >= n_nodes {
            return Err(ingest_err(
                path,
                line,
                format!("node id out of range for {n_nodes} nodes: ({u}, {v})"),
            ));
        }
        edges.push((u, v));
    }
    Network::from_edges(vec![Group::Rest; n_nodes], edges)
}

/// Loads an edge list and its attribute table. The node count comes from
/// the attribute table.
pub fn load_network(edges_path: &Path, attrs_path: &Path) -> Result<(Network, AttributeTable)> {
    let attrs_name = attrs_path.display().to_string();
    let attrs = AttributeTable::read_csv(std::fs::File::open(attrs_path)?, &attrs_name)?;
    let edges_name = edges_path.display().to_string();
    let network = read_edges_csv(std::fs::File::open(edges_path)?, &edges_name, attrs.n_nodes)?;
    Ok((network, attrs))
}

/// Indicator of one attribute level, eligible as a probe or hidden group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGroup {
    pub group_id: usize,
    pub column: String,
    pub level: String,
    pub members: Vec<u32>,
    pub prevalence: f64,
}

impl CandidateGroup {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// One candidate per `(column, level)` whose prevalence lies in the closed
/// band `[min_prev, max_prev]`. Ids follow column order, then level order.
pub fn derive_candidate_groups(
    network: &Network,
    attrs: &AttributeTable,
    min_prev: f64,
    max_prev: f64,
) -> Result<Vec<CandidateGroup>> {
    if !(0.0 < min_prev && min_prev < max_prev && max_prev < 1.0) {
        return Err(NsumError::param(format!(
            "need 0 < min_prev < max_prev < 1, got [{min_prev}, {max_prev}]"
        )));
    }
    if attrs.n_nodes != network.n_nodes() {
        return Err(NsumError::param(format!(
            "attribute table has {} rows, network has {} nodes",
            attrs.n_nodes,
            network.n_nodes()
        )));
    }
    let n = network.n_nodes() as f64;
    let mut out = Vec::new();
    for col in &attrs.columns {
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); col.levels.len()];
        for (node, v) in col.values.iter().enumerate() {
            if let Some(level) = v {
                members[*level as usize].push(node as u32);
            }
        }
        for (level, m) in col.levels.iter().zip(members) {
            let prevalence = m.len() as f64 / n;
            if prevalence >= min_prev && prevalence <= max_prev {
                out.push(CandidateGroup {
                    group_id: out.len(),
                    column: col.name.clone(),
                    level: level.clone(),
                    members: m,
                    prevalence,
                });
            }
        }
    }
    Ok(out)
}

/// One experiment: a hidden group plus the probe groups used for degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub case_id: usize,
    pub hidden_group_id: usize,
    pub probe_group_ids: Vec<usize>,
    pub sample_size: usize,
    pub n_surveys: usize,
    pub seed: u64,
}

impl CaseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.probe_group_ids.is_empty() {
            return Err(NsumError::param(format!("case {} has no probe groups", self.case_id)));
        }
        if self.probe_group_ids.contains(&self.hidden_group_id) {
            return Err(NsumError::param(format!(
                "case {}: hidden group {} is also a probe group",
                self.case_id, self.hidden_group_id
            )));
        }
        Ok(())
    }
}

/// Takes the `k` largest candidates (size descending, id ascending) and
/// makes one case per choice of hidden group among them.
pub fn build_cases(
    candidates: &[CandidateGroup],
    k: usize,
    sample_size: usize,
    n_surveys: usize,
    seed: u64,
) -> Result<Vec<CaseSpec>> {
    if k < 2 {
        return Err(NsumError::param("k must be at least 2 (one hidden, one probe)"));
    }
    if candidates.len() < k {
        return Err(NsumError::CaseConstruction {
            needed: k,
            available: candidates.len(),
        });
    }
    let mut order: Vec<&CandidateGroup> = candidates.iter().collect();
    order.sort_by(|a, b| b.size().cmp(&a.size()).then(a.group_id.cmp(&b.group_id)));
    let chosen: Vec<usize> = order[..k].iter().map(|c| c.group_id).collect();
    Ok(chosen
        .iter()
        .enumerate()
        .map(|(i, &hidden)| CaseSpec {
            case_id: i,
            hidden_group_id: hidden,
            probe_group_ids: chosen.iter().copied().filter(|&g| g != hidden).collect(),
            sample_size,
            n_surveys,
            seed: seed::mix(seed, i as u64),
        })
        .collect())
}

/// Registers every candidate on the network so that group ids and
/// candidate ids coincide. The network must have no groups yet.
pub fn register_candidates(network: &mut Network, candidates: &[CandidateGroup]) -> Result<()> {
    if !network.groups().is_empty() {
        return Err(NsumError::param("network already has registered groups"));
    }
    for c in candidates {
        let id: GroupId = network.add_group(c.members.clone())?;
        debug_assert_eq!(id, c.group_id);
    }
    Ok(())
}

pub fn write_candidates_csv<W: Write>(out: W, candidates: &[CandidateGroup]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group_id", "column", "level", "size", "prevalence"])?;
    for c in candidates {
        w.write_record([
            c.group_id.to_string(),
            c.column.clone(),
            c.level.clone(),
            c.size().to_string(),
            c.prevalence.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Probe ids are `;`-separated in the `probe_group_ids` column.
pub fn write_cases_csv<W: Write>(out: W, cases: &[CaseSpec]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case_id", "hidden_group_id", "probe_group_ids", "seed"])?;
    for c in cases {
        let probes: Vec<String> = c.probe_group_ids.iter().map(usize::to_string).collect();
        w.write_record([
            c.case_id.to_string(),
            c.hidden_group_id.to_string(),
            probes.join(";"),
            c.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Newman's nominal assortativity of a two-category node partition.
pub fn assortativity(network: &Network, partition: &[bool]) -> Result<f64> {
    if partition.len() != network.n_nodes() {
        return Err(NsumError::param("partition length differs from node count"));
    }
    // mixing counts over ordered edge ends
    let mut e = [[0f64; 2]; 2];
    for (u, v) in network.edges() {
        let (a, b) = (partition[u as usize] as usize, partition[v as usize] as usize);
        e[a][b] += 1.0;
        e[b][a] += 1.0;
    }
    let total: f64 = e.iter().flatten().sum();
    if total == 0.0 {
        return Err(NsumError::UndefinedStatistic("assortativity of an edgeless network".into()));
    }
    let trace = (e[0][0] + e[1][1]) / total;
    let a0 = (e[0][0] + e[0][1]) / total;
    let a1 = (e[1][0] + e[1][1]) / total;
    let expected = a0 * a0 + a1 * a1;
    if expected >= 1.0 {
        return Err(NsumError::UndefinedStatistic(
            "assortativity undefined when every edge lies within one category".into(),
        ));
    }
    Ok((trace - expected) / (1.0 - expected))
}

/// Denominator of [`degree_ratio`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeBaseline {
    /// Mean degree over every node.
    #[default]
    All,
    /// Mean degree over the nodes outside the hidden group.
    Rest,
}

impl fmt::Display for DegreeBaseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DegreeBaseline::All => "all",
            DegreeBaseline::Rest => "rest",
        })
    }
}

/// Mean degree of the hidden members over the baseline mean degree.
pub fn degree_ratio(network: &Network, hidden_members: &[u32], baseline: DegreeBaseline) -> Result<f64> {
    let n = network.n_nodes();
    if hidden_members.is_empty() {
        return Err(NsumError::param("hidden group is empty"));
    }
    let mut mask = FixedBitSet::with_capacity(n);
    for &h in hidden_members {
        if h as usize >= n {
            return Err(NsumError::param(format!("hidden node {h} out of range")));
        }
        mask.insert(h as usize);
    }
    let hidden_count = mask.count_ones(..);
    let hidden_sum: usize = mask.ones().map(|i| network.degree(i as u32)).sum();
    let total_sum = 2 * network.n_edges();
    let (base_sum, base_count) = match baseline {
        DegreeBaseline::All => (total_sum, n),
        DegreeBaseline::Rest => {
            if hidden_count == n {
                return Err(NsumError::param("hidden group covers every node"));
            }
            (total_sum - hidden_sum, n - hidden_count)
        }
    };
    if base_sum == 0 {
        return Err(NsumError::UndefinedStatistic("baseline mean degree is zero".into()));
    }
    let hidden_mean = hidden_sum as f64 / hidden_count as f64;
    let base_mean = base_sum as f64 / base_count as f64;
    Ok(hidden_mean / base_mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeRatioBand {
    Low,
    Near1,
    High,
}

impl DegreeRatioBand {
    /// `< 0.8` low, `> 1.2` high, closed `[0.8, 1.2]` near 1.
    pub fn classify(ratio: f64) -> Self {
        if ratio < 0.8 {
            DegreeRatioBand::Low
        } else if ratio > 1.2 {
            DegreeRatioBand::High
        } else {
            DegreeRatioBand::Near1
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DegreeRatioBand::Low => "low",
            DegreeRatioBand::Near1 => "near1",
            DegreeRatioBand::High => "high",
        }
    }
}

/// Levels per column summarised as `column -> level -> count`; used by the
/// CLI to describe an attribute file.
pub fn level_counts(attrs: &AttributeTable) -> BTreeMap<String, BTreeMap<String, usize>> {
    attrs
        .columns
        .iter()
        .map(|col| {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for v in col.values.iter().flatten() {
                *counts.entry(col.levels[*v as usize].clone()).or_default() += 1;
            }
            (col.name.clone(), counts)
        })
        .collect()
}
