//! Duplication and score diagnostics plus CSV/JSON report emission.
//!
//! Emitted files (all with a header row):
//!
//! | file                  | columns                                               |
//! |-----------------------|-------------------------------------------------------|
//! | `cluster_sizes.csv`   | `cluster_size, clusters, documents`                   |
//! | `growth_curve.csv`    | `step, shards, docs_in_pool, clusters, removal_rate`  |
//! | `score_histogram.csv` | `bin, lower, upper, count`                            |
//! | `dup_by_score.csv`    | `bin, lower, upper, contents, mean_dup_count`         |
//! | `report.json`         | every computed statistic                              |
//!
//! Floating point columns use the shortest representation that parses back
//! to the identical value.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus_io::Document;
use crate::error::{Error, Result};
use crate::minhash_dedup::{DocSketch, DuplicateClusterTable, IncrementalClusterer};
use crate::sampling::quality_order;

/// `1 - clusters / docs`, computed as one correctly rounded division so
/// equal ratios give bit-identical rates.
pub fn removal_rate(docs: u64, clusters: u64) -> f64 {
    if docs == 0 {
        0.0
    } else {
        docs.saturating_sub(clusters) as f64 / docs as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicationProfile {
    /// cluster size -> number of clusters of that size
    pub histogram: BTreeMap<u64, u64>,
    pub total_docs: u64,
    pub total_clusters: u64,
    pub removal_rate: f64,
}

pub fn duplication_profile(table: &DuplicateClusterTable) -> DuplicationProfile {
    let mut histogram = BTreeMap::new();
    for c in table.clusters() {
        *histogram.entry(c.size).or_insert(0) += 1;
    }
    let total_docs = table.len() as u64;
    let total_clusters = table.num_clusters() as u64;
    DuplicationProfile {
        histogram,
        total_docs,
        total_clusters,
        removal_rate: removal_rate(total_docs, total_clusters),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub step: u64,
    /// Shards in the pool at this point.
    pub shards: u64,
    pub docs_in_pool: u64,
    pub clusters: u64,
    pub removal_rate: f64,
}

/// Number of leading shards in the pool after each of `steps` steps.
pub fn growth_boundaries(num_shards: usize, steps: usize) -> Result<Vec<usize>> {
    let steps = steps.min(num_shards);
    if steps < 2 {
        return Err(Error::invalid(format!(
            "growth curve needs at least 2 steps over at least 2 shards (got {steps} over {num_shards})"
        )));
    }
    Ok((1..=steps).map(|i| (i * num_shards).div_ceil(steps)).collect())
}

/// Removal rate of every pool prefix, adding shards in order to a single
/// incremental clustering so no shard is visited twice.
pub fn duplication_growth_curve<I>(shards: I, num_shards: usize, steps: usize) -> Result<Vec<GrowthPoint>>
where
    I: IntoIterator<Item = Result<Vec<DocSketch>>>,
{
    let bounds = growth_boundaries(num_shards, steps)?;
    let mut clusterer = IncrementalClusterer::new();
    let mut points = Vec::with_capacity(bounds.len());
    let mut next = 0;
    for (i, shard) in shards.into_iter().enumerate().take(num_shards) {
        for s in &shard? {
            clusterer.add(s)?;
        }
        while next < bounds.len() && bounds[next] == i + 1 {
            let docs = clusterer.docs() as u64;
            let clusters = clusterer.clusters() as u64;
            points.push(GrowthPoint {
                step: next as u64 + 1,
                shards: bounds[next] as u64,
                docs_in_pool: docs,
                clusters,
                removal_rate: removal_rate(docs, clusters),
            });
            next += 1;
        }
    }
    if points.len() != bounds.len() {
        return Err(Error::invalid("fewer shards than announced"));
    }
    if points.last().is_some_and(|p| p.docs_in_pool == 0) {
        return Err(Error::EmptyCorpus);
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges(Vec<f64>);

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("bin edges must be finite, strictly increasing, at least two"));
        }
        Ok(BinEdges(edges))
    }

    pub fn equal_width(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("need at least one bin"));
        }
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let w = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + w * i as f64).collect();
        edges.push(hi);
        Self::new(edges)
    }

    /// `bins` equal-width bins spanning the observed scores; `[0, 1]` when
    /// nothing is scored.
    pub fn observed(docs: &[Document], bins: usize) -> Result<Self> {
        let scores = docs.iter().filter_map(|d| d.quality_score).filter(|s| s.is_finite());
        let (lo, hi) = scores.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s), h.max(s)));
        if lo.is_finite() {
            Self::equal_width(lo, hi, bins)
        } else {
            Self::equal_width(0.0, 1.0, bins)
        }
    }

    pub fn edges(&self) -> &[f64] {
        &self.0
    }

    pub fn bins(&self) -> usize {
        self.0.len() - 1
    }

    /// Bins are `[lo, hi)` except the last, which is closed.
    fn locate(&self, v: f64) -> Placement {
        let e = &self.0;
        if v < e[0] {
            Placement::Under
        } else if v > e[e.len() - 1] {
            Placement::Over
        } else {
            let i = e.partition_point(|&x| x <= v);
            Placement::Bin((i.max(1) - 1).min(self.bins() - 1))
        }
    }
}

enum Placement {
    Under,
    Bin(usize),
    Over,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfRange {
    /// Count into the nearest edge bin.
    #[default]
    Clamp,
    /// Count into separate underflow/overflow tallies.
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    pub unscored: u64,
}

impl ScoreHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow + self.unscored
    }
}

fn bin_for(edges: &BinEdges, v: f64, oor: OutOfRange) -> Placement {
    match (edges.locate(v), oor) {
        (Placement::Under, OutOfRange::Clamp) => Placement::Bin(0),
        (Placement::Over, OutOfRange::Clamp) => Placement::Bin(edges.bins() - 1),
        (p, _) => p,
    }
}

pub fn score_distribution(
    docs: &[Document],
    edges: &BinEdges,
    oor: OutOfRange,
    strict: bool,
) -> Result<ScoreHistogram> {
    let mut h = ScoreHistogram {
        edges: edges.edges().to_vec(),
        counts: vec![0; edges.bins()],
        underflow: 0,
        overflow: 0,
        unscored: 0,
    };
    for d in docs {
        let Some(s) = d.quality_score.filter(|s| !s.is_nan()) else {
            if strict {
                return Err(Error::MissingField {
                    id: d.id.to_string(),
                    field: "score",
                });
            }
            h.unscored += 1;
            continue;
        };
        match bin_for(edges, s, oor) {
            Placement::Under => h.underflow += 1,
            Placement::Over => h.overflow += 1,
            Placement::Bin(i) => h.counts[i] += 1,
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DupByScoreBin {
    pub bin: u64,
    pub lower: f64,
    pub upper: f64,
    pub contents: u64,
    /// Mean duplicate count of the contents whose representative falls in
    /// this bin; `None` for empty bins.
    pub mean_dup_count: Option<f64>,
}

/// Mean cluster size per score bin, one observation per unique content
/// (placed by its representative's score; out-of-range scores clamp).
pub fn dup_by_score(docs: &[Document], table: &DuplicateClusterTable, edges: &BinEdges) -> Result<Vec<DupByScoreBin>> {
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (p, d) in docs.iter().enumerate() {
        let pos = table.position(&d.id).ok_or_else(|| Error::UnknownId(d.id.to_string()))?;
        let c = table.cluster_index(pos);
        best.entry(c)
            .and_modify(|b| {
                if quality_order(d, &docs[*b]).is_lt() {
                    *b = p
                }
            })
            .or_insert(p);
    }
    let mut sums = vec![(0u64, 0u64); edges.bins()];
    for (c, rep) in best {
        let Some(s) = docs[rep].quality_score.filter(|s| !s.is_nan()) else { continue };
        if let Placement::Bin(i) = bin_for(edges, s, OutOfRange::Clamp) {
            sums[i].0 += 1;
            sums[i].1 += table.clusters()[c].size;
        }
    }
    let e = edges.edges();
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (n, total))| DupByScoreBin {
            bin: i as u64,
            lower: e[i],
            upper: e[i + 1],
            contents: n,
            mean_dup_count: (n > 0).then(|| total as f64 / n as f64),
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<DuplicationProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_curve: Option<Vec<GrowthPoint>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_histogram: Option<ScoreHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dup_by_score: Option<Vec<DupByScoreBin>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSizeRow {
    pub cluster_size: u64,
    pub clusters: u64,
    pub documents: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBinRow {
    pub bin: u64,
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{other:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write one CSV per computed statistic plus `report.json` into `dir`.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.profile.is_none()
        && report.growth_curve.is_none()
        && report.score_histogram.is_none()
        && report.dup_by_score.is_none()
    {
        return Err(Error::invalid("no statistics to report"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if let Some(p) = &report.profile {
        let path = dir.join("cluster_sizes.csv");
        write_csv(
            &path,
            p.histogram.iter().map(|(&size, &n)| ClusterSizeRow {
                cluster_size: size,
                clusters: n,
                documents: size * n,
            }),
        )?;
        written.push(path);
    }
    if let Some(g) = &report.growth_curve {
        let path = dir.join("growth_curve.csv");
        write_csv(&path, g)?;
        written.push(path);
    }
    if let Some(h) = &report.score_histogram {
        let path = dir.join("score_histogram.csv");
        write_csv(
            &path,
            h.counts.iter().enumerate().map(|(i, &count)| ScoreBinRow {
                bin: i as u64,
                lower: h.edges[i],
                upper: h.edges[i + 1],
                count,
            }),
        )?;
        written.push(path);
    }
    if let Some(d) = &report.dup_by_score {
        let path = dir.join("dup_by_score.csv");
        write_csv(&path, d)?;
        written.push(path);
    }
    let path = dir.join("report.json");
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}
