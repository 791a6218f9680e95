//! Subsampling strategies and the epoch-repetition stream.
//!
//! All coins are counter-based ([`crate::keyed`]): a document's fate depends
//! only on the seed and its id, never on iteration order. Outputs preserve
//! input order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::corpus_io::Document;
use crate::error::{Error, Result};
use crate::keyed::{self, Stream};
use crate::minhash_dedup::DuplicateClusterTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleTarget {
    /// Exactly this many documents.
    Docs(u64),
    /// Whole documents in random order until the running token count reaches
    /// the budget; the crossing document is kept.
    Tokens(u64),
    /// Each document kept independently with this probability.
    Fraction(f64),
}

impl SampleTarget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SampleTarget::Docs(0) | SampleTarget::Tokens(0) => Err(Error::invalid("target must be positive")),
            SampleTarget::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::invalid(format!("fraction {f} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    Uniform,
    DedupThenSubsample,
    DuplicateAware,
    FloorCeil,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub target: SampleTarget,
    pub seed: u64,
    pub mode: SamplingMode,
}

/// Ordering used to pick a cluster's representative: higher score first,
/// unscored last, ties by ascending id.
pub fn quality_order(a: &Document, b: &Document) -> Ordering {
    match (a.quality_score, b.quality_score) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
    .then_with(|| a.id.cmp(&b.id))
}

/// Position (within `docs`) of the best member among `members`.
pub fn representative(docs: &[Document], members: &[usize]) -> Option<usize> {
    members.iter().copied().min_by(|&a, &b| quality_order(&docs[a], &docs[b]))
}

/// Streaming bottom-k reservoir: keeps the `k` items with the smallest
/// random keys, which is a uniform k-subset.
struct Reservoir {
    k: usize,
    heap: BinaryHeap<(u64, usize)>,
}

impl Reservoir {
    fn new(k: usize) -> Self {
        Reservoir {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, key: u64, pos: usize) {
        if self.heap.len() < self.k {
            self.heap.push((key, pos));
        } else if let Some(&top) = self.heap.peek() {
            if (key, pos) < top {
                self.heap.pop();
                self.heap.push((key, pos));
            }
        }
    }

    fn into_positions(self) -> Vec<usize> {
        let mut v: Vec<usize> = self.heap.into_iter().map(|(_, p)| p).collect();
        v.sort_unstable();
        v
    }
}

fn uniform_select(docs: &[Document], candidates: &[usize], target: SampleTarget, seed: u64) -> Result<Vec<usize>> {
    target.validate()?;
    let key = |p: usize| keyed::bits(seed, Stream::Uniform, docs[p].id.as_str(), 0);
    match target {
        SampleTarget::Docs(k) => {
            if k as usize > candidates.len() {
                return Err(Error::TargetTooLarge {
                    target: k,
                    available: candidates.len() as u64,
                });
            }
            let mut r = Reservoir::new(k as usize);
            for &p in candidates {
                r.offer(key(p), p);
            }
            Ok(r.into_positions())
        }
        SampleTarget::Tokens(budget) => {
            let available: u64 = candidates.iter().map(|&p| docs[p].token_count).sum();
            if budget > available {
                return Err(Error::TargetTooLarge {
                    target: budget,
                    available,
                });
            }
            let mut keyed: Vec<(u64, usize)> = candidates.iter().map(|&p| (key(p), p)).collect();
            keyed.sort_unstable();
            let mut total = 0u64;
            let mut out = Vec::new();
            for (_, p) in keyed {
                if total >= budget {
                    break;
                }
                total += docs[p].token_count;
                out.push(p);
            }
            out.sort_unstable();
            Ok(out)
        }
        SampleTarget::Fraction(f) => Ok(candidates
            .iter()
            .copied()
            .filter(|&p| keyed::unit(seed, Stream::Uniform, docs[p].id.as_str(), 0) < f)
            .collect()),
    }
}

fn pick(docs: &[Document], positions: Vec<usize>) -> Vec<Document> {
    positions.into_iter().map(|p| docs[p].clone()).collect()
}

pub fn uniform_subsample(docs: &[Document], target: SampleTarget, seed: u64) -> Result<Vec<Document>> {
    let all: Vec<usize> = (0..docs.len()).collect();
    Ok(pick(docs, uniform_select(docs, &all, target, seed)?))
}

/// Groups the corpus by cluster: for each cluster slot present in `docs`,
/// the member positions in input order. Slots are ordered by first
/// appearance.
fn group_by_cluster(docs: &[Document], table: &DuplicateClusterTable) -> Result<Vec<Vec<usize>>> {
    let mut slot_of_cluster = vec![usize::MAX; table.num_clusters()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (p, d) in docs.iter().enumerate() {
        let pos = table.position(&d.id).ok_or_else(|| Error::UnknownId(d.id.to_string()))?;
        let c = table.cluster_index(pos);
        if slot_of_cluster[c] == usize::MAX {
            slot_of_cluster[c] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot_of_cluster[c]].push(p);
    }
    Ok(groups)
}

/// One representative per cluster (input order), then a uniform subsample.
pub fn dedup_then_subsample(
    docs: &[Document],
    table: &DuplicateClusterTable,
    target: SampleTarget,
    seed: u64,
) -> Result<Vec<Document>> {
    let groups = group_by_cluster(docs, table)?;
    let mut reps: Vec<usize> = groups.iter().filter_map(|g| representative(docs, g)).collect();
    reps.sort_unstable();
    Ok(pick(docs, uniform_select(docs, &reps, target, seed)?))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKeepRule {
    /// Keep probability equals the target fraction for every cluster.
    #[default]
    Fraction,
    /// Keep probability `min(1, fraction * size / mean cluster size)`.
    /// Experimental; does not preserve the size histogram.
    CountWeighted,
}

/// Keep or drop whole clusters so the output keeps the input's duplication
/// profile.
pub fn duplicate_aware_subsample(
    docs: &[Document],
    table: &DuplicateClusterTable,
    fraction: f64,
    seed: u64,
    rule: ClusterKeepRule,
) -> Result<Vec<Document>> {
    SampleTarget::Fraction(fraction).validate()?;
    let mean_size = table.len() as f64 / table.num_clusters().max(1) as f64;
    let mut keep = vec![false; table.num_clusters()];
    for (c, info) in table.clusters().iter().enumerate() {
        let p = match rule {
            ClusterKeepRule::Fraction => fraction,
            ClusterKeepRule::CountWeighted => (fraction * info.size as f64 / mean_size).min(1.0),
        };
        keep[c] = keyed::unit(seed, Stream::Cluster, info.id.as_str(), 0) < p;
    }
    let mut out = Vec::new();
    for d in docs {
        let pos = table.position(&d.id).ok_or_else(|| Error::UnknownId(d.id.to_string()))?;
        if keep[table.cluster_index(pos)] {
            out.push(d.clone());
        }
    }
    Ok(out)
}

/// Drop clusters with fewer than `floor` members; keep at most `ceil`
/// members of the rest (representative first, then a seeded random order).
/// `ceil = None` means unlimited.
pub fn floor_ceil_filter(
    docs: &[Document],
    table: &DuplicateClusterTable,
    floor: u64,
    ceil: Option<u64>,
    seed: u64,
) -> Result<Vec<Document>> {
    if floor == 0 || ceil == Some(0) {
        return Err(Error::invalid("floor and ceil must be >= 1"));
    }
    let mut kept = Vec::new();
    for group in group_by_cluster(docs, table)? {
        let size = table.count(&docs[group[0]].id)?;
        if size < floor {
            continue;
        }
        let rep = representative(docs, &group).expect("non-empty group");
        let mut rest: Vec<(u64, usize)> = group
            .iter()
            .filter(|&&p| p != rep)
            .map(|&p| (keyed::bits(seed, Stream::Member, docs[p].id.as_str(), 0), p))
            .collect();
        rest.sort_unstable();
        let limit = ceil.map_or(group.len(), |c| (c as usize).min(group.len()));
        kept.push(rep);
        kept.extend(rest.into_iter().take(limit - 1).map(|(_, p)| p));
    }
    kept.sort_unstable();
    Ok(pick(docs, kept))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochBoundary {
    pub epoch: u64,
    /// Documents emitted up to and including this epoch.
    pub cumulative_docs: u64,
    pub cumulative_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochIndex {
    pub corpus_tokens: u64,
    pub total_tokens: u64,
    pub emitted_tokens: u64,
    /// `total_tokens / corpus_tokens`.
    pub epochs: f64,
    pub boundaries: Vec<EpochBoundary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStream {
    /// Corpus positions in emission order.
    pub order: Vec<usize>,
    pub index: EpochIndex,
}

/// Repeat the corpus, reshuffling every pass, until `total_tokens` have been
/// emitted. The last pass is cut after the document that crosses the budget.
pub fn epoch_stream(docs: &[Document], total_tokens: u64, seed: u64) -> Result<EpochStream> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if total_tokens == 0 {
        return Err(Error::invalid("total_tokens must be >= 1"));
    }
    let corpus_tokens: u64 = docs.iter().map(|d| d.token_count).sum();
    if corpus_tokens == 0 {
        return Err(Error::invalid("corpus has no tokens"));
    }
    let mut order = Vec::new();
    let mut boundaries = Vec::new();
    let mut emitted = 0u64;
    let mut epoch = 0u64;
    while emitted < total_tokens {
        let mut pass: Vec<(u64, usize)> = docs
            .iter()
            .enumerate()
            .map(|(p, d)| (keyed::bits(seed, Stream::Shuffle, d.id.as_str(), epoch), p))
            .collect();
        pass.sort_unstable();
        for (_, p) in pass {
            if emitted >= total_tokens {
                break;
            }
            emitted += docs[p].token_count;
            order.push(p);
        }
        boundaries.push(EpochBoundary {
            epoch,
            cumulative_docs: order.len() as u64,
            cumulative_tokens: emitted,
        });
        epoch += 1;
    }
    Ok(EpochStream {
        order,
        index: EpochIndex {
            corpus_tokens,
            total_tokens,
            emitted_tokens: emitted,
            epochs: total_tokens as f64 / corpus_tokens as f64,
            boundaries,
        },
    })
}
