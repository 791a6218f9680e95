//! Quality-driven document count manipulation.
//!
//! Unique contents (duplicate clusters) are ranked by a quality metric, a
//! count function maps each rank to a target number of copies, and every
//! pre-deduplication instance then runs `target` trials that each keep one
//! copy with probability `1 / duplicate_count`. Summed over the `c` instances
//! of a content this yields `target` copies in expectation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{DocId, Document};
use crate::error::{Error, Result};
use crate::keyed::{self, Stream};
use crate::minhash_dedup::DuplicateClusterTable;
use crate::sampling::representative;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    Score,
    DupCount,
    /// Worse of the score rank and the duplicate-count rank.
    #[default]
    Ensemble,
}

/// A deduplicated content as seen by the ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniqueDoc {
    pub id: DocId,
    pub score: Option<f64>,
    pub dup_count: Option<u64>,
    pub token_count: u64,
}

pub type Ranks = BTreeMap<DocId, u64>;

fn rank_by<K: Fn(&UniqueDoc) -> Option<f64>>(
    docs: &[UniqueDoc],
    key: K,
    field: &'static str,
    strict: bool,
) -> Result<Ranks> {
    let mut keyed = Vec::with_capacity(docs.len());
    for d in docs {
        let k = key(d);
        if k.is_none() && strict {
            return Err(Error::MissingField {
                id: d.id.to_string(),
                field,
            });
        }
        keyed.push((k, &d.id));
    }
    // Higher value first, missing values last, then ascending id.
    keyed.sort_by(|(a, ia), (b, ib)| {
        match (a, b) {
            (Some(x), Some(y)) => y.total_cmp(x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then_with(|| ia.cmp(ib))
    });
    let mut ranks = Ranks::new();
    for (r, (_, id)) in keyed.into_iter().enumerate() {
        if ranks.insert(id.clone(), r as u64 + 1).is_some() {
            return Err(Error::invalid(format!("duplicate unique id {id}")));
        }
    }
    Ok(ranks)
}

/// Rank 1 is best. Ties are broken by ascending id, so single-metric ranks
/// are a permutation of `1..=U`.
pub fn rank_documents(docs: &[UniqueDoc], metric: RankMetric, strict: bool) -> Result<Ranks> {
    match metric {
        RankMetric::Score => rank_by(docs, |d| d.score, "score", strict),
        RankMetric::DupCount => rank_by(docs, |d| d.dup_count.map(|c| c as f64), "dup_count", strict),
        RankMetric::Ensemble => {
            let s = rank_by(docs, |d| d.score, "score", strict)?;
            let c = rank_by(docs, |d| d.dup_count.map(|c| c as f64), "dup_count", strict)?;
            ensemble_rank(&s, &c)
        }
    }
}

/// Componentwise maximum of two rank maps; lower is better. The result is
/// not necessarily a permutation.
pub fn ensemble_rank(score_ranks: &Ranks, dup_ranks: &Ranks) -> Result<Ranks> {
    if score_ranks.len() != dup_ranks.len() {
        return Err(Error::invalid("rank maps cover different id sets"));
    }
    score_ranks
        .iter()
        .map(|(id, &s)| {
            let d = dup_ranks
                .get(id)
                .ok_or_else(|| Error::invalid(format!("id {id} missing from duplicate-count ranks")))?;
            Ok((id.clone(), s.max(*d)))
        })
        .collect()
}

/// Ids sorted best first: ascending rank value, ties by ascending id.
pub fn ranked_order(ranks: &Ranks) -> Vec<DocId> {
    let mut v: Vec<(&DocId, u64)> = ranks.iter().map(|(id, &r)| (id, r)).collect();
    v.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().map(|(id, _)| id.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CountStrategy {
    /// The best documents get `max_copies` copies each, everything else none.
    GreedyK { max_copies: u32 },
    /// Equal-sized buckets receiving `max_copies, max_copies - 1, ..., 1`.
    LinearUpToK { max_copies: u32 },
    /// Equal-sized buckets with the given non-increasing copy counts.
    CustomSteps { copies: Vec<u32> },
}

impl CountStrategy {
    /// Copy count of each bucket, best bucket first.
    pub fn profile(&self) -> Vec<u32> {
        match self {
            CountStrategy::GreedyK { max_copies } => vec![*max_copies],
            CountStrategy::LinearUpToK { max_copies } => (1..=*max_copies).rev().collect(),
            CountStrategy::CustomSteps { copies } => copies.clone(),
        }
    }

    pub fn max_copies(&self) -> u32 {
        self.profile().first().copied().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        let p = self.profile();
        if p.is_empty() || p.contains(&0) {
            return Err(Error::invalid("copy counts must be >= 1"));
        }
        if p.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("copy counts must be non-increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountFunction {
    pub strategy: CountStrategy,
    pub goal_docs: u64,
    /// Unique documents per bucket, best bucket first.
    pub bucket_sizes: Vec<u64>,
    pub copies: Vec<u32>,
    /// Last (1-based) ranked position of each bucket.
    pub thresholds: Vec<u64>,
}

fn bucket_sizes(profile: &[u32], goal: u64) -> Vec<u64> {
    let denom: u64 = profile.iter().map(|&c| c as u64).sum();
    let base = goal / denom;
    let rem = goal % denom;
    let mut sizes = vec![base; profile.len()];
    // The rounding remainder goes to the best bucket.
    sizes[0] += rem.div_ceil(profile[0] as u64);
    sizes
}

fn unique_needed(profile: &[u32], goal: u64) -> u64 {
    bucket_sizes(profile, goal).iter().sum()
}

/// Largest goal whose buckets fit in `unique` documents.
pub fn max_achievable(strategy: &CountStrategy, unique: u64) -> u64 {
    let profile = strategy.profile();
    let (mut lo, mut hi) = (0u64, strategy.max_copies() as u64 * unique);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if unique_needed(&profile, mid) <= unique {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Bucket thresholds over `unique` ranked documents so that the copies sum
/// to `goal_docs` (up to rounding, which favours the best bucket).
pub fn build_count_function(strategy: CountStrategy, goal_docs: u64, unique: u64) -> Result<CountFunction> {
    strategy.validate()?;
    if goal_docs == 0 {
        return Err(Error::invalid("goal_docs must be >= 1"));
    }
    let profile = strategy.profile();
    let sizes = bucket_sizes(&profile, goal_docs);
    if sizes.iter().sum::<u64>() > unique {
        return Err(Error::InfeasibleGoal {
            goal: goal_docs,
            max_achievable: max_achievable(&strategy, unique),
        });
    }
    let thresholds = sizes
        .iter()
        .scan(0u64, |acc, s| {
            *acc += s;
            Some(*acc)
        })
        .collect();
    Ok(CountFunction {
        strategy,
        goal_docs,
        bucket_sizes: sizes,
        copies: profile,
        thresholds,
    })
}

impl CountFunction {
    /// Target copies for the document at 1-based ranked `position`.
    pub fn copies_at(&self, position: u64) -> u32 {
        self.thresholds
            .iter()
            .position(|&t| position <= t)
            .map_or(0, |b| self.copies[b])
    }

    /// Total copies the function assigns.
    pub fn planned_docs(&self) -> u64 {
        self.bucket_sizes.iter().zip(&self.copies).map(|(&s, &c)| s * c as u64).sum()
    }
}

/// Expected `(documents, tokens)` emitted, given token counts of the unique
/// documents in ranked order (best first).
pub fn expected_output(count_fn: &CountFunction, ranked_tokens: &[u64]) -> (u64, u64) {
    ranked_tokens
        .iter()
        .enumerate()
        .fold((0, 0), |(docs, tokens), (i, &t)| {
            let c = count_fn.copies_at(i as u64 + 1) as u64;
            (docs + c, tokens + c * t)
        })
}

/// Goal whose expected token output is closest to `token_budget`.
pub fn fit_goal_docs(strategy: &CountStrategy, ranked_tokens: &[u64], token_budget: u64) -> Result<CountFunction> {
    strategy.validate()?;
    let unique = ranked_tokens.len() as u64;
    let max_goal = max_achievable(strategy, unique);
    let tokens_at = |g: u64| -> Result<u64> {
        let f = build_count_function(strategy.clone(), g, unique)?;
        Ok(expected_output(&f, ranked_tokens).1)
    };
    if max_goal == 0 || tokens_at(max_goal)? < token_budget {
        let available = if max_goal == 0 { 0 } else { tokens_at(max_goal)? };
        return Err(Error::TargetTooLarge {
            target: token_budget,
            available,
        });
    }
    let (mut lo, mut hi) = (1u64, max_goal);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if tokens_at(mid)? >= token_budget {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    // Expected tokens are only roughly monotone in the goal (bucket
    // boundaries shift), so refine within a couple of bucket rounds.
    let span = 2 * strategy.profile().iter().map(|&c| c as u64).sum::<u64>();
    let mut best = (u64::MAX, lo);
    for g in lo.saturating_sub(span).max(1)..=(lo + span).min(max_goal) {
        let miss = tokens_at(g)?.abs_diff(token_budget);
        if miss < best.0 {
            best = (miss, g);
        }
    }
    build_count_function(strategy.clone(), best.1, unique)
}

/// One pre-deduplication instance to resample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: DocId,
    pub duplicate_count: u64,
    pub target_count: u32,
}

/// For every instance run `target_count` trials, each keeping a copy with
/// probability `1 / duplicate_count`. Returns instance positions in input
/// order, repeated once per kept copy.
pub fn sample_count_manipulation(instances: &[Instance], seed: u64) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (p, inst) in instances.iter().enumerate() {
        if inst.duplicate_count == 0 {
            return Err(Error::invalid(format!("instance {} has duplicate_count 0", inst.id)));
        }
        let keep_p = 1.0 / inst.duplicate_count as f64;
        for t in 0..inst.target_count {
            if keyed::unit(seed, Stream::Count, inst.id.as_str(), t as u64) < keep_p {
                out.push(p);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManipulationLevel {
    /// Per-instance coin trials.
    #[default]
    Instance,
    /// Exactly `target` copies of each content's representative. Variance-free
    /// extension.
    Unique,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    Docs(u64),
    Tokens(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationConfig {
    pub strategy: CountStrategy,
    pub goal: Goal,
    pub metric: RankMetric,
    pub level: ManipulationLevel,
    /// Missing metric fields are an error instead of ranking last.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulationPlan {
    pub count_fn: CountFunction,
    /// Unique contents, best first.
    pub ranked: Vec<UniqueDoc>,
    pub expected_docs: u64,
    pub expected_tokens: u64,
    /// Per input document: its content's target copy count.
    pub targets: Vec<u32>,
    /// Per input document: instances of its content present in the corpus.
    pub instance_counts: Vec<u64>,
    /// Per input document: whether it represents its content.
    pub is_representative: Vec<bool>,
}

/// Rank the contents of `docs` (grouped by `table`) and assign targets.
pub fn plan_manipulation(
    docs: &[Document],
    table: &DuplicateClusterTable,
    config: &ManipulationConfig,
) -> Result<ManipulationPlan> {
    let mut slot_of = vec![usize::MAX; table.num_clusters()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of_doc = Vec::with_capacity(docs.len());
    for (p, d) in docs.iter().enumerate() {
        let pos = table.position(&d.id).ok_or_else(|| Error::UnknownId(d.id.to_string()))?;
        let c = table.cluster_index(pos);
        if slot_of[c] == usize::MAX {
            slot_of[c] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot_of[c]].push(p);
        group_of_doc.push(slot_of[c]);
    }
    let reps: Vec<usize> = groups.iter().map(|g| representative(docs, g).expect("non-empty")).collect();
    let uniques: Vec<UniqueDoc> = reps
        .iter()
        .map(|&r| {
            let d = &docs[r];
            Ok(UniqueDoc {
                id: d.id.clone(),
                score: d.quality_score,
                dup_count: Some(table.count(&d.id)?),
                token_count: d.token_count,
            })
        })
        .collect::<Result<_>>()?;
    let ranks = rank_documents(&uniques, config.metric, config.strict)?;
    let order = ranked_order(&ranks);
    let by_id: BTreeMap<&DocId, usize> = uniques.iter().enumerate().map(|(i, u)| (&u.id, i)).collect();
    let mut position_of_group = vec![0u64; groups.len()];
    let mut ranked = Vec::with_capacity(order.len());
    for (pos, id) in order.iter().enumerate() {
        let g = by_id[id];
        position_of_group[g] = pos as u64 + 1;
        ranked.push(uniques[g].clone());
    }
    let ranked_tokens: Vec<u64> = ranked.iter().map(|u| u.token_count).collect();
    let count_fn = match config.goal {
        Goal::Docs(n) => build_count_function(config.strategy.clone(), n, ranked.len() as u64)?,
        Goal::Tokens(b) => fit_goal_docs(&config.strategy, &ranked_tokens, b)?,
    };
    let (expected_docs, expected_tokens) = expected_output(&count_fn, &ranked_tokens);
    let targets = group_of_doc
        .iter()
        .map(|&g| count_fn.copies_at(position_of_group[g]))
        .collect();
    let instance_counts = group_of_doc.iter().map(|&g| groups[g].len() as u64).collect();
    let mut is_representative = vec![false; docs.len()];
    for &r in &reps {
        is_representative[r] = true;
    }
    Ok(ManipulationPlan {
        count_fn,
        ranked,
        expected_docs,
        expected_tokens,
        targets,
        instance_counts,
        is_representative,
    })
}

/// Resample `docs` according to `plan`. Kept copies appear in input order.
pub fn apply_plan(docs: &[Document], plan: &ManipulationPlan, level: ManipulationLevel, seed: u64) -> Result<Vec<Document>> {
    let positions = match level {
        ManipulationLevel::Instance => {
            let instances: Vec<Instance> = docs
                .iter()
                .enumerate()
                .map(|(p, d)| Instance {
                    id: d.id.clone(),
                    duplicate_count: plan.instance_counts[p],
                    target_count: plan.targets[p],
                })
                .collect();
            sample_count_manipulation(&instances, seed)?
        }
        ManipulationLevel::Unique => (0..docs.len())
            .filter(|&p| plan.is_representative[p])
            .flat_map(|p| std::iter::repeat_n(p, plan.targets[p] as usize))
            .collect(),
    };
    Ok(positions.into_iter().map(|p| docs[p].clone()).collect())
}
