use std::collections::{BTreeMap, HashMap};

use dupcurate_core::count_manipulation::{
    apply_plan, build_count_function, expected_output, fit_goal_docs, plan_manipulation, sample_count_manipulation,
    CountStrategy, Goal, Instance, ManipulationConfig, ManipulationLevel, RankMetric,
};
use dupcurate_core::minhash_dedup::ClusterKind;
use dupcurate_core::sampling::{dedup_then_subsample, SampleTarget};
use dupcurate_core::{DocId, Document, DuplicateClusterTable};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Exact output distribution by enumerating every coin outcome. Returns a
/// map from the kept-position sequence to its probability.
fn enumerate_outcomes(instances: &[Instance]) -> BTreeMap<Vec<usize>, f64> {
    let random_coins: usize = instances
        .iter()
        .filter(|i| i.duplicate_count > 1)
        .map(|i| i.target_count as usize)
        .sum();
    assert!(random_coins <= 22, "too many coins to enumerate");
    let mut dist = BTreeMap::new();
    for mask in 0u64..(1 << random_coins) {
        let mut prob = 1.0;
        let mut kept = Vec::new();
        let mut bit = 0;
        for (p, inst) in instances.iter().enumerate() {
            let keep = 1.0 / inst.duplicate_count as f64;
            for _ in 0..inst.target_count {
                if inst.duplicate_count == 1 {
                    kept.push(p);
                    continue;
                }
                if mask >> bit & 1 == 1 {
                    prob *= keep;
                    kept.push(p);
                } else {
                    prob *= 1.0 - keep;
                }
                bit += 1;
            }
        }
        *dist.entry(kept).or_insert(0.0) += prob;
    }
    dist
}

fn small_instances() -> Vec<Instance> {
    let mut v = Vec::new();
    let mut push = |id: String, c: u64, t: u32| {
        v.push(Instance {
            id: DocId::new(id),
            duplicate_count: c,
            target_count: t,
        })
    };
    for i in 0..2 {
        push(format!("a{i}"), 2, 2);
    }
    for i in 0..3 {
        push(format!("b{i}"), 3, 1);
    }
    for i in 0..20 {
        push(format!("s{i:02}"), 1, (i % 3) as u32);
    }
    for i in 0..4 {
        push(format!("z{i}"), 4, 0);
    }
    v
}

#[test]
fn matches_exhaustive_enumeration() {
    let instances = small_instances();
    assert!(instances.len() <= 50);
    let oracle = enumerate_outcomes(&instances);
    assert!((oracle.values().sum::<f64>() - 1.0).abs() < 1e-12);

    let runs = 100_000u64;
    let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
    for seed in 0..runs {
        *counts.entry(sample_count_manipulation(&instances, seed).unwrap()).or_default() += 1;
    }
    let mut tv = 0.0;
    for (k, &p) in &oracle {
        let q = counts.get(k).copied().unwrap_or(0) as f64 / runs as f64;
        tv += (p - q).abs();
    }
    for (k, &c) in &counts {
        if !oracle.contains_key(k) {
            tv += c as f64 / runs as f64;
        }
    }
    tv /= 2.0;
    assert!(tv < 0.02, "total variation {tv}");
}

/// Power-law corpus: content sizes ~ floor(u^-1.2), capped at 60.
fn power_law_corpus(rng: &mut StdRng, instances: usize) -> (Vec<Document>, DuplicateClusterTable) {
    let mut docs = Vec::new();
    let mut pairs = Vec::new();
    let mut c = 0;
    while docs.len() < instances {
        let u: f64 = rng.gen_range(1e-3..1.0);
        let size = (u.powf(-1.2).floor() as usize).clamp(1, 60).min(instances - docs.len());
        let score: f64 = rng.gen();
        let label = DocId::new(format!("k{c:05}i00"));
        for m in 0..size {
            let id = format!("k{c:05}i{m:02}");
            docs.push(Document::new(id.clone(), "some words here").with_score(score));
            pairs.push((DocId::new(id), label.clone()));
        }
        c += 1;
    }
    (docs, DuplicateClusterTable::from_assignments(ClusterKind::Fuzzy, pairs).unwrap())
}

#[test]
fn expected_copies_equal_targets() {
    let mut rng = StdRng::seed_from_u64(4);
    let (docs, table) = power_law_corpus(&mut rng, 1000);
    let config = ManipulationConfig {
        strategy: CountStrategy::LinearUpToK { max_copies: 4 },
        goal: Goal::Docs(300),
        metric: RankMetric::Ensemble,
        level: ManipulationLevel::Instance,
        strict: true,
    };
    let plan = plan_manipulation(&docs, &table, &config).unwrap();
    let runs = 3000u64;
    let mut copies: HashMap<DocId, u64> = HashMap::new();
    for seed in 0..runs {
        for d in apply_plan(&docs, &plan, ManipulationLevel::Instance, seed).unwrap() {
            *copies.entry(table.cluster_of(&d.id).unwrap().id.clone()).or_default() += 1;
        }
    }
    let mut checked = 0;
    for (p, d) in docs.iter().enumerate() {
        if !plan.is_representative[p] {
            continue;
        }
        let cid = &table.cluster_of(&d.id).unwrap().id;
        let t = plan.targets[p] as f64;
        let c = plan.instance_counts[p] as f64;
        let mean = copies.get(cid).copied().unwrap_or(0) as f64 / runs as f64;
        let sigma = (t * (1.0 - 1.0 / c) / runs as f64).sqrt();
        if sigma == 0.0 {
            assert_eq!(mean, t, "content {cid}");
        } else {
            assert!((mean - t).abs() <= 3.0 * sigma, "content {cid}: mean {mean} target {t} (c={c})");
        }
        checked += 1;
    }
    assert_eq!(checked, plan.ranked.len());
}

#[test]
fn greedy_one_matches_global_dedup_when_counts_are_one() {
    // One instance per content: keep-probability 1 everywhere.
    let docs: Vec<Document> = (0..40)
        .map(|i| Document::new(format!("u{i:02}"), "a b c").with_score(i as f64 / 40.0))
        .collect();
    let table = DuplicateClusterTable::singletons(ClusterKind::Fuzzy, docs.iter().map(|d| d.id.clone()).collect())
        .unwrap();
    let config = ManipulationConfig {
        strategy: CountStrategy::GreedyK { max_copies: 1 },
        goal: Goal::Docs(40),
        metric: RankMetric::Score,
        level: ManipulationLevel::Instance,
        strict: true,
    };
    let plan = plan_manipulation(&docs, &table, &config).unwrap();
    let out = apply_plan(&docs, &plan, ManipulationLevel::Instance, 3).unwrap();
    assert_eq!(out, dedup_then_subsample(&docs, &table, SampleTarget::Docs(40), 3).unwrap());
}

#[test]
fn unique_level_is_exact() {
    let mut rng = StdRng::seed_from_u64(8);
    let (docs, table) = power_law_corpus(&mut rng, 300);
    let config = ManipulationConfig {
        strategy: CountStrategy::GreedyK { max_copies: 3 },
        goal: Goal::Docs(90),
        metric: RankMetric::Score,
        level: ManipulationLevel::Unique,
        strict: true,
    };
    let plan = plan_manipulation(&docs, &table, &config).unwrap();
    let out = apply_plan(&docs, &plan, ManipulationLevel::Unique, 0).unwrap();
    assert_eq!(out.len(), 90);
}

#[test]
fn better_rank_never_gets_fewer_copies() {
    let mut rng = StdRng::seed_from_u64(12);
    let (mut docs, table) = power_law_corpus(&mut rng, 400);
    let config = ManipulationConfig {
        strategy: CountStrategy::LinearUpToK { max_copies: 5 },
        goal: Goal::Docs(150),
        metric: RankMetric::Score,
        level: ManipulationLevel::Instance,
        strict: true,
    };
    let before = plan_manipulation(&docs, &table, &config).unwrap();
    // Boost one low-scored content to the top.
    let victim = (0..docs.len()).find(|&p| before.targets[p] == 0).unwrap();
    let cid = table.cluster_of(&docs[victim].id).unwrap().id.clone();
    for d in docs.iter_mut() {
        if table.cluster_of(&d.id).unwrap().id == cid {
            d.quality_score = Some(2.0);
        }
    }
    let after = plan_manipulation(&docs, &table, &config).unwrap();
    assert!(after.targets[victim] >= before.targets[victim]);
    assert_eq!(after.targets[victim], 5);
}

#[test]
fn fitted_goal_hits_token_budget() {
    let mut rng = StdRng::seed_from_u64(21);
    let tokens: Vec<u64> = (0..5000).map(|_| rng.gen_range(50..1500)).collect();
    for strategy in [
        CountStrategy::GreedyK { max_copies: 1 },
        CountStrategy::GreedyK { max_copies: 4 },
        CountStrategy::LinearUpToK { max_copies: 4 },
    ] {
        for budget in [500_000u64, 1_000_000, 3_000_000] {
            let f = fit_goal_docs(&strategy, &tokens, budget).unwrap();
            let (_, t) = expected_output(&f, &tokens);
            let err = (t as f64 - budget as f64).abs() / budget as f64;
            assert!(err <= 0.02, "{strategy:?} {budget}: {t}");
        }
    }
    let f = build_count_function(CountStrategy::GreedyK { max_copies: 1 }, 5000, 5000).unwrap();
    assert_eq!(expected_output(&f, &tokens).1, tokens.iter().sum::<u64>());
}

#[test]
fn doubling_copy_counts_doubles_output() {
    let tokens: Vec<u64> = (1..=200).collect();
    let a = build_count_function(CountStrategy::CustomSteps { copies: vec![3, 2, 1] }, 120, 200).unwrap();
    let b = build_count_function(CountStrategy::CustomSteps { copies: vec![6, 4, 2] }, 240, 200).unwrap();
    assert_eq!(a.thresholds, b.thresholds);
    let (da, ta) = expected_output(&a, &tokens);
    let (db, tb) = expected_output(&b, &tokens);
    assert_eq!((2 * da, 2 * ta), (db, tb));
}
