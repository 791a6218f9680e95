use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dupcurate_core::corpus_io::{ParsePolicy, ReadOptions, ShardReader, INCOMPLETE_MARKER, MANIFEST_FILE};
use dupcurate_core::stats_report::{duplication_profile, DuplicationProfile};
use dupcurate_core::{ClusterKind, CorpusManifest, DuplicateClusterTable};
use serde_json::Value;

use super::sample::EPOCH_INDEX_FILE;
use crate::common::{CLUSTERS_FILE, CORPUS_DIR, PROFILE_FILE};
use crate::{CliError, CliResult, GlobalArgs, EFFECTIVE_CONFIG, SUMMARY};

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run directory produced by another subcommand.
    #[arg(long, value_name = "DIR")]
    pub run_dir: PathBuf,
}

struct Check {
    name: &'static str,
    outcome: Result<String, String>,
}

/// Recount of a written corpus.
struct Recount {
    docs: u64,
    tokens: u64,
    max_doc_tokens: u64,
}

fn load_json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn check_manifest(dir: &Path) -> Result<(String, Recount), String> {
    if dir.join(INCOMPLETE_MARKER).exists() {
        return Err("corpus was not completely written".into());
    }
    let manifest = CorpusManifest::load(&dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    if manifest.shard_paths.len() != manifest.shard_doc_counts.len() {
        return Err("manifest lists a different number of shards and shard counts".into());
    }
    let opts = ReadOptions {
        tokenizer: manifest.tokenizer_mode,
        policy: ParsePolicy::Strict,
    };
    let mut rc = Recount {
        docs: 0,
        tokens: 0,
        max_doc_tokens: 0,
    };
    let (mut scored, mut counted) = (true, true);
    for (i, (name, &expected)) in manifest.shard_paths.iter().zip(&manifest.shard_doc_counts).enumerate() {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(format!("shard {name} is missing"));
        }
        let mut n = 0;
        for d in ShardReader::open(&path, i, opts).map_err(|e| e.to_string())? {
            let d = d.map_err(|e| e.to_string())?;
            n += 1;
            rc.tokens += d.token_count;
            rc.max_doc_tokens = rc.max_doc_tokens.max(d.token_count);
            scored &= d.quality_score.is_some();
            counted &= d.duplicate_count.is_some();
        }
        if n != expected {
            return Err(format!("shard {name} holds {n} documents, manifest says {expected}"));
        }
        rc.docs += n;
    }
    if rc.docs != manifest.doc_count || rc.tokens != manifest.token_count {
        return Err(format!(
            "recount {} docs / {} tokens, manifest says {} / {}",
            rc.docs, rc.tokens, manifest.doc_count, manifest.token_count
        ));
    }
    let nonempty = rc.docs > 0;
    if manifest.has_scores != (nonempty && scored) || manifest.has_dup_counts != (nonempty && counted) {
        return Err("manifest score/dup_count flags disagree with the records".into());
    }
    Ok((
        format!("{} shards, {} docs, {} tokens", manifest.shard_paths.len(), rc.docs, rc.tokens),
        rc,
    ))
}

fn check_partition(run_dir: &Path) -> Result<String, String> {
    let table =
        DuplicateClusterTable::read_jsonl(&run_dir.join(CLUSTERS_FILE), ClusterKind::Fuzzy).map_err(|e| e.to_string())?;
    let total: u64 = table.clusters().iter().map(|c| c.size).sum();
    if total != table.len() as u64 {
        return Err(format!("cluster sizes sum to {total}, table has {} rows", table.len()));
    }
    let profile_path = run_dir.join(PROFILE_FILE);
    if profile_path.is_file() {
        let stored: DuplicationProfile =
            serde_json::from_value(load_json(&profile_path)?).map_err(|e| format!("{PROFILE_FILE}: {e}"))?;
        if stored != duplication_profile(&table) {
            return Err(format!("{PROFILE_FILE} does not match the cluster table"));
        }
    }
    Ok(format!("{} docs in {} clusters", table.len(), table.num_clusters()))
}

fn u(v: &Value, key: &str) -> Option<u64> {
    v.get(key).and_then(Value::as_u64)
}

fn check_budget(command: &str, summary: &Value, rc: &Recount, run_dir: &Path) -> Result<String, String> {
    if u(summary, "output_docs") != Some(rc.docs) || u(summary, "output_tokens") != Some(rc.tokens) {
        return Err("summary output counts disagree with the corpus".into());
    }
    match command {
        "sample" => {
            let candidates = u(summary, "candidates").unwrap_or(0);
            let input_tokens = u(summary, "input_tokens").unwrap_or(0);
            let target = summary.get("target").cloned().unwrap_or(Value::Null);
            if let Some(n) = u(&target, "docs") {
                if rc.docs != n.min(candidates) {
                    return Err(format!("{} docs kept for a target of {n}", rc.docs));
                }
            } else if let Some(b) = u(&target, "tokens") {
                let reached = rc.tokens >= b || rc.tokens >= input_tokens;
                if !reached || rc.tokens.saturating_sub(b) >= rc.max_doc_tokens.max(1) {
                    return Err(format!("{} tokens kept for a budget of {b}", rc.tokens));
                }
            }
            let index_path = run_dir.join(EPOCH_INDEX_FILE);
            if index_path.is_file() {
                let index = load_json(&index_path)?;
                if u(&index, "emitted_tokens") != Some(rc.tokens) {
                    return Err(format!("{EPOCH_INDEX_FILE} disagrees with the corpus token count"));
                }
                if u(&index, "total_tokens").is_some_and(|t| rc.tokens < t) {
                    return Err("epoch stream stops short of its token budget".into());
                }
            }
        }
        "manipulate" => {
            if summary.get("level").and_then(Value::as_str) == Some("unique")
                && u(summary, "expected_docs") != Some(rc.docs)
            {
                return Err("unique-level output differs from the planned copy counts".into());
            }
        }
        _ => {}
    }
    Ok(format!("{} docs / {} tokens", rc.docs, rc.tokens))
}

pub fn run(_g: &GlobalArgs, a: &VerifyArgs) -> CliResult<()> {
    let dir = &a.run_dir;
    if !dir.is_dir() {
        return Err(CliError::Io(format!("{}: not a directory", dir.display())));
    }
    let mut checks = Vec::new();
    let config = load_json(&dir.join(EFFECTIVE_CONFIG));
    let command = config
        .as_ref()
        .ok()
        .and_then(|c| c.get("command").and_then(Value::as_str).map(str::to_owned));
    checks.push(Check {
        name: "config",
        outcome: match (&config, &command) {
            (Err(e), _) => Err(e.clone()),
            (Ok(_), None) => Err(format!("{EFFECTIVE_CONFIG} names no command")),
            (Ok(_), Some(c)) => Ok(format!("command {c}")),
        },
    });
    let summary = load_json(&dir.join(SUMMARY));
    checks.push(Check {
        name: "summary",
        outcome: summary.as_ref().map(|_| "present".to_owned()).map_err(Clone::clone),
    });

    let corpus = dir.join(CORPUS_DIR);
    let writes_corpus = matches!(command.as_deref(), Some("ingest" | "sample" | "manipulate"));
    let mut recount = None;
    if writes_corpus || corpus.is_dir() {
        let outcome = check_manifest(&corpus).map(|(msg, rc)| {
            recount = Some(rc);
            msg
        });
        checks.push(Check {
            name: "manifest",
            outcome,
        });
    }
    if command.as_deref() == Some("dedup") || dir.join(CLUSTERS_FILE).exists() {
        checks.push(Check {
            name: "partition",
            outcome: check_partition(dir),
        });
    }
    if let (Some(cmd), Ok(summary), Some(rc)) = (command.as_deref(), &summary, &recount) {
        if matches!(cmd, "ingest" | "sample" | "manipulate") {
            checks.push(Check {
                name: "budget",
                outcome: check_budget(cmd, summary, rc, dir),
            });
        }
    }

    let mut failed = 0;
    for c in &checks {
        match &c.outcome {
            Ok(msg) => println!("PASS {:<10} {msg}", c.name),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:<10} {msg}", c.name);
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
