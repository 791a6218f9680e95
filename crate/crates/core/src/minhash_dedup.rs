//! Shingling, minhash signatures, LSH banding and duplicate clustering.
//!
//! Texts are normalized (lowercased, punctuation stripped, whitespace
//! collapsed) and split into word n-grams. Each n-gram is hashed once; the
//! k-th signature component is the minimum of `mix64(h ^ key_k)` over all
//! shingle hashes, with `key_k = mix64(seed ^ k)`. Components are grouped into
//! bands and every band is reduced to a single 64-bit key. Documents sharing
//! any band key end up in the same cluster (transitive closure via
//! union-find); cluster ids are the smallest member id.
//!
//! Documents with fewer than `ngram` words cannot be sketched. They are keyed
//! on their whole normalized text instead, so they only ever cluster with
//! identical stubs.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fs::File;
use std::hash::{BuildHasherDefault, Hasher};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{DocId, Document};
use crate::error::{Error, Result};
use crate::keyed::{self, mix64};
use crate::union_find::DisjointSet;

const SHORT_DOC_TAG: u64 = 0x5348_4f52_545f_444f;
const EXACT_TAG: u64 = 0x4558_4143_545f_5458;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LshParams {
    /// Shingle width in words.
    pub ngram: usize,
    pub bands: usize,
    pub rows: usize,
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        LshParams {
            ngram: 5,
            bands: 14,
            rows: 9,
            seed: 0,
        }
    }
}

impl LshParams {
    pub fn num_hashes(&self) -> usize {
        self.bands * self.rows
    }

    pub fn validate(&self) -> Result<()> {
        if self.ngram == 0 || self.bands == 0 || self.rows == 0 {
            return Err(Error::invalid("ngram, bands and rows must all be >= 1"));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = mix64(self.seed);
        for v in [self.ngram, self.bands, self.rows] {
            h = mix64(h ^ v as u64);
        }
        h
    }
}

/// Lowercase, drop punctuation and symbols, collapse whitespace runs.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut gap = false;
    for c in text.chars() {
        if c.is_whitespace() {
            gap = !out.is_empty();
        } else if c.is_alphanumeric() {
            if gap {
                out.push(' ');
                gap = false;
            }
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Distinct hashed word n-grams of a text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    hashes: Vec<u64>,
    n: usize,
    too_short: bool,
}

impl ShingleSet {
    /// Build from raw shingle hashes; duplicates are collapsed.
    pub fn from_hashes<I: IntoIterator<Item = u64>>(hashes: I, n: usize) -> Self {
        let mut hashes: Vec<u64> = hashes.into_iter().collect();
        hashes.sort_unstable();
        hashes.dedup();
        ShingleSet {
            too_short: hashes.is_empty(),
            hashes,
            n,
        }
    }

    pub fn hashes(&self) -> &[u64] {
        &self.hashes
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn too_short(&self) -> bool {
        self.too_short
    }
}

fn shingle_normalized(norm: &str, n: usize) -> ShingleSet {
    let n = n.max(1);
    let mut bounds = Vec::new();
    let mut start = None;
    for (i, b) in norm.bytes().enumerate() {
        match (b == b' ', start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                bounds.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        bounds.push((s, norm.len()));
    }
    if bounds.len() < n {
        return ShingleSet {
            hashes: Vec::new(),
            n,
            too_short: true,
        };
    }
    let hashes = bounds
        .windows(n)
        .map(|w| keyed::hash64(&norm.as_bytes()[w[0].0..w[n - 1].1], 0));
    ShingleSet::from_hashes(hashes, n)
}

/// Hashed contiguous n-word windows of the normalized text.
pub fn shingle(text: &str, n: usize) -> ShingleSet {
    shingle_normalized(&normalize(text), n)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
    pub bands: usize,
    pub rows: usize,
    pub seed: u64,
}

impl MinHashSignature {
    /// One key per band: a hash of the band index and its row values.
    pub fn band_keys(&self) -> Vec<u64> {
        let mut buf = Vec::with_capacity(8 * (self.rows + 1));
        (0..self.bands)
            .map(|b| {
                buf.clear();
                buf.extend_from_slice(&(b as u64).to_le_bytes());
                for v in &self.values[b * self.rows..(b + 1) * self.rows] {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                keyed::hash64(&buf, self.seed)
            })
            .collect()
    }

    /// Fraction of equal components; an estimate of Jaccard similarity.
    pub fn agreement(&self, other: &MinHashSignature) -> f64 {
        let eq = self.values.iter().zip(&other.values).filter(|(a, b)| a == b).count();
        eq as f64 / self.values.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct MinHasher {
    bands: usize,
    rows: usize,
    seed: u64,
    keys: Vec<u64>,
}

impl MinHasher {
    pub fn new(bands: usize, rows: usize, seed: u64) -> Self {
        let keys = (0..(bands * rows) as u64).map(|k| mix64(seed ^ k)).collect();
        MinHasher { bands, rows, seed, keys }
    }

    pub fn from_params(p: &LshParams) -> Self {
        Self::new(p.bands, p.rows, p.seed)
    }

    pub fn signature(&self, shingles: &ShingleSet) -> Result<MinHashSignature> {
        if shingles.is_empty() {
            return Err(Error::TooShort { n: shingles.n });
        }
        let mut values = vec![u64::MAX; self.keys.len()];
        for &h in shingles.hashes() {
            for (v, &k) in values.iter_mut().zip(&self.keys) {
                let x = mix64(h ^ k);
                if x < *v {
                    *v = x;
                }
            }
        }
        Ok(MinHashSignature {
            values,
            bands: self.bands,
            rows: self.rows,
            seed: self.seed,
        })
    }
}

/// Minhash signature of a shingle set.
pub fn signature(shingles: &ShingleSet, bands: usize, rows: usize, seed: u64) -> Result<MinHashSignature> {
    MinHasher::new(bands, rows, seed).signature(shingles)
}

/// Probability that two sets with Jaccard similarity `s` share at least one
/// band: `1 - (1 - s^rows)^bands`.
pub fn collision_probability(s: f64, bands: usize, rows: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid(format!("jaccard similarity {s} outside [0, 1]")));
    }
    Ok(1.0 - (1.0 - s.powi(rows as i32)).powi(bands as i32))
}

/// Everything clustering needs to know about one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocSketch {
    pub id: DocId,
    pub shard_index: usize,
    /// Band keys, or a single whole-text key when `short`.
    pub band_keys: Vec<u64>,
    pub short: bool,
    /// Hash of the normalized text, for exact clustering.
    pub exact: u128,
    pub config: u64,
}

#[derive(Debug, Clone)]
pub struct Sketcher {
    params: LshParams,
    hasher: MinHasher,
}

impl Sketcher {
    pub fn new(params: LshParams) -> Result<Self> {
        params.validate()?;
        Ok(Sketcher {
            hasher: MinHasher::from_params(&params),
            params,
        })
    }

    pub fn params(&self) -> &LshParams {
        &self.params
    }

    pub fn sketch(&self, id: DocId, shard_index: usize, text: &str) -> DocSketch {
        let norm = normalize(text);
        let exact = keyed::hash128(norm.as_bytes(), EXACT_TAG);
        let shingles = shingle_normalized(&norm, self.params.ngram);
        let (band_keys, short) = match self.hasher.signature(&shingles) {
            Ok(sig) => (sig.band_keys(), false),
            Err(_) => (vec![keyed::hash64(norm.as_bytes(), self.params.seed ^ SHORT_DOC_TAG)], true),
        };
        DocSketch {
            id,
            shard_index,
            band_keys,
            short,
            exact,
            config: self.params.fingerprint(),
        }
    }

    pub fn sketch_doc(&self, doc: &Document) -> DocSketch {
        self.sketch(doc.id.clone(), doc.shard_index, &doc.text)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKind {
    #[default]
    Fuzzy,
    Exact,
}

/// Global clustering unions across the whole corpus; per-shard clustering
/// only unions documents within the same shard.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    #[default]
    Global,
    PerShard,
}

#[derive(Default)]
pub(crate) struct PreHashed(u64);

impl Hasher for PreHashed {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut b = [0u8; 8];
            b[..chunk.len()].copy_from_slice(chunk);
            self.write_u64(u64::from_le_bytes(b));
        }
    }
    fn write_u32(&mut self, i: u32) {
        self.write_u64(i as u64);
    }
    fn write_u64(&mut self, i: u64) {
        self.0 = mix64(self.0 ^ i);
    }
}

pub(crate) type KeyMap<K, V> = HashMap<K, V, BuildHasherDefault<PreHashed>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub id: DocId,
    pub size: u64,
}

/// Partition of a corpus into duplicate clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicateClusterTable {
    kind: ClusterKind,
    ids: Vec<DocId>,
    cluster_of: Vec<u32>,
    clusters: Vec<ClusterInfo>,
    index: HashMap<DocId, u32>,
}

#[derive(Serialize, Deserialize)]
struct ClusterRow {
    id: DocId,
    cluster: DocId,
    count: u64,
}

fn build_index(ids: &[DocId]) -> Result<HashMap<DocId, u32>> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if index.insert(id.clone(), i as u32).is_some() {
            return Err(Error::invalid(format!("duplicate document id {id}")));
        }
    }
    Ok(index)
}

impl DuplicateClusterTable {
    /// Canonicalize a union-find assignment: each cluster is named after its
    /// smallest member id and clusters are ordered by that id.
    fn from_roots(kind: ClusterKind, ids: Vec<DocId>, roots: &[u32]) -> Result<Self> {
        let index = build_index(&ids)?;
        let mut min_member: HashMap<u32, usize> = HashMap::new();
        for (i, &r) in roots.iter().enumerate() {
            min_member
                .entry(r)
                .and_modify(|m| {
                    if ids[i] < ids[*m] {
                        *m = i
                    }
                })
                .or_insert(i);
        }
        let mut reps: Vec<(usize, u32)> = min_member.into_iter().map(|(r, m)| (m, r)).collect();
        reps.sort_unstable_by(|a, b| ids[a.0].cmp(&ids[b.0]));
        let mut slot: HashMap<u32, u32> = HashMap::with_capacity(reps.len());
        let mut clusters = Vec::with_capacity(reps.len());
        for (ci, &(m, r)) in reps.iter().enumerate() {
            slot.insert(r, ci as u32);
            clusters.push(ClusterInfo {
                id: ids[m].clone(),
                size: 0,
            });
        }
        let cluster_of: Vec<u32> = roots.iter().map(|r| slot[r]).collect();
        for &c in &cluster_of {
            clusters[c as usize].size += 1;
        }
        Ok(DuplicateClusterTable {
            kind,
            ids,
            cluster_of,
            clusters,
            index,
        })
    }

    /// Build from explicit `(document, cluster label)` pairs in document order.
    pub fn from_assignments(kind: ClusterKind, pairs: Vec<(DocId, DocId)>) -> Result<Self> {
        let mut label_slot: HashMap<DocId, u32> = HashMap::new();
        let mut clusters: Vec<ClusterInfo> = Vec::new();
        let mut ids = Vec::with_capacity(pairs.len());
        let mut cluster_of = Vec::with_capacity(pairs.len());
        for (id, label) in pairs {
            let c = *label_slot.entry(label.clone()).or_insert_with(|| {
                clusters.push(ClusterInfo { id: label, size: 0 });
                clusters.len() as u32 - 1
            });
            clusters[c as usize].size += 1;
            ids.push(id);
            cluster_of.push(c);
        }
        let index = build_index(&ids)?;
        Ok(DuplicateClusterTable {
            kind,
            ids,
            cluster_of,
            clusters,
            index,
        })
    }

    /// Every document in its own cluster.
    pub fn singletons(kind: ClusterKind, ids: Vec<DocId>) -> Result<Self> {
        let roots: Vec<u32> = (0..ids.len() as u32).collect();
        Self::from_roots(kind, ids, &roots)
    }

    pub fn kind(&self) -> ClusterKind {
        self.kind
    }

    /// Number of documents.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn ids(&self) -> &[DocId] {
        &self.ids
    }

    pub fn clusters(&self) -> &[ClusterInfo] {
        &self.clusters
    }

    pub fn position(&self, id: &DocId) -> Option<usize> {
        self.index.get(id).map(|&i| i as usize)
    }

    pub fn contains(&self, id: &DocId) -> bool {
        self.index.contains_key(id)
    }

    /// Cluster slot of the document at `pos` (document order).
    pub fn cluster_index(&self, pos: usize) -> usize {
        self.cluster_of[pos] as usize
    }

    pub fn cluster_of(&self, id: &DocId) -> Result<&ClusterInfo> {
        let pos = self.position(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
        Ok(&self.clusters[self.cluster_of[pos] as usize])
    }

    /// Pre-deduplication copy count of a document: its cluster's size.
    pub fn count(&self, id: &DocId) -> Result<u64> {
        Ok(self.cluster_of(id)?.size)
    }

    /// Document positions per cluster slot, each in document order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.clusters.len()];
        for (pos, &c) in self.cluster_of.iter().enumerate() {
            out[c as usize].push(pos);
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (id, &c) in self.ids.iter().zip(&self.cluster_of) {
            let info = &self.clusters[c as usize];
            let row = ClusterRow {
                id: id.clone(),
                cluster: info.id.clone(),
                count: info.size,
            };
            serde_json::to_writer(&mut w, &row)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Load a table written by [`Self::write_jsonl`]; stored counts must agree
    /// with the number of rows per cluster.
    pub fn read_jsonl(path: &Path, kind: ClusterKind) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: ClusterRow = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                path: path.to_owned(),
                line: i as u64 + 1,
                reason: e.to_string(),
            })?;
            counts.push((i as u64 + 1, row.count));
            pairs.push((row.id, row.cluster));
        }
        let table = Self::from_assignments(kind, pairs)?;
        for (pos, (line, count)) in counts.into_iter().enumerate() {
            let actual = table.clusters[table.cluster_of[pos] as usize].size;
            if actual != count {
                return Err(Error::Malformed {
                    path: path.to_owned(),
                    line,
                    reason: format!("count {count} but cluster has {actual} members"),
                });
            }
        }
        Ok(table)
    }
}

fn check_config(sketches: &[DocSketch]) -> Result<()> {
    if let Some(first) = sketches.first() {
        if let Some(bad) = sketches.iter().find(|s| s.config != first.config) {
            return Err(Error::MixedConfig(format!(
                "document {} was sketched with a different (ngram, bands, rows, seed)",
                bad.id
            )));
        }
    }
    Ok(())
}

fn shard_slot(mode: ClusterMode, shard_index: usize) -> u32 {
    match mode {
        ClusterMode::Global => 0,
        ClusterMode::PerShard => shard_index as u32,
    }
}

/// Fuzzy clusters: connected components of the "shares a band key" graph.
pub fn cluster(sketches: &[DocSketch], mode: ClusterMode) -> Result<DuplicateClusterTable> {
    check_config(sketches)?;
    let mut ds = DisjointSet::new(sketches.len());
    let bands = sketches.iter().map(|s| s.band_keys.len()).max().unwrap_or(0);
    let mut seen: KeyMap<(u32, u64), u32> = KeyMap::default();
    seen.reserve(sketches.len());
    // One band at a time keeps the key map at one entry per document.
    for b in 0..bands {
        seen.clear();
        for (i, s) in sketches.iter().enumerate() {
            let Some(&key) = s.band_keys.get(b) else { continue };
            match seen.entry((shard_slot(mode, s.shard_index), key)) {
                Entry::Occupied(e) => {
                    ds.union(*e.get(), i as u32);
                }
                Entry::Vacant(e) => {
                    e.insert(i as u32);
                }
            }
        }
    }
    let roots = ds.roots();
    DuplicateClusterTable::from_roots(
        ClusterKind::Fuzzy,
        sketches.iter().map(|s| s.id.clone()).collect(),
        &roots,
    )
}

/// Exact clusters: equivalence classes of identical normalized text.
pub fn exact_cluster_sketches(sketches: &[DocSketch], mode: ClusterMode) -> Result<DuplicateClusterTable> {
    let mut first: HashMap<(u32, u128), u32> = HashMap::with_capacity(sketches.len());
    let roots: Vec<u32> = sketches
        .iter()
        .enumerate()
        .map(|(i, s)| *first.entry((shard_slot(mode, s.shard_index), s.exact)).or_insert(i as u32))
        .collect();
    DuplicateClusterTable::from_roots(
        ClusterKind::Exact,
        sketches.iter().map(|s| s.id.clone()).collect(),
        &roots,
    )
}

pub fn exact_cluster<'a, I>(docs: I, mode: ClusterMode) -> Result<DuplicateClusterTable>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut ids = Vec::new();
    let mut first: HashMap<(u32, u128), u32> = HashMap::new();
    let mut roots = Vec::new();
    for (i, d) in docs.into_iter().enumerate() {
        let key = keyed::hash128(normalize(&d.text).as_bytes(), EXACT_TAG);
        roots.push(*first.entry((shard_slot(mode, d.shard_index), key)).or_insert(i as u32));
        ids.push(d.id.clone());
    }
    DuplicateClusterTable::from_roots(ClusterKind::Exact, ids, &roots)
}

/// Sketch and fuzzy-cluster an in-memory corpus.
pub fn fuzzy_cluster<'a, I>(docs: I, params: LshParams, mode: ClusterMode) -> Result<DuplicateClusterTable>
where
    I: IntoIterator<Item = &'a Document>,
{
    let sketcher = Sketcher::new(params)?;
    let sketches: Vec<DocSketch> = docs.into_iter().map(|d| sketcher.sketch_doc(d)).collect();
    cluster(&sketches, mode)
}

/// Per-document duplicate count (size of the document's cluster).
pub fn duplicate_counts(table: &DuplicateClusterTable) -> HashMap<DocId, u64> {
    table
        .ids
        .iter()
        .zip(&table.cluster_of)
        .map(|(id, &c)| (id.clone(), table.clusters[c as usize].size))
        .collect()
}

/// Fuzzy clustering that grows one document at a time; used for prefix
/// statistics over an ordered pool.
#[derive(Default)]
pub struct IncrementalClusterer {
    ds: DisjointSet,
    seen: KeyMap<(u32, u64), u32>,
    config: Option<u64>,
}

impl IncrementalClusterer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, sketch: &DocSketch) -> Result<()> {
        match self.config {
            None => self.config = Some(sketch.config),
            Some(c) if c != sketch.config => {
                return Err(Error::MixedConfig(format!("document {}", sketch.id)));
            }
            _ => {}
        }
        let idx = self.ds.push();
        for (b, &key) in sketch.band_keys.iter().enumerate() {
            match self.seen.entry((b as u32, key)) {
                Entry::Occupied(e) => {
                    self.ds.union(*e.get(), idx);
                }
                Entry::Vacant(e) => {
                    e.insert(idx);
                }
            }
        }
        Ok(())
    }

    pub fn docs(&self) -> usize {
        self.ds.len()
    }

    pub fn clusters(&self) -> usize {
        self.ds.components()
    }
}

const CACHE_MAGIC: &[u8; 4] = b"DCSK";
const CACHE_VERSION: u32 = 1;

/// Streams document sketches to a versioned binary file.
///
/// Layout (little endian): magic, version u32, ngram u32, bands u32, rows u32,
/// seed u64, then per document: shard u32, short u8, id length u32, id bytes,
/// key count u32, keys u64..., exact hash u128.
pub struct SketchCacheWriter {
    w: BufWriter<File>,
    path: std::path::PathBuf,
    config: u64,
}

impl SketchCacheWriter {
    pub fn create(path: &Path, params: &LshParams) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut header = Vec::with_capacity(28);
        header.extend_from_slice(CACHE_MAGIC);
        header.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        for v in [params.ngram, params.bands, params.rows] {
            header.extend_from_slice(&(v as u32).to_le_bytes());
        }
        header.extend_from_slice(&params.seed.to_le_bytes());
        w.write_all(&header).map_err(|e| Error::io(path, e))?;
        Ok(SketchCacheWriter {
            w,
            path: path.to_owned(),
            config: params.fingerprint(),
        })
    }

    pub fn push(&mut self, s: &DocSketch) -> Result<()> {
        if s.config != self.config {
            return Err(Error::MixedConfig(format!("document {}", s.id)));
        }
        let mut buf = Vec::with_capacity(32 + s.id.as_str().len() + 8 * s.band_keys.len());
        buf.extend_from_slice(&(s.shard_index as u32).to_le_bytes());
        buf.push(s.short as u8);
        buf.extend_from_slice(&(s.id.as_str().len() as u32).to_le_bytes());
        buf.extend_from_slice(s.id.as_str().as_bytes());
        buf.extend_from_slice(&(s.band_keys.len() as u32).to_le_bytes());
        for k in &s.band_keys {
            buf.extend_from_slice(&k.to_le_bytes());
        }
        buf.extend_from_slice(&s.exact.to_le_bytes());
        self.w.write_all(&buf).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 if filled == 0 => return Ok(false),
            0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            n => filled += n,
        }
    }
    Ok(true)
}

pub fn read_sketch_cache(path: &Path) -> Result<(LshParams, Vec<DocSketch>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let bad = |reason: &str| Error::Malformed {
        path: path.to_owned(),
        line: 0,
        reason: reason.to_owned(),
    };
    let mut header = [0u8; 28];
    r.read_exact(&mut header).map_err(io)?;
    if &header[..4] != CACHE_MAGIC {
        return Err(bad("not a sketch cache"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    if u32_at(4) != CACHE_VERSION {
        return Err(bad("unsupported sketch cache version"));
    }
    let params = LshParams {
        ngram: u32_at(8) as usize,
        bands: u32_at(12) as usize,
        rows: u32_at(16) as usize,
        seed: u64::from_le_bytes(header[20..28].try_into().unwrap()),
    };
    let config = params.fingerprint();
    let mut out = Vec::new();
    let mut head = [0u8; 9];
    while read_exact_or_eof(&mut r, &mut head).map_err(io)? {
        let shard_index = u32::from_le_bytes(head[..4].try_into().unwrap()) as usize;
        let short = head[4] != 0;
        let id_len = u32::from_le_bytes(head[5..9].try_into().unwrap()) as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id).map_err(io)?;
        let id = String::from_utf8(id).map_err(|_| bad("id is not utf-8"))?;
        let mut n = [0u8; 4];
        r.read_exact(&mut n).map_err(io)?;
        let mut keys = vec![0u8; 8 * u32::from_le_bytes(n) as usize];
        r.read_exact(&mut keys).map_err(io)?;
        let mut exact = [0u8; 16];
        r.read_exact(&mut exact).map_err(io)?;
        out.push(DocSketch {
            id: DocId::new(id),
            shard_index,
            band_keys: keys.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect(),
            short,
            exact: u128::from_le_bytes(exact),
            config,
        });
    }
    Ok((params, out))
}
