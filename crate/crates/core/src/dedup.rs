//! Path, perceptual (average hash) and exact (MD5) duplicate detection.
//!
//! Stages run in order path -> perceptual -> exact, each over the
//! survivors of the previous one. A perceptual edge links two records whose
//! hashes differ in at most `threshold` bits, unless the pair is an exact
//! duplicate (identical image and label digests); those pairs are left to
//! the exact stage so the reported reason stays specific. Perceptual
//! clusters use single linkage. When a later stage links representatives
//! of earlier groups, the earlier groups are absorbed so that groups stay
//! disjoint. Every group keeps its lexicographically smallest image id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Component, Path, PathBuf};

use md5::{Digest, Md5};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::LUMA_WEIGHTS;
use crate::image::RgbImage;
use crate::model::ImageRecord;
use crate::scalar::Scalar;

/// Hash thumbnail side length.
pub const HASH_SIDE: usize = 8;

pub const DEFAULT_PERCEPTUAL_THRESHOLD: u32 = 5;

/// 128-bit MD5 digest, hex encoded in manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentDigest(pub [u8; 16]);

impl fmt::Display for ContentDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for ContentDigest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ContentDigest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let mut out = [0u8; 16];
        hex::decode_to_slice(&text, &mut out).map_err(serde::de::Error::custom)?;
        Ok(ContentDigest(out))
    }
}

/// 64-bit average hash. Bit 63 holds the top-left thumbnail cell, bit 0 the
/// bottom-right one, so each thumbnail row is one byte read left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PerceptualHash(pub u64);

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for PerceptualHash {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PerceptualHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        if text.len() != 16 {
            return Err(serde::de::Error::custom("perceptual hash must be 16 hex digits"));
        }
        u64::from_str_radix(&text, 16)
            .map(PerceptualHash)
            .map_err(serde::de::Error::custom)
    }
}

pub fn content_digest(bytes: &[u8]) -> ContentDigest {
    ContentDigest(Md5::digest(bytes).into())
}

pub fn content_digest_file(path: &Path) -> Result<ContentDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(content_digest(&bytes))
}

/// Fractional overlap of source cells `[i, i+1)` with each of `HASH_SIDE`
/// equal target intervals spanning `[0, len)`.
fn box_weights<T: Scalar>(len: usize) -> Vec<Vec<(usize, T)>> {
    let step = len as f64 / HASH_SIDE as f64;
    (0..HASH_SIDE)
        .map(|k| {
            let lo = k as f64 * step;
            let hi = (k + 1) as f64 * step;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(len);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    (overlap > 0.0).then(|| (i, T::lit(overlap)))
                })
                .collect()
        })
        .collect()
}

/// Grayscale 8x8 thumbnail by area-weighted box averaging.
pub fn hash_thumbnail<T: Scalar>(image: &RgbImage<T>) -> [T; HASH_SIDE * HASH_SIDE] {
    let [wr, wg, wb] = LUMA_WEIGHTS.map(T::lit);
    let gray: Vec<T> = image
        .pixels()
        .iter()
        .map(|[r, g, b]| wr * *r + wg * *g + wb * *b)
        .collect();
    // Accumulate deviations from one reference value so that a constant
    // image reproduces its value exactly in every cell.
    let shift = gray[0];
    let wx = box_weights::<T>(image.width());
    let wy = box_weights::<T>(image.height());
    let mut out = [T::zero(); HASH_SIDE * HASH_SIDE];
    for (ty, ys) in wy.iter().enumerate() {
        for (tx, xs) in wx.iter().enumerate() {
            let mut acc = T::zero();
            let mut area = T::zero();
            for &(y, ay) in ys {
                let row = &gray[y * image.width()..(y + 1) * image.width()];
                for &(x, ax) in xs {
                    let a = ax * ay;
                    acc = acc + a * (row[x] - shift);
                    area = area + a;
                }
            }
            out[ty * HASH_SIDE + tx] = shift + acc / area;
        }
    }
    out
}

/// Average hash: thumbnail cells at or above the thumbnail mean set their bit.
pub fn average_hash<T: Scalar>(image: &RgbImage<T>) -> PerceptualHash {
    let cells = hash_thumbnail(image);
    let (mean, _) = crate::scalar::mean_and_variance(cells.iter().copied())
        .expect("thumbnail is non-empty");
    let mut bits = 0u64;
    for c in cells {
        bits <<= 1;
        if c >= mean {
            bits |= 1;
        }
    }
    PerceptualHash(bits)
}

pub fn hamming(a: PerceptualHash, b: PerceptualHash) -> u32 {
    (a.0 ^ b.0).count_ones()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DuplicateReason {
    Path,
    Perceptual,
    Exact,
}

impl DuplicateReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DuplicateReason::Path => "path",
            DuplicateReason::Perceptual => "perceptual",
            DuplicateReason::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateGroup {
    /// All members, sorted; the representative is the first.
    pub members: Vec<String>,
    pub representative: String,
    /// Stage that produced the final group.
    pub reason: DuplicateReason,
    /// Removal stage of each non-representative member.
    pub removed: BTreeMap<String, DuplicateReason>,
}

#[derive(Debug, Clone, Default)]
pub struct DedupOutcome {
    pub groups: Vec<DuplicateGroup>,
    /// Surviving records in their input order.
    pub survivors: Vec<ImageRecord>,
    pub removed_count: usize,
}

/// Lexical path normalization (`.` dropped, `..` folded).
pub fn normalize_path(path: &str) -> PathBuf {
    let mut out = PathBuf::new();
    for comp in Path::new(path).components() {
        match comp {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

struct GroupBuilder {
    members: BTreeSet<String>,
    removed: BTreeMap<String, DuplicateReason>,
    reason: DuplicateReason,
    alive: bool,
}

#[derive(Default)]
struct Grouping {
    groups: Vec<GroupBuilder>,
    /// Representative id -> live group index.
    by_rep: HashMap<String, usize>,
}

impl Grouping {
    /// Records one stage cluster (ids of current survivors) and returns the
    /// ids it removes.
    fn add_cluster(&mut self, mut ids: Vec<String>, reason: DuplicateReason) -> Vec<String> {
        ids.sort();
        let rep = ids[0].clone();
        let mut g = GroupBuilder {
            members: BTreeSet::new(),
            removed: BTreeMap::new(),
            reason,
            alive: true,
        };
        for id in &ids {
            if let Some(old) = self.by_rep.remove(id) {
                let old = &mut self.groups[old];
                old.alive = false;
                g.members.append(&mut old.members);
                g.removed.append(&mut old.removed);
            }
            g.members.insert(id.clone());
            if *id != rep {
                g.removed.insert(id.clone(), reason);
            }
        }
        self.by_rep.insert(rep, self.groups.len());
        self.groups.push(g);
        ids.split_off(1)
    }

    fn finish(self) -> Vec<DuplicateGroup> {
        let mut out: Vec<DuplicateGroup> = self
            .groups
            .into_iter()
            .filter(|g| g.alive)
            .map(|g| {
                let members: Vec<String> = g.members.into_iter().collect();
                DuplicateGroup {
                    representative: members[0].clone(),
                    members,
                    reason: g.reason,
                    removed: g.removed,
                }
            })
            .collect();
        out.sort_by(|a, b| a.representative.cmp(&b.representative));
        out
    }
}

fn is_exact_pair(a: &ImageRecord, b: &ImageRecord) -> bool {
    a.content_digest == b.content_digest && a.label_digest == b.label_digest
}

/// Runs the three-stage protocol over `records`.
pub fn group_duplicates(records: &[ImageRecord], perceptual_threshold: u32) -> Result<DedupOutcome> {
    if perceptual_threshold > 64 {
        return Err(Error::InvalidParameter(format!(
            "perceptual threshold {perceptual_threshold} exceeds 64 bits"
        )));
    }
    let mut grouping = Grouping::default();
    let mut alive: Vec<bool> = vec![true; records.len()];
    let index: HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.image_id.as_str(), i))
        .collect();
    let mut apply = |clusters: Vec<Vec<usize>>, reason, alive: &mut Vec<bool>| {
        for cluster in clusters {
            let ids = cluster.iter().map(|&i| records[i].image_id.clone()).collect();
            for id in grouping.add_cluster(ids, reason) {
                alive[index[id.as_str()]] = false;
            }
        }
    };

    // Stage 1: the same file referenced more than once.
    let mut by_path: BTreeMap<PathBuf, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_path.entry(normalize_path(&r.path)).or_default().push(i);
    }
    let clusters = by_path.into_values().filter(|c| c.len() > 1).collect();
    apply(clusters, DuplicateReason::Path, &mut alive);

    // Stage 2: near-duplicate frames, single linkage.
    let live: Vec<usize> = (0..records.len()).filter(|&i| alive[i]).collect();
    let mut uf = UnionFind::new(live.len());
    for a in 0..live.len() {
        let ra = &records[live[a]];
        for b in a + 1..live.len() {
            let rb = &records[live[b]];
            if hamming(ra.perceptual_hash, rb.perceptual_hash) <= perceptual_threshold
                && !is_exact_pair(ra, rb)
            {
                uf.union(a, b);
            }
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &i) in live.iter().enumerate() {
        comps.entry(uf.find(k)).or_default().push(i);
    }
    let clusters = comps.into_values().filter(|c| c.len() > 1).collect();
    apply(clusters, DuplicateReason::Perceptual, &mut alive);

    // Stage 3: identical image bytes and identical label bytes.
    let mut by_digest: BTreeMap<(ContentDigest, Option<ContentDigest>), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate().filter(|(i, _)| alive[*i]) {
        by_digest.entry((r.content_digest, r.label_digest)).or_default().push(i);
    }
    let clusters = by_digest.into_values().filter(|c| c.len() > 1).collect();
    apply(clusters, DuplicateReason::Exact, &mut alive);

    let survivors: Vec<ImageRecord> = records
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(r, _)| r.clone())
        .collect();
    Ok(DedupOutcome {
        removed_count: records.len() - survivors.len(),
        groups: grouping.finish(),
        survivors,
    })
}

/// Writes the dedup report CSV: `group_id,reason,representative,member,removed`.
///
/// The representative row carries the group reason; removed rows carry the
/// stage that removed them.
pub fn write_dedup_report<W: std::io::Write>(
    out: W,
    groups: &[DuplicateGroup],
    perceptual_threshold: u32,
) -> Result<()> {
    let mut out = out;
    writeln!(
        out,
        "# ahash={HASH_SIDE}x{HASH_SIDE} rec601-gray box-average; perceptual_threshold={perceptual_threshold}; linkage=single; stages=path,perceptual,exact"
    )
    .map_err(|e| Error::io("dedup report", e))?;
    let mut w = csv::Writer::from_writer(out);
    let ctx = "dedup report";
    w.write_record(["group_id", "reason", "representative", "member", "removed"])
        .map_err(|e| Error::csv(ctx, e))?;
    for (gid, g) in groups.iter().enumerate() {
        for m in &g.members {
            let (reason, removed) = match g.removed.get(m) {
                Some(r) => (r.as_str(), "true"),
                None => (g.reason.as_str(), "false"),
            };
            w.write_record([gid.to_string().as_str(), reason, &g.representative, m, removed])
                .map_err(|e| Error::csv(ctx, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(ctx, e))?;
    Ok(())
}
