//! Shared domain types and the persistent JSON manifest.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dedup::{ContentDigest, PerceptualHash};
use crate::diagnostics::DiagnosticVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Newest manifest layout this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Corner excursions beyond `[0, 1]` up to this amount are clamped; larger
/// ones are violations.
pub const CLAMP_TOLERANCE: f64 = 1e-6;

/// Axis-aligned box in normalized image coordinates (center, size).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBox<T = f64> {
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> NormalizedBox<T> {
    pub fn new(cx: T, cy: T, w: T, h: T) -> Self {
        Self { cx, cy, w, h }
    }

    /// Builds a box from corner form `(x_min, y_min, x_max, y_max)`.
    pub fn from_corners(x_min: T, y_min: T, x_max: T, y_max: T) -> Self {
        let two = T::lit(2.0);
        Self {
            cx: (x_min + x_max) / two,
            cy: (y_min + y_max) / two,
            w: x_max - x_min,
            h: y_max - y_min,
        }
    }

    /// Corners `(x_min, y_min, x_max, y_max)` clipped to `[0, 1]`.
    pub fn corners(&self) -> [T; 4] {
        let half = T::lit(0.5);
        let clip = |v: T| v.max(T::zero()).min(T::one());
        [
            clip(self.cx - self.w * half),
            clip(self.cy - self.h * half),
            clip(self.cx + self.w * half),
            clip(self.cy + self.h * half),
        ]
    }

    pub fn area(&self) -> T {
        let [x0, y0, x1, y1] = self.corners();
        (x1 - x0).max(T::zero()) * (y1 - y0).max(T::zero())
    }

    /// Rule violations of this box, empty when every invariant holds.
    ///
    /// Corner excursions within [`CLAMP_TOLERANCE`] are accepted.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let unit = |v: T| v >= T::zero() && v <= T::one();
        let size = |v: T| v > T::zero() && v <= T::one();
        if !unit(self.cx) {
            out.push(Violation::new("cx", "cx out of [0,1]"));
        }
        if !unit(self.cy) {
            out.push(Violation::new("cy", "cy out of [0,1]"));
        }
        if !(self.w > T::zero()) {
            out.push(Violation::new("w", "w must be > 0"));
        } else if !size(self.w) {
            out.push(Violation::new("w", "w must be <= 1"));
        }
        if !(self.h > T::zero()) {
            out.push(Violation::new("h", "h must be > 0"));
        } else if !size(self.h) {
            out.push(Violation::new("h", "h must be <= 1"));
        }
        if out.is_empty() {
            let half = T::lit(0.5);
            let tol = T::lit(CLAMP_TOLERANCE);
            let lo = T::zero() - tol;
            let hi = T::one() + tol;
            if self.cx - self.w * half < lo || self.cx + self.w * half > hi {
                out.push(Violation::new("cx", "x extent out of [0,1]"));
            }
            if self.cy - self.h * half < lo || self.cy + self.h * half > hi {
                out.push(Violation::new("cy", "y extent out of [0,1]"));
            }
        }
        out
    }

    /// Clamps corners into `[0, 1]` and returns the re-centred box.
    ///
    /// Only meaningful for boxes without violations; the adjustment is then
    /// at most [`CLAMP_TOLERANCE`].
    pub fn clamped(&self) -> Self {
        let [x0, y0, x1, y1] = self.corners();
        let half = T::lit(0.5);
        let inside = self.cx - self.w * half >= T::zero()
            && self.cy - self.h * half >= T::zero()
            && self.cx + self.w * half <= T::one()
            && self.cy + self.h * half <= T::one();
        if inside {
            *self
        } else {
            Self::from_corners(x0, y0, x1, y1)
        }
    }

    pub fn cast<U: Scalar>(&self) -> NormalizedBox<U> {
        NormalizedBox {
            cx: U::lit(self.cx.to_f64_lossy()),
            cy: U::lit(self.cy.to_f64_lossy()),
            w: U::lit(self.w.to_f64_lossy()),
            h: U::lit(self.h.to_f64_lossy()),
        }
    }
}

/// One labelled object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation<T = f64> {
    pub class_id: u32,
    #[serde(rename = "box")]
    pub bbox: NormalizedBox<T>,
}

impl<T: Scalar> Annotation<T> {
    pub fn new(class_id: u32, bbox: NormalizedBox<T>) -> Self {
        Self { class_id, bbox }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::InvalidParameter(format!("unknown split `{other}`"))),
        }
    }
}

/// A single rule broken by a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Manifest row: one image with its labels, hashes, diagnostics and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub source: String,
    pub path: String,
    pub width_px: u32,
    pub height_px: u32,
    pub annotations: Vec<Annotation>,
    pub content_digest: ContentDigest,
    /// Digest of the label file; `None` when the image has no label file.
    pub label_digest: Option<ContentDigest>,
    pub perceptual_hash: PerceptualHash,
    pub split: Split,
    #[serde(default)]
    pub dropped_label_lines: u32,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticVector>,
}

impl ImageRecord {
    pub fn has_annotations(&self) -> bool {
        !self.annotations.is_empty()
    }
}

/// Checks every record invariant. An empty list means the record is valid.
pub fn validate_record(record: &ImageRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.image_id.is_empty() {
        out.push(Violation::new("image_id", "image_id must be non-empty"));
    }
    if record.source.is_empty() {
        out.push(Violation::new("source", "source must be non-empty"));
    }
    if record.width_px == 0 {
        out.push(Violation::new("width_px", "width_px must be > 0"));
    }
    if record.height_px == 0 {
        out.push(Violation::new("height_px", "height_px must be > 0"));
    }
    for (i, ann) in record.annotations.iter().enumerate() {
        for v in ann.bbox.violations() {
            out.push(Violation::new(
                format!("annotations[{i}].{}", v.field),
                v.rule,
            ));
        }
    }
    out
}

/// Descriptor of one source dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub name: String,
    pub root: String,
    pub adapter: String,
    /// Number of records from this source currently in the manifest.
    pub image_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub split_seed: u64,
    pub registry: Vec<SourceDescriptor>,
    pub records: Vec<ImageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            split_seed: 0,
            registry: Vec::new(),
            records: Vec::new(),
        }
    }
}

impl Manifest {
    /// Recomputes every registry `image_count` from the records.
    pub fn refresh_counts(&mut self) {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.source.as_str()).or_default() += 1;
        }
        for d in &mut self.registry {
            d.image_count = counts.get(d.name.as_str()).copied().unwrap_or(0);
        }
    }

    /// Manifest-level invariants plus every record's own violations, each
    /// prefixed by its image id.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut ids = HashSet::new();
        let known: HashSet<&str> = self.registry.iter().map(|d| d.name.as_str()).collect();
        for r in &self.records {
            if !ids.insert(r.image_id.as_str()) {
                out.push(Violation::new(
                    "image_id",
                    format!("duplicate image_id `{}`", r.image_id),
                ));
            }
            if !known.contains(r.source.as_str()) {
                out.push(Violation::new(
                    "source",
                    format!("`{}` not in registry", r.source),
                ));
            }
            for v in validate_record(r) {
                out.push(Violation::new(format!("{}:{}", r.image_id, v.field), v.rule));
            }
        }
        let total: usize = self.registry.iter().map(|d| d.image_count).sum();
        if total != self.records.len() {
            out.push(Violation::new(
                "registry",
                format!(
                    "registry counts sum to {total} but manifest holds {} records",
                    self.records.len()
                ),
            ));
        }
        out
    }
}

/// Serializes a manifest as pretty-printed UTF-8 JSON with a trailing newline.
pub fn save_manifest(manifest: &Manifest) -> Vec<u8> {
    let mut bytes =
        serde_json::to_vec_pretty(manifest).expect("manifest is always representable as JSON");
    bytes.push(b'\n');
    bytes
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema_version: u32,
}

/// Parses a manifest, rejecting newer schema versions.
pub fn load_manifest(bytes: &[u8]) -> Result<Manifest> {
    let probe: SchemaProbe = decode(bytes)?;
    if probe.schema_version > SCHEMA_VERSION {
        return Err(Error::UnsupportedSchema {
            found: probe.schema_version,
            supported: SCHEMA_VERSION,
        });
    }
    decode(bytes)
}

fn decode<'de, D: Deserialize<'de>>(bytes: &'de [u8]) -> Result<D> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value: D = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::ManifestParse {
            offset: byte_offset(bytes, inner.line(), inner.column()),
            field,
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| Error::ManifestParse {
        offset: byte_offset(bytes, e.line(), e.column()),
        field: ".".to_string(),
        message: e.to_string(),
    })?;
    Ok(value)
}

/// Converts serde_json's 1-based line / column into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, chunk) in bytes.split_inclusive(|b| *b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(bytes.len());
        }
        offset += chunk.len();
    }
    bytes.len()
}
