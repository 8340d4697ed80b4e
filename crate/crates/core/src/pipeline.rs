//! Command implementations shared by the CLI and the tests.
//!
//! Every command reads its inputs from disk, writes its outputs under the
//! configured output directory and returns an [`Outcome`] whose issue count
//! decides the process exit code.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{
    edge_report, min_max_normalize, read_latency_log, recall_correlations, source_means, stratified_recall,
    write_correlation_csv, write_edge_csv, write_feasibility_csv, write_normalized_csv, write_stratified_csv,
    CorrelationRow, EdgeReport, ImageObservation, NormalizedMetricTable, StratifiedRecallTable,
};
use crate::dedup::{average_hash, content_digest, group_duplicates, write_dedup_report, DEFAULT_PERCEPTUAL_THRESHOLD};
use crate::diagnostics::{compute_diagnostics, DiagnosticConfig, DiagnosticVector, DEFAULT_CONTRAST_BLOCK, DIAGNOSTIC_COLUMNS};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, Detection, EvalReport, EvalSettings, ImageEval, ImageRecall, PrPoint, DEFAULT_CONF_THRESHOLD,
    DEFAULT_IOU_THRESHOLD,
};
use crate::harmonize::{adapter_for, parse_prediction_file, remap_to_single_class, ADAPTER_NAMES};
use crate::image::RgbImage;
use crate::model::{load_manifest, save_manifest, ImageRecord, Manifest, SourceDescriptor, Split};
use crate::split::{two_step_split, write_split_summary, SplitPlan};

/// Image file extensions picked up by ingest.
pub const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INGEST_ISSUES_FILE: &str = "ingest_issues.csv";
pub const DEDUP_REPORT_FILE: &str = "dedup_report.csv";
pub const SPLIT_SUMMARY_FILE: &str = "split_summary.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const PR_CURVE_FILE: &str = "pr_curve.csv";
pub const PER_IMAGE_RECALL_FILE: &str = "per_image_recall.csv";
pub const STRATIFIED_FILE: &str = "stratified_recall.csv";
pub const NORMALIZED_FILE: &str = "normalized_metrics.csv";
pub const CORRELATIONS_FILE: &str = "correlations.csv";
pub const ATTRIBUTION_SUMMARY_FILE: &str = "attribution_summary.json";
pub const EDGE_REPORT_FILE: &str = "edge_report.csv";
pub const FEASIBILITY_FILE: &str = "feasibility.csv";
pub const EDGE_SUMMARY_FILE: &str = "edge_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub name: String,
    /// Relative roots resolve against the config file's directory.
    pub root: String,
    pub adapter: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let p = SplitPlan::default();
        Self {
            train: p.train,
            val: p.val,
            test: p.test,
            seed: p.seed,
        }
    }
}

impl SplitConfig {
    pub fn plan(&self) -> SplitPlan {
        SplitPlan {
            train: self.train,
            val: self.val,
            test: self.test,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sources: Vec<SourceConfig>,
    pub split: SplitConfig,
    pub phash_threshold: u32,
    pub iou_threshold: f64,
    pub conf_threshold: f64,
    pub out_dir: PathBuf,
    pub contrast_block: usize,
    /// Weights of the difficulty composite, one per normalized column.
    pub difficulty_weights: Option<Vec<f64>>,
    pub feasibility_frames: Vec<u64>,
    /// Worker threads for ingest and diagnose; `None` uses all cores.
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            split: SplitConfig::default(),
            phash_threshold: DEFAULT_PERCEPTUAL_THRESHOLD,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            out_dir: PathBuf::from("out"),
            contrast_block: DEFAULT_CONTRAST_BLOCK,
            difficulty_weights: None,
            feasibility_frames: vec![1000],
            jobs: None,
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config and resolves relative source roots against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(path.display().to_string(), e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for s in &mut cfg.sources {
            if Path::new(&s.root).is_relative() {
                s.root = base.join(&s.root).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.plan().validate()?;
        let mut seen = std::collections::HashSet::new();
        for s in &self.sources {
            if s.name.is_empty() || s.name.contains('/') {
                return Err(Error::InvalidParameter(format!("invalid source name {:?}", s.name)));
            }
            if !seen.insert(s.name.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate source name {}", s.name)));
            }
            if adapter_for(&s.adapter).is_none() {
                return Err(Error::InvalidParameter(format!(
                    "source {}: unknown adapter {:?} (known: {})",
                    s.name,
                    s.adapter,
                    ADAPTER_NAMES.join(", ")
                )));
            }
        }
        if self.phash_threshold > 64 {
            return Err(Error::InvalidParameter("phash_threshold exceeds 64".into()));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "iou_threshold {} not in (0,1)",
                self.iou_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(Error::InvalidParameter(format!(
                "conf_threshold {} not in [0,1]",
                self.conf_threshold
            )));
        }
        if self.contrast_block == 0 {
            return Err(Error::InvalidParameter("contrast_block must be > 0".into()));
        }
        Ok(())
    }

    /// One-line echo of the settings for report headers.
    pub fn header(&self) -> String {
        format!(
            "split={}/{}/{} seed={}; phash_threshold={}; iou_threshold={}; conf_threshold={}; contrast_block={}",
            self.split.train,
            self.split.val,
            self.split.test,
            self.split.seed,
            self.phash_threshold,
            self.iou_threshold,
            self.conf_threshold,
            self.contrast_block
        )
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join(MANIFEST_FILE)
    }

    pub fn eval_settings(&self) -> EvalSettings<f64> {
        EvalSettings {
            conf_threshold: self.conf_threshold,
            iou_threshold: self.iou_threshold,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    /// Validation problems found; reports were still written.
    pub issues: usize,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.issues > 0 {
            2
        } else {
            0
        }
    }
}

fn write_file(path: &Path, bytes: &[u8], outcome: &mut Outcome) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    outcome.written.push(path.to_path_buf());
    Ok(())
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_manifest(&bytes)
}

fn with_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Image files under `dir`, as paths relative to `dir`, sorted.
fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let abs = dir.join(&rel);
        let entries = fs::read_dir(&abs).map_err(|e| Error::io(&abs, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&abs, e))?;
            let ty = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
            let child = rel.join(entry.file_name());
            if ty.is_dir() {
                stack.push(child);
            } else if child
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            {
                out.push(child);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn slash_path(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestIssue {
    pub location: String,
    pub line: Option<usize>,
    pub message: String,
}

enum Scanned {
    Record(Box<ImageRecord>, Vec<IngestIssue>),
    Skipped(IngestIssue),
}

fn scan_image(source: &SourceConfig, rel: &Path) -> Result<Scanned> {
    let root = Path::new(&source.root);
    let path = root.join("images").join(rel);
    let image_id = format!("{}/{}", source.name, slash_path(rel));
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let image = match RgbImage::<f64>::decode(&bytes, &path.to_string_lossy()) {
        Ok(img) => img,
        Err(e) => {
            return Ok(Scanned::Skipped(IngestIssue {
                location: image_id,
                line: None,
                message: format!("skipped: {e}"),
            }));
        }
    };
    let adapter = adapter_for(&source.adapter).expect("adapter validated");
    let (width_px, height_px) = (image.width() as u32, image.height() as u32);
    let label_path = adapter.label_path(root, rel);
    let mut issues = Vec::new();
    let (annotations, label_digest, dropped) = match fs::read(&label_path) {
        Ok(label_bytes) => {
            let text = String::from_utf8_lossy(&label_bytes);
            let parsed = adapter.parse(&text, width_px, height_px);
            for i in &parsed.issues {
                issues.push(IngestIssue {
                    location: label_path.to_string_lossy().into_owned(),
                    line: Some(i.line),
                    message: i.message.clone(),
                });
            }
            (
                remap_to_single_class(parsed.items),
                Some(content_digest(&label_bytes)),
                parsed.issues.len() as u32,
            )
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => (Vec::new(), None, 0),
        Err(e) => return Err(Error::io(&label_path, e)),
    };
    Ok(Scanned::Record(
        Box::new(ImageRecord {
            image_id,
            source: source.name.clone(),
            path: path.to_string_lossy().into_owned(),
            width_px,
            height_px,
            annotations,
            content_digest: content_digest(&bytes),
            label_digest,
            perceptual_hash: average_hash(&image),
            split: Split::Unassigned,
            dropped_label_lines: dropped,
            diagnostics: None,
        }),
        issues,
    ))
}

fn write_ingest_issues(issues: &[IngestIssue], header: &str) -> Result<Vec<u8>> {
    let ctx = "ingest issues";
    let mut buf = Vec::new();
    writeln!(buf, "# {header}").map_err(|e| Error::io(ctx, e))?;
    let mut w = csv::Writer::from_writer(&mut buf);
    w.write_record(["location", "line", "message"]).map_err(|e| Error::csv(ctx, e))?;
    for i in issues {
        w.write_record([
            i.location.clone(),
            i.line.map(|l| l.to_string()).unwrap_or_default(),
            i.message.clone(),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))?;
    drop(w);
    Ok(buf)
}

/// Scans every source, parses labels, hashes content and writes the
/// manifest plus an issue list. Corrupt images are skipped; malformed label
/// lines are dropped. Both count as validation issues.
pub fn cmd_ingest(config: &PipelineConfig, manifest_path: &Path) -> Result<Outcome> {
    config.validate()?;
    if config.sources.is_empty() {
        return Err(Error::InvalidParameter("config lists no sources".into()));
    }
    let mut work = Vec::new();
    for s in &config.sources {
        let images = Path::new(&s.root).join("images");
        for rel in list_images(&images)? {
            work.push((s, rel));
        }
    }
    let scanned: Vec<Result<Scanned>> =
        with_pool(config.jobs, || work.par_iter().map(|(s, rel)| scan_image(s, rel)).collect())?;
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for s in scanned {
        match s? {
            Scanned::Record(r, mut i) => {
                records.push(*r);
                issues.append(&mut i);
            }
            Scanned::Skipped(i) => {
                warn!("{}: {}", i.location, i.message);
                issues.push(i);
            }
        }
    }
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut manifest = Manifest {
        split_seed: config.split.seed,
        registry: config
            .sources
            .iter()
            .map(|s| SourceDescriptor {
                name: s.name.clone(),
                root: s.root.clone(),
                adapter: s.adapter.clone(),
                image_count: 0,
            })
            .collect(),
        records,
        ..Manifest::default()
    };
    manifest.refresh_counts();
    for v in manifest.validate() {
        issues.push(IngestIssue {
            location: v.field.clone(),
            line: None,
            message: v.rule.clone(),
        });
    }
    for i in &issues {
        if i.line.is_some() {
            warn!("{}:{}: {}", i.location, i.line.unwrap_or(0), i.message);
        }
    }
    info!("ingested {} records, {} issues", manifest.records.len(), issues.len());
    let mut outcome = Outcome {
        issues: issues.len(),
        ..Outcome::default()
    };
    write_file(manifest_path, &save_manifest(&manifest), &mut outcome)?;
    let report = write_ingest_issues(&issues, &config.header())?;
    write_file(&config.out_dir.join(INGEST_ISSUES_FILE), &report, &mut outcome)?;
    Ok(outcome)
}

/// Removes duplicates from the manifest and writes the group report.
pub fn cmd_dedup(config: &PipelineConfig, manifest_path: &Path) -> Result<Outcome> {
    let mut manifest = read_manifest(manifest_path)?;
    let out = group_duplicates(&manifest.records, config.phash_threshold)?;
    info!(
        "{} duplicate groups, {} records removed",
        out.groups.len(),
        out.removed_count
    );
    manifest.records = out.survivors;
    manifest.refresh_counts();
    let mut outcome = Outcome {
        issues: manifest.validate().len(),
        ..Outcome::default()
    };
    let mut report = Vec::new();
    write_dedup_report(&mut report, &out.groups, config.phash_threshold)?;
    write_file(manifest_path, &save_manifest(&manifest), &mut outcome)?;
    write_file(&config.out_dir.join(DEDUP_REPORT_FILE), &report, &mut outcome)?;
    Ok(outcome)
}

/// Assigns splits and writes the stratum summary.
pub fn cmd_split(config: &PipelineConfig, manifest_path: &Path) -> Result<Outcome> {
    let mut manifest = read_manifest(manifest_path)?;
    let plan = config.split.plan();
    let out = two_step_split(&manifest.records, &plan)?;
    for w in &out.warnings {
        warn!("{w}");
    }
    for (r, s) in manifest.records.iter_mut().zip(&out.assignments) {
        r.split = *s;
    }
    manifest.split_seed = plan.seed;
    let mut outcome = Outcome {
        issues: manifest.validate().len(),
        ..Outcome::default()
    };
    let mut summary = Vec::new();
    write_split_summary(&mut summary, &plan, &out.strata)?;
    write_file(manifest_path, &save_manifest(&manifest), &mut outcome)?;
    write_file(&config.out_dir.join(SPLIT_SUMMARY_FILE), &summary, &mut outcome)?;
    Ok(outcome)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Diagnostics CSV: `image_id,source,split` followed by the covariates.
pub fn write_diagnostics_csv<W: Write>(mut out: W, records: &[ImageRecord], header: &str) -> Result<()> {
    let ctx = "diagnostics";
    writeln!(out, "# {header}; empty cell = undefined").map_err(|e| Error::io(ctx, e))?;
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["image_id", "source", "split"];
    head.extend(DIAGNOSTIC_COLUMNS);
    w.write_record(&head).map_err(|e| Error::csv(ctx, e))?;
    for r in records {
        let Some(d) = &r.diagnostics else { continue };
        let mut row = vec![r.image_id.clone(), r.source.clone(), r.split.to_string()];
        row.extend(d.values().iter().map(|v| opt_cell(*v)));
        w.write_record(&row).map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

/// A parsed diagnostics CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub image_id: String,
    pub source: String,
    pub diagnostics: DiagnosticVector<f64>,
}

fn parse_opt(raw: &str, what: &str) -> Result<Option<f64>> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse()
        .map(Some)
        .map_err(|_| Error::InvalidParameter(format!("{what}: not a number: {raw:?}")))
}

fn csv_reader<R: std::io::Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input)
}

fn column_index(headers: &csv::StringRecord, name: &str, ctx: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::InvalidParameter(format!("{ctx}: missing column {name}")))
}

pub fn read_diagnostics_csv<R: std::io::Read>(input: R) -> Result<Vec<DiagnosticsRow>> {
    let ctx = "diagnostics csv";
    let mut reader = csv_reader(input);
    let headers = reader.headers().map_err(|e| Error::csv(ctx, e))?.clone();
    let id = column_index(&headers, "image_id", ctx)?;
    let src = column_index(&headers, "source", ctx)?;
    let cols: Vec<usize> = DIAGNOSTIC_COLUMNS
        .iter()
        .map(|c| column_index(&headers, c, ctx))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(ctx, e))?;
        let get = |i: usize| rec.get(i).unwrap_or("");
        let v: Vec<Option<f64>> = cols
            .iter()
            .zip(DIAGNOSTIC_COLUMNS)
            .map(|(&i, name)| parse_opt(get(i), name))
            .collect::<Result<_>>()?;
        let req = |k: usize| {
            v[k].ok_or_else(|| Error::InvalidParameter(format!("{ctx}: {} is required", DIAGNOSTIC_COLUMNS[k])))
        };
        rows.push(DiagnosticsRow {
            image_id: get(id).to_string(),
            source: get(src).to_string(),
            diagnostics: DiagnosticVector {
                turbidity: req(0)?,
                rms_contrast: req(1)?,
                blur_var: v[2],
                ratio_r: v[3],
                ratio_g: v[4],
                ratio_b: v[5],
                uicm: req(6)?,
                uism: req(7)?,
                uiconm: v[8],
                uiqm: v[9],
                uciqe: req(10)?,
                fish_count: req(11)? as u32,
                overlap_pairwise: req(12)?,
                overlap_maxmean: req(13)?,
            },
        });
    }
    Ok(rows)
}

/// Computes the diagnostic vector of every record on a bounded pool,
/// stores it in the manifest and writes the diagnostics CSV.
pub fn cmd_diagnose(config: &PipelineConfig, manifest_path: &Path) -> Result<Outcome> {
    let mut manifest = read_manifest(manifest_path)?;
    let dcfg = DiagnosticConfig {
        contrast_block: config.contrast_block,
    };
    let computed: Vec<Result<DiagnosticVector>> = with_pool(config.jobs, || {
        manifest
            .records
            .par_iter()
            .map(|r| {
                let img = RgbImage::<f64>::open(Path::new(&r.path))?;
                Ok(compute_diagnostics(&img, &r.annotations, &dcfg))
            })
            .collect()
    })?;
    let mut issues = 0;
    for (r, d) in manifest.records.iter_mut().zip(computed) {
        match d {
            Ok(d) => r.diagnostics = Some(d),
            Err(e) => {
                warn!("{}: {e}", r.image_id);
                r.diagnostics = None;
                issues += 1;
            }
        }
    }
    let mut outcome = Outcome {
        issues,
        ..Outcome::default()
    };
    let mut csv = Vec::new();
    write_diagnostics_csv(&mut csv, &manifest.records, &config.header())?;
    write_file(manifest_path, &save_manifest(&manifest), &mut outcome)?;
    write_file(&config.out_dir.join(DIAGNOSTICS_FILE), &csv, &mut outcome)?;
    Ok(outcome)
}

/// Prediction file of an image: the image id with a `.txt` extension.
pub fn prediction_path(pred_dir: &Path, image_id: &str) -> PathBuf {
    pred_dir.join(image_id).with_extension("txt")
}

pub fn write_pr_curve_csv<W: Write>(mut out: W, curve: &[PrPoint<f64>], header: &str) -> Result<()> {
    let ctx = "pr curve";
    writeln!(out, "# {header}; iou=0.5; cumulative over detections ranked by confidence")
        .map_err(|e| Error::io(ctx, e))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "confidence", "precision", "recall"])
        .map_err(|e| Error::csv(ctx, e))?;
    for (i, p) in curve.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            p.confidence.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

/// A per-image recall row joined with its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub image_id: String,
    pub source: String,
    pub n_gt: usize,
    pub tp: usize,
    pub recall: f64,
}

pub fn write_recall_csv<W: Write>(mut out: W, rows: &[RecallRow], header: &str) -> Result<()> {
    let ctx = "per-image recall";
    writeln!(out, "# {header}; images without ground truth omitted").map_err(|e| Error::io(ctx, e))?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(ctx, e))?;
    }
    if rows.is_empty() {
        w.write_record(["image_id", "source", "n_gt", "tp", "recall"])
            .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

pub fn read_recall_csv<R: std::io::Read>(input: R) -> Result<Vec<RecallRow>> {
    let ctx = "per-image recall csv";
    let mut reader = csv_reader(input);
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::csv(ctx, e)))
        .collect()
}

/// Scores predictions against the manifest's ground truth. `split`
/// restricts evaluation to one partition.
pub fn cmd_eval(
    config: &PipelineConfig,
    manifest_path: &Path,
    pred_dir: &Path,
    split: Option<Split>,
) -> Result<Outcome> {
    config.validate()?;
    let manifest = read_manifest(manifest_path)?;
    let mut issues = 0;
    let mut images = Vec::new();
    let mut sources = HashMap::new();
    for r in manifest.records.iter().filter(|r| split.is_none_or(|s| r.split == s)) {
        let p = prediction_path(pred_dir, &r.image_id);
        let detections = match fs::read_to_string(&p) {
            Ok(text) => {
                let parsed = parse_prediction_file::<f64>(&text);
                for i in &parsed.issues {
                    warn!("{}:{}: {}", p.display(), i.line, i.message);
                }
                issues += parsed.issues.len();
                parsed
                    .items
                    .into_iter()
                    .map(|l| Detection::new(l.bbox.clamped(), l.confidence))
                    .collect()
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(&p, e)),
        };
        sources.insert(r.image_id.clone(), r.source.clone());
        images.push(ImageEval {
            image_id: r.image_id.clone(),
            detections,
            ground_truths: r.annotations.iter().map(|a| a.bbox.clamped()).collect(),
        });
    }
    let out = evaluate(&images, &config.eval_settings())?;
    let header = config.header();
    let recall_rows: Vec<RecallRow> = out
        .per_image
        .iter()
        .map(|r: &ImageRecall<f64>| RecallRow {
            image_id: r.image_id.clone(),
            source: sources[&r.image_id].clone(),
            n_gt: r.n_gt,
            tp: r.tp,
            recall: r.recall,
        })
        .collect();
    let mut outcome = Outcome {
        issues,
        ..Outcome::default()
    };
    let report: &EvalReport<f64> = &out.report;
    let mut json = serde_json::to_vec_pretty(report).map_err(|e| Error::json("eval report", e))?;
    json.push(b'\n');
    let mut curve = Vec::new();
    write_pr_curve_csv(&mut curve, &out.curve, &header)?;
    let mut recall = Vec::new();
    write_recall_csv(&mut recall, &recall_rows, &header)?;
    write_file(&config.out_dir.join(EVAL_REPORT_FILE), &json, &mut outcome)?;
    write_file(&config.out_dir.join(PR_CURVE_FILE), &curve, &mut outcome)?;
    write_file(&config.out_dir.join(PER_IMAGE_RECALL_FILE), &recall, &mut outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionSummary {
    pub settings: String,
    pub n_images: usize,
    pub n_evaluated: usize,
    pub stratified: StratifiedRecallTable<f64>,
    pub normalized: NormalizedMetricTable<f64>,
    pub correlations: Vec<CorrelationRow<f64>>,
}

/// Joins diagnostics with per-image recall; images absent from the recall
/// table have no ground truth or were not evaluated.
pub fn join_observations(diagnostics: Vec<DiagnosticsRow>, recalls: &[RecallRow]) -> Vec<ImageObservation<f64>> {
    let by_id: BTreeMap<&str, f64> = recalls.iter().map(|r| (r.image_id.as_str(), r.recall)).collect();
    diagnostics
        .into_iter()
        .map(|d| ImageObservation {
            recall: by_id.get(d.image_id.as_str()).copied(),
            image_id: d.image_id,
            source: d.source,
            diagnostics: d.diagnostics,
        })
        .collect()
}

pub fn cmd_attribute(config: &PipelineConfig, diagnostics_csv: &Path, recall_csv: &Path) -> Result<Outcome> {
    let diag = read_diagnostics_csv(fs::File::open(diagnostics_csv).map_err(|e| Error::io(diagnostics_csv, e))?)?;
    let recalls = read_recall_csv(fs::File::open(recall_csv).map_err(|e| Error::io(recall_csv, e))?)?;
    let observations = join_observations(diag, &recalls);
    let stratified = stratified_recall(&observations);
    let normalized = min_max_normalize(&source_means(&observations), config.difficulty_weights.as_deref())?;
    let correlations = recall_correlations(&observations);
    let mut outcome = Outcome::default();
    let mut s = Vec::new();
    write_stratified_csv(&mut s, &stratified)?;
    let mut n = Vec::new();
    write_normalized_csv(&mut n, &normalized)?;
    let mut c = Vec::new();
    write_correlation_csv(&mut c, &correlations)?;
    let summary = AttributionSummary {
        settings: config.header(),
        n_images: observations.len(),
        n_evaluated: observations.iter().filter(|o| o.recall.is_some()).count(),
        stratified,
        normalized,
        correlations,
    };
    let mut json = serde_json::to_vec_pretty(&summary).map_err(|e| Error::json("attribution summary", e))?;
    json.push(b'\n');
    write_file(&config.out_dir.join(STRATIFIED_FILE), &s, &mut outcome)?;
    write_file(&config.out_dir.join(NORMALIZED_FILE), &n, &mut outcome)?;
    write_file(&config.out_dir.join(CORRELATIONS_FILE), &c, &mut outcome)?;
    write_file(&config.out_dir.join(ATTRIBUTION_SUMMARY_FILE), &json, &mut outcome)?;
    Ok(outcome)
}

pub fn cmd_edge_report(config: &PipelineConfig, latency_log: &Path) -> Result<Outcome> {
    let entries = read_latency_log::<f64, _>(fs::File::open(latency_log).map_err(|e| Error::io(latency_log, e))?)?;
    let report: EdgeReport<f64> = edge_report(&entries, &config.feasibility_frames)?;
    let mut outcome = Outcome::default();
    let mut rows = Vec::new();
    write_edge_csv(&mut rows, &report)?;
    let mut feas = Vec::new();
    write_feasibility_csv(&mut feas, &report.feasibility)?;
    let mut json = serde_json::to_vec_pretty(&report).map_err(|e| Error::json("edge report", e))?;
    json.push(b'\n');
    write_file(&config.out_dir.join(EDGE_REPORT_FILE), &rows, &mut outcome)?;
    write_file(&config.out_dir.join(FEASIBILITY_FILE), &feas, &mut outcome)?;
    write_file(&config.out_dir.join(EDGE_SUMMARY_FILE), &json, &mut outcome)?;
    Ok(outcome)
}
