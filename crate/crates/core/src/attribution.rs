//! Analysis layer: recall by scene stratum, per-source normalized metric
//! tables, covariate correlations and edge-inference throughput.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::diagnostics::{DiagnosticVector, DIAGNOSTIC_COLUMNS};
use crate::error::{Error, Result};
use crate::scalar::{mean_and_variance, percentile_sorted, Scalar};
use crate::structure::{density_bin, DensityBin};

/// Covariates stratified as structural overlap.
pub const OVERLAP_COVARIATES: [&str; 2] = ["overlap_maxmean", "overlap_pairwise"];

/// Covariates stratified as visual conditions.
pub const VISUAL_COVARIATES: [&str; 8] = [
    "turbidity",
    "rms_contrast",
    "blur_var",
    "ratio_r",
    "ratio_g",
    "ratio_b",
    "uiqm",
    "uciqe",
];

/// `(label, diagnostic column)` pairs of the normalized metric table.
pub const NORMALIZED_COLUMNS: [(&str, &str); 10] = [
    ("Turbidity", "turbidity"),
    ("Contrast", "rms_contrast"),
    ("BlurVar", "blur_var"),
    ("Blue", "ratio_b"),
    ("Green", "ratio_g"),
    ("Red", "ratio_r"),
    ("UIQM", "uiqm"),
    ("UCIQE", "uciqe"),
    ("FishCount", "fish_count"),
    ("Overlap", "overlap_maxmean"),
];

/// One evaluated (or label-free) image joined with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageObservation<T = f64> {
    pub image_id: String,
    pub source: String,
    pub diagnostics: DiagnosticVector<T>,
    /// `None` for images without ground truth.
    pub recall: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StratumKind {
    Density,
    Overlap,
    Visual,
}

impl StratumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StratumKind::Density => "density",
            StratumKind::Overlap => "overlap",
            StratumKind::Visual => "visual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedRow<T = f64> {
    pub kind: StratumKind,
    pub covariate: String,
    pub stratum: String,
    pub lower: Option<T>,
    pub upper: Option<T>,
    pub n_images: usize,
    pub mean_recall: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedRecallTable<T = f64> {
    pub rows: Vec<StratifiedRow<T>>,
}

impl<T: Scalar> StratifiedRecallTable<T> {
    pub fn rows_for<'a>(&'a self, covariate: &'a str) -> impl Iterator<Item = &'a StratifiedRow<T>> + 'a {
        self.rows.iter().filter(move |r| r.covariate == covariate)
    }
}

fn mean_of<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<T> {
    mean_and_variance(values).map(|(m, _)| m)
}

fn quartile_rows<T: Scalar>(
    kind: StratumKind,
    covariate: &str,
    evaluated: &[&ImageObservation<T>],
) -> Vec<StratifiedRow<T>> {
    let mut defined: Vec<(T, T)> = Vec::new();
    let mut undefined: Vec<T> = Vec::new();
    for o in evaluated {
        let recall = o.recall.expect("evaluated image");
        match o.diagnostics.get(covariate) {
            Some(v) => defined.push((v, recall)),
            None => undefined.push(recall),
        }
    }
    let mut sorted: Vec<T> = defined.iter().map(|(v, _)| *v).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite covariate"));
    let cuts: Option<[T; 5]> = (!sorted.is_empty()).then(|| {
        [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| percentile_sorted(&sorted, T::lit(p)).expect("nonempty"))
    });
    let mut rows = Vec::with_capacity(5);
    for q in 0..4 {
        let members: Vec<T> = match cuts {
            Some(c) => defined
                .iter()
                .filter(|(v, _)| {
                    let above = q == 0 || *v > c[q];
                    let below = q == 3 || *v <= c[q + 1];
                    above && below
                })
                .map(|(_, r)| *r)
                .collect(),
            None => Vec::new(),
        };
        rows.push(StratifiedRow {
            kind,
            covariate: covariate.to_string(),
            stratum: format!("Q{}", q + 1),
            lower: cuts.map(|c| c[q]),
            upper: cuts.map(|c| c[q + 1]),
            n_images: members.len(),
            mean_recall: mean_of(members),
        });
    }
    if !undefined.is_empty() {
        rows.push(StratifiedRow {
            kind,
            covariate: covariate.to_string(),
            stratum: "undefined".to_string(),
            lower: None,
            upper: None,
            n_images: undefined.len(),
            mean_recall: mean_of(undefined),
        });
    }
    rows
}

/// Mean per-image recall by density bin and by covariate quartile.
///
/// Density rows cover evaluated images plus images without ground truth
/// (the "0" bin, whose recall is undefined). Quartile rows cover evaluated
/// images only: Q1 is `[min, q25]`, later quartiles are half-open on the
/// left. Images lacking a covariate value form an extra "undefined" row.
pub fn stratified_recall<T: Scalar>(observations: &[ImageObservation<T>]) -> StratifiedRecallTable<T> {
    let mut rows = Vec::new();
    let mut by_bin: BTreeMap<DensityBin, (usize, Vec<T>)> = BTreeMap::new();
    for o in observations {
        let count = o.diagnostics.fish_count as usize;
        if o.recall.is_none() && count > 0 {
            continue;
        }
        let entry = by_bin.entry(density_bin(count)).or_default();
        entry.0 += 1;
        entry.1.extend(o.recall);
    }
    for bin in DensityBin::ALL {
        let (n, recalls) = by_bin.remove(&bin).unwrap_or_default();
        rows.push(StratifiedRow {
            kind: StratumKind::Density,
            covariate: "fish_count".to_string(),
            stratum: bin.label().to_string(),
            lower: None,
            upper: None,
            n_images: n,
            mean_recall: mean_of(recalls),
        });
    }
    let evaluated: Vec<&ImageObservation<T>> = observations.iter().filter(|o| o.recall.is_some()).collect();
    for c in OVERLAP_COVARIATES {
        rows.extend(quartile_rows(StratumKind::Overlap, c, &evaluated));
    }
    for c in VISUAL_COVARIATES {
        rows.extend(quartile_rows(StratumKind::Visual, c, &evaluated));
    }
    StratifiedRecallTable { rows }
}

/// Per-source means of the normalized-table covariates, sources sorted by name.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceMeans<T = f64> {
    pub source: String,
    pub n_images: usize,
    /// In [`NORMALIZED_COLUMNS`] order; `None` when no image defines it.
    pub values: Vec<Option<T>>,
}

pub fn source_means<T: Scalar>(observations: &[ImageObservation<T>]) -> Vec<SourceMeans<T>> {
    let mut groups: BTreeMap<&str, Vec<&DiagnosticVector<T>>> = BTreeMap::new();
    for o in observations {
        groups.entry(o.source.as_str()).or_default().push(&o.diagnostics);
    }
    groups
        .into_iter()
        .map(|(source, ds)| SourceMeans {
            source: source.to_string(),
            n_images: ds.len(),
            values: NORMALIZED_COLUMNS
                .iter()
                .map(|(_, col)| mean_of(ds.iter().filter_map(|d| d.get(col))))
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedRow<T = f64> {
    pub source: String,
    pub cells: Vec<Option<T>>,
    pub difficulty: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedMetricTable<T = f64> {
    pub columns: Vec<String>,
    pub rows: Vec<NormalizedRow<T>>,
    /// Columns with fewer than two distinct defined values (normalized to 0).
    pub degenerate: Vec<String>,
    pub weights: Vec<T>,
    pub difficulty_formula: String,
}

/// Min-max scaling of one column; undefined cells stay undefined. Returns
/// the scaled column and whether it was degenerate.
pub fn min_max_column<T: Scalar>(values: &[Option<T>]) -> (Vec<Option<T>>, bool) {
    let defined = values.iter().flatten();
    let lo = defined.clone().copied().fold(T::infinity(), T::min);
    let hi = defined.copied().fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    let degenerate = !(span > T::zero());
    let scaled = values
        .iter()
        .map(|v| {
            v.map(|x| {
                if degenerate {
                    T::zero()
                } else {
                    ((x - lo) / span).max(T::zero()).min(T::one())
                }
            })
        })
        .collect();
    (scaled, degenerate)
}

/// Weighted mean of a normalized row; weights must be non-negative with a
/// positive sum and match the row length.
pub fn difficulty_index<T: Scalar>(row: &[T], weights: &[T]) -> Result<T> {
    if row.len() != weights.len() || row.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "difficulty weights: expected {} weights, got {}",
            row.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= T::zero())) {
        return Err(Error::InvalidParameter("difficulty weights must be non-negative".into()));
    }
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::InvalidParameter("difficulty weights sum to zero".into()));
    }
    let acc: T = row.iter().zip(weights).map(|(x, w)| *x * *w).sum();
    Ok(acc / total)
}

fn difficulty_formula<T: Scalar>(columns: &[String], weights: &[T]) -> String {
    let terms: Vec<String> = columns.iter().zip(weights).map(|(c, w)| format!("{w}*{c}")).collect();
    let total: T = weights.iter().copied().sum();
    format!(
        "Difficulty = ({}) / {total}  [heuristic composite of the normalized columns, not a calibrated score]",
        terms.join(" + ")
    )
}

/// Normalizes per-source means column by column and appends the difficulty
/// index. `weights` defaults to equal weights on all columns.
pub fn min_max_normalize<T: Scalar>(
    means: &[SourceMeans<T>],
    weights: Option<&[T]>,
) -> Result<NormalizedMetricTable<T>> {
    if means.is_empty() {
        return Err(Error::InvalidParameter("no sources to normalize".into()));
    }
    let columns: Vec<String> = NORMALIZED_COLUMNS.iter().map(|(l, _)| l.to_string()).collect();
    let weights: Vec<T> = match weights {
        Some(w) => w.to_vec(),
        None => vec![T::one(); columns.len()],
    };
    difficulty_index(&vec![T::zero(); columns.len()], &weights)?;
    let mut cells: Vec<Vec<Option<T>>> = vec![Vec::with_capacity(columns.len()); means.len()];
    let mut degenerate = Vec::new();
    for (j, label) in columns.iter().enumerate() {
        let column: Vec<Option<T>> = means.iter().map(|m| m.values[j]).collect();
        let (scaled, flat) = min_max_column(&column);
        if flat {
            degenerate.push(label.clone());
        }
        for (row, v) in cells.iter_mut().zip(scaled) {
            row.push(v);
        }
    }
    let rows = means
        .iter()
        .zip(cells)
        .map(|(m, cells)| {
            let complete: Option<Vec<T>> = cells.iter().copied().collect();
            let difficulty = complete.map(|row| difficulty_index(&row, &weights).expect("weights checked"));
            NormalizedRow {
                source: m.source.clone(),
                cells,
                difficulty,
            }
        })
        .collect();
    Ok(NormalizedMetricTable {
        difficulty_formula: difficulty_formula(&columns, &weights),
        columns,
        rows,
        degenerate,
        weights,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation<T = f64> {
    pub n: usize,
    pub pearson: Option<T>,
    pub spearman: Option<T>,
    pub flags: Vec<String>,
}

fn pearson_raw<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    let (mx, _) = mean_and_variance(x.iter().copied())?;
    let (my, _) = mean_and_variance(y.iter().copied())?;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (*a - mx, *b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if !(sxx > T::zero() && syy > T::zero()) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one()))
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite value"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = T::from_count(i + j + 2) / T::lit(2.0);
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson product-moment and Spearman rank correlation.
pub fn correlate<T: Scalar>(x: &[T], y: &[T]) -> Result<Correlation<T>> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "correlation needs at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value in series".into()));
    }
    let pearson = pearson_raw(x, y);
    let spearman = pearson_raw(&average_ranks(x), &average_ranks(y));
    let mut flags = Vec::new();
    if pearson.is_none() {
        flags.push("zero variance".to_string());
    }
    Ok(Correlation {
        n: x.len(),
        pearson,
        spearman,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow<T = f64> {
    pub covariate: String,
    pub granularity: String,
    pub correlation: Correlation<T>,
}

/// Correlation of every diagnostic column with recall, per image and per
/// source mean. Series too short or degenerate yield undefined flagged rows.
pub fn recall_correlations<T: Scalar>(observations: &[ImageObservation<T>]) -> Vec<CorrelationRow<T>> {
    let evaluated: Vec<&ImageObservation<T>> = observations.iter().filter(|o| o.recall.is_some()).collect();
    let mut rows = Vec::new();
    for col in DIAGNOSTIC_COLUMNS {
        let (x, y): (Vec<T>, Vec<T>) = evaluated
            .iter()
            .filter_map(|o| Some((o.diagnostics.get(col)?, o.recall?)))
            .unzip();
        rows.push(CorrelationRow {
            covariate: col.to_string(),
            granularity: "image".to_string(),
            correlation: correlate_or_flag(&x, &y),
        });
        let mut per_source: BTreeMap<&str, (Vec<T>, Vec<T>)> = BTreeMap::new();
        for o in &evaluated {
            if let (Some(v), Some(r)) = (o.diagnostics.get(col), o.recall) {
                let e = per_source.entry(o.source.as_str()).or_default();
                e.0.push(v);
                e.1.push(r);
            }
        }
        let (sx, sy): (Vec<T>, Vec<T>) = per_source
            .values()
            .map(|(v, r)| {
                (
                    mean_of(v.iter().copied()).expect("nonempty"),
                    mean_of(r.iter().copied()).expect("nonempty"),
                )
            })
            .unzip();
        rows.push(CorrelationRow {
            covariate: col.to_string(),
            granularity: "source".to_string(),
            correlation: correlate_or_flag(&sx, &sy),
        });
    }
    rows
}

fn correlate_or_flag<T: Scalar>(x: &[T], y: &[T]) -> Correlation<T> {
    correlate(x, y).unwrap_or_else(|e| Correlation {
        n: x.len(),
        pearson: None,
        spearman: None,
        flags: vec![e.to_string()],
    })
}

/// One `(model, format)` entry of a latency log; `None` samples mark failure.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyEntry<T = f64> {
    pub model: String,
    pub format: String,
    pub samples: Option<Vec<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeBenchRow<T = f64> {
    pub model: String,
    pub format: String,
    pub status: BenchStatus,
    pub n_samples: usize,
    pub mean_latency_ms: Option<T>,
    pub median_latency_ms: Option<T>,
    pub fps: Option<T>,
    /// Fractional throughput gain over the model's first listed format.
    pub gain: Option<T>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityLine<T = f64> {
    pub model: String,
    pub format: String,
    pub frames: u64,
    pub seconds: T,
    pub minutes: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeReport<T = f64> {
    pub rows: Vec<EdgeBenchRow<T>>,
    pub feasibility: Vec<FeasibilityLine<T>>,
}

/// Seconds and minutes needed to process `frames` at `fps`.
pub fn time_to_process<T: Scalar>(frames: u64, fps: T) -> (T, T) {
    let seconds = T::lit(frames as f64) / fps;
    (seconds, seconds / T::lit(60.0))
}

/// Aggregates latency samples into throughput rows and feasibility lines
/// for each requested frame count.
pub fn edge_report<T: Scalar>(entries: &[LatencyEntry<T>], frame_counts: &[u64]) -> Result<EdgeReport<T>> {
    let mut baselines: BTreeMap<&str, Option<T>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let (status, n, mean, median, fps) = match &e.samples {
            Some(s) if s.is_empty() => {
                return Err(Error::InvalidParameter(format!(
                    "{} {}: no latency samples",
                    e.model, e.format
                )));
            }
            Some(s) => {
                if s.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "{} {}: latencies must be positive and finite",
                        e.model, e.format
                    )));
                }
                let mut sorted = s.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite latency"));
                let mean = mean_of(s.iter().copied()).expect("nonempty");
                let median = percentile_sorted(&sorted, T::lit(0.5)).expect("nonempty");
                (BenchStatus::Ok, s.len(), Some(mean), Some(median), Some(T::lit(1000.0) / mean))
            }
            None => (BenchStatus::Failed, 0, None, None, None),
        };
        let mut flags = Vec::new();
        let gain = match baselines.get(e.model.as_str()) {
            None => {
                baselines.insert(e.model.as_str(), fps);
                None
            }
            Some(None) => {
                if fps.is_some() {
                    flags.push("baseline format failed; gain omitted".to_string());
                }
                None
            }
            Some(Some(base)) => fps.map(|f| (f - *base) / *base),
        };
        if status == BenchStatus::Failed {
            flags.push("failed".to_string());
        }
        rows.push(EdgeBenchRow {
            model: e.model.clone(),
            format: e.format.clone(),
            status,
            n_samples: n,
            mean_latency_ms: mean,
            median_latency_ms: median,
            fps,
            gain,
            flags,
        });
    }
    let mut feasibility = Vec::new();
    for r in &rows {
        if let Some(fps) = r.fps {
            for &frames in frame_counts {
                let (seconds, minutes) = time_to_process(frames, fps);
                feasibility.push(FeasibilityLine {
                    model: r.model.clone(),
                    format: r.format.clone(),
                    frames,
                    seconds,
                    minutes,
                });
            }
        }
    }
    Ok(EdgeReport { rows, feasibility })
}

/// Marker for a failed run in the latency log.
pub const FAILURE_MARKER: &str = "OOM";

/// Reads a `model,format,latency_ms` CSV (comment lines start with `#`).
/// Repeated `(model, format)` rows accumulate samples; a failure marker
/// marks the pair failed. Entries keep first-appearance order.
pub fn read_latency_log<T: Scalar, R: std::io::Read>(input: R) -> Result<Vec<LatencyEntry<T>>> {
    let ctx = "latency log";
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| Error::csv(ctx, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidParameter(format!("latency log missing column {name}")))
    };
    let (im, iff, il) = (col("model")?, col("format")?, col("latency_ms")?);
    let mut entries: Vec<LatencyEntry<T>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(ctx, e))?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let (model, format, raw) = (field(im), field(iff), field(il));
        let sample = if raw.eq_ignore_ascii_case(FAILURE_MARKER) {
            None
        } else {
            let v: f64 = raw.trim_end_matches("ms").parse().map_err(|_| {
                Error::InvalidParameter(format!("latency log row {}: bad latency {raw:?}", line + 1))
            })?;
            Some(T::lit(v))
        };
        let pos = entries.iter().position(|e| e.model == model && e.format == format);
        let entry = match pos {
            Some(p) => &mut entries[p],
            None => {
                entries.push(LatencyEntry {
                    model,
                    format,
                    samples: Some(Vec::new()),
                });
                entries.last_mut().expect("just pushed")
            }
        };
        match (sample, entry.samples.as_mut()) {
            (Some(v), Some(s)) => s.push(v),
            (None, _) => entry.samples = None,
            (Some(_), None) => {}
        }
    }
    Ok(entries)
}

fn cell<T: Scalar>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn header_line<W: Write>(out: &mut W, ctx: &str, text: &str) -> Result<()> {
    writeln!(out, "# {text}").map_err(|e| Error::io(ctx, e))
}

pub fn write_stratified_csv<T: Scalar, W: Write>(mut out: W, table: &StratifiedRecallTable<T>) -> Result<()> {
    let ctx = "stratified recall";
    header_line(
        &mut out,
        ctx,
        "density bins 0,1,2-3,4-7,8+; quartiles over evaluated images, Q1=[q0,q25], Qk=(q,q]; empty cell = undefined",
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "covariate", "stratum", "lower", "upper", "n_images", "mean_recall"])
        .map_err(|e| Error::csv(ctx, e))?;
    for r in &table.rows {
        w.write_record([
            r.kind.as_str().to_string(),
            r.covariate.clone(),
            r.stratum.clone(),
            cell(r.lower),
            cell(r.upper),
            r.n_images.to_string(),
            cell(r.mean_recall),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

pub fn write_normalized_csv<T: Scalar, W: Write>(mut out: W, table: &NormalizedMetricTable<T>) -> Result<()> {
    let ctx = "normalized metrics";
    header_line(&mut out, ctx, "per-source means, min-max normalized per column over sources")?;
    header_line(&mut out, ctx, &table.difficulty_formula)?;
    header_line(&mut out, ctx, &format!("degenerate columns (set to 0): {}", table.degenerate.join(" ")))?;
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["source".to_string()];
    head.extend(table.columns.iter().cloned());
    head.push("Difficulty".to_string());
    w.write_record(&head).map_err(|e| Error::csv(ctx, e))?;
    for r in &table.rows {
        let mut rec = vec![r.source.clone()];
        rec.extend(r.cells.iter().map(|c| cell(*c)));
        rec.push(cell(r.difficulty));
        w.write_record(&rec).map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

pub fn write_correlation_csv<T: Scalar, W: Write>(mut out: W, rows: &[CorrelationRow<T>]) -> Result<()> {
    let ctx = "correlations";
    header_line(&mut out, ctx, "recall vs covariate; spearman uses average ranks; empty cell = undefined")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["covariate", "granularity", "n", "pearson", "spearman", "flags"])
        .map_err(|e| Error::csv(ctx, e))?;
    for r in rows {
        w.write_record([
            r.covariate.clone(),
            r.granularity.clone(),
            r.correlation.n.to_string(),
            cell(r.correlation.pearson),
            cell(r.correlation.spearman),
            r.correlation.flags.join("; "),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

pub fn write_edge_csv<T: Scalar, W: Write>(mut out: W, report: &EdgeReport<T>) -> Result<()> {
    let ctx = "edge report";
    header_line(
        &mut out,
        ctx,
        "latency = mean of samples; fps = 1000/latency; gain = fps/baseline_fps - 1, baseline = first format listed per model",
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "format",
        "status",
        "n_samples",
        "mean_latency_ms",
        "median_latency_ms",
        "fps",
        "gain",
        "flags",
    ])
    .map_err(|e| Error::csv(ctx, e))?;
    for r in &report.rows {
        w.write_record([
            r.model.clone(),
            r.format.clone(),
            match r.status {
                BenchStatus::Ok => "ok".to_string(),
                BenchStatus::Failed => "failed".to_string(),
            },
            r.n_samples.to_string(),
            cell(r.mean_latency_ms),
            cell(r.median_latency_ms),
            cell(r.fps),
            cell(r.gain),
            r.flags.join("; "),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

pub fn write_feasibility_csv<T: Scalar, W: Write>(mut out: W, lines: &[FeasibilityLine<T>]) -> Result<()> {
    let ctx = "feasibility";
    header_line(&mut out, ctx, "time to process N frames = N / fps")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "format", "frames", "seconds", "minutes"])
        .map_err(|e| Error::csv(ctx, e))?;
    for l in lines {
        w.write_record([
            l.model.clone(),
            l.format.clone(),
            l.frames.to_string(),
            l.seconds.to_string(),
            l.minutes.to_string(),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}
