//! Detection scoring: IoU matching, precision/recall sweeps and COCO-style
//! average precision for the single object class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NormalizedBox;
use crate::scalar::{mean_and_variance, Scalar};

/// Number of recall samples in the interpolated AP.
pub const AP_RECALL_POINTS: usize = 101;

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.25;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds<T: Scalar>() -> [T; 10] {
    std::array::from_fn(|k| T::lit((50 + 5 * k) as f64 / 100.0))
}

/// Intersection over union of two boxes (clipped corners).
pub fn iou<T: Scalar>(a: &NormalizedBox<T>, b: &NormalizedBox<T>) -> T {
    let [ax0, ay0, ax1, ay1] = a.corners();
    let [bx0, by0, bx1, by1] = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(T::zero());
    let ih = (ay1.min(by1) - ay0.max(by0)).max(T::zero());
    let inter = iw * ih;
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<T = f64> {
    #[serde(rename = "box")]
    pub bbox: NormalizedBox<T>,
    pub confidence: T,
}

impl<T: Scalar> Detection<T> {
    pub fn new(bbox: NormalizedBox<T>, confidence: T) -> Self {
        Self { bbox, confidence }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruePositive<T> {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: T,
}

/// Outcome of matching one image at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<T = f64> {
    pub iou_threshold: T,
    pub true_positives: Vec<TruePositive<T>>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
    /// Detection indices in the order they were matched.
    pub order: Vec<usize>,
}

impl<T: Scalar> MatchResult<T> {
    pub fn tp(&self) -> usize {
        self.true_positives.len()
    }

    pub fn fp(&self) -> usize {
        self.false_positives.len()
    }

    pub fn fn_count(&self) -> usize {
        self.false_negatives.len()
    }

    /// Whether detection `i` was a true positive.
    pub fn is_tp(&self, i: usize) -> bool {
        self.true_positives.iter().any(|t| t.detection == i)
    }
}

fn check_threshold<T: Scalar>(t: T) -> Result<()> {
    if !(t > T::zero() && t < T::one()) {
        return Err(Error::InvalidParameter(format!("IoU threshold {t} not in (0,1)")));
    }
    Ok(())
}

/// Greedy confidence-ordered matching.
///
/// Detections are visited by descending confidence, then descending best
/// IoU against any ground truth, then input order. Each takes the still
/// unmatched ground truth with the highest IoU at or above the threshold
/// (lowest index on ties); otherwise it is a false positive.
pub fn match_detections<T: Scalar>(
    detections: &[Detection<T>],
    ground_truths: &[NormalizedBox<T>],
    iou_threshold: T,
) -> Result<MatchResult<T>> {
    check_threshold(iou_threshold)?;
    let ious: Vec<Vec<T>> = detections
        .iter()
        .map(|d| ground_truths.iter().map(|g| iou(&d.bbox, g)).collect())
        .collect();
    let best: Vec<T> = ious
        .iter()
        .map(|row| row.iter().copied().fold(T::zero(), T::max))
        .collect();
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .partial_cmp(&detections[a].confidence)
            .expect("finite confidence")
            .then(best[b].partial_cmp(&best[a]).expect("finite IoU"))
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; ground_truths.len()];
    let mut true_positives = Vec::new();
    let mut false_positives = Vec::new();
    for &d in &order {
        let mut pick: Option<usize> = None;
        for (g, &v) in ious[d].iter().enumerate() {
            if taken[g] || v < iou_threshold {
                continue;
            }
            if pick.is_none_or(|p| v > ious[d][p]) {
                pick = Some(g);
            }
        }
        match pick {
            Some(g) => {
                taken[g] = true;
                true_positives.push(TruePositive {
                    detection: d,
                    ground_truth: g,
                    iou: ious[d][g],
                });
            }
            None => false_positives.push(d),
        }
    }
    let false_negatives = (0..ground_truths.len()).filter(|&g| !taken[g]).collect();
    Ok(MatchResult {
        iou_threshold,
        true_positives,
        false_positives,
        false_negatives,
        order,
    })
}

/// Detections and ground truth of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval<T = f64> {
    pub image_id: String,
    pub detections: Vec<Detection<T>>,
    pub ground_truths: Vec<NormalizedBox<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint<T = f64> {
    pub confidence: T,
    pub precision: T,
    pub recall: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult<T = f64> {
    pub iou_threshold: T,
    pub ap: T,
    /// Cumulative precision / recall after each ranked detection.
    pub curve: Vec<PrPoint<T>>,
    pub n_ground_truth: usize,
}

/// Ranked detections across the corpus with their TP flag. Ties in
/// confidence keep image order, then each image's matching order.
pub fn ranked_outcomes<T: Scalar>(images: &[ImageEval<T>], iou_threshold: T) -> Result<Vec<(T, bool)>> {
    let mut ranked = Vec::new();
    for img in images {
        let m = match_detections(&img.detections, &img.ground_truths, iou_threshold)?;
        for &d in &m.order {
            ranked.push((img.detections[d].confidence, m.is_tp(d)));
        }
    }
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite confidence"));
    Ok(ranked)
}

/// Interpolated AP over a recall grid of [`AP_RECALL_POINTS`] samples.
///
/// At each grid recall the precision is the maximum precision over curve
/// points with at least that recall (0 when none reach it).
pub fn interpolated_ap<T: Scalar>(curve: &[PrPoint<T>]) -> T {
    let mut envelope: Vec<T> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut sum = T::zero();
    let mut idx = 0;
    for k in 0..AP_RECALL_POINTS {
        let r = T::lit(k as f64 / (AP_RECALL_POINTS - 1) as f64);
        while idx < curve.len() && curve[idx].recall < r {
            idx += 1;
        }
        if idx < curve.len() {
            sum = sum + envelope[idx];
        }
    }
    sum / T::from_count(AP_RECALL_POINTS)
}

pub fn pr_curve_and_ap<T: Scalar>(images: &[ImageEval<T>], iou_threshold: T) -> Result<ApResult<T>> {
    let n_gt: usize = images.iter().map(|i| i.ground_truths.len()).sum();
    if n_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let ranked = ranked_outcomes(images, iou_threshold)?;
    let mut curve = Vec::with_capacity(ranked.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for (confidence, hit) in ranked {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push(PrPoint {
            confidence,
            precision: T::from_count(tp) / T::from_count(tp + fp),
            recall: T::from_count(tp) / T::from_count(n_gt),
        });
    }
    Ok(ApResult {
        iou_threshold,
        ap: interpolated_ap(&curve),
        curve,
        n_ground_truth: n_gt,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult<T = f64> {
    pub map50: T,
    pub map50_95: T,
    /// `(threshold, AP)` for each of the ten thresholds.
    pub per_threshold: Vec<(T, T)>,
}

/// AP at 0.50 and the mean AP over the ten COCO thresholds.
pub fn map_range<T: Scalar>(images: &[ImageEval<T>]) -> Result<MapResult<T>> {
    let mut per_threshold = Vec::with_capacity(10);
    for t in coco_thresholds::<T>() {
        per_threshold.push((t, pr_curve_and_ap(images, t)?.ap));
    }
    // Shifted mean: ten equal APs average to exactly that AP.
    let (map50_95, _) = mean_and_variance(per_threshold.iter().map(|(_, ap)| *ap)).expect("ten thresholds");
    Ok(MapResult {
        map50: per_threshold[0].1,
        map50_95,
        per_threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn of<T: Scalar>(m: &MatchResult<T>) -> Self {
        Self {
            tp: m.tp(),
            fp: m.fp(),
            fn_: m.fn_count(),
        }
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Precision, recall and F1; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf<T = f64> {
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f1: Option<T>,
    pub counts: Counts,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score<T: Scalar>(precision: T, recall: T) -> T {
    let s = precision + recall;
    if s > T::zero() {
        T::lit(2.0) * precision * recall / s
    } else {
        T::zero()
    }
}

pub fn prf<T: Scalar>(counts: Counts) -> Prf<T> {
    let ratio = |num: usize, den: usize| (den > 0).then(|| T::from_count(num) / T::from_count(den));
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) => Some(f1_score(p, r)),
        _ => None,
    };
    Prf {
        precision,
        recall,
        f1,
        counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecall<T = f64> {
    pub image_id: String,
    pub n_gt: usize,
    pub tp: usize,
    pub recall: T,
}

/// Per-image recall for images with at least one ground-truth box.
pub fn per_image_recall<T: Scalar>(results: &[(String, MatchResult<T>)]) -> Vec<ImageRecall<T>> {
    results
        .iter()
        .filter_map(|(id, m)| {
            let n_gt = m.tp() + m.fn_count();
            (n_gt > 0).then(|| ImageRecall {
                image_id: id.clone(),
                n_gt,
                tp: m.tp(),
                recall: T::from_count(m.tp()) / T::from_count(n_gt),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings<T = f64> {
    /// Minimum confidence for the scalar precision / recall operating point.
    pub conf_threshold: T,
    /// IoU threshold for the operating point and per-image recall.
    pub iou_threshold: T,
}

impl<T: Scalar> Default for EvalSettings<T> {
    fn default() -> Self {
        Self {
            conf_threshold: T::lit(DEFAULT_CONF_THRESHOLD),
            iou_threshold: T::lit(DEFAULT_IOU_THRESHOLD),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T = f64> {
    pub settings: EvalSettings<T>,
    pub ap_interpolation: String,
    pub n_images: usize,
    pub n_ground_truth: usize,
    pub n_detections: usize,
    pub map50: T,
    pub map50_95: T,
    pub ap_by_threshold: Vec<(T, T)>,
    pub operating_point: Prf<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput<T = f64> {
    pub report: EvalReport<T>,
    /// PR curve at IoU 0.50.
    pub curve: Vec<PrPoint<T>>,
    pub per_image: Vec<ImageRecall<T>>,
}

/// Full evaluation: mAP over all confidences plus the thresholded
/// operating point and per-image recall.
pub fn evaluate<T: Scalar>(images: &[ImageEval<T>], settings: &EvalSettings<T>) -> Result<EvalOutput<T>> {
    check_threshold(settings.iou_threshold)?;
    let maps = map_range(images)?;
    let curve = pr_curve_and_ap(images, T::lit(0.5))?.curve;
    let mut matches = Vec::with_capacity(images.len());
    let mut totals = Counts::default();
    for img in images {
        let kept: Vec<Detection<T>> = img
            .detections
            .iter()
            .copied()
            .filter(|d| d.confidence >= settings.conf_threshold)
            .collect();
        let m = match_detections(&kept, &img.ground_truths, settings.iou_threshold)?;
        totals = totals + Counts::of(&m);
        matches.push((img.image_id.clone(), m));
    }
    Ok(EvalOutput {
        report: EvalReport {
            settings: *settings,
            ap_interpolation: format!("{AP_RECALL_POINTS}-point interpolated precision envelope"),
            n_images: images.len(),
            n_ground_truth: images.iter().map(|i| i.ground_truths.len()).sum(),
            n_detections: images.iter().map(|i| i.detections.len()).sum(),
            map50: maps.map50,
            map50_95: maps.map50_95,
            ap_by_threshold: maps.per_threshold,
            operating_point: prf(totals),
        },
        curve,
        per_image: per_image_recall(&matches),
    })
}
