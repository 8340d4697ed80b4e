//! Independent reference implementations used by the integration and
//! acceptance tests. Written directly from the metric formulas with plain
//! loops and two-pass statistics, sharing no code with the library.
#![allow(dead_code)]

use fishcorpus::dedup::{ContentDigest, PerceptualHash};
use fishcorpus::eval::{Detection, ImageEval};
use fishcorpus::image::RgbImage;
use fishcorpus::{ImageRecord, NormalizedBox, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------- images ----------

/// Random test image; `kind` cycles through noise, smooth gradients with
/// noise, and low-contrast tinted scenes.
pub fn random_image(r: &mut ChaCha8Rng, kind: usize) -> RgbImage {
    let w = r.random_range(64..110);
    let h = r.random_range(64..110);
    match kind % 3 {
        0 => RgbImage::from_fn(w, h, |_, _| [r.random(), r.random(), r.random()]),
        1 => {
            let (a, b, c) = (r.random::<f64>(), r.random::<f64>(), r.random::<f64>());
            RgbImage::from_fn(w, h, |x, y| {
                let t = (x as f64 / w as f64 + y as f64 / h as f64) / 2.0;
                let n = r.random_range(-0.05..0.05);
                [
                    (a * t + n).clamp(0.0, 1.0),
                    (b * (1.0 - t) + n).clamp(0.0, 1.0),
                    (c + n).clamp(0.0, 1.0),
                ]
            })
        }
        _ => {
            let tint: [f64; 3] = [r.random_range(0.1..0.3), r.random_range(0.3..0.6), r.random_range(0.4..0.7)];
            RgbImage::from_fn(w, h, |_, _| tint.map(|t| (t + r.random_range(-0.04f64..0.04)).clamp(0.0, 1.0)))
        }
    }
}

fn luma(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

struct Grid {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Grid {
    fn luminance(img: &RgbImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut v = Vec::new();
        for y in 0..h {
            for x in 0..w {
                v.push(luma(img.get(x, y)));
            }
        }
        Grid { w, h, v }
    }

    fn clamped(&self, x: i64, y: i64) -> f64 {
        let xx = x.max(0).min(self.w as i64 - 1) as usize;
        let yy = y.max(0).min(self.h as i64 - 1) as usize;
        self.v[yy * self.w + xx]
    }

    fn convolve(&self, k: &[[f64; 3]; 3]) -> Vec<f64> {
        let mut out = Vec::new();
        for y in 0..self.h as i64 {
            for x in 0..self.w as i64 {
                let mut s = 0.0;
                for (dy, row) in k.iter().enumerate() {
                    for (dx, kv) in row.iter().enumerate() {
                        s += kv * self.clamped(x + dx as i64 - 1, y + dy as i64 - 1);
                    }
                }
                out.push(s);
            }
        }
        out
    }
}

pub fn turbidity(img: &RgbImage) -> f64 {
    let v: Vec<f64> = img.pixels().iter().map(|p| p[0].min(p[1]).min(p[2])).collect();
    mean(&v)
}

pub fn rms_contrast(img: &RgbImage) -> f64 {
    pop_var(&Grid::luminance(img).v).sqrt()
}

pub fn blur_variance(img: &RgbImage) -> f64 {
    let k = [[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]];
    pop_var(&Grid::luminance(img).convolve(&k))
}

pub fn channel_ratios(img: &RgbImage) -> [f64; 3] {
    let mut s = [0.0; 3];
    for p in img.pixels() {
        for c in 0..3 {
            s[c] += p[c];
        }
    }
    let t = s[0] + s[1] + s[2];
    [s[0] / t, s[1] / t, s[2] / t]
}

pub fn uicm(img: &RgbImage) -> f64 {
    let rg: Vec<f64> = img.pixels().iter().map(|p| p[0] - p[1]).collect();
    let yb: Vec<f64> = img.pixels().iter().map(|p| (p[0] + p[1]) / 2.0 - p[2]).collect();
    -(mean(&rg).powi(2) + mean(&yb).powi(2)).sqrt() - 0.3 * (pop_var(&rg) + pop_var(&yb)).sqrt()
}

pub fn uism(img: &RgbImage) -> f64 {
    let g = Grid::luminance(img);
    // Cross-correlation kernels: gx = right column minus left column.
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let ky = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let gx = g.convolve(&kx);
    let gy = g.convolve(&ky);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).collect();
    mean(&mag)
}

pub fn uiconm(img: &RgbImage, block: usize) -> f64 {
    let g = Grid::luminance(img);
    let mut scores = Vec::new();
    let mut by = 0;
    while (by + 1) * block <= g.h {
        let mut bx = 0;
        while (bx + 1) * block <= g.w {
            let mut vals = Vec::new();
            for y in by * block..(by + 1) * block {
                for x in bx * block..(bx + 1) * block {
                    vals.push(g.v[y * g.w + x]);
                }
            }
            let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
            let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
            scores.push(if hi + lo > 0.0 { (hi - lo) / (hi + lo) } else { 0.0 });
            bx += 1;
        }
        by += 1;
    }
    mean(&scores)
}

fn lab(p: [f64; 3]) -> [f64; 3] {
    let lin = p.map(|c| {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    });
    let x = 0.4124564 * lin[0] + 0.3575761 * lin[1] + 0.1804375 * lin[2];
    let y = 0.2126729 * lin[0] + 0.7151522 * lin[1] + 0.0721750 * lin[2];
    let z = 0.0193339 * lin[0] + 0.1191920 * lin[1] + 0.9503041 * lin[2];
    let f = |t: f64| {
        let e = (6.0f64 / 29.0).powi(3);
        if t > e {
            t.powf(1.0 / 3.0)
        } else {
            t * (29.0f64 / 6.0).powi(2) / 3.0 + 4.0 / 29.0
        }
    };
    // D65 reference white.
    let (fx, fy, fz) = (f(x / 0.95047), f(y / 1.0), f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

pub fn uciqe(img: &RgbImage) -> f64 {
    let mut chroma = Vec::new();
    let mut light = Vec::new();
    let mut sat = Vec::new();
    for p in img.pixels() {
        let [l, a, b] = lab(*p);
        chroma.push((a * a + b * b).sqrt() / 100.0);
        light.push(l / 100.0);
        let hi = p[0].max(p[1]).max(p[2]);
        let lo = p[0].min(p[1]).min(p[2]);
        sat.push(if hi > 0.0 { (hi - lo) / hi } else { 0.0 });
    }
    light.sort_by(|a, b| a.partial_cmp(b).unwrap());
    0.4680 * pop_var(&chroma).sqrt() + 0.2745 * (percentile(&light, 0.99) - percentile(&light, 0.01)) + 0.2576 * mean(&sat)
}

// ---------- detection ----------

pub fn iou(a: &NormalizedBox, b: &NormalizedBox) -> f64 {
    let (ax0, ax1) = (a.cx - a.w / 2.0, a.cx + a.w / 2.0);
    let (ay0, ay1) = (a.cy - a.h / 2.0, a.cy + a.h / 2.0);
    let (bx0, bx1) = (b.cx - b.w / 2.0, b.cx + b.w / 2.0);
    let (by0, by1) = (b.cy - b.h / 2.0, b.cy + b.h / 2.0);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Random box fully inside the unit square.
pub fn random_box(r: &mut ChaCha8Rng) -> NormalizedBox {
    let w = r.random_range(0.05..0.4);
    let h = r.random_range(0.05..0.4);
    let cx = r.random_range(w / 2.0..1.0 - w / 2.0);
    let cy = r.random_range(h / 2.0..1.0 - h / 2.0);
    NormalizedBox::new(cx, cy, w, h)
}

/// A box near `b`: shifted and rescaled by up to `amount` of its size.
pub fn jitter(r: &mut ChaCha8Rng, b: &NormalizedBox, amount: f64) -> NormalizedBox {
    let w = (b.w * (1.0 + r.random_range(-amount..amount))).clamp(0.02, 0.98);
    let h = (b.h * (1.0 + r.random_range(-amount..amount))).clamp(0.02, 0.98);
    let cx = (b.cx + b.w * r.random_range(-amount..amount)).clamp(w / 2.0, 1.0 - w / 2.0);
    let cy = (b.cy + b.h * r.random_range(-amount..amount)).clamp(h / 2.0, 1.0 - h / 2.0);
    NormalizedBox::new(cx, cy, w, h)
}

/// Random instance: up to `max` truths and detections, most detections
/// near some truth. Confidences are distinct unless `allow_ties`.
pub fn random_instance(
    r: &mut ChaCha8Rng,
    max: usize,
    allow_ties: bool,
) -> (Vec<Detection>, Vec<NormalizedBox>) {
    let n_gt = r.random_range(0..=max);
    let n_det = r.random_range(0..=max);
    let gts: Vec<NormalizedBox> = (0..n_gt).map(|_| random_box(r)).collect();
    let dets = (0..n_det)
        .map(|i| {
            let b = if !gts.is_empty() && r.random_bool(0.75) {
                let g = gts[r.random_range(0..gts.len())];
                jitter(r, &g, 0.25)
            } else {
                random_box(r)
            };
            let conf = if allow_ties {
                r.random_range(0..5) as f64 / 4.0
            } else {
                (r.random::<f64>() + i as f64 * 1e-9).min(1.0)
            };
            Detection::new(b, conf)
        })
        .collect();
    (dets, gts)
}

/// Greedy matching written from its definition, for distinct confidences.
/// Returns a TP flag per detection.
pub fn greedy_flags(dets: &[Detection], gts: &[NormalizedBox], thr: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap());
    let mut used = vec![false; gts.len()];
    let mut flags = vec![false; dets.len()];
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let v = iou(&dets[d].bbox, gt);
            if !used[g] && v >= thr && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            flags[d] = true;
        }
    }
    flags
}

/// Every one-to-one partial assignment of detections to truths whose pairs
/// clear the threshold. `assign[d] = Some(g)`.
pub fn all_assignments(ious: &[Vec<f64>], thr: f64) -> Vec<Vec<Option<usize>>> {
    fn rec(
        d: usize,
        ious: &[Vec<f64>],
        thr: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        out: &mut Vec<Vec<Option<usize>>>,
    ) {
        if d == ious.len() {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        rec(d + 1, ious, thr, used, cur, out);
        cur.pop();
        for g in 0..used.len() {
            if !used[g] && ious[d][g] >= thr {
                used[g] = true;
                cur.push(Some(g));
                rec(d + 1, ious, thr, used, cur, out);
                cur.pop();
                used[g] = false;
            }
        }
    }
    let n_gt = ious.first().map_or(0, |r| r.len());
    let mut out = Vec::new();
    rec(0, ious, thr, &mut vec![false; n_gt], &mut Vec::new(), &mut out);
    out
}

pub struct Optimum {
    pub tp: usize,
    pub unique: bool,
}

/// Exhaustive optimum under confidence priority: assignments compared by
/// the vector of matched IoUs (unmatched = -1) with detections in
/// descending confidence order, lexicographically.
pub fn priority_optimum(dets: &[Detection], gts: &[NormalizedBox], thr: f64) -> Optimum {
    let ious: Vec<Vec<f64>> = dets.iter().map(|d| gts.iter().map(|g| iou(&d.bbox, g)).collect()).collect();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap());
    let key = |a: &Vec<Option<usize>>| -> Vec<f64> {
        order.iter().map(|&d| a[d].map_or(-1.0, |g| ious[d][g])).collect()
    };
    let mut best: Option<(Vec<f64>, usize)> = None;
    let mut count = 0;
    for a in all_assignments(&ious, thr) {
        let k = key(&a);
        let tp = a.iter().filter(|x| x.is_some()).count();
        match &best {
            None => {
                best = Some((k, tp));
                count = 1;
            }
            Some((bk, _)) => match k.partial_cmp(bk).unwrap() {
                std::cmp::Ordering::Greater => {
                    best = Some((k, tp));
                    count = 1;
                }
                std::cmp::Ordering::Equal => count += 1,
                std::cmp::Ordering::Less => {}
            },
        }
    }
    let distinct_conf = {
        let mut c: Vec<f64> = dets.iter().map(|d| d.confidence).collect();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        c.windows(2).all(|w| w[0] != w[1])
    };
    Optimum {
        tp: best.map_or(0, |b| b.1),
        unique: count == 1 && distinct_conf,
    }
}

/// Maximum-cardinality one-to-one matching size and how many assignments
/// attain it.
pub fn max_cardinality(dets: &[Detection], gts: &[NormalizedBox], thr: f64) -> (usize, usize) {
    let ious: Vec<Vec<f64>> = dets.iter().map(|d| gts.iter().map(|g| iou(&d.bbox, g)).collect()).collect();
    let sizes: Vec<usize> = all_assignments(&ious, thr)
        .iter()
        .map(|a| a.iter().filter(|x| x.is_some()).count())
        .collect();
    let m = sizes.iter().copied().max().unwrap_or(0);
    (m, sizes.iter().filter(|&&s| s == m).count())
}

/// Interpolated AP straight from the definition: rank all detections by
/// confidence, accumulate precision / recall, and for each recall level
/// r = 0.00..1.00 take the best precision at recall >= r.
pub fn ap_by_definition(images: &[ImageEval], thr: f64) -> f64 {
    let n_gt: usize = images.iter().map(|i| i.ground_truths.len()).sum();
    let mut ranked: Vec<(f64, bool)> = Vec::new();
    for img in images {
        let flags = greedy_flags(&img.detections, &img.ground_truths, thr);
        for (d, f) in img.detections.iter().zip(flags) {
            ranked.push((d.confidence, f));
        }
    }
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut points = Vec::new();
    let mut tp = 0;
    for (k, (_, hit)) in ranked.iter().enumerate() {
        if *hit {
            tp += 1;
        }
        points.push((tp as f64 / (k + 1) as f64, tp as f64 / n_gt as f64));
    }
    let mut total = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let p = points
            .iter()
            .filter(|(_, rec)| *rec >= r)
            .map(|(p, _)| *p)
            .fold(0.0, f64::max);
        total += p;
    }
    total / 101.0
}

// ---------- correlation ----------

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Ranks by counting: rank = 1 + #less + (#equal - 1) / 2.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|u| *u < v).count() as f64;
            let eq = x.iter().filter(|u| *u == v).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

// ---------- records ----------

pub fn record(id: &str, source: &str, image: u8, label: Option<u8>, hash: u64, positive: bool) -> ImageRecord {
    ImageRecord {
        image_id: id.to_string(),
        source: source.to_string(),
        path: format!("/corpus/{id}"),
        width_px: 64,
        height_px: 64,
        annotations: if positive {
            vec![fishcorpus::Annotation::new(0, NormalizedBox::new(0.5, 0.5, 0.2, 0.2))]
        } else {
            Vec::new()
        },
        content_digest: ContentDigest([image; 16]),
        label_digest: label.map(|l| ContentDigest([l; 16])),
        perceptual_hash: PerceptualHash(hash),
        split: Split::Unassigned,
        dropped_label_lines: 0,
        diagnostics: None,
    }
}
