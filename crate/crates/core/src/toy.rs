//! Deterministic synthetic corpus for demos and end-to-end tests.
//!
//! Sixty PNG frames over three sources, one per annotation adapter, with
//! planted duplicates, background-only frames, synthetic detector output
//! and an edge latency log.

use std::fmt::Write as _;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dedup::DuplicateReason;
use crate::error::{Error, Result};
use crate::harmonize::serialize_yolo;
use crate::image::RgbImage;
use crate::model::{Annotation, NormalizedBox};
use crate::pipeline::{PipelineConfig, SourceConfig};

pub const TOY_IMAGE_COUNT: usize = 60;
pub const TOY_WIDTH: u32 = 128;
pub const TOY_HEIGHT: u32 = 96;
const TOY_SEED: u64 = 0x5EED_F15B;

/// One generated frame and what the pipeline should recover from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyImage {
    pub image_id: String,
    pub annotations: Vec<Annotation>,
    /// For planted copies: the original's id and the stage expected to catch it.
    pub duplicate_of: Option<(String, DuplicateReason)>,
}

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub root: PathBuf,
    pub config_path: PathBuf,
    pub predictions_dir: PathBuf,
    pub latency_log: PathBuf,
    pub images: Vec<ToyImage>,
}

impl ToyCorpus {
    pub fn planted_copies(&self) -> usize {
        self.images.iter().filter(|i| i.duplicate_of.is_some()).count()
    }
}

struct SourceSpec {
    name: &'static str,
    adapter: &'static str,
    originals: usize,
    base: [f64; 3],
    haze: f64,
}

const SOURCES: [SourceSpec; 3] = [
    SourceSpec {
        name: "reef",
        adapter: "yolo",
        originals: 22,
        base: [0.10, 0.35, 0.55],
        haze: 0.0,
    },
    SourceSpec {
        name: "kelp",
        adapter: "polygon",
        originals: 18,
        base: [0.15, 0.40, 0.25],
        haze: 0.2,
    },
    SourceSpec {
        name: "murk",
        adapter: "voc_xml",
        originals: 16,
        base: [0.30, 0.38, 0.32],
        haze: 0.55,
    },
];

/// Fish per frame, cycled; 0 marks a background-only frame.
const FISH_COUNTS: [usize; 11] = [1, 3, 0, 5, 2, 9, 1, 4, 0, 2, 7];

/// Integer pixel box `[x0, y0, x1, y1)`.
type PxBox = [u32; 4];
/// PNG bytes, optional label file (extension, text), boxes, pixels.
type Stored = (Vec<u8>, Option<(&'static str, String)>, Vec<PxBox>, RgbImage);

fn random_boxes(rng: &mut ChaCha8Rng, n: usize) -> Vec<PxBox> {
    (0..n)
        .map(|_| {
            let w = rng.random_range(10..36);
            let h = rng.random_range(8..26);
            let x0 = rng.random_range(0..TOY_WIDTH - w);
            let y0 = rng.random_range(0..TOY_HEIGHT - h);
            [x0, y0, x0 + w, y0 + h]
        })
        .collect()
}

fn to_annotation(b: &PxBox) -> Annotation {
    let (w, h) = (TOY_WIDTH as f64, TOY_HEIGHT as f64);
    Annotation::new(
        0,
        NormalizedBox::from_corners(b[0] as f64 / w, b[1] as f64 / h, b[2] as f64 / w, b[3] as f64 / h),
    )
}

fn render(rng: &mut ChaCha8Rng, spec: &SourceSpec, boxes: &[PxBox]) -> RgbImage {
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(-0.12..0.12),
                rng.random_range(-0.12..0.12),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.08..0.18),
            )
        })
        .collect();
    let fish_color = [
        rng.random_range(0.7..1.0),
        rng.random_range(0.4..0.8),
        rng.random_range(0.1..0.4),
    ];
    let noise: Vec<f64> = (0..TOY_WIDTH * TOY_HEIGHT).map(|_| rng.random_range(-0.03..0.03)).collect();
    RgbImage::from_fn(TOY_WIDTH as usize, TOY_HEIGHT as usize, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let field: f64 = waves
            .iter()
            .map(|(kx, ky, phase, amp)| amp * (kx * xf + ky * yf + phase).sin())
            .sum();
        let mut px = spec.base.map(|c| c + field);
        for b in boxes {
            let (cx, cy) = ((b[0] + b[2]) as f64 / 2.0, (b[1] + b[3]) as f64 / 2.0);
            let (rx, ry) = ((b[2] - b[0]) as f64 / 2.0, (b[3] - b[1]) as f64 / 2.0);
            let d = ((xf + 0.5 - cx) / rx).powi(2) + ((yf + 0.5 - cy) / ry).powi(2);
            if d <= 1.0 {
                let stripe = if (x / 3) % 2 == 0 { 0.85 } else { 1.0 };
                px = fish_color.map(|c| c * stripe);
            }
        }
        let n = noise[y * TOY_WIDTH as usize + x];
        px.map(|c| ((1.0 - spec.haze) * c + spec.haze * 0.55 + n).clamp(0.0, 1.0))
    })
}

fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    img.to_rgb8()
        .write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
        .map_err(|e| Error::Decode {
            path: "toy png".into(),
            message: e.to_string(),
        })?;
    Ok(out)
}

fn label_file(adapter: &str, anns: &[PxBox]) -> (&'static str, String) {
    match adapter {
        "yolo" => ("txt", serialize_yolo(&anns.iter().map(to_annotation).collect::<Vec<_>>())),
        "polygon" => {
            let mut s = String::new();
            for b in anns {
                let [x0, y0, x1, y1] = *b;
                // Irregular quadrilateral touching all four box edges.
                writeln!(s, "3 {} {} {} {} {} {} {} {}", x0 + 2, y0, x1, y0 + 3, x1 - 1, y1, x0, y1 - 2)
                    .expect("string write");
            }
            ("txt", s)
        }
        _ => {
            let mut s = format!(
                "<annotation>\n  <size><width>{TOY_WIDTH}</width><height>{TOY_HEIGHT}</height></size>\n"
            );
            for b in anns {
                writeln!(
                    s,
                    "  <object><name>fish</name><bndbox><xmin>{}</xmin><ymin>{}</ymin><xmax>{}</xmax><ymax>{}</ymax></bndbox></object>",
                    b[0], b[1], b[2], b[3]
                )
                .expect("string write");
            }
            s.push_str("</annotation>\n");
            ("xml", s)
        }
    }
}

fn put(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn predictions(rng: &mut ChaCha8Rng, anns: &[Annotation]) -> String {
    let mut s = String::new();
    for a in anns {
        if rng.random_bool(0.8) {
            let b = a.bbox;
            let jx = rng.random_range(-0.15..0.15) * b.w;
            let jy = rng.random_range(-0.15..0.15) * b.h;
            let sw = rng.random_range(0.85..1.15);
            let p = NormalizedBox::new(b.cx + jx, b.cy + jy, b.w * sw, b.h * sw).clamped();
            let conf: f64 = rng.random_range(0.3..0.99);
            writeln!(s, "0 {:.6} {:.6} {:.6} {:.6} {conf:.4}", p.cx, p.cy, p.w, p.h).expect("string write");
        }
    }
    let false_alarms = rng.random_range(0..3);
    for _ in 0..false_alarms {
        let w = rng.random_range(0.05..0.2);
        let h = rng.random_range(0.05..0.2);
        let cx = rng.random_range(w / 2.0..1.0 - w / 2.0);
        let cy = rng.random_range(h / 2.0..1.0 - h / 2.0);
        let conf: f64 = rng.random_range(0.05..0.6);
        writeln!(s, "0 {cx:.6} {cy:.6} {w:.6} {h:.6} {conf:.4}").expect("string write");
    }
    s
}

/// Latency log with the published Jetson-class numbers, several samples
/// per format, and one failed export.
pub const TOY_LATENCY_LOG: &str = "\
# synthetic edge benchmark log
model,format,latency_ms
YOLO11n,PyTorch,110
YOLO11n,PyTorch,112
YOLO11n,TensorRT,87
YOLO11n,TensorRT,89
YOLO11m,PyTorch,449
YOLO11m,PyTorch,451
YOLO11m,TorchScript,OOM
YOLO11m,TensorRT,289
YOLO11m,TensorRT,291
";

/// Writes the corpus, a pipeline config, predictions and a latency log
/// under `dir`. Output bytes depend only on the fixed seed.
pub fn write_toy_corpus(dir: &Path) -> Result<ToyCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(TOY_SEED);
    let mut images = Vec::new();
    let mut pred_rng = ChaCha8Rng::seed_from_u64(TOY_SEED ^ 0xFFFF);
    let predictions_dir = dir.join("predictions");
    let mut k = 0usize;
    for spec in &SOURCES {
        let root = dir.join(spec.name);
        let mut stored: Vec<Stored> = Vec::new();
        for i in 0..spec.originals {
            let n = FISH_COUNTS[k % FISH_COUNTS.len()];
            k += 1;
            let boxes = random_boxes(&mut rng, n);
            let img = render(&mut rng, spec, &boxes);
            let png = encode_png(&img)?;
            let name = format!("{}_{i:03}", spec.name);
            put(&root.join("images").join(format!("{name}.png")), &png)?;
            // Background frames: no label file, an empty file, or an
            // object-free document, depending on the adapter.
            let label = if n == 0 && spec.adapter == "yolo" {
                None
            } else {
                let (ext, text) = label_file(spec.adapter, &boxes);
                put(&root.join("labels").join(format!("{name}.{ext}")), text.as_bytes())?;
                Some((ext, text))
            };
            images.push(ToyImage {
                image_id: format!("{}/{name}.png", spec.name),
                annotations: boxes.iter().map(to_annotation).collect(),
                duplicate_of: None,
            });
            stored.push((png, label, boxes, img));
        }
        let mut copy = |orig: usize, suffix: &str, bytes: &[u8], reason| -> Result<()> {
            let name = format!("{}_{orig:03}_{suffix}", spec.name);
            put(&root.join("images").join(format!("{name}.png")), bytes)?;
            if let Some((ext, text)) = &stored[orig].1 {
                put(&root.join("labels").join(format!("{name}.{ext}")), text.as_bytes())?;
            }
            images.push(ToyImage {
                image_id: format!("{}/{name}.png", spec.name),
                annotations: stored[orig].2.iter().map(to_annotation).collect(),
                duplicate_of: Some((format!("{}/{}_{orig:03}.png", spec.name, spec.name), reason)),
            });
            Ok(())
        };
        match spec.name {
            "reef" => {
                let exact = stored[3].0.clone();
                copy(3, "copy", &exact, DuplicateReason::Exact)?;
                let mut near = stored[10].3.clone().to_rgb8();
                for y in 40..43 {
                    for x in 60..63 {
                        let p = near.get_pixel_mut(x, y);
                        p.0 = p.0.map(|c| c.saturating_add(2));
                    }
                }
                let mut bytes = Vec::new();
                near.write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
                    .map_err(|e| Error::Decode {
                        path: "toy png".into(),
                        message: e.to_string(),
                    })?;
                copy(10, "near", &bytes, DuplicateReason::Perceptual)?;
            }
            "kelp" => {
                let bytes = stored[5].0.clone();
                copy(5, "copy_a", &bytes, DuplicateReason::Exact)?;
                copy(5, "copy_b", &bytes, DuplicateReason::Exact)?;
            }
            _ => {}
        }
    }
    for img in &images {
        let text = predictions(&mut pred_rng, &img.annotations);
        put(&crate::pipeline::prediction_path(&predictions_dir, &img.image_id), text.as_bytes())?;
    }
    debug_assert_eq!(images.len(), TOY_IMAGE_COUNT);

    let config = PipelineConfig {
        sources: SOURCES
            .iter()
            .map(|s| SourceConfig {
                name: s.name.into(),
                root: s.name.into(),
                adapter: s.adapter.into(),
            })
            .collect(),
        ..PipelineConfig::default()
    };
    let config_path = dir.join("config.json");
    let mut json = serde_json::to_vec_pretty(&config).map_err(|e| Error::json("toy config", e))?;
    json.push(b'\n');
    put(&config_path, &json)?;
    let latency_log = dir.join("latency.csv");
    put(&latency_log, TOY_LATENCY_LOG.as_bytes())?;
    Ok(ToyCorpus {
        root: dir.to_path_buf(),
        config_path,
        predictions_dir,
        latency_log,
        images,
    })
}
