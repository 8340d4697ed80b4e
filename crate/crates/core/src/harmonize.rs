//! Conversion of heterogeneous source annotations into normalized,
//! single-class YOLO boxes.
//!
//! Every source adapter reduces its native geometry to either a
//! [`PixelBox`] or a [`PixelPolygon`]; polygons are enclosed by their
//! axis-aligned bounding rectangle and all boxes are then normalized by the
//! image size. Rotated minimal rectangles are not produced: the unified
//! format is axis-aligned.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{Annotation, NormalizedBox};
use crate::scalar::Scalar;

/// Polygon points may leave the image by at most this many pixels before
/// enclosure; they are clamped back onto the border.
pub const POLYGON_CLAMP_PX: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PixelPolygon<T = f64> {
    points: Vec<(T, T)>,
}

impl<T: Scalar> PixelPolygon<T> {
    pub fn new(points: Vec<(T, T)>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "polygon needs at least 3 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::DegenerateGeometry("non-finite polygon point".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    /// Clamps points lying at most [`POLYGON_CLAMP_PX`] outside the image
    /// onto its border. Larger excursions are errors.
    pub fn clamp_to_image(&self, width_px: u32, height_px: u32) -> Result<Self> {
        let tol = T::lit(POLYGON_CLAMP_PX);
        let w = T::lit(width_px as f64);
        let h = T::lit(height_px as f64);
        let mut points = Vec::with_capacity(self.points.len());
        for &(x, y) in &self.points {
            if x < -tol || y < -tol || x > w + tol || y > h + tol {
                return Err(Error::OutOfBounds {
                    x: x.to_f64_lossy(),
                    y: y.to_f64_lossy(),
                    width: width_px,
                    height: height_px,
                });
            }
            points.push((x.max(T::zero()).min(w), y.max(T::zero()).min(h)));
        }
        Ok(Self { points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox<T = f64> {
    pub xmin: T,
    pub ymin: T,
    pub xmax: T,
    pub ymax: T,
}

impl<T: Scalar> PixelBox<T> {
    pub fn new(xmin: T, ymin: T, xmax: T, ymax: T) -> Result<Self> {
        if !(xmin < xmax) || !(ymin < ymax) {
            return Err(Error::DegenerateGeometry(format!(
                "box ({xmin}, {ymin}, {xmax}, {ymax}) has no area"
            )));
        }
        Ok(Self {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }
}

/// Axis-aligned bounding rectangle of a polygon.
pub fn polygon_to_box<T: Scalar>(poly: &PixelPolygon<T>) -> Result<PixelBox<T>> {
    let (mut xmin, mut ymin) = poly.points[0];
    let (mut xmax, mut ymax) = poly.points[0];
    for &(x, y) in &poly.points[1..] {
        xmin = xmin.min(x);
        ymin = ymin.min(y);
        xmax = xmax.max(x);
        ymax = ymax.max(y);
    }
    PixelBox::new(xmin, ymin, xmax, ymax)
}

/// Divides a pixel box by the image size.
pub fn normalize_box<T: Scalar>(b: &PixelBox<T>, width_px: u32, height_px: u32) -> NormalizedBox<T> {
    let w = T::lit(width_px as f64);
    let h = T::lit(height_px as f64);
    let two = T::lit(2.0);
    NormalizedBox {
        cx: (b.xmin + b.xmax) / (two * w),
        cy: (b.ymin + b.ymax) / (two * h),
        w: (b.xmax - b.xmin) / w,
        h: (b.ymax - b.ymin) / h,
    }
}

/// Collapses every class label to the single object class `0`.
pub fn remap_to_single_class<T: Scalar>(annotations: Vec<Annotation<T>>) -> Vec<Annotation<T>> {
    annotations
        .into_iter()
        .map(|a| Annotation { class_id: 0, ..a })
        .collect()
}

/// A label line that could not be turned into an annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIssue {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedLabels<A = Annotation> {
    pub items: Vec<A>,
    pub issues: Vec<LineIssue>,
}

fn parse_fields<T: Scalar>(fields: &[&str]) -> std::result::Result<Vec<T>, String> {
    fields
        .iter()
        .map(|f| match f.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(T::lit(v)),
            _ => Err(format!("`{f}` is not a finite number")),
        })
        .collect()
}

fn parse_class(field: &str) -> std::result::Result<u32, String> {
    field
        .parse::<u32>()
        .map_err(|_| format!("class id `{field}` is not a non-negative integer"))
}

fn checked_box<T: Scalar>(b: NormalizedBox<T>) -> std::result::Result<NormalizedBox<T>, String> {
    let v = b.violations();
    if v.is_empty() {
        Ok(b.clamped())
    } else {
        Err(v.iter().map(|x| x.rule.as_str()).collect::<Vec<_>>().join("; "))
    }
}

fn parse_lines<A>(
    text: &str,
    mut parse_line: impl FnMut(&[&str]) -> std::result::Result<A, String>,
) -> ParsedLabels<A> {
    let mut out = ParsedLabels {
        items: Vec::new(),
        issues: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        match parse_line(&fields) {
            Ok(a) => out.items.push(a),
            Err(message) => out.issues.push(LineIssue {
                line: i + 1,
                message,
            }),
        }
    }
    out
}

/// Parses YOLO `class cx cy w h` lines. Malformed lines are skipped and
/// reported; blank lines are ignored.
pub fn parse_yolo_label_file<T: Scalar>(text: &str) -> ParsedLabels<Annotation<T>> {
    parse_lines(text, |fields| {
        if fields.len() != 5 {
            return Err(format!("expected 5 fields, found {}", fields.len()));
        }
        let class_id = parse_class(fields[0])?;
        let v = parse_fields::<T>(&fields[1..])?;
        let bbox = checked_box(NormalizedBox::new(v[0], v[1], v[2], v[3]))?;
        Ok(Annotation::new(class_id, bbox))
    })
}

/// Writes annotations as YOLO lines with six decimals.
pub fn serialize_yolo<T: Scalar>(annotations: &[Annotation<T>]) -> String {
    let mut out = String::new();
    for a in annotations {
        let b = &a.bbox;
        writeln!(
            out,
            "{} {:.6} {:.6} {:.6} {:.6}",
            a.class_id,
            b.cx.to_f64_lossy(),
            b.cy.to_f64_lossy(),
            b.w.to_f64_lossy(),
            b.h.to_f64_lossy()
        )
        .expect("writing to String cannot fail");
    }
    out
}

/// Prediction line in YOLO layout with a trailing confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionLine<T = f64> {
    pub class_id: u32,
    pub bbox: NormalizedBox<T>,
    pub confidence: T,
}

/// Parses `class cx cy w h conf` prediction lines.
pub fn parse_prediction_file<T: Scalar>(text: &str) -> ParsedLabels<PredictionLine<T>> {
    parse_lines(text, |fields| {
        if fields.len() != 6 {
            return Err(format!("expected 6 fields, found {}", fields.len()));
        }
        let class_id = parse_class(fields[0])?;
        let v = parse_fields::<T>(&fields[1..])?;
        let bbox = checked_box(NormalizedBox::new(v[0], v[1], v[2], v[3]))?;
        let confidence = v[4];
        if confidence < T::zero() || confidence > T::one() {
            return Err(format!("confidence {confidence} out of [0,1]"));
        }
        Ok(PredictionLine {
            class_id,
            bbox,
            confidence,
        })
    })
}

/// Converts one source's native label files into annotations.
pub trait SourceAdapter: Send + Sync {
    fn name(&self) -> &'static str;

    /// Label file for an image, given the source root and the image path
    /// relative to `<root>/images`.
    fn label_path(&self, root: &Path, image_rel: &Path) -> PathBuf;

    fn parse(&self, text: &str, width_px: u32, height_px: u32) -> ParsedLabels;
}

fn sibling_label(root: &Path, image_rel: &Path, ext: &str) -> PathBuf {
    root.join("labels").join(image_rel).with_extension(ext)
}

/// Native YOLO text labels under `<root>/labels`.
pub struct YoloAdapter;

impl SourceAdapter for YoloAdapter {
    fn name(&self) -> &'static str {
        "yolo"
    }

    fn label_path(&self, root: &Path, image_rel: &Path) -> PathBuf {
        sibling_label(root, image_rel, "txt")
    }

    fn parse(&self, text: &str, _width_px: u32, _height_px: u32) -> ParsedLabels {
        parse_yolo_label_file(text)
    }
}

/// Pixel polygons, one per line: `class x1 y1 x2 y2 x3 y3 ...`.
pub struct PolygonAdapter;

fn pixel_shape_to_annotation(
    class_id: u32,
    shape: Result<PixelBox>,
    width_px: u32,
    height_px: u32,
) -> std::result::Result<Annotation, String> {
    let pb = shape.map_err(|e| e.to_string())?;
    let bbox = checked_box(normalize_box(&pb, width_px, height_px))?;
    Ok(Annotation::new(class_id, bbox))
}

fn enclose(points: Vec<(f64, f64)>, width_px: u32, height_px: u32) -> Result<PixelBox> {
    let poly = PixelPolygon::new(points)?.clamp_to_image(width_px, height_px)?;
    polygon_to_box(&poly)
}

impl SourceAdapter for PolygonAdapter {
    fn name(&self) -> &'static str {
        "polygon"
    }

    fn label_path(&self, root: &Path, image_rel: &Path) -> PathBuf {
        sibling_label(root, image_rel, "txt")
    }

    fn parse(&self, text: &str, width_px: u32, height_px: u32) -> ParsedLabels {
        parse_lines(text, |fields| {
            let class_id = parse_class(fields[0])?;
            let coords = parse_fields::<f64>(&fields[1..])?;
            if coords.len() % 2 != 0 {
                return Err("odd number of polygon coordinates".into());
            }
            let points = coords.chunks(2).map(|p| (p[0], p[1])).collect();
            pixel_shape_to_annotation(class_id, enclose(points, width_px, height_px), width_px, height_px)
        })
    }
}

/// Pascal-VOC style XML with `<bndbox>` rectangles or `<polygon>` contours.
///
/// Polygons may be written as `<x1>/<y1>/<x2>/...` children or as repeated
/// `<pt><x/><y/></pt>` elements. Class names are not retained.
pub struct VocXmlAdapter;

impl VocXmlAdapter {
    fn parse_document(text: &str, width_px: u32, height_px: u32) -> ParsedLabels {
        let mut out = ParsedLabels {
            items: Vec::new(),
            issues: Vec::new(),
        };
        let doc = match roxmltree::Document::parse(text) {
            Ok(d) => d,
            Err(e) => {
                out.issues.push(LineIssue {
                    line: e.pos().row as usize,
                    message: format!("malformed XML: {e}"),
                });
                return out;
            }
        };
        for obj in doc.descendants().filter(|n| n.has_tag_name("object")) {
            let line = doc.text_pos_at(obj.range().start).row as usize;
            match Self::parse_object(obj, width_px, height_px) {
                Ok(a) => out.items.push(a),
                Err(message) => out.issues.push(LineIssue { line, message }),
            }
        }
        out
    }

    fn number(node: roxmltree::Node<'_, '_>, tag: &str) -> std::result::Result<f64, String> {
        let child = node
            .children()
            .find(|c| c.has_tag_name(tag))
            .ok_or_else(|| format!("missing <{tag}>"))?;
        let text = child.text().unwrap_or("").trim();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("<{tag}> value `{text}` is not a finite number")),
        }
    }

    fn parse_object(
        obj: roxmltree::Node<'_, '_>,
        width_px: u32,
        height_px: u32,
    ) -> std::result::Result<Annotation, String> {
        if let Some(bb) = obj.children().find(|c| c.has_tag_name("bndbox")) {
            let xmin = Self::number(bb, "xmin")?;
            let ymin = Self::number(bb, "ymin")?;
            let xmax = Self::number(bb, "xmax")?;
            let ymax = Self::number(bb, "ymax")?;
            let corners = vec![(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)];
            return pixel_shape_to_annotation(0, enclose(corners, width_px, height_px), width_px, height_px);
        }
        let poly = obj
            .children()
            .find(|c| c.has_tag_name("polygon"))
            .ok_or("object has neither <bndbox> nor <polygon>")?;
        let mut points = Vec::new();
        let pts: Vec<_> = poly.children().filter(|c| c.has_tag_name("pt")).collect();
        if !pts.is_empty() {
            for pt in pts {
                points.push((Self::number(pt, "x")?, Self::number(pt, "y")?));
            }
        } else {
            let mut k = 1;
            while poly.children().any(|c| c.has_tag_name(format!("x{k}").as_str())) {
                points.push((
                    Self::number(poly, &format!("x{k}"))?,
                    Self::number(poly, &format!("y{k}"))?,
                ));
                k += 1;
            }
        }
        pixel_shape_to_annotation(0, enclose(points, width_px, height_px), width_px, height_px)
    }
}

impl SourceAdapter for VocXmlAdapter {
    fn name(&self) -> &'static str {
        "voc_xml"
    }

    fn label_path(&self, root: &Path, image_rel: &Path) -> PathBuf {
        sibling_label(root, image_rel, "xml")
    }

    fn parse(&self, text: &str, width_px: u32, height_px: u32) -> ParsedLabels {
        Self::parse_document(text, width_px, height_px)
    }
}

pub const ADAPTER_NAMES: [&str; 3] = ["yolo", "polygon", "voc_xml"];

pub fn adapter_for(name: &str) -> Option<Box<dyn SourceAdapter>> {
    match name {
        "yolo" => Some(Box::new(YoloAdapter)),
        "polygon" => Some(Box::new(PolygonAdapter)),
        "voc_xml" => Some(Box::new(VocXmlAdapter)),
        _ => None,
    }
}
