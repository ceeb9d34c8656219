//! Annotation ingest: PASCAL VOC XML and flat labels CSV.
//!
//! All operations are pure functions over immutable values. Parsed boxes
//! either satisfy the full `BBox2D` invariants against their image or parsing
//! fails with a named error — coordinates are never silently clamped.

use std::collections::HashMap;
use std::fmt::Write as _;

use quick_xml::events::Event;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotError {
    #[error("malformed xml: {0}")]
    MalformedXml(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("unknown class name '{0}'")]
    UnknownClass(String),
    #[error("csv header mismatch: expected '{expected}', got '{got}'")]
    HeaderMismatch { expected: String, got: String },
    #[error("csv row {line}: {reason}")]
    RowParseError { line: usize, reason: String },
    #[error("inconsistent image size for '{0}'")]
    InconsistentImageSize(String),
    #[error("empty input")]
    EmptyInput,
}

/// Object classes the lot model cares about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Vehicle,
    Pillar,
}

impl ClassLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Vehicle => "vehicle",
            ClassLabel::Pillar => "pillar",
        }
    }
}

/// Maps source annotation labels onto the fixed class vocabulary.
///
/// Annotation tools emit varying names ("car", "Car", "column"); the default
/// map accepts the common aliases case-insensitively.
#[derive(Debug, Clone)]
pub struct ClassMap {
    aliases: Vec<(String, ClassLabel)>,
}

impl Default for ClassMap {
    fn default() -> Self {
        Self {
            aliases: vec![
                ("vehicle".into(), ClassLabel::Vehicle),
                ("car".into(), ClassLabel::Vehicle),
                ("pillar".into(), ClassLabel::Pillar),
                ("column".into(), ClassLabel::Pillar),
            ],
        }
    }
}

impl ClassMap {
    pub fn new(aliases: Vec<(String, ClassLabel)>) -> Self {
        Self { aliases }
    }

    pub fn resolve(&self, name: &str) -> Option<ClassLabel> {
        let lower = name.trim().to_ascii_lowercase();
        self.aliases
            .iter()
            .find(|(alias, _)| *alias == lower)
            .map(|(_, label)| *label)
    }
}

/// One detected object in image pixel coordinates.
///
/// Construction enforces strictly positive extent; containment within the
/// owning image is checked when the box joins an [`Annotation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2D {
    pub class_label: ClassLabel,
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox2D {
    pub fn new(
        class_label: ClassLabel,
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
    ) -> Result<Self, AnnotError> {
        for v in [xmin, ymin, xmax, ymax] {
            if !v.is_finite() {
                return Err(AnnotError::InvalidBox(format!(
                    "non-finite coordinate in ({xmin}, {ymin}, {xmax}, {ymax})"
                )));
            }
        }
        if xmin >= xmax || ymin >= ymax {
            return Err(AnnotError::InvalidBox(format!(
                "box ({xmin}, {ymin}, {xmax}, {ymax}) has non-positive extent"
            )));
        }
        Ok(Self {
            class_label,
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    fn check_bounds(&self, width: u32, height: u32) -> Result<(), AnnotError> {
        let (w, h) = (f64::from(width), f64::from(height));
        // Touching the border (coordinate == width or height) is valid.
        if self.xmin < 0.0 || self.ymin < 0.0 || self.xmax > w || self.ymax > h {
            return Err(AnnotError::InvalidBox(format!(
                "box ({}, {}, {}, {}) outside {}x{} image",
                self.xmin, self.ymin, self.xmax, self.ymax, width, height
            )));
        }
        Ok(())
    }
}

/// All boxes of one image, in document order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub filename: String,
    pub image_width: u32,
    pub image_height: u32,
    pub boxes: Vec<BBox2D>,
}

impl Annotation {
    pub fn new(
        filename: String,
        image_width: u32,
        image_height: u32,
        boxes: Vec<BBox2D>,
    ) -> Result<Self, AnnotError> {
        if image_width == 0 || image_height == 0 {
            return Err(AnnotError::SchemaViolation(format!(
                "image size {image_width}x{image_height} must be positive"
            )));
        }
        for b in &boxes {
            b.check_bounds(image_width, image_height)?;
        }
        Ok(Self {
            filename,
            image_width,
            image_height,
            boxes,
        })
    }
}

/// Deterministic train/test partition of an annotation set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Annotation>,
    pub test: Vec<Annotation>,
    pub seed: u64,
}

// --------------------------------------------------------------------------
// PASCAL VOC XML
// --------------------------------------------------------------------------

/// Parse the PASCAL VOC XML subset: `annotation/filename`,
/// `annotation/size/{width,height}` and any number of
/// `annotation/object/{name, bndbox/{xmin,ymin,xmax,ymax}}` entries.
///
/// Elements outside the subset (pose, truncated, ...) are ignored. Box order
/// follows document order.
pub fn parse_voc_xml(document: &[u8], classes: &ClassMap) -> Result<Annotation, AnnotError> {
    let mut reader = quick_xml::Reader::from_reader(document);
    let mut buf = Vec::new();
    let mut path: Vec<String> = Vec::new();

    let mut filename: Option<String> = None;
    let mut width: Option<String> = None;
    let mut height: Option<String> = None;

    let mut current: Option<PendingObject> = None;
    let mut boxes: Vec<BBox2D> = Vec::new();
    let mut text = String::new();

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| AnnotError::MalformedXml(e.to_string()))?;
        match event {
            Event::Start(ref e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if path == ["annotation"] && name == "object" {
                    current = Some(PendingObject::default());
                }
                path.push(name);
                text.clear();
            }
            Event::Text(ref t) => {
                let piece = t
                    .xml10_content()
                    .map_err(|e| AnnotError::MalformedXml(e.to_string()))?;
                text.push_str(&piece);
            }
            Event::GeneralRef(ref r) => {
                if let Some(c) = r
                    .resolve_char_ref()
                    .map_err(|e| AnnotError::MalformedXml(e.to_string()))?
                {
                    text.push(c);
                } else {
                    let name = r
                        .decode()
                        .map_err(|e| AnnotError::MalformedXml(e.to_string()))?;
                    match name.as_ref() {
                        "amp" => text.push('&'),
                        "lt" => text.push('<'),
                        "gt" => text.push('>'),
                        "quot" => text.push('"'),
                        "apos" => text.push('\''),
                        other => {
                            return Err(AnnotError::MalformedXml(format!(
                                "undefined entity &{other};"
                            )))
                        }
                    }
                }
            }
            Event::End(_) => {
                let leaf = path.pop().unwrap_or_default();
                let value = text.trim().to_string();
                text.clear();
                match (path.as_slice(), leaf.as_str()) {
                    ([a], "filename") if a == "annotation" => filename = Some(value),
                    ([a, s], "width") if a == "annotation" && s == "size" => width = Some(value),
                    ([a, s], "height") if a == "annotation" && s == "size" => height = Some(value),
                    ([a, o], "name") if a == "annotation" && o == "object" => {
                        if let Some(obj) = current.as_mut() {
                            obj.name = Some(value);
                        }
                    }
                    ([a, o, b], coord) if a == "annotation" && o == "object" && b == "bndbox" => {
                        if let Some(obj) = current.as_mut() {
                            match coord {
                                "xmin" => obj.xmin = Some(value),
                                "ymin" => obj.ymin = Some(value),
                                "xmax" => obj.xmax = Some(value),
                                "ymax" => obj.ymax = Some(value),
                                _ => {}
                            }
                        }
                    }
                    ([a], "object") if a == "annotation" => {
                        let obj = current.take().ok_or_else(|| {
                            AnnotError::SchemaViolation("unexpected </object>".into())
                        })?;
                        boxes.push(finish_object(obj, classes)?);
                    }
                    _ => {}
                }
            }
            Event::Empty(ref e) => {
                // A self-closing required element carries no content.
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if path.last().map(String::as_str) == Some("annotation") && name == "object" {
                    return Err(AnnotError::SchemaViolation(
                        "object element is empty".into(),
                    ));
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    let filename = filename
        .ok_or_else(|| AnnotError::SchemaViolation("annotation/filename missing".into()))?;
    let width = parse_dim(width, "annotation/size/width")?;
    let height = parse_dim(height, "annotation/size/height")?;
    Annotation::new(filename, width, height, boxes)
}

fn parse_dim(value: Option<String>, what: &str) -> Result<u32, AnnotError> {
    let raw = value.ok_or_else(|| AnnotError::SchemaViolation(format!("{what} missing")))?;
    raw.parse::<u32>().map_err(|_| {
        AnnotError::SchemaViolation(format!("{what} is not a positive integer: '{raw}'"))
    })
}

#[derive(Default)]
struct PendingObject {
    name: Option<String>,
    xmin: Option<String>,
    ymin: Option<String>,
    xmax: Option<String>,
    ymax: Option<String>,
}

fn finish_object(obj: PendingObject, classes: &ClassMap) -> Result<BBox2D, AnnotError> {
    let name = obj
        .name
        .ok_or_else(|| AnnotError::SchemaViolation("object/name missing".into()))?;
    let class = classes
        .resolve(&name)
        .ok_or_else(|| AnnotError::UnknownClass(name.clone()))?;
    let coord = |v: Option<String>, what: &str| -> Result<f64, AnnotError> {
        let raw = v.ok_or_else(|| AnnotError::SchemaViolation(format!("bndbox/{what} missing")))?;
        raw.trim()
            .parse::<f64>()
            .map_err(|_| AnnotError::SchemaViolation(format!("bndbox/{what} not numeric: '{raw}'")))
    };
    BBox2D::new(
        class,
        coord(obj.xmin, "xmin")?,
        coord(obj.ymin, "ymin")?,
        coord(obj.xmax, "xmax")?,
        coord(obj.ymax, "ymax")?,
    )
}

/// Emit the VOC XML subset accepted by [`parse_voc_xml`]. Deterministic, LF
/// line endings, coordinates in shortest round-trip form.
pub fn write_voc_xml(annotation: &Annotation) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("<annotation>\n");
    let _ = writeln!(
        out,
        "  <filename>{}</filename>",
        xml_escape(&annotation.filename)
    );
    out.push_str("  <size>\n");
    let _ = writeln!(out, "    <width>{}</width>", annotation.image_width);
    let _ = writeln!(out, "    <height>{}</height>", annotation.image_height);
    out.push_str("  </size>\n");
    for b in &annotation.boxes {
        out.push_str("  <object>\n");
        let _ = writeln!(out, "    <name>{}</name>", b.class_label.as_str());
        out.push_str("    <bndbox>\n");
        let _ = writeln!(out, "      <xmin>{}</xmin>", b.xmin);
        let _ = writeln!(out, "      <ymin>{}</ymin>", b.ymin);
        let _ = writeln!(out, "      <xmax>{}</xmax>", b.xmax);
        let _ = writeln!(out, "      <ymax>{}</ymax>", b.ymax);
        out.push_str("    </bndbox>\n");
        out.push_str("  </object>\n");
    }
    out.push_str("</annotation>\n");
    out.into_bytes()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

// --------------------------------------------------------------------------
// Labels CSV
// --------------------------------------------------------------------------

pub const CSV_HEADER: &str = "filename,width,height,class,xmin,ymin,xmax,ymax";

/// Parse a labels CSV into annotations grouped by filename.
///
/// Rows for the same file may appear anywhere in the document; groups keep
/// first-occurrence order and per-file boxes keep row order.
pub fn parse_labels_csv(
    document: &[u8],
    classes: &ClassMap,
) -> Result<Vec<Annotation>, AnnotError> {
    let text = std::str::from_utf8(document).map_err(|e| AnnotError::RowParseError {
        line: 0,
        reason: format!("not utf-8: {e}"),
    })?;
    let mut lines = text.lines().enumerate();

    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(AnnotError::HeaderMismatch {
                expected: CSV_HEADER.into(),
                got: header.trim_end_matches('\r').into(),
            })
        }
        None => {
            return Err(AnnotError::HeaderMismatch {
                expected: CSV_HEADER.into(),
                got: String::new(),
            })
        }
    }

    // (filename, width, height, boxes) in first-occurrence order.
    let mut groups: Vec<(String, u32, u32, Vec<BBox2D>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    for (idx, raw_line) in lines {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields = split_csv_line(line).map_err(|reason| AnnotError::RowParseError {
            line: line_no,
            reason,
        })?;
        if fields.len() != 8 {
            return Err(AnnotError::RowParseError {
                line: line_no,
                reason: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let filename = fields[0].clone();
        let width = parse_row_u32(&fields[1], line_no, "width")?;
        let height = parse_row_u32(&fields[2], line_no, "height")?;
        let class = classes
            .resolve(&fields[3])
            .ok_or_else(|| AnnotError::UnknownClass(fields[3].clone()))?;
        let coords: Vec<f64> = fields[4..8]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| AnnotError::RowParseError {
                        line: line_no,
                        reason: format!("non-numeric coordinate '{f}'"),
                    })
            })
            .collect::<Result<_, _>>()?;
        let bbox = BBox2D::new(class, coords[0], coords[1], coords[2], coords[3])?;

        match index.get(&filename) {
            Some(&i) => {
                let group = &mut groups[i];
                if group.1 != width || group.2 != height {
                    return Err(AnnotError::InconsistentImageSize(filename));
                }
                group.3.push(bbox);
            }
            None => {
                index.insert(filename.clone(), groups.len());
                groups.push((filename, width, height, vec![bbox]));
            }
        }
    }

    groups
        .into_iter()
        .map(|(name, w, h, boxes)| Annotation::new(name, w, h, boxes))
        .collect()
}

fn parse_row_u32(field: &str, line: usize, what: &str) -> Result<u32, AnnotError> {
    field
        .trim()
        .parse::<u32>()
        .map_err(|_| AnnotError::RowParseError {
            line,
            reason: format!("{what} is not a positive integer: '{field}'"),
        })
}

/// Emit the exact CSV format accepted by [`parse_labels_csv`]: LF endings,
/// shortest round-trip float form, minimal quoting. Byte-deterministic.
pub fn write_labels_csv(annotations: &[Annotation]) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for a in annotations {
        for b in &a.boxes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                csv_quote(&a.filename),
                a.image_width,
                a.image_height,
                b.class_label.as_str(),
                b.xmin,
                b.ymin,
                b.xmax,
                b.ymax
            );
        }
    }
    out.into_bytes()
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn split_csv_line(line: &str) -> Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut chars = line.chars().peekable();
    let mut in_quotes = false;
    while let Some(c) = chars.next() {
        if in_quotes {
            match c {
                '"' if chars.peek() == Some(&'"') => {
                    chars.next();
                    field.push('"');
                }
                '"' => in_quotes = false,
                other => field.push(other),
            }
        } else {
            match c {
                '"' if field.is_empty() => in_quotes = true,
                '"' => return Err("stray quote inside unquoted field".into()),
                ',' => fields.push(std::mem::take(&mut field)),
                other => field.push(other),
            }
        }
    }
    if in_quotes {
        return Err("unterminated quoted field".into());
    }
    fields.push(field);
    Ok(fields)
}

// --------------------------------------------------------------------------
// Normalization and splitting
// --------------------------------------------------------------------------

/// Rescale an annotation to a square `target` x `target` canvas.
///
/// Coordinates scale by (target/width, target/height). Boxes whose scaled
/// extent drops below one pixel are dropped; the second tuple element reports
/// how many. Float dust at the far border is clamped to `target`.
pub fn normalize_to_size(annotation: &Annotation, target: u32) -> (Annotation, usize) {
    assert!(target > 0, "target size must be positive");
    let t = f64::from(target);
    let sx = t / f64::from(annotation.image_width);
    let sy = t / f64::from(annotation.image_height);

    let mut dropped = 0;
    let mut boxes = Vec::with_capacity(annotation.boxes.len());
    for b in &annotation.boxes {
        let xmin = (b.xmin * sx).min(t);
        let xmax = (b.xmax * sx).min(t);
        let ymin = (b.ymin * sy).min(t);
        let ymax = (b.ymax * sy).min(t);
        if xmax - xmin < 1.0 || ymax - ymin < 1.0 {
            dropped += 1;
            continue;
        }
        boxes.push(BBox2D {
            class_label: b.class_label,
            xmin,
            ymin,
            xmax,
            ymax,
        });
    }
    let normalized = Annotation {
        filename: annotation.filename.clone(),
        image_width: target,
        image_height: target,
        boxes,
    };
    (normalized, dropped)
}

/// Deterministic seeded shuffle, then the first floor(fraction * N) items
/// form the train set. Reproducible given input order and seed.
pub fn split_dataset(
    annotations: Vec<Annotation>,
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, AnnotError> {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train fraction must be in (0, 1)"
    );
    if annotations.is_empty() {
        return Err(AnnotError::EmptyInput);
    }
    let n = annotations.len();
    let train_len = (train_fraction * n as f64).floor() as usize;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut items: Vec<Option<Annotation>> = annotations.into_iter().map(Some).collect();
    let mut train = Vec::with_capacity(train_len);
    let mut test = Vec::with_capacity(n - train_len);
    for (rank, &i) in order.iter().enumerate() {
        let item = items[i].take().expect("each index taken once");
        if rank < train_len {
            train.push(item);
        } else {
            test.push(item);
        }
    }
    Ok(DatasetSplit { train, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn classes() -> ClassMap {
        ClassMap::default()
    }

    const ONE_CAR: &str = r#"<?xml version="1.0"?>
<annotation>
  <filename>img1.jpg</filename>
  <size><width>640</width><height>640</height></size>
  <object>
    <name>car</name>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>50</xmax><ymax>80</ymax></bndbox>
  </object>
</annotation>"#;

    #[test]
    fn voc_single_object() {
        let a = parse_voc_xml(ONE_CAR.as_bytes(), &classes()).unwrap();
        assert_eq!(a.filename, "img1.jpg");
        assert_eq!((a.image_width, a.image_height), (640, 640));
        assert_eq!(a.boxes.len(), 1);
        assert_eq!(a.boxes[0].class_label, ClassLabel::Vehicle);
        assert_eq!(
            (
                a.boxes[0].xmin,
                a.boxes[0].ymin,
                a.boxes[0].xmax,
                a.boxes[0].ymax
            ),
            (10.0, 20.0, 50.0, 80.0)
        );
    }

    #[test]
    fn voc_inverted_box_rejected() {
        let doc = ONE_CAR
            .replace("<xmin>10</xmin>", "<xmin>50</xmin>")
            .replace("<xmax>50</xmax>", "<xmax>10</xmax>");
        assert!(matches!(
            parse_voc_xml(doc.as_bytes(), &classes()),
            Err(AnnotError::InvalidBox(_))
        ));
    }

    #[test]
    fn voc_zero_objects() {
        let doc = r#"<annotation><filename>empty.jpg</filename>
            <size><width>640</width><height>640</height></size></annotation>"#;
        let a = parse_voc_xml(doc.as_bytes(), &classes()).unwrap();
        assert!(a.boxes.is_empty());
    }

    #[test]
    fn voc_unknown_class() {
        let doc = ONE_CAR.replace("car", "bicycle");
        assert_eq!(
            parse_voc_xml(doc.as_bytes(), &classes()),
            Err(AnnotError::UnknownClass("bicycle".into()))
        );
    }

    #[test]
    fn voc_missing_size_is_schema_violation() {
        let doc = r#"<annotation><filename>x.jpg</filename></annotation>"#;
        assert!(matches!(
            parse_voc_xml(doc.as_bytes(), &classes()),
            Err(AnnotError::SchemaViolation(_))
        ));
    }

    #[test]
    fn voc_out_of_bounds_box() {
        let doc = ONE_CAR.replace("<xmax>50</xmax>", "<xmax>700</xmax>");
        assert!(matches!(
            parse_voc_xml(doc.as_bytes(), &classes()),
            Err(AnnotError::InvalidBox(_))
        ));
    }

    #[test]
    fn box_touching_the_border_is_valid() {
        let doc = ONE_CAR.replace("<xmax>50</xmax>", "<xmax>640</xmax>");
        let a = parse_voc_xml(doc.as_bytes(), &classes()).unwrap();
        assert_eq!(a.boxes[0].xmax, 640.0);
    }

    #[test]
    fn voc_not_xml() {
        assert!(matches!(
            parse_voc_xml(b"<annotation><object></annotation>", &classes()),
            Err(AnnotError::MalformedXml(_))
        ));
    }

    #[test]
    fn voc_writer_round_trips() {
        let a = parse_voc_xml(ONE_CAR.as_bytes(), &classes()).unwrap();
        let bytes = write_voc_xml(&a);
        let b = parse_voc_xml(&bytes, &classes()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_groups_by_filename() {
        let doc = "filename,width,height,class,xmin,ymin,xmax,ymax\n\
            img1.jpg,640,640,vehicle,1,2,3,4\n\
            img1.jpg,640,640,pillar,5,6,7,8\n\
            img2.jpg,320,240,vehicle,0,0,10,10\n";
        let list = parse_labels_csv(doc.as_bytes(), &classes()).unwrap();
        assert_eq!(list.len(), 2);
        assert_eq!(list[0].boxes.len(), 2);
        assert_eq!(list[1].boxes.len(), 1);
    }

    #[test]
    fn csv_header_only_is_empty() {
        let doc = "filename,width,height,class,xmin,ymin,xmax,ymax\n";
        assert!(parse_labels_csv(doc.as_bytes(), &classes())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn csv_header_mismatch() {
        assert!(matches!(
            parse_labels_csv(b"file,w,h,c,a,b,c,d\n", &classes()),
            Err(AnnotError::HeaderMismatch { .. })
        ));
    }

    #[test]
    fn csv_inconsistent_size() {
        let doc = "filename,width,height,class,xmin,ymin,xmax,ymax\n\
            img1.jpg,640,640,vehicle,1,2,3,4\n\
            img1.jpg,480,640,vehicle,1,2,3,4\n";
        assert_eq!(
            parse_labels_csv(doc.as_bytes(), &classes()),
            Err(AnnotError::InconsistentImageSize("img1.jpg".into()))
        );
    }

    #[test]
    fn csv_non_numeric_coordinate() {
        let doc = "filename,width,height,class,xmin,ymin,xmax,ymax\n\
            img1.jpg,640,640,vehicle,a,2,3,4\n";
        // Line numbers count document lines, header included.
        assert!(matches!(
            parse_labels_csv(doc.as_bytes(), &classes()),
            Err(AnnotError::RowParseError { line: 2, .. })
        ));
    }

    #[test]
    fn csv_write_is_deterministic() {
        let a = parse_voc_xml(ONE_CAR.as_bytes(), &classes()).unwrap();
        assert_eq!(
            write_labels_csv(std::slice::from_ref(&a)),
            write_labels_csv(&[a])
        );
    }

    #[test]
    fn csv_empty_list_is_header_only() {
        assert_eq!(
            write_labels_csv(&[]),
            format!("{CSV_HEADER}\n").into_bytes()
        );
    }

    #[test]
    fn normalize_halves_coordinates() {
        let a = Annotation::new(
            "big.jpg".into(),
            1280,
            1280,
            vec![BBox2D::new(ClassLabel::Vehicle, 100.0, 200.0, 300.0, 400.0).unwrap()],
        )
        .unwrap();
        let (n, dropped) = normalize_to_size(&a, 640);
        assert_eq!(dropped, 0);
        assert_eq!((n.image_width, n.image_height), (640, 640));
        let b = &n.boxes[0];
        assert_eq!(
            (b.xmin, b.ymin, b.xmax, b.ymax),
            (50.0, 100.0, 150.0, 200.0)
        );
    }

    #[test]
    fn normalize_at_target_is_identity() {
        let a = parse_voc_xml(ONE_CAR.as_bytes(), &classes()).unwrap();
        let (n, dropped) = normalize_to_size(&a, 640);
        assert_eq!(dropped, 0);
        assert_eq!(n, a);
    }

    #[test]
    fn normalize_drops_subpixel_boxes() {
        let a = Annotation::new(
            "huge.jpg".into(),
            6400,
            6400,
            vec![BBox2D::new(ClassLabel::Vehicle, 0.0, 0.0, 5.0, 5.0).unwrap()],
        )
        .unwrap();
        let (n, dropped) = normalize_to_size(&a, 640);
        assert_eq!(dropped, 1);
        assert!(n.boxes.is_empty());
    }

    #[test]
    fn split_150_at_three_quarters() {
        let items: Vec<Annotation> = (0..150)
            .map(|i| Annotation::new(format!("img{i}.jpg"), 640, 640, vec![]).unwrap())
            .collect();
        let split = split_dataset(items, 0.75, 7).unwrap();
        assert_eq!(split.train.len(), 112);
        assert_eq!(split.test.len(), 38);
    }

    #[test]
    fn split_four_items() {
        let items: Vec<Annotation> = (0..4)
            .map(|i| Annotation::new(format!("img{i}.jpg"), 640, 640, vec![]).unwrap())
            .collect();
        let split = split_dataset(items, 0.75, 1).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (3, 1));
    }

    #[test]
    fn split_empty_input() {
        assert_eq!(split_dataset(vec![], 0.75, 1), Err(AnnotError::EmptyInput));
    }

    #[test]
    fn split_deterministic_per_seed() {
        let items: Vec<Annotation> = (0..40)
            .map(|i| Annotation::new(format!("img{i}.jpg"), 640, 640, vec![]).unwrap())
            .collect();
        let a = split_dataset(items.clone(), 0.75, 42).unwrap();
        let b = split_dataset(items, 0.75, 42).unwrap();
        assert_eq!(a, b);
    }

    prop_compose! {
        fn arb_bbox()(
            class in prop_oneof![Just(ClassLabel::Vehicle), Just(ClassLabel::Pillar)],
            xmin in 0.0..600.0f64,
            ymin in 0.0..600.0f64,
            w in 1.0..40.0f64,
            h in 1.0..40.0f64,
        ) -> BBox2D {
            BBox2D::new(class, xmin, ymin, xmin + w, ymin + h).unwrap()
        }
    }

    prop_compose! {
        fn arb_annotation()(
            name in "[a-z][a-z0-9_]{0,11}\\.(jpg|png)",
            boxes in prop::collection::vec(arb_bbox(), 0..6),
        ) -> Annotation {
            Annotation::new(name, 640, 640, boxes).unwrap()
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip(mut annotations in prop::collection::vec(arb_annotation(), 0..8)) {
            // Grouping keys on filename, so deduplicate and drop box-less
            // entries (they have no rows to carry them).
            annotations.sort_by(|a, b| a.filename.cmp(&b.filename));
            annotations.dedup_by(|a, b| a.filename == b.filename);
            annotations.retain(|a| !a.boxes.is_empty());
            let bytes = write_labels_csv(&annotations);
            let parsed = parse_labels_csv(&bytes, &ClassMap::default()).unwrap();
            prop_assert_eq!(parsed, annotations);
        }

        #[test]
        fn normalize_idempotent(a in arb_annotation(), target in 1u32..2000) {
            let (once, _) = normalize_to_size(&a, target);
            let (twice, dropped) = normalize_to_size(&once, target);
            prop_assert_eq!(dropped, 0);
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn split_partitions(n in 1usize..60, seed in 0u64..1000, frac in 0.05f64..0.95) {
            let items: Vec<Annotation> = (0..n)
                .map(|i| Annotation::new(format!("img{i}.jpg"), 64, 64, vec![]).unwrap())
                .collect();
            let split = split_dataset(items.clone(), frac, seed).unwrap();
            prop_assert_eq!(split.train.len(), (frac * n as f64).floor() as usize);
            prop_assert_eq!(split.train.len() + split.test.len(), n);
            let mut all: Vec<String> = split
                .train
                .iter()
                .chain(split.test.iter())
                .map(|a| a.filename.clone())
                .collect();
            all.sort();
            let mut expected: Vec<String> = items.iter().map(|a| a.filename.clone()).collect();
            expected.sort();
            prop_assert_eq!(all, expected);
        }
    }
}
