//! File formats: FPM1 grids, COCO-style annotations, and JSON records for
//! chips, detections and pixel reports.
//!
//! FPM1 layout, all little-endian:
//!
//! | bytes | content                          |
//! |-------|----------------------------------|
//! | 4     | magic `FPM1`                     |
//! | 4     | width, `u32`                     |
//! | 4     | height, `u32`                    |
//! | 4·w·h | `f32` values, row-major, top row first |
//!
//! JSON writers round floats to 6 significant digits and sort nothing
//! themselves; callers pass records in their canonical order.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chipgen::FocusChip;
use crate::error::{Error, Result};
use crate::geometry::{BoxPx, Detection, Space};
use crate::maps::{Label, LabelMap, ProbMap};
use crate::pipeline::{PixelReport, Scene, SceneObject};

pub const FPM_MAGIC: &[u8; 4] = b"FPM1";
const FPM_HEADER: usize = 12;

/// Raw contents of an FPM1 file.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl Grid {
    pub fn to_prob_map(&self, name: &str) -> Result<ProbMap> {
        ProbMap::from_vec(
            self.width as usize,
            self.height as usize,
            self.values.clone(),
        )
        .map_err(|e| Error::Parse {
            path: name.into(),
            message: e.to_string(),
        })
    }

    pub fn to_label_map(&self, name: &str) -> Result<LabelMap> {
        let labels = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                Label::from_f32(v).ok_or_else(|| Error::Parse {
                    path: name.into(),
                    message: format!("cell {i} holds {v}, not a label in {{-1, 0, 1}}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LabelMap::from_vec(self.width as usize, self.height as usize, labels)
    }
}

impl From<&ProbMap> for Grid {
    fn from(m: &ProbMap) -> Self {
        Self {
            width: m.width() as u32,
            height: m.height() as u32,
            values: m.values().to_vec(),
        }
    }
}

impl From<&LabelMap> for Grid {
    fn from(m: &LabelMap) -> Self {
        Self {
            width: m.width() as u32,
            height: m.height() as u32,
            values: m.values().iter().map(|l| l.as_f32()).collect(),
        }
    }
}

pub fn encode_fpm(grid: &Grid) -> Result<Vec<u8>> {
    let n = grid.width as usize * grid.height as usize;
    if grid.values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: (grid.width as usize, grid.height as usize),
            actual: (grid.values.len(), 1),
        });
    }
    let mut out = Vec::with_capacity(FPM_HEADER + 4 * n);
    out.extend_from_slice(FPM_MAGIC);
    out.extend_from_slice(&grid.width.to_le_bytes());
    out.extend_from_slice(&grid.height.to_le_bytes());
    for v in &grid.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses FPM1 bytes; `name` labels errors. A short file is `Truncated`,
/// trailing bytes are a `PayloadMismatch`.
pub fn decode_fpm(bytes: &[u8], name: &str) -> Result<Grid> {
    if bytes.len() < 4 || &bytes[..4] != FPM_MAGIC {
        return Err(Error::BadMagic {
            path: name.into(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    }
    if bytes.len() < FPM_HEADER {
        return Err(Error::Truncated {
            path: name.into(),
            expected: FPM_HEADER as u64,
            actual: bytes.len() as u64,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (width, height) = (word(4), word(8));
    let expected = 4 * width as u64 * height as u64;
    let actual = (bytes.len() - FPM_HEADER) as u64;
    if actual < expected {
        return Err(Error::Truncated {
            path: name.into(),
            expected: FPM_HEADER as u64 + expected,
            actual: bytes.len() as u64,
        });
    }
    if actual > expected {
        return Err(Error::PayloadMismatch {
            path: name.into(),
            expected,
            actual,
        });
    }
    let values = bytes[FPM_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Grid {
        width,
        height,
        values,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_fpm(path: &Path, grid: &Grid) -> Result<()> {
    fs::write(path, encode_fpm(grid)?).map_err(io_err(path))
}

pub fn read_fpm(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_fpm(&bytes, &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub bbox: [f64; 4],
    pub category_id: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

/// The subset of a COCO annotation file this crate reads. Other fields are
/// ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoFile {
    pub images: Vec<CocoImage>,
    #[serde(default)]
    pub annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    pub categories: Vec<CocoCategory>,
}

/// Builds one scene per image, in file order. Boxes poking past the image
/// are clipped to it.
pub fn parse_annotations(text: &str, name: &str) -> Result<Vec<Scene>> {
    let file: CocoFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: name.into(),
        message: e.to_string(),
    })?;
    let mut index = BTreeMap::new();
    for (i, img) in file.images.iter().enumerate() {
        if index.insert(img.id, i).is_some() {
            return Err(Error::Parse {
                path: name.into(),
                message: format!("duplicate image id {}", img.id),
            });
        }
    }
    let mut objects: Vec<Vec<SceneObject>> = vec![Vec::new(); file.images.len()];
    let mut seen = HashSet::new();
    for ann in &file.annotations {
        let bad = |message: String| Error::Annotation {
            path: name.into(),
            id: ann.id,
            message,
        };
        if !seen.insert(ann.id) {
            return Err(bad("duplicate annotation id".into()));
        }
        let &slot = index
            .get(&ann.image_id)
            .ok_or_else(|| bad(format!("unknown image_id {}", ann.image_id)))?;
        let [x, y, w, h] = ann.bbox;
        if !(w > 0.0 && h > 0.0) || !(x.is_finite() && y.is_finite()) {
            return Err(bad(format!("malformed bbox {:?}", ann.bbox)));
        }
        let img = &file.images[slot];
        let bbox = BoxPx::new(x, y, w, h, Space::Original)
            .map_err(|e| bad(e.to_string()))?
            .clip(0.0, 0.0, img.width as f64, img.height as f64)
            .ok_or_else(|| bad(format!("bbox {:?} lies outside image {}", ann.bbox, img.id)))?;
        objects[slot].push(SceneObject {
            bbox,
            category: ann.category_id,
        });
    }
    file.images
        .iter()
        .zip(objects)
        .map(|(img, objs)| Scene::new(img.id, img.width, img.height, objs))
        .collect()
}

pub fn read_annotations(path: &Path) -> Result<Vec<Scene>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_annotations(&text, &path.display().to_string())
}

/// Inverse of [`parse_annotations`]; annotation ids are assigned 1.. in
/// scene order.
pub fn scenes_to_coco(scenes: &[Scene]) -> CocoFile {
    let mut annotations = Vec::new();
    let mut categories = std::collections::BTreeSet::new();
    for s in scenes {
        for o in &s.objects {
            categories.insert(o.category);
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id: s.image_id,
                bbox: o.bbox.to_array(),
                category_id: o.category,
            });
        }
    }
    CocoFile {
        images: scenes
            .iter()
            .map(|s| CocoImage {
                id: s.image_id,
                width: s.width,
                height: s.height,
            })
            .collect(),
        annotations,
        categories: categories
            .into_iter()
            .map(|id| CocoCategory {
                id,
                name: format!("category_{id}"),
            })
            .collect(),
    }
}

/// Rounds to 6 significant digits.
pub fn sig6(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.5e}").parse().expect("formatted float parses")
}

fn sig6_box(b: &BoxPx) -> [f64; 4] {
    b.to_array().map(sig6)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChipRecord {
    pub image_id: u64,
    pub id: u32,
    pub source_scale: u32,
    pub space: String,
    pub rect: [f64; 4],
}

impl ChipRecord {
    pub fn new(image_id: u64, chip: &FocusChip) -> Self {
        Self {
            image_id,
            id: chip.id,
            source_scale: chip.source_scale,
            space: chip.rect.space().to_string(),
            rect: sig6_box(&chip.rect),
        }
    }

    pub fn to_chip(&self) -> Result<FocusChip> {
        let [x, y, w, h] = self.rect;
        Ok(FocusChip {
            rect: BoxPx::new(x, y, w, h, self.space.parse()?)?,
            source_scale: self.source_scale,
            id: self.id,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: u64,
    pub space: String,
    pub bbox: [f64; 4],
    pub score: f64,
    pub category_id: u32,
    pub scale_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chip_id: Option<u32>,
}

impl DetectionRecord {
    pub fn new(image_id: u64, d: &Detection) -> Self {
        Self {
            image_id,
            space: d.bbox.space().to_string(),
            bbox: sig6_box(&d.bbox),
            score: sig6(d.score),
            category_id: d.category,
            scale_index: d.scale_index,
            chip_id: d.chip_id,
        }
    }

    pub fn to_detection(&self) -> Result<Detection> {
        let [x, y, w, h] = self.bbox;
        let mut d = Detection::new(
            BoxPx::new(x, y, w, h, self.space.parse()?)?,
            self.score,
            self.category_id,
            self.scale_index,
        )?;
        d.chip_id = self.chip_id;
        Ok(d)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChipsFile {
    pub chips: Vec<ChipRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionsFile {
    pub detections: Vec<DetectionRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub images: u64,
    pub speedup: f64,
    pub report: PixelReport,
}

impl ReportFile {
    pub fn new(images: u64, report: PixelReport) -> Self {
        Self {
            images,
            speedup: sig6(report.speedup()),
            report,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("records serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
