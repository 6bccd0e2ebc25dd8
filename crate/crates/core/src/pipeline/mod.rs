//! The coarse-to-fine cascade.
//!
//! Scale 1 sees the whole image. Every later scale only sees the chips
//! generated from the previous scale's focus map, cropped from the original
//! image and resized with the later scale's zoom. When a scale yields no
//! chips, all finer scales are skipped. Detections from every scale go
//! through focus stacking.

pub mod oracle;
pub mod report;
pub mod scene;

use crate::chipgen::{generate_chips, merge_chips, ChipParams, FocusChip};
use crate::error::{Error, Result};
use crate::geometry::{round_dim, BoxPx, Detection, PyramidConfig, ScaleGeometry, Space};
use crate::maps::{label_map_dims, ProbMap};
use crate::stacker::{focus_stack, ScaleOutput, StackParams};

pub use oracle::{oracle_detect, OracleDetector, OracleNoise};
pub use report::{group_chips, ChipGroup, GroupingParams, PixelReport, ScalePixels};
pub use scene::{synth_scene, Scene, SceneObject, SceneSpec, SizeBands, SizeClass};

/// One detector invocation: a region of the original image, resized by
/// `zoom`, with feature stride `stride`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectRequest {
    pub region: BoxPx,
    pub zoom: f64,
    pub stride: u32,
    pub scale_index: u32,
    /// Tag for the chip-local space of the returned detections.
    pub chip_id: u32,
    /// Whether a focus map is needed; the finest scale never asks.
    pub want_focus: bool,
}

impl DetectRequest {
    /// Region dimensions after resizing.
    pub fn scaled_dims(&self) -> (u32, u32) {
        (
            round_dim(self.region.w() * self.zoom).max(1),
            round_dim(self.region.h() * self.zoom).max(1),
        )
    }

    pub fn focus_dims(&self) -> Result<(usize, usize)> {
        let (w, h) = self.scaled_dims();
        label_map_dims(w, h, self.stride)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorOutput {
    /// In `ChipLocal(chip_id)` pixels.
    pub detections: Vec<Detection>,
    /// Focus probabilities at stride resolution, when requested.
    pub focus: Option<ProbMap>,
}

/// Anything that can look at a region of a scene.
///
/// Implementations must be deterministic for a fixed configuration and
/// return a focus map of [`DetectRequest::focus_dims`] when one is requested.
pub trait Detector {
    fn detect(&self, scene: &Scene, req: &DetectRequest) -> Result<DetectorOutput>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeParams {
    /// Chip parameters per scale transition (scale i to i + 1). A single
    /// entry applies to every transition. `min_size` is measured in pixels
    /// of the scale the chips are processed at.
    pub chips: Vec<ChipParams>,
    pub stack: StackParams,
    pub grouping: GroupingParams,
}

impl Default for CascadeParams {
    fn default() -> Self {
        Self {
            chips: vec![ChipParams::default()],
            stack: StackParams::default(),
            grouping: GroupingParams::default(),
        }
    }
}

impl CascadeParams {
    pub fn with_chips(chips: ChipParams) -> Self {
        Self {
            chips: vec![chips],
            ..Self::default()
        }
    }

    fn chips_for(&self, transition: usize) -> Result<&ChipParams> {
        match self.chips.as_slice() {
            [only] => Ok(only),
            all => all.get(transition).ok_or_else(|| {
                Error::InvalidParams(format!("no chip parameters for transition {transition}"))
            }),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CascadeOutput {
    pub detections: Vec<Detection>,
    pub report: PixelReport,
    /// What every processed scale saw and produced, coarse to fine.
    pub stages: Vec<ScaleOutput>,
}

/// Places per-chip focus maps into a map covering the whole resized image.
///
/// Each chip's cells are shifted by the chip origin rounded to the nearest
/// cell, cells falling outside the image are dropped, and cells outside
/// every chip are zero. Chips must not overlap.
pub fn stitch_focus_maps(
    parts: &[(FocusChip, ProbMap)],
    scale_w: u32,
    scale_h: u32,
    stride: u32,
) -> Result<ProbMap> {
    for (i, (a, _)) in parts.iter().enumerate() {
        for (b, _) in &parts[i + 1..] {
            if a.rect.overlaps(&b.rect)? {
                return Err(Error::OverlappingChips {
                    first: a.id,
                    second: b.id,
                });
            }
        }
    }
    let (gw, gh) = label_map_dims(scale_w, scale_h, stride)?;
    let mut out = ProbMap::zeros(gw, gh);
    let s = stride as f64;
    for (chip, map) in parts {
        let expected = label_map_dims(
            round_dim(chip.rect.w()).max(1),
            round_dim(chip.rect.h()).max(1),
            stride,
        )?;
        if map.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: map.dims(),
            });
        }
        let ox = round_dim(chip.rect.x() / s) as usize;
        let oy = round_dim(chip.rect.y() / s) as usize;
        for y in 0..map.height() {
            let gy = oy + y;
            if gy >= gh {
                break;
            }
            for x in 0..map.width() {
                let gx = ox + x;
                if gx >= gw {
                    break;
                }
                // rounding can land two touching chips on one cell
                let v = map.get(x, y).max(out.get(gx, gy));
                out.set(gx, gy, v);
            }
        }
    }
    Ok(out)
}

/// Maps a chip from one scale's pixels onto another's, rounding outward.
/// Sides on the image border stay on the image border.
pub fn rescale_chip(chip: &FocusChip, from: &ScaleGeometry, to: &ScaleGeometry) -> Result<BoxPx> {
    let r = &chip.rect;
    let f = to.zoom / from.zoom;
    let edge = |lo: f64, hi: f64, from_dim: u32, to_dim: u32| -> (f64, f64) {
        let lo = if lo <= 0.0 {
            0.0
        } else {
            (lo * f).floor().min(to_dim as f64 - 1.0).max(0.0)
        };
        let hi = if hi >= from_dim as f64 {
            to_dim as f64
        } else {
            (hi * f).ceil().min(to_dim as f64)
        };
        (lo, hi.max(lo + 1.0))
    };
    let (x0, x1) = edge(r.x(), r.right(), from.width, to.width);
    let (y0, y1) = edge(r.y(), r.bottom(), from.height, to.height);
    BoxPx::new(x0, y0, x1 - x0, y1 - y0, Space::Scaled(to.index))
}

/// The original-image region a scaled chip covers, clamped to the image.
pub fn chip_region(
    chip: &FocusChip,
    g: &ScaleGeometry,
    image_w: u32,
    image_h: u32,
) -> Result<BoxPx> {
    let r = &chip.rect;
    let (iw, ih) = (image_w as f64, image_h as f64);
    let x0 = (r.x() / g.zoom).min(iw);
    let y0 = (r.y() / g.zoom).min(ih);
    let x1 = if r.right() >= g.width as f64 {
        iw
    } else {
        (r.right() / g.zoom).min(iw)
    };
    let y1 = if r.bottom() >= g.height as f64 {
        ih
    } else {
        (r.bottom() / g.zoom).min(ih)
    };
    BoxPx::from_corners(x0, y0, x1, y1, Space::Original)
        .ok_or_else(|| Error::InvalidBox(format!("chip {} maps to an empty region", chip.id)))
}

fn full_chip(g: &ScaleGeometry, id: u32) -> FocusChip {
    FocusChip {
        rect: BoxPx::new(
            0.0,
            0.0,
            g.width as f64,
            g.height as f64,
            Space::Scaled(g.index),
        )
        .expect("scaled image has positive size"),
        source_scale: g.index,
        id,
    }
}

struct ScaleRun {
    output: ScaleOutput,
    maps: Vec<(FocusChip, ProbMap)>,
    pixels: ScalePixels,
}

fn run_scale<D: Detector + ?Sized>(
    scene: &Scene,
    detector: &D,
    g: &ScaleGeometry,
    stride: u32,
    regions: Vec<FocusChip>,
    want_focus: bool,
    grouping: &GroupingParams,
) -> Result<ScaleRun> {
    let mut chips = Vec::with_capacity(regions.len());
    let mut maps = Vec::new();
    for chip in &regions {
        let req = DetectRequest {
            region: chip_region(chip, g, scene.width, scene.height)?,
            zoom: g.zoom,
            stride,
            scale_index: g.index,
            chip_id: chip.id,
            want_focus,
        };
        let out = detector.detect(scene, &req)?;
        if let Some(d) = out
            .detections
            .iter()
            .find(|d| d.bbox.space() != Space::ChipLocal(chip.id))
        {
            return Err(Error::DetectorContract(format!(
                "detection in {} returned for chip {}",
                d.bbox.space(),
                chip.id
            )));
        }
        if want_focus {
            let map = out.focus.ok_or_else(|| {
                Error::DetectorContract(format!("no focus map for chip {}", chip.id))
            })?;
            let expected = req.focus_dims()?;
            if map.dims() != expected {
                return Err(Error::DetectorContract(format!(
                    "focus map for chip {} is {:?}, expected {:?}",
                    chip.id,
                    map.dims(),
                    expected
                )));
            }
            maps.push((*chip, map));
        }
        chips.push((*chip, out.detections));
    }
    let raw_pixels = regions
        .iter()
        .map(|c| c.rect.w().round() as u64 * c.rect.h().round() as u64)
        .sum();
    let padded_pixels = group_chips(&regions, grouping)?
        .iter()
        .map(ChipGroup::padded_pixels)
        .sum();
    Ok(ScaleRun {
        output: ScaleOutput {
            scale_index: g.index,
            zoom: g.zoom,
            image_w: g.width,
            image_h: g.height,
            chips,
        },
        maps,
        pixels: ScalePixels {
            scale_index: g.index,
            raw_pixels,
            padded_pixels,
            chip_count: regions.len() as u64,
            full_pixels: g.pixels(),
        },
    })
}

fn skipped(g: &ScaleGeometry) -> ScalePixels {
    ScalePixels {
        scale_index: g.index,
        raw_pixels: 0,
        padded_pixels: 0,
        chip_count: 0,
        full_pixels: g.pixels(),
    }
}

/// Runs the cascade on one scene.
pub fn run_cascade<D: Detector + ?Sized>(
    scene: &Scene,
    detector: &D,
    config: &PyramidConfig,
    params: &CascadeParams,
) -> Result<CascadeOutput> {
    let geoms = config.geometry(scene.width, scene.height)?;
    let stride = config.stride();
    let mut stages = Vec::with_capacity(geoms.len());
    let mut pixels = Vec::with_capacity(geoms.len());
    let mut regions = vec![full_chip(&geoms[0], 0)];
    let mut next_id = 1;

    for (pos, g) in geoms.iter().enumerate() {
        if regions.is_empty() {
            pixels.push(skipped(g));
            continue;
        }
        let finest = pos + 1 == geoms.len();
        let run = run_scale(
            scene,
            detector,
            g,
            stride,
            std::mem::take(&mut regions),
            !finest,
            &params.grouping,
        )?;
        pixels.push(run.pixels);
        stages.push(run.output);
        if finest {
            break;
        }

        let next = &geoms[pos + 1];
        let chip_params = params.chips_for(pos)?;
        // min_size is given at the next scale's resolution
        let k = ((chip_params.min_size as f64 * g.zoom / next.zoom).ceil() as u32).max(1);
        let stitched = stitch_focus_maps(&run.maps, g.width, g.height, stride)?;
        let chips = generate_chips(
            &stitched,
            &ChipParams {
                min_size: k,
                ..*chip_params
            },
            g.width,
            g.height,
            stride,
            g.index,
        )?;
        let rescaled = chips
            .iter()
            .map(|c| {
                Ok(FocusChip {
                    rect: rescale_chip(c, g, next)?,
                    source_scale: g.index,
                    id: c.id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        // outward rounding can make neighbours overlap by a pixel
        let mut merged = merge_chips(&rescaled)?;
        for c in &mut merged {
            c.id = next_id;
            next_id += 1;
        }
        regions = merged;
    }

    let detections = focus_stack(&stages, config, &params.stack)?;
    Ok(CascadeOutput {
        detections,
        report: PixelReport::from_scales(pixels),
        stages,
    })
}

/// Reference pass: every scale processes the whole image.
pub fn run_full_pyramid<D: Detector + ?Sized>(
    scene: &Scene,
    detector: &D,
    config: &PyramidConfig,
    params: &CascadeParams,
) -> Result<CascadeOutput> {
    let geoms = config.geometry(scene.width, scene.height)?;
    let mut stages = Vec::with_capacity(geoms.len());
    let mut pixels = Vec::with_capacity(geoms.len());
    for (pos, g) in geoms.iter().enumerate() {
        let run = run_scale(
            scene,
            detector,
            g,
            config.stride(),
            vec![full_chip(g, pos as u32)],
            false,
            &params.grouping,
        )?;
        pixels.push(run.pixels);
        stages.push(run.output);
    }
    let detections = focus_stack(&stages, config, &params.stack)?;
    Ok(CascadeOutput {
        detections,
        report: PixelReport::from_scales(pixels),
        stages,
    })
}
