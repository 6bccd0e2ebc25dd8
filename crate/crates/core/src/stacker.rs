//! Focus stacking: drop detections cut by interior chip borders, move the
//! rest to original-image coordinates, keep only sizes valid for their
//! scale, and aggregate everything with Gaussian Soft-NMS.

use std::cmp::Ordering;

use crate::chipgen::FocusChip;
use crate::error::{Error, Result};
use crate::geometry::{iou, project_box, Detection, Projection, PyramidConfig, Space, ValidRange};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StackParams {
    /// Gaussian decay width of Soft-NMS.
    pub sigma: f64,
    /// Detections decayed below this score are dropped.
    pub score_floor: f64,
    /// Distance in chip-local pixels within which a detection side counts
    /// as touching a chip border.
    pub boundary_tolerance: f64,
}

impl Default for StackParams {
    fn default() -> Self {
        Self {
            sigma: 0.55,
            score_floor: 0.001,
            boundary_tolerance: 1.0,
        }
    }
}

impl StackParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if !(0.0..1.0).contains(&self.score_floor) {
            return Err(Error::InvalidParams(format!(
                "score floor {} outside [0, 1)",
                self.score_floor
            )));
        }
        if self.boundary_tolerance.is_nan() || self.boundary_tolerance < 0.0 {
            return Err(Error::InvalidParams(
                "boundary tolerance must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Keeps a detection only if every chip side it touches is also an image side.
///
/// Detections are in the chip's local pixels; `image_w`/`image_h` are the
/// resized image dimensions the chip lives in. A detection touching an
/// interior side is dropped even when it also touches an image side.
pub fn prune_boundary_detections(
    dets: &[Detection],
    chip: &FocusChip,
    image_w: u32,
    image_h: u32,
    tolerance: f64,
) -> Result<Vec<Detection>> {
    let r = &chip.rect;
    let (iw, ih) = (image_w as f64, image_h as f64);
    if r.x() < 0.0 || r.y() < 0.0 || r.right() > iw || r.bottom() > ih {
        return Err(Error::ChipOutOfBounds {
            id: chip.id,
            width: image_w,
            height: image_h,
        });
    }
    let left_is_image = r.x() == 0.0;
    let top_is_image = r.y() == 0.0;
    let right_is_image = r.right() == iw;
    let bottom_is_image = r.bottom() == ih;

    let mut kept = Vec::with_capacity(dets.len());
    for d in dets {
        if d.bbox.space() != Space::ChipLocal(chip.id) {
            return Err(Error::SpaceMismatch {
                left: Space::ChipLocal(chip.id),
                right: d.bbox.space(),
            });
        }
        let b = &d.bbox;
        let touches_interior = (b.x() <= tolerance && !left_is_image)
            || (b.y() <= tolerance && !top_is_image)
            || (r.w() - b.right() <= tolerance && !right_is_image)
            || (r.h() - b.bottom() <= tolerance && !bottom_is_image);
        if !touches_interior {
            kept.push(*d);
        }
    }
    Ok(kept)
}

/// Keeps detections with `lo <= sqrt(w * h) <= hi`.
pub fn filter_valid_range(dets: &[Detection], range: &ValidRange) -> Result<Vec<Detection>> {
    if range.hi.is_some_and(|hi| range.lo > hi) {
        return Err(Error::InvalidParams(format!(
            "valid range [{}, {:?}] is empty",
            range.lo, range.hi
        )));
    }
    Ok(dets
        .iter()
        .filter(|d| range.contains(d.bbox.side()))
        .copied()
        .collect())
}

/// Total order used wherever detections are ranked: score descending, then
/// box `(x, y, w, h)` ascending, then category, scale and chip.
pub fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| {
            a.bbox
                .to_array()
                .iter()
                .zip(b.bbox.to_array())
                .map(|(u, v)| u.total_cmp(&v))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| a.category.cmp(&b.category))
        .then_with(|| a.scale_index.cmp(&b.scale_index))
        .then_with(|| a.chip_id.cmp(&b.chip_id))
}

/// Category-wise Gaussian Soft-NMS.
///
/// Repeatedly takes the best remaining detection and multiplies the score
/// of every other detection of its category by `exp(-iou^2 / sigma)`.
pub fn soft_nms(dets: &[Detection], params: &StackParams) -> Result<Vec<Detection>> {
    params.validate()?;
    if let Some(first) = dets.first() {
        if let Some(other) = dets.iter().find(|d| d.bbox.space() != first.bbox.space()) {
            return Err(Error::SpaceMismatch {
                left: first.bbox.space(),
                right: other.bbox.space(),
            });
        }
    }
    let mut remaining: Vec<Detection> = dets
        .iter()
        .filter(|d| d.score >= params.score_floor)
        .copied()
        .collect();
    let mut out = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let best = (0..remaining.len())
            .min_by(|&i, &j| rank_order(&remaining[i], &remaining[j]))
            .expect("non-empty");
        let m = remaining.swap_remove(best);
        let mut i = 0;
        while i < remaining.len() {
            let d = &mut remaining[i];
            if d.category == m.category {
                let o = iou(&m.bbox, &d.bbox)?;
                if o > 0.0 {
                    d.score *= (-(o * o) / params.sigma).exp();
                }
            }
            if d.score < params.score_floor {
                remaining.swap_remove(i);
            } else {
                i += 1;
            }
        }
        out.push(m);
    }
    out.sort_by(rank_order);
    Ok(out)
}

/// Everything one scale produced for an image.
#[derive(Clone, Debug)]
pub struct ScaleOutput {
    pub scale_index: u32,
    pub zoom: f64,
    /// Resized image dimensions at this scale.
    pub image_w: u32,
    pub image_h: u32,
    /// Processed regions with their chip-local detections.
    pub chips: Vec<(FocusChip, Vec<Detection>)>,
}

/// Per chip: prune, project to original pixels, filter by the scale's valid
/// range; then Soft-NMS over everything pooled.
pub fn focus_stack(
    per_scale: &[ScaleOutput],
    config: &PyramidConfig,
    params: &StackParams,
) -> Result<Vec<Detection>> {
    params.validate()?;
    let mut pooled = Vec::new();
    for scale in per_scale {
        let range = config.range_for(scale.scale_index).ok_or_else(|| {
            Error::InvalidParams(format!("scale {} not in pyramid", scale.scale_index))
        })?;
        for (chip, dets) in &scale.chips {
            let kept = prune_boundary_detections(
                dets,
                chip,
                scale.image_w,
                scale.image_h,
                params.boundary_tolerance,
            )?;
            let proj = Projection::chip(
                chip.rect.x() / scale.zoom,
                chip.rect.y() / scale.zoom,
                scale.zoom,
            );
            let projected = kept
                .iter()
                .map(|d| {
                    Ok(Detection {
                        bbox: project_box(&d.bbox, Space::Original, &proj)?,
                        ..*d
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            pooled.extend(filter_valid_range(&projected, &range)?);
        }
    }
    soft_nms(&pooled, params)
}
