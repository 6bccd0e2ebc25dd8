//! Focus chip generation: threshold, dilate, label components, enclose each
//! component in a chip of at least `k x k` pixels, then merge overlapping
//! chips until none overlap.
//!
//! Chips are produced in the resized pixels of the scale whose focus map
//! they came from.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{BoxPx, Space};
use crate::maps::{label_map_dims, BitMask, ProbMap};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChipParams {
    /// Cells strictly above this probability are focus pixels.
    pub threshold: f64,
    /// Side of the square dilation kernel, in cells. Odd.
    pub dilation: u32,
    /// Minimum chip side in pixels.
    pub min_size: u32,
}

impl Default for ChipParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            dilation: 3,
            min_size: 512,
        }
    }
}

impl ChipParams {
    pub fn new(threshold: f64, dilation: u32, min_size: u32) -> Result<Self> {
        let p = Self {
            threshold,
            dilation,
            min_size,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidParams(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self.dilation == 0 || self.dilation.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "dilation must be odd and >= 1, got {}",
                self.dilation
            )));
        }
        if self.min_size == 0 {
            return Err(Error::InvalidParams(
                "minimum chip size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// A rectangle selected for processing at the next scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocusChip {
    pub rect: BoxPx,
    pub source_scale: u32,
    pub id: u32,
}

/// Inclusive cell rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub cells: Vec<(usize, usize)>,
    pub rect: CellRect,
}

pub fn binarize(map: &ProbMap, threshold: f64) -> BitMask {
    let mut mask = BitMask::new(map.width(), map.height());
    for y in 0..map.height() {
        for x in 0..map.width() {
            if map.get(x, y) as f64 > threshold {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Binary dilation with a `d x d` square, clipped at the borders.
pub fn dilate(mask: &BitMask, d: u32) -> Result<BitMask> {
    if d == 0 || d.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!(
            "dilation kernel must be odd, got {d}"
        )));
    }
    let r = (d / 2) as usize;
    let (w, h) = (mask.width(), mask.height());
    if r == 0 {
        return Ok(mask.clone());
    }
    // the square kernel separates into a row pass and a column pass
    let mut rows = BitMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    rows.set(xx, y, true);
                }
            }
        }
    }
    let mut out = BitMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if rows.get(x, y) {
                for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                    out.set(x, yy, true);
                }
            }
        }
    }
    Ok(out)
}

/// 8-connected components, ordered by the top-left of their bounding rect.
pub fn connected_components(mask: &BitMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for (sx, sy) in mask.ones() {
        if seen[sy * w + sx] {
            continue;
        }
        seen[sy * w + sx] = true;
        queue.push_back((sx, sy));
        let mut cells = Vec::new();
        let mut rect = CellRect {
            x0: sx,
            y0: sy,
            x1: sx,
            y1: sy,
        };
        while let Some((x, y)) = queue.pop_front() {
            cells.push((x, y));
            rect.x0 = rect.x0.min(x);
            rect.y0 = rect.y0.min(y);
            rect.x1 = rect.x1.max(x);
            rect.y1 = rect.y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let i = ny * w + nx;
                    if mask.get(nx, ny) && !seen[i] {
                        seen[i] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        cells.sort_by_key(|&(x, y)| (y, x));
        out.push(Component { cells, rect });
    }
    // discovery order is row-major by first cell, which breaks ties
    out.sort_by_key(|c| (c.rect.y0, c.rect.x0));
    out
}

/// Grows `[lo, hi)` to at least `k` inside `[0, dim)`: padding is split
/// evenly with the odd pixel on the high side, then the span is shifted
/// back inside the image. Spans the whole axis when `dim <= k`.
fn expand_axis(lo: i64, hi: i64, k: i64, dim: i64) -> (i64, i64) {
    if dim <= k {
        return (0, dim);
    }
    let (mut lo, mut hi) = (lo, hi);
    let len = hi - lo;
    if len < k {
        let extra = k - len;
        lo -= extra / 2;
        hi += extra - extra / 2;
    }
    if lo < 0 {
        hi -= lo;
        lo = 0;
    }
    if hi > dim {
        lo -= hi - dim;
        hi = dim;
    }
    (lo.max(0), hi)
}

/// Scales component rects to pixels and grows them to the minimum size.
pub fn enclose_components(
    components: &[Component],
    min_size: u32,
    image_w: u32,
    image_h: u32,
    stride: u32,
    scale_index: u32,
) -> Vec<FocusChip> {
    let s = stride as i64;
    let (iw, ih) = (image_w as i64, image_h as i64);
    let k = min_size as i64;
    components
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let x0 = (c.rect.x0 as i64 * s).min(iw);
            let x1 = ((c.rect.x1 as i64 + 1) * s).min(iw);
            let y0 = (c.rect.y0 as i64 * s).min(ih);
            let y1 = ((c.rect.y1 as i64 + 1) * s).min(ih);
            let (x0, x1) = expand_axis(x0, x1, k, iw);
            let (y0, y1) = expand_axis(y0, y1, k, ih);
            let rect = BoxPx::from_corners(
                x0 as f64,
                y0 as f64,
                x1 as f64,
                y1 as f64,
                Space::Scaled(scale_index),
            )
            .expect("expanded chip has positive extent");
            FocusChip {
                rect,
                source_scale: scale_index,
                id: i as u32,
            }
        })
        .collect()
}

/// Replaces overlapping chips by their enclosing box until no two chips
/// overlap. Touching edges do not count as overlap. The merged chip keeps
/// the smallest id of its members; output is ordered by position.
pub fn merge_chips(chips: &[FocusChip]) -> Result<Vec<FocusChip>> {
    if let Some(first) = chips.first() {
        if let Some(other) = chips.iter().find(|c| c.rect.space() != first.rect.space()) {
            return Err(Error::SpaceMismatch {
                left: first.rect.space(),
                right: other.rect.space(),
            });
        }
    }
    let mut out: Vec<FocusChip> = Vec::with_capacity(chips.len());
    for chip in chips {
        let mut current = *chip;
        // absorbing one chip can make the grown chip hit another, so rescan
        loop {
            let mut absorbed = false;
            let mut i = 0;
            while i < out.len() {
                if current.rect.overlaps(&out[i].rect)? {
                    let other = out.swap_remove(i);
                    current.rect = current.rect.union(&other.rect)?;
                    current.id = current.id.min(other.id);
                    absorbed = true;
                } else {
                    i += 1;
                }
            }
            if !absorbed {
                break;
            }
        }
        out.push(current);
    }
    sort_chips(&mut out);
    Ok(out)
}

fn sort_chips(chips: &mut [FocusChip]) {
    chips.sort_by(|a, b| {
        let ka = [a.rect.y(), a.rect.x(), a.rect.h(), a.rect.w()];
        let kb = [b.rect.y(), b.rect.x(), b.rect.h(), b.rect.w()];
        ka.iter()
            .zip(&kb)
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Full chip generation for one focus map. Ids are renumbered from 0 in
/// output order.
pub fn generate_chips(
    map: &ProbMap,
    params: &ChipParams,
    image_w: u32,
    image_h: u32,
    stride: u32,
    scale_index: u32,
) -> Result<Vec<FocusChip>> {
    params.validate()?;
    let expected = label_map_dims(image_w, image_h, stride)?;
    if map.dims() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: map.dims(),
        });
    }
    let mask = dilate(&binarize(map, params.threshold), params.dilation)?;
    let components = connected_components(&mask);
    let chips = enclose_components(
        &components,
        params.min_size,
        image_w,
        image_h,
        stride,
        scale_index,
    );
    let mut merged = merge_chips(&chips)?;
    for (i, c) in merged.iter_mut().enumerate() {
        c.id = i as u32;
    }
    Ok(merged)
}
