//! Focus-pixel training targets from ground-truth boxes.
//!
//! A cell is a focus pixel when it overlaps (positive intersection area) an
//! object whose resized size `sqrt(w * h)` lies in `[a, b]`. Cells that only
//! overlap objects below `a` or in `(b, c)` are invalid; everything else is
//! negative. Focus wins over invalid when a cell overlaps both kinds.

use crate::error::{Error, Result};
use crate::geometry::{BoxPx, Space};
use crate::maps::{label_map_dims, Label, LabelMap};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelParams {
    pub stride: u32,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for LabelParams {
    fn default() -> Self {
        Self {
            stride: 16,
            a: 5.0,
            b: 64.0,
            c: 90.0,
        }
    }
}

impl LabelParams {
    pub fn new(stride: u32, a: f64, b: f64, c: f64) -> Result<Self> {
        let p = Self { stride, a, b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidParams("stride must be >= 1".into()));
        }
        if !(0.0 < self.a && self.a < self.b && self.b < self.c) {
            return Err(Error::InvalidParams(format!(
                "label thresholds need 0 < a < b < c, got {}, {}, {}",
                self.a, self.b, self.c
            )));
        }
        Ok(())
    }

    /// Label an object of the given size contributes to the cells it overlaps.
    ///
    /// Bands: `[0, a)` invalid, `[a, b]` focus, `(b, c)` invalid, `[c, inf)` negative.
    pub fn band(&self, side: f64) -> Label {
        if side < self.a {
            Label::Invalid
        } else if side <= self.b {
            Label::Focus
        } else if side < self.c {
            Label::Invalid
        } else {
            Label::Negative
        }
    }
}

/// Labels every `stride x stride` block of a `chip_w x chip_h` chip.
///
/// Boxes must be in the resized chip's pixels (`Scaled` or `ChipLocal`) and
/// share one tag. Blocks on the right and bottom edge of a chip whose sides
/// are not multiples of the stride are clipped to the chip.
pub fn assign_labels(
    gt_boxes: &[BoxPx],
    chip_w: u32,
    chip_h: u32,
    params: &LabelParams,
) -> Result<LabelMap> {
    params.validate()?;
    let (cols, rows) = label_map_dims(chip_w, chip_h, params.stride)?;
    let mut map = LabelMap::new(cols, rows);

    if let Some(first) = gt_boxes.first() {
        if matches!(first.space(), Space::Original | Space::FeatureMap(_)) {
            return Err(Error::InvalidParams(format!(
                "ground truth must be in resized chip pixels, got {}",
                first.space()
            )));
        }
        if let Some(other) = gt_boxes.iter().find(|b| b.space() != first.space()) {
            return Err(Error::SpaceMismatch {
                left: first.space(),
                right: other.space(),
            });
        }
    }

    let s = params.stride as f64;
    let (cw, ch) = (chip_w as f64, chip_h as f64);
    for gt in gt_boxes {
        let label = params.band(gt.side());
        if label == Label::Negative {
            continue;
        }
        let Some(clipped) = gt.clip(0.0, 0.0, cw, ch) else {
            continue;
        };
        let cx0 = (clipped.x() / s).floor() as usize;
        let cy0 = (clipped.y() / s).floor() as usize;
        let cx1 = ((clipped.right() / s).ceil() as usize).min(cols);
        let cy1 = ((clipped.bottom() / s).ceil() as usize).min(rows);
        for cy in cy0..cy1 {
            let by0 = cy as f64 * s;
            let by1 = (by0 + s).min(ch);
            if by1.min(clipped.bottom()) - by0.max(clipped.y()) <= 0.0 {
                continue;
            }
            for cx in cx0..cx1 {
                let bx0 = cx as f64 * s;
                let bx1 = (bx0 + s).min(cw);
                if bx1.min(clipped.right()) - bx0.max(clipped.x()) <= 0.0 {
                    continue;
                }
                if precedence(label) > precedence(map.get(cx, cy)) {
                    map.set(cx, cy, label);
                }
            }
        }
    }
    Ok(map)
}

fn precedence(l: Label) -> u8 {
    match l {
        Label::Negative => 0,
        Label::Invalid => 1,
        Label::Focus => 2,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelStats {
    pub positive: usize,
    pub negative: usize,
    pub invalid: usize,
}

impl LabelStats {
    pub fn total(&self) -> usize {
        self.positive + self.negative + self.invalid
    }

    /// Positive to negative cell ratio; infinite when there are positives
    /// but no negatives, zero when there are neither.
    pub fn positive_to_negative(&self) -> f64 {
        match (self.positive, self.negative) {
            (0, 0) => 0.0,
            (_, 0) => f64::INFINITY,
            (p, n) => p as f64 / n as f64,
        }
    }
}

pub fn label_stats(map: &LabelMap) -> LabelStats {
    let mut stats = LabelStats {
        positive: 0,
        negative: 0,
        invalid: 0,
    };
    for l in map.values() {
        match l {
            Label::Focus => stats.positive += 1,
            Label::Negative => stats.negative += 1,
            Label::Invalid => stats.invalid += 1,
        }
    }
    stats
}
