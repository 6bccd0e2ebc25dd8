use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chipgen::FocusChip;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupingParams {
    pub size_quantum: u32,
    pub aspect_buckets: u32,
}

impl Default for GroupingParams {
    fn default() -> Self {
        Self {
            size_quantum: 64,
            aspect_buckets: 3,
        }
    }
}

/// Chips batched together: same aspect class and same padded size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChipGroup {
    pub aspect_class: u32,
    pub padded_w: u32,
    pub padded_h: u32,
    pub chip_ids: Vec<u32>,
}

impl ChipGroup {
    pub fn padded_pixels(&self) -> u64 {
        self.padded_w as u64 * self.padded_h as u64 * self.chip_ids.len() as u64
    }
}

// log aspect ratios beyond 4:1 fall into the outermost classes
const MAX_LOG_ASPECT: f64 = std::f64::consts::LN_2 * 2.0;

fn aspect_class(w: f64, h: f64, buckets: u32) -> u32 {
    let v = (w / h).ln().clamp(-MAX_LOG_ASPECT, MAX_LOG_ASPECT);
    let t = (v + MAX_LOG_ASPECT) / (2.0 * MAX_LOG_ASPECT);
    ((t * buckets as f64).floor() as u32).min(buckets - 1)
}

/// Buckets chips by aspect class and by dimensions rounded up to the quantum.
/// Groups come out ordered by `(aspect, padded_w, padded_h)`.
pub fn group_chips(chips: &[FocusChip], params: &GroupingParams) -> Result<Vec<ChipGroup>> {
    if params.size_quantum == 0 || params.aspect_buckets == 0 {
        return Err(Error::InvalidParams(
            "size quantum and aspect buckets must be >= 1".into(),
        ));
    }
    let q = params.size_quantum as u64;
    let mut groups: BTreeMap<(u32, u32, u32), Vec<u32>> = BTreeMap::new();
    for c in chips {
        let w = c.rect.w().ceil() as u64;
        let h = c.rect.h().ceil() as u64;
        let pw = (w.div_ceil(q) * q) as u32;
        let ph = (h.div_ceil(q) * q) as u32;
        let aspect = aspect_class(c.rect.w(), c.rect.h(), params.aspect_buckets);
        groups.entry((aspect, pw, ph)).or_default().push(c.id);
    }
    Ok(groups
        .into_iter()
        .map(|((aspect_class, padded_w, padded_h), chip_ids)| ChipGroup {
            aspect_class,
            padded_w,
            padded_h,
            chip_ids,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalePixels {
    pub scale_index: u32,
    /// Area of every processed region at this scale's resolution.
    pub raw_pixels: u64,
    /// The same after padding chips to their batch group's size.
    pub padded_pixels: u64,
    pub chip_count: u64,
    /// Area of the whole resized image; what a full pyramid would process.
    pub full_pixels: u64,
}

/// Pixels processed per scale, the cost model of the cascade.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelReport {
    pub scales: Vec<ScalePixels>,
    pub total_raw: u64,
    pub total_padded: u64,
    pub baseline_pixels: u64,
}

impl PixelReport {
    pub fn from_scales(scales: Vec<ScalePixels>) -> Self {
        let mut report = Self {
            scales,
            total_raw: 0,
            total_padded: 0,
            baseline_pixels: 0,
        };
        report.recompute_totals();
        report
    }

    fn recompute_totals(&mut self) {
        self.total_raw = self.scales.iter().map(|s| s.raw_pixels).sum();
        self.total_padded = self.scales.iter().map(|s| s.padded_pixels).sum();
        self.baseline_pixels = self.scales.iter().map(|s| s.full_pixels).sum();
    }

    /// Baseline over processed pixels.
    pub fn speedup(&self) -> f64 {
        self.baseline_pixels as f64 / self.total_raw as f64
    }

    pub fn scale(&self, scale_index: u32) -> Option<&ScalePixels> {
        self.scales.iter().find(|s| s.scale_index == scale_index)
    }

    /// Adds another report scale by scale. Associative and commutative, so
    /// per-image reports can be summed in any order.
    pub fn absorb(&mut self, other: &PixelReport) {
        for o in &other.scales {
            match self
                .scales
                .iter_mut()
                .find(|s| s.scale_index == o.scale_index)
            {
                Some(s) => {
                    s.raw_pixels += o.raw_pixels;
                    s.padded_pixels += o.padded_pixels;
                    s.chip_count += o.chip_count;
                    s.full_pixels += o.full_pixels;
                }
                None => self.scales.push(o.clone()),
            }
        }
        self.scales.sort_by_key(|s| s.scale_index);
        self.recompute_totals();
    }
}
