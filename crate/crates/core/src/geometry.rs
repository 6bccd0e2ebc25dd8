//! Coordinate spaces, boxes, scale specifications and projections.
//!
//! Every box carries a [`Space`] tag. Operations that combine two boxes
//! refuse to mix tags, and moving a box between spaces goes through
//! [`project_box`] with an explicit [`Projection`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Coordinate frame a box is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Space {
    /// Pixels of the original, unresized image.
    Original,
    /// Pixels of the image resized for the given scale index.
    Scaled(u32),
    /// Cells of the feature map of the given scale index.
    FeatureMap(u32),
    /// Pixels of a resized chip, relative to the chip's top-left corner.
    ChipLocal(u32),
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Original => write!(f, "original"),
            Space::Scaled(i) => write!(f, "scaled:{i}"),
            Space::FeatureMap(i) => write!(f, "feature:{i}"),
            Space::ChipLocal(id) => write!(f, "chip:{id}"),
        }
    }
}

impl FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "original" {
            return Ok(Space::Original);
        }
        let bad = || Error::InvalidParams(format!("unknown coordinate space {s:?}"));
        let (kind, idx) = s.split_once(':').ok_or_else(bad)?;
        let idx: u32 = idx.parse().map_err(|_| bad())?;
        match kind {
            "scaled" => Ok(Space::Scaled(idx)),
            "feature" => Ok(Space::FeatureMap(idx)),
            "chip" => Ok(Space::ChipLocal(idx)),
            _ => Err(bad()),
        }
    }
}

/// Axis-aligned rectangle `(x, y, w, h)` with real-valued coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxPx {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    space: Space,
}

impl BoxPx {
    pub fn new(x: f64, y: f64, w: f64, h: f64, space: Space) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite box ({x}, {y}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "box ({x}, {y}, {w}, {h}) must have positive width and height"
            )));
        }
        Ok(Self { x, y, w, h, space })
    }

    /// Builds a box from its corners; `None` when the extent is empty.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64, space: Space) -> Option<Self> {
        Self::new(x0, y0, x1 - x0, y1 - y0, space).ok()
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Square root of the area, the size measure used by every size rule.
    pub fn side(&self) -> f64 {
        self.area().sqrt()
    }

    /// `[x, y, w, h]`
    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn with_space(self, space: Space) -> Self {
        Self { space, ..self }
    }

    fn check_space(&self, other: &BoxPx) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch {
                left: self.space,
                right: other.space,
            });
        }
        Ok(())
    }

    /// Area of the overlap; zero for disjoint or edge-touching boxes.
    pub fn intersection_area(&self, other: &BoxPx) -> Result<f64> {
        self.check_space(other)?;
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            return Ok(0.0);
        }
        Ok(iw * ih)
    }

    pub fn overlaps(&self, other: &BoxPx) -> Result<bool> {
        Ok(self.intersection_area(other)? > 0.0)
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BoxPx) -> Result<bool> {
        self.check_space(other)?;
        Ok(other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom())
    }

    /// Smallest box enclosing both.
    pub fn union(&self, other: &BoxPx) -> Result<BoxPx> {
        self.check_space(other)?;
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        Ok(BoxPx {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
            space: self.space,
        })
    }

    /// Clips to `[x0, x1) x [y0, y1)`; `None` when nothing of positive area remains.
    pub fn clip(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Option<BoxPx> {
        Self::from_corners(
            self.x.max(x0),
            self.y.max(y0),
            self.right().min(x1),
            self.bottom().min(y1),
            self.space,
        )
    }
}

/// Intersection over union of two boxes in the same space.
pub fn iou(a: &BoxPx, b: &BoxPx) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    if inter == 0.0 {
        return Ok(0.0);
    }
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// One resolution of the pyramid: shorter side target and longer side cap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleSpec {
    pub index: u32,
    pub min_side: f64,
    pub max_side: f64,
}

impl ScaleSpec {
    pub fn new(index: u32, min_side: f64, max_side: f64) -> Result<Self> {
        if !(min_side > 0.0 && min_side <= max_side && max_side.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "scale {index}: need 0 < min_side <= max_side, got ({min_side}, {max_side})"
            )));
        }
        Ok(Self {
            index,
            min_side,
            max_side,
        })
    }
}

/// Zoom factor that brings the shorter side to `min_side` unless the longer
/// side would then exceed `max_side`.
pub fn resize_factor(spec: &ScaleSpec, image_w: u32, image_h: u32) -> Result<f64> {
    if image_w == 0 || image_h == 0 {
        return Err(Error::InvalidParams(format!(
            "image dimensions must be positive, got {image_w}x{image_h}"
        )));
    }
    let short = image_w.min(image_h) as f64;
    let long = image_w.max(image_h) as f64;
    Ok((spec.min_side / short).min(spec.max_side / long))
}

/// Rounds half up; used for every resized dimension.
pub fn round_dim(v: f64) -> u32 {
    (v + 0.5).floor().max(0.0) as u32
}

/// Resized image dimensions under `zoom`.
pub fn scaled_dims(image_w: u32, image_h: u32, zoom: f64) -> (u32, u32) {
    (
        round_dim(image_w as f64 * zoom),
        round_dim(image_h as f64 * zoom),
    )
}

/// Closed interval on the square root of a detection's area, in original pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidRange {
    pub lo: f64,
    /// `None` means unbounded above.
    pub hi: Option<f64>,
}

impl ValidRange {
    pub fn new(lo: f64, hi: Option<f64>) -> Result<Self> {
        if lo < 0.0 || hi.is_some_and(|hi| lo > hi) {
            return Err(Error::InvalidParams(format!(
                "valid range needs 0 <= lo <= hi, got [{lo}, {hi:?}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded() -> Self {
        Self { lo: 0.0, hi: None }
    }

    pub fn contains(&self, side: f64) -> bool {
        side >= self.lo && self.hi.is_none_or(|hi| side <= hi)
    }
}

/// Resolutions, feature stride and per-scale valid ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidConfig {
    scales: Vec<ScaleSpec>,
    stride: u32,
    valid_ranges: Vec<ValidRange>,
}

impl PyramidConfig {
    pub fn new(scales: Vec<ScaleSpec>, stride: u32, valid_ranges: Vec<ValidRange>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::InvalidParams(
                "at least one scale is required".into(),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidParams("stride must be >= 1".into()));
        }
        if valid_ranges.len() != scales.len() {
            return Err(Error::InvalidParams(format!(
                "{} scales but {} valid ranges",
                scales.len(),
                valid_ranges.len()
            )));
        }
        for pair in scales.windows(2) {
            if pair[1].index <= pair[0].index {
                return Err(Error::InvalidParams(
                    "scale indices must be strictly increasing".into(),
                ));
            }
        }
        if !ranges_cover_all_sizes(&valid_ranges) {
            return Err(Error::InvalidParams(
                "valid ranges must jointly cover every positive size".into(),
            ));
        }
        Ok(Self {
            scales,
            stride,
            valid_ranges,
        })
    }

    /// Same ranges for every scale: `[0, inf)`.
    pub fn unfiltered(scales: Vec<ScaleSpec>, stride: u32) -> Result<Self> {
        let ranges = vec![ValidRange::unbounded(); scales.len()];
        Self::new(scales, stride, ranges)
    }

    /// Three-scale pyramid with `(480, 512)`, `(800, 1280)`, `(1400, 2000)`.
    pub fn three_scale(stride: u32) -> Self {
        Self::new(
            vec![
                ScaleSpec::new(1, 480.0, 512.0).unwrap(),
                ScaleSpec::new(2, 800.0, 1280.0).unwrap(),
                ScaleSpec::new(3, 1400.0, 2000.0).unwrap(),
            ],
            stride,
            default_valid_ranges(),
        )
        .unwrap()
    }

    pub fn scales(&self) -> &[ScaleSpec] {
        &self.scales
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn valid_ranges(&self) -> &[ValidRange] {
        &self.valid_ranges
    }

    pub fn with_valid_ranges(mut self, ranges: Vec<ValidRange>) -> Result<Self> {
        let scales = std::mem::take(&mut self.scales);
        Self::new(scales, self.stride, ranges)
    }

    /// Position of a scale index within the pyramid.
    pub fn position(&self, scale_index: u32) -> Option<usize> {
        self.scales.iter().position(|s| s.index == scale_index)
    }

    pub fn range_for(&self, scale_index: u32) -> Option<ValidRange> {
        self.position(scale_index).map(|p| self.valid_ranges[p])
    }

    /// Zoom and resized dimensions of every scale for an image.
    pub fn geometry(&self, image_w: u32, image_h: u32) -> Result<Vec<ScaleGeometry>> {
        self.scales
            .iter()
            .map(|spec| {
                let zoom = resize_factor(spec, image_w, image_h)?;
                let (width, height) = scaled_dims(image_w, image_h, zoom);
                Ok(ScaleGeometry {
                    index: spec.index,
                    zoom,
                    width: width.max(1),
                    height: height.max(1),
                })
            })
            .collect()
    }
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self::three_scale(16)
    }
}

/// Config defaults: scale 1 `[90, inf)`, scale 2 `[30, 160]`, scale 3 `[0, 90]`.
pub fn default_valid_ranges() -> Vec<ValidRange> {
    vec![
        ValidRange { lo: 90.0, hi: None },
        ValidRange {
            lo: 30.0,
            hi: Some(160.0),
        },
        ValidRange {
            lo: 0.0,
            hi: Some(90.0),
        },
    ]
}

fn ranges_cover_all_sizes(ranges: &[ValidRange]) -> bool {
    let mut sorted: Vec<_> = ranges.to_vec();
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut reach = 0.0_f64;
    for r in sorted {
        if r.lo > reach {
            return false;
        }
        match r.hi {
            None => return true,
            Some(hi) => reach = reach.max(hi),
        }
    }
    false
}

/// A scale as applied to one particular image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleGeometry {
    pub index: u32,
    pub zoom: f64,
    pub width: u32,
    pub height: u32,
}

impl ScaleGeometry {
    pub fn pixels(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

/// A scored, categorised box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BoxPx,
    pub score: f64,
    pub category: u32,
    pub scale_index: u32,
    pub chip_id: Option<u32>,
}

impl Detection {
    pub fn new(bbox: BoxPx, score: f64, category: u32, scale_index: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidParams(format!(
                "detection score {score} outside [0, 1]"
            )));
        }
        Ok(Self {
            bbox,
            score,
            category,
            scale_index,
            chip_id: None,
        })
    }

    pub fn with_chip(mut self, chip_id: u32) -> Self {
        self.chip_id = Some(chip_id);
        self
    }
}

/// Placement of a frame relative to the original image.
///
/// `origin` is the frame's top-left corner in original pixels, `zoom` the
/// resize factor of the scale, `stride` the feature-map stride.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub origin_x: f64,
    pub origin_y: f64,
    pub zoom: f64,
    pub stride: f64,
}

impl Projection {
    pub fn scale(zoom: f64, stride: u32) -> Self {
        Self {
            origin_x: 0.0,
            origin_y: 0.0,
            zoom,
            stride: stride as f64,
        }
    }

    pub fn chip(origin_x: f64, origin_y: f64, zoom: f64) -> Self {
        Self {
            origin_x,
            origin_y,
            zoom,
            stride: 1.0,
        }
    }
}

/// Moves `b` from its own space into `to`.
///
/// Supported: identity, any space to or from [`Space::Original`], and
/// between `Scaled(i)` and `FeatureMap(i)`. Chip-local boxes are relative
/// to the projection origin; scaled and feature-map boxes cover the whole
/// image and ignore it.
pub fn project_box(b: &BoxPx, to: Space, proj: &Projection) -> Result<BoxPx> {
    let from = b.space;
    if from == to {
        return Ok(*b);
    }
    if !(proj.zoom > 0.0 && proj.stride > 0.0) {
        return Err(Error::InvalidParams(format!(
            "projection needs positive zoom and stride, got {} and {}",
            proj.zoom, proj.stride
        )));
    }
    let supported = matches!(
        (from, to),
        (Space::Original, _)
            | (_, Space::Original)
            | (Space::Scaled(_), Space::FeatureMap(_))
            | (Space::FeatureMap(_), Space::Scaled(_))
    ) && match (from, to) {
        (Space::Scaled(i), Space::FeatureMap(j)) | (Space::FeatureMap(i), Space::Scaled(j)) => {
            i == j
        }
        _ => true,
    };
    if !supported {
        return Err(Error::UnknownProjection { from, to });
    }
    let [x, y, w, h] = b.to_array();
    let (ox, oy, ow, oh) = match from {
        Space::Original => (x, y, w, h),
        Space::Scaled(_) => (x / proj.zoom, y / proj.zoom, w / proj.zoom, h / proj.zoom),
        Space::FeatureMap(_) => {
            let f = proj.stride / proj.zoom;
            (x * f, y * f, w * f, h * f)
        }
        Space::ChipLocal(_) => (
            x / proj.zoom + proj.origin_x,
            y / proj.zoom + proj.origin_y,
            w / proj.zoom,
            h / proj.zoom,
        ),
    };
    let (nx, ny, nw, nh) = match to {
        Space::Original => (ox, oy, ow, oh),
        Space::Scaled(_) => (
            ox * proj.zoom,
            oy * proj.zoom,
            ow * proj.zoom,
            oh * proj.zoom,
        ),
        Space::FeatureMap(_) => {
            let f = proj.zoom / proj.stride;
            (ox * f, oy * f, ow * f, oh * f)
        }
        Space::ChipLocal(_) => (
            (ox - proj.origin_x) * proj.zoom,
            (oy - proj.origin_y) * proj.zoom,
            ow * proj.zoom,
            oh * proj.zoom,
        ),
    };
    BoxPx::new(nx, ny, nw, nh, to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoxPx {
        BoxPx::new(x, y, w, h, Space::Original).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 5.0, 5.0)).unwrap(), 0.0);
        let v = iou(&a, &bx(5.0, 0.0, 10.0, 10.0)).unwrap();
        assert!((v - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn iou_rejects_mixed_spaces() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = a.with_space(Space::Scaled(1));
        assert!(matches!(iou(&a, &b), Err(Error::SpaceMismatch { .. })));
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BoxPx::new(0.0, 0.0, 0.0, 3.0, Space::Original).is_err());
        assert!(BoxPx::new(0.0, 0.0, 3.0, -1.0, Space::Original).is_err());
        assert!(BoxPx::new(f64::NAN, 0.0, 3.0, 1.0, Space::Original).is_err());
    }

    #[test]
    fn resize_examples() {
        let s1 = ScaleSpec::new(1, 480.0, 512.0).unwrap();
        assert!((resize_factor(&s1, 800, 600).unwrap() - 0.64).abs() < 1e-12);
        assert_eq!(resize_factor(&s1, 512, 480).unwrap(), 1.0);
        let s2 = ScaleSpec::new(2, 800.0, 1280.0).unwrap();
        assert!((resize_factor(&s2, 640, 480).unwrap() - 800.0 / 480.0).abs() < 1e-12);
        assert!(resize_factor(&s2, 0, 480).is_err());
    }

    #[test]
    fn scale_spec_validation() {
        assert!(ScaleSpec::new(1, 0.0, 10.0).is_err());
        assert!(ScaleSpec::new(1, 20.0, 10.0).is_err());
    }

    #[test]
    fn pyramid_validation() {
        let scales = PyramidConfig::default().scales().to_vec();
        assert!(PyramidConfig::new(vec![], 16, vec![]).is_err());
        assert!(PyramidConfig::new(scales.clone(), 0, default_valid_ranges()).is_err());
        // gap between 10 and 30
        let gappy = vec![
            ValidRange { lo: 30.0, hi: None },
            ValidRange::new(0.0, Some(10.0)).unwrap(),
            ValidRange::new(0.0, Some(10.0)).unwrap(),
        ];
        assert!(PyramidConfig::new(scales.clone(), 16, gappy).is_err());
        let mut reversed = scales.clone();
        reversed.reverse();
        assert!(PyramidConfig::new(reversed, 16, default_valid_ranges()).is_err());
    }

    #[test]
    fn valid_range_is_closed() {
        let r = ValidRange::new(0.0, Some(90.0)).unwrap();
        assert!(r.contains(90.0));
        assert!(r.contains(0.0));
        assert!(!r.contains(90.0001));
        assert!(ValidRange::new(5.0, Some(1.0)).is_err());
    }

    #[test]
    fn project_examples() {
        let local = BoxPx::new(0.0, 0.0, 10.0, 10.0, Space::ChipLocal(3)).unwrap();
        let p = Projection::chip(100.0, 50.0, 2.0);
        let orig = project_box(&local, Space::Original, &p).unwrap();
        assert_eq!(orig.to_array(), [100.0, 50.0, 5.0, 5.0]);
        assert_eq!(orig.space(), Space::Original);

        let id = Projection::chip(0.0, 0.0, 1.0);
        let back = project_box(&local, Space::Original, &id).unwrap();
        assert_eq!(back.to_array(), local.to_array());

        let b = bx(32.0, 48.0, 16.0, 16.0);
        let fm = project_box(&b, Space::FeatureMap(1), &Projection::scale(0.5, 8)).unwrap();
        assert_eq!(fm.to_array(), [2.0, 3.0, 1.0, 1.0]);
    }

    #[test]
    fn project_unknown_pair() {
        let b = BoxPx::new(0.0, 0.0, 1.0, 1.0, Space::Scaled(1)).unwrap();
        let p = Projection::scale(1.0, 16);
        assert!(matches!(
            project_box(&b, Space::Scaled(2), &p),
            Err(Error::UnknownProjection { .. })
        ));
        assert!(matches!(
            project_box(&b, Space::FeatureMap(2), &p),
            Err(Error::UnknownProjection { .. })
        ));
        let c = b.with_space(Space::ChipLocal(1));
        assert!(project_box(&c, Space::ChipLocal(2), &p).is_err());
    }

    #[test]
    fn space_tags_round_trip_through_strings() {
        for s in [
            Space::Original,
            Space::Scaled(2),
            Space::FeatureMap(3),
            Space::ChipLocal(17),
        ] {
            assert_eq!(s.to_string().parse::<Space>().unwrap(), s);
        }
        assert!("scaled".parse::<Space>().is_err());
        assert!("pixel:1".parse::<Space>().is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoxPx> {
        (
            -100.0..100.0f64,
            -100.0..100.0f64,
            0.1..80.0f64,
            0.1..80.0f64,
        )
            .prop_map(|(x, y, w, h)| bx(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b).unwrap();
            let ba = iou(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn resize_respects_both_bounds(w in 1u32..5000, h in 1u32..5000,
                                       min_side in 16u32..2000, extra in 0u32..2000) {
            let spec = ScaleSpec::new(1, min_side as f64, (min_side + extra) as f64).unwrap();
            let z = resize_factor(&spec, w, h).unwrap();
            let short = round_dim(w.min(h) as f64 * z) as f64;
            let long = round_dim(w.max(h) as f64 * z) as f64;
            prop_assert!(short <= spec.min_side);
            prop_assert!(long <= spec.max_side);
            let tight = (short - spec.min_side).abs() <= 1.0 || (long - spec.max_side).abs() <= 1.0;
            prop_assert!(tight);
        }

        #[test]
        fn chip_projection_round_trip(b in arb_box(), zoom in 0.25..4.0f64,
                                      ox in -50.0..50.0f64, oy in -50.0..50.0f64) {
            let p = Projection::chip(ox, oy, zoom);
            let local = project_box(&b, Space::ChipLocal(0), &p).unwrap();
            let back = project_box(&local, Space::Original, &p).unwrap();
            for (u, v) in b.to_array().iter().zip(back.to_array()) {
                prop_assert!((u - v).abs() <= 1.0);
                prop_assert!((u - v).abs() <= 1e-9);
            }
        }
    }
}
