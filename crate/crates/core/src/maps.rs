//! Dense row-major grids at feature-map resolution.

use crate::error::{Error, Result};

/// Ceiling division of image dimensions by the stride.
pub fn label_map_dims(chip_w: u32, chip_h: u32, stride: u32) -> Result<(usize, usize)> {
    if chip_w == 0 || chip_h == 0 || stride == 0 {
        return Err(Error::InvalidParams(format!(
            "label map dims need positive inputs, got {chip_w}x{chip_h} stride {stride}"
        )));
    }
    Ok((
        chip_w.div_ceil(stride) as usize,
        chip_h.div_ceil(stride) as usize,
    ))
}

/// Foreground probabilities, one per feature-map cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ProbMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    /// Values must lie in `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (values.len(), 1),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParams(format!(
                "probability {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Clamps into `[0, 1]`.
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.values[y * self.width + x] = v.clamp(0.0, 1.0);
    }
}

/// Training label of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Invalid = -1,
    Negative = 0,
    Focus = 1,
}

impl Label {
    pub fn as_f32(self) -> f32 {
        self as i8 as f32
    }

    pub fn from_f32(v: f32) -> Option<Self> {
        match v {
            1.0 => Some(Label::Focus),
            0.0 => Some(Label::Negative),
            -1.0 => Some(Label::Invalid),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    values: Vec<Label>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![Label::Negative; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<Label>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (values.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[Label] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> Label {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, l: Label) {
        self.values[y * self.width + x] = l;
    }

    /// 1.0 on focus cells, 0.0 elsewhere.
    pub fn to_focus_probabilities(&self) -> ProbMap {
        ProbMap {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|&l| if l == Label::Focus { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Set cells as `(x, y)`, row-major.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| (i % self.width, i / self.width))
    }

    /// True when every bit set here is also set in `other`.
    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_use_ceiling_division() {
        assert_eq!(label_map_dims(512, 512, 16).unwrap(), (32, 32));
        assert_eq!(label_map_dims(513, 512, 16).unwrap(), (33, 32));
        assert_eq!(label_map_dims(5, 5, 16).unwrap(), (1, 1));
        assert!(label_map_dims(0, 5, 16).is_err());
        assert!(label_map_dims(5, 5, 0).is_err());
    }

    #[test]
    fn prob_map_validates() {
        assert!(ProbMap::from_vec(2, 1, vec![0.0, 1.5]).is_err());
        assert!(ProbMap::from_vec(2, 2, vec![0.0; 3]).is_err());
        let m = ProbMap::from_vec(2, 1, vec![0.25, 1.0]).unwrap();
        assert_eq!(m.get(1, 0), 1.0);
    }

    #[test]
    fn label_float_codes() {
        for l in [Label::Invalid, Label::Negative, Label::Focus] {
            assert_eq!(Label::from_f32(l.as_f32()), Some(l));
        }
        assert_eq!(Label::from_f32(0.5), None);
    }
}
