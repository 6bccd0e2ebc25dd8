//! Synthetic detector that reads the answer off the scene.
//!
//! Without noise it reports every ground-truth box visible in the region
//! (clipped, score 1.0) and a focus map that is exactly the focus-pixel
//! labelling of the visible boxes. Noise knobs drop, jitter and invent
//! detections and perturb the map, all reproducibly from the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::scene::Scene;
use super::{DetectRequest, Detector, DetectorOutput};
use crate::error::{Error, Result};
use crate::geometry::{project_box, BoxPx, Detection, Projection, Space};
use crate::labeler::{assign_labels, LabelParams};
use crate::maps::label_map_dims;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleNoise {
    pub miss_rate: f64,
    /// Expected false positives per million processed pixels.
    pub false_positive_rate: f64,
    /// Maximum uniform displacement of each box edge, chip-local pixels.
    pub jitter_px: f64,
    pub map_noise_sd: f64,
    pub seed: u64,
}

impl Default for OracleNoise {
    fn default() -> Self {
        Self::none()
    }
}

impl OracleNoise {
    pub fn none() -> Self {
        Self {
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            jitter_px: 0.0,
            map_noise_sd: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(Error::InvalidParams(format!(
                "miss rate {} outside [0, 1]",
                self.miss_rate
            )));
        }
        if !(self.false_positive_rate >= 0.0 && self.jitter_px >= 0.0 && self.map_noise_sd >= 0.0) {
            return Err(Error::InvalidParams(
                "noise magnitudes must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OracleDetector {
    pub noise: OracleNoise,
    pub labels: LabelParams,
}

impl OracleDetector {
    pub fn new(noise: OracleNoise, labels: LabelParams) -> Self {
        Self { noise, labels }
    }

    pub fn noise_free(labels: LabelParams) -> Self {
        Self::new(OracleNoise::none(), labels)
    }
}

impl Detector for OracleDetector {
    fn detect(&self, scene: &Scene, req: &DetectRequest) -> Result<DetectorOutput> {
        oracle_detect(scene, req, &self.noise, &self.labels)
    }
}

// FNV-1a over 64-bit words; stable across builds and platforms.
fn mix(words: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn oracle_detect(
    scene: &Scene,
    req: &DetectRequest,
    noise: &OracleNoise,
    labels: &LabelParams,
) -> Result<DetectorOutput> {
    noise.validate()?;
    let region = &req.region;
    if region.space() != Space::Original {
        return Err(Error::SpaceMismatch {
            left: Space::Original,
            right: region.space(),
        });
    }
    let (sw, sh) = req.scaled_dims();
    let (sw_f, sh_f) = (sw as f64, sh as f64);
    let local_space = Space::ChipLocal(req.chip_id);
    let proj = Projection::chip(region.x(), region.y(), req.zoom);

    let mut visible = Vec::new();
    let mut detections = Vec::new();
    for (idx, obj) in scene.objects.iter().enumerate() {
        let Some(clipped) = obj
            .bbox
            .clip(region.x(), region.y(), region.right(), region.bottom())
        else {
            continue;
        };
        let local = project_box(&clipped, local_space, &proj)?;
        let Some(local) = local.clip(0.0, 0.0, sw_f, sh_f) else {
            continue;
        };
        visible.push(local);

        // per-object stream: the same object gets the same fate at a scale
        // no matter which region it is seen through
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
            noise.seed,
            scene.image_id,
            req.scale_index as u64,
            idx as u64,
        ]));
        if noise.miss_rate > 0.0 && rng.random::<f64>() < noise.miss_rate {
            continue;
        }
        let bbox = if noise.jitter_px > 0.0 {
            let j = noise.jitter_px;
            let mut jit = || rng.random_range(-j..=j);
            let x0 = local.x() + jit();
            let y0 = local.y() + jit();
            let x1 = local.right() + jit();
            let y1 = local.bottom() + jit();
            match BoxPx::from_corners(x0, y0, x1, y1, local_space)
                .and_then(|b| b.clip(0.0, 0.0, sw_f, sh_f))
            {
                Some(b) => b,
                None => continue,
            }
        } else {
            local
        };
        let mut det = Detection::new(bbox, 1.0, obj.category, req.scale_index)?;
        det.chip_id = Some(req.chip_id);
        detections.push(det);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
        noise.seed,
        scene.image_id,
        req.scale_index as u64,
        region.x().to_bits(),
        region.y().to_bits(),
        region.w().to_bits(),
        region.h().to_bits(),
        req.zoom.to_bits(),
    ]));
    if noise.false_positive_rate > 0.0 {
        let expected = noise.false_positive_rate * sw_f * sh_f / 1e6;
        let count = Poisson::new(expected)
            .map_err(|e| Error::InvalidParams(e.to_string()))?
            .sample(&mut rng) as usize;
        let categories: Vec<u32> = scene.objects.iter().map(|o| o.category).collect();
        for _ in 0..count {
            let side = rng.random_range(labels.a..=labels.b);
            let w = side.min(sw_f);
            let h = side.min(sh_f);
            let x = rng.random_range(0.0..=(sw_f - w));
            let y = rng.random_range(0.0..=(sh_f - h));
            let category = if categories.is_empty() {
                1
            } else {
                categories[rng.random_range(0..categories.len())]
            };
            let score = rng.random_range(0.0..1.0);
            let mut det = Detection::new(
                BoxPx::new(x, y, w, h, local_space)?,
                score,
                category,
                req.scale_index,
            )?;
            det.chip_id = Some(req.chip_id);
            detections.push(det);
        }
    }

    let focus = if req.want_focus {
        let params = LabelParams {
            stride: req.stride,
            ..*labels
        };
        let mut map = assign_labels(&visible, sw, sh, &params)?.to_focus_probabilities();
        if noise.map_noise_sd > 0.0 {
            let normal = Normal::new(0.0, noise.map_noise_sd)
                .map_err(|e| Error::InvalidParams(e.to_string()))?;
            for y in 0..map.height() {
                for x in 0..map.width() {
                    let v = map.get(x, y) as f64 + normal.sample(&mut rng);
                    map.set(x, y, v as f32);
                }
            }
        }
        debug_assert_eq!(map.dims(), label_map_dims(sw, sh, req.stride)?);
        Some(map)
    } else {
        None
    };

    Ok(DetectorOutput { detections, focus })
}
