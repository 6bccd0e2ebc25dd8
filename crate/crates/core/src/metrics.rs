//! Recall curves, the oracle speedup bound and average precision.

use std::collections::BTreeSet;

use crate::chipgen::{generate_chips, ChipParams, FocusChip};
use crate::error::{Error, Result};
use crate::geometry::{
    iou, project_box, resize_factor, scaled_dims, BoxPx, Detection, Projection, PyramidConfig,
    Space,
};
use crate::labeler::LabelParams;
use crate::maps::{Label, LabelMap, ProbMap};
use crate::pipeline::{
    run_cascade, CascadeParams, DetectRequest, Detector, OracleDetector, PixelReport, Scene,
};

/// One point of a recall curve swept over `param`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub param: f64,
    pub area_ratio: f64,
    pub recall: f64,
}

/// Pixel-level recall of focus pixels and the fraction of the map above `t`.
/// Recall is 1 when the labels have no positives.
pub fn focuspixel_recall(pred: &ProbMap, gt: &LabelMap, t: f64) -> Result<(f64, f64)> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            actual: pred.dims(),
        });
    }
    let mut positives = 0usize;
    let mut hits = 0usize;
    let mut above = 0usize;
    for (&p, &l) in pred.values().iter().zip(gt.values()) {
        let on = p as f64 > t;
        above += on as usize;
        if l == Label::Focus {
            positives += 1;
            hits += on as usize;
        }
    }
    let recall = if positives == 0 {
        1.0
    } else {
        hits as f64 / positives as f64
    };
    Ok((recall, above as f64 / pred.values().len() as f64))
}

pub fn focuspixel_curve(
    pred: &ProbMap,
    gt: &LabelMap,
    thresholds: &[f64],
) -> Result<Vec<CurvePoint>> {
    thresholds
        .iter()
        .map(|&t| {
            let (recall, area_ratio) = focuspixel_recall(pred, gt, t)?;
            Ok(CurvePoint {
                param: t,
                area_ratio,
                recall,
            })
        })
        .collect()
}

/// Ground truths covered by a confident detection: IoU above `iou_min` and
/// score above `score_min`, both strict.
pub fn confident_subset(
    gts: &[BoxPx],
    dets: &[Detection],
    iou_min: f64,
    score_min: f64,
) -> Result<Vec<BoxPx>> {
    let mut kept = Vec::new();
    for g in gts {
        let mut covered = false;
        for d in dets.iter().filter(|d| d.score > score_min) {
            if iou(g, &d.bbox)? > iou_min {
                covered = true;
                break;
            }
        }
        if covered {
            kept.push(*g);
        }
    }
    Ok(kept)
}

/// Fraction of ground truths fully inside a single chip, and chip area over
/// image area. Chips must not overlap.
pub fn focuschip_recall(
    chips: &[FocusChip],
    gts: &[BoxPx],
    image_w: u32,
    image_h: u32,
) -> Result<(f64, f64)> {
    for (i, a) in chips.iter().enumerate() {
        for b in &chips[i + 1..] {
            if a.rect.overlaps(&b.rect)? {
                return Err(Error::OverlappingChips {
                    first: a.id,
                    second: b.id,
                });
            }
        }
    }
    let mut enclosed = 0usize;
    for g in gts {
        for c in chips {
            if c.rect.contains(g)? {
                enclosed += 1;
                break;
            }
        }
    }
    let recall = if gts.is_empty() {
        1.0
    } else {
        enclosed as f64 / gts.len() as f64
    };
    let area: f64 = chips.iter().map(|c| c.rect.area()).sum();
    Ok((recall, area / (image_w as f64 * image_h as f64)))
}

/// Speedup of the noise-free oracle cascade for each minimum chip size.
pub fn speedup_bound(
    scene: &Scene,
    config: &PyramidConfig,
    labels: &LabelParams,
    chips: &ChipParams,
    ks: &[u32],
) -> Result<Vec<(u32, f64)>> {
    speedup_bound_dataset(std::slice::from_ref(scene), config, labels, chips, ks)
}

/// [`speedup_bound`] with pixels summed over several scenes.
pub fn speedup_bound_dataset(
    scenes: &[Scene],
    config: &PyramidConfig,
    labels: &LabelParams,
    chips: &ChipParams,
    ks: &[u32],
) -> Result<Vec<(u32, f64)>> {
    let detector = OracleDetector::noise_free(*labels);
    ks.iter()
        .map(|&k| {
            let params = CascadeParams::with_chips(ChipParams {
                min_size: k,
                ..*chips
            });
            params.chips[0].validate()?;
            let mut total = PixelReport::from_scales(Vec::new());
            for scene in scenes {
                total.absorb(&run_cascade(scene, &detector, config, &params)?.report);
            }
            Ok((k, total.speedup()))
        })
        .collect()
}

/// Chip recall at the coarsest scale from noise-free focus maps, swept over
/// the minimum chip size (in that scale's pixels). Only objects whose
/// resized size falls in the focus band count as ground truth. Pooled over
/// scenes; the area ratio is total chip area over total resized image area.
pub fn focuschip_curve(
    scenes: &[Scene],
    config: &PyramidConfig,
    labels: &LabelParams,
    chips: &ChipParams,
    ks: &[u32],
) -> Result<Vec<CurvePoint>> {
    let spec = &config.scales()[0];
    let labels = LabelParams {
        stride: config.stride(),
        ..*labels
    };
    let detector = OracleDetector::noise_free(labels);
    let mut per_scene = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let zoom = resize_factor(spec, scene.width, scene.height)?;
        let (w, h) = scaled_dims(scene.width, scene.height, zoom);
        let req = DetectRequest {
            region: BoxPx::new(
                0.0,
                0.0,
                scene.width as f64,
                scene.height as f64,
                Space::Original,
            )?,
            zoom,
            stride: labels.stride,
            scale_index: spec.index,
            chip_id: 0,
            want_focus: true,
        };
        let map = detector
            .detect(scene, &req)?
            .focus
            .ok_or_else(|| Error::DetectorContract("no focus map".into()))?;
        let proj = Projection::scale(zoom, labels.stride);
        let gts = scene
            .objects
            .iter()
            .map(|o| project_box(&o.bbox, Space::Scaled(spec.index), &proj))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|b| labels.band(b.side()) == Label::Focus)
            // resized dimensions are rounded; keep boxes inside them
            .filter_map(|b| b.clip(0.0, 0.0, w as f64, h as f64))
            .collect::<Vec<_>>();
        per_scene.push((map, w, h, gts));
    }
    ks.iter()
        .map(|&k| {
            let params = ChipParams {
                min_size: k,
                ..*chips
            };
            let (mut enclosed, mut total, mut chip_area, mut image_area) = (0.0, 0usize, 0.0, 0.0);
            for (map, w, h, gts) in &per_scene {
                let found = generate_chips(map, &params, *w, *h, labels.stride, spec.index)?;
                let (recall, ratio) = focuschip_recall(&found, gts, *w, *h)?;
                let area = *w as f64 * *h as f64;
                enclosed += (recall * gts.len() as f64).round();
                total += gts.len();
                chip_area += ratio * area;
                image_area += area;
            }
            Ok(CurvePoint {
                param: k as f64,
                area_ratio: if image_area > 0.0 {
                    chip_area / image_area
                } else {
                    0.0
                },
                recall: if total == 0 {
                    1.0
                } else {
                    enclosed / total as f64
                },
            })
        })
        .collect()
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApResult {
    /// `(iou_threshold, ap)` in the order the thresholds were given.
    pub per_threshold: Vec<(f64, f64)>,
    pub mean: f64,
}

const RECALL_POINTS: usize = 101;

/// Area under the interpolated precision-recall curve sampled at 101
/// recall levels. `tp` flags are in descending score order.
fn interpolated_ap(tp: &[bool], n_gt: usize) -> f64 {
    let mut recall = Vec::with_capacity(tp.len());
    let mut precision = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += t as usize;
        recall.push(hits as f64 / n_gt as f64);
        precision.push(hits as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        let first = recall.partition_point(|&x| x < level);
        if first < precision.len() {
            sum += precision[first];
        }
    }
    sum / RECALL_POINTS as f64
}

/// Detections and ground truth `(box, category)` of one image.
pub type ImageEval = (Vec<Detection>, Vec<(BoxPx, u32)>);

/// Single-image [`average_precision_images`].
pub fn average_precision(
    dets: &[Detection],
    gts: &[(BoxPx, u32)],
    iou_thresholds: &[f64],
) -> Result<ApResult> {
    average_precision_images(&[(dets.to_vec(), gts.to_vec())], iou_thresholds)
}

/// Per-category greedy matching in descending score order, pooled over
/// images; each detection takes the unmatched ground truth of its own image
/// with the highest IoU at or above the threshold. AP is averaged over
/// categories that have ground truth, then over thresholds. Zero when there
/// is no ground truth.
pub fn average_precision_images(images: &[ImageEval], iou_thresholds: &[f64]) -> Result<ApResult> {
    let categories: BTreeSet<u32> = images
        .iter()
        .flat_map(|(_, g)| g.iter().map(|&(_, c)| c))
        .collect();
    let mut per_threshold = Vec::with_capacity(iou_thresholds.len());
    for &thr in iou_thresholds {
        let mut total = 0.0;
        for &cat in &categories {
            let mut n_gt = 0;
            let mut taken: Vec<Vec<bool>> = Vec::with_capacity(images.len());
            let mut cat_dets: Vec<(usize, &Detection)> = Vec::new();
            for (i, (dets, gts)) in images.iter().enumerate() {
                let count = gts.iter().filter(|&&(_, c)| c == cat).count();
                n_gt += count;
                taken.push(vec![false; gts.len()]);
                cat_dets.extend(dets.iter().filter(|d| d.category == cat).map(|d| (i, d)));
            }
            // stable: equal scores keep image, then input, order
            cat_dets.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));
            let mut tp = Vec::with_capacity(cat_dets.len());
            for (i, d) in cat_dets {
                let mut best: Option<(usize, f64)> = None;
                for (j, (g, c)) in images[i].1.iter().enumerate() {
                    if *c != cat || taken[i][j] {
                        continue;
                    }
                    let v = iou(&d.bbox, g)?;
                    if v >= thr && best.is_none_or(|(_, b)| v > b) {
                        best = Some((j, v));
                    }
                }
                if let Some((j, _)) = best {
                    taken[i][j] = true;
                }
                tp.push(best.is_some());
            }
            total += interpolated_ap(&tp, n_gt);
        }
        let ap = if categories.is_empty() {
            0.0
        } else {
            total / categories.len() as f64
        };
        per_threshold.push((thr, ap));
    }
    let mean = if per_threshold.is_empty() {
        0.0
    } else {
        per_threshold.iter().map(|&(_, ap)| ap).sum::<f64>() / per_threshold.len() as f64
    };
    Ok(ApResult {
        per_threshold,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ScaleSpec, Space};
    use crate::pipeline::SceneObject;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoxPx {
        BoxPx::new(x, y, w, h, Space::Original).unwrap()
    }

    fn det(b: BoxPx, score: f64, category: u32) -> Detection {
        Detection::new(b, score, category, 1).unwrap()
    }

    fn labels(values: &[i8], w: usize) -> LabelMap {
        let v = values
            .iter()
            .map(|&x| match x {
                1 => Label::Focus,
                -1 => Label::Invalid,
                _ => Label::Negative,
            })
            .collect();
        LabelMap::from_vec(w, values.len() / w, v).unwrap()
    }

    #[test]
    fn pixel_recall_examples() {
        let gt = labels(&[1, 1, 0, 1, -1, 1, 0, 0], 4);
        let perfect = gt.to_focus_probabilities();
        for t in [0.0, 0.3, 0.99] {
            assert_eq!(focuspixel_recall(&perfect, &gt, t).unwrap(), (1.0, 0.5));
        }
        let zeros = ProbMap::zeros(4, 2);
        assert_eq!(focuspixel_recall(&zeros, &gt, 0.5).unwrap().0, 0.0);
        let three = ProbMap::from_vec(4, 2, vec![0.9, 0.9, 0.0, 0.9, 0.0, 0.2, 0.0, 0.0]).unwrap();
        assert_eq!(
            focuspixel_recall(&three, &gt, 0.5).unwrap(),
            (0.75, 3.0 / 8.0)
        );
        let none = labels(&[0, 0], 2);
        assert_eq!(
            focuspixel_recall(&ProbMap::zeros(2, 1), &none, 0.5)
                .unwrap()
                .0,
            1.0
        );
        assert!(focuspixel_recall(&ProbMap::zeros(3, 1), &none, 0.5).is_err());
    }

    #[test]
    fn confident_subset_examples() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let kept = confident_subset(&[g], &[det(g, 0.9, 1)], 0.5, 0.5).unwrap();
        assert_eq!(kept, vec![g]);
        // iou 0.4
        let off = det(bx(0.0, 0.0, 4.0, 10.0), 0.9, 1);
        assert!(confident_subset(&[g], &[off], 0.5, 0.5).unwrap().is_empty());
        // iou 0.6 at score exactly 0.5
        let edge = det(bx(0.0, 0.0, 6.0, 10.0), 0.5, 1);
        assert!(confident_subset(&[g], &[edge], 0.5, 0.5)
            .unwrap()
            .is_empty());
    }

    fn chip(x: f64, y: f64, w: f64, h: f64, id: u32) -> FocusChip {
        FocusChip {
            rect: BoxPx::new(x, y, w, h, Space::Scaled(1)).unwrap(),
            source_scale: 1,
            id,
        }
    }

    #[test]
    fn chip_recall_examples() {
        let g = |x, y, w, h| BoxPx::new(x, y, w, h, Space::Scaled(1)).unwrap();
        let whole = [chip(0.0, 0.0, 100.0, 80.0, 0)];
        assert_eq!(
            focuschip_recall(&whole, &[g(10.0, 10.0, 5.0, 5.0)], 100, 80).unwrap(),
            (1.0, 1.0)
        );
        let halves = [
            chip(0.0, 0.0, 50.0, 80.0, 0),
            chip(50.0, 0.0, 50.0, 80.0, 1),
        ];
        let straddle = g(45.0, 10.0, 10.0, 10.0);
        let inside = g(60.0, 10.0, 10.0, 10.0);
        assert_eq!(
            focuschip_recall(&halves, &[straddle, inside], 100, 80).unwrap(),
            (0.5, 1.0)
        );
        assert_eq!(
            focuschip_recall(&[], &[inside], 100, 80).unwrap(),
            (0.0, 0.0)
        );
        let overlapping = [
            chip(0.0, 0.0, 50.0, 80.0, 0),
            chip(40.0, 0.0, 50.0, 80.0, 1),
        ];
        assert!(focuschip_recall(&overlapping, &[inside], 100, 80).is_err());
    }

    fn two_scales() -> PyramidConfig {
        PyramidConfig::unfiltered(
            vec![
                ScaleSpec::new(1, 500.0, 500.0).unwrap(),
                ScaleSpec::new(2, 1000.0, 1000.0).unwrap(),
            ],
            16,
        )
        .unwrap()
    }

    #[test]
    fn speedup_examples() {
        let obj = SceneObject {
            bbox: bx(200.0, 200.0, 10.0, 10.0),
            category: 1,
        };
        let one = Scene::new(0, 500, 500, vec![obj]).unwrap();
        let base = ChipParams::new(0.5, 3, 512).unwrap();
        let curve =
            speedup_bound(&one, &two_scales(), &LabelParams::default(), &base, &[128]).unwrap();
        let expected = (500.0 * 500.0 + 1000.0 * 1000.0) / (500.0 * 500.0 + 128.0 * 128.0);
        assert_eq!(curve, vec![(128, expected)]);
        assert!((expected - 4.69).abs() < 0.005);

        let empty = Scene::new(0, 500, 500, vec![]).unwrap();
        let curve = speedup_bound(
            &empty,
            &two_scales(),
            &LabelParams::default(),
            &base,
            &[64, 512],
        )
        .unwrap();
        assert!(curve.iter().all(|&(_, s)| s == 5.0));

        let full =
            speedup_bound(&one, &two_scales(), &LabelParams::default(), &base, &[1000]).unwrap();
        assert_eq!(full[0].1, 1.0);
    }

    #[test]
    fn ap_examples() {
        let g = bx(10.0, 10.0, 20.0, 20.0);
        let h = bx(50.0, 50.0, 30.0, 20.0);
        let exact = [det(g, 1.0, 1), det(h, 1.0, 2)];
        let r = average_precision(&exact, &[(g, 1), (h, 2)], &coco_thresholds()).unwrap();
        assert!(r.per_threshold.iter().all(|&(_, ap)| ap == 1.0));
        assert_eq!(r.mean, 1.0);

        let r = average_precision(&[], &[(g, 1)], &[0.5]).unwrap();
        assert_eq!(r.mean, 0.0);

        let fp = det(bx(100.0, 100.0, 20.0, 20.0), 0.9, 1);
        let r = average_precision(&[fp, det(g, 0.8, 1)], &[(g, 1)], &[0.5]).unwrap();
        assert_eq!(r.per_threshold, vec![(0.5, 0.5)]);

        // wrong category never matches
        let r = average_precision(&[det(g, 1.0, 2)], &[(g, 1)], &[0.5]).unwrap();
        assert_eq!(r.mean, 0.0);
    }

    #[test]
    fn ap_matches_within_images_only() {
        let g = bx(10.0, 10.0, 20.0, 20.0);
        // the detection in image 0 must not claim the box of image 1
        let images = vec![(vec![det(g, 0.9, 1)], vec![]), (vec![], vec![(g, 1)])];
        let r = average_precision_images(&images, &[0.5]).unwrap();
        assert_eq!(r.mean, 0.0);
        let images = vec![
            (vec![det(g, 0.9, 1)], vec![(g, 1)]),
            (vec![det(g, 0.8, 1)], vec![(g, 1)]),
        ];
        assert_eq!(average_precision_images(&images, &[0.5]).unwrap().mean, 1.0);
    }

    #[test]
    fn chip_curve_saturates_for_perfect_maps() {
        let objs = [
            (100.0, 100.0, 40.0, 30.0),
            (400.0, 300.0, 50.0, 50.0),
            (10.0, 10.0, 300.0, 300.0),
        ];
        let objects = objs
            .iter()
            .map(|&(x, y, w, h)| SceneObject {
                bbox: bx(x, y, w, h),
                category: 1,
            })
            .collect();
        let scene = Scene::new(0, 640, 480, objects).unwrap();
        let curve = focuschip_curve(
            &[scene],
            &two_scales(),
            &LabelParams::default(),
            &ChipParams::default(),
            &[16, 64, 256],
        )
        .unwrap();
        for p in &curve {
            assert_eq!(p.recall, 1.0);
            assert!(p.area_ratio > 0.0 && p.area_ratio <= 1.0);
        }
        assert!(curve[0].area_ratio <= curve[2].area_ratio);
    }

    #[test]
    fn coco_threshold_values() {
        let t = coco_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[9], 0.95);
    }

    // Reference AP: for each recall level, scan every score cutoff directly.
    fn brute_ap(tp: &[bool], n_gt: usize) -> f64 {
        let mut sum = 0.0;
        for r in 0..=100 {
            let level = r as f64 / 100.0;
            let mut best = 0.0f64;
            for cut in 1..=tp.len() {
                let hits = tp[..cut].iter().filter(|&&t| t).count();
                let recall = hits as f64 / n_gt as f64;
                if recall >= level {
                    best = best.max(hits as f64 / cut as f64);
                }
            }
            sum += best;
        }
        sum / 101.0
    }

    proptest! {
        #[test]
        fn interpolation_matches_enumeration(
            tp in proptest::collection::vec(any::<bool>(), 0..10),
            extra in 0usize..4,
        ) {
            let n_gt = tp.iter().filter(|&&t| t).count() + extra;
            prop_assume!(n_gt > 0);
            prop_assert_eq!(interpolated_ap(&tp, n_gt), brute_ap(&tp, n_gt));
        }

        #[test]
        fn recall_non_increasing_in_t(
            cells in proptest::collection::vec((0.0f32..=1.0, -1i8..=1), 1..64),
        ) {
            let w = cells.len();
            let pred = ProbMap::from_vec(w, 1, cells.iter().map(|c| c.0).collect()).unwrap();
            let gt = labels(&cells.iter().map(|c| c.1).collect::<Vec<_>>(), w);
            let ts: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
            let curve = focuspixel_curve(&pred, &gt, &ts).unwrap();
            for pair in curve.windows(2) {
                prop_assert!(pair[1].recall <= pair[0].recall);
                prop_assert!(pair[1].area_ratio <= pair[0].area_ratio);
            }
        }
    }
}
