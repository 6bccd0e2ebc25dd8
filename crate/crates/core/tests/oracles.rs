mod common;

use common::{corners, naive_chips, naive_labels};
use focus_cascade::chipgen::{generate_chips, merge_chips, ChipParams, FocusChip};
use focus_cascade::geometry::{BoxPx, PyramidConfig, ScaleSpec, Space};
use focus_cascade::labeler::{assign_labels, LabelParams};
use focus_cascade::maps::{Label, ProbMap};
use focus_cascade::pipeline::{
    run_cascade, run_full_pyramid, synth_scene, CascadeParams, OracleDetector, OracleNoise,
    SceneSpec, SizeBands,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(rng: &mut ChaCha8Rng, cols: usize, rows: usize, density: f64) -> ProbMap {
    let values = (0..cols * rows)
        .map(|_| {
            if rng.random::<f64>() < density {
                rng.random::<f32>()
            } else {
                0.0
            }
        })
        .collect();
    ProbMap::from_vec(cols, rows, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn chips_match_naive_reference(
        seed in any::<u64>(),
        cols in 1usize..40,
        rows in 1usize..40,
        stride in prop::sample::select(vec![1u32, 4, 16]),
        d in prop::sample::select(vec![1u32, 3, 5]),
        k in prop::sample::select(vec![4u32, 8, 16, 64]),
        t in 0.05f64..0.95,
        density in 0.0f64..0.3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = random_map(&mut rng, cols, rows, density);
        let w = cols as u32 * stride - rng.random_range(0..stride);
        let h = rows as u32 * stride - rng.random_range(0..stride);
        let params = ChipParams::new(t, d, k).unwrap();
        let chips = generate_chips(&map, &params, w, h, stride, 1).unwrap();
        let mut got: Vec<_> = chips.iter().map(|c| corners(&c.rect)).collect();
        got.sort();
        prop_assert_eq!(got, naive_chips(map.values(), cols, rows, t, d, k, stride, w, h));
    }

    #[test]
    fn merge_ignores_input_order(seed in any::<u64>(), n in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chips: Vec<FocusChip> = (0..n)
            .map(|i| {
                let x = rng.random_range(0..60) as f64;
                let y = rng.random_range(0..60) as f64;
                let w = rng.random_range(1..20) as f64;
                let h = rng.random_range(1..20) as f64;
                FocusChip { rect: BoxPx::new(x, y, w, h, Space::Scaled(1)).unwrap(), source_scale: 1, id: i as u32 }
            })
            .collect();
        let a = merge_chips(&chips).unwrap();
        let mut reversed = chips.clone();
        reversed.reverse();
        let b = merge_chips(&reversed).unwrap();
        let rects = |v: &[FocusChip]| v.iter().map(|c| corners(&c.rect)).collect::<Vec<_>>();
        prop_assert_eq!(rects(&a), rects(&b));
        prop_assert_eq!(&merge_chips(&a).unwrap(), &a);
        for c in &chips {
            prop_assert!(a.iter().any(|m| m.rect.contains(&c.rect).unwrap()));
        }
    }

    #[test]
    fn labels_match_naive_reference(
        seed in any::<u64>(),
        w in 1u32..200,
        h in 1u32..200,
        n in 0usize..10,
        stride in prop::sample::select(vec![1u32, 8, 16]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = LabelParams { stride, ..LabelParams::default() };
        let edges = [p.a, p.b, p.c];
        let boxes: Vec<BoxPx> = (0..n)
            .map(|_| {
                let (bw, bh) = if rng.random_bool(0.3) {
                    let e = edges[rng.random_range(0..3)];
                    (e, e)
                } else {
                    (rng.random_range(0.5..150.0), rng.random_range(0.5..150.0))
                };
                let x = rng.random_range(-20.0..w as f64);
                let y = rng.random_range(-20.0..h as f64);
                BoxPx::new(x, y, bw, bh, Space::ChipLocal(0)).unwrap()
            })
            .collect();
        let map = assign_labels(&boxes, w, h, &p).unwrap();
        prop_assert_eq!(map.values(), &naive_labels(&boxes, w, h, &p)[..]);
    }

    #[test]
    fn adding_a_box_keeps_focus_cells(seed in any::<u64>(), n in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut boxes: Vec<BoxPx> = (0..=n)
            .map(|_| {
                BoxPx::new(
                    rng.random_range(0.0..120.0),
                    rng.random_range(0.0..120.0),
                    rng.random_range(1.0..120.0),
                    rng.random_range(1.0..120.0),
                    Space::Scaled(1),
                )
                .unwrap()
            })
            .collect();
        let extra = boxes.pop().unwrap();
        let p = LabelParams::default();
        let before = assign_labels(&boxes, 128, 128, &p).unwrap();
        boxes.push(extra);
        let after = assign_labels(&boxes, 128, 128, &p).unwrap();
        for (b, a) in before.values().iter().zip(after.values()) {
            if *b == Label::Focus {
                prop_assert_eq!(*a, Label::Focus);
            }
        }
    }
}

fn small_pyramid() -> PyramidConfig {
    PyramidConfig::unfiltered(
        vec![
            ScaleSpec::new(1, 120.0, 128.0).unwrap(),
            ScaleSpec::new(2, 200.0, 320.0).unwrap(),
            ScaleSpec::new(3, 350.0, 500.0).unwrap(),
        ],
        16,
    )
    .unwrap()
}

fn scene_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        image_id: seed,
        small: 3,
        medium: 2,
        large: 1,
        bands: SizeBands {
            small: (30.0, 64.0),
            medium: (64.0, 96.0),
            large: (96.0, 200.0),
        },
        categories: 3,
        non_overlapping: true,
        seed,
        ..SceneSpec::default()
    }
}

#[test]
fn cascade_cost_never_exceeds_baseline() {
    let det = OracleDetector::noise_free(LabelParams::default());
    for seed in 0..20 {
        let scene = synth_scene(&scene_spec(seed)).unwrap();
        for k in [16, 128, 1024] {
            let params = CascadeParams::with_chips(ChipParams::new(0.5, 3, k).unwrap());
            let out = run_cascade(&scene, &det, &small_pyramid(), &params).unwrap();
            assert!(out.report.total_raw <= out.report.baseline_pixels);
            for s in &out.report.scales {
                assert!(s.raw_pixels <= s.full_pixels, "scale {}", s.scale_index);
                assert!(s.padded_pixels >= s.raw_pixels);
            }
        }
    }
}

#[test]
fn noisy_cascade_is_deterministic() {
    let noise = OracleNoise {
        miss_rate: 0.2,
        false_positive_rate: 30.0,
        jitter_px: 2.0,
        map_noise_sd: 0.3,
        seed: 11,
    };
    let det = OracleDetector::new(noise, LabelParams::default());
    let params = CascadeParams::with_chips(ChipParams::new(0.5, 3, 128).unwrap());
    for seed in 0..5 {
        let scene = synth_scene(&scene_spec(seed)).unwrap();
        let a = run_cascade(&scene, &det, &small_pyramid(), &params).unwrap();
        let b = run_cascade(&scene, &det, &small_pyramid(), &params).unwrap();
        assert_eq!(a.detections, b.detections);
        assert_eq!(a.report, b.report);
    }
}

#[test]
fn unreachable_threshold_skips_finer_scales() {
    let det = OracleDetector::noise_free(LabelParams::default());
    let scene = synth_scene(&scene_spec(4)).unwrap();
    let params = CascadeParams::with_chips(ChipParams::new(1.0, 3, 128).unwrap());
    let out = run_cascade(&scene, &det, &small_pyramid(), &params).unwrap();
    assert_eq!(out.report.scale(2).unwrap().raw_pixels, 0);
    assert_eq!(out.report.scale(3).unwrap().raw_pixels, 0);
    assert_eq!(
        out.report.total_raw,
        out.report.scale(1).unwrap().full_pixels
    );
}

#[test]
fn full_pyramid_costs_the_baseline() {
    let det = OracleDetector::noise_free(LabelParams::default());
    let scene = synth_scene(&scene_spec(2)).unwrap();
    let out = run_full_pyramid(&scene, &det, &small_pyramid(), &CascadeParams::default()).unwrap();
    assert_eq!(out.report.total_raw, out.report.baseline_pixels);
    assert_eq!(out.report.speedup(), 1.0);
}
