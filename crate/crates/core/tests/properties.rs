mod common;

use bme_core::{
    aggregate_clips, dilate_labels, effective_weights, evaluate_ensemble, generate, map_at_tolerance, rasterize,
    run_bme, sample_clips, temporal_nms, ClipScores, EnsembleSpec, Event, GroundTruth, NmsConfig, NoiseProfile,
    SamplingConfig, ScoreMatrix, SearchConfig, Spot, SpotPrediction, SynthConfig, TerminalReason,
};
use common::instances::{self, complementary_config, metric_instance};
use proptest::prelude::*;

fn nms_frames(p: &SpotPrediction) -> Vec<(usize, usize)> {
    p.spots.iter().map(|s| (s.class, s.frame)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nms_spots_are_spaced_and_above_threshold(
        col in prop::collection::vec(0.0f64..=1.0, 1..200),
        window in 1usize..20,
        threshold in 0.0f64..0.5,
    ) {
        let m = ScoreMatrix::new("v", col.len(), 1, col.clone()).unwrap();
        let out = temporal_nms(&m, &NmsConfig { window, frame_rate: 25.0, threshold });
        for pair in out.spots.windows(2) {
            prop_assert!(pair[1].frame - pair[0].frame > window);
        }
        for s in &out.spots {
            prop_assert!(s.confidence >= threshold);
            prop_assert_eq!(s.confidence, col[s.frame]);
        }
        let again = temporal_nms(&rasterize(&out, col.len(), 1).unwrap(), &NmsConfig { window, frame_rate: 25.0, threshold });
        prop_assert_eq!(again, out);
    }

    #[test]
    fn nms_selection_is_rank_invariant(col in prop::collection::vec(0.0f64..=1.0, 1..150), window in 1usize..15) {
        let cfg = NmsConfig { window, frame_rate: 25.0, threshold: 0.0 };
        let m = ScoreMatrix::new("v", col.len(), 1, col.clone()).unwrap();
        // halving is exact in binary floating point, so no new ties appear
        let scaled = m.map_scalar(|v| v * 0.5).unwrap();
        prop_assert_eq!(nms_frames(&temporal_nms(&m, &cfg)), nms_frames(&temporal_nms(&scaled, &cfg)));
    }

    #[test]
    fn aggregation_ignores_clip_order(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 2), 12),
        rotate in 0usize..4,
    ) {
        let clips: Vec<ClipScores> = (0..4)
            .map(|i| ClipScores { video_id: "v".into(), start_frame: i, stride_s: 1, values: rows[i * 3..i * 3 + 3].to_vec() })
            .collect();
        let mut shuffled = clips.clone();
        shuffled.rotate_left(rotate);
        shuffled.swap(0, 3);
        let a = aggregate_clips(&clips, 6, 2).unwrap();
        let b = aggregate_clips(&shuffled, 6, 2).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn labeled_frame_count_grows_with_delta(
        frames in prop::collection::vec((0usize..300, 0usize..3), 0..15),
        delta in 0usize..8,
    ) {
        let gt = GroundTruth::new("v", 25.0, 300, frames.iter().map(|&(frame, class)| Event { frame, class }).collect()).unwrap();
        let small = dilate_labels(&gt, delta);
        let large = dilate_labels(&gt, delta + 1);
        prop_assert!(large.labeled_frames() >= small.labeled_frames());
        for (f, label) in small.labels.iter().enumerate() {
            if let Some(c) = label {
                prop_assert!(gt.events().iter().any(|e| e.class == *c && e.frame.abs_diff(f) <= delta));
            }
        }
    }
}

#[test]
fn map_depends_only_on_confidence_ranks() {
    for seed in 0..100 {
        let inst = metric_instance(seed);
        let Ok(base) = map_at_tolerance(&inst.preds, &inst.gt, inst.tolerance_sec) else { continue };
        let squashed: Vec<SpotPrediction> = inst
            .preds
            .iter()
            .map(|p| SpotPrediction::new(p.video_id.clone(), p.spots.iter().map(|s| Spot { confidence: s.confidence * s.confidence * 0.5, ..*s }).collect()))
            .collect();
        let moved = map_at_tolerance(&squashed, &inst.gt, inst.tolerance_sec).unwrap();
        assert_eq!(base.map, moved.map, "seed {seed}");
    }
}

#[test]
fn map_ignores_input_order() {
    for seed in 0..100 {
        let inst = metric_instance(seed);
        let Ok(base) = map_at_tolerance(&inst.preds, &inst.gt, inst.tolerance_sec) else { continue };
        let mut preds = inst.preds.clone();
        preds.reverse();
        for p in &mut preds {
            p.spots.reverse();
        }
        let mut gt = inst.gt.clone();
        gt.reverse();
        assert_eq!(base.map, map_at_tolerance(&preds, &gt, inst.tolerance_sec).unwrap().map);
    }
}

#[test]
fn lowest_confidence_match_never_hurts() {
    for seed in 0..200 {
        let inst = metric_instance(seed);
        let Ok(base) = map_at_tolerance(&inst.preds, &inst.gt, inst.tolerance_sec) else { continue };
        // find an event no prediction is matched to: pick any event with no
        // same-class prediction within tolerance in its video
        for g in &inst.gt {
            let tol = g.seconds_to_frames(inst.tolerance_sec);
            let Some(ev) = g.events().iter().find(|e| {
                !inst
                    .preds
                    .iter()
                    .filter(|p| p.video_id == g.video_id())
                    .flat_map(|p| &p.spots)
                    .any(|s| s.class == e.class && s.frame.abs_diff(e.frame) <= tol)
            }) else {
                continue;
            };
            let mut preds = inst.preds.clone();
            let p = preds.iter_mut().find(|p| p.video_id == g.video_id()).unwrap();
            p.spots.push(Spot { frame: ev.frame, class: ev.class, confidence: 0.0 });
            let after = map_at_tolerance(&preds, &inst.gt, inst.tolerance_sec).unwrap();
            assert!(after.map >= base.map, "seed {seed}: {} < {}", after.map, base.map);
            break;
        }
    }
}

#[test]
fn perfect_predictions_score_one() {
    for seed in 0..50 {
        let inst = metric_instance(seed);
        if inst.gt.iter().all(|g| g.events().is_empty()) {
            continue;
        }
        let mut c = 1.0;
        let preds: Vec<SpotPrediction> = inst
            .gt
            .iter()
            .map(|g| {
                SpotPrediction::new(
                    g.video_id(),
                    g.events()
                        .iter()
                        .map(|e| {
                            c *= 0.97;
                            Spot { frame: e.frame, class: e.class, confidence: c }
                        })
                        .collect(),
                )
            })
            .collect();
        assert_eq!(map_at_tolerance(&preds, &inst.gt, inst.tolerance_sec).unwrap().map, 1.0);
        assert_eq!(map_at_tolerance::<f64>(&[], &inst.gt, inst.tolerance_sec).unwrap().map, 0.0);
    }
}

#[test]
fn isolated_event_label_counts() {
    for delta in [0usize, 2, 4, 5] {
        for frame in [0usize, 3, 50, 96, 99] {
            let gt = GroundTruth::new("v", 25.0, 100, vec![Event { frame, class: 1 }]).unwrap();
            let lo = frame.saturating_sub(delta);
            let hi = (frame + delta).min(99);
            assert_eq!(dilate_labels(&gt, delta).labeled_frames(), hi - lo + 1);
        }
    }
}

#[test]
fn clip_sampling_is_seeded_and_in_range() {
    let gt = GroundTruth::new("v", 25.0, 10_000, vec![Event { frame: 500, class: 0 }]).unwrap();
    let labels = dilate_labels(&gt, 4);
    let cfg = SamplingConfig { num_clips: 50, length: 100, stride: 2, delta: 4, seed: 1 };
    let a = sample_clips(&labels, &cfg).unwrap();
    assert_eq!(a, sample_clips(&labels, &cfg).unwrap());
    let b = sample_clips(&labels, &SamplingConfig { seed: 2, ..cfg.clone() }).unwrap();
    assert_ne!(a, b);
    for clip in a.iter().chain(&b) {
        assert_eq!(clip.len(), 100);
        assert!(clip.frame_indices.windows(2).all(|p| p[1] - p[0] == 2));
        assert!(*clip.frame_indices.last().unwrap() < 10_000);
        for (f, l) in clip.frame_indices.iter().zip(&clip.labels) {
            assert_eq!(*l, labels.labels[*f]);
        }
    }
}

fn oracle_config() -> SynthConfig {
    SynthConfig {
        num_videos: 3,
        num_frames: 1500,
        num_classes: 3,
        events_per_class: 6.0,
        fps: 25.0,
        peak_width: 8,
        miss_pattern: Default::default(),
        candidates: vec![
            NoiseProfile::oracle("oracle", 8),
            NoiseProfile {
                miss_rate: 1.0,
                noise_floor: 0.008,
                ..NoiseProfile::oracle("blind", 8)
            },
        ],
        test_videos: 0,
        seed: 99,
    }
}

#[test]
fn noiseless_candidate_is_perfect_and_blind_one_scores_zero() {
    let data = generate(&oracle_config()).unwrap();
    let nms = NmsConfig::default();
    let perfect = evaluate_ensemble(&EnsembleSpec::single("oracle"), &data.candidates, &data.ground_truth, 1.0, &nms).unwrap();
    assert_eq!(perfect.map, 1.0);
    for g in &data.ground_truth {
        let spots = temporal_nms(&data.candidates[0].scores[g.video_id()], &nms);
        let found: Vec<Event> = spots.spots.iter().map(|s| Event { frame: s.frame, class: s.class }).collect();
        let mut want = g.events().to_vec();
        want.sort_by_key(|e| (e.class, e.frame));
        assert_eq!(found, want);
    }
    let blind = evaluate_ensemble(&EnsembleSpec::single("blind"), &data.candidates, &data.ground_truth, 1.0, &nms).unwrap();
    assert_eq!(blind.map, 0.0);
    assert!(blind.per_class.iter().all(|c| c.num_predictions == 0));
}

#[test]
fn synthetic_generation_is_reproducible() {
    let mut cfg = instances::monotone_config(4);
    cfg.candidates.truncate(5);
    for c in &mut cfg.candidates {
        c.jitter_std = 3.0;
    }
    let a = generate(&cfg).unwrap();
    let b = generate(&cfg).unwrap();
    assert_eq!(a.ground_truth, b.ground_truth);
    for (x, y) in a.candidates.iter().zip(&b.candidates) {
        for (mx, my) in x.scores.values().zip(y.scores.values()) {
            let bx: Vec<u64> = mx.values().iter().map(|v| v.to_bits()).collect();
            let by: Vec<u64> = my.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bx, by);
        }
    }
    let c = generate(&SynthConfig { seed: 5, ..cfg }).unwrap();
    assert_ne!(a.ground_truth, c.ground_truth);
}

#[test]
fn search_invariants() {
    let data = generate(&complementary_config(1)).unwrap();
    let gt = &data.ground_truth;
    let pool = data.candidates.clone();

    let cfg = SearchConfig::default();
    let (spec, trace) = run_bme(&pool, gt, &cfg).unwrap();
    assert!(trace.iterations.windows(2).all(|p| p[1].map > p[0].map));
    assert!(trace.iterations.len() <= cfg.max_iters);
    let total: f64 = effective_weights(&spec).unwrap().iter().map(|w| w.1).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let serial = run_bme(&pool, gt, &SearchConfig { threads: 1, ..cfg.clone() }).unwrap();
    let wide = run_bme(&pool, gt, &SearchConfig { threads: 4, ..cfg.clone() }).unwrap();
    assert_eq!(serial, wide);
    assert_eq!(serial, (spec, trace));

    let (spec, _) = run_bme(&pool, gt, &SearchConfig { allow_reselection: false, ..cfg.clone() }).unwrap();
    let mut ids: Vec<&str> = spec.steps().iter().map(|s| s.candidate_id.as_str()).collect();
    let n = ids.len();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), n);

    let (spec, trace) = run_bme(&pool, gt, &SearchConfig { weight_grid: vec![1.0], ..cfg }).unwrap();
    assert!(trace.iterations.len() <= 2);
    assert_eq!(spec.len(), trace.iterations.len());
    assert_eq!(trace.terminal_reason, TerminalReason::NoImprovement);
}
