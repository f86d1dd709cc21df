//! Seeded random problem instances shared by the integration and
//! acceptance suites.

use bme_core::{
    CandidateModel, Event, GroundTruth, MissPattern, NoiseProfile, ScoreMatrix, Spot, SpotPrediction, SynthConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracles::{RefDetection, RefVideo};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct MetricInstance {
    pub gt: Vec<GroundTruth>,
    pub preds: Vec<SpotPrediction>,
    pub ref_videos: Vec<RefVideo>,
    pub ref_dets: Vec<RefDetection>,
    pub tolerance_sec: f64,
}

/// ≤3 videos, ≤5 events per class, ≤12 predictions. Confidences come from a
/// coarse grid half of the time so ties are common.
pub fn metric_instance(seed: u64) -> MetricInstance {
    let mut r = rng(seed);
    let num_videos = r.random_range(1..=3);
    let num_classes = r.random_range(1..=3);
    let num_frames = 120;
    let fps = if r.random_bool(0.5) { 25.0 } else { 10.0 };
    let tolerance_sec = [1.0, 0.5, 0.3][r.random_range(0..3)];
    let coarse = r.random_bool(0.5);

    let mut per_video_events: Vec<Vec<Event>> = vec![Vec::new(); num_videos];
    for class in 0..num_classes {
        for _ in 0..r.random_range(0..=5) {
            let v = r.random_range(0..num_videos);
            per_video_events[v].push(Event {
                frame: r.random_range(0..num_frames),
                class,
            });
        }
    }
    let ids: Vec<String> = (0..num_videos).map(|v| format!("v{v}")).collect();
    let gt: Vec<GroundTruth> = ids
        .iter()
        .zip(&per_video_events)
        .map(|(id, ev)| GroundTruth::new(id.clone(), fps, num_frames, ev.clone()).unwrap())
        .collect();

    let all_events: Vec<(usize, Event)> = per_video_events
        .iter()
        .enumerate()
        .flat_map(|(v, evs)| evs.iter().map(move |e| (v, *e)))
        .collect();
    let mut preds: Vec<SpotPrediction> = ids.iter().map(SpotPrediction::empty).collect();
    for _ in 0..r.random_range(0..=12) {
        let (v, frame, class) = if !all_events.is_empty() && r.random_bool(0.7) {
            let (v, e) = all_events[r.random_range(0..all_events.len())];
            let offset: i64 = r.random_range(-15..=15);
            let frame = (e.frame as i64 + offset).clamp(0, num_frames as i64 - 1) as usize;
            (v, frame, e.class)
        } else {
            (
                r.random_range(0..num_videos),
                r.random_range(0..num_frames),
                r.random_range(0..num_classes),
            )
        };
        let confidence = if coarse {
            r.random_range(1..=5) as f64 / 5.0
        } else {
            r.random::<f64>()
        };
        preds[v].spots.push(Spot { frame, class, confidence });
    }

    let ref_videos = gt
        .iter()
        .map(|g| RefVideo {
            id: g.video_id().to_owned(),
            fps: g.fps(),
            events: g.events().iter().map(|e| (e.frame, e.class)).collect(),
        })
        .collect();
    let ref_dets = preds
        .iter()
        .flat_map(|p| p.spots.iter().map(move |s| (p.video_id.clone(), s.frame, s.class, s.confidence)))
        .collect();
    MetricInstance {
        gt,
        preds,
        ref_videos,
        ref_dets,
        tolerance_sec,
    }
}

/// A random score column of up to 200 frames; sparse, dense or tied.
pub fn score_column(seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let n = r.random_range(1..=200);
    match r.random_range(0..3) {
        0 => (0..n).map(|_| r.random::<f64>()).collect(),
        1 => (0..n)
            .map(|_| if r.random_bool(0.1) { r.random::<f64>() } else { 0.0 })
            .collect(),
        _ => (0..n).map(|_| r.random_range(0..=4) as f64 / 4.0).collect(),
    }
}

pub fn noisy_profile(id: &str, r: &mut ChaCha8Rng) -> NoiseProfile {
    NoiseProfile {
        id: id.to_owned(),
        arch_tag: String::new(),
        optimizer_tag: String::new(),
        stride_s: 1,
        delta: 0,
        peak_width: 8,
        miss_rate: r.random_range(0.1..0.5),
        false_alarm_rate: r.random_range(0.5..6.0),
        jitter_std: r.random_range(0.0..8.0),
        noise_floor: r.random_range(0.0..0.2),
    }
}

/// 5 videos × 2000 frames × 3 classes with 6 independently noisy candidates.
pub fn monotone_config(seed: u64) -> SynthConfig {
    let mut r = rng(seed ^ 0x9e37_79b9);
    SynthConfig {
        num_videos: 5,
        num_frames: 2000,
        num_classes: 3,
        events_per_class: 8.0,
        fps: 25.0,
        peak_width: 8,
        miss_pattern: MissPattern::Independent,
        candidates: (0..6).map(|i| noisy_profile(&format!("cand_{i}"), &mut r)).collect(),
        test_videos: 0,
        seed,
    }
}

/// Two candidates whose 40% misses are disjoint, plus mild jitter and
/// false alarms.
pub fn complementary_config(seed: u64) -> SynthConfig {
    let profile = |id: &str| NoiseProfile {
        id: id.to_owned(),
        arch_tag: String::new(),
        optimizer_tag: String::new(),
        stride_s: 1,
        delta: 0,
        peak_width: 8,
        miss_rate: 0.4,
        false_alarm_rate: 2.0,
        jitter_std: 2.0,
        noise_floor: 0.05,
    };
    SynthConfig {
        num_videos: 5,
        num_frames: 2000,
        num_classes: 3,
        events_per_class: 8.0,
        fps: 25.0,
        peak_width: 8,
        miss_pattern: MissPattern::Disjoint,
        candidates: vec![profile("left"), profile("right")],
        test_videos: 0,
        seed,
    }
}

/// ≤3 candidates on a 200-frame, 2-class video with scores snapped to
/// multiples of 1/64, so that with dyadic weights every ensemble value is
/// exact in `f64` whichever way the convex combination is written.
pub fn greedy_instance(seed: u64) -> (Vec<CandidateModel>, Vec<GroundTruth>) {
    let mut r = rng(seed);
    let num_candidates = r.random_range(1..=3);
    let cfg = SynthConfig {
        num_videos: r.random_range(1..=2),
        num_frames: 200,
        num_classes: 2,
        events_per_class: 3.0,
        fps: 25.0,
        peak_width: 6,
        miss_pattern: MissPattern::Independent,
        candidates: (0..num_candidates)
            .map(|i| NoiseProfile {
                peak_width: 6,
                ..noisy_profile(&format!("c{i}"), &mut r)
            })
            .collect(),
        test_videos: 0,
        seed,
    };
    let data = bme_core::generate(&cfg).unwrap();
    let pool = data
        .candidates
        .into_iter()
        .map(|mut c| {
            for m in c.scores.values_mut() {
                *m = m.map_scalar(|v| (v * 64.0).round() / 64.0).unwrap();
            }
            c
        })
        .collect();
    (pool, data.ground_truth)
}

pub fn flat(m: &ScoreMatrix) -> Vec<f64> {
    m.values().to_vec()
}
