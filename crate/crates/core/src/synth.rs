//! Synthetic event-spotting benchmarks with controllably noisy detectors.
//!
//! Each video gets its own ChaCha stream derived from the seed, and each
//! `(video, candidate)` pair another one, so results do not depend on
//! generation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateModel, Event, GroundTruth, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissPattern {
    /// Every candidate misses each event independently with its `miss_rate`.
    #[default]
    Independent,
    /// Each event draws one shared uniform `u`; candidate `i` misses the
    /// events whose `u` falls in its slice of `[0, 1)`. The slices are laid
    /// end to end in pool order, so misses never overlap.
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseProfile {
    pub id: String,
    #[serde(default)]
    pub arch_tag: String,
    #[serde(default)]
    pub optimizer_tag: String,
    #[serde(default = "one")]
    pub stride_s: usize,
    #[serde(default)]
    pub delta: usize,
    /// Half-width of the triangular response around each detected event.
    pub peak_width: usize,
    pub miss_rate: f64,
    /// Spurious peaks per 1000 frames, per class.
    pub false_alarm_rate: f64,
    pub jitter_std: f64,
    pub noise_floor: f64,
}

fn one() -> usize {
    1
}

fn default_fps() -> f64 {
    25.0
}

impl NoiseProfile {
    /// A detector that reproduces the ground truth exactly.
    pub fn oracle(id: impl Into<String>, peak_width: usize) -> Self {
        NoiseProfile {
            id: id.into(),
            arch_tag: "oracle".into(),
            optimizer_tag: String::new(),
            stride_s: 1,
            delta: 0,
            peak_width,
            miss_rate: 0.0,
            false_alarm_rate: 0.0,
            jitter_std: 0.0,
            noise_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub num_frames: usize,
    pub num_classes: usize,
    /// Mean of the Poisson event count per class per video.
    pub events_per_class: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Minimum spacing of same-class events is `2 * peak_width` frames.
    pub peak_width: usize,
    #[serde(default)]
    pub miss_pattern: MissPattern,
    pub candidates: Vec<NoiseProfile>,
    /// How many of the trailing videos form the test split.
    #[serde(default)]
    pub test_videos: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_videos == 0 || self.num_frames == 0 || self.num_classes == 0 {
            return bad("videos, frames and classes must be positive".into());
        }
        if self.test_videos > self.num_videos {
            return bad(format!("{} test videos requested out of {}", self.test_videos, self.num_videos));
        }
        if !(self.events_per_class.is_finite() && self.events_per_class >= 0.0) {
            return bad(format!("events_per_class must be non-negative, got {}", self.events_per_class));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.peak_width == 0 || self.num_frames <= 2 * self.peak_width {
            return bad(format!(
                "peak_width {} must be positive and below half of {} frames",
                self.peak_width, self.num_frames
            ));
        }
        let mut ids = std::collections::BTreeSet::new();
        for c in &self.candidates {
            if !ids.insert(c.id.as_str()) {
                return bad(format!("duplicate candidate id {}", c.id));
            }
            if c.peak_width == 0 || self.num_frames <= 2 * c.peak_width {
                return bad(format!("candidate {}: invalid peak_width {}", c.id, c.peak_width));
            }
            let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
            if !unit(c.miss_rate) || !unit(c.noise_floor) {
                return bad(format!("candidate {}: miss_rate and noise_floor must be in [0, 1]", c.id));
            }
            if c.noise_floor >= 1.0 {
                return bad(format!("candidate {}: noise_floor must be below 1", c.id));
            }
            if !(c.false_alarm_rate.is_finite() && c.false_alarm_rate >= 0.0) {
                return bad(format!("candidate {}: false_alarm_rate must be non-negative", c.id));
            }
            if !(c.jitter_std.is_finite() && c.jitter_std >= 0.0) {
                return bad(format!("candidate {}: jitter_std must be non-negative", c.id));
            }
            if c.stride_s == 0 {
                return bad(format!("candidate {}: stride_s must be positive", c.id));
            }
        }
        if self.miss_pattern == MissPattern::Disjoint {
            let total: f64 = self.candidates.iter().map(|c| c.miss_rate).sum();
            if total > 1.0 + 1e-12 {
                return bad(format!("disjoint miss rates sum to {total} > 1"));
            }
        }
        Ok(())
    }

    pub fn video_id(&self, index: usize) -> String {
        format!("video_{index:03}")
    }

    /// Video ids of the validation split (all but the trailing `test_videos`).
    pub fn valid_ids(&self) -> Vec<String> {
        (0..self.num_videos - self.test_videos).map(|i| self.video_id(i)).collect()
    }

    pub fn test_ids(&self) -> Vec<String> {
        (self.num_videos - self.test_videos..self.num_videos).map(|i| self.video_id(i)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub ground_truth: Vec<GroundTruth>,
    pub candidates: Vec<CandidateModel>,
}

impl SynthDataset {
    pub fn split(&self, ids: &[String]) -> Vec<GroundTruth> {
        self.ground_truth
            .iter()
            .filter(|g| ids.iter().any(|id| id == g.video_id()))
            .cloned()
            .collect()
    }
}

fn stream(seed: u64, video: usize, candidate: Option<usize>) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sub = candidate.map_or(0, |c| c as u64 + 1);
    rng.set_stream(((video as u64) << 32) | sub);
    rng
}

/// `k` sorted frames in `[0, n)` with consecutive gaps of at least `gap`.
fn place_separated(rng: &mut ChaCha8Rng, k: usize, n: usize, gap: usize) -> Option<Vec<usize>> {
    if k == 0 {
        return Some(Vec::new());
    }
    let reserved = (k - 1) * gap;
    if reserved >= n {
        return None;
    }
    let free = n - 1 - reserved;
    let mut base: Vec<usize> = (0..k).map(|_| rng.random_range(0..=free)).collect();
    base.sort_unstable();
    Some(base.into_iter().enumerate().map(|(i, b)| b + i * gap).collect())
}

fn add_peak(column: &mut [f64], center: usize, half_width: usize, height: f64) {
    let n = column.len();
    let lo = center.saturating_sub(half_width - 1);
    let hi = (center + half_width - 1).min(n - 1);
    for (f, cell) in column.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let v = height * (1.0 - f.abs_diff(center) as f64 / half_width as f64);
        if v > *cell {
            *cell = v;
        }
    }
}

/// Height uniform in the upper half of `(floor, 1]`, so peaks clear a small
/// NMS threshold even when the floor is zero.
fn peak_height(rng: &mut ChaCha8Rng, floor: f64) -> f64 {
    let u: f64 = rng.random();
    1.0 - u * (1.0 - floor) / 2.0
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let n = cfg.num_frames;
    let k = cfg.num_classes;
    let poisson = |mean: f64| -> Result<Option<Poisson<f64>>> {
        if mean > 0.0 {
            Poisson::new(mean)
                .map(Some)
                .map_err(|e| Error::Config(format!("poisson({mean}): {e}")))
        } else {
            Ok(None)
        }
    };
    let events_dist = poisson(cfg.events_per_class)?;

    let mut ground_truth = Vec::with_capacity(cfg.num_videos);
    let mut candidates: Vec<CandidateModel> = cfg
        .candidates
        .iter()
        .map(|p| CandidateModel {
            arch_tag: p.arch_tag.clone(),
            optimizer_tag: p.optimizer_tag.clone(),
            stride_s: p.stride_s,
            delta: p.delta,
            ..CandidateModel::new(p.id.clone())
        })
        .collect();

    let mut miss_offsets = Vec::with_capacity(cfg.candidates.len());
    let mut acc = 0.0;
    for p in &cfg.candidates {
        miss_offsets.push(acc);
        acc += p.miss_rate;
    }

    for v in 0..cfg.num_videos {
        let video_id = cfg.video_id(v);
        let mut rng = stream(cfg.seed, v, None);
        let mut events = Vec::new();
        for class in 0..k {
            let count = events_dist.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
            let frames = place_separated(&mut rng, count, n, 2 * cfg.peak_width).ok_or_else(|| {
                Error::Config(format!(
                    "cannot place {count} events {} frames apart in {n} frames",
                    2 * cfg.peak_width
                ))
            })?;
            events.extend(frames.into_iter().map(|frame| Event { frame, class }));
        }
        events.sort_unstable();
        let shared_u: Vec<f64> = events.iter().map(|_| rng.random()).collect();
        let gt = GroundTruth::new(video_id.clone(), cfg.fps, n, events)?;

        for (c, profile) in cfg.candidates.iter().enumerate() {
            let mut rng = stream(cfg.seed, v, Some(c));
            let matrix = candidate_scores(&mut rng, profile, &gt, &shared_u, miss_offsets[c], cfg.miss_pattern, k)?;
            candidates[c].scores.insert(video_id.clone(), matrix);
        }
        ground_truth.push(gt);
    }
    Ok(SynthDataset {
        ground_truth,
        candidates,
    })
}

fn candidate_scores(
    rng: &mut ChaCha8Rng,
    p: &NoiseProfile,
    gt: &GroundTruth,
    shared_u: &[f64],
    miss_offset: f64,
    pattern: MissPattern,
    num_classes: usize,
) -> Result<ScoreMatrix> {
    let n = gt.num_frames();
    let mut columns: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..n).map(|_| rng.random::<f64>() * p.noise_floor).collect())
        .collect();
    let jitter = Normal::new(0.0, p.jitter_std).map_err(|e| Error::Config(format!("jitter: {e}")))?;

    for (ev, &u) in gt.events().iter().zip(shared_u) {
        let missed = match pattern {
            MissPattern::Independent => rng.random::<f64>() < p.miss_rate,
            MissPattern::Disjoint => u >= miss_offset && u < miss_offset + p.miss_rate,
        };
        if missed {
            continue;
        }
        let shift = if p.jitter_std > 0.0 { jitter.sample(rng).round() } else { 0.0 };
        let center = (ev.frame as f64 + shift).clamp(0.0, (n - 1) as f64) as usize;
        let height = peak_height(rng, p.noise_floor);
        add_peak(&mut columns[ev.class], center, p.peak_width, height);
    }

    if p.false_alarm_rate > 0.0 {
        let fa = Poisson::new(p.false_alarm_rate * n as f64 / 1000.0)
            .map_err(|e| Error::Config(format!("false alarms: {e}")))?;
        for column in &mut columns {
            let count = fa.sample(rng) as usize;
            for _ in 0..count {
                let center = rng.random_range(0..n);
                let height = peak_height(rng, p.noise_floor);
                add_peak(column, center, p.peak_width, height);
            }
        }
    }

    let mut values = vec![0.0; n * num_classes];
    for (class, column) in columns.iter().enumerate() {
        for (frame, &v) in column.iter().enumerate() {
            values[frame * num_classes + class] = v;
        }
    }
    ScoreMatrix::new(gt.video_id(), n, num_classes, values)
}
