//! Training-sample construction: point events dilated into frame labels,
//! and fixed-length strided clips sampled from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Event, GroundTruth};

/// Per-frame labels of one video; `None` is background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLabels {
    pub video_id: String,
    pub delta: usize,
    pub labels: Vec<Option<usize>>,
    pub source_events: Vec<Event>,
    /// Frames claimed by more than one event window.
    pub collisions: usize,
}

impl FrameLabels {
    pub fn num_frames(&self) -> usize {
        self.labels.len()
    }

    pub fn labeled_frames(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

/// Labels every frame within `±delta` of an event with that event's class.
///
/// A frame inside several windows takes the nearest event; ties go to the
/// earlier event frame, then to the lower class index.
pub fn dilate_labels(gt: &GroundTruth, delta: usize) -> FrameLabels {
    let n = gt.num_frames();
    // (distance, event frame, class) of the current owner
    let mut owner: Vec<Option<(usize, usize, usize)>> = vec![None; n];
    let mut claims = vec![0u32; n];
    for ev in gt.events() {
        let lo = ev.frame.saturating_sub(delta);
        let hi = (ev.frame + delta).min(n - 1);
        for frame in lo..=hi {
            claims[frame] += 1;
            let key = (frame.abs_diff(ev.frame), ev.frame, ev.class);
            if owner[frame].is_none_or(|cur| key < cur) {
                owner[frame] = Some(key);
            }
        }
    }
    FrameLabels {
        video_id: gt.video_id().to_owned(),
        delta,
        labels: owner.iter().map(|o| o.map(|(_, _, class)| class)).collect(),
        source_events: gt.events().to_vec(),
        collisions: claims.iter().filter(|&&c| c > 1).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub num_clips: usize,
    pub length: usize,
    pub stride: usize,
    pub delta: usize,
    pub seed: u64,
}

pub const DEFAULT_CLIP_LENGTH: usize = 100;
pub const DEFAULT_NUM_CLIPS: usize = 1000;

impl SamplingConfig {
    pub fn new(stride: usize, delta: usize) -> Self {
        SamplingConfig {
            num_clips: DEFAULT_NUM_CLIPS,
            length: DEFAULT_CLIP_LENGTH,
            stride,
            delta,
            seed: 0,
        }
    }

    /// Frames covered by one clip: `(L - 1) * s + 1`.
    pub fn span(&self) -> usize {
        (self.length - 1) * self.stride + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clips == 0 || self.length == 0 || self.stride == 0 {
            return Err(Error::Config(format!(
                "clip count, length and stride must be positive (got N={}, L={}, s={})",
                self.num_clips, self.length, self.stride
            )));
        }
        Ok(())
    }
}

/// The five `(stride, delta)` presets used to diversify candidate training.
pub fn dataset_settings() -> Vec<SamplingConfig> {
    [(1, 5), (1, 4), (2, 5), (2, 4), (2, 2)]
        .into_iter()
        .map(|(s, d)| SamplingConfig::new(s, d))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSample {
    pub video_id: String,
    pub start_frame: usize,
    pub stride: usize,
    pub frame_indices: Vec<usize>,
    pub labels: Vec<Option<usize>>,
}

impl ClipSample {
    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }
}

/// Draws `num_clips` clip starts uniformly (with replacement) from every
/// start that keeps the clip inside the video.
pub fn sample_clips(labels: &FrameLabels, cfg: &SamplingConfig) -> Result<Vec<ClipSample>> {
    cfg.validate()?;
    let span = cfg.span();
    let n = labels.num_frames();
    if n < span {
        return Err(Error::Size(format!(
            "video {} has {n} frames, a clip of length {} with stride {} spans {span}",
            labels.video_id, cfg.length, cfg.stride
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let last_start = n - span;
    Ok((0..cfg.num_clips)
        .map(|_| {
            let start = rng.random_range(0..=last_start);
            let frame_indices: Vec<usize> = (0..cfg.length).map(|k| start + k * cfg.stride).collect();
            ClipSample {
                video_id: labels.video_id.clone(),
                start_frame: start,
                stride: cfg.stride,
                labels: frame_indices.iter().map(|&f| labels.labels[f]).collect(),
                frame_indices,
            }
        })
        .collect())
}
