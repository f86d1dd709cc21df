//! Dense scores to discrete spots, and merging of overlapping clip outputs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Spot, SpotPrediction};
use crate::model::ScoreMatrix;
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    /// Half-width of the suppression window, in frames.
    pub window: usize,
    /// Carried for provenance; `window` is already in frames.
    pub frame_rate: f64,
    pub threshold: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        NmsConfig {
            window: 10,
            frame_rate: 25.0,
            threshold: 0.01,
        }
    }
}

impl NmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("NMS window must be at least one frame".into()));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::Config(format!("NMS frame rate must be positive, got {}", self.frame_rate)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("NMS threshold must be in [0, 1], got {}", self.threshold)));
        }
        Ok(())
    }
}

/// Greedy per-class temporal non-maximum suppression.
///
/// Frames are visited by descending score (ties: lower frame). A frame at or
/// above the threshold is kept unless an already kept frame lies within
/// `±window`. Spots come out sorted by `(class, frame)`.
#[allow(clippy::needless_range_loop)]
pub fn temporal_nms<T: Scalar>(scores: &ScoreMatrix<T>, cfg: &NmsConfig) -> SpotPrediction<T> {
    let threshold = T::from_f64(cfg.threshold);
    let n = scores.num_frames();
    let w = cfg.window;
    let mut spots = Vec::new();
    let mut kept = vec![false; n];
    let mut suppressed = vec![false; n];
    let mut order: Vec<usize> = Vec::new();
    let mut deque: VecDeque<usize> = VecDeque::new();
    for class in 0..scores.num_classes() {
        let column = scores.class_column(class);
        let alive = |f: usize| column[f] >= threshold;
        kept.iter_mut().for_each(|k| *k = false);
        suppressed.iter_mut().for_each(|s| *s = false);

        // A frame that outranks everything in its own window is kept whatever
        // happens elsewhere, and so suppresses its whole window. Find those
        // with a sliding-window maximum; only the remainder needs ordering.
        deque.clear();
        let mut next = 0;
        for f in 0..n {
            let hi = (f + w).min(n - 1);
            while next <= hi {
                if alive(next) {
                    while deque.back().is_some_and(|&b| column[b] < column[next]) {
                        deque.pop_back();
                    }
                    deque.push_back(next);
                }
                next += 1;
            }
            while deque.front().is_some_and(|&b| b + w < f) {
                deque.pop_front();
            }
            if deque.front() == Some(&f) {
                kept[f] = true;
                let lo = f.saturating_sub(w);
                suppressed[lo..=hi].iter_mut().for_each(|s| *s = true);
            }
        }

        order.clear();
        order.extend((0..n).filter(|&f| alive(f) && !suppressed[f]));
        order.sort_unstable_by(|&a, &b| scalar::cmp(column[b], column[a]).then(a.cmp(&b)));
        for &frame in &order {
            if suppressed[frame] {
                continue;
            }
            kept[frame] = true;
            let lo = frame.saturating_sub(w);
            let hi = (frame + w).min(n - 1);
            suppressed[lo..=hi].iter_mut().for_each(|s| *s = true);
        }
        spots.extend((0..n).filter(|&f| kept[f]).map(|frame| Spot {
            frame,
            class,
            confidence: column[frame],
        }));
    }
    SpotPrediction::new(scores.video_id(), spots)
}

/// Dense matrix that is zero everywhere except at the given spots.
pub fn rasterize<T: Scalar>(pred: &SpotPrediction<T>, num_frames: usize, num_classes: usize) -> Result<ScoreMatrix<T>> {
    let mut values = vec![T::zero(); num_frames * num_classes];
    for s in &pred.spots {
        if s.frame >= num_frames || s.class >= num_classes {
            return Err(Error::Shape(format!(
                "spot ({}, {}) outside {num_frames}x{num_classes}",
                s.frame, s.class
            )));
        }
        values[s.frame * num_classes + s.class] = s.confidence;
    }
    ScoreMatrix::new(pred.video_id.clone(), num_frames, num_classes, values)
}

/// Output of one inference clip: `values` holds `L × num_classes` scores for
/// frames `start_frame + k * stride_s`, `k in [0, L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipScores<T = f64> {
    pub video_id: String,
    pub start_frame: usize,
    pub stride_s: usize,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> ClipScores<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn frame_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len()).map(move |k| self.start_frame + k * self.stride_s)
    }
}

/// Averages every clip prediction covering each frame.
///
/// Clips are accumulated in a canonical order so the floating-point result
/// does not depend on the order of `clips`.
pub fn aggregate_clips<T: Scalar>(clips: &[ClipScores<T>], num_frames: usize, num_classes: usize) -> Result<ScoreMatrix<T>> {
    let video_id = clips
        .first()
        .map(|c| c.video_id.clone())
        .ok_or_else(|| Error::Coverage("no clips to aggregate".into()))?;
    for clip in clips {
        if clip.video_id != video_id {
            return Err(Error::Shape(format!(
                "clips from different videos: {video_id} and {}",
                clip.video_id
            )));
        }
        if clip.stride_s == 0 {
            return Err(Error::Shape(format!("clip at {} has zero stride", clip.start_frame)));
        }
        if let Some(last) = clip.frame_indices().last() {
            if last >= num_frames {
                return Err(Error::Shape(format!(
                    "clip at {} covers frame {last} beyond {num_frames} frames",
                    clip.start_frame
                )));
            }
        }
        for row in &clip.values {
            if row.len() != num_classes {
                return Err(Error::Shape(format!(
                    "clip at {} has {} classes, expected {num_classes}",
                    clip.start_frame,
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_unit()) {
                return Err(Error::Domain(format!("clip at {} has scores outside [0, 1]", clip.start_frame)));
            }
        }
    }

    let mut order: Vec<&ClipScores<T>> = clips.iter().collect();
    order.sort_by(|a, b| {
        (a.start_frame, a.stride_s, a.values.len())
            .cmp(&(b.start_frame, b.stride_s, b.values.len()))
            .then_with(|| {
                a.values
                    .iter()
                    .flatten()
                    .zip(b.values.iter().flatten())
                    .map(|(x, y)| scalar::cmp(*x, *y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });

    let mut sums = vec![T::zero(); num_frames * num_classes];
    let mut counts = vec![0usize; num_frames];
    for clip in order {
        for (frame, row) in clip.frame_indices().zip(&clip.values) {
            counts[frame] += 1;
            for (acc, &v) in sums[frame * num_classes..(frame + 1) * num_classes].iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
    }
    if let Some(frame) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Coverage(format!("video {video_id}: frame {frame} is not covered by any clip")));
    }
    for (frame, &count) in counts.iter().enumerate() {
        let n = T::from_count(count);
        for acc in &mut sums[frame * num_classes..(frame + 1) * num_classes] {
            *acc = *acc / n;
        }
    }
    ScoreMatrix::new(video_id, num_frames, num_classes, sums)
}
