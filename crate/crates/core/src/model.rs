//! Domain types shared by every stage of the pipeline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense `num_frames × num_classes` confidence matrix for one video from one
/// score source, stored row-major (frame-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<T = f64> {
    video_id: String,
    num_frames: usize,
    num_classes: usize,
    values: Vec<T>,
}

impl<T: Scalar> ScoreMatrix<T> {
    pub fn new(video_id: impl Into<String>, num_frames: usize, num_classes: usize, values: Vec<T>) -> Result<Self> {
        let video_id = video_id.into();
        if num_frames == 0 || num_classes == 0 {
            return Err(Error::Shape(format!(
                "video {video_id}: score matrix needs at least one frame and one class, got {num_frames}x{num_classes}"
            )));
        }
        if values.len() != num_frames * num_classes {
            return Err(Error::Shape(format!(
                "video {video_id}: expected {} values for {num_frames}x{num_classes}, got {}",
                num_frames * num_classes,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_unit()) {
            return Err(Error::Domain(format!(
                "video {video_id}: score {:?} at frame {}, class {} is not in [0, 1]",
                values[pos],
                pos / num_classes,
                pos % num_classes
            )));
        }
        Ok(ScoreMatrix {
            video_id,
            num_frames,
            num_classes,
            values,
        })
    }

    pub fn zeros(video_id: impl Into<String>, num_frames: usize, num_classes: usize) -> Result<Self> {
        Self::new(video_id, num_frames, num_classes, vec![T::zero(); num_frames * num_classes])
    }

    /// Builds a matrix from per-frame rows.
    pub fn from_rows(video_id: impl Into<String>, rows: &[Vec<T>]) -> Result<Self> {
        let video_id = video_id.into();
        let num_classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_classes) {
            return Err(Error::Shape(format!("video {video_id}: ragged score rows")));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(video_id, rows.len(), num_classes, values)
    }

    /// Internal constructor for values already known to be valid.
    pub(crate) fn from_parts_unchecked(video_id: String, num_frames: usize, num_classes: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), num_frames * num_classes);
        ScoreMatrix {
            video_id,
            num_frames,
            num_classes,
            values,
        }
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, frame: usize, class: usize) -> T {
        self.values[frame * self.num_classes + class]
    }

    pub fn row(&self, frame: usize) -> &[T] {
        &self.values[frame * self.num_classes..(frame + 1) * self.num_classes]
    }

    /// Scores of one class over all frames.
    pub fn class_column(&self, class: usize) -> Vec<T> {
        self.values.iter().skip(class).step_by(self.num_classes).copied().collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.video_id == other.video_id && self.num_frames == other.num_frames && self.num_classes == other.num_classes
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "cannot combine {} ({}x{}) with {} ({}x{})",
                self.video_id, self.num_frames, self.num_classes, other.video_id, other.num_frames, other.num_classes
            )))
        }
    }

    pub fn map_scalar<U: Scalar>(&self, f: impl Fn(T) -> U) -> Result<ScoreMatrix<U>> {
        ScoreMatrix::new(
            self.video_id.clone(),
            self.num_frames,
            self.num_classes,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Event {
    pub frame: usize,
    pub class: usize,
}

/// Labeled event instants of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    video_id: String,
    fps: f64,
    num_frames: usize,
    events: Vec<Event>,
}

impl GroundTruth {
    /// Validates and normalizes: events are sorted by `(frame, class)` and
    /// exact duplicates dropped. Use [`GroundTruth::with_duplicate_count`] to
    /// learn how many were removed.
    pub fn new(video_id: impl Into<String>, fps: f64, num_frames: usize, events: Vec<Event>) -> Result<Self> {
        Self::with_duplicate_count(video_id, fps, num_frames, events).map(|(gt, _)| gt)
    }

    pub fn with_duplicate_count(
        video_id: impl Into<String>,
        fps: f64,
        num_frames: usize,
        mut events: Vec<Event>,
    ) -> Result<(Self, usize)> {
        let video_id = video_id.into();
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Validation(format!("video {video_id}: fps must be positive, got {fps}")));
        }
        if num_frames == 0 {
            return Err(Error::Validation(format!("video {video_id}: num_frames must be positive")));
        }
        if let Some(ev) = events.iter().find(|e| e.frame >= num_frames) {
            return Err(Error::Validation(format!(
                "video {video_id}: event frame {} is outside [0, {num_frames})",
                ev.frame
            )));
        }
        events.sort_unstable();
        let before = events.len();
        events.dedup();
        let duplicates = before - events.len();
        Ok((
            GroundTruth {
                video_id,
                fps,
                num_frames,
                events,
            },
            duplicates,
        ))
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Checks class indices against a dataset's class count.
    pub fn check_classes(&self, num_classes: usize) -> Result<()> {
        match self.events.iter().find(|e| e.class >= num_classes) {
            Some(ev) => Err(Error::Validation(format!(
                "video {}: event class {} is outside [0, {num_classes})",
                self.video_id, ev.class
            ))),
            None => Ok(()),
        }
    }

    /// Converts a duration in seconds to frames, rounding half up.
    pub fn seconds_to_frames(&self, seconds: f64) -> usize {
        seconds_to_frames(self.fps, seconds)
    }
}

pub fn seconds_to_frames(fps: f64, seconds: f64) -> usize {
    (fps * seconds + 0.5).floor().max(0.0) as usize
}

/// One score source of the ensembling pool plus its provenance.
#[derive(Debug, Clone)]
pub struct CandidateModel<T = f64> {
    pub id: String,
    pub arch_tag: String,
    pub optimizer_tag: String,
    pub stride_s: usize,
    pub delta: usize,
    pub scores: BTreeMap<String, ScoreMatrix<T>>,
}

impl<T: Scalar> CandidateModel<T> {
    pub fn new(id: impl Into<String>) -> Self {
        CandidateModel {
            id: id.into(),
            arch_tag: String::new(),
            optimizer_tag: String::new(),
            stride_s: 1,
            delta: 0,
            scores: BTreeMap::new(),
        }
    }

    pub fn with_scores(mut self, scores: impl IntoIterator<Item = ScoreMatrix<T>>) -> Self {
        for m in scores {
            self.scores.insert(m.video_id().to_owned(), m);
        }
        self
    }

    pub fn scores_for(&self, video_id: &str) -> Result<&ScoreMatrix<T>> {
        self.scores
            .get(video_id)
            .ok_or_else(|| Error::Lookup(format!("candidate {} has no scores for video {video_id}", self.id)))
    }
}

/// Checks pool-level invariants: unique ids, consistent shapes per video and
/// coverage of the given videos.
pub fn validate_pool<T: Scalar>(pool: &[CandidateModel<T>], videos: &[&GroundTruth]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for cand in pool {
        if !seen.insert(cand.id.as_str()) {
            return Err(Error::Config(format!("duplicate candidate id {}", cand.id)));
        }
    }
    let mut num_classes = None;
    for gt in videos {
        for cand in pool {
            let m = cand.scores_for(gt.video_id())?;
            if m.num_frames() != gt.num_frames() {
                return Err(Error::Shape(format!(
                    "candidate {} has {} frames for video {}, ground truth has {}",
                    cand.id,
                    m.num_frames(),
                    gt.video_id(),
                    gt.num_frames()
                )));
            }
            match num_classes {
                None => num_classes = Some(m.num_classes()),
                Some(k) if k != m.num_classes() => {
                    return Err(Error::Shape(format!(
                        "candidate {} has {} classes for video {}, expected {k}",
                        cand.id,
                        m.num_classes(),
                        gt.video_id()
                    )))
                }
                Some(_) => {}
            }
        }
    }
    if let Some(k) = num_classes {
        for gt in videos {
            gt.check_classes(k)?;
        }
    }
    Ok(())
}
