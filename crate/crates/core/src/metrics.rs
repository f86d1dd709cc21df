//! Mean average precision for point events under a temporal tolerance.
//!
//! Detections of one class are pooled across videos and visited in
//! descending confidence (ties: lower video id, then lower frame). Each one
//! claims the nearest still-unmatched ground-truth event of the same class
//! and video within `round(fps * tolerance)` frames (ties: earlier event).
//! AP is the all-point interpolated area under the precision/recall curve.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GroundTruth;
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spot<T = f64> {
    pub frame: usize,
    pub class: usize,
    pub confidence: T,
}

/// Discrete detections of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotPrediction<T = f64> {
    pub video_id: String,
    pub spots: Vec<Spot<T>>,
}

impl<T: Scalar> SpotPrediction<T> {
    pub fn new(video_id: impl Into<String>, spots: Vec<Spot<T>>) -> Self {
        SpotPrediction {
            video_id: video_id.into(),
            spots,
        }
    }

    pub fn empty(video_id: impl Into<String>) -> Self {
        Self::new(video_id, Vec::new())
    }

    /// Sorts spots by `(class, frame)`.
    pub fn sort(&mut self) {
        self.spots.sort_by_key(|s| (s.class, s.frame));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub num_gt: usize,
    pub num_predictions: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    /// Ground-truth events left unmatched.
    pub missed: usize,
    /// `None` when the class has no ground-truth events.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tolerance_sec: f64,
    pub map: f64,
    pub per_class: Vec<ClassReport>,
}

impl EvalReport {
    /// `(class, ap)` for every class that has ground truth.
    pub fn per_class_ap(&self) -> Vec<(usize, f64)> {
        self.per_class.iter().filter_map(|c| c.ap.map(|ap| (c.class, ap))).collect()
    }
}

/// `e(F_t) - e(F_{t-1})`.
pub fn objective_delta(candidate_map: f64, previous_map: f64) -> f64 {
    candidate_map - previous_map
}

struct Detection<'a, T> {
    video: &'a str,
    frame: usize,
    confidence: T,
}

pub fn map_at_tolerance<T: Scalar>(preds: &[SpotPrediction<T>], gt: &[GroundTruth], tolerance_sec: f64) -> Result<EvalReport> {
    if !(tolerance_sec.is_finite() && tolerance_sec > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tolerance_sec}")));
    }
    let by_video: HashMap<&str, &GroundTruth> = gt.iter().map(|g| (g.video_id(), g)).collect();

    let mut dets: BTreeMap<usize, Vec<Detection<T>>> = BTreeMap::new();
    for pred in preds {
        let video = by_video
            .get(pred.video_id.as_str())
            .ok_or_else(|| Error::Lookup(format!("prediction for unknown video {}", pred.video_id)))?;
        for spot in &pred.spots {
            if spot.frame >= video.num_frames() || !spot.confidence.is_unit() {
                return Err(Error::Validation(format!(
                    "video {}: invalid spot at frame {} with confidence {:?}",
                    pred.video_id, spot.frame, spot.confidence
                )));
            }
            dets.entry(spot.class).or_default().push(Detection {
                video: video.video_id(),
                frame: spot.frame,
                confidence: spot.confidence,
            });
        }
    }

    // class -> video -> sorted event frames
    let mut events: BTreeMap<usize, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for g in gt {
        for ev in g.events() {
            events.entry(ev.class).or_default().entry(g.video_id()).or_default().push(ev.frame);
        }
    }
    if events.is_empty() {
        return Err(Error::Evaluation("no class has any ground-truth event".into()));
    }

    let classes: BTreeSet<usize> = events.keys().chain(dets.keys()).copied().collect();
    let empty = BTreeMap::new();
    let mut per_class = Vec::with_capacity(classes.len());
    for class in classes {
        let class_events = events.get(&class).unwrap_or(&empty);
        let class_dets = dets.remove(&class).unwrap_or_default();
        per_class.push(evaluate_class(class, class_dets, class_events, &by_video, tolerance_sec));
    }

    let aps: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
    let map = aps.iter().sum::<f64>() / aps.len() as f64;
    Ok(EvalReport {
        tolerance_sec,
        map,
        per_class,
    })
}

fn evaluate_class<T: Scalar>(
    class: usize,
    mut dets: Vec<Detection<T>>,
    events: &BTreeMap<&str, Vec<usize>>,
    videos: &HashMap<&str, &GroundTruth>,
    tolerance_sec: f64,
) -> ClassReport {
    dets.sort_by(|a, b| {
        scalar::cmp(b.confidence, a.confidence)
            .then_with(|| a.video.cmp(b.video))
            .then_with(|| a.frame.cmp(&b.frame))
    });
    let num_gt: usize = events.values().map(Vec::len).sum();
    let mut matched: HashMap<&str, Vec<bool>> = events.iter().map(|(v, f)| (*v, vec![false; f.len()])).collect();

    let mut hits = Vec::with_capacity(dets.len());
    for det in &dets {
        let tol = videos[det.video].seconds_to_frames(tolerance_sec);
        let hit = match (events.get(det.video), matched.get_mut(det.video)) {
            (Some(frames), Some(used)) => match nearest_unmatched(frames, used, det.frame, tol) {
                Some(i) => {
                    used[i] = true;
                    true
                }
                None => false,
            },
            _ => false,
        };
        hits.push(hit);
    }

    let tp = hits.iter().filter(|h| **h).count();
    ClassReport {
        class,
        num_gt,
        num_predictions: dets.len(),
        true_positives: tp,
        false_positives: dets.len() - tp,
        missed: num_gt - tp,
        ap: (num_gt > 0).then(|| average_precision(&hits, num_gt)),
    }
}

/// Index of the closest unused event within `tol` frames; earlier frame wins
/// ties. `frames` is sorted.
fn nearest_unmatched(frames: &[usize], used: &[bool], frame: usize, tol: usize) -> Option<usize> {
    let lo = frame.saturating_sub(tol);
    let start = frames.partition_point(|&f| f < lo);
    let mut best: Option<(usize, usize)> = None;
    for (i, &f) in frames.iter().enumerate().skip(start) {
        let dist = f.abs_diff(frame);
        if f > frame && dist > tol {
            break;
        }
        if used[i] {
            continue;
        }
        if best.is_none_or(|(_, d)| dist < d) {
            best = Some((i, dist));
        }
    }
    best.map(|(i, _)| i)
}

/// All-point interpolated AP of a ranked hit list.
pub(crate) fn average_precision(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &hit) in hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // monotone envelope from the right
    for k in (0..precision.len().saturating_sub(1)).rev() {
        if precision[k + 1] > precision[k] {
            precision[k] = precision[k + 1];
        }
    }
    let area: f64 = hits.iter().zip(&precision).filter(|(hit, _)| **hit).map(|(_, p)| p).sum();
    area / num_gt as f64
}
