//! On-disk formats: score CSVs, ground-truth / spot / label JSON documents,
//! the dataset manifest and the ensemble file.
//!
//! Readers are strict and reject malformed input instead of repairing it.
//! Every writer produces output its paired reader accepts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::dataprep::{ClipSample, FrameLabels, SamplingConfig};
use crate::ensemble::{effective_weights, EnsembleSpec};
use crate::error::{Error, Result};
use crate::metrics::{Spot, SpotPrediction};
use crate::model::{CandidateModel, Event, GroundTruth, ScoreMatrix};
use crate::postprocess::{ClipScores, NmsConfig};
use crate::search::{SearchConfig, SearchTrace};

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, Some(e.line() as u64), e.to_string()))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

// ---------------------------------------------------------------------------
// score matrices

/// A parsed score CSV: the class names from its header and the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub classes: Vec<String>,
    pub matrix: ScoreMatrix,
}

/// Reads `frame,<class_0>,...` CSV. Frames must run `0, 1, 2, ...` without
/// gaps and every value must be a decimal in `[0, 1]`. When `classes` is
/// given the header must name exactly those classes in order.
pub fn read_scores(path: &Path, video_id: &str, classes: Option<&[String]>) -> Result<ScoreTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(path, e))?,
        None => return Err(Error::format(path, Some(1), "empty score file")),
    };
    if header.get(0) != Some("frame") || header.len() < 2 {
        return Err(Error::format(path, Some(1), "header must be `frame,<class>,...`"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if let Some(expected) = classes {
        if names != expected {
            return Err(Error::format(
                path,
                Some(1),
                format!("header classes {names:?} do not match manifest classes {expected:?}"),
            ));
        }
    }
    let k = names.len();

    let mut values = Vec::new();
    let mut frames = 0usize;
    for record in records {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line());
        if record.len() != k + 1 {
            return Err(Error::format(
                path,
                line,
                format!("expected {} fields, found {}", k + 1, record.len()),
            ));
        }
        let frame: usize = record[0]
            .parse()
            .map_err(|_| Error::format(path, line, format!("invalid frame index {:?}", &record[0])))?;
        if frame != frames {
            return Err(Error::format(
                path,
                line,
                format!("missing frame: expected frame {frames}, found {frame}"),
            ));
        }
        for field in record.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::format(path, line, format!("invalid score {field:?}")))?;
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::format(path, line, format!("score {field} is outside [0, 1]")));
            }
            values.push(v);
        }
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::format(path, None, "score file has no frames"));
    }
    let matrix = ScoreMatrix::new(video_id, frames, k, values)?;
    Ok(ScoreTable { classes: names, matrix })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    Error::format(path, line, e.to_string())
}

pub fn write_scores(path: &Path, matrix: &ScoreMatrix, classes: &[String]) -> Result<()> {
    if classes.len() != matrix.num_classes() {
        return Err(Error::Shape(format!(
            "{} class names for a {}-class matrix",
            classes.len(),
            matrix.num_classes()
        )));
    }
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format(path, None, e.to_string());
    writer
        .write_record(std::iter::once("frame").chain(classes.iter().map(String::as_str)))
        .map_err(csv_err)?;
    let mut row = Vec::with_capacity(classes.len() + 1);
    for frame in 0..matrix.num_frames() {
        row.clear();
        row.push(frame.to_string());
        row.extend(matrix.row(frame).iter().map(f64::to_string));
        writer.write_record(&row).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::format(path, None, e.to_string()))?;
    write_bytes(path, &bytes)
}

// ---------------------------------------------------------------------------
// ground truth

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtEventDoc {
    frame: usize,
    label: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GtVideoDoc {
    video_id: String,
    fps: f64,
    num_frames: usize,
    events: Vec<GtEventDoc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtFile {
    pub videos: Vec<GroundTruth>,
    /// Exact `(frame, label)` duplicates dropped while reading.
    pub duplicates_removed: usize,
}

fn class_index(classes: &[String], label: &str) -> Option<usize> {
    classes.iter().position(|c| c == label)
}

pub fn read_gt(path: &Path, classes: &[String]) -> Result<GtFile> {
    let docs: Vec<GtVideoDoc> = read_json(path)?;
    let mut videos = Vec::with_capacity(docs.len());
    let mut duplicates_removed = 0;
    let mut seen = std::collections::BTreeSet::new();
    for doc in docs {
        if !seen.insert(doc.video_id.clone()) {
            return Err(Error::Validation(format!(
                "{}: video {} listed twice",
                path.display(),
                doc.video_id
            )));
        }
        let events = doc
            .events
            .iter()
            .map(|e| {
                class_index(classes, &e.label)
                    .map(|class| Event { frame: e.frame, class })
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "{}: video {}: unknown label {:?}",
                            path.display(),
                            doc.video_id,
                            e.label
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let (gt, dups) = GroundTruth::with_duplicate_count(doc.video_id, doc.fps, doc.num_frames, events)?;
        duplicates_removed += dups;
        videos.push(gt);
    }
    Ok(GtFile {
        videos,
        duplicates_removed,
    })
}

pub fn write_gt(path: &Path, videos: &[GroundTruth], classes: &[String]) -> Result<()> {
    let docs = videos
        .iter()
        .map(|g| {
            Ok(GtVideoDoc {
                video_id: g.video_id().to_owned(),
                fps: g.fps(),
                num_frames: g.num_frames(),
                events: g
                    .events()
                    .iter()
                    .map(|e| {
                        classes
                            .get(e.class)
                            .map(|label| GtEventDoc {
                                frame: e.frame,
                                label: label.clone(),
                            })
                            .ok_or_else(|| Error::Validation(format!("class {} has no name", e.class)))
                    })
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(path, &docs)
}

// ---------------------------------------------------------------------------
// spots

#[derive(Serialize)]
struct SpotOut<'a> {
    frame: usize,
    label: &'a str,
    confidence: Box<RawValue>,
}

#[derive(Serialize)]
struct VideoSpotsOut<'a> {
    video_id: &'a str,
    spots: Vec<SpotOut<'a>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpotIn {
    frame: usize,
    label: String,
    confidence: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoSpotsIn {
    video_id: String,
    spots: Vec<SpotIn>,
}

/// Writes spots ordered by `(video_id, class, frame)` with confidences
/// rendered to six decimals.
pub fn write_spots(path: &Path, preds: &[SpotPrediction], classes: &[String]) -> Result<()> {
    let mut sorted: Vec<&SpotPrediction> = preds.iter().collect();
    sorted.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let mut docs = Vec::with_capacity(sorted.len());
    for pred in sorted {
        let mut spots: Vec<&Spot> = pred.spots.iter().collect();
        spots.sort_by_key(|s| (s.class, s.frame));
        let spots = spots
            .into_iter()
            .map(|s| {
                let label = classes
                    .get(s.class)
                    .ok_or_else(|| Error::Validation(format!("class {} has no name", s.class)))?;
                if !(s.confidence.is_finite() && (0.0..=1.0).contains(&s.confidence)) {
                    return Err(Error::Validation(format!("confidence {} outside [0, 1]", s.confidence)));
                }
                let confidence = RawValue::from_string(format!("{:.6}", s.confidence)).map_err(|source| Error::Json {
                    path: path.into(),
                    source,
                })?;
                Ok(SpotOut {
                    frame: s.frame,
                    label,
                    confidence,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        docs.push(VideoSpotsOut {
            video_id: &pred.video_id,
            spots,
        });
    }
    let text = serde_json::to_string_pretty(&docs).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    write_bytes(path, text.as_bytes())
}

pub fn read_spots(path: &Path, classes: &[String]) -> Result<Vec<SpotPrediction>> {
    let docs: Vec<VideoSpotsIn> = read_json(path)?;
    docs.into_iter()
        .map(|doc| {
            let spots = doc
                .spots
                .into_iter()
                .map(|s| {
                    let class = class_index(classes, &s.label).ok_or_else(|| {
                        Error::Validation(format!("{}: unknown label {:?}", path.display(), s.label))
                    })?;
                    if !(s.confidence.is_finite() && (0.0..=1.0).contains(&s.confidence)) {
                        return Err(Error::Validation(format!(
                            "{}: confidence {} outside [0, 1]",
                            path.display(),
                            s.confidence
                        )));
                    }
                    Ok(Spot {
                        frame: s.frame,
                        class,
                        confidence: s.confidence,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SpotPrediction::new(doc.video_id, spots))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// labels and clips

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsFile {
    pub classes: Vec<String>,
    pub videos: Vec<FrameLabels>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipsFile {
    pub classes: Vec<String>,
    pub config: SamplingConfig,
    pub clips: Vec<ClipSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    pub start_frame: usize,
    pub stride_s: usize,
    /// `L` rows of per-class scores.
    pub values: Vec<Vec<f64>>,
}

/// Overlapping inference outputs for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipScoresFile {
    pub video_id: String,
    pub num_frames: usize,
    pub clips: Vec<ClipEntry>,
}

impl ClipScoresFile {
    pub fn to_clip_scores(&self) -> Vec<ClipScores> {
        self.clips
            .iter()
            .map(|c| ClipScores {
                video_id: self.video_id.clone(),
                start_frame: c.start_frame,
                stride_s: c.stride_s,
                values: c.values.clone(),
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub video_id: String,
    pub fps: f64,
    pub num_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateEntry {
    pub id: String,
    #[serde(default)]
    pub arch_tag: String,
    #[serde(default)]
    pub optimizer_tag: String,
    pub stride_s: usize,
    pub delta: usize,
    /// Score CSV per video, relative to the manifest directory.
    pub scores: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub classes: Vec<String>,
    pub videos: Vec<VideoEntry>,
    pub splits: BTreeMap<String, Vec<String>>,
    pub candidates: Vec<CandidateEntry>,
}

/// A manifest together with the directory its relative paths resolve from.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Validation(format!("manifest: {m}")));
        if self.classes.is_empty() {
            return err("no classes".into());
        }
        let mut names = std::collections::BTreeSet::new();
        if let Some(dup) = self.classes.iter().find(|c| !names.insert(c.as_str())) {
            return err(format!("duplicate class {dup}"));
        }
        let mut videos = std::collections::BTreeSet::new();
        for v in &self.videos {
            if !videos.insert(v.video_id.as_str()) {
                return err(format!("duplicate video {}", v.video_id));
            }
            if !(v.fps.is_finite() && v.fps > 0.0) || v.num_frames == 0 {
                return err(format!("video {} needs positive fps and frame count", v.video_id));
            }
        }
        for (split, ids) in &self.splits {
            if let Some(id) = ids.iter().find(|id| !videos.contains(id.as_str())) {
                return err(format!("split {split} names unknown video {id}"));
            }
        }
        let mut cands = std::collections::BTreeSet::new();
        for c in &self.candidates {
            if !cands.insert(c.id.as_str()) {
                return err(format!("duplicate candidate {}", c.id));
            }
            if c.stride_s == 0 {
                return err(format!("candidate {} has zero stride", c.id));
            }
            for ids in self.splits.values() {
                if let Some(id) = ids.iter().find(|id| !c.scores.contains_key(id.as_str())) {
                    return err(format!("candidate {} has no scores for video {id}", c.id));
                }
            }
            if let Some(id) = c.scores.keys().find(|id| !videos.contains(id.as_str())) {
                return err(format!("candidate {} has scores for unknown video {id}", c.id));
            }
        }
        Ok(())
    }

    pub fn split(&self, name: &str) -> Result<&[String]> {
        self.splits
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("manifest has no split {name:?}")))
    }

    pub fn video(&self, video_id: &str) -> Result<&VideoEntry> {
        self.videos
            .iter()
            .find(|v| v.video_id == video_id)
            .ok_or_else(|| Error::Lookup(format!("manifest has no video {video_id}")))
    }
}

impl LoadedManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(path)?;
        manifest.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedManifest { manifest, base_dir })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.manifest)
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.base_dir.join(relative)
    }

    /// Loads every candidate's scores for the given videos, checking them
    /// against the manifest's classes and frame counts.
    pub fn load_pool(&self, video_ids: &[String]) -> Result<Vec<CandidateModel>> {
        let m = &self.manifest;
        m.candidates
            .iter()
            .map(|entry| {
                let mut cand = CandidateModel {
                    arch_tag: entry.arch_tag.clone(),
                    optimizer_tag: entry.optimizer_tag.clone(),
                    stride_s: entry.stride_s,
                    delta: entry.delta,
                    ..CandidateModel::new(entry.id.clone())
                };
                for vid in video_ids {
                    let file = entry.scores.get(vid).ok_or_else(|| {
                        Error::Lookup(format!("candidate {} has no scores for video {vid}", entry.id))
                    })?;
                    let path = self.resolve(file);
                    let table = read_scores(&path, vid, Some(&m.classes))?;
                    let expected = m.video(vid)?.num_frames;
                    if table.matrix.num_frames() != expected {
                        return Err(Error::format(
                            &path,
                            None,
                            format!("{} frames, manifest says {expected}", table.matrix.num_frames()),
                        ));
                    }
                    cand.scores.insert(vid.clone(), table.matrix);
                }
                Ok(cand)
            })
            .collect()
    }

    /// SHA-256 over candidate metadata and the bytes of every score file.
    pub fn pool_hash(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        for c in &self.manifest.candidates {
            for field in [c.id.as_str(), c.arch_tag.as_str(), c.optimizer_tag.as_str()] {
                hasher.update(field.as_bytes());
                hasher.update([0u8]);
            }
            hasher.update(c.stride_s.to_le_bytes());
            hasher.update(c.delta.to_le_bytes());
            for (vid, file) in &c.scores {
                hasher.update(vid.as_bytes());
                hasher.update([0u8]);
                let path = self.resolve(file);
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                hasher.update((bytes.len() as u64).to_le_bytes());
                hasher.update(&bytes);
            }
        }
        Ok(hex::encode(hasher.finalize()))
    }
}

// ---------------------------------------------------------------------------
// ensemble file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fingerprint {
    pub split: String,
    pub weight_grid: Vec<f64>,
    pub max_iters: usize,
    pub tolerance_sec: f64,
    pub nms: NmsConfig,
    pub allow_reselection: bool,
    pub min_improvement: f64,
    pub pool_hash: String,
}

impl Fingerprint {
    pub fn new(split: &str, cfg: &SearchConfig, pool_hash: String) -> Self {
        Fingerprint {
            split: split.to_owned(),
            weight_grid: cfg.weight_grid.clone(),
            max_iters: cfg.max_iters,
            tolerance_sec: cfg.tolerance_sec,
            nms: cfg.nms,
            allow_reselection: cfg.allow_reselection,
            min_improvement: cfg.min_improvement,
            pool_hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveWeight {
    pub candidate_id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub spec: EnsembleSpec,
    pub effective_weights: Vec<EffectiveWeight>,
    pub trace: SearchTrace,
    pub fingerprint: Fingerprint,
}

impl EnsembleFile {
    pub fn new(spec: EnsembleSpec, trace: SearchTrace, fingerprint: Fingerprint) -> Result<Self> {
        let effective_weights = effective_weights(&spec)?
            .into_iter()
            .map(|(candidate_id, weight)| EffectiveWeight { candidate_id, weight })
            .collect();
        Ok(EnsembleFile {
            spec,
            effective_weights,
            trace,
            fingerprint,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: EnsembleFile = read_json(path)?;
        file.spec.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Refuses a pool whose hash differs from the one the search ran on.
    pub fn check_pool(&self, pool_hash: &str) -> Result<()> {
        if self.fingerprint.pool_hash == pool_hash {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "ensemble was built on pool {} but the manifest pool hashes to {pool_hash}",
                self.fingerprint.pool_hash
            )))
        }
    }
}
