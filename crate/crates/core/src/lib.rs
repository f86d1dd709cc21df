//! Boosted model ensembling for temporal event spotting.
//!
//! Candidate detectors produce dense per-frame class scores. A greedy search
//! grows a convex ensemble one weighted member at a time, keeping a step only
//! when it raises validation mAP at a temporal tolerance. Temporal NMS turns
//! the ensemble's scores into discrete spots.
//!
//! The numeric core is generic over [`Scalar`]; the aliases below fix the
//! common instantiations. File formats and the CLI work in `f64`.

pub mod dataprep;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod postprocess;
pub mod scalar;
pub mod search;
pub mod synth;

pub use dataprep::{dataset_settings, dilate_labels, sample_clips, ClipSample, FrameLabels, SamplingConfig};
pub use ensemble::{combine, effective_weights, realize, EnsembleSpec, EnsembleStep};
pub use error::{Error, Result};
pub use metrics::{map_at_tolerance, objective_delta, ClassReport, EvalReport, Spot, SpotPrediction};
pub use model::{CandidateModel, Event, GroundTruth, ScoreMatrix};
pub use postprocess::{aggregate_clips, rasterize, temporal_nms, ClipScores, NmsConfig};
pub use scalar::Scalar;
pub use search::{evaluate_ensemble, predict_video, run_bme, PipelineOrder, IterationRecord, SearchConfig, SearchTrace, TerminalReason};
pub use synth::{generate, MissPattern, NoiseProfile, SynthConfig, SynthDataset};

pub use num_rational::Rational64;

pub type ScoreMatrixF32 = ScoreMatrix<f32>;
pub type ExactScoreMatrix = ScoreMatrix<Rational64>;
pub type EnsembleSpecF32 = EnsembleSpec<f32>;
pub type ExactEnsembleSpec = EnsembleSpec<Rational64>;
pub type CandidateModelF32 = CandidateModel<f32>;
pub type ExactCandidateModel = CandidateModel<Rational64>;
pub type SearchConfigF32 = SearchConfig<f32>;
