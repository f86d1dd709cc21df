//! Greedy boosted ensembling.
//!
//! Iteration 1 picks the best single candidate. Every later iteration scores
//! all `(candidate, weight)` pairs by the validation mAP of
//! `(1 - w) F_{t-1} + w f_i` after NMS, and accepts the best pair only if it
//! improves on `F_{t-1}` by more than `min_improvement`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{combine, realize, EnsembleSpec};
use crate::error::{Error, Result};
use crate::metrics::{map_at_tolerance, objective_delta, EvalReport, SpotPrediction};
use crate::model::{validate_pool, CandidateModel, GroundTruth, ScoreMatrix};
use crate::postprocess::{rasterize, temporal_nms, NmsConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig<T = f64> {
    /// Strictly increasing weights in `(0, 1]`.
    pub weight_grid: Vec<T>,
    pub max_iters: usize,
    pub tolerance_sec: f64,
    pub nms: NmsConfig,
    pub allow_reselection: bool,
    /// A pair is accepted only if its objective is strictly greater.
    pub min_improvement: f64,
    /// Worker threads for pair evaluation; `0` uses the global rayon pool.
    pub threads: usize,
}

impl<T: Scalar> Default for SearchConfig<T> {
    fn default() -> Self {
        SearchConfig {
            weight_grid: (1..=10).map(|i| T::from_count(i) / T::from_count(10)).collect(),
            max_iters: 20,
            tolerance_sec: 1.0,
            nms: NmsConfig::default(),
            allow_reselection: true,
            min_improvement: 0.0,
            threads: 0,
        }
    }
}

impl<T: Scalar> SearchConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.weight_grid.is_empty() {
            return Err(Error::Config("weight grid is empty".into()));
        }
        if self.weight_grid.iter().any(|w| !(w.is_unit() && *w > T::zero())) {
            return Err(Error::Config("weight grid values must lie in (0, 1]".into()));
        }
        if self.weight_grid.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Config("weight grid must be strictly increasing".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.tolerance_sec.is_finite() && self.tolerance_sec > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !self.min_improvement.is_finite() {
            return Err(Error::Config("min_improvement must be finite".into()));
        }
        self.nms.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalReason {
    NoImprovement,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub candidate_id: String,
    pub weight: f64,
    pub map: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub iterations: Vec<IterationRecord>,
    pub terminal_reason: TerminalReason,
}

impl SearchTrace {
    pub fn final_map(&self) -> f64 {
        self.iterations.last().map_or(0.0, |r| r.map)
    }
}

/// NMS on every video, then mAP.
fn score_videos<T: Scalar>(
    matrices: impl Iterator<Item = Result<ScoreMatrix<T>>>,
    gt: &[GroundTruth],
    tolerance_sec: f64,
    nms: &NmsConfig,
) -> Result<EvalReport> {
    let preds = matrices
        .map(|m| m.map(|m| temporal_nms(&m, nms)))
        .collect::<Result<Vec<SpotPrediction<T>>>>()?;
    map_at_tolerance(&preds, gt, tolerance_sec)
}

/// Realize, NMS and score an ensemble on the given videos.
pub fn evaluate_ensemble<T: Scalar>(
    spec: &EnsembleSpec<T>,
    pool: &[CandidateModel<T>],
    gt: &[GroundTruth],
    tolerance_sec: f64,
    nms: &NmsConfig,
) -> Result<EvalReport> {
    score_videos(gt.iter().map(|g| realize(spec, pool, g.video_id())), gt, tolerance_sec, nms)
}

/// Where NMS sits relative to ensembling when producing final spots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineOrder {
    /// Combine dense scores, then run NMS once.
    #[default]
    EnsembleFirst,
    /// Run NMS on every member, rasterize the spots, combine, then NMS again.
    NmsFirst,
}

/// Final spots of one video for a fitted ensemble.
pub fn predict_video<T: Scalar>(
    spec: &EnsembleSpec<T>,
    pool: &[CandidateModel<T>],
    video_id: &str,
    nms: &NmsConfig,
    order: PipelineOrder,
) -> Result<SpotPrediction<T>> {
    match order {
        PipelineOrder::EnsembleFirst => Ok(temporal_nms(&realize(spec, pool, video_id)?, nms)),
        PipelineOrder::NmsFirst => {
            let sparse = pool
                .iter()
                .filter(|c| spec.contains(&c.id))
                .map(|c| {
                    let m = c.scores_for(video_id)?;
                    let mut out = c.clone();
                    out.scores.clear();
                    out.scores.insert(
                        video_id.to_owned(),
                        rasterize(&temporal_nms(m, nms), m.num_frames(), m.num_classes())?,
                    );
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(temporal_nms(&realize(spec, &sparse, video_id)?, nms))
        }
    }
}

struct Pair {
    candidate: usize,
    weight: usize,
}

pub fn run_bme<T: Scalar>(
    pool: &[CandidateModel<T>],
    valid_gt: &[GroundTruth],
    cfg: &SearchConfig<T>,
) -> Result<(EnsembleSpec<T>, SearchTrace)> {
    if pool.is_empty() {
        return Err(Error::Config("candidate pool is empty".into()));
    }
    cfg.validate()?;
    validate_pool(pool, &valid_gt.iter().collect::<Vec<_>>())?;

    if cfg.threads == 0 {
        search(pool, valid_gt, cfg)
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| search(pool, valid_gt, cfg))
    }
}

fn search<T: Scalar>(
    pool: &[CandidateModel<T>],
    gt: &[GroundTruth],
    cfg: &SearchConfig<T>,
) -> Result<(EnsembleSpec<T>, SearchTrace)> {
    let single_maps = pool
        .par_iter()
        .map(|cand| {
            score_videos(
                gt.iter().map(|g| cand.scores_for(g.video_id()).cloned()),
                gt,
                cfg.tolerance_sec,
                &cfg.nms,
            )
            .map(|r| r.map)
        })
        .collect::<Result<Vec<f64>>>()?;

    // e(F_0) = 0, so iteration 1 is plain argmax; first index wins ties.
    let (best, best_map) = single_maps
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });

    let mut spec = EnsembleSpec::single(pool[best].id.clone());
    let mut trace = vec![IterationRecord {
        iteration: 1,
        candidate_id: pool[best].id.clone(),
        weight: 1.0,
        map: best_map,
        objective: objective_delta(best_map, 0.0),
    }];
    let mut current: Vec<ScoreMatrix<T>> = gt
        .iter()
        .map(|g| pool[best].scores_for(g.video_id()).cloned())
        .collect::<Result<_>>()?;
    let mut current_map = best_map;

    for iteration in 2..=cfg.max_iters {
        let pairs: Vec<Pair> = pool
            .iter()
            .enumerate()
            .filter(|(_, c)| cfg.allow_reselection || !spec.contains(&c.id))
            .flat_map(|(candidate, _)| (0..cfg.weight_grid.len()).map(move |weight| Pair { candidate, weight }))
            .collect();
        if pairs.is_empty() {
            log::debug!("iteration {iteration}: no eligible candidates left");
            return Ok(finish(spec, trace, TerminalReason::NoImprovement));
        }

        let maps = pairs
            .par_iter()
            .map(|p| {
                let cand = &pool[p.candidate];
                let w = cfg.weight_grid[p.weight];
                score_videos(
                    current
                        .iter()
                        .zip(gt)
                        .map(|(prev, g)| combine(prev, cand.scores_for(g.video_id())?, w)),
                    gt,
                    cfg.tolerance_sec,
                    &cfg.nms,
                )
                .map(|r| r.map)
            })
            .collect::<Result<Vec<f64>>>()?;

        // pairs are in (pool order, ascending weight); keep the first maximum
        let mut chosen = 0;
        let mut best_obj = f64::NEG_INFINITY;
        for (i, &m) in maps.iter().enumerate() {
            let obj = objective_delta(m, current_map);
            if obj > best_obj {
                best_obj = obj;
                chosen = i;
            }
        }
        log::debug!("iteration {iteration}: best objective {best_obj}");
        if best_obj.partial_cmp(&cfg.min_improvement) != Some(std::cmp::Ordering::Greater) {
            return Ok(finish(spec, trace, TerminalReason::NoImprovement));
        }

        let pair = &pairs[chosen];
        let cand = &pool[pair.candidate];
        let w = cfg.weight_grid[pair.weight];
        spec.push(cand.id.clone(), w)?;
        current = current
            .iter()
            .zip(gt)
            .map(|(prev, g)| combine(prev, cand.scores_for(g.video_id())?, w))
            .collect::<Result<_>>()?;
        current_map = maps[chosen];
        trace.push(IterationRecord {
            iteration,
            candidate_id: cand.id.clone(),
            weight: w.to_f64(),
            map: current_map,
            objective: best_obj,
        });
    }
    Ok(finish(spec, trace, TerminalReason::MaxIters))
}

fn finish<T>(spec: EnsembleSpec<T>, iterations: Vec<IterationRecord>, reason: TerminalReason) -> (EnsembleSpec<T>, SearchTrace) {
    (
        spec,
        SearchTrace {
            iterations,
            terminal_reason: reason,
        },
    )
}
