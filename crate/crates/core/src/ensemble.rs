//! Convex ensembles built one member at a time.
//!
//! An ensemble is the left fold `F_t = (1 - w_t) F_{t-1} + w_t f_t` over an
//! ordered list of steps, with the first step weight fixed to one. Flattening
//! the fold gives each member the effective weight
//! `w_t * prod_{u > t} (1 - w_u)`, and those weights always sum to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateModel, ScoreMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStep<T = f64> {
    pub candidate_id: String,
    pub weight: T,
}

/// Ordered ensemble steps. The first step always has weight one and every
/// later weight lies in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnsembleSpec<T = f64> {
    steps: Vec<EnsembleStep<T>>,
}

impl<T: Scalar> EnsembleSpec<T> {
    pub fn new() -> Self {
        EnsembleSpec { steps: Vec::new() }
    }

    pub fn from_steps(steps: impl IntoIterator<Item = (impl Into<String>, T)>) -> Result<Self> {
        let mut spec = Self::new();
        for (id, w) in steps {
            spec.push(id, w)?;
        }
        Ok(spec)
    }

    /// Single-member ensemble.
    pub fn single(candidate_id: impl Into<String>) -> Self {
        EnsembleSpec {
            steps: vec![EnsembleStep {
                candidate_id: candidate_id.into(),
                weight: T::one(),
            }],
        }
    }

    pub fn push(&mut self, candidate_id: impl Into<String>, weight: T) -> Result<()> {
        let candidate_id = candidate_id.into();
        if self.steps.is_empty() {
            if weight != T::one() {
                return Err(Error::Domain(format!(
                    "first step weight must be 1, got {weight:?} for {candidate_id}"
                )));
            }
        } else if !(weight.is_unit() && weight > T::zero()) {
            return Err(Error::Domain(format!(
                "step weight must be in (0, 1], got {weight:?} for {candidate_id}"
            )));
        }
        self.steps.push(EnsembleStep { candidate_id, weight });
        Ok(())
    }

    pub fn steps(&self) -> &[EnsembleStep<T>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn contains(&self, candidate_id: &str) -> bool {
        self.steps.iter().any(|s| s.candidate_id == candidate_id)
    }

    /// Re-validates a spec that came from outside (e.g. deserialization).
    pub fn validate(&self) -> Result<()> {
        let mut check = Self::new();
        for s in &self.steps {
            check.push(s.candidate_id.clone(), s.weight)?;
        }
        Ok(())
    }
}

/// `(1 - w) * prev + w * member`, cell by cell.
///
/// Evaluated as `prev + w * (member - prev)` with the endpoints `w = 0` and
/// `w = 1` returning the operands exactly; the result is clamped to the
/// interval spanned by the two operands so it never leaves `[0, 1]`.
pub fn combine<T: Scalar>(prev: &ScoreMatrix<T>, member: &ScoreMatrix<T>, w: T) -> Result<ScoreMatrix<T>> {
    prev.check_same_shape(member)?;
    if !w.is_unit() {
        return Err(Error::Domain(format!("combination weight {w:?} is not in [0, 1]")));
    }
    if w == T::zero() {
        return Ok(prev.clone());
    }
    if w == T::one() {
        return Ok(member.clone());
    }
    let values = prev
        .values()
        .iter()
        .zip(member.values())
        .map(|(&a, &b)| mix(a, b, w))
        .collect();
    Ok(ScoreMatrix::from_parts_unchecked(
        prev.video_id().to_owned(),
        prev.num_frames(),
        prev.num_classes(),
        values,
    ))
}

#[inline]
fn mix<T: Scalar>(a: T, b: T, w: T) -> T {
    let v = a + w * (b - a);
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

fn find_candidate<'a, T: Scalar>(pool: &'a [CandidateModel<T>], id: &str) -> Result<&'a CandidateModel<T>> {
    pool.iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::Lookup(format!("candidate {id} is not in the pool")))
}

/// Ensemble scores for one video: the left fold of [`combine`] over the steps.
pub fn realize<T: Scalar>(spec: &EnsembleSpec<T>, pool: &[CandidateModel<T>], video_id: &str) -> Result<ScoreMatrix<T>> {
    let mut steps = spec.steps().iter();
    let first = steps
        .next()
        .ok_or_else(|| Error::State("cannot realize an empty ensemble".into()))?;
    if first.weight != T::one() {
        return Err(Error::Domain("first step weight must be 1".into()));
    }
    let mut acc = find_candidate(pool, &first.candidate_id)?.scores_for(video_id)?.clone();
    for step in steps {
        let member = find_candidate(pool, &step.candidate_id)?.scores_for(video_id)?;
        acc = combine(&acc, member, step.weight)?;
    }
    Ok(acc)
}

/// Net coefficient of each distinct member in the flattened ensemble, in
/// order of first appearance.
pub fn effective_weights<T: Scalar>(spec: &EnsembleSpec<T>) -> Result<Vec<(String, T)>> {
    if spec.is_empty() {
        return Err(Error::State("effective weights of an empty ensemble".into()));
    }
    let steps = spec.steps();
    let mut per_step = vec![T::zero(); steps.len()];
    let mut tail = T::one();
    for (t, step) in steps.iter().enumerate().rev() {
        per_step[t] = step.weight * tail;
        tail = tail * (T::one() - step.weight);
    }
    let mut merged: Vec<(String, T)> = Vec::new();
    for (step, eff) in steps.iter().zip(per_step) {
        match merged.iter_mut().find(|(id, _)| *id == step.candidate_id) {
            Some((_, acc)) => *acc = *acc + eff,
            None => merged.push((step.candidate_id.clone(), eff)),
        }
    }
    Ok(merged)
}
