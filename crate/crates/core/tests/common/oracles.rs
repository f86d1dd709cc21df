//! Slow, literal reference implementations used to cross-check the library.
//! Nothing here calls into the code paths it checks.

#![allow(dead_code, clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

/// One ground-truth video for the reference evaluator.
#[derive(Debug, Clone)]
pub struct RefVideo {
    pub id: String,
    pub fps: f64,
    /// `(frame, class)`
    pub events: Vec<(usize, usize)>,
}

/// `(video, frame, class, confidence)`
pub type RefDetection = (String, usize, usize, f64);

/// mAP by selection-order matching and an explicit suffix-max precision
/// envelope. Returns `None` when no class has ground truth.
pub fn brute_force_map(videos: &[RefVideo], dets: &[RefDetection], tolerance_sec: f64) -> Option<f64> {
    let mut classes: Vec<usize> = videos.iter().flat_map(|v| v.events.iter().map(|e| e.1)).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for &class in &classes {
        total += brute_force_ap(videos, dets, class, tolerance_sec);
    }
    Some(total / classes.len() as f64)
}

fn ranks_before(a: &RefDetection, b: &RefDetection) -> bool {
    if a.3 != b.3 {
        return a.3 > b.3;
    }
    if a.0 != b.0 {
        return a.0 < b.0;
    }
    a.1 < b.1
}

pub fn brute_force_ap(videos: &[RefVideo], dets: &[RefDetection], class: usize, tolerance_sec: f64) -> f64 {
    // every (video index, event frame) of this class, with a used flag
    let mut gt: Vec<(usize, usize, bool)> = Vec::new();
    for (vi, v) in videos.iter().enumerate() {
        for &(frame, c) in &v.events {
            if c == class {
                gt.push((vi, frame, false));
            }
        }
    }
    let num_gt = gt.len();
    if num_gt == 0 {
        return 0.0;
    }

    let mut remaining: Vec<&RefDetection> = dets.iter().filter(|d| d.2 == class).collect();
    let mut hits = Vec::new();
    while !remaining.is_empty() {
        // selection of the top-ranked remaining detection
        let mut top = 0;
        for i in 1..remaining.len() {
            if ranks_before(remaining[i], remaining[top]) {
                top = i;
            }
        }
        let det = remaining.remove(top);
        let vi = videos.iter().position(|v| v.id == det.0).expect("known video");
        let tol = (videos[vi].fps * tolerance_sec).round() as i64;
        let mut best: Option<usize> = None;
        for (gi, &(gv, frame, used)) in gt.iter().enumerate() {
            if gv != vi || used {
                continue;
            }
            let dist = (frame as i64 - det.1 as i64).abs();
            if dist > tol {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let bd = (gt[b].1 as i64 - det.1 as i64).abs();
                    dist < bd || (dist == bd && frame < gt[b].1)
                }
            };
            if better {
                best = Some(gi);
            }
        }
        match best {
            Some(gi) => {
                gt[gi].2 = true;
                hits.push(true);
            }
            None => hits.push(false),
        }
    }

    let mut precision = Vec::new();
    let mut tp = 0;
    for (k, &h) in hits.iter().enumerate() {
        if h {
            tp += 1;
        }
        precision.push(tp as f64 / (k + 1) as f64);
    }
    let mut ap = 0.0;
    for k in 0..hits.len() {
        if hits[k] {
            let envelope = precision[k..].iter().cloned().fold(f64::MIN, f64::max);
            ap += envelope / num_gt as f64;
        }
    }
    ap
}

/// Literal greedy suppression: repeatedly take the best unsuppressed frame.
/// Returns `(class, frame, score)` sorted by class then frame.
pub fn brute_force_nms(columns: &[Vec<f64>], window: usize, threshold: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (class, col) in columns.iter().enumerate() {
        let mut alive: Vec<bool> = col.iter().map(|&s| s >= threshold).collect();
        let mut kept = Vec::new();
        loop {
            let mut best: Option<usize> = None;
            for f in 0..col.len() {
                if alive[f] && best.is_none_or(|b| col[f] > col[b]) {
                    best = Some(f);
                }
            }
            let Some(b) = best else { break };
            kept.push((class, b, col[b]));
            for f in 0..col.len() {
                if (f as i64 - b as i64).unsigned_abs() as usize <= window {
                    alive[f] = false;
                }
            }
        }
        kept.sort_by_key(|k| k.1);
        out.extend(kept);
    }
    out
}

/// Explicit recursion `F_t = (1 - w_t) F_{t-1} + w_t f_t` on flat vectors.
pub fn recursive_ensemble(members: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    let mut acc = members[0].to_vec();
    for (m, &w) in members.iter().zip(weights).skip(1) {
        for (a, &x) in acc.iter_mut().zip(m.iter()) {
            *a = (1.0 - w) * *a + w * x;
        }
    }
    acc
}

/// Dense accumulate / count merge of strided clips:
/// `(start, stride, rows)` with `rows[k][class]`.
pub fn accumulate_clips(clips: &[(usize, usize, Vec<Vec<f64>>)], num_frames: usize, num_classes: usize) -> Vec<f64> {
    let mut sum = vec![vec![0.0; num_classes]; num_frames];
    let mut count = vec![0.0; num_frames];
    for (start, stride, rows) in clips {
        for (k, row) in rows.iter().enumerate() {
            let f = start + k * stride;
            count[f] += 1.0;
            for c in 0..num_classes {
                sum[f][c] += row[c];
            }
        }
    }
    let mut out = Vec::new();
    for f in 0..num_frames {
        for c in 0..num_classes {
            out.push(sum[f][c] / count[f]);
        }
    }
    out
}

/// Per-video dense scores `[video][frame * classes + class]` of one candidate.
pub type RefScores = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct RefStep {
    pub candidate: usize,
    pub weight: f64,
    pub map: f64,
}

/// Exhaustive greedy search: at every step enumerate all `(candidate,
/// weight)` pairs, rebuild each ensemble from scratch by explicit recursion
/// and score it with the brute-force NMS and AP above.
#[allow(clippy::too_many_arguments)]
pub fn exhaustive_greedy(
    pool: &[RefScores],
    videos: &[RefVideo],
    num_frames: usize,
    num_classes: usize,
    grid: &[f64],
    max_iters: usize,
    window: usize,
    threshold: f64,
    tolerance_sec: f64,
) -> Vec<RefStep> {
    let score = |members: &[usize], weights: &[f64]| -> f64 {
        let mut dets = Vec::new();
        for (vi, v) in videos.iter().enumerate() {
            let mats: Vec<&[f64]> = members.iter().map(|&m| pool[m][vi].as_slice()).collect();
            let dense = recursive_ensemble(&mats, weights);
            let columns: Vec<Vec<f64>> = (0..num_classes)
                .map(|c| (0..num_frames).map(|f| dense[f * num_classes + c]).collect())
                .collect();
            for (class, frame, s) in brute_force_nms(&columns, window, threshold) {
                dets.push((v.id.clone(), frame, class, s));
            }
        }
        brute_force_map(videos, &dets, tolerance_sec).unwrap_or(0.0)
    };

    let mut steps: Vec<RefStep> = Vec::new();
    let mut best = (0, f64::MIN);
    for c in 0..pool.len() {
        let m = score(&[c], &[1.0]);
        if m > best.1 {
            best = (c, m);
        }
    }
    steps.push(RefStep {
        candidate: best.0,
        weight: 1.0,
        map: best.1,
    });

    for _ in 2..=max_iters {
        let members: Vec<usize> = steps.iter().map(|s| s.candidate).collect();
        let weights: Vec<f64> = steps.iter().map(|s| s.weight).collect();
        let current = steps.last().unwrap().map;
        let mut choice: Option<(usize, f64, f64)> = None;
        for c in 0..pool.len() {
            for &w in grid {
                let mut ms = members.clone();
                ms.push(c);
                let mut ws = weights.clone();
                ws.push(w);
                let m = score(&ms, &ws);
                if choice.is_none_or(|(_, _, bm)| m - current > bm - current) {
                    choice = Some((c, w, m));
                }
            }
        }
        let (c, w, m) = choice.unwrap();
        if !(m - current > 0.0) {
            break;
        }
        steps.push(RefStep {
            candidate: c,
            weight: w,
            map: m,
        });
    }
    steps
}
