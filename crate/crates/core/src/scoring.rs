//! Diarization error rate and overlap detection metrics.
//!
//! Both scorers work on 10 ms frames; a frame belongs to a segment when its
//! center does. DER follows the usual convention: per frame,
//! `miss = max(0, N_ref − N_hyp)`, `fa = max(0, N_hyp − N_ref)` and
//! `spkerr = min(N_ref, N_hyp) − N_correct`, with the speaker mapping
//! chosen by Hungarian assignment to maximize matched speaker-time.

use std::fmt;

use crate::timeline::{frame_range, Annotation, Timeline, FRAME_SECONDS};

pub const DEFAULT_COLLAR: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct DerReport {
    pub miss: f64,
    pub fa: f64,
    pub spkerr: f64,
    pub der: f64,
    /// Scored reference speaker-time in seconds.
    pub scored_time: f64,
    pub mapping: Vec<(String, String)>,
    pub counts: DerCounts,
}

/// Raw frame counts behind a [`DerReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DerCounts {
    pub total: u64,
    pub miss: u64,
    pub fa: u64,
    pub spkerr: u64,
}

impl DerCounts {
    pub fn percentages(&self) -> (f64, f64, f64, f64) {
        if self.total == 0 {
            return (0.0, 0.0, 0.0, 0.0);
        }
        let t = self.total as f64;
        let miss = 100.0 * self.miss as f64 / t;
        let fa = 100.0 * self.fa as f64 / t;
        let spk = 100.0 * self.spkerr as f64 / t;
        (miss, fa, spk, miss + fa + spk)
    }
}

impl fmt::Display for DerReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "MISS={:.2}", self.miss)?;
        writeln!(f, "FA={:.2}", self.fa)?;
        writeln!(f, "SPKERR={:.2}", self.spkerr)?;
        writeln!(f, "DER={:.2}", self.der)?;
        write!(f, "SCORED_TIME={:.2}", self.scored_time)
    }
}

/// Per-speaker frame activity.
pub(crate) fn speaker_frames(ann: &Annotation, n_frames: usize) -> (Vec<String>, Vec<Vec<bool>>) {
    let per = ann.by_speaker();
    let names = per.keys().cloned().collect();
    let frames = per.values().map(|tl| tl.to_frames(n_frames, FRAME_SECONDS)).collect();
    (names, frames)
}

/// Frames excluded by a collar around every reference segment boundary.
pub(crate) fn collar_mask(reference: &Annotation, collar: f64, n_frames: usize) -> Vec<bool> {
    let mut excluded = vec![false; n_frames];
    if collar <= 0.0 {
        return excluded;
    }
    for tl in reference.by_speaker().values() {
        for r in tl.regions() {
            for b in [r.start, r.end] {
                let (lo, hi) = frame_range(b - collar - FRAME_SECONDS, b + collar + FRAME_SECONDS, FRAME_SECONDS, n_frames);
                for (i, e) in excluded.iter_mut().enumerate().take(hi).skip(lo) {
                    let center = (i as f64 + 0.5) * FRAME_SECONDS;
                    if (center - b).abs() < collar {
                        *e = true;
                    }
                }
            }
        }
    }
    excluded
}

pub(crate) fn span_frames(a: &Annotation, b: &Annotation) -> usize {
    let end = a.end_time().max(b.end_time());
    (end / FRAME_SECONDS).ceil() as usize + 1
}

pub fn score_der(reference: &Annotation, hypothesis: &Annotation, collar: f64, score_overlap: bool) -> DerReport {
    let n_frames = span_frames(reference, hypothesis);
    let (ref_names, ref_frames) = speaker_frames(reference, n_frames);
    let (hyp_names, hyp_frames) = speaker_frames(hypothesis, n_frames);
    let excluded = collar_mask(reference, collar, n_frames);

    let mut co = vec![vec![0i64; hyp_names.len()]; ref_names.len()];
    let mut counts = DerCounts::default();
    let mut n_correct_upper = 0u64;
    for t in 0..n_frames {
        if excluded[t] {
            continue;
        }
        let n_ref = ref_frames.iter().filter(|f| f[t]).count() as u64;
        if !score_overlap && n_ref >= 2 {
            continue;
        }
        let n_hyp = hyp_frames.iter().filter(|f| f[t]).count() as u64;
        counts.total += n_ref;
        counts.miss += n_ref.saturating_sub(n_hyp);
        counts.fa += n_hyp.saturating_sub(n_ref);
        n_correct_upper += n_ref.min(n_hyp);
        for (r, rf) in ref_frames.iter().enumerate() {
            if rf[t] {
                for (h, hf) in hyp_frames.iter().enumerate() {
                    if hf[t] {
                        co[r][h] += 1;
                    }
                }
            }
        }
    }
    let assignment = max_weight_assignment(&co);
    let correct: i64 = assignment.iter().map(|&(r, h)| co[r][h]).sum();
    counts.spkerr = n_correct_upper - correct as u64;
    let (miss, fa, spkerr, der) = counts.percentages();
    DerReport {
        miss,
        fa,
        spkerr,
        der,
        scored_time: counts.total as f64 * FRAME_SECONDS,
        mapping: assignment
            .into_iter()
            .filter(|&(r, h)| co[r][h] > 0)
            .map(|(r, h)| (ref_names[r].clone(), hyp_names[h].clone()))
            .collect(),
        counts,
    }
}

/// Hungarian assignment maximizing the total weight of a rectangular
/// matrix; returns matched `(row, col)` pairs.
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> Vec<(usize, usize)> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let n = rows.max(cols);
    let max_w = weights.iter().flatten().copied().max().unwrap_or(0);
    // square cost matrix, minimizing (max_w - w); padding costs max_w
    let cost = |i: usize, j: usize| -> i64 {
        if i < rows && j < cols {
            max_w - weights[i][j]
        } else {
            max_w
        }
    };
    // potentials formulation, 1-based with a virtual column 0
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] != 0 && p[j] - 1 < rows && j - 1 < cols)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsdReport {
    /// Absent when the reference has no overlap.
    pub deter: Option<f64>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl fmt::Display for OsdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.deter {
            Some(d) => writeln!(f, "DETER={d:.2}")?,
            None => writeln!(f, "DETER=NA")?,
        }
        writeln!(f, "ACCURACY={:.2}", self.accuracy)?;
        writeln!(f, "PRECISION={:.2}", self.precision)?;
        write!(f, "RECALL={:.2}", self.recall)
    }
}

/// Frame-level overlap detection scores over `[0, duration)`. Precision
/// (recall) is reported as 0 when nothing is predicted (present).
pub fn score_osd(reference: &Timeline, hypothesis: &Timeline, duration: f64) -> OsdReport {
    let n_frames = (duration / FRAME_SECONDS).round() as usize;
    let r = reference.to_frames(n_frames, FRAME_SECONDS);
    let h = hypothesis.to_frames(n_frames, FRAME_SECONDS);
    score_osd_frames(&r, &h)
}

pub fn score_osd_frames(reference: &[bool], hypothesis: &[bool]) -> OsdReport {
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&r, &h) in reference.iter().zip(hypothesis) {
        match (r, h) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let pct = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    OsdReport {
        deter: (tp + fn_ > 0).then(|| pct(fp + fn_, tp + fn_)),
        accuracy: pct(tp + tn, tp + tn + fp + fn_),
        precision: pct(tp, tp + fp),
        recall: pct(tp, tp + fn_),
        tp,
        fp,
        fn_,
        tn,
    }
}
