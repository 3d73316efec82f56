//! Secondary speaker assignment inside detected overlap.
//!
//! Each clustering window owns the stretch of time between the midpoints
//! of its overlaps with its neighbours. Where that stretch meets a detected
//! overlap region, the window gets a second speaker: the cluster, other
//! than its own, whose members are on average most similar to it in the
//! fused similarity matrix. Near-ties go to the candidate speaking closest
//! in time.

use crate::cluster::{assign_labels, speaker_name, window_spans, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::timeline::{Annotation, Region, Segment, Timeline};

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SecondaryAssignment {
    pub region: Region,
    pub primary: String,
    pub secondary: String,
}

/// Mean fused similarity of window `i` to every cluster.
pub fn centroid_scores(fused: &SimilarityMatrix, labels: &[usize], i: usize, k: usize) -> Vec<f64> {
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (j, &l) in labels.iter().enumerate() {
        sum[l] += fused.get(i, j);
        count[l] += 1;
    }
    sum.iter().zip(&count).map(|(s, &c)| if c == 0 { f64::NEG_INFINITY } else { s / c as f64 }).collect()
}

fn distance_to(tl: &Timeline, r: &Region) -> f64 {
    tl.regions()
        .iter()
        .map(|s| {
            if s.end <= r.start {
                r.start - s.end
            } else if s.start >= r.end {
                s.start - r.end
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// The secondary speaker of every window piece inside the overlap.
pub fn secondary_assignments(
    overlaps: &Timeline,
    fused: &SimilarityMatrix,
    windows: &[Region],
    labels: &[usize],
) -> Result<Vec<SecondaryAssignment>> {
    if windows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: windows.len(),
            right: labels.len(),
        });
    }
    if fused.size() != windows.len() {
        return Err(Error::ShapeMismatch(format!(
            "similarity matrix is {0}x{0} for {1} windows",
            fused.size(),
            windows.len()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    if k < 2 || overlaps.is_empty() {
        return Ok(Vec::new());
    }
    // ties look at the primary labelling, so a second pass sees the same thing
    let by_speaker = assign_labels(labels, windows)?.by_speaker();
    let mut out = Vec::new();
    for (i, span) in window_spans(windows).iter().enumerate() {
        let pieces: Vec<Region> = overlaps
            .regions()
            .iter()
            .filter_map(|r| r.intersect(span))
            .filter(|r| r.end > r.start)
            .collect();
        if pieces.is_empty() {
            continue;
        }
        let scores = centroid_scores(fused, labels, i, k);
        let own = labels[i];
        let best = (0..k)
            .filter(|&c| c != own)
            .map(|c| scores[c])
            .fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..k).filter(|&c| c != own && scores[c] >= best - TIE_EPS).collect();
        for piece in pieces {
            let pick = if tied.len() == 1 {
                tied[0]
            } else {
                // nearest adjacent segment of a tied candidate; lowest label on a full tie
                let mut best_c = tied[0];
                let mut best_d = f64::INFINITY;
                for &c in &tied {
                    let d = by_speaker.get(&speaker_name(c)).map_or(f64::INFINITY, |tl| distance_to(tl, &piece));
                    if d < best_d {
                        best_d = d;
                        best_c = c;
                    }
                }
                best_c
            };
            out.push(SecondaryAssignment {
                region: piece,
                primary: speaker_name(own),
                secondary: speaker_name(pick),
            });
        }
    }
    Ok(out)
}

/// Adds secondary speaker segments inside `overlaps` to a diarization
/// produced from `labels` on `windows`. Nothing changes outside the overlap;
/// with a single cluster or no overlap the annotation is returned as is.
pub fn assign_secondary(
    diar: &Annotation,
    overlaps: &Timeline,
    fused: &SimilarityMatrix,
    windows: &[Region],
    labels: &[usize],
) -> Result<Annotation> {
    let assignments = secondary_assignments(overlaps, fused, windows, labels)?;
    if assignments.is_empty() {
        return Ok(diar.clone());
    }
    let mut segments = diar.segments.clone();
    segments.extend(
        assignments
            .into_iter()
            .map(|a| Segment::new(a.region.start, a.region.end, a.secondary)),
    );
    Ok(Annotation::new(segments).normalized())
}
