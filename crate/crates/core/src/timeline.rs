//! Time regions and speaker annotations.

use std::collections::BTreeMap;

/// Frame width used for scoring and ground-truth labels.
pub const FRAME_SECONDS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub start: f64,
    pub end: f64,
}

impl Region {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn duration(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }

    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (end > start).then_some(Region { start, end })
    }
}

/// Sorted, non-overlapping set of regions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timeline {
    regions: Vec<Region>,
}

impl Timeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a timeline, merging overlapping or touching regions and
    /// dropping empty ones.
    pub fn from_regions(regions: impl IntoIterator<Item = Region>) -> Self {
        let mut rs: Vec<Region> = regions.into_iter().filter(|r| r.end > r.start).collect();
        rs.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        let mut merged: Vec<Region> = Vec::with_capacity(rs.len());
        for r in rs {
            match merged.last_mut() {
                Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
                _ => merged.push(r),
            }
        }
        Self { regions: merged }
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.regions.iter().map(Region::duration).fold(0.0, |a, d| a + d)
    }

    pub fn union(&self, other: &Timeline) -> Timeline {
        Timeline::from_regions(self.regions.iter().chain(&other.regions).copied())
    }

    pub fn intersect(&self, other: &Timeline) -> Timeline {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.regions.len() && j < other.regions.len() {
            let a = self.regions[i];
            let b = other.regions[j];
            if let Some(r) = a.intersect(&b) {
                out.push(r);
            }
            if a.end < b.end {
                i += 1;
            } else {
                j += 1;
            }
        }
        Timeline::from_regions(out)
    }

    pub fn subtract(&self, other: &Timeline) -> Timeline {
        let mut out = Vec::new();
        for r in &self.regions {
            let mut cursor = r.start;
            for o in &other.regions {
                if o.end <= cursor || o.start >= r.end {
                    continue;
                }
                if o.start > cursor {
                    out.push(Region::new(cursor, o.start));
                }
                cursor = cursor.max(o.end);
            }
            if cursor < r.end {
                out.push(Region::new(cursor, r.end));
            }
        }
        Timeline::from_regions(out)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.regions.iter().any(|r| r.start <= t && t < r.end)
    }

    /// Per-frame membership, a frame being active when its center is covered.
    pub fn to_frames(&self, n_frames: usize, frame: f64) -> Vec<bool> {
        let mut out = vec![false; n_frames];
        for r in &self.regions {
            let (a, b) = frame_range(r.start, r.end, frame, n_frames);
            out[a..b].iter_mut().for_each(|v| *v = true);
        }
        out
    }

    /// Inverse of [`Timeline::to_frames`]: runs of active frames become regions.
    pub fn from_frames(frames: &[bool], frame: f64) -> Timeline {
        let mut regions = Vec::new();
        let mut start = None;
        for (i, &on) in frames.iter().enumerate() {
            match (on, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    regions.push(Region::new(s as f64 * frame, i as f64 * frame));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            regions.push(Region::new(s as f64 * frame, frames.len() as f64 * frame));
        }
        Timeline::from_regions(regions)
    }
}

/// Frames `[a, b)` whose centers fall inside `[start, end)`.
pub fn frame_range(start: f64, end: f64, frame: f64, n_frames: usize) -> (usize, usize) {
    // center of frame i is (i + 0.5) * frame; covered iff start <= c < end
    let first = ((start / frame) - 0.5).ceil().max(0.0);
    let last = ((end / frame) - 0.5).ceil().max(0.0);
    let a = (first as usize).min(n_frames);
    let b = (last as usize).min(n_frames);
    (a, b.max(a))
}

pub fn frame_count(duration: f64, frame: f64) -> usize {
    (duration / frame).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub speaker: String,
}

impl Segment {
    pub fn new(start: f64, end: f64, speaker: impl Into<String>) -> Self {
        Self {
            start,
            end,
            speaker: speaker.into(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Speaker-labelled segments; the same speaker may have overlapping
/// segments only transiently, [`Annotation::normalized`] merges them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotation {
    pub segments: Vec<Segment>,
}

impl Annotation {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.segments.iter().map(|s| s.speaker.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn speaker_timeline(&self, speaker: &str) -> Timeline {
        Timeline::from_regions(
            self.segments
                .iter()
                .filter(|s| s.speaker == speaker)
                .map(|s| Region::new(s.start, s.end)),
        )
    }

    pub fn by_speaker(&self) -> BTreeMap<String, Timeline> {
        self.speakers()
            .into_iter()
            .map(|s| {
                let t = self.speaker_timeline(&s);
                (s, t)
            })
            .collect()
    }

    /// Union of all speech.
    pub fn support(&self) -> Timeline {
        Timeline::from_regions(self.segments.iter().map(|s| Region::new(s.start, s.end)))
    }

    /// Regions where at least two speakers are active.
    pub fn overlap(&self) -> Timeline {
        let per = self.by_speaker();
        let tls: Vec<&Timeline> = per.values().collect();
        let mut out = Timeline::new();
        for i in 0..tls.len() {
            for j in i + 1..tls.len() {
                out = out.union(&tls[i].intersect(tls[j]));
            }
        }
        out
    }

    /// Per-speaker merged segments sorted by onset then speaker.
    pub fn normalized(&self) -> Annotation {
        let mut segments: Vec<Segment> = self
            .by_speaker()
            .into_iter()
            .flat_map(|(spk, tl)| {
                tl.regions()
                    .iter()
                    .map(|r| Segment::new(r.start, r.end, spk.clone()))
                    .collect::<Vec<_>>()
            })
            .collect();
        sort_segments(&mut segments);
        Annotation { segments }
    }

    pub fn restrict(&self, tl: &Timeline) -> Annotation {
        let mut segments = Vec::new();
        for (spk, own) in self.by_speaker() {
            for r in own.intersect(tl).regions() {
                segments.push(Segment::new(r.start, r.end, spk.clone()));
            }
        }
        sort_segments(&mut segments);
        Annotation { segments }
    }

    pub fn end_time(&self) -> f64 {
        self.segments.iter().map(|s| s.end).fold(0.0, f64::max)
    }

    /// Number of active speakers per frame.
    pub fn frame_counts(&self, n_frames: usize, frame: f64) -> Vec<u8> {
        let mut counts = vec![0u8; n_frames];
        for tl in self.by_speaker().values() {
            for (c, on) in counts.iter_mut().zip(tl.to_frames(n_frames, frame)) {
                *c += on as u8;
            }
        }
        counts
    }
}

pub fn sort_segments(segments: &mut [Segment]) {
    segments.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then_with(|| a.speaker.cmp(&b.speaker))
            .then(a.end.total_cmp(&b.end))
    });
}
