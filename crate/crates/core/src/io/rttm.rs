use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::timeline::{sort_segments, Annotation, Region, Segment, Timeline};

pub fn parse_rttm(path: &Path) -> Result<Annotation> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rttm_str(&text)
}

/// Parses `SPEAKER` rows; `SPKR-INFO` rows, blank lines and `#` comments
/// are skipped.
pub fn parse_rttm_str(text: &str) -> Result<Annotation> {
    let mut segments = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("SPKR-INFO") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 10 {
            return Err(Error::parse(line, format!("expected 10 fields, found {}", fields.len())));
        }
        if fields[0] != "SPEAKER" {
            return Err(Error::parse(line, format!("field 1: unsupported row type `{}`", fields[0])));
        }
        let onset: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(line, format!("field 4: bad onset `{}`", fields[3])))?;
        let dur: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(line, format!("field 5: bad duration `{}`", fields[4])))?;
        if !onset.is_finite() || onset < 0.0 {
            return Err(Error::parse(line, format!("field 4: onset must be non-negative, got `{}`", fields[3])));
        }
        if !dur.is_finite() || dur <= 0.0 {
            return Err(Error::parse(line, format!("field 5: duration must be positive, got `{}`", fields[4])));
        }
        segments.push(Segment::new(onset, onset + dur, fields[7]));
    }
    Ok(Annotation::new(segments))
}

pub fn serialize_rttm(ann: &Annotation, file_id: &str) -> String {
    let mut segments = ann.segments.clone();
    sort_segments(&mut segments);
    let mut out = String::new();
    for s in &segments {
        writeln!(
            out,
            "SPEAKER {file_id} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            s.start,
            s.end - s.start,
            s.speaker
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn write_rttm(path: &Path, ann: &Annotation, file_id: &str) -> Result<()> {
    super::write_atomic(path, serialize_rttm(ann, file_id).as_bytes())
}

pub fn read_vad(path: &Path) -> Result<Timeline> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_vad_str(&text)
}

/// Oracle VAD as RTTM rows (speaker ignored) or `start end` pairs.
pub fn read_vad_str(text: &str) -> Result<Timeline> {
    let is_rttm = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with("SPEAKER") || l.starts_with("SPKR-INFO"));
    if is_rttm {
        return Ok(parse_rttm_str(text)?.support());
    }
    let mut regions = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(line, format!("expected `start end`, found {} fields", fields.len())));
        }
        let start: f64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(line, format!("field 1: bad start `{}`", fields[0])))?;
        let end: f64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(line, format!("field 2: bad end `{}`", fields[1])))?;
        if !(start >= 0.0 && end > start) {
            return Err(Error::parse(line, format!("invalid region [{start}, {end})")));
        }
        regions.push(Region::new(start, end));
    }
    Ok(Timeline::from_regions(regions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_is_empty_annotation() {
        assert!(parse_rttm_str("").unwrap().is_empty());
    }

    #[test]
    fn skips_speaker_info() {
        let text = "SPKR-INFO f 1 <NA> <NA> <NA> unknown a <NA> <NA>\nSPEAKER f 1 0.500 1.250 <NA> <NA> a <NA> <NA>\n";
        let ann = parse_rttm_str(text).unwrap();
        assert_eq!(ann.segments, vec![Segment::new(0.5, 1.75, "a")]);
    }

    #[test]
    fn rejects_non_positive_duration() {
        let err = parse_rttm_str("SPEAKER f 1 1.000 0.000 <NA> <NA> a <NA> <NA>\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("field 5"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_rttm_str("SPEAKER f 1 1.0\n").is_err());
    }

    #[test]
    fn serializes_sorted() {
        let ann = Annotation::new(vec![Segment::new(2.0, 3.0, "b"), Segment::new(0.0, 1.5, "a"), Segment::new(2.0, 2.5, "a")]);
        let text = serialize_rttm(&ann, "mtg");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "SPEAKER mtg 1 0.000 1.500 <NA> <NA> a <NA> <NA>");
        assert_eq!(lines[1], "SPEAKER mtg 1 2.000 0.500 <NA> <NA> a <NA> <NA>");
        assert_eq!(lines[2], "SPEAKER mtg 1 2.000 1.000 <NA> <NA> b <NA> <NA>");
    }

    #[test]
    fn vad_two_column_and_rttm() {
        let tl = read_vad_str("0.0 1.5\n2 3\n").unwrap();
        assert_eq!(tl.regions().len(), 2);
        let tl = read_vad_str("SPEAKER f 1 0.000 2.000 <NA> <NA> a <NA> <NA>\nSPEAKER f 1 1.000 2.000 <NA> <NA> b <NA> <NA>\n").unwrap();
        assert_eq!(tl.regions(), &[Region::new(0.0, 3.0)]);
        assert!(read_vad_str("1 0.5\n").is_err());
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(rows in proptest::collection::vec((0u32..100_000, 1u32..20_000, 0usize..4), 0..20)) {
            let segments: Vec<Segment> = rows
                .iter()
                .map(|&(on, dur, spk)| {
                    let start = on as f64 / 1000.0;
                    Segment::new(start, start + dur as f64 / 1000.0, format!("spk{spk}"))
                })
                .collect();
            let text = serialize_rttm(&Annotation::new(segments), "f");
            let parsed = parse_rttm_str(&text).unwrap();
            prop_assert_eq!(serialize_rttm(&parsed, "f"), text);
        }
    }
}
