//! Far-field meeting simulator for a circular array.
//!
//! Sources are voice-like harmonic stacks or band-limited noise, placed at
//! fixed azimuths in free field and delayed onto every microphone with
//! windowed-sinc fractional delays. Diffuse noise is a sum of plane waves
//! from random directions on the sphere. Every rendering comes with its
//! ground-truth annotation and 10 ms overlap labels.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::array::ArrayGeometry;
use crate::audio::MultichannelAudio;
use crate::dmsnet::{DmsNetConfig, LabeledChunk, OverlapLabels};
use crate::error::{Error, Result};
use crate::io::ConfigFile;
use crate::timeline::{frame_count, Annotation, Region, Segment, Timeline, FRAME_SECONDS};

/// Speakers closer than `2π / MIN_DIRECTION_COUNT` collide.
pub const MIN_DIRECTION_COUNT: usize = 36;
pub const FRACTIONAL_DELAY_TAPS: usize = 63;
pub const NOISE_PLANE_WAVES: usize = 64;
pub const HARMONICS: usize = 8;
pub const VIBRATO_HZ: f64 = 6.0;
pub const ENVELOPE_HZ: f64 = 4.0;
const VIBRATO_DEPTH: f64 = 0.02;
const ENVELOPE_DEPTH: f64 = 0.3;
const SOURCE_RMS: f64 = 0.1;
const RAMP_S: f64 = 0.005;
/// Noise level when there is no speech to measure an SNR against.
const SILENT_NOISE_RMS: f64 = 0.01;
const PEAK_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKind {
    Harmonic { f0: f64 },
    BandNoise { low_hz: f64, high_hz: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSpec {
    pub id: String,
    /// Azimuth in radians.
    pub direction: f64,
    pub kind: SourceKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub speaker: String,
    pub start: f64,
    pub end: f64,
}

/// A single specular image per source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    pub direction_offset: f64,
    pub delay_s: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeetingScript {
    pub speakers: Vec<SpeakerSpec>,
    pub turns: Vec<Turn>,
    /// Speech-to-diffuse-noise ratio; `+∞` renders no noise.
    pub snr_db: f64,
    pub seed: u64,
    pub reflection: Option<Reflection>,
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub audio: MultichannelAudio,
    pub annotation: Annotation,
    pub labels: OverlapLabels,
}

/// Speech image and scaled noise before summation.
#[derive(Debug, Clone)]
pub struct RenderedParts {
    pub speech: MultichannelAudio,
    pub noise: MultichannelAudio,
    pub annotation: Annotation,
    pub labels: OverlapLabels,
}

fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

impl MeetingScript {
    pub fn validate(&self, duration: f64) -> Result<()> {
        let min_sep = 2.0 * PI / MIN_DIRECTION_COUNT as f64;
        for (i, a) in self.speakers.iter().enumerate() {
            if !a.direction.is_finite() {
                return Err(Error::InvalidArgument(format!("speaker {} has no direction", a.id)));
            }
            match a.kind {
                SourceKind::Harmonic { f0 } if !(f0 > 0.0) => {
                    return Err(Error::InvalidArgument(format!("speaker {}: f0 must be positive", a.id)))
                }
                SourceKind::BandNoise { low_hz, high_hz } if !(low_hz >= 0.0 && high_hz > low_hz) => {
                    return Err(Error::InvalidArgument(format!("speaker {}: empty noise band", a.id)))
                }
                _ => {}
            }
            for b in &self.speakers[i + 1..] {
                if a.id == b.id {
                    return Err(Error::InvalidArgument(format!("duplicate speaker {}", a.id)));
                }
                if angle_between(a.direction, b.direction) < min_sep {
                    return Err(Error::DirectionCollision(a.id.clone(), b.id.clone()));
                }
            }
        }
        for t in &self.turns {
            if !self.speakers.iter().any(|s| s.id == t.speaker) {
                return Err(Error::InvalidArgument(format!("turn for unknown speaker {}", t.speaker)));
            }
            if !(t.start >= 0.0 && t.end > t.start && t.end <= duration + 1e-9) {
                return Err(Error::InvalidArgument(format!(
                    "turn [{}, {}] of {} is outside [0, {duration}]",
                    t.start, t.end, t.speaker
                )));
            }
        }
        Ok(())
    }

    pub fn annotation(&self) -> Annotation {
        Annotation::new(
            self.turns
                .iter()
                .map(|t| Segment::new(t.start, t.end, t.speaker.clone()))
                .collect(),
        )
        .normalized()
    }

    /// Script text: a `[meeting]` section with `duration`, `snr_db`, `seed`,
    /// repeated `speaker = <id> <azimuth rad> harmonic <f0>` or
    /// `speaker = <id> <azimuth rad> noise <low> <high>` and repeated
    /// `turn = <id> <start> <end>` lines. Returns the script and duration.
    pub fn parse(text: &str) -> Result<(MeetingScript, f64)> {
        let cfg: ConfigFile = text.parse()?;
        let sec = "meeting";
        let duration: f64 = cfg
            .parse_value(sec, "duration")?
            .ok_or_else(|| Error::parse(0, "[meeting] duration is required"))?;
        let snr_db = cfg.value_or(sec, "snr_db", 20.0)?;
        let seed = cfg.value_or(sec, "seed", 0u64)?;
        let num = |line: usize, field: &str, tok: Option<&str>| -> Result<f64> {
            tok.ok_or_else(|| Error::parse(line, format!("missing {field}")))?
                .parse::<f64>()
                .map_err(|_| Error::parse(line, format!("{field} is not a number")))
        };
        let mut speakers = Vec::new();
        for e in cfg.all(sec, "speaker") {
            let mut it = e.value.split_whitespace();
            let id = it.next().ok_or_else(|| Error::parse(e.line, "missing speaker id"))?.to_string();
            let direction = num(e.line, "azimuth", it.next())?;
            let kind = match it.next() {
                Some("harmonic") => SourceKind::Harmonic {
                    f0: num(e.line, "f0", it.next())?,
                },
                Some("noise") => SourceKind::BandNoise {
                    low_hz: num(e.line, "low", it.next())?,
                    high_hz: num(e.line, "high", it.next())?,
                },
                other => {
                    return Err(Error::parse(
                        e.line,
                        format!("source kind must be harmonic or noise, got {other:?}"),
                    ))
                }
            };
            speakers.push(SpeakerSpec { id, direction, kind });
        }
        let mut turns = Vec::new();
        for e in cfg.all(sec, "turn") {
            let mut it = e.value.split_whitespace();
            let speaker = it.next().ok_or_else(|| Error::parse(e.line, "missing speaker id"))?.to_string();
            let start = num(e.line, "start", it.next())?;
            let end = num(e.line, "end", it.next())?;
            turns.push(Turn { speaker, start, end });
        }
        let reflection = match cfg.parse_value::<f64>(sec, "reflection_gain")? {
            Some(gain) => Some(Reflection {
                gain,
                delay_s: cfg.value_or(sec, "reflection_delay", 0.004)?,
                direction_offset: cfg.value_or(sec, "reflection_offset", PI / 2.0)?,
            }),
            None => None,
        };
        let script = MeetingScript {
            speakers,
            turns,
            snr_db,
            seed,
            reflection,
        };
        script.validate(duration)?;
        Ok((script, duration))
    }

    pub fn load(path: &Path) -> Result<(MeetingScript, f64)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self, duration: f64) -> String {
        let mut out = format!("[meeting]\nduration = {duration}\nsnr_db = {}\nseed = {}\n", self.snr_db, self.seed);
        if let Some(r) = self.reflection {
            out.push_str(&format!(
                "reflection_gain = {}\nreflection_delay = {}\nreflection_offset = {}\n",
                r.gain, r.delay_s, r.direction_offset
            ));
        }
        for s in &self.speakers {
            match s.kind {
                SourceKind::Harmonic { f0 } => out.push_str(&format!("speaker = {} {} harmonic {f0}\n", s.id, s.direction)),
                SourceKind::BandNoise { low_hz, high_hz } => {
                    out.push_str(&format!("speaker = {} {} noise {low_hz} {high_hz}\n", s.id, s.direction))
                }
            }
        }
        for t in &self.turns {
            out.push_str(&format!("turn = {} {} {}\n", t.speaker, t.start, t.end));
        }
        out
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples `[a, b)` covered by a region.
fn sample_span(r: &Region, fs: f64, n: usize) -> (usize, usize) {
    let a = ((r.start * fs).round() as usize).min(n);
    let b = ((r.end * fs).round() as usize).min(n);
    (a, b)
}

/// Mono source gated to the speaker's turns, normalized to a fixed RMS
/// over its active samples.
fn source_signal(spec: &SpeakerSpec, active: &Timeline, fs: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut s = vec![0.0; n];
    match spec.kind {
        SourceKind::Harmonic { f0 } => {
            let vib_phase = rng.gen_range(0.0..2.0 * PI);
            let env_phase = rng.gen_range(0.0..2.0 * PI);
            let phases: Vec<f64> = (0..HARMONICS).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            let nyq = 0.45 * fs;
            for r in active.regions() {
                let (a, b) = sample_span(r, fs, n);
                for (t, v) in s.iter_mut().enumerate().take(b).skip(a) {
                    let time = t as f64 / fs;
                    // closed-form integral of f0·(1 + β sin(2π f_v t + φ))
                    let phase = 2.0 * PI * f0 * time
                        - f0 * VIBRATO_DEPTH / VIBRATO_HZ * (2.0 * PI * VIBRATO_HZ * time + vib_phase).cos();
                    let mut acc = 0.0;
                    for (h, ph) in phases.iter().enumerate() {
                        let k = (h + 1) as f64;
                        if k * f0 * (1.0 + VIBRATO_DEPTH) >= nyq {
                            break;
                        }
                        acc += (k * phase + ph).sin() / k;
                    }
                    let env = 1.0 - ENVELOPE_DEPTH + ENVELOPE_DEPTH * (2.0 * PI * ENVELOPE_HZ * time + env_phase).sin();
                    *v = acc * env;
                }
            }
        }
        SourceKind::BandNoise { low_hz, high_hz } => {
            let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.sample(StandardNormal), 0.0)).collect();
            let mut planner = FftPlanner::new();
            planner.plan_fft_forward(n).process(&mut buf);
            for (k, b) in buf.iter_mut().enumerate() {
                let f = k.min(n - k) as f64 * fs / n as f64;
                if f < low_hz || f > high_hz {
                    *b = Complex64::new(0.0, 0.0);
                }
            }
            planner.plan_fft_inverse(n).process(&mut buf);
            for r in active.regions() {
                let (a, b) = sample_span(r, fs, n);
                for t in a..b {
                    s[t] = buf[t].re;
                }
            }
        }
    }
    let ramp = (RAMP_S * fs).round() as usize;
    let mut energy = 0.0;
    let mut count = 0usize;
    for r in active.regions() {
        let (a, b) = sample_span(r, fs, n);
        let len = b - a;
        for i in 0..len {
            let edge = i.min(len - 1 - i);
            if edge < ramp {
                s[a + i] *= 0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos();
            }
            energy += s[a + i] * s[a + i];
        }
        count += len;
    }
    if energy > 0.0 {
        let g = SOURCE_RMS / (energy / count as f64).sqrt();
        s.iter_mut().for_each(|v| *v *= g);
    }
    s
}

fn blackman(k: usize, len: usize) -> f64 {
    let x = 2.0 * PI * k as f64 / (len - 1) as f64;
    0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
}

/// `dst[t] += gain · src(t − delay)` with a windowed-sinc interpolator,
/// evaluated only near the spans where `src` is nonzero.
fn add_delayed(dst: &mut [f64], src: &[f64], delay: f64, gain: f64, spans: &[(usize, usize)]) {
    let whole = delay.floor();
    let frac = delay - whole;
    let shift = whole as i64;
    let half = (FRACTIONAL_DELAY_TAPS / 2) as i64;
    let taps: Vec<f64> = (0..FRACTIONAL_DELAY_TAPS)
        .map(|k| {
            let x = k as f64 - half as f64 - frac;
            let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
            gain * sinc * blackman(k, FRACTIONAL_DELAY_TAPS)
        })
        .collect();
    let n = dst.len() as i64;
    for &(a, b) in spans {
        let lo = (a as i64 + shift - half).max(0);
        let hi = (b as i64 + shift + half + 1).min(n);
        for t in lo..hi {
            let mut acc = 0.0;
            for (k, &h) in taps.iter().enumerate() {
                let m = t - shift + half - k as i64;
                if m >= a as i64 && m < b as i64 {
                    acc += h * src[m as usize];
                }
            }
            dst[t as usize] += acc;
        }
    }
}

/// Unit-power-per-wave diffuse field, one signal per microphone.
fn diffuse_noise(geom: &ArrayGeometry, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let fs = geom.sample_rate();
    let c = geom.mic_count();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut spectra = vec![vec![Complex64::new(0.0, 0.0); n]; c];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..NOISE_PLANE_WAVES {
        let azimuth = rng.gen_range(0.0..2.0 * PI);
        let elevation = rng.gen_range(-1.0f64..1.0).asin();
        for b in buf.iter_mut() {
            *b = Complex64::new(rng.sample(StandardNormal), 0.0);
        }
        fft.process(&mut buf);
        for (m, spec) in spectra.iter_mut().enumerate() {
            let tau = geom.delay_3d(m, azimuth, elevation);
            let phase = |k: usize| {
                let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                Complex64::from_polar(1.0, -2.0 * PI * signed * fs / n as f64 * tau)
            };
            let step = phase(1);
            let mut w = Complex64::new(1.0, 0.0);
            for (k, (x, s)) in spec.iter_mut().zip(&buf).enumerate() {
                // rotate by one bin, re-anchoring often enough to bound drift
                w = if k % 1024 == 0 || k == n / 2 + 1 { phase(k) } else { w * step };
                *x += s * w;
            }
        }
    }
    let norm = 1.0 / (n as f64 * (NOISE_PLANE_WAVES as f64).sqrt());
    spectra
        .into_iter()
        .map(|mut spec| {
            ifft.process(&mut spec);
            spec.iter().map(|v| v.re * norm).collect()
        })
        .collect()
}

fn labels_of(annotation: &Annotation, duration: f64) -> OverlapLabels {
    let n_frames = frame_count(duration, FRAME_SECONDS);
    OverlapLabels {
        frames: annotation.frame_counts(n_frames, FRAME_SECONDS).iter().map(|&k| (k >= 2) as u8).collect(),
        frame_rate: 1.0 / FRAME_SECONDS,
    }
}

fn mean_power(chans: &[Vec<f64>], spans: &[(usize, usize)]) -> f64 {
    let mut e = 0.0;
    let mut count = 0usize;
    for ch in chans {
        for &(a, b) in spans {
            e += ch[a..b].iter().map(|v| v * v).sum::<f64>();
            count += b - a;
        }
    }
    if count == 0 {
        0.0
    } else {
        e / count as f64
    }
}

pub fn render_parts(script: &MeetingScript, geom: &ArrayGeometry, duration: f64) -> Result<RenderedParts> {
    script.validate(duration)?;
    if !(duration > 0.0) {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }
    let fs = geom.sample_rate();
    let n = (duration * fs).round() as usize;
    let c = geom.mic_count();
    let annotation = script.annotation();
    let by_speaker = annotation.by_speaker();

    let images: Vec<Vec<Vec<f64>>> = script
        .speakers
        .par_iter()
        .enumerate()
        .map(|(i, spk)| {
            let active = by_speaker.get(&spk.id).cloned().unwrap_or_default();
            let mut rng = stream_rng(script.seed, 1 + i as u64);
            let s = source_signal(spk, &active, fs, n, &mut rng);
            let spans: Vec<(usize, usize)> = active.regions().iter().map(|r| sample_span(r, fs, n)).collect();
            (0..c)
                .map(|m| {
                    let mut out = vec![0.0; n];
                    add_delayed(&mut out, &s, geom.delay(m, spk.direction) * fs, 1.0, &spans);
                    if let Some(r) = script.reflection {
                        let d = (r.delay_s + geom.delay(m, spk.direction + r.direction_offset)) * fs;
                        add_delayed(&mut out, &s, d, r.gain, &spans);
                    }
                    out
                })
                .collect()
        })
        .collect();
    let mut speech = vec![vec![0.0; n]; c];
    for img in &images {
        for (dst, src) in speech.iter_mut().zip(img) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }

    let speech_spans: Vec<(usize, usize)> = annotation.support().regions().iter().map(|r| sample_span(r, fs, n)).collect();
    let mut noise = if script.snr_db.is_infinite() && script.snr_db > 0.0 {
        vec![vec![0.0; n]; c]
    } else {
        let mut raw = diffuse_noise(geom, n, &mut stream_rng(script.seed, 0));
        let p_noise = mean_power(&raw, &[(0, n)]);
        let p_speech = mean_power(&speech, &speech_spans);
        let target = if p_speech > 0.0 {
            p_speech / 10f64.powf(script.snr_db / 10.0)
        } else {
            SILENT_NOISE_RMS * SILENT_NOISE_RMS
        };
        let g = (target / p_noise).sqrt();
        raw.iter_mut().flatten().for_each(|v| *v *= g);
        raw
    };

    let peak = speech
        .iter()
        .zip(&noise)
        .flat_map(|(s, w)| s.iter().zip(w).map(|(a, b)| (a + b).abs()))
        .fold(0.0, f64::max);
    if peak > PEAK_LIMIT {
        let g = PEAK_LIMIT / peak;
        speech.iter_mut().chain(noise.iter_mut()).flatten().for_each(|v| *v *= g);
    }
    Ok(RenderedParts {
        speech: MultichannelAudio::new(speech, fs)?,
        noise: MultichannelAudio::new(noise, fs)?,
        labels: labels_of(&annotation, duration),
        annotation,
    })
}

pub fn render(script: &MeetingScript, geom: &ArrayGeometry, duration: f64) -> Result<Rendered> {
    let parts = render_parts(script, geom, duration)?;
    let data = parts
        .speech
        .data()
        .iter()
        .zip(parts.noise.data())
        .map(|(s, w)| s.iter().zip(w).map(|(a, b)| a + b).collect())
        .collect();
    Ok(Rendered {
        audio: MultichannelAudio::new(data, geom.sample_rate())?,
        annotation: parts.annotation,
        labels: parts.labels,
    })
}

/// Measured speech-to-noise ratio over speech regions.
pub fn measured_snr_db(parts: &RenderedParts) -> f64 {
    let fs = parts.speech.sample_rate();
    let n = parts.speech.len();
    let spans: Vec<(usize, usize)> = parts.annotation.support().regions().iter().map(|r| sample_span(r, fs, n)).collect();
    10.0 * (mean_power(parts.speech.data(), &spans) / mean_power(parts.noise.data(), &spans)).log10()
}

/// Parameters of a random meeting.
#[derive(Debug, Clone, PartialEq)]
pub struct MeetingSpec {
    pub speakers: usize,
    pub duration: f64,
    /// Accepted range of overlap time over speech time.
    pub overlap_ratio: (f64, f64),
    pub overlap_len: (f64, f64),
    pub turn_len: (f64, f64),
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for MeetingSpec {
    fn default() -> Self {
        Self {
            speakers: 2,
            duration: 30.0,
            overlap_ratio: (0.2, 0.4),
            overlap_len: (0.5, 1.5),
            turn_len: (2.5, 5.0),
            snr_db: 20.0,
            seed: 0,
        }
    }
}

fn sample_spread(rng: &mut ChaCha8Rng, count: usize, lo: f64, hi: f64, min_gap: f64, circular: bool) -> Vec<f64> {
    loop {
        let vals: Vec<f64> = (0..count).map(|_| rng.gen_range(lo..hi)).collect();
        let ok = vals.iter().enumerate().all(|(i, a)| {
            vals[i + 1..].iter().all(|b| {
                let d = if circular { angle_between(*a, *b) } else { (a - b).abs() };
                d >= min_gap
            })
        });
        if ok {
            return vals;
        }
    }
}

/// Random turn-taking meeting with harmonic voices whose overlap ratio
/// falls in `spec.overlap_ratio`. Overlaps involve exactly two speakers.
pub fn random_script(spec: &MeetingSpec) -> Result<MeetingScript> {
    if spec.speakers == 0 || spec.speakers > 8 {
        return Err(Error::InvalidArgument(format!("speaker count {} not in 1..=8", spec.speakers)));
    }
    let (lo_ratio, hi_ratio) = spec.overlap_ratio;
    let mean_turn = 0.5 * (spec.turn_len.0 + spec.turn_len.1);
    let mean_ov = 0.5 * (spec.overlap_len.0 + spec.overlap_len.1);
    let target = 0.5 * (lo_ratio + hi_ratio);
    let p_overlap = (target * mean_turn / mean_ov.max(1e-9) * 1.1).clamp(0.0, 1.0);
    let mut rng = stream_rng(spec.seed, 1000);
    let ids: Vec<String> = (0..spec.speakers).map(|i| format!("S{}", i + 1)).collect();

    for _attempt in 0..500 {
        let min_sep = (PI / 3.0).min(PI / spec.speakers as f64);
        let directions = sample_spread(&mut rng, spec.speakers, 0.0, 2.0 * PI, min_sep, true);
        let f0s = sample_spread(&mut rng, spec.speakers, 110.0, 280.0, 120.0 / spec.speakers as f64, false);
        let speakers: Vec<SpeakerSpec> = ids
            .iter()
            .zip(directions.iter().zip(&f0s))
            .map(|(id, (&direction, &f0))| SpeakerSpec {
                id: id.clone(),
                direction,
                kind: SourceKind::Harmonic { f0 },
            })
            .collect();

        let mut order: Vec<usize> = (0..spec.speakers).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut turns: Vec<Turn> = Vec::new();
        let mut start = rng.gen_range(0.1..0.5);
        let mut prior_end = 0.0f64;
        let mut prev: Option<usize> = None;
        let end_limit = spec.duration - 0.1;
        while start < end_limit - 1.0 {
            let who = if turns.len() < order.len() {
                order[turns.len()]
            } else {
                loop {
                    let k = rng.gen_range(0..spec.speakers);
                    if Some(k) != prev || spec.speakers == 1 {
                        break k;
                    }
                }
            };
            let end = (start + rng.gen_range(spec.turn_len.0..spec.turn_len.1)).min(end_limit);
            turns.push(Turn {
                speaker: ids[who].clone(),
                start,
                end,
            });
            let mut next = if spec.speakers > 1 && rng.gen_bool(p_overlap) {
                end - rng.gen_range(spec.overlap_len.0..spec.overlap_len.1)
            } else {
                end + rng.gen_range(0.1..0.6)
            };
            // no triple overlap, and the current turn keeps a solo part
            next = next.max(prior_end + 0.05).max(start + 0.3);
            prior_end = end;
            prev = Some(who);
            start = next;
        }
        let script = MeetingScript {
            speakers,
            turns,
            snr_db: spec.snr_db,
            seed: spec.seed,
            reflection: None,
        };
        let ann = script.annotation();
        let speech = ann.support().duration();
        let ratio = if speech > 0.0 { ann.overlap().duration() / speech } else { 0.0 };
        let all_present = ann.speakers().len() == spec.speakers;
        let in_range = (spec.speakers == 1 || (ratio >= lo_ratio && ratio <= hi_ratio)) && all_present;
        if in_range {
            script.validate(spec.duration)?;
            return Ok(script);
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not draw a meeting with overlap ratio in [{lo_ratio}, {hi_ratio}]"
    )))
}

/// Overlap labels at the model frame rate for a chunk starting at
/// `chunk_start` seconds: majority vote of the 10 ms labels inside each
/// model frame (ties count as overlap).
pub fn chunk_labels(labels: &OverlapLabels, chunk_start: f64, config: &DmsNetConfig) -> OverlapLabels {
    let hop_s = config.frame_hop() as f64 / config.sample_rate;
    let n = labels.frames.len();
    let at = |i: i64| if i >= 0 && (i as usize) < n { labels.frames[i as usize] } else { 0 };
    let frames = (0..config.frames())
        .map(|t| {
            let center = chunk_start + config.frame_center(t);
            let (a, b) = (center - hop_s / 2.0, center + hop_s / 2.0);
            // 10 ms frames whose centers fall inside [a, b)
            let first = ((a / FRAME_SECONDS) - 0.5).ceil() as i64;
            let last = ((b / FRAME_SECONDS) - 0.5).ceil() as i64;
            if last <= first {
                return at((center / FRAME_SECONDS).floor() as i64);
            }
            let ones: usize = (first..last).map(|i| at(i) as usize).sum();
            let total = (last - first) as usize;
            (2 * ones >= total) as u8
        })
        .collect();
    OverlapLabels {
        frames,
        frame_rate: config.frame_rate(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsdDatasetConfig {
    pub model: DmsNetConfig,
    pub meeting_duration: f64,
    pub speakers: (usize, usize),
    pub snr_db: (f64, f64),
    pub hop_s: f64,
    /// Minimum share of chunks that contain overlap.
    pub min_positive: f64,
    pub seed: u64,
}

impl Default for OsdDatasetConfig {
    fn default() -> Self {
        Self {
            model: DmsNetConfig::desk(),
            meeting_duration: 20.0,
            speakers: (2, 3),
            snr_db: (10.0, 25.0),
            hop_s: 1.0,
            min_positive: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassBalance {
    pub chunks: usize,
    pub positive_chunks: usize,
    pub positive_frames: usize,
    pub frames: usize,
}

impl ClassBalance {
    pub fn of(chunks: &[LabeledChunk]) -> Self {
        let positive_chunks = chunks.iter().filter(|c| c.labels.frames.contains(&1)).count();
        let positive_frames = chunks.iter().map(|c| c.labels.frames.iter().filter(|&&v| v == 1).count()).sum();
        let frames = chunks.iter().map(|c| c.labels.frames.len()).sum();
        Self {
            chunks: chunks.len(),
            positive_chunks,
            positive_frames,
            frames,
        }
    }

    pub fn positive_frame_fraction(&self) -> f64 {
        self.positive_frames as f64 / self.frames.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct OsdDataset {
    pub chunks: Vec<LabeledChunk>,
    pub balance: ClassBalance,
}

/// The random meeting behind dataset meeting `index`.
pub fn dataset_meeting(config: &OsdDatasetConfig, index: usize) -> Result<MeetingScript> {
    let mut rng = stream_rng(config.seed, 5000 + index as u64);
    let speakers = rng.gen_range(config.speakers.0..=config.speakers.1);
    let snr_db = rng.gen_range(config.snr_db.0..=config.snr_db.1);
    random_script(&MeetingSpec {
        speakers,
        duration: config.meeting_duration,
        overlap_ratio: (0.15, 0.45),
        overlap_len: (0.5, 1.5),
        turn_len: (2.0, 4.0),
        snr_db,
        seed: config.seed.wrapping_mul(1_000_003).wrapping_add(index as u64),
    })
}

/// Renders `n_meetings` random meetings and slices them into labelled
/// chunks at `hop_s`. Chunks without overlap are dropped from the end while
/// fewer than `min_positive` of the chunks contain overlap.
pub fn make_osd_dataset(n_meetings: usize, geom: &ArrayGeometry, config: &OsdDatasetConfig) -> Result<OsdDataset> {
    if n_meetings == 0 {
        return Err(Error::InvalidArgument("need at least one meeting".into()));
    }
    if geom.mic_count() != config.model.channels || geom.sample_rate() != config.model.sample_rate {
        return Err(Error::ChannelMismatch {
            expected: config.model.channels,
            actual: geom.mic_count(),
        });
    }
    let per_meeting = (0..n_meetings)
        .into_par_iter()
        .map(|i| {
            let script = dataset_meeting(config, i)?;
            let r = render(&script, geom, config.meeting_duration)?;
            Ok(slice_chunks(&r, config))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut chunks: Vec<LabeledChunk> = per_meeting.into_iter().flatten().collect();

    let positive = |c: &LabeledChunk| c.labels.frames.contains(&1);
    let pos = chunks.iter().filter(|c| positive(c)).count();
    let mut neg = chunks.len() - pos;
    while neg > 0 && (pos as f64) < config.min_positive * (pos + neg) as f64 {
        let idx = chunks.iter().rposition(|c| !positive(c)).expect("a negative chunk");
        chunks.remove(idx);
        neg -= 1;
    }
    let balance = ClassBalance::of(&chunks);
    Ok(OsdDataset { chunks, balance })
}

/// Chunks of one rendered meeting.
pub fn slice_chunks(r: &Rendered, config: &OsdDatasetConfig) -> Vec<LabeledChunk> {
    let fs = config.model.sample_rate;
    let l = config.model.chunk_samples();
    let hop = (config.hop_s * fs).round() as usize;
    let mut out = Vec::new();
    let mut s = 0usize;
    while s + l <= r.audio.len() {
        out.push(LabeledChunk {
            audio: r.audio.slice_padded(s, l),
            labels: chunk_labels(&r.labels, s as f64 / fs, &config.model),
        });
        s += hop.max(1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::extract_svectors;
    use crate::sdb::build_bank;

    fn two_speaker_script() -> MeetingScript {
        MeetingScript {
            speakers: vec![
                SpeakerSpec {
                    id: "A".into(),
                    direction: 0.3,
                    kind: SourceKind::Harmonic { f0: 130.0 },
                },
                SpeakerSpec {
                    id: "B".into(),
                    direction: 2.5,
                    kind: SourceKind::BandNoise {
                        low_hz: 300.0,
                        high_hz: 3000.0,
                    },
                },
            ],
            turns: vec![
                Turn {
                    speaker: "A".into(),
                    start: 0.5,
                    end: 5.0,
                },
                Turn {
                    speaker: "B".into(),
                    start: 3.0,
                    end: 7.5,
                },
            ],
            snr_db: 15.0,
            seed: 3,
            reflection: None,
        }
    }

    #[test]
    fn overlap_labels_follow_the_script() {
        let geom = ArrayGeometry::default_circular();
        let r = render(&two_speaker_script(), &geom, 8.0).unwrap();
        assert_eq!(r.labels.frames.len(), 800);
        for (i, &y) in r.labels.frames.iter().enumerate() {
            assert_eq!(y == 1, (300..500).contains(&i), "frame {i}");
        }
        assert_eq!(r.audio.channels(), 8);
        assert!(r.audio.peak() < 1.0);
    }

    #[test]
    fn rendering_is_deterministic() {
        let geom = ArrayGeometry::default_circular();
        let a = render(&two_speaker_script(), &geom, 8.0).unwrap();
        let b = render(&two_speaker_script(), &geom, 8.0).unwrap();
        assert_eq!(a.audio, b.audio);
        let mut other = two_speaker_script();
        other.seed = 4;
        assert_ne!(render(&other, &geom, 8.0).unwrap().audio, a.audio);
    }

    #[test]
    fn snr_is_within_one_db() {
        let geom = ArrayGeometry::default_circular();
        for snr in [0.0, 10.0, 20.0] {
            let mut s = two_speaker_script();
            s.snr_db = snr;
            let parts = render_parts(&s, &geom, 8.0).unwrap();
            let measured = measured_snr_db(&parts);
            assert!((measured - snr).abs() <= 1.0, "{snr} dB requested, {measured} measured");
        }
    }

    #[test]
    fn direction_collision_is_rejected() {
        let mut s = two_speaker_script();
        s.speakers[1].direction = 0.3 + 0.05;
        assert!(matches!(render(&s, &ArrayGeometry::default_circular(), 8.0), Err(Error::DirectionCollision(_, _))));
        s.speakers[1].direction = 0.3 + 2.0 * PI - 0.01;
        assert!(matches!(s.validate(8.0), Err(Error::DirectionCollision(_, _))));
    }

    #[test]
    fn turns_must_fit() {
        let s = two_speaker_script();
        assert!(s.validate(7.0).is_err());
        assert!(s.validate(7.5).is_ok());
    }

    #[test]
    fn pure_noise_gives_flat_svectors() {
        let geom = ArrayGeometry::default_circular();
        let bank = build_bank(&geom, 120, 128, 1e-3).unwrap();
        let script = MeetingScript {
            speakers: vec![],
            turns: vec![],
            snr_db: 0.0,
            seed: 11,
            reflection: None,
        };
        let r = render(&script, &geom, 4.0).unwrap();
        for sv in extract_svectors(&bank, &r.audio, 1.0, 0.5).unwrap() {
            let max = sv.energies.iter().copied().fold(0.0, f64::max);
            assert!(max < 3.0 / 120.0, "max entry {max}");
        }
    }

    #[test]
    fn fractional_delay_matches_shifted_band_limited_signal() {
        let fs = 16000.0;
        let n = 4000;
        let f = 700.0;
        let src: Vec<f64> = (0..n).map(|t| (2.0 * PI * f * t as f64 / fs).sin()).collect();
        let mut dst = vec![0.0; n];
        add_delayed(&mut dst, &src, 2.37, 1.0, &[(0, n)]);
        for t in 200..3800 {
            let want = (2.0 * PI * f * (t as f64 - 2.37) / fs).sin();
            assert!((dst[t] - want).abs() < 1e-3, "t={t}");
        }
    }

    #[test]
    fn script_text_round_trip() {
        let mut s = two_speaker_script();
        s.reflection = Some(Reflection {
            direction_offset: 1.0,
            delay_s: 0.003,
            gain: 0.4,
        });
        let (back, duration) = MeetingScript::parse(&s.to_text(8.0)).unwrap();
        assert_eq!(duration, 8.0);
        assert_eq!(back, s);
        assert!(matches!(
            MeetingScript::parse("[meeting]\nduration = 5\nspeaker = A x harmonic 100\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn random_scripts_hit_the_overlap_range() {
        for seed in 0..6 {
            for speakers in 2..=4 {
                let spec = MeetingSpec {
                    speakers,
                    duration: 40.0,
                    seed,
                    ..MeetingSpec::default()
                };
                let s = random_script(&spec).unwrap();
                let ann = s.annotation();
                let ratio = ann.overlap().duration() / ann.support().duration();
                assert!((0.2..=0.4).contains(&ratio), "ratio {ratio}");
                assert_eq!(ann.speakers().len(), speakers);
                // never more than two at once
                let counts = ann.frame_counts(4000, 0.01);
                assert!(counts.iter().all(|&k| k <= 2));
                assert_eq!(random_script(&spec).unwrap(), s);
            }
        }
    }

    #[test]
    fn dataset_chunking_and_balance() {
        let model = DmsNetConfig {
            channels: 4,
            ..DmsNetConfig::desk()
        };
        let geom = ArrayGeometry::circular(4, 0.05, 16000.0, 343.0).unwrap();
        let config = OsdDatasetConfig {
            model: model.clone(),
            ..OsdDatasetConfig::default()
        };
        let ds = make_osd_dataset(1, &geom, &config).unwrap();
        assert_eq!(ds.chunks.len(), 19);
        assert_eq!(ds.balance, ClassBalance::of(&ds.chunks));
        let recount: usize = ds.chunks.iter().flat_map(|c| &c.labels.frames).filter(|&&v| v == 1).count();
        assert_eq!(recount, ds.balance.positive_frames);
        assert!(ds.balance.positive_chunks as f64 >= 0.3 * ds.balance.chunks as f64);
        for c in &ds.chunks {
            assert_eq!(c.labels.frames.len(), model.frames());
            assert_eq!(c.audio.len(), model.chunk_samples());
        }
    }

    #[test]
    fn chunk_labels_use_majority_vote() {
        let model = DmsNetConfig::desk();
        // hop is 160 samples = one 10 ms frame; frame centers sit 3.125 ms off the grid
        let mut frames = vec![0u8; 300];
        frames[100..150].iter_mut().for_each(|v| *v = 1);
        let labels = OverlapLabels { frames, frame_rate: 100.0 };
        let out = chunk_labels(&labels, 0.0, &model);
        for (t, &y) in out.frames.iter().enumerate() {
            let center = model.frame_center(t);
            let inside = (1.0..1.5).contains(&center);
            if (center - 1.0).abs() > 0.011 && (center - 1.5).abs() > 0.011 {
                assert_eq!(y == 1, inside, "frame {t} at {center}");
            }
        }
    }
}
