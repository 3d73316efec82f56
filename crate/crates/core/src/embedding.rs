//! Segment-level speaker embeddings.
//!
//! Real systems plug in a trained extractor through
//! [`load_embeddings`]; [`lightweight_embed`] is a deterministic stand-in
//! built from log-mel filter-bank statistics so that the whole pipeline
//! runs without a network.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::beam::SampleWindow;
use crate::error::{Error, Result};

pub const MEL_BINS: usize = 81;
pub const FRAME_LEN_S: f64 = 0.025;
pub const FRAME_SHIFT_S: f64 = 0.010;
pub const MEL_MAX_HZ: f64 = 8000.0;
pub const LOG_FLOOR: f64 = 1e-10;
pub const EMBEDDING_DIM: usize = 2 * MEL_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    External,
    Lightweight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEmbedding {
    pub vector: Vec<f64>,
    pub window_start: f64,
    pub window_len: f64,
    pub source: EmbeddingSource,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Log-mel filter-bank front end (HTK mel scale, triangular filters).
pub struct FilterBank {
    frame_len: usize,
    shift: usize,
    fft_len: usize,
    window: Vec<f64>,
    /// (first bin, weights) per filter
    filters: Vec<(usize, Vec<f64>)>,
    fft: Arc<dyn Fft<f64>>,
}

impl FilterBank {
    pub fn new(sample_rate: f64) -> Self {
        let frame_len = (FRAME_LEN_S * sample_rate).round() as usize;
        let shift = (FRAME_SHIFT_S * sample_rate).round() as usize;
        let fft_len = frame_len.next_power_of_two();
        let window = (0..frame_len)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos())
            .collect();
        let max_hz = MEL_MAX_HZ.min(sample_rate / 2.0);
        let mel_max = hz_to_mel(max_hz);
        let edges: Vec<f64> = (0..MEL_BINS + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (MEL_BINS + 1) as f64))
            .collect();
        let bin_hz = sample_rate / fft_len as f64;
        let filters = (0..MEL_BINS)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let first = (lo / bin_hz).floor() as usize;
                let last = ((hi / bin_hz).ceil() as usize).min(fft_len / 2);
                let weights = (first..=last)
                    .map(|b| {
                        let f = b as f64 * bin_hz;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        }
                    })
                    .collect();
                (first, weights)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        Self {
            frame_len,
            shift,
            fft_len,
            window,
            filters,
            fft,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// Log-mel frames (`frames × 81`).
    pub fn log_mel(&self, audio: &[f64]) -> Vec<[f64; MEL_BINS]> {
        if audio.len() < self.frame_len {
            return Vec::new();
        }
        let n_frames = 1 + (audio.len() - self.frame_len) / self.shift;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        let mut power = vec![0.0; self.fft_len / 2 + 1];
        (0..n_frames)
            .map(|f| {
                let frame = &audio[f * self.shift..f * self.shift + self.frame_len];
                buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
                for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
                    b.re = x * w;
                }
                self.fft.process(&mut buf);
                for (p, b) in power.iter_mut().zip(&buf) {
                    *p = b.norm_sqr();
                }
                let mut out = [0.0; MEL_BINS];
                for (o, (first, weights)) in out.iter_mut().zip(&self.filters) {
                    let e: f64 = weights.iter().zip(&power[*first..]).map(|(w, p)| w * p).sum();
                    *o = e.max(LOG_FLOOR).ln();
                }
                out
            })
            .collect()
    }
}

/// Per-bin mean and standard deviation of log-mel frames. The mean block
/// is centered across bins, which removes any input gain.
pub fn lightweight_embed(audio: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    embed_with(&FilterBank::new(sample_rate), audio)
}

fn embed_with(fbank: &FilterBank, audio: &[f64]) -> Result<Vec<f64>> {
    if audio.len() < fbank.frame_len() {
        return Err(Error::AudioTooShort {
            needed: fbank.frame_len(),
            actual: audio.len(),
        });
    }
    let frames = fbank.log_mel(audio);
    let n = frames.len() as f64;
    let mut mean = [0.0; MEL_BINS];
    for f in &frames {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n;
        }
    }
    let mut var = [0.0; MEL_BINS];
    for f in &frames {
        for ((s, v), m) in var.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let center = mean.iter().sum::<f64>() / MEL_BINS as f64;
    let mut out = Vec::with_capacity(EMBEDDING_DIM);
    out.extend(mean.iter().map(|m| m - center));
    out.extend(var.iter().map(|v| v.sqrt()));
    Ok(out)
}

/// Lightweight embeddings for each window of a mono signal.
pub fn embed_windows(audio: &[f64], sample_rate: f64, windows: &[SampleWindow], nominal_len: f64) -> Result<Vec<SegmentEmbedding>> {
    let fbank = FilterBank::new(sample_rate);
    windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let end = w.end.min(audio.len());
            embed_with(&fbank, &audio[w.start.min(end)..end])
                .map(|vector| SegmentEmbedding {
                    vector,
                    window_start: w.start as f64 / sample_rate,
                    window_len: nominal_len,
                    source: EmbeddingSource::Lightweight,
                })
                .map_err(|e| e.in_stage("embedding", i))
        })
        .collect()
}

pub fn load_embeddings(path: &Path) -> Result<Vec<SegmentEmbedding>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text)
}

/// One row per segment: `start end v_1 … v_D`.
pub fn parse_embeddings(text: &str) -> Result<Vec<SegmentEmbedding>> {
    let mut out = Vec::new();
    let mut dim = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let values = trimmed
            .split_whitespace()
            .enumerate()
            .map(|(i, tok)| {
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(line, format!("field {}: not a number `{tok}`", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() < 3 {
            return Err(Error::parse(line, "expected `start end v_1 … v_D`"));
        }
        let (start, end) = (values[0], values[1]);
        if !(end > start) {
            return Err(Error::parse(line, format!("segment end {end} not after start {start}")));
        }
        let d = values.len() - 2;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::DimensionMismatch { line, expected, actual: d });
            }
            _ => {}
        }
        out.push(SegmentEmbedding {
            vector: values[2..].to_vec(),
            window_start: start,
            window_len: end - start,
            source: EmbeddingSource::External,
        });
    }
    Ok(out)
}
