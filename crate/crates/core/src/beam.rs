//! Beamformer runtime and s-vector extraction.
//!
//! The bank is applied with overlap-save FFT convolution. Two look
//! directions share one inverse FFT: their outputs are real, so the
//! packed spectrum `Y_a + jY_b` transforms back to `y_a + j y_b`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::MultichannelAudio;
use crate::error::{Error, Result};
use crate::sdb::BeamformerBank;

pub const DEFAULT_WINDOW_LEN: f64 = 1.0;
pub const DEFAULT_WINDOW_SHIFT: f64 = 0.5;
/// Total window energy below which a window counts as silent.
pub const SILENCE_ENERGY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SVector {
    pub energies: Vec<f64>,
    pub window_start: f64,
    pub window_len: f64,
}

/// A window in samples: `[start, end)` of real audio, nominal length `len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleWindow {
    pub start: usize,
    pub end: usize,
}

impl SampleWindow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Tiles `[0, total)` with windows of `win` samples every `shift` samples.
/// A trailing partial window is kept when it covers audio past the last
/// full window and is at least half a window long.
pub fn window_grid(total: usize, win: usize, shift: usize) -> Vec<SampleWindow> {
    window_grid_in(0, total, win, shift)
}

/// [`window_grid`] over the span `[from, to)`; a span shorter than one
/// window yields a single window covering it.
pub fn window_grid_in(from: usize, to: usize, win: usize, shift: usize) -> Vec<SampleWindow> {
    let mut out = Vec::new();
    if to <= from || win == 0 || shift == 0 {
        return out;
    }
    if to - from < win {
        out.push(SampleWindow { start: from, end: to });
        return out;
    }
    let mut start = from;
    while start + win <= to {
        out.push(SampleWindow { start, end: start + win });
        start += shift;
    }
    let covered = out.last().map_or(from, |w| w.end);
    if covered < to && to - start >= win.div_ceil(2) {
        out.push(SampleWindow { start, end: to });
    }
    out
}

/// Overlap-save convolution state for one bank.
struct OverlapSave {
    fft_len: usize,
    hop: usize,
    taps: usize,
    channels: usize,
    directions: usize,
    /// Packed spectra per direction pair and channel: `H_a + j H_b`.
    packed: Vec<Vec<Complex64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl OverlapSave {
    fn new(bank: &BeamformerBank) -> Self {
        let taps = bank.taps_len();
        let fft_len = (4 * taps).max(2048).next_power_of_two();
        let hop = fft_len - taps + 1;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let channels = bank.channels();
        let directions = bank.directions();
        let spectrum = |n: usize, c: usize| -> Vec<Complex64> {
            let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
            for (b, &t) in buf.iter_mut().zip(bank.filter(n, c)) {
                b.re = t;
            }
            forward.process(&mut buf);
            buf
        };
        let mut packed = Vec::new();
        for pair in 0..directions.div_ceil(2) {
            for c in 0..channels {
                let a = spectrum(2 * pair, c);
                let b = if 2 * pair + 1 < directions {
                    spectrum(2 * pair + 1, c)
                } else {
                    vec![Complex64::new(0.0, 0.0); fft_len]
                };
                packed.push(a.iter().zip(&b).map(|(a, b)| a + Complex64::i() * b).collect());
            }
        }
        Self {
            fft_len,
            hop,
            taps,
            channels,
            directions,
            packed,
            forward,
            inverse,
        }
    }

    /// Calls `sink(direction, block_start, samples)` with consecutive output
    /// blocks of every requested direction pair.
    fn run(&self, audio: &MultichannelAudio, pairs: &[usize], mut sink: impl FnMut(usize, usize, &[f64])) {
        let len = audio.len();
        let scale = 1.0 / self.fft_len as f64;
        let mut spectra = vec![vec![Complex64::new(0.0, 0.0); self.fft_len]; self.channels];
        let mut acc = vec![Complex64::new(0.0, 0.0); self.fft_len];
        let mut out_a = vec![0.0; self.hop];
        let mut out_b = vec![0.0; self.hop];
        let mut t0 = 0usize;
        while t0 < len {
            let n_out = self.hop.min(len - t0);
            for (c, spec) in spectra.iter_mut().enumerate() {
                let ch = audio.channel(c);
                for (i, s) in spec.iter_mut().enumerate() {
                    // sample index t0 - (taps - 1) + i
                    let t = (t0 + i) as isize - (self.taps as isize - 1);
                    *s = if t >= 0 && (t as usize) < len {
                        Complex64::new(ch[t as usize], 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                }
                self.forward.process(spec);
            }
            for &pair in pairs {
                acc.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for (c, spec) in spectra.iter().enumerate() {
                    let h = &self.packed[pair * self.channels + c];
                    for ((a, x), h) in acc.iter_mut().zip(spec).zip(h) {
                        *a += x * h;
                    }
                }
                self.inverse.process(&mut acc);
                for i in 0..n_out {
                    let v = acc[self.taps - 1 + i] * scale;
                    out_a[i] = v.re;
                    out_b[i] = v.im;
                }
                sink(2 * pair, t0, &out_a[..n_out]);
                if 2 * pair + 1 < self.directions {
                    sink(2 * pair + 1, t0, &out_b[..n_out]);
                }
            }
            t0 += self.hop;
        }
    }
}

fn check_channels(bank: &BeamformerBank, audio: &MultichannelAudio) -> Result<()> {
    if audio.channels() != bank.channels() {
        return Err(Error::ChannelMismatch {
            expected: bank.channels(),
            actual: audio.channels(),
        });
    }
    Ok(())
}

/// Output of look direction `n`: `y[t] = Σ_c Σ_k taps[n][c][k] x_c[t-k]`.
pub fn beamform(bank: &BeamformerBank, audio: &MultichannelAudio, n: usize) -> Result<Vec<f64>> {
    check_channels(bank, audio)?;
    if n >= bank.directions() {
        return Err(Error::InvalidArgument(format!(
            "direction {n} out of range for a bank of {}",
            bank.directions()
        )));
    }
    let ola = OverlapSave::new(bank);
    let mut y = vec![0.0; audio.len()];
    ola.run(audio, &[n / 2], |dir, t0, block| {
        if dir == n {
            y[t0..t0 + block.len()].copy_from_slice(block);
        }
    });
    Ok(y)
}

/// Output energy of every direction inside every window (`windows × N`).
/// Windows must be sorted by start.
pub fn window_energies(bank: &BeamformerBank, audio: &MultichannelAudio, windows: &[SampleWindow]) -> Result<Vec<Vec<f64>>> {
    check_channels(bank, audio)?;
    let n = bank.directions();
    let mut energies = vec![vec![0.0; n]; windows.len()];
    if windows.is_empty() {
        return Ok(energies);
    }
    let ola = OverlapSave::new(bank);
    let pairs: Vec<usize> = (0..n.div_ceil(2)).collect();
    // windows overlapping the current block start at index `first`
    let mut first = 0usize;
    let mut last_t0 = usize::MAX;
    ola.run(audio, &pairs, |dir, t0, block| {
        let t1 = t0 + block.len();
        if t0 != last_t0 {
            while first < windows.len() && windows[first].end <= t0 {
                first += 1;
            }
            last_t0 = t0;
        }
        for (w, e) in windows.iter().zip(energies.iter_mut()).skip(first) {
            if w.start >= t1 {
                break;
            }
            let a = w.start.max(t0);
            let b = w.end.min(t1);
            if b > a {
                e[dir] += block[a - t0..b - t0].iter().map(|v| v * v).sum::<f64>();
            }
        }
    });
    Ok(energies)
}

/// Ratio-normalizes direction energies; silent windows become uniform.
pub fn normalize_energies(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total < SILENCE_ENERGY {
        vec![1.0 / raw.len() as f64; raw.len()]
    } else {
        raw.iter().map(|e| e / total).collect()
    }
}

pub fn svectors_for_windows(bank: &BeamformerBank, audio: &MultichannelAudio, windows: &[SampleWindow], nominal_len: f64) -> Result<Vec<SVector>> {
    let fs = audio.sample_rate();
    Ok(window_energies(bank, audio, windows)?
        .iter()
        .zip(windows)
        .map(|(e, w)| SVector {
            energies: normalize_energies(e),
            window_start: w.start as f64 / fs,
            window_len: nominal_len,
        })
        .collect())
}

pub fn extract_svectors(bank: &BeamformerBank, audio: &MultichannelAudio, window_len: f64, window_shift: f64) -> Result<Vec<SVector>> {
    check_channels(bank, audio)?;
    let fs = audio.sample_rate();
    let win = (window_len * fs).round() as usize;
    let shift = (window_shift * fs).round() as usize;
    if win == 0 || shift == 0 {
        return Err(Error::InvalidArgument("window length and shift must be positive".into()));
    }
    if audio.len() < win {
        return Err(Error::AudioTooShort {
            needed: win,
            actual: audio.len(),
        });
    }
    let windows = window_grid(audio.len(), win, shift);
    svectors_for_windows(bank, audio, &windows, window_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::ArrayGeometry;
    use crate::sdb::{build_bank, DEFAULT_LOADING};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(bank: &BeamformerBank, audio: &MultichannelAudio, n: usize) -> Vec<f64> {
        let k = bank.taps_len();
        (0..audio.len())
            .map(|t| {
                let mut acc = 0.0;
                for c in 0..bank.channels() {
                    let taps = bank.filter(n, c);
                    for (j, &h) in taps.iter().enumerate().take(k) {
                        if t >= j {
                            acc += h * audio.channel(c)[t - j];
                        }
                    }
                }
                acc
            })
            .collect()
    }

    fn noise_audio(channels: usize, len: usize, seed: u64) -> MultichannelAudio {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..channels).map(|_| (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect()).collect();
        MultichannelAudio::new(data, 16000.0).unwrap()
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let g = ArrayGeometry::default_circular();
        let bank = build_bank(&g, 5, 32, DEFAULT_LOADING).unwrap();
        let audio = noise_audio(8, 5000, 3);
        for n in 0..5 {
            let fast = beamform(&bank, &audio, n).unwrap();
            let slow = direct(&bank, &audio, n);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn unit_impulse_bank_is_identity() {
        let g = ArrayGeometry::circular(3, 0.05, 16000.0, 343.0).unwrap();
        let mut taps = vec![0.0; 3 * 16];
        taps[0] = 1.0;
        let bank = BeamformerBank::from_taps(g, 1, 16, taps).unwrap();
        let audio = noise_audio(3, 3000, 9);
        let y = beamform(&bank, &audio, 0).unwrap();
        for (a, b) in y.iter().zip(audio.channel(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_audio_gives_zero_output_and_uniform_svectors() {
        let g = ArrayGeometry::default_circular();
        let bank = build_bank(&g, 12, 32, DEFAULT_LOADING).unwrap();
        let audio = MultichannelAudio::zeros(8, 16000, 16000.0);
        assert!(beamform(&bank, &audio, 3).unwrap().iter().all(|&v| v == 0.0));
        let sv = extract_svectors(&bank, &audio, 0.5, 0.25).unwrap();
        for s in sv {
            assert!(s.energies.iter().all(|&e| (e - 1.0 / 12.0).abs() < 1e-15));
        }
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let g = ArrayGeometry::default_circular();
        let bank = build_bank(&g, 2, 16, DEFAULT_LOADING).unwrap();
        let audio = noise_audio(4, 100, 1);
        assert!(matches!(beamform(&bank, &audio, 0), Err(Error::ChannelMismatch { expected: 8, actual: 4 })));
    }

    #[test]
    fn two_second_grid_has_three_windows() {
        let w = window_grid(32000, 16000, 8000);
        let starts: Vec<usize> = w.iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0, 8000, 16000]);
        let w = window_grid(36000, 16000, 8000);
        assert_eq!(w.len(), 4);
        assert_eq!(w[3], SampleWindow { start: 24000, end: 36000 });
    }

    #[test]
    fn too_short_audio_is_rejected() {
        let g = ArrayGeometry::default_circular();
        let bank = build_bank(&g, 2, 16, DEFAULT_LOADING).unwrap();
        let audio = noise_audio(8, 8000, 1);
        assert!(matches!(extract_svectors(&bank, &audio, 1.0, 0.5), Err(Error::AudioTooShort { .. })));
    }

    #[test]
    fn svectors_sum_to_one_and_are_scale_invariant() {
        let g = ArrayGeometry::default_circular();
        let bank = build_bank(&g, 24, 64, DEFAULT_LOADING).unwrap();
        let audio = noise_audio(8, 24000, 5);
        let a = extract_svectors(&bank, &audio, 1.0, 0.5).unwrap();
        let b = extract_svectors(&bank, &audio.scaled(3.7), 1.0, 0.5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.energies.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(x.energies.iter().all(|&e| e >= 0.0));
            for (p, q) in x.energies.iter().zip(&y.energies) {
                assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
