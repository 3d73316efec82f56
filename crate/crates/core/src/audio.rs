use crate::error::{Error, Result};

/// Multi-channel waveform stored channel-major (`C` rows of `L` samples).
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelAudio {
    data: Vec<Vec<f64>>,
    sample_rate: f64,
}

impl MultichannelAudio {
    pub fn new(data: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("audio needs at least one channel".into()));
        }
        let len = data[0].len();
        if data.iter().any(|c| c.len() != len) {
            return Err(Error::ShapeMismatch("channels have different lengths".into()));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("sample rate must be positive, got {sample_rate}")));
        }
        if data.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("audio contains non-finite samples".into()));
        }
        Ok(Self { data, sample_rate })
    }

    pub fn zeros(channels: usize, len: usize, sample_rate: f64) -> Self {
        Self {
            data: vec![vec![0.0; len]; channels],
            sample_rate,
        }
    }

    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.data[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c]
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Vec<f64>> {
        self.data
    }

    /// Samples `[start, start + len)` of every channel, zero-padded past the end.
    pub fn slice_padded(&self, start: usize, len: usize) -> MultichannelAudio {
        let data = self
            .data
            .iter()
            .map(|ch| {
                let mut out = vec![0.0; len];
                if start < ch.len() {
                    let avail = (ch.len() - start).min(len);
                    out[..avail].copy_from_slice(&ch[start..start + avail]);
                }
                out
            })
            .collect();
        MultichannelAudio {
            data,
            sample_rate: self.sample_rate,
        }
    }

    /// Channel average.
    pub fn mixdown(&self) -> Vec<f64> {
        let scale = 1.0 / self.channels() as f64;
        (0..self.len())
            .map(|t| self.data.iter().map(|c| c[t]).sum::<f64>() * scale)
            .collect()
    }

    pub fn scaled(&self, alpha: f64) -> MultichannelAudio {
        MultichannelAudio {
            data: self.data.iter().map(|c| c.iter().map(|v| v * alpha).collect()).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn peak(&self) -> f64 {
        self.data.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}
