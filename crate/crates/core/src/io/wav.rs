use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat as HoundFormat, WavSpec};

use crate::audio::MultichannelAudio;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported WAV encoding".into()),
        hound::Error::FormatError(m) => Error::CorruptHeader(m.to_string()),
        hound::Error::IoError(e) => Error::CorruptHeader(e.to_string()),
        other => Error::CorruptHeader(other.to_string()),
    }
}

/// Reads RIFF/WAVE with 16-bit PCM or 32-bit float samples. PCM is
/// scaled by 1/32768 so that -32768 maps to -1.0 exactly.
pub fn read_wav(path: &Path) -> Result<MultichannelAudio> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_wav_bytes(&bytes)
}

pub(crate) fn read_wav_bytes(bytes: &[u8]) -> Result<MultichannelAudio> {
    let mut reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::CorruptHeader("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (HoundFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (HoundFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!("{fmt:?} with {bits} bits per sample")));
        }
    };
    let frames = interleaved.len() / channels;
    let mut data = vec![Vec::with_capacity(frames); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (c, &v) in frame.iter().enumerate() {
            data[c].push(v);
        }
    }
    MultichannelAudio::new(data, spec.sample_rate as f64)
}

pub fn write_wav(path: &Path, audio: &MultichannelAudio, format: SampleFormat) -> Result<()> {
    let bytes = wav_bytes(audio, format)?;
    super::write_atomic(path, &bytes)
}

pub(crate) fn wav_bytes(audio: &MultichannelAudio, format: SampleFormat) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: audio.channels() as u16,
        sample_rate: audio.sample_rate().round() as u32,
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => HoundFormat::Int,
            SampleFormat::Float32 => HoundFormat::Float,
        },
    };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec).map_err(map_hound)?;
        for t in 0..audio.len() {
            for c in 0..audio.channels() {
                let v = audio.channel(c)[t];
                match format {
                    SampleFormat::Pcm16 => {
                        let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                        writer.write_sample(q).map_err(map_hound)?;
                    }
                    SampleFormat::Float32 => writer.write_sample(v as f32).map_err(map_hound)?,
                }
            }
        }
        writer.finalize().map_err(map_hound)?;
    }
    Ok(cursor.into_inner())
}
