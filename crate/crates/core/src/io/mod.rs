//! File formats: WAV audio, RTTM annotations, oracle VAD lists and the
//! sectioned key=value configuration format.

mod config;
mod rttm;
mod wav;

use std::path::Path;

pub use config::ConfigFile;
pub use rttm::{parse_rttm, parse_rttm_str, read_vad, read_vad_str, serialize_rttm, write_rttm};
pub use wav::{read_wav, write_wav, SampleFormat};

use crate::error::{Error, Result};

/// Writes `bytes` to a temporary sibling file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
