//! Spatial-aware multi-channel speaker diarization.
//!
//! The crate covers the full chain from a circular microphone array
//! recording to a scored RTTM hypothesis:
//!
//! - [`array`] and [`sdb`]: array geometry, diffuse-noise superdirective
//!   beamformer design and FIR bank realization;
//! - [`beam`]: bank application and s-vector (direction energy) extraction;
//! - [`embedding`]: segment speaker embeddings (external or log-mel statistics);
//! - [`cluster`]: cosine similarity, late fusion and NME-SC spectral clustering;
//! - [`dmsnet`]: the multi-channel overlapped speech detector and its trainer;
//! - [`overlap`]: secondary speaker assignment inside detected overlap;
//! - [`scoring`]: DER and overlap detection metrics;
//! - [`sim`]: a far-field meeting simulator producing ground truth;
//! - [`io`] and [`pipeline`]: file formats and the end-to-end orchestrator.

pub mod array;
pub mod audio;
pub mod autodiff;
pub mod beam;
pub mod cluster;
pub mod dmsnet;
pub mod embedding;
pub mod error;
pub mod io;
pub mod overlap;
pub mod pipeline;
pub mod scoring;
pub mod sdb;
pub mod sim;
pub mod timeline;

pub use error::{Error, Result};
