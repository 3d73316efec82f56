//! End-to-end diarization: VAD windows, s-vectors and speaker embeddings,
//! late fusion, NME-SC, and optionally overlap detection with secondary
//! speaker assignment.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::array::{ArrayGeometry, DEFAULT_MIC_COUNT, DEFAULT_RADIUS_M, DEFAULT_SAMPLE_RATE, DEFAULT_SOUND_SPEED};
use crate::audio::MultichannelAudio;
use crate::beam::{svectors_for_windows, window_grid_in, SampleWindow, DEFAULT_WINDOW_LEN, DEFAULT_WINDOW_SHIFT};
use crate::cluster::{assign_labels, cosine_matrix, fuse, nme_sc, FusionWeight, SimilarityKind, DEFAULT_FUSION_WEIGHT, DEFAULT_MAX_SPEAKERS};
use crate::dmsnet::{detect_overlap, DmsNet, DEFAULT_THRESHOLD};
use crate::embedding::{embed_windows, load_embeddings, SegmentEmbedding};
use crate::error::{Error, Result};
use crate::io::{read_vad, read_wav, ConfigFile};
use crate::overlap::assign_secondary;
use crate::sdb::{build_bank, BeamformerBank, DEFAULT_DIRECTIONS, DEFAULT_LOADING, DEFAULT_TAPS};
use crate::timeline::{Annotation, Region, Timeline};

/// Shortest VAD span that gets a window (one embedding frame).
pub const MIN_SPAN_S: f64 = 0.025;

/// Tolerance when matching external embedding rows to windows.
const START_TOL_S: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ClusterOnly,
    WithOsd,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster_only" => Ok(Mode::ClusterOnly),
            "with_osd" => Ok(Mode::WithOsd),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mics: usize,
    pub radius: f64,
    pub sample_rate: f64,
    pub sound_speed: f64,
    pub directions: usize,
    pub taps: usize,
    pub loading: f64,
    pub window_len: f64,
    pub window_shift: f64,
    pub fusion_weight: f64,
    pub max_speakers: usize,
    pub osd_model: Option<PathBuf>,
    pub osd_threshold: f64,
    /// Precomputed bank; designed from the geometry when absent.
    pub bank_path: Option<PathBuf>,
    /// External embeddings; lightweight embeddings when absent.
    pub embeddings_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mics: DEFAULT_MIC_COUNT,
            radius: DEFAULT_RADIUS_M,
            sample_rate: DEFAULT_SAMPLE_RATE,
            sound_speed: DEFAULT_SOUND_SPEED,
            directions: DEFAULT_DIRECTIONS,
            taps: DEFAULT_TAPS,
            loading: DEFAULT_LOADING,
            window_len: DEFAULT_WINDOW_LEN,
            window_shift: DEFAULT_WINDOW_SHIFT,
            fusion_weight: DEFAULT_FUSION_WEIGHT,
            max_speakers: DEFAULT_MAX_SPEAKERS,
            osd_model: None,
            osd_threshold: DEFAULT_THRESHOLD,
            bank_path: None,
            embeddings_path: None,
        }
    }
}

impl PipelineConfig {
    /// Reads `[geometry]`, `[bank]`, `[windows]`, `[fusion]`, `[clustering]`,
    /// `[osd]` and `[paths]`; absent keys keep their defaults. Relative paths
    /// resolve against `base_dir`.
    pub fn from_config(cfg: &ConfigFile, base_dir: &Path) -> Result<Self> {
        let d = Self::default();
        let path = |section: &str, key: &str| cfg.get(section, key).map(|e| base_dir.join(&e.value));
        let c = Self {
            mics: cfg.value_or("geometry", "mics", d.mics)?,
            radius: cfg.value_or("geometry", "radius", d.radius)?,
            sample_rate: cfg.value_or("geometry", "sample_rate", d.sample_rate)?,
            sound_speed: cfg.value_or("geometry", "sound_speed", d.sound_speed)?,
            directions: cfg.value_or("bank", "directions", d.directions)?,
            taps: cfg.value_or("bank", "taps", d.taps)?,
            loading: cfg.value_or("bank", "loading", d.loading)?,
            window_len: cfg.value_or("windows", "length", d.window_len)?,
            window_shift: cfg.value_or("windows", "shift", d.window_shift)?,
            fusion_weight: cfg.value_or("fusion", "weight", d.fusion_weight)?,
            max_speakers: cfg.value_or("clustering", "max_speakers", d.max_speakers)?,
            osd_model: path("osd", "model"),
            osd_threshold: cfg.value_or("osd", "threshold", d.osd_threshold)?,
            bank_path: path("paths", "bank"),
            embeddings_path: path("paths", "embeddings"),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_config(&ConfigFile::load(path)?, base)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.mics < 2 || !(self.radius > 0.0) || !(self.sample_rate > 0.0) || !(self.sound_speed > 0.0) {
            return bad("geometry needs at least 2 mics and positive radius, sample rate and sound speed".into());
        }
        if self.directions == 0 || self.taps < 2 || self.taps % 2 != 0 {
            return bad(format!("bank needs directions ≥ 1 and an even tap count ≥ 2, got {} and {}", self.directions, self.taps));
        }
        if !(self.loading > 0.0) {
            return bad(format!("diagonal loading must be positive, got {}", self.loading));
        }
        if !(self.window_len > 0.0) || !(self.window_shift > 0.0) || self.window_shift > self.window_len {
            return bad(format!("window shift must lie in (0, length], got {} and {}", self.window_shift, self.window_len));
        }
        FusionWeight::new(self.fusion_weight)?;
        if self.max_speakers == 0 {
            return bad("max_speakers must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.osd_threshold) {
            return bad(format!("osd threshold must lie in [0, 1], got {}", self.osd_threshold));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::circular(self.mics, self.radius, self.sample_rate, self.sound_speed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: &'static str,
    pub seconds: f64,
    /// Output cardinality: windows, matrix rows, clusters or segments.
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub windows: usize,
    pub k: usize,
    pub chosen_p: usize,
    pub fusion_weight: f64,
    pub overlap_seconds: f64,
    pub segments: usize,
    pub stages: Vec<StageReport>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub annotation: Annotation,
    pub overlaps: Timeline,
    pub report: RunReport,
}

struct Stages(Vec<StageReport>);

impl Stages {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>, count: impl Fn(&T) -> usize) -> Result<T> {
        let t0 = Instant::now();
        let out = f()?;
        self.0.push(StageReport {
            stage,
            seconds: t0.elapsed().as_secs_f64(),
            outputs: count(&out),
        });
        Ok(out)
    }
}

/// Windows on the shared s-vector/embedding grid, restricted to `vad`.
pub fn vad_windows(vad: &Timeline, total: usize, sample_rate: f64, window_len: f64, window_shift: f64) -> Vec<SampleWindow> {
    let win = (window_len * sample_rate).round() as usize;
    let shift = (window_shift * sample_rate).round() as usize;
    let min_len = (MIN_SPAN_S * sample_rate).round() as usize;
    let mut out = Vec::new();
    for r in vad.regions() {
        let from = ((r.start * sample_rate).round().max(0.0) as usize).min(total);
        let to = ((r.end * sample_rate).round().max(0.0) as usize).min(total);
        if to.saturating_sub(from) < min_len {
            continue;
        }
        out.extend(window_grid_in(from, to, win, shift));
    }
    out
}

/// A configured pipeline with its bank and optional detector loaded.
pub struct Pipeline {
    config: PipelineConfig,
    bank: BeamformerBank,
    osd: Option<DmsNet>,
    embeddings: Option<Vec<SegmentEmbedding>>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let bank = match &config.bank_path {
            Some(p) => BeamformerBank::load(p)?,
            None => build_bank(&config.geometry()?, config.directions, config.taps, config.loading)?,
        };
        let osd = config.osd_model.as_deref().map(DmsNet::load).transpose()?;
        let embeddings = config.embeddings_path.as_deref().map(load_embeddings).transpose()?;
        Self::with_parts(config, bank, osd, embeddings)
    }

    /// A pipeline over an already built bank and detector.
    pub fn with_parts(
        config: PipelineConfig,
        bank: BeamformerBank,
        osd: Option<DmsNet>,
        embeddings: Option<Vec<SegmentEmbedding>>,
    ) -> Result<Self> {
        config.validate()?;
        if bank.channels() != config.mics {
            return Err(Error::ChannelMismatch {
                expected: config.mics,
                actual: bank.channels(),
            });
        }
        if let Some(net) = &osd {
            if net.config().channels != config.mics {
                return Err(Error::ChannelMismatch {
                    expected: config.mics,
                    actual: net.config().channels,
                });
            }
        }
        Ok(Self {
            config,
            bank,
            osd,
            embeddings,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn bank(&self) -> &BeamformerBank {
        &self.bank
    }

    pub fn set_fusion_weight(&mut self, a: f64) -> Result<()> {
        FusionWeight::new(a)?;
        self.config.fusion_weight = a;
        Ok(())
    }

    pub fn run(&self, audio: &MultichannelAudio, vad: &Timeline, mode: Mode) -> Result<PipelineOutput> {
        let overlaps = match mode {
            Mode::ClusterOnly => None,
            Mode::WithOsd => {
                let net = self
                    .osd
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("mode with_osd needs an osd model".into()))?;
                Some(net)
            }
        };
        let mut stages = Stages(Vec::new());
        let detected = match overlaps {
            None => None,
            Some(net) => Some(stages.run(
                "osd",
                || Ok(detect_overlap(net, audio, self.config.osd_threshold).map_err(|e| e.in_stage("dmsnet", 0))?.intersect(vad)),
                |t: &Timeline| t.regions().len(),
            )?),
        };
        self.diarize(audio, vad, detected, mode, stages)
    }

    /// Runs with a given overlap timeline in place of the detector.
    pub fn run_with_overlaps(&self, audio: &MultichannelAudio, vad: &Timeline, overlaps: &Timeline) -> Result<PipelineOutput> {
        self.diarize(audio, vad, Some(overlaps.intersect(vad)), Mode::WithOsd, Stages(Vec::new()))
    }

    fn diarize(
        &self,
        audio: &MultichannelAudio,
        vad: &Timeline,
        overlaps: Option<Timeline>,
        mode: Mode,
        mut stages: Stages,
    ) -> Result<PipelineOutput> {
        let c = &self.config;
        if audio.channels() != c.mics {
            return Err(Error::ChannelMismatch {
                expected: c.mics,
                actual: audio.channels(),
            });
        }
        if (audio.sample_rate() - c.sample_rate).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "audio is sampled at {} Hz, pipeline expects {}",
                audio.sample_rate(),
                c.sample_rate
            )));
        }
        let fs = c.sample_rate;
        let windows = stages.run(
            "windows",
            || Ok(vad_windows(vad, audio.len(), fs, c.window_len, c.window_shift)),
            |w: &Vec<SampleWindow>| w.len(),
        )?;
        let overlaps = overlaps.unwrap_or_default();
        if windows.is_empty() {
            return Ok(PipelineOutput {
                annotation: Annotation::default(),
                overlaps,
                report: RunReport {
                    mode,
                    windows: 0,
                    k: 0,
                    chosen_p: 0,
                    fusion_weight: c.fusion_weight,
                    overlap_seconds: 0.0,
                    segments: 0,
                    stages: stages.0,
                },
            });
        }
        let regions: Vec<Region> = windows.iter().map(|w| Region::new(w.start as f64 / fs, w.end as f64 / fs)).collect();

        let svectors = stages.run(
            "svector",
            || svectors_for_windows(&self.bank, audio, &windows, c.window_len).map_err(|e| e.in_stage("beam_runtime", 0)),
            Vec::len,
        )?;
        let embeddings = stages.run(
            "embedding",
            || match &self.embeddings {
                Some(ext) => match_external(ext, &regions),
                None => embed_windows(&audio.mixdown(), fs, &windows, c.window_len),
            },
            Vec::len,
        )?;

        let fused = stages.run(
            "fusion",
            || {
                let xs: Vec<Vec<f64>> = embeddings.iter().map(|e| e.vector.clone()).collect();
                let ss: Vec<Vec<f64>> = svectors.iter().map(|s| s.energies.clone()).collect();
                let ax = cosine_matrix(&xs, SimilarityKind::Speaker).map_err(|e| stage_row("embedding", e))?;
                let as_ = cosine_matrix(&ss, SimilarityKind::Spatial).map_err(|e| stage_row("beam_runtime", e))?;
                fuse(&ax, &as_, FusionWeight::new(c.fusion_weight)?).map_err(|e| e.in_stage("fusion_cluster", 0))
            },
            |m| m.size(),
        )?;
        let clusters = stages.run(
            "cluster",
            || nme_sc(&fused, c.max_speakers).map_err(|e| e.in_stage("fusion_cluster", 0)),
            |r| r.k,
        )?;
        let diar = assign_labels(&clusters.labels, &regions)?;

        let annotation = stages.run(
            "assign",
            || {
                let out = if mode == Mode::WithOsd {
                    assign_secondary(&diar, &overlaps, &fused, &regions, &clusters.labels).map_err(|e| e.in_stage("overlap_assign", 0))?
                } else {
                    diar.clone()
                };
                Ok(out.restrict(vad).normalized())
            },
            |a: &Annotation| a.segments.len(),
        )?;

        Ok(PipelineOutput {
            report: RunReport {
                mode,
                windows: windows.len(),
                k: clusters.k,
                chosen_p: clusters.chosen_p,
                fusion_weight: c.fusion_weight,
                overlap_seconds: overlaps.duration(),
                segments: annotation.segments.len(),
                stages: stages.0,
            },
            annotation,
            overlaps,
        })
    }
}

fn stage_row(module: &'static str, e: Error) -> Error {
    match e {
        Error::ZeroVector(i) => Error::ZeroVector(i).in_stage(module, i),
        other => other.in_stage(module, 0),
    }
}

/// Pairs external embedding rows with windows by start time.
fn match_external(ext: &[SegmentEmbedding], windows: &[Region]) -> Result<Vec<SegmentEmbedding>> {
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            ext.iter()
                .find(|e| (e.window_start - w.start).abs() <= START_TOL_S)
                .cloned()
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("no external embedding starts at {:.3} s", w.start)).in_stage("embedding", i)
                })
        })
        .collect()
}

/// File-level entry point: the file id is the WAV stem.
pub fn run_pipeline(config: &PipelineConfig, wav: &Path, vad: &Path, mode: Mode) -> Result<(String, PipelineOutput)> {
    let audio = read_wav(wav)?;
    let vad = read_vad(vad)?;
    let file_id = wav
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "audio".into());
    let pipeline = Pipeline::new(config.clone())?;
    Ok((file_id, pipeline.run(&audio, &vad, mode)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{render, MeetingScript, SourceKind, SpeakerSpec, Turn};

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            directions: 36,
            taps: 64,
            ..PipelineConfig::default()
        }
    }

    fn meeting(turns: &[(&str, f64, f64)], dirs: &[f64]) -> MeetingScript {
        let speakers = dirs
            .iter()
            .enumerate()
            .map(|(i, &d)| SpeakerSpec {
                id: format!("s{i}"),
                direction: d.to_radians(),
                kind: SourceKind::Harmonic { f0: 110.0 + 45.0 * i as f64 },
            })
            .collect();
        MeetingScript {
            speakers,
            turns: turns
                .iter()
                .map(|&(s, a, b)| Turn {
                    speaker: s.into(),
                    start: a,
                    end: b,
                })
                .collect(),
            snr_db: 20.0,
            seed: 3,
            reflection: None,
        }
    }

    #[test]
    fn config_sections_are_read() {
        let cfg: ConfigFile = "[bank]\ndirections = 60\n[fusion]\nweight = 0.5\n[osd]\nmodel = m.bin\nthreshold = 0.4\n"
            .parse()
            .unwrap();
        let c = PipelineConfig::from_config(&cfg, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.directions, 60);
        assert_eq!(c.fusion_weight, 0.5);
        assert_eq!(c.osd_model, Some(PathBuf::from("/tmp/x/m.bin")));
        assert_eq!(c.osd_threshold, 0.4);
        assert_eq!(c.taps, DEFAULT_TAPS);
        let bad: ConfigFile = "[fusion]\nweight = 1.5\n".parse().unwrap();
        assert!(PipelineConfig::from_config(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn vad_windows_stay_inside_speech() {
        let vad = Timeline::from_regions([Region::new(0.5, 2.5), Region::new(3.0, 3.01), Region::new(4.0, 4.6)]);
        let w = vad_windows(&vad, 16000 * 5, 16000.0, 1.0, 0.5);
        let secs: Vec<(f64, f64)> = w.iter().map(|w| (w.start as f64 / 16000.0, w.end as f64 / 16000.0)).collect();
        assert_eq!(secs, vec![(0.5, 1.5), (1.0, 2.0), (1.5, 2.5), (4.0, 4.6)]);
    }

    #[test]
    fn three_speakers_without_overlap() {
        let script = meeting(
            &[("s0", 0.0, 4.0), ("s1", 4.0, 8.0), ("s2", 8.0, 12.0), ("s0", 12.0, 15.0)],
            &[0.0, 120.0, 240.0],
        );
        let r = render(&script, &ArrayGeometry::default_circular(), 15.0).unwrap();
        let p = Pipeline::new(small_config()).unwrap();
        let vad = r.annotation.support();
        let out = p.run(&r.audio, &vad, Mode::ClusterOnly).unwrap();
        assert_eq!(out.report.k, 3);
        let der = crate::scoring::score_der(&r.annotation, &out.annotation, 0.25, true);
        assert!(der.der < 5.0, "DER {}", der.der);
        // no speech outside the VAD
        assert!(out.annotation.support().subtract(&vad).duration() < 1e-9);
        // an empty overlap timeline changes nothing
        let with = p.run_with_overlaps(&r.audio, &vad, &Timeline::new()).unwrap();
        assert_eq!(with.annotation, out.annotation);
        let names: Vec<&str> = out.report.stages.iter().map(|s| s.stage).collect();
        assert_eq!(names, ["windows", "svector", "embedding", "fusion", "cluster", "assign"]);
        assert!(out.report.to_json().contains("\"chosen_p\""));
    }

    #[test]
    fn with_osd_needs_a_model() {
        let p = Pipeline::new(small_config()).unwrap();
        let audio = MultichannelAudio::zeros(8, 16000, 16000.0);
        assert!(p.run(&audio, &Timeline::new(), Mode::WithOsd).is_err());
        let out = p.run(&audio, &Timeline::new(), Mode::ClusterOnly).unwrap();
        assert!(out.annotation.is_empty());
    }

    #[test]
    fn external_embeddings_must_cover_windows() {
        let ext = vec![SegmentEmbedding {
            vector: vec![1.0, 0.0],
            window_start: 0.0,
            window_len: 1.0,
            source: crate::embedding::EmbeddingSource::External,
        }];
        assert!(match_external(&ext, &[Region::new(0.0, 1.0)]).is_ok());
        let err = match_external(&ext, &[Region::new(0.0, 1.0), Region::new(0.5, 1.5)]).unwrap_err();
        assert!(err.to_string().contains("embedding failed at window 1"), "{err}");
    }
}
