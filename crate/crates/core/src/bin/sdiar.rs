use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spatial_diar::beam::extract_svectors;
use spatial_diar::dmsnet::{detect_overlap, train_with, DmsNet, DmsNetConfig, TrainOptions};
use spatial_diar::io::{parse_rttm, read_vad, read_wav, write_atomic, write_rttm, write_wav, ConfigFile, SampleFormat};
use spatial_diar::pipeline::{Mode, Pipeline, PipelineConfig};
use spatial_diar::scoring::{score_der, score_osd, DEFAULT_COLLAR};
use spatial_diar::sdb::{build_bank, BeamformerBank};
use spatial_diar::sim::{make_osd_dataset, random_script, render, MeetingScript, MeetingSpec, OsdDatasetConfig};
use spatial_diar::timeline::{Annotation, Segment, Timeline};
use spatial_diar::{Error, Result};

#[derive(Parser)]
#[command(name = "sdiar", version, about = "Spatial-aware multi-channel speaker diarization")]
struct Cli {
    /// Sectioned key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (or directory for `simulate`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Design the superdirective beamformer bank
    Design,
    /// Render a simulated meeting: WAV, reference and overlap RTTM, VAD
    Simulate(SimulateArgs),
    /// Extract s-vectors from a recording
    Svector(SvectorArgs),
    /// Train the overlap detector on simulated meetings
    OsdTrain(TrainArgs),
    /// Detect overlapped speech
    OsdDetect(DetectArgs),
    /// Full diarization pipeline
    Diarize(DiarizeArgs),
    /// Diarization error rate of a hypothesis RTTM
    ScoreDer(ScoreDerArgs),
    /// Overlap detection scores of a hypothesis timeline
    ScoreOsd(ScoreOsdArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Meeting script; a random meeting is drawn when absent
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    speakers: usize,
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    #[arg(long, default_value_t = 20.0)]
    snr: f64,
    #[arg(long, default_value = "meeting")]
    name: String,
}

#[derive(Args)]
struct SvectorArgs {
    wav: PathBuf,
    #[arg(long)]
    bank: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 40)]
    meetings: usize,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
}

#[derive(Args)]
struct DetectArgs {
    wav: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct DiarizeArgs {
    wav: PathBuf,
    /// Oracle VAD, RTTM or `start end` lines
    #[arg(long)]
    vad: PathBuf,
    /// Run overlap detection and secondary speaker assignment
    #[arg(long)]
    osd: bool,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Run report (JSON)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreDerArgs {
    reference: PathBuf,
    hyp: PathBuf,
    #[arg(long, default_value_t = DEFAULT_COLLAR)]
    collar: f64,
    /// Exclude overlapped reference speech from scoring
    #[arg(long)]
    ignore_overlap: bool,
}

#[derive(Args)]
struct ScoreOsdArgs {
    /// Reference RTTM; its overlap is the target
    reference: PathBuf,
    /// Detected overlap, RTTM or `start end` lines
    hyp: PathBuf,
    #[arg(long)]
    duration: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}

fn pipeline_config(cli: &Cli) -> Result<PipelineConfig> {
    match &cli.config {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn required_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("this command needs --out".into()))
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn timeline_text(tl: &Timeline) -> String {
    tl.regions().iter().map(|r| format!("{:.3} {:.3}\n", r.start, r.end)).collect()
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Design => {
            let c = pipeline_config(&cli)?;
            let out = required_out(&cli)?;
            let bank = build_bank(&c.geometry()?, c.directions, c.taps, c.loading)?;
            bank.save(out)?;
            println!("bank: {} directions x {} channels x {} taps", bank.directions(), bank.channels(), bank.taps_len());
        }
        Cmd::Simulate(a) => {
            let c = pipeline_config(&cli)?;
            let (mut script, duration) = match &a.script {
                Some(p) => MeetingScript::load(p)?,
                None => {
                    let spec = MeetingSpec {
                        speakers: a.speakers,
                        duration: a.duration,
                        snr_db: a.snr,
                        seed: cli.seed.unwrap_or(0),
                        ..MeetingSpec::default()
                    };
                    (random_script(&spec)?, a.duration)
                }
            };
            if let Some(s) = cli.seed {
                script.seed = s;
            }
            let r = render(&script, &c.geometry()?, duration)?;
            let dir = required_out(&cli)?;
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.into(),
                source: e,
            })?;
            write_wav(&dir.join(format!("{}.wav", a.name)), &r.audio, SampleFormat::Pcm16)?;
            write_rttm(&dir.join(format!("{}.rttm", a.name)), &r.annotation, &a.name)?;
            let overlap = Annotation::new(
                r.annotation
                    .overlap()
                    .regions()
                    .iter()
                    .map(|x| Segment::new(x.start, x.end, "overlap"))
                    .collect(),
            );
            write_rttm(&dir.join(format!("{}.overlap.rttm", a.name)), &overlap, &a.name)?;
            write_atomic(&dir.join(format!("{}.vad.txt", a.name)), timeline_text(&r.annotation.support()).as_bytes())?;
            write_atomic(&dir.join(format!("{}.script", a.name)), script.to_text(duration).as_bytes())?;
            println!(
                "{}: {:.1} s, {} speakers, overlap {:.2} s",
                a.name,
                duration,
                script.speakers.len(),
                r.annotation.overlap().duration()
            );
        }
        Cmd::Svector(a) => {
            let c = pipeline_config(&cli)?;
            let bank = match &a.bank {
                Some(p) => BeamformerBank::load(p)?,
                None => build_bank(&c.geometry()?, c.directions, c.taps, c.loading)?,
            };
            let audio = read_wav(&a.wav)?;
            let svs = extract_svectors(&bank, &audio, c.window_len, c.window_shift)?;
            let mut text = String::new();
            for s in &svs {
                text.push_str(&format!("{:.3} {:.3}", s.window_start, s.window_start + s.window_len));
                for e in &s.energies {
                    text.push_str(&format!(" {e:.9e}"));
                }
                text.push('\n');
            }
            emit(&cli, &text)?;
        }
        Cmd::OsdTrain(a) => {
            let file = match &cli.config {
                Some(p) => ConfigFile::load(p)?,
                None => ConfigFile::default(),
            };
            let geom = pipeline_config(&cli)?.geometry()?;
            let mut model = DmsNetConfig::from_section(&file, "dmsnet", &DmsNetConfig::desk())?;
            let seed = cli.seed.unwrap_or(model.seed);
            model.seed = seed;
            let data_cfg = OsdDatasetConfig {
                model: model.clone(),
                seed,
                ..OsdDatasetConfig::default()
            };
            let data = make_osd_dataset(a.meetings, &geom, &data_cfg)?;
            println!(
                "dataset: {} chunks, {:.1}% positive frames",
                data.balance.chunks,
                100.0 * data.balance.positive_frame_fraction()
            );
            let opts = TrainOptions {
                epochs: a.epochs,
                lr: a.lr,
                batch_size: a.batch,
                shuffle_seed: seed,
            };
            let out = train_with(DmsNet::new(model)?, &data.chunks, &opts)?;
            for (i, l) in out.loss_trace.iter().enumerate() {
                println!("epoch {} loss {l:.4}", i + 1);
            }
            out.net.save(required_out(&cli)?)?;
        }
        Cmd::OsdDetect(a) => {
            let net = DmsNet::load(&a.model)?;
            let audio = read_wav(&a.wav)?;
            let threshold = a.threshold.unwrap_or(spatial_diar::dmsnet::DEFAULT_THRESHOLD);
            let tl = detect_overlap(&net, &audio, threshold)?;
            emit(&cli, &timeline_text(&tl))?;
        }
        Cmd::Diarize(a) => {
            let mut c = pipeline_config(&cli)?;
            if a.model.is_some() {
                c.osd_model = a.model.clone();
            }
            if a.embeddings.is_some() {
                c.embeddings_path = a.embeddings.clone();
            }
            let mode = if a.osd { Mode::WithOsd } else { Mode::ClusterOnly };
            let audio = read_wav(&a.wav)?;
            let vad = read_vad(&a.vad)?;
            let file_id = a
                .wav
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "audio".into());
            let out = Pipeline::new(c)?.run(&audio, &vad, mode)?;
            let rttm = spatial_diar::io::serialize_rttm(&out.annotation, &file_id);
            emit(&cli, &rttm)?;
            if let Some(p) = &a.report {
                write_atomic(p, out.report.to_json().as_bytes())?;
            }
        }
        Cmd::ScoreDer(a) => {
            let r = parse_rttm(&a.reference)?;
            let h = parse_rttm(&a.hyp)?;
            let report = score_der(&r, &h, a.collar, !a.ignore_overlap);
            emit(&cli, &format!("{report}\n"))?;
        }
        Cmd::ScoreOsd(a) => {
            let r = parse_rttm(&a.reference)?;
            let h = read_vad(&a.hyp)?;
            let duration = a.duration.unwrap_or_else(|| {
                let end = h.regions().last().map_or(0.0, |x| x.end);
                r.end_time().max(end)
            });
            let report = score_osd(&r.overlap(), &h, duration);
            emit(&cli, &format!("{report}\n"))?;
        }
    }
    Ok(())
}
