//! End-to-end: simulate a meeting, diarize it with oracle VAD and oracle
//! overlap, and score both modes.
//!
//! cargo run --release --example diarize -- [seed]

use spatial_diar::array::ArrayGeometry;
use spatial_diar::io::serialize_rttm;
use spatial_diar::pipeline::{Mode, Pipeline, PipelineConfig};
use spatial_diar::scoring::{score_der, DEFAULT_COLLAR};
use spatial_diar::sim::{random_script, render, MeetingSpec};

fn main() -> spatial_diar::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let spec = MeetingSpec {
        speakers: 3,
        duration: 30.0,
        seed,
        ..MeetingSpec::default()
    };
    let r = render(&random_script(&spec)?, &ArrayGeometry::default_circular(), spec.duration)?;
    let vad = r.annotation.support();

    let pipeline = Pipeline::new(PipelineConfig::default())?;
    let plain = pipeline.run(&r.audio, &vad, Mode::ClusterOnly)?;
    // a trained detector would supply this; the reference overlap shows the ceiling
    let with = pipeline.run_with_overlaps(&r.audio, &vad, &r.annotation.overlap())?;

    print!("{}", serialize_rttm(&with.annotation, "meeting"));
    println!("{}", plain.report.to_json());
    for (name, out) in [("cluster only", &plain), ("oracle overlap", &with)] {
        let der = score_der(&r.annotation, &out.annotation, DEFAULT_COLLAR, true);
        println!("{name:>15}: k={} DER {:.2}% (miss {:.2}, fa {:.2}, spk {:.2})", out.report.k, der.der, der.miss, der.fa, der.spkerr);
    }
    Ok(())
}
