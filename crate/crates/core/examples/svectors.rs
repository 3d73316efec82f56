//! Two speakers at known directions: s-vector peaks per window.
//!
//! cargo run --release --example svectors

use spatial_diar::array::ArrayGeometry;
use spatial_diar::beam::extract_svectors;
use spatial_diar::sdb::{build_bank, DEFAULT_LOADING};
use spatial_diar::sim::{render, MeetingScript, SourceKind, SpeakerSpec, Turn};

fn main() -> spatial_diar::Result<()> {
    let geom = ArrayGeometry::default_circular();
    let bank = build_bank(&geom, 72, 128, DEFAULT_LOADING)?;
    let dirs = bank.look_directions();
    let speaker = |id: &str, n: usize, f0| SpeakerSpec {
        id: id.into(),
        direction: dirs[n],
        kind: SourceKind::Harmonic { f0 },
    };
    let turn = |id: &str, start, end| Turn {
        speaker: id.into(),
        start,
        end,
    };
    let script = MeetingScript {
        speakers: vec![speaker("a", 10, 130.0), speaker("b", 45, 220.0)],
        turns: vec![turn("a", 0.0, 4.0), turn("b", 4.0, 8.0)],
        snr_db: 15.0,
        seed: 2,
        reflection: None,
    };
    let r = render(&script, &geom, 8.0)?;
    println!("a at index 10 ({:.0} deg), b at index 45 ({:.0} deg)", dirs[10].to_degrees(), dirs[45].to_degrees());
    for s in extract_svectors(&bank, &r.audio, 1.0, 0.5)? {
        let (arg, peak) = s
            .energies
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (i, &e)| if e > best.1 { (i, e) } else { best });
        println!("{:>5.1} s  argmax {arg:>2}  peak share {peak:.4}", s.window_start);
    }
    Ok(())
}
