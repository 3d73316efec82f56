//! Renders a random three-speaker meeting and prints its ground truth.
//!
//! cargo run --release --example simulate -- [seed]

use spatial_diar::array::ArrayGeometry;
use spatial_diar::sim::{measured_snr_db, random_script, render_parts, MeetingSpec};

fn main() -> spatial_diar::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = MeetingSpec {
        speakers: 3,
        duration: 20.0,
        seed,
        ..MeetingSpec::default()
    };
    let script = random_script(&spec)?;
    print!("{}", script.to_text(spec.duration));

    let parts = render_parts(&script, &ArrayGeometry::default_circular(), spec.duration)?;
    let speech = parts.annotation.support().duration();
    let overlap = parts.annotation.overlap().duration();
    println!("speech {speech:.2} s, overlap {overlap:.2} s ({:.1}%)", 100.0 * overlap / speech);
    println!("requested SNR {:.1} dB, measured {:.2} dB", script.snr_db, measured_snr_db(&parts));
    for s in &parts.annotation.segments {
        println!("{:>6.2} {:>6.2} {}", s.start, s.end, s.speaker);
    }
    Ok(())
}
