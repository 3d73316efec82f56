//! Trains a desk-scale overlap detector on simulated meetings and reports
//! frame accuracy and DetER on held-out meetings.
//!
//! cargo run --release --example osd_training -- [epochs] [meetings]

use std::time::Instant;

use spatial_diar::array::ArrayGeometry;
use spatial_diar::dmsnet::{frame_accuracy, frame_posteriors, train_with, DmsNet, TrainOptions, DEFAULT_THRESHOLD};
use spatial_diar::scoring::score_osd_frames;
use spatial_diar::sim::{dataset_meeting, make_osd_dataset, render, OsdDatasetConfig};

fn main() -> spatial_diar::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let meetings: usize = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(11);

    let geom = ArrayGeometry::default_circular();
    let config = OsdDatasetConfig::default();
    let t0 = Instant::now();
    let ds = make_osd_dataset(meetings, &geom, &config)?;
    println!(
        "{} chunks, {:.1}% overlap frames ({:.1} s)",
        ds.balance.chunks,
        100.0 * ds.balance.positive_frame_fraction(),
        t0.elapsed().as_secs_f64()
    );

    let net = DmsNet::new(config.model.clone())?;
    let opts = TrainOptions {
        epochs,
        lr: 2e-3,
        batch_size: 8,
        shuffle_seed: 7,
    };
    let t0 = Instant::now();
    let out = train_with(net, &ds.chunks, &opts)?;
    for (e, l) in out.loss_trace.iter().enumerate() {
        println!("epoch {e:3}  loss {l:.4}");
    }
    println!("trained in {:.1} s", t0.elapsed().as_secs_f64());

    let held_out = OsdDatasetConfig { seed: 99, ..config };
    let (mut probs, mut labels) = (Vec::new(), Vec::new());
    for i in 0..3 {
        let r = render(&dataset_meeting(&held_out, i)?, &geom, held_out.meeting_duration)?;
        probs.extend(frame_posteriors(&out.net, &r.audio)?);
        labels.extend(r.labels.frames);
    }
    let hyp: Vec<bool> = probs.iter().map(|&p| p >= DEFAULT_THRESHOLD).collect();
    let reference: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
    let report = score_osd_frames(&reference, &hyp);
    println!("held-out accuracy {:.2}%", 100.0 * frame_accuracy(&probs, &labels, DEFAULT_THRESHOLD));
    println!("{report}");
    Ok(())
}
