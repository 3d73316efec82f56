//! DER with and without overlap scoring, and overlap detection scores,
//! on a hand-made reference/hypothesis pair.
//!
//! cargo run --release --example scoring

use spatial_diar::scoring::{score_der, score_osd, DEFAULT_COLLAR};
use spatial_diar::timeline::{Annotation, Region, Segment, Timeline};

fn main() {
    let reference = Annotation::new(vec![
        Segment::new(0.0, 6.0, "alice"),
        Segment::new(5.0, 10.0, "bob"),
        Segment::new(10.0, 14.0, "alice"),
    ]);
    // primary speakers only, one late switch
    let hypothesis = Annotation::new(vec![
        Segment::new(0.0, 5.5, "spk0"),
        Segment::new(5.5, 10.5, "spk1"),
        Segment::new(10.5, 14.0, "spk0"),
    ]);
    for overlap in [true, false] {
        let r = score_der(&reference, &hypothesis, DEFAULT_COLLAR, overlap);
        println!("score overlap: {overlap}\n{r}\nmapping {:?}\n", r.mapping);
    }
    let detected = Timeline::from_regions([Region::new(5.2, 6.1)]);
    println!("{}", score_osd(&reference.overlap(), &detected, 14.0));
}
