//! Designs superdirective weights at a few frequencies and compares their
//! off-look power with delay-and-sum, then builds and saves a full bank.
//!
//! cargo run --release --example design_bank -- [out.bank]

use std::f64::consts::PI;

use spatial_diar::array::ArrayGeometry;
use spatial_diar::sdb::{beampattern, build_bank, delay_and_sum, design_narrowband, uniform_grid, DEFAULT_LOADING};

fn main() -> spatial_diar::Result<()> {
    let geom = ArrayGeometry::default_circular();
    let grid = uniform_grid(360);
    println!("{:>8} {:>12} {:>12}", "freq Hz", "SDB off-look", "DAS off-look");
    for hz in [250.0, 500.0, 1000.0, 2000.0, 4000.0] {
        let omega = 2.0 * PI * hz;
        let sdb = beampattern(&design_narrowband(&geom, omega, 0.0, DEFAULT_LOADING)?, &geom, &grid)?;
        let das = beampattern(&delay_and_sum(&geom, omega, 0.0), &geom, &grid)?;
        let exclude = 20f64.to_radians();
        println!("{hz:>8.0} {:>12.4} {:>12.4}", sdb.off_look_power(0.0, exclude), das.off_look_power(0.0, exclude));
    }

    let bank = build_bank(&geom, 120, 128, DEFAULT_LOADING)?;
    println!("bank: {} directions, {} channels, {} taps", bank.directions(), bank.channels(), bank.taps_len());
    if let Some(path) = std::env::args().nth(1) {
        bank.save(path.as_ref())?;
        println!("saved to {path}");
    }
    Ok(())
}
