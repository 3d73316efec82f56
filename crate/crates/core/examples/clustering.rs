//! NME-SC on a noisy three-block similarity matrix, and the effect of
//! fusing a spatial matrix into a confusable speaker matrix.
//!
//! cargo run --release --example clustering

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spatial_diar::cluster::{fuse, nme_sc, FusionWeight, SimilarityKind, SimilarityMatrix};

fn blocks(truth: &[usize], inside: f64, outside: f64, noise: f64, rng: &mut ChaCha8Rng, kind: SimilarityKind) -> SimilarityMatrix {
    let m = truth.len();
    let mut rows = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let base = if truth[i] == truth[j] { inside } else { outside };
            let v = (base + rng.gen_range(-noise..noise)).clamp(-1.0, 1.0);
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    SimilarityMatrix::from_rows(rows, kind).unwrap()
}

fn main() -> spatial_diar::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth: Vec<usize> = (0..30).map(|i| i % 3).collect();

    let a = blocks(&truth, 0.9, 0.1, 0.05, &mut rng, SimilarityKind::Fused);
    let r = nme_sc(&a, 4)?;
    println!("clean blocks: k={} chosen p={} labels {:?}", r.k, r.chosen_p, r.labels);

    // speakers 1 and 2 sound alike but sit apart
    let voice: Vec<usize> = truth.iter().map(|&t| t.min(1)).collect();
    let ax = blocks(&voice, 0.8, 0.3, 0.15, &mut rng, SimilarityKind::Speaker);
    let as_ = blocks(&truth, 0.95, 0.05, 0.05, &mut rng, SimilarityKind::Spatial);
    for a in [1.0, 0.95, 0.7] {
        let fused = fuse(&ax, &as_, FusionWeight::new(a)?)?;
        let r = nme_sc(&fused, 4)?;
        println!("a={a:.2}: k={} chosen p={}", r.k, r.chosen_p);
    }
    Ok(())
}
