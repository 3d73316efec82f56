//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spatial_diar::audio::MultichannelAudio;
use spatial_diar::cluster::{SimilarityKind, SimilarityMatrix};
use spatial_diar::dmsnet::{DmsNet, DmsNetConfig, OverlapLabels, Variant};
use spatial_diar::timeline::{Annotation, Segment};

// ---------------------------------------------------------------------------
// finite differences

#[derive(Debug, Clone)]
pub struct CoordCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel: f64,
}

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

fn loss_of(net: &DmsNet, chunk: &MultichannelAudio, labels: &OverlapLabels) -> f64 {
    let post = net.forward(chunk).unwrap();
    spatial_diar::dmsnet::bce_loss(&post, labels).unwrap()
}

/// A random chunk and label sequence for `config`.
pub fn random_example(config: &DmsNetConfig, seed: u64) -> (MultichannelAudio, OverlapLabels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.chunk_samples();
    let data = (0..config.channels)
        .map(|_| (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect())
        .collect();
    let audio = MultichannelAudio::new(data, config.sample_rate).unwrap();
    let frames = (0..config.frames()).map(|_| rng.gen_range(0..2u8)).collect();
    (
        audio,
        OverlapLabels {
            frames,
            frame_rate: config.frame_rate(),
        },
    )
}

/// Central differences on `count` coordinates: one from every tensor
/// first, the rest uniformly over all scalars.
pub fn gradient_check(variant: Variant, count: usize, seed: u64) -> Vec<CoordCheck> {
    let config = DmsNetConfig::tiny(variant);
    let net = DmsNet::new(config.clone()).unwrap();
    let (chunk, labels) = random_example(&config, seed);
    let input = net.prepare(&chunk).unwrap();
    let (_, grad) = net.loss_and_gradient(&input, &labels.as_f64()).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let names: Vec<String> = net.params().names().map(String::from).collect();
    let sizes: Vec<usize> = names.iter().map(|n| net.params().get(n).unwrap().len()).collect();
    let total: usize = sizes.iter().sum();
    let mut coords: Vec<(usize, usize)> = (0..names.len()).map(|t| (t, rng.gen_range(0..sizes[t]))).collect();
    while coords.len() < count {
        let mut flat = rng.gen_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        coords.push((t, flat));
    }

    let mut probe = net.clone();
    coords
        .into_iter()
        .map(|(t, i)| {
            let name = &names[t];
            let base = net.params().get(name).unwrap().data[i];
            let mut at = |x: f64| {
                let mut p = net.params().clone();
                p.get_mut(name).unwrap().data[i] = x;
                probe.set_params(p).unwrap();
                loss_of(&probe, &chunk, &labels)
            };
            let numeric = (at(base + FD_STEP) - at(base - FD_STEP)) / (2.0 * FD_STEP);
            let analytic = grad.get(name).unwrap().data[i];
            CoordCheck {
                tensor: name.clone(),
                index: i,
                analytic,
                numeric,
                rel: rel_error(analytic, numeric),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// NME-SC sweep oracle

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    let norm: f64 = a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * norm {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOracle {
    pub p: usize,
    pub k: usize,
}

/// Tries every p, recomputing each spectrum densely.
pub fn nme_oracle(a: &SimilarityMatrix, max_speakers: usize) -> SweepOracle {
    let m = a.size();
    let mut best: Option<(f64, usize, usize)> = None;
    for p in 1..=m.div_ceil(2).min(m - 1) {
        let mut b = vec![vec![0.0; m]; m];
        for i in 0..m {
            let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            // stable sort keeps the lower index first among equal values
            others.sort_by(|&x, &y| a.get(i, y).max(0.0).partial_cmp(&a.get(i, x).max(0.0)).unwrap());
            for &j in others.iter().take(p) {
                if a.get(i, j) > 0.0 {
                    b[i][j] = 1.0;
                }
            }
        }
        let sym: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| 0.5 * (b[i][j] + b[j][i])).collect()).collect();
        let lap: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if i == j { (0..m).filter(|&x| x != i).map(|x| sym[i][x]).sum() } else { -sym[i][j] })
                    .collect()
            })
            .collect();
        let ev = jacobi_eigenvalues(lap);
        let kmax = max_speakers.min(m - 1);
        let gaps: Vec<f64> = (0..kmax).map(|k| ev[k + 1] - ev[k]).collect();
        let (mut arg, mut top) = (0, gaps[0]);
        for (i, &g) in gaps.iter().enumerate() {
            if g > top {
                top = g;
                arg = i;
            }
        }
        let g = top / (ev[m - 1] + 1e-10);
        let ratio = if g > 0.0 { p as f64 / (m as f64 * g) } else { f64::INFINITY };
        if best.map_or(true, |(r, _, _)| ratio < r) {
            best = Some((ratio, p, arg + 1));
        }
    }
    let (_, p, k) = best.unwrap();
    SweepOracle { p, k }
}

/// Block sizes of a random partition of `m` into `k` blocks of at least 3.
pub fn random_sizes(rng: &mut ChaCha8Rng, m: usize, k: usize) -> Vec<usize> {
    let mut sizes = vec![3; k];
    for _ in 0..m - 3 * k {
        sizes[rng.gen_range(0..k)] += 1;
    }
    sizes
}

/// Block-diagonal similarity with in-block 0.9 ± 0.05 and cross 0.1 ± 0.05,
/// rows shuffled. Returns the matrix and the planted labels.
pub fn perturbed_blocks(rng: &mut ChaCha8Rng, sizes: &[usize]) -> (SimilarityMatrix, Vec<usize>) {
    let mut truth: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat(b).take(s)).collect();
    for i in (1..truth.len()).rev() {
        truth.swap(i, rng.gen_range(0..=i));
    }
    let m = truth.len();
    let mut rows = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let centre = if truth[i] == truth[j] { 0.9 } else { 0.1 };
            let v = centre + rng.gen_range(-0.05..0.05);
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    (SimilarityMatrix::from_rows(rows, SimilarityKind::Fused).unwrap(), truth)
}

pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

// ---------------------------------------------------------------------------
// DER frame counter

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameCounts {
    pub total: u64,
    pub miss: u64,
    pub fa: u64,
    pub spkerr: u64,
}

fn active(segs: &[Segment], speaker: &str, c: f64) -> bool {
    segs.iter().any(|s| s.speaker == speaker && s.start <= c && c < s.end)
}

/// Walks every 10 ms frame and tries every reference-to-hypothesis mapping.
pub fn brute_force_der(reference: &Annotation, hypothesis: &Annotation, collar: f64, score_overlap: bool) -> FrameCounts {
    let frame = 0.01;
    let end = reference.end_time().max(hypothesis.end_time());
    let n = (end / frame).ceil() as usize + 1;
    let rs = reference.speakers();
    let hs = hypothesis.speakers();
    let boundaries: Vec<f64> = reference.segments.iter().flat_map(|s| [s.start, s.end]).collect();

    let mut scored: Vec<(Vec<bool>, Vec<bool>)> = Vec::new();
    let mut counts = FrameCounts::default();
    let mut upper = 0u64;
    for t in 0..n {
        let c = (t as f64 + 0.5) * frame;
        if boundaries.iter().any(|&b| (c - b).abs() < collar) {
            continue;
        }
        let ra: Vec<bool> = rs.iter().map(|s| active(&reference.segments, s, c)).collect();
        let ha: Vec<bool> = hs.iter().map(|s| active(&hypothesis.segments, s, c)).collect();
        let nr = ra.iter().filter(|&&x| x).count() as u64;
        let nh = ha.iter().filter(|&&x| x).count() as u64;
        if !score_overlap && nr >= 2 {
            continue;
        }
        counts.total += nr;
        counts.miss += nr.saturating_sub(nh);
        counts.fa += nh.saturating_sub(nr);
        upper += nr.min(nh);
        scored.push((ra, ha));
    }

    // every injective partial map ref -> hyp
    fn search(r: usize, used: &mut Vec<bool>, map: &mut Vec<Option<usize>>, eval: &dyn Fn(&[Option<usize>]) -> u64, best: &mut u64) {
        if r == map.len() {
            *best = (*best).max(eval(map));
            return;
        }
        map[r] = None;
        search(r + 1, used, map, eval, best);
        for h in 0..used.len() {
            if !used[h] {
                used[h] = true;
                map[r] = Some(h);
                search(r + 1, used, map, eval, best);
                used[h] = false;
            }
        }
        map[r] = None;
    }
    let eval = |map: &[Option<usize>]| -> u64 {
        scored
            .iter()
            .map(|(ra, ha)| {
                map.iter()
                    .enumerate()
                    .filter(|&(r, h)| ra[r] && h.is_some_and(|h| ha[h]))
                    .count() as u64
            })
            .sum()
    };
    let mut best = 0;
    search(0, &mut vec![false; hs.len()], &mut vec![None; rs.len()], &eval, &mut best);
    counts.spkerr = upper - best;
    counts
}

/// Up to 4 speakers, up to 20 s; segments of one speaker never touch.
pub fn random_annotation(rng: &mut ChaCha8Rng, speakers: usize, duration: f64, prefix: &str) -> Annotation {
    let mut segs = Vec::new();
    for s in 0..speakers {
        let mut t = rng.gen_range(0.0..2.0);
        while t < duration {
            let len = rng.gen_range(0.3..4.0);
            let end = (t + len).min(duration);
            if end - t > 0.05 {
                segs.push(Segment::new(t, end, format!("{prefix}{s}")));
            }
            t = end + rng.gen_range(0.2..5.0);
        }
    }
    Annotation::new(segs).normalized()
}
