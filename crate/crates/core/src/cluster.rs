//! Similarity matrices, late fusion and NME-SC clustering.
//!
//! NME-SC sweeps a row-wise top-`p` binarization of the affinity matrix,
//! and for each `p` measures the largest Laplacian eigengap normalized by
//! the largest eigenvalue. The `p` minimizing `p / (M · g_p)` fixes both the
//! graph and the cluster count. Eigendecompositions are dense, O(M³) per
//! `p`, which is fine for up to a few thousand windows.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::timeline::{Annotation, Region, Segment};

pub const DEFAULT_FUSION_WEIGHT: f64 = 0.95;
pub const DEFAULT_MAX_SPEAKERS: usize = 4;
const KMEANS_SEED: u64 = 0x5eed;
const KMEANS_RESTARTS: usize = 50;
const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    Speaker,
    Spatial,
    Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    size: usize,
    values: Vec<f64>,
    pub kind: SimilarityKind,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, kind: SimilarityKind) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::ShapeMismatch("similarity matrix must be square".into()));
        }
        Ok(Self {
            size,
            values: rows.into_iter().flatten().collect(),
            kind,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy with rows and columns reordered: `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> SimilarityMatrix {
        let n = self.size;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        SimilarityMatrix {
            size: n,
            values,
            kind: self.kind,
        }
    }
}

/// Pairwise cosine similarity; the diagonal is exactly 1.
pub fn cosine_matrix(vectors: &[Vec<f64>], kind: SimilarityKind) -> Result<SimilarityMatrix> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("cosine matrix of zero vectors".into()));
    }
    let dim = vectors[0].len();
    let mut normed = Vec::with_capacity(vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::ShapeMismatch(format!("row {i} has dimension {} instead of {dim}", v.len())));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::ZeroVector(i));
        }
        normed.push(v.iter().map(|x| x / norm).collect::<Vec<f64>>());
    }
    let m = vectors.len();
    let mut values = vec![0.0; m * m];
    for i in 0..m {
        values[i * m + i] = 1.0;
        for j in i + 1..m {
            let dot: f64 = normed[i].iter().zip(&normed[j]).map(|(a, b)| a * b).sum();
            let v = dot.clamp(-1.0, 1.0);
            values[i * m + j] = v;
            values[j * m + i] = v;
        }
    }
    Ok(SimilarityMatrix { size: m, values, kind })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub fn new(a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidArgument(format!("fusion weight must lie in [0, 1], got {a}")));
        }
        Ok(Self(a))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for FusionWeight {
    fn default() -> Self {
        Self(DEFAULT_FUSION_WEIGHT)
    }
}

/// `a · A_x + (1 − a) · A_s`, clamped to [−1, 1].
pub fn fuse(speaker: &SimilarityMatrix, spatial: &SimilarityMatrix, a: FusionWeight) -> Result<SimilarityMatrix> {
    if speaker.size != spatial.size {
        return Err(Error::ShapeMismatch(format!(
            "cannot fuse {}x{0} with {}x{1}",
            speaker.size, spatial.size
        )));
    }
    let a = a.value();
    let values = speaker
        .values
        .iter()
        .zip(&spatial.values)
        .map(|(x, s)| (a * x + (1.0 - a) * s).clamp(-1.0, 1.0))
        .collect();
    Ok(SimilarityMatrix {
        size: speaker.size,
        values,
        kind: SimilarityKind::Fused,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    pub k: usize,
    pub chosen_p: usize,
    pub eigengaps: Vec<f64>,
}

/// Row-wise top-`p` binarization (diagonal excluded, strictly positive
/// entries only), symmetrized by averaging.
pub fn binarize_top_p(a: &SimilarityMatrix, p: usize) -> DMatrix<f64> {
    let m = a.size();
    let mut b = DMatrix::<f64>::zeros(m, m);
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        order.clear();
        order.extend((0..m).filter(|&j| j != i));
        order.sort_by(|&x, &y| a.get(i, y).max(0.0).total_cmp(&a.get(i, x).max(0.0)).then(x.cmp(&y)));
        for &j in order.iter().take(p) {
            if a.get(i, j) > 0.0 {
                b[(i, j)] = 1.0;
            }
        }
    }
    (&b + b.transpose()) * 0.5
}

pub fn laplacian(affinity: &DMatrix<f64>) -> DMatrix<f64> {
    let m = affinity.nrows();
    let mut l = -affinity.clone();
    for i in 0..m {
        l[(i, i)] = 0.0;
        let degree: f64 = (0..m).filter(|&j| j != i).map(|j| affinity[(i, j)]).sum();
        l[(i, i)] = degree;
    }
    l
}

/// Ascending eigenpairs of a symmetric matrix.
fn sorted_eigen(l: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(l);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), idx.len(), |r, c| eig.eigenvectors[(r, idx[c])]);
    (values, vectors)
}

/// Per-`p` statistics of the sweep.
#[derive(Debug, Clone)]
struct Sweep {
    p: usize,
    ratio: f64,
    gaps: Vec<f64>,
    lambdas: Vec<f64>,
    vectors: DMatrix<f64>,
}

fn sweep_one(a: &SimilarityMatrix, p: usize, max_speakers: usize) -> Sweep {
    let m = a.size();
    let (lambdas, vectors) = sorted_eigen(laplacian(&binarize_top_p(a, p)));
    let kmax = max_speakers.min(m - 1);
    let gaps: Vec<f64> = (0..kmax).map(|k| lambdas[k + 1] - lambdas[k]).collect();
    let lambda_max = lambdas.last().copied().unwrap_or(0.0);
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    let g = max_gap / (lambda_max + 1e-10);
    let ratio = if g > 0.0 { p as f64 / (m as f64 * g) } else { f64::INFINITY };
    Sweep {
        p,
        ratio,
        gaps,
        lambdas,
        vectors,
    }
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn nme_sc(a: &SimilarityMatrix, max_speakers: usize) -> Result<ClusterResult> {
    let m = a.size();
    if m == 0 {
        return Err(Error::InvalidArgument("cannot cluster an empty matrix".into()));
    }
    if max_speakers == 0 {
        return Err(Error::InvalidArgument("max_speakers must be at least 1".into()));
    }
    let single = |chosen_p| ClusterResult {
        labels: vec![0; m],
        k: 1,
        chosen_p,
        eigengaps: Vec::new(),
    };
    if m == 1 {
        return Ok(single(0));
    }
    // degenerate affinity: everything maximally similar
    if a.values().iter().all(|&v| v >= 1.0 - 1e-12) {
        return Ok(single(0));
    }
    let max_speakers = max_speakers.min(m);
    let p_max = m.div_ceil(2).min(m - 1);
    let sweeps: Vec<Sweep> = (1..=p_max)
        .into_par_iter()
        .map(|p| sweep_one(a, p, max_speakers))
        .collect();
    let best = sweeps
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if s.ratio < sweeps[best].ratio { i } else { best });
    let chosen = &sweeps[best];

    let k = if max_speakers == 1 {
        1
    } else if chosen.gaps.iter().all(|&g| g <= 1e-10) {
        // no spectral structure at all: the graph is edgeless (or nearly),
        // fall back to its connected components
        let zero = 1e-9 * chosen.lambdas.last().copied().unwrap_or(0.0).max(1.0);
        chosen.lambdas.iter().filter(|&&l| l.abs() <= zero).count().clamp(1, max_speakers)
    } else {
        argmax(&chosen.gaps) + 1
    };

    let labels = if k == 1 {
        vec![0; m]
    } else {
        let embedding: Vec<Vec<f64>> = (0..m)
            .map(|r| {
                let row: Vec<f64> = (0..k).map(|c| chosen.vectors[(r, c)]).collect();
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter().map(|v| v / norm).collect()
                } else {
                    row
                }
            })
            .collect();
        kmeans(&embedding, k, KMEANS_SEED, KMEANS_RESTARTS, KMEANS_MAX_ITER)
    };
    let labels = relabel_by_first_appearance(&labels);
    let k = labels.iter().max().map_or(1, |&l| l + 1);
    Ok(ClusterResult {
        labels,
        k,
        chosen_p: chosen.p,
        eigengaps: chosen.gaps.clone(),
    })
}

pub fn relabel_by_first_appearance(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = Vec::new();
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if map.len() <= l {
                map.resize(l + 1, None);
            }
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means with k-means++ seeding; the restart with the lowest inertia
/// wins, ties going to the earlier restart.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize, max_iter: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..restarts.max(1)).map(|_| rng.gen()).collect();
    let runs: Vec<(f64, Vec<usize>)> = seeds
        .par_iter()
        .map(|&s| kmeans_once(points, k, s, max_iter))
        .collect();
    runs.into_iter()
        .fold(None::<(f64, Vec<usize>)>, |best, run| match best {
            Some(b) if b.0 <= run.0 => Some(b),
            _ => Some(run),
        })
        .map(|(_, labels)| labels)
        .unwrap_or_default()
}

fn kmeans_once(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> (f64, Vec<usize>) {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centers.last().unwrap()));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (l, p) in labels.iter_mut().zip(points) {
            let best = (0..k)
                .map(|c| sq_dist(p, &centers[c]))
                .enumerate()
                .fold((0, f64::INFINITY), |b, (c, d)| if d < b.1 { (c, d) } else { b })
                .0;
            if *l != best {
                *l = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dim = points[0].len();
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            *center = (0..dim)
                .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                .collect();
        }
    }
    let inertia = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
    (inertia, labels)
}

pub fn speaker_name(label: usize) -> String {
    format!("spk{label}")
}

/// The part of each window it owns once consecutive overlapping windows
/// are cut at the middle of their overlap.
pub fn window_spans(windows: &[Region]) -> Vec<Region> {
    let n = windows.len();
    (0..n)
        .map(|i| {
            let w = windows[i];
            let left = if i > 0 && w.start <= windows[i - 1].end {
                0.5 * (w.start + windows[i - 1].end)
            } else {
                w.start
            };
            let right = if i + 1 < n && windows[i + 1].start <= w.end {
                0.5 * (windows[i + 1].start + w.end)
            } else {
                w.end
            };
            Region::new(left, right.max(left))
        })
        .collect()
}

/// Turns per-window labels into segments over [`window_spans`];
/// same-label neighbours merge.
pub fn assign_labels(labels: &[usize], windows: &[Region]) -> Result<Annotation> {
    if labels.len() != windows.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: windows.len(),
        });
    }
    let segments = window_spans(windows)
        .into_iter()
        .zip(labels)
        .filter(|(r, _)| r.end > r.start)
        .map(|(r, &l)| Segment::new(r.start, r.end, speaker_name(l)))
        .collect();
    Ok(Annotation::new(segments).normalized())
}
