//! Superdirective beamformer design.
//!
//! Narrowband weights minimize diffuse-noise output power `hᴴ R h` subject
//! to `hᴴ d(ω, θ₀) = 1`, giving `h = R̃⁻¹d / (dᴴR̃⁻¹d)` with a diagonally
//! loaded covariance `R̃ = R + λI`. Broadband filters are obtained by
//! frequency sampling on the K-point DFT grid.
//!
//! The time-domain filter for channel `c` realizes `conj(h_c(ω))`, so that
//! `y = Σ_c taps_c * x_c` equals `Hᴴ X` in the frequency domain.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::array::{diffuse_noise_covariance, steering_vector, ArrayGeometry, DEFAULT_SOUND_SPEED};
use crate::error::{Error, Result};

pub const DEFAULT_DIRECTIONS: usize = 120;
pub const DEFAULT_TAPS: usize = 128;
/// Diagonal loading used when none is configured: `1e-3 · trace(R)/C`,
/// and the diffuse coherence matrix has unit diagonal.
pub const DEFAULT_LOADING: f64 = 1e-3;
pub const MAX_CONDITION: f64 = 1e12;

const BANK_MAGIC: &[u8; 4] = b"SDBK";
const BANK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NarrowbandWeights {
    pub omega: f64,
    pub theta0: f64,
    pub h: Vec<Complex64>,
}

impl NarrowbandWeights {
    /// `hᴴ v`.
    pub fn inner(&self, v: &[Complex64]) -> Complex64 {
        self.h.iter().zip(v).map(|(h, v)| h.conj() * v).sum()
    }

    /// Output power for noise with covariance `r`: `hᴴ R h`.
    pub fn noise_power(&self, r: &DMatrix<f64>) -> f64 {
        let c = self.h.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..c {
            for j in 0..c {
                acc += self.h[i].conj() * r[(i, j)] * self.h[j];
            }
        }
        acc.re
    }
}

/// Delay-and-sum weights `d / C`.
pub fn delay_and_sum(geom: &ArrayGeometry, omega: f64, theta0: f64) -> NarrowbandWeights {
    let d = steering_vector(geom, omega, theta0);
    let scale = 1.0 / geom.mic_count() as f64;
    NarrowbandWeights {
        omega,
        theta0,
        h: d.values.iter().map(|v| v * scale).collect(),
    }
}

pub fn design_narrowband(geom: &ArrayGeometry, omega: f64, theta0: f64, loading: f64) -> Result<NarrowbandWeights> {
    if !(omega >= 0.0) {
        return Err(Error::InvalidArgument(format!("omega must be non-negative, got {omega}")));
    }
    if !(loading >= 0.0) {
        return Err(Error::InvalidArgument(format!("loading must be non-negative, got {loading}")));
    }
    let c = geom.mic_count();
    let mut r = diffuse_noise_covariance(geom, omega).matrix;
    for i in 0..c {
        r[(i, i)] += loading;
    }

    let eig = r.symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::SingularCovariance { condition });
    }
    let chol = r
        .cholesky()
        .ok_or(Error::SingularCovariance { condition })?;

    let d = steering_vector(geom, omega, theta0).values;
    let re = chol.solve(&DVector::from_iterator(c, d.iter().map(|v| v.re)));
    let im = chol.solve(&DVector::from_iterator(c, d.iter().map(|v| v.im)));
    let x: Vec<Complex64> = (0..c).map(|i| Complex64::new(re[i], im[i])).collect();
    let denom: Complex64 = d.iter().zip(&x).map(|(d, x)| d.conj() * x).sum();
    Ok(NarrowbandWeights {
        omega,
        theta0,
        h: x.iter().map(|v| v / denom).collect(),
    })
}

/// Angular frequency of DFT bin `f` for a `k`-point grid.
pub fn bin_omega(f: usize, k: usize, sample_rate: f64) -> f64 {
    TAU * f as f64 * sample_rate / k as f64
}

/// Per-channel FIR taps (`C × K`) for look direction `theta0`.
pub fn realize_fir(geom: &ArrayGeometry, theta0: f64, k: usize, loading: f64) -> Result<Vec<Vec<f64>>> {
    if k < 8 || k % 2 != 0 {
        return Err(Error::InvalidArgument(format!("tap count must be even and at least 8, got {k}")));
    }
    let c = geom.mic_count();
    let half = k / 2;
    // spectrum[c][f] for f in 0..=K/2
    let mut spectrum = vec![vec![Complex64::new(0.0, 0.0); half + 1]; c];
    for f in 0..=half {
        let omega = bin_omega(f, k, geom.sample_rate());
        let w = if f == 0 || f == half {
            delay_and_sum(geom, omega, theta0)
        } else {
            design_narrowband(geom, omega, theta0, loading)?
        };
        // causal shift of K/2 samples: exp(-j ω K/2 / fs) = (-1)^f
        let shift = if f % 2 == 0 { 1.0 } else { -1.0 };
        for ch in 0..c {
            let mut v = w.h[ch].conj() * shift;
            if f == 0 || f == half {
                v = Complex64::new(v.re, 0.0);
            }
            spectrum[ch][f] = v;
        }
    }

    let taps = spectrum
        .iter()
        .map(|spec| {
            (0..k)
                .map(|n| {
                    let mut acc = spec[0].re + spec[half].re * if n % 2 == 0 { 1.0 } else { -1.0 };
                    for (f, v) in spec.iter().enumerate().take(half).skip(1) {
                        let phase = TAU * (f * n % k) as f64 / k as f64;
                        acc += 2.0 * (v * Complex64::from_polar(1.0, phase)).re;
                    }
                    acc / k as f64
                })
                .collect()
        })
        .collect();
    Ok(taps)
}

/// Frequency response `Σ_k taps[k] e^{-jωk/fs}`.
pub fn fir_response(taps: &[f64], omega: f64, sample_rate: f64) -> Complex64 {
    taps.iter()
        .enumerate()
        .map(|(k, &t)| Complex64::from_polar(t, -omega * k as f64 / sample_rate))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerBank {
    taps: Vec<f64>,
    directions: usize,
    channels: usize,
    len: usize,
    look_directions: Vec<f64>,
    geom: ArrayGeometry,
}

impl BeamformerBank {
    /// Builds a bank from raw `(n, c, k)`-ordered taps.
    pub fn from_taps(geom: ArrayGeometry, directions: usize, len: usize, taps: Vec<f64>) -> Result<Self> {
        let channels = geom.mic_count();
        if directions == 0 {
            return Err(Error::InvalidArgument("bank needs at least one direction".into()));
        }
        if taps.len() != directions * channels * len {
            return Err(Error::ShapeMismatch(format!(
                "expected {directions}x{channels}x{len} taps, got {}",
                taps.len()
            )));
        }
        Ok(Self {
            taps,
            directions,
            channels,
            len,
            look_directions: uniform_directions(directions),
            geom,
        })
    }

    pub fn directions(&self) -> usize {
        self.directions
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn taps_len(&self) -> usize {
        self.len
    }

    pub fn look_directions(&self) -> &[f64] {
        &self.look_directions
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geom
    }

    pub fn filter(&self, n: usize, c: usize) -> &[f64] {
        let start = (n * self.channels + c) * self.len;
        &self.taps[start..start + self.len]
    }

    pub fn raw_taps(&self) -> &[f64] {
        &self.taps
    }

    /// Spatial response of direction `n` at `omega`, with the causal
    /// `K/2` delay removed.
    pub fn response(&self, n: usize, omega: f64, theta: f64) -> Complex64 {
        let fs = self.geom.sample_rate();
        let d = steering_vector(&self.geom, omega, theta).values;
        let undelay = Complex64::from_polar(1.0, omega * (self.len / 2) as f64 / fs);
        (0..self.channels)
            .map(|c| fir_response(self.filter(n, c), omega, fs) * d[c])
            .sum::<Complex64>()
            * undelay
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(BANK_MAGIC)?;
        w.write_all(&BANK_VERSION.to_le_bytes())?;
        w.write_all(&(self.directions as u32).to_le_bytes())?;
        w.write_all(&(self.channels as u32).to_le_bytes())?;
        w.write_all(&(self.len as u32).to_le_bytes())?;
        w.write_all(&self.geom.sample_rate().to_le_bytes())?;
        w.write_all(&self.geom.radius().to_le_bytes())?;
        for v in &self.taps {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// The file format does not carry the speed of sound; 343 m/s is assumed.
    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let corrupt = |what: &str| Error::CorruptHeader(format!("beamformer bank: {what}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated magic"))?;
        if &magic != BANK_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut u = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut u).map_err(|_| corrupt("truncated header"))?;
            Ok(u32::from_le_bytes(u))
        };
        let version = read_u32(&mut r)?;
        if version != BANK_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        let c = read_u32(&mut r)? as usize;
        let k = read_u32(&mut r)? as usize;
        let mut f = [0u8; 8];
        r.read_exact(&mut f).map_err(|_| corrupt("truncated header"))?;
        let sample_rate = f64::from_le_bytes(f);
        r.read_exact(&mut f).map_err(|_| corrupt("truncated header"))?;
        let radius = f64::from_le_bytes(f);
        let geom = ArrayGeometry::circular(c, radius, sample_rate, DEFAULT_SOUND_SPEED)?;
        let mut taps = Vec::with_capacity(n * c * k);
        for _ in 0..n * c * k {
            r.read_exact(&mut f).map_err(|_| corrupt("truncated tap data"))?;
            taps.push(f64::from_le_bytes(f));
        }
        Self::from_taps(geom, n, k, taps)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(36 + self.taps.len() * 8);
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(bytes.as_slice())
    }
}

pub fn uniform_directions(n: usize) -> Vec<f64> {
    (0..n).map(|i| TAU * i as f64 / n as f64).collect()
}

pub fn build_bank(geom: &ArrayGeometry, directions: usize, k: usize, loading: f64) -> Result<BeamformerBank> {
    if directions == 0 {
        return Err(Error::InvalidArgument("bank needs at least one direction".into()));
    }
    let per_dir: Vec<Vec<Vec<f64>>> = uniform_directions(directions)
        .into_par_iter()
        .map(|theta| realize_fir(geom, theta, k, loading))
        .collect::<Result<_>>()?;
    let taps = per_dir.into_iter().flatten().flatten().collect();
    BeamformerBank::from_taps(geom.clone(), directions, k, taps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beampattern {
    pub omega: f64,
    pub grid: Vec<f64>,
    pub response: Vec<Complex64>,
}

impl Beampattern {
    /// Mean `|B|²` over grid points farther than `exclude` radians from `theta0`.
    pub fn off_look_power(&self, theta0: f64, exclude: f64) -> f64 {
        let (sum, count) = self
            .grid
            .iter()
            .zip(&self.response)
            .filter(|(&t, _)| angular_distance(t, theta0) > exclude)
            .fold((0.0, 0usize), |(s, n), (_, r)| (s + r.norm_sqr(), n + 1));
        sum / count.max(1) as f64
    }
}

pub fn beampattern(weights: &NarrowbandWeights, geom: &ArrayGeometry, grid: &[f64]) -> Result<Beampattern> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("beampattern grid is empty".into()));
    }
    let response = grid
        .iter()
        .map(|&theta| weights.inner(&steering_vector(geom, weights.omega, theta).values))
        .collect();
    Ok(Beampattern {
        omega: weights.omega,
        grid: grid.to_vec(),
        response,
    })
}

pub fn uniform_grid(points: usize) -> Vec<f64> {
    uniform_directions(points)
}

pub(crate) fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::default_circular()
    }

    /// Gaussian elimination with partial pivoting on a complex system.
    fn gauss_solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
        let n = b.len();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].norm().partial_cmp(&a[j][col].norm()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in col + 1..n {
                let factor = a[row][col] / a[col][col];
                for k in col..n {
                    let sub = factor * a[col][k];
                    a[row][k] -= sub;
                }
                let sub = factor * b[col];
                b[row] -= sub;
            }
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for row in (0..n).rev() {
            let mut acc = b[row];
            for k in row + 1..n {
                acc -= a[row][k] * x[k];
            }
            x[row] = acc / a[row][row];
        }
        x
    }

    #[test]
    fn matches_independent_dense_solver() {
        let g = geom();
        let omega = TAU * 2000.0;
        let loading = 1e-3;
        let h = design_narrowband(&g, omega, 0.0, loading).unwrap();

        let c = g.mic_count();
        let mut a = vec![vec![Complex64::new(0.0, 0.0); c]; c];
        for i in 0..c {
            for j in 0..c {
                let d = g.mic_distance(i, j);
                let x = omega * d / g.sound_speed();
                let s = if i == j { 1.0 } else { x.sin() / x };
                a[i][j] = Complex64::new(s + if i == j { loading } else { 0.0 }, 0.0);
            }
        }
        let d: Vec<Complex64> = (0..c)
            .map(|ch| {
                let tau = -(g.radius() / g.sound_speed()) * (0.0 - g.mic_angles()[ch]).cos();
                Complex64::from_polar(1.0, -omega * tau)
            })
            .collect();
        let x = gauss_solve(a, d.clone());
        let denom: Complex64 = d.iter().zip(&x).map(|(d, x)| d.conj() * x).sum();
        for (got, want) in h.h.iter().zip(x.iter().map(|v| v / denom)) {
            assert!((got - want).norm() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn identity_covariance_gives_delay_and_sum() {
        let g = geom();
        let omega = TAU * 1234.0;
        let h = design_narrowband(&g, omega, 0.7, 1e9).unwrap();
        let das = delay_and_sum(&g, omega, 0.7);
        for (a, b) in h.h.iter().zip(&das.h) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn distortionless_for_any_look_direction() {
        let g = geom();
        for &(f, theta) in &[(300.0, 0.0), (1000.0, 1.0), (4000.0, 4.5), (7900.0, 2.2)] {
            let omega = TAU * f;
            let h = design_narrowband(&g, omega, theta, DEFAULT_LOADING).unwrap();
            let d = steering_vector(&g, omega, theta);
            assert!((h.inner(&d.values) - 1.0).norm() <= 1e-8);
        }
    }

    #[test]
    fn unloaded_low_frequency_is_singular() {
        let g = geom();
        let err = design_narrowband(&g, TAU * 20.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::SingularCovariance { .. }));
    }

    #[test]
    fn rejects_bad_tap_counts() {
        assert!(realize_fir(&geom(), 0.0, 7, DEFAULT_LOADING).is_err());
        assert!(realize_fir(&geom(), 0.0, 6, DEFAULT_LOADING).is_err());
    }

    #[test]
    fn delay_and_sum_fir_peaks_at_alignment_delay() {
        let g = geom();
        let taps = realize_fir(&g, 0.0, 128, 1e9).unwrap();
        for (c, t) in taps.iter().enumerate() {
            let peak = t
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            // the filter delays channel c by -τ_c to align it with the center
            let tau = g.delay(c, 0.0);
            let expected = 64.0 - tau * g.sample_rate();
            assert!((peak as f64 - expected).abs() <= 0.5 + 1e-9, "channel {c}: peak {peak}, expected {expected}");
        }
    }

    #[test]
    fn fir_reproduces_design_at_bins() {
        let g = geom();
        let k = 128;
        let taps = realize_fir(&g, 0.4, k, DEFAULT_LOADING).unwrap();
        for f in 1..k / 2 {
            let omega = bin_omega(f, k, g.sample_rate());
            let h = design_narrowband(&g, omega, 0.4, DEFAULT_LOADING).unwrap();
            for c in 0..g.mic_count() {
                let got = fir_response(&taps[c], omega, g.sample_rate());
                let want = h.h[c].conj() * Complex64::from_polar(1.0, -omega * (k / 2) as f64 / g.sample_rate());
                assert!((got - want).norm() < 1e-9, "bin {f} ch {c}");
            }
        }
    }

    #[test]
    fn full_size_configuration_shape() {
        let g = geom();
        let taps = realize_fir(&g, 0.0, 128, DEFAULT_LOADING).unwrap();
        assert_eq!(taps.len(), 8);
        assert!(taps.iter().all(|t| t.len() == 128));
    }

    #[test]
    fn single_direction_bank_equals_realize_fir() {
        let g = geom();
        let bank = build_bank(&g, 1, 32, DEFAULT_LOADING).unwrap();
        let taps = realize_fir(&g, 0.0, 32, DEFAULT_LOADING).unwrap();
        for c in 0..8 {
            assert_eq!(bank.filter(0, c), taps[c].as_slice());
        }
    }

    #[test]
    fn bank_is_rotationally_symmetric() {
        let g = geom();
        let n = 16;
        let bank = build_bank(&g, n, 64, DEFAULT_LOADING).unwrap();
        let step = n / g.mic_count();
        for dir in (0..n).step_by(step) {
            let shift = dir / step;
            for c in 0..g.mic_count() {
                let src = (c + g.mic_count() - shift) % g.mic_count();
                for (a, b) in bank.filter(dir, c).iter().zip(bank.filter(0, src)) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn bank_file_round_trip() {
        let g = geom();
        let bank = build_bank(&g, 4, 16, DEFAULT_LOADING).unwrap();
        let mut buf = Vec::new();
        bank.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SDBK");
        assert_eq!(buf.len(), 4 + 4 * 4 + 16 + 4 * 8 * 16 * 8);
        let back = BeamformerBank::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, bank);
        assert!(BeamformerBank::read_from(&buf[..40]).is_err());
    }

    #[test]
    fn delay_and_sum_pattern_bounded() {
        let g = geom();
        let w = delay_and_sum(&g, TAU * 3000.0, 1.0);
        let p = beampattern(&w, &g, &uniform_grid(360)).unwrap();
        assert!(p.response.iter().all(|r| r.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn pattern_is_unity_at_look_direction() {
        let g = geom();
        let theta0 = uniform_grid(360)[45];
        let w = design_narrowband(&g, TAU * 1500.0, theta0, DEFAULT_LOADING).unwrap();
        let p = beampattern(&w, &g, &uniform_grid(360)).unwrap();
        assert!((p.response[45].norm() - 1.0).abs() <= 1e-8);
        assert!(beampattern(&w, &g, &[]).is_err());
    }

    #[test]
    fn superdirective_beats_delay_and_sum_off_look() {
        let g = geom();
        let omega = TAU * 500.0;
        let grid = uniform_grid(360);
        let sdb = beampattern(&design_narrowband(&g, omega, 0.0, DEFAULT_LOADING).unwrap(), &g, &grid).unwrap();
        let das = beampattern(&delay_and_sum(&g, omega, 0.0), &g, &grid).unwrap();
        // trapezoid rule on a periodic grid is the plain mean
        let exclude = TAU / 36.0;
        assert!(sdb.off_look_power(0.0, exclude) < das.off_look_power(0.0, exclude));
    }

    #[test]
    fn superdirective_minimizes_diffuse_power() {
        let g = geom();
        for f in 1..64 {
            let omega = bin_omega(f, 128, g.sample_rate());
            let r = diffuse_noise_covariance(&g, omega).matrix;
            let sdb = design_narrowband(&g, omega, 0.3, DEFAULT_LOADING).unwrap();
            let das = delay_and_sum(&g, omega, 0.3);
            assert!(sdb.noise_power(&r) <= das.noise_power(&r) + 1e-12, "bin {f}");
        }
    }

    #[test]
    fn large_loading_converges_to_delay_and_sum() {
        let g = geom();
        let omega = TAU * 800.0;
        let h = design_narrowband(&g, omega, 2.0, 1e6).unwrap();
        let das = delay_and_sum(&g, omega, 2.0);
        let err: f64 = h.h.iter().zip(&das.h).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err <= 1e-6);
    }
}
