//! Uniform circular microphone array model.
//!
//! Far-field plane-wave steering vectors and the spherically isotropic
//! (diffuse) noise coherence matrix used by the superdirective designer.
//! Delays are referenced to the array center; a wave arriving from
//! direction `theta` reaches the microphone facing `theta` first.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RADIUS_M: f64 = 0.05;
pub const DEFAULT_SOUND_SPEED: f64 = 343.0;
pub const DEFAULT_SAMPLE_RATE: f64 = 16_000.0;
pub const DEFAULT_MIC_COUNT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    mic_count: usize,
    radius: f64,
    mic_angles: Vec<f64>,
    sample_rate: f64,
    sound_speed: f64,
}

impl ArrayGeometry {
    /// Uniform circular array with microphone `c` at angle `2πc/C`.
    pub fn circular(mic_count: usize, radius: f64, sample_rate: f64, sound_speed: f64) -> Result<Self> {
        if mic_count < 2 {
            return Err(Error::InvalidGeometry(format!("need at least 2 microphones, got {mic_count}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGeometry(format!("radius must be positive, got {radius}")));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidGeometry(format!("sample rate must be positive, got {sample_rate}")));
        }
        if !(sound_speed > 0.0 && sound_speed.is_finite()) {
            return Err(Error::InvalidGeometry(format!("sound speed must be positive, got {sound_speed}")));
        }
        let mic_angles = (0..mic_count).map(|c| TAU * c as f64 / mic_count as f64).collect();
        Ok(Self {
            mic_count,
            radius,
            mic_angles,
            sample_rate,
            sound_speed,
        })
    }

    /// 8 microphones, 5 cm radius, 16 kHz, 343 m/s.
    pub fn default_circular() -> Self {
        Self::circular(DEFAULT_MIC_COUNT, DEFAULT_RADIUS_M, DEFAULT_SAMPLE_RATE, DEFAULT_SOUND_SPEED)
            .expect("default geometry is valid")
    }

    pub fn mic_count(&self) -> usize {
        self.mic_count
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn mic_angles(&self) -> &[f64] {
        &self.mic_angles
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    pub fn mic_position(&self, c: usize) -> (f64, f64) {
        let phi = self.mic_angles[c];
        (self.radius * phi.cos(), self.radius * phi.sin())
    }

    pub fn mic_distance(&self, i: usize, j: usize) -> f64 {
        let (xi, yi) = self.mic_position(i);
        let (xj, yj) = self.mic_position(j);
        (xi - xj).hypot(yi - yj)
    }

    /// Arrival delay (seconds) at microphone `c` relative to the array
    /// center for an in-plane far-field source at azimuth `theta`.
    pub fn delay(&self, c: usize, theta: f64) -> f64 {
        -(self.radius / self.sound_speed) * (theta - self.mic_angles[c]).cos()
    }

    /// Delay for a source at azimuth `theta` and elevation `elevation`.
    pub fn delay_3d(&self, c: usize, theta: f64, elevation: f64) -> f64 {
        self.delay(c, theta) * elevation.cos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub omega: f64,
    pub theta: f64,
    pub values: Vec<Complex64>,
}

/// `d(ω, θ)[c] = exp(-j ω τ_c(θ))`.
pub fn steering_vector(geom: &ArrayGeometry, omega: f64, theta: f64) -> SteeringVector {
    let theta = theta.rem_euclid(TAU);
    let values = (0..geom.mic_count())
        .map(|c| Complex64::from_polar(1.0, -omega * geom.delay(c, theta)))
        .collect();
    SteeringVector { omega, theta, values }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCovariance {
    pub omega: f64,
    /// Real symmetric coherence matrix (the diffuse model has no imaginary part).
    pub matrix: DMatrix<f64>,
}

pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Spherically isotropic noise coherence `sinc(ω d_ij / c)`.
pub fn diffuse_noise_covariance(geom: &ArrayGeometry, omega: f64) -> NoiseCovariance {
    let c = geom.mic_count();
    let matrix = DMatrix::from_fn(c, c, |i, j| {
        if i == j {
            1.0
        } else {
            sinc(omega * geom.mic_distance(i, j) / geom.sound_speed())
        }
    });
    NoiseCovariance { omega, matrix }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_invalid_geometry() {
        assert!(ArrayGeometry::circular(1, 0.05, 16000.0, 343.0).is_err());
        assert!(ArrayGeometry::circular(8, 0.0, 16000.0, 343.0).is_err());
        assert!(ArrayGeometry::circular(8, 0.05, 0.0, 343.0).is_err());
    }

    #[test]
    fn mic_angles_increase_in_unit_circle() {
        let g = ArrayGeometry::default_circular();
        let a = g.mic_angles();
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a[0] >= 0.0 && *a.last().unwrap() < TAU);
    }

    #[test]
    fn zero_frequency_steering_is_all_ones() {
        let g = ArrayGeometry::default_circular();
        for theta in [0.0, 1.3, -2.0] {
            let d = steering_vector(&g, 0.0, theta);
            for v in d.values {
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn facing_mic_leads() {
        let g = ArrayGeometry::default_circular();
        let omega = TAU * 700.0;
        let d = steering_vector(&g, omega, g.mic_angles()[0]);
        let expected = omega * g.radius() / g.sound_speed();
        assert!((d.values[0].arg() - expected).abs() < 1e-12);
    }

    #[test]
    fn steering_phases_match_hand_computation() {
        let g = ArrayGeometry::circular(8, 0.05, 16000.0, 343.0).unwrap();
        let omega = TAU * 1000.0;
        let d = steering_vector(&g, omega, 0.0);
        for c in 0..8 {
            let phi = 2.0 * PI * c as f64 / 8.0;
            let tau = -(0.05 / 343.0) * (0.0 - phi).cos();
            let re = (-omega * tau).cos();
            let im = (-omega * tau).sin();
            assert!((d.values[c].re - re).abs() < 1e-12);
            assert!((d.values[c].im - im).abs() < 1e-12);
        }
    }

    #[test]
    fn diffuse_covariance_zero_frequency_is_all_ones() {
        let g = ArrayGeometry::default_circular();
        let r = diffuse_noise_covariance(&g, 0.0);
        assert!(r.matrix.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn diffuse_covariance_first_null() {
        // two mics 0.1 m apart: radius 0.05 puts them diametrically opposite
        let g = ArrayGeometry::circular(2, 0.05, 16000.0, 343.0).unwrap();
        let omega = TAU * 1715.0;
        assert!((omega * 0.1 / 343.0 - PI).abs() < 1e-12);
        let r = diffuse_noise_covariance(&g, omega);
        assert_eq!(r.matrix[(0, 0)], 1.0);
        assert!(r.matrix[(0, 1)].abs() <= 1e-12);
        assert!(r.matrix[(1, 0)].abs() <= 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn steering_unit_modulus_and_periodic(omega in 0.0f64..(TAU * 8000.0), theta in -20.0f64..20.0) {
                let g = ArrayGeometry::default_circular();
                let d = steering_vector(&g, omega, theta);
                let shifted = steering_vector(&g, omega, theta + TAU);
                for (a, b) in d.values.iter().zip(&shifted.values) {
                    prop_assert!((a.norm() - 1.0).abs() < 1e-12);
                    prop_assert!((a - b).norm() < 1e-12);
                }
            }

            #[test]
            fn diffuse_covariance_is_psd(omega in 0.0f64..(TAU * 8000.0)) {
                let g = ArrayGeometry::default_circular();
                let r = diffuse_noise_covariance(&g, omega).matrix;
                prop_assert!((&r - r.transpose()).amax() == 0.0);
                for i in 0..r.nrows() {
                    prop_assert_eq!(r[(i, i)], 1.0);
                }
                let eig = r.symmetric_eigenvalues();
                prop_assert!(eig.iter().all(|&l| l >= -1e-10));
            }
        }
    }
}
