//! Constant-velocity Kalman filter over `(x, y, vx, vy)` used by the
//! baseline occlusion policy. Time unit is one frame.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::types::Position2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvKalmanConfig {
    /// Acceleration noise standard deviation, meters per frame squared.
    pub process_noise: f64,
    /// Position measurement standard deviation, meters.
    pub observation_noise: f64,
}

impl Default for CvKalmanConfig {
    fn default() -> Self {
        Self { process_noise: 0.1, observation_noise: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvKalman {
    config: CvKalmanConfig,
    x: Vector4<f64>,
    p: Matrix4<f64>,
    observations: usize,
}

impl CvKalman {
    fn transition() -> Matrix4<f64> {
        Matrix4::new(1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    }

    fn process_cov(&self) -> Matrix4<f64> {
        let s = self.config.process_noise * self.config.process_noise;
        Matrix4::new(
            0.25, 0.0, 0.5, 0.0, 0.0, 0.25, 0.0, 0.5, 0.5, 0.0, 1.0, 0.0, 0.0, 0.5, 0.0, 1.0,
        ) * s
    }

    /// Starts at the first observed position with unknown velocity.
    pub fn new(config: CvKalmanConfig, first: Position2) -> Self {
        let r = config.observation_noise * config.observation_noise;
        Self {
            config,
            x: Vector4::new(first.x, first.y, 0.0, 0.0),
            p: Matrix4::from_diagonal(&Vector4::new(r, r, 1e6, 1e6)),
            observations: 1,
        }
    }

    pub fn position(&self) -> Position2 {
        Position2::new(self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.x[2], self.x[3]]
    }

    pub fn predict(&mut self) {
        let f = Self::transition();
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + self.process_cov();
    }

    /// Call after [`CvKalman::predict`] for the observation's frame.
    pub fn update(&mut self, z: Position2) {
        let r = self.config.observation_noise * self.config.observation_noise;
        if self.observations == 1 {
            // Two-point initialization: velocity from the first difference.
            let prev = Vector2::new(self.x[0] - self.x[2], self.x[1] - self.x[3]);
            self.x = Vector4::new(z.x, z.y, z.x - prev[0], z.y - prev[1]);
            self.p = Matrix4::new(r, 0.0, r, 0.0, 0.0, r, 0.0, r, r, 0.0, 2.0 * r, 0.0, 0.0, r, 0.0, 2.0 * r);
        } else {
            let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
            let s = h * self.p * h.transpose() + Matrix2::identity() * r;
            let s_inv = s.try_inverse().expect("observation noise keeps S invertible");
            let k = self.p * h.transpose() * s_inv;
            let innovation = Vector2::new(z.x, z.y) - h * self.x;
            self.x += k * innovation;
            let m = Matrix4::identity() - k * h;
            self.p = m * self.p * m.transpose() + k * k.transpose() * r;
        }
        self.observations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_velocity_tracks_exactly() {
        let mut kf = CvKalman::new(CvKalmanConfig::default(), Position2::new(1.0, 2.0));
        for t in 1..6 {
            kf.predict();
            kf.update(Position2::new(1.0 + 0.5 * t as f64, 2.0 - 0.25 * t as f64));
        }
        assert_eq!(kf.velocity(), [0.5, -0.25]);
        for t in 6..12 {
            kf.predict();
            let p = kf.position();
            assert!((p.x - (1.0 + 0.5 * t as f64)).abs() < 1e-12);
            assert!((p.y - (2.0 - 0.25 * t as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_observations_are_smoothed() {
        let mut kf = CvKalman::new(CvKalmanConfig::default(), Position2::new(0.0, 0.0));
        for t in 1..40 {
            kf.predict();
            let noise = if t % 2 == 0 { 0.05 } else { -0.05 };
            kf.update(Position2::new(t as f64 + noise, 0.0));
        }
        assert!((kf.velocity()[0] - 1.0).abs() < 0.1);
    }
}
