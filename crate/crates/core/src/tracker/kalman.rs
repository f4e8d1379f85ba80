use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

use crate::{Error, Result};

/// Constant-velocity state `(px, py, vx, vy)` in metres and m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

impl KalmanState {
    /// State at `position` with zero mean velocity and diagonal covariance.
    pub fn at_rest(position: Vector2<f64>, position_std: f64, velocity_std: f64) -> Self {
        let (pv, vv) = (position_std * position_std, velocity_std * velocity_std);
        Self {
            mean: Vector4::new(position.x, position.y, 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::new(pv, pv, vv, vv)),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.mean[2], self.mean[3])
    }
}

fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// White-acceleration process noise for one step of length `dt`.
pub fn process_noise_matrix(dt: f64, intensity: f64) -> Matrix4<f64> {
    let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
    let mut q = Matrix4::zeros();
    for axis in 0..2 {
        q[(axis, axis)] = a;
        q[(axis, axis + 2)] = b;
        q[(axis + 2, axis)] = b;
        q[(axis + 2, axis + 2)] = c;
    }
    q * intensity
}

pub fn predict(state: &KalmanState, dt: f64, process_noise: f64) -> KalmanState {
    let f = transition(dt);
    KalmanState {
        mean: f * state.mean,
        covariance: symmetrize(&(f * state.covariance * f.transpose() + process_noise_matrix(dt, process_noise))),
    }
}

/// Innovation and its covariance for a position measurement.
pub fn innovation(state: &KalmanState, meas: &Vector2<f64>, meas_noise: &Matrix2<f64>) -> (Vector2<f64>, Matrix2<f64>) {
    let h = observation();
    (meas - h * state.mean, h * state.covariance * h.transpose() + meas_noise)
}

/// Mahalanobis distance of a measurement from the predicted position, or
/// `None` when the innovation covariance is not invertible.
pub fn mahalanobis(state: &KalmanState, meas: &Vector2<f64>, meas_noise: &Matrix2<f64>) -> Option<f64> {
    let (y, s) = innovation(state, meas, meas_noise);
    let s_inv = s.try_inverse()?;
    Some((y.transpose() * s_inv * y)[0].max(0.0).sqrt())
}

/// Kalman update with the posterior covariance in Joseph form.
pub fn update(state: &KalmanState, meas: &Vector2<f64>, meas_noise: &Matrix2<f64>) -> Result<KalmanState> {
    let h = observation();
    let (y, s) = innovation(state, meas, meas_noise);
    let s_inv = s.try_inverse().ok_or(Error::SingularInnovation)?;
    if !s_inv.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularInnovation);
    }
    let k = state.covariance * h.transpose() * s_inv;
    let a = Matrix4::identity() - k * h;
    let cov = a * state.covariance * a.transpose() + k * meas_noise * k.transpose();
    Ok(KalmanState {
        mean: state.mean + k * y,
        covariance: symmetrize(&cov),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(mean: [f64; 4], diag: f64) -> KalmanState {
        KalmanState {
            mean: Vector4::from(mean),
            covariance: Matrix4::identity() * diag,
        }
    }

    #[test]
    fn constant_velocity_prediction() {
        let s = predict(&state([0.0, 0.0, 1.0, 0.0], 1.0), 1.0, 0.5);
        assert_eq!(s.mean, Vector4::new(1.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn zero_noise_keeps_position_uncertainty() {
        let mut s = state([0.0; 4], 0.0);
        s.covariance[(0, 0)] = 0.3;
        s.covariance[(1, 1)] = 0.3;
        for _ in 0..5 {
            s = predict(&s, 0.2, 0.0);
        }
        assert!((s.covariance[(0, 0)] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn many_small_steps_equal_one_long_step_for_the_mean() {
        let s0 = state([1.0, -2.0, 0.3, 0.7], 1.0);
        let mut s = s0;
        for _ in 0..10 {
            s = predict(&s, 0.1, 0.5);
        }
        let once = predict(&s0, 1.0, 0.5);
        assert!((s.mean - once.mean).norm() < 1e-12);
    }

    #[test]
    fn exact_measurement_leaves_mean() {
        let s = state([1.0, 2.0, 0.5, 0.0], 1.0);
        let r = Matrix2::identity() * 0.01;
        let u = update(&s, &Vector2::new(1.0, 2.0), &r).unwrap();
        assert_eq!(u.mean, s.mean);
        let vague = update(&s, &Vector2::new(9.0, 9.0), &(Matrix2::identity() * 1e12)).unwrap();
        assert!((vague.mean - s.mean).norm() <= 1e-6);
    }

    #[test]
    fn converges_to_a_stationary_point() {
        let mut s = KalmanState::at_rest(Vector2::new(5.0, -3.0), 2.0, 1.0);
        let r = Matrix2::identity() * 1e-4;
        let target = Vector2::new(1.0, 1.0);
        for _ in 0..10 {
            s = update(&predict(&s, 0.1, 0.0), &target, &r).unwrap();
        }
        assert!((s.position() - target).norm() < 1e-3);
    }

    #[test]
    fn singular_innovation_is_an_error() {
        let s = state([0.0; 4], 0.0);
        assert!(matches!(update(&s, &Vector2::zeros(), &Matrix2::zeros()), Err(Error::SingularInnovation)));
    }
}
