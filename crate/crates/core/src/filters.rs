//! Estimator cores: a linear constant-velocity Kalman filter and an extended
//! Kalman filter on a constant turn rate and velocity model with a
//! constant vertical rate.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{wrap_angle, UavState};

pub type Vector6 = SVector<f64, 6>;
pub type Vector7 = SVector<f64, 7>;
pub type Matrix6 = SMatrix<f64, 6, 6>;
pub type Matrix7 = SMatrix<f64, 7, 7>;

/// Below this turn rate the transition uses its series expansion.
pub const PSI_DOT_EPS: f64 = 1e-4;

// state indices
const X: usize = 0;
const Y: usize = 1;
const Z: usize = 2;
const V: usize = 3;
const ZD: usize = 4;
const PSI: usize = 5;
const PSID: usize = 6;

/// Process and measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Planar acceleration, m/s^2.
    pub sigma_a: f64,
    /// Yaw acceleration, rad/s^2.
    pub sigma_psi_dd: f64,
    /// Vertical acceleration, m/s^2.
    pub sigma_zdd: f64,
    /// Isotropic position measurement noise, m.
    pub sigma_meas: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma_a: 2.0, sigma_psi_dd: 1.0, sigma_zdd: 1.0, sigma_meas: 0.05 }
    }
}

impl NoiseConfig {
    pub fn uniform(sigma: f64) -> Self {
        Self { sigma_a: sigma, sigma_psi_dd: sigma, sigma_zdd: sigma, sigma_meas: sigma }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.sigma_a, self.sigma_psi_dd, self.sigma_zdd, self.sigma_meas];
        if all.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("noise sigmas must be positive, got {self:?}")))
        }
    }

    fn measurement_cov(&self) -> Matrix3<f64> {
        Matrix3::identity() * self.sigma_meas.powi(2)
    }
}

/// Which estimator core a tracker runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Kf,
    Ekf,
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterKind::Kf => "kf",
            FilterKind::Ekf => "ekf",
        })
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kf" => Ok(FilterKind::Kf),
            "ekf" => Ok(FilterKind::Ekf),
            other => Err(Error::Config(format!("unknown filter type {other:?}"))),
        }
    }
}

fn symmetrize<const N: usize>(p: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (p + p.transpose()) * 0.5
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("dt must be positive, got {dt}")))
    }
}

fn check_measurement(z: &Vector3<f64>) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::RejectedMeasurement(format!("non-finite measurement {z:?}")))
    }
}

/// Kalman update on a position measurement with Joseph-form covariance.
fn position_update<const N: usize>(
    x: &SVector<f64, N>,
    p: &SMatrix<f64, N, N>,
    z: &Vector3<f64>,
    r: &Matrix3<f64>,
) -> Result<(SVector<f64, N>, SMatrix<f64, N, N>)> {
    let mut h = SMatrix::<f64, 3, N>::zeros();
    for k in 0..3 {
        h[(k, k)] = 1.0;
    }
    let innovation = z - h * x;
    let s = h * p * h.transpose() + r;
    let s_inv = s
        .cholesky()
        .ok_or_else(|| Error::Numeric("innovation covariance not positive definite".into()))?
        .inverse();
    let k = p * h.transpose() * s_inv;
    let x_new = x + k * innovation;
    let i_kh = SMatrix::<f64, N, N>::identity() - k * h;
    let p_new = i_kh * p * i_kh.transpose() + k * r * k.transpose();
    Ok((x_new, symmetrize(&p_new)))
}

/// Constant-velocity state `[x y z vx vy vz]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfCvState {
    pub x: Vector6,
    pub p: Matrix6,
}

impl KfCvState {
    pub fn initial(position: Vector3<f64>) -> Self {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&position);
        let p = Matrix6::from_diagonal(&Vector6::new(0.01, 0.01, 0.01, 1.0, 1.0, 1.0));
        Self { x, p }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(3).into_owned()
    }
}

fn cv_process_noise(dt: f64, n: &NoiseConfig) -> Matrix6 {
    let mut q = Matrix6::zeros();
    let sig = [n.sigma_a, n.sigma_a, n.sigma_zdd];
    for (k, s) in sig.iter().enumerate() {
        let var = s * s;
        q[(k, k)] = var * dt.powi(4) / 4.0;
        q[(k, k + 3)] = var * dt.powi(3) / 2.0;
        q[(k + 3, k)] = var * dt.powi(3) / 2.0;
        q[(k + 3, k + 3)] = var * dt * dt;
    }
    q
}

pub fn kf_predict(s: &KfCvState, dt: f64, n: &NoiseConfig) -> Result<KfCvState> {
    check_dt(dt)?;
    let mut f = Matrix6::identity();
    for k in 0..3 {
        f[(k, k + 3)] = dt;
    }
    let x = f * s.x;
    let p = f * s.p * f.transpose() + cv_process_noise(dt, n);
    Ok(KfCvState { x, p: symmetrize(&p) })
}

pub fn kf_update(s: &KfCvState, z: &Vector3<f64>, n: &NoiseConfig) -> Result<KfCvState> {
    check_measurement(z)?;
    let (x, p) = position_update(&s.x, &s.p, z, &n.measurement_cov())?;
    Ok(KfCvState { x, p })
}

/// Turn-rate state, see [`UavState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfCtrvState {
    pub x: UavState,
    pub p: Matrix7,
}

impl EkfCtrvState {
    pub fn initial(position: Vector3<f64>) -> Self {
        Self { x: UavState::at_rest(position), p: initial_ctrv_covariance() }
    }

    pub fn mean(&self) -> Vector7 {
        Vector7::from(self.x.to_array())
    }
}

pub fn initial_ctrv_covariance() -> Matrix7 {
    Matrix7::from_diagonal(&Vector7::from([0.01, 0.01, 0.01, 1.0, 1.0, 0.25, 0.25]))
}

/// Mean transition of the turn-rate model over `dt`.
///
/// For `|psi_dot| < PSI_DOT_EPS` the planar displacement uses its series in
/// `psi_dot` up to second order, which equals the straight-line motion at
/// `psi_dot = 0`.
pub fn ctrv_transition(s: &UavState, dt: f64) -> UavState {
    let (v, psi, w) = (s.v, s.psi, s.psi_dot);
    let (dx, dy) = if w.abs() < PSI_DOT_EPS {
        let (sn, cs) = psi.sin_cos();
        let a = v * dt;
        let b = v * dt * dt / 2.0;
        let c = v * dt * dt * dt / 6.0;
        (a * cs - b * w * sn - c * w * w * cs, a * sn + b * w * cs - c * w * w * sn)
    } else {
        let psi1 = psi + w * dt;
        ((v / w) * (psi1.sin() - psi.sin()), (v / w) * (psi.cos() - psi1.cos()))
    };
    UavState {
        x: s.x + dx,
        y: s.y + dy,
        z: s.z + s.z_dot * dt,
        v,
        z_dot: s.z_dot,
        psi: wrap_angle(psi + w * dt),
        psi_dot: w,
    }
}

/// Straight-line motion with heading advance; the `psi_dot -> 0` limit of
/// [`ctrv_transition`].
pub fn cv_limit_transition(s: &UavState, dt: f64) -> UavState {
    UavState {
        x: s.x + s.v * s.psi.cos() * dt,
        y: s.y + s.v * s.psi.sin() * dt,
        z: s.z + s.z_dot * dt,
        psi: wrap_angle(s.psi + s.psi_dot * dt),
        ..*s
    }
}

/// Jacobian of [`ctrv_transition`] with respect to the state.
pub fn ctrv_jacobian(s: &UavState, dt: f64) -> Matrix7 {
    let (v, psi, w) = (s.v, s.psi, s.psi_dot);
    let mut f = Matrix7::identity();
    f[(Z, ZD)] = dt;
    f[(PSI, PSID)] = dt;
    let (sn, cs) = psi.sin_cos();
    if w.abs() < PSI_DOT_EPS {
        let (a, b, c) = (dt, dt * dt / 2.0, dt * dt * dt / 6.0);
        f[(X, V)] = a * cs - b * w * sn - c * w * w * cs;
        f[(Y, V)] = a * sn + b * w * cs - c * w * w * sn;
        f[(X, PSI)] = v * (-a * sn - b * w * cs + c * w * w * sn);
        f[(Y, PSI)] = v * (a * cs - b * w * sn - c * w * w * cs);
        f[(X, PSID)] = v * (-b * sn - 2.0 * c * w * cs);
        f[(Y, PSID)] = v * (b * cs - 2.0 * c * w * sn);
    } else {
        let psi1 = psi + w * dt;
        let (sn1, cs1) = psi1.sin_cos();
        f[(X, V)] = (sn1 - sn) / w;
        f[(Y, V)] = (cs - cs1) / w;
        f[(X, PSI)] = (v / w) * (cs1 - cs);
        f[(Y, PSI)] = (v / w) * (sn1 - sn);
        f[(X, PSID)] = v * dt * cs1 / w - v * (sn1 - sn) / (w * w);
        f[(Y, PSID)] = v * dt * sn1 / w - v * (cs - cs1) / (w * w);
    }
    f
}

/// Piecewise-constant white acceleration on speed, vertical rate and turn
/// rate, mapped through the one-step kinematics.
pub fn ctrv_process_noise(s: &UavState, dt: f64, n: &NoiseConfig) -> Matrix7 {
    let (sn, cs) = s.psi.sin_cos();
    let half = dt * dt / 2.0;
    let mut g = SMatrix::<f64, 7, 3>::zeros();
    g[(X, 0)] = half * cs;
    g[(Y, 0)] = half * sn;
    g[(V, 0)] = dt;
    g[(Z, 1)] = half;
    g[(ZD, 1)] = dt;
    g[(PSI, 2)] = half;
    g[(PSID, 2)] = dt;
    let qd = Matrix3::from_diagonal(&Vector3::new(
        n.sigma_a.powi(2),
        n.sigma_zdd.powi(2),
        n.sigma_psi_dd.powi(2),
    ));
    g * qd * g.transpose()
}

pub fn ekf_predict(s: &EkfCtrvState, dt: f64, n: &NoiseConfig) -> Result<EkfCtrvState> {
    check_dt(dt)?;
    let f = ctrv_jacobian(&s.x, dt);
    let x = ctrv_transition(&s.x, dt);
    let p = f * s.p * f.transpose() + ctrv_process_noise(&s.x, dt, n);
    Ok(EkfCtrvState { x, p: symmetrize(&p) })
}

pub fn ekf_update(s: &EkfCtrvState, z: &Vector3<f64>, n: &NoiseConfig) -> Result<EkfCtrvState> {
    check_measurement(z)?;
    let (x, p) = position_update(&s.mean(), &s.p, z, &n.measurement_cov())?;
    let mut state = UavState::from_array(x.into());
    state.psi = wrap_angle(state.psi);
    Ok(EkfCtrvState { x: state, p })
}

/// Either estimator core behind one interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterState {
    Kf(KfCvState),
    Ekf(EkfCtrvState),
}

impl FilterState {
    pub fn initial(kind: FilterKind, position: Vector3<f64>) -> Self {
        match kind {
            FilterKind::Kf => FilterState::Kf(KfCvState::initial(position)),
            FilterKind::Ekf => FilterState::Ekf(EkfCtrvState::initial(position)),
        }
    }

    pub fn kind(&self) -> FilterKind {
        match self {
            FilterState::Kf(_) => FilterKind::Kf,
            FilterState::Ekf(_) => FilterKind::Ekf,
        }
    }

    pub fn predict(&self, dt: f64, n: &NoiseConfig) -> Result<Self> {
        Ok(match self {
            FilterState::Kf(s) => FilterState::Kf(kf_predict(s, dt, n)?),
            FilterState::Ekf(s) => FilterState::Ekf(ekf_predict(s, dt, n)?),
        })
    }

    pub fn update(&self, z: &Vector3<f64>, n: &NoiseConfig) -> Result<Self> {
        Ok(match self {
            FilterState::Kf(s) => FilterState::Kf(kf_update(s, z, n)?),
            FilterState::Ekf(s) => FilterState::Ekf(ekf_update(s, z, n)?),
        })
    }

    pub fn position(&self) -> Vector3<f64> {
        match self {
            FilterState::Kf(s) => s.position(),
            FilterState::Ekf(s) => s.x.position(),
        }
    }

    pub fn velocity(&self) -> Vector3<f64> {
        match self {
            FilterState::Kf(s) => s.velocity(),
            FilterState::Ekf(s) => s.x.velocity(),
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            FilterState::Kf(s) => DVector::from_column_slice(s.x.as_slice()),
            FilterState::Ekf(s) => DVector::from_column_slice(s.mean().as_slice()),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            FilterState::Kf(s) => DMatrix::from_column_slice(6, 6, s.p.as_slice()),
            FilterState::Ekf(s) => DMatrix::from_column_slice(7, 7, s.p.as_slice()),
        }
    }

    /// 3x3 position block of the covariance.
    pub fn position_covariance(&self) -> Matrix3<f64> {
        match self {
            FilterState::Kf(s) => s.p.fixed_view::<3, 3>(0, 0).into_owned(),
            FilterState::Ekf(s) => s.p.fixed_view::<3, 3>(0, 0).into_owned(),
        }
    }

    /// `[x y z vx vy vz]` mean and covariance, linearizing the turn-rate
    /// state where needed.
    pub fn to_cartesian(&self) -> (Vector6, Matrix6) {
        match self {
            FilterState::Kf(s) => (s.x, s.p),
            FilterState::Ekf(s) => {
                let st = &s.x;
                let (sn, cs) = st.psi.sin_cos();
                let pos = st.position();
                let vel = st.velocity();
                let x = Vector6::new(pos.x, pos.y, pos.z, vel.x, vel.y, vel.z);
                let mut j = SMatrix::<f64, 6, 7>::zeros();
                j[(0, X)] = 1.0;
                j[(1, Y)] = 1.0;
                j[(2, Z)] = 1.0;
                j[(3, V)] = cs;
                j[(3, PSI)] = -st.v * sn;
                j[(4, V)] = sn;
                j[(4, PSI)] = st.v * cs;
                j[(5, ZD)] = 1.0;
                let p = j * s.p * j.transpose();
                (x, symmetrize(&p))
            }
        }
    }

    /// Overwrites the mean with `mean` of this filter's own dimension; the
    /// covariance is untouched.
    pub fn set_mean(&mut self, mean: &DVector<f64>) -> Result<()> {
        match self {
            FilterState::Kf(s) if mean.len() == 6 => {
                s.x = Vector6::from_column_slice(mean.as_slice());
            }
            FilterState::Ekf(s) if mean.len() == 7 => {
                let mut st = UavState::from_array(std::array::from_fn(|i| mean[i]));
                st.psi = wrap_angle(st.psi);
                s.x = st;
            }
            _ => {
                return Err(Error::Dimension(format!(
                    "cannot write a {}-state mean into a {} filter",
                    mean.len(),
                    self.kind()
                )))
            }
        }
        Ok(())
    }

    /// Overwrites position and velocity from a cartesian mean; the turn rate
    /// of a turn-rate state is kept.
    pub fn set_cartesian(&mut self, cart: &Vector6) {
        match self {
            FilterState::Kf(s) => s.x = *cart,
            FilterState::Ekf(s) => {
                let st = &mut s.x;
                st.x = cart[0];
                st.y = cart[1];
                st.z = cart[2];
                let planar = cart[3].hypot(cart[4]);
                if planar > 1e-9 {
                    st.v = planar;
                    st.psi = cart[4].atan2(cart[3]);
                } else {
                    st.v = 0.0;
                }
                st.z_dot = cart[5];
            }
        }
    }
}
