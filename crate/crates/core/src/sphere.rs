//! Matched-radius spherical constructions: geodesic interpolation on the
//! scaled sphere `R S^{d-1}`, its analytic velocity, the logarithm map,
//! the conditional vector field and tangential projection.

use crate::error::{domain, Result};
use crate::numerics::{dot, norm};

/// Relative tolerance on `| |x0| - |x1| |` accepted by [`GeodesicPair::new`].
pub const RADIUS_MATCH_TOL: f64 = 1e-6;
/// Below this angle the sine ratios use their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-6;
/// Inner products below `-1 + ANTIPODAL_TOL` are treated as antipodal.
pub const ANTIPODAL_TOL: f64 = 1e-12;
/// Geodesic angle used after antipodal completion.
pub const ANTIPODAL_ANGLE: f64 = std::f64::consts::PI - 1e-7;
/// Projection is skipped for points closer to the origin than this.
pub const PROJECTION_SKIP_NORM: f64 = 1e-3;

/// Two equal-radius points and the great circle joining them.
#[derive(Clone, Debug)]
pub struct GeodesicPair {
    x0: Vec<f64>,
    x1: Vec<f64>,
    radius: f64,
    u0: Vec<f64>,
    u1: Vec<f64>,
    theta: f64,
    antipodal: bool,
}

impl GeodesicPair {
    pub fn new(x0: &[f64], x1: &[f64]) -> Result<Self> {
        if x0.len() != x1.len() {
            return Err(crate::error::dim_mismatch(format!(
                "geodesic pair of lengths {} and {}",
                x0.len(),
                x1.len()
            )));
        }
        let r0 = norm(x0);
        let r1 = norm(x1);
        if !(r0 > 0.0) || !(r1 > 0.0) {
            return Err(domain("geodesic endpoints must be nonzero"));
        }
        if (r0 - r1).abs() > RADIUS_MATCH_TOL * r1 {
            return Err(domain(format!("radius mismatch: {r0} vs {r1}")));
        }
        let u0: Vec<f64> = x0.iter().map(|v| v / r0).collect();
        let mut u1: Vec<f64> = x1.iter().map(|v| v / r1).collect();
        let c = dot(&u0, &u1).clamp(-1.0, 1.0);

        let (theta, antipodal) = if c < -1.0 + ANTIPODAL_TOL {
            let w = antipodal_completion(&u0);
            let (s, co) = ANTIPODAL_ANGLE.sin_cos();
            for (i, v) in u1.iter_mut().enumerate() {
                *v = co * u0[i] + s * w[i];
            }
            (ANTIPODAL_ANGLE, true)
        } else {
            (angle_between(&u0, &u1, c), false)
        };

        Ok(Self {
            x0: x0.to_vec(),
            x1: x1.to_vec(),
            radius: r1,
            u0,
            u1,
            theta,
            antipodal,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn is_antipodal(&self) -> bool {
        self.antipodal
    }

    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    /// End direction; for antipodal pairs this is the completed direction.
    pub fn u1(&self) -> &[f64] {
        &self.u1
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    /// Point `psi_t = R * gamma_t(u0, u1)` on the geodesic.
    pub fn slerp(&self, t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        let mut out = vec![0.0; self.dim()];
        self.slerp_into(t, &mut out);
        Ok(out)
    }

    pub(crate) fn slerp_into(&self, t: f64, out: &mut [f64]) {
        if t == 0.0 {
            out.copy_from_slice(&self.x0);
            return;
        }
        if t == 1.0 && !self.antipodal {
            out.copy_from_slice(&self.x1);
            return;
        }
        let (a, b) = slerp_coefficients(self.theta, t);
        for i in 0..out.len() {
            out[i] = self.radius * (a * self.u0[i] + b * self.u1[i]);
        }
    }

    /// Analytic time derivative `R theta/sin(theta) [-cos((1-t)theta) u0 + cos(t theta) u1]`.
    pub fn velocity(&self, t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        let mut out = vec![0.0; self.dim()];
        self.velocity_into(t, &mut out);
        Ok(out)
    }

    pub(crate) fn velocity_into(&self, t: f64, out: &mut [f64]) {
        let (a, b) = velocity_coefficients(self.theta, t);
        for i in 0..out.len() {
            out[i] = self.radius * (-a * self.u0[i] + b * self.u1[i]);
        }
    }
}

pub fn slerp(pair: &GeodesicPair, t: f64) -> Result<Vec<f64>> {
    pair.slerp(t)
}

pub fn slerp_velocity(pair: &GeodesicPair, t: f64) -> Result<Vec<f64>> {
    pair.velocity(t)
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(domain(format!("time {t} outside [0, 1]")))
    }
}

/// Angle between unit vectors with `cos = c`, computed through atan2 so that
/// small angles keep full relative precision.
fn angle_between(u0: &[f64], u1: &[f64], c: f64) -> f64 {
    let s: f64 = u0
        .iter()
        .zip(u1)
        .map(|(a, b)| (b - c * a).powi(2))
        .sum::<f64>()
        .sqrt();
    s.atan2(c)
}

/// `(sin((1-t)theta)/sin(theta), sin(t theta)/sin(theta))`.
fn slerp_coefficients(theta: f64, t: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let th2 = theta * theta;
        let s = 1.0 - t;
        (
            s * (1.0 + th2 * (1.0 - s * s) / 6.0),
            t * (1.0 + th2 * (1.0 - t * t) / 6.0),
        )
    } else {
        let st = theta.sin();
        (((1.0 - t) * theta).sin() / st, (t * theta).sin() / st)
    }
}

/// `(theta/sin(theta) cos((1-t)theta), theta/sin(theta) cos(t theta))`.
fn velocity_coefficients(theta: f64, t: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let th2 = theta * theta;
        let ratio = 1.0 + th2 / 6.0;
        let s = 1.0 - t;
        (
            ratio * (1.0 - 0.5 * s * s * th2),
            ratio * (1.0 - 0.5 * t * t * th2),
        )
    } else {
        let ratio = theta / theta.sin();
        (ratio * ((1.0 - t) * theta).cos(), ratio * (t * theta).cos())
    }
}

/// Unit vector orthogonal to `u0`: Gram-Schmidt of the first standard basis
/// vector that is not parallel to `u0`, falling back to the second.
fn antipodal_completion(u0: &[f64]) -> Vec<f64> {
    let d = u0.len();
    let pick = if d == 1 || u0[0].abs() < 1.0 - 1e-6 { 0 } else { 1 };
    let mut w = vec![0.0; d];
    if d == 1 {
        // S^0 has no tangent directions; keep the degenerate completion finite.
        return w;
    }
    w[pick] = 1.0;
    let c = u0[pick];
    for i in 0..d {
        w[i] -= c * u0[i];
    }
    let n = norm(&w);
    w.iter_mut().for_each(|v| *v /= n);
    w
}

/// Riemannian logarithm on the sphere of radius `|x|`:
/// `Log_x(y) = phi/sin(phi) * (y - <x,y>/R^2 x)`.
pub fn log_map(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(crate::error::dim_mismatch("log_map operands"));
    }
    let r2 = dot(x, x);
    let ry = norm(y);
    let rx = r2.sqrt();
    if !(rx > 0.0) {
        return Err(domain("log_map base point at the origin"));
    }
    if (rx - ry).abs() > RADIUS_MATCH_TOL * rx {
        return Err(domain(format!("log_map radius mismatch: {rx} vs {ry}")));
    }
    let c = dot(x, y) / r2;
    let w: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - c * a).collect();
    let sin_r = norm(&w);
    if c.clamp(-1.0, 1.0) < -1.0 + ANTIPODAL_TOL && sin_r <= 1e-6 * rx {
        return Err(domain("log_map of antipodal points is undefined"));
    }
    let phi = (sin_r / rx).atan2(c);
    let coef = if phi < SMALL_ANGLE {
        1.0 + phi * phi / 6.0
    } else {
        phi / phi.sin()
    };
    Ok(w.into_iter().map(|v| coef * v).collect())
}

/// Closed-form conditional field `Log_x(x1) / (1 - t)`.
pub fn conditional_field(x: &[f64], x1: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&t) {
        return Err(domain(format!("conditional field needs t in [0, 1), got {t}")));
    }
    let scale = 1.0 / (1.0 - t);
    Ok(log_map(x, x1)?.into_iter().map(|v| v * scale).collect())
}

/// Tangential projection `v - <x,v>/|x|^2 x`, skipped near the origin.
pub fn tangential_project(x: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    project_in_place(x, &mut out, PROJECTION_SKIP_NORM);
    out
}

/// In-place projection with an explicit skip radius. Returns false when skipped.
pub fn project_in_place(x: &[f64], v: &mut [f64], skip_norm: f64) -> bool {
    let r2 = dot(x, x);
    if !(r2.sqrt() >= skip_norm) {
        return false;
    }
    let c = dot(x, v) / r2;
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi -= c * xi;
    }
    true
}
