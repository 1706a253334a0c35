use std::f64::consts::PI;

use serde::Serialize;

use super::DepthError;

pub const DEFAULT_FOV_DEG: f64 = 60.0;

/// Pinhole intrinsics. Pixel centers sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CameraIntrinsics {
    pub focal_px: f64,
    pub s_x: f64,
    pub s_y: f64,
    pub u_0: f64,
    pub v_0: f64,
}

impl CameraIntrinsics {
    pub fn new(focal_px: f64, s_x: f64, s_y: f64, u_0: f64, v_0: f64) -> Result<Self, DepthError> {
        if !(focal_px > 0.0) || !(s_x > 0.0) || !(s_y > 0.0) || !u_0.is_finite() || !v_0.is_finite() {
            return Err(DepthError::InvalidIntrinsics(format!(
                "f={focal_px} s_x={s_x} s_y={s_y} u_0={u_0} v_0={v_0}"
            )));
        }
        Ok(Self { focal_px, s_x, s_y, u_0, v_0 })
    }

    /// Zero skew, unit aspect, principal point at the image center and a focal
    /// length matching the horizontal field of view.
    pub fn from_fov(width: u32, height: u32, horizontal_fov_deg: f64) -> Result<Self, DepthError> {
        if !(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0) {
            return Err(DepthError::InvalidIntrinsics(format!(
                "field of view {horizontal_fov_deg} deg outside (0, 180)"
            )));
        }
        let half = (horizontal_fov_deg.to_radians() / 2.0).tan();
        Self::new(width as f64 / 2.0 / half, 1.0, 1.0, width as f64 / 2.0, height as f64 / 2.0)
    }

    /// Normalized camera-frame ray `((u - u_0) / (f s_x), (v - v_0) / (f s_y), 1)`.
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [
            (u - self.u_0) / (self.focal_px * self.s_x),
            (v - self.v_0) / (self.focal_px * self.s_y),
            1.0,
        ]
    }

    /// Image coordinates of a camera-frame point with positive z.
    pub fn project(&self, p: [f64; 3]) -> Option<[f64; 2]> {
        (p[2] > 0.0).then(|| {
            [
                self.u_0 + self.focal_px * self.s_x * p[0] / p[2],
                self.v_0 + self.focal_px * self.s_y * p[1] / p[2],
            ]
        })
    }
}

/// Direction in ISO spherical angles: `theta` is the polar angle from +z,
/// `phi` the azimuth from +x towards +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphericalDirection {
    pub theta: f64,
    pub phi: f64,
}

impl SphericalDirection {
    pub fn from_cartesian(p: [f64; 3]) -> Self {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let theta = (p[2] / r).clamp(-1.0, 1.0).acos();
        let phi = canonical_azimuth(p[1].atan2(p[0]));
        Self { theta, phi }
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }
}

/// Map an angle into `(-pi, pi]`.
pub fn canonical_azimuth(phi: f64) -> f64 {
    let mut a = phi % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Viewing direction of a pixel. The principal point maps to `theta = 0`
/// (along +z) with `phi = 0` by convention.
pub fn pixel_to_camera_ray(u: f64, v: f64, k: &CameraIntrinsics) -> SphericalDirection {
    SphericalDirection::from_cartesian(k.ray(u, v))
}

/// Lifted point in spherical form, in the units of the depth it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorldPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl WorldPoint {
    /// Point at range `r` along the pixel ray, with both angles shifted by pi
    /// and folded back into `theta ∈ [0, pi]`, `phi ∈ (-pi, pi]`.
    ///
    /// `(r, theta + pi, phi + pi)` names the same Cartesian point as
    /// `(r, pi - theta, phi)`: the camera ray mirrored through the image plane.
    /// Mirroring is an isometry, so distances between lifted points equal
    /// distances between the unshifted ones.
    pub fn from_ray(r: f64, ray: SphericalDirection) -> Self {
        Self { r, theta: PI - ray.theta, phi: canonical_azimuth(ray.phi) }
    }

    pub fn to_cartesian(&self) -> [f64; 3] {
        let u = SphericalDirection { theta: self.theta, phi: self.phi }.unit_vector();
        [self.r * u[0], self.r * u[1], self.r * u[2]]
    }
}

pub(crate) fn euclidean(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}
