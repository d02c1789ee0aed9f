//! Coordinate frames: WGS84 geodetic, ECEF, local ENU and the vehicle frame.
//!
//! Vehicle frame: x forward, y left, z up, origin at the INS reference
//! point. A [`GeoPose`] orientation maps vehicle-frame vectors into ECEF.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Iso3, Mat3, Quat, Vec3};
use crate::scalar::Real;

/// WGS84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// Convergence threshold of the geodetic inverse, radians.
pub const GEODETIC_TOLERANCE: f64 = 1e-12;
/// Largest tilt between a pose's z axis and the local ellipsoidal up that
/// ingestion accepts. Vehicles pitch and roll a few degrees at most; the
/// transposed (ECEF→vehicle) convention lands far outside this.
pub const MAX_POSE_TILT_DEG: f64 = 15.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0}° outside [-90, 90] or longitude {1}° outside [-180, 180]")]
    InvalidGeodetic(f64, f64),
    #[error("quaternion norm {0} is not 1")]
    InvalidQuaternion(f64),
    #[error(
        "pose z axis tilted {0:.1}° from local up; orientation must map vehicle frame to ECEF"
    )]
    TiltedOrientation(f64),
    #[error("time {t} outside pose interval [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("pose timestamps not strictly increasing at index {0}")]
    NonMonotonic(usize),
    #[error("empty pose track")]
    EmptyTrack,
}

fn eccentricity_sq<T: Real>() -> T {
    let f = T::lit(WGS84_F);
    f * (T::lit(2.0) - f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GeodeticPoint<T: Real> {
    /// Degrees.
    pub latitude: T,
    /// Degrees.
    pub longitude: T,
    /// Meters above the ellipsoid.
    pub altitude: T,
}

impl<T: Real> GeodeticPoint<T> {
    pub fn new(latitude: T, longitude: T, altitude: T) -> Result<Self, GeoError> {
        let ok_lat = latitude.abs() <= T::lit(90.0);
        let ok_lon = longitude.abs() <= T::lit(180.0);
        if !(ok_lat && ok_lon && altitude.is_finite()) {
            return Err(GeoError::InvalidGeodetic(
                latitude.as_f64(),
                longitude.as_f64(),
            ));
        }
        Ok(Self {
            latitude,
            longitude,
            altitude,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EcefPoint<T: Real> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> EcefPoint<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn from_vec(v: Vec3<T>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vec(self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Plausibility bound for points on or near the Earth's surface.
    pub fn is_near_surface(self) -> bool {
        let n = self.to_vec().norm();
        self.to_vec().is_finite() && n >= T::lit(6.2e6) && n <= T::lit(6.6e6)
    }

    pub fn transformed(self, iso: &Iso3<T>) -> Self {
        Self::from_vec(iso.transform_point(self.to_vec()))
    }

    /// Arithmetic mean, accumulated relative to the first point so that
    /// large absolute coordinates do not swamp the sum.
    pub fn mean<I: IntoIterator<Item = Self>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut acc = Vec3::zeros();
        let mut n = 1usize;
        for p in it {
            acc += p - first;
            n += 1;
        }
        Some(first + acc / T::from_count(n))
    }
}

impl<T: Real> Sub for EcefPoint<T> {
    type Output = Vec3<T>;
    fn sub(self, o: Self) -> Vec3<T> {
        self.to_vec() - o.to_vec()
    }
}

impl<T: Real> Add<Vec3<T>> for EcefPoint<T> {
    type Output = Self;
    fn add(self, v: Vec3<T>) -> Self {
        Self::from_vec(self.to_vec() + v)
    }
}

impl<T: Real> Sub<Vec3<T>> for EcefPoint<T> {
    type Output = Self;
    fn sub(self, v: Vec3<T>) -> Self {
        Self::from_vec(self.to_vec() - v)
    }
}

/// Closed-form geodetic → ECEF conversion on the WGS84 ellipsoid.
pub fn wgs84_to_ecef<T: Real>(p: &GeodeticPoint<T>) -> EcefPoint<T> {
    let a = T::lit(WGS84_A);
    let e2 = eccentricity_sq::<T>();
    let (lat, lon) = (p.latitude.to_radians(), p.longitude.to_radians());
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    let n = a / (T::one() - e2 * slat * slat).sqrt();
    let h = p.altitude;
    EcefPoint::new(
        (n + h) * clat * clon,
        (n + h) * clat * slon,
        (n * (T::one() - e2) + h) * slat,
    )
}

/// Iterative ECEF → geodetic inverse (Bowring-style fixed point on the
/// latitude, converged to [`GEODETIC_TOLERANCE`]).
pub fn ecef_to_wgs84<T: Real>(p: &EcefPoint<T>) -> GeodeticPoint<T> {
    let a = T::lit(WGS84_A);
    let e2 = eccentricity_sq::<T>();
    let one = T::one();
    let rho = p.x.hypot(p.y);
    let lon = p.y.atan2(p.x);
    let mut lat = p.z.atan2(rho * (one - e2));
    let mut alt = T::zero();
    for _ in 0..64 {
        let (s, c) = lat.sin_cos();
        let w = (one - e2 * s * s).sqrt();
        let n = a / w;
        alt = rho * c + p.z * s - a * w;
        let next = p.z.atan2(rho * (one - e2 * n / (n + alt)));
        let delta = (next - lat).abs();
        lat = next;
        if delta < T::lit(GEODETIC_TOLERANCE) {
            let (s, c) = lat.sin_cos();
            alt = rho * c + p.z * s - a * (one - e2 * s * s).sqrt();
            break;
        }
    }
    GeodeticPoint {
        latitude: lat.to_degrees(),
        longitude: lon.to_degrees(),
        altitude: alt,
    }
}

/// Rotation whose rows are the east, north and up unit vectors (in ECEF)
/// at the given geodetic position.
pub fn enu_basis<T: Real>(origin: &GeodeticPoint<T>) -> Mat3<T> {
    let (slat, clat) = origin.latitude.to_radians().sin_cos();
    let (slon, clon) = origin.longitude.to_radians().sin_cos();
    Mat3::from_rows(
        Vec3::new(-slon, clon, T::zero()),
        Vec3::new(-slat * clon, -slat * slon, clat),
        Vec3::new(clat * clon, clat * slon, slat),
    )
}

/// ENU basis at an ECEF point; "up" is the ellipsoid normal there.
pub fn enu_basis_at<T: Real>(p: &EcefPoint<T>) -> Mat3<T> {
    enu_basis(&ecef_to_wgs84(p))
}

/// Ellipsoidal up direction at an ECEF point.
pub fn local_up<T: Real>(p: &EcefPoint<T>) -> Vec3<T> {
    enu_basis_at(p).row(2)
}

pub fn ecef_to_enu<T: Real>(p: &EcefPoint<T>, origin: &GeodeticPoint<T>) -> Vec3<T> {
    enu_basis(origin).mul_vec(*p - wgs84_to_ecef(origin))
}

pub fn enu_to_ecef<T: Real>(v: Vec3<T>, origin: &GeodeticPoint<T>) -> EcefPoint<T> {
    wgs84_to_ecef(origin) + enu_basis(origin).transpose().mul_vec(v)
}

/// Heading (radians, counter-clockwise from east) of the horizontal part of
/// an ECEF direction, measured in the ENU frame at `at`.
pub fn heading_at<T: Real>(dir: Vec3<T>, at: &EcefPoint<T>) -> T {
    let enu = enu_basis_at(at).mul_vec(dir);
    enu.y.atan2(enu.x)
}

/// ECEF direction of a horizontal heading in the ENU frame at `at`.
pub fn heading_direction<T: Real>(yaw: T, at: &EcefPoint<T>) -> Vec3<T> {
    let (s, c) = yaw.sin_cos();
    enu_basis_at(at)
        .transpose()
        .mul_vec(Vec3::new(c, s, T::zero()))
}

/// Timestamped ego pose. `orientation` maps vehicle-frame vectors to ECEF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GeoPose<T: Real> {
    pub timestamp: T,
    pub position: EcefPoint<T>,
    pub orientation: Quat<T>,
}

impl<T: Real> GeoPose<T> {
    pub fn new(timestamp: T, position: EcefPoint<T>, orientation: Quat<T>) -> Self {
        Self {
            timestamp,
            position,
            orientation,
        }
    }

    /// Level pose whose x axis points along `heading` (radians from east,
    /// counter-clockwise) and whose z axis is the local ellipsoidal up.
    pub fn from_heading(timestamp: T, position: EcefPoint<T>, heading: T) -> Self {
        let enu = enu_basis_at(&position);
        let to_ecef = enu.transpose();
        let (s, c) = heading.sin_cos();
        let x = to_ecef.mul_vec(Vec3::new(c, s, T::zero()));
        let z = enu.row(2);
        let y = z.cross(x);
        let orientation = Quat::from_matrix(&Mat3::from_cols(x, y, z));
        Self::new(timestamp, position, orientation)
    }

    /// Vehicle → ECEF rigid transform.
    pub fn vehicle_to_ecef(&self) -> Iso3<T> {
        Iso3::new(self.orientation, self.position.to_vec())
    }

    pub fn to_vehicle_frame(&self, p: &EcefPoint<T>) -> Vec3<T> {
        self.orientation.conjugate().rotate(*p - self.position)
    }

    pub fn from_vehicle_frame(&self, v: Vec3<T>) -> EcefPoint<T> {
        self.position + self.orientation.rotate(v)
    }

    /// Vehicle heading: ENU angle of the horizontal part of the x axis.
    pub fn heading(&self) -> T {
        heading_at(self.orientation.rotate(Vec3::unit_x()), &self.position)
    }

    /// Angle between the vehicle z axis and the local ellipsoidal up.
    pub fn tilt(&self) -> T {
        self.orientation
            .rotate(Vec3::unit_z())
            .angle_to(local_up(&self.position))
    }

    /// Checks the quaternion norm and the vehicle→ECEF convention, and
    /// renormalizes the quaternion.
    pub fn validated(mut self) -> Result<Self, GeoError> {
        let n = self.orientation.norm();
        if !n.is_finite() || (n - T::one()).abs() > T::lit(1e-6) {
            return Err(GeoError::InvalidQuaternion(n.as_f64()));
        }
        self.orientation = self.orientation.normalize();
        let tilt = self.tilt().to_degrees();
        if tilt > T::lit(MAX_POSE_TILT_DEG) {
            return Err(GeoError::TiltedOrientation(tilt.as_f64()));
        }
        Ok(self)
    }

    /// Applies a global rigid motion to the pose.
    pub fn transformed(&self, iso: &Iso3<T>) -> Self {
        Self::new(
            self.timestamp,
            self.position.transformed(iso),
            iso.rotation.mul(self.orientation).normalize(),
        )
    }
}

/// Linear position / spherical-linear orientation interpolation.
pub fn interpolate_pose<T: Real>(
    a: &GeoPose<T>,
    b: &GeoPose<T>,
    t: T,
) -> Result<GeoPose<T>, GeoError> {
    if t < a.timestamp || t > b.timestamp {
        return Err(GeoError::OutOfRange {
            t: t.as_f64(),
            start: a.timestamp.as_f64(),
            end: b.timestamp.as_f64(),
        });
    }
    if t == a.timestamp {
        return Ok(*a);
    }
    if t == b.timestamp {
        return Ok(*b);
    }
    let u = (t - a.timestamp) / (b.timestamp - a.timestamp);
    Ok(GeoPose::new(
        t,
        a.position + (b.position - a.position) * u,
        a.orientation.slerp(b.orientation, u),
    ))
}

/// Time-ordered pose stream with interpolated lookup.
#[derive(Debug, Clone)]
pub struct PoseTrack<T: Real> {
    poses: Vec<GeoPose<T>>,
}

impl<T: Real> PoseTrack<T> {
    pub fn new(poses: Vec<GeoPose<T>>) -> Result<Self, GeoError> {
        if poses.is_empty() {
            return Err(GeoError::EmptyTrack);
        }
        if let Some(i) = poses
            .windows(2)
            .position(|w| w[1].timestamp <= w[0].timestamp)
        {
            return Err(GeoError::NonMonotonic(i + 1));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[GeoPose<T>] {
        &self.poses
    }

    pub fn at(&self, t: T) -> Result<GeoPose<T>, GeoError> {
        let first = &self.poses[0];
        let last = &self.poses[self.poses.len() - 1];
        if t < first.timestamp || t > last.timestamp {
            return Err(GeoError::OutOfRange {
                t: t.as_f64(),
                start: first.timestamp.as_f64(),
                end: last.timestamp.as_f64(),
            });
        }
        let i = self.poses.partition_point(|p| p.timestamp < t);
        if self.poses[i].timestamp == t {
            return Ok(self.poses[i]);
        }
        interpolate_pose(&self.poses[i - 1], &self.poses[i], t)
    }
}

/// Length of the polyline through the pose positions.
pub fn travel_distance<'a, T: Real + 'a, I>(poses: I) -> T
where
    I: IntoIterator<Item = &'a GeoPose<T>>,
{
    let mut total = T::zero();
    let mut prev: Option<EcefPoint<T>> = None;
    for p in poses {
        if let Some(q) = prev {
            total += p.position.distance(q);
        }
        prev = Some(p.position);
    }
    total
}
