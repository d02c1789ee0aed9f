//! Pinhole camera with optional radial distortion.
//!
//! Camera frame: x right, y down, z along the optical axis. The extrinsic
//! maps camera-frame points into the vehicle frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfit::ObjectBox3D;
use crate::geo::{EcefPoint, GeoPose};
use crate::math::{Quat, Vec3};
use crate::scalar::Real;

/// Points closer than this to the camera plane are treated as behind it
/// when clipping box edges.
const NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("camera {id}: invalid intrinsics ({reason})")]
    InvalidIntrinsics { id: String, reason: String },
    #[error("camera {id}: extrinsic is not a rigid transform")]
    InvalidExtrinsic { id: String },
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    PixelOutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("invalid bounding box [{0}, {1}, {2}, {3}]")]
    InvalidBBox(f64, f64, f64, f64),
}

/// Image point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Pixel<T: Real> {
    pub u: T,
    pub v: T,
}

impl<T: Real> Pixel<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn distance(self, o: Self) -> T {
        (self.u - o.u).hypot(self.v - o.v)
    }
}

/// Axis-aligned image box, `x_min < x_max`, `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BBox2D<T: Real> {
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
}

impl<T: Real> BBox2D<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Result<Self, CameraError> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(CameraError::InvalidBBox(
                x_min.as_f64(),
                y_min.as_f64(),
                x_max.as_f64(),
                y_max.as_f64(),
            ));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> Pixel<T> {
        let half = T::lit(0.5);
        Pixel::new(
            (self.x_min + self.x_max) * half,
            (self.y_min + self.y_max) * half,
        )
    }

    /// Top-left, top-right, bottom-right, bottom-left.
    pub fn corners(&self) -> [Pixel<T>; 4] {
        [
            Pixel::new(self.x_min, self.y_min),
            Pixel::new(self.x_max, self.y_min),
            Pixel::new(self.x_max, self.y_max),
            Pixel::new(self.x_min, self.y_max),
        ]
    }

    /// Midpoints of the top, right, bottom and left edges.
    pub fn edge_midpoints(&self) -> [Pixel<T>; 4] {
        let c = self.center();
        [
            Pixel::new(c.u, self.y_min),
            Pixel::new(self.x_max, c.v),
            Pixel::new(c.u, self.y_max),
            Pixel::new(self.x_min, c.v),
        ]
    }

    pub fn contains(&self, p: Pixel<T>) -> bool {
        p.u >= self.x_min && p.u <= self.x_max && p.v >= self.y_min && p.v <= self.y_max
    }

    /// Smallest box containing all points; `None` when degenerate.
    pub fn hull<I: IntoIterator<Item = Pixel<T>>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.u, first.v, first.u, first.v);
        for p in it {
            x0 = x0.min(p.u);
            y0 = y0.min(p.v);
            x1 = x1.max(p.u);
            y1 = y1.max(p.v);
        }
        Self::new(x0, y0, x1, y1).ok()
    }

    /// Intersection with `[0, width] × [0, height]`; `None` if empty.
    pub fn clip_to(&self, width: u32, height: u32) -> Option<Self> {
        let (w, h) = (T::lit(width as f64), T::lit(height as f64));
        Self::new(
            self.x_min.max(T::zero()),
            self.y_min.max(T::zero()),
            self.x_max.min(w),
            self.y_max.min(h),
        )
        .ok()
    }
}

/// Half-line in ECEF with unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Ray3<T: Real> {
    pub origin: EcefPoint<T>,
    pub direction: Vec3<T>,
}

impl<T: Real> Ray3<T> {
    /// Normalizes `direction`.
    pub fn new(origin: EcefPoint<T>, direction: Vec3<T>) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: T) -> EcefPoint<T> {
        self.origin + self.direction * t
    }
}

/// Outcome of projecting a 3D point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection<T: Real> {
    Visible(Pixel<T>),
    /// Non-positive depth in the camera frame.
    Behind,
    /// In front of the camera but outside the image; unclipped coordinates.
    OutOfImage(Pixel<T>),
}

impl<T: Real> Projection<T> {
    pub fn visible(self) -> Option<Pixel<T>> {
        match self {
            Projection::Visible(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CameraModel<T: Real> {
    pub camera_id: String,
    pub width: u32,
    pub height: u32,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    #[serde(default)]
    pub k1: T,
    #[serde(default)]
    pub k2: T,
    /// Camera → vehicle.
    pub extrinsic: crate::math::Iso3<T>,
}

impl<T: Real> CameraModel<T> {
    pub fn validate(&self) -> Result<(), CameraError> {
        let bad = |reason: &str| CameraError::InvalidIntrinsics {
            id: self.camera_id.clone(),
            reason: reason.to_string(),
        };
        if self.width == 0 || self.height == 0 {
            return Err(bad("zero resolution"));
        }
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(bad("focal lengths must be positive"));
        }
        let (w, h) = (T::lit(self.width as f64), T::lit(self.height as f64));
        if !(self.cx > T::zero() && self.cx < w && self.cy > T::zero() && self.cy < h) {
            return Err(bad("principal point outside image"));
        }
        if !(self.k1.is_finite() && self.k2.is_finite()) {
            return Err(bad("non-finite distortion"));
        }
        let n = self.extrinsic.rotation.norm();
        if !((n - T::one()).abs() < T::lit(1e-6) && self.extrinsic.translation.is_finite()) {
            return Err(CameraError::InvalidExtrinsic {
                id: self.camera_id.clone(),
            });
        }
        Ok(())
    }

    fn has_distortion(&self) -> bool {
        self.k1 != T::zero() || self.k2 != T::zero()
    }

    fn distortion_factor(&self, x: T, y: T) -> T {
        let r2 = x * x + y * y;
        T::one() + self.k1 * r2 + self.k2 * r2 * r2
    }

    /// Normalized (undistorted) image coordinates of a pixel.
    pub fn normalize_pixel(&self, px: Pixel<T>) -> (T, T) {
        let xd = (px.u - self.cx) / self.fx;
        let yd = (px.v - self.cy) / self.fy;
        if !self.has_distortion() {
            return (xd, yd);
        }
        let (mut x, mut y) = (xd, yd);
        for _ in 0..50 {
            let f = self.distortion_factor(x, y);
            let (nx, ny) = (xd / f, yd / f);
            let done = (nx - x).abs() + (ny - y).abs() < T::lit(1e-15);
            x = nx;
            y = ny;
            if done {
                break;
            }
        }
        (x, y)
    }

    /// Pixel of a camera-frame point with positive depth.
    pub fn pixel_of(&self, pc: Vec3<T>) -> Pixel<T> {
        let (x, y) = (pc.x / pc.z, pc.y / pc.z);
        let f = if self.has_distortion() {
            self.distortion_factor(x, y)
        } else {
            T::one()
        };
        Pixel::new(self.fx * x * f + self.cx, self.fy * y * f + self.cy)
    }

    pub fn in_bounds(&self, px: Pixel<T>) -> bool {
        let (w, h) = (T::lit(self.width as f64), T::lit(self.height as f64));
        px.u >= T::zero() && px.u <= w && px.v >= T::zero() && px.v <= h
    }

    /// Camera → ECEF rotation at a pose.
    pub fn rotation_to_ecef(&self, pose: &GeoPose<T>) -> Quat<T> {
        pose.orientation.mul(self.extrinsic.rotation)
    }

    pub fn center(&self, pose: &GeoPose<T>) -> EcefPoint<T> {
        pose.from_vehicle_frame(self.extrinsic.translation)
    }

    /// ECEF point expressed in the camera frame.
    pub fn to_camera_frame(&self, pose: &GeoPose<T>, p: &EcefPoint<T>) -> Vec3<T> {
        let v = pose.to_vehicle_frame(p);
        self.extrinsic.inverse().transform_point(v)
    }
}

/// Back-projects a pixel into an ECEF ray from the camera center.
pub fn pixel_to_ray<T: Real>(
    cam: &CameraModel<T>,
    pose: &GeoPose<T>,
    px: Pixel<T>,
) -> Result<Ray3<T>, CameraError> {
    if !cam.in_bounds(px) {
        return Err(CameraError::PixelOutOfBounds {
            u: px.u.as_f64(),
            v: px.v.as_f64(),
            width: cam.width,
            height: cam.height,
        });
    }
    let (x, y) = cam.normalize_pixel(px);
    let dir_cam = Vec3::new(x, y, T::one());
    let dir = cam.rotation_to_ecef(pose).rotate(dir_cam);
    Ok(Ray3::new(cam.center(pose), dir))
}

pub fn project<T: Real>(cam: &CameraModel<T>, pose: &GeoPose<T>, p: &EcefPoint<T>) -> Projection<T> {
    let pc = cam.to_camera_frame(pose, p);
    if pc.z <= T::zero() {
        return Projection::Behind;
    }
    let px = cam.pixel_of(pc);
    if cam.in_bounds(px) {
        Projection::Visible(px)
    } else {
        Projection::OutOfImage(px)
    }
}

/// Image-space hull of a 3D box's corners, clipped to the image.
///
/// Box edges crossing the camera plane are cut at a small positive depth so
/// that partially visible boxes still get a hull. `None` when nothing lies in
/// front of the camera or the clipped hull has zero area.
pub fn project_box<T: Real>(
    cam: &CameraModel<T>,
    pose: &GeoPose<T>,
    bx: &ObjectBox3D<T>,
) -> Option<BBox2D<T>> {
    let corners: Vec<Vec3<T>> = bx
        .corners()
        .iter()
        .map(|c| cam.to_camera_frame(pose, c))
        .collect();
    project_corners(cam, &corners)
}

/// Clipped hull of box corners given in the camera frame, ordered as
/// [`ObjectBox3D::corners`].
pub(crate) fn project_corners<T: Real>(
    cam: &CameraModel<T>,
    corners: &[Vec3<T>],
) -> Option<BBox2D<T>> {
    let near = T::lit(NEAR_PLANE);
    if corners.iter().all(|c| c.z <= near) {
        return None;
    }
    let mut pts: Vec<Pixel<T>> = corners
        .iter()
        .filter(|c| c.z > near)
        .map(|c| cam.pixel_of(*c))
        .collect();
    for &(a, b) in &BOX_EDGES {
        let (pa, pb) = (corners[a], corners[b]);
        if (pa.z > near) != (pb.z > near) {
            let t = (near - pa.z) / (pb.z - pa.z);
            pts.push(cam.pixel_of(pa + (pb - pa) * t));
        }
    }
    BBox2D::hull(pts)?.clip_to(cam.width, cam.height)
}

/// Corner index pairs of the 12 box edges for [`ObjectBox3D::corners`]
/// ordering (bit 0: width sign, bit 1: depth sign, bit 2: height sign).
const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triangulate::ObjectClass;
    use crate::geo::{wgs84_to_ecef, GeodeticPoint};
    use crate::math::{Iso3, Mat3};
    use proptest::prelude::*;

    /// Forward-looking camera: optical axis along vehicle x, image x along
    /// vehicle −y, image y along vehicle −z, mounted 1.5 m up.
    pub(crate) fn forward_camera(k1: f64, k2: f64) -> CameraModel<f64> {
        let r = Mat3::from_cols(
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::new(1.0, 0.0, 0.0),
        );
        CameraModel {
            camera_id: "front".into(),
            width: 1920,
            height: 1080,
            fx: 1000.0,
            fy: 1000.0,
            cx: 960.0,
            cy: 540.0,
            k1,
            k2,
            extrinsic: Iso3::new(Quat::from_matrix(&r), Vec3::new(1.2, 0.0, 1.5)),
        }
    }

    fn identity_camera() -> CameraModel<f64> {
        CameraModel {
            camera_id: "id".into(),
            width: 1000,
            height: 800,
            fx: 500.0,
            fy: 500.0,
            cx: 500.0,
            cy: 400.0,
            k1: 0.0,
            k2: 0.0,
            extrinsic: Iso3::identity(),
        }
    }

    fn identity_pose() -> GeoPose<f64> {
        GeoPose::new(0.0, EcefPoint::new(0.0, 0.0, 0.0), Quat::identity())
    }

    fn street_pose() -> GeoPose<f64> {
        let p = wgs84_to_ecef(&GeodeticPoint::new(37.44, -122.16, 12.0).unwrap());
        GeoPose::from_heading(0.0, p, 0.4)
    }

    #[test]
    fn principal_point_is_optical_axis() {
        let ray = pixel_to_ray(&identity_camera(), &identity_pose(), Pixel::new(500.0, 400.0))
            .unwrap();
        assert!((ray.direction - Vec3::unit_z()).norm() < 1e-15);
    }

    #[test]
    fn one_focal_length_right_is_45_degrees() {
        let cam = identity_camera();
        let ray = pixel_to_ray(&cam, &identity_pose(), Pixel::new(cam.cx + cam.fx, cam.cy))
            .unwrap();
        let angle = ray.direction.angle_to(Vec3::unit_z());
        assert!((angle - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!(ray.direction.y.abs() < 1e-15);
    }

    #[test]
    fn out_of_bounds_pixel_is_domain_error() {
        let cam = identity_camera();
        assert!(matches!(
            pixel_to_ray(&cam, &identity_pose(), Pixel::new(-1.0, 10.0)),
            Err(CameraError::PixelOutOfBounds { .. })
        ));
    }

    #[test]
    fn axis_point_projects_to_principal_point() {
        let cam = forward_camera(0.0, 0.0);
        let pose = street_pose();
        let p = cam.center(&pose) + cam.rotation_to_ecef(&pose).rotate(Vec3::unit_z()) * 10.0;
        let px = project(&cam, &pose, &p).visible().unwrap();
        assert!(px.distance(Pixel::new(960.0, 540.0)) < 1e-6);
        let behind = cam.center(&pose) - cam.rotation_to_ecef(&pose).rotate(Vec3::unit_z()) * 3.0;
        assert_eq!(project(&cam, &pose, &behind), Projection::Behind);
    }

    #[test]
    fn pixel_ray_depth_roundtrip() {
        for (k1, k2) in [(0.0, 0.0), (-0.12, 0.03)] {
            let cam = forward_camera(k1, k2);
            let pose = street_pose();
            let px = Pixel::new(1500.0, 300.0);
            let ray = pixel_to_ray(&cam, &pose, px).unwrap();
            let z_cam = cam.rotation_to_ecef(&pose).rotate(Vec3::unit_z());
            let p = ray.at(30.0 / ray.direction.dot(z_cam));
            let back = project(&cam, &pose, &p).visible().unwrap();
            assert!(back.distance(px) < 1e-6, "{back:?}");
        }
    }

    #[test]
    fn unit_cube_projects_to_closed_form_square() {
        let mut cam = identity_camera();
        cam.width = 2000;
        cam.height = 2000;
        cam.fx = 1000.0;
        cam.fy = 1000.0;
        cam.cx = 1000.0;
        cam.cy = 1000.0;
        // Build the box directly in the camera frame.
        let corners: Vec<Vec3<f64>> = (0..8)
            .map(|i| {
                let s = |b: usize| if i & b != 0 { 0.5 } else { -0.5 };
                Vec3::new(s(1), s(4), 10.0 + s(2))
            })
            .collect();
        let b = project_corners(&cam, &corners).unwrap();
        let side = 2.0 * 1000.0 * 0.5 / 9.5;
        assert!((b.width() - side).abs() < 1e-9);
        assert!((b.height() - side).abs() < 1e-9);
        assert!(b.center().distance(Pixel::new(1000.0, 1000.0)) < 1e-9);
    }

    fn box_ahead(pose: &GeoPose<f64>, fwd: f64, left: f64, up: f64) -> ObjectBox3D<f64> {
        let center = pose.from_vehicle_frame(Vec3::new(fwd, left, up));
        ObjectBox3D::new(
            0,
            ObjectClass::TrafficSign,
            center,
            [1.0, 1.0, 1.0],
            pose.heading() + std::f64::consts::PI,
        )
    }

    #[test]
    fn box_behind_is_not_visible() {
        let cam = forward_camera(0.0, 0.0);
        let pose = street_pose();
        assert!(project_box(&cam, &pose, &box_ahead(&pose, -10.0, 0.0, 1.5)).is_none());
    }

    #[test]
    fn box_on_image_edge_is_clipped() {
        let cam = forward_camera(0.0, 0.0);
        let pose = street_pose();
        // Image left edge maps to +y in the vehicle frame; u = 0 at y/x = 0.96.
        let b = project_box(&cam, &pose, &box_ahead(&pose, 11.2, 9.6, 1.5)).unwrap();
        assert_eq!(b.x_min, 0.0);
        assert!(b.x_max > 0.0);
    }

    #[test]
    fn box_straddling_camera_plane_gets_a_hull() {
        let cam = forward_camera(0.0, 0.0);
        let pose = street_pose();
        let b = project_box(&cam, &pose, &box_ahead(&pose, 1.3, 0.0, 1.5));
        assert!(b.is_some());
    }

    proptest! {
        #[test]
        fn project_inverts_pixel_to_ray(
            fwd in 5.0..200.0f64, left in -60.0..60.0f64, up in -20.0..40.0f64,
            k1 in -0.05..0.05f64,
        ) {
            let cam = forward_camera(k1, 0.0);
            let pose = street_pose();
            let p = pose.from_vehicle_frame(Vec3::new(fwd, left, up));
            // Radial distortion is only invertible inside the undistorted
            // field of view.
            let pc = cam.to_camera_frame(&pose, &p);
            let in_fov = pc.z > 0.0
                && (pc.x / pc.z).abs() <= cam.cx / cam.fx
                && (pc.y / pc.z).abs() <= cam.cy / cam.fy;
            if !in_fov {
                return Ok(());
            }
            if let Projection::Visible(px) = project(&cam, &pose, &p) {
                let ray = pixel_to_ray(&cam, &pose, px).unwrap();
                let depth = (p - ray.origin).dot(ray.direction);
                let back = project(&cam, &pose, &ray.at(depth)).visible();
                prop_assert!(back.is_some());
                prop_assert!(back.unwrap().distance(px) < 1e-6);
                // The ray passes through the point.
                prop_assert!(ray.at(depth).distance(p) < 1e-6);
            }
        }

        #[test]
        fn hull_contains_visible_center(
            fwd in 3.0..150.0f64, left in -40.0..40.0f64, up in -5.0..20.0f64,
        ) {
            let cam = forward_camera(0.0, 0.0);
            let pose = street_pose();
            let bx = box_ahead(&pose, fwd, left, up);
            if let Projection::Visible(c) = project(&cam, &pose, &bx.center) {
                let hull = project_box(&cam, &pose, &bx).unwrap();
                prop_assert!(hull.contains(c));
            }
        }
    }

    #[test]
    fn project_and_cast_in_f32() {
        let cam = CameraModel::<f32> {
            camera_id: "id".into(),
            width: 1000,
            height: 800,
            fx: 500.0,
            fy: 500.0,
            cx: 500.0,
            cy: 400.0,
            k1: -0.1,
            k2: 0.02,
            extrinsic: Iso3::identity(),
        };
        let pose = GeoPose::new(0.0f32, EcefPoint::new(0.0, 0.0, 0.0), Quat::identity());
        let p = EcefPoint::new(1.0f32, -0.5, 8.0);
        let px = project(&cam, &pose, &p).visible().unwrap();
        let ray = pixel_to_ray(&cam, &pose, px).unwrap();
        let back = ray.at(p.to_vec().norm());
        assert!(back.distance(p) < 1e-3, "{back:?}");
    }

}
