//! 3D annotation of traffic lights and signs from per-frame 2D detections,
//! GNSS/INS ego poses and camera calibration.
//!
//! Stages run in this order: [`triangulate`] turns detection rays into
//! object centers, [`boxfit`] estimates extent and yaw, [`refine`] drops
//! boxes that lie on the sightlines of better ones, and [`export`] projects
//! the map into each frame. [`pipeline`] composes them. [`sim`] generates
//! scenes with known ground truth and [`eval`] scores predictions against it.
//!
//! Geometry is generic over the scalar (`f32` or `f64`); the aliases below
//! fix it to `f64`, which file readers and the simulator use.

pub mod scalar;
pub mod math;
pub mod geo;
pub mod camera;
pub mod sequence;
pub mod triangulate;
pub mod boxfit;
pub mod refine;
pub mod export;
pub mod io;
pub mod pipeline;
pub mod sim;
pub mod eval;

pub use scalar::Real;

pub type Vec3 = math::Vec3<f64>;
pub type Quat = math::Quat<f64>;
pub type EcefPoint = geo::EcefPoint<f64>;
pub type GeodeticPoint = geo::GeodeticPoint<f64>;
pub type GeoPose = geo::GeoPose<f64>;
pub type PoseTrack = geo::PoseTrack<f64>;
pub type CameraModel = camera::CameraModel<f64>;
pub type BBox2D = camera::BBox2D<f64>;
pub type Detection2D = triangulate::Detection2D<f64>;
pub type ObjectBox3D = boxfit::ObjectBox3D<f64>;
pub type FrameAnnotation = export::FrameAnnotation<f64>;
pub type Sequence = sequence::Sequence<f64>;

/// Single-precision variants of the geometric types.
pub mod f32 {
    pub type Vec3 = crate::math::Vec3<f32>;
    pub type EcefPoint = crate::geo::EcefPoint<f32>;
    pub type GeoPose = crate::geo::GeoPose<f32>;
    pub type CameraModel = crate::camera::CameraModel<f32>;
    pub type ObjectBox3D = crate::boxfit::ObjectBox3D<f32>;
    pub type Sequence = crate::sequence::Sequence<f32>;
}
