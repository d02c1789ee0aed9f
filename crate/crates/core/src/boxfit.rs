//! Box extent and orientation around a triangulated center.
//!
//! Extent comes from cross-sections: the rays through a detection's bbox
//! corners (lights) or edge midpoints (signs) are intersected with the
//! vertical plane through the object center that faces the camera, and the
//! spread of the intersections gives one width/height sample per view.
//! Orientation is yaw-only, about the local ellipsoidal up at the center.

use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{pixel_to_ray, BBox2D, CameraModel, Pixel};
use crate::geo::{enu_basis_at, heading_at, EcefPoint, GeoPose};
use crate::math::Vec3;
use crate::scalar::{wrap_angle, Real};
use crate::sequence::Sequence;
use crate::triangulate::{Attributes, LocalizedCenter, Observation};

pub use crate::triangulate::ObjectClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoxFitError {
    #[error("line of sight within {0}° of vertical")]
    DegenerateView(f64),
    #[error("bbox ray misses the section plane")]
    RayMissesPlane,
    #[error("no usable observations")]
    NoObservations,
    #[error("object never ahead of the vehicle")]
    NoValidPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoxFitConfig {
    /// Fixed depth assigned to signs, m.
    pub sign_depth: f64,
    /// Ego distance at which a light's facing direction is read off, m.
    pub light_orientation_distance: f64,
    /// Sightlines closer to vertical than this are skipped, degrees.
    pub degenerate_view_angle: f64,
}

impl Default for BoxFitConfig {
    fn default() -> Self {
        Self {
            sign_depth: 0.10,
            light_orientation_distance: 10.0,
            degenerate_view_angle: 5.0,
        }
    }
}

/// Oriented 3D box in ECEF.
///
/// `extent` is `[width, depth, height]`: width runs across the face, depth
/// along the facing direction, height along the local up. `yaw` is the ENU
/// heading (radians, counter-clockwise from east) of the facing direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ObjectBox3D<T: Real> {
    pub object_id: u64,
    pub class: ObjectClass,
    pub center: EcefPoint<T>,
    pub extent: [T; 3],
    pub yaw: T,
    #[serde(default)]
    pub attributes: Attributes,
    #[serde(default)]
    pub support: usize,
}

impl<T: Real> ObjectBox3D<T> {
    pub fn new(
        object_id: u64,
        class: ObjectClass,
        center: EcefPoint<T>,
        extent: [T; 3],
        yaw: T,
    ) -> Self {
        Self {
            object_id,
            class,
            center,
            extent,
            yaw,
            attributes: Attributes::new(),
            support: 0,
        }
    }

    /// Facing, left and up unit vectors in ECEF.
    pub fn axes(&self) -> [Vec3<T>; 3] {
        let enu = enu_basis_at(&self.center);
        let up = enu.row(2);
        let (s, c) = self.yaw.sin_cos();
        let facing = enu.row(0) * c + enu.row(1) * s;
        [facing, up.cross(facing), up]
    }

    /// Eight corners; bit 0 of the index selects the width side, bit 1 the
    /// depth side, bit 2 the height side.
    pub fn corners(&self) -> [EcefPoint<T>; 8] {
        let [facing, left, up] = self.axes();
        let half = T::lit(0.5);
        let [w, d, h] = self.extent;
        std::array::from_fn(|i| {
            let sign = |bit: usize| if i & bit != 0 { T::one() } else { -T::one() };
            self.center
                + left * (sign(1) * w * half)
                + facing * (sign(2) * d * half)
                + up * (sign(4) * h * half)
        })
    }
}

/// Width and height of the object measured in one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSection<T: Real> {
    pub width: T,
    pub height: T,
    pub frame: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionMode {
    /// Rays through the four bbox corners.
    Corners,
    /// Rays through the midpoints of the four bbox edges.
    EdgePoints,
}

impl SectionMode {
    pub fn for_class(class: ObjectClass) -> Self {
        match class {
            ObjectClass::TrafficLight => SectionMode::Corners,
            ObjectClass::TrafficSign => SectionMode::EdgePoints,
        }
    }
}

/// Measures one cross-section on the vertical plane through `center` whose
/// normal is the horizontal part of the camera→center direction.
#[allow(clippy::too_many_arguments)]
pub fn cross_section<T: Real>(
    center: &EcefPoint<T>,
    pose: &GeoPose<T>,
    cam: &CameraModel<T>,
    bbox: &BBox2D<T>,
    mode: SectionMode,
    frame: usize,
    degenerate_angle_deg: f64,
) -> Result<CrossSection<T>, BoxFitError> {
    let origin = cam.center(pose);
    let up = enu_basis_at(center).row(2);
    let los = *center - origin;
    let horizontal = los - up * los.dot(up);
    let min_sin = T::lit(degenerate_angle_deg.to_radians().sin());
    if horizontal.norm() < los.norm() * min_sin {
        return Err(BoxFitError::DegenerateView(degenerate_angle_deg));
    }
    let normal = horizontal.normalize();
    let across = up.cross(normal);
    let pixels: [Pixel<T>; 4] = match mode {
        SectionMode::Corners => bbox.corners(),
        SectionMode::EdgePoints => bbox.edge_midpoints(),
    };
    let (mut h_min, mut h_max) = (T::infinity(), T::neg_infinity());
    let (mut v_min, mut v_max) = (T::infinity(), T::neg_infinity());
    for px in pixels {
        let ray = pixel_to_ray(cam, pose, px).map_err(|_| BoxFitError::RayMissesPlane)?;
        let denom = normal.dot(ray.direction);
        if denom <= T::lit(1e-9) {
            return Err(BoxFitError::RayMissesPlane);
        }
        let t = normal.dot(*center - ray.origin) / denom;
        let offset = ray.at(t) - *center;
        let (h, v) = (offset.dot(across), offset.dot(up));
        h_min = h_min.min(h);
        h_max = h_max.max(h);
        v_min = v_min.min(v);
        v_max = v_max.max(v);
    }
    Ok(CrossSection {
        width: h_max - h_min,
        height: v_max - v_min,
        frame,
    })
}

fn mean<T: Real>(values: impl Iterator<Item = T>) -> Option<T> {
    let (sum, n) = values.fold((T::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / T::from_count(n))
}

/// Light extent: mean width (used for width and depth) and mean height.
pub fn estimate_extent_light<T: Real>(sections: &[CrossSection<T>]) -> Result<[T; 3], BoxFitError> {
    let w = mean(sections.iter().map(|s| s.width)).ok_or(BoxFitError::NoObservations)?;
    let h = mean(sections.iter().map(|s| s.height)).ok_or(BoxFitError::NoObservations)?;
    Ok([w, w, h])
}

/// Sign extent: maximum width, mean height, fixed depth.
pub fn estimate_extent_sign<T: Real>(
    sections: &[CrossSection<T>],
    sign_depth: T,
) -> Result<[T; 3], BoxFitError> {
    let w = sections
        .iter()
        .map(|s| s.width)
        .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.max(v))))
        .ok_or(BoxFitError::NoObservations)?;
    let h = mean(sections.iter().map(|s| s.height)).ok_or(BoxFitError::NoObservations)?;
    Ok([w, sign_depth, h])
}

/// Light yaw: opposite of the vehicle heading at the pose whose horizontal
/// distance to the light is closest to `target_distance`, among poses that
/// have the light ahead. Ties go to the earliest pose.
pub fn estimate_orientation_light<T: Real>(
    center: &EcefPoint<T>,
    poses: &[GeoPose<T>],
    target_distance: T,
) -> Result<T, BoxFitError> {
    let mut best: Option<(T, &GeoPose<T>)> = None;
    for pose in poses {
        let v = pose.to_vehicle_frame(center);
        if v.x <= T::zero() {
            continue;
        }
        let miss = (v.x.hypot(v.y) - target_distance).abs();
        if best.is_none_or(|(b, _)| miss < b) {
            best = Some((miss, pose));
        }
    }
    let (_, pose) = best.ok_or(BoxFitError::NoValidPose)?;
    let forward = pose.orientation.rotate(Vec3::unit_x());
    Ok(wrap_angle(heading_at(forward, center) + T::PI()))
}

/// One sign view: line of sight from the camera to the center and the
/// width measured in that view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignView<T: Real> {
    pub frame: usize,
    pub line_of_sight: Vec3<T>,
    pub width: T,
}

/// Sign yaw: reverse of the horizontal line of sight in the view with the
/// largest measured width (earliest frame on ties).
pub fn estimate_orientation_sign<T: Real>(
    center: &EcefPoint<T>,
    views: &[SignView<T>],
) -> Result<T, BoxFitError> {
    let best = views
        .iter()
        .fold(None::<&SignView<T>>, |acc, v| match acc {
            None => Some(v),
            Some(b) if v.width > b.width || (v.width == b.width && v.frame < b.frame) => Some(v),
            keep => keep,
        })
        .ok_or(BoxFitError::NoObservations)?;
    Ok(heading_at(-best.line_of_sight, center))
}

/// Most frequent value per attribute key; ties go to the smallest value.
pub fn majority_attributes<'a, I>(sources: I) -> Attributes
where
    I: IntoIterator<Item = &'a Attributes>,
{
    let mut votes: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for attrs in sources {
        for (k, v) in attrs {
            *votes.entry(k).or_default().entry(v).or_default() += 1;
        }
    }
    votes
        .into_iter()
        .filter_map(|(k, counts)| {
            let mut best: Option<(&str, usize)> = None;
            for (v, n) in counts {
                if best.is_none_or(|(_, bn)| n > bn) {
                    best = Some((v, n));
                }
            }
            best.map(|(v, _)| (k.to_string(), v.to_string()))
        })
        .collect()
}

/// Fits extent, yaw and attributes for one localized center from the
/// observations that produced it. Degenerate views are skipped.
pub fn fit_box<T: Real>(
    object_id: u64,
    loc: &LocalizedCenter<T>,
    observations: &[Observation<T>],
    seq: &Sequence<T>,
    cfg: &BoxFitConfig,
) -> Result<ObjectBox3D<T>, BoxFitError> {
    let mode = SectionMode::for_class(loc.class);
    let mut sections = Vec::new();
    let mut views = Vec::new();
    for &oi in &loc.observations {
        let obs = &observations[oi];
        let det = &seq.detections[obs.detection];
        let cam = &seq.cameras[obs.camera];
        let pose = &seq.frames[obs.frame].pose;
        match cross_section(
            &loc.center,
            pose,
            cam,
            &det.bbox,
            mode,
            obs.frame,
            cfg.degenerate_view_angle,
        ) {
            Ok(s) => {
                views.push(SignView {
                    frame: obs.frame,
                    line_of_sight: (loc.center - cam.center(pose)).normalize(),
                    width: s.width,
                });
                sections.push(s);
            }
            Err(e) => debug!("object {object_id}: view in frame {} skipped: {e}", obs.frame),
        }
    }
    let (extent, yaw) = match loc.class {
        ObjectClass::TrafficLight => {
            let extent = estimate_extent_light(&sections)?;
            let poses: Vec<GeoPose<T>> = seq.frames.iter().map(|f| f.pose).collect();
            let yaw = match estimate_orientation_light(
                &loc.center,
                &poses,
                T::lit(cfg.light_orientation_distance),
            ) {
                Ok(y) => y,
                Err(BoxFitError::NoValidPose) => estimate_orientation_sign(&loc.center, &views)?,
                Err(e) => return Err(e),
            };
            (extent, yaw)
        }
        ObjectClass::TrafficSign => (
            estimate_extent_sign(&sections, T::lit(cfg.sign_depth))?,
            estimate_orientation_sign(&loc.center, &views)?,
        ),
    };
    let attributes = majority_attributes(
        loc.observations
            .iter()
            .map(|&oi| &seq.detections[observations[oi].detection].attributes),
    );
    Ok(ObjectBox3D {
        object_id,
        class: loc.class,
        center: loc.center,
        extent,
        yaw,
        attributes,
        support: loc.support,
    })
}
