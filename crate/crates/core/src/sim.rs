//! Synthetic scenes with known ground truth.
//!
//! A scene is a set of boxes placed in a local ENU frame, an ego path
//! through waypoints at constant speed, and a camera rig. Detections are the
//! tight hulls of the projected box corners under the true poses; noise is
//! added only through [`NoiseSpec`], so a zero-noise scene is exact.
//!
//! Scene files are TOML:
//!
//! ```toml
//! sequence = "demo"
//! seed = 7
//!
//! [origin]
//! latitude = 48.137
//! longitude = 11.575
//! altitude = 520.0
//!
//! [trajectory]
//! waypoints = [[0.0, 0.0], [150.0, 0.0]]   # east, north in m
//! speed = 10.0                               # m/s
//! frame_rate = 30.0                          # Hz
//!
//! [[camera]]
//! id = "front"
//! width = 1920
//! height = 1080
//! fx = 1400.0
//! fy = 1400.0
//! cx = 960.0
//! cy = 540.0
//! extrinsic = [0, 0, 1, 1.5,  -1, 0, 0, 0,  0, -1, 0, 1.4,  0, 0, 0, 1]
//!
//! [[object]]
//! class = "traffic_light"
//! center = [60.0, 3.0, 5.5]      # east, north, up in m
//! extent = [0.35, 0.35, 1.1]     # width, depth, height in m
//! yaw_deg = 180.0                # facing direction, CCW from east
//! attributes = { state = "red" }
//!
//! [noise]
//! pixel_sigma = 1.0
//!
//! [[ghost]]
//! object = 0                     # index into the object list
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfit::{ObjectBox3D, ObjectClass};
use crate::camera::{project, project_box, BBox2D, CameraModel, Projection};
use crate::export::{annotate_frame, write_map, write_sequence, ExportConfig, ExportError, FrameAnnotation};
use crate::geo::{
    enu_basis, enu_to_ecef, heading_at, local_up, GeoPose, GeodeticPoint, PoseTrack,
};
use crate::io::{format_calibration, format_detections, format_frames, format_poses, write, CameraSpec, InputError};
use crate::math::{Quat, Vec3};
use crate::sequence::{frames_from_track, FrameStamp, Sequence, SequenceError};
use crate::triangulate::{Attributes, Detection2D};

/// Values a noisy `state` label is flipped between.
pub const STATE_LABELS: [&str; 3] = ["red", "yellow", "green"];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Export(#[from] ExportError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginSpec {
    pub latitude: f64,
    pub longitude: f64,
    #[serde(default)]
    pub altitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Polyline in the origin's ENU plane, `[east, north]` m.
    pub waypoints: Vec<[f64; 2]>,
    /// m/s.
    pub speed: f64,
    /// Camera frames per second.
    pub frame_rate: f64,
    /// Pose samples per second; defaults to `frame_rate`.
    #[serde(default)]
    pub pose_rate: Option<f64>,
    /// Height of the vehicle reference point above the origin plane, m.
    #[serde(default)]
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub class: ObjectClass,
    /// `[east, north, up]` in the origin ENU frame, m.
    pub center: [f64; 3],
    /// `[width, depth, height]`, m.
    pub extent: [f64; 3],
    /// Facing direction, degrees counter-clockwise from east.
    pub yaw_deg: f64,
    #[serde(default)]
    pub attributes: Attributes,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Per bbox edge, px.
    pub pixel_sigma: f64,
    /// Per reported pose and axis, m.
    pub pose_position_sigma: f64,
    /// Per reported pose, about local up, degrees.
    pub pose_yaw_sigma_deg: f64,
    /// Probability that a detection is dropped.
    pub dropout: f64,
    /// Probability that a detection's `state` label is replaced.
    pub label_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhostSpec {
    /// Index of the object whose sightline hosts the ghost.
    pub object: usize,
    /// Anchor pose: the frame whose horizontal distance to the object is
    /// closest to this, m.
    #[serde(default = "GhostSpec::default_distance")]
    pub distance: f64,
    /// Ghost center lies this far beyond the object on the anchor sightline, m.
    #[serde(default = "GhostSpec::default_depth_offset")]
    pub depth_offset: f64,
    /// Frames around the anchor in which the ghost is detected.
    #[serde(default = "GhostSpec::default_window")]
    pub window: usize,
    /// Camera defining the sightline; defaults to the first camera.
    #[serde(default)]
    pub camera: Option<String>,
}

impl GhostSpec {
    fn default_distance() -> f64 {
        35.0
    }
    fn default_depth_offset() -> f64 {
        3.0
    }
    fn default_window() -> usize {
        31
    }

    pub fn new(object: usize) -> Self {
        Self {
            object,
            distance: Self::default_distance(),
            depth_offset: Self::default_depth_offset(),
            window: Self::default_window(),
            camera: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSpec {
    pub confidence: f64,
    /// Smaller boxes (either side, px) are not detected.
    pub min_box_size: f64,
    /// Drop detections whose box is not fully inside the image.
    pub drop_truncated: bool,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            confidence: 0.9,
            min_box_size: 4.0,
            drop_truncated: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "SceneSpec::default_sequence")]
    pub sequence: String,
    #[serde(default)]
    pub seed: u64,
    pub origin: OriginSpec,
    pub trajectory: TrajectorySpec,
    #[serde(rename = "camera")]
    pub cameras: Vec<CameraSpec>,
    #[serde(rename = "object", default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(rename = "ghost", default)]
    pub ghosts: Vec<GhostSpec>,
    #[serde(default)]
    pub detector: DetectorSpec,
}

impl SceneSpec {
    fn default_sequence() -> String {
        "sim".into()
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let spec: Self = toml::from_str(text).map_err(|e| SimError::Invalid(vec![e.to_string()]))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| InputError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<(), SimError> {
        let mut bad = Vec::new();
        if self.sequence.is_empty() || self.sequence.contains(['/', '\\']) {
            bad.push(format!("sequence: {:?} is not a valid directory name", self.sequence));
        }
        if GeodeticPoint::new(self.origin.latitude, self.origin.longitude, self.origin.altitude).is_err() {
            bad.push("origin: latitude/longitude out of range".into());
        }
        let t = &self.trajectory;
        if t.waypoints.len() < 2 {
            bad.push("trajectory.waypoints: need at least 2".into());
        }
        if t.waypoints.windows(2).any(|w| w[0] == w[1]) {
            bad.push("trajectory.waypoints: consecutive duplicates".into());
        }
        if !(t.speed > 0.0 && t.speed.is_finite()) {
            bad.push("trajectory.speed: must be positive".into());
        }
        if !(t.frame_rate > 0.0 && t.frame_rate.is_finite()) {
            bad.push("trajectory.frame_rate: must be positive".into());
        }
        if let Some(r) = t.pose_rate {
            if !(r > 0.0 && r.is_finite()) {
                bad.push("trajectory.pose_rate: must be positive".into());
            }
        }
        if self.cameras.is_empty() {
            bad.push("camera: at least one camera required".into());
        }
        for c in &self.cameras {
            if let Err(e) = c.to_model::<f64>() {
                bad.push(format!("camera: {e}"));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.extent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                bad.push(format!("object[{i}].extent: components must be positive"));
            }
            if o.center.iter().chain([&o.yaw_deg]).any(|v| !v.is_finite()) {
                bad.push(format!("object[{i}]: non-finite center or yaw"));
            }
        }
        let n = &self.noise;
        for (name, v) in [
            ("noise.pixel_sigma", n.pixel_sigma),
            ("noise.pose_position_sigma", n.pose_position_sigma),
            ("noise.pose_yaw_sigma_deg", n.pose_yaw_sigma_deg),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name}: must be non-negative"));
            }
        }
        for (name, v) in [("noise.dropout", n.dropout), ("noise.label_noise", n.label_noise)] {
            if !(0.0..=1.0).contains(&v) {
                bad.push(format!("{name}: must be within [0, 1]"));
            }
        }
        for (i, g) in self.ghosts.iter().enumerate() {
            if g.object >= self.objects.len() {
                bad.push(format!("ghost[{i}].object: no object {}", g.object));
            }
            if !(g.depth_offset > 0.0) || !(g.distance > 0.0) {
                bad.push(format!("ghost[{i}]: distance and depth_offset must be positive"));
            }
            if g.window == 0 {
                bad.push(format!("ghost[{i}].window: must be positive"));
            }
            if let Some(c) = &g.camera {
                if !self.cameras.iter().any(|s| &s.id == c) {
                    bad.push(format!("ghost[{i}].camera: unknown camera {c:?}"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.detector.confidence) {
            bad.push("detector.confidence: must be within [0, 1]".into());
        }
        if !(self.detector.min_box_size >= 0.0) {
            bad.push("detector.min_box_size: must be non-negative".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(SimError::Invalid(bad))
        }
    }
}

/// Everything a scene produces.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub sequence: String,
    pub frames: Vec<FrameStamp<f64>>,
    /// Exact pose at each frame.
    pub true_poses: Vec<GeoPose<f64>>,
    /// Pose stream as a recorder would report it, noise included.
    pub reported_poses: Vec<GeoPose<f64>>,
    pub detections: Vec<Detection2D<f64>>,
    pub cameras: Vec<CameraModel<f64>>,
    /// Object ids start at 1 and follow the scene's object order.
    pub ground_truth: Vec<ObjectBox3D<f64>>,
    /// Injected phantoms, for diagnostics only.
    pub ghosts: Vec<ObjectBox3D<f64>>,
}

struct Path2 {
    points: Vec<Vec3<f64>>,
    /// Cumulative arc length at each waypoint.
    arc: Vec<f64>,
}

impl Path2 {
    fn new(waypoints: &[[f64; 2]], height: f64) -> Self {
        let points: Vec<Vec3<f64>> = waypoints.iter().map(|w| Vec3::new(w[0], w[1], height)).collect();
        let mut arc = vec![0.0];
        for w in points.windows(2) {
            arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self { points, arc }
    }

    fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// ENU position and unit direction at arc length `s`.
    fn at(&self, s: f64) -> (Vec3<f64>, Vec3<f64>) {
        let s = s.clamp(0.0, self.length());
        let i = match self.arc.iter().position(|&a| a > s) {
            Some(i) => i.max(1) - 1,
            None => self.points.len() - 2,
        };
        let seg = self.points[i + 1] - self.points[i];
        let len = self.arc[i + 1] - self.arc[i];
        let u = (s - self.arc[i]) / len;
        (self.points[i] + seg * u, seg / len)
    }
}

fn direction_to_ecef(dir_enu: Vec3<f64>, origin: &GeodeticPoint<f64>) -> Vec3<f64> {
    enu_basis(origin).transpose().mul_vec(dir_enu)
}

fn pose_at(path: &Path2, origin: &GeodeticPoint<f64>, speed: f64, t: f64) -> GeoPose<f64> {
    let (p, d) = path.at(speed * t);
    let pos = enu_to_ecef(p, origin);
    let heading = heading_at(direction_to_ecef(d, origin), &pos);
    GeoPose::from_heading(t, pos, heading)
}

fn object_box(id: u64, o: &ObjectSpec, origin: &GeodeticPoint<f64>) -> ObjectBox3D<f64> {
    let center = enu_to_ecef(Vec3::from_array(o.center), origin);
    let (s, c) = o.yaw_deg.to_radians().sin_cos();
    let yaw = heading_at(direction_to_ecef(Vec3::new(c, s, 0.0), origin), &center);
    let mut b = ObjectBox3D::new(id, o.class, center, o.extent, yaw);
    b.attributes = o.attributes.clone();
    b
}

/// Exact detection box of `b`, subject to the detector's visibility rules.
fn detect(
    cam: &CameraModel<f64>,
    pose: &GeoPose<f64>,
    b: &ObjectBox3D<f64>,
    det: &DetectorSpec,
) -> Option<BBox2D<f64>> {
    if det.drop_truncated {
        let inside = b
            .corners()
            .iter()
            .all(|c| matches!(project(cam, pose, c), Projection::Visible(_)));
        if !inside {
            return None;
        }
    }
    let bb = project_box(cam, pose, b)?;
    (bb.width() >= det.min_box_size && bb.height() >= det.min_box_size).then_some(bb)
}

struct Emitter {
    object: ObjectBox3D<f64>,
    /// Frame range in which it is detectable.
    frames: std::ops::Range<usize>,
}

fn place_ghost(
    g: &GhostSpec,
    truth: &ObjectBox3D<f64>,
    poses: &[GeoPose<f64>],
    cameras: &[CameraModel<f64>],
) -> Option<Emitter> {
    let cam = match &g.camera {
        Some(id) => cameras.iter().find(|c| &c.camera_id == id)?,
        None => cameras.first()?,
    };
    let anchor = poses
        .iter()
        .enumerate()
        .filter(|(_, p)| project(cam, p, &truth.center).visible().is_some())
        .map(|(i, p)| {
            let v = truth.center - p.position;
            let up = local_up(&p.position);
            let horizontal = (v - up * v.dot(up)).norm();
            (i, (horizontal - g.distance).abs())
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?
        .0;
    let los = (truth.center - cam.center(&poses[anchor])).normalize();
    let mut object = truth.clone();
    object.center = truth.center + los * g.depth_offset;
    let half = g.window / 2;
    let start = anchor.saturating_sub(half);
    let end = (anchor + g.window - half).min(poses.len());
    Some(Emitter {
        object,
        frames: start..end,
    })
}

fn noisy_pose(
    p: &GeoPose<f64>,
    noise: &NoiseSpec,
    rng: &mut ChaCha8Rng,
) -> GeoPose<f64> {
    let mut out = *p;
    if noise.pose_position_sigma > 0.0 {
        let n = Normal::new(0.0, noise.pose_position_sigma).expect("sigma validated");
        out.position = out.position + Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
    }
    if noise.pose_yaw_sigma_deg > 0.0 {
        let n = Normal::new(0.0, noise.pose_yaw_sigma_deg.to_radians()).expect("sigma validated");
        let q = Quat::from_axis_angle(local_up(&out.position), n.sample(rng));
        out.orientation = q.mul(out.orientation).normalize();
    }
    out
}

fn noisy_bbox(
    b: BBox2D<f64>,
    cam: &CameraModel<f64>,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Option<BBox2D<f64>> {
    if sigma == 0.0 {
        return Some(b);
    }
    let n = Normal::new(0.0, sigma).expect("sigma validated");
    let (w, h) = (cam.width as f64, cam.height as f64);
    let x0 = (b.x_min + n.sample(rng)).clamp(0.0, w);
    let y0 = (b.y_min + n.sample(rng)).clamp(0.0, h);
    let x1 = (b.x_max + n.sample(rng)).clamp(0.0, w);
    let y1 = (b.y_max + n.sample(rng)).clamp(0.0, h);
    BBox2D::new(x0, y0, x1, y1).ok()
}

fn flip_state(attrs: &mut Attributes, rng: &mut ChaCha8Rng) {
    let Some(current) = attrs.get("state").cloned() else {
        return;
    };
    let choices: Vec<&str> = STATE_LABELS.iter().copied().filter(|s| *s != current).collect();
    let pick = choices[rng.random_range(0..choices.len())];
    attrs.insert("state".into(), pick.to_string());
}

/// Runs a scene. Deterministic for a given spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<SimOutput, SimError> {
    spec.validate()?;
    let origin = GeodeticPoint::new(spec.origin.latitude, spec.origin.longitude, spec.origin.altitude)
        .expect("validated");
    let cameras: Vec<CameraModel<f64>> = spec
        .cameras
        .iter()
        .map(|c| c.to_model().expect("validated"))
        .collect();
    let traj = &spec.trajectory;
    let path = Path2::new(&traj.waypoints, traj.height);
    let duration = path.length() / traj.speed;
    // Tolerate rounding at the final sample.
    let count = |rate: f64| (duration * rate + 1e-9).floor() as usize + 1;

    let frames: Vec<FrameStamp<f64>> = (0..count(traj.frame_rate))
        .map(|k| FrameStamp {
            frame_id: format!("{k:06}"),
            timestamp: k as f64 / traj.frame_rate,
        })
        .collect();
    let true_poses: Vec<GeoPose<f64>> = frames
        .iter()
        .map(|f| pose_at(&path, &origin, traj.speed, f.timestamp))
        .collect();

    let ground_truth: Vec<ObjectBox3D<f64>> = spec
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| object_box(i as u64 + 1, o, &origin))
        .collect();
    let mut emitters: Vec<Emitter> = ground_truth
        .iter()
        .map(|b| Emitter {
            object: b.clone(),
            frames: 0..frames.len(),
        })
        .collect();
    let mut ghosts = Vec::new();
    for g in &spec.ghosts {
        if let Some(e) = place_ghost(g, &ground_truth[g.object], &true_poses, &cameras) {
            ghosts.push(e.object.clone());
            emitters.push(e);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = &spec.noise;
    let mut detections = Vec::new();
    for (fi, (frame, pose)) in frames.iter().zip(&true_poses).enumerate() {
        for cam in &cameras {
            for e in emitters.iter().filter(|e| e.frames.contains(&fi)) {
                let Some(exact) = detect(cam, pose, &e.object, &spec.detector) else {
                    continue;
                };
                if noise.dropout > 0.0 && rng.random_bool(noise.dropout) {
                    continue;
                }
                let Some(bbox) = noisy_bbox(exact, cam, noise.pixel_sigma, &mut rng) else {
                    continue;
                };
                let mut attributes = e.object.attributes.clone();
                if noise.label_noise > 0.0 && rng.random_bool(noise.label_noise) {
                    flip_state(&mut attributes, &mut rng);
                }
                detections.push(Detection2D {
                    frame_id: frame.frame_id.clone(),
                    timestamp: frame.timestamp,
                    camera_id: cam.camera_id.clone(),
                    class: e.object.class,
                    bbox,
                    confidence: spec.detector.confidence,
                    attributes,
                });
            }
        }
    }

    let pose_rate = traj.pose_rate.unwrap_or(traj.frame_rate);
    let reported_poses = (0..count(pose_rate))
        .map(|k| {
            let exact = pose_at(&path, &origin, traj.speed, k as f64 / pose_rate);
            noisy_pose(&exact, noise, &mut rng)
        })
        .collect();

    Ok(SimOutput {
        sequence: spec.sequence.clone(),
        frames,
        true_poses,
        reported_poses,
        detections,
        cameras,
        ground_truth,
        ghosts,
    })
}

impl SimOutput {
    /// The sequence the pipeline would ingest: reported poses interpolated
    /// at frame times, plus all detections.
    pub fn sequence(&self) -> Result<Sequence<f64>, SequenceError> {
        let track = PoseTrack::new(self.reported_poses.clone()).map_err(|source| SequenceError::Pose {
            frame_id: String::new(),
            source,
        })?;
        let frames = frames_from_track(&self.frames, &track)?;
        Sequence::new(frames, self.detections.clone(), self.cameras.clone())
    }

    /// Ground-truth annotation of every frame, from the exact poses.
    pub fn ground_truth_annotations<'a>(
        &'a self,
        cfg: &'a ExportConfig,
    ) -> impl Iterator<Item = FrameAnnotation<f64>> + 'a {
        self.frames
            .iter()
            .zip(&self.true_poses)
            .map(move |(f, p)| annotate_frame(&self.ground_truth, &f.frame_id, p, &self.cameras, cfg))
    }

    /// Writes the pipeline inputs and ground truth under `dir`:
    /// `poses.txt`, `detections.txt`, `frames.txt`, `calibration.toml`,
    /// `ground_truth_map.json` and `ground_truth/<sequence>/<frame_id>.json`.
    pub fn write_to(&self, dir: &Path, cfg: &ExportConfig) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|source| InputError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write(&dir.join("poses.txt"), &format_poses(&self.reported_poses))?;
        write(&dir.join("detections.txt"), &format_detections(&self.detections))?;
        write(&dir.join("frames.txt"), &format_frames(&self.frames))?;
        write(&dir.join("calibration.toml"), &format_calibration(&self.cameras))?;
        write_map(&self.ground_truth, &dir.join("ground_truth_map.json"))?;
        write_sequence(
            self.ground_truth_annotations(cfg),
            &dir.join("ground_truth").join(&self.sequence),
        )?;
        Ok(())
    }
}

/// Front-facing camera looking along the vehicle x axis, mounted at
/// `(x, 0, z)` in the vehicle frame.
pub fn forward_camera(id: &str, focal: f64, x: f64, z: f64) -> CameraSpec {
    CameraSpec {
        id: id.into(),
        width: 1920,
        height: 1080,
        fx: focal,
        fy: focal,
        cx: 960.0,
        cy: 540.0,
        k1: 0.0,
        k2: 0.0,
        extrinsic: vec![
            0.0, 0.0, 1.0, x, //
            -1.0, 0.0, 0.0, 0.0, //
            0.0, -1.0, 0.0, z, //
            0.0, 0.0, 0.0, 1.0,
        ],
    }
}

/// Straight eastbound 150 m drive at 10 m/s and 30 fps past five lights
/// and five signs, with one forward camera.
pub fn reference_scene(seed: u64) -> SceneSpec {
    let light = |e: f64, n: f64, u: f64, state: &str| ObjectSpec {
        class: ObjectClass::TrafficLight,
        center: [e, n, u],
        extent: [0.35, 0.35, 1.05],
        yaw_deg: 180.0,
        attributes: [("state".to_string(), state.to_string())].into(),
    };
    let sign = |e: f64, n: f64, u: f64, w: f64, h: f64, yaw: f64| ObjectSpec {
        class: ObjectClass::TrafficSign,
        center: [e, n, u],
        extent: [w, 0.03, h],
        yaw_deg: yaw,
        attributes: Attributes::new(),
    };
    SceneSpec {
        sequence: "reference".into(),
        seed,
        origin: OriginSpec {
            latitude: 48.137,
            longitude: 11.575,
            altitude: 520.0,
        },
        trajectory: TrajectorySpec {
            waypoints: vec![[0.0, 0.0], [150.0, 0.0]],
            speed: 10.0,
            frame_rate: 30.0,
            pose_rate: None,
            height: 0.0,
        },
        cameras: vec![forward_camera("front", 1400.0, 1.5, 1.4)],
        objects: vec![
            light(45.0, 2.5, 5.4, "red"),
            light(70.0, -3.0, 5.8, "green"),
            light(95.0, 4.0, 5.2, "yellow"),
            light(120.0, -1.5, 6.0, "red"),
            light(160.0, 3.5, 5.5, "green"),
            sign(40.0, -6.5, 2.6, 0.75, 0.75, 172.0),
            sign(65.0, 6.5, 2.2, 0.6, 0.9, 188.0),
            sign(90.0, -7.0, 3.0, 0.9, 0.6, 170.0),
            sign(115.0, 7.5, 2.4, 0.7, 0.7, 190.0),
            sign(140.0, -6.0, 2.8, 0.8, 0.8, 174.0),
        ],
        noise: NoiseSpec::default(),
        ghosts: Vec::new(),
        detector: DetectorSpec::default(),
    }
}
