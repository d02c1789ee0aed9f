//! Plain-text input formats: poses, detections, frame stamps, calibration.
//!
//! Pose file, one record per line after a header naming the position form:
//!
//! ```text
//! # position=ecef
//! # t x y z qw qx qy qz
//! 0.000000 4190000.123 -2800000.456 3900000.789 0.7 0.1 0.2 0.68
//! ```
//!
//! With `position=geodetic` the three position columns are latitude and
//! longitude in degrees and ellipsoidal altitude in meters. The quaternion
//! maps vehicle-frame vectors (x forward, y left, z up) into ECEF.
//!
//! Detection file, whitespace separated:
//!
//! ```text
//! frame_id timestamp camera_id class confidence x_min y_min x_max y_max [key=value ...]
//! ```
//!
//! Frames file: `frame_id timestamp` per line. In all three, blank lines and
//! lines starting with `#` are ignored.
//!
//! Calibration is TOML with one `[[camera]]` table per camera; `extrinsic`
//! is the camera→vehicle transform as 16 row-major numbers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{BBox2D, CameraModel};
use crate::geo::{wgs84_to_ecef, EcefPoint, GeoPose, GeodeticPoint, PoseTrack};
use crate::math::{Iso3, Mat3, Quat, Vec3};
use crate::scalar::Real;
use crate::sequence::FrameStamp;
use crate::triangulate::{Attributes, Detection2D, ObjectClass};

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn read(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|source| InputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write(path: &Path, text: &str) -> Result<(), InputError> {
    fs::write(path, text).map_err(|source| InputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-comment lines with their 1-based numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

fn num<T: Real>(field: &str, what: &str) -> Result<T, String> {
    let v: f64 = field
        .parse()
        .map_err(|_| format!("{what}: cannot parse {field:?} as a number"))?;
    if !v.is_finite() {
        return Err(format!("{what}: non-finite value {field:?}"));
    }
    Ok(T::lit(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionForm {
    Ecef,
    Geodetic,
}

pub fn parse_poses<T: Real>(text: &str, path: &Path) -> Result<Vec<GeoPose<T>>, InputError> {
    let perr = |line: usize, message: String| InputError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut form = None;
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if !l.starts_with('#') {
            continue;
        }
        for tok in l.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("position=") {
                form = Some(match v {
                    "ecef" => PositionForm::Ecef,
                    "geodetic" => PositionForm::Geodetic,
                    other => return Err(perr(i + 1, format!("unknown position form {other:?}"))),
                });
            }
        }
    }
    let form = form.ok_or_else(|| InputError::Invalid {
        path: path.to_path_buf(),
        message: "missing header `# position=ecef` or `# position=geodetic`".into(),
    })?;
    let mut poses = Vec::new();
    for (line, f) in records(text) {
        if f.len() != 8 {
            return Err(perr(line, format!("expected 8 fields, found {}", f.len())));
        }
        let v: Vec<T> = f
            .iter()
            .zip(["t", "p0", "p1", "p2", "qw", "qx", "qy", "qz"])
            .map(|(s, w)| num(s, w))
            .collect::<Result<_, _>>()
            .map_err(|m| perr(line, m))?;
        let position = match form {
            PositionForm::Ecef => EcefPoint::new(v[1], v[2], v[3]),
            PositionForm::Geodetic => {
                let g = GeodeticPoint::new(v[1], v[2], v[3]).map_err(|e| perr(line, e.to_string()))?;
                wgs84_to_ecef(&g)
            }
        };
        let q = Quat::new(v[4], v[5], v[6], v[7]);
        let pose = GeoPose::new(v[0], position, q)
            .validated()
            .map_err(|e| perr(line, e.to_string()))?;
        poses.push(pose);
    }
    Ok(poses)
}

pub fn read_poses<T: Real>(path: &Path) -> Result<Vec<GeoPose<T>>, InputError> {
    parse_poses(&read(path)?, path)
}

/// Reads a pose file into an interpolating track.
pub fn read_pose_track<T: Real>(path: &Path) -> Result<PoseTrack<T>, InputError> {
    PoseTrack::new(read_poses(path)?).map_err(|e| InputError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn format_poses<T: Real>(poses: &[GeoPose<T>]) -> String {
    let mut s = String::from("# position=ecef\n# t x y z qw qx qy qz\n");
    for p in poses {
        let q = p.orientation;
        let _ = writeln!(
            s,
            "{:.6} {:.6} {:.6} {:.6} {:.12} {:.12} {:.12} {:.12}",
            p.timestamp.as_f64(),
            p.position.x.as_f64(),
            p.position.y.as_f64(),
            p.position.z.as_f64(),
            q.w.as_f64(),
            q.x.as_f64(),
            q.y.as_f64(),
            q.z.as_f64()
        );
    }
    s
}

fn check_token(s: &str) -> bool {
    !s.is_empty() && !s.contains('=') && !s.contains(char::is_whitespace) && !s.starts_with('#')
}

pub fn parse_detections<T: Real>(text: &str, path: &Path) -> Result<Vec<Detection2D<T>>, InputError> {
    let mut out = Vec::new();
    for (line, f) in records(text) {
        let perr = |message: String| InputError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if f.len() < 9 {
            return Err(perr(format!("expected at least 9 fields, found {}", f.len())));
        }
        let timestamp: T = num(f[1], "timestamp").map_err(perr)?;
        let class: ObjectClass = f[3].parse().map_err(perr)?;
        let confidence: T = num(f[4], "confidence").map_err(perr)?;
        if confidence < T::zero() || confidence > T::one() {
            return Err(perr(format!("confidence {} outside [0, 1]", f[4])));
        }
        let b: Vec<T> = f[5..9]
            .iter()
            .map(|s| num(s, "bbox"))
            .collect::<Result<_, _>>()
            .map_err(perr)?;
        let bbox = BBox2D::new(b[0], b[1], b[2], b[3]).map_err(|e| perr(e.to_string()))?;
        let mut attributes = Attributes::new();
        for kv in &f[9..] {
            let (k, v) = kv
                .split_once('=')
                .filter(|(k, v)| !k.is_empty() && !v.is_empty())
                .ok_or_else(|| perr(format!("attribute {kv:?} is not key=value")))?;
            attributes.insert(k.to_string(), v.to_string());
        }
        out.push(Detection2D {
            frame_id: f[0].to_string(),
            timestamp,
            camera_id: f[2].to_string(),
            class,
            bbox,
            confidence,
            attributes,
        });
    }
    Ok(out)
}

pub fn read_detections<T: Real>(path: &Path) -> Result<Vec<Detection2D<T>>, InputError> {
    parse_detections(&read(path)?, path)
}

/// Panics if an id or attribute would not survive a round trip.
pub fn format_detections<T: Real>(detections: &[Detection2D<T>]) -> String {
    let mut s = String::from(
        "# frame_id timestamp camera_id class confidence x_min y_min x_max y_max [key=value ...]\n",
    );
    for d in detections {
        assert!(check_token(&d.frame_id) && check_token(&d.camera_id));
        let b = d.bbox;
        let _ = write!(
            s,
            "{} {:.6} {} {} {:.6} {:.6} {:.6} {:.6} {:.6}",
            d.frame_id,
            d.timestamp.as_f64(),
            d.camera_id,
            d.class,
            d.confidence.as_f64(),
            b.x_min.as_f64(),
            b.y_min.as_f64(),
            b.x_max.as_f64(),
            b.y_max.as_f64()
        );
        for (k, v) in &d.attributes {
            assert!(check_token(k) && check_token(v));
            let _ = write!(s, " {k}={v}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_frames<T: Real>(text: &str, path: &Path) -> Result<Vec<FrameStamp<T>>, InputError> {
    records(text)
        .map(|(line, f)| {
            let perr = |message: String| InputError::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            if f.len() != 2 {
                return Err(perr(format!("expected 2 fields, found {}", f.len())));
            }
            Ok(FrameStamp {
                frame_id: f[0].to_string(),
                timestamp: num(f[1], "timestamp").map_err(perr)?,
            })
        })
        .collect()
}

pub fn read_frames<T: Real>(path: &Path) -> Result<Vec<FrameStamp<T>>, InputError> {
    parse_frames(&read(path)?, path)
}

pub fn format_frames<T: Real>(frames: &[FrameStamp<T>]) -> String {
    let mut s = String::from("# frame_id timestamp\n");
    for f in frames {
        let _ = writeln!(s, "{} {:.6}", f.frame_id, f.timestamp.as_f64());
    }
    s
}

/// One camera as written in calibration and scene files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    /// Camera → vehicle, 4×4 row-major.
    pub extrinsic: Vec<f64>,
}

impl CameraSpec {
    pub fn to_model<T: Real>(&self) -> Result<CameraModel<T>, String> {
        let e = &self.extrinsic;
        if e.len() != 16 {
            return Err(format!("camera {:?}: extrinsic needs 16 values, found {}", self.id, e.len()));
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(format!("camera {:?}: non-finite extrinsic", self.id));
        }
        let bottom = [e[12], e[13], e[14], e[15]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(format!("camera {:?}: extrinsic bottom row must be 0 0 0 1", self.id));
        }
        let r = Mat3::from_rows(
            Vec3::new(e[0], e[1], e[2]),
            Vec3::new(e[4], e[5], e[6]),
            Vec3::new(e[8], e[9], e[10]),
        );
        if r.orthonormality_error() > 1e-6 || r.determinant() < 0.0 {
            return Err(format!("camera {:?}: extrinsic rotation is not a proper rotation", self.id));
        }
        let rotation = Quat::from_matrix(&r).normalize();
        let translation = Vec3::new(e[3], e[7], e[11]);
        let model = CameraModel {
            camera_id: self.id.clone(),
            width: self.width,
            height: self.height,
            fx: T::lit(self.fx),
            fy: T::lit(self.fy),
            cx: T::lit(self.cx),
            cy: T::lit(self.cy),
            k1: T::lit(self.k1),
            k2: T::lit(self.k2),
            extrinsic: Iso3::new(rotation.cast(), translation.cast()),
        };
        model.validate().map_err(|e| e.to_string())?;
        Ok(model)
    }

    pub fn from_model<T: Real>(cam: &CameraModel<T>) -> Self {
        Self {
            id: cam.camera_id.clone(),
            width: cam.width,
            height: cam.height,
            fx: cam.fx.as_f64(),
            fy: cam.fy.as_f64(),
            cx: cam.cx.as_f64(),
            cy: cam.cy.as_f64(),
            k1: cam.k1.as_f64(),
            k2: cam.k2.as_f64(),
            extrinsic: cam.extrinsic.to_matrix4().iter().map(|v| v.as_f64()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub camera: Vec<CameraSpec>,
}

pub fn parse_calibration<T: Real>(text: &str, path: &Path) -> Result<Vec<CameraModel<T>>, InputError> {
    let invalid = |message: String| InputError::Invalid {
        path: path.to_path_buf(),
        message,
    };
    let file: CalibrationFile = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
    if file.camera.is_empty() {
        return Err(invalid("no [[camera]] entries".into()));
    }
    file.camera.iter().map(|c| c.to_model().map_err(invalid)).collect()
}

pub fn read_calibration<T: Real>(path: &Path) -> Result<Vec<CameraModel<T>>, InputError> {
    parse_calibration(&read(path)?, path)
}

pub fn format_calibration<T: Real>(cameras: &[CameraModel<T>]) -> String {
    let file = CalibrationFile {
        camera: cameras.iter().map(CameraSpec::from_model).collect(),
    };
    toml::to_string(&file).expect("calibration is always representable")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("in.txt")
    }

    #[test]
    fn poses_round_trip_ecef() {
        let o = wgs84_to_ecef(&GeodeticPoint::new(52.0, 13.0, 40.0).unwrap());
        let poses = vec![
            GeoPose::from_heading(0.0, o, 0.3),
            GeoPose::from_heading(0.1, o + Vec3::new(1.0, 0.5, 0.0), 0.31),
        ];
        let text = format_poses(&poses);
        let back: Vec<GeoPose<f64>> = parse_poses(&text, p()).unwrap();
        assert_eq!(format_poses(&back), text);
        for (a, b) in poses.iter().zip(&back) {
            assert!(a.position.distance(b.position) < 1e-6);
            assert!(a.orientation.dot(b.orientation).abs() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn geodetic_poses() {
        let level = GeoPose::from_heading(0.0, wgs84_to_ecef(&GeodeticPoint::new(10.0, 20.0, 0.0).unwrap()), 0.0);
        let q = level.orientation;
        let text = format!(
            "# position=geodetic\n0.5 10.0 20.0 0.0 {} {} {} {}\n",
            q.w, q.x, q.y, q.z
        );
        let poses: Vec<GeoPose<f64>> = parse_poses(&text, p()).unwrap();
        assert!(poses[0].position.distance(level.position) < 1e-6);
        assert_eq!(poses[0].timestamp, 0.5);
    }

    #[test]
    fn pose_errors_carry_line_numbers() {
        let err = parse_poses::<f64>("# position=ecef\n\n1 2 3\n", p()).unwrap_err();
        assert!(matches!(err, InputError::Parse { line: 3, .. }), "{err}");
        let err = parse_poses::<f64>("0 1 2 3 1 0 0 0\n", p()).unwrap_err();
        assert!(matches!(err, InputError::Invalid { .. }));
        // An ECEF→vehicle quaternion at a mid-latitude point is far from level.
        let pos = wgs84_to_ecef(&GeodeticPoint::new(45.0, 10.0, 0.0).unwrap());
        let q = GeoPose::from_heading(0.0, pos, 0.0).orientation.conjugate();
        let text = format!(
            "# position=ecef\n0 {} {} {} {} {} {} {}\n",
            pos.x, pos.y, pos.z, q.w, q.x, q.y, q.z
        );
        let err = parse_poses::<f64>(&text, p()).unwrap_err();
        assert!(err.to_string().contains("tilt") || err.to_string().contains("level"), "{err}");
    }

    #[test]
    fn detections_round_trip() {
        let text = "# header\nf1 0.1 front traffic_light 0.9 10 20 30 60 state=red\nf2 0.2 side traffic_sign 1 1.5 2.5 3.5 4.5\n";
        let d: Vec<Detection2D<f64>> = parse_detections(text, p()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].attributes["state"], "red");
        assert_eq!(d[1].class, ObjectClass::TrafficSign);
        let again: Vec<Detection2D<f64>> = parse_detections(&format_detections(&d), p()).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn malformed_detections_rejected_with_line() {
        let cases = [
            "f 0 c traffic_light 0.9 1 2 3\n",
            "f 0 c lamp 0.9 1 2 3 4\n",
            "f 0 c traffic_light 1.5 1 2 3 4\n",
            "f 0 c traffic_light 0.9 5 2 3 4\n",
            "f 0 c traffic_light 0.9 1 2 3 4 state\n",
            "f x c traffic_light 0.9 1 2 3 4\n",
        ];
        for c in cases {
            let text = format!("# h\n{c}");
            let err = parse_detections::<f64>(&text, p()).unwrap_err();
            assert!(matches!(err, InputError::Parse { line: 2, .. }), "{c}: {err}");
        }
    }

    #[test]
    fn frames_parse() {
        let f: Vec<FrameStamp<f64>> = parse_frames("# x\na 0.0\nb 0.1\n", p()).unwrap();
        assert_eq!(f[1].frame_id, "b");
        assert_eq!(parse_frames::<f64>(&format_frames(&f), p()).unwrap(), f);
        assert!(parse_frames::<f64>("a\n", p()).is_err());
    }

    fn spec() -> CameraSpec {
        CameraSpec {
            id: "front".into(),
            width: 1920,
            height: 1080,
            fx: 1000.0,
            fy: 1000.0,
            cx: 960.0,
            cy: 540.0,
            k1: 0.0,
            k2: 0.0,
            extrinsic: vec![
                0.0, 0.0, 1.0, 1.2, //
                -1.0, 0.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, 1.5, //
                0.0, 0.0, 0.0, 1.0,
            ],
        }
    }

    #[test]
    fn calibration_round_trip() {
        let text = toml::to_string(&CalibrationFile { camera: vec![spec()] }).unwrap();
        let cams: Vec<CameraModel<f64>> = parse_calibration(&text, p()).unwrap();
        let axis = cams[0].extrinsic.rotation.rotate(Vec3::unit_z());
        assert!((axis - Vec3::unit_x()).norm() < 1e-12);
        let again: Vec<CameraModel<f64>> = parse_calibration(&format_calibration(&cams), p()).unwrap();
        assert!((again[0].extrinsic.rotation.dot(cams[0].extrinsic.rotation).abs() - 1.0).abs() < 1e-12);
        assert_eq!(again[0].extrinsic.translation, cams[0].extrinsic.translation);
    }

    #[test]
    fn calibration_rejects_non_rigid_and_unknown_keys() {
        let mut s = spec();
        s.extrinsic[0] = 2.0;
        assert!(s.to_model::<f64>().is_err());
        let mut s = spec();
        s.extrinsic[15] = 2.0;
        assert!(s.to_model::<f64>().is_err());
        let mut s = spec();
        s.cx = 5000.0;
        assert!(s.to_model::<f64>().is_err());
        let bad = "[[camera]]\nid='a'\nwidth=1\nheight=1\nfx=1\nfy=1\ncx=0.5\ncy=0.5\nextrinsic=[]\nlens='x'\n";
        assert!(parse_calibration::<f64>(bad, p()).is_err());
    }
}
