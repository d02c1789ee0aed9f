//! One recorded drive: frames with ego poses, 2D detections and cameras.

use std::collections::HashMap;

use thiserror::Error;

use crate::camera::{CameraError, CameraModel};
use crate::geo::{travel_distance, GeoError, GeoPose, PoseTrack};
use crate::scalar::Real;
use crate::triangulate::Detection2D;

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("detection {index} refers to unknown frame {frame_id:?}")]
    UnknownFrame { index: usize, frame_id: String },
    #[error("detection {index} refers to unknown camera {camera_id:?}")]
    UnknownCamera { index: usize, camera_id: String },
    #[error("duplicate frame id {0:?}")]
    DuplicateFrame(String),
    #[error("duplicate camera id {0:?}")]
    DuplicateCamera(String),
    #[error("frame {frame_id:?}: {source}")]
    Pose {
        frame_id: String,
        #[source]
        source: GeoError,
    },
    #[error(transparent)]
    Camera(#[from] CameraError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T: Real> {
    pub frame_id: String,
    pub timestamp: T,
    pub pose: GeoPose<T>,
}

/// Frame ids and timestamps, before poses are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStamp<T: Real> {
    pub frame_id: String,
    pub timestamp: T,
}

/// Attaches interpolated poses to frame timestamps.
pub fn frames_from_track<T: Real>(
    stamps: &[FrameStamp<T>],
    track: &PoseTrack<T>,
) -> Result<Vec<Frame<T>>, SequenceError> {
    stamps
        .iter()
        .map(|s| {
            let pose = track.at(s.timestamp).map_err(|source| SequenceError::Pose {
                frame_id: s.frame_id.clone(),
                source,
            })?;
            Ok(Frame {
                frame_id: s.frame_id.clone(),
                timestamp: s.timestamp,
                pose,
            })
        })
        .collect()
}

/// Frame stamps implied by a detection list, ordered by timestamp then id.
pub fn stamps_from_detections<T: Real>(detections: &[Detection2D<T>]) -> Vec<FrameStamp<T>> {
    let mut seen: HashMap<&str, T> = HashMap::new();
    for d in detections {
        seen.entry(d.frame_id.as_str()).or_insert(d.timestamp);
    }
    let mut stamps: Vec<FrameStamp<T>> = seen
        .into_iter()
        .map(|(id, t)| FrameStamp {
            frame_id: id.to_string(),
            timestamp: t,
        })
        .collect();
    stamps.sort_by(|a, b| {
        a.timestamp
            .partial_cmp(&b.timestamp)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.frame_id.cmp(&b.frame_id))
    });
    stamps
}

/// Validated, indexed sequence.
#[derive(Debug, Clone)]
pub struct Sequence<T: Real> {
    pub frames: Vec<Frame<T>>,
    pub detections: Vec<Detection2D<T>>,
    pub cameras: Vec<CameraModel<T>>,
    frame_index: HashMap<String, usize>,
    camera_index: HashMap<String, usize>,
}

impl<T: Real> Sequence<T> {
    pub fn new(
        frames: Vec<Frame<T>>,
        detections: Vec<Detection2D<T>>,
        cameras: Vec<CameraModel<T>>,
    ) -> Result<Self, SequenceError> {
        let mut frame_index = HashMap::new();
        for (i, f) in frames.iter().enumerate() {
            if frame_index.insert(f.frame_id.clone(), i).is_some() {
                return Err(SequenceError::DuplicateFrame(f.frame_id.clone()));
            }
        }
        let mut camera_index = HashMap::new();
        for (i, c) in cameras.iter().enumerate() {
            c.validate()?;
            if camera_index.insert(c.camera_id.clone(), i).is_some() {
                return Err(SequenceError::DuplicateCamera(c.camera_id.clone()));
            }
        }
        for (index, d) in detections.iter().enumerate() {
            if !frame_index.contains_key(&d.frame_id) {
                return Err(SequenceError::UnknownFrame {
                    index,
                    frame_id: d.frame_id.clone(),
                });
            }
            if !camera_index.contains_key(&d.camera_id) {
                return Err(SequenceError::UnknownCamera {
                    index,
                    camera_id: d.camera_id.clone(),
                });
            }
        }
        Ok(Self {
            frames,
            detections,
            cameras,
            frame_index,
            camera_index,
        })
    }

    pub fn frame_index(&self, frame_id: &str) -> Option<usize> {
        self.frame_index.get(frame_id).copied()
    }

    pub fn camera_index(&self, camera_id: &str) -> Option<usize> {
        self.camera_index.get(camera_id).copied()
    }

    pub fn poses(&self) -> impl Iterator<Item = &GeoPose<T>> {
        self.frames.iter().map(|f| &f.pose)
    }

    /// Path length of the ego trajectory over the frames.
    pub fn travel_distance(&self) -> T {
        travel_distance(self.frames.iter().map(|f| &f.pose))
    }

    /// Detection indices grouped per `(frame, camera)`.
    pub fn detections_by_view(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut out: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (i, d) in self.detections.iter().enumerate() {
            let f = self.frame_index[&d.frame_id];
            let c = self.camera_index[&d.camera_id];
            out.entry((f, c)).or_default().push(i);
        }
        out
    }
}
