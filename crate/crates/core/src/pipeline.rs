//! End-to-end composition: triangulate, fit boxes, refine, annotate.

use std::path::{Path, PathBuf};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfit::{fit_box, BoxFitConfig, ObjectBox3D};
use crate::eval::{EvalConfig, EvalError};
use crate::export::{
    annotate_frame, apply_frame_attributes, ExportConfig, ExportError, FrameAnnotation, SequenceWriter,
};
use crate::geo::PoseTrack;
use crate::io::{read_calibration, read_detections, read_frames, read_poses, InputError};
use crate::refine::{refine, DetectionIndex, RefineConfig};
use crate::scalar::Real;
use crate::sequence::{frames_from_track, stamps_from_detections, Sequence, SequenceError};
use crate::triangulate::{localize_centers, TriangulationConfig, TriangulationError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Triangulation(#[from] TriangulationError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Every tunable of the pipeline, one section per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub triangulation: TriangulationConfig,
    pub boxfit: BoxFitConfig,
    pub refine: RefineConfig,
    pub export: ExportConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.triangulation
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.eval.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let b = &self.boxfit;
        if !(b.sign_depth > 0.0 && b.light_orientation_distance > 0.0) {
            return Err(PipelineError::Config(
                "boxfit.sign_depth and boxfit.light_orientation_distance must be positive".into(),
            ));
        }
        if !(0.0..90.0).contains(&b.degenerate_view_angle) {
            return Err(PipelineError::Config(
                "boxfit.degenerate_view_angle must be within [0, 90)".into(),
            ));
        }
        let r = &self.refine;
        if !(r.angle_threshold > 0.0 && r.max_range > 0.0) || r.min_shared_frames == 0 {
            return Err(PipelineError::Config(
                "refine thresholds must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&r.min_mean_iou) {
            return Err(PipelineError::Config(
                "refine.min_mean_iou must be within [0, 1]".into(),
            ));
        }
        let e = &self.export;
        if !(e.range_lateral > 0.0 && e.range_longitudinal > 0.0) {
            return Err(PipelineError::Config("export ranges must be positive".into()));
        }
        if !(0.0..=1.0).contains(&e.attribute_min_iou) {
            return Err(PipelineError::Config(
                "export.attribute_min_iou must be within [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Sets one dotted key, e.g. `triangulation.dbscan_eps=0.05`. The value
    /// is parsed as a TOML value, falling back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<(), PipelineError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| PipelineError::Config(format!("override {assignment:?} is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut tree = toml::Value::try_from(&*self).expect("config is always representable");
        let unknown = || PipelineError::Config(format!("unknown key {key:?}"));
        let parts: Vec<&str> = key.split('.').collect();
        let (last, path) = parts.split_last().ok_or_else(unknown)?;
        let mut table = tree.as_table_mut().ok_or_else(unknown)?;
        for part in path {
            table = table
                .get_mut(*part)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(unknown)?;
        }
        let slot = table.get_mut(*last).ok_or_else(unknown)?;
        // An integer literal for a float key stays a float.
        *slot = match (&*slot, value) {
            (toml::Value::Float(_), toml::Value::Integer(n)) => toml::Value::Float(n as f64),
            (_, v) => v,
        };
        let updated: Self = tree
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(format!("{key}: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}

/// Input files of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInputs {
    pub poses: PathBuf,
    pub detections: PathBuf,
    pub calibration: PathBuf,
    /// Frame stamps; when absent, frames are the distinct detection frames.
    pub frames: Option<PathBuf>,
}

/// Reads and cross-checks the input files of a sequence.
pub fn load_sequence(inputs: &SequenceInputs) -> Result<Sequence<f64>, PipelineError> {
    let cameras = read_calibration(&inputs.calibration)?;
    let poses = read_poses(&inputs.poses)?;
    let track = PoseTrack::new(poses).map_err(|e| InputError::Invalid {
        path: inputs.poses.clone(),
        message: e.to_string(),
    })?;
    let detections = read_detections(&inputs.detections)?;
    let stamps = match &inputs.frames {
        Some(p) => read_frames(p)?,
        None => stamps_from_detections(&detections),
    };
    let frames = frames_from_track(&stamps, &track)?;
    Ok(Sequence::new(frames, detections, cameras)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub rays: usize,
    pub candidates: usize,
    pub clusters: usize,
    pub boxes: usize,
    pub unverifiable: usize,
    pub below_iou_floor: usize,
    pub groups: usize,
    pub kept: usize,
}

#[derive(Debug, Clone)]
pub struct MapBuild<T: Real> {
    /// Boxes before refinement.
    pub raw: Vec<ObjectBox3D<T>>,
    /// Refined map, ascending object ids.
    pub map: Vec<ObjectBox3D<T>>,
    pub counts: StageCounts,
}

/// Triangulates, fits and refines the object map of a sequence.
pub fn build_map<T: Real>(seq: &Sequence<T>, cfg: &PipelineConfig) -> Result<MapBuild<T>, PipelineError> {
    let loc = localize_centers(seq, &cfg.triangulation)?;
    let raw: Vec<ObjectBox3D<T>> = loc
        .centers
        .par_iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let id = i as u64 + 1;
            fit_box(id, c, &loc.observations, seq, &cfg.boxfit)
                .map_err(|e| debug!("object {id} dropped: {e}"))
                .ok()
        })
        .collect();
    let index = DetectionIndex::new(seq, cfg.triangulation.min_confidence);
    let refined = refine(raw.clone(), seq, &index, &cfg.refine);
    let counts = StageCounts {
        rays: loc.observations.len(),
        candidates: loc.candidate_count,
        clusters: loc.centers.len(),
        boxes: raw.len(),
        unverifiable: refined.unverifiable.len(),
        below_iou_floor: refined.rejected.len(),
        groups: refined.groups,
        kept: refined.kept.len(),
    };
    info!(
        "rays {}, candidates {}, clusters {}, boxes {}, unverifiable {}, below IoU floor {}, groups {}, kept {}",
        counts.rays,
        counts.candidates,
        counts.clusters,
        counts.boxes,
        counts.unverifiable,
        counts.below_iou_floor,
        counts.groups,
        counts.kept
    );
    Ok(MapBuild {
        raw,
        map: refined.kept,
        counts,
    })
}

/// Confident detection indices per frame.
fn detections_per_frame<T: Real>(seq: &Sequence<T>, min_confidence: f64) -> Vec<Vec<usize>> {
    let floor = T::lit(min_confidence);
    let mut out = vec![Vec::new(); seq.frames.len()];
    for (i, d) in seq.detections.iter().enumerate() {
        if d.confidence >= floor {
            if let Some(f) = seq.frame_index(&d.frame_id) {
                out[f].push(i);
            }
        }
    }
    out
}

fn annotate_with<T: Real>(
    seq: &Sequence<T>,
    map: &[ObjectBox3D<T>],
    index: usize,
    detections: &[usize],
    cfg: &PipelineConfig,
) -> FrameAnnotation<T> {
    let frame = &seq.frames[index];
    let mut ann = annotate_frame(map, &frame.frame_id, &frame.pose, &seq.cameras, &cfg.export);
    let dets: Vec<_> = detections.iter().map(|&i| &seq.detections[i]).collect();
    apply_frame_attributes(&mut ann, &dets, cfg.export.attribute_min_iou);
    ann
}

/// All frame annotations, in frame order. Map attributes are overridden per
/// frame by the best-overlapping confident detection.
pub fn annotate_sequence<T: Real>(
    seq: &Sequence<T>,
    map: &[ObjectBox3D<T>],
    cfg: &PipelineConfig,
) -> Vec<FrameAnnotation<T>> {
    let per_frame = detections_per_frame(seq, cfg.triangulation.min_confidence);
    (0..seq.frames.len())
        .into_par_iter()
        .map(|i| annotate_with(seq, map, i, &per_frame[i], cfg))
        .collect()
}

const WRITE_CHUNK: usize = 256;

/// Annotates and writes every frame to `dir`, a chunk at a time.
pub fn write_annotations<T: Real>(
    seq: &Sequence<T>,
    map: &[ObjectBox3D<T>],
    cfg: &PipelineConfig,
    dir: &Path,
) -> Result<usize, PipelineError> {
    let mut writer = SequenceWriter::create(dir)?;
    let per_frame = detections_per_frame(seq, cfg.triangulation.min_confidence);
    for start in (0..seq.frames.len()).step_by(WRITE_CHUNK) {
        let end = (start + WRITE_CHUNK).min(seq.frames.len());
        let chunk: Vec<FrameAnnotation<T>> = (start..end)
            .into_par_iter()
            .map(|i| annotate_with(seq, map, i, &per_frame[i], cfg))
            .collect();
        for ann in &chunk {
            writer.write(ann)?;
        }
    }
    Ok(writer.written())
}
