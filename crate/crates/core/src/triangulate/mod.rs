//! Object centers from 2D detections: every pair of sightlines that pass
//! close to each other yields a candidate point (the midpoint of their
//! common perpendicular), and dense groups of candidates become objects.
//! No tracking is involved; association happens implicitly in 3D.

pub mod dbscan;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{pixel_to_ray, BBox2D, Ray3};
use crate::geo::EcefPoint;
use crate::math::Vec3;
use crate::scalar::Real;
use crate::sequence::Sequence;

pub use dbscan::{dbscan, Clustering};

/// Free-form pass-through attributes (state, subtype, occlusion, ...).
pub type Attributes = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    TrafficLight,
    TrafficSign,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 2] = [ObjectClass::TrafficLight, ObjectClass::TrafficSign];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::TrafficLight => "traffic_light",
            ObjectClass::TrafficSign => "traffic_sign",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traffic_light" => Ok(ObjectClass::TrafficLight),
            "traffic_sign" => Ok(ObjectClass::TrafficSign),
            other => Err(format!("unknown class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Detection2D<T: Real> {
    pub frame_id: String,
    pub timestamp: T,
    pub camera_id: String,
    pub class: ObjectClass,
    pub bbox: BBox2D<T>,
    pub confidence: T,
    #[serde(default)]
    pub attributes: Attributes,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriangulationError {
    #[error("sequence travels {travelled:.2} m, below the {required:.2} m minimum")]
    SequenceTooShort { travelled: f64, required: f64 },
    #[error("invalid triangulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriangulationConfig {
    /// Detections below this confidence are ignored.
    pub min_confidence: f64,
    /// Largest distance between two sightlines that still yields a candidate, m.
    pub max_line_gap: f64,
    /// DBSCAN neighbourhood radius, m.
    pub dbscan_eps: f64,
    /// DBSCAN density (neighbours within `dbscan_eps`, self included).
    pub dbscan_min_pts: usize,
    /// Sightline pairs closer to parallel than this are skipped, degrees.
    pub min_ray_angle: f64,
    /// Sequences with a shorter ego path are rejected, m.
    pub min_travel: f64,
    /// Candidates must lie at least this far along both sightlines, m.
    pub min_depth: f64,
}

impl Default for TriangulationConfig {
    fn default() -> Self {
        Self {
            min_confidence: 0.7,
            max_line_gap: 0.10,
            dbscan_eps: 0.08,
            dbscan_min_pts: 3,
            min_ray_angle: 0.5,
            min_travel: 3.0,
            min_depth: 2.0,
        }
    }
}

impl TriangulationConfig {
    pub fn validate(&self) -> Result<(), TriangulationError> {
        let positive = [
            ("max_line_gap", self.max_line_gap),
            ("dbscan_eps", self.dbscan_eps),
            ("min_ray_angle", self.min_ray_angle),
            ("min_travel", self.min_travel),
            ("min_confidence", self.min_confidence),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TriangulationError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.min_confidence > 1.0 {
            return Err(TriangulationError::InvalidConfig(
                "min_confidence must be at most 1".into(),
            ));
        }
        if self.dbscan_min_pts == 0 {
            return Err(TriangulationError::InvalidConfig(
                "dbscan_min_pts must be positive".into(),
            ));
        }
        if !(self.min_depth >= 0.0) {
            return Err(TriangulationError::InvalidConfig(
                "min_depth must be non-negative".into(),
            ));
        }
        if self.dbscan_eps > 2.0 * self.max_line_gap {
            return Err(TriangulationError::InvalidConfig(
                "dbscan_eps must not exceed 2 * max_line_gap".into(),
            ));
        }
        Ok(())
    }
}

/// Closest approach of two infinite lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestApproach<T: Real> {
    /// Midpoint of the common perpendicular.
    pub midpoint: EcefPoint<T>,
    /// Length of the common perpendicular.
    pub gap: T,
    /// Signed parameter of the foot point along the first line.
    pub along_a: T,
    /// Signed parameter of the foot point along the second line.
    pub along_b: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("lines are closer to parallel than the minimum angle")]
pub struct NearParallel;

/// Midpoint and length of the common perpendicular of two lines with unit
/// directions; [`NearParallel`] when the lines meet at less than
/// `min_angle` radians.
pub fn closest_point_between_lines<T: Real>(
    a: &Ray3<T>,
    b: &Ray3<T>,
    min_angle: T,
) -> Result<ClosestApproach<T>, NearParallel> {
    let (d1, d2) = (a.direction, b.direction);
    let theta = d1.angle_to(d2);
    if theta.min(T::PI() - theta) < min_angle || theta.is_nan() {
        return Err(NearParallel);
    }
    let w0 = a.origin - b.origin;
    let cos = d1.dot(d2);
    let d = d1.dot(w0);
    let e = d2.dot(w0);
    let denom = T::one() - cos * cos;
    let s = (cos * e - d) / denom;
    let t = (e - cos * d) / denom;
    let pa = a.at(s);
    let pb = b.at(t);
    let half = (pb - pa) * T::lit(0.5);
    Ok(ClosestApproach {
        midpoint: pa + half,
        gap: pa.distance(pb),
        along_a: s,
        along_b: t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePoint<T: Real> {
    pub position: EcefPoint<T>,
    /// Indices of the two sightlines, first < second.
    pub source: (usize, usize),
    pub gap: T,
}

/// Candidate points from all same-class sightline pairs passing within
/// `max_line_gap`, at least `min_ray_angle` apart, with the closest
/// approach at least `min_depth` in front of both origins.
///
/// Output per class is ordered by source indices.
pub fn generate_candidates<T: Real>(
    rays: &[(Ray3<T>, ObjectClass)],
    cfg: &TriangulationConfig,
) -> BTreeMap<ObjectClass, Vec<CandidatePoint<T>>> {
    let min_angle = T::lit(cfg.min_ray_angle.to_radians());
    let max_gap = T::lit(cfg.max_line_gap);
    let min_depth = T::lit(cfg.min_depth);
    let mut out = BTreeMap::new();
    for class in ObjectClass::ALL {
        let idx: Vec<usize> = rays
            .iter()
            .enumerate()
            .filter(|(_, (_, c))| *c == class)
            .map(|(i, _)| i)
            .collect();
        let candidates: Vec<CandidatePoint<T>> = (0..idx.len())
            .into_par_iter()
            .flat_map_iter(|p| {
                let i = idx[p];
                let ri = &rays[i].0;
                idx[p + 1..].iter().filter_map(move |&j| {
                    let rj = &rays[j].0;
                    let ca = closest_point_between_lines(ri, rj, min_angle).ok()?;
                    (ca.gap <= max_gap && ca.along_a >= min_depth && ca.along_b >= min_depth)
                        .then_some(CandidatePoint {
                            position: ca.midpoint,
                            source: (i, j),
                            gap: ca.gap,
                        })
                })
            })
            .collect();
        out.insert(class, candidates);
    }
    out
}

/// One sightline: the ray through a detection's bbox center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T: Real> {
    pub detection: usize,
    pub frame: usize,
    pub camera: usize,
    pub class: ObjectClass,
    pub ray: Ray3<T>,
}

/// Sightlines of all detections with confidence ≥ `min_confidence`.
pub fn build_observations<T: Real>(
    seq: &Sequence<T>,
    cfg: &TriangulationConfig,
) -> Vec<Observation<T>> {
    let min_conf = T::lit(cfg.min_confidence);
    seq.detections
        .iter()
        .enumerate()
        .filter(|(_, d)| d.confidence >= min_conf)
        .filter_map(|(i, d)| {
            let frame = seq.frame_index(&d.frame_id)?;
            let camera = seq.camera_index(&d.camera_id)?;
            let cam = &seq.cameras[camera];
            match pixel_to_ray(cam, &seq.frames[frame].pose, d.bbox.center()) {
                Ok(ray) => Some(Observation {
                    detection: i,
                    frame,
                    camera,
                    class: d.class,
                    ray,
                }),
                Err(e) => {
                    warn!("detection {i} skipped: {e}");
                    None
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedCenter<T: Real> {
    pub class: ObjectClass,
    /// Mean of the cluster's candidate points.
    pub center: EcefPoint<T>,
    /// Number of candidate points in the cluster.
    pub support: usize,
    /// Observation indices that contributed a candidate, ascending.
    pub observations: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Localization<T: Real> {
    pub observations: Vec<Observation<T>>,
    pub centers: Vec<LocalizedCenter<T>>,
    pub candidate_count: usize,
}

/// Clusters candidate points of one class into object centers.
pub fn cluster_candidates<T: Real>(
    class: ObjectClass,
    candidates: &[CandidatePoint<T>],
    cfg: &TriangulationConfig,
) -> Vec<LocalizedCenter<T>> {
    let Some(first) = candidates.first() else {
        return Vec::new();
    };
    let local: Vec<Vec3<T>> = candidates
        .iter()
        .map(|c| c.position - first.position)
        .collect();
    let clustering = dbscan(&local, T::lit(cfg.dbscan_eps), cfg.dbscan_min_pts);
    clustering
        .clusters
        .iter()
        .map(|members| {
            let center = EcefPoint::mean(members.iter().map(|&m| candidates[m].position))
                .expect("clusters are non-empty");
            let mut obs: Vec<usize> = members
                .iter()
                .flat_map(|&m| [candidates[m].source.0, candidates[m].source.1])
                .collect();
            obs.sort_unstable();
            obs.dedup();
            LocalizedCenter {
                class,
                center,
                support: members.len(),
                observations: obs,
            }
        })
        .collect()
}

/// Triangulates object centers for a whole sequence.
pub fn localize_centers<T: Real>(
    seq: &Sequence<T>,
    cfg: &TriangulationConfig,
) -> Result<Localization<T>, TriangulationError> {
    cfg.validate()?;
    let travelled = seq.travel_distance();
    if !(travelled >= T::lit(cfg.min_travel)) {
        return Err(TriangulationError::SequenceTooShort {
            travelled: travelled.as_f64(),
            required: cfg.min_travel,
        });
    }
    let observations = build_observations(seq, cfg);
    let rays: Vec<(Ray3<T>, ObjectClass)> =
        observations.iter().map(|o| (o.ray, o.class)).collect();
    let candidates = generate_candidates(&rays, cfg);
    let candidate_count = candidates.values().map(Vec::len).sum();
    let centers: Vec<LocalizedCenter<T>> = candidates
        .iter()
        .flat_map(|(class, c)| cluster_candidates(*class, c, cfg))
        .collect();
    debug!(
        "triangulation: {} rays, {} candidates, {} clusters",
        observations.len(),
        candidate_count,
        centers.len()
    );
    Ok(Localization {
        observations,
        centers,
        candidate_count,
    })
}
