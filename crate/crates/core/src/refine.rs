//! False-positive removal.
//!
//! Triangulation errors can leave extra boxes on the sightlines of a real
//! object. Each box is scored by the mean IoU between its reprojection and
//! the 2D detections; boxes whose sightlines stay nearly parallel over
//! several frames are grouped, and only the best-scoring box per group is
//! kept.

use std::collections::{HashMap, HashSet};

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfit::ObjectBox3D;
use crate::camera::{project, project_box, BBox2D, Projection};
use crate::math::Vec3;
use crate::scalar::Real;
use crate::sequence::Sequence;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefineError {
    #[error("object {0} never projects into any image")]
    NeverVisible(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    /// Sightlines closer than this are "the same line", degrees.
    pub angle_threshold: f64,
    /// Frames in which two boxes must share a sightline to be grouped.
    pub min_shared_frames: usize,
    /// Boxes scored in fewer frames are discarded.
    pub min_frames_scored: usize,
    /// Boxes whose mean IoU is below this are discarded before grouping,
    /// so that they cannot link two real objects into one group.
    pub min_mean_iou: f64,
    /// Only views within this distance of the camera are scored, m.
    pub max_range: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            angle_threshold: 0.275,
            min_shared_frames: 5,
            min_frames_scored: 3,
            min_mean_iou: 0.25,
            max_range: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoUScore<T: Real> {
    pub object_id: u64,
    pub mean_iou: T,
    pub frames_scored: usize,
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou2d<T: Real>(a: &BBox2D<T>, b: &BBox2D<T>) -> T {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(T::zero());
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(T::zero());
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one())
}

/// Detections above a confidence floor, indexed by `(frame, camera)`.
#[derive(Debug, Clone, Default)]
pub struct DetectionIndex {
    by_view: HashMap<(usize, usize), Vec<usize>>,
}

impl DetectionIndex {
    pub fn new<T: Real>(seq: &Sequence<T>, min_confidence: f64) -> Self {
        let floor = T::lit(min_confidence);
        let mut by_view = seq.detections_by_view();
        for list in by_view.values_mut() {
            list.retain(|&i| seq.detections[i].confidence >= floor);
        }
        Self { by_view }
    }

    pub fn get(&self, frame: usize, camera: usize) -> &[usize] {
        self.by_view
            .get(&(frame, camera))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Mean over every (frame, camera) view in which the box projects of the
/// best IoU against same-class detections of that view (0 when none).
pub fn mean_reprojection_iou<T: Real>(
    bx: &ObjectBox3D<T>,
    seq: &Sequence<T>,
    index: &DetectionIndex,
    cfg: &RefineConfig,
) -> Result<IoUScore<T>, RefineError> {
    let range = T::lit(cfg.max_range);
    let mut sum = T::zero();
    let mut n = 0usize;
    for (fi, frame) in seq.frames.iter().enumerate() {
        for (ci, cam) in seq.cameras.iter().enumerate() {
            if cam.center(&frame.pose).distance(bx.center) > range {
                continue;
            }
            let Some(proj) = project_box(cam, &frame.pose, bx) else {
                continue;
            };
            let best = index
                .get(fi, ci)
                .iter()
                .map(|&d| &seq.detections[d])
                .filter(|d| d.class == bx.class)
                .map(|d| iou2d(&proj, &d.bbox))
                .fold(T::zero(), T::max);
            sum += best;
            n += 1;
        }
    }
    if n == 0 {
        return Err(RefineError::NeverVisible(bx.object_id));
    }
    Ok(IoUScore {
        object_id: bx.object_id,
        mean_iou: sum / T::from_count(n),
        frames_scored: n,
    })
}

/// Connected components of the "shares a sightline" relation: two boxes are
/// linked when, in at least `min_shared_frames` frames, some camera sees
/// both centers within `angle_threshold` of each other.
///
/// Returns groups of indices into `boxes`, each ascending, ordered by their
/// smallest member.
pub fn group_by_los_angle<T: Real>(
    boxes: &[ObjectBox3D<T>],
    seq: &Sequence<T>,
    cfg: &RefineConfig,
) -> Vec<Vec<usize>> {
    let n = boxes.len();
    let thr = T::lit(cfg.angle_threshold.to_radians());
    let range = T::lit(cfg.max_range);
    let mut shared: HashMap<(usize, usize), usize> = HashMap::new();
    for frame in &seq.frames {
        let mut linked: HashSet<(usize, usize)> = HashSet::new();
        for cam in &seq.cameras {
            let origin = cam.center(&frame.pose);
            let sight: Vec<(usize, Vec3<T>)> = boxes
                .iter()
                .enumerate()
                .filter(|(_, b)| origin.distance(b.center) <= range)
                .filter(|(_, b)| matches!(project(cam, &frame.pose, &b.center), Projection::Visible(_)))
                .map(|(i, b)| (i, b.center - origin))
                .collect();
            for (a, (i, si)) in sight.iter().enumerate() {
                for (j, sj) in &sight[a + 1..] {
                    if si.angle_to(*sj) < thr {
                        linked.insert((*i, *j));
                    }
                }
            }
        }
        for pair in linked {
            *shared.entry(pair).or_default() += 1;
        }
    }

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (&(i, j), &count) in &shared {
        if count >= cfg.min_shared_frames {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let g = *slot.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

/// One survivor per group: highest mean IoU, then larger support, then
/// smaller object id. Returns indices into `boxes`, ascending.
pub fn prune<T: Real>(
    groups: &[Vec<usize>],
    scores: &[IoUScore<T>],
    boxes: &[ObjectBox3D<T>],
) -> Vec<usize> {
    let mut keep: Vec<usize> = groups
        .iter()
        .filter_map(|g| {
            g.iter().copied().reduce(|best, i| {
                let (a, b) = (&scores[best], &scores[i]);
                let better = b.mean_iou > a.mean_iou
                    || (b.mean_iou == a.mean_iou
                        && (boxes[i].support > boxes[best].support
                            || (boxes[i].support == boxes[best].support
                                && boxes[i].object_id < boxes[best].object_id)));
                if better {
                    i
                } else {
                    best
                }
            })
        })
        .collect();
    keep.sort_unstable();
    keep
}

#[derive(Debug, Clone)]
pub struct RefineOutcome<T: Real> {
    pub kept: Vec<ObjectBox3D<T>>,
    /// Scores of boxes that passed both floors, in input order.
    pub scores: Vec<IoUScore<T>>,
    pub unverifiable: Vec<u64>,
    /// Ids of boxes below the mean IoU floor.
    pub rejected: Vec<u64>,
    pub groups: usize,
}

/// Scores, groups and prunes a box map.
pub fn refine<T: Real>(
    boxes: Vec<ObjectBox3D<T>>,
    seq: &Sequence<T>,
    index: &DetectionIndex,
    cfg: &RefineConfig,
) -> RefineOutcome<T> {
    let scored: Vec<Result<IoUScore<T>, RefineError>> = boxes
        .par_iter()
        .map(|b| mean_reprojection_iou(b, seq, index, cfg))
        .collect();
    let floor = T::lit(cfg.min_mean_iou);
    let mut verified = Vec::new();
    let mut scores = Vec::new();
    let mut unverifiable = Vec::new();
    let mut rejected = Vec::new();
    for (b, s) in boxes.into_iter().zip(scored) {
        match s {
            Ok(s) if s.frames_scored < cfg.min_frames_scored => unverifiable.push(b.object_id),
            Ok(s) if s.mean_iou < floor => rejected.push(b.object_id),
            Ok(s) => {
                verified.push(b);
                scores.push(s);
            }
            Err(_) => unverifiable.push(b.object_id),
        }
    }
    let groups = group_by_los_angle(&verified, seq, cfg);
    let keep = prune(&groups, &scores, &verified);
    debug!(
        "refine: {} scored, {} unverifiable, {} below IoU floor, {} groups, {} kept",
        verified.len(),
        unverifiable.len(),
        rejected.len(),
        groups.len(),
        keep.len()
    );
    let kept = keep.iter().map(|&i| verified[i].clone()).collect();
    RefineOutcome {
        kept,
        scores,
        unverifiable,
        rejected,
        groups: groups.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraModel;
    use crate::geo::{wgs84_to_ecef, GeoPose, GeodeticPoint};
    use crate::math::{Iso3, Mat3, Quat};
    use crate::sequence::Frame;
    use crate::triangulate::{Detection2D, ObjectClass};
    use proptest::prelude::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox2D<f64> {
        BBox2D::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn iou_basics() {
        let a = bb(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou2d(&a, &a), 1.0);
        assert_eq!(iou2d(&a, &bb(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert!((iou2d(&a, &bb(0.0, 0.0, 1.0, 2.0)) - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(
            x0 in -50.0..50.0f64, y0 in -50.0..50.0f64, w0 in 0.1..40.0f64, h0 in 0.1..40.0f64,
            x1 in -50.0..50.0f64, y1 in -50.0..50.0f64, w1 in 0.1..40.0f64, h1 in 0.1..40.0f64,
        ) {
            let a = bb(x0, y0, x0 + w0, y0 + h0);
            let b = bb(x1, y1, x1 + w1, y1 + h1);
            let (ab, ba) = (iou2d(&a, &b), iou2d(&b, &a));
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou2d(&a, &a) - 1.0).abs() < 1e-12);
        }
    }

    fn score(id: u64, iou: f64) -> IoUScore<f64> {
        IoUScore {
            object_id: id,
            mean_iou: iou,
            frames_scored: 10,
        }
    }

    fn dummy_box(id: u64, support: usize) -> ObjectBox3D<f64> {
        let mut b = ObjectBox3D::new(
            id,
            ObjectClass::TrafficSign,
            crate::geo::EcefPoint::new(6.4e6, 0.0, 0.0),
            [1.0, 0.1, 1.0],
            0.0,
        );
        b.support = support;
        b
    }

    #[test]
    fn prune_keeps_best_per_group() {
        let boxes = vec![dummy_box(0, 5), dummy_box(1, 9), dummy_box(2, 3)];
        let scores = vec![score(0, 0.8), score(1, 0.3), score(2, 0.5)];
        assert_eq!(prune(&[vec![0, 1], vec![2]], &scores, &boxes), vec![0, 2]);
        assert_eq!(
            prune(&[vec![0], vec![1], vec![2]], &scores, &boxes),
            vec![0, 1, 2]
        );
        // Ties: larger support, then smaller id.
        let tied = vec![score(0, 0.5), score(1, 0.5), score(2, 0.5)];
        assert_eq!(prune(&[vec![0, 1, 2]], &tied, &boxes), vec![1]);
        let boxes_eq = vec![dummy_box(4, 3), dummy_box(2, 3)];
        assert_eq!(prune(&[vec![0, 1]], &tied[..2], &boxes_eq), vec![1]);
    }

    fn camera() -> CameraModel<f64> {
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
            k1: 0.0,
            k2: 0.0,
            extrinsic: Iso3::new(Quat::from_matrix(&r), Vec3::new(0.0, 0.0, 1.5)),
        }
    }

    /// Straight eastbound drive, 1 m per frame.
    fn drive(frames: usize) -> Vec<Frame<f64>> {
        let o = wgs84_to_ecef(&GeodeticPoint::new(37.4, -122.1, 5.0).unwrap());
        let east = crate::geo::heading_direction(0.0, &o);
        (0..frames)
            .map(|i| Frame {
                frame_id: format!("{i:04}"),
                timestamp: i as f64 * 0.1,
                pose: GeoPose::from_heading(i as f64 * 0.1, o + east * i as f64, 0.0),
            })
            .collect()
    }

    fn seq_with(frames: Vec<Frame<f64>>, dets: Vec<Detection2D<f64>>) -> Sequence<f64> {
        Sequence::new(frames, dets, vec![camera()]).unwrap()
    }

    fn sign_at(frames: &[Frame<f64>], id: u64, fwd: f64, left: f64, up: f64) -> ObjectBox3D<f64> {
        let c = frames[0].pose.from_vehicle_frame(Vec3::new(fwd, left, up));
        ObjectBox3D::new(
            id,
            ObjectClass::TrafficSign,
            c,
            [0.8, 0.1, 0.8],
            std::f64::consts::PI,
        )
    }

    fn detections_of(frames: &[Frame<f64>], bx: &ObjectBox3D<f64>) -> Vec<Detection2D<f64>> {
        let cam = camera();
        frames
            .iter()
            .filter_map(|f| {
                project_box(&cam, &f.pose, bx).map(|bbox| Detection2D {
                    frame_id: f.frame_id.clone(),
                    timestamp: f.timestamp,
                    camera_id: "front".into(),
                    class: bx.class,
                    bbox,
                    confidence: 0.9,
                    attributes: Default::default(),
                })
            })
            .collect()
    }

    #[test]
    fn exact_projection_scores_one() {
        let frames = drive(20);
        let bx = sign_at(&frames, 1, 60.0, 4.0, 2.0);
        let seq = seq_with(frames.clone(), detections_of(&frames, &bx));
        let idx = DetectionIndex::new(&seq, 0.7);
        let s = mean_reprojection_iou(&bx, &seq, &idx, &RefineConfig::default()).unwrap();
        assert!((s.mean_iou - 1.0).abs() < 1e-12);
        assert_eq!(s.frames_scored, 20);
    }

    #[test]
    fn visible_without_detections_scores_zero() {
        let frames = drive(10);
        let bx = sign_at(&frames, 1, 60.0, 4.0, 2.0);
        let seq = seq_with(frames, vec![]);
        let idx = DetectionIndex::new(&seq, 0.7);
        let s = mean_reprojection_iou(&bx, &seq, &idx, &RefineConfig::default()).unwrap();
        assert_eq!(s.mean_iou, 0.0);
        let behind = sign_at(&seq.frames, 2, -30.0, 0.0, 2.0);
        assert_eq!(
            mean_reprojection_iou(&behind, &seq, &idx, &RefineConfig::default()),
            Err(RefineError::NeverVisible(2))
        );
    }

    #[test]
    fn ghost_on_sightline_scores_lower_and_groups() {
        let frames = drive(40);
        let truth = sign_at(&frames, 1, 70.0, 5.0, 2.5);
        // Ghost 3 m behind the true center along the sightline of frame 20.
        let cam = camera();
        let c20 = cam.center(&frames[20].pose);
        let dir = (truth.center - c20).normalize();
        let mut ghost = truth.clone();
        ghost.object_id = 2;
        ghost.center = truth.center + dir * 3.0;
        let seq = seq_with(frames.clone(), detections_of(&frames, &truth));
        let idx = DetectionIndex::new(&seq, 0.7);
        let cfg = RefineConfig::default();
        let st = mean_reprojection_iou(&truth, &seq, &idx, &cfg).unwrap();
        let sg = mean_reprojection_iou(&ghost, &seq, &idx, &cfg).unwrap();
        assert!(sg.mean_iou < st.mean_iou, "{sg:?} {st:?}");
        let far = sign_at(&frames, 3, 70.0, -45.0, 2.5);
        let boxes = vec![truth, ghost, far];
        let groups = group_by_los_angle(&boxes, &seq, &cfg);
        assert_eq!(groups, vec![vec![0, 1], vec![2]]);
        let out = refine(boxes, &seq, &idx, &cfg);
        let ids: Vec<u64> = out.kept.iter().map(|b| b.object_id).collect();
        assert!(ids.contains(&1) && !ids.contains(&2));
    }

    #[test]
    fn boxes_below_iou_floor_are_rejected_before_grouping() {
        let frames = drive(30);
        let truth = sign_at(&frames, 1, 60.0, 4.0, 2.0);
        // Sees no detections at all, so would survive as a singleton group.
        let orphan = sign_at(&frames, 2, 60.0, -30.0, 2.0);
        let seq = seq_with(frames.clone(), detections_of(&frames, &truth));
        let idx = DetectionIndex::new(&seq, 0.7);
        let mut cfg = RefineConfig::default();
        let out = refine(vec![truth.clone(), orphan.clone()], &seq, &idx, &cfg);
        assert_eq!(out.kept, vec![truth.clone()]);
        assert_eq!(out.rejected, vec![2]);
        assert_eq!(out.groups, 1);
        cfg.min_mean_iou = 0.0;
        let out = refine(vec![truth, orphan], &seq, &idx, &cfg);
        assert_eq!(out.kept.len(), 2);
    }

    #[test]
    fn collinear_triple_forms_one_group_in_any_order() {
        let frames = drive(30);
        let a = sign_at(&frames, 1, 60.0, 0.0, 1.5);
        let mk = |id: u64, fwd: f64| sign_at(&frames, id, fwd, 0.0, 1.5);
        let mut boxes = vec![a, mk(2, 65.0), mk(3, 72.0)];
        let seq = seq_with(frames, vec![]);
        let cfg = RefineConfig::default();
        assert_eq!(group_by_los_angle(&boxes, &seq, &cfg), vec![vec![0, 1, 2]]);
        boxes.reverse();
        assert_eq!(group_by_los_angle(&boxes, &seq, &cfg), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn laterally_separated_boxes_stay_apart() {
        let frames = drive(30);
        let boxes = vec![
            sign_at(&frames, 1, 80.0, 25.0, 2.0),
            sign_at(&frames, 2, 80.0, -25.0, 2.0),
        ];
        let seq = seq_with(frames, vec![]);
        assert_eq!(
            group_by_los_angle(&boxes, &seq, &RefineConfig::default()),
            vec![vec![0], vec![1]]
        );
    }

    #[test]
    fn iou_in_f32() {
        let a = BBox2D::new(0.0f32, 0.0, 2.0, 2.0).unwrap();
        let b = BBox2D::new(1.0f32, 0.0, 3.0, 2.0).unwrap();
        assert!((iou2d(&a, &b) - 1.0 / 3.0).abs() < 1e-6);
    }

}
