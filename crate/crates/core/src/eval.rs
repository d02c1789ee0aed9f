//! Evaluation of annotations against ground truth.
//!
//! Predictions and ground truth are matched per frame on vehicle-frame
//! center distance. Statistics are pooled over all frames (each ground-truth
//! appearance counts once per frame) or, in per-object mode, over physical
//! objects.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxfit::ObjectClass;
use crate::export::{write_stable_json, AnnotatedObject, ExportError, FrameAnnotation};
use crate::io::{write, InputError};
use crate::math::Vec3;
use crate::scalar::{wrap_angle, Real};
use crate::triangulate::Attributes;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Input(#[from] InputError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Distance-sorted greedy assignment.
    Greedy,
    /// Maximum number of matches, then minimum total distance.
    Hungarian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    PerFrame,
    PerObject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Largest center distance counted as a match, m.
    pub association_threshold: f64,
    pub range_lateral: f64,
    pub range_longitudinal: f64,
    /// Bin width across the road, m.
    pub bin_lateral: f64,
    /// Bin length along the road, m.
    pub bin_longitudinal: f64,
    pub require_class_match: bool,
    pub matcher: Matcher,
    pub mode: EvalMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            association_threshold: 1.0,
            range_lateral: 10.0,
            range_longitudinal: 200.0,
            bin_lateral: 4.0,
            bin_longitudinal: 10.0,
            require_class_match: true,
            matcher: Matcher::Greedy,
            mode: EvalMode::PerFrame,
        }
    }
}

fn tiles(span: f64, step: f64) -> Option<usize> {
    let n = (span / step).round();
    ((n * step - span).abs() < 1e-9 * span.max(1.0) && n >= 1.0).then_some(n as usize)
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        for (name, v) in [
            ("association_threshold", self.association_threshold),
            ("range_lateral", self.range_lateral),
            ("range_longitudinal", self.range_longitudinal),
            ("bin_lateral", self.bin_lateral),
            ("bin_longitudinal", self.bin_longitudinal),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if tiles(2.0 * self.range_lateral, self.bin_lateral).is_none() {
            return bad("bin_lateral does not tile [-range_lateral, range_lateral]".into());
        }
        if tiles(self.range_longitudinal, self.bin_longitudinal).is_none() {
            return bad("bin_longitudinal does not tile [0, range_longitudinal]".into());
        }
        Ok(())
    }

    /// `(longitudinal rows, lateral columns)`.
    pub fn grid_shape(&self) -> (usize, usize) {
        (
            tiles(self.range_longitudinal, self.bin_longitudinal).unwrap_or(1),
            tiles(2.0 * self.range_lateral, self.bin_lateral).unwrap_or(1),
        )
    }

    pub fn in_range<T: Real>(&self, c: Vec3<T>) -> bool {
        let (x, y) = (c.x.as_f64(), c.y.as_f64());
        y.abs() <= self.range_lateral && (0.0..=self.range_longitudinal).contains(&x)
    }

    /// Bin of a vehicle-frame position; the far edges belong to the last bin.
    pub fn bin_of(&self, c: Vec3<f64>) -> Option<(usize, usize)> {
        if !self.in_range(c) {
            return None;
        }
        let (rows, cols) = self.grid_shape();
        let row = ((c.x / self.bin_longitudinal).floor() as usize).min(rows - 1);
        let col = (((c.y + self.range_lateral) / self.bin_lateral).floor() as usize).min(cols - 1);
        Some((row, col))
    }
}

/// One object as seen by the evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem<T: Real> {
    pub object_id: u64,
    pub class: ObjectClass,
    pub center: Vec3<T>,
    pub yaw: T,
    pub attributes: Attributes,
}

impl<T: Real> From<&AnnotatedObject<T>> for EvalItem<T> {
    fn from(o: &AnnotatedObject<T>) -> Self {
        Self {
            object_id: o.object_id,
            class: o.class,
            center: Vec3::from_array(o.center),
            yaw: o.yaw,
            attributes: o.attributes.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair<T: Real> {
    pub pred: usize,
    pub gt: usize,
    pub distance: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association<T: Real> {
    pub matches: Vec<Pair<T>>,
    /// Unmatched prediction indices, ascending.
    pub false_positives: Vec<usize>,
    /// Unmatched ground-truth indices, ascending.
    pub false_negatives: Vec<usize>,
}

/// Matches predictions to ground truth within one frame.
pub fn associate<T: Real>(
    preds: &[EvalItem<T>],
    gts: &[EvalItem<T>],
    cfg: &EvalConfig,
) -> Association<T> {
    let thr = T::lit(cfg.association_threshold);
    let mut pairs: Vec<Pair<T>> = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            if cfg.require_class_match && p.class != g.class {
                continue;
            }
            let distance = (p.center - g.center).norm();
            if distance < thr {
                pairs.push(Pair { pred: i, gt: j, distance });
            }
        }
    }
    let mut matches = match cfg.matcher {
        Matcher::Greedy => greedy(pairs, preds.len(), gts.len()),
        Matcher::Hungarian => hungarian(&pairs, preds.len(), gts.len(), cfg.association_threshold),
    };
    matches.sort_by_key(|m| (m.pred, m.gt));
    let used_p: BTreeSet<usize> = matches.iter().map(|m| m.pred).collect();
    let used_g: BTreeSet<usize> = matches.iter().map(|m| m.gt).collect();
    Association {
        false_positives: (0..preds.len()).filter(|i| !used_p.contains(i)).collect(),
        false_negatives: (0..gts.len()).filter(|j| !used_g.contains(j)).collect(),
        matches,
    }
}

fn greedy<T: Real>(mut pairs: Vec<Pair<T>>, np: usize, ng: usize) -> Vec<Pair<T>> {
    pairs.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });
    let (mut up, mut ug) = (vec![false; np], vec![false; ng]);
    pairs
        .into_iter()
        .filter(|p| {
            let free = !up[p.pred] && !ug[p.gt];
            if free {
                up[p.pred] = true;
                ug[p.gt] = true;
            }
            free
        })
        .collect()
}

/// Minimum-cost assignment where every admissible pair costs
/// `distance - big`, so the match count is maximized first.
fn hungarian<T: Real>(pairs: &[Pair<T>], np: usize, ng: usize, thr: f64) -> Vec<Pair<T>> {
    if pairs.is_empty() {
        return Vec::new();
    }
    let transpose = np > ng;
    let (n, m) = if transpose { (ng, np) } else { (np, ng) };
    let big = thr * (n.min(m) as f64 + 1.0);
    let mut cost = vec![vec![0.0f64; m]; n];
    let mut admissible: HashMap<(usize, usize), Pair<T>> = HashMap::new();
    for p in pairs {
        let (r, c) = if transpose { (p.gt, p.pred) } else { (p.pred, p.gt) };
        cost[r][c] = p.distance.as_f64() - big;
        admissible.insert((r, c), *p);
    }
    // Shortest augmenting path with potentials; rows 1..=n, cols 1..=m.
    let inf = f64::INFINITY;
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; m + 1]);
    let (mut p, mut way) = (vec![0usize; m + 1], vec![0usize; m + 1]);
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m)
        .filter(|&j| p[j] != 0)
        .filter_map(|j| admissible.get(&(p[j] - 1, j - 1)).copied())
        .collect()
}

/// A matched pair, resolved to object ids and vehicle-frame data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub frame_id: String,
    pub pred_id: u64,
    pub gt_id: u64,
    pub class: ObjectClass,
    pub distance: f64,
    /// `|wrap(pred - gt)|`, degrees.
    pub yaw_error_deg: f64,
    pub gt_center: [f64; 3],
    pub pred_attributes: Attributes,
    pub gt_attributes: Attributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unmatched {
    pub frame_id: String,
    pub object_id: u64,
    pub class: ObjectClass,
    pub center: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub localization_error_mean: Option<f64>,
    /// Population standard deviation.
    pub localization_error_std: Option<f64>,
    pub orientation_mae_deg: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Summary statistics from matched distances and yaw errors.
pub fn metrics(distances: &[f64], yaw_errors_deg: &[f64], fp: usize, fn_: usize) -> Metrics {
    let tp = distances.len();
    let (mean, std) = mean_std(distances);
    Metrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        localization_error_mean: mean,
        localization_error_std: std,
        orientation_mae_deg: mean_std(yaw_errors_deg).0,
    }
}

fn record_metrics(matches: &[&MatchRecord], fp: usize, fn_: usize) -> Metrics {
    let d: Vec<f64> = matches.iter().map(|m| m.distance).collect();
    let y: Vec<f64> = matches.iter().map(|m| m.yaw_error_deg).collect();
    metrics(&d, &y, fp, fn_)
}

/// Per-bin metrics over the configured range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedReport {
    pub lateral_edges: Vec<f64>,
    pub longitudinal_edges: Vec<f64>,
    /// `cells[row][col]`: row along the road, column across it.
    pub cells: Vec<Vec<Metrics>>,
}

/// Matches and false negatives go to the ground-truth bin, false positives
/// to the predicted bin.
pub fn binned_report(
    matches: &[MatchRecord],
    false_positives: &[Unmatched],
    false_negatives: &[Unmatched],
    cfg: &EvalConfig,
) -> BinnedReport {
    let (rows, cols) = cfg.grid_shape();
    let mut m: Vec<Vec<Vec<&MatchRecord>>> = vec![vec![Vec::new(); cols]; rows];
    let mut fp = vec![vec![0usize; cols]; rows];
    let mut fn_ = vec![vec![0usize; cols]; rows];
    for r in matches {
        if let Some((i, j)) = cfg.bin_of(Vec3::from_array(r.gt_center)) {
            m[i][j].push(r);
        }
    }
    for u in false_positives {
        if let Some((i, j)) = cfg.bin_of(Vec3::from_array(u.center)) {
            fp[i][j] += 1;
        }
    }
    for u in false_negatives {
        if let Some((i, j)) = cfg.bin_of(Vec3::from_array(u.center)) {
            fn_[i][j] += 1;
        }
    }
    let cells = (0..rows)
        .map(|i| (0..cols).map(|j| record_metrics(&m[i][j], fp[i][j], fn_[i][j])).collect())
        .collect();
    BinnedReport {
        lateral_edges: (0..=cols)
            .map(|j| -cfg.range_lateral + j as f64 * cfg.bin_lateral)
            .collect(),
        longitudinal_edges: (0..=rows).map(|i| i as f64 * cfg.bin_longitudinal).collect(),
        cells,
    }
}

fn interval(lo: f64, hi: f64, last: bool) -> String {
    format!("[{lo}, {hi}{}", if last { "]" } else { ")" })
}

impl BinnedReport {
    /// CSV grid: one row per longitudinal bin, one column per lateral bin;
    /// absent values are empty cells.
    pub fn to_csv(&self, value: impl Fn(&Metrics) -> Option<f64>) -> String {
        let cols = self.lateral_edges.len() - 1;
        let rows = self.longitudinal_edges.len() - 1;
        let mut s = String::from("longitudinal \\ lateral");
        for j in 0..cols {
            let _ = write!(
                s,
                ",\"{}\"",
                interval(self.lateral_edges[j], self.lateral_edges[j + 1], j + 1 == cols)
            );
        }
        s.push('\n');
        for i in 0..rows {
            let _ = write!(
                s,
                "\"{}\"",
                interval(self.longitudinal_edges[i], self.longitudinal_edges[i + 1], i + 1 == rows)
            );
            for cell in &self.cells[i] {
                match value(cell) {
                    Some(v) => {
                        let _ = write!(s, ",{v:.6}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Agreement of each attribute over the matches where both sides carry it.
pub fn classify_accuracy(matches: &[MatchRecord]) -> BTreeMap<String, Accuracy> {
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for m in matches {
        for (k, gv) in &m.gt_attributes {
            if let Some(pv) = m.pred_attributes.get(k) {
                let e = tally.entry(k.clone()).or_default();
                e.1 += 1;
                if pv == gv {
                    e.0 += 1;
                }
            }
        }
    }
    tally
        .into_iter()
        .map(|(k, (correct, total))| {
            (
                k,
                Accuracy {
                    correct,
                    total,
                    accuracy: correct as f64 / total as f64,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub frames_evaluated: usize,
    /// Ground-truth frames with no prediction file.
    pub missing_predictions: Vec<String>,
    /// Prediction frames with no ground truth.
    pub missing_ground_truth: Vec<String>,
    pub overall: Metrics,
    pub per_class: BTreeMap<ObjectClass, Metrics>,
    pub attribute_accuracy: BTreeMap<String, Accuracy>,
    pub bins: BinnedReport,
    pub matches: Vec<MatchRecord>,
    pub false_positives: Vec<Unmatched>,
    pub false_negatives: Vec<Unmatched>,
}

struct FrameResult {
    matches: Vec<MatchRecord>,
    fps: Vec<Unmatched>,
    fns: Vec<Unmatched>,
}

fn evaluate_frame(
    pred: &FrameAnnotation<f64>,
    gt: &FrameAnnotation<f64>,
    cfg: &EvalConfig,
) -> FrameResult {
    let p: Vec<EvalItem<f64>> = pred
        .objects
        .iter()
        .map(EvalItem::from)
        .filter(|o| cfg.in_range(o.center))
        .collect();
    let g: Vec<EvalItem<f64>> = gt
        .objects
        .iter()
        .map(EvalItem::from)
        .filter(|o| cfg.in_range(o.center))
        .collect();
    let a = associate(&p, &g, cfg);
    let unmatched = |o: &EvalItem<f64>| Unmatched {
        frame_id: gt.frame_id.clone(),
        object_id: o.object_id,
        class: o.class,
        center: o.center.to_array(),
    };
    FrameResult {
        matches: a
            .matches
            .iter()
            .map(|m| {
                let (pp, gg) = (&p[m.pred], &g[m.gt]);
                MatchRecord {
                    frame_id: gt.frame_id.clone(),
                    pred_id: pp.object_id,
                    gt_id: gg.object_id,
                    class: gg.class,
                    distance: m.distance,
                    yaw_error_deg: wrap_angle(pp.yaw - gg.yaw).abs().to_degrees(),
                    gt_center: gg.center.to_array(),
                    pred_attributes: pp.attributes.clone(),
                    gt_attributes: gg.attributes.clone(),
                }
            })
            .collect(),
        fps: a.false_positives.iter().map(|&i| unmatched(&p[i])).collect(),
        fns: a.false_negatives.iter().map(|&j| unmatched(&g[j])).collect(),
    }
}

fn per_frame_metrics(
    matches: &[MatchRecord],
    fps: &[Unmatched],
    fns: &[Unmatched],
    class: Option<ObjectClass>,
) -> Metrics {
    let keep = |c: ObjectClass| class.is_none_or(|k| k == c);
    let m: Vec<&MatchRecord> = matches.iter().filter(|r| keep(r.class)).collect();
    record_metrics(
        &m,
        fps.iter().filter(|u| keep(u.class)).count(),
        fns.iter().filter(|u| keep(u.class)).count(),
    )
}

/// Each physical object counts once: a ground-truth object is found when
/// it is matched in any frame, a prediction is false when it never is.
fn per_object_metrics(
    matches: &[MatchRecord],
    fps: &[Unmatched],
    fns: &[Unmatched],
    class: Option<ObjectClass>,
) -> Metrics {
    let keep = |c: ObjectClass| class.is_none_or(|k| k == c);
    let mut found: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut matched_preds = BTreeSet::new();
    for m in matches.iter().filter(|m| keep(m.class)) {
        let e = found.entry(m.gt_id).or_default();
        e.0.push(m.distance);
        e.1.push(m.yaw_error_deg);
        matched_preds.insert(m.pred_id);
    }
    let missed: BTreeSet<u64> = fns
        .iter()
        .filter(|u| keep(u.class) && !found.contains_key(&u.object_id))
        .map(|u| u.object_id)
        .collect();
    let false_preds: BTreeSet<u64> = fps
        .iter()
        .filter(|u| keep(u.class) && !matched_preds.contains(&u.object_id))
        .map(|u| u.object_id)
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let d: Vec<f64> = found.values().map(|(d, _)| mean(d)).collect();
    let y: Vec<f64> = found.values().map(|(_, y)| mean(y)).collect();
    metrics(&d, &y, false_preds.len(), missed.len())
}

/// Evaluates predictions against ground truth on the frames both contain.
pub fn evaluate(
    preds: &[FrameAnnotation<f64>],
    gts: &[FrameAnnotation<f64>],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let pred_by_id: HashMap<&str, &FrameAnnotation<f64>> =
        preds.iter().map(|a| (a.frame_id.as_str(), a)).collect();
    let gt_ids: BTreeSet<&str> = gts.iter().map(|a| a.frame_id.as_str()).collect();
    let pairs: Vec<(&FrameAnnotation<f64>, &FrameAnnotation<f64>)> = gts
        .iter()
        .filter_map(|g| pred_by_id.get(g.frame_id.as_str()).map(|p| (*p, g)))
        .collect();
    let results: Vec<FrameResult> = pairs
        .par_iter()
        .map(|(p, g)| evaluate_frame(p, g, cfg))
        .collect();
    let mut matches = Vec::new();
    let mut fps = Vec::new();
    let mut fns = Vec::new();
    for r in results {
        matches.extend(r.matches);
        fps.extend(r.fps);
        fns.extend(r.fns);
    }
    let summarize = |class| match cfg.mode {
        EvalMode::PerFrame => per_frame_metrics(&matches, &fps, &fns, class),
        EvalMode::PerObject => per_object_metrics(&matches, &fps, &fns, class),
    };
    let overall = summarize(None);
    let per_class = ObjectClass::ALL.iter().map(|&c| (c, summarize(Some(c)))).collect();
    Ok(EvalReport {
        mode: cfg.mode,
        frames_evaluated: pairs.len(),
        missing_predictions: gts
            .iter()
            .filter(|g| !pred_by_id.contains_key(g.frame_id.as_str()))
            .map(|g| g.frame_id.clone())
            .collect(),
        missing_ground_truth: preds
            .iter()
            .filter(|p| !gt_ids.contains(p.frame_id.as_str()))
            .map(|p| p.frame_id.clone())
            .collect(),
        overall,
        per_class,
        attribute_accuracy: classify_accuracy(&matches),
        bins: binned_report(&matches, &fps, &fns, cfg),
        matches,
        false_positives: fps,
        false_negatives: fns,
    })
}

fn opt(v: Option<f64>, unit: &str) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}{unit}"))
}

fn metrics_lines(s: &mut String, label: &str, m: &Metrics) {
    let _ = writeln!(s, "{label}");
    let _ = writeln!(
        s,
        "  TP {}  FP {}  FN {}",
        m.true_positives, m.false_positives, m.false_negatives
    );
    let _ = writeln!(s, "  precision            {}", opt(m.precision, ""));
    let _ = writeln!(s, "  recall               {}", opt(m.recall, ""));
    let loc = match (m.localization_error_mean, m.localization_error_std) {
        (Some(a), Some(b)) => format!("{a:.4} ± {b:.4} m"),
        _ => "n/a".into(),
    };
    let _ = writeln!(s, "  localization error   {loc}");
    let _ = writeln!(s, "  orientation MAE      {}", opt(m.orientation_mae_deg, "°"));
}

impl EvalReport {
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let mode = match self.mode {
            EvalMode::PerFrame => "per-frame",
            EvalMode::PerObject => "per-object",
        };
        let _ = writeln!(s, "frames evaluated: {} ({mode})", self.frames_evaluated);
        if self.frames_evaluated == 0 {
            let _ = writeln!(s, "warning: no frame ids in common");
        }
        if !self.missing_predictions.is_empty() {
            let _ = writeln!(s, "frames without predictions: {}", self.missing_predictions.len());
        }
        if !self.missing_ground_truth.is_empty() {
            let _ = writeln!(s, "frames without ground truth: {}", self.missing_ground_truth.len());
        }
        metrics_lines(&mut s, "all", &self.overall);
        for (c, m) in &self.per_class {
            metrics_lines(&mut s, c.as_str(), m);
        }
        for (k, a) in &self.attribute_accuracy {
            let _ = writeln!(s, "attribute {k}: {}/{} = {:.4}", a.correct, a.total, a.accuracy);
        }
        s
    }

    /// `summary.txt`, `report.json` and one CSV grid per binned metric.
    pub fn write_to(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(|source| InputError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write(&dir.join("summary.txt"), &self.summary_text())?;
        write_stable_json(self, &dir.join("report.json"))?;
        let count = |f: fn(&Metrics) -> usize| move |m: &Metrics| Some(f(m) as f64);
        let grids: [(&str, Box<dyn Fn(&Metrics) -> Option<f64>>); 7] = [
            ("precision.csv", Box::new(|m| m.precision)),
            ("recall.csv", Box::new(|m| m.recall)),
            ("localization_error.csv", Box::new(|m| m.localization_error_mean)),
            ("orientation_mae.csv", Box::new(|m| m.orientation_mae_deg)),
            ("true_positives.csv", Box::new(count(|m| m.true_positives))),
            ("false_positives.csv", Box::new(count(|m| m.false_positives))),
            ("false_negatives.csv", Box::new(count(|m| m.false_negatives))),
        ];
        for (name, f) in grids {
            write(&dir.join(name), &self.bins.to_csv(f))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn item(id: u64, x: f64, y: f64) -> EvalItem<f64> {
        EvalItem {
            object_id: id,
            class: ObjectClass::TrafficSign,
            center: Vec3::new(x, y, 2.0),
            yaw: 0.0,
            attributes: Attributes::new(),
        }
    }

    #[test]
    fn simple_associations() {
        let cfg = EvalConfig::default();
        let a = associate(&[item(1, 20.3, 0.0)], &[item(9, 20.0, 0.0)], &cfg);
        assert_eq!(a.matches.len(), 1);
        let a = associate(&[item(1, 21.5, 0.0)], &[item(9, 20.0, 0.0)], &cfg);
        assert!(a.matches.is_empty());
        assert_eq!((a.false_positives.len(), a.false_negatives.len()), (1, 1));
        let a = associate(&[item(1, 20.4, 0.0), item(2, 20.2, 0.0)], &[item(9, 20.0, 0.0)], &cfg);
        assert_eq!(a.matches.len(), 1);
        assert_eq!(a.matches[0].pred, 1);
        assert_eq!(a.false_positives, vec![0]);
    }

    #[test]
    fn class_must_match_when_required() {
        let mut light = item(1, 20.0, 0.0);
        light.class = ObjectClass::TrafficLight;
        let mut cfg = EvalConfig::default();
        assert!(associate(&[light.clone()], &[item(2, 20.0, 0.0)], &cfg).matches.is_empty());
        cfg.require_class_match = false;
        assert_eq!(associate(&[light], &[item(2, 20.0, 0.0)], &cfg).matches.len(), 1);
    }

    /// Exhaustive maximum-cardinality, minimum-distance matching.
    fn brute_force(p: &[EvalItem<f64>], g: &[EvalItem<f64>], thr: f64) -> (usize, f64) {
        fn go(i: usize, p: &[EvalItem<f64>], g: &[EvalItem<f64>], used: &mut Vec<bool>, thr: f64) -> (usize, f64) {
            if i == p.len() {
                return (0, 0.0);
            }
            let mut best = go(i + 1, p, g, used, thr);
            for j in 0..g.len() {
                let d = (p[i].center - g[j].center).norm();
                if !used[j] && d < thr {
                    used[j] = true;
                    let (n, s) = go(i + 1, p, g, used, thr);
                    used[j] = false;
                    let cand = (n + 1, s + d);
                    if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1 - 1e-12) {
                        best = cand;
                    }
                }
            }
            best
        }
        go(0, p, g, &mut vec![false; g.len()], thr)
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = EvalConfig {
            matcher: Matcher::Hungarian,
            ..Default::default()
        };
        for _ in 0..200 {
            let np = rng.random_range(0..6);
            let ng = rng.random_range(0..6);
            let mut pt = || item(0, rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
            let p: Vec<_> = (0..np).map(|_| pt()).collect();
            let g: Vec<_> = (0..ng).map(|_| pt()).collect();
            let a = associate(&p, &g, &cfg);
            let (n, s) = brute_force(&p, &g, 1.0);
            assert_eq!(a.matches.len(), n);
            let total: f64 = a.matches.iter().map(|m| m.distance).sum();
            assert!((total - s).abs() < 1e-9);
        }
    }

    #[test]
    fn hungarian_can_beat_greedy() {
        // Greedy takes the 0.1 pair and strands both others.
        let p = [item(1, 0.0, 0.0), item(2, 0.95, 0.0)];
        let g = [item(3, 0.1, 0.0), item(4, -0.5, 0.0)];
        let greedy = associate(&p, &g, &EvalConfig::default());
        let hung = associate(
            &p,
            &g,
            &EvalConfig {
                matcher: Matcher::Hungarian,
                ..Default::default()
            },
        );
        assert_eq!(greedy.matches.len(), 1);
        assert_eq!(hung.matches.len(), 2);
    }

    #[test]
    fn swapping_roles_swaps_fp_and_fn() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = EvalConfig::default();
        for _ in 0..100 {
            let mut pt = || item(0, rng.random_range(0.0..4.0), rng.random_range(0.0..4.0));
            let p: Vec<_> = (0..5).map(|_| pt()).collect();
            let g: Vec<_> = (0..4).map(|_| pt()).collect();
            let a = associate(&p, &g, &cfg);
            let b = associate(&g, &p, &cfg);
            assert_eq!(a.matches.len(), b.matches.len());
            assert_eq!(a.false_positives, b.false_negatives);
            assert_eq!(a.false_negatives, b.false_positives);
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = EvalConfig::default();
        let mut p: Vec<_> = (0..8).map(|i| item(i, rng.random_range(0.0..5.0), 0.0)).collect();
        let mut g: Vec<_> = (0..8).map(|i| item(i, rng.random_range(0.0..5.0), 0.0)).collect();
        let summary = |a: &Association<f64>| {
            let mut d: Vec<f64> = a.matches.iter().map(|m| m.distance).collect();
            d.sort_by(f64::total_cmp);
            (a.false_positives.len(), a.false_negatives.len(), d)
        };
        let base = summary(&associate(&p, &g, &cfg));
        for _ in 0..20 {
            p.shuffle(&mut rng);
            g.shuffle(&mut rng);
            assert_eq!(summary(&associate(&p, &g, &cfg)), base);
        }
    }

    #[test]
    fn metric_definitions() {
        let m = metrics(&[0.1; 9], &[0.0; 9], 1, 0);
        assert!((m.precision.unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(m.recall, Some(1.0));
        let m = metrics(&[0.1, 0.3], &[10.0, 20.0], 0, 0);
        assert!((m.localization_error_mean.unwrap() - 0.2).abs() < 1e-12);
        assert!((m.localization_error_std.unwrap() - 0.1).abs() < 1e-12);
        assert!((m.orientation_mae_deg.unwrap() - 15.0).abs() < 1e-12);
        let empty = metrics(&[], &[], 0, 0);
        assert_eq!(empty.precision, None);
        assert_eq!(empty.recall, None);
        assert_eq!(empty.localization_error_mean, None);
    }

    #[test]
    fn yaw_error_wraps() {
        let mut a = item(1, 10.0, 0.0);
        let mut b = item(2, 10.0, 0.0);
        a.yaw = 179f64.to_radians();
        b.yaw = -179f64.to_radians();
        let pa = annotation("f", vec![a]);
        let pb = annotation("f", vec![b]);
        let r = evaluate(&[pa], &[pb], &EvalConfig::default()).unwrap();
        assert!((r.overall.orientation_mae_deg.unwrap() - 2.0).abs() < 1e-9);
    }

    fn annotation(id: &str, items: Vec<EvalItem<f64>>) -> FrameAnnotation<f64> {
        let mut a = FrameAnnotation::empty(id, 0.0);
        a.objects = items
            .into_iter()
            .map(|i| AnnotatedObject {
                object_id: i.object_id,
                class: i.class,
                center: i.center.to_array(),
                extent: [0.5, 0.1, 0.5],
                yaw: i.yaw,
                attributes: i.attributes,
                projections: BTreeMap::new(),
            })
            .collect();
        a
    }

    #[test]
    fn bins_tile_the_range() {
        let cfg = EvalConfig::default();
        assert_eq!(cfg.grid_shape(), (20, 5));
        let empty = binned_report(&[], &[], &[], &cfg);
        assert_eq!(empty.lateral_edges, vec![-10.0, -6.0, -2.0, 2.0, 6.0, 10.0]);
        assert_eq!(empty.longitudinal_edges.len(), 21);
        assert_eq!(*empty.longitudinal_edges.last().unwrap(), 200.0);
        assert!(empty.cells.iter().flatten().all(|m| m.precision.is_none() && m.recall.is_none()));
        assert_eq!(cfg.bin_of(Vec3::new(15.0, 1.0, 0.0)), Some((1, 2)));
        assert_eq!(cfg.bin_of(Vec3::new(200.0, 10.0, 0.0)), Some((19, 4)));
        assert_eq!(cfg.bin_of(Vec3::new(200.1, 0.0, 0.0)), None);
        let bad = EvalConfig {
            bin_lateral: 3.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_bin_population() {
        let cfg = EvalConfig::default();
        let p = annotation("f", vec![item(1, 15.0, 1.0)]);
        let r = evaluate(&[p.clone()], &[p], &cfg).unwrap();
        let populated: Vec<(usize, usize)> = (0..20)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|&(i, j)| r.bins.cells[i][j].true_positives > 0)
            .collect();
        assert_eq!(populated, vec![(1, 2)]);
        let csv = r.bins.to_csv(|m| m.recall);
        assert_eq!(csv.lines().count(), 21);
        assert!(csv.lines().nth(2).unwrap().ends_with(",,1.000000,,"));
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<_> = (0..10)
            .map(|f| {
                let items = (0..5)
                    .map(|i| {
                        let mut it = item(i, rng.random_range(0.0..200.0), rng.random_range(-10.0..10.0));
                        it.yaw = rng.random_range(-3.0..3.0);
                        it.attributes.insert("state".into(), "red".into());
                        it
                    })
                    .collect();
                annotation(&format!("{f:03}"), items)
            })
            .collect();
        for mode in [EvalMode::PerFrame, EvalMode::PerObject] {
            let cfg = EvalConfig {
                mode,
                ..Default::default()
            };
            let r = evaluate(&frames, &frames, &cfg).unwrap();
            assert_eq!(r.overall.precision, Some(1.0));
            assert_eq!(r.overall.recall, Some(1.0));
            assert_eq!(r.overall.localization_error_mean, Some(0.0));
            assert_eq!(r.overall.orientation_mae_deg, Some(0.0));
            assert_eq!(r.attribute_accuracy["state"].accuracy, 1.0);
        }
    }

    #[test]
    fn disjoint_frames_give_absent_metrics() {
        let a = annotation("a", vec![item(1, 10.0, 0.0)]);
        let b = annotation("b", vec![item(1, 10.0, 0.0)]);
        let r = evaluate(&[a], &[b], &EvalConfig::default()).unwrap();
        assert_eq!(r.frames_evaluated, 0);
        assert_eq!(r.overall.precision, None);
        assert_eq!(r.missing_predictions, vec!["b".to_string()]);
        assert!(r.summary_text().contains("no frame ids in common"));
    }

    #[test]
    fn accuracy_ratio() {
        let rec = |ok: bool| MatchRecord {
            frame_id: "f".into(),
            pred_id: 1,
            gt_id: 1,
            class: ObjectClass::TrafficLight,
            distance: 0.0,
            yaw_error_deg: 0.0,
            gt_center: [10.0, 0.0, 0.0],
            pred_attributes: [("state".to_string(), if ok { "red" } else { "green" }.to_string())].into(),
            gt_attributes: [("state".to_string(), "red".to_string())].into(),
        };
        let recs: Vec<_> = (0..50).map(|i| rec(i >= 3)).collect();
        assert!((classify_accuracy(&recs)["state"].accuracy - 0.94).abs() < 1e-12);
        assert!(classify_accuracy(&[]).is_empty());
    }

    #[test]
    fn per_object_mode_counts_objects_once() {
        let gt: Vec<_> = (0..4)
            .map(|f| annotation(&f.to_string(), vec![item(1, 10.0, 0.0), item(2, 30.0, 0.0)]))
            .collect();
        let pred: Vec<_> = (0..4)
            .map(|f| {
                let x = if f == 0 { 10.1 } else { 15.0 };
                annotation(&f.to_string(), vec![item(7, x, 0.0)])
            })
            .collect();
        let cfg = EvalConfig {
            mode: EvalMode::PerObject,
            ..Default::default()
        };
        let r = evaluate(&pred, &gt, &cfg).unwrap();
        assert_eq!(r.overall.true_positives, 1);
        assert_eq!(r.overall.false_negatives, 1);
        assert_eq!(r.overall.false_positives, 0);
        let pf = evaluate(&pred, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(pf.overall.true_positives, 1);
        assert_eq!(pf.overall.false_negatives, 7);
        assert_eq!(pf.overall.false_positives, 3);
    }

    #[test]
    fn report_files() {
        let a = annotation("a", vec![item(1, 10.0, 0.0)]);
        let r = evaluate(&[a.clone()], &[a], &EvalConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.write_to(dir.path()).unwrap();
        for f in ["summary.txt", "report.json", "precision.csv", "localization_error.csv", "false_negatives.csv"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
    }
}
