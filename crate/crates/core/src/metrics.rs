//! Per-image segmentation metrics (mAP, recall, mIoU, mAcc) and their
//! image → scene → overall aggregation.
//!
//! Undefined values (empty denominators) are `None` and are skipped by every
//! mean rather than counted as 0 or 1.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{MaskMap, ProbMap};
use crate::scalar::Scalar;

/// Pixel counts per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: Vec<u64>,
    pub false_pos: Vec<u64>,
    pub false_neg: Vec<u64>,
}

impl ConfusionCounts {
    /// Number of classes tracked (one past the largest label seen).
    pub fn classes(&self) -> usize {
        self.true_pos.len()
    }

    fn get(v: &[u64], c: u16) -> u64 {
        v.get(c as usize).copied().unwrap_or(0)
    }

    pub fn tp(&self, c: u16) -> u64 {
        Self::get(&self.true_pos, c)
    }

    pub fn fp(&self, c: u16) -> u64 {
        Self::get(&self.false_pos, c)
    }

    pub fn fn_(&self, c: u16) -> u64 {
        Self::get(&self.false_neg, c)
    }

    /// Ground-truth pixels of class `c`.
    pub fn gt_pixels(&self, c: u16) -> u64 {
        self.tp(c) + self.fn_(c)
    }

    pub fn union(&self, c: u16) -> u64 {
        self.tp(c) + self.fp(c) + self.fn_(c)
    }
}

fn check_dims(pred_w: usize, pred_h: usize, gt: &MaskMap) -> Result<()> {
    if (pred_w, pred_h) != (gt.width(), gt.height()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction is {pred_w}x{pred_h}, ground truth is {}x{}",
            gt.width(),
            gt.height()
        )));
    }
    Ok(())
}

pub fn confusion(pred: &MaskMap, gt: &MaskMap) -> Result<ConfusionCounts> {
    check_dims(pred.width(), pred.height(), gt)?;
    let n = pred.max_class().max(gt.max_class()) as usize + 1;
    let mut c = ConfusionCounts {
        true_pos: vec![0; n],
        false_pos: vec![0; n],
        false_neg: vec![0; n],
    };
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if p == g {
            c.true_pos[p as usize] += 1;
        } else {
            c.false_pos[p as usize] += 1;
            c.false_neg[g as usize] += 1;
        }
    }
    Ok(c)
}

/// Labels `0..classes` for every class that occurs in either count table.
pub fn all_classes(counts: &ConfusionCounts) -> Vec<u16> {
    (0..counts.classes() as u16).collect()
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.into_iter().flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn iou(counts: &ConfusionCounts, c: u16) -> Option<f64> {
    ratio(counts.tp(c), counts.union(c))
}

/// IoU for every class in `0..counts.classes()`.
pub fn iou_per_class(counts: &ConfusionCounts) -> Vec<Option<f64>> {
    all_classes(counts)
        .into_iter()
        .map(|c| iou(counts, c))
        .collect()
}

/// Mean IoU over the classes of `classes` present in either mask.
pub fn miou(counts: &ConfusionCounts, classes: &[u16]) -> Option<f64> {
    mean(classes.iter().map(|&c| iou(counts, c)))
}

pub fn acc(counts: &ConfusionCounts, c: u16) -> Option<f64> {
    ratio(counts.tp(c), counts.gt_pixels(c))
}

pub fn acc_per_class(counts: &ConfusionCounts) -> Vec<Option<f64>> {
    all_classes(counts)
        .into_iter()
        .map(|c| acc(counts, c))
        .collect()
}

/// Mean accuracy over the classes of `classes` that have ground-truth pixels.
pub fn macc(counts: &ConfusionCounts, classes: &[u16]) -> Option<f64> {
    mean(classes.iter().map(|&c| acc(counts, c)))
}

/// Micro-averaged recall over the food classes of `classes` (class 0,
/// background, never counts).
pub fn recall(counts: &ConfusionCounts, classes: &[u16]) -> Option<f64> {
    let food = classes.iter().filter(|&&c| c != 0);
    let (tp, gt) = food.fold((0, 0), |(tp, gt), &c| {
        (tp + counts.tp(c), gt + counts.gt_pixels(c))
    });
    ratio(tp, gt)
}

/// Ranked-pixel average precision of class `c`: pixels sorted by
/// probability of `c`, highest first, ties in raster order; the precision at
/// each positive's rank, summed and divided by the positive count.
pub fn average_precision<T: Scalar>(
    prob: &ProbMap<T>,
    gt: &MaskMap,
    c: u16,
) -> Result<Option<f64>> {
    check_dims(prob.width(), prob.height(), gt)?;
    let positives = gt.data().iter().filter(|&&g| g == c).count();
    if positives == 0 {
        return Ok(None);
    }
    if c as usize >= prob.classes() {
        // the class is never scored; every pixel ties at zero
        return Ok(Some(ranked_ap(gt.data().iter().map(|&g| g == c))));
    }
    let mut order: Vec<usize> = (0..gt.data().len()).collect();
    let score = |i: usize| prob.prob(i, c as usize).as_f64();
    if order.iter().any(|&i| score(i).is_nan()) {
        return Err(Error::NonFinite("class probability"));
    }
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)));
    Ok(Some(ranked_ap(
        order.into_iter().map(|i| gt.data()[i] == c),
    )))
}

fn ranked_ap(hits: impl Iterator<Item = bool>) -> f64 {
    let (mut tp, mut sum, mut positives) = (0u64, 0.0, 0u64);
    for (rank, hit) in hits.enumerate() {
        if hit {
            tp += 1;
            positives += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    sum / positives as f64
}

/// Precision of the binary mask for class `c`, defined when the ground truth
/// contains `c`. Used in place of ranked AP when only hard masks exist.
pub fn binary_precision(counts: &ConfusionCounts, c: u16) -> Option<f64> {
    if counts.gt_pixels(c) == 0 {
        return None;
    }
    Some(ratio(counts.tp(c), counts.tp(c) + counts.fp(c)).unwrap_or(0.0))
}

/// Mean of the defined per-class average precisions.
pub fn map_score<T: Scalar>(
    prob: &ProbMap<T>,
    gt: &MaskMap,
    classes: &[u16],
) -> Result<Option<f64>> {
    let mut aps = Vec::with_capacity(classes.len());
    for &c in classes {
        aps.push(average_precision(prob, gt, c)?);
    }
    Ok(mean(aps))
}

/// How mAP is computed for an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApMode {
    /// Rank pixels by class probability.
    #[default]
    Ranked,
    /// Precision of the hard mask.
    Binary,
}

/// The four metric values at any aggregation level.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricValues {
    pub map: Option<f64>,
    pub recall: Option<f64>,
    pub miou: Option<f64>,
    pub macc: Option<f64>,
}

impl MetricValues {
    fn mean_of<'a>(items: impl Iterator<Item = &'a MetricValues> + Clone) -> MetricValues {
        MetricValues {
            map: mean(items.clone().map(|v| v.map)),
            recall: mean(items.clone().map(|v| v.recall)),
            miou: mean(items.clone().map(|v| v.miou)),
            macc: mean(items.map(|v| v.macc)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub id: String,
    pub values: MetricValues,
}

/// Scores one image. With `prob = None` the prediction is scored through a
/// one-hot probability map built from `pred`.
pub fn score_image<T: Scalar>(
    id: impl Into<String>,
    pred: &MaskMap,
    prob: Option<&ProbMap<T>>,
    gt: &MaskMap,
    classes: &[u16],
    mode: ApMode,
) -> Result<ImageScore> {
    let counts = confusion(pred, gt)?;
    let map = match mode {
        ApMode::Binary => mean(classes.iter().map(|&c| binary_precision(&counts, c))),
        ApMode::Ranked => match prob {
            Some(p) => map_score(p, gt, classes)?,
            None => {
                let width = classes.iter().copied().max().map_or(1, |c| c as usize + 1);
                let one_hot =
                    ProbMap::<f64>::one_hot(pred, width.max(pred.max_class() as usize + 1))?;
                map_score(&one_hot, gt, classes)?
            }
        },
    };
    Ok(ImageScore {
        id: id.into(),
        values: MetricValues {
            map,
            recall: recall(&counts, classes),
            miou: miou(&counts, classes),
            macc: macc(&counts, classes),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneReport {
    pub id: String,
    pub images: Vec<ImageScore>,
    pub mean: MetricValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub scenes: Vec<SceneReport>,
    pub overall: MetricValues,
    pub classes: Vec<u16>,
}

/// Scene values are means over that scene's images; overall values are
/// unweighted means over scenes.
pub fn aggregate(
    scenes: Vec<(String, Vec<ImageScore>)>,
    classes: Vec<u16>,
) -> Result<MetricReport> {
    if scenes.is_empty() || scenes.iter().any(|(_, imgs)| imgs.is_empty()) {
        return Err(Error::Empty("no scored images"));
    }
    let scenes: Vec<SceneReport> = scenes
        .into_iter()
        .map(|(id, images)| {
            let mean = MetricValues::mean_of(images.iter().map(|i| &i.values));
            SceneReport { id, images, mean }
        })
        .collect();
    let overall = MetricValues::mean_of(scenes.iter().map(|s| &s.mean));
    Ok(MetricReport {
        scenes,
        overall,
        classes,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

fn row(out: &mut String, level: &str, id: &str, v: &MetricValues) {
    let _ = writeln!(
        out,
        "{level},{id},{},{},{},{}",
        cell(v.map),
        cell(v.recall),
        cell(v.miou),
        cell(v.macc)
    );
}

/// CSV text: image rows, then scene rows, then the overall row.
pub fn report_csv(report: &MetricReport) -> String {
    let mut out = String::from("level,id,map,recall,miou,macc\n");
    for s in &report.scenes {
        for img in &s.images {
            row(&mut out, "image", &img.id, &img.values);
        }
    }
    for s in &report.scenes {
        row(&mut out, "scene", &s.id, &s.mean);
    }
    row(&mut out, "overall", "", &report.overall);
    out
}

pub fn emit_report(report: &MetricReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report_csv(report)).map_err(|e| Error::io(path, e))
}
