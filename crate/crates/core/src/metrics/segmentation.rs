use serde::{Deserialize, Serialize};

use crate::datamodel::ClassMap;
use crate::error::{Error, Result};

/// Pixel counts indexed by (ground truth, prediction).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, gt: &ClassMap, pred: &ClassMap) -> Result<()> {
        if (gt.height(), gt.width()) != (pred.height(), pred.width()) {
            return Err(Error::shape(format!(
                "prediction is {}x{}, ground truth {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        for map in [gt, pred] {
            if map.classes() > self.classes {
                return Err(Error::ClassCount {
                    expected: self.classes,
                    found: map.classes(),
                });
            }
        }
        for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
            self.counts[g as usize * self.classes + p as usize] += 1;
        }
        Ok(())
    }

    /// Adds the counts of another matrix over the same classes.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::ClassCount {
                expected: self.classes,
                found: other.classes,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// IoU per class and their mean, skipping classes in `exclude` and classes that occur in
    /// neither the ground truth nor the predictions.
    pub fn report(&self, exclude: &[u16]) -> Result<SegmentationReport> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Config("no pixels were evaluated".into()));
        }
        let mut iou = Vec::with_capacity(self.classes);
        let mut trace = 0;
        for c in 0..self.classes {
            let tp = self.get(c, c);
            trace += tp;
            let gt: u64 = (0..self.classes).map(|p| self.get(c, p)).sum();
            let pred: u64 = (0..self.classes).map(|g| self.get(g, c)).sum();
            let union = gt + pred - tp;
            iou.push((union > 0).then(|| tp as f64 / union as f64));
        }
        let scored: Vec<f64> = iou
            .iter()
            .enumerate()
            .filter(|(c, _)| !exclude.contains(&(*c as u16)))
            .filter_map(|(_, v)| *v)
            .collect();
        if scored.is_empty() {
            return Err(Error::Config("every class is excluded or absent".into()));
        }
        Ok(SegmentationReport {
            iou,
            miou: scored.iter().sum::<f64>() / scored.len() as f64,
            pixel_accuracy: trace as f64 / total as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    /// `None` for classes absent from both prediction and ground truth.
    pub iou: Vec<Option<f64>>,
    pub miou: f64,
    pub pixel_accuracy: f64,
}

/// Accumulates the confusion matrix over aligned sequences and reports IoU, mIoU and accuracy.
pub fn segmentation_report(
    preds: &[ClassMap],
    gts: &[ClassMap],
    classes: usize,
    exclude: &[u16],
) -> Result<SegmentationReport> {
    if preds.is_empty() {
        return Err(Error::Config("segmentation report needs at least one map".into()));
    }
    if preds.len() != gts.len() {
        return Err(Error::shape(format!("{} predictions for {} ground truths", preds.len(), gts.len())));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (p, g) in preds.iter().zip(gts) {
        cm.accumulate(g, p)?;
    }
    cm.report(exclude)
}
