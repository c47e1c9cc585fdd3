//! Classification metrics: confusion matrices, F1, AUROC and ROC points.

use serde::Serialize;

use crate::error::{Error, Result};

/// Counts indexed `[truth][prediction]`. For two classes, class 1 is the
/// positive class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    /// Binary matrix from the four cells.
    pub fn binary(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { classes: 2, counts: vec![tn, fp, fn_, tp] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.classes + pred] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::contract("confusion matrices have different class counts"));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// `(tp, fp, fn)` treating `k` as the positive class.
    pub fn one_vs_rest(&self, k: usize) -> (u64, u64, u64) {
        let tp = self.get(k, k);
        let predicted: u64 = (0..self.classes).map(|t| self.get(t, k)).sum();
        let actual: u64 = (0..self.classes).map(|p| self.get(k, p)).sum();
        (tp, predicted - tp, actual - tp)
    }

    /// Positive-class F1 for two classes; macro F1 otherwise.
    pub fn f1(&self) -> f64 {
        if self.classes == 2 {
            let (tp, fp, fn_) = self.one_vs_rest(1);
            f1_from_counts(tp, fp, fn_)
        } else {
            self.macro_f1()
        }
    }

    pub fn macro_f1(&self) -> f64 {
        if self.classes == 0 {
            return 0.0;
        }
        let sum: f64 = (0..self.classes)
            .map(|k| {
                let (tp, fp, fn_) = self.one_vs_rest(k);
                f1_from_counts(tp, fp, fn_)
            })
            .sum();
        sum / self.classes as f64
    }

    /// CSV with columns `truth`, `pred_0`, …, one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth");
        for p in 0..self.classes {
            s.push_str(&format!(",pred_{p}"));
        }
        s.push('\n');
        for t in 0..self.classes {
            s.push_str(&t.to_string());
            for p in 0..self.classes {
                s.push_str(&format!(",{}", self.get(t, p)));
            }
            s.push('\n');
        }
        s
    }
}

/// `2PR/(P+R)`, or 0 when precision and recall are both 0 or undefined.
pub fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if tp == 0 || denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

fn check_classes(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape { op: "auroc", lhs: vec![scores.len()], rhs: vec![labels.len()] });
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric(format!("score {bad} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!("AUROC needs both classes, got {pos} positive and {neg} negative")));
    }
    Ok((pos, neg))
}

/// Indices ordered by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`, counted exactly in integers.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_classes(scores, labels)?;
    let idx = descending(scores);
    // Twice the number of (positive, negative) pairs the positive wins, ties counting once.
    let mut twice_wins: u128 = 0;
    let mut neg_below = neg;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u64, 0u64);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        neg_below -= gn;
        twice_wins += gp as u128 * (2 * neg_below as u128 + gn as u128);
        i = j;
    }
    Ok(twice_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

/// ROC staircase from `(0, 0)` to `(1, 1)`: one `(fpr, tpr)` point per
/// distinct score threshold, thresholds descending.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check_classes(scores, labels)?;
    let idx = descending(scores);
    let mut out = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        out.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        i = j;
    }
    Ok(out)
}

/// Trapezoidal area under a polyline given as `(x, y)` points.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

pub fn roc_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (x, y) in points {
        s.push_str(&format!("{x},{y}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        assert_eq!(f1_from_counts(1, 1, 1), 0.5);
        assert_eq!(f1_from_counts(0, 0, 5), 0.0);
        assert_eq!(f1_from_counts(0, 0, 0), 0.0);
        assert_eq!(ConfusionMatrix::binary(1, 1, 1, 7).f1(), 0.5);
    }

    #[test]
    fn binary_cells() {
        let cm = ConfusionMatrix::binary(3, 2, 1, 4);
        assert_eq!(cm.one_vs_rest(1), (3, 2, 1));
        assert_eq!(cm.total(), 10);
        assert_eq!(cm.accuracy(), 0.7);
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn roc_staircase() {
        let pts = roc_points(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(pts.first(), Some(&(0.0, 0.0)));
        assert_eq!(pts.last(), Some(&(1.0, 1.0)));
        assert!(pts.contains(&(0.0, 1.0)));
        assert_eq!(trapezoid(&pts), 1.0);
    }

    #[test]
    fn multiclass_macro_f1() {
        let mut cm = ConfusionMatrix::new(3);
        for (t, p) in [(0, 0), (1, 1), (2, 2), (2, 1)] {
            cm.add(t, p);
        }
        let expected = (1.0 + 2.0 / 3.0 + 2.0 / 3.0) / 3.0;
        assert!((cm.f1() - expected).abs() < 1e-12);
        assert_eq!(cm.to_csv(), "truth,pred_0,pred_1,pred_2\n0,1,0,0\n1,0,1,0\n2,0,1,1\n");
    }
}
