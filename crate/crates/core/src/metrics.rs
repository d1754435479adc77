//! Accuracy, per-class and macro precision/recall/F1, one-vs-rest ROC and
//! AUC, and averaging of reports across seeds.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for a score row to count as a probability distribution.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;
/// Number of fpr grid points used when averaging ROC curves.
pub const ROC_GRID_POINTS: usize = 101;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("{scores} score rows but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score row {row} has {actual} entries, expected {expected}")]
    RaggedRow { row: usize, expected: usize, actual: usize },
    #[error("label {label} at row {row} is outside 0..{n_classes}")]
    LabelOutOfRange { row: usize, label: usize, n_classes: usize },
    #[error("score row {0} contains a non-finite value")]
    NonFinite(usize),
    #[error("reports have different class counts ({0} and {1})")]
    MixedClasses(usize, usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

impl RocCurve {
    /// Trapezoid-rule area under the curve.
    pub fn auc(&self) -> f64 {
        self.fpr
            .windows(2)
            .zip(self.tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0)
            .sum()
    }

    /// tpr at `x`, taking the highest point where the curve is vertical.
    fn tpr_at(&self, x: f64) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.fpr.len() {
            let f = self.fpr[i];
            if f == x {
                best = best.max(self.tpr[i]);
            } else if i > 0 && self.fpr[i - 1] < x && x < f {
                let t = (x - self.fpr[i - 1]) / (f - self.fpr[i - 1]);
                best = best.max(self.tpr[i - 1] + t * (self.tpr[i] - self.tpr[i - 1]));
            }
        }
        best
    }

    /// Resamples onto `n` evenly spaced fpr values; the end points stay
    /// pinned at (0, 0) and (1, 1).
    pub fn regrid(&self, n: usize) -> RocCurve {
        let fpr: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let tpr = fpr
            .iter()
            .enumerate()
            .map(|(i, &x)| match i {
                0 => 0.0,
                _ if i == n - 1 => 1.0,
                _ => self.tpr_at(x),
            })
            .collect();
        RocCurve { fpr, tpr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_classes: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub accuracy: f64,
    /// Samples per class.
    pub support: Vec<usize>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// Classes never predicted; their precision is reported as 0.
    pub precision_undefined: Vec<bool>,
    /// Classes absent from the labels; their recall is reported as 0.
    pub recall_undefined: Vec<bool>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub roc: Vec<RocCurve>,
    /// Per-class AUC; 0.5 (with a diagonal curve) when a class has no
    /// positives or no negatives.
    pub auc: Vec<f64>,
    pub macro_auc: f64,
    /// Rows whose scores do not sum to 1 within tolerance.
    pub unnormalized_rows: usize,
    /// Number of reports averaged into this one.
    pub n_reports: usize,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// One-vs-rest ROC for `positive`, sweeping thresholds over the unique
/// score values from high to low. Tied scores move the curve diagonally,
/// so the trapezoid area equals the midrank Mann-Whitney statistic.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> RocCurve {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return RocCurve {
            fpr: vec![0.0, 1.0],
            tpr: vec![0.0, 1.0],
        };
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        fpr.push(fp as f64 / n_neg as f64);
        tpr.push(tp as f64 / n_pos as f64);
    }
    RocCurve { fpr, tpr }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Scores one set of predictions. `scores[i]` is the class-probability row
/// of sample `i`.
pub fn evaluate(scores: &[Vec<f64>], labels: &[usize], seed: u64) -> Result<EvalReport, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = scores[0].len();
    let mut unnormalized_rows = 0;
    for (row, (s, &y)) in scores.iter().zip(labels).enumerate() {
        if s.len() != k {
            return Err(MetricsError::RaggedRow {
                row,
                expected: k,
                actual: s.len(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite(row));
        }
        if y >= k {
            return Err(MetricsError::LabelOutOfRange { row, label: y, n_classes: k });
        }
        if (s.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOLERANCE {
            unnormalized_rows += 1;
        }
    }

    let n = labels.len();
    let preds: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
    let mut tp = vec![0usize; k];
    let mut predicted = vec![0usize; k];
    let mut support = vec![0usize; k];
    for (&p, &y) in preds.iter().zip(labels) {
        predicted[p] += 1;
        support[y] += 1;
        if p == y {
            tp[p] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision: Vec<f64> = (0..k).map(|c| ratio(tp[c], predicted[c])).collect();
    let recall: Vec<f64> = (0..k).map(|c| ratio(tp[c], support[c])).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
        .collect();

    let mut roc = Vec::with_capacity(k);
    let mut auc = Vec::with_capacity(k);
    let mut column = vec![0.0; n];
    let mut positive = vec![false; n];
    for c in 0..k {
        for (i, (s, &y)) in scores.iter().zip(labels).enumerate() {
            column[i] = s[c];
            positive[i] = y == c;
        }
        let curve = roc_curve(&column, &positive);
        auc.push(curve.auc());
        roc.push(curve);
    }

    Ok(EvalReport {
        n_classes: k,
        n_samples: n,
        seed,
        accuracy: correct as f64 / n as f64,
        precision_undefined: predicted.iter().map(|&p| p == 0).collect(),
        recall_undefined: support.iter().map(|&s| s == 0).collect(),
        support,
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        precision,
        recall,
        f1,
        macro_auc: mean(&auc),
        roc,
        auc,
        unnormalized_rows,
        n_reports: 1,
    })
}

/// Averages reports: scalars and per-class vectors by arithmetic mean, ROC
/// curves vertically on a fixed fpr grid. Counts are summed, flags are
/// OR-ed, and the seed is the first report's.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::Empty)?;
    let k = first.n_classes;
    if let Some(r) = reports.iter().find(|r| r.n_classes != k) {
        return Err(MetricsError::MixedClasses(k, r.n_classes));
    }
    let m = reports.len() as f64;
    let avg = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / m;
    let avg_vec = |f: &dyn Fn(&EvalReport) -> &Vec<f64>| -> Vec<f64> {
        (0..k).map(|c| reports.iter().map(|r| f(r)[c]).sum::<f64>() / m).collect()
    };
    let any_vec = |f: &dyn Fn(&EvalReport) -> &Vec<bool>| -> Vec<bool> {
        (0..k).map(|c| reports.iter().any(|r| f(r)[c])).collect()
    };
    let roc = (0..k)
        .map(|c| {
            let grids: Vec<RocCurve> = reports.iter().map(|r| r.roc[c].regrid(ROC_GRID_POINTS)).collect();
            let tpr = (0..ROC_GRID_POINTS)
                .map(|i| grids.iter().map(|g| g.tpr[i]).sum::<f64>() / m)
                .collect();
            RocCurve {
                fpr: grids[0].fpr.clone(),
                tpr,
            }
        })
        .collect();
    Ok(EvalReport {
        n_classes: k,
        n_samples: reports.iter().map(|r| r.n_samples).sum(),
        seed: first.seed,
        accuracy: avg(&|r| r.accuracy),
        support: (0..k).map(|c| reports.iter().map(|r| r.support[c]).sum()).collect(),
        precision: avg_vec(&|r| &r.precision),
        recall: avg_vec(&|r| &r.recall),
        f1: avg_vec(&|r| &r.f1),
        precision_undefined: any_vec(&|r| &r.precision_undefined),
        recall_undefined: any_vec(&|r| &r.recall_undefined),
        macro_precision: avg(&|r| r.macro_precision),
        macro_recall: avg(&|r| r.macro_recall),
        macro_f1: avg(&|r| r.macro_f1),
        roc,
        auc: avg_vec(&|r| &r.auc),
        macro_auc: avg(&|r| r.macro_auc),
        unnormalized_rows: reports.iter().map(|r| r.unnormalized_rows).sum(),
        n_reports: reports.iter().map(|r| r.n_reports).sum(),
    })
}

impl EvalReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    /// One row per class plus a final `macro` row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["class", "support", "precision", "recall", "f1", "auc"])?;
        for c in 0..self.n_classes {
            w.write_record([
                c.to_string(),
                self.support[c].to_string(),
                self.precision[c].to_string(),
                self.recall[c].to_string(),
                self.f1[c].to_string(),
                self.auc[c].to_string(),
            ])?;
        }
        w.write_record([
            "macro".to_string(),
            self.n_samples.to_string(),
            self.macro_precision.to_string(),
            self.macro_recall.to_string(),
            self.macro_f1.to_string(),
            self.macro_auc.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn write_roc_csv(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["class", "fpr", "tpr"])?;
        for (c, curve) in self.roc.iter().enumerate() {
            for (f, t) in curve.fpr.iter().zip(&curve.tpr) {
                w.write_record([c.to_string(), f.to_string(), t.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(labels: &[usize], k: usize) -> Vec<Vec<f64>> {
        labels
            .iter()
            .map(|&y| (0..k).map(|c| if c == y { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn perfect_scores() {
        let labels = [0, 1, 2, 1, 0, 2];
        let r = evaluate(&one_hot(&labels, 3), &labels, 0).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.f1.iter().chain(&r.auc).all(|&v| v == 1.0));
        assert_eq!((r.macro_precision, r.macro_recall, r.macro_f1), (1.0, 1.0, 1.0));
        for c in &r.roc {
            assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
            assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));
        }
    }

    #[test]
    fn all_wrong_binary() {
        let labels = [0, 1, 0, 1];
        let wrong: Vec<usize> = labels.iter().map(|y| 1 - y).collect();
        let r = evaluate(&one_hot(&wrong, 2), &labels, 0).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.auc, vec![0.0, 0.0]);
    }

    #[test]
    fn four_sample_auc() {
        // Positives score 0.9 and 0.1, negatives 0.8 and 0.3: of the four
        // positive/negative pairs, two are ordered correctly.
        let c = roc_curve(&[0.9, 0.8, 0.3, 0.1], &[true, false, false, true]);
        assert_eq!(c.auc(), 0.5);
        assert_eq!(c.fpr, vec![0.0, 0.0, 0.5, 1.0, 1.0]);
        assert_eq!(c.tpr, vec![0.0, 0.5, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn undefined_precision_is_flagged() {
        // Class 2 is present but never predicted.
        let labels = [0, 1, 2];
        let preds = [0, 1, 1];
        let r = evaluate(&one_hot(&preds, 3), &labels, 0).unwrap();
        assert_eq!(r.precision_undefined, vec![false, false, true]);
        assert_eq!(r.precision[2], 0.0);
        assert_eq!(r.recall_undefined, vec![false, false, false]);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(&[0.25, 0.5, 0.5, 0.25]), 1);
        let r = evaluate(&[vec![0.5, 0.5]], &[0], 0).unwrap();
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn unnormalized_rows_warn_but_do_not_fail() {
        let r = evaluate(&[vec![0.7, 0.7], vec![0.2, 0.8]], &[0, 1], 0).unwrap();
        assert_eq!(r.unnormalized_rows, 1);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(evaluate(&[], &[], 0), Err(MetricsError::Empty)));
        assert!(matches!(evaluate(&[vec![1.0]], &[0, 0], 0), Err(MetricsError::LengthMismatch { .. })));
        assert!(matches!(evaluate(&[vec![0.5, 0.5], vec![1.0]], &[0, 0], 0), Err(MetricsError::RaggedRow { row: 1, .. })));
        assert!(matches!(evaluate(&[vec![0.5, 0.5]], &[2], 0), Err(MetricsError::LabelOutOfRange { .. })));
    }

    #[test]
    fn aggregate_means() {
        let labels = [0, 1, 0, 1, 0];
        let a = evaluate(&one_hot(&[0, 1, 1, 0, 0], 2), &labels, 1).unwrap();
        let b = evaluate(&one_hot(&[0, 1, 0, 1, 1], 2), &labels, 2).unwrap();
        assert_eq!((a.accuracy, b.accuracy), (0.6, 0.8));
        let m = aggregate(&[a.clone(), b]).unwrap();
        assert!((m.accuracy - 0.7).abs() < 1e-15);
        assert_eq!(m.n_reports, 2);
        assert_eq!(m.roc[0].fpr.len(), ROC_GRID_POINTS);

        let single = aggregate(std::slice::from_ref(&a)).unwrap();
        assert_eq!((single.accuracy, single.macro_f1, single.auc.clone()), (a.accuracy, a.macro_f1, a.auc.clone()));
        let twice = aggregate(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(twice.macro_f1, a.macro_f1);

        let c = evaluate(&one_hot(&[0, 1, 2], 3), &[0, 1, 2], 0).unwrap();
        assert!(matches!(aggregate(&[a, c]), Err(MetricsError::MixedClasses(2, 3))));
    }

    #[test]
    fn regrid_pins_end_points() {
        let c = roc_curve(&[0.9, 0.8, 0.3, 0.1], &[true, false, false, true]);
        let g = c.regrid(ROC_GRID_POINTS);
        assert_eq!((g.tpr[0], g.tpr[100]), (0.0, 1.0));
        assert_eq!(g.tpr[50], 0.5);
        assert!(g.tpr.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn csv_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let labels = [0, 1, 1];
        let r = evaluate(&one_hot(&labels, 2), &labels, 0).unwrap();
        r.write_csv(dir.path().join("m.csv")).unwrap();
        r.write_roc_csv(dir.path().join("roc.csv")).unwrap();
        r.write_json(dir.path().join("m.json")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("macro,3,"));
        let back: EvalReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json")).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
