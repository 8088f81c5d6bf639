//! Confusion-matrix accumulation and the four evaluation metrics, with
//! per-class, macro, and weighted views for the multiclass task and
//! mean-plus-minus-std aggregation across seeds.
//!
//! Binary headline numbers treat class 1 as positive: Acc = (TP+TN)/total,
//! Pre = TP/(TP+FP), Rec = TP/(TP+FN), F1 = harmonic mean of Pre and Rec.
//! Multiclass headlines are unweighted macro means of the per-class
//! one-vs-rest values; weighted means are also computed. Zero-denominator
//! precision or recall is defined as 0 and flagged rather than left NaN.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// K x K integer counts; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn at(&self, true_label: usize, predicted: usize) -> u64 {
        self.counts[true_label * self.k + predicted]
    }

    /// Record one evaluated sample; exactly one cell is incremented.
    pub fn accumulate(&mut self, true_label: usize, predicted: usize) -> Result<()> {
        if true_label >= self.k || predicted >= self.k {
            return Err(Error::Input(format!(
                "confusion matrix: labels ({true_label}, {predicted}) out of range for {} classes",
                self.k
            )));
        }
        self.counts[true_label * self.k + predicted] += 1;
        Ok(())
    }

    /// Cellwise merge; shards evaluated in parallel combine exactly.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.k != other.k {
            return Err(Error::Input(format!(
                "confusion matrix: cannot merge {} and {} classes",
                self.k, other.k
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.at(i, i)).sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        (0..self.k).map(|j| self.at(i, j)).sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.at(i, j)).sum()
    }
}

/// One-vs-rest metrics of a single class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of true samples of this class.
    pub support: u64,
}

/// The four metrics plus per-class, macro, and weighted views.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub classes: usize,
    pub total: u64,
    pub accuracy: f64,
    /// Headline values: class-1 one-vs-rest for the binary task, macro
    /// means otherwise.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Zero-denominator conditions hit while computing, e.g.
    /// "precision[3]: no predicted samples".
    pub flags: Vec<String>,
}

/// Compute the report from an accumulated matrix.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Input("compute_metrics: empty confusion matrix".into()));
    }
    let k = cm.classes();
    let mut per_class = Vec::with_capacity(k);
    let mut flags = Vec::new();
    for i in 0..k {
        let tp = cm.at(i, i) as f64;
        let fp = cm.col_sum(i) as f64 - tp;
        let fn_ = cm.row_sum(i) as f64 - tp;
        let precision = if tp + fp > 0.0 {
            tp / (tp + fp)
        } else {
            flags.push(format!("precision[{i}]: no predicted samples"));
            0.0
        };
        let recall = if tp + fn_ > 0.0 {
            tp / (tp + fn_)
        } else {
            flags.push(format!("recall[{i}]: no true samples"));
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            flags.push(format!("f1[{i}]: precision and recall both zero"));
            0.0
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.row_sum(i),
        });
    }
    let kf = k as f64;
    let macro_precision = per_class.iter().map(|c| c.precision).sum::<f64>() / kf;
    let macro_recall = per_class.iter().map(|c| c.recall).sum::<f64>() / kf;
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / kf;
    let tf = total as f64;
    let weighted_precision = per_class
        .iter()
        .map(|c| c.precision * c.support as f64)
        .sum::<f64>()
        / tf;
    let weighted_recall = per_class
        .iter()
        .map(|c| c.recall * c.support as f64)
        .sum::<f64>()
        / tf;
    let weighted_f1 = per_class.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / tf;

    let (precision, recall, f1) = if k == 2 {
        (
            per_class[1].precision,
            per_class[1].recall,
            per_class[1].f1,
        )
    } else {
        (macro_precision, macro_recall, macro_f1)
    };

    Ok(MetricsReport {
        classes: k,
        total,
        accuracy: cm.trace() as f64 / tf,
        precision,
        recall,
        f1,
        per_class,
        macro_precision,
        macro_recall,
        macro_f1,
        weighted_precision,
        weighted_recall,
        weighted_f1,
        flags,
    })
}

impl MetricsReport {
    /// Two-column table in the results-table layout.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>14}", "Metric", "Value");
        let _ = writeln!(s, "{:<10} {:>14.2}", "Accuracy", self.accuracy * 100.0);
        let _ = writeln!(s, "{:<10} {:>14.2}", "Recall", self.recall * 100.0);
        let _ = writeln!(s, "{:<10} {:>14.2}", "Precision", self.precision * 100.0);
        let _ = writeln!(s, "{:<10} {:>14.2}", "F1 score", self.f1 * 100.0);
        if !self.flags.is_empty() {
            let _ = writeln!(s, "flags: {}", self.flags.join("; "));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let _ = writeln!(s, "accuracy,{}", self.accuracy);
        let _ = writeln!(s, "precision,{}", self.precision);
        let _ = writeln!(s, "recall,{}", self.recall);
        let _ = writeln!(s, "f1,{}", self.f1);
        let _ = writeln!(s, "macro_precision,{}", self.macro_precision);
        let _ = writeln!(s, "macro_recall,{}", self.macro_recall);
        let _ = writeln!(s, "macro_f1,{}", self.macro_f1);
        let _ = writeln!(s, "weighted_precision,{}", self.weighted_precision);
        let _ = writeln!(s, "weighted_recall,{}", self.weighted_recall);
        let _ = writeln!(s, "weighted_f1,{}", self.weighted_f1);
        for (i, c) in self.per_class.iter().enumerate() {
            let _ = writeln!(s, "class{}_precision,{}", i, c.precision);
            let _ = writeln!(s, "class{}_recall,{}", i, c.recall);
            let _ = writeln!(s, "class{}_f1,{}", i, c.f1);
            let _ = writeln!(s, "class{}_support,{}", i, c.support);
        }
        s
    }
}

/// Mean and population standard deviation of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    /// "96.00 ± 0.48" presentation, in percent.
    pub fn format_percent(&self) -> String {
        format!("{:.2} \u{b1} {:.2}", self.mean * 100.0, self.std * 100.0)
    }
}

/// Population-std aggregation (n divisor) of one metric across runs.
pub fn aggregate_values(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::Input("aggregate: no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(Aggregate {
        mean,
        std: var.sqrt(),
    })
}

/// Per-metric aggregation of seed reports.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub runs: usize,
    pub accuracy: Aggregate,
    pub recall: Aggregate,
    pub precision: Aggregate,
    pub f1: Aggregate,
}

pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::Input("aggregate_seeds: no reports".into()));
    }
    let take = |f: fn(&MetricsReport) -> f64| {
        aggregate_values(&reports.iter().map(f).collect::<Vec<_>>())
    };
    Ok(AggregateReport {
        runs: reports.len(),
        accuracy: take(|r| r.accuracy)?,
        recall: take(|r| r.recall)?,
        precision: take(|r| r.precision)?,
        f1: take(|r| r.f1)?,
    })
}

impl AggregateReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>16}", "Metric", "Value");
        let _ = writeln!(s, "{:<10} {:>16}", "Accuracy", self.accuracy.format_percent());
        let _ = writeln!(s, "{:<10} {:>16}", "Recall", self.recall.format_percent());
        let _ = writeln!(s, "{:<10} {:>16}", "Precision", self.precision.format_percent());
        let _ = writeln!(s, "{:<10} {:>16}", "F1 score", self.f1.format_percent());
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,mean,std\n");
        let _ = writeln!(s, "accuracy,{},{}", self.accuracy.mean, self.accuracy.std);
        let _ = writeln!(s, "recall,{},{}", self.recall.mean, self.recall.std);
        let _ = writeln!(s, "precision,{},{}", self.precision.mean, self.precision.std);
        let _ = writeln!(s, "f1,{},{}", self.f1.mean, self.f1.std);
        s
    }
}

/// Accuracy-per-magnification table in the comparison-table layout.
pub fn magnification_table(per_mag: &BTreeMap<u32, MetricsReport>) -> String {
    let mut s = String::from("Magnification");
    for mag in per_mag.keys() {
        let _ = write!(s, " {:>8}", format!("{mag}X"));
    }
    s.push('\n');
    s.push_str("Accuracy     ");
    for r in per_mag.values() {
        let _ = write!(s, " {:>8.2}", r.accuracy * 100.0);
    }
    s.push('\n');
    s
}

pub fn magnification_csv(per_mag: &BTreeMap<u32, MetricsReport>) -> String {
    let mut s = String::from("magnification,accuracy,precision,recall,f1,samples\n");
    for (mag, r) in per_mag {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            mag, r.accuracy, r.precision, r.recall, r.f1, r.total
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulate_increments_exactly_one_cell() {
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(0, 0).unwrap();
        assert_eq!(cm.trace(), 1);
        assert_eq!(cm.total(), 1);
        for _ in 0..9 {
            cm.accumulate(1, 0).unwrap();
        }
        assert_eq!(cm.total(), 10);
        // (true=1, pred=0) is the false-negative cell for class 1
        assert_eq!(cm.at(1, 0), 9);
    }

    #[test]
    fn accumulate_rejects_out_of_range() {
        let mut cm = ConfusionMatrix::new(2);
        assert!(matches!(cm.accumulate(2, 0), Err(Error::Input(_))));
    }

    #[test]
    fn perfect_diagonal_scores_ones() {
        let mut cm = ConfusionMatrix::new(3);
        for i in 0..3 {
            for _ in 0..5 {
                cm.accumulate(i, i).unwrap();
            }
        }
        let r = compute_metrics(&cm).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.f1, 1.0);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn binary_hand_computed_case() {
        // TP = 95, TN = 97, FP = 3, FN = 5 with class 1 positive
        let mut cm = ConfusionMatrix::new(2);
        for _ in 0..95 {
            cm.accumulate(1, 1).unwrap();
        }
        for _ in 0..97 {
            cm.accumulate(0, 0).unwrap();
        }
        for _ in 0..3 {
            cm.accumulate(0, 1).unwrap();
        }
        for _ in 0..5 {
            cm.accumulate(1, 0).unwrap();
        }
        let r = compute_metrics(&cm).unwrap();
        assert!((r.accuracy - 0.96).abs() < 1e-12);
        assert!((r.precision - 95.0 / 98.0).abs() < 1e-12);
        assert!((r.recall - 0.95).abs() < 1e-12);
        let want_f1 = 2.0 * (95.0 / 98.0) * 0.95 / (95.0 / 98.0 + 0.95);
        assert!((r.f1 - want_f1).abs() < 1e-12);
        assert!((r.f1 - 0.9596).abs() < 1e-4);
    }

    #[test]
    fn degenerate_single_class_predictions() {
        // balanced binary set, everything predicted class 1
        let mut cm = ConfusionMatrix::new(2);
        for _ in 0..50 {
            cm.accumulate(0, 1).unwrap();
            cm.accumulate(1, 1).unwrap();
        }
        let r = compute_metrics(&cm).unwrap();
        assert!((r.accuracy - 0.5).abs() < 1e-12);
        assert!((r.recall - 1.0).abs() < 1e-12);
        assert!((r.precision - 0.5).abs() < 1e-12);
        // class 0 was never predicted: flagged, not NaN
        assert!(r.per_class[0].precision == 0.0);
        assert!(r.flags.iter().any(|f| f.contains("precision[0]")));
    }

    #[test]
    fn empty_matrix_is_input_error() {
        assert!(compute_metrics(&ConfusionMatrix::new(2)).is_err());
    }

    #[test]
    fn accuracy_equals_trace_over_total() {
        let mut cm = ConfusionMatrix::new(4);
        let mut rng = crate::rng::RngState::new(3);
        for _ in 0..200 {
            let t = (rng.next_u64() % 4) as usize;
            let p = (rng.next_u64() % 4) as usize;
            cm.accumulate(t, p).unwrap();
        }
        let r = compute_metrics(&cm).unwrap();
        assert_eq!(r.accuracy, cm.trace() as f64 / cm.total() as f64);
    }

    #[test]
    fn macro_f1_invariant_under_relabeling() {
        let mut rng = crate::rng::RngState::new(5);
        let mut cm = ConfusionMatrix::new(3);
        let mut pairs = Vec::new();
        for _ in 0..300 {
            let t = (rng.next_u64() % 3) as usize;
            let p = (rng.next_u64() % 3) as usize;
            cm.accumulate(t, p).unwrap();
            pairs.push((t, p));
        }
        let perm = [2usize, 0, 1];
        let mut cm2 = ConfusionMatrix::new(3);
        for (t, p) in pairs {
            cm2.accumulate(perm[t], perm[p]).unwrap();
        }
        let a = compute_metrics(&cm).unwrap();
        let b = compute_metrics(&cm2).unwrap();
        assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
    }

    #[test]
    fn binary_headline_equals_k2_macro_path_class1() {
        let mut cm = ConfusionMatrix::new(2);
        let mut rng = crate::rng::RngState::new(7);
        for _ in 0..100 {
            cm.accumulate((rng.next_u64() % 2) as usize, (rng.next_u64() % 2) as usize)
                .unwrap();
        }
        let r = compute_metrics(&cm).unwrap();
        assert_eq!(r.precision, r.per_class[1].precision);
        assert_eq!(r.recall, r.per_class[1].recall);
        assert_eq!(r.f1, r.per_class[1].f1);
    }

    #[test]
    fn aggregate_hand_cases() {
        let single = aggregate_values(&[0.9]).unwrap();
        assert_eq!(single.mean, 0.9);
        assert_eq!(single.std, 0.0);

        let two = aggregate_values(&[0.9, 1.0]).unwrap();
        assert!((two.mean - 0.95).abs() < 1e-12);
        assert!((two.std - 0.05).abs() < 1e-12);
    }

    #[test]
    fn aggregate_formatting_matches_presentation() {
        let a = Aggregate {
            mean: 0.96,
            std: 0.0048,
        };
        assert_eq!(a.format_percent(), "96.00 \u{b1} 0.48");
    }
}
