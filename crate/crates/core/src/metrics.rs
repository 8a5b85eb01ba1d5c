//! Confusion matrix and the usual land-cover scores.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::Serialize;

use crate::cube::LabelMap;
use crate::error::{Error, Result};
use crate::softlabel::ClassMap;

/// `C x C` counts, rows ground truth, columns prediction; class `c` sits at index `c - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        if counts.nrows() != counts.ncols() || counts.nrows() == 0 {
            return Err(Error::invalid(format!(
                "confusion matrix must be square and non-empty, got {:?}",
                counts.dim()
            )));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn class_count(&self) -> usize {
        self.counts.nrows()
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }
}

/// Tallies every pixel with a ground-truth label of at least 1.
pub fn confusion(gt: &LabelMap, pred: &ClassMap) -> Result<ConfusionMatrix> {
    if gt.height() != pred.height || gt.width() != pred.width {
        return Err(Error::invalid(format!(
            "ground truth is {}x{}, prediction is {}x{}",
            gt.height(),
            gt.width(),
            pred.height,
            pred.width
        )));
    }
    let c = gt.class_count();
    let mut counts = Array2::zeros((c, c));
    for (&g, &p) in gt.labels().iter().zip(&pred.classes) {
        if g == 0 {
            continue;
        }
        if p == 0 || p as usize > c {
            return Err(Error::invalid(format!("predicted class {p} outside 1..={c}")));
        }
        counts[(g as usize - 1, p as usize - 1)] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scores {
    pub oa: f64,
    pub aa: f64,
    pub cf1: f64,
    pub kappa: f64,
    pub miou: f64,
    /// `None` for classes absent from both ground truth and prediction.
    pub per_class_f1: Vec<Option<f64>>,
    pub per_class_iou: Vec<Option<f64>>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

pub fn scores(cm: &ConfusionMatrix) -> Result<Scores> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Degenerate("confusion matrix is empty".into()));
    }
    let n = total as f64;
    let counts = cm.counts().mapv(|v| v as f64);
    let c = cm.class_count();
    let row: Vec<f64> = (0..c).map(|i| counts.row(i).sum()).collect();
    let col: Vec<f64> = (0..c).map(|j| counts.column(j).sum()).collect();
    let tp: Vec<f64> = (0..c).map(|i| counts[(i, i)]).collect();

    let oa = tp.iter().sum::<f64>() / n;
    let aa = mean((0..c).filter(|&i| row[i] > 0.0).map(|i| tp[i] / row[i]));

    let present = |i: usize| row[i] > 0.0 || col[i] > 0.0;
    let per_class_f1: Vec<Option<f64>> = (0..c)
        .map(|i| {
            present(i).then(|| {
                let precision = if col[i] > 0.0 { tp[i] / col[i] } else { 0.0 };
                let recall = if row[i] > 0.0 { tp[i] / row[i] } else { 0.0 };
                if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                }
            })
        })
        .collect();
    let per_class_iou: Vec<Option<f64>> =
        (0..c).map(|i| present(i).then(|| tp[i] / (row[i] + col[i] - tp[i]))).collect();

    let pe = row.iter().zip(&col).map(|(r, c)| r * c).sum::<f64>() / (n * n);
    // pe == 1 only when truth and prediction are the same single class.
    let kappa = if pe >= 1.0 { 1.0 } else { (oa - pe) / (1.0 - pe) };

    Ok(Scores {
        oa,
        aa,
        cf1: mean(per_class_f1.iter().flatten().copied()),
        kappa,
        miou: mean(per_class_iou.iter().flatten().copied()),
        per_class_f1,
        per_class_iou,
    })
}

/// Keys of the metric report, in output order; per-class entries follow as
/// `f1_<class>` and `iou_<class>` for every class present.
pub const REPORT_KEYS: [&str; 7] = ["oa", "aa", "cf1", "kappa", "miou", "classes", "pixels"];

impl Scores {
    fn entries(&self, cm: &ConfusionMatrix) -> Vec<(String, serde_json::Value)> {
        let mut out: Vec<(String, serde_json::Value)> = vec![
            ("oa".into(), self.oa.into()),
            ("aa".into(), self.aa.into()),
            ("cf1".into(), self.cf1.into()),
            ("kappa".into(), self.kappa.into()),
            ("miou".into(), self.miou.into()),
            ("classes".into(), cm.class_count().into()),
            ("pixels".into(), cm.total().into()),
        ];
        for (i, f) in self.per_class_f1.iter().enumerate() {
            if let Some(f) = f {
                out.push((format!("f1_{}", i + 1), (*f).into()));
            }
        }
        for (i, v) in self.per_class_iou.iter().enumerate() {
            if let Some(v) = v {
                out.push((format!("iou_{}", i + 1), (*v).into()));
            }
        }
        out
    }

    /// One `key = value` line per entry.
    pub fn to_kv_text(&self, cm: &ConfusionMatrix) -> String {
        let mut s = String::new();
        for (k, v) in self.entries(cm) {
            writeln!(s, "{k} = {v}").expect("writing to a String");
        }
        s
    }

    /// JSON object with the same entries in the same order, plus the raw confusion matrix.
    pub fn to_json(&self, cm: &ConfusionMatrix) -> String {
        let mut s = String::from("{\n");
        for (k, v) in self.entries(cm) {
            writeln!(s, "  \"{k}\": {v},").expect("writing to a String");
        }
        let rows: Vec<Vec<u64>> = cm.counts().rows().into_iter().map(|r| r.to_vec()).collect();
        writeln!(s, "  \"confusion\": {}", serde_json::to_string(&rows).expect("plain integers"))
            .expect("writing to a String");
        s.push_str("}\n");
        s
    }
}
