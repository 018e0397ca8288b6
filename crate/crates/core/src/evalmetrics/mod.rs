//! Classification metrics and the size/latency benchmark harness.

mod bench;
mod heatmap;

use serde::{Deserialize, Serialize};

pub use bench::{benchmark, median, BenchReport};
pub use heatmap::write_confusion_png;

use crate::network::NetworkError;

/// Version tag written into every exported report.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{preds} predictions but {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("class id {id} outside 0..{k}")]
    OutOfRangeClass { id: usize, k: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("benchmark needs at least 3 runs, got {0}")]
    InvalidRuns(usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let class_names = (0..counts.len()).map(|i| format!("class{i}")).collect();
        Self { counts, class_names }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.counts.len() {
            self.class_names = names;
        }
        self
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion_matrix(preds: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), labels: labels.len() });
    }
    let mut counts = vec![vec![0u64; k]; k];
    for (&p, &t) in preds.iter().zip(labels) {
        if let Some(&id) = [p, t].iter().find(|&&id| id >= k) {
            return Err(MetricsError::OutOfRangeClass { id, k });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix::from_counts(counts))
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    match cm.total() {
        0 => Err(MetricsError::EmptyMatrix),
        n => Ok(ratio(cm.trace(), n)),
    }
}

/// One-vs-rest `TP / (TP + ½(FP + FN))`, 0 when undefined.
pub fn f1_per_class(cm: &ConfusionMatrix) -> Result<Vec<f64>, MetricsError> {
    if cm.total() == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    Ok((0..cm.k())
        .map(|c| {
            let tp = cm.counts[c][c];
            let fp = cm.predicted(c) - tp;
            let fn_ = cm.support(c) - tp;
            let den = tp as f64 + 0.5 * (fp + fn_) as f64;
            if den == 0.0 {
                0.0
            } else {
                tp as f64 / den
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub schema_version: u32,
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
    pub confusion: ConfusionMatrix,
    pub warnings: Vec<String>,
}

pub fn report(cm: &ConfusionMatrix) -> Result<ClassificationReport, MetricsError> {
    let acc = accuracy(cm)?;
    let f1 = f1_per_class(cm)?;
    let total = cm.total();
    let mut warnings = Vec::new();
    let classes: Vec<ClassMetrics> = (0..cm.k())
        .map(|c| {
            let tp = cm.counts[c][c];
            let (support, predicted) = (cm.support(c), cm.predicted(c));
            if support == 0 {
                warnings.push(format!("class {} has no samples; recall and F1 set to 0", cm.class_names[c]));
            } else if predicted == 0 {
                warnings.push(format!("class {} was never predicted; precision set to 0", cm.class_names[c]));
            }
            ClassMetrics {
                name: cm.class_names[c].clone(),
                precision: ratio(tp, predicted),
                recall: ratio(tp, support),
                f1: f1[c],
                support,
            }
        })
        .collect();
    let k = classes.len() as f64;
    let macro_avg = Averages {
        precision: classes.iter().map(|c| c.precision).sum::<f64>() / k,
        recall: classes.iter().map(|c| c.recall).sum::<f64>() / k,
        f1: classes.iter().map(|c| c.f1).sum::<f64>() / k,
    };
    let w = |f: fn(&ClassMetrics) -> f64| classes.iter().map(|c| c.support as f64 * f(c)).sum::<f64>() / total as f64;
    let weighted_avg = Averages { precision: w(|c| c.precision), recall: w(|c| c.recall), f1: w(|c| c.f1) };
    Ok(ClassificationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        classes,
        accuracy: acc,
        macro_avg,
        weighted_avg,
        total,
        confusion: cm.clone(),
        warnings,
    })
}

impl ClassificationReport {
    /// `class,precision,recall,f1,support` rows plus accuracy and averages.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,precision,recall,f1,support\n");
        for c in &self.classes {
            s.push_str(&format!("{},{:.6},{:.6},{:.6},{}\n", c.name, c.precision, c.recall, c.f1, c.support));
        }
        s.push_str(&format!("accuracy,,,{:.6},{}\n", self.accuracy, self.total));
        for (name, a) in [("macro_avg", self.macro_avg), ("weighted_avg", self.weighted_avg)] {
            s.push_str(&format!("{name},{:.6},{:.6},{:.6},{}\n", a.precision, a.recall, a.f1, self.total));
        }
        s
    }
}
