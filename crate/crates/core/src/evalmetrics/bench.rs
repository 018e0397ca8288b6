use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autograd::argmax_rows;
use crate::compress::size_report;
use crate::network::{to_bytes, Dataset, Model, Network, NetworkError};

use super::{MetricsError, REPORT_SCHEMA_VERSION};

const BENCH_BATCH: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub model_name: String,
    pub accuracy: f64,
    /// Learnable-parameter storage (see `size_report`).
    pub size_bytes: usize,
    /// Serialized checkpoint length.
    pub file_bytes: usize,
    pub params: usize,
    /// Median wall-clock seconds of one full forward pass over the data.
    pub inference_seconds: f64,
    pub timings: Vec<f64>,
    pub runs: usize,
    pub samples: usize,
    pub threads: usize,
    pub os: String,
    pub arch: String,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `runs` forward passes over the whole dataset (batches of 32, model
/// already built, features precomputed) and reports the median.
pub fn benchmark(model: &Model, name: &str, data: &Dataset, runs: usize) -> Result<BenchReport, MetricsError> {
    if runs < 3 {
        return Err(MetricsError::InvalidRuns(runs));
    }
    if data.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let net = Network::<f32>::from_model(model)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let batches: Vec<_> = idx.chunks(BENCH_BATCH).map(|c| data.batch(c)).collect();
    let mut timings = Vec::with_capacity(runs);
    let mut preds = Vec::new();
    for run in 0..runs {
        let start = Instant::now();
        let outs = batches.iter().map(|b| net.infer(b)).collect::<Result<Vec<_>, NetworkError>>()?;
        timings.push(start.elapsed().as_secs_f64().max(1e-9));
        if run == 0 {
            for o in &outs {
                preds.extend(argmax_rows(o).map_err(NetworkError::from)?);
            }
        }
    }
    let correct = preds.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model_name: name.to_string(),
        accuracy: correct as f64 / data.len() as f64,
        size_bytes: size_report(model).param_bytes,
        file_bytes: to_bytes(model).len(),
        params: model.count_params()?,
        inference_seconds: median(&timings),
        timings,
        runs,
        samples: data.len(),
        threads: 1,
        os: std::env::consts::OS.to_string(),
        arch: std::env::consts::ARCH.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_student, ArchConfig};

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn report_consistency() {
        let cfg = ArchConfig { widths: vec![4, 4], input_size: 8, ..ArchConfig::student() };
        let m = Model::init(build_student(&cfg).unwrap(), 0).unwrap();
        let data = Dataset::new([3, 8, 8], vec![vec![0.5; 192]; 5], vec![0, 1, 2, 3, 0], 4).unwrap();
        let r = benchmark(&m, "tiny", &data, 5).unwrap();
        assert_eq!(r.timings.len(), 5);
        assert_eq!(r.params, m.count_params().unwrap());
        assert!(r.inference_seconds > 0.0);
        assert!(matches!(benchmark(&m, "tiny", &data, 2), Err(MetricsError::InvalidRuns(2))));
        let empty = Dataset::new([3, 8, 8], vec![], vec![], 4).unwrap();
        assert!(matches!(benchmark(&m, "tiny", &empty, 3), Err(MetricsError::EmptyDataset)));
    }
}
