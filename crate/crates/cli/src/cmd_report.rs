//! `evaluate`, `benchmark` and `predict`.

use std::path::{Path, PathBuf};

use hivesig::audio_io::load_wav;
use hivesig::autograd::Tensor;
use hivesig::evalmetrics::{benchmark, confusion_matrix, report, write_confusion_png, REPORT_SCHEMA_VERSION};
use hivesig::network::{predict, Model, Network};
use serde::Serialize;

use crate::cmd_data::{ensure_dir, split_clip};
use crate::cmd_train::load_checkpoint;
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{load_dataset, LoadedData};

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

fn load_matching(cfg: &PipelineConfig, model: &Model, manifest: &Path) -> CliResult<LoadedData> {
    let data = load_dataset(cfg, manifest)?;
    if data.class_names.len() != model.spec.n_classes {
        return Err(CliError::Data(format!(
            "model emits {} classes but the manifest has {}",
            model.spec.n_classes,
            data.class_names.len()
        )));
    }
    if data.dataset.input_shape != model.spec.input_shape {
        return Err(CliError::Data(format!(
            "model expects input {:?}, config produces {:?}",
            model.spec.input_shape, data.dataset.input_shape
        )));
    }
    Ok(data)
}

/// Classification report (JSON + CSV) and confusion heatmap.
pub fn evaluate_cmd(cfg: &PipelineConfig, model_path: &Path, manifest: &Path, name: Option<String>) -> CliResult<PathBuf> {
    let model = load_checkpoint(model_path)?;
    let data = load_matching(cfg, &model, manifest)?;
    let preds = predict(&model, &data.dataset)?;
    let cm = confusion_matrix(&preds, &data.dataset.labels, data.class_names.len())?.with_names(data.class_names);
    let rep = report(&cm)?;
    for w in &rep.warnings {
        log::warn!("{w}");
    }

    let name = name.unwrap_or_else(|| stem(model_path));
    ensure_dir(&cfg.output_dir)?;
    let json_path = cfg.output_dir.join(format!("{name}.report.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&rep).expect("report serializes"))
        .map_err(|e| CliError::io(&json_path, e))?;
    let csv_path = cfg.output_dir.join(format!("{name}.report.csv"));
    std::fs::write(&csv_path, rep.to_csv()).map_err(|e| CliError::io(&csv_path, e))?;
    write_confusion_png(&cm, cfg.output_dir.join(format!("{name}.confusion.png")))?;
    print!("{}", rep.to_csv());
    println!("report {}", json_path.display());
    Ok(json_path)
}

pub fn benchmark_cmd(
    cfg: &PipelineConfig,
    model_path: &Path,
    manifest: &Path,
    runs: Option<usize>,
    name: Option<String>,
) -> CliResult<PathBuf> {
    let runs = runs.unwrap_or(cfg.benchmark.runs);
    if runs < 3 {
        return Err(CliError::Usage(format!("--runs must be at least 3, got {runs}")));
    }
    let model = load_checkpoint(model_path)?;
    let data = load_matching(cfg, &model, manifest)?;
    let name = name.unwrap_or_else(|| stem(model_path));
    let mut rep = benchmark(&model, &name, &data.dataset, runs)?;
    rep.file_bytes = std::fs::metadata(model_path).map_err(|e| CliError::io(model_path, e))?.len() as usize;
    ensure_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join(format!("{name}.bench.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&rep).expect("bench report serializes"))
        .map_err(|e| CliError::io(&path, e))?;
    println!(
        "{name}: accuracy {:.4}, {} params, {} B, median {:.4} s over {} runs of {} samples",
        rep.accuracy, rep.params, rep.size_bytes, rep.inference_seconds, rep.runs, rep.samples
    );
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct Prediction {
    pub schema_version: u32,
    pub wav: String,
    pub top_class: String,
    pub class_names: Vec<String>,
    pub probabilities: Vec<f64>,
    pub segments: usize,
}

/// Featurizes one WAV exactly like `featurize`, averages class
/// probabilities over its segments.
pub fn predict_cmd(cfg: &PipelineConfig, model_path: &Path, wav: &Path, json: bool) -> CliResult<Prediction> {
    let model = load_checkpoint(model_path)?;
    if !wav.is_file() {
        return Err(CliError::Input(format!("{} does not exist", wav.display())));
    }
    let clip = load_wav(wav)?;
    let mut segments = split_clip(&clip, cfg.segment_seconds);
    if segments.is_empty() {
        // shorter than one segment: classify the whole clip rather than nothing
        segments.push(clip);
    }
    let feat = cfg.features();
    let shape = feat.input_shape();
    if shape != model.spec.input_shape {
        return Err(CliError::Data(format!(
            "model expects input {:?}, config produces {shape:?}",
            model.spec.input_shape
        )));
    }
    let mut data = Vec::new();
    for seg in &segments {
        data.extend(feat.compute(seg)?.raster(cfg.raster_size, cfg.channels)?.data);
    }
    let [c, h, w] = shape;
    let x = Tensor::new(vec![segments.len(), c, h, w], data).map_err(hivesig::network::NetworkError::from)?;
    let probs = Network::<f32>::from_model(&model)?.predict_proba(&x)?;
    let k = model.spec.n_classes;
    let mut mean = vec![0.0f64; k];
    for row in probs.data().chunks(k) {
        for (m, &p) in mean.iter_mut().zip(row) {
            *m += f64::from(p) / segments.len() as f64;
        }
    }
    let total: f64 = mean.iter().sum();
    mean.iter_mut().for_each(|p| *p /= total);
    let top = (0..k).max_by(|&a, &b| mean[a].total_cmp(&mean[b])).unwrap_or(0);
    let pred = Prediction {
        schema_version: REPORT_SCHEMA_VERSION,
        wav: wav.display().to_string(),
        top_class: model.class_names[top].clone(),
        class_names: model.class_names.clone(),
        probabilities: mean,
        segments: segments.len(),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&pred).expect("prediction serializes"));
    } else {
        println!("{}", pred.top_class);
        for (n, p) in pred.class_names.iter().zip(&pred.probabilities) {
            println!("{n}\t{p:.6}");
        }
    }
    Ok(pred)
}
