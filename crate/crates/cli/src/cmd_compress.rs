//! `compress`: the staged neuron-prune → layer-prune → distill → quantize
//! sequence, one checkpoint and one stage row per requested step.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hivesig::autograd::Tensor;
use hivesig::compress::{
    channel_preserving_convs, distill, prunable_layers, prune_layers, prune_neurons_in, quantize_head,
    size_report, PruneReport, QuantizeReport, BYTES_PER_MB,
};
use hivesig::evalmetrics::{benchmark, REPORT_SCHEMA_VERSION};
use hivesig::network::{build_student, fine_tune, predict, stratified_split, Dataset, Model, Split};
use log::{info, warn};
use serde::Serialize;

use crate::cmd_train::{load_checkpoint, provenance, save_checkpoint, write_history};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::load_dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    PruneNeurons,
    PruneLayers,
    Distill,
    Quantize,
}

impl Step {
    pub const ALL: [Step; 4] = [Step::PruneNeurons, Step::PruneLayers, Step::Distill, Step::Quantize];

    pub fn name(self) -> &'static str {
        match self {
            Step::PruneNeurons => "prune_neurons",
            Step::PruneLayers => "prune_layers",
            Step::Distill => "distill",
            Step::Quantize => "quantize",
        }
    }
}

/// Parses a comma-separated step list. Unknown names are usage errors;
/// repeated or out-of-sequence steps are ordering errors.
pub fn parse_steps(list: &str) -> CliResult<Vec<Step>> {
    let mut steps = Vec::new();
    for raw in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let step = Step::ALL.into_iter().find(|s| s.name() == raw).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown compression step '{raw}' (expected some of prune_neurons,prune_layers,distill,quantize)"
            ))
        })?;
        if let Some(&prev) = steps.last() {
            if step <= prev {
                return Err(CliError::Order(format!(
                    "step '{}' cannot follow '{}'; steps run in the order prune_neurons, prune_layers, distill, quantize",
                    step.name(),
                    prev.name()
                )));
            }
        }
        steps.push(step);
    }
    if steps.is_empty() {
        return Err(CliError::Usage("no compression steps given".into()));
    }
    Ok(steps)
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRow {
    pub stage: String,
    pub checkpoint: String,
    pub accuracy: Option<f64>,
    pub size_bytes: usize,
    pub file_bytes: usize,
    pub size_mb: f64,
    pub params: usize,
    /// Median seconds for one forward pass over the validation split.
    pub latency_s: Option<f64>,
}

#[derive(Debug, Default, Serialize)]
struct Details {
    prune: Vec<(String, PruneReport)>,
    quantize: Option<QuantizeReport>,
    fine_tune_epochs: Vec<(String, usize)>,
}

/// Timing-free summary written next to the stages CSV.
#[derive(Debug, Serialize)]
struct CompressSummary<'a> {
    schema_version: u32,
    input: String,
    steps: Vec<&'static str>,
    baseline_accuracy: Option<f64>,
    baseline_size_bytes: usize,
    baseline_params: usize,
    stages: Vec<StageSummary<'a>>,
    details: Details,
}

#[derive(Debug, Serialize)]
struct StageSummary<'a> {
    stage: &'a str,
    checkpoint: &'a str,
    accuracy: Option<f64>,
    size_bytes: usize,
    params: usize,
}

struct Eval<'a> {
    data: &'a Dataset,
    split: &'a Split,
    val: Dataset,
}

fn accuracy(model: &Model, val: &Dataset) -> CliResult<f64> {
    let p = predict(model, val)?;
    Ok(p.iter().zip(&val.labels).filter(|(a, b)| a == b).count() as f64 / val.len() as f64)
}

fn stage_row(model: &Model, stage: &str, ckpt: &Path, eval: Option<&Eval>, runs: usize) -> CliResult<StageRow> {
    let size = size_report(model);
    let file_bytes = std::fs::metadata(ckpt).map_err(|e| CliError::io(ckpt, e))?.len() as usize;
    let (accuracy, latency_s) = match eval {
        Some(ev) => (Some(accuracy(model, &ev.val)?), Some(benchmark(model, stage, &ev.val, runs)?.inference_seconds)),
        None => (None, None),
    };
    Ok(StageRow {
        stage: stage.to_string(),
        checkpoint: ckpt.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        accuracy,
        size_bytes: size.param_bytes,
        file_bytes,
        size_mb: size.param_bytes as f64 / BYTES_PER_MB,
        params: model.count_params()?,
        latency_s,
    })
}

fn maybe_fine_tune(cfg: &PipelineConfig, model: Model, eval: Option<&Eval>, step: Step, details: &mut Details) -> CliResult<Model> {
    let epochs = cfg.prune.fine_tune_epochs;
    match eval {
        Some(ev) if epochs > 0 => {
            let tcfg = hivesig::network::TrainingConfig { max_epochs: epochs, ..cfg.training() };
            let (tuned, hist) = fine_tune(&model, ev.data, &tcfg)?;
            details.fine_tune_epochs.push((step.name().to_string(), hist.records.len()));
            Ok(tuned.with_class_names(model.class_names.clone()))
        }
        None if epochs > 0 => {
            warn!("{}: no --manifest given, skipping fine-tuning", step.name());
            Ok(model)
        }
        _ => Ok(model),
    }
}

fn calibration(model: &Model, eval: Option<&Eval>, n: usize) -> Tensor<f32> {
    match eval {
        Some(ev) => {
            let take = n.max(1).min(ev.split.train.len());
            ev.data.batch(&ev.split.train[..take])
        }
        None => {
            // no data: measure drift on one all-zero input
            let [c, h, w] = model.spec.input_shape;
            Tensor::new(vec![1, c, h, w], vec![0.0; c * h * w]).expect("shape matches data length")
        }
    }
}

pub fn compress_cmd(
    cfg: &PipelineConfig,
    model_path: Option<&Path>,
    manifest: Option<&Path>,
    steps: &str,
    name: Option<String>,
) -> CliResult<PathBuf> {
    let steps = parse_steps(steps)?;
    let model_path = model_path.ok_or_else(|| {
        CliError::Order(format!("step '{}' needs an existing model (--model)", steps[0].name()))
    })?;
    if steps.contains(&Step::Distill) && manifest.is_none() {
        return Err(CliError::Order("distill needs a dataset (--manifest)".into()));
    }
    let mut model = load_checkpoint(model_path)?;
    let loaded = manifest.map(|m| load_dataset(cfg, m)).transpose()?;
    if let Some(l) = &loaded {
        if l.class_names.len() != model.spec.n_classes {
            return Err(CliError::Data(format!(
                "model emits {} classes but the manifest has {}",
                model.spec.n_classes,
                l.class_names.len()
            )));
        }
    }
    let split = match &loaded {
        Some(l) => Some(stratified_split(&l.dataset.labels, l.dataset.n_classes, cfg.training.val_fraction, cfg.seed)?),
        None => None,
    };
    let eval = loaded.as_ref().zip(split.as_ref()).map(|(l, s)| Eval { data: &l.dataset, split: s, val: l.dataset.subset(&s.val) });
    let eval = eval.as_ref();
    let runs = cfg.benchmark.runs;

    let name = name.unwrap_or_else(|| {
        model_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
    });
    let out = &cfg.output_dir;
    crate::cmd_data::ensure_dir(out)?;

    let baseline = size_report(&model);
    let baseline_accuracy = eval.map(|ev| accuracy(&model, &ev.val)).transpose()?;
    let baseline_params = model.count_params()?;
    let mut details = Details::default();
    let mut rows = Vec::new();
    for &step in &steps {
        info!("{}: {}", name, step.name());
        let next = match step {
            Step::PruneNeurons => {
                let layers =
                    if cfg.prune.neuron_layers.is_empty() { prunable_layers(&model) } else { cfg.prune.neuron_layers.clone() };
                let (m, rep) = prune_neurons_in(&model, &layers, cfg.prune.neuron_fraction, cfg.prune_strategy())?;
                details.prune.push((step.name().into(), rep));
                maybe_fine_tune(cfg, m.with_class_names(model.class_names.clone()), eval, step, &mut details)?
            }
            Step::PruneLayers => {
                let layers = if cfg.prune.remove_layers.is_empty() {
                    channel_preserving_convs(&model)?
                } else {
                    cfg.prune.remove_layers.clone()
                };
                if layers.is_empty() {
                    warn!("prune_layers: no removable layer found; model unchanged");
                }
                let (m, rep) = prune_layers(&model, &layers)?;
                details.prune.push((step.name().into(), rep));
                maybe_fine_tune(cfg, m.with_class_names(model.class_names.clone()), eval, step, &mut details)?
            }
            Step::Distill => {
                let ev = eval.expect("checked above");
                let spec = build_student(&cfg.arch(true, model.spec.n_classes))?;
                let (student, hist) = distill(&model, &spec, ev.data, &cfg.distill_config())?;
                write_history(&hist, &out.join(format!("{name}.distill.history.csv")))?;
                student.with_class_names(model.class_names.clone())
            }
            Step::Quantize => {
                let calib = calibration(&model, eval, cfg.quant.calibration_samples);
                let (q, rep) = quantize_head(&model, &calib)?;
                info!("quantize: agreement {:.4}, max logit drift {:.3e}", rep.agreement, rep.max_logit_drift);
                details.quantize = Some(rep);
                q
            }
        };
        model = next;
        model.metadata = provenance(cfg, step.name());
        let ckpt = out.join(format!("{name}.{}.hsm", step.name()));
        save_checkpoint(&model, &ckpt)?;
        rows.push(stage_row(&model, step.name(), &ckpt, eval, runs)?);
    }

    let csv_path = out.join(format!("{name}.stages.csv"));
    let mut csv = String::from("stage,checkpoint,accuracy,size_bytes,file_bytes,size_mb,params,latency_s\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.stage,
            r.checkpoint,
            opt(r.accuracy),
            r.size_bytes,
            r.file_bytes,
            r.size_mb,
            r.params,
            opt(r.latency_s)
        );
    }
    std::fs::write(&csv_path, csv).map_err(|e| CliError::io(&csv_path, e))?;

    let summary = CompressSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        input: model_path.display().to_string(),
        steps: steps.iter().map(|s| s.name()).collect(),
        baseline_accuracy,
        baseline_size_bytes: baseline.param_bytes,
        baseline_params,
        stages: rows
            .iter()
            .map(|r| StageSummary {
                stage: &r.stage,
                checkpoint: &r.checkpoint,
                accuracy: r.accuracy,
                size_bytes: r.size_bytes,
                params: r.params,
            })
            .collect(),
        details,
    };
    let json_path = out.join(format!("{name}.compress.json"));
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&json_path, text).map_err(|e| CliError::io(&json_path, e))?;

    for r in &rows {
        println!(
            "{:>14}: acc {} size {} B ({:.4} MB) params {} latency {}",
            r.stage,
            r.accuracy.map_or("-".into(), |a| format!("{a:.4}")),
            r.size_bytes,
            r.size_mb,
            r.params,
            r.latency_s.map_or("-".into(), |l| format!("{l:.4}s"))
        );
    }
    println!("stages {}", csv_path.display());
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_parsing() {
        assert_eq!(parse_steps("prune_neurons,prune_layers,distill,quantize").unwrap(), Step::ALL.to_vec());
        assert_eq!(parse_steps(" quantize ").unwrap(), vec![Step::Quantize]);
        assert_eq!(parse_steps("bogus").unwrap_err().exit_code(), 2);
        assert_eq!(parse_steps("quantize,distill").unwrap_err().exit_code(), 4);
        assert_eq!(parse_steps("distill,distill").unwrap_err().exit_code(), 4);
        assert_eq!(parse_steps("").unwrap_err().exit_code(), 2);
    }
}
