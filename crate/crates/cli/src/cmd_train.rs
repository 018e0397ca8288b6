//! `train`, plus the history/checkpoint writers shared with `compress`.

use std::path::{Path, PathBuf};

use hivesig::network::{build_student, build_teacher, save_model, train, History, Model};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::load_dataset;
use crate::plot::write_curves;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Arch {
    Teacher,
    Student,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Teacher => "teacher",
            Arch::Student => "student",
        }
    }
}

/// `epoch,lr,train_loss,val_loss,train_acc,val_acc` (plus the two loss
/// components when the history comes from distillation).
pub fn write_history(history: &History, path: &Path) -> CliResult<()> {
    let split = history.records.iter().any(|r| r.distill_loss.is_some());
    let mut s = String::from("epoch,lr,train_loss,val_loss,train_acc,val_acc");
    if split {
        s.push_str(",distill_loss,gt_loss");
    }
    s.push('\n');
    for r in &history.records {
        s.push_str(&format!("{},{},{},{},{},{}", r.epoch, r.lr, r.train_loss, r.val_loss, r.train_acc, r.val_acc));
        if split {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            s.push_str(&format!(",{},{}", opt(r.distill_loss), opt(r.gt_loss)));
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| CliError::io(path, e))
}

pub fn save_checkpoint(model: &Model, path: &Path) -> CliResult<()> {
    save_model(model, path).map_err(|source| CliError::Checkpoint { path: path.display().to_string(), source })
}

pub fn load_checkpoint(path: &Path) -> CliResult<Model> {
    if !path.is_file() {
        return Err(CliError::Input(format!("checkpoint {} does not exist", path.display())));
    }
    hivesig::network::load_model(path)
        .map_err(|source| CliError::Checkpoint { path: path.display().to_string(), source })
}

/// Provenance stored in every checkpoint the CLI writes.
pub fn provenance(cfg: &PipelineConfig, stage: &str) -> serde_json::Value {
    json!({
        "stage": stage,
        "seed": cfg.seed,
        "features": cfg.features(),
    })
}

pub fn train_cmd(
    cfg: &PipelineConfig,
    manifest: &Path,
    arch: Arch,
    name: Option<String>,
) -> CliResult<PathBuf> {
    let data = load_dataset(cfg, manifest)?;
    let k = data.class_names.len();
    let spec = match arch {
        Arch::Teacher => build_teacher(&cfg.arch(false, k))?,
        Arch::Student => build_student(&cfg.arch(true, k))?,
    };
    let tcfg = cfg.training();
    let (model, history) = train(&spec, &data.dataset, &tcfg)?;
    let mut model = model.with_class_names(data.class_names);
    let mut meta = provenance(cfg, arch.name());
    meta["training"] = serde_json::to_value(&tcfg).unwrap_or_default();
    model.metadata = meta;

    let name = name.unwrap_or_else(|| arch.name().to_string());
    crate::cmd_data::ensure_dir(&cfg.output_dir)?;
    let ckpt = cfg.output_dir.join(format!("{name}.hsm"));
    save_checkpoint(&model, &ckpt)?;
    write_history(&history, &cfg.output_dir.join(format!("{name}.history.csv")))?;
    write_curves(&history, &cfg.output_dir.join(format!("{name}.curves.png")))?;
    let best = history.best().cloned();
    println!(
        "trained {} ({} params) for {} epochs; best epoch {} val_acc {:.4} val_loss {:.4}; checkpoint {}",
        arch.name(),
        model.count_params()?,
        history.records.len(),
        history.best_epoch,
        best.as_ref().map_or(f64::NAN, |r| r.val_acc),
        best.as_ref().map_or(f64::NAN, |r| r.val_loss),
        ckpt.display()
    );
    Ok(ckpt)
}
