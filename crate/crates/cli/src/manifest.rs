//! Dataset layout on disk: class directories of WAV files in, a directory of
//! TFR1 files plus `manifest.csv` and `classes.txt` out.

use std::path::{Path, PathBuf};

use hivesig::network::Dataset;
use hivesig::tfrepr::read_tfr;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const CLASSES_FILE: &str = "classes.txt";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    /// Relative to the manifest's directory.
    pub tfr_path: String,
    /// Class name (see `classes.txt` for the id order).
    pub label: String,
    pub source: String,
}

/// Class directories under `root`, sorted by name, each with its sorted WAV files.
pub fn scan_dataset(root: &Path) -> CliResult<Vec<(String, Vec<PathBuf>)>> {
    let entries = std::fs::read_dir(root).map_err(|e| CliError::io(root, e))?;
    let mut classes = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let mut wavs: Vec<PathBuf> = std::fs::read_dir(&path)
            .map_err(|e| CliError::io(&path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        wavs.sort();
        classes.push((name, wavs));
    }
    classes.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(classes)
}

pub fn write_manifest(dir: &Path, rows: &[ManifestRow], classes: &[String]) -> CliResult<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(&path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    let cpath = dir.join(CLASSES_FILE);
    let text: String = classes.iter().map(|c| format!("{c}\n")).collect();
    std::fs::write(&cpath, text).map_err(|e| CliError::io(&cpath, e))
}

/// Rows plus the class-name order: `classes.txt` beside the manifest when
/// present, else the sorted distinct labels.
pub fn read_manifest(path: &Path) -> CliResult<(Vec<ManifestRow>, Vec<String>)> {
    if !path.is_file() {
        return Err(CliError::Input(format!("manifest {} does not exist", path.display())));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<ManifestRow>, _>>()
        .map_err(|e| CliError::Input(format!("malformed manifest {}: {e}", path.display())))?;
    let cpath = path.with_file_name(CLASSES_FILE);
    let classes = if cpath.is_file() {
        std::fs::read_to_string(&cpath)
            .map_err(|e| CliError::io(&cpath, e))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect()
    } else {
        let mut c: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
        c.sort();
        c.dedup();
        c
    };
    if rows.is_empty() {
        return Err(CliError::Input(format!("manifest {} has no rows", path.display())));
    }
    Ok((rows, classes))
}

pub struct LoadedData {
    pub dataset: Dataset,
    pub class_names: Vec<String>,
}

/// Reads every TFR listed in the manifest and rasterizes it per the config.
pub fn load_dataset(cfg: &PipelineConfig, manifest: &Path) -> CliResult<LoadedData> {
    let (rows, class_names) = read_manifest(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut images = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for row in &rows {
        let label = class_names
            .iter()
            .position(|c| c == &row.label)
            .ok_or_else(|| CliError::Data(format!("label '{}' of {} is not a known class", row.label, row.tfr_path)))?;
        let img = read_tfr(base.join(&row.tfr_path))
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", row.tfr_path)))?;
        if img.kind != cfg.representation {
            return Err(CliError::Data(format!(
                "{} holds a {} image but the config selects {}",
                row.tfr_path,
                img.kind.name(),
                cfg.representation.name()
            )));
        }
        images.push(img.raster(cfg.raster_size, cfg.channels)?.data);
        labels.push(label);
    }
    let dataset = Dataset::new([cfg.channels, cfg.raster_size, cfg.raster_size], images, labels, class_names.len())?;
    Ok(LoadedData { dataset, class_names })
}
