//! `synth` and `featurize`.

use std::path::{Path, PathBuf};

use hivesig::audio_io::{augment_with_cap, load_wav, segment, write_wav, AudioClip, AugmentSpec};
use hivesig::synth::{synth_clip, SYNTH_CLASSES};
use hivesig::tfrepr::{tfr_to_bytes, FeatureConfig};
use log::{info, warn};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{scan_dataset, write_manifest, ManifestRow};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes the synthetic four-class dataset as 16-bit WAVs, one directory per class.
pub fn synth(cfg: &PipelineConfig, out: Option<PathBuf>) -> CliResult<PathBuf> {
    let out = out.unwrap_or_else(|| cfg.dataset_root.clone());
    let sc = cfg.synth();
    for (c, name) in SYNTH_CLASSES.iter().enumerate() {
        let dir = out.join(name);
        ensure_dir(&dir)?;
        let clips: Vec<AudioClip> = (0..sc.clips_per_class).into_par_iter().map(|i| synth_clip(&sc, c, i)).collect();
        for (i, clip) in clips.iter().enumerate() {
            write_wav(clip, dir.join(format!("{name}_{i:04}.wav")))?;
        }
    }
    println!("wrote {} clips of {} s to {}", 4 * sc.clips_per_class, sc.seconds, out.display());
    Ok(out)
}

struct Job {
    class: String,
    path: PathBuf,
    index: usize,
}

struct Image {
    rel_path: String,
    label: String,
    source: String,
    bytes: Vec<u8>,
}

/// Segments of a clip; with `seconds == 0` the clip stays whole.
pub fn split_clip(clip: &AudioClip, seconds: f64) -> Vec<AudioClip> {
    if seconds > 0.0 {
        segment(clip, seconds)
    } else {
        vec![clip.clone()]
    }
}

fn featurize_file(cfg: &PipelineConfig, feat: &FeatureConfig, job: &Job) -> Result<Vec<Image>, String> {
    let clip = load_wav(&job.path).map_err(|e| e.to_string())?;
    let segments = split_clip(&clip, cfg.segment_seconds);
    if segments.is_empty() {
        return Err(format!("{:.2} s is shorter than one {} s segment", clip.duration(), cfg.segment_seconds));
    }
    let stem = job.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let file_name = job.path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = Vec::new();
    for (s, seg) in segments.iter().enumerate() {
        let source = format!("{}/{}#{s}", job.class, file_name);
        let img = feat.compute(seg).map_err(|e| format!("segment {s}: {e}"))?;
        out.push(Image {
            rel_path: format!("{}/{stem}.{s:03}.tfr", job.class),
            label: job.class.clone(),
            source: source.clone(),
            bytes: tfr_to_bytes(&img),
        });
        if !cfg.augment.enabled {
            continue;
        }
        for (a, kind) in cfg.augment.transforms.iter().enumerate() {
            let seed = cfg.seed ^ ((job.index as u64) << 24) ^ ((s as u64) << 8) ^ a as u64;
            let aug = augment_with_cap(seg, &AugmentSpec { kind: *kind, seed }, cfg.augment.semitone_cap)
                .map_err(|e| format!("segment {s} augmentation {a}: {e}"))?;
            let img = feat.compute(&aug).map_err(|e| format!("segment {s} augmentation {a}: {e}"))?;
            out.push(Image {
                rel_path: format!("{}/{stem}.{s:03}.aug{a}.tfr", job.class),
                label: job.class.clone(),
                source: format!("{source}+{}", serde_json::to_string(kind).unwrap_or_default()),
                bytes: tfr_to_bytes(&img),
            });
        }
    }
    Ok(out)
}

/// One TFR1 file per segment (and per augmentation), plus the manifest.
pub fn featurize(cfg: &PipelineConfig, input: Option<PathBuf>, out: Option<PathBuf>) -> CliResult<PathBuf> {
    let root = input.unwrap_or_else(|| cfg.dataset_root.clone());
    if !root.is_dir() {
        return Err(CliError::Input(format!("dataset root {} is not a directory", root.display())));
    }
    let out = out.unwrap_or_else(|| cfg.output_dir.join("features"));
    let mut classes = Vec::new();
    let mut jobs = Vec::new();
    for (name, wavs) in scan_dataset(&root)? {
        if wavs.is_empty() {
            warn!("EmptyClass: class directory '{name}' holds no WAV files; it is left out");
            continue;
        }
        for path in wavs {
            jobs.push(Job { class: name.clone(), path, index: jobs.len() });
        }
        classes.push(name);
    }
    if classes.len() < 2 {
        return Err(CliError::Input(format!(
            "{} needs at least two non-empty class directories, found {}",
            root.display(),
            classes.len()
        )));
    }
    let feat = cfg.features();
    let results: Vec<Result<Vec<Image>, String>> = jobs.par_iter().map(|j| featurize_file(cfg, &feat, j)).collect();

    let mut rows = Vec::new();
    let mut skipped = 0;
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(images) => {
                for img in images {
                    let path = out.join(&img.rel_path);
                    ensure_dir(path.parent().unwrap_or(&out))?;
                    std::fs::write(&path, &img.bytes).map_err(|e| CliError::io(&path, e))?;
                    rows.push(ManifestRow { tfr_path: img.rel_path, label: img.label, source: img.source });
                }
            }
            Err(e) => {
                warn!("skipping {}: {e}", job.path.display());
                skipped += 1;
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!("no usable audio under {}", root.display())));
    }
    ensure_dir(&out)?;
    write_manifest(&out, &rows, &classes)?;
    let manifest = out.join(crate::manifest::MANIFEST_FILE);
    info!("manifest {}", manifest.display());
    println!(
        "featurized {} files into {} {} images ({} skipped); manifest {}",
        jobs.len(),
        rows.len(),
        cfg.representation.name(),
        skipped,
        manifest.display()
    );
    Ok(manifest)
}
