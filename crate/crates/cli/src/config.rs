//! TOML pipeline configuration. Every field has a default, so an empty file
//! (or no file) is a valid configuration; `configs/default.toml` lists them all.

use std::path::{Path, PathBuf};

use hivesig::audio_io::{default_augmentations, AugmentKind, SEMITONE_CAP};
use hivesig::compress::{DistillConfig, PruneStrategy};
use hivesig::network::{ArchConfig, HeadConfig, TrainingConfig};
use hivesig::synth::SynthConfig;
use hivesig::tfrepr::{FeatureConfig, GammatoneConfig, MelConfig, SmoothingConfig, StftConfig, TfKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// One sub-directory per class; sorted directory names give class ids.
    pub dataset_root: PathBuf,
    /// Every artifact is written below this directory.
    pub output_dir: PathBuf,
    /// Seeds every stochastic stage (split, init, dropout, shuffling,
    /// random pruning, augmentation, synthetic data).
    pub seed: u64,
    pub representation: TfKind,
    /// 3 = jet-colored raster, 1 = grayscale.
    pub channels: usize,
    pub raster_size: usize,
    /// Clips are resampled to this rate before featurizing.
    pub sample_rate: u32,
    /// Fixed segment length; `0` keeps every clip whole.
    pub segment_seconds: f64,
    pub stft: StftConfig,
    pub mel: MelConfig,
    pub smoothing: SmoothingConfig,
    pub gammatone: GammatoneConfig,
    pub augment: AugmentSection,
    pub arch: ArchSection,
    pub training: TrainingConfig,
    pub distill: DistillSection,
    pub prune: PruneSection,
    pub quant: QuantSection,
    pub benchmark: BenchmarkSection,
    pub synth: SynthSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            seed: 0,
            representation: TfKind::Cochleagram,
            channels: 3,
            raster_size: 64,
            sample_rate: 16_000,
            segment_seconds: 60.0,
            stft: StftConfig::default(),
            mel: MelConfig::default(),
            smoothing: SmoothingConfig::default(),
            gammatone: GammatoneConfig::default(),
            augment: AugmentSection::default(),
            arch: ArchSection::default(),
            training: TrainingConfig::default(),
            distill: DistillSection::default(),
            prune: PruneSection::default(),
            quant: QuantSection::default(),
            benchmark: BenchmarkSection::default(),
            synth: SynthSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    /// Emit augmented copies of every segment next to the original.
    pub enabled: bool,
    pub semitone_cap: f64,
    pub transforms: Vec<AugmentKind>,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self { enabled: false, semitone_cap: SEMITONE_CAP, transforms: default_augmentations() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchSection {
    pub teacher_widths: Vec<usize>,
    pub student_widths: Vec<usize>,
    pub kernel: usize,
    pub head_hidden: usize,
    pub dropout: f64,
}

impl Default for ArchSection {
    fn default() -> Self {
        Self {
            teacher_widths: ArchConfig::teacher().widths,
            student_widths: ArchConfig::student().widths,
            kernel: 3,
            head_hidden: HeadConfig::default().hidden,
            dropout: HeadConfig::default().dropout,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    pub temperature: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Overrides `training.max_epochs` for the student when set.
    pub max_epochs: Option<usize>,
}

impl Default for DistillSection {
    fn default() -> Self {
        let d = DistillConfig::default();
        Self { temperature: d.temperature, alpha: d.alpha, beta: d.beta, max_epochs: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Random,
    Magnitude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    /// Fraction of units removed from every prunable layer.
    pub neuron_fraction: f64,
    pub strategy: StrategyName,
    /// Layers to unit-prune; empty means every hidden conv/dense layer.
    pub neuron_layers: Vec<String>,
    /// Layers to delete; empty means every channel-preserving conv.
    pub remove_layers: Vec<String>,
    /// Fine-tuning epochs after each pruning step (0 = one-shot).
    pub fine_tune_epochs: usize,
}

impl Default for PruneSection {
    fn default() -> Self {
        Self {
            neuron_fraction: 0.1,
            strategy: StrategyName::Random,
            neuron_layers: Vec::new(),
            remove_layers: Vec::new(),
            fine_tune_epochs: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantSection {
    /// Training-split samples used to measure the logit drift.
    pub calibration_samples: usize,
}

impl Default for QuantSection {
    fn default() -> Self {
        Self { calibration_samples: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub runs: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self { runs: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub clips_per_class: usize,
    pub seconds: f64,
    pub jitter: f64,
    pub noise: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self { clips_per_class: s.clips_per_class, seconds: s.seconds, jitter: s.jitter, noise: s.noise }
    }
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Usage(format!("invalid config: {m}")));
        if !matches!(self.channels, 1 | 3) {
            return bad(format!("channels must be 1 or 3, got {}", self.channels));
        }
        if self.raster_size < 16 || self.raster_size % 16 != 0 {
            return bad(format!("raster_size must be a positive multiple of 16, got {}", self.raster_size));
        }
        if !(self.segment_seconds >= 0.0 && self.segment_seconds.is_finite()) {
            return bad(format!("segment_seconds must be >= 0, got {}", self.segment_seconds));
        }
        if !(0.0..1.0).contains(&self.prune.neuron_fraction) {
            return bad(format!("prune.neuron_fraction must lie in [0, 1), got {}", self.prune.neuron_fraction));
        }
        if self.benchmark.runs < 3 {
            return bad(format!("benchmark.runs must be at least 3, got {}", self.benchmark.runs));
        }
        self.training.validate().map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        self.distill_config().validate().map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        let checks = match self.representation {
            TfKind::Spectrogram | TfKind::Smoothed => self.stft.validate(),
            TfKind::Mel => self.stft.validate().and(hivesig::tfrepr::MelBank::from_config(
                &self.mel,
                self.stft.n_fft,
                self.sample_rate,
            )
            .map(|_| ())),
            TfKind::Cochleagram => self.gammatone.validate(self.sample_rate),
        };
        checks.map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        if self.representation == TfKind::Smoothed {
            self.smoothing.validate().map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        }
        Ok(())
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            kind: self.representation,
            sample_rate: self.sample_rate,
            stft: self.stft,
            mel: self.mel,
            smoothing: self.smoothing,
            gammatone: self.gammatone,
            raster_size: self.raster_size,
            channels: self.channels,
        }
    }

    pub fn arch(&self, student: bool, n_classes: usize) -> ArchConfig {
        ArchConfig {
            widths: if student { self.arch.student_widths.clone() } else { self.arch.teacher_widths.clone() },
            input_channels: self.channels,
            input_size: self.raster_size,
            kernel: self.arch.kernel,
            n_classes,
            head: HeadConfig { hidden: self.arch.head_hidden, dropout: self.arch.dropout },
        }
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig { seed: self.seed, ..self.training.clone() }
    }

    pub fn distill_config(&self) -> DistillConfig {
        let mut training = self.training();
        if let Some(e) = self.distill.max_epochs {
            training.max_epochs = e;
        }
        DistillConfig { temperature: self.distill.temperature, alpha: self.distill.alpha, beta: self.distill.beta, training }
    }

    pub fn prune_strategy(&self) -> PruneStrategy {
        match self.prune.strategy {
            StrategyName::Random => PruneStrategy::Random { seed: self.seed },
            StrategyName::Magnitude => PruneStrategy::Magnitude,
        }
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            clips_per_class: self.synth.clips_per_class,
            seconds: self.synth.seconds,
            sample_rate: self.sample_rate,
            jitter: self.synth.jitter,
            noise: self.synth.noise,
            seed: self.seed,
        }
    }
}
