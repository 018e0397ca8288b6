//! Beehive audio classification: time–frequency features, a compact CNN
//! trained from scratch, and pruning / distillation / head quantization.

pub mod audio_io;
pub mod autograd;
pub mod compress;
pub mod evalmetrics;
pub mod network;
pub mod tfrepr;
pub mod synth;
