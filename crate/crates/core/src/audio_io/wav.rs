use std::io::{BufReader, ErrorKind};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError};

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        // the file is already open, so read failures here mean truncation
        hound::Error::IoError(io) if io.kind() != ErrorKind::PermissionDenied => {
            AudioError::MalformedHeader(format!("file ends early ({io})"))
        }
        hound::Error::IoError(io) => AudioError::Io(io),
        hound::Error::FormatError(m) => AudioError::MalformedHeader(m.to_string()),
        hound::Error::Unsupported => AudioError::UnsupportedEncoding("format not handled".into()),
        other => AudioError::UnsupportedEncoding(other.to_string()),
    }
}

/// Decodes PCM (8/16/24/32-bit integer or 32-bit float) WAV, 1–2 channels,
/// into a mono clip. Stereo is averaged.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut reader = WavReader::new(BufReader::new(file)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::UnsupportedEncoding(format!("{} channels", spec.channels)));
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::MalformedHeader("sample rate 0".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| f64::from(v).clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let full = f64::from(1u32 << (bits - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| (f64::from(v) / full).clamp(-1.0, 1.0)))
                .collect::<Result<_, _>>()
                .map_err(map_hound)?
        }
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!("{fmt:?} with {bits} bits")));
        }
    };
    let ch = usize::from(spec.channels);
    let samples: Vec<f64> = interleaved.chunks_exact(ch).map(|f| f.iter().sum::<f64>() / ch as f64).collect();
    if samples.is_empty() {
        return Err(AudioError::EmptyAudio);
    }
    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
        label: None,
        source_id: path.display().to_string(),
    })
}

fn map_write(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) => AudioError::Io(io),
        other => AudioError::UnsupportedEncoding(other.to_string()),
    }
}

/// Writes a mono 16-bit PCM WAV.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(map_write)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(map_write)?;
    }
    w.finalize().map_err(map_write)
}
