//! Audio-side ingestion: log-mel spectrograms, random excerpting, and clip
//! feature summaries.
//!
//! The DSP chain is deliberately minimal: magnitude-squared STFT with a
//! periodic Hann window and no padding, a triangular mel filterbank
//! (peak-1 triangles on `mel(f) = 2595 log10(1 + f/700)`, spanning 0 Hz to
//! Nyquist), and a natural log with a small floor. Clip vectors are per-bin
//! mean and population standard deviation over frames; richer features can
//! be supplied through the precomputed-feature file instead.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub mel_bins: usize,
    pub log_floor: f64,
    /// Excerpt length in seconds.
    pub excerpt_seconds: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: 22_050,
            fft_size: 1024,
            hop: 512,
            mel_bins: 128,
            log_floor: 1e-10,
            excerpt_seconds: 3.0,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() {
            return Err(Error::InvalidConfig("fft_size must be a power of two".into()));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::InvalidConfig("hop must be in [1, fft_size]".into()));
        }
        if self.mel_bins < 1 {
            return Err(Error::InvalidConfig("mel_bins must be >= 1".into()));
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return Err(Error::InvalidConfig("log_floor must be > 0".into()));
        }
        if self.excerpt_seconds.is_nan() || self.excerpt_seconds <= 0.0 {
            return Err(Error::InvalidConfig("excerpt_seconds must be > 0".into()));
        }
        Ok(())
    }

    /// STFT frame count for `n` samples: `1 + (n - fft_size) / hop`.
    pub fn frame_count(&self, n: usize) -> Option<usize> {
        n.checked_sub(self.fft_size).map(|rest| 1 + rest / self.hop)
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over the one-sided FFT bins.
pub struct MelFilterbank {
    /// `mel_bins x (fft_size/2 + 1)` weights.
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(config: &MelConfig) -> Self {
        let n_freqs = config.fft_size / 2 + 1;
        let nyquist = f64::from(config.sample_rate) / 2.0;
        let mel_points: Vec<f64> = (0..config.mel_bins + 2)
            .map(|i| {
                let m = hz_to_mel(nyquist) * i as f64 / (config.mel_bins + 1) as f64;
                mel_to_hz(m)
            })
            .collect();
        let bin_hz: Vec<f64> = (0..n_freqs)
            .map(|k| k as f64 * f64::from(config.sample_rate) / config.fft_size as f64)
            .collect();
        let weights = (0..config.mel_bins)
            .map(|m| {
                let (lo, center, hi) = (mel_points[m], mel_points[m + 1], mel_points[m + 2]);
                bin_hz
                    .iter()
                    .map(|&f| {
                        let rising = (f - lo) / (center - lo);
                        let falling = (hi - f) / (hi - center);
                        rising.min(falling).max(0.0)
                    })
                    .collect()
            })
            .collect();
        MelFilterbank {
            weights,
            centers_hz: mel_points[1..=config.mel_bins].to_vec(),
        }
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Filter center frequencies in Hz, one per mel bin.
    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Mel bin whose center frequency is nearest `hz`.
    pub fn nearest_bin(&self, hz: f64) -> usize {
        self.centers_hz
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - hz).abs().total_cmp(&(*b - hz).abs()))
            .map(|(i, _)| i)
            .unwrap()
    }
}

/// Log-mel spectrogram (`frames x mel_bins`): `ln(mel_power + log_floor)`
/// where mel power is the filterbank applied to `|STFT|^2`.
pub fn log_mel_spectrogram(pcm: &[f32], config: &MelConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    if pcm.len() < config.fft_size {
        return Err(Error::PcmTooShort {
            got: pcm.len(),
            need: config.fft_size,
        });
    }
    if let Some(i) = pcm.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteSample(i));
    }

    let fft = FftPlanner::<f64>::new().plan_fft_forward(config.fft_size);
    // Periodic Hann window.
    let window: Vec<f64> = (0..config.fft_size)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / config.fft_size as f64).cos())
        .collect();
    let bank = MelFilterbank::new(config);
    let n_freqs = config.fft_size / 2 + 1;
    let frames = config.frame_count(pcm.len()).unwrap();

    let mut out = Vec::with_capacity(frames);
    let mut buf = vec![Complex::default(); config.fft_size];
    for t in 0..frames {
        let start = t * config.hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = Complex::new(f64::from(pcm[start + i]) * window[i], 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_freqs].iter().map(|c| c.norm_sqr()).collect();
        let row: Vec<f64> = bank
            .weights()
            .iter()
            .map(|w| {
                let mel_power: f64 = w.iter().zip(&power).map(|(a, b)| a * b).sum();
                (mel_power + config.log_floor).ln()
            })
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// Contiguous excerpt of `floor(seconds * sample_rate)` samples at a
/// uniformly random valid offset.
pub fn excerpt<R: Rng>(
    pcm: &[f32],
    seconds: f64,
    sample_rate: u32,
    rng: &mut R,
) -> Result<Vec<f32>> {
    let len = (seconds * f64::from(sample_rate)).floor() as usize;
    if pcm.len() < len {
        return Err(Error::PcmTooShort {
            got: pcm.len(),
            need: len,
        });
    }
    let offset = rng.gen_range(0..=pcm.len() - len);
    Ok(pcm[offset..offset + len].to_vec())
}

/// Per-bin mean and population standard deviation, concatenated
/// (`2 * mel_bins` values).
pub fn summarize(spec: &[Vec<f64>]) -> Result<Vec<f64>> {
    let frames = spec.len();
    if frames == 0 {
        return Err(Error::EmptyDataset);
    }
    let bins = spec[0].len();
    let mut means = vec![0.0f64; bins];
    for row in spec {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= frames as f64;
    }
    let mut stds = vec![0.0f64; bins];
    for row in spec {
        for ((s, &v), &m) in stds.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in stds.iter_mut() {
        *s = (*s / frames as f64).sqrt();
    }
    means.extend(stds);
    Ok(means)
}

/// One clip's feature vector, joined to its track.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipFeatures {
    pub clip_id: String,
    pub track_id: String,
    pub vector: Vec<f64>,
}

/// Load mono PCM from a WAV file. Stereo is averaged to mono; the sample
/// rate must already match `expected_rate` (no resampling).
pub fn load_wav(path: &Path, expected_rate: u32) -> Result<Vec<f32>> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_rate != expected_rate {
        return Err(Error::UnsupportedWav(format!(
            "{}: sample rate {} Hz, expected {expected_rate} Hz (resampling is not supported)",
            path.display(),
            spec.sample_rate
        )));
    }
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedWav(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::UnsupportedWav(format!(
                "{}: {bits}-bit {fmt:?} (supported: 16-bit int, 32-bit float)",
                path.display()
            )))
        }
    };
    if channels == 1 {
        return Ok(interleaved);
    }
    Ok(interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect())
}

/// Read a precomputed feature file: JSON Lines of
/// `{clip_id, track_id, vector}`. All vectors must share one length.
pub fn read_features(path: &Path) -> Result<Vec<ClipFeatures>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut clips: Vec<ClipFeatures> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let clip: ClipFeatures = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        if let Some(i) = clip.vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("non-finite component at index {i}"),
            ));
        }
        if let Some(first) = clips.first() {
            if clip.vector.len() != first.vector.len() {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!(
                        "vector length {} differs from first clip's {}",
                        clip.vector.len(),
                        first.vector.len()
                    ),
                ));
            }
        }
        clips.push(clip);
    }
    Ok(clips)
}

pub fn write_features(path: &Path, clips: &[ClipFeatures]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for clip in clips {
        let line = serde_json::to_string(clip)
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
