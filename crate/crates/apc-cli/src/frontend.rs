//! Waveform ingestion and log-Mel feature extraction.
//!
//! Waves are framed with a periodic Hann window, zero-padded to the FFT
//! size, and reduced to a magnitude spectrum. Triangular Mel filters on the
//! HTK scale (m = 2595 log10(1 + f/700)), each peak-normalized to 1, pool
//! the spectrum into per-band energies; the output is the natural log of
//! each energy floored at `log_floor`. Filter weights and energies
//! accumulate in f64 in a fixed order, so the same wave and config always
//! produce bitwise-identical features.

use std::path::Path;

use apc_core::numerics::Matrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{CliError, Result};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

#[derive(Debug, Clone)]
pub struct MelConfig {
    pub window: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            window: 400,
            hop: 160,
            fft_size: 512,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.window == 0 || self.hop == 0 {
            return Err(CliError::Config("window and hop must be positive".into()));
        }
        if self.window > self.fft_size {
            return Err(CliError::Config(format!(
                "window {} exceeds fft_size {}",
                self.window, self.fft_size
            )));
        }
        if self.n_mels == 0 {
            return Err(CliError::Config("n_mels must be at least 1".into()));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(CliError::Config(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin {} fmax {}",
                self.fmin, self.fmax
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(CliError::Config("log_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Reads a 16 kHz mono 16-bit PCM WAV file, scaling samples to [-1, 1).
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = match hound::WavReader::open(path) {
        Ok(r) => r,
        Err(hound::Error::IoError(e)) => return Err(CliError::from_io(path, e)),
        Err(e) => return Err(CliError::Parse(format!("{}: {e}", path.display()))),
    };
    let spec = reader.spec();
    if spec.channels != 1
        || spec.sample_rate != SAMPLE_RATE
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(CliError::Parse(format!(
            "{}: need 16 kHz mono 16-bit PCM, got {} ch {} Hz {} bit",
            path.display(),
            spec.channels,
            spec.sample_rate,
            spec.bits_per_sample
        )));
    }
    let mut samples = Vec::new();
    for s in reader.samples::<i16>() {
        let s = s.map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        samples.push(f32::from(s) / 32768.0);
    }
    Ok(Waveform { samples, sample_rate: SAMPLE_RATE })
}

/// Periodic Hann window of length n.
fn hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let phase = core::f64::consts::TAU * i as f64 / n as f64;
            (0.5 - 0.5 * phase.cos()) as f32
        })
        .collect()
}

/// Slices a wave into Hann-windowed frames; frame i covers samples
/// [i*hop, i*hop + window). A wave shorter than one window is an error.
pub fn frame_signal(samples: &[f32], window: usize, hop: usize) -> Result<Vec<Vec<f32>>> {
    if window == 0 || hop == 0 {
        return Err(CliError::Config("window and hop must be positive".into()));
    }
    if samples.len() < window {
        return Err(CliError::Parse(format!(
            "wave has {} samples, one {window}-sample window does not fit",
            samples.len()
        )));
    }
    let taper = hann(window);
    let count = (samples.len() - window) / hop + 1;
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * hop;
        let frame = samples[start..start + window]
            .iter()
            .zip(&taper)
            .map(|(&s, &w)| s * w)
            .collect();
        frames.push(frame);
    }
    Ok(frames)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// The n_mels + 2 filterbank breakpoints in Hz, uniformly spaced on the
/// Mel scale between fmin and fmax. Filter k rises over
/// [bp[k], bp[k+1]] and falls over [bp[k+1], bp[k+2]].
pub fn mel_breakpoints(cfg: &MelConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let n = cfg.n_mels + 2;
    (0..n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Triangular filters over FFT bins, one sparse (bin, weight) list per Mel
/// band, peak weight 1 at the center breakpoint.
fn mel_filters(cfg: &MelConfig, sample_rate: u32) -> Vec<Vec<(usize, f64)>> {
    let bp = mel_breakpoints(cfg);
    let bin_hz = f64::from(sample_rate) / cfg.fft_size as f64;
    let n_bins = cfg.fft_size / 2 + 1;
    let mut filters = Vec::with_capacity(cfg.n_mels);
    for k in 0..cfg.n_mels {
        let (left, center, right) = (bp[k], bp[k + 1], bp[k + 2]);
        let mut taps = Vec::new();
        for bin in 0..n_bins {
            let f = bin as f64 * bin_hz;
            let w = if f >= left && f <= center && center > left {
                (f - left) / (center - left)
            } else if f > center && f <= right && right > center {
                (right - f) / (right - center)
            } else {
                0.0
            };
            if w > 0.0 {
                taps.push((bin, w));
            }
        }
        filters.push(taps);
    }
    filters
}

/// Full frontend: frames -> magnitude spectra -> Mel energies -> natural
/// log floored at cfg.log_floor. Output is T x n_mels.
pub fn log_mel(wave: &Waveform, cfg: &MelConfig) -> Result<Matrix<f64>> {
    cfg.validate(wave.sample_rate)?;
    let frames = frame_signal(&wave.samples, cfg.window, cfg.hop)?;
    let filters = mel_filters(cfg, wave.sample_rate);
    let fft = FftPlanner::<f32>::new().plan_fft_forward(cfg.fft_size);
    let n_bins = cfg.fft_size / 2 + 1;
    let mut out = Matrix::zeros(frames.len(), cfg.n_mels);
    let mut buf = vec![Complex::new(0.0f32, 0.0f32); cfg.fft_size];
    let mut mags = vec![0.0f64; n_bins];
    for (t, frame) in frames.iter().enumerate() {
        buf.fill(Complex::new(0.0, 0.0));
        for (slot, &s) in buf.iter_mut().zip(frame) {
            slot.re = s;
        }
        fft.process(&mut buf);
        for (bin, mag) in mags.iter_mut().enumerate() {
            *mag = f64::from(buf[bin].norm());
        }
        for (k, taps) in filters.iter().enumerate() {
            let mut energy = 0.0f64;
            for &(bin, w) in taps {
                energy += w * mags[bin];
            }
            out.set(t, k, energy.max(cfg.log_floor).ln());
        }
    }
    Ok(out)
}
