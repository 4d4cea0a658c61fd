//! On-disk formats: checkpoints, feature files, normalization stats,
//! manifests, label files, and plain-text reports.
//!
//! Binary payloads are little-endian throughout. Tensor and feature values
//! are stored as 32-bit floats; normalization statistics keep full 64-bit
//! precision because they divide the data. All writers go through
//! [`atomic_write`], so a crashed run never leaves a half-written file, and
//! re-running a command reproduces every output byte for byte.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use apc_core::data::{
    Corpus, FeatureSequence, Gender, NormEntry, NormStats, NormalizationMode,
};
use apc_core::numerics::{Matrix, ParamStore};

use crate::error::{CliError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"APCCKPT1";
pub const FEATURES_MAGIC: &[u8; 5] = b"FEAT1";
pub const NORM_MAGIC: &[u8; 5] = b"NORM1";

/// Writes to a sibling temp file, then renames over the target.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::from_io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::from_io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::from_io(path, e))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::from_io(path, e))
}

/// Byte cursor that reports the offset and field name on any short read.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    origin: String,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], origin: &Path) -> Self {
        Self { buf, pos: 0, origin: origin.display().to_string() }
    }

    fn fail(&self, what: &str) -> CliError {
        CliError::Parse(format!("{}: byte {}: {what}", self.origin, self.pos))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let slice = &self.buf[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(self.fail(&format!(
                "truncated, needed {n} bytes for {what} but {} remain",
                self.buf.len() - self.pos
            ))),
        }
    }

    fn magic(&mut self, expected: &[u8]) -> Result<()> {
        let got = self.take(expected.len(), "magic")?;
        if got != expected {
            return Err(CliError::Parse(format!(
                "{}: bad magic, not a {} file",
                self.origin,
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let b = self.take(8, what)?;
        let v = u64::from_le_bytes(b.try_into().unwrap());
        usize::try_from(v).map_err(|_| self.fail(&format!("{what} {v} overflows usize")))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u64(&format!("{what} length"))?;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| self.fail(&format!("{what} is not valid UTF-8")))
    }

    fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn done(&self) -> Result<()> {
        if self.is_done() {
            Ok(())
        } else {
            Err(self.fail(&format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

// ---------------------------------------------------------------------------
// Checkpoints: APCCKPT1, then one record per tensor, sorted by name.
// Record: name (length-prefixed UTF-8), rank (u64, always 2 here), dims
// (u64 each), values (f32, row-major).
// ---------------------------------------------------------------------------

pub fn save_checkpoint(path: &Path, store: &ParamStore<f64>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for (name, m) in store.iter() {
        put_string(&mut out, name);
        out.extend_from_slice(&2u64.to_le_bytes());
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for &v in m.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    atomic_write(path, &out)
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore<f64>> {
    let bytes = read_bytes(path)?;
    let mut cur = Cursor::new(&bytes, path);
    cur.magic(CHECKPOINT_MAGIC)?;
    let mut store = ParamStore::new();
    while !cur.is_done() {
        let name = cur.string("tensor name")?;
        let rank = cur.u64("rank")?;
        if rank != 2 {
            return Err(cur.fail(&format!("tensor {name}: rank {rank}, expected 2")));
        }
        let rows = cur.u64("rows")?;
        let cols = cur.u64("cols")?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| cur.fail(&format!("tensor {name}: dims overflow")))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(cur.f32("tensor value")? as f64);
        }
        if store.contains(&name) {
            return Err(cur.fail(&format!("duplicate tensor {name}")));
        }
        let m = Matrix::from_vec(rows, cols, data).map_err(CliError::from)?;
        store.insert(&name, m).map_err(CliError::from)?;
    }
    Ok(store)
}

// ---------------------------------------------------------------------------
// Feature files: FEAT1, utterance and speaker ids (length-prefixed UTF-8),
// T and D (u64), T*D frame values (f32, row-major), then a label flag byte;
// flag 1 is followed by T u32 labels.
// ---------------------------------------------------------------------------

pub fn save_features(path: &Path, seq: &FeatureSequence<f64>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(FEATURES_MAGIC);
    put_string(&mut out, &seq.utterance_id);
    put_string(&mut out, &seq.speaker_id);
    out.extend_from_slice(&(seq.frames.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(seq.frames.cols() as u64).to_le_bytes());
    for &v in seq.frames.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    match &seq.labels {
        Some(labels) => {
            out.push(1);
            for &l in labels {
                out.extend_from_slice(&l.to_le_bytes());
            }
        }
        None => out.push(0),
    }
    atomic_write(path, &out)
}

pub fn load_features(path: &Path) -> Result<FeatureSequence<f64>> {
    let bytes = read_bytes(path)?;
    let mut cur = Cursor::new(&bytes, path);
    cur.magic(FEATURES_MAGIC)?;
    let utterance_id = cur.string("utterance id")?;
    let speaker_id = cur.string("speaker id")?;
    let rows = cur.u64("frame count")?;
    let cols = cur.u64("feature dim")?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| cur.fail("frame dims overflow"))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(cur.f32("frame value")? as f64);
    }
    let labels = match cur.u8("label flag")? {
        0 => None,
        1 => {
            let mut labels = Vec::with_capacity(rows);
            for _ in 0..rows {
                labels.push(cur.u32("label")?);
            }
            Some(labels)
        }
        other => return Err(cur.fail(&format!("label flag {other}, expected 0 or 1"))),
    };
    cur.done()?;
    let frames = Matrix::from_vec(rows, cols, data).map_err(CliError::from)?;
    let seq = FeatureSequence { utterance_id, speaker_id, frames, labels };
    seq.validate().map_err(CliError::from)?;
    Ok(seq)
}

// ---------------------------------------------------------------------------
// Label files: UTF-8 text, one label per line.
// ---------------------------------------------------------------------------

pub fn save_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let mut text = String::new();
    for l in labels {
        writeln!(text, "{l}").unwrap();
    }
    atomic_write(path, text.as_bytes())
}

pub fn load_labels(path: &Path) -> Result<Vec<u32>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let l = line.parse::<u32>().map_err(|_| {
            CliError::Parse(format!("{}: line {}: bad label {line:?}", path.display(), i + 1))
        })?;
        labels.push(l);
    }
    Ok(labels)
}

// ---------------------------------------------------------------------------
// Normalization stats: NORM1, mode name, feature dim, entry count, then per
// group (sorted by key): key, dim means, dim stds, all f64.
// ---------------------------------------------------------------------------

pub fn save_norm_stats(path: &Path, stats: &NormStats) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(NORM_MAGIC);
    put_string(&mut out, stats.mode.as_str());
    out.extend_from_slice(&(stats.dim as u64).to_le_bytes());
    out.extend_from_slice(&(stats.entries.len() as u64).to_le_bytes());
    for (key, entry) in &stats.entries {
        put_string(&mut out, key);
        for &v in entry.mean.iter().chain(entry.std.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    atomic_write(path, &out)
}

pub fn load_norm_stats(path: &Path) -> Result<NormStats> {
    let bytes = read_bytes(path)?;
    let mut cur = Cursor::new(&bytes, path);
    cur.magic(NORM_MAGIC)?;
    let mode_str = cur.string("normalization mode")?;
    let mode = NormalizationMode::parse(&mode_str)
        .ok_or_else(|| cur.fail(&format!("unknown normalization mode {mode_str:?}")))?;
    let dim = cur.u64("feature dim")?;
    let n = cur.u64("entry count")?;
    let mut entries = std::collections::BTreeMap::new();
    for _ in 0..n {
        let key = cur.string("group key")?;
        let mut mean = Vec::with_capacity(dim);
        for _ in 0..dim {
            mean.push(cur.f64("mean value")?);
        }
        let mut std = Vec::with_capacity(dim);
        for _ in 0..dim {
            std.push(cur.f64("std value")?);
        }
        if entries.insert(key.clone(), NormEntry { mean, std }).is_some() {
            return Err(cur.fail(&format!("duplicate group {key}")));
        }
    }
    cur.done()?;
    Ok(NormStats { mode, dim, entries })
}

// ---------------------------------------------------------------------------
// Manifests: UTF-8 text, one record per line, five tab-separated fields:
// utterance_id, feature_path, speaker_id, gender, label_path ('-' if none).
// Paths are stored as written and resolved against the manifest's directory
// on load.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub utterance_id: String,
    pub feature_path: PathBuf,
    pub speaker_id: String,
    pub gender: Gender,
    pub label_path: Option<PathBuf>,
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        let label = match &r.label_path {
            Some(p) => p.display().to_string(),
            None => "-".to_string(),
        };
        writeln!(
            text,
            "{}\t{}\t{}\t{}\t{}",
            r.utterance_id,
            r.feature_path.display(),
            r.speaker_id,
            r.gender.as_str(),
            label
        )
        .unwrap();
    }
    atomic_write(path, text.as_bytes())
}

/// Loads a manifest, resolving paths and checking that every referenced
/// file exists before any of them is opened.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_relative() { base.join(p) } else { p.to_path_buf() }
    };
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(CliError::Parse(format!(
                "{}: line {}: {} fields, expected 5",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        let gender = Gender::parse(fields[3]).ok_or_else(|| {
            CliError::Parse(format!(
                "{}: line {}: unknown gender {:?}",
                path.display(),
                i + 1,
                fields[3]
            ))
        })?;
        if !seen.insert(fields[0].to_string()) {
            return Err(CliError::Parse(format!(
                "{}: line {}: duplicate utterance id {}",
                path.display(),
                i + 1,
                fields[0]
            )));
        }
        records.push(ManifestRecord {
            utterance_id: fields[0].to_string(),
            feature_path: resolve(fields[1]),
            speaker_id: fields[2].to_string(),
            gender,
            label_path: match fields[4] {
                "-" => None,
                p => Some(resolve(p)),
            },
        });
    }
    for r in &records {
        for p in std::iter::once(&r.feature_path).chain(r.label_path.iter()) {
            if !p.exists() {
                return Err(CliError::MissingInput(format!(
                    "{}: {} listed in manifest but not found",
                    r.utterance_id,
                    p.display()
                )));
            }
        }
    }
    Ok(records)
}

/// Loads every utterance a manifest names into one corpus. Ids embedded in
/// the feature files must agree with the manifest. Labels come from the
/// feature file when embedded, else from the label file when listed.
pub fn load_corpus(manifest: &Path) -> Result<(Corpus<f64>, Vec<ManifestRecord>)> {
    let records = load_manifest(manifest)?;
    let mut corpus = Corpus::new();
    for r in &records {
        let mut seq = load_features(&r.feature_path)?;
        if seq.utterance_id != r.utterance_id || seq.speaker_id != r.speaker_id {
            return Err(CliError::Parse(format!(
                "{}: ids {}/{} disagree with manifest entry {}/{}",
                r.feature_path.display(),
                seq.utterance_id,
                seq.speaker_id,
                r.utterance_id,
                r.speaker_id
            )));
        }
        if seq.labels.is_none() {
            if let Some(lp) = &r.label_path {
                let labels = load_labels(lp)?;
                if labels.len() != seq.len() {
                    return Err(CliError::Parse(format!(
                        "{}: {} labels for {} frames",
                        lp.display(),
                        labels.len(),
                        seq.len()
                    )));
                }
                seq.labels = Some(labels);
            }
        }
        corpus.genders.insert(r.speaker_id.clone(), r.gender);
        corpus.utterances.push(seq);
    }
    if corpus.utterances.is_empty() {
        return Err(CliError::Parse(format!(
            "{}: manifest lists no utterances",
            manifest.display()
        )));
    }
    Ok((corpus, records))
}

// ---------------------------------------------------------------------------
// Text outputs.
// ---------------------------------------------------------------------------

/// key=value report, one pair per line, in the order given.
pub fn write_report(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        writeln!(text, "{k}={v}").unwrap();
    }
    atomic_write(path, text.as_bytes())
}

/// Per-epoch loss history: "epoch value" lines, epochs 1-based.
pub fn write_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut text = String::new();
    for (i, v) in history.iter().enumerate() {
        writeln!(text, "{} {}", i + 1, v).unwrap();
    }
    atomic_write(path, text.as_bytes())
}

/// Renders a loss curve as a standalone SVG polyline.
pub fn history_svg(history: &[f64]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 40.0;
    let lo = history.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = history.len().max(2) as f64;
    let mut points = String::new();
    for (i, &v) in history.iter().enumerate() {
        let x = PAD + (W - 2.0 * PAD) * i as f64 / (n - 1.0);
        let y = H - PAD - (H - 2.0 * PAD) * (v - lo) / span;
        write!(points, "{x:.2},{y:.2} ").unwrap();
    }
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"8\" y=\"16\" font-size=\"12\">max {hi:.6}</text>\n",
            "<text x=\"8\" y=\"{hy}\" font-size=\"12\">min {lo:.6}</text>\n",
            "<polyline points=\"{points}\" fill=\"none\" stroke=\"black\"/>\n",
            "</svg>\n"
        ),
        w = W,
        h = H,
        hy = H - 8.0,
        hi = hi,
        lo = lo,
        points = points.trim_end()
    )
}
