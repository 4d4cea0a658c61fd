//! Frame-label classifiers trained on frozen features.
//!
//! The probe owns its own parameter store, so the feature extractor it
//! evaluates cannot be touched by probe training. Ties in the argmax
//! resolve to the lowest class index.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::adam::{adam_step, AdamState};
use crate::numerics::dense::Dense;
use crate::numerics::matrix::{Activation, Matrix};
use crate::numerics::param::ParamStore;
use crate::numerics::scalar::Scalar;
use crate::rng::SeededRng;

/// Classifier head shapes: a bare affine map, or one / three hidden
/// ReLU layers of [`HIDDEN_WIDTH`] units before it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeKind {
    Linear,
    Mlp1,
    Mlp3,
}

/// Hidden width of the MLP probes.
pub const HIDDEN_WIDTH: usize = 512;

impl ProbeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::Linear => "linear",
            ProbeKind::Mlp1 => "mlp1",
            ProbeKind::Mlp3 => "mlp3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(ProbeKind::Linear),
            "mlp1" => Some(ProbeKind::Mlp1),
            "mlp3" => Some(ProbeKind::Mlp3),
            _ => None,
        }
    }

    fn hidden_layers(self) -> usize {
        match self {
            ProbeKind::Linear => 0,
            ProbeKind::Mlp1 => 1,
            ProbeKind::Mlp3 => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Frames per optimizer step.
    pub batch_frames: usize,
    pub seed: u64,
}

impl Default for ProbeTrainConfig {
    fn default() -> Self {
        Self { epochs: 50, lr: 1e-3, batch_frames: 256, seed: 0 }
    }
}

/// A trained frame classifier: hidden ReLU layers (possibly none) and an
/// affine output scored with softmax cross-entropy.
#[derive(Debug)]
pub struct Probe<F> {
    kind: ProbeKind,
    in_dim: usize,
    classes: usize,
    store: ParamStore<F>,
    layers: Vec<Dense>,
}

fn build_layers<F: Scalar>(
    store: &mut ParamStore<F>,
    rng: &mut SeededRng,
    kind: ProbeKind,
    in_dim: usize,
    classes: usize,
) -> Result<Vec<Dense>> {
    let mut layers = Vec::new();
    let mut prev = in_dim;
    for l in 0..kind.hidden_layers() {
        layers.push(Dense::init(
            store,
            rng,
            &format!("h{l}"),
            prev,
            HIDDEN_WIDTH,
            Some(Activation::Relu),
        )?);
        prev = HIDDEN_WIDTH;
    }
    layers.push(Dense::init(store, rng, "out", prev, classes, None)?);
    Ok(layers)
}

impl<F: Scalar> Probe<F> {
    pub fn kind(&self) -> ProbeKind {
        self.kind
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Per-layer activations, `acts[0]` being the input.
    fn acts(&self, x: &Matrix<F>) -> Result<Vec<Matrix<F>>> {
        if x.cols() != self.in_dim {
            return Err(Error::Shape {
                op: "probe_forward",
                expected: (x.rows(), self.in_dim),
                got: (x.rows(), x.cols()),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(&self.store, acts.last().expect("nonempty"))?;
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn logits(&self, x: &Matrix<F>) -> Result<Matrix<F>> {
        Ok(self.acts(x)?.pop().expect("output layer"))
    }

    /// Argmax class per frame; ties go to the lowest class index.
    pub fn predict(&self, x: &Matrix<F>) -> Result<Vec<u32>> {
        let logits = self.logits(x)?;
        let mut out = Vec::with_capacity(logits.rows());
        for t in 0..logits.rows() {
            let row = logits.row(t);
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            out.push(best as u32);
        }
        Ok(out)
    }
}

/// Mean softmax cross-entropy and its gradient with respect to the
/// logits, gradient already divided by the frame count.
pub fn softmax_ce<F: Scalar>(logits: &Matrix<F>, labels: &[u32]) -> Result<(F, Matrix<F>)> {
    let (n, c) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::Shape { op: "softmax_ce", expected: (n, 1), got: (labels.len(), 1) });
    }
    let inv_n = F::one() / F::from_usize(n);
    let mut d = Matrix::zeros(n, c);
    let mut loss = F::zero();
    for t in 0..n {
        let row = logits.row(t);
        let y = labels[t] as usize;
        let mut m = row[0];
        for &v in row {
            if v > m {
                m = v;
            }
        }
        let mut z = F::zero();
        for &v in row {
            z = z + (v - m).exp();
        }
        loss = loss + z.ln() + m - row[y];
        let d_row = d.row_mut(t);
        for (j, &v) in row.iter().enumerate() {
            let p = (v - m).exp() / z;
            d_row[j] = (p - if j == y { F::one() } else { F::zero() }) * inv_n;
        }
    }
    Ok((loss * inv_n, d))
}

fn check_frames<F: Scalar>(features: &Matrix<F>, labels: &[u32], classes: usize) -> Result<()> {
    if features.rows() == 0 {
        return Err(Error::EmptyInput { what: "probe frames" });
    }
    if labels.len() != features.rows() {
        return Err(Error::Shape {
            op: "probe_labels",
            expected: (features.rows(), 1),
            got: (labels.len(), 1),
        });
    }
    if !features.is_finite() {
        return Err(Error::NonFinite { context: String::from("probe features") });
    }
    for &y in labels {
        if y as usize >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
    }
    Ok(())
}

/// Trains a classifier on frozen features with Adam. When a dev set is
/// given, the weights with the lowest dev error rate across epochs are
/// returned. Deterministic under `cfg.seed`.
pub fn train_probe<F: Scalar>(
    features: &Matrix<F>,
    labels: &[u32],
    dev: Option<(&Matrix<F>, &[u32])>,
    kind: ProbeKind,
    classes: usize,
    cfg: &ProbeTrainConfig,
) -> Result<Probe<F>> {
    if classes < 2 {
        return Err(Error::Config { message: format!("need at least 2 classes, got {classes}") });
    }
    if cfg.epochs < 1 || cfg.batch_frames < 1 {
        return Err(Error::Config {
            message: String::from("epochs and batch_frames must be >= 1"),
        });
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::Config { message: format!("lr must be > 0, got {}", cfg.lr) });
    }
    check_frames(features, labels, classes)?;
    if let Some((dx, dy)) = dev {
        check_frames(dx, dy, classes)?;
        if dx.cols() != features.cols() {
            return Err(Error::Shape {
                op: "probe_dev",
                expected: (dx.rows(), features.cols()),
                got: (dx.rows(), dx.cols()),
            });
        }
    }

    let root = SeededRng::new(cfg.seed);
    let mut store = ParamStore::new();
    let layers = build_layers(&mut store, &mut root.derive(1), kind, features.cols(), classes)?;
    let mut probe =
        Probe { kind, in_dim: features.cols(), classes, store, layers };
    let mut adam = AdamState::new();
    let lr = F::from_f64(cfg.lr);

    let n = features.rows();
    let mut best: Option<(f64, ParamStore<F>)> = None;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        root.derive(2 + epoch as u64).shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_frames) {
            let mut xb = Matrix::zeros(chunk.len(), features.cols());
            let mut yb = Vec::with_capacity(chunk.len());
            for (r, &i) in chunk.iter().enumerate() {
                xb.copy_row_from(r, features, i);
                yb.push(labels[i]);
            }
            let acts = probe.acts(&xb)?;
            let (loss, dlogits) = softmax_ce(acts.last().expect("logits"), &yb)?;
            if !loss.to_f64().is_finite() {
                return Err(Error::NonFinite { context: String::from("probe loss") });
            }
            probe.store.zero_grads();
            let mut d = dlogits;
            for l in (0..probe.layers.len()).rev() {
                d = probe.layers[l].backward(&mut probe.store, &acts[l], &acts[l + 1], &d)?;
            }
            adam_step(&mut probe.store, &mut adam, lr)?;
        }
        if let Some((dx, dy)) = dev {
            let fer = frame_error_rate(&probe, dx, dy)?;
            if best.as_ref().is_none_or(|(b, _)| fer < *b) {
                best = Some((fer, probe.store.clone()));
            }
        }
    }
    if let Some((_, store)) = best {
        probe.store = store;
    }
    Ok(probe)
}

/// Fraction of frames whose argmax class differs from the label.
pub fn frame_error_rate<F: Scalar>(
    probe: &Probe<F>,
    features: &Matrix<F>,
    labels: &[u32],
) -> Result<f64> {
    check_frames(features, labels, probe.classes)?;
    let pred = probe.predict(features)?;
    let wrong = pred.iter().zip(labels).filter(|(p, y)| p != y).count();
    Ok(wrong as f64 / labels.len() as f64)
}
