//! Autoregressive predictive model: stacked unidirectional LSTMs with
//! residual connections and a linear regression head, trained to predict
//! the input frame `n` steps ahead under an L1 objective.
//!
//! The L1 loss is a plain sum over valid positions and dimensions; the
//! trainer divides by the valid-term count per batch so learning rates
//! keep their meaning across batch sizes and utterance lengths. Extracted
//! features are the post-residual hidden states of a chosen layer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{make_batches, BatchMode, Corpus};
use crate::error::{Error, Result};
use crate::lstm::{LstmLayer, LstmTrace};
use crate::numerics::adam::{adam_step, AdamState};
use crate::numerics::dense::Dense;
use crate::numerics::matrix::Matrix;
use crate::numerics::param::ParamStore;
use crate::numerics::scalar::Scalar;
use crate::rng::SeededRng;

/// Model shape. Residual connections join consecutive layers of equal
/// width, so they start at the second layer (layer 1 sees the raw input,
/// whose width generally differs from the hidden size).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ApcConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub residual: bool,
}

impl ApcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.layers > 4 {
            return Err(Error::Config {
                message: format!("layer count must be 1..=4, got {}", self.layers),
            });
        }
        if self.input_dim < 1 || self.hidden < 1 {
            return Err(Error::Config {
                message: String::from("input_dim and hidden must be >= 1"),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ApcModel {
    cfg: ApcConfig,
    lstms: Vec<LstmLayer>,
    head: Dense,
}

/// Forward artifacts: per-layer inputs and traces for backprop, plus the
/// post-residual hidden states that double as extractable features.
#[derive(Debug)]
pub struct ApcForward<F> {
    inputs: Vec<Matrix<F>>,
    traces: Vec<LstmTrace<F>>,
    /// Post-residual output of each layer, `(T, H)` each.
    pub hiddens: Vec<Matrix<F>>,
    /// Regression output, `(T, D)`.
    pub predictions: Matrix<F>,
}

impl ApcModel {
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut SeededRng,
        cfg: ApcConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut lstms = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let in_dim = if l == 0 { cfg.input_dim } else { cfg.hidden };
            lstms.push(LstmLayer::init(store, rng, &format!("lstm{l}"), in_dim, cfg.hidden)?);
        }
        let head = Dense::init(store, rng, "head", cfg.hidden, cfg.input_dim, None)?;
        Ok(Self { cfg, lstms, head })
    }

    /// Rebuilds layer handles over parameters loaded from a checkpoint.
    pub fn attach<F: Scalar>(store: &ParamStore<F>, cfg: ApcConfig) -> Result<Self> {
        cfg.validate()?;
        let mut lstms = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            lstms.push(LstmLayer::attach(store, &format!("lstm{l}"))?);
        }
        let head = Dense::attach(store, "head", None)?;
        Ok(Self { cfg, lstms, head })
    }

    pub fn cfg(&self) -> ApcConfig {
        self.cfg
    }

    fn residual_applies(&self, layer: usize, in_width: usize) -> bool {
        self.cfg.residual && layer >= 1 && in_width == self.cfg.hidden
    }

    pub fn forward<F: Scalar>(&self, store: &ParamStore<F>, x: &Matrix<F>) -> Result<ApcForward<F>> {
        if x.cols() != self.cfg.input_dim {
            return Err(Error::Shape {
                op: "apc_forward",
                expected: (x.rows(), self.cfg.input_dim),
                got: (x.rows(), x.cols()),
            });
        }
        let mut inputs = Vec::with_capacity(self.cfg.layers);
        let mut traces = Vec::with_capacity(self.cfg.layers);
        let mut hiddens = Vec::with_capacity(self.cfg.layers);
        let mut current = x.clone();
        for (l, lstm) in self.lstms.iter().enumerate() {
            let trace = lstm.forward(store, &current)?;
            let post = if self.residual_applies(l, current.cols()) {
                trace.hidden.add(&current)?
            } else {
                trace.hidden.clone()
            };
            inputs.push(current);
            traces.push(trace);
            current = post.clone();
            hiddens.push(post);
        }
        let predictions = self.head.forward(store, &current)?;
        Ok(ApcForward { inputs, traces, hiddens, predictions })
    }

    /// Backpropagates `d_pred` (gradient at the predictions) through the
    /// head and the whole stack; returns the gradient at the input.
    pub fn backward<F: Scalar>(
        &self,
        store: &mut ParamStore<F>,
        fwd: &ApcForward<F>,
        d_pred: &Matrix<F>,
    ) -> Result<Matrix<F>> {
        let last = fwd.hiddens.len() - 1;
        let mut d = self.head.backward(store, &fwd.hiddens[last], &fwd.predictions, d_pred)?;
        for l in (0..self.lstms.len()).rev() {
            let d_in = self.lstms[l].backward(store, &fwd.inputs[l], &fwd.traces[l], &d)?;
            d = if self.residual_applies(l, fwd.inputs[l].cols()) {
                // Identity path: the residual feeds the layer input directly.
                d_in.add(&d)?
            } else {
                d_in
            };
        }
        Ok(d)
    }

    /// Post-residual hidden states of `layer` (1-based). Pure.
    pub fn extract<F: Scalar>(
        &self,
        store: &ParamStore<F>,
        x: &Matrix<F>,
        layer: usize,
    ) -> Result<Matrix<F>> {
        if layer < 1 || layer > self.cfg.layers {
            return Err(Error::LayerOutOfRange { layer, layers: self.cfg.layers });
        }
        let fwd = self.forward(store, x)?;
        Ok(fwd.hiddens[layer - 1].clone())
    }
}

/// Number of `(position, dimension)` terms the shifted L1 sum ranges over.
pub fn valid_term_count(t_len: usize, dim: usize, n: usize) -> usize {
    (t_len - n) * dim
}

fn check_shift<F: Scalar>(x: &Matrix<F>, y: &Matrix<F>, n: usize) -> Result<()> {
    if x.rows() != y.rows() || x.cols() != y.cols() {
        return Err(Error::Shape {
            op: "apc_loss",
            expected: (x.rows(), x.cols()),
            got: (y.rows(), y.cols()),
        });
    }
    if n < 1 || n >= x.rows() {
        return Err(Error::Shift { n, len: x.rows() });
    }
    Ok(())
}

/// Shifted L1 objective: sum over positions `i < T-n` and all dimensions
/// of `|x[i+n] - y[i]|`. Positions within `n` of the end have no target
/// and contribute nothing.
pub fn apc_loss<F: Scalar>(x: &Matrix<F>, y: &Matrix<F>, n: usize) -> Result<F> {
    check_shift(x, y, n)?;
    let mut total = F::zero();
    for i in 0..x.rows() - n {
        let target = x.row(i + n);
        let pred = y.row(i);
        for (t, p) in target.iter().zip(pred) {
            total = total + (*t - *p).abs();
        }
    }
    Ok(total)
}

/// Loss sum plus its (unnormalized) gradient with respect to `y`. The L1
/// subgradient at zero is taken as zero.
pub fn apc_loss_grad<F: Scalar>(
    x: &Matrix<F>,
    y: &Matrix<F>,
    n: usize,
) -> Result<(F, Matrix<F>)> {
    check_shift(x, y, n)?;
    let mut total = F::zero();
    let mut grad = Matrix::zeros(y.rows(), y.cols());
    for i in 0..x.rows() - n {
        let target = x.row(i + n);
        let g_row = grad.row_mut(i);
        let pred = y.row(i);
        for ((t, p), g) in target.iter().zip(pred).zip(g_row.iter_mut()) {
            let diff = *t - *p;
            total = total + diff.abs();
            *g = if diff > F::zero() {
                -F::one()
            } else if diff < F::zero() {
                F::one()
            } else {
                F::zero()
            };
        }
    }
    Ok((total, grad))
}

/// Loss of the trivial predictor that repeats the current frame,
/// normalized per valid term; the sanity floor for trained models.
pub fn copy_predictor_loss<F: Scalar>(corpus: &Corpus<F>, n: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut terms = 0usize;
    for utt in &corpus.utterances {
        let x = &utt.frames;
        if n >= x.rows() {
            return Err(Error::Shift { n, len: x.rows() });
        }
        sum += apc_loss(x, x, n)?.to_f64();
        terms += valid_term_count(x.rows(), x.cols(), n);
    }
    if terms == 0 {
        return Err(Error::EmptyInput { what: "corpus" });
    }
    Ok(sum / terms as f64)
}

#[derive(Clone, Debug)]
pub struct ApcTrainConfig {
    pub model: ApcConfig,
    /// Prediction offset `n` in frames.
    pub n_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl ApcTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_steps < 1 {
            return Err(Error::Config { message: String::from("n_steps must be >= 1") });
        }
        if self.epochs < 1 {
            return Err(Error::Config { message: String::from("epochs must be >= 1") });
        }
        if self.batch_size < 1 {
            return Err(Error::Config { message: String::from("batch_size must be >= 1") });
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config { message: format!("lr must be > 0, got {}", self.lr) });
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainedApc<F> {
    pub store: ParamStore<F>,
    pub model: ApcModel,
    /// Mean per-term loss of each epoch.
    pub history: Vec<f64>,
}

/// Trains on the corpus with Adam. Deterministic: the same corpus, config,
/// and seed reproduce the parameter trajectory and loss history bitwise.
pub fn train_apc<F: Scalar>(corpus: &Corpus<F>, cfg: &ApcTrainConfig) -> Result<TrainedApc<F>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyInput { what: "corpus" });
    }
    let dim = corpus.dim()?;
    if dim != cfg.model.input_dim {
        return Err(Error::Shape {
            op: "train_apc",
            expected: (0, cfg.model.input_dim),
            got: (0, dim),
        });
    }
    for utt in &corpus.utterances {
        if utt.len() < cfg.n_steps + 1 {
            return Err(Error::ShortUtterance {
                id: utt.utterance_id.clone(),
                len: utt.len(),
                needed: cfg.n_steps + 1,
            });
        }
    }

    let root = SeededRng::new(cfg.seed);
    let mut store = ParamStore::new();
    let model = ApcModel::init(&mut store, &mut root.derive(1), cfg.model)?;
    let mut adam = AdamState::new();
    let lr = F::from_f64(cfg.lr);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut batch_rng = root.derive(2 + epoch as u64);
        let batches = make_batches(corpus, cfg.batch_size, BatchMode::Padded, &mut batch_rng)?;
        let mut epoch_sum = 0.0;
        let mut epoch_terms = 0usize;
        for batch in &batches {
            store.zero_grads();
            let terms: usize = batch
                .lengths
                .iter()
                .map(|&t| valid_term_count(t, dim, cfg.n_steps))
                .sum();
            let scale = F::from_f64(1.0 / terms as f64);
            let mut batch_sum = F::zero();
            for b in 0..batch.size() {
                let x = batch.utterance_frames(b);
                let fwd = model.forward(&store, &x)?;
                let (sum, d_pred) = apc_loss_grad(&x, &fwd.predictions, cfg.n_steps)?;
                batch_sum = batch_sum + sum;
                model.backward(&mut store, &fwd, &d_pred.scale(scale))?;
            }
            if !batch_sum.is_finite() {
                return Err(Error::NonFinite { context: format!("epoch {epoch} batch loss") });
            }
            adam_step(&mut store, &mut adam, lr)?;
            epoch_sum += batch_sum.to_f64();
            epoch_terms += terms;
        }
        history.push(epoch_sum / epoch_terms as f64);
    }
    Ok(TrainedApc { store, model, history })
}
