//! Contrastive predictive model: a frame-local encoder, a causal LSTM
//! context network, and bilinear scorers trained to pick the true future
//! frame out of negatives with a softmax cross-entropy objective.
//!
//! Scores stay in the log domain end to end; the normalizer uses a
//! log-sum-exp over value-sorted logits, which makes the loss exactly
//! invariant to the order negatives arrive in. Scorer weights start at
//! zero, so an untrained model scores every candidate equally and the
//! loss begins at exactly `ln(candidate count)`, a useful analytic anchor.

pub mod train;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lstm::{LstmLayer, LstmTrace};
use crate::numerics::dense::Dense;
use crate::numerics::matrix::{Activation, Matrix};
use crate::numerics::param::ParamStore;
use crate::numerics::scalar::Scalar;
use crate::rng::SeededRng;

pub use train::{
    extract_cpc, sample_negatives, train_cpc, CpcTrainConfig, NegStrategy, NegativeSampler,
    TrainedCpc,
};

/// Which tensor extraction returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tap {
    /// Frame encoder output `z`.
    Frame,
    /// Context network output `c`.
    Context,
}

/// The four experimental setups: negatives from other utterances in the
/// batch or from the anchor's own utterance, features from the frame or
/// context tap, and an exhaustive multi-step variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpcVariant {
    N9All,
    N9Same,
    CtxN9Same,
    CtxExhaust,
}

impl CpcVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            CpcVariant::N9All => "n9all",
            CpcVariant::N9Same => "n9same",
            CpcVariant::CtxN9Same => "ctx_n9same",
            CpcVariant::CtxExhaust => "ctx_exhaust",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "n9all" => Some(CpcVariant::N9All),
            "n9same" => Some(CpcVariant::N9Same),
            "ctx_n9same" => Some(CpcVariant::CtxN9Same),
            "ctx_exhaust" => Some(CpcVariant::CtxExhaust),
            _ => None,
        }
    }

    pub fn tap(self) -> Tap {
        match self {
            CpcVariant::N9All | CpcVariant::N9Same => Tap::Frame,
            CpcVariant::CtxN9Same | CpcVariant::CtxExhaust => Tap::Context,
        }
    }

    pub fn strategy(self) -> train::NegStrategy {
        match self {
            CpcVariant::N9All => train::NegStrategy::WithinBatch,
            CpcVariant::N9Same | CpcVariant::CtxN9Same => train::NegStrategy::WithinUtterance,
            CpcVariant::CtxExhaust => train::NegStrategy::ExhaustiveBatch,
        }
    }

    /// Prediction steps the loss sums over: every step up to `n` for the
    /// exhaustive variant, the single step `n` otherwise.
    pub fn steps(self, n: usize) -> Vec<usize> {
        match self {
            CpcVariant::CtxExhaust => (1..=n).collect(),
            _ => alloc::vec![n],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CpcConfig {
    pub input_dim: usize,
    /// Width of both the encoder output and the context state.
    pub enc_dim: usize,
    /// Prediction offset `n`.
    pub n_steps: usize,
    pub variant: CpcVariant,
}

impl CpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.enc_dim < 1 {
            return Err(Error::Config {
                message: String::from("input_dim and enc_dim must be >= 1"),
            });
        }
        if self.n_steps < 1 {
            return Err(Error::Config { message: String::from("n_steps must be >= 1") });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CpcModel {
    cfg: CpcConfig,
    enc: Vec<Dense>,
    ctx: LstmLayer,
    /// `(k, parameter name)` pairs for the scorer weights, ascending k.
    scorers: Vec<(usize, String)>,
}

/// Per-layer activations of the frame encoder, kept for backprop.
#[derive(Debug)]
pub struct EncTrace<F> {
    /// `acts[0]` is the input; `acts[l+1]` the output of layer `l`.
    acts: Vec<Matrix<F>>,
}

impl<F: Scalar> EncTrace<F> {
    pub fn output(&self) -> &Matrix<F> {
        self.acts.last().expect("encoder has layers")
    }
}

impl CpcModel {
    /// Three ReLU layers, an LSTM context layer, and one zero-initialized
    /// scorer matrix per prediction step.
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut SeededRng,
        cfg: CpcConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut enc = Vec::with_capacity(3);
        for l in 0..3 {
            let in_dim = if l == 0 { cfg.input_dim } else { cfg.enc_dim };
            enc.push(Dense::init(
                store,
                rng,
                &format!("enc{l}"),
                in_dim,
                cfg.enc_dim,
                Some(Activation::Relu),
            )?);
        }
        let ctx = LstmLayer::init(store, rng, "ctx", cfg.enc_dim, cfg.enc_dim)?;
        let mut scorers = Vec::new();
        for k in cfg.variant.steps(cfg.n_steps) {
            let name = format!("score.w{k}");
            store.insert(&name, Matrix::zeros(cfg.enc_dim, cfg.enc_dim))?;
            scorers.push((k, name));
        }
        Ok(Self { cfg, enc, ctx, scorers })
    }

    pub fn attach<F: Scalar>(store: &ParamStore<F>, cfg: CpcConfig) -> Result<Self> {
        cfg.validate()?;
        let mut enc = Vec::with_capacity(3);
        for l in 0..3 {
            enc.push(Dense::attach(store, &format!("enc{l}"), Some(Activation::Relu))?);
        }
        let ctx = LstmLayer::attach(store, "ctx")?;
        let mut scorers = Vec::new();
        for k in cfg.variant.steps(cfg.n_steps) {
            let name = format!("score.w{k}");
            store.get(&name)?;
            scorers.push((k, name));
        }
        Ok(Self { cfg, enc, ctx, scorers })
    }

    pub fn cfg(&self) -> CpcConfig {
        self.cfg
    }

    pub fn scorers(&self) -> &[(usize, String)] {
        &self.scorers
    }

    /// Frame encoder with cached activations; frame-local by construction.
    pub fn encode<F: Scalar>(&self, store: &ParamStore<F>, x: &Matrix<F>) -> Result<EncTrace<F>> {
        if x.cols() != self.cfg.input_dim {
            return Err(Error::Shape {
                op: "encode_frames",
                expected: (x.rows(), self.cfg.input_dim),
                got: (x.rows(), x.cols()),
            });
        }
        let mut acts = Vec::with_capacity(4);
        acts.push(x.clone());
        for layer in &self.enc {
            let next = layer.forward(store, acts.last().expect("nonempty"))?;
            acts.push(next);
        }
        Ok(EncTrace { acts })
    }

    /// Backpropagates through the encoder, accumulating weight gradients.
    pub fn encode_backward<F: Scalar>(
        &self,
        store: &mut ParamStore<F>,
        trace: &EncTrace<F>,
        d_out: &Matrix<F>,
    ) -> Result<Matrix<F>> {
        let mut d = d_out.clone();
        for l in (0..self.enc.len()).rev() {
            d = self.enc[l].backward(store, &trace.acts[l], &trace.acts[l + 1], &d)?;
        }
        Ok(d)
    }

    /// Causal context recurrence over encoded frames.
    pub fn context<F: Scalar>(&self, store: &ParamStore<F>, z: &Matrix<F>) -> Result<LstmTrace<F>> {
        self.ctx.forward(store, z)
    }

    pub fn context_backward<F: Scalar>(
        &self,
        store: &mut ParamStore<F>,
        z: &Matrix<F>,
        trace: &LstmTrace<F>,
        d_c: &Matrix<F>,
    ) -> Result<Matrix<F>> {
        self.ctx.backward(store, z, trace, d_c)
    }

    /// Extracted features: `z` for the frame tap, `c` for the context tap.
    /// Pure; repeated calls are bitwise identical.
    pub fn extract<F: Scalar>(
        &self,
        store: &ParamStore<F>,
        x: &Matrix<F>,
        tap: Tap,
    ) -> Result<Matrix<F>> {
        let z = self.encode(store, x)?;
        match tap {
            Tap::Frame => Ok(z.output().clone()),
            Tap::Context => Ok(self.context(store, z.output())?.hidden),
        }
    }
}

/// `W c` as a vector, ascending-index accumulation.
fn matvec<F: Scalar>(w: &Matrix<F>, v: &[F]) -> Vec<F> {
    let mut out = alloc::vec![F::zero(); w.rows()];
    for (a, o) in out.iter_mut().enumerate() {
        let row = w.row(a);
        let mut acc = F::zero();
        for (wv, xv) in row.iter().zip(v) {
            acc = acc + *wv * *xv;
        }
        *o = acc;
    }
    out
}

/// `W^T v`, ascending-index accumulation.
fn matvec_t<F: Scalar>(w: &Matrix<F>, v: &[F]) -> Vec<F> {
    let mut out = alloc::vec![F::zero(); w.cols()];
    for (a, &va) in v.iter().enumerate() {
        let row = w.row(a);
        for (o, &wv) in out.iter_mut().zip(row) {
            *o = *o + va * wv;
        }
    }
    out
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

/// Log-sum-exp over logits sorted by value, so the result does not depend
/// on the order candidates were listed in.
fn sorted_logsumexp<F: Scalar>(logits: &[F]) -> F {
    let mut sorted: Vec<F> = logits.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let m = *sorted.last().expect("nonempty logits");
    let mut sum = F::zero();
    for &v in &sorted {
        sum = sum + (v - m).exp();
    }
    m + sum.ln()
}

/// Contrastive loss for one anchor: cross-entropy of picking the positive
/// among `negs + [pos]` under the bilinear score `z^T W c`.
pub fn cpc_loss<F: Scalar>(c_i: &[F], pos_z: &[F], neg_z: &[&[F]], w: &Matrix<F>) -> Result<F> {
    if neg_z.is_empty() {
        return Err(Error::EmptyInput { what: "negatives" });
    }
    let e = w.rows();
    if w.cols() != e || c_i.len() != e || pos_z.len() != e || neg_z.iter().any(|z| z.len() != e) {
        return Err(Error::Shape {
            op: "cpc_loss",
            expected: (e, e),
            got: (c_i.len(), pos_z.len()),
        });
    }
    let wc = matvec(w, c_i);
    let mut logits = Vec::with_capacity(neg_z.len() + 1);
    logits.push(dot(pos_z, &wc));
    for z in neg_z {
        logits.push(dot(z, &wc));
    }
    Ok(sorted_logsumexp(&logits) - logits[0])
}

/// Candidate frames scored against an anchor.
#[derive(Clone, Debug)]
pub enum NegativeSet {
    /// Explicit `(utterance, time)` references into the batch.
    Sampled(Vec<(usize, usize)>),
    /// Every frame in the batch except the target position.
    AllButTarget,
}

#[derive(Clone, Debug)]
pub struct CpcAnchor {
    pub utt: usize,
    pub time: usize,
    pub negatives: NegativeSet,
}

/// All anchors of one prediction step over one batch.
#[derive(Clone, Debug)]
pub struct StepPlan {
    pub k: usize,
    pub anchors: Vec<CpcAnchor>,
}

fn anchor_candidates(
    anchor: &CpcAnchor,
    k: usize,
    lengths: &[usize],
) -> Result<Vec<(usize, usize)>> {
    let target = (anchor.utt, anchor.time + k);
    let mut cands = alloc::vec![target];
    match &anchor.negatives {
        NegativeSet::Sampled(negs) => {
            if negs.is_empty() {
                return Err(Error::EmptyInput { what: "negatives" });
            }
            cands.extend_from_slice(negs);
        }
        NegativeSet::AllButTarget => {
            for (b, &len) in lengths.iter().enumerate() {
                for t in 0..len {
                    if (b, t) != target {
                        cands.push((b, t));
                    }
                }
            }
            if cands.len() < 2 {
                return Err(Error::Sampling {
                    reason: String::from("exhaustive set has no non-target frames"),
                });
            }
        }
    }
    Ok(cands)
}

/// Mean anchor loss of a step plan. `zs`/`cs` hold per-utterance encoder
/// and context outputs; `lengths` are true (unpadded) lengths.
pub fn step_plan_loss<F: Scalar>(
    zs: &[Matrix<F>],
    cs: &[Matrix<F>],
    lengths: &[usize],
    w: &Matrix<F>,
    plan: &StepPlan,
) -> Result<F> {
    if plan.anchors.is_empty() {
        return Err(Error::EmptyInput { what: "anchors" });
    }
    let mut total = F::zero();
    for anchor in &plan.anchors {
        let cands = anchor_candidates(anchor, plan.k, lengths)?;
        let wc = matvec(w, cs[anchor.utt].row(anchor.time));
        let logits: Vec<F> =
            cands.iter().map(|&(b, t)| dot(zs[b].row(t), &wc)).collect();
        total = total + sorted_logsumexp(&logits) - logits[0];
    }
    Ok(total / F::from_usize(plan.anchors.len()))
}

/// Mean anchor loss plus gradients. Gradient contributions are scaled by
/// `1 / anchor count` to match the returned mean; they accumulate into
/// `d_zs`, `d_cs` (same shapes as `zs`, `cs`) and `d_w`.
#[allow(clippy::too_many_arguments)]
pub fn step_plan_backward<F: Scalar>(
    zs: &[Matrix<F>],
    cs: &[Matrix<F>],
    lengths: &[usize],
    w: &Matrix<F>,
    plan: &StepPlan,
    d_zs: &mut [Matrix<F>],
    d_cs: &mut [Matrix<F>],
    d_w: &mut Matrix<F>,
) -> Result<F> {
    if plan.anchors.is_empty() {
        return Err(Error::EmptyInput { what: "anchors" });
    }
    let e = w.rows();
    let scale = F::one() / F::from_usize(plan.anchors.len());
    let mut total = F::zero();
    for anchor in &plan.anchors {
        let cands = anchor_candidates(anchor, plan.k, lengths)?;
        let c_row = cs[anchor.utt].row(anchor.time);
        let wc = matvec(w, c_row);
        let logits: Vec<F> =
            cands.iter().map(|&(b, t)| dot(zs[b].row(t), &wc)).collect();
        let lse = sorted_logsumexp(&logits);
        total = total + lse - logits[0];

        // Softmax minus the positive indicator, premultiplied by scale.
        let mut zbar = alloc::vec![F::zero(); e];
        for (j, &(b, t)) in cands.iter().enumerate() {
            let p = (logits[j] - lse).exp();
            let coef = scale * if j == 0 { p - F::one() } else { p };
            let z_row = zs[b].row(t);
            let dz_row = d_zs[b].row_mut(t);
            for a in 0..e {
                dz_row[a] = dz_row[a] + coef * wc[a];
                zbar[a] = zbar[a] + coef * z_row[a];
            }
        }
        // dW += zbar c^T; dc += W^T zbar.
        for a in 0..e {
            let w_grad_row = d_w.row_mut(a);
            for (g, &cv) in w_grad_row.iter_mut().zip(c_row) {
                *g = *g + zbar[a] * cv;
            }
        }
        let dc = matvec_t(w, &zbar);
        let dc_row = d_cs[anchor.utt].row_mut(anchor.time);
        for (slot, v) in dc_row.iter_mut().zip(dc) {
            *slot = *slot + v;
        }
    }
    Ok(total / F::from_usize(plan.anchors.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn model_fixture(seed: u64) -> (ParamStore<f64>, CpcModel) {
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(seed);
        let cfg = CpcConfig {
            input_dim: 6,
            enc_dim: 8,
            n_steps: 2,
            variant: CpcVariant::N9Same,
        };
        let model = CpcModel::init(&mut store, &mut rng, cfg).unwrap();
        (store, model)
    }

    #[test]
    fn encoder_is_frame_local_and_nonnegative() {
        let (store, model) = model_fixture(1);
        let mut rng = SeededRng::new(2);
        let x = Matrix::from_fn(7, 6, |_, _| rng.uniform(-1.0, 1.0));
        let z = model.encode(&store, &x).unwrap().output().clone();
        assert!(z.as_slice().iter().all(|&v| v >= 0.0));

        // Reversing input rows reverses output rows and nothing else.
        let rev = Matrix::from_fn(7, 6, |i, j| x.get(6 - i, j));
        let z_rev = model.encode(&store, &rev).unwrap().output().clone();
        for t in 0..7 {
            assert_eq!(z.row(t), z_rev.row(6 - t));
        }
    }

    #[test]
    fn zero_weight_encoder_outputs_zero() {
        let (mut store, model) = model_fixture(3);
        for l in 0..3 {
            store.get_mut(&format!("enc{l}.w")).unwrap().fill(0.0);
            store.get_mut(&format!("enc{l}.b")).unwrap().fill(0.0);
        }
        let x = Matrix::from_fn(4, 6, |i, j| (i + j) as f64);
        let z = model.encode(&store, &x).unwrap().output().clone();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn context_is_causal() {
        let (store, model) = model_fixture(4);
        let mut rng = SeededRng::new(5);
        let z = Matrix::from_fn(9, 8, |_, _| rng.uniform(-1.0, 1.0));
        let base = model.context(&store, &z).unwrap().hidden;
        let mut bumped = z.clone();
        bumped.set(5, 3, 9.0);
        let moved = model.context(&store, &bumped).unwrap().hidden;
        for t in 0..5 {
            assert_eq!(base.row(t), moved.row(t));
        }
        assert_ne!(base.row(5), moved.row(5));
    }

    #[test]
    fn loss_at_zero_scorer_is_log_candidate_count() {
        let mut rng = SeededRng::new(6);
        for k in [1usize, 9, 1023] {
            let e = 5;
            let w = Matrix::<f64>::zeros(e, e);
            let c: Vec<f64> = (0..e).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let pos: Vec<f64> = (0..e).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let negs: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..e).map(|_| rng.uniform(-1.0, 1.0)).collect())
                .collect();
            let neg_refs: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();
            let loss = cpc_loss(&c, &pos, &neg_refs, &w).unwrap();
            assert!(
                (loss - ((k + 1) as f64).ln()).abs() < 1e-9,
                "k={k}: loss {loss}"
            );
        }
    }

    #[test]
    fn two_candidate_hand_value() {
        // Score 1 for the positive, 0 for the lone negative:
        // loss = ln(1 + e^-1).
        let w = Matrix::from_vec(1, 1, vec![1.0f64]).unwrap();
        let c = [1.0];
        let pos = [1.0];
        let neg = [0.0f64];
        let loss = cpc_loss(&c, &pos, &[&neg], &w).unwrap();
        assert_relative_eq!(loss, 0.31326168751822286, max_relative = 1e-14);
    }

    #[test]
    fn loss_is_exactly_invariant_to_negative_order() {
        let mut rng = SeededRng::new(9);
        let e = 6;
        let w = Matrix::from_fn(e, e, |_, _| rng.uniform(-0.5, 0.5));
        let c: Vec<f64> = (0..e).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let pos: Vec<f64> = (0..e).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let negs: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..e).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let order_a: Vec<&[f64]> = negs.iter().map(|v| v.as_slice()).collect();
        let mut order_b = order_a.clone();
        order_b.reverse();
        let mut order_c = order_a.clone();
        // An arbitrary interleave.
        order_c.swap(0, 4);
        order_c.swap(2, 8);
        let a = cpc_loss(&c, &pos, &order_a, &w).unwrap();
        let b = cpc_loss(&c, &pos, &order_b, &w).unwrap();
        let c2 = cpc_loss(&c, &pos, &order_c, &w).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(a.to_bits(), c2.to_bits());
    }

    #[test]
    fn dominant_positive_drives_loss_to_zero() {
        let w = Matrix::from_vec(1, 1, vec![1.0f64]).unwrap();
        let c = [1.0];
        let pos = [40.0];
        let neg = [0.0f64];
        let loss = cpc_loss(&c, &pos, &[&neg], &w).unwrap();
        assert!(loss < 1e-9, "loss {loss}");
    }

    #[test]
    fn empty_negatives_rejected() {
        let w = Matrix::<f64>::zeros(2, 2);
        let c = [0.1, 0.2];
        let pos = [0.3, 0.4];
        assert!(cpc_loss(&c, &pos, &[], &w).is_err());
    }

    #[test]
    fn extraction_taps_differ_in_locality() {
        let (store, model) = model_fixture(11);
        let mut rng = SeededRng::new(12);
        let x = Matrix::from_fn(8, 6, |_, _| rng.uniform(-1.0, 1.0));
        let z = model.extract(&store, &x, Tap::Frame).unwrap();
        let c = model.extract(&store, &x, Tap::Context).unwrap();
        assert_eq!((z.rows(), z.cols()), (8, 8));
        assert_eq!((c.rows(), c.cols()), (8, 8));
        // Purity.
        assert_eq!(z, model.extract(&store, &x, Tap::Frame).unwrap());
        assert_eq!(c, model.extract(&store, &x, Tap::Context).unwrap());

        // Permuting earlier frames permutes z rows but changes c rows.
        let mut swapped = x.clone();
        for j in 0..6 {
            let (a, b) = (swapped.get(1, j), swapped.get(2, j));
            swapped.set(1, j, b);
            swapped.set(2, j, a);
        }
        let z_swap = model.extract(&store, &swapped, Tap::Frame).unwrap();
        let c_swap = model.extract(&store, &swapped, Tap::Context).unwrap();
        assert_eq!(z_swap.row(1), z.row(2));
        assert_eq!(z_swap.row(2), z.row(1));
        assert_eq!(z_swap.row(7), z.row(7));
        assert_ne!(c_swap.row(2), c.row(2));
    }

    #[test]
    fn exhaustive_candidate_count_formula() {
        for (n_utts, len) in [(8usize, 128usize), (3, 17), (1, 2)] {
            let lengths = vec![len; n_utts];
            let anchor = CpcAnchor { utt: 0, time: 0, negatives: NegativeSet::AllButTarget };
            let cands = anchor_candidates(&anchor, 1, &lengths).unwrap();
            // Positive plus every other frame in the batch.
            assert_eq!(cands.len(), n_utts * len);
        }
    }
}
