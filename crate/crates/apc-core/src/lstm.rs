//! Unidirectional LSTM layer with in-crate backpropagation through time.
//!
//! One layer processes a single sequence laid out as a `(T, D)` matrix and
//! produces `(T, H)` hidden states. Gate blocks are packed `[i, f, g, o]`
//! along the column axis of the weights, and the forget-gate bias starts
//! at one so early training does not wipe the cell state.
//!
//! Sequences are processed one at a time; callers batch by accumulating
//! gradients over several sequences before an optimizer step, which is
//! numerically identical to stacked batching for summed losses.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::matrix::{Activation, Matrix};
use crate::numerics::param::ParamStore;
use crate::numerics::scalar::Scalar;
use crate::rng::SeededRng;

#[derive(Clone, Debug)]
pub struct LstmLayer {
    prefix: String,
    in_dim: usize,
    hidden: usize,
}

/// Everything the backward pass needs from a forward run.
#[derive(Clone, Debug)]
pub struct LstmTrace<F> {
    /// Post-activation gates, `(T, 4H)`, blocks `[i, f, g, o]`.
    gates: Matrix<F>,
    /// Cell states `(T, H)`.
    cell: Matrix<F>,
    /// `tanh(cell)`, kept to avoid recomputing in backward.
    tanh_cell: Matrix<F>,
    /// Hidden states `(T, H)`; the layer output.
    pub hidden: Matrix<F>,
}

impl LstmLayer {
    /// Registers `{prefix}.wx` `(D, 4H)`, `{prefix}.wh` `(H, 4H)` and
    /// `{prefix}.b` `(1, 4H)`. Weights are uniform in +-1/sqrt(H); biases
    /// are zero except the forget block.
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut SeededRng,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut draw = |rows: usize, cols: usize| {
            Matrix::from_fn(rows, cols, |_, _| F::from_f64(rng.uniform(-bound, bound)))
        };
        let wx = draw(in_dim, 4 * hidden);
        let wh = draw(hidden, 4 * hidden);
        let b = Matrix::from_fn(1, 4 * hidden, |_, j| {
            if (hidden..2 * hidden).contains(&j) {
                F::one()
            } else {
                F::zero()
            }
        });
        store.insert(&format!("{prefix}.wx"), wx)?;
        store.insert(&format!("{prefix}.wh"), wh)?;
        store.insert(&format!("{prefix}.b"), b)?;
        Ok(Self { prefix: String::from(prefix), in_dim, hidden })
    }

    /// Handle for a layer whose parameters are already in the store.
    pub fn attach<F: Scalar>(store: &ParamStore<F>, prefix: &str) -> Result<Self> {
        let wx = store.get(&format!("{prefix}.wx"))?;
        if wx.cols() % 4 != 0 {
            return Err(Error::Shape {
                op: "lstm_attach",
                expected: (wx.rows(), (wx.cols() / 4) * 4),
                got: (wx.rows(), wx.cols()),
            });
        }
        Ok(Self { prefix: String::from(prefix), in_dim: wx.rows(), hidden: wx.cols() / 4 })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Runs the recurrence over `x` `(T, D)` from zero initial state.
    pub fn forward<F: Scalar>(&self, store: &ParamStore<F>, x: &Matrix<F>) -> Result<LstmTrace<F>> {
        let wx = store.get(&format!("{}.wx", self.prefix))?;
        let wh = store.get(&format!("{}.wh", self.prefix))?;
        let b = store.get(&format!("{}.b", self.prefix))?;
        if x.cols() != self.in_dim {
            return Err(Error::Shape {
                op: "lstm_forward",
                expected: (x.rows(), self.in_dim),
                got: (x.rows(), x.cols()),
            });
        }
        let (t_len, h) = (x.rows(), self.hidden);
        let g4 = 4 * h;

        // Input contribution for all steps at once; bias folded in here.
        let mut gates = x.matmul(wx)?.add_row_broadcast(b)?;
        let mut cell = Matrix::zeros(t_len, h);
        let mut tanh_cell = Matrix::zeros(t_len, h);
        let mut hidden = Matrix::zeros(t_len, h);

        let mut h_prev: Vec<F> = vec![F::zero(); h];
        let mut c_prev: Vec<F> = vec![F::zero(); h];
        for t in 0..t_len {
            let a = gates.row_mut(t);
            // Recurrent contribution: a += h_prev * Wh, ascending k.
            for (k, &hp) in h_prev.iter().enumerate() {
                if hp != F::zero() {
                    let w_row = wh.row(k);
                    for (aj, &wj) in a.iter_mut().zip(w_row) {
                        *aj = *aj + hp * wj;
                    }
                }
            }
            for (j, aj) in a.iter_mut().enumerate() {
                let act = if (2 * h..3 * h).contains(&j) {
                    Activation::Tanh
                } else {
                    Activation::Sigmoid
                };
                *aj = act.apply(*aj);
            }
            debug_assert_eq!(a.len(), g4);
            for j in 0..h {
                let (ig, fg, gg, og) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                let c = fg * c_prev[j] + ig * gg;
                let tc = c.tanh();
                cell.set(t, j, c);
                tanh_cell.set(t, j, tc);
                hidden.set(t, j, og * tc);
                c_prev[j] = c;
            }
            h_prev.copy_from_slice(hidden.row(t));
        }
        Ok(LstmTrace { gates, cell, tanh_cell, hidden })
    }

    /// Backpropagates `d_hidden` `(T, H)` through the trace, accumulating
    /// weight gradients and returning the gradient at the input `(T, D)`.
    ///
    /// `x` must be the same matrix that produced `trace`.
    pub fn backward<F: Scalar>(
        &self,
        store: &mut ParamStore<F>,
        x: &Matrix<F>,
        trace: &LstmTrace<F>,
        d_hidden: &Matrix<F>,
    ) -> Result<Matrix<F>> {
        let h = self.hidden;
        let t_len = x.rows();
        if d_hidden.rows() != t_len || d_hidden.cols() != h {
            return Err(Error::Shape {
                op: "lstm_backward",
                expected: (t_len, h),
                got: (d_hidden.rows(), d_hidden.cols()),
            });
        }
        let wh_name = format!("{}.wh", self.prefix);
        let wx_name = format!("{}.wx", self.prefix);
        let wh = store.get(&wh_name)?.clone();

        // Pre-activation gate gradients for every step, filled in reverse.
        let mut d_a = Matrix::zeros(t_len, 4 * h);
        let mut dh_next: Vec<F> = vec![F::zero(); h];
        let mut dc_next: Vec<F> = vec![F::zero(); h];
        let one = F::one();

        for t in (0..t_len).rev() {
            let gates = trace.gates.row(t);
            let da = d_a.row_mut(t);
            for j in 0..h {
                let (ig, fg, gg, og) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = trace.tanh_cell.get(t, j);
                let dh = d_hidden.get(t, j) + dh_next[j];
                let dc = dc_next[j] + dh * og * (one - tc * tc);
                let c_prev = if t > 0 { trace.cell.get(t - 1, j) } else { F::zero() };

                da[j] = dc * gg * ig * (one - ig);
                da[h + j] = dc * c_prev * fg * (one - fg);
                da[2 * h + j] = dc * ig * (one - gg * gg);
                da[3 * h + j] = dh * tc * og * (one - og);
                dc_next[j] = dc * fg;
            }
            // dh_prev = da * Wh^T, ascending column index.
            for k in 0..h {
                let w_row = wh.row(k);
                let mut acc = F::zero();
                for (dv, &wv) in da.iter().zip(w_row) {
                    acc = acc + *dv * wv;
                }
                dh_next[k] = acc;
            }
        }

        // Hidden states shifted down one step: row t holds h_{t-1}.
        let mut h_prev_mat = Matrix::zeros(t_len, h);
        for t in 1..t_len {
            h_prev_mat.copy_row_from(t, &trace.hidden, t - 1);
        }

        let d_wx = x.matmul_tn(&d_a)?;
        let d_wh = h_prev_mat.matmul_tn(&d_a)?;
        let d_b = d_a.col_sums();
        let wx = store.get(&wx_name)?;
        let d_x = d_a.matmul_nt(wx)?;
        store.accumulate_grad(&wx_name, &d_wx)?;
        store.accumulate_grad(&wh_name, &d_wh)?;
        store.accumulate_grad(&format!("{}.b", self.prefix), &d_b)?;
        Ok(d_x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::grad_check;
    use approx::assert_relative_eq;

    /// Textbook recurrence written with plain indexed scalar math, kept
    /// independent of the Matrix kernels on purpose.
    fn reference_forward(
        wx: &Matrix<f64>,
        wh: &Matrix<f64>,
        b: &Matrix<f64>,
        x: &Matrix<f64>,
        h: usize,
    ) -> Vec<Vec<f64>> {
        fn sigmoid(v: f64) -> f64 {
            1.0 / (1.0 + (-v).exp())
        }
        let d = x.cols();
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut out = Vec::new();
        for t in 0..x.rows() {
            let mut a = vec![0.0; 4 * h];
            for j in 0..4 * h {
                let mut s = b.get(0, j);
                for k in 0..d {
                    s += x.get(t, k) * wx.get(k, j);
                }
                for k in 0..h {
                    s += h_prev[k] * wh.get(k, j);
                }
                a[j] = s;
            }
            let mut h_t = vec![0.0; h];
            let mut c_t = vec![0.0; h];
            for j in 0..h {
                let ig = sigmoid(a[j]);
                let fg = sigmoid(a[h + j]);
                let gg = a[2 * h + j].tanh();
                let og = sigmoid(a[3 * h + j]);
                c_t[j] = fg * c_prev[j] + ig * gg;
                h_t[j] = og * c_t[j].tanh();
            }
            out.push(h_t.clone());
            h_prev = h_t;
            c_prev = c_t;
        }
        out
    }

    #[test]
    fn forward_matches_scalar_reference() {
        let (d, h, t_len) = (3, 4, 6);
        let mut store = ParamStore::<f64>::new();
        let mut rng = SeededRng::new(31);
        let layer = LstmLayer::init(&mut store, &mut rng, "l0", d, h).unwrap();
        let x = Matrix::from_fn(t_len, d, |_, _| rng.uniform(-1.0, 1.0));

        let trace = layer.forward(&store, &x).unwrap();
        let expected = reference_forward(
            store.get("l0.wx").unwrap(),
            store.get("l0.wh").unwrap(),
            store.get("l0.b").unwrap(),
            &x,
            h,
        );
        for t in 0..t_len {
            for j in 0..h {
                assert_relative_eq!(trace.hidden.get(t, j), expected[t][j], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = SeededRng::new(5);
        LstmLayer::init(&mut store, &mut rng, "l0", 2, 3).unwrap();
        let b = store.get("l0.b").unwrap();
        for j in 0..12 {
            let expected = if (3..6).contains(&j) { 1.0 } else { 0.0 };
            assert_eq!(b.get(0, j), expected, "bias column {j}");
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let (d, h, t_len) = (3, 4, 5);
        let mut store = ParamStore::<f64>::new();
        let mut rng = SeededRng::new(77);
        let layer = LstmLayer::init(&mut store, &mut rng, "l0", d, h).unwrap();
        store
            .insert("x0", Matrix::from_fn(t_len, d, |_, _| rng.uniform(-1.0, 1.0)))
            .unwrap();
        // Fixed projection makes the loss sensitive to every output.
        let probe = Matrix::from_fn(t_len, h, |_, _| rng.uniform(-1.0, 1.0));

        let x = store.get("x0").unwrap().clone();
        let trace = layer.forward(&store, &x).unwrap();
        let d_hidden = trace.hidden.hadamard(&probe).unwrap().scale(2.0).hadamard(&probe).unwrap();
        // d/dh of sum((h*probe)^2) = 2*h*probe^2.
        let d_x = layer.backward(&mut store, &x, &trace, &d_hidden).unwrap();
        store.accumulate_grad("x0", &d_x).unwrap();

        let report = grad_check(&mut store, 1e-5, |s| {
            let x = s.get("x0")?.clone();
            let trace = layer.forward(s, &x)?;
            let scored = trace.hidden.hadamard(&probe)?;
            Ok(scored.as_slice().iter().map(|v| v * v).sum())
        })
        .unwrap();
        assert!(
            report.max_rel_err < 1e-4,
            "rel err {} at {}[{}]",
            report.max_rel_err,
            report.worst_param,
            report.worst_index
        );
        assert!(report.checked > 0);
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let build = || {
            let mut store = ParamStore::<f32>::new();
            let mut rng = SeededRng::new(9);
            let layer = LstmLayer::init(&mut store, &mut rng, "l0", 4, 8).unwrap();
            let x = Matrix::from_fn(10, 4, |_, _| rng.uniform(-1.0, 1.0) as f32);
            layer.forward(&store, &x).unwrap().hidden
        };
        let a = build();
        let b = build();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = SeededRng::new(2);
        let layer = LstmLayer::init(&mut store, &mut rng, "l0", 4, 8).unwrap();
        let x = Matrix::zeros(5, 3);
        assert!(layer.forward(&store, &x).is_err());
    }
}
