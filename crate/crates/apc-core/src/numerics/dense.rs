//! Fully connected layer over a [`ParamStore`].
//!
//! Rows of the input are independent samples (or frames): `y = act(x W + b)`
//! with `W` stored as `(in, out)`. The layer owns no tensors itself; it just
//! names two entries in the store, which keeps checkpointing and optimizer
//! traversal uniform across model types.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;

use crate::error::Result;
use crate::numerics::matrix::{Activation, Matrix};
use crate::numerics::param::ParamStore;
use crate::numerics::scalar::Scalar;
use crate::rng::SeededRng;

#[derive(Clone, Debug)]
pub struct Dense {
    prefix: String,
    in_dim: usize,
    out_dim: usize,
    act: Option<Activation>,
}

impl Dense {
    /// Registers `{prefix}.w` and `{prefix}.b`, weights uniform in
    /// +-1/sqrt(in_dim), bias zero.
    pub fn init<F: Scalar>(
        store: &mut ParamStore<F>,
        rng: &mut SeededRng,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        act: Option<Activation>,
    ) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = Matrix::from_fn(in_dim, out_dim, |_, _| F::from_f64(rng.uniform(-bound, bound)));
        store.insert(&format!("{prefix}.w"), w)?;
        store.insert(&format!("{prefix}.b"), Matrix::zeros(1, out_dim))?;
        Ok(Self { prefix: String::from(prefix), in_dim, out_dim, act })
    }

    /// Layer handle for parameters that already exist in the store
    /// (e.g. after loading a checkpoint).
    pub fn attach<F: Scalar>(
        store: &ParamStore<F>,
        prefix: &str,
        act: Option<Activation>,
    ) -> Result<Self> {
        let w = store.get(&format!("{prefix}.w"))?;
        Ok(Self {
            prefix: String::from(prefix),
            in_dim: w.rows(),
            out_dim: w.cols(),
            act,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward<F: Scalar>(&self, store: &ParamStore<F>, x: &Matrix<F>) -> Result<Matrix<F>> {
        let w = store.get(&format!("{}.w", self.prefix))?;
        let b = store.get(&format!("{}.b", self.prefix))?;
        let pre = x.matmul(w)?.add_row_broadcast(b)?;
        Ok(match self.act {
            Some(a) => a.apply_matrix(&pre),
            None => pre,
        })
    }

    /// Backpropagates `dy` (gradient at the layer output) given the forward
    /// input `x` and output `y`; accumulates weight gradients and returns
    /// the gradient at `x`.
    pub fn backward<F: Scalar>(
        &self,
        store: &mut ParamStore<F>,
        x: &Matrix<F>,
        y: &Matrix<F>,
        dy: &Matrix<F>,
    ) -> Result<Matrix<F>> {
        let dpre = match self.act {
            Some(a) => dy.hadamard(&y.map(|v| a.grad_from_output(v)))?,
            None => dy.clone(),
        };
        let dw = x.matmul_tn(&dpre)?;
        let db = dpre.col_sums();
        let w_name = format!("{}.w", self.prefix);
        let dx = dpre.matmul_nt(store.get(&w_name)?)?;
        store.accumulate_grad(&w_name, &dw)?;
        store.accumulate_grad(&format!("{}.b", self.prefix), &db)?;
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::grad_check;
    use alloc::vec;

    #[test]
    fn forward_matches_hand_computation() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = SeededRng::new(1);
        let layer = Dense::init(&mut store, &mut rng, "fc", 2, 3, None).unwrap();
        *store.get_mut("fc.w").unwrap() =
            Matrix::from_vec(2, 3, vec![1.0, -1.0, 0.0, 2.0, 0.0, 1.0]).unwrap();
        *store.get_mut("fc.b").unwrap() = Matrix::from_vec(1, 3, vec![0.5, 0.0, -1.0]).unwrap();

        let x = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        let y = layer.forward(&store, &x).unwrap();
        assert_eq!(y.as_slice(), &[5.5, -1.0, 1.0]);

        let relu = Dense::attach(&store, "fc", Some(Activation::Relu)).unwrap();
        let y = relu.forward(&store, &x).unwrap();
        assert_eq!(y.as_slice(), &[5.5, 0.0, 1.0]);
    }

    #[test]
    fn attach_rejects_missing_params() {
        let store = ParamStore::<f32>::new();
        assert!(Dense::attach(&store, "nope", None).is_err());
    }

    fn check_activation(act: Option<Activation>, seed: u64) {
        let mut store = ParamStore::<f64>::new();
        let mut rng = SeededRng::new(seed);
        let layer = Dense::init(&mut store, &mut rng, "fc", 3, 2, act).unwrap();
        // The input participates as a parameter so the check also covers dx.
        let x0 = Matrix::from_fn(4, 3, |_, _| rng.uniform(-1.0, 1.0));
        store.insert("x0", x0).unwrap();

        // Loss: sum of squared outputs.
        let x = store.get("x0").unwrap().clone();
        let y = layer.forward(&store, &x).unwrap();
        let dy = y.scale(2.0);
        let dx = layer.backward(&mut store, &x, &y, &dy).unwrap();
        store.accumulate_grad("x0", &dx).unwrap();

        let report = grad_check(&mut store, 1e-5, |s| {
            let x = s.get("x0")?.clone();
            let y = layer.forward(s, &x)?;
            Ok(y.as_slice().iter().map(|v| v * v).sum())
        })
        .unwrap();
        assert!(
            report.max_rel_err < 1e-4,
            "{:?} rel err {} at {}[{}]",
            act,
            report.max_rel_err,
            report.worst_param,
            report.worst_index
        );
    }

    #[test]
    fn gradients_match_central_differences() {
        check_activation(None, 21);
        check_activation(Some(Activation::Tanh), 22);
        check_activation(Some(Activation::Sigmoid), 23);
        check_activation(Some(Activation::Relu), 24);
    }
}
