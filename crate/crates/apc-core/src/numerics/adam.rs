//! Adam optimizer with bias correction.
//!
//! State tensors are keyed by parameter name and updated in sorted-name
//! order. A step reads gradients but never modifies them; callers zero
//! gradients themselves between batches.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::param::ParamStore;
use crate::numerics::scalar::Scalar;

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    beta1: F,
    beta2: F,
    eps: F,
    step: u64,
    m: BTreeMap<String, Matrix<F>>,
    v: BTreeMap<String, Matrix<F>>,
}

impl<F: Scalar> Default for AdamState<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> AdamState<F> {
    /// Standard coefficients: beta1 0.9, beta2 0.999, eps 1e-8.
    pub fn new() -> Self {
        Self::with_coeffs(F::lit(0.9), F::lit(0.999), F::lit(1e-8))
    }

    pub fn with_coeffs(beta1: F, beta2: F, eps: F) -> Self {
        Self { beta1, beta2, eps, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Applies one Adam update to every parameter in `store`.
///
/// Every parameter must have a written gradient; a missing one is a
/// backward-pass wiring bug and aborts the step.
pub fn adam_step<F: Scalar>(
    store: &mut ParamStore<F>,
    state: &mut AdamState<F>,
    lr: F,
) -> Result<()> {
    store.require_all_grads()?;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = F::one() - state.beta1.powi(t);
    let bc2 = F::one() - state.beta2.powi(t);
    let one = F::one();

    for (name, value, grad, _) in store.iter_value_grad_mut() {
        let m = state
            .m
            .entry(name.to_string())
            .or_insert_with(|| Matrix::zeros(value.rows(), value.cols()));
        let v = state
            .v
            .entry(name.to_string())
            .or_insert_with(|| Matrix::zeros(value.rows(), value.cols()));
        if m.rows() != value.rows() || m.cols() != value.cols() {
            return Err(Error::OptimizerState {
                detail: alloc::format!("moment shape mismatch for {name}"),
            });
        }
        let (ms, vs, ps, gs) =
            (m.as_mut_slice(), v.as_mut_slice(), value.as_mut_slice(), grad.as_slice());
        for i in 0..ps.len() {
            let g = gs[i];
            ms[i] = state.beta1 * ms[i] + (one - state.beta1) * g;
            vs[i] = state.beta2 * vs[i] + (one - state.beta2) * g * g;
            let m_hat = ms[i] / bc1;
            let v_hat = vs[i] / bc2;
            ps[i] = ps[i] - lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
