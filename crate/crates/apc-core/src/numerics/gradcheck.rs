//! Central-difference verification of analytic gradients.
//!
//! Runs in f64 only: with eps = 1e-5 the difference quotient carries up to
//! about 1e-9 of absolute noise (rounding plus truncation through recurrent
//! chains), so relative agreement is only certifiable for gradients well
//! above that scale. The relative error therefore uses an absolute floor in
//! its denominator; near-zero coordinates still certify that no term of
//! magnitude above the floor is missing, without failing on noise.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::param::ParamStore;
use crate::rng::SeededRng;

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

const DENOM_FLOOR: f64 = 1e-5;

fn snapshot_grads(store: &ParamStore<f64>) -> Result<BTreeMap<String, Matrix<f64>>> {
    store.require_all_grads()?;
    Ok(store
        .names()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .into_iter()
        .map(|n| {
            let g = store.grad(&n).expect("name came from store").clone();
            (n, g)
        })
        .collect())
}

fn check_coordinate<F>(
    store: &mut ParamStore<f64>,
    analytic: &BTreeMap<String, Matrix<f64>>,
    report: &mut GradCheckReport,
    name: &str,
    idx: usize,
    eps: f64,
    loss: &mut F,
) -> Result<()>
where
    F: FnMut(&mut ParamStore<f64>) -> Result<f64>,
{
    let orig = store.get(name)?.as_slice()[idx];
    store.get_mut(name)?.as_mut_slice()[idx] = orig + eps;
    let plus = loss(store)?;
    store.get_mut(name)?.as_mut_slice()[idx] = orig - eps;
    let minus = loss(store)?;
    store.get_mut(name)?.as_mut_slice()[idx] = orig;

    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite { context: alloc::format!("loss near {name}[{idx}]") });
    }
    let numeric = (plus - minus) / (2.0 * eps);
    let a = analytic[name].as_slice()[idx];
    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(DENOM_FLOOR);
    report.checked += 1;
    if rel > report.max_rel_err {
        report.max_rel_err = rel;
        report.worst_param = name.to_string();
        report.worst_index = idx;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
    }
    Ok(())
}

fn empty_report() -> GradCheckReport {
    GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    }
}

/// Compares the gradients stored in `store` against central differences
/// of `loss`, visiting every coordinate of every parameter.
///
/// The caller runs forward and backward first so that `store` holds the
/// analytic gradients; `loss` must re-evaluate the objective from the
/// current parameter values and be deterministic (freeze any sampling
/// before checking). Relative error divides by the larger gradient
/// magnitude, floored to keep finite-difference noise on near-zero
/// coordinates from registering as disagreement.
pub fn grad_check<F>(store: &mut ParamStore<f64>, eps: f64, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore<f64>) -> Result<f64>,
{
    let analytic = snapshot_grads(store)?;
    let mut report = empty_report();
    for name in analytic.keys().cloned().collect::<Vec<_>>() {
        for idx in 0..analytic[&name].as_slice().len() {
            check_coordinate(store, &analytic, &mut report, &name, idx, eps, &mut loss)?;
        }
    }
    Ok(report)
}

/// Like [`grad_check`] but probes `probe_count` distinct coordinates chosen
/// uniformly across all parameters (or every coordinate, if fewer exist).
/// Bounds the cost on large models where exhaustive checking is too slow.
pub fn grad_check_sampled<F>(
    store: &mut ParamStore<f64>,
    eps: f64,
    probe_count: usize,
    rng: &mut SeededRng,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore<f64>) -> Result<f64>,
{
    let analytic = snapshot_grads(store)?;
    let sizes: Vec<(String, usize)> = analytic
        .iter()
        .map(|(n, g)| (n.clone(), g.as_slice().len()))
        .collect();
    let total: usize = sizes.iter().map(|(_, s)| s).sum();

    let mut flat_picks = BTreeSet::new();
    if probe_count >= total {
        flat_picks.extend(0..total);
    } else {
        while flat_picks.len() < probe_count {
            flat_picks.insert(rng.index(total));
        }
    }

    let mut report = empty_report();
    for flat in flat_picks {
        let mut offset = flat;
        for (name, size) in &sizes {
            if offset < *size {
                check_coordinate(store, &analytic, &mut report, name, offset, eps, &mut loss)?;
                break;
            }
            offset -= size;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn quadratic_loss(store: &mut ParamStore<f64>) -> Result<f64> {
        let w = store.get("w")?;
        let c = [0.3, -1.2, 2.0];
        let mut l = 0.0;
        for (i, &v) in w.as_slice().iter().enumerate() {
            l += (v - c[i]) * (v - c[i]);
        }
        Ok(l)
    }

    fn setup() -> ParamStore<f64> {
        let mut store = ParamStore::new();
        store
            .insert("w", Matrix::from_vec(1, 3, vec![1.0, 0.5, -0.25]).unwrap())
            .unwrap();
        store
    }

    #[test]
    fn accepts_correct_quadratic_gradient() {
        let mut store = setup();
        let c = [0.3, -1.2, 2.0];
        let w = store.get("w").unwrap().clone();
        let g = Matrix::from_fn(1, 3, |_, j| 2.0 * (w.get(0, j) - c[j]));
        store.accumulate_grad("w", &g).unwrap();

        let report = grad_check(&mut store, 1e-5, quadratic_loss).unwrap();
        assert_eq!(report.checked, 3);
        assert!(report.max_rel_err < 1e-9, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn flags_corrupted_gradient() {
        let mut store = setup();
        let c = [0.3, -1.2, 2.0];
        let w = store.get("w").unwrap().clone();
        let mut g = Matrix::from_fn(1, 3, |_, j| 2.0 * (w.get(0, j) - c[j]));
        g.set(0, 1, g.get(0, 1) + 0.5);
        store.accumulate_grad("w", &g).unwrap();

        let report = grad_check(&mut store, 1e-5, quadratic_loss).unwrap();
        assert!(report.max_rel_err > 1e-2);
        assert_eq!(report.worst_param, "w");
        assert_eq!(report.worst_index, 1);
    }

    #[test]
    fn requires_gradients_before_checking() {
        let mut store = setup();
        assert!(grad_check(&mut store, 1e-5, quadratic_loss).is_err());
    }

    #[test]
    fn sampled_variant_respects_probe_count() {
        let mut store = setup();
        let c = [0.3, -1.2, 2.0];
        let w = store.get("w").unwrap().clone();
        let g = Matrix::from_fn(1, 3, |_, j| 2.0 * (w.get(0, j) - c[j]));
        store.accumulate_grad("w", &g).unwrap();

        let mut rng = SeededRng::new(11);
        let two = grad_check_sampled(&mut store, 1e-5, 2, &mut rng, quadratic_loss).unwrap();
        assert_eq!(two.checked, 2);
        assert!(two.max_rel_err < 1e-9);
        // Asking for more probes than coordinates falls back to all of them.
        let all = grad_check_sampled(&mut store, 1e-5, 50, &mut rng, quadratic_loss).unwrap();
        assert_eq!(all.checked, 3);
    }

    #[test]
    fn sampled_variant_still_flags_corruption() {
        let mut store = setup();
        let c = [0.3, -1.2, 2.0];
        let w = store.get("w").unwrap().clone();
        let mut g = Matrix::from_fn(1, 3, |_, j| 2.0 * (w.get(0, j) - c[j]));
        g.set(0, 1, g.get(0, 1) + 0.5);
        store.accumulate_grad("w", &g).unwrap();

        let mut rng = SeededRng::new(12);
        let report = grad_check_sampled(&mut store, 1e-5, 3, &mut rng, quadratic_loss).unwrap();
        assert!(report.max_rel_err > 1e-2);
        assert_eq!(report.worst_index, 1);
    }

    #[test]
    fn non_finite_loss_is_an_error_naming_the_coordinate() {
        let mut store = setup();
        let g = Matrix::from_vec(1, 3, vec![0.0, 0.0, 0.0]).unwrap();
        store.accumulate_grad("w", &g).unwrap();
        let err = grad_check(&mut store, 1e-5, |_| Ok(f64::NAN)).unwrap_err();
        match err {
            Error::NonFinite { context } => assert!(context.contains("w[0]"), "{context}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parameters_restored_after_check() {
        let mut store = setup();
        let g = Matrix::from_vec(1, 3, vec![1.4, 3.4, -4.5]).unwrap();
        store.accumulate_grad("w", &g).unwrap();
        let before = store.get("w").unwrap().clone();
        let _ = grad_check(&mut store, 1e-5, quadratic_loss).unwrap();
        assert_eq!(store.get("w").unwrap(), &before);
    }
}
