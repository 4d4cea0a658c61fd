//! Equal error rate over verification scores.
//!
//! Convention, fixed so results are reproducible to the bit: sweep every
//! distinct score as a threshold in ascending order; at each threshold
//! FAR is the fraction of nontarget scores `>=` it and FRR the fraction
//! of target scores `<` it; report `(FAR + FRR) / 2` at the first
//! threshold minimizing `|FAR - FRR|`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EerResult {
    /// Equal error rate in `[0, 1]`.
    pub eer: f64,
    /// Threshold achieving the closest FAR/FRR crossing.
    pub threshold: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

pub fn compute_eer(target: &[f64], nontarget: &[f64]) -> Result<EerResult> {
    if target.is_empty() {
        return Err(Error::EmptyInput { what: "target scores" });
    }
    if nontarget.is_empty() {
        return Err(Error::EmptyInput { what: "nontarget scores" });
    }
    if target.iter().chain(nontarget).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: String::from("verification scores") });
    }

    let mut tgt = target.to_vec();
    let mut non = nontarget.to_vec();
    tgt.sort_unstable_by(f64::total_cmp);
    non.sort_unstable_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = tgt.iter().chain(&non).copied().collect();
    thresholds.sort_unstable_by(f64::total_cmp);
    thresholds.dedup();

    let mut best: Option<(f64, f64, f64)> = None; // (gap, eer, threshold)
    for &thr in &thresholds {
        // Sorted lists turn the counts into partition points.
        let far = (non.len() - non.partition_point(|&s| s < thr)) as f64 / non.len() as f64;
        let frr = tgt.partition_point(|&s| s < thr) as f64 / tgt.len() as f64;
        let gap = (far - frr).abs();
        if best.is_none_or(|(g, _, _)| gap < g) {
            best = Some((gap, (far + frr) / 2.0, thr));
        }
    }
    let (_, eer, threshold) = best.expect("nonempty threshold sweep");
    Ok(EerResult { eer, threshold, n_target: target.len(), n_nontarget: nontarget.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use alloc::vec;

    /// Same definition, written as the obvious quadratic scan with no
    /// sorting or partition points.
    fn eer_oracle(target: &[f64], nontarget: &[f64]) -> (f64, f64) {
        let mut thresholds: Vec<f64> = target.iter().chain(nontarget).copied().collect();
        thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        thresholds.dedup();
        let mut best_gap = f64::INFINITY;
        let mut best = (0.0, 0.0);
        for &thr in &thresholds {
            let far = nontarget.iter().filter(|&&s| s >= thr).count() as f64
                / nontarget.len() as f64;
            let frr = target.iter().filter(|&&s| s < thr).count() as f64 / target.len() as f64;
            if (far - frr).abs() < best_gap {
                best_gap = (far - frr).abs();
                best = ((far + frr) / 2.0, thr);
            }
        }
        best
    }

    #[test]
    fn separated_scores_give_zero() {
        let r = compute_eer(&[0.8, 0.9, 0.95], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(r.eer, 0.0);
        assert_eq!((r.n_target, r.n_nontarget), (3, 3));
    }

    #[test]
    fn crossed_pairs_hand_value() {
        // Threshold 0.9: FAR = 1/2 (0.95 passes), FRR = 1/2 (0.8 fails).
        let r = compute_eer(&[0.9, 0.8], &[0.95, 0.1]).unwrap();
        assert_eq!(r.eer, 0.5);
        assert_eq!(r.threshold, 0.9);
    }

    #[test]
    fn matches_brute_force_oracle_exactly() {
        let mut rng = SeededRng::new(17);
        for case in 0..100 {
            let nt = 1 + rng.index(40);
            let nn = 1 + rng.index(40);
            // A coarse grid forces repeated scores and FAR/FRR ties.
            let grid = (1 + rng.index(12)) as f64;
            let draw = |rng: &mut SeededRng| (rng.uniform(-1.0, 1.0) * grid).round() / grid;
            let tgt: Vec<f64> = (0..nt).map(|_| draw(&mut rng)).collect();
            let non: Vec<f64> = (0..nn).map(|_| draw(&mut rng)).collect();
            let r = compute_eer(&tgt, &non).unwrap();
            let (eer, thr) = eer_oracle(&tgt, &non);
            assert_eq!(r.eer, eer, "case {case}");
            assert_eq!(r.threshold, thr, "case {case}");
        }
    }

    #[test]
    fn swapping_roles_with_negated_scores_preserves_eer() {
        let mut rng = SeededRng::new(19);
        for _ in 0..50 {
            let tgt: Vec<f64> = (0..5 + rng.index(30)).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let non: Vec<f64> = (0..5 + rng.index(30)).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let a = compute_eer(&tgt, &non).unwrap().eer;
            let neg_tgt: Vec<f64> = non.iter().map(|&s| -s).collect();
            let neg_non: Vec<f64> = tgt.iter().map(|&s| -s).collect();
            let b = compute_eer(&neg_tgt, &neg_non).unwrap().eer;
            // The >=/< threshold convention is not exactly self-dual, so the
            // two orientations can land one staircase step apart.
            let step = 1.0 / tgt.len().min(non.len()) as f64;
            assert!((a - b).abs() <= step + 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn empty_lists_rejected() {
        assert!(compute_eer(&[], &[0.1]).is_err());
        assert!(compute_eer(&[0.1], &[]).is_err());
        assert!(compute_eer(&[f64::NAN], &[0.1]).is_err());
    }

    #[test]
    fn eer_stays_in_unit_interval() {
        let mut rng = SeededRng::new(23);
        for _ in 0..50 {
            let tgt: Vec<f64> = (0..1 + rng.index(20)).map(|_| rng.normal(0.5, 1.0)).collect();
            let non: Vec<f64> = (0..1 + rng.index(20)).map(|_| rng.normal(-0.5, 1.0)).collect();
            let r = compute_eer(&tgt, &non).unwrap();
            assert!((0.0..=1.0).contains(&r.eer));
        }
    }

    #[test]
    fn identical_score_sets_give_half() {
        let s = vec![0.3, 0.5, 0.7];
        // FAR and FRR cross at one half when the distributions coincide.
        let r = compute_eer(&s, &s).unwrap();
        assert!((r.eer - 0.5).abs() < 0.2, "eer {}", r.eer);
    }
}
