//! Discrete-particle-filter mixture reduction.
//!
//! Given `n` weighted components and a budget `M`, the components whose
//! weight is at least `1/c` (with `c` solving `M = Σ min(c W_j, 1)`) are kept
//! as they are, and the rest are resampled systematically, each draw
//! carrying an equal share of the resampled mass. The value of `c` is never
//! formed: [`dpf_threshold`] tests each candidate boundary directly.

use rand::{Rng, RngExt};
use rand_distr::Open01;

use crate::error::{Error, Result};
use crate::filter::HybridMixture;
use crate::linalg::log_sum_exp;

/// Number of components to keep deterministically.
///
/// `sorted_weights` must be normalised and in descending order. Component
/// `j` (one-based) passes when `W_j (K - j) >= Σ_{i > j} W_i`; the count
/// stops at the first failure. The comparison is non-strict, and a return
/// value of zero means every component goes to resampling.
pub fn dpf_threshold(sorted_weights: &[f64], max_kept: usize) -> Result<usize> {
    let n = sorted_weights.len();
    if max_kept == 0 || max_kept > n {
        return Err(Error::InvalidArgument(format!(
            "threshold budget {max_kept} must lie in 1..={n}"
        )));
    }
    if sorted_weights.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument(
            "weights are not sorted in descending order".into(),
        ));
    }
    let total: f64 = sorted_weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "weights sum to {total}, expected 1"
        )));
    }
    // tails[j] = Σ_{i >= j} W_i, accumulated from the small end.
    let mut tails = vec![0.0; n + 1];
    for i in (0..n).rev() {
        tails[i] = tails[i + 1] + sorted_weights[i];
    }
    let mut kept = 0;
    for j in 1..=max_kept {
        if sorted_weights[j - 1] * (max_kept - j) as f64 >= tails[j] {
            kept = j;
        } else {
            break;
        }
    }
    Ok(kept)
}

/// Systematic sampling of `draws` indices with one offset `u ∈ (0, 1)`.
///
/// Draw `j` (one-based) picks the smallest `i` whose cumulative weight
/// reaches `(j - 1 + u) / draws`. Duplicates are expected.
pub fn systematic_sample(weights: &[f64], draws: usize, u: f64) -> Vec<usize> {
    let n = weights.len();
    if n == 0 || draws == 0 {
        return Vec::new();
    }
    let mut cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    // Pin the last positive entry to exactly one so rounding in the running
    // sum cannot leave the final stratum unmatched.
    if let Some(last) = weights.iter().rposition(|w| *w > 0.0) {
        for q in &mut cumulative[last..] {
            *q = 1.0;
        }
    }
    let mut out = Vec::with_capacity(draws);
    let mut i = 0;
    for j in 0..draws {
        let target = (j as f64 + u) / draws as f64;
        while i + 1 < n && cumulative[i] < target {
            i += 1;
        }
        out.push(i);
    }
    out
}

/// Reduces `mixture` to `max_components` entries, keeping its ancestor
/// component (when there is one) with its original weight.
///
/// The output weights are not renormalised; they sum to the input mass
/// apart from rounding.
pub fn dpf_resample<R: Rng + ?Sized>(
    mixture: &HybridMixture,
    max_components: usize,
    rng: &mut R,
) -> Result<HybridMixture> {
    let u: f64 = rng.sample(Open01);
    dpf_resample_with_offset(mixture, max_components, u)
}

/// [`dpf_resample`] with an explicit systematic-sampling offset.
pub fn dpf_resample_with_offset(
    mixture: &HybridMixture,
    max_components: usize,
    u: f64,
) -> Result<HybridMixture> {
    let n = mixture.len();
    if max_components < 2 || n <= max_components {
        return Err(Error::InvalidArgument(format!(
            "reduction needs more components ({n}) than the budget ({max_components}), and a budget of at least 2"
        )));
    }
    let flat: Vec<(usize, usize, f64)> = mixture
        .iter_flat()
        .map(|(z, i, c)| (z, i, c.log_weight))
        .collect();
    let ancestor = mixture.ancestor.map(|(z, i)| mixture.flat_index(z, i));

    // S̄: everything except the ancestor, in flat order.
    let others: Vec<usize> = (0..n).filter(|j| Some(*j) != ancestor).collect();
    let log_mass = log_sum_exp(&others.iter().map(|&j| flat[j].2).collect::<Vec<_>>());

    // (flat index, copies, log weight of each copy)
    let mut keep: Vec<(usize, usize, f64)> = Vec::new();
    if let Some(a) = ancestor {
        keep.push((a, 1, flat[a].2));
    }
    let budget = max_components - usize::from(ancestor.is_some());

    if log_mass.is_finite() {
        let normalized: Vec<f64> = others
            .iter()
            .map(|&j| (flat[j].2 - log_mass).exp())
            .collect();
        let total: f64 = normalized.iter().sum();
        let normalized: Vec<f64> = normalized.iter().map(|w| w / total).collect();

        // Stable descending sort: ties keep flat order.
        let mut order: Vec<usize> = (0..others.len()).collect();
        order.sort_by(|&a, &b| {
            normalized[b]
                .partial_cmp(&normalized[a])
                .expect("weights are finite")
        });
        let sorted: Vec<f64> = order.iter().map(|&o| normalized[o]).collect();
        let kept = dpf_threshold(&sorted, budget)?;

        let mut deterministic = vec![false; others.len()];
        for &o in &order[..kept] {
            deterministic[o] = true;
            keep.push((others[o], 1, flat[others[o]].2));
        }

        let residual: Vec<usize> = (0..others.len()).filter(|o| !deterministic[*o]).collect();
        let draws = budget - kept;
        let log_residual = log_sum_exp(
            &residual
                .iter()
                .map(|&o| flat[others[o]].2)
                .collect::<Vec<_>>(),
        );
        if draws == 0 {
            if log_residual.is_finite() {
                log::debug!(
                    "degenerate reduction: residual mass {} dropped",
                    log_residual.exp()
                );
            }
        } else if log_residual.is_finite() {
            let res_weights: Vec<f64> = residual
                .iter()
                .map(|&o| (flat[others[o]].2 - log_residual).exp())
                .collect();
            let res_total: f64 = res_weights.iter().sum();
            let res_weights: Vec<f64> = res_weights.iter().map(|w| w / res_total).collect();
            let share = log_residual - (draws as f64).ln();
            let mut copies = vec![0usize; residual.len()];
            for r in systematic_sample(&res_weights, draws, u) {
                copies[r] += 1;
            }
            for (r, &c) in copies.iter().enumerate() {
                if c > 0 {
                    keep.push((others[residual[r]], c, share));
                }
            }
        }
    }

    keep.sort_by_key(|(j, _, _)| *j);
    let mut out = HybridMixture::empty(mixture.num_models());
    for (j, copies, lw) in keep {
        let (z, i, _) = flat[j];
        if Some(j) == ancestor {
            out.ancestor = Some((z, out.components[z].len()));
        }
        let mut comp = mixture.components[z][i].clone();
        comp.log_weight = lw;
        for _ in 0..copies {
            out.components[z].push(comp.clone());
        }
    }
    Ok(out)
}
