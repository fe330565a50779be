use jmls::analysis::{
    frequency_response, log_grid, quantile, relabel_sample, similarity_transform,
};
use jmls::benchmarks::{three_state_three_mode, uninformative_prior, univariate_two_mode};
use jmls::conjugate::{sample_parameters, PosteriorHyper};
use jmls::dpf::{dpf_resample_with_offset, dpf_threshold, systematic_sample};
use jmls::filter::{GaussianComponent, HybridMixture};
use jmls::io::{params_from_json, params_to_json};
use jmls::model::validate_params;
use jmls::rng::stream;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn normalized_sorted(raw: Vec<f64>) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    w.sort_by(|a, b| b.partial_cmp(a).unwrap());
    w
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, 2..40).prop_map(normalized_sorted)
}

fn mixture(raw: &[f64], m: usize, ancestor: Option<usize>) -> HybridMixture {
    let total: f64 = raw.iter().sum();
    let mut mix = HybridMixture::empty(m);
    for (j, w) in raw.iter().enumerate() {
        mix.components[j % m].push(GaussianComponent {
            log_weight: (w / total).ln(),
            mean: DVector::from_element(1, j as f64),
            cov: DMatrix::identity(1, 1),
        });
    }
    mix.ancestor = ancestor.map(|j| (j % m, j / m));
    mix
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn threshold_keeps_only_components_above_the_cut(w in weights(), k_frac in 0.0f64..1.0) {
        let n = w.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let k = k.min(n - 1);
        let l = dpf_threshold(&w, k).unwrap();
        prop_assert!(l <= k);
        if l > 0 {
            let tail: f64 = w[l..].iter().sum();
            prop_assert!(w[l - 1] * (k - l) as f64 >= tail * (1.0 - 1e-12));
        }
    }

    #[test]
    fn systematic_counts_are_floor_or_ceil(w in weights(), draws in 1usize..100, u in 1e-9f64..(1.0 - 1e-9)) {
        let idx = systematic_sample(&w, draws, u);
        prop_assert_eq!(idx.len(), draws);
        let mut counts = vec![0usize; w.len()];
        for i in idx {
            counts[i] += 1;
        }
        for (c, wi) in counts.iter().zip(&w) {
            let rw = draws as f64 * wi;
            prop_assert!(*c as f64 >= (rw - 1e-9).floor() && *c as f64 <= (rw + 1e-9).ceil());
        }
    }

    #[test]
    fn reduction_respects_budget_and_keeps_the_ancestor(
        raw in prop::collection::vec(1e-4f64..1.0, 4..30),
        m in 1usize..4,
        budget_frac in 0.0f64..1.0,
        anc_frac in 0.0f64..1.0,
        u in 1e-9f64..(1.0 - 1e-9),
    ) {
        let n = raw.len();
        let budget = 2 + ((n - 3) as f64 * budget_frac) as usize;
        let anc = ((n - 1) as f64 * anc_frac) as usize;
        let mix = mixture(&raw, m, Some(anc));
        let out = dpf_resample_with_offset(&mix, budget, u).unwrap();
        prop_assert!(out.len() <= budget);
        let kept = out.ancestor_component().expect("ancestor kept");
        let orig = mix.ancestor_component().unwrap();
        prop_assert_eq!(kept, orig);
        let total: f64 = out.iter_flat().map(|(_, _, c)| c.log_weight.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn prior_draws_are_valid(seed in 0u64..10_000) {
        let mut rng = stream(seed, 0);
        let post = PosteriorHyper::from_prior(&uninformative_prior(2, 1, 1, 1));
        if let Ok(theta) = sample_parameters(&post, 1, 1, 1, &mut rng) {
            prop_assert!(validate_params(&theta).is_empty());
        }
    }

    #[test]
    fn frequency_response_is_similarity_invariant(
        p in prop::collection::vec(-2.0f64..2.0, 9),
        model in 0usize..3,
    ) {
        let p = DMatrix::from_row_slice(3, 3, &p) + DMatrix::identity(3, 3) * 3.0;
        prop_assume!(p.determinant().abs() > 1e-3);
        let truth = three_state_three_mode();
        let grid = log_grid(16);
        let base = frequency_response(&truth.models[model], &grid).unwrap();
        let moved = frequency_response(&similarity_transform(&truth.models[model], &p).unwrap(), &grid).unwrap();
        for (a, b) in base.magnitude(0, 0).iter().zip(moved.magnitude(0, 0)) {
            prop_assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0));
        }
    }

    #[test]
    fn quantiles_are_monotone_and_bounded(mut v in prop::collection::vec(-1e3f64..1e3, 1..200), p in 0.0f64..1.0, q in 0.0f64..1.0) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let (a, b) = (quantile(&v, lo), quantile(&v, hi));
        prop_assert!(a <= b);
        prop_assert!(a >= v[0] && b <= v[v.len() - 1]);
    }

    #[test]
    fn relabelling_undoes_a_permutation(perm_index in 0usize..6) {
        let truth = three_state_three_mode();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let shuffled = truth.permuted(&perms[perm_index]);
        let grid = log_grid(32);
        let reference: Vec<_> = truth.models.iter().map(|m| frequency_response(m, &grid).unwrap()).collect();
        let back = relabel_sample(&shuffled, &reference).unwrap();
        prop_assert_eq!(shuffled.permuted(&back), truth);
    }
}

#[test]
fn parameter_files_round_trip() {
    for theta in [univariate_two_mode(), three_state_three_mode()] {
        assert_eq!(params_from_json(&params_to_json(&theta)).unwrap(), theta);
    }
}
