use std::collections::BTreeSet;

use diachron_core::analysis::{build_atlas, Params};
use diachron_core::comparative::{char_2grams, decompose_overlap, jaccard_at_k, DriftTopSet};
use diachron_core::diachronic::{
    cumulative_drift, diversity_entropy, select_top_drifting, view, FeatureDrift, Scope, SeriesKey, SliceSeries,
    DEFAULT_EPSILON,
};
use diachron_core::sae::topk_sparsify;
use diachron_core::sparse::max_pool_tokens;
use diachron_core::store::{corpora, ActivationRecord};
use diachron_core::{Exec, SparseVector};
use diachron_testkit::equivalence::random_fixture;
use proptest::prelude::*;

fn sparse(dim: u32) -> impl Strategy<Value = SparseVector> {
    proptest::collection::btree_map(0..dim, 0.001f64..10.0, 0..(dim as usize))
        .prop_map(move |m| SparseVector::from_pairs(dim, m).unwrap())
}

fn top_set(ids: BTreeSet<u32>) -> DriftTopSet {
    let ranked = ids.into_iter().map(|f| FeatureDrift { feature: f, drift: 1.0 }).collect();
    DriftTopSet::new("c", "x", usize::MAX, ranked)
}

fn scaled(records: &[ActivationRecord], c: f64) -> Vec<ActivationRecord> {
    records
        .iter()
        .map(|r| ActivationRecord {
            meta: r.meta.clone(),
            z: r.z.scaled(c).unwrap(),
        })
        .collect()
}

proptest! {
    #[test]
    fn pooling_is_elementwise_max(a in sparse(24), b in sparse(24)) {
        let ab = max_pool_tokens(&[a.clone(), b.clone()]).unwrap();
        let ba = max_pool_tokens(&[b.clone(), a.clone()]).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert_eq!(max_pool_tokens(&[a.clone(), a.clone()]).unwrap(), a.clone());
        for i in 0..24 {
            prop_assert_eq!(ab.get(i), a.get(i).max(b.get(i)));
        }
    }

    #[test]
    fn topk_respects_kappa(a in proptest::collection::vec(-5.0f64..5.0, 1..40), k in 1usize..40) {
        let k = k.min(a.len());
        let z = topk_sparsify(&a, k).unwrap();
        prop_assert!(z.nnz() <= k);
        for (i, v) in z.iter() {
            prop_assert!(v > 0.0);
            prop_assert_eq!(v, a[i as usize]);
        }
    }

    #[test]
    fn jaccard_symmetric_and_partition(
        a in proptest::collection::btree_set(0u32..50, 0..20),
        b in proptest::collection::btree_set(0u32..50, 0..20),
    ) {
        prop_assume!(!(a.is_empty() && b.is_empty()));
        let (sa, sb) = (top_set(a.clone()), top_set(b.clone()));
        let j = jaccard_at_k(&sa, &sb).unwrap();
        prop_assert_eq!(j, jaccard_at_k(&sb, &sa).unwrap());
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j == 1.0, a == b);
        let p = decompose_overlap(&sa, &sb).unwrap();
        prop_assert!(p.shared.is_disjoint(&p.only_a) && p.shared.is_disjoint(&p.only_b) && p.only_a.is_disjoint(&p.only_b));
        let union: BTreeSet<u32> = p.shared.iter().chain(&p.only_a).chain(&p.only_b).copied().collect();
        prop_assert_eq!(union, a.union(&b).copied().collect::<BTreeSet<_>>());
    }

    #[test]
    fn fingerprint_union_over_splits(texts in proptest::collection::vec("[a-c 个人社会]{0,8}", 0..8), cut in 0usize..8) {
        let cut = cut.min(texts.len());
        let whole = char_2grams(&texts);
        let mut parts = char_2grams(&texts[..cut]);
        parts.extend(char_2grams(&texts[cut..]));
        prop_assert_eq!(whole.clone(), parts);
        prop_assert!(whole.iter().all(|g| g.chars().count() == 2));
    }

    #[test]
    fn drift_nonnegative(values in proptest::collection::vec(0.0f64..10.0, 0..12)) {
        let pts: Vec<(i32, f64)> = values.iter().enumerate().map(|(i, &v)| (1915 + i as i32, v)).collect();
        let s = SliceSeries::from_points(SeriesKey::new(Scope::Feature { feature: 0 }, None, "all"), &pts);
        prop_assert!(cumulative_drift(&s) >= 0.0);
        let flat: Vec<(i32, f64)> = pts.iter().map(|&(y, _)| (y, 1.0)).collect();
        prop_assert_eq!(cumulative_drift(&SliceSeries::from_points(s.key.clone(), &flat)), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaling_invariance(seed in 0u64..10_000, c in 0.1f64..8.0) {
        let f = random_fixture(seed);
        let params = Params::default();
        let corpora = corpora(&f.records);
        let base = build_atlas(&view(&f.records), &f.spec.concepts, &corpora, &f.years, &params, Exec::Sequential).unwrap();
        let s = scaled(&f.records, c);
        let big = build_atlas(&view(&s), &f.spec.concepts, &corpora, &f.years, &params, Exec::Sequential).unwrap();
        for (a, b) in base.iter().zip(&big) {
            prop_assert_eq!(a.peak_year, b.peak_year);
            prop_assert_eq!(a.turn_year, b.turn_year);
            prop_assert_eq!(a.salient_count, b.salient_count);
            prop_assert!((a.diversity - b.diversity).abs() < 1e-9);
            match (a.implicit_ratio, b.implicit_ratio) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                (x, y) => prop_assert_eq!(x, y),
            }
            if let (Some(x), Some(y)) = (a.turn_intensity, b.turn_intensity) {
                prop_assert!((c * x - y).abs() < 1e-9 * (1.0 + y.abs()));
            }
        }
        let d0 = select_top_drifting(&view(&f.records), &f.years, 30, None);
        let d1 = select_top_drifting(&view(&s), &f.years, 30, None);
        for (a, b) in d0.iter().zip(&d1) {
            prop_assert!((c * a.drift - b.drift).abs() < 1e-9 * (1.0 + b.drift));
        }
    }
}

#[test]
fn entropy_bounds_on_random_fixture() {
    let f = random_fixture(8);
    let v = view(&f.records);
    for concept in &f.spec.concepts {
        for y in &f.years {
            if let Some(row) = diachron_core::diachronic::orientation_shares(&v, concept, "newyouth", *y, DEFAULT_EPSILON) {
                let h = diversity_entropy(&row);
                assert!((0.0..=1.0).contains(&h));
                assert!(row.shares().iter().sum::<f64>() <= 1.0 + 1e-12);
            }
        }
    }
}
