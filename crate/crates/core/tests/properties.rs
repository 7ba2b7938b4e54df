mod common;

use osq_core::dataset::{
    generate_attributes_with_kinds, l2_squared, AttributeKind, Neighbor, ResultSet, VectorDataset,
};
use osq_core::hybrid_filter::{filter_masks, quantized_mask_naive};
use osq_core::osq::{extract_dim, pack, unpack};
use osq_core::quantizer::{allocate_bits, quantize_attributes, AttrQuantConfig, BitAllocation, CodeMatrix};
use osq_core::search::merge_results;
use osq_core::transform::{apply_klt, fit_klt};
use osq_core::Exec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn alloc_strategy() -> impl Strategy<Value = BitAllocation> {
    (prop::sample::select(vec![8u32, 16, 24, 32, 64]), prop::collection::vec(0u32..=64, 1..12))
        .prop_map(|(s, bits)| BitAllocation::new(bits, s).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn packing_round_trips(alloc in alloc_strategy(), n in 1usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = alloc.d();
        let codes: Vec<u64> = (0..n * d)
            .map(|i| {
                let b = alloc.bits[i % d];
                if b == 0 { 0 } else { rand::Rng::random::<u64>(&mut rng) >> (64 - b) }
            })
            .collect();
        let m = CodeMatrix::new(n, d, codes).unwrap();
        let seg = pack(&m, &alloc).unwrap();
        prop_assert_eq!(seg.row_bytes() * 8, alloc.segments() * alloc.segment_size as usize);
        prop_assert_eq!(&unpack(&seg, &alloc), &m);
        for j in 0..d {
            prop_assert_eq!(extract_dim(&seg, &alloc, j, None), m.column(j));
        }
    }

    #[test]
    fn allocation_follows_a_permutation(
        vars in prop::collection::vec(0.01f64..100.0, 2..10),
        budget in 0u32..60,
        rot in 0usize..10,
    ) {
        let mut distinct = vars.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        prop_assume!(distinct.len() == vars.len());
        let d = vars.len();
        let budget = budget.min(16 * d as u32);
        let perm: Vec<usize> = (0..d).map(|i| (i + rot) % d).collect();
        let permuted: Vec<f64> = perm.iter().map(|&i| vars[i]).collect();
        let a = allocate_bits(&vars, budget, 8).unwrap();
        let b = allocate_bits(&permuted, budget, 8).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(b.bits[k], a.bits[i]);
        }
        prop_assert_eq!(a.total_budget(), budget as u64);
    }

    #[test]
    fn merge_is_split_invariant(
        dists in prop::collection::vec((0u32..40, 0u32..1000), 0..60),
        cut in 0usize..60,
        k in 1usize..12,
    ) {
        let entries: Vec<Neighbor> = dists
            .iter()
            .map(|&(id, d)| Neighbor { id, distance: (d as f64 + id as f64 * 1e-3) / 7.0 })
            .collect();
        let cut = cut.min(entries.len());
        let (l, r) = entries.split_at(cut);
        let whole = merge_results(&[ResultSet { entries: entries.clone() }], k);
        let left = merge_results(&[ResultSet { entries: l.to_vec() }], k);
        let right = merge_results(&[ResultSet { entries: r.to_vec() }], k);
        prop_assert_eq!(&merge_results(&[left.clone(), right.clone()], k), &whole);
        prop_assert_eq!(&merge_results(&[right, left], k), &whole);
    }

    #[test]
    fn klt_preserves_distances(seed: u64, d in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40;
        let values: Vec<f32> = (0..n * d).map(|i| rand::Rng::random_range(&mut rng, -5.0f32..5.0) * (1 + i % d) as f32).collect();
        let model = fit_klt(Exec::Sequential, &values, d).unwrap();
        let y = apply_klt(Exec::Sequential, &model, &values, d).unwrap();
        let ds = VectorDataset::new(d, values).unwrap();
        for (a, b) in [(0, 1), (3, 17), (5, 39)] {
            let exact = l2_squared(ds.row(a), ds.row(b));
            let rot: f64 = (0..d).map(|j| (y[a * d + j] - y[b * d + j]).powi(2)).sum();
            prop_assert!((exact - rot).abs() <= 1e-9 * (1.0 + exact));
        }
        for w in model.eigenvalues.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn masks_match_cell_semantics(seed: u64) {
        let kinds = [AttributeKind::Numeric, AttributeKind::Categorical, AttributeKind::Numeric];
        let raw = generate_attributes_with_kinds(300, &kinds, seed).unwrap();
        let aq = quantize_attributes(Exec::Sequential, &raw, AttrQuantConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let preds: Vec<_> = (0..8).map(|_| common::random_predicate(&mut rng, &aq, &raw)).collect();
        let fast = filter_masks(Exec::Parallel, &aq, &preds).unwrap();
        for (p, m) in preds.iter().zip(&fast) {
            prop_assert_eq!(m, &quantized_mask_naive(&aq, p).unwrap());
        }
    }
}
