use proptest::prelude::*;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use semsplat::query::{pairwise_term, relevancy_map_snapped, segment_multiclass_snapped};
use semsplat::synthetic::{query_workload, random_unit};
use semsplat::{
    localize, relevancy, relevancy_map, segment, segment_multiclass, snap, snap_map, Embedding, MemoryBank, QuerySpec,
    RelevancyMap, Snapped,
};

fn canon(rng: &mut Xoshiro256PlusPlus, dim: usize) -> Vec<Embedding> {
    (0..4).map(|_| random_unit(rng, dim)).collect()
}

/// Oracle: snap and score every pixel independently.
fn brute_force(fm: &semsplat::FeatureMap, bank: &MemoryBank, q: &QuerySpec) -> Vec<f64> {
    fm.values
        .iter()
        .map(|&f| match snap(f, bank) {
            Snapped::Entry(i) => relevancy(&bank.entries()[i].views, q),
            Snapped::Background => 0.0,
        })
        .collect()
}

#[test]
fn fast_path_matches_brute_force() {
    for seed in 0..10 {
        let (mut fm, bank) = query_workload(seed, 30, 2, 16, 48, 36);
        // Some background pixels too.
        for v in fm.values.iter_mut().step_by(11) {
            *v = [-0.9, -1.0, -0.95];
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let q = QuerySpec::new(random_unit(&mut rng, 16), canon(&mut rng, 16), 0.5).unwrap();
        let fast = relevancy_map(&fm, &bank, &q);
        let slow = brute_force(&fm, &bank, &q);
        for (a, b) in fast.scores.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert!(fast.scores.iter().step_by(11).all(|&s| s == 0.0));
    }
}

#[test]
fn constant_and_background_maps() {
    let (_, bank) = query_workload(3, 8, 2, 8, 8, 8);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
    let q = QuerySpec::new(random_unit(&mut rng, 8), canon(&mut rng, 8), 0.5).unwrap();
    let id = bank.entries()[4].id;
    let rm = relevancy_map(&semsplat::FeatureMap::filled(5, 4, id), &bank, &q);
    let expected = relevancy(&bank.entries()[4].views, &q);
    assert!(rm.scores.iter().all(|&s| s == expected));
    let bg = relevancy_map(&semsplat::FeatureMap::filled(5, 4, [-1.0; 3]), &bank, &q);
    assert!(bg.scores.iter().all(|&s| s == 0.0));
}

#[test]
fn multiclass_matches_brute_force() {
    for seed in 0..5 {
        let (fm, bank) = query_workload(seed, 20, 2, 12, 40, 30);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed + 50);
        let canon = canon(&mut rng, 12);
        let queries: Vec<QuerySpec> = (0..3)
            .map(|_| QuerySpec::new(random_unit(&mut rng, 12), canon.clone(), 0.5).unwrap())
            .collect();
        let classes = segment_multiclass(&fm, &bank, &queries).unwrap();
        let sm = snap_map(&fm, &bank);
        assert_eq!(segment_multiclass_snapped(&sm, &bank, &queries).unwrap(), classes);
        for (p, &f) in fm.values.iter().enumerate() {
            let want = match snap(f, &bank) {
                Snapped::Background => 0,
                Snapped::Entry(i) => {
                    let scores: Vec<f64> = queries.iter().map(|q| relevancy(&bank.entries()[i].views, q)).collect();
                    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    scores.iter().position(|&s| s == max).unwrap() as u16 + 1
                }
            };
            assert_eq!(classes.classes[p], want);
        }
    }
}

#[test]
fn single_query_labels_all_foreground() {
    let (fm, bank) = query_workload(9, 6, 1, 8, 12, 12);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
    let q = QuerySpec::new(random_unit(&mut rng, 8), canon(&mut rng, 8), 0.5).unwrap();
    let classes = segment_multiclass(&fm, &bank, &[q]).unwrap();
    let sm = snap_map(&fm, &bank);
    for (c, &i) in classes.classes.iter().zip(&sm.indices) {
        assert_eq!(*c, if i == u32::MAX { 0 } else { 1 });
    }
    assert!(segment_multiclass(&fm, &bank, &[]).is_err());
}

#[test]
fn localize_and_segment_match_scans() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(4);
    for _ in 0..20 {
        let scores: Vec<f64> = (0..63).map(|_| rand::RngExt::random_range(&mut rng, 0.0..1.0)).collect();
        let rm = RelevancyMap::new(9, 7, scores.clone());
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = scores.iter().position(|&s| s == max).unwrap() as u32;
        assert_eq!(localize(&rm), (first % 9, first / 9));
        let mask = segment(&rm, 0.37);
        for (m, s) in mask.values.iter().zip(&scores) {
            assert_eq!(*m, *s > 0.37);
        }
    }
}

#[test]
fn snapped_variant_agrees() {
    let (fm, bank) = query_workload(12, 10, 2, 8, 16, 16);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    let q = QuerySpec::new(random_unit(&mut rng, 8), canon(&mut rng, 8), 0.5).unwrap();
    assert_eq!(relevancy_map_snapped(&snap_map(&fm, &bank), &bank, &q), relevancy_map(&fm, &bank, &q));
}

fn unit_vec(dim: usize) -> impl Strategy<Value = Embedding> {
    prop::collection::vec(-1.0f32..1.0, dim)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
        .prop_map(|v| Embedding(v).normalized())
}

proptest! {
    #[test]
    fn pairwise_term_is_shift_invariant(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -50.0f64..50.0) {
        prop_assert!((pairwise_term(a + c, b + c) - pairwise_term(a, b)).abs() <= 1e-12);
    }

    #[test]
    fn pairwise_term_matches_softmax(a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let direct = a.exp() / (a.exp() + b.exp());
        prop_assert!((pairwise_term(a, b) - direct).abs() <= 1e-14);
    }

    #[test]
    fn relevancy_monotone_in_logits(a in -2.0f64..2.0, b in -2.0f64..2.0, d in 1e-3f64..1.0) {
        prop_assert!(pairwise_term(a + d, b) > pairwise_term(a, b));
        prop_assert!(pairwise_term(a, b + d) < pairwise_term(a, b));
    }

    #[test]
    fn relevancy_in_unit_interval_and_permutation_invariant(
        views in prop::collection::vec(unit_vec(6), 1..4),
        canon in prop::collection::vec(unit_vec(6), 1..5),
        q in unit_vec(6),
        rot in 0usize..4,
    ) {
        let spec = QuerySpec::new(q.clone(), canon.clone(), 0.5).unwrap();
        let r = relevancy(&views, &spec);
        prop_assert!((0.0..1.0).contains(&r));
        let mut canon2 = canon.clone();
        canon2.reverse();
        let shift = rot % canon2.len();
        canon2.rotate_left(shift);
        let mut views2 = views.clone();
        views2.reverse();
        let spec2 = QuerySpec::new(q, canon2, 0.5).unwrap();
        prop_assert_eq!(relevancy(&views2, &spec2), r);
    }

    #[test]
    fn localize_invariant_under_increasing_transform(scores in prop::collection::vec(0.0f64..1.0, 1..80), k in 0.1f64..5.0) {
        let w = scores.len() as u32;
        let rm = RelevancyMap::new(w, 1, scores.clone());
        let t = RelevancyMap::new(w, 1, scores.iter().map(|s| (k * s).exp() + 3.0).collect());
        prop_assert_eq!(localize(&rm), localize(&t));
    }
}
