use std::io::Write;

use proptest::prelude::*;
use relaxsoft::eval::{approx_mpr, average_ranks, pearson, precision_at_k, target_rank, test_likelihood};
use relaxsoft::ingest::{
    load_pair_cache, load_ratings_csv, pairs_from_ratings, pairs_from_text, parse_analogy, parse_similarity,
    save_pair_cache, split_dataset, split_sizes, AnalogySection, RatingsColumns,
};
use relaxsoft::{init_params, Matrix, ModelParams, PairDataset, Split};

fn pairs_strategy() -> impl Strategy<Value = (ModelParams, Vec<(usize, usize)>)> {
    (1usize..5, 2usize..15, 1usize..4, any::<u64>()).prop_flat_map(|(ci, cj, d, seed)| {
        let params = init_params(ci, cj, d, seed, 1.0).unwrap();
        (Just(params), prop::collection::vec((0..ci, 0..cj), 1..30))
    })
}

#[test]
fn rank_breaks_ties_by_id() {
    let s = [0.5, 2.0, 0.5, 3.0, 0.5];
    assert_eq!(target_rank(&s, 3), 1);
    assert_eq!(target_rank(&s, 1), 2);
    assert_eq!(target_rank(&s, 0), 3);
    assert_eq!(target_rank(&s, 2), 4);
    assert_eq!(target_rank(&s, 4), 5);
}

#[test]
fn correlations_against_hand_values() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let y = [2.0, 4.0, 5.0, 4.0, 5.0];
    // cov 6/4 over sqrt(10/4 * 6/4)
    assert!((pearson(&x, &y).unwrap() - 6.0 / 60f64.sqrt()).abs() < 1e-12);
    assert_eq!(average_ranks(&y), vec![1.0, 2.5, 4.5, 2.5, 4.5]);
    assert!(pearson(&[1.0, 1.0], &[2.0, 3.0]).is_err());
}

#[test]
fn likelihood_of_a_zero_model_is_uniform() {
    let p = ModelParams::new(Matrix::zeros(2, 3), Matrix::zeros(8, 3)).unwrap();
    let l = test_likelihood(&p, &[(0, 1), (1, 7)]).unwrap();
    assert!((l - 0.125).abs() < 1e-15);
    let mpr = approx_mpr(&p, &[(0, 1), (1, 7)], 50, 0).unwrap();
    assert_eq!(mpr, 0.5);
}

proptest! {
    #[test]
    fn precision_grows_with_k((p, pairs) in pairs_strategy()) {
        let mut last = 0.0;
        for k in 1..=p.card_j() {
            let v = precision_at_k(&p, &pairs, k).unwrap();
            prop_assert!(v >= last);
            last = v;
        }
        prop_assert_eq!(last, 1.0);
    }

    #[test]
    fn mpr_is_a_fraction((p, pairs) in pairs_strategy(), m in 1usize..40, seed in any::<u64>()) {
        let v = approx_mpr(&p, &pairs, m, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, approx_mpr(&p, &pairs, m, seed).unwrap());
    }

    #[test]
    fn split_sizes_cover_everything(n in 3usize..5000, a in 0.05f64..0.9, b in 0.0f64..1.0) {
        let b = b * (1.0 - a) * 0.9;
        let f = [a, b, 1.0 - a - b];
        let s = split_sizes(n, f).unwrap();
        prop_assert_eq!(s.iter().sum::<usize>(), n);
        for k in 0..3 {
            prop_assert!((s[k] as f64 - f[k] * n as f64).abs() <= 1.0 + 1e-9);
        }
    }
}

#[test]
fn forward_windows() {
    let (vocab, ds) = pairs_from_text(&["a", "b", "c", "a", "rare"], 2, 3).unwrap();
    assert_eq!(vocab.card_i(), 3);
    assert!(vocab.context_id("rare").is_none());
    let id = |w: &str| vocab.context_id(w).unwrap();
    let expected = vec![
        (id("a"), id("b")),
        (id("a"), id("c")),
        (id("b"), id("c")),
        (id("b"), id("a")),
        (id("c"), id("a")),
    ];
    assert_eq!(ds.pairs(), expected.as_slice());
    assert_eq!(vocab.context_counts()[id("a")], 2);
    assert_eq!(vocab.target_counts()[id("a")], 2);
}

#[test]
fn ratings_keep_liked_items_in_time_order() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "userId,movieId,rating,timestamp").unwrap();
    for row in ["u1,m3,5,30", "u1,m1,4.5,10", "u1,m9,2,15", "u1,m2,4,20", "u2,m1,3,1", "u2,m2,4,5"] {
        writeln!(f, "{row}").unwrap();
    }
    f.flush().unwrap();
    let events = load_ratings_csv(f.path(), &RatingsColumns::default()).unwrap();
    assert_eq!(events.len(), 6);
    let (vocab, ds) = pairs_from_ratings(&events, 4.0, 100, 5).unwrap();
    assert!(vocab.context_id("m9").is_none());
    let id = |w: &str| vocab.context_id(w).unwrap();
    assert_eq!(ds.pairs(), &[(id("m1"), id("m2")), (id("m1"), id("m3")), (id("m2"), id("m3"))]);

    let (empty, none) = pairs_from_ratings(&events, 9.0, 100, 5).unwrap();
    assert!(empty.is_empty() && none.is_empty());
}

#[test]
fn pair_cache_round_trip() {
    let (vocab, ds) = pairs_from_text(&"x y z x y y z x".split(' ').collect::<Vec<_>>(), 2, 10).unwrap();
    let ds = split_dataset(&ds, [0.5, 0.25, 0.25], 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.bin");
    save_pair_cache(&ds, &vocab, &path).unwrap();
    let (v2, d2) = load_pair_cache(&path).unwrap();
    assert_eq!(v2, vocab);
    assert_eq!(d2.pairs(), ds.pairs());
    assert_eq!(d2.split_labels(), ds.split_labels());
    assert_eq!(d2.count(Split::Train) + d2.count(Split::Valid) + d2.count(Split::Test), ds.len());
}

#[test]
fn split_is_seeded() {
    let ds = PairDataset::new((0..100).map(|k| (k % 3, k % 5)).collect(), "toy");
    let a = split_dataset(&ds, [0.8, 0.1, 0.1], 1).unwrap();
    let b = split_dataset(&ds, [0.8, 0.1, 0.1], 1).unwrap();
    let c = split_dataset(&ds, [0.8, 0.1, 0.1], 2).unwrap();
    assert_eq!(a.split_labels(), b.split_labels());
    assert_ne!(a.split_labels(), c.split_labels());
    assert_eq!([a.count(Split::Train), a.count(Split::Valid), a.count(Split::Test)], [80, 10, 10]);
}

#[test]
fn evaluation_files() {
    let sim = parse_similarity("# header\ntiger\tcat\t7.35\nbook paper 7.46\n").unwrap();
    assert_eq!(sim.len(), 2);
    assert_eq!(sim[1].score, 7.46);
    assert!(parse_similarity("one two\n").is_err());
    let quads = parse_analogy(": capital-common-countries\nAthens Greece Baghdad Iraq\n: gram1-adjective-to-adverb\namazing amazingly apparent apparently\n").unwrap();
    assert_eq!(quads.len(), 2);
    assert_eq!(quads[0].section, AnalogySection::Semantic);
    assert_eq!(quads[1].section, AnalogySection::Syntactic);
}
