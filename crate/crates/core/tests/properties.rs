use std::collections::{BTreeMap, HashSet};

use chrono::{TimeZone, Utc};
use forge_core::cluster::{elbow, kmeans_restarts, squared_distance, KMeansParams};
use forge_core::corpus::{select_comments, ChannelCorpus, Comment, Video};
use forge_core::dialogue::{cosine, normalize_title, title_similarity, IndexEntry, Storyline, SummaryIndex};
use forge_core::distill::{validate_dimension_set, Dimension, DimensionValueSet, Value};
use forge_core::gateway::EmbeddingVector;
use forge_core::metrics::adjusted_rand_index;
use forge_core::ExecMode;
use proptest::prelude::*;

fn points(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_d).prop_flat_map(move |d| prop::collection::vec(prop::collection::vec(-50.0..50.0f64, d), 2..=max_n))
}

fn corpus_from(lengths: &[Vec<usize>]) -> ChannelCorpus {
    let at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let videos = lengths
        .iter()
        .enumerate()
        .map(|(v, lens)| {
            let video_id = format!("v{v}");
            let comments = lens
                .iter()
                .enumerate()
                .map(|(c, &len)| Comment {
                    comment_id: format!("c{v}_{c}"),
                    author_id: format!("a{c}"),
                    text: "é".repeat(len),
                    created_at: at,
                    video_id: video_id.clone(),
                })
                .collect();
            Video {
                video_id,
                title: format!("Video {v}"),
                description: String::new(),
                transcript: String::new(),
                comments,
            }
        })
        .collect();
    ChannelCorpus {
        channel_id: "ch".into(),
        name: "Channel".into(),
        description: String::new(),
        subscriber_count: 0,
        videos,
    }
}

fn valid_set() -> impl Strategy<Value = DimensionValueSet> {
    prop::collection::btree_set("[a-z]{3,10}", 2..5).prop_flat_map(|names| {
        let dims: Vec<_> = names
            .into_iter()
            .map(|name| {
                prop::collection::btree_set("[A-Z][a-z]{2,8}", 3..6).prop_map(move |labels| Dimension {
                    name: format!("{name} focus"),
                    values: labels
                        .into_iter()
                        .filter(|l| l != "None")
                        .map(|l| Value {
                            definition: format!("Viewers who are {l}."),
                            label: l,
                        })
                        .collect(),
                })
            })
            .collect();
        dims.prop_map(|dimensions| DimensionValueSet { dimensions })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kmeans_history_never_rises(pts in points(40, 4), k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(pts.len() >= k);
        let r = kmeans_restarts(&pts, KMeansParams::new(k, seed), 3, ExecMode::Sequential).unwrap();
        for w in r.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
        }
        prop_assert!(r.cluster_sizes().iter().all(|&s| s > 0));
        let recomputed: f64 = pts.iter().zip(&r.assignments).map(|(p, &a)| squared_distance(p, &r.centroids[a])).sum();
        prop_assert!((recomputed - r.inertia).abs() <= 1e-9 * r.inertia.max(1.0));
    }

    #[test]
    fn kmeans_ignores_exec_mode(pts in points(30, 3), k in 1usize..4, seed in any::<u64>()) {
        prop_assume!(pts.len() >= k);
        let a = kmeans_restarts(&pts, KMeansParams::new(k, seed), 4, ExecMode::Sequential).unwrap();
        let b = kmeans_restarts(&pts, KMeansParams::new(k, seed), 4, ExecMode::Parallel).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn elbow_stays_in_range(values in prop::collection::vec(0.0..1e6f64, 2..10), k_min in 1usize..4) {
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let table: BTreeMap<usize, f64> = sorted.iter().enumerate().map(|(i, v)| (i + 1, *v)).collect();
        let k_max = table.len();
        prop_assume!(k_min <= k_max);
        let k = elbow(&table, k_min, k_max);
        prop_assert!((k_min..=k_max).contains(&k));
    }

    #[test]
    fn selection_covers_every_video(
        lengths in prop::collection::vec(prop::collection::vec(0usize..60, 0..8), 1..6),
        cap in 1usize..12,
        supplement in 0usize..4,
    ) {
        let corpus = corpus_from(&lengths);
        prop_assume!(corpus.comment_count() > 0);
        let sel = select_comments(&corpus, cap, supplement).unwrap();
        let unique: HashSet<&String> = sel.selected.iter().collect();
        prop_assert_eq!(unique.len(), sel.len());

        let pool = cap.min(corpus.comment_count());
        let longest = corpus.comments().map(|c| c.char_len()).collect::<Vec<_>>();
        let mut sorted = longest.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let threshold = sorted[pool - 1];
        for id in &sel.selected[..pool] {
            prop_assert!(corpus.comment(id).unwrap().char_len() >= threshold);
        }
        let pooled: HashSet<&str> = sel.selected[..pool].iter().map(|id| corpus.comment(id).unwrap().video_id.as_str()).collect();
        for v in &corpus.videos {
            let picked = sel.selected.iter().filter(|id| corpus.comment(id).unwrap().video_id == v.video_id).count();
            if !pooled.contains(v.video_id.as_str()) {
                prop_assert_eq!(picked, supplement.min(v.comments.len()));
            }
        }
    }

    #[test]
    fn ari_is_symmetric_and_bounded(pairs in prop::collection::vec((0u8..4, 0u8..4), 2..40)) {
        let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let ab = adjusted_rand_index(&a, &b);
        prop_assert!((ab - adjusted_rand_index(&b, &a)).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
        prop_assert!((adjusted_rand_index(&a, &a) - 1.0).abs() < 1e-12);
        let renamed: Vec<u8> = a.iter().map(|x| 7 - x).collect();
        prop_assert!((adjusted_rand_index(&a, &renamed) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn search_is_sorted_and_mode_free(
        vectors in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 1..30),
        query in prop::collection::vec(-1.0..1.0f64, 6),
        m in 0usize..10,
    ) {
        let entries = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| IndexEntry {
                video_id: format!("v{i}"),
                title: format!("t{i}"),
                summary: String::new(),
                vector: EmbeddingVector::new(v.clone()),
            })
            .collect();
        let index = SummaryIndex::from_entries(entries).unwrap();
        let seq = index.search(&query, m, ExecMode::Sequential);
        prop_assert_eq!(seq.len(), m.min(vectors.len()));
        prop_assert!(seq.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert!(seq.iter().all(|r| (-1.0 - 1e-12..=1.0 + 1e-12).contains(&r.score)));
        prop_assert_eq!(seq, index.search(&query, m, ExecMode::Parallel));
    }

    #[test]
    fn cosine_is_scale_free(a in prop::collection::vec(-5.0..5.0f64, 4), b in prop::collection::vec(-5.0..5.0f64, 4), s in 0.1..10.0f64) {
        let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
        prop_assert!((cosine(&a, &b) - cosine(&scaled, &b)).abs() < 1e-9);
        prop_assert!((cosine(&a, &b) - cosine(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn storyline_slices_and_revisions(body in "\\PC{1,80}", start in 0usize..80, len in 1usize..80, wrong in 2u64..50) {
        let mut s = Storyline::new("s", "topic", &body);
        let n = s.char_len();
        match s.slice(start, start + len) {
            Ok(text) => prop_assert_eq!(text.chars().count(), len),
            Err(_) => prop_assert!(start + len > n),
        }
        prop_assert!(s.patch(wrong, "x").is_err());
        prop_assert_eq!(s.patch(1, "x").unwrap(), 2);
        prop_assert!(s.patch(1, "y").is_err());
    }

    #[test]
    fn title_normalization_is_idempotent(t in "[ A-Za-z0-9!?.,']{1,40}") {
        let once = normalize_title(&t);
        prop_assert_eq!(normalize_title(&once), once.clone());
        if !once.is_empty() {
            prop_assert!((title_similarity(&t, &once) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn valid_sets_survive_json(set in valid_set()) {
        prop_assume!(set.dimensions.iter().all(|d| d.values.len() >= 3));
        prop_assert!(validate_dimension_set(&set).is_ok());
        let back: DimensionValueSet = serde_json::from_str(&set.to_json()).unwrap();
        prop_assert_eq!(&back, &set);
        prop_assert!(validate_dimension_set(&back).is_ok());
    }
}
