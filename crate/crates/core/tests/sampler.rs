use std::collections::HashSet;
use std::fs;

use guided_clustering::cluster::*;
use guided_clustering::corpus::*;
use guided_clustering::sampler::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ndarray::Array2;
use proptest::prelude::*;
use rand_distr::{Distribution, Normal};

fn profile(values: Vec<f64>) -> EntropyProfile {
    EntropyProfile { values }
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

#[test]
fn top_gamma_anchors() {
    let p = profile(vec![0.1, 0.9, 0.5, 0.7, 0.3, 0.2, 0.05, 0.15, 0.25, 0.35]);
    let a = rank_anchors(&p, &SamplerConfig::default(), &mut rng()).unwrap();
    assert_eq!(a, vec![1, 3]);
}

#[test]
fn ties_break_by_index() {
    let p = profile(vec![0.4; 10]);
    let a = rank_anchors(&p, &SamplerConfig::default(), &mut rng()).unwrap();
    assert_eq!(a, vec![0, 1]);
}

#[test]
fn interval_window() {
    // entropy equals reversed index, so rank r holds instance 99 - r
    let p = profile((0..100).map(|i| i as f64).collect());
    let cfg = SamplerConfig {
        interval: Some((0.4, 0.6)),
        ..Default::default()
    };
    let a = rank_anchors(&p, &cfg, &mut rng()).unwrap();
    assert_eq!(a.len(), 20);
    assert_eq!(a, (40..60).map(|r| 99 - r).collect::<Vec<_>>());
    let empty = SamplerConfig {
        interval: Some((0.5, 0.5)),
        ..Default::default()
    };
    assert!(rank_anchors(&p, &empty, &mut rng()).is_err());
}

#[test]
fn nearest_count_rule() {
    let cfg = SamplerConfig::default();
    assert_eq!(nearest_count(100, &cfg), 2);
    assert_eq!(nearest_count(150, &cfg), 3);
    assert_eq!(nearest_count(10, &cfg), 2);
    assert_eq!(nearest_count(2, &cfg), 2);
}

fn toy_model(points: &Array2<f64>, k: usize) -> (EmbeddingSet, ClusterModel, SoftAssignment, EntropyProfile) {
    let set = EmbeddingSet::from_vectors(points.clone()).unwrap();
    let model = kmeans(&set, k, 0).unwrap();
    let soft = soft_assign(&set, &model, 1.0).unwrap();
    let prof = entropy(&soft);
    (set, model, soft, prof)
}

#[test]
fn nearest_includes_own_cluster() {
    let set = EmbeddingSet::from_vectors(Array2::from_shape_fn((6, 1), |(i, _)| i as f64)).unwrap();
    let model = ClusterModel::from_assignments(set.vectors(), vec![0, 0, 1, 1, 2, 2], 3, Method::Kmeans);
    // soft row that prefers other clusters over the anchor's own
    let mut probs = Array2::from_elem((6, 3), 1.0 / 3.0);
    probs.row_mut(0).assign(&ndarray::array![0.1, 0.5, 0.4]);
    let soft = SoftAssignment { probs, alpha: 1.0 };
    let near = nearest_clusters(0, &model, &soft, &SamplerConfig::default()).unwrap();
    assert_eq!(near, vec![1, 0]);

    let one = ClusterModel::from_assignments(set.vectors(), vec![0; 6], 1, Method::Kmeans);
    assert!(nearest_clusters(0, &one, &soft, &SamplerConfig::default()).is_err());
}

fn mixture(n_per: usize, centers: &[(f64, f64)], sd: f64, seed: u64) -> Array2<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sd).unwrap();
    let n = n_per * centers.len();
    Array2::from_shape_fn((n, 2), |(i, j)| {
        let c = centers[i / n_per];
        (if j == 0 { c.0 } else { c.1 }) + noise.sample(&mut r)
    })
}

#[test]
fn triplets_respect_nearest_sets_and_budget() {
    let pts = mixture(60, &[(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (3.0, 3.0)], 1.0, 1);
    let (set, model, soft, prof) = toy_model(&pts, 4);
    let cfg = SamplerConfig {
        budget: 50,
        ..Default::default()
    };
    let s = sample_triplets(&set, &model, &soft, &prof, &cfg, 7).unwrap();
    assert_eq!(s.triplets.len(), 50);
    assert!(!s.stalled);
    let mut keys = HashSet::new();
    for t in &s.triplets {
        assert!(t.anchor != t.choice1 && t.anchor != t.choice2 && t.choice1 != t.choice2);
        let near = nearest_clusters(t.anchor, &model, &soft, &cfg).unwrap();
        assert!(near.contains(&model.assignments[t.choice1]));
        assert!(near.contains(&model.assignments[t.choice2]));
        assert!(keys.insert((t.anchor, t.choice1.min(t.choice2), t.choice1.max(t.choice2))));
    }
    let again = sample_triplets(&set, &model, &soft, &prof, &cfg, 7).unwrap();
    assert_eq!(s, again);
}

#[test]
fn tiny_corpus_stalls() {
    let pts = ndarray::array![[0.0], [0.1], [5.0]];
    let (set, model, soft, prof) = toy_model(&pts, 2);
    let cfg = SamplerConfig {
        budget: 10,
        ..Default::default()
    };
    let s = sample_triplets(&set, &model, &soft, &prof, &cfg, 0).unwrap();
    assert!(s.stalled);
    // one anchor, one choice per cluster: at most one distinct triplet
    assert!(s.triplets.len() <= 1);
    assert_eq!(s.attempts, 200);
}

#[test]
fn random_triplets() {
    let set = EmbeddingSet::from_vectors(Array2::zeros((3, 1)) + ndarray::array![[0.0], [1.0], [2.0]]).unwrap();
    let s = sample_random_triplets(&set, 10, 1).unwrap();
    assert!(s.stalled);
    assert_eq!(s.triplets.len(), 3);
    let anchors: HashSet<usize> = s.triplets.iter().map(|t| t.anchor).collect();
    assert_eq!(anchors.len(), 3);
    assert_eq!(s, sample_random_triplets(&set, 10, 1).unwrap());

    let two = EmbeddingSet::from_vectors(ndarray::array![[0.0], [1.0]]).unwrap();
    assert!(sample_random_triplets(&two, 10, 1).is_err());
}

#[test]
fn random_budget_filled_on_large_corpus() {
    let set = EmbeddingSet::from_vectors(Array2::from_shape_fn((3080, 1), |(i, _)| i as f64)).unwrap();
    let s = sample_random_triplets(&set, 1024, 3).unwrap();
    assert_eq!(s.triplets.len(), 1024);
    assert!(s.triplets.iter().all(|t| t.source == TripletSource::Random));
}

#[test]
fn jsonl_round_trip() {
    let set = EmbeddingSet::from_vectors(Array2::from_shape_fn((10, 1), |(i, _)| i as f64)).unwrap();
    let s = sample_random_triplets(&set, 5, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.jsonl");
    write_triplets(&p, &s.triplets, &set).unwrap();
    assert_eq!(read_triplets(&p, &set).unwrap(), s.triplets);
    let text = fs::read_to_string(&p).unwrap();
    assert!(text.lines().next().unwrap().contains("\"source\":\"random\""));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sampled_triplets_keep_their_invariants(
        n_per in 3usize..25,
        k in 2usize..6,
        budget in 1usize..150,
        gamma in 0.05f64..1.0,
        seed in 0u64..1000,
    ) {
        let centers = [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0), (1.0, 1.0)];
        let pts = mixture(n_per, &centers, 0.8, seed);
        let (set, model, soft, prof) = toy_model(&pts, k);
        let cfg = SamplerConfig { budget, gamma, ..Default::default() };
        let s = sample_triplets(&set, &model, &soft, &prof, &cfg, seed).unwrap();
        prop_assert!(s.triplets.len() <= budget);
        prop_assert!(s.triplets.len() == budget || s.stalled);
        let anchors: HashSet<usize> = rank_anchors(&prof, &cfg, &mut rng()).unwrap().into_iter().collect();
        let mut keys = HashSet::new();
        for t in &s.triplets {
            prop_assert!(t.anchor != t.choice1 && t.anchor != t.choice2 && t.choice1 != t.choice2);
            prop_assert!(anchors.contains(&t.anchor));
            let near = nearest_clusters(t.anchor, &model, &soft, &cfg).unwrap();
            prop_assert!(near.contains(&model.assignments[t.choice1]) && near.contains(&model.assignments[t.choice2]));
            prop_assert!(keys.insert((t.anchor, t.choice1.min(t.choice2), t.choice1.max(t.choice2))));
        }
    }
}
