use guided_clustering::corpus::EmbeddingSet;
use guided_clustering::eval::*;
use guided_clustering::oracle::{Judge, JudgeConfig, JudgeKind, PromptSpec};
use guided_clustering::sampler::sample_random_triplets;
use guided_clustering::synth::{gaussian_mixture, MixtureSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best accuracy over every one-to-one relabeling of the predicted clusters.
pub fn brute_force_accuracy(pred: &[usize], gt: &[usize]) -> f64 {
    let size = pred.iter().chain(gt).max().unwrap() + 1;
    let best = permutations(size)
        .into_iter()
        .map(|perm| pred.iter().zip(gt).filter(|(p, g)| perm[**p] == **g).count())
        .max()
        .unwrap();
    best as f64 / pred.len() as f64
}

fn blobs(n: usize, k: usize, scale: f64) -> EmbeddingSet {
    gaussian_mixture(&MixtureSpec {
        n,
        k,
        d: 6,
        center_scale: scale,
        noise: 0.3,
        seed: 3,
    })
    .unwrap()
}

#[test]
fn hand_example() {
    let acc = hungarian_accuracy(&[1, 1, 0, 2, 2, 2], &[0, 0, 1, 1, 2, 2]).unwrap();
    assert!((acc - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(hungarian_accuracy(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.5);
    assert_eq!(hungarian_accuracy(&[5, 5, 9, 9, 7], &[0, 0, 1, 1, 2]).unwrap(), 1.0);
    assert!(hungarian_accuracy(&[0, 1], &[0]).is_err());
    assert!(hungarian_accuracy(&[], &[]).is_err());
}

#[test]
fn rectangular_matchings() {
    // more clusters than labels and the reverse
    assert!((hungarian_accuracy(&[0, 1, 2, 3], &[0, 0, 1, 1]).unwrap() - 0.5).abs() < 1e-12);
    assert!((hungarian_accuracy(&[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn assignment_on_a_known_matrix() {
    let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
    let cols = min_cost_assignment(&cost);
    let total: f64 = cols.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    assert_eq!(total, 5.0);
}

#[test]
fn nmi_reference_values() {
    assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-12);
    assert!(nmi(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap().abs() < 1e-12);
    assert_eq!(nmi(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
    // one cluster against two balanced labels: I = 0
    assert!(nmi(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap().abs() < 1e-12);
    // H(pred) = ln 2, H(gt) = ln 4, I = ln 2
    let v = nmi(&[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap();
    assert!((v - 2.0f64.ln() / (1.5 * 2.0f64.ln())).abs() < 1e-12);
}

#[test]
fn report_uses_population_std() {
    let r = EvalReport::from_runs(3, vec![0, 1], vec![0.6, 0.8], vec![0.5, 0.5]);
    assert!((r.accuracy_mean - 0.7).abs() < 1e-12);
    assert!((r.accuracy_std - 0.1).abs() < 1e-12);
    assert_eq!(r.nmi_std, 0.0);
    assert_eq!(r.accuracy_cell(), "70.00 (10.00)");
    let table = format_table(&[("base", &r), ("refined", &r)]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("method"));
    assert!(lines[2].contains("70.00 (10.00)") && lines[2].contains("50.00 (0.00)"));
    assert_eq!(lines[1].len(), lines[2].len());
}

#[test]
fn separated_blobs_score_perfectly() {
    let set = blobs(300, 4, 20.0);
    let r = evaluate_kmeans(&set, None, &DEFAULT_SEEDS).unwrap();
    assert_eq!(r.k, 4);
    assert_eq!(r.seeds, DEFAULT_SEEDS);
    assert_eq!(r.accuracy_mean, 1.0);
    assert_eq!(r.accuracy_std, 0.0);
    assert!((r.nmi_mean - 1.0).abs() < 1e-12);
}

#[test]
fn shuffled_labels_sit_near_chance() {
    let set = blobs(2000, 5, 5.0);
    let mut raw = set.labels().unwrap().raw();
    raw.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let shuffled = set.clone().with_raw_labels(&raw).unwrap();
    let r = evaluate_kmeans(&shuffled, None, &[0, 1]).unwrap();
    // the best matching is never below the class share of a balanced set
    assert!(r.accuracy_mean >= 0.2);
    assert!(r.accuracy_mean < 0.25, "{}", r.accuracy_mean);
}

#[test]
fn evaluation_needs_labels() {
    let set = blobs(50, 2, 5.0).without_labels();
    assert!(evaluate_kmeans(&set, None, &[0]).is_err());
}

#[test]
fn granularity_error_reference_points() {
    assert_eq!(granularity_error(77, 77), 0.0);
    assert!((granularity_error(99, 77) - 28.57).abs() < 0.005);
    assert!((granularity_error(46, 64) - 28.13).abs() < 0.005);
}

fn judged_accuracy(kind: JudgeKind, flip: f64, set: &EmbeddingSet, budget: usize) -> TripletAccuracy {
    let triplets = sample_random_triplets(set, budget, 4).unwrap().triplets;
    let mut judge = Judge::new(JudgeConfig {
        kind,
        flip_probability: flip,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let judged = judge.judge_triplets(&PromptSpec::default(), &triplets, set).unwrap();
    triplet_accuracy(&judged.judgments, set).unwrap()
}

#[test]
fn ground_truth_judge_is_always_right() {
    let set = blobs(400, 4, 1.0);
    let acc = judged_accuracy(JudgeKind::GroundTruth, 0.0, &set, 500);
    assert!(acc.gt_count > 100);
    assert_eq!(acc.judge, Some(1.0));
}

#[test]
fn noisy_judge_accuracy_is_binomial() {
    let set = blobs(2000, 4, 1.0);
    let acc = judged_accuracy(JudgeKind::Noisy, 0.25, &set, 4000);
    let m = acc.gt_count as f64;
    let sd = (0.25 * 0.75 / m).sqrt();
    let got = acc.judge.unwrap();
    assert!((got - 0.75).abs() < 4.0 * sd, "{got} over {m} triplets");
}

#[test]
fn no_label_triplets_leave_accuracy_undefined() {
    // a single class makes every triplet ambiguous by label
    let set = blobs(50, 1, 1.0);
    let acc = judged_accuracy(JudgeKind::GroundTruth, 0.0, &set, 20);
    assert_eq!(acc.gt_count, 0);
    assert_eq!(acc.judge, None);
    assert_eq!(acc.embedding, None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn hungarian_matches_brute_force(
        (pred, gt) in (1usize..=12).prop_flat_map(|n| (
            prop::collection::vec(0usize..6, n),
            prop::collection::vec(0usize..6, n),
        ))
    ) {
        let fast = hungarian_accuracy(&pred, &gt).unwrap();
        prop_assert!((fast - brute_force_accuracy(&pred, &gt)).abs() < 1e-12);
    }

    #[test]
    fn relabeling_changes_nothing(gt in prop::collection::vec(0usize..5, 2..30), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..5).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let relabeled: Vec<usize> = gt.iter().map(|&g| perm[g] + 10).collect();
        prop_assert_eq!(hungarian_accuracy(&relabeled, &gt).unwrap(), 1.0);
        prop_assert!((nmi(&relabeled, &gt).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nmi_is_bounded(
        (a, b) in (1usize..40).prop_flat_map(|n| (
            prop::collection::vec(0usize..6, n),
            prop::collection::vec(0usize..6, n),
        ))
    ) {
        let v = nmi(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - nmi(&b, &a).unwrap()).abs() < 1e-12);
    }
}
