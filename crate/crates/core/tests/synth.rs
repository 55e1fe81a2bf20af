use guided_clustering::corpus::standardize;
use guided_clustering::eval::evaluate_kmeans;
use guided_clustering::synth::*;

#[test]
fn mixture_shape_labels_and_texts() {
    let set = gaussian_mixture(&MixtureSpec {
        n: 50,
        k: 5,
        d: 3,
        ..Default::default()
    })
    .unwrap();
    assert_eq!((set.n(), set.d()), (50, 3));
    assert_eq!(set.labels().unwrap().get(7), 2);
    assert_eq!(set.texts().unwrap()[7], synthetic_text(7, 2));
    assert_eq!(synthetic_text(7, 2), "sample 7 about topic 2");
    assert!(gaussian_mixture(&MixtureSpec { k: 0, ..Default::default() }).is_err());
}

#[test]
fn generators_are_seeded() {
    let spec = MixtureSpec {
        n: 40,
        ..Default::default()
    };
    let a = gaussian_mixture(&spec).unwrap();
    assert_eq!(a.vectors(), gaussian_mixture(&spec).unwrap().vectors());
    let b = gaussian_mixture(&MixtureSpec { seed: 1, ..spec }).unwrap();
    assert_ne!(a.vectors(), b.vectors());
}

#[test]
fn corruption_keeps_metadata_and_adds_dimensions() {
    let set = gaussian_mixture(&MixtureSpec {
        n: 100,
        k: 4,
        d: 5,
        ..Default::default()
    })
    .unwrap();
    let spec = CorruptionSpec {
        nuisance_dims: 7,
        nuisance_groups: 3,
        ..Default::default()
    };
    let bad = corrupt(&set, &spec).unwrap();
    assert_eq!(bad.d(), 12);
    assert_eq!(bad.ids(), set.ids());
    assert_eq!(bad.labels(), set.labels());
    assert_eq!(bad.texts(), set.texts());
}

#[test]
fn corruption_hurts_clustering() {
    let clean = gaussian_mixture(&MixtureSpec::default()).unwrap();
    let base = standardize(&corrupt(&clean, &CorruptionSpec::default()).unwrap()).unwrap().0;
    let a = evaluate_kmeans(&clean, None, &[0]).unwrap().accuracy_mean;
    let b = evaluate_kmeans(&base, None, &[0]).unwrap().accuracy_mean;
    assert!(b + 0.1 < a, "clean {a} base {b}");
}

#[test]
fn hierarchy_labels_follow_sub_blobs() {
    let spec = HierarchySpec {
        n: 60,
        classes: 3,
        subclusters: 4,
        ..Default::default()
    };
    let set = hierarchical_mixture(&spec).unwrap();
    let labels = set.labels().unwrap();
    assert_eq!(labels.num_classes(), 3);
    // point i sits in sub-blob i % 12, class (i % 12) / 4
    for i in 0..60 {
        assert_eq!(labels.raw()[i], ((i % 12) / 4) as u64);
    }
    assert!(hierarchical_mixture(&HierarchySpec { n: 5, ..spec }).is_err());
}
