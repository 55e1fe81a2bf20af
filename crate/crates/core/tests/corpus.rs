use guided_clustering::corpus::*;
use ndarray::{array, Array2};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}

#[test]
fn duplicate_id_rejected() {
    let err = EmbeddingSet::new(vec!["a".into(), "a".into()], array![[0.0], [1.0]]).unwrap_err();
    assert!(err.to_string().contains("duplicate id"), "{err}");
}

#[test]
fn non_finite_names_record() {
    let err = EmbeddingSet::new(ids(2), array![[0.0, 1.0], [f64::NAN, 0.0]]).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("row 1") && msg.contains("x1"), "{msg}");
}

#[test]
fn too_few_rows() {
    assert!(EmbeddingSet::new(ids(1), array![[0.0]]).is_err());
}

#[test]
fn labels_with_gap_are_relabeled() {
    let l = Labels::from_raw(&[0, 2]);
    assert_eq!(l.values(), &[0, 1]);
    assert_eq!(l.mapping(), &[0, 2]);
    assert_eq!(l.raw(), vec![0, 2]);

    // oracle: rank among sorted distinct values
    let raw = [7u64, 3, 7, 11, 3, 42];
    let mut uniq = raw.to_vec();
    uniq.sort();
    uniq.dedup();
    let expect: Vec<usize> = raw.iter().map(|v| uniq.iter().position(|u| u == v).unwrap()).collect();
    assert_eq!(Labels::from_raw(&raw).values(), expect.as_slice());
}

#[test]
fn standardize_hand_example() {
    let set = EmbeddingSet::new(ids(2), array![[0.0, 0.0], [2.0, 0.0]]).unwrap();
    let (out, stats) = standardize(&set).unwrap();
    assert_eq!(out.vectors(), &array![[-1.0, 0.0], [1.0, 0.0]]);
    assert_eq!(stats.mean, vec![1.0, 0.0]);
    assert_eq!(stats.std, vec![1.0, 0.0]);
}

#[test]
fn standardize_repeated_row_is_zero() {
    let set = EmbeddingSet::new(ids(4), Array2::from_shape_fn((4, 3), |(_, j)| j as f64 + 0.5)).unwrap();
    let (out, _) = standardize(&set).unwrap();
    assert!(out.vectors().iter().all(|&v| v == 0.0));
}

#[test]
fn standardize_moments_and_idempotence() {
    let v = Array2::from_shape_fn((50, 4), |(i, j)| ((i * 7 + j * 13) % 17) as f64 * 0.3 + j as f64);
    let set = EmbeddingSet::new(ids(50), v).unwrap();
    let (once, _) = standardize(&set).unwrap();
    let stats = StandardizationStats::fit(once.vectors());
    for j in 0..4 {
        assert!(stats.mean[j].abs() < 1e-5);
        assert!((stats.std[j] - 1.0).abs() < 1e-4);
    }
    let (twice, _) = standardize(&once).unwrap();
    for (a, b) in once.vectors().iter().zip(twice.vectors()) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn invert_reproduces_input() {
    let v = Array2::from_shape_fn((10, 3), |(i, j)| (i as f64 - 3.0) * (j as f64 + 1.0) + 100.0);
    let stats = StandardizationStats::fit(&v);
    let back = stats.invert(&stats.apply(&v));
    for (a, b) in v.iter().zip(back.iter()) {
        assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
    }
}

#[test]
fn decode_rejects_bad_headers() {
    assert!(decode_matrix(b"EMB1", "t").is_err());
    let mut bytes = encode_matrix(&array![[1.0, 2.0]], 0);
    bytes[0] = b'X';
    assert!(decode_matrix(&bytes, "t").unwrap_err().to_string().contains("magic"));
    let mut bytes = encode_matrix(&array![[1.0, 2.0]], 0);
    bytes.pop();
    assert!(decode_matrix(&bytes, "t").is_err());
}

fn golden(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn golden_file_reads_bit_exact() {
    let set = load_embedding_set(golden("tiny")).unwrap();
    assert_eq!((set.n(), set.d()), (2, 3));
    assert_eq!(set.ids(), ["u1", "u2"]);
    assert_eq!(set.labels().unwrap().raw(), [7, 3]);
    assert_eq!(set.labels().unwrap().values(), [1, 0]);
    assert_eq!(set.texts().unwrap(), ["first text", "second text"]);
    let expected = [1.0f32, -2.5, 0.1, 3.25, 0.0, -1e-3];
    for (got, want) in set.vectors().iter().zip(expected) {
        assert_eq!(got.to_bits(), f64::from(want).to_bits());
    }
    // same file addressed through its .emb path
    let again = load_embedding_set(golden("tiny.emb")).unwrap();
    assert_eq!(again.vectors(), set.vectors());
}

#[test]
fn golden_file_rewrites_identically() {
    let set = load_embedding_set(golden("tiny")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    save_embedding_set(&set, tmp.path().join("copy")).unwrap();
    let original = std::fs::read(golden("tiny.emb")).unwrap();
    let written = std::fs::read(tmp.path().join("copy.emb")).unwrap();
    assert_eq!(original, written);
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("copy.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["labels"], serde_json::json!([7, 3]));
}

#[test]
fn save_then_load_roundtrip() {
    let v = Array2::from_shape_fn((5, 4), |(i, j)| (i * 4 + j) as f64 * 0.25 - 1.0);
    let set = EmbeddingSet::new(ids(5), v.clone())
        .unwrap()
        .with_raw_labels(&[10, 20, 10, 30, 20])
        .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let stem = tmp.path().join("nested/dir/set");
    save_embedding_set(&set, &stem).unwrap();
    let back = load_embedding_set(&stem).unwrap();
    assert_eq!(back.ids(), set.ids());
    assert_eq!(back.vectors(), &v);
    assert_eq!(back.labels().unwrap().raw(), [10, 20, 10, 30, 20]);
    assert!(back.texts().is_none());
}

#[test]
fn sidecar_shape_mismatch_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let stem = tmp.path().join("s");
    std::fs::copy(golden("tiny.emb"), tmp.path().join("s.emb")).unwrap();
    std::fs::write(tmp.path().join("s.meta.json"), r#"{"n":3,"d":3,"ids":["a","b","c"]}"#).unwrap();
    let msg = load_embedding_set(&stem).unwrap_err().to_string();
    assert!(msg.contains("3x3") && msg.contains("2x3"), "{msg}");
    assert!(msg.contains("s.meta.json"), "{msg}");
}

#[test]
fn nan_in_file_names_row_and_id() {
    let tmp = tempfile::tempdir().unwrap();
    let stem = tmp.path().join("bad");
    let mut bytes = encode_matrix(&array![[0.0, 1.0], [2.0, 3.0]], 0);
    let at = bytes.len() - 4;
    bytes[at..].copy_from_slice(&f32::NAN.to_le_bytes());
    std::fs::write(tmp.path().join("bad.emb"), bytes).unwrap();
    std::fs::write(tmp.path().join("bad.meta.json"), r#"{"n":2,"d":2,"ids":["p","q"]}"#).unwrap();
    let msg = load_embedding_set(&stem).unwrap_err().to_string();
    assert!(msg.contains("row 1") && msg.contains("\"q\""), "{msg}");
}

#[test]
fn missing_sidecar_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::copy(golden("tiny.emb"), tmp.path().join("lonely.emb")).unwrap();
    let msg = load_embedding_set(tmp.path().join("lonely")).unwrap_err().to_string();
    assert!(msg.contains("lonely.meta.json"), "{msg}");
}
