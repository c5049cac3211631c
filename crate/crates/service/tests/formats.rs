use proptest::prelude::*;
use semsplat::synthetic::random_scene;
use semsplat::{build_bank, snap, Embedding, FeatureMap, LabelMap, SemanticGaussian, ViewEmbedding};
use semsplat_service::bankfile::{bank_from_json, bank_to_json, EmbeddingRecords};
use semsplat_service::bundle::{synthetic_bundle, SceneBundle, SCENE_FILE};
use semsplat_service::format::{decode_scene, encode_scene, FormatError};
use semsplat_service::png::{decode_labels, encode_labels};
use semsplat_service::{read_scene, write_scene, SceneFile};

fn bits(g: &SemanticGaussian) -> Vec<u32> {
    g.mean
        .iter()
        .chain(&g.scale)
        .chain(&g.rotation)
        .chain(std::iter::once(&g.opacity))
        .chain(&g.color)
        .chain(&g.feature)
        .map(|v| v.to_bits())
        .collect()
}

fn scene(seed: u64, n: usize) -> SceneFile {
    let (gaussians, cam) = random_scene(seed, n, 32, 24);
    SceneFile {
        name: format!("scene-{seed}"),
        seed,
        cameras: vec![cam, cam],
        pixel_aligned: false,
        gaussians,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scene_round_trip_is_bit_exact(seed in any::<u64>(), n in 0usize..200) {
        let s = scene(seed, n);
        let mut buf = Vec::new();
        encode_scene(&s, &mut buf).unwrap();
        let back = decode_scene(&buf).unwrap();
        prop_assert_eq!(back.gaussians.len(), n);
        for (a, b) in s.gaussians.iter().zip(&back.gaussians) {
            prop_assert_eq!(bits(a), bits(b));
        }
        prop_assert_eq!(&back, &s);
        let mut again = Vec::new();
        encode_scene(&back, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn bank_round_trip_preserves_snapping(
        n in 1usize..60,
        seed in any::<u64>(),
        feats in prop::collection::vec(prop::array::uniform3(-1.1f32..1.1), 1..100),
    ) {
        let labels: Vec<u16> = (1..=n as u16).collect();
        let maps = vec![LabelMap::new(n as u32, 1, labels.clone()).unwrap(); 2];
        let records: Vec<ViewEmbedding> = labels
            .iter()
            .filter(|&&l| l % 3 != 0)
            .map(|&l| ViewEmbedding { view: (l % 2) as usize, label: l, embedding: Embedding(vec![l as f32, 1.0, -0.5]) })
            .collect();
        let bank = build_bank(&maps, &records, 3, seed).unwrap();
        let back = bank_from_json(&bank_to_json(&bank)).unwrap();
        prop_assert_eq!(&back, &bank);
        for f in feats {
            prop_assert_eq!(snap(f, &back), snap(f, &bank));
        }
    }

    #[test]
    fn label_png_round_trip(w in 1u32..20, h in 1u32..20, seed in any::<u16>()) {
        let labels = (0..w * h).map(|i| (i as u16).wrapping_mul(seed | 1)).collect();
        let map = LabelMap::new(w, h, labels).unwrap();
        prop_assert_eq!(decode_labels(&encode_labels(&map)).unwrap(), map);
    }
}

#[test]
fn empty_scene_is_valid() {
    let s = SceneFile {
        name: String::new(),
        seed: 0,
        cameras: vec![],
        pixel_aligned: false,
        gaussians: vec![],
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.slgs");
    write_scene(&path, &s).unwrap();
    assert_eq!(read_scene(&path).unwrap(), s);
}

#[test]
fn corrupted_magic_is_rejected() {
    let mut buf = Vec::new();
    encode_scene(&scene(1, 10), &mut buf).unwrap();
    buf[0] = b'X';
    assert!(matches!(decode_scene(&buf), Err(FormatError::Magic(m)) if &m == b"XLGS"));
}

#[test]
fn truncated_file_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.slgs");
    let mut buf = Vec::new();
    encode_scene(&scene(2, 10), &mut buf).unwrap();
    std::fs::write(&path, &buf[..buf.len() - 3]).unwrap();
    assert!(matches!(read_scene(&path), Err(FormatError::Truncated(_))));
}

#[test]
fn embedding_records_round_trip() {
    let records = vec![
        ViewEmbedding { view: 0, label: 1, embedding: Embedding(vec![0.25, -1.0]) },
        ViewEmbedding { view: 1, label: 2, embedding: Embedding(vec![1e-30, 3.0]) },
    ];
    let file = EmbeddingRecords::from_view_embeddings(2, &records);
    let json = serde_json::to_string(&file).unwrap();
    let back: EmbeddingRecords = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_view_embeddings().unwrap(), records);
}

#[test]
fn bundle_directory_round_trip() {
    let bundle = synthetic_bundle("demo", 48, 36, 16, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bundle.save(dir.path()).unwrap();
    for f in [SCENE_FILE, "bank.json", "labels_0.png", "labels_1.png", "canon.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let back = SceneBundle::load(dir.path()).unwrap();
    assert_eq!(back, bundle);
    assert_eq!(back.bank.len(), 3);
    assert!(back.scene.pixel_aligned);
    assert_eq!(back.scene.gaussians.len(), 2 * 48 * 36);
}

#[test]
fn bundle_rejects_uncovered_labels() {
    let bundle = synthetic_bundle("demo", 24, 18, 8, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bundle.save(dir.path()).unwrap();
    let mut map = bundle.label_maps[0].clone();
    map.labels[0] = 9;
    std::fs::write(dir.path().join("labels_0.png"), encode_labels(&map)).unwrap();
    let err = SceneBundle::load(dir.path()).unwrap_err();
    assert!(err.to_string().contains("label 9"), "{err}");
}

#[test]
fn assigned_features_come_from_label_images() {
    let bundle = synthetic_bundle("demo", 24, 18, 8, 4).unwrap();
    let per_view = 24 * 18;
    for (view, map) in bundle.label_maps.iter().enumerate() {
        let image: FeatureMap = semsplat::label_image(map, &bundle.bank).unwrap();
        for (p, f) in image.values.iter().enumerate() {
            assert_eq!(bundle.scene.gaussians[view * per_view + p].feature, *f);
        }
    }
}
