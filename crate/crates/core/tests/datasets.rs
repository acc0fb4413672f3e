use std::sync::Arc;

use cropseg::backend::OracleBackend;
use cropseg::corrupt::{build_benchmark, DefectConfig, Manifest};
use cropseg::eval::{evaluate, Dataset, EvalConfig, EvalMode};
use cropseg::raster::io::{load_mask, save_mask};
use cropseg::synthetic::{generate_scenes, write_dataset, SceneConfig};
use cropseg::{iou, BBox, BinaryMask, DatasetError};

fn scene_cfg() -> SceneConfig {
    SceneConfig { width: 160, height: 120, min_object_pixels: 600, distractors: 2 }
}

#[test]
fn small_and_unreadable_samples_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = generate_scenes(3, 3, &scene_cfg());
    write_dataset(dir.path(), &scenes).unwrap();
    // A tiny mask (below the size threshold) and an image that is not a PNG.
    save_mask(&BinaryMask::from_box(160, 120, BBox::new(0, 0, 10, 10)), dir.path().join("masks/scene_0001.png")).unwrap();
    std::fs::write(dir.path().join("images/scene_0002.png"), b"not an image").unwrap();

    let ds = Dataset::open(dir.path()).unwrap();
    assert_eq!(ds.entries.len(), 3);
    let loaded: Vec<_> = ds.iter(false).collect::<Result<_, _>>().unwrap();
    let ids: Vec<_> = loaded.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["scene_0000"]);
}

#[test]
fn dimension_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &generate_scenes(4, 1, &scene_cfg())).unwrap();
    save_mask(&BinaryMask::filled(80, 60), dir.path().join("masks/scene_0000.png")).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    let err = ds.iter(false).next().unwrap().unwrap_err();
    assert!(matches!(err, DatasetError::DimensionMismatch { .. }), "{err}");
}

#[test]
fn init_mode_without_masks_fails() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &generate_scenes(4, 1, &scene_cfg())).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    assert!(ds.iter(true).next().unwrap().is_err());
}

#[test]
fn benchmark_build_is_reproducible_and_usable() {
    let src = tempfile::tempdir().unwrap();
    write_dataset(src.path(), &generate_scenes(8, 4, &scene_cfg())).unwrap();
    let ds = Dataset::open(src.path()).unwrap();
    let cfg = DefectConfig { seed: 11, ..Default::default() };

    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = build_benchmark(&ds, a.path(), &cfg).unwrap();
    let mb = build_benchmark(&ds, b.path(), &cfg).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma.samples.len() + ma.failures.len(), 4);
    assert!(!ma.samples.is_empty());

    let on_disk: Manifest = serde_json::from_str(&std::fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, ma);
    for s in &ma.samples {
        let name = format!("init_masks/{}.png", s.id);
        let bytes_a = std::fs::read(a.path().join(&name)).unwrap();
        assert_eq!(bytes_a, std::fs::read(b.path().join(&name)).unwrap());
        let gt = load_mask(src.path().join(format!("masks/{}.png", s.id))).unwrap();
        let init = load_mask(a.path().join(&name)).unwrap();
        let v = iou(&init, &gt).unwrap();
        assert!((v - s.iou).abs() < 1e-12);
        assert!(v >= cfg.min_iou && v < cfg.max_iou, "{}: {v}", s.id);
    }

    // The output directory is a complete dataset for the init-mask protocol.
    let out = Dataset::open(a.path()).unwrap();
    let ecfg = EvalConfig { mode: EvalMode::Init, ..Default::default() };
    let report = evaluate(&out.entries, &ecfg, "oracle", |s| Arc::new(OracleBackend::new(s.gt.clone()))).unwrap();
    assert_eq!(report.samples.len(), ma.samples.len());
    for r in &report.samples {
        let listed = ma.samples.iter().find(|s| s.id == r.id).unwrap();
        assert!((r.initial_iou - listed.iou).abs() < 1e-12);
    }
}
