use std::fs;
use std::path::Path;

use thermalfield::core::dataset::{Dataset, Split};
use thermalfield::core::synth::{fixture, AnalyticScene, FixtureConfig};
use thermalfield::dataset_io::{
    convert_dataset, image_name, load_dataset, read_meta, save_dataset, ImageDepth, MetaJson, META_FILE,
    POSES_FILE,
};
use thermalfield::pgm::{encode_pgm16, read_pgm};
use thermalfield::Error;

fn small() -> Dataset {
    fixture(
        &AnalyticScene::blobs(),
        &FixtureConfig {
            views: 5,
            resolution: 10,
            holdout_every: 2,
            ..FixtureConfig::default()
        },
    )
    .unwrap()
}

fn max_diff(a: &Dataset, b: &Dataset) -> f64 {
    a.images
        .iter()
        .zip(&b.images)
        .flat_map(|(x, y)| x.values().iter().zip(y.values()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn assert_same_rig(a: &Dataset, b: &Dataset) {
    assert_eq!(a.splits, b.splits);
    assert_eq!(a.intrinsics, b.intrinsics);
    assert_eq!(a.scene_box, b.scene_box);
    assert_eq!((a.near, a.far), (b.near, b.far));
    for (p, q) in a.poses.iter().zip(&b.poses) {
        let (m, n) = (p.to_matrix(), q.to_matrix());
        assert!(m.iter().zip(&n).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

#[test]
fn sixteen_bit_round_trip() {
    let ds = small();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds, ImageDepth::Sixteen).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_same_rig(&ds, &back);
    assert!(max_diff(&ds, &back) <= 0.5 / 65535.0 + 1e-15);
    assert_eq!(read_pgm(&dir.path().join(image_name(0))).unwrap().maxval, 65535);
}

#[test]
fn eight_bit_round_trip() {
    let ds = small();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &ds, ImageDepth::Eight).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_same_rig(&ds, &back);
    assert!(max_diff(&ds, &back) <= 0.5 / 255.0 + 1e-15);
    assert_eq!(back.splits.iter().filter(|s| **s == Split::Test).count(), 2);
}

/// Writes raw frames whose counts follow `count(frame, pixel)`.
fn write_raw(dir: &Path, frames: usize, count: impl Fn(usize, usize) -> u16) {
    let ds = small();
    save_dataset(dir, &ds, ImageDepth::Sixteen).unwrap();
    fs::remove_file(dir.join(META_FILE)).unwrap();
    for f in 0..frames {
        let samples: Vec<u16> = (0..100).map(|p| count(f, p)).collect();
        fs::write(dir.join(image_name(f)), encode_pgm16(10, 10, &samples)).unwrap();
    }
}

fn raw_count(f: usize, p: usize) -> u16 {
    (20000 + 37 * f * f + (p * 131 + f * 17) % 900) as u16
}

#[test]
fn convert_matches_a_brute_force_scan() {
    let raw = tempfile::tempdir().unwrap();
    write_raw(raw.path(), 5, raw_count);
    let meta = MetaJson {
        k: Some(50.0),
        b: Some(-300.0),
        ..MetaJson::default()
    };
    let out = tempfile::tempdir().unwrap();
    let report = convert_dataset(raw.path(), &meta, Path::new("meta.json"), out.path()).unwrap();

    let temps: Vec<f64> = (0..5)
        .flat_map(|f| (0..100).map(move |p| f64::from(raw_count(f, p)) / 50.0 - 300.0))
        .collect();
    let lo = temps.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = temps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(report.frames, 5);
    assert_eq!((report.stats.t_min, report.stats.t_max), (lo, hi));

    let written = read_meta(&out.path().join(META_FILE)).unwrap();
    assert_eq!((written.t_min, written.t_max), (Some(lo), Some(hi)));
    let converted = load_dataset(out.path()).unwrap();
    for f in 0..5 {
        for p in 0..100 {
            let expected = (f64::from(raw_count(f, p)) / 50.0 - 300.0 - lo) / (hi - lo);
            assert!((converted.images[f].values()[p] - expected).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}

#[test]
fn raw_frames_need_calibration() {
    let raw = tempfile::tempdir().unwrap();
    write_raw(raw.path(), 5, raw_count);
    let err = load_dataset(raw.path()).unwrap_err();
    assert!(err.to_string().contains("'k'"), "{err}");
    let out = tempfile::tempdir().unwrap();
    assert!(convert_dataset(raw.path(), &MetaJson::default(), Path::new("m.json"), out.path()).is_err());
}

#[test]
fn empty_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
}

#[test]
fn unknown_pose_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &small(), ImageDepth::Eight).unwrap();
    let path = dir.path().join(POSES_FILE);
    let text = fs::read_to_string(&path).unwrap().replacen("\"near\"", "\"nearr\"", 1);
    fs::write(&path, text).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Format { .. })));
}

#[test]
fn odd_bit_depths_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &small(), ImageDepth::Eight).unwrap();
    let mut bytes = b"P5 10 10 1023\n".to_vec();
    bytes.extend(std::iter::repeat_n(0u8, 200));
    fs::write(dir.path().join(image_name(1)), bytes).unwrap();
    assert!(load_dataset(dir.path()).unwrap_err().to_string().contains("maxval 1023"));
}
