use thermalfield::checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
use thermalfield::core::field::{EncodingConfig, FieldArch};
use thermalfield::core::geometry::SceneBox;
use thermalfield::core::mesh::{marching_cubes, DensityGrid};
use thermalfield::core::render::SamplingConfig;
use thermalfield::core::synth::{fixture, perturb_poses, AnalyticScene, FixtureConfig};
use thermalfield::core::train::{fit, NoObserver, TrainConfig, TrainState};
use thermalfield::core::Vec3;
use thermalfield::grid::{decode_grid, encode_grid, load_grid, save_grid};
use thermalfield::pgm::{decode_pgm, decode_pgm16, encode_pgm16, encode_pgm8};
use thermalfield::ply::{decode_ply, encode_ply};

fn trained_checkpoint() -> Checkpoint {
    let ds = fixture(
        &AnalyticScene::blobs(),
        &FixtureConfig {
            views: 4,
            resolution: 8,
            holdout_every: 0,
            ..FixtureConfig::default()
        },
    )
    .unwrap();
    let cfg = TrainConfig {
        iterations: 3,
        batch_rays: 16,
        seed: 9,
        structural_loss: false,
        sampling: SamplingConfig {
            samples_per_ray: 8,
            stratified: true,
            seed: 0,
        },
        arch: FieldArch {
            encoding: EncodingConfig {
                position_frequencies: 2,
                direction_frequencies: 1,
                include_input: false,
            },
            hidden_layers: 1,
            hidden_width: 8,
            thermal_width: 4,
        },
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(&ds, &cfg).unwrap();
    fit(&ds, &cfg, &mut state, &mut NoObserver).unwrap();
    // Gradients are per-step scratch and are not persisted.
    state.params.zero_grads();
    Checkpoint {
        state,
        scene_box: ds.scene_box,
    }
}

fn sphere_grid() -> DensityGrid {
    let b = SceneBox::new(Vec3::new(-1.0, -0.8, -0.6), Vec3::new(1.0, 0.8, 0.6)).unwrap();
    DensityGrid::from_fn([7, 6, 5], b, |p| 1.0 - p.norm()).unwrap()
}

#[test]
fn pgm16_round_trip() {
    let samples: Vec<u16> = (0..12).map(|i| (i * 5461) as u16).collect();
    let bytes = encode_pgm16(4, 3, &samples);
    let raw = decode_pgm16(&bytes).unwrap();
    assert_eq!((raw.width(), raw.height()), (4, 3));
    assert_eq!(raw.counts(), samples.as_slice());
}

#[test]
fn pgm_header_comments_are_skipped() {
    let bytes = b"P5 # made by hand\n2 1\n# max\n255\n\x07\xff";
    let pgm = decode_pgm(bytes).unwrap();
    assert_eq!(pgm.samples, vec![7, 255]);
}

#[test]
fn pgm_corruption_is_reported() {
    let good = encode_pgm16(3, 3, &[1; 9]);
    assert!(decode_pgm16(&good[..good.len() - 1]).unwrap_err().to_string().contains("truncated"));
    assert!(decode_pgm(b"P2 1 1 255\n0").is_err());
    assert!(decode_pgm(b"P5 0 4 255\n").is_err());
    assert!(decode_pgm(b"P5 1 1 70000\n\0\0").is_err());
    assert!(decode_pgm(b"P5 1 1 100\n\xc8").unwrap_err().to_string().contains("exceeds maxval"));
    assert!(decode_pgm16(&encode_pgm8(1, 1, &[3])).is_err());
}

#[test]
fn ply_round_trip_keeps_scalars_exactly() {
    let mut mesh = marching_cubes(&sphere_grid(), 0.5);
    mesh.scalars = Some(mesh.vertices.iter().map(|v| v.x.sin() / 3.0).collect());
    assert!(!mesh.triangles.is_empty());
    let back = decode_ply(&encode_ply(&mesh)).unwrap();
    assert_eq!(back, mesh);
}

#[test]
fn ply_corruption_is_reported() {
    let mesh = marching_cubes(&sphere_grid(), 0.5);
    let text = encode_ply(&mesh);
    assert!(decode_ply(&text.replacen("ply", "plx", 1)).is_err());
    assert!(decode_ply(&text.replace("format ascii", "format binary_little_endian")).is_err());
    let cut: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
    assert!(decode_ply(&cut).is_err());
    let bad_index = text.trim_end().rsplit_once('\n').unwrap().0.to_string() + "\n3 0 1 999999\n";
    assert!(decode_ply(&bad_index).is_err());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let ckpt = trained_checkpoint();
    let bytes = encode_checkpoint(&ckpt);
    assert_eq!(&bytes[..4], b"TFCK");
    assert_eq!(decode_checkpoint(&bytes).unwrap(), ckpt);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/state.tfck");
    save_checkpoint(&path, &ckpt).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
}

#[test]
fn checkpoint_keeps_arbitrary_poses_bit_for_bit() {
    let mut ckpt = trained_checkpoint();
    let base = ckpt.state.base_poses.clone();
    for seed in 0..16 {
        ckpt.state.base_poses = perturb_poses(&base, 7.0, 0.1, 2.0, seed).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&ckpt)).unwrap();
        assert_eq!(back.state.base_poses, ckpt.state.base_poses, "seed {seed}");
    }
}

#[test]
fn checkpoint_corruption_is_reported() {
    let bytes = encode_checkpoint(&trained_checkpoint());
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(decode_checkpoint(&bad_magic).is_err());
    let mut bad_version = bytes.clone();
    bad_version[4] = 99;
    assert!(decode_checkpoint(&bad_version).is_err());
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(decode_checkpoint(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(decode_checkpoint(&trailing).is_err());
}

#[test]
fn grid_round_trip_and_corruption() {
    let grid = sphere_grid();
    let bytes = encode_grid(&grid);
    assert_eq!(decode_grid(&bytes).unwrap(), grid);
    assert!(decode_grid(&bytes[..bytes.len() - 8]).is_err());
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0; 8]);
    assert!(decode_grid(&extra).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.tfdg");
    save_grid(&path, &grid).unwrap();
    assert_eq!(load_grid(&path).unwrap(), grid);
    assert!(load_grid(&dir.path().join("missing.tfdg")).is_err());
}
