//! On-disk dataset layout.
//!
//! ```text
//! <root>/poses.json   intrinsics, scene_box, near, far, frames
//! <root>/meta.json    k, b, t_min, t_max
//! <root>/images/*.pgm
//! ```
//!
//! 8-bit frames hold values that are already normalized (`sample / 255`).
//! 16-bit frames hold raw counts; they are converted with the calibration
//! in `meta.json` and normalized with its `t_min`/`t_max`, falling back to
//! the extrema of all 16-bit frames when those are absent.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thermalfield_core::dataset::{Dataset, DatasetMeta, Split};
use thermalfield_core::geometry::{Intrinsics, Pose, SceneBox};
use thermalfield_core::thermal::{
    normalize, raw_to_temperature, sequence_stats, RadiometricCalibration, SequenceStats,
    TemperatureGrid, ThermalImage,
};
use thermalfield_core::Vec3;

use crate::error::{read, write, Error, Result};
use crate::pgm::{decode_pgm, encode_pgm16, encode_pgm8, read_raw_thermal, write_gray8};

pub const POSES_FILE: &str = "poses.json";
pub const META_FILE: &str = "meta.json";
pub const IMAGE_DIR: &str = "images";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxJson {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitJson {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameJson {
    /// Path relative to the dataset root.
    pub image: String,
    /// Row-major camera-to-world matrix.
    pub transform: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosesJson {
    pub intrinsics: IntrinsicsJson,
    pub scene_box: BoxJson,
    pub near: f64,
    pub far: f64,
    pub frames: Vec<FrameJson>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

impl MetaJson {
    pub fn calibration(&self, path: &Path) -> Result<RadiometricCalibration> {
        match (self.k, self.b) {
            (Some(k), Some(b)) => Ok(RadiometricCalibration::new(k, b)?),
            _ => Err(Error::format(
                path,
                "raw 16-bit frames need calibration fields 'k' and 'b'",
            )),
        }
    }

    fn stats_override(&self) -> Result<Option<SequenceStats>> {
        match (self.t_min, self.t_max) {
            (Some(lo), Some(hi)) => Ok(Some(SequenceStats::new(lo, hi)?)),
            _ => Ok(None),
        }
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write(path, text.as_bytes())
}

pub fn read_meta(path: &Path) -> Result<MetaJson> {
    parse_json(path)
}

pub fn write_meta(path: &Path, meta: &MetaJson) -> Result<()> {
    write_json(path, meta)
}

pub fn read_poses(path: &Path) -> Result<PosesJson> {
    parse_json(path)
}

/// Loads and validates a dataset directory.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let poses_path = root.join(POSES_FILE);
    let meta_path = root.join(META_FILE);
    let layout = read_poses(&poses_path)?;
    let meta = if meta_path.exists() {
        read_meta(&meta_path)?
    } else {
        MetaJson::default()
    };
    if layout.frames.is_empty() {
        return Err(Error::format(&poses_path, "no frames"));
    }

    enum Frame {
        Normalized(ThermalImage),
        Raw(TemperatureGrid),
    }
    let mut frames = Vec::with_capacity(layout.frames.len());
    let mut poses = Vec::with_capacity(layout.frames.len());
    let mut splits = Vec::with_capacity(layout.frames.len());
    for (i, f) in layout.frames.iter().enumerate() {
        let m: [f64; 16] = f.transform.as_slice().try_into().map_err(|_| {
            Error::format(
                &poses_path,
                format!("frame {i}: transform has {} numbers, expected 16", f.transform.len()),
            )
        })?;
        poses.push(
            Pose::from_matrix(&m)
                .map_err(|e| Error::format(&poses_path, format!("frame {i}: {e}")))?,
        );
        splits.push(match f.split {
            Some(SplitJson::Test) => Split::Test,
            _ => Split::Train,
        });
        let image_path = root.join(&f.image);
        let bytes = read(&image_path)?;
        let pgm = decode_pgm(&bytes).map_err(|e| Error::format(&image_path, e.to_string()))?;
        frames.push(match pgm.maxval {
            255 => {
                let samples: Vec<u8> = pgm.samples.iter().map(|&s| s as u8).collect();
                Frame::Normalized(ThermalImage::from_gray8(pgm.width, pgm.height, &samples)?)
            }
            65535 => {
                let raw = read_raw_thermal(&image_path)?;
                Frame::Raw(raw_to_temperature(&raw, &meta.calibration(&meta_path)?)?)
            }
            other => {
                return Err(Error::format(
                    &image_path,
                    format!("maxval {other} is neither 255 (normalized) nor 65535 (raw)"),
                ))
            }
        });
    }

    let raw: Vec<TemperatureGrid> = frames
        .iter()
        .filter_map(|f| match f {
            Frame::Raw(t) => Some(t.clone()),
            Frame::Normalized(_) => None,
        })
        .collect();
    let stats = match meta.stats_override()? {
        Some(s) => Some(s),
        None if !raw.is_empty() => Some(sequence_stats(&raw)?),
        None => None,
    };
    let images = frames
        .into_iter()
        .map(|f| match f {
            Frame::Normalized(img) => img,
            Frame::Raw(t) => normalize(&t, stats.as_ref().expect("raw frames imply stats")),
        })
        .collect();

    let intr = &layout.intrinsics;
    let dataset = Dataset {
        images,
        poses,
        splits,
        intrinsics: Intrinsics::new(intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height)
            .map_err(|e| Error::format(&poses_path, e.to_string()))?,
        scene_box: SceneBox::new(vec3(layout.scene_box.min), vec3(layout.scene_box.max))
            .map_err(|e| Error::format(&poses_path, e.to_string()))?,
        near: layout.near,
        far: layout.far,
        meta: DatasetMeta {
            k: meta.k.unwrap_or(1.0),
            b: meta.b.unwrap_or(0.0),
            t_min: stats.map(|s| s.t_min).or(meta.t_min),
            t_max: stats.map(|s| s.t_max).or(meta.t_max),
        },
    };
    dataset
        .validate()
        .map_err(|e| Error::format(&poses_path, e.to_string()))?;
    Ok(dataset)
}

/// Sample depth used when writing dataset images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageDepth {
    Eight,
    Sixteen,
}

pub fn image_name(index: usize) -> String {
    format!("{IMAGE_DIR}/{index:04}.pgm")
}

fn poses_json(dataset: &Dataset) -> PosesJson {
    let i = &dataset.intrinsics;
    let b = &dataset.scene_box;
    PosesJson {
        intrinsics: IntrinsicsJson {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            width: i.width,
            height: i.height,
        },
        scene_box: BoxJson {
            min: [b.min.x, b.min.y, b.min.z],
            max: [b.max.x, b.max.y, b.max.z],
        },
        near: dataset.near,
        far: dataset.far,
        frames: dataset
            .poses
            .iter()
            .zip(&dataset.splits)
            .enumerate()
            .map(|(n, (pose, split))| FrameJson {
                image: image_name(n),
                transform: pose.to_matrix().to_vec(),
                split: Some(match split {
                    Split::Train => SplitJson::Train,
                    Split::Test => SplitJson::Test,
                }),
            })
            .collect(),
    }
}

/// Writes a dataset of normalized images.
///
/// 16-bit output stores `round(value · 65535)` with a calibration of
/// `k = 1, b = 0` over `[0, 65535]`, so loading recovers the values to
/// within half a count. 8-bit output stores `round(value · 255)`.
pub fn save_dataset(root: &Path, dataset: &Dataset, depth: ImageDepth) -> Result<()> {
    dataset.validate()?;
    for (n, img) in dataset.images.iter().enumerate() {
        let path = root.join(image_name(n));
        let bytes = match depth {
            ImageDepth::Eight => encode_pgm8(img.width(), img.height(), &img.to_gray8()),
            ImageDepth::Sixteen => encode_pgm16(img.width(), img.height(), &img.to_gray16()),
        };
        write(&path, &bytes)?;
    }
    write_json(&root.join(POSES_FILE), &poses_json(dataset))?;
    let meta = match depth {
        ImageDepth::Sixteen => MetaJson {
            k: Some(1.0),
            b: Some(0.0),
            t_min: Some(0.0),
            t_max: Some(f64::from(u16::MAX)),
        },
        ImageDepth::Eight => MetaJson {
            k: Some(dataset.meta.k),
            b: Some(dataset.meta.b),
            t_min: dataset.meta.t_min,
            t_max: dataset.meta.t_max,
        },
    };
    write_meta(&root.join(META_FILE), &meta)
}

/// Summary of a raw-to-normalized conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvertReport {
    pub frames: usize,
    pub stats: SequenceStats,
    pub written: Vec<PathBuf>,
}

/// Converts a directory of raw 16-bit frames into a normalized dataset.
///
/// `raw_dir` holds `poses.json` whose frames reference raw PGMs. The output
/// directory receives 8-bit normalized frames, a copy of the poses with
/// rewritten image paths and a `meta.json` recording the calibration and the
/// temperature extrema that were used.
pub fn convert_dataset(raw_dir: &Path, meta: &MetaJson, meta_path: &Path, out: &Path) -> Result<ConvertReport> {
    let cal = meta.calibration(meta_path)?;
    let poses_path = raw_dir.join(POSES_FILE);
    let mut layout = read_poses(&poses_path)?;
    if layout.frames.is_empty() {
        return Err(Error::format(&poses_path, "no frames to convert"));
    }
    let mut temps = Vec::with_capacity(layout.frames.len());
    for f in &layout.frames {
        let raw = read_raw_thermal(&raw_dir.join(&f.image))?;
        temps.push(raw_to_temperature(&raw, &cal)?);
    }
    let stats = match meta.stats_override()? {
        Some(s) => s,
        None => sequence_stats(&temps)?,
    };
    let mut written = Vec::with_capacity(temps.len());
    for (n, (t, frame)) in temps.iter().zip(layout.frames.iter_mut()).enumerate() {
        frame.image = image_name(n);
        let path = out.join(&frame.image);
        write_gray8(&path, &normalize(t, &stats))?;
        written.push(path);
    }
    write_json(&out.join(POSES_FILE), &layout)?;
    write_meta(
        &out.join(META_FILE),
        &MetaJson {
            k: Some(cal.k),
            b: Some(cal.b),
            t_min: Some(stats.t_min),
            t_max: Some(stats.t_max),
        },
    )?;
    Ok(ConvertReport {
        frames: temps.len(),
        stats,
        written,
    })
}
