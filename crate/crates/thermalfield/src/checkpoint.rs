//! Versioned binary training checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "TFCK" u32 version
//! arch:    u32 pos_freqs, u32 dir_freqs, u8 include_input,
//!          u32 hidden_layers, u32 hidden_width, u32 thermal_width,
//!          f64 open position bands
//! box:     6 × f64 (min, max)
//! u64 step, u64 seed
//! u32 layer count, then (u32 inputs, u32 outputs) per layer
//! u64 parameter count, then values, first moments, second moments (f64)
//! u32 view count, then per view: 7 × f64 pose (w x y z tx ty tz),
//!          6 × f64 tangent, 6 × f64 first moment, 6 × f64 second moment
//! ```

use std::path::Path;

use thermalfield_core::field::{EncodingConfig, FieldArch, FieldParams};
use thermalfield_core::geometry::{Pose, PoseCorrection, SceneBox};
use thermalfield_core::train::{Moments, TrainState};
use thermalfield_core::Vec3;

use crate::error::{read, write, Error, Result};

pub const MAGIC: &[u8; 4] = b"TFCK";
pub const VERSION: u32 = 1;

/// A training state together with the scene box it was trained in.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub scene_box: SceneBox,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format!("truncated at byte {}: need {n} more bytes", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    pub(crate) fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn vec3(&mut self) -> std::result::Result<Vec3, String> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }

    pub(crate) fn finish(&self) -> std::result::Result<(), String> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", self.bytes.len() - self.pos))
        }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let state = &ckpt.state;
    let arch = state.params.arch();
    let mut w = Writer(MAGIC.to_vec());
    w.u32(VERSION as usize);
    w.u32(arch.encoding.position_frequencies);
    w.u32(arch.encoding.direction_frequencies);
    w.u8(u8::from(arch.encoding.include_input));
    w.u32(arch.hidden_layers);
    w.u32(arch.hidden_width);
    w.u32(arch.thermal_width);
    w.f64s(&[state.params.bandwidth()]);
    w.f64s(ckpt.scene_box.min.as_slice());
    w.f64s(ckpt.scene_box.max.as_slice());
    w.u64(state.step);
    w.u64(state.seed);
    w.u32(state.params.spans().len());
    for span in state.params.spans() {
        w.u32(span.inputs);
        w.u32(span.outputs);
    }
    w.u64(state.params.len() as u64);
    w.f64s(state.params.values());
    w.f64s(&state.field_moments.m);
    w.f64s(&state.field_moments.v);
    w.u32(state.base_poses.len());
    for (i, (pose, corr)) in state.base_poses.iter().zip(&state.corrections).enumerate() {
        w.f64s(&pose.wxyz());
        w.f64s(pose.translation().as_slice());
        w.f64s(&corr.tangent);
        w.f64s(&state.pose_moments.m[6 * i..6 * i + 6]);
        w.f64s(&state.pose_moments.v[6 * i..6 * i + 6]);
    }
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let arch = FieldArch {
        encoding: EncodingConfig {
            position_frequencies: r.u32()?,
            direction_frequencies: r.u32()?,
            include_input: r.u8()? != 0,
        },
        hidden_layers: r.u32()?,
        hidden_width: r.u32()?,
        thermal_width: r.u32()?,
    };
    let bandwidth = r.f64()?;
    if !(0.0..=arch.encoding.position_frequencies as f64).contains(&bandwidth) {
        return Err(format!("open band count {bandwidth} is out of range"));
    }
    let scene_box = SceneBox::new(r.vec3()?, r.vec3()?).map_err(|e| e.to_string())?;
    let step = r.u64()?;
    let seed = r.u64()?;
    let expected = arch.layer_shapes();
    let layers = r.u32()?;
    let mut shapes = Vec::with_capacity(layers.min(1024));
    for _ in 0..layers {
        shapes.push((r.u32()?, r.u32()?));
    }
    if shapes != expected {
        return Err(format!(
            "layer shapes {shapes:?} do not match the stored architecture {expected:?}"
        ));
    }
    let n = r.u64()? as usize;
    let values = r.f64s(n)?;
    let mut params = FieldParams::with_values(arch, values).map_err(|e| e.to_string())?;
    params.set_bandwidth(bandwidth);
    let field_moments = Moments {
        m: r.f64s(n)?,
        v: r.f64s(n)?,
    };
    let views = r.u32()?;
    let mut base_poses = Vec::with_capacity(views.min(1 << 16));
    let mut corrections = Vec::with_capacity(views.min(1 << 16));
    let mut pose_moments = Moments::zeros(0);
    for i in 0..views {
        let q = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        let t = r.vec3()?;
        base_poses.push(Pose::from_unit_wxyz(q, t).map_err(|e| format!("view {i}: {e}"))?);
        let mut tangent = [0.0; 6];
        tangent.copy_from_slice(&r.f64s(6)?);
        corrections.push(PoseCorrection { tangent });
        pose_moments.m.extend(r.f64s(6)?);
        pose_moments.v.extend(r.f64s(6)?);
    }
    r.finish()?;
    Ok(Checkpoint {
        state: TrainState {
            step,
            seed,
            params,
            field_moments,
            base_poses,
            corrections,
            pose_moments,
        },
        scene_box,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write(path, &encode_checkpoint(ckpt))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read(path)?).map_err(|m| Error::format(path, m))
}
