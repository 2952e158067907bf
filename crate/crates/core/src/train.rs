//! Joint optimization of the field and per-view pose corrections.
//!
//! Every random draw of a step (minibatch, ray jitter, patch permutation) is
//! derived from `(seed, step)`, so a state restored from a checkpoint
//! continues exactly as an uninterrupted run would.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::dataset::Dataset;
use crate::field::{init_params, EncodingConfig, FieldArch, FieldParams};
use crate::geometry::{apply_correction, rotation_angle, Pose, PoseCorrection};
use crate::loss::{
    generate_patch, pixel_loss, square_patch_shape, structural_loss, total_loss, HssimConstants,
    WindowConfig,
};
use crate::render::{backprop_ray, trace_ray, RayTrace, SamplingConfig, TrainingRay};
use crate::rng::{mix_seed, stream_rng};
use crate::{Error, Result};

const BATCH_STREAM: u64 = 1;
const JITTER_SALT: u64 = 0x6a69_7474_6572;
const PATCH_SALT: u64 = 0x0070_6174_6368;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_rays: usize,
    pub learning_rate: f64,
    pub pose_learning_rate: f64,
    /// Both learning rates decay exponentially to this fraction of their
    /// initial value at `iterations`; 1 keeps them constant.
    pub lr_final_ratio: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
    pub pose_refinement: bool,
    pub structural_loss: bool,
    /// Removes the mean correction over the training views after every pose
    /// update. A rigid motion shared by all cameras is nearly unobservable,
    /// and without this the corrections drift along it.
    pub center_pose_corrections: bool,
    /// Pose corrections stay frozen for this many initial steps.
    pub pose_warmup: u64,
    /// Steps over which position-encoding bands open one after another,
    /// starting from none; 0 opens them all from the start.
    pub anneal_steps: u64,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: u64,
    /// Steps between folding pose corrections into the base poses; 0 never.
    pub fold_every: u64,
    /// Samples per ray and stratification; the seed is replaced every step.
    pub sampling: SamplingConfig,
    pub window: WindowConfig,
    pub hssim: HssimConstants,
    pub arch: FieldArch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            batch_rays: 4096,
            learning_rate: 5e-4,
            pose_learning_rate: 5e-5,
            lr_final_ratio: 1.0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 0,
            pose_refinement: true,
            structural_loss: true,
            center_pose_corrections: true,
            pose_warmup: 0,
            anneal_steps: 0,
            checkpoint_every: 1000,
            fold_every: 1000,
            sampling: SamplingConfig::default(),
            window: WindowConfig::default(),
            hssim: HssimConstants::default(),
            arch: FieldArch::default(),
        }
    }
}

impl TrainConfig {
    /// A configuration sized for a single CPU core on small (64×64) scenes:
    /// 256-ray batches as 16×16 patches, 32 samples per ray and a 3×64
    /// network with 6 position and 2 direction frequencies.
    pub fn desk_scale() -> Self {
        Self {
            iterations: 2000,
            batch_rays: 256,
            learning_rate: 5e-3,
            pose_learning_rate: 1e-3,
            lr_final_ratio: 1.0,
            sampling: SamplingConfig {
                samples_per_ray: 32,
                stratified: true,
                seed: 0,
            },
            arch: FieldArch {
                encoding: EncodingConfig {
                    position_frequencies: 6,
                    direction_frequencies: 2,
                    include_input: true,
                },
                hidden_layers: 3,
                hidden_width: 64,
                thermal_width: 32,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.batch_rays == 0 {
            return bad("batch_rays must be at least 1".into());
        }
        let rates = [self.learning_rate, self.pose_learning_rate, self.adam_eps];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || !(self.adam_eps > 0.0) {
            return bad(format!(
                "learning rates must be finite and non-negative and adam_eps positive, got {rates:?}"
            ));
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            return bad(format!("lr_final_ratio must lie in (0, 1], got {}", self.lr_final_ratio));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("adam_betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        self.sampling.validate()?;
        self.window.validate()?;
        self.hssim.validate()?;
        self.arch.validate()?;
        if self.structural_loss {
            let (h, _) = square_patch_shape(self.batch_rays)?;
            if h < self.window.kernel {
                return bad(format!(
                    "patch side {h} is smaller than the window kernel {}",
                    self.window.kernel
                ));
            }
        }
        Ok(())
    }

    /// Open position bands at a 1-based step.
    pub fn bandwidth(&self, step: u64) -> f64 {
        let full = self.arch.encoding.position_frequencies as f64;
        if self.anneal_steps == 0 {
            return full;
        }
        full * (step as f64 / self.anneal_steps as f64).min(1.0)
    }

    /// Learning-rate multiplier for a 1-based step.
    pub fn lr_scale(&self, step: u64) -> f64 {
        if self.lr_final_ratio == 1.0 || self.iterations == 0 {
            return 1.0;
        }
        let progress = (step.saturating_sub(1) as f64 / self.iterations as f64).min(1.0);
        libm::pow(self.lr_final_ratio, progress)
    }
}

/// Adam first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update; `step` counts from 1.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut Moments,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    step: u64,
) {
    let (b1, b2) = betas;
    let t = step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - libm::pow(b1, t as f64);
    let c2 = 1.0 - libm::pow(b2, t as f64);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.iter_mut())
        .zip(moments.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (libm::sqrt(v_hat) + eps);
    }
}

/// Everything needed to continue training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub seed: u64,
    pub params: FieldParams,
    pub field_moments: Moments,
    pub base_poses: Vec<Pose>,
    pub corrections: Vec<PoseCorrection>,
    /// Six entries per view.
    pub pose_moments: Moments,
}

impl TrainState {
    /// Freshly initialized field and zero corrections on the dataset poses.
    pub fn new(dataset: &Dataset, config: &TrainConfig) -> Result<Self> {
        let params = init_params(config.seed, config.arch)?;
        let n = params.len();
        Ok(Self {
            step: 0,
            seed: config.seed,
            params,
            field_moments: Moments::zeros(n),
            base_poses: dataset.poses.clone(),
            corrections: vec![PoseCorrection::zero(); dataset.len()],
            pose_moments: Moments::zeros(6 * dataset.len()),
        })
    }

    /// Base poses with their corrections applied.
    pub fn current_poses(&self) -> Vec<Pose> {
        self.base_poses
            .iter()
            .zip(&self.corrections)
            .map(|(p, c)| apply_correction(p, c))
            .collect()
    }

    /// Moves every correction into its base pose.
    pub fn fold_corrections(&mut self) {
        for (p, c) in self.base_poses.iter_mut().zip(self.corrections.iter_mut()) {
            *p = apply_correction(p, c);
            *c = PoseCorrection::zero();
        }
    }
}

/// One supervised pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub view: usize,
    pub u: usize,
    pub v: usize,
    pub target: f64,
}

/// Draws `batch` pixels uniformly and independently from the given views.
pub fn sample_minibatch<R: Rng>(
    dataset: &Dataset,
    views: &[usize],
    batch: usize,
    rng: &mut R,
) -> Result<Vec<PixelSample>> {
    if views.is_empty() {
        return Err(Error::InvalidDataset("no training views to sample from".into()));
    }
    let (w, h) = (dataset.intrinsics.width, dataset.intrinsics.height);
    Ok((0..batch)
        .map(|_| {
            let view = views[rng.random_range(0..views.len())];
            let pixel = rng.random_range(0..w * h);
            let (u, v) = (pixel % w, pixel / w);
            PixelSample {
                view,
                u,
                v,
                target: dataset.images[view].get(u, v),
            }
        })
        .collect())
}

/// Loss terms of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_pix: f64,
    pub l_str: f64,
    pub l_tot: f64,
}

/// Gradients of the total loss for the step after `state.step`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGradients {
    pub loss: LossBreakdown,
    /// `∂L/∂ξ` per view.
    pub pose: Vec<[f64; 6]>,
}

fn step_seed(seed: u64, step: u64) -> u64 {
    mix_seed(seed, step)
}

/// Renders a minibatch, evaluates the loss and leaves `∂L/∂Θ` in
/// `state.params` gradients. Parameters are not modified.
pub fn compute_gradients(state: &mut TrainState, dataset: &Dataset, config: &TrainConfig) -> Result<StepGradients> {
    let step = state.step + 1;
    let seed = step_seed(state.seed, step);
    state.params.set_bandwidth(config.bandwidth(step));
    let views = dataset.train_indices();
    let mut rng = stream_rng(seed, BATCH_STREAM);
    let batch = sample_minibatch(dataset, &views, config.batch_rays, &mut rng)?;
    let sampling = SamplingConfig {
        seed: mix_seed(seed, JITTER_SALT),
        ..config.sampling
    };

    let training_ray = |s: &PixelSample| TrainingRay {
        intrinsics: &dataset.intrinsics,
        base_pose: &state.base_poses[s.view],
        correction: &state.corrections[s.view],
        u: s.u,
        v: s.v,
        near: dataset.near,
        far: dataset.far,
    };

    let mut traces: Vec<RayTrace> = Vec::with_capacity(batch.len());
    let mut pred = Vec::with_capacity(batch.len());
    for (r, s) in batch.iter().enumerate() {
        let mut trace = RayTrace::new();
        pred.push(trace_ray(&state.params, &dataset.scene_box, &training_ray(s), &sampling, r as u64, &mut trace)?);
        traces.push(trace);
    }
    let target: Vec<f64> = batch.iter().map(|s| s.target).collect();

    let pix = pixel_loss(&pred, &target)?;
    if !pix.value.is_finite() {
        return Err(Error::NonFiniteLoss { step, term: "l_pix" });
    }
    let mut d_pred = pix.grad;
    let mut l_str = 0.0;
    if config.structural_loss {
        let shape = square_patch_shape(batch.len())?;
        let target_patch = generate_patch(&target, shape, mix_seed(seed, PATCH_SALT))?;
        let pred_patch = target_patch.apply(&pred)?;
        let s = structural_loss(&pred_patch, &target_patch, &config.window, &config.hssim)?;
        if !s.value.is_finite() {
            return Err(Error::NonFiniteLoss { step, term: "l_str" });
        }
        l_str = s.value;
        for (d, g) in d_pred.iter_mut().zip(target_patch.scatter(&s.grad)) {
            *d += g;
        }
    }

    state.params.zero_grads();
    let pose_active = config.pose_refinement && step > config.pose_warmup;
    let mut pose = vec![[0.0; 6]; dataset.len()];
    for ((s, trace), &d) in batch.iter().zip(traces.iter_mut()).zip(&d_pred) {
        let g = backprop_ray(&mut state.params, &dataset.scene_box, trace, d, pose_active)?;
        for k in 0..6 {
            pose[s.view][k] += g[k];
        }
    }
    Ok(StepGradients {
        loss: LossBreakdown {
            l_pix: pix.value,
            l_str,
            l_tot: total_loss(pix.value, l_str),
        },
        pose,
    })
}

fn center_corrections(corrections: &mut [PoseCorrection], views: &[usize]) {
    if views.len() < 2 {
        return;
    }
    let mut mean = [0.0; 6];
    for &i in views {
        for (m, t) in mean.iter_mut().zip(&corrections[i].tangent) {
            *m += t / views.len() as f64;
        }
    }
    for &i in views {
        for (t, m) in corrections[i].tangent.iter_mut().zip(&mean) {
            *t -= m;
        }
    }
}

/// One optimization step: gradients, Adam updates, optional fold-in.
pub fn train_step(state: &mut TrainState, dataset: &Dataset, config: &TrainConfig) -> Result<LossBreakdown> {
    let grads = compute_gradients(state, dataset, config)?;
    state.step += 1;
    let pose_active = config.pose_refinement && state.step > config.pose_warmup;
    let step = state.step;
    let scale = config.lr_scale(step);
    let (values, field_grads) = state.params.split_mut();
    adam_update(
        values,
        field_grads,
        &mut state.field_moments,
        config.learning_rate * scale,
        config.adam_betas,
        config.adam_eps,
        step,
    );
    if pose_active {
        let mut tangents: Vec<f64> = state.corrections.iter().flat_map(|c| c.tangent).collect();
        let flat: Vec<f64> = grads.pose.iter().flatten().copied().collect();
        adam_update(
            &mut tangents,
            &flat,
            &mut state.pose_moments,
            config.pose_learning_rate * scale,
            config.adam_betas,
            config.adam_eps,
            step,
        );
        for (c, t) in state.corrections.iter_mut().zip(tangents.chunks_exact(6)) {
            c.tangent.copy_from_slice(t);
        }
        if config.center_pose_corrections {
            center_corrections(&mut state.corrections, &dataset.train_indices());
        }
        if config.fold_every > 0 && step.is_multiple_of(config.fold_every) {
            state.fold_corrections();
        }
    }
    Ok(grads.loss)
}

/// Receives progress from [`fit`].
pub trait TrainObserver {
    type Error: From<Error>;

    fn on_step(&mut self, _step: u64, _loss: &LossBreakdown) -> core::result::Result<(), Self::Error> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _state: &TrainState) -> core::result::Result<(), Self::Error> {
        Ok(())
    }
}

/// Observer that ignores everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoObserver;

impl TrainObserver for NoObserver {
    type Error = Error;
}

/// Runs [`train_step`] from `state.step` up to `config.iterations`.
pub fn fit<O: TrainObserver>(
    dataset: &Dataset,
    config: &TrainConfig,
    state: &mut TrainState,
    observer: &mut O,
) -> core::result::Result<(), O::Error> {
    config.validate()?;
    dataset.validate()?;
    if dataset.train_indices().len() < 2 {
        return Err(Error::InvalidDataset("training needs at least 2 training views".into()).into());
    }
    if state.base_poses.len() != dataset.len() {
        return Err(Error::ShapeMismatch(format!(
            "state has {} views, dataset {}",
            state.base_poses.len(),
            dataset.len()
        ))
        .into());
    }
    while state.step < config.iterations {
        let loss = train_step(state, dataset, config)?;
        observer.on_step(state.step, &loss)?;
        if config.checkpoint_every > 0 && state.step.is_multiple_of(config.checkpoint_every) {
            observer.on_checkpoint(state)?;
        }
    }
    Ok(())
}

/// Mean over views of rotation geodesic (radians) plus camera-center
/// distance.
pub fn mean_pose_error(estimate: &[Pose], truth: &[Pose]) -> f64 {
    let n = estimate.len().min(truth.len());
    if n == 0 {
        return 0.0;
    }
    estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| rotation_angle(a.rotation(), b.rotation()) + (a.translation() - b.translation()).norm())
        .sum::<f64>()
        / n as f64
}
