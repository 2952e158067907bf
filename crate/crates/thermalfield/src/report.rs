//! Evaluation reports and training log records.

use std::fmt::Write as _;

use serde::Serialize;
use thermalfield_core::dataset::Dataset;
use thermalfield_core::field::FieldParams;
use thermalfield_core::loss::{image_metrics, HssimConstants, WindowConfig};
use thermalfield_core::render::{NeuralField, SamplingConfig};
use thermalfield_core::train::LossBreakdown;

use crate::error::Result;
use crate::parallel::render_image;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewMetrics {
    pub view: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub hssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub step: u64,
    pub samples_per_ray: usize,
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_hssim: f64,
}

impl EvalReport {
    /// Tab-separated table with a header row and a final `mean` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("view\tpsnr\tssim\thssim\n");
        for v in &self.views {
            let _ = writeln!(out, "{}\t{:.4}\t{:.5}\t{:.5}", v.view, v.psnr, v.ssim, v.hssim);
        }
        let _ = writeln!(
            out,
            "mean\t{:.4}\t{:.5}\t{:.5}",
            self.mean_psnr, self.mean_ssim, self.mean_hssim
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Renders `views` at their dataset poses and scores them against the
/// dataset images.
pub fn evaluate(
    params: &FieldParams,
    step: u64,
    dataset: &Dataset,
    views: &[usize],
    sampling: &SamplingConfig,
    window: &WindowConfig,
    hssim: &HssimConstants,
) -> Result<EvalReport> {
    let field = NeuralField {
        params,
        scene_box: dataset.scene_box,
    };
    let mut rows = Vec::with_capacity(views.len());
    for &i in views {
        let img = render_image(
            &field,
            &dataset.intrinsics,
            &dataset.poses[i],
            dataset.near,
            dataset.far,
            sampling,
        )?;
        let m = image_metrics(&img.view(), &dataset.images[i].view(), window, hssim)?;
        rows.push(ViewMetrics {
            view: i,
            psnr: m.psnr,
            ssim: m.ssim,
            hssim: m.hssim,
        });
    }
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&ViewMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        step,
        samples_per_ray: sampling.samples_per_ray,
        mean_psnr: mean(|v| v.psnr),
        mean_ssim: mean(|v| v.ssim),
        mean_hssim: mean(|v| v.hssim),
        views: rows,
    })
}

/// One JSON line of the training log. Wall time is optional so that the
/// on-disk log stays reproducible.
pub fn step_record(step: u64, loss: &LossBreakdown, elapsed_s: Option<f64>) -> String {
    let mut record = serde_json::json!({
        "step": step,
        "l_pix": loss.l_pix,
        "l_str": loss.l_str,
        "l_tot": loss.l_tot,
    });
    if let Some(t) = elapsed_s {
        record["elapsed_s"] = t.into();
    }
    record.to_string()
}
