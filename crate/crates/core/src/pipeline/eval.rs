//! Spectral angle scoring over skin pixels.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::cube::{SkinMask, SpectralCube};

/// Angle in radians between two spectra, or `None` if either has zero norm.
///
/// Evaluated as `2·atan2(‖û − v̂‖, ‖û + v̂‖)` on the unit vectors, which
/// equals `arccos(⟨u, v⟩ / (‖u‖‖v‖))` but stays accurate near 0 and π.
pub fn sam(u: &[f64], v: &[f64]) -> Option<f64> {
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 || u.len() != v.len() {
        return None;
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (a / nu, b / nv);
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    Some(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

#[derive(Clone)]
pub struct EvalItem<'a> {
    pub name: String,
    pub pred: &'a SpectralCube,
    pub truth: &'a SpectralCube,
    pub mask: &'a SkinMask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub name: String,
    /// Mean angle over the scored skin pixels.
    pub sam: f64,
    pub pixels: usize,
    /// Skin pixels dropped because a spectrum had zero norm.
    pub skipped_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub images: Vec<ImageScore>,
    /// Images with no scorable skin pixel.
    pub skipped: Vec<String>,
    pub mean: f64,
    /// Population standard deviation of the per-image means.
    pub std: f64,
}

impl EvalReport {
    /// `mean ± std` at four decimals.
    pub fn summary(&self) -> String {
        format!("{:.4} ± {:.4}", self.mean, self.std)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,sam,pixels,skipped_pixels\n");
        for i in &self.images {
            writeln!(s, "{},{},{},{}", i.name, i.sam, i.pixels, i.skipped_pixels).expect("string write");
        }
        writeln!(s, "summary,{}", self.summary()).expect("string write");
        s
    }
}

pub fn score_image(item: &EvalItem) -> Result<ImageScore, PipelineError> {
    let (h, w) = (item.truth.height(), item.truth.width());
    if (item.pred.height(), item.pred.width()) != (h, w) {
        return Err(PipelineError::Shape(format!(
            "{}: prediction is {}x{}, truth is {h}x{w}",
            item.name,
            item.pred.height(),
            item.pred.width()
        )));
    }
    item.mask.check_dims(h, w)?;
    let (mut total, mut pixels, mut skipped) = (0.0, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if !item.mask.get(y, x) {
                continue;
            }
            match sam(&item.pred.spectrum(y, x), &item.truth.spectrum(y, x)) {
                Some(a) => {
                    total += a;
                    pixels += 1;
                }
                None => skipped += 1,
            }
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} zero-norm spectra", item.name);
    }
    Ok(ImageScore {
        name: item.name.clone(),
        sam: if pixels > 0 { total / pixels as f64 } else { f64::NAN },
        pixels,
        skipped_pixels: skipped,
    })
}

/// Per-image mean angle over skin pixels, then mean and spread across
/// images. Images without scorable pixels are listed and left out.
pub fn evaluate(items: &[EvalItem]) -> Result<EvalReport, PipelineError> {
    let mut images = Vec::with_capacity(items.len());
    let mut skipped = Vec::new();
    for item in items {
        let score = score_image(item)?;
        if score.pixels == 0 {
            log::warn!("{}: no scorable skin pixels, image skipped", item.name);
            skipped.push(score.name);
        } else {
            images.push(score);
        }
    }
    if images.is_empty() {
        return Err(PipelineError::Evaluation("no image has scorable skin pixels".into()));
    }
    let n = images.len() as f64;
    let mean = images.iter().map(|i| i.sam).sum::<f64>() / n;
    let std = (images.iter().map(|i| (i.sam - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EvalReport {
        images,
        skipped,
        mean,
        std,
    })
}
