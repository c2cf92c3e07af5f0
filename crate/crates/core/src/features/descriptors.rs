use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{FeatureError, PcaModel, RowMatrix};
use crate::ingest::ArticleImage;

/// Dense patch sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchParams {
    pub patch_size: u32,
    pub stride: u32,
    pub reduced_dim: usize,
    /// Images smaller than this on either side are scaled up first.
    pub min_side: u32,
    /// Images larger than this on their longer side are scaled down first.
    pub max_side: u32,
}

impl Default for PatchParams {
    fn default() -> Self {
        Self {
            patch_size: 8,
            stride: 4,
            reduced_dim: 16,
            min_side: 64,
            max_side: 128,
        }
    }
}

impl PatchParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.patch_size == 0 || self.stride == 0 || self.reduced_dim == 0 {
            return Err(FeatureError::InvalidParameter(
                "patch_size, stride and reduced_dim must be positive".into(),
            ));
        }
        if self.min_side < self.patch_size || self.max_side < self.min_side {
            return Err(FeatureError::InvalidParameter(
                "need patch_size <= min_side <= max_side".into(),
            ));
        }
        Ok(())
    }

    pub fn raw_dim(&self) -> usize {
        (self.patch_size * self.patch_size) as usize
    }
}

/// Reduced descriptors of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub image_id: String,
    pub descriptors: RowMatrix,
    pub patch_params: PatchParams,
}

/// Grayscale analysis raster in `[0, 1]`, rescaled into the
/// `[min_side, max_side]` window.
pub fn analysis_raster(raster: &RgbImage, params: &PatchParams) -> (u32, u32, Vec<f64>) {
    let (w, h) = (raster.width().max(1), raster.height().max(1));
    let long = w.max(h) as f64;
    let scale = if long > params.max_side as f64 {
        params.max_side as f64 / long
    } else {
        1.0
    };
    let mut tw = ((w as f64 * scale).round() as u32).max(1);
    let mut th = ((h as f64 * scale).round() as u32).max(1);
    let short = tw.min(th);
    if short < params.min_side {
        let up = params.min_side as f64 / short as f64;
        tw = ((tw as f64 * up).ceil() as u32).max(params.min_side);
        th = ((th as f64 * up).ceil() as u32).max(params.min_side);
    }
    let resized;
    let src = if (tw, th) != (raster.width(), raster.height()) {
        resized = imageops::resize(raster, tw, th, FilterType::Triangle);
        &resized
    } else {
        raster
    };
    let gray = src
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0;
            (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
        })
        .collect();
    (tw, th, gray)
}

/// Flattened patches on the stride grid, each centered on its own mean.
pub fn raw_patches(raster: &RgbImage, params: &PatchParams) -> RowMatrix {
    let (w, h, gray) = analysis_raster(raster, params);
    let p = params.patch_size;
    let nx = (w - p) / params.stride + 1;
    let ny = (h - p) / params.stride + 1;
    let dim = params.raw_dim();
    let mut out = RowMatrix::zeros((nx * ny) as usize, dim);
    let mut r = 0;
    for gy in 0..ny {
        for gx in 0..nx {
            let (x0, y0) = (gx * params.stride, gy * params.stride);
            let row = out.row_mut(r);
            for dy in 0..p {
                let base = ((y0 + dy) * w + x0) as usize;
                row[(dy * p) as usize..((dy + 1) * p) as usize]
                    .copy_from_slice(&gray[base..base + p as usize]);
            }
            let mean = row.iter().sum::<f64>() / dim as f64;
            row.iter_mut().for_each(|v| *v -= mean);
            r += 1;
        }
    }
    out
}

pub fn extract_descriptors(
    image: &ArticleImage,
    params: &PatchParams,
    pca: &PcaModel,
) -> Result<DescriptorSet, FeatureError> {
    params.validate()?;
    if pca.input_dim() != params.raw_dim() {
        return Err(FeatureError::DimensionMismatch {
            expected: params.raw_dim(),
            actual: pca.input_dim(),
        });
    }
    if pca.output_dim() != params.reduced_dim {
        return Err(FeatureError::DimensionMismatch {
            expected: params.reduced_dim,
            actual: pca.output_dim(),
        });
    }
    let raw = raw_patches(&image.raster, params);
    Ok(DescriptorSet {
        image_id: image.image_id.clone(),
        descriptors: pca.transform(&raw)?,
        patch_params: *params,
    })
}
