//! Segmentation agreement, image similarity and distribution distance.
//!
//! Fréchet distances depend on the embedder; values are only comparable between runs that
//! report the same embedder id.

mod frechet;
mod image;
mod report;
mod segmentation;

pub use frechet::{
    embed_images, frechet_distance, load_embedder, Embedder, EmbeddingSet, LinearEmbedder, FALLBACK_DIM,
    FALLBACK_SEED, FRECHET_JITTER,
};
pub use image::{apply_mask, l1_distance, masked_metrics, ssim, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use report::{MetricReport, MetricRow};
pub use segmentation::{segmentation_report, ConfusionMatrix, SegmentationReport};

#[cfg(test)]
mod tests;
