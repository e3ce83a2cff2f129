//! Synthetic ellipse phantoms, PSNR, pixelwise uncertainty and PGM previews.

mod metrics;
mod pgm;
mod phantoms;

pub use metrics::{mri_metrics, psnr, uncertainty_map, MriMetrics, UncertaintyMap, PSNR_CAP_DB};
pub use pgm::{encode_pgm, write_pgm};
pub use phantoms::{make_phantoms, PhantomSpec};
