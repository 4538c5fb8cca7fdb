//! Near-field wideband radio imaging.
//!
//! The crate simulates a bistatic pair of uniform linear arrays observing a
//! discretized region of interest (ROI) over several OFDM subcarriers, designs
//! transmit illumination beamformers, and recovers per-subcarrier reflectivity
//! images with a correlation-aware sparse Bayesian learning (SBL) solver.
//!
//! Pipeline, module by module:
//!
//! * [`geometry`]: array layout, ROI grid, steering/pathloss/delay tables.
//! * [`scene`]: sparse ground truth with AR-1 frequency correlation.
//! * [`illum`]: uniform, total-coherence-minimizing (TCM) and
//!   illumination-power-maximizing (IPM) beamformers.
//! * [`forward`]: per-subcarrier sensing matrices and noisy observations.
//! * [`sbl`]: EM solver for the per-cell variances and the subcarrier
//!   correlation matrix.
//! * [`metrics`]: IMMSE, PSNR, SSIM and PCC.
//! * [`harness`]: config-driven experiment runner and file outputs.

// `!(x > 0.0)` is the NaN-rejecting check used throughout; index loops mirror
// the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod forward;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod illum;
pub mod linalg;
pub mod metrics;
pub mod sbl;
pub mod scene;

pub use error::{Error, Result};
pub use faer::c64;
pub use faer::{Col, Mat};
