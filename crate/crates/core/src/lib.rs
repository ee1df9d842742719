//! Dense optical flow for the elastic gel layer of vision-based tactile
//! sensors.
//!
//! The estimator minimizes a self-supervised energy directly over a
//! coarse-to-fine flow field: an SSIM + L1 photometric term, an
//! edge-weighted penalty on the velocity-gradient decomposition of the flow
//! (linear distortion, shear, rotation) and an edge-weighted penalty on the
//! spatial variation of the local area-change ratio. A local flow fusion step
//! smooths each level with feature-similarity softmax weights.
//!
//! [`synth`] renders marker scenes with analytic deformations for
//! ground-truth testing, and [`metrics`] implements the warp-based PSNR/SSIM
//! evaluation together with endpoint error.

pub mod ablation;
pub mod config;
pub mod energy;
pub mod error;
pub mod flo;
pub mod flow;
pub mod fusion;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod metrics;
pub mod pyramid;
mod prox;
pub mod solver;
pub mod stencil;
pub mod synth;
pub mod viz;

pub use crate::energy::{EnergyWeights, LossBreakdown};
pub use crate::error::{Error, Result};
pub use crate::flow::FlowField;
pub use crate::image::{Image, Raster};
pub use crate::pyramid::ImagePyramid;
pub use crate::solver::{estimate_flow, SolveResult, SolverConfig};
