//! Percept-aware planning of cortical electrode placements for visual
//! prostheses.
//!
//! Electrode coordinates live in cortical millimeters. A differentiable
//! forward model maps them through a retinotopic interpolation onto visual
//! field coordinates (degrees) and renders a Gaussian phosphene percept.
//! Placement is optimized with Adam against a foveally weighted squared
//! error, plus hinge penalties for vascular proximity and for leaving gray
//! matter.
//!
//! The crate is organised as:
//!
//! - [`anatomy`]: retinotopy sites, gray-matter signed distance field,
//!   vessel centerlines and their spatial indices, plus a synthetic
//!   anatomy generator.
//! - [`forward`]: visual field mapping, amplitude sampling, percept
//!   rendering and the perceptual loss with analytic gradients.
//! - [`constraints`]: vascular and gray-matter penalties and the total
//!   objective.
//! - [`optimize`]: initialization, Adam, the placement loop and thread
//!   co-optimization.
//! - [`baselines`]: visual-field tiling and coverage placements.
//! - [`eval`]: MSE, SSIM, Wilcoxon signed-rank test and method comparison.
//! - [`dataset`] and [`io`]: image ingestion and on-disk formats.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anatomy;
pub mod baselines;
pub mod constraints;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod forward;
pub mod geom;
pub mod io;
pub mod layout;
pub mod optimize;

pub use anatomy::{AnatomyModel, RetinotopySite, ScalarField3D, SynthParams, VesselSet, VoxelMask};
pub use constraints::{ObjectiveBreakdown, ObjectiveConfig};
pub use error::{Error, Result};
pub use eval::{ComparisonResult, EvaluationReport};
pub use forward::{PerceptImage, SpreadMode, SpreadModel, TargetImage, WeightMap};
pub use geom::Vec3;
pub use layout::{ElectrodeLayout, Thread};
pub use optimize::{AdamState, OptimizationTrace};
