//! Differentiable perspective projection of voxel occupancy grids to 2D
//! silhouettes, and gradient-based recovery of voxel grids from multi-view
//! silhouettes.
//!
//! The pipeline is organised bottom-up:
//!
//! * [`geometry`]: camera intrinsics/extrinsics, the 4×4 perspective
//!   transform and the dense camera-frame sampling grid.
//! * [`volume`]: voxel grids, binarization, IoU, synthetic shapes and the
//!   visual-hull carving baseline.
//! * [`projector`]: trilinear resampling into the camera frame, max
//!   flattening to a silhouette and the matching backward pass.
//! * [`oracle`]: a ray-marching reference renderer and a finite-difference
//!   gradient checker.
//! * [`recon`]: projection/volume losses, Adam, and the reconstruction loop.
//! * [`io`]: VOXG volumes, PGM silhouettes and CSV loss histories.

pub mod error;
pub mod geometry;
pub mod io;
pub mod oracle;
pub mod projector;
pub mod recon;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{
    build_intrinsics, build_sampling_grid, compose_transform, disparity_range,
    extrinsics_from_viewpoint, Camera, CameraIntrinsics, DisparityRange, Extrinsics,
    PerspectiveTransform, Rig, SamplingGrid, Viewpoint,
};
pub use oracle::{
    finite_diff_grad, grad_check, random_grad_check, raytrace_silhouette, GradCheckReport,
    RandomCheck,
};
pub use projector::{
    flatten_max, project, project_backward, resample, ArgmaxMap, CameraVolume, Silhouette,
};
pub use recon::{
    combined_loss, projection_loss, reconstruct, volume_loss, AdamConfig, AdamState, LossConfig,
    ReconConfig, Reconstruction,
};
pub use volume::{
    binarize, iou, rotate90_z, synth_shape, visual_hull, BinaryVolume, ShapeKind, VoxelGrid,
};
