//! Reference implementations used to check the projector.
//!
//! Both are deliberately slow and share no code with the trilinear path:
//! the ray marcher looks up the nearest voxel, and the gradient checker only
//! ever calls the loss as a black box.

use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Camera, CameraIntrinsics, Rig, SamplingGrid};
use crate::projector::{Silhouette, Stencil};
use crate::recon::projection_loss;
use crate::volume::{world_to_index, BinaryVolume, VoxelGrid};

/// Default march step, as a fraction of the smallest voxel width.
pub const DEFAULT_STEP_VOXELS: f64 = 0.25;

/// `DEFAULT_STEP_VOXELS` voxel widths of a `dims` grid in world units.
pub fn default_march_step(dims: [usize; 3]) -> f64 {
    DEFAULT_STEP_VOXELS * voxel_width(dims)
}

fn voxel_width(dims: [usize; 3]) -> f64 {
    1.0 / *dims.iter().max().expect("three dims") as f64
}

/// Binary silhouette by marching each pixel ray through the disparity slab
/// of `camera`, from depth `1/d_max` to `1/d_min` in increments of `step`
/// (camera depth units). A pixel is 1.0 if any sample falls in an occupied
/// voxel (nearest-voxel lookup).
pub fn raytrace_silhouette(v: &BinaryVolume, camera: &Camera, step: f64) -> Result<Silhouette> {
    let dims = v.dims();
    let limit = 0.5 * voxel_width(dims);
    if !(step > 0.0 && step <= limit) {
        return Err(Error::invalid(format!(
            "march step {step} must be in (0, {limit}] (half a voxel)"
        )));
    }
    let (w, h) = (camera.intrinsics.image_w, camera.intrinsics.image_h);
    let near = 1.0 / camera.disparity.max;
    let far = 1.0 / camera.disparity.min;
    let steps = ((far - near) / step).ceil() as usize;
    let mut data = vec![0.0; w * h];
    for row in 0..h {
        for col in 0..w {
            let hit = (0..=steps).any(|k| {
                let depth = (near + k as f64 * step).min(far);
                let Ok(p) = camera
                    .transform
                    .camera_to_world(col as f64, row as f64, 1.0 / depth)
                else {
                    return false;
                };
                occupied_nearest(v, [p.x, p.y, p.z])
            });
            if hit {
                data[row * w + col] = 1.0;
            }
        }
    }
    Silhouette::new(h, w, data)
}

fn occupied_nearest(v: &BinaryVolume, p: [f64; 3]) -> bool {
    let dims = v.dims();
    let [x, y, z] = world_to_index(dims, p);
    let (m, n, l) = (x.round(), y.round(), z.round());
    if m < 0.0 || n < 0.0 || l < 0.0 {
        return false;
    }
    let (m, n, l) = (m as usize, n as usize, l as usize);
    n < dims[0] && m < dims[1] && l < dims[2] && v.get(n, m, l)
}

/// Central differences `(L(V + h·e_i) − L(V − h·e_i)) / 2h` at each index in
/// `probes`. Perturbed grids may leave `[0, 1]` by up to `h`.
pub fn finite_diff_grad_at<F>(v: &VoxelGrid, loss: F, h: f64, probes: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&VoxelGrid) -> Result<f64>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid(format!("step h must be > 0, got {h}")));
    }
    let mut out = Vec::with_capacity(probes.len());
    let mut data = v.data().to_vec();
    for &i in probes {
        if i >= data.len() {
            return Err(Error::invalid(format!("probe index {i} out of range")));
        }
        let orig = data[i];
        data[i] = orig + h;
        let plus = loss(&VoxelGrid::from_raw(v.dims(), data.clone()))?;
        data[i] = orig - h;
        let minus = loss(&VoxelGrid::from_raw(v.dims(), data.clone()))?;
        data[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Central-difference gradient over every voxel.
pub fn finite_diff_grad<F>(v: &VoxelGrid, loss: F, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&VoxelGrid) -> Result<f64>,
{
    let all: Vec<usize> = (0..v.len()).collect();
    finite_diff_grad_at(v, loss, h, &all)
}

/// `count` distinct voxel indices drawn deterministically from `seed`, in
/// ascending order. Returns every index when `count >= len`.
pub fn probe_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= len {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, len, count).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub num_compared: usize,
    pub num_skipped_ties: usize,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "max_abs={:.6e} max_rel={:.6e} compared={} skipped={}",
            self.max_abs_err, self.max_rel_err, self.num_compared, self.num_skipped_ties
        )
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `loss` against central
/// differences over the voxels in `probes` (all voxels when `None`).
///
/// A voxel is skipped when perturbing it by `±h` could change the winning
/// slice of any pixel it feeds in `grids`: the gap between the column
/// maximum and some other slice is below `tie_eps + h·|Δw|`, where `Δw` is
/// the difference of the voxel's kernel weights at the two samples.
/// All-zero columns the voxel touches also count as ties.
pub fn grad_check<F>(
    v: &VoxelGrid,
    grids: &[SamplingGrid],
    loss: F,
    h: f64,
    tie_eps: f64,
    probes: Option<&[usize]>,
) -> Result<GradCheckReport>
where
    F: Fn(&VoxelGrid) -> Result<(f64, Vec<f64>)>,
{
    let all: Vec<usize>;
    let probes = match probes {
        Some(p) => p,
        None => {
            all = (0..v.len()).collect();
            &all
        }
    };
    let (_, analytic) = loss(v)?;
    if analytic.len() != v.len() {
        return Err(Error::shape("analytic gradient length"));
    }
    let ties = tie_candidates(v, grids, h, tie_eps)?;
    let kept: Vec<usize> = probes.iter().copied().filter(|&i| !ties[i]).collect();
    let numeric = finite_diff_grad_at(v, |g| loss(g).map(|(l, _)| l), h, &kept)?;
    let mut report = GradCheckReport {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        num_compared: kept.len(),
        num_skipped_ties: probes.len() - kept.len(),
    };
    for (&i, &n) in kept.iter().zip(&numeric) {
        let a = analytic[i];
        report.max_abs_err = report.max_abs_err.max((a - n).abs());
        report.max_rel_err = report.max_rel_err.max(relative_error(a, n));
    }
    Ok(report)
}

/// Flags voxels whose `±h` perturbation can flip some column's argmax.
fn tie_candidates(
    v: &VoxelGrid,
    grids: &[SamplingGrid],
    h: f64,
    tie_eps: f64,
) -> Result<Vec<bool>> {
    let dims = v.dims();
    let mut flagged = vec![false; v.len()];
    for grid in grids {
        if grid.in_dims() != dims {
            return Err(Error::shape("sampling grid built for another volume"));
        }
        let [rows, cols, _] = grid.out_dims();
        for row in 0..rows {
            for col in 0..cols {
                let stencils: Vec<Stencil> = grid
                    .column(row, col)
                    .iter()
                    .map(|p| Stencil::new(dims, p))
                    .collect();
                let values: Vec<f64> = stencils.iter().map(|s| s.sample(v.data())).collect();
                let (top, best) = values.iter().copied().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (l, x)| if x > acc.1 { (l, x) } else { acc },
                );
                let all_zero = best == 0.0;
                for stencil in &stencils {
                    for &(voxel, _) in stencil.entries() {
                        if flagged[voxel] {
                            continue;
                        }
                        let w_top = stencils[top].weight_of(voxel);
                        let flips = all_zero
                            || values.iter().enumerate().any(|(l, &x)| {
                                l != top && {
                                    let dw = (stencils[l].weight_of(voxel) - w_top).abs();
                                    best - x < tie_eps + h * dw
                                }
                            });
                        if flips {
                            flagged[voxel] = true;
                        }
                    }
                }
            }
        }
    }
    Ok(flagged)
}

/// Settings of [`random_grad_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomCheck {
    pub dims: [usize; 3],
    /// Cameras taken evenly from the default 24-view rig.
    pub views: usize,
    pub h: f64,
    pub tie_eps: f64,
    pub image_size: usize,
    pub slices: usize,
    pub seed: u64,
}

impl Default for RandomCheck {
    fn default() -> Self {
        Self {
            dims: [5; 3],
            views: 3,
            h: 1e-3,
            tie_eps: 1e-6,
            image_size: 4,
            slices: 4,
            seed: 0,
        }
    }
}

/// Gradient check of the projection loss at a seeded uniform random volume
/// against seeded uniform random target silhouettes.
pub fn random_grad_check(cfg: &RandomCheck) -> Result<GradCheckReport> {
    let rig = Rig::default24();
    if cfg.views == 0 || cfg.views > rig.len() {
        return Err(Error::invalid(format!(
            "views must be in 1..={}, got {}",
            rig.len(),
            cfg.views
        )));
    }
    let cameras = rig.cameras(CameraIntrinsics::default_for(cfg.image_size)?)?;
    let grids: Vec<SamplingGrid> = (0..cfg.views)
        .map(|k| cameras[k * rig.len() / cfg.views].sampling_grid(cfg.slices, cfg.dims))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v = VoxelGrid::from_fn(cfg.dims, |_, _, _| rng.gen::<f64>())?;
    let pixels = cfg.image_size * cfg.image_size;
    let targets: Vec<Silhouette> = (0..cfg.views)
        .map(|_| {
            Silhouette::new(
                cfg.image_size,
                cfg.image_size,
                (0..pixels).map(|_| rng.gen()).collect(),
            )
        })
        .collect::<Result<_>>()?;
    grad_check(
        &v,
        &grids,
        |g| projection_loss(g, &targets, &grids).map(|l| (l.loss, l.grad)),
        cfg.h,
        cfg.tie_eps,
        None,
    )
}
