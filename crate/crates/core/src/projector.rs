//! Perspective transformer: trilinear resampling of a world-frame voxel grid
//! into the camera frame, max flattening over disparity, and the adjoint.
//!
//! Resampling evaluates
//!
//! ```text
//! U_i = Σ_{n,m,l} V_nml · k(x_i − m) · k(y_i − n) · k(z_i − l),   k(t) = max(0, 1 − |t|)
//! ```
//!
//! as an 8-neighbour gather, which is exact because `k` has unit support.
//! Samples farther than one voxel outside the grid read zero.

use crate::error::{Error, Result};
use crate::geometry::SamplingGrid;
use crate::volume::{flat_index, mask_iou, VoxelGrid};

/// Foreground probability image, row-major `(n', m')`.
#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Silhouette {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "silhouette dims must be >= 1, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "{} pixels for a {height}x{width} silhouette",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn mask(&self, threshold: f64) -> Vec<bool> {
        self.data.iter().map(|&x| x >= threshold).collect()
    }

    /// IoU of the two masks thresholded at `threshold`.
    pub fn iou(&self, other: &Silhouette, threshold: f64) -> Result<f64> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::shape(format!(
                "silhouettes {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(mask_iou(&self.mask(threshold), &other.mask(threshold)))
    }
}

/// Resampled volume `U`, indexed `(n', m', l')` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraVolume {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl CameraVolume {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("camera volume dims {dims:?}")));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::shape(format!(
                "{} values for camera volume {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.dims[1] + col) * self.dims[2];
        &self.data[start..start + self.dims[2]]
    }
}

/// Winning disparity slice per pixel; `None` where the column is all zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgmaxMap {
    dims: [usize; 3],
    data: Vec<Option<u32>>,
}

impl ArgmaxMap {
    /// `(H', W', D')` of the camera volume this map was taken from.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[Option<u32>] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Option<usize> {
        self.data[row * self.dims[1] + col].map(|l| l as usize)
    }
}

/// Non-zero trilinear weights of a sample point: up to 8 `(voxel, weight)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    entries: [(usize, f64); 8],
    len: usize,
}

impl Stencil {
    pub(crate) fn new(dims: [usize; 3], p: &[f64; 3]) -> Self {
        let mut stencil = Stencil {
            entries: [(0, 0.0); 8],
            len: 0,
        };
        // per-axis taps: (index, weight) for x -> m, y -> n, z -> l
        let axis = |coord: f64, size: usize| -> [(usize, f64); 2] {
            let mut taps = [(0usize, 0.0); 2];
            if !coord.is_finite() {
                return taps;
            }
            let base = coord.floor();
            let frac = coord - base;
            for (k, w) in [(0.0, 1.0 - frac), (1.0, frac)].into_iter().enumerate() {
                let idx = base + w.0;
                if w.1 > 0.0 && idx >= 0.0 && idx < size as f64 {
                    taps[k] = (idx as usize, w.1);
                }
            }
            taps
        };
        let xs = axis(p[0], dims[1]);
        let ys = axis(p[1], dims[0]);
        let zs = axis(p[2], dims[2]);
        for &(n, wy) in &ys {
            if wy == 0.0 {
                continue;
            }
            for &(m, wx) in &xs {
                if wx == 0.0 {
                    continue;
                }
                for &(l, wz) in &zs {
                    if wz == 0.0 {
                        continue;
                    }
                    stencil.entries[stencil.len] = (flat_index(dims, n, m, l), wx * wy * wz);
                    stencil.len += 1;
                }
            }
        }
        stencil
    }

    pub(crate) fn entries(&self) -> &[(usize, f64)] {
        &self.entries[..self.len]
    }

    pub(crate) fn sample(&self, data: &[f64]) -> f64 {
        self.entries().iter().map(|&(i, w)| data[i] * w).sum()
    }

    pub(crate) fn weight_of(&self, voxel: usize) -> f64 {
        self.entries()
            .iter()
            .find(|(i, _)| *i == voxel)
            .map_or(0.0, |&(_, w)| w)
    }
}

fn check_grid(v: &VoxelGrid, grid: &SamplingGrid) -> Result<()> {
    if v.dims() != grid.in_dims() {
        return Err(Error::shape(format!(
            "volume dims {:?} but sampling grid built for {:?}",
            v.dims(),
            grid.in_dims()
        )));
    }
    Ok(())
}

/// Trilinear interpolation of `v` at every sample point of `grid`.
pub fn resample(v: &VoxelGrid, grid: &SamplingGrid) -> Result<CameraVolume> {
    check_grid(v, grid)?;
    let dims = v.dims();
    let data = grid
        .points()
        .iter()
        .map(|p| Stencil::new(dims, p).sample(v.data()))
        .collect();
    CameraVolume::new(grid.out_dims(), data)
}

/// Max over a column; `None` for an all-zero column. Ties go to the smallest
/// slice index.
fn column_max(values: impl Iterator<Item = f64>) -> (f64, Option<u32>) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0u32;
    for (l, x) in values.enumerate() {
        if x > best {
            best = x;
            arg = l as u32;
        }
    }
    if best == 0.0 {
        (0.0, None)
    } else {
        (best, Some(arg))
    }
}

/// Per-pixel maximum over disparity slices.
pub fn flatten_max(u: &CameraVolume) -> (Silhouette, ArgmaxMap) {
    let [h, w, _] = u.dims;
    let mut sil = Vec::with_capacity(h * w);
    let mut arg = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let (best, l) = column_max(u.column(row, col).iter().copied());
            sil.push(best);
            arg.push(l);
        }
    }
    (
        Silhouette {
            height: h,
            width: w,
            data: sil,
        },
        ArgmaxMap {
            dims: u.dims,
            data: arg,
        },
    )
}

/// `flatten_max(resample(v, grid))` without materialising `U`.
pub fn project(v: &VoxelGrid, grid: &SamplingGrid) -> Result<(Silhouette, ArgmaxMap)> {
    check_grid(v, grid)?;
    let dims = v.dims();
    let [h, w, _] = grid.out_dims();
    let mut sil = Vec::with_capacity(h * w);
    let mut arg = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let column = grid
                .column(row, col)
                .iter()
                .map(|p| Stencil::new(dims, p).sample(v.data()));
            let (best, l) = column_max(column);
            sil.push(best);
            arg.push(l);
        }
    }
    Ok((
        Silhouette {
            height: h,
            width: w,
            data: sil,
        },
        ArgmaxMap {
            dims: grid.out_dims(),
            data: arg,
        },
    ))
}

/// Adjoint of [`project`] for a fixed argmax routing.
///
/// Each pixel's upstream gradient goes to its winning slice only and from
/// there to the stencil voxels of that sample, scaled by the same kernel
/// weights. Pixels with no winner contribute nothing. Accumulation runs in
/// pixel order, so the result is deterministic.
pub fn project_backward(
    v: &VoxelGrid,
    grid: &SamplingGrid,
    argmax: &ArgmaxMap,
    upstream: &[f64],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; v.len()];
    project_backward_into(v, grid, argmax, upstream, 1.0, &mut out)?;
    Ok(out)
}

/// Adds `scale ·` the adjoint into `out`.
pub(crate) fn project_backward_into(
    v: &VoxelGrid,
    grid: &SamplingGrid,
    argmax: &ArgmaxMap,
    upstream: &[f64],
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    check_grid(v, grid)?;
    if argmax.dims != grid.out_dims() {
        return Err(Error::invalid(format!(
            "argmax map {:?} does not match sampling grid {:?}",
            argmax.dims,
            grid.out_dims()
        )));
    }
    if upstream.len() != grid.pixel_count() {
        return Err(Error::shape(format!(
            "upstream gradient has {} pixels, expected {}",
            upstream.len(),
            grid.pixel_count()
        )));
    }
    if out.len() != v.len() {
        return Err(Error::shape("gradient buffer length"));
    }
    let dims = v.dims();
    let w = grid.out_dims()[1];
    for (pix, (&g, l)) in upstream.iter().zip(&argmax.data).enumerate() {
        let Some(l) = l else { continue };
        if g == 0.0 {
            continue;
        }
        let p = &grid.column(pix / w, pix % w)[*l as usize];
        for &(i, wt) in Stencil::new(dims, p).entries() {
            out[i] += scale * g * wt;
        }
    }
    Ok(())
}
