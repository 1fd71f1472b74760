//! Voxel grids, binarization, IoU, synthetic shapes and visual-hull carving.
//!
//! Voxels are indexed `(n, m, l)` = (row / y, column / x, slice / z) and
//! stored row-major. Voxel `(n, m, l)` of an `H×W×D` grid has its centre at
//! `((m + 0.5)/W − 0.5, (n + 0.5)/H − 0.5, (l + 0.5)/D − 0.5)` in the world.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::projector::Silhouette;

pub(crate) fn flat_index(dims: [usize; 3], n: usize, m: usize, l: usize) -> usize {
    (n * dims[1] + m) * dims[2] + l
}

/// World position of voxel `(n, m, l)`'s centre.
pub fn voxel_center(dims: [usize; 3], n: usize, m: usize, l: usize) -> [f64; 3] {
    [
        (m as f64 + 0.5) / dims[1] as f64 - 0.5,
        (n as f64 + 0.5) / dims[0] as f64 - 0.5,
        (l as f64 + 0.5) / dims[2] as f64 - 0.5,
    ]
}

/// World point to continuous index coordinates `(m, n, l)`: integer values are
/// voxel centres.
pub fn world_to_index(dims: [usize; 3], p: [f64; 3]) -> [f64; 3] {
    [
        (p[0] + 0.5) * dims[1] as f64 - 0.5,
        (p[1] + 0.5) * dims[0] as f64 - 0.5,
        (p[2] + 0.5) * dims[2] as f64 - 0.5,
    ]
}

fn check_dims(dims: [usize; 3]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::invalid(format!(
            "grid dims must be >= 1, got {dims:?}"
        )));
    }
    Ok(())
}

/// Occupancy field with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "{} values for dims {dims:?} (expected {expected})",
                data.len()
            )));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::invalid(format!(
                "occupancy {v} at index {i} is outside [0, 1]"
            )));
        }
        Ok(Self { dims, data })
    }

    /// Skips the range check. Used for finite-difference probes, which step
    /// up to `h` outside `[0, 1]`; every operator here is defined on all reals.
    pub(crate) fn from_raw(dims: [usize; 3], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        Self { dims, data }
    }

    pub fn filled(dims: [usize; 3], value: f64) -> Result<Self> {
        Self::new(dims, vec![value; dims.iter().product()])
    }

    pub fn zeros(dims: [usize; 3]) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn from_fn(
        dims: [usize; 3],
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for n in 0..dims[0] {
            for m in 0..dims[1] {
                for l in 0..dims[2] {
                    data.push(f(n, m, l));
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, n: usize, m: usize, l: usize) -> f64 {
        self.data[flat_index(self.dims, n, m, l)]
    }

    pub fn index(&self, n: usize, m: usize, l: usize) -> usize {
        flat_index(self.dims, n, m, l)
    }

    /// Sum of occupancies.
    pub fn mass(&self) -> f64 {
        self.data.iter().sum()
    }
}

impl From<&BinaryVolume> for VoxelGrid {
    fn from(b: &BinaryVolume) -> Self {
        Self {
            dims: b.dims,
            data: b.data.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryVolume {
    dims: [usize; 3],
    data: Vec<bool>,
}

impl BinaryVolume {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::shape(format!(
                "{} cells for dims {dims:?} (expected {expected})",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, n: usize, m: usize, l: usize) -> bool {
        self.data[flat_index(self.dims, n, m, l)]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&x| x).count()
    }

    /// Number of cells set here but not in `outer`.
    pub fn count_outside(&self, outer: &BinaryVolume) -> Result<usize> {
        same_dims(self.dims, outer.dims)?;
        Ok(self
            .data
            .iter()
            .zip(&outer.data)
            .filter(|(&a, &b)| a && !b)
            .count())
    }
}

fn same_dims(a: [usize; 3], b: [usize; 3]) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("dims {a:?} vs {b:?}")));
    }
    Ok(())
}

/// `value >= tau` per voxel.
pub fn binarize(v: &VoxelGrid, tau: f64) -> Result<BinaryVolume> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("threshold {tau} outside (0, 1)")));
    }
    Ok(BinaryVolume {
        dims: v.dims,
        data: v.data.iter().map(|&x| x >= tau).collect(),
    })
}

/// Intersection over union. Two empty volumes score 1.0.
pub fn iou(a: &BinaryVolume, b: &BinaryVolume) -> Result<f64> {
    same_dims(a.dims, b.dims)?;
    Ok(mask_iou(&a.data, &b.data))
}

pub(crate) fn mask_iou(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Cube,
    Sphere,
    Cross,
    Chair,
    HollowBox,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Cube,
        ShapeKind::Sphere,
        ShapeKind::Cross,
        ShapeKind::Chair,
        ShapeKind::HollowBox,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Cube => "cube",
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cross => "cross",
            ShapeKind::Chair => "chair",
            ShapeKind::HollowBox => "hollow_box",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown kind '{s}'")))
    }
}

pub const SPHERE_RADIUS: f64 = 0.35;
/// Minimum side length accepted by [`synth_shape`].
pub const MIN_SYNTH_DIM: usize = 8;
pub const HOLLOW_BOX_WALL: usize = 2;

// Chair proportions in world units (z up, backrest on the -x side).
const CHAIR_HALF_WIDTH: f64 = 0.3;
const CHAIR_SEAT_Z: (f64, f64) = (-0.05, 0.05);
const CHAIR_BACK_X: (f64, f64) = (-0.3, -0.2);
const CHAIR_BACK_TOP: f64 = 0.45;
const CHAIR_LEG_INSET: f64 = 0.22;
const CHAIR_LEG_BOTTOM: f64 = -0.45;

/// Voxels of the central half `[dim/4, dim − dim/4)` along one axis, tested
/// in integer arithmetic: `|2i + 1 − dim| · 2 < dim`.
fn in_central_half(i: usize, dim: usize) -> bool {
    (2 * i as i64 + 1 - dim as i64).abs() * 2 < dim as i64
}

/// Centred band of `width` voxels; `width` is bumped by one when its parity
/// differs from `dim` so that the band stays mirror-symmetric.
fn central_band(dim: usize, width: usize) -> (usize, usize) {
    let mut width = width.max(1).min(dim);
    if (dim - width) % 2 == 1 {
        width += 1;
    }
    let lo = (dim - width) / 2;
    (lo, lo + width)
}

fn in_range(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

/// Deterministic binary test shapes.
///
/// * `sphere`: centre within [`SPHERE_RADIUS`] of the origin.
/// * `cube`: solid block over the central half of every axis.
/// * `cross`: three orthogonal bars through the centre spanning the whole
///   grid, each `dim/8` voxels thick.
/// * `chair`: seat, backrest and four legs.
/// * `hollow_box`: the cube minus its erosion by [`HOLLOW_BOX_WALL`] voxels.
pub fn synth_shape(kind: ShapeKind, dims: [usize; 3]) -> Result<VoxelGrid> {
    if dims.iter().any(|&d| d < MIN_SYNTH_DIM) {
        return Err(Error::invalid(format!(
            "synthetic shapes need dims >= {MIN_SYNTH_DIM}, got {dims:?}"
        )));
    }
    let bands: [(usize, usize); 3] = [
        central_band(dims[0], dims[0] / 8),
        central_band(dims[1], dims[1] / 8),
        central_band(dims[2], dims[2] / 8),
    ];
    let in_band = |axis: usize, i: usize| i >= bands[axis].0 && i < bands[axis].1;
    let in_cube = |n: usize, m: usize, l: usize| {
        in_central_half(n, dims[0]) && in_central_half(m, dims[1]) && in_central_half(l, dims[2])
    };
    VoxelGrid::from_fn(dims, |n, m, l| {
        let [x, y, z] = voxel_center(dims, n, m, l);
        let on = match kind {
            ShapeKind::Sphere => (x * x + y * y + z * z).sqrt() <= SPHERE_RADIUS,
            ShapeKind::Cube => in_cube(n, m, l),
            ShapeKind::Cross => {
                let (bn, bm, bl) = (in_band(0, n), in_band(1, m), in_band(2, l));
                (bn && bl) || (bm && bl) || (bn && bm)
            }
            ShapeKind::Chair => {
                let w = CHAIR_HALF_WIDTH;
                let seat = x.abs() <= w && y.abs() <= w && in_range(z, CHAIR_SEAT_Z);
                let back = in_range(x, CHAIR_BACK_X)
                    && y.abs() <= w
                    && in_range(z, (CHAIR_SEAT_Z.1, CHAIR_BACK_TOP));
                let leg = in_range(x.abs(), (CHAIR_LEG_INSET, w))
                    && in_range(y.abs(), (CHAIR_LEG_INSET, w))
                    && in_range(z, (CHAIR_LEG_BOTTOM, CHAIR_SEAT_Z.0));
                seat || back || leg
            }
            ShapeKind::HollowBox => {
                let inner = |i: usize, dim: usize| {
                    let lo = dim / 4 + HOLLOW_BOX_WALL;
                    let hi = dim - dim / 4 - HOLLOW_BOX_WALL;
                    i >= lo && i < hi
                };
                in_cube(n, m, l) && !(inner(n, dims[0]) && inner(m, dims[1]) && inner(l, dims[2]))
            }
        };
        if on {
            1.0
        } else {
            0.0
        }
    })
}

/// Space carving: a voxel survives iff its centre lands, after rounding to the
/// nearest pixel, on a foreground pixel (`>= 0.5`) inside the image and inside
/// the disparity slab of every view.
pub fn visual_hull(
    silhouettes: &[Silhouette],
    cameras: &[Camera],
    dims: [usize; 3],
) -> Result<BinaryVolume> {
    check_dims(dims)?;
    if silhouettes.len() != cameras.len() {
        return Err(Error::shape(format!(
            "{} silhouettes for {} views",
            silhouettes.len(),
            cameras.len()
        )));
    }
    if cameras.is_empty() {
        return Err(Error::invalid("visual hull needs at least one view"));
    }
    for (i, (s, c)) in silhouettes.iter().zip(cameras).enumerate() {
        if s.width() != c.intrinsics.image_w || s.height() != c.intrinsics.image_h {
            return Err(Error::shape(format!(
                "view {i}: silhouette {}x{} vs camera image {}x{}",
                s.width(),
                s.height(),
                c.intrinsics.image_w,
                c.intrinsics.image_h
            )));
        }
    }
    let total = dims.iter().product::<usize>();
    let plane = dims[1] * dims[2];
    let data = (0..total)
        .into_par_iter()
        .map(|idx| {
            let (n, m, l) = (idx / plane, (idx % plane) / dims[2], idx % dims[2]);
            let [x, y, z] = voxel_center(dims, n, m, l);
            let p = Vector3::new(x, y, z);
            silhouettes
                .iter()
                .zip(cameras)
                .all(|(sil, cam)| keeps(sil, cam, &p))
        })
        .collect();
    Ok(BinaryVolume { dims, data })
}

fn keeps(sil: &Silhouette, cam: &Camera, p: &Vector3<f64>) -> bool {
    let Some([x, y, d]) = cam.transform.world_to_camera(p) else {
        return false;
    };
    if !cam.disparity.contains(d) {
        return false;
    }
    let (col, row) = (x.round(), y.round());
    if col < 0.0 || row < 0.0 || col >= sil.width() as f64 || row >= sil.height() as f64 {
        return false;
    }
    sil.get(row as usize, col as usize) >= 0.5
}

/// Rotates by `quarter_turns × (−90°)` about the vertical axis through the
/// grid centre, i.e. clockwise seen from +z. A volume turned once and viewed
/// from azimuth `a` looks like the original viewed from `a + 90°`.
pub fn rotate90_z(v: &VoxelGrid, quarter_turns: i32) -> Result<VoxelGrid> {
    let [h, w, d] = v.dims;
    if h != w {
        return Err(Error::shape(format!(
            "rotation about z needs H == W, got {h}x{w}"
        )));
    }
    let turns = quarter_turns.rem_euclid(4);
    let mut cur = v.data.clone();
    for _ in 0..turns {
        let mut next = vec![0.0; cur.len()];
        for n in 0..h {
            for m in 0..w {
                // (x, y) -> (y, -x): column m' = n, row n' = W - 1 - m
                let src = flat_index(v.dims, n, m, 0);
                let dst = flat_index(v.dims, w - 1 - m, n, 0);
                next[dst..dst + d].copy_from_slice(&cur[src..src + d]);
            }
        }
        cur = next;
    }
    Ok(VoxelGrid::from_raw(v.dims, cur))
}
