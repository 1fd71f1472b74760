//! Camera model and the camera-frame sampling grid.
//!
//! World frame is right-handed with +z up. The object volume always occupies
//! the unit cube `[-0.5, 0.5]^3` centred on the origin, whatever its voxel
//! resolution (see [`crate::volume::world_to_index`]).
//!
//! A camera maps a world point `p` to `Θ·(p, 1) = (x̃, ỹ, z̃, 1)` with
//! `Θ = [K 0; 0 1]·[R t; 0 1]`. Normalised camera coordinates are the pixel
//! position `(x̃/z̃, ỹ/z̃)` and the disparity `1/z̃`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt::Write as _;

use nalgebra::Vector4;
pub use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};
use crate::volume::world_to_index;

/// Determinant magnitude below which a transform is treated as singular.
pub const SINGULARITY_EPS: f64 = 1e-12;

/// Ratio of focal length (pixels) to `image_w · distance` for the default rig.
/// At distance 2 a unit-wide face spans 86% of the image width.
pub const DEFAULT_FOCAL_FACTOR: f64 = 0.86;

pub const DEFAULT_DISTANCE: f64 = 2.0;
pub const DEFAULT_ELEVATION_DEG: f64 = 30.0;
pub const DEFAULT_VIEW_COUNT: usize = 24;

/// Camera pose on a sphere around the grid centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    azimuth: f64,
    elevation: f64,
    distance: f64,
}

impl Viewpoint {
    /// Angles in radians. Azimuth is wrapped into `[0, 2π)`.
    pub fn new(azimuth: f64, elevation: f64, distance: f64) -> Result<Self> {
        if !(azimuth.is_finite() && elevation.is_finite() && distance.is_finite()) {
            return Err(Error::invalid("viewpoint components must be finite"));
        }
        if distance <= 0.0 {
            return Err(Error::invalid(format!(
                "distance must be > 0, got {distance}"
            )));
        }
        if elevation.abs() > FRAC_PI_2 {
            return Err(Error::invalid(format!(
                "elevation {elevation} outside [-pi/2, pi/2]"
            )));
        }
        let mut azimuth = azimuth.rem_euclid(TAU);
        if azimuth >= TAU {
            azimuth = 0.0;
        }
        Ok(Self {
            azimuth,
            elevation,
            distance,
        })
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64, distance: f64) -> Result<Self> {
        Self::new(
            azimuth_deg.to_radians(),
            elevation_deg.to_radians(),
            distance,
        )
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// Azimuth in degrees, rounded to 1e-9 so that rig files read back to the
    /// same angles.
    pub fn azimuth_deg(&self) -> f64 {
        round_deg(self.azimuth.to_degrees())
    }

    pub fn elevation_deg(&self) -> f64 {
        round_deg(self.elevation.to_degrees())
    }

    /// Camera centre for a look-at target.
    pub fn center(&self, target: Vector3<f64>) -> Vector3<f64> {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        target + self.distance * Vector3::new(ce * ca, ce * sa, se)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub focal: f64,
    pub image_w: usize,
    pub image_h: usize,
    pub cx: f64,
    pub cy: f64,
}

fn round_deg(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Square-pixel pinhole intrinsics with the principal point at the image
/// centre, pixel centres at integer coordinates.
pub fn build_intrinsics(focal: f64, image_w: usize, image_h: usize) -> Result<CameraIntrinsics> {
    if !(focal.is_finite() && focal > 0.0) {
        return Err(Error::invalid(format!("focal must be > 0, got {focal}")));
    }
    if image_w == 0 || image_h == 0 {
        return Err(Error::invalid(format!(
            "image dimensions must be >= 1, got {image_w}x{image_h}"
        )));
    }
    Ok(CameraIntrinsics {
        focal,
        image_w,
        image_h,
        cx: (image_w as f64 - 1.0) / 2.0,
        cy: (image_h as f64 - 1.0) / 2.0,
    })
}

impl CameraIntrinsics {
    /// Intrinsics of the default rig for a square image.
    pub fn default_for(image_size: usize) -> Result<Self> {
        build_intrinsics(
            default_focal(image_size, DEFAULT_DISTANCE),
            image_size,
            image_size,
        )
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.focal, 0.0, self.cx, //
            0.0, self.focal, self.cy, //
            0.0, 0.0, 1.0,
        )
    }
}

pub fn default_focal(image_w: usize, distance: f64) -> f64 {
    DEFAULT_FOCAL_FACTOR * image_w as f64 * distance
}

/// Rigid world-to-camera transform `x_cam = R·x_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Look-at extrinsics with world-up +z.
///
/// Camera axes: x = right, y = down (image rows grow downwards), z = forward.
pub fn extrinsics_from_viewpoint(v: &Viewpoint, target: Vector3<f64>) -> Result<Extrinsics> {
    let center = v.center(target);
    let forward = (target - center).normalize();
    let world_up = Vector3::z();
    let side = forward.cross(&world_up);
    // cos(elevation) is the norm of `side`; ±π/2 leaves no usable right vector
    if side.norm() < 1e-9 {
        return Err(Error::DegeneratePose(format!(
            "view direction is parallel to world up (elevation {})",
            v.elevation()
        )));
    }
    let right = side.normalize();
    let up = right.cross(&forward);
    let down = -up;
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let translation = -(rotation * center);
    Ok(Extrinsics {
        rotation,
        translation,
    })
}

/// The 4×4 perspective transform `Θ` and its cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveTransform {
    theta: Matrix4<f64>,
    theta_inv: Matrix4<f64>,
}

impl PerspectiveTransform {
    pub fn from_matrix(theta: Matrix4<f64>) -> Result<Self> {
        let det = theta.determinant();
        if !det.is_finite() || det.abs() < SINGULARITY_EPS {
            return Err(Error::SingularMatrix { det });
        }
        let theta_inv = theta.try_inverse().ok_or(Error::SingularMatrix { det })?;
        Ok(Self { theta, theta_inv })
    }

    pub fn identity() -> Self {
        Self {
            theta: Matrix4::identity(),
            theta_inv: Matrix4::identity(),
        }
    }

    pub fn theta(&self) -> &Matrix4<f64> {
        &self.theta
    }

    pub fn theta_inv(&self) -> &Matrix4<f64> {
        &self.theta_inv
    }

    /// Maps a camera-frame point `(x_t, y_t, d_t)` (pixel position and
    /// disparity) back to the world frame.
    pub fn camera_to_world(&self, x_t: f64, y_t: f64, d_t: f64) -> Result<Vector3<f64>> {
        if d_t.is_nan() || d_t <= 0.0 {
            return Err(Error::InvalidDisparity(d_t));
        }
        let z = 1.0 / d_t;
        let p = self.theta_inv * Vector4::new(x_t * z, y_t * z, z, 1.0);
        if p.w == 0.0 {
            return Err(Error::invalid("camera point maps to infinity"));
        }
        Ok(Vector3::new(p.x / p.w, p.y / p.w, p.z / p.w))
    }

    /// Maps a world point to `(x_t, y_t, d_t)`. `None` when the point is on or
    /// behind the image plane.
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Option<[f64; 3]> {
        let q = self.theta * Vector4::new(p.x, p.y, p.z, 1.0);
        if q.w == 0.0 {
            return None;
        }
        let z = q.z / q.w;
        if z.is_nan() || z <= 0.0 {
            return None;
        }
        Some([q.x / q.w / z, q.y / q.w / z, 1.0 / z])
    }
}

/// `Θ = [K 0; 0ᵀ 1]·[R t; 0ᵀ 1]`.
pub fn compose_transform(
    k: &CameraIntrinsics,
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
) -> Result<PerspectiveTransform> {
    compose_from_matrix(&k.matrix(), rotation, translation)
}

pub(crate) fn compose_from_matrix(
    k: &Matrix3<f64>,
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
) -> Result<PerspectiveTransform> {
    let mut intr = Matrix4::identity();
    intr.fixed_view_mut::<3, 3>(0, 0).copy_from(k);
    let mut extr = Matrix4::identity();
    extr.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
    extr.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
    PerspectiveTransform::from_matrix(intr * extr)
}

/// Disparity slab swept by the camera-frame volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisparityRange {
    pub min: f64,
    pub max: f64,
}

impl DisparityRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && min <= max && max.is_finite()) {
            return Err(Error::invalid(format!(
                "disparity range ({min}, {max}) must satisfy 0 < min <= max"
            )));
        }
        Ok(Self { min, max })
    }

    /// Range covering a sphere of `radius` whose centre is `distance` away.
    pub fn enclosing(distance: f64, radius: f64) -> Result<Self> {
        if distance <= radius {
            return Err(Error::CameraInsideVolume { distance, radius });
        }
        Ok(Self {
            min: 1.0 / (distance + radius),
            max: 1.0 / (distance - radius),
        })
    }

    pub fn contains(&self, d: f64) -> bool {
        d >= self.min && d <= self.max
    }

    /// Disparity of slice `l` out of `slices`, linear in disparity.
    pub fn slice(&self, l: usize, slices: usize) -> f64 {
        if slices <= 1 {
            0.5 * (self.min + self.max)
        } else {
            self.min + (self.max - self.min) * l as f64 / (slices - 1) as f64
        }
    }
}

/// Half the diagonal of an axis-aligned box with the given side lengths.
pub fn bounding_radius(extent: [f64; 3]) -> f64 {
    0.5 * (extent[0] * extent[0] + extent[1] * extent[1] + extent[2] * extent[2]).sqrt()
}

/// Disparity range enclosing the unit-cube world extent from `v`.
pub fn disparity_range(v: &Viewpoint) -> Result<DisparityRange> {
    DisparityRange::enclosing(v.distance(), bounding_radius([1.0; 3]))
}

/// Sample positions of a camera-frame volume, expressed in the voxel-index
/// coordinates `(x, y, z) = (column m, row n, slice l)` of the input grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    out_dims: [usize; 3],
    in_dims: [usize; 3],
    disparity: Option<DisparityRange>,
    points: Vec<[f64; 3]>,
}

impl SamplingGrid {
    /// Builds a grid from explicit index-space points, ordered `(n', m', l')`
    /// row-major.
    pub fn from_index_points(
        out_dims: [usize; 3],
        in_dims: [usize; 3],
        points: Vec<[f64; 3]>,
    ) -> Result<Self> {
        check_dims(out_dims, "output")?;
        check_dims(in_dims, "input")?;
        let expected = out_dims.iter().product::<usize>();
        if points.len() != expected {
            return Err(Error::shape(format!(
                "{} sample points for output dims {:?} (expected {expected})",
                points.len(),
                out_dims
            )));
        }
        Ok(Self {
            out_dims,
            in_dims,
            disparity: None,
            points,
        })
    }

    /// The grid that samples every voxel centre of `dims` at itself.
    pub fn identity(dims: [usize; 3]) -> Result<Self> {
        let mut points = Vec::with_capacity(dims.iter().product());
        for n in 0..dims[0] {
            for m in 0..dims[1] {
                for l in 0..dims[2] {
                    points.push([m as f64, n as f64, l as f64]);
                }
            }
        }
        Self::from_index_points(dims, dims, points)
    }

    pub fn out_dims(&self) -> [usize; 3] {
        self.out_dims
    }

    pub fn in_dims(&self) -> [usize; 3] {
        self.in_dims
    }

    pub fn disparity_range(&self) -> Option<DisparityRange> {
        self.disparity
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Sample points of pixel `(n', m')`, one per disparity slice.
    pub fn column(&self, row: usize, col: usize) -> &[[f64; 3]] {
        let slices = self.out_dims[2];
        let start = (row * self.out_dims[1] + col) * slices;
        &self.points[start..start + slices]
    }

    pub fn pixel_count(&self) -> usize {
        self.out_dims[0] * self.out_dims[1]
    }
}

fn check_dims(dims: [usize; 3], what: &str) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::invalid(format!(
            "{what} dims must be >= 1 each, got {dims:?}"
        )));
    }
    Ok(())
}

/// Samples output voxel `(n', m', l')` at pixel `(x_t, y_t) = (m', n')` and the
/// `l'`-th disparity slice, maps it to the world and then to the index frame of
/// an `in_dims` grid.
pub fn build_sampling_grid(
    transform: &PerspectiveTransform,
    out_dims: [usize; 3],
    range: DisparityRange,
    in_dims: [usize; 3],
) -> Result<SamplingGrid> {
    check_dims(out_dims, "output")?;
    check_dims(in_dims, "input")?;
    let [h, w, slices] = out_dims;
    let mut points = Vec::with_capacity(h * w * slices);
    for n in 0..h {
        for m in 0..w {
            for l in 0..slices {
                let d = range.slice(l, slices);
                let p = transform.camera_to_world(m as f64, n as f64, d)?;
                points.push(world_to_index(in_dims, [p.x, p.y, p.z]));
            }
        }
    }
    Ok(SamplingGrid {
        out_dims,
        in_dims,
        disparity: Some(range),
        points,
    })
}

/// A fully resolved view: pose, intrinsics, transform and disparity slab.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub viewpoint: Viewpoint,
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: Extrinsics,
    pub transform: PerspectiveTransform,
    pub disparity: DisparityRange,
}

impl Camera {
    /// Orbit camera looking at the grid centre.
    pub fn new(viewpoint: Viewpoint, intrinsics: CameraIntrinsics) -> Result<Self> {
        let extrinsics = extrinsics_from_viewpoint(&viewpoint, Vector3::zeros())?;
        let transform =
            compose_transform(&intrinsics, &extrinsics.rotation, &extrinsics.translation)?;
        let disparity = disparity_range(&viewpoint)?;
        Ok(Self {
            viewpoint,
            intrinsics,
            extrinsics,
            transform,
            disparity,
        })
    }

    /// Camera-frame grid of `image_h × image_w × slices` samples for a volume
    /// of `in_dims` voxels.
    pub fn sampling_grid(&self, slices: usize, in_dims: [usize; 3]) -> Result<SamplingGrid> {
        build_sampling_grid(
            &self.transform,
            [self.intrinsics.image_h, self.intrinsics.image_w, slices],
            self.disparity,
            in_dims,
        )
    }
}

/// An ordered list of viewpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub viewpoints: Vec<Viewpoint>,
}

impl Rig {
    /// 24 azimuths in 15° steps at 30° elevation, distance 2.
    pub fn default24() -> Self {
        let step = 360.0 / DEFAULT_VIEW_COUNT as f64;
        let viewpoints = (0..DEFAULT_VIEW_COUNT)
            .map(|i| {
                Viewpoint::from_degrees(i as f64 * step, DEFAULT_ELEVATION_DEG, DEFAULT_DISTANCE)
                    .expect("default rig is valid")
            })
            .collect();
        Self { viewpoints }
    }

    /// Parses `azimuth_deg elevation_deg distance` lines. Blank lines and
    /// `#` comments are skipped; line numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self> {
        let mut viewpoints = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Rig {
                    line: line_no,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let mut vals = [0.0; 3];
            for (slot, field) in vals.iter_mut().zip(&fields) {
                *slot = field.parse::<f64>().map_err(|_| Error::Rig {
                    line: line_no,
                    message: format!("not a number: {field:?}"),
                })?;
            }
            let v = Viewpoint::from_degrees(vals[0], vals[1], vals[2]).map_err(|e| Error::Rig {
                line: line_no,
                message: e.to_string(),
            })?;
            viewpoints.push(v);
        }
        if viewpoints.is_empty() {
            return Err(Error::Rig {
                line: 0,
                message: "rig contains no views".into(),
            });
        }
        Ok(Self { viewpoints })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# azimuth_deg elevation_deg distance\n");
        for v in &self.viewpoints {
            let _ = writeln!(
                out,
                "{} {} {}",
                v.azimuth_deg(),
                v.elevation_deg(),
                v.distance()
            );
        }
        out
    }

    pub fn len(&self) -> usize {
        self.viewpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.viewpoints.is_empty()
    }

    pub fn cameras(&self, intrinsics: CameraIntrinsics) -> Result<Vec<Camera>> {
        self.viewpoints
            .iter()
            .map(|&v| Camera::new(v, intrinsics))
            .collect()
    }
}
