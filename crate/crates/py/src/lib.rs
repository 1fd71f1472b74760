//! Python bindings. Volumes and silhouettes cross the boundary as flat lists
//! in row-major `(n, m, l)` / `(row, col)` order.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use voxproj::oracle::default_march_step;
use voxproj::recon::LossConfig;
use voxproj::{io, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Occupancy grid with values in `[0, 1]`.
#[pyclass(name = "VoxelGrid", module = "voxproj_py", from_py_object)]
#[derive(Clone)]
struct PyVoxelGrid {
    inner: voxproj::VoxelGrid,
}

#[pymethods]
impl PyVoxelGrid {
    #[new]
    fn new(dims: [usize; 3], data: Vec<f64>) -> PyResult<Self> {
        let inner = voxproj::VoxelGrid::new(dims, data).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn zeros(dims: [usize; 3]) -> PyResult<Self> {
        let inner = voxproj::VoxelGrid::zeros(dims).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let inner = io::read_voxg(&path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_voxg(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.dims()
    }

    fn get(&self, n: usize, m: usize, l: usize) -> PyResult<f64> {
        let [h, w, d] = self.inner.dims();
        if n >= h || m >= w || l >= d {
            return Err(PyValueError::new_err("voxel index out of range"));
        }
        Ok(self.inner.get(n, m, l))
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    /// Number of voxels at or above `threshold`.
    #[pyo3(signature = (threshold = 0.5))]
    fn occupied(&self, threshold: f64) -> PyResult<usize> {
        Ok(voxproj::binarize(&self.inner, threshold)
            .map_err(to_py)?
            .count())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("VoxelGrid(dims={:?})", self.inner.dims())
    }
}

/// Soft silhouette with values in `[0, 1]`.
#[pyclass(name = "Silhouette", module = "voxproj_py", from_py_object)]
#[derive(Clone)]
struct PySilhouette {
    inner: voxproj::Silhouette,
}

#[pymethods]
impl PySilhouette {
    #[new]
    fn new(height: usize, width: usize, data: Vec<f64>) -> PyResult<Self> {
        let inner = voxproj::Silhouette::new(height, width, data).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let inner = io::read_pgm(&path).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_pgm(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    #[pyo3(signature = (other, threshold = 0.5))]
    fn iou(&self, other: &PySilhouette, threshold: f64) -> PyResult<f64> {
        self.inner.iou(&other.inner, threshold).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Silhouette({}x{})", self.inner.width(), self.inner.height())
    }
}

/// Orbit camera looking at the grid centre.
#[pyclass(name = "Camera", module = "voxproj_py", from_py_object)]
#[derive(Clone)]
struct PyCamera {
    inner: voxproj::Camera,
}

#[pymethods]
impl PyCamera {
    /// `focal` defaults to the default rig's focal length for `image_size`.
    #[new]
    #[pyo3(signature = (azimuth_deg, elevation_deg = 30.0, distance = 2.0, image_size = 32, focal = None))]
    fn new(
        azimuth_deg: f64,
        elevation_deg: f64,
        distance: f64,
        image_size: usize,
        focal: Option<f64>,
    ) -> PyResult<Self> {
        let focal = focal.unwrap_or_else(|| {
            voxproj::geometry::default_focal(image_size, voxproj::geometry::DEFAULT_DISTANCE)
        });
        let intr = voxproj::build_intrinsics(focal, image_size, image_size).map_err(to_py)?;
        let vp = voxproj::Viewpoint::from_degrees(azimuth_deg, elevation_deg, distance)
            .map_err(to_py)?;
        let inner = voxproj::Camera::new(vp, intr).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn azimuth_deg(&self) -> f64 {
        self.inner.viewpoint.azimuth_deg()
    }

    #[getter]
    fn elevation_deg(&self) -> f64 {
        self.inner.viewpoint.elevation_deg()
    }

    #[getter]
    fn distance(&self) -> f64 {
        self.inner.viewpoint.distance()
    }

    #[getter]
    fn focal(&self) -> f64 {
        self.inner.intrinsics.focal
    }

    #[getter]
    fn image_size(&self) -> (usize, usize) {
        (self.inner.intrinsics.image_h, self.inner.intrinsics.image_w)
    }

    /// 4×4 perspective transform as nested lists.
    fn transform(&self) -> Vec<Vec<f64>> {
        let t = self.inner.transform.theta();
        (0..4)
            .map(|r| (0..4).map(|c| t[(r, c)]).collect())
            .collect()
    }

    /// World point to `(x, y, disparity)`, or `None` behind the camera.
    fn world_to_camera(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        self.inner
            .transform
            .world_to_camera(&voxproj::geometry::Vector3::new(p[0], p[1], p[2]))
    }

    fn __repr__(&self) -> String {
        format!(
            "Camera(azimuth_deg={}, elevation_deg={}, distance={})",
            self.azimuth_deg(),
            self.elevation_deg(),
            self.distance()
        )
    }
}

fn cameras(cams: &[PyCamera]) -> Vec<voxproj::Camera> {
    cams.iter().map(|c| c.inner.clone()).collect()
}

fn silhouettes(sils: &[PySilhouette]) -> Vec<voxproj::Silhouette> {
    sils.iter().map(|s| s.inner.clone()).collect()
}

/// The 24-view rig: 15° azimuth steps, 30° elevation, distance 2.
#[pyfunction]
#[pyo3(signature = (image_size = 32))]
fn default_rig(image_size: usize) -> PyResult<Vec<PyCamera>> {
    let intr = voxproj::CameraIntrinsics::default_for(image_size).map_err(to_py)?;
    Ok(voxproj::Rig::default24()
        .cameras(intr)
        .map_err(to_py)?
        .into_iter()
        .map(|inner| PyCamera { inner })
        .collect())
}

/// `kind` is one of sphere, cube, cross, chair, hollow_box.
#[pyfunction]
fn synth_shape(kind: &str, dims: [usize; 3]) -> PyResult<PyVoxelGrid> {
    let kind: voxproj::ShapeKind = kind.parse().map_err(to_py)?;
    let inner = voxproj::synth_shape(kind, dims).map_err(to_py)?;
    Ok(PyVoxelGrid { inner })
}

#[pyfunction]
#[pyo3(signature = (volume, camera, slices = 32))]
fn project(
    py: Python<'_>,
    volume: &PyVoxelGrid,
    camera: &PyCamera,
    slices: usize,
) -> PyResult<PySilhouette> {
    py.detach(|| {
        let grid = camera.inner.sampling_grid(slices, volume.inner.dims())?;
        voxproj::project(&volume.inner, &grid).map(|(s, _)| s)
    })
    .map(|inner| PySilhouette { inner })
    .map_err(to_py)
}

/// Gradient of `sum(upstream · project(volume))` with respect to the volume.
#[pyfunction]
#[pyo3(signature = (volume, camera, upstream, slices = 32))]
fn project_backward(
    py: Python<'_>,
    volume: &PyVoxelGrid,
    camera: &PyCamera,
    upstream: Vec<f64>,
    slices: usize,
) -> PyResult<Vec<f64>> {
    py.detach(|| {
        let grid = camera.inner.sampling_grid(slices, volume.inner.dims())?;
        let (_, argmax) = voxproj::project(&volume.inner, &grid)?;
        voxproj::project_backward(&volume.inner, &grid, &argmax, &upstream)
    })
    .map_err(to_py)
}

/// Reference renderer marching rays through the binarized volume.
#[pyfunction]
#[pyo3(signature = (volume, camera, threshold = 0.5, step = None))]
fn raytrace(
    volume: &PyVoxelGrid,
    camera: &PyCamera,
    threshold: f64,
    step: Option<f64>,
) -> PyResult<PySilhouette> {
    let bin = voxproj::binarize(&volume.inner, threshold).map_err(to_py)?;
    let step = step.unwrap_or_else(|| default_march_step(volume.inner.dims()));
    let inner = voxproj::raytrace_silhouette(&bin, &camera.inner, step).map_err(to_py)?;
    Ok(PySilhouette { inner })
}

/// IoU of the two volumes binarized at `threshold`.
#[pyfunction]
#[pyo3(signature = (a, b, threshold = 0.5))]
fn iou(a: &PyVoxelGrid, b: &PyVoxelGrid, threshold: f64) -> PyResult<f64> {
    let a = voxproj::binarize(&a.inner, threshold).map_err(to_py)?;
    let b = voxproj::binarize(&b.inner, threshold).map_err(to_py)?;
    voxproj::iou(&a, &b).map_err(to_py)
}

#[pyfunction]
fn visual_hull(
    sils: Vec<PySilhouette>,
    cams: Vec<PyCamera>,
    dims: [usize; 3],
) -> PyResult<PyVoxelGrid> {
    let hull = voxproj::visual_hull(&silhouettes(&sils), &cameras(&cams), dims).map_err(to_py)?;
    Ok(PyVoxelGrid {
        inner: voxproj::VoxelGrid::from(&hull),
    })
}

/// `(iter, total, proj, vol)`
type HistoryRow = (usize, f64, f64, f64);

/// Returns the occupancy grid and the loss history as
/// `(iter, total, proj, vol)` tuples.
#[pyfunction]
#[pyo3(signature = (
    sils, cams, dims, iterations = 500, slices = 32, lambda_proj = 1.0,
    lambda_vol = 0.0, gt = None, views = None, lr = 0.1, seed = 0, init_jitter = 0.0
))]
#[allow(clippy::too_many_arguments)]
fn reconstruct(
    py: Python<'_>,
    sils: Vec<PySilhouette>,
    cams: Vec<PyCamera>,
    dims: [usize; 3],
    iterations: usize,
    slices: usize,
    lambda_proj: f64,
    lambda_vol: f64,
    gt: Option<PyVoxelGrid>,
    views: Option<Vec<usize>>,
    lr: f64,
    seed: u64,
    init_jitter: f64,
) -> PyResult<(PyVoxelGrid, Vec<HistoryRow>)> {
    let (sils, cams) = (silhouettes(&sils), cameras(&cams));
    let mut cfg = voxproj::ReconConfig::new(dims, cams.len());
    cfg.iterations = iterations;
    cfg.slices = slices;
    cfg.loss = LossConfig {
        lambda_proj,
        lambda_vol,
    };
    cfg.adam.lr = lr;
    cfg.seed = seed;
    cfg.init_jitter = init_jitter;
    if let Some(v) = views {
        cfg.view_subset = v;
    }
    let gt = gt.map(|g| g.inner);
    let r = py
        .detach(|| voxproj::reconstruct(&sils, &cams, &cfg, gt.as_ref()))
        .map_err(to_py)?;
    let history = r
        .history
        .iter()
        .map(|h| (h.iter, h.total, h.proj, h.vol))
        .collect();
    Ok((PyVoxelGrid { inner: r.volume }, history))
}

/// Finite-difference check of the projection-loss gradient on a seeded random
/// volume. Returns `(max_abs_err, max_rel_err, compared, skipped_ties)`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (seed = 0, dims = [5, 5, 5], views = 3, h = 1e-3, tie_eps = 1e-6, image_size = 4, slices = 4))]
fn grad_check(
    py: Python<'_>,
    seed: u64,
    dims: [usize; 3],
    views: usize,
    h: f64,
    tie_eps: f64,
    image_size: usize,
    slices: usize,
) -> PyResult<(f64, f64, usize, usize)> {
    let cfg = voxproj::RandomCheck {
        dims,
        views,
        h,
        tie_eps,
        image_size,
        slices,
        seed,
    };
    let r = py
        .detach(|| voxproj::random_grad_check(&cfg))
        .map_err(to_py)?;
    Ok((
        r.max_abs_err,
        r.max_rel_err,
        r.num_compared,
        r.num_skipped_ties,
    ))
}

#[pymodule]
fn voxproj_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVoxelGrid>()?;
    m.add_class::<PySilhouette>()?;
    m.add_class::<PyCamera>()?;
    m.add_function(wrap_pyfunction!(default_rig, m)?)?;
    m.add_function(wrap_pyfunction!(synth_shape, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(project_backward, m)?)?;
    m.add_function(wrap_pyfunction!(raytrace, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(visual_hull, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    Ok(())
}
