//! Silhouette and volume losses, Adam, and direct voxel reconstruction.
//!
//! Reconstruction optimises per-voxel logits `z` with occupancy `σ(z)`
//! against
//!
//! ```text
//! L = λ_proj · (1/n) Σ_j ‖P(V; α_j) − S_j‖² + λ_vol · ‖V − V_gt‖²
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Camera, SamplingGrid};
use crate::projector::{project, project_backward_into, Silhouette};
use crate::volume::VoxelGrid;

/// Logits are kept within `±LOGIT_BOUND` so that `σ(z)` never rounds to
/// exactly 0 or 1.
pub const LOGIT_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda_proj: f64,
    pub lambda_vol: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_proj: 1.0,
            lambda_vol: 1.0,
        }
    }
}

impl LossConfig {
    pub fn projection_only() -> Self {
        Self {
            lambda_proj: 1.0,
            lambda_vol: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.lambda_proj) || !ok(self.lambda_vol) {
            return Err(Error::invalid("loss weights must be finite and >= 0"));
        }
        if self.lambda_proj + self.lambda_vol <= 0.0 {
            return Err(Error::invalid("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// Loss value with its gradient with respect to the occupancies.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Mean over views of the squared silhouette residual.
///
/// Per-view terms are evaluated in parallel and summed in view order.
pub fn projection_loss(
    v: &VoxelGrid,
    silhouettes: &[Silhouette],
    grids: &[SamplingGrid],
) -> Result<LossGrad> {
    if silhouettes.len() != grids.len() {
        return Err(Error::shape(format!(
            "{} silhouettes for {} sampling grids",
            silhouettes.len(),
            grids.len()
        )));
    }
    if grids.is_empty() {
        return Err(Error::invalid("projection loss needs at least one view"));
    }
    let per_view: Vec<(f64, Vec<f64>)> = silhouettes
        .par_iter()
        .zip(grids.par_iter())
        .map(|(target, grid)| view_term(v, target, grid))
        .collect::<Result<_>>()?;
    let scale = 1.0 / grids.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; v.len()];
    for (l, g) in per_view {
        loss += l;
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
    }
    loss *= scale;
    for x in &mut grad {
        *x *= scale;
    }
    Ok(LossGrad { loss, grad })
}

fn view_term(v: &VoxelGrid, target: &Silhouette, grid: &SamplingGrid) -> Result<(f64, Vec<f64>)> {
    let [h, w, _] = grid.out_dims();
    if (target.height(), target.width()) != (h, w) {
        return Err(Error::shape(format!(
            "silhouette {}x{} vs sampling grid {h}x{w}",
            target.height(),
            target.width()
        )));
    }
    let (pred, argmax) = project(v, grid)?;
    let residual: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| p - t)
        .collect();
    let loss = residual.iter().map(|r| r * r).sum();
    let upstream: Vec<f64> = residual.iter().map(|r| 2.0 * r).collect();
    let mut grad = vec![0.0; v.len()];
    project_backward_into(v, grid, &argmax, &upstream, 1.0, &mut grad)?;
    Ok((loss, grad))
}

/// `‖V − V_gt‖²` and `2(V − V_gt)`.
pub fn volume_loss(v: &VoxelGrid, gt: &VoxelGrid) -> Result<LossGrad> {
    if v.dims() != gt.dims() {
        return Err(Error::shape(format!(
            "volume dims {:?} vs ground truth {:?}",
            v.dims(),
            gt.dims()
        )));
    }
    let grad: Vec<f64> = v
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| 2.0 * (a - b))
        .collect();
    let loss = v
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(LossGrad { loss, grad })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub total: f64,
    pub proj: f64,
    pub vol: f64,
    pub grad: Vec<f64>,
}

/// `λ_proj · L_proj + λ_vol · L_vol`. The volume term is reported as 0 when
/// no ground truth is given.
pub fn combined_loss(
    v: &VoxelGrid,
    silhouettes: &[Silhouette],
    grids: &[SamplingGrid],
    gt: Option<&VoxelGrid>,
    cfg: &LossConfig,
) -> Result<CombinedLoss> {
    cfg.validate()?;
    if cfg.lambda_vol > 0.0 && gt.is_none() {
        return Err(Error::MissingSupervision(cfg.lambda_vol));
    }
    let proj = projection_loss(v, silhouettes, grids)?;
    let vol = gt.map(|gt| volume_loss(v, gt)).transpose()?;
    let mut grad: Vec<f64> = proj.grad.iter().map(|g| cfg.lambda_proj * g).collect();
    let mut total = cfg.lambda_proj * proj.loss;
    let mut vol_loss = 0.0;
    if let Some(vol) = vol {
        vol_loss = vol.loss;
        if cfg.lambda_vol > 0.0 {
            total += cfg.lambda_vol * vol.loss;
            for (acc, g) in grad.iter_mut().zip(&vol.grad) {
                *acc += cfg.lambda_vol * g;
            }
        }
    }
    Ok(CombinedLoss {
        total,
        proj: proj.loss,
        vol: vol_loss,
        grad,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.eps > 0.0) {
            return Err(Error::invalid("Adam lr and eps must be > 0"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step_count: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        })
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::shape(format!(
                "Adam state holds {} parameters, got {} params and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    /// Output grid size.
    pub dims: [usize; 3],
    /// Disparity slices of each camera-frame volume.
    pub slices: usize,
    pub iterations: usize,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub init_logit: f64,
    /// Half-width of uniform noise added to the initial logits.
    pub init_jitter: f64,
    /// Indices into the supplied views; every step uses all of them.
    pub view_subset: Vec<usize>,
    pub seed: u64,
}

impl ReconConfig {
    /// Defaults for a `dims` grid observed by `views` cameras.
    pub fn new(dims: [usize; 3], views: usize) -> Self {
        Self {
            dims,
            slices: 32,
            iterations: 500,
            loss: LossConfig::projection_only(),
            adam: AdamConfig::default(),
            init_logit: 0.0,
            init_jitter: 0.0,
            view_subset: (0..views).collect(),
            seed: 0,
        }
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    pub total: f64,
    pub proj: f64,
    pub vol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub volume: VoxelGrid,
    pub history: Vec<LossRecord>,
}

impl Reconstruction {
    /// Largest loss increase between the start and end of any `window`-long
    /// stretch of the history (0 when the loss never rises over a window).
    pub fn worst_window_increase(&self, window: usize) -> f64 {
        self.history
            .windows(window + 1)
            .map(|w| w[window].total - w[0].total)
            .fold(0.0, f64::max)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Recovers an occupancy grid whose projections match `silhouettes`.
///
/// `silhouettes[i]` is the observation of `cameras[i]`; only the views in
/// `cfg.view_subset` take part. Each iteration evaluates the combined loss,
/// chains it through the logistic (`dL/dz = dL/dV · V(1 − V)`) and takes one
/// Adam step.
pub fn reconstruct(
    silhouettes: &[Silhouette],
    cameras: &[Camera],
    cfg: &ReconConfig,
    gt: Option<&VoxelGrid>,
) -> Result<Reconstruction> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("iterations must be >= 1"));
    }
    if silhouettes.len() != cameras.len() {
        return Err(Error::shape(format!(
            "{} silhouettes for {} cameras",
            silhouettes.len(),
            cameras.len()
        )));
    }
    if cfg.view_subset.is_empty() {
        return Err(Error::invalid("view subset is empty"));
    }
    if let Some(&bad) = cfg.view_subset.iter().find(|&&i| i >= cameras.len()) {
        return Err(Error::invalid(format!(
            "view index {bad} out of range for {} views",
            cameras.len()
        )));
    }
    cfg.loss.validate()?;
    if cfg.loss.lambda_vol > 0.0 && gt.is_none() {
        return Err(Error::MissingSupervision(cfg.loss.lambda_vol));
    }
    if let Some(gt) = gt {
        if gt.dims() != cfg.dims {
            return Err(Error::shape(format!(
                "ground truth dims {:?} vs reconstruction dims {:?}",
                gt.dims(),
                cfg.dims
            )));
        }
    }

    let grids: Vec<SamplingGrid> = cfg
        .view_subset
        .par_iter()
        .map(|&i| cameras[i].sampling_grid(cfg.slices, cfg.dims))
        .collect::<Result<_>>()?;
    let targets: Vec<Silhouette> = cfg
        .view_subset
        .iter()
        .map(|&i| silhouettes[i].clone())
        .collect();

    let len = cfg.dims.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut logits: Vec<f64> = (0..len)
        .map(|_| {
            let noise = if cfg.init_jitter > 0.0 {
                rng.gen_range(-cfg.init_jitter..=cfg.init_jitter)
            } else {
                0.0
            };
            (cfg.init_logit + noise).clamp(-LOGIT_BOUND, LOGIT_BOUND)
        })
        .collect();
    let mut adam = AdamState::new(cfg.adam, len)?;
    let mut history = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let occ = VoxelGrid::from_raw(cfg.dims, logits.iter().map(|&z| sigmoid(z)).collect());
        let loss = combined_loss(&occ, &targets, &grids, gt, &cfg.loss)?;
        if !loss.total.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }
        history.push(LossRecord {
            iter,
            total: loss.total,
            proj: loss.proj,
            vol: loss.vol,
        });
        let dz: Vec<f64> = loss
            .grad
            .iter()
            .zip(occ.data())
            .map(|(g, v)| g * v * (1.0 - v))
            .collect();
        adam.step(&mut logits, &dz)?;
        for z in &mut logits {
            *z = z.clamp(-LOGIT_BOUND, LOGIT_BOUND);
        }
    }

    let volume = VoxelGrid::new(cfg.dims, logits.iter().map(|&z| sigmoid(z)).collect())?;
    Ok(Reconstruction { volume, history })
}
