use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use voxproj::ShapeKind;

#[derive(Debug, Parser)]
#[command(
    name = "voxproj",
    version,
    about = "Voxel silhouette projection and reconstruction"
)]
pub struct Cli {
    /// Worker threads for the library (default: all cores). Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Where to write the run manifest (each command has a default location).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic shape as VOXG.
    Synth(SynthArgs),
    /// Render one PGM silhouette per rig view.
    Render(RenderArgs),
    /// Recover a volume from a directory of silhouettes.
    Reconstruct(ReconstructArgs),
    /// Space-carve the visual hull of a directory of silhouettes.
    Carve(CarveArgs),
    /// Compare a predicted volume against ground truth.
    Eval(EvalArgs),
    /// Check the projection gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

/// `N` for a cube or `HxWxD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims(pub [usize; 3]);

impl std::str::FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split('x').collect();
        let parse = |p: &str| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| format!("bad dims '{s}' (expected N or HxWxD)"))
        };
        match parts.as_slice() {
            [n] => {
                let n = parse(n)?;
                Ok(Dims([n; 3]))
            }
            [h, w, d] => Ok(Dims([parse(h)?, parse(w)?, parse(d)?])),
            _ => Err(format!("bad dims '{s}' (expected N or HxWxD)")),
        }
    }
}

/// `0-7`, `0,3,6` or a mix such as `0-3,12`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Views(pub Vec<usize>);

impl std::str::FromStr for Views {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("bad view list '{s}' (expected e.g. 0-7 or 0,3,6)");
        let mut out = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            match part.split_once('-') {
                Some((a, b)) => {
                    let a: usize = a.trim().parse().map_err(|_| bad())?;
                    let b: usize = b.trim().parse().map_err(|_| bad())?;
                    if a > b {
                        return Err(bad());
                    }
                    out.extend(a..=b);
                }
                None => out.push(part.parse().map_err(|_| bad())?),
            }
        }
        let mut seen = out.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != out.len() {
            return Err(format!("view list '{s}' repeats a view"));
        }
        Ok(Views(out))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub kind: ShapeKindArg,
    #[arg(long, default_value = "32")]
    pub dims: Dims,
    #[arg(long)]
    pub out: PathBuf,
}

/// Serializable wrapper so manifests store the shape by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeKindArg(pub ShapeKind);

impl std::str::FromStr for ShapeKindArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<ShapeKind>()
            .map(ShapeKindArg)
            .map_err(|e| match e {
                voxproj::Error::InvalidArgument(m) => m,
                other => other.to_string(),
            })
    }
}

impl Serialize for ShapeKindArg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0.name())
    }
}

impl<'de> Deserialize<'de> for ShapeKindArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub vol: PathBuf,
    /// Rig file or `default24`.
    #[arg(long, default_value = "default24")]
    pub rig: String,
    #[arg(long, default_value_t = 32)]
    pub image_size: usize,
    /// Focal length in pixels (default: 0.86 · image size · 2).
    #[arg(long)]
    pub focal: Option<f64>,
    /// Disparity slices per view.
    #[arg(long, default_value_t = 32)]
    pub slices: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub sil_dir: PathBuf,
    #[arg(long, default_value = "default24")]
    pub rig: String,
    #[arg(long, default_value = "32")]
    pub dims: Dims,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_proj: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda_vol: f64,
    /// Ground-truth VOXG, needed when `--lambda-vol` > 0.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Subset of rig views, e.g. `0-7` or `0,3,6,9,12,15,18,21` (default: all).
    #[arg(long)]
    pub views: Option<Views>,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Half-width of uniform noise on the initial logits.
    #[arg(long, default_value_t = 0.0)]
    pub init_jitter: f64,
    #[arg(long, default_value_t = 32)]
    pub slices: usize,
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CarveArgs {
    #[arg(long)]
    pub sil_dir: PathBuf,
    #[arg(long, default_value = "default24")]
    pub rig: String,
    #[arg(long, default_value = "32")]
    pub dims: Dims,
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also compare per-view silhouettes under this rig.
    #[arg(long)]
    pub rig: Option<String>,
    #[arg(long, default_value_t = 32)]
    pub image_size: usize,
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub slices: usize,
    /// Per-view CSV destination.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GradcheckArgs {
    /// At most 8 per axis.
    #[arg(long, default_value = "5")]
    pub dims: Dims,
    /// Views taken evenly from the default rig.
    #[arg(long, default_value_t = 3)]
    pub views: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tie_eps: f64,
    #[arg(long, default_value_t = 4)]
    pub image_size: usize,
    #[arg(long, default_value_t = 4)]
    pub slices: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest_path: PathBuf,
}
