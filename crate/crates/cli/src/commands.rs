use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use voxproj::geometry::{default_focal, DEFAULT_DISTANCE};
use voxproj::io::{
    loss_history_csv, read_pgm, read_voxg, write_binary_voxg, write_bytes, write_pgm, write_voxg,
};
use voxproj::recon::LossConfig;
use voxproj::{
    binarize, build_intrinsics, iou, project, random_grad_check, reconstruct, synth_shape,
    visual_hull, CameraIntrinsics, RandomCheck, ReconConfig, Rig, Silhouette,
};

use crate::args::*;
use crate::manifest::RunManifest;
use crate::usage;

pub const GRADCHECK_MAX_DIM: usize = 8;
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

/// Runs one command and returns its exit code.
pub fn run(command: Command, manifest: Option<PathBuf>) -> Result<u8> {
    match command {
        Command::Synth(a) => synth(a, manifest),
        Command::Render(a) => render(a, manifest),
        Command::Reconstruct(a) => reconstruct_cmd(a, manifest),
        Command::Carve(a) => carve(a, manifest),
        Command::Eval(a) => eval(a, manifest),
        Command::Gradcheck(a) => gradcheck(a, manifest),
        Command::Replay(a) => replay(&a.manifest_path),
    }
}

fn replay(path: &Path) -> Result<u8> {
    let m = RunManifest::read(path)?;
    let config = m.config.clone();
    let bad = |e: serde_json::Error| usage(format!("{}: bad config: {e}", path.display()));
    let dest = Some(path.to_path_buf());
    match m.command.as_str() {
        "synth" => synth(serde_json::from_value(config).map_err(bad)?, dest),
        "render" => render(serde_json::from_value(config).map_err(bad)?, dest),
        "reconstruct" => reconstruct_cmd(serde_json::from_value(config).map_err(bad)?, dest),
        "carve" => carve(serde_json::from_value(config).map_err(bad)?, dest),
        "eval" => eval(serde_json::from_value(config).map_err(bad)?, dest),
        "gradcheck" => gradcheck(serde_json::from_value(config).map_err(bad)?, dest),
        other => Err(usage(format!(
            "{}: unknown command '{other}'",
            path.display()
        ))),
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_rig(spec: &str) -> Result<Rig> {
    if spec == "default24" {
        return Ok(Rig::default24());
    }
    let text = fs::read_to_string(spec).with_context(|| format!("rig {spec}"))?;
    Rig::parse(&text).with_context(|| spec.to_string())
}

fn resolve_focal(focal: Option<f64>, image_w: usize) -> f64 {
    focal.unwrap_or_else(|| default_focal(image_w, DEFAULT_DISTANCE))
}

fn view_file_name(index: usize, azimuth_deg: f64) -> String {
    format!("view_{index:02}_{:03}.pgm", azimuth_deg.round() as i64)
}

/// Reads `view_<index>_*.pgm` files, which must cover indices `0..expected`.
fn load_silhouettes(dir: &Path, expected: usize) -> Result<Vec<Silhouette>> {
    let entries = fs::read_dir(dir).with_context(|| format!("{}", dir.display()))?;
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("{}", dir.display()))?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n,
            None => continue,
        };
        let index = name
            .strip_prefix("view_")
            .filter(|_| name.ends_with(".pgm"))
            .and_then(|rest| rest.split('_').next())
            .and_then(|i| i.parse::<usize>().ok());
        if let Some(i) = index {
            found.push((i, path));
        }
    }
    found.sort();
    if found.len() != expected || found.iter().enumerate().any(|(k, (i, _))| k != *i) {
        return Err(usage(format!(
            "{}: found {} silhouettes, rig has {expected} views (need view_00 .. view_{:02})",
            dir.display(),
            found.len(),
            expected.saturating_sub(1)
        )));
    }
    let sils: Vec<Silhouette> = found
        .iter()
        .map(|(_, p)| read_pgm(p))
        .collect::<voxproj::Result<_>>()?;
    let (h, w) = (sils[0].height(), sils[0].width());
    if let Some((_, p)) = found
        .iter()
        .zip(&sils)
        .find(|(_, s)| s.height() != h || s.width() != w)
        .map(|(f, _)| f)
    {
        return Err(usage(format!(
            "{}: size differs from view_00 ({w}x{h})",
            p.display()
        )));
    }
    Ok(sils)
}

fn observed_intrinsics(sils: &[Silhouette], focal: f64) -> Result<CameraIntrinsics> {
    Ok(build_intrinsics(focal, sils[0].width(), sils[0].height())?)
}

fn synth(args: SynthArgs, manifest: Option<PathBuf>) -> Result<u8> {
    let v = synth_shape(args.kind.0, args.dims.0)?;
    write_voxg(&args.out, &v)?;
    let occupied = binarize(&v, 0.5)?.count();
    println!("{} {:?} occupied={occupied}", args.kind.0, args.dims.0);
    let m = RunManifest::new("synth", None, &args, vec![], vec![args.out.clone()])?;
    m.write(&manifest.unwrap_or_else(|| sidecar(&args.out, ".manifest.json")))?;
    Ok(0)
}

fn render(mut args: RenderArgs, manifest: Option<PathBuf>) -> Result<u8> {
    let v = read_voxg(&args.vol)?;
    let rig = load_rig(&args.rig)?;
    let focal = resolve_focal(args.focal, args.image_size);
    args.focal = Some(focal);
    let intr = build_intrinsics(focal, args.image_size, args.image_size)?;
    let cameras = rig.cameras(intr)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("{}", args.out_dir.display()))?;
    let mut outputs = Vec::new();
    for (i, cam) in cameras.iter().enumerate() {
        let (s, _) = project(&v, &cam.sampling_grid(args.slices, v.dims())?)?;
        let path = args
            .out_dir
            .join(view_file_name(i, cam.viewpoint.azimuth_deg()));
        write_pgm(&path, &s)?;
        outputs.push(path);
    }
    let rig_path = args.out_dir.join("rig.txt");
    write_bytes(&rig_path, rig.to_text().as_bytes())?;
    outputs.push(rig_path);
    println!(
        "rendered {} views to {}",
        cameras.len(),
        args.out_dir.display()
    );
    let inputs = vec![args.vol.clone()];
    let dest = manifest.unwrap_or_else(|| args.out_dir.join("manifest.json"));
    RunManifest::new("render", None, &args, inputs, outputs)?.write(&dest)?;
    Ok(0)
}

fn reconstruct_cmd(mut args: ReconstructArgs, manifest: Option<PathBuf>) -> Result<u8> {
    let rig = load_rig(&args.rig)?;
    let sils = load_silhouettes(&args.sil_dir, rig.len())?;
    let focal = resolve_focal(args.focal, sils[0].width());
    args.focal = Some(focal);
    let views = args
        .views
        .clone()
        .unwrap_or_else(|| Views((0..rig.len()).collect()));
    if let Some(&bad) = views.0.iter().find(|&&i| i >= rig.len()) {
        return Err(usage(format!(
            "view {bad} out of range for a {}-view rig",
            rig.len()
        )));
    }
    args.views = Some(views.clone());
    if args.lambda_vol > 0.0 && args.gt.is_none() {
        return Err(usage(format!(
            "--lambda-vol {} requires --gt",
            args.lambda_vol
        )));
    }
    let gt = args.gt.as_deref().map(read_voxg).transpose()?;

    let cameras = rig.cameras(observed_intrinsics(&sils, focal)?)?;
    let mut cfg = ReconConfig::new(args.dims.0, rig.len());
    cfg.slices = args.slices;
    cfg.iterations = args.iters;
    cfg.loss = LossConfig {
        lambda_proj: args.lambda_proj,
        lambda_vol: args.lambda_vol,
    };
    cfg.adam.lr = args.lr;
    cfg.init_jitter = args.init_jitter;
    cfg.view_subset = views.0;
    cfg.seed = args.seed;
    let r = reconstruct(&sils, &cameras, &cfg, gt.as_ref())?;

    write_voxg(&args.out, &r.volume)?;
    let loss_path = sidecar(&args.out, ".loss.csv");
    write_bytes(&loss_path, loss_history_csv(&r.history).as_bytes())?;
    let last = r.history.last().expect("at least one iteration");
    match &gt {
        Some(gt) => println!(
            "final loss {:.6} iou {:.6}",
            last.total,
            iou(&binarize(&r.volume, 0.5)?, &binarize(gt, 0.5)?)?
        ),
        None => println!("final loss {:.6}", last.total),
    }

    let mut inputs = vec![args.sil_dir.clone()];
    if args.rig != "default24" {
        inputs.push(PathBuf::from(&args.rig));
    }
    inputs.extend(args.gt.clone());
    let outputs = vec![args.out.clone(), loss_path];
    let dest = manifest.unwrap_or_else(|| sidecar(&args.out, ".manifest.json"));
    RunManifest::new("reconstruct", Some(args.seed), &args, inputs, outputs)?.write(&dest)?;
    Ok(0)
}

fn carve(mut args: CarveArgs, manifest: Option<PathBuf>) -> Result<u8> {
    let rig = load_rig(&args.rig)?;
    let sils = load_silhouettes(&args.sil_dir, rig.len())?;
    let focal = resolve_focal(args.focal, sils[0].width());
    args.focal = Some(focal);
    let cameras = rig.cameras(observed_intrinsics(&sils, focal)?)?;
    let hull = visual_hull(&sils, &cameras, args.dims.0)?;
    write_binary_voxg(&args.out, &hull)?;
    println!("hull occupied={}", hull.count());
    let mut inputs = vec![args.sil_dir.clone()];
    if args.rig != "default24" {
        inputs.push(PathBuf::from(&args.rig));
    }
    let dest = manifest.unwrap_or_else(|| sidecar(&args.out, ".manifest.json"));
    RunManifest::new("carve", None, &args, inputs, vec![args.out.clone()])?.write(&dest)?;
    Ok(0)
}

fn eval(mut args: EvalArgs, manifest: Option<PathBuf>) -> Result<u8> {
    let pred = read_voxg(&args.pred)?;
    let gt = read_voxg(&args.gt)?;
    if pred.dims() != gt.dims() {
        return Err(usage(format!(
            "dims differ: pred {:?} vs gt {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let score = iou(
        &binarize(&pred, args.threshold)?,
        &binarize(&gt, args.threshold)?,
    )?;
    println!("iou {score:.6}");

    let mut outputs = Vec::new();
    if let Some(spec) = &args.rig {
        let rig = load_rig(spec)?;
        let focal = resolve_focal(args.focal, args.image_size);
        args.focal = Some(focal);
        let cameras = rig.cameras(build_intrinsics(focal, args.image_size, args.image_size)?)?;
        let mut csv = String::from("view,azimuth_deg,iou\n");
        for (i, cam) in cameras.iter().enumerate() {
            let grid = cam.sampling_grid(args.slices, pred.dims())?;
            let (a, _) = project(&pred, &grid)?;
            let (b, _) = project(&gt, &grid)?;
            csv.push_str(&format!(
                "{i},{},{:.6}\n",
                cam.viewpoint.azimuth_deg(),
                a.iou(&b, args.threshold)?
            ));
        }
        match &args.report {
            Some(path) => {
                write_bytes(path, csv.as_bytes())?;
                outputs.push(path.clone());
            }
            None => print!("{csv}"),
        }
    }

    let dest = manifest.unwrap_or_else(|| match &args.report {
        Some(r) => sidecar(r, ".manifest.json"),
        None => sidecar(&args.pred, ".eval.manifest.json"),
    });
    let inputs = vec![args.pred.clone(), args.gt.clone()];
    RunManifest::new("eval", None, &args, inputs, outputs)?.write(&dest)?;
    Ok(0)
}

fn gradcheck(args: GradcheckArgs, manifest: Option<PathBuf>) -> Result<u8> {
    let dims = args.dims.0;
    if dims.iter().any(|&d| d > GRADCHECK_MAX_DIM) {
        return Err(usage(format!(
            "--dims {dims:?} too large for finite differences (max {GRADCHECK_MAX_DIM} per axis)"
        )));
    }
    let report = random_grad_check(&RandomCheck {
        dims,
        views: args.views,
        h: args.h,
        tie_eps: args.tie_eps,
        image_size: args.image_size,
        slices: args.slices,
        seed: args.seed,
    })?;
    println!("{report}");

    let dest = manifest.unwrap_or_else(|| PathBuf::from("gradcheck.manifest.json"));
    RunManifest::new("gradcheck", Some(args.seed), &args, vec![], vec![])?.write(&dest)?;
    Ok(if report.max_rel_err < GRADCHECK_TOLERANCE {
        0
    } else {
        1
    })
}
