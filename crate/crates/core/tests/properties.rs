use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxproj::oracle::default_march_step;
use voxproj::*;

const DIMS: [usize; 3] = [6, 6, 6];

fn volume(seed: u64, dims: [usize; 3]) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VoxelGrid::from_fn(dims, |_, _, _| rng.gen::<f64>()).unwrap()
}

fn sparse_binary(seed: u64, dims: [usize; 3], p: f64) -> BinaryVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BinaryVolume::new(
        dims,
        (0..dims.iter().product())
            .map(|_| rng.gen_bool(p))
            .collect(),
    )
    .unwrap()
}

fn camera(az_deg: f64, el_deg: f64, image: usize) -> Camera {
    Camera::new(
        Viewpoint::from_degrees(az_deg, el_deg, 2.0).unwrap(),
        CameraIntrinsics::default_for(image).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iou_is_symmetric_and_bounded(a in any::<u64>(), b in any::<u64>(), p in 0.0f64..1.0) {
        let (x, y) = (sparse_binary(a, DIMS, p), sparse_binary(b, DIMS, 0.5));
        let xy = iou(&x, &y).unwrap();
        prop_assert_eq!(xy, iou(&y, &x).unwrap());
        prop_assert!((0.0..=1.0).contains(&xy));
        prop_assert_eq!(iou(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn projection_stays_in_unit_range(seed in any::<u64>(), az in 0.0f64..360.0, el in -60.0f64..60.0) {
        let v = volume(seed, DIMS);
        let (s, _) = project(&v, &camera(az, el, 8).sampling_grid(8, DIMS).unwrap()).unwrap();
        prop_assert!(s.data().iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn projection_is_monotone(seed in any::<u64>(), az in 0.0f64..360.0) {
        let v = volume(seed, DIMS);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let more = VoxelGrid::new(
            DIMS,
            v.data().iter().map(|&x| x + rng.gen::<f64>() * (1.0 - x)).collect(),
        )
        .unwrap();
        let grid = camera(az, 30.0, 8).sampling_grid(8, DIMS).unwrap();
        let (a, _) = project(&v, &grid).unwrap();
        let (b, _) = project(&more, &grid).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x <= y));
    }

    #[test]
    fn resample_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in 0.0f64..0.5, b in 0.0f64..0.5, az in 0.0f64..360.0) {
        let (v, w) = (volume(s1, DIMS), volume(s2, DIMS));
        let mix = VoxelGrid::new(
            DIMS,
            v.data().iter().zip(w.data()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let grid = camera(az, 30.0, 8).sampling_grid(8, DIMS).unwrap();
        let (uv, uw, um) = (
            resample(&v, &grid).unwrap(),
            resample(&w, &grid).unwrap(),
            resample(&mix, &grid).unwrap(),
        );
        for ((p, q), r) in uv.data().iter().zip(uw.data()).zip(um.data()) {
            prop_assert!((a * p + b * q - r).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_turn_matches_quarter_orbit(seed in any::<u64>(), step in 0usize..24) {
        let v = volume(seed, DIMS);
        let az = 15.0 * step as f64;
        let (a, _) = project(&rotate90_z(&v, 1).unwrap(), &camera(az, 30.0, 8).sampling_grid(8, DIMS).unwrap()).unwrap();
        let (b, _) = project(&v, &camera(az + 90.0, 30.0, 8).sampling_grid(8, DIMS).unwrap()).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn rotation_preserves_occupancy(seed in any::<u64>(), turns in -5i32..6) {
        let v = volume(seed, DIMS);
        let r = rotate90_z(&v, turns).unwrap();
        let mut a = v.data().to_vec();
        let mut b = r.data().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        prop_assert_eq!(rotate90_z(&r, -turns).unwrap(), v);
    }

    #[test]
    fn hull_shrinks_as_views_are_added(first in 0usize..24, extra in prop::collection::vec(0usize..24, 1..6)) {
        let dims = [12; 3];
        let gt = synth_shape(ShapeKind::Chair, dims).unwrap();
        let cams = Rig::default24().cameras(CameraIntrinsics::default_for(16).unwrap()).unwrap();
        let mut chosen_cams = vec![cams[first].clone()];
        let mut sils = vec![project(&gt, &cams[first].sampling_grid(16, dims).unwrap()).unwrap().0];
        let mut hull = visual_hull(&sils, &chosen_cams, dims).unwrap();
        for i in extra {
            chosen_cams.push(cams[i].clone());
            sils.push(project(&gt, &cams[i].sampling_grid(16, dims).unwrap()).unwrap().0);
            let next = visual_hull(&sils, &chosen_cams, dims).unwrap();
            prop_assert_eq!(next.count_outside(&hull).unwrap(), 0);
            hull = next;
        }
    }

    #[test]
    fn raytrace_is_monotone_in_occupancy(seed in any::<u64>(), az in 0.0f64..360.0) {
        let small = sparse_binary(seed, DIMS, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let big = BinaryVolume::new(
            DIMS,
            small.data().iter().map(|&x| x || rng.gen_bool(0.1)).collect(),
        )
        .unwrap();
        let cam = camera(az, 30.0, 8);
        let step = default_march_step(DIMS);
        let a = raytrace_silhouette(&small, &cam, step).unwrap();
        let b = raytrace_silhouette(&big, &cam, step).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x <= y));
    }

    #[test]
    fn gradient_check_passes_on_random_volumes(seed in any::<u64>()) {
        let dims = [5; 3];
        let v = volume(seed, dims);
        let cams = Rig::default24().cameras(CameraIntrinsics::default_for(4).unwrap()).unwrap();
        let grids: Vec<SamplingGrid> = [0, 8, 16]
            .iter()
            .map(|&i| cams[i].sampling_grid(4, dims).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(!seed);
        let targets: Vec<Silhouette> = (0..3)
            .map(|_| Silhouette::new(4, 4, (0..16).map(|_| rng.gen()).collect()).unwrap())
            .collect();
        let r = grad_check(
            &v,
            &grids,
            |g| projection_loss(g, &targets, &grids).map(|l| (l.loss, l.grad)),
            1e-3,
            1e-6,
            None,
        )
        .unwrap();
        prop_assert!(r.max_rel_err < 1e-3, "{}", r);
    }
}

#[test]
fn empty_volume_gives_empty_silhouettes() {
    let v = VoxelGrid::zeros(DIMS).unwrap();
    for cam in Rig::default24()
        .cameras(CameraIntrinsics::default_for(8).unwrap())
        .unwrap()
    {
        let (s, argmax) = project(&v, &cam.sampling_grid(8, DIMS).unwrap()).unwrap();
        assert!(s.data().iter().all(|&x| x == 0.0));
        assert!(argmax.data().iter().all(Option::is_none));
        let r = raytrace_silhouette(&binarize(&v, 0.5).unwrap(), &cam, default_march_step(DIMS))
            .unwrap();
        assert!(r.data().iter().all(|&x| x == 0.0));
    }
}

#[test]
fn raytrace_is_stable_under_step_halving() {
    let dims = [16; 3];
    let bin = binarize(&synth_shape(ShapeKind::Sphere, dims).unwrap(), 0.5).unwrap();
    let step = default_march_step(dims);
    for cam in Rig::default24()
        .cameras(CameraIntrinsics::default_for(32).unwrap())
        .unwrap()
        .iter()
        .step_by(5)
    {
        let a = raytrace_silhouette(&bin, cam, step).unwrap();
        let b = raytrace_silhouette(&bin, cam, step / 2.0).unwrap();
        let differ = a
            .data()
            .iter()
            .zip(b.data())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differ <= 10, "{differ} pixels changed");
    }
}

#[test]
fn reconstruction_is_bit_identical_across_runs_and_thread_counts() {
    let dims = [10; 3];
    let gt = synth_shape(ShapeKind::Cross, dims).unwrap();
    let cams = Rig::default24()
        .cameras(CameraIntrinsics::default_for(10).unwrap())
        .unwrap();
    let sils: Vec<Silhouette> = cams
        .iter()
        .map(|c| project(&gt, &c.sampling_grid(10, dims).unwrap()).unwrap().0)
        .collect();
    let mut cfg = ReconConfig::new(dims, 24);
    cfg.slices = 10;
    cfg.iterations = 15;
    cfg.init_jitter = 1.0;
    cfg.seed = 3;
    let go = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| reconstruct(&sils, &cams, &cfg, None).unwrap())
    };
    let a = go(1);
    assert_eq!(a, go(1));
    assert_eq!(a, go(3));
    cfg.seed = 4;
    assert_ne!(
        a.volume,
        reconstruct(&sils, &cams, &cfg, None).unwrap().volume
    );
}
