"""Smoke test for the voxproj_py extension module.

Build and install first, e.g.
    maturin build --release -m crates/py/Cargo.toml -o dist && pip install dist/voxproj_py-*.whl
"""

import os
import sys
import tempfile

import voxproj_py as vp


def check(cond, msg):
    if not cond:
        print("FAIL:", msg)
        sys.exit(1)
    print("ok:", msg)


def main():
    dims = [16, 16, 16]
    sphere = vp.synth_shape("sphere", dims)
    check(sphere.dims == dims and len(sphere) == 16 ** 3, "synth_shape dims")
    check(sphere.occupied() > 0, "sphere is occupied")

    rig = vp.default_rig(16)
    check(len(rig) == 24 and abs(rig[1].azimuth_deg - 15.0) < 1e-9, "default rig")

    sils = [vp.project(sphere, cam, slices=16) for cam in rig]
    check(all(s.height == 16 and s.width == 16 for s in sils), "projection size")
    check(all(0.0 <= x <= 1.0 + 1e-12 for x in sils[0].to_list()), "silhouette range")

    ray = vp.raytrace(sphere, rig[0])
    check(sils[0].iou(ray) > 0.8, "ray tracer agrees with projection")

    empty = vp.VoxelGrid.zeros(dims)
    check(max(vp.project(empty, rig[3], slices=16).to_list()) == 0.0, "empty volume is dark")

    grad = vp.project_backward(sphere, rig[0], [1.0] * 256, slices=16)
    check(len(grad) == 16 ** 3 and sum(grad) > 0, "backward pass")

    hull = vp.visual_hull(sils, rig, dims)
    check(vp.iou(hull, sphere) > 0.5, "visual hull")

    vol, history = vp.reconstruct(sils, rig, dims, iterations=60, slices=16)
    check(len(history) == 60 and history[-1][1] < history[0][1], "loss decreases")
    check(vp.iou(vol, sphere) > 0.6, "reconstruction resembles the sphere")

    max_abs, max_rel, compared, skipped = vp.grad_check(seed=7)
    check(max_rel < 1e-3 and compared > 0, "gradient check")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "s.voxg")
        sphere.write(path)
        check(vp.VoxelGrid.read(path).to_list() == sphere.to_list(), "VOXG round trip")
        pgm = os.path.join(tmp, "v.pgm")
        sils[0].write(pgm)
        back = vp.Silhouette.read(pgm).to_list()
        check(max(abs(a - b) for a, b in zip(back, sils[0].to_list())) <= 0.5 / 255 + 1e-12,
              "PGM round trip")

    try:
        vp.synth_shape("blob", dims)
    except ValueError as e:
        check("unknown kind" in str(e), "bad kind raises ValueError")
    else:
        check(False, "bad kind raises ValueError")

    print("all smoke checks passed")


if __name__ == "__main__":
    main()
