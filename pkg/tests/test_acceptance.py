"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in the
terminal summary. ``python tests/test_acceptance.py`` does the same.
"""

import math
import time

import numpy as np
import pytest

from cumeval.eigen import jacobi_eigh3
from cumeval.mesh import rasterize_mesh, write_obj
from cumeval.metrics import EvalConfig, PixelClass, classify, cumulative_iou, iou_c
from cumeval.normals import NormalField, angles_deg, compute_normals, planarity_gate
from cumeval.pipeline import RunConfig, evaluate, evaluate_grids
from cumeval.raster import GridSpec, LabelMask, RasterGrid, write_raster
from cumeval.registration import register, shift_array
from cumeval.synth import Building, SceneSpec, generate, random_scene_spec
from oracles import charpoly_eigenvalues, classify_pixelwise

RESULTS: list[str] = []

SMALL_GRID = GridSpec(64, 64, 0.0, 32.0, 0.5)


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def small_scene(seed, **kw):
    return random_scene_spec(seed, grid=SMALL_GRID, n_buildings=2, margin_px=8, min_size_m=7.0,
                             max_size_m=12.0, **kw)


def gable_scene(pitch, axis="y", sigma=0.0, seed=0, grid=GridSpec(72, 72, 0.0, 36.0, 0.5),
                footprint=(6.0, 6.0, 30.0, 30.0)):
    return generate(SceneSpec(grid, (Building(footprint, "gable", eave_height=8.0, pitch=pitch, ridge_axis=axis),),
                              noise_sigma=sigma, seed=seed))


def test_criterion_1_identity():
    t0 = time.perf_counter()
    failures = []
    strict = 0
    for seed in range(12):
        scene = generate(random_scene_spec(seed))
        r = evaluate_grids(scene.mask, scene.dsm, scene.mask, scene.dsm).report
        base_ok = (
            (r.iou_c, r.iou_z, r.iou_m) == (1.0, 1.0, 1.0)
            and r.rms_z is not None and abs(r.rms_z) <= 1e-9
            and (r.offset.dx_pixels, r.offset.dy_pixels, r.offset.dz_meters) == (0, 0, 0.0)
        )
        if r.rms_theta is not None:
            theta_ok = abs(r.rms_theta) <= 1e-9
            strict += int(base_ok and theta_ok)
        else:
            # every roof pixel was rejected by the gate; the slope RMS must then be absent
            theta_ok = r.counts.theta_unevaluable == r.counts.tp_c
        if not (base_ok and theta_ok):
            failures.append(seed)
    elapsed = time.perf_counter() - t0
    record(1, "identity suite", not failures and strict >= 10 and elapsed < 10.0,
           f"12 scenes, {strict} with rms_theta = 0, failures={failures}, {elapsed:.2f}s")


def perturbed_pair(seed):
    """A scene and a randomly degraded copy of it."""
    rng = np.random.default_rng(1000 + seed)
    scene = generate(small_scene(seed))
    pos = scene.mask.positive().copy()
    dsm = scene.dsm.values.copy()
    x, y = SMALL_GRID.center_mesh()
    dsm += rng.uniform(-0.15, 0.15) * (x - x.mean()) + rng.uniform(-0.15, 0.15) * (y - y.mean())
    dsm += rng.normal(0.0, rng.uniform(0.0, 0.5), dsm.shape)
    # erode or grow the footprint a little
    grow = rng.integers(-2, 3)
    if grow:
        pos = shift_array(pos.astype(float), int(grow), 0, 0.0).astype(bool) | (pos if grow > 0 else False)
    holes = rng.random(dsm.shape) < rng.uniform(0.0, 0.05)
    dsm[holes] = scene.dsm.nodata
    valid = rng.random(dsm.shape) > rng.uniform(0.0, 0.05)
    dx, dy = (int(v) for v in rng.integers(-3, 4, 2))
    test_mask = LabelMask(SMALL_GRID, shift_array(LabelMask.from_bool(SMALL_GRID, pos, valid).values, dx, dy, -9999.0))
    test_dsm = RasterGrid(SMALL_GRID, shift_array(dsm, dx, dy, -9999.0))
    return scene, test_mask, test_dsm


def test_criterion_2_cumulative_monotonicity():
    rng = np.random.default_rng(2)
    trials = violations = 0
    for seed in range(100):
        scene, tm, td = perturbed_pair(seed)
        res = evaluate_grids(scene.mask, scene.dsm, tm, td)
        for _ in range(10):
            cfg = EvalConfig(z_threshold=float(rng.uniform(0.05, 3.0)), angle_threshold=float(rng.uniform(0.5, 30.0)))
            emap = classify(res.test_mask, scene.mask, res.test_dsm, scene.dsm, res.ref_normals, res.test_normals, cfg)
            c, z, m = cumulative_iou(emap)
            trials += 1
            if not (m <= z <= c):
                violations += 1
    record(2, "cumulative monotonicity", trials >= 1000 and violations == 0,
           f"{trials} trials, {violations} violations")


def test_criterion_3_oracle_equivalence():
    mismatches = 0
    for trial in range(500):
        rng = np.random.default_rng(30_000 + trial)
        h, w = (int(v) for v in rng.integers(1, 33, 2))
        spec = GridSpec(w, h, 0.0, 0.5 * h, 0.5)

        def mask_values():
            v = (rng.random((h, w)) < rng.uniform(0.2, 0.8)).astype(float)
            v[rng.random((h, w)) < 0.1] = -9999.0
            return v

        ref_m, test_m = mask_values(), mask_values()
        ref_z = rng.uniform(0.0, 20.0, (h, w))
        test_z = ref_z + rng.normal(0.0, 1.0, (h, w))
        ref_z[rng.random((h, w)) < 0.05] = -9999.0
        test_z[rng.random((h, w)) < 0.05] = np.nan
        rn = rng.normal(size=(h, w, 3)) * [0.3, 0.3, 1.0]
        rn[..., 2] = np.abs(rn[..., 2]) + 0.1
        rn /= np.linalg.norm(rn, axis=-1, keepdims=True)
        tn = rn + rng.normal(0.0, 0.1, (h, w, 3))
        tn[..., 2] = np.abs(tn[..., 2])
        tn /= np.linalg.norm(tn, axis=-1, keepdims=True)
        rv = rng.random((h, w)) < 0.8
        tv = rng.random((h, w)) < 0.9
        z_thr, a_thr = float(rng.uniform(0.1, 2.0)), float(rng.uniform(1.0, 15.0))

        emap = classify(
            LabelMask(spec, test_m), LabelMask(spec, ref_m), RasterGrid(spec, test_z), RasterGrid(spec, ref_z),
            NormalField(spec, rn, None, rv), NormalField(spec, tn, None, tv),
            EvalConfig(z_threshold=z_thr, angle_threshold=a_thr),
        )
        _, counts = iou_c(LabelMask(spec, test_m), LabelMask(spec, ref_m))
        cls, zp, tp, zu, tu = classify_pixelwise(test_m, ref_m, test_z, ref_z, (rn, rv), (tn, tv), z_thr, a_thr)
        tp_mask = np.isin(cls, [PixelClass.TP_PASS, PixelClass.TP_FAIL_Z, PixelClass.TP_FAIL_SLOPE])
        got = emap.counts()
        want = (
            int(tp_mask.sum()), int((cls == PixelClass.FP).sum()), int((cls == PixelClass.FN).sum()),
            int((zp & tp_mask).sum()), int((tp & tp_mask).sum()), int(zu.sum()), int(tu.sum()),
            *(int((cls == k).sum()) for k in PixelClass),
        )
        have = (
            got.tp_c, got.fp_c, got.fn_c, got.tp_z_pass, got.tp_theta_pass, got.z_unevaluable,
            got.theta_unevaluable, *(emap.count(k) for k in PixelClass),
        )
        if have != want or (counts.tp_c, counts.fp_c, counts.fn_c) != want[:3] or not np.array_equal(emap.classes, cls):
            mismatches += 1
    record(3, "brute-force oracle equivalence", mismatches == 0, f"500 trials, {mismatches} mismatches")


def test_criterion_4_slope_recovery():
    t0 = time.perf_counter()
    worst = 0.0
    empty = []
    within = total = 0
    for k in range(1, 13):
        pitch = k / 12.0
        axis = "y" if k % 2 else "x"
        truth_deg = math.degrees(math.atan(pitch))
        clean = gable_scene(pitch, axis)
        est = planarity_gate(compute_normals(clean.dsm))
        sel = est.valid & clean.truth_normals.valid & clean.mask.positive()
        if not sel.any():
            empty.append(k)
            continue
        worst = max(worst, float(np.abs(est.slope_degrees()[sel] - truth_deg).max()))
        worst = max(worst, float(angles_deg(est.normals[sel], clean.truth_normals.normals[sel]).max()))

        noisy = gable_scene(pitch, axis, sigma=0.05, seed=400 + k)
        est = planarity_gate(compute_normals(noisy.dsm))
        sel = est.valid & noisy.truth_normals.valid & noisy.mask.positive()
        err = angles_deg(est.normals[sel], noisy.truth_normals.normals[sel])
        within += int((err < 3.0).sum())
        total += int(sel.sum())
    elapsed = time.perf_counter() - t0
    frac = within / total if total else 0.0
    ok = not empty and worst <= 0.01 and frac >= 0.9 and elapsed < 30.0
    record(4, "slope recovery", ok,
           f"max clean error {worst:.2e} deg, noisy within 3 deg {frac:.1%} of {total}, {elapsed:.2f}s")


def test_criterion_5_planarity_gate():
    exceptions = 0
    ridge_px = 0
    for k in range(4, 13):
        for axis in ("x", "y"):
            # even and odd pixel widths put the ridge on a pixel edge and on pixel centers
            for fp in ((6.0, 6.0, 30.0, 30.0), (6.0, 6.0, 30.5, 30.5)):
                scene = gable_scene(k / 12.0, axis, footprint=fp)
                gated = planarity_gate(compute_normals(scene.dsm))
                x, y = scene.spec.grid.center_mesh()
                mid = 0.5 * (fp[0] + fp[2]) if axis == "y" else 0.5 * (fp[1] + fp[3])
                coord = x if axis == "y" else y
                ridge = scene.mask.positive() & (np.abs(coord - mid) <= 0.5 * scene.spec.grid.cell_size)
                ridge_px += int(ridge.sum())
                exceptions += int((gated.valid & ridge).sum())
    flat_px = 0
    for seed in range(5):
        spec = random_scene_spec(seed, roofs=("flat",))
        scene = generate(spec)
        gated = planarity_gate(compute_normals(scene.dsm))
        interior = scene.mask.positive() & scene.truth_normals.valid
        flat_px += int(interior.sum())
        exceptions += int((~gated.valid & interior).sum())
    record(5, "planarity gate", exceptions == 0 and ridge_px > 0 and flat_px > 0,
           f"{ridge_px} ridge pixels, {flat_px} flat interior pixels, {exceptions} exceptions")


def test_criterion_6_registration_recovery():
    rng = np.random.default_rng(6)
    successes = 0
    failures = []
    for trial in range(200):
        scene = generate(random_scene_spec(600 + trial))
        a, b = (int(v) for v in rng.integers(-8, 9, 2))
        bias = float(rng.uniform(-2.0, 2.0))
        nd = scene.dsm.nodata
        tm = LabelMask(scene.spec.grid, shift_array(scene.mask.values, a, b, nd))
        shifted = shift_array(scene.dsm.values, a, b, nd)
        td = RasterGrid(scene.spec.grid, np.where(shifted == nd, nd, shifted + bias))
        off = register(tm, td, scene.mask, scene.dsm, radius=10)
        if (off.dx_pixels, off.dy_pixels) == (-a, -b) and abs(off.dz_meters + bias) <= 1e-9:
            successes += 1
        else:
            failures.append((trial, a, b, off))
    rate = successes / 200
    record(6, "registration recovery", rate >= 0.99, f"{successes}/200 recovered, failures={failures[:3]}")


def test_criterion_7_threshold_semantics():
    spec = GridSpec(3, 1, 0.0, 1.0, 1.0)
    m = LabelMask(spec, [[1.0, 1.0, 1.0]])
    ref_z = RasterGrid(spec, [[10.0, 10.0, 10.0]])
    test_z = RasterGrid(spec, [[11.0, 10.0, 10.5]])  # |dz| = 1.0 exactly, 0, 0.5
    a = math.radians(5.0)
    up = [0.0, 0.0, 1.0]
    tilted = [math.sin(a), 0.0, math.cos(a)]
    ref_n = NormalField(spec, [[up, up, up]], None, [[True, True, True]])
    test_n = NormalField(spec, [[up, tilted, up]], None, [[True, True, True]])
    angle = float(angles_deg(np.array(up), np.array(tilted)))
    emap = classify(m, m, test_z, ref_z, ref_n, test_n, EvalConfig(z_threshold=1.0, angle_threshold=5.0))
    got = [PixelClass(v).name for v in emap.classes[0]]
    ok = angle == 5.0 and got == ["TP_FAIL_Z", "TP_FAIL_SLOPE", "TP_PASS"]
    record(7, "threshold semantics", ok, f"classes {got}, constructed angle {angle!r} deg")


def test_criterion_8_two_path_equivalence(tmp_path):
    identical = 0
    close = 0
    n = 5
    for seed in range(n):
        scene = generate(random_scene_spec(800 + seed))
        d = tmp_path / str(seed)
        d.mkdir()
        write_raster(scene.mask, d / "mask.cevg")
        write_raster(scene.dsm, d / "dsm.cevg")
        write_raster(rasterize_mesh(scene.mesh, scene.spec.grid), d / "mesh_dsm.cevg")
        write_obj(scene.mesh, d / "mesh.obj")
        base = dict(ref_mask=d / "mask.cevg", ref_dsm=d / "dsm.cevg", test_mask=d / "mask.cevg")
        via_mesh = evaluate(RunConfig(**base, test_mesh=d / "mesh.obj"))
        via_raster = evaluate(RunConfig(**base, test_dsm=d / "mesh_dsm.cevg"))
        via_analytic = evaluate(RunConfig(**base, test_dsm=d / "dsm.cevg"))
        for r in (via_mesh, via_raster, via_analytic):
            r.inputs.clear()
        if via_mesh == via_raster:
            identical += 1
        if (
            via_mesh.counts == via_analytic.counts
            and (via_mesh.iou_c, via_mesh.iou_z, via_mesh.iou_m) == (via_analytic.iou_c, via_analytic.iou_z, via_analytic.iou_m)
            and abs(via_mesh.rms_z - via_analytic.rms_z) <= 1e-9
            and abs(via_mesh.rms_theta - via_analytic.rms_theta) <= 1e-9
        ):
            close += 1
    record(8, "mesh/raster two-path equivalence", identical == n and close == n,
           f"{identical}/{n} identical to precomputed DSM, {close}/{n} match analytic DSM")


def test_criterion_9_eigen_solver():
    rng = np.random.default_rng(9)
    mats = []
    for i in range(1000):
        kind = i % 4
        if kind == 0:
            a = rng.uniform(-10, 10, (3, 3))
            m = 0.5 * (a + a.T)
        elif kind == 1:  # covariance-like
            p = rng.normal(size=(20, 3)) * rng.uniform(0.01, 3.0, 3)
            m = np.cov(p.T, bias=True)
        elif kind == 2:  # clustered spectrum
            q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            lam = rng.uniform(-1, 1) + rng.choice([0.0, 1e-7], 3)
            m = q @ np.diag(lam) @ q.T
        else:  # wide dynamic range
            q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            m = q @ np.diag(rng.uniform(0, 1, 3) * [1e3, 1.0, 1e-6]) @ q.T
        mats.append(0.5 * (m + m.T))
    mats = np.array(mats)
    w, v = jacobi_eigh3(mats)
    recon_err = float(np.abs(v @ (w[:, :, None] * np.swapaxes(v, 1, 2)) - mats).max())
    oracle_err = max(
        float(np.abs(np.array(charpoly_eigenvalues(m)) - w[i]).max()) for i, m in enumerate(mats)
    )
    record(9, "eigen solver", recon_err <= 1e-9 and oracle_err <= 1e-8,
           f"1000 matrices, reconstruction {recon_err:.1e}, oracle {oracle_err:.1e}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
