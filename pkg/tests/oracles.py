"""Independent reference implementations used as test oracles."""

import math

import mpmath
import numpy as np

from cumeval.metrics import PixelClass


def charpoly_eigenvalues(m, dps=50):
    """Eigenvalues of a symmetric 3x3 matrix as roots of det(t I - m), descending.

    Computed in mpmath at ``dps`` digits, so independent of any float64
    eigensolver.
    """
    with mpmath.workdps(dps):
        a = [[mpmath.mpf(float(m[i][j])) for j in range(3)] for i in range(3)]
        tr = a[0][0] + a[1][1] + a[2][2]
        minors = (a[0][0] * a[1][1] - a[0][1] * a[1][0]
                  + a[0][0] * a[2][2] - a[0][2] * a[2][0]
                  + a[1][1] * a[2][2] - a[1][2] * a[2][1])
        det = mpmath.det(mpmath.matrix(a))
        roots = mpmath.polyroots([1, -tr, minors, -det], maxsteps=200, extraprec=200)
        return sorted((float(mpmath.re(r)) for r in roots), reverse=True)


def _valid(v, nodata):
    return math.isfinite(v) and v != nodata


def classify_pixelwise(test_mask, ref_mask, test_dsm, ref_dsm, ref_n, test_n, z_thr, ang_thr):
    """Straight-line per-pixel classification, one pixel at a time.

    Arguments are plain arrays: masks/DSMs as 2D floats with a -9999 sentinel,
    normals as (h, w, 3) arrays plus (h, w) validity arrays in tuples
    ``(normals, valid)``.
    """
    h, w = ref_mask.shape
    out = np.zeros((h, w), dtype=np.uint8)
    z_uneval = np.zeros((h, w), dtype=bool)
    t_uneval = np.zeros((h, w), dtype=bool)
    t_pass_arr = np.zeros((h, w), dtype=bool)
    z_pass_arr = np.zeros((h, w), dtype=bool)
    nd = -9999.0
    for r in range(h):
        for c in range(w):
            rv = ref_mask[r, c]
            tv = test_mask[r, c]
            if not _valid(rv, nd):
                out[r, c] = PixelClass.EXCLUDED
                continue
            ref_pos = rv == 1.0
            test_pos = _valid(tv, nd) and tv == 1.0
            if test_pos and not ref_pos:
                out[r, c] = PixelClass.FP
                continue
            if ref_pos and not test_pos:
                out[r, c] = PixelClass.FN
                continue
            if not ref_pos:
                out[r, c] = PixelClass.TN
                continue
            zr, zt = ref_dsm[r, c], test_dsm[r, c]
            if _valid(zr, nd) and _valid(zt, nd):
                z_ok = abs(zt - zr) < z_thr
            else:
                z_ok = True
                z_uneval[r, c] = True
            if not ref_n[1][r, c]:
                t_ok = True
                t_uneval[r, c] = True
            elif not test_n[1][r, c]:
                t_ok = False
            else:
                u = ref_n[0][r, c]
                v = test_n[0][r, c]
                dot = max(-1.0, min(1.0, float(u[0] * v[0] + u[1] * v[1] + u[2] * v[2])))
                t_ok = math.degrees(math.acos(dot)) < ang_thr
            z_pass_arr[r, c] = z_ok
            t_pass_arr[r, c] = t_ok
            if not z_ok:
                out[r, c] = PixelClass.TP_FAIL_Z
            elif not t_ok:
                out[r, c] = PixelClass.TP_FAIL_SLOPE
            else:
                out[r, c] = PixelClass.TP_PASS
    return out, z_pass_arr, t_pass_arr, z_uneval, t_uneval
