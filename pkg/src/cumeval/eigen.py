"""Cyclic Jacobi eigensolver for symmetric 3x3 matrices, vectorized over batches."""

from __future__ import annotations

import numpy as np

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 50
SYMMETRY_TOL = 1e-12

_PAIRS = ((0, 1), (0, 2), (1, 2))


def _off_norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(a[:, 0, 1] ** 2 + a[:, 0, 2] ** 2 + a[:, 1, 2] ** 2)


def jacobi_eigh3(
    mats: np.ndarray,
    tol: float = JACOBI_TOL,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose a batch of symmetric 3x3 matrices.

    Args:
        mats: Array of shape ``(n, 3, 3)``; only assumed symmetric.
        tol: A matrix is converged once the norm of its off-diagonal part is
            at most ``tol * max(|trace|, ||A||_F)``.
        max_sweeps: Upper bound on full (0,1), (0,2), (1,2) rotation sweeps.

    Returns:
        ``(eigenvalues, eigenvectors)`` with eigenvalues of shape ``(n, 3)``
        sorted descending and eigenvectors of shape ``(n, 3, 3)`` whose
        column ``i`` belongs to eigenvalue ``i``.
    """
    a = np.array(mats, dtype=np.float64, copy=True)
    if a.ndim != 3 or a.shape[1:] != (3, 3):
        raise ValueError(f"expected shape (n, 3, 3), got {a.shape}")
    n = a.shape[0]
    a = 0.5 * (a + np.swapaxes(a, 1, 2))
    v = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    scale = np.maximum(np.abs(np.trace(a, axis1=1, axis2=2)), np.sqrt(np.sum(a * a, axis=(1, 2))))
    threshold = tol * scale

    for _ in range(max_sweeps):
        active = _off_norm(a) > threshold
        if not active.any():
            break
        for p, q in _PAIRS:
            apq = a[:, p, q]
            idx = np.nonzero(active & (apq != 0.0))[0]
            if idx.size == 0:
                continue
            sub = a[idx]
            apq = sub[:, p, q]
            with np.errstate(over="ignore"):
                theta = (sub[:, q, q] - sub[:, p, p]) / (2.0 * apq)
                abs_theta = np.abs(theta)
                huge = abs_theta > 1e150
                t = np.where(
                    huge,
                    0.5 / np.where(huge, theta, 1.0),
                    np.sign(theta) / (abs_theta + np.sqrt(np.where(huge, 0.0, theta * theta) + 1.0)),
                )
            t = np.where(theta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.broadcast_to(np.eye(3), (idx.size, 3, 3)).copy()
            rot[:, p, p] = c
            rot[:, q, q] = c
            rot[:, p, q] = s
            rot[:, q, p] = -s
            sub = np.swapaxes(rot, 1, 2) @ sub @ rot
            sub[:, p, q] = 0.0
            sub[:, q, p] = 0.0
            a[idx] = sub
            v[idx] = v[idx] @ rot

    evals = np.diagonal(a, axis1=1, axis2=2).copy()
    order = np.argsort(-evals, axis=1, kind="stable")
    evals = np.take_along_axis(evals, order, axis=1)
    evecs = np.take_along_axis(v, order[:, None, :], axis=2)
    return evals, evecs


def eigen_sym3(m) -> tuple[float, float, float, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvectors of one symmetric 3x3 matrix.

    Returns:
        ``(l1, l2, l3, vecs)`` where ``vecs[:, i]`` is the eigenvector of the
        i-th eigenvalue, so ``m @ vecs == vecs @ diag(l1, l2, l3)``.

    Raises:
        ValueError: ``m`` is not 3x3 or not symmetric within 1e-12.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    if not np.all(np.abs(m - m.T) <= SYMMETRY_TOL * max(1.0, float(np.max(np.abs(m))))):
        raise ValueError("matrix is not symmetric within 1e-12")
    evals, evecs = jacobi_eigh3(m[None])
    l1, l2, l3 = (float(x) for x in evals[0])
    return l1, l2, l3, evecs[0]
