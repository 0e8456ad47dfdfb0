"""Orthonormal shifted Legendre polynomials on (0, 1) and tensorized design matrices."""
from __future__ import annotations

import numpy as np


def legendre01(t, degree: int) -> np.ndarray:
    """Values ``psi_k(t)`` for ``k = 0..degree``, shape ``(len(t), degree + 1)``.

    ``psi_k = sqrt(2k + 1) P_k(2t - 1)`` is orthonormal for the uniform
    measure on (0, 1).
    """
    t = np.asarray(t, dtype=float).ravel()
    x = 2.0 * t - 1.0
    P = np.empty((t.size, degree + 1))
    P[:, 0] = 1.0
    if degree >= 1:
        P[:, 1] = x
    for n in range(1, degree):
        P[:, n + 1] = ((2 * n + 1) * x * P[:, n] - n * P[:, n - 1]) / (n + 1)
    return P * np.sqrt(2.0 * np.arange(degree + 1) + 1.0)


def design_matrix(indices, xi) -> np.ndarray:
    """``Psi[l, k] = psi_{alpha_k}(xi_l)`` for rows ``alpha_k`` of ``indices``."""
    a = np.asarray(getattr(indices, "array", indices), dtype=np.int64)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    N = xi.shape[0]
    Psi = np.ones((N, a.shape[0]))
    if a.size == 0:
        return Psi
    for i in np.flatnonzero(a.max(axis=0) > 0):
        tab = legendre01(xi[:, i], int(a[:, i].max()))
        Psi *= tab[:, a[:, i]]
    return Psi


def eval_basis(alpha, xi) -> float:
    """Single tensor basis function at a single point."""
    return float(design_matrix(np.asarray(alpha, dtype=np.int64)[None, :], np.asarray(xi)[None, :])[0, 0])
