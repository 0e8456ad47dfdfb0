"""Least-squares fits on a polynomial basis with fast leave-one-out errors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class InstabilityError(RuntimeError):
    """The design is (numerically) rank deficient; more samples are needed."""


class LeverageSaturationError(InstabilityError):
    pass


LEVERAGE_TOL = 1e-12


@dataclass
class LeastSquaresFit:
    """Solution of ``min ||Psi V^T - Y||`` with the factorization kept for LOO.

    ``coefficients`` has shape ``(n_outputs, n_basis)``.
    """

    coefficients: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    perm: np.ndarray

    @property
    def leverages(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.Q, self.Q)

    def trace_gram_inverse(self) -> float:
        """``tr((Psi^T Psi)^{-1})`` from the triangular factor."""
        Rinv = sla.solve_triangular(self.R, np.eye(self.R.shape[0]))
        return float(np.sum(Rinv ** 2))


def ls_fit(Psi, Y, rcond=None) -> LeastSquaresFit:
    """Least-squares coefficients through a column-pivoted QR factorization.

    Raises :class:`InstabilityError` when ``N < #A`` or the design matrix is
    numerically rank deficient.
    """
    Psi = np.asarray(Psi, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    N, p = Psi.shape
    if N < p:
        raise InstabilityError(f"{N} samples for {p} basis functions")
    Q, R, perm = sla.qr(Psi, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = (rcond if rcond is not None else max(N, p) * np.finfo(float).eps) * d[0]
    if d[-1] <= tol:
        raise InstabilityError("rank-deficient design matrix")
    C = sla.solve_triangular(R, Q.T @ Y)  # permuted coefficients, (p, n_out)
    V = np.empty((Y.shape[1], p))
    V[:, perm] = C.T
    return LeastSquaresFit(V, Q, R, perm)


def _relative_errors(E, m2, resid_zero):
    with np.errstate(divide="ignore", invalid="ignore"):
        e = E / m2
    degenerate = m2 == 0.0
    e[degenerate] = np.where(resid_zero[degenerate], 0.0, np.inf)
    return e


def correction_factor(n_basis: int, N: int, trace_inv_gram: float) -> float:
    """``(1 - #A/N)^{-1} (1 + tr(C^{-1}) / N)`` with ``C = Psi^T Psi / N``."""
    if N <= n_basis:
        return np.inf
    # tr(C^{-1}) / N == tr((Psi^T Psi)^{-1})
    return (1.0 + trace_inv_gram) / (1.0 - n_basis / N)


def loo_errors(V, Psi, Y, fit: LeastSquaresFit | None = None, corrected=True) -> np.ndarray:
    """Relative leave-one-out errors, one per output column of ``Y``.

    Predicted residuals come from the hat-matrix leverages; each squared
    residual mean is normalized by the empirical second moment of the
    output and, when ``corrected``, multiplied by the overfitting
    correction factor.
    """
    Psi = np.asarray(Psi, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    V = np.atleast_2d(np.asarray(V, dtype=float))
    N, p = Psi.shape
    if fit is None:
        fit = ls_fit(Psi, Y)
    h = fit.leverages
    if np.any(h >= 1.0 - LEVERAGE_TOL):
        raise LeverageSaturationError("leverage saturation")
    r = Psi @ V.T - Y
    delta = r / (1.0 - h)[:, None]
    E = np.mean(delta ** 2, axis=0)
    m2 = np.mean(Y ** 2, axis=0)
    e = _relative_errors(E, m2, np.all(r == 0.0, axis=0))
    if not corrected:
        return e
    T = correction_factor(p, N, fit.trace_gram_inverse())
    with np.errstate(invalid="ignore"):
        eps = e * T
    eps[e == 0.0] = 0.0
    return eps

