"""Sequentially thresholded least squares baseline (SINDy-style).

Fits finite-difference derivative estimates onto the [1 | x | monomials]
library with ridge regression, repeatedly zeroing coefficients below a cutoff
and refitting on the surviving support.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .evaluate import CoefficientTable
from .polybasis import enumerate_basis, phi

log = logging.getLogger(__name__)

__all__ = [
    "StlsqConfig",
    "finite_diff_derivatives",
    "design_matrix",
    "stlsq_fit",
    "stlsq_aic_fit",
    "euler_one_step_predictions",
    "DEFAULT_ALPHA_GRID",
    "DEFAULT_THRESHOLD_GRID",
]

DEFAULT_ALPHA_GRID = (0.0, 1e-5, 1e-3, 0.01, 0.05, 0.2)
DEFAULT_THRESHOLD_GRID = (0.01, 0.05, 0.1, 0.5)


@dataclass(frozen=True)
class StlsqConfig:
    threshold: float = 0.1
    alpha: float = 0.05
    max_sweeps: int = 20

    def __post_init__(self):
        if self.threshold < 0 or self.alpha < 0:
            raise ValueError("threshold and alpha must be non-negative")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


def finite_diff_derivatives(X, dt: float) -> np.ndarray:
    """Central differences in the interior, one-sided at the endpoints."""
    X = np.asarray(X, dtype=float)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    dX = np.empty_like(X)
    dX[1:-1] = (X[2:] - X[:-2]) / (2.0 * dt)
    dX[0] = (X[1] - X[0]) / dt
    dX[-1] = (X[-1] - X[-2]) / dt
    return dX


def design_matrix(X, degree: int) -> np.ndarray:
    """Feature library [1 | x | monomials of degree 2..degree] per sample."""
    X = np.asarray(X, dtype=float)
    N, d = X.shape
    basis = enumerate_basis(d, degree)
    cols = [np.ones((N, 1)), X]
    if basis.k_phi:
        feats = np.empty((N, basis.k_phi))
        for t in range(N):
            feats[t] = phi(basis, X[t])
        cols.append(feats)
    return np.hstack(cols)


def _ridge_solve(theta: np.ndarray, y: np.ndarray, alpha: float) -> np.ndarray:
    gram = theta.T @ theta + alpha * np.eye(theta.shape[1])
    try:
        return np.linalg.solve(gram, theta.T @ y)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(theta, y, rcond=None)[0]


def stlsq_fit(X, dX, degree: int, cfg: StlsqConfig) -> CoefficientTable:
    """Sequentially thresholded ridge regression of dX onto the library.

    Coefficients with magnitude strictly below the threshold are zeroed and
    the remainder refit, until the support is stable or max_sweeps is hit.
    A dimension whose support empties is flagged and left as a zero row.
    """
    X = np.asarray(X, dtype=float)
    dX = np.asarray(dX, dtype=float)
    if X.shape != dX.shape:
        raise ValueError("X and dX must have the same shape")
    d = X.shape[1]
    lib = design_matrix(X, degree)
    n_feat = lib.shape[1]
    coefs = np.zeros((d, n_feat))
    for i in range(d):
        active = np.ones(n_feat, dtype=bool)
        w = _ridge_solve(lib, dX[:, i], cfg.alpha)
        for _ in range(cfg.max_sweeps):
            small = np.abs(w) < cfg.threshold
            keep = active & ~small
            if keep.sum() == 0:
                log.warning("stlsq: empty support for target dimension %d", i)
                w = np.zeros(n_feat)
                active = keep
                break
            if keep.sum() == active.sum():
                w[~active] = 0.0
                break
            active = keep
            w = np.zeros(n_feat)
            w[active] = _ridge_solve(lib[:, active], dX[:, i], cfg.alpha)
        w[~active] = 0.0
        coefs[i] = w
    return CoefficientTable(coefs, d, degree)


def _aic(lib: np.ndarray, dX: np.ndarray, table: CoefficientTable) -> float:
    """Gaussian AIC summed over target dimensions: n ln(RSS/n) + 2 |support|."""
    n = lib.shape[0]
    resid = dX - lib @ table.values.T
    total = 0.0
    for i in range(dX.shape[1]):
        rss = float(np.sum(resid[:, i] ** 2))
        rss = max(rss, 1e-300)
        total += n * math.log(rss / n) + 2.0 * int(np.count_nonzero(table.values[i]))
    return total


def stlsq_aic_fit(X, dX, degree: int,
                  alphas=DEFAULT_ALPHA_GRID,
                  thresholds=DEFAULT_THRESHOLD_GRID,
                  max_sweeps: int = 20):
    """Grid-tuned STLSQ: pick the (alpha, threshold) cell minimizing AIC.

    Returns (table, config, aic) of the winning cell.
    """
    X = np.asarray(X, dtype=float)
    dX = np.asarray(dX, dtype=float)
    lib = design_matrix(X, degree)
    best = None
    for alpha in alphas:
        for thr in thresholds:
            cfg = StlsqConfig(threshold=thr, alpha=alpha, max_sweeps=max_sweeps)
            table = stlsq_fit(X, dX, degree, cfg)
            score = _aic(lib, dX, table)
            if best is None or score < best[2]:
                best = (table, cfg, score)
    return best


def euler_one_step_predictions(table: CoefficientTable, last_train, X_test, dt: float) -> np.ndarray:
    """One-step predictions by an Euler step from the previous noisy observation."""
    X_test = np.asarray(X_test, dtype=float)
    prev = np.asarray(last_train, dtype=float)
    preds = np.empty_like(X_test)
    for t in range(X_test.shape[0]):
        preds[t] = prev + dt * table.vector_field(prev)
        prev = X_test[t]
    return preds
