"""Shared numerical helpers: symmetry checks, SPD floors, guarded solves."""

from __future__ import annotations

import numpy as np

COV_FLOOR = 1e-10
RIDGE_RESCUE = 1e-12


class NumericalError(RuntimeError):
    """A linear-algebra step failed beyond ridge rescue, or values went non-finite.

    ``step`` is the time step / iteration index at the failure point when known;
    ``stage`` names the pipeline stage and is filled in by outer callers.
    """

    def __init__(self, message: str, step: int | None = None, stage: str | None = None):
        super().__init__(message)
        self.step = step
        self.stage = stage


def symmetrize(M: np.ndarray, rtol: float = 1e-9, what: str = "matrix",
               step: int | None = None) -> np.ndarray:
    """Return (M + M.T)/2 after checking the asymmetry is numerical noise.

    The check is scaled: ||M - M.T||_F <= rtol * max(1, ||M||_F). An absolute
    bound breaks down for legitimately huge covariances (e.g. process noise
    pushed to 1e6 in limit tests).
    """
    asym = np.linalg.norm(M - M.T)
    scale = max(1.0, float(np.linalg.norm(M)))
    if not asym <= rtol * scale:
        raise NumericalError(
            f"{what} lost symmetry (||M-M.T||={asym:.3e}, scale={scale:.3e})",
            step=step,
        )
    return 0.5 * (M + M.T)


def floor_spd(M: np.ndarray, floor: float = COV_FLOOR) -> np.ndarray:
    """Clamp the eigenvalues of a symmetric matrix at ``floor``.

    Keeps covariance updates strictly positive definite so downstream solves
    cannot blow up on near-deterministic data.
    """
    M = 0.5 * (M + np.asarray(M).T)
    w, V = np.linalg.eigh(M)
    if w[0] >= floor:
        return M
    w = np.maximum(w, floor)
    return (V * w) @ V.T


def solve_psd(M: np.ndarray, B: np.ndarray, ridge: float = RIDGE_RESCUE,
              step: int | None = None, what: str = "matrix") -> np.ndarray:
    """Solve M x = B for symmetric positive (semi)definite M with ridge rescue."""
    try:
        out = np.linalg.solve(M, B)
        if np.isfinite(out).all():
            return out
    except np.linalg.LinAlgError:
        pass
    try:
        out = np.linalg.solve(M + ridge * np.eye(M.shape[0]), B)
        if np.isfinite(out).all():
            return out
    except np.linalg.LinAlgError:
        pass
    raise NumericalError(f"{what} singular beyond {ridge:g} ridge rescue", step=step)


def inv_psd(M: np.ndarray, **kwargs) -> np.ndarray:
    return solve_psd(M, np.eye(M.shape[0]), **kwargs)


def logdet_spd(M: np.ndarray, step: int | None = None, what: str = "matrix") -> float:
    sign, val = np.linalg.slogdet(M)
    if sign <= 0 or not np.isfinite(val):
        raise NumericalError(f"{what} not positive definite in logdet", step=step)
    return float(val)
