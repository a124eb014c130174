"""Minimum-description-length cost and grid model selection.

Total cost in bits = data encoding cost (Gaussian negative log-likelihood of
the reconstruction residuals, base-2) + model description cost (per-block
support counts times index-plus-float bits, float cost 32).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import em
from .linalg import NumericalError
from .model import Hyperparams, ModelParams

log = logging.getLogger(__name__)

__all__ = [
    "MdlBreakdown",
    "CellResult",
    "SelectionResult",
    "data_cost",
    "model_cost",
    "mdl_breakdown",
    "model_select",
    "DEFAULT_D_PHI_GRID",
    "DEFAULT_LAMBDA_GRID",
]

FLOAT_COST_BITS = 32.0
SIGMA_FLOOR = 1e-12

DEFAULT_D_PHI_GRID = (2, 3, 4)
DEFAULT_LAMBDA_GRID = (0.0, 1.0, 10.0, 50.0, 100.0, 500.0)


@dataclass(frozen=True)
class MdlBreakdown:
    """Bit accounting for one fitted model."""

    data_bits: float
    bits_A: float
    bits_F: float
    bits_b: float
    bits_C: float
    bits_u: float

    @property
    def model_bits(self) -> float:
        return self.bits_A + self.bits_F + self.bits_b + self.bits_C + self.bits_u

    @property
    def total_bits(self) -> float:
        return self.data_bits + self.model_bits


def data_cost(X, Xhat, mask=None) -> float:
    """Bits to encode the residuals x - xhat under a pooled scalar Gaussian.

    The Gaussian's mean and variance are the maximum-likelihood fit to the
    pooled residuals; the variance is floored at 1e-12, so perfectly
    reconstructed data yields a finite (floor-determined) cost. Masked cells
    are excluded from the pool.
    """
    X = np.asarray(X, dtype=float)
    Xhat = np.asarray(Xhat, dtype=float)
    if X.shape != Xhat.shape:
        raise ValueError("X and Xhat must have the same shape")
    resid = (X - Xhat).ravel()
    if mask is not None:
        keep = ~np.asarray(mask, dtype=bool).ravel()
        resid = resid[keep]
    n = resid.size
    if n < 1:
        raise ValueError("need at least one residual")
    mu = resid.mean()
    var = max(float(np.mean((resid - mu) ** 2)), SIGMA_FLOOR)
    nll_nats = 0.5 * n * math.log(2 * math.pi * var) + float(np.sum((resid - mu) ** 2)) / (2 * var)
    return nll_nats / math.log(2)


def _support(M) -> int:
    return int(np.count_nonzero(np.asarray(M)))


def model_cost(theta: ModelParams, count_shifted_A: bool = False) -> MdlBreakdown:
    """Description bits per parameter block (data_bits left at zero).

    Supports are exact nonzero counts. ``count_shifted_A`` switches the A
    block to counting nonzeros of A - I (the induced sparsity pattern) instead
    of A itself; off by default, matching the printed scheme.
    """
    k = theta.k
    d = theta.d
    k_phi = theta.basis.k_phi
    log2 = math.log2
    lk = log2(k) if k > 1 else 0.0
    ld = log2(d) if d > 1 else 0.0
    lkp = log2(k_phi) if k_phi > 1 else 0.0

    a_support = _support(theta.A - np.eye(k)) if count_shifted_A else _support(theta.A)
    bits_a = a_support * (lk + lk + FLOAT_COST_BITS)
    bits_f = _support(theta.F) * (lk + lkp + FLOAT_COST_BITS)
    bits_b = _support(theta.b) * (lk + FLOAT_COST_BITS)
    bits_c = k * d * (lk + ld + FLOAT_COST_BITS)
    bits_u = d * (ld + FLOAT_COST_BITS)
    return MdlBreakdown(0.0, bits_a, bits_f, bits_b, bits_c, bits_u)


def mdl_breakdown(theta: ModelParams, X, Xhat, mask=None,
                  count_shifted_A: bool = False) -> MdlBreakdown:
    """Full breakdown: data bits plus the model blocks."""
    blocks = model_cost(theta, count_shifted_A=count_shifted_A)
    return MdlBreakdown(
        data_cost(X, Xhat, mask=mask),
        blocks.bits_A, blocks.bits_F, blocks.bits_b, blocks.bits_C, blocks.bits_u,
    )


@dataclass
class CellResult:
    """One grid cell's outcome; ``error`` is set when the fit failed."""

    d_phi: int
    lambda1: float
    lambda2: float
    breakdown: MdlBreakdown | None = None
    report: "em.FitReport | None" = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_row(self) -> dict:
        row = {
            "d_phi": self.d_phi,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "status": "ok" if self.ok else "failed",
            "converged": "" if self.report is None else int(self.report.converged),
            "n_iters": "" if self.report is None else self.report.n_iters,
        }
        if self.breakdown is None:
            row.update({f: "" for f in ("data_bits", "bits_A", "bits_F", "bits_b",
                                        "bits_C", "bits_u", "model_bits", "total_bits")})
        else:
            bd = self.breakdown
            row.update({
                "data_bits": bd.data_bits, "bits_A": bd.bits_A, "bits_F": bd.bits_F,
                "bits_b": bd.bits_b, "bits_C": bd.bits_C, "bits_u": bd.bits_u,
                "model_bits": bd.model_bits, "total_bits": bd.total_bits,
            })
        return row


@dataclass
class SelectionResult:
    best: CellResult
    table: list

    @property
    def theta(self) -> ModelParams:
        return self.best.report.theta


SELECTION_CSV_FIELDS = (
    "d_phi", "lambda1", "lambda2", "status", "converged", "n_iters",
    "data_bits", "bits_A", "bits_F", "bits_b", "bits_C", "bits_u",
    "model_bits", "total_bits",
)


def _run_cell(args) -> CellResult:
    X, mask, k, opts, d_phi, lam1, lam2, count_shifted_A = args
    cell = CellResult(d_phi, lam1, lam2)
    try:
        hyper = Hyperparams(k=k, d_phi=d_phi, lambda1=lam1, lambda2=lam2)
        report = em.fit(X, mask, hyper, opts)
        recon = report.smoothed.mean @ report.theta.C.T + report.theta.u
        cell.breakdown = mdl_breakdown(report.theta, X, recon, mask=mask,
                                       count_shifted_A=count_shifted_A)
        cell.report = report
    except (NumericalError, np.linalg.LinAlgError, ValueError) as exc:
        cell.error = str(exc)
    return cell


def model_select(X, mask, k: int, opts: em.FitOptions = em.FitOptions(),
                 d_phi_grid=DEFAULT_D_PHI_GRID,
                 lambda1_grid=DEFAULT_LAMBDA_GRID,
                 lambda2_grid=DEFAULT_LAMBDA_GRID,
                 jobs: int = 1,
                 count_shifted_A: bool = False) -> SelectionResult:
    """Fit every (d_phi, lambda1, lambda2) cell and keep the fewest total bits.

    Cells run independently (a process pool when jobs > 1; results are merged
    by cell key, so execution order never changes the outcome). Failing cells
    are recorded and excluded; if every cell fails the selection fails. Ties
    break toward the simplest model: smaller d_phi, then larger lambda1, then
    larger lambda2.
    """
    d_phi_grid = tuple(d_phi_grid)
    lambda1_grid = tuple(lambda1_grid)
    lambda2_grid = tuple(lambda2_grid)
    if not d_phi_grid or not lambda1_grid or not lambda2_grid:
        raise ValueError("grids must be non-empty")
    X = np.asarray(X, dtype=float)
    cells = [(X, mask, k, opts, d_phi, lam1, lam2, count_shifted_A)
             for d_phi in d_phi_grid
             for lam1 in lambda1_grid
             for lam2 in lambda2_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            table = list(pool.map(_run_cell, cells))
    else:
        table = [_run_cell(c) for c in cells]

    ok = [c for c in table if c.ok]
    n_failed = len(table) - len(ok)
    if n_failed:
        log.warning("model_select: %d of %d cells failed", n_failed, len(table))
    if not ok:
        raise NumericalError("model selection failed: every grid cell failed")
    best = min(ok, key=lambda c: (c.breakdown.total_bits, c.d_phi, -c.lambda1, -c.lambda2))
    return SelectionResult(best=best, table=table)
