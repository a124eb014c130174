"""Metrics and tasks: coefficient tables, coefficient error, one-step
prediction MSE, and missing-value interpolation."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .inference import ekf_forward, rts_backward
from .model import ModelParams
from .polybasis import PolyBasis, enumerate_basis, phi

__all__ = [
    "CoefficientTable",
    "discrete_to_continuous",
    "coefficient_error",
    "filtered_end_state",
    "one_step_predictions",
    "one_step_mse",
    "interpolate",
    "observed_coordinates_table",
    "shift_input_table",
    "rescale_table",
]


@dataclass(frozen=True)
class CoefficientTable:
    """Continuous-time polynomial field coefficients.

    ``values`` is (d, 1 + k + k_phi) over columns [constant | linear |
    monomials], monomials in the canonical library order for (k, degree).
    Units are per unit time.
    """

    values: np.ndarray
    k: int
    degree: int

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        k_phi = self._basis().k_phi
        if vals.ndim != 2 or vals.shape[1] != 1 + self.k + k_phi:
            raise ValueError(
                f"values must be (d, {1 + self.k + k_phi}) for k={self.k}, "
                f"degree={self.degree}; got {vals.shape}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def _basis(self) -> PolyBasis:
        if self.degree < 2:
            return PolyBasis.linear(self.k)
        return enumerate_basis(self.k, self.degree)

    @property
    def basis(self) -> PolyBasis:
        return self._basis()

    @property
    def constant(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def linear(self) -> np.ndarray:
        return self.values[:, 1:1 + self.k]

    @property
    def monomial(self) -> np.ndarray:
        return self.values[:, 1 + self.k:]

    def vector_field(self, x) -> np.ndarray:
        """Evaluate dx/dt at x from the table."""
        x = np.asarray(x, dtype=float)
        feats = np.concatenate([[1.0], x, phi(self.basis, x)])
        return self.values @ feats

    def pad_to_degree(self, degree: int) -> "CoefficientTable":
        """Zero-pad the monomial block to a higher degree.

        Valid because the canonical ordering is graded: the lower-degree
        library is a prefix of the higher-degree one.
        """
        if degree < self.degree:
            raise ValueError("can only pad to a higher degree")
        if degree == self.degree:
            return self
        target = enumerate_basis(self.k, degree)
        out = np.zeros((self.values.shape[0], 1 + self.k + target.k_phi))
        out[:, :self.values.shape[1]] = self.values
        return CoefficientTable(out, self.k, degree)


def discrete_to_continuous(theta: ModelParams, dt: float) -> CoefficientTable:
    """Read the learned discrete map as an Euler step of a continuous field.

    Constant column b/dt, linear block (A - I)/dt, monomial block F/dt.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    k = theta.k
    vals = np.hstack([
        (theta.b / dt)[:, None],
        (theta.A - np.eye(k)) / dt,
        theta.F / dt,
    ])
    return CoefficientTable(vals, k, theta.basis.d_phi)


def coefficient_error(truth: CoefficientTable, learned: CoefficientTable) -> float:
    """|| truth - learned ||_F / || truth ||_F after padding to a common degree."""
    if truth.k != learned.k:
        raise ValueError("coefficient tables have different variable counts")
    degree = max(truth.degree, learned.degree)
    if degree >= 2:
        t = truth.pad_to_degree(degree) if truth.degree >= 2 else _lift_linear(truth, degree)
        l = learned.pad_to_degree(degree) if learned.degree >= 2 else _lift_linear(learned, degree)
    else:
        t, l = truth, learned
    denom = float(np.linalg.norm(t.values))
    if denom == 0.0:
        raise ValueError("truth table has zero norm")
    return float(np.linalg.norm(t.values - l.values)) / denom


def _lift_linear(table: CoefficientTable, degree: int) -> CoefficientTable:
    target = enumerate_basis(table.k, degree)
    out = np.zeros((table.values.shape[0], 1 + table.k + target.k_phi))
    out[:, :table.values.shape[1]] = table.values
    return CoefficientTable(out, table.k, degree)


def filtered_end_state(theta: ModelParams, X, mask=None,
                       prior_mean=None, prior_cov=None):
    """Filtered mean/covariance after the last training observation."""
    fwd = ekf_forward(theta, X, mask, prior_mean, prior_cov)
    return fwd.end_state


def one_step_predictions(theta: ModelParams, init_mean, init_cov, X_test, mask=None):
    """Prior-predictive observations over the test segment.

    The filter starts from the supplied training-end state; each prediction is
    C mu_hat(t) + u, formed before the measurement update at t.
    """
    fwd = ekf_forward(theta, X_test, mask, prior_mean=init_mean, prior_cov=init_cov)
    return fwd.pred_mean @ theta.C.T + theta.u


def one_step_mse(theta: ModelParams, init_mean, init_cov, X_test, mask=None) -> float:
    """Mean squared one-step-ahead prediction error over observed test cells."""
    X_test = np.asarray(X_test, dtype=float)
    preds = one_step_predictions(theta, init_mean, init_cov, X_test, mask)
    err2 = (X_test - preds) ** 2
    if mask is not None:
        keep = ~np.asarray(mask, dtype=bool)
        return float(err2[keep].mean())
    return float(err2.mean())


def interpolate(theta: ModelParams, X, mask, prior_mean=None, prior_cov=None) -> np.ndarray:
    """Reconstruct masked cells from the smoothed states.

    Observed cells pass through unchanged; masked cells become C shat(t) + u.
    """
    X = np.asarray(X, dtype=float)
    miss = np.asarray(mask, dtype=bool)
    fwd = ekf_forward(theta, X, miss, prior_mean, prior_cov)
    smoothed = rts_backward(theta, fwd)
    recon = smoothed.mean @ theta.C.T + theta.u
    return np.where(miss, recon, X)


def shift_input_table(table: CoefficientTable, shift) -> CoefficientTable:
    """Re-express the field under the input shift y = s + shift.

    Returns the table of g(y) = f(y - shift), expanding each monomial by the
    binomial theorem; exact at any degree. Use when the observation map is a
    pure offset (C = I), so latent and observed coordinates differ by a shift.
    """
    shift = np.asarray(shift, dtype=float)
    k = table.k
    if shift.shape != (k,):
        raise ValueError("shift must have one entry per variable")
    if not shift.any():
        return table
    basis = table.basis
    d_rows = table.values.shape[0]
    out = np.zeros_like(np.asarray(table.values))
    col_exponents = [(0,) * k] + [
        tuple(int(i == j) for i in range(k)) for j in range(k)
    ] + [m.exponents for m in basis.monomials]
    col_index = {e: i for i, e in enumerate(col_exponents)}

    def expand(expo):
        """(sub-exponent, weight) terms of prod_j (y_j - shift_j)^{e_j}."""
        terms = [((), 1.0)]
        for j, e in enumerate(expo):
            new = []
            for sub, w in terms:
                for m in range(e + 1):
                    new.append((sub + (m,), w * comb(e, m) * (-shift[j]) ** (e - m)))
            terms = new
        return terms

    for ci, expo in enumerate(col_exponents):
        coef = table.values[:, ci]
        if not coef.any():
            continue
        for sub, w in expand(expo):
            if w == 0.0:
                continue
            out[:, col_index[sub]] += w * coef
    return CoefficientTable(out, k, table.degree)


def rescale_table(table: CoefficientTable, scales) -> CoefficientTable:
    """Map a table fitted on column-scaled data y = x / scales back to raw x.

    Diagonal rescaling keeps monomials monomial, so this is exact at any
    degree: the coefficient of monomial e in row i picks up a factor
    scales[i] / prod_j scales[j]^{e_j}.
    """
    scales = np.asarray(scales, dtype=float)
    if scales.shape != (table.k,):
        raise ValueError("scales must have one entry per variable")
    if (scales <= 0).any():
        raise ValueError("scales must be positive")
    basis = table.basis
    factors = np.concatenate([
        [1.0],
        1.0 / scales,
        [1.0 / np.prod(scales ** np.array(m.exponents)) for m in basis.monomials],
    ])
    vals = table.values * factors[None, :] * scales[:, None]
    return CoefficientTable(vals, table.k, table.degree)


def observed_coordinates_table(table: CoefficientTable, C, u) -> CoefficientTable:
    """Re-express a latent-coordinate field in observed coordinates y = C s + u.

    Implemented for degree <= 2 (linear and quadratic blocks); higher degrees
    require fitting with C frozen instead. Requires square invertible C.
    """
    C = np.asarray(C, dtype=float)
    u = np.asarray(u, dtype=float)
    k = table.k
    if C.shape != (k, k):
        raise ValueError("observed-coordinate transform requires square C (k = d)")
    if table.degree > 2:
        raise NotImplementedError(
            "coordinate transform implemented for degree <= 2 only; "
            "fit with freeze_C for higher degrees"
        )
    M = np.linalg.inv(C)
    out_degree = max(table.degree, 2) if table.monomial.size else table.degree
    if out_degree >= 2:
        out_basis = enumerate_basis(k, 2)
        quad_index = {m.exponents: j for j, m in enumerate(out_basis.monomials)}
        n_quad = out_basis.k_phi
    else:
        n_quad = 0
    const = np.zeros(k)
    lin = np.zeros((k, k))
    quad = np.zeros((k, n_quad))

    # y' = C f(M (y - u)); accumulate block by block
    const += C @ table.constant
    L = C @ table.linear @ M
    lin += L
    const -= L @ u

    if table.monomial.size:
        Q = C @ table.monomial          # (k, k_phi) coefficients in front of each monomial
        for j, mono in enumerate(table.basis.monomials):
            idx = [i for i, e in enumerate(mono.exponents) for _ in range(e)]
            a, b_ = idx
            va, vb = M[a], M[b_]
            coeff = Q[:, j]
            # (va . (y-u)) (vb . (y-u)) expanded over y
            for p in range(k):
                for q in range(k):
                    w = va[p] * vb[q]
                    if w == 0.0:
                        continue
                    key = tuple(int(p == i) + int(q == i) for i in range(k))
                    quad[:, quad_index[key]] += w * coeff
                    lin[:, p] -= w * u[q] * coeff
                    lin[:, q] -= w * u[p] * coeff
                    const += w * u[p] * u[q] * coeff

    vals = np.hstack([const[:, None], lin, quad])
    return CoefficientTable(vals, k, 2 if n_quad else 1)
