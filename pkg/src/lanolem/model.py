"""Generative model: parameter set, transition/observation maps, simulation.

State equation   s(t+1) = A s(t) + F phi(s(t)) + b + state noise,  noise cov Gamma
Observation      x(t)   = C s(t) + u + observation noise,          noise cov R
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .linalg import COV_FLOOR, NumericalError, floor_spd
from .polybasis import PolyBasis, phi, phi_jacobian

__all__ = [
    "Hyperparams",
    "ModelParams",
    "shift_target",
    "step_mean",
    "observe",
    "transition_jacobian",
    "simulate",
]

MAX_DEGREE = 4  # hyperparameter-layer cap; the basis code itself is degree-generic


@dataclass(frozen=True)
class Hyperparams:
    """Model order and regularization weights for one fit."""

    k: int
    d_phi: int
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 2 <= self.d_phi <= MAX_DEGREE:
            raise ValueError(f"d_phi must be in [2, {MAX_DEGREE}], got {self.d_phi}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")


def shift_target(k: int, k_phi: int) -> np.ndarray:
    """The k x (k + k_phi) matrix [I | 0] the sparse block is shrunk toward.

    Encodes identity dynamics plus no non-linear terms, i.e. the prior that the
    discrete map is a small perturbation of s(t+1) = s(t).
    """
    out = np.zeros((k, k + k_phi))
    out[:, :k] = np.eye(k)
    return out


def _as_matrix(name, value, shape):
    arr = np.array(value, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Full parameter set plus the monomial library it acts on.

    Immutable once built; fitting produces new instances. Gamma and R are
    symmetrized and eigenvalue-floored at 1e-10 on construction.
    """

    A: np.ndarray
    F: np.ndarray
    b: np.ndarray
    C: np.ndarray
    u: np.ndarray
    Gamma: np.ndarray
    R: np.ndarray
    basis: PolyBasis

    def __post_init__(self):
        k = self.basis.k
        k_phi = self.basis.k_phi
        A = _as_matrix("A", self.A, (k, k))
        F = _as_matrix("F", self.F, (k, k_phi))
        b = _as_matrix("b", self.b, (k,))
        C = np.array(self.C, dtype=float)
        if C.ndim != 2 or C.shape[1] != k:
            raise ValueError(f"C must be (d, {k}), got {C.shape}")
        d = C.shape[0]
        u = _as_matrix("u", self.u, (d,))
        Gamma = floor_spd(_as_matrix("Gamma", self.Gamma, (k, k)))
        R = floor_spd(_as_matrix("R", self.R, (d, d)))
        for name, arr in (("A", A), ("F", F), ("b", b), ("C", C), ("u", u),
                          ("Gamma", Gamma), ("R", R)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def k(self) -> int:
        return self.basis.k

    @property
    def d(self) -> int:
        return self.C.shape[0]

    @property
    def theta_s(self) -> np.ndarray:
        """The concatenated sparse transition block [A | F]."""
        return np.hstack([self.A, self.F])

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    @classmethod
    def identity(cls, basis: PolyBasis, d: int | None = None,
                 gamma_scale: float = 1.0, r_scale: float = 1.0) -> "ModelParams":
        """Identity dynamics with zero offsets; convenient fitting/testing seed."""
        k = basis.k
        d = k if d is None else d
        return cls(
            A=np.eye(k),
            F=np.zeros((k, basis.k_phi)),
            b=np.zeros(k),
            C=np.eye(d, k),
            u=np.zeros(d),
            Gamma=gamma_scale * np.eye(k),
            R=r_scale * np.eye(d),
            basis=basis,
        )


def step_mean(theta: ModelParams, s) -> np.ndarray:
    """Noise-free one-step transition A s + F phi(s) + b."""
    s = np.asarray(s, dtype=float)
    return theta.A @ s + theta.F @ phi(theta.basis, s) + theta.b


def observe(theta: ModelParams, s) -> np.ndarray:
    """Noise-free observation C s + u."""
    return theta.C @ np.asarray(s, dtype=float) + theta.u


def transition_jacobian(theta: ModelParams, s) -> np.ndarray:
    """Jacobian of step_mean at s: A + F d(phi)/ds."""
    return theta.A + theta.F @ phi_jacobian(theta.basis, np.asarray(s, dtype=float))


def simulate(theta: ModelParams, s0, n: int, seed: int | None = None):
    """Roll the generative model forward for ``n`` steps.

    Returns (states, observations) of shapes (n, k) and (n, d), holding the
    states after steps 1..n (s0 itself is not a row). Without a seed the
    rollout is deterministic; with one, N(0, Gamma) noise is added to each
    state and N(0, R) to each observation, reproducibly.

    Raises NumericalError with the step index if the state goes non-finite.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    s = np.asarray(s0, dtype=float)
    if s.shape != (theta.k,):
        raise ValueError(f"s0 must have shape ({theta.k},)")
    rng = None
    if seed is not None:
        rng = np.random.default_rng(seed)
        Lg = np.linalg.cholesky(floor_spd(theta.Gamma, COV_FLOOR))
        Lr = np.linalg.cholesky(floor_spd(theta.R, COV_FLOOR))
    states = np.empty((n, theta.k))
    obs = np.empty((n, theta.d))
    for t in range(n):
        s = step_mean(theta, s)
        if rng is not None:
            s = s + Lg @ rng.standard_normal(theta.k)
        if not np.isfinite(s).all():
            raise NumericalError(f"simulation diverged at step {t + 1}", step=t + 1)
        y = observe(theta, s)
        if rng is not None:
            y = y + Lr @ rng.standard_normal(theta.d)
        states[t] = s
        obs[t] = y
    return states, obs
