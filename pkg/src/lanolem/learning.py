"""Parameter updates: proximal-gradient fit of the sparse transition block
[A | F] and closed-form refreshes of the remaining parameters.

Conventions. The fit minimizes the expected complete-data negative
log-likelihood, so every quadratic (Mahalanobis) term carries the Gaussian 1/2
factor. Under that convention the printed gradient, the Lipschitz step bound,
and the penalized objective are mutually consistent: the fixed step
1 / (||Gamma^{-1}||_F ||S_pp||_F + lambda2) provably never increases the
penalized block objective.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .inference import MomentSet, SmoothedTrajectory
from .linalg import NumericalError, floor_spd, inv_psd, logdet_spd, solve_psd
from .model import ModelParams, shift_target
from .polybasis import phi_jacobian_batch

log = logging.getLogger(__name__)

__all__ = [
    "SparseFitConfig",
    "SummedMoments",
    "SparseFitResult",
    "soft_threshold",
    "step_size",
    "sparse_gradient",
    "sparse_objective",
    "fit_sparse",
    "fit_C",
    "fit_offsets",
    "fit_covariances",
    "penalized_objective",
]


@dataclass(frozen=True)
class SparseFitConfig:
    """Inner proximal-gradient loop settings."""

    lambda1: float = 0.0
    lambda2: float = 0.0
    max_inner_iters: int = 500
    inner_tol: float = 1e-8

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda weights must be non-negative")
        if self.inner_tol <= 0:
            raise ValueError("inner_tol must be positive")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be >= 1")


@dataclass(frozen=True)
class SummedMoments:
    """Sufficient statistics: the moment families summed over time.

    Transition-side sums run over t = 1..N-1, observation-side sums over
    t = 1..N. ``s_nn`` (the sum of E[s(t+1) s(t+1)^T]) is carried so the block
    objective can be evaluated up to its true constant.
    """

    s_pp: np.ndarray    # (k+kp, k+kp)  sum E[s_phi s_phi^T]
    s_np: np.ndarray    # (k, k+kp)     sum E[s(t+1) s_phi^T]
    s_p: np.ndarray     # (k+kp,)       sum E[s_phi]
    s_n: np.ndarray     # (k,)          sum E[s(t+1)]
    s_nn: np.ndarray    # (k, k)        sum E[s(t+1) s(t+1)^T]
    obs_xs: np.ndarray  # (d, k)        sum x E[s]^T
    obs_ss: np.ndarray  # (k, k)        sum E[s s^T]
    obs_x: np.ndarray   # (d,)          sum x
    obs_s: np.ndarray   # (k,)          sum E[s]
    n_steps: int

    @classmethod
    def from_moments(cls, moments: MomentSet, X) -> "SummedMoments":
        X = np.asarray(X, dtype=float)
        N = moments.n_steps
        if X.shape[0] != N:
            raise ValueError("X length must match the moment set")
        if N < 2:
            raise ValueError("need at least two time steps")
        return cls(
            s_pp=moments.aug_second[:-1].sum(axis=0),
            s_np=moments.aug_cross.sum(axis=0),
            s_p=moments.aug_mean[:-1].sum(axis=0),
            s_n=moments.mean[1:].sum(axis=0),
            s_nn=moments.second[1:].sum(axis=0),
            obs_xs=X.T @ moments.mean,
            obs_ss=moments.second.sum(axis=0),
            obs_x=X.sum(axis=0),
            obs_s=moments.mean.sum(axis=0),
            n_steps=N,
        )


def soft_threshold(beta, tau: float):
    """Shrink toward zero by tau; exactly zero inside [-tau, tau]."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    beta = np.asarray(beta, dtype=float)
    out = np.sign(beta) * np.maximum(np.abs(beta) - tau, 0.0)
    return float(out) if out.ndim == 0 else out


def step_size(Gamma: np.ndarray, s_pp: np.ndarray, lambda2: float) -> float:
    """Fixed step 1 / (||Gamma^{-1}||_F * ||S_pp||_F + lambda2).

    This inverts the Lipschitz bound of the smooth-part gradient, which is
    what guarantees per-iteration descent of the thresholded update.
    """
    gamma_inv = inv_psd(np.asarray(Gamma, dtype=float), what="Gamma")
    denom = float(np.linalg.norm(gamma_inv) * np.linalg.norm(s_pp) + lambda2)
    if denom == 0.0:
        # degenerate: the smooth part is constant, any step works
        return 1.0
    return 1.0 / denom


def _quad_residual(theta_s: np.ndarray, b: np.ndarray, sums: SummedMoments) -> np.ndarray:
    """sum_t E[(s(t+1) - Theta s_phi(t) - b)(...)^T] under the moment set."""
    n1 = sums.n_steps - 1
    tsp = theta_s @ sums.s_p
    quad = (
        sums.s_nn
        - sums.s_np @ theta_s.T
        - theta_s @ sums.s_np.T
        + theta_s @ sums.s_pp @ theta_s.T
        + np.outer(tsp, b)
        + np.outer(b, tsp)
        - np.outer(sums.s_n, b)
        - np.outer(b, sums.s_n)
        + n1 * np.outer(b, b)
    )
    return quad


def sparse_gradient(theta_s, b, Gamma, sums: SummedMoments, lambda2: float,
                    i_pad: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the smooth part of the block objective at Theta_s.

    Gamma^{-1} (Theta_s S_pp + b S_p^T - S_np) + lambda2 (Theta_s - [I|0]).
    """
    theta_s = np.asarray(theta_s, dtype=float)
    b = np.asarray(b, dtype=float)
    k = theta_s.shape[0]
    if i_pad is None:
        i_pad = shift_target(k, theta_s.shape[1] - k)
    gamma_inv = inv_psd(np.asarray(Gamma, dtype=float), what="Gamma")
    return gamma_inv @ (theta_s @ sums.s_pp + np.outer(b, sums.s_p) - sums.s_np) \
        + lambda2 * (theta_s - i_pad)


def sparse_objective(theta_s, b, Gamma, sums: SummedMoments,
                     lambda1: float, lambda2: float) -> float:
    """Penalized block objective f(Theta_s) evaluated under the moment set."""
    theta_s = np.asarray(theta_s, dtype=float)
    b = np.asarray(b, dtype=float)
    k = theta_s.shape[0]
    i_pad = shift_target(k, theta_s.shape[1] - k)
    gamma_inv = inv_psd(np.asarray(Gamma, dtype=float), what="Gamma")
    return _sparse_objective_fast(theta_s, b, gamma_inv, sums, lambda1, lambda2, i_pad)


def _sparse_objective_fast(theta_s, b, gamma_inv, sums, lambda1, lambda2, i_pad) -> float:
    quad = _quad_residual(theta_s, b, sums)
    shifted = theta_s - i_pad
    val = 0.5 * float(np.sum(gamma_inv * quad))
    val += 0.5 * lambda2 * float(np.sum(shifted * shifted))
    val += lambda1 * float(np.abs(shifted).sum())
    return val


@dataclass
class SparseFitResult:
    A: np.ndarray
    F: np.ndarray
    objective_trace: list
    n_iters: int
    converged: bool

    @property
    def theta_s(self) -> np.ndarray:
        return np.hstack([self.A, self.F])


def fit_sparse(sums: SummedMoments, theta: ModelParams, cfg: SparseFitConfig) -> SparseFitResult:
    """Minimize the penalized block objective over Theta_s = [A | F].

    Warm-starts from theta's current block, holds Gamma fixed, and iterates
    the shifted soft-threshold update
        Theta <- [I|0] + Th_{alpha lambda1}(Theta - alpha grad - [I|0])
    with the fixed step from ``step_size``. The objective is checked to be
    non-increasing at every iteration; hitting max_inner_iters returns the
    last (equal-best) iterate with converged=False and a warning.
    """
    k, k_phi = theta.k, theta.basis.k_phi
    i_pad = shift_target(k, k_phi)
    theta_s = theta.theta_s.copy()
    b = theta.b
    gamma_inv = inv_psd(theta.Gamma, what="Gamma")
    alpha = step_size(theta.Gamma, sums.s_pp, cfg.lambda2)
    tau = alpha * cfg.lambda1

    # f(Theta) = 0.5 tr(Ginv (Theta S_pp Theta^T - B Theta^T - Theta B^T)) + const
    #            + penalties, with B = S_np - b S_p^T
    B = sums.s_np - np.outer(b, sums.s_p)
    n1 = sums.n_steps - 1
    const = 0.5 * float(np.sum(gamma_inv * (
        sums.s_nn - np.outer(sums.s_n, b) - np.outer(b, sums.s_n)
        + n1 * np.outer(b, b))))

    def objective(th, th_spp):
        shifted = th - i_pad
        val = const + 0.5 * float(np.sum(gamma_inv * (th_spp @ th.T - B @ th.T - th @ B.T)))
        val += 0.5 * cfg.lambda2 * float(np.sum(shifted * shifted))
        val += cfg.lambda1 * float(np.abs(shifted).sum())
        return val

    th_spp = theta_s @ sums.s_pp
    f = objective(theta_s, th_spp)
    trace = [f]
    converged = False
    n_iters = 0
    for i in range(cfg.max_inner_iters):
        grad = gamma_inv @ (th_spp - B) + cfg.lambda2 * (theta_s - i_pad)
        theta_new = i_pad + soft_threshold(theta_s - alpha * grad - i_pad, tau)
        th_spp = theta_new @ sums.s_pp
        f_new = objective(theta_new, th_spp)
        if not np.isfinite(f_new):
            raise NumericalError("sparse block objective went non-finite", step=i)
        if f_new > f + 1e-9 * (1.0 + abs(f)):
            raise NumericalError(
                f"sparse block objective increased ({f:.6e} -> {f_new:.6e}) at inner iter {i}",
                step=i,
            )
        theta_s = theta_new
        trace.append(f_new)
        n_iters = i + 1
        if abs(f - f_new) <= cfg.inner_tol * max(1.0, abs(f)):
            converged = True
            f = f_new
            break
        f = f_new
    if not converged:
        log.debug("fit_sparse hit max_inner_iters=%d without meeting tol %g",
                  cfg.max_inner_iters, cfg.inner_tol)
    return SparseFitResult(theta_s[:, :k].copy(), theta_s[:, k:].copy(),
                           trace, n_iters, converged)


def fit_C(sums: SummedMoments, u=None) -> np.ndarray:
    """Closed-form observation matrix (sum x E[s]^T)(sum E[s s^T])^{-1}.

    As printed the regression has no intercept; pass ``u`` to subtract the
    current observation offset first (sensitivity option, off by default).
    """
    xs = sums.obs_xs
    if u is not None:
        xs = xs - np.outer(np.asarray(u, dtype=float), sums.obs_s)
    try:
        return np.linalg.solve(sums.obs_ss, xs.T).T
    except np.linalg.LinAlgError:
        log.warning("state Gram sum rank-deficient; applying 1e-10 ridge")
        ridge = 1e-10 * np.eye(sums.obs_ss.shape[0])
        return solve_psd(sums.obs_ss + ridge, xs.T, what="state Gram sum").T


def fit_offsets(sums: SummedMoments, theta_s_new: np.ndarray, C_new: np.ndarray):
    """Closed-form offsets given the freshly updated transition block and C."""
    n = sums.n_steps
    b_new = (sums.s_n - theta_s_new @ sums.s_p) / (n - 1)
    u_new = (sums.obs_x - C_new @ sums.obs_s) / n
    return b_new, u_new


def fit_covariances(smoothed: SmoothedTrajectory, moments: MomentSet, X,
                    theta_s_new: np.ndarray, b_new: np.ndarray,
                    C_new: np.ndarray, u_new: np.ndarray,
                    theta: ModelParams):
    """Closed-form state/observation noise covariances.

    The state residual is linearized around the smoothed mean with the new
    transition block: with r(t) the deterministic residual and J(t) the new
    Jacobian at the smoothed mean,
        Gamma = mean_t[ r r^T + W(t+1) + J W(t) J^T - M J^T - J M^T ],
    M = W(t+1) V(t)^T. Both outputs are symmetrized and eigenvalue-floored.
    X must already have missing cells imputed.
    """
    X = np.asarray(X, dtype=float)
    N, k = smoothed.mean.shape
    basis = theta.basis
    A_new = theta_s_new[:, :k]
    F_new = theta_s_new[:, k:]

    # J(t) = A + F dphi(shat(t)), batched over t = 1..N-1
    Jb = A_new[None] + np.einsum("ij,tjk->tik", F_new,
                                 phi_jacobian_batch(basis, smoothed.mean[:-1]))
    resid = smoothed.mean[1:] - moments.aug_mean[:-1] @ theta_s_new.T - b_new
    M = np.einsum("tij,tkj->tik", smoothed.cov[1:], smoothed.gain)
    MJ = np.einsum("tij,tkj->ik", M, Jb)
    G = resid.T @ resid
    G += smoothed.cov[1:].sum(axis=0)
    G += np.einsum("tij,tjk,tlk->il", Jb, smoothed.cov[:-1], Jb)
    G -= MJ + MJ.T
    gamma_new = floor_spd(G / (N - 1))

    E = X - smoothed.mean @ C_new.T - u_new
    Racc = E.T @ E
    Racc += np.einsum("ij,tjk,lk->il", C_new, smoothed.cov, C_new)
    r_new = floor_spd(Racc / N)
    return gamma_new, r_new


def penalized_objective(theta: ModelParams, lambda1: float, lambda2: float,
                        X, smoothed: SmoothedTrajectory, moments: MomentSet,
                        sums: SummedMoments | None = None) -> float:
    """Expected complete-data negative log-likelihood plus the elastic-net
    penalty on [A|F] about [I|0]; the outer-loop convergence monitor.

    The transition expectation uses the moment-set outer products; the
    observation expectation is exact in the smoothed posterior. X must already
    have missing cells imputed.
    """
    X = np.asarray(X, dtype=float)
    N, d = X.shape
    k = theta.k
    if sums is None:
        sums = SummedMoments.from_moments(moments, X)

    theta_s = theta.theta_s
    i_pad = shift_target(k, theta.basis.k_phi)
    gamma_inv = inv_psd(theta.Gamma, what="Gamma")
    quad = _quad_residual(theta_s, theta.b, sums)
    trans = 0.5 * float(np.sum(gamma_inv * quad))
    trans += 0.5 * (N - 1) * logdet_spd(theta.Gamma, what="Gamma")
    trans += 0.5 * (N - 1) * k * math.log(2 * math.pi)

    r_inv = inv_psd(theta.R, what="R")
    E = X - smoothed.mean @ theta.C.T - theta.u
    obs = 0.5 * float(np.sum((E @ r_inv) * E))
    CWC = np.einsum("ij,tjk,lk->il", theta.C, smoothed.cov, theta.C)
    obs += 0.5 * float(np.sum(r_inv * CWC))
    obs += 0.5 * N * logdet_spd(theta.R, what="R")
    obs += 0.5 * N * d * math.log(2 * math.pi)

    shifted = theta_s - i_pad
    penalty = 0.5 * lambda2 * float(np.sum(shifted * shifted))
    penalty += lambda1 * float(np.abs(shifted).sum())
    return trans + obs + penalty
