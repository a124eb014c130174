"""Extended Kalman forward filter, RTS backward smoother, and moment assembly.

Missing data is handled per cell: a boolean mask with True marking missing
cells drops the corresponding observation rows from the update, and a fully
missing time step reduces to the pure prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import NumericalError, solve_psd, symmetrize
from .model import ModelParams
from .polybasis import PolyBasis, expected_phi_batch, phi_and_jacobian

__all__ = [
    "ForwardPass",
    "SmoothedTrajectory",
    "MomentSet",
    "ekf_forward",
    "rts_backward",
    "compute_moments",
]


@dataclass
class ForwardPass:
    """Per-step filter quantities, t = 1..N (index 0..N-1).

    ``innov_cov`` always stores the full-observation C P_hat C^T + R; with
    masked cells the update itself uses the observed sub-blocks. ``gain`` has
    zero columns at missing dimensions. ``nll`` is the Gaussian innovations
    negative log-likelihood of the observed cells.
    """

    pred_mean: np.ndarray   # (N, k)
    pred_cov: np.ndarray    # (N, k, k)
    filt_mean: np.ndarray   # (N, k)
    filt_cov: np.ndarray    # (N, k, k)
    innov_cov: np.ndarray   # (N, d, d)
    gain: np.ndarray        # (N, k, d)
    nll: float

    def __len__(self):
        return self.filt_mean.shape[0]

    @property
    def end_state(self) -> tuple[np.ndarray, np.ndarray]:
        """Filtered mean/covariance at the final step; seeds forecasting."""
        return self.filt_mean[-1], self.filt_cov[-1]


@dataclass
class SmoothedTrajectory:
    """Smoothed means/covariances plus the backward gains V(t) for t < N."""

    mean: np.ndarray   # (N, k)
    cov: np.ndarray    # (N, k, k)
    gain: np.ndarray   # (N-1, k, k)

    def __len__(self):
        return self.mean.shape[0]


@dataclass
class MomentSet:
    """Expectation families consumed by the learning step.

    ``aug_*`` refer to the concatenated vector [s; phi(s)]. The linear
    sub-blocks of the augmented outer products are either the exact smoothed
    moments (default) or the same rank-one approximation used for the phi
    blocks, depending on how the set was computed.
    """

    mean: np.ndarray        # (N, k)          E[s(t)]
    second: np.ndarray      # (N, k, k)       E[s(t) s(t)^T]
    cross: np.ndarray       # (N-1, k, k)     E[s(t+1) s(t)^T]
    aug_mean: np.ndarray    # (N, k+k_phi)    E[s_phi(t)]
    aug_second: np.ndarray  # (N, k+kp, k+kp) E[s_phi(t) s_phi(t)^T]
    aug_cross: np.ndarray   # (N-1, k, k+kp)  E[s(t+1) s_phi(t)^T]
    exact_linear_blocks: bool

    @property
    def n_steps(self) -> int:
        return self.mean.shape[0]


def _check_data(theta: ModelParams, X, mask):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != theta.d:
        raise ValueError(f"X must be (N, {theta.d}), got {X.shape}")
    N = X.shape[0]
    if N < 1:
        raise ValueError("need at least one observation")
    if mask is None:
        miss = np.zeros_like(X, dtype=bool)
    else:
        miss = np.asarray(mask, dtype=bool)
        if miss.shape != X.shape:
            raise ValueError("mask shape must match X")
    if not np.isfinite(X[~miss]).all():
        bad = np.argwhere(~np.isfinite(X) & ~miss)[0]
        raise ValueError(
            f"X contains a non-finite value at unmasked cell (row {bad[0]}, col {bad[1]})"
        )
    return X, miss, N


def ekf_forward(theta: ModelParams, X, mask=None, prior_mean=None, prior_cov=None) -> ForwardPass:
    """Run the extended Kalman forward pass over X.

    The recursion starts from a Gaussian prior on s(0): the first predicted
    state is one transition ahead of prior_mean (defaults: zero mean, identity
    covariance). The linearization point for each predicted covariance is the
    previous filtered mean.

    Raises NumericalError (with the step index) if an innovation covariance is
    singular beyond ridge rescue or any quantity goes non-finite.
    """
    X, miss, N = _check_data(theta, X, mask)
    k, d = theta.k, theta.d
    mu = np.zeros(k) if prior_mean is None else np.asarray(prior_mean, dtype=float)
    P = np.eye(k) if prior_cov is None else np.asarray(prior_cov, dtype=float)
    if mu.shape != (k,) or P.shape != (k, k):
        raise ValueError("prior_mean/prior_cov have wrong shape")

    C, u, R, Gamma = theta.C, theta.u, theta.R, theta.Gamma
    pred_mean = np.empty((N, k))
    pred_cov = np.empty((N, k, k))
    filt_mean = np.empty((N, k))
    filt_cov = np.empty((N, k, k))
    innov_cov = np.empty((N, d, d))
    gain = np.zeros((N, k, d))
    nll = 0.0

    A, F, b = theta.A, theta.F, theta.b
    basis = theta.basis
    for t in range(N):
        phi_v, phi_J = phi_and_jacobian(basis, mu)
        mu_hat = A @ mu + F @ phi_v + b
        J = A + F @ phi_J
        P_hat = symmetrize(J @ P @ J.T + Gamma, what="predicted covariance", step=t)
        innov_cov[t] = C @ P_hat @ C.T + R

        obs = ~miss[t]
        if not obs.any():
            mu, P = mu_hat, P_hat
        else:
            Co = C[obs]
            uo = u[obs]
            Ro = R[np.ix_(obs, obs)]
            U = Co @ P_hat @ Co.T + Ro
            # K = P_hat Co^T U^{-1}; U symmetric so transpose the solve
            K = solve_psd(U, Co @ P_hat, step=t, what=f"innovation covariance (t={t})").T
            innov = X[t, obs] - (Co @ mu_hat + uo)
            mu = mu_hat + K @ innov
            P = symmetrize((np.eye(k) - K @ Co) @ P_hat, what="filtered covariance", step=t)
            gain[t][:, obs] = K
            m = int(obs.sum())
            sign, logdetU = np.linalg.slogdet(U)
            if sign <= 0:
                raise NumericalError("innovation covariance not PD", step=t)
            nll += 0.5 * (innov @ solve_psd(U, innov, step=t) + logdetU + m * math.log(2 * math.pi))

        if not (np.isfinite(mu).all() and np.isfinite(P).all()):
            raise NumericalError(f"forward pass went non-finite at step {t}", step=t)
        pred_mean[t], pred_cov[t] = mu_hat, P_hat
        filt_mean[t], filt_cov[t] = mu, P

    return ForwardPass(pred_mean, pred_cov, filt_mean, filt_cov, innov_cov, gain, float(nll))


def rts_backward(theta: ModelParams, fwd: ForwardPass) -> SmoothedTrajectory:
    """Rauch-Tung-Striebel style backward smoothing of a forward pass.

    Terminal condition: smoothed(N) = filtered(N). The backward gain uses the
    transition Jacobian at the filtered mean.
    """
    N = len(fwd)
    k = fwd.filt_mean.shape[1]
    mean = np.empty((N, k))
    cov = np.empty((N, k, k))
    gainV = np.empty((max(N - 1, 0), k, k))
    mean[-1] = fwd.filt_mean[-1]
    cov[-1] = fwd.filt_cov[-1]
    A, F = theta.A, theta.F
    basis = theta.basis
    for t in range(N - 2, -1, -1):
        J = A + F @ phi_and_jacobian(basis, fwd.filt_mean[t])[1]
        # V = P J^T Phat^{-1}; Phat symmetric so solve from the left
        V = solve_psd(
            fwd.pred_cov[t + 1], J @ fwd.filt_cov[t],
            step=t, what=f"predicted covariance (t={t + 1})",
        ).T
        mean[t] = fwd.filt_mean[t] + V @ (mean[t + 1] - fwd.pred_mean[t + 1])
        cov[t] = symmetrize(
            fwd.filt_cov[t] + V @ (cov[t + 1] - fwd.pred_cov[t + 1]) @ V.T,
            what="smoothed covariance", step=t,
        )
        gainV[t] = V
        if not (np.isfinite(mean[t]).all() and np.isfinite(cov[t]).all()):
            raise NumericalError(f"backward pass went non-finite at step {t}", step=t)
    return SmoothedTrajectory(mean, cov, gainV)


def compute_moments(smoothed: SmoothedTrajectory, basis: PolyBasis,
                    exact_linear_blocks: bool = True) -> MomentSet:
    """Assemble the moment families the learning step consumes.

    The plain state moments are the exact smoothed quantities. E[phi(s)] uses
    the exact Gaussian raw moments of N(smoothed mean, smoothed covariance) per
    monomial. The augmented outer products are the rank-one products of the
    augmented means; with exact_linear_blocks (default) their linear sub-blocks
    are overwritten with the exact state moments, which makes the linear
    special case of the fit coincide with plain LDS EM.
    """
    s = smoothed.mean
    W = smoothed.cov
    N, k = s.shape
    second = W + np.einsum("ti,tj->tij", s, s)
    if N >= 2:
        cross = np.einsum("tij,tkj->tik", W[1:], smoothed.gain) + np.einsum(
            "ti,tj->tij", s[1:], s[:-1]
        )
    else:
        cross = np.zeros((0, k, k))

    ephi = expected_phi_batch(basis, s, W)
    aug_mean = np.concatenate([s, ephi], axis=1)
    aug_second = np.einsum("ti,tj->tij", aug_mean, aug_mean)
    aug_cross = np.einsum("ti,tj->tij", s[1:], aug_mean[:-1])
    if exact_linear_blocks:
        aug_second[:, :k, :k] = second
        aug_cross[:, :, :k] = cross
    return MomentSet(s, second, cross, aug_mean, aug_second, aug_cross,
                     exact_linear_blocks=exact_linear_blocks)


def smoothed_nll(theta: ModelParams, X, mask=None, prior_mean=None, prior_cov=None) -> float:
    """Innovations-form negative log-likelihood of the observed cells."""
    return ekf_forward(theta, X, mask, prior_mean, prior_cov).nll
