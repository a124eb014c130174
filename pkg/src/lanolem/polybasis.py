"""Polynomial feature library over latent states.

The library holds every monomial of total degree 2 through ``d_phi`` in ``k``
variables, in a fixed graded order: the full degree-2 block first, then
degree 3, and so on; within one degree the ordering is the s1-major product
order (for k=2, degree 2: s1^2, s1*s2, s2^2). Degree-0 and degree-1 terms are
deliberately excluded: the model's offset and linear transition matrix carry
those.

Also provides exact raw moments of the monomials under a Gaussian, via the
recursive identity E[x_a * m] = mu_a E[m] + sum_b Sigma_ab E[d m / d x_b].
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MonomialExponent",
    "PolyBasis",
    "enumerate_basis",
    "phi",
    "phi_jacobian",
    "phi_and_jacobian",
    "phi_batch",
    "phi_jacobian_batch",
    "gaussian_moment",
    "expected_phi",
    "expected_phi_batch",
]


@dataclass(frozen=True)
class MonomialExponent:
    """One monomial, stored as its vector of non-negative exponents."""

    exponents: tuple[int, ...]
    degree: int = field(init=False)

    def __post_init__(self):
        exps = tuple(int(e) for e in self.exponents)
        if len(exps) == 0:
            raise ValueError("exponent vector must be non-empty")
        if any(e < 0 for e in exps):
            raise ValueError(f"exponents must be non-negative, got {exps}")
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "degree", sum(exps))


class PolyBasis:
    """Ordered, immutable monomial library for ``k`` variables.

    Attributes
    ----------
    k : int
        Number of variables (latent dimension).
    d_phi : int
        Maximum total degree in the library (1 for the degenerate empty
        library used by linear-only fits).
    monomials : tuple of MonomialExponent
    k_phi : int
        Number of monomials, C(k + d_phi, d_phi) - k - 1.
    """

    def __init__(self, k: int, d_phi: int, monomials):
        self.k = int(k)
        self.d_phi = int(d_phi)
        self.monomials = tuple(monomials)
        self.k_phi = len(self.monomials)
        expo = np.array(
            [m.exponents for m in self.monomials], dtype=np.int64
        ).reshape(self.k_phi, self.k)
        expo.setflags(write=False)
        self._expo = expo

    @property
    def exponent_matrix(self) -> np.ndarray:
        """(k_phi, k) integer matrix of exponents, one row per monomial."""
        return self._expo

    @property
    def max_exponent(self) -> int:
        return int(self._expo.max()) if self.k_phi else 0

    @classmethod
    def linear(cls, k: int) -> "PolyBasis":
        """Empty library (k_phi = 0) for fits with the non-linear block disabled."""
        if k < 1:
            raise ValueError("k must be >= 1")
        return cls(k, 1, ())

    def __eq__(self, other):
        return (
            isinstance(other, PolyBasis)
            and self.k == other.k
            and self.d_phi == other.d_phi
            and self.monomials == other.monomials
        )

    def __hash__(self):
        return hash((self.k, self.d_phi, self.monomials))

    def __repr__(self):
        return f"PolyBasis(k={self.k}, d_phi={self.d_phi}, k_phi={self.k_phi})"


def enumerate_basis(k: int, d_phi: int) -> PolyBasis:
    """Build the complete degree-2..d_phi monomial library over k variables.

    Deterministic: two calls with equal (k, d_phi) produce structurally
    identical bases. Rejects d_phi < 2 (a degree-1 library would duplicate the
    linear transition matrix) and k < 1.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    if int(d_phi) != d_phi or d_phi < 2:
        raise ValueError(f"d_phi must be an integer >= 2, got {d_phi}")
    k, d_phi = int(k), int(d_phi)
    monomials = []
    for deg in range(2, d_phi + 1):
        for combo in itertools.combinations_with_replacement(range(k), deg):
            exps = [0] * k
            for i in combo:
                exps[i] += 1
            monomials.append(MonomialExponent(tuple(exps)))
    basis = PolyBasis(k, d_phi, monomials)
    expected = math.comb(k + d_phi, d_phi) - k - 1
    assert basis.k_phi == expected, "monomial count disagrees with combinatorics"
    return basis


def _check_state(basis: PolyBasis, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (basis.k,):
        raise ValueError(f"state must have shape ({basis.k},), got {s.shape}")
    return s


def _factor_table(basis: PolyBasis, s: np.ndarray) -> np.ndarray:
    """(k_phi, k) table of s_i**e_ji via a small power lookup."""
    pw = s[:, None] ** np.arange(basis.max_exponent + 1)  # (k, maxp+1)
    return pw[np.arange(basis.k)[None, :], basis._expo]


def _exclusive_products(P: np.ndarray) -> np.ndarray:
    """excl[j, i] = prod over l != i of P[j, l], without divisions."""
    left = np.ones_like(P)
    left[:, 1:] = np.cumprod(P[:, :-1], axis=1)
    right = np.ones_like(P)
    right[:, :-1] = np.cumprod(P[:, :0:-1], axis=1)[:, ::-1]
    return left * right


def phi(basis: PolyBasis, s) -> np.ndarray:
    """Evaluate every library monomial at the state ``s``; returns a k_phi vector."""
    s = _check_state(basis, s)
    if basis.k_phi == 0:
        return np.zeros(0)
    return _factor_table(basis, s).prod(axis=1)


def phi_jacobian(basis: PolyBasis, s) -> np.ndarray:
    """(k_phi, k) matrix of partial derivatives of each monomial at ``s``."""
    s = _check_state(basis, s)
    if basis.k_phi == 0:
        return np.zeros((0, basis.k))
    return phi_and_jacobian(basis, s)[1]


def phi_and_jacobian(basis: PolyBasis, s) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate phi(s) and its Jacobian sharing one power table."""
    s = np.asarray(s, dtype=float)
    if basis.k_phi == 0:
        return np.zeros(0), np.zeros((0, basis.k))
    expo = basis._expo
    pw = s[:, None] ** np.arange(basis.max_exponent + 1)    # (k, maxp+1)
    P = pw[np.arange(basis.k)[None, :], expo]               # (k_phi, k)
    excl = _exclusive_products(P)
    # d/ds_i s_i^e = e * s_i^(e-1); rows with e = 0 are killed by the factor e
    dropped = pw[np.arange(basis.k)[None, :], np.maximum(expo - 1, 0)]
    J = expo * dropped * excl
    return P.prod(axis=1), J


def phi_batch(basis: PolyBasis, S: np.ndarray) -> np.ndarray:
    """phi evaluated row-wise over an (N, k) array; returns (N, k_phi)."""
    S = np.asarray(S, dtype=float)
    if basis.k_phi == 0:
        return np.zeros((S.shape[0], 0))
    pw = S[:, :, None] ** np.arange(basis.max_exponent + 1)    # (N, k, maxp+1)
    cols = np.arange(basis.k)[None, :]
    P = pw[:, cols, basis._expo]                               # (N, k_phi, k)
    return P.prod(axis=2)


def phi_jacobian_batch(basis: PolyBasis, S: np.ndarray) -> np.ndarray:
    """Jacobians for every row of an (N, k) array; returns (N, k_phi, k)."""
    S = np.asarray(S, dtype=float)
    N = S.shape[0]
    if basis.k_phi == 0:
        return np.zeros((N, 0, basis.k))
    expo = basis._expo
    pw = S[:, :, None] ** np.arange(basis.max_exponent + 1)
    cols = np.arange(basis.k)[None, :]
    P = pw[:, cols, expo]                                      # (N, k_phi, k)
    left = np.ones_like(P)
    left[:, :, 1:] = np.cumprod(P[:, :, :-1], axis=2)
    right = np.ones_like(P)
    right[:, :, :-1] = np.cumprod(P[:, :, :0:-1], axis=2)[:, :, ::-1]
    dropped = pw[:, cols, np.maximum(expo - 1, 0)]
    return expo[None] * dropped * left * right


def _check_gaussian(mu, Sigma, asym_tol: float = 1e-10):
    mu = np.asarray(mu, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    if mu.ndim != 1:
        raise ValueError("mu must be a vector")
    k = mu.shape[0]
    if Sigma.shape != (k, k):
        raise ValueError(f"Sigma must be square {k}x{k}, got {Sigma.shape}")
    if np.abs(Sigma - Sigma.T).max() > asym_tol:
        raise ValueError("Sigma must be symmetric (tolerance 1e-10)")
    return mu, Sigma


def _raw_moments(exponent_rows, mus: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """Exact Gaussian raw moments for a batch of Gaussians.

    Parameters
    ----------
    exponent_rows : iterable of exponent tuples
    mus : (N, k) means
    sigmas : (N, k, k) covariances

    Returns
    -------
    (n_rows, N) array of E[prod_i x_i^{e_i}] per row per Gaussian.
    """
    N, k = mus.shape
    cache: dict[tuple, np.ndarray] = {(0,) * k: np.ones(N)}

    def rec(e: tuple) -> np.ndarray:
        val = cache.get(e)
        if val is not None:
            return val
        a = next(i for i, ei in enumerate(e) if ei > 0)
        e1 = list(e)
        e1[a] -= 1
        e1t = tuple(e1)
        out = mus[:, a] * rec(e1t)
        for b, eb in enumerate(e1t):
            if eb:
                e2 = list(e1t)
                e2[b] -= 1
                out = out + eb * sigmas[:, a, b] * rec(tuple(e2))
        cache[e] = out
        return out

    rows = [rec(tuple(int(x) for x in row)) for row in exponent_rows]
    if not rows:
        return np.zeros((0, N))
    return np.stack(rows, axis=0)


def gaussian_moment(mu, Sigma, e) -> float:
    """Exact raw moment E[prod_i x_i^{e_i}] of N(mu, Sigma).

    ``e`` may be a MonomialExponent or a plain exponent sequence. Sigma must be
    symmetric PSD; asymmetry beyond 1e-10 is rejected.
    """
    mu, Sigma = _check_gaussian(mu, Sigma)
    exps = tuple(getattr(e, "exponents", e))
    if len(exps) != mu.shape[0]:
        raise ValueError("exponent vector length must match mu")
    out = _raw_moments([exps], mu[None, :], Sigma[None, :, :])
    return float(out[0, 0])


def expected_phi(basis: PolyBasis, mu, Sigma) -> np.ndarray:
    """E[phi(s)] for s ~ N(mu, Sigma), exact per monomial.

    With Sigma identically zero this returns phi(basis, mu) exactly (same
    floating-point result), matching the degenerate-Gaussian limit.
    """
    mu, Sigma = _check_gaussian(mu, Sigma)
    if basis.k_phi == 0:
        return np.zeros(0)
    if not Sigma.any():
        return phi(basis, mu)
    return _raw_moments(basis._expo, mu[None, :], Sigma[None, :, :])[:, 0]


def expected_phi_batch(basis: PolyBasis, mus: np.ndarray, sigmas: np.ndarray) -> np.ndarray:
    """E[phi(s)] for N Gaussians at once; returns (N, k_phi)."""
    mus = np.asarray(mus, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if basis.k_phi == 0:
        return np.zeros((mus.shape[0], 0))
    return _raw_moments(basis._expo, mus, sigmas).T
