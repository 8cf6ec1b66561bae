"""Heat flow on a Markov triple through a full spectral decomposition.

The generator conjugated by sqrt(m) is symmetric under detailed balance, so
one dense symmetric eigendecomposition per triple powers every later flow
evaluation exactly (semigroup law holds to roundoff, not to an ODE-stepper
tolerance).  The cache is immutable and safe to share across workers.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError, TripleValidationError
from .triple import as_field, gamma, integrate

#: absolute window around zero for the conservative eigenvalue
ZERO_EIGENVALUE_TOL = 1e-10

#: kernel entries in [-KERNEL_CLIP_TOL, 0) are roundoff and clipped; below is an error
KERNEL_CLIP_TOL = 1e-12

_FULL_RECON_CHECK_LIMIT = 2048


class SpectralCache:
    """Eigendecomposition of the symmetrized generator of a triple.

    Attributes
    ----------
    triple : MarkovTriple
    eigenvalues : descending, ``eigenvalues[0] == 0.0`` exactly (snapped after
        verifying it lies within ``ZERO_EIGENVALUE_TOL`` of zero).
    basis : orthogonal matrix, column k is the eigenvector of eigenvalue k,
        sign-fixed so its first significant component is positive.
    gap : spectral gap ``-eigenvalues[1]``.
    """

    def __init__(self, triple, eigenvalues, basis):
        self.triple = triple
        self.eigenvalues = eigenvalues
        self.basis = basis
        self.sqrt_m = np.sqrt(triple.m)
        self.inv_sqrt_m = 1.0 / self.sqrt_m
        for arr in (self.eigenvalues, self.basis, self.sqrt_m, self.inv_sqrt_m):
            arr.setflags(write=False)

    @property
    def gap(self):
        return -float(self.eigenvalues[1])

    def __repr__(self):
        return f"SpectralCache(n={self.triple.n}, gap={self.gap:.6g})"


def build_cache(triple):
    """Diagonalize sqrt(M) L inv(sqrt(M)) and validate the spectrum.

    Raises NumericError if the eigensolver fails to converge and
    TripleValidationError if the spectrum reveals a disconnected or
    non-conservative structure.
    """
    sqrt_m = np.sqrt(triple.m)
    S = (sqrt_m[:, None] * triple.L) / sqrt_m[None, :]
    S = 0.5 * (S + S.T)
    try:
        lam, Q = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed to converge: {exc}") from exc
    order = np.argsort(lam)[::-1]
    lam = np.ascontiguousarray(lam[order])
    Q = np.ascontiguousarray(Q[:, order])

    if abs(lam[0]) > ZERO_EIGENVALUE_TOL:
        raise TripleValidationError(
            "spectrum", f"leading eigenvalue {lam[0]:.3e} not within "
            f"{ZERO_EIGENVALUE_TOL:g} of zero")
    if lam.size > 1 and abs(lam[1]) <= ZERO_EIGENVALUE_TOL:
        raise TripleValidationError(
            "connectivity", f"second eigenvalue {lam[1]:.3e} is numerically zero; "
            "support graph is effectively disconnected")
    lam[0] = 0.0

    # deterministic sign: first significant component of each column positive
    for k in range(Q.shape[1]):
        col = Q[:, k]
        sig = np.nonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]
        if sig.size and col[sig[0]] < 0:
            Q[:, k] = -col

    scale = np.abs(S).max()
    if triple.n <= _FULL_RECON_CHECK_LIMIT:
        recon = np.abs(S - (Q * lam) @ Q.T).max()
    else:
        rng = np.random.default_rng(0)
        v = rng.standard_normal((triple.n, 4))
        recon = np.abs(S @ v - (Q * lam) @ (Q.T @ v)).max() / max(
            np.abs(v).max(), 1.0)
    if recon > 1e-10 * max(scale, 1.0):
        raise NumericError(
            f"eigendecomposition reconstruction error {recon:.3e} exceeds "
            f"1e-10 * {scale:.3e}")
    return SpectralCache(triple, lam, Q)


def heat(cache, f, t):
    """Evolve a field: H_t f = exp(tL) f through the spectral basis.

    H_0 is the exact identity; for t > 0 the flow conserves mass, obeys the
    maximum principle and the semigroup law to roundoff.
    """
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    f = as_field(cache.triple, f)
    if t == 0:
        return f.copy()
    w = cache.basis.T @ (cache.sqrt_m * f)
    w *= np.exp(t * cache.eigenvalues)
    return (cache.basis @ w) * cache.inv_sqrt_m


def heat_many(cache, F, t):
    """Evolve the columns of F jointly (same contract as ``heat``)."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    F = np.asarray(F, dtype=float)
    if t == 0:
        return F.copy()
    W = cache.basis.T @ (cache.sqrt_m[:, None] * F)
    W *= np.exp(t * cache.eigenvalues)[:, None]
    return (cache.basis @ W) * cache.inv_sqrt_m[:, None]


def heat_kernel(cache, t, return_clip_count=False):
    """Row-stochastic kernel P_t with H_t f(x) = sum_y P_t(x,y) f(y).

    Entries in [-1e-12, 0) are roundoff and clipped to zero (count available
    through ``return_clip_count``); anything below that signals a broken
    triple and raises NumericError.
    """
    if t <= 0:
        raise ValueError(f"kernel requires t > 0, got {t}")
    decay = np.exp(t * cache.eigenvalues)
    P = (cache.basis * decay) @ cache.basis.T
    P *= cache.inv_sqrt_m[:, None] * cache.sqrt_m[None, :]
    low = P.min()
    if low < -KERNEL_CLIP_TOL:
        raise NumericError(
            f"kernel entry {low:.3e} below -{KERNEL_CLIP_TOL:g}; triple is broken")
    negatives = P < 0
    clipped = int(negatives.sum())
    if clipped:
        P[negatives] = 0.0
    if return_clip_count:
        return P, clipped
    return P


def ergodic_defect(cache, f, t):
    """L^2(m) distance of H_t f from the mean of f.

    Bounded by exp(lambda_2 t) times the initial distance.
    """
    f = as_field(cache.triple, f)
    mean = integrate(cache.triple, f)
    diff = heat(cache, f, t) - mean
    return float(np.sqrt(np.dot(cache.triple.m, diff * diff)))


def gradient_estimate_margin(cache, f, t, K):
    """Worst violation of Gamma(H_t f) <= exp(-2Kt) H_t(Gamma(f)).

    Nonpositive (to roundoff) whenever K is at most the optimal curvature
    constant of the triple; exact equality on the two-point space.
    """
    triple = cache.triple
    f = as_field(triple, f)
    lhs = gamma(triple, heat(cache, f, t))
    rhs = math.exp(-2.0 * K * t) * heat(cache, gamma(triple, f), t)
    return float(np.max(lhs - rhs))


def iota_coefficient(K, t):
    """Variance-production coefficient (exp(2Kt) - 1) / (2K), with value t at K = 0."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if K == 0:
        return float(t)
    return float(np.expm1(2.0 * K * t) / (2.0 * K))


def variance_regularization_margin(cache, f, t, K):
    """Worst violation of 2 iota_{2K}(t) Gamma(H_t f) <= H_t(f^2) - (H_t f)^2.

    Nonpositive (to roundoff) when K lower-bounds the triple's curvature;
    the right side never exceeds sup |f|^2.
    """
    if t <= 0:
        raise ValueError(f"variance bound requires t > 0, got {t}")
    triple = cache.triple
    f = as_field(triple, f)
    hf = heat(cache, f, t)
    variance = heat(cache, f * f, t) - hf * hf
    lhs = 2.0 * iota_coefficient(K, t) * gamma(triple, hf)
    return float(np.max(lhs - variance))


def lip_gradient_diagnostic(cache, f, t, K):
    """Slope-form companion of the gradient estimate, reported only.

    Returns max over states of lip(H_t f)^2 - exp(-2Kt) H_t(Gamma(f)).  On a
    graph the local slope and sqrt(Gamma) differ by bounded factors, so no
    sign is asserted; the value is a diagnostic for how far the slope form
    drifts from the Gamma form on a given space.
    """
    from .triple import lip_slope

    triple = cache.triple
    f = as_field(triple, f)
    slope = lip_slope(triple, heat(cache, f, t))
    rhs = math.exp(-2.0 * K * t) * heat(cache, gamma(triple, f), t)
    return float(np.max(slope * slope - rhs))
