"""Gaussian special functions, the isoperimetric profile, and c_alpha.

The cdf rides on the complementary error function; the quantile is a
safeguarded Newton iteration on that same cdf (rational initial guess), so
the roundtrip H^-1(H(r)) = r is exact to solver tolerance.  The profile
I = h o H^-1 satisfies I(0) = I(1) = 0, is concave, symmetric about 1/2,
and obeys I * I'' = -1 on (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)

#: quantile iteration control
_NEWTON_MAX_ITER = 100
_NEWTON_STEP_TOL = 1e-13


def normal_pdf(r):
    """Standard Gaussian density h(r)."""
    r = np.asarray(r, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * r * r)
    return float(out) if out.ndim == 0 else out


def normal_cdf(r):
    """Standard Gaussian distribution function H(r), via erfc for tail accuracy."""
    r = np.asarray(r, dtype=float)
    out = 0.5 * erfc(-r / _SQRT2)
    return float(out) if out.ndim == 0 else out


def _survival(r):
    # upper-tail mass with full relative accuracy
    return 0.5 * erfc(r / _SQRT2)


def _tail_guess(q):
    # Abramowitz-Stegun 26.2.23 style rational approximation, |error| < 4.5e-4
    c0, c1, c2 = 2.515517, 0.802853, 0.010328
    d1, d2, d3 = 1.432788, 0.189269, 0.001308
    t = np.sqrt(-2.0 * np.log(q))
    return t - ((c2 * t + c1) * t + c0) / (((d3 * t + d2) * t + d1) * t + 1.0)


def normal_quantile(p):
    """Inverse H^-1(p) for p in (0, 1), safeguarded Newton on the cdf.

    Solved in the tail representation: for p >= 1/2 the mass 1 - p is exact
    in IEEE arithmetic, and Newton runs on the survival function which keeps
    full relative accuracy there.  This makes the quantile odd around 1/2
    down to roundoff and keeps |H(result) - p| at the eps level.
    """
    arr = np.asarray(p, dtype=float)
    scalar = arr.ndim == 0
    x = np.atleast_1d(arr).astype(float)
    if np.any(~((x > 0.0) & (x < 1.0))):
        bad = x[~((x > 0.0) & (x < 1.0))][0]
        raise ValueError(f"quantile requires p in (0,1), got {bad}")
    upper = x >= 0.5
    q = np.where(upper, 1.0 - x, x)
    r = np.maximum(_tail_guess(q), 0.0)
    lo = np.zeros_like(r)
    hi = np.full_like(r, 40.0)
    for _ in range(_NEWTON_MAX_ITER):
        resid = _survival(r) - q
        lo = np.where(resid > 0, r, lo)
        hi = np.where(resid < 0, r, hi)
        dens = normal_pdf(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = r + resid / dens
        inside = np.isfinite(nxt) & (nxt >= lo) & (nxt <= hi)
        nxt = np.where(inside, nxt, 0.5 * (lo + hi))
        done = np.abs(nxt - r) <= _NEWTON_STEP_TOL * (1.0 + np.abs(nxt))
        r = nxt
        if bool(done.all()):
            break
    out = np.where(upper, r, -r)
    return float(out[0]) if scalar else out.reshape(arr.shape)


def profile_value(p):
    """Gaussian isoperimetric profile I(p) = h(H^-1(p)); zero at the endpoints."""
    arr = np.asarray(p, dtype=float)
    scalar = arr.ndim == 0
    x = np.atleast_1d(arr).astype(float)
    if np.any((x < 0.0) | (x > 1.0)):
        bad = x[(x < 0.0) | (x > 1.0)][0]
        raise ValueError(f"profile requires p in [0,1], got {bad}")
    out = np.zeros_like(x)
    interior = (x > 0.0) & (x < 1.0)
    if interior.any():
        out[interior] = normal_pdf(normal_quantile(x[interior]))
    return float(out[0]) if scalar else out.reshape(arr.shape)


def profile_slope(p):
    """I'(p) = -H^-1(p) on (0,1)."""
    q = normal_quantile(p)
    return -q if np.ndim(q) else -float(q)


@dataclass(frozen=True)
class ProfilePoint:
    """Profile value with first and second derivatives at a mass p.

    ``slope = -H^-1(p)`` and ``second = -1/value`` (so value*second = -1);
    both are NaN at the endpoints p in {0, 1} where they are undefined.
    """

    p: float
    value: float
    slope: float
    second: float


def profile(p):
    """Evaluate the isoperimetric profile and its derivatives at one mass."""
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"profile requires p in [0,1], got {p}")
    if p == 0.0 or p == 1.0:
        return ProfilePoint(p=p, value=0.0, slope=math.nan, second=math.nan)
    r = normal_quantile(p)
    value = normal_pdf(r)
    return ProfilePoint(p=p, value=value, slope=-r, second=-1.0 / value)


def c_alpha(K, alpha, t):
    """Interpolation coefficient (1 - exp(-2Kt))/K + alpha exp(-2Kt).

    Continuous in K at zero with value 2t + alpha there (expm1 realizes the
    extension without a branch); c_alpha(., alpha, 0) = alpha exactly, and
    c' / 2 - 1 = -K c.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if K == 0:
        return 2.0 * t + alpha
    e = math.exp(-2.0 * K * t)
    return -math.expm1(-2.0 * K * t) / K + alpha * e


def c_alpha_prime(K, alpha, t):
    """Time derivative of c_alpha: 2 exp(-2Kt) (1 - K alpha)."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return 2.0 * math.exp(-2.0 * K * t) * (1.0 - K * alpha)
