"""Inequality verifiers: interpolation traces, Bobkov margins, perimeter.

Margins are signed with positive = violation, so a check passes when its
worst margin stays at or below the tolerance.  Square roots of the form
sqrt(a^2 + b) are evaluated through hypot so that degenerate cases
(constant fields, t = 0) come out exactly equal, not equal-up-to-roundoff.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import gauss
from .gauss import c_alpha, c_alpha_prime, normal_cdf, normal_pdf, normal_quantile
from .semigroup import heat
from .triple import as_field, gamma, gamma2, integrate, laplacian

#: default truncation applied before any profile-derivative evaluation
DEFAULT_TRUNCATION = 1e-4


@dataclass(frozen=True)
class VerifierReport:
    """Outcome of one inequality check; self-describing via ``params``.

    ``worst_margin`` is signed (positive means the inequality is violated);
    ``passed`` is exactly ``worst_margin <= tolerance``.
    """

    name: str
    params: dict
    worst_margin: float
    tolerance: float
    worst_state: int | None = None
    worst_time: float | None = None
    summary: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.worst_margin <= self.tolerance)

    def __str__(self):
        loc = ""
        if self.worst_state is not None:
            loc += f" state={self.worst_state}"
        if self.worst_time is not None:
            loc += f" t={self.worst_time:g}"
        status = "pass" if self.passed else "FAIL"
        return (f"{self.name}: worst margin {self.worst_margin:.6e} "
                f"(tol {self.tolerance:g}){loc} -> {status}")


def _require_positive_curvature(K):
    if not math.isfinite(K):
        raise ValueError("curvature constant is flagged -inf; refusing to verify")
    if K <= 0:
        raise ValueError(f"this inequality requires K > 0, got {K}")


def truncate(f, eps):
    """Clamp a [0,1]-valued field into [eps, 1-eps].

    Truncation is 1-Lipschitz, so it can only decrease the squared gradient.
    """
    if not 0.0 < eps < 0.5:
        raise ValueError(f"truncation level must lie in (0, 1/2), got {eps}")
    f = np.asarray(f, dtype=float)
    if f.min() < 0.0 or f.max() > 1.0:
        raise ValueError("field must take values in [0, 1] before truncation")
    return np.clip(f, eps, 1.0 - eps)


@dataclass(frozen=True)
class PsiPartials:
    """sqrt(I^2(u) + c_alpha(t) v) with its closed-form partial derivatives."""

    value: np.ndarray
    dt: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    duu: np.ndarray
    duv: np.ndarray
    dvv: np.ndarray


def psi(t, u, v, K, alpha):
    """Evaluate the interpolation root and all partials used by the trace.

    u must lie strictly inside (0,1), v must be nonnegative, and the
    argument I^2(u) + c_alpha(t) v must be positive.  The second derivatives
    consume the profile identities I' = -H^-1 and I I'' = -1.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("psi requires u strictly inside (0, 1); truncate first")
    if np.any(v < 0.0):
        raise ValueError("psi requires v >= 0")
    c = c_alpha(K, alpha, t)
    cp = c_alpha_prime(K, alpha, t)
    q = normal_quantile(u)
    I = normal_pdf(q)
    Ip = -q
    psi2 = I * I + c * v
    if np.any(psi2 <= 0.0):
        raise ValueError("psi requires I^2(u) + c_alpha(t) v > 0")
    val = np.sqrt(psi2)
    psi3 = psi2 * val
    return PsiPartials(
        value=val,
        dt=0.5 * cp * v / val,
        du=I * Ip / val,
        dv=0.5 * c / val,
        duu=(psi2 * (Ip * Ip - 1.0) - I * I * Ip * Ip) / psi3,
        duv=-0.5 * c * I * Ip / psi3,
        dvv=-0.25 * c * c / psi3,
    )


@dataclass(frozen=True)
class ZetaResult:
    """Drift field of the interpolation trace, in both algebraic forms.

    ``values`` is the canonical field: the closed form, with the
    Gamma(Gamma(g)) term suppressed on states where Gamma(g) vanishes (there
    the partial-derivative expansion degenerates).  States where Gamma(g)
    vanishes but Gamma(Gamma(g)) does not are genuinely ambiguous on a graph
    and are listed in ``exceptional_states``.
    """

    values: np.ndarray
    six_term: np.ndarray
    closed_form: np.ndarray
    exceptional_states: np.ndarray
    gamma_g: np.ndarray


def zeta_report(cache, f, T, t, alpha, K, gamma_zero_rtol=1e-12):
    """Evaluate the drift field two independent ways at interpolation time t."""
    if not 0.0 < t < T:
        raise ValueError(f"need 0 < t < T, got t={t}, T={T}")
    triple = cache.triple
    f = as_field(triple, f)
    if f.min() <= 0.0 or f.max() >= 1.0:
        raise ValueError("field must take values strictly inside (0,1); truncate first")
    g = heat(cache, f, T - t)
    gg = gamma(triple, g)
    ggg = gamma(triple, gg)
    cross = gamma(triple, g, gg)
    gk = gamma2(triple, g) - K * gg

    parts = psi(t, g, gg, K, alpha)
    six = (parts.dt + parts.duu * gg + 2.0 * parts.duv * cross
           + parts.dvv * ggg + 2.0 * K * parts.dv * gg + 2.0 * parts.dv * gk)

    c = c_alpha(K, alpha, t)
    q = normal_quantile(g)
    I = normal_pdf(q)
    Ip = -q
    psi3 = parts.value ** 3

    def closed(gamma_gamma):
        bracket1 = -0.25 * gamma_gamma + gg * gk
        bracket2 = -Ip * I * cross + Ip * Ip * gg * gg + I * I * gk
        return (c * c * bracket1 + c * bracket2) / psi3

    closed_full = closed(ggg)
    zero = gg <= gamma_zero_rtol * max(float(gg.max()), 1e-300)
    values = np.where(zero, closed(np.zeros_like(ggg)), closed_full)
    exceptional = np.nonzero(
        zero & (ggg > gamma_zero_rtol * max(float(ggg.max()), 1e-300)))[0]
    return ZetaResult(values=values, six_term=six, closed_form=closed_full,
                      exceptional_states=exceptional, gamma_g=gg)


def zeta_field(cache, f, T, t, alpha, K):
    """Canonical drift field (see ``zeta_report``)."""
    return zeta_report(cache, f, T, t, alpha, K).values


def _psi_value_fields(triple, u, v, coeff):
    # hypot keeps sqrt(I^2 + coeff*Gamma) exact when either argument vanishes
    return np.hypot(_profile_interior(u), np.sqrt(coeff * v))


def _profile_interior(u):
    q = normal_quantile(u)
    return normal_pdf(q)


@dataclass(frozen=True)
class PhiTrace:
    """Trace t -> int H_t(Psi(t, H_{T-t} f, Gamma(H_{T-t} f))) phi dm.

    ``zeta_integrals[i]`` is the lower bound for the derivative at
    ``times[i]``; ``endpoint_lhs/rhs`` are the two independently computed
    sides of the endpoint identity for the total increment.
    """

    times: np.ndarray
    values: np.ndarray
    zeta_integrals: np.ndarray
    exceptional_counts: np.ndarray
    phi_at_zero: float
    phi_at_T: float
    endpoint_lhs: float
    endpoint_rhs: float

    def derivative_margins(self):
        """Central-difference derivative minus its lower bound at interior points."""
        t, v = self.times, self.values
        if t.size < 3:
            return np.empty(0), np.empty(0)
        deriv = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
        return t[1:-1], deriv - self.zeta_integrals[1:-1]


def phi_trace(cache, f, phi, T, alpha, K, time_grid):
    """Evaluate the interpolation trace on a grid inside (0, T)."""
    triple = cache.triple
    f = as_field(triple, f)
    phi = as_field(triple, phi)
    if np.any(phi < 0.0):
        raise ValueError("phi must be nonnegative")
    if f.min() <= 0.0 or f.max() >= 1.0:
        raise ValueError("field must take values strictly inside (0,1); truncate first")
    grid = np.asarray(time_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("time grid is empty")
    if np.any((grid <= 0.0) | (grid >= T)):
        raise ValueError(f"time grid must lie strictly inside (0, {T})")
    grid = np.sort(grid)

    def phi_at(t):
        g = heat(cache, f, T - t)
        integrand = _psi_value_fields(triple, g, gamma(triple, g), c_alpha(K, alpha, t))
        return integrate(triple, heat(cache, integrand, t) * phi)

    values = np.array([phi_at(t) for t in grid])
    zints = np.empty(grid.size)
    ecount = np.empty(grid.size, dtype=int)
    for i, t in enumerate(grid):
        zr = zeta_report(cache, f, T, t, alpha, K)
        zints[i] = integrate(triple, zr.values * heat(cache, phi, t))
        ecount[i] = zr.exceptional_states.size

    hTf = heat(cache, f, T)
    phi0 = integrate(triple, _psi_value_fields(triple, hTf, gamma(triple, hTf), alpha) * phi)
    big = _psi_value_fields(triple, f, gamma(triple, f), c_alpha(K, alpha, T))
    phiT = integrate(triple, heat(cache, big, T) * phi)
    rhs = integrate(
        triple,
        (heat(cache, big, T)
         - _psi_value_fields(triple, hTf, gamma(triple, hTf), alpha)) * phi)
    return PhiTrace(times=grid, values=values, zeta_integrals=zints,
                    exceptional_counts=ecount, phi_at_zero=phi0, phi_at_T=phiT,
                    endpoint_lhs=phiT - phi0, endpoint_rhs=rhs)


def bobkov_local(cache, f, alpha, K, time_grid, eps=DEFAULT_TRUNCATION,
                 tolerance=math.inf):
    """Interpolated inequality: for each grid time, worst over states of

        sqrt(I^2(H_t f) + alpha Gamma(H_t f)) - H_t sqrt(I^2(f) + c_alpha(t) Gamma(f))

    after truncating f into [eps, 1-eps].  At t = 0 both sides agree exactly
    because c_alpha(0) = alpha.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if not math.isfinite(K):
        raise ValueError("curvature constant is flagged -inf; refusing to verify")
    triple = cache.triple
    f = truncate(as_field(triple, f), eps)
    gf = gamma(triple, f)
    base = _profile_interior(f)
    worst = (-math.inf, None, None)
    per_time = {}
    for t in np.asarray(time_grid, dtype=float):
        if t < 0:
            raise ValueError(f"negative time {t}")
        hf = heat(cache, f, t)
        hf = np.clip(hf, eps * 1e-6, 1.0 - eps * 1e-6)
        lhs = np.hypot(_profile_interior(hf), np.sqrt(alpha * gamma(triple, hf)))
        rhs = heat(cache, np.hypot(base, np.sqrt(c_alpha(K, alpha, t) * gf)), t)
        margins = lhs - rhs
        x = int(np.argmax(margins))
        per_time[float(t)] = float(margins[x])
        if margins[x] > worst[0]:
            worst = (float(margins[x]), x, float(t))
    return VerifierReport(
        name="bobkov-local",
        params={"alpha": alpha, "K": K, "eps": eps,
                "time_grid": [float(t) for t in np.asarray(time_grid, dtype=float)]},
        worst_margin=worst[0], tolerance=tolerance,
        worst_state=worst[1], worst_time=worst[2],
        summary={"per_time_worst": per_time})


def bobkov_global(triple, f, K, tolerance=math.inf):
    """Global functional inequality at constant K > 0:

        sqrt(K) I(int f dm) - int sqrt(K I^2(f) + Gamma(f)) dm  <=  0.

    Exact on the two-point space; converges on diffusion discretizations.
    """
    _require_positive_curvature(K)
    f = as_field(triple, f)
    if f.min() < 0.0 or f.max() > 1.0:
        raise ValueError("field must take values in [0, 1]")
    sk = math.sqrt(K)
    lhs = sk * gauss.profile_value(integrate(triple, f))
    rhs = integrate(triple, np.hypot(sk * gauss.profile_value(f),
                                     np.sqrt(gamma(triple, f))))
    return VerifierReport(
        name="bobkov-global", params={"K": K},
        worst_margin=float(lhs - rhs), tolerance=tolerance,
        summary={"lhs": float(lhs), "rhs": float(rhs)})


def two_point_bobkov_margin(a, b):
    """Closed two-point form: I((a+b)/2) - mean of sqrt(I^2(.) + (a-b)^2/4).

    Equivalent to ``bobkov_global`` on the two-point triple at K = 2 up to
    the overall factor sqrt(2); nonpositive for all a, b in [0, 1].
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any((a < 0) | (a > 1) | (b < 0) | (b > 1)):
        raise ValueError("two-point inputs must lie in [0, 1]")
    half_gap = 0.5 * (a - b)
    lhs = gauss.profile_value(0.5 * (a + b))
    rhs = 0.5 * (np.hypot(gauss.profile_value(a), half_gap)
                 + np.hypot(gauss.profile_value(b), half_gap))
    out = lhs - rhs
    return float(out) if out.ndim == 0 else out


def _edge_weights(triple):
    flux = triple.m[:, None] * triple.L
    w = np.sqrt(np.maximum(flux * flux.T, 0.0)) * triple.edge_lengths
    return np.where(triple.support, w, 0.0)


def total_variation(triple, f):
    """Weighted total variation sum over support edges of w(x,y) |f(y)-f(x)|.

    The edge weight sqrt(m(x)L(x,y) m(y)L(y,x)) d(x,y) is calibrated so that
    half-line perimeters on the Gaussian chain converge to the continuum
    boundary density under grid refinement.  Seminorm: zero exactly on
    constants, triangle inequality holds.
    """
    f = as_field(triple, f)
    w = _edge_weights(triple)
    i, j = np.nonzero(np.triu(w > 0))
    return float(np.sum(w[i, j] * np.abs(f[j] - f[i])))


def perimeter(triple, states):
    """Total variation of the indicator of a state subset."""
    chi = np.zeros(triple.n)
    chi[np.asarray(states, dtype=int)] = 1.0
    return total_variation(triple, chi)


def isoperimetric_margin(triple, states, K, tolerance=math.inf):
    """Gaussian-profile lower bound for the discrete perimeter:

        sqrt(K) I(m(E)) - P(E)  <=  0   (asserted on chain discretizations).
    """
    _require_positive_curvature(K)
    states = np.asarray(states, dtype=int)
    mass = float(triple.m[states].sum()) if states.size else 0.0
    per = perimeter(triple, states)
    margin = math.sqrt(K) * gauss.profile_value(mass) - per
    return VerifierReport(
        name="isoperimetry", params={"K": K, "set_size": int(states.size)},
        worst_margin=float(margin), tolerance=tolerance,
        summary={"mass": mass, "perimeter": per})


def bv_corollary_margin(triple, f, K):
    """Split form of the global inequality:

        sqrt(K) I(int f dm) - sqrt(K) int I(f) dm - int sqrt(Gamma(f)) dm.

    The gradient mass int sqrt(Gamma(f)) dm realizes the total variation of
    a Sobolev field; subadditivity of the square root makes this margin at
    most the ``bobkov_global`` margin, exactly.
    """
    _require_positive_curvature(K)
    f = as_field(triple, f)
    if f.min() < 0.0 or f.max() > 1.0:
        raise ValueError("field must take values in [0, 1]")
    sk = math.sqrt(K)
    lhs = sk * gauss.profile_value(integrate(triple, f))
    rhs = sk * integrate(triple, gauss.profile_value(f)) + integrate(
        triple, np.sqrt(gamma(triple, f)))
    return float(lhs - rhs)


_INTERVAL_RE = re.compile(r"\[\s*([^,\]\s]+)\s*,\s*([^,\]\s]+)\s*\]")


@dataclass(frozen=True)
class IntervalUnion:
    """Disjoint closed intervals on the extended real line, normalized."""

    intervals: tuple

    @classmethod
    def of(cls, pairs):
        cleaned = []
        for a, b in pairs:
            a, b = float(a), float(b)
            if math.isnan(a) or math.isnan(b):
                raise ValueError("interval endpoints must not be NaN")
            if a > b:
                raise ValueError(f"interval [{a}, {b}] has a > b")
            cleaned.append((a, b))
        cleaned.sort()
        merged = []
        for a, b in cleaned:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        return cls(intervals=tuple(merged))

    @classmethod
    def from_string(cls, text):
        """Parse e.g. '[-1,1]' or '[-inf,0]; [2, 3.5]'."""
        found = _INTERVAL_RE.findall(text)
        leftover = _INTERVAL_RE.sub("", text).replace(";", "").replace(",", "").strip()
        if not found or leftover:
            raise ValueError(f"malformed interval union: {text!r}")
        return cls.of([(float(a), float(b)) for a, b in found])

    def __str__(self):
        return "; ".join(f"[{a:g}, {b:g}]" for a, b in self.intervals)


def gaussian_interval_oracle(union):
    """Exact Gaussian mass and perimeter of an interval union on the line.

    Mass sums H(b) - H(a); perimeter sums the density at every finite
    endpoint (the density vanishes at infinite ones).  For a half-line the
    perimeter equals the isoperimetric profile of the mass by definition.
    """
    if not isinstance(union, IntervalUnion):
        union = IntervalUnion.of(union)
    mass = 0.0
    per = 0.0
    for a, b in union.intervals:
        mass += normal_cdf(b) - normal_cdf(a)
        per += normal_pdf(a) + normal_pdf(b)
    return float(mass), float(per)


def sigmoid_family(coords, count=10):
    """Gaussian-cdf sigmoids H(s (x - c)) over a coordinate array.

    Five centers in [-1.5, 1.5] at two steepness levels; sharp members
    approach half-line indicators, the equality case of the global
    inequality on the Gaussian chain.
    """
    coords = np.asarray(coords, dtype=float)
    if count != 10:
        raise ValueError("the family is calibrated with 10 members")
    centers = np.linspace(-1.5, 1.5, 5)
    fields = []
    for s in (1.0, 3.0):
        for c in centers:
            fields.append(normal_cdf(s * (coords - c)))
    return fields
