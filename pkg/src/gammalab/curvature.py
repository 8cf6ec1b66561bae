"""Optimal curvature constant extraction as a per-state eigenvalue problem.

At each state x the squared gradient and its iterated form are quadratic
forms B_x and A_x supported on the 1- and 2-ball of x.  The best constant in
``Gamma_2(f)(x) >= K(x) Gamma(f)(x)`` is the smallest eigenvalue of the
pencil (A_x, B_x) after splitting off the kernel of B_x: on the kernel A_x
must be positive semidefinite (otherwise no constant works and K(x) = -inf),
and the range block is reduced by a Schur complement.  A randomized
coordinate-descent Rayleigh minimizer provides an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .triple import as_field, cheeger_energy, gamma, gamma2, integrate, laplacian

#: relative split between range and kernel of the gradient form
DEFAULT_KERNEL_TOL = 1e-10

#: relative slack when testing the iterated form for negativity on the kernel
KERNEL_PSD_RTOL = 1e-9

#: relative threshold for kernel directions of A_NN coupled into the range
_COUPLING_RTOL = 1e-7

NEG_INF = float("-inf")


def two_ball(triple, x):
    """Sorted state indices within graph distance 2 of x (x included)."""
    first = set(triple.neighbors(x).tolist())
    ball = {x} | first
    for y in first:
        ball.update(triple.neighbors(y).tolist())
    return np.array(sorted(ball), dtype=int)


def _local_forms(triple, x):
    """Quadratic forms of Gamma(.)(x) and Gamma_2(.)(x) on the 2-ball of x."""
    ball = two_ball(triple, x)
    b = ball.size
    pos = {int(s): i for i, s in enumerate(ball)}
    L = triple.L
    px = pos[x]

    B = np.zeros((b, b))
    for y in triple.neighbors(x):
        py = pos[int(y)]
        r = 0.5 * L[x, y]
        B[px, px] += r
        B[py, py] += r
        B[px, py] -= r
        B[py, px] -= r

    # 1/2 sum_z L(x,z) B_z, z over x and its neighbors (diagonal included)
    A = np.zeros((b, b))
    for z in np.concatenate(([x], triple.neighbors(x))):
        z = int(z)
        pz = pos[z]
        w = 0.5 * L[x, z]
        if w == 0.0:
            continue
        for y in triple.neighbors(z):
            py = pos[int(y)]
            r = 0.5 * L[z, y] * w
            A[pz, pz] += r
            A[py, py] += r
            A[pz, py] -= r
            A[py, pz] -= r

    # Gamma(f, Lf)(x) as a bilinear form, then symmetrized
    C = np.zeros((b, b))
    for y in triple.neighbors(x):
        y = int(y)
        py = pos[y]
        w = 0.5 * L[x, y]
        rows = L[y, ball] - L[x, ball]
        C[py, :] += w * rows
        C[px, :] -= w * rows
    A -= 0.5 * (C + C.T)
    return ball, B, A


def gamma_form_at(triple, x):
    """Symmetric PSD matrix B_x with f^T B_x f = Gamma(f)(x); 1-ball support."""
    _check_state(triple, x)
    ball, B, _ = _local_forms(triple, x)
    out = np.zeros((triple.n, triple.n))
    out[np.ix_(ball, ball)] = B
    return out


def gamma2_form_at(triple, x):
    """Symmetric matrix A_x with f^T A_x f = Gamma_2(f)(x); 2-ball support."""
    _check_state(triple, x)
    ball, _, A = _local_forms(triple, x)
    out = np.zeros((triple.n, triple.n))
    out[np.ix_(ball, ball)] = A
    return out


def _check_state(triple, x):
    if not (0 <= x < triple.n):
        raise IndexError(f"state {x} out of range for n={triple.n}")


@dataclass(frozen=True)
class StateCurvature:
    """Per-state extraction result; witness is supported on the 2-ball."""

    k: float
    ball: np.ndarray
    witness_local: np.ndarray | None
    gamma_rank: int
    kernel_min_eig: float

    def witness(self, n):
        if self.witness_local is None:
            return None
        f = np.zeros(n)
        f[self.ball] = self.witness_local
        return f


def _solve_state(triple, x, kernel_tol):
    ball, B, A = _local_forms(triple, x)
    try:
        beta, U = np.linalg.eigh(B)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"gradient-form eigensolve failed at state {x}: {exc}") from exc
    bmax = beta[-1]
    if bmax <= 0:
        raise NumericError(f"state {x} has a vanishing gradient form; "
                           "triple should have failed connectivity validation")
    in_range = beta > kernel_tol * bmax
    rank = int(in_range.sum())
    At = U.T @ A @ U
    At = 0.5 * (At + At.T)
    scale_a = max(float(np.abs(A).max()), 1e-300)

    R = np.nonzero(in_range)[0]
    N = np.nonzero(~in_range)[0]
    A_rr = At[np.ix_(R, R)]
    kernel_min = math.nan
    if N.size:
        A_nn = At[np.ix_(N, N)]
        A_nr = At[np.ix_(N, R)]
        try:
            mu, V = np.linalg.eigh(A_nn)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"kernel-block eigensolve failed at state {x}: {exc}") from exc
        kernel_min = float(mu[0])
        if mu[0] < -KERNEL_PSD_RTOL * scale_a:
            return StateCurvature(NEG_INF, ball, None, rank, kernel_min)
        # pseudo-inverse thresholded against the scale of the full form, not
        # of the (possibly all-noise) kernel block
        keep = mu > kernel_tol * scale_a
        inv = np.zeros_like(mu)
        inv[keep] = 1.0 / mu[keep]
        pinv = (V * inv) @ V.T
        # a kernel direction of A_NN coupled into the range drives the form
        # to -inf regardless of K
        residual = A_nr - A_nn @ (pinv @ A_nr)
        if residual.size and np.abs(residual).max() > _COUPLING_RTOL * scale_a:
            return StateCurvature(NEG_INF, ball, None, rank, kernel_min)
        schur = A_rr - A_nr.T @ (pinv @ A_nr)
        schur = 0.5 * (schur + schur.T)
    else:
        A_nr = None
        pinv = None
        schur = A_rr

    inv_sqrt_beta = 1.0 / np.sqrt(beta[R])
    G = schur * inv_sqrt_beta[:, None] * inv_sqrt_beta[None, :]
    G = 0.5 * (G + G.T)
    try:
        kappa, W = np.linalg.eigh(G)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"pencil eigensolve failed at state {x}: {exc}") from exc
    k = float(kappa[0])
    y = W[:, 0]
    f_r = inv_sqrt_beta * y
    coeffs = np.zeros(ball.size)
    coeffs[R] = f_r
    if N.size:
        coeffs[N] = -pinv @ (A_nr @ f_r)
    witness = U @ coeffs
    peak = np.abs(witness).max()
    if peak > 0:
        witness = witness / peak
    return StateCurvature(k, ball, witness, rank, kernel_min)


def curvature_at(triple, x, kernel_tol=DEFAULT_KERNEL_TOL):
    """Best constant K(x) with Gamma_2(f)(x) >= K(x) Gamma(f)(x), plus a witness.

    Returns ``(-inf, None)`` when the iterated form is negative on a gradient
    -null direction, i.e. no constant works at x.  The witness attains the
    minimal Rayleigh quotient Gamma_2(f)(x)/Gamma(f)(x).
    """
    _check_state(triple, x)
    sol = _solve_state(triple, x, kernel_tol)
    return sol.k, sol.witness(triple.n)


@dataclass(frozen=True)
class CurvatureReport:
    """Per-state and global best constants with witnesses and diagnostics.

    ``k_global = min_x k_per_state`` (-inf propagates).  ``gamma_rank`` and
    ``kernel_min_eig`` record the range/kernel split of the gradient form and
    how the iterated form behaves on that kernel.  The singular part of the
    curvature decomposition is identically zero on a finite space and is
    recorded as such.
    """

    k_per_state: np.ndarray
    k_global: float
    argmin_state: int
    states: tuple
    gamma_rank: np.ndarray
    kernel_min_eig: np.ndarray
    kernel_tol: float
    singular_part: float = 0.0

    @property
    def degenerate(self):
        """True when some state admits no curvature constant."""
        return bool(np.isneginf(self.k_per_state).any())

    def witness(self, x):
        """Witness field for state x on the full state space (None if flagged)."""
        sol = self.states[x]
        return sol.witness(self.k_per_state.size)


def curvature_global(triple, kernel_tol=DEFAULT_KERNEL_TOL):
    """Solve the per-state problems and aggregate the global constant."""
    sols = tuple(_solve_state(triple, x, kernel_tol) for x in range(triple.n))
    ks = np.array([s.k for s in sols])
    argmin = int(np.argmin(ks))
    return CurvatureReport(
        k_per_state=ks,
        k_global=float(ks[argmin]),
        argmin_state=argmin,
        states=sols,
        gamma_rank=np.array([s.gamma_rank for s in sols], dtype=int),
        kernel_min_eig=np.array([s.kernel_min_eig for s in sols]),
        kernel_tol=kernel_tol,
    )


def rayleigh_quotient(triple, f, x):
    """Gamma_2(f)(x) / Gamma(f)(x); requires Gamma(f)(x) > 0."""
    f = as_field(triple, f)
    den = gamma(triple, f)[x]
    if den <= 0:
        raise ValueError(f"Gamma(f)({x}) = {den}; quotient undefined")
    return float(gamma2(triple, f)[x] / den)


def curvature_at_bruteforce(triple, x, restarts=24, max_sweeps=60, seed=0,
                            blowup=-1e9):
    """Independent minimizer of the Rayleigh quotient at x.

    Random restarts plus exact coordinate descent over the 2-ball
    coordinates: along one coordinate both Gamma_2(f)(x) and Gamma(f)(x) are
    quadratics in the step, so each line search is solved in closed form from
    three evaluations of the public operators.  The field is recentered and
    renormalized after every sweep (the quotient is shift and scale
    invariant) and the quotient is re-evaluated fresh, so accepted steps
    cannot accumulate floating-point drift.  Intended for small spaces as a
    cross-check of the Schur-complement path; returns -inf if the quotient
    is driven below ``blowup``.
    """
    _check_state(triple, x)
    ball = two_ball(triple, x)
    rng = np.random.default_rng(seed)
    n = triple.n
    rate_scale = max(float(np.abs(triple.L).max()), 1e-300)
    den_floor = 1e-12 * rate_scale

    def num_den(fvec):
        return float(gamma2(triple, fvec)[x]), float(gamma(triple, fvec)[x])

    def recentered(fvec):
        g = fvec.copy()
        g[ball] -= g[ball].mean()
        peak = np.abs(g[ball]).max()
        if peak > 0:
            g[ball] /= peak
        return g

    best = math.inf
    for _ in range(restarts):
        f = np.zeros(n)
        f[ball] = rng.standard_normal(ball.size)
        f = recentered(f)
        nume, deno = num_den(f)
        if deno <= den_floor:
            continue
        q = nume / deno
        for _ in range(max_sweeps):
            q_before = q
            for i in ball:
                base = f[i]
                f[i] = base + 1.0
                n_p, d_p = num_den(f)
                f[i] = base - 1.0
                n_m, d_m = num_den(f)
                f[i] = base
                # quadratic coefficients from the three samples
                a0, b0 = nume, deno
                a2 = 0.5 * (n_p + n_m) - a0
                a1 = 0.5 * (n_p - n_m)
                b2 = 0.5 * (d_p + d_m) - b0
                b1 = 0.5 * (d_p - d_m)
                # stationary steps of (a2 s^2 + a1 s + a0)/(b2 s^2 + b1 s + b0)
                c2 = a2 * b1 - a1 * b2
                c1 = 2.0 * (a2 * b0 - a0 * b2)
                c0 = a1 * b0 - a0 * b1
                steps = []
                if abs(c2) > 1e-300:
                    disc = c1 * c1 - 4.0 * c2 * c0
                    if disc >= 0:
                        r = math.sqrt(disc)
                        steps = [(-c1 - r) / (2 * c2), (-c1 + r) / (2 * c2)]
                elif abs(c1) > 1e-300:
                    steps = [-c0 / c1]
                for s in steps:
                    den_s = (b2 * s + b1) * s + b0
                    if den_s <= den_floor:
                        continue
                    q_s = ((a2 * s + a1) * s + a0) / den_s
                    if q_s < q - 1e-12 * (1.0 + abs(q)):
                        f[i] = base + s
                        nume, deno = ((a2 * s + a1) * s + a0), den_s
                        q = q_s
                        base = f[i]
            f = recentered(f)
            nume, deno = num_den(f)
            if deno <= den_floor:
                break
            q = nume / deno
            if q < blowup:
                return NEG_INF
            if q > q_before - 1e-12 * (1.0 + abs(q_before)):
                break
        if deno > den_floor:
            best = min(best, q)
    if not math.isfinite(best):
        raise NumericError(f"brute-force minimizer found no admissible field at state {x}")
    return best


def curvature_global_bruteforce(triple, restarts=24, seed=0):
    """min over states of the brute-force per-state constant."""
    vals = [curvature_at_bruteforce(triple, x, restarts=restarts, seed=seed + x)
            for x in range(triple.n)]
    return min(vals)


@dataclass(frozen=True)
class BeDiagnostics:
    """Margins of the self-improvement package at a given constant K.

    ``g3_margin``: Ch(Gamma(f)) + int (2K Gamma(f)^2 + 2 Gamma(f) Gamma(f,Lf)) dm,
    expected nonpositive on diffusion discretizations only.
    ``mass_identity_residual``: |int Gamma_2(f) - K Gamma(f) dm - int ((Lf)^2
    - K Gamma(f)) dm|, an identity on finite spaces.
    ``self_improvement_margin``: worst violation of
    Gamma(Gamma(f)) <= 4 (Gamma_2(f) - K Gamma(f)) Gamma(f).
    """

    g3_margin: float
    mass_identity_residual: float
    self_improvement_margin: float


def be_diagnostics(triple, f, K):
    f = as_field(triple, f)
    gf = gamma(triple, f)
    lf = laplacian(triple, f)
    g2 = gamma2(triple, f)

    g3 = cheeger_energy(triple, gf) + integrate(
        triple, 2.0 * K * gf * gf + 2.0 * gf * gamma(triple, f, lf))
    mass = abs(integrate(triple, g2 - K * gf) - integrate(triple, lf * lf - K * gf))
    gamma_k = g2 - K * gf
    self_impr = float(np.max(gamma(triple, gf) - 4.0 * gamma_k * gf))
    return BeDiagnostics(g3_margin=float(g3),
                         mass_identity_residual=float(mass),
                         self_improvement_margin=self_impr)
