"""Finite reversible Markov triples and the first/second order difference calculus.

A triple bundles a finite state space with a probability weight per state, a
reversible conservative generator and edge lengths on the support graph.  All
operators here (``gamma``, ``laplacian``, ``gamma2``, ...) are pure functions
of a triple and one or more scalar fields; nothing mutates a triple after
construction.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import FieldMismatchError, TripleValidationError

#: relative tolerance used by every construction-time invariant check
VALIDATION_RTOL = 1e-12

# row-block size for the O(n^2) difference sums; keeps temporaries ~ blocks x n
_BLOCK_ROWS = 1024


class MarkovTriple:
    """A finite state space with probability weights and a reversible generator.

    Parameters
    ----------
    measure : array_like, shape (n,)
        Positive weights summing to one (the reference measure).
    generator : array_like, shape (n, n)
        Rate matrix with nonnegative off-diagonal entries and zero row sums.
        Reversibility ``m(x) L(x,y) = m(y) L(y,x)`` is required.
    edge_lengths : array_like, optional
        Symmetric positive lengths on pairs with ``L(x,y) > 0``.  Defaults to
        length one on every support edge.
    labels : sequence of str, optional
        Per-state names.
    normalize : bool
        If True the measure is rescaled to unit sum before validation.
        Never done implicitly.

    Construction fails loudly on any invariant violation; nothing is repaired
    silently.  Arrays are frozen after validation.
    """

    def __init__(self, measure, generator, edge_lengths=None, labels=None,
                 normalize=False):
        m = np.array(measure, dtype=float)
        L = np.array(generator, dtype=float)
        if m.ndim != 1 or m.size < 2:
            raise TripleValidationError(
                "shape", f"measure must be a vector of length >= 2, got shape {m.shape}")
        n = m.size
        if L.shape != (n, n):
            raise TripleValidationError(
                "shape", f"generator must be {n}x{n}, got {L.shape}")
        if not np.all(np.isfinite(m)) or not np.all(np.isfinite(L)):
            raise TripleValidationError("finiteness", "measure/generator entries must be finite")

        if normalize:
            total = m.sum()
            if total <= 0:
                raise TripleValidationError("measure positivity", "measure sum is not positive")
            m = m / total

        if np.any(m <= 0):
            x = int(np.argmin(m))
            raise TripleValidationError("measure positivity", f"m[{x}] = {m[x]} <= 0")
        if abs(m.sum() - 1.0) > VALIDATION_RTOL:
            raise TripleValidationError(
                "measure normalization",
                f"measure sums to {m.sum()!r}; pass normalize=True to rescale")

        off = L.copy()
        np.fill_diagonal(off, 0.0)
        if np.any(off < 0):
            x, y = np.unravel_index(np.argmin(off), off.shape)
            raise TripleValidationError(
                "generator positivity", f"L[{x},{y}] = {L[x, y]} < 0")
        row = L.sum(axis=1)
        if np.any(np.abs(row) > VALIDATION_RTOL):
            x = int(np.argmax(np.abs(row)))
            raise TripleValidationError(
                "generator conservativity", f"row {x} sums to {row[x]:.3e}")

        flux = m[:, None] * L
        db = np.abs(flux - flux.T)
        db_tol = VALIDATION_RTOL * np.maximum(1.0, np.abs(flux))
        if np.any(db > db_tol):
            x, y = np.unravel_index(np.argmax(db - db_tol), db.shape)
            raise TripleValidationError(
                "detailed balance",
                f"m(x)L(x,y) != m(y)L(y,x) at ({x},{y}): {flux[x, y]!r} vs {flux[y, x]!r}")

        support = off > 0
        ncomp, _ = connected_components(csr_matrix(support), directed=False)
        if ncomp != 1:
            raise TripleValidationError(
                "connectivity", f"support graph has {ncomp} components")

        if edge_lengths is None:
            d = np.where(support, 1.0, 0.0)
        else:
            d = np.array(edge_lengths, dtype=float)
            if d.shape != (n, n):
                raise TripleValidationError(
                    "edge lengths", f"expected {n}x{n} lengths, got {d.shape}")
            if np.any(np.abs(d - d.T) > VALIDATION_RTOL * np.maximum(1.0, np.abs(d))):
                raise TripleValidationError("edge lengths", "length matrix is not symmetric")
            if np.any(support & ~(d > 0)):
                x, y = np.unravel_index(int(np.argmax(support & ~(d > 0))), d.shape)
                raise TripleValidationError(
                    "edge lengths", f"support edge ({x},{y}) has nonpositive length {d[x, y]}")
            d = np.where(support, d, 0.0)

        if labels is not None:
            labels = tuple(str(s) for s in labels)
            if len(labels) != n:
                raise TripleValidationError("labels", f"expected {n} labels, got {len(labels)}")

        self.n = n
        self.m = m
        self.L = L
        self.edge_lengths = d
        self.labels = labels
        self._support = support
        for arr in (self.m, self.L, self.edge_lengths, self._support):
            arr.setflags(write=False)

    @property
    def support(self):
        """Boolean adjacency of the support graph (off-diagonal L > 0)."""
        return self._support

    def neighbors(self, x):
        """Indices y with L(x,y) > 0, ascending."""
        return np.nonzero(self._support[x])[0]

    def __repr__(self):
        return f"MarkovTriple(n={self.n}, edges={int(self._support.sum()) // 2})"


def as_field(triple, values):
    """Validate a scalar field against a triple and return it as a float array."""
    f = np.asarray(values, dtype=float)
    if f.shape != (triple.n,):
        raise FieldMismatchError(
            f"field has shape {f.shape}, triple has {triple.n} states")
    if not np.all(np.isfinite(f)):
        raise FieldMismatchError("field contains non-finite entries")
    return f


def integrate(triple, f):
    """Integral of a field against the reference measure."""
    return float(np.dot(triple.m, as_field(triple, f)))


def l2_norm(triple, f):
    """Norm in L^2 of the reference measure."""
    f = as_field(triple, f)
    return float(np.sqrt(np.dot(triple.m, f * f)))


def _pair_sum(L, f, g):
    # sum_y L(x,y) (f(y)-f(x)) (g(y)-g(x)); difference form for accuracy,
    # product formed first so the result is bitwise symmetric in (f, g)
    n = L.shape[0]
    out = np.empty(n)
    for lo in range(0, n, _BLOCK_ROWS):
        hi = min(lo + _BLOCK_ROWS, n)
        prod = (f[None, :] - f[lo:hi, None]) * (g[None, :] - g[lo:hi, None])
        out[lo:hi] = np.einsum("xy,xy->x", L[lo:hi], prod)
    return out


def gamma(triple, f, g=None):
    """Carre du champ Gamma(f,g)(x) = 1/2 sum_y L(x,y)(f(y)-f(x))(g(y)-g(x)).

    Symmetric and bilinear; ``gamma(t, f)`` is the nonnegative squared
    gradient Gamma(f).  Coincides with 1/2 (L(fg) - f Lg - g Lf) because the
    generator is conservative.
    """
    f = as_field(triple, f)
    g = f if g is None else as_field(triple, g)
    return 0.5 * _pair_sum(triple.L, f, g)


def laplacian(triple, f):
    """Generator applied to a field, Lf."""
    return triple.L @ as_field(triple, f)


def gamma2(triple, f):
    """Pointwise iterated form Gamma_2(f) = 1/2 L(Gamma(f)) - Gamma(f, Lf)."""
    f = as_field(triple, f)
    gf = gamma(triple, f)
    return 0.5 * (triple.L @ gf) - gamma(triple, f, laplacian(triple, f))


def gamma2_bilinear(triple, f, g):
    """Pointwise Gamma_2(f,g) = 1/2 L(Gamma(f,g)) - 1/2 [Gamma(f,Lg) + Gamma(g,Lf)]."""
    f = as_field(triple, f)
    g = as_field(triple, g)
    cross = gamma(triple, f, g)
    return 0.5 * (triple.L @ cross) - 0.5 * (
        gamma(triple, f, laplacian(triple, g)) + gamma(triple, g, laplacian(triple, f)))


def gamma2_weak_form(triple, f, g, phi):
    """Weak trilinear value 1/2 int [Gamma(f,g) Lphi - (Gamma(f,Lg)+Gamma(g,Lf)) phi] dm.

    Equals the integral of the pointwise Gamma_2(f,g) against phi, and obeys
    the polarization identity
    ``gamma2_weak_form(f,g;phi) = 1/4 Q(f+g;phi) - 1/4 Q(f-g;phi)``
    with Q the diagonal form.
    """
    f = as_field(triple, f)
    g = as_field(triple, g)
    phi = as_field(triple, phi)
    first = gamma(triple, f, g) * laplacian(triple, phi)
    second = (gamma(triple, f, laplacian(triple, g))
              + gamma(triple, g, laplacian(triple, f))) * phi
    return 0.5 * float(np.dot(triple.m, first - second))


def cheeger_energy(triple, f):
    """Dirichlet energy 1/2 int Gamma(f) dm; quadratic (parallelogram identity)."""
    return 0.5 * integrate(triple, gamma(triple, f))


def v_norm(triple, f):
    """Form-domain norm sqrt(||f||_{L^2(m)}^2 + 2 Ch(f))."""
    f = as_field(triple, f)
    return float(np.sqrt(np.dot(triple.m, f * f) + 2.0 * cheeger_energy(triple, f)))


def lip_slope(triple, f):
    """Local Lipschitz slope max over neighbors of |f(y)-f(x)| / d(x,y).

    Nonnegative; zero exactly where f agrees with every neighbor.  This is a
    diagnostic companion to sqrt(Gamma(f)); no pointwise relation between
    them is asserted on graphs.
    """
    f = as_field(triple, f)
    n = triple.n
    out = np.empty(n)
    d_safe = np.where(triple._support, triple.edge_lengths, 1.0)
    for lo in range(0, n, _BLOCK_ROWS):
        hi = min(lo + _BLOCK_ROWS, n)
        ratios = np.abs(f[None, :] - f[lo:hi, None]) / d_safe[lo:hi]
        ratios[~triple._support[lo:hi]] = 0.0
        out[lo:hi] = ratios.max(axis=1)
    return out


def path_metric(triple):
    """All-pairs shortest-path distances over the edge lengths."""
    w = csr_matrix(np.where(triple._support, triple.edge_lengths, 0.0))
    return shortest_path(w, directed=False)
