"""Model-space constructors and file serialization for Markov triples.

Builders produce triples that pass full validation with no repair.  The file
format is a three-section human-readable document (metadata, states, edges)
with 17-significant-digit floats so that save/load round-trips bit for bit
on the canonical form.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import TripleFormatError, TripleValidationError
from .triple import MarkovTriple

FORMAT_VERSION = "1"

#: dense spectral work stays manageable up to 2^14 states
MAX_HYPERCUBE_DIM = 14


def build_two_point(rho):
    """Two states exchanging mass at rate rho; uniform measure, unit length.

    The optimal curvature constant of this triple is 2*rho.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    m = np.array([0.5, 0.5])
    L = rho * np.array([[-1.0, 1.0], [1.0, -1.0]])
    return MarkovTriple(m, L, labels=("0", "1"))


def grid_coordinates(n, R):
    """Uniform grid of n points on [-R, R]."""
    return np.linspace(-R, R, n)


def build_ou_chain(n, R):
    """Birth-death discretization of the Gaussian space on [-R, R].

    Grid x_i = -R + i*h with h = 2R/(n-1); weights proportional to
    exp(-x^2/2); nearest-neighbor rates L(i, i+-1) = h^-2 sqrt(m(i+-1)/m(i)),
    realized through the symmetric edge conductance h^-2 sqrt(m(i) m(i+1)) so
    detailed balance is exact at every h.  Consistent with the generator
    f'' - x f' to O(h^2); its optimal curvature constant tends to 1 under
    refinement.
    """
    if n < 3:
        raise ValueError(f"ou_chain needs n >= 3, got {n}")
    if R <= 0:
        raise ValueError(f"R must be positive, got {R}")
    x = grid_coordinates(n, R)
    h = 2.0 * R / (n - 1)
    w = np.exp(-0.5 * x * x)
    m = w / w.sum()
    cond = np.sqrt(m[:-1] * m[1:]) / (h * h)
    L = np.zeros((n, n))
    idx = np.arange(n - 1)
    L[idx, idx + 1] = cond / m[:-1]
    L[idx + 1, idx] = cond / m[1:]
    np.fill_diagonal(L, -L.sum(axis=1))
    d = np.zeros((n, n))
    d[idx, idx + 1] = h
    d[idx + 1, idx] = h
    return MarkovTriple(m, L, edge_lengths=d)


def build_cycle(n, rate=1.0):
    """Cycle on n >= 3 states with uniform measure and a common rate."""
    if n < 3:
        raise ValueError(f"cycle needs n >= 3, got {n}")
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    L = np.zeros((n, n))
    for i in range(n):
        L[i, (i + 1) % n] = rate
        L[i, (i - 1) % n] = rate
    np.fill_diagonal(L, -L.sum(axis=1))
    return MarkovTriple(np.full(n, 1.0 / n), L)


def build_complete(n, rate=1.0):
    """Complete graph on n >= 2 states, uniform measure, common rate."""
    if n < 2:
        raise ValueError(f"complete needs n >= 2, got {n}")
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    L = np.full((n, n), rate)
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return MarkovTriple(np.full(n, 1.0 / n), L)


def build_hypercube(d, rho=1.0):
    """d-fold product of two-point spaces: single-bit flips at rate rho.

    Uniform measure on 2^d states; d=1 reduces exactly to the two-point
    triple.  Tensorization keeps the optimal curvature constant at 2*rho for
    every d.
    """
    if d < 1:
        raise ValueError(f"hypercube needs d >= 1, got {d}")
    if d > MAX_HYPERCUBE_DIM:
        raise ValueError(f"hypercube capped at d <= {MAX_HYPERCUBE_DIM}, got {d}")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    n = 1 << d
    L = np.zeros((n, n))
    for i in range(n):
        for k in range(d):
            L[i, i ^ (1 << k)] = rho
    np.fill_diagonal(L, -L.sum(axis=1))
    labels = tuple(format(i, f"0{d}b") for i in range(n))
    return MarkovTriple(np.full(n, 1.0 / n), L, labels=labels)


_MODELS = ("two_point", "ou_chain", "cycle", "complete", "hypercube", "file")


@dataclass(frozen=True)
class SpaceSpec:
    """Declarative description of a model space or a space file."""

    model: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in _MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {_MODELS}")

    def build(self, normalize=False):
        p = self.params
        if self.model == "two_point":
            return build_two_point(float(p.get("rho", 1.0)))
        if self.model == "ou_chain":
            return build_ou_chain(int(p["n"]), float(p["R"]))
        if self.model == "cycle":
            return build_cycle(int(p["n"]), float(p.get("rate", 1.0)))
        if self.model == "complete":
            return build_complete(int(p["n"]), float(p.get("rate", 1.0)))
        if self.model == "hypercube":
            return build_hypercube(int(p["d"]), float(p.get("rho", 1.0)))
        return load_triple(p["path"], normalize=normalize)


def _fmt(v):
    # 17 significant digits: lossless for IEEE doubles
    return f"{v:.16e}"


def save_triple(triple, path, metadata=None):
    """Write a triple in canonical form (states ascending, edges i < j)."""
    lines = ["[metadata]", f"format_version = {FORMAT_VERSION}"]
    for key in sorted(metadata or {}):
        lines.append(f"{key} = {metadata[key]}")
    lines.append("[states]")
    for i in range(triple.n):
        row = f"{i} {_fmt(triple.m[i])}"
        if triple.labels is not None:
            row += f" {triple.labels[i]}"
        lines.append(row)
    lines.append("[edges]")
    ii, jj = np.nonzero(np.triu(triple.support))
    for i, j in zip(ii.tolist(), jj.tolist()):
        lines.append(f"{i} {j} {_fmt(triple.L[i, j])} {_fmt(triple.L[j, i])} "
                     f"{_fmt(triple.edge_lengths[i, j])}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_triple(path, normalize=False):
    """Parse a space file, validate every invariant, return the triple.

    Raises TripleFormatError with line context on malformed input and
    TripleValidationError (named invariant) on structurally invalid data.
    """
    triple, _ = load_triple_with_metadata(path, normalize=normalize)
    return triple


def load_triple_with_metadata(path, normalize=False):
    if not os.path.exists(path):
        raise TripleFormatError(path, 0, "no such file")
    section = None
    metadata = {}
    states = {}
    labels = {}
    edges = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                if line not in ("[metadata]", "[states]", "[edges]"):
                    raise TripleFormatError(path, line_no, f"unknown section {line}")
                section = line[1:-1]
                continue
            if section == "metadata":
                if "=" not in line:
                    raise TripleFormatError(path, line_no, "expected 'key = value'")
                key, _, value = line.partition("=")
                metadata[key.strip()] = value.strip()
            elif section == "states":
                parts = line.split(None, 2)
                if len(parts) < 2:
                    raise TripleFormatError(path, line_no, "expected 'id measure [label]'")
                try:
                    i = int(parts[0])
                    states[i] = float(parts[1])
                except ValueError as exc:
                    raise TripleFormatError(path, line_no, f"bad state row: {exc}") from None
                if len(parts) == 3:
                    labels[i] = parts[2]
            elif section == "edges":
                parts = line.split()
                if len(parts) not in (4, 5):
                    raise TripleFormatError(
                        path, line_no, "expected 'i j rate_ij rate_ji [length]'")
                try:
                    i, j = int(parts[0]), int(parts[1])
                    rij, rji = float(parts[2]), float(parts[3])
                    length = float(parts[4]) if len(parts) == 5 else 1.0
                except ValueError as exc:
                    raise TripleFormatError(path, line_no, f"bad edge row: {exc}") from None
                edges.append((line_no, i, j, rij, rji, length))
            else:
                raise TripleFormatError(path, line_no, "content before any section header")

    if not states:
        raise TripleFormatError(path, 0, "no [states] section")
    n = len(states)
    if sorted(states) != list(range(n)):
        raise TripleFormatError(path, 0, f"state ids must be 0..{n - 1} without gaps")
    m = np.array([states[i] for i in range(n)])
    L = np.zeros((n, n))
    d = np.zeros((n, n))
    for line_no, i, j, rij, rji, length in edges:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise TripleFormatError(path, line_no, f"edge ({i},{j}) out of range")
        L[i, j] = rij
        L[j, i] = rji
        d[i, j] = d[j, i] = length
    np.fill_diagonal(L, -L.sum(axis=1))
    lab = tuple(labels.get(i, str(i)) for i in range(n)) if labels else None
    triple = MarkovTriple(m, L, edge_lengths=d, labels=lab, normalize=normalize)
    return triple, metadata


def model_metadata(spec):
    """Metadata block recording how a model space was built."""
    md = {"model": spec.model}
    for k in sorted(spec.params):
        md[k] = str(spec.params[k])
    return md
