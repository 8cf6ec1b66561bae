"""Batch experiment runner: build a space, run checks, emit report tables.

A run is described by a declarative config (same section format as the space
files).  Every check yields rows with a fixed column order
(check, state, time, margin, lhs, rhs) and one or more sub-assertions; the
assertion policy below decides which sub-margins are asserted for a given
space model and which are merely reported.  Identical config and seed give
byte-identical tables, with or without worker fan-out.
"""

from __future__ import annotations

import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .curvature import be_diagnostics, curvature_at_bruteforce, curvature_global
from .errors import ConfigError, TripleFormatError
from .gauss import profile_value
from .semigroup import (build_cache, gradient_estimate_margin, heat,
                        variance_regularization_margin)
from .spaces import SpaceSpec, grid_coordinates, load_triple_with_metadata
from .triple import gamma, integrate
from .verifiers import (IntervalUnion, bobkov_global, bobkov_local,
                        gaussian_interval_oracle, isoperimetric_margin,
                        phi_trace, sigmoid_family, truncate,
                        two_point_bobkov_margin, zeta_report)

CHECK_NAMES = ("curvature", "gradient-estimate", "variance-bound",
               "be-diagnostics", "bobkov-local", "bobkov-global",
               "two-point-grid", "phi-trace", "zeta", "isoperimetry",
               "gauss-oracle")

WORKERS_ENV_VAR = "GAMMALAB_WORKERS"

TABLE_COLUMNS = ("check", "state", "time", "margin", "lhs", "rhs")

#: checks whose principal assertion only makes sense on specific models
_MAIN_ASSERTABLE_MODELS = {
    "bobkov-local": {"ou_chain"},
    "phi-trace": {"ou_chain"},
    "zeta": {"ou_chain"},
    "isoperimetry": {"ou_chain"},
    "bobkov-global": {"ou_chain", "two_point"},
    "be-diagnostics": {"ou_chain"},
}


@dataclass(frozen=True)
class Row:
    check: str
    state: int | None
    time: float | None
    margin: float
    lhs: float | None = None
    rhs: float | None = None


@dataclass(frozen=True)
class SubResult:
    label: str
    margin: float
    tolerance: float
    asserted: bool

    @property
    def passed(self):
        return bool(self.margin <= self.tolerance)


@dataclass
class CheckOutcome:
    name: str
    params: dict
    subresults: list
    rows: list
    skipped: bool = False
    note: str = ""

    @property
    def asserted(self):
        return any(s.asserted for s in self.subresults)

    @property
    def passed(self):
        return all(s.passed for s in self.subresults if s.asserted)

    @property
    def status(self):
        if self.skipped:
            return "skipped"
        if not self.asserted:
            return "reported"
        return "pass" if self.passed else "fail"


@dataclass
class CheckRequest:
    name: str
    params: dict = field(default_factory=dict)
    mode: str | None = None  # None = policy default, else "assert"/"report"


@dataclass
class ExperimentConfig:
    space: SpaceSpec
    checks: list
    out_dir: str = "gammalab-out"
    fmt: str = "csv"
    seed: int = 0
    tolerance_scale: float = 1.0
    workers: int | None = None


def _section_lines(path):
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield line_no, line


def parse_config(path):
    """Read a run config; raises ConfigError with path and field context."""
    if not os.path.exists(path):
        raise ConfigError(f"{path}: no such config file")
    space_kv = {}
    output_kv = {}
    checks = []
    current = None
    for line_no, line in _section_lines(path):
        if line.startswith("["):
            header = line.strip("[]").strip()
            if header == "space":
                current = space_kv
            elif header == "output":
                current = output_kv
            elif header.startswith("check"):
                name = header[len("check"):].strip()
                if name not in CHECK_NAMES:
                    raise ConfigError(f"{path}:{line_no}: unknown check {name!r}")
                checks.append(CheckRequest(name=name))
                current = checks[-1].params
            else:
                raise ConfigError(f"{path}:{line_no}: unknown section [{header}]")
            continue
        if current is None or "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value' inside a section")
        key, _, value = line.partition("=")
        current[key.strip()] = value.strip()
    if not space_kv:
        raise ConfigError(f"{path}: missing [space] section")
    model = space_kv.pop("model", None)
    if model is None:
        raise ConfigError(f"{path}: [space] section needs a 'model' key")
    try:
        spec = SpaceSpec(model=model, params=space_kv)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for req in checks:
        mode = req.params.pop("mode", None)
        if mode is not None:
            if mode not in ("assert", "report"):
                raise ConfigError(f"{path}: check {req.name}: mode must be assert or report")
            req.mode = mode
    cfg = ExperimentConfig(space=spec, checks=checks)
    if "dir" in output_kv:
        cfg.out_dir = output_kv.pop("dir")
    if "format" in output_kv:
        fmt = output_kv.pop("format")
        if fmt not in ("csv", "json-lines"):
            raise ConfigError(f"{path}: format must be csv or json-lines, got {fmt!r}")
        cfg.fmt = fmt
    if "seed" in output_kv:
        cfg.seed = int(output_kv.pop("seed"))
    if "tolerance_scale" in output_kv:
        cfg.tolerance_scale = float(output_kv.pop("tolerance_scale"))
    if output_kv:
        raise ConfigError(f"{path}: unknown [output] keys: {sorted(output_kv)}")
    return cfg


def _floats(value, default):
    if value is None:
        return list(default)
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(tok) for tok in str(value).split(",") if tok.strip()]


def _alphas(value, default=("0", "auto")):
    if value is None:
        return list(default)
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [tok.strip() for tok in str(value).split(",") if tok.strip()]


class RunContext:
    """Lazily shared space, spectral cache, and curvature report."""

    def __init__(self, spec, tolerance_scale=1.0):
        self.spec = spec
        self.tolerance_scale = tolerance_scale
        self._lock = threading.Lock()
        self._triple = None
        self._cache = None
        self._curvature = None

    @property
    def model(self):
        return self.spec.model

    @property
    def triple(self):
        with self._lock:
            if self._triple is None:
                self._triple = self.spec.build()
            return self._triple

    @property
    def cache(self):
        triple = self.triple
        with self._lock:
            if self._cache is None:
                self._cache = build_cache(triple)
            return self._cache

    @property
    def curvature(self):
        triple = self.triple
        with self._lock:
            if self._curvature is None:
                self._curvature = curvature_global(triple)
            return self._curvature

    def constant(self, params):
        if "K" in params:
            return float(params["K"])
        return self.curvature.k_global

    def coordinates(self):
        if self.model == "ou_chain":
            return grid_coordinates(int(self.spec.params["n"]),
                                    float(self.spec.params["R"]))
        return np.linspace(0.0, 1.0, self.triple.n)

    def probe_fields(self, rng, count, smooth=0.3):
        """Smoothed random [0,1] fields, plus shallow sigmoids on chains."""
        fields = []
        if self.model == "ou_chain":
            fields.extend(sigmoid_family(self.coordinates())[:5])
        while len(fields) < count:
            fields.append(heat(self.cache, rng.uniform(0.0, 1.0, self.triple.n),
                               smooth))
        return fields[:count]


def _expected_constant(spec):
    if spec.model == "two_point":
        return 2.0 * float(spec.params.get("rho", 1.0))
    if spec.model == "hypercube":
        return 2.0 * float(spec.params.get("rho", 1.0))
    return None


def _check_curvature(ctx, params, asserted, rng):
    tol = float(params.get("tolerance", 1e-8))
    rep = ctx.curvature
    rows = [Row("curvature", x, None, float(rep.k_per_state[x]),
                float(rep.k_per_state[x]), None)
            for x in range(ctx.triple.n)]
    subs = []
    expected = _expected_constant(ctx.spec)
    if rep.degenerate:
        subs.append(SubResult("finite", math.inf, 0.0, asserted))
    elif expected is not None:
        subs.append(SubResult("matches-closed-form",
                              abs(rep.k_global - expected), tol, asserted))
    elif ctx.model == "ou_chain":
        subs.append(SubResult("continuum-convergence",
                              abs(rep.k_global - 1.0),
                              float(params.get("tolerance", 0.05)), asserted))
    elif ctx.triple.n <= 12:
        brute = min(curvature_at_bruteforce(ctx.triple, x, seed=x)
                    for x in range(ctx.triple.n))
        subs.append(SubResult("matches-brute-force",
                              abs(rep.k_global - brute), tol, asserted))
    else:
        subs.append(SubResult("computed", -math.inf, math.inf, False))
    return CheckOutcome("curvature", {"K*": rep.k_global, **params},
                        subs, rows)


def _flow_campaign(ctx, params, rng, margin_fn, name):
    times = _floats(params.get("t"), (0.1, 0.5, 1.0, 2.0))
    samples = int(params.get("samples", 100))
    K = ctx.constant(params)
    worst_rows = []
    worst = -math.inf
    for t in times:
        t_worst = (-math.inf, None)
        for _ in range(samples):
            f = rng.standard_normal(ctx.triple.n)
            m = margin_fn(ctx.cache, f, t, K)
            if m > t_worst[0]:
                t_worst = (m, f)
        worst_rows.append(Row(name, None, float(t), float(t_worst[0])))
        worst = max(worst, t_worst[0])
    return worst_rows, worst, K


def _check_gradient_estimate(ctx, params, asserted, rng):
    tol = float(params.get("tolerance", 1e-9))
    rows, worst, K = _flow_campaign(ctx, params, rng, gradient_estimate_margin,
                                    "gradient-estimate")
    subs = [SubResult("flow-domination", worst, tol, asserted)]
    return CheckOutcome("gradient-estimate", {"K": K, **params}, subs, rows)


def _check_variance_bound(ctx, params, asserted, rng):
    tol = float(params.get("tolerance", 1e-9))
    rows, worst, K = _flow_campaign(ctx, params, rng,
                                    variance_regularization_margin,
                                    "variance-bound")
    subs = [SubResult("variance-domination", worst, tol, asserted)]
    return CheckOutcome("variance-bound", {"K": K, **params}, subs, rows)


def _check_be_diagnostics(ctx, params, asserted, rng):
    samples = int(params.get("samples", 10))
    K = ctx.constant(params)
    mass_tol = float(params.get("mass_tolerance", 1e-10))
    rel_tol = float(params.get("self_improvement_tolerance", 5e-2))
    g3_tol = float(params.get("g3_tolerance", 1e-6))
    diffusion = ctx.model in _MAIN_ASSERTABLE_MODELS["be-diagnostics"]
    fields = ctx.probe_fields(rng, samples)
    worst_mass = worst_g3 = worst_si = -math.inf
    for f in fields:
        d = be_diagnostics(ctx.triple, f, K)
        lf2 = integrate(ctx.triple, np.square(ctx.triple.L @ f))
        worst_mass = max(worst_mass, d.mass_identity_residual / max(1.0, lf2))
        worst_g3 = max(worst_g3, d.g3_margin)
        scale = float(np.abs(gamma(ctx.triple, f)).max()) ** 2
        worst_si = max(worst_si, d.self_improvement_margin / max(scale, 1e-300))
    rows = [Row("be-diagnostics.mass-identity", None, None, worst_mass),
            Row("be-diagnostics.g3", None, None, worst_g3),
            Row("be-diagnostics.self-improvement", None, None, worst_si)]
    subs = [SubResult("mass-identity", worst_mass, mass_tol, asserted),
            SubResult("g3", worst_g3, g3_tol, asserted and diffusion),
            SubResult("self-improvement", worst_si, rel_tol,
                      asserted and diffusion)]
    return CheckOutcome("be-diagnostics", {"K": K, **params}, subs, rows)


def _check_bobkov_local(ctx, params, asserted, rng):
    K = ctx.constant(params)
    eps = float(params.get("eps", 1e-4))
    times = _floats(params.get("t"), (0.1, 0.5, 1.0))
    tol = float(params.get("tolerance", 5e-3))
    alphas = _alphas(params.get("alpha"))
    on_chain = ctx.model in _MAIN_ASSERTABLE_MODELS["bobkov-local"]
    if on_chain:
        fields = sigmoid_family(ctx.coordinates())
    else:
        fields = [rng.uniform(0.0, 1.0, ctx.triple.n)
                  for _ in range(int(params.get("samples", 10)))]
    rows = []
    worst = -math.inf
    worst_t0 = -math.inf
    for token in alphas:
        alpha = 1.0 / K if token == "auto" else float(token)
        label = f"bobkov-local[alpha={token}]"
        per_time = {}
        for f in fields:
            rep = bobkov_local(ctx.cache, f, alpha, K, [0.0] + times, eps=eps)
            worst_t0 = max(worst_t0, rep.summary["per_time_worst"][0.0])
            for t, m in rep.summary["per_time_worst"].items():
                if t > 0.0:
                    per_time[t] = max(per_time.get(t, -math.inf), m)
        for t in times:
            rows.append(Row(label, None, float(t), per_time[t]))
            worst = max(worst, per_time[t])
    rows.append(Row("bobkov-local.t0", None, 0.0, worst_t0))
    subs = [SubResult("interpolation", worst, tol, asserted and on_chain),
            SubResult("t0-exactness", worst_t0,
                      float(params.get("t0_tolerance", 1e-12)), asserted)]
    return CheckOutcome("bobkov-local", {"K": K, "eps": eps, **params}, subs, rows)


def _check_bobkov_global(ctx, params, asserted, rng):
    K = ctx.constant(params)
    rows = []
    subs = []
    if ctx.model == "two_point":
        steps = int(params.get("grid", 201))
        tol = float(params.get("tolerance", 1e-12))
        a, b = np.meshgrid(np.linspace(0, 1, steps), np.linspace(0, 1, steps))
        margins = two_point_bobkov_margin(a.ravel(), b.ravel()) * math.sqrt(K)
        worst = float(margins.max())
        rows.append(Row("bobkov-global.grid", None, None, worst))
        subs.append(SubResult("grid-nonpositive", worst, tol, asserted))
    else:
        on_chain = ctx.model == "ou_chain"
        tol = float(params.get("tolerance", 1e-3))
        fields = ctx.probe_fields(rng, int(params.get("samples", 10)))
        worst = -math.inf
        for i, f in enumerate(fields):
            rep = bobkov_global(ctx.triple, np.clip(f, 0.0, 1.0), K)
            rows.append(Row(f"bobkov-global[f={i}]", None, None,
                            rep.worst_margin, rep.summary["lhs"],
                            rep.summary["rhs"]))
            worst = max(worst, rep.worst_margin)
        subs.append(SubResult("functional", worst, tol, asserted and on_chain))
    return CheckOutcome("bobkov-global", {"K": K, **params}, subs, rows)


def _check_two_point_grid(ctx, params, asserted, rng):
    steps = int(params.get("grid", 201))
    tol = float(params.get("tolerance", 1e-12))
    grid = np.linspace(0.0, 1.0, steps)
    a, b = np.meshgrid(grid, grid)
    margins = two_point_bobkov_margin(a.ravel(), b.ravel())
    worst = float(margins.max())
    lowest = float(margins.min())
    rows = [Row("two-point-grid.worst", None, None, worst),
            Row("two-point-grid.min", None, None, lowest)]
    subs = [SubResult("nonpositive", worst, tol, asserted),
            SubResult("equality-attained", -worst, tol, asserted)]
    if ctx.model == "two_point":
        rho = float(ctx.spec.params.get("rho", 1.0))
        sub_grid = np.linspace(0.0, 1.0, 21)
        eq_worst = 0.0
        for av in sub_grid:
            for bv in sub_grid:
                rep = bobkov_global(ctx.triple, np.array([av, bv]), 2.0 * rho)
                closed = two_point_bobkov_margin(av, bv) * math.sqrt(2.0 * rho)
                eq_worst = max(eq_worst, abs(rep.worst_margin - closed))
        rows.append(Row("two-point-grid.equivalence", None, None, eq_worst))
        subs.append(SubResult("equivalence", eq_worst, tol, asserted))
    return CheckOutcome("two-point-grid", dict(params), subs, rows)


def _check_phi_trace(ctx, params, asserted, rng):
    K = ctx.constant(params)
    T = float(params.get("T", 1.0))
    alpha = (1.0 / K if params.get("alpha", "auto") == "auto"
             else float(params["alpha"]))
    eps = float(params.get("eps", 1e-4))
    count = int(params.get("grid", 25))
    tol = float(params.get("tolerance", 1e-4))
    end_tol = float(params.get("endpoint_tolerance", 1e-10))
    on_chain = ctx.model in _MAIN_ASSERTABLE_MODELS["phi-trace"]
    fields = ctx.probe_fields(rng, int(params.get("samples", 3)))
    grid = np.linspace(0.02 * T, 0.98 * T, count)
    phi = np.ones(ctx.triple.n)
    worst_deriv = -math.inf
    worst_end = -math.inf
    rows = []
    for i, raw in enumerate(fields):
        f = truncate(np.clip(raw, 0.0, 1.0), eps)
        tr = phi_trace(ctx.cache, f, phi, T, alpha, K, grid)
        end = abs(tr.endpoint_lhs - tr.endpoint_rhs) / max(
            1.0, abs(tr.endpoint_lhs))
        worst_end = max(worst_end, end)
        ts, margins = tr.derivative_margins()
        deriv = float((-margins).max()) if margins.size else -math.inf
        worst_deriv = max(worst_deriv, deriv)
        rows.append(Row(f"phi-trace.derivative[f={i}]", None, None, deriv))
        rows.append(Row(f"phi-trace.endpoint[f={i}]", None, None, end,
                        tr.endpoint_lhs, tr.endpoint_rhs))
    subs = [SubResult("endpoint-identity", worst_end, end_tol, asserted),
            SubResult("derivative-bound", worst_deriv, tol,
                      asserted and on_chain)]
    return CheckOutcome("phi-trace", {"K": K, "alpha": alpha, "T": T, **params},
                        subs, rows)


def _check_zeta(ctx, params, asserted, rng):
    K = ctx.constant(params)
    T = float(params.get("T", 1.0))
    alpha = (1.0 / K if params.get("alpha", "auto") == "auto"
             else float(params["alpha"]))
    eps = float(params.get("eps", 1e-4))
    times = _floats(params.get("t"), (0.25, 0.5, 0.75))
    tol = float(params.get("tolerance", 5e-3))
    agree_tol = float(params.get("agreement_tolerance", 1e-10))
    on_chain = ctx.model in _MAIN_ASSERTABLE_MODELS["zeta"]
    fields = ctx.probe_fields(rng, int(params.get("samples", 5)))
    worst_neg = -math.inf
    worst_agree = -math.inf
    rows = []
    for t in times:
        neg_t = -math.inf
        agree_t = -math.inf
        exceptional = 0
        for raw in fields:
            f = truncate(np.clip(raw, 0.0, 1.0), eps)
            zr = zeta_report(ctx.cache, f, T, t, alpha, K)
            neg_t = max(neg_t, float(-zr.values.min()))
            exceptional += int(zr.exceptional_states.size)
            scale = np.maximum(1.0, np.maximum(np.abs(zr.six_term),
                                               np.abs(zr.closed_form)))
            agree_t = max(agree_t, float(
                (np.abs(zr.six_term - zr.closed_form) / scale).max()))
        rows.append(Row("zeta.negativity", None, float(t), neg_t))
        rows.append(Row("zeta.agreement", None, float(t), agree_t))
        rows.append(Row("zeta.exceptional-states", None, float(t),
                        float(exceptional)))
        worst_neg = max(worst_neg, neg_t)
        worst_agree = max(worst_agree, agree_t)
    subs = [SubResult("two-formula-agreement", worst_agree, agree_tol, asserted),
            SubResult("nonnegativity", worst_neg, tol, asserted and on_chain)]
    return CheckOutcome("zeta", {"K": K, "alpha": alpha, "T": T, **params},
                        subs, rows)


def _check_isoperimetry(ctx, params, asserted, rng):
    K = ctx.constant(params)
    tol = float(params.get("tolerance", 2e-2))
    on_chain = ctx.model in _MAIN_ASSERTABLE_MODELS["isoperimetry"]
    rows = []
    worst = -math.inf
    if on_chain:
        coords = ctx.coordinates()
        cuts = _floats(params.get("cuts"), (-2.0, -1.0, 0.0, 1.0, 2.0))
        for r in cuts:
            idx = np.nonzero(coords < r)[0]
            rep = isoperimetric_margin(ctx.triple, idx, K)
            rel = rep.worst_margin / max(rep.summary["perimeter"], 1e-300)
            rows.append(Row(f"isoperimetry[r={r:g}]", None, None, rel,
                            rep.worst_margin, rep.summary["perimeter"]))
            worst = max(worst, rel)
    else:
        for i in range(int(params.get("samples", 8))):
            size = int(rng.integers(1, ctx.triple.n))
            idx = rng.choice(ctx.triple.n, size=size, replace=False)
            rep = isoperimetric_margin(ctx.triple, np.sort(idx), K)
            rel = rep.worst_margin / max(rep.summary["perimeter"], 1e-300)
            rows.append(Row(f"isoperimetry[sample={i}]", None, None, rel,
                            rep.worst_margin, rep.summary["perimeter"]))
            worst = max(worst, rel)
    subs = [SubResult("profile-lower-bound", worst, tol, asserted and on_chain)]
    return CheckOutcome("isoperimetry", {"K": K, **params}, subs, rows)


def _check_gauss_oracle(ctx, params, asserted, rng):
    tol = float(params.get("tolerance", 1e-12))
    rows = []
    if "intervals" in params:
        unions = [IntervalUnion.from_string(str(params["intervals"]))]
    else:
        unions = []
        for _ in range(int(params.get("samples", 200))):
            k = int(rng.integers(1, 4))
            pts = np.sort(rng.normal(0.0, 2.0, 2 * k))
            unions.append(IntervalUnion.of(list(zip(pts[0::2], pts[1::2]))))
    worst_bound = -math.inf
    for i, u in enumerate(unions):
        mass, per = gaussian_interval_oracle(u)
        margin = profile_value(min(max(mass, 0.0), 1.0)) - per
        rows.append(Row(f"gauss-oracle[{i}]", None, None, margin, mass, per))
        worst_bound = max(worst_bound, margin)
    halfline_worst = -math.inf
    for r in np.linspace(-4.0, 4.0, 17):
        mass, per = gaussian_interval_oracle(IntervalUnion.of([(-math.inf, r)]))
        halfline_worst = max(halfline_worst, abs(per - profile_value(mass)))
    rows.append(Row("gauss-oracle.halfline", None, None, halfline_worst))
    subs = [SubResult("halfline-equality", halfline_worst, tol, asserted),
            SubResult("profile-lower-bound", worst_bound, tol, asserted)]
    return CheckOutcome("gauss-oracle", dict(params), subs, rows)


_CHECK_FUNCS = {
    "curvature": _check_curvature,
    "gradient-estimate": _check_gradient_estimate,
    "variance-bound": _check_variance_bound,
    "be-diagnostics": _check_be_diagnostics,
    "bobkov-local": _check_bobkov_local,
    "bobkov-global": _check_bobkov_global,
    "two-point-grid": _check_two_point_grid,
    "phi-trace": _check_phi_trace,
    "zeta": _check_zeta,
    "isoperimetry": _check_isoperimetry,
    "gauss-oracle": _check_gauss_oracle,
}

_NEEDS_CONSTANT = {"gradient-estimate", "variance-bound", "be-diagnostics",
                   "bobkov-local", "bobkov-global", "phi-trace", "zeta",
                   "isoperimetry"}


def validate_requests(config):
    """Refuse configs that assert a check on an incompatible space."""
    for req in config.checks:
        if req.name not in CHECK_NAMES:
            raise ConfigError(f"unknown check {req.name!r}")
        restricted = _MAIN_ASSERTABLE_MODELS.get(req.name)
        if (req.mode == "assert" and restricted is not None
                and config.space.model not in restricted):
            raise ConfigError(
                f"check/space incompatibility: {req.name} cannot be asserted "
                f"on model {config.space.model!r}")


def _default_asserted(name, model):
    restricted = _MAIN_ASSERTABLE_MODELS.get(name)
    if name in ("bobkov-local", "phi-trace", "zeta", "be-diagnostics"):
        # these carry sub-assertions valid on every space
        return True
    if restricted is None:
        return True
    return model in restricted


def _apply_scale(outcome, scale):
    if scale == 1.0:
        return outcome
    rescaled = [
        SubResult(s.label, s.margin,
                  s.tolerance if s.asserted else s.tolerance * scale,
                  s.asserted)
        for s in outcome.subresults]
    outcome.subresults = rescaled
    return outcome


def run_checks(config):
    """Execute every requested check; deterministic given config and seed."""
    validate_requests(config)
    ctx = RunContext(config.space, config.tolerance_scale)
    workers = config.workers
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV_VAR, os.cpu_count() or 1))
    workers = max(1, workers)

    def one(idx_req):
        idx, req = idx_req
        rng = np.random.default_rng([config.seed, idx])
        asserted = (req.mode != "report" and
                    (req.mode == "assert" or
                     _default_asserted(req.name, ctx.model)))
        if req.name in _NEEDS_CONSTANT and "K" not in req.params:
            if ctx.curvature.degenerate:
                return CheckOutcome(req.name, dict(req.params), [], [],
                                    skipped=True,
                                    note="curvature flagged NEG_INF")
        outcome = _CHECK_FUNCS[req.name](ctx, req.params, asserted, rng)
        return _apply_scale(outcome, config.tolerance_scale)

    items = list(enumerate(config.checks))
    if workers == 1 or len(items) <= 1:
        outcomes = [one(it) for it in items]
    else:
        # run cells concurrently, merge strictly in config order
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, items))
    return outcomes


def _fmt_num(v):
    if v is None:
        return ""
    if isinstance(v, float) and math.isinf(v):
        return "NEG_INF" if v < 0 else "POS_INF"
    if isinstance(v, float):
        return f"{v:.11e}"
    return str(v)


def rows_to_csv(rows):
    lines = [",".join(TABLE_COLUMNS)]
    for r in rows:
        lines.append(",".join([
            r.check,
            "" if r.state is None else str(r.state),
            _fmt_num(r.time), _fmt_num(r.margin),
            _fmt_num(r.lhs), _fmt_num(r.rhs)]))
    return "\n".join(lines) + "\n"


def rows_to_jsonl(rows):
    out = []
    for r in rows:
        obj = {"check": r.check,
               "state": r.state,
               "time": None if r.time is None else _fmt_num(r.time),
               "margin": _fmt_num(r.margin),
               "lhs": None if r.lhs is None else _fmt_num(r.lhs),
               "rhs": None if r.rhs is None else _fmt_num(r.rhs)}
        out.append(json.dumps(obj, separators=(",", ":")))
    return "\n".join(out) + "\n"


def summary_dict(config, outcomes):
    return {
        "version": __version__,
        "seed": config.seed,
        "format": config.fmt,
        "tolerance_scale": config.tolerance_scale,
        "space": {"model": config.space.model,
                  "params": {k: str(v) for k, v in config.space.params.items()}},
        "checks": [
            {"name": o.name,
             "status": o.status,
             "note": o.note,
             "params": {k: _fmt_num(v) if isinstance(v, float) else str(v)
                        for k, v in o.params.items()},
             "subresults": [
                 {"label": s.label, "margin": _fmt_num(s.margin),
                  "tolerance": _fmt_num(s.tolerance),
                  "asserted": s.asserted, "passed": s.passed}
                 for s in o.subresults]}
            for o in outcomes],
    }


def write_outputs(config, outcomes):
    """Write the summary and the per-check table; returns the table path."""
    os.makedirs(config.out_dir, exist_ok=True)
    rows = [r for o in outcomes for r in o.rows]
    if config.fmt == "csv":
        table_path = os.path.join(config.out_dir, "checks.csv")
        payload = rows_to_csv(rows)
    else:
        table_path = os.path.join(config.out_dir, "checks.jsonl")
        payload = rows_to_jsonl(rows)
    with open(table_path, "w") as fh:
        fh.write(payload)
    summary_path = os.path.join(config.out_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary_dict(config, outcomes), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return table_path


def exit_code(outcomes):
    return 1 if any(o.status == "fail" for o in outcomes) else 0


def read_table(path):
    """Parse a checks table written by ``write_outputs`` back into rows."""
    rows = []

    def parse_num(tok):
        if tok in ("", None):
            return None
        if tok == "NEG_INF":
            return -math.inf
        if tok == "POS_INF":
            return math.inf
        return float(tok)

    with open(path) as fh:
        if path.endswith(".jsonl"):
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                rows.append(Row(obj["check"],
                                obj["state"],
                                parse_num(obj["time"]),
                                parse_num(obj["margin"]),
                                parse_num(obj["lhs"]),
                                parse_num(obj["rhs"])))
        else:
            header = fh.readline()
            if header.strip() != ",".join(TABLE_COLUMNS):
                raise TripleFormatError(path, 1, "not a checks table")
            for line in fh:
                parts = line.rstrip("\n").split(",")
                if len(parts) != 6:
                    continue
                rows.append(Row(parts[0],
                                int(parts[1]) if parts[1] else None,
                                parse_num(parts[2]),
                                parse_num(parts[3]),
                                parse_num(parts[4]),
                                parse_num(parts[5])))
    return rows
