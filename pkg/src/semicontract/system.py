"""Switched-system model: modes with symbolic Jacobians, box domains, sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .expr import (
    Expr,
    EvaluationError,
    differentiate,
    evaluate_checked,
    parse_expr,
    to_python_source,
)


class ConfigError(ValueError):
    """Invalid system configuration document."""


@dataclass(frozen=True)
class Mode:
    """One mode of the switched system: vector field plus symbolic Jacobian."""

    id: int
    field_exprs: tuple[Expr, ...]
    jacobian_exprs: tuple[tuple[Expr, ...], ...]

    @property
    def dimension(self) -> int:
        return len(self.field_exprs)


def make_mode(mode_id: int, field_exprs) -> Mode:
    """Build a mode, differentiating the field symbolically."""
    if mode_id < 1:
        raise ValueError("mode ids are positive integers")
    exprs = tuple(field_exprs)
    n = len(exprs)
    jac = tuple(
        tuple(differentiate(exprs[i], j + 1) for j in range(n)) for i in range(n)
    )
    return Mode(mode_id, exprs, jac)


def eval_field(mode: Mode, x) -> np.ndarray:
    """Vector field at a point (n,) or batch (m, n)."""
    x = _check_point(x, mode.dimension)
    rows = [np.broadcast_to(evaluate_checked(e, x), x.shape[:-1]) for e in mode.field_exprs]
    return np.stack(rows, axis=-1)


def eval_jacobian(mode: Mode, x) -> np.ndarray:
    """Jacobian at a point, shape (n, n); for a batch (m, n) returns (m, n, n)."""
    x = _check_point(x, mode.dimension)
    n = mode.dimension
    rows = []
    for i in range(n):
        cols = [
            np.broadcast_to(evaluate_checked(mode.jacobian_exprs[i][j], x), x.shape[:-1])
            for j in range(n)
        ]
        rows.append(np.stack(cols, axis=-1))
    return np.stack(rows, axis=-2)


def _check_point(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError(f"point has dimension {x.shape[-1]}, expected {n}")
    if not np.all(np.isfinite(x)):
        raise EvaluationError("evaluation point is not finite")
    return x


@lru_cache(maxsize=64)
def compiled_field(mode: Mode):
    """Fast scalar evaluator x -> ndarray(n,) for the mode's vector field.
    Generated from the symbolic field; equality with eval_field is under test."""
    import math  # noqa: F401 - bound into the compiled namespace

    n = mode.dimension
    body = ", ".join(to_python_source(e) for e in mode.field_exprs)
    fn = eval(f"lambda x: ({body}{',' if n == 1 else ''})", {"math": math})
    return lambda x: np.array(fn(x))


@lru_cache(maxsize=64)
def compiled_jacobian(mode: Mode):
    """Fast scalar evaluator x -> ndarray(n, n) for the mode's Jacobian."""
    n = mode.dimension
    rows = ", ".join(
        "(" + ", ".join(to_python_source(e) for e in row) + ("," if n == 1 else "") + ")"
        for row in mode.jacobian_exprs
    )
    fn = eval(f"lambda x: ({rows}{',' if n == 1 else ''})", {"math": math})
    return lambda x: np.array(fn(x))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with per-axis [lo, hi]."""

    lows: tuple[float, ...]
    highs: tuple[float, ...]

    def __post_init__(self):
        if len(self.lows) != len(self.highs):
            raise ValueError("lows and highs must have the same length")
        for lo, hi in zip(self.lows, self.highs):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError(f"empty or unbounded axis [{lo}, {hi}]")

    @property
    def dimension(self) -> int:
        return len(self.lows)

    def contains(self, points, slack: float = 1e-12) -> bool:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lows) - slack
        hi = np.asarray(self.highs) + slack
        return bool(np.all(points >= lo) and np.all(points <= hi))


@dataclass(frozen=True)
class SwitchedSystem:
    dimension: int
    modes: tuple[Mode, ...]
    domain: Box

    def __post_init__(self):
        ids = [m.id for m in self.modes]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"mode ids must be 1..M without gaps, got {ids}")
        for m in self.modes:
            if m.dimension != self.dimension:
                raise ValueError(f"mode {m.id} has dimension {m.dimension}, expected {self.dimension}")
        if self.domain.dimension != self.dimension:
            raise ValueError("domain dimension mismatch")

    def mode(self, mode_id: int) -> Mode:
        try:
            return self.modes[mode_id - 1]
        except IndexError:
            raise KeyError(f"unknown mode id {mode_id}") from None


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Finite point set standing in for 'for all x in D' checks."""

    points: np.ndarray  # (m, n)
    scheme: dict

    def __len__(self):
        return self.points.shape[0]


def sample_domain(system: SwitchedSystem, grid_per_axis: int = 0,
                  random_count: int = 0, seed: int = 0) -> SampleSet:
    """Uniform grid plus seeded uniform random points inside the domain."""
    if grid_per_axis < 2 and random_count < 1:
        raise ValueError("request a grid of at least 2 per axis or at least 1 random point")
    box = system.domain
    chunks = []
    if grid_per_axis >= 2:
        axes = [np.linspace(lo, hi, grid_per_axis) for lo, hi in zip(box.lows, box.highs)]
        mesh = np.meshgrid(*axes, indexing="ij")
        chunks.append(np.stack([m.ravel() for m in mesh], axis=-1))
    if random_count >= 1:
        rng = np.random.default_rng(seed)
        lo = np.asarray(box.lows)
        hi = np.asarray(box.highs)
        chunks.append(lo + (hi - lo) * rng.random((random_count, box.dimension)))
    points = np.concatenate(chunks, axis=0)
    scheme = {"grid_per_axis": grid_per_axis, "random_count": random_count, "seed": seed}
    return SampleSet(points, scheme)


def default_samples(system: SwitchedSystem, seed: int = 0) -> SampleSet:
    """Grid of 21 per axis up to dimension 3, otherwise 1000 seeded random points."""
    if system.dimension <= 3:
        return sample_domain(system, grid_per_axis=21, seed=seed)
    return sample_domain(system, random_count=1000, seed=seed)


@dataclass(frozen=True)
class SubspaceSpec:
    name: str
    span: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class CertificateSpec:
    subspace: str
    weights: dict  # mode id -> (n, n) array; empty when weights are to be searched
    beta_stable: float | None = None
    beta_unstable: float | None = None
    eta_stable: float | None = None
    eta_unstable: float | None = None


@dataclass(frozen=True)
class ConfigBundle:
    system: SwitchedSystem
    subspaces: tuple[SubspaceSpec, ...]
    certificates: tuple[CertificateSpec, ...]
    raw: dict


def load_config(source) -> ConfigBundle:
    """Load a system configuration from a path, JSON string, or dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = str(source)
        try:
            if Path(text).exists():
                text = Path(text).read_text(encoding="utf-8")
        except OSError:
            pass
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    try:
        n = int(doc["dimension"])
        domain = Box(
            tuple(float(lo) for lo, _ in doc["domain"]),
            tuple(float(hi) for _, hi in doc["domain"]),
        )
        modes = []
        for entry in doc["modes"]:
            exprs = [parse_expr(text, n) for text in entry["field"]]
            if len(exprs) != n:
                raise ConfigError(
                    f"mode {entry['id']} has {len(exprs)} field components, expected {n}"
                )
            modes.append(make_mode(int(entry["id"]), exprs))
        modes.sort(key=lambda m: m.id)
        system = SwitchedSystem(n, tuple(modes), domain)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad configuration: {exc}") from exc

    subspaces = []
    for entry in doc.get("subspaces", []):
        span = tuple(tuple(float(v) for v in vec) for vec in entry["span"])
        if any(len(vec) != n for vec in span):
            raise ConfigError(f"subspace {entry['name']!r} span vectors must have length {n}")
        subspaces.append(SubspaceSpec(str(entry["name"]), span))

    certificates = []
    for entry in doc.get("certificates", []):
        weights = {}
        for key, matrix in entry.get("P", {}).items():
            weights[int(key)] = np.asarray(matrix, dtype=float)
        certificates.append(
            CertificateSpec(
                subspace=str(entry["subspace"]),
                weights=weights,
                beta_stable=_opt_float(entry, "beta_S"),
                beta_unstable=_opt_float(entry, "beta_U"),
                eta_stable=_opt_abs_float(entry, "eta_S"),
                eta_unstable=_opt_abs_float(entry, "eta_U"),
            )
        )
    return ConfigBundle(system, tuple(subspaces), tuple(certificates), doc)


def _opt_float(entry: dict, key: str):
    return float(entry[key]) if key in entry and entry[key] is not None else None


def _opt_abs_float(entry: dict, key: str):
    # Rate constants are stored positive; accept either sign convention.
    value = _opt_float(entry, key)
    return abs(value) if value is not None else None
