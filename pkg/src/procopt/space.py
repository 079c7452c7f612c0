"""Gridded process-parameter space: enumeration, normalization, snapping, neighbors.

The optimization domain is a regular grid: each process variable takes
``level_count = (hi - lo)/step + 1`` equally spaced values in canonical
units. Continuous optimizers work in the normalized unit cube and land on
fabricable conditions via :func:`snap_to_grid`.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import OutOfBoundsError, UnknownUnitError

_REL_TOL = 1e-9

# unit conversions accepted on ingestion, keyed by (source, canonical)
_CONVERSIONS: dict[tuple[str, str], float] = {
    ("mm/s", "cm/s"): 0.1,
    ("uL/min", "mL/min"): 1e-3,
    ("µL/min", "mL/min"): 1e-3,
    ("ul/min", "mL/min"): 1e-3,
}


@dataclass(frozen=True)
class ProcessVariable:
    """One gridded process variable in canonical units."""

    name: str
    unit: str
    lo: float
    hi: float
    step: float

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable name must be non-empty")
        if self.lo > self.hi:
            raise ValueError(f"{self.name}: lo {self.lo} > hi {self.hi}")
        if self.step <= 0:
            raise ValueError(f"{self.name}: step must be positive")
        if self.hi > self.lo:
            ratio = (self.hi - self.lo) / self.step
            if abs(ratio - round(ratio)) > _REL_TOL * max(1.0, ratio):
                raise ValueError(
                    f"{self.name}: range ({self.lo}, {self.hi}) is not an "
                    f"integer number of steps of {self.step}"
                )

    @property
    def level_count(self) -> int:
        if self.hi == self.lo:
            return 1
        return int(round((self.hi - self.lo) / self.step)) + 1

    def levels(self) -> np.ndarray:
        """All grid values of this variable, ascending."""
        return self.lo + self.step * np.arange(self.level_count)

    def level_value(self, k: int) -> float:
        return self.lo + self.step * k


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered collection of process variables defining the search grid."""

    variables: tuple[ProcessVariable, ...]

    def __post_init__(self):
        if not self.variables:
            raise ValueError("space needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def grid_size(self) -> int:
        n = 1
        for v in self.variables:
            n *= v.level_count
        return n

    @property
    def level_counts(self) -> tuple[int, ...]:
        return tuple(v.level_count for v in self.variables)

    def lo_array(self) -> np.ndarray:
        return np.array([v.lo for v in self.variables])

    def hi_array(self) -> np.ndarray:
        return np.array([v.hi for v in self.variables])

    def step_array(self) -> np.ndarray:
        return np.array([v.step for v in self.variables])

    def index(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise KeyError(name)

    def contains(self, values: Sequence[float], tol: float = 1e-9) -> bool:
        for v, x in zip(self.variables, values):
            slack = tol * max(1.0, abs(v.hi - v.lo))
            if x < v.lo - slack or x > v.hi + slack:
                return False
        return True


@dataclass(frozen=True)
class ProcessCondition:
    """One point of the process grid, in canonical units."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))

    def as_array(self) -> np.ndarray:
        return np.array(self.values)

    def key(self, ndigits: int = 9) -> tuple[float, ...]:
        """Rounded tuple for dictionary/dedup use across float provenance."""
        return tuple(round(x, ndigits) for x in self.values)


def condition_from_indices(space: ParameterSpace, idx: Sequence[int]) -> ProcessCondition:
    return ProcessCondition(
        tuple(v.level_value(int(k)) for v, k in zip(space.variables, idx))
    )


def enumerate_grid(space: ParameterSpace) -> Iterator[ProcessCondition]:
    """Yield every grid condition in lexicographic order of level indices.

    The first variable varies slowest; the count equals the product of the
    per-variable level counts.
    """
    level_values = [v.levels() for v in space.variables]
    for combo in itertools.product(*level_values):
        yield ProcessCondition(tuple(float(x) for x in combo))


_GRID_CACHE: dict[ParameterSpace, np.ndarray] = {}
_GRID_CACHE_LIMIT = 4
_GRID_MATERIALIZE_LIMIT = 2_000_000


def grid_array(space: ParameterSpace) -> np.ndarray:
    """Dense (N, d) matrix of all grid conditions, lexicographic order.

    Cached per space. Refuses to materialize grids beyond
    ``_GRID_MATERIALIZE_LIMIT`` points; stream those with
    :func:`iter_grid_chunks` instead.
    """
    cached = _GRID_CACHE.get(space)
    if cached is not None:
        return cached
    n = space.grid_size
    if n > _GRID_MATERIALIZE_LIMIT:
        raise ValueError(
            f"grid of {n} points too large to materialize; stream it"
        )
    mesh = np.meshgrid(*[v.levels() for v in space.variables], indexing="ij")
    arr = np.stack([m.reshape(-1) for m in mesh], axis=1)
    arr.setflags(write=False)
    if len(_GRID_CACHE) >= _GRID_CACHE_LIMIT:
        _GRID_CACHE.pop(next(iter(_GRID_CACHE)))
    _GRID_CACHE[space] = arr
    return arr


def iter_grid_chunks(space: ParameterSpace, chunk: int = 65536) -> Iterator[np.ndarray]:
    """Yield the grid as (m, d) blocks without materializing it whole."""
    counts = space.level_counts
    total = space.grid_size
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        flat = np.arange(start, stop)
        idx = np.array(np.unravel_index(flat, counts)).T
        block = np.empty((stop - start, space.dim))
        for d, v in enumerate(space.variables):
            block[:, d] = v.lo + v.step * idx[:, d]
        yield block


def normalize(values, space: ParameterSpace) -> np.ndarray:
    """Map canonical-unit coordinates onto the unit cube.

    Accepts a single condition (ProcessCondition or length-d sequence) or an
    (n, d) array. Raises :class:`OutOfBoundsError` naming the first offending
    variable. Degenerate (single-level) variables map to 0.
    """
    arr = _as_array(values)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr).astype(float)
    lo, hi = space.lo_array(), space.hi_array()
    span = hi - lo
    tol = 1e-9 * np.maximum(1.0, np.abs(span))
    for d, v in enumerate(space.variables):
        bad = (pts[:, d] < lo[d] - tol[d]) | (pts[:, d] > hi[d] + tol[d])
        if bad.any():
            raise OutOfBoundsError(v.name, float(pts[bad, d][0]), v.lo, v.hi)
    safe_span = np.where(span > 0, span, 1.0)
    out = (pts - lo) / safe_span
    out[:, span == 0] = 0.0
    out = np.clip(out, 0.0, 1.0)
    return out[0] if single else out


def denormalize(unit_values, space: ParameterSpace) -> np.ndarray:
    """Inverse of :func:`normalize`."""
    arr = np.asarray(unit_values, dtype=float)
    lo, hi = space.lo_array(), space.hi_array()
    return lo + arr * (hi - lo)


def snap_to_grid(point, space: ParameterSpace) -> ProcessCondition:
    """Snap a canonical-unit point to the nearest grid condition.

    Coordinates up to step/2 outside the bounds are clamped; anything
    farther raises :class:`OutOfBoundsError`. Exact half-step ties resolve
    toward the lower level.
    """
    arr = _as_array(point).astype(float)
    if arr.ndim != 1 or arr.shape[0] != space.dim:
        raise ValueError(f"expected {space.dim} coordinates")
    out = []
    for d, v in enumerate(space.variables):
        x = arr[d]
        margin = v.step / 2 + _REL_TOL * max(1.0, abs(v.hi - v.lo))
        if x < v.lo - margin or x > v.hi + margin:
            raise OutOfBoundsError(v.name, x, v.lo, v.hi)
        x = min(max(x, v.lo), v.hi)
        if v.hi == v.lo:
            out.append(v.lo)
            continue
        t = (x - v.lo) / v.step
        # round-half-down so ties go toward lo
        k = int(np.ceil(t - 0.5))
        k = min(max(k, 0), v.level_count - 1)
        out.append(v.level_value(k))
    return ProcessCondition(tuple(out))


def is_on_grid(values, space: ParameterSpace, tol: float = 1e-9) -> bool:
    arr = _as_array(values)
    for d, v in enumerate(space.variables):
        x = arr[d]
        if x < v.lo - tol or x > v.hi + tol:
            return False
        if v.hi == v.lo:
            continue
        t = (x - v.lo) / v.step
        if abs(t - round(t)) > tol * max(1.0, abs(t)) + tol:
            return False
    return True


def grid_indices(values, space: ParameterSpace) -> tuple[int, ...]:
    """Level indices of an on-grid condition."""
    arr = _as_array(values)
    idx = []
    for d, v in enumerate(space.variables):
        if v.hi == v.lo:
            idx.append(0)
        else:
            idx.append(int(round((arr[d] - v.lo) / v.step)))
    return tuple(idx)


def neighbors(condition, space: ParameterSpace, k: int) -> list[ProcessCondition]:
    """The k nearest distinct grid conditions in normalized Euclidean distance.

    The query condition must itself be on-grid and is excluded from the
    result. Ties break by lexicographic level-index order. Uses an expanding
    index box so it stays cheap even on very large grids.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > space.grid_size - 1:
        raise ValueError(
            f"requested {k} neighbors but grid has only {space.grid_size - 1} others"
        )
    if k == 0:
        return []
    center = grid_indices(_as_array(condition), space)
    counts = space.level_counts
    # normalized step length per variable; zero-span variables contribute 0
    nsteps = []
    for v in space.variables:
        nsteps.append(v.step / (v.hi - v.lo) if v.hi > v.lo else 0.0)
    min_step = min(s for s in nsteps if s > 0) if any(s > 0 for s in nsteps) else 1.0

    radius = 1
    while True:
        ranges = []
        for d in range(space.dim):
            lo_k = max(0, center[d] - radius)
            hi_k = min(counts[d] - 1, center[d] + radius)
            ranges.append(range(lo_k, hi_k + 1))
        cands: list[tuple[float, tuple[int, ...]]] = []
        for idx in itertools.product(*ranges):
            if idx == center:
                continue
            d2 = 0.0
            for d in range(space.dim):
                d2 += ((idx[d] - center[d]) * nsteps[d]) ** 2
            cands.append((d2, idx))
        cands.sort()
        box_exhausted = all(
            len(r) == counts[d] for d, r in enumerate(ranges)
        )
        if len(cands) >= k:
            kth = cands[k - 1][0]
            # any point outside the box is at least (radius+1)*min_step away
            guard = ((radius + 1) * min_step) ** 2
            if box_exhausted or kth < guard or abs(kth - guard) < 1e-15:
                return [condition_from_indices(space, idx) for _, idx in cands[:k]]
        if box_exhausted:
            return [condition_from_indices(space, idx) for _, idx in cands[:k]]
        radius += 1


def canonicalize_value(value: float, unit: str, canonical_unit: str) -> float:
    """Convert a tagged value into the canonical unit of its variable."""
    if unit == canonical_unit:
        return float(value)
    factor = _CONVERSIONS.get((unit, canonical_unit))
    if factor is None:
        raise UnknownUnitError(
            f"no conversion from {unit!r} to {canonical_unit!r}"
        )
    return float(value) * factor


def canonicalize_units(
    record: Mapping[str, float],
    units: Mapping[str, str],
    space: ParameterSpace,
) -> ProcessCondition:
    """Build a canonical-unit condition from a unit-tagged raw record.

    ``record`` maps variable names to raw values, ``units`` maps the same
    names to their source unit strings. Variables missing a unit tag are
    assumed canonical.
    """
    out = []
    for v in space.variables:
        if v.name not in record:
            raise KeyError(f"record missing variable {v.name!r}")
        unit = units.get(v.name, v.unit)
        out.append(canonicalize_value(record[v.name], unit, v.unit))
    return ProcessCondition(tuple(out))


def space_to_json(space: ParameterSpace) -> list[dict]:
    return [
        {"name": v.name, "unit": v.unit, "lo": v.lo, "hi": v.hi, "step": v.step}
        for v in space.variables
    ]


def space_from_json(doc: Iterable[Mapping]) -> ParameterSpace:
    return ParameterSpace(
        tuple(
            ProcessVariable(
                name=str(d["name"]),
                unit=str(d["unit"]),
                lo=float(d["lo"]),
                hi=float(d["hi"]),
                step=float(d["step"]),
            )
            for d in doc
        )
    )


def load_space(path) -> ParameterSpace:
    with open(path) as fh:
        return space_from_json(json.load(fh))


def save_space(space: ParameterSpace, path) -> None:
    Path(path).write_text(json.dumps(space_to_json(space), indent=2) + "\n")


def _as_array(values) -> np.ndarray:
    if isinstance(values, ProcessCondition):
        return values.as_array()
    return np.asarray(values, dtype=float)
