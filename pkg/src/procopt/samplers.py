"""Model-free experimental-planning baselines.

Four planners over a gridded space: Latin hypercube sampling, plain
uniform sampling, one-variable-at-a-time screening with progressive step
refinement, and two-level factorial sampling in a window that walks and
rescales around the incumbent best. The adaptive planners evaluate a
caller-supplied oracle and record a reproducible trace.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BudgetTooSmallError, CannotAvoidDuplicatesError
from .space import (
    ParameterSpace,
    ProcessCondition,
    condition_from_indices,
    snap_to_grid,
)

Oracle = Callable[[ProcessCondition], float]


@dataclass(frozen=True)
class TraceEntry:
    condition: ProcessCondition
    value: float  # NaN when the evaluation produced no usable measurement
    round_index: int


@dataclass(frozen=True)
class SamplingTrace:
    method: str
    seed: int
    entries: tuple[TraceEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries])

    def best_so_far(self) -> np.ndarray:
        """Cumulative best value; NaN entries carry the previous best forward."""
        out = np.empty(len(self.entries))
        best = -np.inf
        for i, e in enumerate(self.entries):
            if np.isfinite(e.value) and e.value > best:
                best = e.value
            out[i] = best
        return out

    def best_condition(self) -> ProcessCondition:
        finite = [e for e in self.entries if np.isfinite(e.value)]
        if not finite:
            raise ValueError("trace has no finite values")
        return max(finite, key=lambda e: e.value).condition


def trace_to_csv(trace: SamplingTrace, space: ParameterSpace) -> str:
    header = "seed,method,round," + ",".join(space.names) + ",value,incumbent_best"
    lines = [header]
    best = trace.best_so_far()
    for i, e in enumerate(trace.entries):
        vals = ",".join(f"{v:g}" for v in e.condition.values)
        value = "" if not np.isfinite(e.value) else f"{e.value:g}"
        inc = "" if not np.isfinite(best[i]) else f"{best[i]:g}"
        lines.append(f"{trace.seed},{trace.method},{e.round_index},{vals},{value},{inc}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Latin hypercube and uniform sampling

def _cell_level(u: np.ndarray, m: int) -> np.ndarray:
    """Measure-preserving map of unit-interval samples onto m equal cells."""
    return np.minimum((u * m).astype(int), m - 1)


def _lhs_levels(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """Stratified levels for one variable: n strata, each sampled once.

    With n <= m, any cell-boundary collision is repaired by re-drawing the
    offending sample inside its stratum (then falling back to the nearest
    free level), so no level repeats.
    """
    strata = rng.permutation(n)
    u = (strata + rng.random(n)) / n
    levels = _cell_level(u, m)
    if n > m:
        return levels
    taken: set[int] = set()
    for i in range(n):
        if levels[i] not in taken:
            taken.add(int(levels[i]))
            continue
        fixed = False
        for _ in range(100):
            cand = int(_cell_level(np.array([(strata[i] + rng.random()) / n]), m)[0])
            if cand not in taken:
                levels[i] = cand
                taken.add(cand)
                fixed = True
                break
        if not fixed:
            free = [k for k in range(m) if k not in taken]
            cand = min(free, key=lambda k: (abs(k - levels[i]), k))
            levels[i] = cand
            taken.add(cand)
    return levels


def lhs(space: ParameterSpace, n: int, seed: int) -> list[ProcessCondition]:
    """Latin hypercube design snapped onto the grid, duplicate-free.

    Each variable's unit interval is split into n strata, sampled once per
    stratum with independently permuted strata, then mapped onto grid
    levels measure-preservingly. Full-condition duplicates are re-drawn
    (bounded attempts), so the returned conditions are distinct.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > space.grid_size:
        raise CannotAvoidDuplicatesError(
            f"{n} distinct conditions requested from a grid of {space.grid_size}"
        )
    rng = np.random.default_rng(seed)
    counts = space.level_counts
    attempts_left = 100 * n
    for _ in range(101):
        levels = np.stack(
            [_lhs_levels(rng, n, counts[d]) for d in range(space.dim)], axis=1
        )
        # repair full-condition duplicates by re-drawing later occurrences
        ok = True
        seen: dict[tuple, int] = {}
        for i in range(n):
            key = tuple(levels[i])
            tries = 0
            while key in seen:
                if attempts_left <= 0:
                    raise CannotAvoidDuplicatesError(
                        "could not place distinct conditions within attempt budget"
                    )
                attempts_left -= 1
                tries += 1
                if tries > 10 * space.dim + 10:
                    ok = False
                    break
                for d in range(space.dim):
                    u = (rng.integers(0, n) + rng.random()) / n
                    levels[i, d] = _cell_level(np.array([u]), counts[d])[0]
                key = tuple(levels[i])
            if not ok:
                break
            seen[key] = i
        if ok:
            return [condition_from_indices(space, levels[i]) for i in range(n)]
    raise CannotAvoidDuplicatesError("could not place distinct conditions")


def random_sample(space: ParameterSpace, n: int, seed: int) -> list[ProcessCondition]:
    """n i.i.d. conditions, uniform over grid levels per variable."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    levels = np.stack(
        [rng.integers(0, v.level_count, size=n) for v in space.variables], axis=1
    )
    return [condition_from_indices(space, levels[i]) for i in range(n)]


def random_sample_array(space: ParameterSpace, n: int, seed: int) -> np.ndarray:
    """Vectorized variant of :func:`random_sample` returning an (n, d) array."""
    rng = np.random.default_rng(seed)
    out = np.empty((n, space.dim))
    for d, v in enumerate(space.variables):
        out[:, d] = v.levels()[rng.integers(0, v.level_count, size=n)]
    return out


# ---------------------------------------------------------------------------
# One-variable-at-a-time screening

_OVATS_MIN_STEP_DIV = 4  # refined steps never go below original step / 4


def ovats_run(oracle: Oracle, space: ParameterSpace, budget: int, seed: int) -> SamplingTrace:
    """Coordinate-wise screening with step refinement on stagnation.

    Variables are screened in a random order from a random on-grid starting
    point; each screen runs every level of the current variable with the
    others held fixed, then fixes the variable at its best level. When a
    full pass over all variables fails to improve the incumbent, every step
    is halved (down to original/4) and screening restarts around the
    incumbent.

    Budget accounting mirrors batch experimentation: each screened level is
    a fabricated condition, so re-screening a condition in a later pass
    spends budget again (its fresh entry joins the trace). Only within a
    single pass is a condition never evaluated twice.
    """
    max_levels = max(v.level_count for v in space.variables)
    if budget < max_levels:
        raise BudgetTooSmallError(
            f"budget {budget} below the largest screen of {max_levels} levels"
        )
    rng = np.random.default_rng(seed)
    steps = [v.step for v in space.variables]
    base = [float(v.levels()[rng.integers(0, v.level_count)]) for v in space.variables]
    order = list(rng.permutation(space.dim))

    entries: list[TraceEntry] = []
    best_value = -np.inf
    best_cond = list(base)
    pass_index = 0

    def levels_of(d: int) -> np.ndarray:
        v = space.variables[d]
        count = int(round((v.hi - v.lo) / steps[d])) + 1 if v.hi > v.lo else 1
        return v.lo + steps[d] * np.arange(count)

    while len(entries) < budget:
        improved = False
        pass_evaluated: dict[tuple, float] = {}
        for d in order:
            screen: list[tuple[float, float]] = []
            for level in levels_of(d):
                cand = list(base)
                cand[d] = float(level)
                cond = ProcessCondition(tuple(cand))
                key = cond.key()
                if key in pass_evaluated:
                    value = pass_evaluated[key]
                else:
                    if len(entries) >= budget:
                        return SamplingTrace("ovats", seed, tuple(entries))
                    value = float(oracle(cond))
                    pass_evaluated[key] = value
                    entries.append(TraceEntry(cond, value, pass_index))
                screen.append((float(level), value))
            top_level, top_value = max(screen, key=lambda t: (t[1], -t[0]))
            base[d] = top_level
            if top_value > best_value:
                best_value = top_value
                best_cond = list(base)
                improved = True
        if not improved:
            steps = [
                max(s / 2, v.step / _OVATS_MIN_STEP_DIV)
                for s, v in zip(steps, space.variables)
            ]
        base = list(best_cond)
        pass_index += 1
    return SamplingTrace("ovats", seed, tuple(entries))


# ---------------------------------------------------------------------------
# Factorial sampling with a walking, rescaling window

_FSPGS_MIN_FRACTION = 1.0 / 8.0
_FSPGS_IDLE_ROUNDS_LIMIT = 8


def fspgs_run(oracle: Oracle, space: ParameterSpace, budget: int, seed: int) -> SamplingTrace:
    """Two-level factorial rounds in a window anchored at the incumbent.

    Round 0 samples all 2^d corners of the full space. Every later round
    anchors a box at the incumbent best (which is one corner, already
    sampled) extending toward the roomier side per variable, and samples
    the remaining 2^d - 1 corners. The box width halves each round down to
    1/8 of each range; once at the floor, a round that fails to move the
    incumbent doubles the width (capped at the full range) to explore more
    broadly, and any improvement resumes the shrinking. Corners are snapped
    to the grid; corners that collapse onto already-sampled conditions are
    skipped without consuming budget.
    """
    d = space.dim
    if budget < 2 ** d:
        raise BudgetTooSmallError(f"budget {budget} below the initial round of {2**d}")
    rng = np.random.default_rng(seed)
    evaluated: dict[tuple, float] = {}
    entries: list[TraceEntry] = []
    best_value = -np.inf
    best_key: tuple | None = None
    best_cond: ProcessCondition | None = None

    def run_round(corners: list[ProcessCondition], round_index: int) -> bool:
        """Evaluate new corners in randomized order; True if incumbent moved."""
        nonlocal best_value, best_key, best_cond
        fresh = []
        seen_round: set[tuple] = set()
        for cond in corners:
            key = cond.key()
            if key in evaluated or key in seen_round:
                continue
            seen_round.add(key)
            fresh.append(cond)
        rng.shuffle(fresh)
        moved = False
        for cond in fresh:
            if len(entries) >= budget:
                return moved
            value = float(oracle(cond))
            key = cond.key()
            evaluated[key] = value
            entries.append(TraceEntry(cond, value, round_index))
            if value > best_value:
                best_value = value
                best_key = key
                best_cond = cond
                moved = True
        return moved

    lo, hi = space.lo_array(), space.hi_array()
    spans = hi - lo
    corner_values = [
        (v.lo, v.hi) if v.hi > v.lo else (v.lo,) for v in space.variables
    ]
    import itertools as _it

    round0 = [
        snap_to_grid(np.array(c), space)
        for c in _it.product(*corner_values)
    ]
    run_round(round0, 0)

    fraction = 1.0
    expanding = False
    idle_rounds = 0
    round_index = 1
    while len(entries) < budget and idle_rounds < _FSPGS_IDLE_ROUNDS_LIMIT:
        # width schedule: shrink every round down to the floor; a stagnant
        # round at the floor (or while expanding) doubles the next width
        if expanding:
            fraction = min(fraction * 2.0, 1.0)
        else:
            fraction = max(fraction / 2.0, _FSPGS_MIN_FRACTION)
        assert best_cond is not None
        center = np.asarray(best_cond.values)
        widths = fraction * spans
        corner_sets = []
        for k in range(d):
            if spans[k] == 0:
                corner_sets.append((center[k],))
                continue
            room_up = hi[k] - center[k]
            room_dn = center[k] - lo[k]
            sign = 1.0 if room_up >= room_dn else -1.0
            if center[k] + sign * widths[k] > hi[k] or center[k] + sign * widths[k] < lo[k]:
                other = float(np.clip(center[k] + sign * widths[k], lo[k], hi[k]))
            else:
                other = center[k] + sign * widths[k]
            corner_sets.append((center[k], other) if other != center[k] else (center[k],))
        corners = [
            snap_to_grid(np.array(c), space) for c in _it.product(*corner_sets)
        ]
        before = len(entries)
        moved = run_round(corners, round_index)
        idle_rounds = idle_rounds + 1 if len(entries) == before else 0
        if moved:
            expanding = False
        elif fraction <= _FSPGS_MIN_FRACTION + 1e-12 or expanding:
            expanding = True
        round_index += 1
    return SamplingTrace("fspgs", seed, tuple(entries))
