"""Final-round exploitation: swarm search, window construction, batch mix.

Once the campaign has located the promising region, the last batch trades
global acquisition for local exploitation: a particle swarm finds the
surrogate-mean optimum, a reduced and finer-grained window is laid around
the incumbent, and the batch mixes the model optimum, its grid neighbors,
and space-filling samples inside the window.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import InsufficientWindowGridError
from .gp import GpModel, predict_mean
from .samplers import lhs
from .space import (
    ParameterSpace,
    ProcessCondition,
    ProcessVariable,
    neighbors,
    normalize,
    snap_to_grid,
)

# A refinement window is just a ParameterSpace with tighter bounds and
# finer intervals.
RefineWindow = ParameterSpace


@dataclass(frozen=True)
class PsoConfig:
    particles: int = 64
    iterations: int = 200
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    seed: int = 0

    def __post_init__(self):
        if self.particles < 10:
            raise ValueError("need at least 10 particles")
        if self.iterations < 50:
            raise ValueError("need at least 50 iterations")


def pso_argmax(
    f: Callable[[np.ndarray], np.ndarray],
    bounds: Sequence[tuple[float, float]],
    cfg: PsoConfig = PsoConfig(),
) -> tuple[np.ndarray, float]:
    """Global-best particle swarm maximization within box bounds.

    ``f`` maps an (m, d) block of points to m values and must be pure.
    Velocity update: v <- w v + c1 r1 (pbest - x) + c2 r2 (gbest - x);
    positions clamp to the bounds. Deterministic per config seed.
    """
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    d = lo.shape[0]
    rng = np.random.default_rng(cfg.seed)
    X = lo + rng.random((cfg.particles, d)) * (hi - lo)
    V = np.zeros_like(X)
    fitness = np.asarray(f(X), dtype=float)
    pbest, pbest_val = X.copy(), fitness.copy()
    g_idx = int(np.argmax(fitness))
    gbest, gbest_val = X[g_idx].copy(), float(fitness[g_idx])

    for _ in range(cfg.iterations):
        r1 = rng.random((cfg.particles, d))
        r2 = rng.random((cfg.particles, d))
        V = (
            cfg.inertia * V
            + cfg.cognitive * r1 * (pbest - X)
            + cfg.social * r2 * (gbest - X)
        )
        X = np.clip(X + V, lo, hi)
        fitness = np.asarray(f(X), dtype=float)
        improved = fitness > pbest_val
        pbest[improved] = X[improved]
        pbest_val[improved] = fitness[improved]
        g_idx = int(np.argmax(pbest_val))
        if pbest_val[g_idx] > gbest_val:
            gbest, gbest_val = pbest[g_idx].copy(), float(pbest_val[g_idx])
    return gbest, gbest_val


@dataclass(frozen=True)
class WindowSpec:
    """Per-variable refinement pattern: half-width and finer interval."""

    half_widths: Mapping[str, float]
    steps: Mapping[str, float]

    def to_json(self) -> dict:
        return {"half_widths": dict(self.half_widths), "steps": dict(self.steps)}

    @staticmethod
    def from_json(doc: Mapping) -> "WindowSpec":
        return WindowSpec(dict(doc["half_widths"]), dict(doc["steps"]))


def refine_spec_to_json(window: WindowSpec, pso: PsoConfig = PsoConfig()) -> dict:
    """Serializable refinement spec: window pattern plus swarm settings."""
    return {
        "window": window.to_json(),
        "pso": {
            "particles": pso.particles,
            "iterations": pso.iterations,
            "inertia": pso.inertia,
            "cognitive": pso.cognitive,
            "social": pso.social,
            "seed": pso.seed,
        },
    }


def refine_spec_from_json(doc: Mapping) -> tuple[WindowSpec, PsoConfig]:
    return WindowSpec.from_json(doc["window"]), PsoConfig(**doc["pso"])


def default_window_spec() -> WindowSpec:
    """Canonical shrink pattern for the six-variable production space."""
    return WindowSpec(
        half_widths={
            "temperature": 5.0,
            "speed": 2.5,
            "spray_flow": 0.25,
            "plasma_height": 0.1,
            "plasma_gas_flow": 2.0,
            "plasma_duty_cycle": 12.5,
        },
        steps={
            "temperature": 1.0,
            "speed": 0.1,
            "spray_flow": 0.01,
            "plasma_height": 0.05,
            "plasma_gas_flow": 1.0,
            "plasma_duty_cycle": 1.0,
        },
    )


def build_window(
    best: ProcessCondition,
    parent: ParameterSpace,
    shrink: WindowSpec,
) -> RefineWindow:
    """Window centered on ``best``, clipped to the parent bounds.

    Bounds are aligned to the finer step so the center lies exactly on the
    window grid. Variables missing from the shrink spec keep their full
    parent range and step.
    """
    out = []
    for d, v in enumerate(parent.variables):
        c = best.values[d]
        hw = shrink.half_widths.get(v.name)
        step = shrink.steps.get(v.name, v.step)
        if hw is None:
            out.append(ProcessVariable(v.name, v.unit, v.lo, v.hi, step))
            continue
        # a half-step remainder of the half-width extends toward the lower
        # bound, so the total window width stays 2*hw on the step lattice
        down = np.ceil(hw / step - 1e-9) * step
        up = np.floor(hw / step + 1e-9) * step
        lo_raw = max(v.lo, c - down)
        hi_raw = min(v.hi, c + up)
        lo = c - np.floor((c - lo_raw) / step + 1e-9) * step
        hi = c + np.floor((hi_raw - c) / step + 1e-9) * step
        out.append(ProcessVariable(v.name, v.unit, float(lo), float(hi), step))
    return ParameterSpace(tuple(out))


def final_round_batch(
    objective: GpModel,
    window: RefineWindow,
    parent: ParameterSpace,
    batch_size: int,
    mix: tuple[int, int] = (7, 12),
    seed: int = 0,
    pso: PsoConfig | None = None,
    exclude: Iterable[ProcessCondition] = (),
) -> list[ProcessCondition]:
    """Best point + nearest neighbors + space-filling samples in the window.

    ``mix`` is (neighbor count k, space-filling count m) with
    1 + k + m = batch_size. The swarm maximizes the posterior mean (pure
    exploitation) over the window, its optimum snaps onto the window grid,
    and collisions with ``exclude`` or among the parts are backfilled with
    extra space-filling draws.
    """
    k, m = mix
    if 1 + k + m != batch_size:
        raise ValueError("mix (k, m) must satisfy 1 + k + m = batch_size")
    if window.grid_size < batch_size:
        raise InsufficientWindowGridError(
            f"window grid of {window.grid_size} cannot host a batch of {batch_size}"
        )
    excluded = {c.key() for c in exclude}
    if window.grid_size < batch_size + len(excluded):
        raise InsufficientWindowGridError(
            "window grid too small once excluded conditions are removed"
        )

    pso_cfg = pso or PsoConfig(seed=seed)
    if pso_cfg.seed != seed:
        pso_cfg = PsoConfig(
            particles=pso_cfg.particles,
            iterations=pso_cfg.iterations,
            inertia=pso_cfg.inertia,
            cognitive=pso_cfg.cognitive,
            social=pso_cfg.social,
            seed=seed,
        )

    def mean_in_parent(points: np.ndarray) -> np.ndarray:
        return predict_mean(objective, normalize(points, parent))

    bounds = [(v.lo, v.hi) for v in window.variables]
    best_point, _ = pso_argmax(mean_in_parent, bounds, pso_cfg)
    best_cond = snap_to_grid(best_point, window)

    chosen: list[ProcessCondition] = []
    seen = set(excluded)

    def push(cond: ProcessCondition) -> bool:
        key = cond.key()
        if key in seen:
            return False
        seen.add(key)
        chosen.append(cond)
        return True

    if not push(best_cond):
        # model optimum already measured: nearest unseen neighbor stands in
        for cand in neighbors(best_cond, window, min(window.grid_size - 1, 4 * batch_size)):
            if push(cand):
                break

    anchor = chosen[0]
    want_after_neighbors = min(1 + k, window.grid_size - len(excluded))
    radius = min(window.grid_size - 1, max(4 * batch_size, k + len(excluded) + 1))
    for cand in neighbors(anchor, window, radius):
        if len(chosen) >= want_after_neighbors:
            break
        push(cand)

    fill_seed = seed
    attempts = 0
    while len(chosen) < batch_size and attempts < 50:
        need = batch_size - len(chosen)
        for cand in lhs(window, min(max(need, m), window.grid_size), fill_seed):
            if len(chosen) >= batch_size:
                break
            push(cand)
        fill_seed += 1
        attempts += 1
    if len(chosen) < batch_size and window.grid_size <= 100_000:
        # deterministic fallback for small windows: walk outward from the anchor
        for cand in neighbors(anchor, window, window.grid_size - 1):
            if len(chosen) >= batch_size:
                break
            push(cand)
    if len(chosen) < batch_size:
        raise InsufficientWindowGridError("could not assemble a distinct batch")
    return chosen
