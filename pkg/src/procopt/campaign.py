"""Human-in-the-loop campaign orchestration.

A campaign walks a fixed round schedule (space-filling start, model-guided
middle rounds, local refinement finish), alternating strictly between
suggesting a batch and ingesting its measured results. All mutation goes
through :func:`suggest_next_round` and :func:`ingest_results`; snapshots
round-trip the full state so a campaign can be resumed bit-identically.
"""

from __future__ import annotations

import json
import math
import uuid
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import gp
from .acquisition import AcquisitionConfig, ConstraintSpec, select_batch
from .errors import (
    CorruptSnapshotError,
    InvalidConfigError,
    MalformedRecordError,
    NotReadyError,
    SchemaVersionMismatchError,
    UnknownConditionError,
)
from .records import Observation, dedup_max_pce, parse_observation_csv
from .refine import WindowSpec, build_window, default_window_spec, final_round_batch
from .samplers import lhs
from .seeding import derive_seed
from .space import (
    ParameterSpace,
    ProcessCondition,
    grid_array,
    normalize,
    snap_to_grid,
    space_from_json,
    space_to_json,
)

SNAPSHOT_SCHEMA_VERSION = 1

ROUND_LHS = "lhs"
ROUND_BO = "bo"
ROUND_REFINE = "refine"
_ROUND_KINDS = (ROUND_LHS, ROUND_BO, ROUND_REFINE)

STATUS_READY = "ready_to_suggest"
STATUS_AWAITING = "awaiting_results"
STATUS_FINISHED = "finished"


# ---------------------------------------------------------------------------
# Cost model


@dataclass(frozen=True)
class CostStep:
    """One fabrication step: fixed setup plus per-unit or per-block time."""

    name: str
    setup_minutes: float
    per_unit_minutes: float
    unit_capacity: int  # 1 = per-substrate step, >1 = block step

    def __post_init__(self):
        if self.setup_minutes < 0 or self.per_unit_minutes < 0:
            raise ValueError("times must be nonnegative")
        if self.unit_capacity < 1:
            raise ValueError("capacity must be >= 1")


@dataclass(frozen=True)
class CostTable:
    steps: tuple[CostStep, ...]


def default_cost_table(rspp_minutes_per_condition: float = 12.5) -> CostTable:
    """Fabrication timings; spray deposition defaults to the 12.5 min midpoint."""
    return CostTable(
        steps=(
            CostStep("cleaning", 10.0, 50.0, 20),
            CostStep("rspp", 60.0, rspp_minutes_per_condition, 1),
            CostStep("evaporation", 30.0, 180.0, 20),
            CostStep("iv", 15.0, 10.0, 1),
        )
    )


def batch_time(n: int, table: CostTable | None = None) -> tuple[float, float]:
    """Total and per-substrate minutes to process a batch of ``n``.

    Block steps charge whole blocks (ceil(n/capacity)), so the average time
    per substrate drops within a block and jumps right past each capacity
    multiple.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    table = table or default_cost_table()
    total = 0.0
    for s in table.steps:
        if s.unit_capacity > 1:
            total += s.setup_minutes + math.ceil(n / s.unit_capacity) * s.per_unit_minutes
        else:
            total += s.setup_minutes + n * s.per_unit_minutes
    return total, total / n


# ---------------------------------------------------------------------------
# Configuration and state


@dataclass(frozen=True)
class CampaignConfig:
    batch_size: int = 20
    schedule: tuple[str, ...] = (ROUND_LHS, ROUND_BO, ROUND_BO, ROUND_BO, ROUND_REFINE)
    beta: float = 1.0
    film_floor: float = 0.5
    film_threshold: float = 0.5
    prior_floor: float = 0.8
    seed: int = 0
    refine_mix: tuple[int, int] | None = None  # None: best + up-to-7 neighbors + fill
    window_spec: WindowSpec = field(default_factory=default_window_spec)
    objective_include_failed: bool = False
    fit_restarts: int = 8
    fit_max_iter: int = 100

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be >= 1")
        if not self.schedule:
            raise InvalidConfigError("schedule must contain at least one round")
        for kind in self.schedule:
            if kind not in _ROUND_KINDS:
                raise InvalidConfigError(f"unknown round kind {kind!r}")
        if self.refine_mix is not None:
            k, m = self.refine_mix
            if k < 0 or m < 0 or 1 + k + m != self.batch_size:
                raise InvalidConfigError(
                    "refine_mix (neighbors, fill) must satisfy 1 + k + m = batch_size"
                )

    def resolved_refine_mix(self) -> tuple[int, int]:
        if self.refine_mix is not None:
            return self.refine_mix
        k = min(7, self.batch_size - 1)
        return k, self.batch_size - 1 - k


@dataclass(frozen=True)
class RoundPlan:
    round_index: int
    method: str
    conditions: tuple[ProcessCondition, ...]


@dataclass
class CampaignState:
    id: str
    space: ParameterSpace
    config: CampaignConfig
    observations: list[Observation] = field(default_factory=list)
    prior_dataset: list[Observation] | None = None
    round_index: int = 0
    status: str = STATUS_READY
    pending_plan: RoundPlan | None = None
    plans: list[RoundPlan] = field(default_factory=list)
    window: ParameterSpace | None = None
    model_snapshots: dict = field(default_factory=dict)

    def suggested_keys(self) -> set[tuple]:
        keys: set[tuple] = set()
        for plan in self.plans:
            keys.update(c.key() for c in plan.conditions)
        return keys

    def observed_keys(self) -> set[tuple]:
        return {o.condition.key() for o in self.observations}

    def best_observation(self) -> Observation | None:
        measured = [o for o in self.observations if o.pce_pct is not None and o.film_pass]
        if not measured:
            return None
        return max(measured, key=lambda o: o.pce_pct)


def new_campaign(
    space: ParameterSpace,
    config: CampaignConfig = CampaignConfig(),
    prior_dataset: Sequence[Observation] | None = None,
    campaign_id: str | None = None,
) -> CampaignState:
    """Fresh campaign at round zero, ready to suggest."""
    if space.grid_size < config.batch_size:
        raise InvalidConfigError("grid smaller than one batch")
    return CampaignState(
        id=campaign_id or uuid.uuid4().hex[:12],
        space=space,
        config=config,
        prior_dataset=list(prior_dataset) if prior_dataset else None,
    )


# ---------------------------------------------------------------------------
# Model fitting helpers


def _fit_config(state: CampaignState, stream: int) -> gp.GpFitConfig:
    return gp.GpFitConfig(
        restarts=state.config.fit_restarts,
        max_iter=state.config.fit_max_iter,
        seed=derive_seed(state.config.seed, stream),
    )


def fit_objective_model(state: CampaignState) -> gp.GpModel:
    """Efficiency surrogate on measured observations.

    By default failed-film devices stay out of the efficiency model (their
    measurements exist only to validate the visual screen); repeated
    conditions collapse to their best device.
    """
    rows = [
        o for o in state.observations
        if o.pce_pct is not None and (o.film_pass or state.config.objective_include_failed)
    ]
    rows = dedup_max_pce(rows)
    if len(rows) < 2:
        raise NotReadyError("need at least 2 measured observations to fit the surrogate")
    X = normalize(np.array([o.condition.values for o in rows]), state.space)
    y = np.array([o.pce_pct for o in rows])
    return gp.fit(X, y, _fit_config(state, 10_000 + state.round_index))


def fit_film_model(state: CampaignState) -> gp.GpModel:
    """Film-quality surrogate on pass/fail labels of every tried condition."""
    by_key: dict[tuple, float] = {}
    coords: dict[tuple, ProcessCondition] = {}
    for o in state.observations:
        key = o.condition.key()
        label = 1.0 if o.film_pass else 0.0
        by_key[key] = max(by_key.get(key, 0.0), label)
        coords[key] = o.condition
    if len(by_key) < 2:
        raise NotReadyError("need at least 2 observations to fit the film model")
    X = normalize(np.array([coords[k].values for k in by_key]), state.space)
    y = np.array(list(by_key.values()))
    return gp.fit(X, y, _fit_config(state, 20_000 + state.round_index))


def fit_prior_model(state: CampaignState) -> tuple[gp.GpModel, float]:
    """Surrogate over the prior dataset plus its mean-efficiency threshold."""
    assert state.prior_dataset
    rows = dedup_max_pce([o for o in state.prior_dataset if o.pce_pct is not None])
    if len(rows) < 2:
        raise InvalidConfigError("prior dataset needs at least 2 measured rows")
    X = normalize(np.array([o.condition.values for o in rows]), state.space)
    y = np.array([o.pce_pct for o in rows])
    model = gp.fit(X, y, _fit_config(state, 30_000))
    return model, float(np.mean(y))


# ---------------------------------------------------------------------------
# Suggest / ingest state machine


def suggest_next_round(state: CampaignState) -> RoundPlan:
    """Produce the next batch according to the schedule and advance status."""
    if state.status == STATUS_FINISHED:
        raise NotReadyError("campaign already finished")
    if state.status != STATUS_READY:
        raise NotReadyError(f"cannot suggest while status is {state.status!r}")
    method = state.config.schedule[state.round_index]
    seed = derive_seed(state.config.seed, state.round_index)
    exclude = state.observed_keys() | state.suggested_keys()

    if method == ROUND_LHS:
        conditions = _lhs_plan(state, seed, exclude)
    elif method == ROUND_BO:
        conditions = _bo_plan(state, seed, exclude)
    else:
        conditions = _refine_plan(state, seed, exclude)

    plan = RoundPlan(state.round_index, method, tuple(conditions))
    state.pending_plan = plan
    state.plans.append(plan)
    state.status = STATUS_AWAITING
    return plan


def _lhs_plan(state, seed, exclude) -> list[ProcessCondition]:
    batch = state.config.batch_size
    chosen: list[ProcessCondition] = []
    seen = set(exclude)
    for attempt in range(50):
        for cond in lhs(state.space, batch, derive_seed(seed, attempt)):
            key = cond.key()
            if key in seen:
                continue
            seen.add(key)
            chosen.append(cond)
            if len(chosen) == batch:
                return chosen
    raise NotReadyError("could not assemble a distinct space-filling batch")


def _bo_plan(state, seed, exclude) -> list[ProcessCondition]:
    objective = fit_objective_model(state)
    constraints = [
        ConstraintSpec(
            fit_film_model(state),
            state.config.film_threshold,
            state.config.film_floor,
            clamp_unit=True,
        )
    ]
    snapshots = {"objective": gp.model_snapshot(objective)}
    if state.prior_dataset:
        prior_model, prior_delta = fit_prior_model(state)
        constraints.append(
            ConstraintSpec(prior_model, prior_delta, state.config.prior_floor)
        )
        snapshots["prior"] = gp.model_snapshot(prior_model)
    snapshots["film"] = gp.model_snapshot(constraints[0].model)
    state.model_snapshots[str(state.round_index)] = snapshots

    grid = grid_array(state.space)
    grid_norm = normalize(grid, state.space)
    keep = np.ones(grid.shape[0], dtype=bool)
    if exclude:
        for i, row in enumerate(grid):
            if tuple(round(v, 9) for v in row) in exclude:
                keep[i] = False
    candidates = np.flatnonzero(keep)
    sel = select_batch(
        objective,
        constraints,
        grid_norm[candidates],
        state.config.batch_size,
        AcquisitionConfig(beta=state.config.beta),
        seed=seed,
    )
    return [ProcessCondition(tuple(grid[candidates[i]])) for i in sel]


def _refine_plan(state, seed, exclude) -> list[ProcessCondition]:
    best = state.best_observation()
    if best is None:
        raise NotReadyError("no measured pass-film observation to anchor the window")
    objective = fit_objective_model(state)
    state.model_snapshots[str(state.round_index)] = {
        "objective": gp.model_snapshot(objective)
    }
    window = build_window(best.condition, state.space, state.config.window_spec)
    state.window = window
    exclude_conditions = [
        o.condition for o in state.observations
    ] + [c for p in state.plans for c in p.conditions]
    in_window = [
        c for c in exclude_conditions if window.contains(c.values)
    ]
    return final_round_batch(
        objective,
        window,
        state.space,
        state.config.batch_size,
        mix=state.config.resolved_refine_mix(),
        seed=seed,
        exclude=in_window,
    )


def ingest_results(
    state: CampaignState,
    records: str | Sequence[Observation],
    allow_off_plan: bool = False,
) -> CampaignState:
    """Validate and store one round of measured results.

    ``records`` may be canonical-schema CSV text or parsed observations.
    Rows must reference the pending plan unless ``allow_off_plan``;
    duplicate conditions inside the batch keep their best efficiency. Any
    validation error leaves the state untouched.
    """
    if state.status == STATUS_FINISHED:
        raise NotReadyError("campaign already finished")
    if state.status != STATUS_AWAITING:
        raise NotReadyError(f"cannot ingest while status is {state.status!r}")
    if isinstance(records, str):
        rows = parse_observation_csv(records, state.space, state.round_index)
    else:
        rows = [replace(o, round_index=state.round_index) for o in records]
    if not rows:
        raise MalformedRecordError(0, "no data rows")

    plan_keys = {c.key() for c in state.pending_plan.conditions} if state.pending_plan else set()
    used_ids = {o.condition_id for o in state.observations if o.condition_id is not None}
    next_id = max(used_ids, default=-1) + 1

    staged: list[Observation] = []
    for i, ob in enumerate(rows, start=1):
        if not state.space.contains(ob.condition.values):
            raise MalformedRecordError(i, "condition outside the campaign space bounds")
        if ob.condition.key() not in plan_keys and not allow_off_plan:
            raise UnknownConditionError(
                f"row {i}: condition {ob.condition.values} was not suggested this "
                f"round (pass allow_off_plan to accept)"
            )
        if ob.condition_id is None:
            ob = replace(ob, condition_id=next_id)
            next_id += 1
        elif ob.condition_id in used_ids:
            raise MalformedRecordError(i, f"condition_id {ob.condition_id} already used")
        used_ids.add(ob.condition_id)
        staged.append(ob)

    staged = dedup_max_pce(staged)
    state.observations.extend(staged)
    state.pending_plan = None
    state.round_index += 1
    state.status = (
        STATUS_FINISHED if state.round_index >= len(state.config.schedule) else STATUS_READY
    )
    return state


# ---------------------------------------------------------------------------
# Inspection


def manifold_projection(
    objective: gp.GpModel,
    space: ParameterSpace,
    var_i: int,
    var_j: int,
    grid: int = 20,
    samples: int = 200,
    seed: int = 0,
    reduce: str = "max",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reduce the response surface onto a variable pair.

    For each cell of a grid x grid sweep over (var_i, var_j), the other
    variables are drawn uniformly ``samples`` times and the predictions
    reduced by max (or mean), giving the attainable-efficiency manifold
    over that pair. Returns (matrix, var_i values, var_j values).
    """
    if var_i == var_j:
        raise ValueError("need two distinct variables")
    if reduce not in ("max", "mean"):
        raise ValueError("reduce must be 'max' or 'mean'")
    rng = np.random.default_rng(seed)
    vi, vj = space.variables[var_i], space.variables[var_j]
    xi = np.linspace(vi.lo, vi.hi, grid)
    xj = np.linspace(vj.lo, vj.hi, grid)
    others = [d for d in range(space.dim) if d not in (var_i, var_j)]
    lo, hi = space.lo_array(), space.hi_array()

    block = np.empty((grid * grid * samples, space.dim))
    row = 0
    for a in range(grid):
        for b in range(grid):
            draw = rng.random((samples, len(others)))
            block[row:row + samples, var_i] = xi[a]
            block[row:row + samples, var_j] = xj[b]
            for c, d in enumerate(others):
                block[row:row + samples, d] = lo[d] + draw[:, c] * (hi[d] - lo[d])
            row += samples
    preds = gp.predict_mean(objective, normalize(block, space))
    cells = preds.reshape(grid, grid, samples)
    matrix = cells.max(axis=2) if reduce == "max" else cells.mean(axis=2)
    return matrix, xi, xj


def history_summary(state: CampaignState) -> dict:
    """Best-so-far trace and per-round level histograms for the UI."""
    trace = []
    best = None
    ordered = sorted(
        state.observations,
        key=lambda o: (o.round_index, o.condition_id if o.condition_id is not None else 0),
    )
    for i, o in enumerate(ordered):
        if o.pce_pct is not None:
            best = o.pce_pct if best is None else max(best, o.pce_pct)
        trace.append(
            {
                "index": i,
                "condition_id": o.condition_id,
                "round_index": o.round_index,
                "pce_pct": o.pce_pct,
                "film_pass": o.film_pass,
                "best_so_far": best,
            }
        )
    rounds = []
    for r in range(state.round_index + (1 if state.status == STATUS_AWAITING else 0)):
        obs_r = [o for o in ordered if o.round_index == r]
        if not obs_r and r >= len(state.config.schedule):
            continue
        hist = {}
        for d, v in enumerate(state.space.variables):
            levels = v.levels()
            counts = [0] * len(levels)
            for o in obs_r:
                snapped = snap_to_grid(o.condition.values, state.space)
                k = int(round((snapped.values[d] - v.lo) / v.step)) if v.hi > v.lo else 0
                counts[min(max(k, 0), len(levels) - 1)] += 1
            hist[v.name] = {"levels": [float(x) for x in levels], "counts": counts}
        method = (
            state.config.schedule[r] if r < len(state.config.schedule) else "off-plan"
        )
        rounds.append({"round_index": r, "method": method, "histograms": hist})
    return {"best_so_far": trace, "rounds": rounds}


# ---------------------------------------------------------------------------
# Snapshots


def _observation_to_json(o: Observation) -> dict:
    return {
        "condition": list(o.condition.values),
        "pce_pct": o.pce_pct,
        "film_pass": o.film_pass,
        "round_index": o.round_index,
        "condition_id": o.condition_id,
        "metadata": dict(o.metadata),
    }


def _observation_from_json(doc: Mapping) -> Observation:
    return Observation(
        condition=ProcessCondition(tuple(doc["condition"])),
        pce_pct=doc["pce_pct"],
        film_pass=doc["film_pass"],
        round_index=doc["round_index"],
        condition_id=doc["condition_id"],
        metadata=dict(doc.get("metadata", {})),
    )


def _plan_to_json(p: RoundPlan) -> dict:
    return {
        "round_index": p.round_index,
        "method": p.method,
        "conditions": [list(c.values) for c in p.conditions],
    }


def _plan_from_json(doc: Mapping) -> RoundPlan:
    return RoundPlan(
        round_index=doc["round_index"],
        method=doc["method"],
        conditions=tuple(ProcessCondition(tuple(v)) for v in doc["conditions"]),
    )


def save_snapshot(state: CampaignState) -> dict:
    """Full state as a JSON-ready document."""
    cfg = state.config
    return {
        "schema_version": SNAPSHOT_SCHEMA_VERSION,
        "id": state.id,
        "space": space_to_json(state.space),
        "config": {
            "batch_size": cfg.batch_size,
            "schedule": list(cfg.schedule),
            "beta": cfg.beta,
            "film_floor": cfg.film_floor,
            "film_threshold": cfg.film_threshold,
            "prior_floor": cfg.prior_floor,
            "seed": cfg.seed,
            "refine_mix": list(cfg.refine_mix) if cfg.refine_mix else None,
            "window_spec": cfg.window_spec.to_json(),
            "objective_include_failed": cfg.objective_include_failed,
            "fit_restarts": cfg.fit_restarts,
            "fit_max_iter": cfg.fit_max_iter,
        },
        "round_index": state.round_index,
        "status": state.status,
        "observations": [_observation_to_json(o) for o in state.observations],
        "prior_dataset": (
            [_observation_to_json(o) for o in state.prior_dataset]
            if state.prior_dataset is not None
            else None
        ),
        "pending_plan": _plan_to_json(state.pending_plan) if state.pending_plan else None,
        "plans": [_plan_to_json(p) for p in state.plans],
        "window": space_to_json(state.window) if state.window else None,
        "model_snapshots": state.model_snapshots,
    }


def load_snapshot(document: Mapping | str) -> CampaignState:
    """Rebuild a campaign from a snapshot document or its JSON text."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise CorruptSnapshotError(f"unparseable snapshot: {exc}") from exc
    if not isinstance(document, Mapping):
        raise CorruptSnapshotError("snapshot must be a JSON object")
    version = document.get("schema_version")
    if version != SNAPSHOT_SCHEMA_VERSION:
        raise SchemaVersionMismatchError(
            f"snapshot schema {version!r} unsupported (expected {SNAPSHOT_SCHEMA_VERSION})"
        )
    try:
        cfg_doc = document["config"]
        config = CampaignConfig(
            batch_size=cfg_doc["batch_size"],
            schedule=tuple(cfg_doc["schedule"]),
            beta=cfg_doc["beta"],
            film_floor=cfg_doc["film_floor"],
            film_threshold=cfg_doc["film_threshold"],
            prior_floor=cfg_doc["prior_floor"],
            seed=cfg_doc["seed"],
            refine_mix=tuple(cfg_doc["refine_mix"]) if cfg_doc["refine_mix"] else None,
            window_spec=WindowSpec.from_json(cfg_doc["window_spec"]),
            objective_include_failed=cfg_doc["objective_include_failed"],
            fit_restarts=cfg_doc["fit_restarts"],
            fit_max_iter=cfg_doc["fit_max_iter"],
        )
        state = CampaignState(
            id=document["id"],
            space=space_from_json(document["space"]),
            config=config,
            observations=[_observation_from_json(o) for o in document["observations"]],
            prior_dataset=(
                [_observation_from_json(o) for o in document["prior_dataset"]]
                if document["prior_dataset"] is not None
                else None
            ),
            round_index=document["round_index"],
            status=document["status"],
            pending_plan=(
                _plan_from_json(document["pending_plan"])
                if document["pending_plan"]
                else None
            ),
            plans=[_plan_from_json(p) for p in document["plans"]],
            window=space_from_json(document["window"]) if document["window"] else None,
            model_snapshots=dict(document.get("model_snapshots", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSnapshotError(f"snapshot missing or malformed field: {exc}") from exc
    if state.status not in (STATUS_READY, STATUS_AWAITING, STATUS_FINISHED):
        raise CorruptSnapshotError(f"unknown status {state.status!r}")
    return state
