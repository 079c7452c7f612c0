"""HTTP API for campaign orchestration.

Thin JSON layer over :mod:`procopt.campaign`: one write lock per campaign
serializes mutations while reads run against the in-memory state. The
optional ``persist_dir`` mirrors every mutation to a snapshot file so the
service can restart without losing campaigns.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import campaign as camp
from . import data
from .errors import ProcoptError
from .gp import model_snapshot
from .records import (
    OBSERVATION_HEADER,
    Observation,
    observations_to_csv,
)
from .space import ProcessCondition, space_from_json, space_to_json


class CampaignStore:
    """In-memory campaign registry with per-campaign write locks."""

    def __init__(self, persist_dir: str | Path | None = None):
        self._states: dict[str, camp.CampaignState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self.persist_dir = Path(persist_dir) if persist_dir else None
        if self.persist_dir:
            self.persist_dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.persist_dir.glob("*.json")):
                state = camp.load_snapshot(path.read_text())
                self._states[state.id] = state
                self._locks[state.id] = threading.Lock()

    def add(self, state: camp.CampaignState) -> None:
        with self._registry_lock:
            self._states[state.id] = state
            self._locks[state.id] = threading.Lock()
        self._persist(state)

    def get(self, campaign_id: str) -> camp.CampaignState:
        try:
            return self._states[campaign_id]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no campaign {campaign_id!r}")

    def lock(self, campaign_id: str) -> threading.Lock:
        self.get(campaign_id)
        return self._locks[campaign_id]

    def _persist(self, state: camp.CampaignState) -> None:
        if self.persist_dir:
            path = self.persist_dir / f"{state.id}.json"
            path.write_text(json.dumps(camp.save_snapshot(state), indent=2))

    def checkpoint(self, state: camp.CampaignState) -> None:
        self._persist(state)


class CreateCampaignRequest(BaseModel):
    space: Optional[list[dict]] = None          # default: bundled production grid
    batch_size: int = 20
    schedule: Optional[list[str]] = None
    beta: float = 1.0
    seed: int = 0
    refine_mix: Optional[list[int]] = None
    objective_include_failed: bool = False
    prior_dataset_csv: Optional[str] = None


class ResultRow(BaseModel):
    condition_id: Optional[int] = None
    values: list[float] = Field(..., description="canonical-unit coordinates")
    pce_pct: Optional[float] = None
    film_pass: bool = True
    relative_humidity_pct: Optional[float] = None
    notes: Optional[str] = None


class ResultsRequest(BaseModel):
    rows: Optional[list[ResultRow]] = None
    csv: Optional[str] = None
    allow_off_plan: bool = False


def _campaign_json(state: camp.CampaignState) -> dict:
    best = state.best_observation()
    return {
        "id": state.id,
        "status": state.status,
        "round_index": state.round_index,
        "schedule": list(state.config.schedule),
        "batch_size": state.config.batch_size,
        "space": space_to_json(state.space),
        "observation_count": len(state.observations),
        "best": None
        if best is None
        else {
            "condition_id": best.condition_id,
            "values": list(best.condition.values),
            "pce_pct": best.pce_pct,
        },
        "window": space_to_json(state.window) if state.window else None,
    }


def _plan_json(state: camp.CampaignState) -> dict:
    plan = state.pending_plan
    if plan is None:
        raise HTTPException(status_code=409, detail="no pending plan; advance first")
    return {
        "round_index": plan.round_index,
        "method": plan.method,
        "conditions": [
            {"slot": i, "values": list(c.values)} for i, c in enumerate(plan.conditions)
        ],
        "variable_names": list(state.space.names),
    }


def create_app(store: CampaignStore | None = None, ui_dir: str | Path | None = None) -> FastAPI:
    store = store or CampaignStore()
    app = FastAPI(title="procopt campaign service")
    app.state.store = store

    @app.exception_handler(ProcoptError)
    async def _domain_error(_, exc: ProcoptError):
        from fastapi.responses import JSONResponse

        status = 409 if exc.__class__.__name__ in ("NotReadyError",) else 400
        return JSONResponse(
            status_code=status,
            content={"detail": str(exc), "error": exc.__class__.__name__},
        )

    @app.post("/campaigns")
    def create_campaign(req: CreateCampaignRequest):
        space = space_from_json(req.space) if req.space else data.canonical_space()
        kwargs = {}
        if req.schedule:
            kwargs["schedule"] = tuple(req.schedule)
        if req.refine_mix:
            kwargs["refine_mix"] = tuple(req.refine_mix)
        config = camp.CampaignConfig(
            batch_size=req.batch_size,
            beta=req.beta,
            seed=req.seed,
            objective_include_failed=req.objective_include_failed,
            **kwargs,
        )
        prior = None
        if req.prior_dataset_csv:
            from .records import parse_observation_csv

            prior = parse_observation_csv(req.prior_dataset_csv, space)
        state = camp.new_campaign(space, config, prior_dataset=prior)
        store.add(state)
        return _campaign_json(state)

    @app.get("/campaigns/{campaign_id}")
    def get_campaign(campaign_id: str):
        return _campaign_json(store.get(campaign_id))

    @app.post("/campaigns/{campaign_id}/suggestions")
    def advance(campaign_id: str):
        with store.lock(campaign_id):
            state = store.get(campaign_id)
            camp.suggest_next_round(state)
            store.checkpoint(state)
            return _plan_json(state)

    @app.get("/campaigns/{campaign_id}/suggestions")
    def current_plan(campaign_id: str, format: str = Query("json")):
        state = store.get(campaign_id)
        if format == "csv":
            plan = state.pending_plan
            if plan is None:
                raise HTTPException(status_code=409, detail="no pending plan")
            lines = [OBSERVATION_HEADER]
            for i, c in enumerate(plan.conditions):
                vals = ",".join(f"{v:g}" for v in c.values)
                lines.append(f"{i},{vals},,")
            return Response("\n".join(lines) + "\n", media_type="text/csv")
        return _plan_json(state)

    @app.post("/campaigns/{campaign_id}/results")
    def ingest(campaign_id: str, req: ResultsRequest):
        with store.lock(campaign_id):
            state = store.get(campaign_id)
            if req.csv is not None and req.rows:
                raise HTTPException(status_code=400, detail="pass either rows or csv")
            if req.csv is not None:
                records: str | list[Observation] = req.csv
            elif req.rows:
                records = []
                for i, row in enumerate(req.rows):
                    meta = {}
                    if row.relative_humidity_pct is not None:
                        meta["relative_humidity_pct"] = row.relative_humidity_pct
                    if row.notes:
                        meta["notes"] = row.notes
                    try:
                        records.append(
                            Observation(
                                condition=ProcessCondition(tuple(row.values)),
                                pce_pct=row.pce_pct,
                                film_pass=row.film_pass,
                                condition_id=row.condition_id,
                                metadata=meta,
                            )
                        )
                    except ValueError as exc:
                        raise HTTPException(
                            status_code=400, detail=f"row {i}: {exc}"
                        )
            else:
                raise HTTPException(status_code=400, detail="no rows or csv given")
            camp.ingest_results(state, records, allow_off_plan=req.allow_off_plan)
            store.checkpoint(state)
            return _campaign_json(state)

    @app.get("/campaigns/{campaign_id}/manifold")
    def manifold(
        campaign_id: str,
        xi: int = Query(..., ge=0),
        xj: int = Query(..., ge=0),
        reduce: str = Query("max"),
        seed: int = Query(0),
        grid: int = Query(20, ge=2, le=50),
        samples: int = Query(200, ge=1, le=2000),
    ):
        state = store.get(campaign_id)
        if xi >= state.space.dim or xj >= state.space.dim or xi == xj:
            raise HTTPException(status_code=400, detail="bad variable pair")
        try:
            objective = camp.fit_objective_model(state)
        except ProcoptError as exc:
            raise HTTPException(status_code=409, detail=f"model not ready: {exc}")
        matrix, xi_vals, xj_vals = camp.manifold_projection(
            objective, state.space, xi, xj, grid=grid, samples=samples,
            seed=seed, reduce=reduce,
        )
        overlays = {"pass": [], "fail": []}
        for o in state.observations:
            target = "pass" if o.film_pass else "fail"
            overlays[target].append(
                [o.condition.values[xi], o.condition.values[xj]]
            )
        return {
            "xi": xi,
            "xj": xj,
            "xi_name": state.space.names[xi],
            "xj_name": state.space.names[xj],
            "reduce": reduce,
            "seed": seed,
            "xi_values": [float(v) for v in xi_vals],
            "xj_values": [float(v) for v in xj_vals],
            "matrix": [[float(x) for x in row] for row in matrix],
            "overlays": overlays,
            "model": model_snapshot(objective),
        }

    @app.get("/campaigns/{campaign_id}/history")
    def history(campaign_id: str):
        return camp.history_summary(store.get(campaign_id))

    @app.get("/campaigns/{campaign_id}/cost")
    def cost(campaign_id: str, batch: int = Query(..., ge=1)):
        store.get(campaign_id)
        total, avg = camp.batch_time(batch)
        return {"batch": batch, "total_minutes": total, "avg_minutes_per_substrate": avg}

    @app.get("/campaigns/{campaign_id}/export")
    def export(campaign_id: str):
        state = store.get(campaign_id)
        return Response(observations_to_csv(state.observations), media_type="text/csv")

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
