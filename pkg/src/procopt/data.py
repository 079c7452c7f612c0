"""Loaders for the bundled parameter spaces and experimental dataset."""

from __future__ import annotations

from importlib import resources

from .records import Observation, parse_raw_dataset_csv
from .space import ParameterSpace, space_from_json

import json

_ASSETS = resources.files(__package__) / "_assets"

# round boundaries of the bundled campaign: 5 batches of 20 condition ids
ROUND_OF_CONDITION_ID = {cid: cid // 20 for cid in range(100)}


def canonical_space() -> ParameterSpace:
    """The six-variable production grid (41,580 conditions)."""
    return space_from_json(json.loads((_ASSETS / "rspp_grid.json").read_text()))


def final_round_space() -> ParameterSpace:
    """The reduced, finer grid used for the last local-search round."""
    return space_from_json(
        json.loads((_ASSETS / "rspp_refine_grid.json").read_text())
    )


def load_dataset() -> list[Observation]:
    """All bundled experimental observations, canonical units.

    99 rows: condition id 13 is absent in the source records and is left as
    a documented gap rather than imputed. Round indices follow the bundled
    campaign's batch-of-20 schedule.
    """
    text = (_ASSETS / "table_s4.csv").read_text()
    obs = parse_raw_dataset_csv(text, canonical_space())
    return [
        Observation(
            condition=ob.condition,
            pce_pct=ob.pce_pct,
            film_pass=ob.film_pass,
            round_index=ROUND_OF_CONDITION_ID[ob.condition_id],
            condition_id=ob.condition_id,
            metadata=ob.metadata,
        )
        for ob in obs
    ]
