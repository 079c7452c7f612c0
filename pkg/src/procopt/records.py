"""Observation records and their CSV schemas.

Two CSV layouts exist:

* the canonical observation schema used by the campaign service and CLI
  (``speed_cm_s`` / ``spray_ml_min``, canonical units), and
* the bundled raw dataset layout (``speed_mm_s`` / ``spray_ul_min``), whose
  unit tags are resolved at ingestion.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import MalformedRecordError
from .space import ParameterSpace, ProcessCondition, canonicalize_units

PCE_SANITY_MAX = 35.0  # physical upper bound for a sane efficiency entry (%)

OBSERVATION_HEADER = (
    "condition_id,temperature_C,speed_cm_s,spray_ml_min,plasma_height_cm,"
    "plasma_gas_l_min,plasma_duty_pct,pce_pct,film_pass"
)

# column -> (variable name, unit carried by that column)
_CANONICAL_COLUMNS = {
    "temperature_C": ("temperature", "C"),
    "speed_cm_s": ("speed", "cm/s"),
    "spray_ml_min": ("spray_flow", "mL/min"),
    "plasma_height_cm": ("plasma_height", "cm"),
    "plasma_gas_l_min": ("plasma_gas_flow", "L/min"),
    "plasma_duty_pct": ("plasma_duty_cycle", "%"),
}

_RAW_DATASET_COLUMNS = {
    "temperature_C": ("temperature", "C"),
    "speed_mm_s": ("speed", "mm/s"),
    "spray_ul_min": ("spray_flow", "uL/min"),
    "plasma_height_cm": ("plasma_height", "cm"),
    "plasma_gas_l_min": ("plasma_gas_flow", "L/min"),
    "plasma_duty_pct": ("plasma_duty_cycle", "%"),
}


@dataclass(frozen=True)
class Observation:
    """One measured process condition."""

    condition: ProcessCondition
    pce_pct: float | None
    film_pass: bool
    round_index: int = 0
    condition_id: int | None = None
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.pce_pct is not None:
            if not math.isfinite(self.pce_pct) or self.pce_pct < 0:
                raise ValueError(f"pce_pct {self.pce_pct!r} must be finite and >= 0")
            if self.pce_pct >= PCE_SANITY_MAX:
                raise ValueError(
                    f"pce_pct {self.pce_pct} exceeds sanity bound {PCE_SANITY_MAX}"
                )


def _parse_rows(text: str, columns: Mapping[str, tuple[str, str]], space: ParameterSpace,
                round_index: int = 0) -> list[Observation]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise MalformedRecordError(0, "empty file")
    missing = [c for c in ("condition_id", *columns, "pce_pct", "film_pass")
               if c not in reader.fieldnames]
    if missing:
        raise MalformedRecordError(0, f"missing columns: {', '.join(missing)}")
    out: list[Observation] = []
    for rownum, row in enumerate(reader, start=1):
        try:
            cid = int(row["condition_id"])
            values = {}
            units = {}
            for col, (name, unit) in columns.items():
                values[name] = float(row[col])
                units[name] = unit
            condition = canonicalize_units(values, units, space)
            raw_pce = (row["pce_pct"] or "").strip()
            pce = float(raw_pce) if raw_pce not in ("", "-") else None
            fp_raw = (row["film_pass"] or "").strip().lower()
            if fp_raw in ("true", "yes", "1"):
                film = True
            elif fp_raw in ("false", "no", "0"):
                film = False
            else:
                raise ValueError(f"bad film_pass value {row['film_pass']!r}")
            meta = {}
            if "relative_humidity_pct" in row and (row.get("relative_humidity_pct") or "").strip():
                meta["relative_humidity_pct"] = float(row["relative_humidity_pct"])
            if "notes" in row and (row.get("notes") or "").strip():
                meta["notes"] = row["notes"].strip()
            out.append(Observation(condition, pce, film, round_index, cid, meta))
        except MalformedRecordError:
            raise
        except Exception as exc:
            raise MalformedRecordError(rownum, str(exc)) from exc
    if not out:
        raise MalformedRecordError(0, "no data rows")
    return out


def parse_observation_csv(text: str, space: ParameterSpace,
                          round_index: int = 0) -> list[Observation]:
    """Parse the canonical observation CSV schema."""
    return _parse_rows(text, _CANONICAL_COLUMNS, space, round_index)


def parse_raw_dataset_csv(text: str, space: ParameterSpace) -> list[Observation]:
    """Parse the bundled raw-unit dataset layout."""
    return _parse_rows(text, _RAW_DATASET_COLUMNS, space)


def observations_to_csv(observations: Iterable[Observation]) -> str:
    """Serialize observations using the canonical schema (bit-exact header)."""
    buf = io.StringIO()
    buf.write(OBSERVATION_HEADER + "\n")
    for ob in observations:
        vals = ob.condition.values
        pce = "" if ob.pce_pct is None else f"{ob.pce_pct:g}"
        film = "true" if ob.film_pass else "false"
        cid = "" if ob.condition_id is None else str(ob.condition_id)
        buf.write(
            f"{cid},{vals[0]:g},{vals[1]:g},{vals[2]:g},{vals[3]:g},"
            f"{vals[4]:g},{vals[5]:g},{pce},{film}\n"
        )
    return buf.getvalue()


def dedup_max_pce(observations: Iterable[Observation]) -> list[Observation]:
    """Collapse repeated conditions, keeping the highest measured efficiency.

    Rows without a measurement never displace a measured one; among measured
    rows the maximum wins; first occurrence wins on exact ties.
    """
    best: dict[tuple, Observation] = {}
    order: list[tuple] = []
    for ob in observations:
        key = ob.condition.key()
        if key not in best:
            best[key] = ob
            order.append(key)
            continue
        cur = best[key]
        if ob.pce_pct is not None and (cur.pce_pct is None or ob.pce_pct > cur.pce_pct):
            best[key] = ob
    return [best[k] for k in order]
