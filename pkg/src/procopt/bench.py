"""Virtual benchmarking of planners against the teacher model.

Each planner is run as a seeded ensemble against the teacher serving as
ground truth; results aggregate into median and 5-95% envelopes of the
best-so-far curve plus counts of conditions above normalized-efficiency
thresholds, from which enhancement and acceleration factors derive.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .acquisition import AcquisitionConfig, ConstraintSpec, select_batch
from .errors import InvalidConfigError
from .gp import GpFitConfig, GpModel, fit, predict_batch
from .samplers import SamplingTrace, TraceEntry, fspgs_run, lhs, ovats_run
from .space import ParameterSpace, ProcessCondition, grid_array, grid_indices, normalize
from .teacher import TeacherModel, normalize_pce

METHODS = ("bo", "bo_kc", "lhs", "ovats", "fspgs")
DEFAULT_THRESHOLDS = (0.8, 0.85, 0.9)


@dataclass(frozen=True)
class VirtualBoConfig:
    """Controls for simulated model-guided campaigns."""

    batch_size: int = 20
    beta: float = 1.0
    film_floor: float = 0.5
    film_threshold: float = 0.5
    fit_restarts: int = 8
    fit_max_iter: int = 100


def _derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence((seed, stream)).generate_state(1)[0])


def run_virtual_campaign(
    method: str,
    teacher: TeacherModel,
    space: ParameterSpace,
    budget: int,
    batch_size: int = 20,
    seed: int = 0,
    film_emulator: GpModel | None = None,
    config: VirtualBoConfig | None = None,
) -> SamplingTrace:
    """One seeded simulated campaign; the teacher is the oracle.

    ``bo`` starts from a space-filling batch and continues with penalized
    constrained-UCB batches. ``bo_kc`` additionally emulates the film
    screen: a condition whose emulator mean falls below 0.5 consumes
    budget without producing an efficiency measurement, and the campaign
    learns a film-quality constraint from those outcomes. The model-free
    planners delegate to :mod:`procopt.samplers`.
    """
    if method not in METHODS:
        raise InvalidConfigError(f"unknown method {method!r}")
    if budget < 1:
        raise InvalidConfigError("budget must be >= 1")
    cfg = config or VirtualBoConfig(batch_size=batch_size, beta=1.0)

    def oracle(cond: ProcessCondition) -> float:
        return teacher.predict_condition(cond)

    if method == "lhs":
        conditions = lhs(space, min(budget, space.grid_size), seed)
        entries = [
            TraceEntry(c, oracle(c), i // batch_size)
            for i, c in enumerate(conditions)
        ]
        return SamplingTrace("lhs", seed, tuple(entries))
    if method == "ovats":
        return ovats_run(oracle, space, budget, seed)
    if method == "fspgs":
        return fspgs_run(oracle, space, budget, seed)
    if method == "bo_kc" and film_emulator is None:
        raise InvalidConfigError("bo_kc requires a film emulator model")
    return _run_bo(method, teacher, space, budget, batch_size, seed, film_emulator, cfg)


def _run_bo(
    method: str,
    teacher: TeacherModel,
    space: ParameterSpace,
    budget: int,
    batch_size: int,
    seed: int,
    film_emulator: GpModel | None,
    cfg: VirtualBoConfig,
) -> SamplingTrace:
    grid = grid_array(space)
    grid_norm = normalize(grid, space)
    counts = space.level_counts
    tried = np.zeros(grid.shape[0], dtype=bool)

    entries: list[TraceEntry] = []
    obs_norm: list[np.ndarray] = []
    obs_y: list[float] = []
    film_norm: list[np.ndarray] = []
    film_labels: list[float] = []
    acq_cfg = AcquisitionConfig(beta=cfg.beta)

    def flat_index(cond: ProcessCondition) -> int:
        return int(np.ravel_multi_index(grid_indices(cond, space), counts))

    def measure(cond: ProcessCondition, round_index: int) -> None:
        z = normalize(cond.as_array(), space)
        passes = True
        if method == "bo_kc":
            mean, _ = predict_batch(film_emulator, z[None, :])
            passes = bool(mean[0] >= cfg.film_threshold)
            film_norm.append(z)
            film_labels.append(1.0 if passes else 0.0)
        if passes:
            value = teacher.predict_condition(cond)
            obs_norm.append(z)
            obs_y.append(value)
        else:
            value = float("nan")
        entries.append(TraceEntry(cond, value, round_index))
        tried[flat_index(cond)] = True

    for cond in lhs(space, min(batch_size, budget), _derive_seed(seed, 0)):
        measure(cond, 0)

    round_index = 0
    while len(entries) < budget:
        round_index += 1
        remaining = budget - len(entries)
        take = min(batch_size, remaining)
        if len(obs_y) >= 2 and len(np.unique(np.array(obs_norm), axis=0)) >= 2:
            fit_cfg = GpFitConfig(
                restarts=cfg.fit_restarts,
                max_iter=cfg.fit_max_iter,
                seed=_derive_seed(seed, round_index),
            )
            objective = fit(np.array(obs_norm), np.array(obs_y), fit_cfg)
            constraints: list[ConstraintSpec] = []
            if method == "bo_kc" and len(set(film_labels)) >= 1 and len(film_labels) >= 2:
                film_model = fit(np.array(film_norm), np.array(film_labels), fit_cfg)
                constraints.append(
                    ConstraintSpec(film_model, cfg.film_threshold, cfg.film_floor,
                                   clamp_unit=True)
                )
            candidates = np.flatnonzero(~tried)
            sel = select_batch(
                objective, constraints, grid_norm[candidates], take, acq_cfg,
                seed=_derive_seed(seed, 1000 + round_index),
            )
            picked = candidates[sel]
            conds = [ProcessCondition(tuple(grid[i])) for i in picked]
        else:
            # not enough usable measurements yet: fall back to space filling
            pool = [
                c for c in lhs(space, min(4 * take, space.grid_size),
                               _derive_seed(seed, 2000 + round_index))
                if not tried[flat_index(c)]
            ]
            conds = pool[:take]
        for cond in conds:
            measure(cond, round_index)
        if not conds:
            break
    return SamplingTrace(method, seed, tuple(entries))


# ---------------------------------------------------------------------------
# Ensembles and aggregation


@dataclass(frozen=True)
class MethodEnsemble:
    """Seeded-run statistics for one planning method."""

    method: str
    budget: int
    reference: float
    best_curves: np.ndarray        # (runs, budget) normalized best-so-far
    counts: dict[float, np.ndarray]  # threshold -> per-run counts

    @property
    def runs(self) -> int:
        return self.best_curves.shape[0]

    def median_curve(self) -> np.ndarray:
        return np.quantile(self.best_curves, 0.5, axis=0)

    def envelope(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.quantile(self.best_curves, 0.05, axis=0),
            np.quantile(self.best_curves, 0.95, axis=0),
        )

    def median_count(self, threshold: float) -> float:
        return float(np.median(self.counts[threshold]))

    def first_reach(self, mark: float) -> int | None:
        """1-based condition count at which the median curve reaches ``mark``."""
        med = self.median_curve()
        hits = np.flatnonzero(med >= mark)
        return int(hits[0]) + 1 if hits.size else None


def trace_statistics(
    trace: SamplingTrace,
    reference: float,
    budget: int,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> tuple[np.ndarray, dict[float, int]]:
    """Normalized best-so-far curve (padded to budget) and threshold counts.

    Counts are over distinct conditions, so planners that re-fabricate a
    condition (coordinate re-screens) do not double-count successes.
    """
    entries = trace.entries[:budget]
    norm_values = np.array([
        normalize_pce(e.value, reference) if np.isfinite(e.value) else np.nan
        for e in entries
    ])
    curve = np.empty(budget)
    best = 0.0  # nothing measured yet counts as zero efficiency
    for i in range(budget):
        if i < norm_values.shape[0]:
            v = norm_values[i]
            if np.isfinite(v) and v > best:
                best = v
        curve[i] = best
    by_condition: dict[tuple, float] = {}
    for e, v in zip(entries, norm_values):
        if np.isfinite(v):
            key = e.condition.key()
            by_condition[key] = max(by_condition.get(key, -np.inf), v)
    counts = {
        t: int(sum(1 for v in by_condition.values() if v >= t)) for t in thresholds
    }
    return curve, counts


def ensemble(
    method: str,
    teacher: TeacherModel,
    space: ParameterSpace,
    budget: int,
    runs: int = 100,
    base_seed: int = 0,
    batch_size: int = 20,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    film_emulator: GpModel | None = None,
    config: VirtualBoConfig | None = None,
    workers: int | None = None,
) -> MethodEnsemble:
    """Independent seeded runs (seeds base_seed + i) aggregated per spec.

    Runs execute in parallel when ``workers`` allows; aggregation is
    order-independent.
    """
    if runs < 2:
        raise InvalidConfigError("need at least 2 runs")
    jobs = [
        (method, teacher, space, budget, batch_size, base_seed + i, film_emulator, config)
        for i in range(runs)
    ]
    if workers is None:
        workers = min(os.cpu_count() or 1, runs)
    if workers > 1 and method in ("bo", "bo_kc"):
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_run_campaign_job, jobs, chunksize=1))
    else:
        traces = [_run_campaign_job(j) for j in jobs]
    return ensemble_from_traces(method, traces, teacher.reference, budget, thresholds)


def ensemble_from_traces(
    method: str,
    traces: Sequence[SamplingTrace],
    reference: float,
    budget: int,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> MethodEnsemble:
    """Aggregate pre-computed traces; order-independent."""
    runs = len(traces)
    curves = np.empty((runs, budget))
    counts: dict[float, np.ndarray] = {t: np.empty(runs) for t in thresholds}
    for i, trace in enumerate(traces):
        curve, cts = trace_statistics(trace, reference, budget, thresholds)
        curves[i] = curve
        for t in thresholds:
            counts[t][i] = cts[t]
    return MethodEnsemble(method, budget, reference, curves, counts)


def _run_campaign_job(job) -> SamplingTrace:
    method, teacher, space, budget, batch_size, seed, film_emulator, config = job
    return run_virtual_campaign(
        method, teacher, space, budget, batch_size, seed,
        film_emulator=film_emulator, config=config,
    )


def enhancement_factor(a: MethodEnsemble, b: MethodEnsemble, threshold: float) -> float:
    """Ratio of median above-threshold counts, a over b."""
    cb = b.median_count(threshold)
    ca = a.median_count(threshold)
    return float("inf") if cb == 0 else ca / cb


def acceleration_factor(a: MethodEnsemble, b: MethodEnsemble, mark: float) -> float | None:
    """How many times fewer conditions ``a`` needs to first reach ``mark``."""
    na, nb = a.first_reach(mark), b.first_reach(mark)
    if na is None or nb is None:
        return None
    return nb / na


def write_report(
    results: dict[str, MethodEnsemble],
    marks: dict[str, float],
    outdir,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> dict:
    """Envelope CSVs per method plus a JSON summary; returns the summary."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for method, ens in results.items():
        lo, hi = ens.envelope()
        med = ens.median_curve()
        lines = ["condition,median,q05,q95"]
        for i in range(ens.budget):
            lines.append(f"{i + 1},{med[i]:.6f},{lo[i]:.6f},{hi[i]:.6f}")
        (outdir / f"envelope_{method}.csv").write_text("\n".join(lines) + "\n")
    summary: dict = {
        "marks": marks,
        "methods": {},
        "enhancement_vs_bo": {},
        "acceleration_vs_bo": {},
    }
    for method, ens in results.items():
        summary["methods"][method] = {
            "runs": ens.runs,
            "budget": ens.budget,
            "final_median_best": float(ens.median_curve()[-1]),
            "median_counts": {str(t): ens.median_count(t) for t in thresholds},
        }
    if "bo" in results:
        bo = results["bo"]
        for method, ens in results.items():
            if method == "bo":
                continue
            summary["enhancement_vs_bo"][method] = {
                str(t): enhancement_factor(bo, ens, t) for t in thresholds
            }
            summary["acceleration_vs_bo"][method] = {
                str(t): acceleration_factor(bo, ens, t) for t in thresholds
            }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, default=str) + "\n")
    return summary


def plot_report(results: dict[str, MethodEnsemble], outdir) -> list[str]:
    """Best-so-far envelopes and first-100 value distributions (PNG).

    Requires matplotlib; returns the written file names.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    colors = {"bo": "tab:blue", "bo_kc": "darkgreen", "lhs": "tab:red",
              "fspgs": "black", "ovats": "olive"}
    written = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for method, ens in results.items():
        x = np.arange(1, ens.budget + 1)
        lo, hi = ens.envelope()
        c = colors.get(method, None)
        ax.plot(x, ens.median_curve(), label=method, color=c)
        ax.fill_between(x, lo, hi, alpha=0.15, color=c)
    ax.set_xlabel("process conditions")
    ax.set_ylabel("best normalized efficiency")
    ax.legend()
    fig.tight_layout()
    path = outdir / "best_curves.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(str(path))

    fig, axes = plt.subplots(1, len(results), figsize=(4 * len(results), 3.2),
                             sharey=True, squeeze=False)
    for ax, (method, ens) in zip(axes[0], results.items()):
        finals = ens.best_curves[:, min(99, ens.budget - 1)]
        ax.hist(finals, bins=20, color=colors.get(method, None))
        ax.set_title(method)
        ax.set_xlabel("best normalized efficiency at 100")
    fig.tight_layout()
    path = outdir / "distributions.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(str(path))
    return written
