"""Gradient-boosted "teacher" regressor and benchmark statistics.

The teacher is trained on the bundled experimental data and stands in for
the real process during simulated optimization campaigns: it only has to
rank conditions the way the lab would, which is why training quality is
judged by the Spearman rank correlation rather than RMSE. Predicted
efficiencies are reported normalized by the highest prediction over the
experimentally sampled conditions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn.ensemble import GradientBoostingRegressor

from .errors import DegenerateDataError
from .records import Observation, dedup_max_pce
from .samplers import random_sample_array
from .space import ParameterSpace, ProcessCondition


@dataclass(frozen=True)
class TeacherConfig:
    """Boosting hyperparameters.

    Deep, feature- and row-subsampled trees with a slow learning rate both
    pin down the training set (rank-perfect) and damp extrapolation into
    unexplored grid regions, keeping the predicted-efficiency distribution
    realistically thin-tailed.
    """

    n_estimators: int = 1500
    max_depth: int = 7
    learning_rate: float = 0.01
    subsample: float = 0.7
    max_features: float | None = 0.4
    min_samples_leaf: int = 1
    random_state: int = 0
    min_observations: int = 50


@dataclass(frozen=True)
class TeacherModel:
    """Deterministic, pure stand-in for the measured process response."""

    booster: GradientBoostingRegressor | None
    learning_rate: float
    base_prediction: float
    train_inputs: np.ndarray       # (n, d), canonical units
    train_targets: np.ndarray      # (n,)

    @property
    def trees(self) -> list:
        """Underlying regression trees (empty for a constant model)."""
        if self.booster is None:
            return []
        return [stage[0].tree_ for stage in self.booster.estimators_]

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.booster is None:
            return np.full(X.shape[0], self.base_prediction)
        return self.booster.predict(X)

    def predict_condition(self, condition: ProcessCondition) -> float:
        return float(self.predict(condition.as_array()[None, :])[0])

    @property
    def reference(self) -> float:
        """Highest prediction over the experimentally sampled conditions."""
        return float(self.predict(self.train_inputs).max())


def fit_teacher(
    observations: Iterable[Observation],
    config: TeacherConfig = TeacherConfig(),
) -> TeacherModel:
    """Least-squares gradient boosting on measured conditions.

    Repeated conditions collapse to their best efficiency and unmeasured
    rows are dropped before fitting. ``max_depth=0`` degenerates to the
    constant mean predictor.
    """
    ded = dedup_max_pce(observations)
    rows = [o for o in ded if o.pce_pct is not None]
    if len(rows) < config.min_observations:
        raise DegenerateDataError(
            f"need at least {config.min_observations} measured observations, got {len(rows)}"
        )
    X = np.array([o.condition.values for o in rows])
    y = np.array([o.pce_pct for o in rows])
    if config.max_depth == 0:
        return TeacherModel(None, config.learning_rate, float(np.mean(y)), X, y)
    booster = GradientBoostingRegressor(
        loss="squared_error",
        n_estimators=config.n_estimators,
        max_depth=config.max_depth,
        learning_rate=config.learning_rate,
        subsample=config.subsample,
        max_features=config.max_features,
        min_samples_leaf=config.min_samples_leaf,
        random_state=config.random_state,
    )
    booster.fit(X, y)
    base = float(booster.init_.predict(X[:1])[0])
    return TeacherModel(booster, config.learning_rate, base, X, y)


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Rank correlation with average ranks on ties.

    Raises on constant input (rank variance zero leaves the coefficient
    undefined).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.shape[0] < 2:
        raise ValueError("need two equal-length sequences of at least 2 values")
    ra, rb = rankdata(a), rankdata(b)
    if np.std(ra) == 0 or np.std(rb) == 0:
        raise ValueError("zero rank variance: spearman undefined")
    return float(np.corrcoef(ra, rb)[0, 1])


def normalize_pce(values, reference: float) -> np.ndarray:
    """Element-wise division by the reference efficiency."""
    if reference <= 0:
        raise ValueError("reference must be > 0")
    return np.asarray(values, dtype=float) / reference


def percentile_marks(
    teacher: TeacherModel,
    space: ParameterSpace,
    n: int = 100_000,
    seed: int = 0,
    reference: float | None = None,
) -> dict[str, float]:
    """Normalized top-5/1/0.1 percentile marks over random grid samples."""
    samples = random_sample_array(space, n, seed)
    ref = teacher.reference if reference is None else reference
    preds = normalize_pce(teacher.predict(samples), ref)
    return {
        "top_5_pct": float(np.percentile(preds, 95)),
        "top_1_pct": float(np.percentile(preds, 99)),
        "top_0_1_pct": float(np.percentile(preds, 99.9)),
    }
