"""Acquisition machinery: UCB, probabilistic constraints, batch selection.

The batch selector greedily maximizes a constrained upper-confidence-bound
score, suppressing the neighborhood of each already-chosen point with a
soft penalization envelope so one model round can propose a diverse batch.
Constraint models contribute multiplicatively: their exceedance probability
is softened onto ``[floor, 1]``, so even a hopeless region keeps a known
fraction of its raw score.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, ndtr

from .errors import InsufficientCandidatesError
from .gp import GpModel, Prediction, predict_batch, predict_mean

_POSITIVITY_EPS = 1e-9
_STD_FLOOR = 1e-12
_LIPSCHITZ_FLOOR = 1e-6
_FD_STEP = 1e-4


@dataclass(frozen=True)
class AcquisitionConfig:
    """Exploration weight for the upper confidence bound."""

    beta: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


@dataclass(frozen=True)
class ConstraintSpec:
    """A probabilistic constraint: model, exceedance threshold, softening floor.

    ``clamp_unit`` is set for models regressing binary labels, whose means
    are clipped into [0, 1] before the probability conversion.
    """

    model: GpModel
    threshold: float
    floor: float
    clamp_unit: bool = False

    def __post_init__(self):
        if not (0.0 <= self.floor < 1.0):
            raise ValueError("floor must be in [0, 1)")
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")


@dataclass
class PenalizerState:
    """Bookkeeping for the greedy batch loop."""

    lipschitz: float
    incumbent_max: float
    pending: list[tuple[np.ndarray, Prediction]] = field(default_factory=list)

    def __post_init__(self):
        if self.lipschitz <= 0:
            raise ValueError("lipschitz must be > 0")


def ucb(p: Prediction, cfg: AcquisitionConfig = AcquisitionConfig()) -> float:
    """mean + beta * std."""
    if p.std < 0:
        raise ValueError("std must be >= 0")
    return p.mean + cfg.beta * p.std


def constraint_probability(p: Prediction, delta: float) -> float:
    """Probability that the constraint model exceeds ``delta`` at this point.

    Normal CDF of (mean - delta)/std; a zero-uncertainty prediction
    degenerates to a step: 1 above the threshold, 0 below, 0.5 at it.
    """
    if p.std > 0:
        return float(ndtr((p.mean - delta) / p.std))
    if p.mean > delta:
        return 1.0
    if p.mean < delta:
        return 0.0
    return 0.5


def soften(p: float, floor: float) -> float:
    """Affine map of a probability onto [floor, 1]."""
    if p < 0.0 or p > 1.0:
        warnings.warn(f"probability {p} outside [0, 1]; clamping", stacklevel=2)
        p = min(max(p, 0.0), 1.0)
    return floor + (1.0 - floor) * p


def _constraint_factors(X: np.ndarray, constraints) -> np.ndarray:
    """Product of softened constraint probabilities over an (m, d) block."""
    factors = np.ones(X.shape[0])
    for spec in constraints:
        mean, std = predict_batch(spec.model, X)
        if spec.clamp_unit:
            mean = np.clip(mean, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            zscore = np.where(std > 0, (mean - spec.threshold) / np.where(std > 0, std, 1.0), 0.0)
        prob = ndtr(zscore)
        degenerate = std <= 0
        if degenerate.any():
            prob = np.where(degenerate & (mean > spec.threshold), 1.0, prob)
            prob = np.where(degenerate & (mean < spec.threshold), 0.0, prob)
            prob = np.where(degenerate & (mean == spec.threshold), 0.5, prob)
        factors *= spec.floor + (1.0 - spec.floor) * prob
    return factors


def combined_acquisition(
    x: np.ndarray,
    objective: GpModel,
    constraints: list[ConstraintSpec],
    cfg: AcquisitionConfig = AcquisitionConfig(),
) -> float:
    """Raw UCB times the product of softened constraint probabilities."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mean, std = predict_batch(objective, x)
    value = (mean + cfg.beta * std) * _constraint_factors(x, constraints)
    return float(value[0])


def combined_acquisition_batch(
    X: np.ndarray,
    objective: GpModel,
    constraints: list[ConstraintSpec],
    cfg: AcquisitionConfig = AcquisitionConfig(),
) -> np.ndarray:
    mean, std = predict_batch(objective, X)
    return (mean + cfg.beta * std) * _constraint_factors(X, constraints)


def estimate_lipschitz(objective: GpModel, candidates: np.ndarray) -> float:
    """Largest posterior-mean gradient norm over the candidate sample.

    Central finite differences with step 1e-4 per normalized coordinate,
    clipped at the cube faces; floored at 1e-6 so the penalization radius
    stays finite for flat models. Use a sample of at least ~100 points for
    a stable estimate.
    """
    X = np.atleast_2d(np.asarray(candidates, dtype=float))
    grad_sq = np.zeros(X.shape[0])
    for d in range(X.shape[1]):
        hi = X.copy()
        lo = X.copy()
        hi[:, d] = np.minimum(hi[:, d] + _FD_STEP, 1.0)
        lo[:, d] = np.maximum(lo[:, d] - _FD_STEP, 0.0)
        span = hi[:, d] - lo[:, d]
        span[span == 0] = 1.0
        grad_sq += ((predict_mean(objective, hi) - predict_mean(objective, lo)) / span) ** 2
    return max(float(np.sqrt(grad_sq.max())), _LIPSCHITZ_FLOOR)


def hammer_factor(state: PenalizerState, X: np.ndarray) -> np.ndarray:
    """Product of soft penalization envelopes of all pending batch points.

    For pending point x_j with prediction (mu_j, sigma_j):
        phi_j(x) = 1/2 erfc(-z_j),
        z_j = (L ||x - x_j|| - M + mu_j) / (sqrt(2) sigma_j)
    which vanishes near x_j and approaches 1 far away.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.ones(X.shape[0])
    for xj, pred in state.pending:
        dist = np.sqrt(np.sum((X - xj) ** 2, axis=1))
        sigma = max(pred.std, _STD_FLOOR)
        z = (state.lipschitz * dist - state.incumbent_max + pred.mean) / (np.sqrt(2.0) * sigma)
        out *= 0.5 * erfc(-z)
    return out


def select_batch(
    objective: GpModel,
    constraints: list[ConstraintSpec],
    candidates: np.ndarray,
    batch_size: int,
    cfg: AcquisitionConfig = AcquisitionConfig(),
    seed: int = 0,
    lipschitz_sample: int = 2048,
) -> list[int]:
    """Greedy penalized batch selection over normalized candidates.

    ``candidates`` is an (N, d) block in grid-lexicographic order with
    already-measured conditions removed; the return value is the ordered
    list of selected row indices. Scores are shifted to be strictly
    positive before any multiplicative factor so that constraint and
    penalization products cannot flip rankings through negative values.
    Ties resolve to the earliest (lexicographically smallest) candidate.
    """
    X = np.atleast_2d(np.asarray(candidates, dtype=float))
    n = X.shape[0]
    if batch_size > n:
        raise InsufficientCandidatesError(
            f"batch size {batch_size} exceeds {n} available candidates"
        )
    if batch_size <= 0:
        return []

    mean, std = predict_batch(objective, X)
    raw = mean + cfg.beta * std
    shifted = raw - min(0.0, float(raw.min())) + _POSITIVITY_EPS
    base = shifted * _constraint_factors(X, constraints)

    if n > lipschitz_sample:
        rng = np.random.default_rng(seed)
        sample_idx = np.sort(rng.choice(n, size=lipschitz_sample, replace=False))
        lipschitz = estimate_lipschitz(objective, X[sample_idx])
    else:
        lipschitz = estimate_lipschitz(objective, X)
    state = PenalizerState(
        lipschitz=lipschitz,
        incumbent_max=float(np.max(objective.train_targets_raw)),
    )

    penalized = base.copy()
    chosen: list[int] = []
    for _ in range(batch_size):
        idx = int(np.argmax(penalized))
        chosen.append(idx)
        penalized[idx] = -np.inf
        xj = X[idx]
        mu_j, sd_j = predict_batch(objective, xj[None, :])
        pred_j = Prediction(float(mu_j[0]), float(sd_j[0]))
        state.pending.append((xj.copy(), pred_j))
        if len(chosen) < batch_size:
            single = PenalizerState(state.lipschitz, state.incumbent_max,
                                    [(xj.copy(), pred_j)])
            penalized *= hammer_factor(single, X)
            penalized[chosen] = -np.inf
    return chosen
