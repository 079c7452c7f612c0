"""Gaussian-process regression with an anisotropic Matern-5/2 kernel.

Inputs live in the normalized unit cube; targets are standardized to zero
mean and unit variance internally and de-standardized on prediction. The
per-dimension length-scales let the fit discover which process variables
drive the response.

Hyperparameters are chosen by maximizing the log marginal likelihood with
projected gradient ascent (backtracking line search) from several random
restarts; the gradient is analytic in the log-hyperparameters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import DegenerateDataError, SingularKernelError

logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)

# jitter ladder tried after a plain factorization fails
_JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class KernelHyperparams:
    """Matern-5/2 kernel parameters in normalized-input units."""

    signal_variance: float
    length_scales: tuple[float, ...]
    noise_variance: float

    def __post_init__(self):
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be > 0")
        if any(l <= 0 for l in self.length_scales):
            raise ValueError("length_scales must be > 0")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")

    def log_vector(self) -> np.ndarray:
        """(log sigma_f^2, log l_1..l_d, log sigma_n^2); noise floored at 1e-300."""
        return np.log(
            np.array(
                [self.signal_variance, *self.length_scales,
                 max(self.noise_variance, 1e-300)]
            )
        )

    @staticmethod
    def from_log_vector(theta: np.ndarray) -> "KernelHyperparams":
        vals = np.exp(np.asarray(theta, dtype=float))
        return KernelHyperparams(
            float(vals[0]), tuple(float(v) for v in vals[1:-1]), float(vals[-1])
        )


@dataclass(frozen=True)
class Prediction:
    """Posterior mean and standard deviation in target units."""

    mean: float
    std: float


@dataclass(frozen=True)
class GpFitConfig:
    """Controls for hyperparameter optimization."""

    restarts: int = 8
    max_iter: int = 100
    seed: int = 0
    length_scale_bounds: tuple[float, float] = (0.05, 10.0)
    signal_variance_bounds: tuple[float, float] = (1e-3, 1e3)
    noise_variance_bounds: tuple[float, float] = (1e-6, 1.0)
    grad_tol: float = 1e-5
    optimize: bool = True
    init: KernelHyperparams | None = None


@dataclass(frozen=True)
class GpModel:
    """A fitted surrogate. Immutable; safe to share across workers."""

    train_inputs: np.ndarray          # (n, d), normalized
    train_targets_raw: np.ndarray     # (n,), original units
    target_shift: float
    target_scale: float
    hyperparams: KernelHyperparams
    chol_lower: np.ndarray            # L with L L^T = K + sigma_n^2 I (+ jitter)
    alpha: np.ndarray                 # (K + sigma_n^2 I)^-1 z
    jitter: float
    degenerate: bool = False          # all targets identical; noise-dominated fit

    @property
    def n_train(self) -> int:
        return self.train_inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.train_inputs.shape[1]


def kernel_matern52(x: np.ndarray, x_other: np.ndarray, hp: KernelHyperparams) -> float:
    """Matern-5/2 covariance of two normalized points.

    k = sigma_f^2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r) with the
    anisotropic scaled distance r^2 = sum_d ((x_d - x'_d)/l_d)^2.
    """
    x = np.asarray(x, dtype=float)
    x_other = np.asarray(x_other, dtype=float)
    if x.shape != x_other.shape or x.shape[-1] != len(hp.length_scales):
        raise ValueError("dimension mismatch between inputs and length_scales")
    ls = np.asarray(hp.length_scales)
    r = math.sqrt(float(np.sum(((x - x_other) / ls) ** 2)))
    return float(
        hp.signal_variance * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * math.exp(-SQRT5 * r)
    )


def _cross_kernel(Xa: np.ndarray, Xb: np.ndarray, hp: KernelHyperparams) -> np.ndarray:
    ls = np.asarray(hp.length_scales)
    diff = (Xa[:, None, :] - Xb[None, :, :]) / ls
    r = np.sqrt(np.maximum(np.einsum("ijd,ijd->ij", diff, diff), 0.0))
    return hp.signal_variance * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * np.exp(-SQRT5 * r)


def _factorize(K: np.ndarray, noise: float) -> tuple[np.ndarray, float]:
    """Cholesky of K + noise I, escalating jitter on failure."""
    n = K.shape[0]
    eye = np.eye(n)
    for jitter in (0.0, *_JITTERS):
        try:
            L = cholesky(K + (noise + jitter) * eye, lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            continue
        except ValueError:
            continue
    raise SingularKernelError(
        f"kernel matrix not factorizable after jitter escalation up to {_JITTERS[-1]}"
    )


def build_model(
    X: np.ndarray,
    y: np.ndarray,
    hp: KernelHyperparams,
    *,
    target_shift: float | None = None,
    target_scale: float | None = None,
    degenerate: bool = False,
) -> GpModel:
    """Assemble a model for explicit hyperparameters (no optimization)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y length mismatch")
    if X.shape[0] < 1:
        raise ValueError("need at least one observation")
    if target_shift is None or target_scale is None:
        target_shift = float(np.mean(y))
        sd = float(np.std(y))
        target_scale = sd if sd > 0 else 1.0
        degenerate = degenerate or (sd == 0.0 and y.shape[0] > 1)
    z = (y - target_shift) / target_scale
    K = _cross_kernel(X, X, hp)
    L, jitter = _factorize(K, hp.noise_variance)
    alpha = cho_solve((L, True), z)
    return GpModel(
        train_inputs=X,
        train_targets_raw=y,
        target_shift=target_shift,
        target_scale=target_scale,
        hyperparams=hp,
        chol_lower=L,
        alpha=alpha,
        jitter=jitter,
        degenerate=degenerate,
    )


def log_marginal_likelihood(
    model: GpModel, with_gradient: bool = False
) -> float | tuple[float, np.ndarray]:
    """Log marginal likelihood of the standardized targets.

    value = -1/2 z^T alpha - sum(log diag L) - n/2 log(2 pi)

    With ``with_gradient=True`` also returns d(value)/d(theta) for the
    d+2 log-hyperparameters (log sigma_f^2, log l_1..l_d, log sigma_n^2).
    """
    z = (model.train_targets_raw - model.target_shift) / model.target_scale
    L, alpha = model.chol_lower, model.alpha
    n = model.n_train
    value = float(
        -0.5 * z @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    )
    if not with_gradient:
        return value
    grads = _lml_gradient(model.train_inputs, model.hyperparams, L, alpha)
    return value, grads


def _lml_gradient(X, hp: KernelHyperparams, L, alpha) -> np.ndarray:
    n, d = X.shape
    ls = np.asarray(hp.length_scales)
    diff = (X[:, None, :] - X[None, :, :]) / ls
    S = diff ** 2                                    # (n, n, d)
    r = np.sqrt(np.maximum(S.sum(axis=2), 0.0))
    E = np.exp(-SQRT5 * r)
    Kf = hp.signal_variance * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * E
    Kinv = cho_solve((L, True), np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    grads = np.empty(d + 2)
    grads[0] = 0.5 * float(np.sum(A * Kf))
    dK_common = (5.0 / 3.0) * hp.signal_variance * (1.0 + SQRT5 * r) * E
    for j in range(d):
        grads[1 + j] = 0.5 * float(np.sum(A * (dK_common * S[:, :, j])))
    grads[-1] = 0.5 * hp.noise_variance * float(np.trace(A))
    return grads


def fit(X: np.ndarray, y: np.ndarray, config: GpFitConfig = GpFitConfig()) -> GpModel:
    """Fit hyperparameters by maximum marginal likelihood.

    Runs one heuristic start plus ``config.restarts - 1`` random restarts
    (log-uniform within the bounds) of projected gradient ascent with a
    backtracking line search; the best run wins, ties broken by restart
    index. Deterministic for a fixed ``config.seed``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y length mismatch")
    if X.shape[0] < 2:
        raise DegenerateDataError("need at least 2 observations to fit")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if np.unique(X, axis=0).shape[0] < 2:
        raise DegenerateDataError("need at least 2 distinct inputs to fit")

    d = X.shape[1]
    shift = float(np.mean(y))
    sd = float(np.std(y))
    degenerate = sd == 0.0
    scale = sd if sd > 0 else 1.0
    z = (y - shift) / scale

    lo = np.log(np.array([config.signal_variance_bounds[0],
                          *([config.length_scale_bounds[0]] * d),
                          config.noise_variance_bounds[0]]))
    hi = np.log(np.array([config.signal_variance_bounds[1],
                          *([config.length_scale_bounds[1]] * d),
                          config.noise_variance_bounds[1]]))

    if config.init is not None:
        starts = [np.clip(config.init.log_vector(), lo, hi)]
    else:
        starts = [np.clip(
            KernelHyperparams(1.0, (0.5,) * d, 0.1).log_vector(), lo, hi)]
    if config.optimize:
        rng = np.random.default_rng(config.seed)
        for _ in range(max(config.restarts - 1, 0)):
            starts.append(lo + rng.random(d + 2) * (hi - lo))
    else:
        hp = KernelHyperparams.from_log_vector(starts[0])
        return build_model(X, y, hp, target_shift=shift, target_scale=scale,
                           degenerate=degenerate)

    best: tuple[float, int, np.ndarray] | None = None
    for ridx, theta0 in enumerate(starts):
        theta, value = _ascend(X, z, theta0, lo, hi, config)
        if best is None or value > best[0] + 1e-12:
            best = (value, ridx, theta)
    assert best is not None
    hp = KernelHyperparams.from_log_vector(best[2])
    return build_model(X, y, hp, target_shift=shift, target_scale=scale,
                       degenerate=degenerate)


def _lml_theta(X, z, theta) -> tuple[float, np.ndarray]:
    hp = KernelHyperparams.from_log_vector(theta)
    K = _cross_kernel(X, X, hp)
    L, _ = _factorize(K, hp.noise_variance)
    alpha = cho_solve((L, True), z)
    n = X.shape[0]
    value = float(
        -0.5 * z @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)
    )
    return value, _lml_gradient(X, hp, L, alpha)


def _ascend(X, z, theta0, lo, hi, config: GpFitConfig) -> tuple[np.ndarray, float]:
    theta = np.clip(theta0, lo, hi)
    try:
        value, grad = _lml_theta(X, z, theta)
    except SingularKernelError:
        return theta, -np.inf
    step = 0.1
    for _ in range(config.max_iter):
        # zero out components that push against an active bound
        g = grad.copy()
        g[(theta <= lo + 1e-12) & (g < 0)] = 0.0
        g[(theta >= hi - 1e-12) & (g > 0)] = 0.0
        gnorm = float(np.max(np.abs(g)))
        if gnorm < config.grad_tol:
            break
        direction = g / gnorm
        alpha_step = step
        improved = False
        for _ in range(30):
            cand = np.clip(theta + alpha_step * direction, lo, hi)
            if np.allclose(cand, theta):
                break
            try:
                cand_value, cand_grad = _lml_theta(X, z, cand)
            except SingularKernelError:
                alpha_step *= 0.5
                continue
            if cand_value > value + 1e-4 * alpha_step * gnorm:
                theta, value, grad = cand, cand_value, cand_grad
                step = min(alpha_step * 2.0, 1.0)
                improved = True
                break
            alpha_step *= 0.5
        if not improved:
            break
    return theta, value


def predict(model: GpModel, x: np.ndarray) -> Prediction:
    """Posterior prediction at one normalized point, de-standardized.

    The reported std is the latent-function uncertainty (no observation
    noise added), so at a training input it collapses toward
    sqrt(noise_variance) in standardized units.
    """
    mean, std = predict_batch(model, np.atleast_2d(np.asarray(x, dtype=float)))
    return Prediction(float(mean[0]), float(std[0]))


def predict_batch(model: GpModel, X: np.ndarray, chunk: int = 65536) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior mean/std over an (m, d) block of points."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim:
        raise ValueError(f"expected {model.dim}-dimensional inputs")
    hp = model.hyperparams
    means = np.empty(X.shape[0])
    stds = np.empty(X.shape[0])
    for start in range(0, X.shape[0], chunk):
        stop = min(start + chunk, X.shape[0])
        Ks = _cross_kernel(X[start:stop], model.train_inputs, hp)
        mean_z = Ks @ model.alpha
        v = solve_triangular(model.chol_lower, Ks.T, lower=True)
        var_z = hp.signal_variance - np.einsum("ij,ij->j", v, v)
        clamped = var_z < 0
        if clamped.any():
            logger.debug(
                "clamped %d negative predictive variances (min %.3e)",
                int(clamped.sum()), float(var_z.min()),
            )
            var_z = np.maximum(var_z, 0.0)
        means[start:stop] = model.target_shift + model.target_scale * mean_z
        stds[start:stop] = model.target_scale * np.sqrt(var_z)
    return means, stds


def predict_mean(model: GpModel, X: np.ndarray) -> np.ndarray:
    """Posterior mean only (cheaper: skips the triangular solve)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Ks = _cross_kernel(X, model.train_inputs, model.hyperparams)
    return model.target_shift + model.target_scale * (Ks @ model.alpha)


def model_snapshot(model: GpModel) -> dict:
    """JSON-ready summary: hyperparameters, standardization, data hash."""
    import hashlib

    h = hashlib.sha256()
    h.update(np.ascontiguousarray(model.train_inputs).tobytes())
    h.update(np.ascontiguousarray(model.train_targets_raw).tobytes())
    return {
        "signal_variance": model.hyperparams.signal_variance,
        "length_scales": list(model.hyperparams.length_scales),
        "noise_variance": model.hyperparams.noise_variance,
        "target_shift": model.target_shift,
        "target_scale": model.target_scale,
        "n_train": model.n_train,
        "train_data_sha256": h.hexdigest(),
        "jitter": model.jitter,
        "degenerate": model.degenerate,
    }
