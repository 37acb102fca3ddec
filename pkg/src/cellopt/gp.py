"""Gaussian-process regression surrogate over normalized layout coordinates.

Squared-exponential kernel with per-dimension length scales on inputs mapped
to the unit hypercube. Targets are centered on their empirical mean, so the
prior mean in centered space is zero. The Cholesky factor of the regularized
kernel matrix is cached at fit time; posterior queries and the log marginal
likelihood reuse it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .domain import ConfigurationError, LayoutVector, SearchSpace

# Positive-definiteness repair: first try the kernel matrix as-is, then add
# jitter starting at 1e-10 x diagonal scale, escalating tenfold up to 1e-4.
_JITTER_EXPONENTS = range(-10, -3)


class FactorizationError(RuntimeError):
    """Kernel matrix stayed indefinite after jitter escalation."""

    def __init__(self, message: str, jitter: float):
        super().__init__(message)
        self.jitter = jitter


@dataclass(frozen=True)
class GpHyperparams:
    """Kernel parameters: per-dimension length scales (normalized-input
    units), signal variance and noise variance (seconds squared)."""

    length_scale: tuple[float, ...]
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        if any(l <= 0 for l in self.length_scale):
            raise ConfigurationError("length scales must be positive")
        if self.signal_variance <= 0:
            raise ConfigurationError("signal variance must be positive")
        if self.noise_variance < 0:
            raise ConfigurationError("noise variance must be non-negative")


@dataclass(frozen=True)
class HyperparamBounds:
    """Closed intervals for the log-space hyperparameter search."""

    log_length_scale: tuple[float, float] = (math.log(1e-2), math.log(1e1))
    log_signal_variance: tuple[float, float] = (math.log(1e-8), math.log(1e6))
    log_noise_variance: tuple[float, float] = (math.log(1e-9), math.log(1e2))


@dataclass(frozen=True)
class GpModel:
    """Fitted surrogate; immutable, posterior queries are pure."""

    x_train: np.ndarray          # (n, D) normalized inputs
    y_centered: np.ndarray       # (n,) targets minus y_mean
    y_mean: float
    hyperparams: GpHyperparams
    chol_lower: np.ndarray       # (n, n) lower factor of K + sn2*I + jitter*I
    alpha: np.ndarray            # (n,) solve of the factored system against y
    jitter: float
    space: SearchSpace
    entity_map: tuple[tuple[str, int, int], ...]

    @property
    def n(self) -> int:
        return self.y_centered.shape[0]


def default_hyperparams(targets, dim: int) -> GpHyperparams:
    """Scale-aware neutral start: l=0.2 per dimension, signal variance from
    the target spread (1.0 when the targets are constant)."""
    var = float(np.var(np.asarray(targets, dtype=float)))
    sf2 = var if var > 0 else 1.0
    return GpHyperparams((0.2,) * dim, sf2, 1e-6 * sf2)


def _scaled_sqdist(a: np.ndarray, b: np.ndarray, length_scale: np.ndarray) -> np.ndarray:
    asc = a / length_scale
    bsc = b / length_scale
    d2 = (
        np.sum(asc * asc, axis=1)[:, None]
        + np.sum(bsc * bsc, axis=1)[None, :]
        - 2.0 * asc @ bsc.T
    )
    return np.maximum(d2, 0.0)


def _kernel(a, b, hp: GpHyperparams) -> np.ndarray:
    ls = np.asarray(hp.length_scale)
    return hp.signal_variance * np.exp(-0.5 * _scaled_sqdist(a, b, ls))


def _factorize(k_noisy: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    """Cholesky with escalating jitter; returns (lower factor, jitter used)."""
    attempts = [0.0] + [scale * 10.0**e for e in _JITTER_EXPONENTS]
    last = 0.0
    for jit in attempts:
        last = jit
        try:
            k = k_noisy if jit == 0.0 else k_noisy + jit * np.eye(k_noisy.shape[0])
            return cholesky(k, lower=True, check_finite=False), jit
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(
        f"kernel matrix is not positive definite even with jitter {last:g}", jitter=last
    )


def fit(observations, space: SearchSpace, hyperparams: GpHyperparams) -> GpModel:
    """Fit the surrogate to (layout, objective-seconds) observations."""
    if not observations:
        raise ConfigurationError("need at least one observation to fit")
    entity_map = observations[0][0].entity_map
    raw = np.array([x.as_array() for x, _ in observations])
    y = np.array([float(obj) for _, obj in observations])
    for x, _ in observations:
        if not space.contains(x.coords, tol=1e-12):
            raise ConfigurationError("observation outside the search space")
    if len(hyperparams.length_scale) != space.dim:
        raise ConfigurationError(
            f"{len(hyperparams.length_scale)} length scales for dimension {space.dim}"
        )

    xn = space.normalize(raw)
    y_mean = float(np.mean(y))
    yc = y - y_mean

    k = _kernel(xn, xn, hyperparams)
    k[np.diag_indices_from(k)] += hyperparams.noise_variance
    scale = hyperparams.signal_variance + hyperparams.noise_variance
    lower, jitter = _factorize(k, scale)
    alpha = cho_solve((lower, True), yc, check_finite=False)
    return GpModel(xn, yc, y_mean, hyperparams, lower, alpha, jitter, space, entity_map)


def posterior_batch(model: GpModel, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and std for raw coordinate rows (m, D)."""
    xq = model.space.normalize(np.atleast_2d(np.asarray(coords, dtype=float)))
    k_star = _kernel(xq, model.x_train, model.hyperparams)
    mean = model.y_mean + k_star @ model.alpha
    v = solve_triangular(model.chol_lower, k_star.T, lower=True, check_finite=False)
    var = model.hyperparams.signal_variance - np.sum(v * v, axis=0)
    std = np.sqrt(np.maximum(var, 0.0))
    return mean, std


def posterior(model: GpModel, x: LayoutVector) -> tuple[float, float]:
    """Posterior (mean, std) in seconds at one layout."""
    if x.dim != model.space.dim:
        raise ConfigurationError(
            f"query dimension {x.dim} does not match model dimension {model.space.dim}"
        )
    mean, std = posterior_batch(model, x.as_array()[None, :])
    return float(mean[0]), float(std[0])


def log_marginal_likelihood(model: GpModel) -> float:
    """Exact Gaussian log evidence of the centered training targets."""
    n = model.n
    fit_term = -0.5 * float(model.y_centered @ model.alpha)
    logdet_term = -float(np.sum(np.log(np.diag(model.chol_lower))))
    return fit_term + logdet_term - 0.5 * n * math.log(2.0 * math.pi)


def _lml_and_grad(theta, xn, yc, d2_stack, scale_floor):
    """Negative lml and gradient over theta = [log l_1..D, log sf2, log sn2]."""
    dim = xn.shape[1]
    n = xn.shape[0]
    ell = np.exp(theta[:dim])
    sf2 = math.exp(theta[dim])
    sn2 = math.exp(theta[dim + 1])

    inv_l2 = 1.0 / (ell * ell)
    e = np.exp(-0.5 * np.einsum("dij,d->ij", d2_stack, inv_l2))
    k_signal = sf2 * e
    k = k_signal + (sn2 + scale_floor) * np.eye(n)
    try:
        lower = cholesky(k, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)

    alpha = cho_solve((lower, True), yc, check_finite=False)
    lml = (
        -0.5 * float(yc @ alpha)
        - float(np.sum(np.log(np.diag(lower))))
        - 0.5 * n * math.log(2.0 * math.pi)
    )

    k_inv = cho_solve((lower, True), np.eye(n), check_finite=False)
    w = np.outer(alpha, alpha) - k_inv
    wk = w * k_signal
    grad = np.empty_like(theta)
    grad[:dim] = 0.5 * np.einsum("ij,dij->d", wk, d2_stack) * inv_l2
    grad[dim] = 0.5 * np.sum(wk)
    grad[dim + 1] = 0.5 * sn2 * np.trace(w)
    return -lml, -grad


def optimize_hyperparams(
    observations,
    space: SearchSpace,
    bounds: HyperparamBounds = HyperparamBounds(),
    restarts: int = 8,
    seed: int = 0,
    maxiter: int = 40,
) -> GpHyperparams:
    """Multi-start gradient search for the kernel parameters maximizing the
    log marginal likelihood; never worse than the defaults, which are kept
    as a candidate (and the fallback when every start fails)."""
    if len(observations) < 2:
        raise ConfigurationError("need at least two observations to tune hyperparameters")
    raw = np.array([x.as_array() for x, _ in observations])
    y = np.array([float(obj) for _, obj in observations])
    xn = space.normalize(raw)
    yc = y - float(np.mean(y))
    dim = space.dim

    diff = xn[:, None, :] - xn[None, :, :]
    d2_stack = np.ascontiguousarray(np.moveaxis(diff * diff, 2, 0))

    default = default_hyperparams(y, dim)
    theta_default = np.concatenate(
        [
            np.log(default.length_scale),
            [math.log(default.signal_variance), math.log(default.noise_variance)],
        ]
    )
    lo = np.array(
        [bounds.log_length_scale[0]] * dim
        + [bounds.log_signal_variance[0], bounds.log_noise_variance[0]]
    )
    hi = np.array(
        [bounds.log_length_scale[1]] * dim
        + [bounds.log_signal_variance[1], bounds.log_noise_variance[1]]
    )
    theta_default = np.clip(theta_default, lo, hi)
    # The noise floor regularizes every candidate the same way during search.
    scale_floor = 1e-12 * default.signal_variance

    rng = np.random.default_rng(seed)
    starts = [theta_default] + [rng.uniform(lo, hi) for _ in range(restarts)]

    def objective(theta):
        return _lml_and_grad(theta, xn, yc, d2_stack, scale_floor)

    def to_hyperparams(theta) -> GpHyperparams:
        ell = tuple(float(v) for v in np.exp(theta[:dim]))
        return GpHyperparams(ell, math.exp(theta[dim]), math.exp(theta[dim + 1]))

    candidates = [to_hyperparams(theta_default)]
    for theta0 in starts:
        try:
            res = minimize(
                objective,
                theta0,
                jac=True,
                method="L-BFGS-B",
                bounds=list(zip(lo, hi)),
                options={"maxiter": maxiter},
            )
        except (ValueError, np.linalg.LinAlgError):
            continue
        candidates.append(to_hyperparams(res.x))

    # Rank every candidate (defaults first) by the same likelihood the fitted
    # model reports, so the result is never worse than the defaults.
    best_hp = candidates[0]
    best_lml = -math.inf
    for hp in candidates:
        try:
            lml = log_marginal_likelihood(fit(observations, space, hp))
        except FactorizationError:
            continue
        if lml > best_lml:
            best_lml = lml
            best_hp = hp
    return best_hp
