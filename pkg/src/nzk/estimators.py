"""Gradient estimators built from function values only.

The two-point estimator averages, over the training set, the symmetric
loss difference along one random direction:

    g = (1/N) sum_i [L(f(x_i; th + eps z)) - L(f(x_i; th - eps z))] / (2 eps) * z

It factors into a per-point magnitude (loss difference over function
difference) and a per-point direction (function difference over 2 eps,
times z).  The factored form is an algebraic rewrite of the estimator, so
the public estimator is its contraction; points where the function
difference vanishes fall back to the unfactored ratio, which stays
well-defined there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .directions import DirectionSpec, sample
from .errors import ConfigError, DivergenceError, UnsupportedError

DEGENERATE_TOL = 1e-12

LOSS_KINDS = ("squared", "absolute")


@dataclass(frozen=True)
class LossSpec:
    """Pointwise loss exposed through evaluation only (no derivatives),
    so non-differentiable losses flow through the same estimator."""

    kind: str = "squared"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")

    def value(self, f, y):
        f = np.asarray(f, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "squared":
            return 0.5 * (f - y) ** 2
        return np.abs(f - y)


@dataclass
class SplitResult:
    """Magnitude/direction factorization of the two-point estimator.

    magnitudes[i] * directions[i] recovers point i's contribution; rows
    flagged degenerate (|f+ - f-| below tolerance) carry their direct
    two-point coefficient in eq1_coeffs instead.
    """

    magnitudes: np.ndarray
    directions: np.ndarray
    degenerate_mask: np.ndarray
    eq1_coeffs: np.ndarray
    direction: np.ndarray
    f_plus: np.ndarray
    f_minus: np.ndarray
    loss_plus: np.ndarray
    loss_minus: np.ndarray


def magnitude_direction_split(model, dataset, theta, epsilon, z, loss: LossSpec) -> SplitResult:
    """Factor the two-point estimator into magnitudes and directions."""
    z = np.asarray(z, dtype=float)
    fp = np.atleast_1d(model.eval(dataset.inputs, theta + epsilon * z))
    fm = np.atleast_1d(model.eval(dataset.inputs, theta - epsilon * z))
    lp = loss.value(fp, dataset.targets)
    lm = loss.value(fm, dataset.targets)
    with np.errstate(invalid="ignore", over="ignore"):
        diff = fp - fm
        degenerate = ~(np.abs(diff) >= DEGENERATE_TOL)
        safe = np.where(degenerate, 1.0, diff)
        magnitudes = np.where(degenerate, 0.0, (lp - lm) / safe)
        directions = np.outer(diff / (2.0 * epsilon), z)
        eq1 = (lp - lm) / (2.0 * epsilon)
    return SplitResult(magnitudes, directions, degenerate, eq1, z, fp, fm, lp, lm)


def contract_split(split: SplitResult) -> np.ndarray:
    """Recombine a split into the estimator value, averaging over points."""
    n = split.magnitudes.shape[0]
    g = split.magnitudes @ split.directions
    if split.degenerate_mask.any():
        g = g + split.eq1_coeffs[split.degenerate_mask].sum() * split.direction
    return g / n


def zo_gradient(model, dataset, theta, epsilon, z, loss: LossSpec) -> np.ndarray:
    """Two-point gradient estimate along z, averaged over the dataset.

    Exactly two forward passes per data point.  Non-finite loss values
    abort with a divergence error instead of propagating NaN.
    """
    split = magnitude_direction_split(model, dataset, theta, epsilon, z, loss)
    if not (np.all(np.isfinite(split.loss_plus)) and np.all(np.isfinite(split.loss_minus))):
        raise DivergenceError("non-finite loss inside the two-point estimate")
    return contract_split(split)


def zo_gradient_batch(
    model, dataset, theta, epsilon, spec: DirectionSpec, batch: int, loss: LossSpec, rng
) -> np.ndarray:
    """Mean of `batch` independent two-point estimates with fresh directions.

    Directions are drawn in index order and reduced in index order, so the
    result is reproducible for a given generator state.
    """
    if batch < 1:
        raise ConfigError(f"batch must be >= 1, got {batch}")
    acc = np.zeros(np.asarray(theta).shape[0])
    for _ in range(batch):
        z = sample(spec, rng)
        acc += zo_gradient(model, dataset, theta, epsilon, z, loss)
    return acc / batch


def fo_gradient(model, dataset, theta, loss: LossSpec) -> np.ndarray:
    """Analytic gradient of the mean squared loss.

    Uses the model's exact parameter gradient: the input itself for linear
    models, the cached tangent features for linearized ones, reverse mode
    for the small networks.  Only the squared loss has the analytic form.
    """
    if loss.kind != "squared":
        raise UnsupportedError("analytic gradients are implemented for squared loss only")
    theta = np.asarray(theta, dtype=float)
    residuals = np.atleast_1d(model.eval(dataset.inputs, theta)) - dataset.targets
    feats = _tangent_matrix(model, theta, dataset.inputs)
    return (residuals @ feats) / residuals.shape[0]


def _tangent_matrix(model, theta, inputs):
    from .models import LinearizedModel, LinearModel

    if isinstance(model, LinearModel):
        return np.atleast_2d(inputs)
    if isinstance(model, LinearizedModel):
        idx, _ = model._lookup(np.atleast_2d(inputs))
        return model.tangents[idx]
    return np.stack([model.param_gradient(theta, x) for x in np.atleast_2d(inputs)])
