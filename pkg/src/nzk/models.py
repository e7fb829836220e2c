"""Scalar-valued models and perturbation-based tangent machinery.

All models expose the same minimal surface: ``input_dim``, ``num_params``,
``init_theta`` (the reference parameter vector) and ``eval(x, theta)``.
Parameters always travel as one flat vector; the flattening order is
layer-major and row-major within a layer, with each layer's bias vector
(when present) following its weight matrix.  Direction vectors, the
two-layer partition check, and linearization all rely on that order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .directions import DirectionSpec, sample
from .errors import ConfigError, ShapeMismatchError, UnsupportedError

DEFAULT_EPSILON = 1e-3  # small relative to unit-scale parameters


# ---------------------------------------------------------------------------
# activations


@dataclass(frozen=True)
class Activation:
    name: str
    param: float = 1.0

    def __call__(self, x):
        if self.name == "relu":
            return np.maximum(x, 0.0)
        if self.name == "leaky_relu":
            return np.where(x >= 0.0, x, self.param * x)
        if self.name == "linear":
            return self.param * x
        if self.name == "tanh":
            return np.tanh(x)
        raise ConfigError(f"unknown activation {self.name!r}")

    def grad(self, x):
        if self.name == "relu":
            return (x > 0.0).astype(float)
        if self.name == "leaky_relu":
            return np.where(x > 0.0, 1.0, self.param)
        if self.name == "linear":
            return np.full_like(np.asarray(x, dtype=float), self.param)
        if self.name == "tanh":
            return 1.0 - np.tanh(x) ** 2
        raise ConfigError(f"unknown activation {self.name!r}")


def activation(name: str, param: float | None = None) -> Activation:
    defaults = {"relu": 1.0, "leaky_relu": 0.1, "linear": 1.0, "tanh": 1.0}
    if name not in defaults:
        raise ConfigError(f"unknown activation {name!r}")
    if name == "leaky_relu" and param is not None and not 0.0 < param < 1.0:
        raise ConfigError(f"leaky_relu slope must lie in (0, 1), got {param}")
    return Activation(name, defaults[name] if param is None else float(param))


# ---------------------------------------------------------------------------
# models


class LinearModel:
    """f(x; theta) = <theta, x>."""

    def __init__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or not np.all(np.isfinite(theta)):
            raise ConfigError("linear model needs a finite parameter vector")
        self.init_theta = theta
        self.input_dim = theta.size
        self.num_params = theta.size

    @classmethod
    def random(cls, d: int, rng: np.random.Generator) -> "LinearModel":
        return cls(rng.standard_normal(d))

    def eval(self, x, theta=None):
        theta = self.init_theta if theta is None else np.asarray(theta, dtype=float)
        x = _check_input(x, self.input_dim)
        return x @ theta

    def param_gradient(self, theta, x):
        x = _check_input(x, self.input_dim)
        return np.array(x, dtype=float)


class TwoLayerLinear:
    """f(x; theta) = <W1 @ w2, x> with W1 of shape (n, width) and w2 of
    shape (width,).  Flat order: W1 row-major, then w2."""

    def __init__(self, n: int, width: int, theta=None, rng=None):
        self.n = n
        self.width = width
        self.input_dim = n
        self.num_params = n * width + width
        if theta is None:
            if rng is None:
                raise ConfigError("two-layer model needs theta or an rng to draw it")
            theta = rng.standard_normal(self.num_params)
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.num_params:
            raise ShapeMismatchError(
                f"expected {self.num_params} parameters, got {theta.size}"
            )
        self.init_theta = theta

    def split(self, theta):
        """(W1, w2) views of a flat parameter vector."""
        w1 = theta[: self.n * self.width].reshape(self.n, self.width)
        w2 = theta[self.n * self.width :]
        return w1, w2

    def eval(self, x, theta=None):
        theta = self.init_theta if theta is None else np.asarray(theta, dtype=float)
        x = _check_input(x, self.input_dim)
        w1, w2 = self.split(theta)
        return x @ (w1 @ w2)

    def param_gradient(self, theta, x):
        x = _check_input(x, self.input_dim)
        w1, w2 = self.split(np.asarray(theta, dtype=float))
        return np.concatenate([np.outer(x, w2).ravel(), w1.T @ x])


class Mlp:
    """Feed-forward network with scalar output.

    widths lists every layer dimension including input and the final 1.
    The activation follows every layer except the last.  Flat parameter
    order: per layer, the (fan_in, fan_out) weight matrix row-major, then
    the bias vector when biases are enabled.
    """

    def __init__(self, widths, act: Activation, bias: bool = True, theta=None, rng=None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or widths[-1] != 1 or any(w < 1 for w in widths):
            raise ConfigError(f"widths must end in 1 and be positive, got {widths}")
        self.widths = widths
        self.act = act
        self.bias = bias
        self.input_dim = widths[0]
        self.num_params = sum(
            widths[i] * widths[i + 1] + (widths[i + 1] if bias else 0)
            for i in range(len(widths) - 1)
        )
        if theta is None:
            if rng is None:
                raise ConfigError("mlp needs theta or an rng to draw it")
            theta = rng.standard_normal(self.num_params)
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.num_params:
            raise ShapeMismatchError(
                f"expected {self.num_params} parameters, got {theta.size}"
            )
        self.init_theta = theta

    def unflatten(self, theta):
        """List of (W, b) per layer; b is None when biases are disabled."""
        layers = []
        pos = 0
        for i in range(len(self.widths) - 1):
            fi, fo = self.widths[i], self.widths[i + 1]
            w = theta[pos : pos + fi * fo].reshape(fi, fo)
            pos += fi * fo
            b = None
            if self.bias:
                b = theta[pos : pos + fo]
                pos += fo
            layers.append((w, b))
        return layers

    @staticmethod
    def flatten(layers):
        parts = []
        for w, b in layers:
            parts.append(np.asarray(w, dtype=float).ravel())
            if b is not None:
                parts.append(np.asarray(b, dtype=float).ravel())
        return np.concatenate(parts)

    def eval(self, x, theta=None):
        theta = self.init_theta if theta is None else np.asarray(theta, dtype=float)
        x = _check_input(x, self.input_dim)
        h = np.atleast_2d(x)
        layers = self.unflatten(theta)
        for i, (w, b) in enumerate(layers):
            h = h @ w
            if b is not None:
                h = h + b
            if i < len(layers) - 1:
                h = self.act(h)
        out = h[:, 0]
        return out if x.ndim == 2 else out[0]

    def param_gradient(self, theta, x):
        """Exact reverse-mode gradient of the scalar output at one input."""
        theta = np.asarray(theta, dtype=float)
        x = _check_input(x, self.input_dim)
        if x.ndim != 1:
            raise ShapeMismatchError("param_gradient takes a single input vector")
        layers = self.unflatten(theta)
        acts = [x]
        pres = []
        h = x
        for i, (w, b) in enumerate(layers):
            z = h @ w
            if b is not None:
                z = z + b
            pres.append(z)
            h = self.act(z) if i < len(layers) - 1 else z
            acts.append(h)
        grads = [None] * len(layers)
        delta = np.ones(1)
        for i in range(len(layers) - 1, -1, -1):
            w, b = layers[i]
            gw = np.outer(acts[i], delta)
            gb = delta.copy() if b is not None else None
            grads[i] = (gw, gb)
            if i > 0:
                delta = (delta @ w.T) * self.act.grad(pres[i - 1])
        return self.flatten(grads)


class LinearizedModel:
    """First-order surrogate of a base model around theta0.

    f_lin(x; theta) = f(x; theta0) + <g_hat(x), theta - theta0>, where
    g_hat is the averaged two-point tangent estimate cached per dataset
    input at construction.  Inputs outside the cache are rejected.
    """

    def __init__(self, base, theta0, inputs, tangents, epsilon, m_u):
        self.base = base
        self.theta0 = np.asarray(theta0, dtype=float)
        self.inputs = np.asarray(inputs, dtype=float)
        self.tangents = np.asarray(tangents, dtype=float)
        self.epsilon = epsilon
        self.m_u = m_u
        self.input_dim = base.input_dim
        self.num_params = base.num_params
        self.init_theta = self.theta0
        self.f0 = np.atleast_1d(base.eval(self.inputs, self.theta0))
        self._row = {row.tobytes(): i for i, row in enumerate(self.inputs)}

    def _lookup(self, x):
        x = _check_input(x, self.input_dim)
        if x.ndim == 1:
            idx = self._row.get(x.tobytes())
            if idx is None:
                raise UnsupportedError("input was not cached at linearization time")
            return np.array([idx]), False
        if x.shape == self.inputs.shape and np.array_equal(x, self.inputs):
            return np.arange(len(self.inputs)), True
        idxs = []
        for row in x:
            idx = self._row.get(np.ascontiguousarray(row).tobytes())
            if idx is None:
                raise UnsupportedError("input was not cached at linearization time")
            idxs.append(idx)
        return np.array(idxs), True

    def eval(self, x, theta=None):
        theta = self.theta0 if theta is None else np.asarray(theta, dtype=float)
        idx, batched = self._lookup(x)
        vals = self.f0[idx] + self.tangents[idx] @ (theta - self.theta0)
        return vals if batched else vals[0]

    def param_gradient(self, theta, x):
        idx, batched = self._lookup(x)
        if batched and len(idx) != 1:
            raise ShapeMismatchError("param_gradient takes a single input vector")
        return self.tangents[idx[0]].copy()


def _check_input(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != dim:
        raise ShapeMismatchError(f"input of dimension {dim} expected, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# two-point tangent estimation


@dataclass(frozen=True)
class Perturbation:
    """A finite-difference probe along one direction.  The default step
    size suits unit-scale parameters."""

    direction: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")


def finite_diff_scalar(model, theta, x, epsilon, direction):
    """[f(x; theta + eps*v) - f(x; theta - eps*v)] / (2 eps).

    Vectorized over rows of x; exactly two forward passes regardless of N.
    """
    theta = np.asarray(theta, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if direction.shape != theta.shape:
        raise ShapeMismatchError(
            f"direction shape {direction.shape} != parameter shape {theta.shape}"
        )
    step = epsilon * direction
    fp = model.eval(x, theta + step)
    fm = model.eval(x, theta - step)
    return (fp - fm) / (2.0 * epsilon)


def zo_tangent(model, theta, x, perturbation: Perturbation):
    """Two-point estimate of the model's rate of change w.r.t. parameters:
    the finite-difference scalar times the probing direction."""
    fd = finite_diff_scalar(model, theta, x, perturbation.epsilon, perturbation.direction)
    return fd * perturbation.direction


def estimate_tangent_features(base, theta0, inputs, epsilon, directions):
    """Average of fd(x; u) * u over the given direction rows, per input row.

    Returns an (N, d) matrix whose row i estimates the parameter-gradient
    of the base model at inputs[i].  The same directions are reused for
    every input so the induced Gram matrix is positive semi-definite.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    acc = np.zeros((inputs.shape[0], base.num_params))
    for u in directions:
        fd = np.atleast_1d(finite_diff_scalar(base, theta0, inputs, epsilon, u))
        acc += np.outer(fd, u)
    return acc / directions.shape[0]


def linearize(
    base,
    theta0,
    inputs,
    epsilon: float,
    m_u: int,
    spec: DirectionSpec,
    rng: np.random.Generator,
) -> LinearizedModel:
    """Build the linearized surrogate of base around theta0.

    The tangent feature of every row of inputs is the Monte Carlo average
    of m_u two-point estimates with directions drawn from spec, which must
    be zero-mean with unit variance so the estimate is unbiased.
    """
    if m_u < 1:
        raise ConfigError(f"m_u must be >= 1, got {m_u}")
    from .directions import exact_moments

    mom = exact_moments(spec)
    if spec.mean != 0.0 or abs((mom.m2 - mom.m1**2) - 1.0) > 1e-12:
        raise ConfigError("linearization directions must have zero mean and unit variance")
    if spec.dim != base.num_params:
        raise ShapeMismatchError(
            f"direction dim {spec.dim} != parameter count {base.num_params}"
        )
    dirs = np.stack([sample(spec, rng) for _ in range(m_u)])
    tangents = estimate_tangent_features(base, theta0, inputs, epsilon, dirs)
    return LinearizedModel(base, theta0, np.atleast_2d(inputs), tangents, epsilon, m_u)


# ---------------------------------------------------------------------------
# structural checks


def layer_fd_terms(model: TwoLayerLinear, theta, x, epsilon, z):
    """(full, first-layer-only, second-layer-only) finite-difference scalars
    for a two-layer linear network, partitioning z by the flat layout."""
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    cut = model.n * model.width
    z1 = np.concatenate([z[:cut], np.zeros(model.width)])
    z2 = np.concatenate([np.zeros(cut), z[cut:]])
    full = finite_diff_scalar(model, theta, x, epsilon, z)
    part1 = finite_diff_scalar(model, theta, x, epsilon, z1)
    part2 = finite_diff_scalar(model, theta, x, epsilon, z2)
    return full, part1, part2


def check_layer_decomposition(model: TwoLayerLinear, x, epsilon, z) -> float:
    """|full-perturbation estimate - sum of per-layer estimates|.

    Zero in exact arithmetic: the cross term of the two layers cancels in
    the symmetric difference, so perturbing everything at once equals
    perturbing one layer at a time and summing.
    """
    full, part1, part2 = layer_fd_terms(model, model.init_theta, x, epsilon, z)
    return float(abs(full - (part1 + part2)))


def check_zo_homogeneous(act: Activation, x: float, epsilon: float) -> bool:
    """Does phi(x) equal its two-point secant slope times x at this point?"""
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    secant = (act(x + epsilon) - act(x - epsilon)) / (2.0 * epsilon)
    return bool(abs(act(x) - secant * x) <= 1e-10)
