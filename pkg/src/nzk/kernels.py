"""Kernels induced by two-point tangent estimates.

One sample of the kernel contracts two estimated tangents:

    k(x_i, x_j) = fd(x_i; zeta) * fd(x_j; z) * <zeta, z>

For a linear model this is <zeta, x_i><z, x_j><zeta, z> for every theta,
so the expectation over gaussian directions has the closed form

    s_zeta^2 s_z^2 <x_i, x_j> + (s_zeta^2 m_z^2 + m_zeta^2 s_z^2
                                 + d m_zeta^2 m_z^2) <x_i, 1><1, x_j>

which collapses to the plain Gram matrix at zero mean and unit variance.
When one shared vector plays both roles the expectation is the Gram matrix
times V[z_i^2] + d*E^2[z_i^2], i.e. (d+2)*sigma^4 for a gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .directions import DirectionSpec, SampleMode, kernel_scale, sample
from .errors import ConfigError, UnsupportedError
from .models import finite_diff_scalar

KERNEL_KINDS = ("ntk", "nzk_sample", "nzk_expected_mc", "nzk_expected_closed", "nzk_linearized")


@dataclass
class KernelMatrix:
    """An N x N kernel with its provenance."""

    values: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=float)


def nzk_entry(model, theta, epsilon, zeta, z, x_i, x_j) -> float:
    """One kernel sample for a single input pair."""
    a = finite_diff_scalar(model, theta, x_i, epsilon, zeta)
    b = finite_diff_scalar(model, theta, x_j, epsilon, z)
    return float(a * b * (np.asarray(zeta) @ np.asarray(z)))


def nzk_sample_matrix(model, theta, epsilon, zeta, z, inputs) -> KernelMatrix:
    """The full kernel for one direction pair: rank one by construction,
    and symmetric only when zeta and z coincide."""
    a = np.atleast_1d(finite_diff_scalar(model, theta, inputs, epsilon, zeta))
    if zeta is z or np.array_equal(zeta, z):
        b, dot = a, float(np.asarray(z) @ np.asarray(z))
    else:
        b = np.atleast_1d(finite_diff_scalar(model, theta, inputs, epsilon, z))
        dot = float(np.asarray(zeta) @ np.asarray(z))
    return KernelMatrix(dot * np.outer(a, b), "nzk_sample", {"epsilon": epsilon})


def expected_nzk_mc(
    model,
    theta,
    epsilon,
    spec_zeta: DirectionSpec,
    spec_z: DirectionSpec,
    sample_mode: SampleMode,
    m: int,
    inputs,
    rng,
):
    """Entrywise mean of m kernel samples, plus per-entry standard errors.

    In shared mode each sample uses one vector for both roles (the two are
    bitwise identical); otherwise zeta and z are drawn independently.  The
    mean is symmetrized afterwards and the raw asymmetry recorded in meta,
    since finite-sample noise breaks exact symmetry in independent mode.
    """
    if m < 2:
        raise ConfigError(f"need at least 2 samples for a standard error, got {m}")
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    n = inputs.shape[0]
    total = np.zeros((n, n))
    total_sq = np.zeros((n, n))
    for _ in range(m):
        if sample_mode is SampleMode.SHARED:
            z = sample(spec_z, rng)
            zeta = z
            a = np.atleast_1d(finite_diff_scalar(model, theta, inputs, epsilon, z))
            b = a
        else:
            zeta = sample(spec_zeta, rng)
            z = sample(spec_z, rng)
            a = np.atleast_1d(finite_diff_scalar(model, theta, inputs, epsilon, zeta))
            b = np.atleast_1d(finite_diff_scalar(model, theta, inputs, epsilon, z))
        k = (zeta @ z) * np.outer(a, b)
        total += k
        total_sq += k * k
    mean = total / m
    var = np.maximum(total_sq - m * mean * mean, 0.0) / (m - 1)
    se = np.sqrt(var / m)
    asym = float(np.max(np.abs(mean - mean.T)))
    values = 0.5 * (mean + mean.T)
    se_sym = np.sqrt(0.5 * (se**2 + se.T**2))
    meta = {
        "samples": m,
        "epsilon": epsilon,
        "sample_mode": sample_mode.value,
        "spec_zeta": _spec_str(spec_zeta),
        "spec_z": _spec_str(spec_z),
        "max_asymmetry": asym,
    }
    return KernelMatrix(values, "nzk_expected_mc", meta), se_sym


def expected_nzk_closed(spec_zeta: DirectionSpec, spec_z: DirectionSpec, inputs) -> KernelMatrix:
    """Closed-form expected kernel; proven for gaussian direction pairs."""
    if spec_zeta.family != "gaussian" or spec_z.family != "gaussian":
        raise UnsupportedError("the closed form covers gaussian directions only")
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    d = inputs.shape[1]
    if spec_zeta.dim != d or spec_z.dim != d:
        raise ConfigError("direction dimension must match the input dimension")
    gram = inputs @ inputs.T
    var_zeta, var_z = spec_zeta.scale**2, spec_z.scale**2
    values = (var_zeta * var_z) * gram
    mean_coef = (
        var_zeta * spec_z.mean**2
        + spec_zeta.mean**2 * var_z
        + d * spec_zeta.mean**2 * spec_z.mean**2
    )
    if mean_coef != 0.0:
        s = inputs.sum(axis=1)
        values = values + mean_coef * np.outer(s, s)
    meta = {"spec_zeta": _spec_str(spec_zeta), "spec_z": _spec_str(spec_z)}
    return KernelMatrix(values, "nzk_expected_closed", meta)


def expected_nzk_identical(spec: DirectionSpec, inputs) -> KernelMatrix:
    """Expected kernel when one zero-mean vector plays both roles:
    the Gram matrix times the distribution's kernel scale."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    d = inputs.shape[1]
    if spec.dim != d:
        raise ConfigError("direction dimension must match the input dimension")
    scale = kernel_scale(spec, d)
    values = scale * (inputs @ inputs.T)
    return KernelMatrix(values, "nzk_expected_closed", {"spec": _spec_str(spec), "scale": scale})


def ntk_linear(inputs) -> KernelMatrix:
    """The exact tangent kernel of a linear model: the Gram matrix."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    return KernelMatrix(inputs @ inputs.T, "ntk", {})


def expected_nzk_linearized(lin, inputs) -> KernelMatrix:
    """Expected kernel of a linearized model: inner products of its cached
    tangent features.  Independent of the training-time parameters."""
    idx, _ = lin._lookup(np.atleast_2d(np.asarray(inputs, dtype=float)))
    feats = lin.tangents[idx]
    meta = {"epsilon": lin.epsilon, "tangent_samples": lin.m_u}
    return KernelMatrix(feats @ feats.T, "nzk_linearized", meta)


def constancy_report(model, thetas, kernel_fn, inputs) -> float:
    """Max entrywise drift of kernel_fn(model, theta_t, inputs) across the
    given parameter snapshots, relative to the first snapshot."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[0] < 2:
        raise ConfigError("need at least two parameter snapshots")
    base = _values(kernel_fn(model, thetas[0], inputs))
    worst = 0.0
    for theta in thetas[1:]:
        worst = max(worst, float(np.max(np.abs(_values(kernel_fn(model, theta, inputs)) - base))))
    return worst


def trace_commutativity_gap(matrices) -> float:
    """|mean of traces - trace of the mean| over a stack of square matrices;
    zero up to float reassociation, for any random matrices."""
    matrices = np.asarray(matrices, dtype=float)
    return float(abs(np.trace(matrices, axis1=1, axis2=2).mean() - np.trace(matrices.mean(axis=0))))


def _values(k):
    return k.values if isinstance(k, KernelMatrix) else np.asarray(k, dtype=float)


def _spec_str(spec: DirectionSpec) -> str:
    extra = f",dof={spec.dof}" if spec.dof is not None else ""
    return f"{spec.family}(mean={spec.mean},scale={spec.scale},dim={spec.dim}{extra})"


def write_kernel_csv(path, kernel: KernelMatrix, meta_path=None):
    """Matrix as bare CSV at 17 significant digits; optional key=value
    companion recording provenance."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.atleast_2d(kernel.values):
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
    if meta_path is not None:
        with open(meta_path, "w", encoding="utf-8") as fh:
            fh.write(f"kind = {kernel.kind}\n")
            for key, val in kernel.meta.items():
                fh.write(f"{key} = {val}\n")


def read_kernel_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
