"""Closed-form function-space trajectories and spectral analysis.

With a constant kernel and squared loss, the residual in function space
contracts linearly each step:

    r_{t+1} = (I - eta * K/N) r_t,   f_t = f_star + r_t

so the trajectory is available in closed form and decomposes along the
kernel's eigenvectors into independently decaying modes with factors
(1 - eta * lambda_i).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, ShapeMismatchError
from .kernels import KernelMatrix
from .training import Trajectory, TrainConfig, train

SYMMETRY_TOL = 1e-8


class DivergenceWarning(UserWarning):
    """eta * lambda_max >= 2: the residual recursion grows instead of decaying."""


@dataclass
class SpectralDecomposition:
    """Descending eigenvalues and the matching orthonormal eigenvectors
    (columns of vectors)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray


@dataclass
class ClosedFormTrajectory:
    """Function values for steps 0..T and the per-mode decay factors."""

    fvals: np.ndarray
    decay_factors: np.ndarray
    diverges: bool


def normalize_kernel(kernel, n: int):
    """Divide a kernel by the training-set size.  KernelMatrix inputs are
    tagged so a second normalization is rejected rather than silently
    compounding."""
    if isinstance(kernel, KernelMatrix):
        if kernel.meta.get("normalized_by") is not None:
            raise ContractError("kernel is already normalized")
        meta = dict(kernel.meta, normalized_by=n)
        return KernelMatrix(kernel.values / n, kernel.kind, meta)
    return np.asarray(kernel, dtype=float) / n


def spectral(k_bar) -> SpectralDecomposition:
    """Full symmetric eigendecomposition with eigenvalues sorted descending."""
    k = k_bar.values if isinstance(k_bar, KernelMatrix) else np.asarray(k_bar, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeMismatchError(f"square matrix expected, got shape {k.shape}")
    if np.max(np.abs(k - k.T)) > SYMMETRY_TOL:
        raise ContractError("matrix is not symmetric within tolerance")
    vals, vecs = np.linalg.eigh(0.5 * (k + k.T))
    order = np.argsort(vals)[::-1]
    return SpectralDecomposition(vals[order], vecs[:, order])


def closed_form_trajectory(k_bar, f0, f_star, eta: float, steps: int) -> ClosedFormTrajectory:
    """Iterate the residual recursion for the given number of steps.

    The recursion (rather than explicit matrix powers) keeps the cost at
    O(T N^2) and avoids the symmetry loss of repeated squaring.  When
    eta * lambda_max >= 2 a divergence warning is attached and iteration
    continues, since instability is itself a quantity of interest.
    """
    k = k_bar.values if isinstance(k_bar, KernelMatrix) else np.asarray(k_bar, dtype=float)
    f0 = np.atleast_1d(np.asarray(f0, dtype=float))
    f_star = np.atleast_1d(np.asarray(f_star, dtype=float))
    if not eta > 0:
        raise ConfigError(f"eta must be > 0, got {eta}")
    if k.shape != (f0.size, f0.size) or f_star.size != f0.size:
        raise ShapeMismatchError("kernel and function vectors disagree in size")
    decomp = spectral(k)
    decay = 1.0 - eta * decomp.eigenvalues
    diverges = bool(eta * decomp.eigenvalues[0] >= 2.0)
    if diverges:
        warnings.warn(
            f"eta*lambda_max = {eta * decomp.eigenvalues[0]:.3g} >= 2; residual grows",
            DivergenceWarning,
            stacklevel=2,
        )
    fvals = np.empty((steps + 1, f0.size))
    r = f0 - f_star
    fvals[0] = f0
    for t in range(1, steps + 1):
        r = r - eta * (k @ r)
        fvals[t] = f_star + r
    return ClosedFormTrajectory(fvals=fvals, decay_factors=decay, diverges=diverges)


def modal_residuals(decomp: SpectralDecomposition, fvals, f_star) -> np.ndarray:
    """Coefficients <v_i, f_t - f_star> per step and mode."""
    return (np.atleast_2d(fvals) - np.asarray(f_star)) @ decomp.vectors


@dataclass
class ComparisonResult:
    max_abs_err: float
    per_step_err: np.ndarray
    steps: np.ndarray


def compare(empirical, analytic: ClosedFormTrajectory) -> ComparisonResult:
    """Elementwise gap between a recorded trajectory (or a seed-mean fvals
    array paired with its recorded steps) and a closed-form prediction."""
    if isinstance(empirical, Trajectory):
        steps, fvals = empirical.recorded_steps, empirical.fvals
    else:
        steps, fvals = empirical
        steps = np.asarray(steps)
        fvals = np.atleast_2d(fvals)
    if steps.max(initial=0) >= analytic.fvals.shape[0] or fvals.shape[1] != analytic.fvals.shape[1]:
        raise ShapeMismatchError("empirical recording does not fit the analytic trajectory")
    err = np.abs(fvals - analytic.fvals[steps])
    per_step = err.max(axis=1)
    return ComparisonResult(float(err.max()), per_step, steps)


@dataclass
class EnsembleTrajectory:
    """Seed-averaged run: means and standard errors of the losses and of
    the function values at the common recorded steps."""

    recorded_steps: np.ndarray
    mean_losses: np.ndarray
    se_losses: np.ndarray
    mean_fvals: np.ndarray
    se_fvals: np.ndarray
    n_seeds: int


def run_seed_ensemble(model, dataset, config: TrainConfig, n_seeds: int) -> EnsembleTrajectory:
    """Train once per seed (config.seed, config.seed+1, ...) with identical
    initial parameters and aggregate.  Expected-kernel predictions hold in
    the mean, so stochastic-vs-analytic comparisons go through this."""
    if n_seeds < 2:
        raise ConfigError(f"need at least 2 seeds, got {n_seeds}")
    losses, fvals = [], []
    steps = None
    for k in range(n_seeds):
        traj = train(model, dataset, config.with_seed(config.seed + k))
        losses.append(traj.losses)
        fvals.append(traj.fvals)
        steps = traj.recorded_steps
    losses = np.stack(losses)
    fvals = np.stack(fvals)
    return EnsembleTrajectory(
        recorded_steps=steps,
        mean_losses=losses.mean(axis=0),
        se_losses=losses.std(axis=0, ddof=1) / np.sqrt(n_seeds),
        mean_fvals=fvals.mean(axis=0),
        se_fvals=fvals.std(axis=0, ddof=1) / np.sqrt(n_seeds),
        n_seeds=n_seeds,
    )
