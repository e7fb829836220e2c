"""The training loop and its recorded trajectories.

Three update modes share one loop:

  fo            theta <- theta - eta * analytic_gradient
  zo_parametric theta <- theta - eta * two_point_gradient(z)
  zo_kernel     theta <- theta - eta * <zeta, two_point_gradient(z)> * zeta
                with zeta set to the same shared vector as z

The kernel mode realizes the function-space update induced by estimating
the model's tangent with the same vector that perturbs the loss: the
parameter step is the two-point gradient projected onto the shared
direction and taken along it, which scales the expected per-step kernel
by V[z_i^2] + d*E^2[z_i^2].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .directions import DirectionSpec, SampleMode, sample
from .errors import ConfigError, DivergenceError
from .estimators import LossSpec, fo_gradient, zo_gradient
from .rng import substream

MODES = ("fo", "zo_parametric", "zo_kernel")
DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class TrainConfig:
    """Everything one run needs besides the model and the data."""

    eta: float
    epsilon: float
    steps: int
    mode: str
    direction_z: DirectionSpec | None = None
    direction_zeta: DirectionSpec | None = None
    sample_mode: SampleMode = SampleMode.INDEPENDENT
    batch: int = 1
    loss: LossSpec = field(default_factory=LossSpec)
    seed: int = 0
    record_every: int = 1
    record_theta: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown training mode {self.mode!r}")
        if not self.eta > 0 or not self.epsilon > 0:
            raise ConfigError("eta and epsilon must be > 0")
        if self.steps < 0 or self.batch < 1 or self.record_every < 1:
            raise ConfigError("steps must be >= 0, batch and record_every >= 1")
        if self.mode == "zo_kernel" and self.sample_mode is not SampleMode.SHARED:
            raise ConfigError("zo_kernel training requires the shared sample mode")
        if self.mode != "fo" and self.direction_z is None:
            raise ConfigError(f"mode {self.mode!r} needs a direction spec for z")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)


@dataclass
class Trajectory:
    """Per-step record of one run.

    losses has one entry per step including the initial point; function
    values (and optional parameter snapshots) are kept at recorded_steps,
    which is every record_every-th step plus the final one.
    """

    losses: np.ndarray
    recorded_steps: np.ndarray
    fvals: np.ndarray
    theta_snapshots: np.ndarray | None = None


def train(model, dataset, config: TrainConfig) -> Trajectory:
    """Run the configured number of steps from the model's initial
    parameters; deterministic given (config.seed, specs)."""
    if dataset.inputs.shape[1] != model.input_dim:
        raise ConfigError(
            f"dataset dimension {dataset.inputs.shape[1]} != model input {model.input_dim}"
        )
    zeta_spec = config.direction_zeta
    if config.mode == "zo_parametric" and zeta_spec is None:
        zeta_spec = DirectionSpec("gaussian", dim=model.num_params)

    theta = np.array(model.init_theta, dtype=float)
    n = dataset.inputs.shape[0]
    losses = np.empty(config.steps + 1)
    recorded, fvals, snaps = [], [], []

    for t in range(config.steps + 1):
        f = np.atleast_1d(model.eval(dataset.inputs, theta))
        losses[t] = config.loss.value(f, dataset.targets).mean()
        if not np.isfinite(losses[t]) or losses[t] > DIVERGENCE_LIMIT:
            raise DivergenceError(f"loss {losses[t]} at step {t}", step=t)
        if t % config.record_every == 0 or t == config.steps:
            recorded.append(t)
            fvals.append(f.copy())
            if config.record_theta:
                snaps.append(theta.copy())
        if t == config.steps:
            break
        try:
            theta = theta - config.eta * _update(model, dataset, theta, config, zeta_spec, t)
        except DivergenceError as err:
            raise DivergenceError(f"{err} at step {t}", step=t) from None

    return Trajectory(
        losses=losses,
        recorded_steps=np.array(recorded),
        fvals=np.array(fvals).reshape(len(recorded), n),
        theta_snapshots=np.array(snaps) if config.record_theta else None,
    )


def _update(model, dataset, theta, config, zeta_spec, t):
    if config.mode == "fo":
        return fo_gradient(model, dataset, theta, config.loss)
    acc = np.zeros_like(theta)
    for j in range(config.batch):
        z = sample(config.direction_z, substream(config.seed, "z", t, j))
        if config.mode == "zo_parametric":
            # The tangent draw is consumed even though the parametric update
            # only needs z, so A/B runs see identical stream layouts.
            sample(zeta_spec, substream(config.seed, "zeta", t, j))
            acc += zo_gradient(model, dataset, theta, config.epsilon, z, config.loss)
        else:
            zeta = z  # shared mode: one vector plays both roles
            g = zo_gradient(model, dataset, theta, config.epsilon, z, config.loss)
            acc += (zeta @ g) * zeta
    return acc / config.batch


def write_trajectory_csv(path, trajectory: Trajectory, include_fvals: bool = False):
    """`step,loss` rows for every step, or `step,loss,f_0..f_{N-1}` rows
    restricted to the recorded steps when function values are included."""
    with open(path, "w", encoding="utf-8") as fh:
        if include_fvals:
            n = trajectory.fvals.shape[1]
            fh.write("step,loss," + ",".join(f"f_{i}" for i in range(n)) + "\n")
            for row, t in enumerate(trajectory.recorded_steps):
                vals = ",".join(_fmt(v) for v in trajectory.fvals[row])
                fh.write(f"{t},{_fmt(trajectory.losses[t])},{vals}\n")
        else:
            fh.write("step,loss\n")
            for t, val in enumerate(trajectory.losses):
                fh.write(f"{t},{_fmt(val)}\n")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")
