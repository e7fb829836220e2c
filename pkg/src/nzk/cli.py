"""`nzk`: config-driven experiment runner.

Commands: train, kernel, dynamics, check, sweep.  Every run takes a flat
`key = value` config, writes CSV artifacts plus one `manifest` file into
--out, and exits 0 only when every verdict passes or is explicitly
inconclusive.  Identical config + seed reproduces every CSV byte for byte.
Dataset paths resolve against $NZK_DATA_DIR when set.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import data as datamod
from .config import Config
from .directions import DirectionSpec, SampleMode, exact_moments, kernel_scale, match_scale
from .dynamics import closed_form_trajectory, normalize_kernel, run_seed_ensemble, spectral
from .dynamics import modal_residuals as _modal_residuals
from .errors import ConfigError, NzkError
from .estimators import LossSpec
from .kernels import (
    expected_nzk_closed,
    expected_nzk_identical,
    expected_nzk_linearized,
    expected_nzk_mc,
    ntk_linear,
    trace_commutativity_gap,
    write_kernel_csv,
)
from .manifest import RunManifest, Verdict, write_manifest
from .models import (
    LinearModel,
    LinearizedModel,
    Mlp,
    TwoLayerLinear,
    activation,
    check_zo_homogeneous,
    layer_fd_terms,
    linearize,
)
from .rng import substream
from .training import TrainConfig, train, write_trajectory_csv

DATA_DIR_ENV = "NZK_DATA_DIR"
SWEEP_CHECKPOINT_DEFAULT = 2000


# ---------------------------------------------------------------------------
# builders shared by the commands


def _data_path(raw: str) -> Path:
    path = Path(raw)
    base = os.environ.get(DATA_DIR_ENV)
    if not path.is_absolute() and base:
        return Path(base) / path
    return path


def build_dataset(cfg: Config) -> datamod.Dataset:
    kind = cfg.get("data.kind", "teacher_student")
    if kind == "teacher_student":
        d = cfg.get_int("data.d", 2)
        n = cfg.get_int("data.n", 8)
        seed = cfg.get_int("data.seed", 0)
        noise = cfg.get_float("data.noise_sigma", 0.0)
        raw = cfg.get("data.teacher", "7.0,2.0")
        if raw == "random":
            theta_star = substream(seed, "init", d).standard_normal(d)
        else:
            theta_star = np.array([float(v) for v in raw.split(",")])
        if theta_star.size != d:
            raise ConfigError(f"data.teacher has {theta_star.size} weights but data.d = {d}")
        return datamod.gen_teacher_student(d, n, datamod.TeacherSpec(theta_star, noise), seed)
    if kind == "csv":
        return datamod.load_csv_dataset(_data_path(cfg.require("data.path")))
    if kind == "idx":
        digits = {int(v) for v in cfg.get_list("data.digits", ["0", "1"])}
        max_per_class = cfg.get_int("data.max_per_class", 0) or None
        return datamod.load_mnist_idx(
            _data_path(cfg.require("data.images")),
            _data_path(cfg.require("data.labels")),
            digits,
            max_per_class,
            target_side=cfg.get_int("data.side", 8),
        )
    raise ConfigError(f"unknown data.kind {kind!r}")


def build_model(cfg: Config, dataset: datamod.Dataset):
    kind = cfg.get("model.kind", "linear")
    seed = cfg.get_int("model.seed", 0)
    rng = substream(seed, "init")
    if kind == "linear":
        return LinearModel.random(dataset.d, rng)
    if kind == "two_layer":
        return TwoLayerLinear(dataset.d, cfg.get_int("model.width", 3), rng=rng)
    act = activation(
        cfg.get("model.activation", "relu"),
        cfg.get_float("model.alpha", 0.0) or None,
    )
    widths = [int(v) for v in cfg.get_list("model.widths", [str(dataset.d), "10", "5", "1"])]
    if widths[0] != dataset.d:
        raise ConfigError(f"model.widths starts at {widths[0]} but the data has d = {dataset.d}")
    base = Mlp(widths, act, bias=cfg.get_bool("model.bias", True), rng=rng)
    if kind == "mlp":
        return base
    if kind == "linearized":
        spec = DirectionSpec("gaussian", dim=base.num_params)
        return linearize(
            base,
            base.init_theta,
            dataset.inputs,
            cfg.get_float("model.epsilon", 1e-3),
            cfg.get_int("model.m_u", 500),
            spec,
            substream(seed, "tangent"),
        )
    raise ConfigError(f"unknown model.kind {kind!r}")


def direction_spec(cfg: Config, prefix: str, dim: int) -> DirectionSpec:
    family = cfg.get(f"{prefix}.family", "gaussian")
    dof = cfg.get_float(f"{prefix}.dof", 0.0) or None
    return DirectionSpec(
        family,
        dim=dim,
        mean=cfg.get_float(f"{prefix}.mean", 0.0),
        scale=cfg.get_float(f"{prefix}.scale", 1.0),
        dof=dof,
    )


def zeta_spec(cfg: Config, dim: int) -> DirectionSpec:
    """The tangent-estimation direction: unit gaussian unless configured."""
    if any(k.startswith("direction_zeta.") for k in cfg.data):
        return direction_spec(cfg, "direction_zeta", dim)
    return DirectionSpec("gaussian", dim=dim)


def build_train_config(cfg: Config, model, seed_override=None) -> TrainConfig:
    mode = cfg.get("train.mode", "fo")
    dim = model.num_params
    shared = cfg.get("train.sample_mode", "shared" if mode == "zo_kernel" else "independent")
    return TrainConfig(
        eta=cfg.get_float("train.eta", 1e-3),
        epsilon=cfg.get_float("train.epsilon", 1e-3),
        steps=cfg.get_int("train.steps", 1000),
        mode=mode,
        direction_z=None if mode == "fo" else direction_spec(cfg, "direction", dim),
        direction_zeta=None if mode == "fo" else zeta_spec(cfg, dim),
        sample_mode=SampleMode(shared),
        batch=cfg.get_int("train.batch", 1),
        loss=LossSpec(cfg.get("train.loss", "squared")),
        seed=cfg.get_int("train.seed", 0) if seed_override is None else int(seed_override),
        record_every=cfg.get_int("train.record_every", 1),
        record_theta=cfg.get_bool("train.record_theta", False),
    )


class _Run:
    """Collects artifacts and verdicts, then writes the manifest last."""

    def __init__(self, command: str, out_dir, config: dict, seed=None, t0=None):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(command=command, config=dict(config), seed=seed)
        self.t0 = time.monotonic() if t0 is None else t0

    def path(self, name: str) -> Path:
        self.manifest.artifacts.append(name)
        return self.out / name

    def verdict(self, v: Verdict):
        self.manifest.verdicts.append(v)

    def finish(self) -> RunManifest:
        self.manifest.wall_clock_s = time.monotonic() - self.t0
        write_manifest(self.out / "manifest", self.manifest)
        return self.manifest


# ---------------------------------------------------------------------------
# train


def cmd_train(config_path, out_dir, seed_override=None, threads=1) -> RunManifest:
    cfg = Config.from_path(config_path)
    run = _Run("train", out_dir, cfg.data, seed=seed_override)
    names = cfg.get_list("runs") or [None]
    for name in names:
        sub = cfg
        if name is not None:
            prefix = f"run.{name}."
            overrides = {k[len(prefix):]: v for k, v in cfg.data.items() if k.startswith(prefix)}
            sub = cfg.overlay(overrides)
        dataset = build_dataset(sub)
        model = build_model(sub, dataset)
        tc = build_train_config(sub, model, seed_override)
        traj = train(model, dataset, tc)
        fname = "trajectory.csv" if name is None else f"trajectory_{name}.csv"
        write_trajectory_csv(run.path(fname), traj, include_fvals=sub.get_bool("train.record_fvals", False))
        label = name or "run"
        run.verdict(
            Verdict.check(f"finite_losses_{label}", bool(np.all(np.isfinite(traj.losses))),
                          float(traj.losses[-1]), "finite", detail=f"final loss after {tc.steps} steps")
        )
    return run.finish()


# ---------------------------------------------------------------------------
# kernel


def cmd_kernel(config_path, out_dir, seed_override=None, threads=1) -> RunManifest:
    t0 = time.monotonic()
    cfg = Config.from_path(config_path)
    dataset = build_dataset(cfg)
    model = build_model(cfg, dataset)
    dim = model.num_params
    spec_z = direction_spec(cfg, "direction", dim)
    spec_zeta = zeta_spec(cfg, dim)
    mode = SampleMode(cfg.get("kernel.sample_mode", "independent"))
    m = cfg.get_int("kernel.samples", 10**4)
    epsilon = cfg.get_float("kernel.epsilon", 1e-3)
    seed = cfg.get_int("kernel.seed", 0) if seed_override is None else int(seed_override)

    mc, se = expected_nzk_mc(
        model, model.init_theta, epsilon, spec_zeta, spec_z, mode, m, dataset.inputs, substream(seed, "mc")
    )
    if mode is SampleMode.SHARED:
        closed = expected_nzk_identical(spec_z, dataset.inputs)
        scale = kernel_scale(spec_z, dataset.d)
    else:
        closed = expected_nzk_closed(spec_zeta, spec_z, dataset.inputs)
        scale = spec_zeta.scale**2 * spec_z.scale**2

    resolved = dict(cfg.data)
    resolved["kernel.closed_scale"] = format(scale, ".17g")
    run = _Run("kernel", out_dir, resolved, seed=seed, t0=t0)
    write_kernel_csv(run.path("kernel_mc.csv"), mc, run.path("kernel_mc.meta"))
    write_kernel_csv(run.path("kernel_closed.csv"), closed, run.path("kernel_closed.meta"))
    np.savetxt(run.path("kernel_se.csv"), se, delimiter=",", fmt="%.17g")
    write_kernel_csv(run.path("kernel_ntk.csv"), ntk_linear(dataset.inputs))

    deviation = float(np.max(np.abs(mc.values - closed.values)))
    allowance = float(5.0 * se.max())
    underpowered = m < 100 or allowance > max(float(np.abs(closed.values).max()), 1e-12)
    if underpowered:
        run.verdict(Verdict.inconclusive("mc_vs_closed", deviation, allowance,
                                         detail=f"standard errors too large at samples={m}"))
    else:
        run.verdict(Verdict.check("mc_vs_closed", deviation <= allowance, deviation, allowance))
    return run.finish()


# ---------------------------------------------------------------------------
# dynamics


def _dynamics_kernel(model, dataset, tc: TrainConfig):
    """The expected per-step kernel of the configured mode, unnormalized."""
    if isinstance(model, LinearModel):
        base = ntk_linear(dataset.inputs).values
    elif isinstance(model, LinearizedModel):
        base = expected_nzk_linearized(model, dataset.inputs).values
    else:
        raise ConfigError("closed-form dynamics cover linear and linearized models")
    if tc.mode == "fo":
        return base
    spec = tc.direction_z
    if tc.mode == "zo_kernel":
        return kernel_scale(spec, spec.dim) * base
    if spec.mean == 0.0:
        return exact_moments(spec).m2 * base
    if spec.family == "gaussian" and isinstance(model, LinearModel):
        unit = DirectionSpec("gaussian", dim=spec.dim)
        return expected_nzk_closed(unit, spec, dataset.inputs).values
    raise ConfigError("expected dynamics need zero-mean directions (or gaussian, linear model)")


def _write_fvals_csv(path, steps, rows):
    n = rows.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step," + ",".join(f"f_{i}" for i in range(n)) + "\n")
        for t, row in zip(steps, rows):
            fh.write(str(int(t)) + "," + ",".join(format(v, ".17g") for v in row) + "\n")


def cmd_dynamics(config_path, out_dir, seed_override=None, threads=1) -> RunManifest:
    t0 = time.monotonic()
    cfg = Config.from_path(config_path)
    dataset = build_dataset(cfg)
    model = build_model(cfg, dataset)
    tc = build_train_config(cfg, model, seed_override)
    k_bar = normalize_kernel(_dynamics_kernel(model, dataset, tc), dataset.n)

    if tc.mode == "fo":
        traj = train(model, dataset, tc)
        steps, mean_fvals = traj.recorded_steps, traj.fvals
        se_fvals = None
    else:
        ens = run_seed_ensemble(model, dataset, tc, cfg.get_int("dynamics.ensemble", 200))
        steps, mean_fvals, se_fvals = ens.recorded_steps, ens.mean_fvals, ens.se_fvals

    analytic = closed_form_trajectory(k_bar, mean_fvals[0], dataset.targets, tc.eta, tc.steps)
    decomp = spectral(k_bar)

    run = _Run("dynamics", out_dir, cfg.data, seed=tc.seed, t0=t0)
    _write_fvals_csv(run.path("empirical_fvals.csv"), steps, mean_fvals)
    if se_fvals is not None:
        _write_fvals_csv(run.path("empirical_se.csv"), steps, se_fvals)
    _write_fvals_csv(run.path("analytic_fvals.csv"), steps, analytic.fvals[steps])

    gaps = np.abs(mean_fvals - analytic.fvals[steps])
    with open(run.path("comparison.csv"), "w", encoding="utf-8") as fh:
        fh.write("step,max_abs_err\n")
        for t, g in zip(steps, gaps.max(axis=1)):
            fh.write(f"{int(t)},{g:.17g}\n")

    coeffs = _modal_residuals(decomp, mean_fvals, dataset.targets)
    with open(run.path("modal_residuals.csv"), "w", encoding="utf-8") as fh:
        fh.write("step,mode_index,residual_coeff\n")
        for row, t in enumerate(steps):
            for i in range(coeffs.shape[1]):
                fh.write(f"{int(t)},{i},{coeffs[row, i]:.17g}\n")
    with open(run.path("spectrum.csv"), "w", encoding="utf-8") as fh:
        fh.write("mode_index,eigenvalue,decay_factor\n")
        for i, (lam, dec) in enumerate(zip(decomp.eigenvalues, analytic.decay_factors)):
            fh.write(f"{i},{lam:.17g},{dec:.17g}\n")

    if tc.mode == "fo":
        tol = cfg.get_float("dynamics.tolerance", 1e-10)
        run.verdict(Verdict.check("closed_form_match", float(gaps.max()) <= tol, float(gaps.max()), tol))
    else:
        floor = 1e-12
        ratio = float(np.max(gaps / (3.0 * se_fvals + floor)))
        run.verdict(Verdict.check("closed_form_match", ratio <= 1.0, ratio, 1.0,
                                  detail="max |gap| / (3 SE of the seed mean)"))
    return run.finish()


# ---------------------------------------------------------------------------
# check


def cmd_check(out_dir, threads=1) -> RunManifest:
    run = _Run("check", out_dir, {})
    results = []

    worst = 0.0
    for k in range(100):
        rng = substream(1000 + k, "init")
        n, width = int(rng.integers(2, 6)), int(rng.integers(1, 6))
        model = TwoLayerLinear(n, width, rng=rng)
        x = rng.standard_normal(n)
        z = rng.standard_normal(model.num_params)
        full, p1, p2 = layer_fd_terms(model, model.init_theta, x, 1e-3, z)
        worst = max(worst, abs(full - (p1 + p2)) / max(abs(full), abs(p1) + abs(p2), 1.0))
    results.append(Verdict.check("layer_decomposition", worst <= 1e-10, worst, 1e-10))

    eps = 1e-3
    rng = substream(2000, "mc")
    acts = [activation("relu"), activation("leaky_relu", 0.1), activation("leaky_relu", 0.5), activation("linear", 2.0)]
    holds = all(
        check_zo_homogeneous(act, float(rng.uniform(1.5 * eps, 3.0) * rng.choice([-1.0, 1.0])), eps)
        for act in acts
        for _ in range(100)
    )
    results.append(Verdict.check("zo_homogeneity", holds, "holds" if holds else "violated", "piecewise-linear family"))
    tanh_fails = not check_zo_homogeneous(activation("tanh"), 2.0, eps)
    results.append(Verdict.check("zo_homogeneity_negative_control", tanh_fails,
                                 "tanh rejected" if tanh_fails else "tanh accepted", "must fail"))

    gap = trace_commutativity_gap(substream(3000, "mc").standard_normal((500, 5, 5)))
    results.append(Verdict.check("trace_commutativity", gap <= 1e-12, gap, 1e-12))

    draws = substream(4000, "mc").standard_normal(10**6)
    sq = draws**2
    var = sq.var(ddof=1)
    centered = (sq - sq.mean()) ** 2
    se_var = np.sqrt(max(centered.var(ddof=1), 0.0) / sq.size)
    results.append(Verdict.check("chi_square_variance", abs(var - 2.0) <= 5 * se_var,
                                 var, f"2 +- {5 * se_var:.3g}"))

    with open(run.path("checks.csv"), "w", encoding="utf-8") as fh:
        fh.write("name,status,measured,tolerance\n")
        for v in results:
            run.verdict(v)
            fh.write(f"{v.name},{v.status},{v.measured},{v.tolerance}\n")
    return run.finish()


# ---------------------------------------------------------------------------
# sweep


def _sweep_cells(cfg: Config, axis: str, values, base_dim: int):
    """Yield (label, overrides, direction_spec_or_None) per sweep cell."""
    for value in values:
        if axis == "sigma":
            spec = direction_spec(cfg.overlay({"direction.scale": value}), "direction", base_dim)
            yield f"sigma_{value}", {}, spec
        elif axis == "d":
            d = int(value)
            spec = direction_spec(cfg, "direction", d)
            yield f"d_{d}", {"data.d": str(d), "data.teacher": cfg.get("data.teacher", "random")}, spec
        elif axis == "distribution":
            family, _, param = value.partition(":")
            if family == "student_t":
                spec = DirectionSpec("student_t", dim=base_dim, dof=float(param))
            elif param == "match":
                target = kernel_scale(direction_spec(cfg, "direction", base_dim), base_dim)
                spec = match_scale(target, family, base_dim)
            else:
                spec = DirectionSpec(family, dim=base_dim, scale=float(param) if param else 1.0)
            yield value.replace(":", "_"), {}, spec
        else:
            raise ConfigError(f"unknown sweep.axis {axis!r} (sigma, d, distribution)")


def cmd_sweep(config_path, out_dir, seed_override=None, threads=1) -> RunManifest:
    cfg = Config.from_path(config_path)
    axis = cfg.require("sweep.axis")
    values = cfg.get_list("sweep.values")
    if not values:
        raise ConfigError("sweep.values must list at least one cell")
    checkpoint = cfg.get_int("sweep.checkpoint", SWEEP_CHECKPOINT_DEFAULT)
    n_seeds = cfg.get_int("sweep.ensemble", 20)

    base_dataset = build_dataset(cfg)
    run = _Run("sweep", out_dir, cfg.data, seed=seed_override)
    cells = []
    for label, overrides, spec in _sweep_cells(cfg, axis, values, base_dataset.d):
        sub = cfg.overlay(overrides)
        dataset = build_dataset(sub)
        model = build_model(sub, dataset)
        tc = build_train_config(sub, model, seed_override)
        tc = TrainConfig(
            eta=tc.eta, epsilon=tc.epsilon, steps=max(tc.steps, checkpoint), mode=tc.mode,
            direction_z=spec if tc.mode != "fo" else None, direction_zeta=None,
            sample_mode=tc.sample_mode, batch=tc.batch, loss=tc.loss, seed=tc.seed,
            record_every=cfg.get_int("sweep.record_every", 100),
        )
        ens = run_seed_ensemble(model, dataset, tc, n_seeds)
        try:
            scale = kernel_scale(spec, spec.dim) if spec is not None else 1.0
        except NzkError:
            scale = float("nan")
        with open(run.path(f"cell_{label}.csv"), "w", encoding="utf-8") as fh:
            fh.write("step,loss,se\n")
            for t in ens.recorded_steps:
                fh.write(f"{int(t)},{ens.mean_losses[t]:.17g},{_se_at(ens, t):.17g}\n")
        cells.append((label, scale, ens))

    ck = checkpoint
    with open(run.path("summary.csv"), "w", encoding="utf-8") as fh:
        fh.write("cell,kernel_scale,checkpoint_step,loss_at_checkpoint,se_at_checkpoint,final_loss,final_se\n")
        for label, scale, ens in cells:
            fh.write(
                f"{label},{scale:.17g},{ck},{ens.mean_losses[ck]:.17g},{_se_at(ens, ck):.17g},"
                f"{ens.mean_losses[-1]:.17g},{_se_at(ens, len(ens.mean_losses) - 1):.17g}\n"
            )

    if axis in ("sigma", "d"):
        ordered = sorted(cells, key=lambda c: c[1])
        losses = [c[2].mean_losses[ck] for c in ordered]
        ok = all(losses[i] > losses[i + 1] for i in range(len(losses) - 1))
        run.verdict(Verdict.check("checkpoint_ordering", ok,
                                  " > ".join(f"{v:.3g}" for v in losses), "strictly decreasing with kernel scale"))
    else:
        matched = _matched_groups(cells)
        if not matched:
            run.verdict(Verdict.inconclusive("scale_matched_agreement", "no matched pair", "3 SE"))
        else:
            worst = 0.0
            for group in matched:
                for i in range(len(group)):
                    for j in range(i + 1, len(group)):
                        a, b = group[i][2], group[j][2]
                        se = np.sqrt(a.se_losses[a.recorded_steps] ** 2 + b.se_losses[b.recorded_steps] ** 2)
                        gap = np.abs(a.mean_losses[a.recorded_steps] - b.mean_losses[b.recorded_steps])
                        worst = max(worst, float(np.max(gap / (3.0 * se + 1e-15))))
            run.verdict(Verdict.check("scale_matched_agreement", worst <= 1.0, worst, 1.0,
                                      detail="max |mean gap| / (3 SE) over matched cells"))
    return run.finish()


def _se_at(ens, step_index):
    return float(ens.se_losses[step_index])


def _matched_groups(cells):
    groups = []
    used = set()
    for i, (_, scale_i, _) in enumerate(cells):
        if i in used or not np.isfinite(scale_i):
            continue
        group = [cells[i]]
        for j in range(i + 1, len(cells)):
            if j in used:
                continue
            scale_j = cells[j][1]
            if np.isfinite(scale_j) and abs(scale_i - scale_j) <= 1e-9 * max(scale_i, scale_j):
                group.append(cells[j])
                used.add(j)
        if len(group) > 1:
            groups.append(group)
    return groups


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nzk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "kernel", "dynamics", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
    p = sub.add_parser("check")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)

    args = parser.parse_args(argv)
    try:
        if args.command == "check":
            manifest = cmd_check(args.out, threads=args.threads)
        else:
            fn = {"train": cmd_train, "kernel": cmd_kernel, "dynamics": cmd_dynamics, "sweep": cmd_sweep}[args.command]
            manifest = fn(args.config, args.out, seed_override=args.seed, threads=args.threads)
    except NzkError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    for v in manifest.verdicts:
        print(f"[{v.status.upper():>12}] {v.name}: measured {v.measured} vs tolerance {v.tolerance}")
    return manifest.exit_code()


if __name__ == "__main__":
    sys.exit(main())
