# A small ReLU network on 8x8 digit images, linearized around its
# initialization with Monte Carlo tangent estimates, trains like a kernel
# machine: shared-direction updates race ahead of plain gradient descent,
# which single-direction parametric updates can only track with extra noise.
#
# Uses real MNIST from $NZK_DATA_DIR when available, else bundled synthetic
# handwritten-style digits written through the same IDX pipeline.

import os
import tempfile
from pathlib import Path

import numpy as np

from nzk import DirectionSpec, SampleMode, TrainConfig, linearize, load_mnist_idx, substream, train
from nzk.data import render_synthetic_digits, write_idx_files
from nzk.kernels import expected_nzk_linearized
from nzk.models import Mlp, activation


def digits_dataset(tmp):
    base = os.environ.get("NZK_DATA_DIR")
    if base and (Path(base) / "train-images-idx3-ubyte").exists():
        return load_mnist_idx(
            Path(base) / "train-images-idx3-ubyte", Path(base) / "train-labels-idx1-ubyte",
            digits={0, 1}, max_per_class=100,
        )
    imgs, lbls = render_synthetic_digits(100, seed=42)
    write_idx_files(imgs, lbls, tmp / "i.idx", tmp / "l.idx")
    return load_mnist_idx(tmp / "i.idx", tmp / "l.idx", digits={0, 1}, max_per_class=100)


with tempfile.TemporaryDirectory() as td:
    ds = digits_dataset(Path(td))
print(f"dataset: {ds.n} images, d={ds.d}, classes mapped to targets -1/+1")

base = Mlp([64, 10, 5, 1], activation("relu"), rng=substream(0, "init"))
lin = linearize(base, base.init_theta, ds.inputs, 1e-3, 500, DirectionSpec("gaussian", dim=base.num_params), substream(0, "tangent"))
k_bar = expected_nzk_linearized(lin, ds.inputs).values / ds.n
lam1 = float(np.linalg.eigvalsh(k_bar).max())
eta = 0.4 / ((base.num_params + 2) * lam1)
print(f"network: {base.num_params} parameters; top kernel eigenvalue {lam1:.1f}; shared-stable eta {eta:.2e}")

STEPS, SEEDS = 1200, 10
print(f"\nloss at step {STEPS} (mean over {SEEDS} seeds for the stochastic modes):")
for mode in ("zo_kernel", "fo", "zo_parametric"):
    if mode == "fo":
        cfg = TrainConfig(eta=eta, epsilon=1e-3, steps=STEPS, mode="fo", record_every=STEPS)
        loss = train(lin, ds, cfg).losses[-1]
    else:
        cfg = TrainConfig(
            eta=eta, epsilon=1e-3, steps=STEPS, mode=mode,
            direction_z=DirectionSpec("gaussian", dim=base.num_params),
            sample_mode=SampleMode.SHARED if mode == "zo_kernel" else SampleMode.INDEPENDENT,
            seed=0, record_every=STEPS,
        )
        loss = np.mean([train(lin, ds, cfg.with_seed(s)).losses[-1] for s in range(SEEDS)])
    print(f"  {mode:14s} {loss:.4f}")
