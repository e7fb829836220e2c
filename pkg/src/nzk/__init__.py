"""Zeroth-order training dynamics through the induced kernel.

Library layout:

  directions   direction distributions, exact moments, kernel scale
  models       scalar models, two-point tangents, structural checks
  estimators   function-value-only gradient estimators
  training     the training loop and recorded trajectories
  kernels      per-sample and expected kernels, closed forms
  dynamics     closed-form trajectories, spectra, ensemble comparison
  data         teacher-student generation, CSV, IDX images
  cli          the `nzk` experiment runner
"""

from .data import Dataset, TeacherSpec, gen_teacher_student, load_csv_dataset, load_mnist_idx
from .directions import (
    DirectionSpec,
    Moments,
    SampleMode,
    exact_moments,
    kernel_scale,
    match_scale,
    sample,
)
from .dynamics import (
    ClosedFormTrajectory,
    SpectralDecomposition,
    closed_form_trajectory,
    compare,
    normalize_kernel,
    run_seed_ensemble,
    spectral,
)
from .errors import (
    ConfigError,
    ContractError,
    DataFormatError,
    DivergenceError,
    MomentError,
    NzkError,
    ShapeMismatchError,
    UnsupportedError,
)
from .estimators import (
    LossSpec,
    contract_split,
    fo_gradient,
    magnitude_direction_split,
    zo_gradient,
    zo_gradient_batch,
)
from .kernels import (
    KernelMatrix,
    constancy_report,
    expected_nzk_closed,
    expected_nzk_identical,
    expected_nzk_linearized,
    expected_nzk_mc,
    nzk_entry,
    nzk_sample_matrix,
    ntk_linear,
)
from .models import (
    Activation,
    LinearModel,
    LinearizedModel,
    Mlp,
    Perturbation,
    TwoLayerLinear,
    activation,
    check_layer_decomposition,
    check_zo_homogeneous,
    finite_diff_scalar,
    linearize,
    zo_tangent,
)
from .rng import substream
from .training import TrainConfig, Trajectory, train

__version__ = "0.1.0"
