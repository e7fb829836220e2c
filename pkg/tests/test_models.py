"""Models, two-point tangents, and the structural identities."""

import numpy as np
import pytest

from nzk import (
    ConfigError,
    DirectionSpec,
    LinearModel,
    Mlp,
    Perturbation,
    ShapeMismatchError,
    TwoLayerLinear,
    UnsupportedError,
    activation,
    check_layer_decomposition,
    check_zo_homogeneous,
    finite_diff_scalar,
    linearize,
    substream,
    zo_tangent,
)
from nzk.models import estimate_tangent_features, layer_fd_terms

RNG = np.random.default_rng(20260810)


# ---------------------------------------------------------------------------
# evaluation


def test_linear_eval_matches_teacher_values():
    model = LinearModel(np.array([7.0, 2.0]))
    assert model.eval(np.array([1.0, 0.0])) == 7.0
    assert model.eval(np.array([0.0, 1.0])) == 2.0
    assert LinearModel(np.zeros(3)).eval(np.array([4.0, -1.0, 9.0])) == 0.0


def test_linear_eval_batches_rows():
    model = LinearModel(np.array([1.0, -1.0]))
    out = model.eval(np.array([[2.0, 1.0], [0.5, 0.5]]))
    assert np.array_equal(out, np.array([1.0, 0.0]))


def test_two_layer_eval_hand_product():
    theta = np.concatenate([np.eye(2).ravel(), np.array([1.0, 1.0])])
    model = TwoLayerLinear(n=2, width=2, theta=theta)
    assert model.eval(np.array([3.0, 4.0])) == 7.0


def test_eval_rejects_dimension_mismatch():
    with pytest.raises(ShapeMismatchError):
        LinearModel(np.array([1.0, 2.0])).eval(np.array([1.0, 2.0, 3.0]))


def test_mlp_parameter_count_includes_biases():
    mlp = Mlp([64, 10, 5, 1], activation("relu"), rng=substream(0, "init"))
    assert mlp.num_params == 64 * 10 + 10 + 10 * 5 + 5 + 5 * 1 + 1 == 711
    assert Mlp([2, 17, 1], activation("relu"), bias=False, rng=substream(0, "init")).num_params == 51


def test_mlp_flatten_round_trip_is_bit_exact():
    mlp = Mlp([3, 4, 2, 1], activation("relu"), rng=substream(1, "init"))
    theta = mlp.init_theta
    assert np.array_equal(Mlp.flatten(mlp.unflatten(theta)), theta)


def test_mlp_gradient_matches_central_differences():
    mlp = Mlp([3, 4, 1], activation("tanh"), rng=substream(2, "init"))
    x = np.array([0.3, -0.7, 1.1])
    theta = mlp.init_theta
    grad = mlp.param_gradient(theta, x)
    h = 1e-6
    for idx in RNG.choice(mlp.num_params, size=8, replace=False):
        e = np.zeros(mlp.num_params)
        e[idx] = 1.0
        numeric = (mlp.eval(x, theta + h * e) - mlp.eval(x, theta - h * e)) / (2 * h)
        assert grad[idx] == pytest.approx(numeric, rel=1e-5, abs=1e-8)


# ---------------------------------------------------------------------------
# two-point tangents


def test_linear_fd_scalar_is_direction_input_product():
    # independent of theta and epsilon, up to cancellation noise
    for _ in range(50):
        d = int(RNG.integers(2, 8))
        theta = RNG.normal(0, 3, d)
        zeta = RNG.normal(0, 2, d)
        x = RNG.normal(0, 1, d)
        eps = float(RNG.uniform(1e-4, 1e-1))
        fd = finite_diff_scalar(LinearModel(theta), theta, x, eps, zeta)
        assert abs(fd - zeta @ x) < 1e-10 * max(1.0, abs(zeta @ x))


def test_zo_tangent_zero_direction_gives_zero_vector():
    model = LinearModel(np.array([1.0, 2.0]))
    tangent = zo_tangent(model, model.init_theta, np.array([0.3, 0.4]), Perturbation(np.zeros(2)))
    assert np.array_equal(tangent, np.zeros(2))


def test_zo_tangent_scales_direction_by_fd():
    model = LinearModel(np.array([1.0, 2.0]))
    zeta = np.array([2.0, -1.0])
    x = np.array([0.5, 0.5])
    tangent = zo_tangent(model, model.init_theta, x, Perturbation(zeta, 1e-3))
    assert np.allclose(tangent, (zeta @ x) * zeta, atol=1e-12)


def test_perturbation_requires_positive_epsilon():
    with pytest.raises(ConfigError):
        Perturbation(np.ones(2), 0.0)


def test_relu_fd_scalar_stable_across_epsilon_away_from_kinks():
    mlp = Mlp([2, 3, 1], activation("relu"), rng=substream(3, "init"))
    x = np.array([0.9, -0.4])
    # verify no preactivation sits near zero so both probes stay one-sided
    w, b = mlp.unflatten(mlp.init_theta)[0]
    assert np.min(np.abs(x @ w + b)) > 0.05
    z = substream(4, "z").standard_normal(mlp.num_params)
    coarse = finite_diff_scalar(mlp, mlp.init_theta, x, 1e-3, z)
    fine = finite_diff_scalar(mlp, mlp.init_theta, x, 1e-6, z)
    assert abs(coarse - fine) < 1e-9


# ---------------------------------------------------------------------------
# linearization


def _linear_as_mlp(weights):
    mlp = Mlp([len(weights), 1], activation("linear"), bias=False, theta=np.asarray(weights))
    return mlp


def test_linearized_tangent_converges_to_input_for_linear_base():
    base = _linear_as_mlp([0.5, -1.5])
    inputs = np.array([[1.0, 0.0], [0.6, 0.8]])
    spec = DirectionSpec("gaussian", dim=2)
    m_u = 10**4
    lin = linearize(base, base.init_theta, inputs, 1e-3, m_u, spec, substream(5, "tangent"))
    for i, x in enumerate(inputs):
        # Var of one sample of entry j is |x|^2 + x_j^2 for unit gaussians
        se = np.sqrt((x @ x + x**2) / m_u)
        assert np.all(np.abs(lin.tangents[i] - x) < 5 * se)


def test_linearized_model_is_exact_at_linearization_point():
    base = Mlp([2, 5, 1], activation("relu"), rng=substream(6, "init"))
    inputs = substream(7, "data").standard_normal((4, 2))
    lin = linearize(
        base, base.init_theta, inputs, 1e-3, 50, DirectionSpec("gaussian", dim=base.num_params), substream(8, "tangent")
    )
    assert np.array_equal(lin.eval(inputs), np.atleast_1d(base.eval(inputs)))
    assert lin.eval(inputs[2]) == base.eval(inputs[2])


def test_single_axis_direction_reduces_to_coordinate_difference():
    base = Mlp([2, 3, 1], activation("relu"), rng=substream(9, "init"))
    x = np.array([[0.4, 1.2]])
    e1 = np.zeros(base.num_params)
    e1[0] = 1.0
    eps = 1e-3
    feats = estimate_tangent_features(base, base.init_theta, x, eps, e1[None, :])
    fd = (base.eval(x[0], base.init_theta + eps * e1) - base.eval(x[0], base.init_theta - eps * e1)) / (2 * eps)
    expected = np.zeros(base.num_params)
    expected[0] = fd
    assert np.array_equal(feats[0], expected)


def test_linearize_validates_its_inputs():
    base = _linear_as_mlp([1.0, 1.0])
    inputs = np.array([[1.0, 0.0]])
    with pytest.raises(ConfigError):
        linearize(base, base.init_theta, inputs, 1e-3, 0, DirectionSpec("gaussian", dim=2), substream(0, "tangent"))
    with pytest.raises(ConfigError):
        linearize(base, base.init_theta, inputs, 1e-3, 5, DirectionSpec("gaussian", dim=2, scale=2.0), substream(0, "tangent"))
    with pytest.raises(ConfigError):
        linearize(base, base.init_theta, inputs, 1e-3, 5, DirectionSpec("gaussian", dim=2, mean=1.0), substream(0, "tangent"))


def test_linearized_rejects_uncached_inputs():
    base = _linear_as_mlp([1.0, 1.0])
    lin = linearize(
        base, base.init_theta, np.array([[1.0, 0.0]]), 1e-3, 5, DirectionSpec("gaussian", dim=2), substream(0, "tangent")
    )
    with pytest.raises(UnsupportedError):
        lin.eval(np.array([0.0, 1.0]))


# ---------------------------------------------------------------------------
# layer decomposition


def test_layer_decomposition_on_random_instances():
    for k in range(100):
        rng = substream(100 + k, "init")
        n = int(rng.integers(2, 5))
        width = int(rng.integers(1, 5))
        model = TwoLayerLinear(n=n, width=width, rng=rng)
        x = rng.standard_normal(n)
        z = rng.standard_normal(model.num_params)
        full, p1, p2 = layer_fd_terms(model, model.init_theta, x, 1e-3, z)
        scale = max(abs(full), abs(p1) + abs(p2), 1.0)
        assert abs(full - (p1 + p2)) <= 1e-10 * scale


def test_layer_decomposition_zero_direction_and_degenerate_width():
    model = TwoLayerLinear(n=2, width=3, rng=substream(42, "init"))
    assert check_layer_decomposition(model, np.array([0.3, -0.8]), 1e-3, np.zeros(model.num_params)) == 0.0
    narrow = TwoLayerLinear(n=3, width=1, rng=substream(43, "init"))
    z = substream(44, "z").standard_normal(narrow.num_params)
    assert check_layer_decomposition(narrow, np.array([1.0, 0.5, -0.5]), 1e-3, z) <= 1e-12


# ---------------------------------------------------------------------------
# zeroth-order homogeneity


def test_homogeneity_known_points():
    assert check_zo_homogeneous(activation("relu"), 0.5, 1e-3)
    assert check_zo_homogeneous(activation("relu"), 0.0, 1e-3)
    assert check_zo_homogeneous(activation("relu"), 0.0, 0.1)
    assert not check_zo_homogeneous(activation("tanh"), 2.0, 1e-3)


@pytest.mark.parametrize(
    "act",
    [activation("relu"), activation("leaky_relu", 0.1), activation("leaky_relu", 0.5), activation("linear", 2.0)],
)
def test_homogeneity_holds_away_from_the_kink(act):
    eps = 1e-3
    rng = np.random.default_rng(55)
    for _ in range(100):
        x = float(rng.uniform(1.5 * eps, 3.0) * rng.choice([-1.0, 1.0]))
        assert check_zo_homogeneous(act, x, eps)
