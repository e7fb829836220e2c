"""Per-sample and expected kernels against their closed forms."""

import numpy as np
import pytest

from nzk import (
    ConfigError,
    DirectionSpec,
    LinearModel,
    SampleMode,
    UnsupportedError,
    constancy_report,
    expected_nzk_closed,
    expected_nzk_identical,
    expected_nzk_linearized,
    expected_nzk_mc,
    kernel_scale,
    linearize,
    ntk_linear,
    nzk_entry,
    nzk_sample_matrix,
    substream,
)
from nzk.kernels import read_kernel_csv, trace_commutativity_gap, write_kernel_csv
from nzk.models import Mlp, activation


def circle_points(n, seed=123):
    rng = substream(seed, "data")
    angles = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([np.cos(angles), np.sin(angles)])


def sphere_points(n, d, seed=123):
    x = substream(seed, "data").standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# single samples


def test_entry_factorizes_for_linear_models():
    rng = substream(1, "mc")
    for _ in range(10):
        theta = rng.standard_normal(3)
        zeta, z = rng.standard_normal(3), rng.standard_normal(3)
        xi, xj = rng.standard_normal(3), rng.standard_normal(3)
        model = LinearModel(theta)
        entry = nzk_entry(model, theta, 1e-3, zeta, z, xi, xj)
        exact = (zeta @ xi) * (z @ xj) * (zeta @ z)
        assert entry == pytest.approx(exact, rel=1e-9, abs=1e-12)


def test_entry_special_cases():
    model = LinearModel(np.array([5.0, -3.0]))
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert nzk_entry(model, model.init_theta, 1e-3, e1, e2, e1, e1) == pytest.approx(0.0, abs=1e-12)
    assert nzk_entry(model, model.init_theta, 1e-3, e1, e1, e1, e1) == pytest.approx(1.0, rel=1e-12)


def test_entry_is_parameter_free_for_linear_models():
    rng = substream(2, "mc")
    zeta, z = rng.standard_normal(2), rng.standard_normal(2)
    xi, xj = rng.standard_normal(2), rng.standard_normal(2)
    values = [
        nzk_entry(LinearModel(theta), theta, 1e-3, zeta, z, xi, xj)
        for theta in rng.standard_normal((10, 2))
    ]
    assert np.max(np.abs(np.diff(values))) < 1e-12 * max(1.0, abs(values[0]))


def test_sample_matrix_is_rank_one():
    x = circle_points(6)
    rng = substream(3, "mc")
    theta = rng.standard_normal(2)
    km = nzk_sample_matrix(LinearModel(theta), theta, 1e-3, rng.standard_normal(2), rng.standard_normal(2), x)
    assert km.kind == "nzk_sample"
    s = np.linalg.svd(km.values, compute_uv=False)
    assert s[1] < 1e-12 * s[0]


# ---------------------------------------------------------------------------
# Monte Carlo expectations


def test_mc_independent_directions_recover_the_gram_matrix():
    x = circle_points(8)
    model = LinearModel(np.array([1.0, -2.0]))
    spec = DirectionSpec("gaussian", dim=2)
    km, se = expected_nzk_mc(
        model, model.init_theta, 1e-3, spec, spec, SampleMode.INDEPENDENT, 10**4, x, substream(4, "mc")
    )
    gram = x @ x.T
    assert np.all(np.abs(km.values - gram) < 5 * se)
    assert km.meta["max_asymmetry"] > 0  # finite-sample asymmetry is recorded


def test_mc_shared_direction_scales_the_gram_matrix():
    x = circle_points(8)
    model = LinearModel(np.array([1.0, -2.0]))
    spec = DirectionSpec("gaussian", dim=2)
    km, se = expected_nzk_mc(
        model, model.init_theta, 1e-3, spec, spec, SampleMode.SHARED, 10**4, x, substream(5, "mc")
    )
    assert np.all(np.abs(km.values - 4.0 * (x @ x.T)) < 5 * se)
    assert km.meta["max_asymmetry"] == 0.0  # one vector in both slots


def test_mc_two_samples_average_exactly():
    x = circle_points(3)
    model = LinearModel(np.array([0.3, 0.9]))
    spec = DirectionSpec("gaussian", dim=2)
    km, _ = expected_nzk_mc(
        model, model.init_theta, 1e-3, spec, spec, SampleMode.SHARED, 2, x, substream(6, "mc")
    )
    rng = substream(6, "mc")
    k1 = nzk_sample_matrix(model, model.init_theta, 1e-3, z1 := rng.standard_normal(2), z1, x).values
    k2 = nzk_sample_matrix(model, model.init_theta, 1e-3, z2 := rng.standard_normal(2), z2, x).values
    assert np.allclose(km.values, (k1 + k2) / 2, rtol=1e-15)


def test_mc_requires_two_samples():
    x = circle_points(2)
    model = LinearModel(np.zeros(2))
    spec = DirectionSpec("gaussian", dim=2)
    with pytest.raises(ConfigError):
        expected_nzk_mc(model, model.init_theta, 1e-3, spec, spec, SampleMode.SHARED, 1, x, substream(0, "mc"))


# ---------------------------------------------------------------------------
# closed forms


def test_closed_form_at_unit_variance_is_the_gram_matrix_bitwise():
    x = circle_points(8)
    spec = DirectionSpec("gaussian", dim=2)
    km = expected_nzk_closed(spec, spec, x)
    assert np.array_equal(km.values, x @ x.T)
    assert np.array_equal(km.values, ntk_linear(x).values)


def test_closed_form_mean_term_hand_value():
    # E[<zeta,x><z,x><zeta,z>] with zeta ~ unit, z shifted by 1: checked
    # against a 1e6-draw Monte Carlo estimate (1.993 +- 0.005)
    x = np.array([[1.0, 0.0]])
    km = expected_nzk_closed(
        DirectionSpec("gaussian", dim=2),
        DirectionSpec("gaussian", dim=2, mean=1.0),
        x,
    )
    assert km.values[0, 0] == pytest.approx(2.0, abs=1e-14)


def test_closed_form_mean_terms_vanish_on_centered_rows():
    x = np.array([[1.0, -1.0], [2.0, -2.0], [-0.5, 0.5]])
    spec_zeta = DirectionSpec("gaussian", dim=2, mean=0.7, scale=1.3)
    spec_z = DirectionSpec("gaussian", dim=2, mean=-0.4, scale=0.8)
    km = expected_nzk_closed(spec_zeta, spec_z, x)
    plain = (1.3**2 * 0.8**2) * (x @ x.T)
    assert np.allclose(km.values, plain, rtol=1e-14)


def test_closed_form_rejects_non_gaussian_specs():
    with pytest.raises(UnsupportedError):
        expected_nzk_closed(
            DirectionSpec("laplace", dim=2), DirectionSpec("gaussian", dim=2), circle_points(2)
        )


@pytest.mark.parametrize("mean", [0.0, 1.0])
@pytest.mark.parametrize("sigma", [0.5, 1.0, 1.5])
@pytest.mark.parametrize("d", [2, 10])
def test_mc_matches_closed_form_within_five_standard_errors(mean, sigma, d):
    x = sphere_points(5, d, seed=d)
    spec_zeta = DirectionSpec("gaussian", dim=d, mean=mean, scale=sigma)
    spec_z = DirectionSpec("gaussian", dim=d, mean=mean, scale=sigma)
    model = LinearModel(np.zeros(d))
    km, se = expected_nzk_mc(
        model,
        model.init_theta,
        1e-3,
        spec_zeta,
        spec_z,
        SampleMode.INDEPENDENT,
        10**4,
        x,
        substream(int(mean * 10 + sigma * 100 + d), "mc"),
    )
    closed = expected_nzk_closed(spec_zeta, spec_z, x)
    assert np.max(np.abs(km.values - closed.values)) <= 5 * se.max()


def test_identical_direction_closed_form_scales():
    x = circle_points(5)
    km = expected_nzk_identical(DirectionSpec("gaussian", dim=2), x)
    assert np.array_equal(km.values, 4.0 * (x @ x.T))
    km50 = expected_nzk_identical(DirectionSpec("gaussian", dim=50), sphere_points(4, 50))
    assert np.allclose(km50.values / (sphere_points(4, 50) @ sphere_points(4, 50).T), 52.0, rtol=1e-13)
    # laplace factor 28 b^4 at d=2, verified by direct Monte Carlo
    kml = expected_nzk_identical(DirectionSpec("laplace", dim=2, scale=1.0), x)
    assert np.allclose(kml.values, 28.0 * (x @ x.T), rtol=1e-13)


def test_identical_rejects_nonzero_mean():
    with pytest.raises(UnsupportedError):
        expected_nzk_identical(DirectionSpec("gaussian", dim=2, mean=0.5), circle_points(2))


@pytest.mark.parametrize("sigma", [0.5, 1.0, 1.5])
@pytest.mark.parametrize("d", [2, 10, 30, 50])
def test_identical_equals_scaled_ntk_exactly(sigma, d):
    x = sphere_points(6, d, seed=d + 1)
    spec = DirectionSpec("gaussian", dim=d, scale=sigma)
    km = expected_nzk_identical(spec, x)
    assert np.array_equal(km.values, kernel_scale(spec, d) * ntk_linear(x).values)


def test_ntk_examples():
    eye = np.eye(3)
    assert np.array_equal(ntk_linear(eye).values, np.eye(3))
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0 / np.sqrt(2), 1.0 / np.sqrt(2)]])
    gram = ntk_linear(x).values
    assert gram[0, 1] == 0.0
    assert gram[0, 2] == pytest.approx(1 / np.sqrt(2), rel=1e-15)
    assert gram[1, 2] == pytest.approx(1 / np.sqrt(2), rel=1e-15)
    assert np.array_equal(ntk_linear(np.array([[0.6, 0.8]])).values, np.array([[1.0]]))


# ---------------------------------------------------------------------------
# linearized kernels


def test_linearized_kernel_of_linear_base_approaches_the_gram_matrix():
    x = circle_points(5)
    base = Mlp([2, 1], activation("linear"), bias=False, theta=np.array([0.4, 1.1]))
    m_u = 10**4
    lin = linearize(base, base.init_theta, x, 1e-3, m_u, DirectionSpec("gaussian", dim=2), substream(9, "tangent"))
    km = expected_nzk_linearized(lin, x)
    assert km.kind == "nzk_linearized"
    # tangent rows deviate from x_i by O(sqrt(d/m_u)); the Gram error follows
    assert np.max(np.abs(km.values - x @ x.T)) < 10 * np.sqrt(2.0 / m_u) * 2
    assert np.allclose(km.values, km.values.T)


def test_linearized_kernel_edge_shapes():
    base = Mlp([2, 3, 1], activation("relu"), rng=substream(10, "init"))
    x_single = np.array([[0.3, -0.8]])
    lin = linearize(base, base.init_theta, x_single, 1e-3, 20, DirectionSpec("gaussian", dim=base.num_params), substream(11, "tangent"))
    km = expected_nzk_linearized(lin, x_single)
    assert km.values.shape == (1, 1) and km.values[0, 0] >= 0
    x_dup = np.array([[0.5, 0.5], [0.5, 0.5]])
    lin2 = linearize(base, base.init_theta, x_dup, 1e-3, 20, DirectionSpec("gaussian", dim=base.num_params), substream(12, "tangent"))
    km2 = expected_nzk_linearized(lin2, x_dup)
    assert np.all(km2.values == km2.values[0, 0])


# ---------------------------------------------------------------------------
# structure: constancy, PSD, trace commutativity, IO


def test_constancy_zero_for_linear_sample_kernel_and_linearized():
    x = circle_points(4)
    rng = substream(13, "mc")
    zeta, z = rng.standard_normal(2), rng.standard_normal(2)

    def sample_kernel(model, theta, inputs):
        return nzk_sample_matrix(model, theta, 1e-3, zeta, z, inputs)

    thetas = rng.standard_normal((6, 2))
    model = LinearModel(thetas[0])
    assert constancy_report(model, thetas, sample_kernel, x) < 1e-12

    base = Mlp([2, 4, 1], activation("relu"), rng=substream(14, "init"))
    lin = linearize(base, base.init_theta, x, 1e-3, 30, DirectionSpec("gaussian", dim=base.num_params), substream(15, "tangent"))
    assert (
        constancy_report(lin, substream(16, "init").standard_normal((3, base.num_params)),
                         lambda m, th, xs: expected_nzk_linearized(m, xs), x)
        == 0.0
    )


def test_constancy_of_mc_kernel_on_raw_mlp_is_reported_not_asserted():
    # the expected kernel of a raw (non-linearized) network does drift with
    # the parameters; the report quantifies it without passing judgment
    x = circle_points(3)
    base = Mlp([2, 3, 1], activation("relu"), rng=substream(60, "init"))
    spec = DirectionSpec("gaussian", dim=base.num_params)

    def mc_kernel(model, theta, inputs):
        km, _ = expected_nzk_mc(
            model, theta, 1e-3, spec, spec, SampleMode.SHARED, 200, inputs, substream(61, "mc")
        )
        return km

    thetas = np.stack([base.init_theta, base.init_theta * 1.5])
    drift = constancy_report(base, thetas, mc_kernel, x)
    assert np.isfinite(drift) and drift > 0


def test_constancy_needs_two_snapshots():
    with pytest.raises(ConfigError):
        constancy_report(LinearModel(np.zeros(2)), np.zeros((1, 2)), lambda m, t, x: np.eye(2), circle_points(2))


def test_expected_kernels_are_psd():
    x = circle_points(8)
    mats = [
        expected_nzk_closed(DirectionSpec("gaussian", dim=2, mean=1.0), DirectionSpec("gaussian", dim=2), x).values,
        expected_nzk_identical(DirectionSpec("laplace", dim=2, scale=0.6), x).values,
        ntk_linear(x).values,
    ]
    model = LinearModel(np.zeros(2))
    spec = DirectionSpec("gaussian", dim=2)
    km, _ = expected_nzk_mc(model, model.init_theta, 1e-3, spec, spec, SampleMode.SHARED, 500, x, substream(17, "mc"))
    mats.append(km.values)  # shared-mode samples are PSD term by term
    for mat in mats:
        eigs = np.linalg.eigvalsh(mat)
        assert eigs.min() >= -1e-8 * np.trace(mat)


def test_independent_mc_noise_bounded_by_standard_errors():
    # finite-sample noise in independent mode can push the smallest
    # eigenvalue slightly negative; it stays within the SE envelope
    x = circle_points(8)
    model = LinearModel(np.zeros(2))
    spec = DirectionSpec("gaussian", dim=2)
    km, se = expected_nzk_mc(model, model.init_theta, 1e-3, spec, spec, SampleMode.INDEPENDENT, 2000, x, substream(18, "mc"))
    eigs = np.linalg.eigvalsh(km.values)
    assert eigs.min() >= -5 * se.max() * np.sqrt(len(x))


def test_trace_commutes_with_averaging():
    mats = substream(19, "mc").standard_normal((500, 5, 5))
    assert trace_commutativity_gap(mats) <= 1e-12


def test_kernel_csv_round_trip(tmp_path):
    x = circle_points(4)
    km = expected_nzk_identical(DirectionSpec("gaussian", dim=2, scale=1.5), x)
    path = tmp_path / "kernel.csv"
    meta = tmp_path / "kernel.meta"
    write_kernel_csv(path, km, meta)
    back = read_kernel_csv(path)
    assert np.array_equal(back, km.values)
    text = meta.read_text()
    assert "kind = nzk_expected_closed" in text and "scale" in text
    again = tmp_path / "again.csv"
    write_kernel_csv(again, km)
    assert again.read_text() == path.read_text()
