import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vicalib import allan
from vicalib.errors import EmptyRange, InsufficientData

TAU0 = 1.0 / 200.0


def brute_avar(x, n):
    """Cluster means and their successive differences, written out directly."""
    m = len(x)
    means = np.array([np.mean(x[k : k + n]) for k in range(m - n + 1)])
    d = [means[k + n] - means[k] for k in range(m - 2 * n + 1)]
    return np.sum(np.square(d)) / (2.0 * len(d))


@pytest.mark.parametrize("n", [1, 2, 7, 33])
def test_matches_brute_force(n):
    x = np.random.default_rng(n).standard_normal((300, 2)) + 5.0
    c = allan.allan_deviation(x, 0.01, [n])
    for a in range(2):
        np.testing.assert_allclose(c.dev[0, a] ** 2, brute_avar(x[:, a], n), rtol=1e-10)
    assert c.counts[0] == 300 - 2 * n + 1
    np.testing.assert_allclose(c.tau, [n * 0.01])


@given(hnp.arrays(np.float64, st.integers(10, 80), elements=st.floats(-1e3, 1e3)), st.floats(-1e3, 1e3))
def test_offset_invariant_and_non_negative(x, c):
    a = allan.allan_deviation(x, 1.0, [1, 2, 3])
    b = allan.allan_deviation(x + c, 1.0, [1, 2, 3])
    assert np.all(a.dev >= 0)
    np.testing.assert_allclose(a.dev, b.dev, atol=1e-6 * (1 + np.abs(x).max()))


@given(st.integers(20, 5000))
def test_default_cluster_sizes_valid(m):
    ns = allan.default_cluster_sizes(m)
    assert np.all(np.diff(ns) > 0)
    assert ns[0] == 1
    assert 2 * ns[-1] + 1 <= m


def test_curve_invariants():
    c = allan.allan_deviation(np.random.default_rng(0).standard_normal(5000), TAU0)
    assert np.all(np.diff(c.tau) > 0)
    assert np.all(c.dev >= 0)
    assert np.all(c.counts >= 1)


def test_white_noise_monte_carlo():
    # 10^7 samples, per-sample std 0.01 at 200 Hz: sigma_A(1 s) = 0.01 sqrt(1/200)
    x = np.random.default_rng(7).standard_normal(10_000_000) * 0.01
    c = allan.allan_deviation(x, TAU0, [200])
    np.testing.assert_allclose(c.dev[0, 0], 0.01 * np.sqrt(1 / 200), rtol=0.03)


@pytest.mark.parametrize("n", [1, 10, 100])
def test_random_walk_closed_form(n):
    s = 1e-3
    x = np.cumsum(np.random.default_rng(11).standard_normal(10_000_000) * s)
    c = allan.allan_deviation(x, TAU0, [n])
    np.testing.assert_allclose(c.dev[0, 0] ** 2, allan.allan_rw_closed_form(n, s), rtol=0.03)


def test_closed_form_against_exact_expectation():
    # exact E[avar] of a discrete random walk from the covariance of cluster differences
    s, n = 1.0, 4
    w = np.concatenate([np.arange(1, n + 1), np.arange(n - 1, -1, -1)]) / n
    # gbar_{k+n} - gbar_k = sum_j w_j e_{k+j} with triangular weights over 2n steps
    var = s**2 * np.sum(w[:-1] ** 2) / 2.0
    np.testing.assert_allclose(allan.allan_rw_closed_form(n, s), var, rtol=1e-12)


@pytest.mark.parametrize("c", [1e-4, 8.0e-5, 3.3])
def test_fit_white_exact_model(c):
    tau = np.logspace(-3, 2, 60)
    curve = allan.AllanCurve(tau, (c / np.sqrt(tau))[:, None], np.ones(60, dtype=int))
    assert abs(allan.fit_white_noise(curve) - c) <= 1e-12 * c


@pytest.mark.parametrize("c", [2.2e-6, 1e-3])
def test_fit_rw_exact_model(c):
    tau = np.logspace(2, 4, 40)
    curve = allan.AllanCurve(tau, (c * np.sqrt(tau / 3))[:, None], np.ones(40, dtype=int))
    assert abs(allan.fit_bias_rw(curve) - c) <= 1e-12 * c


def test_fit_white_monte_carlo():
    x = np.random.default_rng(3).standard_normal((1_000_000, 1)) * 0.01
    curve = allan.allan_deviation(x, TAU0)
    np.testing.assert_allclose(allan.fit_white_noise(curve, (0.02, 1.0)), 0.01 * np.sqrt(TAU0), rtol=0.05)
    np.testing.assert_allclose(allan.loglog_slope(curve, (0.02, 1.0)), -0.5, atol=0.05)


def test_axis_selection():
    tau = np.logspace(-2, 0, 20)
    dev = np.column_stack([1 / np.sqrt(tau), 2 / np.sqrt(tau), 4 / np.sqrt(tau)])
    curve = allan.AllanCurve(tau, dev, np.ones(20, dtype=int))
    np.testing.assert_allclose(allan.fit_white_noise(curve, axes=[1, 2]), 3.0, rtol=1e-12)


def test_empty_fit_range():
    curve = allan.AllanCurve(np.array([0.1, 1.0]), np.ones((2, 1)), np.ones(2, dtype=int))
    with pytest.raises(EmptyRange):
        allan.fit_bias_rw(curve, (1000, 6000))


def test_insufficient_data():
    with pytest.raises(InsufficientData):
        allan.allan_deviation(np.zeros(10), 1.0, [5])


def test_write_curve_header(tmp_path):
    curve = allan.allan_deviation(np.random.default_rng(0).standard_normal((100, 3)), 0.01, [1, 2])
    allan.write_curve(curve, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "#tau_s,dev_x,dev_y,dev_z,dev_mean"
    row = np.array(lines[1].split(","), dtype=float)
    np.testing.assert_array_equal(row[1:4], curve.dev[0])
    assert row[4] == pytest.approx(curve.dev[0].mean())


def test_identify_noise_combined():
    rng = np.random.default_rng(5)
    n = 2_000_000
    sw, sb = 1e-3, 1e-3
    x = rng.standard_normal(n) * sw / np.sqrt(TAU0) + np.cumsum(rng.standard_normal(n) * sb * np.sqrt(TAU0))
    ns = allan.default_cluster_sizes(n, per_decade=10)
    _, p = allan.identify_noise(x, TAU0, (0.02, 1.0), (20.0, 200.0), cluster_sizes=ns)
    np.testing.assert_allclose(p.sigma_w, sw, rtol=0.05)
    np.testing.assert_allclose(p.sigma_b, sb, rtol=0.1)


@pytest.mark.parametrize("n,expected", [(1, 0.5), (3, 19.0 / 18.0)])
def test_closed_form_values(n, expected):
    np.testing.assert_allclose(allan.allan_rw_closed_form(n, 1.0), expected, rtol=1e-15)


def test_closed_form_leading_term():
    exact = allan.allan_rw_closed_form(1000, 1.0)
    np.testing.assert_allclose(exact, 333.3335, rtol=1e-7)
    assert abs(1000 / 3 - exact) / exact < 2e-6


def test_constant_series_is_zero():
    c = allan.allan_deviation(np.full((500, 3), 7.25), TAU0, [1, 5, 50])
    np.testing.assert_allclose(c.dev, 0.0, atol=1e-12)


def test_white_noise_slope():
    x = np.random.default_rng(12).standard_normal((1_000_000, 1))
    curve = allan.allan_deviation(x, TAU0)
    np.testing.assert_allclose(allan.loglog_slope(curve, (10 * TAU0, 1.0)), -0.5, atol=0.05)


def test_fit_rw_long_range_monte_carlo():
    # one-second samples so that 2e6 of them cover clusters up to 6000 s many times over
    sb = 2.2e-6
    x = np.cumsum(np.random.default_rng(13).standard_normal((2_000_000, 3)) * sb, axis=0)
    curve = allan.allan_deviation(x, 1.0)
    np.testing.assert_allclose(allan.fit_bias_rw(curve, (1000.0, 6000.0)), sb, rtol=0.1)
    np.testing.assert_allclose(allan.loglog_slope(curve, (1000.0, 6000.0)), 0.5, atol=0.05)
