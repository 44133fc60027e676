import numpy as np
import pytest

from infogate.diffcore import ops
from infogate.diffcore.gradcheck import (composite_case, finite_diff_check, primitive_cases, relative_error,
                                         run_gradcheck_suite)
from infogate.diffcore.tensor import Tensor, precision, record
from infogate.errors import GradientCheckError


def test_relative_error_is_relative_for_small_values():
    assert relative_error(1e-9, 2e-9) == pytest.approx(0.5)
    assert relative_error(10.0, 11.0) == pytest.approx(1 / 11)
    assert relative_error(0.0, 0.0) == 0.0


def test_relative_error_ignores_noise_below_atol():
    assert relative_error(0.0, 5e-9, atol=1e-8) == 0.0
    assert relative_error(1.0, 1.0 + 3e-8, atol=1e-8) == pytest.approx(2e-8)


def _inflated(x, factor):
    return record(x.data.copy(), (x,), lambda g: (g * factor,), "inflated")


@pytest.mark.parametrize("magnitude", [1e-6, 1e-3, 1.0, 50.0])
def test_ten_percent_gradient_error_is_caught_at_any_scale(magnitude):
    with precision(np.float64):
        x = Tensor(np.array([0.4, -0.7, 1.3]), requires_grad=True)
    report = finite_diff_check(lambda: ops.sum(ops.scale(_inflated(x, 1.1), magnitude)), [x])
    assert not report.passed
    assert report.max_rel_error > 0.05


def test_inflated_sigmoid_backward_is_caught_on_small_weights():
    def sigmoid_off_by_ten_percent(x):
        s = 1.0 / (1.0 + np.exp(-x.data))
        return record(s, (x,), lambda g: (1.1 * g * s * (1.0 - s),), "sigmoid")

    rng = np.random.default_rng(4)
    with precision(np.float64):
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        weights = Tensor(1e-4 * rng.standard_normal((3, 4)))
    good = finite_diff_check(lambda: ops.sum(ops.mul(ops.sigmoid(x), weights)), [x])
    bad = finite_diff_check(lambda: ops.sum(ops.mul(sigmoid_off_by_ten_percent(x), weights)), [x])
    assert good.passed
    assert not bad.passed


@pytest.mark.parametrize("name", sorted(primitive_cases(np.random.default_rng(0))))
def test_every_primitive_passes(name):
    rng = np.random.default_rng(7)
    with precision(np.float64):
        fn, params = primitive_cases(rng)[name]
    report = finite_diff_check(fn, params)
    assert report.passed, f"{name}: {report.per_param}"


@pytest.mark.parametrize("seed", range(5))
def test_random_composites_pass(seed):
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        fn, params = composite_case(rng, max_depth=8)
    assert finite_diff_check(fn, params).passed


def test_wrong_backward_is_caught():
    def doubled_wrongly(x):
        return record(2.0 * x.data, (x,), lambda g: (g,), "broken")

    with precision(np.float64):
        x = Tensor(np.array([0.3, -1.2]), requires_grad=True)
    report = finite_diff_check(lambda: ops.sum(doubled_wrongly(x)), [x])
    assert not report.passed
    assert report.max_rel_error == pytest.approx(0.5)


def test_nan_gradient_raises():
    with precision(np.float64):
        x = Tensor(np.array([1.0]), requires_grad=True)

    def nan_grad(t):
        return record(t.data.copy(), (t,), lambda g: (g * np.nan,), "nan")

    with pytest.raises(GradientCheckError):
        finite_diff_check(lambda: ops.sum(nan_grad(x)), [x])


def test_parameters_are_restored():
    with precision(np.float64):
        x = Tensor(np.array([0.5, 0.25]), requires_grad=True)
    before = x.data.copy()
    finite_diff_check(lambda: ops.sum(ops.sigmoid(x)), {"x": x})
    assert np.array_equal(x.data, before)
    assert x.grad is None


def test_float32_suite_uses_looser_tolerance():
    report = run_gradcheck_suite(seeds=2, max_depth=4, analytic_dtype=np.float32)
    assert report.tol == pytest.approx(1e-4)
    assert report.passed
    assert report.seeds == 2


def test_float64_suite():
    report = run_gradcheck_suite(seeds=3, max_depth=8)
    assert report.tol == pytest.approx(1e-6)
    assert set(report.primitives) >= {"conv2d", "group_norm", "convex_mix", "l2_normalize"}
    assert report.passed
