import numpy as np
import pytest

import maco.tensor as T
from maco.errors import OracleError
from maco.gradcheck import (
    DEFAULT_TOLERANCE,
    check_parameters,
    finite_diff_check,
    full_objective_check,
    op_probes,
    run_gradient_suite,
)
from maco.tensor import Tensor


def test_sum_of_squares_gradient():
    x = Tensor([1.0, 2.0])
    err = finite_diff_check(lambda t: T.tsum(T.mul(t, t)), x)
    assert err < 1e-8  # O(h^2) for a quadratic
    xt = Tensor(x.data, requires_grad=True)
    T.tsum(T.mul(xt, xt)).backward()
    assert np.allclose(xt.grad, [2.0, 4.0], atol=1e-15)


def test_softmax_cross_entropy_gradient():
    rng = np.random.default_rng(3)
    logits = Tensor(rng.standard_normal((5, 7)))
    onehot = np.zeros((5, 7))
    onehot[np.arange(5), rng.integers(0, 7, 5)] = 1.0
    hot = Tensor(onehot)

    def f(t):
        return T.mul(T.tmean(T.tsum(T.mul(T.log_softmax(t), hot), axis=-1)), -1.0)

    assert finite_diff_check(f, logits) < 1e-5


def test_nonscalar_function_rejected():
    with pytest.raises(OracleError):
        finite_diff_check(lambda t: T.mul(t, 2.0), Tensor(np.ones(3)))


def test_nonfinite_function_rejected():
    with pytest.raises(OracleError):
        finite_diff_check(lambda t: T.log(T.tsum(t)), Tensor(np.array([-1.0, 0.5])))


@pytest.mark.parametrize("name", sorted(op_probes()))
def test_registered_op_passes_finite_difference(name):
    f, x = op_probes()[name]()
    assert finite_diff_check(f, x) < DEFAULT_TOLERANCE


def test_suite_runs_every_registered_op():
    errs = run_gradient_suite()
    assert len(errs) == len(op_probes())
    assert max(errs.values()) < DEFAULT_TOLERANCE


def test_full_objective_on_two_pair_toy_model():
    assert full_objective_check() < DEFAULT_TOLERANCE


def test_check_parameters_reports_per_name():
    w = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    b = Tensor(np.array(0.5), requires_grad=True)

    def loss():
        return T.add(T.tsum(T.mul(w, w)), T.mul(b, b))

    errs = check_parameters(loss, [("w", w), ("b", b)])
    assert set(errs) == {"w", "b"}
    assert max(errs.values()) < 1e-7
