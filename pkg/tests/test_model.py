import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hybrid_sdde.exceptions import InvalidInputError
from hybrid_sdde.markov import Generator
from hybrid_sdde.model import (BUILTIN_MODELS, ConstantDelay, ConstantHistory, CosineDelay,
                               HybridSddeModel, PowerLaw, TruncationPolicy, example_F,
                               example_convergence_model, example_policy,
                               example_stability_model, get_builtin, pi_delta,
                               truncated_coefficients, truncated_parts, truncation_radius,
                               validate_policy, zero_diffusion, zero_drift)
from hybrid_sdde.rng import make_stream


def quintic_F(x, y, i):
    return -x ** 5


def square_G(x, y, i):
    return (x ** 2)[..., None]


def quintic_model():
    # F, G dominated by mu(w) = w^5 for w >= 1
    return HybridSddeModel(
        state_dim=1, noise_dim=1, n_regimes=1, F1=zero_drift, G1=zero_diffusion,
        F=quintic_F, G=square_G, generator=Generator(np.zeros((1, 1))),
        delay=ConstantDelay(0.0), tau=0.0, delay_derivative_bound=0.0,
        history=ConstantHistory((1.0,)))


def test_power_law_inverse():
    mu = PowerLaw(5.0, 2.0)
    w = np.logspace(-3, 3, 50)
    np.testing.assert_allclose(mu.inverse()(mu(w)), w, rtol=1e-13)


def test_example_radius():
    policy = example_policy()
    # (1e-4)^(-1/50)
    assert truncation_radius(policy, 1e-4) == pytest.approx(1.202264434617413, rel=1e-14)
    assert truncation_radius(policy, 1.0) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        truncation_radius(policy, 1.5)


def test_pi_delta_basic():
    np.testing.assert_array_equal(pi_delta(np.array([0.3, -0.4]), 1.0), [0.3, -0.4])
    np.testing.assert_array_equal(pi_delta(np.zeros(3), 1.0), np.zeros(3))
    np.testing.assert_allclose(pi_delta(np.array([3.0, 4.0]), 1.0), [0.6, 0.8], rtol=1e-15)
    rows = pi_delta(np.array([[3.0, 4.0], [0.1, 0.0]]), 2.0)
    np.testing.assert_allclose(rows, [[1.2, 1.6], [0.1, 0.0]], rtol=1e-15)
    with pytest.raises(InvalidInputError):
        pi_delta(np.ones(2), 0.0)


vectors = arrays(np.float64, st.integers(1, 4), elements=st.floats(-1e6, 1e6))


@settings(max_examples=200, deadline=None)
@given(vectors, st.floats(1e-3, 1e3))
@example(np.array([0.0, 0.1, 7.54607e5]), 134.48137747524225)
def test_pi_delta_idempotent_and_inside(x, radius):
    p = pi_delta(x, radius)
    # different norm summation orders can disagree by an ulp
    assert np.linalg.norm(p) <= radius * (1 + 1e-15) or np.array_equal(p, x)
    np.testing.assert_array_equal(pi_delta(p, radius), p)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(-1e3, 1e3)),
    arrays(np.float64, n, elements=st.floats(-1e3, 1e3)))), st.floats(1e-2, 1e2))
def test_pi_delta_non_expansive(pair, radius):
    x, y = pair
    d = np.linalg.norm(pi_delta(x, radius) - pi_delta(y, radius))
    assert d <= np.linalg.norm(x - y) * (1 + 1e-12) + 1e-12 * radius


def test_example_coefficients():
    model, _, _ = example_convergence_model()
    x, y = np.array([[2.0], [2.0]]), np.array([[1.0], [1.0]])
    i = np.array([1, 2])
    np.testing.assert_allclose(model.F1(x, y, i), [[-11.0], [-12.0]])
    np.testing.assert_allclose(model.F(x, y, i), [[-32.0], [-31.5]])
    np.testing.assert_allclose(model.G(x, y, i)[:, :, 0], [[4.0], [math.sin(2) * math.sin(1)]])
    np.testing.assert_allclose(model.f([2.0], [1.0], 1), [-43.0])
    stab, _ = example_stability_model()
    np.testing.assert_allclose(stab.G(x, y, i)[:, :, 0], [[4.0], [2 * math.sin(1) ** 2]])


def test_truncated_parts_clip_but_keep_lipschitz_part():
    model, policy, _ = example_convergence_model()
    delta = 0.01
    R = truncation_radius(policy, delta)
    f1, fd, g1, gd = truncated_parts(model, policy, delta, [10.0], [10.0], 1)
    assert f1[0] == pytest.approx(-50.0)
    assert fd[0] == pytest.approx(-R ** 5, rel=1e-13)
    assert gd[0, 0] == pytest.approx(R ** 2, rel=1e-13)
    drift, diff = truncated_coefficients(model, policy, delta, [10.0], [10.0], 1)
    assert drift[0] == pytest.approx(-50.0 - R ** 5, rel=1e-13)


def test_truncation_bound_where_mu_dominates():
    model, policy = quintic_model(), example_policy()
    rng = np.random.default_rng(3)
    x = rng.uniform(-1e3, 1e3, (2000, 1))
    for delta in np.logspace(-8, 0, 9):
        _, fd, _, gd = truncated_parts(model, policy, delta, x, x[::-1], 1)
        h = policy.h(delta)
        assert np.all(np.abs(fd) <= h * (1 + 1e-12))
        assert np.all(np.abs(gd) <= h * (1 + 1e-12))


def test_validate_policy_pass_and_fail():
    good = validate_policy(quintic_model(), example_policy(), 500, make_stream(0))
    assert good.passed, good.failures
    # the bounded perturbation y/(1+y^2) in regime 2 pushes |F| above w^5 near |x| = w
    model, policy, _ = example_convergence_model()
    bad = validate_policy(model, policy, 500, make_stream(0))
    assert not bad.passed
    assert bad.failures == ["mu does not dominate |F| v |G|"]
    assert bad.mu_worst_point["regime"] == 2
    growing = TruncationPolicy(mu=PowerLaw(5.0), mu_inv=PowerLaw(0.2), h=PowerLaw(0.1))
    rep = validate_policy(quintic_model(), growing, 50, make_stream(0))
    assert "h is not strictly decreasing" in rep.failures


def test_model_validation():
    model, _, _ = example_convergence_model()
    kwargs = {f: getattr(model, f) for f in model.__dataclass_fields__}
    with pytest.raises(InvalidInputError):
        HybridSddeModel(**{**kwargs, "delay": CosineDelay(0.2)})
    with pytest.raises(InvalidInputError):
        HybridSddeModel(**{**kwargs, "delay_derivative_bound": 1.0})
    with pytest.raises(InvalidInputError):
        HybridSddeModel(**{**kwargs, "history": ConstantHistory((1.0, 2.0))})
    with pytest.raises(InvalidInputError):
        HybridSddeModel(**{**kwargs, "initial_regime": 3})
    with pytest.raises(InvalidInputError):
        HybridSddeModel(**{**kwargs, "n_regimes": 3})
    with pytest.raises(InvalidInputError):
        TruncationPolicy(mu=PowerLaw(5.0), mu_inv=PowerLaw(0.2), h=PowerLaw(-0.1), delta_star=2.0)


def test_builtins():
    assert set(BUILTIN_MODELS) == {"example-convergence", "example-stability", "zero", "linear"}
    entry = get_builtin("example-convergence")
    assert entry.model.history(-0.05)[0] == 10.0
    assert entry.constants.K2 == 4.5
    assert get_builtin("example-stability").model.history(0.0)[0] == 1.0
    other = get_builtin("example-stability", history=3.0, initial_regime=2)
    assert other.model.history(0.0)[0] == 3.0 and other.model.initial_regime == 2
    with pytest.raises(InvalidInputError):
        get_builtin("nope")
