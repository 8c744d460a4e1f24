import math

import numpy as np
import pytest

from hybrid_sdde.analysis import (StabilityParams, bisect, check_khasminskii, check_monotonicity,
                                  check_stability_split, check_truncated_khasminskii, fit_rate,
                                  j_function, lyapunov_estimate, lyapunov_regression,
                                  rate_condition, solve_c_star, solve_eta, solve_gamma_star,
                                  stability_study, strong_error_study)
from hybrid_sdde.analysis.parallel import resolve_workers, split_ids
from hybrid_sdde.analysis.roots import eta_residual, gamma_residual
from hybrid_sdde.exceptions import (DegenerateStudyError, InvalidInputError, MarginViolatedError,
                                    NoPositiveRootError, StepTooLargeError)
from hybrid_sdde.markov import Generator
from hybrid_sdde.model import (ConstantDelay, ConstantHistory, HybridSddeModel,
                               example_convergence_model, example_policy,
                               example_stability_model, get_builtin, zero_diffusion, zero_drift)
from hybrid_sdde.rng import make_stream
from hybrid_sdde.solver import simulate_path

# independent high-precision roots (50-digit mpmath findroot)
ETA_ORACLE = 4.012591404801542
GAMMA_ORACLE = 4.051031417453537


@pytest.fixture(scope="module")
def params():
    return example_stability_model()[1]


def test_bisect():
    assert bisect(lambda x: x * x - 2, 0.0, 2.0) == pytest.approx(math.sqrt(2), abs=1e-15)
    with pytest.raises(NoPositiveRootError):
        bisect(lambda x: x * x + 1, -1.0, 1.0)


def test_eta_and_gamma_oracles(params):
    eta, gamma = solve_eta(params), solve_gamma_star(params)
    assert eta == pytest.approx(ETA_ORACLE, abs=1e-13)
    assert gamma == pytest.approx(GAMMA_ORACLE, abs=1e-13)
    assert abs(eta_residual(params, eta)) <= 1e-12
    assert abs(gamma_residual(params, gamma)) <= 1e-12
    assert params.epsilon_bound == pytest.approx(2.6)
    # the alternative coefficient lambda2 + lambda3 gives a different, smaller root
    lit = solve_gamma_star(params, literal=True)
    assert lit < gamma and abs(gamma_residual(params, lit, literal=True)) <= 1e-12


def test_params_validation():
    ok = dict(lambda1=11, lambda2=1, lambda3=2, lambda4=1, delta_bar=0.1, tau=0.1, epsilon=0.1)
    with pytest.raises(InvalidInputError):
        StabilityParams(**{**ok, "lambda1": 4})
    with pytest.raises(InvalidInputError):
        StabilityParams(**{**ok, "delta_bar": 1.0})
    with pytest.raises(InvalidInputError):
        StabilityParams(**{**ok, "epsilon": -0.1})
    with pytest.raises(MarginViolatedError):
        solve_gamma_star(StabilityParams(**{**ok, "epsilon": 2.6}))
    with pytest.raises(NoPositiveRootError):
        solve_eta(StabilityParams(**{**ok, "lambda2": 5, "lambda4": 3, "lambda3": 3, "lambda1": 13}))


def test_c_star_tends_to_gamma(params):
    gamma = solve_gamma_star(params)
    logs = []
    for delta in (1e-2, 1e-3, 1e-4):
        c = solve_c_star(params, delta)
        assert c > 1
        assert abs(j_function(params, delta, c)) <= 1e-12
        logs.append(math.log(c))
    gaps = [lc - gamma for lc in logs]
    assert logs[0] > logs[1] > logs[2]
    assert gaps[0] > gaps[1] > gaps[2] > 0
    np.testing.assert_allclose(gaps, [0.0650, 0.0064, 0.00064], rtol=0.02)
    with pytest.raises(StepTooLargeError):
        solve_c_star(params, 0.2)


def test_fit_rate_exact_power_law():
    d = np.array([1e-3, 2e-3, 4e-3, 8e-3])
    slope, intercept, stderr = fit_rate(d, 3.0 * d ** 0.5)
    assert slope == pytest.approx(0.5, abs=1e-13)
    assert intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert stderr < 1e-12
    with pytest.raises(DegenerateStudyError):
        fit_rate(d, np.zeros(4))


def test_rate_condition():
    policy = example_policy()
    holds, h, rhs = rate_condition(policy, 1e-4, 4)
    assert h == pytest.approx(1e-4 ** -0.1)
    # mu((delta h^2)^(-1/2)) dwarfs h: the coupling fails for the example policy
    assert not holds and rhs > h
    with pytest.raises(InvalidInputError):
        rate_condition(policy, 1e-4, 2)


def test_additive_noise_study_and_worker_independence():
    entry = get_builtin("linear")
    args = (entry.model, entry.policy, [0.02, 0.04, 0.08], 0.01, 1.6, 200, 5)
    a = strong_error_study(*args, workers=1)
    b = strong_error_study(*args, workers=2)
    assert a.rms_errors == b.rms_errors
    assert a.rms_errors[0] < a.rms_errors[1] < a.rms_errors[2]
    assert 0.8 < a.slope < 1.4
    assert a.blowups == [0, 0, 0]
    zero = get_builtin("zero")
    z = strong_error_study(zero.model, zero.policy, [0.2, 0.4], 0.1, 1.2, 4, 0)
    assert z.degenerate and math.isnan(z.slope)


def _decay_F1(x, y, i):
    return -x


def test_lyapunov_on_deterministic_decay():
    model = HybridSddeModel(
        state_dim=1, noise_dim=1, n_regimes=1, F1=_decay_F1, G1=zero_diffusion, F=zero_drift,
        G=zero_diffusion, generator=Generator(np.zeros((1, 1))), delay=ConstantDelay(0.0),
        tau=0.0, delay_derivative_bound=0.0, history=ConstantHistory((2.0,)))
    path = simulate_path(model, get_builtin("zero").policy, 0.1, 1.0, 0, 0)
    expected = math.log(2 * 0.9 ** 10)
    assert lyapunov_estimate(path) == pytest.approx(expected, rel=1e-12)
    assert lyapunov_regression(path) == pytest.approx(math.log(0.9) / 0.1, rel=1e-10)


def test_stability_study_small(params):
    model, _ = example_stability_model()
    res = stability_study(model, example_policy(), params, 0.01, 5.0, 20, 1)
    assert res.fraction_negative == 1.0
    assert res.median_exponent < -2
    assert res.eta == pytest.approx(ETA_ORACLE)


def test_workers_resolution(monkeypatch):
    monkeypatch.setenv("HYBRID_SDDE_WORKERS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    with pytest.raises(ValueError):
        resolve_workers(0)
    assert split_ids(5, 2) == [[0, 1, 2], [3, 4]]


def test_khasminskii_and_monotonicity_pass():
    model, policy, c = example_convergence_model()
    for check in (check_khasminskii(model, c.p_bar, c.K2, 20000, 1e3, make_stream(1)),
                  check_truncated_khasminskii(model, policy, c.p_bar, c.K2, 20000, 1e3, make_stream(2)),
                  check_monotonicity(model, c.q_bar, c.K7, 20000, 10.0, make_stream(3))):
        assert check.passed, check.to_dict()
        assert check.verdict == "no violation found"


def test_khasminskii_detects_violation():
    model, _, c = example_convergence_model()
    rep = check_khasminskii(model, 40.0, 0.01, 5000, 10.0, make_stream(1))
    assert not rep.passed and rep.max_violation > 0


def test_stability_split(params):
    model, _ = example_stability_model()
    # the discounted delay coefficient rejects regime 1 at y = x: 2x(-6x+y) = -10x^2 > -11x^2 + 0.9x^2
    discounted = check_stability_split(model, params, 20000, 100.0, make_stream(4))
    assert not discounted.passed and discounted.per_regime[1] > 0
    plain = check_stability_split(model, params, 20000, 100.0, make_stream(4), delay_discount=False)
    assert plain.passed, plain.to_dict()


def test_stability_split_zero_model_fails():
    zero = get_builtin("zero").model
    p = StabilityParams(lambda1=1, lambda2=0, lambda3=0, lambda4=0, delta_bar=0, tau=0, epsilon=0)
    # 0 <= -|x|^2 is false away from the origin
    assert not check_stability_split(zero, p, 1000, 1.0, make_stream(0)).passed
