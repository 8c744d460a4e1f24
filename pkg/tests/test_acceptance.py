"""Acceptance criteria, each at its stated tolerance.

Every test appends one ``criterion N: PASS/FAIL`` line that is printed in
the pytest terminal summary. Run directly (``python3 tests/test_acceptance.py``)
to print the same lines without pytest.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from hybrid_sdde.analysis import solve_c_star, solve_eta, solve_gamma_star
from hybrid_sdde.analysis.checks import check_truncated_khasminskii, sample_points
from hybrid_sdde.analysis.roots import eta_residual, gamma_residual, j_function
from hybrid_sdde.cli import run
from hybrid_sdde.exceptions import NumericalBlowupError
from hybrid_sdde.markov import sample_regime_path, transition_matrix
from hybrid_sdde.model import (BUILTIN_MODELS, EXAMPLE_RATES, example_convergence_model,
                               example_stability_model, get_builtin, truncated_parts)
from hybrid_sdde.rng import make_stream
from hybrid_sdde.solver import (SimulationGrid, coupled_noise, delay_index, evaluate_history,
                                simulate_batch, step_em)

SEED = 20240917
_LINES = []


def record(log, number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    (log if log is not None else _LINES).append(line)
    print(line)
    return passed


def _write(tmp, name, cfg):
    p = tmp / name
    p.write_text(json.dumps(cfg))
    return p


def _cli(tmp, command, cfg, workers, tag):
    out = tmp / f"{command}-{tag}"
    code = run([command, "--config", str(_write(tmp, f"{command}.json", cfg)),
                "--output", str(out), "--workers", str(workers)])
    assert code == 0, f"{command} exited with {code}"
    return out


CONVERGE_CFG = {"model": "example-convergence", "seed": SEED,
                "converge": {"deltas": [2e-4, 4e-4, 8e-4, 16e-4], "ref_delta": 1e-4,
                             "horizon": 1.0, "n_paths": 500}}
STABILITY_CFG = {"model": "example-stability", "seed": SEED,
                 "stability": {"delta": 1e-3, "horizon": 20.0, "n_paths": 200}}


@pytest.fixture(scope="module")
def cli_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("acceptance")
    return {(cmd, w): _cli(tmp, cmd, cfg, w, f"w{w}")
            for cmd, cfg in (("converge", CONVERGE_CFG), ("stability", STABILITY_CFG))
            for w in (1, 2)}


def criterion_1(out, log=None):
    s = json.loads((out / "summary.json").read_text())
    e = s["rms_errors"]
    shrinking = all(a < b for a, b in zip(e, e[1:]))
    ok = 0.35 <= s["slope"] <= 0.65 and shrinking
    return record(log, 1, ok, f"slope={s['slope']:.4f} (band [0.35, 0.65]), rms={['%.3e' % v for v in e]}, "
                              f"errors shrink with delta: {shrinking}")


def criterion_2(out, log=None):
    s = json.loads((out / "summary.json").read_text())
    ok = s["fraction_negative"] >= 0.95 and s["median_exponent"] <= -0.5
    return record(log, 2, ok, f"fraction negative={s['fraction_negative']:.3f} (>= 0.95), "
                              f"median={s['median_exponent']:.4f} (<= -0.5)")


def criterion_3(log=None, n_samples=10_000):
    worst = (-np.inf, None)
    for k, name in enumerate(sorted(BUILTIN_MODELS)):
        entry = get_builtin(name)
        model, policy = entry.model, entry.policy
        rng = make_stream(SEED, k, 2)
        x = sample_points(rng, n_samples, model.state_dim, 100.0)
        y = sample_points(rng, n_samples, model.state_dim, 100.0)
        i = rng.integers(1, model.n_regimes + 1, size=n_samples)
        d = np.exp(rng.uniform(math.log(1e-8), math.log(policy.delta_star), n_samples))
        for j in range(n_samples):
            _, fd, _, gd = truncated_parts(model, policy, d[j], x[j], y[j], i[j])
            h = policy.h(d[j])
            excess = max(np.linalg.norm(fd), np.linalg.norm(gd)) / h - 1.0
            if excess > worst[0]:
                worst = (excess, (name, float(x[j, 0]), float(y[j, 0]), int(i[j]), float(d[j])))
    ok = worst[0] <= 1e-12
    name, xw, yw, iw, dw = worst[1]
    return record(log, 3, ok, f"worst relative excess of |F_delta| v |G_delta| over h = {worst[0]:.3e} "
                              f"({name}, x={xw:.4g}, y={yw:.4g}, i={iw}, delta={dw:.3e})")


def criterion_4(log=None):
    model, policy, c = example_convergence_model()
    rep = check_truncated_khasminskii(model, policy, 4.0, (4.0 - 1) ** 2 / 2, 10_000, 1e3,
                                      make_stream(SEED, 0, 2))
    return record(log, 4, rep.passed, f"{rep.verdict}; max(lhs - rhs) = {rep.max_violation:.4g}")


def criterion_5(log=None):
    closed_err = 0.0
    for delta in (0.01, 0.1, 1.0):
        e = math.exp(-3 * delta)
        exact = np.array([[1 + 2 * e, 2 - 2 * e], [1 - e, 2 + e]]) / 3
        closed_err = max(closed_err, float(np.max(np.abs(transition_matrix(EXAMPLE_RATES, delta).probs - exact))))
    rng = np.random.default_rng(SEED)
    semi = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 6))
        rates = rng.uniform(0, 5, (n, n))
        np.fill_diagonal(rates, 0.0)
        np.fill_diagonal(rates, -rates.sum(axis=1))
        s, t = rng.uniform(0.01, 1.0, 2)
        P = [transition_matrix(rates, v).probs for v in (s, t, s + t)]
        semi = max(semi, float(np.max(np.abs(P[0] @ P[1] - P[2]))))
    path = sample_regime_path(EXAMPLE_RATES, 1.0, 1, 1_000_000, make_stream(SEED, 0, 1))
    occ = np.array([np.mean(path.states[1:] == 1), np.mean(path.states[1:] == 2)])
    occ_err = float(np.max(np.abs(occ - [1 / 3, 2 / 3]) / [1 / 3, 2 / 3]))
    ok = closed_err <= 1e-10 and semi <= 1e-10 and occ_err <= 0.02
    return record(log, 5, ok, f"closed form err={closed_err:.2e}, semigroup residual={semi:.2e}, "
                              f"occupancy={occ.round(4).tolist()} (rel err {occ_err:.2%})")


def criterion_6(log=None):
    _, p = example_stability_model()
    eta, gamma = solve_eta(p), solve_gamma_star(p)
    res = [abs(eta_residual(p, eta)), abs(gamma_residual(p, gamma))]
    logs = []
    for d in (1e-2, 1e-3, 1e-4):
        c = solve_c_star(p, d)
        res.append(abs(j_function(p, d, c)))
        logs.append(math.log(c))
    gaps = [abs(v - gamma) for v in logs]
    decreasing = logs[0] > logs[1] > logs[2] and gaps[0] > gaps[1] > gaps[2]
    ok = (max(res) <= 1e-12 and abs(eta - 4.0117) <= 1e-3 and abs(gamma - 4.05) <= 1e-2
          and decreasing)
    return record(log, 6, ok, f"eta={eta:.6f}, gamma*={gamma:.6f}, max residual={max(res):.1e}, "
                              f"log C*={[round(v, 5) for v in logs]}")


def criterion_7(runs, log=None):
    same = {}
    for cmd, fname in (("converge", "errors.csv"), ("stability", "stability.csv")):
        same[fname] = (runs[(cmd, 1)] / fname).read_bytes() == (runs[(cmd, 2)] / fname).read_bytes()
    return record(log, 7, all(same.values()),
                  ", ".join(f"{k} identical for 1 vs 2 workers: {v}" for k, v in same.items()))


def _em_blowup_step(model, delta, n_steps, seed, path_id):
    """Step index at which untruncated EM raises, or None."""
    dB, regimes, _ = coupled_noise(model, delta, n_steps * delta, seed, path_id, [])
    grid = SimulationGrid.build(delta, n_steps * delta, model.tau)
    hist = [evaluate_history(model, max(k * delta, -model.tau)) for k in range(-grid.offset, 1)]
    xs = hist
    for k in range(n_steps):
        j = delay_index(k, delta, model.delay, model.tau)
        x_k, y_k = xs[-1], xs[grid.offset + j]
        try:
            xs.append(step_em(x_k, y_k, regimes.states[k], model, delta, dB[k], step_index=k))
        except NumericalBlowupError as exc:
            return exc.step
    return None


def criterion_8(log=None, n_paths=100):
    model, policy, _ = example_convergence_model()
    assert model.history(0.0)[0] == 10.0
    steps = [_em_blowup_step(model, 0.1, 50, SEED, p) for p in range(n_paths)]
    blown = sum(s is not None and s < 50 for s in steps)
    ptem = simulate_batch(model, policy, [0.1], 5.0, SEED, range(n_paths))[0]
    finite = bool(np.all(ptem.finite) and np.all(np.isfinite(ptem.states)))
    ok = blown >= 0.5 * n_paths and finite
    return record(log, 8, ok, f"EM blow-ups within 50 steps: {blown}/{n_paths} "
                              f"(first at step {min(s for s in steps if s is not None)}), "
                              f"PTEM all finite: {finite}")


def test_criterion_1_convergence_rate(cli_runs, acceptance_log):
    assert criterion_1(cli_runs[("converge", 1)], acceptance_log)


def test_criterion_2_almost_sure_stability(cli_runs, acceptance_log):
    assert criterion_2(cli_runs[("stability", 1)], acceptance_log)


def test_criterion_3_truncation_bound(acceptance_log):
    assert criterion_3(acceptance_log)


def test_criterion_4_truncated_khasminskii(acceptance_log):
    assert criterion_4(acceptance_log)


def test_criterion_5_markov_machinery(acceptance_log):
    assert criterion_5(acceptance_log)


def test_criterion_6_root_solvers(acceptance_log):
    assert criterion_6(acceptance_log)


def test_criterion_7_determinism(cli_runs, acceptance_log):
    assert criterion_7(cli_runs, acceptance_log)


def test_criterion_8_em_baseline(acceptance_log):
    assert criterion_8(acceptance_log)


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        tmp = Path(d)
        runs = {(cmd, w): _cli(tmp, cmd, cfg, w, f"w{w}")
                for cmd, cfg in (("converge", CONVERGE_CFG), ("stability", STABILITY_CFG))
                for w in (1, 2)}
        results = [criterion_1(runs[("converge", 1)]), criterion_2(runs[("stability", 1)]),
                   criterion_3(), criterion_4(), criterion_5(), criterion_6(),
                   criterion_7(runs), criterion_8()]
    print(f"{sum(results)}/{len(results)} criteria pass")
