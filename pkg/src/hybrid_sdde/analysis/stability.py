"""Finite-horizon Lyapunov exponents of numerical paths."""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InvalidInputError, NoPositiveRootError
from ..solver import simulate_batch
from .parallel import map_blocks
from .roots import solve_eta, solve_gamma_star


def _terminal_exponent(x_terminal, horizon):
    norm = float(np.linalg.norm(x_terminal))
    if not np.isfinite(norm):
        return np.inf
    if norm == 0:
        return -np.inf
    return float(np.log(norm) / horizon)


def lyapunov_estimate(path, burn_in_fraction=0.0):
    """Terminal exponent ``log|X_K| / (K delta)`` of a path.

    ``burn_in_fraction`` is ignored by this estimator and only used by
    :func:`lyapunov_regression`. A zero terminal state gives ``-inf`` and a
    non-finite one ``+inf``.
    """
    if not 0 <= burn_in_fraction < 1:
        raise InvalidInputError("burn_in_fraction must lie in [0, 1)")
    return _terminal_exponent(path.terminal, path.grid.horizon)


def lyapunov_regression(path, burn_in_fraction=0.0):
    """Slope of ``log|X_k|`` against ``t_k`` over ``t_k >= burn_in_fraction * T``.

    Grid points with ``X_k = 0`` are skipped.
    """
    if not 0 <= burn_in_fraction < 1:
        raise InvalidInputError("burn_in_fraction must lie in [0, 1)")
    off = path.grid.offset
    t = path.times()[off:]
    norms = np.linalg.norm(path.states[off:], axis=1)
    keep = (t >= burn_in_fraction * path.grid.horizon) & (norms > 0)
    if keep.sum() < 2:
        raise InvalidInputError("not enough non-zero states after burn-in")
    slope, _ = np.polyfit(t[keep], np.log(norms[keep]), 1)
    return float(slope)


@dataclass
class StabilityStudyResult:
    """Per-path terminal exponents next to the analytic decay rates.

    The exact solution decays at least like ``exp(-eta t / 2)`` and the
    scheme like ``exp(-gamma_star t / 2)`` asymptotically.
    """

    per_path_exponents: list
    eta: float
    gamma_star: float
    fraction_negative: float
    median_exponent: float
    blowups: int
    delta: float
    horizon: float
    regression_exponents: list = field(default_factory=list)

    def to_dict(self):
        return {"eta": self.eta, "gamma_star": self.gamma_star,
                "fraction_negative": self.fraction_negative,
                "median_exponent": self.median_exponent, "blowups": self.blowups,
                "delta": self.delta, "horizon": self.horizon,
                "n_paths": len(self.per_path_exponents)}


def _exponent_block(model, policy, delta, horizon, seed, burn_in, path_ids):
    res = simulate_batch(model, policy, [delta], horizon, seed, path_ids)[0]
    term = np.array([_terminal_exponent(x, horizon) if ok else np.inf
                     for x, ok in zip(res.states[:, -1], res.finite)])
    off = res.grid.offset
    t = res.grid.times()[off:]
    keep_t = t >= burn_in * horizon
    reg = []
    for row, ok in enumerate(res.finite):
        norms = np.linalg.norm(res.states[row, off:], axis=1)
        keep = keep_t & (norms > 0)
        if not ok or keep.sum() < 2:
            reg.append(np.nan)
            continue
        reg.append(float(np.polyfit(t[keep], np.log(norms[keep]), 1)[0]))
    return term, np.array(reg), res.finite


def stability_study(model, policy, params, delta, horizon, n_paths, seed,
                    burn_in_fraction=0.0, workers=1):
    """Simulate ``n_paths`` paths and summarise their terminal Lyapunov exponents."""
    if n_paths < 1:
        raise InvalidInputError("n_paths must be >= 1")
    if not 0 <= burn_in_fraction < 1:
        raise InvalidInputError("burn_in_fraction must lie in [0, 1)")
    blocks = map_blocks(_exponent_block,
                        (model, policy, delta, horizon, seed, burn_in_fraction), n_paths, workers)
    exps = np.concatenate([b[0] for b in blocks])
    reg = np.concatenate([b[1] for b in blocks])
    finite = np.concatenate([b[2] for b in blocks])
    try:
        eta = solve_eta(params)
    except NoPositiveRootError:
        eta = float("nan")
    try:
        gamma = solve_gamma_star(params)
    except NoPositiveRootError:
        gamma = float("nan")
    return StabilityStudyResult(
        per_path_exponents=exps.tolist(), eta=eta, gamma_star=gamma,
        fraction_negative=float(np.mean(exps < 0)), median_exponent=float(np.median(exps)),
        blowups=int((~finite).sum()), delta=float(delta), horizon=float(horizon),
        regression_exponents=reg.tolist())
