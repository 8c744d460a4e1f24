"""Sampling-based falsification of the structural assumptions on a model.

Each checker evaluates ``lhs - rhs`` of an inequality at random points and
reports the largest value found per regime. Points are drawn uniformly in
the box ``[-box_radius, box_radius]^n``, with 10% of them shrunk by a
factor ``1e-3`` to probe small states. A pass only means that no violation
was found.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..exceptions import InvalidInputError
from ..model import truncated_parts
from ..rng import as_generator

NEAR_ORIGIN_FRACTION = 0.1
NEAR_ORIGIN_SCALE = 1e-3
REL_TOL = 1e-12


@dataclass
class CheckReport:
    """Largest sampled violation ``lhs - rhs`` of one inequality."""

    name: str
    passed: bool
    max_violation: float
    per_regime: dict
    worst_point: Optional[dict]
    n_samples: int
    details: dict = field(default_factory=dict)

    @property
    def verdict(self):
        return "no violation found" if self.passed else "violation found"

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "verdict": self.verdict,
                "max_violation": self.max_violation,
                "per_regime": {str(k): v for k, v in self.per_regime.items()},
                "worst_point": self.worst_point, "n_samples": self.n_samples,
                "details": self.details}


def sample_points(rng, n_samples, dim, box_radius):
    """Uniform box samples with a small-state fraction near the origin."""
    pts = rng.uniform(-box_radius, box_radius, size=(n_samples, dim))
    n_small = int(round(NEAR_ORIGIN_FRACTION * n_samples))
    pts[:n_small] *= NEAR_ORIGIN_SCALE
    return pts


def _sq(a):
    return np.sum(a.reshape(len(a), -1) ** 2, axis=1)


def _dot(a, b):
    return np.sum(a * b, axis=1)


def _report(name, lhs, rhs, scale, regimes, points, n_regimes, details=None):
    viol = lhs - rhs
    tol = REL_TOL * scale
    per_regime = {}
    for r in range(1, n_regimes + 1):
        sel = regimes == r
        per_regime[r] = float(np.max(viol[sel])) if np.any(sel) else None
    k = int(np.argmax(viol - tol))
    worst = {key: (val[k].tolist() if isinstance(val, np.ndarray) else val)
             for key, val in points.items()}
    worst["regime"] = int(regimes[k])
    worst["violation"] = float(viol[k])
    passed = bool(np.all(viol <= tol))
    return CheckReport(name=name, passed=passed, max_violation=float(np.max(viol)),
                       per_regime=per_regime, worst_point=worst, n_samples=len(viol),
                       details=details or {})


def check_khasminskii(model, p_bar, K2, n_samples, box_radius, stream):
    """Falsify ``x.F + (p_bar - 1)/2 |G|^2 <= K2 (1 + |x|^2 + |y|^2)``."""
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    rng = as_generator(stream)
    n = model.state_dim
    x = sample_points(rng, n_samples, n, box_radius)
    y = sample_points(rng, n_samples, n, box_radius)
    i = rng.integers(1, model.n_regimes + 1, size=n_samples)
    xf = _dot(x, model.F(x, y, i))
    gg = 0.5 * (p_bar - 1) * _sq(model.G(x, y, i))
    rhs = K2 * (1 + _sq(x) + _sq(y))
    return _report("khasminskii", xf + gg, rhs, np.abs(xf) + gg + rhs, i,
                   {"x": x, "y": y}, model.n_regimes, {"p_bar": p_bar, "K2": K2})


def check_truncated_khasminskii(model, policy, p_bar, K2, n_samples, box_radius, stream):
    """Falsify ``x.F_delta + (p_bar - 1)/2 |G_delta|^2 <= 2 K2 (1 + |x|^2 + |y|^2)``.

    ``delta`` is drawn per sample from a log grid on ``[1e-8, delta_star]``.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    rng = as_generator(stream)
    n = model.state_dim
    x = sample_points(rng, n_samples, n, box_radius)
    y = sample_points(rng, n_samples, n, box_radius)
    i = rng.integers(1, model.n_regimes + 1, size=n_samples)
    grid = np.logspace(-8.0, np.log10(policy.delta_star), 64)
    d = grid[rng.integers(0, len(grid), size=n_samples)]
    fd = np.empty_like(x)
    gd = np.empty((n_samples, n, model.noise_dim))
    for delta in np.unique(d):
        sel = d == delta
        _, fd[sel], _, gd[sel] = truncated_parts(model, policy, delta, x[sel], y[sel], i[sel])
    xf = _dot(x, fd)
    gg = 0.5 * (p_bar - 1) * _sq(gd)
    rhs = 2 * K2 * (1 + _sq(x) + _sq(y))
    return _report("truncated_khasminskii", xf + gg, rhs, np.abs(xf) + gg + rhs, i,
                   {"x": x, "y": y, "delta": d}, model.n_regimes, {"p_bar": p_bar, "K2": K2})


def check_monotonicity(model, q_bar, K7, n_pairs, box_radius, stream):
    """Falsify ``(x - xb).(F - Fb) + (q_bar - 1)/2 |G - Gb|^2 <= K7 (|x - xb|^2 + |y - yb|^2)``."""
    if n_pairs < 1:
        raise InvalidInputError("n_pairs must be >= 1")
    rng = as_generator(stream)
    n = model.state_dim
    x, xb, y, yb = (sample_points(rng, n_pairs, n, box_radius) for _ in range(4))
    i = rng.integers(1, model.n_regimes + 1, size=n_pairs)
    F, Fb = model.F(x, y, i), model.F(xb, yb, i)
    G, Gb = model.G(x, y, i), model.G(xb, yb, i)
    cross = _dot(x - xb, F - Fb)
    gg = 0.5 * (q_bar - 1) * _sq(G - Gb)
    rhs = K7 * (_sq(x - xb) + _sq(y - yb))
    scale = np.abs(_dot(x - xb, F)) + np.abs(_dot(x - xb, Fb)) + 0.5 * (q_bar - 1) * (_sq(G) + _sq(Gb)) + rhs
    return _report("monotonicity", cross + gg, rhs, scale, i,
                   {"x": x, "y": y, "x_bar": xb, "y_bar": yb}, model.n_regimes,
                   {"q_bar": q_bar, "K7": K7})


def _weighted(sq, weight):
    # weight * 0 is taken as 0 for an infinite weight
    if math.isinf(weight):
        return np.where(sq == 0, 0.0, np.inf)
    return weight * sq


def check_stability_split(model, params, n_samples, box_radius, stream, delay_discount=True):
    """Falsify both split stability inequalities.

    ``2 x.F1 + (1 + o)|G1|^2 <= -lambda1 |x|^2 + lambda2 c |y|^2`` and
    ``2 x.F + (1 + 1/o)|G|^2 <= lambda3 |x|^2 + lambda4 c |y|^2`` with
    ``c = 1 - delta_bar``. ``delay_discount=False`` uses ``c = 1``, the form
    in which the builtin example's constants were derived.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    rng = as_generator(stream)
    n = model.state_dim
    x = sample_points(rng, n_samples, n, box_radius)
    y = sample_points(rng, n_samples, n, box_radius)
    i = rng.integers(1, model.n_regimes + 1, size=n_samples)
    c = (1 - params.delta_bar) if delay_discount else 1.0
    o = params.weight_o
    inv_o = math.inf if o == 0 else (0.0 if math.isinf(o) else 1.0 / o)
    g1 = _sq(model.G1(x, y, i))
    g = _sq(model.G(x, y, i))
    x2, y2 = _sq(x), _sq(y)
    with np.errstate(invalid="ignore"):
        lhs1 = 2 * _dot(x, model.F1(x, y, i)) + g1 + _weighted(g1, o)
        rhs1 = -params.lambda1 * x2 + params.lambda2 * c * y2
        lhs2 = 2 * _dot(x, model.F(x, y, i)) + g + _weighted(g, inv_o)
        rhs2 = params.lambda3 * x2 + params.lambda4 * c * y2
    pts = {"x": x, "y": y}
    details = {"delay_discount": delay_discount, "params": params.to_dict()}
    lin = _report("stability_linear_part", lhs1, rhs1, np.abs(lhs1) + np.abs(rhs1), i, pts,
                  model.n_regimes, details)
    sup = _report("stability_nonlinear_part", lhs2, rhs2, np.abs(lhs2) + np.abs(rhs2), i, pts,
                  model.n_regimes, details)
    per_regime = {r: max(v for v in (lin.per_regime[r], sup.per_regime[r]) if v is not None)
                  if lin.per_regime[r] is not None else None for r in lin.per_regime}
    worst = lin if lin.max_violation >= sup.max_violation else sup
    return CheckReport(
        name="stability_split", passed=lin.passed and sup.passed,
        max_violation=max(lin.max_violation, sup.max_violation), per_regime=per_regime,
        worst_point=worst.worst_point, n_samples=n_samples,
        details={**details, "linear_part": lin.to_dict(), "nonlinear_part": sup.to_dict()})
