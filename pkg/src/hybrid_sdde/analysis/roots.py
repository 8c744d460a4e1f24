"""Decay-rate equations of the stability theory and their bisection solvers.

Three monotone scalar equations are solved:

* ``eta``: ``lambda1 - 2 lambda3 = eta + (lambda2 + lambda4) exp(eta tau)``, the
  almost-sure decay rate of the exact solution;
* ``gamma*``: ``[(1 - delta_bar)(lambda2 + lambda4) + eps] exp(gamma tau)
  = lambda1 - 2 lambda3 - eps - gamma``, the rate preserved by the scheme;
* ``C*(delta)``: the root ``C > 1`` of
  ``J(C) = [(1 - delta_bar)(lambda2 + lambda4) + eps] delta C^((m+1) delta)
  + (1 - (lambda1 - 2 lambda3 - eps) delta) C^delta - 1``, whose logarithm
  tends to ``gamma*`` as ``delta -> 0``.
"""

import math
from dataclasses import dataclass

from ..exceptions import (InvalidInputError, MarginViolatedError, NoPositiveRootError,
                          StepTooLargeError)

MAX_ITER = 200


def bisect(fn, lo, hi, max_iter=MAX_ITER):
    """Root of a monotone function on ``[lo, hi]`` by plain bisection.

    ``fn(lo)`` and ``fn(hi)`` must have opposite signs (or one of them be
    zero). Iterates until the midpoint no longer moves in floating point or
    ``max_iter`` halvings were done, and returns the endpoint with the
    smaller residual.
    """
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise NoPositiveRootError(f"no sign change on [{lo}, {hi}]: f={f_lo}, {f_hi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = fn(mid)
        if f_mid == 0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return lo if abs(f_lo) <= abs(f_hi) else hi


@dataclass(frozen=True)
class StabilityParams:
    """Constants of the split stability conditions.

    ``2 x.F1 + (1 + o)|G1|^2 <= -lambda1 |x|^2 + lambda2 (1 - delta_bar) |y|^2`` and
    ``2 x.F + (1 + 1/o)|G|^2 <= lambda3 |x|^2 + lambda4 (1 - delta_bar) |y|^2``,
    ordered as ``lambda1 > 2 lambda3 >= 2 (1 - delta_bar) lambda4 >= 0``.

    The margin ``epsilon`` is validated against its upper bound by the
    solvers, not here, so that over-large margins can be reported.
    """

    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    delta_bar: float
    tau: float
    epsilon: float
    weight_o: float = math.inf

    def __post_init__(self):
        if not 0 <= self.delta_bar < 1:
            raise InvalidInputError("delta_bar must lie in [0, 1)")
        if self.tau < 0:
            raise InvalidInputError("tau must be non-negative")
        if min(self.lambda2, self.lambda3, self.lambda4) < 0:
            raise InvalidInputError("lambda2, lambda3 and lambda4 must be non-negative")
        if not self.lambda1 > 2 * self.lambda3:
            raise InvalidInputError("need lambda1 > 2 * lambda3")
        if not 2 * self.lambda3 >= 2 * (1 - self.delta_bar) * self.lambda4:
            raise InvalidInputError("need lambda3 >= (1 - delta_bar) * lambda4")
        if self.epsilon < 0:
            raise InvalidInputError("epsilon must be non-negative")
        if not 0 <= self.weight_o <= math.inf:
            raise InvalidInputError("weight_o must lie in [0, inf]")

    @property
    def gap(self):
        """``lambda1 - 2 lambda3``."""
        return self.lambda1 - 2 * self.lambda3

    @property
    def delayed_rate(self):
        """``(1 - delta_bar)(lambda2 + lambda4)``."""
        return (1 - self.delta_bar) * (self.lambda2 + self.lambda4)

    @property
    def epsilon_bound(self):
        """Largest admissible margin: ``[lambda1 - 2 lambda3 - (1 - delta_bar)(lambda2 + lambda4)] / 2``."""
        return 0.5 * (self.gap - self.delayed_rate)

    def to_dict(self):
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "lambda3": self.lambda3,
                "lambda4": self.lambda4, "delta_bar": self.delta_bar, "tau": self.tau,
                "epsilon": self.epsilon,
                "weight_o": "inf" if math.isinf(self.weight_o) else self.weight_o}


def eta_residual(params, eta):
    return params.gap - eta - (params.lambda2 + params.lambda4) * math.exp(eta * params.tau)


def solve_eta(params):
    """Decay rate ``eta > 0`` of the exact solution (bisection on ``[0, lambda1 - 2 lambda3]``)."""
    s = params.lambda2 + params.lambda4
    if not params.gap > s:
        raise NoPositiveRootError(
            f"need lambda1 - 2 lambda3 > lambda2 + lambda4, got {params.gap} <= {s}")
    return bisect(lambda e: eta_residual(params, e), 0.0, params.gap)


def _gamma_coefficient(params, literal):
    s = params.lambda2 + (params.lambda3 if literal else params.lambda4)
    return (1 - params.delta_bar) * s + params.epsilon


def gamma_residual(params, gamma, literal=False):
    a = _gamma_coefficient(params, literal)
    return a * math.exp(gamma * params.tau) - (params.gap - params.epsilon - gamma)


def solve_gamma_star(params, literal=False):
    """Decay rate ``gamma* > 0`` preserved by the truncated scheme.

    Parameters
    ----------
    params : StabilityParams
    literal : bool
        Use ``lambda2 + lambda3`` in the exponential coefficient instead of
        ``lambda2 + lambda4``, an alternative reading of the coefficient.
    """
    if not params.epsilon < params.epsilon_bound:
        raise MarginViolatedError(
            f"epsilon={params.epsilon} must be below {params.epsilon_bound}")
    hi = params.gap - params.epsilon
    return bisect(lambda g: gamma_residual(params, g, literal), 0.0, hi)


def _j_terms(params, delta, m):
    a = params.delayed_rate * delta + params.epsilon * delta
    b = 1 - (params.gap - params.epsilon) * delta
    j1 = (params.delayed_rate + 2 * params.epsilon - params.gap) * delta
    return a, b, j1


def j_function(params, delta, c, m=None):
    """``J(C, delta)`` evaluated at ``C = c``."""
    if m is None:
        m = _default_m(params, delta)
    a, b, j1 = _j_terms(params, delta, m)
    sigma = math.log(c)
    return a * math.expm1(sigma * (m + 1) * delta) + b * math.expm1(sigma * delta) + j1


def _default_m(params, delta):
    q = params.tau / delta
    r = round(q)
    return int(r) if abs(q - r) <= 1e-9 * max(1.0, q) else math.ceil(q)


def solve_c_star(params, delta, m=None):
    """Root ``C* > 1`` of ``J(C, delta) = 0``.

    Solved in ``sigma = log C`` by bisection after growing the bracket
    geometrically from ``sigma = 0`` (``C = 1``).

    Raises
    ------
    StepTooLargeError
        If ``1 - (lambda1 - 2 lambda3 - eps) delta <= 0``.
    MarginViolatedError
        If ``J(1, delta) >= 0``.
    """
    if not delta > 0:
        raise InvalidInputError("delta must be positive")
    if m is None:
        m = _default_m(params, delta)
    a, b, j1 = _j_terms(params, delta, m)
    if not b > 0:
        raise StepTooLargeError(
            f"delta={delta} too large: need delta < {1 / (params.gap - params.epsilon)}")
    if not j1 < 0:
        raise MarginViolatedError(f"J(1, delta) = {j1} >= 0; epsilon too large")

    def J(sigma):
        return a * math.expm1(sigma * (m + 1) * delta) + b * math.expm1(sigma * delta) + j1

    hi = 1.0
    for _ in range(MAX_ITER):
        if J(hi) > 0:
            break
        hi *= 2.0
    else:
        raise NoPositiveRootError("could not bracket the root of J")
    return math.exp(bisect(J, 0.0, hi))
