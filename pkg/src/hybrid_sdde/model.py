"""Hybrid SDDE models with split coefficients and their truncation policy.

A model describes

    dx(t) = f(x(t), x(t - delay(t)), r(t)) dt + g(x(t), x(t - delay(t)), r(t)) dB(t)

with ``f = F1 + F`` and ``g = G1 + G``. ``F1``/``G1`` are the globally
Lipschitz parts, left untouched by the scheme; ``F``/``G`` may grow
super-linearly and are evaluated at radially clipped arguments.

Coefficient callables are batched: they receive ``x`` and ``y`` of shape
``(P, n)`` and a regime array ``i`` of shape ``(P,)`` (values ``1..N``) and
return ``(P, n)`` for drifts, ``(P, n, m)`` for diffusions. Every helper in
this module also accepts a single point (``x`` of shape ``(n,)`` or a scalar
and an integer regime) and returns unbatched results in that case.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import InvalidInputError
from .markov import Generator
from .rng import as_generator

TRUNC_REL_TOL = 1e-12


# --------------------------------------------------------------------------
# small picklable callables

@dataclass(frozen=True)
class PowerLaw:
    """``w -> coef * w**exponent``."""

    exponent: float
    coef: float = 1.0

    def __call__(self, w):
        return self.coef * np.power(w, self.exponent)

    def inverse(self):
        return PowerLaw(1.0 / self.exponent, self.coef ** (-1.0 / self.exponent))


@dataclass(frozen=True)
class ConstantHistory:
    """Initial segment ``xi(t) = value`` on ``[-tau, 0]``."""

    value: tuple

    def __call__(self, t):
        return np.asarray(self.value, dtype=float).copy()


@dataclass(frozen=True)
class CosineDelay:
    """``delay(t) = amplitude * cos(frequency * t)``; negative values are clipped by the solver."""

    amplitude: float
    frequency: float = 1.0

    def __call__(self, t):
        return self.amplitude * np.cos(self.frequency * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class ConstantDelay:
    """``delay(t) = lag`` for every ``t``."""

    lag: float = 0.0

    def __call__(self, t):
        return np.full(np.shape(t), float(self.lag))


def zero_drift(x, y, i):
    return np.zeros_like(x)


def zero_diffusion(x, y, i):
    # scalar-noise default; models with m > 1 provide their own zeros
    return np.zeros(x.shape + (1,))


# --------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class HybridSddeModel:
    """Split-coefficient SDDE with variable delay and Markovian switching.

    Parameters
    ----------
    state_dim, noise_dim, n_regimes : int
        ``n``, ``m`` and ``N``.
    F1, G1 : callable
        Globally Lipschitz drift and diffusion parts.
    F, G : callable
        Parts that are truncated by the scheme.
    generator : Generator
        Rate matrix of the regime chain.
    delay : callable
        ``t -> delay(t)``, vectorised over ``t``.
    tau : float
        Supremum of the delay; the history is needed on ``[-tau, 0]``.
    delay_derivative_bound : float
        Bound on ``d delay / dt`` in ``[0, 1)``.
    history : callable
        ``t -> xi(t)`` returning an array of shape ``(n,)``.
    holder_exponent : float
        Hölder exponent ``v`` of ``xi``.
    initial_regime : int
    name : str
    """

    state_dim: int
    noise_dim: int
    n_regimes: int
    F1: Callable
    G1: Callable
    F: Callable
    G: Callable
    generator: Generator
    delay: Callable
    tau: float
    delay_derivative_bound: float
    history: Callable
    holder_exponent: float = 1.0
    initial_regime: int = 1
    name: str = "custom"

    def __post_init__(self):
        if not isinstance(self.generator, Generator):
            object.__setattr__(self, "generator", Generator(self.generator))
        if self.generator.n_states != self.n_regimes:
            raise InvalidInputError(
                f"generator has {self.generator.n_states} states but n_regimes={self.n_regimes}")
        if self.state_dim < 1 or self.noise_dim < 1:
            raise InvalidInputError("state_dim and noise_dim must be positive")
        if not 1 <= self.initial_regime <= self.n_regimes:
            raise InvalidInputError(f"initial_regime {self.initial_regime} outside 1..{self.n_regimes}")
        if self.tau < 0:
            raise InvalidInputError("tau must be non-negative")
        if not 0 <= self.delay_derivative_bound < 1:
            raise InvalidInputError("delay_derivative_bound must lie in [0, 1)")
        if not 0 < self.holder_exponent <= 1:
            raise InvalidInputError("holder_exponent must lie in (0, 1]")
        grid = np.linspace(0.0, 100.0, 2001)
        d = np.maximum(np.asarray(self.delay(grid), dtype=float), 0.0)
        if np.any(~np.isfinite(d)) or np.any(d > self.tau * (1 + 1e-12)):
            raise InvalidInputError("delay exceeds tau on the spot-check grid")
        if np.shape(self.history(0.0)) != (self.state_dim,):
            raise InvalidInputError("history must return arrays of shape (state_dim,)")

    def f(self, x, y, i):
        """Composite drift ``F1 + F``."""
        x, y, i, single = _batch(x, y, i, self.state_dim)
        out = self.F1(x, y, i) + self.F(x, y, i)
        return out[0] if single else out

    def g(self, x, y, i):
        """Composite diffusion ``G1 + G``."""
        x, y, i, single = _batch(x, y, i, self.state_dim)
        out = self.G1(x, y, i) + self.G(x, y, i)
        return out[0] if single else out


@dataclass(frozen=True)
class TruncationPolicy:
    """Functions controlling the truncation radius ``mu_inv(h(delta))``.

    ``mu`` must dominate ``|F| v |G|`` on balls of radius ``w >= 1``; ``h``
    must be strictly decreasing with ``h(delta_star) >= mu(1)`` and
    ``delta**0.25 * h(delta) <= 1``. Only ``delta_star`` is validated on
    construction; :func:`validate_policy` probes the rest.
    """

    mu: Callable
    mu_inv: Callable
    h: Callable
    delta_star: float = 1.0

    def __post_init__(self):
        if not 0 < self.delta_star <= 1:
            raise InvalidInputError(f"delta_star must lie in (0, 1], got {self.delta_star}")


@dataclass(frozen=True)
class ModelConstants:
    """Constants of the standing assumptions for a given model.

    ``K1`` Lipschitz/growth, ``K2`` Khasminskii, ``p_bar`` moment exponent,
    ``q_bar`` and ``K7`` monotonicity, ``rho`` polynomial degree, ``K5`` delay
    Lipschitz constant and ``K6`` Hölder constant of the history.
    """

    K1: float
    K2: float
    p_bar: float
    q_bar: float
    K7: float
    rho: float
    K5: float
    K6: float

    def __post_init__(self):
        for name in ("K1", "K2", "K7", "rho", "K5", "K6"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be non-negative")
        if self.p_bar < 2:
            raise InvalidInputError("p_bar must be >= 2")
        if self.q_bar <= 2:
            raise InvalidInputError("q_bar must be > 2")


# --------------------------------------------------------------------------
# truncation

def _batch(x, y, i, n):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    single = x.ndim <= 1
    if single:
        x = x.reshape(1, n)
        y = y.reshape(1, n)
        i = np.asarray([int(i)])
    else:
        i = np.broadcast_to(np.asarray(i, dtype=np.int64), (x.shape[0],))
    return x, y, i, single


def truncation_radius(policy, delta):
    """Radius ``mu_inv(h(delta))`` of the ball the arguments of F, G are clipped to."""
    if not 0 < delta <= policy.delta_star:
        raise InvalidInputError(
            f"delta={delta} outside (0, delta_star={policy.delta_star}]")
    return float(policy.mu_inv(policy.h(delta)))


def pi_delta(x, radius):
    """Radial projection of ``x`` onto the closed ball of the given radius.

    Points inside the ball are returned unchanged and ``0`` maps to ``0``.
    Works on a single vector of shape ``(n,)`` or on rows of ``(P, n)``.
    The outside branch is nudged down by ulps until the computed norm is at
    most ``radius``, which makes the map exactly idempotent.
    """
    if not radius > 0:
        raise InvalidInputError(f"radius must be positive, got {radius}")
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    xb = np.atleast_2d(x) if x.ndim == 1 else (x.reshape(1, 1) if x.ndim == 0 else x)
    norms = np.linalg.norm(xb, axis=1)
    outside = norms > radius
    if not np.any(outside):
        return x.copy()
    out = xb.copy()
    scale = radius / norms[outside]
    clipped = xb[outside] * scale[:, None]
    too_big = np.linalg.norm(clipped, axis=1) > radius
    while np.any(too_big):
        scale[too_big] = np.nextafter(scale[too_big], 0.0)
        clipped = xb[outside] * scale[:, None]
        too_big = np.linalg.norm(clipped, axis=1) > radius
    out[outside] = clipped
    if single:
        return out.reshape(x.shape)
    return out


def truncated_parts(model, policy, delta, x, y, i):
    """Return ``(F1, F_delta, G1, G_delta)`` at ``(x, y, i)``.

    ``F_delta(x, y, i) = F(pi(x), pi(y), i)`` and likewise for ``G``.
    """
    radius = truncation_radius(policy, delta)
    xb, yb, ib, single = _batch(x, y, i, model.state_dim)
    px, py = pi_delta(xb, radius), pi_delta(yb, radius)
    parts = (model.F1(xb, yb, ib), model.F(px, py, ib),
             model.G1(xb, yb, ib), model.G(px, py, ib))
    if single:
        return tuple(p[0] for p in parts)
    return parts


def truncated_coefficients(model, policy, delta, x, y, i):
    """Partially truncated drift and diffusion ``(F1 + F_delta, G1 + G_delta)``."""
    f1, fd, g1, gd = truncated_parts(model, policy, delta, x, y, i)
    return f1 + fd, g1 + gd


# --------------------------------------------------------------------------
# sampling-based policy validation

@dataclass
class PolicyReport:
    """Outcome of :func:`validate_policy`.

    A pass means that no violation was found on the samples drawn; it does
    not certify the conditions.
    """

    passed: bool
    mu_worst_margin: float
    mu_worst_point: Optional[dict]
    h_star_margin: float
    h_quarter_worst: float
    h_quarter_worst_delta: float
    h_decreasing: bool
    mu_inverse_error: float
    failures: list = field(default_factory=list)

    @property
    def worst_margin(self):
        return max(self.mu_worst_margin, self.h_star_margin, self.h_quarter_worst)


def _ball_samples(rng, n_samples, dim, w):
    # uniform direction, uniform (not volume-weighted) radius
    d = rng.standard_normal((n_samples, dim))
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return d / norms * (w * rng.random((n_samples, 1)))


def validate_policy(model, policy, n_samples, stream, n_radii=64, n_deltas=64):
    """Probe the conditions on ``mu`` and ``h`` by sampling.

    Checks ``sup_{|x| v |y| <= w} |F| v |G| <= mu(w)`` on 64 log-spaced
    ``w`` in ``[1, 1e3]`` (``n_samples`` random points each), ``h(delta_star)
    >= mu(1)``, ``delta**0.25 * h(delta) <= 1`` and strict decrease of ``h``
    on a log grid of ``delta`` in ``(0, delta_star]``, and the round trip
    ``mu_inv(mu(w)) = w``.

    Margins are relative: ``(observed - bound) / bound``; positive means a
    violation.
    """
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    rng = as_generator(stream)
    n = model.state_dim
    worst, worst_point = -np.inf, None
    for w in np.logspace(0.0, 3.0, n_radii):
        x = _ball_samples(rng, n_samples, n, w)
        y = _ball_samples(rng, n_samples, n, w)
        i = rng.integers(1, model.n_regimes + 1, size=n_samples)
        fv = np.linalg.norm(model.F(x, y, i), axis=1)
        gv = np.linalg.norm(model.G(x, y, i).reshape(n_samples, -1), axis=1)
        val = np.maximum(fv, gv)
        bound = float(policy.mu(w))
        margins = (val - bound) / bound
        k = int(np.argmax(margins))
        if margins[k] > worst:
            worst = float(margins[k])
            worst_point = {"w": float(w), "x": x[k].tolist(), "y": y[k].tolist(),
                           "regime": int(i[k]), "value": float(val[k]), "mu": bound}
    mu1 = float(policy.mu(1.0))
    h_star = float(policy.h(policy.delta_star))
    h_star_margin = (mu1 - h_star) / mu1 if mu1 > 0 else -np.inf
    deltas = np.logspace(-12.0, np.log10(policy.delta_star), n_deltas)
    hv = np.array([float(policy.h(d)) for d in deltas])
    quarter = deltas ** 0.25 * hv - 1.0
    kq = int(np.argmax(quarter))
    decreasing = bool(np.all(np.diff(hv) < 0))
    ws = np.logspace(0.0, 3.0, 32)
    inv_err = float(np.max(np.abs(np.array([float(policy.mu_inv(policy.mu(w))) for w in ws]) - ws) / ws))

    failures = []
    if worst > TRUNC_REL_TOL:
        failures.append("mu does not dominate |F| v |G|")
    if h_star_margin > 0:
        failures.append("h(delta_star) < mu(1)")
    if quarter[kq] > TRUNC_REL_TOL:
        failures.append("delta**0.25 * h(delta) > 1")
    if not decreasing:
        failures.append("h is not strictly decreasing")
    if inv_err > 1e-9:
        failures.append("mu_inv is not the inverse of mu")
    return PolicyReport(
        passed=not failures, mu_worst_margin=worst, mu_worst_point=worst_point,
        h_star_margin=float(h_star_margin), h_quarter_worst=float(quarter[kq]),
        h_quarter_worst_delta=float(deltas[kq]), h_decreasing=decreasing,
        mu_inverse_error=inv_err, failures=failures)


# --------------------------------------------------------------------------
# builtin example models

EXAMPLE_RATES = ((-2.0, 2.0), (1.0, -1.0))


def example_F1(x, y, i):
    i1 = (i == 1)[:, None]
    return np.where(i1, -6.0 * x + y, -6.0 * x)


def example_G1(x, y, i):
    return np.zeros(x.shape + (1,))


def example_F(x, y, i):
    i1 = (i == 1)[:, None]
    return np.where(i1, -x ** 5, -x ** 5 + y / (1.0 + y ** 2))


def convergence_G(x, y, i):
    i1 = (i == 1)[:, None]
    return np.where(i1, x ** 2, np.sin(x) * np.sin(y))[..., None]


def stability_G(x, y, i):
    i1 = (i == 1)[:, None]
    return np.where(i1, x ** 2, x * np.sin(y) ** 2)[..., None]


def example_policy():
    """``mu(w) = w**5``, ``h(delta) = delta**(-1/10)``, ``delta_star = 1``."""
    mu = PowerLaw(5.0)
    return TruncationPolicy(mu=mu, mu_inv=mu.inverse(), h=PowerLaw(-0.1), delta_star=1.0)


def _example_model(name, G, history=(1.0,), initial_regime=1):
    return HybridSddeModel(
        state_dim=1, noise_dim=1, n_regimes=2,
        F1=example_F1, G1=example_G1, F=example_F, G=G,
        generator=Generator(EXAMPLE_RATES),
        delay=CosineDelay(0.1), tau=0.1, delay_derivative_bound=0.1,
        history=ConstantHistory(tuple(float(v) for v in history)),
        holder_exponent=1.0, initial_regime=initial_regime, name=name)


def example_convergence_model():
    """Scalar two-regime benchmark used for the strong-convergence study.

    Returns
    -------
    model : HybridSddeModel
        ``F1 = -6x + y`` / ``-6x``, ``G1 = 0``, ``F = -x^5`` /
        ``-x^5 + y/(1+y^2)``, ``G = x^2`` / ``sin(x) sin(y)``, delay
        ``0.1 cos t``, constant history 10 (outside the truncation ball for
        every step size the study uses).
    policy : TruncationPolicy
    constants : ModelConstants
    """
    p_bar, q_bar = 4.0, 3.0
    constants = ModelConstants(
        K1=37.0, K2=(p_bar - 1) ** 2 / 2, p_bar=p_bar, q_bar=q_bar,
        K7=(q_bar ** 2 + 3) / 4, rho=8.0, K5=0.1, K6=1.0)
    model = _example_model("example-convergence", convergence_G, history=(10.0,))
    return model, example_policy(), constants


def example_stability_model():
    """Scalar two-regime benchmark used for the stability study.

    Same as :func:`example_convergence_model` except ``G(x, y, 2) = x sin(y)^2``.

    Returns
    -------
    model : HybridSddeModel
    params : hybrid_sdde.analysis.StabilityParams
        ``lambda = (11, 1, 2, 1)``, ``delta_bar = tau = 0.1``, ``o = inf``,
        ``epsilon = 0.1``.
    """
    from .analysis.roots import StabilityParams

    params = StabilityParams(lambda1=11.0, lambda2=1.0, lambda3=2.0, lambda4=1.0,
                             delta_bar=0.1, tau=0.1, weight_o=np.inf, epsilon=0.1)
    return _example_model("example-stability", stability_G), params


def _zero_model():
    rates = np.zeros((1, 1))
    return HybridSddeModel(
        state_dim=1, noise_dim=1, n_regimes=1,
        F1=zero_drift, G1=zero_diffusion, F=zero_drift, G=zero_diffusion,
        generator=Generator(rates), delay=ConstantDelay(0.0), tau=0.0,
        delay_derivative_bound=0.0, history=ConstantHistory((1.0,)), name="zero")


def linear_F1(x, y, i):
    return -x


def unit_G1(x, y, i):
    return np.ones(x.shape + (1,))


def _linear_model():
    return HybridSddeModel(
        state_dim=1, noise_dim=1, n_regimes=1,
        F1=linear_F1, G1=unit_G1, F=zero_drift, G=zero_diffusion,
        generator=Generator(np.zeros((1, 1))), delay=ConstantDelay(0.0), tau=0.0,
        delay_derivative_bound=0.0, history=ConstantHistory((1.0,)), name="linear")


@dataclass(frozen=True)
class BuiltinModel:
    """Everything needed to run experiments on a named model."""

    model: HybridSddeModel
    policy: TruncationPolicy
    constants: Optional[ModelConstants] = None
    stability: Optional[object] = None


def _builtin_convergence():
    model, policy, constants = example_convergence_model()
    return BuiltinModel(model, policy, constants)


def _builtin_stability():
    model, params = example_stability_model()
    return BuiltinModel(model, example_policy(), None, params)


def _builtin_plain(factory):
    def build():
        return BuiltinModel(factory(), TruncationPolicy(
            mu=PowerLaw(1.0), mu_inv=PowerLaw(1.0), h=PowerLaw(-0.25), delta_star=1.0))
    return build


BUILTIN_MODELS = {
    "example-convergence": _builtin_convergence,
    "example-stability": _builtin_stability,
    "zero": _builtin_plain(_zero_model),
    "linear": _builtin_plain(_linear_model),
}


def get_builtin(name, history=None, initial_regime=None):
    """Look up a builtin model by name, optionally overriding its history and start regime.

    ``history`` is a constant value (scalar or length-``n`` sequence).
    """
    try:
        entry = BUILTIN_MODELS[name]()
    except KeyError:
        raise InvalidInputError(
            f"unknown model {name!r}; builtin models are {sorted(BUILTIN_MODELS)}") from None
    changes = {}
    if history is not None:
        value = np.broadcast_to(np.asarray(history, dtype=float), (entry.model.state_dim,))
        changes["history"] = ConstantHistory(tuple(float(v) for v in value))
    if initial_regime is not None:
        changes["initial_regime"] = int(initial_regime)
    if changes:
        from dataclasses import replace
        entry = replace(entry, model=replace(entry.model, **changes))
    return entry
