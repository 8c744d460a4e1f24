"""Finite-state continuous-time Markov chains sampled on a uniform grid.

The regime process ``r(t)`` is only ever needed at grid times ``k * delta``.
Read there it is a discrete-time chain with one-step matrix
``P(delta) = expm(delta * Gamma)``, so a path is drawn by inverting the
cumulative row sums of ``P`` with one uniform per step.

States are labelled ``1..N`` in every public interface.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import InvalidInputError, NoStationaryDistributionError
from .rng import as_generator

ROW_SUM_TOL = 1e-12
ROUNDOFF_CLAMP = 1e-12


@dataclass(frozen=True, eq=False)
class Generator:
    """Rate matrix ``Gamma`` of a continuous-time chain on ``{1, ..., N}``.

    Parameters
    ----------
    rates : array_like, shape (N, N)
        Off-diagonal entries are jump rates (1/time) and must be
        non-negative; each row must sum to zero.
    """

    rates: np.ndarray

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1] or rates.shape[0] == 0:
            raise InvalidInputError(f"generator must be a non-empty square matrix, got shape {rates.shape}")
        if not np.all(np.isfinite(rates)):
            raise InvalidInputError("generator has non-finite entries")
        off = rates[~np.eye(rates.shape[0], dtype=bool)]
        if np.any(off < 0):
            raise InvalidInputError("generator has negative off-diagonal rates")
        scale = max(1.0, float(np.abs(rates).max()))
        row_sums = rates.sum(axis=1)
        if np.any(np.abs(row_sums) > ROW_SUM_TOL * scale):
            raise InvalidInputError(f"generator rows must sum to zero, got {row_sums.tolist()}")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    @property
    def n_states(self):
        return self.rates.shape[0]

    def __eq__(self, other):
        return isinstance(other, Generator) and np.array_equal(self.rates, other.rates)

    def __hash__(self):
        return hash(self.rates.tobytes())


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic one-step matrix ``P(delta)``; row ``i-1`` is state ``i``."""

    probs: np.ndarray
    delta: float

    @property
    def n_states(self):
        return self.probs.shape[0]

    def cumulative(self):
        """Cumulative row sums through states ``1..N-1`` (the sampler's cut points)."""
        return np.cumsum(self.probs, axis=1)[:, :-1]


@dataclass(frozen=True, eq=False)
class RegimePath:
    """Regimes ``r_k`` at times ``k * delta`` for ``k = 0, 1, ...``."""

    delta: float
    states: np.ndarray

    def __len__(self):
        return len(self.states)

    def at(self, t):
        """Step-process value ``states[floor(t / delta)]``."""
        k = int(np.floor(t / self.delta))
        if k < 0:
            raise InvalidInputError(f"regime path is only defined for t >= 0, got {t}")
        return int(self.states[min(k, len(self.states) - 1)])


def _as_generator_matrix(gen):
    return gen if isinstance(gen, Generator) else Generator(gen)


def transition_matrix(gen, delta):
    """One-step transition matrix ``expm(delta * Gamma)``.

    Entries rounded below zero by at most ``1e-12`` are clamped to zero and the
    rows renormalised, so that cumulative sums stay monotone.

    Parameters
    ----------
    gen : Generator or array_like
        Rate matrix; plain arrays are validated.
    delta : float
        Step size, strictly positive.

    Returns
    -------
    TransitionMatrix
    """
    gen = _as_generator_matrix(gen)
    if not delta > 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    probs = scipy.linalg.expm(delta * gen.rates)
    if np.any(probs < -ROUNDOFF_CLAMP):
        raise InvalidInputError("matrix exponential produced negative probabilities")
    probs = np.where(probs < 0, 0.0, probs)
    probs /= probs.sum(axis=1, keepdims=True)
    probs.setflags(write=False)
    return TransitionMatrix(probs=probs, delta=float(delta))


def _next_state_index(cum_row, u):
    # number of cut points <= u: half-open rule with state N catching overflow
    return np.searchsorted(cum_row, u, side="right")


def sample_next_state(P, current, u):
    """Invert the cumulative row of ``current`` at the uniform ``u``.

    Returns ``j`` with ``sum_{l<j} P[current, l] <= u < sum_{l<=j} P[current, l]``;
    any ``u`` beyond the partial sum through state ``N-1`` yields ``N``.
    """
    if not 1 <= current <= P.n_states:
        raise InvalidInputError(f"state {current} outside 1..{P.n_states}")
    if not 0.0 <= u < 1.0:
        raise InvalidInputError(f"uniform must lie in [0, 1), got {u}")
    cum = np.cumsum(P.probs[current - 1])[:-1]
    return int(_next_state_index(cum, u)) + 1


def walk_chain(P, r0, uniforms):
    """Advance a chain from ``r0`` consuming one uniform per step.

    Returns an integer array of length ``len(uniforms) + 1`` starting at ``r0``.
    """
    if not 1 <= r0 <= P.n_states:
        raise InvalidInputError(f"state {r0} outside 1..{P.n_states}")
    uniforms = np.asarray(uniforms, dtype=float)
    cum = P.cumulative()
    # next-state table for every (current state, step); the walk itself is
    # then pure indexing
    table = [(_next_state_index(cum[s], uniforms) + 1).tolist() for s in range(P.n_states)]
    out = [r0]
    s = r0
    for k in range(len(uniforms)):
        s = table[s - 1][k]
        out.append(s)
    return np.asarray(out, dtype=np.int64)


def sample_regime_path(gen, delta, r0, n_steps, stream):
    """Sample ``r_0 = r0, r_1, ..., r_{n_steps}`` on the grid of spacing ``delta``.

    Parameters
    ----------
    gen : Generator or array_like
    delta : float
    r0 : int
        Initial state in ``1..N``.
    n_steps : int
        Number of transitions; the path has ``n_steps + 1`` entries.
    stream : numpy.random.Generator or int
        Source of the uniforms. The result is a deterministic function of the
        stream state.
    """
    if n_steps < 0:
        raise InvalidInputError(f"n_steps must be >= 0, got {n_steps}")
    P = transition_matrix(gen, delta)
    rng = as_generator(stream)
    uniforms = rng.random(int(n_steps))
    return RegimePath(delta=float(delta), states=walk_chain(P, int(r0), uniforms))


def subsample_path(fine, ratio):
    """Read a fine chain at every ``ratio``-th grid point.

    Trailing fine entries that do not complete a coarse step are dropped.
    """
    ratio = int(ratio)
    if ratio < 1:
        raise InvalidInputError(f"ratio must be a positive integer, got {ratio}")
    if len(fine.states) < 1:
        raise InvalidInputError("cannot subsample an empty path")
    n_coarse = (len(fine.states) - 1) // ratio
    states = np.asarray(fine.states)[: n_coarse * ratio + 1 : ratio].copy()
    return RegimePath(delta=fine.delta * ratio, states=states)


def stationary_distribution(gen):
    """Solve ``pi Gamma = 0``, ``sum(pi) = 1``.

    Raises
    ------
    NoStationaryDistributionError
        If the augmented linear system is rank deficient.
    """
    gen = _as_generator_matrix(gen)
    n = gen.n_states
    A = np.vstack([gen.rates.T, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    if np.linalg.matrix_rank(A) < n:
        raise NoStationaryDistributionError("generator has no unique stationary distribution")
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    if np.any(pi < 0):
        raise NoStationaryDistributionError("stationary solve returned negative mass")
    return pi / pi.sum()
