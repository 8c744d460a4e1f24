"""Partially truncated Euler-Maruyama for hybrid SDDEs.

The recursion is

    X_{k+1} = X_k + [F1 + F_delta](X_k, X_{k-l_k}, r_k) delta
                  + [G1 + G_delta](X_k, X_{k-l_k}, r_k) dB_k,

with lag ``l_k = floor(delay(k delta) / delta)`` and ``X_k = xi(k delta)``
for ``k <= 0``. Paths are integrated in batches (rows = paths) so that a
Monte Carlo study costs one vectorised sweep over the time grid.

Random numbers come from per-path streams (see :mod:`hybrid_sdde.rng`):
Brownian increments are drawn once at the finest resolution and summed for
coarser ones; the regime chain is drawn once at the finest resolution and
read at coarse grid points.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, ModelViolationError, NumericalBlowupError
from .markov import RegimePath, subsample_path, transition_matrix, walk_chain
from .model import TRUNC_REL_TOL, pi_delta, truncation_radius
from .rng import BROWNIAN, CHAIN, make_stream

_SNAP = 1e-9


def _snap_floor(q):
    r = np.rint(q)
    return np.where(np.abs(q - r) <= _SNAP * np.maximum(1.0, np.abs(q)), r, np.floor(q)).astype(np.int64)


def _snap_ceil(q):
    r = round(q)
    if abs(q - r) <= _SNAP * max(1.0, abs(q)):
        return int(r)
    return int(math.ceil(q))


def integer_ratio(a, b):
    """Return ``a / b`` if it is (numerically) a positive integer, else ``None``."""
    q = a / b
    r = round(q)
    if r >= 1 and abs(q - r) <= _SNAP * max(1.0, q):
        return int(r)
    return None


@dataclass(frozen=True)
class SimulationGrid:
    """Uniform grid ``t_k = k delta`` on ``[0, horizon]`` plus the history points.

    ``history_depth = ceil(tau / delta) + 1`` points ``k = -(history_depth-1), ..., 0``
    are kept. When ``horizon`` is not a multiple of ``delta`` the last step is
    shortened to ``last_step``.
    """

    delta: float
    horizon: float
    n_steps: int
    history_depth: int
    last_step: float

    @classmethod
    def build(cls, delta, horizon, tau):
        if not delta > 0:
            raise InvalidInputError(f"delta must be positive, got {delta}")
        if not horizon > 0:
            raise InvalidInputError(f"horizon must be positive, got {horizon}")
        n_steps = _snap_ceil(horizon / delta)
        last = horizon - (n_steps - 1) * delta
        if abs(last - delta) <= _SNAP * delta:
            last = delta
        depth = (_snap_ceil(tau / delta) if tau > 0 else 0) + 1
        return cls(float(delta), float(horizon), n_steps, depth, float(last))

    @property
    def offset(self):
        """Array position of ``k = 0`` in a state array."""
        return self.history_depth - 1

    def times(self):
        """Grid times ``t_k`` for ``k = -(history_depth-1), ..., n_steps``."""
        k = np.arange(-self.offset, self.n_steps + 1)
        t = k * self.delta
        t[-1] = self.horizon if self.last_step != self.delta else t[-1]
        return t

    def step_lengths(self):
        dt = np.full(self.n_steps, self.delta)
        dt[-1] = self.last_step
        return dt


@dataclass(frozen=True, eq=False)
class PathRecord:
    """One realised trajectory.

    ``states[j]`` is ``X_k`` with ``k = j - grid.offset``; rows before the
    offset hold the initial history.
    """

    grid: SimulationGrid
    states: np.ndarray
    regimes: RegimePath
    seed: int
    path_id: int
    lags: np.ndarray = None

    def state(self, k):
        """``X_k`` for ``-(history_depth-1) <= k <= n_steps``."""
        return self.states[k + self.grid.offset]

    @property
    def terminal(self):
        return self.states[-1]

    def times(self):
        return self.grid.times()

    def _index(self, t):
        if t < 0:
            raise InvalidInputError("step processes are defined for t >= 0")
        return min(int(np.floor(t / self.grid.delta)), self.grid.n_steps)

    def z1(self, t):
        """Current-state step process ``X_{floor(t/delta)}``."""
        return self.state(self._index(t))

    def z2(self, t):
        """Delayed-state step process ``X_{k - l_k}`` with ``k = floor(t/delta)``."""
        k = self._index(t)
        lag = self.lags[min(k, len(self.lags) - 1)]
        return self.state(k - lag)

    def rbar(self, t):
        return self.regimes.at(t)


def delay_values(delay, t, tau=None):
    """Evaluate the delay clipped below at zero, checking it never exceeds ``tau``."""
    d = np.asarray(delay(np.asarray(t, dtype=float)), dtype=float)
    if np.any(~np.isfinite(d)):
        raise ModelViolationError("delay function returned a non-finite value")
    if tau is not None and np.any(d > tau * (1 + 1e-12)):
        raise ModelViolationError(f"delay exceeds tau={tau}")
    return np.maximum(d, 0.0)


def delay_index(k, delta, delay, tau=None):
    """Index ``k - floor(max(delay(k delta), 0) / delta)`` of the delayed state.

    ``k`` may be an integer or an integer array. The result is negative when
    the delayed time falls in the history region.
    """
    k_arr = np.asarray(k, dtype=np.int64)
    if np.any(k_arr < 0):
        raise InvalidInputError("k must be non-negative")
    d = delay_values(delay, k_arr * delta, tau)
    out = k_arr - _snap_floor(d / delta)
    return int(out) if out.ndim == 0 else out


def evaluate_history(model, t):
    """Initial segment ``xi(t)`` for ``-tau <= t <= 0``."""
    if not -model.tau * (1 + 1e-12) - 1e-15 <= t <= 0:
        raise InvalidInputError(f"history is defined on [-{model.tau}, 0], got t={t}")
    return np.asarray(model.history(t), dtype=float)


def _apply_diffusion(g, dB):
    # g: (P, n, m), dB: (P, m)
    return np.einsum("pnm,pm->pn", g, dB)


def _ptem_increment(x, y, r, model, radius, dt, dB, h_bound=None):
    px, py = pi_delta(x, radius), pi_delta(y, radius)
    fd = model.F(px, py, r)
    gd = model.G(px, py, r)
    if h_bound is not None:
        limit = h_bound * (1 + TRUNC_REL_TOL)
        fn = np.linalg.norm(fd, axis=1)
        gn = np.linalg.norm(gd.reshape(len(gd), -1), axis=1)
        ok = np.isfinite(fn) & np.isfinite(gn)
        if np.any(ok & ((fn > limit) | (gn > limit))):
            raise AssertionError(f"truncated coefficient exceeds h(delta)={h_bound}")
    drift = model.F1(x, y, r) + fd
    diff = model.G1(x, y, r) + gd
    return drift * dt + _apply_diffusion(diff, dB)


def _em_increment(x, y, r, model, dt, dB):
    drift = model.F1(x, y, r) + model.F(x, y, r)
    diff = model.G1(x, y, r) + model.G(x, y, r)
    return drift * dt + _apply_diffusion(diff, dB)


def _as_batch_step(x_k, y_k, r_k, dB, model):
    x = np.asarray(x_k, dtype=float)
    single = x.ndim <= 1
    n, m = model.state_dim, model.noise_dim
    if single:
        return (x.reshape(1, n), np.asarray(y_k, dtype=float).reshape(1, n),
                np.asarray([int(r_k)]), np.asarray(dB, dtype=float).reshape(1, m), True)
    return (x, np.asarray(y_k, dtype=float),
            np.broadcast_to(np.asarray(r_k, dtype=np.int64), (x.shape[0],)),
            np.asarray(dB, dtype=float).reshape(x.shape[0], m), False)


def step_ptem(x_k, y_k, r_k, model, policy, delta, dB, step_index=0):
    """One partially truncated EM step; raises on a non-finite result."""
    x, y, r, dBb, single = _as_batch_step(x_k, y_k, r_k, dB, model)
    radius = truncation_radius(policy, delta)
    with np.errstate(all="ignore"):
        out = x + _ptem_increment(x, y, r, model, radius, delta, dBb)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowupError(step_index)
    return out[0] if single else out


def step_em(x_k, y_k, r_k, model, delta, dB, step_index=0):
    """One classical (untruncated) EM step; raises on a non-finite result."""
    if not delta > 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    x, y, r, dBb, single = _as_batch_step(x_k, y_k, r_k, dB, model)
    with np.errstate(all="ignore"):
        out = x + _em_increment(x, y, r, model, delta, dBb)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowupError(step_index)
    return out[0] if single else out


# --------------------------------------------------------------------------
# batched integration

@dataclass
class BatchResult:
    """States of ``P`` paths on one grid.

    ``blowup_step[p]`` is the first step producing a non-finite state for
    path ``p`` and ``-1`` if the path stayed finite.
    """

    grid: SimulationGrid
    states: np.ndarray          # (P, history_depth + n_steps, n)
    regimes: np.ndarray         # (P, n_steps + 1)
    lags: np.ndarray            # (n_steps,)
    blowup_step: np.ndarray     # (P,)

    @property
    def finite(self):
        return self.blowup_step < 0


def integrate(model, policy, grid, dB, regimes, scheme="ptem", check_bounds=False):
    """Run the recursion for a batch of paths with given noise and regimes.

    Parameters
    ----------
    model : HybridSddeModel
    policy : TruncationPolicy or None
        Required for ``scheme="ptem"``.
    grid : SimulationGrid
    dB : ndarray, shape (P, n_steps, m)
        Brownian increments (already scaled by the step lengths).
    regimes : ndarray, shape (P, n_steps + 1)
    scheme : {"ptem", "em"}
    check_bounds : bool
        Assert ``|F_delta| v |G_delta| <= h(delta)`` on every step.

    Returns
    -------
    BatchResult
    """
    if scheme not in ("ptem", "em"):
        raise InvalidInputError(f"unknown scheme {scheme!r}")
    n_paths = dB.shape[0]
    n, off = model.state_dim, grid.offset
    if scheme == "ptem":
        if policy is None:
            raise InvalidInputError("the truncated scheme needs a policy")
        if not grid.delta <= policy.delta_star:
            raise InvalidInputError(
                f"delta={grid.delta} exceeds delta_star={policy.delta_star}")
        radius = truncation_radius(policy, grid.delta)
        h_bound = float(policy.h(grid.delta)) if check_bounds else None

    states = np.empty((n_paths, off + grid.n_steps + 1, n))
    for j in range(off + 1):
        t = max((j - off) * grid.delta, -model.tau)
        states[:, j] = evaluate_history(model, t)
    ks = np.arange(grid.n_steps)
    lags = ks - delay_index(ks, grid.delta, model.delay, model.tau)
    if np.any(lags > off):
        raise ModelViolationError("delayed index reaches before the stored history")
    dts = grid.step_lengths()
    blowup = np.full(n_paths, -1, dtype=np.int64)

    with np.errstate(all="ignore"):
        for k in range(grid.n_steps):
            x = states[:, off + k]
            y = states[:, off + k - lags[k]]
            r = regimes[:, k]
            if scheme == "ptem":
                inc = _ptem_increment(x, y, r, model, radius, dts[k], dB[:, k], h_bound)
            else:
                inc = _em_increment(x, y, r, model, dts[k], dB[:, k])
            nxt = x + inc
            bad = ~np.all(np.isfinite(nxt), axis=1)
            if np.any(bad):
                fresh = bad & (blowup < 0)
                blowup[fresh] = k
                # frozen at zero so the rest of the batch is unaffected
                nxt[bad] = 0.0
            states[:, off + k + 1] = nxt
    return BatchResult(grid=grid, states=states, regimes=regimes, lags=lags, blowup_step=blowup)


def _ladder(deltas, horizon, model, policy, scheme):
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise InvalidInputError("at least one step size is required")
    if sorted(deltas) != deltas or len(set(deltas)) != len(deltas):
        raise InvalidInputError("step sizes must be strictly increasing (finest first)")
    fine = deltas[0]
    if scheme == "ptem" and not 0 < fine <= policy.delta_star:
        raise InvalidInputError(f"finest delta={fine} outside (0, delta_star={policy.delta_star}]")
    ratios = []
    for d in deltas:
        q = integer_ratio(d, fine)
        if q is None:
            raise InvalidInputError(f"delta={d} is not an integer multiple of the finest delta={fine}")
        ratios.append(q)
    grids = [SimulationGrid.build(d, horizon, model.tau) for d in deltas]
    if len(deltas) > 1:
        for g, q in zip(grids, ratios):
            if g.last_step != g.delta or g.n_steps * q != grids[0].n_steps:
                raise InvalidInputError(
                    f"horizon={horizon} must be an integer multiple of every delta in a coupled ladder")
    return grids, ratios


def _draw_path_noise(model, grid, seed, path_id):
    """Fine Brownian increments ``(n_steps, m)`` and regime path for one path."""
    z = make_stream(seed, path_id, BROWNIAN).standard_normal((grid.n_steps, model.noise_dim))
    dB = z * np.sqrt(grid.step_lengths())[:, None]
    P = transition_matrix(model.generator, grid.delta)
    u = make_stream(seed, path_id, CHAIN).random(grid.n_steps)
    chain = walk_chain(P, model.initial_regime, u)
    return dB, chain


def aggregate_increments(fine_dB, ratio):
    """Sum consecutive blocks of ``ratio`` fine increments, left to right.

    ``fine_dB`` has shape ``(..., n_fine, m)``; trailing increments that do
    not fill a block are dropped.
    """
    ratio = int(ratio)
    n_coarse = fine_dB.shape[-2] // ratio
    out = fine_dB[..., 0: n_coarse * ratio: ratio, :].copy()
    for j in range(1, ratio):
        out += fine_dB[..., j: n_coarse * ratio: ratio, :]
    return out


def simulate_batch(model, policy, deltas, horizon, seed, path_ids, scheme="ptem", check_bounds=False):
    """Simulate several paths on a ladder of step sizes sharing their noise.

    Returns one :class:`BatchResult` per entry of ``deltas`` (finest first).
    """
    grids, ratios = _ladder(deltas, horizon, model, policy, scheme)
    path_ids = [int(p) for p in path_ids]
    fine = grids[0]
    dB = np.empty((len(path_ids), fine.n_steps, model.noise_dim))
    chains = np.empty((len(path_ids), fine.n_steps + 1), dtype=np.int64)
    for row, pid in enumerate(path_ids):
        dB[row], chains[row] = _draw_path_noise(model, fine, seed, pid)
    results = []
    for grid, q in zip(grids, ratios):
        level_dB = dB if q == 1 else aggregate_increments(dB, q)
        level_r = chains[:, ::q].copy() if q > 1 else chains
        results.append(integrate(model, policy, grid, level_dB, level_r, scheme, check_bounds))
    return results


def _record(result, row, seed, path_id, context):
    if result.blowup_step[row] >= 0:
        raise NumericalBlowupError(
            result.blowup_step[row], path_id,
            f"non-finite state at step {result.blowup_step[row]} of path {path_id} "
            f"({context}, delta={result.grid.delta})")
    return PathRecord(grid=result.grid, states=result.states[row].copy(),
                      regimes=RegimePath(result.grid.delta, result.regimes[row].copy()),
                      seed=int(seed), path_id=int(path_id), lags=result.lags)


def simulate_coupled(model, policy, deltas, horizon, seed, path_id, scheme="ptem"):
    """Simulate one path on every step size in ``deltas`` with a shared Brownian path and chain.

    ``deltas`` is ordered finest first; every entry must be an integer
    multiple of the finest one and divide ``horizon``.

    Returns
    -------
    list of PathRecord
        One record per step size, in the order given.
    """
    results = simulate_batch(model, policy, deltas, horizon, seed, [path_id], scheme)
    return [_record(res, 0, seed, path_id, scheme) for res in results]


def simulate_path(model, policy, delta, horizon, seed, path_id, scheme="ptem"):
    """Simulate a single path; deterministic in ``(seed, path_id)``."""
    return simulate_coupled(model, policy, [delta], horizon, seed, path_id, scheme)[0]


def coupled_noise(model, delta, horizon, seed, path_id, ratios):
    """Expose the fine increments, fine chain and their coarse aggregates for one path.

    Returns ``(fine_dB, fine_regimes, {ratio: (coarse_dB, coarse_regimes)})``.
    """
    grid = SimulationGrid.build(delta, horizon, model.tau)
    dB, chain = _draw_path_noise(model, grid, seed, path_id)
    fine = RegimePath(grid.delta, chain)
    coarse = {int(q): (aggregate_increments(dB, q), subsample_path(fine, q)) for q in ratios}
    return dB, fine, coarse
