"""Strong-error ladders and log-log rate fitting."""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DegenerateStudyError, InvalidInputError, StudyInvalidError
from ..solver import integer_ratio, simulate_batch
from .parallel import map_blocks

MAX_BLOWUP_FRACTION = 0.01


@dataclass
class ConvergenceStudyResult:
    """RMS terminal errors against a fine reference solution.

    ``deltas`` are strictly increasing; ``rms_errors[j]`` is
    ``sqrt(mean |X_delta(T) - X_ref(T)|^2)`` over the ``n_valid[j]`` paths
    that stayed finite at both resolutions.
    """

    deltas: list
    rms_errors: list
    n_paths: int
    blowups: list
    slope: float
    intercept: float
    slope_stderr: float
    ref_delta: float
    horizon: float
    n_valid: list = field(default_factory=list)
    degenerate: bool = False

    def to_dict(self):
        return {
            "deltas": list(self.deltas), "rms_errors": list(self.rms_errors),
            "n_paths": self.n_paths, "blowups": list(self.blowups),
            "n_valid": list(self.n_valid), "slope": self.slope,
            "intercept": self.intercept, "slope_stderr": self.slope_stderr,
            "ref_delta": self.ref_delta, "horizon": self.horizon,
            "degenerate": self.degenerate,
        }


def fit_rate(deltas, rms_errors):
    """Least-squares line through ``(log delta, log rms)``.

    Returns
    -------
    slope, intercept, slope_stderr : float
        ``slope_stderr`` is the usual OLS standard error (zero for two points).
    """
    x = np.log(np.asarray(deltas, dtype=float))
    e = np.asarray(rms_errors, dtype=float)
    if len(x) != len(e) or len(x) < 2:
        raise InvalidInputError("need at least two (delta, error) pairs of equal length")
    if np.any(~(e > 0)):
        raise DegenerateStudyError("log-log fit needs strictly positive errors")
    y = np.log(e)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise InvalidInputError("step sizes must not all be equal")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    if len(x) > 2:
        resid = y - (intercept + slope * x)
        stderr = np.sqrt(np.sum(resid ** 2) / (len(x) - 2) / sxx)
    else:
        stderr = 0.0
    return float(slope), float(intercept), float(stderr)


def _terminal_block(model, policy, ladder, horizon, seed, scheme, path_ids):
    levels = simulate_batch(model, policy, ladder, horizon, seed, path_ids, scheme)
    return (np.stack([lv.states[:, -1] for lv in levels]),
            np.stack([lv.finite for lv in levels]))


def coupled_terminals(model, policy, ladder, horizon, n_paths, seed, scheme="ptem", workers=1):
    """Terminal states ``(levels, n_paths, n)`` and finiteness masks for a coupled ladder."""
    blocks = map_blocks(_terminal_block, (model, policy, ladder, horizon, seed, scheme),
                        n_paths, workers)
    return (np.concatenate([b[0] for b in blocks], axis=1),
            np.concatenate([b[1] for b in blocks], axis=1))


def strong_error_study(model, policy, deltas, ref_delta, horizon, n_paths, seed,
                       workers=1, scheme="ptem"):
    """Estimate RMS strong errors at ``deltas`` against the ``ref_delta`` solution.

    Every path is simulated on ``[ref_delta] + sorted(deltas)`` with one
    shared Brownian path and regime chain. Paths that blow up at a level
    (or at the reference) are excluded from that level and counted.

    Raises
    ------
    StudyInvalidError
        If more than 1% of paths blow up at any level.
    """
    deltas = sorted(float(d) for d in deltas)
    if n_paths < 2:
        raise InvalidInputError("n_paths must be >= 2")
    if not deltas or deltas[0] <= ref_delta:
        raise InvalidInputError("every delta must exceed ref_delta")
    for d in deltas:
        if integer_ratio(d, ref_delta) is None:
            raise InvalidInputError(f"ref_delta={ref_delta} does not divide delta={d}")
    ladder = [float(ref_delta)] + deltas
    terminals, finite = coupled_terminals(model, policy, ladder, horizon, n_paths, seed,
                                          scheme, workers)
    ref, ref_ok = terminals[0], finite[0]
    rms, blowups, n_valid = [], [], []
    for j in range(1, len(ladder)):
        ok = ref_ok & finite[j]
        bad = int(n_paths - ok.sum())
        if bad > MAX_BLOWUP_FRACTION * n_paths:
            raise StudyInvalidError(
                f"{bad} of {n_paths} paths blew up at delta={ladder[j]}")
        sq = np.sum((terminals[j][ok] - ref[ok]) ** 2, axis=1)
        rms.append(float(np.sqrt(np.mean(sq))))
        blowups.append(bad)
        n_valid.append(int(ok.sum()))
    try:
        slope, intercept, stderr = fit_rate(deltas, rms)
        degenerate = False
    except DegenerateStudyError:
        slope = intercept = stderr = float("nan")
        degenerate = True
    return ConvergenceStudyResult(
        deltas=deltas, rms_errors=rms, n_paths=int(n_paths), blowups=blowups,
        slope=slope, intercept=intercept, slope_stderr=stderr,
        ref_delta=float(ref_delta), horizon=float(horizon), n_valid=n_valid,
        degenerate=degenerate)


def rate_condition(policy, delta, p, holder_exponent=1.0):
    """Check the step-size coupling ``h(delta) >= mu((delta^(2v) v delta h(delta)^2)^(-1/(p-2)))``.

    Returns ``(holds, lhs, rhs)``; the error bound it guards is
    ``O(delta^(2v) v delta h(delta)^2)`` in mean square.
    """
    if not p > 2:
        raise InvalidInputError("p must exceed 2")
    h = float(policy.h(delta))
    base = max(delta ** (2 * holder_exponent), delta * h * h)
    rhs = float(policy.mu(base ** (-1.0 / (p - 2))))
    return h >= rhs, h, rhs
