"""Command-line front end.

Usage::

    hybrid-sdde {simulate,converge,stability,roots,check} --config CONFIG
                [--output DIR] [--seed SEED] [--workers N]

Exit status is 0 on success, 1 when a study is invalid or the model is
violated at run time, and 2 for configuration errors.
"""

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .analysis import (StabilityParams, check_khasminskii, check_monotonicity,
                       check_stability_split, check_truncated_khasminskii, rate_condition,
                       solve_c_star, solve_eta, solve_gamma_star, stability_study,
                       strong_error_study)
from .analysis.parallel import WORKERS_ENV, map_blocks, resolve_workers
from .analysis.roots import _default_m, eta_residual, gamma_residual, j_function
from .exceptions import (HybridSddeError, InvalidInputError, ModelViolationError,
                         NoPositiveRootError, NumericalBlowupError, StudyInvalidError)
from .model import BUILTIN_MODELS, get_builtin, validate_policy
from .rng import CHECKER, make_stream
from .solver import simulate_batch

COMMANDS = ("simulate", "converge", "stability", "roots", "check")
CHECKERS = ("khasminskii", "truncated_khasminskii", "monotonicity", "stability_split", "policy")

_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}
_stability_params = {
    "type": "object",
    "properties": {
        "lambda1": {"type": "number"}, "lambda2": {"type": "number", "minimum": 0},
        "lambda3": {"type": "number", "minimum": 0}, "lambda4": {"type": "number", "minimum": 0},
        "delta_bar": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "tau": {"type": "number", "minimum": 0},
        "epsilon": {"type": "number", "minimum": 0},
        "weight_o": {"oneOf": [{"type": "number", "minimum": 0}, {"const": "inf"}]},
    },
    "required": ["lambda1", "lambda2", "lambda3", "lambda4", "delta_bar", "tau", "epsilon"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {"oneOf": [
            {"type": "string"},
            {"type": "object",
             "properties": {
                 "name": {"type": "string"},
                 "history": {"oneOf": [{"type": "number"},
                                       {"type": "array", "items": {"type": "number"}}]},
                 "initial_regime": {"type": "integer", "minimum": 1},
             },
             "required": ["name"], "additionalProperties": False},
        ]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "output_dir": {"type": "string"},
        "workers": {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "auto"}]},
        "simulate": {
            "type": "object",
            "properties": {"delta": _pos, "horizon": _pos, "n_paths": _count,
                           "scheme": {"enum": ["ptem", "em"]}},
            "required": ["delta", "horizon"], "additionalProperties": False},
        "converge": {
            "type": "object",
            "properties": {"deltas": {"type": "array", "items": _pos, "minItems": 2},
                           "ref_delta": _pos, "horizon": _pos,
                           "n_paths": {"type": "integer", "minimum": 2},
                           "p": {"type": "number", "exclusiveMinimum": 2}},
            "required": ["deltas", "ref_delta", "horizon", "n_paths"],
            "additionalProperties": False},
        "stability": {
            "type": "object",
            "properties": {"delta": _pos, "horizon": _pos, "n_paths": _count,
                           "burn_in_fraction": {"type": "number", "minimum": 0,
                                                "exclusiveMaximum": 1},
                           "stability_params": _stability_params},
            "required": ["delta", "horizon", "n_paths"], "additionalProperties": False},
        "roots": {
            "type": "object",
            "properties": {"stability_params": _stability_params,
                           "deltas": {"type": "array", "items": _pos}},
            "additionalProperties": False},
        "check": {
            "type": "object",
            "properties": {
                "checkers": {"type": "array", "items": {"enum": list(CHECKERS)}, "minItems": 1},
                "n_samples": _count, "box_radius": _pos,
                "constants": {"type": "object",
                              "properties": {"p_bar": {"type": "number", "minimum": 2},
                                             "K2": {"type": "number", "minimum": 0},
                                             "q_bar": {"type": "number", "exclusiveMinimum": 2},
                                             "K7": {"type": "number", "minimum": 0}},
                              "additionalProperties": False},
                "stability_params": _stability_params,
                "delay_discount": {"type": "boolean"},
            },
            "required": ["checkers"], "additionalProperties": False},
    },
    "required": ["model", "seed"],
    "additionalProperties": False,
}


class ConfigError(InvalidInputError):
    """Invalid experiment configuration; ``pointer`` names the offending field."""

    def __init__(self, pointer, message):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


@dataclass
class ExperimentConfig:
    """A validated configuration with defaults applied."""

    raw: dict
    model_name: str
    model_overrides: dict
    seed: int
    output_dir: str
    workers: int
    blocks: dict = field(default_factory=dict)

    def builtin(self):
        return get_builtin(self.model_name, **self.model_overrides)

    def resolved(self):
        out = dict(self.raw)
        out["seed"] = self.seed
        out["output_dir"] = self.output_dir
        out["workers"] = self.workers
        out.update(self.blocks)
        return out


def _pointer(path):
    return "/" + "/".join(str(p) for p in path) if path else ""


def _schema_error(err):
    if err.validator == "required":
        present = err.instance if isinstance(err.instance, dict) else {}
        missing = [k for k in err.validator_value if k not in present]
        return ConfigError(_pointer(list(err.absolute_path) + missing[:1]), "required field is missing")
    if err.validator == "additionalProperties":
        return ConfigError(_pointer(err.absolute_path), err.message)
    return ConfigError(_pointer(err.absolute_path), err.message)


def _params_from(block):
    kwargs = dict(block)
    if kwargs.get("weight_o") == "inf" or "weight_o" not in kwargs:
        kwargs["weight_o"] = math.inf
    return StabilityParams(**kwargs)


def load_config(path, overrides=None):
    """Read and validate a JSON experiment configuration.

    Parameters
    ----------
    path : str or Path
    overrides : dict, optional
        Top-level values (``seed``, ``output_dir``, ``workers``) that
        replace those in the file before validation.

    Raises
    ------
    ConfigError
        With a JSON-pointer path to the offending field.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("", f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"malformed JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    errors = sorted(jsonschema.Draft7Validator(CONFIG_SCHEMA).iter_errors(raw),
                    key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        raise _schema_error(errors[0])

    model = raw["model"]
    if isinstance(model, str):
        name, model_overrides = model, {}
    else:
        name = model["name"]
        model_overrides = {k: v for k, v in model.items() if k != "name"}
    if name not in BUILTIN_MODELS:
        raise ConfigError("/model", f"unknown model {name!r}; known: {sorted(BUILTIN_MODELS)}")
    try:
        entry = get_builtin(name, **model_overrides)
    except HybridSddeError as exc:
        raise ConfigError("/model", str(exc)) from None

    workers = raw.get("workers", os.environ.get(WORKERS_ENV, "auto"))
    try:
        workers = resolve_workers(workers)
    except ValueError:
        raise ConfigError("/workers", f"invalid worker count {workers!r}") from None

    blocks = {}
    dstar = entry.policy.delta_star
    if "simulate" in raw:
        b = {"n_paths": 1, "scheme": "ptem", **raw["simulate"]}
        if b["scheme"] == "ptem":
            _check_step("/simulate/delta", b["delta"], dstar, name)
        blocks["simulate"] = b
    if "converge" in raw:
        b = dict(raw["converge"])
        _check_step("/converge/ref_delta", b["ref_delta"], dstar, name)
        for j, d in enumerate(b["deltas"]):
            _check_step(f"/converge/deltas/{j}", d, dstar, name)
        blocks["converge"] = b
    if "stability" in raw:
        b = {"burn_in_fraction": 0.0, **raw["stability"]}
        _check_step("/stability/delta", b["delta"], dstar, name)
        b["stability_params"] = _resolve_params(b.get("stability_params"), entry,
                                                "/stability/stability_params")
        blocks["stability"] = b
    if "roots" in raw:
        b = {"deltas": [], **raw["roots"]}
        b["stability_params"] = _resolve_params(b.get("stability_params"), entry,
                                                "/roots/stability_params")
        blocks["roots"] = b
    if "check" in raw:
        b = {"n_samples": 10000, "box_radius": 1000.0, "delay_discount": True, **raw["check"]}
        consts = {}
        if entry.constants is not None:
            consts = {"p_bar": entry.constants.p_bar, "K2": entry.constants.K2,
                      "q_bar": entry.constants.q_bar, "K7": entry.constants.K7}
        consts.update(b.get("constants", {}))
        b["constants"] = consts
        needs = {"khasminskii": ("p_bar", "K2"), "truncated_khasminskii": ("p_bar", "K2"),
                 "monotonicity": ("q_bar", "K7")}
        for checker in b["checkers"]:
            for key in needs.get(checker, ()):
                if key not in consts:
                    raise ConfigError(f"/check/constants/{key}", f"required by checker {checker!r}")
        if "stability_split" in b["checkers"]:
            b["stability_params"] = _resolve_params(b.get("stability_params"), entry,
                                                    "/check/stability_params")
        blocks["check"] = b
    return ExperimentConfig(raw=raw, model_name=name, model_overrides=model_overrides,
                            seed=int(raw["seed"]), output_dir=raw.get("output_dir", "output"),
                            workers=workers, blocks=blocks)


def _check_step(pointer, delta, dstar, name):
    if not 0 < delta <= dstar:
        raise ConfigError(pointer, f"step size {delta} exceeds delta_star={dstar} of model {name!r}")


def _resolve_params(block, entry, pointer):
    if block is None:
        if entry.stability is None:
            raise ConfigError(pointer, "model has no builtin stability parameters; give them here")
        return entry.stability.to_dict()
    try:
        params = _params_from(block)
    except InvalidInputError as exc:
        raise ConfigError(pointer, str(exc)) from None
    return params.to_dict()


# --------------------------------------------------------------------------
# output helpers

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _clean(o):
    # JSON has no inf/nan; encode them as strings
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def write_manifest(out, cfg, command):
    write_json(out / "manifest.json", {
        "artifact": "hybrid_sdde", "version": __version__, "command": command,
        "seed": cfg.seed, "config": cfg.resolved()})


# --------------------------------------------------------------------------
# commands

def _simulate_block(model, policy, delta, horizon, seed, scheme, path_ids):
    return simulate_batch(model, policy, [delta], horizon,
                          seed, path_ids, scheme)[0], list(path_ids)


def cmd_simulate(cfg, out):
    b = cfg.blocks["simulate"]
    entry = cfg.builtin()
    model = entry.model
    blocks = map_blocks(_simulate_block, (model, entry.policy, b["delta"], b["horizon"],
                                          cfg.seed, b["scheme"]), b["n_paths"], cfg.workers)
    multi = b["n_paths"] > 1
    header = (["path_id"] if multi else []) + ["t"] + [f"x_{j + 1}" for j in range(model.state_dim)] + ["regime"]
    rows, blowups = [], {}
    for res, ids in blocks:
        t = res.grid.times()
        off = res.grid.offset
        for row, pid in enumerate(ids):
            states = res.states[row].copy()
            if res.blowup_step[row] >= 0:
                blowups[str(pid)] = int(res.blowup_step[row])
                states[off + res.blowup_step[row] + 1:] = np.nan
            reg = np.concatenate([np.full(off, model.initial_regime), res.regimes[row]])
            for j in range(len(t)):
                rows.append(([pid] if multi else []) + [t[j]] + states[j].tolist() + [reg[j]])
    write_csv(out / "paths.csv", header, rows)
    write_json(out / "summary.json", {"command": "simulate", "n_paths": b["n_paths"],
                                      "delta": b["delta"], "horizon": b["horizon"],
                                      "scheme": b["scheme"], "blowups": blowups})
    print(f"simulate: {b['n_paths']} path(s), {len(blowups)} blow-up(s) -> {out / 'paths.csv'}")
    return 1 if blowups else 0


def cmd_converge(cfg, out):
    b = cfg.blocks["converge"]
    entry = cfg.builtin()
    res = strong_error_study(entry.model, entry.policy, b["deltas"], b["ref_delta"],
                             b["horizon"], b["n_paths"], cfg.seed, workers=cfg.workers)
    write_csv(out / "errors.csv", ["delta", "rms_error", "n_paths", "blowups"],
              [[d, e, res.n_paths, k] for d, e, k in zip(res.deltas, res.rms_errors, res.blowups)])
    e = res.rms_errors
    summary = {"command": "converge", **res.to_dict(),
               "errors_increasing_in_delta": all(a < c for a, c in zip(e, e[1:]))}
    if "p" in b:
        conds = [rate_condition(entry.policy, d, b["p"], entry.model.holder_exponent)
                 for d in res.deltas]
        summary["rate_condition"] = {"p": b["p"], "holds": [c[0] for c in conds],
                                     "h": [c[1] for c in conds], "required": [c[2] for c in conds]}
    write_json(out / "summary.json", summary)
    print(f"converge: slope={res.slope:.4f} +/- {res.slope_stderr:.4f} over {res.n_paths} paths")
    return 0


def cmd_stability(cfg, out):
    b = cfg.blocks["stability"]
    entry = cfg.builtin()
    params = _params_from(b["stability_params"])
    res = stability_study(entry.model, entry.policy, params, b["delta"], b["horizon"],
                          b["n_paths"], cfg.seed, b["burn_in_fraction"], cfg.workers)
    write_csv(out / "stability.csv", ["path_id", "exponent"],
              list(enumerate(res.per_path_exponents)))
    write_json(out / "summary.json", {
        "command": "stability", **res.to_dict(),
        "all_negative": bool(all(x < 0 for x in res.per_path_exponents)),
        "minus_half_gamma_star": -0.5 * res.gamma_star,
        "regression_median": float(np.nanmedian(res.regression_exponents)),
        "stability_params": params.to_dict()})
    print(f"stability: {100 * res.fraction_negative:.1f}% negative, median {res.median_exponent:.4f}")
    return 0


def cmd_roots(cfg, out):
    b = cfg.blocks["roots"]
    params = _params_from(b["stability_params"])
    eta = solve_eta(params)
    gamma = solve_gamma_star(params)
    try:
        gamma_lit = solve_gamma_star(params, literal=True)
    except NoPositiveRootError:
        gamma_lit = float("nan")
    cstars = []
    for d in b["deltas"]:
        c = solve_c_star(params, d)
        cstars.append({"delta": d, "m": _default_m(params, d), "c_star": c,
                       "log_c_star": math.log(c), "residual": j_function(params, d, c),
                       "gap_to_gamma_star": abs(math.log(c) - gamma)})
    write_json(out / "summary.json", {
        "command": "roots", "eta": eta, "eta_residual": eta_residual(params, eta),
        "gamma_star": gamma, "gamma_star_residual": gamma_residual(params, gamma),
        "gamma_star_literal": gamma_lit, "epsilon_bound": params.epsilon_bound,
        "c_star": cstars, "stability_params": params.to_dict()})
    print(f"roots: eta={eta:.6f} gamma_star={gamma:.6f}")
    return 0


def cmd_check(cfg, out):
    b = cfg.blocks["check"]
    entry = cfg.builtin()
    model, consts = entry.model, b["constants"]
    reports = {}
    for k, name in enumerate(b["checkers"]):
        stream = make_stream(cfg.seed, k, CHECKER)
        if name == "khasminskii":
            rep = check_khasminskii(model, consts["p_bar"], consts["K2"], b["n_samples"],
                                    b["box_radius"], stream).to_dict()
        elif name == "truncated_khasminskii":
            rep = check_truncated_khasminskii(model, entry.policy, consts["p_bar"], consts["K2"],
                                              b["n_samples"], b["box_radius"], stream).to_dict()
        elif name == "monotonicity":
            rep = check_monotonicity(model, consts["q_bar"], consts["K7"], b["n_samples"],
                                     b["box_radius"], stream).to_dict()
        elif name == "stability_split":
            rep = check_stability_split(model, _params_from(b["stability_params"]),
                                        b["n_samples"], b["box_radius"], stream,
                                        b["delay_discount"]).to_dict()
        else:
            r = validate_policy(model, entry.policy, max(1, b["n_samples"] // 64), stream)
            rep = {"name": "policy", "passed": r.passed, "failures": r.failures,
                   "mu_worst_margin": r.mu_worst_margin, "mu_worst_point": r.mu_worst_point,
                   "h_star_margin": r.h_star_margin, "h_quarter_worst": r.h_quarter_worst,
                   "h_decreasing": r.h_decreasing, "mu_inverse_error": r.mu_inverse_error}
        reports[name] = rep
    write_json(out / "summary.json", {"command": "check", "reports": reports,
                                      "all_passed": all(r["passed"] for r in reports.values())})
    verdicts = ", ".join(f"{n}={'ok' if r['passed'] else 'VIOLATED'}" for n, r in reports.items())
    print(f"check: {verdicts}")
    return 0


HANDLERS = {"simulate": cmd_simulate, "converge": cmd_converge, "stability": cmd_stability,
            "roots": cmd_roots, "check": cmd_check}


def build_parser():
    parser = argparse.ArgumentParser(prog="hybrid-sdde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--output", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--workers", help="worker processes: integer or 'auto'")
    return parser


def run(argv=None):
    """Entry point; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    workers = args.workers
    if workers is not None and workers != "auto":
        try:
            workers = int(workers)
        except ValueError:
            print(f"error: /workers: invalid worker count {workers!r}", file=sys.stderr)
            return 2
    try:
        cfg = load_config(args.config, {"seed": args.seed, "output_dir": args.output,
                                        "workers": workers})
        if args.command not in cfg.blocks:
            raise ConfigError(f"/{args.command}", f"block required by the {args.command!r} command")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, args.command)
    try:
        return HANDLERS[args.command](cfg, out)
    except (StudyInvalidError, ModelViolationError, NumericalBlowupError, NoPositiveRootError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())
